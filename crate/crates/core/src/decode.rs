//! Minimum Bayes risk decoding under Hamming loss: each variable takes the
//! label with the highest belief.

use crate::bp::BeliefState;
use crate::logspace::argmax;
use crate::schema::TagAssignment;

/// Per-token assignments from variable beliefs. Ties go to the lowest label
/// index, so NULL wins a flat belief.
pub fn mbr_decode(beliefs: &BeliefState) -> Vec<TagAssignment> {
    let m = beliefs.num_tags();
    beliefs
        .variables
        .chunks(m)
        .map(|token| TagAssignment {
            labels: token.iter().map(|b| argmax(b)).collect(),
        })
        .collect()
}
