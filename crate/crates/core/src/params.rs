//! Flat views over parameter containers, used by the optimizers and by
//! gradient accumulation.

use ndarray::{ArrayBase, DataMut, Dimension};

/// A container of `f64` tensors visited in a fixed order. A gradient buffer
/// and the parameters it belongs to must visit tensors of equal length in the
/// same order.
pub trait Parameters {
    fn tensors(&self) -> Vec<&[f64]>;
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;

    fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn fill_zero(&mut self) {
        for t in self.tensors_mut() {
            t.fill(0.0);
        }
    }

    fn add_assign<P: Parameters + ?Sized>(&mut self, other: &P) {
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            assert_eq!(dst.len(), src.len());
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
    }

    fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= factor);
        }
    }

    fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }

    fn l2_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    /// Copies every value out, in visit order.
    fn to_flat(&self) -> Vec<f64> {
        self.tensors().concat()
    }

    fn set_flat(&mut self, values: &[f64]) {
        let mut offset = 0;
        for t in self.tensors_mut() {
            t.copy_from_slice(&values[offset..offset + t.len()]);
            offset += t.len();
        }
        assert_eq!(offset, values.len());
    }
}

pub(crate) fn slice<S: ndarray::Data<Elem = f64>, D: Dimension>(a: &ArrayBase<S, D>) -> &[f64] {
    a.as_slice_memory_order().expect("parameter tensors are contiguous")
}

pub(crate) fn slice_mut<S: DataMut<Elem = f64>, D: Dimension>(a: &mut ArrayBase<S, D>) -> &mut [f64] {
    a.as_slice_memory_order_mut().expect("parameter tensors are contiguous")
}
