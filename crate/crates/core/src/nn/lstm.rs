use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::params::{slice, slice_mut};

pub(crate) const INIT_RANGE: f64 = 0.1;

pub(crate) fn uniform_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.gen_range(-INIT_RANGE..INIT_RANGE))
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Single-layer LSTM with zero initial state. Gate blocks are stacked in the
/// order input, forget, cell, output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lstm {
    /// `4H × I`
    pub w_ih: Array2<f64>,
    /// `4H × H`
    pub w_hh: Array2<f64>,
    /// `4H`
    pub bias: Array1<f64>,
}

/// Activations kept from the forward pass.
#[derive(Debug, Clone)]
pub struct LstmTrace {
    input: Array2<f64>,
    /// Activated gates, `T × 4H`.
    gates: Array2<f64>,
    cell: Array2<f64>,
    tanh_cell: Array2<f64>,
    pub hidden: Array2<f64>,
}

impl LstmTrace {
    pub fn last_hidden(&self) -> ArrayView1<'_, f64> {
        self.hidden.row(self.hidden.nrows() - 1)
    }
}

impl Lstm {
    pub fn new(input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        Lstm {
            w_ih: uniform_matrix(4 * hidden, input, rng),
            w_hh: uniform_matrix(4 * hidden, hidden, rng),
            bias: Array1::from_shape_simple_fn(4 * hidden, || rng.gen_range(-INIT_RANGE..INIT_RANGE)),
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.w_hh.ncols()
    }

    pub fn input_size(&self) -> usize {
        self.w_ih.ncols()
    }

    pub fn forward(&self, input: ArrayView2<'_, f64>) -> LstmTrace {
        let len = input.nrows();
        let h = self.hidden_size();
        let pre = input.dot(&self.w_ih.t()) + &self.bias;
        let mut gates = Array2::zeros((len, 4 * h));
        let mut cell = Array2::zeros((len, h));
        let mut tanh_cell = Array2::zeros((len, h));
        let mut hidden = Array2::zeros((len, h));
        let mut h_prev = Array1::<f64>::zeros(h);
        let mut c_prev = Array1::<f64>::zeros(h);
        for t in 0..len {
            let z = &pre.row(t) + &self.w_hh.dot(&h_prev);
            let mut g = gates.row_mut(t);
            for k in 0..h {
                let i = sigmoid(z[k]);
                let f = sigmoid(z[h + k]);
                let c_in = z[2 * h + k].tanh();
                let o = sigmoid(z[3 * h + k]);
                let c: f64 = f * c_prev[k] + i * c_in;
                let tc = c.tanh();
                g[k] = i;
                g[h + k] = f;
                g[2 * h + k] = c_in;
                g[3 * h + k] = o;
                cell[[t, k]] = c;
                tanh_cell[[t, k]] = tc;
                hidden[[t, k]] = o * tc;
            }
            h_prev.assign(&hidden.row(t));
            c_prev.assign(&cell.row(t));
        }
        LstmTrace {
            input: input.to_owned(),
            gates,
            cell,
            tanh_cell,
            hidden,
        }
    }

    /// Back-propagates `d_hidden` (`T × H`, gradient w.r.t. every hidden
    /// state), accumulating into `grad` and returning the input gradient.
    pub fn backward(&self, trace: &LstmTrace, d_hidden: ArrayView2<'_, f64>, grad: &mut Lstm) -> Array2<f64> {
        let len = trace.hidden.nrows();
        let h = self.hidden_size();
        let mut dz = Array2::zeros((len, 4 * h));
        let mut dh_next = Array1::<f64>::zeros(h);
        let mut dc_next = Array1::<f64>::zeros(h);
        for t in (0..len).rev() {
            let g = trace.gates.row(t);
            let mut row = dz.row_mut(t);
            for k in 0..h {
                let (i, f, c_in, o) = (g[k], g[h + k], g[2 * h + k], g[3 * h + k]);
                let tc = trace.tanh_cell[[t, k]];
                let c_prev = if t > 0 { trace.cell[[t - 1, k]] } else { 0.0 };
                let dh = d_hidden[[t, k]] + dh_next[k];
                let d_o = dh * tc;
                let dc = dc_next[k] + dh * o * (1.0 - tc * tc);
                row[k] = dc * c_in * i * (1.0 - i);
                row[h + k] = dc * c_prev * f * (1.0 - f);
                row[2 * h + k] = dc * i * (1.0 - c_in * c_in);
                row[3 * h + k] = d_o * o * (1.0 - o);
                dc_next[k] = dc * f;
            }
            dh_next = self.w_hh.t().dot(&dz.row(t));
        }
        grad.w_ih += &dz.t().dot(&trace.input);
        if len > 1 {
            grad.w_hh += &dz.slice(s![1.., ..]).t().dot(&trace.hidden.slice(s![..len - 1, ..]));
        }
        grad.bias += &dz.sum_axis(Axis(0));
        dz.dot(&self.w_ih)
    }

    pub(crate) fn tensors(&self) -> [&[f64]; 3] {
        [slice(&self.w_ih), slice(&self.w_hh), slice(&self.bias)]
    }

    pub(crate) fn tensors_mut(&mut self) -> [&mut [f64]; 3] {
        [
            slice_mut(&mut self.w_ih),
            slice_mut(&mut self.w_hh),
            slice_mut(&mut self.bias),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Sum of `weights ⊙ hidden`, a scalar to differentiate.
    fn objective(lstm: &Lstm, x: &Array2<f64>, weights: &Array2<f64>) -> f64 {
        (&lstm.forward(x.view()).hidden * weights).sum()
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut lstm = Lstm::new(3, 4, &mut rng);
        // larger weights so gates leave the linear regime
        lstm.w_ih.mapv_inplace(|v| v * 8.0);
        lstm.w_hh.mapv_inplace(|v| v * 8.0);
        let mut x = Array2::from_shape_simple_fn((5, 3), || rng.gen_range(-1.0..1.0));
        let weights = Array2::from_shape_simple_fn((5, 4), || rng.gen_range(-1.0..1.0));

        let trace = lstm.forward(x.view());
        let mut grad = Lstm {
            w_ih: Array2::zeros(lstm.w_ih.raw_dim()),
            w_hh: Array2::zeros(lstm.w_hh.raw_dim()),
            bias: Array1::zeros(lstm.bias.raw_dim()),
        };
        let dx = lstm.backward(&trace, weights.view(), &mut grad);

        let eps = 1e-6;
        let check = |analytic: f64, numeric: f64| {
            assert!(
                (analytic - numeric).abs() <= 1e-6 * analytic.abs().max(numeric.abs()).max(1e-3),
                "{analytic} vs {numeric}"
            );
        };
        for idx in 0..lstm.w_hh.len() {
            let mut probe = lstm.clone();
            let flat = probe.w_hh.as_slice_mut().unwrap();
            flat[idx] += eps;
            let plus = objective(&probe, &x, &weights);
            probe.w_hh.as_slice_mut().unwrap()[idx] -= 2.0 * eps;
            let minus = objective(&probe, &x, &weights);
            check(grad.w_hh.as_slice().unwrap()[idx], (plus - minus) / (2.0 * eps));
        }
        for idx in 0..x.len() {
            let saved = x.as_slice().unwrap()[idx];
            x.as_slice_mut().unwrap()[idx] = saved + eps;
            let plus = objective(&lstm, &x, &weights);
            x.as_slice_mut().unwrap()[idx] = saved - eps;
            let minus = objective(&lstm, &x, &weights);
            x.as_slice_mut().unwrap()[idx] = saved;
            check(dx.as_slice().unwrap()[idx], (plus - minus) / (2.0 * eps));
        }
    }
}
