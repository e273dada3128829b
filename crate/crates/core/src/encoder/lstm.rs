//! Single-layer LSTM with a hand-written backward pass.
//!
//! Gate rows are stacked in the order input, forget, output, candidate, each
//! block `hidden` rows tall:
//!
//! ```text
//! i = σ(W_i x + U_i h + b_i)    f = σ(W_f x + U_f h + b_f)
//! o = σ(W_o x + U_o h + b_o)    g = tanh(W_g x + U_g h + b_g)
//! c' = f ⊙ c + i ⊙ g            h' = o ⊙ tanh(c')
//! ```
//!
//! The state starts at zero and the encoding of a sequence is the final `h`.

use rand::Rng;
use serde::{Deserialize, Serialize};

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    pub input_size: usize,
    pub hidden_size: usize,
    /// `4H x I`, row-major.
    pub w_input: Vec<f64>,
    /// `4H x H`, row-major.
    pub w_hidden: Vec<f64>,
    /// `4H`.
    pub bias: Vec<f64>,
}

/// Activations of one time step, kept for backpropagation.
#[derive(Clone, Debug)]
pub struct Step {
    /// Activated gates `[i; f; o; g]`.
    pub gates: Vec<f64>,
    pub cell: Vec<f64>,
    pub cell_tanh: Vec<f64>,
    pub hidden: Vec<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct Trace {
    pub steps: Vec<Step>,
}

impl Trace {
    pub fn final_hidden(&self) -> Option<&[f64]> {
        self.steps.last().map(|s| s.hidden.as_slice())
    }
}

impl LstmParams {
    pub fn zeros(input_size: usize, hidden_size: usize) -> LstmParams {
        let rows = 4 * hidden_size;
        LstmParams {
            input_size,
            hidden_size,
            w_input: vec![0.0; rows * input_size],
            w_hidden: vec![0.0; rows * hidden_size],
            bias: vec![0.0; rows],
        }
    }

    /// Uniform weights in `±1/sqrt(H)` and a forget-gate bias of one.
    pub fn random<R: Rng>(input_size: usize, hidden_size: usize, rng: &mut R) -> LstmParams {
        let mut p = LstmParams::zeros(input_size, hidden_size);
        let scale = 1.0 / (hidden_size as f64).sqrt();
        for w in p.w_input.iter_mut().chain(p.w_hidden.iter_mut()) {
            *w = rng.gen_range(-scale..scale);
        }
        for b in &mut p.bias[hidden_size..2 * hidden_size] {
            *b = 1.0;
        }
        p
    }

    pub fn parameter_count(&self) -> usize {
        self.w_input.len() + self.w_hidden.len() + self.bias.len()
    }

    pub fn slices(&self) -> [&[f64]; 3] {
        [&self.w_input, &self.w_hidden, &self.bias]
    }

    pub fn slices_mut(&mut self) -> [&mut [f64]; 3] {
        [&mut self.w_input, &mut self.w_hidden, &mut self.bias]
    }

    pub fn forward(&self, inputs: &[&[f64]]) -> Trace {
        let h_size = self.hidden_size;
        let i_size = self.input_size;
        let mut h = vec![0.0; h_size];
        let mut c = vec![0.0; h_size];
        let mut steps = Vec::with_capacity(inputs.len());
        for x in inputs {
            debug_assert_eq!(x.len(), i_size);
            let mut gates = self.bias.clone();
            for (row, pre) in gates.iter_mut().enumerate() {
                let wx = &self.w_input[row * i_size..(row + 1) * i_size];
                let wh = &self.w_hidden[row * h_size..(row + 1) * h_size];
                *pre += dot(wx, x) + dot(wh, &h);
            }
            for (row, a) in gates.iter_mut().enumerate() {
                *a = if row < 3 * h_size { sigmoid(*a) } else { a.tanh() };
            }
            let mut cell = vec![0.0; h_size];
            let mut cell_tanh = vec![0.0; h_size];
            let mut hidden = vec![0.0; h_size];
            for j in 0..h_size {
                let (ig, fg, og, gg) = (
                    gates[j],
                    gates[h_size + j],
                    gates[2 * h_size + j],
                    gates[3 * h_size + j],
                );
                cell[j] = fg * c[j] + ig * gg;
                cell_tanh[j] = cell[j].tanh();
                hidden[j] = og * cell_tanh[j];
            }
            h.clone_from(&hidden);
            c.clone_from(&cell);
            steps.push(Step {
                gates,
                cell,
                cell_tanh,
                hidden,
            });
        }
        Trace { steps }
    }

    /// Backpropagation through time from a gradient on the final hidden
    /// state. Gradients are added into `grads`.
    pub fn backward(&self, inputs: &[&[f64]], trace: &Trace, d_final: &[f64], grads: &mut LstmParams) {
        let h_size = self.hidden_size;
        let i_size = self.input_size;
        let mut dh = d_final.to_vec();
        let mut dc = vec![0.0; h_size];
        let mut d_pre = vec![0.0; 4 * h_size];
        let zeros = vec![0.0; h_size];
        for t in (0..trace.steps.len()).rev() {
            let step = &trace.steps[t];
            let (h_prev, c_prev) = if t == 0 {
                (&zeros, &zeros)
            } else {
                (&trace.steps[t - 1].hidden, &trace.steps[t - 1].cell)
            };
            for j in 0..h_size {
                let (ig, fg, og, gg) = (
                    step.gates[j],
                    step.gates[h_size + j],
                    step.gates[2 * h_size + j],
                    step.gates[3 * h_size + j],
                );
                let tc = step.cell_tanh[j];
                let d_o = dh[j] * tc;
                dc[j] += dh[j] * og * (1.0 - tc * tc);
                let d_i = dc[j] * gg;
                let d_g = dc[j] * ig;
                let d_f = dc[j] * c_prev[j];
                d_pre[j] = d_i * ig * (1.0 - ig);
                d_pre[h_size + j] = d_f * fg * (1.0 - fg);
                d_pre[2 * h_size + j] = d_o * og * (1.0 - og);
                d_pre[3 * h_size + j] = d_g * (1.0 - gg * gg);
                dc[j] *= fg;
            }
            let x = inputs[t];
            dh.iter_mut().for_each(|v| *v = 0.0);
            for (row, &g) in d_pre.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                grads.bias[row] += g;
                let gw = &mut grads.w_input[row * i_size..(row + 1) * i_size];
                for (w, &xv) in gw.iter_mut().zip(x.iter()) {
                    *w += g * xv;
                }
                let uw = &self.w_hidden[row * h_size..(row + 1) * h_size];
                let gu = &mut grads.w_hidden[row * h_size..(row + 1) * h_size];
                for k in 0..h_size {
                    gu[k] += g * h_prev[k];
                    dh[k] += g * uw[k];
                }
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
