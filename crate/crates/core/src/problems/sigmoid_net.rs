//! Single-hidden-layer classifier with logistic sigmoid hidden and output
//! units, trained on the per-class binary cross-entropy.
//!
//! Parameter layout (row-major, bias column first in each layer):
//!
//! ```text
//! W1: d_hidden x (d_in + 1)     w[0 .. d_hidden*(d_in+1)]
//! W2: d_out x (d_hidden + 1)    w[d_hidden*(d_in+1) ..]
//! ```
//!
//! so `y_k = h(W2[k,0] + sum_j W2[k,j+1] h(W1[j,0] + sum_i W1[j,i+1] x_i))`.

use std::sync::Arc;

use rand::Rng;

use super::{Objective, ProblemError};
use crate::data::Dataset;

/// Outputs are clamped to `[LOG_CLAMP, 1 - LOG_CLAMP]` inside the log terms.
pub const LOG_CLAMP: f64 = 1e-12;

#[inline]
pub fn sigmoid(a: f64) -> f64 {
    1.0 / (1.0 + (-a).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SigmoidNetSpec {
    pub d_in: usize,
    pub d_hidden: usize,
    pub d_out: usize,
}

/// One labelled example with a one-hot target.
#[derive(Debug, Clone, Copy)]
pub struct LabeledExample<'a> {
    pub x: &'a [f64],
    pub target: &'a [f64],
}

#[derive(Clone, Copy)]
enum Input<'a> {
    Dense(&'a [f64]),
    Sparse { idx: &'a [u32], val: &'a [f64] },
}

impl SigmoidNetSpec {
    pub fn new(d_in: usize, d_hidden: usize, d_out: usize) -> Self {
        SigmoidNetSpec {
            d_in,
            d_hidden,
            d_out,
        }
    }

    /// 20x20 images, 50 hidden units, 10 classes: `d_w = 20560`.
    pub fn reference() -> Self {
        Self::new(400, 50, 10)
    }

    pub fn first_layer_len(&self) -> usize {
        self.d_hidden * (self.d_in + 1)
    }

    pub fn dim(&self) -> usize {
        self.first_layer_len() + self.d_out * (self.d_hidden + 1)
    }

    fn check_params(&self, w: &[f64]) -> Result<(), ProblemError> {
        if w.len() != self.dim() {
            return Err(ProblemError::DimensionMismatch {
                expected: self.dim(),
                actual: w.len(),
            });
        }
        Ok(())
    }

    fn check_input(&self, x: &[f64]) -> Result<(), ProblemError> {
        if x.len() != self.d_in {
            return Err(ProblemError::DimensionMismatch {
                expected: self.d_in,
                actual: x.len(),
            });
        }
        Ok(())
    }

    /// Class probabilities `y in (0,1)^d_out`.
    pub fn forward(&self, w: &[f64], x: &[f64]) -> Result<Vec<f64>, ProblemError> {
        self.check_params(w)?;
        self.check_input(x)?;
        let mut hidden = vec![0.0; self.d_hidden];
        let mut out = vec![0.0; self.d_out];
        self.propagate(w, Input::Dense(x), &mut hidden, &mut out);
        Ok(out)
    }

    /// Predicted class: argmax of the outputs, ties to the smallest index.
    pub fn predict(&self, w: &[f64], x: &[f64]) -> Result<usize, ProblemError> {
        Ok(argmax(&self.forward(w, x)?))
    }

    /// Averaged cross-entropy over `batch` and its exact gradient.
    pub fn risk_and_gradient(
        &self,
        w: &[f64],
        batch: &[LabeledExample<'_>],
    ) -> Result<(f64, Vec<f64>), ProblemError> {
        self.check_params(w)?;
        if batch.is_empty() {
            return Err(ProblemError::EmptyBatch);
        }
        let mut labels = Vec::with_capacity(batch.len());
        for ex in batch {
            self.check_input(ex.x)?;
            labels.push(one_hot_label(ex.target, self.d_out)?);
        }
        let scale = 1.0 / batch.len() as f64;
        let mut grad = vec![0.0; self.dim()];
        let mut risk = 0.0;
        let mut scratch = Scratch::new(self);
        for (ex, &label) in batch.iter().zip(&labels) {
            risk += self.accumulate(w, Input::Dense(ex.x), label, scale, Some(&mut grad), &mut scratch);
        }
        Ok((risk * scale, grad))
    }

    /// Uniform initialization on `[-half_width, half_width]`.
    pub fn init_uniform<R: Rng + ?Sized>(&self, half_width: f64, rng: &mut R) -> Vec<f64> {
        (0..self.dim())
            .map(|_| rng.gen_range(-half_width..=half_width))
            .collect()
    }

    fn propagate(&self, w: &[f64], x: Input<'_>, hidden: &mut [f64], out: &mut [f64]) {
        let stride = self.d_in + 1;
        let (w1, w2) = w.split_at(self.first_layer_len());
        for (j, h) in hidden.iter_mut().enumerate() {
            let row = &w1[j * stride..(j + 1) * stride];
            let mut z = row[0];
            match x {
                Input::Dense(x) => {
                    for (wi, xi) in row[1..].iter().zip(x) {
                        z += wi * xi;
                    }
                }
                Input::Sparse { idx, val } => {
                    for (&i, v) in idx.iter().zip(val) {
                        z += row[1 + i as usize] * v;
                    }
                }
            }
            *h = sigmoid(z);
        }
        let stride2 = self.d_hidden + 1;
        for (k, o) in out.iter_mut().enumerate() {
            let row = &w2[k * stride2..(k + 1) * stride2];
            let mut z = row[0];
            for (wj, hj) in row[1..].iter().zip(hidden.iter()) {
                z += wj * hj;
            }
            *o = sigmoid(z);
        }
    }

    /// Returns the sample loss; when `grad` is given adds `scale * grad loss`.
    fn accumulate(
        &self,
        w: &[f64],
        x: Input<'_>,
        label: usize,
        scale: f64,
        grad: Option<&mut [f64]>,
        s: &mut Scratch,
    ) -> f64 {
        self.propagate(w, x, &mut s.hidden, &mut s.out);
        let mut loss = 0.0;
        for (k, &y) in s.out.iter().enumerate() {
            let y = y.clamp(LOG_CLAMP, 1.0 - LOG_CLAMP);
            loss -= if k == label { y.ln() } else { (1.0 - y).ln() };
        }
        let Some(grad) = grad else {
            return loss;
        };

        let first = self.first_layer_len();
        let stride = self.d_in + 1;
        let stride2 = self.d_hidden + 1;
        let (g1, g2) = grad.split_at_mut(first);
        let w2 = &w[first..];

        // Output pre-activation sensitivities: y_k - y*_k.
        for (k, d) in s.delta_out.iter_mut().enumerate() {
            *d = s.out[k] - if k == label { 1.0 } else { 0.0 };
        }
        for d in s.delta_hidden.iter_mut() {
            *d = 0.0;
        }
        for (k, &d) in s.delta_out.iter().enumerate() {
            let row = &w2[k * stride2..(k + 1) * stride2];
            let grow = &mut g2[k * stride2..(k + 1) * stride2];
            let sd = scale * d;
            grow[0] += sd;
            for j in 0..self.d_hidden {
                grow[j + 1] += sd * s.hidden[j];
                s.delta_hidden[j] += d * row[j + 1];
            }
        }
        for j in 0..self.d_hidden {
            let h = s.hidden[j];
            let sd = scale * s.delta_hidden[j] * h * (1.0 - h);
            let grow = &mut g1[j * stride..(j + 1) * stride];
            grow[0] += sd;
            match x {
                Input::Dense(x) => {
                    for (g, xi) in grow[1..].iter_mut().zip(x) {
                        *g += sd * xi;
                    }
                }
                Input::Sparse { idx, val } => {
                    for (&i, v) in idx.iter().zip(val) {
                        grow[1 + i as usize] += sd * v;
                    }
                }
            }
        }
        loss
    }
}

struct Scratch {
    hidden: Vec<f64>,
    out: Vec<f64>,
    delta_out: Vec<f64>,
    delta_hidden: Vec<f64>,
}

impl Scratch {
    fn new(spec: &SigmoidNetSpec) -> Self {
        Scratch {
            hidden: vec![0.0; spec.d_hidden],
            out: vec![0.0; spec.d_out],
            delta_out: vec![0.0; spec.d_out],
            delta_hidden: vec![0.0; spec.d_hidden],
        }
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = k;
        }
    }
    best
}

fn one_hot_label(target: &[f64], classes: usize) -> Result<usize, ProblemError> {
    if target.len() != classes {
        return Err(ProblemError::MalformedTarget(classes));
    }
    let mut label = None;
    for (k, &t) in target.iter().enumerate() {
        if t == 1.0 {
            if label.is_some() {
                return Err(ProblemError::MalformedTarget(classes));
            }
            label = Some(k);
        } else if t != 0.0 {
            return Err(ProblemError::MalformedTarget(classes));
        }
    }
    label.ok_or(ProblemError::MalformedTarget(classes))
}

/// An agent's empirical risk over a subset of a shared dataset.
pub struct NetObjective {
    spec: SigmoidNetSpec,
    data: Arc<Dataset>,
    indices: Vec<usize>,
    offsets: Vec<usize>,
    nz_idx: Vec<u32>,
    nz_val: Vec<f64>,
}

impl NetObjective {
    pub fn new(spec: SigmoidNetSpec, data: Arc<Dataset>, indices: Vec<usize>) -> Result<Self, ProblemError> {
        if data.d_in() != spec.d_in {
            return Err(ProblemError::DimensionMismatch {
                expected: spec.d_in,
                actual: data.d_in(),
            });
        }
        if indices.is_empty() {
            return Err(ProblemError::NoSamples);
        }
        let mut offsets = vec![0];
        let mut nz_idx = Vec::new();
        let mut nz_val = Vec::new();
        for &s in &indices {
            for (i, &v) in data.input(s).iter().enumerate() {
                if v != 0.0 {
                    nz_idx.push(i as u32);
                    nz_val.push(v);
                }
            }
            offsets.push(nz_idx.len());
        }
        Ok(NetObjective {
            spec,
            data,
            indices,
            offsets,
            nz_idx,
            nz_val,
        })
    }

    pub fn spec(&self) -> SigmoidNetSpec {
        self.spec
    }

    /// Dataset indices of this agent's samples.
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    fn input(&self, j: usize) -> Input<'_> {
        let (a, b) = (self.offsets[j], self.offsets[j + 1]);
        Input::Sparse {
            idx: &self.nz_idx[a..b],
            val: &self.nz_val[a..b],
        }
    }

    /// Sum (not average) of the sample losses.
    pub fn total_loss(&self, w: &[f64]) -> f64 {
        let mut scratch = Scratch::new(&self.spec);
        (0..self.indices.len())
            .map(|j| {
                self.spec
                    .accumulate(w, self.input(j), self.data.label(self.indices[j]), 0.0, None, &mut scratch)
            })
            .sum()
    }
}

impl Objective for NetObjective {
    fn dim(&self) -> usize {
        self.spec.dim()
    }

    fn num_samples(&self) -> usize {
        self.indices.len()
    }

    fn value(&self, w: &[f64]) -> f64 {
        self.total_loss(w) / self.indices.len() as f64
    }

    fn add_sample_gradient(&self, w: &[f64], j: usize, scale: f64, out: &mut [f64]) {
        let mut scratch = Scratch::new(&self.spec);
        self.spec
            .accumulate(w, self.input(j), self.data.label(self.indices[j]), scale, Some(out), &mut scratch);
    }

    fn add_gradient(&self, w: &[f64], scale: f64, out: &mut [f64]) {
        let mut scratch = Scratch::new(&self.spec);
        let per_sample = scale / self.indices.len() as f64;
        for j in 0..self.indices.len() {
            self.spec.accumulate(
                w,
                self.input(j),
                self.data.label(self.indices[j]),
                per_sample,
                Some(out),
                &mut scratch,
            );
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn one_hot(label: usize) -> Vec<f64> {
        (0..10).map(|k| if k == label { 1.0 } else { 0.0 }).collect()
    }

    #[test]
    fn reference_layout() {
        let spec = SigmoidNetSpec::reference();
        assert_eq!(spec.dim(), 50 * 401 + 10 * 51);
        assert_eq!(spec.dim(), 20560);
    }

    #[test]
    fn zero_weights_give_half() {
        let spec = SigmoidNetSpec::reference();
        let w = vec![0.0; spec.dim()];
        let x: Vec<f64> = (0..400).map(|i| (i % 7) as f64 / 7.0).collect();
        assert!(spec.forward(&w, &x).unwrap().iter().all(|&y| y == 0.5));
        let t = one_hot(3);
        let (risk, _) = spec
            .risk_and_gradient(&w, &[LabeledExample { x: &x, target: &t }])
            .unwrap();
        assert!((risk - 10.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn bias_only_second_layer() {
        let spec = SigmoidNetSpec::new(4, 3, 10);
        let mut w = vec![0.0; spec.dim()];
        let c = 0.7;
        for k in 0..10 {
            w[spec.first_layer_len() + k * 4] = c;
        }
        let y = spec.forward(&w, &[0.3, 0.1, 0.9, 0.0]).unwrap();
        assert!(y.iter().all(|&v| (v - sigmoid(c)).abs() < 1e-15));
    }

    #[test]
    fn duplicated_batch_is_idempotent() {
        let spec = SigmoidNetSpec::new(6, 4, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = spec.init_uniform(0.5, &mut rng);
        let x: Vec<f64> = (0..6).map(|_| rng.gen_range(0.0..1.0)).collect();
        let t = one_hot(7);
        let ex = LabeledExample { x: &x, target: &t };
        let (r1, g1) = spec.risk_and_gradient(&w, &[ex]).unwrap();
        let (r2, g2) = spec.risk_and_gradient(&w, &[ex, ex]).unwrap();
        assert!((r1 - r2).abs() < 1e-14);
        for (a, b) in g1.iter().zip(&g2) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn malformed_inputs() {
        let spec = SigmoidNetSpec::new(3, 2, 10);
        let w = vec![0.0; spec.dim()];
        let x = [0.1, 0.2, 0.3];
        let bad = [0.5; 10];
        assert!(matches!(
            spec.risk_and_gradient(&w, &[LabeledExample { x: &x, target: &bad }]),
            Err(ProblemError::MalformedTarget(10))
        ));
        let two_hot: Vec<f64> = (0..10).map(|k| if k < 2 { 1.0 } else { 0.0 }).collect();
        assert!(spec
            .risk_and_gradient(&w, &[LabeledExample { x: &x, target: &two_hot }])
            .is_err());
        assert!(matches!(spec.risk_and_gradient(&w, &[]), Err(ProblemError::EmptyBatch)));
        assert!(spec.forward(&w, &[0.0; 4]).is_err());
        assert!(spec.forward(&w[1..], &x).is_err());
    }

    #[test]
    fn saturated_outputs_keep_risk_finite() {
        let spec = SigmoidNetSpec::new(2, 2, 10);
        let w = vec![200.0; spec.dim()];
        let t = one_hot(0);
        let (risk, grad) = spec
            .risk_and_gradient(&w, &[LabeledExample { x: &[1.0, 1.0], target: &t }])
            .unwrap();
        assert!(risk.is_finite());
        assert!(grad.iter().all(|g| g.is_finite()));
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[0.5; 10]), 0);
        assert_eq!(argmax(&[0.1, 0.9, 0.9, 0.2]), 1);
    }
}
