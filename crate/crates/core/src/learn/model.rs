//! Linear and one-hidden-layer tanh scoring heads with exact backward passes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// A scoring head: `logits = W1 x + b1` or `logits = W2 tanh(W1 x + b1) + b2`.
///
/// Parameters are initialized uniformly in `(-1/sqrt(fan_in), 1/sqrt(fan_in))`
/// from the given seed, one RNG stream per tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub in_dim: usize,
    pub out_dim: usize,
    pub hidden: Option<usize>,
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Option<Matrix>,
    pub b2: Option<Vec<f64>>,
}

fn init_matrix(rows: usize, cols: usize, fan_in: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| rng.gen_range(-bound..bound))
        .collect();
    Matrix::from_vec(rows, cols, data).expect("sized by construction")
}

impl Model {
    pub fn new_linear(in_dim: usize, out_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(0);
        let w1 = init_matrix(out_dim, in_dim, in_dim, &mut rng);
        Model {
            in_dim,
            out_dim,
            hidden: None,
            w1,
            b1: vec![0.0; out_dim],
            w2: None,
            b2: None,
        }
    }

    pub fn new_mlp(in_dim: usize, hidden: usize, out_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(0);
        let w1 = init_matrix(hidden, in_dim, in_dim, &mut rng);
        rng.set_stream(1);
        let w2 = init_matrix(out_dim, hidden, hidden, &mut rng);
        Model {
            in_dim,
            out_dim,
            hidden: Some(hidden),
            w1,
            b1: vec![0.0; hidden],
            w2: Some(w2),
            b2: Some(vec![0.0; out_dim]),
        }
    }

    pub fn new(in_dim: usize, hidden: Option<usize>, out_dim: usize, seed: u64) -> Self {
        match hidden {
            None => Self::new_linear(in_dim, out_dim, seed),
            Some(h) => Self::new_mlp(in_dim, h, out_dim, seed),
        }
    }

    pub fn is_mlp(&self) -> bool {
        self.hidden.is_some()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.in_dim {
            return Err(Error::DimensionMismatch {
                expected: self.in_dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_cached(x)?.0)
    }

    /// Forward pass returning the logits and, for the MLP, the hidden
    /// activations needed by [`Self::backward`].
    pub fn forward_cached(&self, x: &[f64]) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
        self.check_input(x)?;
        let mut pre = self.w1.matvec(x)?;
        for (p, b) in pre.iter_mut().zip(&self.b1) {
            *p += b;
        }
        match (&self.w2, &self.b2) {
            (Some(w2), Some(b2)) => {
                let act: Vec<f64> = pre.iter().map(|v| v.tanh()).collect();
                let mut logits = w2.matvec(&act)?;
                for (l, b) in logits.iter_mut().zip(b2) {
                    *l += b;
                }
                Ok((logits, Some(act)))
            }
            _ => Ok((pre, None)),
        }
    }

    /// Parameter gradients for upstream `dL/dlogits`.
    pub fn backward(&self, x: &[f64], hidden_act: Option<&[f64]>, upstream: &[f64]) -> Result<Gradients> {
        self.check_input(x)?;
        if upstream.len() != self.out_dim {
            return Err(Error::DimensionMismatch {
                expected: self.out_dim,
                got: upstream.len(),
            });
        }
        match (&self.w2, hidden_act) {
            (Some(w2), Some(act)) => {
                let h = act.len();
                let mut dw2 = Matrix::zeros(self.out_dim, h);
                for o in 0..self.out_dim {
                    let row = dw2.row_mut(o);
                    for (i, &a) in act.iter().enumerate() {
                        row[i] = upstream[o] * a;
                    }
                }
                let db2 = upstream.to_vec();
                // d/d pre-activation: (W2^T upstream) * (1 - act^2)
                let mut dpre = w2.transpose_matvec(upstream)?;
                for (d, &a) in dpre.iter_mut().zip(act) {
                    *d *= 1.0 - a * a;
                }
                let mut dw1 = Matrix::zeros(h, self.in_dim);
                for r in 0..h {
                    let row = dw1.row_mut(r);
                    for (i, &xi) in x.iter().enumerate() {
                        row[i] = dpre[r] * xi;
                    }
                }
                Ok(Gradients {
                    w1: dw1,
                    b1: dpre,
                    w2: Some(dw2),
                    b2: Some(db2),
                })
            }
            (None, _) => {
                let mut dw1 = Matrix::zeros(self.out_dim, self.in_dim);
                for o in 0..self.out_dim {
                    let row = dw1.row_mut(o);
                    for (i, &xi) in x.iter().enumerate() {
                        row[i] = upstream[o] * xi;
                    }
                }
                Ok(Gradients {
                    w1: dw1,
                    b1: upstream.to_vec(),
                    w2: None,
                    b2: None,
                })
            }
            (Some(_), None) => Err(Error::InvalidInput(
                "MLP backward requires the cached hidden activations".into(),
            )),
        }
    }

    /// Mutable views of all parameter tensors, in a fixed order.
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![self.w1.data_mut(), &mut self.b1];
        if let Some(w2) = &mut self.w2 {
            out.push(w2.data_mut());
        }
        if let Some(b2) = &mut self.b2 {
            out.push(b2);
        }
        out
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = vec![self.w1.data(), &self.b1];
        if let Some(w2) = &self.w2 {
            out.push(w2.data());
        }
        if let Some(b2) = &self.b2 {
            out.push(b2);
        }
        out
    }

    pub fn n_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }
}

/// Same shapes as the model parameters.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Option<Matrix>,
    pub b2: Option<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(model: &Model) -> Self {
        Gradients {
            w1: Matrix::zeros(model.w1.rows(), model.w1.cols()),
            b1: vec![0.0; model.b1.len()],
            w2: model.w2.as_ref().map(|w| Matrix::zeros(w.rows(), w.cols())),
            b2: model.b2.as_ref().map(|b| vec![0.0; b.len()]),
        }
    }

    pub fn accumulate(&mut self, other: &Gradients) {
        for (a, b) in self.w1.data_mut().iter_mut().zip(other.w1.data()) {
            *a += b;
        }
        for (a, b) in self.b1.iter_mut().zip(&other.b1) {
            *a += b;
        }
        if let (Some(a), Some(b)) = (&mut self.w2, &other.w2) {
            for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
                *x += y;
            }
        }
        if let (Some(a), Some(b)) = (&mut self.b2, &other.b2) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = vec![self.w1.data(), &self.b1];
        if let Some(w2) = &self.w2 {
            out.push(w2.data());
        }
        if let Some(b2) = &self.b2 {
            out.push(b2);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_parameters_give_zero_logits() {
        let mut model = Model::new_linear(3, 2, 0);
        for t in model.tensors_mut() {
            t.fill(0.0);
        }
        assert_eq!(model.forward(&[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn one_dimensional_linear_case() {
        let mut model = Model::new_linear(1, 1, 0);
        model.w1.set(0, 0, 2.0);
        model.b1[0] = 1.0;
        assert_eq!(model.forward(&[3.0]).unwrap(), vec![7.0]);
    }

    #[test]
    fn forward_rejects_wrong_input_size() {
        let model = Model::new_linear(3, 2, 0);
        assert!(model.forward(&[1.0]).is_err());
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let a = Model::new_mlp(4, 3, 2, 9);
        let b = Model::new_mlp(4, 3, 2, 9);
        let c = Model::new_mlp(4, 3, 2, 10);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
