//! Feed-forward neural-network controller with a flat, bounded parameter
//! vector, suitable as a genome for evolutionary search.
//!
//! Layout of theta: [W1 row-major, b1, W2 row-major, b2]. tanh on the hidden
//! layer and on the output, which is then scaled into the action range.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub input_dim: usize,
    pub hidden_units: usize,
    pub output_dim: usize,
    /// Each parameter lives in [-param_bound, param_bound].
    pub param_bound: f64,
    pub action_low: Vec<f64>,
    pub action_high: Vec<f64>,
}

impl PolicyConfig {
    pub fn param_count(&self) -> usize {
        self.hidden_units * (self.input_dim + 1) + self.output_dim * (self.hidden_units + 1)
    }

    /// u = center + halfwidth * tanh(W2 tanh(W1 x + b1) + b2)
    pub fn eval_into(&self, theta: &[f64], x: &[f64], u: &mut [f64]) -> Result<()> {
        if theta.len() != self.param_count() {
            return Err(Error::DimensionMismatch {
                expected: self.param_count(),
                got: theta.len(),
            });
        }
        if x.len() != self.input_dim || u.len() != self.output_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                got: x.len(),
            });
        }
        let h = self.hidden_units;
        let (w1, rest) = theta.split_at(h * self.input_dim);
        let (b1, rest) = rest.split_at(h);
        let (w2, b2) = rest.split_at(self.output_dim * h);

        let mut hidden = vec![0.0; h];
        for i in 0..h {
            let row = &w1[i * self.input_dim..(i + 1) * self.input_dim];
            let z: f64 = row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() + b1[i];
            hidden[i] = z.tanh();
        }
        for o in 0..self.output_dim {
            let row = &w2[o * h..(o + 1) * h];
            let z: f64 = row.iter().zip(&hidden).map(|(w, hi)| w * hi).sum::<f64>() + b2[o];
            let center = 0.5 * (self.action_high[o] + self.action_low[o]);
            let halfwidth = 0.5 * (self.action_high[o] - self.action_low[o]);
            u[o] = center + halfwidth * z.tanh();
        }
        Ok(())
    }

    pub fn eval(&self, theta: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        let mut u = vec![0.0; self.output_dim];
        self.eval_into(theta, x, &mut u)?;
        Ok(u)
    }

    /// Uniform random parameters in [-b, b].
    pub fn random_params<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let b = self.param_bound;
        (0..self.param_count())
            .map(|_| if b == 0.0 { 0.0 } else { rng.gen_range(-b..=b) })
            .collect()
    }
}
