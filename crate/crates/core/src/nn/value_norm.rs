//! Running standardization of value targets.
//!
//! The critic head is fitted in standardized units; whenever the statistics
//! move, the head is rewritten so its de-standardized predictions are
//! unchanged.

use super::ActorCritic;

const MIN_STD: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValueNorm {
    pub count: f64,
    pub mean: f64,
    pub var: f64,
}

impl Default for ValueNorm {
    fn default() -> Self {
        Self {
            count: 0.0,
            mean: 0.0,
            var: 1.0,
        }
    }
}

impl ValueNorm {
    pub fn std(&self) -> f64 {
        self.var.sqrt().max(MIN_STD)
    }

    pub fn normalize(&self, x: f64) -> f64 {
        (x - self.mean) / self.std()
    }

    pub fn denormalize(&self, y: f64) -> f64 {
        y * self.std() + self.mean
    }

    /// Merges a batch into the running moments (Chan et al. parallel update).
    pub fn update(&mut self, xs: &[f64]) {
        if xs.is_empty() {
            return;
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        if self.count == 0.0 {
            *self = Self { count: n, mean, var };
            return;
        }
        let total = self.count + n;
        let delta = mean - self.mean;
        let m2 = self.var * self.count + var * n + delta * delta * self.count * n / total;
        self.mean += delta * n / total;
        self.var = m2 / total;
        self.count = total;
    }

    /// Updates the moments with `xs` and rewrites output `row` of `net` so
    /// `denormalize(out)` is the same function before and after.
    pub fn update_preserving(&mut self, xs: &[f64], net: &mut ActorCritic, row: usize) {
        let old = *self;
        self.update(xs);
        let (s_old, s_new) = (old.std(), self.std());
        net.affine_output_row(row, s_old / s_new, (old.mean - self.mean) / s_new);
    }
}
