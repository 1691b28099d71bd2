//! Closed-form oracles written independently of the library code paths.

#![allow(dead_code)]

use dprfs::PointPattern;
use statrs::function::gamma::ln_gamma;

/// 1-D Normal-inverse-Wishart hyperparameters `(μ₀, κ₀, ν₀, Λ₀)`, with
/// `σ² ~ InvGamma(ν₀/2, Λ₀/2)` and `μ | σ² ~ N(μ₀, σ²/κ₀)`.
#[derive(Clone, Copy, Debug)]
pub struct Niw1 {
    pub mu: f64,
    pub kappa: f64,
    pub nu: f64,
    pub lambda: f64,
}

impl Niw1 {
    pub fn posterior(&self, xs: &[f64]) -> Niw1 {
        let m = xs.len() as f64;
        if xs.is_empty() {
            return *self;
        }
        let mean = xs.iter().sum::<f64>() / m;
        let ss: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
        let kappa = self.kappa + m;
        Niw1 {
            mu: (self.kappa * self.mu + m * mean) / kappa,
            kappa,
            nu: self.nu + m,
            lambda: self.lambda + ss + self.kappa * m / kappa * (mean - self.mu).powi(2),
        }
    }

    /// `log ∫ ∏ N(x_i; μ, σ²) NIW(μ, σ²) dμ dσ²`.
    pub fn log_marginal(&self, xs: &[f64]) -> f64 {
        let post = self.posterior(xs);
        let m = xs.len() as f64;
        ln_gamma(post.nu / 2.0) - ln_gamma(self.nu / 2.0) + 0.5 * self.nu * self.lambda.ln()
            - 0.5 * post.nu * post.lambda.ln()
            + 0.5 * (self.kappa / post.kappa).ln()
            - 0.5 * m * std::f64::consts::PI.ln()
    }

    pub fn log_density(&self, mu: f64, var: f64) -> f64 {
        let (a, b) = (self.nu / 2.0, self.lambda / 2.0);
        let inv_gamma = a * b.ln() - ln_gamma(a) - (a + 1.0) * var.ln() - b / var;
        inv_gamma + normal_log_density(mu, self.mu, var / self.kappa)
    }
}

pub fn normal_log_density(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * (2.0 * std::f64::consts::PI * var).ln() - 0.5 * (x - mean).powi(2) / var
}

pub fn gamma_log_density(x: f64, shape: f64, rate: f64) -> f64 {
    shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
}

/// `log ∫ ∏_i e^{-λ} λ^{n_i} Gamma(λ; α, β) dλ`.
pub fn gamma_poisson_log_marginal(shape: f64, rate: f64, counts: &[usize]) -> f64 {
    let total: usize = counts.iter().sum();
    let n = counts.len() as f64;
    let a = shape + total as f64;
    shape * rate.ln() - ln_gamma(shape) + ln_gamma(a) - a * (rate + n).ln()
}

/// Joint marginal of 1-D point patterns under a Gamma × NIW prior.
pub fn set_log_marginal_1d(shape: f64, rate: f64, niw: &Niw1, sets: &[Vec<f64>]) -> f64 {
    let counts: Vec<usize> = sets.iter().map(Vec::len).collect();
    let pooled: Vec<f64> = sets.iter().flatten().copied().collect();
    gamma_poisson_log_marginal(shape, rate, &counts) + niw.log_marginal(&pooled)
}

pub fn pattern_1d(xs: &[f64]) -> PointPattern {
    PointPattern::from_flat(1, xs.to_vec()).unwrap()
}

/// All set partitions of `0..n` as label vectors in canonical order
/// (first appearance gets the next label).
pub fn set_partitions(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    fn rec(prefix: &mut Vec<usize>, n: usize, next: usize, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == n {
            out.push(prefix.clone());
            return;
        }
        for label in 0..=next {
            prefix.push(label);
            rec(prefix, n, next.max(label + 1), out);
            prefix.pop();
        }
    }
    rec(&mut Vec::new(), n, 0, &mut out);
    out
}

/// Exact posterior over partitions of 1-D sets under a CRP(η) prior.
pub fn exact_partition_posterior(eta: f64, shape: f64, rate: f64, niw: &Niw1, sets: &[Vec<f64>]) -> Vec<(Vec<usize>, f64)> {
    let parts = set_partitions(sets.len());
    let logs: Vec<f64> = parts
        .iter()
        .map(|labels| {
            let k = labels.iter().max().unwrap() + 1;
            (0..k)
                .map(|c| {
                    let members: Vec<Vec<f64>> = labels
                        .iter()
                        .zip(sets)
                        .filter(|(&l, _)| l == c)
                        .map(|(_, s)| s.clone())
                        .collect();
                    eta.ln() + ln_gamma(members.len() as f64) + set_log_marginal_1d(shape, rate, niw, &members)
                })
                .sum()
        })
        .collect();
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logs.iter().map(|l| (l - max).exp()).sum();
    parts
        .into_iter()
        .zip(logs)
        .map(|(p, l)| (p, (l - max).exp() / z))
        .collect()
}
