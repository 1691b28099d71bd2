//! Dirichlet process prior utilities: concentration resampling, the
//! stick-breaking (GEM) construction and the Polya urn.

use rand::Rng;
use rand_distr::{Beta, Distribution};

use crate::conjugate::GammaParams;

/// One auxiliary-variable update of the concentration `η` given `K`
/// occupied clusters among `N` items, under a `Gamma(a, b)` hyperprior.
///
/// Draws `x ~ Beta(η + 1, N)`, then `η` from a two-component Gamma mixture
/// with shapes `a + K` and `a + K - 1`, common rate `b - log x`, and mixing
/// odds `(a + K - 1) / (N (b - log x))`. Without a hyperprior `η` is
/// returned unchanged.
pub fn sample_concentration<R: Rng + ?Sized>(
    concentration: f64,
    num_clusters: usize,
    num_items: usize,
    hyperprior: Option<&GammaParams>,
    rng: &mut R,
) -> f64 {
    let Some(hyper) = hyperprior else {
        return concentration;
    };
    debug_assert!(num_clusters >= 1 && num_items >= 1);
    let k = num_clusters as f64;
    let n = num_items as f64;
    let x: f64 = Beta::new(concentration + 1.0, n)
        .expect("positive Beta parameters")
        .sample(rng);
    // x can underflow to zero for tiny η; clamp so the rate stays finite.
    let rate = hyper.rate() - x.max(f64::MIN_POSITIVE).ln();
    let odds = (hyper.shape() + k - 1.0) / (n * rate);
    let shape = if rng.random::<f64>() < odds / (1.0 + odds) {
        hyper.shape() + k
    } else {
        hyper.shape() + k - 1.0
    };
    let draw = GammaParams::new(shape, rate)
        .expect("positive Gamma parameters")
        .sample(rng);
    draw.max(f64::MIN_POSITIVE)
}

/// Truncated stick-breaking weights `π_k = v_k ∏_{s<k} (1 - v_s)` with
/// `v_k ~ Beta(1, η)`.
#[derive(Clone, Debug, PartialEq)]
pub struct StickBreaking {
    pub weights: Vec<f64>,
    /// Unbroken remainder of the stick, `∏ (1 - v_s)`.
    pub residual: f64,
}

pub fn sample_gem_weights<R: Rng + ?Sized>(concentration: f64, truncation: usize, rng: &mut R) -> StickBreaking {
    assert!(truncation >= 1, "truncation must be at least 1");
    let beta = Beta::new(1.0, concentration).expect("positive concentration");
    let mut remaining = 1.0;
    let weights = (0..truncation)
        .map(|_| {
            let v: f64 = beta.sample(rng);
            let w = v * remaining;
            remaining *= 1.0 - v;
            w
        })
        .collect();
    StickBreaking {
        weights,
        residual: remaining,
    }
}

/// Draws `m` values from a Dirichlet process by the Polya urn: the `i`-th
/// draw is fresh from `base` with probability `η / (i - 1 + η)` and
/// otherwise copies a uniformly chosen earlier draw.
pub fn polya_urn_sample<T, R, F>(m: usize, concentration: f64, mut base: F, rng: &mut R) -> Vec<T>
where
    T: Clone,
    R: Rng + ?Sized,
    F: FnMut(&mut R) -> T,
{
    let mut draws: Vec<T> = Vec::with_capacity(m);
    for i in 0..m {
        let fresh = concentration / (i as f64 + concentration);
        if i == 0 || rng.random::<f64>() < fresh {
            draws.push(base(rng));
        } else {
            let j = rng.random_range(0..i);
            draws.push(draws[j].clone());
        }
    }
    draws
}

/// `E[#distinct values]` among `m` Polya urn draws, `Σ_{i=1..m} η/(η+i-1)`.
pub fn expected_distinct(m: usize, concentration: f64) -> f64 {
    (1..=m).map(|i| concentration / (concentration + i as f64 - 1.0)).sum()
}
