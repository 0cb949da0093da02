//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use klsurv::{CovariateSchema, Link, ParamVector, SubjectRecord, SurvivalDataset};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Hazard computed from the textbook inverse-link formulas, no clamping.
pub fn oracle_hazard(link: Link, x: f64) -> f64 {
    match link {
        Link::Logit => 1.0 / (1.0 + (-x).exp()),
        Link::Log => x.exp(),
        Link::Cloglog => 1.0 - (-(x.exp())).exp(),
    }
}

/// Product over periods of `prod_{R_k - D_k} (1 - h_ik) * prod_{D_k} h_ik`,
/// with risk and death sets enumerated straight from the subject records.
pub fn product_form_likelihood(data: &SurvivalDataset, params: &ParamVector, link: Link) -> f64 {
    let mut l = 1.0;
    for k in 1..=data.tau() {
        let risk: Vec<&SubjectRecord> = data.subjects().iter().filter(|s| s.observed_time >= k).collect();
        for s in risk {
            let xb: f64 = s.covariates.iter().zip(&params.beta).map(|(a, b)| a * b).sum();
            let h = oracle_hazard(link, params.eta[k - 1] + xb);
            let dies_now = s.event && s.observed_time == k;
            l *= if dies_now { h } else { 1.0 - h };
        }
    }
    l
}

pub fn random_dataset(rng: &mut ChaCha8Rng, n: usize, tau: usize, p: usize) -> SurvivalDataset {
    let subjects = (0..n)
        .map(|i| {
            let t = rng.random_range(1..=tau);
            let e = rng.random_bool(0.5);
            let x = (0..p).map(|_| rng.random_range(-1.0..1.0)).collect();
            SubjectRecord::new(format!("s{i}"), t, e, x)
        })
        .collect();
    SurvivalDataset::new(CovariateSchema::numbered(p), subjects, tau).unwrap()
}

/// Parameters keeping every linear predictor admissible for `link` when |x| <= 1.
pub fn random_params(rng: &mut ChaCha8Rng, tau: usize, p: usize, link: Link) -> ParamVector {
    let (lo, hi) = match link {
        Link::Log => (-3.0, -1.5),
        _ => (-2.0, 1.0),
    };
    let bmax = if link == Link::Log { 0.3 / p.max(1) as f64 } else { 1.0 };
    ParamVector::new(
        (0..tau).map(|_| rng.random_range(lo..hi)).collect(),
        (0..p).map(|_| rng.random_range(-bmax..bmax)).collect(),
    )
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Central differences of a scalar function.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut up = x.to_vec();
            let mut dn = x.to_vec();
            up[i] += h;
            dn[i] -= h;
            (f(&up) - f(&dn)) / (2.0 * h)
        })
        .collect()
}

/// Central differences of a vector function; row `i` is the derivative in `x_i`.
pub fn fd_jacobian(f: impl Fn(&[f64]) -> Vec<f64>, x: &[f64], h: f64) -> Vec<Vec<f64>> {
    (0..x.len())
        .map(|i| {
            let mut up = x.to_vec();
            let mut dn = x.to_vec();
            up[i] += h;
            dn[i] -= h;
            f(&up).iter().zip(f(&dn)).map(|(a, b)| (a - b) / (2.0 * h)).collect()
        })
        .collect()
}

/// `|a - b| <= tol * max(1, |a|, |b|)`.
pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * 1f64.max(a.abs()).max(b.abs())
}
