//! Shared oracles for the integration tests.
#![allow(dead_code)]

use bnpirt::design::DesignRow;
use bnpirt::sampler::slice_bound;
use bnpirt::simulate::{simulate_responses, TruthSource, TruthSpec};
use bnpirt::{
    run_chain, ChainConfig, ColumnLabel, LatentState, MuWindow, ObservationDesign, ParameterState,
    PriorConfig, DEFAULT_EPS,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Design with one row per `xs` entry and the given column labels.
pub fn toy_design(xs: &[&[f64]], responses: &[u8], labels: Vec<ColumnLabel>) -> ObservationDesign {
    let rows = xs
        .iter()
        .zip(responses)
        .enumerate()
        .map(|(k, (x, &u))| DesignRow {
            person: k,
            item: 0,
            response: u,
            score: u32::from(u),
            x: x.to_vec(),
        })
        .collect();
    ObservationDesign {
        rows,
        dimension: labels.len(),
        column_labels: labels,
        warnings: Vec::new(),
    }
}

pub fn covariates(n: usize) -> Vec<ColumnLabel> {
    (0..n)
        .map(|k| ColumnLabel::Covariate(format!("x{k}")))
        .collect()
}

pub fn state(
    mu: Vec<f64>,
    sigma_mu: f64,
    beta: Vec<f64>,
    beta_omega: Vec<f64>,
    sigma2: f64,
    sigma_omega2: f64,
) -> ParameterState {
    ParameterState {
        mu: MuWindow::from_values(mu).unwrap(),
        sigma_mu,
        beta,
        beta_omega,
        sigma2,
        sigma_omega2,
    }
}

pub fn latent(u_slice: Vec<f64>, z: Vec<i64>, u_star: Vec<f64>, z_star: Vec<f64>) -> LatentState {
    let n_max = u_slice.iter().map(|&u| slice_bound(u)).max().unwrap();
    LatentState {
        u_slice,
        z,
        u_star,
        z_star,
        n_max,
    }
}

pub fn config(seed: u64, prior: PriorConfig) -> ChainConfig {
    ChainConfig {
        iterations: 10,
        burn_in: 0,
        thin: 1,
        seed,
        prior,
        eps: DEFAULT_EPS,
    }
}

/// Asymptotic Kolmogorov survival function P(K > t).
pub fn kolmogorov_sf(t: f64) -> f64 {
    if t < 0.2 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = 2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * t * t).exp();
        s += term;
        if term.abs() < 1e-16 {
            break;
        }
    }
    s.clamp(0.0, 1.0)
}

/// One-sample KS p-value of `xs` against `cdf`.
pub fn ks_one_sample(xs: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let d = v
        .iter()
        .enumerate()
        .map(|(k, &x)| {
            let f = cdf(x);
            (f - k as f64 / n).max((k + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max);
    let sn = n.sqrt();
    kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d)
}

/// Two-sample KS p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let ne = (na * nb / (na + nb)).sqrt();
    kolmogorov_sf((ne + 0.12 + 0.11 / ne) * d)
}

/// Pearson chi-square p-value of observed counts against probabilities.
pub fn chi_square_p(counts: &[u64], probs: &[f64]) -> f64 {
    let n: u64 = counts.iter().sum();
    let stat: f64 = counts
        .iter()
        .zip(probs)
        .map(|(&c, &p)| {
            let e = p * n as f64;
            (c as f64 - e).powi(2) / e
        })
        .sum();
    ChiSquared::new((counts.len() - 1) as f64).unwrap().sf(stat)
}

/// CDF of a density tabulated on a uniform grid, by the trapezoid rule.
pub struct GridCdf {
    xs: Vec<f64>,
    cdf: Vec<f64>,
}

impl GridCdf {
    pub fn new(lo: f64, hi: f64, n: usize, ln_f: impl Fn(f64) -> f64) -> Self {
        let h = (hi - lo) / (n - 1) as f64;
        let xs: Vec<f64> = (0..n).map(|k| lo + k as f64 * h).collect();
        let ln: Vec<f64> = xs.iter().map(|&x| ln_f(x)).collect();
        let top = ln
            .iter()
            .copied()
            .filter(|v| v.is_finite())
            .fold(f64::NEG_INFINITY, f64::max);
        let f: Vec<f64> = ln
            .iter()
            .map(|&v| if v.is_finite() { (v - top).exp() } else { 0.0 })
            .collect();
        let mut cdf = vec![0.0; n];
        for k in 1..n {
            cdf[k] = cdf[k - 1] + 0.5 * h * (f[k] + f[k - 1]);
        }
        let total = cdf[n - 1];
        cdf.iter_mut().for_each(|c| *c /= total);
        Self { xs, cdf }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let (lo, hi) = (self.xs[0], *self.xs.last().unwrap());
        if x <= lo {
            return 0.0;
        }
        if x >= hi {
            return 1.0;
        }
        let h = self.xs[1] - lo;
        let k = ((x - lo) / h).floor() as usize;
        let t = (x - self.xs[k]) / h;
        self.cdf[k] + t * (self.cdf[k + 1] - self.cdf[k])
    }

    /// Inverse of [`GridCdf::eval`], for drawing exact starting points.
    pub fn quantile(&self, u: f64) -> f64 {
        let k = self
            .cdf
            .partition_point(|&c| c < u)
            .clamp(1, self.cdf.len() - 1);
        let (c0, c1) = (self.cdf[k - 1], self.cdf[k]);
        let t = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.5 };
        self.xs[k - 1] + t * (self.xs[k] - self.xs[k - 1])
    }
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut k = 0;
    while k < idx.len() {
        let mut m = k;
        while m + 1 < idx.len() && v[idx[m + 1]] == v[idx[k]] {
            m += 1;
        }
        let avg = (k + m) as f64 / 2.0;
        for &i in &idx[k..=m] {
            r[i] = avg;
        }
        k = m + 1;
    }
    r
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    sab / (saa * sbb).sqrt()
}

pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    pearson(&ranks(a), &ranks(b))
}

pub const RECOVERY_PERSONS: usize = 200;
pub const RECOVERY_ITEMS: usize = 10;
pub const RECOVERY_ITERATIONS: usize = 20_000;

/// Simulates an N=200, I=10 dichotomous set with θ ~ N(0, 1), fits it for
/// 20,000 iterations, and returns the rank correlation between true and
/// posterior-mean abilities.
pub fn recovery_rank_correlation(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sim = simulate_responses(
        RECOVERY_PERSONS,
        RECOVERY_ITEMS,
        &TruthSource::Spec(TruthSpec::default()),
        DEFAULT_EPS,
        &mut rng,
    )
    .unwrap();
    let config = ChainConfig {
        iterations: RECOVERY_ITERATIONS,
        burn_in: 2_000,
        thin: 5,
        seed,
        ..Default::default()
    };
    let samples = run_chain(&sim.design, &config).unwrap();
    let cols = sim.design.ability_columns();
    let est: Vec<f64> = cols
        .iter()
        .map(|&c| samples.draws.iter().map(|d| d.beta[c]).sum::<f64>() / samples.len() as f64)
        .collect();
    let truth: Vec<f64> = cols.iter().map(|&c| sim.zeta.beta[c]).collect();
    spearman(&truth, &est)
}
