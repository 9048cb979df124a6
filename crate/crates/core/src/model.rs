//! Likelihood, mixture weights, prior density and latent moments of the
//! infinite location-mixture normal-ogive IRT model.
//!
//! A response is `1(U* > 0)` where, given a design vector `x`,
//!
//! ```text
//! U* | x ~ Σ_j ω_j(x) · N(μ_j + xᵀβ, σ²)
//! ω_j(x) = Φ((j − xᵀβ_ω)/σ_ω) − Φ((j − 1 − xᵀβ_ω)/σ_ω),   j ∈ ℤ
//! ```
//!
//! Only a finite symmetric window of the locations `μ_j` is ever stored.
//! Evaluations work on the window of cells returned by [`weight_window`]
//! and renormalize over it; the discarded mass is below the requested
//! tolerance.

use crate::design::ObservationDesign;
use crate::normal;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

/// Default truncation tolerance for the mixture series.
pub const DEFAULT_EPS: f64 = 1e-10;

const PROB_FLOOR: f64 = 1e-300;
const PROB_CEIL: f64 = 1.0 - 1e-16;

/// Largest weight window materialized before giving up.
pub const MAX_WINDOW_CELLS: u64 = 1 << 22;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("design vector has length {found}, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("mixture cell {needed} lies outside the materialized mu window [-{half_width}, {half_width}]")]
    MuWindowTooNarrow { needed: i64, half_width: usize },
    #[error("weight window of {cells} cells exceeds the limit of {MAX_WINDOW_CELLS} (sigma_omega = {sigma_omega})")]
    WindowTooWide { cells: f64, sigma_omega: f64 },
}

/// Hyperparameters `(b_σμ, v, a₀, v_ω, a_ω)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    /// Upper bound of the uniform prior on σ_μ.
    pub b_sigma_mu: f64,
    /// Prior variance scale of the slope coefficients in β (times σ²).
    pub v: f64,
    /// σ² ~ IG(a₀/2, a₀/2).
    pub a0: f64,
    /// Prior variance scale of β_ω (times σ_ω²).
    pub v_omega: f64,
    /// σ_ω² ~ IG(a_ω/2, a_ω/2).
    pub a_omega: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            b_sigma_mu: 1.0,
            v: 10.0,
            a0: 1000.0,
            v_omega: 1.0,
            a_omega: 0.01,
        }
    }
}

impl PriorConfig {
    pub fn new(
        b_sigma_mu: f64,
        v: f64,
        a0: f64,
        v_omega: f64,
        a_omega: f64,
    ) -> Result<Self, ModelError> {
        let prior = Self {
            b_sigma_mu,
            v,
            a0,
            v_omega,
            a_omega,
        };
        prior.validate()?;
        Ok(prior)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        for (name, value) in [
            ("b_sigma_mu", self.b_sigma_mu),
            ("v", self.v),
            ("a0", self.a0),
            ("v_omega", self.v_omega),
            ("a_omega", self.a_omega),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ModelError::InvalidArgument(format!(
                    "prior parameter {name} must be positive and finite, got {value}"
                )));
            }
        }
        Ok(())
    }
}

/// Locations `μ_j` for `j ∈ [−h, h]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MuWindow {
    half_width: usize,
    values: Vec<f64>,
}

impl MuWindow {
    /// Window `{0}` holding a single location.
    pub fn single(mu0: f64) -> Self {
        Self {
            half_width: 0,
            values: vec![mu0],
        }
    }

    /// Builds a window from values ordered `μ_{−h}, …, μ_h`.
    pub fn from_values(values: Vec<f64>) -> Result<Self, ModelError> {
        if values.len() % 2 != 1 {
            return Err(ModelError::InvalidArgument(format!(
                "a symmetric mu window needs an odd number of values, got {}",
                values.len()
            )));
        }
        Ok(Self {
            half_width: values.len() / 2,
            values,
        })
    }

    pub fn zeros(half_width: usize) -> Self {
        Self {
            half_width,
            values: vec![0.0; 2 * half_width + 1],
        }
    }

    pub fn half_width(&self) -> usize {
        self.half_width
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn contains(&self, j: i64) -> bool {
        j.unsigned_abs() as usize <= self.half_width
    }

    pub fn get(&self, j: i64) -> Option<f64> {
        self.contains(j).then(|| self.values[self.offset(j)])
    }

    pub fn set(&mut self, j: i64, value: f64) {
        assert!(self.contains(j), "mu index {j} outside window");
        let k = self.offset(j);
        self.values[k] = value;
    }

    /// Values ordered from `μ_{−h}` to `μ_h`.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `(j, μ_j)` pairs in increasing `j`.
    pub fn iter(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        let h = self.half_width as i64;
        self.values
            .iter()
            .enumerate()
            .map(move |(k, &m)| (k as i64 - h, m))
    }

    #[inline]
    fn offset(&self, j: i64) -> usize {
        (j + self.half_width as i64) as usize
    }

    /// Grows the window to `[−h, h]`, drawing each new location from
    /// `N(0, σ_μ²)` in the order `μ_{−k}, μ_k` for increasing `k`.
    pub fn extend<R: Rng + ?Sized>(&mut self, half_width: usize, sigma_mu: f64, rng: &mut R) {
        if half_width <= self.half_width {
            return;
        }
        let prior = Normal::new(0.0, sigma_mu).expect("sigma_mu must be positive");
        let old = self.half_width;
        let mut lower = Vec::with_capacity(half_width - old);
        let mut upper = Vec::with_capacity(half_width - old);
        for _ in old + 1..=half_width {
            lower.push(prior.sample(rng));
            upper.push(prior.sample(rng));
        }
        let mut values = Vec::with_capacity(2 * half_width + 1);
        values.extend(lower.into_iter().rev());
        values.extend_from_slice(&self.values);
        values.extend(upper);
        self.values = values;
        self.half_width = half_width;
    }

    /// Drops every location with `|j| > h`.
    pub fn truncate(&mut self, half_width: usize) {
        if half_width >= self.half_width {
            return;
        }
        let cut = self.half_width - half_width;
        self.values.truncate(self.values.len() - cut);
        self.values.drain(..cut);
        self.half_width = half_width;
    }
}

/// One realization of ζ = (μ, σ_μ, β, β_ω, σ², σ_ω²).
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterState {
    pub mu: MuWindow,
    pub sigma_mu: f64,
    pub beta: Vec<f64>,
    pub beta_omega: Vec<f64>,
    pub sigma2: f64,
    pub sigma_omega2: f64,
}

impl ParameterState {
    pub fn dimension(&self) -> usize {
        self.beta.len()
    }

    pub fn sigma(&self) -> f64 {
        self.sigma2.sqrt()
    }

    pub fn sigma_omega(&self) -> f64 {
        self.sigma_omega2.sqrt()
    }

    /// Checks the structural invariants; `b_sigma_mu` bounds σ_μ when given.
    pub fn validate(&self, b_sigma_mu: Option<f64>) -> Result<(), ModelError> {
        if self.beta.len() != self.beta_omega.len() {
            return Err(ModelError::DimensionMismatch {
                expected: self.beta.len(),
                found: self.beta_omega.len(),
            });
        }
        if !(self.sigma_mu > 0.0) || b_sigma_mu.is_some_and(|b| self.sigma_mu > b) {
            return Err(ModelError::InvalidArgument(format!(
                "sigma_mu {} out of range",
                self.sigma_mu
            )));
        }
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(ModelError::InvalidArgument(format!(
                "sigma2 must be positive, got {}",
                self.sigma2
            )));
        }
        if !(self.sigma_omega2 > 0.0 && self.sigma_omega2.is_finite()) {
            return Err(ModelError::InvalidArgument(format!(
                "sigma_omega2 must be positive, got {}",
                self.sigma_omega2
            )));
        }
        Ok(())
    }

    /// Materializes every μ_j that an evaluation at `x` would touch.
    pub fn cover<R: Rng + ?Sized>(
        &mut self,
        x: &[f64],
        eps: f64,
        rng: &mut R,
    ) -> Result<(), ModelError> {
        check_dimension(x, self)?;
        let window = weight_window(dot(x, &self.beta_omega), self.sigma_omega(), eps)?;
        let needed = window.j_lo.unsigned_abs().max(window.j_hi.unsigned_abs()) as usize;
        self.mu.extend(needed, self.sigma_mu, rng);
        Ok(())
    }
}

/// Mixture weights over a finite window of cells plus the mass left outside.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureWeightVector {
    pub j_lo: i64,
    pub j_hi: i64,
    pub weights: Vec<f64>,
    pub tail_mass: f64,
}

impl MixtureWeightVector {
    pub fn iter(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        (self.j_lo..=self.j_hi).zip(self.weights.iter().copied())
    }

    pub fn captured_mass(&self) -> f64 {
        self.weights.iter().sum()
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_sigma_omega(sigma_omega: f64) -> Result<(), ModelError> {
    if sigma_omega > 0.0 && sigma_omega.is_finite() {
        Ok(())
    } else {
        Err(ModelError::InvalidArgument(format!(
            "sigma_omega must be positive, got {sigma_omega}"
        )))
    }
}

fn check_dimension(x: &[f64], zeta: &ParameterState) -> Result<(), ModelError> {
    if x.len() != zeta.beta.len() || x.len() != zeta.beta_omega.len() {
        return Err(ModelError::DimensionMismatch {
            expected: zeta.beta.len(),
            found: x.len(),
        });
    }
    Ok(())
}

/// ω_j: the ordered-probit probability of cell `(j − 1, j]` under `N(eta, σ_ω²)`.
pub fn mixture_weight(j: i64, eta: f64, sigma_omega: f64) -> Result<f64, ModelError> {
    check_sigma_omega(sigma_omega)?;
    Ok(cell_weight(j, eta, sigma_omega))
}

#[inline]
pub(crate) fn cell_weight(j: i64, eta: f64, sigma_omega: f64) -> f64 {
    let shift = j as f64 - eta;
    normal::interval_prob((shift - 1.0) / sigma_omega, shift / sigma_omega)
}

/// ln ω_j, finite for every cell however far from `eta`.
pub fn ln_mixture_weight(j: i64, eta: f64, sigma_omega: f64) -> f64 {
    let shift = j as f64 - eta;
    normal::ln_interval_prob((shift - 1.0) / sigma_omega, shift / sigma_omega)
}

/// The window of cells that together hold at least `1 − eps` of the mass.
pub fn weight_window(
    eta: f64,
    sigma_omega: f64,
    eps: f64,
) -> Result<MixtureWeightVector, ModelError> {
    check_sigma_omega(sigma_omega)?;
    if !(eps > 0.0 && eps < 1.0) {
        return Err(ModelError::InvalidArgument(format!(
            "eps must lie in (0, 1), got {eps}"
        )));
    }
    if !eta.is_finite() {
        return Err(ModelError::InvalidArgument(format!(
            "latent mean must be finite, got {eta}"
        )));
    }
    let z = -normal::quantile(eps / 2.0);
    let cells = 2.0 * z * sigma_omega + 2.0;
    if !(cells <= MAX_WINDOW_CELLS as f64) || !(eta.abs() + z * sigma_omega < i64::MAX as f64 / 2.0)
    {
        return Err(ModelError::WindowTooWide { cells, sigma_omega });
    }
    let j_lo = (eta - z * sigma_omega).floor() as i64;
    let j_hi = (eta + z * sigma_omega).ceil() as i64;
    let weights: Vec<f64> = (j_lo..=j_hi)
        .map(|j| cell_weight(j, eta, sigma_omega))
        .collect();
    // mass below cell j_lo is (−∞, j_lo − 1], above cell j_hi is (j_hi, ∞)
    let tail_mass = normal::cdf((j_lo as f64 - 1.0 - eta) / sigma_omega)
        + normal::sf((j_hi as f64 - eta) / sigma_omega);
    Ok(MixtureWeightVector {
        j_lo,
        j_hi,
        weights,
        tail_mass,
    })
}

/// `(P(U = 1), P(U = 0))` with both computed directly so neither loses
/// precision when the other is close to one.
fn response_pair(x: &[f64], zeta: &ParameterState, eps: f64) -> Result<(f64, f64), ModelError> {
    check_dimension(x, zeta)?;
    let window = weight_window(dot(x, &zeta.beta_omega), zeta.sigma_omega(), eps)?;
    let linear = dot(x, &zeta.beta);
    let sigma = zeta.sigma();
    let (mut p1, mut p0, mut mass) = (0.0, 0.0, 0.0);
    for (j, w) in window.iter() {
        let mu = zeta.mu.get(j).ok_or(ModelError::MuWindowTooNarrow {
            needed: j,
            half_width: zeta.mu.half_width(),
        })?;
        let t = (mu + linear) / sigma;
        p1 += w * normal::cdf(t);
        p0 += w * normal::sf(t);
        mass += w;
    }
    Ok((p1 / mass, p0 / mass))
}

/// P(U = 1 | x; ζ) = Σ_j ω_j(x) Φ((μ_j + xᵀβ)/σ).
///
/// Fails with [`ModelError::MuWindowTooNarrow`] when the weight window
/// reaches a location that has not been materialized; call
/// [`ParameterState::cover`] first.
pub fn response_probability(x: &[f64], zeta: &ParameterState, eps: f64) -> Result<f64, ModelError> {
    let (p1, _) = response_pair(x, zeta, eps)?;
    Ok(p1.clamp(PROB_FLOOR, PROB_CEIL))
}

fn check_response(u: u8) -> Result<(), ModelError> {
    if u > 1 {
        return Err(ModelError::InvalidArgument(format!(
            "response must be 0 or 1, got {u}"
        )));
    }
    Ok(())
}

/// Bernoulli pmf of a binary response.
pub fn observation_pmf(
    u: u8,
    x: &[f64],
    zeta: &ParameterState,
    eps: f64,
) -> Result<f64, ModelError> {
    check_response(u)?;
    let (p1, p0) = response_pair(x, zeta, eps)?;
    Ok(if u == 1 { p1 } else { p0 })
}

/// ln of [`observation_pmf`], clamped away from zero.
pub fn ln_observation_pmf(
    u: u8,
    x: &[f64],
    zeta: &ParameterState,
    eps: f64,
) -> Result<f64, ModelError> {
    check_response(u)?;
    let (p1, p0) = response_pair(x, zeta, eps)?;
    let p = if u == 1 { p1 } else { p0 };
    Ok(p.clamp(PROB_FLOOR, PROB_CEIL).ln())
}

/// Sum of log pmfs over the observed cells of a design.
pub fn data_log_likelihood(
    design: &ObservationDesign,
    zeta: &ParameterState,
    eps: f64,
) -> Result<f64, ModelError> {
    if design.rows.is_empty() {
        return Err(ModelError::InvalidArgument(
            "design has no observations".into(),
        ));
    }
    design
        .rows
        .iter()
        .map(|row| ln_observation_pmf(row.response, &row.x, zeta, eps))
        .sum()
}

/// Mean and variance of the latent `U*` given `x`.
pub fn latent_moments(
    x: &[f64],
    zeta: &ParameterState,
    eps: f64,
) -> Result<(f64, f64), ModelError> {
    check_dimension(x, zeta)?;
    let window = weight_window(dot(x, &zeta.beta_omega), zeta.sigma_omega(), eps)?;
    let linear = dot(x, &zeta.beta);
    let mut locations = Vec::with_capacity(window.weights.len());
    for (j, w) in window.iter() {
        let mu = zeta.mu.get(j).ok_or(ModelError::MuWindowTooNarrow {
            needed: j,
            half_width: zeta.mu.half_width(),
        })?;
        locations.push((mu + linear, w));
    }
    let mass: f64 = locations.iter().map(|&(_, w)| w).sum();
    let mean = locations.iter().map(|&(m, w)| m * w).sum::<f64>() / mass;
    let spread = locations
        .iter()
        .map(|&(m, w)| (m - mean).powi(2) * w)
        .sum::<f64>()
        / mass;
    Ok((mean, spread + zeta.sigma2))
}

/// ln IG(x | shape, rate).
pub fn ln_inverse_gamma_density(x: f64, shape: f64, rate: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    shape * rate.ln() - ln_gamma(shape) - (shape + 1.0) * x.ln() - rate / x
}

/// ln π(ζ) over the materialized locations. The flat intercept contributes
/// nothing; states outside the support give −∞.
pub fn log_prior_density(zeta: &ParameterState, prior: &PriorConfig) -> f64 {
    if !(zeta.sigma_mu > 0.0 && zeta.sigma_mu <= prior.b_sigma_mu)
        || zeta.sigma2 <= 0.0
        || zeta.sigma_omega2 <= 0.0
    {
        return f64::NEG_INFINITY;
    }
    let var_mu = zeta.sigma_mu * zeta.sigma_mu;
    let mu_term: f64 = zeta
        .mu
        .values()
        .iter()
        .map(|&m| normal::ln_density(m, 0.0, var_mu))
        .sum();
    let sigma_mu_term = -prior.b_sigma_mu.ln();
    let slope_var = zeta.sigma2 * prior.v;
    let beta_term: f64 = zeta
        .beta
        .iter()
        .skip(1)
        .map(|&b| normal::ln_density(b, 0.0, slope_var))
        .sum();
    let omega_var = zeta.sigma_omega2 * prior.v_omega;
    let omega_term: f64 = zeta
        .beta_omega
        .iter()
        .map(|&b| normal::ln_density(b, 0.0, omega_var))
        .sum();
    mu_term
        + sigma_mu_term
        + beta_term
        + omega_term
        + ln_inverse_gamma_density(zeta.sigma2, prior.a0 / 2.0, prior.a0 / 2.0)
        + ln_inverse_gamma_density(zeta.sigma_omega2, prior.a_omega / 2.0, prior.a_omega / 2.0)
}
