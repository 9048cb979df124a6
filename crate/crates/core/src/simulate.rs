//! Forward simulation from the generative model: parameter draws from the
//! prior, latent variables and responses given ζ, and synthetic item
//! response data sets with known truth.

use crate::design::{build_dichotomous, ItemResponseData, Observation, ObservationDesign};
use crate::model::{self, ModelError, MuWindow, ParameterState, PriorConfig};
use crate::sampler::{slice_bound, xi, LatentState};
use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};

fn inverse_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    1.0 / Gamma::new(shape, 1.0 / rate)
        .expect("positive shape and rate")
        .sample(rng)
}

/// ζ from the prior with μ materialized on `[−h, h]`. With
/// `flat_intercept` the first β coordinate has no proper prior and is set
/// to zero.
pub fn draw_prior<R: Rng + ?Sized>(
    dimension: usize,
    prior: &PriorConfig,
    half_width: usize,
    flat_intercept: bool,
    rng: &mut R,
) -> ParameterState {
    let sigma_mu = loop {
        let s = prior.b_sigma_mu * rng.random::<f64>();
        if s > 0.0 {
            break s;
        }
    };
    let sigma2 = inverse_gamma(prior.a0 / 2.0, prior.a0 / 2.0, rng);
    let sigma_omega2 = inverse_gamma(prior.a_omega / 2.0, prior.a_omega / 2.0, rng);
    let beta_sd = (sigma2 * prior.v).sqrt();
    let omega_sd = (sigma_omega2 * prior.v_omega).sqrt();
    let beta = (0..dimension)
        .map(|k| {
            if k == 0 && flat_intercept {
                0.0
            } else {
                beta_sd * rng.sample::<f64, _>(rand_distr::StandardNormal)
            }
        })
        .collect();
    let beta_omega = (0..dimension)
        .map(|_| omega_sd * rng.sample::<f64, _>(rand_distr::StandardNormal))
        .collect();
    let mut mu = MuWindow::single(Normal::new(0.0, sigma_mu).unwrap().sample(rng));
    mu.extend(half_width, sigma_mu, rng);
    ParameterState {
        mu,
        sigma_mu,
        beta,
        beta_omega,
        sigma2,
        sigma_omega2,
    }
}

/// Latent variables and binary responses given ζ, following the
/// generative order `z* → z = ⌈z*⌉ → u* → u`, plus the slice variables
/// `u̲ ~ U(0, ξ_{|z|})`. Locations reached by `z` outside the window are
/// drawn from the prior, so `zeta.mu` may grow.
pub fn simulate_latents<R: Rng + ?Sized>(
    xs: &[&[f64]],
    zeta: &mut ParameterState,
    rng: &mut R,
) -> Result<(LatentState, Vec<u8>), ModelError> {
    zeta.validate(None)?;
    let n = xs.len();
    let (sigma, sigma_omega) = (zeta.sigma(), zeta.sigma_omega());
    let mut latent = LatentState {
        u_slice: Vec::with_capacity(n),
        z: Vec::with_capacity(n),
        u_star: Vec::with_capacity(n),
        z_star: Vec::with_capacity(n),
        n_max: 0,
    };
    let mut responses = Vec::with_capacity(n);
    for x in xs {
        if x.len() != zeta.dimension() {
            return Err(ModelError::DimensionMismatch {
                expected: zeta.dimension(),
                found: x.len(),
            });
        }
        let mut z_star = model::dot(x, &zeta.beta_omega)
            + sigma_omega * rng.sample::<f64, _>(rand_distr::StandardNormal);
        let mut z = z_star.ceil();
        if z == z_star {
            // measure-zero boundary; nudge inside (z − 1, z)
            z_star = z - 0.5;
            z = z_star.ceil();
        }
        let z = z as i64;
        zeta.mu
            .extend(z.unsigned_abs() as usize, zeta.sigma_mu, rng);
        let mean = zeta.mu.get(z).unwrap() + model::dot(x, &zeta.beta);
        let u_star = loop {
            let v = mean + sigma * rng.sample::<f64, _>(rand_distr::StandardNormal);
            if v != 0.0 {
                break v;
            }
        };
        let u_slice = loop {
            let v = xi(z.unsigned_abs() as usize) * rng.random::<f64>();
            if v > 0.0 {
                break v;
            }
        };
        latent.n_max = latent.n_max.max(slice_bound(u_slice));
        latent.u_slice.push(u_slice);
        latent.z.push(z);
        latent.u_star.push(u_star);
        latent.z_star.push(z_star);
        responses.push(u8::from(u_star > 0.0));
    }
    Ok((latent, responses))
}

/// True parameter settings for [`simulate_responses`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthSpec {
    /// θ_p ~ N(0, ability_sd²).
    pub ability_sd: f64,
    /// b_i ~ N(0, difficulty_sd²).
    pub difficulty_sd: f64,
    pub sigma2: f64,
    /// Scale of the μ_j; ignored when `zero_mu` is set.
    pub sigma_mu: f64,
    pub sigma_omega2: f64,
    /// Forces every μ_j to 0, giving the normal-ogive Rasch model.
    pub zero_mu: bool,
}

impl Default for TruthSpec {
    fn default() -> Self {
        Self {
            ability_sd: 1.0,
            difficulty_sd: 1.0,
            sigma2: 1.0,
            sigma_mu: 0.5,
            sigma_omega2: 1.0,
            zero_mu: false,
        }
    }
}

impl TruthSpec {
    pub fn validate(&self) -> Result<(), ModelError> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(ModelError::InvalidArgument(format!(
                    "{name} must be positive and finite, got {v}"
                )))
            }
        };
        positive("sigma2", self.sigma2)?;
        positive("sigma_omega2", self.sigma_omega2)?;
        positive("sigma_mu", self.sigma_mu)?;
        for (name, v) in [
            ("ability_sd", self.ability_sd),
            ("difficulty_sd", self.difficulty_sd),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(ModelError::InvalidArgument(format!(
                    "{name} must be nonnegative and finite, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Where the true ζ of a simulation comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum TruthSource {
    Spec(TruthSpec),
    /// Draw ζ from the prior; the intercept is fixed at zero.
    Prior(PriorConfig),
    /// Use this ζ as given; its dimension must match the dichotomous design.
    Fixed(ParameterState),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulated {
    pub data: ItemResponseData,
    pub design: ObservationDesign,
    /// ζ used to generate the responses, μ grown to cover every cell.
    pub zeta: ParameterState,
}

/// Complete `n_persons × n_items` dichotomous data set. Each response is a
/// Bernoulli draw with the model's response probability.
pub fn simulate_responses<R: Rng + ?Sized>(
    n_persons: usize,
    n_items: usize,
    source: &TruthSource,
    eps: f64,
    rng: &mut R,
) -> Result<Simulated, ModelError> {
    if n_persons == 0 || n_items == 0 {
        return Err(ModelError::InvalidArgument(format!(
            "need at least one person and one item, got {n_persons} × {n_items}"
        )));
    }
    let dimension = 1 + n_persons + n_items;
    let mut zeta = match source {
        TruthSource::Spec(spec) => {
            spec.validate()?;
            let mut beta = vec![0.0; dimension];
            for b in beta.iter_mut().skip(1).take(n_persons) {
                *b = spec.ability_sd * rng.sample::<f64, _>(rand_distr::StandardNormal);
            }
            for b in beta.iter_mut().skip(1 + n_persons) {
                *b = spec.difficulty_sd * rng.sample::<f64, _>(rand_distr::StandardNormal);
            }
            let mu = if spec.zero_mu {
                MuWindow::zeros(0)
            } else {
                MuWindow::single(spec.sigma_mu * rng.sample::<f64, _>(rand_distr::StandardNormal))
            };
            ParameterState {
                mu,
                sigma_mu: spec.sigma_mu,
                beta,
                beta_omega: vec![0.0; dimension],
                sigma2: spec.sigma2,
                sigma_omega2: spec.sigma_omega2,
            }
        }
        TruthSource::Prior(prior) => {
            prior.validate()?;
            draw_prior(dimension, prior, 0, true, rng)
        }
        TruthSource::Fixed(z) => {
            z.validate(None)?;
            if z.dimension() != dimension {
                return Err(ModelError::DimensionMismatch {
                    expected: dimension,
                    found: z.dimension(),
                });
            }
            z.clone()
        }
    };
    let zero_mu = matches!(source, TruthSource::Spec(s) if s.zero_mu);

    let observations: Vec<Observation> = (0..n_persons)
        .flat_map(|p| {
            (0..n_items).map(move |i| Observation {
                person: p,
                item: i,
                score: 0,
            })
        })
        .collect();
    let skeleton = ItemResponseData::from_observations(n_persons, n_items, observations.clone())
        .map_err(|e| ModelError::InvalidArgument(e.to_string()))?;
    let template =
        build_dichotomous(&skeleton).map_err(|e| ModelError::InvalidArgument(e.to_string()))?;

    let mut scored = Vec::with_capacity(observations.len());
    for (o, row) in observations.iter().zip(&template.rows) {
        let window = model::weight_window(
            model::dot(&row.x, &zeta.beta_omega),
            zeta.sigma_omega(),
            eps,
        )?;
        let need = window.j_lo.unsigned_abs().max(window.j_hi.unsigned_abs()) as usize;
        if zero_mu {
            if need > zeta.mu.half_width() {
                zeta.mu = MuWindow::zeros(need);
            }
        } else {
            zeta.mu.extend(need, zeta.sigma_mu, rng);
        }
        let p = model::response_probability(&row.x, &zeta, eps)?;
        scored.push(Observation {
            score: u32::from(rng.random::<f64>() < p),
            ..*o
        });
    }
    let data = ItemResponseData::from_observations(n_persons, n_items, scored)
        .map_err(|e| ModelError::InvalidArgument(e.to_string()))?;
    let design =
        build_dichotomous(&data).map_err(|e| ModelError::InvalidArgument(e.to_string()))?;
    Ok(Simulated { data, design, zeta })
}
