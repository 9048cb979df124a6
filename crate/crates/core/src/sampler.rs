//! Latent-variable slice-sampling Gibbs chain.
//!
//! Each observed cell carries a slice variable `u̲`, a mixture index `z`, the
//! latent response `u*`, and the latent ordered-probit score `z*`. Given the
//! slice variables only the indices `|j| ≤ N_max` are reachable, so every
//! sweep works on a finite set of locations `μ_j`.
//!
//! One sweep updates, in order:
//!
//! ```text
//! u̲ → N_max → z → u* → μ → σ_μ → β → σ² → z* → β_ω → σ_ω²
//! ```
//!
//! `z` is drawn with `z*` integrated out; nothing between the `z` and `z*`
//! updates depends on `z*`.
//!
//! Every update type draws from its own ChaCha8 stream derived from the
//! master seed, so a chain is a pure function of `(design, config)`.

use crate::design::{ColumnLabel, ObservationDesign};
use crate::model::{self, MuWindow, ParameterState, PriorConfig};
use crate::normal;
use crate::slice::{slice_step, SliceCounts};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplerError {
    #[error("design has no observations")]
    EmptyDesign,
    #[error("invalid chain configuration: {0}")]
    InvalidConfig(String),
    #[error("precision matrix is singular; columns without information: {}", columns.join(", "))]
    SingularPrecision { columns: Vec<String> },
    #[error("non-finite {variable} after iteration {iteration}")]
    NonFinite { iteration: usize, variable: String },
    #[error(transparent)]
    Model(#[from] model::ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub prior: PriorConfig,
    /// Truncation tolerance used when evaluating the mixture series.
    pub eps: f64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            iterations: 62_000,
            burn_in: 2_000,
            thin: 5,
            seed: 0,
            prior: PriorConfig::default(),
            eps: model::DEFAULT_EPS,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<(), SamplerError> {
        if self.iterations == 0 {
            return Err(SamplerError::InvalidConfig(
                "iterations must be positive".into(),
            ));
        }
        if self.burn_in >= self.iterations {
            return Err(SamplerError::InvalidConfig(format!(
                "burn-in {} must be smaller than iterations {}",
                self.burn_in, self.iterations
            )));
        }
        if self.thin == 0 {
            return Err(SamplerError::InvalidConfig(
                "thin must be at least 1".into(),
            ));
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(SamplerError::InvalidConfig(format!(
                "eps must lie in (0, 1), got {}",
                self.eps
            )));
        }
        self.prior.validate()?;
        Ok(())
    }

    /// `⌊(iterations − burn_in) / thin⌋`.
    pub fn stored_draws(&self) -> usize {
        (self.iterations - self.burn_in) / self.thin
    }
}

/// Random stream assignment, one per update type.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Init = 0,
    USlice,
    Z,
    UStar,
    Mu,
    SigmaMu,
    Beta,
    Sigma2,
    ZStar,
    BetaOmega,
    SigmaOmega2,
    MuExtension,
    /// Used after sampling to materialize locations needed for prediction.
    Predictive,
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Seed of chain `k` in a multi-chain run; chain 0 keeps the master seed.
pub fn derived_seed(seed: u64, chain: usize) -> u64 {
    seed.wrapping_add((chain as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

struct Streams {
    u_slice: ChaCha8Rng,
    z: ChaCha8Rng,
    u_star: ChaCha8Rng,
    mu: ChaCha8Rng,
    sigma_mu: ChaCha8Rng,
    beta: ChaCha8Rng,
    sigma2: ChaCha8Rng,
    z_star: ChaCha8Rng,
    beta_omega: ChaCha8Rng,
    sigma_omega2: ChaCha8Rng,
    mu_extension: ChaCha8Rng,
}

impl Streams {
    fn new(seed: u64) -> Self {
        Self {
            u_slice: stream_rng(seed, Stream::USlice),
            z: stream_rng(seed, Stream::Z),
            u_star: stream_rng(seed, Stream::UStar),
            mu: stream_rng(seed, Stream::Mu),
            sigma_mu: stream_rng(seed, Stream::SigmaMu),
            beta: stream_rng(seed, Stream::Beta),
            sigma2: stream_rng(seed, Stream::Sigma2),
            z_star: stream_rng(seed, Stream::ZStar),
            beta_omega: stream_rng(seed, Stream::BetaOmega),
            sigma_omega2: stream_rng(seed, Stream::SigmaOmega2),
            mu_extension: stream_rng(seed, Stream::MuExtension),
        }
    }
}

/// ξ_l = exp(−l).
#[inline]
pub fn xi(l: usize) -> f64 {
    (-(l as f64)).exp()
}

/// Largest `l` with `ξ_l > u`: every index reachable from slice value `u`
/// satisfies `|j| ≤ slice_bound(u)`.
pub fn slice_bound(u: f64) -> usize {
    debug_assert!(u > 0.0 && u < 1.0, "slice value {u} outside (0, 1)");
    let mut l = ((-u.ln()).ceil() as usize).saturating_sub(1);
    while xi(l + 1) > u {
        l += 1;
    }
    while l > 0 && xi(l) <= u {
        l -= 1;
    }
    l
}

/// N_max: the bound on `|z|` implied by the smallest slice variable.
pub fn compute_n_max(u_slice: &[f64]) -> usize {
    let min = u_slice.iter().copied().fold(1.0, f64::min);
    if min >= 1.0 {
        return 0;
    }
    slice_bound(min)
}

/// Per-cell latent variables, indexed like the design rows.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentState {
    pub u_slice: Vec<f64>,
    pub z: Vec<i64>,
    pub u_star: Vec<f64>,
    pub z_star: Vec<f64>,
    pub n_max: usize,
}

impl LatentState {
    /// Checks slice bounds, the `u*` sign constraint, the `z*` cell
    /// constraint, and `|z| ≤ N_max`. Returns the first violation.
    pub fn check(&self, responses: &[u8]) -> Result<(), String> {
        for (r, &u) in responses.iter().enumerate() {
            let z = self.z[r];
            let us = self.u_slice[r];
            if !(us > 0.0 && us < xi(z.unsigned_abs() as usize)) {
                return Err(format!(
                    "cell {r}: slice value {us} not in (0, xi_{})",
                    z.abs()
                ));
            }
            if (u == 1) != (self.u_star[r] > 0.0) {
                return Err(format!(
                    "cell {r}: u* = {} inconsistent with response {u}",
                    self.u_star[r]
                ));
            }
            let zs = self.z_star[r];
            if !(((z - 1) as f64) < zs && zs < z as f64) {
                return Err(format!("cell {r}: z* = {zs} outside ({}, {z})", z - 1));
            }
            if z.unsigned_abs() as usize > self.n_max {
                return Err(format!(
                    "cell {r}: |z| = {} exceeds N_max = {}",
                    z.abs(),
                    self.n_max
                ));
            }
        }
        Ok(())
    }
}

/// Counters accumulated over a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SamplerStats {
    pub sweeps: u64,
    pub sigma_mu_evaluations: u64,
    pub sigma_mu_step_outs: u64,
    pub sigma_mu_shrinks: u64,
    /// Locations drawn from the prior when the window grew.
    pub mu_extensions: u64,
    /// Largest N_max seen.
    pub max_n_max: usize,
    /// Times a precision factorization needed diagonal jitter.
    pub jitter_events: u64,
}

/// Posterior of the coefficients in `y = Xb + e`, `e ~ N(0, s²)`, prior
/// precision `diag(prior_precision)/s²`. The factor of
/// `XᵀX + diag(prior_precision)` is computed once and reused across draws,
/// since the noise scale multiplies prior and likelihood alike.
#[derive(Debug, Clone)]
pub struct ConjugateLinearSystem {
    chol: Cholesky<f64, Dyn>,
    jittered: bool,
}

const JITTER: f64 = 1e-12;

impl ConjugateLinearSystem {
    pub fn new(
        gram: DMatrix<f64>,
        prior_precision: &[f64],
        labels: &[String],
    ) -> Result<Self, SamplerError> {
        let d = prior_precision.len();
        assert_eq!(gram.nrows(), d);
        let mut a = gram;
        for k in 0..d {
            a[(k, k)] += prior_precision[k];
        }
        let empty: Vec<String> = (0..d)
            .filter(|&k| a[(k, k)] <= 0.0)
            .map(|k| {
                labels
                    .get(k)
                    .cloned()
                    .unwrap_or_else(|| format!("column {k}"))
            })
            .collect();
        if !empty.is_empty() {
            return Err(SamplerError::SingularPrecision { columns: empty });
        }
        if let Some(chol) = a.clone().cholesky() {
            return Ok(Self {
                chol,
                jittered: false,
            });
        }
        let scale = (0..d).map(|k| a[(k, k)]).fold(1.0, f64::max);
        for k in 0..d {
            a[(k, k)] += JITTER * scale;
        }
        log::warn!(
            "precision matrix not positive definite; added {:e} diagonal jitter",
            JITTER * scale
        );
        match a.cholesky() {
            Some(chol) => Ok(Self {
                chol,
                jittered: true,
            }),
            None => Err(SamplerError::SingularPrecision {
                columns: labels.to_vec(),
            }),
        }
    }

    pub fn jittered(&self) -> bool {
        self.jittered
    }

    /// Posterior mean for right-hand side `Xᵀy`.
    pub fn mean(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(rhs)
    }

    /// Draw from `N(mean, s² (XᵀX + diag(prior))⁻¹)` with `s = scale`.
    pub fn draw<R: Rng + ?Sized>(
        &self,
        rhs: &DVector<f64>,
        scale: f64,
        rng: &mut R,
    ) -> DVector<f64> {
        let d = rhs.len();
        let noise = DVector::from_iterator(d, (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let offset = self
            .chol
            .l_dirty()
            .tr_solve_lower_triangular(&noise)
            .expect("Cholesky factor has a zero pivot");
        self.mean(rhs) + offset * scale
    }
}

type SparseRow = Vec<(usize, f64)>;

fn sparse_rows(design: &ObservationDesign) -> Vec<SparseRow> {
    design
        .rows
        .iter()
        .map(|r| {
            r.x.iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(k, &v)| (k, v))
                .collect()
        })
        .collect()
}

#[inline]
fn sparse_dot(row: &SparseRow, coef: &[f64]) -> f64 {
    row.iter().map(|&(k, v)| v * coef[k]).sum()
}

fn gram(rows: &[SparseRow], d: usize) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(d, d);
    for row in rows {
        for &(a, va) in row {
            for &(b, vb) in row {
                g[(a, b)] += va * vb;
            }
        }
    }
    g
}

fn draw_inverse_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    1.0 / Gamma::new(shape, 1.0 / rate)
        .expect("positive gamma parameters")
        .sample(rng)
}

/// Gibbs sampler state for one chain.
pub struct Sampler<'a> {
    design: &'a ObservationDesign,
    rows: Vec<SparseRow>,
    responses: Vec<u8>,
    prior: PriorConfig,
    zeta: ParameterState,
    latent: LatentState,
    beta_system: ConjugateLinearSystem,
    omega_system: ConjugateLinearSystem,
    flat_intercept: bool,
    linear: Vec<f64>,
    omega_linear: Vec<f64>,
    streams: Streams,
    stats: SamplerStats,
}

impl<'a> Sampler<'a> {
    /// Sets up the chain at the default starting point: β = β_ω = 0,
    /// σ² = σ_ω² = 1, σ_μ = b_σμ/2, z = 0, μ_0 from its prior, u̲ ~ U(0,1),
    /// and one truncated-normal draw for each `u*` and `z*`.
    pub fn new(design: &'a ObservationDesign, config: &ChainConfig) -> Result<Self, SamplerError> {
        config.validate()?;
        if design.rows.is_empty() {
            return Err(SamplerError::EmptyDesign);
        }
        let d = design.dimension;
        let rows = sparse_rows(design);
        let labels = design.label_strings();
        let g = gram(&rows, d);
        let prior = config.prior;
        let flat_intercept = design.column_labels.first() == Some(&ColumnLabel::Intercept);
        let mut beta_precision = vec![1.0 / prior.v; d];
        if flat_intercept {
            beta_precision[0] = 0.0;
        }
        let beta_system = ConjugateLinearSystem::new(g.clone(), &beta_precision, &labels)?;
        let omega_system = ConjugateLinearSystem::new(g, &vec![1.0 / prior.v_omega; d], &labels)?;

        let mut init = stream_rng(config.seed, Stream::Init);
        let sigma_mu = prior.b_sigma_mu / 2.0;
        let mu0 = Normal::new(0.0, sigma_mu).unwrap().sample(&mut init);
        let zeta = ParameterState {
            mu: MuWindow::single(mu0),
            sigma_mu,
            beta: vec![0.0; d],
            beta_omega: vec![0.0; d],
            sigma2: 1.0,
            sigma_omega2: 1.0,
        };
        let n = rows.len();
        let responses: Vec<u8> = design.rows.iter().map(|r| r.response).collect();
        let u_slice: Vec<f64> = (0..n).map(|_| init.sample(Open01)).collect();
        let u_star = responses
            .iter()
            .map(|&u| {
                let (lo, hi) = if u == 1 {
                    (0.0, f64::INFINITY)
                } else {
                    (f64::NEG_INFINITY, 0.0)
                };
                normal::sample_truncated(mu0, 1.0, lo, hi, &mut init)
            })
            .collect();
        let z_star = (0..n)
            .map(|_| normal::sample_truncated(0.0, 1.0, -1.0, 0.0, &mut init))
            .collect();
        let latent = LatentState {
            n_max: compute_n_max(&u_slice),
            u_slice,
            z: vec![0; n],
            u_star,
            z_star,
        };

        let mut stats = SamplerStats::default();
        stats.jitter_events +=
            u64::from(beta_system.jittered()) + u64::from(omega_system.jittered());
        let mut sampler = Self {
            design,
            rows,
            responses,
            prior,
            zeta,
            latent,
            beta_system,
            omega_system,
            flat_intercept,
            linear: vec![0.0; n],
            omega_linear: vec![0.0; n],
            streams: Streams::new(config.seed),
            stats,
        };
        sampler.refresh_linear();
        Ok(sampler)
    }

    pub fn design(&self) -> &ObservationDesign {
        self.design
    }

    pub fn zeta(&self) -> &ParameterState {
        &self.zeta
    }

    pub fn latent(&self) -> &LatentState {
        &self.latent
    }

    pub fn responses(&self) -> &[u8] {
        &self.responses
    }

    pub fn stats(&self) -> &SamplerStats {
        &self.stats
    }

    /// Replaces the parameter and latent state (and optionally the binary
    /// responses). The design vectors stay fixed.
    pub fn set_state(
        &mut self,
        zeta: ParameterState,
        latent: LatentState,
        responses: Option<Vec<u8>>,
    ) -> Result<(), SamplerError> {
        zeta.validate(Some(self.prior.b_sigma_mu))?;
        if zeta.dimension() != self.design.dimension {
            return Err(model::ModelError::DimensionMismatch {
                expected: self.design.dimension,
                found: zeta.dimension(),
            }
            .into());
        }
        let n = self.rows.len();
        if [
            latent.u_slice.len(),
            latent.z.len(),
            latent.u_star.len(),
            latent.z_star.len(),
        ]
        .iter()
        .any(|&l| l != n)
        {
            return Err(SamplerError::InvalidConfig(format!(
                "latent state must cover {n} cells"
            )));
        }
        if let Some(resp) = responses {
            if resp.len() != n || resp.iter().any(|&u| u > 1) {
                return Err(SamplerError::InvalidConfig(
                    "responses must be binary, one per cell".into(),
                ));
            }
            self.responses = resp;
        }
        self.zeta = zeta;
        self.latent = latent;
        self.refresh_linear();
        Ok(())
    }

    fn refresh_linear(&mut self) {
        for (r, row) in self.rows.iter().enumerate() {
            self.linear[r] = sparse_dot(row, &self.zeta.beta);
            self.omega_linear[r] = sparse_dot(row, &self.zeta.beta_omega);
        }
    }

    /// Current `x_rᵀβ` for every cell.
    pub fn linear_predictor(&self) -> &[f64] {
        &self.linear
    }

    /// Current `x_rᵀβ_ω` for every cell.
    pub fn omega_predictor(&self) -> &[f64] {
        &self.omega_linear
    }

    /// u̲_r ~ U(0, ξ_{|z_r|}).
    pub fn update_u_slice(&mut self) {
        let rng = &mut self.streams.u_slice;
        for (u, &z) in self.latent.u_slice.iter_mut().zip(&self.latent.z) {
            let bound = xi(z.unsigned_abs() as usize);
            *u = bound * rng.sample::<f64, _>(Open01);
        }
    }

    /// Recomputes N_max from the slice variables and resizes the μ window
    /// to `[−N_max, N_max]`. New locations come from their prior; dropped
    /// ones have no cells assigned.
    pub fn refresh_n_max(&mut self) {
        let n_max = compute_n_max(&self.latent.u_slice);
        self.latent.n_max = n_max;
        self.stats.max_n_max = self.stats.max_n_max.max(n_max);
        self.ensure_mu_window(n_max);
        self.zeta.mu.truncate(n_max);
    }

    fn ensure_mu_window(&mut self, half_width: usize) {
        let before = self.zeta.mu.len();
        self.zeta.mu.extend(
            half_width,
            self.zeta.sigma_mu,
            &mut self.streams.mu_extension,
        );
        self.stats.mu_extensions += (self.zeta.mu.len() - before) as u64;
    }

    /// z_r over `{j : ξ_{|j|} > u̲_r}` with weight
    /// `ξ_{|j|}⁻¹ · n(u*_r | μ_j + x_rᵀβ, σ²) · ω_j(x_r)`.
    pub fn update_z(&mut self) {
        self.ensure_mu_window(self.latent.n_max);
        let sigma2 = self.zeta.sigma2;
        let sigma_omega = self.zeta.sigma_omega();
        let rng = &mut self.streams.z;
        let mut ln_w: Vec<f64> = Vec::new();
        for r in 0..self.rows.len() {
            let bound = slice_bound(self.latent.u_slice[r]).min(self.latent.n_max) as i64;
            ln_w.clear();
            for j in -bound..=bound {
                let mu = self.zeta.mu.get(j).expect("mu window covers N_max");
                ln_w.push(
                    j.abs() as f64
                        + normal::ln_density(self.latent.u_star[r], mu + self.linear[r], sigma2)
                        + model::ln_mixture_weight(j, self.omega_linear[r], sigma_omega),
                );
            }
            let k = sample_log_weights(&ln_w, rng);
            self.latent.z[r] = k as i64 - bound;
        }
    }

    /// u*_r ~ N(μ_{z_r} + x_rᵀβ, σ²) truncated to the side fixed by u_r.
    pub fn update_u_star(&mut self) {
        let sigma = self.zeta.sigma();
        let rng = &mut self.streams.u_star;
        for r in 0..self.rows.len() {
            let mean = self
                .zeta
                .mu
                .get(self.latent.z[r])
                .expect("assigned location")
                + self.linear[r];
            let (lo, hi) = if self.responses[r] == 1 {
                (0.0, f64::INFINITY)
            } else {
                (f64::NEG_INFINITY, 0.0)
            };
            self.latent.u_star[r] = normal::sample_truncated(mean, sigma, lo, hi, rng);
        }
    }

    /// Conjugate normal update of each μ_j in the window; unassigned
    /// locations are redrawn from N(0, σ_μ²).
    pub fn update_mu(&mut self) {
        let h = self.zeta.mu.half_width();
        let width = 2 * h + 1;
        let mut count = vec![0usize; width];
        let mut sum = vec![0.0; width];
        for r in 0..self.rows.len() {
            let k = (self.latent.z[r] + h as i64) as usize;
            count[k] += 1;
            sum[k] += self.latent.u_star[r] - self.linear[r];
        }
        let sigma2 = self.zeta.sigma2;
        let prior_precision = 1.0 / (self.zeta.sigma_mu * self.zeta.sigma_mu);
        let rng = &mut self.streams.mu;
        for k in 0..width {
            let precision = count[k] as f64 / sigma2 + prior_precision;
            let mean = sum[k] / sigma2 / precision;
            let draw = mean + rng.sample::<f64, _>(StandardNormal) / precision.sqrt();
            self.zeta.mu.set(k as i64 - h as i64, draw);
        }
    }

    /// Slice-sampling update of σ_μ targeting
    /// `∏_j n(μ_j | 0, σ_μ²) · 1(0 < σ_μ < b_σμ)` with initial width `b_σμ/10`.
    pub fn update_sigma_mu(&mut self) {
        let b = self.prior.b_sigma_mu;
        let count = self.zeta.mu.len() as f64;
        let ss: f64 = self.zeta.mu.values().iter().map(|m| m * m).sum();
        let ln_f = |s: f64| {
            if s > 0.0 && s < b {
                -count * s.ln() - 0.5 * ss / (s * s)
            } else {
                f64::NEG_INFINITY
            }
        };
        let (s, counts) = slice_step(
            self.zeta.sigma_mu,
            ln_f,
            b / 10.0,
            &mut self.streams.sigma_mu,
        );
        self.record_slice(counts);
        self.zeta.sigma_mu = s;
    }

    fn record_slice(&mut self, c: SliceCounts) {
        self.stats.sigma_mu_evaluations += c.evaluations;
        self.stats.sigma_mu_step_outs += c.step_outs;
        self.stats.sigma_mu_shrinks += c.shrinks;
    }

    /// β from the linear model `u* − μ_z = Xβ + N(0, σ²)` with prior
    /// precision `diag(0, 1/(σ²v), …)`; the zero is dropped when the design
    /// has no intercept column.
    pub fn update_beta(&mut self) {
        let d = self.design.dimension;
        let mut rhs = DVector::zeros(d);
        for (r, row) in self.rows.iter().enumerate() {
            let y = self.latent.u_star[r]
                - self
                    .zeta
                    .mu
                    .get(self.latent.z[r])
                    .expect("assigned location");
            for &(k, v) in row {
                rhs[k] += v * y;
            }
        }
        let beta = self
            .beta_system
            .draw(&rhs, self.zeta.sigma(), &mut self.streams.beta);
        self.zeta.beta = beta.iter().copied().collect();
        for (r, row) in self.rows.iter().enumerate() {
            self.linear[r] = sparse_dot(row, &self.zeta.beta);
        }
    }

    /// σ² ~ IG((a₀ + n + dₛ)/2, (a₀ + SSR + βₛᵀβₛ/v)/2) over the dₛ slopes;
    /// a leading intercept column is flat and left out.
    pub fn update_sigma2(&mut self) {
        let n = self.rows.len() as f64;
        let slopes = &self.zeta.beta[usize::from(self.flat_intercept)..];
        let ssr: f64 = (0..self.rows.len())
            .map(|r| {
                let mu = self
                    .zeta
                    .mu
                    .get(self.latent.z[r])
                    .expect("assigned location");
                (self.latent.u_star[r] - mu - self.linear[r]).powi(2)
            })
            .sum();
        let shape = 0.5 * (self.prior.a0 + n + slopes.len() as f64);
        let rate =
            0.5 * (self.prior.a0 + ssr + slopes.iter().map(|b| b * b).sum::<f64>() / self.prior.v);
        self.zeta.sigma2 = draw_inverse_gamma(shape, rate, &mut self.streams.sigma2);
    }

    /// z*_r ~ N(x_rᵀβ_ω, σ_ω²) truncated to `(z_r − 1, z_r)`.
    pub fn update_z_star(&mut self) {
        let sd = self.zeta.sigma_omega();
        let rng = &mut self.streams.z_star;
        for r in 0..self.rows.len() {
            let z = self.latent.z[r] as f64;
            self.latent.z_star[r] =
                normal::sample_truncated(self.omega_linear[r], sd, z - 1.0, z, rng);
        }
    }

    /// β_ω from `z* = Xβ_ω + N(0, σ_ω²)` with prior `N(0, σ_ω² v_ω I)`.
    pub fn update_beta_omega(&mut self) {
        let d = self.design.dimension;
        let mut rhs = DVector::zeros(d);
        for (r, row) in self.rows.iter().enumerate() {
            for &(k, v) in row {
                rhs[k] += v * self.latent.z_star[r];
            }
        }
        let draw =
            self.omega_system
                .draw(&rhs, self.zeta.sigma_omega(), &mut self.streams.beta_omega);
        self.zeta.beta_omega = draw.iter().copied().collect();
        for (r, row) in self.rows.iter().enumerate() {
            self.omega_linear[r] = sparse_dot(row, &self.zeta.beta_omega);
        }
    }

    /// σ_ω² ~ IG((a_ω + n + d)/2, (a_ω + Σ(z* − xᵀβ_ω)² + β_ωᵀβ_ω/v_ω)/2).
    pub fn update_sigma_omega2(&mut self) {
        let n = self.rows.len() as f64;
        let d = self.zeta.beta_omega.len() as f64;
        let ss: f64 = self
            .latent
            .z_star
            .iter()
            .zip(&self.omega_linear)
            .map(|(z, m)| (z - m).powi(2))
            .sum();
        let shape = 0.5 * (self.prior.a_omega + n + d);
        let rate = 0.5
            * (self.prior.a_omega
                + ss
                + self.zeta.beta_omega.iter().map(|b| b * b).sum::<f64>() / self.prior.v_omega);
        self.zeta.sigma_omega2 = draw_inverse_gamma(shape, rate, &mut self.streams.sigma_omega2);
    }

    /// One full Gibbs sweep.
    pub fn sweep(&mut self) {
        self.update_u_slice();
        self.refresh_n_max();
        self.update_z();
        self.update_u_star();
        self.update_mu();
        self.update_sigma_mu();
        self.update_beta();
        self.update_sigma2();
        self.update_z_star();
        self.update_beta_omega();
        self.update_sigma_omega2();
        self.stats.sweeps += 1;
    }

    /// Name of the first non-finite quantity in the state, if any.
    pub fn first_non_finite(&self) -> Option<String> {
        let z = &self.zeta;
        for (name, v) in [
            ("sigma_mu", z.sigma_mu),
            ("sigma2", z.sigma2),
            ("sigma_omega2", z.sigma_omega2),
        ] {
            if !v.is_finite() {
                return Some(name.into());
            }
        }
        let labels = &self.design.column_labels;
        if let Some(k) = z.beta.iter().position(|v| !v.is_finite()) {
            return Some(format!("beta[{}]", labels[k]));
        }
        if let Some(k) = z.beta_omega.iter().position(|v| !v.is_finite()) {
            return Some(format!("beta_omega[{}]", labels[k]));
        }
        if let Some((j, _)) = z.mu.iter().find(|(_, m)| !m.is_finite()) {
            return Some(format!("mu[{j}]"));
        }
        if let Some(r) = self.latent.u_star.iter().position(|v| !v.is_finite()) {
            return Some(format!("u_star[cell {r}]"));
        }
        if let Some(r) = self.latent.z_star.iter().position(|v| !v.is_finite()) {
            return Some(format!("z_star[cell {r}]"));
        }
        None
    }
}

/// Index drawn with probability proportional to `exp(ln_w[k])`.
pub fn sample_log_weights<R: Rng + ?Sized>(ln_w: &[f64], rng: &mut R) -> usize {
    let max = ln_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    assert!(
        max.is_finite(),
        "no feasible mixture index (log weights {ln_w:?})"
    );
    let total: f64 = ln_w.iter().map(|w| (w - max).exp()).sum();
    let mut target = total * rng.random::<f64>();
    for (k, w) in ln_w.iter().enumerate() {
        target -= (w - max).exp();
        if target < 0.0 {
            return k;
        }
    }
    ln_w.iter()
        .rposition(|w| w.is_finite())
        .expect("finite weight exists")
}

/// Thinned post-burn-in parameter draws of one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainSamples {
    pub draws: Vec<ParameterState>,
    pub config: ChainConfig,
    pub column_labels: Vec<String>,
    pub stats: SamplerStats,
}

impl ChainSamples {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    /// Largest μ half-width over the draws.
    pub fn mu_half_width(&self) -> usize {
        self.draws
            .iter()
            .map(|d| d.mu.half_width())
            .max()
            .unwrap_or(0)
    }

    /// Scalar parameter names: β labels, `omega:`-prefixed β_ω labels,
    /// σ_μ, σ², σ_ω², then `mu[j]` over the union window.
    pub fn parameter_names(&self) -> Vec<String> {
        let h = self.mu_half_width() as i64;
        let mut names: Vec<String> = self.column_labels.clone();
        names.extend(self.column_labels.iter().map(|l| format!("omega:{l}")));
        names.extend(["sigma_mu", "sigma2", "sigma_omega2"].map(String::from));
        names.extend((-h..=h).map(|j| format!("mu[{j}]")));
        names
    }

    /// One row per draw aligned with [`parameter_names`](Self::parameter_names);
    /// `None` marks a location outside that draw's window.
    pub fn scalar_rows(&self) -> Vec<Vec<Option<f64>>> {
        let h = self.mu_half_width() as i64;
        self.draws
            .iter()
            .map(|d| {
                let mut row: Vec<Option<f64>> = d
                    .beta
                    .iter()
                    .chain(&d.beta_omega)
                    .map(|&v| Some(v))
                    .collect();
                row.extend([Some(d.sigma_mu), Some(d.sigma2), Some(d.sigma_omega2)]);
                row.extend((-h..=h).map(|j| d.mu.get(j)));
                row
            })
            .collect()
    }

    /// Materializes, in every draw, the locations that evaluating the
    /// model at each design row will need. Deterministic given the seed.
    pub fn cover_design(&mut self, design: &ObservationDesign) -> Result<(), SamplerError> {
        let mut rng = stream_rng(self.config.seed, Stream::Predictive);
        let eps = self.config.eps;
        for draw in &mut self.draws {
            let mut need = 0usize;
            for row in &design.rows {
                let w = model::weight_window(
                    model::dot(&row.x, &draw.beta_omega),
                    draw.sigma_omega(),
                    eps,
                )?;
                need = need.max(w.j_lo.unsigned_abs().max(w.j_hi.unsigned_abs()) as usize);
            }
            draw.mu.extend(need, draw.sigma_mu, &mut rng);
        }
        Ok(())
    }
}

/// Runs one chain and keeps every `thin`-th post-burn-in state.
pub fn run_chain(
    design: &ObservationDesign,
    config: &ChainConfig,
) -> Result<ChainSamples, SamplerError> {
    let mut sampler = Sampler::new(design, config)?;
    let mut draws = Vec::with_capacity(config.stored_draws());
    for iteration in 0..config.iterations {
        sampler.sweep();
        if let Some(variable) = sampler.first_non_finite() {
            return Err(SamplerError::NonFinite {
                iteration,
                variable,
            });
        }
        if iteration >= config.burn_in && (iteration - config.burn_in + 1) % config.thin == 0 {
            draws.push(sampler.zeta().clone());
        }
    }
    Ok(ChainSamples {
        draws,
        config: *config,
        column_labels: design.label_strings(),
        stats: *sampler.stats(),
    })
}
