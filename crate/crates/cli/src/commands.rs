use crate::args::{FitArgs, ModelKind, SimulateArgs, SummarizeArgs};
use crate::config::{parse_prior, ReportOptions, RunConfig};
use crate::error::CliError;
use crate::plots;
use bnpirt::design::{self, ItemResponseData, ObservationDesign};
use bnpirt::diagnostics::{self, DEFAULT_MCCI_LEVEL};
use bnpirt::model::{MuWindow, ParameterState};
use bnpirt::sampler::derived_seed;
use bnpirt::samples_io::{self, RunMetadata};
use bnpirt::simulate::{simulate_responses, TruthSource, TruthSpec};
use bnpirt::{run_chain, ChainConfig, ChainSamples, PriorConfig};
use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

/// Collects the outputs of one command in a scratch directory inside the
/// output directory and moves them into place only when everything has
/// been written. Dropping without [`commit`](Self::commit) removes the
/// scratch directory, and the output directory too if this run created it
/// and it is still empty.
struct Staging {
    out: PathBuf,
    dir: PathBuf,
    created_out: bool,
    files: Vec<String>,
    committed: bool,
}

impl Staging {
    fn new(out: &Path) -> Result<Self, CliError> {
        let created_out = !out.exists();
        fs::create_dir_all(out).map_err(|e| CliError::io(out.display(), e))?;
        let dir = out.join(format!(".bnpirt-partial-{}", std::process::id()));
        fs::create_dir_all(&dir).map_err(|e| CliError::io(dir.display(), e))?;
        Ok(Self {
            out: out.to_path_buf(),
            dir,
            created_out,
            files: Vec::new(),
            committed: false,
        })
    }

    fn create(&mut self, name: &str) -> Result<BufWriter<File>, CliError> {
        let path = self.dir.join(name);
        let file = File::create(&path).map_err(|e| CliError::io(path.display(), e))?;
        self.files.push(name.to_string());
        Ok(BufWriter::new(file))
    }

    fn write_text(&mut self, name: &str, text: &str) -> Result<(), CliError> {
        let mut w = self.create(name)?;
        w.write_all(text.as_bytes())
            .and_then(|_| w.flush())
            .map_err(|e| CliError::io(name, e))
    }

    fn commit(mut self) -> Result<Vec<PathBuf>, CliError> {
        let mut done = Vec::with_capacity(self.files.len());
        for name in &self.files {
            let to = self.out.join(name);
            fs::rename(self.dir.join(name), &to).map_err(|e| CliError::io(to.display(), e))?;
            done.push(to);
        }
        let _ = fs::remove_dir(&self.dir);
        self.committed = true;
        Ok(done)
    }
}

impl Drop for Staging {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        let _ = fs::remove_dir_all(&self.dir);
        if self.created_out {
            let _ = fs::remove_dir(&self.out);
        }
    }
}

fn finish(w: BufWriter<File>, name: &str) -> Result<(), CliError> {
    w.into_inner()
        .map_err(|e| CliError::io(name, e.error()))?
        .sync_all()
        .map_err(|e| CliError::io(name, e))
}

fn load_design(
    model: ModelKind,
    data: &Path,
    covariates: Option<&Path>,
    dimensions: Option<&Path>,
) -> Result<(ItemResponseData, ObservationDesign), CliError> {
    let items = design::ingest_csv(data, covariates, dimensions)?;
    let mut built = match model {
        ModelKind::Dichotomous => design::build_dichotomous(&items)?,
        ModelKind::Polytomous => design::build_polytomous(&items)?,
        ModelKind::Multidimensional => design::build_multidimensional(&items)?,
    };
    if items.covariates.is_some() {
        built = design::append_covariates(&built, &items)?;
    }
    for w in &built.warnings {
        warn!("{w}");
    }
    info!(
        "{} cells, {} persons, {} items, {} design columns",
        built.len(),
        items.n_persons(),
        items.n_items(),
        built.dimension
    );
    Ok((items, built))
}

fn thread_cap() -> Result<usize, CliError> {
    match std::env::var("BNPIRT_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(CliError::Usage(format!(
                "BNPIRT_THREADS must be a positive integer, got {v:?}"
            ))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

fn pool() -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(thread_cap()?)
        .build()
        .map_err(|e| CliError::Io(format!("thread pool: {e}")))
}

fn suffix(chains: usize, k: usize) -> String {
    if chains == 1 {
        String::new()
    } else {
        format!("_chain{k}")
    }
}

/// Rejects trace names that cannot exist for this design before any
/// sampling is done. `mu[j]` names are checked after the run.
fn precheck_trace(names: &[String], design: &ObservationDesign) -> Result<(), CliError> {
    let labels = design.label_strings();
    let mut valid: Vec<String> = labels.clone();
    valid.extend(labels.iter().map(|l| format!("omega:{l}")));
    valid.extend(["sigma_mu", "sigma2", "sigma_omega2"].map(String::from));
    for n in names {
        let is_mu = n
            .strip_prefix("mu[")
            .and_then(|r| r.strip_suffix(']'))
            .is_some_and(|j| j.parse::<i64>().is_ok());
        if !is_mu && !valid.contains(n) {
            return Err(CliError::Usage(format!(
                "unknown parameter {n:?} in --trace; valid names: {}, mu[j]",
                valid.join(", ")
            )));
        }
    }
    Ok(())
}

/// Summary, trace, fit table, fit statistics and optional plots of one chain.
fn write_reports(
    staging: &mut Staging,
    sfx: &str,
    samples: &ChainSamples,
    items: &ItemResponseData,
    design: &ObservationDesign,
    model: ModelKind,
    opts: &ReportOptions,
) -> Result<(), CliError> {
    let summary = diagnostics::posterior_summary(samples, DEFAULT_MCCI_LEVEL)?;
    let trace = diagnostics::trace_export(samples, &opts.trace)?;

    let mut covered = samples.clone();
    covered.cover_design(design)?;
    let report = diagnostics::fit_report(model.name(), design, &covered, opts.outlier_threshold)?;

    let name = format!("summary{sfx}.csv");
    let mut w = staging.create(&name)?;
    diagnostics::write_summary_csv(&summary, opts.mcci, &mut w)
        .map_err(|e| CliError::io(&name, e))?;
    finish(w, &name)?;

    let name = format!("trace{sfx}.csv");
    let mut w = staging.create(&name)?;
    diagnostics::write_trace_csv(&trace, &mut w).map_err(|e| CliError::io(&name, e))?;
    finish(w, &name)?;

    let name = format!("fit{sfx}.csv");
    let mut w = staging.create(&name)?;
    diagnostics::write_fit_csv(&report, &items.person_ids, &items.item_ids, &mut w)
        .map_err(|e| CliError::io(&name, e))?;
    finish(w, &name)?;

    let name = format!("fit_stats{sfx}.txt");
    let mut w = staging.create(&name)?;
    diagnostics::write_fit_stats(&report, &mut w).map_err(|e| CliError::io(&name, e))?;
    finish(w, &name)?;

    if opts.plots {
        let coefficients: Vec<_> = summary
            .parameters
            .iter()
            .filter(|p| samples.column_labels.contains(&p.name))
            .collect();
        staging.write_text(
            &format!("boxplot{sfx}.svg"),
            &plots::box_plot(&coefficients, "posterior marginals of the coefficients"),
        )?;
        staging.write_text(&format!("trace{sfx}.svg"), &plots::trace_plot(&trace))?;
    }
    println!(
        "{model}{sfx}: D = {:.6} (Gof {:.6}, Penalty {:.6}), R² = {}, outliers {}",
        report.criterion_d,
        report.gof,
        report.penalty,
        report
            .r_squared
            .map_or("undefined".to_string(), |r| format!("{r:.6}")),
        report.outlier_cells.len(),
        model = model.name()
    );
    Ok(())
}

fn now_unix() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

pub fn fit(args: &FitArgs) -> Result<(), CliError> {
    let run = RunConfig::resolve(args)?;
    let (items, design) = load_design(
        run.model,
        &run.data,
        run.covariates.as_deref(),
        run.dimensions.as_deref(),
    )?;
    precheck_trace(&run.report.trace, &design)?;
    let mut staging = Staging::new(&run.out)?;
    info!(
        "{} chain(s) of {} iterations, burn-in {}, thin {}",
        run.chains, run.chain.iterations, run.chain.burn_in, run.chain.thin
    );

    let configs: Vec<ChainConfig> = (0..run.chains)
        .map(|k| ChainConfig {
            seed: derived_seed(run.chain.seed, k),
            ..run.chain
        })
        .collect();
    let chains: Vec<ChainSamples> = pool()?.install(|| {
        configs
            .par_iter()
            .map(|c| run_chain(&design, c))
            .collect::<Result<_, _>>()
    })?;

    for (k, samples) in chains.iter().enumerate() {
        let sfx = suffix(run.chains, k);
        let meta = RunMetadata {
            software: format!("bnpirt {}", env!("CARGO_PKG_VERSION")),
            created_unix: now_unix(),
            model: run.model.name().into(),
            data: run.data.display().to_string(),
            covariates: run.covariates.as_ref().map(|p| p.display().to_string()),
            dimensions: run.dimensions.as_ref().map(|p| p.display().to_string()),
            chain: k,
            seed: samples.config.seed.to_string(),
            iterations: samples.config.iterations,
            burn_in: samples.config.burn_in,
            thin: samples.config.thin,
            eps: samples.config.eps,
            outlier_threshold: run.report.outlier_threshold,
            chains: run.chains,
            mcci: run.report.mcci,
            plots: run.report.plots,
            trace: run.report.trace.clone(),
            stored_draws: samples.len(),
            dimension: design.dimension,
            mu_half_width: samples.mu_half_width(),
            prior: samples.config.prior,
            stats: samples.stats,
        };
        let name = format!("samples{sfx}.csv");
        let mut w = staging.create(&name)?;
        samples_io::write_samples_csv(samples, &mut w)?;
        finish(w, &name)?;
        staging.write_text(&format!("metadata{sfx}.toml"), &meta.to_toml()?)?;
        write_reports(
            &mut staging,
            &sfx,
            samples,
            &items,
            &design,
            run.model,
            &run.report,
        )?;
    }
    for path in staging.commit()? {
        info!("wrote {}", path.display());
    }
    Ok(())
}

pub fn summarize(args: &SummarizeArgs) -> Result<(), CliError> {
    let single = args.run.join("metadata.toml");
    let first = if single.exists() {
        single
    } else {
        args.run.join("metadata_chain0.toml")
    };
    if !first.exists() {
        return Err(CliError::Usage(format!(
            "{} holds no metadata.toml or metadata_chain0.toml",
            args.run.display()
        )));
    }
    let chains = RunMetadata::read(&first)?.chains;
    let out = args.out.clone().unwrap_or_else(|| args.run.clone());
    let mut staging = Staging::new(&out)?;
    let pool = pool()?;
    let mut loaded_design: Option<(ItemResponseData, ObservationDesign, ModelKind)> = None;
    for k in 0..chains {
        let sfx = suffix(chains, k);
        let (samples, meta) = samples_io::load_samples(
            &args.run.join(format!("samples{sfx}.csv")),
            &args.run.join(format!("metadata{sfx}.toml")),
        )?;
        let model = ModelKind::parse(&meta.model)
            .ok_or_else(|| CliError::Data(format!("unknown model {:?} in metadata", meta.model)))?;
        if loaded_design.is_none() {
            let data = args
                .data
                .clone()
                .unwrap_or_else(|| PathBuf::from(&meta.data));
            let cov = args
                .covariates
                .clone()
                .or_else(|| meta.covariates.as_ref().map(PathBuf::from));
            let dims = args
                .dimensions
                .clone()
                .or_else(|| meta.dimensions.as_ref().map(PathBuf::from));
            let (items, design) = load_design(model, &data, cov.as_deref(), dims.as_deref())?;
            loaded_design = Some((items, design, model));
        }
        let (items, design, _) = loaded_design.as_ref().unwrap();
        if design.label_strings() != samples.column_labels {
            return Err(CliError::Data(format!(
                "samples{sfx}.csv columns do not match the design built from the data ({} vs {} coefficients)",
                samples.column_labels.len(),
                design.dimension
            )));
        }
        let fallback = ReportOptions {
            outlier_threshold: meta.outlier_threshold,
            plots: meta.plots,
            mcci: meta.mcci,
            trace: meta.trace.clone(),
        };
        let opts = ReportOptions::merge(&args.report, &fallback)?;
        pool.install(|| write_reports(&mut staging, &sfx, &samples, items, design, model, &opts))?;
    }
    for path in staging.commit()? {
        info!("wrote {}", path.display());
    }
    Ok(())
}

/// True parameters of a simulated data set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthFile {
    pub persons: usize,
    pub items: usize,
    pub seed: String,
    pub sigma_mu: f64,
    pub sigma2: f64,
    pub sigma_omega2: f64,
    pub labels: Vec<String>,
    pub beta: Vec<f64>,
    pub beta_omega: Vec<f64>,
    /// μ_{−h}, …, μ_h.
    pub mu: Vec<f64>,
}

impl TruthFile {
    fn zeta(&self) -> Result<ParameterState, CliError> {
        let mu = MuWindow::from_values(self.mu.clone())
            .map_err(|e| CliError::Data(format!("truth file: {e}")))?;
        let z = ParameterState {
            mu,
            sigma_mu: self.sigma_mu,
            beta: self.beta.clone(),
            beta_omega: self.beta_omega.clone(),
            sigma2: self.sigma2,
            sigma_omega2: self.sigma_omega2,
        };
        z.validate(None)
            .map_err(|e| CliError::Data(format!("truth file: {e}")))?;
        Ok(z)
    }
}

pub fn simulate(args: &SimulateArgs) -> Result<(), CliError> {
    if args.persons == 0 || args.items == 0 {
        return Err(CliError::Usage(format!(
            "--persons and --items must be positive, got {} and {}",
            args.persons, args.items
        )));
    }
    let source = if let Some(path) = &args.zeta {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path.display(), e))?;
        let truth: TruthFile = toml::from_str(&text)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        if (truth.persons, truth.items) != (args.persons, args.items) {
            return Err(CliError::Usage(format!(
                "{} describes {} persons and {} items; pass matching --persons/--items",
                path.display(),
                truth.persons,
                truth.items
            )));
        }
        TruthSource::Fixed(truth.zeta()?)
    } else if args.from_prior {
        TruthSource::Prior(match &args.prior {
            Some(p) => parse_prior(p)?,
            None => PriorConfig::default(),
        })
    } else {
        let spec = TruthSpec {
            ability_sd: args.ability_sd,
            difficulty_sd: args.difficulty_sd,
            sigma2: args.sigma2,
            sigma_mu: args.sigma_mu,
            sigma_omega2: args.sigma_omega2,
            zero_mu: args.zero_mu,
        };
        spec.validate()
            .map_err(|e| CliError::Usage(e.to_string()))?;
        TruthSource::Spec(spec)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let sim = simulate_responses(
        args.persons,
        args.items,
        &source,
        bnpirt::DEFAULT_EPS,
        &mut rng,
    )?;

    let mut staging = Staging::new(&args.out)?;
    let mut w = staging.create("responses.csv")?;
    design::write_responses_csv(&sim.data, &mut w).map_err(|e| CliError::io("responses.csv", e))?;
    finish(w, "responses.csv")?;
    let truth = TruthFile {
        persons: args.persons,
        items: args.items,
        seed: args.seed.to_string(),
        sigma_mu: sim.zeta.sigma_mu,
        sigma2: sim.zeta.sigma2,
        sigma_omega2: sim.zeta.sigma_omega2,
        labels: sim.design.label_strings(),
        beta: sim.zeta.beta.clone(),
        beta_omega: sim.zeta.beta_omega.clone(),
        mu: sim.zeta.mu.values().to_vec(),
    };
    let text = toml::to_string(&truth).map_err(|e| CliError::Io(format!("truth.toml: {e}")))?;
    staging.write_text("truth.toml", &text)?;
    for path in staging.commit()? {
        println!("wrote {}", path.display());
    }
    Ok(())
}
