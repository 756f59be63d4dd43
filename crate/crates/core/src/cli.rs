//! Batch command-line front end: fit, simulate, evaluate, predict and
//! plot-data emission.
//!
//! Options come from flags and from an optional TOML run file (`--config`);
//! a flag always wins over the same setting in the file. Relative paths in
//! the run file are taken relative to the file's directory.
//!
//! ```toml
//! command = "fit"
//! data = "stays.csv"
//! schema = "schema.toml"
//! models = ["template.json"]
//! out = "report.json"
//! seed = 7
//! drg_preset = "five-drg"
//! baselines = true
//!
//! [fit]
//! method = "EM"
//! max_iters = 300
//! init = { kind = "MultiStart", k = 4 }
//! ```
//!
//! Exit status: 0 on success, 1 on an input or configuration error, 2 when a
//! fit ran to completion without converging (its report is still written).

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::convolution::ConvolutiveLongStay;
use crate::covariates::{FeatureSchema, FieldValue};
use crate::data_io::{
    load_model, prepare, read_csv, read_csv_with, write_gof_csv, write_gof_json, write_report, FitReport,
    RunMetadata, StayRecord,
};
use crate::dist::{ContDistSpec, CountDistSpec};
use crate::error::{LosError, Result};
use crate::estimation::{fit, FitConfig, Method};
use crate::gof::{compare, fit_baseline, BaselineFamily, GofRow, LabeledCdf};
use crate::mixture::{LosData, MixtureModel, Resolved, RowGroups};

/// Schema field holding the DRG code, used by `--drg-preset`.
pub const DRG_FIELD: &str = "drg";
/// Default histogram bin width in days (six hours).
pub const DEFAULT_BIN_WIDTH: f64 = 0.25;
/// Number of grid points of the plotted density curves.
pub const CURVE_POINTS: usize = 512;
/// Probability tolerance of quantile inversion.
pub const QUANTILE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Fit,
    Simulate,
    Evaluate,
    Predict,
    Plotdata,
}

#[derive(Debug, Clone, Default, Parser)]
#[command(
    name = "losmix",
    version,
    about = "Convolutive mixture models of hospital length of stay"
)]
pub struct Args {
    /// What to do.
    #[arg(long, value_enum)]
    pub command: Option<Command>,
    /// Stay records (CSV).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Feature schema (TOML).
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Model or fit report (JSON); repeat to evaluate several.
    #[arg(long = "model")]
    pub models: Vec<PathBuf>,
    /// Estimator: MLE, EM or EM2D.
    #[arg(long)]
    pub method: Option<Method>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file (a path prefix for plotdata).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Named DRG filter; `five-drg` selects five diagnosis groups.
    #[arg(long)]
    pub drg_preset: Option<String>,
    /// Histogram bin width in days for plotdata.
    #[arg(long)]
    pub bins: Option<f64>,
    /// Also fit and report the LogNormal, Gamma and Weibull baselines.
    #[arg(long)]
    pub baselines: bool,
    /// Run file (TOML) with any of the settings above plus a `[fit]` table.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Number of stays to simulate.
    #[arg(long)]
    pub n: Option<usize>,
    /// Iteration limit of the estimator.
    #[arg(long)]
    pub max_iters: Option<usize>,
}

/// Settings of one run after merging the run file and the flags.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: Option<Command>,
    pub data: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    pub models: Vec<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub drg_preset: Option<String>,
    pub bins: Option<f64>,
    pub baselines: bool,
    pub n: Option<usize>,
    pub fit: FitConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| LosError::Config(format!("run file: {e}")))
    }

    /// Run file settings (if any) overridden by the flags.
    pub fn from_args(args: &Args) -> Result<Self> {
        let mut cfg = match &args.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| LosError::io(path, e))?;
                let mut cfg = Self::from_toml(&text)?;
                cfg.rebase(path.parent().unwrap_or(Path::new("")));
                cfg
            }
            None => RunConfig::default(),
        };
        if args.command.is_some() {
            cfg.command = args.command;
        }
        if args.data.is_some() {
            cfg.data = args.data.clone();
        }
        if args.schema.is_some() {
            cfg.schema = args.schema.clone();
        }
        if !args.models.is_empty() {
            cfg.models = args.models.clone();
        }
        if args.out.is_some() {
            cfg.out = args.out.clone();
        }
        if args.seed.is_some() {
            cfg.seed = args.seed;
        }
        if args.drg_preset.is_some() {
            cfg.drg_preset = args.drg_preset.clone();
        }
        if args.bins.is_some() {
            cfg.bins = args.bins;
        }
        cfg.baselines |= args.baselines;
        if args.n.is_some() {
            cfg.n = args.n;
        }
        if let Some(m) = args.method {
            cfg.fit.method = m;
        }
        if let Some(k) = args.max_iters {
            cfg.fit.max_iters = k;
        }
        if let Some(s) = cfg.seed {
            cfg.fit.seed = s;
        }
        Ok(cfg)
    }

    fn rebase(&mut self, dir: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        self.data.iter_mut().for_each(fix);
        self.schema.iter_mut().for_each(fix);
        self.out.iter_mut().for_each(fix);
        self.models.iter_mut().for_each(fix);
    }

    fn require<'a, T>(&self, v: &'a Option<T>, what: &str) -> Result<&'a T> {
        v.as_ref().ok_or_else(|| {
            let cmd = self.command.map(|c| format!("{c:?}").to_lowercase()).unwrap_or_default();
            LosError::Config(format!("{cmd} needs {what}"))
        })
    }

    fn first_model(&self) -> Result<&PathBuf> {
        self.models
            .first()
            .ok_or_else(|| LosError::Config("a model file is required (--model)".into()))
    }

    fn load_schema(&self) -> Result<FeatureSchema> {
        match &self.schema {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| LosError::io(path, e))?;
                FeatureSchema::from_toml(&text)
            }
            None => Ok(FeatureSchema::default()),
        }
    }
}

/// How a command that did not fail ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Done,
    NotConverged,
}

pub fn exit_code(result: &Result<Outcome>) -> u8 {
    match result {
        Ok(Outcome::Done) => 0,
        Ok(Outcome::NotConverged) => 2,
        Err(_) => 1,
    }
}

/// Parse `args` (program name first), run, and map the result to an exit
/// status. Errors are printed to stderr.
pub fn main_with<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = RunConfig::from_args(&args).and_then(|cfg| run(&cfg));
    match &result {
        Err(e) => eprintln!("error: {e}"),
        Ok(Outcome::NotConverged) => eprintln!("warning: the fit did not converge"),
        Ok(Outcome::Done) => {}
    }
    ExitCode::from(exit_code(&result))
}

pub fn run(cfg: &RunConfig) -> Result<Outcome> {
    match cfg.command {
        Some(Command::Fit) => cmd_fit(cfg),
        Some(Command::Simulate) => cmd_simulate(cfg),
        Some(Command::Evaluate) => cmd_evaluate(cfg),
        Some(Command::Predict) => cmd_predict(cfg),
        Some(Command::Plotdata) => cmd_plotdata(cfg),
        None => Err(LosError::Config("no command given (--command)".into())),
    }
}

/// A named set of DRG codes; a record belongs to it when its code equals
/// one of `codes` or starts with one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DrgGroup {
    pub label: String,
    pub codes: Vec<String>,
}

impl DrgGroup {
    pub fn matches(&self, code: &str) -> bool {
        let code = code.trim();
        self.codes.iter().any(|c| code.starts_with(c.as_str()))
    }
}

/// Groups of a named DRG preset.
pub fn drg_preset(name: &str) -> Result<Vec<DrgGroup>> {
    let groups: &[&[&str]] = match name {
        "five-drg" => &[
            &["B70"],
            &["E65B"],
            &["F60B"],
            &["F62A", "F62B"],
            &["E02", "E40", "E41Z", "E64", "E67", "E71", "E75", "E76Z"],
        ],
        _ => return Err(LosError::Config(format!("unknown DRG preset `{name}` (known: five-drg)"))),
    };
    Ok(groups
        .iter()
        .map(|codes| DrgGroup {
            label: codes.join("+"),
            codes: codes.iter().map(|c| c.to_string()).collect(),
        })
        .collect())
}

fn drg_index(schema: &FeatureSchema) -> Result<usize> {
    schema
        .field_index(DRG_FIELD)
        .ok_or_else(|| LosError::Config(format!("a DRG preset needs a `{DRG_FIELD}` field in the schema")))
}

fn drg_of(rec: &StayRecord, idx: usize) -> &str {
    match &rec.features[idx] {
        FieldValue::Category(s) => s,
        _ => "",
    }
}

/// Records whose DRG belongs to any group of the preset.
fn filter_preset(records: Vec<StayRecord>, schema: &FeatureSchema, preset: &str) -> Result<Vec<StayRecord>> {
    let groups = drg_preset(preset)?;
    let idx = drg_index(schema)?;
    Ok(records
        .into_iter()
        .filter(|r| groups.iter().any(|g| g.matches(drg_of(r, idx))))
        .collect())
}

/// Starting structure used when `fit` gets no model file.
pub fn default_template() -> MixtureModel {
    MixtureModel::new(
        0.5,
        ContDistSpec::lognormal(0.0, 1.0).expect("valid default"),
        ConvolutiveLongStay::new(
            CountDistSpec::negbin(1.0, 0.5).expect("valid default"),
            ContDistSpec::normal(1.0, 1.0).expect("valid default"),
        )
        .expect("valid default"),
    )
    .expect("valid default")
}

/// Kolmogorov distances of `model` (and optionally the baselines) on `data`.
/// With covariates the model CDF is the average of the per-record CDFs.
pub fn gof_table(group: &str, label: &str, model: &MixtureModel, data: &LosData, baselines: bool) -> Result<Vec<GofRow>> {
    let groups = RowGroups::new(model, &data.design)?;
    let resolved = Resolved::new(model, &data.design, &groups)?;
    let mut models: Vec<LabeledCdf> = vec![(
        label.to_string(),
        Box::new(|y: f64| resolved.marginal_cdf(&groups, y)),
    )];
    if baselines {
        for fam in BaselineFamily::ALL {
            let b = fit_baseline(&data.y, fam)?;
            models.push((b.label().to_string(), Box::new(move |y: f64| b.cdf(y))));
        }
    }
    compare(group, &data.y, &models)
}

fn cmd_fit(cfg: &RunConfig) -> Result<Outcome> {
    let data_path = cfg.require(&cfg.data, "stay records (--data)")?;
    let out = cfg.require(&cfg.out, "an output path (--out)")?;
    let schema = cfg.load_schema()?;
    let mut records = read_csv(data_path, &schema)?;
    if let Some(p) = &cfg.drg_preset {
        records = filter_preset(records, &schema, p)?;
    }
    if records.is_empty() {
        return Err(LosError::Config(format!("{} has no stays to fit", data_path.display())));
    }
    let (data, resolved) = prepare(&records, &schema)?;
    let mut template = match cfg.models.first() {
        Some(path) => load_model(path)?.0,
        None => default_template(),
    };
    if template.is_covariate_free() {
        let maps = resolved.build_maps(|t| template.get(t))?;
        if !maps.is_empty() {
            template = template.with_maps(maps)?;
        }
    }
    let start = Instant::now();
    let result = fit(&data, &template, &cfg.fit)?;
    let elapsed = start.elapsed().as_secs_f64();
    let gof = gof_table("all", "mixture", &result.model, &data, cfg.baselines)?;
    let converged = result.converged;
    println!(
        "{:?}: loglik {:.6} after {} iterations ({})",
        result.method, result.loglik, result.iterations, result.reason
    );
    let mut report = FitReport::new(result, data.len());
    report.schema = Some(resolved);
    report.config = Some(cfg.fit.clone());
    report.gof = gof;
    report.metadata = RunMetadata::now(elapsed);
    write_report(out, &report)?;
    Ok(if converged { Outcome::Done } else { Outcome::NotConverged })
}

fn cmd_simulate(cfg: &RunConfig) -> Result<Outcome> {
    let out = cfg.require(&cfg.out, "an output path (--out)")?;
    let seed = *cfg.require(&cfg.seed, "a seed (--seed)")?;
    let n = *cfg.require(&cfg.n, "a sample size (--n)")?;
    let (model, stored) = load_model(cfg.first_model()?)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (schema, records) = if model.is_covariate_free() {
        let schema = FeatureSchema {
            los_column: cfg.load_schema()?.los_column,
            ..Default::default()
        };
        let y = model.sample(n, &mut rng)?;
        let records = y
            .into_iter()
            .enumerate()
            .map(|(i, v)| StayRecord { row: i + 1, los_days: Some(v), features: Vec::new() })
            .collect();
        (schema, records)
    } else {
        // Covariates are drawn by resampling the records of --data.
        let schema = match stored {
            Some(s) => s,
            None => cfg.load_schema()?,
        };
        let pool_path = cfg.require(&cfg.data, "covariate records (--data) for a model with covariates")?;
        let pool = read_csv_with(pool_path, &schema, false)?;
        if pool.is_empty() && n > 0 {
            return Err(LosError::Config(format!("{} has no records to draw covariates from", pool_path.display())));
        }
        let mut records: Vec<StayRecord> = (0..n)
            .map(|i| StayRecord {
                row: i + 1,
                los_days: None,
                features: pool[rng.random_range(0..pool.len())].features.clone(),
            })
            .collect();
        let schema = schema.resolve_levels(&pool)?;
        let design = schema.encode(&records)?;
        let y = model.sample_design(&design, &mut rng)?;
        for (r, v) in records.iter_mut().zip(y) {
            r.los_days = Some(v);
        }
        (schema, records)
    };
    crate::data_io::write_csv(out, &schema, &records)?;
    Ok(Outcome::Done)
}

/// Label of a model file in comparison tables.
fn model_label(path: &Path, model: &MixtureModel) -> String {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    if model.is_covariate_free() {
        stem
    } else {
        format!("{stem} (covariate-adjusted)")
    }
}

fn cmd_evaluate(cfg: &RunConfig) -> Result<Outcome> {
    let data_path = cfg.require(&cfg.data, "stay records (--data)")?;
    if cfg.models.is_empty() {
        return Err(LosError::Config("evaluate needs at least one model (--model)".into()));
    }
    let groups = match &cfg.drg_preset {
        Some(p) => drg_preset(p)?,
        None => Vec::new(),
    };
    let mut table = Vec::new();
    let mut baselines_done = false;
    for path in &cfg.models {
        let (model, stored) = load_model(path)?;
        let schema = match stored {
            Some(s) => s,
            None => cfg.load_schema()?,
        };
        let records = read_csv(data_path, &schema)?;
        let mut subsets = vec![("all".to_string(), records.clone())];
        if !groups.is_empty() {
            let idx = drg_index(&schema)?;
            for g in &groups {
                let sub: Vec<StayRecord> = records.iter().filter(|r| g.matches(drg_of(r, idx))).cloned().collect();
                if !sub.is_empty() {
                    subsets.push((g.label.clone(), sub));
                }
            }
        }
        let label = model_label(path, &model);
        for (group, recs) in subsets {
            if recs.is_empty() {
                continue;
            }
            let (data, _) = prepare(&recs, &schema)?;
            let with_baselines = cfg.baselines && !baselines_done;
            table.extend(gof_table(&group, &label, &model, &data, with_baselines)?);
        }
        baselines_done = true;
    }
    // Group-wise, ascending distance within each group.
    let order: Vec<String> = table.iter().fold(Vec::new(), |mut acc, r| {
        if !acc.contains(&r.group) {
            acc.push(r.group.clone());
        }
        acc
    });
    table.sort_by(|a, b| {
        let ga = order.iter().position(|g| *g == a.group);
        let gb = order.iter().position(|g| *g == b.group);
        ga.cmp(&gb).then(a.distance.total_cmp(&b.distance))
    });
    for r in &table {
        println!("{}\t{}\t{}\t{:.6}", r.group, r.label, r.n, r.distance);
    }
    if let Some(out) = &cfg.out {
        if out.extension().is_some_and(|e| e == "json") {
            write_gof_json(out, &table)?;
        } else {
            write_gof_csv(out, &table)?;
        }
    }
    Ok(Outcome::Done)
}

/// Smallest `x` with `cdf(x) = p` within [`QUANTILE_TOL`], by bisection.
pub fn quantile(cdf: impl Fn(f64) -> f64, p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(LosError::domain(format!("quantile level {p} is not in (0, 1)")));
    }
    let mut hi = 1.0;
    while cdf(hi) < p {
        hi *= 2.0;
        if hi > 1e15 {
            return Err(LosError::ModelValidity(format!("CDF never reaches {p}")));
        }
    }
    let mut lo = 0.0;
    let mut mid = 0.5 * hi;
    for _ in 0..400 {
        mid = 0.5 * (lo + hi);
        let f = cdf(mid);
        if (f - p).abs() <= QUANTILE_TOL {
            break;
        }
        if f < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    Ok(mid)
}

/// Per-record prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub row: usize,
    pub los_days: Option<f64>,
    pub mean: f64,
    /// Posterior probability of a long stay when the stay is known,
    /// otherwise the prior weight of the long component.
    pub p_long: f64,
    pub q10: f64,
    pub q50: f64,
    pub q90: f64,
}

/// Predictions for `records` already encoded in `design`.
pub fn predict(model: &MixtureModel, records: &[StayRecord], design: &crate::covariates::DesignMatrix) -> Result<Vec<Prediction>> {
    let groups = RowGroups::new(model, design)?;
    let resolved = Resolved::new(model, design, &groups)?;
    let summaries = resolved
        .models
        .iter()
        .zip(&resolved.tables)
        .map(|(m, t)| {
            let cdf = |y: f64| m.cdf_with(y, t);
            Ok([m.mean()?, quantile(cdf, 0.1)?, quantile(cdf, 0.5)?, quantile(cdf, 0.9)?])
        })
        .collect::<Result<Vec<_>>>()?;
    records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let g = groups.group_of(i);
            let (m, t) = (&resolved.models[g], &resolved.tables[g]);
            let p_long = match r.los_days {
                Some(y) if m.pi > 0.0 && m.pi < 1.0 => {
                    let (ls, ll) = m.ln_components(y, t);
                    let a = (-m.pi).ln_1p() + ls;
                    let b = m.pi.ln() + ll;
                    let total = crate::math::log_add_exp(a, b);
                    if total == f64::NEG_INFINITY {
                        return Err(LosError::DegeneratePoint { row: r.row, y });
                    }
                    (b - total).exp()
                }
                _ => m.pi,
            };
            let [mean, q10, q50, q90] = summaries[g];
            Ok(Prediction { row: r.row, los_days: r.los_days, mean, p_long, q10, q50, q90 })
        })
        .collect()
}

fn cmd_predict(cfg: &RunConfig) -> Result<Outcome> {
    let data_path = cfg.require(&cfg.data, "records to predict (--data)")?;
    let out = cfg.require(&cfg.out, "an output path (--out)")?;
    let (model, stored) = load_model(cfg.first_model()?)?;
    let schema = match stored {
        Some(s) => s,
        None => cfg.load_schema()?,
    };
    let records = read_csv_with(data_path, &schema, false)?;
    let schema = schema.resolve_levels(&records)?;
    let design = schema.encode(&records)?;
    let preds = predict(&model, &records, &design)?;
    let file = std::fs::File::create(out).map_err(|e| LosError::io(out, e))?;
    let mut w = csv::Writer::from_writer(file);
    let res: std::result::Result<(), csv::Error> = (|| {
        w.write_record(["row", "los_days", "mean", "p_long", "q10", "q50", "q90"])?;
        for p in &preds {
            w.write_record([
                p.row.to_string(),
                p.los_days.map(|v| v.to_string()).unwrap_or_default(),
                p.mean.to_string(),
                p.p_long.to_string(),
                p.q10.to_string(),
                p.q50.to_string(),
                p.q90.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    })();
    res.map_err(|e| LosError::Format { path: out.clone(), reason: e.to_string() })?;
    Ok(Outcome::Done)
}

/// Histogram of `y` on bins `[k w, (k + 1) w)`: `(left, right, count, density)`.
pub fn histogram(y: &[f64], width: f64) -> Result<Vec<(f64, f64, usize, f64)>> {
    if !(width > 0.0 && width.is_finite()) {
        return Err(LosError::Config(format!("bin width must be positive, got {width}")));
    }
    if y.is_empty() {
        return Ok(Vec::new());
    }
    let ymax = y.iter().copied().fold(0.0, f64::max);
    let nb = ((ymax / width).floor() as usize) + 1;
    let mut counts = vec![0usize; nb];
    for &v in y {
        counts[((v / width).floor() as usize).min(nb - 1)] += 1;
    }
    let n = y.len() as f64;
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(k, c)| (k as f64 * width, (k + 1) as f64 * width, c, c as f64 / (n * width)))
        .collect())
}

/// Density curves on `x`: `(short, long, mixture)` per point, each averaged
/// over the records' covariate groups.
pub fn density_curves(model: &MixtureModel, design: &crate::covariates::DesignMatrix, x: &[f64]) -> Result<Vec<[f64; 3]>> {
    let groups = RowGroups::new(model, design)?;
    let resolved = Resolved::new(model, design, &groups)?;
    let total: usize = (0..groups.len()).map(|g| groups.size(g)).sum();
    let weights: Vec<f64> = if total == 0 {
        vec![1.0]
    } else {
        (0..groups.len()).map(|g| groups.size(g) as f64 / total as f64).collect()
    };
    Ok(x
        .iter()
        .map(|&xi| {
            let mut out = [0.0; 3];
            for ((m, t), w) in resolved.models.iter().zip(&resolved.tables).zip(&weights) {
                let fs = m.short.pdf(xi);
                let fl = m.long.pdf_with(xi, t);
                out[0] += w * fs;
                out[1] += w * fl;
                out[2] += w * ((1.0 - m.pi) * fs + m.pi * fl);
            }
            out
        })
        .collect())
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn cmd_plotdata(cfg: &RunConfig) -> Result<Outcome> {
    let data_path = cfg.require(&cfg.data, "stay records (--data)")?;
    let prefix = cfg.require(&cfg.out, "an output prefix (--out)")?;
    let (model, stored) = load_model(cfg.first_model()?)?;
    let schema = match stored {
        Some(s) => s,
        None => cfg.load_schema()?,
    };
    let mut records = read_csv(data_path, &schema)?;
    if let Some(p) = &cfg.drg_preset {
        records = filter_preset(records, &schema, p)?;
    }
    let (data, _) = prepare(&records, &schema)?;
    let width = cfg.bins.unwrap_or(DEFAULT_BIN_WIDTH);
    let hist = histogram(&data.y, width)?;
    let upper = hist.last().map(|h| h.1).unwrap_or(1.0);
    let x: Vec<f64> = (0..CURVE_POINTS)
        .map(|i| upper * (i as f64 + 0.5) / CURVE_POINTS as f64)
        .collect();
    let curves = density_curves(&model, &data.design, &x)?;

    let write = |path: PathBuf, header: &[&str], rows: Vec<Vec<String>>| -> Result<()> {
        let file = std::fs::File::create(&path).map_err(|e| LosError::io(&path, e))?;
        let mut w = csv::Writer::from_writer(file);
        let res: std::result::Result<(), csv::Error> = (|| {
            w.write_record(header)?;
            for r in rows {
                w.write_record(&r)?;
            }
            w.flush()?;
            Ok(())
        })();
        res.map_err(|e| LosError::Format { path, reason: e.to_string() })
    };
    write(
        with_suffix(prefix, ".hist.csv"),
        &["bin_left", "bin_right", "count", "density"],
        hist.iter()
            .map(|(l, r, c, d)| vec![l.to_string(), r.to_string(), c.to_string(), d.to_string()])
            .collect(),
    )?;
    write(
        with_suffix(prefix, ".curve.csv"),
        &["x", "short", "long", "mixture"],
        x.iter()
            .zip(&curves)
            .map(|(xi, c)| vec![xi.to_string(), c[0].to_string(), c[1].to_string(), c[2].to_string()])
            .collect(),
    )?;
    Ok(Outcome::Done)
}
