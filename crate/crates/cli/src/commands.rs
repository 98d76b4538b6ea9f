//! The subcommands as library functions. Each returns a serializable report that carries the
//! hash of the invocation and writes its files under the output directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use hsd_core::complex::ShapeSpec;
use hsd_core::dec::{DecOperators, StarMode};
use hsd_core::model::{load_checkpoint, save_checkpoint, HsdContext, HsdModel};
use hsd_core::spectrum::{eigensolve, hodge_decompose, EigenMethod, SpectrumRecord};
use hsd_core::tasks::{load_dataset, save_dataset, Sample};
use hsd_core::train::{harmonic_violation, History, MetricContext, MetricsReport, Trainer};
use hsd_core::{Cochain64, Complex64, Dataset64, Dec64, Model64};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{hex, load_complex, RunConfig};
use crate::error::{CliError, CliResult};

pub const CHECKPOINT_FILE: &str = "model.json";
pub const HISTORY_FILE: &str = "history.csv";

/// Hash of the arguments of a command that does not take a run config.
fn invocation_hash<T: Serialize>(args: &T) -> String {
    let json = serde_json::to_string(args).expect("arguments serialize");
    hex(&Sha256::digest(json.as_bytes()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

/// Eigenvalues of `L_k` with enough modes to see past the nullspace.
fn resolved_spectrum(dec: &Dec64, k: usize, modes: usize) -> CliResult<hsd_core::Spectrum64> {
    let n = dec.count(k);
    let mut m = modes.clamp(1, n.max(1));
    loop {
        let s = eigensolve(dec, k, m, EigenMethod::Auto)?;
        if s.nullspace_resolved() || m >= n {
            return Ok(s);
        }
        m = (2 * m).min(n);
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DegreeReport {
    pub degree: usize,
    pub count: usize,
    pub betti: usize,
    /// Leading eigenvalues of L_k, ascending.
    pub eigenvalues: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AnalyzeReport {
    pub config_hash: String,
    pub complex: String,
    pub complex_hash: String,
    pub counts: Vec<usize>,
    pub euler_characteristic: i64,
    pub betti: Vec<usize>,
    pub degrees: Vec<DegreeReport>,
}

impl AnalyzeReport {
    pub fn check(&self, expect: &[usize]) -> CliResult<()> {
        if self.betti == expect {
            Ok(())
        } else {
            Err(CliError::Validation(format!("betti numbers {:?} differ from expected {expect:?}", self.betti)))
        }
    }
}

/// Counts, Euler characteristic, leading eigenvalues and Betti numbers.
///
/// `degrees` limits the eigenvalue listing; Betti numbers are always computed for every degree.
pub fn analyze(source: &str, degrees: Option<&[usize]>, modes: usize) -> CliResult<AnalyzeReport> {
    let (complex, _) = load_complex(source)?;
    let dec = DecOperators::from_complex(&complex, StarMode::LumpedVolume)?;
    let mut betti = Vec::new();
    let mut listed = Vec::new();
    for k in 0..=complex.dims() {
        let s = resolved_spectrum(&dec, k, modes)?;
        betti.push(s.betti());
        if degrees.is_none_or(|d| d.contains(&k)) {
            listed.push(DegreeReport {
                degree: k,
                count: complex.count(k),
                betti: s.betti(),
                eigenvalues: s.eigenvalues.iter().take(modes).copied().collect(),
            });
        }
    }
    Ok(AnalyzeReport {
        config_hash: invocation_hash(&("analyze", source, degrees, modes)),
        complex: source.to_string(),
        complex_hash: complex.content_hash(),
        counts: complex.counts(),
        euler_characteristic: complex.euler_characteristic(),
        betti,
        degrees: listed,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ComponentNorms {
    pub input: f64,
    pub exact: f64,
    pub coexact: f64,
    pub harmonic: f64,
}

/// Hodge inner products between components, divided by the product of their norms.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PairwiseInner {
    pub exact_coexact: f64,
    pub exact_harmonic: f64,
    pub coexact_harmonic: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DecomposeReport {
    pub config_hash: String,
    pub complex_hash: String,
    pub degree: usize,
    pub norms: ComponentNorms,
    pub inner_products: PairwiseInner,
    /// `‖ω − (exact + coexact + harmonic)‖_* / ‖ω‖_*`.
    pub reconstruction_residual: f64,
    pub files: Vec<PathBuf>,
}

/// Reads a cochain file `{degree, complex_hash, values}`.
pub fn read_cochain(path: &Path, complex: &Complex64) -> CliResult<Cochain64> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    let rec: hsd_core::cochain::CochainRecord = serde_json::from_str(&text)?;
    let hash = complex.content_hash();
    if let Some(h) = &rec.complex_hash {
        if *h != hash {
            return Err(CliError::Validation(format!("cochain belongs to complex {h}, not {hash}")));
        }
    }
    if rec.degree > complex.dims() || rec.values.len() != complex.count(rec.degree) {
        return Err(CliError::Validation(format!(
            "cochain of degree {} with {} values does not fit the complex",
            rec.degree,
            rec.values.len()
        )));
    }
    Ok(rec.to_cochain())
}

pub fn write_cochain(path: &Path, w: &Cochain64, complex_hash: &str) -> CliResult<()> {
    write_json(path, &w.to_record().with_hash(complex_hash))
}

/// Splits a cochain into exact, coexact and harmonic parts and writes one file per part.
pub fn decompose(source: &str, cochain: &Path, out: &Path) -> CliResult<DecomposeReport> {
    let (complex, _) = load_complex(source)?;
    let w = read_cochain(cochain, &complex)?;
    let dec = DecOperators::from_complex(&complex, StarMode::LumpedVolume)?;
    let parts = hodge_decompose(&dec, &w)?;
    let hash = complex.content_hash();
    let norm = |c: &Cochain64| dec.norm(c).expect("degree checked");
    let rel = |a: &Cochain64, b: &Cochain64| {
        let den = norm(a) * norm(b);
        if den > 0.0 {
            dec.inner(a, b).expect("degree checked") / den
        } else {
            0.0
        }
    };
    let sum = parts.exact.add(&parts.coexact)?.add(&parts.harmonic)?;
    let residual = norm(&w.sub(&sum)?) / norm(&w).max(f64::MIN_POSITIVE);
    let mut files = Vec::new();
    for (name, c) in [("exact", &parts.exact), ("coexact", &parts.coexact), ("harmonic", &parts.harmonic)] {
        let p = out.join(format!("{name}.json"));
        write_cochain(&p, c, &hash)?;
        files.push(p);
    }
    let report = DecomposeReport {
        config_hash: invocation_hash(&("decompose", source, cochain)),
        complex_hash: hash,
        degree: w.degree,
        norms: ComponentNorms {
            input: norm(&w),
            exact: norm(&parts.exact),
            coexact: norm(&parts.coexact),
            harmonic: norm(&parts.harmonic),
        },
        inner_products: PairwiseInner {
            exact_coexact: rel(&parts.exact, &parts.coexact),
            exact_harmonic: rel(&parts.exact, &parts.harmonic),
            coexact_harmonic: rel(&parts.coexact, &parts.harmonic),
        },
        reconstruction_residual: residual,
        files,
    };
    write_json(&out.join("decompose.json"), &report)?;
    Ok(report)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub config_hash: String,
    pub complex_hash: String,
    pub method: EigenMethod,
    #[serde(flatten)]
    pub spectrum: SpectrumRecord,
}

pub fn spectrum(source: &str, degree: usize, modes: usize, method: EigenMethod) -> CliResult<SpectrumReport> {
    let (complex, _) = load_complex(source)?;
    if degree > complex.dims() {
        return Err(CliError::Validation(format!("degree {degree} exceeds complex dimension {}", complex.dims())));
    }
    let dec = DecOperators::from_complex(&complex, StarMode::LumpedVolume)?;
    let s = eigensolve(&dec, degree, modes.min(complex.count(degree)), method)?;
    Ok(SpectrumReport {
        config_hash: invocation_hash(&("spectrum", source, degree, modes, method)),
        complex_hash: complex.content_hash(),
        method,
        spectrum: s.to_record(),
    })
}

/// Complex, operators and dataset of a run.
pub struct Prepared {
    pub complex: Complex64,
    pub shape: Option<ShapeSpec>,
    pub dec: Dec64,
    pub data: Dataset64,
}

/// Loads the dataset named by the config, or regenerates it from the task spec.
pub fn prepare(cfg: &RunConfig) -> CliResult<Prepared> {
    let (complex, shape) = load_complex(&cfg.complex)?;
    let data = match &cfg.data {
        Some(dir) => {
            let (data, stored) = load_dataset(dir)?;
            if stored.content_hash() != complex.content_hash() {
                return Err(CliError::Validation(format!(
                    "dataset in {} was generated on another complex than '{}'",
                    dir.display(),
                    cfg.complex
                )));
            }
            if data.task != cfg.task {
                return Err(CliError::Validation(format!("dataset in {} has a different task spec", dir.display())));
            }
            Some(data)
        }
        None => None,
    };
    let dec = DecOperators::from_complex(&complex, cfg.model.star_mode)?;
    let data = match data {
        Some(d) => d,
        None => cfg.task.generate_with(&complex, &dec)?,
    };
    Ok(Prepared { complex, shape, dec, data })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GenReport {
    pub config_hash: String,
    pub dir: PathBuf,
    pub complex_hash: String,
    pub samples: usize,
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

/// Writes the dataset to `cfg.data`, or to `<output>/data`.
pub fn gen_data(cfg: &RunConfig) -> CliResult<GenReport> {
    let fresh = RunConfig { data: None, ..cfg.clone() };
    let p = prepare(&fresh)?;
    let dir = cfg.data.clone().unwrap_or_else(|| cfg.output.join("data"));
    save_dataset(&p.data, &p.complex, p.shape.as_ref(), &dir)?;
    let report = GenReport {
        config_hash: cfg.hash(),
        dir,
        complex_hash: p.complex.content_hash(),
        samples: p.data.len(),
        train: p.data.split.train.len(),
        val: p.data.split.val.len(),
        test: p.data.split.test.len(),
    };
    write_json(&cfg.output.join("gen.json"), &report)?;
    Ok(report)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainReport {
    pub config_hash: String,
    pub complex_hash: String,
    pub param_count: usize,
    pub best_epoch: usize,
    pub best_val: f64,
    pub val_metrics: Option<MetricsReport>,
    /// Largest harmonic-coefficient deviation over all samples after training.
    pub harmonic_violation: f64,
    pub checkpoint: PathBuf,
    pub history: PathBuf,
}

/// Loss history CSV, headed by the config hash as a comment line.
pub fn history_csv(history: &History, config_hash: &str) -> String {
    format!("# config_hash: {config_hash}\n{}", history.to_csv())
}

fn evaluate_split(model: &Model64, p: &Prepared, samples: &[&Sample<f64>]) -> CliResult<Option<MetricsReport>> {
    if samples.is_empty() {
        return Ok(None);
    }
    let geo = p.complex.compute_geometry()?;
    let mc = MetricContext::new(&p.complex, &geo, &p.dec, &model.context.subspace);
    let mut reports = Vec::with_capacity(samples.len());
    for s in samples {
        reports.push(mc.evaluate(&model.predict(&s.input)?, &s.target)?);
    }
    Ok(Some(MetricsReport::mean(&reports)))
}

/// Trains a model, writes the checkpoint, history CSV, effective config and report.
pub fn train(cfg: &RunConfig) -> CliResult<(Model64, History, TrainReport)> {
    let p = prepare(cfg)?;
    let mcfg = cfg.model_config();
    let ctx = HsdContext::with_dec(&p.complex, &p.dec, &mcfg)?;
    let mut model = HsdModel::new(ctx, mcfg, cfg.train.seed)?;
    let trainer = Trainer::new(&p.dec, cfg.task.kind(), cfg.train.clone())?;
    let history = trainer.fit(&mut model, &p.data)?;
    let hash = cfg.hash();
    fs::create_dir_all(&cfg.output)?;
    let checkpoint = cfg.output.join(CHECKPOINT_FILE);
    save_checkpoint(&model, &checkpoint)?;
    let hist_path = cfg.output.join(HISTORY_FILE);
    fs::write(&hist_path, history_csv(&history, &hash))?;
    write_json(&cfg.output.join("config.json"), cfg)?;
    let val: Vec<&Sample<f64>> = p.data.val().collect();
    let report = TrainReport {
        config_hash: hash,
        complex_hash: p.complex.content_hash(),
        param_count: model.param_count(),
        best_epoch: history.best_epoch,
        best_val: history.best_val,
        val_metrics: evaluate_split(&model, &p, &val)?,
        harmonic_violation: harmonic_violation(&model, p.data.samples.iter())?,
        checkpoint,
        history: hist_path,
    };
    write_json(&cfg.output.join("train.json"), &report)?;
    Ok((model, history, report))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SplitName {
    Train,
    Val,
    Test,
}

impl SplitName {
    fn select(self, data: &Dataset64) -> Vec<&Sample<f64>> {
        match self {
            SplitName::Train => data.train().collect(),
            SplitName::Val => data.val().collect(),
            SplitName::Test => data.test().collect(),
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Val => "val",
            SplitName::Test => "test",
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvalReport {
    pub config_hash: String,
    /// Complex the checkpoint was trained on.
    pub trained_on: String,
    /// Complex evaluated on; differs from `trained_on` for zero-shot transfer.
    pub evaluated_on: String,
    pub split: SplitName,
    pub samples: usize,
    pub metrics: MetricsReport,
}

/// Loads a checkpoint onto the complex of `cfg` (rebuilding the spectral context there).
pub fn load_model(cfg: &RunConfig, p: &Prepared, checkpoint: &Path) -> CliResult<(Model64, String)> {
    let header: hsd_core::model::CheckpointMeta = serde_json::from_str(
        &fs::read_to_string(checkpoint)
            .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", checkpoint.display())))?,
    )?;
    if header.config.degree != cfg.task.kind().target_degree() {
        return Err(CliError::Validation(format!(
            "checkpoint predicts degree {} but the task needs {}",
            header.config.degree,
            cfg.task.kind().target_degree()
        )));
    }
    let ctx = HsdContext::with_dec(&p.complex, &p.dec, &header.config)?;
    let (model, meta) = load_checkpoint(checkpoint, ctx)?;
    Ok((model, meta.complex_hash))
}

fn checkpoint_path(cfg: &RunConfig, checkpoint: Option<&Path>) -> PathBuf {
    checkpoint.map_or_else(|| cfg.output.join(CHECKPOINT_FILE), Path::to_path_buf)
}

/// Metrics of a checkpoint on one split; writes `<output>/metrics_<split>.json`.
pub fn eval(cfg: &RunConfig, checkpoint: Option<&Path>, split: SplitName) -> CliResult<EvalReport> {
    let p = prepare(cfg)?;
    let (model, trained_on) = load_model(cfg, &p, &checkpoint_path(cfg, checkpoint))?;
    let samples = split.select(&p.data);
    let metrics = evaluate_split(&model, &p, &samples)?
        .ok_or_else(|| CliError::Validation(format!("split '{}' is empty", split.as_str())))?;
    let report = EvalReport {
        config_hash: cfg.hash(),
        trained_on,
        evaluated_on: p.complex.content_hash(),
        split,
        samples: samples.len(),
        metrics,
    };
    write_json(&cfg.output.join(format!("metrics_{}.json", split.as_str())), &report)?;
    Ok(report)
}

/// Mean spectral energies `|c_i|²` of prediction and target per retained eigenvalue.
///
/// With `passthrough` the targets stand in for the predictions and no checkpoint is read.
pub fn spectral_energy(cfg: &RunConfig, checkpoint: Option<&Path>, split: SplitName, passthrough: bool) -> CliResult<String> {
    let p = prepare(cfg)?;
    let samples = split.select(&p.data);
    if samples.is_empty() {
        return Err(CliError::Validation(format!("split '{}' is empty", split.as_str())));
    }
    let model = if passthrough {
        HsdModel::zeroed(HsdContext::with_dec(&p.complex, &p.dec, &cfg.model_config())?, cfg.model_config())?
    } else {
        load_model(cfg, &p, &checkpoint_path(cfg, checkpoint))?.0
    };
    let sub = &model.context.subspace;
    let m = sub.modes();
    let (mut ep, mut et) = (DVector::zeros(m), DVector::zeros(m));
    for s in &samples {
        let pred = if passthrough { s.target.clone() } else { model.predict(&s.input)? };
        let cp = sub.spectral_coeffs(&pred)?;
        let ct = sub.spectral_coeffs(&s.target)?;
        ep += cp.component_mul(&cp);
        et += ct.component_mul(&ct);
    }
    let n = samples.len() as f64;
    let mut csv = format!("# config_hash: {}\nindex,eigenvalue,pred_energy,gt_energy\n", cfg.hash());
    for i in 0..m {
        let _ = writeln!(csv, "{i},{:?},{:?},{:?}", sub.spectrum.eigenvalues[i], ep[i] / n, et[i] / n);
    }
    fs::create_dir_all(&cfg.output)?;
    fs::write(cfg.output.join(format!("spectral_energy_{}.csv", split.as_str())), &csv)?;
    Ok(csv)
}
