//! Command-line front end.
//!
//! Every subcommand writes its outputs atomically into `--out` together with
//! a `manifest.json` naming the command, the effective configuration digest,
//! the seed and the SHA-256 of every input file.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bench::{make_benchmark, BenchmarkSpec};
use crate::config::{hex, RunConfig};
use crate::data::{ClassId, DatasetBundle, PseudoLabelSet};
use crate::error::{Error, Result};
use crate::eval::{
    confusion_matrix, contrastive_analysis, evaluate, identification_quality, oracle_split, EvalReport, GroupSpec,
    Setting,
};
use crate::hardness::{estimate_class_priors, identify_cf, identify_ss, HardnessReport};
use crate::hars::run_hars;
use crate::harst::run_harst;
use crate::io;

pub const THREADS_ENV: &str = "HARDBOOST_THREADS";

#[derive(Debug, Parser)]
#[command(name = "hardboost", version, about = "Hard-class identification and hardness-aware boosting for zero-shot learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a planted benchmark.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed in the spec file.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Rank unseen classes by hardness.
    Identify {
        #[arg(long, value_enum)]
        metric: MetricArg,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        k: usize,
        /// Pseudo labels for cf and pncf.
        #[arg(long)]
        preds: Option<PathBuf>,
        /// Class priors for pncf; defaults to the bundle's, else estimated.
        #[arg(long)]
        priors: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Inductive hardness-based synthesizing.
    Hars(RunArgs),
    /// Transductive hardness-based selecting.
    Harst(RunArgs),
    /// Score predictions against the bundle's labels.
    Eval {
        #[arg(long)]
        preds: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Rows per true class in the confusion matrix.
        #[arg(long)]
        cap: Option<usize>,
        /// `k` values for APR and AMR.
        #[arg(long, value_delimiter = ',', default_value = "1,2")]
        k: Vec<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Easy/hard contrastive analysis and identification quality.
    Analyze {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum, default_value = "inductive")]
        setting: SettingArg,
    },
    /// Hyper-parameter grid over one pipeline.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// JSON object mapping any of K, T, alpha, beta to a list of values.
        #[arg(long)]
        grid: PathBuf,
        #[arg(long, value_enum, default_value = "hars")]
        pipeline: PipelineArg,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the seed in the config file.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MetricArg {
    Ss,
    Cf,
    Pncf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SettingArg {
    Inductive,
    Transductive,
}

#[derive(Debug, Clone, Copy, ValueEnum, PartialEq, Eq)]
enum PipelineArg {
    Hars,
    Harst,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: Option<String>,
    pub seed: u64,
    /// File name relative to its input root, mapped to its SHA-256.
    pub inputs: BTreeMap<String, String>,
    pub version: String,
    pub duration_ms: u64,
}

struct Outputs {
    dir: PathBuf,
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    fn new(dir: &Path) -> Self {
        Outputs {
            dir: dir.to_path_buf(),
            files: vec![],
        }
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        self.files.push((name.into(), io::to_json_bytes(value)?));
        Ok(())
    }

    fn text(&mut self, name: &str, text: String) {
        self.files.push((name.into(), text.into_bytes()));
    }

    fn commit(self) -> Result<()> {
        std::fs::create_dir_all(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        for (name, bytes) in &self.files {
            io::write_atomic(&self.dir.join(name), bytes)?;
        }
        Ok(())
    }
}

fn digest_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex(&Sha256::digest(bytes)))
}

fn file_name(p: &Path) -> String {
    p.file_name().map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned())
}

fn digest_inputs(files: &[&Path], dirs: &[&Path]) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for f in files {
        out.insert(file_name(f), digest_file(f)?);
    }
    for d in dirs {
        let mut entries: Vec<PathBuf> = std::fs::read_dir(d)
            .map_err(|e| Error::io(*d, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        entries.sort();
        for p in entries {
            out.insert(format!("{}/{}", file_name(d), file_name(&p)), digest_file(&p)?);
        }
    }
    Ok(out)
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut config = RunConfig::from_json(&text)?;
    if let Some(s) = seed {
        config.seed = s;
    }
    Ok(config)
}

fn unseen_truths(bundle: &DatasetBundle) -> Option<&[ClassId]> {
    (!bundle.test_unseen.is_empty() && bundle.test_unseen.is_fully_labeled()).then(|| bundle.test_unseen.labels())
}

fn report_for(bundle: &DatasetBundle, preds: &PseudoLabelSet, config: &RunConfig, truths: &[ClassId]) -> Result<EvalReport> {
    let report = evaluate(preds, truths, &bundle.split)?;
    let mut report = report.with_diagnostics(&bundle.semantics, &bundle.split, &config.diagnostics_k)?;
    if config.confusion_cap.is_some() {
        let m = confusion_matrix(preds, truths, &bundle.split, config.confusion_cap, config.seed)?;
        report.confusion = m.counts;
    }
    Ok(report)
}

/// Ground-truth labels aligned with a prediction file: the unseen test rows,
/// followed by the seen test rows for generalized runs.
fn aligned_truths(bundle: &DatasetBundle, n: usize) -> Result<Vec<ClassId>> {
    let mut truths = bundle.test_unseen.labels().to_vec();
    if n != truths.len() {
        if let Some(ts) = &bundle.test_seen {
            truths.extend_from_slice(ts.labels());
        }
    }
    if truths.len() != n {
        return Err(Error::DimensionMismatch {
            expected: truths.len(),
            got: n,
        });
    }
    Ok(truths)
}

fn cmd_synth(spec_path: &Path, out: &Path, seed: Option<u64>) -> Result<(Option<String>, u64, Vec<PathBuf>)> {
    let text = std::fs::read_to_string(spec_path).map_err(|e| Error::io(spec_path, e))?;
    let mut spec: BenchmarkSpec = serde_json::from_str(&text)?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    let b = make_benchmark(&spec)?;
    io::write_bundle(out, &b.bundle)?;
    let mut o = Outputs::new(out);
    o.json("ground_truth.json", &b.truth)?;
    o.json("w0.json", &b.w0)?;
    o.commit()?;
    let hash = hex(&Sha256::digest(serde_json::to_vec(&spec)?));
    Ok((Some(hash), spec.seed, vec![spec_path.to_path_buf()]))
}

fn identify(
    metric: MetricArg,
    bundle: &DatasetBundle,
    k: usize,
    preds: Option<&Path>,
    priors: Option<&Path>,
    seed: u64,
) -> Result<HardnessReport> {
    if let MetricArg::Ss = metric {
        return identify_ss(&bundle.semantics, &bundle.split, k);
    }
    let path = preds.ok_or_else(|| Error::invalid("preds", "cf and pncf need --preds"))?;
    let pseudo = io::load_predictions(path)?;
    match metric {
        MetricArg::Cf => identify_cf(&pseudo, &bundle.split, k, None),
        _ => {
            let priors = match (priors, &bundle.class_priors) {
                (Some(p), _) => io::load_priors(p)?,
                (None, Some(p)) => p.clone(),
                (None, None) => estimate_class_priors(&bundle.test_unseen, &pseudo, &bundle.split, seed)?,
            };
            identify_cf(&pseudo, &bundle.split, k, Some(&priors))
        }
    }
}

#[derive(Serialize)]
struct GroupResult {
    acc_u: f64,
    report: EvalReport,
}

#[derive(Serialize)]
struct Analysis {
    setting: Setting,
    oracle: crate::eval::HardEasyOracle,
    baseline: EvalReport,
    groups: BTreeMap<String, GroupResult>,
    ss_hard: Vec<ClassId>,
    ss_quality: crate::eval::IdentificationQuality,
    cf_hard: Vec<ClassId>,
    cf_quality: crate::eval::IdentificationQuality,
}

fn cmd_analyze(bundle: &DatasetBundle, config: &RunConfig, setting: SettingArg) -> Result<Analysis> {
    let setting = match setting {
        SettingArg::Inductive => Setting::Inductive,
        SettingArg::Transductive => Setting::Transductive,
    };
    let base = match setting {
        Setting::Inductive => crate::models::BaseKind::Generative,
        Setting::Transductive => config.base_model,
    };
    let params = config.base_params();
    let (oracle, baseline) = oracle_split(bundle, base, &params, config.seed)?;
    let mut groups = BTreeMap::new();
    for g in GroupSpec::ALL {
        let report = contrastive_analysis(bundle, &oracle, setting, base, g, config.group_size, &params, config.seed)?;
        let key = serde_json::to_value(g)?.as_str().unwrap_or_default().to_string();
        groups.insert(key, GroupResult { acc_u: report.acc_u, report });
    }
    let ss = identify_ss(&bundle.semantics, &bundle.split, config.k)?;
    let predicted: PseudoLabelSet = {
        let truths = bundle.test_unseen.labels();
        let unseen: Vec<ClassId> = bundle.split.unseen().iter().cloned().collect();
        let rows: Vec<Vec<f64>> = (0..truths.len()).map(|i| bundle.test_unseen.row_f64(i)).collect();
        crate::base::fit_predict(base, &bundle.train_seen.samples(), &bundle.semantics, &unseen, &rows, &params, config.seed)?
    };
    let cf = identify_cf(&predicted, &bundle.split, config.k, None)?;
    Ok(Analysis {
        setting,
        ss_quality: identification_quality(&ss.hard, &baseline, &bundle.split)?,
        cf_quality: identification_quality(&cf.hard, &baseline, &bundle.split)?,
        ss_hard: ss.hard,
        cf_hard: cf.hard,
        oracle,
        baseline,
        groups,
    })
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct Grid {
    #[serde(rename = "K", default)]
    k: Vec<usize>,
    #[serde(rename = "T", default)]
    t: Vec<usize>,
    #[serde(default)]
    alpha: Vec<f64>,
    #[serde(default)]
    beta: Vec<f64>,
}

fn grid_points(grid: &Grid, base: &RunConfig) -> Result<Vec<RunConfig>> {
    let or = |v: &Vec<f64>, d: f64| if v.is_empty() { vec![d] } else { v.clone() };
    let ks = if grid.k.is_empty() { vec![base.k] } else { grid.k.clone() };
    let ts = if grid.t.is_empty() { vec![base.t] } else { grid.t.clone() };
    if grid.k.is_empty() && grid.t.is_empty() && grid.alpha.is_empty() && grid.beta.is_empty() {
        return Err(Error::invalid("grid", "no parameter has any values"));
    }
    let mut out = Vec::new();
    for &k in &ks {
        for &t in &ts {
            for &alpha in &or(&grid.alpha, base.alpha) {
                for &beta in &or(&grid.beta, base.beta) {
                    out.push(RunConfig {
                        k,
                        t,
                        alpha,
                        beta,
                        ..base.clone()
                    });
                }
            }
        }
    }
    Ok(out)
}

fn sweep_point(bundle: &DatasetBundle, c: &RunConfig, pipeline: PipelineArg) -> Result<f64> {
    let report = match pipeline {
        PipelineArg::Hars => run_hars(bundle, &c.hars())?.report,
        PipelineArg::Harst => {
            let out = run_harst(bundle, &c.harst()?)?;
            out.trace.records.last().and_then(|r| r.eval.clone())
        }
    };
    report
        .map(|r| r.acc_u)
        .ok_or_else(|| Error::Validation("sweep needs labeled unseen test rows".into()))
}

fn cmd_sweep(bundle: &DatasetBundle, config: &RunConfig, grid_path: &Path, pipeline: PipelineArg) -> Result<String> {
    let text = std::fs::read_to_string(grid_path).map_err(|e| Error::io(grid_path, e))?;
    let grid: Grid = serde_json::from_str(&text)?;
    let points = grid_points(&grid, config)?;
    let results: Vec<Result<f64>> = points.par_iter().map(|c| sweep_point(bundle, c, pipeline)).collect();
    let mut csv = String::from("index,K,T,alpha,beta,acc_u,error\n");
    for (i, (c, r)) in points.iter().zip(results).enumerate() {
        let (acc, err) = match r {
            Ok(a) => (format!("{a}"), String::new()),
            Err(e) => (String::new(), e.to_string().replace([',', '\n'], ";")),
        };
        csv.push_str(&format!("{i},{},{},{},{},{acc},{err}\n", c.k, c.t, c.alpha, c.beta));
    }
    Ok(csv)
}

fn dispatch(command: Command) -> Result<()> {
    let started = Instant::now();
    let (name, out_dir, config_hash, seed, files, dirs): (&str, PathBuf, Option<String>, u64, Vec<PathBuf>, Vec<PathBuf>) =
        match command {
            Command::Synth { spec, out, seed } => {
                let (hash, seed, files) = cmd_synth(&spec, &out, seed)?;
                ("synth", out, hash, seed, files, vec![])
            }
            Command::Identify {
                metric,
                data,
                k,
                preds,
                priors,
                out,
                seed,
            } => {
                let bundle = io::load_bundle(&data)?;
                let report = identify(metric, &bundle, k, preds.as_deref(), priors.as_deref(), seed)?;
                let mut o = Outputs::new(&out);
                o.json("hardness.json", &report)?;
                o.commit()?;
                let files = preds.into_iter().chain(priors).collect();
                ("identify", out, None, seed, files, vec![data])
            }
            Command::Hars(a) => {
                let bundle = io::load_bundle(&a.data)?;
                let config = load_config(&a.config, a.seed)?;
                let result = run_hars(&bundle, &config.hars())?;
                let mut o = Outputs::new(&a.out);
                o.text("predictions.csv", io::format_predictions_csv(&result.predictions));
                o.json("hardness.json", &result.hardness)?;
                if let Some(t) = unseen_truths(&bundle) {
                    o.json("report.json", &report_for(&bundle, &result.predictions, &config, t)?)?;
                }
                o.commit()?;
                ("hars", a.out, Some(config.digest()), config.seed, vec![a.config], vec![a.data])
            }
            Command::Harst(a) => {
                let bundle = io::load_bundle(&a.data)?;
                let config = load_config(&a.config, a.seed)?;
                let mut o = Outputs::new(&a.out);
                match run_harst(&bundle, &config.harst()?) {
                    Ok(result) => {
                        o.json("trace.json", &result.trace)?;
                        o.text("predictions.csv", io::format_predictions_csv(&result.predictions));
                        if let Ok(truths) = aligned_truths(&bundle, result.predictions.len()) {
                            if truths.iter().all(|t| !t.is_unlabeled()) {
                                o.json("report.json", &report_for(&bundle, &result.predictions, &config, &truths)?)?;
                            }
                        }
                        o.commit()?;
                    }
                    Err(failure) => {
                        o.json("trace.json", &failure.trace)?;
                        o.commit()?;
                        return Err(failure.error);
                    }
                }
                ("harst", a.out, Some(config.digest()), config.seed, vec![a.config], vec![a.data])
            }
            Command::Eval {
                preds,
                data,
                out,
                cap,
                k,
                seed,
            } => {
                let bundle = io::load_bundle(&data)?;
                let p = io::load_predictions(&preds)?;
                let truths = aligned_truths(&bundle, p.len())?;
                let report = evaluate(&p, &truths, &bundle.split)?.with_diagnostics(&bundle.semantics, &bundle.split, &k)?;
                let m = confusion_matrix(&p, &truths, &bundle.split, cap, seed)?;
                let mut report = report;
                report.confusion = m.counts.clone();
                let mut o = Outputs::new(&out);
                o.json("report.json", &report)?;
                o.text("confusion.csv", m.to_csv());
                o.commit()?;
                ("eval", out, None, seed, vec![preds], vec![data])
            }
            Command::Analyze { run, setting } => {
                let bundle = io::load_bundle(&run.data)?;
                let config = load_config(&run.config, run.seed)?;
                let analysis = cmd_analyze(&bundle, &config, setting)?;
                let mut o = Outputs::new(&run.out);
                o.json("analysis.json", &analysis)?;
                o.commit()?;
                ("analyze", run.out, Some(config.digest()), config.seed, vec![run.config], vec![run.data])
            }
            Command::Sweep { run, grid, pipeline } => {
                let bundle = io::load_bundle(&run.data)?;
                let config = load_config(&run.config, run.seed)?;
                let csv = cmd_sweep(&bundle, &config, &grid, pipeline)?;
                let mut o = Outputs::new(&run.out);
                o.text("sweep.csv", csv);
                o.commit()?;
                ("sweep", run.out, Some(config.digest()), config.seed, vec![run.config, grid], vec![run.data])
            }
        };
    let file_refs: Vec<&Path> = files.iter().map(PathBuf::as_path).collect();
    let dir_refs: Vec<&Path> = dirs.iter().map(PathBuf::as_path).collect();
    let manifest = RunManifest {
        command: name.into(),
        config_hash,
        seed,
        inputs: digest_inputs(&file_refs, &dir_refs)?,
        version: env!("CARGO_PKG_VERSION").into(),
        duration_ms: started.elapsed().as_millis() as u64,
    };
    io::write_json(&out_dir.join("manifest.json"), &manifest)
}

fn configure_threads() {
    if let Some(n) = std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            // Fails only if a pool already exists, which is harmless.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// process exit code: 0 on success, 1 on usage errors, 2 on runtime errors.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    configure_threads();
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}
