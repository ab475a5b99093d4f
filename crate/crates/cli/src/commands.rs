use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use relulab::convexnn::{
    features, sample_library, solve_l1_features, LibraryScheme, SolverOptions, SquaredLoss,
    TruncatedLogistic, UnitLibrary,
};
use relulab::data::{add_label_noise, censor as censor_data};
use relulab::gradcheck::{gradcheck as run_gradcheck, GradcheckConfig, GradcheckReport};
use relulab::hardness::{verify_exhaustive, HalfspaceSet, VerificationReport};
use relulab::loss::{zero_one_error, RegConfig};
use relulab::model::{Checkpoint, NetParams};
use relulab::optim::{self, EpochRecord, TrainConfig};
use relulab::sweep::{
    aggregate, aggregate_to_csv, prepare_splits, records_to_csv, run_sweep, DatasetSpec,
    SweepConfig,
};
use relulab::{Error, Matrix, Result, Rng};

use crate::GlobalArgs;

pub const TRAIN_SCHEMA: &str = "relulab.train.v1";
pub const CENSOR_SCHEMA: &str = "relulab.censor.v1";
pub const NOISE_SCHEMA: &str = "relulab.noise.v1";
pub const CONVEXNN_SCHEMA: &str = "relulab.convexnn.v1";
pub const HALFSPACE_SCHEMA: &str = "relulab.halfspace.v1";
pub const GRADCHECK_SCHEMA: &str = "relulab.gradcheck.v1";

/// Largest accepted relative gradient error.
pub const GRADCHECK_THRESHOLD: f64 = 1e-6;

pub const TRAIN_HELP: &str =
    "Output: JSON, schema relulab.train.v1 (final and early-stopped errors, \
per-epoch history, final parameters). --checkpoint writes relulab.netparams v1.";
pub const SWEEP_HELP: &str =
    "Output: CSV, schema v1, first line \"# relulab sweep schema v1\", columns \
variant,seed,H,lambda,epochs_run,train_error_final,train_error_earlystop,validation_error_best,\
test_error_final,test_error_earlystop. --aggregate writes \"# relulab sweep aggregate schema v1\". \
Exits 1 when any cell diverged.";
pub const CENSOR_HELP: &str = "Output: JSON, schema relulab.censor.v1 (teacher labels per split, \
disagreement count, teacher parameters).";
pub const NOISE_HELP: &str =
    "Output: JSON, schema relulab.noise.v1 (changed indices and new labels \
for the train and validation splits).";
pub const CONVEXNN_HELP: &str = "Input library: {\"scheme\": \"grid_sphere2d\" | \"gaussian_normalized\", \
\"m\": N} or {\"units\": [[...], ...]}. Loss: \"squared\" (default) or \"truncated_logistic\". \
Output: JSON, schema relulab.convexnn.v1 (units, v, objective, kkt_residual, iterations, converged).";
pub const HALFSPACE_HELP: &str =
    "Prints a text report; --out writes JSON, schema relulab.halfspace.v1. \
Exits 1 when any point violates the construction.";
pub const BALANCE_HELP: &str = "Output: checkpoint JSON, format relulab.netparams v1. \
Penalties before and after go to stderr.";
pub const GRADCHECK_HELP: &str = "Prints the largest relative error; --out writes JSON, schema \
relulab.gradcheck.v1. Exits 0 iff the error is below 1e-6.";

const TAG_SPLITS: u64 = 1;
const TAG_TRAIN: u64 = 2;
const TAG_NOISE: u64 = 3;
const TAG_LIBRARY: u64 = 4;
const TAG_GRADCHECK: u64 = 5;

pub enum Status {
    Success,
    CheckFailed,
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(serde_json::from_str(&text)?)
}

fn write_to(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| Error::Io {
            path: p.to_path_buf(),
            source: e,
        }),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| Error::Io {
                    path: "<stdout>".into(),
                    source: e,
                })
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn default_init_sigma() -> f64 {
    0.1
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainJob {
    dataset: DatasetSpec,
    hidden: usize,
    #[serde(default)]
    train: TrainConfig,
    #[serde(default = "default_init_sigma")]
    init_sigma: f64,
}

#[derive(Serialize)]
struct TrainReport<'a> {
    schema: &'static str,
    seed: u64,
    hidden: usize,
    epochs_run: usize,
    converged: bool,
    train_error_final: f64,
    validation_error_final: f64,
    test_error_final: f64,
    best_epoch: usize,
    validation_error_best: f64,
    train_error_earlystop: f64,
    test_error_earlystop: f64,
    history: &'a [EpochRecord],
    params: Checkpoint,
}

pub fn train(g: &GlobalArgs, config: &Path, checkpoint: Option<&Path>) -> Result<Status> {
    let job: TrainJob = read_json(config)?;
    if job.hidden == 0 {
        return Err(Error::InvalidArgument("hidden must be >= 1".into()));
    }
    let master = Rng::new(g.seed);
    let data = prepare_splits(&job.dataset, &g.data_dir, &master.derive(&[TAG_SPLITS]))?;
    let mut cfg = job.train;
    cfg.sgd.batch_size = cfg.sgd.batch_size.min(data.train.len());
    let mut rng = master.derive(&[TAG_TRAIN]);
    let init = NetParams::init(
        data.train.dim(),
        job.hidden,
        data.train.classes(),
        job.init_sigma,
        &mut rng,
    )?;
    let out = optim::train(init, &data.train, Some(&data.validation), &cfg, &mut rng)?;
    let best = out.best.as_ref().expect("validation set supplied");
    let report = TrainReport {
        schema: TRAIN_SCHEMA,
        seed: g.seed,
        hidden: job.hidden,
        epochs_run: out.epochs_run(),
        converged: out.converged,
        train_error_final: out.final_record().train_error,
        validation_error_final: zero_one_error(&out.params, &data.validation)?,
        test_error_final: zero_one_error(&out.params, &data.test)?,
        best_epoch: best.epoch,
        validation_error_best: best.validation_error,
        train_error_earlystop: zero_one_error(&best.params, &data.train)?,
        test_error_earlystop: zero_one_error(&best.params, &data.test)?,
        history: &out.history,
        params: Checkpoint::from(&out.params),
    };
    if let Some(path) = checkpoint {
        out.params.save_json(path)?;
    }
    write_to(g.out.as_deref(), &to_json(&report)?)?;
    Ok(Status::Success)
}

pub fn sweep(g: &GlobalArgs, config: &Path, aggregate_out: Option<&Path>) -> Result<Status> {
    let cfg = SweepConfig::load(config)?;
    let outcome = run_sweep(
        &cfg,
        &g.data_dir,
        &Rng::new(g.seed),
        g.workers.map(usize::from),
    )?;
    write_to(g.out.as_deref(), &records_to_csv(&outcome.records)?)?;
    if let Some(path) = aggregate_out {
        write_to(Some(path), &aggregate_to_csv(&aggregate(&outcome.records))?)?;
    }
    for f in &outcome.failures {
        eprintln!(
            "cell failed: variant={} seed={} H={} lambda={}: {}",
            f.variant, f.seed, f.hidden, f.lambda, f.message
        );
    }
    Ok(if outcome.failures.is_empty() {
        Status::Success
    } else {
        Status::CheckFailed
    })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CensorJob {
    dataset: DatasetSpec,
    h0: usize,
    #[serde(default)]
    train: TrainConfig,
    #[serde(default = "default_init_sigma")]
    init_sigma: f64,
}

#[derive(Serialize)]
struct SplitLabels {
    train: Vec<usize>,
    validation: Vec<usize>,
    test: Vec<usize>,
}

#[derive(Serialize)]
struct CensorReport {
    schema: &'static str,
    seed: u64,
    h0: usize,
    examples: usize,
    disagreements: usize,
    labels: SplitLabels,
    teacher: Checkpoint,
}

pub fn censor(g: &GlobalArgs, config: &Path) -> Result<Status> {
    let job: CensorJob = read_json(config)?;
    let master = Rng::new(g.seed);
    let data = prepare_splits(&job.dataset, &g.data_dir, &master.derive(&[TAG_SPLITS]))?;
    let mut cfg = job.train;
    cfg.reg = RegConfig::none();
    let c = censor_data(
        &[&data.train, &data.validation, &data.test],
        job.h0,
        &cfg,
        job.init_sigma,
        &mut master.derive(&[TAG_TRAIN]),
    )?;
    let labels: Vec<Vec<usize>> = c.datasets.iter().map(|d| d.labels().to_vec()).collect();
    let [train, validation, test]: [Vec<usize>; 3] = labels.try_into().expect("three splits");
    let report = CensorReport {
        schema: CENSOR_SCHEMA,
        seed: g.seed,
        h0: job.h0,
        examples: train.len() + validation.len() + test.len(),
        disagreements: c.disagreements,
        labels: SplitLabels {
            train,
            validation,
            test,
        },
        teacher: Checkpoint::from(&c.teacher),
    };
    write_to(g.out.as_deref(), &to_json(&report)?)?;
    Ok(Status::Success)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct NoiseJob {
    dataset: DatasetSpec,
    fraction: f64,
}

#[derive(Serialize)]
struct NoisySplit {
    changed: Vec<usize>,
    labels: Vec<usize>,
}

#[derive(Serialize)]
struct NoiseReport {
    schema: &'static str,
    seed: u64,
    fraction: f64,
    train: NoisySplit,
    validation: NoisySplit,
}

pub fn noise(g: &GlobalArgs, config: &Path) -> Result<Status> {
    let job: NoiseJob = read_json(config)?;
    let master = Rng::new(g.seed);
    let data = prepare_splits(&job.dataset, &g.data_dir, &master.derive(&[TAG_SPLITS]))?;
    let mut rng = master.derive(&[TAG_NOISE]);
    let mut noisy = |ds| -> Result<NoisySplit> {
        let n = add_label_noise(ds, job.fraction, &mut rng)?;
        Ok(NoisySplit {
            changed: n.changed,
            labels: n.dataset.labels().to_vec(),
        })
    };
    let report = NoiseReport {
        schema: NOISE_SCHEMA,
        seed: g.seed,
        fraction: job.fraction,
        train: noisy(&data.train)?,
        validation: noisy(&data.validation)?,
    };
    write_to(g.out.as_deref(), &to_json(&report)?)?;
    Ok(Status::Success)
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum LibrarySpec {
    Sampled { scheme: LibraryScheme, m: usize },
    Explicit { units: Vec<Vec<f64>> },
}

#[derive(Clone, Copy, Debug, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
enum ConvexLoss {
    #[default]
    Squared,
    TruncatedLogistic,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConvexInstance {
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    lambda: f64,
    library: LibrarySpec,
    #[serde(default)]
    loss: ConvexLoss,
    #[serde(default)]
    solver: SolverOptions,
}

#[derive(Serialize)]
struct ConvexReport {
    schema: &'static str,
    m: usize,
    units: Vec<Vec<f64>>,
    v: Vec<f64>,
    objective: f64,
    kkt_residual: f64,
    iterations: usize,
    converged: bool,
}

pub fn convexnn(g: &GlobalArgs, config: &Path) -> Result<Status> {
    let inst: ConvexInstance = read_json(config)?;
    let x = Matrix::from_rows(&inst.x)?;
    let lib = match inst.library {
        LibrarySpec::Sampled { scheme, m } => sample_library(
            x.cols(),
            m,
            scheme,
            &mut Rng::new(g.seed).derive(&[TAG_LIBRARY]),
        )?,
        LibrarySpec::Explicit { units } => UnitLibrary::new(Matrix::from_rows(&units)?)?,
    };
    let phi = features(&lib, &x)?;
    let sol = match inst.loss {
        ConvexLoss::Squared => {
            solve_l1_features(&phi, &inst.y, inst.lambda, &SquaredLoss, &inst.solver)?
        }
        ConvexLoss::TruncatedLogistic => {
            solve_l1_features(&phi, &inst.y, inst.lambda, &TruncatedLogistic, &inst.solver)?
        }
    };
    let report = ConvexReport {
        schema: CONVEXNN_SCHEMA,
        m: lib.len(),
        units: lib.units().row_iter().map(<[f64]>::to_vec).collect(),
        v: sol.v,
        objective: sol.objective,
        kkt_residual: sol.kkt_residual,
        iterations: sol.iterations,
        converged: sol.converged,
    };
    write_to(g.out.as_deref(), &to_json(&report)?)?;
    Ok(Status::Success)
}

#[derive(Serialize)]
struct HalfspaceOutput<'a> {
    schema: &'static str,
    normals: String,
    passed: bool,
    #[serde(flatten)]
    report: &'a VerificationReport,
}

pub fn halfspace(g: &GlobalArgs, inline: Option<&str>, file: Option<&Path>) -> Result<Status> {
    let hs = match (inline, file) {
        (Some(text), _) => HalfspaceSet::parse(text)?,
        (None, Some(path)) => HalfspaceSet::load(path)?,
        (None, None) => return Err(Error::InvalidArgument("no normals given".into())),
    };
    let report = verify_exhaustive(&hs)?;
    let mut text = format!(
        "normals: {hs}\ndimension: {}\nhalfspaces: {}\npoints checked: {}\nmembers: {}\nviolations: {}\n",
        report.dim, report.halfspaces, report.points_checked, report.members, report.violations
    );
    match report.margin_gap {
        Some(gap) => text.push_str(&format!("margin gap: {gap}\n")),
        None => text.push_str("margin gap: n/a\n"),
    }
    for c in &report.counterexamples {
        text.push_str(&format!("counterexample {:?}: {:?}\n", c.x, c.violation));
    }
    text.push_str(if report.passed() {
        "result: PASS\n"
    } else {
        "result: FAIL\n"
    });
    print!("{text}");
    if let Some(path) = g.out.as_deref() {
        let out = HalfspaceOutput {
            schema: HALFSPACE_SCHEMA,
            normals: hs.to_string(),
            passed: report.passed(),
            report: &report,
        };
        write_to(Some(path), &to_json(&out)?)?;
    }
    Ok(if report.passed() {
        Status::Success
    } else {
        Status::CheckFailed
    })
}

pub fn balance(g: &GlobalArgs, input: &Path, unit: bool) -> Result<Status> {
    let p = NetParams::load_json(input)?;
    let before = p.half_squared_norm();
    let mut b = p.balance()?;
    let after = b.half_squared_norm();
    if unit {
        b = b.normalize_to_unit()?;
    }
    eprintln!("half squared norm: {before} -> {after}");
    write_to(g.out.as_deref(), &to_json(&Checkpoint::from(&b))?)?;
    Ok(Status::Success)
}

#[derive(Serialize)]
struct GradcheckOutput<'a> {
    schema: &'static str,
    seed: u64,
    threshold: f64,
    passed: bool,
    config: &'a GradcheckConfig,
    #[serde(flatten)]
    report: &'a GradcheckReport,
}

pub fn gradcheck(g: &GlobalArgs, config: Option<&Path>, pairs: Option<usize>) -> Result<Status> {
    let mut cfg: GradcheckConfig = match config {
        Some(path) => read_json(path)?,
        None => GradcheckConfig::default(),
    };
    if let Some(n) = pairs {
        cfg.pairs = n;
    }
    let report = run_gradcheck(&cfg, &Rng::new(g.seed).derive(&[TAG_GRADCHECK]))?;
    let passed = report.max_rel_error < GRADCHECK_THRESHOLD;
    println!("pairs: {}", report.pairs);
    println!("max relative error: {:e}", report.max_rel_error);
    println!("max absolute error: {:e}", report.max_abs_error);
    println!("result: {}", if passed { "PASS" } else { "FAIL" });
    if let Some(path) = g.out.as_deref() {
        let out = GradcheckOutput {
            schema: GRADCHECK_SCHEMA,
            seed: g.seed,
            threshold: GRADCHECK_THRESHOLD,
            passed,
            config: &cfg,
            report: &report,
        };
        write_to(Some(path), &to_json(&out)?)?;
    }
    Ok(if passed {
        Status::Success
    } else {
        Status::CheckFailed
    })
}
