//! Network-size sweeps: train over a grid of hidden-layer sizes under each
//! dataset variant, record final and early-stopped errors, and emit CSV.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{
    self, add_label_noise, censor, load_cifar10, load_mnist, planted_synthetic, CifarSplit,
    LabeledDataset, MnistSplit, PlantedSpec, SplitTag,
};
use crate::error::{Error, Result};
use crate::loss::{zero_one_error, LossKind, RegConfig};
use crate::model::NetParams;
use crate::numerics::Rng;
use crate::optim::{train, SgdConfig, StoppingRule, TrainConfig};

/// First line of every sweep CSV.
pub const CSV_SCHEMA_LINE: &str = "# relulab sweep schema v1";
pub const CSV_COLUMNS: [&str; 10] = [
    "variant",
    "seed",
    "H",
    "lambda",
    "epochs_run",
    "train_error_final",
    "train_error_earlystop",
    "validation_error_best",
    "test_error_final",
    "test_error_earlystop",
];
/// First line of an aggregate CSV.
pub const AGGREGATE_SCHEMA_LINE: &str = "# relulab sweep aggregate schema v1";

const TAG_DATA: u64 = 1;
const TAG_CENSOR: u64 = 2;
const TAG_NOISE: u64 = 3;
const TAG_CELL: u64 = 4;
const TAG_SPLIT: u64 = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Original,
    WeightDecay,
    Censored,
    CensoredNoisy,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Original,
        Variant::WeightDecay,
        Variant::Censored,
        Variant::CensoredNoisy,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Original => "original",
            Variant::WeightDecay => "weight_decay",
            Variant::Censored => "censored",
            Variant::CensoredNoisy => "censored_noisy",
        }
    }

    fn is_censored(self) -> bool {
        matches!(self, Variant::Censored | Variant::CensoredNoisy)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown variant {s:?}")))
    }
}

/// Where the examples come from. Real datasets draw train and validation
/// from the official training file and test from the official test file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSpec {
    Planted {
        d: usize,
        h0: usize,
        k: usize,
        n_train: usize,
        n_validation: usize,
        n_test: usize,
        #[serde(default)]
        margin_scale: f64,
    },
    Mnist {
        n_train: usize,
        n_validation: usize,
        /// `None` keeps the whole test file.
        #[serde(default)]
        n_test: Option<usize>,
        /// Side length of an optional area downsample.
        #[serde(default)]
        downsample: Option<usize>,
    },
    Cifar10 {
        n_train: usize,
        n_validation: usize,
        #[serde(default)]
        n_test: Option<usize>,
        #[serde(default)]
        downsample: Option<usize>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub dataset: DatasetSpec,
    #[serde(default = "default_h_grid")]
    pub h_grid: Vec<usize>,
    #[serde(default = "default_variants")]
    pub variants: Vec<Variant>,
    /// Repetition identifiers; each yields its own data draw, split and
    /// initialization.
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub sgd: SgdConfig,
    #[serde(default)]
    pub stop: StoppingRule,
    #[serde(default)]
    pub loss: LossKind,
    #[serde(default = "default_init_sigma")]
    pub init_sigma: f64,
    /// Weight-decay strengths tried by the `weight_decay` variant.
    #[serde(default = "default_lambda_grid")]
    pub lambda_grid: Vec<f64>,
    #[serde(default = "default_censor_h0")]
    pub censor_h0: usize,
    #[serde(default = "default_noise_fraction")]
    pub noise_fraction: f64,
}

/// Powers of two from 1 to 4096.
pub fn default_h_grid() -> Vec<usize> {
    (0..=12).map(|i| 1 << i).collect()
}

fn default_variants() -> Vec<Variant> {
    vec![Variant::Original]
}

fn default_init_sigma() -> f64 {
    0.1
}

pub fn default_lambda_grid() -> Vec<f64> {
    vec![1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1]
}

fn default_censor_h0() -> usize {
    4
}

fn default_noise_fraction() -> f64 {
    0.05
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.h_grid.is_empty() || self.h_grid[0] == 0 {
            return bad("h_grid must be nonempty with sizes >= 1".into());
        }
        if self.h_grid.windows(2).any(|w| w[0] >= w[1]) {
            return bad(format!(
                "h_grid must be strictly increasing, got {:?}",
                self.h_grid
            ));
        }
        if self.seeds.is_empty() {
            return bad("seeds must be nonempty".into());
        }
        let mut seen = self.seeds.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.seeds.len() {
            return bad("seeds must be distinct".into());
        }
        if self.variants.is_empty() {
            return bad("variants must be nonempty".into());
        }
        for (i, v) in self.variants.iter().enumerate() {
            if self.variants[..i].contains(v) {
                return bad(format!("variant {v} listed twice"));
            }
        }
        if self.variants.contains(&Variant::WeightDecay)
            && (self.lambda_grid.is_empty()
                || self
                    .lambda_grid
                    .iter()
                    .any(|l| !(*l > 0.0 && l.is_finite())))
        {
            return bad("lambda_grid must be nonempty with positive entries".into());
        }
        if !(self.init_sigma > 0.0 && self.init_sigma.is_finite()) {
            return bad("init_sigma must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.noise_fraction) {
            return bad("noise_fraction must lie in [0, 1]".into());
        }
        if self.censor_h0 == 0 {
            return bad("censor_h0 must be >= 1".into());
        }
        if self.sgd.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: SweepConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    fn train_config(&self, reg: RegConfig) -> TrainConfig {
        TrainConfig {
            sgd: self.sgd,
            loss: self.loss,
            reg,
            stop: self.stop,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub variant: Variant,
    pub seed: u64,
    #[serde(rename = "H")]
    pub hidden: usize,
    /// Weight-decay strength; 0 outside the `weight_decay` variant.
    pub lambda: f64,
    pub epochs_run: usize,
    pub train_error_final: f64,
    pub train_error_earlystop: f64,
    pub validation_error_best: f64,
    pub test_error_final: f64,
    pub test_error_earlystop: f64,
}

/// A cell whose training failed; the rest of the sweep is unaffected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub variant: Variant,
    pub seed: u64,
    pub hidden: usize,
    pub lambda: f64,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepOutcome {
    /// Sorted by variant, then H, then seed.
    pub records: Vec<SweepRecord>,
    pub failures: Vec<CellFailure>,
}

/// Train, validation and test splits of one repetition.
#[derive(Clone, Debug)]
pub struct Splits {
    pub train: LabeledDataset,
    pub validation: LabeledDataset,
    pub test: LabeledDataset,
}

/// Loads or generates the dataset described by `spec` and splits it, using
/// `rng` for the draw and the split.
pub fn prepare_splits(spec: &DatasetSpec, data_dir: &Path, rng: &Rng) -> Result<Splits> {
    let pools = load_pools(spec, data_dir)?;
    base_splits(spec, pools.as_ref(), rng)
}

struct Prepared {
    original: Splits,
    censored: Option<Splits>,
    noisy: Option<Splits>,
}

impl Prepared {
    fn for_variant(&self, v: Variant) -> &Splits {
        match v {
            Variant::Original | Variant::WeightDecay => &self.original,
            Variant::Censored => self.censored.as_ref().expect("prepared when requested"),
            Variant::CensoredNoisy => self.noisy.as_ref().expect("prepared when requested"),
        }
    }
}

/// Real-data pools shared by every repetition.
struct Pools {
    train: LabeledDataset,
    test: LabeledDataset,
}

fn load_pools(spec: &DatasetSpec, data_dir: &Path) -> Result<Option<Pools>> {
    let (train, test, side) = match spec {
        DatasetSpec::Planted { .. } => return Ok(None),
        DatasetSpec::Mnist { downsample, .. } => (
            load_mnist(data_dir, MnistSplit::Train)?,
            load_mnist(data_dir, MnistSplit::Test)?,
            *downsample,
        ),
        DatasetSpec::Cifar10 { downsample, .. } => (
            load_cifar10(data_dir, CifarSplit::Train)?,
            load_cifar10(data_dir, CifarSplit::Test)?,
            *downsample,
        ),
    };
    let (train, test) = match side {
        Some(side) => (
            data::downsample(&train, side)?,
            data::downsample(&test, side)?,
        ),
        None => (train, test),
    };
    Ok(Some(Pools { train, test }))
}

fn base_splits(spec: &DatasetSpec, pools: Option<&Pools>, rng: &Rng) -> Result<Splits> {
    match spec {
        DatasetSpec::Planted {
            d,
            h0,
            k,
            n_train,
            n_validation,
            n_test,
            margin_scale,
        } => {
            let planted = PlantedSpec {
                d: *d,
                h0: *h0,
                k: *k,
                n: n_train + n_validation + n_test,
                margin_scale: *margin_scale,
            };
            let (all, _) = planted_synthetic(&planted, &mut rng.derive(&[TAG_DATA]))?;
            let idx: Vec<usize> = (0..all.len()).collect();
            let head = n_train + n_validation;
            Ok(Splits {
                train: all.subset(&idx[..*n_train]).with_split(SplitTag::Train),
                validation: all
                    .subset(&idx[*n_train..head])
                    .with_split(SplitTag::Validation),
                test: all.subset(&idx[head..]).with_split(SplitTag::Test),
            })
        }
        DatasetSpec::Mnist {
            n_train,
            n_validation,
            n_test,
            ..
        }
        | DatasetSpec::Cifar10 {
            n_train,
            n_validation,
            n_test,
            ..
        } => {
            let pools = pools.expect("real datasets are loaded before preparation");
            let spec = data::SplitSpec {
                n_train: *n_train,
                n_validation: *n_validation,
                n_test: Some(0),
                seed: rng.derive(&[TAG_SPLIT, 0]).seed(),
            };
            let (train, validation, _) = data::split(&pools.train, &spec)?;
            let test = match n_test {
                None => pools.test.clone().with_split(SplitTag::Test),
                Some(n) => {
                    let spec = data::SplitSpec {
                        n_train: 0,
                        n_validation: 0,
                        n_test: Some(*n),
                        seed: rng.derive(&[TAG_SPLIT, 1]).seed(),
                    };
                    data::split(&pools.test, &spec)?.2
                }
            };
            Ok(Splits {
                train,
                validation,
                test,
            })
        }
    }
}

fn prepare(cfg: &SweepConfig, pools: Option<&Pools>, rng: &Rng) -> Result<Prepared> {
    let original = base_splits(&cfg.dataset, pools, rng)?;
    let wants_censored = cfg.variants.iter().any(|v| v.is_censored());
    let censored = if wants_censored {
        let teacher_cfg = cfg.train_config(RegConfig::none());
        let c = censor(
            &[&original.train, &original.validation, &original.test],
            cfg.censor_h0,
            &teacher_cfg,
            cfg.init_sigma,
            &mut rng.derive(&[TAG_CENSOR]),
        )?;
        let mut parts = c.datasets.into_iter();
        let mut next = || parts.next().expect("censor returns one dataset per part");
        Some(Splits {
            train: next(),
            validation: next(),
            test: next(),
        })
    } else {
        None
    };
    let noisy = match (&censored, cfg.variants.contains(&Variant::CensoredNoisy)) {
        (Some(c), true) => {
            let mut r = rng.derive(&[TAG_NOISE]);
            Some(Splits {
                train: add_label_noise(&c.train, cfg.noise_fraction, &mut r)?.dataset,
                validation: add_label_noise(&c.validation, cfg.noise_fraction, &mut r)?.dataset,
                test: c.test.clone(),
            })
        }
        _ => None,
    };
    Ok(Prepared {
        original,
        censored,
        noisy,
    })
}

#[derive(Clone, Copy, Debug)]
struct Cell {
    variant: Variant,
    seed_index: usize,
    hidden: usize,
    lambda_index: Option<usize>,
}

struct CellResult {
    record: SweepRecord,
    validation_error_final: f64,
}

fn run_cell(cfg: &SweepConfig, cell: &Cell, data: &Splits, master: &Rng) -> Result<CellResult> {
    let seed = cfg.seeds[cell.seed_index];
    let lambda = cell.lambda_index.map_or(0.0, |i| cfg.lambda_grid[i]);
    let reg = if cell.lambda_index.is_some() {
        RegConfig::weight_decay(lambda)
    } else {
        RegConfig::none()
    };
    let mut tcfg = cfg.train_config(reg);
    tcfg.sgd.batch_size = tcfg.sgd.batch_size.min(data.train.len());
    // the same initialization for every variant and λ at a given (seed, H)
    let mut rng = master.derive(&[TAG_CELL, seed, cell.hidden as u64]);
    let init = NetParams::init(
        data.train.dim(),
        cell.hidden,
        data.train.classes(),
        cfg.init_sigma,
        &mut rng,
    )?;
    let out = train(init, &data.train, Some(&data.validation), &tcfg, &mut rng)?;
    let best = out.best.as_ref().expect("validation set supplied");
    let record = SweepRecord {
        variant: cell.variant,
        seed,
        hidden: cell.hidden,
        lambda,
        epochs_run: out.epochs_run(),
        train_error_final: out.final_record().train_error,
        train_error_earlystop: zero_one_error(&best.params, &data.train)?,
        validation_error_best: best.validation_error,
        test_error_final: zero_one_error(&out.params, &data.test)?,
        test_error_earlystop: zero_one_error(&best.params, &data.test)?,
    };
    Ok(CellResult {
        validation_error_final: zero_one_error(&out.params, &data.validation)?,
        record,
    })
}

/// Runs every (variant, H, seed) cell, plus every λ of the weight-decay
/// grid, in parallel on `workers` threads (all cores when `None`). The
/// `weight_decay` variant reports, per (H, seed), the λ whose final network
/// has the lowest validation error (smallest λ on ties). Real datasets are
/// read from `data_dir`. Output depends only on the configuration and
/// `master`, not on scheduling.
pub fn run_sweep(
    cfg: &SweepConfig,
    data_dir: &Path,
    master: &Rng,
    workers: Option<usize>,
) -> Result<SweepOutcome> {
    cfg.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        if w == 0 {
            return Err(Error::InvalidArgument("workers must be >= 1".into()));
        }
        builder = builder.num_threads(w);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))?;
    pool.install(|| sweep_in_pool(cfg, data_dir, master))
}

fn sweep_in_pool(cfg: &SweepConfig, data_dir: &Path, master: &Rng) -> Result<SweepOutcome> {
    let pools = load_pools(&cfg.dataset, data_dir)?;
    let prepared = cfg
        .seeds
        .par_iter()
        .map(|&seed| prepare(cfg, pools.as_ref(), &master.derive(&[TAG_DATA, seed])))
        .collect::<Result<Vec<_>>>()?;

    let mut variants = cfg.variants.clone();
    variants.sort();
    let mut cells = Vec::new();
    for &variant in &variants {
        for &hidden in &cfg.h_grid {
            for seed_index in 0..cfg.seeds.len() {
                if variant == Variant::WeightDecay {
                    for li in 0..cfg.lambda_grid.len() {
                        cells.push(Cell {
                            variant,
                            seed_index,
                            hidden,
                            lambda_index: Some(li),
                        });
                    }
                } else {
                    cells.push(Cell {
                        variant,
                        seed_index,
                        hidden,
                        lambda_index: None,
                    });
                }
            }
        }
    }

    let results: Vec<Result<CellResult>> = cells
        .par_iter()
        .map(|cell| {
            run_cell(
                cfg,
                cell,
                prepared[cell.seed_index].for_variant(cell.variant),
                master,
            )
        })
        .collect();

    let mut outcome = SweepOutcome::default();
    let mut pending_wd: Option<(usize, usize, CellResult)> = None;
    for (cell, result) in cells.iter().zip(results) {
        let result = match result {
            Ok(r) => r,
            Err(e @ (Error::Diverged { .. } | Error::NonFinite(_))) => {
                outcome.failures.push(CellFailure {
                    variant: cell.variant,
                    seed: cfg.seeds[cell.seed_index],
                    hidden: cell.hidden,
                    lambda: cell.lambda_index.map_or(0.0, |i| cfg.lambda_grid[i]),
                    message: e.to_string(),
                });
                continue;
            }
            Err(e) => return Err(e),
        };
        if cell.lambda_index.is_none() {
            outcome.records.push(result.record);
            continue;
        }
        let key = (cell.hidden, cell.seed_index);
        match pending_wd.take() {
            Some((h, s, best)) if (h, s) == key => {
                let keep = if result.validation_error_final < best.validation_error_final {
                    result
                } else {
                    best
                };
                pending_wd = Some((h, s, keep));
            }
            Some((_, _, best)) => {
                outcome.records.push(best.record);
                pending_wd = Some((key.0, key.1, result));
            }
            None => pending_wd = Some((key.0, key.1, result)),
        }
    }
    if let Some((_, _, best)) = pending_wd {
        outcome.records.push(best.record);
    }
    outcome
        .records
        .sort_by(|a, b| (a.variant, a.hidden, a.seed).cmp(&(b.variant, b.hidden, b.seed)));
    Ok(outcome)
}

/// Mean and sample standard deviation (0 for a single value).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Stat {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Stat { mean, std }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub variant: Variant,
    pub hidden: usize,
    pub count: usize,
    pub train_error_final: Stat,
    pub train_error_earlystop: Stat,
    pub validation_error_best: Stat,
    pub test_error_final: Stat,
    pub test_error_earlystop: Stat,
}

/// Groups records by (variant, H), ordered by variant then H.
pub fn aggregate(records: &[SweepRecord]) -> Vec<AggregateRow> {
    let mut groups: BTreeMap<(Variant, usize), Vec<&SweepRecord>> = BTreeMap::new();
    for r in records {
        groups.entry((r.variant, r.hidden)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((variant, hidden), rs)| {
            let stat =
                |f: fn(&SweepRecord) -> f64| Stat::of(&rs.iter().map(|r| f(r)).collect::<Vec<_>>());
            AggregateRow {
                variant,
                hidden,
                count: rs.len(),
                train_error_final: stat(|r| r.train_error_final),
                train_error_earlystop: stat(|r| r.train_error_earlystop),
                validation_error_best: stat(|r| r.validation_error_best),
                test_error_final: stat(|r| r.test_error_final),
                test_error_earlystop: stat(|r| r.test_error_earlystop),
            }
        })
        .collect()
}

/// Formats with six significant digits, dropping trailing zeros.
pub fn format_sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".into() } else { x.to_string() };
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci
        .split_once('e')
        .expect("scientific format has an exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if (-5..6).contains(&exp) {
        trim(&format!("{:.*}", (5 - exp) as usize, x))
    } else {
        format!("{}e{exp}", trim(mantissa))
    }
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new())
}

fn finish(mut w: csv::Writer<Vec<u8>>, schema: &str) -> Result<String> {
    w.flush()
        .map_err(|e| Error::io(Path::new("<csv buffer>"), e))?;
    let body = w
        .into_inner()
        .map_err(|e| Error::io(Path::new("<csv buffer>"), e.into_error()))?;
    let body = String::from_utf8(body).expect("csv fields are UTF-8");
    Ok(format!("{schema}\n{body}"))
}

/// The schema comment line, the header row, then one row per record.
pub fn records_to_csv(records: &[SweepRecord]) -> Result<String> {
    let mut w = csv_writer();
    w.write_record(CSV_COLUMNS)?;
    for r in records {
        w.write_record([
            r.variant.to_string(),
            r.seed.to_string(),
            r.hidden.to_string(),
            format_sig6(r.lambda),
            r.epochs_run.to_string(),
            format_sig6(r.train_error_final),
            format_sig6(r.train_error_earlystop),
            format_sig6(r.validation_error_best),
            format_sig6(r.test_error_final),
            format_sig6(r.test_error_earlystop),
        ])?;
    }
    finish(w, CSV_SCHEMA_LINE)
}

pub fn emit_csv(records: &[SweepRecord], path: &Path) -> Result<()> {
    fs::write(path, records_to_csv(records)?).map_err(|e| Error::io(path, e))
}

fn csv_error(source: &str, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        source_name: source.into(),
        offset: line as usize,
        message: message.into(),
    }
}

/// Parses text written by [`records_to_csv`]. Errors carry the line number
/// in their offset.
pub fn parse_csv(text: &str, source: &str) -> Result<Vec<SweepRecord>> {
    let (first, rest) = text.split_once('\n').unwrap_or((text, ""));
    if first.trim_end() != CSV_SCHEMA_LINE {
        return Err(csv_error(
            source,
            1,
            format!("expected {CSV_SCHEMA_LINE:?} on the first line"),
        ));
    }
    let mut reader = csv::ReaderBuilder::new().from_reader(rest.as_bytes());
    let header = reader.headers()?.clone();
    if header.iter().ne(CSV_COLUMNS) {
        return Err(csv_error(
            source,
            2,
            format!("unexpected columns {header:?}"),
        ));
    }
    let mut out = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        let line = i as u64 + 3;
        if row.len() != CSV_COLUMNS.len() {
            return Err(csv_error(source, line, "wrong number of fields"));
        }
        let num = |j: usize| -> Result<f64> {
            row[j].parse().map_err(|_| {
                csv_error(
                    source,
                    line,
                    format!("bad number in column {}", CSV_COLUMNS[j]),
                )
            })
        };
        let int = |j: usize| -> Result<u64> {
            row[j].parse().map_err(|_| {
                csv_error(
                    source,
                    line,
                    format!("bad integer in column {}", CSV_COLUMNS[j]),
                )
            })
        };
        out.push(SweepRecord {
            variant: row[0]
                .parse()
                .map_err(|_| csv_error(source, line, format!("bad variant {:?}", &row[0])))?,
            seed: int(1)?,
            hidden: int(2)? as usize,
            lambda: num(3)?,
            epochs_run: int(4)? as usize,
            train_error_final: num(5)?,
            train_error_earlystop: num(6)?,
            validation_error_best: num(7)?,
            test_error_final: num(8)?,
            test_error_earlystop: num(9)?,
        });
    }
    Ok(out)
}

pub fn read_csv(path: &Path) -> Result<Vec<SweepRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text, &path.display().to_string())
}

/// Aggregate rows as CSV: a mean and std column per error field.
pub fn aggregate_to_csv(rows: &[AggregateRow]) -> Result<String> {
    let mut w = csv_writer();
    let fields = [
        "train_error_final",
        "train_error_earlystop",
        "validation_error_best",
        "test_error_final",
        "test_error_earlystop",
    ];
    let mut header = vec!["variant".to_string(), "H".into(), "count".into()];
    for f in fields {
        header.push(format!("{f}_mean"));
        header.push(format!("{f}_std"));
    }
    w.write_record(&header)?;
    for r in rows {
        let mut line = vec![
            r.variant.to_string(),
            r.hidden.to_string(),
            r.count.to_string(),
        ];
        for s in [
            r.train_error_final,
            r.train_error_earlystop,
            r.validation_error_best,
            r.test_error_final,
            r.test_error_earlystop,
        ] {
            line.push(format_sig6(s.mean));
            line.push(format_sig6(s.std));
        }
        w.write_record(&line)?;
    }
    finish(w, AGGREGATE_SCHEMA_LINE)
}
