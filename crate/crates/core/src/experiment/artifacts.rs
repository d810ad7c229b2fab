//! Runs a config over its strategy × seed grid and writes the artifact files.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::descent::{nn_avg_gradnorm_track, DescentRow};
use crate::engine::{run, train_on_indices, CycleReport, ProbeRecords, ProbeToggles, RunOutput};
use crate::error::{Error, Result};
use crate::model::TaskModel;
use crate::rng::stream;
use crate::selection::{Scheme, StrategyKind};
use crate::stats::{mean, std_dev};

pub const CYCLES_FILE: &str = "cycles.csv";
pub const SELECTIONS_FILE: &str = "selections.json";
pub const SUMMARY_FILE: &str = "summary.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const PER_CLASS_FILE: &str = "per_class.csv";

/// One finished (strategy, seed) run.
#[derive(Clone, Debug)]
pub struct JobResult {
    pub strategy: StrategyKind,
    pub seed: u64,
    pub output: RunOutput,
    pub transfer_accuracy: Option<f64>,
}

/// Loads data for the first seed and checks the model fits the data and,
/// when `probes` need a Hessian, the parameter cap.
pub fn preflight(config: &ExperimentConfig, base: &Path, probes: &ProbeToggles) -> Result<()> {
    let seed = config.seeds[0];
    let (train, _) = config.dataset.load(seed, base)?;
    let arch = config.model.architecture(&train)?;
    config.al_config(StrategyKind::Random, seed).validate(train.len())?;
    if probes.needs_hessian() {
        let params = arch.param_count()?;
        if params > config.al.hessian_cap {
            return Err(Error::OverCap {
                params,
                cap: config.al.hessian_cap,
            });
        }
    }
    if let Some(t) = &config.transfer {
        t.architecture(&train)?;
    }
    Ok(())
}

/// Every strategy over every seed, in config order. Jobs run in parallel;
/// results are deterministic per job.
pub fn run_jobs(config: &ExperimentConfig, base: &Path, probes: &ProbeToggles) -> Result<Vec<JobResult>> {
    let strategies = config.strategies()?;
    preflight(config, base, probes)?;
    let jobs: Vec<(StrategyKind, u64)> = strategies
        .iter()
        .flat_map(|&s| config.seeds.iter().map(move |&seed| (s, seed)))
        .collect();
    jobs.par_iter()
        .map(|&(strategy, seed)| {
            let (train, eval) = config.dataset.load(seed, base)?;
            let arch = config.model.architecture(&train)?;
            let mut al = config.al_config(strategy, seed);
            al.probes = probes.clone();
            let output = run(&al, &arch, &train, &eval)?;
            let transfer_accuracy = match &config.transfer {
                Some(spec) => {
                    let target = spec.architecture(&train)?;
                    Some(train_on_indices(&target, &al, &train, &eval, &output.labeled)?.1)
                }
                None => None,
            };
            Ok(JobResult {
                strategy,
                seed,
                output,
                transfer_accuracy,
            })
        })
        .collect()
}

/// One row of `cycles.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CycleRow {
    pub config_hash: String,
    pub strategy: StrategyKind,
    pub seed: u64,
    pub cycle: usize,
    pub labeled: usize,
    pub candidates: usize,
    pub train_acc: f64,
    pub test_acc: f64,
    pub gap: f64,
    pub train_loss: f64,
    pub test_loss: f64,
    pub a2_reduced: Option<usize>,
    pub a2_total: Option<usize>,
}

impl CycleRow {
    fn new(hash: &str, strategy: StrategyKind, seed: u64, r: &CycleReport) -> Self {
        Self {
            config_hash: hash.to_string(),
            strategy,
            seed,
            cycle: r.cycle,
            labeled: r.budget,
            candidates: r.candidates,
            train_acc: r.train_acc,
            test_acc: r.test_acc,
            gap: r.gap,
            train_loss: r.train_loss,
            test_loss: r.test_loss,
            a2_reduced: r.a2_reduced,
            a2_total: r.a2_total,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionEntry {
    pub cycle: usize,
    pub selected: Vec<usize>,
    pub scores: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionRun {
    pub strategy: StrategyKind,
    pub seed: u64,
    pub cycles: Vec<SelectionEntry>,
    /// Final labeled pool in labeling order.
    pub labeled: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Selections {
    pub config_hash: String,
    pub runs: Vec<SelectionRun>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

impl MeanSd {
    pub fn of(v: &[f64]) -> Self {
        Self {
            mean: mean(v),
            sd: std_dev(v),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CycleSummary {
    pub cycle: usize,
    pub labeled: usize,
    pub test_acc: MeanSd,
    pub train_acc: MeanSd,
    pub gap: MeanSd,
    /// Fraction of this cycle's picks whose score dropped at the next cycle.
    pub a2_fraction: Option<MeanSd>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundSummary {
    pub cycle: usize,
    pub scheme: Scheme,
    pub samples: usize,
    pub target: f64,
    pub approx1: f64,
    pub approx2: f64,
    pub approx3: f64,
    /// Mean of per-sample approx3 / approx2.
    pub approx3_over_approx2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategySummary {
    pub strategy: StrategyKind,
    pub cycles: Vec<CycleSummary>,
    pub transfer_acc: Option<MeanSd>,
    pub overlap_fraction: Option<MeanSd>,
    pub consistency_fraction: Option<MeanSd>,
    pub bounds: Vec<BoundSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub strategies: Vec<StrategySummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub version: String,
    pub config: ExperimentConfig,
    pub files: Vec<String>,
}

fn nonempty(v: Vec<f64>) -> Option<MeanSd> {
    (!v.is_empty()).then(|| MeanSd::of(&v))
}

pub fn summarize(hash: &str, seeds: &[u64], results: &[JobResult]) -> Summary {
    let mut strategies: Vec<StrategyKind> = Vec::new();
    for r in results {
        if !strategies.contains(&r.strategy) {
            strategies.push(r.strategy);
        }
    }
    let summaries = strategies
        .into_iter()
        .map(|strategy| {
            let runs: Vec<&JobResult> = results.iter().filter(|r| r.strategy == strategy).collect();
            let cycles = runs[0].output.reports.len();
            let cycles = (0..cycles)
                .map(|c| {
                    let at = |f: &dyn Fn(&CycleReport) -> f64| -> Vec<f64> {
                        runs.iter().map(|r| f(&r.output.reports[c])).collect()
                    };
                    let a2: Vec<f64> = runs
                        .iter()
                        .filter_map(|r| {
                            let rep = &r.output.reports[c];
                            match (rep.a2_reduced, rep.a2_total) {
                                (Some(a), Some(t)) if t > 0 => Some(a as f64 / t as f64),
                                _ => None,
                            }
                        })
                        .collect();
                    CycleSummary {
                        cycle: c,
                        labeled: runs[0].output.reports[c].budget,
                        test_acc: MeanSd::of(&at(&|r| r.test_acc)),
                        train_acc: MeanSd::of(&at(&|r| r.train_acc)),
                        gap: MeanSd::of(&at(&|r| r.gap)),
                        a2_fraction: nonempty(a2),
                    }
                })
                .collect();
            let probes: Vec<&ProbeRecords> = runs.iter().map(|r| &r.output.probes).collect();
            let overlap = probes
                .iter()
                .flat_map(|p| p.overlap.iter().map(|o| o.overlap as f64 / o.k as f64))
                .collect();
            let consistency = probes
                .iter()
                .flat_map(|p| p.consistency.iter().map(|o| o.overlap_fraction))
                .collect();
            let mut bounds = Vec::new();
            let all: Vec<_> = probes.iter().flat_map(|p| p.bounds.iter()).collect();
            let mut keys: Vec<(usize, Scheme)> = all.iter().map(|b| (b.cycle, b.scheme)).collect();
            keys.sort_by_key(|&(c, s)| (c, s == Scheme::Entropy));
            keys.dedup();
            for (cycle, scheme) in keys {
                let rows: Vec<_> = all.iter().filter(|b| b.cycle == cycle && b.scheme == scheme).collect();
                let m = |f: &dyn Fn(&crate::engine::BoundsRecord) -> f64| mean(&rows.iter().map(|b| f(b)).collect::<Vec<_>>());
                bounds.push(BoundSummary {
                    cycle,
                    scheme,
                    samples: rows.len(),
                    target: m(&|b| b.target),
                    approx1: m(&|b| b.approx1),
                    approx2: m(&|b| b.approx2),
                    approx3: m(&|b| b.approx3),
                    approx3_over_approx2: m(&|b| b.approx3 / b.approx2),
                });
            }
            StrategySummary {
                strategy,
                cycles,
                transfer_acc: nonempty(runs.iter().filter_map(|r| r.transfer_accuracy).collect()),
                overlap_fraction: nonempty(overlap),
                consistency_fraction: nonempty(consistency),
                bounds,
            }
        })
        .collect();
    Summary {
        config_hash: hash.to_string(),
        seeds: seeds.to_vec(),
        strategies: summaries,
    }
}

/// Column names of a flat serializable row.
fn header_of<T: Serialize>(row: &T) -> Result<Vec<String>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.serialize(row)?;
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_reader(&bytes[..]);
    let first = r.records().next().transpose()?.unwrap_or_default();
    Ok(first.iter().map(str::to_string).collect())
}

/// Writes rows prefixed by `config_hash, strategy, seed`.
pub fn write_prefixed<T: Serialize>(path: &Path, hash: &str, rows: &[(StrategyKind, u64, T)]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    let mut header = vec!["config_hash".to_string(), "strategy".into(), "seed".into()];
    if let Some((_, _, first)) = rows.first() {
        header.extend(header_of(first)?);
    }
    w.write_record(&header)?;
    for (strategy, seed, row) in rows {
        w.serialize((hash, strategy, seed, row))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn collect<T: Clone>(results: &[JobResult], f: impl Fn(&ProbeRecords) -> &Vec<T>) -> Vec<(StrategyKind, u64, T)> {
    results
        .iter()
        .flat_map(|r| f(&r.output.probes).iter().map(move |row| (r.strategy, r.seed, row.clone())))
        .collect()
}

#[derive(Clone, Copy, Debug, Serialize)]
struct PerClassRow {
    cycle: usize,
    class: usize,
    test_acc: Option<f64>,
}

/// Writes every artifact for `results` into `dir`; returns the file names.
pub fn write_artifacts(dir: &Path, config: &ExperimentConfig, results: &[JobResult]) -> Result<Vec<String>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let hash = config.hash()?;
    let mut files = vec![CYCLES_FILE.to_string(), SELECTIONS_FILE.into(), SUMMARY_FILE.into(), PER_CLASS_FILE.into()];

    let file = fs::File::create(dir.join(CYCLES_FILE)).map_err(|e| Error::io(dir.join(CYCLES_FILE), e))?;
    let mut w = csv::Writer::from_writer(file);
    for r in results {
        for rep in &r.output.reports {
            w.serialize(CycleRow::new(&hash, r.strategy, r.seed, rep))?;
        }
    }
    w.flush().map_err(|e| Error::io(dir.join(CYCLES_FILE), e))?;

    let per_class: Vec<_> = results
        .iter()
        .flat_map(|r| {
            r.output.reports.iter().flat_map(move |rep| {
                rep.per_class_test_acc.iter().enumerate().map(move |(class, &test_acc)| {
                    (
                        r.strategy,
                        r.seed,
                        PerClassRow {
                            cycle: rep.cycle,
                            class,
                            test_acc,
                        },
                    )
                })
            })
        })
        .collect();
    write_prefixed(&dir.join(PER_CLASS_FILE), &hash, &per_class)?;

    let selections = Selections {
        config_hash: hash.clone(),
        runs: results
            .iter()
            .map(|r| SelectionRun {
                strategy: r.strategy,
                seed: r.seed,
                cycles: r
                    .output
                    .reports
                    .iter()
                    .filter(|rep| !rep.selected.is_empty())
                    .map(|rep| SelectionEntry {
                        cycle: rep.cycle,
                        selected: rep.selected.clone(),
                        scores: rep.scores.clone(),
                    })
                    .collect(),
                labeled: r.output.labeled.clone(),
            })
            .collect(),
    };
    write_json(&dir.join(SELECTIONS_FILE), &selections)?;
    write_json(&dir.join(SUMMARY_FILE), &summarize(&hash, &config.seeds, results))?;

    let p = &config.probes;
    if p.overlap {
        write_prefixed(&dir.join("overlap.csv"), &hash, &collect(results, |p| &p.overlap))?;
        files.push("overlap.csv".into());
    }
    if p.consistency {
        write_prefixed(&dir.join("consistency.csv"), &hash, &collect(results, |p| &p.consistency))?;
        files.push("consistency.csv".into());
    }
    if p.bounds {
        write_prefixed(&dir.join("bounds.csv"), &hash, &collect(results, |p| &p.bounds))?;
        files.push("bounds.csv".into());
    }
    if p.decomposition {
        write_prefixed(&dir.join("decomposition.csv"), &hash, &collect(results, |p| &p.decomposition))?;
        write_prefixed(&dir.join("diversity.csv"), &hash, &collect(results, |p| &p.diversity))?;
        files.push("decomposition.csv".into());
        files.push("diversity.csv".into());
    }

    files.push(MANIFEST_FILE.into());
    let manifest = Manifest {
        config_hash: hash,
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
        files: files.clone(),
    };
    write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    Ok(files)
}

/// Diagnostics available to `probe`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProbeName {
    Overlap,
    Consistency,
    Bounds,
    A2,
    Decomposition,
    /// Full-batch gradient norm per epoch on each seed's initial labeled pool.
    Descent,
}

impl ProbeName {
    pub const ALL: [ProbeName; 6] = [
        ProbeName::Overlap,
        ProbeName::Consistency,
        ProbeName::Bounds,
        ProbeName::A2,
        ProbeName::Decomposition,
        ProbeName::Descent,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ProbeName::Overlap => "overlap",
            ProbeName::Consistency => "consistency",
            ProbeName::Bounds => "bounds",
            ProbeName::A2 => "a2",
            ProbeName::Decomposition => "decomposition",
            ProbeName::Descent => "descent",
        }
    }

    pub fn file_name(self) -> String {
        format!("probe_{}.csv", self.as_str())
    }

    fn toggles(self) -> ProbeToggles {
        let mut t = ProbeToggles::default();
        match self {
            ProbeName::Overlap => t.overlap = true,
            ProbeName::Consistency => t.consistency = true,
            ProbeName::Bounds => t.bounds = true,
            ProbeName::A2 => t.a2 = true,
            ProbeName::Decomposition => t.decomposition = true,
            ProbeName::Descent => {}
        }
        t
    }
}

impl std::str::FromStr for ProbeName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|p| p.as_str() == s).ok_or_else(|| {
            let names: Vec<&str> = Self::ALL.iter().map(|p| p.as_str()).collect();
            Error::config("--probe", format!("unknown probe {s:?}; expected one of {}", names.join(", ")))
        })
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
struct A2Row {
    cycle: usize,
    reduced: usize,
    total: usize,
    fraction: f64,
}

/// Runs only `name` and writes `probe_<name>.csv` into the output
/// directory. Run artifacts are left alone.
pub fn probe(config: &ExperimentConfig, base: &Path, name: ProbeName) -> Result<PathBuf> {
    let dir = &config.output_dir;
    let hash = config.hash()?;
    let path = dir.join(name.file_name());
    if name == ProbeName::Descent {
        preflight(config, base, &ProbeToggles::default())?;
        let rows = descent_rows(config, base)?;
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_prefixed(&path, &hash, &rows)?;
        return Ok(path);
    }
    let results = run_jobs(config, base, &name.toggles())?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    match name {
        ProbeName::Overlap => write_prefixed(&path, &hash, &collect(&results, |p| &p.overlap))?,
        ProbeName::Consistency => write_prefixed(&path, &hash, &collect(&results, |p| &p.consistency))?,
        ProbeName::Bounds => write_prefixed(&path, &hash, &collect(&results, |p| &p.bounds))?,
        ProbeName::Decomposition => write_prefixed(&path, &hash, &collect(&results, |p| &p.decomposition))?,
        ProbeName::A2 => {
            let rows: Vec<_> = results
                .iter()
                .flat_map(|r| {
                    r.output.reports.iter().filter_map(move |rep| match (rep.a2_reduced, rep.a2_total) {
                        (Some(reduced), Some(total)) => Some((
                            r.strategy,
                            r.seed,
                            A2Row {
                                cycle: rep.cycle,
                                reduced,
                                total,
                                fraction: reduced as f64 / total.max(1) as f64,
                            },
                        )),
                        _ => None,
                    })
                })
                .collect();
            write_prefixed(&path, &hash, &rows)?
        }
        ProbeName::Descent => unreachable!(),
    }
    Ok(path)
}

fn descent_rows(config: &ExperimentConfig, base: &Path) -> Result<Vec<(StrategyKind, u64, DescentRow)>> {
    let strategy = config.strategies()?[0];
    config
        .seeds
        .par_iter()
        .map(|&seed| {
            let (train, _) = config.dataset.load(seed, base)?;
            let arch = config.model.architecture(&train)?;
            let al = config.al_config(strategy, seed);
            let n = al.initial_count(train.len());
            let idx = rand::seq::index::sample(&mut stream(seed, "initial", 0), train.len(), n).into_vec();
            let x = train.gather(&idx);
            let y: Vec<usize> = idx.iter().map(|&i| train.labels()[i]).collect();
            let model = TaskModel::new(arch, seed)?;
            let cfg = crate::model::TrainConfig {
                seed,
                ..al.train.clone()
            };
            let norms = nn_avg_gradnorm_track(&model, &x, &y, &cfg)?;
            Ok(norms
                .into_iter()
                .enumerate()
                .map(|(step, grad_norm)| {
                    (
                        strategy,
                        seed,
                        DescentRow {
                            instance: seed,
                            step,
                            grad_norm,
                        },
                    )
                })
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()
        .map(|v| v.into_iter().flatten().collect())
}
