//! The active-learning loop: train, score a random subset of the
//! unlabeled pool, annotate the top K, repeat.

mod pool;
pub mod probes;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

pub use pool::{LabelOracle, PoolState, ProbeView};
pub use probes::{BoundsRecord, ConsistencyRow, DecompositionRow, DiversityRow, OverlapRow, ProbeRecords};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::influence::{DEFAULT_CAP, DEFAULT_DAMPING};
use crate::model::{evaluate, per_class_accuracy, train, Architecture, GradScope, TaskModel, TrainConfig};
use crate::rng::stream;
use crate::selection::{gradnorm_score, select, Scheme, ScoreContext, StrategyKind};

/// Which diagnostics a run computes alongside selection.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeToggles {
    pub overlap: bool,
    pub consistency: bool,
    pub bounds: bool,
    /// Gradient-norm reduction counts of each selection at the next cycle.
    pub a2: bool,
    pub decomposition: bool,
}

impl ProbeToggles {
    pub fn all() -> Self {
        Self {
            overlap: true,
            consistency: true,
            bounds: true,
            a2: true,
            decomposition: true,
        }
    }

    pub fn needs_hessian(&self) -> bool {
        self.consistency || self.bounds || self.decomposition
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ALConfig {
    /// Training rounds; a selection follows every round but the last.
    pub cycles: usize,
    /// Samples annotated per selection.
    pub budget: usize,
    pub initial_fraction: f64,
    /// Candidates scored per selection, as a multiple of `budget`.
    pub subset_multiplier: usize,
    pub strategy: StrategyKind,
    pub train: TrainConfig,
    pub seed: u64,
    /// Fresh initialization from the run seed every cycle; otherwise
    /// continue from the previous cycle's weights.
    pub retrain_from_scratch: bool,
    pub scope: GradScope,
    pub damping: f64,
    pub hessian_cap: usize,
    pub probes: ProbeToggles,
}

impl ALConfig {
    pub fn new(cycles: usize, budget: usize, strategy: StrategyKind, seed: u64) -> Self {
        Self {
            cycles,
            budget,
            initial_fraction: 0.1,
            subset_multiplier: 10,
            strategy,
            train: TrainConfig::default(),
            seed,
            retrain_from_scratch: true,
            scope: GradScope::All,
            damping: DEFAULT_DAMPING,
            hessian_cap: DEFAULT_CAP,
            probes: ProbeToggles {
                a2: true,
                ..ProbeToggles::default()
            },
        }
    }

    pub fn initial_count(&self, pool_size: usize) -> usize {
        (self.initial_fraction * pool_size as f64).round() as usize
    }

    pub fn validate(&self, pool_size: usize) -> Result<()> {
        if self.cycles == 0 {
            return Err(Error::config("al.cycles", "must be at least 1"));
        }
        if self.budget == 0 {
            return Err(Error::config("al.budget", "must be at least 1"));
        }
        if self.subset_multiplier == 0 {
            return Err(Error::config("al.subset_multiplier", "must be at least 1"));
        }
        if !(self.initial_fraction > 0.0 && self.initial_fraction < 1.0) {
            return Err(Error::config("al.initial_fraction", "must be in (0, 1)"));
        }
        if !(self.damping > 0.0) {
            return Err(Error::config("al.damping", "must be positive"));
        }
        let initial = self.initial_count(pool_size);
        if initial == 0 {
            return Err(Error::config("al.initial_fraction", "selects no samples"));
        }
        if self.budget * self.cycles + initial > pool_size {
            return Err(Error::config(
                "al.budget",
                format!(
                    "{} cycles of {} plus {initial} initial exceed the {pool_size} training samples",
                    self.cycles, self.budget
                ),
            ));
        }
        self.train.validate()
    }
}

/// One cycle's outcome. Selection fields are empty on the last cycle; the
/// reduction counts of a selection are filled in once the next model exists.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CycleReport {
    pub cycle: usize,
    /// Labeled samples the cycle's model was trained on.
    pub budget: usize,
    pub candidates: usize,
    pub selected: Vec<usize>,
    pub scores: Vec<f64>,
    pub train_acc: f64,
    pub test_acc: f64,
    pub gap: f64,
    pub train_loss: f64,
    pub test_loss: f64,
    pub per_class_test_acc: Vec<Option<f64>>,
    pub a2_reduced: Option<usize>,
    pub a2_total: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub reports: Vec<CycleReport>,
    pub final_model: TaskModel,
    /// Final labeled pool in labeling order.
    pub labeled: Vec<usize>,
    pub probes: ProbeRecords,
    /// Attempted reads of unrevealed labels outside probes (always 0).
    pub leaked_reads: usize,
}

fn fit(arch: &Architecture, init: Option<&TaskModel>, x: &[f64], y: &[usize], config: &ALConfig) -> Result<TaskModel> {
    let model = match init {
        Some(m) => m.clone(),
        None => TaskModel::new(arch.clone(), config.seed)?,
    };
    let cfg = TrainConfig {
        seed: config.seed,
        ..config.train.clone()
    };
    Ok(train(model, x, y, &cfg)?.model)
}

struct Pending {
    cycle: usize,
    candidates: Vec<usize>,
    picks: Vec<usize>,
    scores: Vec<f64>,
}

/// Runs the loop on `train_set`, evaluating on `eval_set`.
pub fn run(config: &ALConfig, arch: &Architecture, train_set: &Dataset, eval_set: &Dataset) -> Result<RunOutput> {
    config.validate(train_set.len())?;
    if arch.input_len() != train_set.feature_len() || arch.classes() < train_set.classes() {
        return Err(Error::config(
            "model",
            format!(
                "architecture expects {} inputs and {} classes, data has {} and {}",
                arch.input_len(),
                arch.classes(),
                train_set.feature_len(),
                train_set.classes()
            ),
        ));
    }
    if config.probes.needs_hessian() {
        let params = arch.param_count()?;
        if params > config.hessian_cap {
            return Err(Error::OverCap {
                params,
                cap: config.hessian_cap,
            });
        }
    }
    let mut pool = PoolState::new(train_set, config.initial_count(train_set.len()), config.seed)?;
    let mut reports: Vec<CycleReport> = Vec::with_capacity(config.cycles);
    let mut probes = ProbeRecords::default();
    let mut prev: Option<TaskModel> = None;
    let mut pending: Option<Pending> = None;
    for cycle in 0..config.cycles {
        let step = || -> Result<(TaskModel, CycleReport)> {
            let (lx, ly) = pool.labeled_data()?;
            let init = if config.retrain_from_scratch { None } else { prev.as_ref() };
            let model = fit(arch, init, &lx, &ly, config)?;
            let tr = evaluate(&model, &lx, &ly)?;
            let te = evaluate(&model, eval_set.features(), eval_set.labels())?;
            let report = CycleReport {
                cycle,
                budget: ly.len(),
                candidates: 0,
                selected: Vec::new(),
                scores: Vec::new(),
                train_acc: tr.accuracy,
                test_acc: te.accuracy,
                gap: tr.accuracy - te.accuracy,
                train_loss: tr.mean_loss,
                test_loss: te.mean_loss,
                per_class_test_acc: per_class_accuracy(&te.predictions, eval_set.labels(), eval_set.classes()),
                a2_reduced: None,
                a2_total: None,
            };
            Ok((model, report))
        };
        let (model, mut report) = step().map_err(|e| e.in_cycle(cycle))?;

        if let (Some(p), Some(old)) = (pending.take(), prev.as_ref()) {
            follow_up(config, &pool, old, &model, &p, eval_set, &mut reports[p.cycle], &mut probes)
                .map_err(|e| e.in_cycle(p.cycle))?;
        }

        if cycle + 1 < config.cycles {
            let p = select_cycle(config, &mut pool, &model, cycle, &mut probes).map_err(|e| e.in_cycle(cycle))?;
            report.candidates = p.candidates.len();
            report.selected = p.picks.clone();
            report.scores = p.scores.clone();
            pending = Some(p);
        }
        reports.push(report);
        prev = Some(model);
    }
    Ok(RunOutput {
        reports,
        final_model: prev.expect("at least one cycle"),
        labeled: pool.labeled().to_vec(),
        probes,
        leaked_reads: pool.oracle().unlabeled_reads(),
    })
}

fn select_cycle(
    config: &ALConfig,
    pool: &mut PoolState<'_>,
    model: &TaskModel,
    cycle: usize,
    probes: &mut ProbeRecords,
) -> Result<Pending> {
    let k = config.budget;
    let u = pool.unlabeled();
    if u.len() < k {
        return Err(Error::Budget {
            requested: k,
            available: u.len(),
        });
    }
    let size = (config.subset_multiplier * k).min(u.len());
    let mut candidates: Vec<usize> = sample(&mut stream(config.seed, "subset", cycle as u64), u.len(), size)
        .into_iter()
        .map(|p| u[p])
        .collect();
    candidates.sort_unstable();
    let cand_x = pool.features(&candidates);
    let labeled_before = pool.labeled().to_vec();
    let labeled_x = pool.features(&labeled_before);
    let ctx = ScoreContext {
        seed: config.seed,
        cycle,
        scope: config.scope,
    };
    let reads = pool.oracle().unlabeled_reads();
    let picked = select(config.strategy, model, &candidates, &cand_x, &labeled_x, k, &ctx)?;
    if pool.oracle().unlabeled_reads() != reads {
        return Err(Error::LabelLeak(candidates[0]));
    }
    let picks: Vec<usize> = picked.iter().map(|s| s.index).collect();
    let scores: Vec<f64> = picked.iter().map(|s| s.score).collect();

    if config.probes.overlap {
        let view = pool.probe_view();
        let ys: Vec<usize> = candidates.iter().map(|&i| view.peek(i)).collect();
        let norms = probes::true_gradnorms(model, &cand_x, &ys, config.scope)?;
        let top: Vec<usize> = probes::top_k_positions(&norms, k).into_iter().map(|p| candidates[p]).collect();
        probes.overlap.push(OverlapRow {
            cycle,
            strategy: config.strategy,
            k,
            candidates: candidates.len(),
            overlap: probes::overlap_count(&top, &picks),
            random_expectation: (k * k) as f64 / candidates.len() as f64,
        });
    }
    if config.probes.decomposition {
        let mut strategies = vec![(config.strategy, picks.clone())];
        if config.strategy != StrategyKind::MaxEntropy {
            let alt = select(StrategyKind::MaxEntropy, model, &candidates, &cand_x, &labeled_x, k, &ctx)?;
            strategies.push((StrategyKind::MaxEntropy, alt.iter().map(|s| s.index).collect()));
        }
        for (strategy, set) in strategies {
            let (mean_cosine, sd_cosine) = probes::gradient_diversity(model, &pool.features(&set))?;
            probes.diversity.push(DiversityRow {
                cycle,
                strategy,
                mean_cosine,
                sd_cosine,
            });
        }
    }

    pool.annotate(&picks)?;
    pool.check_invariants()?;
    if pool.labeled().len() != labeled_before.len() + k {
        return Err(Error::Format("labeled pool did not grow by the budget".into()));
    }
    Ok(Pending {
        cycle,
        candidates,
        picks,
        scores,
    })
}

/// Diagnostics on selection `p`, made at cycle `p.cycle` with `old`, now
/// that the next model `new` is trained.
#[allow(clippy::too_many_arguments)]
fn follow_up(
    config: &ALConfig,
    pool: &PoolState<'_>,
    old: &TaskModel,
    new: &TaskModel,
    p: &Pending,
    eval_set: &Dataset,
    report: &mut CycleReport,
    probes: &mut ProbeRecords,
) -> Result<()> {
    let pick_x = pool.features(&p.picks);
    let len = new.input_len();
    let scheme = Scheme::of(config.strategy);
    if config.probes.a2 {
        if let Some(scheme) = scheme {
            let mut reduced = 0;
            for (k, before) in p.scores.iter().enumerate() {
                let after = gradnorm_score(new, &pick_x[k * len..(k + 1) * len], scheme, config.scope)?;
                reduced += usize::from(after <= *before);
            }
            report.a2_reduced = Some(reduced);
            report.a2_total = Some(p.picks.len());
        }
    }
    if !config.probes.needs_hessian() {
        return Ok(());
    }
    let (lx, ly) = pool.labeled_data()?;
    let ctx = probes::labeled_hessian(new, &lx, &ly, config.damping, config.hessian_cap)?;
    let (tx, ty) = (eval_set.features(), eval_set.labels());
    if config.probes.consistency {
        let view = pool.probe_view();
        let cand_y: Vec<usize> = p.candidates.iter().map(|&i| view.peek(i)).collect();
        let cand_x = pool.features(&p.candidates);
        let targets = probes::exact_targets(&ctx, new, &cand_x, &cand_y, tx, ty)?;
        let k = p.picks.len();
        let top: Vec<usize> = probes::top_k_positions(&targets, k)
            .into_iter()
            .map(|i| p.candidates[i])
            .collect();
        let overlap = probes::overlap_count(&top, &p.picks);
        probes.consistency.push(ConsistencyRow {
            cycle: p.cycle,
            strategy: config.strategy,
            k,
            candidates: p.candidates.len(),
            overlap,
            overlap_fraction: overlap as f64 / k as f64,
        });
    }
    if config.probes.bounds || config.probes.decomposition {
        let scheme = scheme.unwrap_or(Scheme::Entropy);
        let si = probes::SchemeInfluence::new(scheme, &ctx, new, tx, ty)?;
        let ys: Vec<usize> = p.picks.iter().map(|&i| pool.oracle().label(i)).collect::<Result<_>>()?;
        let (b, d) = si.bounds(&ctx, p.cycle, old, new, &p.picks, &pick_x, &ys)?;
        if config.probes.bounds {
            probes.bounds.extend(b);
        }
        if config.probes.decomposition {
            probes.decomposition.extend(d);
        }
    }
    Ok(())
}

/// A run with `selector`, then `target` trained from scratch (run seed) on
/// the final labeled pool.
#[derive(Clone, Debug)]
pub struct TransferOutcome {
    pub run: RunOutput,
    pub target_model: TaskModel,
    pub target_accuracy: f64,
}

pub fn transfer_train(
    selector: &Architecture,
    target: &Architecture,
    config: &ALConfig,
    train_set: &Dataset,
    eval_set: &Dataset,
) -> Result<TransferOutcome> {
    let run_out = run(config, selector, train_set, eval_set)?;
    let (target_model, target_accuracy) = train_on_indices(target, config, train_set, eval_set, &run_out.labeled)?;
    Ok(TransferOutcome {
        run: run_out,
        target_model,
        target_accuracy,
    })
}

/// Trains `arch` from the run seed on `indices` of `train_set`; returns the
/// model and its eval accuracy.
pub fn train_on_indices(
    arch: &Architecture,
    config: &ALConfig,
    train_set: &Dataset,
    eval_set: &Dataset,
    indices: &[usize],
) -> Result<(TaskModel, f64)> {
    let x = train_set.gather(indices);
    let y: Vec<usize> = indices.iter().map(|&i| train_set.labels()[i]).collect();
    let model = fit(arch, None, &x, &y, config)?;
    let acc = evaluate(&model, eval_set.features(), eval_set.labels())?.accuracy;
    Ok((model, acc))
}
