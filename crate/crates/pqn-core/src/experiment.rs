//! Experiment configuration, seeded train/eval/test splits, and the report
//! comparing PQN, the plain pointer network and the benchmark heuristic.

use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::{benchmark_tour, BenchmarkMethod, HELD_KARP_MAX_N};
use crate::error::{PqnError, Result};
use crate::model::{PolicyKind, PqnModel};
use crate::policy::levenshtein;
use crate::io::HistoryRow;
use crate::train::{greedy_tours, train, Perturbation, TrainConfig, TrainingHistory};
use crate::tsp::{generate_instance, tour_cost, validate_tour, Tour, TspInstance};

pub const PQN_LABEL: &str = "PQN";
pub const PTRNET_LABEL: &str = "Ptr-Net";
pub const BENCHMARK_LABEL: &str = "benchmark";

/// Pointer learning rate of the presets; 0.1 stalls Adam at desk scale.
pub const DESK_LR_PTR: f64 = 0.01;

/// Spacing between the seed ranges of the three instance sets.
const SPLIT_STRIDE: u64 = 1 << 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Tsp20,
    Tsp50,
    PerturbedTsp20,
    Custom,
}

impl FromStr for ExperimentKind {
    type Err = PqnError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tsp20" => Ok(Self::Tsp20),
            "tsp50" => Ok(Self::Tsp50),
            "perturbed-tsp20" => Ok(Self::PerturbedTsp20),
            "custom" => Ok(Self::Custom),
            other => Err(PqnError::invalid(format!("unknown experiment kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Eval,
    Test,
}

impl Split {
    fn index(self) -> u64 {
        match self {
            Split::Train => 0,
            Split::Eval => 1,
            Split::Test => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub n: usize,
    /// Instances per split.
    pub instances: usize,
    /// Base seed of the instance sets.
    pub instance_seed: u64,
    pub train: TrainConfig,
    pub benchmark: BenchmarkMethod,
    pub perturbation: Option<Perturbation>,
}

impl ExperimentConfig {
    /// Desk-scale presets: TSP20 uses 5 instances, TSP50 12, both at 100 steps per epoch.
    pub fn preset(kind: ExperimentKind, seed: u64) -> Self {
        let (n, instances, epochs) = match kind {
            ExperimentKind::Tsp20 | ExperimentKind::PerturbedTsp20 | ExperimentKind::Custom => (20, 5, 30),
            ExperimentKind::Tsp50 => (50, 12, 100),
        };
        let perturbation = (kind == ExperimentKind::PerturbedTsp20).then_some(Perturbation {
            first_epoch: 5,
            last_epoch: 10,
            alpha: 0.9,
            beta: 1.1,
            seed,
        });
        Self {
            kind,
            n,
            instances,
            instance_seed: seed,
            train: TrainConfig {
                epochs,
                steps_per_epoch: 100,
                lr_ptr: DESK_LR_PTR,
                seed,
                ..TrainConfig::default()
            },
            benchmark: BenchmarkMethod::TwoOpt,
            perturbation,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(PqnError::invalid(format!("need at least 2 cities, got {}", self.n)));
        }
        if self.instances == 0 || self.instances as u64 >= SPLIT_STRIDE {
            return Err(PqnError::invalid("instance count out of range"));
        }
        if self.benchmark == BenchmarkMethod::HeldKarp && self.n > HELD_KARP_MAX_N {
            return Err(PqnError::invalid(format!(
                "held_karp benchmark needs n <= {HELD_KARP_MAX_N}, got {}",
                self.n
            )));
        }
        self.train.validate(self.n)?;
        if let Some(p) = self.perturbation {
            if p.first_epoch > p.last_epoch || p.last_epoch >= self.train.epochs {
                return Err(PqnError::invalid(format!(
                    "perturbation window [{}, {}] outside epochs 0..{}",
                    p.first_epoch, p.last_epoch, self.train.epochs
                )));
            }
            if !(p.alpha > 0.0 && p.alpha <= p.beta) {
                return Err(PqnError::invalid("perturbation bounds must satisfy 0 < lo <= hi"));
            }
        }
        Ok(())
    }

    /// Instance seeds of a split; the three ranges never overlap.
    pub fn split_seeds(&self, split: Split) -> Vec<u64> {
        let base = self.instance_seed.wrapping_add(split.index() * SPLIT_STRIDE);
        (0..self.instances as u64).map(|i| base.wrapping_add(i)).collect()
    }

    pub fn split_instances(&self, split: Split) -> Result<Vec<TspInstance<f64>>> {
        self.split_seeds(split)
            .into_iter()
            .map(|s| generate_instance(self.n, s))
            .collect()
    }
}

pub fn benchmark_tours(instances: &[TspInstance<f64>], method: BenchmarkMethod) -> Result<Vec<Tour>> {
    instances.iter().map(|i| benchmark_tour(i, method)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub name: String,
    pub j_mean: f64,
    pub sigma_b_mean: f64,
    /// Per-instance tour costs.
    pub j: Vec<f64>,
    /// Per-instance edit distances to the benchmark tours.
    pub sigma_b: Vec<usize>,
    pub tours: Vec<Tour>,
}

impl MethodResult {
    pub fn new(
        name: impl Into<String>,
        instances: &[TspInstance<f64>],
        tours: Vec<Tour>,
        benchmarks: &[Tour],
    ) -> Result<Self> {
        if tours.len() != instances.len() || benchmarks.len() != instances.len() {
            return Err(PqnError::invalid("tour and instance counts differ"));
        }
        let j = instances
            .iter()
            .zip(&tours)
            .map(|(i, t)| tour_cost(i, t))
            .collect::<Result<Vec<_>>>()?;
        let sigma_b: Vec<usize> = tours
            .iter()
            .zip(benchmarks)
            .map(|(t, b)| levenshtein(&t.order, &b.order))
            .collect();
        let m = instances.len() as f64;
        Ok(Self {
            name: name.into(),
            j_mean: j.iter().sum::<f64>() / m,
            sigma_b_mean: sigma_b.iter().sum::<usize>() as f64 / m,
            j,
            sigma_b,
            tours,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub seed: u64,
    /// Instance set the methods were evaluated on.
    pub split: Split,
    pub instance_seeds: Vec<u64>,
    pub methods: Vec<MethodResult>,
    pub pqn_history: Vec<HistoryRow>,
    pub ptrnet_history: Vec<HistoryRow>,
}

impl ExperimentReport {
    pub fn method(&self, name: &str) -> Option<&MethodResult> {
        self.methods.iter().find(|m| m.name == name)
    }

    /// Checks that every stored tour is valid and every cost recomputes within 1e-9.
    pub fn verify(&self, instances: &[TspInstance<f64>]) -> Result<()> {
        for m in &self.methods {
            if m.tours.len() != instances.len() {
                return Err(PqnError::invalid(format!("{}: tour count mismatch", m.name)));
            }
            for ((inst, tour), &j) in instances.iter().zip(&m.tours).zip(&m.j) {
                validate_tour(inst, tour).map_err(PqnError::InvalidTour)?;
                let c = tour_cost(inst, tour)?;
                if (c - j).abs() > 1e-9 {
                    return Err(PqnError::invalid(format!("{}: stored cost {j} but tour costs {c}", m.name)));
                }
            }
        }
        Ok(())
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| PqnError::Io(e.into()))?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        serde_json::from_str(&std::fs::read_to_string(path)?).map_err(|e| PqnError::parse("report", e.to_string()))
    }

    /// Writes the comparison table: methods as columns, `J` and `sigma_B` as rows.
    pub fn write_table_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec![String::new()];
        header.extend(self.methods.iter().map(|m| m.name.clone()));
        w.write_record(&header)?;
        let mut j = vec!["J".to_string()];
        j.extend(self.methods.iter().map(|m| m.j_mean.to_string()));
        w.write_record(&j)?;
        let mut s = vec!["sigma_B".to_string()];
        s.extend(self.methods.iter().map(|m| m.sigma_b_mean.to_string()));
        w.write_record(&s)?;
        w.flush()?;
        Ok(())
    }
}

/// Greedy evaluation of both trained models next to the benchmark tours on
/// the given instances. Histories are left empty.
pub fn evaluate_models(
    config: &ExperimentConfig,
    split: Split,
    instances: &[TspInstance<f64>],
    pqn: &PqnModel<f64>,
    ptrnet: &PqnModel<f64>,
) -> Result<ExperimentReport> {
    let benchmarks = benchmark_tours(instances, config.benchmark)?;
    let gamma = config.train.gamma;
    let methods = vec![
        MethodResult::new(
            PQN_LABEL,
            instances,
            greedy_tours(pqn, PolicyKind::Pqn, instances, gamma)?,
            &benchmarks,
        )?,
        MethodResult::new(
            PTRNET_LABEL,
            instances,
            greedy_tours(ptrnet, PolicyKind::PtrNet, instances, gamma)?,
            &benchmarks,
        )?,
        MethodResult::new(BENCHMARK_LABEL, instances, benchmarks.clone(), &benchmarks)?,
    ];
    let report = ExperimentReport {
        config: config.clone(),
        seed: config.train.seed,
        split,
        instance_seeds: instances.iter().filter_map(TspInstance::seed).collect(),
        methods,
        pqn_history: Vec::new(),
        ptrnet_history: Vec::new(),
    };
    report.verify(instances)?;
    Ok(report)
}

fn rows(history: &TrainingHistory<f64>) -> Vec<HistoryRow> {
    history.epochs.iter().map(HistoryRow::from).collect()
}

/// [`evaluate_models`] on a generated split, with both training histories attached.
pub fn compare_methods(
    config: &ExperimentConfig,
    split: Split,
    pqn: (&PqnModel<f64>, &TrainingHistory<f64>),
    ptrnet: (&PqnModel<f64>, &TrainingHistory<f64>),
) -> Result<ExperimentReport> {
    let instances = config.split_instances(split)?;
    let mut report = evaluate_models(config, split, &instances, pqn.0, ptrnet.0)?;
    report.pqn_history = rows(pqn.1);
    report.ptrnet_history = rows(ptrnet.1);
    Ok(report)
}

/// A trained model with the history that produced it.
#[derive(Debug, Clone)]
pub struct Trained {
    pub model: PqnModel<f64>,
    pub history: TrainingHistory<f64>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub pqn: Trained,
    pub ptrnet: Trained,
    pub report: ExperimentReport,
}

/// Trains one policy kind on the training split, applying the configured perturbation.
pub fn train_on_split(config: &ExperimentConfig, kind: PolicyKind) -> Result<Trained> {
    config.validate()?;
    let instances = config.split_instances(Split::Train)?;
    let benchmarks = benchmark_tours(&instances, config.benchmark)?;
    let (model, history) = train(kind, &instances, &benchmarks, &config.train, config.perturbation)?;
    Ok(Trained { model, history })
}

/// Trains both models and evaluates them on `split`.
pub fn run_experiment(config: &ExperimentConfig, split: Split) -> Result<ExperimentOutcome> {
    let pqn = train_on_split(config, PolicyKind::Pqn)?;
    let ptrnet = train_on_split(config, PolicyKind::PtrNet)?;
    let report = compare_methods(
        config,
        split,
        (&pqn.model, &pqn.history),
        (&ptrnet.model, &ptrnet.history),
    )?;
    Ok(ExperimentOutcome { pqn, ptrnet, report })
}
