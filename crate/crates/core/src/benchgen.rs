//! Scalability benchmarks: minimal models that grow in one feature.
//!
//! Every generated model has the same skeleton: one component `Bench`
//! providing `run`, deployed on one container, called once by one scenario
//! that first labels `data` as `Sensitivity.Personal`. Only the selected
//! feature grows with `n`. Each data point times the whole pipeline (load,
//! extract, propagate, query) with a constraint that flags every node.

use std::fmt;
use std::fs;
use std::io;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::adl::document::*;
use crate::adl::ArchitectureModel;
use crate::analysis::DataFlowAnalysisBuilder;
use crate::constraints::{parse_constraint, Constraint};
use crate::model::{DataDictionary, LabelType};

/// Flags every node of every sequence.
pub const ALL_VIOLATIONS: &str = "VIOLATION all WHERE TRUE AND DATA TRUE";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BenchFeature {
    NodeCharacteristics,
    CharacteristicsPropagation,
    VariableActions,
    SeffParameters,
}

impl BenchFeature {
    pub const ALL: [BenchFeature; 4] = [
        BenchFeature::NodeCharacteristics,
        BenchFeature::CharacteristicsPropagation,
        BenchFeature::VariableActions,
        BenchFeature::SeffParameters,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BenchFeature::NodeCharacteristics => "node-characteristics",
            BenchFeature::CharacteristicsPropagation => "characteristics-propagation",
            BenchFeature::VariableActions => "variable-actions",
            BenchFeature::SeffParameters => "seff-parameters",
        }
    }
}

impl fmt::Display for BenchFeature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BenchFeature {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Self::ALL.iter().map(|f| f.name()).collect();
                format!(
                    "unknown feature '{s}', expected one of: {}",
                    names.join(", ")
                )
            })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BenchConfig {
    pub feature: BenchFeature,
    pub sizes: Vec<usize>,
    pub repetitions: usize,
    /// Parse the model once up front and time only the analysis.
    pub no_load: bool,
    pub timeout: Duration,
}

impl BenchConfig {
    pub fn new(feature: BenchFeature) -> Self {
        Self {
            feature,
            sizes: (0..=5).map(|e| 10usize.pow(e)).collect(),
            repetitions: 10,
            no_load: false,
            timeout: Duration::from_secs(600),
        }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        if self.sizes.is_empty() {
            return Err(BenchError::Config("no sizes given".into()));
        }
        if self.sizes.contains(&0) {
            return Err(BenchError::Config("sizes must be positive".into()));
        }
        if self.sizes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(BenchError::Config(
                "sizes must be strictly ascending".into(),
            ));
        }
        if self.repetitions == 0 {
            return Err(BenchError::Config("repetitions must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Completed,
    Failed(String),
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::Completed => f.write_str("completed"),
            Outcome::Failed(reason) => write!(f, "failed: {reason}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchResult {
    pub feature: BenchFeature,
    pub size: usize,
    /// Wall time of every completed run, in run order.
    pub runs_ms: Vec<f64>,
    /// Median of `runs_ms`; `None` if no run completed.
    pub median_ms: Option<f64>,
    /// Process peak resident set size after the data point, if known.
    pub peak_memory_bytes: Option<u64>,
    /// Violations found by the last completed run.
    pub violations: usize,
    /// Nodes extracted by the last completed run.
    pub elements: usize,
    pub outcome: Outcome,
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid benchmark configuration: {0}")]
    Config(String),
    #[error("cannot write '{path}': {source}")]
    Io { path: PathBuf, source: io::Error },
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len().is_multiple_of(2) {
        (v[mid - 1] + v[mid]) / 2.0
    } else {
        v[mid]
    })
}

/// Document form of [`generate_bench_model`].
pub fn bench_document(feature: BenchFeature, n: usize) -> ModelDocument {
    assert!(n >= 1, "benchmark size must be at least 1");
    let mut types = vec![LabelType::new("Sensitivity", ["Personal"])];
    let mut node_labels = Vec::new();
    if feature == BenchFeature::NodeCharacteristics {
        types.push(LabelType::new(
            "NodeProperty",
            (0..n).map(|i| format!("p{i}")),
        ));
        node_labels = (0..n).map(|i| format!("NodeProperty.p{i}")).collect();
    }

    let parameters: Vec<String> = match feature {
        BenchFeature::SeffParameters => (0..n).map(|i| format!("p{i}")).collect(),
        _ => vec!["data".into()],
    };
    let flowing = parameters[0].clone();
    let (count, assignment) = match feature {
        BenchFeature::VariableActions => (n, format!("{flowing}.Sensitivity.Personal := TRUE")),
        BenchFeature::CharacteristicsPropagation => (n, format!("{flowing}.*.* := {flowing}.*.*")),
        _ => (1, format!("{flowing}.Sensitivity.Personal := TRUE")),
    };
    let actions = (0..count)
        .map(|i| SeffActionDoc::Variable {
            id: format!("action{i}"),
            assignments: vec![assignment.clone()],
        })
        .collect();

    ModelDocument {
        dictionary: DataDictionary::new(types),
        signatures: vec![SignatureDoc {
            id: "run".into(),
            name: "run".into(),
            parameters: parameters.clone(),
            has_return: false,
        }],
        components: vec![ComponentDoc {
            id: "Bench".into(),
            name: "Bench".into(),
            provides: vec!["run".into()],
            requires: Vec::new(),
            node_labels,
            seffs: vec![SeffDoc {
                signature: "run".into(),
                actions,
            }],
        }],
        assembly: AssemblyDoc {
            instances: vec![InstanceDoc {
                id: "bench".into(),
                component: "Bench".into(),
            }],
            connectors: Vec::new(),
        },
        deployment: DeploymentDoc {
            containers: vec![ContainerDoc {
                id: "server".into(),
                name: "server".into(),
                node_labels: Vec::new(),
            }],
            allocation: [("bench".to_string(), "server".to_string())]
                .into_iter()
                .collect(),
        },
        usage_scenarios: vec![ScenarioDoc {
            id: "benchmark".into(),
            name: "benchmark".into(),
            user_labels: Vec::new(),
            actions: vec![
                UsageActionDoc::Variable {
                    id: "init".into(),
                    assignments: vec!["data.Sensitivity.Personal := TRUE".into()],
                },
                UsageActionDoc::Call {
                    id: "invoke".into(),
                    instance: "bench".into(),
                    signature: "run".into(),
                    bindings: parameters
                        .iter()
                        .map(|p| (p.clone(), "data".to_string()))
                        .collect(),
                    result: None,
                    result_assignments: Vec::new(),
                },
            ],
        }],
    }
}

/// A minimal valid model in which only `feature` scales with `n`.
pub fn generate_bench_model(feature: BenchFeature, n: usize) -> ArchitectureModel {
    ArchitectureModel::from_document(&bench_document(feature, n))
        .unwrap_or_else(|e| panic!("generated {feature} model of size {n} is invalid: {e}"))
}

/// Peak resident set size of this process (Linux only).
pub fn peak_memory_bytes() -> Option<u64> {
    let status = fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}

enum Input {
    Json(String),
    Model(Box<ArchitectureModel>),
}

/// Runs the pipeline once; returns (violations, elements).
fn pipeline(input: &Input, constraint: &Constraint) -> Result<(usize, usize), String> {
    let builder = DataFlowAnalysisBuilder::new().threads(1);
    let builder = match input {
        Input::Json(s) => builder.model_json(s.as_str()),
        Input::Model(m) => builder.model((**m).clone()),
    };
    let analysis = builder.build().map_err(|e| e.to_string())?;
    let sequences = analysis.find_all_sequences().map_err(|e| e.to_string())?;
    let propagated = analysis
        .evaluate_data_flows(&sequences)
        .map_err(|e| e.to_string())?;
    let mut violations = 0;
    for p in &propagated {
        violations += analysis
            .query_data_flow(p, constraint)
            .map_err(|e| e.to_string())?
            .len();
    }
    Ok((violations, sequences.iter().map(|s| s.len()).sum()))
}

enum RunMessage {
    Done {
        ms: f64,
        violations: usize,
        elements: usize,
    },
    Failed(String),
}

fn panic_message(payload: &(dyn std::any::Any + Send)) -> String {
    payload
        .downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| payload.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "panic".into())
}

fn run_point(config: &BenchConfig, size: usize) -> BenchResult {
    let (feature, reps, no_load) = (config.feature, config.repetitions, config.no_load);
    let (tx, rx) = mpsc::channel();
    // A hung point cannot be killed; its thread is detached on timeout.
    let spawned = thread::Builder::new()
        .name(format!("bench-{feature}-{size}"))
        .spawn(move || {
            let prepared = panic::catch_unwind(|| {
                let json = bench_document(feature, size).to_json();
                let input = if no_load {
                    Input::Model(Box::new(
                        ArchitectureModel::from_json_str(&json).map_err(|e| e.to_string())?,
                    ))
                } else {
                    Input::Json(json)
                };
                // the constraint references no labels, so any dictionary resolves it
                let constraint = parse_constraint(ALL_VIOLATIONS, &DataDictionary::new(Vec::new()))
                    .map_err(|e| e.to_string())?;
                Ok::<_, String>((input, constraint))
            });
            let (input, constraint) = match prepared {
                Ok(Ok(p)) => p,
                Ok(Err(e)) => return drop(tx.send(RunMessage::Failed(e))),
                Err(payload) => return drop(tx.send(RunMessage::Failed(panic_message(&*payload)))),
            };
            for _ in 0..reps {
                let start = Instant::now();
                let result =
                    panic::catch_unwind(AssertUnwindSafe(|| pipeline(&input, &constraint)));
                let ms = start.elapsed().as_secs_f64() * 1000.0;
                let message = match result {
                    Ok(Ok((violations, elements))) => RunMessage::Done {
                        ms,
                        violations,
                        elements,
                    },
                    Ok(Err(e)) => RunMessage::Failed(e),
                    Err(payload) => RunMessage::Failed(panic_message(&*payload)),
                };
                let failed = matches!(message, RunMessage::Failed(_));
                if tx.send(message).is_err() || failed {
                    return;
                }
            }
        });

    let mut result = BenchResult {
        feature,
        size,
        runs_ms: Vec::new(),
        median_ms: None,
        peak_memory_bytes: None,
        violations: 0,
        elements: 0,
        outcome: Outcome::Completed,
    };
    if let Err(e) = spawned {
        result.outcome = Outcome::Failed(format!("cannot start benchmark thread: {e}"));
        return result;
    }
    let deadline = Instant::now() + config.timeout;
    while result.runs_ms.len() < reps {
        let left = deadline.saturating_duration_since(Instant::now());
        match rx.recv_timeout(left) {
            Ok(RunMessage::Done {
                ms,
                violations,
                elements,
            }) => {
                result.runs_ms.push(ms);
                result.violations = violations;
                result.elements = elements;
            }
            Ok(RunMessage::Failed(reason)) => {
                result.outcome = Outcome::Failed(reason);
                break;
            }
            Err(mpsc::RecvTimeoutError::Timeout) => {
                result.outcome = Outcome::Failed(format!(
                    "timed out after {} s",
                    config.timeout.as_secs_f64()
                ));
                break;
            }
            Err(mpsc::RecvTimeoutError::Disconnected) => {
                result.outcome = Outcome::Failed("benchmark thread terminated".into());
                break;
            }
        }
    }
    result.median_ms = median(&result.runs_ms);
    result.peak_memory_bytes = peak_memory_bytes();
    result
}

/// Runs every size in order, one data point at a time. Failures of a data
/// point are recorded in its result; they never abort the benchmark.
pub fn run_bench(config: &BenchConfig) -> Result<Vec<BenchResult>, BenchError> {
    run_bench_with(config, |_| {})
}

/// Like [`run_bench`], calling `progress` after each data point.
pub fn run_bench_with(
    config: &BenchConfig,
    mut progress: impl FnMut(&BenchResult),
) -> Result<Vec<BenchResult>, BenchError> {
    config.validate()?;
    let mut out = Vec::with_capacity(config.sizes.len());
    for &size in &config.sizes {
        let r = run_point(config, size);
        progress(&r);
        out.push(r);
    }
    Ok(out)
}

/// Paths written by [`write_results`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputFiles {
    pub runs: PathBuf,
    pub medians: PathBuf,
    pub gnuplot: PathBuf,
}

impl OutputFiles {
    /// `<stem>_median.csv` and `<stem>_median.dat` next to `runs`.
    pub fn for_runs(runs: impl Into<PathBuf>) -> Self {
        let runs = runs.into();
        let stem = runs
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "bench".into());
        let dir = runs.parent().map(Path::to_path_buf).unwrap_or_default();
        Self {
            medians: dir.join(format!("{stem}_median.csv")),
            gnuplot: dir.join(format!("{stem}_median.dat")),
            runs,
        }
    }
}

fn fmt_ms(ms: f64) -> String {
    format!("{ms:.3}")
}

fn csv_error(path: &Path) -> impl Fn(csv::Error) -> BenchError + '_ {
    move |e| BenchError::Io {
        path: path.to_path_buf(),
        source: e.into(),
    }
}

fn io_error(path: &Path) -> impl Fn(io::Error) -> BenchError + '_ {
    move |source| BenchError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes per-run rows (`feature,size,run,wall_ms,outcome`), one median row
/// per data point (`feature,size,median_ms,outcome`) and a gnuplot table.
pub fn write_results(results: &[BenchResult], files: &OutputFiles) -> Result<(), BenchError> {
    let mut runs = csv::Writer::from_path(&files.runs).map_err(csv_error(&files.runs))?;
    runs.write_record(["feature", "size", "run", "wall_ms", "outcome"])
        .map_err(csv_error(&files.runs))?;
    for r in results {
        for (i, ms) in r.runs_ms.iter().enumerate() {
            runs.write_record([
                r.feature.name(),
                &r.size.to_string(),
                &(i + 1).to_string(),
                &fmt_ms(*ms),
                "completed",
            ])
            .map_err(csv_error(&files.runs))?;
        }
        if let Outcome::Failed(_) = &r.outcome {
            let run = (r.runs_ms.len() + 1).to_string();
            runs.write_record([
                r.feature.name(),
                &r.size.to_string(),
                &run,
                "",
                &r.outcome.to_string(),
            ])
            .map_err(csv_error(&files.runs))?;
        }
    }
    runs.flush().map_err(io_error(&files.runs))?;

    let mut medians = csv::Writer::from_path(&files.medians).map_err(csv_error(&files.medians))?;
    medians
        .write_record(["feature", "size", "median_ms", "outcome"])
        .map_err(csv_error(&files.medians))?;
    let mut dat = String::from("# size median_ms\n");
    for r in results {
        let median = r.median_ms.map(fmt_ms).unwrap_or_default();
        medians
            .write_record([
                r.feature.name(),
                &r.size.to_string(),
                &median,
                &r.outcome.to_string(),
            ])
            .map_err(csv_error(&files.medians))?;
        if r.outcome == Outcome::Completed {
            dat.push_str(&format!("{} {median}\n", r.size));
        }
    }
    medians.flush().map_err(io_error(&files.medians))?;
    fs::write(&files.gnuplot, dat).map_err(io_error(&files.gnuplot))
}
