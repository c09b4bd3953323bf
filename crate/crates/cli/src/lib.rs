//! Command-line front end of `archflow`.
//!
//! [`run`] takes the argument list and two writers so the whole tool can be
//! driven in-process. Exit codes: 0 success and no violations, 1 violations
//! found, 2 usage, load or evaluation error.

use std::ffi::OsString;
use std::fmt::Display;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use archflow_core::adl::{self, LoadError};
use archflow_core::analysis::{BuildError, DataFlowAnalysis, DataFlowAnalysisBuilder};
use archflow_core::benchgen::{self, BenchConfig, BenchFeature, OutputFiles};
use archflow_core::constraints::load_constraints;
use archflow_core::report;
use clap::{Parser, Subcommand};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VIOLATIONS: i32 = 1;
pub const EXIT_ERROR: i32 = 2;

#[derive(Parser)]
#[command(
    name = "archflow",
    version,
    about = "Data flow confidentiality analysis for architecture models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a model against data flow constraints.
    Analyze {
        model: PathBuf,
        /// Constraint file, one `VIOLATION ...` per line.
        #[arg(long)]
        constraints: PathBuf,
        /// Print the labels of every node and variable before the report.
        #[arg(long)]
        dump_propagation: bool,
        /// Worker threads (default: available processors).
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        threads: Option<u64>,
    },
    /// List the extracted action sequences.
    Sequences {
        model: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        threads: Option<u64>,
    },
    /// Load a model and report its defects.
    Validate { model: PathBuf },
    /// Run the scalability benchmark for one feature.
    Bench {
        #[arg(long, value_parser = parse_feature)]
        feature: BenchFeature,
        /// Comma-separated, ascending model sizes.
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "1,10,100,1000,10000,100000"
        )]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 10)]
        reps: usize,
        /// Per-run CSV; medians go to `<stem>_median.csv` and `<stem>_median.dat`.
        #[arg(long)]
        out: PathBuf,
        /// Time only the analysis, not model loading.
        #[arg(long)]
        no_load: bool,
        #[arg(long, default_value_t = 600)]
        timeout_secs: u64,
    },
}

fn parse_feature(s: &str) -> Result<BenchFeature, String> {
    s.parse()
}

struct Io<'a> {
    out: &'a mut dyn Write,
    err: &'a mut dyn Write,
}

impl Io<'_> {
    // Diagnostics are best effort; a closed stderr must not change the result.
    fn diag(&mut self, line: impl Display) {
        let _ = writeln!(self.err, "{line}");
    }

    fn fail(&mut self, message: impl Display) -> i32 {
        self.diag(format_args!("error: {message}"));
        EXIT_ERROR
    }

    fn emit(&mut self, text: &str) -> Result<(), i32> {
        match self
            .out
            .write_all(text.as_bytes())
            .and_then(|_| self.out.flush())
        {
            Ok(()) => Ok(()),
            Err(e) => Err(self.fail(e)),
        }
    }

    fn load_error(&mut self, e: &LoadError) -> i32 {
        self.diag(format_args!("error: {e}"));
        EXIT_ERROR
    }

    fn build(&mut self, model: &Path, threads: Option<u64>) -> Result<DataFlowAnalysis, i32> {
        let mut builder = DataFlowAnalysisBuilder::new().model_path(model);
        if let Some(n) = threads {
            builder = builder.threads(n as usize);
        }
        let analysis = builder.build().map_err(|e| match e {
            BuildError::Load(l) => self.load_error(&l),
            other => self.fail(other),
        })?;
        for w in analysis.model().warnings() {
            self.diag(format_args!("warning: {w}"));
        }
        Ok(analysis)
    }

    fn analyze(
        &mut self,
        model: &Path,
        constraints: &Path,
        dump: bool,
        threads: Option<u64>,
    ) -> Result<i32, i32> {
        let analysis = self.build(model, threads)?;
        let constraints = load_constraints(constraints, analysis.model().dictionary())
            .map_err(|e| self.fail(e))?;
        let sequences = analysis.find_all_sequences().map_err(|e| self.fail(e))?;
        let propagated = analysis
            .evaluate_data_flows(&sequences)
            .map_err(|e| self.fail(e))?;
        let results = analysis
            .query_many(&propagated, &constraints)
            .map_err(|e| {
                for err in &e.0 {
                    self.diag(format_args!("error: {err}"));
                }
                EXIT_ERROR
            })?;
        let mut text = String::new();
        if dump {
            text.push_str(&report::format_propagation(&propagated));
        }
        text.push_str(&report::format_report(&results));
        self.emit(&text)?;
        if results.values().any(|v| !v.is_empty()) {
            Ok(EXIT_VIOLATIONS)
        } else {
            Ok(EXIT_OK)
        }
    }

    fn sequences(&mut self, model: &Path, threads: Option<u64>) -> Result<i32, i32> {
        let analysis = self.build(model, threads)?;
        let sequences = analysis.find_all_sequences().map_err(|e| self.fail(e))?;
        self.emit(&report::format_sequences(&sequences))?;
        Ok(EXIT_OK)
    }

    fn validate(&mut self, model: &Path) -> Result<i32, i32> {
        match adl::load_model(model) {
            Ok(m) => {
                for w in m.warnings() {
                    self.diag(format_args!("warning: {w}"));
                }
                self.emit("OK\n")?;
                Ok(EXIT_OK)
            }
            Err(e) if e.defects().is_empty() => Err(self.load_error(&e)),
            Err(e) => {
                let text: String = e
                    .defects()
                    .iter()
                    .map(|d| format!("DEFECT {d}\n"))
                    .collect();
                self.emit(&text)?;
                Ok(EXIT_ERROR)
            }
        }
    }

    fn bench(&mut self, config: BenchConfig, out: &Path) -> Result<i32, i32> {
        config.validate().map_err(|e| self.fail(e))?;
        let results = benchgen::run_bench_with(&config, |r| {
            let median = r
                .median_ms
                .map_or_else(|| "-".to_string(), |m| format!("{m:.3}"));
            self.diag(format_args!(
                "{} n={} median_ms={median} {}",
                r.feature, r.size, r.outcome
            ));
        })
        .map_err(|e| self.fail(e))?;
        let files = OutputFiles::for_runs(out);
        benchgen::write_results(&results, &files).map_err(|e| self.fail(e))?;
        Ok(EXIT_OK)
    }
}

/// Runs the tool on `args` (including the program name) and returns the
/// exit code. Reports go to `out`, diagnostics and progress to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let mut io = Io { out, err };
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                io.diag(text.trim_end());
                EXIT_ERROR
            } else {
                io.emit(&text).map_or_else(|code| code, |_| EXIT_OK)
            };
        }
    };
    let result = match cli.command {
        Command::Analyze {
            model,
            constraints,
            dump_propagation,
            threads,
        } => io.analyze(&model, &constraints, dump_propagation, threads),
        Command::Sequences { model, threads } => io.sequences(&model, threads),
        Command::Validate { model } => io.validate(&model),
        Command::Bench {
            feature,
            sizes,
            reps,
            out,
            no_load,
            timeout_secs,
        } => {
            let config = BenchConfig {
                feature,
                sizes,
                repetitions: reps,
                no_load,
                timeout: Duration::from_secs(timeout_secs),
            };
            io.bench(config, &out)
        }
    };
    result.unwrap_or_else(|code| code)
}
