//! Command-line interface: projections, signal estimation, example
//! generation and the two comparison experiments.
//!
//! Exit codes: 0 success, 2 input/format error, 3 numerical failure,
//! 4 size-limit refusal.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use glrr_core::error::{Error, Result};
use glrr_core::harness::{
    experiment_projection_accuracy, experiment_solution_stability, make_example,
    make_projection_example, summarize_stability,
};
use glrr_core::io::{read_glrr_csv, read_signal_csv, write_glrr_csv, write_signal_csv};
use glrr_core::optimizer::{vpgn_solve, SolverVariant, StopReason, VpgnOptions};
use glrr_core::projection::{project, ProjectionKind};
use glrr_core::weights::WeightSpec;
use glrr_core::{glrr_residual, GlrrVector};

/// The Gram-matrix route with a dense Gram matrix is cubic in N; refuse
/// above this length unless explicitly overridden.
const DENSE_VP_LIMIT: usize = 4000;
/// Desk-scale cap for experiment lengths without `--extend`.
const EXPERIMENT_N_CAP: usize = 5000;

#[derive(Parser)]
#[command(
    name = "glrr",
    about = "Low-rank time-series estimation via generalized linear recurrence relations",
    version
)]
struct Cli {
    /// Optional JSON file with default flag values (keys are the long flag
    /// names); explicitly passed flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Project a series onto the subspace of a given GLRR.
    Project {
        /// Series CSV (one value per line, optional `value` header).
        #[arg(long)]
        input: Option<PathBuf>,
        /// GLRR coefficient CSV, r + 1 values.
        #[arg(long)]
        glrr: Option<PathBuf>,
        /// vp | svp | svph.
        #[arg(long)]
        method: Option<String>,
        /// identity | ar1:phi=<f>,sigma2=<f>.
        #[arg(long)]
        weights: Option<String>,
        #[arg(long)]
        output: Option<PathBuf>,
        /// Allow the cubic dense-Gram path above the size limit.
        #[arg(long)]
        allow_dense: bool,
    },
    /// Estimate a rank-r signal by variable-projection Gauss-Newton.
    Estimate {
        #[arg(long)]
        input: Option<PathBuf>,
        /// Target rank; must match the initial GLRR order.
        #[arg(long)]
        rank: Option<usize>,
        /// Initial GLRR coefficient CSV, rank + 1 values.
        #[arg(long)]
        init: Option<PathBuf>,
        /// vpgn | svpgn | svpgn-h.
        #[arg(long)]
        method: Option<String>,
        #[arg(long)]
        max_iters: Option<usize>,
        #[arg(long)]
        weights: Option<String>,
        /// JSON file for the full iterate trace.
        #[arg(long)]
        report: Option<PathBuf>,
        /// CSV for the estimated signal.
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        allow_dense: bool,
    },
    /// Generate a constructed test problem with a known solution.
    MakeExample {
        #[arg(long)]
        n: Option<usize>,
        /// solution | projection.
        #[arg(long)]
        kind: Option<String>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        weights: Option<String>,
    },
    /// Accuracy/stability comparison experiments.
    Experiment {
        #[command(subcommand)]
        which: ExperimentCommand,
    },
}

#[derive(Subcommand)]
enum ExperimentCommand {
    /// Projection accuracy against the known projection, per method and N.
    ProjAccuracy {
        /// Comma-separated series lengths.
        #[arg(long)]
        n_list: Option<String>,
        /// Comma-separated subset of vp,svp,svph.
        #[arg(long)]
        methods: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        weights: Option<String>,
        /// Allow lengths beyond the desk-scale cap.
        #[arg(long)]
        extend: bool,
    },
    /// Solver stability: seeded perturbed starts, all three variants.
    Stability {
        #[arg(long)]
        n_list: Option<String>,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        weights: Option<String>,
        #[arg(long)]
        extend: bool,
    },
}

/// Flat JSON object of fallback flag values.
struct FileConfig(serde_json::Map<String, serde_json::Value>);

impl FileConfig {
    fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self(serde_json::Map::new()));
        };
        let text = std::fs::read_to_string(path)?;
        let value: serde_json::Value = serde_json::from_str(&text)?;
        match value {
            serde_json::Value::Object(map) => Ok(Self(map)),
            _ => Err(Error::InvalidInput(format!(
                "{}: config must be a JSON object",
                path.display()
            ))),
        }
    }

    fn string(&self, key: &str) -> Option<String> {
        self.0.get(key).map(|v| match v {
            serde_json::Value::String(s) => s.clone(),
            other => other.to_string(),
        })
    }

    fn unsigned(&self, key: &str) -> Option<u64> {
        self.0.get(key).and_then(|v| v.as_u64())
    }
}

fn require<T>(flag: Option<T>, fallback: Option<T>, name: &str) -> Result<T> {
    flag.or(fallback)
        .ok_or_else(|| Error::InvalidInput(format!("missing required option --{name}")))
}

fn parse_n_list(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|part| {
            part.trim()
                .parse::<usize>()
                .map_err(|_| Error::InvalidInput(format!("bad length '{part}' in N list")))
        })
        .collect()
}

fn parse_methods(s: &str) -> Result<Vec<ProjectionKind>> {
    s.split(',')
        .map(|part| ProjectionKind::parse(part.trim()))
        .collect()
}

fn check_experiment_cap(n_list: &[usize], extend: bool) -> Result<()> {
    if let Some(&n) = n_list.iter().find(|&&n| n > EXPERIMENT_N_CAP) {
        if !extend {
            return Err(Error::SizeLimit {
                n,
                limit: EXPERIMENT_N_CAP,
            });
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let cfg = FileConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Project {
            input,
            glrr,
            method,
            weights,
            output,
            allow_dense,
        } => {
            let input = require(input, cfg.string("input").map(PathBuf::from), "input")?;
            let glrr_path = require(glrr, cfg.string("glrr").map(PathBuf::from), "glrr")?;
            let method = require(method, cfg.string("method"), "method")?;
            let weights = weights
                .or(cfg.string("weights"))
                .unwrap_or_else(|| "identity".into());
            let output = require(output, cfg.string("output").map(PathBuf::from), "output")?;

            let x = read_signal_csv(&input)?;
            let a = read_glrr_csv(&glrr_path)?;
            let kind = ProjectionKind::parse(&method)?;
            let w = WeightSpec::parse(&weights)?.build(x.len())?;
            if kind == ProjectionKind::Vp
                && !w.inverse_is_banded()
                && x.len() > DENSE_VP_LIMIT
                && !allow_dense
            {
                return Err(Error::SizeLimit {
                    n: x.len(),
                    limit: DENSE_VP_LIMIT,
                });
            }
            let result = project(&a, &w, &x, kind)?;
            write_signal_csv(&output, &result.projected)?;
            println!(
                "projected n={} method={} glrr_residual={:.3e} imag_leak={:.3e}",
                x.len(),
                kind.name(),
                glrr_residual(&result.projected, &a)?,
                result.imag_leak
            );
            Ok(())
        }
        Command::Estimate {
            input,
            rank,
            init,
            method,
            max_iters,
            weights,
            report,
            output,
            allow_dense,
        } => {
            let input = require(input, cfg.string("input").map(PathBuf::from), "input")?;
            let rank = require(rank, cfg.unsigned("rank").map(|v| v as usize), "rank")?;
            let init = require(init, cfg.string("init").map(PathBuf::from), "init")?;
            let method = require(method, cfg.string("method"), "method")?;
            let max_iters = max_iters
                .or(cfg.unsigned("max-iters").map(|v| v as usize))
                .unwrap_or(200);
            let weights = weights
                .or(cfg.string("weights"))
                .unwrap_or_else(|| "identity".into());
            let report_path = require(report, cfg.string("report").map(PathBuf::from), "report")?;
            let output = require(output, cfg.string("output").map(PathBuf::from), "output")?;

            let x = read_signal_csv(&input)?;
            let a0 = read_glrr_csv(&init)?;
            if a0.order() != rank {
                return Err(Error::InvalidInput(format!(
                    "initial GLRR has order {} but --rank is {rank}",
                    a0.order()
                )));
            }
            let variant = SolverVariant::parse(&method)?;
            let w = WeightSpec::parse(&weights)?.build(x.len())?;
            if variant == SolverVariant::Vpgn
                && !w.inverse_is_banded()
                && x.len() > DENSE_VP_LIMIT
                && !allow_dense
            {
                return Err(Error::SizeLimit {
                    n: x.len(),
                    limit: DENSE_VP_LIMIT,
                });
            }
            let mut opts = VpgnOptions::new(variant, w);
            opts.max_iters = max_iters;
            let outcome = vpgn_solve(&x, &a0, &opts)?;
            write_signal_csv(&output, &outcome.estimate)?;
            let file = std::fs::File::create(&report_path)?;
            serde_json::to_writer_pretty(std::io::BufWriter::new(file), &outcome)?;
            let last = outcome.iterations.last();
            println!(
                "estimated n={} method={} iterations={} stop={} objective={:.6e}",
                x.len(),
                variant.name(),
                outcome.iterations.len(),
                match outcome.stop_reason {
                    StopReason::StepExhausted => "step-exhausted",
                    StopReason::MaxIters => "max-iters",
                },
                last.map(|r| r.objective).unwrap_or(f64::NAN)
            );
            Ok(())
        }
        Command::MakeExample {
            n,
            kind,
            out_dir,
            weights,
        } => {
            let n = require(n, cfg.unsigned("n").map(|v| v as usize), "n")?;
            let kind = require(kind, cfg.string("kind"), "kind")?;
            let out_dir = require(out_dir, cfg.string("out-dir").map(PathBuf::from), "out-dir")?;
            let weights = weights
                .or(cfg.string("weights"))
                .unwrap_or_else(|| "identity".into());
            let w = WeightSpec::parse(&weights)?.build(n)?;
            std::fs::create_dir_all(&out_dir)?;
            let (observed, y_star, a_star): (_, _, GlrrVector) = match kind.as_str() {
                "solution" => {
                    let ex = make_example(n, &w)?;
                    (ex.x, ex.y_star, ex.a_star)
                }
                "projection" => {
                    let ex = make_projection_example(n, &w)?;
                    (ex.p, ex.y_star, ex.a_star)
                }
                other => {
                    return Err(Error::InvalidInput(format!(
                        "unknown example kind '{other}' (expected solution|projection)"
                    )))
                }
            };
            write_signal_csv(&out_dir.join("observed.csv"), &observed)?;
            write_signal_csv(&out_dir.join("y_star.csv"), &y_star)?;
            write_glrr_csv(&out_dir.join("a_star.csv"), &a_star)?;
            println!("wrote {kind} example n={n} to {}", out_dir.display());
            Ok(())
        }
        Command::Experiment { which } => match which {
            ExperimentCommand::ProjAccuracy {
                n_list,
                methods,
                out,
                weights,
                extend,
            } => {
                let n_list = parse_n_list(&require(n_list, cfg.string("n-list"), "n-list")?)?;
                let methods = parse_methods(
                    &methods
                        .or(cfg.string("methods"))
                        .unwrap_or_else(|| "vp,svp,svph".into()),
                )?;
                let out = require(out, cfg.string("out").map(PathBuf::from), "out")?;
                let weights = weights
                    .or(cfg.string("weights"))
                    .unwrap_or_else(|| "identity".into());
                check_experiment_cap(&n_list, extend)?;
                let spec = WeightSpec::parse(&weights)?;
                let rows = experiment_projection_accuracy(&n_list, &methods, spec, &out)?;
                for row in &rows {
                    match row.value {
                        Some(v) => println!("n={} method={} accuracy={v:.6e}", row.n, row.method),
                        None => println!("n={} method={} diverged", row.n, row.method),
                    }
                }
                Ok(())
            }
            ExperimentCommand::Stability {
                n_list,
                reps,
                seed,
                out,
                weights,
                extend,
            } => {
                let n_list = parse_n_list(&require(n_list, cfg.string("n-list"), "n-list")?)?;
                let reps = require(reps, cfg.unsigned("reps").map(|v| v as usize), "reps")?;
                let seed = require(seed, cfg.unsigned("seed"), "seed")?;
                let out = require(out, cfg.string("out").map(PathBuf::from), "out")?;
                let weights = weights
                    .or(cfg.string("weights"))
                    .unwrap_or_else(|| "identity".into());
                check_experiment_cap(&n_list, extend)?;
                let spec = WeightSpec::parse(&weights)?;
                let rows = experiment_solution_stability(&n_list, reps, seed, spec, &out)?;
                for s in summarize_stability(&rows) {
                    if s.metric == "distance" {
                        match s.mean {
                            Some(m) => println!(
                                "n={} method={} mean_distance={m:.6e} diverged={}/{}",
                                s.n, s.method, s.diverged_count, s.total
                            ),
                            None => println!(
                                "n={} method={} all {} replications diverged",
                                s.n, s.method, s.total
                            ),
                        }
                    }
                }
                Ok(())
            }
        },
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
