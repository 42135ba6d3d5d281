use clap::{Args, Parser, Subcommand};
use ionscope::hamiltonians::{PulseKind, WaveConfig};
use ionscope::harness::{
    bases_json, gnuplot_script, measure, oracle, sweep, synthesize, write_synthesis_csv, ExperimentConfig, ModeKind,
    OracleQuery, OracleState, SweepGrid,
};
use ionscope::num::c;
use ionscope::observables::{BasisKind, StateRecipe};
use ionscope::{Error, Result};
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Motional-state synthesis and arbitrary-observable measurement for a
/// trapped ion.
///
/// Settings are resolved as: built-in defaults, then the --config JSON
/// document, then command-line flags. The seed falls back to IONSCOPE_SEED
/// when neither the flags nor the config set it.
#[derive(Parser, Debug)]
#[command(name = "ionscope", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compile a target state and report ideal and full-Hamiltonian fidelity.
    Synthesize {
        #[command(flatten)]
        common: Common,
        /// Also write the pulse schedule as JSON.
        #[arg(long)]
        schedule_out: Option<PathBuf>,
    },
    /// Synthesis over a Cartesian grid; list flags take comma-separated values.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
    /// Run the filtering measurement and write a histogram (and records).
    Measure {
        #[command(flatten)]
        common: Common,
    },
    /// Dump reference values as versioned JSON.
    Oracle {
        #[command(subcommand)]
        query: OracleCmd,
        #[arg(long, global = true)]
        out: Option<PathBuf>,
    },
    /// Export an observable basis as JSON.
    Bases {
        #[arg(long, default_value = "phase")]
        basis: String,
        #[arg(long = "N", default_value_t = 8)]
        n: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long, value_delimiter = ',')]
    wave: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    eta: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    q: Vec<f64>,
    #[arg(long = "N", value_delimiter = ',')]
    n: Vec<usize>,
    #[arg(long)]
    trials: Option<usize>,
    /// Measurement basis: phase or position.
    #[arg(long)]
    basis: Option<String>,
    /// Target family: phase, coherent or cat.
    #[arg(long)]
    state: Option<String>,
    #[arg(long)]
    phi: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Write a companion gnuplot script next to the output file.
    #[arg(long)]
    gnuplot: bool,
}

#[derive(Subcommand, Debug)]
enum OracleCmd {
    /// Effective Rabi frequency Ω_n/Ω.
    Rabi {
        #[arg(long, default_value_t = 0)]
        n: usize,
        #[arg(long)]
        eta: f64,
        #[arg(long, default_value = "vertical")]
        pulse: String,
        #[arg(long, default_value = "travelling")]
        wave: String,
    },
    /// ⟨n|exp(-iη(a+a†))|m⟩.
    Displacement {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        eta: f64,
    },
    /// Associated Laguerre polynomial.
    Laguerre {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        alpha: usize,
        #[arg(long)]
        x: f64,
    },
    /// Eigenvalues of the truncated position quadrature.
    PositionEigs {
        #[arg(long = "N")]
        n: usize,
    },
    /// Physicists' Hermite polynomial.
    Hermite {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        x: f64,
    },
    /// Exact protocol distribution next to the Born distribution.
    Protocol {
        #[arg(long = "N")]
        n: usize,
        #[arg(long, default_value = "random")]
        state: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "phase")]
        basis: String,
        #[arg(long, default_value_t = 2.0)]
        phi: f64,
        #[arg(long, default_value_t = 1.5)]
        alpha: f64,
    },
}

fn single<T: Copy>(name: &str, v: &[T]) -> Result<Option<T>> {
    match v {
        [] => Ok(None),
        [x] => Ok(Some(*x)),
        _ => Err(Error::invalid(format!("--{name} takes a single value here; use `sweep` for lists"))),
    }
}

fn recipe_for(state: &str, n: usize, phi: f64, alpha: f64) -> Result<StateRecipe<f64>> {
    match state {
        "phase" => Ok(StateRecipe::PhaseState { n, phi }),
        "coherent" => Ok(StateRecipe::Coherent { alpha: c(alpha, 0.0), n }),
        "cat" => Ok(StateRecipe::Cat { alpha: c(alpha, 0.0), n }),
        other => Err(Error::invalid(format!("unknown state `{other}` (expected phase, coherent or cat)"))),
    }
}

impl Common {
    /// Config with single-valued overrides applied.
    fn resolve(&self, allow_lists: bool) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = &self.state {
            let phi = self.phi.unwrap_or(2.0);
            let alpha = self.alpha.unwrap_or(1.5);
            cfg.recipe = recipe_for(s, cfg.recipe.n(), phi, alpha)?;
        } else {
            cfg.recipe = match (cfg.recipe.clone(), self.phi, self.alpha) {
                (StateRecipe::PhaseState { n, .. }, Some(phi), _) => StateRecipe::PhaseState { n, phi },
                (StateRecipe::Coherent { n, .. }, _, Some(a)) => StateRecipe::Coherent { alpha: c(a, 0.0), n },
                (StateRecipe::Cat { n, .. }, _, Some(a)) => StateRecipe::Cat { alpha: c(a, 0.0), n },
                (r, _, _) => r,
            };
        }
        if let Some(s) = self.seed {
            cfg.seed = Some(s);
        }
        if let Some(o) = &self.out {
            cfg.out = Some(o.clone());
        }
        if let Some(m) = &self.mode {
            cfg.mode = m.parse::<ModeKind>()?;
        }
        if let Some(t) = self.trials {
            cfg.trials = t;
        }
        if let Some(b) = &self.basis {
            cfg.basis = b.parse::<BasisKind>()?;
        }
        if !allow_lists {
            if let Some(w) = single("wave", &self.waves()?)? {
                cfg.wave = w;
            }
            if let Some(e) = single("eta", &self.eta)? {
                cfg.trap.eta = e;
            }
            if let Some(q) = single("q", &self.q)? {
                cfg.q = q;
            }
            if let Some(n) = single("N", &self.n)? {
                cfg.recipe = cfg.recipe.with_n(n);
            }
        }
        Ok(cfg)
    }

    fn waves(&self) -> Result<Vec<WaveConfig>> {
        self.wave.iter().map(|w| w.parse()).collect()
    }

    fn grid(&self) -> Result<SweepGrid> {
        Ok(SweepGrid { eta: self.eta.clone(), q: self.q.clone(), wave: self.waves()?, n: self.n.clone() })
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(j) = self.jobs {
            if j == 0 {
                return Err(Error::invalid("--jobs must be >= 1"));
            }
            b = b.num_threads(j);
        }
        b.build().map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))
    }
}

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_gnuplot(csv: Option<&Path>, kind: &str) -> Result<()> {
    let csv = csv.ok_or_else(|| Error::invalid("--gnuplot needs --out"))?;
    std::fs::write(csv.with_extension("gp"), gnuplot_script(csv, kind))?;
    Ok(())
}

fn write_json(path: Option<&Path>, v: &serde_json::Value) -> Result<()> {
    let mut w = open_out(path)?;
    serde_json::to_writer_pretty(&mut w, v)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synthesize { common, schedule_out } => {
            let cfg = common.resolve(false)?;
            let (sched, report) = common.pool()?.install(|| synthesize(&cfg))?;
            let mut w = open_out(cfg.out.as_deref())?;
            write_synthesis_csv(&mut w, &[report])?;
            w.flush()?;
            if let Some(p) = schedule_out {
                std::fs::write(p, sched.steps_to_json()?)?;
            }
            if common.gnuplot {
                write_gnuplot(cfg.out.as_deref(), "synthesis")?;
            }
        }
        Command::Sweep { common } => {
            let cfg = common.resolve(true)?;
            let rows = common.pool()?.install(|| sweep(&cfg, &common.grid()?))?;
            let mut w = open_out(cfg.out.as_deref())?;
            write_synthesis_csv(&mut w, &rows)?;
            w.flush()?;
            if common.gnuplot {
                write_gnuplot(cfg.out.as_deref(), "synthesis")?;
            }
        }
        Command::Measure { common } => {
            let cfg = common.resolve(false)?;
            let out = common.pool()?.install(|| measure(&cfg))?;
            let mut w = open_out(cfg.out.as_deref())?;
            out.write_histogram(&mut w)?;
            w.flush()?;
            if let Some(p) = cfg.out.as_deref() {
                let mut r = BufWriter::new(File::create(p.with_extension("jsonl"))?);
                out.write_records(&mut r)?;
                r.flush()?;
            }
            if common.gnuplot {
                write_gnuplot(cfg.out.as_deref(), "histogram")?;
            }
        }
        Command::Oracle { query, out } => {
            let q = match query {
                OracleCmd::Rabi { n, eta, pulse, wave } => {
                    let kind = match pulse.as_str() {
                        "vertical" => PulseKind::Vertical,
                        "diagonal" => PulseKind::Diagonal,
                        other => return Err(Error::invalid(format!("unknown pulse `{other}` (expected vertical or diagonal)"))),
                    };
                    OracleQuery::Rabi { n, eta, kind, wave: wave.parse()? }
                }
                OracleCmd::Displacement { n, m, eta } => OracleQuery::Displacement { n, m, eta },
                OracleCmd::Laguerre { n, alpha, x } => OracleQuery::Laguerre { n, alpha, x },
                OracleCmd::PositionEigs { n } => OracleQuery::PositionEigs { n },
                OracleCmd::Hermite { n, x } => OracleQuery::Hermite { n, x },
                OracleCmd::Protocol { n, state, seed, basis, phi, alpha } => {
                    let state = match state.as_str() {
                        "random" => OracleState::Random,
                        s => OracleState::Recipe(recipe_for(s, n, phi, alpha)?),
                    };
                    OracleQuery::Protocol { n, basis: basis.parse()?, state, seed }
                }
            };
            write_json(out.as_deref(), &oracle(&q)?)?;
        }
        Command::Bases { basis, n, out } => write_json(out.as_deref(), &bases_json(basis.parse()?, n)?)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Convergence { .. } => ExitCode::from(3),
                _ => ExitCode::from(2),
            }
        }
    }
}
