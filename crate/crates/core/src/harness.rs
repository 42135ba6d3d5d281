//! Experiment configuration, sweeps, oracle dumps and file output for the CLI.

use crate::error::{Error, Result};
use crate::hamiltonians::{displacement_element, effective_rabi, laguerre, PulseKind, TrapParams, WaveConfig};
use crate::hilbert::{apply, make_joint_space, JointIndex};
use crate::measurement::{exact_protocol_distribution, FullModeConfig, Protocol, ProtocolMode, TrialSummary, PHONON_PADDING};
use crate::num::{c, Real, C};
use crate::observables::{born_distribution, hermite, BasisKind, ObservableBasis, StateRecipe};
use crate::propagator::{FullPropagator, IntegratorConfig};
use crate::pulse_compiler::{compile, fidelity, Schedule};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::io::Write;
use std::path::{Path, PathBuf};

/// Version tag carried by every oracle dump.
pub const ORACLE_SCHEMA: &str = "ionscope.oracle/1";

pub const SYNTH_HEADER: &str = "N,eta,q,wave,pulses,F_ideal,F_full,nu_t_over_2pi,norm_drift,leakage,edge_population";
pub const HISTOGRAM_HEADER: &str = "k,a_k,count,exact_P_k";

/// Environment variable consulted for the seed when neither the command line
/// nor the config file sets one.
pub const SEED_ENV: &str = "IONSCOPE_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ModeKind {
    #[default]
    Ideal,
    Full,
}

impl std::str::FromStr for ModeKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ideal" => Ok(ModeKind::Ideal),
            "full" => Ok(ModeKind::Full),
            other => Err(Error::invalid(format!("unknown mode `{other}` (expected ideal or full)"))),
        }
    }
}

fn default_efficiency() -> f64 {
    1.0
}

/// One experiment. Every field has a default so that partial JSON documents
/// are accepted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub recipe: StateRecipe<f64>,
    pub basis: BasisKind,
    pub mode: ModeKind,
    pub trap: TrapParams<f64>,
    pub q: f64,
    pub wave: WaveConfig,
    pub trials: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    pub integrator: IntegratorConfig<f64>,
    #[serde(default = "default_efficiency")]
    pub detector_efficiency: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            recipe: StateRecipe::PhaseState { n: 8, phi: 2.0 },
            basis: BasisKind::Phase,
            mode: ModeKind::Ideal,
            trap: TrapParams { nu: 1.0, eta: 0.5 },
            q: 0.1,
            wave: WaveConfig::Travelling,
            trials: 10_000,
            seed: None,
            out: None,
            integrator: IntegratorConfig::default(),
            detector_efficiency: 1.0,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(s)?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.trap.validate()?;
        self.integrator.validate()?;
        if !(self.q > 0.0 && self.q <= 1.0) {
            return Err(Error::invalid(format!("q must lie in (0, 1], got {}", self.q)));
        }
        if self.trials == 0 {
            return Err(Error::invalid("trials must be >= 1"));
        }
        if !(self.detector_efficiency > 0.0 && self.detector_efficiency <= 1.0) {
            return Err(Error::invalid(format!("detector_efficiency must lie in (0, 1], got {}", self.detector_efficiency)));
        }
        if self.basis == BasisKind::Position && self.recipe.n() == 0 {
            return Err(Error::invalid("the position basis needs N >= 1"));
        }
        self.recipe.coefficients()?;
        Ok(())
    }

    /// Seed from the config, then the environment, then 0.
    pub fn resolved_seed(&self) -> Result<u64> {
        if let Some(s) = self.seed {
            return Ok(s);
        }
        match std::env::var(SEED_ENV) {
            Ok(v) => v.trim().parse().map_err(|_| Error::invalid(format!("{SEED_ENV}=`{v}` is not an unsigned integer"))),
            Err(_) => Ok(0),
        }
    }

    pub fn protocol_mode(&self) -> ProtocolMode<f64> {
        match self.mode {
            ModeKind::Ideal => ProtocolMode::Ideal,
            ModeKind::Full => ProtocolMode::Full(FullModeConfig { trap: self.trap, q: self.q, wave: self.wave, integrator: self.integrator }),
        }
    }
}

/// Formats a float with 17 significant digits.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Result of compiling and playing one target state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisReport {
    pub n: usize,
    pub eta: f64,
    pub q: f64,
    pub wave: WaveConfig,
    pub pulses: usize,
    pub f_ideal: f64,
    /// Only computed in full mode.
    pub f_full: Option<f64>,
    pub nu_t_over_2pi: f64,
    pub norm_drift: Option<f64>,
    /// Population above the target's top level after full evolution.
    pub leakage: Option<f64>,
    /// Population on the highest simulated phonon level.
    pub edge_population: Option<f64>,
}

impl SynthesisReport {
    pub fn csv_row(&self) -> String {
        let opt = |x: Option<f64>| x.map(fmt17).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.n,
            fmt17(self.eta),
            fmt17(self.q),
            self.wave,
            self.pulses,
            fmt17(self.f_ideal),
            opt(self.f_full),
            fmt17(self.nu_t_over_2pi),
            opt(self.norm_drift),
            opt(self.leakage),
            opt(self.edge_population)
        )
    }
}

/// Compiles the config's recipe and plays it under the ideal and, in full
/// mode, the exact Hamiltonian.
pub fn synthesize(cfg: &ExperimentConfig) -> Result<(Schedule<f64>, SynthesisReport)> {
    cfg.validate()?;
    let target = cfg.recipe.coefficients()?;
    let n = target.len() - 1;
    let sched = compile(&target, &cfg.trap, cfg.q, cfg.wave)?;

    let ideal_space = make_joint_space(n);
    let start = ideal_space.basis_state(JointIndex::g(0));
    let reached = sched.run_ideal(&start, &cfg.trap)?;
    let f_ideal = fidelity(&ideal_space.embed_ground(&target)?, &reached)?;

    let mut report = SynthesisReport {
        n,
        eta: cfg.trap.eta,
        q: cfg.q,
        wave: cfg.wave,
        pulses: sched.len(),
        f_ideal,
        f_full: None,
        nu_t_over_2pi: sched.nu_t_over_2pi(&cfg.trap),
        norm_drift: None,
        leakage: None,
        edge_population: None,
    };
    if cfg.mode == ModeKind::Full {
        let space = make_joint_space(n + PHONON_PADDING);
        let mut prop = FullPropagator::new(cfg.trap, space, cfg.integrator)?;
        let u = prop.sequence_unitary(&sched.pulses(&cfg.trap)?)?;
        let out = apply(&u, &space.basis_state(JointIndex::g(0)))?;
        report.f_full = Some(fidelity(&space.embed_ground(&target)?, &out)?);
        report.norm_drift = Some((out.norm_sqr() - 1.0).abs());
        report.leakage = Some(space.population_at_or_above(&out, n + 1));
        report.edge_population = Some(space.population_at_or_above(&out, space.n_max));
    }
    Ok((sched, report))
}

/// Axes of a parameter sweep; an empty axis keeps the base config's value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepGrid {
    pub eta: Vec<f64>,
    pub q: Vec<f64>,
    pub wave: Vec<WaveConfig>,
    pub n: Vec<usize>,
}

impl SweepGrid {
    pub fn is_empty(&self) -> bool {
        self.eta.is_empty() && self.q.is_empty() && self.wave.is_empty() && self.n.is_empty()
    }

    /// Cartesian product in the order N, wave, q, η (η varies fastest).
    pub fn expand(&self, base: &ExperimentConfig) -> Result<Vec<ExperimentConfig>> {
        if self.is_empty() {
            return Err(Error::invalid("sweep grid is empty: give at least one of --eta, --q, --wave, --N"));
        }
        let or = |v: &Vec<f64>, d: f64| if v.is_empty() { vec![d] } else { v.clone() };
        let ns = if self.n.is_empty() { vec![base.recipe.n()] } else { self.n.clone() };
        let waves = if self.wave.is_empty() { vec![base.wave] } else { self.wave.clone() };
        let mut out = Vec::new();
        for &n in &ns {
            for &wave in &waves {
                for q in or(&self.q, base.q) {
                    for eta in or(&self.eta, base.trap.eta) {
                        let mut c = base.clone();
                        c.recipe = base.recipe.with_n(n);
                        c.wave = wave;
                        c.q = q;
                        c.trap.eta = eta;
                        out.push(c);
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Runs every grid point on the current rayon pool; rows keep grid order.
pub fn sweep(base: &ExperimentConfig, grid: &SweepGrid) -> Result<Vec<SynthesisReport>> {
    let points = grid.expand(base)?;
    for p in &points {
        p.validate()?;
    }
    points.par_iter().map(|p| synthesize(p).map(|(_, r)| r)).collect()
}

pub fn write_synthesis_csv<W: Write>(w: &mut W, rows: &[SynthesisReport]) -> Result<()> {
    writeln!(w, "{SYNTH_HEADER}")?;
    for r in rows {
        writeln!(w, "{}", r.csv_row())?;
    }
    Ok(())
}

/// Histogram and records of a measurement run.
#[derive(Debug, Clone)]
pub struct MeasureOutput {
    pub basis: ObservableBasis<f64>,
    pub exact: Vec<f64>,
    pub born: Vec<f64>,
    pub summary: TrialSummary<f64>,
    pub seed: u64,
}

pub fn measure(cfg: &ExperimentConfig) -> Result<MeasureOutput> {
    cfg.validate()?;
    let seed = cfg.resolved_seed()?;
    let coeffs = cfg.recipe.coefficients()?;
    let basis = ObservableBasis::build(cfg.basis, coeffs.len() - 1)?;
    let exact = exact_protocol_distribution(&coeffs, &basis)?;
    let born = born_distribution(&coeffs, &basis)?;
    let protocol = Protocol::new(basis.clone(), &cfg.protocol_mode())?.with_detector_efficiency(cfg.detector_efficiency)?;
    let summary = protocol.run_trials(&coeffs, cfg.trials, seed)?;
    Ok(MeasureOutput { basis, exact, born, summary, seed })
}

impl MeasureOutput {
    pub fn write_histogram<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "{HISTOGRAM_HEADER}")?;
        for k in 0..self.basis.len() {
            writeln!(w, "{},{},{},{}", k, fmt17(self.basis.eigenvalues[k]), self.summary.counts[k], fmt17(self.exact[k]))?;
        }
        Ok(())
    }

    /// One JSON object per trial, in trial order.
    pub fn write_records<W: Write>(&self, w: &mut W) -> Result<()> {
        for r in &self.summary.records {
            writeln!(w, "{}", serde_json::to_string(r)?)?;
        }
        Ok(())
    }
}

/// Companion gnuplot script for a CSV written by the CLI.
pub fn gnuplot_script(csv: &Path, kind: &str) -> String {
    let file = csv.display();
    match kind {
        "histogram" => format!(
            "set datafile separator ','\nset key autotitle columnhead\nset style data histograms\nset style fill solid 0.6\n\
             stats '{file}' using 3 nooutput\ntotal = STATS_sum\n\
             plot '{file}' using ($3/total):xtic(1) title 'empirical', '' using 4 title 'exact'\n"
        ),
        _ => format!(
            "set datafile separator ','\nset key autotitle columnhead\nset xlabel 'eta'\nset ylabel 'F'\n\
             plot '{file}' using 2:7 with linespoints title 'F_full', '' using 2:6 with linespoints title 'F_ideal'\n"
        ),
    }
}

/// Reference values for test fixtures.
#[derive(Debug, Clone, PartialEq)]
pub enum OracleQuery {
    Rabi { n: usize, eta: f64, kind: PulseKind, wave: WaveConfig },
    Displacement { n: usize, m: usize, eta: f64 },
    Laguerre { n: usize, alpha: usize, x: f64 },
    PositionEigs { n: usize },
    Hermite { n: usize, x: f64 },
    Protocol { n: usize, basis: BasisKind, state: OracleState, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum OracleState {
    Random,
    Recipe(StateRecipe<f64>),
}

/// Normalized state with independent Gaussian real and imaginary parts.
pub fn random_state<R: Rng>(dim: usize, rng: &mut R) -> Vec<C<f64>> {
    let mut v: Vec<C<f64>> = (0..dim).map(|_| c(rng.sample(StandardNormal), rng.sample(StandardNormal))).collect();
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    for z in &mut v {
        *z /= norm;
    }
    v
}

fn complex_json<T: Real>(z: C<T>) -> Value {
    json!([z.re.to_f64_lossy(), z.im.to_f64_lossy()])
}

pub fn oracle(query: &OracleQuery) -> Result<Value> {
    let body = match query {
        OracleQuery::Rabi { n, eta, kind, wave } => {
            TrapParams::with_eta(*eta)?;
            let r = effective_rabi(*kind, wave.wave_for(*kind), 1.0, *eta, *n);
            json!({"kind": "rabi", "n": n, "eta": eta, "pulse": kind, "wave": wave, "omega_eff_over_omega": complex_json(r)})
        }
        OracleQuery::Displacement { n, m, eta } => {
            let d = displacement_element(*n, *m, *eta);
            json!({"kind": "displacement", "n": n, "m": m, "eta": eta, "element": complex_json(d)})
        }
        OracleQuery::Laguerre { n, alpha, x } => {
            json!({"kind": "laguerre", "n": n, "alpha": alpha, "x": x, "value": laguerre(*n, *alpha, *x)})
        }
        OracleQuery::PositionEigs { n } => {
            let b = ObservableBasis::<f64>::build(BasisKind::Position, *n)?;
            json!({"kind": "position_eigs", "N": n, "eigenvalues": b.eigenvalues})
        }
        OracleQuery::Hermite { n, x } => {
            json!({"kind": "hermite", "n": n, "x": x, "value": hermite(*n, *x)})
        }
        OracleQuery::Protocol { n, basis, state, seed } => {
            let coeffs = match state {
                OracleState::Random => random_state(n + 1, &mut ChaCha8Rng::seed_from_u64(*seed)),
                OracleState::Recipe(r) => r.with_n(*n).coefficients()?,
            };
            let b = ObservableBasis::build(*basis, coeffs.len() - 1)?;
            let exact = exact_protocol_distribution(&coeffs, &b)?;
            let born = born_distribution(&coeffs, &b)?;
            let max_diff = exact.iter().zip(&born).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            json!({
                "kind": "protocol", "N": n, "basis": basis, "seed": seed,
                "state": coeffs.iter().map(|z| complex_json(*z)).collect::<Vec<_>>(),
                "eigenvalues": b.eigenvalues, "exact_protocol": exact, "born": born, "max_abs_diff": max_diff
            })
        }
    };
    let mut v = json!({"schema": ORACLE_SCHEMA});
    if let (Value::Object(dst), Value::Object(src)) = (&mut v, body) {
        dst.extend(src);
    }
    Ok(v)
}

/// Basis export: eigenvalues and eigenvectors as `[re, im]` pairs.
pub fn bases_json(kind: BasisKind, n: usize) -> Result<Value> {
    let b = ObservableBasis::<f64>::build(kind, n)?;
    Ok(json!({
        "schema": ORACLE_SCHEMA,
        "kind": "basis",
        "basis": kind,
        "N": n,
        "orthonormality_defect": b.orthonormality_defect(),
        "eigenvalues": b.eigenvalues,
        "eigenstates": b.eigenstates.iter().map(|v| v.iter().map(|z| complex_json(*z)).collect::<Vec<_>>()).collect::<Vec<_>>(),
    }))
}
