use ionscope::hamiltonians::{displacement_element, effective_rabi, LaserPulse, PulseKind, TrapParams, WaveConfig};
use ionscope::harness::{random_state, sweep, ExperimentConfig, ModeKind, SweepGrid};
use ionscope::hilbert::{apply, make_joint_space, JointIndex, OperatorMatrix};
use ionscope::measurement::PHONON_PADDING;
use ionscope::num::c;
use ionscope::observables::StateRecipe;
use ionscope::propagator::{evolve_full, evolve_ideal, FullPropagator, IntegratorConfig};
use ionscope::pulse_compiler::{compile, fidelity, rabi_from_quality};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn expm(a: &OperatorMatrix<f64>) -> OperatorMatrix<f64> {
    let norm1 = (0..a.dim()).map(|col| (0..a.dim()).map(|r| a[(r, col)].norm()).sum::<f64>()).fold(0.0, f64::max);
    let s = if norm1 > 0.5 { (norm1 / 0.5).log2().ceil() as u32 } else { 0 };
    let scaled = a.scaled(c(0.5f64.powi(s as i32), 0.0));
    let mut term = OperatorMatrix::identity(a.dim());
    let mut sum = OperatorMatrix::identity(a.dim());
    for k in 1..=24 {
        term = term.matmul(&scaled).unwrap().scaled(c(1.0 / k as f64, 0.0));
        sum = sum.add(&term).unwrap();
    }
    for _ in 0..s {
        sum = sum.matmul(&sum).unwrap();
    }
    sum
}

#[test]
fn displacement_elements_match_matrix_exponential() {
    let dim = 200;
    let x = OperatorMatrix::from_fn(dim, |r, col| if r.abs_diff(col) == 1 { c((r.max(col) as f64).sqrt(), 0.0) } else { c(0.0, 0.0) });
    for eta in [0.1, 0.7, 1.5] {
        let d = expm(&x.scaled(c(0.0, -eta)));
        for n in 0..30 {
            for m in 0..30 {
                let got = displacement_element(n, m, eta);
                assert!((got - d[(n, m)]).norm() < 1e-11, "eta={eta} ({n},{m}): {got} vs {}", d[(n, m)]);
            }
        }
    }
}

fn n4_schedule_infidelity(q: f64, eta: f64) -> f64 {
    let trap = TrapParams::with_eta(eta).unwrap();
    let target = random_state(5, &mut ChaCha8Rng::seed_from_u64(44));
    let sched = compile(&target, &trap, q, WaveConfig::Travelling).unwrap();
    let space = make_joint_space(4 + PHONON_PADDING);
    let mut prop = FullPropagator::new(trap, space, IntegratorConfig::default()).unwrap();
    let out = apply(&prop.sequence_unitary(&sched.pulses(&trap).unwrap()).unwrap(), &space.basis_state(JointIndex::g(0))).unwrap();
    1.0 - fidelity(&space.embed_ground(&target).unwrap(), &out).unwrap()
}

#[test]
fn full_dynamics_approach_ideal_as_q_decreases() {
    let inf: Vec<f64> = [0.1, 0.03, 0.01].iter().map(|&q| n4_schedule_infidelity(q, 0.5)).collect();
    assert!(inf[0] > inf[1] && inf[1] > inf[2], "{inf:?}");
}

#[test]
fn weak_pulse_populations_agree_with_ideal() {
    let trap = TrapParams::with_eta(0.1).unwrap();
    let space = make_joint_space(4 + PHONON_PADDING);
    let start = space.basis_state(JointIndex::g(4));
    for (kind, pair_n) in [(PulseKind::Vertical, 4), (PulseKind::Diagonal, 3)] {
        let omega = rabi_from_quality(0.001, &trap, 4, kind).unwrap();
        let wave = WaveConfig::Travelling.wave_for(kind);
        let duration = std::f64::consts::PI / effective_rabi(kind, wave, omega, trap.eta, pair_n).norm();
        let pulse = LaserPulse::new(kind, wave, omega, 0.3, duration, &trap).unwrap();
        let full = evolve_full(&start, &pulse, &trap, &IntegratorConfig::default()).unwrap();
        let ideal = evolve_ideal(&start, &pulse, &trap).unwrap();
        for i in 0..space.dim() {
            assert!((full[i].norm_sqr() - ideal[i].norm_sqr()).abs() < 1e-3, "{kind:?} index {i}");
        }
        // a π pulse empties |g,4⟩
        assert!(ideal[space.flatten(JointIndex::g(4))].norm_sqr() < 1e-20);
    }
}

#[test]
fn padding_absorbs_leakage_over_the_synthesis_grid() {
    let mut base = ExperimentConfig::default();
    base.mode = ModeKind::Full;
    base.recipe = StateRecipe::PhaseState { n: 8, phi: 2.0 };
    let grid = SweepGrid {
        eta: (0..10).map(|i| 0.05 + 0.1 * i as f64).collect(),
        q: vec![0.1, 0.01],
        wave: vec![WaveConfig::Travelling, WaveConfig::Standing],
        n: vec![],
    };
    let rows = sweep(&base, &grid).unwrap();
    assert_eq!(rows.len(), 40);
    for r in &rows {
        assert!(r.edge_population.unwrap() < 1e-6, "{r:?}");
        assert!(r.norm_drift.unwrap() < 1e-8, "{r:?}");
        assert!((r.f_ideal - 1.0).abs() < 1e-9);
    }
}

#[test]
fn single_precision_pipeline() {
    use ionscope::observables::{phase_basis, phase_state_coeffs, position_basis};
    let trap = TrapParams::<f32>::with_eta(0.5).unwrap();
    let target = phase_state_coeffs::<f32>(4, 2.0);
    let sched = compile(&target, &trap, 0.1, WaveConfig::Standing).unwrap();
    let space = make_joint_space(4);
    let out = sched.run_ideal(&space.basis_state(JointIndex::g(0)), &trap).unwrap();
    assert!(1.0 - fidelity(&space.embed_ground(&target).unwrap(), &out).unwrap() < 1e-5);
    assert!(phase_basis::<f32>(6).orthonormality_defect() < 1e-5);
    let p = position_basis::<f32>(2).unwrap();
    assert!((p.eigenvalues[2] - 3f32.sqrt()).abs() < 1e-5);
}
