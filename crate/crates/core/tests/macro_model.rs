use std::f64::consts::PI;

use pzflow::macro_model::{
    cumulative_trapezoid, reduced_1d_coefficients, regression_slope, run_simulation, ControlWave, Expanded, Expansion,
    InitialState, MacroCoefficients, MacroConfig, MacroError, MacroState, Nonlinearity, StepProblem,
};
use proptest::prelude::*;

fn expansion(value: f64, de: f64, dp: f64, dphi: f64) -> Expansion<f64> {
    Expansion { value, de, dp, dphi }
}

/// Coefficients of the order of the demo cell at a 7 um period.
fn sample_coefficients() -> MacroCoefficients<f64> {
    MacroCoefficients {
        a: expansion(2.0e9, -1.0e8, 1e-3, 2e2),
        b: expansion(0.3, 0.05, 1e-12, 1e-8),
        m: expansion(1.0e-9, 1e-10, 1e-20, 1e-15),
        h: expansion(5e-3, 1e-4, 1e-12, 1e-9),
        z: expansion(1e-11, 1e-12, 1e-21, 1e-17),
        kappa: expansion(5e-14, 1e-13, 1e-22, 3e-19),
    }
}

fn config(mode: Nonlinearity) -> MacroConfig {
    MacroConfig {
        length: 0.1,
        nodes: 41,
        dt: 0.02,
        steps: 20,
        p_left: 0.0,
        p_right: 100.0,
        wave: ControlWave::TravellingSine { phi0: -1e5, omega: 8.0 * PI, k: 10.0 * PI },
        mode,
        expanded: Expanded::All,
        tolerance: 1e-8,
        max_iterations: 20,
        h_sign: 1.0,
        initial: InitialState::Zero,
        output_stride: 5,
        body_force: 0.0,
        fluid_force: 0.0,
    }
}

#[test]
fn reduced_coefficients_without_coupling_keep_storage() {
    let r = reduced_1d_coefficients(3.0, 0.0, 0.7, 0.0, 0.2, 0.0, 0.1, 0.3).unwrap();
    assert_eq!((r.c, r.f, r.k_p, r.k_phi), (0.7, 0.2, 0.1, 0.3));
}

#[test]
fn reduced_coefficients_by_hand() {
    // A = 2, B = 1, M = 1: C = 1 + 1/2
    let r = reduced_1d_coefficients(2.0, 1.0, 1.0, 0.5, 0.25, 4.0, 1.0, 1.0).unwrap();
    assert_eq!(r.c, 1.5);
    assert_eq!(r.f, 0.5);
    assert_eq!(r.k_p, 3.0);
    assert_eq!(r.k_phi, 0.0);
}

#[test]
fn reduced_coefficients_eliminate_the_strain() {
    // uniform stress: A e - B p + H phi = 0, storage B e + M p - Z phi = C p - F phi
    let (a, b, m, h, z): (f64, f64, f64, f64, f64) = (4.0, 0.6, 0.3, 0.2, 0.05);
    let r = reduced_1d_coefficients(a, b, m, h, z, 0.0, 0.0, 0.0).unwrap();
    for (p, phi) in [(1.0, 0.0), (0.0, 1.0), (0.4, -1.3)] {
        let e = (b * p - h * phi) / a;
        let storage = b * e + m * p - z * phi;
        assert!((storage - (r.c * p - r.f * phi)).abs() < 1e-14);
    }
}

#[test]
fn zero_elasticity_is_singular() {
    assert_eq!(reduced_1d_coefficients(0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0), Err(MacroError::SingularElasticity));
}

#[test]
fn case_table_wave() {
    let w = ControlWave::CaseTable { phi_star: 4e5, b1: PI / 0.03, b2: 0.0, c: 10.0 * PI, d: 0.0 };
    assert_eq!(w.eval(0.0, 0.0), 0.0);
    assert_eq!(w.eval(0.05, 0.1), 0.0);
    // psi = -pi at the wave crest
    let t = (PI + PI / 0.03 * 0.01) / (10.0 * PI);
    assert!((w.eval(0.01, t) - 4e5).abs() < 1e-6);
}

#[test]
fn travelling_sine_wave() {
    let w = ControlWave::TravellingSine { phi0: -2.0, omega: 3.0, k: 5.0 };
    assert_eq!(w.eval(0.0, 0.0), 0.0);
    assert!((w.eval(0.1, 0.5) + 2.0 * (1.5f64 - 0.5).sin().abs()).abs() < 1e-15);
}

#[test]
fn trapezoid_of_constant_and_periodic_signals() {
    let t: Vec<f64> = (0..=400).map(|i| i as f64 / 400.0).collect();
    let ones = vec![1.0; t.len()];
    assert!((cumulative_trapezoid(&t, &ones).last().unwrap() - 1.0).abs() < 1e-14);
    let s: Vec<f64> = t.iter().map(|x| (4.0 * PI * x).sin()).collect();
    assert!(cumulative_trapezoid(&t, &s).last().unwrap().abs() < 1e-14);
    let q: Vec<f64> = t.iter().map(|x| (PI * x).sin()).collect();
    // int_0^1 sin(pi t) dt = 2/pi, trapezoid error ~ pi^2 h^2 / 12 * 2/pi
    let err = cumulative_trapezoid(&t, &q).last().unwrap() - 2.0 / PI;
    assert!(err.abs() < 1e-5 && err < 0.0);
}

#[test]
fn invalid_config_is_rejected() {
    let mut cfg = config(Nonlinearity::Linear);
    cfg.dt = -1.0;
    assert!(matches!(run_simulation(&cfg, &sample_coefficients()), Err(MacroError::InvalidConfig(_))));
    let mut cfg = config(Nonlinearity::Linear);
    cfg.nodes = 2;
    assert!(matches!(run_simulation(&cfg, &sample_coefficients()), Err(MacroError::InvalidConfig(_))));
}

#[test]
fn linear_mode_converges_in_one_iteration() {
    let series = run_simulation(&config(Nonlinearity::Linear), &sample_coefficients()).unwrap();
    assert!(series.newton_iterations.iter().all(|&n| n == 1), "{:?}", series.newton_iterations);
}

#[test]
fn semilinear_mode_converges_quadratically() {
    let series = run_simulation(&config(Nonlinearity::Semilinear), &sample_coefficients()).unwrap();
    assert!(series.newton_iterations.iter().all(|&n| n <= 6));
    for h in series.residual_history.iter().filter(|h| h.len() >= 4) {
        // contraction accelerates once in the quadratic regime
        assert!(h[2] / h[1] <= h[1] / h[0] + 1e-3);
    }
}

#[test]
fn quiet_problem_stays_at_rest() {
    let mut cfg = config(Nonlinearity::Semilinear);
    cfg.p_right = 0.0;
    cfg.wave = ControlWave::TravellingSine { phi0: 0.0, omega: 1.0, k: 1.0 };
    let series = run_simulation(&cfg, &sample_coefficients()).unwrap();
    for q in [&series.q_minus, &series.q_mid, &series.q_plus] {
        assert!(q.iter().all(|v| *v == 0.0));
    }
    assert!(series.snapshots.iter().all(|s| s.u.iter().chain(&s.p).all(|v| *v == 0.0)));
}

#[test]
fn darcy_flow_without_storage() {
    let kappa = 2e-12;
    let coeffs = MacroCoefficients {
        a: Expansion::constant(1e9),
        b: Expansion::constant(0.0),
        m: Expansion::constant(0.0),
        h: Expansion::constant(0.0),
        z: Expansion::constant(0.0),
        kappa: Expansion::constant(kappa),
    };
    let mut cfg = config(Nonlinearity::Linear);
    cfg.wave = ControlWave::TravellingSine { phi0: 0.0, omega: 1.0, k: 1.0 };
    cfg.initial = InitialState::Steady;
    let series = run_simulation(&cfg, &coeffs).unwrap();
    let w = -kappa * (cfg.p_right - cfg.p_left) / cfg.length;
    for (i, t) in series.times.iter().enumerate() {
        assert!((series.q_plus[i] - series.q_minus[i]).abs() <= 1e-12 * w.abs());
        assert!((series.q_mid[i] - w * t).abs() <= 1e-9 * (w * t).abs().max(1e-30));
    }
}

#[test]
fn runs_are_deterministic() {
    let a = run_simulation(&config(Nonlinearity::Semilinear), &sample_coefficients()).unwrap();
    let b = run_simulation(&config(Nonlinearity::Semilinear), &sample_coefficients()).unwrap();
    assert_eq!(a.fluxes_csv(), b.fluxes_csv());
    assert_eq!(a.snapshots.iter().map(|s| s.csv()).collect::<Vec<_>>(), b.snapshots.iter().map(|s| s.csv()).collect::<Vec<_>>());
}

#[test]
fn frozen_coefficients_drop_every_derivative() {
    let f = sample_coefficients().frozen();
    for x in [f.a, f.b, f.m, f.h, f.z, f.kappa] {
        assert_eq!((x.de, x.dp, x.dphi), (0.0, 0.0, 0.0));
    }
    let k = sample_coefficients().permeability_only();
    assert_eq!(k.kappa, sample_coefficients().kappa);
    assert_eq!(k.a.de, 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn expansion_is_affine(v in -5.0f64..5.0, d in prop::array::uniform3(-5.0f64..5.0), s in prop::array::uniform3(-5.0f64..5.0)) {
        let x = expansion(v, d[0], d[1], d[2]);
        let once = x.eval(s[0], s[1], s[2]) - v;
        let twice = x.eval(2.0 * s[0], 2.0 * s[1], 2.0 * s[2]) - v;
        prop_assert!((twice - 2.0 * once).abs() <= 1e-12 * (1.0 + once.abs()));
    }

    #[test]
    fn trapezoid_and_slope_are_exact_for_lines(a in -10.0f64..10.0, b in -10.0f64..10.0, n in 3usize..50) {
        let t: Vec<f64> = (0..n).map(|i| i as f64 * 0.1).collect();
        let w: Vec<f64> = t.iter().map(|x| a + b * x).collect();
        let q = cumulative_trapezoid(&t, &w);
        for (qi, ti) in q.iter().zip(&t) {
            prop_assert!((qi - (a * ti + 0.5 * b * ti * ti)).abs() <= 1e-10 * (1.0 + qi.abs()));
        }
        prop_assert!((regression_slope(&t, &w, 0.0) - b).abs() <= 1e-9 * (1.0 + b.abs()));
    }

    #[test]
    fn tangent_matches_residual_differences(seed in 0u64..1000, t in 0.02f64..1.0) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let cfg = config(Nonlinearity::Semilinear);
        let coeffs = sample_coefficients();
        let n = cfg.nodes;
        let mut state = || MacroState {
            u: (0..n).map(|_| 1e-5 * rng.gen_range(-1.0..1.0)).collect(),
            p: (0..n).map(|_| 1e4 * rng.gen_range(-1.0..1.0)).collect(),
        };
        let (prev, s, d) = (state(), state(), state());
        let pb = StepProblem { cfg: &cfg, coeffs: &coeffs, prev: &prev, t, steady: false };
        prop_assert!(pb.tangent_fd_error(&s, &d, 1e-6) <= 1e-6);
    }
}
