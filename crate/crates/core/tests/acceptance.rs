//! Acceptance suite: one line per criterion. Exits nonzero on failure only when
//! `PZFLOW_ACCEPTANCE_STRICT` is set, so the workspace tests report failures without aborting.

use std::time::Instant;

use pzflow::demo;
use pzflow::forms::CellForms;
use pzflow::homogenization::tensor_symmetry;
use pzflow::macro_model::{run_simulation, Expanded, MacroState, Nonlinearity, StepProblem};
use pzflow::materials::MaterialSet;
use pzflow::mesh::{generate_canonical_cell, structured_cell, CanonicalGeometry, Region};
use pzflow::sensitivity::{
    bump_fluid_interior, extend_into_fluid, permeability_gradient, random_periodic_field, run_audit, AuditConfig,
    ShapeForms, VelocityField,
};
use pzflow::homogenize;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<(bool, String), String>;

struct Outcome {
    id: usize,
    pass: bool,
}

fn run(id: usize, name: &str, budget_s: f64, f: impl FnOnce() -> Check) -> Outcome {
    let start = Instant::now();
    let res = f();
    let secs = start.elapsed().as_secs_f64();
    let (pass, detail) = match res {
        Ok((ok, d)) => (ok && secs < budget_s, d),
        Err(e) => (false, format!("error: {e}")),
    };
    let timing = if secs < budget_s { format!("{secs:.1}s") } else { format!("{secs:.1}s over the {budget_s}s budget") };
    println!("criterion {id} {name}: {} ({detail}) [{timing}]", if pass { "PASS" } else { "FAIL" });
    Outcome { id, pass }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn homogeneous_cell() -> Check {
    let mat = MaterialSet::<f64>::reference(1e-3);
    let mesh = structured_cell::<f64>(16, |_| Region::MatrixElastic).map_err(err)?;
    let c = homogenize(&mesh, &mat).map_err(err)?.coeffs;
    let input = mat.matrix_elastic.elasticity;
    let scale = input.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut dev = 0.0f64;
    for i in 0..3 {
        for j in 0..3 {
            dev = dev.max((c.a[i][j] - input[i][j]).abs() / scale);
        }
    }
    let b = c.b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let k = c.k.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    let ok = dev <= 1e-10 && b == 0.0 && c.m == 0.0 && k == 0.0;
    Ok((ok, format!("max |A - C|/|C| = {dev:.2e}, |B| = {b:.1e}, M = {:.1e}, |K| = {k:.1e}", c.m)))
}

fn poiseuille() -> Check {
    let h = 0.125;
    let mat = MaterialSet::<f64>::reference(1e-3);
    let mesh = structured_cell::<f64>(64, |c| if (c[1] - 0.5).abs() < h { Region::Fluid } else { Region::MatrixElastic })
        .map_err(err)?;
    let k = homogenize(&mesh, &mat).map_err(err)?.coeffs.k;
    let exact = (2.0 * h).powi(3) / 12.0;
    let rel = (k[0][0] - exact).abs() / exact;
    let off = k[0][1].abs().max(k[1][0].abs());
    let ok = rel < 0.02 && off < 1e-10 && k[1][1].abs() < 1e-6 * k[0][0];
    Ok((ok, format!("K11 = {:.10e} vs {exact:.10e} (rel {rel:.1e}), |K12| = {off:.1e}, K22 = {:.1e}", k[0][0], k[1][1])))
}

fn symmetries() -> Check {
    let mat = MaterialSet::<f64>::reference(1e-3);
    let mesh = generate_canonical_cell(&CanonicalGeometry::<f64>::reference(), 32).map_err(err)?;
    let hom = homogenize(&mesh, &mat).map_err(err)?;
    let sym = tensor_symmetry(&mesh, &mat, &hom).map_err(err)?;
    let c = &hom.coeffs;
    let storage = c.phi_f * c.gamma;
    let kmin = c.k_min_eigenvalue();
    let ok = sym.max() <= 1e-9 && c.m >= storage && kmin >= -1e-12;
    Ok((ok, format!("max symmetry defect {:.1e}, M = {:.4e} >= {storage:.4e}, min eig K = {kmin:.3e}", sym.max(), c.m)))
}

fn audit() -> Check {
    let mat = MaterialSet::<f64>::reference(1e-3);
    let geom = CanonicalGeometry::<f64> { bulge: 0.4, ..CanonicalGeometry::reference() };
    let mesh = generate_canonical_cell(&geom, 32).map_err(err)?;
    let report = run_audit(&mesh, &mat, &AuditConfig::default()).map_err(err)?;
    let ok = report.max_rel_error <= 1e-3 && report.min_order >= 1.9;
    Ok((
        ok,
        format!(
            "{} rows, max rel error {:.2e}, min order {:.3}, {} cell solves",
            report.rows.len(),
            report.max_rel_error,
            report.min_order,
            report.cell_solves
        ),
    ))
}

fn extension_independence() -> Check {
    let mat = MaterialSet::<f64>::reference(1e-3);
    let mesh = structured_cell::<f64>(32, |c| if (c[1] - 0.5).abs() < 0.125 { Region::Fluid } else { Region::MatrixElastic })
        .map_err(err)?;
    let hom = homogenize(&mesh, &mat).map_err(err)?;
    let forms = CellForms::new(&mesh, &mat).map_err(err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut values = random_periodic_field(&mesh, &mut rng, 0.05);
    // a channel-width mode so that dK is not zero
    for (v, y) in values.iter_mut().zip(&mesh.nodes) {
        v[1] -= 0.05 * (std::f64::consts::TAU * y[1]).sin();
    }
    let raw = VelocityField::new(&mesh, values).map_err(err)?;
    let harmonic = extend_into_fluid(&forms, &raw).map_err(err)?;
    let bumped = bump_fluid_interior(&mesh, &harmonic, &mut rng, 0.05);
    let st = hom.stokes.as_ref().ok_or("no fluid")?;
    let k1 = permeability_gradient(&forms, st, &ShapeForms::new(&forms, &harmonic));
    let k2 = permeability_gradient(&forms, st, &ShapeForms::new(&forms, &bumped));
    let mut diff = 0.0f64;
    for i in 0..2 {
        for j in 0..2 {
            diff = diff.max((k1[i][j] - k2[i][j]).abs());
        }
    }
    Ok((diff < 1e-10 && k1[0][0].abs() > 0.0, format!("dK11 = {:.6e}, max difference {diff:.1e}", k1[0][0])))
}

fn tangent() -> Check {
    let coeffs = demo::coefficients().map_err(err)?;
    let mut cfg = demo::pumping_config(Nonlinearity::Semilinear);
    cfg.expanded = Expanded::All;
    cfg.nodes = 41;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = cfg.nodes;
    let state = |u: f64, p: f64, rng: &mut ChaCha8Rng| MacroState {
        u: (0..n).map(|_| u * rng.gen_range(-1.0..1.0)).collect(),
        p: (0..n).map(|_| p * rng.gen_range(-1.0..1.0)).collect(),
    };
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let prev = state(1e-5, 1e4, &mut rng);
        let s = state(1e-5, 1e4, &mut rng);
        let d = state(1e-5, 1e4, &mut rng);
        let t = rng.gen_range(0.02..1.0);
        let pb = StepProblem { cfg: &cfg, coeffs: &coeffs, prev: &prev, t, steady: false };
        worst = worst.max(pb.tangent_fd_error(&s, &d, 1e-6));
    }
    let lin = run_simulation(&demo::pumping_config(Nonlinearity::Linear), &coeffs).map_err(err)?;
    let lin_max = lin.newton_iterations.iter().copied().max().unwrap_or(0);
    let lin_min = lin.newton_iterations.iter().copied().min().unwrap_or(0);
    let ok = worst <= 1e-6 && lin_max == 1 && lin_min == 1;
    Ok((ok, format!("max directional error {worst:.1e} over 10 states, linear Newton iterations {lin_min}..{lin_max}")))
}

fn pumping() -> Check {
    let coeffs = demo::coefficients().map_err(err)?;
    let lin = run_simulation(&demo::pumping_config(Nonlinearity::Linear), &coeffs).map_err(err)?.summary(Nonlinearity::Linear);
    let sem = run_simulation(&demo::pumping_config(Nonlinearity::Semilinear), &coeffs)
        .map_err(err)?
        .summary(Nonlinearity::Semilinear);
    let positive = sem.slope_plus > 0.0;
    let ratio = lin.slope_plus.abs() / sem.slope_plus.abs();
    let ok = positive && ratio < 0.1 && sem.flux_balance_gap < 0.05;
    Ok((
        ok,
        format!(
            "semilinear Q+ slope {:.3e} (> 0: {positive}), linear/semilinear {ratio:.3} (< 0.1: {}), \
             flux gap {:.3} (< 0.05: {}), linear gap {:.3}",
            sem.slope_plus,
            ratio < 0.1,
            sem.flux_balance_gap,
            sem.flux_balance_gap < 0.05,
            lin.flux_balance_gap
        ),
    ))
}

fn reverse_pumping() -> Check {
    let coeffs = demo::coefficients().map_err(err)?;
    let amplitudes = [0.0, 3e4, 1e5, 4e5];
    let mut slopes = Vec::new();
    for &a in &amplitudes {
        let s = run_simulation(&demo::reverse_pumping_config(a), &coeffs).map_err(err)?;
        slopes.push(s.summary(Nonlinearity::Semilinear).slope_mid);
    }
    let monotone = slopes.windows(2).all(|w| w[1] >= w[0]);
    let sign_change = slopes.first().is_some_and(|s| *s < 0.0) && slopes.last().is_some_and(|s| *s > 0.0);
    let listed: Vec<String> = amplitudes.iter().zip(&slopes).map(|(a, s)| format!("{a:.0e} V: {s:.2e}")).collect();
    Ok((monotone && sign_change, format!("Q_M slopes {}", listed.join(", "))))
}

fn main() {
    let outcomes = [
        run(1, "homogeneous cell exactness", 5.0, homogeneous_cell),
        run(2, "Poiseuille permeability", 60.0, poiseuille),
        run(3, "coefficient symmetries", f64::INFINITY, symmetries),
        run(4, "sensitivity audit", 600.0, audit),
        run(5, "dK extension independence", f64::INFINITY, extension_independence),
        run(6, "tangent consistency", f64::INFINITY, tangent),
        run(7, "pumping dichotomy", 60.0, pumping),
        run(8, "reverse pumping threshold", f64::INFINITY, reverse_pumping),
    ];
    let passed = outcomes.iter().filter(|o| o.pass).count();
    let failed: Vec<String> = outcomes.iter().filter(|o| !o.pass).map(|o| o.id.to_string()).collect();
    println!("acceptance: {passed}/{} passed{}", outcomes.len(), if failed.is_empty() { String::new() } else { format!(", failing: {}", failed.join(" ")) });
    if !failed.is_empty() && std::env::var_os("PZFLOW_ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}
