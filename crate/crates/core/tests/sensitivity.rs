use pzflow::forms::CellForms;
use pzflow::materials::MaterialSet;
use pzflow::mesh::{generate_canonical_cell, CanonicalGeometry};
use pzflow::sensitivity::{
    coefficient_gradient, compare, convergence_order, extend_into_fluid, fd_gradient, random_periodic_field,
    run_audit, AuditConfig, CoefficientGradient, SensitivityError, VelocityField,
};
use pzflow::{homogenize, CellMesh};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn cell(bulge: f64) -> CellMesh {
    let geom = CanonicalGeometry { bulge, ..CanonicalGeometry::reference() };
    generate_canonical_cell(&geom, 16).unwrap()
}

fn largest(g: &CoefficientGradient<f64>, family: &str) -> f64 {
    g.entries().iter().filter(|e| e.0 == family).fold(0.0, |m, e| m.max(e.2.abs()))
}

#[test]
fn rigid_translation_leaves_coefficients_unchanged() {
    let mesh = cell(0.3);
    let mat = MaterialSet::reference(1e-3);
    let hom = homogenize(&mesh, &mat).unwrap();
    let forms = CellForms::new(&mesh, &mat).unwrap();
    let v = VelocityField::new(&mesh, vec![[0.3, -0.7]; mesh.n_nodes()]).unwrap();
    let g = coefficient_gradient(&forms, &mat, &hom, &v);
    let base = CoefficientGradient::from_coeffs(&hom.coeffs);
    for fam in ["A", "B", "M", "H", "Z", "K"] {
        assert!(largest(&g, fam) <= 1e-9 * largest(&base, fam), "{fam}: {}", largest(&g, fam));
    }
}

#[test]
fn formula_matches_central_difference() {
    let mesh = cell(0.3);
    let mat = MaterialSet::reference(1e-3);
    let hom = homogenize(&mesh, &mat).unwrap();
    let forms = CellForms::new(&mesh, &mat).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let raw = VelocityField::new(&mesh, random_periodic_field(&mesh, &mut rng, 0.05)).unwrap();
    let v = extend_into_fluid(&forms, &raw).unwrap();
    let formula = coefficient_gradient(&forms, &mat, &hom, &v);
    let fd = fd_gradient(&mesh, &mat, &v, 1e-5).unwrap();
    let rows = compare(&[("random".to_string(), formula, fd)], &hom.coeffs);
    let worst = rows.iter().fold(0.0f64, |m, r| m.max(r.rel_error));
    assert!(worst <= 1e-3, "max rel error {worst}");
}

#[test]
fn non_periodic_velocity_is_rejected() {
    let mesh = cell(0.0);
    let values = mesh.nodes.iter().map(|y| [y[0] * y[1], 0.0]).collect();
    assert!(matches!(VelocityField::new(&mesh, values), Err(SensitivityError::NonPeriodicVelocity(_))));
}

#[test]
fn affine_velocity_keeps_its_lattice_gradient() {
    let mesh = cell(0.0);
    let values = mesh.nodes.iter().map(|y| [0.2 * y[0], -0.1 * y[1]]).collect();
    let v = VelocityField::new(&mesh, values).unwrap();
    assert!(!v.is_periodic());
    assert!((v.affine[0][0] - 0.2).abs() < 1e-12 && (v.affine[1][1] + 0.1).abs() < 1e-12);
}

#[test]
fn convergence_order_of_a_power_law() {
    let taus = [1e-2, 5e-3, 2.5e-3];
    let rem: Vec<f64> = taus.iter().map(|t| 3.0 * t * t).collect();
    assert!((convergence_order(&taus, &rem) - 2.0).abs() < 1e-12);
}

#[test]
fn audit_budget_is_enforced_before_solving() {
    let mesh = cell(0.0);
    let mat = MaterialSet::reference(1e-3);
    let cfg = AuditConfig { max_cell_solves: 10, ..AuditConfig::default() };
    assert!(matches!(run_audit(&mesh, &mat, &cfg), Err(SensitivityError::OracleBudgetExceeded { .. })));
}

#[test]
fn small_audit_passes_with_exact_zero_field() {
    let mesh = cell(0.4);
    let mat = MaterialSet::reference(1e-3);
    let cfg = AuditConfig { random_fields: 1, tau_sweep: vec![], ..AuditConfig::default() };
    let report = run_audit(&mesh, &mat, &cfg).unwrap();
    assert!(report.max_rel_error <= 1e-3, "{}", report.max_rel_error);
    let zero: Vec<_> = report.rows.iter().filter(|r| r.coefficient.starts_with("zero/")).collect();
    assert!(!zero.is_empty());
    assert!(zero.iter().all(|r| r.formula_value == 0.0 && r.fd_value == 0.0));
}
