use pzflow::homogenization::tensor_symmetry;
use pzflow::materials::MaterialSet;
use pzflow::mesh::{generate_canonical_cell, structured_cell, CanonicalGeometry, Region};
use pzflow::homogenize;

fn channel(h: f64) -> impl Fn([f64; 2]) -> Region {
    move |c| if (c[1] - 0.5).abs() < h { Region::Fluid } else { Region::MatrixElastic }
}

#[test]
fn homogeneous_cell_returns_the_material() {
    let mat = MaterialSet::<f64>::reference(1e-3);
    let mesh = structured_cell::<f64>(8, |_| Region::MatrixPiezo).unwrap();
    let c = homogenize(&mesh, &mat).unwrap().coeffs;
    let input = mat.matrix_piezo.elasticity;
    for i in 0..3 {
        for j in 0..3 {
            assert!((c.a[i][j] - input[i][j]).abs() <= 1e-10 * input[0][0].abs(), "A{i}{j}");
        }
    }
    assert_eq!(c.phi_f, 0.0);
    assert_eq!(c.m, 0.0);
}

#[test]
fn slot_permeability_is_plane_poiseuille() {
    // flow between plates a distance 2h apart: K11 = (2h)^3 / 12 per unit cell height
    for (n, h) in [(16, 0.125), (32, 0.1875)] {
        let mat = MaterialSet::<f64>::reference(1e-3);
        let mesh = structured_cell::<f64>(n, channel(h)).unwrap();
        let k = homogenize(&mesh, &mat).unwrap().coeffs.k;
        let exact = (2.0 * h).powi(3) / 12.0;
        assert!((k[0][0] - exact).abs() < 0.02 * exact, "n = {n}: {} vs {exact}", k[0][0]);
        assert!(k[1][1].abs() < 1e-6 * k[0][0]);
    }
}

#[test]
fn canonical_cell_coefficients_are_consistent() {
    let mat = MaterialSet::<f64>::reference(1e-3);
    let mesh = generate_canonical_cell(&CanonicalGeometry::<f64>::reference(), 16).unwrap();
    let hom = homogenize(&mesh, &mat).unwrap();
    let c = &hom.coeffs;
    assert!(tensor_symmetry(&mesh, &mat, &hom).unwrap().max() <= 1e-9);
    assert!(c.symmetry_defect() <= 1e-12);
    assert!(c.m >= c.phi_f * c.gamma);
    assert!(c.k_min_eigenvalue() >= -1e-12);
    assert_eq!(c.h.len(), 2);
    // second routes
    for i in 0..3 {
        assert!((hom.checks.b_divergence[i] - c.b[i]).abs() <= 1e-8 * c.b.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    }
    assert!((hom.checks.m_flux - c.m).abs() <= 1e-8 * c.m);
}

#[test]
fn mirror_symmetric_cell_has_no_shear_coupling() {
    let mat = MaterialSet::<f64>::reference(1e-3);
    let mesh = generate_canonical_cell(&CanonicalGeometry::<f64>::reference(), 16).unwrap();
    let c = homogenize(&mesh, &mat).unwrap().coeffs;
    assert!(c.k[0][1].abs() <= 1e-12 * c.k[0][0]);
    assert!(c.b[2].abs() <= 1e-10 * c.b[0].abs().max(c.b[1].abs()));
}

#[test]
fn results_are_reproducible() {
    let mat = MaterialSet::<f64>::reference(1e-3);
    let mesh = generate_canonical_cell(&CanonicalGeometry::<f64>::reference(), 16).unwrap();
    let a = homogenize(&mesh, &mat).unwrap().coeffs.to_json();
    let b = homogenize(&mesh, &mat).unwrap().coeffs.to_json();
    assert_eq!(a, b);
}

#[test]
fn single_precision_slot_permeability() {
    let mat = MaterialSet::<f32>::reference(1e-3);
    let mesh = structured_cell::<f32>(16, |c| if (c[1] - 0.5).abs() < 0.125 { Region::Fluid } else { Region::MatrixElastic })
        .unwrap();
    let k = homogenize(&mesh, &mat).unwrap().coeffs.k;
    let exact = 0.25f32.powi(3) / 12.0;
    assert!((k[0][0] - exact).abs() < 1e-3 * exact, "{} vs {exact}", k[0][0]);
}
