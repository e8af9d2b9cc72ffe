use pzflow::mesh::{generate_canonical_cell, structured_cell, CanonicalGeometry, MeshError, Region};
use proptest::prelude::*;

fn channel(c: [f64; 2]) -> Region {
    if (c[1] - 0.5).abs() < 0.125 {
        Region::Fluid
    } else {
        Region::MatrixElastic
    }
}

#[test]
fn reference_cell_is_valid() {
    let mesh = generate_canonical_cell(&CanonicalGeometry::<f64>::reference(), 16).unwrap();
    mesh.validate().unwrap();
    assert_eq!(mesh.n_conductors(), 2);
    assert!((mesh.cell_measure() - 1.0).abs() < 1e-14);
    assert!((mesh.fluid_fraction() - 0.25).abs() < 1e-14);
}

#[test]
fn region_measures_sum_to_cell() {
    let mesh = generate_canonical_cell(&CanonicalGeometry::<f64>::reference(), 32).unwrap();
    let total: f64 = mesh.region_measures().iter().map(|(_, m)| m).sum();
    assert!((total - 1.0).abs() < 1e-13);
}

#[test]
fn odd_resolution_is_rejected() {
    let err = structured_cell::<f64>(15, channel).unwrap_err();
    assert_eq!(err.kind(), "ResolutionTooCoarse");
}

#[test]
fn channel_filling_the_cell_is_degenerate() {
    let geom = CanonicalGeometry::<f64> { channel_halfwidth: 0.5, ..CanonicalGeometry::reference() };
    assert!(matches!(generate_canonical_cell(&geom, 16), Err(MeshError::ChannelDegenerate(_))));
}

#[test]
fn json_keeps_the_mesh() {
    let mesh = structured_cell::<f64>(8, channel).unwrap();
    let back = pzflow::CellMesh::from_json(&mesh.to_json()).unwrap();
    assert_eq!(back, mesh);
}

#[test]
fn broken_periodic_pair_is_reported() {
    let mut mesh = structured_cell::<f64>(8, channel).unwrap();
    let [m, _] = mesh.periodic_pairs[0];
    mesh.periodic_pairs[1][1] = m;
    assert_eq!(mesh.validate().unwrap_err().kind(), "PeriodicityError");
}

#[test]
fn flipped_element_is_reported() {
    let mut mesh = structured_cell::<f64>(8, channel).unwrap();
    mesh.elements[3].verts.swap(0, 1);
    assert!(matches!(mesh.validate(), Err(MeshError::ElementInversion { element: 3, .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn canonical_cells_validate(half in 0.05f64..0.2, bulge in 0.0f64..0.5, n in prop::sample::select(vec![16usize, 32])) {
        let geom = CanonicalGeometry::<f64> { channel_halfwidth: half, bulge, ..CanonicalGeometry::reference() };
        match generate_canonical_cell(&geom, n) {
            Ok(mesh) => {
                prop_assert!(mesh.validate().is_ok());
                let total: f64 = mesh.region_measures().iter().map(|(_, m)| m).sum();
                prop_assert!((total - 1.0).abs() < 1e-12);
                prop_assert!(mesh.fluid_fraction() > 0.0 && mesh.fluid_fraction() < 1.0);
            }
            // thin channels or electrodes touching the channel are rejected, never mismeshed
            Err(e) => prop_assert!(matches!(e, MeshError::ResolutionTooCoarse(_) | MeshError::RegionOverlap(_))),
        }
    }
}
