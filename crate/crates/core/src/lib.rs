//! Two-scale model of a piezoelectric porous metamaterial with fluid-filled channels:
//! periodic cell problems, effective coefficients, their shape sensitivities and a
//! 1D macroscopic pumping model.

pub mod cell_problems;
pub mod demo;
pub mod forms;
pub mod homogenization;
pub mod linalg;
pub mod macro_model;
pub mod materials;
pub mod mesh;
pub mod quadrature;
pub mod scalar;
pub mod sensitivity;

pub use scalar::Real;

pub type CellMesh = mesh::CellMesh<f64>;
pub type MaterialSet = materials::MaterialSet<f64>;
pub type HomCoeffs = homogenization::HomCoeffs<f64>;
pub type Homogenized = homogenization::Homogenized<f64>;
pub type CoefficientGradient = sensitivity::CoefficientGradient<f64>;
pub type CanonicalGeometry = mesh::CanonicalGeometry<f64>;

pub use homogenization::homogenize;
pub use mesh::{generate_canonical_cell, structured_cell, MeshError, Region};
