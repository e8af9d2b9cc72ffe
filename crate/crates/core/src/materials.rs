//! Constituent properties in 2D plane strain, Voigt notation `[11, 22, 12]` with engineering shear.

use serde::{Deserialize, Serialize};

use crate::scalar::{Mat2, Real};

pub type Voigt3<T> = [[T; 3]; 3];
/// Piezoelectric coupling `g_kij`, rows `k`, Voigt columns `ij`.
pub type Coupling<T> = [[T; 3]; 2];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct PiezoMaterial<T> {
    pub elasticity: Voigt3<T>,
    pub coupling: Coupling<T>,
    pub permittivity: Mat2<T>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct DielectricMaterial<T> {
    pub elasticity: Voigt3<T>,
    pub permittivity: Mat2<T>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct FluidProperties<T> {
    /// gamma, in 1/Pa.
    pub compressibility: T,
    /// Dynamic viscosity at the physical scale, in Pa s.
    pub viscosity: T,
}

/// How the permittivity is rescaled with the cell size `eps0`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PermittivityScaling {
    /// `d / eps0^2`
    #[default]
    EpsSquared,
    /// `d / eps0`
    Eps,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct MaterialSet<T> {
    pub matrix_piezo: PiezoMaterial<T>,
    pub matrix_elastic: DielectricMaterial<T>,
    /// Elasticity shared by all conductors.
    pub conductor: Voigt3<T>,
    pub fluid: FluidProperties<T>,
    pub eps0: T,
    #[serde(default)]
    pub permittivity_scaling: PermittivityScaling,
}

/// Isotropic plane strain stiffness from Young's modulus and Poisson ratio.
pub fn isotropic_plane_strain<T: Real>(young: T, poisson: T) -> Voigt3<T> {
    let one = T::one();
    let two = T::lit(2.0);
    let lambda = young * poisson / ((one + poisson) * (one - two * poisson));
    let mu = young / (two * (one + poisson));
    let z = T::zero();
    [[lambda + two * mu, lambda, z], [lambda, lambda + two * mu, z], [z, z, mu]]
}

pub const VACUUM_PERMITTIVITY: f64 = 8.854e-12;

/// Relative permittivity assumed for the elastomer frame.
pub const ELASTOMER_RELATIVE_PERMITTIVITY: f64 = 3.0;

impl<T: Real> MaterialSet<T> {
    /// Piezo-polymer, elastomer, steel and water; the cell plane is spanned by the
    /// 3D axes 1 and 3 so that the poling direction is `y2`.
    pub fn reference(eps0: T) -> Self {
        let c3 = [
            [6.0, 3.72, 3.83, 0.0, 0.0, 0.0],
            [3.72, 6.0, 3.83, 0.0, 0.0, 0.0],
            [3.83, 3.83, 20.3, 0.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 1.23, 0.0, 0.0],
            [0.0, 0.0, 0.0, 0.0, 1.23, 0.0],
            [0.0, 0.0, 0.0, 0.0, 0.0, 1.23],
        ];
        let g3 = [
            [0.0, 0.0, 0.0, 0.0, 0.01, 0.0],
            [0.0, 0.0, 0.0, 0.0, 0.0, 0.01],
            [-0.09, -0.09, 5.91, 0.0, 0.0, 0.0],
        ];
        let d3 = [18.0, 18.0, 255.3];
        let axes = [0usize, 2];
        let voigt = [0usize, 2, 4];
        let mut elasticity = [[T::zero(); 3]; 3];
        let mut coupling = [[T::zero(); 3]; 2];
        let mut permittivity = [[T::zero(); 2]; 2];
        for i in 0..3 {
            for j in 0..3 {
                elasticity[i][j] = T::lit(c3[voigt[i]][voigt[j]] * 1e7);
            }
        }
        for k in 0..2 {
            for j in 0..3 {
                coupling[k][j] = T::lit(g3[axes[k]][voigt[j]]);
            }
            permittivity[k][k] = T::lit(d3[axes[k]] * VACUUM_PERMITTIVITY);
        }
        let eps_e = T::lit(ELASTOMER_RELATIVE_PERMITTIVITY * VACUUM_PERMITTIVITY);
        MaterialSet {
            matrix_piezo: PiezoMaterial { elasticity, coupling, permittivity },
            matrix_elastic: DielectricMaterial {
                elasticity: isotropic_plane_strain(T::lit(0.02e9), T::lit(0.49)),
                permittivity: [[eps_e, T::zero()], [T::zero(), eps_e]],
            },
            conductor: isotropic_plane_strain(T::lit(200e9), T::lit(0.25)),
            fluid: FluidProperties { compressibility: T::lit(1.0 / 2.15e9), viscosity: T::lit(8.9e-4) },
            eps0,
            permittivity_scaling: PermittivityScaling::EpsSquared,
        }
    }

    /// Coupling at the cell scale, `g / eps0`.
    pub fn scaled_coupling(&self) -> Coupling<T> {
        let mut g = self.matrix_piezo.coupling;
        for row in &mut g {
            for v in row.iter_mut() {
                *v /= self.eps0;
            }
        }
        g
    }

    /// Permittivity at the cell scale.
    pub fn scale_permittivity(&self, d: &Mat2<T>) -> Mat2<T> {
        let s = match self.permittivity_scaling {
            PermittivityScaling::EpsSquared => self.eps0 * self.eps0,
            PermittivityScaling::Eps => self.eps0,
        };
        [[d[0][0] / s, d[0][1] / s], [d[1][0] / s, d[1][1] / s]]
    }

    /// Viscosity at the cell scale, `mu / eps0^2`.
    pub fn scaled_viscosity(&self) -> T {
        self.fluid.viscosity / (self.eps0 * self.eps0)
    }
}
