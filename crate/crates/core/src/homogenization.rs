//! Effective coefficients from the cell correctors.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cell_problems::{
    solve_piezo, solve_stokes, CellProblemError, PiezoCorrector, PiezoCorrectors, PiezoSystem, StokesSolution,
};
use crate::forms::{affine_field, unit_strain, CellForms, VectorField};
use crate::materials::{MaterialSet, Voigt3};
use crate::mesh::{CellMesh, MeshError};
use crate::scalar::{Mat2, Real};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HomogenizationError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    CellProblem(#[from] CellProblemError),
}

/// Effective coefficients; tensors in Voigt layout `[11, 22, 12]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct HomCoeffs<T> {
    pub eps0: T,
    pub phi_f: T,
    pub gamma: T,
    /// Physical fluid viscosity.
    pub viscosity: T,
    pub a: Voigt3<T>,
    pub b: [T; 3],
    pub m: T,
    /// One Voigt vector per electrode.
    pub h: Vec<[T; 3]>,
    pub s: [T; 3],
    pub r: T,
    pub z: Vec<T>,
    /// Permeability in cell units; the physical value is `eps0^2 K`.
    pub k: [[T; 2]; 2],
}

/// Second evaluation routes of coefficients that admit one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct RouteChecks<T> {
    /// `B` from the mean divergence of the strain correctors.
    pub b_divergence: [T; 3],
    /// `M` from the pore wall flux of the pressure corrector.
    pub m_flux: T,
    /// `Z` from the pressure corrector energy.
    pub z_energy: Vec<T>,
    /// `S` from the pore wall mean of the strain mode potentials; roundoff limited when
    /// the conductors are much stiffer than the matrix.
    pub s_wall: [T; 3],
    /// Largest `|volume - facet|` pore wall flux over all correctors.
    pub wall_flux_gap: T,
    /// Stokes discrete divergence residual.
    pub divergence_residual: T,
}

#[derive(Clone, Debug)]
pub struct Homogenized<T> {
    pub coeffs: HomCoeffs<T>,
    pub correctors: PiezoCorrectors<T>,
    pub stokes: Option<StokesSolution<T>>,
    pub checks: RouteChecks<T>,
}

pub fn homogenize<T: Real>(mesh: &CellMesh<T>, mat: &MaterialSet<T>) -> Result<Homogenized<T>, HomogenizationError> {
    let forms = CellForms::new(mesh, mat)?;
    let (correctors, _) = solve_piezo(&forms)?;
    let stokes = solve_stokes(&forms)?;
    let (coeffs, checks) = coefficients(&forms, mat, &correctors, stokes.as_ref());
    Ok(Homogenized { coeffs, correctors, stokes, checks })
}

fn coefficients<T: Real>(
    forms: &CellForms<'_, T>,
    mat: &MaterialSet<T>,
    c: &PiezoCorrectors<T>,
    stokes: Option<&StokesSolution<T>>,
) -> (HomCoeffs<T>, RouteChecks<T>) {
    let mesh = forms.mesh;
    let phi_f = mesh.fluid_fraction();
    let gamma = mat.fluid.compressibility;
    let xi: Vec<VectorField<T>> = (0..3).map(|i| c.strain_total(mesh, i)).collect();
    let kron = |i: usize| if i < 2 { T::one() } else { T::zero() };

    let mut a = [[T::zero(); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            a[i][j] = forms.a(&xi[j], &xi[i]) + forms.d(&c.strain[i].eta, &c.strain[j].eta);
        }
    }
    let stress_like = |u: &[[T; 2]], eta: &[T]| -> [T; 3] {
        std::array::from_fn(|i| {
            let gp = unit_strain(i);
            forms.a_const(&gp, u) - forms.g_const(&gp, eta)
        })
    };
    let p = &c.pressure;
    let bp = stress_like(&p.u, &p.eta);
    let b: [T; 3] = std::array::from_fn(|i| bp[i] + phi_f * kron(i));
    let b_divergence: [T; 3] = std::array::from_fn(|i| -forms.solid_div_mean(&c.strain[i].u) + phi_f * kron(i));
    let m = forms.a(&p.u, &p.u) + forms.d(&p.eta, &p.eta) + phi_f * gamma;
    let m_flux = -forms.wall_flux(&p.u) + phi_f * gamma;
    let h: Vec<[T; 3]> = c.electrodes.iter().map(|el| stress_like(&el.u, &el.eta)).collect();
    let z: Vec<T> = c.electrodes.iter().map(|el| -forms.wall_flux(&el.u)).collect();
    let z_energy: Vec<T> =
        c.electrodes.iter().map(|el| forms.a(&p.u, &el.u) + forms.d(&el.eta, &p.eta)).collect();
    let s = stress_like(&c.charge.u, &c.charge.eta);
    let r = -forms.wall_flux(&c.charge.u);
    let s_wall: [T; 3] = std::array::from_fn(|i| forms.wall_mean(&c.strain[i].eta));

    let mut gap = T::zero();
    let periodic_fields = c.strain.iter().chain([&c.pressure, &c.charge]).chain(c.electrodes.iter());
    for f in periodic_fields {
        gap = gap.max((forms.wall_flux(&f.u) - forms.wall_flux_facets(&f.u)).abs());
    }
    let (k, divergence_residual) = match stokes {
        Some(st) => (st.permeability(forms), st.divergence_residual(forms)),
        None => ([[T::zero(); 2]; 2], T::zero()),
    };
    let coeffs = HomCoeffs {
        eps0: mat.eps0,
        phi_f,
        gamma,
        viscosity: mat.fluid.viscosity,
        a,
        b,
        m,
        h,
        s,
        r,
        z,
        k,
    };
    (coeffs, RouteChecks { b_divergence, m_flux, z_energy, s_wall, wall_flux_gap: gap, divergence_residual })
}

impl<T: Real> Homogenized<T> {
    /// Two-scale displacement `Pi(e) + u1` for a Voigt macroscopic strain `e`,
    /// pressure `p`, charge density `rho` and electrode potentials.
    pub fn reconstruct(&self, mesh: &CellMesh<T>, e: [T; 3], p: T, rho: T, phi: &[T]) -> VectorField<T> {
        let mut grad = [[T::zero(); 2]; 2];
        for (i, ei) in e.iter().enumerate() {
            let g = unit_strain::<T>(i);
            for r in 0..2 {
                for s in 0..2 {
                    grad[r][s] += g[r][s] * *ei;
                }
            }
        }
        let mut u = affine_field(mesh, &grad);
        let c = &self.correctors;
        for n in 0..mesh.n_nodes() {
            for k in 0..2 {
                let mut v = -p * c.pressure.u[n][k] + rho * c.charge.u[n][k];
                for (i, ei) in e.iter().enumerate() {
                    v += *ei * c.strain[i].u[n][k];
                }
                for (el, f) in c.electrodes.iter().zip(phi) {
                    v += *f * el.u[n][k];
                }
                u[n][k] += v;
            }
        }
        u
    }
}

impl<T: Real> HomCoeffs<T> {
    /// Largest deviation from the expected symmetries, relative to the tensor size.
    pub fn symmetry_defect(&self) -> T {
        let amax = self.a.iter().flatten().fold(T::zero(), |m, v| m.max(v.abs()));
        let mut d = T::zero();
        for i in 0..3 {
            for j in 0..3 {
                d = d.max((self.a[i][j] - self.a[j][i]).abs() / amax);
            }
        }
        let kmax = self.k.iter().flatten().fold(T::zero(), |m, v| m.max(v.abs()));
        if kmax > T::zero() {
            d = d.max((self.k[0][1] - self.k[1][0]).abs() / kmax);
        }
        d
    }

    /// Smallest eigenvalue of the symmetric part of `K`.
    pub fn k_min_eigenvalue(&self) -> T {
        let (a, d) = (self.k[0][0], self.k[1][1]);
        let b = T::lit(0.5) * (self.k[0][1] + self.k[1][0]);
        let mean = T::lit(0.5) * (a + d);
        let rad = (T::lit(0.25) * (a - d) * (a - d) + b * b).sqrt();
        mean - rad
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("coefficient serialization")
    }
}

/// Index symmetry defects of the effective tensors, each relative to the tensor size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymmetryReport {
    pub a_major: f64,
    pub a_minor: f64,
    pub b: f64,
    pub s: f64,
    pub h: f64,
    pub k: f64,
}

impl SymmetryReport {
    pub fn max(&self) -> f64 {
        [self.a_major, self.a_minor, self.b, self.s, self.h, self.k].into_iter().fold(0.0, f64::max)
    }
}

/// Evaluates the tensors with all four index pairs `kl`, each from its own corrector
/// with the non-symmetric unit gradient `e_k (x) e_l`, and compares swapped indices.
pub fn tensor_symmetry<T: Real>(
    mesh: &CellMesh<T>,
    mat: &MaterialSet<T>,
    hom: &Homogenized<T>,
) -> Result<SymmetryReport, HomogenizationError> {
    let forms = CellForms::new(mesh, mat)?;
    let sys = PiezoSystem::assemble(&forms)?;
    let unit = |k: usize, l: usize| -> Mat2<T> {
        let mut m = [[T::zero(); 2]; 2];
        m[k][l] = T::one();
        m
    };
    let pairs = [(0, 0), (1, 1), (0, 1), (1, 0)];
    let total: Vec<(VectorField<T>, PiezoCorrector<T>)> = pairs
        .iter()
        .map(|&(k, l)| {
            let pi = affine_field(mesh, &unit(k, l));
            let c = sys.solve(&forms, Some(&pi), None, None, None);
            let xi = pi.iter().zip(&c.u).map(|(p, w)| [p[0] + w[0], p[1] + w[1]]).collect();
            (xi, c)
        })
        .collect();
    let mut a = [[T::zero(); 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            a[i][j] = forms.a(&total[j].0, &total[i].0) + forms.d(&total[i].1.eta, &total[j].1.eta);
        }
    }
    let swap = [0usize, 1, 3, 2];
    let amax = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.f64().abs())).max(f64::MIN_POSITIVE);
    let (mut major, mut minor) = (0.0f64, 0.0f64);
    for i in 0..4 {
        for j in 0..4 {
            major = major.max((a[i][j] - a[j][i]).f64().abs() / amax);
            minor = minor.max((a[i][j] - a[swap[i]][j]).f64().abs() / amax);
            minor = minor.max((a[i][j] - a[i][swap[j]]).f64().abs() / amax);
        }
    }
    let off = |c: &PiezoCorrector<T>| -> f64 {
        let x: Vec<T> = pairs
            .iter()
            .map(|&(k, l)| forms.a_const(&unit(k, l), &c.u) - forms.g_const(&unit(k, l), &c.eta))
            .collect();
        let m = x.iter().fold(0.0f64, |m, v| m.max(v.f64().abs()));
        if m == 0.0 {
            0.0
        } else {
            (x[2] - x[3]).f64().abs() / m
        }
    };
    let c = &hom.correctors;
    let h = c.electrodes.iter().map(off).fold(0.0, f64::max);
    Ok(SymmetryReport {
        a_major: major,
        a_minor: minor,
        b: off(&c.pressure),
        s: off(&c.charge),
        h,
        k: {
            let kk = &hom.coeffs.k;
            let m = kk.iter().flatten().fold(0.0f64, |m, v| m.max(v.f64().abs()));
            if m == 0.0 {
                0.0
            } else {
                (kk[0][1] - kk[1][0]).f64().abs() / m
            }
        },
    })
}
