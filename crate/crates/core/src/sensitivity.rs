//! Shape sensitivities of the effective coefficients.
//!
//! A design velocity moves the mesh nodes; fields keep their nodal values. The derivative
//! forms below are the exact derivatives of the discrete forms under that transport.

use rayon::prelude::*;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cell_problems::{p2_basis, stokes_rule, PiezoCorrectors, StokesSolution};
use crate::forms::{coupling_apply, dot3, mat3_apply, unit_strain, voigt, CellForms, VectorField};
use crate::homogenization::{homogenize, HomCoeffs, Homogenized, HomogenizationError};
use crate::linalg::{BandedLu, Triplets};
use crate::materials::{MaterialSet, Voigt3};
use crate::mesh::{CellMesh, MeshError};
use crate::scalar::{apply2, dot2, matmul2, transpose_apply2, Mat2, Real, Vec2};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SensitivityError {
    #[error("velocity field is not compatible with the cell periodicity: {0}")]
    NonPeriodicVelocity(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Homogenization(#[from] HomogenizationError),
    #[error("fluid extension failed: {0}")]
    Extension(String),
    #[error("oracle budget exceeded: {needed} cell solves requested, {budget} allowed")]
    OracleBudgetExceeded { needed: usize, budget: usize },
}

/// Nodal design velocity `V = G y + periodic`.
#[derive(Clone, Debug)]
pub struct VelocityField<T> {
    pub values: VectorField<T>,
    /// `G`; zero for a periodic field.
    pub affine: Mat2<T>,
}

impl<T: Real> VelocityField<T> {
    pub fn new(mesh: &CellMesh<T>, values: VectorField<T>) -> Result<Self, SensitivityError> {
        if values.len() != mesh.n_nodes() {
            return Err(SensitivityError::NonPeriodicVelocity("length does not match the node count".into()));
        }
        let mut g = [[T::zero(); 2]; 2];
        let mut found = [false; 2];
        let tiny = T::lit(1e-9);
        for &[m, s] in &mesh.periodic_pairs {
            let o = [mesh.nodes[s][0] - mesh.nodes[m][0], mesh.nodes[s][1] - mesh.nodes[m][1]];
            for axis in 0..2 {
                if !found[axis] && o[axis].abs() > tiny && o[1 - axis].abs() <= tiny {
                    for k in 0..2 {
                        g[k][axis] = (values[s][k] - values[m][k]) / o[axis];
                    }
                    found[axis] = true;
                }
            }
        }
        let scale = values.iter().fold(T::zero(), |a, v| a.max(v[0].abs()).max(v[1].abs())) + T::min_positive_value();
        for &[m, s] in &mesh.periodic_pairs {
            let o = [mesh.nodes[s][0] - mesh.nodes[m][0], mesh.nodes[s][1] - mesh.nodes[m][1]];
            let expect = apply2(&g, o);
            for k in 0..2 {
                if (values[s][k] - values[m][k] - expect[k]).abs() > tiny * scale {
                    return Err(SensitivityError::NonPeriodicVelocity(format!(
                        "nodes {m} and {s} differ by more than an affine lattice map"
                    )));
                }
            }
        }
        Ok(VelocityField { values, affine: g })
    }

    /// Same direction with unit largest nodal component.
    pub fn normalized(&self) -> Self {
        let m = self.values.iter().fold(T::zero(), |a, v| a.max(v[0].abs()).max(v[1].abs()));
        if m == T::zero() {
            return self.clone();
        }
        let s = T::one() / m;
        VelocityField {
            values: self.values.iter().map(|v| [v[0] * s, v[1] * s]).collect(),
            affine: [[self.affine[0][0] * s, self.affine[0][1] * s], [self.affine[1][0] * s, self.affine[1][1] * s]],
        }
    }

    pub fn is_periodic(&self) -> bool {
        self.affine.iter().flatten().all(|v| *v == T::zero())
    }
}

/// Smooth random periodic field made of a few Fourier modes; slave nodes copy their masters.
pub fn random_periodic_field<T: Real, R: Rng>(mesh: &CellMesh<T>, rng: &mut R, amplitude: f64) -> VectorField<T> {
    let modes: Vec<(i32, i32, f64, f64, usize)> = (0..4)
        .map(|_| {
            (
                rng.gen_range(-2..=2),
                rng.gen_range(-2..=2),
                rng.gen_range(-1.0..1.0) * amplitude,
                rng.gen_range(0.0..std::f64::consts::TAU),
                rng.gen_range(0..2),
            )
        })
        .collect();
    let mut v: VectorField<T> = mesh
        .nodes
        .iter()
        .map(|p| {
            let (x, y) = (p[0].f64(), p[1].f64());
            let mut out = [0.0; 2];
            for &(kx, ky, amp, phase, comp) in &modes {
                let arg = std::f64::consts::TAU * (kx as f64 * x + ky as f64 * y) + phase;
                out[comp] += amp * arg.sin();
            }
            [T::lit(out[0]), T::lit(out[1])]
        })
        .collect();
    for &[m, s] in &mesh.periodic_pairs {
        v[s] = v[m];
    }
    v
}

/// Replaces the values at fluid-only nodes by the discrete harmonic extension of the
/// values on the rest of the cell.
pub fn extend_into_fluid<T: Real>(
    forms: &CellForms<'_, T>,
    field: &VelocityField<T>,
) -> Result<VelocityField<T>, SensitivityError> {
    let mesh = forms.mesh;
    let nn = mesh.n_nodes();
    let classes = mesh.node_classes();
    let mut solid = vec![false; nn];
    let mut fluid = vec![false; nn];
    for el in &mesh.elements {
        for &v in &el.verts {
            if el.region.is_fluid() {
                fluid[classes[v]] = true;
            } else {
                solid[classes[v]] = true;
            }
        }
    }
    let g = field.affine;
    let mut per: VectorField<T> =
        (0..nn).map(|n| {
            let a = apply2(&g, mesh.nodes[n]);
            [field.values[n][0] - a[0], field.values[n][1] - a[1]]
        }).collect();
    let mut dof = vec![None; nn];
    let mut n = 0;
    for c in 0..nn {
        if classes[c] == c && fluid[c] && !solid[c] {
            dof[c] = Some(n);
            n += 1;
        }
    }
    if n > 0 {
        let mut trip = Triplets::new(n);
        let mut rhs = [vec![T::zero(); n], vec![T::zero(); n]];
        for e in 0..mesh.n_elements() {
            if !forms.region(e).is_fluid() {
                continue;
            }
            let el = &forms.elements[e];
            let v = mesh.elements[e].verts;
            for a in 0..3 {
                let Some(r) = dof[classes[v[a]]] else { continue };
                for b in 0..3 {
                    let k = el.area * dot2(el.grads[a], el.grads[b]);
                    match dof[classes[v[b]]] {
                        Some(c) => trip.add(r, c, k),
                        None => {
                            rhs[0][r] -= k * per[v[b]][0];
                            rhs[1][r] -= k * per[v[b]][1];
                        }
                    }
                }
            }
        }
        let lu = BandedLu::factor(&trip.to_csr()).map_err(|e| SensitivityError::Extension(e.to_string()))?;
        let x = [lu.solve(&rhs[0]), lu.solve(&rhs[1])];
        for node in 0..nn {
            if let Some(d) = dof[classes[node]] {
                per[node] = [x[0][d], x[1][d]];
            }
        }
    }
    let values = (0..nn)
        .map(|node| {
            let a = apply2(&g, mesh.nodes[node]);
            [per[node][0] + a[0], per[node][1] + a[1]]
        })
        .collect();
    Ok(VelocityField { values, affine: g })
}

/// Adds a random smooth bump to the values at fluid-only nodes; wall and solid values stay.
pub fn bump_fluid_interior<T: Real, R: Rng>(
    mesh: &CellMesh<T>,
    field: &VelocityField<T>,
    rng: &mut R,
    amplitude: f64,
) -> VelocityField<T> {
    let classes = mesh.node_classes();
    let mut touches_solid = vec![false; mesh.n_nodes()];
    for el in &mesh.elements {
        if !el.region.is_fluid() {
            for &v in &el.verts {
                touches_solid[classes[v]] = true;
            }
        }
    }
    let bump = random_periodic_field(mesh, rng, amplitude);
    let mut values = field.values.clone();
    for n in 0..mesh.n_nodes() {
        if !touches_solid[classes[n]] {
            let b = bump[classes[n]];
            values[n] = [values[n][0] + b[0], values[n][1] + b[1]];
        }
    }
    VelocityField { values, affine: field.affine }
}

/// Derivatives of the cell forms along one design velocity.
pub struct ShapeForms<'f, 'm, T> {
    pub forms: &'f CellForms<'m, T>,
    /// `gv[e][s][l] = d_l V_s`
    gv: Vec<Mat2<T>>,
    div: Vec<T>,
    /// `mean_Y div V = delta|Y| / |Y|`
    pub mean_div: T,
    velocity: VectorField<T>,
}

impl<'f, 'm, T: Real> ShapeForms<'f, 'm, T> {
    /// `v` must be defined on every node (extended into the fluid when fluid terms are needed).
    pub fn new(forms: &'f CellForms<'m, T>, v: &VelocityField<T>) -> Self {
        let ne = forms.elements.len();
        let gv: Vec<Mat2<T>> = (0..ne).map(|e| forms.grad_vector(e, &v.values)).collect();
        let div: Vec<T> = gv.iter().map(|g| g[0][0] + g[1][1]).collect();
        let mean_div = (0..ne).map(|e| forms.weight(e) * div[e]).sum();
        ShapeForms { forms, gv, div, mean_div, velocity: v.values.clone() }
    }

    pub fn velocity(&self) -> &[Vec2<T>] {
        &self.velocity
    }

    /// `delta a(u, v)`
    pub fn da(&self, u: &[Vec2<T>], v: &[Vec2<T>]) -> T {
        let f = self.forms;
        let mut s = T::zero();
        for e in 0..f.elements.len() {
            let Some(c) = f.elasticity(e) else { continue };
            let (gu, gw, gv) = (f.grad_vector(e, u), f.grad_vector(e, v), &self.gv[e]);
            let su = mat3_apply(c, voigt(&gu));
            let ev = voigt(&gw);
            let t = dot3(su, ev) * self.div[e]
                - dot3(mat3_apply(c, voigt(&matmul2(&gu, gv))), ev)
                - dot3(su, voigt(&matmul2(&gw, gv)));
            s += f.weight(e) * t;
        }
        s - f.a(u, v) * self.mean_div
    }

    /// `delta g(u, psi)`
    pub fn dg(&self, u: &[Vec2<T>], psi: &[T]) -> T {
        let f = self.forms;
        let mut s = T::zero();
        for e in 0..f.elements.len() {
            let Some(g) = f.coupling(e) else { continue };
            let (gu, gp, gv) = (f.grad_vector(e, u), f.grad_scalar(e, psi), &self.gv[e]);
            let du = coupling_apply(g, voigt(&gu));
            let t = dot2(du, gp) * self.div[e]
                - dot2(coupling_apply(g, voigt(&matmul2(&gu, gv))), gp)
                - dot2(du, transpose_apply2(gv, gp));
            s += f.weight(e) * t;
        }
        s - f.g(u, psi) * self.mean_div
    }

    /// `delta d(phi, psi)`
    pub fn dd(&self, phi: &[T], psi: &[T]) -> T {
        let f = self.forms;
        let mut s = T::zero();
        for e in 0..f.elements.len() {
            let Some(d) = f.permittivity(e) else { continue };
            let (ga, gb, gv) = (f.grad_scalar(e, phi), f.grad_scalar(e, psi), &self.gv[e]);
            let da = apply2(d, ga);
            let t = dot2(da, gb) * self.div[e]
                - dot2(apply2(d, transpose_apply2(gv, ga)), gb)
                - dot2(da, transpose_apply2(gv, gb));
            s += f.weight(e) * t;
        }
        s - f.d(phi, psi) * self.mean_div
    }

    /// Derivative of the pore wall flux `-mean_{solid} div u`.
    pub fn dflux(&self, u: &[Vec2<T>]) -> T {
        let f = self.forms;
        let mut s = T::zero();
        for e in 0..f.elements.len() {
            if f.region(e).is_fluid() {
                continue;
            }
            let gu = f.grad_vector(e, u);
            let gv = &self.gv[e];
            let tr = gu[0][0] * gv[0][0] + gu[0][1] * gv[1][0] + gu[1][0] * gv[0][1] + gu[1][1] * gv[1][1];
            s += f.weight(e) * (tr - (gu[0][0] + gu[1][1]) * self.div[e]);
        }
        s + self.mean_div * f.solid_div_mean(u)
    }

    /// Derivative of `|Y_d| / |Y|` for the elements selected by `pred`.
    pub fn dfraction(&self, pred: impl Fn(crate::mesh::Region) -> bool) -> T {
        let f = self.forms;
        let mut inside = T::zero();
        let mut frac = T::zero();
        for e in 0..f.elements.len() {
            if pred(f.region(e)) {
                inside += f.weight(e) * self.div[e];
                frac += f.weight(e);
            }
        }
        inside - frac * self.mean_div
    }

    /// Derivative of `|Y_d|` by the volume integral of `div V`.
    pub fn dmeasure_volume(&self, pred: impl Fn(crate::mesh::Region) -> bool) -> T {
        let f = self.forms;
        (0..f.elements.len()).filter(|&e| pred(f.region(e))).map(|e| f.elements[e].area * self.div[e]).sum()
    }

    /// Derivative of `|Y_d|` by the boundary flux of `V` over the facets of the region.
    pub fn dmeasure_boundary(&self, pred: impl Fn(crate::mesh::Region) -> bool) -> T {
        let f = self.forms;
        let mesh = f.mesh;
        let half = T::lit(0.5);
        let mut s = T::zero();
        let topo = mesh.edge_topology().expect("edge topology of a validated mesh");
        for (e, el) in mesh.elements.iter().enumerate() {
            if !pred(el.region) {
                continue;
            }
            for k in 0..3 {
                let inc = &topo.edges[topo.element_edges[e][k]];
                let other = inc.iter().find(|(o, _)| *o != e).map(|(o, _)| mesh.elements[*o].region);
                if other.map_or(false, &pred) {
                    continue;
                }
                let (a, b, c) = (el.verts[k], el.verts[(k + 1) % 3], el.verts[(k + 2) % 3]);
                let t = [mesh.nodes[b][0] - mesh.nodes[a][0], mesh.nodes[b][1] - mesh.nodes[a][1]];
                let mut n = [t[1], -t[0]];
                let inward = [mesh.nodes[c][0] - mesh.nodes[a][0], mesh.nodes[c][1] - mesh.nodes[a][1]];
                if dot2(n, inward) > T::zero() {
                    n = [-n[0], -n[1]];
                }
                let vm = [
                    (self.velocity[a][0] + self.velocity[b][0]) * half,
                    (self.velocity[a][1] + self.velocity[b][1]) * half,
                ];
                s += dot2(vm, n);
            }
        }
        s
    }
}

/// Coefficient derivatives along one velocity; layout as in [`HomCoeffs`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct CoefficientGradient<T> {
    pub phi_f: T,
    pub a: Voigt3<T>,
    pub b: [T; 3],
    pub m: T,
    pub h: Vec<[T; 3]>,
    pub z: Vec<T>,
    pub k: [[T; 2]; 2],
}

impl<T: Real> CoefficientGradient<T> {
    /// Named scalar entries, grouped by family.
    pub fn entries(&self) -> Vec<(&'static str, String, T)> {
        let mut out = Vec::new();
        let v = ["11", "22", "12"];
        for i in 0..3 {
            for j in 0..3 {
                out.push(("A", format!("A_{}{}", v[i], v[j]), self.a[i][j]));
            }
        }
        for i in 0..3 {
            out.push(("B", format!("B_{}", v[i]), self.b[i]));
        }
        out.push(("M", "M".to_string(), self.m));
        for (al, h) in self.h.iter().enumerate() {
            for i in 0..3 {
                out.push(("H", format!("H{}_{}", al + 1, v[i]), h[i]));
            }
        }
        for (al, z) in self.z.iter().enumerate() {
            out.push(("Z", format!("Z{}", al + 1), *z));
        }
        for i in 0..2 {
            for j in 0..2 {
                out.push(("K", format!("K_{}{}", i + 1, j + 1), self.k[i][j]));
            }
        }
        out
    }

    pub fn from_coeffs(c: &HomCoeffs<T>) -> Self {
        CoefficientGradient { phi_f: c.phi_f, a: c.a, b: c.b, m: c.m, h: c.h.clone(), z: c.z.clone(), k: c.k }
    }

    /// `(self - other) * s` entrywise.
    pub fn diff_scaled(&self, other: &Self, s: T) -> Self {
        let d = |a: T, b: T| (a - b) * s;
        CoefficientGradient {
            phi_f: d(self.phi_f, other.phi_f),
            a: std::array::from_fn(|i| std::array::from_fn(|j| d(self.a[i][j], other.a[i][j]))),
            b: std::array::from_fn(|i| d(self.b[i], other.b[i])),
            m: d(self.m, other.m),
            h: self.h.iter().zip(&other.h).map(|(x, y)| std::array::from_fn(|i| d(x[i], y[i]))).collect(),
            z: self.z.iter().zip(&other.z).map(|(x, y)| d(*x, *y)).collect(),
            k: std::array::from_fn(|i| std::array::from_fn(|j| d(self.k[i][j], other.k[i][j]))),
        }
    }

    pub fn zero_like(c: &HomCoeffs<T>) -> Self {
        let z = CoefficientGradient::from_coeffs(c);
        z.diff_scaled(&z, T::one())
    }
}

/// `G V` for the affine part of strain mode `mode`.
fn dpi<T: Real>(mode: usize, v: &[Vec2<T>]) -> VectorField<T> {
    let g = unit_strain::<T>(mode);
    v.iter().map(|x| apply2(&g, *x)).collect()
}

/// Coefficient derivatives along `v`, which must be defined on all nodes.
pub fn coefficient_gradient<T: Real>(
    forms: &CellForms<'_, T>,
    mat: &MaterialSet<T>,
    hom: &Homogenized<T>,
    v: &VelocityField<T>,
) -> CoefficientGradient<T> {
    let mesh = forms.mesh;
    let sf = ShapeForms::new(forms, v);
    let c: &PiezoCorrectors<T> = &hom.correctors;
    let xi: Vec<VectorField<T>> = (0..3).map(|i| c.strain_total(mesh, i)).collect();
    let dp: Vec<VectorField<T>> = (0..3).map(|i| dpi(i, &v.values)).collect();
    let eta: Vec<&[T]> = c.strain.iter().map(|s| s.eta.as_slice()).collect();
    let (wp, ep) = (&c.pressure.u, &c.pressure.eta);
    let kron = |i: usize| if i < 2 { T::one() } else { T::zero() };
    let dphi = sf.dfraction(|r| r.is_fluid());

    let mut a = [[T::zero(); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            // A[i][j] = a(Xi_j, Xi_i) + d(eta_i, eta_j)
            a[i][j] = sf.da(&xi[j], &xi[i]) - sf.dd(eta[i], eta[j]) + forms.a(&xi[j], &dp[i]) + forms.a(&dp[j], &xi[i])
                - (sf.dg(&xi[i], eta[j]) + sf.dg(&xi[j], eta[i]) + forms.g(&dp[i], eta[j]) + forms.g(&dp[j], eta[i]));
        }
    }
    let b: [T; 3] = std::array::from_fn(|i| {
        dphi * kron(i) + sf.dflux(&c.strain[i].u) + forms.a(wp, &dp[i]) + sf.da(wp, &xi[i])
            - (sf.dg(wp, eta[i]) + sf.dg(&xi[i], ep) + forms.g(&dp[i], ep) + sf.dd(ep, eta[i]))
    });
    let two = T::lit(2.0);
    let m = mat.fluid.compressibility * dphi - two * sf.dflux(wp) + sf.dd(ep, ep) + two * sf.dg(wp, ep) - sf.da(wp, wp);
    let h = c
        .electrodes
        .iter()
        .map(|el| {
            std::array::from_fn(|i| {
                forms.a(&el.u, &dp[i]) - forms.g(&dp[i], &el.eta) - sf.dg(&el.u, eta[i]) - sf.dd(&el.eta, eta[i])
                    + sf.da(&el.u, &xi[i])
                    - sf.dg(&xi[i], &el.eta)
            })
        })
        .collect();
    let z = c
        .electrodes
        .iter()
        .map(|el| sf.dg(wp, &el.eta) - sf.da(&el.u, wp) + sf.dg(&el.u, ep) + sf.dd(&el.eta, ep) - sf.dflux(&el.u))
        .collect();
    let k = match &hom.stokes {
        Some(st) => permeability_gradient(forms, st, &sf),
        None => [[T::zero(); 2]; 2],
    };
    CoefficientGradient { phi_f: dphi, a, b, m, h, z, k }
}

/// Derivative of the cell permeability; only the velocity on the fluid elements enters.
pub fn permeability_gradient<T: Real>(
    forms: &CellForms<'_, T>,
    st: &StokesSolution<T>,
    sf: &ShapeForms<'_, '_, T>,
) -> [[T; 2]; 2] {
    let mesh = forms.mesh;
    let rule = stokes_rule::<T>();
    let mut out = [[T::zero(); 2]; 2];
    let mut energy = [[T::zero(); 2]; 2];
    for &e in &st.space.fluid_elements {
        let el = &forms.elements[e];
        let w = forms.weight(e);
        let gv = &sf.gv[e];
        let div_v = sf.div[e];
        let verts = mesh.elements[e].verts;
        let locals: [usize; 6] = std::array::from_fn(|l| st.space.local(mesh, e, l));
        for q in &rule {
            let (val, grad) = p2_basis(q.bary, &el.grads);
            let mut wv = [[T::zero(); 2]; 2];
            let mut wg = [[[T::zero(); 2]; 2]; 2];
            let mut pr = [T::zero(); 2];
            for k in 0..2 {
                for l in 0..6 {
                    let x = st.velocity[k][locals[l]];
                    for c in 0..2 {
                        wv[k][c] += val[l] * x[c];
                        for s in 0..2 {
                            wg[k][c][s] += x[c] * grad[l][s];
                        }
                    }
                }
                for a in 0..3 {
                    pr[k] += q.bary[a] * st.pressure[k][verts[a]];
                }
            }
            let wq = w * q.weight;
            let frob = |x: &Mat2<T>, y: &Mat2<T>| x[0][0] * y[0][0] + x[0][1] * y[0][1] + x[1][0] * y[1][0] + x[1][1] * y[1][1];
            let tr = |x: &Mat2<T>| x[0][0] + x[1][1];
            for i in 0..2 {
                for j in 0..2 {
                    let gg = frob(&wg[i], &wg[j]);
                    let vol = wv[j][i] + wv[i][j] - gg + pr[i] * tr(&wg[j]) + pr[j] * tr(&wg[i]);
                    let conv = frob(&matmul2(&wg[i], gv), &wg[j]) + frob(&matmul2(&wg[j], gv), &wg[i])
                        - pr[i] * tr(&matmul2(&wg[j], gv))
                        - pr[j] * tr(&matmul2(&wg[i], gv));
                    out[i][j] += wq * (vol * div_v + conv);
                    energy[i][j] += wq * gg;
                }
            }
        }
    }
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] -= sf.mean_div * energy[i][j];
        }
    }
    out
}

/// Velocity fields of the state dependence: strain modes, pressure and electrode potentials.
pub fn state_velocities<T: Real>(
    forms: &CellForms<'_, T>,
    hom: &Homogenized<T>,
) -> Result<Vec<(String, VelocityField<T>)>, SensitivityError> {
    let mesh = forms.mesh;
    let c = &hom.correctors;
    let mut out = Vec::new();
    let names = ["e11", "e22", "e12"];
    for (i, name) in names.iter().enumerate() {
        let raw = VelocityField::new(mesh, c.strain_total(mesh, i))?;
        out.push((name.to_string(), extend_into_fluid(forms, &raw)?));
    }
    let p: VectorField<T> = c.pressure.u.iter().map(|x| [-x[0], -x[1]]).collect();
    out.push(("p".to_string(), extend_into_fluid(forms, &VelocityField::new(mesh, p)?)?));
    for (al, el) in c.electrodes.iter().enumerate() {
        let raw = VelocityField::new(mesh, el.u.clone())?;
        out.push((format!("phi{}", al + 1), extend_into_fluid(forms, &raw)?));
    }
    Ok(out)
}

/// Gradients of all coefficients with respect to the macroscopic state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct StateGradients<T> {
    /// Voigt strain modes `11, 22, 12` (engineering shear).
    pub strain: Vec<CoefficientGradient<T>>,
    pub pressure: CoefficientGradient<T>,
    pub potential: Vec<CoefficientGradient<T>>,
}

pub fn state_gradients<T: Real>(
    mesh: &CellMesh<T>,
    mat: &MaterialSet<T>,
    hom: &Homogenized<T>,
) -> Result<StateGradients<T>, SensitivityError> {
    let forms = CellForms::new(mesh, mat)?;
    let fields = state_velocities(&forms, hom)?;
    let mut grads: Vec<CoefficientGradient<T>> =
        fields.iter().map(|(_, v)| coefficient_gradient(&forms, mat, hom, v)).collect();
    let potential = grads.split_off(4);
    let pressure = grads.pop().unwrap();
    Ok(StateGradients { strain: grads, pressure, potential })
}

/// Central difference `(X(tau) - X(-tau)) / (2 tau)` of the homogenized coefficients.
pub fn fd_gradient<T: Real>(
    mesh: &CellMesh<T>,
    mat: &MaterialSet<T>,
    v: &VelocityField<T>,
    tau: T,
) -> Result<CoefficientGradient<T>, SensitivityError> {
    let plus = homogenize(&mesh.perturbed(&v.values, tau)?, mat)?;
    let minus = homogenize(&mesh.perturbed(&v.values, -tau)?, mat)?;
    let s = T::one() / (T::lit(2.0) * tau);
    Ok(CoefficientGradient::from_coeffs(&plus.coeffs).diff_scaled(&CoefficientGradient::from_coeffs(&minus.coeffs), s))
}

/// One line of the audit table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditRow {
    pub coefficient: String,
    pub formula_value: f64,
    pub fd_value: f64,
    pub rel_error: f64,
}

/// Family-normalized comparison of formula gradients with a difference oracle over a set
/// of directions. Each entry's error is divided by the largest oracle entry of its family
/// over all directions, floored at `1e-8` times the largest coefficient of that family.
pub fn compare<T: Real>(
    cases: &[(String, CoefficientGradient<T>, CoefficientGradient<T>)],
    base: &HomCoeffs<T>,
) -> Vec<AuditRow> {
    let eb = CoefficientGradient::from_coeffs(base).entries();
    let fam_scale = |fam: &str| {
        let d = cases
            .iter()
            .flat_map(|(_, _, fd)| fd.entries())
            .filter(|x| x.0 == fam)
            .fold(0.0f64, |m, x| m.max(x.2.f64().abs()));
        let b = eb.iter().filter(|x| x.0 == fam).fold(0.0f64, |m, x| m.max(x.2.f64().abs()));
        d.max(1e-8 * b).max(f64::MIN_POSITIVE)
    };
    let mut rows = Vec::new();
    for (label, formula, fd) in cases {
        for (f, d) in formula.entries().iter().zip(&fd.entries()) {
            let err = (f.2.f64() - d.2.f64()).abs();
            rows.push(AuditRow {
                coefficient: format!("{label}/{}", f.1),
                formula_value: f.2.f64(),
                fd_value: d.2.f64(),
                rel_error: if err == 0.0 { 0.0 } else { err / fam_scale(f.0) },
            });
        }
    }
    rows
}

/// Remainder `|X(tau V) - X - tau dX|`, normalized per family by the coefficient size; max over families.
pub fn taylor_remainder<T: Real>(
    mesh: &CellMesh<T>,
    mat: &MaterialSet<T>,
    base: &HomCoeffs<T>,
    grad: &CoefficientGradient<T>,
    v: &VelocityField<T>,
    tau: T,
) -> Result<f64, SensitivityError> {
    let moved = homogenize(&mesh.perturbed(&v.values, tau)?, mat)?;
    let x1 = CoefficientGradient::from_coeffs(&moved.coeffs).entries();
    let x0 = CoefficientGradient::from_coeffs(base).entries();
    let g = grad.entries();
    let mut worst = 0.0f64;
    for fam in ["A", "B", "M", "H", "Z", "K"] {
        let scale = x0.iter().filter(|x| x.0 == fam).fold(0.0f64, |m, x| m.max(x.2.f64().abs()));
        if scale == 0.0 {
            continue;
        }
        let r = x1
            .iter()
            .zip(&x0)
            .zip(&g)
            .filter(|((a, _), _)| a.0 == fam)
            .fold(0.0f64, |m, ((a, b), d)| m.max((a.2.f64() - b.2.f64() - tau.f64() * d.2.f64()).abs()));
        worst = worst.max(r / scale);
    }
    Ok(worst)
}

/// Least squares slope of `log(remainder)` against `log(tau)`.
pub fn convergence_order(taus: &[f64], remainders: &[f64]) -> f64 {
    let xs: Vec<f64> = taus.iter().map(|t| t.ln()).collect();
    let ys: Vec<f64> = remainders.iter().map(|r| r.max(1e-300).ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Settings of a full sensitivity audit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditConfig {
    #[serde(default = "default_random_fields")]
    pub random_fields: usize,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    /// Step sizes of the Taylor remainder sweep; empty to skip it.
    #[serde(default = "default_sweep")]
    pub tau_sweep: Vec<f64>,
    /// Upper bound on the number of cell homogenizations.
    #[serde(default = "default_budget")]
    pub max_cell_solves: usize,
}

fn default_random_fields() -> usize {
    5
}
fn default_tau() -> f64 {
    1e-5
}
fn default_seed() -> u64 {
    7
}
fn default_amplitude() -> f64 {
    0.05
}
fn default_sweep() -> Vec<f64> {
    vec![4e-3, 2e-3, 1e-3, 5e-4]
}
fn default_budget() -> usize {
    400
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig {
            random_fields: default_random_fields(),
            tau: default_tau(),
            seed: default_seed(),
            amplitude: default_amplitude(),
            tau_sweep: default_sweep(),
            max_cell_solves: default_budget(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub field: String,
    pub taus: Vec<f64>,
    pub remainders: Vec<f64>,
    pub order: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub rows: Vec<AuditRow>,
    pub sweeps: Vec<SweepResult>,
    pub max_rel_error: f64,
    pub min_order: f64,
    pub cell_solves: usize,
}

/// Formula against oracle for random periodic fields, all state fields and a zero field.
pub fn run_audit<T: Real>(
    mesh: &CellMesh<T>,
    mat: &MaterialSet<T>,
    cfg: &AuditConfig,
) -> Result<AuditReport, SensitivityError> {
    use rand::SeedableRng;
    let n_state = 4 + mesh.n_conductors();
    let n_fields = cfg.random_fields + n_state;
    let needed = 3 + n_fields * (2 + cfg.tau_sweep.len());
    if needed > cfg.max_cell_solves {
        return Err(SensitivityError::OracleBudgetExceeded { needed, budget: cfg.max_cell_solves });
    }
    let hom = homogenize(mesh, mat)?;
    let forms = CellForms::new(mesh, mat)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut fields: Vec<(String, VelocityField<T>)> = Vec::new();
    for r in 0..cfg.random_fields {
        let raw = VelocityField::new(mesh, random_periodic_field(mesh, &mut rng, cfg.amplitude))?;
        fields.push((format!("random{}", r + 1), extend_into_fluid(&forms, &raw)?));
    }
    // state directions carry physical units; the audit compares unit-size directions
    fields.extend(state_velocities(&forms, &hom)?.into_iter().map(|(n, v)| (n, v.normalized())));
    fields.push(("zero".to_string(), VelocityField::new(mesh, vec![[T::zero(); 2]; mesh.n_nodes()])?));
    let tau = T::lit(cfg.tau);
    let results: Vec<_> = fields
        .par_iter()
        .map(|(label, v)| -> Result<_, SensitivityError> {
            let formula = coefficient_gradient(&forms, mat, &hom, v);
            let fd = fd_gradient(mesh, mat, v, tau)?;
            let mut sweep = None;
            if !cfg.tau_sweep.is_empty() && label != "zero" {
                let mut rem = Vec::new();
                for &t in &cfg.tau_sweep {
                    rem.push(taylor_remainder(mesh, mat, &hom.coeffs, &formula, v, T::lit(t))?);
                }
                let order = convergence_order(&cfg.tau_sweep, &rem);
                sweep = Some(SweepResult { field: label.clone(), taus: cfg.tau_sweep.clone(), remainders: rem, order });
            }
            Ok(((label.clone(), formula, fd), sweep))
        })
        .collect::<Result<_, _>>()?;
    let mut cases = Vec::new();
    let mut sweeps = Vec::new();
    let mut solves = 1;
    for (case, sweep) in results {
        solves += 2;
        cases.push(case);
        if let Some(sw) = sweep {
            solves += sw.taus.len();
            sweeps.push(sw);
        }
    }
    let rows = compare(&cases, &hom.coeffs);
    let max_rel_error = rows.iter().fold(0.0f64, |m, r| m.max(r.rel_error));
    let min_order = sweeps.iter().fold(f64::INFINITY, |m, s| m.min(s.order));
    Ok(AuditReport { rows, sweeps, max_rel_error, min_order, cell_solves: solves })
}
