//! Cell bilinear forms on P1 fields, normalized by the cell measure.

use crate::materials::{Coupling, MaterialSet, Voigt3};
use crate::mesh::{CellMesh, FacetGeometry, FacetTag, MeshError, Region};
use crate::scalar::{dot2, Mat2, Real, Vec2};

pub type VectorField<T> = Vec<Vec2<T>>;
pub type ScalarField<T> = Vec<T>;

/// Area and barycentric gradients of a linear triangle.
#[derive(Clone, Copy, Debug)]
pub struct P1Element<T> {
    pub area: T,
    pub grads: [Vec2<T>; 3],
}

impl<T: Real> P1Element<T> {
    pub fn new(p: [Vec2<T>; 3]) -> Self {
        let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
        let inv = T::one() / det;
        let grads = [
            [(p[1][1] - p[2][1]) * inv, (p[2][0] - p[1][0]) * inv],
            [(p[2][1] - p[0][1]) * inv, (p[0][0] - p[2][0]) * inv],
            [(p[0][1] - p[1][1]) * inv, (p[1][0] - p[0][0]) * inv],
        ];
        P1Element { area: T::lit(0.5) * det, grads }
    }
}

/// Engineering Voigt strain `[m00, m11, m01 + m10]` of a gradient matrix `m[k][s] = d_s u_k`.
#[inline]
pub fn voigt<T: Real>(m: &Mat2<T>) -> [T; 3] {
    [m[0][0], m[1][1], m[0][1] + m[1][0]]
}

#[inline]
pub fn mat3_apply<T: Real>(c: &Voigt3<T>, e: [T; 3]) -> [T; 3] {
    [
        c[0][0] * e[0] + c[0][1] * e[1] + c[0][2] * e[2],
        c[1][0] * e[0] + c[1][1] * e[1] + c[1][2] * e[2],
        c[2][0] * e[0] + c[2][1] * e[1] + c[2][2] * e[2],
    ]
}

#[inline]
pub fn dot3<T: Real>(a: [T; 3], b: [T; 3]) -> T {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn coupling_apply<T: Real>(g: &Coupling<T>, e: [T; 3]) -> Vec2<T> {
    [g[0][0] * e[0] + g[0][1] * e[1] + g[0][2] * e[2], g[1][0] * e[0] + g[1][1] * e[1] + g[1][2] * e[2]]
}

/// Unit Voigt strain mode `I` as a symmetric displacement gradient.
pub fn unit_strain<T: Real>(mode: usize) -> Mat2<T> {
    let (o, z, h) = (T::one(), T::zero(), T::lit(0.5));
    match mode {
        0 => [[o, z], [z, z]],
        1 => [[z, z], [z, o]],
        _ => [[z, h], [h, z]],
    }
}

/// Affine field with gradient `grad`, vanishing at the origin, sampled at the nodes.
pub fn affine_field<T: Real>(mesh: &CellMesh<T>, grad: &Mat2<T>) -> VectorField<T> {
    mesh.nodes
        .iter()
        .map(|p| [grad[0][0] * p[0] + grad[0][1] * p[1], grad[1][0] * p[0] + grad[1][1] * p[1]])
        .collect()
}

/// Scaled constitutive data and element geometry of one cell.
#[derive(Clone, Debug)]
pub struct CellForms<'m, T> {
    pub mesh: &'m CellMesh<T>,
    pub elements: Vec<P1Element<T>>,
    /// `|Y|`
    pub measure: T,
    pub facets: Vec<FacetGeometry<T>>,
    elasticity_piezo: Voigt3<T>,
    elasticity_elastic: Voigt3<T>,
    elasticity_conductor: Voigt3<T>,
    coupling: Coupling<T>,
    permittivity_piezo: Mat2<T>,
    permittivity_elastic: Mat2<T>,
}

impl<'m, T: Real> CellForms<'m, T> {
    pub fn new(mesh: &'m CellMesh<T>, mat: &MaterialSet<T>) -> Result<Self, MeshError> {
        let elements: Vec<P1Element<T>> = mesh
            .elements
            .iter()
            .map(|el| P1Element::new([mesh.nodes[el.verts[0]], mesh.nodes[el.verts[1]], mesh.nodes[el.verts[2]]]))
            .collect();
        let measure = elements.iter().map(|e| e.area).sum();
        Ok(CellForms {
            mesh,
            elements,
            measure,
            facets: mesh.facet_geometry()?,
            elasticity_piezo: mat.matrix_piezo.elasticity,
            elasticity_elastic: mat.matrix_elastic.elasticity,
            elasticity_conductor: mat.conductor,
            coupling: mat.scaled_coupling(),
            permittivity_piezo: mat.scale_permittivity(&mat.matrix_piezo.permittivity),
            permittivity_elastic: mat.scale_permittivity(&mat.matrix_elastic.permittivity),
        })
    }

    #[inline]
    pub fn region(&self, e: usize) -> Region {
        self.mesh.elements[e].region
    }

    pub fn elasticity(&self, e: usize) -> Option<&Voigt3<T>> {
        match self.region(e) {
            Region::MatrixPiezo => Some(&self.elasticity_piezo),
            Region::MatrixElastic => Some(&self.elasticity_elastic),
            Region::Conductor(_) => Some(&self.elasticity_conductor),
            Region::Fluid => None,
        }
    }

    pub fn coupling(&self, e: usize) -> Option<&Coupling<T>> {
        (self.region(e) == Region::MatrixPiezo).then_some(&self.coupling)
    }

    pub fn permittivity(&self, e: usize) -> Option<&Mat2<T>> {
        match self.region(e) {
            Region::MatrixPiezo => Some(&self.permittivity_piezo),
            Region::MatrixElastic => Some(&self.permittivity_elastic),
            _ => None,
        }
    }

    /// Element weight `|T| / |Y|`.
    #[inline]
    pub fn weight(&self, e: usize) -> T {
        self.elements[e].area / self.measure
    }

    /// `g[k][s] = d_s u_k` on element `e`.
    #[inline]
    pub fn grad_vector(&self, e: usize, u: &[Vec2<T>]) -> Mat2<T> {
        let el = &self.elements[e];
        let v = self.mesh.elements[e].verts;
        let mut g = [[T::zero(); 2]; 2];
        for a in 0..3 {
            for k in 0..2 {
                for s in 0..2 {
                    g[k][s] += u[v[a]][k] * el.grads[a][s];
                }
            }
        }
        g
    }

    #[inline]
    pub fn grad_scalar(&self, e: usize, phi: &[T]) -> Vec2<T> {
        let el = &self.elements[e];
        let v = self.mesh.elements[e].verts;
        let mut g = [T::zero(); 2];
        for a in 0..3 {
            g[0] += phi[v[a]] * el.grads[a][0];
            g[1] += phi[v[a]] * el.grads[a][1];
        }
        g
    }

    /// `a(u, v)` over the solid part.
    pub fn a(&self, u: &[Vec2<T>], v: &[Vec2<T>]) -> T {
        (0..self.elements.len())
            .filter_map(|e| {
                let c = self.elasticity(e)?;
                let su = mat3_apply(c, voigt(&self.grad_vector(e, u)));
                Some(self.weight(e) * dot3(su, voigt(&self.grad_vector(e, v))))
            })
            .sum()
    }

    /// `a` with the gradient of `u` replaced by the constant `gu`.
    pub fn a_const(&self, gu: &Mat2<T>, v: &[Vec2<T>]) -> T {
        (0..self.elements.len())
            .filter_map(|e| {
                let c = self.elasticity(e)?;
                Some(self.weight(e) * dot3(mat3_apply(c, voigt(gu)), voigt(&self.grad_vector(e, v))))
            })
            .sum()
    }

    /// `g(u, psi)` over the piezo matrix.
    pub fn g(&self, u: &[Vec2<T>], psi: &[T]) -> T {
        (0..self.elements.len())
            .filter_map(|e| {
                let g = self.coupling(e)?;
                let d = coupling_apply(g, voigt(&self.grad_vector(e, u)));
                Some(self.weight(e) * dot2(d, self.grad_scalar(e, psi)))
            })
            .sum()
    }

    pub fn g_const(&self, gu: &Mat2<T>, psi: &[T]) -> T {
        (0..self.elements.len())
            .filter_map(|e| {
                let g = self.coupling(e)?;
                Some(self.weight(e) * dot2(coupling_apply(g, voigt(gu)), self.grad_scalar(e, psi)))
            })
            .sum()
    }

    /// `d(phi, psi)` over the dielectric matrix.
    pub fn d(&self, phi: &[T], psi: &[T]) -> T {
        (0..self.elements.len())
            .filter_map(|e| {
                let k = self.permittivity(e)?;
                let gp = self.grad_scalar(e, phi);
                let gq = self.grad_scalar(e, psi);
                Some(self.weight(e) * dot2([k[0][0] * gp[0] + k[0][1] * gp[1], k[1][0] * gp[0] + k[1][1] * gp[1]], gq))
            })
            .sum()
    }

    /// Mean divergence over the solid part.
    pub fn solid_div_mean(&self, u: &[Vec2<T>]) -> T {
        (0..self.elements.len())
            .filter(|&e| self.region(e).is_solid())
            .map(|e| {
                let g = self.grad_vector(e, u);
                self.weight(e) * (g[0][0] + g[1][1])
            })
            .sum()
    }

    /// Pore wall flux of a periodic field, volume form: `-mean_{solid} div u`.
    pub fn wall_flux(&self, u: &[Vec2<T>]) -> T {
        -self.solid_div_mean(u)
    }

    /// Pore wall flux by facet quadrature, normal pointing from the fluid into the solid.
    pub fn wall_flux_facets(&self, u: &[Vec2<T>]) -> T {
        let half = T::lit(0.5);
        self.facets
            .iter()
            .filter(|f| f.tag == FacetTag::FluidSolid)
            .map(|f| {
                let m = [(u[f.verts[0]][0] + u[f.verts[1]][0]) * half, (u[f.verts[0]][1] + u[f.verts[1]][1]) * half];
                f.length * dot2(m, f.normal)
            })
            .sum::<T>()
            / self.measure
    }

    /// Mean of `psi` over the pore walls of the dielectric matrix.
    pub fn wall_mean(&self, psi: &[T]) -> T {
        let half = T::lit(0.5);
        self.facets
            .iter()
            .filter(|f| f.tag == FacetTag::FluidSolid && self.region(f.element).is_matrix())
            .map(|f| f.length * (psi[f.verts[0]] + psi[f.verts[1]]) * half)
            .sum::<T>()
            / self.measure
    }

    /// Volume average over the solid part.
    pub fn solid_mean(&self, u: &[Vec2<T>]) -> Vec2<T> {
        let third = T::one() / T::lit(3.0);
        let mut m = [T::zero(); 2];
        let mut vol = T::zero();
        for e in 0..self.elements.len() {
            if self.region(e).is_fluid() {
                continue;
            }
            let a = self.elements[e].area;
            vol += a;
            for &n in &self.mesh.elements[e].verts {
                m[0] += a * third * u[n][0];
                m[1] += a * third * u[n][1];
            }
        }
        [m[0] / vol, m[1] / vol]
    }

    /// Element stiffness for dofs `(u1, u2)` of vertex 0, 1, 2.
    pub fn element_a(&self, e: usize) -> Option<[[T; 6]; 6]> {
        let c = self.elasticity(e)?;
        let b = self.strain_matrix(e);
        let w = self.weight(e);
        let mut k = [[T::zero(); 6]; 6];
        for i in 0..6 {
            for j in 0..6 {
                k[i][j] = w * dot3(b[i], mat3_apply(c, b[j]));
            }
        }
        Some(k)
    }

    /// Rows: potential test functions; columns: displacement dofs.
    pub fn element_g(&self, e: usize) -> Option<[[T; 6]; 3]> {
        let g = self.coupling(e)?;
        let b = self.strain_matrix(e);
        let w = self.weight(e);
        let grads = self.elements[e].grads;
        let mut k = [[T::zero(); 6]; 3];
        for (a, ga) in grads.iter().enumerate() {
            for j in 0..6 {
                k[a][j] = w * dot2(coupling_apply(g, b[j]), *ga);
            }
        }
        Some(k)
    }

    pub fn element_d(&self, e: usize) -> Option<[[T; 3]; 3]> {
        let d = self.permittivity(e)?;
        let grads = self.elements[e].grads;
        let w = self.weight(e);
        let mut k = [[T::zero(); 3]; 3];
        for a in 0..3 {
            for b in 0..3 {
                let db = [d[0][0] * grads[b][0] + d[0][1] * grads[b][1], d[1][0] * grads[b][0] + d[1][1] * grads[b][1]];
                k[a][b] = w * dot2(grads[a], db);
            }
        }
        Some(k)
    }

    /// Voigt strains of the six displacement basis functions.
    fn strain_matrix(&self, e: usize) -> [[T; 3]; 6] {
        let g = self.elements[e].grads;
        let z = T::zero();
        let mut b = [[z; 3]; 6];
        for a in 0..3 {
            b[2 * a] = [g[a][0], z, g[a][1]];
            b[2 * a + 1] = [z, g[a][1], g[a][0]];
        }
        b
    }
}
