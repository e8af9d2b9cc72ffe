//! Corrector problems of the periodic cell.
//!
//! The coupled electro-mechanical system is assembled in the symmetric form
//! `[A, -G^T; -G, -D]`. Rigid translations (and the constant potential when no
//! electrode is present) are removed by pinning one node and shifting the solution to zero mean.

use thiserror::Error;

use crate::forms::{affine_field, unit_strain, CellForms, ScalarField, VectorField};
use crate::linalg::{BandedLu, Csr, LinalgError, Triplets};
use crate::mesh::{CellMesh, EdgeTopology, MeshError, Region};
use crate::quadrature::{triangle_rule, TriPoint};
use crate::scalar::{Real, Vec2};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CellProblemError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("singular cell system ({system}): {source}")]
    SingularSystem { system: &'static str, source: LinalgError },
    #[error("the cell has no solid part")]
    NoSolid,
}

/// Displacement and potential of one electro-mechanical corrector.
#[derive(Clone, Debug)]
pub struct PiezoCorrector<T> {
    pub u: VectorField<T>,
    pub eta: ScalarField<T>,
}

/// Dof numbering of the coupled system on periodic node classes.
#[derive(Clone, Debug)]
pub struct PiezoDofs {
    pub classes: Vec<usize>,
    /// First of the two displacement dofs of a class.
    pub u: Vec<Option<usize>>,
    pub eta: Vec<Option<usize>>,
    pub solid: Vec<bool>,
    pub matrix: Vec<bool>,
    /// Conductor index whose surface carries the class, if any.
    pub electrode: Vec<Option<usize>>,
    pub eta_pinned: bool,
    pub n: usize,
}

impl PiezoDofs {
    pub fn new<T: Real>(mesh: &CellMesh<T>) -> Result<Self, CellProblemError> {
        let classes = mesh.node_classes();
        let nn = mesh.n_nodes();
        let mut solid = vec![false; nn];
        let mut matrix = vec![false; nn];
        let mut conductor: Vec<Option<usize>> = vec![None; nn];
        for el in &mesh.elements {
            for &v in &el.verts {
                let c = classes[v];
                match el.region {
                    Region::Fluid => {}
                    Region::Conductor(a) => {
                        solid[c] = true;
                        conductor[c] = Some(a);
                    }
                    _ => {
                        solid[c] = true;
                        matrix[c] = true;
                    }
                }
            }
        }
        let electrode: Vec<Option<usize>> = (0..nn).map(|c| if matrix[c] { conductor[c] } else { None }).collect();
        let pin_u = (0..nn).find(|&c| classes[c] == c && solid[c]).ok_or(CellProblemError::NoSolid)?;
        let has_electrode = electrode.iter().any(Option::is_some);
        let pin_eta = if has_electrode { None } else { (0..nn).find(|&c| classes[c] == c && matrix[c]) };
        let mut n = 0;
        let mut u = vec![None; nn];
        let mut eta = vec![None; nn];
        for c in 0..nn {
            if classes[c] != c {
                continue;
            }
            if solid[c] && c != pin_u {
                u[c] = Some(n);
                n += 2;
            }
            if matrix[c] && electrode[c].is_none() && Some(c) != pin_eta {
                eta[c] = Some(n);
                n += 1;
            }
        }
        Ok(PiezoDofs { classes, u, eta, solid, matrix, electrode, eta_pinned: pin_eta.is_some(), n })
    }

    pub fn u_dof(&self, node: usize) -> Option<usize> {
        self.u[self.classes[node]]
    }

    pub fn eta_dof(&self, node: usize) -> Option<usize> {
        self.eta[self.classes[node]]
    }

    pub fn is_solid(&self, node: usize) -> bool {
        self.solid[self.classes[node]]
    }

    pub fn is_matrix(&self, node: usize) -> bool {
        self.matrix[self.classes[node]]
    }

    pub fn electrode_of(&self, node: usize) -> Option<usize> {
        self.electrode[self.classes[node]]
    }
}

/// Factorized coupled system of one cell.
pub struct PiezoSystem<T> {
    pub dofs: PiezoDofs,
    matrix: Csr<T>,
    lu: BandedLu<T>,
}

impl<T: Real> PiezoSystem<T> {
    pub fn assemble(forms: &CellForms<'_, T>) -> Result<Self, CellProblemError> {
        let mesh = forms.mesh;
        let dofs = PiezoDofs::new(mesh)?;
        let mut trip = Triplets::new(dofs.n);
        for e in 0..mesh.n_elements() {
            let verts = mesh.elements[e].verts;
            let ud: Vec<Option<usize>> =
                (0..6).map(|j| dofs.u_dof(verts[j / 2]).map(|d| d + j % 2)).collect();
            let ed: Vec<Option<usize>> = (0..3).map(|a| dofs.eta_dof(verts[a])).collect();
            if let Some(k) = forms.element_a(e) {
                for i in 0..6 {
                    for j in 0..6 {
                        if let (Some(r), Some(c)) = (ud[i], ud[j]) {
                            trip.add(r, c, k[i][j]);
                        }
                    }
                }
            }
            if let Some(g) = forms.element_g(e) {
                for a in 0..3 {
                    for j in 0..6 {
                        if let (Some(r), Some(c)) = (ed[a], ud[j]) {
                            trip.add(r, c, -g[a][j]);
                            trip.add(c, r, -g[a][j]);
                        }
                    }
                }
            }
            if let Some(d) = forms.element_d(e) {
                for a in 0..3 {
                    for b in 0..3 {
                        if let (Some(r), Some(c)) = (ed[a], ed[b]) {
                            trip.add(r, c, -d[a][b]);
                        }
                    }
                }
            }
        }
        let matrix = trip.to_csr();
        let lu = BandedLu::factor(&matrix)
            .map_err(|source| CellProblemError::SingularSystem { system: "piezo", source })?;
        Ok(PiezoSystem { dofs, matrix, lu })
    }

    /// Solves `B((u, eta), t) = load(t)` with `(u, eta) - lift` in the test space;
    /// returns the zero mean displacement and the full potential.
    pub fn solve(
        &self,
        forms: &CellForms<'_, T>,
        lift_u: Option<&[Vec2<T>]>,
        lift_eta: Option<&[T]>,
        load_u: Option<&[Vec2<T>]>,
        load_eta: Option<&[T]>,
    ) -> PiezoCorrector<T> {
        let mesh = forms.mesh;
        let nn = mesh.n_nodes();
        let zero_u = vec![[T::zero(); 2]; nn];
        let zero_e = vec![T::zero(); nn];
        let lu_f = lift_u.unwrap_or(&zero_u);
        let le_f = lift_eta.unwrap_or(&zero_e);
        let (ru, re) = coupled_residual(forms, lu_f, le_f);
        let mut b = vec![T::zero(); self.dofs.n];
        for node in 0..nn {
            if let Some(d) = self.dofs.u_dof(node) {
                for k in 0..2 {
                    b[d + k] -= ru[node][k];
                    if let Some(l) = load_u {
                        b[d + k] += l[node][k];
                    }
                }
            }
            if let Some(d) = self.dofs.eta_dof(node) {
                b[d] -= re[node];
                if let Some(l) = load_eta {
                    b[d] += l[node];
                }
            }
        }
        let x = self.lu.solve_refined(&self.matrix, &b, 2);
        let mut u = vec![[T::zero(); 2]; nn];
        let mut eta = vec![T::zero(); nn];
        for node in 0..nn {
            if let Some(d) = self.dofs.u_dof(node) {
                u[node] = [x[d], x[d + 1]];
            }
            if let Some(d) = self.dofs.eta_dof(node) {
                eta[node] = x[d];
            }
        }
        let m = forms.solid_mean(&u);
        for node in 0..nn {
            if self.dofs.is_solid(node) {
                u[node][0] -= m[0];
                u[node][1] -= m[1];
            }
        }
        if self.dofs.eta_pinned {
            let mean = matrix_mean(forms, &eta);
            for node in 0..nn {
                if self.dofs.is_matrix(node) {
                    eta[node] -= mean;
                }
            }
        }
        for node in 0..nn {
            if lift_eta.is_some() && self.dofs.eta_dof(node).is_none() {
                eta[node] = le_f[node];
            }
        }
        PiezoCorrector { u, eta }
    }
}

fn matrix_mean<T: Real>(forms: &CellForms<'_, T>, eta: &[T]) -> T {
    let third = T::one() / T::lit(3.0);
    let (mut s, mut v) = (T::zero(), T::zero());
    for e in 0..forms.elements.len() {
        if forms.region(e).is_matrix() {
            let a = forms.elements[e].area;
            v += a;
            for &n in &forms.mesh.elements[e].verts {
                s += a * third * eta[n];
            }
        }
    }
    s / v
}

/// Nodal residuals `B((u, eta), (N e_k, 0))` and `B((u, eta), (0, N))`.
pub fn coupled_residual<T: Real>(
    forms: &CellForms<'_, T>,
    u: &[Vec2<T>],
    eta: &[T],
) -> (VectorField<T>, ScalarField<T>) {
    let mesh = forms.mesh;
    let mut ru = vec![[T::zero(); 2]; mesh.n_nodes()];
    let mut re = vec![T::zero(); mesh.n_nodes()];
    for e in 0..mesh.n_elements() {
        let v = mesh.elements[e].verts;
        let ul: [T; 6] = std::array::from_fn(|j| u[v[j / 2]][j % 2]);
        let el: [T; 3] = std::array::from_fn(|a| eta[v[a]]);
        if let Some(k) = forms.element_a(e) {
            for i in 0..6 {
                ru[v[i / 2]][i % 2] += (0..6).map(|j| k[i][j] * ul[j]).sum::<T>();
            }
        }
        if let Some(g) = forms.element_g(e) {
            for j in 0..6 {
                ru[v[j / 2]][j % 2] -= (0..3).map(|a| g[a][j] * el[a]).sum::<T>();
            }
            for a in 0..3 {
                re[v[a]] -= (0..6).map(|j| g[a][j] * ul[j]).sum::<T>();
            }
        }
        if let Some(d) = forms.element_d(e) {
            for a in 0..3 {
                re[v[a]] -= (0..3).map(|b| d[a][b] * el[b]).sum::<T>();
            }
        }
    }
    (ru, re)
}

/// All electro-mechanical correctors of a cell.
#[derive(Clone, Debug)]
pub struct PiezoCorrectors<T> {
    /// Periodic fluctuations for the Voigt strain modes `11, 22, 12`.
    pub strain: Vec<PiezoCorrector<T>>,
    pub pressure: PiezoCorrector<T>,
    pub charge: PiezoCorrector<T>,
    /// Per electrode: displacement and the potential equal to one on that electrode.
    pub electrodes: Vec<PiezoCorrector<T>>,
}

impl<T: Real> PiezoCorrectors<T> {
    /// `Pi + omega` for strain mode `mode`.
    pub fn strain_total(&self, mesh: &CellMesh<T>, mode: usize) -> VectorField<T> {
        let pi = affine_field(mesh, &unit_strain(mode));
        pi.iter().zip(&self.strain[mode].u).map(|(p, w)| [p[0] + w[0], p[1] + w[1]]).collect()
    }
}

pub fn solve_piezo<T: Real>(forms: &CellForms<'_, T>) -> Result<(PiezoCorrectors<T>, PiezoDofs), CellProblemError> {
    let sys = PiezoSystem::assemble(forms)?;
    let mesh = forms.mesh;
    let strain = (0..3)
        .map(|mode| {
            let pi = affine_field(mesh, &unit_strain(mode));
            sys.solve(forms, Some(&pi), None, None, None)
        })
        .collect();
    let pressure = sys.solve(forms, None, None, Some(&pressure_load(forms)), None);
    let charge_load: Vec<T> = wall_load(forms).iter().map(|v| -*v).collect();
    let charge = sys.solve(forms, None, None, None, Some(&charge_load));
    let electrodes = (1..=mesh.n_conductors())
        .map(|alpha| {
            let lift: Vec<T> = (0..mesh.n_nodes())
                .map(|n| if sys.dofs.electrode_of(n) == Some(alpha) { T::one() } else { T::zero() })
                .collect();
            sys.solve(forms, None, Some(&lift), None, None)
        })
        .collect();
    Ok((PiezoCorrectors { strain, pressure, charge, electrodes }, sys.dofs))
}

/// Nodal load `-F(N e_k) = mean_{solid} d_k N`.
fn pressure_load<T: Real>(forms: &CellForms<'_, T>) -> VectorField<T> {
    let mesh = forms.mesh;
    let mut f = vec![[T::zero(); 2]; mesh.n_nodes()];
    for e in 0..mesh.n_elements() {
        if forms.region(e).is_fluid() {
            continue;
        }
        let w = forms.weight(e);
        for (a, &n) in mesh.elements[e].verts.iter().enumerate() {
            f[n][0] += w * forms.elements[e].grads[a][0];
            f[n][1] += w * forms.elements[e].grads[a][1];
        }
    }
    f
}

/// Nodal values of `mean_{walls} N` over the dielectric pore walls.
fn wall_load<T: Real>(forms: &CellForms<'_, T>) -> ScalarField<T> {
    let mut f = vec![T::zero(); forms.mesh.n_nodes()];
    let half = T::lit(0.5);
    for fc in &forms.facets {
        if fc.tag == crate::mesh::FacetTag::FluidSolid && forms.region(fc.element).is_matrix() {
            for &n in &fc.verts {
                f[n] += half * fc.length / forms.measure;
            }
        }
    }
    f
}

/// Quadratic Lagrange space on the fluid elements. Vertex values are stored per
/// mesh node, mid-edge values per periodic edge id.
#[derive(Clone, Debug)]
pub struct P2Space {
    pub topology: EdgeTopology,
    pub fluid_elements: Vec<usize>,
    pub classes: Vec<usize>,
    pub n_vertices: usize,
}

impl P2Space {
    /// Storage index of local node `l` (0..3 vertices, 3..6 edges `(0,1), (1,2), (2,0)`) of element `e`.
    #[inline]
    pub fn local<T>(&self, mesh: &CellMesh<T>, e: usize, l: usize) -> usize {
        if l < 3 {
            mesh.elements[e].verts[l]
        } else {
            self.n_vertices + self.topology.element_edges[e][l - 3]
        }
    }

    /// Periodic class of a storage index.
    #[inline]
    pub fn class_of(&self, s: usize) -> usize {
        if s < self.n_vertices {
            self.classes[s]
        } else {
            s
        }
    }

    pub fn len(&self) -> usize {
        self.n_vertices + self.topology.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fluid_elements.is_empty()
    }
}

/// Values and gradients of the six quadratic basis functions at a barycentric point.
pub fn p2_basis<T: Real>(bary: [T; 3], grads: &[Vec2<T>; 3]) -> ([T; 6], [Vec2<T>; 6]) {
    let (one, two, four) = (T::one(), T::lit(2.0), T::lit(4.0));
    let l = bary;
    let mut val = [T::zero(); 6];
    let mut grad = [[T::zero(); 2]; 6];
    for i in 0..3 {
        val[i] = l[i] * (two * l[i] - one);
        let f = four * l[i] - one;
        grad[i] = [f * grads[i][0], f * grads[i][1]];
    }
    for (k, (i, j)) in [(0, 1), (1, 2), (2, 0)].into_iter().enumerate() {
        val[3 + k] = four * l[i] * l[j];
        grad[3 + k] = [
            four * (l[i] * grads[j][0] + l[j] * grads[i][0]),
            four * (l[i] * grads[j][1] + l[j] * grads[i][1]),
        ];
    }
    (val, grad)
}

/// Cell Stokes solutions for unit forces along `y1` and `y2` (unit viscosity).
#[derive(Clone, Debug)]
pub struct StokesSolution<T> {
    pub space: P2Space,
    /// `velocity[k]` responds to the force `e_k`; storage per [`P2Space`].
    pub velocity: [Vec<Vec2<T>>; 2],
    /// P1 pressure per mesh node.
    pub pressure: [ScalarField<T>; 2],
    pub components: usize,
}

pub fn stokes_rule<T: Real>() -> Vec<TriPoint<T>> {
    triangle_rule(4)
}

/// Solves the fluid cell problems; `None` when the cell has no fluid.
pub fn solve_stokes<T: Real>(forms: &CellForms<'_, T>) -> Result<Option<StokesSolution<T>>, CellProblemError> {
    let mesh = forms.mesh;
    let fluid_elements: Vec<usize> = (0..mesh.n_elements()).filter(|&e| forms.region(e).is_fluid()).collect();
    if fluid_elements.is_empty() {
        return Ok(None);
    }
    let topology = mesh.edge_topology()?;
    let classes = mesh.node_classes();
    let nn = mesh.n_nodes();
    let space = P2Space { topology, fluid_elements, classes: classes.clone(), n_vertices: nn };

    let mut touches_fluid = vec![false; space.len()];
    let mut touches_solid = vec![false; space.len()];
    for e in 0..mesh.n_elements() {
        let fluid = forms.region(e).is_fluid();
        for l in 0..6 {
            let c = space.class_of(space.local(mesh, e, l));
            if fluid {
                touches_fluid[c] = true;
            } else {
                touches_solid[c] = true;
            }
        }
    }
    // a mid-edge node is on the wall only if its edge is, vertices whenever both sides meet
    let mut vel_dof = vec![None; space.len()];
    let mut n = 0;
    for c in 0..space.len() {
        let is_class = c >= nn || space.classes[c] == c;
        if is_class && touches_fluid[c] && !touches_solid[c] {
            vel_dof[c] = Some(n);
            n += 2;
        }
    }
    // pressure: union-find of fluid vertex classes for the connected components
    let mut parent: Vec<usize> = (0..nn).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for &e in &space.fluid_elements {
        let v = mesh.elements[e].verts.map(|x| classes[x]);
        for k in 1..3 {
            let (a, b) = (find(&mut parent, v[0]), find(&mut parent, v[k]));
            parent[a] = b;
        }
    }
    let mut p_dof = vec![None; nn];
    let mut pinned_roots: Vec<usize> = Vec::new();
    let mut fluid_vertex = vec![false; nn];
    for &e in &space.fluid_elements {
        for &v in &mesh.elements[e].verts {
            fluid_vertex[classes[v]] = true;
        }
    }
    for c in 0..nn {
        if classes[c] != c || !fluid_vertex[c] {
            continue;
        }
        let r = find(&mut parent, c);
        if pinned_roots.contains(&r) {
            p_dof[c] = Some(n);
            n += 1;
        } else {
            pinned_roots.push(r);
        }
    }
    let components = pinned_roots.len();
    if components > 1 {
        log::warn!("DisconnectedFluidWarning: the fluid part has {components} components");
    }

    let rule = stokes_rule::<T>();
    let mut trip = Triplets::new(n);
    let mut rhs = [vec![T::zero(); n], vec![T::zero(); n]];
    for &e in &space.fluid_elements {
        let el = &forms.elements[e];
        let w = forms.weight(e);
        let vd: [Option<usize>; 6] = std::array::from_fn(|l| vel_dof[space.class_of(space.local(mesh, e, l))]);
        let pd: [Option<usize>; 3] = std::array::from_fn(|a| p_dof[classes[mesh.elements[e].verts[a]]]);
        for q in &rule {
            let (val, grad) = p2_basis(q.bary, &el.grads);
            let wq = w * q.weight;
            for a in 0..6 {
                let Some(ra) = vd[a] else { continue };
                for b in 0..6 {
                    if let Some(rb) = vd[b] {
                        let k = wq * (grad[a][0] * grad[b][0] + grad[a][1] * grad[b][1]);
                        trip.add(ra, rb, k);
                        trip.add(ra + 1, rb + 1, k);
                    }
                }
                for c in 0..3 {
                    if let Some(pc) = pd[c] {
                        for k in 0..2 {
                            let bv = -wq * q.bary[c] * grad[a][k];
                            trip.add(ra + k, pc, bv);
                            trip.add(pc, ra + k, bv);
                        }
                    }
                }
                rhs[0][ra] += wq * val[a];
                rhs[1][ra + 1] += wq * val[a];
            }
        }
    }
    let lu = BandedLu::factor(&trip.to_csr())
        .map_err(|source| CellProblemError::SingularSystem { system: "stokes", source })?;
    let solve = |k: usize| {
        let x = lu.solve(&rhs[k]);
        let mut vel = vec![[T::zero(); 2]; space.len()];
        for (s, v) in vel.iter_mut().enumerate() {
            if let Some(d) = vel_dof[space.class_of(s)] {
                *v = [x[d], x[d + 1]];
            }
        }
        let mut p = vec![T::zero(); nn];
        for (node, v) in p.iter_mut().enumerate() {
            if let Some(d) = p_dof[classes[node]] {
                *v = x[d];
            }
        }
        (vel, p)
    };
    let (v0, mut p0) = solve(0);
    let (v1, mut p1) = solve(1);
    for p in [&mut p0, &mut p1] {
        shift_pressure(forms, &space, &mut parent, p);
    }
    Ok(Some(StokesSolution { space, velocity: [v0, v1], pressure: [p0, p1], components }))
}

fn shift_pressure<T: Real>(forms: &CellForms<'_, T>, space: &P2Space, parent: &mut [usize], p: &mut [T]) {
    let mesh = forms.mesh;
    let third = T::one() / T::lit(3.0);
    let mut sums: Vec<(usize, T, T)> = Vec::new();
    for &e in &space.fluid_elements {
        let v = mesh.elements[e].verts;
        let mut r = space.classes[v[0]];
        while parent[r] != r {
            r = parent[r];
        }
        let a = forms.elements[e].area;
        let s = a * third * (p[v[0]] + p[v[1]] + p[v[2]]);
        match sums.iter_mut().find(|x| x.0 == r) {
            Some(x) => {
                x.1 += s;
                x.2 += a;
            }
            None => sums.push((r, s, a)),
        }
    }
    let mut fluid_vertex = vec![false; p.len()];
    for &e in &space.fluid_elements {
        for &v in &mesh.elements[e].verts {
            fluid_vertex[v] = true;
        }
    }
    for node in 0..p.len() {
        if !fluid_vertex[node] {
            continue;
        }
        let mut r = space.classes[node];
        while parent[r] != r {
            r = parent[r];
        }
        if let Some(x) = sums.iter().find(|x| x.0 == r) {
            p[node] -= x.1 / x.2;
        }
    }
}

impl<T: Real> StokesSolution<T> {
    /// `K_ij = mean_{fluid} w^j_i`.
    pub fn permeability(&self, forms: &CellForms<'_, T>) -> [[T; 2]; 2] {
        let mesh = forms.mesh;
        let third = T::one() / T::lit(3.0);
        let mut k = [[T::zero(); 2]; 2];
        for &e in &self.space.fluid_elements {
            let w = forms.weight(e);
            for l in 3..6 {
                let s = self.space.local(mesh, e, l);
                for j in 0..2 {
                    for i in 0..2 {
                        k[i][j] += w * third * self.velocity[j][s][i];
                    }
                }
            }
        }
        k
    }

    /// `max_q |mean q div w^k|` over the pressure basis functions.
    pub fn divergence_residual(&self, forms: &CellForms<'_, T>) -> T {
        let mesh = forms.mesh;
        let rule = stokes_rule::<T>();
        let mut acc = vec![[T::zero(); 2]; mesh.n_nodes()];
        for &e in &self.space.fluid_elements {
            let el = &forms.elements[e];
            let w = forms.weight(e);
            for q in &rule {
                let (_, grad) = p2_basis(q.bary, &el.grads);
                for k in 0..2 {
                    let mut div = T::zero();
                    for l in 0..6 {
                        let s = self.space.local(mesh, e, l);
                        div += self.velocity[k][s][0] * grad[l][0] + self.velocity[k][s][1] * grad[l][1];
                    }
                    for c in 0..3 {
                        acc[self.space.classes[mesh.elements[e].verts[c]]][k] += w * q.weight * q.bary[c] * div;
                    }
                }
            }
        }
        acc.iter().fold(T::zero(), |m, a| m.max(a[0].abs()).max(a[1].abs()))
    }
}
