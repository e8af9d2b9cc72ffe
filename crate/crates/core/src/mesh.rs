//! Periodic simplicial unit cells: regions, interface facets and periodic node pairing.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{Real, Vec2};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("channel degenerate: {0}")]
    ChannelDegenerate(String),
    #[error("region overlap: {0}")]
    RegionOverlap(String),
    #[error("resolution too coarse: {0}")]
    ResolutionTooCoarse(String),
    #[error("schema error: {0}")]
    SchemaError(String),
    #[error("periodicity error: {0}")]
    PeriodicityError(String),
    #[error("tag error: {0}")]
    TagError(String),
    #[error("element {element} inverted (signed area {area:e})")]
    ElementInversion { element: usize, area: f64 },
}

impl MeshError {
    pub fn kind(&self) -> &'static str {
        match self {
            MeshError::ChannelDegenerate(_) => "ChannelDegenerate",
            MeshError::RegionOverlap(_) => "RegionOverlap",
            MeshError::ResolutionTooCoarse(_) => "ResolutionTooCoarse",
            MeshError::SchemaError(_) => "SchemaError",
            MeshError::PeriodicityError(_) => "PeriodicityError",
            MeshError::TagError(_) => "TagError",
            MeshError::ElementInversion { .. } => "ElementInversion",
        }
    }
}

/// Material region of an element. Conductors are numbered from 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Region {
    MatrixPiezo,
    MatrixElastic,
    Conductor(usize),
    Fluid,
}

impl Region {
    pub fn is_fluid(self) -> bool {
        self == Region::Fluid
    }

    pub fn is_solid(self) -> bool {
        !self.is_fluid()
    }

    /// Dielectric matrix carrying the electric potential.
    pub fn is_matrix(self) -> bool {
        matches!(self, Region::MatrixPiezo | Region::MatrixElastic)
    }

    pub fn conductor(self) -> Option<usize> {
        match self {
            Region::Conductor(a) => Some(a),
            _ => None,
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Region::MatrixPiezo => write!(f, "matrix_piezo"),
            Region::MatrixElastic => write!(f, "matrix_elastic"),
            Region::Conductor(a) => write!(f, "conductor:{a}"),
            Region::Fluid => write!(f, "fluid"),
        }
    }
}

impl FromStr for Region {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "matrix_piezo" => Ok(Region::MatrixPiezo),
            "matrix_elastic" => Ok(Region::MatrixElastic),
            "fluid" => Ok(Region::Fluid),
            _ => match s.strip_prefix("conductor:").map(str::parse::<usize>) {
                Some(Ok(a)) if a >= 1 => Ok(Region::Conductor(a)),
                _ => Err(format!("unknown region '{s}'")),
            },
        }
    }
}

impl TryFrom<String> for Region {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<Region> for String {
    fn from(r: Region) -> String {
        r.to_string()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum FacetTag {
    FluidSolid,
    ConductorMatrix(usize),
}

impl fmt::Display for FacetTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FacetTag::FluidSolid => write!(f, "fluid_solid"),
            FacetTag::ConductorMatrix(a) => write!(f, "conductor_matrix:{a}"),
        }
    }
}

impl FromStr for FacetTag {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        if s == "fluid_solid" {
            return Ok(FacetTag::FluidSolid);
        }
        match s.strip_prefix("conductor_matrix:").map(str::parse::<usize>) {
            Some(Ok(a)) if a >= 1 => Ok(FacetTag::ConductorMatrix(a)),
            _ => Err(format!("unknown facet tag '{s}'")),
        }
    }
}

impl TryFrom<String> for FacetTag {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<FacetTag> for String {
    fn from(t: FacetTag) -> String {
        t.to_string()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Element {
    pub verts: [usize; 3],
    pub region: Region,
}

/// Interface facet; its normal points into `inward_region`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Facet {
    pub verts: [usize; 2],
    pub tag: FacetTag,
    pub inward_region: Region,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct CellMesh<T> {
    pub dimension: usize,
    pub nodes: Vec<Vec2<T>>,
    pub elements: Vec<Element>,
    pub facets: Vec<Facet>,
    /// `[master, slave]` node index pairs.
    pub periodic_pairs: Vec<[usize; 2]>,
}

/// Axis aligned rectangle `[min, max]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Rect<T> {
    pub min: Vec2<T>,
    pub max: Vec2<T>,
}

impl<T: Real> Rect<T> {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Rect { min: [T::lit(x0), T::lit(y0)], max: [T::lit(x1), T::lit(y1)] }
    }

    fn contains(&self, p: Vec2<T>) -> bool {
        p[0] > self.min[0] && p[0] < self.max[0] && p[1] > self.min[1] && p[1] < self.max[1]
    }

    fn intersects(&self, o: &Rect<T>) -> bool {
        self.min[0] <= o.max[0] && o.min[0] <= self.max[0] && self.min[1] <= o.max[1] && o.min[1] <= self.max[1]
    }
}

/// Horizontal channel around `y2 = 1/2`, piezo band, compliant frame and embedded electrodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct CanonicalGeometry<T> {
    pub channel_halfwidth: T,
    /// Relative amplitude of a `sin^2(pi y1)` widening of the channel.
    #[serde(default)]
    pub bulge: T,
    /// Elements with `|y2 - 1/2| < piezo_halfwidth` belong to the piezo matrix.
    pub piezo_halfwidth: T,
    pub electrodes: Vec<Rect<T>>,
}

impl<T: Real> CanonicalGeometry<T> {
    /// Two electrodes, one above and one below the channel.
    pub fn reference() -> Self {
        CanonicalGeometry {
            channel_halfwidth: T::lit(0.125),
            bulge: T::zero(),
            piezo_halfwidth: T::lit(0.375),
            electrodes: vec![Rect::new(0.25, 0.1875, 0.75, 0.25), Rect::new(0.25, 0.75, 0.75, 0.8125)],
        }
    }

    pub fn halfwidth_at(&self, x: T) -> T {
        let s = (T::PI() * x).sin();
        self.channel_halfwidth * (T::one() + self.bulge * s * s)
    }

    fn max_halfwidth(&self) -> T {
        self.channel_halfwidth * (T::one() + self.bulge.max(T::zero()))
    }

    pub fn classify(&self, c: Vec2<T>) -> Region {
        let half = T::lit(0.5);
        let dy = (c[1] - half).abs();
        if dy < self.halfwidth_at(c[0]) {
            return Region::Fluid;
        }
        if let Some(a) = self.electrodes.iter().position(|r| r.contains(c)) {
            return Region::Conductor(a + 1);
        }
        if dy < self.piezo_halfwidth {
            Region::MatrixPiezo
        } else {
            Region::MatrixElastic
        }
    }
}

/// Geometry of an interface facet as seen from the element it points into.
#[derive(Clone, Debug)]
pub struct FacetGeometry<T> {
    pub tag: FacetTag,
    /// Element on the `inward_region` side.
    pub element: usize,
    /// Node indices of the facet as used by `element`.
    pub verts: [usize; 2],
    pub length: T,
    /// Unit normal pointing into `element`.
    pub normal: Vec2<T>,
}

/// Periodic aware edge adjacency.
#[derive(Clone, Debug)]
pub struct EdgeTopology {
    /// Per edge, the `(element, local edge)` incidences.
    pub edges: Vec<Vec<(usize, usize)>>,
    /// Edge id of local edge `k` (vertices `k`, `k+1 mod 3`) of each element.
    pub element_edges: Vec<[usize; 3]>,
}

impl<T: Real> CellMesh<T> {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    /// Representative (master) node of each node's periodic class.
    pub fn node_classes(&self) -> Vec<usize> {
        let mut m: Vec<usize> = (0..self.nodes.len()).collect();
        for &[a, b] in &self.periodic_pairs {
            if a < m.len() && b < m.len() {
                m[b] = a;
            }
        }
        for i in 0..m.len() {
            let mut r = m[i];
            let mut guard = 0;
            while m[r] != r && guard < 4 {
                r = m[r];
                guard += 1;
            }
            m[i] = r;
        }
        m
    }

    pub fn signed_area(&self, e: usize) -> T {
        let [a, b, c] = self.elements[e].verts;
        let (p, q, r) = (self.nodes[a], self.nodes[b], self.nodes[c]);
        T::lit(0.5) * ((q[0] - p[0]) * (r[1] - p[1]) - (r[0] - p[0]) * (q[1] - p[1]))
    }

    pub fn centroid(&self, e: usize) -> Vec2<T> {
        let [a, b, c] = self.elements[e].verts;
        let third = T::one() / T::lit(3.0);
        [
            (self.nodes[a][0] + self.nodes[b][0] + self.nodes[c][0]) * third,
            (self.nodes[a][1] + self.nodes[b][1] + self.nodes[c][1]) * third,
        ]
    }

    /// Total measure of the elements whose region satisfies `pred`.
    pub fn measure_where(&self, pred: impl Fn(Region) -> bool) -> T {
        (0..self.elements.len()).filter(|&e| pred(self.elements[e].region)).map(|e| self.signed_area(e)).sum()
    }

    pub fn cell_measure(&self) -> T {
        self.measure_where(|_| true)
    }

    pub fn region_measures(&self) -> Vec<(Region, T)> {
        let mut out: Vec<(Region, T)> = Vec::new();
        for e in 0..self.elements.len() {
            let r = self.elements[e].region;
            let a = self.signed_area(e);
            match out.iter_mut().find(|(q, _)| *q == r) {
                Some(entry) => entry.1 += a,
                None => out.push((r, a)),
            }
        }
        out.sort_by(|a, b| a.0.cmp(&b.0));
        out
    }

    pub fn fluid_fraction(&self) -> T {
        self.measure_where(Region::is_fluid) / self.cell_measure()
    }

    /// Number of conductors, i.e. the largest conductor index present.
    pub fn n_conductors(&self) -> usize {
        self.elements.iter().filter_map(|e| e.region.conductor()).max().unwrap_or(0)
    }

    fn extent(&self) -> (Vec2<T>, Vec2<T>) {
        let mut lo = [T::infinity(); 2];
        let mut hi = [T::neg_infinity(); 2];
        for p in &self.nodes {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        (lo, hi)
    }

    pub fn edge_topology(&self) -> Result<EdgeTopology, MeshError> {
        let classes = self.node_classes();
        let (lo, hi) = self.extent();
        let tol = T::lit(0.1) * (hi[0] - lo[0]).min(hi[1] - lo[1]);
        let mut keyed: HashMap<(usize, usize), Vec<(Vec2<T>, usize)>> = HashMap::new();
        let mut edges: Vec<Vec<(usize, usize)>> = Vec::new();
        let mut element_edges = Vec::with_capacity(self.elements.len());
        for (e, el) in self.elements.iter().enumerate() {
            let mut ids = [0usize; 3];
            for k in 0..3 {
                let (a, b) = (el.verts[k], el.verts[(k + 1) % 3]);
                let (ca, cb) = (classes[a], classes[b]);
                if ca == cb {
                    return Err(MeshError::ResolutionTooCoarse(format!(
                        "element {e} has an edge joining a node to its own periodic image"
                    )));
                }
                let (p, q) = if ca < cb { (a, b) } else { (b, a) };
                let v = [self.nodes[q][0] - self.nodes[p][0], self.nodes[q][1] - self.nodes[p][1]];
                let list = keyed.entry((ca.min(cb), ca.max(cb))).or_default();
                let id = match list.iter().find(|(w, _)| (w[0] - v[0]).abs() < tol && (w[1] - v[1]).abs() < tol) {
                    Some(&(_, id)) => id,
                    None => {
                        edges.push(Vec::new());
                        list.push((v, edges.len() - 1));
                        edges.len() - 1
                    }
                };
                edges[id].push((e, k));
                ids[k] = id;
            }
            element_edges.push(ids);
        }
        Ok(EdgeTopology { edges, element_edges })
    }

    /// Resolves every tagged facet to the element it points into.
    pub fn facet_geometry(&self) -> Result<Vec<FacetGeometry<T>>, MeshError> {
        let topo = self.edge_topology()?;
        let classes = self.node_classes();
        let mut lookup: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for (id, inc) in topo.edges.iter().enumerate() {
            let (e, k) = inc[0];
            let v = self.elements[e].verts;
            let (a, b) = (classes[v[k]], classes[v[(k + 1) % 3]]);
            lookup.entry((a.min(b), a.max(b))).or_default().push(id);
        }
        let mut out = Vec::with_capacity(self.facets.len());
        for (fi, f) in self.facets.iter().enumerate() {
            let (a, b) = (classes[f.verts[0]], classes[f.verts[1]]);
            let fv = [
                self.nodes[f.verts[1]][0] - self.nodes[f.verts[0]][0],
                self.nodes[f.verts[1]][1] - self.nodes[f.verts[0]][1],
            ];
            let candidates = lookup.get(&(a.min(b), a.max(b))).cloned().unwrap_or_default();
            let mut found = None;
            'search: for id in candidates {
                for &(e, k) in &topo.edges[id] {
                    let v = self.elements[e].verts;
                    let (p, q) = (v[k], v[(k + 1) % 3]);
                    let ev = [self.nodes[q][0] - self.nodes[p][0], self.nodes[q][1] - self.nodes[p][1]];
                    let same = (ev[0] - fv[0]).abs() + (ev[1] - fv[1]).abs();
                    let flip = (ev[0] + fv[0]).abs() + (ev[1] + fv[1]).abs();
                    let len = ev[0].abs() + ev[1].abs();
                    if (same < T::lit(1e-6) * len || flip < T::lit(1e-6) * len)
                        && self.elements[e].region == f.inward_region
                    {
                        found = Some((e, k));
                        break 'search;
                    }
                }
            }
            let (e, k) = found.ok_or_else(|| {
                MeshError::TagError(format!("facet {fi} has no adjacent element of region {}", f.inward_region))
            })?;
            let v = self.elements[e].verts;
            let (p, q, r) = (v[k], v[(k + 1) % 3], v[(k + 2) % 3]);
            let t = [self.nodes[q][0] - self.nodes[p][0], self.nodes[q][1] - self.nodes[p][1]];
            let length = (t[0] * t[0] + t[1] * t[1]).sqrt();
            let mut n = [-t[1] / length, t[0] / length];
            let inward = [self.nodes[r][0] - self.nodes[p][0], self.nodes[r][1] - self.nodes[p][1]];
            if n[0] * inward[0] + n[1] * inward[1] < T::zero() {
                n = [-n[0], -n[1]];
            }
            out.push(FacetGeometry { tag: f.tag, element: e, verts: [p, q], length, normal: n });
        }
        Ok(out)
    }

    fn check_inversion(&self) -> Result<(), MeshError> {
        let n = self.elements.len();
        if n == 0 {
            return Err(MeshError::SchemaError("mesh has no elements".into()));
        }
        let areas: Vec<T> = (0..n).map(|e| self.signed_area(e)).collect();
        let mean = areas.iter().map(|a| a.abs()).sum::<T>() / T::count(n);
        let floor = T::lit(1e-14) * mean;
        for (e, &a) in areas.iter().enumerate() {
            if !(a > floor) {
                return Err(MeshError::ElementInversion { element: e, area: a.f64() });
            }
        }
        Ok(())
    }

    /// Structural, periodicity and tagging checks.
    pub fn validate(&self) -> Result<(), MeshError> {
        if self.dimension != 2 {
            return Err(MeshError::SchemaError(format!("unsupported dimension {}", self.dimension)));
        }
        let nn = self.nodes.len();
        for (e, el) in self.elements.iter().enumerate() {
            if el.verts.iter().any(|&v| v >= nn) {
                return Err(MeshError::SchemaError(format!("element {e} references a missing node")));
            }
        }
        for (i, f) in self.facets.iter().enumerate() {
            if f.verts.iter().any(|&v| v >= nn) {
                return Err(MeshError::SchemaError(format!("facet {i} references a missing node")));
            }
        }
        self.check_inversion()?;
        self.check_periodicity()?;
        self.check_tags()
    }

    fn check_periodicity(&self) -> Result<(), MeshError> {
        let nn = self.nodes.len();
        let mut is_master = vec![false; nn];
        let mut slave_count = vec![0usize; nn];
        for (i, &[m, s]) in self.periodic_pairs.iter().enumerate() {
            if m >= nn || s >= nn || m == s {
                return Err(MeshError::PeriodicityError(format!("pair {i} is malformed")));
            }
            is_master[m] = true;
            slave_count[s] += 1;
        }
        for n in 0..nn {
            if slave_count[n] > 1 {
                return Err(MeshError::PeriodicityError(format!("node {n} is slave in several pairs")));
            }
            if slave_count[n] == 1 && is_master[n] {
                return Err(MeshError::PeriodicityError(format!("node {n} is both master and slave")));
            }
        }
        let (lo, hi) = self.extent();
        let len = [hi[0] - lo[0], hi[1] - lo[1]];
        let tol = T::lit(1e-9) * len[0].max(len[1]);
        for &[m, s] in &self.periodic_pairs {
            for k in 0..2 {
                let d = (self.nodes[s][k] - self.nodes[m][k]).abs();
                if d > tol && (d - len[k]).abs() > tol {
                    return Err(MeshError::PeriodicityError(format!(
                        "pair ({m}, {s}) is not offset by a cell period"
                    )));
                }
            }
        }
        for (n, p) in self.nodes.iter().enumerate() {
            let on_boundary = (0..2).any(|k| (p[k] - lo[k]).abs() < tol || (p[k] - hi[k]).abs() < tol);
            if on_boundary && !is_master[n] && slave_count[n] == 0 {
                return Err(MeshError::PeriodicityError(format!("boundary node {n} has no periodic partner")));
            }
        }
        Ok(())
    }

    fn check_tags(&self) -> Result<(), MeshError> {
        let topo = self.edge_topology()?;
        let classes = self.node_classes();
        let mut required: HashMap<(usize, usize, usize), FacetTag> = HashMap::new();
        for (id, inc) in topo.edges.iter().enumerate() {
            if inc.len() != 2 {
                return Err(MeshError::PeriodicityError(format!(
                    "edge {id} has {} adjacent elements; the cell does not close periodically",
                    inc.len()
                )));
            }
            let (ra, rb) = (self.elements[inc[0].0].region, self.elements[inc[1].0].region);
            let tag = match (ra, rb) {
                (Region::Conductor(_), Region::Fluid) | (Region::Fluid, Region::Conductor(_)) => {
                    return Err(MeshError::TagError(format!("conductor touches fluid across edge {id}")));
                }
                (Region::Conductor(a), Region::Conductor(b)) if a != b => {
                    return Err(MeshError::RegionOverlap(format!("conductors {a} and {b} share edge {id}")));
                }
                (Region::Fluid, r) | (r, Region::Fluid) if r.is_solid() => Some(FacetTag::FluidSolid),
                (Region::Conductor(a), r) | (r, Region::Conductor(a)) if r.is_matrix() => {
                    Some(FacetTag::ConductorMatrix(a))
                }
                _ => None,
            };
            if let Some(t) = tag {
                let (e, k) = inc[0];
                let v = self.elements[e].verts;
                let (a, b) = (classes[v[k]], classes[v[(k + 1) % 3]]);
                required.insert((a.min(b), a.max(b), id), t);
            }
        }
        let geo = self.facet_geometry()?;
        let mut seen = vec![false; topo.edges.len()];
        for (fi, (f, g)) in self.facets.iter().zip(&geo).enumerate() {
            let id = topo.element_edges[g.element]
                [(0..3).find(|&k| self.elements[g.element].verts[k] == g.verts[0]).unwrap()];
            let inc = &topo.edges[id];
            let other = if inc[0].0 == g.element { inc[1].0 } else { inc[0].0 };
            let (inner, outer) = (self.elements[g.element].region, self.elements[other].region);
            let ok = match f.tag {
                FacetTag::FluidSolid => inner.is_solid() && outer.is_fluid(),
                FacetTag::ConductorMatrix(a) => inner.is_matrix() && outer == Region::Conductor(a),
            };
            if !ok {
                return Err(MeshError::TagError(format!(
                    "facet {fi} tagged {} separates {inner} from {outer}",
                    f.tag
                )));
            }
            if seen[id] {
                return Err(MeshError::TagError(format!("facet {fi} is duplicated")));
            }
            seen[id] = true;
        }
        for (&(_, _, id), t) in &required {
            if !seen[id] {
                return Err(MeshError::TagError(format!("interface edge {id} ({t}) is not tagged")));
            }
        }
        Ok(())
    }

    /// Moves every node by `tau * v` and rejects inverted elements.
    pub fn perturbed(&self, v: &[Vec2<T>], tau: T) -> Result<CellMesh<T>, MeshError> {
        if v.len() != self.nodes.len() {
            return Err(MeshError::SchemaError("velocity length does not match node count".into()));
        }
        let mut out = self.clone();
        for (p, d) in out.nodes.iter_mut().zip(v) {
            p[0] += tau * d[0];
            p[1] += tau * d[1];
        }
        out.check_inversion()?;
        Ok(out)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("mesh serialization")
    }

    pub fn from_json(s: &str) -> Result<Self, MeshError> {
        let mesh: CellMesh<T> = serde_json::from_str(s).map_err(|e| MeshError::SchemaError(e.to_string()))?;
        mesh.validate()?;
        Ok(mesh)
    }
}

/// Structured periodic `n x n` triangulation of the unit square with alternating diagonals.
/// Regions are assigned by element centroid; interface facets are derived from the regions.
pub fn structured_cell<T: Real>(n: usize, classify: impl Fn(Vec2<T>) -> Region) -> Result<CellMesh<T>, MeshError> {
    if n < 2 || n % 2 != 0 {
        return Err(MeshError::ResolutionTooCoarse(format!("resolution {n} must be even and at least 2")));
    }
    let h = T::one() / T::count(n);
    let id = |i: usize, j: usize| j * (n + 1) + i;
    let mut nodes = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            nodes.push([T::count(i) * h, T::count(j) * h]);
        }
    }
    let mut elements = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            let tris = if (i + j) % 2 == 0 { [[a, b, c], [a, c, d]] } else { [[a, b, d], [b, c, d]] };
            for verts in tris {
                elements.push(Element { verts, region: Region::Fluid });
            }
        }
    }
    let mut periodic_pairs = Vec::new();
    for j in 0..=n {
        for i in 0..=n {
            if i == n || j == n {
                periodic_pairs.push([id(i % n, j % n), id(i, j)]);
            }
        }
    }
    let mut mesh = CellMesh { dimension: 2, nodes, elements, facets: Vec::new(), periodic_pairs };
    for e in 0..mesh.elements.len() {
        mesh.elements[e].region = classify(mesh.centroid(e));
    }
    mesh.facets = derive_facets(&mesh)?;
    Ok(mesh)
}

fn derive_facets<T: Real>(mesh: &CellMesh<T>) -> Result<Vec<Facet>, MeshError> {
    let topo = mesh.edge_topology()?;
    let mut facets = Vec::new();
    for (id, inc) in topo.edges.iter().enumerate() {
        if inc.len() != 2 {
            continue;
        }
        let (ea, eb) = (inc[0], inc[1]);
        let (ra, rb) = (mesh.elements[ea.0].region, mesh.elements[eb.0].region);
        let pick = |inner: (usize, usize), tag: FacetTag| {
            let v = mesh.elements[inner.0].verts;
            Facet { verts: [v[inner.1], v[(inner.1 + 1) % 3]], tag, inward_region: mesh.elements[inner.0].region }
        };
        let facet = match (ra, rb) {
            (Region::Conductor(_), Region::Fluid) | (Region::Fluid, Region::Conductor(_)) => {
                return Err(MeshError::ResolutionTooCoarse(format!("conductor touches fluid across edge {id}")));
            }
            (Region::Conductor(a), Region::Conductor(b)) if a != b => {
                return Err(MeshError::ResolutionTooCoarse(format!("conductors {a} and {b} share edge {id}")));
            }
            (Region::Fluid, r) if r.is_solid() => Some(pick(eb, FacetTag::FluidSolid)),
            (r, Region::Fluid) if r.is_solid() => Some(pick(ea, FacetTag::FluidSolid)),
            (Region::Conductor(a), r) if r.is_matrix() => Some(pick(eb, FacetTag::ConductorMatrix(a))),
            (r, Region::Conductor(a)) if r.is_matrix() => Some(pick(ea, FacetTag::ConductorMatrix(a))),
            _ => None,
        };
        facets.extend(facet);
    }
    Ok(facets)
}

/// Canonical piezo cell on an `n x n` structured grid.
pub fn generate_canonical_cell<T: Real>(geom: &CanonicalGeometry<T>, n: usize) -> Result<CellMesh<T>, MeshError> {
    let half = T::lit(0.5);
    if !(geom.channel_halfwidth > T::zero()) {
        return Err(MeshError::ChannelDegenerate("channel half-width must be positive".into()));
    }
    if !(geom.halfwidth_at(half) < half) || !(geom.max_halfwidth() < half) {
        return Err(MeshError::ChannelDegenerate("channel fills the cell".into()));
    }
    let band = Rect { min: [T::zero(), half - geom.max_halfwidth()], max: [T::one(), half + geom.max_halfwidth()] };
    for (a, r) in geom.electrodes.iter().enumerate() {
        if !(r.min[0] < r.max[0] && r.min[1] < r.max[1]) {
            return Err(MeshError::RegionOverlap(format!("electrode {} is empty", a + 1)));
        }
        if !(r.min[0] > T::zero() && r.min[1] > T::zero() && r.max[0] < T::one() && r.max[1] < T::one()) {
            return Err(MeshError::RegionOverlap(format!("electrode {} touches the cell boundary", a + 1)));
        }
        if r.intersects(&band) {
            return Err(MeshError::RegionOverlap(format!("electrode {} overlaps the channel", a + 1)));
        }
        for (b, o) in geom.electrodes.iter().enumerate().skip(a + 1) {
            if r.intersects(o) {
                return Err(MeshError::RegionOverlap(format!("electrodes {} and {} overlap", a + 1, b + 1)));
            }
        }
    }
    let mesh = structured_cell(n, |c| geom.classify(c))?;
    let mut wanted = vec![Region::Fluid, Region::MatrixPiezo, Region::MatrixElastic];
    wanted.extend((1..=geom.electrodes.len()).map(Region::Conductor));
    let present = mesh.region_measures();
    for r in wanted {
        if !present.iter().any(|(q, _)| *q == r) {
            return Err(MeshError::ResolutionTooCoarse(format!("region {r} has no elements at resolution {n}")));
        }
    }
    let classes = mesh.node_classes();
    let mut region_of_class: HashMap<usize, Region> = HashMap::new();
    for el in &mesh.elements {
        if let Region::Conductor(a) = el.region {
            for &v in &el.verts {
                let p = mesh.nodes[v];
                let on_edge = (0..2).any(|k| p[k] <= T::zero() || p[k] >= T::one());
                if on_edge {
                    return Err(MeshError::ResolutionTooCoarse(format!("electrode {a} reaches the cell boundary")));
                }
                if let Some(prev) = region_of_class.insert(classes[v], el.region) {
                    if prev != el.region {
                        return Err(MeshError::ResolutionTooCoarse("electrodes share a node".into()));
                    }
                }
            }
        }
    }
    for el in &mesh.elements {
        if el.region.is_fluid() && el.verts.iter().any(|v| region_of_class.contains_key(&classes[*v])) {
            return Err(MeshError::ResolutionTooCoarse("an electrode touches the channel".into()));
        }
    }
    Ok(mesh)
}
