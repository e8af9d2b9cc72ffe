//! Semilinear 1D macroscopic model: displacement `u` and pressure `p` on `[0, L]`,
//! backward Euler in time, Newton iterations with state dependent coefficients.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::homogenization::HomCoeffs;
use crate::linalg::{BandedLu, LinalgError, Triplets};
use crate::scalar::Real;
use crate::sensitivity::{CoefficientGradient, StateGradients};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MacroError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("elastic coefficient vanishes")]
    SingularElasticity,
    #[error("electrode {0} does not exist in the coefficient report")]
    MissingElectrode(usize),
    #[error("Newton iteration did not converge at step {step} after {iterations} iterations (residual {residual:e})")]
    NewtonDivergence { step: usize, iterations: usize, residual: f64 },
    #[error("linear solve failed: {0}")]
    LinearSolveFailure(#[from] LinalgError),
}

/// Linear expansion `X0 + de e + dp p + dphi phi`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Expansion<T> {
    pub value: T,
    #[serde(default = "T::zero")]
    pub de: T,
    #[serde(default = "T::zero")]
    pub dp: T,
    #[serde(default = "T::zero")]
    pub dphi: T,
}

impl<T: Real> Expansion<T> {
    pub fn constant(value: T) -> Self {
        Expansion { value, de: T::zero(), dp: T::zero(), dphi: T::zero() }
    }

    pub fn eval(&self, e: T, p: T, phi: T) -> T {
        self.value + self.de * e + self.dp * p + self.dphi * phi
    }

    fn frozen(&self) -> Self {
        Expansion::constant(self.value)
    }

    fn scaled(&self, s: T) -> Self {
        Expansion { value: self.value * s, de: self.de * s, dp: self.dp * s, dphi: self.dphi * s }
    }
}

/// Scalar 1D coefficients in SI units; `kappa = eps0^2 K / mu` in m^2/(Pa s).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct MacroCoefficients<T> {
    pub a: Expansion<T>,
    pub b: Expansion<T>,
    pub m: Expansion<T>,
    pub h: Expansion<T>,
    pub z: Expansion<T>,
    pub kappa: Expansion<T>,
}

impl<T: Real> MacroCoefficients<T> {
    /// Reduction to the `11` components with the given electrode (1-based) actuated.
    pub fn from_cell(c: &HomCoeffs<T>, grads: &StateGradients<T>, electrode: usize) -> Result<Self, MacroError> {
        let al = electrode.checked_sub(1).ok_or(MacroError::MissingElectrode(electrode))?;
        if al >= c.h.len() || al >= grads.potential.len() {
            return Err(MacroError::MissingElectrode(electrode));
        }
        let pick = |f: &dyn Fn(&CoefficientGradient<T>) -> T, value: T| Expansion {
            value,
            de: f(&grads.strain[0]),
            dp: f(&grads.pressure),
            dphi: f(&grads.potential[al]),
        };
        let kscale = c.eps0 * c.eps0 / c.viscosity;
        Ok(MacroCoefficients {
            a: pick(&|g| g.a[0][0], c.a[0][0]),
            b: pick(&|g| g.b[0], c.b[0]),
            m: pick(&|g| g.m, c.m),
            h: pick(&|g| g.h[al][0], c.h[al][0]),
            z: pick(&|g| g.z[al], c.z[al]),
            kappa: pick(&|g| g.k[0][0], c.k[0][0]).scaled(kscale),
        })
    }

    /// Only the permeability keeps its state dependence.
    pub fn permeability_only(&self) -> Self {
        MacroCoefficients { kappa: self.kappa.clone(), ..self.frozen() }
    }

    pub fn frozen(&self) -> Self {
        MacroCoefficients {
            a: self.a.frozen(),
            b: self.b.frozen(),
            m: self.m.frozen(),
            h: self.h.frozen(),
            z: self.z.frozen(),
            kappa: self.kappa.frozen(),
        }
    }
}

/// Coefficients of the pressure equation after eliminating a uniform stress.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Reduced1d<T> {
    pub c: T,
    pub f: T,
    pub k_p: T,
    pub k_phi: T,
}

/// `C = M + B^2/A`, `F = Z + B H/A`, `K_p = dK/dp + dK/de B/A`, `K_phi = dK/dphi - dK/de H/A`.
pub fn reduced_1d_coefficients<T: Real>(
    a: T,
    b: T,
    m: T,
    h: T,
    z: T,
    dk_de: T,
    dk_dp: T,
    dk_dphi: T,
) -> Result<Reduced1d<T>, MacroError> {
    if a == T::zero() {
        return Err(MacroError::SingularElasticity);
    }
    Ok(Reduced1d { c: m + b * b / a, f: z + b * h / a, k_p: dk_dp + dk_de * b / a, k_phi: dk_dphi - dk_de * h / a })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ControlWave {
    /// `phi0 |sin(omega t - k x)|`
    TravellingSine { phi0: f64, omega: f64, k: f64 },
    /// `phi_star (1 + cos(psi + pi)) / 2` for `psi = b1 x1 + b2 x2 - c t + d < 0`, else 0.
    CaseTable { phi_star: f64, b1: f64, b2: f64, c: f64, d: f64 },
}

impl ControlWave {
    pub fn eval(&self, x: f64, t: f64) -> f64 {
        match *self {
            ControlWave::TravellingSine { phi0, omega, k } => phi0 * (omega * t - k * x).sin().abs(),
            ControlWave::CaseTable { phi_star, b1, b2, c, d } => {
                let psi = b1 * x + b2 * 0.0 - c * t + d;
                if psi < 0.0 {
                    0.5 * (1.0 + (psi + std::f64::consts::PI).cos()) * phi_star
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Nonlinearity {
    Linear,
    Semilinear,
}

/// Coefficient families that follow the state in semilinear mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expanded {
    All,
    Permeability,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialState {
    /// `u = p = 0`
    Zero,
    /// Equilibrium with the boundary data and the control at `t = 0`, storage terms dropped.
    Steady,
}

fn default_nodes() -> usize {
    201
}
fn default_dt() -> f64 {
    0.02
}
fn default_steps() -> usize {
    50
}
fn default_tol() -> f64 {
    1e-8
}
fn default_max_iter() -> usize {
    20
}
fn default_stride() -> usize {
    10
}
fn default_h_sign() -> f64 {
    1.0
}
fn default_initial() -> InitialState {
    InitialState::Zero
}
fn default_expanded() -> Expanded {
    Expanded::All
}
fn default_mode() -> Nonlinearity {
    Nonlinearity::Semilinear
}

/// Macroscopic problem setup; SI units. `u = 0` and `p = p_left` at `x = 0`,
/// `p = p_right` and traction `-p_right` at `x = L`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MacroConfig {
    pub length: f64,
    #[serde(default = "default_nodes")]
    pub nodes: usize,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default)]
    pub p_left: f64,
    #[serde(default)]
    pub p_right: f64,
    pub wave: ControlWave,
    #[serde(default = "default_mode")]
    pub mode: Nonlinearity,
    #[serde(default = "default_expanded")]
    pub expanded: Expanded,
    #[serde(default = "default_tol")]
    pub tolerance: f64,
    #[serde(default = "default_max_iter")]
    pub max_iterations: usize,
    /// Sign of the potential term in the stress.
    #[serde(default = "default_h_sign")]
    pub h_sign: f64,
    #[serde(default = "default_initial")]
    pub initial: InitialState,
    /// Snapshot every `output_stride` steps.
    #[serde(default = "default_stride")]
    pub output_stride: usize,
    /// Volume force on the mixture, N/m^3.
    #[serde(default)]
    pub body_force: f64,
    /// Volume force driving the fluid, Pa/m.
    #[serde(default)]
    pub fluid_force: f64,
}

impl MacroConfig {
    pub fn validate(&self) -> Result<(), MacroError> {
        let bad = |m: &str| Err(MacroError::InvalidConfig(m.to_string()));
        if !(self.length > 0.0) {
            return bad("length must be positive");
        }
        if !(self.dt > 0.0) {
            return bad("time step must be positive");
        }
        if self.nodes < 3 {
            return bad("at least 3 nodes are needed");
        }
        if !(self.tolerance > 0.0) {
            return bad("tolerance must be positive");
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be positive");
        }
        if self.output_stride == 0 {
            return bad("output_stride must be positive");
        }
        Ok(())
    }

    pub fn coordinates(&self) -> Vec<f64> {
        let h = self.length / (self.nodes - 1) as f64;
        (0..self.nodes).map(|i| i as f64 * h).collect()
    }
}

/// Nodal state; `u` in m, `p` in Pa.
#[derive(Clone, Debug, PartialEq)]
pub struct MacroState<T> {
    pub u: Vec<T>,
    pub p: Vec<T>,
}

impl<T: Real> MacroState<T> {
    pub fn zeros(n: usize) -> Self {
        MacroState { u: vec![T::zero(); n], p: vec![T::zero(); n] }
    }

    /// Interleaved `[u0, p0, u1, p1, ...]`.
    pub fn to_vec(&self) -> Vec<T> {
        self.u.iter().zip(&self.p).flat_map(|(u, p)| [*u, *p]).collect()
    }

    pub fn from_vec(x: &[T]) -> Self {
        MacroState { u: x.iter().step_by(2).copied().collect(), p: x.iter().skip(1).step_by(2).copied().collect() }
    }
}

/// Tangent coefficients at one quadrature point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TangentCoefficients<T> {
    pub a: T,
    pub b: T,
    pub d: T,
    pub m: T,
    pub k: T,
    pub g: T,
    pub q: T,
}

/// One time step: fixed previous state and control, unknown current state.
pub struct StepProblem<'a, T> {
    pub cfg: &'a MacroConfig,
    pub coeffs: &'a MacroCoefficients<T>,
    pub prev: &'a MacroState<T>,
    pub t: f64,
    /// Storage terms are dropped for the steady initial problem.
    pub steady: bool,
}

struct Point<T> {
    e: T,
    e0: T,
    p: T,
    p0: T,
    dp: T,
    phi: T,
    phi0: T,
}

/// Scaled residual below which further iterations only stir roundoff.
const ROUNDOFF_FLOOR: f64 = 1e-10;

const GAUSS: [(f64, f64); 2] = [(0.211_324_865_405_187_1, 0.5), (0.788_675_134_594_812_9, 0.5)];

impl<'a, T: Real> StepProblem<'a, T> {
    fn h(&self) -> T {
        T::lit(self.cfg.length / (self.cfg.nodes - 1) as f64)
    }

    fn point(&self, s: &MacroState<T>, el: usize, xi: f64) -> (Point<T>, [T; 2]) {
        let h = self.h();
        let n = [T::lit(1.0 - xi), T::lit(xi)];
        let x = (el as f64 + xi) * self.cfg.length / (self.cfg.nodes - 1) as f64;
        let t0 = self.t - self.cfg.dt;
        let phi = T::lit(self.cfg.wave.eval(x, self.t));
        let phi0 = if self.steady { phi } else { T::lit(self.cfg.wave.eval(x, t0)) };
        let pt = Point {
            e: (s.u[el + 1] - s.u[el]) / h,
            e0: (self.prev.u[el + 1] - self.prev.u[el]) / h,
            p: n[0] * s.p[el] + n[1] * s.p[el + 1],
            p0: n[0] * self.prev.p[el] + n[1] * self.prev.p[el + 1],
            dp: (s.p[el + 1] - s.p[el]) / h,
            phi,
            phi0,
        };
        (pt, n)
    }

    /// Stress, storage and flux integrands at a point.
    fn integrands(&self, q: &Point<T>) -> (T, T, T) {
        let c = self.coeffs;
        let hs = T::lit(self.cfg.h_sign);
        let at = |x: &Expansion<T>| x.eval(q.e, q.p, q.phi);
        let sigma = at(&c.a) * q.e - q.p * at(&c.b) + hs * at(&c.h) * q.phi;
        let storage = if self.steady {
            T::zero()
        } else {
            at(&c.b) * (q.e - q.e0) + at(&c.m) * (q.p - q.p0) - at(&c.z) * (q.phi - q.phi0)
        };
        let flux = at(&c.kappa) * (q.dp - T::lit(self.cfg.fluid_force));
        (sigma, storage, flux)
    }

    /// Tangent coefficients at a point.
    fn tangent_coefficients(&self, q: &Point<T>) -> TangentCoefficients<T> {
        let c = self.coeffs;
        let hs = T::lit(self.cfg.h_sign);
        let at = |x: &Expansion<T>| x.eval(q.e, q.p, q.phi);
        let (de, dp, dphi) = (q.e - q.e0, q.p - q.p0, q.phi - q.phi0);
        let grad = q.dp - T::lit(self.cfg.fluid_force);
        let (d, m) = if self.steady {
            (T::zero(), T::zero())
        } else {
            (
                at(&c.b) + c.b.de * de + c.m.de * dp - c.z.de * dphi,
                at(&c.m) + c.b.dp * de + c.m.dp * dp - c.z.dp * dphi,
            )
        };
        TangentCoefficients {
            a: at(&c.a) + c.a.de * q.e - c.b.de * q.p + hs * c.h.de * q.phi,
            b: at(&c.b) + c.b.dp * q.p - c.a.dp * q.e - hs * c.h.dp * q.phi,
            d,
            m,
            k: at(&c.kappa),
            g: c.kappa.de * grad,
            q: c.kappa.dp * grad,
        }
    }

    /// Unconstrained Galerkin residual and per-row magnitude of its contributions.
    pub fn residual_with_scale(&self, s: &MacroState<T>) -> (Vec<T>, Vec<T>) {
        let n = self.cfg.nodes;
        let h = self.h();
        let dt = T::lit(self.cfg.dt);
        let f = T::lit(self.cfg.body_force);
        let mut r = vec![T::zero(); 2 * n];
        let mut sc = vec![T::zero(); 2 * n];
        let dn = [-T::one() / h, T::one() / h];
        for el in 0..n - 1 {
            for &(xi, w) in &GAUSS {
                let (q, nv) = self.point(s, el, xi);
                let wh = T::lit(w) * h;
                let (sigma, storage, flux) = self.integrands(&q);
                for a in 0..2 {
                    let node = el + a;
                    let ru = (sigma * dn[a] - f * nv[a]) * wh;
                    let rp = (nv[a] * storage + dt * flux * dn[a]) * wh;
                    r[2 * node] += ru;
                    r[2 * node + 1] += rp;
                    sc[2 * node] += ((sigma * dn[a]).abs() + (f * nv[a]).abs()) * wh;
                    sc[2 * node + 1] += ((nv[a] * storage).abs() + (dt * flux * dn[a]).abs()) * wh;
                }
            }
        }
        let pr = T::lit(self.cfg.p_right);
        r[2 * (n - 1)] += pr;
        sc[2 * (n - 1)] += pr.abs();
        (r, sc)
    }

    pub fn residual(&self, s: &MacroState<T>) -> Vec<T> {
        self.residual_with_scale(s).0
    }

    /// Exact derivative of [`Self::residual`], assembled through the tangent coefficients.
    pub fn tangent(&self, s: &MacroState<T>) -> Triplets<T> {
        let n = self.cfg.nodes;
        let h = self.h();
        let dt = T::lit(self.cfg.dt);
        let dn = [-T::one() / h, T::one() / h];
        let mut trip = Triplets::new(2 * n);
        for el in 0..n - 1 {
            for &(xi, w) in &GAUSS {
                let (q, nv) = self.point(s, el, xi);
                let wh = T::lit(w) * h;
                let tc = self.tangent_coefficients(&q);
                for a in 0..2 {
                    let (ua, pa) = (2 * (el + a), 2 * (el + a) + 1);
                    for b in 0..2 {
                        let (ub, pb) = (2 * (el + b), 2 * (el + b) + 1);
                        trip.add(ua, ub, tc.a * dn[a] * dn[b] * wh);
                        trip.add(ua, pb, -tc.b * nv[b] * dn[a] * wh);
                        trip.add(pa, ub, (nv[a] * tc.d * dn[b] + dt * dn[a] * tc.g * dn[b]) * wh);
                        trip.add(pa, pb, (nv[a] * tc.m * nv[b] + dt * dn[a] * (tc.k * dn[b] + tc.q * nv[b])) * wh);
                    }
                }
            }
        }
        trip
    }

    /// Central difference of the residual along `d` with step `h` against the tangent applied
    /// to `d`; relative error in the 2-norm, worst of the displacement and pressure row blocks.
    pub fn tangent_fd_error(&self, s: &MacroState<T>, d: &MacroState<T>, h: f64) -> f64 {
        let x = s.to_vec();
        let dv = d.to_vec();
        let shifted = |sign: f64| {
            let y: Vec<T> = x.iter().zip(&dv).map(|(a, b)| *a + T::lit(sign * h) * *b).collect();
            self.residual(&MacroState::from_vec(&y))
        };
        let (rp, rm) = (shifted(1.0), shifted(-1.0));
        let jd = self.tangent(s).to_csr().matvec(&dv);
        let mut worst = 0.0f64;
        for block in 0..2 {
            let (mut num, mut den) = (0.0, 0.0);
            for i in (block..x.len()).step_by(2) {
                let fd = (rp[i].f64() - rm[i].f64()) / (2.0 * h);
                num += (fd - jd[i].f64()).powi(2);
                den += jd[i].f64().powi(2);
            }
            if den > 0.0 {
                worst = worst.max((num / den).sqrt());
            }
        }
        worst
    }

    /// Interleaved dofs fixed by the boundary conditions.
    pub fn dirichlet(&self) -> [usize; 3] {
        let n = self.cfg.nodes;
        [0, 1, 2 * (n - 1) + 1]
    }

    pub fn apply_dirichlet(&self, s: &mut MacroState<T>) {
        let n = self.cfg.nodes;
        s.u[0] = T::zero();
        s.p[0] = T::lit(self.cfg.p_left);
        s.p[n - 1] = T::lit(self.cfg.p_right);
    }

    /// Dimensionless residual norm over the free rows.
    fn norm(&self, r: &[T], sc: &[T]) -> f64 {
        let fixed = self.dirichlet();
        let mut s = 0.0;
        for i in 0..r.len() {
            if fixed.contains(&i) {
                continue;
            }
            let d = sc[i].f64();
            if d > 0.0 {
                s += (r[i].f64() / d).powi(2);
            }
        }
        s.sqrt()
    }

    /// Newton iterations from `guess`; returns the state, iteration count and residual history.
    pub fn solve(&self, guess: &MacroState<T>, step: usize) -> Result<(MacroState<T>, usize, Vec<f64>), MacroError> {
        let mut s = guess.clone();
        self.apply_dirichlet(&mut s);
        let fixed = self.dirichlet();
        let (r, sc) = self.residual_with_scale(&s);
        let r0 = self.norm(&r, &sc);
        let mut history = vec![r0];
        let mut r = r;
        for it in 1..=self.cfg.max_iterations {
            let mut trip = self.tangent(&s);
            let mut rhs: Vec<T> = r.iter().map(|v| -*v).collect();
            for &d in &fixed {
                trip.clear_row(d);
                trip.add(d, d, T::one());
                rhs[d] = T::zero();
            }
            let csr = trip.to_csr();
            let ident: Vec<usize> = (0..csr.dim()).collect();
            let lu = BandedLu::factor_with_order(&csr, ident)?;
            let dx = lu.solve_refined(&csr, &rhs, 1);
            let mut x = s.to_vec();
            for (xi, d) in x.iter_mut().zip(&dx) {
                *xi += *d;
            }
            s = MacroState::from_vec(&x);
            let (rn, scn) = self.residual_with_scale(&s);
            let norm = self.norm(&rn, &scn);
            history.push(norm);
            r = rn;
            if norm <= self.cfg.tolerance * r0 || norm <= ROUNDOFF_FLOOR {
                return Ok((s, it, history));
            }
        }
        Err(MacroError::NewtonDivergence {
            step,
            iterations: self.cfg.max_iterations,
            residual: *history.last().unwrap(),
        })
    }

    /// Conservative seepage `(w(0), w(L))` along `+x` from the boundary rows of the residual.
    pub fn boundary_seepage(&self, s: &MacroState<T>) -> (f64, f64) {
        let r = self.residual(s);
        let n = self.cfg.nodes;
        let dt = if self.steady { 1.0 } else { self.cfg.dt };
        (r[1].f64() / dt, -r[2 * (n - 1) + 1].f64() / dt)
    }

    /// Element seepage `w = -kappa (p' - f^f)` at the element midpoints.
    pub fn element_seepage(&self, s: &MacroState<T>) -> Vec<f64> {
        (0..self.cfg.nodes - 1)
            .map(|el| {
                let (q, _) = self.point(s, el, 0.5);
                -self.integrands(&q).2.f64()
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub step: usize,
    pub t: f64,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub p: Vec<f64>,
    pub w: Vec<f64>,
}

/// Cumulative fluxes along `+x`, m^3/m^2, at `x = 0`, `L/2` and `L`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub times: Vec<f64>,
    pub q_minus: Vec<f64>,
    pub q_mid: Vec<f64>,
    pub q_plus: Vec<f64>,
    pub newton_iterations: Vec<usize>,
    /// Residual norms of every Newton iteration per step, starting with the initial residual.
    pub residual_history: Vec<Vec<f64>>,
    pub snapshots: Vec<Snapshot>,
}

/// Trapezoid rule on recorded samples.
pub fn cumulative_trapezoid(times: &[f64], values: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    for i in 0..values.len() {
        if i > 0 {
            acc += 0.5 * (times[i] - times[i - 1]) * (values[i] + values[i - 1]);
        }
        out.push(acc);
    }
    out
}

/// Least squares slope of `q` against `t` over samples with `t >= t_from`.
pub fn regression_slope(times: &[f64], q: &[f64], t_from: f64) -> f64 {
    let pts: Vec<(f64, f64)> = times.iter().zip(q).filter(|(t, _)| **t >= t_from).map(|(t, v)| (*t, *v)).collect();
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return 0.0;
    }
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let mq = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - mq)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt) * (p.0 - mt)).sum();
    sxy / sxx
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mode: Nonlinearity,
    pub steps: usize,
    pub final_time: f64,
    /// Regression slopes over the second half of the run, m/s.
    pub slope_minus: f64,
    pub slope_mid: f64,
    pub slope_plus: f64,
    /// Largest `|Q+ - Q-|` over the last quarter, relative to `max |Q+|` there.
    pub flux_balance_gap: f64,
    pub max_newton_iterations: usize,
    pub mean_newton_iterations: f64,
}

impl TimeSeries {
    pub fn summary(&self, mode: Nonlinearity) -> Summary {
        let t_end = *self.times.last().unwrap_or(&0.0);
        let half = 0.5 * t_end;
        let quarter = 0.75 * t_end;
        let mut gap = 0.0f64;
        let mut scale = 1e-12f64;
        for i in 0..self.times.len() {
            if self.times[i] >= quarter {
                gap = gap.max((self.q_plus[i] - self.q_minus[i]).abs());
                scale = scale.max(self.q_plus[i].abs());
            }
        }
        let iters = &self.newton_iterations;
        Summary {
            mode,
            steps: iters.len(),
            final_time: t_end,
            slope_minus: regression_slope(&self.times, &self.q_minus, half),
            slope_mid: regression_slope(&self.times, &self.q_mid, half),
            slope_plus: regression_slope(&self.times, &self.q_plus, half),
            flux_balance_gap: gap / scale,
            max_newton_iterations: iters.iter().copied().max().unwrap_or(0),
            mean_newton_iterations: if iters.is_empty() {
                0.0
            } else {
                iters.iter().sum::<usize>() as f64 / iters.len() as f64
            },
        }
    }

    pub fn fluxes_csv(&self) -> String {
        let mut s = String::from("# schema: pzflow.fluxes/1\nt,Q_minus,Q_mid,Q_plus,newton_iters\n");
        for i in 0..self.times.len() {
            let it = if i == 0 { 0 } else { self.newton_iterations[i - 1] };
            s.push_str(&format!(
                "{:.17e},{:.17e},{:.17e},{:.17e},{}\n",
                self.times[i], self.q_minus[i], self.q_mid[i], self.q_plus[i], it
            ));
        }
        s
    }
}

impl Snapshot {
    pub fn csv(&self) -> String {
        let mut s = format!("# schema: pzflow.fields/1 step={} t={:.17e}\nx,u,p,w\n", self.step, self.t);
        for i in 0..self.x.len() {
            s.push_str(&format!("{:.17e},{:.17e},{:.17e},{:.17e}\n", self.x[i], self.u[i], self.p[i], self.w[i]));
        }
        s
    }
}

fn nodal_seepage<T: Real>(pb: &StepProblem<'_, T>, s: &MacroState<T>) -> Vec<f64> {
    let we = pb.element_seepage(s);
    let n = pb.cfg.nodes;
    let (w0, wl) = pb.boundary_seepage(s);
    (0..n)
        .map(|i| {
            if i == 0 {
                w0
            } else if i == n - 1 {
                wl
            } else {
                0.5 * (we[i - 1] + we[i])
            }
        })
        .collect()
}

/// Runs the time loop; the mode in `cfg` selects frozen or expanded coefficients.
pub fn run_simulation<T: Real>(cfg: &MacroConfig, coeffs: &MacroCoefficients<T>) -> Result<TimeSeries, MacroError> {
    cfg.validate()?;
    let active = match cfg.mode {
        Nonlinearity::Linear => coeffs.frozen(),
        Nonlinearity::Semilinear => match cfg.expanded {
            Expanded::All => coeffs.clone(),
            Expanded::Permeability => coeffs.permeability_only(),
        },
    };
    if active.a.value == T::zero() {
        return Err(MacroError::SingularElasticity);
    }
    let n = cfg.nodes;
    let x = cfg.coordinates();
    let mid = (n - 1) / 2;
    let zero = MacroState::zeros(n);
    let mut state = match cfg.initial {
        InitialState::Zero => zero.clone(),
        InitialState::Steady => {
            let pb = StepProblem { cfg, coeffs: &active, prev: &zero, t: 0.0, steady: true };
            pb.solve(&zero, 0)?.0
        }
    };
    let mut series = TimeSeries {
        times: vec![0.0],
        q_minus: vec![0.0],
        q_mid: vec![0.0],
        q_plus: vec![0.0],
        newton_iterations: Vec::new(),
        residual_history: Vec::new(),
        snapshots: Vec::new(),
    };
    let snapshot = |step: usize, t: f64, s: &MacroState<T>, w: Vec<f64>| Snapshot {
        step,
        t,
        x: x.clone(),
        u: s.u.iter().map(|v| v.f64()).collect(),
        p: s.p.iter().map(|v| v.f64()).collect(),
        w,
    };
    // seepage at t = 0 from the initial state
    let w_init = {
        let pb = StepProblem { cfg, coeffs: &active, prev: &state, t: 0.0, steady: true };
        nodal_seepage(&pb, &state)
    };
    let mut w_prev = if cfg.initial == InitialState::Zero { vec![0.0; n] } else { w_init };
    series.snapshots.push(snapshot(0, 0.0, &state, w_prev.clone()));
    for step in 1..=cfg.steps {
        let t = step as f64 * cfg.dt;
        let pb = StepProblem { cfg, coeffs: &active, prev: &state, t, steady: false };
        let (next, iters, hist) = pb.solve(&state, step)?;
        let w = nodal_seepage(&pb, &next);
        let k = series.times.len() - 1;
        let dt = t - series.times[k];
        series.q_minus.push(series.q_minus[k] + 0.5 * dt * (w[0] + w_prev[0]));
        series.q_mid.push(series.q_mid[k] + 0.5 * dt * (w[mid] + w_prev[mid]));
        series.q_plus.push(series.q_plus[k] + 0.5 * dt * (w[n - 1] + w_prev[n - 1]));
        series.times.push(t);
        series.newton_iterations.push(iters);
        series.residual_history.push(hist);
        if step % cfg.output_stride == 0 || step == cfg.steps {
            series.snapshots.push(snapshot(step, t, &next, w.clone()));
        }
        w_prev = w;
        state = next;
    }
    Ok(series)
}
