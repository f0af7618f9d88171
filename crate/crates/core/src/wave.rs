//! Explicit leapfrog time stepping for the fine and coarse systems.
//!
//! Both systems march the three-term recurrence
//!
//! ```text
//!   M (u^{m+1} - 2 u^m + u^{m-1}) / tau^2 + A u^m = F^m,
//! ```
//!
//! the fine one with the consistent (or lumped) rho-weighted mass, the
//! coarse one with the identity: its projected mass matrix is the
//! identity up to the basis-construction tolerance, so no linear system
//! is solved during coarse time marching.  The module also provides the
//! Ricker point source, Taylor-corrected initial data, the discrete
//! energy invariant, and a power-iteration CFL verdict.

use crate::assembly::{assemble_load, FineOperators};
use crate::cem::CemSpace;
use crate::error::{Error, Result};
use crate::mesh::MeshHierarchy;
use crate::sparse::{dot, LdlFactor, SparseOperator};

/// Ricker wavelet point source with a Gaussian spatial profile.
///
/// The spatial coordinates are normalized by the domain extents, so the
/// same spec describes the same relative excitation on any domain size.
#[derive(Debug, Clone, Copy)]
pub struct SourceSpec {
    /// Center frequency of the Ricker wavelet.
    pub f0: f64,
    /// Center of the Gaussian in normalized coordinates.
    pub center: [f64; 2],
    /// Decay rate of the Gaussian in normalized coordinates.
    pub spatial_decay: f64,
    /// Overall amplitude.
    pub amplitude: f64,
    /// Weight applied to each displacement component.
    pub components: [f64; 2],
}

impl SourceSpec {
    /// The standard source: centered Gaussian of decay 100, unit
    /// amplitude, equal weight on both components.
    pub fn ricker(f0: f64) -> Self {
        SourceSpec {
            f0,
            center: [0.5, 0.5],
            spatial_decay: 100.0,
            amplitude: 1.0,
            components: [1.0, 1.0],
        }
    }

    /// Checks positivity of the frequency and the spatial decay.
    pub fn validate(&self) -> Result<()> {
        if !(self.f0 > 0.0) {
            return Err(Error::InvalidMedia(format!(
                "source center frequency must be positive, got {}",
                self.f0
            )));
        }
        if !(self.spatial_decay > 0.0) {
            return Err(Error::InvalidMedia(format!(
                "source spatial decay must be positive, got {}",
                self.spatial_decay
            )));
        }
        Ok(())
    }

    /// Time shift that centers the wavelet: the peak sits at `t = 2/f0`.
    pub fn delay(&self) -> f64 {
        2.0 / self.f0
    }

    /// Ricker wavelet `(1 - 2 pi^2 f0^2 s^2) exp(-pi^2 f0^2 s^2)` with
    /// `s = t - 2/f0`.
    pub fn time_factor(&self, t: f64) -> f64 {
        let s = t - self.delay();
        let q = std::f64::consts::PI.powi(2) * self.f0 * self.f0 * s * s;
        (1.0 - 2.0 * q) * (-q).exp()
    }

    /// Gaussian spatial profile at normalized coordinates, including the
    /// amplitude.
    pub fn spatial_factor(&self, xn: f64, yn: f64) -> f64 {
        let dx = xn - self.center[0];
        let dy = yn - self.center[1];
        self.amplitude * (-self.spatial_decay * (dx * dx + dy * dy)).exp()
    }

    /// Full space-time value at normalized coordinates (per unit
    /// component weight).
    pub fn value(&self, t: f64, xn: f64, yn: f64) -> f64 {
        self.time_factor(t) * self.spatial_factor(xn, yn)
    }

    /// Consistent fine load vector of the spatial profile, with Dirichlet
    /// entries eliminated.  The load at time `t` is this vector scaled by
    /// [`SourceSpec::time_factor`], which is how the separable source
    /// avoids re-integration every step.
    pub fn spatial_load(&self, mesh: &MeshHierarchy) -> Vec<f64> {
        let (lx, ly) = (mesh.lx(), mesh.ly());
        let [wx, wy] = self.components;
        assemble_load(
            mesh,
            |x: f64, y: f64| {
                let g = self.spatial_factor(x / lx, y / ly);
                [wx * g, wy * g]
            },
            true,
        )
    }
}

/// A consecutive pair of displacement snapshots `(u^{m-1}, u^m)` plus the
/// step index of the newer one.
#[derive(Debug, Clone)]
pub struct WaveState {
    /// Older snapshot `u^{m-1}`.
    pub u_prev: Vec<f64>,
    /// Newer snapshot `u^m`, where `m` is [`WaveState::step`].
    pub u_curr: Vec<f64>,
    /// Index `m` of `u_curr`; time is `m * tau`.
    pub step: usize,
    /// Time step.
    pub tau: f64,
}

impl WaveState {
    /// State holding `(u^0, u^1)`.
    pub fn new(u0: Vec<f64>, u1: Vec<f64>, tau: f64) -> Self {
        assert_eq!(u0.len(), u1.len(), "snapshot lengths");
        WaveState {
            u_prev: u0,
            u_curr: u1,
            step: 1,
            tau,
        }
    }

    /// All-zero state of dimension `n`.
    pub fn zero(n: usize, tau: f64) -> Self {
        WaveState::new(vec![0.0; n], vec![0.0; n], tau)
    }

    /// Time `t_m` of the newer snapshot.
    pub fn time(&self) -> f64 {
        self.step as f64 * self.tau
    }

    /// Swaps the two snapshots.  Because the recurrence is symmetric in
    /// time, stepping after a swap retraces the trajectory backwards.
    pub fn reverse(&mut self) {
        std::mem::swap(&mut self.u_prev, &mut self.u_curr);
    }
}

/// Advances the recurrence with identity mass:
/// `u^{m+1} = 2 u^m - u^{m-1} + tau^2 (F^m - A u^m)`.
///
/// `load` is the right-hand side evaluated at the time of `state.u_curr`.
/// No linear solve is performed.
pub fn step_explicit(a: &SparseOperator, state: &mut WaveState, load: &[f64]) -> Result<()> {
    let n = state.u_curr.len();
    assert_eq!(load.len(), n, "load length");
    let t2 = state.tau * state.tau;
    let mut next = a.matvec(&state.u_curr);
    let mut finite = true;
    for i in 0..n {
        let v = 2.0 * state.u_curr[i] - state.u_prev[i] + t2 * (load[i] - next[i]);
        finite &= v.is_finite();
        next[i] = v;
    }
    if !finite {
        return Err(Error::NonFinite {
            step: state.step + 1,
        });
    }
    state.u_prev = std::mem::replace(&mut state.u_curr, next);
    state.step += 1;
    Ok(())
}

/// Discrete total energy of the snapshot pair held by `state`:
///
/// ```text
///   Q = ||d/tau||_M^2 - (tau/2)^2 a(d/tau, d/tau) + a(u_mid, u_mid),
/// ```
///
/// with `d = u_curr - u_prev` and `u_mid = (u_curr + u_prev)/2`.  `mass`
/// of `None` means the identity.  Evaluating the elastic term at the
/// midpoint makes `Q` the exact invariant of the unforced recurrence (by
/// polarization it equals `||d/tau||_M^2 + a(u_curr, u_prev)`), and under
/// the CFL condition both quadratic contributions are nonnegative.
pub fn discrete_energy(state: &WaveState, a: &SparseOperator, mass: Option<&SparseOperator>) -> f64 {
    let n = state.u_curr.len();
    let inv_tau = 1.0 / state.tau;
    let mut vel = vec![0.0; n];
    let mut mid = vec![0.0; n];
    for i in 0..n {
        vel[i] = (state.u_curr[i] - state.u_prev[i]) * inv_tau;
        mid[i] = 0.5 * (state.u_curr[i] + state.u_prev[i]);
    }
    let kinetic = match mass {
        Some(m) => m.quadratic(&vel),
        None => dot(&vel, &vel),
    };
    let correction = 0.25 * state.tau * state.tau * a.quadratic(&vel);
    kinetic - correction + a.quadratic(&mid)
}

/// How the fine mass matrix enters the per-step solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MassTreatment {
    /// Consistent mass, factored once and back-substituted every step.
    Consistent,
    /// Row-sum lumped diagonal; stepping becomes matrix-free.
    Lumped,
}

/// Fine-grid leapfrog propagator.
pub struct FineWave<'a> {
    ops: &'a FineOperators,
    tau: f64,
    mass_factor: Option<LdlFactor>,
    lumped: Option<Vec<f64>>,
}

impl<'a> FineWave<'a> {
    /// Prepares the mass treatment; the consistent variant factors the
    /// rho-weighted mass once.
    pub fn new(
        mesh: &MeshHierarchy,
        media: &crate::media::MediaField,
        ops: &'a FineOperators,
        tau: f64,
        treatment: MassTreatment,
    ) -> Result<Self> {
        let (mass_factor, lumped) = match treatment {
            MassTreatment::Consistent => (Some(LdlFactor::new(&ops.mass_rho)?), None),
            MassTreatment::Lumped => {
                let mut d = crate::assembly::lumped_mass(mesh, media, true);
                let mask = mesh.boundary_mask();
                for (i, m) in d.iter_mut().enumerate() {
                    if mask[i] {
                        *m = 1.0;
                    }
                }
                (None, Some(d))
            }
        };
        Ok(FineWave {
            ops,
            tau,
            mass_factor,
            lumped,
        })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Taylor-corrected initial pair from nodal data already in the
    /// discrete space (zero on the Dirichlet boundary):
    ///
    /// ```text
    ///   u^0 = u0,
    ///   s(u^1, v) = s(u0 + tau*v0, v) + (tau^2/2) (F^0(v) - a(u^0, v)),
    /// ```
    ///
    /// solved with the unweighted mass, matching the projection form of
    /// the continuous rule.  `load0` must have Dirichlet entries
    /// eliminated.
    pub fn initial_state(&self, u0: &[f64], v0: &[f64], load0: &[f64]) -> Result<WaveState> {
        let n = self.ops.mass_unit.nrows();
        for (len, what) in [(u0.len(), "u0"), (v0.len(), "v0"), (load0.len(), "load0")] {
            if len != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: len,
                    context: format!("initial data vector {what}"),
                });
            }
        }
        let half_t2 = 0.5 * self.tau * self.tau;
        let mut taylor = vec![0.0; n];
        for i in 0..n {
            taylor[i] = u0[i] + self.tau * v0[i];
        }
        let mut rhs = self.ops.mass_unit.matvec(&taylor);
        let a_u0 = self.ops.a_dg.matvec(u0);
        for i in 0..n {
            rhs[i] += half_t2 * (load0[i] - a_u0[i]);
        }
        let factor = LdlFactor::new(&self.ops.mass_unit)?;
        let u1 = factor.solve(&rhs);
        Ok(WaveState::new(u0.to_vec(), u1, self.tau))
    }

    /// One leapfrog step; `load` is the consistent load at the time of
    /// `state.u_curr`.
    pub fn step(&self, state: &mut WaveState, load: &[f64]) -> Result<()> {
        let n = state.u_curr.len();
        assert_eq!(load.len(), n, "load length");
        let t2 = state.tau * state.tau;
        let mut r = self.ops.a_dg.matvec(&state.u_curr);
        for i in 0..n {
            r[i] = t2 * (load[i] - r[i]);
        }
        let incr = match (&self.mass_factor, &self.lumped) {
            (Some(f), _) => f.solve(&r),
            (None, Some(d)) => {
                for i in 0..n {
                    r[i] /= d[i];
                }
                r
            }
            _ => unreachable!("one mass treatment is always prepared"),
        };
        let mut next = vec![0.0; n];
        let mut finite = true;
        for i in 0..n {
            let v = 2.0 * state.u_curr[i] - state.u_prev[i] + incr[i];
            finite &= v.is_finite();
            next[i] = v;
        }
        if !finite {
            return Err(Error::NonFinite {
                step: state.step + 1,
            });
        }
        state.u_prev = std::mem::replace(&mut state.u_curr, next);
        state.step += 1;
        Ok(())
    }

    /// Discrete energy of the current snapshot pair (rho-weighted mass).
    pub fn energy(&self, state: &WaveState) -> f64 {
        discrete_energy(state, &self.ops.a_dg, Some(&self.ops.mass_rho))
    }
}

/// Coarse-grid leapfrog propagator; stepping is fully explicit because
/// the projected mass is the identity by construction.
pub struct CoarseWave<'a> {
    cem: &'a CemSpace,
    tau: f64,
}

impl<'a> CoarseWave<'a> {
    pub fn new(cem: &'a CemSpace, tau: f64) -> Self {
        CoarseWave { cem, tau }
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn cem(&self) -> &CemSpace {
        self.cem
    }

    /// Initial coefficient pair from fine nodal data: `c^0` is the
    /// s-projection of `u0` onto the coarse space (Gram solve), and `c^1`
    /// applies the same Taylor correction as the fine rule, tested
    /// against the coarse basis.  `load0` is the consistent fine load at
    /// `t = 0`.
    pub fn initial_state(
        &self,
        mesh: &MeshHierarchy,
        ops: &FineOperators,
        u0: &[f64],
        v0: &[f64],
        load0: &[f64],
    ) -> Result<WaveState> {
        let n = mesh.num_fine_dofs();
        for (len, what) in [(u0.len(), "u0"), (v0.len(), "v0"), (load0.len(), "load0")] {
            if len != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: len,
                    context: format!("coarse initial data vector {what}"),
                });
            }
        }
        let gram = self.cem.project_operator(mesh, &ops.mass_unit);
        let factor = LdlFactor::new(&gram)?;

        let b0 = self.cem.project_vector(&ops.mass_unit.matvec(u0));
        let c0 = factor.solve(&b0);

        let half_t2 = 0.5 * self.tau * self.tau;
        let mut taylor = vec![0.0; n];
        for i in 0..n {
            taylor[i] = u0[i] + self.tau * v0[i];
        }
        let mut fine_rhs = ops.mass_unit.matvec(&taylor);
        for i in 0..n {
            fine_rhs[i] += half_t2 * load0[i];
        }
        let mut b1 = self.cem.project_vector(&fine_rhs);
        let a_c0 = self.cem.a_c().matvec(&c0);
        for (b, a) in b1.iter_mut().zip(&a_c0) {
            *b -= half_t2 * a;
        }
        let c1 = factor.solve(&b1);
        Ok(WaveState::new(c0, c1, self.tau))
    }

    /// One explicit step; `coarse_load` is the coarse right-hand side at
    /// the time of `state.u_curr` (see [`CemSpace::coarse_load`]).
    pub fn step(&self, state: &mut WaveState, coarse_load: &[f64]) -> Result<()> {
        step_explicit(self.cem.a_c(), state, coarse_load)
    }

    /// Discrete energy measured with the projected mass `M_c`.
    pub fn energy(&self, state: &WaveState) -> f64 {
        discrete_energy(state, self.cem.a_c(), Some(self.cem.m_c()))
    }
}

/// Outcome of the CFL verification.
#[derive(Debug, Clone, Copy)]
pub struct StabilityReport {
    /// Power-iteration estimate of the largest generalized eigenvalue of
    /// `(A, M)`.
    pub lambda_max: f64,
    /// Stable step bound `2 / sqrt(lambda_max)` (infinite for `A = 0`).
    pub tau_max: f64,
    /// The step that was checked.
    pub tau: f64,
    /// Safety factor applied to the bound.
    pub safety: f64,
    /// `tau <= safety * tau_max`.
    pub pass: bool,
    /// Power iterations used.
    pub iterations: usize,
}

impl StabilityReport {
    /// Turns a failed verdict into [`Error::UnstableTimeStep`].
    pub fn ensure(&self) -> Result<()> {
        if self.pass {
            Ok(())
        } else {
            Err(Error::UnstableTimeStep {
                tau: self.tau,
                bound: self.safety * self.tau_max,
                safety: self.safety,
            })
        }
    }
}

/// Default safety factor of the CFL check.
pub const DEFAULT_CFL_SAFETY: f64 = 0.9;

/// Estimates `lambda_max(M^{-1} A)` by power iteration (deterministic
/// start vector, relative tolerance 1e-6 on the Rayleigh quotient) and
/// verdicts `tau <= safety * 2 / sqrt(lambda_max)`.  `mass` of `None`
/// means the identity, which is also the right choice for the coarse
/// system because its stepping uses the identity structurally.
pub fn check_stability(
    a: &SparseOperator,
    mass: Option<&SparseOperator>,
    tau: f64,
    safety: f64,
) -> Result<StabilityReport> {
    let n = a.nrows();
    let factor = match mass {
        Some(m) => Some(LdlFactor::new(m)?),
        None => None,
    };
    let mut v: Vec<f64> = (0..n).map(|i| ((i + 1) as f64).sin()).collect();
    let norm = dot(&v, &v).sqrt();
    for x in v.iter_mut() {
        *x /= norm;
    }

    let mut lambda = 0.0;
    let mut iterations = 0;
    const TOL: f64 = 1e-6;
    const MAX_ITER: usize = 20_000;
    loop {
        iterations += 1;
        let av = a.matvec(&v);
        let num = dot(&v, &av);
        let den = match (&factor, mass) {
            (Some(_), Some(m)) => m.quadratic(&v),
            _ => dot(&v, &v),
        };
        let lambda_new = num / den;

        let z = match &factor {
            Some(f) => f.solve(&av),
            None => av,
        };
        let z_norm = dot(&z, &z).sqrt();
        if z_norm == 0.0 {
            // A v = 0 from a generic start vector: treat A as null.
            lambda = 0.0;
            break;
        }
        let converged = (lambda_new - lambda).abs() <= TOL * lambda_new.abs().max(f64::MIN_POSITIVE);
        lambda = lambda_new;
        if converged && iterations > 1 {
            break;
        }
        if iterations >= MAX_ITER {
            return Err(Error::NoConvergence(format!(
                "power iteration for lambda_max stalled after {MAX_ITER} iterations (last {lambda:.6e})"
            )));
        }
        for (x, zi) in v.iter_mut().zip(&z) {
            *x = zi / z_norm;
        }
    }

    let tau_max = if lambda > 0.0 {
        2.0 / lambda.sqrt()
    } else {
        f64::INFINITY
    };
    Ok(StabilityReport {
        lambda_max: lambda,
        tau_max,
        tau,
        safety,
        pass: tau <= safety * tau_max,
        iterations,
    })
}
