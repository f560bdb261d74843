//! Direct integration of the coupled oscillator/bath system.
//!
//! The step is a palindromic splitting: half-kick of the oscillator momenta,
//! half-interval exact evolution of every bath mode (rotation about the
//! particular solution kappa q / nu^2 with q frozen), full drift of q, the
//! mirror bath half-interval, and the closing half-kick. The stiff bath
//! frequencies never enter a stability constraint because the mode flow is
//! exact; only the smooth oscillator forces are discretized.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{NetworkSpec, VertexId};
use crate::thermostat::{
    bath_energy, compute_k, init_bath, recurrence_horizon, BathInitSpec, BathState,
    SpectralGrid,
};

/// Tolerance for the model constants K_m computed at system assembly.
const K_TOLERANCE: f64 = 1e-12;

/// Network + grid + per-thermostat tables, assembled once per scenario.
#[derive(Clone, Debug)]
pub struct System {
    net: NetworkSpec,
    grid: SpectralGrid,
    /// continuum K_m by adaptive quadrature
    k: Vec<f64>,
    /// grid-quadrature K_m (sum w kappa^2/nu^2); the completed-square
    /// energy form uses this one so the two energy forms agree identically
    k_grid: Vec<f64>,
    kappa: Vec<Vec<f64>>,
    kappa_over_nu2: Vec<Vec<f64>>,
    coupled_vertex: Vec<usize>,
}

impl System {
    pub fn new(net: NetworkSpec, grid: SpectralGrid) -> Result<Self> {
        let mut k = Vec::new();
        let mut k_grid = Vec::new();
        let mut kappa = Vec::new();
        let mut kappa_over_nu2 = Vec::new();
        let mut coupled_vertex = Vec::new();
        for t in net.thermostats() {
            t.coupling.validate()?;
            k.push(compute_k(&t.coupling, K_TOLERANCE)?);
            let tab = grid.tabulate(&t.coupling);
            let mut kg = 0.0;
            for (i, &nu) in grid.nodes().iter().enumerate() {
                kg += grid.weights()[i] * t.coupling.kappa_sq_over_nu_sq(nu);
            }
            k_grid.push(kg);
            kappa_over_nu2
                .push(grid.nodes().iter().zip(&tab).map(|(&nu, &ka)| ka / (nu * nu)).collect());
            kappa.push(tab);
            coupled_vertex.push(net.index_of(t.vertex).expect("validated by NetworkSpec"));
        }
        Ok(System { net, grid, k, k_grid, kappa, kappa_over_nu2, coupled_vertex })
    }

    pub fn net(&self) -> &NetworkSpec {
        &self.net
    }

    pub fn grid(&self) -> &SpectralGrid {
        &self.grid
    }

    pub fn n_thermostats(&self) -> usize {
        self.k.len()
    }

    /// Continuum coupling constants, one per thermostat.
    pub fn k_per_thermostat(&self) -> &[f64] {
        &self.k
    }

    /// Grid-quadrature coupling constants, one per thermostat.
    pub fn k_grid_per_thermostat(&self) -> &[f64] {
        &self.k_grid
    }

    /// Per-vertex sums of the continuum K_m.
    pub fn k_by_vertex(&self) -> Vec<f64> {
        self.net.vertex_k(&self.k)
    }

    pub fn kappa_table(&self, m: usize) -> &[f64] {
        &self.kappa[m]
    }

    pub fn thermostat_vertex_index(&self, m: usize) -> usize {
        self.coupled_vertex[m]
    }

    /// Initial state from per-thermostat bath profiles.
    pub fn init_state(&self, q: Vec<f64>, p: Vec<f64>, baths: &[BathInitSpec]) -> Result<FullState> {
        if q.len() != self.net.n() || p.len() != self.net.n() {
            return Err(Error::InvalidInput(format!(
                "initial q/p must have one entry per vertex ({} expected)",
                self.net.n()
            )));
        }
        if baths.len() != self.n_thermostats() {
            return Err(Error::InvalidInput(format!(
                "need one bath profile per thermostat ({} expected, got {})",
                self.n_thermostats(),
                baths.len()
            )));
        }
        let baths = baths
            .iter()
            .zip(self.net.thermostats())
            .map(|(spec, t)| init_bath(spec, &t.coupling, &self.grid))
            .collect();
        let state = FullState { t: 0.0, q, p, baths };
        if !state.is_finite() {
            return Err(Error::InvalidInput("initial state contains non-finite values".into()));
        }
        Ok(state)
    }

    /// Dressed state at configuration `q`: every bath sits on its particular
    /// solution kappa q_m / nu^2 with zero velocities and momenta. Paired
    /// with a critical point of the effective potential this is a fixed
    /// point of the dynamics.
    pub fn dressed_state(&self, q: &[f64]) -> FullState {
        let baths = self
            .net
            .thermostats()
            .iter()
            .enumerate()
            .map(|(m, t)| {
                init_bath(
                    &BathInitSpec::Dressed { q_ref: q[self.coupled_vertex[m]] },
                    &t.coupling,
                    &self.grid,
                )
            })
            .collect();
        FullState { t: 0.0, q: q.to_vec(), p: vec![0.0; self.net.n()], baths }
    }

    /// The one-oscillator/two-thermostat configuration: exactly two
    /// thermostats on the same vertex with identical coupling.
    pub fn two_bath_pair(&self) -> Option<(usize, usize)> {
        if self.n_thermostats() != 2 || self.coupled_vertex[0] != self.coupled_vertex[1] {
            return None;
        }
        let ts = self.net.thermostats();
        (ts[0].coupling == ts[1].coupling).then_some((0, 1))
    }

    /// Copy of the system with every coupling table zeroed: bath modes turn
    /// into free rotators and the oscillators decouple completely. Test
    /// fixture for exactness checks on the decoupled sub-flows.
    pub fn zero_coupling_ghost(&self) -> System {
        let mut ghost = self.clone();
        for tab in ghost.kappa.iter_mut().chain(ghost.kappa_over_nu2.iter_mut()) {
            tab.iter_mut().for_each(|x| *x = 0.0);
        }
        ghost.k.iter_mut().for_each(|x| *x = 0.0);
        ghost.k_grid.iter_mut().for_each(|x| *x = 0.0);
        ghost
    }

    /// Coupling force of thermostat `m` on its oscillator, by grid quadrature.
    pub fn phi(&self, state: &FullState, m: usize) -> f64 {
        let w = self.grid.weights();
        let mut s = 0.0;
        for (k, &ka) in self.kappa[m].iter().enumerate() {
            s += w[k] * ka * state.baths[m].xi[k];
        }
        s
    }

    fn forces_into(&self, state: &FullState, f: &mut [f64]) {
        self.net.mechanical_forces_into(&state.q, f);
        for m in 0..self.n_thermostats() {
            f[self.coupled_vertex[m]] += self.phi(state, m);
        }
    }
}

/// Complete instantaneous state of the coupled system.
#[derive(Clone, Debug, PartialEq)]
pub struct FullState {
    pub t: f64,
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub baths: Vec<BathState>,
}

impl FullState {
    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(&self.p).all(|x| x.is_finite()) && self.baths.iter().all(|b| b.is_finite())
    }

    /// Momentum reversal (p -> -p, xidot -> -xidot): integrating the
    /// reversed state forward traces the original solution backward in time.
    pub fn time_reversed(&self) -> FullState {
        FullState {
            t: self.t,
            q: self.q.clone(),
            p: self.p.iter().map(|x| -x).collect(),
            baths: self
                .baths
                .iter()
                .map(|b| BathState {
                    xi: b.xi.clone(),
                    xidot: b.xidot.iter().map(|x| -x).collect(),
                })
                .collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    StrangExactBath,
    Rk4Reference,
}

#[derive(Clone, Debug)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub horizon: f64,
    pub sample_every: usize,
    pub scheme: Scheme,
    /// Abort when |E(t) - E(0)| / max(1, |E(0)|) exceeds this.
    pub drift_abort: f64,
}

impl IntegratorConfig {
    pub fn new(dt: f64, horizon: f64, sample_every: usize) -> Self {
        IntegratorConfig {
            dt,
            horizon,
            sample_every,
            scheme: Scheme::StrangExactBath,
            drift_abort: 1e-4,
        }
    }

    pub fn n_steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    pub fn validate(&self, grid: &SpectralGrid) -> Result<()> {
        if !(self.dt > 0.0) || !(self.horizon > 0.0) || self.sample_every == 0 {
            return Err(Error::InvalidInput(
                "integrator needs dt > 0, horizon > 0, sample_every >= 1".into(),
            ));
        }
        let limit = 0.5 * recurrence_horizon(grid);
        if self.horizon > limit {
            return Err(Error::RecurrenceGuard { horizon: self.horizon, limit });
        }
        let n = self.n_steps();
        if n == 0 || n % self.sample_every != 0 {
            return Err(Error::InvalidInput(format!(
                "horizon/dt = {n} steps must be a positive multiple of sample_every = {}",
                self.sample_every
            )));
        }
        if self.scheme == Scheme::Rk4Reference && self.dt * grid.nu_max() >= 2.0 {
            return Err(Error::InvalidInput(format!(
                "rk4 reference scheme is unstable: dt * nu_max = {} >= 2",
                self.dt * grid.nu_max()
            )));
        }
        Ok(())
    }
}

/// Time derivative of a full state under the equations of motion:
/// dq = p, dp_j = -U_j' + sum V' + coupling force, and per bath mode
/// dxi = xidot, dxidot = -nu^2 xi + kappa q_m.
pub fn rhs(sys: &System, state: &FullState) -> FullState {
    let mut dp = vec![0.0; state.q.len()];
    sys.forces_into(state, &mut dp);
    let nodes = sys.grid.nodes();
    let baths = (0..sys.n_thermostats())
        .map(|m| {
            let qm = state.q[sys.coupled_vertex[m]];
            let b = &state.baths[m];
            let mut d = BathState::zeros(&sys.grid);
            for k in 0..nodes.len() {
                d.xi[k] = b.xidot[k];
                d.xidot[k] = -nodes[k] * nodes[k] * b.xi[k] + sys.kappa[m][k] * qm;
            }
            d
        })
        .collect();
    // the t slot of a derivative is dt/dt = 1
    FullState { t: 1.0, q: state.p.clone(), p: dp, baths }
}

/// Total energy in the direct form: kinetic + network potential + bath
/// energies - sum_m q_m phi_m.
pub fn total_energy(sys: &System, state: &FullState) -> f64 {
    let mut e = state.p.iter().map(|p| 0.5 * p * p).sum::<f64>()
        + sys.net.mechanical_potential(&state.q);
    for m in 0..sys.n_thermostats() {
        e += bath_energy(&state.baths[m], &sys.grid)
            - state.q[sys.coupled_vertex[m]] * sys.phi(state, m);
    }
    e
}

/// Total energy in the completed-square form: kinetic + bath kinetic +
/// V_eff(q) + sum_m int (nu^2/2)(xi - kappa q/nu^2)^2. Uses the grid
/// quadrature K so the two forms agree identically on the grid.
pub fn total_energy_completed_square(sys: &System, state: &FullState) -> f64 {
    let mut e = state.p.iter().map(|p| 0.5 * p * p).sum::<f64>()
        + sys.net.mechanical_potential(&state.q);
    let w = sys.grid.weights();
    let nodes = sys.grid.nodes();
    for m in 0..sys.n_thermostats() {
        let qm = state.q[sys.coupled_vertex[m]];
        e -= 0.5 * sys.k_grid[m] * qm * qm;
        let b = &state.baths[m];
        for k in 0..nodes.len() {
            let dev = b.xi[k] - sys.kappa_over_nu2[m][k] * qm;
            e += w[k] * 0.5 * (b.xidot[k] * b.xidot[k] + nodes[k] * nodes[k] * dev * dev);
        }
    }
    e
}

/// Energy of the antisymmetric bath combination (xi_1 - xi_2)/sqrt(2) for
/// the one-oscillator/two-thermostat configuration. This sector is driven
/// by nothing, so its energy is a conserved quantity of the flow.
pub fn eta_energy(sys: &System, state: &FullState, pair: (usize, usize)) -> f64 {
    let (i, j) = pair;
    let (bi, bj) = (&state.baths[i], &state.baths[j]);
    let w = sys.grid.weights();
    let nodes = sys.grid.nodes();
    let mut e = 0.0;
    for k in 0..nodes.len() {
        let dxi = bi.xi[k] - bj.xi[k];
        let dxd = bi.xidot[k] - bj.xidot[k];
        e += w[k] * (dxd * dxd + nodes[k] * nodes[k] * dxi * dxi);
    }
    0.25 * e
}

/// Splitting stepper with precomputed rotation tables for one step size.
pub struct StrangStepper<'a> {
    sys: &'a System,
    dt: f64,
    cos_h: Vec<f64>,
    sin_over_nu: Vec<f64>,
    nu_sin: Vec<f64>,
    force_buf: Vec<f64>,
}

impl<'a> StrangStepper<'a> {
    pub fn new(sys: &'a System, dt: f64) -> Self {
        let h = 0.5 * dt;
        let nodes = sys.grid.nodes();
        let mut cos_h = Vec::with_capacity(nodes.len());
        let mut sin_over_nu = Vec::with_capacity(nodes.len());
        let mut nu_sin = Vec::with_capacity(nodes.len());
        for &nu in nodes {
            let (s, c) = (nu * h).sin_cos();
            cos_h.push(c);
            sin_over_nu.push(s / nu);
            nu_sin.push(nu * s);
        }
        StrangStepper { sys, dt, cos_h, sin_over_nu, nu_sin, force_buf: vec![0.0; sys.net.n()] }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    fn kick(&mut self, state: &mut FullState, h: f64) {
        self.sys.forces_into(state, &mut self.force_buf);
        for (p, f) in state.p.iter_mut().zip(&self.force_buf) {
            *p += h * f;
        }
    }

    /// Exact flow of every bath mode over half a step, with its oscillator
    /// coordinate frozen: rotation about the particular solution kappa q/nu^2.
    fn bath_half(&self, state: &mut FullState) {
        for m in 0..self.sys.n_thermostats() {
            let qm = state.q[self.sys.coupled_vertex[m]];
            let kq2 = &self.sys.kappa_over_nu2[m];
            let b = &mut state.baths[m];
            for k in 0..b.xi.len() {
                let c0 = kq2[k] * qm;
                let dev = b.xi[k] - c0;
                let xd = b.xidot[k];
                b.xi[k] = c0 + dev * self.cos_h[k] + xd * self.sin_over_nu[k];
                b.xidot[k] = -dev * self.nu_sin[k] + xd * self.cos_h[k];
            }
        }
    }

    fn drift(&self, state: &mut FullState, h: f64) {
        for (q, p) in state.q.iter_mut().zip(&state.p) {
            *q += h * p;
        }
    }

    /// One step of the palindromic composition
    /// kick(dt/2) . bath(dt/2) . drift(dt) . bath(dt/2) . kick(dt/2).
    pub fn step(&mut self, state: &mut FullState) {
        let h = 0.5 * self.dt;
        self.kick(state, h);
        self.bath_half(state);
        self.drift(state, self.dt);
        self.bath_half(state);
        self.kick(state, h);
        state.t += self.dt;
    }
}

/// One splitting step; convenience wrapper that builds the rotation tables.
/// Loops should use [`StrangStepper`] directly.
pub fn step_strang(sys: &System, state: &mut FullState, dt: f64) {
    StrangStepper::new(sys, dt).step(state);
}

/// Classic RK4 on the full right-hand side. Retained purely as an
/// independent discretization for short cross-checks; subject to the
/// dt * nu_max stability limit the splitting scheme does not have.
pub fn step_rk4(sys: &System, state: &mut FullState, dt: f64) {
    let axpy = |s: &FullState, d: &FullState, h: f64| -> FullState {
        let mut out = s.clone();
        for (x, dx) in out.q.iter_mut().zip(&d.q) {
            *x += h * dx;
        }
        for (x, dx) in out.p.iter_mut().zip(&d.p) {
            *x += h * dx;
        }
        for (b, db) in out.baths.iter_mut().zip(&d.baths) {
            for (x, dx) in b.xi.iter_mut().zip(&db.xi) {
                *x += h * dx;
            }
            for (x, dx) in b.xidot.iter_mut().zip(&db.xidot) {
                *x += h * dx;
            }
        }
        out
    };
    let k1 = rhs(sys, state);
    let k2 = rhs(sys, &axpy(state, &k1, 0.5 * dt));
    let k3 = rhs(sys, &axpy(state, &k2, 0.5 * dt));
    let k4 = rhs(sys, &axpy(state, &k3, dt));
    let mut acc = axpy(state, &k1, dt / 6.0);
    acc = axpy(&acc, &k2, dt / 3.0);
    acc = axpy(&acc, &k3, dt / 3.0);
    acc = axpy(&acc, &k4, dt / 6.0);
    acc.t = state.t + dt;
    *state = acc;
}

/// Time-sampled observables of one run.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// [sample][vertex]
    pub q: Vec<Vec<f64>>,
    pub p: Vec<Vec<f64>>,
    /// [sample][thermostat]
    pub bath_energy: Vec<Vec<f64>>,
    pub phi: Vec<Vec<f64>>,
    pub energy: Vec<f64>,
    /// Conserved antisymmetric-sector energy, present for the
    /// one-oscillator/two-thermostat configuration.
    pub eta_energy: Option<Vec<f64>>,
    /// Final state; absent for reduced (memory-kernel) runs.
    pub final_state: Option<FullState>,
    pub meta: TrajectoryMeta,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub vertex_ids: Vec<VertexId>,
    pub n_thermostats: usize,
    /// Vertex index each thermostat couples to.
    pub thermostat_vertex: Vec<usize>,
    pub dt: f64,
    pub sample_dt: f64,
    pub horizon: f64,
    pub recurrence_horizon: f64,
    pub scheme: Scheme,
}

impl Trajectory {
    pub fn n_samples(&self) -> usize {
        self.times.len()
    }

    /// Column of one vertex's coordinate across samples.
    pub fn q_series(&self, vertex: usize) -> Vec<f64> {
        self.q.iter().map(|row| row[vertex]).collect()
    }
}

/// Integrate from `init` and record samples. Deterministic given inputs;
/// aborts with a diagnostic on energy-drift or non-finite states.
pub fn simulate(sys: &System, init: &FullState, cfg: &IntegratorConfig) -> Result<Trajectory> {
    cfg.validate(&sys.grid)?;
    let n_steps = cfg.n_steps();
    let n_samples = n_steps / cfg.sample_every + 1;

    let mut traj = Trajectory {
        times: Vec::with_capacity(n_samples),
        q: Vec::with_capacity(n_samples),
        p: Vec::with_capacity(n_samples),
        bath_energy: Vec::with_capacity(n_samples),
        phi: Vec::with_capacity(n_samples),
        energy: Vec::with_capacity(n_samples),
        eta_energy: sys.two_bath_pair().map(|_| Vec::with_capacity(n_samples)),
        final_state: None,
        meta: TrajectoryMeta {
            vertex_ids: sys.net.vertices().to_vec(),
            n_thermostats: sys.n_thermostats(),
            thermostat_vertex: sys.coupled_vertex.clone(),
            dt: cfg.dt,
            sample_dt: cfg.dt * cfg.sample_every as f64,
            horizon: cfg.horizon,
            recurrence_horizon: recurrence_horizon(&sys.grid),
            scheme: cfg.scheme,
        },
    };

    let mut state = init.clone();
    state.t = 0.0;
    let e0 = total_energy(sys, &state);
    let pair = sys.two_bath_pair();

    let record = |state: &FullState, traj: &mut Trajectory| -> Result<()> {
        if !state.is_finite() {
            return Err(Error::IntegratorFailure {
                t: state.t,
                reason: "state became non-finite".into(),
            });
        }
        let e = total_energy(sys, state);
        let drift = (e - e0).abs() / e0.abs().max(1.0);
        if drift > cfg.drift_abort {
            return Err(Error::IntegratorFailure {
                t: state.t,
                reason: format!("energy drift {drift:e} exceeds bound {:e}", cfg.drift_abort),
            });
        }
        traj.times.push(state.t);
        traj.q.push(state.q.clone());
        traj.p.push(state.p.clone());
        traj.bath_energy
            .push((0..sys.n_thermostats()).map(|m| bath_energy(&state.baths[m], &sys.grid)).collect());
        traj.phi.push((0..sys.n_thermostats()).map(|m| sys.phi(state, m)).collect());
        traj.energy.push(e);
        if let (Some(series), Some(pair)) = (traj.eta_energy.as_mut(), pair) {
            series.push(eta_energy(sys, state, pair));
        }
        Ok(())
    };

    record(&state, &mut traj)?;
    match cfg.scheme {
        Scheme::StrangExactBath => {
            let mut stepper = StrangStepper::new(sys, cfg.dt);
            for i in 1..=n_steps {
                stepper.step(&mut state);
                state.t = i as f64 * cfg.dt;
                if i % cfg.sample_every == 0 {
                    record(&state, &mut traj)?;
                }
            }
        }
        Scheme::Rk4Reference => {
            for i in 1..=n_steps {
                step_rk4(sys, &mut state, cfg.dt);
                state.t = i as f64 * cfg.dt;
                if i % cfg.sample_every == 0 {
                    record(&state, &mut traj)?;
                }
            }
        }
    }
    traj.final_state = Some(state);
    Ok(traj)
}

/// Central finite-difference series for qdot, qddot and qdddot at the
/// interior sample times (two samples trimmed at each end).
#[derive(Clone, Debug)]
pub struct DerivativeSeries {
    pub times: Vec<f64>,
    /// [sample][vertex]
    pub qdot: Vec<Vec<f64>>,
    pub qddot: Vec<Vec<f64>>,
    pub qdddot: Vec<Vec<f64>>,
}

pub fn derivative_series(traj: &Trajectory) -> Result<DerivativeSeries> {
    let n = traj.times.len();
    if n < 5 {
        return Err(Error::InvalidInput(format!("derivative series needs >= 5 samples, got {n}")));
    }
    let h = traj.meta.sample_dt;
    let nv = traj.meta.vertex_ids.len();
    let mut out = DerivativeSeries {
        times: traj.times[2..n - 2].to_vec(),
        qdot: Vec::with_capacity(n - 4),
        qddot: Vec::with_capacity(n - 4),
        qdddot: Vec::with_capacity(n - 4),
    };
    for i in 2..n - 2 {
        let mut d1 = Vec::with_capacity(nv);
        let mut d2 = Vec::with_capacity(nv);
        let mut d3 = Vec::with_capacity(nv);
        for j in 0..nv {
            let (qm2, qm1, q0, qp1, qp2) =
                (traj.q[i - 2][j], traj.q[i - 1][j], traj.q[i][j], traj.q[i + 1][j], traj.q[i + 2][j]);
            d1.push((qp1 - qm1) / (2.0 * h));
            d2.push((qp1 - 2.0 * q0 + qm1) / (h * h));
            d3.push((qp2 - 2.0 * qp1 + 2.0 * qm1 - qm2) / (2.0 * h * h * h));
        }
        out.qdot.push(d1);
        out.qddot.push(d2);
        out.qdddot.push(d3);
    }
    Ok(out)
}
