//! Spectral discretization of the continuum thermostats: coupling function
//! families, the symmetric midpoint frequency grid, bath mode states and
//! energies, and the coupling constant K = int kappa^2 / nu^2 dnu.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad;

/// Analytic coupling family. Both members vanish at nu = 0 exactly once,
/// are odd and C-infinity, and decay fast enough for every integral the
/// model needs (the rational family requires p >= 2).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum CouplingSpec {
    /// kappa(nu) = a nu exp(-nu^2 / (2 sigma^2))
    Gauss { a: f64, sigma: f64 },
    /// kappa(nu) = a nu / (1 + nu^2)^p
    Rational { a: f64, p: u32 },
}

impl CouplingSpec {
    pub fn gauss(a: f64, sigma: f64) -> Result<Self> {
        if !(a > 0.0) || !(sigma > 0.0) {
            return Err(Error::InvalidCoupling(format!("gauss requires a > 0, sigma > 0 (got a = {a}, sigma = {sigma})")));
        }
        Ok(CouplingSpec::Gauss { a, sigma })
    }

    pub fn rational(a: f64, p: u32) -> Result<Self> {
        if !(a > 0.0) {
            return Err(Error::InvalidCoupling(format!("rational requires a > 0 (got {a})")));
        }
        if p < 2 {
            return Err(Error::InvalidCoupling(format!("rational requires p >= 2 (got {p})")));
        }
        Ok(CouplingSpec::Rational { a, p })
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            CouplingSpec::Gauss { a, sigma } => CouplingSpec::gauss(a, sigma).map(|_| ()),
            CouplingSpec::Rational { a, p } => CouplingSpec::rational(a, p).map(|_| ()),
        }
    }

    pub fn kappa(&self, nu: f64) -> f64 {
        match *self {
            CouplingSpec::Gauss { a, sigma } => a * nu * (-nu * nu / (2.0 * sigma * sigma)).exp(),
            CouplingSpec::Rational { a, p } => a * nu / (1.0 + nu * nu).powi(p as i32),
        }
    }

    /// kappa(nu)^2 / nu^2 in closed form; regular everywhere including nu = 0.
    pub fn kappa_sq_over_nu_sq(&self, nu: f64) -> f64 {
        match *self {
            CouplingSpec::Gauss { a, sigma } => a * a * (-nu * nu / (sigma * sigma)).exp(),
            CouplingSpec::Rational { a, p } => a * a / (1.0 + nu * nu).powi(2 * p as i32),
        }
    }

    pub fn kappa_sq(&self, nu: f64) -> f64 {
        nu * nu * self.kappa_sq_over_nu_sq(nu)
    }

    /// d(kappa^2)/dnu in closed form.
    pub fn kappa_sq_d1(&self, nu: f64) -> f64 {
        match *self {
            CouplingSpec::Gauss { a, sigma } => {
                let s2 = sigma * sigma;
                a * a * (-nu * nu / s2).exp() * (2.0 * nu - 2.0 * nu * nu * nu / s2)
            }
            CouplingSpec::Rational { a, p } => {
                let d = 1.0 + nu * nu;
                2.0 * a * a * nu * d.powi(-(2 * p as i32 + 1)) * (d - 2.0 * p as f64 * nu * nu)
            }
        }
    }

    /// Upper bound for the one-sided tails int_c^inf kappa^2/nu^2 and
    /// int_c^inf kappa^2/nu, valid for c >= max(1, sigma).
    fn tail_bound(&self, c: f64) -> f64 {
        match *self {
            CouplingSpec::Gauss { a, sigma } => a * a * sigma * sigma * (-c * c / (sigma * sigma)).exp(),
            CouplingSpec::Rational { a, p } => a * a * (1.0 + c * c).powi(1 - 2 * p as i32),
        }
    }

    /// Smallest doubling cutoff with both tails below `tol`.
    pub fn tail_cutoff(&self, tol: f64) -> f64 {
        let mut c: f64 = match *self {
            CouplingSpec::Gauss { sigma, .. } => sigma.max(1.0),
            CouplingSpec::Rational { .. } => 1.0,
        };
        while self.tail_bound(c) > tol && c < 1e9 {
            c *= 2.0;
        }
        c
    }
}

/// K = int_R kappa^2(nu) / nu^2 dnu, by adaptive quadrature on the analytic
/// family (never on a simulation grid) to absolute accuracy `tol`.
pub fn compute_k(c: &CouplingSpec, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::Quadrature("compute_k tolerance must be positive".into()));
    }
    let cut = c.tail_cutoff(0.05 * tol);
    let half = quad::integrate(|nu| c.kappa_sq_over_nu_sq(nu), 0.0, cut, 0.45 * tol)?;
    Ok(2.0 * half)
}

/// Uniform midpoint frequency grid, symmetric about 0 and excluding 0.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralGrid {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    nu_max: f64,
}

/// nu_k = -nu_max + (k + 1/2) dnu with dnu = 2 nu_max / count; all weights
/// equal dnu. `count` must be even so 0 is never a node.
pub fn build_grid(nu_max: f64, count: usize) -> Result<SpectralGrid> {
    if !(nu_max > 0.0) {
        return Err(Error::InvalidGrid(format!("nu_max must be positive (got {nu_max})")));
    }
    if count < 2 || count % 2 != 0 {
        return Err(Error::InvalidGrid(format!("count must be even and >= 2 (got {count})")));
    }
    let dnu = 2.0 * nu_max / count as f64;
    let nodes = (0..count).map(|k| -nu_max + (k as f64 + 0.5) * dnu).collect();
    Ok(SpectralGrid { nodes, weights: vec![dnu; count], nu_max })
}

impl SpectralGrid {
    pub fn count(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn nu_max(&self) -> f64 {
        self.nu_max
    }

    pub fn delta_nu(&self) -> f64 {
        2.0 * self.nu_max / self.count() as f64
    }

    /// Tabulate kappa at the grid nodes.
    pub fn tabulate(&self, c: &CouplingSpec) -> Vec<f64> {
        self.nodes.iter().map(|&nu| c.kappa(nu)).collect()
    }
}

/// The discretized bath makes every trajectory quasi-periodic with period
/// about 2 pi / dnu; past half of that the bath starts returning energy and
/// no asymptotic diagnostic is meaningful. Integration horizons are checked
/// against 0.5 * recurrence_horizon.
pub fn recurrence_horizon(g: &SpectralGrid) -> f64 {
    2.0 * std::f64::consts::PI / g.delta_nu()
}

/// One thermostat's mode amplitudes and velocities on the grid.
#[derive(Clone, Debug, PartialEq)]
pub struct BathState {
    pub xi: Vec<f64>,
    pub xidot: Vec<f64>,
}

impl BathState {
    pub fn zeros(g: &SpectralGrid) -> Self {
        BathState { xi: vec![0.0; g.count()], xidot: vec![0.0; g.count()] }
    }

    pub fn is_finite(&self) -> bool {
        self.xi.iter().chain(&self.xidot).all(|x| x.is_finite())
    }
}

/// Initial bath profile families. Each yields finite discrete energy and a
/// finite coupling integral on any truncated grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "snake_case")]
pub enum BathInitSpec {
    Zero,
    /// xi0(nu) = b nu exp(-nu^2/(2 s^2)), xidot0(nu) = c exp(-nu^2/(2 s^2))
    GaussPacket { b: f64, c: f64, s: f64 },
    /// xi0(nu) = kappa(nu) q_ref / nu^2, xidot0 = 0. Paired with a critical
    /// point of the effective potential this is a fixed point of the flow.
    Dressed { q_ref: f64 },
}

/// Fill a bath state by evaluating the profile at the grid nodes.
pub fn init_bath(spec: &BathInitSpec, c: &CouplingSpec, g: &SpectralGrid) -> BathState {
    let mut state = BathState::zeros(g);
    match *spec {
        BathInitSpec::Zero => {}
        BathInitSpec::GaussPacket { b, c: cv, s } => {
            for (k, &nu) in g.nodes().iter().enumerate() {
                let e = (-nu * nu / (2.0 * s * s)).exp();
                state.xi[k] = b * nu * e;
                state.xidot[k] = cv * e;
            }
        }
        BathInitSpec::Dressed { q_ref } => {
            for (k, &nu) in g.nodes().iter().enumerate() {
                state.xi[k] = c.kappa(nu) * q_ref / (nu * nu);
            }
        }
    }
    state
}

/// Bath energy 1/2 sum_k w_k (xidot_k^2 + nu_k^2 xi_k^2).
pub fn bath_energy(s: &BathState, g: &SpectralGrid) -> f64 {
    debug_assert_eq!(s.xi.len(), g.count());
    let mut e = 0.0;
    for k in 0..g.count() {
        let nu = g.nodes[k];
        e += g.weights[k] * (s.xidot[k] * s.xidot[k] + nu * nu * s.xi[k] * s.xi[k]);
    }
    0.5 * e
}

/// Coupling force phi = sum_k w_k kappa(nu_k) xi_k.
pub fn coupling_force(s: &BathState, c: &CouplingSpec, g: &SpectralGrid) -> f64 {
    debug_assert_eq!(s.xi.len(), g.count());
    let mut phi = 0.0;
    for k in 0..g.count() {
        phi += g.weights[k] * c.kappa(g.nodes[k]) * s.xi[k];
    }
    phi
}
