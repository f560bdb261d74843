//! Memory-kernel reduction of the baths.
//!
//! Eliminating a bath by the variation-of-constants formula turns its force
//! on the coupled oscillator into a history term: phi(t) = phi0(t) +
//! int_0^t w(tau) q(t - tau) dtau, where phi0 comes from the free bath
//! evolution of the initial data and w is the inverse transform of
//! 2 pi kappa^2(nu)/(i nu). For the supported families kappa^2 is even, so
//! w is real and odd: w(tau) = int kappa^2(nu) sin(nu tau)/nu dnu. The
//! reduced equation is integrated as an independent oracle against the
//! direct simulation; the transform ŵ_diamond is implemented for
//! validation (its value at 0 is the coupling constant K).

use num_complex::Complex64;

use crate::dynamics::{System, Trajectory, TrajectoryMeta, FullState, IntegratorConfig};
use crate::error::{Error, Result};
use crate::quad;
use crate::thermostat::{BathState, CouplingSpec, SpectralGrid};

/// Tabulated memory kernel of one thermostat on a uniform lag grid.
#[derive(Clone, Debug)]
pub struct MemoryKernel {
    pub dtau: f64,
    pub tau_max: f64,
    /// w(i dtau) for i = 0..=tau_max/dtau; w(0) = 0 and the tail at
    /// tau_max is below the build tolerance.
    pub w: Vec<f64>,
    /// Continuum coupling constant K of the same thermostat.
    pub k: f64,
}

/// Kernel value w(tau) = int kappa^2(nu) sin(nu tau)/nu dnu by adaptive
/// quadrature on the analytic family.
pub fn w_value(c: &CouplingSpec, tau: f64, tol: f64) -> Result<f64> {
    if tau == 0.0 {
        return Ok(0.0);
    }
    let cut = c.tail_cutoff(0.05 * tol);
    // even integrand, regular at 0: (kappa^2/nu^2) * nu * sin(nu tau)
    let f = |nu: f64| c.kappa_sq_over_nu_sq(nu) * nu * (nu * tau).sin();
    let panels = (cut * tau.abs() / std::f64::consts::PI).ceil() as usize + 4;
    Ok(2.0 * quad::integrate_panels(f, 0.0, cut, panels, 0.45 * tol)?)
}

/// Quadrature tolerance for kernel tabulation.
const W_TOLERANCE: f64 = 1e-11;

/// Tabulate the kernel on lags 0, dtau, ..., tau_max.
///
/// Fails when `tau_max` is not a lag-grid multiple or when the kernel has
/// not decayed below `tail_tol` at the cutoff.
pub fn build_kernel(c: &CouplingSpec, dtau: f64, tau_max: f64, tail_tol: f64) -> Result<MemoryKernel> {
    if !(dtau > 0.0) || !(tau_max > 0.0) {
        return Err(Error::InvalidInput("kernel needs dtau > 0 and tau_max > 0".into()));
    }
    let n = (tau_max / dtau).round() as usize;
    if n == 0 || (n as f64 * dtau - tau_max).abs() > 1e-9 * tau_max.max(1.0) {
        return Err(Error::InvalidInput(format!(
            "tau_max = {tau_max} is not a multiple of dtau = {dtau}"
        )));
    }
    let mut w = Vec::with_capacity(n + 1);
    for i in 0..=n {
        w.push(w_value(c, i as f64 * dtau, W_TOLERANCE)?);
    }
    let tail = w.last().unwrap().abs();
    if tail > tail_tol {
        return Err(Error::KernelTail { tau_max, tail, tol: tail_tol });
    }
    Ok(MemoryKernel { dtau, tau_max, k: crate::thermostat::compute_k(c, 1e-12)?, w })
}

/// Lag cutoff at which a family's kernel has decayed to ~1e-12, rounded up
/// to a whole number. Scenario default for kernel tabulation.
pub fn default_tau_max(c: &CouplingSpec) -> f64 {
    match *c {
        CouplingSpec::Gauss { sigma, .. } => (12.0 / sigma).ceil().max(2.0),
        // poles of kappa^2 at nu = +/- i give exponential decay ~ e^{-tau}
        CouplingSpec::Rational { .. } => 36.0,
    }
}

/// Value of ŵ_diamond^±(nu) together with an estimate of the quadrature
/// error of its principal-value part.
#[derive(Clone, Copy, Debug)]
pub struct WDiamond {
    pub value: Complex64,
    pub quad_error: f64,
}

/// ŵ_diamond^±(nu) = ±(1/4)(ŵ(nu) - ŵ(-nu)) + (1/(2 pi i)) v.p. int
/// lambda ŵ(lambda)/(nu^2 - lambda^2) dlambda, for ŵ = 2 pi kappa^2/(i nu).
///
/// For the even-kappa^2 families the first term is ∓ i pi kappa^2(nu)/nu
/// and the principal-value term reduces to the real integral
/// v.p. int kappa^2(lambda)/(lambda^2 - nu^2) dlambda, which equals K at
/// nu = 0.
pub fn w_diamond_hat(c: &CouplingSpec, nu: f64, plus: bool, tol: f64) -> Result<WDiamond> {
    let sign = if plus { 1.0 } else { -1.0 };
    // ±(1/4)(ŵ(nu) - ŵ(-nu)) = ∓ i pi kappa^2(nu)/nu, regular at 0
    let imag = -sign * std::f64::consts::PI * c.kappa_sq_over_nu_sq(nu) * nu;

    let nu_abs = nu.abs();
    let cut = c.tail_cutoff(0.02 * tol).max(2.0 * nu_abs + 1.0);
    let real = if nu_abs < 1e-12 {
        2.0 * quad::integrate(|l| c.kappa_sq_over_nu_sq(l), 0.0, cut, 0.45 * tol)?
    } else {
        // v.p. int_R kappa^2(l)/(l^2 - nu^2) dl, even in l; excise the
        // singularity at l = |nu| symmetrically
        let delta = (0.5 * nu_abs).min(0.5);
        let g = |l: f64| c.kappa_sq(l) / (l + nu_abs);
        let g_prime = {
            let l = nu_abs;
            (c.kappa_sq_d1(l) * (l + nu_abs) - c.kappa_sq(l)) / ((l + nu_abs) * (l + nu_abs))
        };
        let f = |l: f64| c.kappa_sq(l) / (l * l - nu * nu);
        let inner = quad::integrate(f, 0.0, nu_abs - delta, 0.15 * tol)?;
        let sym = quad::principal_value_symmetric(g, nu_abs, delta, g_prime, 0.15 * tol)?;
        let outer = quad::integrate(f, nu_abs + delta, cut, 0.15 * tol)?;
        2.0 * (inner + sym + outer)
    };
    Ok(WDiamond { value: Complex64::new(real, imag), quad_error: tol })
}

/// Free-bath force phi0(t) = sum_k w_k kappa(nu_k) [xi0_k cos(nu_k t) +
/// (xidot0_k / nu_k) sin(nu_k t)], evaluated on the same grid as the direct
/// simulation so the reduced model shares its discretization.
pub fn noise_term(init: &BathState, c: &CouplingSpec, g: &SpectralGrid, t: f64) -> f64 {
    let mut s = 0.0;
    for (k, &nu) in g.nodes().iter().enumerate() {
        let (sn, cs) = (nu * t).sin_cos();
        s += g.weights()[k] * c.kappa(nu) * (init.xi[k] * cs + init.xidot[k] / nu * sn);
    }
    s
}

/// phi(t) - K q(t) per thermostat along a trajectory; the residual force
/// that has to vanish at large times.
#[derive(Clone, Debug)]
pub struct ThetaSeries {
    pub times: Vec<f64>,
    /// [sample][thermostat]
    pub theta: Vec<Vec<f64>>,
    /// sup |theta_m| over the final quarter of the horizon, per thermostat
    pub tail_sup: Vec<f64>,
}

pub fn theta_decomposition(traj: &Trajectory, k_per_thermostat: &[f64]) -> ThetaSeries {
    assert_eq!(k_per_thermostat.len(), traj.meta.n_thermostats);
    let nm = traj.meta.n_thermostats;
    let mut theta = Vec::with_capacity(traj.times.len());
    for (i, phi_row) in traj.phi.iter().enumerate() {
        let row: Vec<f64> = (0..nm)
            .map(|m| phi_row[m] - k_per_thermostat[m] * traj.q[i][traj.meta.thermostat_vertex[m]])
            .collect();
        theta.push(row);
    }
    let t_end = *traj.times.last().unwrap_or(&0.0);
    let t_start = traj.times.first().copied().unwrap_or(0.0);
    let tail_from = t_end - 0.25 * (t_end - t_start);
    let mut tail_sup = vec![0.0f64; nm];
    for (i, t) in traj.times.iter().enumerate() {
        if *t >= tail_from {
            for m in 0..nm {
                tail_sup[m] = tail_sup[m].max(theta[i][m].abs());
            }
        }
    }
    ThetaSeries { times: traj.times.clone(), theta, tail_sup }
}

/// Integrate the reduced (memory-kernel) equations of motion:
/// qddot_j = -U_j' + sum V' + [phi0_j(t) + int_0^t w_j(tau) q_j(t-tau) dtau]
/// on coupled vertices, with trapezoid convolution over the stored history
/// and a kick-drift-kick outer scheme. Returns a trajectory in the same
/// format as the direct simulation (bath energies reconstructed through the
/// quadratic energy identity / the spectral representation of the bath).
///
/// Restricted to networks where every coupled vertex carries exactly one
/// thermostat; requires `kernel.dtau == cfg.dt`.
pub fn integrate_gle(
    sys: &System,
    kernels: &[MemoryKernel],
    init: &FullState,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    cfg.validate(sys.grid())?;
    let nm = sys.n_thermostats();
    if kernels.len() != nm {
        return Err(Error::InvalidInput(format!(
            "need one kernel per thermostat ({nm} expected, got {})",
            kernels.len()
        )));
    }
    {
        let mut seen = std::collections::BTreeSet::new();
        for m in 0..nm {
            if !seen.insert(sys.thermostat_vertex_index(m)) {
                return Err(Error::InvalidInput(
                    "reduced integration requires single-bath vertices".into(),
                ));
            }
        }
    }
    for ker in kernels {
        if (ker.dtau - cfg.dt).abs() > 1e-12 * cfg.dt {
            return Err(Error::InvalidInput(format!(
                "kernel lag grid dtau = {} must equal dt = {}",
                ker.dtau, cfg.dt
            )));
        }
    }
    let n_steps = cfg.n_steps();
    let dt = cfg.dt;
    let nv = sys.net().n();
    let grid = sys.grid();
    let nodes = grid.nodes();
    let weights = grid.weights();

    // Precompute phi0 at every step time by phasor recurrence.
    let mut noise = vec![vec![0.0f64; n_steps + 1]; nm];
    {
        let step_cos: Vec<f64> = nodes.iter().map(|nu| (nu * dt).cos()).collect();
        let step_sin: Vec<f64> = nodes.iter().map(|nu| (nu * dt).sin()).collect();
        for m in 0..nm {
            let kap = sys.kappa_table(m);
            let b = &init.baths[m];
            let mut cos_t = vec![1.0f64; nodes.len()];
            let mut sin_t = vec![0.0f64; nodes.len()];
            for step in 0..=n_steps {
                let mut s = 0.0;
                for k in 0..nodes.len() {
                    s += weights[k] * kap[k] * (b.xi[k] * cos_t[k] + b.xidot[k] / nodes[k] * sin_t[k]);
                }
                noise[m][step] = s;
                for k in 0..nodes.len() {
                    let (c0, s0) = (cos_t[k], sin_t[k]);
                    cos_t[k] = c0 * step_cos[k] - s0 * step_sin[k];
                    sin_t[k] = s0 * step_cos[k] + c0 * step_sin[k];
                }
            }
        }
    }

    // Incremental spectral history: qhat_m(nu_k, t) = int_0^t e^{-i nu s} q_m(s) ds
    // (composite trapezoid), for the bath-energy identity
    // E_m(t) = 1/2 || bxi0 + kappa qhat ||^2.
    let mut qhat_re = vec![vec![0.0f64; nodes.len()]; nm];
    let mut qhat_im = vec![vec![0.0f64; nodes.len()]; nm];
    let step_cos: Vec<f64> = nodes.iter().map(|nu| (nu * dt).cos()).collect();
    let step_sin: Vec<f64> = nodes.iter().map(|nu| (nu * dt).sin()).collect();
    // e^{-i nu t} phasors
    let mut ph_re = vec![1.0f64; nodes.len()];
    let mut ph_im = vec![0.0f64; nodes.len()];

    let bath_energy_of = |m: usize, qre: &[f64], qim: &[f64]| -> f64 {
        let kap = sys.kappa_table(m);
        let b = &init.baths[m];
        let mut e = 0.0;
        for k in 0..nodes.len() {
            let re = b.xidot[k] + kap[k] * qre[k];
            let im = nodes[k] * b.xi[k] + kap[k] * qim[k];
            e += weights[k] * (re * re + im * im);
        }
        0.5 * e
    };

    let mut q = init.q.clone();
    let mut p = init.p.clone();
    // per-thermostat coordinate history at step times
    let mut hist: Vec<Vec<f64>> = (0..nm).map(|m| vec![q[sys.thermostat_vertex_index(m)]]).collect();

    let convolution = |ker: &MemoryKernel, h: &[f64], step: usize| -> f64 {
        let lags = ker.w.len() - 1;
        let reach = step.min(lags);
        if reach == 0 {
            return 0.0;
        }
        let mut s = 0.5 * (ker.w[0] * h[step] + ker.w[reach] * h[step - reach]);
        for i in 1..reach {
            s += ker.w[i] * h[step - i];
        }
        s * ker.dtau
    };

    let mut mech = vec![0.0f64; nv];
    let force = |q: &[f64], step: usize, hist: &Vec<Vec<f64>>, mech: &mut Vec<f64>| -> Vec<f64> {
        sys.net().mechanical_forces_into(q, mech);
        let mut f = mech.clone();
        for m in 0..nm {
            f[sys.thermostat_vertex_index(m)] += noise[m][step] + convolution(&kernels[m], &hist[m], step);
        }
        f
    };

    let n_samples = n_steps / cfg.sample_every + 1;
    let mut traj = Trajectory {
        times: Vec::with_capacity(n_samples),
        q: Vec::with_capacity(n_samples),
        p: Vec::with_capacity(n_samples),
        bath_energy: Vec::with_capacity(n_samples),
        phi: Vec::with_capacity(n_samples),
        energy: Vec::with_capacity(n_samples),
        eta_energy: None,
        final_state: None,
        meta: TrajectoryMeta {
            vertex_ids: sys.net().vertices().to_vec(),
            n_thermostats: nm,
            thermostat_vertex: (0..nm).map(|m| sys.thermostat_vertex_index(m)).collect(),
            dt,
            sample_dt: dt * cfg.sample_every as f64,
            horizon: cfg.horizon,
            recurrence_horizon: crate::thermostat::recurrence_horizon(grid),
            scheme: cfg.scheme,
        },
    };

    let record = |step: usize,
                      q: &[f64],
                      p: &[f64],
                      hist: &Vec<Vec<f64>>,
                      qhat_re: &[Vec<f64>],
                      qhat_im: &[Vec<f64>],
                      traj: &mut Trajectory|
     -> Result<()> {
        if !q.iter().chain(p.iter()).all(|x| x.is_finite()) {
            return Err(Error::IntegratorFailure {
                t: step as f64 * dt,
                reason: "reduced state became non-finite".into(),
            });
        }
        let t = step as f64 * dt;
        let phis: Vec<f64> =
            (0..nm).map(|m| noise[m][step] + convolution(&kernels[m], &hist[m], step)).collect();
        let baths: Vec<f64> = (0..nm).map(|m| bath_energy_of(m, &qhat_re[m], &qhat_im[m])).collect();
        let mut e = p.iter().map(|x| 0.5 * x * x).sum::<f64>() + sys.net().mechanical_potential(q);
        for m in 0..nm {
            e += baths[m] - q[sys.thermostat_vertex_index(m)] * phis[m];
        }
        traj.times.push(t);
        traj.q.push(q.to_vec());
        traj.p.push(p.to_vec());
        traj.bath_energy.push(baths);
        traj.phi.push(phis);
        traj.energy.push(e);
        Ok(())
    };

    record(0, &q, &p, &hist, &qhat_re, &qhat_im, &mut traj)?;
    let h = 0.5 * dt;
    let mut f = force(&q, 0, &hist, &mut mech);
    for step in 1..=n_steps {
        for j in 0..nv {
            p[j] += h * f[j];
        }
        for j in 0..nv {
            q[j] += dt * p[j];
        }
        for m in 0..nm {
            hist[m].push(q[sys.thermostat_vertex_index(m)]);
        }
        // advance e^{-i nu t} and accumulate the trapezoid increment of qhat
        for m in 0..nm {
            let v = sys.thermostat_vertex_index(m);
            let (q_old, q_new) = (hist[m][step - 1], q[v]);
            for k in 0..nodes.len() {
                let re_old = ph_re[k];
                let im_old = ph_im[k];
                let re_new = re_old * step_cos[k] + im_old * step_sin[k];
                let im_new = im_old * step_cos[k] - re_old * step_sin[k];
                qhat_re[m][k] += 0.5 * dt * (re_old * q_old + re_new * q_new);
                qhat_im[m][k] += 0.5 * dt * (im_old * q_old + im_new * q_new);
                if m + 1 == nm {
                    ph_re[k] = re_new;
                    ph_im[k] = im_new;
                }
            }
        }
        f = force(&q, step, &hist, &mut mech);
        for j in 0..nv {
            p[j] += h * f[j];
        }
        if step % cfg.sample_every == 0 {
            record(step, &q, &p, &hist, &qhat_re, &qhat_im, &mut traj)?;
        }
    }
    Ok(traj)
}
