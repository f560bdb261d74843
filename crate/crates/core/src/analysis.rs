//! Post-processing of simulated trajectories: critical points of the
//! effective potential, distance/derivative/energy convergence reports, a
//! windowed spectral-concentration proxy, and the two-thermostat
//! energy-transport analysis.

use nalgebra::DVector;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::Serialize;

use crate::dynamics::{derivative_series, FullState, System, Trajectory};
use crate::error::{Error, Result};
use crate::network::NetworkSpec;
use crate::thermostat::{BathState, SpectralGrid};

/// One critical point of the effective potential.
#[derive(Clone, Debug, Serialize)]
pub struct CriticalPoint {
    pub q: Vec<f64>,
    /// number of negative Hessian eigenvalues
    pub morse_index: usize,
    pub hessian_min_abs_eigenvalue: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CriticalSet {
    pub points: Vec<CriticalPoint>,
    pub box_halfwidth: f64,
    pub dedup_tol: f64,
    pub failed_starts: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct SearchOptions {
    /// starts are drawn from [-box_halfwidth, box_halfwidth]^N
    pub box_halfwidth: f64,
    pub n_starts: usize,
    pub newton_tol: f64,
    pub dedup_tol: f64,
    pub max_iters: usize,
}

impl SearchOptions {
    pub fn default_for(n: usize) -> Self {
        SearchOptions {
            box_halfwidth: 5.0,
            n_starts: 64 * n,
            newton_tol: 1e-10,
            dedup_tol: 1e-6,
            max_iters: 100,
        }
    }
}

/// Damped Newton iteration on the gradient of the effective potential from
/// one start. Returns the converged point or None.
fn newton_from(net: &NetworkSpec, k_by_vertex: &[f64], start: &[f64], opts: &SearchOptions) -> Option<Vec<f64>> {
    let n = net.n();
    let mut x = DVector::from_column_slice(start);
    let escape = 10.0 * opts.box_halfwidth.max(1.0);
    for _ in 0..opts.max_iters {
        let g_vec = net.grad_effective_potential(k_by_vertex, x.as_slice());
        let g = DVector::from_vec(g_vec);
        let gnorm = g.amax();
        if !gnorm.is_finite() || x.amax() > escape {
            return None;
        }
        if gnorm < opts.newton_tol {
            return Some(x.as_slice().to_vec());
        }
        let h = net.hess_effective_potential(k_by_vertex, x.as_slice());
        let scale = h.amax().max(1.0);
        // Newton step, regularized when the Hessian is near-singular or the
        // step fails to reduce the gradient
        let mut lambda = 0.0;
        let mut accepted = false;
        while !accepted {
            let m = if lambda == 0.0 {
                h.clone()
            } else {
                let mut m = h.clone();
                for i in 0..n {
                    m[(i, i)] += lambda;
                }
                m
            };
            if let Some(step) = m.lu().solve(&(-&g)) {
                let candidate = &x + &step;
                let g_new = DVector::from_vec(
                    net.grad_effective_potential(k_by_vertex, candidate.as_slice()),
                );
                if g_new.amax().is_finite() && g_new.amax() < gnorm {
                    x = candidate;
                    accepted = true;
                    continue;
                }
            }
            lambda = if lambda == 0.0 { 1e-8 * scale } else { 10.0 * lambda };
            if lambda > 1e10 * scale {
                return None;
            }
        }
    }
    None
}

/// Multistart Newton search for the critical set of the effective
/// potential. Starts are a deterministic low-discrepancy sample of the box;
/// converged points are deduplicated and classified by the Hessian
/// eigenvalue signs. Starts that fail to converge are counted, never turned
/// into points.
pub fn find_critical_points(net: &NetworkSpec, k_by_vertex: &[f64], opts: SearchOptions) -> CriticalSet {
    let n = net.n();
    let mut found: Vec<Vec<f64>> = Vec::new();
    let mut failed = 0usize;
    for s in 0..opts.n_starts {
        let start: Vec<f64> = (0..n)
            .map(|d| (2.0 * crate::lowdisc::weyl(s as u64 + 1, d) - 1.0) * opts.box_halfwidth)
            .collect();
        match newton_from(net, k_by_vertex, &start, &opts) {
            Some(point) => {
                let dup = found.iter().any(|p| {
                    p.iter().zip(&point).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
                        < opts.dedup_tol
                });
                if !dup {
                    found.push(point);
                }
            }
            None => failed += 1,
        }
    }
    found.sort_by(|a, b| a.partial_cmp(b).expect("finite coordinates"));
    let points = found
        .into_iter()
        .map(|q| {
            let h = net.hess_effective_potential(k_by_vertex, &q);
            let eig = h.symmetric_eigen().eigenvalues;
            let morse_index = eig.iter().filter(|l| **l < 0.0).count();
            let min_abs = eig.iter().fold(f64::INFINITY, |m, l| m.min(l.abs()));
            CriticalPoint { q, morse_index, hessian_min_abs_eigenvalue: min_abs }
        })
        .collect();
    CriticalSet {
        points,
        box_halfwidth: opts.box_halfwidth,
        dedup_tol: opts.dedup_tol,
        failed_starts: failed,
    }
}

/// Euclidean distance from `q` to the critical set and the index of the
/// nearest point (ties broken by lowest index).
pub fn dist_to_critical_set(q: &[f64], cs: &CriticalSet) -> Result<(f64, usize)> {
    if cs.points.is_empty() {
        return Err(Error::InvalidInput("critical set is empty".into()));
    }
    let mut best = (f64::INFINITY, 0usize);
    for (i, p) in cs.points.iter().enumerate() {
        let d = p.q.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        if d < best.0 {
            best = (d, i);
        }
    }
    Ok(best)
}

/// Fraction of windowed spectral power away from frequency zero.
///
/// The series is Hann-windowed (periodic convention) and transformed; power
/// at angular frequencies |lambda| > eps is divided by total power. Bins
/// |k| <= 1 always count as zero-frequency: they carry the DC mainlobe of
/// the window, so frequencies below one bin are indistinguishable from 0 at
/// this window length. Small return values support concentration at 0.
pub fn spectral_diagnostic(series: &[f64], sample_dt: f64, eps: f64) -> Result<f64> {
    let n = series.len();
    if n < 16 {
        return Err(Error::InvalidInput(format!("spectral diagnostic needs >= 16 samples, got {n}")));
    }
    if !(sample_dt > 0.0) || !(eps >= 0.0) {
        return Err(Error::InvalidInput("need sample_dt > 0 and eps >= 0".into()));
    }
    let mut buf: Vec<Complex<f64>> = series
        .iter()
        .enumerate()
        .map(|(j, x)| {
            let w = 0.5 * (1.0 - (2.0 * std::f64::consts::PI * j as f64 / n as f64).cos());
            Complex::new(x * w, 0.0)
        })
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let d_lambda = 2.0 * std::f64::consts::PI / (n as f64 * sample_dt);
    let mut total = 0.0;
    let mut away = 0.0;
    for (k, c) in buf.iter().enumerate() {
        let signed_k = if k <= n / 2 { k as i64 } else { k as i64 - n as i64 };
        let lambda = signed_k as f64 * d_lambda;
        let power = c.norm_sqr();
        total += power;
        if lambda.abs() > eps && signed_k.abs() > 1 {
            away += power;
        }
    }
    if total == 0.0 {
        return Ok(0.0);
    }
    Ok(away / total)
}

#[derive(Clone, Copy, Debug)]
pub struct ReportOptions {
    /// Tail window for sup norms, as a fraction of the horizon.
    pub tail_fraction: f64,
    /// Window for the spectral proxy, as a fraction of the horizon. Longer
    /// than the tail window so the zero bin is resolved against eps.
    pub spectral_fraction: f64,
    /// Band epsilon; None derives 0.1 * slowest linearized frequency at the
    /// approached critical point.
    pub band_epsilon: Option<f64>,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions { tail_fraction: 0.25, spectral_fraction: 0.5, band_epsilon: None }
    }
}

/// Numerical verdict on the convergence claims for one trajectory.
#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceReport {
    pub approached_point: Option<usize>,
    pub approached_q: Vec<f64>,
    pub dist_final: f64,
    pub tail_sup_p: f64,
    pub tail_sup_qddot: f64,
    pub tail_sup_qdddot: f64,
    /// per-thermostat tail sup |dE_m/dt|
    pub tail_sup_denergy: Vec<f64>,
    /// per-thermostat tail sup |theta_m|
    pub theta_tail_sup: Vec<f64>,
    /// max over vertices of the away-from-zero spectral power fraction
    pub spectral_concentration: f64,
    pub band_epsilon: f64,
    /// |sum_m E_m(T) - (E(0) - V_eff(q_c) + sum_m K_m q_c_m^2 / 2)|
    pub energy_sum_defect: f64,
    /// max_t |E(t) - E(0)| / max(1, |E(0)|)
    pub energy_relative_drift: f64,
    pub monotone_tail: bool,
    pub tail_window: (f64, f64),
    pub spectral_window: (f64, f64),
}

/// Evaluate the convergence claims on a finished trajectory. Refuses
/// trajectories that ran past the recurrence guard.
pub fn convergence_report(
    sys: &System,
    traj: &Trajectory,
    cs: &CriticalSet,
    opts: &ReportOptions,
) -> Result<ConvergenceReport> {
    if traj.meta.horizon > 0.5 * traj.meta.recurrence_horizon * (1.0 + 1e-9) {
        return Err(Error::RecurrenceGuard {
            horizon: traj.meta.horizon,
            limit: 0.5 * traj.meta.recurrence_horizon,
        });
    }
    let n = traj.times.len();
    if n < 8 {
        return Err(Error::InvalidInput("trajectory too short for a convergence report".into()));
    }
    let t0 = traj.times[0];
    let t_end = traj.times[n - 1];
    let span = t_end - t0;
    let tail_from = t_end - opts.tail_fraction * span;
    let spectral_from = t_end - opts.spectral_fraction * span;

    let dist_series: Vec<f64> = traj
        .q
        .iter()
        .map(|q| dist_to_critical_set(q, cs).map(|(d, _)| d))
        .collect::<Result<_>>()?;
    let (dist_final, approached) = dist_to_critical_set(&traj.q[n - 1], cs)?;
    let approached_q = cs.points[approached].q.clone();

    let norm = |row: &[f64]| row.iter().map(|x| x * x).sum::<f64>().sqrt();
    let tail_indices: Vec<usize> =
        (0..n).filter(|i| traj.times[*i] >= tail_from - 1e-12).collect();
    let tail_sup_p = tail_indices.iter().map(|&i| norm(&traj.p[i])).fold(0.0, f64::max);

    let deriv = derivative_series(traj)?;
    let mut tail_sup_qddot = 0.0f64;
    let mut tail_sup_qdddot = 0.0f64;
    for (i, t) in deriv.times.iter().enumerate() {
        if *t >= tail_from - 1e-12 {
            tail_sup_qddot = tail_sup_qddot.max(norm(&deriv.qddot[i]));
            tail_sup_qdddot = tail_sup_qdddot.max(norm(&deriv.qdddot[i]));
        }
    }

    let nm = traj.meta.n_thermostats;
    let h = traj.meta.sample_dt;
    let mut tail_sup_denergy = vec![0.0f64; nm];
    for i in 1..n - 1 {
        if traj.times[i] >= tail_from - 1e-12 {
            for m in 0..nm {
                let d = (traj.bath_energy[i + 1][m] - traj.bath_energy[i - 1][m]) / (2.0 * h);
                tail_sup_denergy[m] = tail_sup_denergy[m].max(d.abs());
            }
        }
    }

    let theta = crate::kernel::theta_decomposition(traj, sys.k_per_thermostat());
    let mut theta_tail_sup = vec![0.0f64; nm];
    for (i, t) in theta.times.iter().enumerate() {
        if *t >= tail_from - 1e-12 {
            for m in 0..nm {
                theta_tail_sup[m] = theta_tail_sup[m].max(theta.theta[i][m].abs());
            }
        }
    }

    // spectral proxy on the (longer) converged window
    let band_epsilon = match opts.band_epsilon {
        Some(e) => e,
        None => {
            let hess = sys.net().hess_effective_potential(&sys.k_by_vertex(), &approached_q);
            let eig = hess.symmetric_eigen().eigenvalues;
            let min_pos = eig.iter().filter(|l| **l > 0.0).fold(f64::INFINITY, |m, l| m.min(*l));
            let base = if min_pos.is_finite() {
                min_pos
            } else {
                eig.iter().fold(f64::INFINITY, |m, l| m.min(l.abs()))
            };
            0.1 * base.sqrt()
        }
    };
    let spectral_start = (0..n).find(|i| traj.times[*i] >= spectral_from - 1e-12).unwrap_or(0);
    let mut spectral_concentration = 0.0f64;
    for v in 0..traj.meta.vertex_ids.len() {
        let series: Vec<f64> = traj.q[spectral_start..].iter().map(|row| row[v]).collect();
        spectral_concentration =
            spectral_concentration.max(spectral_diagnostic(&series, h, band_epsilon)?);
    }

    // energy bookkeeping at the horizon against the approached point
    let k_by_vertex = sys.k_by_vertex();
    let v_eff_c = sys.net().effective_potential(&k_by_vertex, &approached_q);
    let k_quad: f64 = (0..nm)
        .map(|m| {
            let qm = approached_q[traj.meta.thermostat_vertex[m]];
            0.5 * sys.k_per_thermostat()[m] * qm * qm
        })
        .sum();
    let bath_sum_final: f64 = traj.bath_energy[n - 1].iter().sum();
    let energy_sum_defect = (bath_sum_final - (traj.energy[0] - v_eff_c + k_quad)).abs();
    let e0 = traj.energy[0];
    let energy_relative_drift =
        traj.energy.iter().map(|e| (e - e0).abs()).fold(0.0, f64::max) / e0.abs().max(1.0);

    // weak monotonicity of the distance over the tail, informational
    let mut monotone_tail = true;
    for w in tail_indices.windows(2) {
        if dist_series[w[1]] > 1.1 * dist_series[w[0]] + 1e-12 {
            monotone_tail = false;
            break;
        }
    }

    Ok(ConvergenceReport {
        approached_point: Some(approached),
        approached_q,
        dist_final,
        tail_sup_p,
        tail_sup_qddot,
        tail_sup_qdddot,
        tail_sup_denergy,
        theta_tail_sup,
        spectral_concentration,
        band_epsilon,
        energy_sum_defect,
        energy_relative_drift,
        monotone_tail,
        tail_window: (tail_from, t_end),
        spectral_window: (traj.times[spectral_start], t_end),
    })
}

/// Symmetric/antisymmetric bath combination for the one-oscillator,
/// two-thermostat system.
#[derive(Clone, Debug)]
pub struct ZetaEta {
    pub zeta: BathState,
    pub eta: BathState,
}

/// zeta = (xi_1 + xi_2)/sqrt(2), eta = (xi_1 - xi_2)/sqrt(2), likewise for
/// velocities. Requires the two-thermostat configuration with identical
/// coupling on a shared grid.
pub fn two_bath_transform(sys: &System, state: &FullState) -> Result<ZetaEta> {
    let (i, j) = sys
        .two_bath_pair()
        .ok_or_else(|| Error::InvalidInput("state is not a one-oscillator/two-bath configuration with identical couplings".into()))?;
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let (b1, b2) = (&state.baths[i], &state.baths[j]);
    let comb = |a: &[f64], b: &[f64], sign: f64| -> Vec<f64> {
        a.iter().zip(b).map(|(x, y)| s * (x + sign * y)).collect()
    };
    Ok(ZetaEta {
        zeta: BathState { xi: comb(&b1.xi, &b2.xi, 1.0), xidot: comb(&b1.xidot, &b2.xidot, 1.0) },
        eta: BathState { xi: comb(&b1.xi, &b2.xi, -1.0), xidot: comb(&b1.xidot, &b2.xidot, -1.0) },
    })
}

/// Inverse of [`two_bath_transform`] (the transform is an involution).
pub fn inverse_two_bath_transform(ze: &ZetaEta) -> (BathState, BathState) {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let comb = |a: &[f64], b: &[f64], sign: f64| -> Vec<f64> {
        a.iter().zip(b).map(|(x, y)| s * (x + sign * y)).collect()
    };
    (
        BathState {
            xi: comb(&ze.zeta.xi, &ze.eta.xi, 1.0),
            xidot: comb(&ze.zeta.xidot, &ze.eta.xidot, 1.0),
        },
        BathState {
            xi: comb(&ze.zeta.xi, &ze.eta.xi, -1.0),
            xidot: comb(&ze.zeta.xidot, &ze.eta.xidot, -1.0),
        },
    )
}

/// Re <bzeta, beta> on the grid: equals E_1 - E_2 identically.
pub fn zeta_eta_energy_difference(grid: &SpectralGrid, ze: &ZetaEta) -> f64 {
    let mut s = 0.0;
    for (k, &nu) in grid.nodes().iter().enumerate() {
        s += grid.weights()[k]
            * (ze.zeta.xidot[k] * ze.eta.xidot[k] + nu * nu * ze.zeta.xi[k] * ze.eta.xi[k]);
    }
    s
}

/// Energy-transport verdict for the one-oscillator/two-thermostat system.
#[derive(Clone, Debug, Serialize)]
pub struct TwoBathReport {
    pub e1_final: f64,
    pub e2_final: f64,
    /// |E_1 + E_2 at horizon - predicted bath energy sum at the approached point|
    pub energy_sum_defect: f64,
    /// D = Re <beta_0, bzeta_0 + sqrt(2) kappa qhat^T>
    pub defect_d: f64,
    /// the prediction for lim (E_1 - E_2) is D itself
    pub predicted_diff: f64,
    pub observed_diff: f64,
    pub agreement_error: f64,
    pub truncation_time: f64,
    /// estimated quadrature error of D (sample-coarsening Richardson)
    pub d_quad_error: f64,
    /// set when |D| is within quadrature error of 0: genericity undecidable
    pub d_indeterminate: bool,
    /// max_t |E_eta(t) - E_eta(0)|; absent when the trajectory carries no
    /// eta-sector series (reduced runs, re-analysis from CSV)
    pub eta_energy_drift: Option<f64>,
}

/// Compute the defect D = Re <beta_0, bzeta_0 + sqrt(2) kappa qhat^{T}> from
/// the initial bath data and the sampled trajectory truncated at `t_hat`,
/// and compare the predicted and observed thermostat energy difference.
pub fn equilibrium_defect(
    sys: &System,
    init: &FullState,
    traj: &Trajectory,
    cs: &CriticalSet,
    t_hat: f64,
) -> Result<TwoBathReport> {
    let pair = sys.two_bath_pair().ok_or_else(|| {
        Error::InvalidInput("not a one-oscillator/two-bath configuration".into())
    })?;
    if sys.net().n() != 1 {
        return Err(Error::InvalidInput("two-bath analysis requires exactly one oscillator".into()));
    }
    if !(t_hat > 0.0) || t_hat > traj.meta.horizon * (1.0 + 1e-9) {
        return Err(Error::InvalidInput(format!(
            "truncation time {t_hat} outside (0, horizon = {}]",
            traj.meta.horizon
        )));
    }
    let grid = sys.grid();
    let nodes = grid.nodes();
    let weights = grid.weights();
    let kappa = sys.kappa_table(pair.0);

    let ze0 = two_bath_transform(sys, init)?;
    // bold vectors: b = xidot + i nu xi
    let bold = |b: &BathState, k: usize| Complex::new(b.xidot[k], nodes[k] * b.xi[k]);

    // qhat(nu) = int_0^that e^{-i nu t} q(t) dt, composite trapezoid over samples
    let last = traj
        .times
        .iter()
        .rposition(|t| *t <= t_hat + 1e-9)
        .ok_or_else(|| Error::InvalidInput("truncation before first sample".into()))?;
    if last < 2 {
        return Err(Error::InvalidInput("too few samples before the truncation time".into()));
    }
    let qhat = |stride: usize| -> Vec<Complex<f64>> {
        let h = traj.meta.sample_dt * stride as f64;
        let idx: Vec<usize> = (0..=last / stride).map(|i| i * stride).collect();
        nodes
            .iter()
            .map(|&nu| {
                let (dc, ds) = ((nu * h).cos(), (nu * h).sin());
                let rot = Complex::new(dc, -ds);
                let mut ph = Complex::new(1.0, 0.0);
                let mut acc = Complex::new(0.0, 0.0);
                for (pos, &i) in idx.iter().enumerate() {
                    let w = if pos == 0 || pos + 1 == idx.len() { 0.5 } else { 1.0 };
                    acc += ph * (w * traj.q[i][0]);
                    ph *= rot;
                }
                acc * h
            })
            .collect()
    };
    let defect_of = |qh: &[Complex<f64>]| -> f64 {
        let mut d = 0.0;
        for k in 0..nodes.len() {
            let zeta = bold(&ze0.zeta, k) + std::f64::consts::SQRT_2 * kappa[k] * qh[k];
            d += weights[k] * (bold(&ze0.eta, k).conj() * zeta).re;
        }
        d
    };
    let defect_d = defect_of(&qhat(1));
    let defect_coarse = defect_of(&qhat(2));
    let d_quad_error = (defect_d - defect_coarse).abs() / 3.0;

    let n = traj.times.len();
    let e1_final = traj.bath_energy[n - 1][pair.0];
    let e2_final = traj.bath_energy[n - 1][pair.1];
    let observed_diff = e1_final - e2_final;
    let agreement_error = (observed_diff - defect_d).abs();

    let (_, approached) = dist_to_critical_set(&traj.q[n - 1], cs)?;
    let q_c = &cs.points[approached].q;
    let k_by_vertex = sys.k_by_vertex();
    let v_eff_c = sys.net().effective_potential(&k_by_vertex, q_c);
    let k_quad: f64 = (0..2)
        .map(|m| 0.5 * sys.k_per_thermostat()[m] * q_c[0] * q_c[0])
        .sum();
    let energy_sum_defect = ((e1_final + e2_final) - (traj.energy[0] - v_eff_c + k_quad)).abs();

    let eta_energy_drift = traj.eta_energy.as_ref().map(|series| {
        let e0 = series[0];
        series.iter().map(|e| (e - e0).abs()).fold(0.0, f64::max)
    });

    Ok(TwoBathReport {
        e1_final,
        e2_final,
        energy_sum_defect,
        defect_d,
        predicted_diff: defect_d,
        observed_diff,
        agreement_error,
        truncation_time: traj.times[last],
        d_quad_error,
        d_indeterminate: defect_d.abs() <= 10.0 * d_quad_error,
        eta_energy_drift,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{NetworkSpec, PotentialSpec, Thermostat, VertexId};
    use crate::thermostat::{build_grid, CouplingSpec};
    use approx::assert_abs_diff_eq;
    use std::collections::BTreeMap;

    const SQRT_PI: f64 = 1.7724538509055159;

    fn quartic_pin() -> PotentialSpec {
        PotentialSpec::polynomial([0.0, 0.0, 0.5, 0.0, 0.25])
    }

    fn single_net() -> NetworkSpec {
        NetworkSpec::new(
            vec![VertexId(1)],
            BTreeMap::from([(VertexId(1), quartic_pin())]),
            vec![],
            vec![Thermostat { vertex: VertexId(1), coupling: CouplingSpec::gauss(1.0, 1.0).unwrap() }],
        )
        .unwrap()
    }

    #[test]
    fn quartic_critical_points_match_closed_form() {
        let net = single_net();
        let cs = find_critical_points(&net, &[SQRT_PI], SearchOptions::default_for(1));
        assert_eq!(cs.points.len(), 3);
        let root = (SQRT_PI - 1.0).sqrt();
        assert_abs_diff_eq!(cs.points[0].q[0], -root, epsilon = 1e-8);
        assert_abs_diff_eq!(cs.points[1].q[0], 0.0, epsilon = 1e-8);
        assert_abs_diff_eq!(cs.points[2].q[0], root, epsilon = 1e-8);
        // V_eff''(0) = 1 - sqrt(pi) < 0: index 1; the two outer points are minima
        assert_eq!(cs.points[1].morse_index, 1);
        assert_eq!(cs.points[0].morse_index, 0);
        assert_eq!(cs.points[2].morse_index, 0);
        for p in &cs.points {
            let g = net.grad_effective_potential(&[SQRT_PI], &p.q);
            assert!(g[0].abs() < 1e-10);
        }
    }

    #[test]
    fn definite_harmonic_chain_has_unique_critical_point() {
        let vertices: Vec<VertexId> = (1..=3).map(VertexId).collect();
        let pins = vertices.iter().map(|v| (*v, PotentialSpec::harmonic(1.0))).collect();
        let interactions = (1..3)
            .map(|i| ((VertexId(i), VertexId(i + 1)), PotentialSpec::harmonic(1.0)))
            .collect();
        let thermostats = vec![
            Thermostat { vertex: VertexId(1), coupling: CouplingSpec::gauss(0.2, 1.0).unwrap() },
            Thermostat { vertex: VertexId(3), coupling: CouplingSpec::gauss(0.2, 1.0).unwrap() },
        ];
        let net = NetworkSpec::new(vertices, pins, interactions, thermostats).unwrap();
        // K = 0.04 sqrt(pi) per end: quadratic form stays positive definite
        let k = net.vertex_k(&[0.04 * SQRT_PI, 0.04 * SQRT_PI]);
        let cs = find_critical_points(&net, &k, SearchOptions::default_for(3));
        assert_eq!(cs.points.len(), 1);
        for x in &cs.points[0].q {
            assert!(x.abs() < 1e-9);
        }
        assert_eq!(cs.points[0].morse_index, 0);
    }

    #[test]
    fn degenerate_quartic_origin_is_flagged() {
        let net = NetworkSpec::new(
            vec![VertexId(1)],
            BTreeMap::from([(VertexId(1), PotentialSpec::polynomial([0.0, 0.0, 0.0, 0.0, 0.25]))]),
            vec![],
            vec![],
        )
        .unwrap();
        let cs = find_critical_points(&net, &[0.0], SearchOptions::default_for(1));
        assert!(!cs.points.is_empty());
        assert!(cs.points.iter().any(|p| p.hessian_min_abs_eigenvalue < 1e-4));
    }

    #[test]
    fn dist_examples() {
        let net = single_net();
        let cs = find_critical_points(&net, &[SQRT_PI], SearchOptions::default_for(1));
        let root = (SQRT_PI - 1.0).sqrt();
        let (d, i) = dist_to_critical_set(&[root], &cs).unwrap();
        assert!(d < 1e-8);
        assert_eq!(i, 2);
        let (d, i) = dist_to_critical_set(&[0.5], &cs).unwrap();
        assert_abs_diff_eq!(d, root - 0.5, epsilon = 1e-8);
        assert_eq!(i, 2);
        // equidistant from 0 and +root: lowest index wins
        let mid = root / 2.0;
        let (_, i) = dist_to_critical_set(&[mid], &cs).unwrap();
        assert_eq!(i, 1);
        let empty = CriticalSet { points: vec![], box_halfwidth: 5.0, dedup_tol: 1e-6, failed_starts: 0 };
        assert!(dist_to_critical_set(&[0.0], &empty).is_err());
    }

    #[test]
    fn spectral_diagnostic_on_known_signals() {
        let h = 0.05;
        let n = 4000;
        let constant: Vec<f64> = vec![2.2; n];
        assert_abs_diff_eq!(spectral_diagnostic(&constant, h, 0.5).unwrap(), 0.0, epsilon = 1e-20);

        let tone: Vec<f64> = (0..n).map(|i| (2.0 * i as f64 * h).cos()).collect();
        let r = spectral_diagnostic(&tone, h, 1.0).unwrap();
        assert!((r - 1.0).abs() < 1e-3, "tone ratio {r}");

        assert!(spectral_diagnostic(&constant[..8], h, 1.0).is_err());
    }

    #[test]
    fn spectral_diagnostic_mixture() {
        // large DC + small fast tone: ratio is the tone's power share
        let h = 0.02;
        let n = 5000;
        let series: Vec<f64> = (0..n).map(|i| 1.0 + 0.01 * (3.0 * i as f64 * h).cos()).collect();
        let r = spectral_diagnostic(&series, h, 0.3).unwrap();
        let expected = 0.5 * 0.01f64.powi(2) / (1.0 + 0.5 * 0.01f64.powi(2));
        assert!((r - expected).abs() < 0.3 * expected, "ratio {r} vs {expected}");
    }

    fn two_bath_system() -> System {
        let net = NetworkSpec::new(
            vec![VertexId(1)],
            BTreeMap::from([(VertexId(1), quartic_pin())]),
            vec![],
            vec![
                Thermostat { vertex: VertexId(1), coupling: CouplingSpec::gauss(1.0, 1.0).unwrap() },
                Thermostat { vertex: VertexId(1), coupling: CouplingSpec::gauss(1.0, 1.0).unwrap() },
            ],
        )
        .unwrap();
        System::new(net, build_grid(6.0, 96).unwrap()).unwrap()
    }

    #[test]
    fn transform_symmetric_data_kills_eta() {
        let sys = two_bath_system();
        let mut state = sys.dressed_state(&[0.4]);
        state.baths[1] = state.baths[0].clone();
        let ze = two_bath_transform(&sys, &state).unwrap();
        assert!(ze.eta.xi.iter().chain(&ze.eta.xidot).all(|x| *x == 0.0));
    }

    #[test]
    fn transform_preserves_norm_and_inverts() {
        let sys = two_bath_system();
        let mut state = sys.dressed_state(&[0.4]);
        for (k, x) in state.baths[1].xi.iter_mut().enumerate() {
            *x += 0.01 * (k as f64 * 0.37).sin();
        }
        for (k, x) in state.baths[0].xidot.iter_mut().enumerate() {
            *x += 0.02 * (k as f64 * 0.11).cos();
        }
        let ze = two_bath_transform(&sys, &state).unwrap();

        let sq = |b: &BathState| -> f64 {
            b.xi.iter().chain(&b.xidot).map(|x| x * x).sum()
        };
        let before = sq(&state.baths[0]) + sq(&state.baths[1]);
        let after = sq(&ze.zeta) + sq(&ze.eta);
        assert_abs_diff_eq!(before, after, epsilon = 1e-12 * before);

        let (b1, b2) = inverse_two_bath_transform(&ze);
        for (a, b) in b1.xi.iter().zip(&state.baths[0].xi) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-14);
        }
        for (a, b) in b2.xidot.iter().zip(&state.baths[1].xidot) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-14);
        }

        // E1 - E2 from raw states equals Re<bzeta, beta> from transformed ones
        let e1 = crate::thermostat::bath_energy(&state.baths[0], sys.grid());
        let e2 = crate::thermostat::bath_energy(&state.baths[1], sys.grid());
        let diff = zeta_eta_energy_difference(sys.grid(), &ze);
        assert_abs_diff_eq!(e1 - e2, diff, epsilon = 1e-12);
    }

    #[test]
    fn transform_rejects_mismatched_couplings() {
        let net = NetworkSpec::new(
            vec![VertexId(1)],
            BTreeMap::from([(VertexId(1), quartic_pin())]),
            vec![],
            vec![
                Thermostat { vertex: VertexId(1), coupling: CouplingSpec::gauss(1.0, 1.0).unwrap() },
                Thermostat { vertex: VertexId(1), coupling: CouplingSpec::gauss(1.1, 1.0).unwrap() },
            ],
        )
        .unwrap();
        let sys = System::new(net, build_grid(6.0, 96).unwrap()).unwrap();
        let state = sys.dressed_state(&[0.0]);
        assert!(two_bath_transform(&sys, &state).is_err());
    }
}
