//! Oscillator network: pinning and interaction potentials on a finite
//! undirected graph, the thermostat attachment set, the effective potential
//! with exact first and second derivatives, and the model assumption checks.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::thermostat::CouplingSpec;

/// Vertex identifier as written in scenario files (not an array index).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VertexId(pub u32);

impl std::fmt::Display for VertexId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A smooth scalar potential of one real variable with closed-form
/// first and second derivatives.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialSpec {
    /// `coeffs[0] + coeffs[1] x + coeffs[2] x^2 + ...`
    Polynomial { coeffs: Vec<f64> },
    /// `stiffness * x^2 / 2`
    Harmonic { stiffness: f64 },
}

impl PotentialSpec {
    pub fn polynomial(coeffs: impl Into<Vec<f64>>) -> Self {
        PotentialSpec::Polynomial { coeffs: coeffs.into() }
    }

    pub fn harmonic(stiffness: f64) -> Self {
        PotentialSpec::Harmonic { stiffness }
    }

    /// The identically-zero potential.
    pub fn zero() -> Self {
        PotentialSpec::Polynomial { coeffs: Vec::new() }
    }

    pub fn value(&self, x: f64) -> f64 {
        match self {
            PotentialSpec::Polynomial { coeffs } => {
                coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
            }
            PotentialSpec::Harmonic { stiffness } => 0.5 * stiffness * x * x,
        }
    }

    pub fn d1(&self, x: f64) -> f64 {
        match self {
            PotentialSpec::Polynomial { coeffs } => coeffs
                .iter()
                .enumerate()
                .skip(1)
                .rev()
                .fold(0.0, |acc, (i, c)| acc * x + i as f64 * c),
            PotentialSpec::Harmonic { stiffness } => stiffness * x,
        }
    }

    pub fn d2(&self, x: f64) -> f64 {
        match self {
            PotentialSpec::Polynomial { coeffs } => coeffs
                .iter()
                .enumerate()
                .skip(2)
                .rev()
                .fold(0.0, |acc, (i, c)| acc * x + (i * (i - 1)) as f64 * c),
            PotentialSpec::Harmonic { stiffness } => *stiffness,
        }
    }

    /// Exact check that the second derivative is the zero function.
    pub fn second_derivative_vanishes_identically(&self) -> bool {
        match self {
            PotentialSpec::Polynomial { coeffs } => {
                coeffs.iter().skip(2).all(|c| *c == 0.0)
            }
            PotentialSpec::Harmonic { stiffness } => *stiffness == 0.0,
        }
    }
}

/// One thermostat attachment: the coupled vertex and its coupling function.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Thermostat {
    pub vertex: VertexId,
    pub coupling: CouplingSpec,
}

/// The oscillator network.
///
/// Edges are undirected; the interaction argument is oriented as
/// `q_lower_id - q_higher_id`, which fixes the convention the symmetric
/// pair formulation leaves open. A vertex may carry several thermostats
/// (the one-oscillator/two-thermostat energy-transport scenarios need
/// exactly that); each thermostat couples to exactly one vertex.
#[derive(Clone, Debug)]
pub struct NetworkSpec {
    vertices: Vec<VertexId>,
    index: BTreeMap<VertexId, usize>,
    /// (lower-id index, higher-id index, potential), one entry per undirected edge.
    edges: Vec<(usize, usize, PotentialSpec)>,
    pins: Vec<PotentialSpec>,
    thermostats: Vec<Thermostat>,
    adjacency: Vec<Vec<usize>>,
}

impl NetworkSpec {
    pub fn new(
        vertices: Vec<VertexId>,
        pins: BTreeMap<VertexId, PotentialSpec>,
        interactions: Vec<((VertexId, VertexId), PotentialSpec)>,
        thermostats: Vec<Thermostat>,
    ) -> Result<Self> {
        if vertices.is_empty() {
            return Err(Error::InvalidNetwork("network has no vertices".into()));
        }
        let mut index = BTreeMap::new();
        for (i, v) in vertices.iter().enumerate() {
            if index.insert(*v, i).is_some() {
                return Err(Error::InvalidNetwork(format!("duplicate vertex id {v}")));
            }
        }
        let mut pin_vec = Vec::with_capacity(vertices.len());
        for v in &vertices {
            match pins.get(v) {
                Some(p) => pin_vec.push(p.clone()),
                None => {
                    return Err(Error::InvalidNetwork(format!("vertex {v} has no pinning potential")))
                }
            }
        }
        for v in pins.keys() {
            if !index.contains_key(v) {
                return Err(Error::InvalidNetwork(format!("pin references unknown vertex {v}")));
            }
        }
        let mut seen = BTreeSet::new();
        let mut edges = Vec::with_capacity(interactions.len());
        for ((a, b), pot) in interactions {
            if a == b {
                return Err(Error::InvalidNetwork(format!("self-loop at vertex {a}")));
            }
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            if !seen.insert((lo, hi)) {
                return Err(Error::InvalidNetwork(format!("duplicate edge ({lo}, {hi})")));
            }
            let ia = *index
                .get(&lo)
                .ok_or_else(|| Error::InvalidNetwork(format!("edge references unknown vertex {lo}")))?;
            let ib = *index
                .get(&hi)
                .ok_or_else(|| Error::InvalidNetwork(format!("edge references unknown vertex {hi}")))?;
            edges.push((ia, ib, pot));
        }
        for t in &thermostats {
            if !index.contains_key(&t.vertex) {
                return Err(Error::InvalidNetwork(format!(
                    "thermostat references unknown vertex {}",
                    t.vertex
                )));
            }
        }
        let mut adjacency = vec![Vec::new(); vertices.len()];
        for (a, b, _) in &edges {
            adjacency[*a].push(*b);
            adjacency[*b].push(*a);
        }
        for nbrs in &mut adjacency {
            nbrs.sort_unstable();
        }
        Ok(NetworkSpec { vertices, index, edges, pins: pin_vec, thermostats, adjacency })
    }

    pub fn n(&self) -> usize {
        self.vertices.len()
    }

    pub fn vertices(&self) -> &[VertexId] {
        &self.vertices
    }

    pub fn index_of(&self, v: VertexId) -> Option<usize> {
        self.index.get(&v).copied()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, &PotentialSpec)> {
        self.edges.iter().map(|(a, b, p)| (*a, *b, p))
    }

    pub fn pin(&self, vertex_index: usize) -> &PotentialSpec {
        &self.pins[vertex_index]
    }

    pub fn thermostats(&self) -> &[Thermostat] {
        &self.thermostats
    }

    /// Vertex indices of the coupled set Lambda, one entry per distinct vertex.
    pub fn coupled_indices(&self) -> BTreeSet<usize> {
        self.thermostats.iter().map(|t| self.index[&t.vertex]).collect()
    }

    /// Per-vertex coupling constant: the sum of K over the thermostats
    /// attached to each vertex (zero on uncoupled vertices).
    pub fn vertex_k(&self, k_per_thermostat: &[f64]) -> Vec<f64> {
        assert_eq!(k_per_thermostat.len(), self.thermostats.len());
        let mut out = vec![0.0; self.n()];
        for (t, k) in self.thermostats.iter().zip(k_per_thermostat) {
            out[self.index[&t.vertex]] += k;
        }
        out
    }

    /// Controllability closure of the coupled set.
    ///
    /// Starting from Lambda, repeatedly add, for every member vertex with a
    /// *unique* neighbor outside the set, that neighbor; stop when no vertex
    /// qualifies. The rule is monotone, so the result does not depend on
    /// iteration order.
    pub fn controllability_closure(&self) -> BTreeSet<VertexId> {
        let seed: BTreeSet<VertexId> = self.thermostats.iter().map(|t| t.vertex).collect();
        self.controllability_closure_from(&seed)
    }

    /// Same closure, seeded from an arbitrary vertex set.
    pub fn controllability_closure_from(&self, seed: &BTreeSet<VertexId>) -> BTreeSet<VertexId> {
        let mut current: BTreeSet<usize> = seed.iter().filter_map(|v| self.index_of(*v)).collect();
        loop {
            let mut additions = BTreeSet::new();
            for &j in &current {
                let mut outside = self.adjacency[j].iter().filter(|n| !current.contains(n));
                if let (Some(&n), None) = (outside.next(), outside.next()) {
                    additions.insert(n);
                }
            }
            let before = current.len();
            current.extend(additions);
            if current.len() == before {
                break;
            }
        }
        current.into_iter().map(|i| self.vertices[i]).collect()
    }

    /// V_eff(q) = sum_j U_j(q_j) + sum_edges V_e(q_a - q_b) - sum_j K_j q_j^2 / 2.
    pub fn effective_potential(&self, k_by_vertex: &[f64], q: &[f64]) -> f64 {
        debug_assert_eq!(q.len(), self.n());
        debug_assert_eq!(k_by_vertex.len(), self.n());
        let mut v = 0.0;
        for (j, pin) in self.pins.iter().enumerate() {
            v += pin.value(q[j]) - 0.5 * k_by_vertex[j] * q[j] * q[j];
        }
        for (a, b, pot) in &self.edges {
            v += pot.value(q[*a] - q[*b]);
        }
        v
    }

    /// Exact gradient of the effective potential (returns dV_eff/dq_j).
    pub fn grad_effective_potential(&self, k_by_vertex: &[f64], q: &[f64]) -> Vec<f64> {
        debug_assert_eq!(q.len(), self.n());
        let mut g = vec![0.0; self.n()];
        for (j, pin) in self.pins.iter().enumerate() {
            g[j] = pin.d1(q[j]) - k_by_vertex[j] * q[j];
        }
        for (a, b, pot) in &self.edges {
            let dv = pot.d1(q[*a] - q[*b]);
            g[*a] += dv;
            g[*b] -= dv;
        }
        g
    }

    /// Exact Hessian of the effective potential; symmetric by construction.
    pub fn hess_effective_potential(&self, k_by_vertex: &[f64], q: &[f64]) -> DMatrix<f64> {
        let n = self.n();
        let mut h = DMatrix::zeros(n, n);
        for (j, pin) in self.pins.iter().enumerate() {
            h[(j, j)] = pin.d2(q[j]) - k_by_vertex[j];
        }
        for (a, b, pot) in &self.edges {
            let d2 = pot.d2(q[*a] - q[*b]);
            h[(*a, *a)] += d2;
            h[(*b, *b)] += d2;
            h[(*a, *b)] -= d2;
            h[(*b, *a)] -= d2;
        }
        h
    }

    /// Mechanical forces on the oscillators (no thermostat contribution):
    /// F_j = -U_j'(q_j) + sum_{i~j} V_ij'(q_i - q_j).
    pub fn mechanical_forces_into(&self, q: &[f64], f: &mut [f64]) {
        for (j, pin) in self.pins.iter().enumerate() {
            f[j] = -pin.d1(q[j]);
        }
        for (a, b, pot) in &self.edges {
            let dv = pot.d1(q[*a] - q[*b]);
            f[*a] -= dv;
            f[*b] += dv;
        }
    }

    /// Network potential energy sum_j U_j + sum_edges V_e.
    pub fn mechanical_potential(&self, q: &[f64]) -> f64 {
        let mut v = 0.0;
        for (j, pin) in self.pins.iter().enumerate() {
            v += pin.value(q[j]);
        }
        for (a, b, pot) in &self.edges {
            v += pot.value(q[*a] - q[*b]);
        }
        v
    }
}

/// Outcome of the assumption checks. A1 and A5 are decidable exactly for
/// the supported potential families; A3 and A6 are sampling heuristics and
/// their detail strings say "inconclusive" when the evidence is weak.
#[derive(Clone, Debug, Serialize)]
pub struct AssumptionReport {
    pub a1_ok: bool,
    pub a1_detail: String,
    pub a3_ok: bool,
    pub a3_detail: String,
    pub a5_ok: bool,
    pub a5_detail: String,
    pub a6_ok: bool,
    pub a6_detail: String,
    pub lambda_closure: Vec<VertexId>,
    /// (radius, min |V_eff| over the sampled directions at that radius)
    pub coercivity_samples: Vec<(f64, f64)>,
}

/// Check assumptions A1/A3/A5/A6 for a network with per-thermostat coupling
/// constants `k_per_thermostat`.
pub fn validate_assumptions(net: &NetworkSpec, k_per_thermostat: &[f64]) -> AssumptionReport {
    let k_by_vertex = net.vertex_k(k_per_thermostat);

    // A1: exact symbolic check on each edge family.
    let mut degenerate_edges = Vec::new();
    for (a, b, pot) in net.edges() {
        if pot.second_derivative_vanishes_identically() {
            degenerate_edges.push(format!("({}, {})", net.vertices()[a], net.vertices()[b]));
        }
    }
    let a1_ok = degenerate_edges.is_empty();
    let a1_detail = if a1_ok {
        "all edge potentials have non-vanishing second derivative".to_string()
    } else {
        format!("edges with V'' identically zero: {}", degenerate_edges.join(", "))
    };

    // A3: sample |V_eff| on spheres of growing radius (heuristic).
    let dirs = sample_directions(net.n());
    let radii = [1.0, 2.0, 4.0, 8.0, 16.0];
    let mut coercivity_samples = Vec::new();
    for r in radii {
        let mut min_abs = f64::INFINITY;
        for d in &dirs {
            let q: Vec<f64> = d.iter().map(|x| x * r).collect();
            min_abs = min_abs.min(net.effective_potential(&k_by_vertex, &q).abs());
        }
        coercivity_samples.push((r, min_abs));
    }
    let growing = coercivity_samples.windows(2).skip(1).all(|w| w[1].1 > w[0].1);
    let a3_ok = growing && coercivity_samples.last().unwrap().1 > 1.0;
    let a3_detail = if a3_ok {
        format!(
            "heuristic: min |V_eff| grows along sampled rays, {:.3e} at r = {}",
            coercivity_samples.last().unwrap().1,
            radii.last().unwrap()
        )
    } else {
        "inconclusive: sampled |V_eff| does not grow monotonically along rays".to_string()
    };

    // A5: controllability closure must reach every vertex.
    let lambda_closure: Vec<VertexId> = net.controllability_closure().into_iter().collect();
    let a5_ok = lambda_closure.len() == net.n();
    let a5_detail = if a5_ok {
        "closure of Lambda covers the whole graph".to_string()
    } else {
        let missing: Vec<String> = net
            .vertices()
            .iter()
            .filter(|v| !lambda_closure.contains(v))
            .map(|v| v.to_string())
            .collect();
        format!("closure stops before vertices {{{}}}", missing.join(", "))
    };

    // A6: isolated critical points (heuristic via the multistart finder).
    let cs = crate::analysis::find_critical_points(
        net,
        &k_by_vertex,
        crate::analysis::SearchOptions::default_for(net.n()),
    );
    let degenerate = cs.points.iter().filter(|p| p.hessian_min_abs_eigenvalue <= 1e-8).count();
    let a6_ok = !cs.points.is_empty() && degenerate == 0;
    let a6_detail = if cs.points.is_empty() {
        "inconclusive: no critical points found in the search box".to_string()
    } else if degenerate == 0 {
        format!("{} isolated critical points found (heuristic)", cs.points.len())
    } else {
        format!(
            "inconclusive: {} of {} critical points have near-singular Hessian",
            degenerate,
            cs.points.len()
        )
    };

    AssumptionReport {
        a1_ok,
        a1_detail,
        a3_ok,
        a3_detail,
        a5_ok,
        a5_detail,
        a6_ok,
        a6_detail,
        lambda_closure,
        coercivity_samples,
    }
}

/// Deterministic direction sample: coordinate axes plus a low-discrepancy
/// set of unit vectors.
fn sample_directions(n: usize) -> Vec<Vec<f64>> {
    let mut dirs = Vec::new();
    for j in 0..n {
        let mut d = vec![0.0; n];
        d[j] = 1.0;
        dirs.push(d.clone());
        d[j] = -1.0;
        dirs.push(d);
    }
    let diag = (n as f64).sqrt().recip();
    dirs.push(vec![diag; n]);
    dirs.push(vec![-diag; n]);
    for s in 0..(4 * n) {
        let mut d: Vec<f64> = (0..n)
            .map(|j| {
                let x = crate::lowdisc::weyl(s as u64 * n as u64 + j as u64 + 1, j);
                2.0 * x - 1.0
            })
            .collect();
        let norm = d.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            d.iter_mut().for_each(|x| *x /= norm);
            dirs.push(d);
        }
    }
    dirs
}
