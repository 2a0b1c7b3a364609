//! Problem instances: clients, facilities, metric, opening-cost oracle.
//!
//! An instance has `n` clients (points `0..n`) and `m` facilities (points
//! `n..n+m`) in a shared metric. Connecting client `c` to facility `f` costs
//! `d(c, f) * conn_mult(c)`; opening facility `f` to serve a client set `R`
//! costs `oracle_scale * mult_weight(f) * g(R) + add_weight(f)` when `R` is
//! nonempty (`g` is the instance oracle). Per-facility multiplicative and
//! additive weights are mutually exclusive.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::{floyd_warshall, Metric};
use crate::oracle::{OracleKind, ScaledOracle, SetFunction, SubmodularOracle};
use crate::set::ClientSet;
use crate::tol;

#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    n: usize,
    m: usize,
    metric: Metric,
    oracle: SubmodularOracle,
    oracle_scale: f64,
    mult_weights: Option<Vec<f64>>,
    add_weights: Option<Vec<f64>>,
    conn_multipliers: Option<Vec<f64>>,
}

/// Connection, opening, and total cost of an assignment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CostBreakdown {
    pub conn: f64,
    pub open: f64,
    pub total: f64,
}

impl Instance {
    /// A plain instance (unit connection multipliers, unweighted openings).
    /// The metric covers clients then facilities; triangle inequality is the
    /// caller's responsibility (see [`Metric::verify_triangle`]).
    pub fn new(n: usize, m: usize, metric: Metric, oracle: SubmodularOracle) -> Result<Self> {
        if n < 1 || m < 1 {
            return Err(Error::invalid("instance needs at least one client and one facility"));
        }
        if n + m > tol::MAX_POINTS {
            return Err(Error::cap(format!(
                "instance has {} points, cap is {}",
                n + m,
                tol::MAX_POINTS
            )));
        }
        if metric.len() != n + m {
            return Err(Error::invalid(format!(
                "metric covers {} points, instance has {}",
                metric.len(),
                n + m
            )));
        }
        if oracle.ground_size() != n {
            return Err(Error::invalid(format!(
                "oracle ground set has {} elements, instance has {} clients",
                oracle.ground_size(),
                n
            )));
        }
        Ok(Instance {
            n,
            m,
            metric,
            oracle,
            oracle_scale: 1.0,
            mult_weights: None,
            add_weights: None,
            conn_multipliers: None,
        })
    }

    pub fn with_oracle_scale(mut self, scale: f64) -> Result<Self> {
        if !scale.is_finite() || scale <= 0.0 {
            return Err(Error::invalid("oracle_scale must be finite and positive"));
        }
        self.oracle_scale = scale;
        Ok(self)
    }

    pub fn with_mult_weights(mut self, w: Vec<f64>) -> Result<Self> {
        if w.len() != self.m {
            return Err(Error::invalid("mult_weights length must equal facility count"));
        }
        if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::invalid("mult_weights must be finite and >= 0"));
        }
        if self.add_weights.is_some() {
            return Err(Error::UnsupportedVariant(
                "per-facility multiplicative and additive weights cannot be combined".into(),
            ));
        }
        self.mult_weights = Some(w);
        Ok(self)
    }

    pub fn with_add_weights(mut self, p: Vec<f64>) -> Result<Self> {
        if p.len() != self.m {
            return Err(Error::invalid("add_weights length must equal facility count"));
        }
        if p.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::invalid("add_weights must be finite and >= 0"));
        }
        if self.mult_weights.is_some() {
            return Err(Error::UnsupportedVariant(
                "per-facility multiplicative and additive weights cannot be combined".into(),
            ));
        }
        self.add_weights = Some(p);
        Ok(self)
    }

    pub fn with_conn_multipliers(mut self, mu: Vec<f64>) -> Result<Self> {
        if mu.len() != self.n {
            return Err(Error::invalid("conn_multipliers length must equal client count"));
        }
        if mu.iter().any(|x| !x.is_finite() || *x <= 0.0 || *x > 1.0) {
            return Err(Error::invalid("conn_multipliers must lie in (0, 1]"));
        }
        self.conn_multipliers = Some(mu);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn metric(&self) -> &Metric {
        &self.metric
    }

    pub fn oracle(&self) -> &SubmodularOracle {
        &self.oracle
    }

    pub fn oracle_scale(&self) -> f64 {
        self.oracle_scale
    }

    pub fn mult_weights(&self) -> Option<&[f64]> {
        self.mult_weights.as_deref()
    }

    pub fn add_weights(&self) -> Option<&[f64]> {
        self.add_weights.as_deref()
    }

    pub fn conn_multipliers(&self) -> Option<&[f64]> {
        self.conn_multipliers.as_deref()
    }

    /// True when openings are unweighted (no per-facility weights).
    pub fn is_plain(&self) -> bool {
        self.mult_weights.is_none() && self.add_weights.is_none()
    }

    pub fn conn_mult(&self, c: usize) -> f64 {
        self.conn_multipliers.as_ref().map_or(1.0, |mu| mu[c])
    }

    pub fn mult_weight(&self, f: usize) -> f64 {
        self.mult_weights.as_ref().map_or(1.0, |w| w[f])
    }

    pub fn add_weight(&self, f: usize) -> f64 {
        self.add_weights.as_ref().map_or(0.0, |p| p[f])
    }

    pub fn dist_cf(&self, c: usize, f: usize) -> f64 {
        self.metric.dist(c, self.n + f)
    }

    pub fn dist_cc(&self, c1: usize, c2: usize) -> f64 {
        self.metric.dist(c1, c2)
    }

    pub fn dist_ff(&self, f1: usize, f2: usize) -> f64 {
        self.metric.dist(self.n + f1, self.n + f2)
    }

    /// The opening cost of facility `f` as a set function over clients.
    pub fn scaled_oracle(&self, f: usize) -> ScaledOracle<'_> {
        ScaledOracle {
            base: &self.oracle,
            mult: self.oracle_scale * self.mult_weight(f),
            add: self.add_weight(f),
        }
    }

    /// Opening cost of facility `f` serving exactly the clients in `set`.
    pub fn open_cost(&self, f: usize, set: &ClientSet) -> f64 {
        self.scaled_oracle(f).eval(set)
    }

    /// Cost of assigning every client per `assignment` (facility per client).
    pub fn cost(&self, assignment: &[u32]) -> Result<CostBreakdown> {
        if assignment.len() != self.n {
            return Err(Error::domain(format!(
                "assignment covers {} clients, instance has {}",
                assignment.len(),
                self.n
            )));
        }
        if let Some(&f) = assignment.iter().find(|&&f| f as usize >= self.m) {
            return Err(Error::domain(format!("assignment references facility {f} out of range")));
        }
        let mut conn = 0.0;
        let mut served: Vec<ClientSet> = vec![ClientSet::new(); self.m];
        for (c, &f) in assignment.iter().enumerate() {
            conn += self.dist_cf(c, f as usize) * self.conn_mult(c);
            served[f as usize].insert(c as u32);
        }
        let mut open = 0.0;
        for (f, set) in served.iter().enumerate() {
            if !set.is_empty() {
                open += self.open_cost(f, set);
            }
        }
        Ok(CostBreakdown {
            conn,
            open,
            total: conn + open,
        })
    }

    pub fn from_json(text: &str) -> Result<Instance> {
        let wire: InstanceWire = serde_json::from_str(text)?;
        let metric = Metric::new(wire.metric)?;
        metric.verify_triangle()?;
        let oracle = SubmodularOracle::new(wire.oracle, wire.n)?;
        let mut inst = Instance::new(wire.n, wire.m, metric, oracle)?;
        if let Some(s) = wire.oracle_scale {
            inst = inst.with_oracle_scale(s)?;
        }
        if let Some(w) = wire.mult_weights {
            inst = inst.with_mult_weights(w)?;
        }
        if let Some(p) = wire.add_weights {
            inst = inst.with_add_weights(p)?;
        }
        if let Some(mu) = wire.conn_multipliers {
            inst = inst.with_conn_multipliers(mu)?;
        }
        Ok(inst)
    }

    pub fn to_json(&self) -> String {
        let wire = InstanceWire {
            n: self.n,
            m: self.m,
            metric: self.metric.rows(),
            oracle: self.oracle.kind().clone(),
            oracle_scale: (self.oracle_scale != 1.0).then_some(self.oracle_scale),
            mult_weights: self.mult_weights.clone(),
            add_weights: self.add_weights.clone(),
            conn_multipliers: self.conn_multipliers.clone(),
        };
        let mut s = serde_json::to_string_pretty(&wire).expect("instance serializes");
        s.push('\n');
        s
    }
}

#[derive(Serialize, Deserialize)]
struct InstanceWire {
    n: usize,
    m: usize,
    metric: Vec<Vec<f64>>,
    oracle: OracleKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    oracle_scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mult_weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    add_weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    conn_multipliers: Option<Vec<f64>>,
}

/// Oracle families available to [`gen_random`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RandomOracleFamily {
    Uniform,
    Coverage,
    IndependentActivation,
}

impl std::str::FromStr for RandomOracleFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(RandomOracleFamily::Uniform),
            "coverage" => Ok(RandomOracleFamily::Coverage),
            "independent_activation" => Ok(RandomOracleFamily::IndependentActivation),
            other => Err(Error::domain(format!(
                "unknown oracle family '{other}' (expected uniform, coverage, or independent_activation)"
            ))),
        }
    }
}

/// Index arithmetic for the ids used by [`gen_hypercube`] instances.
///
/// Client `v*dim + l` is the demand of vertex `v` in dimension slot `l`
/// (0-based). Facilities `0..2^dim` sit on the vertices; after them come
/// the `dim*2^(dim-1)` edge midpoints, ordered by dimension then by lower
/// endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HypercubeLayout {
    dim: usize,
}

impl HypercubeLayout {
    pub fn new(dim: u32) -> Result<Self> {
        if dim < 1 {
            return Err(Error::domain("hypercube dimension must be at least 1"));
        }
        if dim > 60 {
            return Err(Error::cap("hypercube layout dimension exceeds index width"));
        }
        Ok(HypercubeLayout { dim: dim as usize })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_vertices(&self) -> usize {
        1 << self.dim
    }

    pub fn num_clients(&self) -> usize {
        self.dim * self.num_vertices()
    }

    pub fn num_facilities(&self) -> usize {
        self.num_vertices() + self.dim * (self.num_vertices() / 2)
    }

    /// Client id of the demand at vertex `v` in dimension slot `l` (0-based).
    pub fn client(&self, v: usize, l: usize) -> usize {
        debug_assert!(v < self.num_vertices() && l < self.dim);
        v * self.dim + l
    }

    pub fn client_vertex(&self, c: usize) -> usize {
        c / self.dim
    }

    pub fn client_slot(&self, c: usize) -> usize {
        c % self.dim
    }

    pub fn vertex_facility(&self, v: usize) -> usize {
        debug_assert!(v < self.num_vertices());
        v
    }

    /// Facility id of the midpoint of the dimension-`b` edge whose lower
    /// endpoint (the one with bit `b` clear) is `lo`.
    pub fn edge_facility(&self, lo: usize, b: usize) -> usize {
        debug_assert!(b < self.dim && lo >> b & 1 == 0);
        // Rank of `lo` among vertices with bit `b` clear: drop bit `b`.
        let rank = ((lo >> (b + 1)) << b) | (lo & ((1 << b) - 1));
        self.num_vertices() + b * (self.num_vertices() / 2) + rank
    }

    /// Length of edges in dimension slot `b` (0-based): `1 / (2(dim - b))`.
    pub fn edge_length(&self, b: usize) -> f64 {
        debug_assert!(b < self.dim);
        1.0 / (2.0 * (self.dim - b) as f64)
    }
}

/// Weighted-hypercube instance of dimension `dim`.
///
/// The vertex graph is the `dim`-cube where every edge in dimension `i`
/// (1-based) has length `p_i = 1 / (2(dim + 1 - i))`; vertex distances are
/// graph shortest paths. Each vertex `v` hosts `dim` clients -- client
/// `v*dim + (l-1)` is the demand `(v, l)` -- and one facility (facility `v`).
/// After the `2^dim` vertex facilities come `dim*2^(dim-1)` edge facilities,
/// ordered by dimension then lower endpoint, each at the midpoint of its
/// edge. Openings are priced by the hypercube oracle of the same dimension.
/// Ids follow [`HypercubeLayout`].
pub fn gen_hypercube(dim: u32) -> Result<Instance> {
    if dim < 1 {
        return Err(Error::domain("hypercube dimension must be at least 1"));
    }
    let d = dim as usize;
    let vertices = 1usize << d;
    let n = d * vertices;
    let m = vertices + d * (vertices / 2);
    if n + m > tol::MAX_POINTS {
        return Err(Error::cap(format!(
            "hypercube dimension {dim} needs {} points, cap is {}",
            n + m,
            tol::MAX_POINTS
        )));
    }
    let p: Vec<f64> = (1..=d)
        .map(|i| 1.0 / (2.0 * (d as f64 + 1.0 - i as f64)))
        .collect();

    // All-pairs vertex distances by Dijkstra from each source (simple
    // scan-min variant; the vertex graph is tiny). Rows are symmetrized
    // afterwards so float accumulation order cannot break exact symmetry.
    let mut vd = vec![f64::INFINITY; vertices * vertices];
    for src in 0..vertices {
        let row = &mut vd[src * vertices..(src + 1) * vertices];
        let mut done = vec![false; vertices];
        row[src] = 0.0;
        for _ in 0..vertices {
            let mut u = usize::MAX;
            let mut best = f64::INFINITY;
            for (x, &dx) in row.iter().enumerate() {
                if !done[x] && dx < best {
                    best = dx;
                    u = x;
                }
            }
            if u == usize::MAX {
                break;
            }
            done[u] = true;
            for (b, &pb) in p.iter().enumerate() {
                let w = u ^ (1 << b);
                let nd = row[u] + pb;
                if nd < row[w] {
                    row[w] = nd;
                }
            }
        }
    }
    for i in 0..vertices {
        for j in 0..i {
            vd[i * vertices + j] = vd[j * vertices + i];
        }
    }

    // Point locations: a vertex, or the midpoint of an edge in dimension
    // `b+1` between `lo` and `lo ^ (1<<b)`.
    #[derive(Clone, Copy)]
    enum Loc {
        Vertex(usize),
        Mid { lo: usize, b: usize },
    }
    let mut locs: Vec<Loc> = Vec::with_capacity(n + m);
    for v in 0..vertices {
        for _ in 0..d {
            locs.push(Loc::Vertex(v));
        }
    }
    for v in 0..vertices {
        locs.push(Loc::Vertex(v));
    }
    for b in 0..d {
        for lo in 0..vertices {
            if lo >> b & 1 == 0 {
                locs.push(Loc::Mid { lo, b });
            }
        }
    }
    debug_assert_eq!(locs.len(), n + m);

    let total = n + m;
    let mut dmat = vec![0.0; total * total];
    let vdist = |a: usize, b: usize| vd[a * vertices + b];
    for i in 0..total {
        for j in 0..i {
            let dij = match (locs[i], locs[j]) {
                (Loc::Vertex(a), Loc::Vertex(b)) => vdist(a, b),
                (Loc::Vertex(a), Loc::Mid { lo, b }) | (Loc::Mid { lo, b }, Loc::Vertex(a)) => {
                    let hi = lo ^ (1 << b);
                    vdist(a, lo).min(vdist(a, hi)) + p[b] / 2.0
                }
                (Loc::Mid { lo: l1, b: b1 }, Loc::Mid { lo: l2, b: b2 }) => {
                    if l1 == l2 && b1 == b2 {
                        0.0
                    } else {
                        let (h1, h2) = (l1 ^ (1 << b1), l2 ^ (1 << b2));
                        let across = vdist(l1, l2)
                            .min(vdist(l1, h2))
                            .min(vdist(h1, l2))
                            .min(vdist(h1, h2));
                        across + p[b1] / 2.0 + p[b2] / 2.0
                    }
                }
            };
            dmat[i * total + j] = dij;
            dmat[j * total + i] = dij;
        }
    }
    let metric = Metric::from_flat(total, dmat)?;
    if total <= 600 {
        metric.verify_triangle()?;
    }
    let oracle = SubmodularOracle::hypercube(dim)?;
    Instance::new(n, m, metric, oracle)
}

/// Random plain instance: points uniform in the unit square, Euclidean
/// distances, oracle payload drawn after the points. All draws come from a
/// single `ChaCha8Rng` seeded with `seed`, in a fixed documented order
/// (client points, facility points, then the oracle payload), so a given
/// `(n, m, seed, family)` always yields the same instance.
pub fn gen_random(n: usize, m: usize, seed: u64, family: RandomOracleFamily) -> Result<Instance> {
    if n < 1 || m < 1 {
        return Err(Error::domain("need at least one client and one facility"));
    }
    if n + m > tol::MAX_POINTS {
        return Err(Error::cap(format!(
            "instance has {} points, cap is {}",
            n + m,
            tol::MAX_POINTS
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total = n + m;
    let points: Vec<(f64, f64)> = (0..total)
        .map(|_| (rng.gen::<f64>(), rng.gen::<f64>()))
        .collect();
    let mut dmat = vec![0.0; total * total];
    for i in 0..total {
        for j in 0..i {
            let (dx, dy) = (points[i].0 - points[j].0, points[i].1 - points[j].1);
            let dij = (dx * dx + dy * dy).sqrt();
            dmat[i * total + j] = dij;
            dmat[j * total + i] = dij;
        }
    }
    let oracle = match family {
        RandomOracleFamily::Uniform => {
            SubmodularOracle::uniform(0.5 + 1.5 * rng.gen::<f64>(), n)?
        }
        RandomOracleFamily::Coverage => {
            let u = 2 * n;
            let weights: Vec<f64> = (0..u).map(|_| 0.25 + 0.75 * rng.gen::<f64>()).collect();
            let sets: Vec<Vec<u32>> = (0..n)
                .map(|_| {
                    let k = rng.gen_range(1..=3usize);
                    let mut s: Vec<u32> = (0..k).map(|_| rng.gen_range(0..u as u32)).collect();
                    s.sort_unstable();
                    s.dedup();
                    s
                })
                .collect();
            SubmodularOracle::coverage(weights, sets)?
        }
        RandomOracleFamily::IndependentActivation => {
            let probs: Vec<f64> = (0..n).map(|_| 0.1 + 0.8 * rng.gen::<f64>()).collect();
            SubmodularOracle::independent_activation(probs)?
        }
    };
    let metric = Metric::from_flat(total, dmat)?;
    if total <= 600 {
        metric.verify_triangle()?;
    }
    Instance::new(n, m, metric, oracle)
}

/// Replaces the facility set by one facility per client, colocated with the
/// client plus a pendant distance equal to that client's nearest original
/// facility. Requires plain opening costs. Returns the new instance and a
/// map from new facility index to the original facility it stands for.
///
/// Any assignment in the reduced instance maps back through the returned
/// vector; connection costs change by at most a constant factor because
/// `d(c, f(c_j)) <= d(c, c_j) + r_j` and `r_j` is the cheapest way to serve
/// client `j` at all.
pub fn reduce_facilities(inst: &Instance) -> Result<(Instance, Vec<usize>)> {
    if !inst.is_plain() {
        return Err(Error::domain(
            "facility consolidation requires unweighted opening costs",
        ));
    }
    let n = inst.n();
    let mut back = Vec::with_capacity(n);
    let mut radius = Vec::with_capacity(n);
    for c in 0..n {
        let mut best_f = 0usize;
        let mut best_d = inst.dist_cf(c, 0);
        for f in 1..inst.m() {
            let d = inst.dist_cf(c, f);
            if d < best_d {
                best_d = d;
                best_f = f;
            }
        }
        back.push(best_f);
        radius.push(best_d);
    }
    let total = 2 * n;
    let mut dmat = vec![0.0; total * total];
    for i in 0..n {
        for j in 0..i {
            let dcc = inst.dist_cc(i, j);
            dmat[i * total + j] = dcc;
            dmat[j * total + i] = dcc;
        }
    }
    for j in 0..n {
        for i in 0..n {
            let d = inst.dist_cc(i, j) + radius[j];
            dmat[i * total + (n + j)] = d;
            dmat[(n + j) * total + i] = d;
        }
    }
    for i in 0..n {
        for j in 0..i {
            let d = radius[i] + inst.dist_cc(i, j) + radius[j];
            dmat[(n + i) * total + (n + j)] = d;
            dmat[(n + j) * total + (n + i)] = d;
        }
    }
    let metric = Metric::from_flat(total, dmat)?;
    let mut reduced = Instance::new(n, n, metric, inst.oracle().clone())?
        .with_oracle_scale(inst.oracle_scale())?;
    if let Some(mu) = inst.conn_multipliers() {
        reduced = reduced.with_conn_multipliers(mu.to_vec())?;
    }
    Ok((reduced, back))
}

/// One connected piece produced by [`reduce_distance_range`].
#[derive(Clone, Debug)]
pub struct Component {
    pub instance: Instance,
    /// Original client ids, ascending; component client `j` is `client_ids[j]`.
    pub client_ids: Vec<u32>,
    /// Original facility indices, ascending.
    pub facility_ids: Vec<usize>,
    /// Factor by which the component's distances were rescaled.
    pub lambda: f64,
}

/// Splits the instance at distance threshold `level` and normalizes each
/// piece for tree embedding.
///
/// Points are grouped into connected components of the graph with edges
/// `d(x, y) <= level`; within a component, distances become shortest paths
/// over those edges. Points are then snapped together greedily (ascending
/// id) whenever they lie within `(eps / n) * level` of an already chosen
/// representative, which bounds the spread of each piece, and the metric is
/// rescaled so its smallest positive distance is exactly 2. Components with
/// no clients are dropped; a component with clients but no facility makes
/// the threshold infeasible.
pub fn reduce_distance_range(inst: &Instance, eps: f64, level: f64) -> Result<Vec<Component>> {
    if !eps.is_finite() || eps <= 0.0 {
        return Err(Error::domain("eps must be finite and positive"));
    }
    if !level.is_finite() || level <= 0.0 {
        return Err(Error::domain("distance threshold must be finite and positive"));
    }
    let n = inst.n();
    let total = n + inst.m();
    let metric = inst.metric();

    // Connected components of the threshold graph, by repeated sweeps.
    let mut comp_of = vec![usize::MAX; total];
    let mut comps: Vec<Vec<usize>> = Vec::new();
    for start in 0..total {
        if comp_of[start] != usize::MAX {
            continue;
        }
        let id = comps.len();
        let mut queue = vec![start];
        comp_of[start] = id;
        let mut members = vec![start];
        while let Some(x) = queue.pop() {
            for y in 0..total {
                if comp_of[y] == usize::MAX && metric.dist(x, y) <= level {
                    comp_of[y] = id;
                    queue.push(y);
                    members.push(y);
                }
            }
        }
        members.sort_unstable();
        comps.push(members);
    }

    let snap_radius = (eps / (2.0 * n as f64)) * level;
    let mut out = Vec::new();
    for members in comps {
        let clients: Vec<u32> = members
            .iter()
            .filter(|&&x| x < n)
            .map(|&x| x as u32)
            .collect();
        if clients.is_empty() {
            continue;
        }
        let facilities: Vec<usize> = members
            .iter()
            .filter(|&&x| x >= n)
            .map(|&x| x - n)
            .collect();
        if facilities.is_empty() {
            return Err(Error::domain(format!(
                "threshold {level} leaves client {} with no reachable facility",
                clients[0]
            )));
        }
        let k = members.len();

        // Shortest paths over edges of length at most `level`.
        let mut dd = vec![f64::INFINITY; k * k];
        for a in 0..k {
            dd[a * k + a] = 0.0;
            for b in 0..a {
                let d = metric.dist(members[a], members[b]);
                if d <= level {
                    dd[a * k + b] = d;
                    dd[b * k + a] = d;
                }
            }
        }
        floyd_warshall(k, &mut dd);
        debug_assert!(dd.iter().all(|d| d.is_finite()));

        // Greedy net: keep a point as a representative unless it is within
        // 2*snap_radius of an earlier representative; snap the rest.
        let mut rep: Vec<usize> = Vec::with_capacity(k);
        let mut center = vec![usize::MAX; k];
        for a in 0..k {
            match rep.iter().find(|&&r| dd[a * k + r] <= 2.0 * snap_radius) {
                Some(&r) => center[a] = r,
                None => {
                    center[a] = a;
                    rep.push(a);
                }
            }
        }
        let mut snapped = vec![0.0; k * k];
        for a in 0..k {
            for b in 0..k {
                snapped[a * k + b] = dd[center[a] * k + center[b]];
            }
        }
        let mut dmin = f64::INFINITY;
        for &v in &snapped {
            if v > 0.0 && v < dmin {
                dmin = v;
            }
        }
        let lambda = if dmin.is_finite() { 2.0 / dmin } else { 1.0 };
        let comp_metric = Metric::from_flat(k, snapped)?.scaled(lambda);

        let sub_oracle = inst.oracle().restrict(&clients)?;
        let mut comp_inst = Instance::new(clients.len(), facilities.len(), comp_metric, sub_oracle)?
            .with_oracle_scale(inst.oracle_scale() * lambda)?;
        if let Some(w) = inst.mult_weights() {
            comp_inst = comp_inst.with_mult_weights(facilities.iter().map(|&f| w[f]).collect())?;
        }
        if let Some(p) = inst.add_weights() {
            comp_inst =
                comp_inst.with_add_weights(facilities.iter().map(|&f| p[f] * lambda).collect())?;
        }
        if let Some(mu) = inst.conn_multipliers() {
            comp_inst = comp_inst
                .with_conn_multipliers(clients.iter().map(|&c| mu[c as usize]).collect())?;
        }
        out.push(Component {
            instance: comp_inst,
            client_ids: clients,
            facility_ids: facilities,
            lambda,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hypercube_dim2_shape_and_distances() {
        let inst = gen_hypercube(2).unwrap();
        assert_eq!(inst.n(), 8);
        assert_eq!(inst.m(), 8);
        // Vertex facilities 0..4, edge facilities 4..8; p = (1/4, 1/2).
        assert!((inst.dist_ff(0, 1) - 0.25).abs() < tol::EPS_NUM);
        assert!((inst.dist_ff(0, 2) - 0.5).abs() < tol::EPS_NUM);
        assert!((inst.dist_ff(0, 3) - 0.75).abs() < tol::EPS_NUM);
        // Clients are colocated with their vertex facility.
        for v in 0..4 {
            for l in 0..2 {
                assert_eq!(inst.dist_cf(v * 2 + l, v), 0.0);
            }
        }
        // First edge facility: dimension 1 (length 1/4), endpoints 0 and 1.
        assert!((inst.dist_ff(4, 0) - 0.125).abs() < tol::EPS_NUM);
        assert!((inst.dist_ff(4, 1) - 0.125).abs() < tol::EPS_NUM);
        inst.metric().verify_triangle().unwrap();
    }

    #[test]
    fn hypercube_dim3_shape_and_golden_edge() {
        let inst = gen_hypercube(3).unwrap();
        assert_eq!(inst.n(), 24);
        assert_eq!(inst.m(), 20);
        // Dimension-1 edges have length 1/6.
        assert!((inst.dist_ff(0, 1) - 1.0 / 6.0).abs() < tol::EPS_NUM);
    }

    #[test]
    fn hypercube_layout_matches_generated_geometry() {
        for dim in [2u32, 3] {
            let inst = gen_hypercube(dim).unwrap();
            let lay = HypercubeLayout::new(dim).unwrap();
            assert_eq!(inst.n(), lay.num_clients());
            assert_eq!(inst.m(), lay.num_facilities());
            for v in 0..lay.num_vertices() {
                for l in 0..lay.dim() {
                    // Every client is colocated with its vertex facility.
                    assert_eq!(inst.dist_cf(lay.client(v, l), lay.vertex_facility(v)), 0.0);
                    assert_eq!(lay.client_vertex(lay.client(v, l)), v);
                    assert_eq!(lay.client_slot(lay.client(v, l)), l);
                }
            }
            // Edge facilities sit half an edge from both endpoint vertices,
            // and ids tile 2^dim..m exactly once.
            let mut seen = vec![false; lay.num_facilities()];
            for b in 0..lay.dim() {
                let half = lay.edge_length(b) / 2.0;
                for lo in 0..lay.num_vertices() {
                    if lo >> b & 1 == 1 {
                        continue;
                    }
                    let hi = lo | (1 << b);
                    let fid = lay.edge_facility(lo, b);
                    assert!(fid >= lay.num_vertices());
                    assert!(!seen[fid]);
                    seen[fid] = true;
                    assert!((inst.dist_cf(lay.client(lo, b), fid) - half).abs() < tol::EPS_NUM);
                    assert!((inst.dist_cf(lay.client(hi, b), fid) - half).abs() < tol::EPS_NUM);
                }
            }
            assert!(seen[lay.num_vertices()..].iter().all(|&s| s));
        }
        assert!(HypercubeLayout::new(0).is_err());
    }

    #[test]
    fn hypercube_own_vertex_assignment_total() {
        // Everyone to their own vertex facility: zero connection cost, and
        // each of the 4 facilities serves both local demands at 0.625.
        let inst = gen_hypercube(2).unwrap();
        let assign: Vec<u32> = (0..8u32).map(|c| c / 2).collect();
        let cost = inst.cost(&assign).unwrap();
        assert_eq!(cost.conn, 0.0);
        assert!((cost.open - 2.5).abs() < tol::EPS_NUM);
        assert!((cost.total - 2.5).abs() < tol::EPS_NUM);
    }

    #[test]
    fn hypercube_caps() {
        assert!(gen_hypercube(0).is_err());
        assert!(matches!(gen_hypercube(9), Err(Error::CapExceeded(_))));
        let inst = gen_hypercube(5).unwrap();
        assert_eq!(inst.n(), 160);
        assert_eq!(inst.m(), 112);
    }

    #[test]
    fn random_instances_are_deterministic_and_valid() {
        let a = gen_random(5, 4, 7, RandomOracleFamily::Coverage).unwrap();
        let b = gen_random(5, 4, 7, RandomOracleFamily::Coverage).unwrap();
        assert_eq!(a, b);
        let c = gen_random(5, 4, 8, RandomOracleFamily::Coverage).unwrap();
        assert_ne!(a, c);
        a.metric().verify_triangle().unwrap();
        for fam in [
            RandomOracleFamily::Uniform,
            RandomOracleFamily::IndependentActivation,
        ] {
            gen_random(3, 3, 1, fam).unwrap().metric().verify_triangle().unwrap();
        }
    }

    #[test]
    fn json_roundtrip_preserves_instance() {
        let inst = gen_random(4, 3, 42, RandomOracleFamily::IndependentActivation)
            .unwrap()
            .with_mult_weights(vec![1.0, 0.5, 2.0])
            .unwrap()
            .with_conn_multipliers(vec![1.0, 0.5, 0.25, 1.0])
            .unwrap();
        let text = inst.to_json();
        let back = Instance::from_json(&text).unwrap();
        assert_eq!(inst, back);
        // Scale survives only when it is not 1.
        assert!(!text.contains("oracle_scale"));
        let scaled = inst.clone().with_oracle_scale(2.0).unwrap();
        assert!(scaled.to_json().contains("oracle_scale"));
        assert_eq!(Instance::from_json(&scaled.to_json()).unwrap(), scaled);
    }

    #[test]
    fn json_rejects_invalid_payloads() {
        let base = gen_random(2, 2, 1, RandomOracleFamily::Uniform).unwrap();
        let mut bad = serde_json::from_str::<serde_json::Value>(&base.to_json()).unwrap();
        bad["metric"][0][1] = serde_json::json!(99.0);
        bad["metric"][1][0] = serde_json::json!(99.0);
        assert!(Instance::from_json(&bad.to_string()).is_err()); // triangle

        let both = serde_json::from_str::<serde_json::Value>(&{
            let mut v: serde_json::Value =
                serde_json::from_str(&base.to_json()).unwrap();
            v["mult_weights"] = serde_json::json!([1.0, 1.0]);
            v["add_weights"] = serde_json::json!([1.0, 1.0]);
            v.to_string()
        })
        .map(|v| v.to_string())
        .unwrap();
        assert!(matches!(
            Instance::from_json(&both),
            Err(Error::UnsupportedVariant(_))
        ));

        let mut badmu: serde_json::Value = serde_json::from_str(&base.to_json()).unwrap();
        badmu["conn_multipliers"] = serde_json::json!([0.0, 1.0]);
        assert!(Instance::from_json(&badmu.to_string()).is_err());
    }

    #[test]
    fn variant_weights_are_mutually_exclusive() {
        let inst = gen_random(2, 2, 3, RandomOracleFamily::Uniform).unwrap();
        let with_mult = inst.clone().with_mult_weights(vec![1.0, 2.0]).unwrap();
        assert!(matches!(
            with_mult.with_add_weights(vec![0.5, 0.5]),
            Err(Error::UnsupportedVariant(_))
        ));
    }

    #[test]
    fn facility_consolidation_formulas() {
        // Three points on a line: clients at 0 and 10, facilities at 1 and 9.
        let metric = Metric::new(vec![
            vec![0.0, 10.0, 1.0, 9.0],
            vec![10.0, 0.0, 9.0, 1.0],
            vec![1.0, 9.0, 0.0, 8.0],
            vec![9.0, 1.0, 8.0, 0.0],
        ])
        .unwrap();
        let oracle = SubmodularOracle::uniform(1.0, 2).unwrap();
        let inst = Instance::new(2, 2, metric, oracle).unwrap();
        let (red, back) = reduce_facilities(&inst).unwrap();
        assert_eq!(back, vec![0, 1]);
        assert_eq!(red.m(), 2);
        // New facility j sits one radius (=1) past client j.
        assert_eq!(red.dist_cf(0, 0), 1.0);
        assert_eq!(red.dist_cf(0, 1), 11.0);
        assert_eq!(red.dist_ff(0, 1), 12.0);
        red.metric().verify_triangle().unwrap();
    }

    #[test]
    fn distance_split_two_clusters() {
        // Two clusters 100 apart; inside each, client and facility 1 apart.
        let metric = Metric::new(vec![
            vec![0.0, 100.0, 1.0, 101.0],
            vec![100.0, 0.0, 101.0, 1.0],
            vec![1.0, 101.0, 0.0, 100.0],
            vec![101.0, 1.0, 100.0, 0.0],
        ])
        .unwrap();
        let oracle = SubmodularOracle::coverage(
            vec![1.0, 2.0],
            vec![vec![0], vec![1]],
        )
        .unwrap();
        let inst = Instance::new(2, 2, metric, oracle).unwrap();
        let comps = reduce_distance_range(&inst, 0.5, 2.0).unwrap();
        assert_eq!(comps.len(), 2);
        assert_eq!(comps[0].client_ids, vec![0]);
        assert_eq!(comps[0].facility_ids, vec![0]);
        assert_eq!(comps[1].client_ids, vec![1]);
        assert_eq!(comps[1].facility_ids, vec![1]);
        // Rescaled so the smallest positive distance is exactly 2.
        for comp in &comps {
            assert_eq!(comp.instance.dist_cf(0, 0), 2.0);
            assert_eq!(comp.lambda, 2.0);
            assert_eq!(comp.instance.oracle_scale(), 2.0);
        }
        // The restricted oracle keeps each client's own coverage value.
        assert_eq!(
            comps[1].instance.open_cost(0, &ClientSet::singleton(0)),
            2.0 * 2.0
        );
    }

    #[test]
    fn distance_split_snaps_near_duplicates() {
        // Clients at 0 and 1e-9, facility at 1: the two clients collapse.
        let d01 = 1e-9;
        let metric = Metric::new(vec![
            vec![0.0, d01, 1.0],
            vec![d01, 0.0, 1.0 - d01],
            vec![1.0, 1.0 - d01, 0.0],
        ])
        .unwrap();
        let oracle = SubmodularOracle::uniform(1.0, 2).unwrap();
        let inst = Instance::new(2, 1, metric, oracle).unwrap();
        let comps = reduce_distance_range(&inst, 0.5, 1.0).unwrap();
        assert_eq!(comps.len(), 1);
        let ci = &comps[0].instance;
        assert_eq!(ci.dist_cc(0, 1), 0.0);
        assert_eq!(ci.dist_cf(0, 0), 2.0);
        assert_eq!(ci.dist_cf(1, 0), 2.0);
    }

    #[test]
    fn distance_split_detects_unreachable_clients() {
        let metric = Metric::new(vec![
            vec![0.0, 100.0, 1.0],
            vec![100.0, 0.0, 101.0],
            vec![1.0, 101.0, 0.0],
        ])
        .unwrap();
        let oracle = SubmodularOracle::uniform(1.0, 2).unwrap();
        let inst = Instance::new(2, 1, metric, oracle).unwrap();
        assert!(reduce_distance_range(&inst, 0.5, 2.0).is_err());
    }

    #[test]
    fn cost_checks_assignment_shape() {
        let inst = gen_random(3, 2, 5, RandomOracleFamily::Uniform).unwrap();
        assert!(inst.cost(&[0, 1]).is_err());
        assert!(inst.cost(&[0, 1, 2]).is_err());
        inst.cost(&[0, 1, 1]).unwrap();
    }
}
