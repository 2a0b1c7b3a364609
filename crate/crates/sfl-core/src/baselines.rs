//! Greedy and exact baseline solvers.
//!
//! Two greedy variants share one driver: [`greedy_exact`] scans every
//! nonempty batch of uncovered clients at every facility, while
//! [`greedy_structured`] scans a restricted candidate family tailored to
//! the hypercube instances so larger dimensions stay tractable. Both log
//! every committed step for tracing. [`exact_dp`] (subset dynamic program)
//! and [`exhaustive`] (full assignment enumeration) provide certified
//! optima on small instances.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::instance::{CostBreakdown, HypercubeLayout, Instance};
use crate::oracle::{OracleKind, TableOracle};
use crate::set::ClientSet;
use crate::tol;

/// One committed greedy step: `set` was assigned to `facility` at
/// per-client marginal cost `ratio`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GreedyStep {
    pub set: ClientSet,
    pub facility: usize,
    pub ratio: f64,
}

/// A greedy run: the final assignment, its exact cost, and the step trace.
#[derive(Debug, Clone, PartialEq)]
pub struct GreedyOutcome {
    pub assignment: Vec<u32>,
    pub cost: CostBreakdown,
    pub steps: Vec<GreedyStep>,
}

/// A certified-optimal assignment and its cost.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactOutcome {
    pub assignment: Vec<u32>,
    pub cost: CostBreakdown,
}

/// Tie class of a candidate batch, in decreasing preference: a pair of
/// clients from two distinct locations served away from both (1), a single
/// client served where it stands (2), everything else (3).
fn tie_class(inst: &Instance, set: &ClientSet, f: usize) -> u8 {
    let ids = set.as_slice();
    if ids.len() == 2 {
        let (a, b) = (ids[0] as usize, ids[1] as usize);
        if inst.dist_cc(a, b) > 0.0 && inst.dist_cf(a, f) > 0.0 && inst.dist_cf(b, f) > 0.0 {
            return 1;
        }
    }
    if ids.len() == 1 && inst.dist_cf(ids[0] as usize, f) == 0.0 {
        return 2;
    }
    3
}

struct Candidate {
    ratio: f64,
    class: u8,
    joins_used_facility: bool,
    set: ClientSet,
    facility: usize,
}

/// Relative slack under which two cost-effectiveness ratios count as tied.
/// Mathematically equal ratios are often computed along different
/// arithmetic paths (e.g. a marginal opening gain plus a connection cost
/// versus a closed-form pair cost) and land an ulp apart; comparing them
/// raw would bypass the tie preferences on exactly the instances that need
/// them.
const RATIO_TIE_EPS: f64 = 1e-12;

fn ratios_tied(a: f64, b: f64) -> bool {
    (a - b).abs() <= RATIO_TIE_EPS * 1.0_f64.max(a.abs()).max(b.abs())
}

/// Preference order on candidates: ratio (up to the tie slack), then tie
/// class, then facilities not yet serving anyone before facilities that
/// are, then batch size, then facility id, then lexicographic batch
/// contents.
///
/// The fresh-before-used key makes equal-ratio ties resolve against piling
/// more clients onto an open facility; without it the batched greedy joins
/// open edge midpoints instead of opening the remaining ones whenever the
/// marginal opening gain exactly offsets the extra connection cost.
fn candidate_beats(a: &Candidate, b: &Candidate) -> bool {
    if !ratios_tied(a.ratio, b.ratio) {
        return a.ratio < b.ratio;
    }
    if a.class != b.class {
        return a.class < b.class;
    }
    if a.joins_used_facility != b.joins_used_facility {
        return !a.joins_used_facility;
    }
    if a.set.len() != b.set.len() {
        return a.set.len() < b.set.len();
    }
    if a.facility != b.facility {
        return a.facility < b.facility;
    }
    a.set < b.set
}

/// Shared greedy driver. `candidates` receives the uncovered set and the
/// current per-facility served sets and proposes `(batch, facility)` pairs;
/// each batch must be a nonempty subset of the uncovered clients.
fn run_greedy<F>(inst: &Instance, mut candidates: F) -> Result<GreedyOutcome>
where
    F: FnMut(&ClientSet, &[ClientSet]) -> Vec<(ClientSet, usize)>,
{
    let n = inst.n();
    let mut uncovered = ClientSet::full(n);
    let mut served: Vec<ClientSet> = vec![ClientSet::new(); inst.m()];
    let mut steps: Vec<GreedyStep> = Vec::new();
    while !uncovered.is_empty() {
        let base_open: Vec<f64> = (0..inst.m())
            .map(|f| inst.open_cost(f, &served[f]))
            .collect();
        let mut best: Option<Candidate> = None;
        for (set, f) in candidates(&uncovered, &served) {
            debug_assert!(!set.is_empty() && set.is_subset_of(&uncovered));
            debug_assert!(f < inst.m());
            let after = inst.open_cost(f, &served[f].union(&set));
            let mut conn = 0.0;
            for &c in set.iter() {
                conn += inst.dist_cf(c as usize, f) * inst.conn_mult(c as usize);
            }
            let ratio = (after - base_open[f] + conn) / set.len() as f64;
            let cand = Candidate {
                ratio,
                class: tie_class(inst, &set, f),
                joins_used_facility: !served[f].is_empty(),
                set,
                facility: f,
            };
            if best.as_ref().is_none_or(|b| candidate_beats(&cand, b)) {
                best = Some(cand);
            }
        }
        let chosen = best.ok_or_else(|| Error::invariant("greedy found no candidate batch"))?;
        served[chosen.facility] = served[chosen.facility].union(&chosen.set);
        uncovered = uncovered.difference(&chosen.set);
        steps.push(GreedyStep {
            set: chosen.set,
            facility: chosen.facility,
            ratio: chosen.ratio,
        });
    }
    let mut assignment = vec![0u32; n];
    for (f, s) in served.iter().enumerate() {
        for &c in s.iter() {
            assignment[c as usize] = f as u32;
        }
    }
    let cost = inst.cost(&assignment)?;
    Ok(GreedyOutcome {
        assignment,
        cost,
        steps,
    })
}

/// Batched greedy over every nonempty subset of the uncovered clients at
/// every facility.
///
/// Each step commits the batch minimizing the per-client marginal cost
/// `(open(f, T union R) - open(f, T) + sum_{c in R} d(c,f)*mu_c) / |R|`, where `T`
/// is what facility `f` already serves. Exact ties prefer a pair of
/// clients from two distinct locations served away from both, then a
/// single client served where it stands; remaining ties prefer facilities
/// not yet serving anyone, then the smaller batch, the lower facility id,
/// then the lexicographically smaller batch.
pub fn greedy_exact(inst: &Instance) -> Result<GreedyOutcome> {
    if inst.n() > tol::MAX_GREEDY_CLIENTS {
        return Err(Error::cap(format!(
            "batched greedy enumerates all client subsets; {} clients exceeds the cap of {}",
            inst.n(),
            tol::MAX_GREEDY_CLIENTS
        )));
    }
    run_greedy(inst, |uncovered, _| {
        let ids = uncovered.as_slice();
        let k = ids.len();
        let mut out = Vec::with_capacity(inst.m() * ((1usize << k) - 1));
        for f in 0..inst.m() {
            for bits in 1u64..(1u64 << k) {
                let set: ClientSet = ids
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| bits >> i & 1 == 1)
                    .map(|(_, &c)| c)
                    .collect();
                out.push((set, f));
            }
        }
        out
    })
}

/// Batched greedy over the structured candidate family of the hypercube
/// instances: single clients at any facility, the two endpoint demands of
/// an edge (in that edge's own dimension) at the edge midpoint, batches of
/// demands within one vertex at that vertex's facility, and any of those
/// shapes joined onto a facility that already serves someone.
///
/// Rejects instances whose oracle is not a native hypercube kind or whose
/// shape does not match the layout of that dimension.
pub fn greedy_structured(inst: &Instance) -> Result<GreedyOutcome> {
    let OracleKind::Hypercube { dim } = *inst.oracle().kind() else {
        return Err(Error::domain(
            "structured greedy requires a hypercube instance",
        ));
    };
    if dim > tol::MAX_STRUCTURED_DIM {
        return Err(Error::cap(format!(
            "structured greedy handles dimension at most {}, got {dim}",
            tol::MAX_STRUCTURED_DIM
        )));
    }
    let lay = HypercubeLayout::new(dim)?;
    if inst.n() != lay.num_clients() || inst.m() != lay.num_facilities() {
        return Err(Error::domain(
            "instance shape does not match its hypercube oracle dimension",
        ));
    }
    let m = inst.m();
    run_greedy(inst, move |uncovered, served| {
        let open: Vec<usize> = (0..m).filter(|&f| !served[f].is_empty()).collect();
        let mut out: Vec<(ClientSet, usize)> = Vec::new();
        for &c in uncovered.iter() {
            for f in 0..m {
                out.push((ClientSet::singleton(c), f));
            }
        }
        for b in 0..lay.dim() {
            for lo in 0..lay.num_vertices() {
                if lo >> b & 1 == 1 {
                    continue;
                }
                let hi = lo | (1 << b);
                let c1 = lay.client(lo, b) as u32;
                let c2 = lay.client(hi, b) as u32;
                if !(uncovered.contains(c1) && uncovered.contains(c2)) {
                    continue;
                }
                let pair = ClientSet::from_vec(vec![c1, c2]);
                out.push((pair.clone(), lay.edge_facility(lo, b)));
                for &f in &open {
                    out.push((pair.clone(), f));
                }
            }
        }
        for v in 0..lay.num_vertices() {
            let local: Vec<u32> = (0..lay.dim())
                .map(|l| lay.client(v, l) as u32)
                .filter(|&c| uncovered.contains(c))
                .collect();
            for bits in 1u64..(1u64 << local.len()) {
                let set: ClientSet = local
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| bits >> i & 1 == 1)
                    .map(|(_, &c)| c)
                    .collect();
                out.push((set.clone(), lay.vertex_facility(v)));
                for &f in &open {
                    out.push((set.clone(), f));
                }
            }
        }
        out
    })
}

/// Certified optimum by dynamic programming over client subsets.
///
/// `best[S]` is the cheapest way to serve exactly batch `S` from a single
/// facility; a cover layer then partitions the full client set into
/// batches, anchoring each part at its lowest uncovered client. Monotone
/// subadditive opening costs make the restriction to partitions lossless.
pub fn exact_dp(inst: &Instance) -> Result<ExactOutcome> {
    let n = inst.n();
    if n > tol::MAX_DP_CLIENTS {
        return Err(Error::cap(format!(
            "subset dynamic program handles at most {} clients, got {n}",
            tol::MAX_DP_CLIENTS
        )));
    }
    let m = inst.m();
    let size = 1usize << n;
    let table = TableOracle::tabulate(inst.oracle())?;
    let gt = table.values();
    let scale = inst.oracle_scale();

    let mut best = vec![f64::INFINITY; size];
    let mut best_f = vec![0u32; size];
    best[0] = 0.0;
    let mut conn = vec![0.0f64; size];
    for f in 0..m {
        let wf = inst.mult_weight(f);
        let pf = inst.add_weight(f);
        for s in 1..size {
            let low = s.trailing_zeros() as usize;
            conn[s] = conn[s & (s - 1)] + inst.dist_cf(low, f) * inst.conn_mult(low);
            let v = pf + scale * wf * gt[s] + conn[s];
            if v < best[s] {
                best[s] = v;
                best_f[s] = f as u32;
            }
        }
    }

    let mut dp = vec![f64::INFINITY; size];
    let mut choice = vec![0usize; size];
    dp[0] = 0.0;
    for s in 1..size {
        let low = 1usize << s.trailing_zeros();
        let rest = s & !low;
        // Every submask of `s` containing `low`, largest first.
        let mut t = rest;
        loop {
            let part = t | low;
            let c = dp[s & !part] + best[part];
            if c < dp[s] {
                dp[s] = c;
                choice[s] = part;
            }
            if t == 0 {
                break;
            }
            t = (t - 1) & rest;
        }
    }

    let mut assignment = vec![0u32; n];
    let mut s = size - 1;
    while s != 0 {
        let part = choice[s];
        for &c in ClientSet::from_mask(part as u64, n).iter() {
            assignment[c as usize] = best_f[part];
        }
        s &= !part;
    }
    let cost = inst.cost(&assignment)?;
    let target = dp[size - 1];
    if (cost.total - target).abs() > 1e-9 * (1.0 + target.abs()) {
        return Err(Error::invariant(format!(
            "subset dynamic program value {target} disagrees with realized cost {}",
            cost.total
        )));
    }
    Ok(ExactOutcome { assignment, cost })
}

/// Certified optimum by enumerating every assignment.
///
/// Assignments are visited as mixed-radix counters with client 0 the least
/// significant digit; the first minimum in counter order is kept.
pub fn exhaustive(inst: &Instance) -> Result<ExactOutcome> {
    let n = inst.n();
    let m = inst.m();
    let mut states = 1u64;
    for _ in 0..n {
        states = states.saturating_mul(m as u64);
        if states > tol::MAX_EXHAUSTIVE_ASSIGNMENTS {
            return Err(Error::cap(format!(
                "exhaustive search visits {m}^{n} assignments, cap is {}",
                tol::MAX_EXHAUSTIVE_ASSIGNMENTS
            )));
        }
    }
    let mut counter = vec![0u32; n];
    let mut best: Option<(f64, Vec<u32>)> = None;
    'outer: loop {
        let total = inst.cost(&counter)?.total;
        if best.as_ref().is_none_or(|(bt, _)| total < *bt) {
            best = Some((total, counter.clone()));
        }
        let mut i = 0;
        loop {
            if i == n {
                break 'outer;
            }
            counter[i] += 1;
            if (counter[i] as usize) < m {
                break;
            }
            counter[i] = 0;
            i += 1;
        }
    }
    let (_, assignment) = best.expect("at least one assignment was scored");
    let cost = inst.cost(&assignment)?;
    Ok(ExactOutcome { assignment, cost })
}
