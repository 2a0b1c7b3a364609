//! Randomized stage-1 partial rounding.
//!
//! Samples each nonzero LP column independently with probability equal to
//! its weight, for `max(1, ceil(ln ln N))` rounds, and merges the draws into a
//! partial assignment that covers each client with probability at least
//! `1 - 1/ln N`. The uncovered clients survive into a residual fractional
//! solution handled by the tree-rounding stage.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::instance::{CostBreakdown, Instance};
use crate::lp::{self, FractionalSolution};
use crate::set::ClientSet;

/// A facility -> client-set map; a client may appear under several
/// facilities (each occurrence pays its own connection and opening share).
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct PartialAssignment {
    served: Vec<ClientSet>,
}

impl PartialAssignment {
    pub fn new(m: usize) -> Self {
        PartialAssignment {
            served: vec![ClientSet::new(); m],
        }
    }

    pub fn from_sets(served: Vec<ClientSet>) -> Self {
        PartialAssignment { served }
    }

    pub fn single(m: usize, facility: usize, set: ClientSet) -> Self {
        let mut pa = PartialAssignment::new(m);
        pa.served[facility] = set;
        pa
    }

    pub fn m(&self) -> usize {
        self.served.len()
    }

    pub fn served(&self, facility: usize) -> &ClientSet {
        &self.served[facility]
    }

    pub fn sets(&self) -> &[ClientSet] {
        &self.served
    }

    /// Adds `set` to facility `f` (set union; overlaps allowed).
    pub fn insert_at(&mut self, facility: usize, set: &ClientSet) {
        self.served[facility] = self.served[facility].union(set);
    }

    /// Union of all served sets.
    pub fn covered(&self) -> ClientSet {
        self.served
            .iter()
            .fold(ClientSet::new(), |acc, s| acc.union(s))
    }

    pub fn is_empty(&self) -> bool {
        self.served.iter().all(ClientSet::is_empty)
    }

    /// The client -> facility map, provided the sets are disjoint and cover
    /// `0..n` (i.e. the assignment is total).
    pub fn to_assignment(&self, n: usize) -> Result<Vec<u32>> {
        let mut out = vec![u32::MAX; n];
        for (f, set) in self.served.iter().enumerate() {
            for &c in set {
                if (c as usize) >= n {
                    return Err(Error::domain(format!("client {c} out of range")));
                }
                if out[c as usize] != u32::MAX {
                    return Err(Error::domain(format!(
                        "client {c} served by two facilities; not a total assignment"
                    )));
                }
                out[c as usize] = f as u32;
            }
        }
        if let Some(c) = out.iter().position(|&f| f == u32::MAX) {
            return Err(Error::domain(format!(
                "client {c} unserved; not a total assignment"
            )));
        }
        Ok(out)
    }
}

/// Union per facility, then deduplication: every client ends up at the
/// smallest facility id serving it in either input. Total cost never
/// increases versus the two inputs combined.
pub fn merge(a: &PartialAssignment, b: &PartialAssignment) -> PartialAssignment {
    debug_assert_eq!(a.m(), b.m());
    let mut kept = ClientSet::new();
    let mut served = Vec::with_capacity(a.m());
    for f in 0..a.m() {
        let union = a.served[f].union(&b.served[f]);
        let mine = union.difference(&kept);
        kept = kept.union(&mine);
        served.push(mine);
    }
    PartialAssignment { served }
}

/// Connection + opening cost of a partial assignment (overlapping clients
/// pay per occurrence).
pub fn cost(inst: &Instance, pa: &PartialAssignment) -> Result<CostBreakdown> {
    if pa.m() != inst.m() {
        return Err(Error::domain(format!(
            "assignment covers {} facilities, instance has {}",
            pa.m(),
            inst.m()
        )));
    }
    let mut conn = 0.0;
    let mut open = 0.0;
    for (f, set) in pa.served.iter().enumerate() {
        for &c in set {
            if (c as usize) >= inst.n() {
                return Err(Error::domain(format!("client {c} out of range")));
            }
            conn += inst.dist_cf(c as usize, f) * inst.conn_mult(c as usize);
        }
        open += inst.open_cost(f, set);
    }
    Ok(CostBreakdown {
        conn,
        open,
        total: conn + open,
    })
}

/// Number of sampling rounds for an instance with `big_n = n + m` points.
pub fn num_rounds(big_n: usize) -> usize {
    let t = (big_n as f64).ln().ln().ceil();
    if t.is_finite() && t >= 1.0 {
        t as usize
    } else {
        1
    }
}

#[derive(Clone, Debug)]
pub struct StageOneResult {
    pub assignment: PartialAssignment,
    pub covered: ClientSet,
    pub rounds: usize,
    pub rng_seed: u64,
}

/// Stage-1 rounding: in each of `num_rounds(n+m)` rounds, includes every
/// nonzero column `(f, R)` of `x` independently with probability equal to
/// its weight, then merges all sampled draws in (round, facility, column)
/// order. Each (round, column) pair reads one uniform draw from its own
/// ChaCha8 stream (stream id `round*ncols + column`, all seeded by `seed`),
/// so results are bit-reproducible.
pub fn stage_one(inst: &Instance, x: &FractionalSolution, seed: u64) -> Result<StageOneResult> {
    if x.n() != inst.n() || x.m() != inst.m() {
        return Err(Error::domain(
            "fractional solution shape does not match instance",
        ));
    }
    let rounds = num_rounds(inst.n() + inst.m());
    let ncols = x.len() as u64;
    let mut acc = PartialAssignment::new(inst.m());
    for i in 0..rounds as u64 {
        for (j, (col, w)) in x.iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i * ncols + j as u64);
            let u: f64 = rng.gen();
            if u < w {
                let draw = PartialAssignment::single(inst.m(), col.facility, col.set.clone());
                acc = merge(&acc, &draw);
            }
        }
    }
    let covered = acc.covered();
    Ok(StageOneResult {
        assignment: acc,
        covered,
        rounds,
        rng_seed: seed,
    })
}

/// The fractional solution induced on the clients not covered by stage 1:
/// `x` restricted to the complement of `covered`.
pub fn residual(x: &FractionalSolution, covered: &ClientSet) -> FractionalSolution {
    let keep = ClientSet::full(x.n()).difference(covered);
    lp::restrict(x, &keep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{gen_random, RandomOracleFamily};
    use crate::lp::{solve_conf_lp, LpMode};

    #[test]
    fn merge_keeps_smallest_facility() {
        let s1 = PartialAssignment::from_sets(vec![ClientSet::singleton(0), ClientSet::new()]);
        let s2 = PartialAssignment::from_sets(vec![
            ClientSet::new(),
            ClientSet::from_vec(vec![0, 1]),
        ]);
        let merged = merge(&s1, &s2);
        assert_eq!(merged.served(0), &ClientSet::singleton(0));
        assert_eq!(merged.served(1), &ClientSet::singleton(1));
    }

    #[test]
    fn merge_with_empty_resolves_overlaps() {
        let overlapping = PartialAssignment::from_sets(vec![
            ClientSet::singleton(0),
            ClientSet::from_vec(vec![0, 1]),
        ]);
        let merged = merge(&overlapping, &PartialAssignment::new(2));
        assert_eq!(merged.served(0), &ClientSet::singleton(0));
        assert_eq!(merged.served(1), &ClientSet::singleton(1));
        assert_eq!(merged.covered(), ClientSet::from_vec(vec![0, 1]));
    }

    #[test]
    fn merge_subadditive_on_random_pairs() {
        for seed in 0..20u64 {
            let inst = gen_random(5, 3, seed, RandomOracleFamily::Coverage).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
            let rand_pa = |rng: &mut ChaCha8Rng| {
                let sets = (0..3)
                    .map(|_| {
                        (0..5)
                            .filter(|_| rng.gen::<f64>() < 0.4)
                            .map(|c| c as u32)
                            .collect::<ClientSet>()
                    })
                    .collect();
                PartialAssignment::from_sets(sets)
            };
            let a = rand_pa(&mut rng);
            let b = rand_pa(&mut rng);
            let merged = merge(&a, &b);
            let lhs = cost(&inst, &merged).unwrap().total;
            let rhs = cost(&inst, &a).unwrap().total + cost(&inst, &b).unwrap().total;
            assert!(lhs <= rhs + 1e-9, "merge increased cost: {lhs} > {rhs}");
        }
    }

    #[test]
    fn overlapping_clients_pay_per_occurrence() {
        let inst = gen_random(2, 2, 1, RandomOracleFamily::Uniform).unwrap();
        let both = PartialAssignment::from_sets(vec![
            ClientSet::singleton(0),
            ClientSet::singleton(0),
        ]);
        let once = PartialAssignment::from_sets(vec![ClientSet::singleton(0), ClientSet::new()]);
        let c2 = cost(&inst, &both).unwrap();
        let c1 = cost(&inst, &once).unwrap();
        assert!(c2.open > c1.open);
        assert!(c2.conn >= c1.conn);
    }

    #[test]
    fn round_counts() {
        assert_eq!(num_rounds(2), 1);
        assert_eq!(num_rounds(15), 1);
        assert_eq!(num_rounds(16), 2);
        assert_eq!(num_rounds(4096), 3);
    }

    #[test]
    fn integral_solution_covers_everything() {
        let inst = gen_random(4, 3, 7, RandomOracleFamily::Coverage).unwrap();
        let x = FractionalSolution::from_assignment(&inst, &[0, 1, 2, 0]).unwrap();
        for seed in 0..50 {
            let out = stage_one(&inst, &x, seed).unwrap();
            assert_eq!(out.covered, ClientSet::full(4));
            let total = cost(&inst, &out.assignment).unwrap().total;
            let direct = inst.cost(&[0, 1, 2, 0]).unwrap().total;
            assert!((total - direct).abs() < 1e-9);
            assert!(residual(&x, &out.covered).support_size() == 0);
        }
    }

    #[test]
    fn single_unit_column_always_sampled() {
        let inst = gen_random(1, 2, 3, RandomOracleFamily::Uniform).unwrap();
        let x = FractionalSolution::from_entries(
            1,
            2,
            vec![
                (0, ClientSet::singleton(0), 1.0),
                (0, ClientSet::new(), 0.0),
                (1, ClientSet::new(), 1.0),
            ],
        )
        .unwrap();
        let out = stage_one(&inst, &x, 99).unwrap();
        assert_eq!(out.assignment.served(0), &ClientSet::singleton(0));
        assert!(out.assignment.served(1).is_empty());
        assert_eq!(out.rounds, 1);
    }

    #[test]
    fn deterministic_per_seed() {
        let inst = gen_random(6, 4, 5, RandomOracleFamily::IndependentActivation).unwrap();
        let x = solve_conf_lp(&inst, LpMode::Colgen).unwrap().solution;
        let a = stage_one(&inst, &x, 42).unwrap();
        let b = stage_one(&inst, &x, 42).unwrap();
        assert_eq!(a.assignment, b.assignment);
        assert_eq!(a.covered, b.covered);

        // A genuinely fractional solution must produce seed-dependent draws.
        let inst = gen_random(1, 2, 5, RandomOracleFamily::Uniform).unwrap();
        let half = FractionalSolution::from_entries(
            1,
            2,
            vec![
                (0, ClientSet::new(), 0.5),
                (0, ClientSet::singleton(0), 0.5),
                (1, ClientSet::new(), 0.5),
                (1, ClientSet::singleton(0), 0.5),
            ],
        )
        .unwrap();
        let first = stage_one(&inst, &half, 0).unwrap();
        let seeds_differ =
            (1..50).any(|s| stage_one(&inst, &half, s).unwrap().assignment != first.assignment);
        assert!(seeds_differ, "sampling ignores the seed");
    }

    #[test]
    fn residual_identities() {
        let inst = gen_random(4, 2, 9, RandomOracleFamily::Coverage).unwrap();
        let x = solve_conf_lp(&inst, LpMode::Colgen).unwrap().solution;
        assert_eq!(residual(&x, &ClientSet::new()), x);
        let all = residual(&x, &ClientSet::full(4));
        assert_eq!(all.support_size(), 0);
        for f in 0..2 {
            assert!((all.facility_mass(f) - 1.0).abs() < 1e-7);
        }
    }

    #[test]
    fn to_assignment_roundtrip() {
        let pa = PartialAssignment::from_sets(vec![
            ClientSet::from_vec(vec![0, 2]),
            ClientSet::singleton(1),
        ]);
        assert_eq!(pa.to_assignment(3).unwrap(), vec![0, 1, 0]);
        assert!(pa.to_assignment(4).is_err());
        let dup = PartialAssignment::from_sets(vec![
            ClientSet::singleton(0),
            ClientSet::singleton(0),
        ]);
        assert!(dup.to_assignment(1).is_err());
    }
}
