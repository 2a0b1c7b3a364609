//! Descendant-Leaf Assignment (DLA) on a hierarchically well-separated tree.
//!
//! In DLA every facility sits at a leaf, every client at a node, and a
//! client may only be served by facilities at leaf-descendants of its node;
//! the objective is the sum of per-facility submodular opening costs (no
//! connection term -- connections are accounted for by the lift back to the
//! tree metric). This module provides:
//!
//! * [`reduce_to_dla`]: anchors each client of a fractional tree solution at
//!   the lowest ancestor holding at least half of its service mass and
//!   normalizes the mass into a DLA-feasible fractional vector, at an opening
//!   cost at most doubled;
//! * [`round_dla`]: bottom-up rounding that repeatedly funnels the mass of a
//!   subtree into one facility and commits a level set of clients whenever
//!   one is `alpha/32`-supported, losing at most a `1 + 32*log2(D+1)` factor;
//! * [`lift_to_sfl`]: reinterprets the rounded assignment on the tree metric
//!   and verifies the per-client and aggregate connection blow-up bounds.
//!
//! Every asserted inequality is returned as an [`audit::CheckRecord`].

use crate::audit::{self, CheckRecord};
use crate::embed::Hst;
use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::lp::{frac_cost, FractionalSolution};
use crate::oracle::{
    level_set, lovasz, lovasz_truncated, ScaledOracle, SetFunction, SubmodularOracle,
};
use crate::sampling::{self, PartialAssignment};
use crate::set::ClientSet;
use crate::tol;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DlaVariant {
    /// Uniform opening cost `g` at every facility.
    Plain,
    /// Per-facility multiplicative weights `w_f*g`.
    Mult,
    /// Per-facility additive opening fees `g + p_f*[R!={}]`.
    Add,
}

/// Facilities at leaves, clients at nodes, submodular opening costs.
#[derive(Clone, Debug)]
pub struct DlaInstance<'a> {
    tree: &'a Hst,
    facility_leaf: Vec<usize>,
    client_node: Vec<usize>,
    oracle: &'a SubmodularOracle,
    oracle_scale: f64,
    mult_weights: Option<Vec<f64>>,
    add_weights: Option<Vec<f64>>,
    /// Per node: facilities at its leaf-descendants, ascending.
    admissible: Vec<Vec<usize>>,
}

fn admissible_sets(tree: &Hst, facility_leaf: &[usize]) -> Vec<Vec<usize>> {
    let size = tree.num_nodes();
    let mut adm: Vec<Vec<usize>> = vec![Vec::new(); size];
    for (f, &leaf) in facility_leaf.iter().enumerate() {
        adm[leaf].push(f);
    }
    // Nodes are ordered parent-first, so a reverse sweep sees all children
    // before their parent; child facility lists are disjoint.
    for v in (1..size).rev() {
        if !tree.is_leaf(v) {
            let mut acc = Vec::new();
            for &ch in tree.children_of(v) {
                acc.extend_from_slice(&adm[ch]);
            }
            acc.sort_unstable();
            adm[v] = acc;
        }
    }
    if size > 1 {
        let mut acc = Vec::new();
        for &ch in tree.children_of(0) {
            acc.extend_from_slice(&adm[ch]);
        }
        acc.sort_unstable();
        adm[0] = acc;
    }
    adm
}

impl<'a> DlaInstance<'a> {
    pub fn new(
        tree: &'a Hst,
        facility_leaf: Vec<usize>,
        client_node: Vec<usize>,
        oracle: &'a SubmodularOracle,
        oracle_scale: f64,
        mult_weights: Option<Vec<f64>>,
        add_weights: Option<Vec<f64>>,
    ) -> Result<Self> {
        if facility_leaf.is_empty() {
            return Err(Error::domain("DLA instance needs at least one facility"));
        }
        if oracle.ground_size() != client_node.len() {
            return Err(Error::domain("oracle ground set must match client count"));
        }
        if !(oracle_scale.is_finite() && oracle_scale > 0.0) {
            return Err(Error::domain("oracle scale must be finite and positive"));
        }
        for (f, &leaf) in facility_leaf.iter().enumerate() {
            if leaf >= tree.num_nodes() || !tree.is_leaf(leaf) {
                return Err(Error::domain(format!("facility {f} not at a leaf")));
            }
        }
        for (c, &v) in client_node.iter().enumerate() {
            if v >= tree.num_nodes() {
                return Err(Error::domain(format!("client {c} at unknown node {v}")));
            }
        }
        if let Some(w) = &mult_weights {
            if w.len() != facility_leaf.len() || w.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(Error::domain("bad multiplicative weights"));
            }
            if add_weights.is_some() {
                return Err(Error::UnsupportedVariant(
                    "multiplicative and additive weights cannot be combined".into(),
                ));
            }
        }
        if let Some(p) = &add_weights {
            if p.len() != facility_leaf.len() || p.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(Error::domain("bad additive weights"));
            }
        }
        let admissible = admissible_sets(tree, &facility_leaf);
        for (c, &v) in client_node.iter().enumerate() {
            if admissible[v].is_empty() {
                return Err(Error::domain(format!(
                    "client {c} has no admissible facility under node {v}"
                )));
            }
        }
        Ok(DlaInstance {
            tree,
            facility_leaf,
            client_node,
            oracle,
            oracle_scale,
            mult_weights,
            add_weights,
            admissible,
        })
    }

    pub fn n(&self) -> usize {
        self.client_node.len()
    }

    pub fn m(&self) -> usize {
        self.facility_leaf.len()
    }

    pub fn tree(&self) -> &Hst {
        self.tree
    }

    pub fn client_node(&self, c: usize) -> usize {
        self.client_node[c]
    }

    pub fn facility_leaf(&self, f: usize) -> usize {
        self.facility_leaf[f]
    }

    /// Facilities at leaf-descendants of `v`, ascending.
    pub fn admissible(&self, v: usize) -> &[usize] {
        &self.admissible[v]
    }

    /// The admissible facility set of client `c`.
    pub fn admissible_for_client(&self, c: usize) -> &[usize] {
        &self.admissible[self.client_node[c]]
    }

    pub fn variant(&self) -> DlaVariant {
        match (&self.mult_weights, &self.add_weights) {
            (None, None) => DlaVariant::Plain,
            (Some(_), _) => DlaVariant::Mult,
            (_, Some(_)) => DlaVariant::Add,
        }
    }

    /// Opening oracle of facility `f`.
    pub fn facility_oracle(&self, f: usize) -> ScaledOracle<'_> {
        let mult = self
            .mult_weights
            .as_ref()
            .map_or(self.oracle_scale, |w| self.oracle_scale * w[f]);
        let add = self.add_weights.as_ref().map_or(0.0, |p| p[f]);
        ScaledOracle {
            base: self.oracle,
            mult,
            add,
        }
    }

    /// The facility the rounding funnels a subtree's mass into: smallest id
    /// for the plain variant, minimum weight (ties to the smallest id) for
    /// the weighted ones.
    fn pick_facility(&self, adm: &[usize], variant: DlaVariant) -> usize {
        match variant {
            DlaVariant::Plain => adm[0],
            DlaVariant::Mult => {
                let w = self.mult_weights.as_ref().expect("checked by round_dla");
                *adm.iter()
                    .min_by(|&&a, &&b| w[a].partial_cmp(&w[b]).unwrap().then(a.cmp(&b)))
                    .unwrap()
            }
            DlaVariant::Add => {
                let p = self.add_weights.as_ref().expect("checked by round_dla");
                *adm.iter()
                    .min_by(|&&a, &&b| p[a].partial_cmp(&p[b]).unwrap().then(a.cmp(&b)))
                    .unwrap()
            }
        }
    }
}

/// Per-facility fractional service vectors `z[f][c]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DlaFractional {
    pub z: Vec<Vec<f64>>,
}

impl DlaFractional {
    pub fn new(z: Vec<Vec<f64>>) -> Self {
        DlaFractional { z }
    }

    /// Checks DLA feasibility: entries in [0,1], zero outside the client's
    /// admissible set, and unit mass over it.
    pub fn validate(&self, dla: &DlaInstance) -> Result<()> {
        if self.z.len() != dla.m() || self.z.iter().any(|v| v.len() != dla.n()) {
            return Err(Error::domain("fractional DLA vector has wrong shape"));
        }
        for c in 0..dla.n() {
            let adm = dla.admissible_for_client(c);
            let mut mass = 0.0;
            for f in 0..dla.m() {
                let e = self.z[f][c];
                if !(0.0..=1.0 + tol::EPS_NUM).contains(&e) {
                    return Err(Error::domain(format!("z[{f}][{c}] = {e} out of [0,1]")));
                }
                if adm.binary_search(&f).is_ok() {
                    mass += e;
                } else if e != 0.0 {
                    return Err(Error::domain(format!(
                        "client {c} carries mass at inadmissible facility {f}"
                    )));
                }
            }
            if (mass - 1.0).abs() > tol::EPS_LP_FEAS {
                return Err(Error::domain(format!(
                    "client {c} carries admissible mass {mass}, expected 1"
                )));
            }
        }
        Ok(())
    }
}

/// `sum_f hhat_f(z^f)` -- the fractional DLA objective (Lovasz extensions of the
/// per-facility opening oracles).
pub fn cost_dla(dla: &DlaInstance, z: &DlaFractional) -> Result<f64> {
    let mut total = 0.0;
    for (f, zf) in z.z.iter().enumerate() {
        total += lovasz(&dla.facility_oracle(f), zf)?;
    }
    Ok(total)
}

/// Opening cost of an integral (possibly partial) DLA assignment.
pub fn cost_dla_assignment(dla: &DlaInstance, pa: &PartialAssignment) -> f64 {
    pa.sets()
        .iter()
        .enumerate()
        .map(|(f, set)| dla.facility_oracle(f).eval(set))
        .sum()
}

/// Finds the smallest theta at which the level set `L_theta(z) = {c : z_c >= theta}` is
/// `alpha/32`-supported: `hhat(z) - hhat(min(z, theta)) >= (alpha/32)*h(L_theta(z))`.
///
/// Candidates are 0, the distinct entries of `z`, and a point just inside
/// each gap between consecutive entries (left end plus 2^-40 of the gap) --
/// the level set is constant on each half-open gap while the left side of
/// the inequality only grows toward its left end, so these candidates are
/// exhaustive. The comparison carries a 1e-9 relative tolerance.
pub fn supported_theta<F: SetFunction + ?Sized>(
    h: &F,
    z: &[f64],
    alpha: f64,
) -> Result<Option<f64>> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::domain(format!("alpha {alpha} outside (0,1]")));
    }
    let hz = lovasz(h, z)?;
    let mut breakpoints = z.to_vec();
    breakpoints.sort_by(|a, b| a.partial_cmp(b).unwrap());
    breakpoints.dedup();
    let mut candidates = Vec::with_capacity(2 * breakpoints.len() + 1);
    candidates.push(0.0);
    for (i, &b) in breakpoints.iter().enumerate() {
        candidates.push(b);
        if let Some(&next) = breakpoints.get(i + 1) {
            candidates.push(b + tol::THETA_DELTA * (next - b));
        }
    }
    candidates.sort_by(|a, b| a.partial_cmp(b).unwrap());
    candidates.dedup();
    for &theta in &candidates {
        let lhs = hz - lovasz_truncated(h, z, theta)?;
        let rhs = alpha / 32.0 * h.eval(&level_set(z, theta));
        let scale = 1.0f64.max(lhs.abs()).max(rhs.abs());
        if lhs >= rhs - tol::EPS_SUPPORT * scale {
            return Ok(Some(theta));
        }
    }
    Ok(None)
}

#[derive(Clone, Debug)]
pub struct DlaRounding {
    pub assignment: PartialAssignment,
    pub checks: Vec<CheckRecord>,
}

/// Rounds a fractional DLA solution to an integral assignment of cost at
/// most `(1 + 32*log2(D+1))` times the fractional cost.
///
/// Processing nodes bottom-up (within a level, ascending id), the rounding
/// (1) funnels the node's admissible mass into one facility `f_v`, (2) if
/// some level set of the merged vector is `alpha/32`-supported with
/// `alpha = 1/log2(D+1)`, commits that level set to `f_v` and zeroes its
/// entries; otherwise commits just the unit-mass clients. A final pruning
/// pass assigns every client to the smallest-id admissible facility that
/// committed to it. The fractional cost is verified non-increasing after
/// every mutation.
pub fn round_dla(
    dla: &DlaInstance,
    z0: &DlaFractional,
    variant: DlaVariant,
) -> Result<DlaRounding> {
    z0.validate(dla)?;
    if variant != dla.variant() {
        return Err(Error::domain(
            "requested rounding variant does not match the instance weights",
        ));
    }
    let (n, m) = (dla.n(), dla.m());
    let depth = dla.tree.depth();
    let mut checks = Vec::new();
    let base_cost = cost_dla(dla, z0)?;
    if n == 0 {
        return Ok(DlaRounding {
            assignment: PartialAssignment::new(m),
            checks,
        });
    }
    if depth == 0 {
        // Everything is colocated at the root leaf: serve all clients from
        // the cheapest facility. Subadditivity of the Lovasz extension makes
        // this at most the fractional cost.
        let fv = dla.pick_facility(dla.admissible(dla.tree.root()), variant);
        let assignment = PartialAssignment::single(m, fv, ClientSet::full(n));
        let cost = cost_dla_assignment(dla, &assignment);
        checks.push(audit::check_le("dla-direct-cost", cost, base_cost, 1e-9)?);
        return Ok(DlaRounding { assignment, checks });
    }

    let alpha = 1.0 / ((depth + 1) as f64).log2();
    let mut z: Vec<Vec<f64>> = z0.z.clone();
    let mut committed = PartialAssignment::new(m);
    let mut current = base_cost;

    let mut nodes_by_level: Vec<Vec<usize>> = vec![Vec::new(); depth + 1];
    for v in 0..dla.tree.num_nodes() {
        nodes_by_level[dla.tree.level_of(v)].push(v);
    }

    for level in (0..=depth).rev() {
        for &v in &nodes_by_level[level] {
            let adm = dla.admissible(v);
            if adm.is_empty() {
                continue;
            }
            #[cfg(debug_assertions)]
            for c in 0..n {
                // Clients anchored here must still carry full admissible
                // mass unless some admissible facility already took them.
                if dla.client_node[c] != v {
                    continue;
                }
                let mass: f64 = adm.iter().map(|&f| z[f][c]).sum();
                let done = adm.iter().any(|&f| committed.served(f).contains(c as u32));
                debug_assert!(
                    done || (mass - 1.0).abs() <= 1e-6,
                    "client {c} reached its node with mass {mass} and no commitment"
                );
            }
            let fv = dla.pick_facility(adm, variant);
            for c in 0..n {
                let mut mass = 0.0;
                for &f in adm {
                    mass += z[f][c];
                    if f != fv {
                        z[f][c] = 0.0;
                    }
                }
                if mass > 1.0 + tol::EPS_LP_FEAS {
                    return Err(Error::invariant(format!(
                        "client {c} accumulated mass {mass} > 1 at node {v}"
                    )));
                }
                // Snap near-unit mass to exactly 1 so that full-mass clients
                // always land inside any committed level set (theta <= 1).
                z[fv][c] = if mass >= 1.0 - tol::EPS_NUM { 1.0 } else { mass };
            }
            let after_merge = cost_dla_vec(dla, &z)?;
            checks.push(audit::check_le(
                &format!("dla-merge-v{v}"),
                after_merge,
                current,
                1e-9,
            )?);
            current = after_merge;

            let oracle_v = dla.facility_oracle(fv);
            let commit = match supported_theta(&oracle_v, &z[fv], alpha)? {
                Some(theta) => level_set(&z[fv], theta),
                None => level_set(&z[fv], 1.0 - tol::EPS_NUM),
            };
            if !commit.is_empty() {
                committed.insert_at(fv, &commit);
                for &c in &commit {
                    z[fv][c as usize] = 0.0;
                }
                let after_commit = cost_dla_vec(dla, &z)?;
                checks.push(audit::check_le(
                    &format!("dla-commit-v{v}"),
                    after_commit,
                    current,
                    1e-9,
                )?);
                current = after_commit;
            }
        }
    }

    // Prune: each client keeps the smallest admissible facility that
    // committed to it (commitments outside the admissible set are dropped).
    let mut assignment = PartialAssignment::new(m);
    for c in 0..n {
        let chosen = dla
            .admissible_for_client(c)
            .iter()
            .copied()
            .find(|&f| committed.served(f).contains(c as u32))
            .ok_or_else(|| {
                Error::invariant(format!("client {c} ended the rounding unassigned"))
            })?;
        assignment.insert_at(chosen, &ClientSet::singleton(c as u32));
    }
    let rounded_cost = cost_dla_assignment(dla, &assignment);
    let factor = 1.0 + 32.0 * ((depth + 1) as f64).log2();
    checks.push(audit::check_le(
        "dla-cost-bound",
        rounded_cost,
        factor * base_cost,
        1e-9,
    )?);
    Ok(DlaRounding { assignment, checks })
}

fn cost_dla_vec(dla: &DlaInstance, z: &[Vec<f64>]) -> Result<f64> {
    let mut total = 0.0;
    for (f, zf) in z.iter().enumerate() {
        total += lovasz(&dla.facility_oracle(f), zf)?;
    }
    Ok(total)
}

#[derive(Debug)]
pub struct DlaReduction<'a> {
    pub dla: DlaInstance<'a>,
    pub z: DlaFractional,
    /// Per-client anchor node `v(c)`.
    pub anchors: Vec<usize>,
    pub checks: Vec<CheckRecord>,
}

/// Reduces a feasible fractional solution on a tree instance (an [`Instance`]
/// whose metric is the leaf-to-leaf distance of `hst`, clients first) to a
/// DLA instance plus fractional vector.
///
/// Each client anchors at the lowest ancestor of its leaf whose descendant
/// facilities hold at least half of the client's service mass `y_c`; the
/// mass inside is rescaled to 1. Since rescaling at most doubles each entry,
/// the fractional DLA cost is verified to stay within twice the opening cost
/// of `x`.
pub fn reduce_to_dla<'a>(
    tree_inst: &'a Instance,
    hst: &'a Hst,
    x: &FractionalSolution,
) -> Result<DlaReduction<'a>> {
    let (n, m) = (tree_inst.n(), tree_inst.m());
    if x.n() != n || x.m() != m {
        return Err(Error::domain("solution shape does not match tree instance"));
    }
    if hst.num_points() != n + m {
        return Err(Error::domain("tree does not embed the instance's points"));
    }
    x.validate_feasible(&ClientSet::full(n))?;
    let facility_leaf: Vec<usize> = (0..m).map(|f| hst.leaf_of_point(n + f)).collect();
    let admissible = admissible_sets(hst, &facility_leaf);
    let y = x.service_mass();

    let mut anchors = Vec::with_capacity(n);
    let mut z = vec![vec![0.0; n]; m];
    for c in 0..n {
        let mut v = hst.leaf_of_point(c);
        let mut mass: f64 = admissible[v].iter().map(|&f| y[f][c]).sum();
        while mass < tol::ANCHOR_MASS - tol::EPS_NUM {
            v = hst
                .parent_of(v)
                .ok_or_else(|| Error::invariant(format!("client {c} mass never reaches 1/2")))?;
            mass = admissible[v].iter().map(|&f| y[f][c]).sum();
        }
        anchors.push(v);
        for &f in &admissible[v] {
            let e = y[f][c] / mass;
            if e > 1.0 + tol::EPS_NUM {
                return Err(Error::invariant(format!(
                    "normalized mass {e} > 1 for client {c} at facility {f}"
                )));
            }
            z[f][c] = e.min(1.0);
        }
    }

    let dla = DlaInstance::new(
        hst,
        facility_leaf,
        anchors.clone(),
        tree_inst.oracle(),
        tree_inst.oracle_scale(),
        tree_inst.mult_weights().map(<[f64]>::to_vec),
        tree_inst.add_weights().map(<[f64]>::to_vec),
    )?;
    let z = DlaFractional::new(z);
    z.validate(&dla)?;
    let frac = cost_dla(&dla, &z)?;
    let open_x = frac_cost(tree_inst, x).open;
    let checks = vec![audit::check_le(
        "dla-reduction-open",
        frac,
        2.0 * open_x,
        1e-9,
    )?];
    Ok(DlaReduction {
        dla,
        z,
        anchors,
        checks,
    })
}

#[derive(Clone, Debug)]
pub struct LiftOutcome {
    pub assignment: PartialAssignment,
    pub checks: Vec<CheckRecord>,
}

/// Reinterprets a rounded DLA assignment as an SFL assignment on the tree
/// instance (the mapping is the identity) and verifies the connection
/// bounds: per client, the tree distance to the assigned facility is at most
/// `2(2Delta-1)` for the anchor's child-edge weight `Delta` (zero if the anchor is a
/// leaf) and at most three times the client's fractional connection cost in
/// `x`; in aggregate, `cost(S) <= 3*conn(x) + 2(1+32*log2(D+1))*open(x)`.
pub fn lift_to_sfl(
    tree_inst: &Instance,
    hst: &Hst,
    anchors: &[usize],
    rounded: &PartialAssignment,
    x: &FractionalSolution,
) -> Result<LiftOutcome> {
    let n = tree_inst.n();
    let plan = rounded.to_assignment(n)?;
    let y = x.service_mass();
    let depth = hst.depth();
    let mut checks = Vec::new();
    for c in 0..n {
        let f = plan[c] as usize;
        let d_cf = tree_inst.dist_cf(c, f);
        let v = anchors[c];
        if hst.is_leaf(v) {
            if d_cf != 0.0 {
                return Err(Error::invariant(format!(
                    "client {c} anchored at a leaf but connected over distance {d_cf}"
                )));
            }
        } else {
            let delta = (1u64 << (depth - hst.level_of(v) - 1)) as f64;
            checks.push(audit::check_le(
                &format!("lift-radius-c{c}"),
                d_cf,
                2.0 * (2.0 * delta - 1.0),
                1e-9,
            )?);
        }
        let frac_conn: f64 = (0..tree_inst.m())
            .map(|g| y[g][c] * tree_inst.dist_cf(c, g))
            .sum();
        checks.push(audit::check_le(
            &format!("lift-conn-c{c}"),
            d_cf,
            3.0 * frac_conn,
            1e-9,
        )?);
    }
    let s_cost = sampling::cost(tree_inst, rounded)?;
    let x_cost = frac_cost(tree_inst, x);
    checks.push(audit::check_le(
        "lift-conn-total",
        s_cost.conn,
        3.0 * x_cost.conn,
        1e-9,
    )?);
    let factor = 2.0 * (1.0 + 32.0 * ((depth + 1) as f64).log2());
    checks.push(audit::check_le(
        "lift-total",
        s_cost.total,
        3.0 * x_cost.conn + factor * x_cost.open,
        1e-9,
    )?);
    Ok(LiftOutcome {
        assignment: rounded.clone(),
        checks,
    })
}
