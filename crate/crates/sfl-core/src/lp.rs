//! Configuration LP over (facility, client-subset) columns.
//!
//! The LP has one variable per column `(f, R)` with cost
//! `open_f(R) + sum_{c in R} d(c,f)*conn_mult(c)`, a coverage row per client
//! (`sum_{(f,R): c in R} x = 1`) and a distribution row per facility
//! (`sum_R x_R^f = 1`, satisfiable thanks to the zero-cost empty column).
//! Solved by a dense two-phase revised simplex with Bland's rule, either
//! over all `m*2^n` columns or with column generation whose pricing
//! enumerates all client subsets per facility. Optimality is certified by a
//! full pricing sweep plus a duality-gap check, so both modes carry the same
//! size caps.

use std::collections::{BTreeMap, HashMap};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::instance::{CostBreakdown, Instance};
use crate::set::ClientSet;
use crate::tol;

/// A facility together with the client set it serves.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Column {
    pub facility: usize,
    pub set: ClientSet,
}

/// A nonnegative weighting of columns, kept sparse (nonzero weights only)
/// and in canonical order: facility ascending, then set bitmask ascending.
/// Duplicate `(facility, set)` entries merge by summing on construction.
#[derive(Clone, Debug, PartialEq)]
pub struct FractionalSolution {
    n: usize,
    m: usize,
    columns: Vec<Column>,
    weights: Vec<f64>,
}

#[derive(Serialize)]
struct ColumnWire<'a> {
    f: usize,
    #[serde(rename = "R")]
    set: &'a ClientSet,
    x: f64,
}

impl Serialize for FractionalSolution {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        let wire: Vec<ColumnWire> = self
            .columns
            .iter()
            .zip(&self.weights)
            .map(|(c, &x)| ColumnWire {
                f: c.facility,
                set: &c.set,
                x,
            })
            .collect();
        wire.serialize(ser)
    }
}

impl FractionalSolution {
    pub fn from_entries(
        n: usize,
        m: usize,
        entries: Vec<(usize, ClientSet, f64)>,
    ) -> Result<Self> {
        let mut map: BTreeMap<(usize, u64), (ClientSet, f64)> = BTreeMap::new();
        for (f, set, w) in entries {
            if f >= m {
                return Err(Error::domain(format!("column facility {f} out of range")));
            }
            if set.iter().any(|&c| c as usize >= n) {
                return Err(Error::domain("column set references client out of range"));
            }
            if !w.is_finite() || w < 0.0 {
                return Err(Error::domain("column weight must be finite and >= 0"));
            }
            map.entry((f, set.to_mask()))
                .or_insert_with(|| (set, 0.0))
                .1 += w;
        }
        let mut columns = Vec::with_capacity(map.len());
        let mut weights = Vec::with_capacity(map.len());
        for ((f, _), (set, w)) in map {
            if w != 0.0 {
                columns.push(Column { facility: f, set });
                weights.push(w);
            }
        }
        Ok(FractionalSolution {
            n,
            m,
            columns,
            weights,
        })
    }

    /// The integral solution matching `assignment` (plus the empty column,
    /// at weight 1, for every unused facility).
    pub fn from_assignment(inst: &Instance, assignment: &[u32]) -> Result<Self> {
        inst.cost(assignment)?; // validates shape
        let mut served: Vec<ClientSet> = vec![ClientSet::new(); inst.m()];
        for (c, &f) in assignment.iter().enumerate() {
            served[f as usize].insert(c as u32);
        }
        let entries = served
            .into_iter()
            .enumerate()
            .map(|(f, set)| (f, set, 1.0))
            .collect();
        FractionalSolution::from_entries(inst.n(), inst.m(), entries)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Column, f64)> {
        self.columns.iter().zip(self.weights.iter().copied())
    }

    /// Total weight of columns containing client `c`.
    pub fn client_mass(&self, c: u32) -> f64 {
        self.iter()
            .filter(|(col, _)| col.set.contains(c))
            .map(|(_, w)| w)
            .sum()
    }

    /// Total weight of columns of facility `f` (including the empty one).
    pub fn facility_mass(&self, f: usize) -> f64 {
        self.iter()
            .filter(|(col, _)| col.facility == f)
            .map(|(_, w)| w)
            .sum()
    }

    /// Per-facility fractional service mass `y[f][c] = sum_{R: c in R} x_R^f`.
    pub fn service_mass(&self) -> Vec<Vec<f64>> {
        let mut y = vec![vec![0.0; self.n]; self.m];
        for (col, w) in self.iter() {
            for &c in &col.set {
                y[col.facility][c as usize] += w;
            }
        }
        y
    }

    /// Checks both LP constraint families: unit mass on every client in
    /// `active` and unit mass on every facility, within [`tol::EPS_LP_FEAS`].
    pub fn validate_feasible(&self, active: &ClientSet) -> Result<()> {
        for &c in active {
            let mass = self.client_mass(c);
            if (mass - 1.0).abs() > tol::EPS_LP_FEAS {
                return Err(Error::invariant(format!(
                    "client {c} carries fractional mass {mass}, expected 1"
                )));
            }
        }
        for f in 0..self.m {
            let mass = self.facility_mass(f);
            if (mass - 1.0).abs() > tol::EPS_LP_FEAS {
                return Err(Error::invariant(format!(
                    "facility {f} carries fractional mass {mass}, expected 1"
                )));
            }
        }
        Ok(())
    }

    /// Renumbers clients to their positions in the sorted id list `ids`;
    /// every client appearing in a column must be present in `ids`.
    pub fn reindex_clients(&self, ids: &[u32]) -> Result<FractionalSolution> {
        let entries = self
            .iter()
            .map(|(col, w)| {
                let set = col.set.reindex_into(ids).ok_or_else(|| {
                    Error::domain("column references a client missing from the reindex list")
                })?;
                Ok((col.facility, set, w))
            })
            .collect::<Result<Vec<_>>>()?;
        FractionalSolution::from_entries(ids.len(), self.m, entries)
    }

    /// Number of nonzero columns serving at least one client.
    pub fn support_size(&self) -> usize {
        self.iter()
            .filter(|(col, w)| !col.set.is_empty() && *w > tol::EPS_X_ZERO)
            .count()
    }
}

/// Drops clients outside `keep` from every column, merging columns that
/// become identical. Facility masses are unchanged; kept clients keep their
/// ids and their unit mass.
pub fn restrict(sol: &FractionalSolution, keep: &ClientSet) -> FractionalSolution {
    let entries = sol
        .iter()
        .map(|(col, w)| (col.facility, col.set.intersection(keep), w))
        .collect();
    FractionalSolution::from_entries(sol.n, sol.m, entries)
        .expect("restriction of a valid solution is valid")
}

/// Connection/opening/total cost of a fractional solution on `inst`.
pub fn frac_cost(inst: &Instance, sol: &FractionalSolution) -> CostBreakdown {
    let mut conn = 0.0;
    let mut open = 0.0;
    for (col, w) in sol.iter() {
        let f = col.facility;
        let d: f64 = col
            .set
            .iter()
            .map(|&c| inst.dist_cf(c as usize, f) * inst.conn_mult(c as usize))
            .sum();
        conn += w * d;
        open += w * inst.open_cost(f, &col.set);
    }
    CostBreakdown {
        conn,
        open,
        total: conn + open,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpMode {
    /// Materialize every column up front.
    Enumerate,
    /// Start from empty + nearest-singleton columns and price the rest.
    Colgen,
}

/// A certified optimum of the configuration LP.
#[derive(Clone, Debug)]
pub struct LpOutcome {
    pub solution: FractionalSolution,
    pub objective: f64,
    /// Client duals (coverage rows).
    pub alpha: Vec<f64>,
    /// Facility duals (distribution rows).
    pub beta: Vec<f64>,
    pub pivots: usize,
}

pub fn solve_conf_lp(inst: &Instance, mode: LpMode) -> Result<LpOutcome> {
    let n = inst.n();
    let m = inst.m();
    if n > tol::MAX_LP_CLIENTS {
        return Err(Error::cap(format!(
            "LP handles at most {} clients (subset enumeration), instance has {n}",
            tol::MAX_LP_CLIENTS
        )));
    }
    let ncols = (m as u64) << n;
    if ncols > tol::MAX_LP_COLUMNS as u64 {
        return Err(Error::cap(format!(
            "LP column space m*2^n = {ncols} exceeds cap {}",
            tol::MAX_LP_COLUMNS
        )));
    }
    let g_table = crate::oracle::TableOracle::tabulate(inst.oracle())?.into_values();
    Simplex::new(inst, g_table).solve(mode)
}

/// Basic variable: a pool column or the artificial of a client row.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum BasisVar {
    Real(usize),
    Artificial(usize),
}

impl BasisVar {
    /// Total order for Bland's rule: reals by pool index, artificials after.
    fn key(self) -> u64 {
        match self {
            BasisVar::Real(i) => i as u64,
            BasisVar::Artificial(r) => (1 << 40) + r as u64,
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct PoolCol {
    facility: u32,
    mask: u64,
    cost: f64,
}

/// Interval between basis refactorizations (pivot count).
const REFACTOR_EVERY: usize = 32;
/// Pivot elements smaller than this are not eligible in the ratio test.
const EPS_PIVOT: f64 = tol::EPS_RATIO;

struct Simplex<'a> {
    inst: &'a Instance,
    n: usize,
    m: usize,
    k: usize,
    /// Oracle value per client bitmask (shared by all facilities).
    g_table: Vec<f64>,
    /// Connection cost `d(c,f)*conn_mult(c)` per facility per client.
    conn: Vec<Vec<f64>>,
    pool: Vec<PoolCol>,
    pool_index: HashMap<(u32, u64), usize>,
    is_basic: Vec<bool>,
    basis: Vec<BasisVar>,
    binv: Vec<f64>,
    xb: Vec<f64>,
    pivots: usize,
    pivots_since_refactor: usize,
}

impl<'a> Simplex<'a> {
    fn new(inst: &'a Instance, g_table: Vec<f64>) -> Self {
        let n = inst.n();
        let m = inst.m();
        let conn = (0..m)
            .map(|f| {
                (0..n)
                    .map(|c| inst.dist_cf(c, f) * inst.conn_mult(c))
                    .collect()
            })
            .collect();
        Simplex {
            inst,
            n,
            m,
            k: n + m,
            g_table,
            conn,
            pool: Vec::new(),
            pool_index: HashMap::new(),
            is_basic: Vec::new(),
            basis: Vec::new(),
            binv: Vec::new(),
            xb: Vec::new(),
            pivots: 0,
            pivots_since_refactor: 0,
        }
    }

    fn column_cost(&self, f: usize, mask: u64) -> f64 {
        if mask == 0 {
            return 0.0;
        }
        let scale = self.inst.oracle_scale() * self.inst.mult_weight(f);
        let mut cost = scale * self.g_table[mask as usize] + self.inst.add_weight(f);
        let mut rest = mask;
        while rest != 0 {
            let c = rest.trailing_zeros() as usize;
            cost += self.conn[f][c];
            rest &= rest - 1;
        }
        cost
    }

    fn push_column(&mut self, f: usize, mask: u64) -> usize {
        debug_assert!(!self.pool_index.contains_key(&(f as u32, mask)));
        let idx = self.pool.len();
        self.pool.push(PoolCol {
            facility: f as u32,
            mask,
            cost: self.column_cost(f, mask),
        });
        self.pool_index.insert((f as u32, mask), idx);
        self.is_basic.push(false);
        idx
    }

    /// Dense constraint column of a variable.
    fn column_vec(&self, var: BasisVar) -> Vec<f64> {
        let mut a = vec![0.0; self.k];
        match var {
            BasisVar::Real(i) => {
                let col = self.pool[i];
                let mut rest = col.mask;
                while rest != 0 {
                    a[rest.trailing_zeros() as usize] = 1.0;
                    rest &= rest - 1;
                }
                a[self.n + col.facility as usize] = 1.0;
            }
            BasisVar::Artificial(r) => a[r] = 1.0,
        }
        a
    }

    fn refactorize(&mut self) -> Result<()> {
        let k = self.k;
        // Gauss-Jordan inversion of the basis matrix with partial pivoting.
        let mut aug = vec![0.0; k * 2 * k];
        for (r, &var) in self.basis.iter().enumerate() {
            let col = self.column_vec(var);
            for i in 0..k {
                aug[i * 2 * k + r] = col[i];
            }
        }
        for i in 0..k {
            aug[i * 2 * k + k + i] = 1.0;
        }
        for col in 0..k {
            let piv = (col..k)
                .max_by(|&a, &b| {
                    aug[a * 2 * k + col]
                        .abs()
                        .partial_cmp(&aug[b * 2 * k + col].abs())
                        .unwrap()
                })
                .unwrap();
            if aug[piv * 2 * k + col].abs() < 1e-12 {
                return Err(Error::invariant("singular LP basis during refactorization"));
            }
            if piv != col {
                for j in 0..2 * k {
                    aug.swap(col * 2 * k + j, piv * 2 * k + j);
                }
            }
            let p = aug[col * 2 * k + col];
            for j in 0..2 * k {
                aug[col * 2 * k + j] /= p;
            }
            for i in 0..k {
                if i != col {
                    let factor = aug[i * 2 * k + col];
                    if factor != 0.0 {
                        for j in 0..2 * k {
                            aug[i * 2 * k + j] -= factor * aug[col * 2 * k + j];
                        }
                    }
                }
            }
        }
        self.binv = vec![0.0; k * k];
        for i in 0..k {
            for j in 0..k {
                self.binv[i * k + j] = aug[i * 2 * k + k + j];
            }
        }
        // b is the all-ones vector, so x_B = row sums of B^-1.
        self.xb = (0..k)
            .map(|i| self.binv[i * k..(i + 1) * k].iter().sum())
            .collect();
        self.pivots_since_refactor = 0;
        Ok(())
    }

    fn basic_cost(&self, var: BasisVar, phase1: bool) -> f64 {
        match (var, phase1) {
            (BasisVar::Artificial(_), true) => 1.0,
            (BasisVar::Artificial(_), false) => 0.0,
            (BasisVar::Real(_), true) => 0.0,
            (BasisVar::Real(i), false) => self.pool[i].cost,
        }
    }

    fn duals(&self, phase1: bool) -> Vec<f64> {
        let k = self.k;
        let mut y = vec![0.0; k];
        for (r, &var) in self.basis.iter().enumerate() {
            let cb = self.basic_cost(var, phase1);
            if cb != 0.0 {
                for j in 0..k {
                    y[j] += cb * self.binv[r * k + j];
                }
            }
        }
        y
    }

    /// Reduced cost of pool column `i` against duals `y`.
    fn reduced_cost(&self, i: usize, y: &[f64], phase1: bool) -> f64 {
        let col = self.pool[i];
        let mut dot = y[self.n + col.facility as usize];
        let mut rest = col.mask;
        while rest != 0 {
            dot += y[rest.trailing_zeros() as usize];
            rest &= rest - 1;
        }
        let cost = if phase1 { 0.0 } else { col.cost };
        cost - dot
    }

    /// One simplex pivot: returns false at (restricted) optimality.
    fn pivot_once(&mut self, phase1: bool) -> Result<bool> {
        let y = self.duals(phase1);
        // Bland: entering = lowest-index nonbasic column with negative
        // reduced cost; artificials never re-enter.
        let mut entering = None;
        for i in 0..self.pool.len() {
            if !self.is_basic[i] && self.reduced_cost(i, &y, phase1) < -tol::EPS_REDUCED_COST {
                entering = Some(i);
                break;
            }
        }
        let Some(j) = entering else {
            return Ok(false);
        };
        let a = self.column_vec(BasisVar::Real(j));
        let k = self.k;
        let d: Vec<f64> = (0..k)
            .map(|i| {
                self.binv[i * k..(i + 1) * k]
                    .iter()
                    .zip(&a)
                    .map(|(b, aa)| b * aa)
                    .sum()
            })
            .collect();
        let mut leave: Option<(usize, f64)> = None;
        for r in 0..k {
            if d[r] > EPS_PIVOT {
                let ratio = self.xb[r] / d[r];
                let better = match leave {
                    None => true,
                    Some((lr, lratio)) => {
                        ratio < lratio
                            || (ratio == lratio && self.basis[r].key() < self.basis[lr].key())
                    }
                };
                if better {
                    leave = Some((r, ratio));
                }
            }
        }
        let Some((r, _)) = leave else {
            return Err(Error::invariant(
                "unbounded configuration LP (columns are box-bounded; cannot happen)",
            ));
        };
        self.apply_pivot(j, r, &d)?;
        Ok(true)
    }

    fn apply_pivot(&mut self, entering: usize, r: usize, d: &[f64]) -> Result<()> {
        let k = self.k;
        if let BasisVar::Real(old) = self.basis[r] {
            self.is_basic[old] = false;
        }
        self.basis[r] = BasisVar::Real(entering);
        self.is_basic[entering] = true;
        let t = self.xb[r] / d[r];
        for i in 0..k {
            if i != r {
                self.xb[i] -= t * d[i];
            }
        }
        self.xb[r] = t;
        let pivot = d[r];
        for j in 0..k {
            self.binv[r * k + j] /= pivot;
        }
        for i in 0..k {
            if i != r && d[i] != 0.0 {
                let factor = d[i];
                for j in 0..k {
                    self.binv[i * k + j] -= factor * self.binv[r * k + j];
                }
            }
        }
        self.pivots += 1;
        self.pivots_since_refactor += 1;
        if self.pivots_since_refactor >= REFACTOR_EVERY {
            self.refactorize()?;
        }
        Ok(())
    }

    fn phase1_objective(&self) -> f64 {
        self.basis
            .iter()
            .zip(&self.xb)
            .filter(|(v, _)| matches!(v, BasisVar::Artificial(_)))
            .map(|(_, &x)| x)
            .sum()
    }

    /// Enumeration pricing: per facility, the subset minimizing the reduced
    /// cost (masks scanned ascending; strict improvement keeps the lowest
    /// mask). Adds each facility's minimizer when it prices below
    /// -[`tol::EPS_REDUCED_COST`]. Returns (columns added, global min rc).
    fn price(&mut self, y: &[f64], phase1: bool, add: bool) -> Result<(usize, f64)> {
        let n = self.n;
        let size = 1usize << n;
        let mut added = 0;
        let mut global_min = f64::INFINITY;
        let mut acc = vec![0.0; size];
        for f in 0..self.m {
            // acc[mask] = sum_{c in mask} (conn_cost(c) - alpha_c), built incrementally.
            let w: Vec<f64> = (0..n)
                .map(|c| if phase1 { -y[c] } else { self.conn[f][c] - y[c] })
                .collect();
            acc[0] = 0.0;
            for mask in 1..size {
                let low = mask.trailing_zeros() as usize;
                acc[mask] = acc[mask & (mask - 1)] + w[low];
            }
            let scale = self.inst.oracle_scale() * self.inst.mult_weight(f);
            let addw = self.inst.add_weight(f);
            let beta = y[self.n + f];
            let mut best = (0.0 - beta, 0u64); // empty column
            for mask in 1..size {
                let open = if phase1 {
                    0.0
                } else {
                    scale * self.g_table[mask] + addw
                };
                let val = open + acc[mask] - beta;
                if val < best.0 {
                    best = (val, mask as u64);
                }
            }
            global_min = global_min.min(best.0);
            if add
                && best.0 < -tol::EPS_REDUCED_COST
                && !self.pool_index.contains_key(&(f as u32, best.1))
            {
                self.push_column(f, best.1);
                added += 1;
            }
        }
        Ok((added, global_min))
    }

    /// Runs the simplex to optimality over the current pool, interleaving
    /// pricing rounds in colgen mode.
    fn optimize(&mut self, phase1: bool, colgen: bool) -> Result<()> {
        loop {
            while self.pivot_once(phase1)? {
                if phase1 && self.phase1_objective() <= 1e-12 {
                    return Ok(()); // feasible; no need to polish phase 1
                }
            }
            if !colgen {
                return Ok(());
            }
            let y = self.duals(phase1);
            let (added, _) = self.price(&y, phase1, true)?;
            if added == 0 {
                return Ok(());
            }
        }
    }

    /// Pivots remaining basic artificials out (degenerate pivots) so phase 2
    /// can ignore them entirely.
    fn drive_out_artificials(&mut self) -> Result<()> {
        let k = self.k;
        for r in 0..k {
            if !matches!(self.basis[r], BasisVar::Artificial(_)) {
                continue;
            }
            let mut replaced = false;
            for j in 0..self.pool.len() {
                if self.is_basic[j] {
                    continue;
                }
                let a = self.column_vec(BasisVar::Real(j));
                let d: Vec<f64> = (0..k)
                    .map(|i| {
                        self.binv[i * k..(i + 1) * k]
                            .iter()
                            .zip(&a)
                            .map(|(b, aa)| b * aa)
                            .sum()
                    })
                    .collect();
                if d[r].abs() > 1e-7 {
                    self.apply_pivot(j, r, &d)?;
                    replaced = true;
                    break;
                }
            }
            if !replaced {
                return Err(Error::invariant(
                    "cannot eliminate artificial variable from the LP basis",
                ));
            }
        }
        Ok(())
    }

    fn solve(mut self, mode: LpMode) -> Result<LpOutcome> {
        let (n, m) = (self.n, self.m);
        let colgen = mode == LpMode::Colgen;
        match mode {
            LpMode::Enumerate => {
                for f in 0..m {
                    for mask in 0..(1u64 << n) {
                        self.push_column(f, mask);
                    }
                }
            }
            LpMode::Colgen => {
                for f in 0..m {
                    self.push_column(f, 0);
                }
                for c in 0..n {
                    let mut best = (self.inst.dist_cf(c, 0), 0usize);
                    for f in 1..m {
                        let d = self.inst.dist_cf(c, f);
                        if d < best.0 {
                            best = (d, f);
                        }
                    }
                    let mask = 1u64 << c;
                    if !self.pool_index.contains_key(&(best.1 as u32, mask)) {
                        self.push_column(best.1, mask);
                    }
                }
            }
        }
        // Initial basis: each facility's empty column plus one artificial
        // per client row; the basis matrix is a signed permutation of I.
        self.basis = (0..n)
            .map(BasisVar::Artificial)
            .chain((0..m).map(|f| BasisVar::Real(self.pool_index[&(f as u32, 0)])))
            .collect();
        for f in 0..m {
            self.is_basic[self.pool_index[&(f as u32, 0)]] = true;
        }
        self.refactorize()?;

        self.optimize(true, colgen)?;
        let infeas = self.phase1_objective();
        if infeas > tol::EPS_LP_FEAS {
            return Err(Error::invariant(format!(
                "configuration LP master infeasible (phase-1 objective {infeas})"
            )));
        }
        self.drive_out_artificials()?;
        self.optimize(false, colgen)?;

        // Certification: exact pricing sweep over the full column space.
        let y = self.duals(false);
        let (_, min_rc) = self.price(&y, false, false)?;
        if min_rc < -tol::EPS_REDUCED_COST {
            return Err(Error::invariant(format!(
                "LP terminated with a column at reduced cost {min_rc}"
            )));
        }
        let alpha = y[..n].to_vec();
        let beta = y[n..].to_vec();

        let mut objective = 0.0;
        let mut entries = Vec::new();
        let mut residual = vec![-1.0; self.k];
        for (r, &var) in self.basis.iter().enumerate() {
            let x = self.xb[r];
            if x < -tol::EPS_LP_FEAS {
                return Err(Error::invariant(format!(
                    "negative basic value {x} in LP solution"
                )));
            }
            let BasisVar::Real(i) = var else {
                if x.abs() > tol::EPS_LP_FEAS {
                    return Err(Error::invariant("artificial variable stuck in LP basis"));
                }
                continue;
            };
            let col = self.pool[i];
            let x = x.max(0.0);
            objective += col.cost * x;
            let mut rest = col.mask;
            while rest != 0 {
                residual[rest.trailing_zeros() as usize] += x;
                rest &= rest - 1;
            }
            residual[self.n + col.facility as usize] += x;
            if x != 0.0 {
                entries.push((
                    col.facility as usize,
                    ClientSet::from_mask(col.mask, n),
                    x,
                ));
            }
        }
        if let Some(bad) = residual.iter().find(|r| r.abs() > tol::EPS_LP_FEAS) {
            return Err(Error::invariant(format!(
                "LP solution violates a constraint by {bad}"
            )));
        }
        let dual_obj: f64 = alpha.iter().chain(beta.iter()).sum();
        if (objective - dual_obj).abs() > tol::EPS_LP_GAP * (1.0 + objective.abs()) {
            return Err(Error::invariant(format!(
                "LP duality gap too large: primal {objective}, dual {dual_obj}"
            )));
        }
        let solution = FractionalSolution::from_entries(n, m, entries)?;
        Ok(LpOutcome {
            solution,
            objective,
            alpha,
            beta,
            pivots: self.pivots,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{gen_hypercube, gen_random, RandomOracleFamily};
    use crate::metric::Metric;
    use crate::oracle::SubmodularOracle;

    fn tiny(n: usize, m: usize, rows: Vec<Vec<f64>>, cost: f64) -> Instance {
        let metric = Metric::new(rows).unwrap();
        let oracle = SubmodularOracle::uniform(cost, n).unwrap();
        Instance::new(n, m, metric, oracle).unwrap()
    }

    #[test]
    fn single_client_single_facility() {
        let inst = tiny(1, 1, vec![vec![0.0, 2.0], vec![2.0, 0.0]], 5.0);
        for mode in [LpMode::Enumerate, LpMode::Colgen] {
            let out = solve_conf_lp(&inst, mode).unwrap();
            assert!((out.objective - 7.0).abs() < 1e-9);
            let cols: Vec<_> = out.solution.iter().collect();
            assert_eq!(cols.len(), 1);
            assert_eq!(cols[0].0.set, ClientSet::singleton(0));
            assert!((cols[0].1 - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn colgen_escapes_an_infeasible_initial_pool() {
        // One facility, two clients: the initial empty+singleton pool cannot
        // satisfy all three rows at once; pricing must add {0,1}.
        let inst = tiny(
            2,
            1,
            vec![
                vec![0.0, 4.0, 1.0],
                vec![4.0, 0.0, 3.0],
                vec![1.0, 3.0, 0.0],
            ],
            2.0,
        );
        let out = solve_conf_lp(&inst, LpMode::Colgen).unwrap();
        assert!((out.objective - (2.0 + 1.0 + 3.0)).abs() < 1e-9);
        out.solution.validate_feasible(&ClientSet::full(2)).unwrap();
    }

    #[test]
    fn modes_agree_on_random_instances() {
        for seed in 0..8 {
            for fam in [
                RandomOracleFamily::Uniform,
                RandomOracleFamily::Coverage,
                RandomOracleFamily::IndependentActivation,
            ] {
                let inst = gen_random(4, 3, seed, fam).unwrap();
                let a = solve_conf_lp(&inst, LpMode::Enumerate).unwrap();
                let b = solve_conf_lp(&inst, LpMode::Colgen).unwrap();
                assert!(
                    (a.objective - b.objective).abs() <= 1e-6 * (1.0 + a.objective.abs()),
                    "modes disagree on seed {seed}: {} vs {}",
                    a.objective,
                    b.objective
                );
                a.solution.validate_feasible(&ClientSet::full(4)).unwrap();
                b.solution.validate_feasible(&ClientSet::full(4)).unwrap();
                assert!(a.solution.support_size() <= 7);
                assert!(b.solution.support_size() <= 7);
            }
        }
    }

    #[test]
    fn objective_bounds_any_assignment() {
        let inst = gen_random(5, 3, 11, RandomOracleFamily::Coverage).unwrap();
        let out = solve_conf_lp(&inst, LpMode::Colgen).unwrap();
        let everyone_at_zero = inst.cost(&vec![0u32; 5]).unwrap();
        assert!(out.objective <= everyone_at_zero.total + 1e-9);
        let integral = FractionalSolution::from_assignment(&inst, &vec![0u32; 5]).unwrap();
        let fc = frac_cost(&inst, &integral);
        assert!((fc.total - everyone_at_zero.total).abs() < 1e-9);
        assert!((fc.conn - everyone_at_zero.conn).abs() < 1e-9);
    }

    #[test]
    fn hypercube_dim2_objective_is_small() {
        let inst = gen_hypercube(2).unwrap();
        let out = solve_conf_lp(&inst, LpMode::Colgen).unwrap();
        // The own-vertex integral solution costs 2.5; the LP can only be
        // cheaper (and must stay below the 2^dim feasibility bound).
        assert!(out.objective <= 2.5 + 1e-9);
        assert!(out.objective <= 4.0);
        assert!(out.objective > 0.0);
    }

    #[test]
    fn restrict_merges_columns() {
        let a = ClientSet::from_vec(vec![0, 1]);
        let sol = FractionalSolution::from_entries(
            2,
            1,
            vec![
                (0, a, 0.5),
                (0, ClientSet::singleton(0), 0.5),
            ],
        )
        .unwrap();
        let r = restrict(&sol, &ClientSet::singleton(0));
        let cols: Vec<_> = r.iter().collect();
        assert_eq!(cols.len(), 1);
        assert_eq!(cols[0].0.set, ClientSet::singleton(0));
        assert!((cols[0].1 - 1.0).abs() < 1e-12);

        let empty = restrict(&sol, &ClientSet::new());
        assert_eq!(empty.len(), 1);
        assert!(empty.iter().all(|(c, w)| c.set.is_empty() && (w - 1.0).abs() < 1e-12));

        let identity = restrict(&sol, &ClientSet::from_vec(vec![0, 1]));
        assert_eq!(identity, sol);
    }

    #[test]
    fn restriction_never_increases_open_cost() {
        for seed in 0..10 {
            let inst = gen_random(5, 3, seed, RandomOracleFamily::Coverage).unwrap();
            let out = solve_conf_lp(&inst, LpMode::Colgen).unwrap();
            let full = frac_cost(&inst, &out.solution);
            for keep_mask in 0u64..(1 << 5) {
                let keep = ClientSet::from_mask(keep_mask, 5);
                let r = restrict(&out.solution, &keep);
                let rc = frac_cost(&inst, &r);
                assert!(rc.open <= full.open + 1e-9);
            }
        }
    }

    #[test]
    fn solver_is_deterministic() {
        let inst = gen_random(6, 4, 3, RandomOracleFamily::IndependentActivation).unwrap();
        let a = solve_conf_lp(&inst, LpMode::Colgen).unwrap();
        let b = solve_conf_lp(&inst, LpMode::Colgen).unwrap();
        assert_eq!(a.solution, b.solution);
        assert_eq!(a.objective, b.objective);
        assert_eq!(a.pivots, b.pivots);
    }

    #[test]
    fn caps_are_enforced() {
        let inst = gen_random(4, 3, 0, RandomOracleFamily::Uniform).unwrap();
        solve_conf_lp(&inst, LpMode::Colgen).unwrap();
        let big = gen_random(21, 2, 0, RandomOracleFamily::Uniform).unwrap();
        assert!(matches!(
            solve_conf_lp(&big, LpMode::Colgen),
            Err(Error::CapExceeded(_))
        ));
    }

    #[test]
    fn reindex_remaps_clients() {
        let sol = FractionalSolution::from_entries(
            6,
            2,
            vec![
                (0, ClientSet::from_vec(vec![1, 4]), 1.0),
                (1, ClientSet::singleton(4), 0.25),
            ],
        )
        .unwrap();
        let re = sol.reindex_clients(&[1, 4]).unwrap();
        assert_eq!(re.n(), 2);
        let cols: Vec<_> = re.iter().collect();
        assert_eq!(cols[0].0.set, ClientSet::from_vec(vec![0, 1]));
        assert_eq!(cols[1].0.set, ClientSet::singleton(1));
        assert!(sol.reindex_clients(&[1]).is_err());
    }
}
