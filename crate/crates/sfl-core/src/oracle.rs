//! Monotone submodular set functions and their Lovasz extensions.
//!
//! Every opening-cost function used by the solver implements [`SetFunction`]:
//! a nonnegative, monotone, submodular function with `eval({}) = 0`. Oracles
//! are immutable after construction and hold no caches, so shared references
//! may be evaluated concurrently.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::set::ClientSet;
use crate::tol;

/// A set function over a fixed ground set of clients `0..ground_size()`.
pub trait SetFunction {
    fn ground_size(&self) -> usize;

    /// Value of the function on `set`. Members must lie in the ground set.
    fn eval(&self, set: &ClientSet) -> f64;
}

/// Serializable descriptor of an oracle family.
///
/// The four public kinds appear in instance JSON under the `oracle` key;
/// `restricted` is produced internally when an instance is narrowed to a
/// client subset and never appears in user-authored files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OracleKind {
    /// `g(R) = cost` for every nonempty `R`.
    Uniform { cost: f64 },
    /// Weighted coverage: `g(R)` is the total weight of universe elements
    /// covered by the members' sets.
    Coverage {
        universe_weights: Vec<f64>,
        sets: Vec<Vec<u32>>,
    },
    /// Expected number of distinct demand points hit on a hypercube whose
    /// dimensions activate independently; see [`SubmodularOracle::hypercube`].
    Hypercube { dim: u32 },
    /// `g(R) = 1 - prod_{c in R}(1 - probs[c])`: probability that at least one
    /// member activates, activations independent.
    IndependentActivation { probs: Vec<f64> },
    /// `base` evaluated on `{ids[c] : c in R}`.
    Restricted { base: Box<OracleKind>, ids: Vec<u32> },
}

/// A validated monotone submodular oracle over `0..ground` clients.
#[derive(Clone, Debug, PartialEq)]
pub struct SubmodularOracle {
    ground: usize,
    kind: OracleKind,
}

impl SubmodularOracle {
    /// Validates `kind` against the intended ground-set size `n`.
    pub fn new(kind: OracleKind, n: usize) -> Result<Self> {
        match &kind {
            OracleKind::Uniform { cost } => {
                if !cost.is_finite() || *cost < 0.0 {
                    return Err(Error::invalid("uniform oracle cost must be finite and >= 0"));
                }
            }
            OracleKind::Coverage {
                universe_weights,
                sets,
            } => {
                if sets.len() != n {
                    return Err(Error::invalid(format!(
                        "coverage oracle has {} client sets but instance has {} clients",
                        sets.len(),
                        n
                    )));
                }
                if universe_weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
                    return Err(Error::invalid("coverage weights must be finite and >= 0"));
                }
                let u = universe_weights.len();
                for (c, s) in sets.iter().enumerate() {
                    if s.iter().any(|&e| e as usize >= u) {
                        return Err(Error::invalid(format!(
                            "coverage set of client {c} references an element outside the universe"
                        )));
                    }
                }
            }
            OracleKind::Hypercube { dim } => {
                if *dim < 1 || *dim > tol::MAX_HYPERCUBE_DIM {
                    return Err(Error::cap(format!(
                        "hypercube oracle dim must be in 1..={} (each eval enumerates 2^dim activation sets), got {dim}",
                        tol::MAX_HYPERCUBE_DIM
                    )));
                }
                let expect = (*dim as usize) << *dim;
                if expect != n {
                    return Err(Error::invalid(format!(
                        "hypercube oracle dim {dim} implies {expect} clients, instance has {n}"
                    )));
                }
            }
            OracleKind::IndependentActivation { probs } => {
                if probs.len() != n {
                    return Err(Error::invalid(format!(
                        "independent_activation oracle has {} probs but instance has {} clients",
                        probs.len(),
                        n
                    )));
                }
                if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
                    return Err(Error::invalid(
                        "independent_activation probs must lie in [0, 1]",
                    ));
                }
            }
            OracleKind::Restricted { base, ids } => {
                if ids.len() != n {
                    return Err(Error::invalid("restricted oracle id map length mismatch"));
                }
                if ids.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::invalid("restricted oracle ids must be strictly increasing"));
                }
                let inner_ground = ids.iter().map(|&i| i as usize + 1).max().unwrap_or(0);
                // Validate the base against the smallest ground set containing the map.
                let base_check = SubmodularOracle::new((**base).clone(), inner_ground);
                // Structural kinds (hypercube) pin their own ground size; retry with it.
                if base_check.is_err() {
                    if let OracleKind::Hypercube { dim } = **base {
                        SubmodularOracle::new(OracleKind::Hypercube { dim }, (dim as usize) << dim)?;
                        if ids.iter().any(|&i| (i as usize) >= (dim as usize) << dim) {
                            return Err(Error::invalid("restricted ids exceed base ground"));
                        }
                    } else {
                        base_check?;
                    }
                }
            }
        }
        Ok(SubmodularOracle { ground: n, kind })
    }

    /// Hypercube demand oracle of dimension `dim` over `dim*2^dim` clients.
    ///
    /// Client `c` denotes demand `(v, l)` with `v = c / dim` a vertex bitmask
    /// and `l = c % dim + 1` a dimension index. Dimension `i` flips
    /// independently with probability `p_i = 1 / (2(dim + 1 - i))`; the value
    /// of a set is the expected number of distinct vertices reached by
    /// collapsing each demand along its flipped dimensions.
    pub fn hypercube(dim: u32) -> Result<Self> {
        let n = (dim as usize) << dim;
        SubmodularOracle::new(OracleKind::Hypercube { dim }, n)
    }

    pub fn uniform(cost: f64, n: usize) -> Result<Self> {
        SubmodularOracle::new(OracleKind::Uniform { cost }, n)
    }

    pub fn coverage(universe_weights: Vec<f64>, sets: Vec<Vec<u32>>) -> Result<Self> {
        let n = sets.len();
        SubmodularOracle::new(
            OracleKind::Coverage {
                universe_weights,
                sets,
            },
            n,
        )
    }

    pub fn independent_activation(probs: Vec<f64>) -> Result<Self> {
        let n = probs.len();
        SubmodularOracle::new(OracleKind::IndependentActivation { probs }, n)
    }

    pub fn kind(&self) -> &OracleKind {
        &self.kind
    }

    /// Narrows the oracle to the clients in `ids` (strictly increasing ids
    /// into this oracle's ground set); new client `j` is old client `ids[j]`.
    pub fn restrict(&self, ids: &[u32]) -> Result<SubmodularOracle> {
        if ids.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::domain("restriction ids must be strictly increasing"));
        }
        if ids.iter().any(|&i| i as usize >= self.ground) {
            return Err(Error::domain("restriction id outside ground set"));
        }
        let kind = match &self.kind {
            OracleKind::Uniform { cost } => OracleKind::Uniform { cost: *cost },
            OracleKind::Coverage {
                universe_weights,
                sets,
            } => OracleKind::Coverage {
                universe_weights: universe_weights.clone(),
                sets: ids.iter().map(|&i| sets[i as usize].clone()).collect(),
            },
            OracleKind::IndependentActivation { probs } => OracleKind::IndependentActivation {
                probs: ids.iter().map(|&i| probs[i as usize]).collect(),
            },
            OracleKind::Hypercube { dim } => OracleKind::Restricted {
                base: Box::new(OracleKind::Hypercube { dim: *dim }),
                ids: ids.to_vec(),
            },
            OracleKind::Restricted { base, ids: inner } => OracleKind::Restricted {
                base: base.clone(),
                ids: ids.iter().map(|&i| inner[i as usize]).collect(),
            },
        };
        SubmodularOracle::new(kind, ids.len())
    }

    fn eval_kind(kind: &OracleKind, ground: usize, set: &ClientSet) -> f64 {
        debug_assert!(set.iter().all(|&c| (c as usize) < ground));
        match kind {
            OracleKind::Uniform { cost } => {
                if set.is_empty() {
                    0.0
                } else {
                    *cost
                }
            }
            OracleKind::Coverage {
                universe_weights,
                sets,
            } => {
                let mut hit = vec![false; universe_weights.len()];
                for &c in set {
                    for &e in &sets[c as usize] {
                        hit[e as usize] = true;
                    }
                }
                hit.iter()
                    .zip(universe_weights)
                    .filter(|(h, _)| **h)
                    .map(|(_, w)| *w)
                    .sum()
            }
            OracleKind::Hypercube { dim } => eval_hypercube(*dim, set),
            OracleKind::IndependentActivation { probs } => {
                if set.is_empty() {
                    return 0.0;
                }
                let miss: f64 = set.iter().map(|&c| 1.0 - probs[c as usize]).product();
                1.0 - miss
            }
            OracleKind::Restricted { base, ids } => {
                let mapped: ClientSet = set.iter().map(|&c| ids[c as usize]).collect();
                let inner_ground = ids.iter().map(|&i| i as usize + 1).max().unwrap_or(0);
                Self::eval_kind(base, inner_ground.max(mapped.len()), &mapped)
            }
        }
    }
}

impl SetFunction for SubmodularOracle {
    fn ground_size(&self) -> usize {
        self.ground
    }

    fn eval(&self, set: &ClientSet) -> f64 {
        Self::eval_kind(&self.kind, self.ground, set)
    }
}

/// Hypercube oracle: expected count of distinct collapsed vertices.
///
/// For each activation set `A` of dimensions (probability
/// `prod_{i in A} p_i * prod_{i not in A} (1-p_i)`), a demand `(v, l)` with `l in A` reaches
/// the vertex class obtained by masking the coordinates in `A` out of `v`;
/// demands with `l not in A` reach nothing. Cost: `O(2^dim * |set|)` per call.
fn eval_hypercube(dim: u32, set: &ClientSet) -> f64 {
    let d = dim as usize;
    let p: Vec<f64> = (1..=d)
        .map(|i| 1.0 / (2.0 * (d as f64 + 1.0 - i as f64)))
        .collect();
    let mut total = 0.0;
    let mut reached: Vec<u32> = Vec::with_capacity(set.len());
    for a in 0u32..(1 << d) {
        let mut prob = 1.0;
        for (i, pi) in p.iter().enumerate() {
            prob *= if a >> i & 1 == 1 { *pi } else { 1.0 - *pi };
        }
        reached.clear();
        for &c in set {
            let v = c / dim;
            let l = c % dim; // zero-based dimension index
            if a >> l & 1 == 1 {
                reached.push(v & !a);
            }
        }
        reached.sort_unstable();
        reached.dedup();
        total += prob * reached.len() as f64;
    }
    total
}

/// `mult * base(R) + add * [R != {}]`, with `mult, add >= 0`.
///
/// Used for per-facility opening costs (multiplicative/additive weights) and
/// for uniform instance-level rescaling. Monotone submodular whenever the
/// base is.
#[derive(Clone, Copy, Debug)]
pub struct ScaledOracle<'a> {
    pub base: &'a SubmodularOracle,
    pub mult: f64,
    pub add: f64,
}

impl SetFunction for ScaledOracle<'_> {
    fn ground_size(&self) -> usize {
        self.base.ground_size()
    }

    fn eval(&self, set: &ClientSet) -> f64 {
        if set.is_empty() {
            0.0
        } else {
            self.mult * self.base.eval(set) + self.add
        }
    }
}

/// Explicit value table over a ground set of at most 20 clients.
///
/// `values[mask]` is the value of the subset with member bitmask `mask`.
/// Makes no structural promises; pair with [`verify_submodular`].
#[derive(Clone, Debug, PartialEq)]
pub struct TableOracle {
    n: usize,
    values: Vec<f64>,
}

impl TableOracle {
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self> {
        if n > 20 {
            return Err(Error::cap("table oracle ground set capped at 20"));
        }
        if values.len() != 1 << n {
            return Err(Error::domain(format!(
                "table oracle over {n} clients needs {} values, got {}",
                1 << n,
                values.len()
            )));
        }
        Ok(TableOracle { n, values })
    }

    /// Tabulates any set function (e.g. to corrupt entries in tests).
    pub fn tabulate<F: SetFunction + ?Sized>(f: &F) -> Result<Self> {
        let n = f.ground_size();
        if n > 20 {
            return Err(Error::cap("table oracle ground set capped at 20"));
        }
        let values = (0u64..1 << n)
            .map(|mask| f.eval(&ClientSet::from_mask(mask, n)))
            .collect();
        Ok(TableOracle { n, values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

impl SetFunction for TableOracle {
    fn ground_size(&self) -> usize {
        self.n
    }

    fn eval(&self, set: &ClientSet) -> f64 {
        self.values[set.to_mask() as usize]
    }
}

/// Lovasz extension of `h` at `y in [0, 1]^n`.
///
/// Sorts components in decreasing order (ties broken by ascending client id,
/// which never affects the value) and telescopes over the prefix sets:
/// `sum_k h({c_1..c_k})*(y_{c_k} - y_{c_{k+1}})` with `y_{c_{n+1}} = 0`.
/// Zero-width gaps are skipped, which leaves the value unchanged and saves
/// oracle calls. `O(n)` evaluations of `h` per call.
pub fn lovasz<F: SetFunction + ?Sized>(h: &F, y: &[f64]) -> Result<f64> {
    let n = h.ground_size();
    if y.len() != n {
        return Err(Error::domain(format!(
            "lovasz input has {} components, ground set has {n}",
            y.len()
        )));
    }
    for (c, &v) in y.iter().enumerate() {
        if !v.is_finite() || !(-1e-12..=1.0 + 1e-12).contains(&v) {
            return Err(Error::domain(format!(
                "lovasz component {c} = {v} outside [0, 1]"
            )));
        }
    }
    let mut order: Vec<u32> = (0..n as u32).collect();
    order.sort_by(|&a, &b| {
        y[b as usize]
            .partial_cmp(&y[a as usize])
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut total = 0.0;
    let mut prefix = ClientSet::new();
    for k in 0..n {
        let c = order[k];
        prefix.insert(c);
        let next = if k + 1 < n { y[order[k + 1] as usize] } else { 0.0 };
        let gap = y[c as usize] - next;
        if gap != 0.0 {
            total += h.eval(&prefix) * gap;
        }
    }
    Ok(total)
}

/// Lovasz extension of `h` at the componentwise minimum of `z` and `theta`.
pub fn lovasz_truncated<F: SetFunction + ?Sized>(h: &F, z: &[f64], theta: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::domain(format!("threshold {theta} outside [0, 1]")));
    }
    let truncated: Vec<f64> = z.iter().map(|&v| v.min(theta)).collect();
    lovasz(h, &truncated)
}

/// Clients whose coordinate is at least `theta` (so `theta = 0` selects all).
pub fn level_set(z: &[f64], theta: f64) -> ClientSet {
    z.iter()
        .enumerate()
        .filter(|(_, &v)| v >= theta)
        .map(|(c, _)| c as u32)
        .collect()
}

/// Outcome of an exhaustive structural check; `None` means verified.
#[derive(Clone, Debug, PartialEq)]
pub enum SubmodularityViolation {
    /// `eval({})` is nonzero.
    EmptyNonzero { value: f64 },
    /// `eval` decreased when adding one element: pair `(set, superset)`.
    NotMonotone { set: ClientSet, superset: ClientSet },
    /// `eval(S) + eval(T) < eval(S union T) + eval(S intersect T)` beyond tolerance.
    NotSubmodular { s: ClientSet, t: ClientSet },
}

/// Exhaustively checks `eval({}) = 0`, monotonicity, and submodularity.
///
/// Requires `ground_size <= max_n <= 12`; refuses larger grounds since the
/// pair check walks all `4^n` set pairs against a `2^n` value table. Returns
/// the first violation in a fixed scan order, or `None` if the function
/// verifies clean (tolerance [`tol::EPS_NUM`]).
pub fn verify_submodular<F: SetFunction + ?Sized>(
    h: &F,
    max_n: usize,
) -> Result<Option<SubmodularityViolation>> {
    if max_n > tol::MAX_VERIFY_GROUND {
        return Err(Error::cap(format!(
            "verify_submodular cap is {} ground elements",
            tol::MAX_VERIFY_GROUND
        )));
    }
    let n = h.ground_size();
    if n > max_n {
        return Err(Error::cap(format!(
            "ground set of size {n} exceeds requested verification cap {max_n}"
        )));
    }
    let size = 1usize << n;
    let table: Vec<f64> = (0..size)
        .map(|mask| h.eval(&ClientSet::from_mask(mask as u64, n)))
        .collect();
    if table[0] != 0.0 {
        return Ok(Some(SubmodularityViolation::EmptyNonzero { value: table[0] }));
    }
    for mask in 0..size {
        for b in 0..n {
            if mask >> b & 1 == 0 {
                let sup = mask | 1 << b;
                if table[sup] < table[mask] - tol::EPS_NUM {
                    return Ok(Some(SubmodularityViolation::NotMonotone {
                        set: ClientSet::from_mask(mask as u64, n),
                        superset: ClientSet::from_mask(sup as u64, n),
                    }));
                }
            }
        }
    }
    for s in 0..size {
        for t in 0..size {
            if table[s] + table[t] < table[s | t] + table[s & t] - tol::EPS_NUM {
                return Ok(Some(SubmodularityViolation::NotSubmodular {
                    s: ClientSet::from_mask(s as u64, n),
                    t: ClientSet::from_mask(t as u64, n),
                }));
            }
        }
    }
    Ok(None)
}
