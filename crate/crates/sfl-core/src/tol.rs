//! Numeric tolerances, pinned in one place.

/// General numeric comparison slack (oracle equality, cost comparisons).
pub const EPS_NUM: f64 = 1e-9;

/// Absolute slack allowed when validating the triangle inequality.
pub const EPS_TRIANGLE: f64 = 1e-9;

/// Absolute residual allowed on LP constraint rows (primal feasibility).
pub const EPS_LP_FEAS: f64 = 1e-7;

/// Relative duality-gap bound for a certified LP optimum:
/// |primal - dual| <= EPS_LP_GAP * (1 + |primal|).
pub const EPS_LP_GAP: f64 = 1e-6;

/// Pivot threshold for the simplex ratio test.
pub const EPS_RATIO: f64 = 1e-10;

/// Pricing stops once the most negative reduced cost is above -EPS_REDUCED_COST.
pub const EPS_REDUCED_COST: f64 = 1e-9;

/// Entries of a fractional solution below this are treated as zero.
pub const EPS_X_ZERO: f64 = 1e-10;

/// Relative tolerance on the supportedness inequality's slack.
pub const EPS_SUPPORT: f64 = 1e-9;

/// Offset into a breakpoint gap when probing thresholds strictly inside it.
pub const THETA_DELTA: f64 = 1.0 / (1u64 << 40) as f64;

/// Mass threshold at which a client's anchor node is fixed.
pub const ANCHOR_MASS: f64 = 0.5;

/// Instances are stored with dense metrics and capped at this many points.
pub const MAX_POINTS: usize = 4096;

/// Exhaustive-subset operations (LP pricing/enumeration) require n <= this.
pub const MAX_LP_CLIENTS: usize = 20;

/// Explicit column enumeration is capped at m*2^n <= this.
pub const MAX_LP_COLUMNS: u64 = 1 << 24;

/// Exact-greedy subset enumeration cap.
pub const MAX_GREEDY_CLIENTS: usize = 12;

/// Exact DP cap (3^n submask enumeration).
pub const MAX_DP_CLIENTS: usize = 16;

/// Brute-force assignment enumeration cap: m^n <= this.
pub const MAX_EXHAUSTIVE_ASSIGNMENTS: u64 = 1 << 22;

/// Submodularity verification cap (tables of 2^n values, all pairs checked).
pub const MAX_VERIFY_GROUND: usize = 12;

/// Hypercube oracle evaluation enumerates 2^dim activation sets per call.
pub const MAX_HYPERCUBE_DIM: u32 = 16;

/// Structured greedy is limited to hypercube instances of this dimension.
pub const MAX_STRUCTURED_DIM: u32 = 8;
