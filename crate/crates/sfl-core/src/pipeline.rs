//! End-to-end solver pipeline.
//!
//! The pipeline sweeps distance thresholds; for each threshold it splits
//! the instance into bounded components, solves the configuration LP per
//! component, rounds part of the solution by sampling, embeds the rest
//! into a random tree, rounds on the tree, and merges. Every candidate is
//! scored by its true cost on the input instance and the cheapest one
//! wins. All randomness is derived from one seed, so a given
//! `(instance, seed, config)` triple always returns the same answer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::audit::{check_le, CheckRecord};
use crate::dla::{reduce_to_dla, round_dla};
use crate::embed::frt_embed;
use crate::error::{Error, Result};
use crate::instance::{reduce_distance_range, reduce_facilities, CostBreakdown, Instance};
use crate::lp::{solve_conf_lp, LpMode};
use crate::sampling::{self, merge, residual, stage_one, PartialAssignment};
use crate::set::ClientSet;
use crate::tol;

/// Tuning knobs for [`pipeline_solve`].
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    /// Spread-control parameter of the distance-range reduction.
    pub eps: f64,
    /// When set, only this distance threshold is tried and the
    /// nearest-facility fallback is disabled.
    pub fix_level: Option<f64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            eps: 0.1,
            fix_level: None,
        }
    }
}

/// Per-component diagnostics for the winning threshold.
#[derive(Debug, Clone, Serialize)]
pub struct ComponentReport {
    pub clients: usize,
    pub facilities: usize,
    /// Factor by which the component's distances were rescaled.
    pub rescale: f64,
    /// Configuration-LP objective on the rescaled component.
    pub lp_objective: f64,
    /// Cost of the sampled stage-one partial assignment on the rescaled
    /// component (overlaps paid per occurrence).
    pub stage_one_cost: f64,
    pub stage_one_covered: usize,
    pub residual_clients: usize,
    pub sampling_seed: u64,
    pub embed_seed: u64,
}

/// Result of [`pipeline_solve`].
#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub assignment: Vec<u32>,
    /// True cost of `assignment` on the input instance.
    pub cost: CostBreakdown,
    /// Configuration-LP objective of the input instance, when it fits the
    /// LP caps.
    pub lp_objective: Option<f64>,
    /// Winning distance threshold; `None` when the nearest-facility
    /// candidate won.
    pub level: Option<f64>,
    /// Thresholds whose full pipeline run completed.
    pub levels_tried: usize,
    /// Thresholds skipped because a component exceeded a size cap.
    pub levels_skipped: usize,
    pub components: Vec<ComponentReport>,
    /// Every inequality asserted while producing the winning candidate.
    pub checks: Vec<CheckRecord>,
}

struct Candidate {
    level: Option<f64>,
    assignment: Vec<u32>,
    cost: CostBreakdown,
    components: Vec<ComponentReport>,
    checks: Vec<CheckRecord>,
}

/// Stage tags for seed derivation.
const STAGE_SAMPLING: u64 = 1;
const STAGE_EMBED: u64 = 2;

/// Derives the RNG seed for one stage of one component of one threshold
/// guess: an independent ChaCha8 stream keyed by `(guess, component,
/// stage)` yields one draw.
fn derive_seed(seed: u64, guess: usize, comp: usize, stage: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((guess as u64) << 24) | ((comp as u64) << 4) | stage);
    rng.gen()
}

/// Assigns every client to its nearest facility (lowest id on ties).
fn nearest_assignment(inst: &Instance) -> Vec<u32> {
    (0..inst.n())
        .map(|c| {
            let mut best = 0usize;
            let mut best_d = inst.dist_cf(c, 0);
            for f in 1..inst.m() {
                let d = inst.dist_cf(c, f);
                if d < best_d {
                    best_d = d;
                    best = f;
                }
            }
            best as u32
        })
        .collect()
}

/// Runs the full per-threshold pipeline. Returns `Ok(None)` when the
/// threshold leaves some client without a reachable facility.
fn run_level(
    orig: &Instance,
    work: &Instance,
    fac_back: Option<&[usize]>,
    level: f64,
    guess_index: usize,
    seed: u64,
    eps: f64,
) -> Result<Option<Candidate>> {
    let comps = match reduce_distance_range(work, eps, level) {
        Ok(c) => c,
        Err(Error::Domain(_)) => return Ok(None),
        Err(e) => return Err(e),
    };
    let mut final_assignment = vec![u32::MAX; work.n()];
    let mut reports = Vec::new();
    let mut checks = Vec::new();
    for (ci, comp) in comps.iter().enumerate() {
        let cn = comp.instance.n();
        let cm = comp.instance.m();
        let lp = solve_conf_lp(&comp.instance, LpMode::Colgen)?;
        let sampling_seed = derive_seed(seed, guess_index, ci, STAGE_SAMPLING);
        let embed_seed = derive_seed(seed, guess_index, ci, STAGE_EMBED);
        let s1 = stage_one(&comp.instance, &lp.solution, sampling_seed)?;
        let s1_cost = sampling::cost(&comp.instance, &s1.assignment)?;
        let uncovered = ClientSet::full(cn).difference(&s1.covered);
        let mut merged = s1.assignment.clone();
        if !uncovered.is_empty() {
            let x2 = residual(&lp.solution, &s1.covered);
            let c2_ids: Vec<u32> = uncovered.iter().copied().collect();
            let n2 = c2_ids.len();
            let x2c = x2.reindex_clients(&c2_ids)?;
            // Random tree over the residual clients plus all facilities of
            // the component (its normalization keeps distances >= 2).
            let mut pts: Vec<usize> = c2_ids.iter().map(|&c| c as usize).collect();
            pts.extend(cn..cn + cm);
            let sub = comp.instance.metric().submetric(&pts);
            let hst = frt_embed(&sub, embed_seed)?;
            let mut tree_inst = Instance::new(
                n2,
                cm,
                hst.tree_metric(),
                comp.instance.oracle().restrict(&c2_ids)?,
            )?
            .with_oracle_scale(comp.instance.oracle_scale())?;
            if let Some(w) = comp.instance.mult_weights() {
                tree_inst = tree_inst.with_mult_weights(w.to_vec())?;
            }
            if let Some(p) = comp.instance.add_weights() {
                tree_inst = tree_inst.with_add_weights(p.to_vec())?;
            }
            if let Some(mu) = comp.instance.conn_multipliers() {
                tree_inst = tree_inst
                    .with_conn_multipliers(c2_ids.iter().map(|&c| mu[c as usize]).collect())?;
            }
            let red = reduce_to_dla(&tree_inst, &hst, &x2c)?;
            let rounded = round_dla(&red.dla, &red.z, red.dla.variant())?;
            let lifted = lift_to_sfl(ci, &tree_inst, &hst, &red, &rounded, &x2c, &mut checks)?;
            let plan2 = lifted.to_assignment(n2)?;
            let mut s2 = PartialAssignment::new(cm);
            for (j, &f) in plan2.iter().enumerate() {
                s2.insert_at(f as usize, &ClientSet::singleton(c2_ids[j]));
            }
            merged = merge(&merged, &s2);
        }
        let comp_assign = merged.to_assignment(cn)?;
        for (j, &fc) in comp_assign.iter().enumerate() {
            let c = comp.client_ids[j] as usize;
            if final_assignment[c] != u32::MAX {
                return Err(Error::invariant(format!(
                    "client {c} appears in two components"
                )));
            }
            final_assignment[c] = comp.facility_ids[fc as usize] as u32;
        }
        reports.push(ComponentReport {
            clients: cn,
            facilities: cm,
            rescale: comp.lambda,
            lp_objective: lp.objective,
            stage_one_cost: s1_cost.total,
            stage_one_covered: s1.covered.len(),
            residual_clients: cn - s1.covered.len(),
            sampling_seed,
            embed_seed,
        });
    }
    if final_assignment.iter().any(|&f| f == u32::MAX) {
        return Err(Error::invariant(
            "pipeline left a client unassigned".to_string(),
        ));
    }
    let assignment: Vec<u32> = final_assignment
        .iter()
        .map(|&f| match fac_back {
            Some(back) => back[f as usize] as u32,
            None => f,
        })
        .collect();
    let cost = orig.cost(&assignment)?;
    Ok(Some(Candidate {
        level: Some(level),
        assignment,
        cost,
        components: reports,
        checks,
    }))
}

/// Applies the tree-rounding lift and folds its audit records (prefixed by
/// component) into `checks`.
fn lift_to_sfl(
    ci: usize,
    tree_inst: &Instance,
    hst: &crate::embed::Hst,
    red: &crate::dla::DlaReduction,
    rounded: &crate::dla::DlaRounding,
    x2c: &crate::lp::FractionalSolution,
    checks: &mut Vec<CheckRecord>,
) -> Result<PartialAssignment> {
    let lifted = crate::dla::lift_to_sfl(tree_inst, hst, &red.anchors, &rounded.assignment, x2c)?;
    for rec in red
        .checks
        .iter()
        .chain(rounded.checks.iter())
        .chain(lifted.checks.iter())
    {
        checks.push(CheckRecord {
            name: format!("c{ci}-{}", rec.name),
            ..rec.clone()
        });
    }
    Ok(lifted.assignment)
}

/// Solves an instance end to end.
///
/// Candidates are the nearest-facility assignment plus one full pipeline
/// run per distinct positive client-facility distance (used as the
/// component-splitting threshold); the strictly cheapest candidate wins,
/// with earlier candidates keeping ties. With `fix_level` set, only that
/// threshold runs and its failures surface directly.
pub fn pipeline_solve(
    inst: &Instance,
    seed: u64,
    config: &PipelineConfig,
) -> Result<PipelineOutcome> {
    if !config.eps.is_finite() || config.eps <= 0.0 {
        return Err(Error::domain("eps must be finite and positive"));
    }

    // Consolidate facilities when that shrinks the instance (plain
    // openings only; the consolidated ids map back through `fac_back`).
    let consolidated;
    let (work, fac_back) = if inst.is_plain() && inst.m() > inst.n() {
        let (r, back) = reduce_facilities(inst)?;
        consolidated = r;
        (&consolidated, Some(back))
    } else {
        (inst, None)
    };

    let lp_objective = match solve_conf_lp(inst, LpMode::Colgen) {
        Ok(out) => Some(out.objective),
        Err(Error::CapExceeded(_)) => None,
        Err(e) => return Err(e),
    };

    let levels: Vec<f64> = match config.fix_level {
        Some(l) => {
            if !l.is_finite() || l <= 0.0 {
                return Err(Error::domain("fixed distance threshold must be positive"));
            }
            vec![l]
        }
        None => {
            let mut vals: Vec<f64> = Vec::new();
            for c in 0..work.n() {
                for f in 0..work.m() {
                    let d = work.dist_cf(c, f);
                    if d > 0.0 {
                        vals.push(d);
                    }
                }
            }
            vals.sort_by(f64::total_cmp);
            vals.dedup();
            vals
        }
    };
    let fixed = config.fix_level.is_some();

    let mut best: Option<Candidate> = None;
    if !fixed {
        let assignment = nearest_assignment(inst);
        let cost = inst.cost(&assignment)?;
        best = Some(Candidate {
            level: None,
            assignment,
            cost,
            components: Vec::new(),
            checks: Vec::new(),
        });
    }

    let mut tried = 0usize;
    let mut skipped = 0usize;
    for (gi, &level) in levels.iter().enumerate() {
        match run_level(inst, work, fac_back.as_deref(), level, gi, seed, config.eps) {
            Ok(Some(cand)) => {
                tried += 1;
                if best
                    .as_ref()
                    .is_none_or(|b| cand.cost.total < b.cost.total)
                {
                    best = Some(cand);
                }
            }
            Ok(None) => {
                if fixed {
                    return Err(Error::domain(format!(
                        "distance threshold {level} leaves some client with no reachable facility"
                    )));
                }
            }
            Err(Error::CapExceeded(msg)) => {
                if fixed {
                    return Err(Error::CapExceeded(msg));
                }
                skipped += 1;
            }
            Err(e) => return Err(e),
        }
    }
    if tried == 0 && !levels.is_empty() {
        if skipped > 0 {
            return Err(Error::cap(
                "every distance threshold produced a component over the size caps".to_string(),
            ));
        }
        return Err(Error::invariant(
            "no distance threshold was feasible, including the largest".to_string(),
        ));
    }

    let winner = best.expect("at least one candidate exists");
    let mut checks = winner.checks;
    if let Some(lp) = lp_objective {
        checks.push(check_le(
            "pipeline-lp-lower-bound",
            lp,
            winner.cost.total,
            tol::EPS_LP_GAP,
        )?);
    }
    Ok(PipelineOutcome {
        assignment: winner.assignment,
        cost: winner.cost,
        lp_objective,
        level: winner.level,
        levels_tried: tried,
        levels_skipped: skipped,
        components: winner.components,
        checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::exact_dp;
    use crate::instance::{gen_hypercube, gen_random, RandomOracleFamily};
    use crate::metric::Metric;
    use crate::oracle::SubmodularOracle;

    fn assert_feasible(inst: &Instance, out: &PipelineOutcome) {
        assert_eq!(out.assignment.len(), inst.n());
        assert!(out.assignment.iter().all(|&f| (f as usize) < inst.m()));
        let recomputed = inst.cost(&out.assignment).unwrap();
        assert!((recomputed.total - out.cost.total).abs() < 1e-12);
        if let Some(lp) = out.lp_objective {
            assert!(out.cost.total >= lp - 1e-6 * (1.0 + lp.abs()));
        }
    }

    #[test]
    fn single_client_matches_lp() {
        let metric = Metric::new(vec![vec![0.0, 2.0], vec![2.0, 0.0]]).unwrap();
        let inst =
            Instance::new(1, 1, metric, SubmodularOracle::uniform(5.0, 1).unwrap()).unwrap();
        let out = pipeline_solve(&inst, 7, &PipelineConfig::default()).unwrap();
        assert_feasible(&inst, &out);
        assert_eq!(out.assignment, vec![0]);
        let lp = out.lp_objective.unwrap();
        assert!((out.cost.total - lp).abs() <= 1e-6 * (1.0 + lp));
        assert!((out.cost.total - 7.0).abs() <= 1e-6);
    }

    #[test]
    fn random_instances_land_between_lp_and_nothing() {
        for seed in 0..6u64 {
            let fam = match seed % 3 {
                0 => RandomOracleFamily::Uniform,
                1 => RandomOracleFamily::Coverage,
                _ => RandomOracleFamily::IndependentActivation,
            };
            let inst = gen_random(6, 4, 100 + seed, fam).unwrap();
            let out = pipeline_solve(&inst, seed, &PipelineConfig::default()).unwrap();
            assert_feasible(&inst, &out);
            let dp = exact_dp(&inst).unwrap();
            assert!(
                out.cost.total >= dp.cost.total - 1e-9 * (1.0 + dp.cost.total),
                "seed {seed}: pipeline {} below optimum {}",
                out.cost.total,
                dp.cost.total
            );
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let inst = gen_random(7, 5, 42, RandomOracleFamily::Coverage).unwrap();
        let a = pipeline_solve(&inst, 5, &PipelineConfig::default()).unwrap();
        let b = pipeline_solve(&inst, 5, &PipelineConfig::default()).unwrap();
        assert_eq!(a.assignment, b.assignment);
        assert_eq!(a.cost.total, b.cost.total);
        assert_eq!(a.level, b.level);
        assert_eq!(a.levels_tried, b.levels_tried);
    }

    #[test]
    fn hypercube_dim2_sandwich() {
        let inst = gen_hypercube(2).unwrap();
        let out = pipeline_solve(&inst, 1, &PipelineConfig::default()).unwrap();
        assert_feasible(&inst, &out);
        let dp = exact_dp(&inst).unwrap();
        let lp = out.lp_objective.unwrap();
        assert!(lp <= dp.cost.total + 1e-6);
        assert!(out.cost.total >= dp.cost.total - 1e-9);
    }

    #[test]
    fn weighted_variants_run_and_mixed_weights_refuse() {
        let base = gen_random(5, 3, 9, RandomOracleFamily::Coverage).unwrap();
        let mult = base.clone().with_mult_weights(vec![1.0, 0.5, 2.0]).unwrap();
        let out = pipeline_solve(&mult, 3, &PipelineConfig::default()).unwrap();
        assert_feasible(&mult, &out);
        let add = base.clone().with_add_weights(vec![0.2, 0.4, 0.1]).unwrap();
        let out = pipeline_solve(&add, 3, &PipelineConfig::default()).unwrap();
        assert_feasible(&add, &out);
        // Mixed weights are refused at construction, so the pipeline can
        // never see such an instance.
        assert!(matches!(
            base.with_mult_weights(vec![1.0, 0.5, 2.0])
                .unwrap()
                .with_add_weights(vec![0.2, 0.4, 0.1]),
            Err(Error::UnsupportedVariant(_))
        ));
    }

    #[test]
    fn fixed_level_forces_the_machinery() {
        let inst = gen_random(5, 4, 11, RandomOracleFamily::Coverage).unwrap();
        let mut max_d = 0.0f64;
        for c in 0..inst.n() {
            for f in 0..inst.m() {
                max_d = max_d.max(inst.dist_cf(c, f));
            }
        }
        let cfg = PipelineConfig {
            eps: 0.1,
            fix_level: Some(max_d),
        };
        let out = pipeline_solve(&inst, 2, &cfg).unwrap();
        assert_feasible(&inst, &out);
        assert_eq!(out.level, Some(max_d));
        assert_eq!(out.components.len(), 1);
        assert!(out.components[0].lp_objective > 0.0);

        let tiny = PipelineConfig {
            eps: 0.1,
            fix_level: Some(1e-12),
        };
        assert!(matches!(
            pipeline_solve(&inst, 2, &tiny),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn colocated_instance_uses_nearest_fallback() {
        // Two clients and one facility, all at the same point: there are no
        // positive client-facility distances to guess from.
        let metric = Metric::new(vec![vec![0.0; 3]; 3]).unwrap();
        let oracle = SubmodularOracle::coverage(vec![1.0, 2.0], vec![vec![0], vec![1]]).unwrap();
        let inst = Instance::new(2, 1, metric, oracle).unwrap();
        let out = pipeline_solve(&inst, 0, &PipelineConfig::default()).unwrap();
        assert_feasible(&inst, &out);
        assert_eq!(out.level, None);
        assert_eq!(out.assignment, vec![0, 0]);
        assert!((out.cost.total - 3.0).abs() < 1e-9);
    }

    #[test]
    fn facility_consolidation_path_runs() {
        // Plain instance with more facilities than clients triggers the
        // consolidation reduction; ids must map back to the input space.
        let inst = gen_random(3, 6, 21, RandomOracleFamily::Uniform).unwrap();
        let out = pipeline_solve(&inst, 4, &PipelineConfig::default()).unwrap();
        assert_feasible(&inst, &out);
        let dp = exact_dp(&inst).unwrap();
        assert!(out.cost.total >= dp.cost.total - 1e-9 * (1.0 + dp.cost.total));
    }

    #[test]
    fn reports_cover_the_winning_level() {
        let inst = gen_random(6, 4, 33, RandomOracleFamily::IndependentActivation).unwrap();
        let out = pipeline_solve(&inst, 8, &PipelineConfig::default()).unwrap();
        assert_feasible(&inst, &out);
        if out.level.is_some() {
            assert!(!out.components.is_empty());
            let covered: usize = out
                .components
                .iter()
                .map(|c| c.stage_one_covered + c.residual_clients)
                .sum();
            assert_eq!(covered, inst.n());
        }
        // The LP lower-bound check is always recorded when the LP ran.
        assert!(out
            .checks
            .iter()
            .any(|c| c.name == "pipeline-lp-lower-bound"));
    }
}
