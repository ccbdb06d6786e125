//! The Smith-Volterra-Cantor escape-failure counterexample: the fat Cantor
//! set V, the piecewise bump objectives p_A (C^1) and p_B (C^3-compatible),
//! the landscape f(x, y) = -p(x) + y^2 on the box, and the Monte-Carlo
//! experiment showing gradient descent converges to the saddle column
//! V x {0} with positive probability.

use std::io::Write;

use crate::ambient::AmbientVector;
use crate::error::{Error, Result};
use crate::escape::EscapeStats;
use crate::manifold::{random_point, ManifoldPoint, ManifoldSpec};
use crate::objective::Objective;
use crate::parallel::map_trials;
use crate::pgd::{run_pgd, PGDConfig, Termination, UNDETERMINED_LABEL};

pub const IN_V_LABEL: &str = "in-V-column";
pub const INTERVAL_MINIMUM_LABEL: &str = "interval-minimum";

/// Largest level whose 2^L interval list is materialized as a vector;
/// beyond this the set is only addressable through `svc_membership`'s
/// O(L) descent.
pub const MATERIALIZE_LIMIT: usize = 24;

/// Level-L truncation of the Smith-Volterra-Cantor set: at round k every
/// remaining interval loses its open middle of length 4^{-k}. The 2^L
/// remaining intervals are not stored (2^48 of them would not fit in
/// memory); endpoints are recomputed by descending the removal tree, which
/// reproduces the construction arithmetic bit for bit.
#[derive(Debug, Clone)]
pub struct SVCSet {
    pub level: usize,
}

pub fn build_svc(level: usize) -> Result<SVCSet> {
    if !(1..=48).contains(&level) {
        return Err(Error::Parameter(format!(
            "SVC level {level} outside [1, 48]"
        )));
    }
    Ok(SVCSet { level })
}

impl SVCSet {
    /// The closed remaining intervals after `self.level` rounds, sorted and
    /// disjoint. Materializes 2^L pairs, so the level is capped.
    pub fn intervals(&self) -> Result<Vec<(f64, f64)>> {
        if self.level > MATERIALIZE_LIMIT {
            return Err(Error::Resource(format!(
                "2^{} intervals exceed the materialization limit",
                self.level
            )));
        }
        let mut intervals = vec![(0.0_f64, 1.0_f64)];
        for k in 1..=self.level {
            let gap = 0.25_f64.powi(k as i32);
            let mut next = Vec::with_capacity(intervals.len() * 2);
            for &(a, b) in &intervals {
                let mid = 0.5 * (a + b);
                next.push((a, mid - 0.5 * gap));
                next.push((mid + 0.5 * gap, b));
            }
            intervals = next;
        }
        Ok(intervals)
    }

    /// The open intervals removed inside [0, 1] over all rounds, sorted.
    pub fn removed(&self) -> Result<Vec<(f64, f64)>> {
        if self.level > MATERIALIZE_LIMIT {
            return Err(Error::Resource(format!(
                "2^{} intervals exceed the materialization limit",
                self.level
            )));
        }
        let mut intervals = vec![(0.0_f64, 1.0_f64)];
        let mut removed = Vec::new();
        for k in 1..=self.level {
            let gap = 0.25_f64.powi(k as i32);
            let mut next = Vec::with_capacity(intervals.len() * 2);
            for &(a, b) in &intervals {
                let mid = 0.5 * (a + b);
                let lo = mid - 0.5 * gap;
                let hi = mid + 0.5 * gap;
                removed.push((lo, hi));
                next.push((a, lo));
                next.push((hi, b));
            }
            intervals = next;
        }
        removed.sort_by(|p, q| p.0.partial_cmp(&q.0).unwrap());
        Ok(removed)
    }

    /// Total length of the remaining intervals:
    /// 1 - (1/2)(1 - 2^{-L}), summed per interval when the list fits in
    /// memory and per removal round otherwise.
    pub fn measure(&self) -> f64 {
        match self.intervals() {
            Ok(intervals) => intervals.iter().map(|&(a, b)| b - a).sum(),
            Err(_) => {
                let mut removed_total = 0.0;
                for k in 1..=self.level {
                    removed_total += 2.0_f64.powi(k as i32 - 1) * 0.25_f64.powi(k as i32);
                }
                1.0 - removed_total
            }
        }
    }
}

/// Location of a coordinate relative to the level-L set, within the box
/// x-range [-1, 2]. The end intervals [-1, 0) and (1, 2] count as removed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Membership {
    InV,
    Removed { a: f64, b: f64 },
}

pub fn svc_membership(x: f64, svc: &SVCSet) -> Result<Membership> {
    if !(-1.0..=2.0).contains(&x) {
        return Err(Error::Parameter(format!("x = {x} outside [-1, 2]")));
    }
    if x < 0.0 {
        return Ok(Membership::Removed { a: -1.0, b: 0.0 });
    }
    if x > 1.0 {
        return Ok(Membership::Removed { a: 1.0, b: 2.0 });
    }
    // Descend the removal tree: at each round the point is either inside
    // the freshly removed middle gap or in one of the two halves.
    let (mut a, mut b) = (0.0_f64, 1.0_f64);
    for k in 1..=svc.level {
        let gap = 0.25_f64.powi(k as i32);
        let mid = 0.5 * (a + b);
        let lo = mid - 0.5 * gap;
        let hi = mid + 0.5 * gap;
        if x > lo && x < hi {
            return Ok(Membership::Removed { a: lo, b: hi });
        }
        if x <= lo {
            b = lo;
        } else {
            a = hi;
        }
    }
    Ok(Membership::InV)
}

/// Which bump profile fills the removed intervals.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PVariant {
    /// Quadratic caps, C^1 across the knots.
    A,
    /// Quartic caps with a sextic middle, C^3-compatible across the knots.
    B,
}

/// Value and derivative of the bump on the removed interval (a, b) at x.
/// The three pieces meet at the knots a + len/4 and b - len/4.
fn bump(x: f64, a: f64, b: f64, variant: PVariant) -> (f64, f64) {
    let len = b - a;
    let quarter = 0.25 * len;
    match variant {
        PVariant::A => {
            if x <= a + quarter {
                let t = x - a;
                (t * t, 2.0 * t)
            } else if x >= b - quarter {
                let t = b - x;
                (t * t, -2.0 * t)
            } else {
                let q = x - 0.5 * (a + b);
                let c1 = 8.0 / (len * len);
                let c2 = -2.0;
                let c3 = 5.0 * len * len / 32.0;
                let q2 = q * q;
                (c1 * q2 * q2 + c2 * q2 + c3, 4.0 * c1 * q2 * q + 2.0 * c2 * q)
            }
        }
        PVariant::B => {
            if x <= a + quarter {
                let t = x - a;
                (t.powi(4), 4.0 * t.powi(3))
            } else if x >= b - quarter {
                let t = b - x;
                (t.powi(4), -4.0 * t.powi(3))
            } else {
                let q = x - 0.5 * (a + b);
                let l2 = len * len;
                let value = -24.0 * q.powi(6) / l2 + 6.5 * q.powi(4)
                    - 21.0 / 32.0 * l2 * q * q
                    + 13.0 / 512.0 * l2 * l2;
                let deriv = -144.0 * q.powi(5) / l2 + 26.0 * q.powi(3) - 21.0 / 16.0 * l2 * q;
                (value, deriv)
            }
        }
    }
}

/// p(x) and p'(x): zero on the level-L set, a positive bump on each removed
/// interval (including the end intervals of the box).
pub fn p_eval(x: f64, variant: PVariant, svc: &SVCSet) -> Result<(f64, f64)> {
    match svc_membership(x, svc)? {
        Membership::InV => Ok((0.0, 0.0)),
        Membership::Removed { a, b } => Ok(bump(x, a, b, variant)),
    }
}

/// As `p_eval` but tolerant of x slightly outside the box (the end-interval
/// formulas extend smoothly), for finite-difference probes.
fn p_eval_extended(x: f64, variant: PVariant, svc: &SVCSet) -> (f64, f64) {
    if x < -1.0 {
        return bump(x, -1.0, 0.0, variant);
    }
    if x > 2.0 {
        return bump(x, 1.0, 2.0, variant);
    }
    p_eval(x, variant, svc).expect("x inside the box")
}

/// f(x, y) = -p(x) + y^2 on the box manifold. The saddle set is the column
/// (V intersect box) x {0}.
#[derive(Debug, Clone)]
pub struct CounterexampleObjective {
    pub variant: PVariant,
    svc: SVCSet,
}

impl CounterexampleObjective {
    pub fn new(variant: PVariant, svc: SVCSet) -> Self {
        CounterexampleObjective { variant, svc }
    }

    pub fn svc(&self) -> &SVCSet {
        &self.svc
    }
}

impl Objective for CounterexampleObjective {
    fn ambient_shape(&self) -> (usize, usize) {
        (2, 1)
    }

    fn ambient_value(&self, p: &AmbientVector) -> Result<f64> {
        let v = p.column_vector()?;
        let (pv, _) = p_eval_extended(v[0], self.variant, &self.svc);
        Ok(-pv + v[1] * v[1])
    }

    fn ambient_gradient_at(&self, p: &AmbientVector) -> Result<AmbientVector> {
        let v = p.column_vector()?;
        let (_, pd) = p_eval_extended(v[0], self.variant, &self.svc);
        AmbientVector::from_vector(nalgebra::DVector::from_vec(vec![-pd, 2.0 * v[1]]))
    }
}

/// Runs plain gradient descent (the box is flat, clamping is a safety net)
/// from uniform starts and tallies where trajectories end up. A trial is
/// "in-V-column" when its initial x lies in the level-L set (the
/// x-coordinate is then invariant) and y has decayed; "interval-minimum"
/// when the limit is a removed-interval midpoint.
pub fn escape_failure_experiment(
    variant: PVariant,
    svc: &SVCSet,
    config: &PGDConfig,
    seeds: &[u64],
) -> Result<EscapeStats> {
    if seeds.is_empty() {
        return Err(Error::Parameter("need at least one trial seed".into()));
    }
    if config.step_size > 0.1 {
        return Err(Error::Parameter(
            "step size above 0.1 is outside the landscape's stability range".into(),
        ));
    }
    config.validate()?;

    let labels = map_trials(seeds, |&seed| counterexample_trial(variant, svc, config, seed));

    let mut counts = std::collections::BTreeMap::new();
    for outcome in labels {
        let label = outcome
            .map(|t| t.label)
            .unwrap_or_else(|_| UNDETERMINED_LABEL.to_string());
        *counts.entry(label).or_insert(0) += 1;
    }
    Ok(EscapeStats {
        trials: seeds.len(),
        counts,
        seeds: seeds.to_vec(),
    })
}

/// Outcome of a single counterexample trial.
#[derive(Debug, Clone)]
pub struct CounterexampleTrial {
    pub label: String,
    pub iterations: usize,
    /// Distance of the final y-coordinate from the x-axis; the trial is
    /// only classified once this has decayed below 1e-8.
    pub final_y: f64,
}

/// Runs one gradient-descent trial on the counterexample landscape and
/// classifies where it ended up (see `escape_failure_experiment`).
pub fn counterexample_trial(
    variant: PVariant,
    svc: &SVCSet,
    config: &PGDConfig,
    seed: u64,
) -> Result<CounterexampleTrial> {
    let objective = CounterexampleObjective::new(variant, svc.clone());
    let y_tol = 1e-8;
    let mid_tol = 1e-6;

    let start = random_point(&ManifoldSpec::Box, seed);
    let x0 = match start {
        ManifoldPoint::Box { x, .. } => x,
        _ => unreachable!(),
    };
    let traj = run_pgd(&start, &objective, config)?;
    let (xf, yf) = match traj.final_point() {
        ManifoldPoint::Box { x, y } => (*x, *y),
        _ => unreachable!(),
    };
    let done = |label: &str| {
        Ok(CounterexampleTrial {
            label: label.to_string(),
            iterations: traj.iterations_run,
            final_y: yf.abs(),
        })
    };
    if traj.terminated_by == Termination::RetractionFailure || yf.abs() > y_tol {
        return done(UNDETERMINED_LABEL);
    }
    if svc_membership(x0, svc)? == Membership::InV {
        return done(IN_V_LABEL);
    }
    if let Membership::Removed { a, b } = svc_membership(xf, svc)? {
        if (xf - 0.5 * (a + b)).abs() < mid_tol {
            return done(INTERVAL_MINIMUM_LABEL);
        }
    }
    done(UNDETERMINED_LABEL)
}

/// Samples f on a regular grid over the box and writes a CSV (x, y, f) for
/// external plotting.
pub fn write_landscape_csv<W: Write>(
    out: &mut W,
    objective: &CounterexampleObjective,
    nx: usize,
    ny: usize,
) -> Result<()> {
    if nx < 2 || ny < 2 {
        return Err(Error::Parameter("grid needs at least 2 points per axis".into()));
    }
    writeln!(out, "x,y,f").map_err(|e| Error::Parameter(format!("write failure: {e}")))?;
    for i in 0..nx {
        let x = -1.0 + 3.0 * i as f64 / (nx - 1) as f64;
        for j in 0..ny {
            let y = -1.0 + 2.0 * j as f64 / (ny - 1) as f64;
            let v = objective.ambient_value(&AmbientVector::from_matrix_unchecked(
                nalgebra::DMatrix::from_column_slice(2, 1, &[x, y]),
            ))?;
            writeln!(out, "{x},{y},{v}").map_err(|e| Error::Parameter(format!("write failure: {e}")))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::escape::derive_seeds;
    use crate::pgd::PGDConfig;
    use approx::assert_relative_eq;

    #[test]
    fn measure_follows_the_closed_form() {
        // After L rounds the removed mass is (1/2)(1 - 2^-L).
        for level in [1usize, 5, 20, 48] {
            let svc = build_svc(level).unwrap();
            let expect = 1.0 - 0.5 * (1.0 - 0.5_f64.powi(level as i32));
            assert!((svc.measure() - expect).abs() <= 1e-12, "level {level}");
        }
        assert!(build_svc(0).is_err());
        assert!(build_svc(49).is_err());
    }

    #[test]
    fn interval_materialization_matches_measure() {
        for level in [1usize, 2, 6, 10] {
            let svc = build_svc(level).unwrap();
            let intervals = svc.intervals().unwrap();
            assert_eq!(intervals.len(), 1 << level);
            let total: f64 = intervals.iter().map(|(a, b)| b - a).sum();
            assert_relative_eq!(total, svc.measure(), epsilon = 1e-12);
            let removed = svc.removed().unwrap();
            assert_eq!(removed.len(), (1 << level) - 1);
            let gaps: f64 = removed.iter().map(|(a, b)| b - a).sum();
            assert_relative_eq!(total + gaps, 1.0, epsilon = 1e-12);
        }
        // Deep sets refuse to materialize.
        let deep = build_svc(40).unwrap();
        assert!(matches!(deep.intervals(), Err(Error::Resource(_))));
        assert!(matches!(deep.removed(), Err(Error::Resource(_))));
    }

    #[test]
    fn membership_agrees_with_materialized_intervals() {
        let svc = build_svc(6).unwrap();
        let removed = svc.removed().unwrap();
        for k in 0..=1000 {
            let x = k as f64 / 1000.0;
            let m = svc_membership(x, &svc).unwrap();
            let inside_gap = removed.iter().find(|(a, b)| x > *a && x < *b);
            match (m, inside_gap) {
                (Membership::Removed { a, b }, Some(&(ga, gb))) => {
                    assert_relative_eq!(a, ga, epsilon = 1e-15);
                    assert_relative_eq!(b, gb, epsilon = 1e-15);
                }
                (Membership::InV, None) => {}
                other => panic!("x = {x}: inconsistent membership {other:?}"),
            }
        }
        // End intervals and domain errors.
        assert_eq!(
            svc_membership(-0.5, &svc).unwrap(),
            Membership::Removed { a: -1.0, b: 0.0 }
        );
        assert_eq!(
            svc_membership(1.5, &svc).unwrap(),
            Membership::Removed { a: 1.0, b: 2.0 }
        );
        assert!(svc_membership(2.5, &svc).is_err());
        // First removed middle of round 1 is (3/8, 5/8).
        assert_eq!(
            svc_membership(0.5, &svc).unwrap(),
            Membership::Removed { a: 0.375, b: 0.625 }
        );
    }

    #[test]
    fn variant_a_knot_continuity() {
        let svc = build_svc(8).unwrap();
        for &(a, b) in svc.removed().unwrap().iter().take(40) {
            let len = b - a;
            for knot in [a + 0.25 * len, b - 0.25 * len] {
                let eps = 1e-9 * len;
                let (v_l, d_l) = p_eval(knot - eps, PVariant::A, &svc).unwrap();
                let (v_r, d_r) = p_eval(knot + eps, PVariant::A, &svc).unwrap();
                let scale = v_l.abs().max(1e-300);
                assert!((v_l - v_r).abs() / scale < 1e-6);
                assert!((d_l - d_r).abs() / d_l.abs().max(1e-300) < 1e-5);
                // Closed-form knot values: L^2/16 and derivative L/2.
                assert_relative_eq!(v_l, len * len / 16.0, max_relative = 1e-6);
            }
        }
    }

    #[test]
    fn variant_b_knot_continuity_and_central_curvature() {
        let svc = build_svc(8).unwrap();
        let (a, b) = svc.removed().unwrap()[0];
        let len = b - a;
        let knot = a + 0.25 * len;
        let (v_side, d_side) = bump(knot - 1e-12, a, b, PVariant::B);
        let (v_mid, d_mid) = bump(knot + 1e-12, a, b, PVariant::B);
        assert_relative_eq!(v_side, len.powi(4) / 256.0, max_relative = 1e-9);
        assert_relative_eq!(v_mid, v_side, max_relative = 1e-9);
        assert_relative_eq!(d_side, len.powi(3) / 16.0, max_relative = 1e-6);
        assert_relative_eq!(d_mid, d_side, max_relative = 1e-6);
        // Strictly negative curvature at the midpoint: p''(0) = -21 L^2/16.
        let mid = 0.5 * (a + b);
        let h = 1e-5 * len;
        let (vm, _) = bump(mid - h, a, b, PVariant::B);
        let (v0, _) = bump(mid, a, b, PVariant::B);
        let (vp, _) = bump(mid + h, a, b, PVariant::B);
        let second = (vp - 2.0 * v0 + vm) / (h * h);
        assert_relative_eq!(second, -21.0 * len * len / 16.0, max_relative = 1e-4);
    }

    #[test]
    fn bump_is_nonnegative_and_vanishes_on_v() {
        let svc = build_svc(10).unwrap();
        for variant in [PVariant::A, PVariant::B] {
            for k in 0..=2000 {
                let x = -1.0 + 3.0 * k as f64 / 2000.0;
                let (v, _) = p_eval(x, variant, &svc).unwrap();
                assert!(v >= 0.0, "p({x}) = {v} for {variant:?}");
            }
            // Points of V itself.
            for x in [0.0, 0.25, 1.0] {
                if svc_membership(x, &svc).unwrap() == Membership::InV {
                    assert_eq!(p_eval(x, variant, &svc).unwrap(), (0.0, 0.0));
                }
            }
        }
    }

    #[test]
    fn experiment_classifies_by_initial_membership() {
        let svc = build_svc(20).unwrap();
        let config = PGDConfig {
            step_size: 0.05,
            max_iters: 20_000,
            grad_tol: 1e-12,
            record_every: 20_000,
        };
        let seeds = derive_seeds(3, 400);
        let stats = escape_failure_experiment(PVariant::A, &svc, &config, &seeds).unwrap();
        assert_eq!(stats.trials, 400);
        let in_v = stats.fraction(IN_V_LABEL);
        // Crude band around the measure-1/6 prediction for a small sample.
        assert!(in_v > 0.05 && in_v < 0.35, "in-V fraction {in_v}");
        assert!(stats.fraction(INTERVAL_MINIMUM_LABEL) > 0.5);
        // Reproducible.
        let again = escape_failure_experiment(PVariant::A, &svc, &config, &seeds).unwrap();
        assert_eq!(stats.counts, again.counts);
        // Oversized steps rejected.
        let bad = PGDConfig { step_size: 0.2, ..config };
        assert!(escape_failure_experiment(PVariant::A, &svc, &bad, &seeds).is_err());
    }

    #[test]
    fn landscape_csv_shape() {
        let svc = build_svc(4).unwrap();
        let obj = CounterexampleObjective::new(PVariant::A, svc);
        let mut buf = Vec::new();
        write_landscape_csv(&mut buf, &obj, 5, 3).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 5 * 3);
        assert!(text.starts_with("x,y,f\n"));
    }
}
