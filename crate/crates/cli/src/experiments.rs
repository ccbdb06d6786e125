//! Experiment dispatch: each experiment maps a resolved config to per-trial
//! records, an aggregate JSON object, and (where meaningful) convergence
//! series on a fixed iteration grid.

use anyhow::{anyhow, Context, Result};
use nalgebra::{DMatrix, DVector};
use serde_json::{json, Map, Value};

use saddle_lab::eigen::{
    assemble_operator, dense_spectrum, refine_eigenstate, subspace_distance, KPConfig,
    LinearSphereObjective, NonlinearSphereObjective, StiefelTraceObjective,
};
use saddle_lab::manifold::ManifoldPoint;
use saddle_lab::parallel::map_trials;
use saddle_lab::phase_retrieval::{
    ring_saddle_direction, ExpectationObjective, Measurements, RealizationObjective, RingRegion,
};
use saddle_lab::svc::{build_svc, counterexample_trial, PVariant, IN_V_LABEL};
use saddle_lab::{
    classify_critical_point, derive_seeds, hessian_quadform, random_point,
    retraction_order_check, run_pgd, AmbientVector, CriticalPointClass, HessianProbe,
    ManifoldSpec, Objective, PGDConfig, Trajectory, UNDETERMINED_LABEL,
};

use crate::config::{Experiment, ExperimentConfig};

pub const FAILED_LABEL: &str = "failed";

#[derive(Debug, Clone)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub label: String,
    pub iterations: usize,
    pub final_error: f64,
    /// log10 error sampled on the shared iteration grid; only populated for
    /// trials that count toward the convergence bands.
    pub series: Option<Vec<f64>>,
}

#[derive(Debug)]
pub struct ExperimentOutcome {
    pub records: Vec<TrialRecord>,
    /// Iteration grid shared by all series (0, record_every, ...).
    pub grid: Vec<usize>,
    /// Experiment-specific aggregate fields merged into result.json.
    pub extra: Map<String, Value>,
}

impl ExperimentOutcome {
    pub fn all_failed(&self) -> bool {
        self.records.iter().all(|r| r.label == FAILED_LABEL)
    }
}

fn pgd_config(config: &ExperimentConfig) -> PGDConfig {
    PGDConfig {
        step_size: config.step_size,
        max_iters: config.max_iters,
        grad_tol: config.grad_tol,
        record_every: config.record_every,
    }
}

fn iteration_grid(config: &ExperimentConfig) -> Vec<usize> {
    (0..=config.max_iters / config.record_every)
        .map(|k| k * config.record_every)
        .collect()
}

/// Deterministic unit signal shared by the phase-retrieval experiments.
fn signal(n: usize) -> DVector<f64> {
    DVector::from_fn(n, |i, _| ((i * 37 + 11) as f64).sin()).normalize()
}

/// Resamples per-iterate errors onto the shared grid: each grid point takes
/// the last recorded value at or before it, so converged trials hold their
/// final error.
fn resample_log10(traj: &Trajectory, errors: &[f64], grid: &[usize]) -> Vec<f64> {
    let mut out = Vec::with_capacity(grid.len());
    let mut idx = 0usize;
    for &g in grid {
        while idx + 1 < traj.recorded_iters.len() && traj.recorded_iters[idx + 1] <= g {
            idx += 1;
        }
        out.push(errors[idx.min(errors.len() - 1)].max(1e-300).log10());
    }
    out
}

/// Runs one PGD trial per seed and labels the limit. `error_of` maps an
/// iterate to the plotted error; `label_of` maps (final point, final error)
/// to (label, counts-toward-series).
fn pgd_experiment<O, E, L>(
    config: &ExperimentConfig,
    spec: &ManifoldSpec,
    objective: &O,
    error_of: E,
    label_of: L,
) -> Vec<TrialRecord>
where
    O: Objective + Sync,
    E: Fn(&ManifoldPoint) -> f64 + Sync,
    L: Fn(&ManifoldPoint, f64) -> (String, bool) + Sync,
{
    let solver = pgd_config(config);
    let grid = iteration_grid(config);
    let seeds = derive_seeds(config.seed, config.trials);
    let indexed: Vec<(usize, u64)> = seeds.into_iter().enumerate().collect();
    let mut records = map_trials(&indexed, |&(trial, seed)| {
        let start = random_point(spec, seed);
        let traj = match run_pgd(&start, objective, &solver) {
            Ok(t) => t,
            Err(_) => {
                return TrialRecord {
                    trial,
                    seed,
                    label: FAILED_LABEL.to_string(),
                    iterations: 0,
                    final_error: f64::NAN,
                    series: None,
                }
            }
        };
        let errors: Vec<f64> = traj.iterates.iter().map(&error_of).collect();
        let final_error = *errors.last().unwrap();
        let (label, in_band) = label_of(traj.final_point(), final_error);
        TrialRecord {
            trial,
            seed,
            label,
            iterations: traj.iterations_run,
            final_error,
            series: in_band.then(|| resample_log10(&traj, &errors, &grid)),
        }
    });
    records.sort_by_key(|r| r.trial);
    records
}

fn count_extra(records: &[TrialRecord]) -> Map<String, Value> {
    let mut counts = std::collections::BTreeMap::new();
    for r in records {
        *counts.entry(r.label.clone()).or_insert(0usize) += 1;
    }
    let trials = records.len() as f64;
    let mut extra = Map::new();
    extra.insert("counts".to_string(), json!(counts));
    extra.insert(
        "fractions".to_string(),
        json!(counts
            .iter()
            .map(|(k, &v)| (k.clone(), v as f64 / trials))
            .collect::<std::collections::BTreeMap<_, _>>()),
    );
    extra
}

fn phase_experiment(config: &ExperimentConfig, expectation: bool) -> Result<ExperimentOutcome> {
    let x = signal(config.n);
    let x_outer = &x * x.transpose();
    let ring = RingRegion::new(0.15).map_err(|e| anyhow!("{e}"))?;
    let tol = config.tol;
    let error_of = |p: &ManifoldPoint| match p {
        ManifoldPoint::PsdRankOne { z } => (z * z.transpose() - &x_outer).norm() / x_outer.norm(),
        _ => f64::NAN,
    };
    let label_of = |p: &ManifoldPoint, err: f64| {
        if err < tol {
            ("minimum".to_string(), true)
        } else if let ManifoldPoint::PsdRankOne { z } = p {
            if ring.contains(z, &x) {
                ("ring-saddle".to_string(), false)
            } else {
                (UNDETERMINED_LABEL.to_string(), false)
            }
        } else {
            (UNDETERMINED_LABEL.to_string(), false)
        }
    };
    let spec = ManifoldSpec::PsdRankOne { n: config.n };
    let records = if expectation {
        let objective = ExpectationObjective::new(x.clone()).map_err(|e| anyhow!("{e}"))?;
        pgd_experiment(config, &spec, &objective, error_of, label_of)
    } else {
        let meas = Measurements::gaussian(x.clone(), config.measurements, config.seed ^ 0x6d65)
            .map_err(|e| anyhow!("{e}"))?;
        let objective = RealizationObjective::new(meas);
        pgd_experiment(config, &spec, &objective, error_of, label_of)
    };
    let extra = count_extra(&records);
    Ok(ExperimentOutcome { grid: iteration_grid(config), records, extra })
}

fn eig_sphere_linear(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let op = assemble_operator(&KPConfig { n: config.n, ..KPConfig::default() })
        .map_err(|e| anyhow!("{e}"))?;
    let (vals, vecs) = dense_spectrum(&op.a);
    let objective = LinearSphereObjective::new(&op.a).map_err(|e| anyhow!("{e}"))?;
    let ground = vecs.column(0).into_owned();
    let ground_val = vals[0];
    let tol = config.tol;
    let obj_err = objective.clone();
    let records = pgd_experiment(
        config,
        &ManifoldSpec::Sphere { n: config.n },
        &objective,
        move |p: &ManifoldPoint| match p {
            ManifoldPoint::Sphere { z } => (obj_err.rayleigh(z) - ground_val).abs(),
            _ => f64::NAN,
        },
        move |p: &ManifoldPoint, err: f64| match p {
            ManifoldPoint::Sphere { z }
                if err < tol && (z - &ground).norm().min((z + &ground).norm()) < 1e-3 =>
            {
                ("ground-state".to_string(), true)
            }
            _ => ("excited-or-undetermined".to_string(), false),
        },
    );
    let mut extra = count_extra(&records);
    extra.insert("ground_eigenvalue".to_string(), json!(vals[0]));
    Ok(ExperimentOutcome { grid: iteration_grid(config), records, extra })
}

fn eig_sphere_nonlinear(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let op = assemble_operator(&KPConfig { n: config.n, ..KPConfig::default() })
        .map_err(|e| anyhow!("{e}"))?;
    let objective =
        NonlinearSphereObjective::new(&op.a, config.beta).map_err(|e| anyhow!("{e}"))?;
    let a = op.a.clone();
    let beta = config.beta;
    let tol = config.tol;
    let obj_err = objective.clone();
    let obj_label = objective.clone();
    let records = pgd_experiment(
        config,
        &ManifoldSpec::Sphere { n: config.n },
        &objective,
        move |p: &ManifoldPoint| match p {
            ManifoldPoint::Sphere { z } => obj_err.eigen_residual(z),
            _ => f64::NAN,
        },
        move |p: &ManifoldPoint, _err: f64| match p {
            ManifoldPoint::Sphere { z } => match refine_eigenstate(&a, beta, z, 100) {
                Ok((v, _)) if obj_label.eigen_residual(&v) <= tol => {
                    ("eigenstate".to_string(), true)
                }
                _ => (UNDETERMINED_LABEL.to_string(), false),
            },
            _ => (UNDETERMINED_LABEL.to_string(), false),
        },
    );
    let mut extra = count_extra(&records);
    extra.insert("beta".to_string(), json!(config.beta));
    Ok(ExperimentOutcome { grid: iteration_grid(config), records, extra })
}

fn eig_stiefel(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let op = assemble_operator(&KPConfig { n: config.n, ..KPConfig::default() })
        .map_err(|e| anyhow!("{e}"))?;
    let (vals, vecs) = dense_spectrum(&op.a);
    let objective =
        StiefelTraceObjective::new(&op.a, config.subspace).map_err(|e| anyhow!("{e}"))?;
    let lead = vecs.columns(0, config.subspace).into_owned();
    let tol = config.tol;
    let records = pgd_experiment(
        config,
        &ManifoldSpec::Stiefel { n: config.n, m: config.subspace },
        &objective,
        move |p: &ManifoldPoint| match p {
            ManifoldPoint::Stiefel { frame } => subspace_distance(frame, &lead),
            _ => f64::NAN,
        },
        move |_p: &ManifoldPoint, err: f64| {
            if err <= tol {
                ("subspace".to_string(), true)
            } else {
                (UNDETERMINED_LABEL.to_string(), false)
            }
        },
    );
    let mut extra = count_extra(&records);
    extra.insert(
        "leading_eigenvalues".to_string(),
        json!(vals[..config.subspace].to_vec()),
    );
    Ok(ExperimentOutcome { grid: iteration_grid(config), records, extra })
}

fn svc_counterexample(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let svc = build_svc(config.level).map_err(|e| anyhow!("{e}"))?;
    let variant = if config.variant == "A" { PVariant::A } else { PVariant::B };
    let solver = pgd_config(config);
    solver.validate().map_err(|e| anyhow!("{e}"))?;
    if config.step_size > 0.1 {
        return Err(anyhow!("step_size above 0.1 is outside the landscape's stability range"));
    }
    let seeds = derive_seeds(config.seed, config.trials);
    let indexed: Vec<(usize, u64)> = seeds.into_iter().enumerate().collect();
    let mut records = map_trials(&indexed, |&(trial, seed)| {
        match counterexample_trial(variant, &svc, &solver, seed) {
            Ok(t) => TrialRecord {
                trial,
                seed,
                label: t.label,
                iterations: t.iterations,
                final_error: t.final_y,
                series: None,
            },
            Err(_) => TrialRecord {
                trial,
                seed,
                label: FAILED_LABEL.to_string(),
                iterations: 0,
                final_error: f64::NAN,
                series: None,
            },
        }
    });
    records.sort_by_key(|r| r.trial);
    let in_v = records.iter().filter(|r| r.label == IN_V_LABEL).count() as f64
        / records.len() as f64;
    let mut extra = count_extra(&records);
    extra.insert("in_v_fraction".to_string(), json!(in_v));
    extra.insert("svc_measure".to_string(), json!(svc.measure()));
    Ok(ExperimentOutcome { grid: Vec::new(), records, extra })
}

fn class_label(class: CriticalPointClass) -> &'static str {
    match class {
        CriticalPointClass::StrictSaddleNondegenerate => "strict-saddle-nondegenerate",
        CriticalPointClass::StrictSaddle => "strict-saddle",
        CriticalPointClass::LocalMinimizer => "local-minimizer",
        CriticalPointClass::Degenerate => "degenerate",
    }
}

/// Places random points on the expectation-landscape saddle ring, probes
/// the Hessian along the analytic escape direction, and classifies each
/// point from its full tangent spectrum.
fn saddle_probe(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let x = signal(config.n);
    let objective = ExpectationObjective::new(x.clone()).map_err(|e| anyhow!("{e}"))?;
    let expected = -12.0 * x.norm_squared();
    let seeds = derive_seeds(config.seed, config.trials);
    let indexed: Vec<(usize, u64)> = seeds.into_iter().enumerate().collect();
    let probe = HessianProbe::analytic();
    let mut records = map_trials(&indexed, |&(trial, seed)| {
        let run = || -> saddle_lab::Result<(String, f64)> {
            let mut u = match random_point(&ManifoldSpec::Sphere { n: config.n }, seed) {
                ManifoldPoint::Sphere { z } => z,
                _ => unreachable!(),
            };
            u -= &x * (x.dot(&u) / x.norm_squared());
            let z = u.normalize() * (x.norm_squared() / 3.0).sqrt();
            let point = ManifoldPoint::psd_rank_one(z)?;
            let xi = ring_saddle_direction(&point, &x)?;
            let quad = hessian_quadform(&objective, &point, &xi, &probe)?;
            let report = classify_critical_point(&objective, &point, &probe, 1e-8)?;
            let deviation = (quad - expected).abs() / expected.abs();
            Ok((class_label(report.classification).to_string(), deviation))
        };
        match run() {
            Ok((label, deviation)) => TrialRecord {
                trial,
                seed,
                label,
                iterations: 0,
                final_error: deviation,
                series: None,
            },
            Err(_) => TrialRecord {
                trial,
                seed,
                label: FAILED_LABEL.to_string(),
                iterations: 0,
                final_error: f64::NAN,
                series: None,
            },
        }
    });
    records.sort_by_key(|r| r.trial);
    let mut extra = count_extra(&records);
    extra.insert("expected_quadform".to_string(), json!(expected));
    Ok(ExperimentOutcome { grid: Vec::new(), records, extra })
}

/// Fits retraction-order slopes on every supported geometry from seeded
/// random tangent directions.
fn retraction_order(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let n = config.n;
    let specs: [(&str, ManifoldSpec); 5] = [
        ("sphere", ManifoldSpec::Sphere { n }),
        ("stiefel", ManifoldSpec::Stiefel { n, m: 2.min(n - 1) }),
        ("fixed-rank", ManifoldSpec::FixedRankAsym { nrows: n, ncols: n, rank: 2.min(n - 1) }),
        ("psd-rank-one", ManifoldSpec::PsdRankOne { n }),
        ("box", ManifoldSpec::Box),
    ];
    let alphas = [1e-1, 1e-2, 1e-3, 1e-4];
    let seeds = derive_seeds(config.seed, config.trials);
    let mut records = Vec::new();
    let mut slope_sums: std::collections::BTreeMap<&str, (f64, f64)> = Default::default();
    for (trial, &seed) in seeds.iter().enumerate() {
        let mut ok = true;
        let mut min_first = f64::INFINITY;
        for (name, spec) in &specs {
            let p = random_point(spec, seed);
            let (r, c) = p.ambient_shape();
            let raw = DMatrix::from_fn(r, c, |i, j| {
                ((i * 7 + j * 3 + trial * 13 + 1) as f64).sin()
            });
            let xi = p
                .project_tangent(&AmbientVector::from_matrix(raw).map_err(|e| anyhow!("{e}"))?)
                .map_err(|e| anyhow!("{e}"))?;
            let rep = retraction_order_check(&p, &xi, &alphas).map_err(|e| anyhow!("{e}"))?;
            let entry = slope_sums.entry(name).or_insert((0.0, 0.0));
            entry.0 += rep.slope_first.min(1e6);
            entry.1 += rep.slope_second.min(1e6);
            ok &= rep.slope_first >= 0.9;
            if *name == "psd-rank-one" {
                ok &= rep.slope_second >= 1.9;
            }
            min_first = min_first.min(rep.slope_first);
        }
        records.push(TrialRecord {
            trial,
            seed,
            label: if ok { "order-ok" } else { "order-violation" }.to_string(),
            iterations: 0,
            final_error: min_first,
            series: None,
        });
    }
    let mut extra = count_extra(&records);
    let trials = config.trials as f64;
    let slopes: std::collections::BTreeMap<&str, Value> = slope_sums
        .into_iter()
        .map(|(name, (f, s))| (name, json!({ "first": f / trials, "second": s / trials })))
        .collect();
    extra.insert("mean_slopes".to_string(), json!(slopes));
    Ok(ExperimentOutcome { grid: Vec::new(), records, extra })
}

pub fn run(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    config.validate().map_err(|e| anyhow!(e))?;
    match config.experiment {
        Experiment::PhaseExpectation => phase_experiment(config, true),
        Experiment::PhaseRealization => phase_experiment(config, false),
        Experiment::EigSphereLinear => eig_sphere_linear(config),
        Experiment::EigSphereNonlinear => eig_sphere_nonlinear(config),
        Experiment::EigStiefel => eig_stiefel(config),
        Experiment::SvcCounterexample => svc_counterexample(config),
        Experiment::SaddleProbe => saddle_probe(config),
        Experiment::RetractionOrder => retraction_order(config),
    }
    .with_context(|| format!("experiment {} failed", config.experiment))
}
