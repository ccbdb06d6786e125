//! Fixed-step projected gradient descent: Z_{n+1} = R(Z_n - a P_T grad f),
//! with trajectory recording and limit-point classification.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::manifold::ManifoldPoint;
use crate::objective::{riemannian_gradient, Objective};

/// Solver parameters. The step size is constant over the whole run.
#[derive(Debug, Clone)]
pub struct PGDConfig {
    pub step_size: f64,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub record_every: usize,
}

impl Default for PGDConfig {
    fn default() -> Self {
        PGDConfig {
            step_size: 0.01,
            max_iters: 100_000,
            grad_tol: 1e-10,
            record_every: 100,
        }
    }
}

impl PGDConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size.is_finite() && self.step_size > 0.0) {
            return Err(Error::Parameter(format!(
                "step size {} must be positive",
                self.step_size
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::Parameter("max_iters must be at least 1".into()));
        }
        if !(self.grad_tol.is_finite() && self.grad_tol >= 0.0) {
            return Err(Error::Parameter("grad_tol must be nonnegative".into()));
        }
        if self.record_every == 0 {
            return Err(Error::Parameter("record_every must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    GradTol,
    MaxIters,
    RetractionFailure,
}

/// Recorded history of a run: iterates subsampled at the configured stride
/// (always including iteration 0 and the final state), with objective
/// values and Riemannian gradient norms at the same indices.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub iterates: Vec<ManifoldPoint>,
    pub recorded_iters: Vec<usize>,
    pub f_values: Vec<f64>,
    pub grad_norms: Vec<f64>,
    pub terminated_by: Termination,
    pub iterations_run: usize,
}

impl Trajectory {
    pub fn final_point(&self) -> &ManifoldPoint {
        self.iterates.last().expect("trajectory records >= 1 point")
    }

    pub fn final_grad_norm(&self) -> f64 {
        *self.grad_norms.last().expect("trajectory records >= 1 point")
    }

    pub fn final_value(&self) -> f64 {
        *self.f_values.last().expect("trajectory records >= 1 point")
    }
}

/// One iteration of Eq.-style projected gradient descent. Rank-deficient
/// bounded-rank points project onto the tangent cone instead of the tangent
/// space; PSD rank-1 points with a `gradient_vec_action` fast path avoid
/// forming any n-by-n matrix.
pub fn pgd_step<O: Objective + ?Sized>(
    point: &ManifoldPoint,
    objective: &O,
    step_size: f64,
) -> Result<ManifoldPoint> {
    if !(step_size.is_finite() && step_size > 0.0) {
        return Err(Error::Parameter(format!(
            "step size {step_size} must be positive"
        )));
    }
    if let ManifoldPoint::PsdRankOne { z } = point {
        if let Some(gz) = objective.gradient_vec_action(point, z) {
            return psd_fast_step(z, &gz, step_size);
        }
    }
    let grad = riemannian_gradient(objective, point)?;
    point.retract_ambient(&grad.ambient().scale(-step_size))
}

/// PGD step on the PSD rank-1 manifold using only the gradient-times-factor
/// product. The update Z - a xi lives in span{u, v}, so its top eigenpair
/// comes from a 2x2 symmetric problem.
fn psd_fast_step(z: &DVector<f64>, gz: &DVector<f64>, step_size: f64) -> Result<ManifoldPoint> {
    if gz.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("gradient action".into()));
    }
    let rho = z.norm();
    let u = z / rho;
    let gu = gz / rho;
    let w = u.dot(&gu);
    let v = &gu - &u * w;
    let vnorm = v.norm();
    // In {u, v/|v|} coordinates, Z - a xi = [[rho^2 - a w, -a |v|], [-a |v|, 0]].
    let d = rho * rho - step_size * w;
    let b = step_size * vnorm;
    if b <= 1e-300 {
        if d <= 0.0 {
            return Err(Error::DegenerateRetraction(
                "no positive eigenvalue for the PSD rank-1 retraction".into(),
            ));
        }
        return Ok(ManifoldPoint::PsdRankOne { z: u * d.sqrt() });
    }
    let lambda = 0.5 * (d + (d * d + 4.0 * b * b).sqrt());
    // Top eigenvector direction (1, -b/lambda) in the {u, q} basis.
    let q = v / vnorm;
    let mut dir = u - q * (b / lambda);
    dir /= dir.norm();
    Ok(ManifoldPoint::PsdRankOne {
        z: dir * lambda.sqrt(),
    })
}

/// Runs PGD from `start` until the Riemannian gradient norm drops below
/// `grad_tol`, the iteration budget is exhausted, or a retraction fails
/// (the partial trajectory is still returned in the last case).
pub fn run_pgd<O: Objective + ?Sized>(
    start: &ManifoldPoint,
    objective: &O,
    config: &PGDConfig,
) -> Result<Trajectory> {
    config.validate()?;
    start.check_invariants()?;

    let mut traj = Trajectory {
        iterates: Vec::new(),
        recorded_iters: Vec::new(),
        f_values: Vec::new(),
        grad_norms: Vec::new(),
        terminated_by: Termination::MaxIters,
        iterations_run: 0,
    };
    let record = |iter: usize, p: &ManifoldPoint, f: f64, g: f64, traj: &mut Trajectory| {
        if traj.recorded_iters.last() == Some(&iter) {
            return;
        }
        traj.recorded_iters.push(iter);
        traj.iterates.push(p.clone());
        traj.f_values.push(f);
        traj.grad_norms.push(g);
    };

    let mut point = start.clone();
    let mut iter = 0usize;
    loop {
        // One gradient evaluation per iteration, reused for both the
        // stopping test and the step.
        let plan = match StepPlan::at(objective, &point) {
            Ok(plan) => plan,
            Err(e) => {
                if traj.iterates.is_empty() {
                    return Err(e);
                }
                traj.terminated_by = Termination::RetractionFailure;
                traj.iterations_run = iter;
                return Ok(traj);
            }
        };
        let gnorm = plan.grad_norm();
        let stop = gnorm < config.grad_tol;
        if stop || iter % config.record_every == 0 || iter == config.max_iters {
            let f = match objective.value(&point) {
                Ok(f) if f.is_finite() => f,
                _ => {
                    traj.terminated_by = Termination::RetractionFailure;
                    traj.iterations_run = iter;
                    return Ok(traj);
                }
            };
            record(iter, &point, f, gnorm, &mut traj);
        }
        if stop {
            traj.terminated_by = Termination::GradTol;
            traj.iterations_run = iter;
            return Ok(traj);
        }
        if iter == config.max_iters {
            traj.terminated_by = Termination::MaxIters;
            traj.iterations_run = iter;
            return Ok(traj);
        }
        match plan.apply(&point, config.step_size) {
            Ok(next) => point = next,
            Err(_) => {
                traj.terminated_by = Termination::RetractionFailure;
                traj.iterations_run = iter;
                return Ok(traj);
            }
        }
        iter += 1;
    }
}

/// Gradient information for one iteration: either the projected gradient
/// itself, or the raw factor action for the PSD rank-1 fast path.
enum StepPlan {
    Generic(crate::manifold::TangentVector),
    PsdFast {
        gz: DVector<f64>,
        grad_norm: f64,
    },
}

impl StepPlan {
    fn at<O: Objective + ?Sized>(objective: &O, point: &ManifoldPoint) -> Result<Self> {
        if let ManifoldPoint::PsdRankOne { z } = point {
            if let Some(gz) = objective.gradient_vec_action(point, z) {
                if gz.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite("gradient action".into()));
                }
                // |xi|_F^2 = w^2 + 2 |v|^2 for xi = w uu^T + uv^T + vu^T.
                let rho = z.norm();
                let u = z / rho;
                let gu = &gz / rho;
                let w = u.dot(&gu);
                let v = gu - u * w;
                let grad_norm = (w * w + 2.0 * v.norm_squared()).sqrt();
                return Ok(StepPlan::PsdFast { gz, grad_norm });
            }
        }
        Ok(StepPlan::Generic(riemannian_gradient(objective, point)?))
    }

    fn grad_norm(&self) -> f64 {
        match self {
            StepPlan::Generic(grad) => grad.norm(),
            StepPlan::PsdFast { grad_norm, .. } => *grad_norm,
        }
    }

    fn apply(&self, point: &ManifoldPoint, step_size: f64) -> Result<ManifoldPoint> {
        match self {
            StepPlan::Generic(grad) => {
                point.retract_ambient(&grad.ambient().scale(-step_size))
            }
            StepPlan::PsdFast { gz, .. } => match point {
                ManifoldPoint::PsdRankOne { z } => psd_fast_step(z, gz, step_size),
                _ => Err(Error::Misuse("fast path requires a PSD rank-1 point".into())),
            },
        }
    }
}

/// A labelled region of the manifold used to classify PGD limits. When
/// `requires_grad_tol` is set, membership additionally demands the final
/// gradient norm be below it — this screens out slow transients that merely
/// pass near a saddle set.
pub struct LimitClass {
    pub label: String,
    pub requires_grad_tol: Option<f64>,
    pub predicate: Box<dyn Fn(&ManifoldPoint, f64) -> bool + Send + Sync>,
}

impl LimitClass {
    pub fn new<F>(label: &str, predicate: F) -> Self
    where
        F: Fn(&ManifoldPoint, f64) -> bool + Send + Sync + 'static,
    {
        LimitClass {
            label: label.to_string(),
            requires_grad_tol: None,
            predicate: Box::new(predicate),
        }
    }

    pub fn with_grad_tol(mut self, tol: f64) -> Self {
        self.requires_grad_tol = Some(tol);
        self
    }
}

pub const UNDETERMINED_LABEL: &str = "undetermined";

/// Returns the label of the first reference region containing the final
/// iterate, or `"undetermined"`.
pub fn classify_limit(
    trajectory: &Trajectory,
    references: &[LimitClass],
    tol: f64,
) -> Result<String> {
    if references.is_empty() {
        return Err(Error::Misuse("empty reference list".into()));
    }
    let point = trajectory.final_point();
    let grad_norm = trajectory.final_grad_norm();
    for class in references {
        if let Some(required) = class.requires_grad_tol {
            if grad_norm >= required {
                continue;
            }
        }
        if (class.predicate)(point, tol) {
            return Ok(class.label.clone());
        }
    }
    Ok(UNDETERMINED_LABEL.to_string())
}
