//! Objective functions over an ambient matrix space, restricted to a
//! manifold by the solver. Implementations expose the smooth ambient
//! extension so Riemannian quantities can be assembled by projection.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::ambient::AmbientVector;
use crate::error::{Error, Result};
use crate::manifold::{gaussian_matrix, ManifoldPoint, TangentVector};

/// A twice-differentiable function on the ambient space. Only `value` and
/// `ambient_gradient` are mandatory; the remaining hooks unlock Hessian
/// probing, finite-difference checks and structure-exploiting fast paths.
pub trait Objective {
    /// Shape of ambient arguments this objective accepts.
    fn ambient_shape(&self) -> (usize, usize);

    fn value(&self, point: &ManifoldPoint) -> Result<f64> {
        self.ambient_value(&point.ambient())
    }

    fn ambient_gradient(&self, point: &ManifoldPoint) -> Result<AmbientVector> {
        self.ambient_gradient_at(&point.ambient())
    }

    /// Value of the smooth extension at an arbitrary ambient argument.
    fn ambient_value(&self, y: &AmbientVector) -> Result<f64>;

    /// Euclidean gradient of the smooth extension.
    fn ambient_gradient_at(&self, y: &AmbientVector) -> Result<AmbientVector>;

    /// Euclidean Hessian-vector product of the smooth extension at `y`.
    fn ambient_hessian_action(&self, y: &AmbientVector, xi: &AmbientVector) -> Result<AmbientVector> {
        let _ = (y, xi);
        Err(Error::Capability("an analytic Hessian action".into()))
    }

    /// Action of the ambient gradient matrix on a vector, for objectives on
    /// symmetric-matrix domains where forming the n-by-n gradient is
    /// wasteful. `G u` with `G = grad f(z z^T)`.
    fn gradient_vec_action(&self, point: &ManifoldPoint, u: &DVector<f64>) -> Option<DVector<f64>> {
        let _ = (point, u);
        None
    }
}

/// Riemannian gradient: tangent-space (or, at rank-deficient bounded-rank
/// points, tangent-cone) projection of the ambient gradient.
pub fn riemannian_gradient<O: Objective + ?Sized>(
    objective: &O,
    point: &ManifoldPoint,
) -> Result<TangentVector> {
    let g = objective.ambient_gradient(point)?;
    match point {
        ManifoldPoint::FixedRankAsym { max_rank, .. } if point.rank() < *max_rank => {
            point.project_tangent_cone(&g)
        }
        _ => point.project_tangent(&g),
    }
}

/// Result of a central-difference derivative check along random directions.
#[derive(Debug, Clone)]
pub struct GradientCheckReport {
    pub max_relative_error: f64,
    pub directions: usize,
    pub step: f64,
}

impl GradientCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_relative_error <= tol
    }
}

/// Compares the analytic ambient gradient against central differences of
/// the ambient value along seeded Gaussian directions, evaluated at the
/// point's ambient embedding.
pub fn fd_gradient_check<O: Objective + ?Sized>(
    objective: &O,
    point: &ManifoldPoint,
    step: f64,
    directions: usize,
    seed: u64,
) -> Result<GradientCheckReport> {
    if !(1e-7..=1e-3).contains(&step) {
        return Err(Error::Parameter(format!(
            "step {step} outside [1e-7, 1e-3]"
        )));
    }
    let y = &point.ambient();
    if directions == 0 {
        return Err(Error::Parameter("need at least one direction".into()));
    }
    let g = objective.ambient_gradient_at(y)?;
    let (r, c) = y.shape();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    for _ in 0..directions {
        let mut d = gaussian_matrix(r, c, &mut rng);
        d /= d.norm();
        let d = AmbientVector::from_matrix_unchecked(d);
        let plus = objective.ambient_value(&y.add(&d.scale(step)))?;
        let minus = objective.ambient_value(&y.add(&d.scale(-step)))?;
        let fd = (plus - minus) / (2.0 * step);
        let analytic = g.dot(&d);
        let scale = analytic.abs().max(fd.abs()).max(1.0);
        worst = worst.max((fd - analytic).abs() / scale);
    }
    Ok(GradientCheckReport {
        max_relative_error: worst,
        directions,
        step,
    })
}
