//! Riemannian Hessian quadratic forms, dense tangent spectra, critical
//! point classification and a finite-difference check of the linearized
//! PGD map.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::ambient::AmbientVector;
use crate::error::{Error, Result};
use crate::manifold::{sym, ManifoldPoint, TangentVector};
use crate::objective::{riemannian_gradient, Objective};
use crate::pgd::pgd_step;

/// Largest tangent dimension for which spectra are computed densely.
pub const DENSE_SPECTRUM_LIMIT: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HessianMode {
    /// Closed-form curvature correction with the objective's analytic
    /// ambient Hessian action.
    Analytic,
    /// Second central difference of t -> f(R(t xi)) through a second-order
    /// retraction.
    RetractionComposition,
    /// Closed-form correction with the ambient Hessian action replaced by
    /// a central difference of the ambient gradient.
    FiniteDifference,
}

#[derive(Debug, Clone, Copy)]
pub struct HessianProbe {
    pub mode: HessianMode,
    pub fd_step: f64,
}

impl HessianProbe {
    pub fn analytic() -> Self {
        HessianProbe {
            mode: HessianMode::Analytic,
            fd_step: 1e-4,
        }
    }

    pub fn retraction_composition(fd_step: f64) -> Self {
        HessianProbe {
            mode: HessianMode::RetractionComposition,
            fd_step,
        }
    }

    pub fn finite_difference(fd_step: f64) -> Self {
        HessianProbe {
            mode: HessianMode::FiniteDifference,
            fd_step,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.mode != HessianMode::Analytic && !(1e-6..=1e-2).contains(&self.fd_step) {
            return Err(Error::Parameter(format!(
                "fd step {} outside [1e-6, 1e-2]",
                self.fd_step
            )));
        }
        Ok(())
    }
}

/// Ambient Hessian action, analytic or finite-difference depending on mode.
fn ambient_hess_action<O: Objective + ?Sized>(
    objective: &O,
    probe: &HessianProbe,
    y: &AmbientVector,
    xi: &AmbientVector,
) -> Result<AmbientVector> {
    match probe.mode {
        HessianMode::FiniteDifference => {
            let scale = xi.norm();
            if scale == 0.0 {
                return Ok(xi.clone());
            }
            let h = probe.fd_step / scale;
            let gp = objective.ambient_gradient_at(&y.add(&xi.scale(h)))?;
            let gm = objective.ambient_gradient_at(&y.add(&xi.scale(-h)))?;
            Ok(gp.sub(&gm).scale(1.0 / (2.0 * h)))
        }
        _ => objective.ambient_hessian_action(y, xi),
    }
}

/// Curvature-corrected Riemannian quadratic form from the ambient gradient
/// and an ambient Hessian action.
fn analytic_quadform<O: Objective + ?Sized>(
    objective: &O,
    probe: &HessianProbe,
    point: &ManifoldPoint,
    xi: &TangentVector,
) -> Result<f64> {
    let y = point.ambient();
    let grad = objective.ambient_gradient(point)?;
    let hxx = ambient_hess_action(objective, probe, &y, xi.ambient())?.dot(xi.ambient());
    match point {
        ManifoldPoint::Sphere { z } => {
            let zg = grad.column_vector()?.dot(z);
            Ok(hxx - zg * xi.ambient().matrix().norm_squared())
        }
        ManifoldPoint::Stiefel { frame } => {
            let s = sym(&(frame.transpose() * grad.matrix()));
            let xim = xi.ambient().matrix();
            let gram = xim.transpose() * xim;
            Ok(hxx - s.dot(&gram))
        }
        ManifoldPoint::PsdRankOne { z } => {
            let parts = xi
                .psd_parts()
                .ok_or_else(|| Error::Misuse("tangent lacks PSD structure".into()))?;
            let rho2 = z.norm_squared();
            // Second-order term of the projection retraction:
            // R(Z + xi) = Z + xi + v v^T / |Z|_F + O(|xi|^3).
            let eta = &parts.v * parts.v.transpose() / rho2;
            Ok(hxx + 2.0 * grad.matrix().dot(&eta))
        }
        ManifoldPoint::Box { .. } => Ok(hxx),
        ManifoldPoint::FixedRankAsym { .. } => Err(Error::Capability(
            "an analytic Hessian on the bounded-rank variety".into(),
        )),
    }
}

/// Second-order retraction used only for Hessian probing: polar instead of
/// QR on Stiefel, the standard retraction elsewhere.
fn second_order_retract(point: &ManifoldPoint, step: &AmbientVector) -> Result<ManifoldPoint> {
    match point {
        ManifoldPoint::Stiefel { frame } => {
            let y = frame + step.matrix();
            let gram = y.transpose() * &y;
            let eig = SymmetricEigen::new(gram);
            for i in 0..eig.eigenvalues.len() {
                if eig.eigenvalues[i] <= 1e-300 {
                    return Err(Error::DegenerateRetraction(
                        "rank-deficient frame update".into(),
                    ));
                }
            }
            let inv_sqrt = &eig.eigenvectors
                * DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()))
                * eig.eigenvectors.transpose();
            Ok(ManifoldPoint::Stiefel { frame: y * inv_sqrt })
        }
        _ => point.retract_ambient(step),
    }
}

/// Riemannian Hessian quadratic form <Hess f(p)[xi], xi>.
pub fn hessian_quadform<O: Objective + ?Sized>(
    objective: &O,
    point: &ManifoldPoint,
    xi: &TangentVector,
    probe: &HessianProbe,
) -> Result<f64> {
    probe.validate()?;
    point.check_invariants()?;
    if !xi.is_based_at(point) {
        return Err(Error::BaseMismatch);
    }
    let scale = xi.norm();
    if scale == 0.0 {
        return Err(Error::Parameter("zero tangent direction".into()));
    }
    match probe.mode {
        HessianMode::Analytic | HessianMode::FiniteDifference => {
            analytic_quadform(objective, probe, point, xi)
        }
        HessianMode::RetractionComposition => {
            let unit = xi.scale(1.0 / scale);
            let h = probe.fd_step * (1.0 + point.ambient().norm());
            let f0 = objective.value(point)?;
            let fp = objective.value(&second_order_retract(point, &unit.ambient().scale(h))?)?;
            let fm = objective.value(&second_order_retract(point, &unit.ambient().scale(-h))?)?;
            Ok((fp - 2.0 * f0 + fm) / (h * h) * scale * scale)
        }
    }
}

/// Orthonormal tangent basis obtained by projecting the ambient coordinate
/// basis and orthonormalizing with column-pivoted QR.
pub fn tangent_basis(point: &ManifoldPoint) -> Result<Vec<TangentVector>> {
    point.check_invariants()?;
    let (r, c) = point.ambient_shape();
    let ambient_dim = r * c;
    let dim = point.tangent_dimension();
    let mut stacked = DMatrix::zeros(ambient_dim, ambient_dim);
    for k in 0..ambient_dim {
        let mut e = DMatrix::zeros(r, c);
        e[(k % r, k / r)] = 1.0;
        let proj = point.project_tangent(&AmbientVector::from_matrix_unchecked(e))?;
        let pm = proj.ambient().matrix();
        for j in 0..c {
            for i in 0..r {
                stacked[(i + j * r, k)] = pm[(i, j)];
            }
        }
    }
    let qr = stacked.col_piv_qr();
    let q = qr.q();
    let rmat = qr.r();
    let mut basis = Vec::with_capacity(dim);
    let pivot_scale = rmat[(0, 0)].abs().max(1e-300);
    for k in 0..dim.min(q.ncols()) {
        if rmat[(k, k)].abs() <= 1e-10 * pivot_scale {
            break;
        }
        let mut m = DMatrix::zeros(r, c);
        for j in 0..c {
            for i in 0..r {
                m[(i, j)] = q[(i + j * r, k)];
            }
        }
        // Re-project to scrub roundoff leaked into the normal space.
        let xi = point.project_tangent(&AmbientVector::from_matrix_unchecked(m))?;
        let n = xi.norm();
        basis.push(xi.scale(1.0 / n));
    }
    if basis.len() != dim {
        return Err(Error::IllConditioned(format!(
            "tangent basis rank {} differs from dimension {dim}",
            basis.len()
        )));
    }
    Ok(basis)
}

/// Riemannian Hessian action on a tangent vector where a closed form
/// exists; `None` on manifolds where only the quadratic form is available.
fn analytic_hess_action<O: Objective + ?Sized>(
    objective: &O,
    probe: &HessianProbe,
    point: &ManifoldPoint,
    xi: &TangentVector,
) -> Result<Option<TangentVector>> {
    let y = point.ambient();
    let action = match point {
        ManifoldPoint::Sphere { z } => {
            let grad = objective.ambient_gradient(point)?;
            let hx = ambient_hess_action(objective, probe, &y, xi.ambient())?;
            let zg = grad.column_vector()?.dot(z);
            let corrected = hx.sub(&xi.ambient().scale(zg));
            Some(point.project_tangent(&corrected)?)
        }
        ManifoldPoint::Stiefel { frame } => {
            let grad = objective.ambient_gradient(point)?;
            let hx = ambient_hess_action(objective, probe, &y, xi.ambient())?;
            let s = sym(&(frame.transpose() * grad.matrix()));
            let corrected = AmbientVector::from_matrix_unchecked(hx.matrix() - xi.ambient().matrix() * s);
            Some(point.project_tangent(&corrected)?)
        }
        ManifoldPoint::Box { .. } => {
            let hx = ambient_hess_action(objective, probe, &y, xi.ambient())?;
            Some(TangentVector::from_ambient_unchecked(point.clone(), hx))
        }
        _ => None,
    };
    Ok(action)
}

/// Extreme eigenvalues (and optionally the full ordered spectrum) of the
/// Riemannian Hessian restricted to the tangent space.
#[derive(Debug, Clone)]
pub struct HessianSpectrum {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub eigenvalues: Option<Vec<f64>>,
    pub dimension: usize,
}

impl HessianSpectrum {
    pub fn spectral_radius(&self) -> f64 {
        self.lambda_min.abs().max(self.lambda_max.abs())
    }
}

/// Assembles the Hessian on an orthonormal tangent basis.
pub fn hessian_matrix<O: Objective + ?Sized>(
    objective: &O,
    point: &ManifoldPoint,
    probe: &HessianProbe,
) -> Result<DMatrix<f64>> {
    probe.validate()?;
    let basis = tangent_basis(point)?;
    let dim = basis.len();
    let mut h = DMatrix::zeros(dim, dim);
    let mut used_action = true;
    'action: {
        if probe.mode == HessianMode::RetractionComposition {
            used_action = false;
            break 'action;
        }
        for (j, xi) in basis.iter().enumerate() {
            match analytic_hess_action(objective, probe, point, xi)? {
                Some(hxi) => {
                    for (i, zeta) in basis.iter().enumerate() {
                        h[(i, j)] = hxi.ambient().dot(zeta.ambient());
                    }
                }
                None => {
                    used_action = false;
                    break 'action;
                }
            }
        }
    }
    if !used_action {
        // Fall back to quadratic-form polarization.
        let mut diag = vec![0.0; dim];
        for (j, xi) in basis.iter().enumerate() {
            diag[j] = hessian_quadform(objective, point, xi, probe)?;
            h[(j, j)] = diag[j];
        }
        for j in 0..dim {
            for i in 0..j {
                let sum = basis[i].add(&basis[j])?;
                let q = hessian_quadform(objective, point, &sum, probe)?;
                let b = 0.5 * (q - diag[i] - diag[j]);
                h[(i, j)] = b;
                h[(j, i)] = b;
            }
        }
    }
    Ok(sym(&h))
}

pub fn hessian_spectrum<O: Objective + ?Sized>(
    objective: &O,
    point: &ManifoldPoint,
    probe: &HessianProbe,
    full: bool,
) -> Result<HessianSpectrum> {
    let dim = point.tangent_dimension();
    if dim > DENSE_SPECTRUM_LIMIT {
        return Err(Error::Resource(format!(
            "tangent dimension {dim} exceeds the dense limit {DENSE_SPECTRUM_LIMIT}"
        )));
    }
    if dim == 0 {
        return Ok(HessianSpectrum {
            lambda_min: 0.0,
            lambda_max: 0.0,
            eigenvalues: full.then(Vec::new),
            dimension: 0,
        });
    }
    let h = hessian_matrix(objective, point, probe)?;
    let eig = SymmetricEigen::new(h);
    let mut evs: Vec<f64> = eig.eigenvalues.iter().cloned().collect();
    evs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(HessianSpectrum {
        lambda_min: evs[0],
        lambda_max: evs[evs.len() - 1],
        eigenvalues: full.then(|| evs.clone()),
        dimension: dim,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CriticalPointClass {
    StrictSaddleNondegenerate,
    StrictSaddle,
    LocalMinimizer,
    Degenerate,
}

#[derive(Debug, Clone)]
pub struct CriticalPointReport {
    pub point: ManifoldPoint,
    pub grad_norm: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub morse_index: usize,
    pub zero_count: usize,
    pub classification: CriticalPointClass,
}

/// Classifies a (near-)critical point by the signs of its tangent Hessian
/// eigenvalues. `rel_tol` scales the spectral radius to form the zero
/// threshold (1e-8 is the standard choice).
pub fn classify_critical_point<O: Objective + ?Sized>(
    objective: &O,
    point: &ManifoldPoint,
    probe: &HessianProbe,
    rel_tol: f64,
) -> Result<CriticalPointReport> {
    let grad_norm = riemannian_gradient(objective, point)?.norm();
    let spectrum = hessian_spectrum(objective, point, probe, true)?;
    let evs = spectrum.eigenvalues.as_ref().expect("full spectrum requested");
    let tol = rel_tol * spectrum.spectral_radius();
    let morse_index = evs.iter().filter(|&&l| l < -tol).count();
    let zero_count = evs.iter().filter(|&&l| l.abs() <= tol).count();
    let classification = if spectrum.spectral_radius() == 0.0 && !evs.is_empty() {
        CriticalPointClass::Degenerate
    } else if spectrum.lambda_min < -tol {
        if spectrum.lambda_max > tol && zero_count == 0 {
            CriticalPointClass::StrictSaddleNondegenerate
        } else {
            CriticalPointClass::StrictSaddle
        }
    } else {
        CriticalPointClass::LocalMinimizer
    };
    Ok(CriticalPointReport {
        point: point.clone(),
        grad_norm,
        lambda_min: spectrum.lambda_min,
        lambda_max: spectrum.lambda_max,
        morse_index,
        zero_count,
        classification,
    })
}

/// Verifies D phi = I - a Hess f at a fixed point of the PGD map by a
/// central finite-difference Jacobian on the tangent basis. Returns the
/// maximum entrywise deviation.
pub fn pgd_map_jacobian_check<O: Objective + ?Sized>(
    objective: &O,
    point: &ManifoldPoint,
    step_size: f64,
    h: f64,
) -> Result<f64> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::Parameter(format!("fd step {h} not positive")));
    }
    let grad_norm = riemannian_gradient(objective, point)?.norm();
    if grad_norm > 1e-10 {
        return Err(Error::Misuse(format!(
            "linearization check requires a critical point (grad norm {grad_norm:.3e})"
        )));
    }
    let basis = tangent_basis(point)?;
    let probe = HessianProbe::analytic();
    let hess = match hessian_matrix(objective, point, &probe) {
        Ok(m) => m,
        Err(Error::Capability(_)) => {
            hessian_matrix(objective, point, &HessianProbe::finite_difference(1e-5))?
        }
        Err(e) => return Err(e),
    };
    // With a zero step the PGD map degenerates to the identity.
    let phi = |p: ManifoldPoint| -> Result<ManifoldPoint> {
        if step_size == 0.0 {
            Ok(p)
        } else {
            pgd_step(&p, objective, step_size)
        }
    };
    let mut max_dev = 0.0_f64;
    for (j, xi) in basis.iter().enumerate() {
        let plus = phi(point.retract_ambient(&xi.ambient().scale(h))?)?;
        let minus = phi(point.retract_ambient(&xi.ambient().scale(-h))?)?;
        let disp = plus.ambient().sub(&minus.ambient()).scale(1.0 / (2.0 * h));
        let disp_t = point.project_tangent(&disp)?;
        for (i, zeta) in basis.iter().enumerate() {
            let fd = disp_t.ambient().dot(zeta.ambient());
            let model = if i == j { 1.0 } else { 0.0 } - step_size * hess[(i, j)];
            max_dev = max_dev.max((fd - model).abs());
        }
    }
    Ok(max_dev)
}
