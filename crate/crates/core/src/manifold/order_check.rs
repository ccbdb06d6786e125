//! Empirical verification of retraction consistency order: compares
//! R(alpha xi) against its first- and second-order Taylor models across a
//! range of step scales and fits log-log slopes.

use crate::ambient::AmbientVector;
use crate::error::{Error, Result};
use crate::manifold::{ManifoldPoint, TangentVector};

/// Residuals and fitted slopes from [`retraction_order_check`].
///
/// `residual_first[i]` is `|R(a xi) - (Z + a xi)| / a` at `a = alphas[i]`;
/// `residual_second[i]` is `|R(a xi) - (Z + a xi + a^2 eta)| / a^2` where
/// `eta` is the manifold's second-order correction (zero when none is
/// available). Fitted slopes are least-squares slopes of the raw residuals
/// in log-log coordinates, minus one: a first-order retraction yields
/// `slope_first ~ 1`, a second-order retraction additionally yields
/// `slope_second ~ 2`. Exact retractions (all residuals at roundoff) report
/// infinite slopes.
#[derive(Debug, Clone)]
pub struct RetractionOrderReport {
    pub alphas: Vec<f64>,
    pub residual_first: Vec<f64>,
    pub residual_second: Vec<f64>,
    pub slope_first: f64,
    pub slope_second: f64,
}

impl RetractionOrderReport {
    pub fn is_first_order(&self) -> bool {
        self.slope_first >= 0.9
    }

    pub fn is_second_order(&self) -> bool {
        self.slope_second >= 1.9
    }
}

/// Known second-order expansion term of the retraction, when the manifold's
/// retraction admits one: R(a xi) = Z + a xi + a^2 eta + O(a^3).
fn second_order_correction(point: &ManifoldPoint, xi: &TangentVector) -> Option<AmbientVector> {
    match point {
        ManifoldPoint::Sphere { z } => {
            let xim = xi.ambient().matrix();
            let norm2 = xim.norm_squared();
            let zc = nalgebra::DMatrix::from_column_slice(z.len(), 1, z.as_slice());
            Some(AmbientVector::from_matrix_unchecked(zc * (-0.5 * norm2)))
        }
        ManifoldPoint::PsdRankOne { z } => {
            let parts = xi.psd_parts()?;
            let rho2 = z.norm_squared();
            Some(AmbientVector::from_matrix_unchecked(
                &parts.v * parts.v.transpose() / rho2,
            ))
        }
        // Clamp is exact on the interior; the Taylor model needs no term.
        ManifoldPoint::Box { .. } => {
            let (r, c) = point.ambient_shape();
            Some(AmbientVector::from_matrix_unchecked(
                nalgebra::DMatrix::zeros(r, c),
            ))
        }
        // QR and truncated-SVD retractions carry no second-order claim here.
        ManifoldPoint::Stiefel { .. } | ManifoldPoint::FixedRankAsym { .. } => None,
    }
}

fn fit_raw_slope(alphas: &[f64], raw: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = alphas
        .iter()
        .zip(raw.iter())
        .filter(|(_, &r)| r > 1e-300)
        .map(|(&a, &r)| (a.ln(), r.ln()))
        .collect();
    if pts.len() < 2 {
        return f64::INFINITY;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    sxy / sxx - 1.0
}

/// Measures the retraction residual against first- and second-order models
/// over the given step scales, which must be positive, finite and distinct.
pub fn retraction_order_check(
    point: &ManifoldPoint,
    xi: &TangentVector,
    alphas: &[f64],
) -> Result<RetractionOrderReport> {
    point.check_invariants()?;
    if !xi.is_based_at(point) {
        return Err(Error::BaseMismatch);
    }
    if alphas.len() < 4 {
        return Err(Error::Parameter(
            "need step scales spanning at least four decades".into(),
        ));
    }
    for &a in alphas {
        if !(a.is_finite() && a > 0.0) {
            return Err(Error::Parameter(format!("step scale {a} not positive")));
        }
        if a < 1e-13 {
            return Err(Error::IllConditioned(format!(
                "step scale {a} below the double-precision floor"
            )));
        }
    }
    let base = point.ambient();
    let eta = second_order_correction(point, xi);

    let mut residual_first = Vec::with_capacity(alphas.len());
    let mut residual_second = Vec::with_capacity(alphas.len());
    let mut raw_first = Vec::with_capacity(alphas.len());
    let mut raw_second = Vec::with_capacity(alphas.len());
    for &a in alphas {
        let retracted = point.retract(&xi.scale(a))?.ambient();
        let model1 = base.add(&xi.ambient().scale(a));
        let r1 = retracted.sub(&model1).norm();
        let model2 = match &eta {
            Some(e) => model1.add(&e.scale(a * a)),
            None => model1,
        };
        let r2 = retracted.sub(&model2).norm();
        raw_first.push(r1);
        raw_second.push(r2);
        residual_first.push(r1 / a);
        residual_second.push(r2 / (a * a));
    }
    Ok(RetractionOrderReport {
        alphas: alphas.to_vec(),
        slope_first: fit_raw_slope(alphas, &raw_first),
        slope_second: fit_raw_slope(alphas, &raw_second),
        residual_first,
        residual_second,
    })
}
