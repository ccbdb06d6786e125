//! Embedded-manifold geometry: points, tangent vectors, projections,
//! retractions and the Frobenius metric for the four supported domains
//! (sphere, Stiefel frames, bounded-rank matrices, PSD rank-1 matrices)
//! plus the flat rectangular box.

mod order_check;

pub use order_check::{retraction_order_check, RetractionOrderReport};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::ambient::AmbientVector;
use crate::error::{Error, Result};

/// Singular values below this fraction of the largest one are treated as
/// zero when determining numerical rank.
pub const RANK_TRUNCATION_REL: f64 = 1e-12;

/// The rectangle used by the flat box domain.
pub const BOX_X_RANGE: (f64, f64) = (-1.0, 2.0);
pub const BOX_Y_RANGE: (f64, f64) = (-1.0, 1.0);

/// A point on one of the supported manifolds, in its natural factored or
/// coordinate representation.
#[derive(Debug, Clone)]
pub enum ManifoldPoint {
    /// Unit vector z on the sphere S^{n-1}.
    Sphere { z: DVector<f64> },
    /// Orthonormal n-by-m frame.
    Stiefel { frame: DMatrix<f64> },
    /// Compact SVD factors of a rank-s matrix inside the rank-<=r variety.
    FixedRankAsym {
        u: DMatrix<f64>,
        sigma: DVector<f64>,
        v: DMatrix<f64>,
        max_rank: usize,
        nrows: usize,
        ncols: usize,
    },
    /// Factor z of the symmetric PSD rank-1 matrix Z = z z^T.
    PsdRankOne { z: DVector<f64> },
    /// Coordinates in the closed rectangle [-1,2] x [-1,1].
    Box { x: f64, y: f64 },
}

/// Dimensions-only description of a manifold, used to sample random points.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ManifoldSpec {
    Sphere { n: usize },
    Stiefel { n: usize, m: usize },
    FixedRankAsym { nrows: usize, ncols: usize, rank: usize },
    PsdRankOne { n: usize },
    Box,
}

/// An ambient-space element tagged with its base point. For PSD rank-1
/// points the structured form xi = w uu^T + uv^T + vu^T is kept alongside.
#[derive(Debug, Clone)]
pub struct TangentVector {
    base: ManifoldPoint,
    ambient: AmbientVector,
    psd_parts: Option<PsdTangentParts>,
}

/// Structured tangent components at a PSD rank-1 point, with v orthogonal
/// to the unit factor direction u.
#[derive(Debug, Clone)]
pub struct PsdTangentParts {
    pub w: f64,
    pub v: DVector<f64>,
}

pub(crate) fn sym(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// QR with the sign convention that the R diagonal is nonnegative, so the
/// Q factor is deterministic.
pub(crate) fn qr_positive(m: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let qr = m.clone().qr();
    let mut q = qr.q();
    let mut r = qr.r();
    for j in 0..r.nrows().min(r.ncols()) {
        if r[(j, j)] < 0.0 {
            for k in 0..r.ncols() {
                r[(j, k)] = -r[(j, k)];
            }
            for i in 0..q.nrows() {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    (q, r)
}

/// Best rank-<=r approximation via truncated SVD, with small singular
/// values dropped at `RANK_TRUNCATION_REL` relative to the largest.
pub(crate) fn truncated_svd(
    m: &DMatrix<f64>,
    r: usize,
) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
    let nrows = m.nrows();
    let ncols = m.ncols();
    let svd = m.clone().svd(true, true);
    let u_full = svd.u.expect("svd u");
    let vt_full = svd.v_t.expect("svd v_t");
    let sv = svd.singular_values;
    let sigma_max = sv.iter().cloned().fold(0.0_f64, f64::max);
    let threshold = RANK_TRUNCATION_REL * sigma_max;
    let mut keep: Vec<usize> = (0..sv.len()).filter(|&i| sv[i] > threshold).collect();
    // nalgebra does not guarantee descending order; enforce it.
    keep.sort_by(|&i, &j| sv[j].partial_cmp(&sv[i]).unwrap());
    keep.truncate(r);
    let s = keep.len();
    let mut u = DMatrix::zeros(nrows, s);
    let mut v = DMatrix::zeros(ncols, s);
    let mut sigma = DVector::zeros(s);
    for (col, &i) in keep.iter().enumerate() {
        u.set_column(col, &u_full.column(i));
        sigma[col] = sv[i];
        for row in 0..ncols {
            v[(row, col)] = vt_full[(i, row)];
        }
    }
    (u, sigma, v)
}

impl ManifoldPoint {
    pub fn sphere(z: DVector<f64>) -> Result<Self> {
        let p = ManifoldPoint::Sphere { z };
        p.check_invariants()?;
        Ok(p)
    }

    pub fn stiefel(frame: DMatrix<f64>) -> Result<Self> {
        let p = ManifoldPoint::Stiefel { frame };
        p.check_invariants()?;
        Ok(p)
    }

    pub fn psd_rank_one(z: DVector<f64>) -> Result<Self> {
        let p = ManifoldPoint::PsdRankOne { z };
        p.check_invariants()?;
        Ok(p)
    }

    pub fn box_point(x: f64, y: f64) -> Result<Self> {
        let p = ManifoldPoint::Box { x, y };
        p.check_invariants()?;
        Ok(p)
    }

    /// Builds a bounded-rank point from a dense matrix by truncated SVD.
    pub fn fixed_rank_from_matrix(m: &DMatrix<f64>, max_rank: usize) -> Result<Self> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("fixed-rank point entries".into()));
        }
        let (u, sigma, v) = truncated_svd(m, max_rank);
        let p = ManifoldPoint::FixedRankAsym {
            u,
            sigma,
            v,
            max_rank,
            nrows: m.nrows(),
            ncols: m.ncols(),
        };
        p.check_invariants()?;
        Ok(p)
    }

    pub fn spec(&self) -> ManifoldSpec {
        match self {
            ManifoldPoint::Sphere { z } => ManifoldSpec::Sphere { n: z.len() },
            ManifoldPoint::Stiefel { frame } => ManifoldSpec::Stiefel {
                n: frame.nrows(),
                m: frame.ncols(),
            },
            ManifoldPoint::FixedRankAsym {
                max_rank,
                nrows,
                ncols,
                ..
            } => ManifoldSpec::FixedRankAsym {
                nrows: *nrows,
                ncols: *ncols,
                rank: *max_rank,
            },
            ManifoldPoint::PsdRankOne { z } => ManifoldSpec::PsdRankOne { n: z.len() },
            ManifoldPoint::Box { .. } => ManifoldSpec::Box,
        }
    }

    /// Current rank s of a bounded-rank point (equals max_rank elsewhere).
    pub fn rank(&self) -> usize {
        match self {
            ManifoldPoint::FixedRankAsym { sigma, .. } => sigma.len(),
            ManifoldPoint::PsdRankOne { .. } => 1,
            _ => 0,
        }
    }

    pub fn check_invariants(&self) -> Result<()> {
        match self {
            ManifoldPoint::Sphere { z } => {
                if z.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite("sphere point".into()));
                }
                if (z.norm() - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidPoint(format!(
                        "sphere factor norm {} differs from 1",
                        z.norm()
                    )));
                }
            }
            ManifoldPoint::Stiefel { frame } => {
                if frame.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite("stiefel point".into()));
                }
                let m = frame.ncols();
                let gram = frame.transpose() * frame;
                let defect = (&gram - DMatrix::<f64>::identity(m, m)).norm();
                if defect > 1e-10 {
                    return Err(Error::InvalidPoint(format!(
                        "frame orthonormality defect {defect}"
                    )));
                }
            }
            ManifoldPoint::FixedRankAsym {
                u,
                sigma,
                v,
                max_rank,
                nrows,
                ncols,
            } => {
                let s = sigma.len();
                if s > *max_rank {
                    return Err(Error::InvalidPoint("rank exceeds bound".into()));
                }
                if u.nrows() != *nrows || v.nrows() != *ncols || u.ncols() != s || v.ncols() != s {
                    return Err(Error::DimensionMismatch("fixed-rank factors".into()));
                }
                let sigma_max = sigma.iter().cloned().fold(0.0_f64, f64::max);
                for i in 0..s {
                    if !(sigma[i] > RANK_TRUNCATION_REL * sigma_max) {
                        return Err(Error::InvalidPoint("non-positive singular value".into()));
                    }
                    if i + 1 < s && sigma[i + 1] > sigma[i] {
                        return Err(Error::InvalidPoint("singular values not descending".into()));
                    }
                }
                for (factor, name) in [(u, "U"), (v, "V")] {
                    let gram = factor.transpose() * factor;
                    let defect = (&gram - DMatrix::<f64>::identity(s, s)).norm();
                    if defect > 1e-10 {
                        return Err(Error::InvalidPoint(format!(
                            "{name} orthonormality defect {defect}"
                        )));
                    }
                }
            }
            ManifoldPoint::PsdRankOne { z } => {
                if z.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite("psd rank-1 point".into()));
                }
                if z.norm() == 0.0 {
                    return Err(Error::InvalidPoint("zero factor".into()));
                }
            }
            ManifoldPoint::Box { x, y } => {
                if !x.is_finite() || !y.is_finite() {
                    return Err(Error::NonFinite("box point".into()));
                }
                if *x < BOX_X_RANGE.0 || *x > BOX_X_RANGE.1 || *y < BOX_Y_RANGE.0 || *y > BOX_Y_RANGE.1
                {
                    return Err(Error::InvalidPoint("coordinates outside the box".into()));
                }
            }
        }
        Ok(())
    }

    /// The point embedded in its ambient space.
    pub fn ambient(&self) -> AmbientVector {
        let m = match self {
            ManifoldPoint::Sphere { z } => DMatrix::from_column_slice(z.len(), 1, z.as_slice()),
            ManifoldPoint::Stiefel { frame } => frame.clone(),
            ManifoldPoint::FixedRankAsym {
                u, sigma, v, nrows, ncols, ..
            } => {
                if sigma.is_empty() {
                    DMatrix::zeros(*nrows, *ncols)
                } else {
                    u * DMatrix::from_diagonal(sigma) * v.transpose()
                }
            }
            ManifoldPoint::PsdRankOne { z } => z * z.transpose(),
            ManifoldPoint::Box { x, y } => DMatrix::from_column_slice(2, 1, &[*x, *y]),
        };
        AmbientVector::from_matrix_unchecked(m)
    }

    pub fn ambient_shape(&self) -> (usize, usize) {
        match self {
            ManifoldPoint::Sphere { z } => (z.len(), 1),
            ManifoldPoint::Stiefel { frame } => frame.shape(),
            ManifoldPoint::FixedRankAsym { nrows, ncols, .. } => (*nrows, *ncols),
            ManifoldPoint::PsdRankOne { z } => (z.len(), z.len()),
            ManifoldPoint::Box { .. } => (2, 1),
        }
    }

    /// Unit factor direction of a PSD rank-1 point, with the sign convention
    /// that the first nonzero entry is positive (point comparison only; +-z
    /// represent the same matrix).
    pub fn psd_unit_factor(&self) -> Result<DVector<f64>> {
        match self {
            ManifoldPoint::PsdRankOne { z } => {
                let mut u = z / z.norm();
                if let Some(first) = u.iter().find(|v| v.abs() > 0.0) {
                    if *first < 0.0 {
                        u = -u;
                    }
                }
                Ok(u)
            }
            _ => Err(Error::Misuse("not a PSD rank-1 point".into())),
        }
    }

    /// Frobenius distance between the ambient embeddings.
    pub fn ambient_distance(&self, other: &ManifoldPoint) -> f64 {
        self.ambient().sub(&other.ambient()).norm()
    }

    fn check_ambient_shape(&self, y: &AmbientVector) -> Result<()> {
        if y.shape() != self.ambient_shape() {
            return Err(Error::DimensionMismatch(format!(
                "ambient shape {:?} does not match point shape {:?}",
                y.shape(),
                self.ambient_shape()
            )));
        }
        Ok(())
    }

    /// Orthogonal projection of an ambient element onto the tangent space.
    pub fn project_tangent(&self, y: &AmbientVector) -> Result<TangentVector> {
        self.check_invariants()?;
        self.check_ambient_shape(y)?;
        let (ambient, psd_parts) = match self {
            ManifoldPoint::Sphere { z } => {
                let yv = y.column_vector()?;
                let xi = &yv - z * z.dot(&yv);
                (
                    AmbientVector::from_matrix_unchecked(DMatrix::from_column_slice(
                        z.len(),
                        1,
                        xi.as_slice(),
                    )),
                    None,
                )
            }
            ManifoldPoint::Stiefel { frame } => {
                let ym = y.matrix();
                let xi = ym - frame * sym(&(frame.transpose() * ym));
                (AmbientVector::from_matrix_unchecked(xi), None)
            }
            ManifoldPoint::FixedRankAsym { u, v, .. } => {
                let ym = y.matrix();
                let pu = u * (u.transpose() * ym);
                let pv = ym * v * v.transpose();
                let puv = u * (u.transpose() * ym * v) * v.transpose();
                let xi = pu + pv - puv;
                (AmbientVector::from_matrix_unchecked(xi), None)
            }
            ManifoldPoint::PsdRankOne { z } => {
                let u = z / z.norm();
                let s = sym(y.matrix());
                let su = &s * &u;
                let w = u.dot(&su);
                let v = &su - &u * w;
                let xi = &u * &u.transpose() * w + &u * v.transpose() + &v * u.transpose();
                (
                    AmbientVector::from_matrix_unchecked(xi),
                    Some(PsdTangentParts { w, v }),
                )
            }
            ManifoldPoint::Box { .. } => (y.clone(), None),
        };
        Ok(TangentVector {
            base: self.clone(),
            ambient,
            psd_parts,
        })
    }

    /// Projection onto the tangent cone of the bounded-rank variety at a
    /// rank-deficient point: tangent-space part plus the best rank-(r-s)
    /// approximation of the residual.
    pub fn project_tangent_cone(&self, y: &AmbientVector) -> Result<TangentVector> {
        let (max_rank, s) = match self {
            ManifoldPoint::FixedRankAsym { sigma, max_rank, .. } => (*max_rank, sigma.len()),
            _ => {
                return Err(Error::Misuse(
                    "tangent cone only defined on the bounded-rank variety".into(),
                ))
            }
        };
        if s >= max_rank {
            return Err(Error::Misuse(
                "point has full rank; use project_tangent".into(),
            ));
        }
        let plain = self.project_tangent(y)?;
        let residual = y.matrix() - plain.ambient.matrix();
        let (u, sigma, v) = truncated_svd(&residual, max_rank - s);
        let extra = if sigma.is_empty() {
            DMatrix::zeros(residual.nrows(), residual.ncols())
        } else {
            &u * DMatrix::from_diagonal(&sigma) * v.transpose()
        };
        Ok(TangentVector {
            base: self.clone(),
            ambient: AmbientVector::from_matrix_unchecked(plain.ambient.matrix() + extra),
            psd_parts: None,
        })
    }

    /// Retraction back onto the manifold.
    pub fn retract(&self, xi: &TangentVector) -> Result<ManifoldPoint> {
        if !xi.is_based_at(self) {
            return Err(Error::BaseMismatch);
        }
        self.retract_ambient(&xi.ambient)
    }

    /// Retraction of p + step where `step` is an ambient increment (normally
    /// a tangent or tangent-cone element based at p).
    pub(crate) fn retract_ambient(&self, step: &AmbientVector) -> Result<ManifoldPoint> {
        self.check_ambient_shape(step)?;
        match self {
            ManifoldPoint::Sphere { z } => {
                let y = z + step.column_vector()?;
                let norm = y.norm();
                if norm <= 1e-300 {
                    return Err(Error::DegenerateRetraction(
                        "sphere step through the origin".into(),
                    ));
                }
                Ok(ManifoldPoint::Sphere { z: y / norm })
            }
            ManifoldPoint::Stiefel { frame } => {
                let y = frame + step.matrix();
                let (q, r) = qr_positive(&y);
                for j in 0..r.ncols().min(r.nrows()) {
                    if r[(j, j)] <= 1e-300 {
                        return Err(Error::DegenerateRetraction(
                            "rank-deficient frame update".into(),
                        ));
                    }
                }
                Ok(ManifoldPoint::Stiefel { frame: q })
            }
            ManifoldPoint::FixedRankAsym {
                max_rank, nrows, ncols, ..
            } => {
                let y = self.ambient().matrix() + step.matrix();
                let (u, sigma, v) = truncated_svd(&y, *max_rank);
                Ok(ManifoldPoint::FixedRankAsym {
                    u,
                    sigma,
                    v,
                    max_rank: *max_rank,
                    nrows: *nrows,
                    ncols: *ncols,
                })
            }
            ManifoldPoint::PsdRankOne { z } => {
                let y = sym(&(z * z.transpose() + step.matrix()));
                let eig = nalgebra::SymmetricEigen::new(y);
                let mut best = 0usize;
                for i in 0..eig.eigenvalues.len() {
                    if eig.eigenvalues[i] > eig.eigenvalues[best] {
                        best = i;
                    }
                }
                let lambda = eig.eigenvalues[best];
                if lambda <= 0.0 {
                    return Err(Error::DegenerateRetraction(
                        "no positive eigenvalue for the PSD rank-1 retraction".into(),
                    ));
                }
                let dir = eig.eigenvectors.column(best).into_owned();
                Ok(ManifoldPoint::PsdRankOne {
                    z: dir * lambda.sqrt(),
                })
            }
            ManifoldPoint::Box { x, y } => {
                let step = step.column_vector()?;
                Ok(ManifoldPoint::Box {
                    x: (x + step[0]).clamp(BOX_X_RANGE.0, BOX_X_RANGE.1),
                    y: (y + step[1]).clamp(BOX_Y_RANGE.0, BOX_Y_RANGE.1),
                })
            }
        }
    }

    /// Riemannian metric inherited from the ambient space.
    pub fn inner(&self, xi: &TangentVector, zeta: &TangentVector) -> Result<f64> {
        if !xi.is_based_at(self) || !zeta.is_based_at(self) {
            return Err(Error::BaseMismatch);
        }
        Ok(xi.ambient.dot(&zeta.ambient))
    }

    /// Analytic tangent (or tangent-cone smooth-part) dimension.
    pub fn tangent_dimension(&self) -> usize {
        match self {
            ManifoldPoint::Sphere { z } => z.len() - 1,
            ManifoldPoint::Stiefel { frame } => {
                let (n, m) = frame.shape();
                n * m - m * (m + 1) / 2
            }
            ManifoldPoint::FixedRankAsym {
                sigma, nrows, ncols, ..
            } => {
                let s = sigma.len();
                (nrows + ncols - s) * s
            }
            ManifoldPoint::PsdRankOne { z } => z.len(),
            ManifoldPoint::Box { .. } => 2,
        }
    }
}

impl TangentVector {
    /// Wraps an ambient element as a tangent vector without projecting;
    /// the caller asserts the tangent constraint holds.
    pub fn from_ambient_unchecked(base: ManifoldPoint, ambient: AmbientVector) -> Self {
        let psd_parts = match &base {
            ManifoldPoint::PsdRankOne { z } => {
                let u = z / z.norm();
                let su = ambient.matrix() * &u;
                let w = u.dot(&su);
                let v = &su - &u * w;
                Some(PsdTangentParts { w, v })
            }
            _ => None,
        };
        Self {
            base,
            ambient,
            psd_parts,
        }
    }

    pub fn zero(base: &ManifoldPoint) -> Self {
        let (r, c) = base.ambient_shape();
        TangentVector::from_ambient_unchecked(
            base.clone(),
            AmbientVector::from_matrix_unchecked(DMatrix::zeros(r, c)),
        )
    }

    pub fn base(&self) -> &ManifoldPoint {
        &self.base
    }

    pub fn ambient(&self) -> &AmbientVector {
        &self.ambient
    }

    pub fn psd_parts(&self) -> Option<&PsdTangentParts> {
        self.psd_parts.as_ref()
    }

    pub fn norm(&self) -> f64 {
        self.ambient.norm()
    }

    pub fn scale(&self, c: f64) -> TangentVector {
        TangentVector {
            base: self.base.clone(),
            ambient: self.ambient.scale(c),
            psd_parts: self.psd_parts.as_ref().map(|p| PsdTangentParts {
                w: p.w * c,
                v: &p.v * c,
            }),
        }
    }

    pub fn add(&self, other: &TangentVector) -> Result<TangentVector> {
        if !other.is_based_at(&self.base) {
            return Err(Error::BaseMismatch);
        }
        Ok(TangentVector {
            base: self.base.clone(),
            ambient: self.ambient.add(&other.ambient),
            psd_parts: match (&self.psd_parts, &other.psd_parts) {
                (Some(a), Some(b)) => Some(PsdTangentParts {
                    w: a.w + b.w,
                    v: &a.v + &b.v,
                }),
                _ => None,
            },
        })
    }

    pub fn is_based_at(&self, p: &ManifoldPoint) -> bool {
        if self.base.ambient_shape() != p.ambient_shape() {
            return false;
        }
        let scale = 1.0 + p.ambient().norm();
        self.base.ambient_distance(p) <= 1e-9 * scale
    }

    /// Residual of the manifold-specific tangent constraint; zero (up to
    /// roundoff) for genuine tangent vectors.
    pub fn constraint_residual(&self) -> f64 {
        match &self.base {
            ManifoldPoint::Sphere { z } => {
                let xi = self.ambient.column_vector().expect("sphere tangent shape");
                xi.dot(z).abs()
            }
            ManifoldPoint::Stiefel { frame } => {
                let xim = self.ambient.matrix();
                (xim.transpose() * frame + frame.transpose() * xim).norm()
            }
            ManifoldPoint::PsdRankOne { z } => {
                let u = z / z.norm();
                match &self.psd_parts {
                    Some(parts) => {
                        let ortho = parts.v.dot(&u).abs();
                        let rebuilt = &u * u.transpose() * parts.w
                            + &u * parts.v.transpose()
                            + &parts.v * u.transpose();
                        ortho + (self.ambient.matrix() - rebuilt).norm()
                    }
                    None => f64::INFINITY,
                }
            }
            ManifoldPoint::FixedRankAsym { u, v, .. } => {
                // residual of P_T xi = xi
                let xim = self.ambient.matrix();
                let pu = u * (u.transpose() * xim);
                let pv = xim * v * v.transpose();
                let puv = u * (u.transpose() * xim * v) * v.transpose();
                (pu + pv - puv - xim).norm()
            }
            ManifoldPoint::Box { .. } => 0.0,
        }
    }
}

/// Deterministic random point on the requested manifold.
pub fn random_point(spec: &ManifoldSpec, seed: u64) -> ManifoldPoint {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_point_with(spec, &mut rng)
}

/// Random point drawn from an existing RNG stream.
pub fn random_point_with<R: Rng>(spec: &ManifoldSpec, rng: &mut R) -> ManifoldPoint {
    match spec {
        ManifoldSpec::Sphere { n } => {
            let z = gaussian_vector(*n, rng);
            ManifoldPoint::Sphere { z: &z / z.norm() }
        }
        ManifoldSpec::Stiefel { n, m } => {
            let g = gaussian_matrix(*n, *m, rng);
            let (q, _) = qr_positive(&g);
            ManifoldPoint::Stiefel { frame: q }
        }
        ManifoldSpec::FixedRankAsym { nrows, ncols, rank } => {
            let left = gaussian_matrix(*nrows, *rank, rng);
            let right = gaussian_matrix(*ncols, *rank, rng);
            let m = left * right.transpose();
            ManifoldPoint::fixed_rank_from_matrix(&m, *rank).expect("random fixed-rank point")
        }
        ManifoldSpec::PsdRankOne { n } => ManifoldPoint::PsdRankOne {
            z: gaussian_vector(*n, rng),
        },
        ManifoldSpec::Box => ManifoldPoint::Box {
            x: rng.gen_range(BOX_X_RANGE.0..=BOX_X_RANGE.1),
            y: rng.gen_range(BOX_Y_RANGE.0..=BOX_Y_RANGE.1),
        },
    }
}

pub(crate) fn gaussian_vector<R: Rng>(n: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

pub(crate) fn gaussian_matrix<R: Rng>(n: usize, m: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(n, m, |_, _| rng.sample(StandardNormal))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn mat(n: usize, m: usize, f: impl Fn(usize, usize) -> f64) -> AmbientVector {
        AmbientVector::from_matrix(DMatrix::from_fn(n, m, |i, j| f(i, j))).unwrap()
    }

    #[test]
    fn constructors_validate() {
        assert!(ManifoldPoint::sphere(DVector::from_vec(vec![0.6, 0.8])).is_ok());
        assert!(ManifoldPoint::sphere(DVector::from_vec(vec![1.0, 1.0])).is_err());
        assert!(ManifoldPoint::psd_rank_one(DVector::zeros(3)).is_err());
        assert!(ManifoldPoint::box_point(2.5, 0.0).is_err());
        assert!(ManifoldPoint::box_point(-1.0, 1.0).is_ok());
        let skew = DMatrix::from_fn(4, 2, |i, j| (i + j) as f64);
        assert!(ManifoldPoint::stiefel(skew).is_err());
    }

    #[test]
    fn sphere_retraction_normalizes() {
        let p = ManifoldPoint::sphere(DVector::from_vec(vec![1.0, 0.0])).unwrap();
        let xi = p
            .project_tangent(&mat(2, 1, |i, _| if i == 1 { 3.0 } else { 0.0 }))
            .unwrap();
        let q = p.retract(&xi).unwrap();
        match q {
            ManifoldPoint::Sphere { z } => {
                assert_relative_eq!(z.norm(), 1.0, epsilon = 1e-14);
                assert_relative_eq!(z[0], 0.1_f64.sqrt(), epsilon = 1e-12);
            }
            _ => panic!("sphere retraction left the sphere"),
        }
    }

    #[test]
    fn stiefel_qf_has_positive_diagonal() {
        let p = random_point(&ManifoldSpec::Stiefel { n: 5, m: 3 }, 1);
        let xi = p.project_tangent(&mat(5, 3, |i, j| ((i * 3 + j) as f64).sin())).unwrap();
        let q = p.retract(&xi).unwrap();
        q.check_invariants().unwrap();
        // qf uniqueness: retracting the zero tangent reproduces the point.
        let same = p.retract(&TangentVector::zero(&p)).unwrap();
        assert!(p.ambient_distance(&same) < 1e-12);
    }

    #[test]
    fn projection_is_idempotent_and_self_adjoint() {
        for spec in [
            ManifoldSpec::Sphere { n: 6 },
            ManifoldSpec::Stiefel { n: 6, m: 2 },
            ManifoldSpec::PsdRankOne { n: 5 },
            ManifoldSpec::FixedRankAsym { nrows: 5, ncols: 4, rank: 2 },
        ] {
            let p = random_point(&spec, 7);
            let (r, c) = p.ambient_shape();
            let y1 = mat(r, c, |i, j| ((i * 7 + j * 3 + 1) as f64).sin());
            let y2 = mat(r, c, |i, j| ((i * 5 + j * 11 + 2) as f64).cos());
            let p1 = p.project_tangent(&y1).unwrap();
            let p11 = p.project_tangent(p1.ambient()).unwrap();
            assert!(
                p1.ambient().sub(p11.ambient()).norm() <= 1e-10 * (1.0 + p1.norm()),
                "{spec:?} projection not idempotent"
            );
            let p2 = p.project_tangent(&y2).unwrap();
            let lhs = p1.ambient().dot(&y2);
            let rhs = p2.ambient().dot(&y1);
            assert!(
                (lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()),
                "{spec:?} projection not self-adjoint"
            );
        }
    }

    #[test]
    fn tangent_dimension_matches_numerical_rank() {
        // Lemma-style count for the full-rank fixed-rank stratum.
        for (n1, n2, r) in [(3, 3, 1), (4, 3, 2), (5, 4, 3)] {
            let p = random_point(&ManifoldSpec::FixedRankAsym { nrows: n1, ncols: n2, rank: r }, 3);
            assert_eq!(p.tangent_dimension(), (n1 + n2 - r) * r);
        }
        let p = random_point(&ManifoldSpec::Stiefel { n: 7, m: 3 }, 4);
        assert_eq!(p.tangent_dimension(), 7 * 3 - 3 * 4 / 2); // nm - m(m+1)/2
    }

    #[test]
    fn tangent_cone_requires_rank_deficiency() {
        let p = random_point(&ManifoldSpec::FixedRankAsym { nrows: 4, ncols: 4, rank: 2 }, 5);
        let y = mat(4, 4, |i, j| (i + j) as f64);
        assert!(p.project_tangent_cone(&y).is_err());

        // Rank-1 point on the rank-2 variety: cone adds the best rank-1
        // part of the normal residual.
        let m = DMatrix::from_fn(4, 4, |i, j| if i == 0 && j == 0 { 2.0 } else { 0.0 });
        let p = ManifoldPoint::fixed_rank_from_matrix(&m, 2).unwrap();
        assert_eq!(p.rank(), 1);
        let cone = p.project_tangent_cone(&y).unwrap();
        let plain = p.project_tangent(&y).unwrap();
        assert!(cone.norm() >= plain.norm() - 1e-12);
        let q = p.retract(&cone).unwrap();
        q.check_invariants().unwrap();
    }

    #[test]
    fn psd_retraction_needs_positive_eigenvalue() {
        let p = ManifoldPoint::psd_rank_one(DVector::from_vec(vec![1.0, 0.0])).unwrap();
        // Step -2 * zz^T: Z + xi = -zz^T has no positive eigenvalue.
        let xi = TangentVector::from_ambient_unchecked(
            p.clone(),
            mat(2, 2, |i, j| if i == 0 && j == 0 { -2.0 } else { 0.0 }),
        );
        assert!(matches!(p.retract(&xi), Err(Error::DegenerateRetraction(_))));
    }

    #[test]
    fn box_retraction_clamps() {
        let p = ManifoldPoint::box_point(1.9, 0.9).unwrap();
        let xi = TangentVector::from_ambient_unchecked(
            p.clone(),
            mat(2, 1, |i, _| if i == 0 { 1.0 } else { 0.5 }),
        );
        match p.retract(&xi).unwrap() {
            ManifoldPoint::Box { x, y } => {
                assert_eq!(x, BOX_X_RANGE.1);
                assert_eq!(y, BOX_Y_RANGE.1);
            }
            _ => panic!("box retraction changed manifolds"),
        }
    }

    #[test]
    fn psd_projection_splits_into_parts() {
        let p = random_point(&ManifoldSpec::PsdRankOne { n: 4 }, 11);
        let y = mat(4, 4, |i, j| ((i * 2 + j) as f64).sin());
        let xi = p.project_tangent(&y).unwrap();
        let parts = xi.psd_parts().expect("psd tangent carries parts");
        let u = match &p {
            ManifoldPoint::PsdRankOne { z } => z / z.norm(),
            _ => unreachable!(),
        };
        // Reassemble w uu^T + uv^T + vu^T and compare.
        let rebuilt = &u * u.transpose() * parts.w
            + &u * parts.v.transpose()
            + &parts.v * u.transpose();
        assert!((xi.ambient().matrix() - rebuilt).norm() < 1e-12);
        assert!(parts.v.dot(&u).abs() < 1e-12);
    }

    #[test]
    fn random_points_are_deterministic_and_valid() {
        for spec in [
            ManifoldSpec::Sphere { n: 8 },
            ManifoldSpec::Stiefel { n: 6, m: 3 },
            ManifoldSpec::PsdRankOne { n: 5 },
            ManifoldSpec::FixedRankAsym { nrows: 4, ncols: 5, rank: 2 },
            ManifoldSpec::Box,
        ] {
            let a = random_point(&spec, 42);
            let b = random_point(&spec, 42);
            assert_eq!(a.ambient_distance(&b), 0.0, "{spec:?} not reproducible");
            a.check_invariants().unwrap();
        }
    }

    #[test]
    fn tangent_constraint_residuals_vanish() {
        for spec in [
            ManifoldSpec::Sphere { n: 5 },
            ManifoldSpec::Stiefel { n: 5, m: 2 },
            ManifoldSpec::PsdRankOne { n: 4 },
        ] {
            let p = random_point(&spec, 9);
            let (r, c) = p.ambient_shape();
            let xi = p
                .project_tangent(&mat(r, c, |i, j| ((i + 2 * j + 1) as f64).cos()))
                .unwrap();
            assert!(xi.constraint_residual() < 1e-10, "{spec:?}");
            assert!(xi.is_based_at(&p));
        }
    }
}
