//! Real-valued phase retrieval on the PSD rank-1 manifold: the population
//! (expectation) objective with its closed-form landscape, the finite
//! Gaussian-measurement realization, Newton enumeration of the critical
//! points of the first-order system, and the ring-saddle Rayleigh bound.

use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::ambient::AmbientVector;
use crate::error::{Error, Result};
use crate::manifold::{gaussian_matrix, gaussian_vector, sym, ManifoldPoint, TangentVector};
use crate::objective::Objective;

/// A frozen set of Gaussian sensing vectors with the intensities they
/// induce on a ground-truth signal: y_j = |a_j^T x|^2.
#[derive(Debug, Clone)]
pub struct Measurements {
    /// m-by-n matrix whose rows are the sensing vectors a_j.
    pub a: DMatrix<f64>,
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub seed: u64,
}

impl Measurements {
    /// Draws m i.i.d. standard normal sensing vectors for the given signal.
    pub fn gaussian(x: DVector<f64>, m: usize, seed: u64) -> Result<Self> {
        if m == 0 {
            return Err(Error::Parameter("need at least one measurement".into()));
        }
        if x.norm() == 0.0 {
            return Err(Error::Parameter("ground truth signal is zero".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = gaussian_matrix(m, x.len(), &mut rng);
        let y = DVector::from_fn(m, |j, _| {
            let aj = a.row(j).transpose();
            aj.dot(&x).powi(2)
        });
        Ok(Measurements { a, x, y, seed })
    }

    pub fn m(&self) -> usize {
        self.a.nrows()
    }

    pub fn n(&self) -> usize {
        self.a.ncols()
    }

    /// Largest relative defect between stored and recomputed intensities.
    pub fn intensity_defect(&self) -> f64 {
        let mut worst = 0.0_f64;
        for j in 0..self.m() {
            let recomputed = self.a.row(j).transpose().dot(&self.x).powi(2);
            let scale = recomputed.abs().max(1.0);
            worst = worst.max((recomputed - self.y[j]).abs() / scale);
        }
        worst
    }

    /// Writes the measurement set as a columnar text file: a header line
    /// `n m seed`, m rows of a_j, then one row for x.
    pub fn save<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "{} {} {}", self.n(), self.m(), self.seed)?;
        for j in 0..self.m() {
            let row: Vec<String> = (0..self.n()).map(|i| format!("{:.17e}", self.a[(j, i)])).collect();
            writeln!(out, "{}", row.join(" "))?;
        }
        let xs: Vec<String> = self.x.iter().map(|v| format!("{v:.17e}")).collect();
        writeln!(out, "{}", xs.join(" "))
    }

    pub fn save_path<P: AsRef<Path>>(&self, path: P) -> std::io::Result<()> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.save(&mut file)
    }

    pub fn load<R: BufRead>(reader: &mut R) -> Result<Self> {
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parameter("empty measurement file".into()))?
            .map_err(|e| Error::Parameter(format!("read failure: {e}")))?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(Error::Parameter("malformed measurement header".into()));
        }
        let n: usize = parts[0].parse().map_err(|_| Error::Parameter("bad n".into()))?;
        let m: usize = parts[1].parse().map_err(|_| Error::Parameter("bad m".into()))?;
        let seed: u64 = parts[2].parse().map_err(|_| Error::Parameter("bad seed".into()))?;
        let mut parse_row = |expect: usize| -> Result<Vec<f64>> {
            let line = lines
                .next()
                .ok_or_else(|| Error::Parameter("truncated measurement file".into()))?
                .map_err(|e| Error::Parameter(format!("read failure: {e}")))?;
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|_| Error::Parameter("bad value".into())))
                .collect::<Result<_>>()?;
            if vals.len() != expect {
                return Err(Error::Parameter("row length mismatch".into()));
            }
            Ok(vals)
        };
        let mut a = DMatrix::zeros(m, n);
        for j in 0..m {
            let row = parse_row(n)?;
            for i in 0..n {
                a[(j, i)] = row[i];
            }
        }
        let x = DVector::from_vec(parse_row(n)?);
        let y = DVector::from_fn(m, |j, _| a.row(j).transpose().dot(&x).powi(2));
        Ok(Measurements { a, x, y, seed })
    }
}

/// The hyper-ring region around {|Z|_F = |X|_F/3, <Z,X> = 0} used in the
/// Rayleigh-bound theorem.
#[derive(Debug, Clone, Copy)]
pub struct RingRegion {
    pub delta0: f64,
}

impl RingRegion {
    pub fn new(delta0: f64) -> Result<Self> {
        if !(delta0 > 0.0 && delta0 < 1.0 / 3.0) {
            return Err(Error::Parameter(format!(
                "delta0 {delta0} outside (0, 1/3)"
            )));
        }
        Ok(RingRegion { delta0 })
    }

    /// Membership of the rank-1 matrix z z^T relative to the signal x.
    pub fn contains(&self, z: &DVector<f64>, x: &DVector<f64>) -> bool {
        let zf = z.norm_squared();
        let xf = x.norm_squared();
        if zf == 0.0 || xf == 0.0 {
            return false;
        }
        let corr = z.dot(x).powi(2);
        let ratio = zf / xf;
        corr <= self.delta0 * zf * xf
            && (1.0 / 3.0 - self.delta0..=1.0 / 3.0 + self.delta0).contains(&ratio)
    }
}

fn require_square(y: &AmbientVector, n: usize, what: &str) -> Result<()> {
    if y.shape() != (n, n) {
        return Err(Error::DimensionMismatch(format!(
            "{what} expects {n}x{n} arguments, got {:?}",
            y.shape()
        )));
    }
    Ok(())
}

/// Population objective: the expectation of the realization over Gaussian
/// measurements has the closed form
/// f(Z) = (3/2)|Z|^2 + (3/2)|X|^2 - |Z||X| - 2<Z,X> (Frobenius norms).
#[derive(Debug, Clone)]
pub struct ExpectationObjective {
    x: DVector<f64>,
    /// |X|_F = |x|^2 for X = x x^T.
    x_fro: f64,
}

impl ExpectationObjective {
    pub fn new(x: DVector<f64>) -> Result<Self> {
        if x.norm() == 0.0 {
            return Err(Error::Parameter("ground truth signal is zero".into()));
        }
        let x_fro = x.norm_squared();
        Ok(ExpectationObjective { x, x_fro })
    }

    pub fn signal(&self) -> &DVector<f64> {
        &self.x
    }

    fn x_outer(&self) -> DMatrix<f64> {
        &self.x * self.x.transpose()
    }
}

impl Objective for ExpectationObjective {
    fn ambient_shape(&self) -> (usize, usize) {
        (self.x.len(), self.x.len())
    }

    fn value(&self, point: &ManifoldPoint) -> Result<f64> {
        if let ManifoldPoint::PsdRankOne { z } = point {
            let zf = z.norm_squared();
            let corr = self.x.dot(z).powi(2);
            return Ok(1.5 * zf * zf + 1.5 * self.x_fro * self.x_fro - zf * self.x_fro
                - 2.0 * corr);
        }
        self.ambient_value(&point.ambient())
    }

    fn ambient_value(&self, y: &AmbientVector) -> Result<f64> {
        require_square(y, self.x.len(), "expectation objective")?;
        let zf = y.norm();
        let corr = (self.x.transpose() * y.matrix() * &self.x)[(0, 0)];
        Ok(1.5 * zf * zf + 1.5 * self.x_fro * self.x_fro - zf * self.x_fro - 2.0 * corr)
    }

    fn ambient_gradient_at(&self, y: &AmbientVector) -> Result<AmbientVector> {
        require_square(y, self.x.len(), "expectation objective")?;
        let zf = y.norm();
        if zf == 0.0 {
            return Err(Error::SingularPoint(
                "expectation gradient undefined at Z = 0".into(),
            ));
        }
        let g = y.matrix() * (3.0 - self.x_fro / zf) - self.x_outer() * 2.0;
        Ok(AmbientVector::from_matrix_unchecked(g))
    }

    fn ambient_hessian_action(&self, y: &AmbientVector, xi: &AmbientVector) -> Result<AmbientVector> {
        require_square(y, self.x.len(), "expectation objective")?;
        let zf = y.norm();
        if zf == 0.0 {
            return Err(Error::SingularPoint(
                "expectation Hessian undefined at Z = 0".into(),
            ));
        }
        let corr = y.dot(xi);
        let h = xi.matrix() * (3.0 - self.x_fro / zf) + y.matrix() * (self.x_fro * corr / zf.powi(3));
        Ok(AmbientVector::from_matrix_unchecked(h))
    }

    fn gradient_vec_action(&self, point: &ManifoldPoint, u: &DVector<f64>) -> Option<DVector<f64>> {
        let z = match point {
            ManifoldPoint::PsdRankOne { z } => z,
            _ => return None,
        };
        let zf = z.norm_squared();
        if zf == 0.0 {
            return None;
        }
        // G = (3 - |X|/|Z|) z z^T - 2 x x^T applied to u.
        let gu = z * ((3.0 - self.x_fro / zf) * z.dot(u)) - &self.x * (2.0 * self.x.dot(u));
        Some(gu)
    }
}

/// Finite-measurement objective f(Z) = (1/2m) sum_j <A_j, Z - X>^2 with
/// A_j = a_j a_j^T.
#[derive(Debug, Clone)]
pub struct RealizationObjective {
    meas: Measurements,
}

impl RealizationObjective {
    pub fn new(meas: Measurements) -> Self {
        RealizationObjective { meas }
    }

    pub fn measurements(&self) -> &Measurements {
        &self.meas
    }

    /// <A_j, Y> - y_j for every j.
    fn defects(&self, y: &AmbientVector) -> DVector<f64> {
        let ay = &self.meas.a * y.matrix();
        DVector::from_fn(self.meas.m(), |j, _| {
            ay.row(j).dot(&self.meas.a.row(j)) - self.meas.y[j]
        })
    }
}

impl Objective for RealizationObjective {
    fn ambient_shape(&self) -> (usize, usize) {
        (self.meas.n(), self.meas.n())
    }

    fn value(&self, point: &ManifoldPoint) -> Result<f64> {
        if let ManifoldPoint::PsdRankOne { z } = point {
            let az = &self.meas.a * z;
            let m = self.meas.m() as f64;
            let c = az.component_mul(&az) - &self.meas.y;
            return Ok(c.norm_squared() / (2.0 * m));
        }
        self.ambient_value(&point.ambient())
    }

    fn ambient_value(&self, y: &AmbientVector) -> Result<f64> {
        require_square(y, self.meas.n(), "realization objective")?;
        let c = self.defects(y);
        Ok(c.norm_squared() / (2.0 * self.meas.m() as f64))
    }

    fn ambient_gradient_at(&self, y: &AmbientVector) -> Result<AmbientVector> {
        require_square(y, self.meas.n(), "realization objective")?;
        let c = self.defects(y);
        let m = self.meas.m() as f64;
        // (1/m) A^T diag(c) A
        let scaled = DMatrix::from_fn(self.meas.m(), self.meas.n(), |j, i| {
            c[j] * self.meas.a[(j, i)]
        });
        Ok(AmbientVector::from_matrix_unchecked(
            self.meas.a.transpose() * scaled / m,
        ))
    }

    fn ambient_hessian_action(&self, y: &AmbientVector, xi: &AmbientVector) -> Result<AmbientVector> {
        require_square(y, self.meas.n(), "realization objective")?;
        require_square(xi, self.meas.n(), "realization objective")?;
        // f is quadratic in Y: Hessian action (1/m) sum <A_j, xi> A_j.
        let axi = &self.meas.a * xi.matrix();
        let d = DVector::from_fn(self.meas.m(), |j, _| axi.row(j).dot(&self.meas.a.row(j)));
        let m = self.meas.m() as f64;
        let scaled = DMatrix::from_fn(self.meas.m(), self.meas.n(), |j, i| {
            d[j] * self.meas.a[(j, i)]
        });
        Ok(AmbientVector::from_matrix_unchecked(
            self.meas.a.transpose() * scaled / m,
        ))
    }

    fn gradient_vec_action(&self, point: &ManifoldPoint, u: &DVector<f64>) -> Option<DVector<f64>> {
        let z = match point {
            ManifoldPoint::PsdRankOne { z } => z,
            _ => return None,
        };
        let az = &self.meas.a * z;
        let au = &self.meas.a * u;
        let c = az.component_mul(&az) - &self.meas.y;
        let m = self.meas.m() as f64;
        Some(self.meas.a.transpose() * c.component_mul(&au) / m)
    }
}

/// Left-hand side of the first-order system (divided by m):
/// (1/m) sum_j (|a_j^T z|^2 - y_j)(a_j^T z) a_j.
pub fn first_order_residual(z: &DVector<f64>, meas: &Measurements) -> DVector<f64> {
    let az = &meas.a * z;
    let c = az.component_mul(&az) - &meas.y;
    let m = meas.m() as f64;
    meas.a.transpose() * c.component_mul(&az) / m
}

/// Jacobian of `first_order_residual`:
/// (1/m) sum_j (3 |a_j^T z|^2 - y_j) a_j a_j^T.
pub fn first_order_jacobian(z: &DVector<f64>, meas: &Measurements) -> DMatrix<f64> {
    let az = &meas.a * z;
    let m = meas.m() as f64;
    let w = DVector::from_fn(meas.m(), |j, _| 3.0 * az[j] * az[j] - meas.y[j]);
    let scaled = DMatrix::from_fn(meas.m(), meas.n(), |j, i| w[j] * meas.a[(j, i)]);
    meas.a.transpose() * scaled / m
}

/// True iff the stacked sensing matrix has full column rank, certifying
/// that a^T_j z = 0 for all j forces z = 0 (and hence finitely many
/// critical points).
pub fn homogeneous_triviality_check(meas: &Measurements) -> bool {
    if meas.m() < meas.n() {
        return false;
    }
    let svd = meas.a.clone().svd(false, false);
    let sv = &svd.singular_values;
    let smax = sv.iter().cloned().fold(0.0_f64, f64::max);
    let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    smin > 1e-10 * smax
}

/// Enumerates real solutions of the first-order system by damped Newton
/// iteration from Gaussian starts (plus the known roots 0 and x), returning
/// representatives deduplicated modulo sign and sorted deterministically.
pub fn enumerate_critical_points(
    meas: &Measurements,
    n_starts: usize,
    newton_tol: f64,
    cluster_tol: f64,
    seed: u64,
) -> Result<Vec<DVector<f64>>> {
    let n = meas.n();
    if n > 6 {
        return Err(Error::Parameter(format!(
            "dense Newton enumeration limited to n <= 6, got {n}"
        )));
    }
    if !homogeneous_triviality_check(meas) {
        return Err(Error::Misuse(
            "sensing matrix is column rank deficient; root set may be infinite".into(),
        ));
    }
    if n_starts == 0 || !(newton_tol > 0.0) || !(cluster_tol > 0.0) {
        return Err(Error::Parameter("invalid enumeration parameters".into()));
    }
    let xnorm = meas.x.norm();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut starts: Vec<DVector<f64>> = vec![DVector::zeros(n), meas.x.clone()];
    for _ in 0..n_starts {
        starts.push(gaussian_vector(n, &mut rng) * xnorm);
    }

    let mut roots: Vec<DVector<f64>> = Vec::new();
    for start in &starts {
        let z = match newton_refine(meas, start, newton_tol, 200) {
            Ok(z) => z,
            Err(_) => continue,
        };
        // Deduplicate modulo sign.
        let duplicate = roots.iter().any(|root| {
            let d = (root - &z).norm().min((root + &z).norm());
            d < cluster_tol * xnorm
        });
        if !duplicate {
            roots.push(canonical_sign(z));
        }
    }
    roots.sort_by(|a, b| {
        a.norm()
            .partial_cmp(&b.norm())
            .unwrap()
            .then_with(|| a.iter().partial_cmp(b.iter()).unwrap())
    });
    Ok(roots)
}

/// Damped Newton iteration on the first-order system from a single start.
/// Halves the step until the residual decreases; fails on a singular
/// Jacobian, a stalled line search, or missing the tolerance within
/// `max_iters` outer iterations.
pub fn newton_refine(
    meas: &Measurements,
    start: &DVector<f64>,
    newton_tol: f64,
    max_iters: usize,
) -> Result<DVector<f64>> {
    if start.nrows() != meas.n() {
        return Err(Error::DimensionMismatch(format!(
            "start has {} entries, measurements expect {}",
            start.nrows(),
            meas.n()
        )));
    }
    let mut z = start.clone();
    let mut r = first_order_residual(&z, meas);
    let mut rnorm = r.norm();
    for _ in 0..max_iters {
        if rnorm <= newton_tol {
            return Ok(z);
        }
        let jac = first_order_jacobian(&z, meas);
        let delta = jac
            .lu()
            .solve(&r)
            .ok_or_else(|| Error::IllConditioned("singular Newton Jacobian".into()))?;
        let mut t = 1.0;
        let mut advanced = false;
        for _ in 0..60 {
            let cand = &z - &delta * t;
            let rc = first_order_residual(&cand, meas);
            if rc.norm() < rnorm {
                z = cand;
                r = rc;
                rnorm = r.norm();
                advanced = true;
                break;
            }
            t *= 0.5;
        }
        if !advanced {
            return Err(Error::IllConditioned("Newton line search stalled".into()));
        }
    }
    if rnorm <= newton_tol {
        Ok(z)
    } else {
        Err(Error::IllConditioned(format!(
            "Newton residual {rnorm:.3e} above tolerance {newton_tol:.3e}"
        )))
    }
}

fn canonical_sign(mut z: DVector<f64>) -> DVector<f64> {
    if let Some(first) = z.iter().find(|v| v.abs() > 1e-300) {
        if *first < 0.0 {
            z = -z;
        }
    }
    z
}

/// Hessian Rayleigh quotient along xi = x u^T + u x^T at a first-order
/// point z z^T:
/// (1/m) sum_j (3|a_j^T z|^2 |a_j^T x|^2 - |a_j^T x|^4) / (|z|^2|x|^2 + <x,z>^2).
pub fn ring_rayleigh_bound(z: &DVector<f64>, meas: &Measurements, x: &DVector<f64>) -> Result<f64> {
    if z.norm() == 0.0 {
        return Err(Error::SingularPoint("Rayleigh bound undefined at z = 0".into()));
    }
    let az = &meas.a * z;
    let ax = &meas.a * x;
    let m = meas.m() as f64;
    let mut num = 0.0;
    for j in 0..meas.m() {
        let zj2 = az[j] * az[j];
        let xj2 = ax[j] * ax[j];
        num += 3.0 * zj2 * xj2 - xj2 * xj2;
    }
    let denom = z.norm_squared() * x.norm_squared() + x.dot(z).powi(2);
    Ok(num / m / denom)
}

/// Closed-form upper bound Lambda(delta0, delta1) on the ring Rayleigh
/// quotient; Lambda(0,0) = -6 and Lambda < -1 for delta0 < 1/6,
/// delta1 < 5/36.
pub fn lambda_bound(delta0: f64, delta1: f64) -> f64 {
    let third = 1.0 / 3.0;
    let num = 3.0 * (1.0 + delta1) * (third + delta0 + 2.0 * delta0 * (third + delta0))
        - (3.0 - delta1);
    let denom = (third + delta0) + delta0 * (third + delta0);
    num / denom
}

/// The negative-curvature direction xi = x u^T + u x^T at Z = z z^T, in
/// structured form (w = 2 u^T x, v = x - u u^T x).
pub fn ring_saddle_direction(point: &ManifoldPoint, x: &DVector<f64>) -> Result<TangentVector> {
    let z = match point {
        ManifoldPoint::PsdRankOne { z } => z,
        _ => return Err(Error::Misuse("expected a PSD rank-1 point".into())),
    };
    if z.len() != x.len() {
        return Err(Error::DimensionMismatch("signal length".into()));
    }
    let u = z / z.norm();
    let xi = sym(&(x * u.transpose() * 2.0));
    Ok(TangentVector::from_ambient_unchecked(
        point.clone(),
        AmbientVector::from_matrix_unchecked(xi),
    ))
}
