//! Projected gradient descent on embedded manifolds, with a laboratory for
//! probing saddle points: Riemannian Hessian spectra, critical-point
//! classification, linearized-map checks, and Monte-Carlo statistics of
//! where randomly initialized trajectories end up.
//!
//! Supported geometries: the unit sphere, Stiefel frames, bounded-rank
//! matrix varieties (asymmetric, and the symmetric PSD rank-1 cone), and a
//! flat rectangular box. Problem libraries cover real phase retrieval,
//! linear and Gross-Pitaevskii eigenproblems on a smoothed Kronig-Penney
//! operator, Stiefel trace minimization, and a Smith-Volterra-Cantor
//! landscape on which gradient descent provably fails to escape a
//! positive-measure saddle set.

pub mod ambient;
pub mod error;
pub mod escape;
pub mod hessian;
pub mod manifold;
pub mod objective;
pub mod parallel;
pub mod pgd;

pub mod eigen;
pub mod phase_retrieval;
pub mod svc;

pub use ambient::AmbientVector;
pub use error::{Error, Result};
pub use escape::{derive_seeds, escape_monte_carlo, escape_monte_carlo_from, EscapeStats};
pub use hessian::{
    classify_critical_point, hessian_matrix, hessian_quadform, hessian_spectrum,
    pgd_map_jacobian_check, tangent_basis, CriticalPointClass, CriticalPointReport, HessianMode,
    HessianProbe, HessianSpectrum,
};
pub use manifold::{
    random_point, random_point_with, retraction_order_check, ManifoldPoint, ManifoldSpec,
    PsdTangentParts, RetractionOrderReport, TangentVector,
};
pub use objective::{fd_gradient_check, riemannian_gradient, GradientCheckReport, Objective};
pub use pgd::{
    classify_limit, pgd_step, run_pgd, LimitClass, PGDConfig, Termination, Trajectory,
    UNDETERMINED_LABEL,
};
