//! End-to-end acceptance gate: twelve numbered checks, each printing a
//! single PASS/FAIL line. Run with `cargo test --test acceptance -- --nocapture`
//! to see the lines; a failed check also fails its test.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use saddle_lab::eigen::{
    assemble_operator, deflated_second_state, dense_spectrum, refine_eigenstate,
    subspace_distance, KPConfig, LinearSphereObjective, NonlinearSphereObjective,
    StiefelTraceObjective,
};
use saddle_lab::manifold::ManifoldPoint;
use saddle_lab::phase_retrieval::{
    enumerate_critical_points, homogeneous_triviality_check, lambda_bound, newton_refine,
    ring_rayleigh_bound, ring_saddle_direction, ExpectationObjective, Measurements,
    RealizationObjective, RingRegion,
};
use saddle_lab::svc::{build_svc, escape_failure_experiment, p_eval, PVariant, IN_V_LABEL};
use saddle_lab::{
    derive_seeds, escape_monte_carlo, fd_gradient_check, hessian_quadform, hessian_spectrum,
    pgd_map_jacobian_check, random_point, retraction_order_check, run_pgd, AmbientVector,
    HessianProbe, LimitClass, ManifoldSpec, PGDConfig,
};

fn report(id: u32, name: &str, pass: bool) {
    println!("[acceptance {id:02}] {name}: {}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "acceptance criterion {id} ({name}) failed");
}

fn unit_vector(n: usize, seed: u64) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DVector::from_fn(n, |_, _| rng.gen_range(-1.0f64..1.0)).normalize()
}

fn sphere_coords(p: &ManifoldPoint) -> DVector<f64> {
    match p {
        ManifoldPoint::Sphere { z } => z.clone(),
        _ => panic!("expected a sphere point"),
    }
}

fn psd_factor(p: &ManifoldPoint) -> DVector<f64> {
    match p {
        ManifoldPoint::PsdRankOne { z } => z.clone(),
        _ => panic!("expected a PSD rank-1 point"),
    }
}

/// Orthogonal complement direction used to place points on the saddle ring
/// {|Z|_F = |X|_F/3, <Z,X> = 0}: z = sqrt(|x|^2/3) u with u unit, u _|_ x.
fn ring_factor(x: &DVector<f64>, seed: u64) -> DVector<f64> {
    let mut u = unit_vector(x.len(), seed);
    u -= x * (x.dot(&u) / x.norm_squared());
    u.normalize() * (x.norm_squared() / 3.0).sqrt()
}

#[test]
fn acceptance_01_ring_hessian_value() {
    let start = Instant::now();
    let n = 8;
    let mut pass = true;
    for k in 0..20u64 {
        let xf: f64 = [0.5, 1.0, 2.0][(k % 3) as usize];
        let x = unit_vector(n, 1000 + k) * xf.sqrt();
        let z = ring_factor(&x, 2000 + k);
        let point = ManifoldPoint::psd_rank_one(z).unwrap();
        let obj = ExpectationObjective::new(x.clone()).unwrap();
        let xi = ring_saddle_direction(&point, &x).unwrap();
        let expected = -12.0 * xf;
        let qa = hessian_quadform(&obj, &point, &xi, &HessianProbe::analytic()).unwrap();
        let qr =
            hessian_quadform(&obj, &point, &xi, &HessianProbe::retraction_composition(1e-4))
                .unwrap();
        pass &= (qa - expected).abs() <= 1e-8 * expected.abs();
        pass &= (qr - expected).abs() <= 1e-4 * expected.abs();
        pass &= qa < 0.0;
    }
    pass &= start.elapsed() < Duration::from_secs(1);
    report(1, "ring Hessian equals -12|X|_F in both probe modes", pass);
}

#[test]
fn acceptance_02_expectation_escape() {
    let start = Instant::now();
    let n = 64;
    let x = unit_vector(n, 7);
    let obj = ExpectationObjective::new(x.clone()).unwrap();
    let config = PGDConfig {
        step_size: 1.0 / 3.0,
        max_iters: 500,
        grad_tol: 0.0,
        record_every: 500,
    };
    let x_outer = &x * x.transpose();
    let x_signal = x.clone();
    let ring = RingRegion::new(0.15).unwrap();
    let x_ring = x.clone();
    let references = vec![
        LimitClass::new("signal", move |p, tol| {
            let z = psd_factor(p);
            (&z * z.transpose() - &x_outer).norm() / x_outer.norm() < tol
        }),
        LimitClass::new("ring-saddle", move |p, _| ring.contains(&psd_factor(p), &x_ring)),
    ];
    let _ = x_signal;
    let stats = escape_monte_carlo(
        &obj,
        &ManifoldSpec::PsdRankOne { n },
        &config,
        &references,
        1e-6,
        &derive_seeds(42, 100),
    )
    .unwrap();
    let pass = stats.count("signal") == 100
        && stats.count("ring-saddle") == 0
        && start.elapsed() < Duration::from_secs(10);
    report(2, "expectation phase retrieval escapes the ring 100/100", pass);
}

#[test]
fn acceptance_03_realization_recovery() {
    let start = Instant::now();
    let n = 64;
    let x = unit_vector(n, 9);
    let meas = Measurements::gaussian(x.clone(), 12 * n, 2024).unwrap();
    let obj = RealizationObjective::new(meas);
    let config = PGDConfig {
        step_size: 1.0 / 3.0,
        max_iters: 10_000,
        grad_tol: 1e-10,
        record_every: 10_000,
    };
    let x_outer = &x * x.transpose();
    let mut successes = 0;
    for seed in derive_seeds(5, 100) {
        let p0 = random_point(&ManifoldSpec::PsdRankOne { n }, seed);
        let traj = run_pgd(&p0, &obj, &config).unwrap();
        let z = psd_factor(traj.final_point());
        if (&z * z.transpose() - &x_outer).norm() / x_outer.norm() < 1e-6 {
            successes += 1;
        }
    }
    let mut fd_ok = true;
    for seed in 0..20u64 {
        let p = random_point(&ManifoldSpec::PsdRankOne { n }, 500 + seed);
        let check = fd_gradient_check(&obj, &p, 1e-5, 5, seed).unwrap();
        fd_ok &= check.passes(1e-5);
    }
    let pass = successes >= 95 && fd_ok && start.elapsed() < Duration::from_secs(60);
    report(3, "realization phase retrieval recovers >= 95/100", pass);
}

#[test]
fn acceptance_04_finiteness_at_desk_scale() {
    let x = DVector::from_vec(vec![0.6, -0.8]);
    let meas = Measurements::gaussian(x, 4, 11).unwrap();
    let counts: Vec<usize> = [100usize, 200, 400]
        .iter()
        .map(|&starts| {
            enumerate_critical_points(&meas, starts, 1e-12, 1e-6, 33)
                .unwrap()
                .len()
        })
        .collect();
    let stable = counts[0] == counts[1] && counts[1] == counts[2] && counts[0] <= 9;

    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut trivial = 0;
    for _ in 0..100 {
        let n = rng.gen_range(1usize..=8);
        let m = n + rng.gen_range(0usize..=8);
        let x = unit_vector(n, rng.gen());
        let meas = Measurements::gaussian(x, m, rng.gen()).unwrap();
        if homogeneous_triviality_check(&meas) {
            trivial += 1;
        }
    }
    report(4, "Newton root count stable and triviality 100/100", stable && trivial == 100);
}

#[test]
fn acceptance_05_rayleigh_formula_on_the_ring() {
    let n = 16;
    let x = unit_vector(n, 31);
    let meas = Measurements::gaussian(x.clone(), 12 * n, 99).unwrap();
    let obj = RealizationObjective::new(meas.clone());
    let region = RingRegion::new(0.15).unwrap();

    // Newton-refine from starts seeded on the expectation saddle ring and
    // deduplicate modulo sign.
    let mut roots: Vec<DVector<f64>> = Vec::new();
    for seed in derive_seeds(71, 200) {
        let start = ring_factor(&x, seed);
        let z = match newton_refine(&meas, &start, 1e-12, 200) {
            Ok(z) => z,
            Err(_) => continue,
        };
        if z.norm() < 1e-6 * x.norm()
            || roots
                .iter()
                .any(|r| (r - &z).norm().min((r + &z).norm()) < 1e-6 * x.norm())
        {
            continue;
        }
        roots.push(z);
    }

    let mut in_region = 0;
    let mut pass = true;
    for z in &roots {
        if !region.contains(z, &x) {
            continue;
        }
        in_region += 1;
        let point = ManifoldPoint::psd_rank_one(z.clone()).unwrap();
        let xi = ring_saddle_direction(&point, &x).unwrap();
        let quad = hessian_quadform(&obj, &point, &xi, &HessianProbe::analytic()).unwrap()
            / xi.norm().powi(2);
        let rayleigh = ring_rayleigh_bound(z, &meas, &x).unwrap();
        pass &= (quad - rayleigh).abs() <= 1e-6 * rayleigh.abs();
        pass &= rayleigh < 0.0;
    }
    pass &= in_region > 0;

    // Closed-form bound on the admissible (delta0, delta1) rectangle.
    for i in 0..12 {
        for j in 0..12 {
            let d0 = i as f64 / 12.0 * (1.0 / 6.0) * 0.999;
            let d1 = j as f64 / 12.0 * (5.0 / 36.0) * 0.999;
            pass &= lambda_bound(d0, d1) < -1.0;
        }
    }
    report(5, "ring Rayleigh bound matches the Hessian quadform", pass);
}

#[test]
fn acceptance_06_sphere_linear_eigenproblem() {
    let kp = KPConfig::default();
    let op = assemble_operator(&kp).unwrap();
    let (vals, vecs) = dense_spectrum(&op.a);
    let obj = LinearSphereObjective::new(&op.a).unwrap();
    let config = PGDConfig {
        step_size: 0.01,
        max_iters: 2_000_000,
        grad_tol: 1e-5,
        record_every: 1_000_000,
    };
    let ground_vec = vecs.column(0).into_owned();
    let ground_val = vals[0];
    let obj_for_class = obj.clone();
    let mut references = vec![LimitClass::new("ground", move |p, _| {
        let z = sphere_coords(p);
        let dist = (&z - &ground_vec).norm().min((&z + &ground_vec).norm());
        dist < 1e-3 && (obj_for_class.rayleigh(&z) - ground_val).abs() < 1e-8
    })];
    for s in 1..6 {
        let vs = vecs.column(s).into_owned();
        references.push(LimitClass::new(&format!("excited-{s}"), move |p, _| {
            let z = sphere_coords(p);
            (&z - &vs).norm().min((&z + &vs).norm()) < 1e-3
        }));
    }
    let stats = escape_monte_carlo(
        &obj,
        &ManifoldSpec::Sphere { n: kp.n },
        &config,
        &references,
        1e-3,
        &derive_seeds(77, 100),
    )
    .unwrap();
    let excited: usize = (1..6).map(|s| stats.count(&format!("excited-{s}"))).sum();
    report(6, "linear eigensolver reaches +/-v1 100/100", stats.count("ground") == 100 && excited == 0);
}

#[test]
fn acceptance_07_nonlinear_eigenstates() {
    let beta = 1.0;
    let kp = KPConfig::default();
    let op = assemble_operator(&kp).unwrap();
    let obj = NonlinearSphereObjective::new(&op.a, beta).unwrap();
    let config = PGDConfig {
        step_size: 0.01,
        max_iters: 2_000_000,
        grad_tol: 5e-7,
        record_every: 1_000_000,
    };
    let start = random_point(&ManifoldSpec::Sphere { n: kp.n }, 123);
    let traj = run_pgd(&start, &obj, &config).unwrap();
    let (v1, _) = refine_eigenstate(&op.a, beta, &sphere_coords(traj.final_point()), 100).unwrap();

    let state = deflated_second_state(&op.a, beta, &v1, &config, 321).unwrap();
    let v2 = sphere_coords(&state.point);

    // The residual |Av + beta v^3 - lambda v| with lambda = 2f + (beta/2) sum v^4.
    let mut pass = obj.eigen_residual(&v1) <= 1e-6;
    pass &= obj.eigen_residual(&v2) <= 1e-6;
    pass &= state.converged;
    let spectrum = hessian_spectrum(&obj, &state.point, &HessianProbe::analytic(), false).unwrap();
    pass &= spectrum.lambda_min < 0.0;
    report(7, "nonlinear eigenstates v1, v2 with a strict saddle at v2", pass);
}

#[test]
fn acceptance_08_stiefel_subspace_solver() {
    let m = 5;
    let kp = KPConfig::default();
    let op = assemble_operator(&kp).unwrap();
    let (vals, vecs) = dense_spectrum(&op.a);
    let obj = StiefelTraceObjective::new(&op.a, m).unwrap();
    let config = PGDConfig {
        step_size: 0.01,
        max_iters: 2_000_000,
        grad_tol: 1e-8,
        record_every: 1_000_000,
    };
    let start = random_point(&ManifoldSpec::Stiefel { n: kp.n, m }, 888);
    let traj = run_pgd(&start, &obj, &config).unwrap();
    let frame = match traj.final_point() {
        ManifoldPoint::Stiefel { frame } => frame.clone(),
        _ => unreachable!(),
    };
    let lead = vecs.columns(0, m).into_owned();
    let mut pass = subspace_distance(&frame, &lead) <= 1e-6;
    for (ritz, exact) in obj.ritz_values(&frame).iter().zip(vals.iter()) {
        pass &= (ritz - exact).abs() <= 1e-6 * exact.abs().max(1.0);
    }
    report(8, "Stiefel solver recovers the leading 5-dim eigenspace", pass);
}

#[test]
fn acceptance_09_svc_counterexample() {
    let start = Instant::now();
    let svc20 = build_svc(20).unwrap();
    let expected = 1.0 - 0.5 * (1.0 - 0.5_f64.powi(20));
    let mut pass = (svc20.measure() - expected).abs() <= 1e-12;

    // Knot continuity of the variant-A bump on every removed interval.
    for &(a, b) in svc20.removed().unwrap().iter().take(10_000) {
        let len = b - a;
        for knot in [a + 0.25 * len, b - 0.25 * len] {
            let eps = 1e-14 * len;
            let (vl, dl) = p_eval(knot - eps, PVariant::A, &svc20).unwrap();
            let (vr, dr) = p_eval(knot + eps, PVariant::A, &svc20).unwrap();
            pass &= (vl - vr).abs() <= 1e-10 && (dl - dr).abs() <= 1e-10;
        }
    }

    let svc = build_svc(30).unwrap();
    let config = PGDConfig {
        step_size: 0.05,
        max_iters: 20_000,
        grad_tol: 1e-12,
        record_every: 20_000,
    };
    let stats =
        escape_failure_experiment(PVariant::A, &svc, &config, &derive_seeds(9, 20_000)).unwrap();
    let in_v = stats.fraction(IN_V_LABEL);
    pass &= (1.0 / 6.0 - 0.01..=1.0 / 6.0 + 0.01).contains(&in_v);
    pass &= start.elapsed() < Duration::from_secs(60);
    report(9, "SVC measure, 1/6 stuck fraction, knot continuity", pass);
}

#[test]
fn acceptance_10_linearization_identity() {
    // Quadratic sphere saddle.
    let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0, 3.0]));
    let lin = LinearSphereObjective::new(&a).unwrap();
    let e2 = ManifoldPoint::sphere(DVector::from_vec(vec![0.0, 1.0, 0.0])).unwrap();
    let mut pass = pgd_map_jacobian_check(&lin, &e2, 0.01, 1e-5).unwrap() <= 1e-4;

    // Expectation phase-retrieval ring point, n = 16.
    let n = 16;
    let x = unit_vector(n, 61);
    let obj = ExpectationObjective::new(x.clone()).unwrap();
    let ring_point = ManifoldPoint::psd_rank_one(ring_factor(&x, 62)).unwrap();
    pass &= pgd_map_jacobian_check(&obj, &ring_point, 1.0 / 3.0, 1e-5).unwrap() <= 1e-3;

    // Deviation shrinks at least linearly in the step.
    let coarse = pgd_map_jacobian_check(&obj, &ring_point, 1.0 / 3.0, 1e-3).unwrap();
    let fine = pgd_map_jacobian_check(&obj, &ring_point, 1.0 / 3.0, 1e-4).unwrap();
    pass &= fine <= coarse / 5.0;
    report(10, "PGD map Jacobian equals I - a Hess f at fixed points", pass);
}

#[test]
fn acceptance_11_retraction_order() {
    let alphas = [1e-1, 1e-2, 1e-3, 1e-4];
    let mut rng = ChaCha8Rng::seed_from_u64(1100);
    let mut check = |spec: ManifoldSpec, want_second: bool| -> bool {
        let p = random_point(&spec, rng.gen());
        let (r, c) = p.ambient_shape();
        let raw = DMatrix::from_fn(r, c, |_, _| rng.gen_range(-1.0f64..1.0));
        let xi = p
            .project_tangent(&AmbientVector::from_matrix(raw).unwrap())
            .unwrap();
        let rep = retraction_order_check(&p, &xi, &alphas).unwrap();
        rep.slope_first >= 0.9 && (!want_second || rep.slope_second >= 1.9)
    };
    let mut pass = check(ManifoldSpec::Sphere { n: 6 }, false);
    pass &= check(ManifoldSpec::Stiefel { n: 6, m: 2 }, false);
    pass &= check(ManifoldSpec::FixedRankAsym { nrows: 5, ncols: 4, rank: 2 }, false);
    pass &= check(ManifoldSpec::PsdRankOne { n: 8 }, true);
    pass &= check(ManifoldSpec::Box, false);
    report(11, "retraction order slopes (second order on PSD rank-1)", pass);
}

#[test]
fn acceptance_12_geometry_dimensions() {
    let mut pass = true;
    for n1 in 1usize..=8 {
        for n2 in 1usize..=8 {
            for r in 1..=3usize.min(n1).min(n2) {
                for s in 1..=r {
                    let mut rng = ChaCha8Rng::seed_from_u64((n1 * 64 + n2 * 8 + r + s) as u64);
                    // A generic rank-s matrix inside the rank-<=r variety.
                    let left = DMatrix::from_fn(n1, s, |_, _| rng.gen_range(-1.0f64..1.0));
                    let right = DMatrix::from_fn(s, n2, |_, _| rng.gen_range(-1.0f64..1.0));
                    let p = ManifoldPoint::fixed_rank_from_matrix(&(left * right), r).unwrap();
                    assert_eq!(p.rank(), s, "construction must not lose rank");
                    // Numerical rank of the tangent projection as a linear
                    // map on the n1*n2 ambient space.
                    let dim = n1 * n2;
                    let mut proj = DMatrix::zeros(dim, dim);
                    for j in 0..dim {
                        let mut e = DMatrix::zeros(n1, n2);
                        e[(j % n1, j / n1)] = 1.0;
                        let out = p
                            .project_tangent(&AmbientVector::from_matrix(e).unwrap())
                            .unwrap();
                        proj.set_column(j, &DVector::from_column_slice(
                            out.ambient().matrix().as_slice(),
                        ));
                    }
                    let rank = proj
                        .svd(false, false)
                        .singular_values
                        .iter()
                        .filter(|&&sv| sv > 0.5)
                        .count();
                    pass &= rank == (n1 + n2 - s) * s;
                }
            }
        }
    }
    report(12, "tangent projection rank is (n1+n2-s)s exhaustively", pass);
}
