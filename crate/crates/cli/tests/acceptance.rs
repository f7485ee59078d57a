//! Acceptance gate: every criterion the toolkit must meet, with oracles
//! computed independently inside this file wherever a closed form exists.
//! Run with `--nocapture` to see one "ACCEPTANCE n: PASS" line per
//! criterion.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use koopmourre::ergodic::{
    birkhoff_exact, birkhoff_map, deviation_curve, flow_time_average, invariant_measure_average,
    RotationMap,
};
use koopmourre::mourre::{
    bridge_check, certify, commutator_residual, conjugate_field, CertifyStatus, CertifySystem,
};
use koopmourre::opcalc::{
    assemble_koopman, translation_koopman, FreqWindow, StateVector, SystemOperator,
};
use koopmourre::specmeas::{
    classify, correlations_matrix, correlations_quadrature, required_quadrature_resolution,
    wiener_statistic, Thresholds,
};
use koopmourre::torusdyn::{
    FrequencyVector, FurstenbergSpec, SkewProductSpec, TimeChangeSpec, TorusPoint,
};
use koopmourre::trigfun::TrigPoly;

const GOLDEN: f64 = 0.6180339887498949;
const TAU: f64 = std::f64::consts::TAU;
const PI: f64 = std::f64::consts::PI;

fn golden_skew(eps: f64) -> SkewProductSpec {
    let y = FrequencyVector::new(vec![GOLDEN]).unwrap();
    let eta = if eps == 0.0 {
        TrigPoly::zero(1)
    } else {
        TrigPoly::sine(1, &[1], eps / TAU)
    };
    SkewProductSpec::new(y, vec![vec![1]], vec![eta], vec![1]).unwrap()
}

/// J_k(z) by its ascending series; exact to roundoff for |z| ≤ 1.
fn bessel_j(k: u32, z: f64) -> f64 {
    let half = 0.5 * z;
    // leading term (z/2)^k / k!
    let mut term = 1.0;
    for j in 1..=k {
        term *= half / j as f64;
    }
    let mut sum = term;
    for m in 1..40 {
        term *= -(half * half) / (m as f64 * (m as f64 + k as f64));
        sum += term;
        if term.abs() < 1e-300 {
            break;
        }
    }
    sum
}

#[test]
fn acceptance_01_commutator_identity_on_sampled_vectors() {
    let start = Instant::now();
    let spec = golden_skew(0.5);
    let sys = SystemOperator::Skew(&spec);
    let window = FreqWindow::new(1, 256, 32).unwrap();
    let r = commutator_residual(&sys, window, 1, 100, 42, 1e-14).unwrap();
    assert!(
        r.value <= 1e-9,
        "commutator identity residual {} over 100 vectors",
        r.value
    );
    assert!(r.value <= r.bound, "{} exceeds budget {}", r.value, r.bound);
    assert_eq!(r.trials, 100);
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() <= 10.0, "took {elapsed:?}");
    println!("ACCEPTANCE 1: PASS");
}

#[test]
fn acceptance_02_averaged_identity_with_eight_steps() {
    let start = Instant::now();
    let spec = golden_skew(0.5);
    let sys = SystemOperator::Skew(&spec);
    let window = FreqWindow::new(1, 256, 104).unwrap();
    // The stated geometry: the margin must absorb eight applications.
    let u = assemble_koopman(&sys, window, 1e-14).unwrap();
    assert!(
        104 >= 8 * u.band(),
        "margin 104 cannot absorb 8 applications of band {}",
        u.band()
    );
    let r = commutator_residual(&sys, window, 8, 100, 42, 1e-14).unwrap();
    assert!(r.value <= 1e-8, "averaged identity residual {}", r.value);
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() <= 30.0, "took {elapsed:?}");
    println!("ACCEPTANCE 2: PASS");
}

#[test]
fn acceptance_03_birkhoff_averages_are_exact() {
    let y = FrequencyVector::new(vec![GOLDEN]).unwrap();
    let g = TrigPoly::cosine(1, &[1], 1.0).add(&TrigPoly::sine(1, &[2], 0.3));
    let map = RotationMap::new(&y);
    let g_fn = |x: &[f64]| g.evaluate_real(x);
    let resolution = 512;
    for n in [10u64, 100, 1000] {
        let exact = birkhoff_exact(&g, &y, n).unwrap();
        let exact_grid = exact.sample_grid(resolution).unwrap();
        let marched = birkhoff_map(&g_fn, &map, resolution, n).unwrap();
        let max_diff = exact_grid
            .samples()
            .iter()
            .zip(marched.samples())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0f64, f64::max);
        assert!(max_diff <= 1e-11, "n={n}: exact vs marched differ {max_diff}");
    }

    // Closed form: the n-average of cos 2πx has sup-norm
    // (1/n)·|sin(πny)|/|sin(πy)|, evaluated here directly.
    let cosine = TrigPoly::cosine(1, &[1], 1.0);
    let ns = [10u64, 100, 1000];
    let curve = deviation_curve(&cosine, &y, &ns).unwrap();
    for (i, &n) in ns.iter().enumerate() {
        let oracle = (PI * n as f64 * GOLDEN).sin().abs() / (n as f64 * (PI * GOLDEN).sin().abs());
        let got = curve.sup_deviation()[i];
        assert!(
            (got - oracle).abs() <= 1e-12,
            "n={n}: deviation {got} vs closed form {oracle}"
        );
    }
    println!("ACCEPTANCE 3: PASS");
}

#[test]
fn acceptance_04_certification_with_sign_changing_average() {
    // ε = 1.5 makes the commutator multiplier (2πy)²(1 + 1.5cos 2πx) dip
    // negative pointwise, yet averaging certifies at least half the limit.
    let spec = golden_skew(1.5);
    let cert = certify(&CertifySystem::Skew(&spec), 64, None).unwrap();
    assert!(matches!(cert.status(), CertifyStatus::Certified));
    assert!(cert.n_star() >= 1);
    assert!(cert.n_star() <= 8, "n_star {}", cert.n_star());
    let half_limit = 0.5 * (TAU * GOLDEN).powi(2);
    assert!(
        cert.constant() >= half_limit,
        "constant {} below half the limit {half_limit}",
        cert.constant()
    );

    // A drift-free fiber violates the hypothesis and must say so.
    let y = FrequencyVector::new(vec![GOLDEN]).unwrap();
    let degenerate = SkewProductSpec::new(
        y,
        vec![vec![1], vec![-1]],
        vec![TrigPoly::zero(1), TrigPoly::zero(1)],
        vec![1, 1],
    )
    .unwrap();
    let cert = certify(&CertifySystem::Skew(&degenerate), 4, None).unwrap();
    assert!(matches!(cert.status(), CertifyStatus::Degenerate));
    println!("ACCEPTANCE 4: PASS");
}

#[test]
fn acceptance_05_triangular_averages_approach_one() {
    // Level 2 on T²: the certified constant approaches the uniform limit 1.
    let spec = FurstenbergSpec::new(
        GOLDEN,
        vec![vec![1]],
        vec![TrigPoly::sine(1, &[1], 1.5 / TAU)],
    )
    .unwrap();
    let cert = certify(&CertifySystem::Furstenberg { spec: &spec, j: 2 }, 64, None).unwrap();
    assert!(matches!(cert.status(), CertifyStatus::Certified));
    assert!(cert.n_star() <= 64);
    assert!(cert.constant() >= 0.9, "constant {}", cert.constant());

    // Level 3 on T³ with a harmonic perturbation completes certified.
    let spec3 = FurstenbergSpec::new(
        GOLDEN,
        vec![vec![1], vec![0, 1]],
        vec![
            TrigPoly::zero(1),
            TrigPoly::sine(2, &[0, 1], 0.5 / TAU),
        ],
    )
    .unwrap();
    let cert3 = certify(&CertifySystem::Furstenberg { spec: &spec3, j: 3 }, 16, None).unwrap();
    assert!(matches!(cert3.status(), CertifyStatus::Certified));
    assert!(cert3.constant() > 0.0);
    println!("ACCEPTANCE 5: PASS");
}

#[test]
fn acceptance_06_phaseless_fiber_has_exact_lebesgue_signature() {
    let spec = golden_skew(0.0);

    // Matrix path: one application shifts the support by the lattice
    // drift, so every positive-lag correlation vanishes identically.
    let window = FreqWindow::new(1, 1024, 2).unwrap();
    let u = assemble_koopman(&SystemOperator::Skew(&spec), window, 1e-14).unwrap();
    let phi = StateVector::basis(window, &[0]).unwrap();
    let c_matrix = correlations_matrix(&u, &phi, 1000, false).unwrap();
    for (k, z) in c_matrix.values().iter().enumerate().skip(1) {
        assert!(z.norm() <= 1e-12, "matrix c_{k} = {z}");
    }

    // Quadrature path agrees.
    let resolution = required_quadrature_resolution(&spec, 1000);
    assert_eq!(resolution, 2048);
    let c_quad = correlations_quadrature(&spec, 1000, resolution).unwrap();
    for (k, z) in c_quad.values().iter().enumerate().skip(1) {
        assert!(z.norm() <= 1e-12, "quadrature c_{k} = {z}");
    }

    let report = classify(&c_matrix, Thresholds::default()).unwrap();
    assert!(!report.indicators().point_detected);
    assert!(
        report.indicators().lebesgue_flatness <= 1e-10,
        "flatness {}",
        report.indicators().lebesgue_flatness
    );
    println!("ACCEPTANCE 6: PASS");
}

#[test]
fn acceptance_07_rotation_correlations_never_decay() {
    let y = FrequencyVector::new(vec![GOLDEN]).unwrap();
    let window = FreqWindow::new(1, 8, 2).unwrap();
    let u = translation_koopman(window, &y).unwrap();
    let phi = StateVector::basis(window, &[1]).unwrap();
    let c = correlations_matrix(&u, &phi, 10_000, false).unwrap();
    let wiener = wiener_statistic(&c);
    assert_eq!(wiener.len(), 10_000);
    let worst = wiener
        .iter()
        .map(|w| (w - 1.0).abs())
        .fold(0.0f64, f64::max);
    assert!(worst <= 1e-12, "max |W_N - 1| = {worst}");
    let report = classify(&c, Thresholds::default()).unwrap();
    assert!(report.indicators().point_detected);
    println!("ACCEPTANCE 7: PASS");
}

#[test]
fn acceptance_08_wiener_average_decays_for_the_twisted_fiber() {
    let spec = golden_skew(0.5);
    let n = 10_000;
    let resolution = required_quadrature_resolution(&spec, n);
    assert_eq!(resolution, 32_768);
    let c = correlations_quadrature(&spec, n, resolution).unwrap();
    let wiener = wiener_statistic(&c);
    let w_last = *wiener.last().unwrap();
    assert!(w_last <= 0.01, "W_N = {w_last}");

    // Independent oracle: the k-step cocycle phase is 0.5·R_k·sin(2πx+ψ),
    // R_k = |sin(πky)|/|sin(πy)|, so |c_k| = |J_k(0.5·R_k)| exactly. The
    // Bessel factors collapse past k ≈ 20; summing to 64 is already exact
    // to roundoff.
    let sin_base = (PI * GOLDEN).sin().abs();
    let mut oracle_sum = 0.0f64;
    for k in 1..=64u32 {
        let r_k = (PI * k as f64 * GOLDEN).sin().abs() / sin_base;
        let ck = bessel_j(k, 0.5 * r_k);
        oracle_sum += ck * ck;
    }
    let w_oracle = oracle_sum / n as f64;
    assert!(
        (w_last - w_oracle).abs() <= 1e-9,
        "W_N {w_last} vs Bessel oracle {w_oracle}"
    );
    println!("ACCEPTANCE 8: PASS");
}

#[test]
fn acceptance_09_bridge_between_discrete_and_flow_commutators() {
    let tight = bridge_check(8, 32, 42).unwrap();
    assert!(tight <= 1e-8, "order-32 bridge defect {tight}");
    let loose = bridge_check(8, 4, 42).unwrap();
    assert!(
        loose > tight,
        "order-4 defect {loose} should exceed order-32 defect {tight}"
    );
    println!("ACCEPTANCE 9: PASS");
}

#[test]
fn acceptance_10_time_change_preserves_the_weighted_average() {
    let y = FrequencyVector::new_flow_direction(vec![1.0]).unwrap();
    let f = TrigPoly::constant(1, 1.0).add(&TrigPoly::cosine(1, &[1], 0.3));
    let spec = TimeChangeSpec::new(y, f, vec![0.0]).unwrap();
    let phi_poly = TrigPoly::cosine(1, &[1], 1.0);
    let phi = |x: &[f64]| phi_poly.evaluate_real(x);

    // Closed form: ∫cos·f⁻¹dμ / ∫f⁻¹dμ = (√(1−0.09) − 1)/0.3.
    let oracle = ((1.0 - 0.09f64).sqrt() - 1.0) / 0.3;
    let inv = invariant_measure_average(&phi, &spec, 8192).unwrap();
    assert!((inv - oracle).abs() <= 1e-10, "{inv} vs {oracle}");

    let start = TorusPoint::new(vec![0.0]);
    let avg = flow_time_average(&phi, &spec, &start, 1e4, 1e-6).unwrap();
    assert!(
        (avg - (-0.153536)).abs() <= 1e-3,
        "flow average {avg} vs -0.153536"
    );
    println!("ACCEPTANCE 10: PASS");
}

#[test]
fn acceptance_11_averaged_multiplier_flattens_to_one_half() {
    let y = FrequencyVector::new_flow_direction(vec![1.0, GOLDEN]).unwrap();
    let (f, _) = TrigPoly::cosine(2, &[0, 1], 0.2).exp_real(1e-14).unwrap();
    let spec = TimeChangeSpec::new(y, f, vec![0.0, 1.0]).unwrap();
    let tol = 1e-6;
    let report = conjugate_field(&spec, 1e3, 16, tol).unwrap();
    assert!(
        report.g_l_sup_deviation <= 0.02,
        "sup |g_L - 1/2| = {} at L = 1000",
        report.g_l_sup_deviation
    );
    assert!(
        report.eq_residual_sup <= 10.0 * tol,
        "cohomology residual {}",
        report.eq_residual_sup
    );
    assert!(
        report.divergence_residual_sup <= 50.0 * tol,
        "divergence residual {}",
        report.divergence_residual_sup
    );
    println!("ACCEPTANCE 11: PASS");
}

#[test]
fn acceptance_12_reports_are_reproducible_byte_for_byte() {
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let runs = [
        ("certify", config.join("certify_skew_harmonic.toml")),
        ("spectrum", config.join("spectrum_skew_quadrature.toml")),
    ];
    for (cmd, cfg) in &runs {
        let out_a = scratch("accept12-a", cmd);
        let out_b = scratch("accept12-b", cmd);
        for out in [&out_a, &out_b] {
            let code = koopmourre_cli::run([
                "koopmourre",
                cmd,
                "--config",
                cfg.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
            ]);
            assert_eq!(code, 0, "{cmd} run failed");
        }
        let mut names: Vec<String> = fs::read_dir(&out_a)
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        names.sort();
        assert!(!names.is_empty());
        for name in &names {
            let a = fs::read(out_a.join(name)).unwrap();
            let b = fs::read(out_b.join(name)).unwrap();
            assert_eq!(a, b, "{cmd}/{name} differs between identical runs");
        }
        let _ = fs::remove_dir_all(&out_a);
        let _ = fs::remove_dir_all(&out_b);
    }
    println!("ACCEPTANCE 12: PASS");
}

fn scratch(tag: &str, sub: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!(
        "koopmourre-{}-{tag}-{sub}",
        std::process::id()
    ));
    let _ = fs::remove_dir_all(&dir);
    dir
}
