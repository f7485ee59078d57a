//! End-to-end runs of the command-line interface through its library entry
//! point: exit codes, report contents, and the determinism contract.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU32, Ordering};

static DIR_COUNTER: AtomicU32 = AtomicU32::new(0);

fn scratch_dir(tag: &str) -> PathBuf {
    let n = DIR_COUNTER.fetch_add(1, Ordering::Relaxed);
    let dir = std::env::temp_dir().join(format!(
        "koopmourre-cli-{}-{}-{tag}-{n}",
        std::process::id(),
        std::thread::current().name().unwrap_or("t").replace("::", "-")
    ));
    let _ = fs::remove_dir_all(&dir);
    dir
}

fn repo_config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

fn run(args: &[&str]) -> i32 {
    let mut full = vec!["koopmourre"];
    full.extend_from_slice(args);
    koopmourre_cli::run(full)
}

fn run_into(cmd: &str, config: &Path, out: &Path) -> i32 {
    run(&[
        cmd,
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ])
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name))
        .unwrap_or_else(|e| panic!("missing report {name} in {}: {e}", dir.display()))
}

fn report_field(text: &str, key: &str) -> String {
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix(key) {
            if let Some(value) = rest.strip_prefix(' ') {
                return value.to_string();
            }
        }
    }
    panic!("report has no line starting with {key:?}:\n{text}");
}

#[test]
fn zero_phase_skew_certifies_at_the_first_average() {
    let out = scratch_dir("plain");
    let code = run_into("certify", &repo_config("certify_skew_plain.toml"), &out);
    assert_eq!(code, 0);
    let text = read(&out, "certificate.txt");
    assert_eq!(report_field(&text, "status"), "certified");
    assert_eq!(report_field(&text, "n-star"), "1");
    // The deviation of a constant average is identically zero.
    assert_eq!(report_field(&text, "n-first-positive"), "1");
    let _ = fs::remove_dir_all(&out);
}

#[test]
fn degenerate_lattice_drift_exits_with_the_hypothesis_code() {
    let out = scratch_dir("degen");
    let code = run_into("certify", &repo_config("certify_skew_degenerate.toml"), &out);
    assert_eq!(code, 4);
    let text = read(&out, "certificate.txt");
    assert_eq!(report_field(&text, "status"), "degenerate");
    assert!(
        text.contains("N^T m"),
        "degenerate report must cite the nonzero-drift hypothesis:\n{text}"
    );
    let _ = fs::remove_dir_all(&out);
}

#[test]
fn harmonic_phase_certifies_after_longer_averages() {
    let out = scratch_dir("harmonic");
    let code = run_into("certify", &repo_config("certify_skew_harmonic.toml"), &out);
    assert_eq!(code, 0);
    let text = read(&out, "certificate.txt");
    assert_eq!(report_field(&text, "status"), "certified");
    let n_star: u64 = report_field(&text, "n-star").parse().unwrap();
    assert!(n_star > 1, "n-star {n_star} should exceed 1");
    // The independent sampled-vector identity check ran and passed.
    assert!(text.contains("commutator-window"));
    assert!(!text.contains("exceeded"));
    // The schedule table carries the certified infimum and the limit.
    let schedule = read(&out, "schedule.csv");
    assert!(schedule.starts_with("n,certified_infimum,limit_value\n"));
    let deviation = read(&out, "deviation.csv");
    assert!(deviation.starts_with("n,sup_deviation,limit_value\n"));
    let _ = fs::remove_dir_all(&out);
}

#[test]
fn triangular_level3_reports_the_plateau_honestly() {
    let out = scratch_dir("level3");
    let code = run_into("certify", &repo_config("certify_furstenberg_d3.toml"), &out);
    assert_eq!(code, 0);
    let text = read(&out, "certificate.txt");
    assert_eq!(report_field(&text, "status"), "certified");
    assert_eq!(report_field(&text, "n-first-positive"), "1");
    // The certified infimum plateaus below the early-exit threshold, so the
    // whole doubling schedule is reported and n-star is the argmax.
    assert_eq!(report_field(&text, "n-star"), "16");
    let constant: f64 = report_field(&text, "constant").parse().unwrap();
    assert!(constant > 0.4 && constant < 0.9, "constant {constant}");
    let _ = fs::remove_dir_all(&out);
}

#[test]
fn malformed_configs_are_rejected_with_diagnostics() {
    let out = scratch_dir("bad");
    let dir = scratch_dir("bad-configs");
    fs::create_dir_all(&dir).unwrap();

    // Unknown key.
    let p = dir.join("unknown.toml");
    fs::write(
        &p,
        "[system]\nclass = \"skew\"\nfrequency = [0.5]\nn_matrix = [[1]]\ncharacter = [1]\nwobble = 3\n",
    )
    .unwrap();
    assert_eq!(run_into("certify", &p, &out), 3);

    // Unknown class.
    let p = dir.join("class.toml");
    fs::write(&p, "[system]\nclass = \"solenoid\"\n").unwrap();
    assert_eq!(run_into("certify", &p, &out), 3);

    // Nonpositive tolerance.
    let p = dir.join("tol.toml");
    fs::write(
        &p,
        "[system]\nclass = \"skew\"\nfrequency = [0.6180339887498949]\nn_matrix = [[1]]\ncharacter = [1]\n\
         [window]\nm = 8\nmargin = 2\ntol = 0.0\n[mourre]\nn_max = 2\n",
    )
    .unwrap();
    assert_eq!(run_into("certify", &p, &out), 3);

    // A field from another class.
    let p = dir.join("foreign.toml");
    fs::write(
        &p,
        "[system]\nclass = \"skew\"\nfrequency = [0.6180339887498949]\nn_matrix = [[1]]\ncharacter = [1]\nrotation = 0.5\n[mourre]\nn_max = 2\n",
    )
    .unwrap();
    assert_eq!(run_into("certify", &p, &out), 3);

    // Missing config file.
    assert_eq!(run_into("certify", &dir.join("absent.toml"), &out), 3);

    // Missing required section for the command.
    let p = dir.join("no-mourre.toml");
    fs::write(
        &p,
        "[system]\nclass = \"skew\"\nfrequency = [0.6180339887498949]\nn_matrix = [[1]]\ncharacter = [1]\n",
    )
    .unwrap();
    assert_eq!(run_into("certify", &p, &out), 3);

    let _ = fs::remove_dir_all(&out);
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn anzai_phaseless_spectrum_is_flat() {
    let out = scratch_dir("anzai");
    let code = run_into("spectrum", &repo_config("spectrum_anzai_plain.toml"), &out);
    assert_eq!(code, 0);
    let text = read(&out, "spectral.txt");
    let flat: f64 = report_field(&text, "lebesgue-flatness").parse().unwrap();
    assert!(flat <= 1e-10, "flatness {flat}");
    assert_eq!(report_field(&text, "point-detected"), "false");
    // Every correlation at positive lag vanishes: the support leaves 0.
    let wiener: f64 = report_field(&text, "wiener-last").parse().unwrap();
    assert!(wiener <= 1e-20, "wiener {wiener}");
    let _ = fs::remove_dir_all(&out);
}

#[test]
fn rotation_block_detects_point_spectrum() {
    let out = scratch_dir("rotation");
    let code = run_into("spectrum", &repo_config("spectrum_rotation_block.toml"), &out);
    assert_eq!(code, 0);
    let text = read(&out, "spectral.txt");
    assert_eq!(report_field(&text, "point-detected"), "true");
    let wiener: f64 = report_field(&text, "wiener-last").parse().unwrap();
    assert!((wiener - 1.0).abs() <= 1e-12, "wiener {wiener}");
    let _ = fs::remove_dir_all(&out);
}

#[test]
fn quadrature_path_reports_its_source() {
    let out = scratch_dir("quadrature");
    let code = run_into(
        "spectrum",
        &repo_config("spectrum_skew_quadrature.toml"),
        &out,
    );
    assert_eq!(code, 0);
    let text = read(&out, "spectral.txt");
    assert_eq!(report_field(&text, "source"), "quadrature-path");
    // c_1 for phase amplitude ε = 0.5 is −J₁(0.5): the first-order Bessel
    // coefficient of exp(i·0.5·sin θ).
    let correlations = read(&out, "correlations.csv");
    let row: Vec<&str> = correlations.lines().nth(2).unwrap().split(',').collect();
    let c1: f64 = row[1].parse().unwrap();
    assert!((c1 - (-0.24226845767487)).abs() < 1e-12, "c1 {c1}");
    let _ = fs::remove_dir_all(&out);
}

#[test]
fn window_overflow_is_a_setup_error_unless_leakage_is_accepted() {
    let dir = scratch_dir("overflow-configs");
    fs::create_dir_all(&dir).unwrap();
    let base = "[system]\nclass = \"skew\"\nfrequency = [0.6180339887498949]\n\
                n_matrix = [[1]]\ncharacter = [1]\n\
                [window]\nm = 16\nmargin = 2\ntol = 1.0e-14\n";

    let p = dir.join("overflow.toml");
    fs::write(&p, format!("{base}[spectral]\nn = 64\n")).unwrap();
    let out = scratch_dir("overflow");
    assert_eq!(run_into("spectrum", &p, &out), 3);

    let p = dir.join("leakage.toml");
    fs::write(
        &p,
        format!("{base}[spectral]\nn = 64\naccept_leakage = true\n"),
    )
    .unwrap();
    assert_eq!(run_into("spectrum", &p, &out), 0);
    let text = read(&out, "spectral.txt");
    assert_eq!(report_field(&text, "leakage-accepted"), "true");

    let _ = fs::remove_dir_all(&out);
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn constant_density_flow_passes_every_residual() {
    let dir = scratch_dir("unit-flow-config");
    fs::create_dir_all(&dir).unwrap();
    let p = dir.join("unit.toml");
    fs::write(
        &p,
        "[system]\nclass = \"timechange\"\ndirection = [1.0, 0.6180339887498949]\n\
         density = [{ k = [0, 0], cos = 1.0 }]\nsecond_field = [0.0, 1.0]\n\
         [timechange]\nhorizons = [1.0, 4.0]\nresolution = 16\ntol = 1.0e-6\ngl_tol = 1.0e-9\n",
    )
    .unwrap();
    let out = scratch_dir("unit-flow");
    assert_eq!(run_into("timechange", &p, &out), 0);
    let text = read(&out, "timechange.txt");
    assert_eq!(report_field(&text, "status"), "pass");
    // With f ≡ 1 the multiplier is identically its limit 1/2.
    let dev: f64 = report_field(&text, "gl-deviation")
        .split(' ')
        .next()
        .unwrap()
        .parse()
        .unwrap();
    assert!(dev <= 1e-9, "gl deviation {dev}");
    let _ = fs::remove_dir_all(&out);
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn cosine_flow_matches_the_invariant_measure_average() {
    let out = scratch_dir("cosine-flow");
    let code = run_into("timechange", &repo_config("timechange_cosine_d1.toml"), &out);
    assert_eq!(code, 0);
    let text = read(&out, "timechange.txt");
    assert_eq!(report_field(&text, "status"), "pass");
    // ∫cos·f⁻¹dμ / ∫f⁻¹dμ for f = 1 + 0.3·cos is (√0.91 − 1)/0.3.
    let closed_form = (0.91f64.sqrt() - 1.0) / 0.3;
    let inv: f64 = report_field(&text, "birkhoff-invariant-average")
        .parse()
        .unwrap();
    assert!((inv - closed_form).abs() <= 1e-10, "{inv} vs {closed_form}");
    let flow: f64 = report_field(&text, "birkhoff-flow-average").parse().unwrap();
    assert!((flow - closed_form).abs() <= 1e-3, "{flow} vs {closed_form}");
    let _ = fs::remove_dir_all(&out);
}

#[test]
fn timechange_failure_exits_with_the_check_code() {
    let dir = scratch_dir("strict-flow-config");
    fs::create_dir_all(&dir).unwrap();
    let p = dir.join("strict.toml");
    // An unreachable g_L target at a short horizon must fail honestly.
    fs::write(
        &p,
        "[system]\nclass = \"timechange\"\ndirection = [1.0, 0.6180339887498949]\n\
         density_exp = [{ k = [0, 1], cos = 0.2 }]\nsecond_field = [0.0, 1.0]\n\
         [timechange]\nhorizons = [1.0]\nresolution = 16\ntol = 1.0e-6\ngl_tol = 1.0e-3\n",
    )
    .unwrap();
    let out = scratch_dir("strict-flow");
    assert_eq!(run_into("timechange", &p, &out), 2);
    let text = read(&out, "timechange.txt");
    assert_eq!(report_field(&text, "status"), "fail");
    assert!(text.contains("verdict exceeded"));
    let _ = fs::remove_dir_all(&out);
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn identical_config_and_seed_reproduce_byte_identical_reports() {
    let out_a = scratch_dir("ident-a");
    let out_b = scratch_dir("ident-b");
    let config = repo_config("certify_skew_harmonic.toml");
    assert_eq!(run_into("certify", &config, &out_a), 0);
    assert_eq!(run_into("certify", &config, &out_b), 0);
    for name in ["certificate.txt", "deviation.csv", "schedule.csv"] {
        assert_eq!(
            read(&out_a, name),
            read(&out_b, name),
            "{name} differs between identical runs"
        );
    }
    // A different seed redraws the sampled vectors, which must show up in
    // the embedded seed line (and typically the residual value).
    let out_c = scratch_dir("ident-c");
    let code = run(&[
        "certify",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out_c.to_str().unwrap(),
        "--seed",
        "7",
    ]);
    assert_eq!(code, 0);
    assert_ne!(read(&out_a, "certificate.txt"), read(&out_c, "certificate.txt"));
    let _ = fs::remove_dir_all(&out_a);
    let _ = fs::remove_dir_all(&out_b);
    let _ = fs::remove_dir_all(&out_c);
}

#[test]
fn output_formats_gate_which_files_are_written() {
    let dir = scratch_dir("formats-config");
    fs::create_dir_all(&dir).unwrap();
    let p = dir.join("csv-only.toml");
    fs::write(
        &p,
        "[system]\nclass = \"skew\"\nfrequency = [0.6180339887498949]\n\
         n_matrix = [[1]]\ncharacter = [1]\n[mourre]\nn_max = 2\n\
         [output]\nformats = [\"csv\"]\n",
    )
    .unwrap();
    let out = scratch_dir("formats");
    assert_eq!(run_into("certify", &p, &out), 0);
    assert!(!out.join("certificate.txt").exists());
    assert!(out.join("deviation.csv").exists());
    assert!(out.join("schedule.csv").exists());
    let _ = fs::remove_dir_all(&out);
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn output_directory_can_come_from_the_config() {
    let dir = scratch_dir("outdir-config");
    fs::create_dir_all(&dir).unwrap();
    let out = scratch_dir("outdir-target");
    let p = dir.join("with-dir.toml");
    fs::write(
        &p,
        format!(
            "[system]\nclass = \"skew\"\nfrequency = [0.6180339887498949]\n\
             n_matrix = [[1]]\ncharacter = [1]\n[mourre]\nn_max = 2\n\
             [output]\ndirectory = \"{}\"\n",
            out.display()
        ),
    )
    .unwrap();
    assert_eq!(run(&["certify", "--config", p.to_str().unwrap()]), 0);
    assert!(out.join("certificate.txt").exists());

    // Without --out and without output.directory there is nowhere to write.
    let p2 = dir.join("no-dir.toml");
    fs::write(
        &p2,
        "[system]\nclass = \"skew\"\nfrequency = [0.6180339887498949]\n\
         n_matrix = [[1]]\ncharacter = [1]\n[mourre]\nn_max = 2\n",
    )
    .unwrap();
    assert_eq!(run(&["certify", "--config", p2.to_str().unwrap()]), 3);

    let _ = fs::remove_dir_all(&out);
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn usage_errors_and_help_have_distinct_codes() {
    assert_eq!(run(&["no-such-command"]), 3);
    assert_eq!(run(&["--help"]), 0);
    assert_eq!(run(&["certify"]), 3); // missing --config
}
