//! Structured run configuration: a single TOML file describing the system,
//! the truncation window, and per-command parameters. Unknown keys are
//! rejected so a typo cannot silently fall back to a default.

use koopmourre::torusdyn::{FrequencyVector, FurstenbergSpec, SkewProductSpec, TimeChangeSpec};
use koopmourre::trigfun::TrigPoly;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<WindowConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mourre: Option<MourreConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectral: Option<SpectralConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timechange: Option<TimechangeConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputConfig>,
}

/// One real trigonometric term `cos·cos(2π k·x) + sin·sin(2π k·x)`.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TermSpec {
    pub k: Vec<i32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cos: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sin: Option<f64>,
}

/// One complex Fourier coefficient of an observable.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct PhiTerm {
    pub k: Vec<i32>,
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    /// "skew", "furstenberg", or "timechange".
    pub class: String,

    // skew product over a base rotation
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frequency: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_matrix: Option<Vec<Vec<i64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub character: Option<Vec<i64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<Vec<Vec<TermSpec>>>,

    // triangular (Furstenberg-type) transformation
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rotation: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<Vec<i64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<Vec<Vec<TermSpec>>>,
    /// `[j, k]`: level j ∈ 2..=dim and fiber character k ≠ 0.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<Vec<i64>>,

    // time-changed linear flow
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<Vec<TermSpec>>,
    /// Density given as exp of a real trigonometric polynomial
    /// (mutually exclusive with `density`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density_exp: Option<Vec<TermSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub second_field: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct WindowConfig {
    /// Window half-width M.
    pub m: usize,
    /// Margin reserved inside the window for band growth.
    pub margin: usize,
    /// Phase-expansion truncation tolerance used during assembly.
    pub tol: f64,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct MourreConfig {
    pub n_max: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<usize>,
    /// Number of sampled vectors in the commutator-identity residual check.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual_trials: Option<usize>,
    /// Average length n used by the residual check.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual_n: Option<u64>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralConfig {
    /// Maximal correlation lag N.
    pub n: usize,
    /// "fejer" (nonnegative density) or "hann".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_point: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flatness: Option<f64>,
    /// "matrix" (truncated operator powers) or "quadrature"
    /// (orbit quadrature; skew systems only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    /// Quadrature resolution override (power of two).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<usize>,
    /// Observable Fourier coefficients; defaults to the constant character.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<Vec<PhiTerm>>,
    /// Allow matrix-path lags beyond the worst-case no-leakage bound.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accept_leakage: Option<bool>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TimechangeConfig {
    /// Averaging horizons L for the g_L convergence table
    /// (strictly increasing; the largest drives the identity checks).
    pub horizons: Vec<f64>,
    /// Per-axis grid resolution (power of two).
    pub resolution: usize,
    /// March tolerance for the flow integration.
    pub tol: f64,
    /// Acceptance threshold on sup|g_L − 1/2| at the largest horizon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gl_tol: Option<f64>,
    /// Observable for the Birkhoff-vs-invariant-measure comparison.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub birkhoff_phi: Option<Vec<TermSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub birkhoff_horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub birkhoff_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub birkhoff_resolution: Option<usize>,
    /// Starting point of the Birkhoff orbit; defaults to the origin.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub birkhoff_start: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub directory: Option<String>,
    /// Subset of {"text", "csv"}; default is both.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub formats: Option<Vec<String>>,
}

/// A fully constructed system, ready to hand to the library.
pub enum BuiltSystem {
    Skew(SkewProductSpec),
    Furstenberg {
        spec: FurstenbergSpec,
        j: usize,
        k: i64,
    },
    TimeChange {
        spec: TimeChangeSpec,
        /// ℓ¹ tail dropped when the density was given as exp(poly).
        density_residual: f64,
    },
}

pub fn parse_config(text: &str) -> Result<RunConfig, String> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| format!("invalid config: {e}"))?;
    validate_config(&cfg)?;
    Ok(cfg)
}

fn require_positive(name: &str, value: f64) -> Result<(), String> {
    if !(value > 0.0) {
        return Err(format!("{name} must be positive; got {value}"));
    }
    Ok(())
}

fn validate_config(cfg: &RunConfig) -> Result<(), String> {
    match cfg.system.class.as_str() {
        "skew" | "furstenberg" | "timechange" => {}
        other => {
            return Err(format!(
                "unknown system class {other:?}; expected \"skew\", \"furstenberg\", or \"timechange\""
            ))
        }
    }
    check_foreign_fields(&cfg.system)?;
    if let Some(w) = &cfg.window {
        require_positive("window.tol", w.tol)?;
        if w.m == 0 {
            return Err("window.m must be at least 1".to_string());
        }
    }
    if let Some(m) = &cfg.mourre {
        if m.n_max == 0 {
            return Err("mourre.n_max must be at least 1".to_string());
        }
        if m.residual_trials == Some(0) {
            return Err("mourre.residual_trials must be at least 1".to_string());
        }
        if m.residual_n == Some(0) {
            return Err("mourre.residual_n must be at least 1".to_string());
        }
    }
    if let Some(s) = &cfg.spectral {
        if s.n == 0 {
            return Err("spectral.n must be at least 1".to_string());
        }
        if let Some(k) = &s.kernel {
            if k != "fejer" && k != "hann" {
                return Err(format!(
                    "spectral.kernel must be \"fejer\" or \"hann\"; got {k:?}"
                ));
            }
        }
        if let Some(p) = &s.path {
            if p != "matrix" && p != "quadrature" {
                return Err(format!(
                    "spectral.path must be \"matrix\" or \"quadrature\"; got {p:?}"
                ));
            }
        }
        if let Some(t) = s.theta_point {
            require_positive("spectral.theta_point", t)?;
        }
        if let Some(t) = s.flatness {
            require_positive("spectral.flatness", t)?;
        }
    }
    if let Some(t) = &cfg.timechange {
        require_positive("timechange.tol", t.tol)?;
        if t.horizons.is_empty() {
            return Err("timechange.horizons must list at least one horizon".to_string());
        }
        for pair in t.horizons.windows(2) {
            if !(pair[1] > pair[0]) {
                return Err("timechange.horizons must be strictly increasing".to_string());
            }
        }
        if !(t.horizons[0] > 0.0) {
            return Err("timechange.horizons must be positive".to_string());
        }
        if let Some(g) = t.gl_tol {
            require_positive("timechange.gl_tol", g)?;
        }
        if let Some(b) = t.birkhoff_tol {
            require_positive("timechange.birkhoff_tol", b)?;
        }
        if t.birkhoff_phi.is_some() && (t.birkhoff_horizon.is_none() || t.birkhoff_tol.is_none()) {
            return Err(
                "timechange.birkhoff_phi requires birkhoff_horizon and birkhoff_tol".to_string(),
            );
        }
        if let Some(h) = t.birkhoff_horizon {
            require_positive("timechange.birkhoff_horizon", h)?;
        }
    }
    if let Some(o) = &cfg.output {
        if let Some(fs) = &o.formats {
            if fs.is_empty() {
                return Err("output.formats must not be empty".to_string());
            }
            for f in fs {
                if f != "text" && f != "csv" {
                    return Err(format!(
                        "output.formats entries must be \"text\" or \"csv\"; got {f:?}"
                    ));
                }
            }
        }
    }
    Ok(())
}

/// Reject fields that belong to a different system class, so a config
/// cannot carry misleading leftovers.
fn check_foreign_fields(sys: &SystemConfig) -> Result<(), String> {
    let skew = ["frequency", "n_matrix", "character", "eta"];
    let furst = ["rotation", "b", "h", "level"];
    let flow = ["direction", "density", "density_exp", "second_field"];
    let present = |name: &str| -> bool {
        match name {
            "frequency" => sys.frequency.is_some(),
            "n_matrix" => sys.n_matrix.is_some(),
            "character" => sys.character.is_some(),
            "eta" => sys.eta.is_some(),
            "rotation" => sys.rotation.is_some(),
            "b" => sys.b.is_some(),
            "h" => sys.h.is_some(),
            "level" => sys.level.is_some(),
            "direction" => sys.direction.is_some(),
            "density" => sys.density.is_some(),
            "density_exp" => sys.density_exp.is_some(),
            "second_field" => sys.second_field.is_some(),
            _ => unreachable!(),
        }
    };
    let allowed: &[&str] = match sys.class.as_str() {
        "skew" => &skew,
        "furstenberg" => &furst,
        "timechange" => &flow,
        _ => return Ok(()),
    };
    for name in skew.iter().chain(furst.iter()).chain(flow.iter()) {
        if present(name) && !allowed.contains(name) {
            return Err(format!(
                "system.{name} does not apply to class {:?}",
                sys.class
            ));
        }
    }
    Ok(())
}

pub fn poly_from_terms(dim: usize, terms: &[TermSpec], what: &str) -> Result<TrigPoly, String> {
    let mut p = TrigPoly::zero(dim);
    for t in terms {
        if t.k.len() != dim {
            return Err(format!(
                "{what}: frequency {:?} has length {}, expected {dim}",
                t.k,
                t.k.len()
            ));
        }
        if t.cos.is_none() && t.sin.is_none() {
            return Err(format!(
                "{what}: term at frequency {:?} needs a cos or sin amplitude",
                t.k
            ));
        }
        if let Some(a) = t.cos {
            p = p.add(&TrigPoly::cosine(dim, &t.k, a));
        }
        if let Some(a) = t.sin {
            p = p.add(&TrigPoly::sine(dim, &t.k, a));
        }
    }
    Ok(p)
}

pub fn build_system(sys: &SystemConfig) -> Result<BuiltSystem, String> {
    match sys.class.as_str() {
        "skew" => build_skew(sys),
        "furstenberg" => build_furstenberg(sys),
        "timechange" => build_timechange(sys),
        other => Err(format!("unknown system class {other:?}")),
    }
}

fn build_skew(sys: &SystemConfig) -> Result<BuiltSystem, String> {
    let freq = sys
        .frequency
        .clone()
        .ok_or("skew systems need system.frequency")?;
    let n_matrix = sys
        .n_matrix
        .clone()
        .ok_or("skew systems need system.n_matrix")?;
    let character = sys
        .character
        .clone()
        .ok_or("skew systems need system.character")?;
    let base_dim = freq.len();
    let fiber_dim = n_matrix.len();
    let eta_terms = match &sys.eta {
        Some(rows) => {
            if rows.len() != fiber_dim {
                return Err(format!(
                    "system.eta has {} rows, expected one per fiber dimension ({fiber_dim})",
                    rows.len()
                ));
            }
            rows.clone()
        }
        None => vec![Vec::new(); fiber_dim],
    };
    let y = FrequencyVector::new(freq).map_err(|e| e.to_string())?;
    let mut eta = Vec::with_capacity(fiber_dim);
    for (i, terms) in eta_terms.iter().enumerate() {
        eta.push(poly_from_terms(base_dim, terms, &format!("system.eta[{i}]"))?);
    }
    let spec = SkewProductSpec::new(y, n_matrix, eta, character).map_err(|e| e.to_string())?;
    Ok(BuiltSystem::Skew(spec))
}

fn build_furstenberg(sys: &SystemConfig) -> Result<BuiltSystem, String> {
    let rotation = sys
        .rotation
        .ok_or("furstenberg systems need system.rotation")?;
    let b = sys.b.clone().ok_or("furstenberg systems need system.b")?;
    let h_terms = sys.h.clone().ok_or("furstenberg systems need system.h")?;
    let level = sys
        .level
        .clone()
        .ok_or("furstenberg systems need system.level = [j, k]")?;
    if level.len() != 2 {
        return Err("system.level must be [j, k]".to_string());
    }
    let dim = b.len() + 1;
    if h_terms.len() != b.len() {
        return Err(format!(
            "system.h has {} rows, expected one per triangular row ({})",
            h_terms.len(),
            b.len()
        ));
    }
    let mut h = Vec::with_capacity(h_terms.len());
    for (r, terms) in h_terms.iter().enumerate() {
        // Row r couples coordinate r+2 to the first r+1 coordinates.
        h.push(poly_from_terms(r + 1, terms, &format!("system.h[{r}]"))?);
    }
    let spec = FurstenbergSpec::new(rotation, b, h).map_err(|e| e.to_string())?;
    let j = level[0];
    let k = level[1];
    if j < 2 || j as usize > dim {
        return Err(format!("system.level j must lie in 2..={dim}; got {j}"));
    }
    if k == 0 {
        return Err("system.level k must be nonzero".to_string());
    }
    Ok(BuiltSystem::Furstenberg {
        spec,
        j: j as usize,
        k,
    })
}

fn build_timechange(sys: &SystemConfig) -> Result<BuiltSystem, String> {
    let direction = sys
        .direction
        .clone()
        .ok_or("timechange systems need system.direction")?;
    let second_field = sys
        .second_field
        .clone()
        .ok_or("timechange systems need system.second_field")?;
    let d = direction.len();
    let (density, density_residual) = match (&sys.density, &sys.density_exp) {
        (Some(_), Some(_)) => {
            return Err("system.density and system.density_exp are mutually exclusive".to_string())
        }
        (Some(terms), None) => (poly_from_terms(d, terms, "system.density")?, 0.0),
        (None, Some(terms)) => {
            let exponent = poly_from_terms(d, terms, "system.density_exp")?;
            let (f, residual) = exponent.exp_real(1e-14).map_err(|e| e.to_string())?;
            (f, residual)
        }
        (None, None) => {
            return Err("timechange systems need system.density or system.density_exp".to_string())
        }
    };
    let y = FrequencyVector::new_flow_direction(direction).map_err(|e| e.to_string())?;
    let spec = TimeChangeSpec::new(y, density, second_field).map_err(|e| e.to_string())?;
    Ok(BuiltSystem::TimeChange {
        spec,
        density_residual,
    })
}

/// Apply command-independent defaults in place, so the embedded resolved
/// config states what actually ran.
pub fn resolve_defaults(cfg: &mut RunConfig) {
    if let Some(s) = cfg.spectral.as_mut() {
        s.kernel.get_or_insert_with(|| "fejer".to_string());
        s.path.get_or_insert_with(|| "matrix".to_string());
        let defaults = koopmourre::specmeas::Thresholds::default();
        s.theta_point.get_or_insert(defaults.theta_point);
        s.flatness.get_or_insert(defaults.flatness);
        s.accept_leakage.get_or_insert(false);
    }
    if let Some(m) = cfg.mourre.as_mut() {
        m.residual_trials.get_or_insert(3);
        m.residual_n.get_or_insert(1);
    }
    let out = cfg.output.get_or_insert(OutputConfig {
        directory: None,
        formats: None,
    });
    out.formats
        .get_or_insert_with(|| vec!["text".to_string(), "csv".to_string()]);
}

/// Serialization of the config as embedded in every report. The output
/// directory is stripped so reruns into different directories stay
/// byte-identical.
pub fn resolved_config_toml(cfg: &RunConfig) -> Result<String, String> {
    let mut embedded = cfg.clone();
    if let Some(out) = embedded.output.as_mut() {
        out.directory = None;
    }
    toml::to_string(&embedded).map_err(|e| format!("cannot serialize resolved config: {e}"))
}
