//! Birkhoff averages with certified deviation control.
//!
//! Three averaging paths are provided and cross-checked against each other:
//!
//! * **Exact coefficient path** — averages along an irrational translation
//!   act diagonally on Fourier coefficients, c_k ↦ c_k · (1/n)(1 −
//!   e^{−2πi n k·y})/(1 − e^{−2πi k·y}), so the n-step average of a trig
//!   polynomial is again a trig polynomial with the same support.
//! * **Orbit path** — backward-orbit sampling for maps given by an explicit
//!   inverse (triangular transformations, where the base is not a
//!   translation).
//! * **Flow path** — time averages along a time-changed linear flow. The
//!   time integral (1/L)∫₀^L g(F̃_{−t}x) dt is converted, by the exact
//!   substitution t ↦ w with dt = dw/f(x−wy), into a line integral of g/f
//!   along the straight orbit, marched panel by panel with cumulative
//!   Gauss–Legendre quadrature; the reparametrised clock s(w) = ∫₀^w dv/f
//!   is tracked spectrally inside each panel.
//!
//! All reductions of phases are done modulo 1 **before** multiplying by
//! π, so harmonics with n·k·y ∈ ℤ contribute exactly 0 deviation.

use crate::error::{CoreError, Result};
use crate::quad::{pairwise_sum, CumulativeGl};
use crate::torusdyn::{wrap_unit, FurstenbergSpec, FrequencyVector, TimeChangeSpec, TorusPoint};
use crate::trigfun::{GridFunction, TrigPoly};
use num_complex::Complex64;

/// |sin(πx)| with the argument reduced to [−1/2, 1/2] first: exact zeros at
/// integer x and full relative accuracy near them.
#[inline]
pub fn sinpi_abs(x: f64) -> f64 {
    let r = x - x.round();
    (std::f64::consts::PI * r).sin().abs()
}

/// Reduce x to (−1/2, 1/2] representative of x mod 1 (exact arithmetic).
#[inline]
pub fn reduce_mod1(x: f64) -> f64 {
    x - x.round()
}

const RESONANCE_FLOOR: f64 = 1e-14;

/// Per-harmonic averaging multiplier (1/n)(1 − e^{−2πi n a})/(1 − e^{−2πi a})
/// evaluated with mod-1-reduced arguments. `a` is k·y.
fn averaging_multiplier(a: f64, n: u64) -> Result<Complex64> {
    let ahat = reduce_mod1(a);
    if 2.0 * sinpi_abs(ahat) < RESONANCE_FLOOR {
        return Err(CoreError::Resonance(format!(
            "harmonic with k·y = {a} is within {RESONANCE_FLOOR:.0e} of resonance \
             (|1 − e^{{−2πi k·y}}| ≈ {:.3e})",
            2.0 * sinpi_abs(ahat)
        )));
    }
    let nf = n as f64;
    // n·a ≡ n·ahat (mod 1); reduce the product again before forming phases.
    let bhat = reduce_mod1(nf * ahat);
    let num = Complex64::new(1.0, 0.0)
        - Complex64::from_polar(1.0, -crate::trigfun::TWO_PI * bhat);
    let den = Complex64::new(1.0, 0.0)
        - Complex64::from_polar(1.0, -crate::trigfun::TWO_PI * ahat);
    Ok(num / den / nf)
}

/// Magnitude of the averaging multiplier: (1/n)|sin(πn k·y)|/|sin(π k·y)|.
fn deviation_multiplier(a: f64, n: u64) -> Result<f64> {
    let ahat = reduce_mod1(a);
    let den = sinpi_abs(ahat);
    if 2.0 * den < RESONANCE_FLOOR {
        return Err(CoreError::Resonance(format!(
            "harmonic with k·y = {a} is within {RESONANCE_FLOOR:.0e} of resonance"
        )));
    }
    let nf = n as f64;
    Ok(sinpi_abs(nf * ahat) / (nf * den))
}

/// n-step Birkhoff average of g along the translation by y, computed exactly
/// on Fourier coefficients. The support never grows; the mean coefficient is
/// preserved bitwise; every other coefficient shrinks in modulus.
pub fn birkhoff_exact(g: &TrigPoly, y: &FrequencyVector, n: u64) -> Result<TrigPoly> {
    if n == 0 {
        return Err(CoreError::InvalidArgument(
            "average length n must be at least 1".to_string(),
        ));
    }
    if g.dim() != y.dim() {
        return Err(CoreError::InvalidArgument(format!(
            "g lives on T^{}, frequency vector on T^{}",
            g.dim(),
            y.dim()
        )));
    }
    let mut coeffs = std::collections::BTreeMap::new();
    for (k, c) in g.coeffs() {
        if k.iter().all(|v| *v == 0) {
            coeffs.insert(k.clone(), *c);
            continue;
        }
        let mu = averaging_multiplier(y.dot(k), n)?;
        let scaled = c * mu;
        if scaled.norm_sqr() > 0.0 {
            coeffs.insert(k.clone(), scaled);
        }
    }
    Ok(TrigPoly::from_map(g.dim(), coeffs))
}

/// Deviation curve of the exact-coefficient path: for each n, the upper
/// bound Σ_{k≠0} |c_k| (1/n)|sin(πn k·y)|/|sin(π k·y)| on sup|g_n − mean g|
/// (exact for a single harmonic).
#[derive(Debug, Clone)]
pub struct AverageCurve {
    ns: Vec<u64>,
    sup_deviation: Vec<f64>,
    limit_value: f64,
}

impl AverageCurve {
    pub fn new(ns: Vec<u64>, sup_deviation: Vec<f64>, limit_value: f64) -> Result<Self> {
        if ns.len() != sup_deviation.len() {
            return Err(CoreError::InvalidArgument(format!(
                "curve lengths differ: {} n-values vs {} deviations",
                ns.len(),
                sup_deviation.len()
            )));
        }
        for d in &sup_deviation {
            if !(*d >= 0.0) {
                return Err(CoreError::InvalidArgument(format!(
                    "sup deviations must be nonnegative and finite, got {d}"
                )));
            }
        }
        Ok(AverageCurve {
            ns,
            sup_deviation,
            limit_value,
        })
    }

    pub fn empty(limit_value: f64) -> Self {
        AverageCurve {
            ns: Vec::new(),
            sup_deviation: Vec::new(),
            limit_value,
        }
    }

    pub fn ns(&self) -> &[u64] {
        &self.ns
    }

    pub fn sup_deviation(&self) -> &[f64] {
        &self.sup_deviation
    }

    pub fn limit_value(&self) -> f64 {
        self.limit_value
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,sup_deviation,limit_value\n");
        for (n, d) in self.ns.iter().zip(self.sup_deviation.iter()) {
            out.push_str(&format!("{},{},{}\n", n, d, self.limit_value));
        }
        out
    }
}

/// Deviation curve for the exact path at the given average lengths.
pub fn deviation_curve(g: &TrigPoly, y: &FrequencyVector, ns: &[u64]) -> Result<AverageCurve> {
    if g.dim() != y.dim() {
        return Err(CoreError::InvalidArgument(format!(
            "g lives on T^{}, frequency vector on T^{}",
            g.dim(),
            y.dim()
        )));
    }
    let mut devs = Vec::with_capacity(ns.len());
    for &n in ns {
        if n == 0 {
            return Err(CoreError::InvalidArgument(
                "average length n must be at least 1".to_string(),
            ));
        }
        let mut terms = Vec::new();
        for (k, c) in g.coeffs() {
            if k.iter().all(|v| *v == 0) {
                continue;
            }
            terms.push(c.norm() * deviation_multiplier(y.dot(k), n)?);
        }
        devs.push(pairwise_sum(&terms));
    }
    AverageCurve::new(ns.to_vec(), devs, g.mean().re)
}

/// Invertible measure-preserving torus map with allocation-free stepping.
pub trait TorusMap {
    fn dim(&self) -> usize;
    fn forward_into(&self, x: &[f64], out: &mut [f64]);
    fn inverse_into(&self, x: &[f64], out: &mut [f64]);
}

/// Translation by y.
pub struct RotationMap {
    y: Vec<f64>,
}

impl RotationMap {
    pub fn new(y: &FrequencyVector) -> Self {
        RotationMap {
            y: y.as_slice().to_vec(),
        }
    }
}

impl TorusMap for RotationMap {
    fn dim(&self) -> usize {
        self.y.len()
    }

    fn forward_into(&self, x: &[f64], out: &mut [f64]) {
        for i in 0..self.y.len() {
            out[i] = wrap_unit(x[i] + self.y[i]);
        }
    }

    fn inverse_into(&self, x: &[f64], out: &mut [f64]) {
        for i in 0..self.y.len() {
            out[i] = wrap_unit(x[i] - self.y[i]);
        }
    }
}

/// Triangular transformation with precompiled perturbation evaluators.
pub struct TriangularMap<'a> {
    spec: &'a FurstenbergSpec,
    compiled_h: Vec<crate::trigfun::CompiledReal>,
}

impl<'a> TriangularMap<'a> {
    pub fn new(spec: &'a FurstenbergSpec) -> Self {
        let compiled_h = (2..=spec.dim())
            .map(|j| spec.h_for_level(j).compile_real())
            .collect();
        TriangularMap { spec, compiled_h }
    }
}

impl TorusMap for TriangularMap<'_> {
    fn dim(&self) -> usize {
        self.spec.dim()
    }

    fn forward_into(&self, x: &[f64], out: &mut [f64]) {
        let d = self.spec.dim();
        out[0] = wrap_unit(x[0] + self.spec.rotation());
        for j in 2..=d {
            let mut v = x[j - 1];
            for k in 1..j {
                v += (self.spec.b_entry(j, k) as f64) * x[k - 1];
            }
            v += self.compiled_h[j - 2].eval(&x[..j - 1]);
            out[j - 1] = wrap_unit(v);
        }
    }

    fn inverse_into(&self, x: &[f64], out: &mut [f64]) {
        let d = self.spec.dim();
        out[0] = wrap_unit(x[0] - self.spec.rotation());
        for j in 2..=d {
            let mut v = x[j - 1];
            for k in 1..j {
                v -= (self.spec.b_entry(j, k) as f64) * out[k - 1];
            }
            v -= self.compiled_h[j - 2].eval(&out[..j - 1]);
            out[j - 1] = wrap_unit(v);
        }
    }
}

/// Backward-orbit Birkhoff averages (1/n) Σ_{ℓ<n} g∘T^{−ℓ} on a uniform
/// grid, snapshotted at every length in `ns` (strictly increasing) during a
/// single sweep.
pub fn birkhoff_map_schedule(
    g: &dyn Fn(&[f64]) -> f64,
    map: &dyn TorusMap,
    resolution: usize,
    ns: &[u64],
) -> Result<Vec<GridFunction>> {
    if ns.is_empty() {
        return Err(CoreError::InvalidArgument(
            "need at least one average length".to_string(),
        ));
    }
    for w in ns.windows(2) {
        if w[0] >= w[1] {
            return Err(CoreError::InvalidArgument(format!(
                "average lengths must be strictly increasing, got {} then {}",
                w[0], w[1]
            )));
        }
    }
    if ns[0] == 0 {
        return Err(CoreError::InvalidArgument(
            "average length n must be at least 1".to_string(),
        ));
    }
    let d = map.dim();
    if !resolution.is_power_of_two() {
        return Err(CoreError::InvalidArgument(format!(
            "grid resolution {resolution} must be a power of two"
        )));
    }
    let total = resolution.pow(d as u32);
    let n_max = *ns.last().unwrap();
    let mut snapshots: Vec<Vec<Complex64>> =
        vec![Vec::with_capacity(total); ns.len()];
    let mut x = vec![0.0; d];
    let mut x_next = vec![0.0; d];
    let mut point_snaps = vec![0.0; ns.len()];
    for idx in 0..total {
        crate::trigfun::grid_point(d, resolution, idx, &mut x);
        let mut acc = 0.0;
        let mut si = 0;
        for l in 0..n_max {
            acc += g(&x);
            if si < ns.len() && l + 1 == ns[si] {
                point_snaps[si] = acc / ns[si] as f64;
                si += 1;
            }
            if l + 1 < n_max {
                map.inverse_into(&x, &mut x_next);
                std::mem::swap(&mut x, &mut x_next);
            }
        }
        for (s, v) in snapshots.iter_mut().zip(point_snaps.iter()) {
            s.push(Complex64::new(*v, 0.0));
        }
    }
    snapshots
        .into_iter()
        .map(|s| GridFunction::from_samples(d, resolution, s))
        .collect()
}

/// Single-length variant of [`birkhoff_map_schedule`].
pub fn birkhoff_map(
    g: &dyn Fn(&[f64]) -> f64,
    map: &dyn TorusMap,
    resolution: usize,
    n: u64,
) -> Result<GridFunction> {
    Ok(birkhoff_map_schedule(g, map, resolution, &[n])?.pop().unwrap())
}

// ---------------------------------------------------------------------------
// Flow averages along time-changed linear flows.
// ---------------------------------------------------------------------------

/// Neumaier-compensated accumulator for long panel marches.
#[derive(Clone, Copy, Default)]
struct Kahan {
    sum: f64,
    c: f64,
}

impl Kahan {
    #[inline]
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.c += (self.sum - t) + v;
        } else {
            self.c += (v - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    fn value(&self) -> f64 {
        self.sum + self.c
    }
}

/// Panel-marching integrator along a straight orbit x + w·dir, tracking the
/// reparametrised clock s(w) = ∫₀^w dv/f.
struct OrbitMarcher<'a> {
    f: crate::trigfun::CompiledReal,
    dir: Vec<f64>,
    cg: &'a CumulativeGl,
    panel_len: f64,
    /// Hard cap on the orbit parameter (runaway guard).
    w_cap: f64,
}

struct MarchResult {
    /// ∫₀^{U(s_i)} (g/f)(x + w·dir) dw at each requested clock level s_i.
    g_integrals: Vec<f64>,
    /// ∫₀^{U(L)} (1 − s(w)/L)(g/f)(x + w·dir) dw for the last level L, when
    /// requested.
    tilde_integral: Option<f64>,
    /// Orbit parameter U at which the clock reached the final level. The
    /// g-integral alone cannot witness clock errors when g/f ∝ 1/f (the
    /// integral then telescopes to g·L exactly), so panel audits must
    /// compare this too.
    final_w: f64,
}

impl<'a> OrbitMarcher<'a> {
    fn new(spec: &TimeChangeSpec, backward: bool, panel_len: f64, max_clock: f64) -> Self {
        let sign = if backward { -1.0 } else { 1.0 };
        OrbitMarcher {
            f: spec.density().compile_real(),
            dir: spec
                .direction()
                .as_slice()
                .iter()
                .map(|v| sign * v)
                .collect(),
            cg: CumulativeGl::shared16(),
            panel_len,
            w_cap: max_clock * spec.f_sup() * 1.01 + 16.0,
        }
    }

    /// March from x until the clock reaches each of `clock_targets`
    /// (ascending, positive). `tilde_l` requests the (1 − s/L) weighted
    /// integral for L = the final target.
    fn march(
        &self,
        x: &[f64],
        g: &dyn Fn(&[f64]) -> f64,
        clock_targets: &[f64],
        tilde_l: Option<f64>,
    ) -> Result<MarchResult> {
        let order = self.cg.order;
        let d = x.len();
        let half = 0.5 * self.panel_len;
        let mut inv_f = vec![0.0; order];
        let mut gf = vec![0.0; order];
        let mut gft = vec![0.0; order];
        let mut pt = vec![0.0; d];
        let mut w0 = 0.0f64;
        let mut s0 = Kahan::default();
        let mut ig = Kahan::default();
        let mut itilde = Kahan::default();
        let mut g_integrals = Vec::with_capacity(clock_targets.len());
        let mut tilde_integral = None;
        let mut final_w = 0.0;
        let mut ti = 0;
        while ti < clock_targets.len() {
            if w0 > self.w_cap {
                return Err(CoreError::NumericFailure(format!(
                    "orbit march exceeded the parameter cap {:.3e} before \
                     reaching clock level {}; the density bounds disagree \
                     with the observed speeds",
                    self.w_cap, clock_targets[ti]
                )));
            }
            for j in 0..order {
                let wj = w0 + half * (self.cg.nodes[j] + 1.0);
                for (i, p) in pt.iter_mut().enumerate() {
                    *p = wrap_unit(x[i] + wj * self.dir[i]);
                }
                let fv = self.f.eval(&pt);
                let iv = 1.0 / fv;
                inv_f[j] = iv;
                gf[j] = g(&pt) * iv;
            }
            let ds_panel = half * self.cg.full(&inv_f);
            let s_at_start = s0.value();
            let node_clock = self.cg.node_cumulative(&inv_f);
            if let Some(l) = tilde_l {
                for j in 0..order {
                    gft[j] = gf[j] * (1.0 - (s_at_start + half * node_clock[j]) / l);
                }
            }
            // Consume every target that falls inside this panel.
            while ti < clock_targets.len() && clock_targets[ti] <= s_at_start + ds_panel {
                let target_ref = (clock_targets[ti] - s_at_start) / half;
                let t_star = self.cg.invert_cumulative(&inv_f, target_ref);
                g_integrals.push(ig.value() + half * self.cg.partial_to(&gf, t_star));
                if tilde_l.is_some() && ti + 1 == clock_targets.len() {
                    tilde_integral =
                        Some(itilde.value() + half * self.cg.partial_to(&gft, t_star));
                }
                final_w = w0 + half * (t_star + 1.0);
                ti += 1;
            }
            if ti >= clock_targets.len() {
                break;
            }
            ig.add(half * self.cg.full(&gf));
            if tilde_l.is_some() {
                itilde.add(half * self.cg.full(&gft));
            }
            s0.add(ds_panel);
            w0 += self.panel_len;
        }
        Ok(MarchResult {
            g_integrals,
            tilde_integral,
            final_w,
        })
    }
}

/// Panel length passing the self-audit: the march is repeated at half the
/// panel length on one representative point until the two agree to tol/10.
fn audited_panel_len(
    spec: &TimeChangeSpec,
    backward: bool,
    g: &dyn Fn(&[f64]) -> f64,
    probe: &[f64],
    clock: f64,
    tol: f64,
) -> Result<f64> {
    let mut len = 1.0f64;
    for _ in 0..9 {
        let coarse = OrbitMarcher::new(spec, backward, len, clock).march(probe, g, &[clock], None)?;
        let fine =
            OrbitMarcher::new(spec, backward, 0.5 * len, clock).march(probe, g, &[clock], None)?;
        // Compare the integral AND the stopping parameter U: the former is
        // blind to clock errors whenever g/f ∝ 1/f.
        let diff = (coarse.g_integrals[0] - fine.g_integrals[0])
            .abs()
            .max((coarse.final_w - fine.final_w).abs());
        if diff <= tol / 10.0 * clock.max(1.0) {
            return Ok(len);
        }
        len *= 0.5;
    }
    Err(CoreError::NumericFailure(format!(
        "panel audit did not converge to {:.3e} even at panel length {len}",
        tol / 10.0
    )))
}

fn validate_flow_args(spec: &TimeChangeSpec, l: f64, tol: f64) -> Result<()> {
    if !(l > 0.0) {
        return Err(CoreError::InvalidArgument(format!(
            "averaging length must be positive, got {l}"
        )));
    }
    if !(tol > 0.0) {
        return Err(CoreError::InvalidArgument(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let _ = spec;
    Ok(())
}

/// Backward flow averages g_L(x) = (1/L)∫₀^L g(F̃_{−t}x) dt on a uniform
/// grid, snapshotted at every length in `ls` (ascending) in a single march
/// per grid point.
pub fn flow_average_gl_schedule(
    g: &dyn Fn(&[f64]) -> f64,
    spec: &TimeChangeSpec,
    ls: &[f64],
    resolution: usize,
    tol: f64,
) -> Result<Vec<GridFunction>> {
    if ls.is_empty() {
        return Err(CoreError::InvalidArgument(
            "need at least one averaging length".to_string(),
        ));
    }
    for w in ls.windows(2) {
        if !(w[0] < w[1]) {
            return Err(CoreError::InvalidArgument(
                "averaging lengths must be strictly increasing".to_string(),
            ));
        }
    }
    validate_flow_args(spec, ls[0], tol)?;
    let d = spec.dim();
    let total = resolution.pow(d as u32);
    let l_max = *ls.last().unwrap();
    let probe = vec![0.37; d];
    let len = audited_panel_len(spec, true, g, &probe, l_max, tol)?;
    let marcher = OrbitMarcher::new(spec, true, len, l_max);
    let mut snapshots: Vec<Vec<Complex64>> = vec![Vec::with_capacity(total); ls.len()];
    let mut x = vec![0.0; d];
    for idx in 0..total {
        crate::trigfun::grid_point(d, resolution, idx, &mut x);
        let res = marcher.march(&x, g, ls, None)?;
        for (snap, (integral, l)) in snapshots
            .iter_mut()
            .zip(res.g_integrals.iter().zip(ls.iter()))
        {
            snap.push(Complex64::new(integral / l, 0.0));
        }
    }
    snapshots
        .into_iter()
        .map(|s| GridFunction::from_samples(d, resolution, s))
        .collect()
}

/// Single-length variant of [`flow_average_gl_schedule`].
pub fn flow_average_gl(
    g: &dyn Fn(&[f64]) -> f64,
    spec: &TimeChangeSpec,
    l: f64,
    resolution: usize,
    tol: f64,
) -> Result<GridFunction> {
    Ok(flow_average_gl_schedule(g, spec, &[l], resolution, tol)?
        .pop()
        .unwrap())
}

/// The backward double average g̃_L(x) = ∫₀^L (1 − s/L) g(F̃_{−s}x) ds, its
/// Lie derivative along the generator f·Y₁, the single average g_L, and the
/// sup residual of the identity L_{fY₁}(g̃_L) = g − g_L.
pub struct CohomologySolution {
    pub gtilde: GridFunction,
    pub lie_derivative: GridFunction,
    pub g_l: GridFunction,
    pub eq_residual_sup: f64,
}

/// Central-difference step (in units of the direction vector) for the Lie
/// derivative of g̃_L.
const LIE_DELTA: f64 = 1e-4;

pub fn double_average_gtilde(
    g: &dyn Fn(&[f64]) -> f64,
    spec: &TimeChangeSpec,
    l: f64,
    resolution: usize,
    tol: f64,
) -> Result<CohomologySolution> {
    validate_flow_args(spec, l, tol)?;
    let d = spec.dim();
    let total = resolution.pow(d as u32);
    let probe = vec![0.37; d];
    let len = audited_panel_len(spec, true, g, &probe, l, tol)?;
    let marcher = OrbitMarcher::new(spec, true, len, l);
    let f_eval = spec.density().compile_real();
    let y = spec.direction().as_slice();
    let mut gtilde = Vec::with_capacity(total);
    let mut lie = Vec::with_capacity(total);
    let mut g_l = Vec::with_capacity(total);
    let mut residual_sup = 0.0f64;
    let mut x = vec![0.0; d];
    let mut xp = vec![0.0; d];
    let mut xm = vec![0.0; d];
    for idx in 0..total {
        crate::trigfun::grid_point(d, resolution, idx, &mut x);
        let res = marcher.march(&x, g, &[l], Some(l))?;
        let gl_val = res.g_integrals[0] / l;
        let gt_val = res.tilde_integral.unwrap();
        for i in 0..d {
            xp[i] = wrap_unit(x[i] + LIE_DELTA * y[i]);
            xm[i] = wrap_unit(x[i] - LIE_DELTA * y[i]);
        }
        let gt_plus = marcher.march(&xp, g, &[l], Some(l))?.tilde_integral.unwrap();
        let gt_minus = marcher.march(&xm, g, &[l], Some(l))?.tilde_integral.unwrap();
        let lie_val = f_eval.eval(&x) * (gt_plus - gt_minus) / (2.0 * LIE_DELTA);
        let resid = (lie_val - (g(&x) - gl_val)).abs();
        residual_sup = residual_sup.max(resid);
        gtilde.push(Complex64::new(gt_val, 0.0));
        lie.push(Complex64::new(lie_val, 0.0));
        g_l.push(Complex64::new(gl_val, 0.0));
    }
    Ok(CohomologySolution {
        gtilde: GridFunction::from_samples(d, resolution, gtilde)?,
        lie_derivative: GridFunction::from_samples(d, resolution, lie)?,
        g_l: GridFunction::from_samples(d, resolution, g_l)?,
        eq_residual_sup: residual_sup,
    })
}

/// Forward time average (1/T)∫₀^T φ(F̃_t p) dt from a single starting point.
pub fn flow_time_average(
    phi: &dyn Fn(&[f64]) -> f64,
    spec: &TimeChangeSpec,
    p: &TorusPoint,
    horizon: f64,
    tol: f64,
) -> Result<f64> {
    validate_flow_args(spec, horizon, tol)?;
    if p.dim() != spec.dim() {
        return Err(CoreError::InvalidArgument(format!(
            "point lives on T^{}, the flow on T^{}",
            p.dim(),
            spec.dim()
        )));
    }
    let len = audited_panel_len(spec, false, phi, p.coords(), horizon.min(64.0), tol)?;
    let marcher = OrbitMarcher::new(spec, false, len, horizon);
    let res = marcher.march(p.coords(), phi, &[horizon], None)?;
    Ok(res.g_integrals[0] / horizon)
}

/// Reference value ∫ φ f^{−1} dμ / ∫ f^{−1} dμ of the time-changed flow's
/// unique invariant measure, by grid quadrature at the given resolution.
pub fn invariant_measure_average(
    phi: &dyn Fn(&[f64]) -> f64,
    spec: &TimeChangeSpec,
    resolution: usize,
) -> Result<f64> {
    let d = spec.dim();
    let f_eval = spec.density().compile_real();
    let num = GridFunction::from_real_fn(d, resolution, |x| phi(x) / f_eval.eval(x))?;
    let den = GridFunction::from_real_fn(d, resolution, |x| 1.0 / f_eval.eval(x))?;
    Ok(num.mean().re / den.mean().re)
}
