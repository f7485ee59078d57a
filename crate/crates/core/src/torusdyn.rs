//! Dynamical systems on tori: translation flows, skew products, triangular
//! (Furstenberg-type) transformations, and time-changed linear flows.
//!
//! All coordinates live on 𝕋ᵈ = (ℝ/ℤ)ᵈ and are reduced to [0,1) by floor
//! subtraction; comparisons use circular distance so the 0 ≡ 1 seam never
//! produces artifacts. Rational-independence of frequency data is checked
//! heuristically (continued fractions at tolerance 1e-12) and recorded as
//! metadata — floating point cannot prove irrationality, so the check
//! rejects obviously rational data and documents the rest.

use crate::error::{CoreError, Result};
use crate::quad::pairwise_sum;
use crate::trigfun::{default_infimum_resolution, TrigPoly};

/// Reduce a real number to [0,1).
#[inline]
pub fn wrap_unit(x: f64) -> f64 {
    let w = x - x.floor();
    if w >= 1.0 {
        0.0
    } else {
        w
    }
}

/// Circular distance on 𝕋¹: min(|a−b|, 1−|a−b|) for wrapped inputs.
#[inline]
pub fn circle_distance(a: f64, b: f64) -> f64 {
    let d = (wrap_unit(a) - wrap_unit(b)).abs();
    d.min(1.0 - d)
}

/// A point of 𝕋ᵈ with every coordinate reduced to [0,1).
#[derive(Debug, Clone, PartialEq)]
pub struct TorusPoint {
    coords: Vec<f64>,
}

impl TorusPoint {
    pub fn new(coords: Vec<f64>) -> Self {
        TorusPoint {
            coords: coords.into_iter().map(wrap_unit).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// Max over axes of the per-axis circular distance.
    pub fn distance(&self, other: &TorusPoint) -> f64 {
        assert_eq!(self.dim(), other.dim());
        self.coords
            .iter()
            .zip(other.coords.iter())
            .map(|(a, b)| circle_distance(*a, *b))
            .fold(0.0, f64::max)
    }
}

/// Detect p/q ≈ x with |x − p/q| < tol and q ≤ max_q by a limited-depth
/// continued-fraction expansion. Every irrational has convergents with
/// error ≈ 1/q², which reaches 1e-12 by q ≈ 1e6, so closeness alone cannot
/// distinguish rationals; a hit additionally requires quality far beyond
/// the Dirichlet floor, q²·|x − p/q| < 1e-3. Heuristic: absence of a hit is
/// not a proof of irrationality.
fn rational_approximation(x: f64, tol: f64, max_q: f64) -> Option<(f64, f64)> {
    let mut a = x;
    // Convergents p/q of the continued fraction of x.
    let (mut p0, mut q0) = (1.0f64, 0.0f64);
    let (mut p1, mut q1) = (a.floor(), 1.0f64);
    for _ in 0..40 {
        let err = (x - p1 / q1).abs();
        if err < tol && err * q1 * q1 < 1e-3 {
            return Some((p1, q1));
        }
        if q1 > max_q {
            return None;
        }
        let frac = a - a.floor();
        if frac < 1e-15 {
            return None;
        }
        a = 1.0 / frac;
        let ai = a.floor();
        let (p2, q2) = (ai * p1 + p0, ai * q1 + q0);
        p0 = p1;
        q0 = q1;
        p1 = p2;
        q1 = q2;
    }
    None
}

const RATIONAL_TOL: f64 = 1e-12;
const RATIONAL_MAX_Q: f64 = 1e6;

/// Translation velocity vector with a recorded independence note.
#[derive(Debug, Clone)]
pub struct FrequencyVector {
    y: Vec<f64>,
    diophantine_note: String,
}

impl FrequencyVector {
    /// Frequency vector for a discrete translation base: rejects any
    /// coordinate or coordinate ratio that looks rational at tolerance
    /// 1e-12 (continued fractions, denominators up to 1e6).
    pub fn new(y: Vec<f64>) -> Result<Self> {
        for (i, yi) in y.iter().enumerate() {
            if let Some((p, q)) = rational_approximation(*yi, RATIONAL_TOL, RATIONAL_MAX_Q) {
                return Err(CoreError::InvalidArgument(format!(
                    "frequency coordinate y[{i}] = {yi} looks rational (≈ {p}/{q} \
                     at tolerance {RATIONAL_TOL}); the translation would not be minimal"
                )));
            }
        }
        Self::check_ratios(&y)?;
        Ok(FrequencyVector {
            y,
            diophantine_note: format!(
                "heuristic check passed: no coordinate or ratio has a rational \
                 approximation p/q with q ≤ {RATIONAL_MAX_Q:.0} within {RATIONAL_TOL}; \
                 not a proof of irrationality"
            ),
        })
    }

    /// Direction of a linear flow: only coordinate ratios must avoid
    /// rational values (flow minimality), individual coordinates may be
    /// rational. The zero vector is rejected.
    pub fn new_flow_direction(y: Vec<f64>) -> Result<Self> {
        if y.iter().all(|v| *v == 0.0) {
            return Err(CoreError::InvalidArgument(
                "flow direction must be nonzero".to_string(),
            ));
        }
        Self::check_ratios(&y)?;
        Ok(FrequencyVector {
            y,
            diophantine_note: "flow direction: coordinate ratios passed the heuristic \
                 rationality check; not a proof of irrationality"
                .to_string(),
        })
    }

    /// No checks; caller supplies the justification note.
    pub fn new_unchecked(y: Vec<f64>, note: &str) -> Self {
        FrequencyVector {
            y,
            diophantine_note: note.to_string(),
        }
    }

    fn check_ratios(y: &[f64]) -> Result<()> {
        for i in 0..y.len() {
            for j in (i + 1)..y.len() {
                if y[j] == 0.0 {
                    continue;
                }
                let r = y[i] / y[j];
                if let Some((p, q)) = rational_approximation(r, RATIONAL_TOL, RATIONAL_MAX_Q) {
                    return Err(CoreError::InvalidArgument(format!(
                        "frequency ratio y[{i}]/y[{j}] = {r} looks rational (≈ {p}/{q}); \
                         coordinates are rationally dependent at tolerance {RATIONAL_TOL}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.y.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.y
    }

    pub fn note(&self) -> &str {
        &self.diophantine_note
    }

    /// k·y for an integer frequency k.
    pub fn dot(&self, k: &[i32]) -> f64 {
        k.iter()
            .zip(self.y.iter())
            .map(|(ki, yi)| (*ki as f64) * yi)
            .sum()
    }
}

/// F_t(x) = x + t·y (mod ℤᵈ).
pub fn translate_flow(y: &FrequencyVector, x: &TorusPoint, t: f64) -> TorusPoint {
    assert_eq!(y.dim(), x.dim(), "dimension mismatch in translate_flow");
    TorusPoint::new(
        x.coords()
            .iter()
            .zip(y.as_slice().iter())
            .map(|(xi, yi)| xi + t * yi)
            .collect(),
    )
}

/// Skew product T(x,z) = (x + y, z + Nx + η(x)) on 𝕋ᵈ × 𝕋^{d'} together
/// with the active character index m ∈ ℤ^{d'}.
#[derive(Debug, Clone)]
pub struct SkewProductSpec {
    d: usize,
    dprime: usize,
    y: FrequencyVector,
    n_mat: Vec<Vec<i64>>,
    eta: Vec<TrigPoly>,
    m: Vec<i64>,
}

impl SkewProductSpec {
    pub fn new(
        y: FrequencyVector,
        n_mat: Vec<Vec<i64>>,
        eta: Vec<TrigPoly>,
        m: Vec<i64>,
    ) -> Result<Self> {
        let d = y.dim();
        let dprime = n_mat.len();
        if dprime == 0 {
            return Err(CoreError::InvalidArgument(
                "skew product needs at least one fiber dimension".to_string(),
            ));
        }
        for (i, row) in n_mat.iter().enumerate() {
            if row.len() != d {
                return Err(CoreError::InvalidArgument(format!(
                    "N row {i} has length {}, expected {d}",
                    row.len()
                )));
            }
        }
        if eta.len() != dprime || m.len() != dprime {
            return Err(CoreError::InvalidArgument(format!(
                "eta ({}) and m ({}) must both have length dprime = {dprime}",
                eta.len(),
                m.len()
            )));
        }
        for (i, e) in eta.iter().enumerate() {
            if e.dim() != d {
                return Err(CoreError::InvalidArgument(format!(
                    "eta[{i}] lives on T^{}, expected T^{d}",
                    e.dim()
                )));
            }
            if !e.is_real() {
                return Err(CoreError::InvalidArgument(format!(
                    "eta[{i}] must be real-valued"
                )));
            }
        }
        Ok(SkewProductSpec {
            d,
            dprime,
            y,
            n_mat,
            eta,
            m,
        })
    }

    pub fn base_dim(&self) -> usize {
        self.d
    }

    pub fn fiber_dim(&self) -> usize {
        self.dprime
    }

    pub fn frequency(&self) -> &FrequencyVector {
        &self.y
    }

    pub fn n_matrix(&self) -> &[Vec<i64>] {
        &self.n_mat
    }

    pub fn character(&self) -> &[i64] {
        &self.m
    }

    pub fn eta(&self) -> &[TrigPoly] {
        &self.eta
    }

    /// Nᵀm ∈ ℤᵈ — the frequency shift of the Koopman operator.
    pub fn nt_m(&self) -> Vec<i64> {
        (0..self.d)
            .map(|j| {
                self.m
                    .iter()
                    .zip(self.n_mat.iter())
                    .map(|(mi, row)| mi * row[j])
                    .sum()
            })
            .collect()
    }

    /// The excluded case Nᵀm = 0.
    pub fn is_degenerate(&self) -> bool {
        self.nt_m().iter().all(|v| *v == 0)
    }

    /// m·η as a single real trigonometric polynomial on the base torus.
    pub fn m_eta(&self) -> TrigPoly {
        let mut acc = TrigPoly::zero(self.d);
        for (mi, e) in self.m.iter().zip(self.eta.iter()) {
            acc = acc.add(&e.scale(*mi as f64));
        }
        acc
    }

    /// m·Ny = (Nᵀm)·y, the drift of the cocycle phase.
    pub fn m_n_y(&self) -> f64 {
        self.nt_m()
            .iter()
            .zip(self.y.as_slice().iter())
            .map(|(v, yi)| (*v as f64) * yi)
            .sum()
    }
}

/// One forward step of the skew product.
pub fn skew_apply(spec: &SkewProductSpec, x: &TorusPoint, z: &TorusPoint) -> (TorusPoint, TorusPoint) {
    assert_eq!(x.dim(), spec.d, "base dimension mismatch");
    assert_eq!(z.dim(), spec.dprime, "fiber dimension mismatch");
    let x_new = translate_flow(&spec.y, x, 1.0);
    let z_new: Vec<f64> = (0..spec.dprime)
        .map(|i| {
            let linear: f64 = spec.n_mat[i]
                .iter()
                .zip(x.coords().iter())
                .map(|(nij, xj)| (*nij as f64) * xj)
                .sum();
            z.coords()[i] + linear + spec.eta[i].evaluate_real(x.coords())
        })
        .collect();
    (x_new, TorusPoint::new(z_new))
}

/// Birkhoff sum of the cocycle phase: Σ_{ℓ=0}^{n−1} m·(N F_ℓ(x) + η(F_ℓ(x)))
/// as a real number (not reduced mod 1). The linear part uses the unwrapped
/// lift x + ℓy; η is evaluated at the wrapped point.
pub fn cocycle_phase_sum(spec: &SkewProductSpec, x: &TorusPoint, n: u64) -> f64 {
    let ntm = spec.nt_m();
    let meta = spec.m_eta();
    let y = spec.y.as_slice();
    let mut terms = Vec::with_capacity(n as usize);
    let mut wrapped = vec![0.0; spec.d];
    for l in 0..n {
        let lf = l as f64;
        let mut linear = 0.0;
        for j in 0..spec.d {
            let lift = x.coords()[j] + lf * y[j];
            linear += (ntm[j] as f64) * lift;
            wrapped[j] = wrap_unit(lift);
        }
        terms.push(linear + meta.evaluate_real(&wrapped));
    }
    pairwise_sum(&terms)
}

/// Triangular transformation on 𝕋ᵈ: x₁ ↦ x₁ + y and, for 2 ≤ j ≤ d,
/// x_j ↦ x_j + Σ_{k<j} b_{j,k} x_k + h_{j−1}(x₁,…,x_{j−1}).
#[derive(Debug, Clone)]
pub struct FurstenbergSpec {
    d: usize,
    y: f64,
    /// Row r (0-based) holds b_{r+2, 1..=r+1}.
    b: Vec<Vec<i64>>,
    /// h[r] = h_{r+1}, a real trig poly on T^{r+1}.
    h: Vec<TrigPoly>,
}

impl FurstenbergSpec {
    pub fn new(y: f64, b: Vec<Vec<i64>>, h: Vec<TrigPoly>) -> Result<Self> {
        let d = b.len() + 1;
        if d < 2 {
            return Err(CoreError::InvalidArgument(
                "triangular map needs dimension d ≥ 2 (at least one b row)".to_string(),
            ));
        }
        if let Some((p, q)) = rational_approximation(y, RATIONAL_TOL, RATIONAL_MAX_Q) {
            return Err(CoreError::InvalidArgument(format!(
                "rotation number y = {y} looks rational (≈ {p}/{q}); the map would not \
                 be uniquely ergodic"
            )));
        }
        if h.len() != d - 1 {
            return Err(CoreError::InvalidArgument(format!(
                "expected {} perturbations h, got {}",
                d - 1,
                h.len()
            )));
        }
        for (r, row) in b.iter().enumerate() {
            let j = r + 2;
            if row.len() != j - 1 {
                return Err(CoreError::InvalidArgument(format!(
                    "b row for coordinate {j} has {} entries, expected {}",
                    row.len(),
                    j - 1
                )));
            }
            if row[j - 2] == 0 {
                return Err(CoreError::InvalidArgument(format!(
                    "sub-diagonal coefficient b_{{{j},{}}} must be nonzero",
                    j - 1
                )));
            }
        }
        for (r, hr) in h.iter().enumerate() {
            if hr.dim() != r + 1 {
                return Err(CoreError::InvalidArgument(format!(
                    "h_{} lives on T^{}, expected T^{}",
                    r + 1,
                    hr.dim(),
                    r + 1
                )));
            }
            if !hr.is_real() {
                return Err(CoreError::InvalidArgument(format!(
                    "h_{} must be real-valued",
                    r + 1
                )));
            }
        }
        Ok(FurstenbergSpec { d, y, b, h })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn rotation(&self) -> f64 {
        self.y
    }

    /// b_{j,k} for 1 ≤ k < j ≤ d.
    pub fn b_entry(&self, j: usize, k: usize) -> i64 {
        assert!(2 <= j && j <= self.d && 1 <= k && k < j);
        self.b[j - 2][k - 1]
    }

    /// The sub-diagonal coefficient b_{j,j−1}.
    pub fn subdiag(&self, j: usize) -> i64 {
        self.b_entry(j, j - 1)
    }

    /// h_{j−1}, the perturbation entering coordinate j (a poly on T^{j−1}).
    pub fn h_for_level(&self, j: usize) -> &TrigPoly {
        assert!(2 <= j && j <= self.d);
        &self.h[j - 2]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

/// Apply the triangular map (or its explicit inverse, solving coordinates in
/// increasing order).
pub fn furstenberg_apply(spec: &FurstenbergSpec, x: &TorusPoint, direction: Direction) -> TorusPoint {
    assert_eq!(x.dim(), spec.d, "dimension mismatch");
    let mut out = vec![0.0; spec.d];
    match direction {
        Direction::Forward => {
            out[0] = wrap_unit(x.coords()[0] + spec.y);
            for j in 2..=spec.d {
                let mut v = x.coords()[j - 1];
                for k in 1..j {
                    v += (spec.b_entry(j, k) as f64) * x.coords()[k - 1];
                }
                v += spec.h_for_level(j).evaluate_real(&x.coords()[..j - 1]);
                out[j - 1] = wrap_unit(v);
            }
        }
        Direction::Inverse => {
            out[0] = wrap_unit(x.coords()[0] - spec.y);
            for j in 2..=spec.d {
                let mut v = x.coords()[j - 1];
                for k in 1..j {
                    v -= (spec.b_entry(j, k) as f64) * out[k - 1];
                }
                v -= spec.h_for_level(j).evaluate_real(&out[..j - 1]);
                out[j - 1] = wrap_unit(v);
            }
        }
    }
    TorusPoint::new(out)
}

/// Time-changed linear flow on 𝕋ᵈ: the flow along direction Y₁ = y with
/// speed f > 0 (generator f·L_y), plus an auxiliary constant field Y₂ used
/// by the commutator function g = ½ − ½ L_{Y₂}(ln f).
#[derive(Debug, Clone)]
pub struct TimeChangeSpec {
    d: usize,
    y: FrequencyVector,
    f: TrigPoly,
    y2: Vec<f64>,
    f_inf: f64,
    f_sup: f64,
}

impl TimeChangeSpec {
    pub fn new(y: FrequencyVector, f: TrigPoly, y2: Vec<f64>) -> Result<Self> {
        let d = y.dim();
        if f.dim() != d || y2.len() != d {
            return Err(CoreError::InvalidArgument(format!(
                "dimension mismatch: y is {d}-dimensional, f on T^{}, y2 has length {}",
                f.dim(),
                y2.len()
            )));
        }
        if !f.is_real() {
            return Err(CoreError::InvalidArgument(
                "time-change density f must be real-valued".to_string(),
            ));
        }
        let resolution = default_infimum_resolution(d);
        let (f_inf, _) = f.certified_infimum(resolution)?;
        if f_inf <= 0.0 {
            return Err(CoreError::DomainError(format!(
                "time-change density must have a certified positive infimum; \
                 got lower bound {f_inf:.6e} at resolution {resolution}"
            )));
        }
        let (neg_sup, _) = f.scale(-1.0).certified_infimum(resolution)?;
        let f_sup = -neg_sup;
        Ok(TimeChangeSpec {
            d,
            y,
            f,
            y2,
            f_inf,
            f_sup,
        })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn direction(&self) -> &FrequencyVector {
        &self.y
    }

    pub fn density(&self) -> &TrigPoly {
        &self.f
    }

    pub fn second_field(&self) -> &[f64] {
        &self.y2
    }

    /// Certified lower bound for inf f (> 0 by construction).
    pub fn f_inf(&self) -> f64 {
        self.f_inf
    }

    /// Certified upper bound for sup f.
    pub fn f_sup(&self) -> f64 {
        self.f_sup
    }

    #[inline]
    pub fn speed_at(&self, x: &[f64]) -> f64 {
        self.f.evaluate_real(x)
    }
}

/// Solve the reparametrization equation t = ∫₀^h ds / f(p + s·y) for h by
/// safeguarded Newton iteration (bisection fallback inside the certified
/// bracket), with composite Gauss–Legendre quadrature refined until the
/// integral is trusted to tol/10. Returns the hitting parameter h.
pub fn time_change_hitting(spec: &TimeChangeSpec, p: &TorusPoint, t: f64, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(CoreError::InvalidArgument(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    let y = spec.y.as_slice();
    let p0 = p.coords();
    let inv_f = |s: f64| {
        let arg: Vec<f64> = p0
            .iter()
            .zip(y.iter())
            .map(|(pi, yi)| wrap_unit(pi + s * yi))
            .collect();
        1.0 / spec.f.evaluate_real(&arg)
    };
    let integral = |h: f64| -> Result<f64> {
        if h == 0.0 {
            return Ok(0.0);
        }
        let mut panels = (h.abs().ceil() as usize).max(1);
        let mut prev = crate::quad::integrate_composite(&inv_f, 0.0, h, 16, panels);
        for _ in 0..16 {
            panels *= 2;
            let next = crate::quad::integrate_composite(&inv_f, 0.0, h, 16, panels);
            if (next - prev).abs() <= tol / 10.0 {
                return Ok(next);
            }
            prev = next;
        }
        Err(CoreError::NumericFailure(format!(
            "quadrature for the reparametrization integral did not settle to \
             {:.3e} over [0, {h}]",
            tol / 10.0
        )))
    };
    // t = ∫₀^h ds/f with f ∈ [f_inf, f_sup] brackets h between t·f_inf and t·f_sup.
    let (mut lo, mut hi) = if t > 0.0 {
        (t * spec.f_inf, t * spec.f_sup)
    } else {
        (t * spec.f_sup, t * spec.f_inf)
    };
    let mut h = t * (spec.f_inf + spec.f_sup) / 2.0;
    for _ in 0..60 {
        let resid = integral(h)? - t;
        if resid.abs() <= tol {
            return Ok(h);
        }
        if resid > 0.0 {
            hi = h;
        } else {
            lo = h;
        }
        // Newton step with the exact derivative d/dh ∫₀^h ds/f = 1/f(p+hy).
        let arg: Vec<f64> = p0
            .iter()
            .zip(y.iter())
            .map(|(pi, yi)| wrap_unit(pi + h * yi))
            .collect();
        let newton = h - resid * spec.f.evaluate_real(&arg);
        h = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    Err(CoreError::NumericFailure(format!(
        "time-change hitting solve did not reach |residual| ≤ {tol:.3e} in 60 \
         iterations (t = {t}, final bracket [{lo}, {hi}])"
    )))
}

/// Time-t map of the time-changed flow: F̃_t(p) = p + h(p,t)·y.
pub fn time_change_map(spec: &TimeChangeSpec, p: &TorusPoint, t: f64, tol: f64) -> Result<TorusPoint> {
    let h = time_change_hitting(spec, p, t, tol)?;
    Ok(translate_flow(&spec.y, p, h))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const GOLDEN: f64 = 0.6180339887498949;

    fn golden_freq() -> FrequencyVector {
        FrequencyVector::new(vec![GOLDEN]).unwrap()
    }

    #[test]
    fn translate_flow_examples() {
        let y = FrequencyVector::new_unchecked(vec![0.5], "test: rational on purpose");
        let x = TorusPoint::new(vec![0.25]);
        let moved = translate_flow(&y, &x, 1.0);
        assert!((moved.coords()[0] - 0.75).abs() < 1e-15);

        let y2 = golden_freq();
        let p = TorusPoint::new(vec![0.37]);
        let same = translate_flow(&y2, &p, 0.0);
        assert_eq!(same.coords()[0], 0.37);

        let z = TorusPoint::new(vec![0.0]);
        let two = translate_flow(&y2, &z, 2.0);
        assert!((two.coords()[0] - 0.236067977499790).abs() < 1e-14);
    }

    #[test]
    fn wrapping_keeps_half_open_interval() {
        assert_eq!(wrap_unit(1.0), 0.0);
        assert_eq!(wrap_unit(-1e-300), 0.0); // 1.0 − 1e-300 rounds to 1.0
        assert!(wrap_unit(-0.25) == 0.75);
        assert!(wrap_unit(3.25) == 0.25);
        let p = TorusPoint::new(vec![-0.5, 2.5, 0.999999]);
        assert!(p.coords().iter().all(|c| (0.0..1.0).contains(c)));
    }

    #[test]
    fn rationality_heuristic() {
        assert!(FrequencyVector::new(vec![0.5]).is_err());
        assert!(FrequencyVector::new(vec![2.0 / 3.0]).is_err());
        assert!(FrequencyVector::new(vec![GOLDEN]).is_ok());
        // Ratios: (γ, 2γ) is rationally dependent even though both entries
        // are irrational.
        assert!(FrequencyVector::new(vec![GOLDEN, 2.0 * GOLDEN]).is_err());
        // Flow directions allow rational coordinates but not rational ratios.
        assert!(FrequencyVector::new_flow_direction(vec![1.0, GOLDEN]).is_ok());
        assert!(FrequencyVector::new_flow_direction(vec![1.0, 0.5]).is_err());
        assert!(FrequencyVector::new_flow_direction(vec![0.0, 0.0]).is_err());
    }

    fn anzai_spec(eta_amp: f64) -> SkewProductSpec {
        let eta = if eta_amp == 0.0 {
            TrigPoly::zero(1)
        } else {
            TrigPoly::sine(1, &[1], eta_amp)
        };
        SkewProductSpec::new(golden_freq(), vec![vec![1]], vec![eta], vec![1]).unwrap()
    }

    #[test]
    fn skew_apply_examples() {
        let spec = anzai_spec(0.0);
        let (x1, z1) = skew_apply(&spec, &TorusPoint::new(vec![0.0]), &TorusPoint::new(vec![0.0]));
        assert!((x1.coords()[0] - GOLDEN).abs() < 1e-15);
        assert_eq!(z1.coords()[0], 0.0);

        // Integer shift: N = [2], x = 0.5 gives z-shift exactly 1 ≡ 0.
        let spec2 = SkewProductSpec::new(
            golden_freq(),
            vec![vec![2]],
            vec![TrigPoly::zero(1)],
            vec![1],
        )
        .unwrap();
        let (_, z2) = skew_apply(&spec2, &TorusPoint::new(vec![0.5]), &TorusPoint::new(vec![0.25]));
        assert!(circle_distance(z2.coords()[0], 0.25) < 1e-15);

        // Harmonic cocycle at x = 1/4: shift = 0.25·N + (0.5/2π)·sin(π/2).
        let amp = 0.5 / crate::trigfun::TWO_PI;
        let spec3 = anzai_spec(amp);
        let (_, z3) = skew_apply(&spec3, &TorusPoint::new(vec![0.25]), &TorusPoint::new(vec![0.0]));
        assert!((z3.coords()[0] - (0.25 + amp)).abs() < 1e-14);
    }

    #[test]
    fn degenerate_character_detection() {
        // N maps everything into the kernel of m.
        let spec = SkewProductSpec::new(
            golden_freq(),
            vec![vec![1], vec![-1]],
            vec![TrigPoly::zero(1), TrigPoly::zero(1)],
            vec![1, 1],
        )
        .unwrap();
        assert!(spec.is_degenerate());
        let spec2 = anzai_spec(0.0);
        assert!(!spec2.is_degenerate());
        assert_eq!(spec2.nt_m(), vec![1]);
    }

    #[test]
    fn cocycle_phase_sum_closed_form() {
        let spec = anzai_spec(0.0);
        let x = TorusPoint::new(vec![0.3]);
        assert_eq!(cocycle_phase_sum(&spec, &x, 0), 0.0);
        let n = 57u64;
        let s = cocycle_phase_sum(&spec, &x, n);
        let nf = n as f64;
        let expected = nf * 0.3 + nf * (nf - 1.0) / 2.0 * GOLDEN;
        assert!((s - expected).abs() < 1e-9, "sum {s} vs {expected}");
        // Single term.
        let s1 = cocycle_phase_sum(&spec, &x, 1);
        assert!((s1 - 0.3).abs() < 1e-15);
    }

    #[test]
    fn iterated_skew_phase_matches_cocycle_sum() {
        let amp = 0.5 / crate::trigfun::TWO_PI;
        let spec = anzai_spec(amp);
        let mut x = TorusPoint::new(vec![0.137]);
        let mut z = TorusPoint::new(vec![0.0]);
        let x0 = x.clone();
        let n = 200u64;
        for _ in 0..n {
            let (xn, zn) = skew_apply(&spec, &x, &z);
            x = xn;
            z = zn;
        }
        let s = cocycle_phase_sum(&spec, &x0, n);
        assert!(
            circle_distance(z.coords()[0], wrap_unit(s)) < 1e-10,
            "fiber phase {} vs cocycle sum {}",
            z.coords()[0],
            wrap_unit(s)
        );
    }

    fn anzai_furstenberg() -> FurstenbergSpec {
        FurstenbergSpec::new(GOLDEN, vec![vec![1]], vec![TrigPoly::zero(1)]).unwrap()
    }

    #[test]
    fn furstenberg_forward_at_origin() {
        let spec = anzai_furstenberg();
        let image = furstenberg_apply(&spec, &TorusPoint::new(vec![0.0, 0.0]), Direction::Forward);
        assert!((image.coords()[0] - GOLDEN).abs() < 1e-15);
        assert_eq!(image.coords()[1], 0.0);
    }

    #[test]
    fn furstenberg_inverse_round_trip_d2() {
        use rand::Rng;
        use rand::SeedableRng;
        let spec = FurstenbergSpec::new(
            GOLDEN,
            vec![vec![3]],
            vec![TrigPoly::cosine(1, &[2], 0.2)],
        )
        .unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let p = TorusPoint::new(vec![rng.gen::<f64>(), rng.gen::<f64>()]);
            let fwd = furstenberg_apply(&spec, &p, Direction::Forward);
            let back = furstenberg_apply(&spec, &fwd, Direction::Inverse);
            assert!(back.distance(&p) < 1e-12);
        }
    }

    #[test]
    fn furstenberg_inverse_round_trip_d3() {
        use rand::Rng;
        use rand::SeedableRng;
        let spec = FurstenbergSpec::new(
            GOLDEN,
            vec![vec![1], vec![0, 2]],
            vec![
                TrigPoly::zero(1),
                TrigPoly::cosine(2, &[0, 1], 0.1),
            ],
        )
        .unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let p = TorusPoint::new(vec![rng.gen(), rng.gen(), rng.gen()]);
            let fwd = furstenberg_apply(&spec, &p, Direction::Forward);
            let back = furstenberg_apply(&spec, &fwd, Direction::Inverse);
            assert!(back.distance(&p) < 1e-12);
            let fwd2 = furstenberg_apply(&spec, &back, Direction::Forward);
            assert!(fwd2.distance(&fwd) < 1e-12);
        }
    }

    #[test]
    fn furstenberg_preserves_haar_measure() {
        // Grid mean of φ∘T equals the (zero) mean of φ for zero-mean φ.
        let spec = FurstenbergSpec::new(
            GOLDEN,
            vec![vec![2]],
            vec![TrigPoly::sine(1, &[1], 0.1)],
        )
        .unwrap();
        let phi = TrigPoly::cosine(2, &[1, 2], 1.0).add(&TrigPoly::sine(2, &[0, 1], 0.5));
        let r = 64usize;
        let mut vals = Vec::with_capacity(r * r);
        for i in 0..r {
            for j in 0..r {
                let p = TorusPoint::new(vec![i as f64 / r as f64, j as f64 / r as f64]);
                let image = furstenberg_apply(&spec, &p, Direction::Forward);
                vals.push(phi.evaluate_real(image.coords()));
            }
        }
        let mean = pairwise_sum(&vals) / vals.len() as f64;
        assert!(mean.abs() < 1e-10, "pushforward grid mean {mean}");
    }

    fn cosine_density_spec() -> TimeChangeSpec {
        let f = TrigPoly::constant(1, 1.0).add(&TrigPoly::cosine(1, &[1], 0.3));
        TimeChangeSpec::new(
            FrequencyVector::new_flow_direction(vec![1.0]).unwrap(),
            f,
            vec![1.0],
        )
        .unwrap()
    }

    #[test]
    fn time_change_trivial_densities() {
        let unit = TimeChangeSpec::new(
            FrequencyVector::new_flow_direction(vec![1.0]).unwrap(),
            TrigPoly::constant(1, 1.0),
            vec![1.0],
        )
        .unwrap();
        let p = TorusPoint::new(vec![0.2]);
        let h = time_change_hitting(&unit, &p, 0.73, 1e-12).unwrap();
        assert!((h - 0.73).abs() < 1e-12);

        let c = 2.5;
        let constant = TimeChangeSpec::new(
            FrequencyVector::new_flow_direction(vec![1.0]).unwrap(),
            TrigPoly::constant(1, c),
            vec![1.0],
        )
        .unwrap();
        let h2 = time_change_hitting(&constant, &p, 0.4, 1e-12).unwrap();
        assert!((h2 - c * 0.4).abs() < 1e-11);
    }

    #[test]
    fn time_change_matches_rk4_oracle() {
        // dx/dt = f(x) integrated by fixed-step RK4 is an independent oracle
        // for the hitting parameter h(p,t) = x(t) − p.
        let spec = cosine_density_spec();
        let p = TorusPoint::new(vec![0.0]);
        let f = |x: f64| 1.0 + 0.3 * (crate::trigfun::TWO_PI * x).cos();
        let mut x = 0.0f64;
        let steps = 100_000;
        let dt = 1.0 / steps as f64;
        for _ in 0..steps {
            let k1 = f(x);
            let k2 = f(x + 0.5 * dt * k1);
            let k3 = f(x + 0.5 * dt * k2);
            let k4 = f(x + dt * k3);
            x += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        let h = time_change_hitting(&spec, &p, 1.0, 1e-12).unwrap();
        assert!((h - x).abs() < 1e-8, "newton {h} vs rk4 {x}");
    }

    #[test]
    fn time_change_spec_rejects_sign_changing_density() {
        let f = TrigPoly::constant(1, 0.4).add(&TrigPoly::cosine(1, &[1], 1.0));
        let err = TimeChangeSpec::new(
            FrequencyVector::new_flow_direction(vec![1.0]).unwrap(),
            f,
            vec![1.0],
        );
        assert!(matches!(err, Err(CoreError::DomainError(_))));
    }

    #[test]
    fn certified_density_bounds_bracket_true_range() {
        let spec = cosine_density_spec();
        assert!(spec.f_inf() > 0.69 && spec.f_inf() <= 0.7);
        assert!(spec.f_sup() >= 1.3 && spec.f_sup() < 1.31);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn prop_translation_group_law(
            x in 0.0f64..1.0,
            s in -5.0f64..5.0,
            t in -5.0f64..5.0,
        ) {
            let y = golden_freq();
            let p = TorusPoint::new(vec![x]);
            let both = translate_flow(&y, &p, s + t);
            let seq = translate_flow(&y, &translate_flow(&y, &p, s), t);
            prop_assert!(both.distance(&seq) < 1e-12);
        }

        #[test]
        fn prop_time_change_flow_property(
            x in 0.0f64..1.0,
            s in 0.0f64..10.0,
            t in 0.0f64..10.0,
        ) {
            let spec = cosine_density_spec();
            let tol = 1e-9;
            let p = TorusPoint::new(vec![x]);
            let joint = time_change_map(&spec, &p, s + t, tol).unwrap();
            let mid = time_change_map(&spec, &p, s, tol).unwrap();
            let seq = time_change_map(&spec, &mid, t, tol).unwrap();
            prop_assert!(joint.distance(&seq) < 10.0 * tol * spec.f_sup());
        }

        #[test]
        fn prop_furstenberg_measure_preserving_round_trip(
            a in 0.0f64..1.0,
            b in 0.0f64..1.0,
        ) {
            let spec = anzai_furstenberg();
            let p = TorusPoint::new(vec![a, b]);
            let q = furstenberg_apply(
                &spec,
                &furstenberg_apply(&spec, &p, Direction::Forward),
                Direction::Inverse,
            );
            prop_assert!(q.distance(&p) < 1e-12);
        }
    }
}
