//! Operator calculus on truncated frequency windows.
//!
//! Koopman operators of skew products and triangular (Furstenberg-type)
//! transformations act on Fourier coefficients as compositions of three
//! primitive steps: diagonal phases (the base translation), index shifts
//! (affine cocycle parts), and convolutions (phase-polynomial
//! multiplications). This module assembles their dense truncations on a
//! window {|k|∞ ≤ M} ⊂ ℤ^d, with
//!
//! * exact assembly by coefficient convolution (no quadrature),
//! * a `residual_bound` tracking the ℓ¹ mass of the truncated phase tails
//!   (the only approximation for trig-polynomial data),
//! * an optional fast-apply pipeline whose convolution step runs on a
//!   zero-padded FFT grid of size R = next_pow2(2(M + deg) + 2), alias-free
//!   by construction,
//! * averaged conjugate operators A_n = (1/n) Σ_{ℓ<n} U^{−ℓ} A U^ℓ under a
//!   window-sizing rule margin ≥ n·band(U), so interior entries never see
//!   the window edge.
//!
//! Residual bounds of operator products are reported as the **sum of the
//! factor bounds**: this is a first-order budget, valid to leading order in
//! the truncation tails, and is the convention used throughout.

use crate::error::{CoreError, Result};
use crate::linalg::{vec_inner, vec_norm, CMatrix};
use crate::torusdyn::{FurstenbergSpec, SkewProductSpec};
use crate::trigfun::{ndfft, TrigPoly, TWO_PI};
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Symmetric frequency window {k ∈ ℤ^d : |k|∞ ≤ M} with a designated
/// interior {|k|∞ ≤ M − margin}. Flat indices are row-major with axis 0
/// slowest, offset by +M per axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FreqWindow {
    d: usize,
    m: usize,
    margin: usize,
}

impl FreqWindow {
    pub fn new(d: usize, m: usize, margin: usize) -> Result<Self> {
        if d == 0 {
            return Err(CoreError::InvalidArgument(
                "window dimension must be at least 1".to_string(),
            ));
        }
        if m == 0 {
            return Err(CoreError::InvalidArgument(
                "window half-width must be at least 1".to_string(),
            ));
        }
        if margin >= m {
            return Err(CoreError::InvalidArgument(format!(
                "margin {margin} must be smaller than the half-width {m}"
            )));
        }
        Ok(FreqWindow { d, m, margin })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn half_width(&self) -> usize {
        self.m
    }

    pub fn margin(&self) -> usize {
        self.margin
    }

    /// Half-width of the interior region, M − margin.
    pub fn interior_half_width(&self) -> usize {
        self.m - self.margin
    }

    /// Points per axis, 2M + 1.
    pub fn side(&self) -> usize {
        2 * self.m + 1
    }

    /// Total number of lattice points, (2M+1)^d.
    pub fn dim_total(&self) -> usize {
        self.side().pow(self.d as u32)
    }

    pub fn contains(&self, k: &[i32]) -> bool {
        debug_assert_eq!(k.len(), self.d);
        k.iter().all(|v| v.unsigned_abs() as usize <= self.m)
    }

    pub fn is_interior(&self, k: &[i32]) -> bool {
        debug_assert_eq!(k.len(), self.d);
        k.iter()
            .all(|v| v.unsigned_abs() as usize <= self.interior_half_width())
    }

    /// Flat index of a frequency vector, if it lies in the window.
    pub fn index(&self, k: &[i32]) -> Option<usize> {
        if k.len() != self.d || !self.contains(k) {
            return None;
        }
        let side = self.side();
        let mut idx = 0usize;
        for v in k {
            idx = idx * side + (*v + self.m as i32) as usize;
        }
        Some(idx)
    }

    /// Frequency vector of a flat index.
    pub fn freq(&self, idx: usize) -> Vec<i32> {
        let mut out = vec![0i32; self.d];
        self.freq_into(idx, &mut out);
        out
    }

    pub fn freq_into(&self, idx: usize, out: &mut [i32]) {
        debug_assert!(idx < self.dim_total());
        let side = self.side();
        let mut rem = idx;
        for a in (0..self.d).rev() {
            out[a] = (rem % side) as i32 - self.m as i32;
            rem /= side;
        }
    }

    /// |k|∞ of the frequency at a flat index.
    fn sup_norm_of(&self, idx: usize) -> usize {
        let side = self.side();
        let mut rem = idx;
        let mut sup = 0usize;
        for _ in 0..self.d {
            let v = ((rem % side) as i32 - self.m as i32).unsigned_abs() as usize;
            sup = sup.max(v);
            rem /= side;
        }
        sup
    }

    /// Flat indices of the interior region.
    pub fn interior_indices(&self) -> Vec<usize> {
        (0..self.dim_total())
            .filter(|idx| self.sup_norm_of(*idx) <= self.interior_half_width())
            .collect()
    }

    /// Convert a frequency-space band (|Δk|∞ ≤ b) to a flat-index band:
    /// |Δidx| ≤ b·((2M+1)^d − 1)/(2M). Equals b for d = 1 and b·(2M+2)
    /// for d = 2.
    pub fn flat_band(&self, freq_band: usize) -> usize {
        if freq_band == 0 {
            return 0;
        }
        let side = self.side();
        let mut acc = 0usize;
        let mut pw = 1usize;
        for _ in 0..self.d {
            acc += pw;
            pw = pw.saturating_mul(side);
        }
        (freq_band.saturating_mul(acc)).min(self.dim_total().saturating_sub(1))
    }
}

/// Coefficient vector on a frequency window, with a conservative bound on
/// the support {|k|∞ ≤ support} of its nonzero entries.
#[derive(Debug, Clone)]
pub struct StateVector {
    window: FreqWindow,
    data: Vec<Complex64>,
    support: usize,
}

impl StateVector {
    pub fn zero(window: FreqWindow) -> Self {
        StateVector {
            window,
            data: vec![ZERO; window.dim_total()],
            support: 0,
        }
    }

    /// The basis vector e_k.
    pub fn basis(window: FreqWindow, k: &[i32]) -> Result<Self> {
        let idx = window.index(k).ok_or_else(|| {
            CoreError::InvalidArgument(format!(
                "frequency {k:?} is outside the window of half-width {}",
                window.half_width()
            ))
        })?;
        let mut v = Self::zero(window);
        v.data[idx] = Complex64::new(1.0, 0.0);
        v.support = k.iter().map(|x| x.unsigned_abs() as usize).max().unwrap_or(0);
        Ok(v)
    }

    /// Build a vector from explicit Fourier coefficients. Repeated
    /// frequencies accumulate. The result must be nonzero and every
    /// frequency must lie inside the window interior.
    pub fn from_coefficients(window: FreqWindow, terms: &[(Vec<i32>, Complex64)]) -> Result<Self> {
        let mut v = Self::zero(window);
        let mut support = 0usize;
        for (k, c) in terms {
            if k.len() != window.dim() {
                return Err(CoreError::InvalidArgument(format!(
                    "frequency {k:?} has length {}, expected {}",
                    k.len(),
                    window.dim()
                )));
            }
            let idx = window.index(k).ok_or_else(|| {
                CoreError::InvalidArgument(format!(
                    "frequency {k:?} is outside the window of half-width {}",
                    window.half_width()
                ))
            })?;
            v.data[idx] += c;
            let reach = k.iter().map(|x| x.unsigned_abs() as usize).max().unwrap_or(0);
            support = support.max(reach);
        }
        if v.norm() == 0.0 {
            return Err(CoreError::InvalidArgument(
                "state vector built from coefficients is zero".to_string(),
            ));
        }
        v.support = support;
        Ok(v)
    }

    /// Deterministic random unit vector supported on {|k|∞ ≤ support}.
    /// The draw order depends only on the dimension and the support box —
    /// not on the window half-width or margin — so equal seeds over
    /// different windows produce the same coefficients on the shared box.
    pub fn random_unit(window: FreqWindow, support: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        if support > window.half_width() {
            return Err(CoreError::InvalidArgument(format!(
                "requested support {support} exceeds the window half-width {}",
                window.half_width()
            )));
        }
        let mut v = Self::zero(window);
        let side = 2 * support + 1;
        let total = side.pow(window.dim() as u32);
        let mut k = vec![0i32; window.dim()];
        for box_idx in 0..total {
            let mut rem = box_idx;
            for a in (0..window.dim()).rev() {
                k[a] = (rem % side) as i32 - support as i32;
                rem /= side;
            }
            let re: f64 = rng.gen_range(-1.0..1.0);
            let im: f64 = rng.gen_range(-1.0..1.0);
            let idx = v.window.index(&k).expect("support box inside window");
            v.data[idx] = Complex64::new(re, im);
        }
        let norm = v.norm();
        if norm == 0.0 {
            return Err(CoreError::NumericFailure(
                "random draw produced the zero vector".to_string(),
            ));
        }
        for z in v.data.iter_mut() {
            *z /= norm;
        }
        v.support = support;
        Ok(v)
    }

    pub fn window(&self) -> FreqWindow {
        self.window
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn support(&self) -> usize {
        self.support
    }

    pub fn coeff(&self, k: &[i32]) -> Complex64 {
        self.window.index(k).map_or(ZERO, |idx| self.data[idx])
    }

    pub fn norm(&self) -> f64 {
        vec_norm(&self.data)
    }

    /// ⟨self, other⟩, conjugate-linear in self.
    pub fn inner(&self, other: &StateVector) -> Complex64 {
        vec_inner(&self.data, &other.data)
    }

    pub fn sub(&self, other: &StateVector) -> Result<StateVector> {
        if self.window != other.window {
            return Err(CoreError::InvalidArgument(
                "vectors live on different windows".to_string(),
            ));
        }
        let data: Vec<Complex64> = self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| a - b)
            .collect();
        let support = self.support.max(other.support);
        Ok(StateVector {
            window: self.window,
            data,
            support,
        })
    }

    pub fn add(&self, other: &StateVector) -> Result<StateVector> {
        if self.window != other.window {
            return Err(CoreError::InvalidArgument(
                "vectors live on different windows".to_string(),
            ));
        }
        let data: Vec<Complex64> = self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| a + b)
            .collect();
        let support = self.support.max(other.support);
        Ok(StateVector {
            window: self.window,
            data,
            support,
        })
    }

    pub fn scale(&self, c: Complex64) -> StateVector {
        StateVector {
            window: self.window,
            data: self.data.iter().map(|z| z * c).collect(),
            support: self.support,
        }
    }

    fn scanned_support(&self) -> usize {
        let mut sup = 0usize;
        for (idx, z) in self.data.iter().enumerate() {
            if *z != ZERO {
                sup = sup.max(self.window.sup_norm_of(idx));
            }
        }
        sup
    }
}

/// One step of a fast-apply pipeline, in frequency space.
#[derive(Debug, Clone)]
pub enum FastStep {
    /// Entrywise multiplication (diagonal operator). Preserves support.
    Diag(Vec<Complex64>),
    /// Index shift k ↦ k + s; entries leaving the window are dropped,
    /// matching the dense truncation. Grows support by |s|∞.
    Shift(Vec<i32>),
    /// Multiplication by a trig polynomial, i.e. coefficient convolution,
    /// computed on an alias-free zero-padded FFT grid. Grows support by the
    /// polynomial degree.
    Mult(TrigPoly),
}

/// Pipeline of steps stored leftmost factor first; application runs
/// rightmost-first, matching operator composition.
#[derive(Debug, Clone)]
pub struct FastApply {
    pub steps: Vec<FastStep>,
}

/// Dense truncation of an operator on a frequency window.
#[derive(Debug, Clone)]
pub struct OperatorMatrix {
    window: FreqWindow,
    mat: CMatrix,
    /// Entries with |k_row − k_col|∞ > band are exactly zero.
    band: usize,
    /// True only when the assembly involved no truncated transcendental
    /// phase, so the matrix is the exact restriction of a unitary.
    unitary: bool,
    /// ℓ¹ bound on the dropped phase tails (operator-norm bound of the
    /// discarded part, first-order under products).
    residual_bound: f64,
    fast: Option<FastApply>,
}

impl OperatorMatrix {
    pub fn window(&self) -> FreqWindow {
        self.window
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.mat
    }

    pub fn band(&self) -> usize {
        self.band
    }

    pub fn is_unitary(&self) -> bool {
        self.unitary
    }

    pub fn residual_bound(&self) -> f64 {
        self.residual_bound
    }

    pub fn has_fast_path(&self) -> bool {
        self.fast.is_some()
    }

    pub fn entry(&self, k_row: &[i32], k_col: &[i32]) -> Complex64 {
        match (self.window.index(k_row), self.window.index(k_col)) {
            (Some(r), Some(c)) => self.mat.at(r, c),
            _ => ZERO,
        }
    }

    /// Largest |diagonal entry| over {|k|∞ ≤ support}.
    pub fn diag_sup_within(&self, support: usize) -> f64 {
        let mut sup = 0.0f64;
        for idx in 0..self.window.dim_total() {
            if self.window.sup_norm_of(idx) <= support {
                sup = sup.max(self.mat.at(idx, idx).norm());
            }
        }
        sup
    }

    /// Scalar multiple cT. The fast pipeline is dropped and the unitary
    /// flag cleared; the residual bound scales by |c|.
    pub fn scale(&self, c: f64) -> OperatorMatrix {
        OperatorMatrix {
            window: self.window,
            mat: self.mat.scale(Complex64::new(c, 0.0)),
            band: self.band,
            unitary: false,
            residual_bound: self.residual_bound * c.abs(),
            fast: None,
        }
    }

    /// Conjugate transpose. The fast pipeline is dropped.
    pub fn adjoint(&self) -> OperatorMatrix {
        OperatorMatrix {
            window: self.window,
            mat: self.mat.adjoint(),
            band: self.band,
            unitary: self.unitary,
            residual_bound: self.residual_bound,
            fast: None,
        }
    }

    /// Apply through the fast pipeline when present, else densely.
    pub fn apply(&self, v: &StateVector) -> Result<StateVector> {
        if self.fast.is_some() {
            self.apply_fast(v)
        } else {
            self.apply_dense(v)
        }
    }

    /// Dense banded matrix-vector product.
    pub fn apply_dense(&self, v: &StateVector) -> Result<StateVector> {
        if v.window != self.window {
            return Err(CoreError::InvalidArgument(
                "vector window does not match the operator window".to_string(),
            ));
        }
        let data = self
            .mat
            .matvec_banded(&v.data, Some(self.window.flat_band(self.band)));
        let mut out = StateVector {
            window: self.window,
            data,
            support: 0,
        };
        out.support = out.scanned_support();
        Ok(out)
    }

    fn apply_fast(&self, v: &StateVector) -> Result<StateVector> {
        if v.window != self.window {
            return Err(CoreError::InvalidArgument(
                "vector window does not match the operator window".to_string(),
            ));
        }
        let pipeline = self.fast.as_ref().expect("fast path present");
        let window = self.window;
        let m = window.half_width();
        let mut data = v.data.clone();
        let mut support = v.support;
        for step in pipeline.steps.iter().rev() {
            match step {
                FastStep::Diag(vals) => {
                    for (z, s) in data.iter_mut().zip(vals.iter()) {
                        *z *= s;
                    }
                }
                FastStep::Shift(s) => {
                    let mut out = vec![ZERO; data.len()];
                    let mut k = vec![0i32; window.dim()];
                    for (idx, z) in data.iter().enumerate() {
                        if *z == ZERO {
                            continue;
                        }
                        window.freq_into(idx, &mut k);
                        for (ki, si) in k.iter_mut().zip(s.iter()) {
                            *ki += si;
                        }
                        if let Some(tgt) = window.index(&k) {
                            out[tgt] = *z;
                        }
                    }
                    data = out;
                    let shift_norm = s.iter().map(|x| x.unsigned_abs() as usize).max().unwrap_or(0);
                    support = (support + shift_norm).min(m);
                }
                FastStep::Mult(p) => {
                    data = convolve_fft(window, &data, p);
                    support = (support + p.degree().max(0) as usize).min(m);
                }
            }
        }
        // Entries outside the support bound are pure FFT roundoff (the exact
        // operator vanishes there); clear them so support tracking stays
        // meaningful.
        for (idx, z) in data.iter_mut().enumerate() {
            if window.sup_norm_of(idx) > support {
                *z = ZERO;
            }
        }
        let mut out = StateVector {
            window,
            data,
            support,
        };
        out.support = out.scanned_support().min(support);
        Ok(out)
    }

    /// Structured text export: header, then nonzero entries row-major as
    /// `row col re im`.
    pub fn to_text(&self) -> String {
        let n = self.window.dim_total();
        let mut entries = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let z = self.mat.at(i, j);
                if z != ZERO {
                    entries.push(format!("{} {} {} {}", i, j, z.re, z.im));
                }
            }
        }
        let mut out = String::new();
        out.push_str("operator-matrix\n");
        out.push_str(&format!("dim {}\n", self.window.dim()));
        out.push_str(&format!("half-width {}\n", self.window.half_width()));
        out.push_str(&format!("margin {}\n", self.window.margin()));
        out.push_str(&format!("band {}\n", self.band));
        out.push_str(&format!("unitary {}\n", self.unitary));
        out.push_str(&format!("residual-bound {}\n", self.residual_bound));
        out.push_str(&format!("entries {}\n", entries.len()));
        for line in entries {
            out.push_str(&line);
            out.push('\n');
        }
        out
    }

    /// Tightest band consistent with the actual sparsity pattern.
    fn scanned_band(&self) -> usize {
        let n = self.window.dim_total();
        let d = self.window.dim();
        let mut kr = vec![0i32; d];
        let mut kc = vec![0i32; d];
        let mut band = 0usize;
        for i in 0..n {
            for j in 0..n {
                if self.mat.at(i, j) != ZERO {
                    self.window.freq_into(i, &mut kr);
                    self.window.freq_into(j, &mut kc);
                    let delta = kr
                        .iter()
                        .zip(kc.iter())
                        .map(|(a, b)| (a - b).unsigned_abs() as usize)
                        .max()
                        .unwrap_or(0);
                    band = band.max(delta);
                }
            }
        }
        band
    }
}

/// Alias-free multiplication of windowed coefficients by a trig polynomial:
/// zero-pad to R = next_pow2(2(M + deg) + 2) per axis, transform, multiply
/// pointwise, transform back, and read the window (frequencies beyond the
/// window are dropped, matching the dense truncation).
fn convolve_fft(window: FreqWindow, data: &[Complex64], p: &TrigPoly) -> Vec<Complex64> {
    let d = window.dim();
    let m = window.half_width();
    let deg = p.degree().max(0) as usize;
    let r = (2 * (m + deg) + 2).next_power_of_two();
    let dims = vec![r; d];
    let total: usize = dims.iter().product();
    let mut buf = vec![ZERO; total];
    let mut pbuf = vec![ZERO; total];
    let mut k = vec![0i32; d];
    for (idx, z) in data.iter().enumerate() {
        if *z == ZERO {
            continue;
        }
        window.freq_into(idx, &mut k);
        buf[wrapped_position(&k, r)] = *z;
    }
    for (kv, c) in p.coeffs() {
        pbuf[wrapped_position(kv, r)] += c;
    }
    ndfft(&mut buf, &dims, true);
    ndfft(&mut pbuf, &dims, true);
    for (b, pv) in buf.iter_mut().zip(pbuf.iter()) {
        *b *= pv;
    }
    ndfft(&mut buf, &dims, false);
    let scale = 1.0 / total as f64;
    let mut out = vec![ZERO; window.dim_total()];
    for (idx, o) in out.iter_mut().enumerate() {
        window.freq_into(idx, &mut k);
        *o = buf[wrapped_position(&k, r)] * scale;
    }
    out
}

fn wrapped_position(k: &[i32], r: usize) -> usize {
    let mut pos = 0usize;
    for ki in k {
        pos = pos * r + ki.rem_euclid(r as i32) as usize;
    }
    pos
}

/// Koopman operator of the translation by y: the diagonal e^{2πi k·y}.
/// Band 0 and exactly unitary.
pub fn translation_koopman(
    window: FreqWindow,
    y: &crate::torusdyn::FrequencyVector,
) -> Result<OperatorMatrix> {
    if y.dim() != window.dim() {
        return Err(CoreError::InvalidArgument(format!(
            "frequency vector lives on T^{}, window on T^{}",
            y.dim(),
            window.dim()
        )));
    }
    let n = window.dim_total();
    let mut mat = CMatrix::zeros(n);
    let mut vals = vec![ZERO; n];
    let mut k = vec![0i32; window.dim()];
    for idx in 0..n {
        window.freq_into(idx, &mut k);
        let z = Complex64::from_polar(1.0, TWO_PI * y.dot(&k));
        mat.set(idx, idx, z);
        vals[idx] = z;
    }
    Ok(OperatorMatrix {
        window,
        mat,
        band: 0,
        unitary: true,
        residual_bound: 0.0,
        fast: Some(FastApply {
            steps: vec![FastStep::Diag(vals)],
        }),
    })
}

/// Dense truncation of multiplication by a trig polynomial:
/// entry(k, k′) = coeff(k − k′). Requires degree ≤ M.
pub fn multiplication_matrix(window: FreqWindow, p: &TrigPoly) -> Result<OperatorMatrix> {
    if p.dim() != window.dim() {
        return Err(CoreError::InvalidArgument(format!(
            "polynomial lives on T^{}, window on T^{}",
            p.dim(),
            window.dim()
        )));
    }
    let deg = p.degree().max(0) as usize;
    if deg > window.half_width() {
        return Err(CoreError::InvalidArgument(format!(
            "multiplication by a polynomial of degree {deg} needs half-width M ≥ {deg}; \
             the window has M = {}",
            window.half_width()
        )));
    }
    let n = window.dim_total();
    let mut mat = CMatrix::zeros(n);
    let d = window.dim();
    let mut k = vec![0i32; d];
    let mut tgt = vec![0i32; d];
    for col in 0..n {
        window.freq_into(col, &mut k);
        for (nu, c) in p.coeffs() {
            for i in 0..d {
                tgt[i] = k[i] + nu[i];
            }
            if let Some(row) = window.index(&tgt) {
                mat.set(row, col, mat.at(row, col) + c);
            }
        }
    }
    Ok(OperatorMatrix {
        window,
        mat,
        band: deg,
        unitary: false,
        residual_bound: 0.0,
        fast: Some(FastApply {
            steps: vec![FastStep::Mult(p.clone())],
        }),
    })
}

/// Which composed operator to assemble or conjugate against.
pub enum SystemOperator<'a> {
    /// Koopman operator of a skew product restricted to its fiber
    /// character: f ↦ e^{2πi m·(Nx + η(x))}·f(x + y) on L²(T^d_base).
    Skew(&'a SkewProductSpec),
    /// Koopman operator of a triangular transformation on T^j restricted to
    /// fiber character k in the last coordinate, acting on L²(T^{j−1}).
    Furstenberg {
        spec: &'a FurstenbergSpec,
        j: usize,
        k: i64,
    },
}

impl SystemOperator<'_> {
    fn window_dim(&self) -> usize {
        match self {
            SystemOperator::Skew(spec) => spec.base_dim(),
            SystemOperator::Furstenberg { j, .. } => j - 1,
        }
    }

    fn validate(&self, window: FreqWindow) -> Result<()> {
        if let SystemOperator::Furstenberg { spec, j, k } = self {
            if *j < 2 || *j > spec.dim() {
                return Err(CoreError::InvalidArgument(format!(
                    "level index j = {j} must lie in 2..={}",
                    spec.dim()
                )));
            }
            if *k == 0 {
                return Err(CoreError::InvalidArgument(
                    "fiber character k must be nonzero".to_string(),
                ));
            }
        }
        if window.dim() != self.window_dim() {
            return Err(CoreError::InvalidArgument(format!(
                "window dimension {} does not match the operator's base dimension {}",
                window.dim(),
                self.window_dim()
            )));
        }
        Ok(())
    }
}

fn checked_i32(v: i64) -> Result<i32> {
    i32::try_from(v).map_err(|_| {
        CoreError::InvalidArgument(format!("integer coefficient {v} exceeds the index range"))
    })
}

/// Assemble the dense Koopman truncation of a system operator, together
/// with a fast-apply pipeline when the operator is a global
/// Mult·Shift·Diag composition. `tol` is the phase-expansion truncation
/// tolerance; the returned `residual_bound` is the ℓ¹ mass of the dropped
/// tails (summed over factors, first-order).
pub fn assemble_koopman(
    system: &SystemOperator,
    window: FreqWindow,
    tol: f64,
) -> Result<OperatorMatrix> {
    system.validate(window)?;
    match system {
        SystemOperator::Skew(spec) => assemble_skew(spec, window, tol),
        SystemOperator::Furstenberg { spec, j: 2, k } => assemble_level2(spec, window, tol, *k),
        SystemOperator::Furstenberg { spec, j: 3, k } => assemble_level3(spec, window, tol, *k),
        SystemOperator::Furstenberg { j, .. } => Err(CoreError::InvalidArgument(format!(
            "operator assembly is implemented for levels j = 2 and j = 3; got j = {j}"
        ))),
    }
}

fn assemble_skew(spec: &SkewProductSpec, window: FreqWindow, tol: f64) -> Result<OperatorMatrix> {
    let d = window.dim();
    let (phase, residual) = spec.m_eta().unit_phase(tol)?;
    let deg = phase.degree().max(0) as usize;
    let shift: Vec<i32> = spec
        .nt_m()
        .iter()
        .map(|v| checked_i32(*v))
        .collect::<Result<_>>()?;
    let shift_norm = shift.iter().map(|x| x.unsigned_abs() as usize).max().unwrap_or(0);
    let band = shift_norm + deg;
    if band > window.half_width() {
        return Err(CoreError::InvalidArgument(format!(
            "window half-width M = {} cannot hold the operator band {band}: \
             need M ≥ {band} (index shift {shift_norm} plus phase degree {deg})",
            window.half_width()
        )));
    }
    let n = window.dim_total();
    let mut mat = CMatrix::zeros(n);
    let y = spec.frequency();
    let mut k = vec![0i32; d];
    let mut tgt = vec![0i32; d];
    let mut diag = vec![ZERO; n];
    for col in 0..n {
        window.freq_into(col, &mut k);
        let rot = Complex64::from_polar(1.0, TWO_PI * y.dot(&k));
        diag[col] = rot;
        for (nu, c) in phase.coeffs() {
            for i in 0..d {
                tgt[i] = k[i] + shift[i] + nu[i];
            }
            if let Some(row) = window.index(&tgt) {
                mat.set(row, col, mat.at(row, col) + c * rot);
            }
        }
    }
    let unitary = residual == 0.0;
    let fast = FastApply {
        steps: vec![
            FastStep::Mult(phase),
            FastStep::Shift(shift),
            FastStep::Diag(diag),
        ],
    };
    let mut op = OperatorMatrix {
        window,
        mat,
        band,
        unitary,
        residual_bound: residual,
        fast: Some(fast),
    };
    op.band = op.scanned_band();
    Ok(op)
}

fn assemble_level2(
    spec: &FurstenbergSpec,
    window: FreqWindow,
    tol: f64,
    k_char: i64,
) -> Result<OperatorMatrix> {
    let (phase, residual) = spec
        .h_for_level(2)
        .scale(k_char as f64)
        .unit_phase(tol)?;
    let deg = phase.degree().max(0) as usize;
    let kb = checked_i32(k_char * spec.b_entry(2, 1))?;
    let band = kb.unsigned_abs() as usize + deg;
    if band > window.half_width() {
        return Err(CoreError::InvalidArgument(format!(
            "window half-width M = {} cannot hold the operator band {band}: \
             need M ≥ {band} (index shift {} plus phase degree {deg})",
            window.half_width(),
            kb.unsigned_abs()
        )));
    }
    let n = window.dim_total();
    let mut mat = CMatrix::zeros(n);
    let y = spec.rotation();
    let mut diag = vec![ZERO; n];
    for col in 0..n {
        let kappa = window.freq(col)[0];
        let rot = Complex64::from_polar(1.0, TWO_PI * y * kappa as f64);
        diag[col] = rot;
        for (nu, c) in phase.coeffs() {
            let tgt = [kappa + kb + nu[0]];
            if let Some(row) = window.index(&tgt) {
                mat.set(row, col, mat.at(row, col) + c * rot);
            }
        }
    }
    let unitary = residual == 0.0;
    let fast = FastApply {
        steps: vec![
            FastStep::Shift(vec![kb]),
            FastStep::Mult(phase),
            FastStep::Diag(diag),
        ],
    };
    let mut op = OperatorMatrix {
        window,
        mat,
        band,
        unitary,
        residual_bound: residual,
        fast: Some(fast),
    };
    op.band = op.scanned_band();
    Ok(op)
}

/// Level j = 3: the operator factors through the Koopman operator W of the
/// two-dimensional triangular factor, which is block-diagonal in the second
/// frequency κ₂ — each block is a one-dimensional Diag·Shift·Mult with a
/// κ₂-dependent phase. The assembly loops over κ₂ slices and convolves the
/// top-level phase on top; there is no global Mult·Shift·Diag form, so no
/// fast pipeline is attached.
fn assemble_level3(
    spec: &FurstenbergSpec,
    window: FreqWindow,
    tol: f64,
    k_char: i64,
) -> Result<OperatorMatrix> {
    let m = window.half_width();
    let (phase_top, residual_top) = spec
        .h_for_level(3)
        .scale(k_char as f64)
        .unit_phase(tol)?;
    let deg_top = phase_top.degree().max(0) as usize;
    let s1 = checked_i32(k_char * spec.b_entry(3, 1))?;
    let s2 = checked_i32(k_char * spec.b_entry(3, 2))?;
    let shift_norm = s1.unsigned_abs().max(s2.unsigned_abs()) as usize;
    if deg_top + shift_norm > m {
        return Err(CoreError::InvalidArgument(format!(
            "window half-width M = {m} cannot hold the top-level band {}: \
             need M ≥ {} (index shift {shift_norm} plus phase degree {deg_top})",
            deg_top + shift_norm,
            deg_top + shift_norm
        )));
    }
    let b21 = spec.b_entry(2, 1);
    let y = spec.rotation();
    let h1 = spec.h_for_level(2);
    let n = window.dim_total();
    let mut mat = CMatrix::zeros(n);
    let mut residual_block_max = 0.0f64;
    // One κ₂ slice of W at a time: κ₂ is preserved by W, the κ₁ action is
    // Diag(e^{2πiκ₁y}) then Shift(κ₂ b₂₁) then Mult(e^{2πi κ₂ h₁}).
    for kappa2 in -(m as i32)..=(m as i32) {
        let (phase_block, res_block) = h1.scale(kappa2 as f64).unit_phase(tol)?;
        residual_block_max = residual_block_max.max(res_block);
        let block_shift = checked_i32(kappa2 as i64 * b21)?;
        for kappa1 in -(m as i32)..=(m as i32) {
            let col = window
                .index(&[kappa1, kappa2])
                .expect("slice point inside window");
            let rot = Complex64::from_polar(1.0, TWO_PI * y * kappa1 as f64);
            // W column entries (within this κ₂ slice), then the top-level
            // convolution and shift on top of each.
            for (nu_b, c_b) in phase_block.coeffs() {
                let w_row1 = kappa1 + block_shift + nu_b[0];
                let w_val = c_b * rot;
                for (nu_t, c_t) in phase_top.coeffs() {
                    let tgt = [w_row1 + s1 + nu_t[0], kappa2 + s2 + nu_t[1]];
                    if let Some(row) = window.index(&tgt) {
                        mat.set(row, col, mat.at(row, col) + c_t * w_val);
                    }
                }
            }
        }
    }
    let residual = residual_top + residual_block_max;
    let unitary = residual == 0.0;
    let mut op = OperatorMatrix {
        window,
        mat,
        band: 2 * m,
        unitary,
        residual_bound: residual,
        fast: None,
    };
    op.band = op.scanned_band();
    Ok(op)
}

/// Diagonal conjugate operator adapted to the system: the commutator with
/// the Koopman operator is multiplication by an explicit function times the
/// operator itself.
///
/// * Skew products: A e_k = (2π)²·(m·Ny)·(k·y)·e_k. Requires Nᵀm ≠ 0.
/// * Triangular level (j, k): A e_κ = κ_{j−1}/(k·b_{j,j−1})·e_κ.
pub fn conjugate_diagonal(system: &SystemOperator, window: FreqWindow) -> Result<OperatorMatrix> {
    system.validate(window)?;
    let n = window.dim_total();
    let mut mat = CMatrix::zeros(n);
    let mut vals = vec![ZERO; n];
    let mut k = vec![0i32; window.dim()];
    match system {
        SystemOperator::Skew(spec) => {
            if spec.is_degenerate() {
                return Err(CoreError::DegenerateSpec(
                    "the fiber character annihilates the linear cocycle part (Nᵀm = 0); \
                     no diagonal conjugate with a strictly positive commutator symbol exists \
                     for this component"
                        .to_string(),
                ));
            }
            let scale = TWO_PI * TWO_PI * spec.m_n_y();
            let y = spec.frequency();
            for idx in 0..n {
                window.freq_into(idx, &mut k);
                let lam = Complex64::new(scale * y.dot(&k), 0.0);
                mat.set(idx, idx, lam);
                vals[idx] = lam;
            }
        }
        SystemOperator::Furstenberg { spec, j, k: k_char } => {
            let denom = (*k_char as f64) * spec.subdiag(*j) as f64;
            for idx in 0..n {
                window.freq_into(idx, &mut k);
                let lam = Complex64::new(*k.last().unwrap() as f64 / denom, 0.0);
                mat.set(idx, idx, lam);
                vals[idx] = lam;
            }
        }
    }
    Ok(OperatorMatrix {
        window,
        mat,
        band: 0,
        unitary: false,
        residual_bound: 0.0,
        fast: Some(FastApply {
            steps: vec![FastStep::Diag(vals)],
        }),
    })
}

/// A_n = (1/n) Σ_{ℓ=0}^{n−1} U^{−ℓ} A U^ℓ via the recursion
/// C_{ℓ+1} = U† C_ℓ U in banded dense arithmetic. Requires
/// margin ≥ n·band(U) so that interior entries never see the window edge.
pub fn average_conjugate(
    a: &OperatorMatrix,
    u: &OperatorMatrix,
    n: u64,
) -> Result<OperatorMatrix> {
    if a.window != u.window {
        return Err(CoreError::InvalidArgument(
            "operators live on different windows".to_string(),
        ));
    }
    if n == 0 {
        return Err(CoreError::InvalidArgument(
            "average length n must be at least 1".to_string(),
        ));
    }
    let required = (n as usize).saturating_mul(u.band);
    if a.window.margin() < required {
        return Err(CoreError::InvalidArgument(format!(
            "window margin {} is too small for an average of length {n}: \
             requires margin ≥ {required} (n·band of the averaged operator)",
            a.window.margin()
        )));
    }
    Ok(average_conjugate_unchecked(a, u, n))
}

/// Same recursion without the margin gate; callers take responsibility for
/// interpreting entries near the window edge.
pub(crate) fn average_conjugate_unchecked(
    a: &OperatorMatrix,
    u: &OperatorMatrix,
    n: u64,
) -> OperatorMatrix {
    let window = a.window;
    let cap = 2 * window.half_width();
    let udag = u.mat.adjoint();
    let mut c = a.mat.clone();
    let mut band_c = a.band;
    let mut acc = a.mat.clone();
    for _ in 1..n {
        let t = c.matmul_banded(
            &u.mat,
            Some(window.flat_band(band_c)),
            Some(window.flat_band(u.band)),
        );
        band_c = (band_c + 2 * u.band).min(cap);
        c = udag.matmul_banded(
            &t,
            Some(window.flat_band(u.band)),
            Some(window.flat_band(band_c)),
        );
        acc = acc.add(&c);
    }
    let mat = acc.scale(Complex64::new(1.0 / n as f64, 0.0));
    OperatorMatrix {
        window,
        mat,
        band: band_c,
        unitary: false,
        residual_bound: n as f64 * u.residual_bound,
        fast: None,
    }
}

/// [A, B] = AB − BA in banded dense arithmetic; the band is at most the sum
/// of the factor bands, and swapping the arguments negates every entry
/// bitwise.
pub fn commutator(a: &OperatorMatrix, b: &OperatorMatrix) -> Result<OperatorMatrix> {
    if a.window != b.window {
        return Err(CoreError::InvalidArgument(
            "operators live on different windows".to_string(),
        ));
    }
    let window = a.window;
    let ab = a.mat.matmul_banded(
        &b.mat,
        Some(window.flat_band(a.band)),
        Some(window.flat_band(b.band)),
    );
    let ba = b.mat.matmul_banded(
        &a.mat,
        Some(window.flat_band(b.band)),
        Some(window.flat_band(a.band)),
    );
    let mat = ab.sub(&ba);
    Ok(OperatorMatrix {
        window,
        mat,
        band: (a.band + b.band).min(2 * window.half_width()),
        unitary: false,
        residual_bound: a.residual_bound + b.residual_bound,
        fast: None,
    })
}
