//! Sparse trigonometric polynomials on 𝕋ᵈ = (ℝ/ℤ)ᵈ and grid sampling.
//!
//! A [`TrigPoly`] is a finite coefficient map k ↦ c_k representing
//! f(x) = Σ_k c_k e^{2πi k·x}. The coefficient level is where the library
//! does exact work: Lie derivatives along constant fields, products
//! (convolution), pullbacks by translations. Real-valued polynomials are
//! tracked by a flag that is, by construction, always equal to the exact
//! Hermitian symmetry check c_{−k} = conj(c_k).
//!
//! On top of the exact layer sit controlled truncations of transcendental
//! images of trigonometric data — unit phases e^{2πif}, exponentials e^{f},
//! logarithms ln f — via alias-monitored FFT sampling, each returning an
//! explicit residual bound, plus certified grid infima with a Lipschitz
//! safety margin.

use crate::error::{CoreError, Result};
use crate::quad::pairwise_sum;
use num_complex::Complex64;
use rustfft::FftPlanner;
use std::collections::BTreeMap;
use std::fmt::Write as _;

pub const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Coefficients with modulus below this are dropped from the sparse map
/// (they are numerically indistinguishable from structural zeros).
pub const DROP_THRESHOLD: f64 = 1e-300;

/// Sparse trigonometric polynomial on 𝕋ᵈ.
#[derive(Debug, Clone, PartialEq)]
pub struct TrigPoly {
    dim: usize,
    /// Exactly equal to the Hermitian-symmetry check on `coeffs`.
    real: bool,
    coeffs: BTreeMap<Vec<i32>, Complex64>,
}

impl TrigPoly {
    pub fn zero(dim: usize) -> Self {
        TrigPoly {
            dim,
            real: true,
            coeffs: BTreeMap::new(),
        }
    }

    pub fn constant(dim: usize, value: f64) -> Self {
        let mut coeffs = BTreeMap::new();
        if value.abs() >= DROP_THRESHOLD {
            coeffs.insert(vec![0; dim], Complex64::new(value, 0.0));
        }
        TrigPoly {
            dim,
            real: true,
            coeffs,
        }
    }

    /// amp·cos(2π k·x), inserted as the exact conjugate pair. k = 0 is the
    /// constant amp (the pair ±k collapses to a single frequency there).
    pub fn cosine(dim: usize, k: &[i32], amp: f64) -> Self {
        assert_eq!(k.len(), dim);
        if k.iter().all(|v| *v == 0) {
            return Self::constant(dim, amp);
        }
        let mut coeffs = BTreeMap::new();
        let half = Complex64::new(amp / 2.0, 0.0);
        coeffs.insert(k.to_vec(), half);
        coeffs.insert(k.iter().map(|v| -v).collect(), half);
        Self::from_map(dim, coeffs)
    }

    /// amp·sin(2π k·x), inserted as the exact conjugate pair. k = 0 gives
    /// the zero polynomial (sin 0 ≡ 0).
    pub fn sine(dim: usize, k: &[i32], amp: f64) -> Self {
        assert_eq!(k.len(), dim);
        if k.iter().all(|v| *v == 0) {
            return Self::zero(dim);
        }
        let mut coeffs = BTreeMap::new();
        coeffs.insert(k.to_vec(), Complex64::new(0.0, -amp / 2.0));
        coeffs.insert(
            k.iter().map(|v| -v).collect(),
            Complex64::new(0.0, amp / 2.0),
        );
        Self::from_map(dim, coeffs)
    }

    /// Build from explicit terms; duplicate frequencies accumulate.
    pub fn from_terms(dim: usize, terms: &[(Vec<i32>, Complex64)]) -> Result<Self> {
        let mut coeffs: BTreeMap<Vec<i32>, Complex64> = BTreeMap::new();
        for (k, c) in terms {
            if k.len() != dim {
                return Err(CoreError::InvalidArgument(format!(
                    "frequency vector {:?} has length {}, expected dim {}",
                    k,
                    k.len(),
                    dim
                )));
            }
            if !c.re.is_finite() || !c.im.is_finite() {
                return Err(CoreError::InvalidArgument(
                    "non-finite coefficient".to_string(),
                ));
            }
            *coeffs.entry(k.clone()).or_insert(Complex64::new(0.0, 0.0)) += *c;
        }
        Ok(Self::from_map(dim, coeffs))
    }

    pub(crate) fn from_map(dim: usize, mut coeffs: BTreeMap<Vec<i32>, Complex64>) -> Self {
        coeffs.retain(|_, c| c.norm_sqr() >= DROP_THRESHOLD * DROP_THRESHOLD);
        let real = hermitian_exact(&coeffs);
        TrigPoly { dim, real, coeffs }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// True iff the coefficient map satisfies c_{−k} = conj(c_k) exactly.
    #[inline]
    pub fn is_real(&self) -> bool {
        self.real
    }

    pub fn coeffs(&self) -> &BTreeMap<Vec<i32>, Complex64> {
        &self.coeffs
    }

    pub fn coeff(&self, k: &[i32]) -> Complex64 {
        self.coeffs
            .get(k)
            .copied()
            .unwrap_or(Complex64::new(0.0, 0.0))
    }

    pub fn num_terms(&self) -> usize {
        self.coeffs.len()
    }

    /// Max |k|_∞ over the support (0 for the zero polynomial).
    pub fn degree(&self) -> i32 {
        self.coeffs
            .keys()
            .flat_map(|k| k.iter().map(|v| v.abs()))
            .max()
            .unwrap_or(0)
    }

    /// Mean over 𝕋ᵈ, i.e. the k = 0 coefficient.
    pub fn mean(&self) -> Complex64 {
        self.coeff(&vec![0; self.dim])
    }

    /// ℓ¹ norm of the coefficients; an upper bound for sup |f|.
    pub fn l1_norm(&self) -> f64 {
        let terms: Vec<f64> = self.coeffs.values().map(|c| c.norm()).collect();
        pairwise_sum(&terms)
    }

    /// Upper bound 2π Σ_k |k|₂ |c_k| for the Euclidean Lipschitz constant.
    pub fn lipschitz_bound(&self) -> f64 {
        let terms: Vec<f64> = self
            .coeffs
            .iter()
            .map(|(k, c)| {
                let k2 = k.iter().map(|v| (*v as f64) * (*v as f64)).sum::<f64>().sqrt();
                k2 * c.norm()
            })
            .collect();
        TWO_PI * pairwise_sum(&terms)
    }

    /// f(x) = Σ_k c_k e^{2πi k·x}.
    pub fn evaluate(&self, x: &[f64]) -> Complex64 {
        assert_eq!(x.len(), self.dim);
        let mut acc = Complex64::new(0.0, 0.0);
        for (k, c) in &self.coeffs {
            let dot: f64 = k.iter().zip(x.iter()).map(|(ki, xi)| (*ki as f64) * xi).sum();
            acc += c * Complex64::from_polar(1.0, TWO_PI * dot);
        }
        acc
    }

    /// Real part of the evaluation (exact value for real-flagged input).
    pub fn evaluate_real(&self, x: &[f64]) -> f64 {
        self.evaluate(x).re
    }

    /// Flatten the coefficient map into a contiguous evaluator for hot
    /// loops (orbit marches evaluate densities 10⁷–10⁸ times).
    pub(crate) fn compile_real(&self) -> CompiledReal {
        CompiledReal {
            dim: self.dim,
            terms: self
                .coeffs
                .iter()
                .map(|(k, c)| {
                    let kf: Vec<f64> = k.iter().map(|v| TWO_PI * (*v as f64)).collect();
                    (kf, c.re, c.im)
                })
                .collect(),
        }
    }

    pub fn add(&self, other: &TrigPoly) -> TrigPoly {
        assert_eq!(self.dim, other.dim);
        let mut coeffs = self.coeffs.clone();
        for (k, c) in &other.coeffs {
            *coeffs.entry(k.clone()).or_insert(Complex64::new(0.0, 0.0)) += *c;
        }
        Self::from_map(self.dim, coeffs)
    }

    pub fn sub(&self, other: &TrigPoly) -> TrigPoly {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, c: f64) -> TrigPoly {
        let coeffs = self
            .coeffs
            .iter()
            .map(|(k, v)| (k.clone(), v * c))
            .collect();
        Self::from_map(self.dim, coeffs)
    }

    /// Directional (Lie) derivative along the constant field v:
    /// c_k ↦ 2πi (k·v) c_k. Exactly Hermitian-preserving.
    pub fn lie_derivative(&self, v: &[f64]) -> TrigPoly {
        assert_eq!(v.len(), self.dim);
        let coeffs = self
            .coeffs
            .iter()
            .map(|(k, c)| {
                let dot: f64 = k.iter().zip(v.iter()).map(|(ki, vi)| (*ki as f64) * vi).sum();
                let mult = Complex64::new(0.0, TWO_PI * dot);
                (k.clone(), mult * c)
            })
            .collect();
        Self::from_map(self.dim, coeffs)
    }

    /// Pointwise product (coefficient convolution). Degree adds. When both
    /// factors are real the result is canonically re-symmetrised so the
    /// Hermitian pairing stays exact.
    pub fn product(&self, other: &TrigPoly) -> TrigPoly {
        assert_eq!(self.dim, other.dim);
        let mut coeffs: BTreeMap<Vec<i32>, Complex64> = BTreeMap::new();
        for (j, fj) in &self.coeffs {
            for (l, gl) in &other.coeffs {
                let k: Vec<i32> = j.iter().zip(l.iter()).map(|(a, b)| a + b).collect();
                *coeffs.entry(k).or_insert(Complex64::new(0.0, 0.0)) += fj * gl;
            }
        }
        if self.real && other.real {
            symmetrize(&mut coeffs);
        }
        Self::from_map(self.dim, coeffs)
    }

    /// Pullback by the translation x ↦ x + v: returns g with g(x) = f(x+v),
    /// i.e. c_k ↦ c_k e^{2πi k·v}.
    pub fn translate_pullback(&self, v: &[f64]) -> TrigPoly {
        assert_eq!(v.len(), self.dim);
        let mut coeffs: BTreeMap<Vec<i32>, Complex64> = self
            .coeffs
            .iter()
            .map(|(k, c)| {
                let dot: f64 = k.iter().zip(v.iter()).map(|(ki, vi)| (*ki as f64) * vi).sum();
                (k.clone(), c * Complex64::from_polar(1.0, TWO_PI * dot))
            })
            .collect();
        if self.real {
            symmetrize(&mut coeffs);
        }
        Self::from_map(self.dim, coeffs)
    }

    /// Samples on the uniform grid x_j = j/R (row-major, axis 0 slowest).
    /// Requires `resolution` a power of two with resolution ≥ 2·degree + 2,
    /// so the placement is alias-free and exact.
    pub fn sample_grid(&self, resolution: usize) -> Result<GridFunction> {
        check_resolution(resolution, self.degree())?;
        let dims = vec![resolution; self.dim];
        let total: usize = dims.iter().product();
        let mut freq = vec![Complex64::new(0.0, 0.0); total];
        for (k, c) in &self.coeffs {
            let mut idx = 0usize;
            for (ki, r) in k.iter().zip(dims.iter()) {
                let q = (ki.rem_euclid(*r as i32)) as usize;
                idx = idx * r + q;
            }
            freq[idx] += c;
        }
        ndfft(&mut freq, &dims, true);
        Ok(GridFunction {
            dim: self.dim,
            resolution,
            samples: freq,
        })
    }

    /// Unit phase e^{2πi f} for real f, truncated at per-coefficient
    /// threshold `tol`. Returns the polynomial and a residual bound
    /// (ℓ¹ mass of dropped coefficients + empirical aliasing bound), which
    /// controls the sup-norm error of the truncation.
    pub fn unit_phase(&self, tol: f64) -> Result<(TrigPoly, f64)> {
        self.require_real("unit_phase")?;
        transcend(self, tol, false, |v| Complex64::from_polar(1.0, TWO_PI * v))
    }

    /// e^{f} for real f, truncated with the same residual accounting as
    /// [`TrigPoly::unit_phase`]. Useful for building strictly positive
    /// densities whose logarithm is exactly trigonometric.
    pub fn exp_real(&self, tol: f64) -> Result<(TrigPoly, f64)> {
        self.require_real("exp_real")?;
        transcend(self, tol, true, |v| Complex64::new(v.exp(), 0.0))
    }

    /// ln f for real f with certified strictly positive infimum.
    pub fn log_positive(&self, tol: f64) -> Result<(TrigPoly, f64)> {
        self.require_real("log_positive")?;
        let resolution = default_infimum_resolution(self.dim);
        let (inf, _) = self.certified_infimum(resolution)?;
        if inf <= 0.0 {
            return Err(CoreError::DomainError(format!(
                "log_positive requires a certified positive infimum; got {inf:.6e} \
                 at resolution {resolution}"
            )));
        }
        transcend(self, tol, true, |v| Complex64::new(v.ln(), 0.0))
    }

    /// Certified lower bound for inf f over 𝕋ᵈ: the grid minimum minus the
    /// Lipschitz radius Lip(f)·√d/(2·resolution) (plus a machine-level
    /// evaluation guard). Also returns the grid argmin.
    pub fn certified_infimum(&self, resolution: usize) -> Result<(f64, Vec<f64>)> {
        self.require_real("certified_infimum")?;
        let grid = self.sample_grid(resolution)?;
        let mut min_val = f64::INFINITY;
        let mut min_idx = 0usize;
        for (i, z) in grid.samples.iter().enumerate() {
            if z.re < min_val {
                min_val = z.re;
                min_idx = i;
            }
        }
        if !min_val.is_finite() {
            return Err(CoreError::NumericFailure(
                "non-finite samples in certified_infimum".to_string(),
            ));
        }
        let lip = self.lipschitz_bound();
        let radius = (self.dim as f64).sqrt() / (2.0 * resolution as f64);
        let guard = 1e-14 * (1.0 + self.l1_norm());
        let lower = min_val - lip * radius - guard;
        Ok((lower, grid.point(min_idx)))
    }

    fn require_real(&self, op: &str) -> Result<()> {
        if !self.real {
            return Err(CoreError::InvalidArgument(format!(
                "{op} requires a real-valued (Hermitian-symmetric) polynomial"
            )));
        }
        Ok(())
    }

    /// Structured-text serialisation; bit-exact round trip via shortest
    /// round-trip float formatting.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "trigpoly v1");
        let _ = writeln!(s, "dim {}", self.dim);
        let _ = writeln!(s, "real {}", self.real);
        let _ = writeln!(s, "terms {}", self.coeffs.len());
        for (k, c) in &self.coeffs {
            let _ = write!(s, "k");
            for ki in k {
                let _ = write!(s, " {ki}");
            }
            let _ = writeln!(s, " c {} {}", c.re, c.im);
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| CoreError::ParseError("empty trigpoly text".into()))?;
        if header.trim() != "trigpoly v1" {
            return Err(CoreError::ParseError(format!(
                "unexpected header {header:?}"
            )));
        }
        let dim: usize = parse_kv(lines.next(), "dim")?;
        let real: bool = parse_kv(lines.next(), "real")?;
        let terms: usize = parse_kv(lines.next(), "terms")?;
        let mut coeffs = BTreeMap::new();
        for _ in 0..terms {
            let line = lines
                .next()
                .ok_or_else(|| CoreError::ParseError("missing term line".into()))?;
            let tokens: Vec<&str> = line.split_whitespace().collect();
            if tokens.len() != dim + 4 || tokens[0] != "k" || tokens[dim + 1] != "c" {
                return Err(CoreError::ParseError(format!("bad term line {line:?}")));
            }
            let mut k = Vec::with_capacity(dim);
            for t in &tokens[1..=dim] {
                k.push(
                    t.parse::<i32>()
                        .map_err(|e| CoreError::ParseError(format!("bad frequency {t:?}: {e}")))?,
                );
            }
            let re: f64 = tokens[dim + 2]
                .parse()
                .map_err(|e| CoreError::ParseError(format!("bad re: {e}")))?;
            let im: f64 = tokens[dim + 3]
                .parse()
                .map_err(|e| CoreError::ParseError(format!("bad im: {e}")))?;
            if !re.is_finite() || !im.is_finite() {
                return Err(CoreError::ParseError("non-finite coefficient".into()));
            }
            if coeffs.insert(k, Complex64::new(re, im)).is_some() {
                return Err(CoreError::ParseError("duplicate frequency".into()));
            }
        }
        if lines.any(|l| !l.trim().is_empty()) {
            return Err(CoreError::ParseError("trailing content".into()));
        }
        let poly = Self::from_map(dim, coeffs);
        if poly.real != real {
            return Err(CoreError::ParseError(format!(
                "declared real flag {real} contradicts the exact Hermitian check ({})",
                poly.real
            )));
        }
        Ok(poly)
    }
}

fn parse_kv<T: std::str::FromStr>(line: Option<&str>, key: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    let line = line.ok_or_else(|| CoreError::ParseError(format!("missing {key} line")))?;
    let mut it = line.split_whitespace();
    match (it.next(), it.next(), it.next()) {
        (Some(k), Some(v), None) if k == key => v
            .parse::<T>()
            .map_err(|e| CoreError::ParseError(format!("bad {key} value {v:?}: {e}"))),
        _ => Err(CoreError::ParseError(format!(
            "expected `{key} <value>`, got {line:?}"
        ))),
    }
}

/// Exact Hermitian symmetry check: c_{−k} = conj(c_k) for every key.
fn hermitian_exact(coeffs: &BTreeMap<Vec<i32>, Complex64>) -> bool {
    for (k, c) in coeffs {
        let neg: Vec<i32> = k.iter().map(|v| -v).collect();
        match coeffs.get(&neg) {
            Some(c2) => {
                if !(c2.re == c.re && c2.im == -c.im) {
                    return false;
                }
            }
            None => return false,
        }
    }
    true
}

/// Canonical re-symmetrisation: for each lexicographically positive key the
/// mirror coefficient is overwritten with the exact conjugate; the zero
/// frequency gets an exactly zero imaginary part. Used after operations on
/// real polynomials whose floating-point accumulation order would otherwise
/// break bit-exact symmetry.
fn symmetrize(coeffs: &mut BTreeMap<Vec<i32>, Complex64>) {
    let keys: Vec<Vec<i32>> = coeffs.keys().cloned().collect();
    for k in keys {
        use std::cmp::Ordering;
        let neg: Vec<i32> = k.iter().map(|v| -v).collect();
        match k.cmp(&neg) {
            Ordering::Greater => {
                let c = *coeffs.get(&k).unwrap();
                coeffs.insert(neg, c.conj());
            }
            Ordering::Equal => {
                let c = coeffs.get_mut(&k).unwrap();
                c.im = 0.0;
            }
            Ordering::Less => {}
        }
    }
}

fn check_resolution(resolution: usize, degree: i32) -> Result<()> {
    if !resolution.is_power_of_two() {
        return Err(CoreError::InvalidArgument(format!(
            "grid resolution {resolution} must be a power of two"
        )));
    }
    let needed = 2 * degree as usize + 2;
    if resolution < needed {
        return Err(CoreError::InvalidArgument(format!(
            "grid resolution {resolution} too small for degree {degree}; need ≥ {needed}"
        )));
    }
    Ok(())
}

pub(crate) fn default_infimum_resolution(dim: usize) -> usize {
    match dim {
        0 | 1 => 1 << 12,
        2 => 1 << 9,
        _ => 1 << 7,
    }
}

fn max_transcend_resolution(dim: usize) -> usize {
    match dim {
        0 | 1 => 1 << 20,
        2 => 1 << 10,
        _ => 1 << 7,
    }
}

/// Shared scheme for unit_phase / exp_real / log_positive: sample `map`
/// applied to f on a grid, FFT to coefficients truncated at `tol` (dropped
/// mass accounted), and monitor aliasing by comparing the kept coefficients
/// against the doubled resolution. Doubling stops when the movement reaches
/// either tol/10 or the irreducible FFT noise floor of the compared
/// coefficients — in both cases the measured movement is folded into the
/// returned residual bound, so the bound stays honest.
fn transcend(
    f: &TrigPoly,
    tol: f64,
    real_output: bool,
    map: impl Fn(f64) -> Complex64 + Copy,
) -> Result<(TrigPoly, f64)> {
    if !(tol > 0.0) {
        return Err(CoreError::InvalidArgument(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let dim = f.dim();
    let r_max = max_transcend_resolution(dim);
    let mut r = (8 * (f.degree().max(1) as usize))
        .next_power_of_two()
        .max(32)
        .min(r_max);
    let (mut coarse, _, _) = transcend_coeffs(f, r, tol, map)?;
    loop {
        if r * 2 > r_max {
            return Err(CoreError::NumericFailure(format!(
                "transcendental truncation did not reach tol {tol:.3e} within \
                 the resolution cap {r_max} (dim {dim}); the input may be too \
                 rough for a trigonometric truncation at this tolerance"
            )));
        }
        let (fine, fine_dropped, scale) = transcend_coeffs(f, r * 2, tol, map)?;
        // Empirical aliasing bound: movement of the kept coefficients under
        // doubling, plus kept mass representable on only one of the grids.
        let mut alias = 0.0;
        for (k, c) in &fine {
            let prev = coarse.get(k).copied().unwrap_or(Complex64::new(0.0, 0.0));
            alias += (c - prev).norm();
        }
        for (k, c) in &coarse {
            if !fine.contains_key(k) {
                alias += c.norm();
            }
        }
        // Per-coefficient FFT roundoff (~machine epsilon times the sample
        // scale) summed over the compared set: below this the estimate is
        // measuring noise, and further refinement cannot reduce it.
        let noise_floor = 4e-16 * scale * (fine.len() + coarse.len() + 1) as f64;
        if alias <= (tol / 10.0).max(noise_floor) {
            let mut fine = fine;
            if real_output {
                // The mapped samples are real, so the exact result is
                // Hermitian; restore the symmetry the FFT roundoff broke.
                symmetrize(&mut fine);
            }
            let poly = TrigPoly::from_map(dim, fine);
            return Ok((poly, fine_dropped + alias));
        }
        coarse = fine;
        r *= 2;
    }
}

/// FFT coefficients of map∘f at `resolution`, truncated at `tol`.
/// Returns (kept coefficients, ℓ¹ mass of dropped ones, max |sample|).
fn transcend_coeffs(
    f: &TrigPoly,
    resolution: usize,
    tol: f64,
    map: impl Fn(f64) -> Complex64,
) -> Result<(BTreeMap<Vec<i32>, Complex64>, f64, f64)> {
    let grid = f.sample_grid(resolution)?;
    let mapped: Vec<Complex64> = grid.samples.iter().map(|z| map(z.re)).collect();
    let g = GridFunction {
        dim: f.dim(),
        resolution,
        samples: mapped,
    };
    let scale = g.max_abs();
    if !scale.is_finite() {
        return Err(CoreError::NumericFailure(
            "non-finite samples while mapping a trigonometric polynomial".to_string(),
        ));
    }
    let mut kept = BTreeMap::new();
    let mut dropped = 0.0;
    for (k, c) in g.to_coeffs() {
        if c.norm() < tol {
            dropped += c.norm();
        } else {
            kept.insert(k, c);
        }
    }
    Ok((kept, dropped, scale))
}

/// Contiguous-storage evaluator of Re Σ c_k e^{2πik·x}: identical values to
/// `TrigPoly::evaluate_real` up to the reassociated term order, a few times
/// faster in tight loops.
#[derive(Debug, Clone)]
pub(crate) struct CompiledReal {
    dim: usize,
    /// (2πk as floats, Re c, Im c) per stored coefficient.
    terms: Vec<(Vec<f64>, f64, f64)>,
}

impl CompiledReal {
    #[inline]
    pub(crate) fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        let mut acc = 0.0;
        for (kf, re, im) in &self.terms {
            let mut theta = 0.0;
            for (k, xi) in kf.iter().zip(x.iter()) {
                theta = k.mul_add(*xi, theta);
            }
            let (s, c) = theta.sin_cos();
            // Re[(re + i·im)(cosθ + i·sinθ)]
            acc += re * c - im * s;
        }
        acc
    }
}

/// Complex samples on the uniform grid {j/R}ᵈ, row-major with axis 0
/// slowest. The resolution is a power of two, identical along every axis.
#[derive(Debug, Clone)]
pub struct GridFunction {
    dim: usize,
    resolution: usize,
    samples: Vec<Complex64>,
}

impl GridFunction {
    pub fn from_samples(dim: usize, resolution: usize, samples: Vec<Complex64>) -> Result<Self> {
        if !resolution.is_power_of_two() {
            return Err(CoreError::InvalidArgument(format!(
                "grid resolution {resolution} must be a power of two"
            )));
        }
        let expected = resolution.pow(dim as u32);
        if samples.len() != expected {
            return Err(CoreError::InvalidArgument(format!(
                "expected {expected} samples for resolution {resolution}^{dim}, got {}",
                samples.len()
            )));
        }
        Ok(GridFunction {
            dim,
            resolution,
            samples,
        })
    }

    pub fn from_real_fn(
        dim: usize,
        resolution: usize,
        mut f: impl FnMut(&[f64]) -> f64,
    ) -> Result<Self> {
        if !resolution.is_power_of_two() {
            return Err(CoreError::InvalidArgument(format!(
                "grid resolution {resolution} must be a power of two"
            )));
        }
        let total = resolution.pow(dim as u32);
        let mut samples = Vec::with_capacity(total);
        let mut x = vec![0.0; dim];
        for idx in 0..total {
            grid_point(dim, resolution, idx, &mut x);
            samples.push(Complex64::new(f(&x), 0.0));
        }
        Ok(GridFunction {
            dim,
            resolution,
            samples,
        })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [Complex64] {
        &mut self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Grid coordinates of flat index `idx`.
    pub fn point(&self, idx: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.dim];
        grid_point(self.dim, self.resolution, idx, &mut x);
        x
    }

    pub fn mean(&self) -> Complex64 {
        let re: Vec<f64> = self.samples.iter().map(|z| z.re).collect();
        let im: Vec<f64> = self.samples.iter().map(|z| z.im).collect();
        let n = self.samples.len() as f64;
        Complex64::new(pairwise_sum(&re) / n, pairwise_sum(&im) / n)
    }

    pub fn max_abs(&self) -> f64 {
        self.samples.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &GridFunction) -> f64 {
        assert_eq!(self.samples.len(), other.samples.len());
        self.samples
            .iter()
            .zip(other.samples.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Full forward FFT to centred Fourier coefficients (q > R/2 ↦ q − R).
    pub fn to_coeffs(&self) -> BTreeMap<Vec<i32>, Complex64> {
        let r = self.resolution;
        let dims = vec![r; self.dim];
        let mut data = self.samples.clone();
        ndfft(&mut data, &dims, false);
        let scale = 1.0 / data.len() as f64;
        let mut out = BTreeMap::new();
        for (idx, z) in data.iter().enumerate() {
            let zc = z * scale;
            if zc.norm_sqr() < DROP_THRESHOLD * DROP_THRESHOLD {
                continue;
            }
            let mut rem = idx;
            let mut k = vec![0i32; self.dim];
            for a in (0..self.dim).rev() {
                let q = rem % r;
                rem /= r;
                k[a] = if q <= r / 2 { q as i32 } else { q as i32 - r as i32 };
            }
            out.insert(k, zc);
        }
        out
    }

    /// Spectral partial derivative along `axis` (multiplication by 2πi·k on
    /// the full FFT grid; the Nyquist line is zeroed for symmetry).
    pub fn spectral_derivative(&self, axis: usize) -> GridFunction {
        assert!(axis < self.dim);
        let r = self.resolution;
        let dims = vec![r; self.dim];
        let mut data = self.samples.clone();
        ndfft(&mut data, &dims, false);
        let scale = 1.0 / data.len() as f64;
        for (idx, z) in data.iter_mut().enumerate() {
            let mut rem = idx;
            let mut q_axis = 0usize;
            for a in (0..self.dim).rev() {
                let q = rem % r;
                rem /= r;
                if a == axis {
                    q_axis = q;
                }
            }
            let k = if q_axis < r / 2 {
                q_axis as i64
            } else if q_axis == r / 2 {
                0
            } else {
                q_axis as i64 - r as i64
            };
            *z *= Complex64::new(0.0, TWO_PI * k as f64) * scale;
        }
        ndfft(&mut data, &dims, true);
        GridFunction {
            dim: self.dim,
            resolution: r,
            samples: data,
        }
    }
}

#[inline]
pub(crate) fn grid_point(dim: usize, resolution: usize, idx: usize, out: &mut [f64]) {
    let mut rem = idx;
    for a in (0..dim).rev() {
        let q = rem % resolution;
        rem /= resolution;
        out[a] = q as f64 / resolution as f64;
    }
}

/// In-place n-dimensional FFT on a hyper-cubic row-major array.
/// `inverse = true` applies the unnormalised inverse transform e^{+2πi…}.
pub(crate) fn ndfft(data: &mut [Complex64], dims: &[usize], inverse: bool) {
    let mut planner = FftPlanner::new();
    let total: usize = dims.iter().product();
    assert_eq!(data.len(), total);
    let d = dims.len();
    for axis in 0..d {
        let len = dims[axis];
        if len <= 1 {
            continue;
        }
        let fft = if inverse {
            planner.plan_fft_inverse(len)
        } else {
            planner.plan_fft_forward(len)
        };
        // stride between consecutive elements along `axis`
        let stride: usize = dims[axis + 1..].iter().product();
        let block = stride * len;
        let mut scratch = vec![Complex64::new(0.0, 0.0); len];
        for base in (0..total).step_by(block) {
            for off in 0..stride {
                let start = base + off;
                for (i, s) in scratch.iter_mut().enumerate() {
                    *s = data[start + i * stride];
                }
                fft.process(&mut scratch);
                for (i, s) in scratch.iter().enumerate() {
                    data[start + i * stride] = *s;
                }
            }
        }
    }
}
