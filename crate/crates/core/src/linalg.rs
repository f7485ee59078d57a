//! Small dense complex linear algebra used by the operator calculus.
//!
//! Matrices here are square, row-major `Complex64` buffers. Two things keep
//! this fast enough single-threaded at desk scale:
//!
//! * products honour declared index bands (operators on frequency windows
//!   are banded, so O(dim·band²) instead of O(dim³)),
//! * the eigensolver is a cyclic Jacobi iteration for Hermitian matrices,
//!   which is deterministic and accurate for the small dimensions we need
//!   (bridge checks, quadratic-form diagnostics).

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Dense square complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix {
    n: usize,
    data: Vec<Complex64>,
}

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

impl CMatrix {
    pub fn zeros(n: usize) -> Self {
        CMatrix {
            n,
            data: vec![ZERO; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = ONE;
        }
        m
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m.data[i * n + j] = f(i, j);
            }
        }
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: Complex64) {
        self.data[i * self.n + j] = v;
    }

    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn adjoint(&self) -> CMatrix {
        let n = self.n;
        CMatrix::from_fn(n, |i, j| self.data[j * n + i].conj())
    }

    pub fn add(&self, other: &CMatrix) -> CMatrix {
        assert_eq!(self.n, other.n);
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(other.data.iter()) {
            *a += *b;
        }
        out
    }

    pub fn sub(&self, other: &CMatrix) -> CMatrix {
        assert_eq!(self.n, other.n);
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(other.data.iter()) {
            *a -= *b;
        }
        out
    }

    pub fn scale(&self, c: Complex64) -> CMatrix {
        let mut out = self.clone();
        for a in out.data.iter_mut() {
            *a *= c;
        }
        out
    }

    /// Full dense product.
    pub fn matmul(&self, other: &CMatrix) -> CMatrix {
        self.matmul_banded(other, None, None)
    }

    /// Product exploiting declared index bands: entries of `self` vanish for
    /// |i−k| > band_a and of `other` for |k−j| > band_b (`None` = full).
    /// The result is exact (skipped entries are exactly zero by contract).
    pub fn matmul_banded(
        &self,
        other: &CMatrix,
        band_a: Option<usize>,
        band_b: Option<usize>,
    ) -> CMatrix {
        assert_eq!(self.n, other.n);
        let n = self.n;
        let ba = band_a.unwrap_or(n);
        let bb = band_b.unwrap_or(n);
        let mut out = CMatrix::zeros(n);
        // i-k-j order: the inner j loop runs over contiguous rows of
        // `other` and `out`, which auto-vectorises well.
        for i in 0..n {
            let klo = i.saturating_sub(ba);
            let khi = (i + ba).min(n - 1);
            for k in klo..=khi {
                let a_ik = self.data[i * n + k];
                if a_ik == ZERO {
                    continue;
                }
                let jlo = k.saturating_sub(bb);
                let jhi = (k + bb).min(n - 1);
                let brow = &other.data[k * n + jlo..k * n + jhi + 1];
                let orow = &mut out.data[i * n + jlo..i * n + jhi + 1];
                for (o, b) in orow.iter_mut().zip(brow.iter()) {
                    *o += a_ik * *b;
                }
            }
        }
        out
    }

    /// Matrix–vector product honouring a declared index band.
    pub fn matvec_banded(&self, v: &[Complex64], band: Option<usize>) -> Vec<Complex64> {
        assert_eq!(self.n, v.len());
        let n = self.n;
        let b = band.unwrap_or(n);
        let mut out = vec![ZERO; n];
        for i in 0..n {
            let jlo = i.saturating_sub(b);
            let jhi = (i + b).min(n - 1);
            let row = &self.data[i * n + jlo..i * n + jhi + 1];
            let mut acc = ZERO;
            for (a, x) in row.iter().zip(v[jlo..=jhi].iter()) {
                acc += *a * *x;
            }
            out[i] = acc;
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest singular value estimated by `iters` power iterations on A†A
    /// from a seeded start vector. Deterministic for fixed seed.
    pub fn op_norm_estimate(&self, iters: usize, seed: u64) -> f64 {
        let n = self.n;
        if n == 0 {
            return 0.0;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = random_unit_vector(n, &mut rng);
        let adj = self.adjoint();
        let mut sigma = 0.0;
        for _ in 0..iters {
            let av = self.matvec_banded(&v, None);
            let w = adj.matvec_banded(&av, None);
            let norm_w = vec_norm(&w);
            sigma = vec_norm(&av);
            if norm_w == 0.0 {
                return 0.0;
            }
            let inv = 1.0 / norm_w;
            v = w.into_iter().map(|z| z * inv).collect();
        }
        sigma
    }
}

pub fn vec_norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn vec_inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    // Conjugate-linear in the first argument.
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * *y).sum()
}

/// Uniformly seeded complex vector of unit Euclidean norm.
pub fn random_unit_vector(n: usize, rng: &mut ChaCha8Rng) -> Vec<Complex64> {
    let mut v: Vec<Complex64> = (0..n)
        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    let norm = vec_norm(&v);
    if norm > 0.0 {
        for z in v.iter_mut() {
            *z /= norm;
        }
    } else {
        v[0] = ONE;
    }
    v
}

/// Eigendecomposition of a Hermitian matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in ascending order with the matching eigenvector
/// columns in `vectors`, so `a = V · diag(λ) · V†` up to roundoff.
pub fn eigh(a: &CMatrix) -> (Vec<f64>, CMatrix) {
    let n = a.dim();
    let mut m = a.clone();
    let mut v = CMatrix::identity(n);
    if n == 0 {
        return (Vec::new(), v);
    }
    let scale = a.frobenius_norm().max(1e-300);
    let tol = 1e-15 * scale;
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += m.at(p, q).norm_sqr();
            }
        }
        if off.sqrt() <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m.at(p, q);
                let abs_apq = apq.norm();
                if abs_apq <= tol / (n as f64) {
                    continue;
                }
                let app = m.at(p, p).re;
                let aqq = m.at(q, q).re;
                // Phase so that e^{-iφ}·a_pq is real positive, then a real
                // Jacobi rotation on the 2×2 block [[app, |apq|], [|apq|, aqq]].
                let phase = apq / abs_apq;
                let tau = (aqq - app) / (2.0 * abs_apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // Columns: col_p ← c·col_p − s·conj(phase)... apply G on the
                // right with G[p][p]=c, G[q][p]=−s·phase⁻¹, G[p][q]=s·phase,
                // G[q][q]=c, where phase⁻¹ = conj(phase).
                let sp = phase * s; // s·e^{iφ}
                for i in 0..n {
                    let mip = m.at(i, p);
                    let miq = m.at(i, q);
                    m.set(i, p, mip * c - miq * sp.conj());
                    m.set(i, q, mip * sp + miq * c);
                }
                for j in 0..n {
                    let mpj = m.at(p, j);
                    let mqj = m.at(q, j);
                    m.set(p, j, mpj * c - mqj * sp);
                    m.set(q, j, mpj * sp.conj() + mqj * c);
                }
                for i in 0..n {
                    let vip = v.at(i, p);
                    let viq = v.at(i, q);
                    v.set(i, p, vip * c - viq * sp.conj());
                    v.set(i, q, vip * sp + viq * c);
                }
            }
        }
    }
    let mut pairs: Vec<(f64, usize)> = (0..n).map(|i| (m.at(i, i).re, i)).collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let eigenvalues: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let vectors = CMatrix::from_fn(n, |i, j| v.at(i, pairs[j].1));
    (eigenvalues, vectors)
}

/// exp(i·t·H) for Hermitian `h`, via the Jacobi eigendecomposition.
pub fn herm_exp_i(h: &CMatrix, t: f64) -> CMatrix {
    let (vals, vecs) = eigh(h);
    let n = h.dim();
    let vadj = vecs.adjoint();
    let mut d = CMatrix::zeros(n);
    for (i, lam) in vals.iter().enumerate() {
        d.set(i, i, Complex64::from_polar(1.0, t * lam));
    }
    vecs.matmul(&d).matmul(&vadj)
}
