//! Velocity fields in collocation and coefficient form.
//!
//! Three representations:
//! * [`PhysicalField`] — real 2-vector samples on the N×N grid;
//! * [`RawCoeffs`] — full DFT coefficients straight out of a transform, no
//!   constraints enforced;
//! * [`SpectralField`] — coefficients supported on the retained (dealiased)
//!   mode set, mean-free, Hermitian-symmetric and divergence-free. Every
//!   operator in [`crate::ops`] produces and consumes this form.
//!
//! Coefficients are Fourier coefficients of the trigonometric interpolant
//! (`forward2` carries the 1/N² factor), so Parseval reads
//! `∫|u|² dx = (2π)² Σ_k |û(k)|²` and coefficients are grid-size independent.

use crate::error::Error;
use crate::fft;
use crate::grid::{odd_integer, GridSpec, DOMAIN_PERIOD};
use crate::Result;
use num_complex::Complex64;

/// Real 2-vector samples on the uniform N×N grid, row-major, x fastest.
#[derive(Debug, Clone)]
pub struct PhysicalField {
    grid: GridSpec,
    pub vx: Vec<f64>,
    pub vy: Vec<f64>,
}

impl PhysicalField {
    pub fn zero(grid: GridSpec) -> Self {
        let n2 = grid.n() * grid.n();
        PhysicalField {
            grid,
            vx: vec![0.0; n2],
            vy: vec![0.0; n2],
        }
    }

    /// Sample an analytic field at the grid points.
    pub fn from_fn(grid: GridSpec, mut f: impl FnMut(f64, f64) -> (f64, f64)) -> Self {
        let n = grid.n();
        let h = DOMAIN_PERIOD / n as f64;
        let mut vx = Vec::with_capacity(n * n);
        let mut vy = Vec::with_capacity(n * n);
        for iy in 0..n {
            for ix in 0..n {
                let (a, b) = f(ix as f64 * h, iy as f64 * h);
                vx.push(a);
                vy.push(b);
            }
        }
        PhysicalField { grid, vx, vy }
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }
}

/// Unconstrained DFT coefficients of a 2-vector field.
#[derive(Debug, Clone)]
pub struct RawCoeffs {
    grid: GridSpec,
    pub cx: Vec<Complex64>,
    pub cy: Vec<Complex64>,
}

impl RawCoeffs {
    pub fn zero(grid: GridSpec) -> Self {
        let n2 = grid.n() * grid.n();
        RawCoeffs {
            grid,
            cx: vec![Complex64::default(); n2],
            cy: vec![Complex64::default(); n2],
        }
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    /// Coefficient at wavevector `(kx, ky)`.
    pub fn coeff(&self, kx: i32, ky: i32) -> (Complex64, Complex64) {
        let i = self.grid.index_of(kx, ky);
        (self.cx[i], self.cy[i])
    }

    pub fn set_coeff(&mut self, kx: i32, ky: i32, cx: Complex64, cy: Complex64) {
        let i = self.grid.index_of(kx, ky);
        self.cx[i] = cx;
        self.cy[i] = cy;
    }
}

/// Divergence-free, mean-free field as truncated Fourier coefficients.
///
/// Construct via [`crate::ops::leray_project`] or the helpers here; the
/// invariants (retained support, `û(−k) = conj û(k)`, `k·û(k) = 0`,
/// `û(0) = 0`) are established there and preserved by all operators.
#[derive(Debug, Clone)]
pub struct SpectralField {
    grid: GridSpec,
    pub(crate) cx: Vec<Complex64>,
    pub(crate) cy: Vec<Complex64>,
}

impl SpectralField {
    pub fn zero(grid: GridSpec) -> Self {
        let n2 = grid.n() * grid.n();
        SpectralField {
            grid,
            cx: vec![Complex64::default(); n2],
            cy: vec![Complex64::default(); n2],
        }
    }

    pub(crate) fn from_parts(grid: GridSpec, cx: Vec<Complex64>, cy: Vec<Complex64>) -> Self {
        SpectralField { grid, cx, cy }
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn coeff(&self, kx: i32, ky: i32) -> (Complex64, Complex64) {
        let i = self.grid.index_of(kx, ky);
        (self.cx[i], self.cy[i])
    }

    pub fn is_zero(&self) -> bool {
        self.cx.iter().chain(self.cy.iter()).all(|c| c.norm_sqr() == 0.0)
    }

    /// Largest `|k·û(k)|` over retained modes; zero for projected fields.
    pub fn max_divergence(&self) -> f64 {
        let g = self.grid;
        let mut worst: f64 = 0.0;
        for (kx, ky) in g.retained_modes() {
            let (cx, cy) = self.coeff(kx, ky);
            let div = (cx * kx as f64 + cy * ky as f64).norm();
            worst = worst.max(div);
        }
        worst
    }

    /// Largest `|û(−k) − conj û(k)|` over retained modes.
    pub fn max_hermitian_defect(&self) -> f64 {
        let g = self.grid;
        let mut worst: f64 = 0.0;
        for (kx, ky) in g.retained_modes() {
            let (ax, ay) = self.coeff(kx, ky);
            let (bx, by) = self.coeff(-kx, -ky);
            worst = worst.max((bx - ax.conj()).norm()).max((by - ay.conj()).norm());
        }
        worst
    }
}

// ---------------------------------------------------------------------------
// arithmetic used by the integrators and operators
// ---------------------------------------------------------------------------

impl SpectralField {
    pub fn scaled(&self, s: f64) -> SpectralField {
        let mut out = self.clone();
        for c in out.cx.iter_mut().chain(out.cy.iter_mut()) {
            *c *= s;
        }
        out
    }

    pub fn axpy(&mut self, s: f64, other: &SpectralField) {
        debug_assert_eq!(self.grid, other.grid);
        for (a, b) in self.cx.iter_mut().zip(other.cx.iter()) {
            *a += s * b;
        }
        for (a, b) in self.cy.iter_mut().zip(other.cy.iter()) {
            *a += s * b;
        }
    }

    pub fn add(&self, other: &SpectralField) -> SpectralField {
        let mut out = self.clone();
        out.axpy(1.0, other);
        out
    }

    pub fn sub(&self, other: &SpectralField) -> SpectralField {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }
}

/// Checks two fields share a grid.
pub fn same_grid(a: GridSpec, b: GridSpec) -> Result<()> {
    if a != b {
        Err(Error::GridMismatch(a.n(), b.n()))
    } else {
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// transforms
// ---------------------------------------------------------------------------

// Both velocity components are real, so one complex transform carries the
// pair: synthesis of `ĉx + i·ĉy` lands `vx` in the real part and `vy` in the
// imaginary part, and the forward direction is undone by the Hermitian split
//   ĉx(k) = (ĥ(k) + conj ĥ(−k))/2,   ĉy(k) = (ĥ(k) − conj ĥ(−k))/(2i).

const I: Complex64 = Complex64::new(0.0, 1.0);

#[inline]
fn neg_bucket(i: usize, n: usize) -> usize {
    (n - i) % n
}

/// Forward DFT of a sampled field. No projection or truncation: the
/// round trip `to_physical(to_spectral(f))` reproduces `f` exactly
/// (to rounding) for arbitrary grid data.
pub fn to_spectral(f: &PhysicalField) -> RawCoeffs {
    let n = f.grid.n();
    let mut h: Vec<Complex64> = f
        .vx
        .iter()
        .zip(f.vy.iter())
        .map(|(&a, &b)| Complex64::new(a, b))
        .collect();
    fft::forward2(&mut h, n);
    let mut cx = vec![Complex64::default(); n * n];
    let mut cy = vec![Complex64::default(); n * n];
    for iy in 0..n {
        let jy = neg_bucket(iy, n);
        for ix in 0..n {
            let jx = neg_bucket(ix, n);
            let a = h[iy * n + ix];
            let b = h[jy * n + jx].conj();
            cx[iy * n + ix] = 0.5 * (a + b);
            cy[iy * n + ix] = Complex64::new(0.0, -0.5) * (a - b);
        }
    }
    RawCoeffs {
        grid: f.grid,
        cx,
        cy,
    }
}

fn synth(grid: GridSpec, cx: &[Complex64], cy: &[Complex64]) -> PhysicalField {
    let n = grid.n();
    let mut h: Vec<Complex64> = cx.iter().zip(cy.iter()).map(|(a, b)| a + I * b).collect();
    fft::inverse2(&mut h, n);
    PhysicalField {
        grid,
        vx: h.iter().map(|c| c.re).collect(),
        vy: h.iter().map(|c| c.im).collect(),
    }
}

/// Inverse DFT of raw coefficients.
pub fn raw_to_physical(c: &RawCoeffs) -> PhysicalField {
    synth(c.grid, &c.cx, &c.cy)
}

/// Inverse DFT of a spectral field.
pub fn to_physical(u: &SpectralField) -> PhysicalField {
    synth(u.grid, &u.cx, &u.cy)
}

/// Samples of `u` on the finer `m×m` grid (`m ≥ N`). Coefficients are
/// grid-size independent, so this evaluates the same trigonometric
/// polynomial exactly; used to form high-degree products alias-free.
pub(crate) fn synthesize_on(u: &SpectralField, m: usize) -> (Vec<f64>, Vec<f64>) {
    let n = u.grid.n();
    debug_assert!(m >= n);
    let mut h = vec![Complex64::default(); m * m];
    let half = n as i32 / 2;
    for ky in -half..=half {
        for kx in -half..=half {
            if !u.grid.is_retained(kx, ky) {
                continue;
            }
            let (cx, cy) = u.coeff(kx, ky);
            let ix = ((kx + m as i32) % m as i32) as usize;
            let iy = ((ky + m as i32) % m as i32) as usize;
            h[iy * m + ix] = cx + I * cy;
        }
    }
    fft::inverse2(&mut h, m);
    (
        h.iter().map(|c| c.re).collect(),
        h.iter().map(|c| c.im).collect(),
    )
}

/// Forward transform of an `m×m` real sample pair, keeping only the retained
/// modes of `grid`. Inverse of [`synthesize_on`] composed with truncation.
pub(crate) fn analyze_from(grid: GridSpec, vx: &[f64], vy: &[f64], m: usize) -> RawCoeffs {
    let mut h: Vec<Complex64> = vx
        .iter()
        .zip(vy.iter())
        .map(|(&a, &b)| Complex64::new(a, b))
        .collect();
    fft::forward2(&mut h, m);
    let mut out = RawCoeffs::zero(grid);
    for (kx, ky) in grid.retained_modes() {
        let ix = ((kx + m as i32) % m as i32) as usize;
        let iy = ((ky + m as i32) % m as i32) as usize;
        let jx = neg_bucket(ix, m);
        let jy = neg_bucket(iy, m);
        let a = h[iy * m + ix];
        let b = h[jy * m + jx].conj();
        out.set_coeff(
            kx,
            ky,
            0.5 * (a + b),
            Complex64::new(0.0, -0.5) * (a - b),
        );
    }
    out
}

// ---------------------------------------------------------------------------
// inner products and norms
// ---------------------------------------------------------------------------

/// L² (H) inner product by Parseval.
pub fn inner_h(a: &SpectralField, b: &SpectralField) -> f64 {
    debug_assert_eq!(a.grid, b.grid);
    let mut acc = 0.0;
    for (x, y) in a.cx.iter().zip(b.cx.iter()) {
        acc += x.re * y.re + x.im * y.im;
    }
    for (x, y) in a.cy.iter().zip(b.cy.iter()) {
        acc += x.re * y.re + x.im * y.im;
    }
    DOMAIN_PERIOD * DOMAIN_PERIOD * acc
}

pub fn norm_h_sq(u: &SpectralField) -> f64 {
    inner_h(u, u)
}

pub fn norm_h(u: &SpectralField) -> f64 {
    norm_h_sq(u).sqrt()
}

/// Gradient seminorm `Σ |k|² |û(k)|²` by Parseval. On the mean-free retained
/// set this is the V norm (the H¹₀ analogue on the torus).
pub fn norm_v_sq(u: &SpectralField) -> f64 {
    let g = u.grid;
    let n = g.n();
    let mut acc = 0.0;
    for iy in 0..n {
        let ky = g.wavenumber(iy) as f64;
        for ix in 0..n {
            let kx = g.wavenumber(ix) as f64;
            let k2 = kx * kx + ky * ky;
            let i = iy * n + ix;
            acc += k2 * (u.cx[i].norm_sqr() + u.cy[i].norm_sqr());
        }
    }
    DOMAIN_PERIOD * DOMAIN_PERIOD * acc
}

pub fn norm_v(u: &SpectralField) -> f64 {
    norm_v_sq(u).sqrt()
}

/// Evaluation grid for pointwise degree-`r` expressions: zero-padding by
/// `⌈(r+1)/2⌉` makes products of odd integer degree alias-free; other
/// exponents are evaluated on the native grid (aliasing documented).
pub(crate) fn eval_grid_size(n: usize, r: f64) -> usize {
    match odd_integer(r) {
        Some(ri) if ri > 1 => n * ((ri as usize + 1).div_ceil(2)),
        _ => n,
    }
}

/// `‖u‖_{L^p}^p = Σ_x |u(x)|^p · cell_area`, quadratured on the evaluation
/// grid for exponent `p = r + 1`.
pub fn norm_lp_pow(u: &SpectralField, r: f64) -> f64 {
    let n = u.grid.n();
    let m = eval_grid_size(n, r);
    let (vx, vy) = synthesize_on(u, m);
    let p = r + 1.0;
    let area = (DOMAIN_PERIOD / m as f64).powi(2);
    let mut acc = 0.0;
    for (a, b) in vx.iter().zip(vy.iter()) {
        acc += (a * a + b * b).powf(p / 2.0);
    }
    acc * area
}

/// The three norms used throughout: `(‖u‖_H, ‖u‖_V, ‖u‖_{L^{r+1}})`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Norms {
    pub h: f64,
    pub v: f64,
    pub lp: f64,
}

pub fn norms(u: &SpectralField, r: f64) -> Norms {
    Norms {
        h: norm_h(u),
        v: norm_v(u),
        lp: norm_lp_pow(u, r).powf(1.0 / (r + 1.0)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sin_y_field(n: usize) -> (GridSpec, PhysicalField) {
        let g = GridSpec::new(n).unwrap();
        (g, PhysicalField::from_fn(g, |_, y| (y.sin(), 0.0)))
    }

    #[test]
    fn constant_field_is_pure_mean_mode() {
        let g = GridSpec::new(8).unwrap();
        let f = PhysicalField::from_fn(g, |_, _| (1.5, -2.0));
        let c = to_spectral(&f);
        let (cx, cy) = c.coeff(0, 0);
        assert_relative_eq!(cx.re, 1.5, max_relative = 1e-12);
        assert_relative_eq!(cy.re, -2.0, max_relative = 1e-12);
        for (kx, ky) in g.retained_modes() {
            if (kx, ky) != (0, 0) {
                let (a, b) = c.coeff(kx, ky);
                assert!(a.norm() < 1e-13 && b.norm() < 1e-13);
            }
        }
    }

    #[test]
    fn sin_y_is_single_conjugate_pair() {
        // hand DFT: sin y = (e^{iy} - e^{-iy})/2i, so û_x(0,±1) = ∓i/2
        let (_, f) = sin_y_field(16);
        let c = to_spectral(&f);
        let (cx_p, cy_p) = c.coeff(0, 1);
        let (cx_m, _) = c.coeff(0, -1);
        assert!((cx_p - Complex64::new(0.0, -0.5)).norm() < 1e-13);
        assert!((cx_m - Complex64::new(0.0, 0.5)).norm() < 1e-13);
        assert!(cy_p.norm() < 1e-13);
        // everything else zero
        for (kx, ky) in c.grid().retained_modes() {
            if (kx, ky) != (0, 1) && (kx, ky) != (0, -1) {
                let (a, b) = c.coeff(kx, ky);
                assert!(a.norm() < 1e-13 && b.norm() < 1e-13);
            }
        }
    }

    #[test]
    fn roundtrip_random_smooth_field() {
        let g = GridSpec::new(32).unwrap();
        let f = PhysicalField::from_fn(g, |x, y| {
            ((x.sin() * (2.0 * y).cos()).exp().sin(), (3.0 * x + y).cos())
        });
        let back = raw_to_physical(&to_spectral(&f));
        let scale: f64 = f.vx.iter().map(|v| v.abs()).fold(0.0, f64::max);
        for (a, b) in back.vx.iter().zip(f.vx.iter()) {
            assert!((a - b).abs() <= 1e-12 * scale.max(1.0));
        }
        for (a, b) in back.vy.iter().zip(f.vy.iter()) {
            assert!((a - b).abs() <= 1e-12 * scale.max(1.0));
        }
    }

    #[test]
    fn norms_of_sin_y() {
        // ∫ (sin y)² over [0,2π]² = 2π²; |k| = 1 so V norm matches;
        // ∫ (sin y)⁴ = 3π²/2 (symbolic oracle)
        let (_, f) = sin_y_field(32);
        let u = crate::ops::leray_project(&to_spectral(&f));
        let pi2 = std::f64::consts::PI * std::f64::consts::PI;
        assert_relative_eq!(norm_h_sq(&u), 2.0 * pi2, max_relative = 1e-12);
        assert_relative_eq!(norm_v_sq(&u), 2.0 * pi2, max_relative = 1e-12);
        assert_relative_eq!(norm_lp_pow(&u, 3.0), 1.5 * pi2, max_relative = 1e-12);
        let nm = norms(&u, 3.0);
        assert_relative_eq!(nm.lp, (1.5 * pi2).powf(0.25), max_relative = 1e-12);
    }

    #[test]
    fn zero_field_norms() {
        let g = GridSpec::new(8).unwrap();
        let u = SpectralField::zero(g);
        let nm = norms(&u, 3.0);
        assert_eq!((nm.h, nm.v, nm.lp), (0.0, 0.0, 0.0));
    }

    #[test]
    fn padded_synthesis_matches_analytic_samples() {
        let (g, f) = sin_y_field(16);
        let u = crate::ops::leray_project(&to_spectral(&f));
        let m = 3 * g.n();
        let (vx, _) = synthesize_on(&u, m);
        let h = DOMAIN_PERIOD / m as f64;
        for iy in 0..m {
            for ix in 0..m {
                let want = (iy as f64 * h).sin();
                assert!((vx[iy * m + ix] - want).abs() < 1e-12);
            }
        }
    }
}
