//! Grid description and physical parameters.
//!
//! The domain is the periodic torus `[0,2π]²` sampled on an `N×N` uniform
//! grid. Fourier modes are indexed by wavevectors `k ∈ ℤ²`; the FFT bucket
//! `i` along an axis carries `k = i` for `i < N/2` and `k = i − N`
//! otherwise. Retained (dealiased) modes are `|k₁|,|k₂| ≤ cutoff` with the
//! Nyquist column excluded so the set is symmetric under `k → −k`.

use crate::error::Error;
use crate::Result;

/// Side length of the torus; fixed to 2π per axis so that wavevectors are
/// integers and the Stokes eigenvalues are exactly `|k|²`.
pub const DOMAIN_PERIOD: f64 = 2.0 * std::f64::consts::PI;

/// Dealias fraction as an exact rational, e.g. 2/3 for the classical rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DealiasFraction {
    pub num: u32,
    pub den: u32,
}

impl DealiasFraction {
    pub const TWO_THIRDS: DealiasFraction = DealiasFraction { num: 2, den: 3 };

    pub fn new(num: u32, den: u32) -> Result<Self> {
        if num == 0 || den == 0 || num > den {
            return Err(Error::InvalidParam(format!(
                "dealias fraction {num}/{den} must lie in (0, 1]"
            )));
        }
        Ok(DealiasFraction { num, den })
    }
}

/// Uniform N×N spectral grid on the torus.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridSpec {
    modes_per_axis: usize,
    dealias: DealiasFraction,
}

impl GridSpec {
    /// A grid with the default 2/3 dealias rule.
    pub fn new(modes_per_axis: usize) -> Result<Self> {
        Self::with_dealias(modes_per_axis, DealiasFraction::TWO_THIRDS)
    }

    pub fn with_dealias(modes_per_axis: usize, dealias: DealiasFraction) -> Result<Self> {
        if modes_per_axis < 4 || !modes_per_axis.is_multiple_of(2) {
            return Err(Error::InvalidParam(format!(
                "modes_per_axis must be an even integer >= 4, got {modes_per_axis}"
            )));
        }
        Ok(GridSpec {
            modes_per_axis,
            dealias,
        })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.modes_per_axis
    }

    pub fn dealias_fraction(&self) -> DealiasFraction {
        self.dealias
    }

    /// Largest retained |k| per axis. Capped at `N/2 − 1` so the retained
    /// set never contains the (unpaired) Nyquist column.
    pub fn cutoff(&self) -> i32 {
        let half = (self.modes_per_axis / 2) as u64;
        let raw = (half * self.dealias.num as u64) / self.dealias.den as u64;
        raw.min(half - 1) as i32
    }

    /// Wavevector component carried by FFT bucket `i`.
    #[inline]
    pub fn wavenumber(&self, i: usize) -> i32 {
        let n = self.modes_per_axis as i32;
        let i = i as i32;
        if i < n / 2 {
            i
        } else {
            i - n
        }
    }

    /// FFT bucket for wavevector component `k` (must satisfy |k| < N/2).
    #[inline]
    pub fn bucket(&self, k: i32) -> usize {
        let n = self.modes_per_axis as i32;
        debug_assert!(2 * k.abs() < n);
        ((k + n) % n) as usize
    }

    /// Flat index of the coefficient at wavevector `(kx, ky)`.
    #[inline]
    pub fn index_of(&self, kx: i32, ky: i32) -> usize {
        self.bucket(ky) * self.modes_per_axis + self.bucket(kx)
    }

    #[inline]
    pub fn is_retained(&self, kx: i32, ky: i32) -> bool {
        let c = self.cutoff();
        kx.abs() <= c && ky.abs() <= c
    }

    /// Quadrature weight of one grid cell, `(2π/N)²`.
    #[inline]
    pub fn cell_area(&self) -> f64 {
        let h = DOMAIN_PERIOD / self.modes_per_axis as f64;
        h * h
    }

    /// Retained wavevectors (including k = 0), bucket-major order.
    pub fn retained_modes(&self) -> Vec<(i32, i32)> {
        let n = self.modes_per_axis;
        let mut out = Vec::new();
        for iy in 0..n {
            for ix in 0..n {
                let kx = self.wavenumber(ix);
                let ky = self.wavenumber(iy);
                if self.is_retained(kx, ky) {
                    out.push((kx, ky));
                }
            }
        }
        out
    }

    /// Conjugate-pair representatives among retained nonzero modes, sorted by
    /// `(|k|², k₁, k₂)`. The representative of the pair `{k, −k}` is the one
    /// with `k₁ > 0`, or `k₁ = 0` and `k₂ > 0`. Used by the Galerkin
    /// truncation, which keeps whole pairs so real fields stay real.
    pub fn mode_pairs_sorted(&self) -> Vec<(i32, i32)> {
        let mut reps: Vec<(i32, i32)> = self
            .retained_modes()
            .into_iter()
            .filter(|&(kx, ky)| kx > 0 || (kx == 0 && ky > 0))
            .collect();
        reps.sort_by_key(|&(kx, ky)| (kx as i64 * kx as i64 + ky as i64 * ky as i64, kx, ky));
        reps
    }
}

/// Physical constants of the CBF model: viscosity μ, Darcy damping α,
/// Forchheimer coefficient β and absorption exponent r.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluidParams {
    pub mu: f64,
    pub alpha: f64,
    pub beta: f64,
    pub r: f64,
}

impl FluidParams {
    pub fn new(mu: f64, alpha: f64, beta: f64, r: f64) -> Result<Self> {
        if mu <= 0.0 || mu.is_nan() {
            return Err(Error::InvalidParam(format!("mu must be > 0, got {mu}")));
        }
        if alpha < 0.0 || alpha.is_nan() {
            return Err(Error::InvalidParam(format!(
                "alpha must be >= 0, got {alpha}"
            )));
        }
        if beta <= 0.0 || beta.is_nan() {
            return Err(Error::InvalidParam(format!("beta must be > 0, got {beta}")));
        }
        if r < 1.0 || r.is_nan() {
            return Err(Error::InvalidParam(format!("r must be >= 1, got {r}")));
        }
        Ok(FluidParams { mu, alpha, beta, r })
    }

    /// Bypasses the positivity checks. Intended for diagnostics that switch
    /// individual terms off (e.g. linear-decay validation runs).
    pub fn unchecked(mu: f64, alpha: f64, beta: f64, r: f64) -> Self {
        FluidParams { mu, alpha, beta, r }
    }

    /// In the critical case r = 3 records whether `2βμ ≥ 1`; `None` otherwise.
    pub fn critical_ok(&self) -> Option<bool> {
        if self.r == 3.0 {
            Some(2.0 * self.beta * self.mu >= 1.0)
        } else {
            None
        }
    }

    /// `r` as an odd integer when it is one (the exactly-dealiasable case).
    pub fn odd_integer_r(&self) -> Option<u32> {
        odd_integer(self.r)
    }
}

pub(crate) fn odd_integer(r: f64) -> Option<u32> {
    if r >= 1.0 && r.fract() == 0.0 && (r as u64) % 2 == 1 && r <= 31.0 {
        Some(r as u32)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_rejects_odd_or_tiny() {
        assert!(GridSpec::new(3).is_err());
        assert!(GridSpec::new(7).is_err());
        assert!(GridSpec::new(2).is_err());
        assert!(GridSpec::new(4).is_ok());
    }

    #[test]
    fn cutoff_two_thirds() {
        let g = GridSpec::new(32).unwrap();
        assert_eq!(g.cutoff(), 10);
        let g = GridSpec::new(16).unwrap();
        assert_eq!(g.cutoff(), 5);
        // fraction 1 is capped below Nyquist
        let g = GridSpec::with_dealias(8, DealiasFraction::new(1, 1).unwrap()).unwrap();
        assert_eq!(g.cutoff(), 3);
    }

    #[test]
    fn retained_set_symmetric_under_negation() {
        let g = GridSpec::new(12).unwrap();
        let modes = g.retained_modes();
        for &(kx, ky) in &modes {
            assert!(modes.contains(&(-kx, -ky)), "missing partner of ({kx},{ky})");
        }
    }

    #[test]
    fn wavenumber_bucket_roundtrip() {
        let g = GridSpec::new(16).unwrap();
        for i in 0..16 {
            let k = g.wavenumber(i);
            if k.abs() < 8 {
                assert_eq!(g.bucket(k), i);
            }
        }
    }

    #[test]
    fn mode_pairs_sorted_by_shell_then_lex() {
        let g = GridSpec::new(8).unwrap();
        let pairs = g.mode_pairs_sorted();
        // lowest shell |k|^2 = 1: representatives (0,1) and (1,0); lex order puts (0,1) first
        assert_eq!(pairs[0], (0, 1));
        assert_eq!(pairs[1], (1, 0));
        let mut shells: Vec<i64> = pairs
            .iter()
            .map(|&(a, b)| a as i64 * a as i64 + b as i64 * b as i64)
            .collect();
        let mut sorted = shells.clone();
        sorted.sort();
        shells.sort();
        assert_eq!(shells, sorted);
    }

    #[test]
    fn fluid_params_validation_and_critical_flag() {
        assert!(FluidParams::new(0.0, 0.1, 1.0, 3.0).is_err());
        assert!(FluidParams::new(1.0, -0.1, 1.0, 3.0).is_err());
        assert!(FluidParams::new(1.0, 0.1, 0.0, 3.0).is_err());
        assert!(FluidParams::new(1.0, 0.1, 1.0, 0.5).is_err());
        let p = FluidParams::new(1.0, 0.1, 1.0, 3.0).unwrap();
        assert_eq!(p.critical_ok(), Some(true));
        let p = FluidParams::new(0.1, 0.1, 1.0, 3.0).unwrap();
        assert_eq!(p.critical_ok(), Some(false));
        let p = FluidParams::new(1.0, 0.1, 1.0, 5.0).unwrap();
        assert_eq!(p.critical_ok(), None);
        assert_eq!(p.odd_integer_r(), Some(5));
        let p = FluidParams::new(1.0, 0.1, 1.0, 2.5).unwrap();
        assert_eq!(p.odd_integer_r(), None);
    }
}
