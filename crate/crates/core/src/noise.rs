//! Truncated cylindrical Wiener process and the diffusion operator `G`.
//!
//! The noise space `K` is spanned by `k_dim` basis directions. Three
//! diffusion families are supported, chosen so every hypothesis constant
//! (growth `L₁`, Lipschitz `ρ`, correction growth `L₂`) is available in
//! closed form:
//!
//! * `additive`       — `G_k(u) = q_k φ_k` with fixed unit-norm shapes;
//! * `diagonal_linear`— `G_k(u) = q_k u`;
//! * `affine`         — `G_k(u) = q_k (u + φ_k)`.
//!
//! Brownian increments are generated counter-based: mode `k` draws its
//! level-`L` increment `j` from a ChaCha stream keyed by `(seed, k)` at word
//! position `4j`, so adding modes never perturbs existing ones and a path is
//! reproducible from `(seed, T, L, k_dim)` alone. Coarser dyadic increments
//! are pairwise sums of their two children, so refinement consistency is
//! exact by construction at every level.

use crate::error::Error;
use crate::experiments::InequalityReport;
use crate::field::{norm_h, norm_h_sq, SpectralField};
use crate::grid::{GridSpec, DOMAIN_PERIOD};
use crate::Result;
use num_complex::Complex64;
use rand_chacha::ChaCha12Rng;
use rand_core::{RngCore, SeedableRng};
use std::io::{Read, Write};

/// Dyadic Wong-Zakai level: mesh `σ = T/2ⁿ` and mode truncation at `k ≤ n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WzLevel {
    pub n: u32,
}

impl WzLevel {
    pub fn new(n: u32) -> Self {
        WzLevel { n }
    }

    /// `σ = T/2ⁿ`; exact in floating point (T is dyadic).
    pub fn sigma(&self, t_horizon: f64) -> f64 {
        t_horizon / (1u64 << self.n) as f64
    }
}

/// Diffusion family of the noise coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseFamily {
    Additive,
    DiagonalLinear,
    Affine,
}

/// Hypothesis constants recorded with the model: `L₁` (growth), `L₂`
/// (correction growth), `γ` (moment exponent, metadata only) and the
/// analytic Lipschitz function value `ρ` (constant for these families).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HypothesisConstants {
    pub l1: f64,
    pub l2: f64,
    pub gamma: f64,
    pub rho: f64,
}

/// The diffusion operator `G : H → L₂(K; H)` with per-direction components
/// `G_k(u) = G(u)e_k`.
#[derive(Debug, Clone)]
pub struct NoiseModel {
    family: NoiseFamily,
    weights: Vec<f64>,
    shapes: Vec<SpectralField>,
    hyp: HypothesisConstants,
    grid: GridSpec,
}

/// Unit-H-norm divergence-free shape field for noise direction `k`: a single
/// conjugate pair on the `k`-th lowest wavevector, polarised along `k⊥`.
fn shape_field(grid: GridSpec, pair_index: usize) -> Result<SpectralField> {
    let pairs = grid.mode_pairs_sorted();
    if pair_index >= pairs.len() {
        return Err(Error::InvalidParam(format!(
            "noise dimension {} exceeds {} retained mode pairs",
            pair_index + 1,
            pairs.len()
        )));
    }
    let (kx, ky) = pairs[pair_index];
    let norm = ((kx * kx + ky * ky) as f64).sqrt();
    let (px, py) = (-(ky as f64) / norm, kx as f64 / norm);
    // two conjugate modes of amplitude c give ‖φ‖²_H = (2π)²·2c² = 1
    let c = 1.0 / (DOMAIN_PERIOD * std::f64::consts::SQRT_2);
    let mut out = SpectralField::zero(grid);
    let i = grid.index_of(kx, ky);
    out.cx[i] = Complex64::new(c * px, 0.0);
    out.cy[i] = Complex64::new(c * py, 0.0);
    let j = grid.index_of(-kx, -ky);
    out.cx[j] = Complex64::new(c * px, 0.0);
    out.cy[j] = Complex64::new(c * py, 0.0);
    Ok(out)
}

impl NoiseModel {
    pub fn new(family: NoiseFamily, weights: Vec<f64>, grid: GridSpec, gamma: f64) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidParam("noise weights must be non-empty".into()));
        }
        if weights.iter().any(|q| !q.is_finite()) {
            return Err(Error::InvalidParam("noise weights must be finite".into()));
        }
        let k_dim = weights.len();
        let shapes = match family {
            NoiseFamily::DiagonalLinear => Vec::new(),
            _ => (0..k_dim)
                .map(|k| shape_field(grid, k))
                .collect::<Result<Vec<_>>>()?,
        };
        let q2: f64 = weights.iter().map(|q| q * q).sum();
        // certified constants from the family algebra
        let (l1, rho) = match family {
            NoiseFamily::Additive => (q2, 0.0),
            NoiseFamily::DiagonalLinear => (q2, q2),
            NoiseFamily::Affine => (2.0 * q2, q2),
        };
        let l2 = match family {
            NoiseFamily::Additive => 0.0,
            NoiseFamily::DiagonalLinear => q2 * q2,
            NoiseFamily::Affine => {
                // ‖Tr_n(v)‖² ≤ 2 s_n²‖v‖² + 2‖Σ q²φ‖²; take the worst n
                let mut worst: f64 = 0.0;
                let mut shape_sum = SpectralField::zero(grid);
                let mut s = 0.0;
                for (q, phi) in weights.iter().zip(shapes.iter()) {
                    s += q * q;
                    shape_sum.axpy(q * q, phi);
                    worst = worst.max(2.0 * (s * s).max(norm_h_sq(&shape_sum)));
                }
                worst
            }
        };
        Ok(NoiseModel {
            family,
            weights,
            shapes,
            hyp: HypothesisConstants { l1, l2, gamma, rho },
            grid,
        })
    }

    pub fn family(&self) -> NoiseFamily {
        self.family
    }

    pub fn k_dim(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn hypothesis_constants(&self) -> HypothesisConstants {
        self.hyp
    }

    /// Component `G_k(u)`.
    pub fn g_k(&self, u: &SpectralField, k: usize) -> Result<SpectralField> {
        if k >= self.k_dim() {
            return Err(Error::ModeOutOfRange {
                index: k,
                k_dim: self.k_dim(),
            });
        }
        let q = self.weights[k];
        Ok(match self.family {
            NoiseFamily::Additive => self.shapes[k].scaled(q),
            NoiseFamily::DiagonalLinear => u.scaled(q),
            NoiseFamily::Affine => {
                let mut out = u.scaled(q);
                out.axpy(q, &self.shapes[k]);
                out
            }
        })
    }

    /// `G(u)z = Σ_k z_k G_k(u)`; linear in `z`.
    pub fn apply_g(&self, u: &SpectralField, z: &[f64]) -> Result<SpectralField> {
        if z.len() != self.k_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.k_dim(),
                got: z.len(),
            });
        }
        let s: f64 = self
            .weights
            .iter()
            .zip(z.iter())
            .map(|(q, zk)| q * zk)
            .sum();
        Ok(match self.family {
            NoiseFamily::DiagonalLinear => u.scaled(s),
            NoiseFamily::Additive => {
                let mut out = SpectralField::zero(self.grid);
                for ((q, zk), phi) in self.weights.iter().zip(z.iter()).zip(self.shapes.iter()) {
                    out.axpy(q * zk, phi);
                }
                out
            }
            NoiseFamily::Affine => {
                let mut out = u.scaled(s);
                for ((q, zk), phi) in self.weights.iter().zip(z.iter()).zip(self.shapes.iter()) {
                    out.axpy(q * zk, phi);
                }
                out
            }
        })
    }

    /// Fréchet derivative `DG_k(u)h`: zero for the additive family, `q_k h`
    /// for the linear and affine families.
    pub fn dg_apply(
        &self,
        _u: &SpectralField,
        k: usize,
        h: &SpectralField,
    ) -> Result<SpectralField> {
        if k >= self.k_dim() {
            return Err(Error::ModeOutOfRange {
                index: k,
                k_dim: self.k_dim(),
            });
        }
        Ok(match self.family {
            NoiseFamily::Additive => SpectralField::zero(self.grid),
            _ => h.scaled(self.weights[k]),
        })
    }

    /// Wong-Zakai correction `T̃r_n(u) = Σ_{k≤n} DG_k(u) G_k(u)`, in closed
    /// form per family.
    pub fn correction_tr(&self, u: &SpectralField, n: usize) -> Result<SpectralField> {
        if n == 0 || n > self.k_dim() {
            return Err(Error::ModeOutOfRange {
                index: n,
                k_dim: self.k_dim(),
            });
        }
        let s_n: f64 = self.weights[..n].iter().map(|q| q * q).sum();
        Ok(match self.family {
            NoiseFamily::Additive => SpectralField::zero(self.grid),
            NoiseFamily::DiagonalLinear => u.scaled(s_n),
            NoiseFamily::Affine => {
                let mut out = u.scaled(s_n);
                for (q, phi) in self.weights[..n].iter().zip(self.shapes[..n].iter()) {
                    out.axpy(q * q, phi);
                }
                out
            }
        })
    }

    /// The defining sum `Σ_{k≤n} DG_k(u)G_k(u)` term by term; the closed
    /// forms above must match this to rounding.
    pub fn correction_tr_by_sum(&self, u: &SpectralField, n: usize) -> Result<SpectralField> {
        if n == 0 || n > self.k_dim() {
            return Err(Error::ModeOutOfRange {
                index: n,
                k_dim: self.k_dim(),
            });
        }
        let mut out = SpectralField::zero(self.grid);
        for k in 0..n {
            let gk = self.g_k(u, k)?;
            out.axpy(1.0, &self.dg_apply(u, k, &gk)?);
        }
        Ok(out)
    }

    /// Hilbert–Schmidt norm squared `‖G(u)‖²_{L₂} = Σ_k ‖G_k(u)‖²_H`.
    pub fn hs_norm_sq(&self, u: &SpectralField) -> f64 {
        (0..self.k_dim())
            .map(|k| norm_h_sq(&self.g_k(u, k).expect("k < k_dim")))
            .sum()
    }
}

// ---------------------------------------------------------------------------
// Brownian paths
// ---------------------------------------------------------------------------

/// Dyadically refinable Brownian increments for `k_dim` independent modes.
///
/// `levels[mode][l][j]` is the increment of `w_mode` over
/// `[j·T/2ˡ, (j+1)·T/2ˡ)`; level `max_level` holds the sampled atoms and
/// every coarser increment is the pairwise sum of its two children.
/// Dyadic increment pyramid of one mode: `pyramid[l][j]` is the increment
/// over `[j·T/2ˡ, (j+1)·T/2ˡ)`.
type IncrementPyramid = Vec<Vec<f64>>;

#[derive(Debug, Clone)]
pub struct BrownianPath {
    t_horizon: f64,
    max_level: u32,
    k_dim: usize,
    seed: u64,
    levels: Vec<IncrementPyramid>,
}

/// One standard normal from two raw 64-bit draws (Box–Muller). Fixed draw
/// count keeps the counter-based word addressing exact.
fn gaussian(rng: &mut ChaCha12Rng) -> f64 {
    let a = rng.next_u64();
    let b = rng.next_u64();
    let denom = (1u64 << 53) as f64;
    let u1 = ((a >> 11) as f64 + 1.0) / denom; // (0, 1]
    let u2 = ((b >> 11) as f64) / denom; // [0, 1)
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn mode_rng(seed: u64, mode: usize) -> ChaCha12Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(mode as u64).to_le_bytes());
    key[16..24].copy_from_slice(b"cbfpath\0");
    ChaCha12Rng::from_seed(key)
}

fn build_pyramid(atoms: Vec<f64>, max_level: u32) -> IncrementPyramid {
    let mut levels = vec![Vec::new(); max_level as usize + 1];
    levels[max_level as usize] = atoms;
    for l in (0..max_level).rev() {
        let fine = &levels[l as usize + 1];
        let coarse: Vec<f64> = fine.chunks_exact(2).map(|c| c[0] + c[1]).collect();
        levels[l as usize] = coarse;
    }
    levels
}

impl BrownianPath {
    /// Samples a path: `2^max_level` i.i.d. `N(0, T/2^max_level)` increments
    /// per mode, deterministic given the seed.
    pub fn sample(seed: u64, t_horizon: f64, max_level: u32, k_dim: usize) -> Result<Self> {
        if t_horizon <= 0.0 || t_horizon.is_nan() {
            return Err(Error::InvalidParam(format!(
                "t_horizon must be > 0, got {t_horizon}"
            )));
        }
        if !(1..=30).contains(&max_level) {
            return Err(Error::InvalidParam(format!(
                "max_level must be in 1..=30, got {max_level}"
            )));
        }
        if k_dim < 1 {
            return Err(Error::InvalidParam("k_dim must be >= 1".into()));
        }
        let count = 1usize << max_level;
        let sd = (t_horizon / count as f64).sqrt();
        let levels = (0..k_dim)
            .map(|mode| {
                let mut rng = mode_rng(seed, mode);
                let atoms = (0..count)
                    .map(|j| {
                        rng.set_word_pos((4 * j) as u128);
                        sd * gaussian(&mut rng)
                    })
                    .collect();
                build_pyramid(atoms, max_level)
            })
            .collect();
        Ok(BrownianPath {
            t_horizon,
            max_level,
            k_dim,
            seed,
            levels,
        })
    }

    /// A path whose increments are all zero; degenerate driver for tests.
    pub fn zeroed(t_horizon: f64, max_level: u32, k_dim: usize) -> Result<Self> {
        let mut path = Self::sample(0, t_horizon, max_level, k_dim)?;
        for mode in path.levels.iter_mut() {
            for level in mode.iter_mut() {
                level.iter_mut().for_each(|x| *x = 0.0);
            }
        }
        Ok(path)
    }

    pub fn t_horizon(&self) -> f64 {
        self.t_horizon
    }

    pub fn max_level(&self) -> u32 {
        self.max_level
    }

    pub fn k_dim(&self) -> usize {
        self.k_dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Increments of one mode at a dyadic level (`2^level` values).
    pub fn increments(&self, mode: usize, level: u32) -> Result<&[f64]> {
        if mode >= self.k_dim {
            return Err(Error::ModeOutOfRange {
                index: mode,
                k_dim: self.k_dim,
            });
        }
        if level > self.max_level {
            return Err(Error::LevelOutOfRange {
                level,
                max_level: self.max_level,
                k_dim: self.k_dim,
            });
        }
        Ok(&self.levels[mode][level as usize])
    }

    /// Increment over `[j·2^-e·T, (j+1)·2^-e·T)`. For `e ≤ max_level` this is
    /// the exact Brownian increment; below the atom resolution the atom is
    /// split evenly, i.e. the frozen path is interpolated linearly in time.
    pub(crate) fn increment_at(&self, mode: usize, e: u32, j: usize) -> f64 {
        if e <= self.max_level {
            self.levels[mode][e as usize][j]
        } else {
            let shift = e - self.max_level;
            self.levels[mode][self.max_level as usize][j >> shift] / (1u64 << shift) as f64
        }
    }

    /// Per-cell values of the Wong-Zakai derivative at level `n`: for cell
    /// `j` of width `σ = T/2ⁿ` the lagged quotient
    /// `(w(jσ) − w((j−1)σ))/σ`, which is zero on the first cell by the zero
    /// extension of the path to negative times. Each value is a `k_dim`
    /// vector whose components beyond `n` are zero.
    pub fn wz_cells(&self, lvl: WzLevel) -> Result<Vec<Vec<f64>>> {
        let n = lvl.n;
        if n as usize > self.k_dim || n > self.max_level || n == 0 {
            return Err(Error::LevelOutOfRange {
                level: n,
                max_level: self.max_level,
                k_dim: self.k_dim,
            });
        }
        let sigma = lvl.sigma(self.t_horizon);
        let cells = 1usize << n;
        let mut out = vec![vec![0.0; self.k_dim]; cells];
        for (j, values) in out.iter_mut().enumerate().skip(1) {
            for (mode, cell) in values.iter_mut().enumerate().take(n as usize) {
                *cell = self.levels[mode][n as usize][j - 1] / sigma;
            }
        }
        Ok(out)
    }

    /// The Wong-Zakai derivative `Ẇⁿ(t)` as a `k_dim` vector (components
    /// beyond `n` zero; zero for `t` beyond the extension,
    /// piecewise constant on the dyadic cells).
    pub fn wz_derivative(&self, lvl: WzLevel, t: f64) -> Result<Vec<f64>> {
        let n = lvl.n;
        if n as usize > self.k_dim || n > self.max_level || n == 0 {
            return Err(Error::LevelOutOfRange {
                level: n,
                max_level: self.max_level,
                k_dim: self.k_dim,
            });
        }
        if t < 0.0 {
            return Err(Error::InvalidParam(format!("time {t} is negative")));
        }
        let sigma = lvl.sigma(self.t_horizon);
        let j = (t / sigma).floor() as i64;
        let cells = 1i64 << n;
        let mut out = vec![0.0; self.k_dim];
        // increment w(jσ) − w((j−1)σ); zero when the interval is outside
        // [0, T] by the constant extensions on both sides
        if j >= 1 && j <= cells {
            for (mode, v) in out.iter_mut().enumerate().take(n as usize) {
                *v = self.levels[mode][n as usize][(j - 1) as usize] / sigma;
            }
        }
        Ok(out)
    }

    /// Binary dump: magic, version, T, L, k_dim, seed, then the finest-level
    /// increments as little-endian f64, mode-major.
    pub fn dump<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(b"CBFWPATH")?;
        w.write_all(&1u32.to_le_bytes())?;
        w.write_all(&self.t_horizon.to_le_bytes())?;
        w.write_all(&self.max_level.to_le_bytes())?;
        w.write_all(&(self.k_dim as u32).to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        for mode in 0..self.k_dim {
            for x in &self.levels[mode][self.max_level as usize] {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn load<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != b"CBFWPATH" {
            return Err(Error::BadDump("bad magic".into()));
        }
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b4)?;
        let version = u32::from_le_bytes(b4);
        if version != 1 {
            return Err(Error::BadDump(format!("unsupported version {version}")));
        }
        r.read_exact(&mut b8)?;
        let t_horizon = f64::from_le_bytes(b8);
        r.read_exact(&mut b4)?;
        let max_level = u32::from_le_bytes(b4);
        r.read_exact(&mut b4)?;
        let k_dim = u32::from_le_bytes(b4) as usize;
        r.read_exact(&mut b8)?;
        let seed = u64::from_le_bytes(b8);
        if t_horizon <= 0.0 || t_horizon.is_nan() || !(1..=30).contains(&max_level) || k_dim < 1 {
            return Err(Error::BadDump("inconsistent header".into()));
        }
        let count = 1usize << max_level;
        let mut levels = Vec::with_capacity(k_dim);
        for _ in 0..k_dim {
            let mut atoms = Vec::with_capacity(count);
            for _ in 0..count {
                r.read_exact(&mut b8)?;
                atoms.push(f64::from_le_bytes(b8));
            }
            levels.push(build_pyramid(atoms, max_level));
        }
        Ok(BrownianPath {
            t_horizon,
            max_level,
            k_dim,
            seed,
            levels,
        })
    }
}

/// Samples a fresh path (free-function form of [`BrownianPath::sample`]).
pub fn sample_path(seed: u64, t_horizon: f64, max_level: u32, k_dim: usize) -> Result<BrownianPath> {
    BrownianPath::sample(seed, t_horizon, max_level, k_dim)
}

// ---------------------------------------------------------------------------
// hypothesis audit
// ---------------------------------------------------------------------------

/// Samples random field pairs and checks the growth bound H.1, the
/// Lipschitz-type bound H.2 with the family's analytic ρ, the correction
/// growth H′.2, and the closed-form/summed-definition agreement of `T̃r_n`.
/// All margins are normalised; violations flip the pass flag.
pub fn hypothesis_audit(
    model: &NoiseModel,
    sample_count: usize,
    rng_seed: u64,
) -> Vec<InequalityReport> {
    let hyp = model.hypothesis_constants();
    let grid = model.grid();
    let n = model.k_dim();
    let mut h1_margin = f64::INFINITY;
    let mut h2_margin = f64::INFINITY;
    let mut hp2_margin = f64::INFINITY;
    let mut tr_defect: f64 = 0.0;
    for i in 0..sample_count {
        let u = crate::experiments::random_field_in_range(grid, rng_seed, 2 * i as u64, 0.1, 10.0);
        let v = crate::experiments::random_field_in_range(
            grid,
            rng_seed,
            2 * i as u64 + 1,
            0.1,
            10.0,
        );
        let uh2 = norm_h_sq(&u);
        h1_margin = h1_margin.min((hyp.l1 * (1.0 + uh2) - model.hs_norm_sq(&u)) / (1.0 + uh2));
        let duv = norm_h_sq(&u.sub(&v));
        let mut hs_diff = 0.0;
        for k in 0..n {
            let gu = model.g_k(&u, k).expect("in range");
            let gv = model.g_k(&v, k).expect("in range");
            hs_diff += norm_h_sq(&gu.sub(&gv));
        }
        h2_margin = h2_margin.min((hyp.rho * duv - hs_diff) / duv.max(1e-300));
        let tr = model.correction_tr(&v, n).expect("n = k_dim");
        let vh2 = norm_h_sq(&v);
        hp2_margin = hp2_margin.min((hyp.l2 * (1.0 + vh2) - norm_h_sq(&tr)) / (1.0 + vh2));
        let by_sum = model.correction_tr_by_sum(&v, n).expect("n = k_dim");
        tr_defect = tr_defect.max(norm_h(&tr.sub(&by_sum)) / (1.0 + norm_h(&tr)));
    }
    vec![
        InequalityReport::new("h1_growth", sample_count, h1_margin, 1e-9),
        InequalityReport::new("h2_lipschitz", sample_count, h2_margin, 1e-9),
        InequalityReport::new("hp2_correction_growth", sample_count, hp2_margin, 1e-9),
        InequalityReport::new("tr_closed_form", sample_count, -tr_defect, 1e-12),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::random_field;
    use crate::field::{inner_h, norm_h};
    use approx::assert_relative_eq;

    fn grid() -> GridSpec {
        GridSpec::new(16).unwrap()
    }

    fn model(family: NoiseFamily) -> NoiseModel {
        NoiseModel::new(family, vec![0.4, 0.3, 0.2, 0.1], grid(), 2.0).unwrap()
    }

    #[test]
    fn shapes_are_unit_norm_divergence_free() {
        let m = model(NoiseFamily::Additive);
        for k in 0..m.k_dim() {
            let phi = m.g_k(&SpectralField::zero(grid()), k).unwrap();
            // G_k(0) = q_k φ_k
            assert_relative_eq!(norm_h(&phi), m.weights()[k].abs(), max_relative = 1e-12);
            assert!(phi.max_divergence() < 1e-13);
            assert!(phi.max_hermitian_defect() < 1e-13);
        }
    }

    #[test]
    fn apply_g_families() {
        let u = random_field(grid(), 7, 1.0);
        let z = vec![0.0; 4];
        for fam in [
            NoiseFamily::Additive,
            NoiseFamily::DiagonalLinear,
            NoiseFamily::Affine,
        ] {
            let m = model(fam);
            assert!(m.apply_g(&u, &z).unwrap().is_zero());
            assert!(m.apply_g(&u, &[1.0]).is_err());
        }
        // diagonal with z = e1: q1·u
        let m = model(NoiseFamily::DiagonalLinear);
        let out = m.apply_g(&u, &[1.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(norm_h(&out.sub(&u.scaled(0.4))) < 1e-14);
        // additive output is independent of u
        let m = model(NoiseFamily::Additive);
        let z = [0.3, -1.0, 2.0, 0.5];
        let a = m.apply_g(&u, &z).unwrap();
        let b = m.apply_g(&SpectralField::zero(grid()), &z).unwrap();
        assert!(norm_h(&a.sub(&b)) == 0.0);
    }

    #[test]
    fn apply_g_linear_in_z() {
        let u = random_field(grid(), 8, 1.0);
        let m = model(NoiseFamily::Affine);
        let z1 = [0.3, -1.0, 2.0, 0.5];
        let z2 = [1.0, 0.2, -0.7, 0.9];
        let zsum: Vec<f64> = z1.iter().zip(z2.iter()).map(|(a, b)| a + b).collect();
        let lhs = m.apply_g(&u, &zsum).unwrap();
        let rhs = m.apply_g(&u, &z1).unwrap().add(&m.apply_g(&u, &z2).unwrap());
        assert!(norm_h(&lhs.sub(&rhs)) < 1e-13);
    }

    #[test]
    fn dg_matches_finite_difference() {
        let u = random_field(grid(), 9, 1.0);
        let h = random_field(grid(), 10, 1.0);
        let eps = 1e-6;
        for fam in [
            NoiseFamily::Additive,
            NoiseFamily::DiagonalLinear,
            NoiseFamily::Affine,
        ] {
            let m = model(fam);
            for k in 0..m.k_dim() {
                let d = m.dg_apply(&u, k, &h).unwrap();
                let mut up = u.clone();
                up.axpy(eps, &h);
                let fd = m
                    .g_k(&up, k)
                    .unwrap()
                    .sub(&m.g_k(&u, k).unwrap())
                    .scaled(1.0 / eps);
                // the maps are constant or linear, so the quotient matches
                // the derivative up to the cancellation roundoff ~1e-16/ε
                assert!(norm_h(&fd.sub(&d)) < 1e-10, "{fam:?} k={k}");
            }
            assert!(m.dg_apply(&u, 4, &h).is_err());
        }
        // additive: derivative identically zero
        let m = model(NoiseFamily::Additive);
        assert!(m.dg_apply(&u, 2, &h).unwrap().is_zero());
    }

    #[test]
    fn correction_closed_forms() {
        let u = random_field(grid(), 11, 1.3);
        // additive: zero for any u, n
        let m = model(NoiseFamily::Additive);
        assert!(m.correction_tr(&u, 3).unwrap().is_zero());
        // diagonal, q = (1, 1/2), n = 2: (1 + 1/4)·u
        let m2 = NoiseModel::new(NoiseFamily::DiagonalLinear, vec![1.0, 0.5], grid(), 2.0).unwrap();
        let tr = m2.correction_tr(&u, 2).unwrap();
        assert!(norm_h(&tr.sub(&u.scaled(1.25))) < 1e-13);
        // single-term sum n = 1: q1²·u
        let tr1 = m2.correction_tr(&u, 1).unwrap();
        assert!(norm_h(&tr1.sub(&u)) < 1e-13);
        assert!(m2.correction_tr(&u, 0).is_err());
        assert!(m2.correction_tr(&u, 3).is_err());
        // closed form matches the summed definition for every family
        for fam in [
            NoiseFamily::Additive,
            NoiseFamily::DiagonalLinear,
            NoiseFamily::Affine,
        ] {
            let m = model(fam);
            for n in 1..=4 {
                let a = m.correction_tr(&u, n).unwrap();
                let b = m.correction_tr_by_sum(&u, n).unwrap();
                assert!(norm_h(&a.sub(&b)) <= 1e-12 * (1.0 + norm_h(&a)), "{fam:?} n={n}");
            }
        }
    }

    #[test]
    fn path_determinism_and_refinement() {
        let a = BrownianPath::sample(42, 0.5, 8, 3).unwrap();
        let b = BrownianPath::sample(42, 0.5, 8, 3).unwrap();
        for mode in 0..3 {
            assert_eq!(
                a.increments(mode, 8).unwrap(),
                b.increments(mode, 8).unwrap()
            );
        }
        // coarse increment equals the sum of its two children, exactly
        for mode in 0..3 {
            for level in (1..=8u32).rev() {
                let fine = a.increments(mode, level).unwrap().to_vec();
                let coarse = a.increments(mode, level - 1).unwrap();
                for (j, c) in coarse.iter().enumerate() {
                    assert_eq!(*c, fine[2 * j] + fine[2 * j + 1]);
                }
            }
        }
        // different seeds differ
        let c = BrownianPath::sample(43, 0.5, 8, 3).unwrap();
        assert_ne!(a.increments(0, 8).unwrap(), c.increments(0, 8).unwrap());
    }

    #[test]
    fn extending_k_dim_preserves_existing_modes() {
        let a = BrownianPath::sample(5, 1.0, 6, 2).unwrap();
        let b = BrownianPath::sample(5, 1.0, 6, 5).unwrap();
        for mode in 0..2 {
            assert_eq!(
                a.increments(mode, 6).unwrap(),
                b.increments(mode, 6).unwrap()
            );
        }
    }

    #[test]
    fn atom_variance_within_chi_square_band() {
        // 2^14 atoms of variance T/2^14; 5σ band on the sample variance is
        // 5·sqrt(2/M) ≈ 0.0552 relative (chi-square bound, precomputed)
        let t = 0.5;
        let lvl = 14;
        let path = BrownianPath::sample(1234, t, lvl, 1).unwrap();
        let atoms = path.increments(0, lvl).unwrap();
        let var_target = t / (1u64 << lvl) as f64;
        let sample_var: f64 =
            atoms.iter().map(|x| x * x).sum::<f64>() / atoms.len() as f64;
        assert!(
            (sample_var / var_target - 1.0).abs() < 0.0552,
            "sample variance {sample_var} vs {var_target}"
        );
    }

    #[test]
    fn wz_derivative_lag_and_piecewise_constancy() {
        let t = 1.0;
        let path = BrownianPath::sample(77, t, 6, 6).unwrap();
        let lvl = WzLevel::new(4);
        let sigma = lvl.sigma(t);
        // first cell: ⌊t/σ⌋ = 0 ⇒ w(0) − w(−σ) = 0
        let d0 = path.wz_derivative(lvl, 0.5 * sigma).unwrap();
        assert!(d0.iter().all(|&x| x == 0.0));
        // second cell: component k = w_k(σ)/σ, modes beyond n zero
        let d1 = path.wz_derivative(lvl, 1.5 * sigma).unwrap();
        for (mode, &value) in d1.iter().enumerate().take(4) {
            let first = path.increments(mode, 4).unwrap()[0];
            assert_eq!(value, first / sigma);
        }
        assert_eq!(d1[4], 0.0);
        assert_eq!(d1[5], 0.0);
        // piecewise constant within a cell
        let da = path.wz_derivative(lvl, 5.0 * sigma + 1e-9).unwrap();
        let db = path.wz_derivative(lvl, 6.0 * sigma - 1e-9).unwrap();
        assert_eq!(da, db);
        // level must be resolvable
        assert!(path.wz_derivative(WzLevel::new(7), 0.0).is_err());
        assert!(BrownianPath::sample(1, 1.0, 8, 4)
            .unwrap()
            .wz_derivative(WzLevel::new(5), 0.0)
            .is_err());
    }

    #[test]
    fn wz_integral_telescopes_to_penultimate_value() {
        // ∫₀ᵀ ẇⁿ_k ds = w_k(T − σ): quadrature of the piecewise-constant
        // function against the telescoping sum of stored increments
        let t = 0.5;
        let path = BrownianPath::sample(99, t, 8, 5).unwrap();
        let lvl = WzLevel::new(5);
        let sigma = lvl.sigma(t);
        let cells = path.wz_cells(lvl).unwrap();
        for mode in 0..5 {
            let quad: f64 = cells.iter().map(|c| c[mode] * sigma).sum();
            let prefix: f64 = path.increments(mode, 5).unwrap()[..(1 << 5) - 1]
                .iter()
                .sum();
            assert_relative_eq!(quad, prefix, max_relative = 1e-12, epsilon = 1e-15);
        }
    }

    #[test]
    fn wz_adapted_zeroing_future_increments_is_invisible() {
        // value on [jσ, (j+1)σ) depends only on increments up to jσ
        let t = 1.0;
        let mut path = BrownianPath::sample(13, t, 6, 4).unwrap();
        let lvl = WzLevel::new(4);
        let sigma = lvl.sigma(t);
        let probe = 5.5 * sigma;
        let before = path.wz_derivative(lvl, probe).unwrap();
        // zero every atom from time 5σ on (indices ≥ 5·2^{6-4})
        let cut = 5 * (1usize << 2);
        for mode in 0..4 {
            let atoms = path.levels[mode][6].clone();
            let mut clipped = atoms;
            for x in clipped[cut..].iter_mut() {
                *x = 0.0;
            }
            path.levels[mode] = build_pyramid(clipped, 6);
        }
        let after = path.wz_derivative(lvl, probe).unwrap();
        assert_eq!(before, after);
    }

    #[test]
    fn dump_roundtrip() {
        let path = BrownianPath::sample(2024, 0.25, 7, 3).unwrap();
        let mut buf = Vec::new();
        path.dump(&mut buf).unwrap();
        let back = BrownianPath::load(buf.as_slice()).unwrap();
        assert_eq!(back.t_horizon(), 0.25);
        assert_eq!(back.max_level(), 7);
        assert_eq!(back.k_dim(), 3);
        assert_eq!(back.seed(), 2024);
        for mode in 0..3 {
            for level in 0..=7 {
                assert_eq!(
                    path.increments(mode, level).unwrap(),
                    back.increments(mode, level).unwrap()
                );
            }
        }
        assert!(BrownianPath::load(&b"NOTAPATH"[..]).is_err());
    }

    #[test]
    fn audit_passes_for_all_families() {
        for fam in [
            NoiseFamily::Additive,
            NoiseFamily::DiagonalLinear,
            NoiseFamily::Affine,
        ] {
            let m = model(fam);
            let reports = hypothesis_audit(&m, 40, 31415);
            for r in &reports {
                assert!(r.pass, "{fam:?}: {} margin {}", r.name, r.worst_margin);
            }
        }
        // diagonal: H.2 is an exact identity, margin ~ 0
        let m = model(NoiseFamily::DiagonalLinear);
        let reports = hypothesis_audit(&m, 40, 2718);
        let h2 = reports.iter().find(|r| r.name == "h2_lipschitz").unwrap();
        assert!(h2.worst_margin.abs() < 1e-10);
    }

    #[test]
    fn inner_h_of_gk_consistency() {
        // ‖G(u)‖²_L₂ for diagonal equals (Σq²)‖u‖²
        let u = random_field(grid(), 20, 2.0);
        let m = model(NoiseFamily::DiagonalLinear);
        let q2: f64 = m.weights().iter().map(|q| q * q).sum();
        assert_relative_eq!(
            m.hs_norm_sq(&u),
            q2 * inner_h(&u, &u),
            max_relative = 1e-12
        );
    }
}
