//! Monte-Carlo convergence studies and the verification batteries.
//!
//! Every experiment is a deterministic function of `(master_seed, config)`:
//! per-sample seeds are derived, sample work runs through [`crate::par`],
//! and aggregation folds in sample order so results are bitwise stable
//! across thread counts.

use crate::field::{inner_h, norm_h, norm_h_sq, norm_lp_pow, norm_v, norm_v_sq, SpectralField};
use crate::grid::{FluidParams, GridSpec};
use crate::integrator::{
    integrate_controlled, integrate_scbf, integrate_skeleton, integrate_wz, ControlSignal,
    SolverConfig, TrajectoryRecord,
};
use crate::noise::{BrownianPath, NoiseModel, WzLevel};
use crate::ops;
use crate::par;
use crate::Result;
use num_complex::Complex64;
use rand_chacha::ChaCha12Rng;
use rand_core::{RngCore, SeedableRng};

// ---------------------------------------------------------------------------
// reports and tables
// ---------------------------------------------------------------------------

/// Outcome of one sampled inequality: `worst_margin` is the most negative
/// residual of `bound − quantity` seen (so violations are negative), and the
/// check passes iff it stays above `−tolerance`.
#[derive(Debug, Clone)]
pub struct InequalityReport {
    pub name: String,
    pub trials: usize,
    pub worst_margin: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl InequalityReport {
    pub fn new(name: &str, trials: usize, worst_margin: f64, tolerance: f64) -> Self {
        InequalityReport {
            name: name.to_string(),
            trials,
            worst_margin,
            tolerance,
            pass: worst_margin >= -tolerance,
        }
    }

    /// A calibration entry: the margin carries an observed constant rather
    /// than a bound residual, and never fails.
    pub fn calibration(name: &str, trials: usize, observed: f64) -> Self {
        InequalityReport {
            name: name.to_string(),
            trials,
            worst_margin: observed,
            tolerance: f64::INFINITY,
            pass: observed.is_finite(),
        }
    }
}

/// One row of a Wong-Zakai convergence study.
#[derive(Debug, Clone)]
pub struct ConvergenceRow {
    pub level: u32,
    pub samples: usize,
    /// Monte-Carlo estimate of `E[sup_t ‖u(t) − uⁿ(t)‖²_H]`.
    pub err: f64,
    /// 95% normal-approximation half width over the per-sample sups.
    pub ci_half_width: f64,
}

#[derive(Debug, Clone)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    /// Samples whose integration aborted (flagged, not fatal).
    pub failures: usize,
}

/// Trend evaluation for a convergence table: increases between consecutive
/// levels count as soft inversions when the 95% intervals overlap and hard
/// ones otherwise; `ratio` compares the finest to the coarsest level.
#[derive(Debug, Clone, Copy)]
pub struct TrendReport {
    pub soft_inversions: usize,
    pub hard_inversions: usize,
    pub ratio: f64,
}

impl ConvergenceTable {
    pub fn trend(&self) -> TrendReport {
        let mut soft = 0;
        let mut hard = 0;
        for w in self.rows.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            if b.err > a.err {
                let overlap = (b.err - b.ci_half_width) <= (a.err + a.ci_half_width);
                if overlap {
                    soft += 1;
                } else {
                    hard += 1;
                }
            }
        }
        let ratio = match (self.rows.first(), self.rows.last()) {
            (Some(first), Some(last)) if first.err > 0.0 => last.err / first.err,
            _ => 0.0,
        };
        TrendReport {
            soft_inversions: soft,
            hard_inversions: hard,
            ratio,
        }
    }

    /// The trend-and-ratio acceptance rule: nonincreasing up to at most one
    /// inversion inside overlapping intervals, and final ≤ `ratio_bound` ×
    /// first.
    pub fn trend_ok(&self, ratio_bound: f64) -> bool {
        let t = self.trend();
        t.hard_inversions == 0 && t.soft_inversions <= 1 && t.ratio <= ratio_bound
    }
}

// ---------------------------------------------------------------------------
// seeding and random fields
// ---------------------------------------------------------------------------

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable per-purpose seed derivation (domain-separated splitmix).
pub fn derive_seed(master: u64, domain: u64, index: u64) -> u64 {
    splitmix(splitmix(master ^ splitmix(domain)) ^ index)
}

fn field_rng(seed: u64, index: u64) -> ChaCha12Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&index.to_le_bytes());
    key[16..24].copy_from_slice(b"cbffield");
    ChaCha12Rng::from_seed(key)
}

fn std_normal(rng: &mut ChaCha12Rng) -> f64 {
    let a = rng.next_u64();
    let b = rng.next_u64();
    let denom = (1u64 << 53) as f64;
    let u1 = ((a >> 11) as f64 + 1.0) / denom;
    let u2 = ((b >> 11) as f64) / denom;
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Random divergence-free field: Gaussian coefficients with `|k|⁻²` decay on
/// the retained modes, Leray-projected and rescaled to the target H norm.
pub fn random_field(grid: GridSpec, seed: u64, target_h: f64) -> SpectralField {
    random_field_indexed(grid, seed, 0, target_h)
}

fn random_field_indexed(grid: GridSpec, seed: u64, index: u64, target_h: f64) -> SpectralField {
    let mut rng = field_rng(seed, index);
    let mut raw = crate::field::RawCoeffs::zero(grid);
    for (kx, ky) in grid.mode_pairs_sorted() {
        let k2 = (kx * kx + ky * ky) as f64;
        let scale = 1.0 / k2;
        let cx = Complex64::new(std_normal(&mut rng), std_normal(&mut rng)) * scale;
        let cy = Complex64::new(std_normal(&mut rng), std_normal(&mut rng)) * scale;
        raw.set_coeff(kx, ky, cx, cy);
        raw.set_coeff(-kx, -ky, cx.conj(), cy.conj());
    }
    let u = ops::leray_project(&raw);
    let h = norm_h(&u);
    if h > 0.0 {
        u.scaled(target_h / h)
    } else {
        u
    }
}

/// As [`random_field`] with the target H norm drawn log-uniformly from
/// `[lo, hi]`; covers the norm regimes where the monotonicity constants bind.
pub fn random_field_in_range(
    grid: GridSpec,
    seed: u64,
    index: u64,
    lo: f64,
    hi: f64,
) -> SpectralField {
    let mut rng = field_rng(seed, index.wrapping_add(0x5EED));
    let ufrac = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
    let target = lo * (hi / lo).powf(ufrac);
    random_field_indexed(grid, seed, index, target)
}

/// Deterministic piecewise-constant control with unit `L²(0,T;K)` norm:
/// standard-normal cell values from the seed, rescaled.
pub fn unit_control(mesh_log2: u32, k_dim: usize, t_horizon: f64, seed: u64) -> ControlSignal {
    let mut rng = field_rng(derive_seed(seed, 0xC7_21, 0), 0);
    let cells = 1usize << mesh_log2;
    let values = (0..cells)
        .map(|_| (0..k_dim).map(|_| std_normal(&mut rng)).collect())
        .collect();
    ControlSignal::piecewise_constant(mesh_log2, values)
        .expect("cell count matches mesh")
        .normalized(t_horizon, 1.0)
}

// ---------------------------------------------------------------------------
// convergence studies
// ---------------------------------------------------------------------------

fn mean_and_ci(xs: &[f64]) -> (f64, f64) {
    let m = xs.len();
    if m == 0 {
        return (0.0, 0.0);
    }
    let mean = xs.iter().sum::<f64>() / m as f64;
    if m == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (m - 1) as f64;
    (mean, 1.96 * (var / m as f64).sqrt())
}

fn sup_h_sq_distance(a: &TrajectoryRecord, b: &TrajectoryRecord) -> Result<f64> {
    let d = a.sup_h_distance(b)?;
    Ok(d * d)
}

/// Strong Wong-Zakai convergence study: every sample drives the Itô system
/// and the approximant at every level from one shared path; rows estimate
/// `E[sup_t ‖u − uⁿ‖²_H]` with 95% half widths.
#[allow(clippy::too_many_arguments)]
pub fn convergence_study(
    x0: &SpectralField,
    p: &FluidParams,
    model: &NoiseModel,
    levels: &[u32],
    samples: usize,
    master_seed: u64,
    path_level: u32,
    cfg: &SolverConfig,
) -> Result<ConvergenceTable> {
    let per_sample: Vec<Result<Vec<f64>>> = par::map_indexed(samples, |s| {
        let seed = derive_seed(master_seed, 0xA11CE, s as u64);
        let path = BrownianPath::sample(seed, cfg.t_horizon, path_level, model.k_dim())?;
        let reference = integrate_scbf(x0, p, model, &path, cfg)?;
        let mut sups = Vec::with_capacity(levels.len());
        for &n in levels {
            let approx = integrate_wz(x0, p, model, &path, WzLevel::new(n), cfg)?;
            sups.push(sup_h_sq_distance(&reference, &approx)?);
        }
        Ok(sups)
    });
    Ok(collect_table(levels, samples, per_sample))
}

fn collect_table(
    levels: &[u32],
    samples: usize,
    per_sample: Vec<Result<Vec<f64>>>,
) -> ConvergenceTable {
    let ok: Vec<Vec<f64>> = per_sample.into_iter().filter_map(|r| r.ok()).collect();
    let failures = samples - ok.len();
    let rows = levels
        .iter()
        .enumerate()
        .map(|(i, &level)| {
            let col: Vec<f64> = ok.iter().map(|s| s[i]).collect();
            let (err, ci_half_width) = mean_and_ci(&col);
            ConvergenceRow {
                level,
                samples: col.len(),
                err,
                ci_half_width,
            }
        })
        .collect();
    ConvergenceTable { rows, failures }
}

/// Runs the skeleton equation on the control realized from the path's
/// Wong-Zakai derivative and returns `sup_t ‖Y_{Ẇⁿ} − uⁿ‖_H`; zero bitwise,
/// since both sides execute the same arithmetic.
pub fn skeleton_consistency(
    x0: &SpectralField,
    p: &FluidParams,
    model: &NoiseModel,
    path: &BrownianPath,
    n: u32,
    cfg: &SolverConfig,
) -> Result<f64> {
    let lvl = WzLevel::new(n);
    let ctrl = ControlSignal::from_wz(path, lvl)?;
    let skeleton = integrate_skeleton(x0, p, model, &ctrl, lvl, cfg)?;
    let wz = integrate_wz(x0, p, model, path, lvl, cfg)?;
    skeleton.sup_h_distance(&wz)
}

/// Controlled-system convergence: for a fixed control `k`, estimates
/// `E[sup_t ‖Yⁿ_k − Y_k‖²_H]` per level, with the deterministic skeleton
/// solved once per level and shared across samples.
#[allow(clippy::too_many_arguments)]
pub fn skeleton_wz_convergence(
    x0: &SpectralField,
    p: &FluidParams,
    model: &NoiseModel,
    ctrl: &ControlSignal,
    levels: &[u32],
    samples: usize,
    master_seed: u64,
    path_level: u32,
    cfg: &SolverConfig,
) -> Result<ConvergenceTable> {
    let skeletons: Vec<TrajectoryRecord> = levels
        .iter()
        .map(|&n| integrate_skeleton(x0, p, model, ctrl, WzLevel::new(n), cfg))
        .collect::<Result<_>>()?;
    let per_sample: Vec<Result<Vec<f64>>> = par::map_indexed(samples, |s| {
        let seed = derive_seed(master_seed, 0x5EED5, s as u64);
        let path = BrownianPath::sample(seed, cfg.t_horizon, path_level, model.k_dim())?;
        let mut sups = Vec::with_capacity(levels.len());
        for (i, &n) in levels.iter().enumerate() {
            let controlled =
                integrate_controlled(x0, p, model, &path, ctrl, WzLevel::new(n), cfg)?;
            sups.push(sup_h_sq_distance(&skeletons[i], &controlled)?);
        }
        Ok(sups)
    });
    Ok(collect_table(levels, samples, per_sample))
}

// ---------------------------------------------------------------------------
// inequality batteries
// ---------------------------------------------------------------------------

/// `η` of the strict-supercritical local monotonicity estimate,
/// `(r−3)/(2μ(r−1)) · (2/(βμ(r−1)))^{2/(r−3)}` for r > 3.
pub fn local_monotonicity_eta(mu: f64, beta: f64, r: f64) -> f64 {
    (r - 3.0) / (2.0 * mu * (r - 1.0)) * (2.0 / (beta * mu * (r - 1.0))).powf(2.0 / (r - 3.0))
}

fn drift_pair_margin(
    grid: GridSpec,
    p: &FluidParams,
    seed: u64,
    index: u64,
    extra: impl Fn(&SpectralField, &SpectralField) -> f64,
) -> Result<f64> {
    let u1 = random_field_in_range(grid, seed, 2 * index, 0.1, 10.0);
    let u2 = random_field_in_range(grid, seed, 2 * index + 1, 0.1, 10.0);
    let z = u1.sub(&u2);
    let pairing = inner_h(&ops::drift(&u1, p)?.sub(&ops::drift(&u2, p)?), &z);
    Ok(pairing + extra(&u2, &z))
}

/// Local monotonicity battery: the three regimes of the drift estimate with
/// their exact constants, evaluated on random pairs through the full
/// operator pipeline.
pub fn monotonicity_suite(
    grid: GridSpec,
    mu: f64,
    alpha: f64,
    beta: f64,
    trials: usize,
    seed: u64,
) -> Result<Vec<InequalityReport>> {
    let tol = 1e-8;
    // r = 3 with 2βμ ≥ 1: zero constant
    let p3 = FluidParams::new(mu, alpha, beta, 3.0)?;
    let crit_ok = p3.critical_ok() == Some(true);
    let margins3: Vec<Result<f64>> = par::map_indexed(trials, |i| {
        drift_pair_margin(grid, &p3, derive_seed(seed, 0xFE23, 0), i as u64, |_, _| 0.0)
    });
    // r = 5: η‖z‖²_H
    let p5 = FluidParams::new(mu, alpha, beta, 5.0)?;
    let eta = local_monotonicity_eta(mu, beta, 5.0);
    let margins5: Vec<Result<f64>> = par::map_indexed(trials, |i| {
        drift_pair_margin(grid, &p5, derive_seed(seed, 0xFE22, 0), i as u64, |_, z| {
            eta * norm_h_sq(z)
        })
    });
    // r = 3 under the subcritical-form constant 27/(32μ³)·‖u₂‖⁴_{L⁴}
    let c1 = 27.0 / (32.0 * mu.powi(3));
    let margins1: Vec<Result<f64>> = par::map_indexed(trials, |i| {
        drift_pair_margin(grid, &p3, derive_seed(seed, 0xFE21, 0), i as u64, |u2, z| {
            c1 * norm_lp_pow(u2, 3.0) * norm_h_sq(z)
        })
    });
    let worst = |ms: Vec<Result<f64>>| -> Result<f64> {
        let mut w = f64::INFINITY;
        for m in ms {
            w = w.min(m?);
        }
        Ok(w)
    };
    let mut reports = vec![
        InequalityReport::new("fe2_3_r3_zero_constant", trials, worst(margins3)?, tol),
        InequalityReport::new("fe2_2_r5_eta", trials, worst(margins5)?, tol),
        InequalityReport::new("fe2_1_r3_l4_constant", trials, worst(margins1)?, tol),
    ];
    if !crit_ok {
        // the zero-constant estimate needs 2βμ ≥ 1; flag the regime as
        // inapplicable rather than reporting a meaningless margin
        reports[0].pass = false;
        reports[0].name.push_str("_requires_2bm_ge_1");
    }
    Ok(reports)
}

/// Log-log regression slope of the forward-difference Gateaux consistency
/// error over `ε ∈ [10⁻⁶, 10⁻³]`.
fn gateaux_slope(grid: GridSpec, r: f64, seed: u64) -> Result<f64> {
    let u = random_field(grid, derive_seed(seed, 0x6A7E, 1), 1.0);
    let v = random_field(grid, derive_seed(seed, 0x6A7E, 2), 1.0);
    let deriv = ops::forchheimer_gateaux(&u, &v, r)?;
    let eps_grid = [1e-6, 1e-5, 1e-4, 1e-3];
    let mut logs = Vec::new();
    for &eps in &eps_grid {
        let mut up = u.clone();
        up.axpy(eps, &v);
        let fd = ops::forchheimer(&up, r)?
            .sub(&ops::forchheimer(&u, r)?)
            .scaled(1.0 / eps);
        let err = norm_h(&fd.sub(&deriv));
        logs.push((eps.ln(), err.max(1e-300).ln()));
    }
    let n = logs.len() as f64;
    let sx: f64 = logs.iter().map(|(x, _)| x).sum();
    let sy: f64 = logs.iter().map(|(_, y)| y).sum();
    let sxx: f64 = logs.iter().map(|(x, _)| x * x).sum();
    let sxy: f64 = logs.iter().map(|(x, y)| x * y).sum();
    Ok((n * sxy - sx * sy) / (n * sxx - sx * sx))
}

/// The operator identity battery: skew symmetry of the trilinear form, the
/// Forchheimer duality, the monotonicity and norm-comparison estimates for
/// r ∈ {3, 5}, Gateaux finite-difference consistency, the supercritical
/// growth bound on B, and the (reported, not asserted) interpolation
/// constant of the 2D trilinear estimate.
pub fn identity_suite(grid: GridSpec, trials: usize, seed: u64) -> Result<Vec<InequalityReport>> {
    let mut reports = Vec::new();

    // b0: |b(u,v,w) + b(u,w,v)| relative to the V norms
    let skew_trials = trials.clamp(1, 1000);
    let skew: Vec<Result<f64>> = par::map_indexed(skew_trials, |i| {
        let s = derive_seed(seed, 0xB0, 0);
        let u = random_field_in_range(grid, s, 3 * i as u64, 0.1, 10.0);
        let v = random_field_in_range(grid, s, 3 * i as u64 + 1, 0.1, 10.0);
        let w = random_field_in_range(grid, s, 3 * i as u64 + 2, 0.1, 10.0);
        let bvw = ops::trilinear(&u, &v, &w)?;
        let bwv = ops::trilinear(&u, &w, &v)?;
        let scale = norm_v(&u) * norm_v(&v) * norm_v(&w) + 1.0;
        Ok(-(bvw + bwv).abs() / scale)
    });
    let mut worst_skew = f64::INFINITY;
    for m in skew {
        worst_skew = worst_skew.min(m?);
    }
    reports.push(InequalityReport::new(
        "b0_skew_symmetry",
        skew_trials,
        worst_skew,
        1e-10,
    ));

    // ⟨C(u), u⟩ = ‖u‖^{r+1}_{L^{r+1}} via two computation routes,
    // plus the coercivity identity of the full drift
    for r in [3.0f64, 5.0] {
        let dual_trials = trials.clamp(1, 200);
        let duals: Vec<Result<f64>> = par::map_indexed(dual_trials, |i| {
            let s = derive_seed(seed, 0xC0 + r as u64, 0);
            let u = random_field_in_range(grid, s, i as u64, 0.1, 10.0);
            let lhs = ops::c_duality_pairing(&u, r)?;
            let rhs = norm_lp_pow(&u, r);
            Ok(-((lhs - rhs).abs() / rhs.max(1e-300)))
        });
        let mut worst = f64::INFINITY;
        for m in duals {
            worst = worst.min(m?);
        }
        reports.push(InequalityReport::new(
            &format!("c_duality_r{}", r as u32),
            dual_trials,
            worst,
            1e-10,
        ));
    }

    let coer_trials = trials.clamp(1, 200);
    let p_coer = FluidParams::new(0.7, 0.2, 1.3, 3.0)?;
    let coer: Vec<Result<f64>> = par::map_indexed(coer_trials, |i| {
        let s = derive_seed(seed, 0xCE, 0);
        let u = random_field_in_range(grid, s, i as u64, 0.1, 10.0);
        let lhs = inner_h(&ops::drift(&u, &p_coer)?, &u);
        let rhs = p_coer.mu * norm_v_sq(&u)
            + p_coer.alpha * norm_h_sq(&u)
            + p_coer.beta * norm_lp_pow(&u, p_coer.r);
        Ok(-((lhs - rhs).abs() / rhs.max(1e-300)))
    });
    let mut worst_coer = f64::INFINITY;
    for m in coer {
        worst_coer = worst_coer.min(m?);
    }
    reports.push(InequalityReport::new(
        "coercivity_identity",
        coer_trials,
        worst_coer,
        1e-10,
    ));

    // MO_c and the norm-comparison estimate, pointwise pre-projection
    for r in [3.0f64, 5.0] {
        let factor = if r <= 2.0 { 1.0 } else { (2.0f64).powf(r - 2.0) };
        let pairs: Vec<Result<(f64, f64)>> = par::map_indexed(trials, |i| {
            let s = derive_seed(seed, 0x30C + r as u64, 0);
            let u = random_field_in_range(grid, s, 2 * i as u64, 0.1, 10.0);
            let v = random_field_in_range(grid, s, 2 * i as u64 + 1, 0.1, 10.0);
            let st = ops::forchheimer_pair_stats(&u, &v, r)?;
            let mo_c = st.pairing - 0.5 * st.weight_u - 0.5 * st.weight_v;
            let a215 = factor * (st.weight_u + st.weight_v) - st.diff_lp_pow;
            Ok((mo_c, a215))
        });
        let mut worst_mo = f64::INFINITY;
        let mut worst_a215 = f64::INFINITY;
        for m in pairs {
            let (a, b) = m?;
            worst_mo = worst_mo.min(a);
            worst_a215 = worst_a215.min(b);
        }
        reports.push(InequalityReport::new(
            &format!("mo_c_r{}", r as u32),
            trials,
            worst_mo,
            1e-8,
        ));
        reports.push(InequalityReport::new(
            &format!("a215_r{}", r as u32),
            trials,
            worst_a215,
            1e-8,
        ));
    }

    // Gateaux finite-difference slope (first-order consistency or better)
    for r in [3.0f64, 5.0] {
        let slope = gateaux_slope(grid, r, seed)?;
        reports.push(InequalityReport::new(
            &format!("gateaux_fd_slope_r{}", r as u32),
            4,
            slope - 0.9,
            0.0,
        ));
    }

    // supercritical growth of B (r = 5):
    // |⟨B(u),v⟩| ≤ ‖u‖_{L^{r+1}}^{(r+1)/(r−1)} ‖u‖_H^{(r−3)/(r−1)} ‖v‖_V
    {
        let r = 5.0f64;
        let growth_trials = trials.clamp(1, 2000);
        let margins: Vec<Result<f64>> = par::map_indexed(growth_trials, |i| {
            let s = derive_seed(seed, 0x212, 0);
            let u = random_field_in_range(grid, s, 2 * i as u64, 0.1, 10.0);
            let v = random_field_in_range(grid, s, 2 * i as u64 + 1, 0.1, 10.0);
            let lhs = ops::trilinear(&u, &u, &v)?.abs();
            let lp = norm_lp_pow(&u, r).powf(1.0 / (r + 1.0));
            let rhs = lp.powf((r + 1.0) / (r - 1.0))
                * norm_h(&u).powf((r - 3.0) / (r - 1.0))
                * norm_v(&v);
            Ok(rhs * (1.0 + 1e-6) - lhs)
        });
        let mut worst = f64::INFINITY;
        for m in margins {
            worst = worst.min(m?);
        }
        reports.push(InequalityReport::new(
            "b_growth_212_r5",
            growth_trials,
            worst,
            0.0,
        ));
    }

    // 2D trilinear interpolation estimate: the constant is left generic in
    // the estimate, so the observed ratio is calibrated and reported
    {
        let cal_trials = trials.clamp(1, 500);
        let ratios: Vec<Result<f64>> = par::map_indexed(cal_trials, |i| {
            let s = derive_seed(seed, 0xB1, 0);
            let u = random_field_in_range(grid, s, 3 * i as u64, 0.1, 10.0);
            let v = random_field_in_range(grid, s, 3 * i as u64 + 1, 0.1, 10.0);
            let w = random_field_in_range(grid, s, 3 * i as u64 + 2, 0.1, 10.0);
            let b = ops::trilinear(&u, &v, &w)?.abs();
            let denom = norm_h(&u).sqrt()
                * norm_v(&u).sqrt()
                * norm_v(&v)
                * norm_h(&w).sqrt()
                * norm_v(&w).sqrt();
            Ok(b / denom.max(1e-300))
        });
        let mut observed: f64 = 0.0;
        for m in ratios {
            observed = observed.max(m?);
        }
        reports.push(InequalityReport::calibration(
            "b1_interpolation_constant",
            cal_trials,
            observed,
        ));
    }

    Ok(reports)
}

// ---------------------------------------------------------------------------
// energy budget
// ---------------------------------------------------------------------------

/// Pathwise energy accounting of a finished trajectory.
#[derive(Debug, Clone)]
pub struct EnergyBudget {
    /// Running sum of the per-step energy-identity defects.
    pub cumulative: Vec<f64>,
    pub max_abs_cumulative: f64,
    pub max_abs_step: f64,
    /// `sup_t ‖u‖²_H + ∫(‖u‖²_V + ‖u‖^{r+1}) dt`, the a-priori bound value.
    pub budget: f64,
}

/// Aggregates the per-step residuals recorded by the integrator (which
/// already include the martingale and quadratic-variation work for Itô
/// runs) into the cumulative identity defect and the a-priori budget.
pub fn energy_budget(rec: &TrajectoryRecord) -> EnergyBudget {
    let mut cumulative = Vec::with_capacity(rec.energy_residual.len());
    let mut acc = 0.0;
    let mut max_abs_cumulative: f64 = 0.0;
    let mut max_abs_step: f64 = 0.0;
    for &r in &rec.energy_residual {
        acc += r;
        cumulative.push(acc);
        max_abs_cumulative = max_abs_cumulative.max(acc.abs());
        max_abs_step = max_abs_step.max(r.abs());
    }
    let dt = rec.t_horizon / (1u64 << rec.dt_log2) as f64;
    let sup_h_sq = rec
        .h_series
        .iter()
        .fold(0.0f64, |a, &h| a.max(h * h));
    let steps = rec.energy_residual.len();
    let integral: f64 = (0..steps)
        .map(|j| dt * (rec.v_sq_series[j] + rec.lp_pow_series[j]))
        .sum();
    EnergyBudget {
        cumulative,
        max_abs_cumulative,
        max_abs_step,
        budget: sup_h_sq + integral,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::to_spectral;
    use crate::field::PhysicalField;
    use crate::noise::NoiseFamily;
    use crate::ops::leray_project;

    fn grid() -> GridSpec {
        GridSpec::new(16).unwrap()
    }

    fn taylor_green(g: GridSpec, amp: f64) -> SpectralField {
        leray_project(&to_spectral(&PhysicalField::from_fn(g, |x, y| {
            (amp * x.sin() * y.cos(), -amp * x.cos() * y.sin())
        })))
    }

    #[test]
    fn random_fields_are_valid_and_deterministic() {
        let g = grid();
        let a = random_field(g, 1, 2.5);
        let b = random_field(g, 1, 2.5);
        assert_eq!(a.coeff(1, 2), b.coeff(1, 2));
        assert!((norm_h(&a) - 2.5).abs() < 1e-12);
        assert!(a.max_divergence() < 1e-13);
        assert!(a.max_hermitian_defect() < 1e-13);
        let c = random_field(g, 2, 2.5);
        assert!(norm_h(&a.sub(&c)) > 1e-3);
        let d = random_field_in_range(g, 3, 7, 0.1, 10.0);
        let h = norm_h(&d);
        assert!((0.1..=10.0).contains(&h));
    }

    #[test]
    fn trend_rules() {
        let mk = |errs: &[(f64, f64)]| ConvergenceTable {
            rows: errs
                .iter()
                .enumerate()
                .map(|(i, &(err, ci))| ConvergenceRow {
                    level: i as u32,
                    samples: 8,
                    err,
                    ci_half_width: ci,
                })
                .collect(),
            failures: 0,
        };
        // strictly decreasing, big ratio margin
        assert!(mk(&[(1.0, 0.1), (0.5, 0.05), (0.1, 0.01)]).trend_ok(0.2));
        // one inversion inside overlapping CIs is tolerated
        assert!(mk(&[(1.0, 0.2), (0.5, 0.2), (0.6, 0.2), (0.1, 0.01)]).trend_ok(0.2));
        // inversion with disjoint CIs is a hard failure
        assert!(!mk(&[(1.0, 0.01), (0.5, 0.01), (0.8, 0.01), (0.1, 0.01)]).trend_ok(0.2));
        // two soft inversions fail
        assert!(
            !mk(&[(1.0, 0.5), (0.5, 0.5), (0.6, 0.5), (0.65, 0.5), (0.1, 0.1)]).trend_ok(0.2)
        );
        // ratio violation fails
        assert!(!mk(&[(1.0, 0.1), (0.8, 0.1), (0.5, 0.1)]).trend_ok(0.2));
    }

    #[test]
    fn zero_noise_convergence_error_is_zero() {
        let g = grid();
        let p = FluidParams::new(1.0, 0.1, 1.0, 3.0).unwrap();
        let model = NoiseModel::new(NoiseFamily::DiagonalLinear, vec![0.0; 4], g, 2.0).unwrap();
        let x0 = taylor_green(g, 0.5);
        let cfg = SolverConfig::new(0.5, 7, 16).unwrap();
        let table =
            convergence_study(&x0, &p, &model, &[3, 4], 3, 99, 7, &cfg).unwrap();
        assert_eq!(table.failures, 0);
        for row in &table.rows {
            assert_eq!(row.err, 0.0);
            assert_eq!(row.samples, 3);
        }
    }

    #[test]
    fn additive_noise_at_finest_level_leaves_time_discretization_error() {
        // with additive noise and n at the path resolution, both systems see
        // the same increments per cell; what remains is the lag and the
        // piecewise-constant reading of the drive, an O(dt)-scale residual
        // far below the coarse-level error
        let g = grid();
        let p = FluidParams::new(1.0, 0.1, 1.0, 3.0).unwrap();
        let model = NoiseModel::new(NoiseFamily::Additive, vec![0.4; 7], g, 2.0).unwrap();
        let x0 = taylor_green(g, 0.5);
        let cfg = SolverConfig::new(0.5, 8, 16).unwrap();
        let table = convergence_study(&x0, &p, &model, &[2, 7], 4, 5, 7, &cfg).unwrap();
        let coarse = table.rows[0].err;
        let finest = table.rows[1].err;
        assert!(finest > 0.0);
        assert!(
            finest < 0.05 * coarse,
            "finest {finest} not far below coarse {coarse}"
        );
    }

    #[test]
    fn integrator_aborts_are_flagged_not_fatal() {
        // blow-up parameters: every sample aborts, the study still returns
        let g = grid();
        let p = FluidParams::unchecked(1e-6, 0.0, 1e8, 5.0);
        let model =
            NoiseModel::new(NoiseFamily::DiagonalLinear, vec![0.1, 0.1], g, 2.0).unwrap();
        let x0 = taylor_green(g, 1e4);
        let cfg = SolverConfig::new(0.5, 4, 4).unwrap();
        let table = convergence_study(&x0, &p, &model, &[2], 3, 11, 4, &cfg).unwrap();
        assert_eq!(table.failures, 3);
        assert_eq!(table.rows[0].samples, 0);
        assert_eq!(table.rows[0].err, 0.0);
    }

    #[test]
    fn skeleton_consistency_is_bitwise_zero() {
        let g = grid();
        let p = FluidParams::new(1.0, 0.1, 1.0, 3.0).unwrap();
        let cfg = SolverConfig::new(0.5, 8, 16).unwrap();
        let x0 = taylor_green(g, 0.5);
        for fam in [NoiseFamily::Additive, NoiseFamily::DiagonalLinear] {
            let model = NoiseModel::new(fam, vec![0.3, 0.2, 0.1, 0.05], g, 2.0).unwrap();
            let path = BrownianPath::sample(7, 0.5, 8, 4).unwrap();
            let dev = skeleton_consistency(&x0, &p, &model, &path, 3, &cfg).unwrap();
            assert_eq!(dev, 0.0);
        }
    }

    #[test]
    fn skeleton_sensitivity_to_control_perturbation() {
        let g = grid();
        let p = FluidParams::new(1.0, 0.1, 1.0, 3.0).unwrap();
        let model =
            NoiseModel::new(NoiseFamily::DiagonalLinear, vec![0.3, 0.2, 0.1, 0.05], g, 2.0)
                .unwrap();
        let path = BrownianPath::sample(11, 0.5, 8, 4).unwrap();
        let cfg = SolverConfig::new(0.5, 8, 16).unwrap();
        let x0 = taylor_green(g, 0.5);
        let lvl = WzLevel::new(3);
        let wz = integrate_wz(&x0, &p, &model, &path, lvl, &cfg).unwrap();
        let mut ctrl = ControlSignal::from_wz(&path, lvl).unwrap();
        ctrl.values_mut()[4][0] += 1e-3;
        let skel = integrate_skeleton(&x0, &p, &model, &ctrl, lvl, &cfg).unwrap();
        assert!(skel.sup_h_distance(&wz).unwrap() > 0.0);
    }

    #[test]
    fn zero_noise_controlled_convergence_error_is_zero() {
        let g = grid();
        let p = FluidParams::new(1.0, 0.1, 1.0, 3.0).unwrap();
        let model = NoiseModel::new(NoiseFamily::DiagonalLinear, vec![0.0; 4], g, 2.0).unwrap();
        let x0 = taylor_green(g, 0.5);
        let cfg = SolverConfig::new(0.5, 7, 16).unwrap();
        let ctrl = ControlSignal::zero(3, 4);
        let table = skeleton_wz_convergence(&x0, &p, &model, &ctrl, &[3, 4], 3, 17, 7, &cfg)
            .unwrap();
        for row in &table.rows {
            assert_eq!(row.err, 0.0);
        }
    }

    #[test]
    fn monotonicity_margins_nonnegative_small_sample() {
        let reports = monotonicity_suite(grid(), 1.0, 0.0, 1.0, 60, 12345).unwrap();
        assert_eq!(reports.len(), 3);
        for r in &reports {
            assert!(r.pass, "{}: worst {}", r.name, r.worst_margin);
        }
        // equal fields: tight-trivial zero margin on the zero-constant form
        let p3 = FluidParams::new(1.0, 0.0, 1.0, 3.0).unwrap();
        let u = random_field(grid(), 5, 1.0);
        let z = u.sub(&u);
        let m = inner_h(
            &ops::drift(&u, &p3).unwrap().sub(&ops::drift(&u, &p3).unwrap()),
            &z,
        );
        assert_eq!(m, 0.0);
    }

    #[test]
    fn monotonicity_flags_subcritical_regime() {
        // 2βμ = 0.02 < 1: the zero-constant estimate is not applicable
        let reports = monotonicity_suite(grid(), 0.1, 0.0, 0.1, 5, 1).unwrap();
        assert!(!reports[0].pass);
        assert!(reports[0].name.contains("requires_2bm_ge_1"));
    }

    #[test]
    fn eta_r5_is_one_eighth() {
        assert!((local_monotonicity_eta(1.0, 1.0, 5.0) - 0.125).abs() < 1e-15);
    }

    #[test]
    fn identity_suite_small_sample_passes() {
        let reports = identity_suite(grid(), 60, 2024).unwrap();
        for r in &reports {
            assert!(r.pass, "{}: worst {}", r.name, r.worst_margin);
        }
        let names: Vec<&str> = reports.iter().map(|r| r.name.as_str()).collect();
        for expect in [
            "b0_skew_symmetry",
            "c_duality_r3",
            "c_duality_r5",
            "coercivity_identity",
            "mo_c_r3",
            "a215_r3",
            "mo_c_r5",
            "a215_r5",
            "gateaux_fd_slope_r3",
            "gateaux_fd_slope_r5",
            "b_growth_212_r5",
            "b1_interpolation_constant",
        ] {
            assert!(names.contains(&expect), "missing {expect}");
        }
    }

    #[test]
    fn energy_budget_zero_trajectory() {
        let g = grid();
        let p = FluidParams::new(1.0, 0.1, 1.0, 3.0).unwrap();
        let model = NoiseModel::new(NoiseFamily::DiagonalLinear, vec![0.0; 4], g, 2.0).unwrap();
        let path = BrownianPath::zeroed(0.5, 6, 4).unwrap();
        let cfg = SolverConfig::new(0.5, 6, 16).unwrap();
        let rec =
            integrate_scbf(&SpectralField::zero(g), &p, &model, &path, &cfg).unwrap();
        let budget = energy_budget(&rec);
        assert_eq!(budget.max_abs_cumulative, 0.0);
        assert_eq!(budget.budget, 0.0);
    }

    #[test]
    fn energy_budget_halves_with_dt() {
        let g = grid();
        let p = FluidParams::new(1.0, 0.1, 1.0, 3.0).unwrap();
        let model = NoiseModel::new(NoiseFamily::DiagonalLinear, vec![0.0; 4], g, 2.0).unwrap();
        let x0 = taylor_green(g, 1.0);
        let mut max_cums = Vec::new();
        for dt_log2 in [6, 7] {
            let path = BrownianPath::zeroed(0.5, 6, 4).unwrap();
            let cfg = SolverConfig::new(0.5, dt_log2, 16).unwrap();
            let rec = integrate_scbf(&x0, &p, &model, &path, &cfg).unwrap();
            max_cums.push(energy_budget(&rec).max_abs_cumulative);
        }
        assert!(max_cums[0] / max_cums[1] > 1.8, "{max_cums:?}");
    }

    #[test]
    fn budget_bound_finite_on_benchmark_style_run() {
        let g = grid();
        let p = FluidParams::new(1.0, 0.1, 1.0, 3.0).unwrap();
        let model =
            NoiseModel::new(NoiseFamily::DiagonalLinear, vec![0.3, 0.2, 0.1, 0.05], g, 2.0)
                .unwrap();
        let path = BrownianPath::sample(3, 0.5, 8, 4).unwrap();
        let cfg = SolverConfig::new(0.5, 8, 32).unwrap();
        let rec = integrate_scbf(&taylor_green(g, 0.5), &p, &model, &path, &cfg).unwrap();
        let budget = energy_budget(&rec);
        assert!(budget.budget.is_finite() && budget.budget > 0.0);
    }
}
