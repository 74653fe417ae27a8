//! Time integration of the four systems on shared Brownian paths.
//!
//! One exponential-Euler core drives everything: the stiff linear part
//! `μA + α` is applied exactly through `e^{−(μ|k|²+α)dt}`, the convective
//! and Forchheimer terms explicitly at the left endpoint. Per system:
//!
//! * Itô CBF        — `u ← E(u − dt[B+βC] + G(u)ΔW)`;
//! * Wong-Zakai     — `u ← E(u + dt[−B−βC + G(u)Ẇⁿ − ½T̃rₙ(u)])`;
//! * skeleton       — the same with the control `k(t)` in place of `Ẇⁿ`;
//! * controlled     — `u ← E(u − dt[B+βC] + G(u)ΔW + dt·G(u)(k − Ẇⁿ))`,
//!   no correction term.
//!
//! The Wong-Zakai integrator literally runs the skeleton core on the control
//! extracted from the path, so the identity `Y_{Ẇⁿ} = uⁿ` holds bitwise.

use crate::error::Error;
use crate::field::{inner_h, norm_h_sq, norm_lp_pow, norm_v_sq, same_grid, SpectralField};
use crate::grid::FluidParams;
use crate::noise::{BrownianPath, NoiseModel, WzLevel};
use crate::ops;
use crate::Result;

/// Abort threshold on ‖u‖_H; the a-priori energy bounds rule this out at
/// sane parameters, so crossing it means the run blew up.
const BLOWUP_H_NORM: f64 = 1e10;

/// Time-stepping configuration. The step is the dyadic fraction
/// `dt = T/2^dt_log2`, which makes every divisibility constraint an integer
/// comparison.
#[derive(Debug, Clone, Copy)]
pub struct SolverConfig {
    pub t_horizon: f64,
    pub dt_log2: u32,
    /// Snapshot every `record_stride` steps (the initial and final states are
    /// always recorded).
    pub record_stride: usize,
    nonlinear_enabled: bool,
}

impl SolverConfig {
    pub fn new(t_horizon: f64, dt_log2: u32, record_stride: usize) -> Result<Self> {
        if t_horizon <= 0.0 || !t_horizon.is_finite() {
            return Err(Error::InvalidParam(format!(
                "t_horizon must be positive and finite, got {t_horizon}"
            )));
        }
        if dt_log2 == 0 || dt_log2 > 26 {
            return Err(Error::InvalidParam(format!(
                "dt_log2 must be in 1..=26, got {dt_log2}"
            )));
        }
        if record_stride == 0 {
            return Err(Error::InvalidParam("record_stride must be >= 1".into()));
        }
        Ok(SolverConfig {
            t_horizon,
            dt_log2,
            record_stride,
            nonlinear_enabled: true,
        })
    }

    /// Disables B and C; the remaining dynamics decays mode-wise as
    /// `e^{−(μ|k|²+α)t}`, which validation runs compare against.
    pub fn with_nonlinear_disabled(mut self) -> Self {
        self.nonlinear_enabled = false;
        self
    }

    pub fn dt(&self) -> f64 {
        self.t_horizon / (1u64 << self.dt_log2) as f64
    }

    pub fn steps(&self) -> usize {
        1usize << self.dt_log2
    }
}

/// Piecewise-constant control `k : [0,T] → ℝ^{k_dim}` on a dyadic mesh of
/// `2^mesh_log2` cells.
#[derive(Debug, Clone)]
pub struct ControlSignal {
    mesh_log2: u32,
    k_dim: usize,
    values: Vec<Vec<f64>>,
}

impl ControlSignal {
    pub fn piecewise_constant(mesh_log2: u32, values: Vec<Vec<f64>>) -> Result<Self> {
        let cells = 1usize << mesh_log2;
        if values.len() != cells {
            return Err(Error::InvalidParam(format!(
                "control needs {cells} cells, got {}",
                values.len()
            )));
        }
        let k_dim = values.first().map(|v| v.len()).unwrap_or(0);
        if k_dim == 0 || values.iter().any(|v| v.len() != k_dim) {
            return Err(Error::InvalidParam(
                "control cells must share a nonzero dimension".into(),
            ));
        }
        Ok(ControlSignal {
            mesh_log2,
            k_dim,
            values,
        })
    }

    pub fn zero(mesh_log2: u32, k_dim: usize) -> Self {
        ControlSignal {
            mesh_log2,
            k_dim,
            values: vec![vec![0.0; k_dim]; 1usize << mesh_log2],
        }
    }

    /// The realized Wong-Zakai derivative `Ẇⁿ` as a control signal; feeding
    /// it to the skeleton integrator reproduces the approximating system
    /// exactly.
    pub fn from_wz(path: &BrownianPath, lvl: WzLevel) -> Result<Self> {
        Ok(ControlSignal {
            mesh_log2: lvl.n,
            k_dim: path.k_dim(),
            values: path.wz_cells(lvl)?,
        })
    }

    pub fn mesh_log2(&self) -> u32 {
        self.mesh_log2
    }

    pub fn k_dim(&self) -> usize {
        self.k_dim
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.values
    }

    /// `‖k‖_{L²(0,T;K)}`.
    pub fn l2_norm(&self, t_horizon: f64) -> f64 {
        let cell_dt = t_horizon / (1u64 << self.mesh_log2) as f64;
        let sum: f64 = self
            .values
            .iter()
            .map(|v| v.iter().map(|x| x * x).sum::<f64>())
            .sum();
        (sum * cell_dt).sqrt()
    }

    /// Rescales to a target L² norm (no-op for the zero signal).
    pub fn normalized(mut self, t_horizon: f64, target: f64) -> Self {
        let norm = self.l2_norm(t_horizon);
        if norm > 0.0 {
            let s = target / norm;
            for cell in self.values.iter_mut() {
                for x in cell.iter_mut() {
                    *x *= s;
                }
            }
        }
        self
    }

    #[inline]
    fn at_step(&self, step: usize, dt_log2: u32) -> &[f64] {
        &self.values[step >> (dt_log2 - self.mesh_log2)]
    }
}

/// Per-step scalar diagnostics plus snapshots of the state at the record
/// stride. `h_series` has one entry per step boundary; `v_sq_series` and
/// `lp_pow_series` are left-endpoint values entering the energy ledger;
/// `energy_residual` is the per-step defect of the discrete energy identity
/// (martingale and quadratic-variation terms included for Itô runs).
#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub t_horizon: f64,
    pub dt_log2: u32,
    pub times: Vec<f64>,
    pub snapshots: Vec<SpectralField>,
    pub h_series: Vec<f64>,
    pub v_sq_series: Vec<f64>,
    pub lp_pow_series: Vec<f64>,
    pub energy_residual: Vec<f64>,
    /// `dt · μ · max|k|²`, the explicit-stability diagnostic of the exact
    /// linear factor (recorded, not a constraint).
    pub stability_number: f64,
}

impl TrajectoryRecord {
    pub fn final_field(&self) -> &SpectralField {
        self.snapshots.last().expect("at least the initial snapshot")
    }

    /// `sup_t ‖a(t) − b(t)‖_H` over the common snapshot times.
    pub fn sup_h_distance(&self, other: &TrajectoryRecord) -> Result<f64> {
        if self.times.len() != other.times.len() {
            return Err(Error::InvalidParam(format!(
                "records have {} vs {} snapshots",
                self.times.len(),
                other.times.len()
            )));
        }
        let mut worst: f64 = 0.0;
        for (a, b) in self.snapshots.iter().zip(other.snapshots.iter()) {
            worst = worst.max(norm_h_sq(&a.sub(b)).sqrt());
        }
        Ok(worst)
    }
}

enum DriveKind<'a> {
    /// Itô increments from the path (the CBF system itself).
    Ito { path: &'a BrownianPath },
    /// Deterministic drive `G(u)k(t)` with the level-n correction.
    Skeleton {
        ctrl: &'a ControlSignal,
        corr: WzLevel,
    },
    /// Itô increments plus `G(u)(k − Ẇⁿ)` and no correction.
    Controlled {
        path: &'a BrownianPath,
        wz: ControlSignal,
        ctrl: &'a ControlSignal,
    },
}

fn check_mesh(cfg: &SolverConfig, mesh_log2: u32) -> Result<()> {
    if cfg.dt_log2 < mesh_log2 {
        Err(Error::StepMeshMismatch {
            dt_log2: cfg.dt_log2,
            mesh_log2,
        })
    } else {
        Ok(())
    }
}

fn check_path(cfg: &SolverConfig, path: &BrownianPath, model: &NoiseModel) -> Result<()> {
    if path.t_horizon() != cfg.t_horizon {
        return Err(Error::InvalidParam(format!(
            "path horizon {} does not match solver horizon {}",
            path.t_horizon(),
            cfg.t_horizon
        )));
    }
    if path.k_dim() != model.k_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.k_dim(),
            got: path.k_dim(),
        });
    }
    Ok(())
}

/// Itô CBF system driven by the stored increments (Euler–Maruyama in time,
/// left-endpoint noise, exact linear factor).
pub fn integrate_scbf(
    x0: &SpectralField,
    p: &FluidParams,
    model: &NoiseModel,
    path: &BrownianPath,
    cfg: &SolverConfig,
) -> Result<TrajectoryRecord> {
    check_path(cfg, path, model)?;
    run(x0, p, model, cfg, DriveKind::Ito { path })
}

/// Wong-Zakai approximating system at level `n`: piecewise-constant lagged
/// drive `G(u)Ẇⁿ` and drift correction `−½T̃rₙ(u)`. Delegates to the
/// skeleton core on the extracted control, so the two are bitwise equal.
pub fn integrate_wz(
    x0: &SpectralField,
    p: &FluidParams,
    model: &NoiseModel,
    path: &BrownianPath,
    lvl: WzLevel,
    cfg: &SolverConfig,
) -> Result<TrajectoryRecord> {
    check_path(cfg, path, model)?;
    let ctrl = ControlSignal::from_wz(path, lvl)?;
    integrate_skeleton(x0, p, model, &ctrl, lvl, cfg)
}

/// Deterministic controlled skeleton: `G(Y)k(t)` drive and `−½T̃rₙ(Y)`
/// correction; consumes no randomness.
pub fn integrate_skeleton(
    x0: &SpectralField,
    p: &FluidParams,
    model: &NoiseModel,
    ctrl: &ControlSignal,
    lvl: WzLevel,
    cfg: &SolverConfig,
) -> Result<TrajectoryRecord> {
    check_mesh(cfg, ctrl.mesh_log2())?;
    if ctrl.k_dim() != model.k_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.k_dim(),
            got: ctrl.k_dim(),
        });
    }
    if lvl.n == 0 || lvl.n as usize > model.k_dim() {
        return Err(Error::LevelOutOfRange {
            level: lvl.n,
            max_level: u32::MAX,
            k_dim: model.k_dim(),
        });
    }
    run(x0, p, model, cfg, DriveKind::Skeleton { ctrl, corr: lvl })
}

/// Controlled stochastic system: Itô noise, the sign-flipped Wong-Zakai
/// drive `−G(u)Ẇⁿ`, the control drive `+G(u)k`, and no correction term.
pub fn integrate_controlled(
    x0: &SpectralField,
    p: &FluidParams,
    model: &NoiseModel,
    path: &BrownianPath,
    ctrl: &ControlSignal,
    lvl: WzLevel,
    cfg: &SolverConfig,
) -> Result<TrajectoryRecord> {
    check_path(cfg, path, model)?;
    check_mesh(cfg, ctrl.mesh_log2())?;
    check_mesh(cfg, lvl.n)?;
    if ctrl.k_dim() != model.k_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.k_dim(),
            got: ctrl.k_dim(),
        });
    }
    let wz = ControlSignal::from_wz(path, lvl)?;
    run(
        x0,
        p,
        model,
        cfg,
        DriveKind::Controlled { path, wz, ctrl },
    )
}

fn run(
    x0: &SpectralField,
    p: &FluidParams,
    model: &NoiseModel,
    cfg: &SolverConfig,
    drive: DriveKind<'_>,
) -> Result<TrajectoryRecord> {
    same_grid(x0.grid(), model.grid())?;
    if let DriveKind::Skeleton { ctrl, .. } = &drive {
        check_mesh(cfg, ctrl.mesh_log2())?;
    }
    let grid = x0.grid();
    let n = grid.n();
    let dt = cfg.dt();
    let steps = cfg.steps();
    let cutoff = grid.cutoff() as f64;
    let stability_number = dt * p.mu * 2.0 * cutoff * cutoff;

    // exact factor for the stiff linear part, per mode bucket
    let mut exp_factor = vec![0.0f64; n * n];
    for iy in 0..n {
        let ky = grid.wavenumber(iy) as f64;
        for ix in 0..n {
            let kx = grid.wavenumber(ix) as f64;
            exp_factor[iy * n + ix] = (-(p.mu * (kx * kx + ky * ky) + p.alpha) * dt).exp();
        }
    }

    let mut u = x0.clone();
    let mut times = Vec::new();
    let mut snapshots = Vec::new();
    let mut h_series = Vec::with_capacity(steps + 1);
    let mut v_sq_series = Vec::with_capacity(steps);
    let mut lp_pow_series = Vec::with_capacity(steps);
    let mut energy_residual = Vec::with_capacity(steps);

    let h0_sq = norm_h_sq(&u);
    h_series.push(h0_sq.sqrt());
    times.push(0.0);
    snapshots.push(u.clone());

    let mut zbuf = vec![0.0f64; model.k_dim()];
    let mut h_prev_sq = h0_sq;

    for j in 0..steps {
        let v_sq = norm_v_sq(&u);
        v_sq_series.push(v_sq);

        // explicit nonlinear drift at the left endpoint
        let mut rhs = u.clone();
        let mut lp_pow = 0.0;
        let mut b_pairing = 0.0;
        if cfg.nonlinear_enabled {
            let b = ops::convective(&u, &u)?;
            b_pairing = inner_h(&b, &u);
            rhs.axpy(-dt, &b);
            if p.beta != 0.0 {
                let (c, lp) = ops::forchheimer_with_lp(&u, p.r)?;
                lp_pow = lp;
                rhs.axpy(-dt * p.beta, &c);
            }
        }
        lp_pow_series.push(lp_pow);

        // drive, correction and noise terms; track their energy pairings
        let mut drive_pairing = 0.0;
        let mut corr_pairing = 0.0;
        let mut noise_pairing = 0.0;
        let mut noise_quad = 0.0;
        match &drive {
            DriveKind::Ito { path } => {
                for (mode, z) in zbuf.iter_mut().enumerate() {
                    *z = path.increment_at(mode, cfg.dt_log2, j);
                }
                let gw = model.apply_g(&u, &zbuf)?;
                noise_pairing = inner_h(&gw, &u);
                noise_quad = norm_h_sq(&gw);
                rhs.axpy(1.0, &gw);
            }
            DriveKind::Skeleton { ctrl, corr } => {
                let z = ctrl.at_step(j, cfg.dt_log2);
                let gz = model.apply_g(&u, z)?;
                drive_pairing = inner_h(&gz, &u);
                rhs.axpy(dt, &gz);
                let tr = model.correction_tr(&u, corr.n as usize)?;
                corr_pairing = inner_h(&tr, &u);
                rhs.axpy(-0.5 * dt, &tr);
            }
            DriveKind::Controlled { path, wz, ctrl } => {
                for (mode, z) in zbuf.iter_mut().enumerate() {
                    *z = path.increment_at(mode, cfg.dt_log2, j);
                }
                let gw = model.apply_g(&u, &zbuf)?;
                noise_pairing = inner_h(&gw, &u);
                noise_quad = norm_h_sq(&gw);
                rhs.axpy(1.0, &gw);
                let kz = ctrl.at_step(j, cfg.dt_log2);
                let wzz = wz.at_step(j, cfg.dt_log2);
                for ((z, k), w) in zbuf.iter_mut().zip(kz.iter()).zip(wzz.iter()) {
                    *z = k - w;
                }
                let gz = model.apply_g(&u, &zbuf)?;
                drive_pairing = inner_h(&gz, &u);
                rhs.axpy(dt, &gz);
            }
        }

        // exact linear factor
        for ((cx, cy), e) in rhs.cx.iter_mut().zip(rhs.cy.iter_mut()).zip(&exp_factor) {
            *cx *= *e;
            *cy *= *e;
        }
        u = rhs;

        let h_sq = norm_h_sq(&u);
        if !h_sq.is_finite() || h_sq.sqrt() > BLOWUP_H_NORM {
            return Err(Error::BlowUp {
                step: j,
                h_norm: h_sq.sqrt(),
            });
        }
        h_series.push(h_sq.sqrt());

        // discrete energy identity: ½Δ‖u‖² + dt⟨M(u),u⟩ − drive/noise work
        let dissipation = if cfg.nonlinear_enabled {
            p.mu * v_sq + p.alpha * h_prev_sq + p.beta * lp_pow + b_pairing
        } else {
            p.mu * v_sq + p.alpha * h_prev_sq
        };
        energy_residual.push(
            0.5 * (h_sq - h_prev_sq) + dt * dissipation - dt * drive_pairing
                + 0.5 * dt * corr_pairing
                - noise_pairing
                - 0.5 * noise_quad,
        );
        h_prev_sq = h_sq;

        if (j + 1) % cfg.record_stride == 0 || j + 1 == steps {
            times.push((j + 1) as f64 * dt);
            snapshots.push(u.clone());
        }
    }
    lp_pow_series.push(if cfg.nonlinear_enabled && p.beta != 0.0 {
        norm_lp_pow(&u, p.r)
    } else {
        0.0
    });
    v_sq_series.push(norm_v_sq(&u));

    Ok(TrajectoryRecord {
        t_horizon: cfg.t_horizon,
        dt_log2: cfg.dt_log2,
        times,
        snapshots,
        h_series,
        v_sq_series,
        lp_pow_series,
        energy_residual,
        stability_number,
    })
}
