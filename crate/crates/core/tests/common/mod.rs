//! Shared test oracles and invariant checks.
//!
//! Everything here is independent of the implementation paths it validates:
//! the steady state comes from an algebraic root finder, the reduction
//! factor from a dense grid, and the channel truth from a truncated Poisson
//! series.

#![allow(dead_code)]

use std::sync::OnceLock;
use tbqkd_core::laser::{
    integrate, integrate_free_running, LaserParams, LaserState, PumpWaveform, Q_FLOOR,
};
use tbqkd_core::scenario::{run_scenario, ScenarioConfig, ScenarioResult};
use tbqkd_core::security::ChannelParams;
use tbqkd_core::{InjectionParams, StateSymbol};

pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;

/// Steady state of the free-running rate equations at constant pump,
/// found by bisection on the carrier-equation residual with the carrier
/// number eliminated algebraically at each trial photon number.
pub fn steady_state_oracle(p: &LaserParams, current: f64) -> (f64, f64) {
    let c_p = p.eta * p.photon_energy / (2.0 * p.gamma_conf * p.tau_ph);
    let n_of_q = |q: f64| {
        let s = (1.0 + 2.0 * p.gamma_p * c_p * q).sqrt();
        let c = p.c_sp * p.tau_ph / (q * p.tau_e);
        let span = p.n_th - p.n_tr;
        (s + p.n_tr / span) / (1.0 / span + s * c)
    };
    let residual = |q: f64| {
        let n = n_of_q(q);
        let s = (1.0 + 2.0 * p.gamma_p * c_p * q).sqrt();
        let g = (n - p.n_tr) / (p.n_th - p.n_tr) / s;
        current / ELEMENTARY_CHARGE - n / p.tau_e - q * g / (p.gamma_conf * p.tau_ph)
    };
    let (mut lo, mut hi) = (1.0_f64, 1e9_f64);
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if residual(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let q = (lo * hi).sqrt();
    (n_of_q(q), q)
}

/// Dense-grid maximization of the three-state reduction objective.
pub fn fl_dense_grid_oracle(omega: f64, theta: f64, npts: usize) -> (f64, f64) {
    assert!(omega > 0.0 && theta > 0.0);
    let omega_t = (1.0 - omega) / omega;
    let theta_t = (1.0 - theta) / theta;
    let mut best = f64::NEG_INFINITY;
    for i in 0..=npts {
        let d = i as f64 / npts as f64;
        let s = (theta_t * (1.0 - d * d)).max(0.0).sqrt();
        let b = omega_t * (theta_t + 1.0) - 1.0 - d * d * (theta_t - 1.0) - 2.0 * d * s;
        if b < 0.0 {
            continue;
        }
        let eps = theta * (theta_t * d + s + b.sqrt());
        let obj = eps * eps + d * d;
        if obj > best {
            best = obj;
        }
    }
    let kappa = (omega * best).min(0.5);
    let h = if kappa <= 0.0 || kappa >= 1.0 {
        0.0
    } else {
        -kappa * kappa.log2() - (1.0 - kappa) * (1.0 - kappa).log2()
    };
    ((1.0 - h).max(0.0), kappa)
}

/// Truncated-Poisson channel truth with n-photon yields and error rates.
pub struct PoissonOracle {
    /// Per-photon survival probability `t * eta_det`.
    pub survive: f64,
    pub p_dc: f64,
    pub e_d: f64,
}

impl PoissonOracle {
    pub fn new(ch: &ChannelParams) -> Self {
        Self {
            survive: ch.transparency() * ch.eta_det,
            p_dc: ch.p_dc,
            e_d: ch.e_d,
        }
    }

    /// Yield of an n-photon pulse.
    pub fn yield_n(&self, n: u32) -> f64 {
        1.0 - (1.0 - self.p_dc) * (1.0 - self.survive).powi(n as i32)
    }

    /// Error rate of an n-photon pulse (errors add: dark counts contribute
    /// p_dc/2, photon-borne clicks E_d each).
    pub fn error_n(&self, n: u32) -> f64 {
        let eta_n = 1.0 - (1.0 - self.survive).powi(n as i32);
        (self.p_dc / 2.0 + self.e_d * eta_n) / self.yield_n(n)
    }

    /// Series gain and error rate at intensity `gamma`, truncated at n = 50.
    /// Panics if the Poisson tail above the truncation exceeds 1e-15.
    pub fn gain_error(&self, gamma: f64) -> (f64, f64) {
        let mut p_n = (-gamma).exp();
        let mut mass = 0.0;
        let mut q = 0.0;
        let mut eq = 0.0;
        for n in 0..=50u32 {
            if n > 0 {
                p_n *= gamma / n as f64;
            }
            mass += p_n;
            let y = self.yield_n(n);
            q += p_n * y;
            eq += p_n * (self.p_dc / 2.0 + self.e_d * (1.0 - (1.0 - self.survive).powi(n as i32)));
        }
        assert!(1.0 - mass < 1e-15, "Poisson tail too heavy: {}", 1.0 - mass);
        (q, if q > 0.0 { eq / q } else { 0.0 })
    }
}

/// Reference scenario run shared by the invariant checks (criterion-level
/// tests that need their own timing run it themselves).
pub fn reference_scenario() -> &'static ScenarioResult {
    static CACHE: OnceLock<ScenarioResult> = OnceLock::new();
    CACHE.get_or_init(|| run_scenario(&ScenarioConfig::reference()).expect("reference scenario"))
}

/// Designated absolute bin indices of a sequence (gap bins excluded).
pub fn designated_bins(seq: &[StateSymbol], bins_per_slot: usize) -> Vec<bool> {
    let mut flags = vec![false; seq.len() * bins_per_slot];
    for (k, s) in seq.iter().enumerate() {
        let b0 = k * bins_per_slot;
        match s {
            StateSymbol::Z0 => flags[b0] = true,
            StateSymbol::Z1 => flags[b0 + 1] = true,
            StateSymbol::X0 => {
                flags[b0] = true;
                flags[b0 + 1] = true;
            }
        }
    }
    flags
}

/// Per-bin integrals of a power trace on the reference slot grid.
pub fn bin_energies(power: &[f64], dt: f64, bin_period: f64) -> Vec<f64> {
    let n_bins = ((power.len() as f64 * dt) / bin_period).floor() as usize;
    (0..n_bins)
        .map(|b| {
            let a = ((b as f64 * bin_period) / dt).round() as usize;
            let z = (((b + 1) as f64 * bin_period) / dt).round() as usize;
            power[a.min(power.len())..z.min(power.len())]
                .iter()
                .sum::<f64>()
                * dt
        })
        .collect()
}

/// Per-bin maxima of a power trace on the reference slot grid.
pub fn bin_peaks(power: &[f64], dt: f64, bin_period: f64) -> Vec<f64> {
    let n_bins = ((power.len() as f64 * dt) / bin_period).floor() as usize;
    (0..n_bins)
        .map(|b| {
            let a = ((b as f64 * bin_period) / dt).round() as usize;
            let z = (((b + 1) as f64 * bin_period) / dt).round() as usize;
            power[a.min(power.len())..z.min(power.len())]
                .iter()
                .fold(0.0_f64, |m, &v| m.max(v))
        })
        .collect()
}

/// Relaxed initial states for constant-drive experiments.
pub fn relaxed_pair(dt: f64) -> (LaserState, LaserState) {
    let master = LaserParams::default_master();
    let slave = LaserParams::default_slave();
    let i_th = slave.threshold_current();
    let m = tbqkd_core::laser::relax_to_bias(&master, 0.95 * i_th, 5e-9, dt).unwrap();
    let s = tbqkd_core::laser::relax_to_bias(&slave, 0.9 * i_th, 5e-9, dt).unwrap();
    (m, s)
}

/// Constant-drive joint run used by the locking checks.
pub fn constant_injection_run(
    kappa_scale: f64,
    dt: f64,
    duration: f64,
) -> (
    tbqkd_core::laser::FieldTrajectory,
    tbqkd_core::laser::FieldTrajectory,
    InjectionParams,
) {
    let master = LaserParams::default_master();
    let slave = LaserParams::default_slave();
    let mut inj = InjectionParams::default_coupling();
    inj.kappa_inj *= kappa_scale;
    let i_th = slave.threshold_current();
    let (m0, s0) = relaxed_pair(dt);
    let md = PumpWaveform::constant(2.0 * i_th, duration, dt);
    let sd = PumpWaveform::constant(1.1 * i_th, duration, dt);
    let (mt, st) = integrate(&master, &slave, &inj, &md, &sd, (m0, s0), dt).unwrap();
    (mt, st, inj)
}

/// Free-running run helper.
pub fn free_run(
    params: &LaserParams,
    current: f64,
    duration: f64,
    dt: f64,
) -> tbqkd_core::laser::FieldTrajectory {
    let drive = PumpWaveform::constant(current, duration, dt);
    integrate_free_running(
        params,
        &drive,
        LaserState {
            n: 0.0,
            q: Q_FLOOR,
            phi: 0.0,
        },
        dt,
    )
    .unwrap()
}
