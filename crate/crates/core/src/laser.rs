//! Coupled master/slave semiconductor-laser rate equations with optical
//! injection.
//!
//! State per laser is `(N, Q, phi)`: carrier number, intracavity photon
//! number, and field phase. The master runs free; the slave sees the master
//! through unidirectional injection terms
//! `2*kappa*sqrt(Q_m*Q)*cos(arg)` (photon number) and
//! `kappa*sqrt(Q_m/Q)*sin(arg)` (phase), with
//! `arg = delta_omega*t + phi_m - phi`. Intensity equations use the
//! compression-saturated gain; phase equations use the linear gain.
//! Integration is classical fixed-step RK4.

use crate::rng::PulseRng;
use std::f64::consts::TAU;
use thiserror::Error;

/// Elementary charge (C), exact SI value.
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
/// One electron-volt in joules.
pub const EV: f64 = 1.602_176_634e-19;

/// Photon-number floor used when evaluating `sqrt(Q_m/Q)`; the phase of an
/// empty field is meaningless and the floor keeps the ODE well-posed.
pub const Q_FLOOR: f64 = 1e-6;

/// Largest negative excursion (in photons/carriers) tolerated from the
/// integrator before a step is declared divergent; smaller undershoots are
/// clamped to zero.
const NEGATIVE_TOL: f64 = 1.0;

#[derive(Debug, Error)]
pub enum LaserError {
    #[error("invalid laser parameters: {0}")]
    InvalidParams(String),
    #[error("invalid drive: {0}")]
    InvalidDrive(String),
    #[error("integration diverged at t = {t_s:.3e} s: {detail}")]
    Diverged { t_s: f64, detail: String },
    #[error("window selects no samples")]
    EmptyWindow,
    #[error("trajectories are not on a common grid")]
    GridMismatch,
}

/// Physical constants of one laser diode.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LaserParams {
    /// Photon lifetime (s).
    pub tau_ph: f64,
    /// Electron (carrier) lifetime (s).
    pub tau_e: f64,
    /// Quantum differential output (dimensionless).
    pub eta: f64,
    /// Threshold carrier number.
    pub n_th: f64,
    /// Transparency carrier number.
    pub n_tr: f64,
    /// Photon energy (J).
    pub photon_energy: f64,
    /// Spontaneous emission coupling factor.
    pub c_sp: f64,
    /// Confinement factor.
    pub gamma_conf: f64,
    /// Linewidth enhancement (Henry) factor.
    pub alpha: f64,
    /// Gain compression factor (1/W).
    pub gamma_p: f64,
}

impl LaserParams {
    /// Reference master-laser parameter set used by the bundled scenarios.
    pub fn default_master() -> Self {
        Self {
            gamma_p: 30.0,
            ..Self::default_slave()
        }
    }

    /// Reference slave-laser parameter set used by the bundled scenarios.
    pub fn default_slave() -> Self {
        Self {
            tau_ph: 1e-12,
            tau_e: 1e-9,
            eta: 0.3,
            n_th: 5.5e7,
            n_tr: 4.0e7,
            photon_energy: 0.8 * EV,
            c_sp: 1e-5,
            gamma_conf: 0.12,
            alpha: 5.0,
            gamma_p: 20.0,
        }
    }

    pub fn validate(&self) -> Result<(), LaserError> {
        let err = |m: &str| Err(LaserError::InvalidParams(m.to_string()));
        if !(self.tau_ph > 0.0 && self.tau_e > 0.0 && self.photon_energy > 0.0) {
            return err("lifetimes and photon_energy must be strictly positive");
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return err("eta must lie in (0, 1]");
        }
        if !(self.gamma_conf > 0.0 && self.gamma_conf <= 1.0) {
            return err("gamma_conf must lie in (0, 1]");
        }
        if self.c_sp < 0.0 {
            return err("c_sp must be non-negative");
        }
        if self.gamma_p < 0.0 {
            return err("gamma_p must be non-negative");
        }
        if !(self.n_tr < self.n_th) {
            return err("n_tr must lie below n_th");
        }
        Ok(())
    }

    /// Threshold pump current `e * N_th / tau_e` (A).
    pub fn threshold_current(&self) -> f64 {
        ELEMENTARY_CHARGE * self.n_th / self.tau_e
    }

    /// Watts of measured output power per intracavity photon:
    /// `eta * hbar*omega0 / (2 * Gamma * tau_ph)`.
    pub fn power_per_photon(&self) -> f64 {
        self.eta * self.photon_energy / (2.0 * self.gamma_conf * self.tau_ph)
    }
}

/// Master-to-slave optical coupling.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InjectionParams {
    /// Coupling factor (1/s).
    pub kappa_inj: f64,
    /// Master-slave detuning (rad/s).
    pub delta_omega: f64,
}

impl InjectionParams {
    /// Reference coupling: 200e9 1/s at -2*pi*100 GHz detuning.
    pub fn default_coupling() -> Self {
        Self {
            kappa_inj: 200e9,
            delta_omega: -TAU * 100e9,
        }
    }

    pub fn validate(&self) -> Result<(), LaserError> {
        if self.kappa_inj < 0.0 {
            return Err(LaserError::InvalidParams(
                "kappa_inj must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Piecewise-constant pump current waveform.
#[derive(Clone, Debug, PartialEq)]
pub struct PumpWaveform {
    /// Sample period (s).
    pub dt: f64,
    /// Pump current samples (A).
    pub samples: Vec<f64>,
}

impl PumpWaveform {
    pub fn constant(current: f64, duration: f64, dt: f64) -> Self {
        let n = (duration / dt).round() as usize;
        Self {
            dt,
            samples: vec![current; n],
        }
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 * self.dt
    }

    /// Current at time `t` (held constant within each sample). The small
    /// bias keeps times that are a whole number of samples, up to float
    /// rounding, in the sample they begin.
    #[inline]
    pub fn current_at(&self, t: f64) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        let idx = ((t / self.dt + 1e-9).floor().max(0.0) as usize).min(self.samples.len() - 1);
        self.samples[idx]
    }

    pub fn validate(&self) -> Result<(), LaserError> {
        if !(self.dt > 0.0) {
            return Err(LaserError::InvalidDrive("dt must be positive".into()));
        }
        if self.samples.iter().any(|&i| i < 0.0 || !i.is_finite()) {
            return Err(LaserError::InvalidDrive(
                "pump currents must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Instantaneous laser state.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LaserState {
    /// Carrier number.
    pub n: f64,
    /// Intracavity photon number.
    pub q: f64,
    /// Field phase (rad), unwrapped.
    pub phi: f64,
}

impl LaserState {
    pub fn validate(&self) -> Result<(), LaserError> {
        if self.n < 0.0 || self.q < 0.0 {
            return Err(LaserError::InvalidParams(
                "initial state must have n >= 0 and q >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Time-resolved solution for one laser on a uniform grid.
#[derive(Clone, Debug)]
pub struct FieldTrajectory {
    /// Sample period (s).
    pub dt: f64,
    pub n: Vec<f64>,
    pub q: Vec<f64>,
    pub phi: Vec<f64>,
    /// Measured optical power (W), `q * eta*hbar*omega0 / (2*Gamma*tau_ph)`.
    pub power: Vec<f64>,
}

impl FieldTrajectory {
    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    pub fn duration(&self) -> f64 {
        (self.len().saturating_sub(1)) as f64 * self.dt
    }

    pub fn final_state(&self) -> LaserState {
        let i = self.len() - 1;
        LaserState {
            n: self.n[i],
            q: self.q[i],
            phi: self.phi[i],
        }
    }

    /// CSV export: `t_ns,N,Q,phi_rad,P_mW`, one row per sample.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.len() * 64 + 32);
        out.push_str("t_ns,N,Q,phi_rad,P_mW\n");
        for i in 0..self.len() {
            let t_ns = i as f64 * self.dt * 1e9;
            out.push_str(&format!(
                "{:.9e},{:.9e},{:.9e},{:.9e},{:.9e}\n",
                t_ns,
                self.n[i],
                self.q[i],
                self.phi[i],
                self.power[i] * 1e3
            ));
        }
        out
    }
}

/// Linear dimensionless gain `(n - n_tr) / (n_th - n_tr)`.
///
/// Equals 1 at threshold and 0 at transparency; may be negative below
/// transparency.
#[inline]
pub fn linear_gain(n: f64, params: &LaserParams) -> f64 {
    (n - params.n_tr) / (params.n_th - params.n_tr)
}

/// Compression-saturated gain `G_L / sqrt(1 + 2*gamma_p*p)` for output power
/// `p` in watts.
#[inline]
pub fn saturated_gain(n: f64, p: f64, params: &LaserParams) -> f64 {
    linear_gain(n, params) / (1.0 + 2.0 * params.gamma_p * p).sqrt()
}

/// Optional scrambling of the master phase at fixed times, emulating the
/// fresh uniform phase of an independently built-up gain-switched pulse.
#[derive(Clone, Debug)]
pub struct PhaseScramble {
    /// Times (s) at which the master phase is replaced by a fresh draw.
    pub times: Vec<f64>,
    pub seed: u64,
}

#[derive(Clone, Debug, Default)]
pub struct IntegrationOptions {
    pub master_phase_scramble: Option<PhaseScramble>,
}

#[derive(Clone, Copy)]
struct Deriv {
    n: f64,
    q: f64,
    phi: f64,
}

/// Free-running rate equations for one laser.
#[inline]
fn free_derivs(p: &LaserParams, s: LaserState, pump: f64) -> Deriv {
    let gl = linear_gain(s.n, p);
    let power = s.q * p.power_per_photon();
    let g = gl / (1.0 + 2.0 * p.gamma_p * power).sqrt();
    Deriv {
        n: pump / ELEMENTARY_CHARGE - s.n / p.tau_e - s.q * g / (p.gamma_conf * p.tau_ph),
        q: (g - 1.0) * s.q / p.tau_ph + p.c_sp * s.n / p.tau_e,
        phi: p.alpha / (2.0 * p.tau_ph) * (gl - 1.0),
    }
}

/// Injection contributions to the slave equations given the master state.
#[inline]
fn injection_terms(inj: &InjectionParams, master: LaserState, slave: LaserState, t: f64) -> Deriv {
    let arg = inj.delta_omega * t + master.phi - slave.phi;
    let q_pos = slave.q.max(0.0);
    let q_ratio = slave.q.max(Q_FLOOR);
    Deriv {
        n: 0.0,
        q: 2.0 * inj.kappa_inj * (master.q.max(0.0) * q_pos).sqrt() * arg.cos(),
        phi: inj.kappa_inj * (master.q.max(0.0) / q_ratio).sqrt() * arg.sin(),
    }
}

#[inline]
fn advance(s: LaserState, k: Deriv, h: f64) -> LaserState {
    LaserState {
        n: s.n + h * k.n,
        q: s.q + h * k.q,
        phi: s.phi + h * k.phi,
    }
}

#[inline]
fn rk4_combine(s: LaserState, k1: Deriv, k2: Deriv, k3: Deriv, k4: Deriv, dt: f64) -> LaserState {
    LaserState {
        n: s.n + dt / 6.0 * (k1.n + 2.0 * k2.n + 2.0 * k3.n + k4.n),
        q: s.q + dt / 6.0 * (k1.q + 2.0 * k2.q + 2.0 * k3.q + k4.q),
        phi: s.phi + dt / 6.0 * (k1.phi + 2.0 * k2.phi + 2.0 * k3.phi + k4.phi),
    }
}

/// Clamp tiny negative excursions to zero; report divergence otherwise.
fn settle(s: LaserState, t: f64) -> Result<LaserState, LaserError> {
    if !(s.n.is_finite() && s.q.is_finite() && s.phi.is_finite()) {
        return Err(LaserError::Diverged {
            t_s: t,
            detail: "non-finite state".into(),
        });
    }
    if s.n < -NEGATIVE_TOL || s.q < -NEGATIVE_TOL {
        return Err(LaserError::Diverged {
            t_s: t,
            detail: format!(
                "state went negative beyond tolerance (n={:.3e}, q={:.3e})",
                s.n, s.q
            ),
        });
    }
    Ok(LaserState {
        n: s.n.max(0.0),
        q: s.q.max(0.0),
        phi: s.phi,
    })
}

struct TrajectoryBuilder {
    dt: f64,
    power_per_photon: f64,
    n: Vec<f64>,
    q: Vec<f64>,
    phi: Vec<f64>,
    power: Vec<f64>,
}

impl TrajectoryBuilder {
    fn new(dt: f64, params: &LaserParams, capacity: usize) -> Self {
        Self {
            dt,
            power_per_photon: params.power_per_photon(),
            n: Vec::with_capacity(capacity),
            q: Vec::with_capacity(capacity),
            phi: Vec::with_capacity(capacity),
            power: Vec::with_capacity(capacity),
        }
    }

    fn push(&mut self, s: LaserState) {
        self.n.push(s.n);
        self.q.push(s.q);
        self.phi.push(s.phi);
        self.power.push(s.q * self.power_per_photon);
    }

    fn finish(self) -> FieldTrajectory {
        FieldTrajectory {
            dt: self.dt,
            n: self.n,
            q: self.q,
            phi: self.phi,
            power: self.power,
        }
    }
}

fn check_step(dt: f64) -> Result<(), LaserError> {
    if !(dt > 0.0) {
        return Err(LaserError::InvalidDrive(
            "integration dt must be positive".into(),
        ));
    }
    Ok(())
}

/// Integrate the coupled master + slave system over the drive duration.
///
/// The master evolves independently of the slave (unidirectional injection);
/// the slave sees the master through the photon-number and phase injection
/// terms. Requires `dt <= 1 ps` so the detuning beat is resolved.
pub fn integrate(
    master: &LaserParams,
    slave: &LaserParams,
    inj: &InjectionParams,
    master_drive: &PumpWaveform,
    slave_drive: &PumpWaveform,
    initial: (LaserState, LaserState),
    dt: f64,
) -> Result<(FieldTrajectory, FieldTrajectory), LaserError> {
    integrate_with_options(
        master,
        slave,
        inj,
        master_drive,
        slave_drive,
        initial,
        dt,
        &IntegrationOptions::default(),
    )
}

#[allow(clippy::too_many_arguments)]
pub fn integrate_with_options(
    master: &LaserParams,
    slave: &LaserParams,
    inj: &InjectionParams,
    master_drive: &PumpWaveform,
    slave_drive: &PumpWaveform,
    initial: (LaserState, LaserState),
    dt: f64,
    opts: &IntegrationOptions,
) -> Result<(FieldTrajectory, FieldTrajectory), LaserError> {
    master.validate()?;
    slave.validate()?;
    inj.validate()?;
    master_drive.validate()?;
    slave_drive.validate()?;
    initial.0.validate()?;
    initial.1.validate()?;
    check_step(dt)?;
    if dt > 1e-12 {
        return Err(LaserError::InvalidDrive(
            "dt must not exceed 1 ps (detuning beat must be resolved)".into(),
        ));
    }
    let dur_m = master_drive.duration();
    let dur_s = slave_drive.duration();
    if (dur_m - dur_s).abs() > master_drive.dt.min(slave_drive.dt) {
        return Err(LaserError::InvalidDrive(format!(
            "drive durations differ: master {dur_m:.3e} s vs slave {dur_s:.3e} s"
        )));
    }

    let n_steps = (dur_m / dt).round() as usize;
    let mut ms = initial.0;
    let mut ss = initial.1;
    let mut mb = TrajectoryBuilder::new(dt, master, n_steps + 1);
    let mut sb = TrajectoryBuilder::new(dt, slave, n_steps + 1);
    mb.push(ms);
    sb.push(ss);

    let mut scramble: Vec<(usize, f64)> = match &opts.master_phase_scramble {
        None => Vec::new(),
        Some(sc) => {
            let mut events: Vec<(usize, f64)> = sc
                .times
                .iter()
                .enumerate()
                .map(|(k, &t)| {
                    let step = (t / dt).round() as usize;
                    let phase = TAU * PulseRng::new(sc.seed, k as u64).next_f64();
                    (step, phase)
                })
                .collect();
            events.sort_by_key(|&(step, _)| step);
            events.reverse();
            events
        }
    };

    for i in 0..n_steps {
        while scramble.last().is_some_and(|&(step, _)| step <= i) {
            let (_, phase) = scramble.pop().unwrap();
            ms.phi = phase;
        }
        let t = i as f64 * dt;
        let th = t + 0.5 * dt;
        let te = t + dt;
        // the pump is held constant across the step so drive edges stay
        // aligned to step boundaries at any refinement of dt
        let im = master_drive.current_at(t);
        let is = slave_drive.current_at(t);

        let mk1 = free_derivs(master, ms, im);
        let sk1 = {
            let d = free_derivs(slave, ss, is);
            let j = injection_terms(inj, ms, ss, t);
            Deriv {
                n: d.n,
                q: d.q + j.q,
                phi: d.phi + j.phi,
            }
        };

        let m2 = advance(ms, mk1, 0.5 * dt);
        let s2 = advance(ss, sk1, 0.5 * dt);
        let mk2 = free_derivs(master, m2, im);
        let sk2 = {
            let d = free_derivs(slave, s2, is);
            let j = injection_terms(inj, m2, s2, th);
            Deriv {
                n: d.n,
                q: d.q + j.q,
                phi: d.phi + j.phi,
            }
        };

        let m3 = advance(ms, mk2, 0.5 * dt);
        let s3 = advance(ss, sk2, 0.5 * dt);
        let mk3 = free_derivs(master, m3, im);
        let sk3 = {
            let d = free_derivs(slave, s3, is);
            let j = injection_terms(inj, m3, s3, th);
            Deriv {
                n: d.n,
                q: d.q + j.q,
                phi: d.phi + j.phi,
            }
        };

        let m4 = advance(ms, mk3, dt);
        let s4 = advance(ss, sk3, dt);
        let mk4 = free_derivs(master, m4, im);
        let sk4 = {
            let d = free_derivs(slave, s4, is);
            let j = injection_terms(inj, m4, s4, te);
            Deriv {
                n: d.n,
                q: d.q + j.q,
                phi: d.phi + j.phi,
            }
        };

        ms = settle(rk4_combine(ms, mk1, mk2, mk3, mk4, dt), te)?;
        ss = settle(rk4_combine(ss, sk1, sk2, sk3, sk4, dt), te)?;
        mb.push(ms);
        sb.push(ss);
    }
    Ok((mb.finish(), sb.finish()))
}

/// Integrate a single laser with no injection.
///
/// The arithmetic matches the master path of [`integrate`] exactly, so a
/// master trajectory is bit-identical whether or not a slave is simulated
/// alongside it.
pub fn integrate_free_running(
    params: &LaserParams,
    drive: &PumpWaveform,
    initial: LaserState,
    dt: f64,
) -> Result<FieldTrajectory, LaserError> {
    params.validate()?;
    drive.validate()?;
    initial.validate()?;
    check_step(dt)?;

    let n_steps = (drive.duration() / dt).round() as usize;
    let mut s = initial;
    let mut b = TrajectoryBuilder::new(dt, params, n_steps + 1);
    b.push(s);
    for i in 0..n_steps {
        let t = i as f64 * dt;
        let te = t + dt;
        let pump = drive.current_at(t);
        let k1 = free_derivs(params, s, pump);
        let k2 = free_derivs(params, advance(s, k1, 0.5 * dt), pump);
        let k3 = free_derivs(params, advance(s, k2, 0.5 * dt), pump);
        let k4 = free_derivs(params, advance(s, k3, dt), pump);
        s = settle(rk4_combine(s, k1, k2, k3, k4, dt), te)?;
        b.push(s);
    }
    Ok(b.finish())
}

/// Relax a laser at a constant bias and return the settled state with the
/// phase reset to zero. Used to remove startup artifacts before a scenario.
pub fn relax_to_bias(
    params: &LaserParams,
    bias: f64,
    duration: f64,
    dt: f64,
) -> Result<LaserState, LaserError> {
    let drive = PumpWaveform::constant(bias, duration, dt);
    let initial = LaserState {
        n: 0.0,
        q: Q_FLOOR,
        phi: 0.0,
    };
    let traj = integrate_free_running(params, &drive, initial, dt)?;
    let mut s = traj.final_state();
    s.q = s.q.max(Q_FLOOR);
    s.phi = 0.0;
    Ok(s)
}

/// Mean absolute time derivative of the locking argument
/// `delta_omega*t + phi_m - phi` (rad/s) over `window = (t0, t1)`.
///
/// Near zero when the slave is frequency-locked to the master; close to
/// `|delta_omega|` when the slave runs free at its own rate.
pub fn injection_lock_residual(
    master_traj: &FieldTrajectory,
    slave_traj: &FieldTrajectory,
    inj: &InjectionParams,
    window: (f64, f64),
) -> Result<f64, LaserError> {
    if master_traj.dt != slave_traj.dt || master_traj.len() != slave_traj.len() {
        return Err(LaserError::GridMismatch);
    }
    let dt = master_traj.dt;
    let i0 = (window.0 / dt).ceil().max(0.0) as usize;
    let i1 = ((window.1 / dt).floor() as usize).min(master_traj.len().saturating_sub(1));
    if i1 <= i0 {
        return Err(LaserError::EmptyWindow);
    }
    let mut acc = 0.0;
    for i in i0..i1 {
        let dphi_m = master_traj.phi[i + 1] - master_traj.phi[i];
        let dphi_s = slave_traj.phi[i + 1] - slave_traj.phi[i];
        acc += (inj.delta_omega + (dphi_m - dphi_s) / dt).abs();
    }
    Ok(acc / (i1 - i0) as f64)
}
