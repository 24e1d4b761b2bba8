//! Symbol encoding, spectral filtering, and interferometric decoding.
//!
//! A symbol sequence becomes two pump waveforms: the slave fires a regular
//! pulse train (one pulse per time bin), the master fires a short pulse ahead
//! of the bin that should carry light (Z states) or a long pulse spanning both
//! bins of a slot (X state). Locked slave pulses inherit the master's
//! wavelength and pass the band filter; free-running pulses are blocked.

use crate::laser::{FieldTrajectory, PumpWaveform};
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use thiserror::Error;

/// Guard for energy ratios over nearly empty bins (J).
const ENERGY_FLOOR: f64 = 1e-30;

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("timing not representable on the sample grid: {0}")]
    TimingNotOnGrid(String),
    #[error("invalid encoding timing: {0}")]
    InvalidTiming(String),
    #[error("invalid drive levels: {0}")]
    InvalidLevels(String),
    #[error("field trace is empty")]
    EmptyField,
    #[error("interferometer delay exceeds the trace duration")]
    DelayTooLong,
    #[error("traces are not aligned to a common grid")]
    GridMismatch,
    #[error("sequence contains no {0} slot")]
    MissingSymbol(&'static str),
}

/// The three-symbol alphabet: pulse in the early bin, pulse in the late bin,
/// or equal pulses in both bins with a fixed phase relation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum StateSymbol {
    Z0,
    Z1,
    X0,
}

impl std::fmt::Display for StateSymbol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StateSymbol::Z0 => "Z0",
            StateSymbol::Z1 => "Z1",
            StateSymbol::X0 => "X0",
        })
    }
}

/// Bin and pulse geometry of the encoding.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EncodingTiming {
    /// Time-bin period T (s); the slave pulse train period.
    pub bin_period: f64,
    /// Extra delay between states (s).
    pub state_gap: f64,
    /// Master rise ahead of the slave pulse (s).
    pub master_lead: f64,
    /// Slave pump pulse width (s).
    pub slave_pulse_width: f64,
    /// Master short-pulse width (s), approximately T.
    pub master_short_width: f64,
    /// Master long-pulse width (s), approximately 2T.
    pub master_long_width: f64,
}

impl EncodingTiming {
    /// Reference timing: T = 800 ps, 2T inter-state gap.
    pub fn default_timing() -> Self {
        Self {
            bin_period: 800e-12,
            state_gap: 1600e-12,
            master_lead: 200e-12,
            slave_pulse_width: 400e-12,
            master_short_width: 800e-12,
            master_long_width: 1600e-12,
        }
    }

    /// Duration of one state slot: two bins plus the inter-state gap.
    pub fn slot_duration(&self) -> f64 {
        2.0 * self.bin_period + self.state_gap
    }

    pub fn validate(&self) -> Result<(), EncoderError> {
        let err = |m: String| Err(EncoderError::InvalidTiming(m));
        if !(self.bin_period > 0.0) {
            return err("bin_period must be positive".into());
        }
        if self.state_gap < 0.0 || self.master_lead < 0.0 {
            return err("state_gap and master_lead must be non-negative".into());
        }
        if !(self.slave_pulse_width > 0.0) {
            return err("slave_pulse_width must be positive".into());
        }
        let t = self.bin_period;
        if (self.master_short_width - t).abs() > 0.25 * t {
            return err(format!(
                "master_short_width must be within 25% of the bin period ({:.3e} s)",
                t
            ));
        }
        if (self.master_long_width - 2.0 * t).abs() > 0.25 * 2.0 * t {
            return err(format!(
                "master_long_width must be within 25% of twice the bin period ({:.3e} s)",
                2.0 * t
            ));
        }
        Ok(())
    }
}

/// Bias and pulse currents for both lasers (A).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DriveLevels {
    pub master_bias: f64,
    pub master_pulse: f64,
    pub slave_bias: f64,
    pub slave_pulse: f64,
}

impl DriveLevels {
    /// Reference levels as multiples of the threshold current: both lasers
    /// biased just below threshold so un-commanded bins stay dark, pulsed
    /// hard enough for gain switching and stable locking.
    pub fn default_for_threshold(i_th: f64) -> Self {
        Self {
            master_bias: 0.95 * i_th,
            master_pulse: 3.0 * i_th,
            slave_bias: 0.9 * i_th,
            slave_pulse: 3.0 * i_th,
        }
    }

    pub fn validate(&self) -> Result<(), EncoderError> {
        if self.master_bias < 0.0 || self.slave_bias < 0.0 {
            return Err(EncoderError::InvalidLevels(
                "bias currents must be non-negative".into(),
            ));
        }
        if self.master_pulse <= self.master_bias {
            return Err(EncoderError::InvalidLevels(
                "master_pulse must exceed master_bias".into(),
            ));
        }
        if self.slave_pulse <= self.slave_bias {
            return Err(EncoderError::InvalidLevels(
                "slave_pulse must exceed slave_bias".into(),
            ));
        }
        Ok(())
    }
}

/// Complex baseband field in the slave carrier rotating frame, sqrt(W).
#[derive(Clone, Debug)]
pub struct ComplexFieldTrace {
    pub dt: f64,
    pub samples: Vec<Complex64>,
}

impl ComplexFieldTrace {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Instantaneous power |E|^2 (W) per sample.
    pub fn power(&self) -> Vec<f64> {
        self.samples.iter().map(|e| e.norm_sqr()).collect()
    }
}

/// Band filter standing in for the WDM channel: Butterworth magnitude
/// response applied zero-phase in the frequency domain.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FilterSpec {
    /// Passband center relative to the slave carrier (Hz).
    pub center_offset: f64,
    /// 3-dB half-width (Hz).
    pub half_width: f64,
    /// Filter order.
    pub order: u32,
}

impl FilterSpec {
    /// Reference filter: second order, centered on the master's -100 GHz
    /// offset, 100 GHz full width.
    pub fn default_wdm() -> Self {
        Self {
            center_offset: -100e9,
            half_width: 50e9,
            order: 2,
        }
    }

    pub fn validate(&self) -> Result<(), EncoderError> {
        if !(self.half_width > 0.0) || self.order == 0 {
            return Err(EncoderError::InvalidTiming(
                "filter half_width must be positive and order >= 1".into(),
            ));
        }
        Ok(())
    }

    /// Magnitude response at frequency `f` (Hz).
    pub fn magnitude(&self, f: f64) -> f64 {
        let x = (f - self.center_offset) / self.half_width;
        1.0 / (1.0 + x.powi(2 * self.order as i32)).sqrt()
    }
}

/// Unbalanced Mach-Zehnder interferometer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MziSpec {
    /// Arm delay (s); one bin period for time-bin decoding.
    pub delay: f64,
    /// Extra phase in the delayed arm (rad).
    pub extra_phase: f64,
}

/// Per-slot decoding metrics.
#[derive(Clone, Debug, Serialize)]
pub struct BinMetrics {
    pub symbol: StateSymbol,
    /// Filtered pulse energy in the early bin (J).
    #[serde(rename = "bin0_energy_J")]
    pub bin0_energy_j: f64,
    /// Filtered pulse energy in the late bin (J).
    #[serde(rename = "bin1_energy_J")]
    pub bin1_energy_j: f64,
    /// Mean photon number of the designated bins after attenuation.
    pub mu_hat: f64,
    /// min(designated) / max(non-designated) bin energy over the slot, dB.
    pub extinction_db: f64,
    /// Central-bin interference visibility, clamped to [0, 1].
    pub visibility: f64,
}

/// Sample-index geometry of the slot/bin structure on a fixed grid.
#[derive(Clone, Copy, Debug)]
pub struct SlotGrid {
    pub dt: f64,
    pub bin_period: f64,
    pub slot_duration: f64,
}

impl SlotGrid {
    pub fn new(dt: f64, timing: &EncodingTiming) -> Self {
        Self {
            dt,
            bin_period: timing.bin_period,
            slot_duration: timing.slot_duration(),
        }
    }

    /// Bins per slot (gap bins included).
    pub fn bins_per_slot(&self) -> usize {
        (self.slot_duration / self.bin_period).floor() as usize
    }

    /// Sample range of absolute bin `b` within slot `slot`, clamped to `len`.
    pub fn bin_samples(&self, slot: usize, b: usize, len: usize) -> (usize, usize) {
        let t0 = slot as f64 * self.slot_duration + b as f64 * self.bin_period;
        let a = ((t0 / self.dt).round() as usize).min(len);
        let z = (((t0 + self.bin_period) / self.dt).round() as usize).min(len);
        (a, z)
    }
}

fn to_samples(t: f64, dt: f64, what: &str) -> Result<usize, EncoderError> {
    let x = t / dt;
    let r = x.round();
    if (x - r).abs() > 1e-6 {
        return Err(EncoderError::TimingNotOnGrid(format!(
            "{what} = {t:.6e} s is not a whole number of {dt:.3e} s samples"
        )));
    }
    Ok(r as usize)
}

/// Build the master and slave pump waveforms for a symbol sequence.
///
/// The slave fires in every bin of every slot; the master fires a short pulse
/// starting `master_lead` before the slave pulse of the commanded bin (Z0
/// early, Z1 late) or a long pulse spanning both bins (X0), and sits at bias
/// elsewhere.
pub fn build_drive(
    sequence: &[StateSymbol],
    timing: &EncodingTiming,
    levels: &DriveLevels,
    dt: f64,
) -> Result<(PumpWaveform, PumpWaveform), EncoderError> {
    timing.validate()?;
    levels.validate()?;
    if !(dt > 0.0) {
        return Err(EncoderError::InvalidTiming("dt must be positive".into()));
    }
    let bin = to_samples(timing.bin_period, dt, "bin_period")?;
    let slot = to_samples(timing.slot_duration(), dt, "slot duration")?;
    let lead = to_samples(timing.master_lead, dt, "master_lead")?;
    let slave_w = to_samples(timing.slave_pulse_width, dt, "slave_pulse_width")?;
    let short_w = to_samples(timing.master_short_width, dt, "master_short_width")?;
    let long_w = to_samples(timing.master_long_width, dt, "master_long_width")?;

    let n = sequence.len() * slot;
    let mut master = vec![levels.master_bias; n];
    let mut slave = vec![levels.slave_bias; n];

    // slave: strictly regular train at period T, offset by the master lead
    let mut b = 0usize;
    loop {
        let a = b * bin + lead;
        if a >= n {
            break;
        }
        let z = (a + slave_w).min(n);
        slave[a..z].fill(levels.slave_pulse);
        b += 1;
    }

    for (k, sym) in sequence.iter().enumerate() {
        let s0 = k * slot;
        let (start, width) = match sym {
            StateSymbol::Z0 => (s0, short_w),
            StateSymbol::Z1 => (s0 + bin, short_w),
            StateSymbol::X0 => (s0, long_w),
        };
        let z = (start + width).min(n);
        master[start..z].fill(levels.master_pulse);
    }

    Ok((
        PumpWaveform {
            dt,
            samples: master,
        },
        PumpWaveform { dt, samples: slave },
    ))
}

/// Assemble the complex baseband field `E(t) = sqrt(P)*exp(i*(phi + 2*pi*f0*t))`
/// from a trajectory, rotated into a common frame by `frame_offset` (Hz).
pub fn assemble_field(traj: &FieldTrajectory, frame_offset: f64) -> ComplexFieldTrace {
    let samples = traj
        .power
        .iter()
        .zip(traj.phi.iter())
        .enumerate()
        .map(|(i, (&p, &phi))| {
            let amp = p.max(0.0).sqrt();
            let phase = phi + TAU * frame_offset * (i as f64 * traj.dt);
            Complex64::from_polar(amp, phase)
        })
        .collect();
    ComplexFieldTrace {
        dt: traj.dt,
        samples,
    }
}

/// Apply the filter's magnitude response to the field spectrum (zero phase).
pub fn butterworth_filter(
    field: &ComplexFieldTrace,
    spec: &FilterSpec,
) -> Result<ComplexFieldTrace, EncoderError> {
    spec.validate()?;
    if field.is_empty() {
        return Err(EncoderError::EmptyField);
    }
    let n = field.len();
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(n);
    let ifft = planner.plan_fft_inverse(n);

    let mut buf = field.samples.clone();
    fft.process(&mut buf);
    let df = 1.0 / (n as f64 * field.dt);
    for (k, v) in buf.iter_mut().enumerate() {
        // FFT bin k maps to frequency k*df for k < n/2, (k-n)*df above
        let f = if 2 * k < n {
            k as f64 * df
        } else {
            (k as f64 - n as f64) * df
        };
        *v *= spec.magnitude(f);
    }
    ifft.process(&mut buf);
    let scale = 1.0 / n as f64;
    for v in buf.iter_mut() {
        *v *= scale;
    }
    Ok(ComplexFieldTrace {
        dt: field.dt,
        samples: buf,
    })
}

/// Interfere the field with a delayed copy of itself in an ideal 50/50
/// unbalanced interferometer. Returns per-sample powers (W) of the
/// constructive and destructive ports:
/// `|E(t) +/- e^{i*theta} E(t - delay)|^2 / 4`, with the delayed arm zero
/// before `t = delay`.
pub fn mzi_interfere(
    field: &ComplexFieldTrace,
    spec: &MziSpec,
) -> Result<(Vec<f64>, Vec<f64>), EncoderError> {
    if field.is_empty() {
        return Err(EncoderError::EmptyField);
    }
    let d = to_samples(spec.delay, field.dt, "mzi delay")?;
    if d >= field.len() {
        return Err(EncoderError::DelayTooLong);
    }
    let rot = Complex64::from_polar(1.0, spec.extra_phase);
    let n = field.len();
    let mut cons = Vec::with_capacity(n);
    let mut dest = Vec::with_capacity(n);
    for i in 0..n {
        let a = field.samples[i];
        let b = if i >= d {
            rot * field.samples[i - d]
        } else {
            Complex64::ZERO
        };
        cons.push((a + b).norm_sqr() / 4.0);
        dest.push((a - b).norm_sqr() / 4.0);
    }
    Ok((cons, dest))
}

/// Pick the interferometer phase that maximizes the constructive-port energy
/// summed over the central bins of every X0 slot, scanning theta over
/// [0, 2*pi) and refining around the best grid point.
pub fn calibrate_mzi_phase(
    field: &ComplexFieldTrace,
    sequence: &[StateSymbol],
    timing: &EncodingTiming,
    delay: f64,
) -> Result<f64, EncoderError> {
    if field.is_empty() {
        return Err(EncoderError::EmptyField);
    }
    let d = to_samples(delay, field.dt, "mzi delay")?;
    if d >= field.len() {
        return Err(EncoderError::DelayTooLong);
    }
    let grid = SlotGrid::new(field.dt, timing);
    // Constructive central-bin energy is s0/4 + Re(x * e^{-i theta})/2 with
    // x the cross-correlation of the direct and delayed arms; only x matters
    // for the argmax.
    let mut x = Complex64::ZERO;
    let mut seen = false;
    for (k, sym) in sequence.iter().enumerate() {
        if *sym != StateSymbol::X0 {
            continue;
        }
        seen = true;
        let (a, z) = grid.bin_samples(k, 1, field.len());
        for i in a.max(d)..z {
            x += field.samples[i] * field.samples[i - d].conj();
        }
    }
    if !seen {
        return Err(EncoderError::MissingSymbol("X0"));
    }
    let energy = |theta: f64| (x * Complex64::from_polar(1.0, -theta)).re;
    let mut best = (0.0, f64::NEG_INFINITY);
    let coarse = 720;
    for i in 0..coarse {
        let th = TAU * i as f64 / coarse as f64;
        let e = energy(th);
        if e > best.1 {
            best = (th, e);
        }
    }
    let mut lo = best.0 - TAU / coarse as f64;
    let mut hi = best.0 + TAU / coarse as f64;
    for _ in 0..60 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if energy(m1) < energy(m2) {
            lo = m1;
        } else {
            hi = m2;
        }
    }
    Ok((0.5 * (lo + hi)).rem_euclid(TAU))
}

/// Integrate per-bin energies and decode per-slot metrics.
///
/// `attenuation_db` scales energies down before converting to mean photon
/// numbers; `mu_hat` sums the designated bins of the slot. Extinction
/// compares the weakest designated bin against the strongest non-designated
/// bin of the slot; visibility compares the interferometer ports over the
/// slot's central (late) bin.
#[allow(clippy::too_many_arguments)]
pub fn analyze_bins(
    filtered_power: &[f64],
    constructive: &[f64],
    destructive: &[f64],
    dt: f64,
    sequence: &[StateSymbol],
    timing: &EncodingTiming,
    attenuation_db: f64,
    photon_energy: f64,
) -> Result<Vec<BinMetrics>, EncoderError> {
    if filtered_power.len() != constructive.len() || filtered_power.len() != destructive.len() {
        return Err(EncoderError::GridMismatch);
    }
    let grid = SlotGrid::new(dt, timing);
    let nbins = grid.bins_per_slot();
    let atten = 10f64.powf(-attenuation_db / 10.0);
    let energy = |tr: &[f64], a: usize, z: usize| tr[a..z].iter().sum::<f64>() * dt;

    let mut out = Vec::with_capacity(sequence.len());
    for (k, sym) in sequence.iter().enumerate() {
        let mut bins = Vec::with_capacity(nbins);
        for b in 0..nbins {
            let (a, z) = grid.bin_samples(k, b, filtered_power.len());
            bins.push(energy(filtered_power, a, z));
        }
        let designated: &[usize] = match sym {
            StateSymbol::Z0 => &[0],
            StateSymbol::Z1 => &[1],
            StateSymbol::X0 => &[0, 1],
        };
        let d_min = designated
            .iter()
            .map(|&b| bins[b])
            .fold(f64::INFINITY, f64::min);
        let nd_max = (0..nbins)
            .filter(|b| !designated.contains(b))
            .map(|b| bins[b])
            .fold(0.0_f64, f64::max);
        let extinction_db = 10.0 * (d_min.max(ENERGY_FLOOR) / nd_max.max(ENERGY_FLOOR)).log10();
        let mu_hat = designated.iter().map(|&b| bins[b]).sum::<f64>() / photon_energy * atten;

        let (a, z) = grid.bin_samples(k, 1, filtered_power.len());
        let ec = energy(constructive, a, z);
        let ed = energy(destructive, a, z);
        let visibility = ((ec - ed) / (ec + ed).max(ENERGY_FLOOR)).clamp(0.0, 1.0);

        out.push(BinMetrics {
            symbol: *sym,
            bin0_energy_j: bins[0],
            bin1_energy_j: bins.get(1).copied().unwrap_or(0.0),
            mu_hat,
            extinction_db,
            visibility,
        });
    }
    Ok(out)
}

/// Classify each slot from its filtered bin energies: both bins lit reads as
/// X0, otherwise the brighter bin picks the Z state.
pub fn classify_slots(
    filtered_power: &[f64],
    dt: f64,
    n_slots: usize,
    timing: &EncodingTiming,
) -> Vec<StateSymbol> {
    let grid = SlotGrid::new(dt, timing);
    (0..n_slots)
        .map(|k| {
            let (a0, z0) = grid.bin_samples(k, 0, filtered_power.len());
            let (a1, z1) = grid.bin_samples(k, 1, filtered_power.len());
            let e0: f64 = filtered_power[a0..z0].iter().sum();
            let e1: f64 = filtered_power[a1..z1].iter().sum();
            let (lo, hi) = (e0.min(e1), e0.max(e1));
            if lo > 0.25 * hi {
                StateSymbol::X0
            } else if e0 >= e1 {
                StateSymbol::Z0
            } else {
                StateSymbol::Z1
            }
        })
        .collect()
}

/// First-order low-pass of a power trace, emulating a bandwidth-limited
/// photodiode.
pub fn photodiode_lowpass(power: &[f64], dt: f64, f3db: f64) -> Vec<f64> {
    if power.is_empty() {
        return Vec::new();
    }
    let a = 1.0 - (-TAU * f3db * dt).exp();
    let mut y = Vec::with_capacity(power.len());
    let mut acc = power[0];
    y.push(acc);
    for &x in &power[1..] {
        acc += a * (x - acc);
        y.push(acc);
    }
    y
}

/// Serialize per-slot metrics to the JSON interchange format.
pub fn bin_metrics_json(metrics: &[BinMetrics]) -> String {
    serde_json::to_string_pretty(metrics).expect("metrics serialize")
}
