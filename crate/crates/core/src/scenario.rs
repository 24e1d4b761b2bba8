//! The full transmitter pipeline: drive synthesis, rate-equation
//! integration, field assembly, spectral filtering, interferometric
//! decoding, and per-slot metrics.

use crate::encoder::{
    analyze_bins, assemble_field, build_drive, butterworth_filter, calibrate_mzi_phase,
    classify_slots, mzi_interfere, BinMetrics, ComplexFieldTrace, DriveLevels, EncoderError,
    EncodingTiming, FilterSpec, MziSpec, StateSymbol,
};
use crate::laser::{
    integrate_with_options, relax_to_bias, FieldTrajectory, InjectionParams, IntegrationOptions,
    LaserError, LaserParams, PhaseScramble,
};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Laser(#[from] LaserError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
}

/// Everything needed to run the transmitter once.
#[derive(Clone, Debug)]
pub struct ScenarioConfig {
    pub master: LaserParams,
    pub slave: LaserParams,
    pub injection: InjectionParams,
    pub timing: EncodingTiming,
    pub levels: DriveLevels,
    pub filter: FilterSpec,
    /// Interferometer delay (s); defaults to one bin period.
    pub mzi_delay: f64,
    /// Interferometer phase; `None` calibrates on the X0 slots of the run.
    pub mzi_theta: Option<f64>,
    pub sequence: Vec<StateSymbol>,
    /// Integration step (s).
    pub dt: f64,
    /// Attenuation (dB); `None` picks the value that sets the mean
    /// designated Z-bin photon number to `target_mu`.
    pub attenuation_db: Option<f64>,
    pub target_mu: f64,
    /// Bias-only settling time before the sequence starts (s).
    pub relax_time: f64,
    /// Scramble the master phase at each slot boundary with this seed.
    pub master_phase_scramble_seed: Option<u64>,
}

impl ScenarioConfig {
    /// The bundled reference scenario: Z0, X0, Z1, X0, Z0 at 1.25 GHz with
    /// 2T inter-state gaps.
    pub fn reference() -> Self {
        use StateSymbol::*;
        let slave = LaserParams::default_slave();
        let levels = DriveLevels::default_for_threshold(slave.threshold_current());
        Self {
            master: LaserParams::default_master(),
            slave,
            injection: InjectionParams::default_coupling(),
            timing: EncodingTiming::default_timing(),
            levels,
            filter: FilterSpec::default_wdm(),
            mzi_delay: 800e-12,
            mzi_theta: None,
            sequence: vec![Z0, X0, Z1, X0, Z0],
            dt: 0.1e-12,
            attenuation_db: None,
            target_mu: 0.024,
            relax_time: 5e-9,
            master_phase_scramble_seed: None,
        }
    }
}

/// All traces and metrics produced by one pipeline run.
#[derive(Clone, Debug)]
pub struct ScenarioResult {
    pub master: FieldTrajectory,
    pub slave: FieldTrajectory,
    pub filtered: ComplexFieldTrace,
    pub filtered_power: Vec<f64>,
    pub constructive: Vec<f64>,
    pub destructive: Vec<f64>,
    /// Interferometer phase actually used (calibrated or configured).
    pub theta: f64,
    pub attenuation_db: f64,
    pub metrics: Vec<BinMetrics>,
    /// Symbols recovered from the filtered bin energies.
    pub classified: Vec<StateSymbol>,
    pub sequence: Vec<StateSymbol>,
}

impl ScenarioResult {
    /// True when every slot decodes to its commanded symbol.
    pub fn classification_matches(&self) -> bool {
        self.classified == self.sequence
    }

    /// Scenario trace CSV:
    /// `t_ns,P_master_mW,P_slave_mW,P_filtered_mW,P_constructive_mW,P_destructive_mW`.
    pub fn trace_csv(&self) -> String {
        let n = self.filtered_power.len();
        let mut out = String::with_capacity(n * 96 + 96);
        out.push_str(
            "t_ns,P_master_mW,P_slave_mW,P_filtered_mW,P_constructive_mW,P_destructive_mW\n",
        );
        for i in 0..n {
            out.push_str(&format!(
                "{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e}\n",
                i as f64 * self.slave.dt * 1e9,
                self.master.power[i] * 1e3,
                self.slave.power[i] * 1e3,
                self.filtered_power[i] * 1e3,
                self.constructive[i] * 1e3,
                self.destructive[i] * 1e3,
            ));
        }
        out
    }
}

/// Run the whole chain once.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioResult, ScenarioError> {
    let (master_drive, slave_drive) = build_drive(&cfg.sequence, &cfg.timing, &cfg.levels, cfg.dt)?;

    let master0 = relax_to_bias(&cfg.master, cfg.levels.master_bias, cfg.relax_time, cfg.dt)?;
    let slave0 = relax_to_bias(&cfg.slave, cfg.levels.slave_bias, cfg.relax_time, cfg.dt)?;

    let opts = IntegrationOptions {
        master_phase_scramble: cfg.master_phase_scramble_seed.map(|seed| {
            let slot = cfg.timing.slot_duration();
            PhaseScramble {
                times: (0..cfg.sequence.len()).map(|k| k as f64 * slot).collect(),
                seed,
            }
        }),
    };
    let (master, slave) = integrate_with_options(
        &cfg.master,
        &cfg.slave,
        &cfg.injection,
        &master_drive,
        &slave_drive,
        (master0, slave0),
        cfg.dt,
        &opts,
    )?;

    let field = assemble_field(&slave, 0.0);
    let filtered = butterworth_filter(&field, &cfg.filter)?;
    let filtered_power = filtered.power();

    let theta = match cfg.mzi_theta {
        Some(t) => t,
        // a Z-only sequence has nothing to calibrate on
        None => match calibrate_mzi_phase(&filtered, &cfg.sequence, &cfg.timing, cfg.mzi_delay) {
            Ok(t) => t,
            Err(EncoderError::MissingSymbol(_)) => 0.0,
            Err(e) => return Err(e.into()),
        },
    };
    let mzi = MziSpec {
        delay: cfg.mzi_delay,
        extra_phase: theta,
    };
    let (constructive, destructive) = mzi_interfere(&filtered, &mzi)?;

    let attenuation_db = match cfg.attenuation_db {
        Some(a) => a,
        None => calibrate_attenuation(
            &filtered_power,
            cfg.dt,
            &cfg.sequence,
            &cfg.timing,
            cfg.slave.photon_energy,
            cfg.target_mu,
        ),
    };

    let metrics = analyze_bins(
        &filtered_power,
        &constructive,
        &destructive,
        cfg.dt,
        &cfg.sequence,
        &cfg.timing,
        attenuation_db,
        cfg.slave.photon_energy,
    )?;
    let classified = classify_slots(&filtered_power, cfg.dt, cfg.sequence.len(), &cfg.timing);

    Ok(ScenarioResult {
        master,
        slave,
        filtered,
        filtered_power,
        constructive,
        destructive,
        theta,
        attenuation_db,
        metrics,
        classified,
        sequence: cfg.sequence.clone(),
    })
}

/// Attenuation (dB) that sets the mean designated Z-bin photon number to
/// `target_mu`. Falls back to 0 dB when the sequence has no Z slot or no
/// energy.
fn calibrate_attenuation(
    filtered_power: &[f64],
    dt: f64,
    sequence: &[StateSymbol],
    timing: &EncodingTiming,
    photon_energy: f64,
    target_mu: f64,
) -> f64 {
    let grid = crate::encoder::SlotGrid::new(dt, timing);
    let mut total = 0.0;
    let mut count = 0usize;
    for (k, sym) in sequence.iter().enumerate() {
        let bin = match sym {
            StateSymbol::Z0 => 0,
            StateSymbol::Z1 => 1,
            StateSymbol::X0 => continue,
        };
        let (a, z) = grid.bin_samples(k, bin, filtered_power.len());
        total += filtered_power[a..z].iter().sum::<f64>() * dt;
        count += 1;
    }
    if count == 0 || total <= 0.0 || target_mu <= 0.0 {
        return 0.0;
    }
    let mean_photons = total / count as f64 / photon_energy;
    10.0 * (mean_photons / target_mu).log10()
}
