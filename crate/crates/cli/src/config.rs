//! JSON run configuration.
//!
//! Every key is optional; missing keys fall back to the bundled reference
//! parameter set, so a flagless run reproduces the reference scenarios.
//! Unknown keys are rejected.

use serde::Deserialize;
use tbqkd_core::encoder::{DriveLevels, EncodingTiming, FilterSpec, StateSymbol};
use tbqkd_core::laser::EV;
use tbqkd_core::montecarlo::TrialConfig;
use tbqkd_core::rng::PulseRng;
use tbqkd_core::scenario::ScenarioConfig;
use tbqkd_core::{ChannelParams, InjectionParams, LaserParams, ProtocolConfig, SourceIntensities};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
pub enum Mode {
    #[serde(rename = "no_decoy")]
    NoDecoy,
    #[serde(rename = "decoy")]
    Decoy,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    // laser parameters (shared by master and slave except gain compression)
    pub tau_ph_s: Option<f64>,
    pub tau_e_s: Option<f64>,
    pub eta: Option<f64>,
    pub n_th: Option<f64>,
    pub n_tr: Option<f64>,
    pub photon_energy_ev: Option<f64>,
    pub c_sp: Option<f64>,
    pub gamma_conf: Option<f64>,
    pub alpha: Option<f64>,
    /// Slave gain compression factor (1/W).
    pub gamma_p_per_w: Option<f64>,
    pub master_gamma_p_per_w: Option<f64>,
    pub kappa_inj_per_s: Option<f64>,
    pub delta_omega_rad_s: Option<f64>,

    // encoding
    pub t_bin_ps: Option<f64>,
    pub state_gap_ps: Option<f64>,
    pub master_lead_ps: Option<f64>,
    pub slave_pulse_width_ps: Option<f64>,
    pub master_short_width_ps: Option<f64>,
    pub master_long_width_ps: Option<f64>,
    pub master_bias_a: Option<f64>,
    pub master_pulse_a: Option<f64>,
    pub slave_bias_a: Option<f64>,
    pub slave_pulse_a: Option<f64>,
    pub sim_dt_ps: Option<f64>,
    pub sequence: Option<Vec<StateSymbol>>,
    pub sequence_length: Option<usize>,
    pub sequence_seed: Option<u64>,
    pub master_phase_scramble_seed: Option<u64>,

    // optics
    pub filter_center_ghz: Option<f64>,
    pub filter_halfwidth_ghz: Option<f64>,
    pub filter_order: Option<u32>,
    pub mzi_theta_rad: Option<f64>,
    pub attenuation_db: Option<f64>,

    // channel and protocol
    pub xi_db_per_km: Option<f64>,
    pub p_dc: Option<f64>,
    pub eta_det: Option<f64>,
    pub e_d: Option<f64>,
    pub f_ec: Option<f64>,
    #[serde(rename = "pA_z")]
    pub p_a_z: Option<f64>,
    #[serde(rename = "pB_z")]
    pub p_b_z: Option<f64>,
    pub f_prep_hz: Option<f64>,

    // source intensities
    pub mode: Option<Mode>,
    pub mu: Option<f64>,
    pub nu: Option<f64>,
    pub mu0: Option<f64>,
    pub mu1: Option<f64>,
    pub mu2: Option<f64>,
    pub nu0: Option<f64>,
    pub nu1: Option<f64>,
    pub nu2: Option<f64>,

    // run control
    pub distance_km: Option<f64>,
    pub n_pulses: Option<u64>,
    pub seed: Option<u64>,
    pub out_dir: Option<String>,
}

impl RunConfig {
    pub fn load(path: Option<&std::path::Path>) -> Result<Self, String> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| format!("cannot read config {}: {e}", p.display()))?;
                serde_json::from_str(&text).map_err(|e| format!("invalid config: {e}"))
            }
        }
    }

    fn lasers(&self) -> (LaserParams, LaserParams) {
        let base = LaserParams::default_slave();
        let slave = LaserParams {
            tau_ph: self.tau_ph_s.unwrap_or(base.tau_ph),
            tau_e: self.tau_e_s.unwrap_or(base.tau_e),
            eta: self.eta.unwrap_or(base.eta),
            n_th: self.n_th.unwrap_or(base.n_th),
            n_tr: self.n_tr.unwrap_or(base.n_tr),
            photon_energy: self
                .photon_energy_ev
                .map(|ev| ev * EV)
                .unwrap_or(base.photon_energy),
            c_sp: self.c_sp.unwrap_or(base.c_sp),
            gamma_conf: self.gamma_conf.unwrap_or(base.gamma_conf),
            alpha: self.alpha.unwrap_or(base.alpha),
            gamma_p: self.gamma_p_per_w.unwrap_or(base.gamma_p),
        };
        let master = LaserParams {
            gamma_p: self
                .master_gamma_p_per_w
                .unwrap_or(LaserParams::default_master().gamma_p),
            ..slave
        };
        (master, slave)
    }

    pub fn scenario(&self) -> Result<ScenarioConfig, String> {
        let (master, slave) = self.lasers();
        master.validate().map_err(|e| e.to_string())?;
        slave.validate().map_err(|e| e.to_string())?;

        let inj_default = InjectionParams::default_coupling();
        let injection = InjectionParams {
            kappa_inj: self.kappa_inj_per_s.unwrap_or(inj_default.kappa_inj),
            delta_omega: self.delta_omega_rad_s.unwrap_or(inj_default.delta_omega),
        };
        injection.validate().map_err(|e| e.to_string())?;

        let td = EncodingTiming::default_timing();
        let ps = 1e-12;
        let timing = EncodingTiming {
            bin_period: self.t_bin_ps.map(|v| v * ps).unwrap_or(td.bin_period),
            state_gap: self.state_gap_ps.map(|v| v * ps).unwrap_or(td.state_gap),
            master_lead: self
                .master_lead_ps
                .map(|v| v * ps)
                .unwrap_or(td.master_lead),
            slave_pulse_width: self
                .slave_pulse_width_ps
                .map(|v| v * ps)
                .unwrap_or(td.slave_pulse_width),
            master_short_width: self
                .master_short_width_ps
                .map(|v| v * ps)
                .unwrap_or(td.master_short_width),
            master_long_width: self
                .master_long_width_ps
                .map(|v| v * ps)
                .unwrap_or(td.master_long_width),
        };
        timing.validate().map_err(|e| e.to_string())?;

        let i_th = slave.threshold_current();
        let ld = DriveLevels::default_for_threshold(i_th);
        let levels = DriveLevels {
            master_bias: self.master_bias_a.unwrap_or(ld.master_bias),
            master_pulse: self.master_pulse_a.unwrap_or(ld.master_pulse),
            slave_bias: self.slave_bias_a.unwrap_or(ld.slave_bias),
            slave_pulse: self.slave_pulse_a.unwrap_or(ld.slave_pulse),
        };
        levels.validate().map_err(|e| e.to_string())?;

        let fd = FilterSpec::default_wdm();
        let filter = FilterSpec {
            center_offset: self
                .filter_center_ghz
                .map(|v| v * 1e9)
                .unwrap_or(fd.center_offset),
            half_width: self
                .filter_halfwidth_ghz
                .map(|v| v * 1e9)
                .unwrap_or(fd.half_width),
            order: self.filter_order.unwrap_or(fd.order),
        };
        filter.validate().map_err(|e| e.to_string())?;

        let sequence = match (&self.sequence, self.sequence_length) {
            (Some(_), Some(_)) => {
                return Err("give either sequence or sequence_length, not both".into())
            }
            (Some(seq), None) => seq.clone(),
            (None, Some(len)) => {
                let protocol = self.protocol()?;
                let seed = self.sequence_seed.unwrap_or(0);
                (0..len)
                    .map(|i| {
                        let u = PulseRng::new(seed, i as u64).next_f64();
                        if u < protocol.p_a_z / 2.0 {
                            StateSymbol::Z0
                        } else if u < protocol.p_a_z {
                            StateSymbol::Z1
                        } else {
                            StateSymbol::X0
                        }
                    })
                    .collect()
            }
            (None, None) => ScenarioConfig::reference().sequence,
        };

        let dt = self.sim_dt_ps.map(|v| v * ps).unwrap_or(0.1e-12);
        if !(dt > 0.0 && dt <= 1e-12) {
            return Err(format!("sim_dt_ps = {} must lie in (0, 1] ps", dt / ps));
        }

        let reference = ScenarioConfig::reference();
        Ok(ScenarioConfig {
            master,
            slave,
            injection,
            timing,
            levels,
            filter,
            mzi_delay: timing.bin_period,
            mzi_theta: self.mzi_theta_rad,
            sequence,
            dt,
            attenuation_db: self.attenuation_db,
            target_mu: self.mu.unwrap_or(0.024),
            relax_time: reference.relax_time,
            master_phase_scramble_seed: self.master_phase_scramble_seed,
        })
    }

    pub fn channel(&self, distance_override: Option<f64>) -> Result<ChannelParams, String> {
        let d = ChannelParams::default_channel();
        let ch = ChannelParams {
            xi_db_per_km: self.xi_db_per_km.unwrap_or(d.xi_db_per_km),
            distance_km: distance_override
                .or(self.distance_km)
                .unwrap_or(d.distance_km),
            p_dc: self.p_dc.unwrap_or(d.p_dc),
            eta_det: self.eta_det.unwrap_or(d.eta_det),
            e_d: self.e_d.unwrap_or(d.e_d),
        };
        ch.validate().map_err(|e| e.to_string())?;
        Ok(ch)
    }

    pub fn protocol(&self) -> Result<ProtocolConfig, String> {
        let d = ProtocolConfig::default_protocol();
        let p_a_z = self.p_a_z.unwrap_or(d.p_a_z);
        let p_b_z = self.p_b_z.unwrap_or(d.p_b_z);
        let cfg = ProtocolConfig {
            p_a_z,
            p_a_x: 1.0 - p_a_z,
            p_b_z,
            p_b_x: 1.0 - p_b_z,
            f_ec: self.f_ec.unwrap_or(d.f_ec),
            f_prep_hz: self.f_prep_hz.unwrap_or(d.f_prep_hz),
        };
        cfg.validate().map_err(|e| e.to_string())?;
        Ok(cfg)
    }

    pub fn intensities(&self) -> Result<SourceIntensities, String> {
        let mode = self.mode.unwrap_or(Mode::NoDecoy);
        let src = match mode {
            Mode::NoDecoy => SourceIntensities::NoDecoy {
                mu: self.mu.unwrap_or(0.024),
                nu: self.nu.unwrap_or(0.048),
            },
            Mode::Decoy => SourceIntensities::Decoy {
                mu0: self.mu0.unwrap_or(0.657),
                mu1: self.mu1.unwrap_or(0.033),
                mu2: self.mu2.unwrap_or(0.0),
                nu0: self.nu0.unwrap_or(1.314),
                nu1: self.nu1.unwrap_or(0.066),
                nu2: self.nu2.unwrap_or(0.0),
            },
        };
        src.validate().map_err(|e| e.to_string())?;
        Ok(src)
    }

    pub fn no_decoy_intensities(&self) -> Result<SourceIntensities, String> {
        let src = SourceIntensities::NoDecoy {
            mu: self.mu.unwrap_or(0.024),
            nu: self.nu.unwrap_or(0.048),
        };
        src.validate().map_err(|e| e.to_string())?;
        Ok(src)
    }

    pub fn decoy_intensities(&self) -> Result<SourceIntensities, String> {
        let src = SourceIntensities::Decoy {
            mu0: self.mu0.unwrap_or(0.657),
            mu1: self.mu1.unwrap_or(0.033),
            mu2: self.mu2.unwrap_or(0.0),
            nu0: self.nu0.unwrap_or(1.314),
            nu1: self.nu1.unwrap_or(0.066),
            nu2: self.nu2.unwrap_or(0.0),
        };
        src.validate().map_err(|e| e.to_string())?;
        Ok(src)
    }

    pub fn trial(
        &self,
        pulses: Option<u64>,
        seed: Option<u64>,
        distance: Option<f64>,
    ) -> Result<TrialConfig, String> {
        if self.mode == Some(Mode::Decoy) {
            return Err(
                "the Monte Carlo models the decoy-free source; set mode to no_decoy".into(),
            );
        }
        Ok(TrialConfig {
            n_pulses: pulses.or(self.n_pulses).unwrap_or(1_000_000),
            seed: seed.or(self.seed).unwrap_or(42),
            source: self.no_decoy_intensities()?,
            channel: self.channel(distance)?,
            protocol: self.protocol()?,
        })
    }
}
