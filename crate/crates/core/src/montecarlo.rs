//! Bit-level protocol simulation with Poissonian sources and threshold
//! detectors on the honest channel.
//!
//! Per pulse: Alice draws a symbol (Z0/Z1 each with p_a_z/2, X0 with p_a_x)
//! and a Poissonian photon number at the basis intensity; Bob draws a basis;
//! the detector clicks from surviving photons or a dark count. A matched-
//! basis click records the wrong bit with probability `e_d` when photon-borne
//! and 1/2 when it was a pure dark count. Mismatched bases are discarded.
//!
//! Every pulse draws from its own counter-based RNG stream keyed by
//! `(seed, pulse_index)`, so tallies are bit-identical however the pulse
//! range is partitioned across threads.

use crate::encoder::StateSymbol;
use crate::rng::PulseRng;
use crate::security::{
    no_decoy_bounds, ChannelParams, GainError, KeyRatePoint, ProtocolConfig, RateStatus,
    SecurityError, SourceIntensities,
};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum McError {
    #[error("invalid Monte Carlo configuration: {0}")]
    InvalidConfig(String),
    #[error("insufficient statistics: {0}")]
    InsufficientStatistics(String),
    #[error(transparent)]
    Security(#[from] SecurityError),
}

/// One protocol run's configuration.
#[derive(Clone, Debug)]
pub struct TrialConfig {
    pub n_pulses: u64,
    pub seed: u64,
    /// Decoy-free source intensities (the transmitter has no intensity
    /// modulation).
    pub source: SourceIntensities,
    pub channel: ChannelParams,
    pub protocol: ProtocolConfig,
}

impl TrialConfig {
    pub fn validate(&self) -> Result<(f64, f64), McError> {
        self.channel.validate()?;
        self.protocol.validate()?;
        self.source.validate()?;
        match self.source {
            SourceIntensities::NoDecoy { mu, nu } => Ok((mu, nu)),
            SourceIntensities::Decoy { .. } => Err(McError::InvalidConfig(
                "the Monte Carlo models the decoy-free source only".into(),
            )),
        }
    }
}

/// Event tallies of one run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct TallyCounts {
    pub n_pulses: u64,
    pub seed: u64,
    pub sent_z0: u64,
    pub sent_z1: u64,
    pub sent_x0: u64,
    /// Pulses with matching bases (denominator of the gain estimate).
    pub matched_z: u64,
    pub matched_x: u64,
    /// Matched-basis detections.
    pub sifted_z: u64,
    pub sifted_x: u64,
    pub errors_z: u64,
    pub errors_x: u64,
}

impl TallyCounts {
    fn merge(mut self, other: TallyCounts) -> TallyCounts {
        self.sent_z0 += other.sent_z0;
        self.sent_z1 += other.sent_z1;
        self.sent_x0 += other.sent_x0;
        self.matched_z += other.matched_z;
        self.matched_x += other.matched_x;
        self.sifted_z += other.sifted_z;
        self.sifted_x += other.sifted_x;
        self.errors_z += other.errors_z;
        self.errors_x += other.errors_x;
        self
    }

    fn ratio(num: u64, den: u64) -> f64 {
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64
        }
    }

    /// Empirical Z-basis gain.
    pub fn q_z(&self) -> f64 {
        Self::ratio(self.sifted_z, self.matched_z)
    }

    /// Empirical Z-basis error rate.
    pub fn e_z(&self) -> f64 {
        Self::ratio(self.errors_z, self.sifted_z)
    }

    pub fn q_x(&self) -> f64 {
        Self::ratio(self.sifted_x, self.matched_x)
    }

    pub fn e_x(&self) -> f64 {
        Self::ratio(self.errors_x, self.sifted_x)
    }

    fn stderr(p: f64, n: u64) -> f64 {
        if n == 0 {
            0.0
        } else {
            (p * (1.0 - p) / n as f64).sqrt()
        }
    }

    /// Binomial standard errors of (q_z, e_z, q_x, e_x).
    pub fn standard_errors(&self) -> (f64, f64, f64, f64) {
        (
            Self::stderr(self.q_z(), self.matched_z),
            Self::stderr(self.e_z(), self.sifted_z),
            Self::stderr(self.q_x(), self.matched_x),
            Self::stderr(self.e_x(), self.sifted_x),
        )
    }
}

/// Inverse-CDF Poisson sampler; one uniform per draw.
#[inline]
fn sample_poisson(lambda: f64, u: f64) -> u32 {
    if lambda <= 0.0 {
        return 0;
    }
    let mut p = (-lambda).exp();
    let mut cum = p;
    let mut k = 0u32;
    while u >= cum && k < 200 {
        k += 1;
        p *= lambda / k as f64;
        cum += p;
    }
    k
}

/// Simulate one pulse. `survive` is the per-photon transmission times
/// detection efficiency.
#[inline]
#[allow(clippy::too_many_arguments)]
fn simulate_pulse(
    index: u64,
    seed: u64,
    mu: f64,
    nu: f64,
    survive: f64,
    p_dc: f64,
    e_d: f64,
    p_a_z: f64,
    p_b_z: f64,
) -> TallyCounts {
    let mut rng = PulseRng::new(seed, index);
    let mut t = TallyCounts::default();

    let u_sym = rng.next_f64();
    let (symbol, intensity) = if u_sym < p_a_z / 2.0 {
        (StateSymbol::Z0, mu)
    } else if u_sym < p_a_z {
        (StateSymbol::Z1, mu)
    } else {
        (StateSymbol::X0, nu)
    };
    match symbol {
        StateSymbol::Z0 => t.sent_z0 = 1,
        StateSymbol::Z1 => t.sent_z1 = 1,
        StateSymbol::X0 => t.sent_x0 = 1,
    }

    let bob_z = rng.next_f64() < p_b_z;
    let n_photons = sample_poisson(intensity, rng.next_f64());
    let p_click_photon = 1.0 - (1.0 - survive).powi(n_photons as i32);
    let photon_click = rng.next_f64() < p_click_photon;
    let dark_click = rng.next_f64() < p_dc;
    let clicked = photon_click || dark_click;

    let alice_z = symbol != StateSymbol::X0;
    if alice_z == bob_z {
        if alice_z {
            t.matched_z = 1;
        } else {
            t.matched_x = 1;
        }
        if clicked {
            let err_prob = if photon_click { e_d } else { 0.5 };
            let err = rng.next_f64() < err_prob;
            if alice_z {
                t.sifted_z = 1;
                t.errors_z = err as u64;
            } else {
                t.sifted_x = 1;
                t.errors_x = err as u64;
            }
        }
    }
    t
}

fn run_range(cfg: &TrialConfig, mu: f64, nu: f64, range: std::ops::Range<u64>) -> TallyCounts {
    let survive = cfg.channel.transparency() * cfg.channel.eta_det;
    let mut acc = TallyCounts::default();
    for i in range {
        acc = acc.merge(simulate_pulse(
            i,
            cfg.seed,
            mu,
            nu,
            survive,
            cfg.channel.p_dc,
            cfg.channel.e_d,
            cfg.protocol.p_a_z,
            cfg.protocol.p_b_z,
        ));
    }
    acc
}

/// Run the protocol over `n_pulses` pulses.
pub fn run_protocol(cfg: &TrialConfig) -> Result<TallyCounts, McError> {
    let (mu, nu) = cfg.validate()?;
    #[cfg(feature = "parallel")]
    let mut tally = {
        use rayon::prelude::*;
        const CHUNK: u64 = 1 << 16;
        let n_chunks = cfg.n_pulses.div_ceil(CHUNK);
        (0..n_chunks)
            .into_par_iter()
            .map(|c| {
                let lo = c * CHUNK;
                let hi = ((c + 1) * CHUNK).min(cfg.n_pulses);
                run_range(cfg, mu, nu, lo..hi)
            })
            .reduce(TallyCounts::default, TallyCounts::merge)
    };
    #[cfg(not(feature = "parallel"))]
    let mut tally = run_range(cfg, mu, nu, 0..cfg.n_pulses);
    tally.n_pulses = cfg.n_pulses;
    tally.seed = cfg.seed;
    Ok(tally)
}

/// Sequential reference implementation of [`run_protocol`]; the parallel
/// path must produce bit-identical tallies.
pub fn run_protocol_serial(cfg: &TrialConfig) -> Result<TallyCounts, McError> {
    let (mu, nu) = cfg.validate()?;
    let mut tally = run_range(cfg, mu, nu, 0..cfg.n_pulses);
    tally.n_pulses = cfg.n_pulses;
    tally.seed = cfg.seed;
    Ok(tally)
}

/// Feed empirical gains and error rates through the decoy-free key-rate
/// computation, exactly as [`crate::security::secret_key_rate`] does with
/// analytic values.
pub fn empirical_key_rate(tally: &TallyCounts, cfg: &TrialConfig) -> Result<KeyRatePoint, McError> {
    let (mu, nu) = cfg.validate()?;
    if tally.sifted_z == 0 || tally.sifted_x == 0 {
        return Err(McError::InsufficientStatistics(format!(
            "no detections in {} basis",
            if tally.sifted_z == 0 {
                "the Z"
            } else {
                "the X"
            }
        )));
    }
    let z = GainError {
        q: tally.q_z(),
        e: tally.e_z(),
    };
    let x = GainError {
        q: tally.q_x(),
        e: tally.e_x(),
    };
    let bounds = no_decoy_bounds(z, x, mu, nu);
    Ok(finish_no_decoy_rate(
        cfg.channel.distance_km,
        z,
        x,
        bounds,
        &cfg.protocol,
    )?)
}

/// Decoy-free rate assembly shared with the analytic path (same formulas,
/// same clamps), so identical inputs give identical outputs.
pub(crate) fn finish_no_decoy_rate(
    distance_km: f64,
    z: GainError,
    x: GainError,
    bounds: crate::security::SecrecyBounds,
    protocol: &ProtocolConfig,
) -> Result<KeyRatePoint, SecurityError> {
    use crate::security::{binary_entropy, fl_reduction};
    if bounds.status != RateStatus::Ok || bounds.e_up_z >= 0.5 || bounds.e_up_x >= 0.5 {
        return Ok(KeyRatePoint {
            distance_km,
            gains_z: vec![z],
            gains_x: vec![x],
            bounds,
            r_reduction: 0.0,
            kappa: 0.5,
            rate_per_pulse: 0.0,
            bits_per_second: 0.0,
            bits_per_second_raw: 0.0,
            status: RateStatus::InsecureIndeterminate,
        });
    }
    let (r, kappa) = fl_reduction(bounds.e_up_z, bounds.e_up_x)?;
    let rate = (bounds.q_low * r - protocol.f_ec * z.q * binary_entropy(z.e)).max(0.0);
    let status = if rate > 0.0 {
        RateStatus::Ok
    } else {
        RateStatus::InsecureIndeterminate
    };
    let raw = rate * protocol.f_prep_hz;
    Ok(KeyRatePoint {
        distance_km,
        gains_z: vec![z],
        gains_x: vec![x],
        bounds,
        r_reduction: r,
        kappa,
        rate_per_pulse: rate,
        bits_per_second: raw * protocol.p_a_z * protocol.p_b_z,
        bits_per_second_raw: raw,
        status,
    })
}

/// Tally JSON interchange document.
pub fn tally_json(tally: &TallyCounts) -> String {
    let (sq_z, se_z, sq_x, se_x) = tally.standard_errors();
    let doc = serde_json::json!({
        "sent": { "z0": tally.sent_z0, "z1": tally.sent_z1, "x0": tally.sent_x0 },
        "matched": { "z": tally.matched_z, "x": tally.matched_x },
        "sifted": { "z": tally.sifted_z, "x": tally.sifted_x },
        "errors": { "z": tally.errors_z, "x": tally.errors_x },
        "q_z": tally.q_z(),
        "e_z": tally.e_z(),
        "q_x": tally.q_x(),
        "e_x": tally.e_x(),
        "stderr": { "q_z": sq_z, "e_z": se_z, "q_x": sq_x, "e_x": se_x },
        "seed": tally.seed,
        "n_pulses": tally.n_pulses,
    });
    serde_json::to_string_pretty(&doc).expect("tally serialize")
}
