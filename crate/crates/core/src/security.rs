//! Gains, error rates, secrecy bounds, and secret key rates for the
//! three-state protocol, with and without decoy states.
//!
//! The analytic channel gives per-intensity gain and error rate
//! `Q = 1 - (1-p_dc) e^{-t eps gamma}`,
//! `E = (p_dc/2 + E_d (1 - e^{-t eps gamma})) / Q` with `t = 10^{-xi L / 10}`.
//! Decoy operation bounds the single-photon yield and error; decoy-free
//! operation bounds the combined vacuum+single-photon gain. Privacy
//! amplification uses the three-state reduction factor
//! `r(omega, theta) = 1 - h(kappa)` with
//! `kappa = omega * max_{delta <= 1}(eps^2 + delta^2)`.

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SecurityError {
    #[error("probability out of range: {0}")]
    InvalidProbability(String),
    #[error("intensity ordering violated: {0}")]
    IntensityOrdering(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// Quantum-channel and detector parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ChannelParams {
    /// Fiber loss (dB/km).
    pub xi_db_per_km: f64,
    /// Channel length (km).
    pub distance_km: f64,
    /// Dark count probability per gate.
    pub p_dc: f64,
    /// Detection efficiency.
    pub eta_det: f64,
    /// Detection error probability.
    pub e_d: f64,
}

impl ChannelParams {
    /// Reference channel: 0.2 dB/km fiber, 15% detectors, 1e-6 dark counts,
    /// 1% detection errors.
    pub fn default_channel() -> Self {
        Self {
            xi_db_per_km: 0.2,
            distance_km: 0.0,
            p_dc: 1e-6,
            eta_det: 0.15,
            e_d: 0.01,
        }
    }

    pub fn with_distance(mut self, l_km: f64) -> Self {
        self.distance_km = l_km;
        self
    }

    /// Channel transparency `t = 10^{-xi L / 10}`.
    pub fn transparency(&self) -> f64 {
        10f64.powf(-self.xi_db_per_km * self.distance_km / 10.0)
    }

    pub fn validate(&self) -> Result<(), SecurityError> {
        for (name, v) in [
            ("p_dc", self.p_dc),
            ("eta_det", self.eta_det),
            ("e_d", self.e_d),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(SecurityError::InvalidProbability(format!(
                    "{name} = {v} must lie in [0, 1]"
                )));
            }
        }
        if self.xi_db_per_km < 0.0 || self.distance_km < 0.0 {
            return Err(SecurityError::InvalidConfig(
                "xi_db_per_km and distance_km must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Signal (and decoy) mean photon numbers per basis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum SourceIntensities {
    /// Single intensity per basis.
    NoDecoy { mu: f64, nu: f64 },
    /// Signal plus two decoys per basis; requires `0 <= mu2 < mu1` and
    /// `mu1 + mu2 < mu0` (same for the X-basis intensities).
    Decoy {
        mu0: f64,
        mu1: f64,
        mu2: f64,
        nu0: f64,
        nu1: f64,
        nu2: f64,
    },
}

impl SourceIntensities {
    /// Reference decoy-free intensities: mu = 0.024, nu = 2*mu.
    pub fn default_no_decoy() -> Self {
        SourceIntensities::NoDecoy {
            mu: 0.024,
            nu: 0.048,
        }
    }

    /// Reference decoy intensities: (0.657, 0.033, 0) in Z and doubled in X
    /// except the vacuum decoy.
    pub fn default_decoy() -> Self {
        SourceIntensities::Decoy {
            mu0: 0.657,
            mu1: 0.033,
            mu2: 0.0,
            nu0: 1.314,
            nu1: 0.066,
            nu2: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), SecurityError> {
        match *self {
            SourceIntensities::NoDecoy { mu, nu } => {
                if mu < 0.0 || nu < 0.0 {
                    return Err(SecurityError::InvalidConfig(
                        "intensities must be non-negative".into(),
                    ));
                }
            }
            SourceIntensities::Decoy {
                mu0,
                mu1,
                mu2,
                nu0,
                nu1,
                nu2,
            } => {
                check_decoy_ordering(mu0, mu1, mu2, "mu")?;
                check_decoy_ordering(nu0, nu1, nu2, "nu")?;
            }
        }
        Ok(())
    }
}

fn check_decoy_ordering(g0: f64, g1: f64, g2: f64, base: &str) -> Result<(), SecurityError> {
    if g2 < 0.0 || g2 >= g1 {
        return Err(SecurityError::IntensityOrdering(format!(
            "need 0 <= {base}_2 < {base}_1 (got {base}_2 = {g2}, {base}_1 = {g1})"
        )));
    }
    if g1 + g2 >= g0 {
        return Err(SecurityError::IntensityOrdering(format!(
            "need {base}_1 + {base}_2 < {base}_0 (got {g1} + {g2} vs {base}_0 = {g0})"
        )));
    }
    Ok(())
}

/// Basis choice probabilities, error-correction efficiency, and preparation
/// rate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ProtocolConfig {
    pub p_a_z: f64,
    pub p_a_x: f64,
    pub p_b_z: f64,
    pub p_b_x: f64,
    /// Error correction efficiency (>= 1).
    pub f_ec: f64,
    /// Quantum state preparation frequency (Hz).
    pub f_prep_hz: f64,
}

impl ProtocolConfig {
    pub fn default_protocol() -> Self {
        Self {
            p_a_z: 0.5,
            p_a_x: 0.5,
            p_b_z: 0.5,
            p_b_x: 0.5,
            f_ec: 1.22,
            f_prep_hz: 100e6,
        }
    }

    pub fn validate(&self) -> Result<(), SecurityError> {
        for (name, v) in [
            ("p_a_z", self.p_a_z),
            ("p_a_x", self.p_a_x),
            ("p_b_z", self.p_b_z),
            ("p_b_x", self.p_b_x),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(SecurityError::InvalidProbability(format!(
                    "{name} = {v} must lie in [0, 1]"
                )));
            }
        }
        if (self.p_a_z + self.p_a_x - 1.0).abs() > 1e-9 {
            return Err(SecurityError::InvalidConfig(
                "p_a_z + p_a_x must equal 1".into(),
            ));
        }
        if (self.p_b_z + self.p_b_x - 1.0).abs() > 1e-9 {
            return Err(SecurityError::InvalidConfig(
                "p_b_z + p_b_x must equal 1".into(),
            ));
        }
        if self.f_ec < 1.0 {
            return Err(SecurityError::InvalidConfig("f_ec must be >= 1".into()));
        }
        if self.f_prep_hz < 0.0 {
            return Err(SecurityError::InvalidConfig(
                "f_prep_hz must be >= 0".into(),
            ));
        }
        Ok(())
    }

    /// Probability that a sifted event came from the Z basis.
    pub fn sifted_p_z(&self) -> f64 {
        let zz = self.p_a_z * self.p_b_z;
        let xx = self.p_a_x * self.p_b_x;
        zz / (zz + xx)
    }

    /// Probability that a sifted event came from the X basis.
    pub fn sifted_p_x(&self) -> f64 {
        1.0 - self.sifted_p_z()
    }
}

/// Measured (or modeled) gain and bit error rate of one pulse class.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GainError {
    /// Detection probability per sent pulse.
    pub q: f64,
    /// Bit error rate among detections.
    pub e: f64,
}

/// Whether a rate evaluation produced usable secrecy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum RateStatus {
    #[serde(rename = "ok")]
    Ok,
    #[serde(rename = "insecure/indeterminate")]
    InsecureIndeterminate,
}

impl std::fmt::Display for RateStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RateStatus::Ok => "ok",
            RateStatus::InsecureIndeterminate => "insecure/indeterminate",
        })
    }
}

/// Bounds on the secret-capable fraction of the sifted key.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SecrecyBounds {
    /// Lower bound on the secret-capable gain (single-photon gain with
    /// decoys, vacuum+single-photon gain without).
    pub q_low: f64,
    /// Upper bound on the Z-basis error rate of that fraction.
    pub e_up_z: f64,
    /// Upper bound on the X-basis error rate of that fraction.
    pub e_up_x: f64,
    /// Vacuum yield lower bound (decoy mode only).
    pub y0_low: Option<f64>,
    /// Single-photon yield lower bound (decoy mode only).
    pub y1_low: Option<f64>,
    pub status: RateStatus,
}

/// Intermediates of the three-state reduction at the maximizing delta.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct FlIntermediates {
    pub omega: f64,
    pub theta: f64,
    /// (1 - omega) / omega.
    pub omega_t: f64,
    /// (1 - theta) / theta.
    pub theta_t: f64,
    /// Maximizing delta in [0, 1].
    pub delta: f64,
    /// Auxiliary epsilon at the maximizing delta.
    pub eps_aux: f64,
    /// Phase error rate, clamped to [0, 0.5].
    pub kappa: f64,
}

/// Secret key rate at one distance with everything that went into it.
#[derive(Clone, Debug, Serialize)]
pub struct KeyRatePoint {
    pub distance_km: f64,
    /// Per-intensity gain/error in the Z basis (signal first).
    pub gains_z: Vec<GainError>,
    /// Per-intensity gain/error in the X basis (signal first).
    pub gains_x: Vec<GainError>,
    pub bounds: SecrecyBounds,
    /// Privacy-amplification reduction factor.
    pub r_reduction: f64,
    /// Phase error rate behind `r_reduction`.
    pub kappa: f64,
    /// Secret key rate per prepared pulse, clamped at zero.
    pub rate_per_pulse: f64,
    /// `R * f_prep * pA_z * pB_z`.
    pub bits_per_second: f64,
    /// `R * f_prep`, before the basis-matching factor.
    pub bits_per_second_raw: f64,
    pub status: RateStatus,
}

/// Distance scan result.
#[derive(Clone, Debug, Serialize)]
pub struct DistanceScan {
    pub points: Vec<KeyRatePoint>,
    /// Largest distance with positive rate, bisection-refined to 0.1 km.
    pub max_distance_km: Option<f64>,
}

/// Base-2 binary entropy; `h(0) = h(1) = 0` by continuity.
///
/// Panics if `p` lies outside `[0, 1]`.
pub fn binary_entropy(p: f64) -> f64 {
    assert!(
        (0.0..=1.0).contains(&p),
        "binary_entropy: p = {p} outside [0, 1]"
    );
    if p == 0.0 || p == 1.0 {
        return 0.0;
    }
    -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
}

/// Gain and error rate of intensity `gamma` through the analytic channel.
pub fn channel_model(gamma: f64, ch: &ChannelParams) -> GainError {
    let x = ch.transparency() * ch.eta_det * gamma;
    let q = 1.0 - (1.0 - ch.p_dc) * (-x).exp();
    let e = if q > 0.0 {
        ((ch.p_dc / 2.0 + ch.e_d * (1.0 - (-x).exp())) / q).min(1.0)
    } else {
        0.0
    };
    GainError { q, e }
}

/// Decoy-state bounds for one basis: vacuum yield, single-photon yield,
/// single-photon gain (all lower bounds) and single-photon error rate
/// (upper bound).
///
/// `gains` and `intensities` are ordered signal, decoy 1, decoy 2 and must
/// satisfy `0 <= g2 < g1` and `g1 + g2 < g0`.
pub fn decoy_bounds(
    gains: &[GainError; 3],
    intensities: &[f64; 3],
) -> Result<(f64, f64, f64, f64, RateStatus), SecurityError> {
    let [g0, g1, g2] = *intensities;
    check_decoy_ordering(g0, g1, g2, "gamma")?;
    let [s0, s1, s2] = *gains;

    let y0 = ((g1 * s2.q * g2.exp() - g2 * s1.q * g1.exp()) / (g1 - g2)).max(0.0);
    let y1 = (g0 / (g0 * g1 - g0 * g2 - g1 * g1 + g2 * g2)
        * (s1.q * g1.exp()
            - s2.q * g2.exp()
            - (g1 * g1 - g2 * g2) / (g0 * g0) * (s0.q * g0.exp() - y0)))
        .max(0.0);
    let q1 = g0 * (-g0).exp() * y1;
    if y1 <= 0.0 {
        return Ok((y0, 0.0, 0.0, 1.0, RateStatus::InsecureIndeterminate));
    }
    let e1 = ((s1.e * s1.q * g1.exp() - s2.e * s2.q * g2.exp()) / ((g1 - g2) * y1)).clamp(0.0, 1.0);
    Ok((y0, y1, q1, e1, RateStatus::Ok))
}

/// Decoy-free bounds on the combined vacuum+single-photon gain and the
/// matching worst-case error rates, for both bases.
pub fn no_decoy_bounds(z: GainError, x: GainError, mu: f64, nu: f64) -> SecrecyBounds {
    let q_low_z = (z.q - 1.0 + (1.0 + mu) * (-mu).exp()).max(0.0);
    let q_low_x = (x.q - 1.0 + (1.0 + nu) * (-nu).exp()).max(0.0);
    if q_low_z <= 0.0 || q_low_x <= 0.0 {
        return SecrecyBounds {
            q_low: 0.0,
            e_up_z: 1.0,
            e_up_x: 1.0,
            y0_low: None,
            y1_low: None,
            status: RateStatus::InsecureIndeterminate,
        };
    }
    SecrecyBounds {
        q_low: q_low_z,
        e_up_z: (z.e * z.q / q_low_z).clamp(0.0, 1.0),
        e_up_x: (x.e * x.q / q_low_x).clamp(0.0, 1.0),
        y0_low: None,
        y1_low: None,
        status: RateStatus::Ok,
    }
}

/// Feasibility bracket under the square root in the auxiliary epsilon.
#[inline]
fn fl_bracket(omega_t: f64, theta_t: f64, delta: f64) -> f64 {
    let s = (theta_t * (1.0 - delta * delta)).max(0.0).sqrt();
    omega_t * (theta_t + 1.0) - 1.0 - delta * delta * (theta_t - 1.0) - 2.0 * delta * s
}

#[inline]
fn fl_objective(theta: f64, omega_t: f64, theta_t: f64, delta: f64) -> Option<(f64, f64)> {
    let b = fl_bracket(omega_t, theta_t, delta);
    if b < 0.0 {
        return None;
    }
    let s = (theta_t * (1.0 - delta * delta)).max(0.0).sqrt();
    let eps = theta * (theta_t * delta + s + b.sqrt());
    Some((eps * eps + delta * delta, eps))
}

/// Three-state reduction factor and its intermediates.
///
/// Maximizes `eps(delta)^2 + delta^2` over the feasible part of
/// `delta in [0, 1]` (where the bracket under the square root is
/// non-negative), scanning a fine grid and refining each feasible
/// sub-interval with golden-section search around the best grid point.
pub fn fl_reduction_detailed(omega: f64, theta: f64) -> Result<FlIntermediates, SecurityError> {
    for (name, v) in [("omega", omega), ("theta", theta)] {
        if !(0.0..=0.5).contains(&v) {
            return Err(SecurityError::InvalidProbability(format!(
                "{name} = {v} outside [0, 0.5]"
            )));
        }
    }
    // continuity limits at the domain edges
    if omega == 0.0 {
        return Ok(FlIntermediates {
            omega,
            theta,
            omega_t: f64::INFINITY,
            theta_t: if theta > 0.0 {
                (1.0 - theta) / theta
            } else {
                f64::INFINITY
            },
            delta: 0.0,
            eps_aux: 0.0,
            kappa: theta.min(0.5),
        });
    }
    if theta == 0.0 {
        return Ok(FlIntermediates {
            omega,
            theta,
            omega_t: (1.0 - omega) / omega,
            theta_t: f64::INFINITY,
            delta: 1.0,
            eps_aux: 1.0,
            kappa: (2.0 * omega).min(0.5),
        });
    }

    let omega_t = (1.0 - omega) / omega;
    let theta_t = (1.0 - theta) / theta;
    const GRID: usize = 10_000;
    let mut best: Option<(f64, f64, f64)> = None; // (objective, delta, eps)
    let mut feasible_any = false;
    for i in 0..=GRID {
        let d = i as f64 / GRID as f64;
        if let Some((obj, eps)) = fl_objective(theta, omega_t, theta_t, d) {
            feasible_any = true;
            if best.is_none_or(|(b, _, _)| obj > b) {
                best = Some((obj, d, eps));
            }
        }
    }
    if !feasible_any {
        // empty feasible set: no usable bound, treat as fully noisy
        return Ok(FlIntermediates {
            omega,
            theta,
            omega_t,
            theta_t,
            delta: 0.0,
            eps_aux: 0.0,
            kappa: 0.5,
        });
    }
    let (_, d_best, _) = best.unwrap();
    // golden-section refinement inside the bracketing grid cells
    let mut lo = (d_best - 1.0 / GRID as f64).max(0.0);
    let mut hi = (d_best + 1.0 / GRID as f64).min(1.0);
    let value = |d: f64| {
        fl_objective(theta, omega_t, theta_t, d)
            .map(|(obj, _)| obj)
            .unwrap_or(f64::NEG_INFINITY)
    };
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = value(x1);
    let mut f2 = value(x2);
    for _ in 0..80 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = value(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = value(x1);
        }
    }
    let refined = 0.5 * (lo + hi);
    let (grid_obj, grid_delta, grid_eps) = best.unwrap();
    let (obj, delta, eps) = match fl_objective(theta, omega_t, theta_t, refined) {
        Some((obj, eps)) if obj >= grid_obj => (obj, refined, eps),
        _ => (grid_obj, grid_delta, grid_eps),
    };
    Ok(FlIntermediates {
        omega,
        theta,
        omega_t,
        theta_t,
        delta,
        eps_aux: eps,
        kappa: (omega * obj).min(0.5),
    })
}

/// Three-state reduction factor `r = max(1 - h(kappa), 0)` and the phase
/// error rate `kappa`.
pub fn fl_reduction(omega: f64, theta: f64) -> Result<(f64, f64), SecurityError> {
    let fl = fl_reduction_detailed(omega, theta)?;
    let r = (1.0 - binary_entropy(fl.kappa)).max(0.0);
    Ok((r, fl.kappa))
}

fn zero_rate_point(
    distance_km: f64,
    gains_z: Vec<GainError>,
    gains_x: Vec<GainError>,
    bounds: SecrecyBounds,
) -> KeyRatePoint {
    KeyRatePoint {
        distance_km,
        gains_z,
        gains_x,
        bounds,
        r_reduction: 0.0,
        kappa: 0.5,
        rate_per_pulse: 0.0,
        bits_per_second: 0.0,
        bits_per_second_raw: 0.0,
        status: RateStatus::InsecureIndeterminate,
    }
}

/// Secret key rate per pulse and per second at the channel's distance.
pub fn secret_key_rate(
    mode: &SourceIntensities,
    ch: &ChannelParams,
    cfg: &ProtocolConfig,
) -> Result<KeyRatePoint, SecurityError> {
    mode.validate()?;
    ch.validate()?;
    cfg.validate()?;
    let l = ch.distance_km;
    match *mode {
        SourceIntensities::NoDecoy { mu, nu } => {
            let z = channel_model(mu, ch);
            let x = channel_model(nu, ch);
            let bounds = no_decoy_bounds(z, x, mu, nu);
            finish_rate(l, vec![z], vec![x], bounds, z, cfg)
        }
        SourceIntensities::Decoy {
            mu0,
            mu1,
            mu2,
            nu0,
            nu1,
            nu2,
        } => {
            let gz = [
                channel_model(mu0, ch),
                channel_model(mu1, ch),
                channel_model(mu2, ch),
            ];
            let gx = [
                channel_model(nu0, ch),
                channel_model(nu1, ch),
                channel_model(nu2, ch),
            ];
            let (y0, y1, q1, e1z, st_z) = decoy_bounds(&gz, &[mu0, mu1, mu2])?;
            let (_, _, _, e1x, st_x) = decoy_bounds(&gx, &[nu0, nu1, nu2])?;
            let status = if st_z == RateStatus::Ok && st_x == RateStatus::Ok {
                RateStatus::Ok
            } else {
                RateStatus::InsecureIndeterminate
            };
            let bounds = SecrecyBounds {
                q_low: q1,
                e_up_z: e1z,
                e_up_x: e1x,
                y0_low: Some(y0),
                y1_low: Some(y1),
                status,
            };
            finish_rate(l, gz.to_vec(), gx.to_vec(), bounds, gz[0], cfg)
        }
    }
}

fn finish_rate(
    distance_km: f64,
    gains_z: Vec<GainError>,
    gains_x: Vec<GainError>,
    bounds: SecrecyBounds,
    signal_z: GainError,
    cfg: &ProtocolConfig,
) -> Result<KeyRatePoint, SecurityError> {
    if bounds.status != RateStatus::Ok {
        return Ok(zero_rate_point(distance_km, gains_z, gains_x, bounds));
    }
    // error bounds at or above 1/2 carry no extractable key
    if bounds.e_up_z >= 0.5 || bounds.e_up_x >= 0.5 {
        return Ok(zero_rate_point(distance_km, gains_z, gains_x, bounds));
    }
    let (r, kappa) = fl_reduction(bounds.e_up_z, bounds.e_up_x)?;
    let rate = (bounds.q_low * r - cfg.f_ec * signal_z.q * binary_entropy(signal_z.e)).max(0.0);
    let status = if rate > 0.0 {
        RateStatus::Ok
    } else {
        RateStatus::InsecureIndeterminate
    };
    let raw = rate * cfg.f_prep_hz;
    Ok(KeyRatePoint {
        distance_km,
        gains_z,
        gains_x,
        bounds,
        r_reduction: r,
        kappa,
        rate_per_pulse: rate,
        bits_per_second: raw * cfg.p_a_z * cfg.p_b_z,
        bits_per_second_raw: raw,
        status,
    })
}

fn scan_grid(l_min: f64, l_max: f64, step: f64) -> Vec<f64> {
    let mut grid = Vec::new();
    let mut k = 0u64;
    loop {
        let l = l_min + k as f64 * step;
        if l > l_max + 1e-9 {
            break;
        }
        grid.push(l);
        k += 1;
    }
    grid
}

fn eval_grid(
    grid: &[f64],
    mode: &SourceIntensities,
    ch_template: &ChannelParams,
    cfg: &ProtocolConfig,
) -> Result<Vec<KeyRatePoint>, SecurityError> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        grid.par_iter()
            .map(|&l| secret_key_rate(mode, &ch_template.with_distance(l), cfg))
            .collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        grid.iter()
            .map(|&l| secret_key_rate(mode, &ch_template.with_distance(l), cfg))
            .collect()
    }
}

fn eval_grid_serial(
    grid: &[f64],
    mode: &SourceIntensities,
    ch_template: &ChannelParams,
    cfg: &ProtocolConfig,
) -> Result<Vec<KeyRatePoint>, SecurityError> {
    grid.iter()
        .map(|&l| secret_key_rate(mode, &ch_template.with_distance(l), cfg))
        .collect()
}

fn refine_and_finish(
    points: Vec<KeyRatePoint>,
    mode: &SourceIntensities,
    ch_template: &ChannelParams,
    cfg: &ProtocolConfig,
    l_max: f64,
    step: f64,
) -> Result<DistanceScan, SecurityError> {
    let last_pos = points
        .iter()
        .rev()
        .find(|p| p.rate_per_pulse > 0.0)
        .map(|p| p.distance_km);
    let max_distance_km = match last_pos {
        None => None,
        Some(lp) if lp + step > l_max + 1e-9 => Some(lp),
        Some(lp) => {
            let mut lo = lp;
            let mut hi = lp + step;
            while hi - lo > 0.1 {
                let mid = 0.5 * (lo + hi);
                let p = secret_key_rate(mode, &ch_template.with_distance(mid), cfg)?;
                if p.rate_per_pulse > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            Some(lo)
        }
    };
    Ok(DistanceScan {
        points,
        max_distance_km,
    })
}

/// Evaluate the key rate on a distance grid and locate the maximum secure
/// distance. Grid points are independent and evaluated in parallel when the
/// `parallel` feature is on; output order is by distance either way.
pub fn scan_distance(
    mode: &SourceIntensities,
    ch_template: &ChannelParams,
    cfg: &ProtocolConfig,
    l_min_km: f64,
    l_max_km: f64,
    step_km: f64,
) -> Result<DistanceScan, SecurityError> {
    if !(step_km > 0.0) || l_min_km > l_max_km || l_min_km < 0.0 {
        return Err(SecurityError::InvalidConfig(
            "need 0 <= l_min <= l_max and step > 0".into(),
        ));
    }
    let grid = scan_grid(l_min_km, l_max_km, step_km);
    let points = eval_grid(&grid, mode, ch_template, cfg)?;
    refine_and_finish(points, mode, ch_template, cfg, l_max_km, step_km)
}

/// Sequential reference implementation of [`scan_distance`]; used by the
/// benches and the determinism tests.
pub fn scan_distance_serial(
    mode: &SourceIntensities,
    ch_template: &ChannelParams,
    cfg: &ProtocolConfig,
    l_min_km: f64,
    l_max_km: f64,
    step_km: f64,
) -> Result<DistanceScan, SecurityError> {
    if !(step_km > 0.0) || l_min_km > l_max_km || l_min_km < 0.0 {
        return Err(SecurityError::InvalidConfig(
            "need 0 <= l_min <= l_max and step > 0".into(),
        ));
    }
    let grid = scan_grid(l_min_km, l_max_km, step_km);
    let points = eval_grid_serial(&grid, mode, ch_template, cfg)?;
    refine_and_finish(points, mode, ch_template, cfg, l_max_km, step_km)
}

/// Convenience grid search for the decoy-free signal intensity (with
/// `nu = 2 mu`) that maximizes the rate at a fixed distance.
pub fn best_no_decoy_mu(
    ch: &ChannelParams,
    cfg: &ProtocolConfig,
    mu_grid: &[f64],
) -> Result<Option<(f64, f64)>, SecurityError> {
    let mut best: Option<(f64, f64)> = None;
    for &mu in mu_grid {
        let mode = SourceIntensities::NoDecoy { mu, nu: 2.0 * mu };
        let p = secret_key_rate(&mode, ch, cfg)?;
        if p.rate_per_pulse > best.map_or(0.0, |(_, r)| r) {
            best = Some((mu, p.rate_per_pulse));
        }
    }
    Ok(best)
}

/// CSV export of a scan: one row per grid point.
pub fn scan_csv(points: &[KeyRatePoint]) -> String {
    let mut out = String::with_capacity(points.len() * 160 + 128);
    out.push_str(
        "L_km,Q_signal_Z,E_signal_Z,Q_signal_X,E_signal_X,bound_gain_low,bound_Ez_up,bound_Ex_up,r,R,bits_per_sec,status\n",
    );
    for p in points {
        let z = p
            .gains_z
            .first()
            .copied()
            .unwrap_or(GainError { q: 0.0, e: 0.0 });
        let x = p
            .gains_x
            .first()
            .copied()
            .unwrap_or(GainError { q: 0.0, e: 0.0 });
        out.push_str(&format!(
            "{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{}\n",
            p.distance_km,
            z.q,
            z.e,
            x.q,
            x.e,
            p.bounds.q_low,
            p.bounds.e_up_z,
            p.bounds.e_up_x,
            p.r_reduction,
            p.rate_per_pulse,
            p.bits_per_second,
            p.status,
        ));
    }
    out
}

/// JSON export of a single key-rate point.
pub fn keyrate_json(point: &KeyRatePoint) -> String {
    serde_json::to_string_pretty(point).expect("keyrate serialize")
}
