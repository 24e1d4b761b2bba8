//! Subcommand implementations.
//!
//! Each command validates its inputs fully before writing anything, writes
//! every artifact atomically (temp file + rename), and reports an outcome:
//! exit 0 on success, 1 when a computation is flagged insecure or
//! degenerate, 2 on configuration or I/O errors (in which case no files are
//! written).

use crate::config::RunConfig;
use std::io::Write;
use std::path::{Path, PathBuf};
use tbqkd_core::montecarlo::{empirical_key_rate, run_protocol, tally_json, McError};
use tbqkd_core::scenario::run_scenario;
use tbqkd_core::security::{
    channel_model, keyrate_json, scan_csv, scan_distance, secret_key_rate, RateStatus,
};

/// Result of one CLI invocation.
pub struct CommandOutcome {
    pub exit_code: i32,
    pub files: Vec<PathBuf>,
}

impl CommandOutcome {
    fn ok(files: Vec<PathBuf>) -> Self {
        Self {
            exit_code: 0,
            files,
        }
    }

    fn flagged(files: Vec<PathBuf>, diagnostic: &str) -> Self {
        eprintln!("flagged: {diagnostic}");
        Self {
            exit_code: 1,
            files,
        }
    }
}

/// Configuration or I/O failure; maps to exit code 2.
pub struct ConfigError(pub String);

impl<T: Into<String>> From<T> for ConfigError {
    fn from(s: T) -> Self {
        ConfigError(s.into())
    }
}

fn write_atomic(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, ConfigError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| format!("cannot create output directory {}: {e}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .map_err(|e| format!("cannot create temp file in {}: {e}", dir.display()))?;
    tmp.write_all(contents.as_bytes())
        .map_err(|e| format!("write failed: {e}"))?;
    let path = dir.join(name);
    tmp.persist(&path)
        .map_err(|e| format!("cannot move output into place: {e}"))?;
    Ok(path)
}

pub fn cmd_simulate(config: &RunConfig, out_dir: &Path) -> Result<CommandOutcome, ConfigError> {
    let scenario = config.scenario().map_err(ConfigError)?;
    let result = run_scenario(&scenario).map_err(|e| ConfigError(e.to_string()))?;

    let trace = result.trace_csv();
    let bins = tbqkd_core::encoder::bin_metrics_json(&result.metrics);
    let files = vec![
        write_atomic(out_dir, "scenario_trace.csv", &trace)?,
        write_atomic(out_dir, "bin_metrics.json", &bins)?,
    ];
    println!(
        "simulated {} slots at dt = {} ps; theta = {:.6} rad, attenuation = {:.2} dB",
        result.sequence.len(),
        scenario.dt * 1e12,
        result.theta,
        result.attenuation_db
    );
    if !result.classification_matches() {
        return Ok(CommandOutcome::flagged(
            files,
            &format!(
                "decoded sequence {:?} disagrees with the commanded {:?}",
                result.classified, result.sequence
            ),
        ));
    }
    Ok(CommandOutcome::ok(files))
}

pub fn cmd_keyrate(
    config: &RunConfig,
    distance: Option<f64>,
    out_dir: &Path,
) -> Result<CommandOutcome, ConfigError> {
    let mode = config.intensities().map_err(ConfigError)?;
    let ch = config.channel(distance).map_err(ConfigError)?;
    let protocol = config.protocol().map_err(ConfigError)?;
    let point = secret_key_rate(&mode, &ch, &protocol).map_err(|e| ConfigError(e.to_string()))?;

    let files = vec![write_atomic(
        out_dir,
        "keyrate_point.json",
        &keyrate_json(&point),
    )?];
    println!(
        "L = {} km: R = {:.6e} /pulse, {:.1} bit/s (raw {:.1} bit/s), status {}",
        point.distance_km,
        point.rate_per_pulse,
        point.bits_per_second,
        point.bits_per_second_raw,
        point.status
    );
    if point.status != RateStatus::Ok {
        return Ok(CommandOutcome::flagged(files, "key rate clamped to zero"));
    }
    Ok(CommandOutcome::ok(files))
}

pub fn cmd_scan(
    config: &RunConfig,
    from: f64,
    to: f64,
    step: f64,
    out_dir: &Path,
) -> Result<CommandOutcome, ConfigError> {
    if from > to || step <= 0.0 || from < 0.0 {
        return Err(ConfigError(format!(
            "invalid range: need 0 <= from <= to and step > 0 (got {from}..{to} step {step})"
        )));
    }
    let ch = config.channel(None).map_err(ConfigError)?;
    let protocol = config.protocol().map_err(ConfigError)?;
    let no_decoy = config.no_decoy_intensities().map_err(ConfigError)?;
    let decoy = config.decoy_intensities().map_err(ConfigError)?;

    let scan_nd = scan_distance(&no_decoy, &ch, &protocol, from, to, step)
        .map_err(|e| ConfigError(e.to_string()))?;
    let scan_dc = scan_distance(&decoy, &ch, &protocol, from, to, step)
        .map_err(|e| ConfigError(e.to_string()))?;

    let ratio = match (scan_dc.max_distance_km, scan_nd.max_distance_km) {
        (Some(d), Some(n)) if n > 0.0 => Some(d / n),
        _ => None,
    };
    let summary = serde_json::json!({
        "no_decoy": { "max_distance_km": scan_nd.max_distance_km },
        "decoy": { "max_distance_km": scan_dc.max_distance_km },
        "max_distance_ratio": ratio,
    });

    let files = vec![
        write_atomic(
            out_dir,
            "keyrate_scan_no_decoy.csv",
            &scan_csv(&scan_nd.points),
        )?,
        write_atomic(
            out_dir,
            "keyrate_scan_decoy.csv",
            &scan_csv(&scan_dc.points),
        )?,
        write_atomic(
            out_dir,
            "scan_summary.json",
            &serde_json::to_string_pretty(&summary).expect("summary serialize"),
        )?,
    ];
    println!(
        "max distance: no-decoy {:?} km, decoy {:?} km, ratio {:?}",
        scan_nd.max_distance_km, scan_dc.max_distance_km, ratio
    );
    Ok(CommandOutcome::ok(files))
}

pub fn cmd_montecarlo(
    config: &RunConfig,
    pulses: Option<u64>,
    seed: Option<u64>,
    distance: Option<f64>,
    out_dir: &Path,
) -> Result<CommandOutcome, ConfigError> {
    let trial = config.trial(pulses, seed, distance).map_err(ConfigError)?;
    let tally = run_protocol(&trial).map_err(|e| ConfigError(e.to_string()))?;

    let mut files = vec![write_atomic(out_dir, "tally.json", &tally_json(&tally))?];

    // analytic-vs-empirical comparison
    let (mu, _) = match trial.source {
        tbqkd_core::SourceIntensities::NoDecoy { mu, nu } => (mu, nu),
        _ => unreachable!("trial() builds a decoy-free source"),
    };
    let truth = channel_model(mu, &trial.channel);
    let (sq, se, _, _) = tally.standard_errors();
    println!(
        "L = {} km, {} pulses, seed {}",
        trial.channel.distance_km, trial.n_pulses, trial.seed
    );
    println!(
        "Q_Z: empirical {:.6e} vs analytic {:.6e} ({:+.2} sigma)",
        tally.q_z(),
        truth.q,
        if sq > 0.0 {
            (tally.q_z() - truth.q) / sq
        } else {
            0.0
        }
    );
    println!(
        "E_Z: empirical {:.6e} vs analytic {:.6e} ({:+.2} sigma)",
        tally.e_z(),
        truth.e,
        if se > 0.0 {
            (tally.e_z() - truth.e) / se
        } else {
            0.0
        }
    );

    match empirical_key_rate(&tally, &trial) {
        Ok(point) => {
            files.push(write_atomic(
                out_dir,
                "empirical_keyrate.json",
                &keyrate_json(&point),
            )?);
            println!(
                "empirical R = {:.6e} /pulse ({:.1} bit/s), status {}",
                point.rate_per_pulse, point.bits_per_second, point.status
            );
            if point.status != RateStatus::Ok {
                return Ok(CommandOutcome::flagged(
                    files,
                    "empirical key rate clamped to zero",
                ));
            }
            Ok(CommandOutcome::ok(files))
        }
        Err(McError::InsufficientStatistics(what)) => Ok(CommandOutcome::flagged(
            files,
            &format!("insufficient statistics: {what}"),
        )),
        Err(e) => Err(ConfigError(e.to_string())),
    }
}
