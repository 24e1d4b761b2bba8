//! Acceptance suite: one test per criterion, each printing a pass/fail line.
//!
//! Run with `cargo test -p tbqkd-core --test acceptance -- --nocapture` to
//! see every line.

mod common;

use common::{bin_energies, bin_peaks, designated_bins, PoissonOracle};
use std::time::{Duration, Instant};
use tbqkd_core::encoder::{EncodingTiming, StateSymbol};
use tbqkd_core::montecarlo::{run_protocol, run_protocol_serial, tally_json, TrialConfig};
use tbqkd_core::scenario::{run_scenario, ScenarioConfig};
use tbqkd_core::security::{
    binary_entropy, channel_model, decoy_bounds, fl_reduction, no_decoy_bounds, scan_distance,
    secret_key_rate, ChannelParams, ProtocolConfig, SourceIntensities,
};

struct Criterion {
    name: &'static str,
    failures: Vec<String>,
    started: Instant,
    budget: Option<Duration>,
}

impl Criterion {
    fn new(name: &'static str, budget_s: Option<f64>) -> Self {
        Self {
            name,
            failures: Vec::new(),
            started: Instant::now(),
            budget: budget_s.map(Duration::from_secs_f64),
        }
    }

    fn check(&mut self, ok: bool, detail: impl FnOnce() -> String) {
        if !ok {
            self.failures.push(detail());
        }
    }

    fn finish(mut self) {
        let elapsed = self.started.elapsed();
        if let Some(budget) = self.budget {
            if elapsed > budget {
                self.failures.push(format!(
                    "runtime {:.2}s exceeded the {:.0}s budget",
                    elapsed.as_secs_f64(),
                    budget.as_secs_f64()
                ));
            }
        }
        let verdict = if self.failures.is_empty() {
            "PASS"
        } else {
            "FAIL"
        };
        println!("[{verdict}] {} ({:.2}s)", self.name, elapsed.as_secs_f64());
        assert!(
            self.failures.is_empty(),
            "{}: {}",
            self.name,
            self.failures.join("; ")
        );
    }
}

fn reference_inputs() -> (ChannelParams, ProtocolConfig) {
    (
        ChannelParams::default_channel(),
        ProtocolConfig::default_protocol(),
    )
}

#[test]
fn criterion_1_no_decoy_max_distance() {
    let mut c = Criterion::new(
        "criterion 1: decoy-free max distance in [36, 44] km",
        Some(5.0),
    );
    let (ch, cfg) = reference_inputs();
    let scan = scan_distance(
        &SourceIntensities::default_no_decoy(),
        &ch,
        &cfg,
        0.0,
        200.0,
        1.0,
    )
    .unwrap();
    let max = scan.max_distance_km.unwrap_or(0.0);
    c.check((36.0..=44.0).contains(&max), || {
        format!("max distance {max:.2} km outside [36, 44]")
    });
    c.finish();
}

#[test]
fn criterion_2_decoy_distance_ratio() {
    let mut c = Criterion::new(
        "criterion 2: decoy / decoy-free max-distance ratio in [4.0, 5.0]",
        Some(10.0),
    );
    let (ch, cfg) = reference_inputs();
    let nd = scan_distance(
        &SourceIntensities::default_no_decoy(),
        &ch,
        &cfg,
        0.0,
        200.0,
        1.0,
    )
    .unwrap()
    .max_distance_km
    .unwrap_or(0.0);
    let dc = scan_distance(
        &SourceIntensities::default_decoy(),
        &ch,
        &cfg,
        0.0,
        200.0,
        1.0,
    )
    .unwrap()
    .max_distance_km
    .unwrap_or(0.0);
    let ratio = dc / nd;
    c.check((4.0..=5.0).contains(&ratio), || {
        format!("ratio {ratio:.3} ({dc:.1} km / {nd:.1} km) outside [4.0, 5.0]")
    });
    c.finish();
}

#[test]
fn criterion_3_throughput_at_30km() {
    let mut c = Criterion::new(
        "criterion 3: >= 1e4 bit/s at 30 km and 100 MHz preparation",
        None,
    );
    let (ch, cfg) = reference_inputs();
    let point = secret_key_rate(
        &SourceIntensities::default_no_decoy(),
        &ch.with_distance(30.0),
        &cfg,
    )
    .unwrap();
    let best = point.bits_per_second_raw.max(point.bits_per_second);
    c.check(best >= 1e4, || {
        format!(
            "R*f = {:.0}, R*f*pAz*pBz = {:.0}: neither clears 1e4",
            point.bits_per_second_raw, point.bits_per_second
        )
    });
    c.finish();
}

#[test]
fn criterion_4_encoding_reproduction() {
    let mut c = Criterion::new(
        "criterion 4: reference sequence encodes with >= 10 dB extinction, \
         X0 visibility >= 0.9, suppressed relaxation spike",
        Some(60.0),
    );
    let r = run_scenario(&ScenarioConfig::reference()).unwrap();
    let timing = EncodingTiming::default_timing();
    let bins_per_slot = (timing.slot_duration() / timing.bin_period).round() as usize;
    let flags = designated_bins(&r.sequence, bins_per_slot);

    // (a) filtered energy only in commanded bins, >= 10 dB extinction
    let energies = bin_energies(&r.filtered_power, r.filtered.dt, timing.bin_period);
    let d_min = energies
        .iter()
        .zip(&flags)
        .filter(|(_, &f)| f)
        .map(|(&e, _)| e)
        .fold(f64::INFINITY, f64::min);
    let nd_max = energies
        .iter()
        .zip(&flags)
        .filter(|(_, &f)| !f)
        .map(|(&e, _)| e)
        .fold(0.0_f64, f64::max);
    let extinction_db = 10.0 * (d_min / nd_max).log10();
    c.check(extinction_db >= 10.0, || {
        format!("extinction {extinction_db:.2} dB below 10 dB")
    });
    c.check(r.classification_matches(), || {
        format!(
            "decoded {:?} instead of the commanded sequence",
            r.classified
        )
    });

    // (b) every X0 slot interferes constructively with visibility >= 0.9
    for (m, sym) in r.metrics.iter().zip(&r.sequence) {
        if *sym == StateSymbol::X0 {
            c.check(m.visibility >= 0.9, || {
                format!("X0 visibility {:.3} below 0.9", m.visibility)
            });
        }
    }

    // (c) free-running relaxation spike exceeds the injected-pulse peak
    let peaks = bin_peaks(&r.slave.power, r.slave.dt, timing.bin_period);
    let injected = peaks
        .iter()
        .zip(&flags)
        .filter(|(_, &f)| f)
        .map(|(&p, _)| p)
        .fold(0.0_f64, f64::max);
    let free = peaks
        .iter()
        .zip(&flags)
        .filter(|(_, &f)| !f)
        .map(|(&p, _)| p)
        .fold(0.0_f64, f64::max);
    c.check(free > injected, || {
        format!("free-running peak {free:.3e} W does not exceed injected {injected:.3e} W")
    });
    c.finish();
}

#[test]
fn criterion_5_bound_validity() {
    let mut c = Criterion::new(
        "criterion 5: secrecy bounds never cross the Poisson-channel truth",
        None,
    );
    let decoy_sets = [[0.657, 0.033, 0.0], [1.314, 0.066, 0.0]];
    let (mu, nu) = (0.024, 0.048);
    for step in 0..=15 {
        let l = 10.0 * step as f64;
        let ch = ChannelParams::default_channel().with_distance(l);
        let oracle = PoissonOracle::new(&ch);
        let y1_true = oracle.yield_n(1);
        let e1_true = oracle.error_n(1);
        for ints in decoy_sets {
            let gains = [
                channel_model(ints[0], &ch),
                channel_model(ints[1], &ch),
                channel_model(ints[2], &ch),
            ];
            let (_, y1_low, _, e1_up, _) = decoy_bounds(&gains, &ints).unwrap();
            c.check(y1_low <= y1_true + 1e-15, || {
                format!("Y1 bound {y1_low} above truth {y1_true} at {l} km")
            });
            c.check(e1_up >= e1_true - 1e-15, || {
                format!("E1 bound {e1_up} below truth {e1_true} at {l} km")
            });
        }
        let z = channel_model(mu, &ch);
        let x = channel_model(nu, &ch);
        let q01_true = (-mu).exp() * oracle.yield_n(0) + mu * (-mu).exp() * y1_true;
        let b = no_decoy_bounds(z, x, mu, nu);
        c.check(b.q_low <= q01_true + 1e-15, || {
            format!("Q0+1 bound {} above truth {q01_true} at {l} km", b.q_low)
        });
    }
    c.finish();
}

#[test]
fn criterion_6_oracle_equivalences() {
    let mut c = Criterion::new(
        "criterion 6: steady state, reduction factor, entropy, and filter \
         match their independent oracles",
        None,
    );
    // ODE steady state vs algebraic root finder, rel err < 1e-3
    let p = tbqkd_core::LaserParams::default_slave();
    let i = 2.0 * p.threshold_current();
    let traj = common::free_run(&p, i, 20e-9, 0.1e-12);
    let (n_star, q_star) = common::steady_state_oracle(&p, i);
    let s = traj.final_state();
    c.check((s.n - n_star).abs() / n_star < 1e-3, || {
        format!("steady N {} vs oracle {n_star}", s.n)
    });
    c.check((s.q - q_star).abs() / q_star < 1e-3, || {
        format!("steady Q {} vs oracle {q_star}", s.q)
    });

    // reduction factor vs dense-grid oracle, abs err < 1e-4
    for (w, t) in [(0.05, 0.05), (0.015, 0.027), (0.1, 0.02)] {
        let (r_o, _) = common::fl_dense_grid_oracle(w, t, 1_000_000);
        let (r_i, _) = fl_reduction(w, t).unwrap();
        c.check((r_i - r_o).abs() < 1e-4, || {
            format!("r({w},{t}) = {r_i} vs oracle {r_o}")
        });
    }

    // entropy vs high-precision evaluation, abs err < 1e-12
    for (pp, expect) in [
        (0.11, 0.499_915_958_164_528),
        (0.3, 0.881_290_899_230_692_6),
        (0.25, 0.811_278_124_459_132_9),
    ] {
        c.check((binary_entropy(pp) - expect).abs() < 1e-12, || {
            format!("h({pp}) = {} vs {expect}", binary_entropy(pp))
        });
    }

    // Butterworth tone responses vs the magnitude formula, rel err < 1e-4
    {
        use num_complex::Complex64;
        use std::f64::consts::TAU;
        use tbqkd_core::encoder::{butterworth_filter, ComplexFieldTrace, FilterSpec};
        let spec = FilterSpec::default_wdm();
        let dt = 1e-13;
        let n = 10_000;
        let response = |f_hz: f64| {
            let tone = ComplexFieldTrace {
                dt,
                samples: (0..n)
                    .map(|i| Complex64::from_polar(1.0, TAU * f_hz * i as f64 * dt))
                    .collect(),
            };
            let out = butterworth_filter(&tone, &spec).unwrap();
            out.samples.iter().map(|e| e.norm()).sum::<f64>() / n as f64
        };
        for (f, expect) in [
            (-100e9, 1.0),
            (-50e9, std::f64::consts::FRAC_1_SQRT_2),
            (0.0, 1.0 / 17.0_f64.sqrt()),
        ] {
            let r = response(f);
            c.check((r - expect).abs() / expect < 1e-4, || {
                format!("|H| at {f} Hz: {r} vs {expect}")
            });
        }
    }
    c.finish();
}

#[test]
fn criterion_7_monte_carlo_convergence() {
    let mut c = Criterion::new(
        "criterion 7: Monte Carlo matches the channel model within 4 sigma, \
         bit-identical under parallelism",
        Some(30.0),
    );
    for (idx, l) in [0.0, 10.0, 20.0, 30.0].into_iter().enumerate() {
        let cfg = TrialConfig {
            n_pulses: 1_000_000,
            seed: 1000 + idx as u64,
            source: SourceIntensities::default_no_decoy(),
            channel: ChannelParams::default_channel().with_distance(l),
            protocol: ProtocolConfig::default_protocol(),
        };
        let t = run_protocol(&cfg).unwrap();
        let truth = channel_model(0.024, &cfg.channel);
        let sq = (truth.q * (1.0 - truth.q) / t.matched_z as f64).sqrt();
        let se = (truth.e * (1.0 - truth.e) / t.sifted_z.max(1) as f64).sqrt();
        c.check((t.q_z() - truth.q).abs() < 4.0 * sq, || {
            format!(
                "Q at {l} km: {} vs {} ({}sigma)",
                t.q_z(),
                truth.q,
                ((t.q_z() - truth.q) / sq).abs()
            )
        });
        c.check((t.e_z() - truth.e).abs() < 4.0 * se, || {
            format!(
                "E at {l} km: {} vs {} ({}sigma)",
                t.e_z(),
                truth.e,
                ((t.e_z() - truth.e) / se).abs()
            )
        });
        let serial = run_protocol_serial(&cfg).unwrap();
        c.check(t == serial, || format!("parallel tally diverged at {l} km"));
        c.check(tally_json(&t) == tally_json(&serial), || {
            format!("tally JSON not byte-identical at {l} km")
        });
    }
    c.finish();
}

#[test]
fn criterion_8_module_invariant_suites() {
    let mut c = Criterion::new(
        "criterion 8: module invariant suites (positivity, convergence, \
         passivity, conservation, monotonicity, clamps)",
        None,
    );

    // laser: positivity on the reference run, step-halving convergence,
    // quiescence, unidirectionality, locking
    {
        use tbqkd_core::encoder::build_drive;
        use tbqkd_core::laser::{
            injection_lock_residual, integrate, integrate_free_running, relax_to_bias,
        };
        let cfg = ScenarioConfig::reference();
        let (md, sd) = build_drive(&cfg.sequence, &cfg.timing, &cfg.levels, cfg.dt).unwrap();
        let m0 =
            relax_to_bias(&cfg.master, cfg.levels.master_bias, cfg.relax_time, cfg.dt).unwrap();
        let s0 = relax_to_bias(&cfg.slave, cfg.levels.slave_bias, cfg.relax_time, cfg.dt).unwrap();
        let (mt, st) = integrate(
            &cfg.master,
            &cfg.slave,
            &cfg.injection,
            &md,
            &sd,
            (m0, s0),
            cfg.dt,
        )
        .unwrap();
        c.check(
            mt.n.iter().chain(st.n.iter()).all(|&v| v >= 0.0)
                && mt.q.iter().chain(st.q.iter()).all(|&v| v >= 0.0),
            || "negative carrier or photon number".into(),
        );
        let (_, fine) = integrate(
            &cfg.master,
            &cfg.slave,
            &cfg.injection,
            &md,
            &sd,
            (m0, s0),
            cfg.dt / 2.0,
        )
        .unwrap();
        let sup = st.power.iter().cloned().fold(0.0_f64, f64::max);
        let mut dev = 0.0_f64;
        for (i, &p) in st.power.iter().enumerate() {
            dev = dev.max((p - fine.power[2 * i]).abs());
        }
        c.check(dev / sup < 1e-3, || {
            format!("step-halving deviation {:.2e}", dev / sup)
        });

        let p = &cfg.slave;
        let i_th = p.threshold_current();
        let low = common::free_run(p, 0.9 * i_th, 20e-9, cfg.dt);
        let high = common::free_run(p, 2.0 * i_th, 20e-9, cfg.dt);
        c.check(
            *low.power.last().unwrap() < 0.01 * high.power.last().unwrap(),
            || "below-threshold power above 1% of above-threshold power".into(),
        );

        let alone = integrate_free_running(&cfg.master, &md, m0, cfg.dt).unwrap();
        c.check(
            mt.n == alone.n && mt.q == alone.q && mt.phi == alone.phi,
            || "master trajectory altered by simulating the slave".into(),
        );

        let (cm, cs, inj) = common::constant_injection_run(1.0, cfg.dt, 20e-9);
        let locked = injection_lock_residual(&cm, &cs, &inj, (5e-9, 20e-9)).unwrap();
        c.check(locked < std::f64::consts::TAU * 1e9, || {
            format!("locked residual {locked:.3e} rad/s")
        });
        let (fm, fs, inj0) = common::constant_injection_run(0.0, cfg.dt, 20e-9);
        let free = injection_lock_residual(&fm, &fs, &inj0, (5e-9, 20e-9)).unwrap();
        c.check(
            (free - inj0.delta_omega.abs()).abs() / inj0.delta_omega.abs() < 0.2,
            || format!("free residual {free:.3e} rad/s"),
        );
    }

    // encoder: filter passivity, interferometer energy conservation,
    // drive determinism, filtering selects locked pulses
    {
        use num_complex::Complex64;
        use tbqkd_core::encoder::{
            build_drive, butterworth_filter, mzi_interfere, ComplexFieldTrace, DriveLevels,
            FilterSpec, MziSpec,
        };
        use tbqkd_core::rng::PulseRng;
        let mut rng = PulseRng::new(0xACCE97, 0);
        let n = 300;
        let field = ComplexFieldTrace {
            dt: 1e-12,
            samples: (0..n)
                .map(|_| Complex64::new(rng.next_f64() - 0.5, rng.next_f64() - 0.5))
                .collect(),
        };
        let out = butterworth_filter(&field, &FilterSpec::default_wdm()).unwrap();
        let e_in: f64 = field.samples.iter().map(|v| v.norm_sqr()).sum();
        let e_out: f64 = out.samples.iter().map(|v| v.norm_sqr()).sum();
        c.check(e_out <= e_in * (1.0 + 1e-9), || {
            "filter gained energy".into()
        });

        let spec = MziSpec {
            delay: 7e-12,
            extra_phase: 1.234,
        };
        let (cons, dest) = mzi_interfere(&field, &spec).unwrap();
        let mut conserved = true;
        for i in 0..n {
            let direct = field.samples[i].norm_sqr();
            let delayed = if i >= 7 {
                field.samples[i - 7].norm_sqr()
            } else {
                0.0
            };
            if ((cons[i] + dest[i]) - (direct + delayed) / 2.0).abs() > 1e-12 {
                conserved = false;
            }
        }
        c.check(conserved, || {
            "interferometer ports do not conserve energy".into()
        });

        let timing = EncodingTiming::default_timing();
        let levels = DriveLevels::default_for_threshold(8.8e-3);
        let seq = [StateSymbol::Z0, StateSymbol::X0, StateSymbol::Z1];
        let a = build_drive(&seq, &timing, &levels, 1e-12).unwrap();
        let b = build_drive(&seq, &timing, &levels, 1e-12).unwrap();
        c.check(
            a.0.samples == b.0.samples && a.1.samples == b.1.samples,
            || "drive synthesis not deterministic".into(),
        );

        let r = common::reference_scenario();
        let bins_per_slot = (timing.slot_duration() / timing.bin_period).round() as usize;
        let energies = bin_energies(&r.filtered_power, r.filtered.dt, timing.bin_period);
        let flags = designated_bins(&r.sequence, bins_per_slot);
        let d_min = energies
            .iter()
            .zip(&flags)
            .filter(|(_, &f)| f)
            .map(|(&e, _)| e)
            .fold(f64::INFINITY, f64::min);
        let nd_max = energies
            .iter()
            .zip(&flags)
            .filter(|(_, &f)| !f)
            .map(|(&e, _)| e)
            .fold(0.0_f64, f64::max);
        c.check(d_min >= 10.0 * nd_max, || {
            "filtering does not select locked pulses at 10x".into()
        });
    }

    // security: monotonicities, reduction clamps, rate clamps, scaling
    {
        let base = ChannelParams::default_channel().with_distance(25.0);
        let mut ok = true;
        let mut prev = channel_model(0.0, &base);
        for i in 1..50 {
            let g = channel_model(i as f64 * 0.02, &base);
            if g.q < prev.q || (i > 1 && g.e > prev.e + 1e-15) {
                ok = false;
            }
            prev = g;
        }
        c.check(ok, || "channel model monotonicity violated".into());

        let (r, k) = fl_reduction(0.5, 0.5).unwrap();
        c.check(r == 0.0 && k == 0.5, || "kappa/r clamps missing".into());

        let ch = ChannelParams { e_d: 0.5, ..base };
        let p = secret_key_rate(
            &SourceIntensities::default_no_decoy(),
            &ch,
            &ProtocolConfig::default_protocol(),
        )
        .unwrap();
        c.check(p.rate_per_pulse == 0.0, || {
            "rate not clamped at zero".into()
        });

        let cfg = ProtocolConfig::default_protocol();
        let mode = SourceIntensities::default_no_decoy();
        let at = |f: f64| {
            secret_key_rate(
                &mode,
                &ChannelParams::default_channel().with_distance(15.0),
                &ProtocolConfig {
                    f_prep_hz: f,
                    ..cfg
                },
            )
            .unwrap()
            .bits_per_second
        };
        c.check(at(2e8) == 2.0 * at(1e8), || {
            "bits/s not exactly linear in f_prep".into()
        });

        let scan = scan_distance(
            &mode,
            &ChannelParams::default_channel(),
            &cfg,
            0.0,
            120.0,
            2.0,
        )
        .unwrap();
        let mono = scan
            .points
            .windows(2)
            .all(|w| w[1].rate_per_pulse <= w[0].rate_per_pulse + 1e-15);
        c.check(mono, || "rate not nonincreasing in distance".into());
    }

    // montecarlo: reproducibility and sifting fraction
    {
        let cfg = TrialConfig {
            n_pulses: 400_000,
            seed: 31,
            source: SourceIntensities::default_no_decoy(),
            channel: ChannelParams::default_channel().with_distance(5.0),
            protocol: ProtocolConfig::default_protocol(),
        };
        let a = run_protocol(&cfg).unwrap();
        let b = run_protocol_serial(&cfg).unwrap();
        c.check(a == b, || "tallies depend on partitioning".into());
        let n = cfg.n_pulses as f64;
        let p_match = 0.5;
        let matched = (a.matched_z + a.matched_x) as f64;
        let sigma = (p_match * (1.0 - p_match) * n).sqrt();
        c.check((matched - p_match * n).abs() < 4.0 * sigma, || {
            "sifting fraction off by more than 4 sigma".into()
        });
    }

    c.finish();
}
