//! Acceptance suite: one test per headline criterion, each printing a
//! PASS line with the measured numbers. Run with
//! `cargo test -p jamctl --test acceptance -- --nocapture`.

use std::time::Instant;

use tempfile::tempdir;

use jamctl::commands;
use jamlab_core::agent::{train_dqn, train_sarsa, AgentConfig, OracleLabels};
use jamlab_core::env::{
    jammer_step, sinr, Env, EnvConfig, JammerMode, JammerState, PowerBudget, Strategy,
};
use jamlab_core::metrics::{
    classification_metrics, first_crossing, stability, ConfusionMatrix,
};
use jamlab_core::nn::gradcheck;
use jamlab_core::signal::JammingKind;
use jamlab_core::{env, seeds, signal, tf};

fn write_config(dir: &std::path::Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("run.toml");
    std::fs::write(&path, body).unwrap();
    path
}

/// Criterion 1: on a 300-scenes-per-class dataset (default parameter
/// ranges, 10 dB SNR, 80/10/10 split, 64x64 images) the recognizer reaches
/// test OA >= 0.90 within 30 epochs in well under 30 minutes.
#[test]
fn c1_recognition_accuracy_at_desk_scale() {
    let start = Instant::now();
    let dir = tempdir().unwrap();
    let data_dir = dir.path().join("data");
    let out_dir = dir.path().join("run");
    let cfg = write_config(
        dir.path(),
        &format!(
            r#"
seed = 42
out_dir = "{}"

[dataset]
per_class = [300, 300, 300]
dir = "{}"

[recognizer]
epochs = 30
early_stop_val_oa = 0.99
"#,
            out_dir.display(),
            data_dir.display()
        ),
    );
    let gen = commands::cmd_gen_data(&cfg, None, None).unwrap();
    assert_eq!(gen.histogram, [300, 300, 300]);
    let report = commands::cmd_train_recognizer(&cfg, None, None, None).unwrap();
    let elapsed = start.elapsed();
    assert!(report.epochs_run <= 30, "{} epochs", report.epochs_run);
    assert!(
        report.test_oa >= 0.90,
        "test OA {} below 0.90",
        report.test_oa
    );
    assert!(
        elapsed.as_secs() < 30 * 60,
        "took {elapsed:?}, budget 30 min"
    );
    println!(
        "ACCEPTANCE 1 PASS: test OA {:.4} in {} epochs, {:.1}s wall",
        report.test_oa,
        report.epochs_run,
        elapsed.as_secs_f64()
    );
}

/// Criterion 2: metric arithmetic on the published confusion matrix
/// reproduces the reported quotients to 1e-12.
#[test]
fn c2_metric_arithmetic_exact() {
    let cm = ConfusionMatrix::from_rows(&[&[235, 0, 0], &[0, 185, 59], &[0, 5, 746]]);
    let m = classification_metrics(&cm).unwrap();
    let oa_err = (m.overall_accuracy - 1166.0 / 1230.0).abs();
    let recall_err = (m.recall[1] - 185.0 / 244.0).abs();
    let precision_err = (m.precision[2] - 746.0 / 805.0).abs();
    assert!(oa_err < 1e-12, "OA error {oa_err}");
    assert!(recall_err < 1e-12, "recall error {recall_err}");
    assert!(precision_err < 1e-12, "precision error {precision_err}");
    println!(
        "ACCEPTANCE 2 PASS: OA {:.6}, recall {:.6}, precision {:.6}, max err {:.2e}",
        m.overall_accuracy,
        m.recall[1],
        m.precision[2],
        oa_err.max(recall_err).max(precision_err)
    );
}

/// Criterion 3: the three reward functions hit their branch constants
/// exactly and match an independent SINR evaluation to 1e-12 across 1000
/// random parameter draws.
#[test]
fn c3_reward_function_suite() {
    use rand::Rng;
    let mut rng = seeds::rng_from_seed(2026);
    let mut max_err = 0.0f64;
    for _ in 0..1000 {
        let pb = PowerBudget {
            p_s: rng.gen_range(0.1..10.0),
            p_j: rng.gen_range(0.1..5000.0),
            p_n: rng.gen_range(0.01..1.0),
            h_s: rng.gen_range(0.1..3.0),
            sigma: rng.gen_range(0.1..3.0),
        };
        // Independent route: the SINR expression evaluated directly.
        let expected_db =
            10.0 * (pb.p_s * pb.h_s * pb.h_s * pb.sigma / (pb.p_n + pb.p_j * pb.h_s)).log10();

        // Branch constants are exact.
        let sig = (990.0e6, 1010.0e6);
        assert_eq!(env::reward_aj(sig, (1020.0e6, 1100.0e6), &pb), 30.0);
        assert_eq!(env::reward_aj(sig, (980.0e6, 1040.0e6), &pb), -100.0);
        assert_eq!(env::reward_rdftj(12.0e-6, 8.0e-6, &pb), 30.0);

        // SINR branches agree with the independent evaluation.
        let partial = env::reward_aj(sig, (1000.0e6, 1060.0e6), &pb);
        let stay = env::reward_rftj(4, 4, 1.0, 2.0, &pb);
        let short_cover = env::reward_rdftj(4.0e-6, 8.0e-6, &pb);
        for got in [partial, stay, short_cover] {
            max_err = max_err.max((got - expected_db).abs());
        }

        // Hop branch arithmetic.
        let c = rng.gen_range(0.5..2.0);
        let b = rng.gen_range(1.0..3.0);
        let hop: usize = rng.gen_range(1..9);
        let got = env::reward_rftj(0, hop, c, b, &pb);
        let want = 30.0 - c * (hop as f64).max(b);
        max_err = max_err.max((got - want).abs());

        // Indicator-off sanity on the raw SINR.
        let clear = sinr(&pb, false);
        let clear_expected = pb.p_s * pb.h_s * pb.h_s * pb.sigma / pb.p_n;
        max_err = max_err.max((clear - clear_expected).abs() / clear_expected);
    }
    assert!(max_err < 1e-12, "max error {max_err}");
    println!("ACCEPTANCE 3 PASS: 1000 random draws, max SINR-branch error {max_err:.2e}");
}

/// Criterion 4: on the fixed-AJ scenario with default configs and 5 seeds,
/// the DQN's 50-episode moving average reaches 90% of the per-episode
/// maximum by episode 800 on every seed, and its tail stability beats
/// SARSA's on at least 4 of 5 seeds.
#[test]
fn c4_dqn_vs_sarsa_convergence_and_stability() {
    let window = 50;
    let tail = 100;
    let episodes = 1000;
    let mut stability_wins = 0;
    let mut lines = Vec::new();
    for seed in 1..=5u64 {
        let env_cfg = EnvConfig {
            mode: JammerMode::Fixed(JammingKind::Aj),
            ..EnvConfig::default()
        };
        let max_reward = env_cfg.max_episode_reward();
        let agent_cfg = AgentConfig::default();

        let mut env = Env::new(env_cfg.clone(), seed).unwrap();
        let dqn = train_dqn(&mut env, &agent_cfg, episodes, seed, &mut OracleLabels).unwrap();
        let dqn_rewards: Vec<f64> = dqn.run.trace.iter().map(|e| e.total_reward).collect();
        let conv = first_crossing(&dqn_rewards, window, 0.9 * max_reward)
            .unwrap()
            .unwrap_or(usize::MAX);
        assert!(
            conv <= 800,
            "seed {seed}: DQN reached 90% at episode {conv} (> 800)"
        );
        let dqn_stab = stability(&dqn_rewards, window, tail).unwrap();

        let mut env = Env::new(env_cfg, seed).unwrap();
        let sarsa = train_sarsa(&mut env, &agent_cfg, episodes, seed, &mut OracleLabels).unwrap();
        let sarsa_rewards: Vec<f64> = sarsa.run.trace.iter().map(|e| e.total_reward).collect();
        let sarsa_stab = stability(&sarsa_rewards, window, tail).unwrap();

        if dqn_stab < sarsa_stab {
            stability_wins += 1;
        }
        lines.push(format!(
            "seed {seed}: DQN conv@{conv}, stability {dqn_stab:.3} vs SARSA {sarsa_stab:.3}"
        ));
    }
    assert!(
        stability_wins >= 4,
        "DQN more stable on only {stability_wins}/5 seeds\n{}",
        lines.join("\n")
    );
    println!(
        "ACCEPTANCE 4 PASS: DQN converged <= 800 on 5/5 seeds, more stable on {stability_wins}/5\n  {}",
        lines.join("\n  ")
    );
}

/// Criterion 5: transform oracles. The SPWVD with delta windows equals the
/// brute-force discrete Wigner-Ville distribution to 1e-9 on 64-sample
/// signals; the STFT's per-column energy matches the windowed time-domain
/// oracle to 1e-9 relative; the whole check runs in under 10 seconds.
#[test]
fn c5_transform_oracles() {
    use num_complex::Complex64;
    use rand::Rng;
    let start = Instant::now();

    let make_series = |seed: u64, n: usize| {
        let mut rng = seeds::rng_from_seed(seed);
        signal::ComplexSeries {
            samples: (0..n)
                .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect(),
            sample_rate_hz: 1.0,
            t0_s: 0.0,
            carrier_hz: 0.0,
        }
    };

    // Brute-force WVD: direct double sum, no FFT anywhere.
    let wvd_oracle = |x: &signal::ComplexSeries, nfft: usize| -> Vec<f64> {
        let n = x.len();
        let tau_max = (nfft - 1) / 2;
        let at = |i: isize| -> Complex64 {
            if i < 0 || i as usize >= n {
                Complex64::new(0.0, 0.0)
            } else {
                x.samples[i as usize]
            }
        };
        let mut out = vec![0.0; nfft * n];
        for t in 0..n {
            for k in 0..nfft {
                let mut acc = Complex64::new(0.0, 0.0);
                for tau in -(tau_max as isize)..=(tau_max as isize) {
                    let ang = -2.0 * core::f64::consts::PI * (k as f64) * (tau as f64)
                        / nfft as f64;
                    acc += at(t as isize + tau)
                        * at(t as isize - tau).conj()
                        * Complex64::from_polar(1.0, ang);
                }
                let row = (k + nfft / 2) % nfft;
                out[row * n + t] = acc.re;
            }
        }
        out
    };

    let mut max_wvd_err = 0.0f64;
    for seed in [1u64, 2, 3] {
        let x = make_series(seed, 64);
        let s = tf::spwvd(
            &x,
            &tf::SpwvdParams {
                h_len: 1,
                g_len: 1,
                nfft: 64,
                time_decim: 1,
            },
        )
        .unwrap();
        let oracle = wvd_oracle(&x, 64);
        let peak = oracle.iter().cloned().fold(0.0f64, |a, b| a.max(b.abs()));
        for (a, b) in s.values.iter().zip(&oracle) {
            max_wvd_err = max_wvd_err.max((a - b).abs() / peak.max(1.0));
        }
    }
    assert!(max_wvd_err < 1e-9, "WVD mismatch {max_wvd_err}");

    let mut max_energy_err = 0.0f64;
    for seed in [4u64, 5] {
        let x = make_series(seed, 2048);
        let params = tf::StftParams::default();
        let s = tf::stft(&x, &params).unwrap();
        let w = tf::hamming(params.win_len);
        for col in 0..s.n_time {
            let freq_energy: f64 = (0..s.n_freq)
                .map(|r| s.value(r, col).powi(2))
                .sum::<f64>()
                / params.fft_len as f64;
            let start_idx = col * params.hop;
            let time_energy: f64 = (0..params.win_len)
                .map(|i| (x.samples[start_idx + i] * w[i]).norm_sqr())
                .sum();
            max_energy_err =
                max_energy_err.max((freq_energy - time_energy).abs() / time_energy.max(1e-30));
        }
    }
    assert!(max_energy_err < 1e-9, "STFT energy mismatch {max_energy_err}");

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "transform suite took {elapsed:?}");
    println!(
        "ACCEPTANCE 5 PASS: WVD err {max_wvd_err:.2e}, STFT energy err {max_energy_err:.2e}, {:.2}s",
        elapsed.as_secs_f64()
    );
}

/// Criterion 6: every differentiable operation passes central finite
/// differences (eps = 1e-4) with relative error < 1e-3 on all 50 sampled
/// parameters per op.
#[test]
fn c6_gradient_suite() {
    let reports = gradcheck::standard_op_suite(777, 50).unwrap();
    assert!(reports.len() >= 25, "only {} ops covered", reports.len());
    let mut worst = ("", 0.0f64);
    for r in &reports {
        assert_eq!(r.checked, 50, "{} checked {}", r.op, r.checked);
        assert!(
            r.max_rel_err < 1e-3,
            "{}: relative error {}",
            r.op,
            r.max_rel_err
        );
        if r.max_rel_err > worst.1 {
            worst = (&r.op, r.max_rel_err);
        }
    }
    println!(
        "ACCEPTANCE 6 PASS: {} ops x 50 params, worst {} at {:.2e}",
        reports.len(),
        worst.0,
        worst.1
    );
}

/// Criterion 7: gen-data, train-recognizer and closed-loop each produce
/// byte-identical primary outputs across two runs with the same config and
/// seed.
#[test]
fn c7_byte_identical_reruns() {
    let dir = tempdir().unwrap();
    let data1 = dir.path().join("d1");
    let data2 = dir.path().join("d2");
    let cfg = write_config(
        dir.path(),
        &format!(
            r#"
seed = 9
out_dir = "{}"

[dataset]
per_class = [6, 6, 6]
dir = "{}"

[recognizer]
epochs = 2
early_stop_val_oa = 0.0

[env]
episodes = 6
"#,
            dir.path().join("unused").display(),
            data1.display()
        ),
    );

    let dir_digest = |p: &std::path::Path| -> Vec<(String, Vec<u8>)> {
        let mut entries: Vec<_> = std::fs::read_dir(p)
            .unwrap()
            .map(|e| e.unwrap().path())
            .collect();
        entries.sort();
        entries
            .into_iter()
            .filter(|p| p.is_file())
            .map(|p| {
                (
                    p.file_name().unwrap().to_string_lossy().into_owned(),
                    std::fs::read(&p).unwrap(),
                )
            })
            .collect()
    };

    commands::cmd_gen_data(&cfg, None, Some(&data1)).unwrap();
    commands::cmd_gen_data(&cfg, None, Some(&data2)).unwrap();
    assert_eq!(dir_digest(&data1), dir_digest(&data2), "gen-data differs");

    let rec1 = dir.path().join("r1");
    let rec2 = dir.path().join("r2");
    commands::cmd_train_recognizer(&cfg, None, Some(&data1), Some(&rec1)).unwrap();
    commands::cmd_train_recognizer(&cfg, None, Some(&data1), Some(&rec2)).unwrap();
    assert_eq!(dir_digest(&rec1), dir_digest(&rec2), "train-recognizer differs");

    let ckpt = rec1.join("recognizer.fnet");
    let loop1 = dir.path().join("l1");
    let loop2 = dir.path().join("l2");
    commands::run_rl(&cfg, None, Some(&loop1), Some("II"), false, Some(&ckpt)).unwrap();
    commands::run_rl(&cfg, None, Some(&loop2), Some("II"), false, Some(&ckpt)).unwrap();
    assert_eq!(dir_digest(&loop1), dir_digest(&loop2), "closed-loop differs");

    println!("ACCEPTANCE 7 PASS: gen-data, train-recognizer, closed-loop byte-identical across reruns");
}

/// Criterion 8: strategy II's 12-CPI type sequence is the exact palindrome,
/// and strategy III's transition distribution is uniform over the two
/// non-current types within +-3% over 10^4 transitions.
#[test]
fn c8_strategy_exactness() {
    use JammingKind::*;
    let cfg = EnvConfig {
        mode: JammerMode::Strategy(Strategy::II),
        ..EnvConfig::default()
    };
    let mut rng = seeds::rng_from_seed(1);
    let mut js = JammerState::new(cfg.mode, cfg.t_observe_s);
    let mut seq = Vec::new();
    for _ in 0..12 {
        let (next, plan) = jammer_step(&js, 0, &cfg, &mut rng);
        js = next;
        seq.push(plan.kind);
    }
    let expected = vec![Aj, Rftj, Rdftj, Rftj, Aj, Rftj, Rdftj, Rftj, Aj, Rftj, Rdftj, Rftj];
    assert_eq!(seq, expected, "strategy II sequence");

    let cfg3 = EnvConfig {
        mode: JammerMode::Strategy(Strategy::III),
        ..EnvConfig::default()
    };
    let mut counts = std::collections::BTreeMap::new();
    let mut worst_dev = 0.0f64;
    for start in [Aj, Rftj, Rdftj] {
        counts.clear();
        let mut js = JammerState::new(cfg3.mode, cfg3.t_observe_s);
        js.current_type = start;
        js.cpi_counter = 1;
        for _ in 0..10_000 {
            let (next, _) = jammer_step(&js, 0, &cfg3, &mut rng);
            *counts.entry(next.current_type.label()).or_insert(0usize) += 1;
        }
        assert_eq!(counts.get(&start.label()), None, "self-transition from {start:?}");
        for (_, &c) in counts.iter() {
            let dev = (c as f64 / 10_000.0 - 0.5).abs();
            worst_dev = worst_dev.max(dev);
            assert!(dev < 0.03, "from {start:?}: deviation {dev}");
        }
    }
    println!(
        "ACCEPTANCE 8 PASS: palindrome exact, strategy III uniform within {:.3}",
        worst_dev
    );
}
