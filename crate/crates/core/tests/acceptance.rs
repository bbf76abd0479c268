//! Acceptance checks, one line per criterion.
//!
//! Run with `cargo test --test acceptance` (add `--release` for realistic
//! timings). Exits nonzero if any criterion fails.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, RngAlgorithm, TestRng, TestRunner};

use timebin_qkd::commands::{cmd_profile, cmd_run, cmd_sweep, SweepAxis};
use timebin_qkd::config::SessionConfig;
use timebin_qkd::detection::expected_event_rates;
use timebin_qkd::eve::enumerate_attack_qber;
use timebin_qkd::optics::{
    alice_prepare, apply_coupler, bob_transform, visibility_from_extinction_db, AmzSpec, Basis,
    CanonicalState, SlotPortDistribution, TimeBinState,
};
use timebin_qkd::protocol::alice_generate;
use timebin_qkd::report::ProfileMode;
use timebin_qkd::rng::RngHandle;
use timebin_qkd::session::{effective_bob_amz, run_session, simulate_detections, SessionOutcome};

// Tolerances and budgets.
const TABLE_TOL: f64 = 1e-12;
const PROFILE_BUDGET: Duration = Duration::from_secs(1);
const SESSION_BUDGET: Duration = Duration::from_secs(60);
const EXTINCTION_DB: f64 = 20.0;
const X_QBER_TARGET: f64 = 0.0099;
const X_QBER_TOL: f64 = 0.0010;
const MIN_SIFTED: u64 = 1_000_000;
const RATE_RATIO_TARGET: f64 = 2.00;
const RATE_RATIO_TOL: f64 = 0.04;
const RATE_PULSES: u64 = 10_000_000;
const SIGMAS: f64 = 4.0;
const PROPERTY_CASES: u32 = 10_000;
const PROPERTY_TOL: f64 = 1e-12;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn session(cfg: &SessionConfig) -> Result<(SessionOutcome, Duration), String> {
    let t = Instant::now();
    let out = run_session(cfg).map_err(|e| e.to_string())?;
    Ok((out, t.elapsed()))
}

fn ideal(n: u64) -> SessionConfig {
    SessionConfig {
        n_pulses: n,
        ..SessionConfig::ideal()
    }
}

// Receiver built directly from 2x2 coupler matrices over the (time, port) grid.
fn oracle_receiver(early: Complex64, late: Complex64) -> [[f64; 2]; 3] {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let m = [
        [Complex64::new(h, 0.0), Complex64::new(0.0, h)],
        [Complex64::new(0.0, h), Complex64::new(h, 0.0)],
    ];
    let zero = Complex64::new(0.0, 0.0);
    let mut short = [zero; 3];
    let mut long = [zero; 3];
    for (t, a) in [early, late].into_iter().enumerate() {
        short[t] = m[0][0] * a;
        long[t + 1] = m[1][0] * a;
    }
    let mut p = [[0.0; 2]; 3];
    for t in 0..3 {
        for (port, row) in m.iter().enumerate() {
            p[t][port] = (row[0] * short[t] + row[1] * long[t]).norm_sqr();
        }
    }
    p
}

fn canonical_amplitudes(state: CanonicalState) -> (Complex64, Complex64) {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    match state.label() {
        "s" => (Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)),
        "l" => (Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)),
        "s+l" => (Complex64::new(h, 0.0), Complex64::new(h, 0.0)),
        _ => (Complex64::new(h, 0.0), Complex64::new(-h, 0.0)),
    }
}

fn ac1() -> Check {
    let cfg = SessionConfig::ideal();
    let t = Instant::now();
    let rows = cmd_profile(&cfg, ProfileMode::Exact, None).map_err(|e| e.to_string())?;
    let elapsed = t.elapsed();
    ensure(rows.len() == 32, || format!("{} rows", rows.len()))?;

    let mut worst = 0.0f64;
    for (k, state) in CanonicalState::ALL.into_iter().enumerate() {
        let block = &rows[8 * k..8 * (k + 1)];
        let (e, l) = canonical_amplitudes(state);

        // Alice's output equals the canonical state up to a global phase.
        let (link, _) = alice_prepare(state, &cfg.alice.amz);
        let overlap = link.amplitude(0, 0).conj() * e + link.amplitude(1, 0).conj() * l;
        worst = worst.max((overlap.norm_sqr() - 1.0).abs());
        worst = worst.max((block[0].probability - e.norm_sqr()).abs());
        worst = worst.max((block[1].probability - l.norm_sqr()).abs());

        let oracle = oracle_receiver(e, l);
        for (i, row) in block[2..].iter().enumerate() {
            ensure(row.state == state.label(), || format!("row order: {row:?}"))?;
            worst = worst.max((row.probability - oracle[i / 2][i % 2]).abs());
        }

        // Qualitative pattern: edges identify Z states, the S2 port identifies X states.
        let p: Vec<f64> = block[2..].iter().map(|r| r.probability).collect();
        let pattern = match state.label() {
            "s" => p[0] == p[1] && p[4] + p[5] == 0.0 && (p[2] - 0.25).abs() < TABLE_TOL,
            "l" => p[4] == p[5] && p[0] + p[1] == 0.0 && (p[2] - 0.25).abs() < TABLE_TOL,
            _ => {
                let edges = [p[0], p[1], p[4], p[5]];
                edges.iter().all(|x| (x - 0.125).abs() < TABLE_TOL)
                    && (p[2].max(p[3]) - 0.5).abs() < TABLE_TOL
                    && p[2].min(p[3]) < TABLE_TOL
            }
        };
        ensure(pattern, || {
            format!("unexpected pattern for |{}>: {p:?}", state.label())
        })?;
    }
    let s2 = |label: &str, port: &str| {
        rows.iter()
            .find(|r| r.state == label && r.slot == "S2" && r.port == port)
            .map_or(0.0, |r| r.probability)
    };
    ensure(
        s2("s+l", "D1") > s2("s+l", "D0") && s2("s-l", "D0") > s2("s-l", "D1"),
        || "X states do not land on opposite S2 ports".into(),
    )?;
    ensure(worst < TABLE_TOL, || format!("max deviation {worst:e}"))?;
    ensure(elapsed < PROFILE_BUDGET, || format!("took {elapsed:?}"))?;
    Ok(format!(
        "max |Δ| = {worst:.1e} vs coupler-matrix oracle, {elapsed:.2?}"
    ))
}

fn ac2() -> Check {
    let mut cfg = ideal(4_200_000);
    cfg.bob.amz.visibility =
        visibility_from_extinction_db(EXTINCTION_DB).map_err(|e| e.to_string())?;
    let (out, elapsed) = session(&cfg)?;
    let n_x = out.stats.sifted_by_basis[Basis::X.index()];
    let q = out.stats.qber(Basis::X);
    ensure(n_x >= MIN_SIFTED, || format!("only {n_x} sifted X bits"))?;
    ensure((q - X_QBER_TARGET).abs() <= X_QBER_TOL, || {
        format!("X QBER {q:.5}")
    })?;
    ensure(elapsed < SESSION_BUDGET, || format!("took {elapsed:?}"))?;
    Ok(format!(
        "V = {:.6}, X QBER = {q:.5} over {n_x} sifted X bits, {elapsed:.2?}",
        cfg.bob.amz.visibility
    ))
}

fn ac3() -> Check {
    let full_cfg = ideal(RATE_PULSES);
    let conv_cfg = SessionConfig {
        conventional_mode: true,
        ..full_cfg
    };
    let (full, _) = session(&full_cfg)?;
    let (conv, _) = session(&conv_cfg)?;
    let z = Basis::Z.index();
    let (a, b) = (full.stats.sifted_by_basis[z], conv.stats.sifted_by_basis[z]);
    let ratio = a as f64 / b as f64;
    ensure((ratio - RATE_RATIO_TARGET).abs() <= RATE_RATIO_TOL, || {
        format!("ratio {ratio:.4}")
    })?;
    Ok(format!(
        "Z-sifted {a} vs {b}, ratio = {ratio:.4} over {RATE_PULSES} pulses"
    ))
}

fn dark_count(d: f64, gates: u8, n: u64, seed: u64) -> Result<u64, String> {
    let mut cfg = SessionConfig::default();
    cfg.seed = seed;
    cfg.n_pulses = n;
    cfg.source.mu = 0.0;
    cfg.bob.detector.dark_per_gate = d;
    cfg.bob.detector.gates_per_pulse = gates;
    cfg.validate().map_err(|e| e.to_string())?;
    let records = alice_generate(n, &RngHandle::new(seed)).map_err(|e| e.to_string())?;
    let events = simulate_detections(&cfg, &records).map_err(|e| e.to_string())?;
    Ok(events.len() as u64)
}

fn ac4() -> Check {
    let mut lines = Vec::new();
    for (d, n) in [(1e-5f64, 10_000_000u64), (1e-3, 2_000_000)] {
        // (1 − (1−d)⁶) / (1 − (1−d)²), evaluated without cancellation.
        let ln_s = (-d).ln_1p();
        let target = (6.0 * ln_s).exp_m1() / (2.0 * ln_s).exp_m1();
        let prob = |gates: u8| {
            let mut apd = SessionConfig::default().bob.detector;
            apd.dark_per_gate = d;
            apd.gates_per_pulse = gates;
            expected_event_rates(&SlotPortDistribution::empty(), 0.0, &apd)
                .iter()
                .flatten()
                .sum::<f64>()
        };
        let (p3, p1) = (prob(3), prob(1));
        let analytic = p3 / p1;
        ensure((analytic - target).abs() < TABLE_TOL * target, || {
            format!("analytic ratio {analytic} vs {target} at d = {d:e}")
        })?;

        let c3 = dark_count(d, 3, n, 11)?;
        let c1 = dark_count(d, 1, n, 12)?;
        let ratio = c3 as f64 / c1 as f64;
        let nf = n as f64;
        let sigma = analytic * ((1.0 - p3) / (nf * p3) + (1.0 - p1) / (nf * p1)).sqrt();
        ensure((ratio - analytic).abs() < SIGMAS * sigma, || {
            format!("simulated ratio {ratio:.4} vs {analytic:.6} (σ = {sigma:.4}) at d = {d:e}")
        })?;
        lines.push(format!(
            "d = {d:e}: analytic {analytic:.6}, simulated {ratio:.4} ± {sigma:.4}"
        ));
    }
    Ok(lines.join("; "))
}

fn ac5() -> Check {
    let mut cfg = ideal(2_200_000);
    cfg.eve.enabled = true;
    let cfg = cfg.normalized();
    let expected = enumerate_attack_qber(&cfg.eve, &effective_bob_amz(&cfg), &cfg.bob.detector)
        .map_err(|e| e.to_string())?;
    ensure(
        (expected.z - 0.25).abs() < TABLE_TOL && (expected.x - 0.25).abs() < TABLE_TOL,
        || format!("enumerated QBER {expected:?}"),
    )?;
    let (out, _) = session(&cfg)?;
    let total: u64 = out.stats.sifted_by_basis.iter().sum();
    ensure(total >= MIN_SIFTED, || format!("only {total} sifted bits"))?;
    let mut parts = Vec::new();
    for (basis, target) in [(Basis::Z, expected.z), (Basis::X, expected.x)] {
        let n = out.stats.sifted_by_basis[basis.index()] as f64;
        let q = out.stats.qber(basis);
        let sigma = (target * (1.0 - target) / n).sqrt();
        ensure((q - target).abs() < SIGMAS * sigma, || {
            format!("{basis:?} QBER {q:.5} vs {target} (σ = {sigma:.5})")
        })?;
        parts.push(format!("{basis:?} {q:.5}"));
    }

    let (clean, _) = session(&ideal(200_000))?;
    ensure(
        clean.summary.qber == 0.0 && clean.stats.errors_by_basis == [0, 0],
        || format!("QBER {} without Eve", clean.summary.qber),
    )?;
    Ok(format!(
        "enumerated 0.25/0.25, simulated {} over {total} sifted bits; Eve off: QBER = 0",
        parts.join(", ")
    ))
}

fn ac6() -> Check {
    let (out, _) = session(&ideal(1_000_000))?;
    let t = out.stats.basis_table;
    let n: f64 = t.iter().flatten().sum::<u64>() as f64;
    let row = |a: usize| (t[a][0] + t[a][1]) as f64;
    let col = |b: usize| (t[0][b] + t[1][b]) as f64;
    let mut chi2 = 0.0;
    for a in 0..2 {
        for b in 0..2 {
            let e = row(a) * col(b) / n;
            chi2 += (t[a][b] as f64 - e).powi(2) / e;
        }
    }
    ensure(chi2 < SIGMAS * SIGMAS, || format!("chi-square {chi2:.3}"))?;

    let half_sigma = |n: f64| (0.25 / n).sqrt();
    let px = col(Basis::X.index()) / n;
    ensure((px - 0.5).abs() < SIGMAS * half_sigma(n), || {
        format!("P(X) = {px:.5}")
    })?;

    let s = out.summary;
    let reg = s.events_registered as f64;
    let pc = s.conclusive_count as f64 / reg;
    ensure((pc - 0.5).abs() < SIGMAS * half_sigma(reg), || {
        format!("P(conclusive | registered) = {pc:.5}")
    })?;
    Ok(format!(
        "chi-square = {chi2:.3}, P(Bob X) = {px:.5}, P(conclusive | registered) = {pc:.5}"
    ))
}

fn amp() -> impl Strategy<Value = Complex64> {
    (-1.0f64..1.0, -1.0f64..1.0).prop_map(|(r, i)| Complex64::new(r, i))
}

fn link_state() -> impl Strategy<Value = TimeBinState> {
    (amp(), amp(), 0.0f64..=1.0, 1usize..=4).prop_map(|(e, l, scale, delay)| {
        let n = (e.norm_sqr() + l.norm_sqr()).sqrt().max(1e-9);
        TimeBinState::two_bin(e * (scale / n), l * (scale / n), delay)
    })
}

fn amz_for(delay: usize) -> impl Strategy<Value = AmzSpec> {
    (
        0.0f64..10.0,
        -std::f64::consts::PI..std::f64::consts::PI,
        0.0f64..=1.0,
    )
        .prop_map(move |(loss, phase, v)| AmzSpec {
            delay_bins: delay,
            excess_loss_db: loss,
            phase_offset_rad: phase,
            visibility: v,
            ..AmzSpec::default()
        })
}

fn state_and_amz() -> impl Strategy<Value = (TimeBinState, AmzSpec)> {
    link_state().prop_flat_map(|st| {
        let delay = st.bin_count() - 1;
        (Just(st), amz_for(delay))
    })
}

fn runner() -> TestRunner {
    let config = PropConfig {
        cases: PROPERTY_CASES,
        failure_persistence: None,
        ..PropConfig::default()
    };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn ac7() -> Check {
    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    runner()
        .run(&(0.0f64..=1.0, amp(), amp()), |(t, a, b)| {
            // Columns of the matrix, then U†U = I and norm preservation.
            let c0 = apply_coupler(one, zero, t).unwrap();
            let c1 = apply_coupler(zero, one, t).unwrap();
            let g00 = c0.0.norm_sqr() + c0.1.norm_sqr();
            let g11 = c1.0.norm_sqr() + c1.1.norm_sqr();
            let g01 = c0.0.conj() * c1.0 + c0.1.conj() * c1.1;
            prop_assert!((g00 - 1.0).abs() < PROPERTY_TOL && (g11 - 1.0).abs() < PROPERTY_TOL);
            prop_assert!(g01.norm() < PROPERTY_TOL);
            let (x, y) = apply_coupler(a, b, t).unwrap();
            let before = a.norm_sqr() + b.norm_sqr();
            prop_assert!((x.norm_sqr() + y.norm_sqr() - before).abs() < PROPERTY_TOL);
            Ok(())
        })
        .map_err(|e| format!("coupler unitarity: {e}"))?;

    runner()
        .run(&state_and_amz(), |(st, spec)| {
            let d = bob_transform(&st, &spec).unwrap();
            prop_assert!((d.total() - 1.0).abs() < PROPERTY_TOL);
            prop_assert!(d.p.iter().flatten().all(|&x| x >= 0.0) && d.p_lost >= -PROPERTY_TOL);
            let conserved = st.norm_sqr() * spec.excess_transmittance();
            prop_assert!((d.detected_mass() - conserved).abs() < PROPERTY_TOL);
            Ok(())
        })
        .map_err(|e| format!("normalization: {e}"))?;

    runner()
        .run(
            &(state_and_amz(), -std::f64::consts::PI..std::f64::consts::PI),
            |((st, spec), theta)| {
                let a = bob_transform(&st, &spec).unwrap();
                let b = bob_transform(&st.with_global_phase(theta), &spec).unwrap();
                for (x, y) in a.p.iter().flatten().zip(b.p.iter().flatten()) {
                    prop_assert!((x - y).abs() < PROPERTY_TOL);
                }
                Ok(())
            },
        )
        .map_err(|e| format!("global phase: {e}"))?;
    Ok(format!(
        "unitarity, normalization, global phase: {PROPERTY_CASES} cases each at {PROPERTY_TOL:e}"
    ))
}

fn dir_contents(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .map_err(|e| e.to_string())?
        .map(|e| {
            let e = e.map_err(|e| e.to_string())?;
            let bytes = fs::read(e.path()).map_err(|e| e.to_string())?;
            Ok((e.file_name().to_string_lossy().into_owned(), bytes))
        })
        .collect::<Result<_, String>>()?;
    files.sort();
    Ok(files)
}

fn outputs_for(cfg: &SessionConfig) -> Result<Vec<(String, Vec<u8>)>, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let p = dir.path();
    let sampled = ProfileMode::Sampled {
        pulses: 100_000,
        mu: 10.0,
    };
    cmd_profile(cfg, sampled, Some(p)).map_err(|e| e.to_string())?;
    cmd_run(cfg, Some(p)).map_err(|e| e.to_string())?;
    cmd_sweep(cfg, SweepAxis::LengthKm, &[0.0, 10.0], Some(p)).map_err(|e| e.to_string())?;
    dir_contents(p)
}

fn ac8() -> Check {
    let mut cfg = SessionConfig::default();
    cfg.n_pulses = 300_000;
    cfg.eve.enabled = true;
    cfg.bob.amz.phase_jitter_rad = 0.05;
    let first = outputs_for(&cfg)?;
    let second = outputs_for(&cfg)?;
    ensure(first.len() == 6, || format!("{} output files", first.len()))?;
    ensure(first == second, || {
        "outputs differ between identical runs".into()
    })?;
    cfg.seed += 1;
    ensure(outputs_for(&cfg)? != first, || {
        "a different seed gave identical outputs".into()
    })?;

    let big = SessionConfig {
        n_pulses: RATE_PULSES,
        ..SessionConfig::default()
    };
    let (_, elapsed) = session(&big)?;
    ensure(elapsed < SESSION_BUDGET, || {
        format!("10^7 pulses took {elapsed:?}")
    })?;
    Ok(format!(
        "{} files byte-identical across runs; 10^7-pulse session in {elapsed:.2?}",
        first.len()
    ))
}

fn main() {
    let criteria: [(&str, &str, fn() -> Check); 8] = [
        ("AC1", "four-state distribution table", ac1),
        ("AC2", "extinction ratio sets X-basis error", ac2),
        ("AC3", "twofold Z-basis key rate", ac3),
        ("AC4", "dark-count exposure of three gates", ac4),
        ("AC5", "intercept-resend error rate", ac5),
        ("AC6", "passive basis choice", ac6),
        ("AC7", "conservation and unitarity properties", ac7),
        ("AC8", "determinism and throughput", ac8),
    ];
    let mut failed = 0;
    for (id, name, check) in criteria {
        let result =
            catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        match result {
            Ok(detail) => println!("[PASS] {id} {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("[FAIL] {id} {name}: {detail}");
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
