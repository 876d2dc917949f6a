//! Exit gate for the whole pipeline. Each test checks one numbered criterion
//! end to end at its stated tolerance and prints one PASS line with the
//! measured values (visible with --nocapture); a failed assertion is the FAIL
//! line for that criterion.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;
use std::time::Instant;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use riss::analysis::{degree_grid, farfield_beampattern, nearfield_probe, normalize_peak};
use riss::channel::{
    effective_gain, mrt_beamformer, nearfield_channels, ReflectionConfig,
};
use riss::farfield::{
    compose_with_rx, irm_solve, profile_gain, robust_angle_grid, FarfieldDesignSpec, IrmResult,
};
use riss::geometry::{element_grid, AngleSet, Scenario, Vector3};
use riss::link::{
    apply_channel, build_frame, head_waveform, modulate, random_bits, rrc_taps, simulate_link,
    FrameConfig,
};
use riss::nearfield::{
    ao_optimize, evaluate_objective, init_phases, signal_strength, NearfieldDesignSpec,
    UpdateOrder,
};
use riss::sensing::{
    classify_sync_head, music_estimate, music_spectrum, root_music, sample_covariance, subspace,
    synth_snapshots, HeadLabel,
};
use riss::C64;

const TARGET: usize = 1;
const INTERFERER: usize = 0;

/// Reference desk geometry with per-configuration link gains and the noise
/// budget for 15 dB symbol SNR on the interference-free aligned link.
struct LinkFixture {
    scenario: Scenario,
    align: ReflectionConfig,
    suppress: ReflectionConfig,
    /// (name, [interferer gain, target gain]) for identity, align, suppress.
    gains: Vec<(&'static str, Vec<C64>)>,
    sigma2: f64,
}

fn link_fixture() -> &'static LinkFixture {
    static FX: OnceLock<LinkFixture> = OnceLock::new();
    FX.get_or_init(|| {
        let sc = Scenario::reference(3.5e9, 3.5);
        let lambda = sc.wavelength();
        let elements = sc.passive_positions();
        let d_t = riss::nearfield::distances_to(&elements, &sc.tx[TARGET].position);
        let d_r = riss::nearfield::distances_to(&elements, &sc.rx);
        let align = init_phases(&d_t, &d_r, lambda, 0.0);
        let spec = NearfieldDesignSpec::from_scenario(&sc, TARGET, INTERFERER).unwrap();
        let (suppress, _) = ao_optimize(&spec, &align).unwrap();

        let set = nearfield_channels(&sc).unwrap();
        let beams: Vec<_> =
            sc.tx.iter().map(|tx| mrt_beamformer(0.0, tx.power, tx.antennas)).collect();
        let identity = ReflectionConfig::identity(sc.n_passive());
        let gains: Vec<(&str, Vec<C64>)> = [
            ("identity", &identity),
            ("align", &align),
            ("suppress", &suppress),
        ]
        .into_iter()
        .map(|(name, refl)| (name, effective_gain(&set, refl, &beams).unwrap()))
        .collect();
        let sigma2 = gains[1].1[TARGET].norm_sqr() / 10f64.powf(1.5);
        LinkFixture { scenario: sc, align, suppress, gains, sigma2 }
    })
}

fn reference_farfield_spec(nx: usize, ny: usize) -> FarfieldDesignSpec {
    let mut spec =
        FarfieldDesignSpec::new(nx, ny, AngleSet::coplanar_from_boresight(10f64.to_radians()));
    spec.interferer = Some(AngleSet::coplanar_from_boresight(-20f64.to_radians()));
    spec.tau = 0.1;
    spec
}

/// N=100 suppression design solved with a soft initial penalty so the rank
/// residual traverses the linear-rate regime; shared by criteria 3, 4, 10.
fn n100_design() -> &'static IrmResult {
    static RES: OnceLock<IrmResult> = OnceLock::new();
    RES.get_or_init(|| {
        let mut spec = reference_farfield_spec(10, 10);
        spec.epsilon0 = 0.01;
        irm_solve(&spec).unwrap()
    })
}

#[test]
fn criterion_01_evm_ordering_with_3pp_gaps() {
    let fx = link_fixture();
    let cfg = FrameConfig::default();
    let taps = rrc_taps(cfg.sps, cfg.span, cfg.rolloff).unwrap();
    let t0 = Instant::now();

    let mut means = BTreeMap::new();
    for (name, g) in &fx.gains {
        let mut acc = 0.0;
        for trial in 0..20u64 {
            let res = simulate_link(
                &cfg,
                &taps,
                g[TARGET],
                Some(g[INTERFERER]),
                fx.sigma2,
                9000 + trial,
            )
            .unwrap();
            acc += res.evm_percent;
        }
        means.insert(*name, acc / 20.0);
    }
    let elapsed = t0.elapsed();

    let (id, al, su) = (means["identity"], means["align"], means["suppress"]);
    assert!(su + 3.0 <= al, "suppress {su:.2}% vs align {al:.2}%: gap under 3 pp");
    assert!(al + 3.0 <= id, "align {al:.2}% vs identity {id:.2}%: gap under 3 pp");
    assert!(elapsed.as_secs() <= 300, "took {elapsed:?}, budget 5 min");
    println!(
        "criterion 01 EVM ordering: PASS (suppress {su:.2}% < align {al:.2}% < identity {id:.2}%, 20 trials in {elapsed:.2?})"
    );
}

#[test]
fn criterion_02_interference_only_power_drop() {
    let fx = link_fixture();
    let cfg = FrameConfig::default();
    let taps = rrc_taps(cfg.sps, cfg.span, cfg.rolloff).unwrap();

    let set = nearfield_channels(&fx.scenario).unwrap();
    let beams: Vec<_> = fx
        .scenario
        .tx
        .iter()
        .map(|tx| mrt_beamformer(0.0, tx.power, tx.antennas))
        .collect();

    // Target transmitter silent: mean received power over 20 noiseless
    // interferer-only frames, per reflection config.
    let power = |refl: &ReflectionConfig| -> f64 {
        let g = effective_gain(&set, refl, &beams).unwrap()[INTERFERER];
        let mut acc = 0.0;
        let mut samples = 0usize;
        for trial in 0..20u64 {
            let frame =
                build_frame(&cfg, &random_bits(cfg.data_bits, 7000 + trial), HeadLabel::Tx2)
                    .unwrap();
            let wave = modulate(&frame, &taps, cfg.sps);
            let rx = apply_channel(&[wave], &[g], 0.0, trial).unwrap();
            acc += rx.iter().map(|x| x.norm_sqr()).sum::<f64>();
            samples += rx.len();
        }
        acc / samples as f64
    };

    let drop_db =
        10.0 * (power(&fx.align) / power(&fx.suppress)).log10();
    let drop_2bit_db =
        10.0 * (power(&fx.align.quantized(2)) / power(&fx.suppress.quantized(2))).log10();

    assert!(drop_db >= 10.0, "continuous drop {drop_db:.1} dB < 10 dB");
    assert!(drop_2bit_db >= 6.0, "2-bit drop {drop_2bit_db:.1} dB < 6 dB");
    println!(
        "criterion 02 interference-only drop: PASS (continuous {drop_db:.1} dB, 2-bit {drop_2bit_db:.1} dB)"
    );
}

/// Geometric-mean ratio of consecutive rank residuals over the late window:
/// penalized iterations, skipping the two warm-up steps and the terminal
/// sub-tolerance step. Per-step ratios jitter with solver accuracy; the rate
/// over the window is the invariant.
fn late_rate(res: &IrmResult) -> (f64, usize) {
    let rs: Vec<f64> =
        res.history.iter().filter(|it| it.epsilon > 0.0).map(|it| it.r).collect();
    let window = &rs[2..rs.len() - 1];
    assert!(window.len() >= 4, "only {} penalized residuals to rate", window.len());
    let gm = (window[window.len() - 1] / window[0]).powf(1.0 / (window.len() - 1) as f64);
    (gm, window.len())
}

#[test]
fn criterion_03_irm_linear_rate_and_rank_one() {
    for (nx, ny) in [(4usize, 4usize), (10, 10)] {
        let mut spec = reference_farfield_spec(nx, ny);
        spec.epsilon0 = 0.01;
        let t0 = Instant::now();
        let res = if nx * ny == 100 { n100_design().clone() } else { irm_solve(&spec).unwrap() };
        let elapsed = t0.elapsed();

        assert!(res.converged, "N={} did not converge", nx * ny);
        assert!(res.rank_ratio >= 0.999, "N={} rank ratio {}", nx * ny, res.rank_ratio);
        let first = res.history.iter().find(|it| it.epsilon > 0.0).unwrap().r;
        let last = res.history.last().unwrap().r;
        assert!(last < first / 10.0, "residual did not decrease: {first:.3e} -> {last:.3e}");

        let (gm, steps) = late_rate(&res);
        let nominal = 1.0 / spec.growth;
        assert!(
            gm >= 0.8 * nominal && gm <= 1.2 * nominal,
            "N={} late rate {gm:.4} vs 1/growth {nominal:.4} +/- 20%",
            nx * ny
        );

        let slowest =
            res.history.iter().map(|it| it.seconds).fold(0.0f64, f64::max);
        if nx * ny == 100 {
            assert!(slowest <= 60.0, "slowest N=100 solve {slowest:.1} s > 60 s");
        }
        println!(
            "criterion 03 IRM N={}: PASS (late rate {gm:.3} over {steps} residuals vs {nominal:.3}, rank ratio {:.6}, slowest solve {slowest:.2} s, total {elapsed:.2?})",
            nx * ny,
            res.rank_ratio
        );
    }
}

#[test]
fn criterion_04_robust_null_breadth_and_cost() {
    let mut spec = reference_farfield_spec(10, 10);
    spec.delta = 3f64.to_radians();
    spec.grid_points = 7;
    let res = irm_solve(&spec).unwrap();
    assert!(res.converged);

    let grid = degree_grid(-89.0, 89.0, 0.02);
    let pat = farfield_beampattern(&res.surface_phases, None, 10, 10, &grid, vec![]).unwrap();
    let mut worst = f64::NEG_INFINITY;
    for angle in robust_angle_grid(-20f64.to_radians(), spec.delta, 7) {
        let db = 10.0 * pat.gain_at(angle.to_degrees()).log10();
        worst = worst.max(db);
        assert!(db <= -10.0, "hypothesis {:.2} deg at {db:.1} dB", angle.to_degrees());
    }

    let diag = spec.diag_value();
    let target = AngleSet::coplanar_from_boresight(10f64.to_radians());
    let robust_main = profile_gain(&res.surface_phases, &target, 10, 10, diag);
    let plain_main = profile_gain(&n100_design().surface_phases, &target, 10, 10, diag);
    let loss_db = 10.0 * (plain_main / robust_main).log10();
    assert!(loss_db <= 2.0, "main lobe loss {loss_db:.2} dB > 2 dB");
    println!(
        "criterion 04 robust null: PASS (worst hypothesis {worst:.1} dB, main-lobe loss {loss_db:.2} dB)"
    );
}

#[test]
fn criterion_05_ascent_monotone_and_lattice_optimal() {
    // Exact monotonicity on the reference scenario at the link settings.
    let fx = link_fixture();
    let spec = NearfieldDesignSpec::from_scenario(&fx.scenario, TARGET, INTERFERER).unwrap();
    let (_, trace) = ao_optimize(&spec, &fx.align).unwrap();
    for (i, w) in trace.objective_trace.windows(2).enumerate() {
        assert!(w[1] >= w[0], "objective fell at visit {i}: {} -> {}", w[0], w[1]);
    }

    // Discrete optimality: 3 elements, 4-level lattice, 200 seeded geometries
    // (nodes on 0.5-5 m arcs), against the exhaustive 4^3 sweep.
    let lambda = 0.0857;
    let mut rng = ChaCha8Rng::seed_from_u64(501);
    let mut matched = 0usize;
    for _ in 0..200 {
        let elements: Vec<[f64; 2]> =
            (0..3).map(|k| [(k as f64 - 1.0) * lambda / 2.0, 0.0]).collect();
        let mut node = || {
            let r = rng.random_range(0.5..5.0);
            let az = rng.random_range(-1.2..1.2f64);
            [r * az.sin(), r * az.cos()]
        };
        let dists = |p: [f64; 2]| {
            elements
                .iter()
                .map(|e| ((e[0] - p[0]).powi(2) + (e[1] - p[1]).powi(2)).sqrt())
                .collect::<Vec<f64>>()
        };
        let spec = NearfieldDesignSpec {
            target: dists(node()),
            interferers: vec![dists(node())],
            rx: dists(node()),
            wavelength: lambda,
            eta: 0.5,
            levels: 4,
            max_sweeps: 50,
            order: UpdateOrder::Ascending,
            psi: 0.0,
        };
        // Rounding breaks the common-phase gauge, so different psi offsets
        // land on genuinely different lattice starts; ascent keeps the best.
        let mut reached = f64::NEG_INFINITY;
        for j in 0..4u32 {
            let psi = std::f64::consts::TAU * j as f64 / 4.0;
            let init = init_phases(&spec.target, &spec.rx, lambda, psi).quantized(2);
            let (_, trace) = ao_optimize(&spec, &init).unwrap();
            reached = reached.max(trace.objective);
        }

        let mut best = f64::NEG_INFINITY;
        for a in 0..4u32 {
            for b in 0..4u32 {
                for c in 0..4u32 {
                    let p: Vec<f64> = [a, b, c]
                        .iter()
                        .map(|&j| std::f64::consts::TAU * j as f64 / 4.0)
                        .collect();
                    best = best.max(evaluate_objective(&p, &spec));
                }
            }
        }
        if reached >= best - 1e-9 {
            matched += 1;
        }
    }
    assert!(matched >= 190, "lattice optimum matched on {matched}/200 < 95%");
    println!(
        "criterion 05 alternating ascent: PASS (monotone over {} visits, lattice optimum {matched}/200)",
        trace.objective_trace.len()
    );
}

#[test]
fn criterion_06_alignment_reaches_element_count() {
    let fx = link_fixture();
    let sc = &fx.scenario;
    let elements = sc.passive_positions();
    let lambda = sc.wavelength();
    let d_t = riss::nearfield::distances_to(&elements, &sc.tx[TARGET].position);
    let d_r = riss::nearfield::distances_to(&elements, &sc.rx);
    let n = sc.n_passive() as f64;

    let s2 = signal_strength(fx.align.phases(), &d_t, &d_r, lambda);
    assert!((s2 - n).abs() <= 1e-9, "aligned strength {s2} vs N {n}");
    let s2_q = signal_strength(fx.align.quantized(2).phases(), &d_t, &d_r, lambda);
    assert!(s2_q >= 0.707 * n, "2-bit aligned strength {s2_q} < 0.707N");
    println!(
        "criterion 06 alignment identity: PASS (S2 {s2:.12} = N, 2-bit {s2_q:.2} >= {:.1})",
        0.707 * n
    );
}

#[test]
fn criterion_07_doa_accuracy_and_agreement() {
    let truth = [10f64.to_radians(), -20f64.to_radians()];
    let ratio = link_fixture().scenario.active_spacing / link_fixture().scenario.wavelength();
    let grid = riss::sensing::default_grid();
    let mut successes = 0usize;
    for trial in 0..50u64 {
        let block =
            synth_snapshots(&truth, &[1.0, 1.0], 0.1, 5000, 4, ratio, 300 + trial).unwrap();
        let dec = subspace(&sample_covariance(&block.data), 2).unwrap();
        let spectrum = music_spectrum(&dec, ratio, &grid).unwrap();
        let mut music = music_estimate(&grid, &spectrum, 2).unwrap();
        let mut root = root_music(&dec, 2, ratio).unwrap();
        music.sort_by(|a, b| a.partial_cmp(b).unwrap());
        root.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut sorted = truth;
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());

        let ok = sorted.iter().zip(&music).zip(&root).all(|((&t, &m), &r)| {
            (m - t).abs().to_degrees() <= 2.0
                && (r - t).abs().to_degrees() <= 2.0
                && (m - r).abs().to_degrees() <= 0.5
        });
        if ok {
            successes += 1;
        }
    }
    assert!(successes >= 49, "only {successes}/50 trials within tolerance");
    println!("criterion 07 direction finding: PASS ({successes}/50 trials within 2 deg, methods within 0.5 deg)");
}

#[test]
fn criterion_08_head_recognition_at_0db() {
    let cfg = FrameConfig::default();
    let taps = rrc_taps(cfg.sps, cfg.span, cfg.rolloff).unwrap();
    let h1 = head_waveform(&cfg, &taps, HeadLabel::Tx1);
    let h2 = head_waveform(&cfg, &taps, HeadLabel::Tx2);
    // Es/N0 = 0 dB with unit-energy symbols; search window covers the head
    // plus shaping transients.
    let window = (cfg.head_bits / 2) * cfg.sps + 2 * cfg.span * cfg.sps;
    let mut correct = 0usize;
    for i in 0..200u64 {
        let label = if i % 2 == 0 { HeadLabel::Tx1 } else { HeadLabel::Tx2 };
        let frame = build_frame(&cfg, &random_bits(cfg.data_bits, 800 + i), label).unwrap();
        let wave = modulate(&frame, &taps, cfg.sps);
        let rx =
            apply_channel(&[wave[..window].to_vec()], &[C64::new(1.0, 0.0)], 1.0, i).unwrap();
        if let Ok((got, _)) = classify_sync_head(&rx, &h1, &h2, 0.15) {
            if got == label {
                correct += 1;
            }
        }
    }
    assert!(correct >= 190, "classified {correct}/200 < 95%");
    println!("criterion 08 head recognition: PASS ({correct}/200 at 0 dB)");
}

#[test]
fn criterion_09_awgn_evm_matches_prediction() {
    let cfg = FrameConfig::default();
    let taps = rrc_taps(cfg.sps, cfg.span, cfg.rolloff).unwrap();
    let sigma2 = 10f64.powf(-1.5);
    let analytic = 100.0 * sigma2.sqrt();

    let mut acc = 0.0;
    for seed in 0..5u64 {
        let res =
            simulate_link(&cfg, &taps, C64::new(1.0, 0.0), None, sigma2, 400 + seed).unwrap();
        acc += res.evm_percent;
    }
    let mean = acc / 5.0;
    assert!(
        (mean - analytic).abs() <= 0.1 * analytic,
        "EVM {mean:.2}% vs analytic {analytic:.2}%"
    );

    let clean = simulate_link(&cfg, &taps, C64::new(1.0, 0.0), None, 0.0, 5).unwrap();
    assert!(clean.evm_percent < 0.1, "loopback EVM {}%", clean.evm_percent);
    println!(
        "criterion 09 link analytics: PASS (EVM {mean:.2}% vs {analytic:.2}%, loopback {:.4}%)",
        clean.evm_percent
    );
}

#[test]
fn criterion_10_wavefront_models_agree_on_far_arc() {
    let fx = link_fixture();
    assert!(!fx.scenario.far_field_valid(3.5), "planar model must be invalid at 3.5 m");
    let radius = 10.0 * 3.5;
    let lambda = fx.scenario.wavelength();

    let design = &n100_design().surface_phases;
    let grid = degree_grid(-89.0, 89.0, 1.0);
    let pat = farfield_beampattern(design, None, 10, 10, &grid, vec![]).unwrap();
    let far: Vec<f64> = pat.gains.iter().map(|g| g.sqrt()).collect();

    // Spherical model: sweep the source over the same arc, receiver on the
    // boresight at the same range; the boresight steering is all-ones so the
    // composed physical profile equals the design profile.
    let physical = compose_with_rx(design, &AngleSet::coplanar_from_boresight(0.0), 10, 10);
    let elements = element_grid(10, 10, lambda / 2.0);
    let probe = Vector3::new(0.0, 0.0, radius);
    let mut near: Vec<f64> = grid
        .iter()
        .map(|a| {
            let r = a.to_radians();
            let source = Vector3::new(radius * r.sin(), 0.0, radius * r.cos());
            nearfield_probe(physical.phases(), &elements, &source, &probe, lambda, false)
                .unwrap()
                .norm()
        })
        .collect();
    normalize_peak(&mut near);

    let worst = near
        .iter()
        .zip(&far)
        .map(|(n, f)| (n - f).abs())
        .fold(0.0f64, f64::max);
    assert!(worst <= 0.05, "models deviate by {worst:.4} of peak on the 35 m arc");
    println!(
        "criterion 10 cross-model consistency: PASS (max deviation {worst:.4} of peak, planar predicate false at 3.5 m)"
    );
}

#[test]
fn criterion_11_reruns_are_byte_identical() {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for dir in &dirs {
        let out = Command::new(env!("CARGO_BIN_EXE_riss"))
            .args(["run", "doa-spectrum", "--output", dir.path().to_str().unwrap()])
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let read = |dir: &Path| -> BTreeMap<String, Vec<u8>> {
        fs::read_dir(dir)
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (e.file_name().into_string().unwrap(), fs::read(e.path()).unwrap())
            })
            .collect()
    };
    let a = read(dirs[0].path());
    let b = read(dirs[1].path());
    assert_eq!(a.keys().collect::<Vec<_>>(), b.keys().collect::<Vec<_>>());
    let mut bytes = 0usize;
    for (name, content) in &a {
        assert_eq!(content, &b[name], "{name} differs between identical runs");
        bytes += content.len();
    }
    println!(
        "criterion 11 determinism: PASS ({} artifacts, {bytes} bytes byte-identical)",
        a.len()
    );
}
