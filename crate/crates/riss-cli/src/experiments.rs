//! Bundled experiments and their pipelines. Each experiment runs the modules
//! in sensing → design → link → analysis order as applicable, emitting CSV
//! artifacts and manifest extras; individual step failures mark the run
//! partial instead of aborting it.

use std::collections::BTreeMap;

use serde_json::{Value, json};

use riss::analysis::{
    GridSpec, Marker, beampattern_csv, default_angle_grid, farfield_beampattern, heatmap,
    heatmap_csv, normalize_peak,
};
use riss::channel::{ReflectionConfig, effective_gain, mrt_beamformer, nearfield_channels};
use riss::farfield::{FarfieldDesignSpec, irm_solve, robust_angle_grid};
use riss::geometry::AngleSet;
use riss::iq::{IqHeader, encode_payload, waveform_matrix};
use riss::link::{
    FrameConfig, build_frame, constellation_rows, modulate, random_bits, rrc_taps, simulate_link,
};
use riss::nearfield::{
    NearfieldDesignSpec, ao_optimize, distances_to, init_phases, signal_strength,
};
use riss::sensing::{
    HeadLabel, music_estimate, music_spectrum, root_music, sample_covariance, subspace,
    synth_snapshots,
};

use crate::config::{ExperimentConfig, ScenarioBlock};
use crate::seeds::sub_seed;

pub const NAMES: [&str; 6] = [
    "doa-spectrum",
    "irm-convergence",
    "evm-comparison",
    "beampattern-farfield",
    "beampattern-robust",
    "heatmap-nearfield",
];

pub fn bundled(name: &str) -> Option<&'static str> {
    match name {
        "doa-spectrum" => Some(include_str!("../experiments/doa-spectrum.toml")),
        "irm-convergence" => Some(include_str!("../experiments/irm-convergence.toml")),
        "evm-comparison" => Some(include_str!("../experiments/evm-comparison.toml")),
        "beampattern-farfield" => Some(include_str!("../experiments/beampattern-farfield.toml")),
        "beampattern-robust" => Some(include_str!("../experiments/beampattern-robust.toml")),
        "heatmap-nearfield" => Some(include_str!("../experiments/heatmap-nearfield.toml")),
        _ => None,
    }
}

#[derive(Debug, Default)]
pub struct RunOutput {
    pub artifacts: Vec<(String, Vec<u8>)>,
    pub extras: BTreeMap<String, Value>,
    pub failures: Vec<String>,
    pub sub_seeds: BTreeMap<String, u64>,
}

impl RunOutput {
    fn text(&mut self, name: &str, content: String) {
        self.artifacts.push((name.to_string(), content.into_bytes()));
    }

    fn step<T>(&mut self, label: &str, result: Result<T, String>) -> Option<T> {
        match result {
            Ok(v) => Some(v),
            Err(e) => {
                self.failures.push(format!("{label}: {e}"));
                None
            }
        }
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<RunOutput, String> {
    let master = config.run.seed.ok_or("run.seed missing")?;
    let mut out = RunOutput::default();
    match config.run.experiment.as_str() {
        "doa-spectrum" => doa_spectrum(config, master, &mut out),
        "irm-convergence" => irm_convergence(config, &mut out),
        "evm-comparison" => evm_comparison(config, master, &mut out),
        "beampattern-farfield" => beampattern_farfield(config, &mut out),
        "beampattern-robust" => beampattern_robust(config, &mut out),
        "heatmap-nearfield" => heatmap_nearfield(config, &mut out),
        other => return Err(format!("unknown experiment `{other}`")),
    }
    Ok(out)
}

fn doa_spectrum(config: &ExperimentConfig, master: u64, out: &mut RunOutput) {
    let sc = config.scenario.build();
    let ratio = sc.active_spacing / sc.wavelength();
    let noise = 10f64.powf(-config.sensing.snr_db / 10.0);
    let seed = sub_seed(master, "doa.snapshots");
    out.sub_seeds.insert("doa.snapshots".into(), seed);

    let truth = [
        config.scenario.interferer_deg.to_radians(),
        config.scenario.target_deg.to_radians(),
    ];
    let Some(block) = out.step(
        "snapshots",
        synth_snapshots(
            &truth,
            &[1.0, 1.0],
            noise,
            config.sensing.snapshots,
            sc.na,
            ratio,
            seed,
        )
        .map_err(err),
    ) else {
        return;
    };

    let header = IqHeader {
        channels: sc.na,
        samples: config.sensing.snapshots,
        sample_rate: config.link.symbol_rate,
        seed,
    };
    out.text("snapshots.iqh", header.render());
    out.artifacts.push(("snapshots.iq".into(), encode_payload(&block.data)));

    let r = sample_covariance(&block.data);
    let Some(dec) = out.step("subspace", subspace(&r, 2).map_err(err)) else { return };

    let step = config.sensing.grid_step_deg;
    let n_pts = (180.0 / step).round() as usize + 1;
    let grid_rad: Vec<f64> =
        (0..n_pts).map(|i| (-90.0 + i as f64 * step).to_radians()).collect();
    let Some(spectrum) = out.step(
        "music spectrum",
        music_spectrum(&dec, ratio, &grid_rad).map_err(err),
    ) else {
        return;
    };
    let mut norm = spectrum.clone();
    normalize_peak(&mut norm);
    let mut csv = String::from("angle_deg,pseudospectrum_db\n");
    for (phi, v) in grid_rad.iter().zip(&norm) {
        csv.push_str(&format!("{:.6},{:.6}\n", phi.to_degrees(), 10.0 * v.log10()));
    }
    out.text("music_spectrum.csv", csv);

    let music = out.step(
        "music estimate",
        music_estimate(&grid_rad, &spectrum, 2).map_err(err),
    );
    let roots = out.step("root music", root_music(&dec, 2, ratio).map_err(err));
    let degs = |v: Vec<f64>| -> Vec<f64> { v.into_iter().map(f64::to_degrees).collect() };
    out.extras.insert(
        "doa".into(),
        json!({
            "truth_deg": degs(truth.to_vec()),
            "music_deg": music.map(degs),
            "root_music_deg": roots.map(degs),
        }),
    );
}

fn design_spec(config: &ExperimentConfig) -> FarfieldDesignSpec {
    let sb = &config.scenario;
    let mut spec = FarfieldDesignSpec::new(
        sb.nx,
        sb.ny,
        AngleSet::coplanar_from_boresight(sb.target_deg.to_radians()),
    );
    spec.tx_antennas = sb.tx_antennas;
    spec.power = sb.tx_power;
    spec.interferer = Some(AngleSet::coplanar_from_boresight(sb.interferer_deg.to_radians()));
    spec.tau = config.design.tau;
    spec.delta = config.design.delta_deg.to_radians();
    spec.grid_points = config.design.grid_points;
    spec
}

fn pattern_markers(config: &ExperimentConfig) -> Vec<Marker> {
    vec![
        Marker::new(config.scenario.target_deg, "target"),
        Marker::new(config.scenario.interferer_deg, "interferer"),
    ]
}

fn irm_convergence(config: &ExperimentConfig, out: &mut RunOutput) {
    let spec = design_spec(config);
    let Some(result) = out.step("irm", irm_solve(&spec).map_err(err)) else { return };

    let mut csv = String::from("iteration,epsilon,r,objective,solver_iterations\n");
    for (i, it) in result.history.iter().enumerate() {
        csv.push_str(&format!(
            "{i},{:.6e},{:.6e},{:.6e},{}\n",
            it.epsilon, it.r, it.objective, it.solver_iterations
        ));
    }
    out.text("irm_trace.csv", csv);

    if let Some(pat) = out.step(
        "beampattern",
        farfield_beampattern(
            &result.surface_phases,
            None,
            spec.nx,
            spec.ny,
            &default_angle_grid(),
            pattern_markers(config),
        )
        .map_err(err),
    ) {
        out.text("beampattern.csv", beampattern_csv(&pat));
    }
    out.extras.insert(
        "irm".into(),
        json!({
            "converged": result.converged,
            "iterations": result.history.len(),
            "rank_ratio": result.rank_ratio,
            "modulus_drift": result.modulus_drift,
        }),
    );
}

/// Hardware-measured EVM percentages quoted alongside simulated trends;
/// reference metadata only, never pass/fail targets.
pub const HARDWARE_EVM_PERCENT: [f64; 12] = [
    44.7494, 26.4598, 4.1357, 4.6768, 5.1486, 5.2401, 19.2229, 6.5897, 43.5608, 20.0157, 24.5761,
    59.7931,
];
/// Hardware recognition accuracy quoted for the deep-network classifier the
/// correlation classifier stands in for.
pub const HARDWARE_RECOGNITION_PERCENT: f64 = 99.3;

fn evm_comparison(config: &ExperimentConfig, master: u64, out: &mut RunOutput) {
    let sc = config.scenario.build();
    let lambda = sc.wavelength();
    let elements = sc.passive_positions();
    let d_t = distances_to(&elements, &sc.tx[ScenarioBlock::TARGET].position);
    let d_i = distances_to(&elements, &sc.tx[ScenarioBlock::INTERFERER].position);
    let d_r = distances_to(&elements, &sc.rx);

    let align = init_phases(&d_t, &d_r, lambda, 0.0);
    let spec = match NearfieldDesignSpec::from_scenario(&sc, ScenarioBlock::TARGET, ScenarioBlock::INTERFERER)
    {
        Ok(mut s) => {
            s.eta = config.design.eta;
            s.levels = config.design.levels;
            s
        }
        Err(e) => {
            out.failures.push(format!("design spec: {e}"));
            return;
        }
    };
    let Some((suppress, trace)) = out.step("ascent", ao_optimize(&spec, &align).map_err(err))
    else {
        return;
    };
    let mut csv = String::from("update,objective\n");
    for (i, v) in trace.objective_trace.iter().enumerate() {
        csv.push_str(&format!("{i},{v:.6}\n"));
    }
    out.text("ao_trace.csv", csv);
    out.extras.insert(
        "ascent".into(),
        json!({
            "sweeps": trace.sweeps,
            "converged": trace.converged,
            "s2_align": signal_strength(align.phases(), &d_t, &d_r, lambda),
            "s2_suppress": signal_strength(suppress.phases(), &d_t, &d_r, lambda),
            "s1_align": signal_strength(align.phases(), &d_i, &d_r, lambda),
            "s1_suppress": signal_strength(suppress.phases(), &d_i, &d_r, lambda),
        }),
    );

    let identity = ReflectionConfig::identity(sc.n_passive());
    let configs: [(&str, &ReflectionConfig); 3] =
        [("identity", &identity), ("align", &align), ("suppress", &suppress)];

    let Some(set) = out.step("channels", nearfield_channels(&sc).map_err(err)) else { return };
    let beamformers: Vec<_> =
        sc.tx.iter().map(|tx| mrt_beamformer(0.0, tx.power, tx.antennas)).collect();
    let mut gains = Vec::new();
    for (name, refl) in configs {
        match effective_gain(&set, refl, &beamformers) {
            Ok(g) => gains.push((name, g)),
            Err(e) => {
                out.failures.push(format!("gain {name}: {e}"));
                return;
            }
        }
    }
    // Noise budget: the stated symbol SNR on the interference-free aligned link.
    let g_align_target = gains[1].1[ScenarioBlock::TARGET];
    let sigma2 = g_align_target.norm_sqr() / 10f64.powf(config.link.es_n0_db / 10.0);

    let frame_cfg: FrameConfig = config.link.frame_config();
    let Some(taps) =
        out.step("taps", rrc_taps(frame_cfg.sps, frame_cfg.span, frame_cfg.rolloff).map_err(err))
    else {
        return;
    };

    let mut table = String::from("reflection,trial,evm_percent,sinr_db\n");
    let mut constellation = String::new();
    let mut sums: BTreeMap<&str, f64> = BTreeMap::new();
    for trial in 0..config.link.frames {
        let label = format!("link.trial.{trial}");
        let seed = sub_seed(master, &label);
        out.sub_seeds.insert(label, seed);
        for (name, g) in &gains {
            let result = simulate_link(
                &frame_cfg,
                &taps,
                g[ScenarioBlock::TARGET],
                Some(g[ScenarioBlock::INTERFERER]),
                sigma2,
                seed,
            );
            match result {
                Ok(res) => {
                    table.push_str(&format!(
                        "{name},{trial},{:.6},{:.6}\n",
                        res.evm_percent,
                        10.0 * res.sinr_estimate.log10()
                    ));
                    *sums.entry(name).or_insert(0.0) += res.evm_percent;
                    if trial == 0 {
                        constellation.push_str(&constellation_rows(&res.received, name));
                    }
                }
                Err(e) => out.failures.push(format!("link {name} trial {trial}: {e}")),
            }
        }
    }
    out.text("evm_table.csv", table);
    out.text("constellation.csv", format!("re,im,label\n{constellation}"));

    // Transmit waveform of the first trial, in the shared IQ format.
    if config.link.frames > 0 {
        let seed = sub_seed(master, "link.trial.0");
        let data = random_bits(frame_cfg.data_bits, seed);
        if let Some(frame) =
            out.step("waveform", build_frame(&frame_cfg, &data, HeadLabel::Tx1).map_err(err))
        {
            let wave = modulate(&frame, &taps, frame_cfg.sps);
            let m = waveform_matrix(&wave);
            let header = IqHeader {
                channels: 1,
                samples: wave.len(),
                sample_rate: frame_cfg.sample_rate,
                seed,
            };
            out.text("tx_waveform.iqh", header.render());
            out.artifacts.push(("tx_waveform.iq".into(), encode_payload(&m)));
        }
    }

    let n = config.link.frames.max(1) as f64;
    let means: BTreeMap<&str, f64> =
        sums.iter().map(|(k, v)| (*k, v / n)).collect();
    out.extras.insert("evm_mean_percent".into(), json!(means));
    out.extras.insert(
        "hardware_reference".into(),
        json!({
            "evm_percent": HARDWARE_EVM_PERCENT.to_vec(),
            "recognition_accuracy_percent": HARDWARE_RECOGNITION_PERCENT,
            "note": "measured over the air; qualitative trend reference only",
        }),
    );
}

fn aligned_profile(config: &ExperimentConfig) -> ReflectionConfig {
    let sb = &config.scenario;
    let angles = AngleSet::coplanar_from_boresight(sb.target_deg.to_radians());
    let (t, p) = angles.increments();
    let alpha = riss::geometry::steering_upa(t, p, sb.nx, sb.ny);
    ReflectionConfig::from_phases(alpha.iter().map(|z| -z.arg()).collect())
}

fn beampattern_farfield(config: &ExperimentConfig, out: &mut RunOutput) {
    let sb = &config.scenario;
    let grid = default_angle_grid();
    let markers = pattern_markers(config);

    if let Some(pat) = out.step(
        "aligned pattern",
        farfield_beampattern(
            &aligned_profile(config),
            None,
            sb.nx,
            sb.ny,
            &grid,
            markers.clone(),
        )
        .map_err(err),
    ) {
        out.text("beampattern_align.csv", beampattern_csv(&pat));
    }

    let spec = design_spec(config);
    let Some(result) = out.step("irm", irm_solve(&spec).map_err(err)) else { return };
    let mut gains = BTreeMap::<String, Value>::new();
    for (name, refl) in [
        ("beampattern_suppress.csv", result.surface_phases.clone()),
        ("beampattern_suppress_2bit.csv", result.surface_phases.quantized(2)),
    ] {
        if let Some(pat) = out.step(
            name,
            farfield_beampattern(&refl, None, sb.nx, sb.ny, &grid, markers.clone())
                .map_err(err),
        ) {
            gains.insert(
                name.trim_end_matches(".csv").to_string(),
                json!({
                    "target_rel": pat.gain_at(sb.target_deg),
                    "interferer_rel": pat.gain_at(sb.interferer_deg),
                }),
            );
            out.text(name, beampattern_csv(&pat));
        }
    }
    out.extras.insert("pattern_gains".into(), json!(gains));
}

fn beampattern_robust(config: &ExperimentConfig, out: &mut RunOutput) {
    let sb = &config.scenario;
    let spec = design_spec(config);
    let Some(result) = out.step("irm", irm_solve(&spec).map_err(err)) else { return };

    let mut markers = vec![Marker::new(sb.target_deg, "target")];
    let hypotheses = robust_angle_grid(
        sb.interferer_deg.to_radians(),
        config.design.delta_deg.to_radians(),
        config.design.grid_points,
    );
    for (i, h) in hypotheses.iter().enumerate() {
        markers.push(Marker::new(h.to_degrees(), &format!("hypothesis{i}")));
    }
    let Some(pat) = out.step(
        "beampattern",
        farfield_beampattern(
            &result.surface_phases,
            None,
            sb.nx,
            sb.ny,
            &default_angle_grid(),
            markers,
        )
        .map_err(err),
    ) else {
        return;
    };
    let rel_db: Vec<f64> = hypotheses
        .iter()
        .map(|h| 10.0 * pat.gain_at(h.to_degrees()).max(1e-300).log10())
        .collect();
    out.text("beampattern_robust.csv", beampattern_csv(&pat));
    out.extras.insert(
        "robust".into(),
        json!({ "hypothesis_gain_db": rel_db, "converged": result.converged }),
    );
}

fn heatmap_nearfield(config: &ExperimentConfig, out: &mut RunOutput) {
    let sc = config.scenario.build();
    let lambda = sc.wavelength();
    let elements = sc.passive_positions();
    let d_t = distances_to(&elements, &sc.tx[ScenarioBlock::TARGET].position);
    let d_r = distances_to(&elements, &sc.rx);
    let align = init_phases(&d_t, &d_r, lambda, 0.0);

    let spec = match NearfieldDesignSpec::from_scenario(&sc, ScenarioBlock::TARGET, ScenarioBlock::INTERFERER)
    {
        Ok(mut s) => {
            s.eta = config.design.eta;
            s.levels = config.design.levels;
            s
        }
        Err(e) => {
            out.failures.push(format!("design spec: {e}"));
            return;
        }
    };
    let Some((suppress, _)) = out.step("ascent", ao_optimize(&spec, &align).map_err(err)) else {
        return;
    };

    let grid = GridSpec::default();
    for (name, refl) in [("heatmap_align.csv", &align), ("heatmap_suppress.csv", &suppress)] {
        if let Some(map) = out.step(
            name,
            heatmap(refl, &sc, ScenarioBlock::TARGET, &grid, true).map_err(err),
        ) {
            out.text(name, heatmap_csv(&map));
        }
    }
}
