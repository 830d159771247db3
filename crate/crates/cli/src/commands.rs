use std::path::Path;

use ppwald_core::estimate::{
    cross_validate, fit_acer, fit_observational, fit_to_json, itt_curves, write_curve_csv,
    BasisSpec, FitConfig,
};
use ppwald_core::inference::{bootstrap_band, monotonicity_check, BandScale, BootstrapConfig};
use ppwald_core::oracle::{criterion_r, scenario_truth};
use ppwald_core::rng::{derive_seed, RNG_NAME};
use ppwald_core::simulate::{write_dataset_csv, Scenario, TrialSimulator};
use ppwald_core::spectral::deconvolve_spectral;
use ppwald_core::{Error, Result};
use rayon::prelude::*;
use serde_json::json;

use crate::config::*;
use crate::util::*;

pub fn cmd_simulate(config_raw: &str, out: &Path) -> Result<()> {
    let cfg: SimulateConfig = parse_config(config_raw)?;
    let scenario = cfg.scenario_config()?;
    let sim = TrialSimulator::new(&scenario)?;
    let (dataset, clamping) = sim.simulate_dataset_with_stats(cfg.m, cfg.seed)?;

    ensure_out_dir(out)?;
    let mut events = Vec::new();
    let mut trials = Vec::new();
    write_dataset_csv(&dataset, &mut events, &mut trials)?;
    write_atomic(&out.join("events.csv"), &events)?;
    write_atomic(&out.join("trials.csv"), &trials)?;

    let metadata = json!({
        "config_hash": config_hash(config_raw),
        "scenario": cfg.scenario,
        "scenario_config": scenario,
        "m": cfg.m,
        "seed": cfg.seed,
        "horizon": dataset.horizon(),
        "rng": RNG_NAME,
        "clamping": {
            "evaluations": clamping.evaluations,
            "clamped": clamping.clamped,
            "fraction": clamping.fraction(),
        },
    });
    write_atomic(
        &out.join("metadata.json"),
        serde_json::to_string_pretty(&metadata)?.as_bytes(),
    )?;
    Ok(())
}

pub fn cmd_estimate(config_raw: &str, data_dir: &Path, out: &Path) -> Result<()> {
    let cfg: EstimateConfig = parse_config(config_raw)?;
    let grid = cfg.grid.map_or(Ok(default_grid()), GridConfig::to_grid)?;
    let data = load_dataset(data_dir, grid.t_end())?;
    let level_hi = cfg.level_hi.unwrap_or(1);
    let level_lo = cfg.level_lo.unwrap_or(0);
    let eta = cfg
        .eta
        .as_ref()
        .map_or(Ok(0.01), |e| e.resolve(data.len()))?;
    let mut basis = cfg.basis.unwrap_or_else(default_basis);
    let hash = config_hash(config_raw);
    ensure_out_dir(out)?;

    if let Some(cv) = &cfg.cv {
        if cfg.method == "spectral" {
            return Err(Error::InvalidInput(
                "cross-validation applies to basis fits, not spectral division".into(),
            ));
        }
        let candidates: Vec<BasisSpec> = cv
            .candidate_knots
            .iter()
            .map(|k| BasisSpec {
                num_interior_knots: *k,
                ..basis
            })
            .collect();
        let base = FitConfig {
            grid,
            spec: basis,
            eta,
            level_hi,
            level_lo,
        };
        basis = cross_validate(&data, &base, &candidates, cv.folds, cv.seed)?;
    }

    match cfg.method.as_str() {
        "ridge" => {
            let (f_hat, h_hat) = itt_curves(&data, &grid, level_hi, level_lo)?;
            let fit = fit_acer(&f_hat, &h_hat, &basis, eta)?;
            let mut doc = fit_to_json(&fit);
            doc["method"] = json!("ridge");
            doc["config_hash"] = json!(hash);
            doc["level_hi"] = json!(level_hi);
            doc["level_lo"] = json!(level_lo);
            write_atomic(
                &out.join("fit.json"),
                serde_json::to_string_pretty(&doc)?.as_bytes(),
            )?;
            let mut csv = Vec::new();
            write_curve_csv(&fit.acer, "acer", &mut csv)?;
            write_atomic(&out.join("acer.csv"), &csv)?;
        }
        "spectral" => {
            let eps = cfg.eps.unwrap_or(1e-3);
            let pad = cfg.pad_factor.unwrap_or(4);
            let (f_hat, h_hat) = itt_curves(&data, &grid, level_hi, level_lo)?;
            let acer = deconvolve_spectral(&f_hat, &h_hat, eps, pad)?;
            let doc = json!({
                "method": "spectral",
                "eps": eps,
                "pad_factor": pad,
                "grid": grid,
                "acer": acer.values(),
                "config_hash": hash,
                "level_hi": level_hi,
                "level_lo": level_lo,
            });
            write_atomic(
                &out.join("fit.json"),
                serde_json::to_string_pretty(&doc)?.as_bytes(),
            )?;
            let mut csv = Vec::new();
            write_curve_csv(&acer, "acer", &mut csv)?;
            write_atomic(&out.join("acer.csv"), &csv)?;
        }
        "observational" => {
            let fit = fit_observational(&data, &grid, &basis, eta)?;
            let doc = json!({
                "method": "observational",
                "beta": fit.beta,
                "intercept": fit.intercept,
                "knots": fit.basis.knot_vector(),
                "eta": fit.eta,
                "support": [0.0, fit.basis.support],
                "grid": grid,
                "g": fit.g_hat.values(),
                "design_condition": fit.design_condition,
                "config_hash": hash,
            });
            write_atomic(
                &out.join("fit.json"),
                serde_json::to_string_pretty(&doc)?.as_bytes(),
            )?;
            let mut csv = Vec::new();
            write_curve_csv(&fit.g_hat, "g", &mut csv)?;
            write_atomic(&out.join("g.csv"), &csv)?;
        }
        other => {
            return Err(Error::InvalidInput(format!(
                "unknown method {other:?}; expected ridge, spectral, or observational"
            )));
        }
    }
    Ok(())
}

pub fn cmd_experiment(config_raw: &str, out: &Path) -> Result<()> {
    let cfg: ExperimentConfig = parse_config(config_raw)?;
    if cfg.replicates == 0 {
        return Err(Error::InvalidInput("replicates must be >= 1".into()));
    }
    let grid = cfg.grid.map_or(Ok(default_grid()), GridConfig::to_grid)?;
    let basis = cfg.basis.unwrap_or_else(default_basis);
    let eta_spec = cfg.eta.clone().unwrap_or(EtaSpec::Rule("1/m".into()));

    let mut scenarios = Vec::new();
    for name in &cfg.scenarios {
        let scenario = Scenario::parse(name)
            .ok_or_else(|| Error::InvalidInput(format!("unknown scenario {name:?}")))?;
        let sc_cfg = ppwald_core::simulate::ScenarioConfig::preset(scenario);
        // The study needs a closed-form target to score against.
        let truth = scenario_truth(&sc_cfg, &grid)?;
        let sim = TrialSimulator::new(&sc_cfg)?;
        scenarios.push((name.clone(), sim, truth));
    }

    struct Task {
        scenario_idx: usize,
        m: usize,
        replicate: usize,
        seed: u64,
    }
    let mut tasks = Vec::new();
    let mut task_idx = 0u64;
    for (scenario_idx, _) in scenarios.iter().enumerate() {
        for &m in &cfg.m_values {
            for replicate in 0..cfg.replicates {
                tasks.push(Task {
                    scenario_idx,
                    m,
                    replicate,
                    seed: derive_seed(cfg.seed, task_idx),
                });
                task_idx += 1;
            }
        }
    }

    let rows: Result<Vec<(usize, usize, usize, f64)>> = tasks
        .par_iter()
        .map(|task| {
            let (_, sim, truth) = &scenarios[task.scenario_idx];
            let data = sim.simulate_dataset(task.m, task.seed)?;
            let eta = eta_spec.resolve(task.m)?;
            let fit = FitConfig::new(grid, basis, eta).fit(&data)?;
            let r = criterion_r(&fit.acer, truth, 0.0, basis.support)?;
            Ok((task.scenario_idx, task.m, task.replicate, r))
        })
        .collect();
    let rows = rows?;

    ensure_out_dir(out)?;
    let mut results = String::from("scenario,m,replicate,r\n");
    for (si, m, rep, r) in &rows {
        results.push_str(&format!(
            "{},{},{},{}\n",
            scenarios[*si].0,
            m,
            rep,
            fmt17(*r)
        ));
    }
    write_atomic(&out.join("results.csv"), results.as_bytes())?;

    let mut summary = String::from("scenario,m,median_r,q25,q75\n");
    for (si, (name, _, _)) in scenarios.iter().enumerate() {
        for &m in &cfg.m_values {
            let mut rs: Vec<f64> = rows
                .iter()
                .filter(|(s, mm, _, _)| *s == si && *mm == m)
                .map(|(_, _, _, r)| *r)
                .collect();
            rs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            summary.push_str(&format!(
                "{},{},{},{},{}\n",
                name,
                m,
                fmt17(quantile_sorted(&rs, 0.5)),
                fmt17(quantile_sorted(&rs, 0.25)),
                fmt17(quantile_sorted(&rs, 0.75)),
            ));
        }
    }
    write_atomic(&out.join("summary.csv"), summary.as_bytes())?;

    let metadata = json!({
        "config_hash": config_hash(config_raw),
        "seed": cfg.seed,
        "rng": RNG_NAME,
        "grid": grid,
        "basis": basis,
    });
    write_atomic(
        &out.join("metadata.json"),
        serde_json::to_string_pretty(&metadata)?.as_bytes(),
    )?;
    Ok(())
}

pub fn cmd_diagnose(config_raw: &str, data_dir: &Path, out: &Path) -> Result<()> {
    let cfg: DiagnoseConfig = parse_config(config_raw)?;
    let grid = cfg.grid.map_or(Ok(default_grid()), GridConfig::to_grid)?;
    let data = load_dataset(data_dir, grid.t_end())?;
    let report = monotonicity_check(&data, &grid)?;

    ensure_out_dir(out)?;
    let mut doc = report.to_json();
    doc["config_hash"] = json!(config_hash(config_raw));
    write_atomic(
        &out.join("report.json"),
        serde_json::to_string_pretty(&doc)?.as_bytes(),
    )?;
    let mut csv = Vec::new();
    report.write_survival_csv(&mut csv)?;
    write_atomic(&out.join("survival.csv"), &csv)?;
    Ok(())
}

pub fn cmd_bootstrap(config_raw: &str, data_dir: &Path, out: &Path) -> Result<()> {
    let cfg: BootstrapCmdConfig = parse_config(config_raw)?;
    let grid = cfg.grid.map_or(Ok(default_grid()), GridConfig::to_grid)?;
    let data = load_dataset(data_dir, grid.t_end())?;
    let eta = cfg
        .eta
        .as_ref()
        .map_or(Ok(0.01), |e| e.resolve(data.len()))?;
    let band_scale = match cfg.band_scale.as_deref() {
        None | Some("root_m") => BandScale::RootM,
        Some("plain") => BandScale::Plain,
        Some(other) => {
            return Err(Error::InvalidInput(format!(
                "unknown band_scale {other:?}; expected root_m or plain"
            )));
        }
    };
    let fit = FitConfig {
        grid,
        spec: cfg.basis.unwrap_or_else(default_basis),
        eta,
        level_hi: cfg.level_hi.unwrap_or(1),
        level_lo: cfg.level_lo.unwrap_or(0),
    };
    let band = bootstrap_band(
        &data,
        &BootstrapConfig {
            fit,
            b_reps: cfg.b_reps,
            alpha: cfg.alpha,
            band_scale,
        },
        cfg.seed,
    )?;

    ensure_out_dir(out)?;
    let mut csv = Vec::new();
    ppwald_core::inference::write_band_csv(&band, &mut csv)?;
    write_atomic(&out.join("band.csv"), &csv)?;
    let metadata = json!({
        "config_hash": config_hash(config_raw),
        "seed": cfg.seed,
        "alpha": band.alpha,
        "q_alpha": band.q_alpha,
        "b_reps": band.b_reps,
        "band_scale": if matches!(band_scale, BandScale::RootM) { "root_m" } else { "plain" },
        "rng": RNG_NAME,
    });
    write_atomic(
        &out.join("metadata.json"),
        serde_json::to_string_pretty(&metadata)?.as_bytes(),
    )?;
    Ok(())
}
