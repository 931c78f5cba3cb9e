use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use imc_wbc::robustness::{margin_profile, robust_stability_check, tune_eta_f, uncertainty_bound};
use imc_wbc::simulator::{run_scenario, ControllerKind, Scenario, SimLog};
use imc_wbc::Error;

use crate::config::RunConfig;

#[derive(Debug)]
pub enum Failure {
    Config(String),
    Runtime(String),
    Certification(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Runtime(_) => 3,
            Failure::Certification(_) => 4,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "configuration: {m}"),
            Failure::Runtime(m) => write!(f, "{m}"),
            Failure::Certification(m) => write!(f, "certification: {m}"),
        }
    }
}

type Outcome = Result<(), Failure>;

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Failure + '_ {
    move |e| Failure::Runtime(format!("{}: {e}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

fn write_text(path: &Path, text: &str) -> Outcome {
    fs::write(path, text).map_err(io_err(path))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn make_output_dir(config: &RunConfig) -> Outcome {
    fs::create_dir_all(&config.output).map_err(io_err(&config.output))
}

fn write_log(path: &Path, log: &SimLog) -> Outcome {
    let mut w = create(path)?;
    log.write_csv(&mut w).and_then(|_| w.flush()).map_err(io_err(path))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

pub fn simulate(config: &RunConfig) -> Outcome {
    let params = config.validate_run().map_err(Failure::Config)?;
    let kind = config.controller_kind().map_err(Failure::Config)?;
    let k = config.ground.stiffness;
    let scenario = Scenario::named(&config.scenario, kind, &params, k).map_err(|e| Failure::Config(e.to_string()))?;
    let sim = config.sim_config(&params, k);
    make_output_dir(config)?;
    let stem = format!("{}_{}", config.scenario, kind);
    let dir = &config.output;
    write_text(&dir.join(format!("{stem}_config.toml")), &config.to_toml())?;
    let (log, fault) = match run_scenario(&scenario, &sim, &params) {
        Ok(log) => (log, None),
        Err(f) => (f.log.clone(), Some(f)),
    };
    write_log(&dir.join(format!("{stem}.csv")), &log)?;
    let summary = log.summary(scenario.settle, scenario.duration);
    let mut text = format!("scenario: {}\ncontroller: {kind}\nground_k: {k:e}\n", config.scenario);
    if let Some(f) = &fault {
        text.push_str(&format!("fault: {f}\n"));
    }
    text.push_str(&format!("{summary}\n"));
    write_text(&dir.join(format!("{stem}_summary.txt")), &text)?;
    print!("{text}");
    match fault {
        Some(f) => Err(Failure::Runtime(format!("simulation fault: {f}"))),
        None => Ok(()),
    }
}

fn analysis_error(e: Error) -> Failure {
    match e {
        Error::TheoremHypothesis { .. } | Error::InfeasibleTuning(_) => Failure::Certification(e.to_string()),
        other => Failure::Config(other.to_string()),
    }
}

pub fn analyze(config: &RunConfig) -> Outcome {
    let spec = config.uncertainty().map_err(analysis_error)?;
    let weight = config.weight();
    weight.validate().map_err(analysis_error)?;
    let eta_fs = &config.analysis.eta_f;
    if eta_fs.is_empty() || eta_fs.iter().any(|&e| !(e > 0.0)) {
        return Err(Failure::Config("analysis.eta_f needs at least one positive value".into()));
    }
    let lbar = uncertainty_bound(&spec).map_err(analysis_error)?;
    make_output_dir(config)?;
    println!("lbar(0): {:.6}", spec.dc_bound());
    println!("lbar max: {:.6}", lbar.max());
    for &ef in eta_fs {
        let filters = config.filters(ef);
        filters.validate().map_err(analysis_error)?;
        let profile = margin_profile(&lbar, &filters, &weight, config.analysis.eta_d);
        let path = config.output.join(format!("analyze_eta_f_{ef}.csv"));
        let mut w = create(&path)?;
        profile.write_csv(&mut w).and_then(|_| w.flush()).map_err(io_err(&path))?;
        let m = profile.margin();
        let stable = robust_stability_check(&lbar, &filters);
        println!(
            "eta_f {ef}: margin {:.4} at {:.3} rad/s, performance {}, stability {}",
            m.value,
            m.omega,
            if m.certified() { "certified" } else { "uncertified" },
            if stable { "certified" } else { "uncertified" },
        );
    }
    Ok(())
}

pub fn tune(config: &RunConfig) -> Outcome {
    let spec = config.uncertainty().map_err(analysis_error)?;
    let lbar = uncertainty_bound(&spec).map_err(analysis_error)?;
    let template = config.filters(config.imc.eta_f_dist);
    template.validate().map_err(analysis_error)?;
    let a = &config.analysis;
    let ef = tune_eta_f(&lbar, &config.weight(), a.eta_d, a.tune_range, &template).map_err(analysis_error)?;
    make_output_dir(config)?;
    println!("eta_f: {ef}");
    write_text(&config.output.join("tuned.toml"), &format!("[imc]\neta_f_dist = {ef}\n"))
}

struct Run {
    label: &'static str,
    kind: ControllerKind,
    scenario: Scenario,
    log: SimLog,
}

pub fn compare(config: &RunConfig) -> Outcome {
    let params = config.validate_run().map_err(Failure::Config)?;
    let grounds = [("stiff", config.compare.stiff), ("soft", config.compare.soft)];
    let mut jobs = Vec::new();
    for (label, k) in grounds {
        for kind in [ControllerKind::Imc, ControllerKind::Baseline] {
            let scenario =
                Scenario::named(&config.scenario, kind, &params, k).map_err(|e| Failure::Config(e.to_string()))?;
            jobs.push((label, k, kind, scenario));
        }
    }
    let results: Vec<_> = std::thread::scope(|s| {
        let handles: Vec<_> = jobs
            .into_iter()
            .map(|(label, k, kind, scenario)| {
                let sim = config.sim_config(&params, k);
                let params = &params;
                s.spawn(move || {
                    let log = run_scenario(&scenario, &sim, params);
                    (label, k, kind, scenario, log)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("simulation thread panicked")).collect()
    });
    make_output_dir(config)?;
    let mut runs = Vec::new();
    for (label, _, kind, scenario, log) in results {
        match log {
            Ok(log) => runs.push(Run { label, kind, scenario, log }),
            Err(f) => {
                write_log(&config.output.join(format!("compare_{label}_{kind}.csv")), &f.log)?;
                return Err(Failure::Runtime(format!("{label} ground, {kind}: {f}")));
            }
        }
    }

    let path = config.output.join("compare.csv");
    let mut w = create(&path)?;
    let mut header = vec!["t".to_string()];
    for r in &runs {
        for col in ["com_x", "com_z", "com_x_ref", "com_z_ref", "com_error"] {
            header.push(format!("{}_{}_{col}", r.label, r.kind));
        }
    }
    let mut out = header.join(",") + "\n";
    for i in 0..runs[0].log.len() {
        let mut line = vec![runs[0].log.rows[i].t];
        for r in &runs {
            let row = &r.log.rows[i];
            let err = ((row.com.x - row.com_ref.x).powi(2) + (row.com.y - row.com_ref.y).powi(2)).sqrt();
            line.extend([row.com.x, row.com.y, row.com_ref.x, row.com_ref.y, err]);
        }
        out.push_str(&line.iter().map(f64::to_string).collect::<Vec<_>>().join(","));
        out.push('\n');
    }
    w.write_all(out.as_bytes()).and_then(|_| w.flush()).map_err(io_err(&path))?;

    let mut table = format!(
        "scenario: {}\n{:<8} {:>10} {:>14} {:>16} {:>8}\n",
        config.scenario, "ground", "k_n_per_m", "imc_rms_m", "baseline_rms_m", "ratio"
    );
    for (label, k) in grounds {
        let rms = |kind| {
            let r = runs.iter().find(|r| r.label == label && r.kind == kind).expect("run exists");
            r.log.summary(r.scenario.settle, r.scenario.duration).rms_com_error
        };
        let (imc, base) = (rms(ControllerKind::Imc), rms(ControllerKind::Baseline));
        table.push_str(&format!("{label:<8} {k:>10.1e} {imc:>14.6e} {base:>16.6e} {:>8.3}\n", imc / base));
    }
    write_text(&config.output.join("compare.txt"), &table)?;
    print!("{table}");
    Ok(())
}
