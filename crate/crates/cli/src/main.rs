//! `imc-wbc`: run scenarios, certify and tune the IMC filters, compare
//! against the inverse-dynamics baseline.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::RunConfig;

#[derive(Parser)]
#[command(name = "imc-wbc", version, about = "Whole-body control with IMC contact-force tracking")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its log and summary.
    Simulate(Overrides),
    /// Robustness curves and certification for each configured eta_f.
    Analyze(Overrides),
    /// Smallest disturbance-filter time constant that passes the
    /// robust performance test.
    Tune(Overrides),
    /// Both controllers on soft and stiff ground.
    Compare(Overrides),
}

/// Command-line values take precedence over the config file.
#[derive(Args, Debug, Default)]
struct Overrides {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// TOML file with robot parameters.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    scenario: Option<String>,
    /// imc | baseline
    #[arg(long)]
    controller: Option<String>,
    /// Ground stiffness, N/m.
    #[arg(long)]
    ground_k: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Std of the contact force sensor noise, N.
    #[arg(long)]
    noise_std: Option<f64>,
    /// Disturbance filter time constant used in simulation, s.
    #[arg(long)]
    eta_f_dist: Option<f64>,
    /// Comma-separated eta_f values for `analyze`, s.
    #[arg(long, value_delimiter = ',')]
    eta_f: Option<Vec<f64>>,
    #[arg(long)]
    dk: Option<f64>,
    #[arg(long)]
    d_eta: Option<f64>,
    /// Gain of the performance weight.
    #[arg(long)]
    weight_gain: Option<f64>,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

impl Overrides {
    fn resolve(&self) -> Result<RunConfig, String> {
        let mut c = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(v) = &self.model {
            c.model = Some(v.clone());
        }
        if let Some(v) = &self.scenario {
            c.scenario = v.clone();
        }
        if let Some(v) = &self.controller {
            c.controller = v.clone();
        }
        if let Some(v) = self.ground_k {
            c.ground.stiffness = v;
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.noise_std {
            c.noise_std = v;
        }
        if let Some(v) = self.eta_f_dist {
            c.imc.eta_f_dist = v;
        }
        if let Some(v) = &self.eta_f {
            c.analysis.eta_f = v.clone();
        }
        if let Some(v) = self.dk {
            c.analysis.dk = v;
        }
        if let Some(v) = self.d_eta {
            c.analysis.d_eta = v;
        }
        if let Some(v) = self.weight_gain {
            c.analysis.weight_gain = v;
        }
        if let Some(v) = &self.output {
            c.output = v.clone();
        }
        Ok(c)
    }
}

type Handler = fn(&RunConfig) -> Result<(), commands::Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (args, run): (&Overrides, Handler) = match &cli.command {
        Command::Simulate(a) => (a, commands::simulate),
        Command::Analyze(a) => (a, commands::analyze),
        Command::Tune(a) => (a, commands::tune),
        Command::Compare(a) => (a, commands::compare),
    };
    let result = args.resolve().map_err(commands::Failure::Config).and_then(|c| run(&c));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}
