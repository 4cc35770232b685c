use std::path::PathBuf;

use beatlab_core::experiment::{ExperimentConfig, InitSpec, SweepAxis, SweepParam};
use beatlab_core::{ModelKind, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "beat-lab", version, about = "Polariton beatings in the TC, Dicke and Pauli-Fierz models")]
pub struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Eigenvalues, SEM polariton triplets and perturbative predictions.
    Spectrum(CommonArgs),
    /// Photon-number traces as CSV plus a JSON summary.
    Propagate(CommonArgs),
    /// Beat extraction from simulated traces or from a CSV file.
    Beat(BeatArgs),
    /// Predicted and fitted beating across the number of emitters.
    SweepN(SweepNArgs),
    /// Detuning scan for beat cancellation.
    Detune(DetuneArgs),
    /// Run the acceptance suite.
    Verify(VerifyArgs),
}

/// Model and run settings. Flags override values read from `--config`.
#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// JSON config file.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Models to run, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub model: Vec<ModelKind>,
    #[arg(long)]
    pub n_tls: Option<usize>,
    #[arg(long)]
    pub g: Option<f64>,
    #[arg(long)]
    pub omega_c: Option<f64>,
    #[arg(long)]
    pub omega_m: Option<f64>,
    /// Highest photon number kept (default N + 6).
    #[arg(long)]
    pub cutoff: Option<usize>,
    #[arg(long)]
    pub t_max: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
    /// Initial state |s_k, n> as "k,n".
    #[arg(long, value_parser = parse_init, value_name = "K,N")]
    pub init: Option<InitSpec>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Sweep axis as "param=v1,v2,..." with param one of g, n_tls, omega_c,
    /// omega_m, cutoff, delta_omega.
    #[arg(long, value_parser = parse_sweep, value_name = "PARAM=VALUES")]
    pub sweep: Option<SweepAxis>,
}

#[derive(Debug, Clone, Args)]
pub struct BeatArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Fit a trace from a CSV file instead of simulating.
    #[arg(long, value_name = "FILE")]
    pub trace: Option<PathBuf>,
    /// Column of the CSV file holding the trace.
    #[arg(long, default_value = "n_mean")]
    pub column: String,
}

#[derive(Debug, Clone, Args)]
pub struct SweepNArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, default_value_t = 2)]
    pub n_min: usize,
    #[arg(long, default_value_t = 15)]
    pub n_max: usize,
}

#[derive(Debug, Clone, Args)]
pub struct DetuneArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, default_value_t = -0.01, allow_negative_numbers = true)]
    pub delta_min: f64,
    #[arg(long, default_value_t = 0.01, allow_negative_numbers = true)]
    pub delta_max: f64,
    #[arg(long, default_value_t = 2.5e-4)]
    pub delta_step: f64,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    /// Run only these criteria (repeatable).
    #[arg(long = "criterion", value_name = "ID")]
    pub criteria: Vec<u8>,
    /// Print the reports as JSON.
    #[arg(long)]
    pub json: bool,
}

fn parse_init(s: &str) -> std::result::Result<InitSpec, String> {
    let (k, n) = s.split_once(',').ok_or_else(|| format!("expected k,n, got '{s}'"))?;
    let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("'{v}': {e}"));
    Ok(InitSpec { k: parse(k)?, n: parse(n)? })
}

fn parse_sweep(s: &str) -> std::result::Result<SweepAxis, String> {
    let (param, values) = s.split_once('=').ok_or_else(|| format!("expected param=v1,v2,..., got '{s}'"))?;
    let param: SweepParam = param.trim().parse().map_err(|e: beatlab_core::Error| e.to_string())?;
    let values = values
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|e| format!("'{v}': {e}")))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(SweepAxis { param, values })
}

impl CommonArgs {
    /// Config file (or defaults) with every given flag applied on top.
    pub fn resolve(&self, default_models: &[ModelKind]) -> Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(path) => ExperimentConfig::from_json_file(path)?,
            None => ExperimentConfig {
                models: default_models.to_vec(),
                ..Default::default()
            },
        };
        if !self.model.is_empty() {
            c.models = self.model.clone();
        }
        let p = &mut c.params;
        if let Some(v) = self.n_tls {
            p.n_tls = v;
        }
        if let Some(v) = self.g {
            p.g = v;
        }
        if let Some(v) = self.omega_c {
            p.omega_c = v;
        }
        if let Some(v) = self.omega_m {
            p.omega_m = v;
        }
        if self.cutoff.is_some() {
            p.cutoff = self.cutoff;
        }
        if let Some(v) = self.t_max {
            c.grid.t_max = v;
        }
        if let Some(v) = self.dt {
            c.grid.dt = v;
        }
        if let Some(v) = self.init {
            c.init = v;
        }
        if let Some(v) = &self.out {
            c.out_dir = v.clone();
        }
        if let Some(v) = &self.sweep {
            c.sweep = Some(v.clone());
        }
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_init_and_sweep() {
        assert_eq!(parse_init("2,0").unwrap(), InitSpec { k: 2, n: 0 });
        assert!(parse_init("2").is_err());
        let axis = parse_sweep("g=0.05, 0.07").unwrap();
        assert_eq!(axis.param, SweepParam::G);
        assert_eq!(axis.values, vec![0.05, 0.07]);
        assert!(parse_sweep("bogus=1").is_err());
    }

    #[test]
    fn flags_override_defaults() {
        let cli = Cli::try_parse_from(["beat-lab", "propagate", "--model", "tc,pf", "--g", "0.05", "--init", "1,0"]).unwrap();
        let Command::Propagate(args) = cli.command else { panic!() };
        let c = args.resolve(&ModelKind::ALL).unwrap();
        assert_eq!(c.models, vec![ModelKind::Tc, ModelKind::Pf]);
        assert_eq!(c.params.g, 0.05);
        assert_eq!(c.params.n_tls, 2);
        assert_eq!(c.init, InitSpec { k: 1, n: 0 });
    }
}
