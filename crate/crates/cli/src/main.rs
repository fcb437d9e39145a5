//! `swarm-relax` command-line front end.
//!
//! Every configuration leaf can be set from a JSON file (`--config`) or a
//! dotted flag such as `--relax.kappa 40`. Flags win over the file, the
//! file wins over the defaults.

mod config;
mod run;

use std::process::ExitCode;

use clap::{Arg, ArgAction, ArgMatches, Command};

use config::{flag_value, leaves, parse_config, ConfigError};
use run::{dispatch, Exit};

/// Short names for frequently used leaves.
const ALIASES: [(&str, &str); 11] = [
    ("run.epsilon", "epsilon"),
    ("sweep.mode", "mode"),
    ("relax.dt_max", "dt-max"),
    ("relax.kappa", "kappa"),
    ("sweep.perturb", "perturb"),
    ("output.dir", "out"),
    ("one_d.k", "k"),
    ("one_d.l", "l"),
    ("sweep.eps_list", "eps-list"),
    ("jobs", "jobs"),
    ("seed", "seed"),
];

const SUBCOMMANDS: [(&str, &str, run::Command); 7] = [
    ("show-config", "Print the merged configuration as JSON", run::Command::ShowConfig),
    ("roots", "Scan the heading roots of the scenario and print them as JSON", run::Command::Roots),
    ("simulate-fo", "Integrate the first-order model of the particle fixture with jumps", run::Command::SimulateFo),
    ("simulate-relax", "Integrate the relaxation layer of one breakdown at run.epsilon", run::Command::SimulateRelax),
    ("scaling-1d", "Sweep epsilon for the one-dimensional model and fit the exponent", run::Command::Scaling1d),
    ("scaling-2d", "Sweep epsilon for a planar scenario and fit the exponent", run::Command::Scaling2d),
    ("run1-demo", "Particle fixture end to end: breakdown, relaxation layer, continuation", run::Command::Run1Demo),
];

fn cli() -> Command {
    let mut cmd = Command::new("swarm-relax")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Breakdown and relaxation-layer experiments for an anisotropic first-order swarm model")
        .term_width(100)
        .subcommand_required(true)
        .arg_required_else_help(true)
        .after_help("Flag values are JSON (strings may be bare, lists may be comma separated).\nSWARM_RELAX_LOG overrides log_level, e.g. SWARM_RELAX_LOG=debug.")
        .arg(
            Arg::new("config")
                .long("config")
                .value_name("FILE")
                .global(true)
                .help("JSON configuration file"),
        );
    for (path, default) in leaves() {
        let mut arg = Arg::new(path.clone())
            .long(path.clone())
            .value_name("VALUE")
            .action(ArgAction::Set)
            .global(true)
            .help(format!("[default: {default}]"));
        if let Some((_, alias)) = ALIASES.iter().find(|(p, _)| *p == path) {
            if *alias != path {
                arg = arg.visible_alias(*alias);
            }
        }
        cmd = cmd.arg(arg);
    }
    for (name, about, _) in SUBCOMMANDS {
        cmd = cmd.subcommand(Command::new(name).about(about));
    }
    cmd
}

fn overrides(m: &ArgMatches) -> Vec<(String, serde_json::Value)> {
    leaves()
        .into_iter()
        .filter_map(|(path, _)| m.get_one::<String>(&path).map(|v| (path, flag_value(v))))
        .collect()
}

fn load(m: &ArgMatches) -> Result<config::Resolved, ConfigError> {
    let text = match m.get_one::<String>("config") {
        Some(p) => Some(std::fs::read_to_string(p).map_err(|source| ConfigError::Read { path: p.into(), source })?),
        None => None,
    };
    parse_config(text.as_deref(), &overrides(m))
}

fn main() -> ExitCode {
    let matches = cli().get_matches();
    let Some((name, sub)) = matches.subcommand() else {
        return ExitCode::from(Exit::Config as u8);
    };
    let cmd = SUBCOMMANDS.iter().find(|(n, _, _)| *n == name).map(|(_, _, c)| *c).expect("known subcommand");
    let cfg = match load(sub) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(Exit::Config as u8);
        }
    };
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SWARM_RELAX_LOG", &cfg.raw.log_level)).init();
    match dispatch(cmd, &cfg) {
        Ok(()) => ExitCode::from(Exit::Ok as u8),
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.exit as u8)
        }
    }
}
