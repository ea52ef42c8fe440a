// Scenario runner for the RG-2 flow laboratory.
//
// Subcommands:
//   flow    --config <path> --out <dir>    run a trajectory and write CSVs
//   entropy --config <path> --out <dir>    trajectory + entropy/monotonicity
//   eigen   --config <path> --out <dir>    eigenvalue suite only
//   verify  --config <path> --out <dir>    all verifications the config toggles
//   batch   --config <path> --out <dir>    run a scenario list in parallel
//
// Flags: --check-level {fast,full}  (default full)
//
// Exit codes: 0 all verifications pass, 2 verification failures,
//             1 runtime/config error.

use rg2flow::scenario::{
    entropy_csv, run_batch, run_scenario, trajectory_csv, verification_csv, RunArtifacts,
    ScenarioConfig,
};
use rg2flow::variational::entropy_records;
use std::path::PathBuf;
use std::process::ExitCode;

struct Args {
    command: String,
    config: PathBuf,
    out: PathBuf,
    fast: bool,
}

fn usage() -> ! {
    eprintln!(
        "usage: rg2flow <flow|entropy|eigen|verify|batch> --config <path> --out <dir> \
         [--check-level fast|full]"
    );
    std::process::exit(1);
}

fn parse_args() -> Args {
    let mut argv = std::env::args().skip(1);
    let command = match argv.next() {
        Some(c) => c,
        None => usage(),
    };
    let mut config = None;
    let mut out = None;
    let mut fast = false;
    while let Some(flag) = argv.next() {
        match flag.as_str() {
            "--config" => config = argv.next().map(PathBuf::from),
            "--out" => out = argv.next().map(PathBuf::from),
            "--check-level" => match argv.next().as_deref() {
                Some("fast") => fast = true,
                Some("full") => fast = false,
                _ => usage(),
            },
            _ => usage(),
        }
    }
    let (config, out) = match (config, out) {
        (Some(c), Some(o)) => (c, o),
        _ => usage(),
    };
    Args {
        command,
        config,
        out,
        fast,
    }
}

fn summarize(results: &[RunArtifacts]) -> ExitCode {
    let mut all = true;
    for r in results {
        let status = if r.all_pass { "pass" } else { "FAIL" };
        println!("{}: {}", r.out_dir.display(), status);
        if let Some(h) = &r.halted {
            println!("  halted: {h}");
        }
        all &= r.all_pass;
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    }
}

fn run() -> Result<ExitCode, rg2flow::RgError> {
    let args = parse_args();
    match args.command.as_str() {
        "flow" => {
            // trajectory artifacts only: disable the verification toggles
            let echo = std::fs::read_to_string(&args.config)?;
            let mut cfg = ScenarioConfig::from_toml(&echo)?;
            cfg.checks.scaling_lambdas.clear();
            cfg.checks.monotonicity = false;
            cfg.checks.eigen = false;
            cfg.checks.harnack = false;
            let art = run_scenario(&cfg, &echo, &args.out, args.fast)?;
            Ok(summarize(&[art]))
        }
        "entropy" => {
            let echo = std::fs::read_to_string(&args.config)?;
            let mut cfg = ScenarioConfig::from_toml(&echo)?;
            cfg.checks.monotonicity = true;
            let art = run_scenario(&cfg, &echo, &args.out, args.fast)?;
            Ok(summarize(&[art]))
        }
        "eigen" => {
            let echo = std::fs::read_to_string(&args.config)?;
            let cfg = ScenarioConfig::from_toml(&echo)?;
            std::fs::create_dir_all(&args.out)?;
            let state = cfg.initial_state()?;
            // a short trajectory provides the snapshots the report needs
            let traj = cfg.run_trajectory(&state)?;
            let records = entropy_records(&traj)?;
            let mut eigen_cfg = cfg.clone();
            eigen_cfg.checks.eigen = true;
            eigen_cfg.checks.monotonicity = false;
            eigen_cfg.checks.harnack = false;
            eigen_cfg.checks.scaling_lambdas.clear();
            let report = rg2flow::scenario::run_verifications(
                &eigen_cfg, &state, &traj, &records, args.fast,
            )?;
            let json = serde_json::to_string_pretty(&report).expect("serializable report");
            std::fs::write(args.out.join("eigen.json"), &json)?;
            std::fs::write(
                args.out.join("trajectory.csv"),
                trajectory_csv(&traj, &records),
            )?;
            std::fs::write(args.out.join("entropy.csv"), entropy_csv(&records))?;
            std::fs::write(args.out.join("verification.csv"), verification_csv(&report))?;
            println!(
                "{}: {}",
                args.out.display(),
                if report.all_pass { "pass" } else { "FAIL" }
            );
            Ok(if report.all_pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            })
        }
        "verify" => {
            let echo = std::fs::read_to_string(&args.config)?;
            let cfg = ScenarioConfig::from_toml(&echo)?;
            let art = run_scenario(&cfg, &echo, &args.out, args.fast)?;
            Ok(summarize(&[art]))
        }
        "batch" => {
            let results = run_batch(&args.config, &args.out, args.fast)?;
            Ok(summarize(&results))
        }
        _ => usage(),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
