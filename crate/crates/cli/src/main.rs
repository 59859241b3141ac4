//! `knop` — config-driven experiment runner.
//!
//! Usage: `knop run <config.json> [--out DIR] [--seed-override N] [--quiet]`
//!
//! Exit codes: 0 success, 2 invalid usage/config, 3 numerical or runtime
//! failure. Failures emit a JSON error object on stderr.

mod config;
mod experiments;
mod manifest;

use config::ExperimentConfig;
use knop_core::error::Error;
use std::path::PathBuf;
use std::time::Instant;

struct CliArgs {
    config_path: PathBuf,
    out_override: Option<PathBuf>,
    seed_override: Option<u64>,
    quiet: bool,
}

fn usage() -> String {
    "usage: knop run <config.json> [--config PATH] [--out DIR] [--seed-override N] [--quiet]"
        .to_string()
}

fn parse_args(argv: &[String]) -> Result<CliArgs, String> {
    let mut it = argv.iter().skip(1);
    match it.next().map(String::as_str) {
        Some("run") => {}
        _ => return Err(usage()),
    }
    let mut config_path: Option<PathBuf> = None;
    let mut out_override = None;
    let mut seed_override = None;
    let mut quiet = false;
    while let Some(arg) = it.next() {
        match arg.as_str() {
            "--config" => {
                let v = it.next().ok_or_else(|| "--config needs a path".to_string())?;
                config_path = Some(PathBuf::from(v));
            }
            "--out" => {
                let v = it.next().ok_or_else(|| "--out needs a directory".to_string())?;
                out_override = Some(PathBuf::from(v));
            }
            "--seed-override" => {
                let v = it.next().ok_or_else(|| "--seed-override needs a value".to_string())?;
                seed_override =
                    Some(v.parse::<u64>().map_err(|_| format!("bad seed '{v}'"))?);
            }
            "--quiet" => quiet = true,
            other if !other.starts_with("--") && config_path.is_none() => {
                config_path = Some(PathBuf::from(other));
            }
            other => return Err(format!("unknown argument '{other}'\n{}", usage())),
        }
    }
    let config_path = config_path.ok_or_else(usage)?;
    Ok(CliArgs { config_path, out_override, seed_override, quiet })
}

fn fail(kind: &str, message: &str, code: i32) -> i32 {
    eprintln!(
        "{}",
        serde_json::json!({ "error": kind, "message": message })
    );
    code
}

fn run_cli(argv: Vec<String>) -> i32 {
    let args = match parse_args(&argv) {
        Ok(a) => a,
        Err(msg) => return fail("usage", &msg, 2),
    };
    let config_bytes = match std::fs::read(&args.config_path) {
        Ok(b) => b,
        Err(e) => {
            return fail(
                "config-io",
                &format!("cannot read {}: {e}", args.config_path.display()),
                2,
            )
        }
    };
    let cfg = match ExperimentConfig::parse(&config_bytes) {
        Ok(c) => c,
        Err(e) => return fail("config-parse", &e.to_string(), 2),
    };
    let seed = args.seed_override.unwrap_or(cfg.seed);
    let out_dir = args.out_override.unwrap_or_else(|| PathBuf::from(&cfg.out_dir));

    let started = Instant::now();
    if let Err(e) = std::fs::create_dir_all(&out_dir) {
        return fail("io", &format!("cannot create {}: {e}", out_dir.display()), 3);
    }
    match experiments::run(&cfg, &out_dir, seed) {
        Ok(output) => {
            let wall = started.elapsed().as_secs_f64();
            let manifest_path = match manifest::write_manifest(
                &out_dir,
                &config_bytes,
                seed,
                &output.artifacts,
                wall,
            ) {
                Ok(p) => p,
                Err(e) => return fail("io", &format!("manifest write failed: {e}"), 3),
            };
            if !args.quiet {
                for line in &output.summary {
                    println!("{line}");
                }
                println!(
                    "wrote {} artifacts + {}",
                    output.artifacts.len(),
                    manifest_path.display()
                );
            }
            0
        }
        Err(e) => {
            let (kind, code) = match &e {
                Error::InvalidArgument(_) | Error::ShapeMismatch(_) => ("invalid-config", 2),
                Error::Numerical(_) | Error::State(_) => ("numerical", 3),
                Error::Io(_) => ("io", 3),
            };
            fail(kind, &e.to_string(), code)
        }
    }
}

fn main() {
    std::process::exit(run_cli(std::env::args().collect()));
}
