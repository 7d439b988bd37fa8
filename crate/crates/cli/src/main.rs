//! `lorentz-limits <subcommand> --config PATH [--seed N] [--out DIR]`
//!
//! Every run is determined by its config file plus `--seed`. Outputs are CSV
//! tables and a `summary.txt` of `key = value` lines in the output directory.

mod experiments;
mod setup;

use clap::Parser;
use experiments::{Ctx, Output, SUBCOMMANDS};
use lorentz_limits::config::{Config, ConfigError};
use lorentz_limits::report::timestamp_line;
use setup::{RunError, RunResult};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "lorentz-limits", version, about = "Limit-law experiments for symbolic shifts and the periodic Lorentz gas")]
struct Args {
    /// One of: horizon, hyperbolicity, invariance-check, green-kubo, clt, wip,
    /// moments, iterated, decompose, condition-profiles, return-tail,
    /// fastslow, sde, compare. Defaults to `[run] subcommand`.
    subcommand: Option<String>,
    #[arg(long)]
    config: PathBuf,
    /// Overrides `[run] seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; defaults to `[run] out`, then `out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Size of the worker pool (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Omit the `# generated_at=` line so reruns are byte-identical.
    #[arg(long)]
    no_timestamp: bool,
    /// Validate the config and exit without computing.
    #[arg(long)]
    dry_run: bool,
}

fn io_err(path: &Path, e: std::io::Error) -> RunError {
    RunError::Io(format!("{}: {e}", path.display()))
}

fn write_output(dir: &Path, name: &str, out: &Output, stamp: Option<&str>) -> RunResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    for (file, table) in &out.tables {
        let path = dir.join(file);
        table.write_file(&path, stamp).map_err(|e| io_err(&path, e))?;
    }
    for (file, w) in &out.windows {
        let path = dir.join(file);
        let f = std::fs::File::create(&path).map_err(|e| io_err(&path, e))?;
        w.write_csv(std::io::BufWriter::new(f)).map_err(|e| io_err(&path, e))?;
    }
    let path = dir.join("summary.txt");
    let mut text = String::new();
    if let Some(line) = stamp {
        text.push_str(line);
        text.push('\n');
    }
    text.push_str(&format!("subcommand = {name}\n"));
    for (k, v) in &out.summary {
        text.push_str(&format!("{k} = {v}\n"));
    }
    let files: Vec<&str> =
        out.tables.iter().map(|(f, _)| f.as_str()).chain(out.windows.iter().map(|(f, _)| f.as_str())).collect();
    text.push_str(&format!("files = {}\n", files.join(" ")));
    std::fs::write(&path, text).map_err(|e| io_err(&path, e))
}

fn run(args: &Args) -> RunResult<String> {
    let text = std::fs::read_to_string(&args.config).map_err(|e| io_err(&args.config, e))?;
    let cfg = Config::parse(&text)?;
    let name = match &args.subcommand {
        Some(s) => s.clone(),
        None => cfg.value("run", "subcommand")?,
    };
    if !SUBCOMMANDS.contains(&name.as_str()) {
        return Err(RunError::UnknownSubcommand(name));
    }
    cfg.ensure_only("run", &["seed", "subcommand", "out"])?;
    let seed = match (args.seed, cfg.get("run", "seed")) {
        (Some(s), _) => s,
        (None, Some(e)) => e.parse()?,
        (None, None) => return Err(ConfigError::Missing { section: "run".into(), key: "seed".into() }.into()),
    };
    let base = args.config.parent().map(Path::to_path_buf).unwrap_or_default();
    let out_dir = match &args.out {
        Some(p) => p.clone(),
        None => base.join(cfg.value_or("run", "out", "out".to_string())?),
    };
    if let Some(n) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| RunError::Experiment(format!("thread pool: {e}")))?;
    }
    let ctx = Ctx { cfg, seed, base, dry_run: args.dry_run };
    let output = experiments::run(&name, &ctx)?;
    if args.dry_run {
        return Ok(format!("config ok: {name}"));
    }
    let stamp = timestamp_line(!args.no_timestamp);
    write_output(&out_dir, &name, &output, stamp.as_deref())?;
    Ok(format!("wrote {}", out_dir.display()))
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(msg) => {
            println!("{msg}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            let _ = writeln!(std::io::stderr(), "{}", e.machine_line());
            ExitCode::FAILURE
        }
    }
}
