use clap::{Parser, Subcommand};
use fokker_lab::experiments::{run_experiment, ExperimentOutput};
use fokker_lab::scenario::{Scenario, EXPERIMENTS};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

/// Exit codes: 0 success, 2 configuration error, 3 numerical failure.
const EXIT_CONFIG: i32 = 2;
const EXIT_NUMERICAL: i32 = 3;

#[derive(Parser)]
#[command(name = "fokker-lab", about = "Two-particle worldline scenario runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one or more scenario files and write their output files.
    Run {
        /// Scenario files (TOML).
        #[arg(required = true)]
        files: Vec<PathBuf>,
        /// Output directory (created if missing).
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads for independent scenarios.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// List the available experiment names.
    ListExperiments,
    /// Parse and validate a scenario file without running it.
    Validate { file: PathBuf },
}

fn load(file: &Path) -> Result<Scenario, String> {
    let text = std::fs::read_to_string(file)
        .map_err(|e| format!("cannot read {}: {e}", file.display()))?;
    Scenario::from_toml_str(&text).map_err(|e| format!("{}: {e}", file.display()))
}

fn run_one(file: &Path, out: &Path, seed_override: Option<u64>) -> Result<String, (i32, String)> {
    let sc = load(file).map_err(|e| (EXIT_CONFIG, e))?;
    let (w1, w2) = sc
        .build_worldlines()
        .map_err(|e| (EXIT_CONFIG, format!("{}: {e}", file.display())))?;
    let seed = seed_override.unwrap_or(sc.seed);
    let ExperimentOutput { files, summary } = run_experiment(&sc, &w1, &w2, seed)
        .map_err(|e| (EXIT_NUMERICAL, format!("{}: {e}", file.display())))?;
    let stem = file
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scenario".into());
    let dir = out.join(&stem);
    std::fs::create_dir_all(&dir)
        .map_err(|e| (EXIT_CONFIG, format!("cannot create {}: {e}", dir.display())))?;
    for (name, contents) in files {
        let path = dir.join(name);
        std::fs::write(&path, contents)
            .map_err(|e| (EXIT_CONFIG, format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(format!("{stem} {summary}"))
}

fn run_all(files: &[PathBuf], out: &Path, seed: Option<u64>, jobs: usize) -> i32 {
    let next = Mutex::new(0usize);
    // summary lines keyed by input order so the manifest is deterministic
    let results: Mutex<Vec<Option<Result<String, (i32, String)>>>> =
        Mutex::new(vec![None; files.len()]);
    std::thread::scope(|scope| {
        for _ in 0..jobs.max(1).min(files.len()) {
            scope.spawn(|| loop {
                let i = {
                    let mut n = next.lock().unwrap();
                    let i = *n;
                    *n += 1;
                    i
                };
                if i >= files.len() {
                    break;
                }
                let r = run_one(&files[i], out, seed);
                results.lock().unwrap()[i] = Some(r);
            });
        }
    });
    let results = results.into_inner().unwrap();
    let mut manifest = String::new();
    let mut code = 0;
    for r in results.into_iter().flatten() {
        match r {
            Ok(line) => {
                println!("{line}");
                manifest.push_str(&line);
                manifest.push('\n');
            }
            Err((c, msg)) => {
                eprintln!("error: {msg}");
                code = code.max(c);
            }
        }
    }
    if !manifest.is_empty() {
        if std::fs::create_dir_all(out).is_ok() {
            let path = out.join("manifest.txt");
            if let Ok(mut f) = std::fs::OpenOptions::new().create(true).append(true).open(&path)
            {
                let _ = f.write_all(manifest.as_bytes());
            }
        }
    }
    code
}

fn main() {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run {
            files,
            out,
            seed,
            jobs,
        } => run_all(&files, &out, seed, jobs),
        Command::ListExperiments => {
            for name in EXPERIMENTS {
                println!("{name}");
            }
            0
        }
        Command::Validate { file } => match load(&file) {
            Ok(sc) => {
                println!("ok: {} ({})", file.display(), sc.experiment);
                0
            }
            Err(e) => {
                eprintln!("error: {e}");
                EXIT_CONFIG
            }
        },
    };
    std::process::exit(code);
}
