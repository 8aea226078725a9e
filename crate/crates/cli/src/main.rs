mod config;
mod ini;
mod plot;
mod results;

use clap::{Parser, Subcommand};
use qprec::experiments::{run_suite, Suite};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_CHECK_FAILURE: u8 = 1;
const EXIT_CONFIG_ERROR: u8 = 2;

#[derive(Parser)]
#[command(name = "qprec", version, about = "Quantized precoding experiment runner")]
struct Cli {
    /// Worker threads for the (seed, K) cell pool.
    #[arg(long, global = true, env = "QPREC_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the suite named in a config file and write CSV and JSON results.
    Run {
        config: PathBuf,
        /// Output directory, overriding `[experiment] output`.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Validate the config and print the resolved settings without running.
        #[arg(long)]
        dry_run: bool,
    },
    /// Emit sorted (K, value) series for one metric of a results CSV.
    Plot {
        csv: PathBuf,
        #[arg(long)]
        metric: String,
        /// Fit and draw in log-log coordinates.
        #[arg(long)]
        loglog: bool,
        /// Also write an SVG chart to this path.
        #[arg(long)]
        svg: Option<PathBuf>,
        /// Write the text series here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the available suites.
    ListSuites,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(EXIT_CONFIG_ERROR);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot size worker pool: {e}");
            return ExitCode::from(EXIT_CONFIG_ERROR);
        }
    }
    match cli.command {
        Command::Run { config, output, dry_run } => run(&config, output, dry_run),
        Command::Plot { csv, metric, loglog, svg, out } => plot_cmd(&csv, &metric, loglog, svg, out),
        Command::ListSuites => {
            for s in Suite::ALL {
                println!("{:<14} {}", s.name(), s.description());
            }
            ExitCode::SUCCESS
        }
    }
}

fn run(path: &Path, output: Option<PathBuf>, dry_run: bool) -> ExitCode {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", path.display());
            return ExitCode::from(EXIT_CONFIG_ERROR);
        }
    };
    let base = path.parent().unwrap_or(Path::new("."));
    let mut rc = match config::parse_config(&text, base) {
        Ok(rc) => rc,
        Err(e) => {
            eprintln!("error: {}: {e}", path.display());
            return ExitCode::from(EXIT_CONFIG_ERROR);
        }
    };
    if let Some(o) = output {
        rc.output = o;
    }
    if dry_run {
        let resolved = serde_json::json!({ "output": rc.output, "config": rc.suite });
        println!("{}", serde_json::to_string_pretty(&resolved).expect("config serializes"));
        return ExitCode::SUCCESS;
    }
    let out = match run_suite(&rc.suite) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG_ERROR);
        }
    };
    let written = match results::write_outputs(&rc.output, &rc.suite, &out) {
        Ok(w) => w,
        Err(e) => {
            eprintln!("error: cannot write results to {}: {e}", rc.output.display());
            return ExitCode::from(EXIT_CONFIG_ERROR);
        }
    };
    for c in &out.checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    println!("wrote {} and {}", written.csv.display(), written.summary.display());
    if out.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_CHECK_FAILURE)
    }
}

fn plot_cmd(csv: &Path, metric: &str, loglog: bool, svg: Option<PathBuf>, out: Option<PathBuf>) -> ExitCode {
    let text = match std::fs::read_to_string(csv) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", csv.display());
            return ExitCode::from(EXIT_CONFIG_ERROR);
        }
    };
    let data = match plot::extract(&text, metric, loglog) {
        Ok(d) => d,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG_ERROR);
        }
    };
    let rendered = plot::render_text(&data);
    let writes = [(out.as_deref(), rendered.as_str()), (svg.as_deref(), plot::render_svg(&data).as_str())]
        .into_iter()
        .try_for_each(|(path, body)| match path {
            Some(p) => std::fs::write(p, body).map_err(|e| format!("cannot write {}: {e}", p.display())),
            None => Ok(()),
        });
    if let Err(e) = writes {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_CONFIG_ERROR);
    }
    if out.is_none() {
        print!("{rendered}");
    }
    ExitCode::SUCCESS
}
