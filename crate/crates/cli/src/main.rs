use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use levyma::bounds::{corollary_rate, rational_from_f64, theoretical_rate, RateClass};
use levyma::harness::{
    self, merge_rows, read_rows, stream_index, write_merged_csv, ExperimentConfig,
    ExperimentReport, Verdict,
};
use levyma::rng::RngStream;
use levyma::simulate::{write_path_dump, DumpSidecar};
use levyma::stats::Metric;
use levyma::Error;

const EXIT_USAGE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_VIOLATION: u8 = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Parser, Debug)]
#[command(
    name = "levyma",
    version,
    about = "Berry-Esseen rate experiments for heavy-tailed Levy moving averages"
)]
struct Cli {
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config's master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true, env = "LEVYMA_THREADS")]
    threads: Option<usize>,
    /// Output directory; without it results go to stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value = "csv")]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Dump R simulated paths per path length as little-endian f64 with a JSON sidecar.
    Simulate,
    /// Monte Carlo distances to N(0,1) and their fitted rate.
    Rates,
    /// Min-integral and γ₁/γ₂ proxy across the n-grid.
    Bounds,
    /// ρ_k table.
    Rho,
    /// Run whatever kind the config names.
    Run,
    /// Rate exponents for αβ values or the configured model.
    Table {
        /// αβ values (decimal or p/q).
        #[arg(long = "alpha-beta", value_delimiter = ',')]
        alpha_beta: Vec<String>,
    },
    /// Merge report CSVs into per-metric slopes.
    Report {
        #[arg(required = true)]
        csv: Vec<PathBuf>,
    },
}

struct Failure {
    code: u8,
    msg: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Accuracy { .. } | Error::DegenerateVariance { .. } | Error::Resource(_) => {
                EXIT_NUMERICAL
            }
            _ => EXIT_CONFIG,
        };
        Failure {
            code,
            msg: e.to_string(),
        }
    }
}

fn io_fail(what: &str, e: io::Error) -> Failure {
    Failure {
        code: EXIT_CONFIG,
        msg: format!("{what}: {e}"),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cli.threads {
        pool = pool.num_threads(t.max(1));
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    match pool.install(|| run(&cli)) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Failure> {
    let Some(path) = &cli.config else {
        return Err(Failure {
            code: EXIT_USAGE,
            msg: "--config is required for this command".into(),
        });
    };
    let mut cfg = ExperimentConfig::from_path(path)?;
    if let Some(seed) = cli.seed {
        cfg.master_seed = seed;
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<u8, Failure> {
    match &cli.command {
        Command::Simulate => simulate(cli),
        Command::Rates => experiment(cli, harness::run_rate_experiment),
        Command::Bounds => experiment(cli, harness::run_bound_experiment),
        Command::Rho => experiment(cli, harness::run_rho_experiment),
        Command::Run => experiment(cli, harness::run_experiment),
        Command::Table { alpha_beta } => table(cli, alpha_beta),
        Command::Report { csv } => report(cli, csv),
    }
}

fn emit(cli: &Cli, out: Option<&Path>, stem: &str, csv: &str, json: &str) -> Result<(), Failure> {
    match out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| io_fail("cannot create output directory", e))?;
            let write = |ext: &str, body: &str| {
                let p = dir.join(format!("{stem}.{ext}"));
                fs::write(&p, body)
                    .map_err(|e| io_fail(&format!("cannot write {}", p.display()), e))
            };
            write("csv", csv)?;
            write("json", json)?;
        }
        None => {
            let body = match cli.format {
                Format::Csv => csv,
                Format::Json => json,
            };
            io::stdout()
                .write_all(body.as_bytes())
                .map_err(|e| io_fail("cannot write to stdout", e))?;
            if cli.format == Format::Json {
                println!();
            }
        }
    }
    Ok(())
}

fn experiment(
    cli: &Cli,
    runner: fn(&ExperimentConfig) -> levyma::Result<ExperimentReport>,
) -> Result<u8, Failure> {
    let cfg = load_config(cli)?;
    let rep = runner(&cfg)?;
    // --out wins over the config's output directory
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.output.as_ref().map(PathBuf::from));
    emit(
        cli,
        out.as_deref(),
        &cfg.name,
        &rep.csv_string(),
        &rep.to_json(),
    )?;
    for s in &rep.slopes {
        let fit = s.fit_used.map_or_else(
            || "no fit".to_owned(),
            |f| format!("slope {:.4} ± {:.4}", f.slope, f.stderr),
        );
        let th = s
            .theoretical
            .map_or_else(|| "none".to_owned(), |t| t.to_string());
        eprintln!(
            "{} {}: {fit}, theory {th}: {}",
            rep.experiment, s.metric, s.verdict
        );
    }
    if rep.incomplete {
        eprintln!("{}: report incomplete", rep.experiment);
    }
    Ok(if rep.verdict() == Verdict::Violation {
        EXIT_VIOLATION
    } else {
        0
    })
}

fn simulate(cli: &Cli) -> Result<u8, Failure> {
    let cfg = load_config(cli)?;
    let Some(dir) = &cli.out else {
        return Err(Failure {
            code: EXIT_USAGE,
            msg: "simulate needs --out".into(),
        });
    };
    fs::create_dir_all(dir).map_err(|e| io_fail("cannot create output directory", e))?;
    for (i, &n) in cfg.n_grid.iter().enumerate() {
        let asm = cfg.assemble(n)?;
        let rows: Vec<Vec<f64>> = (0..cfg.replications)
            .into_par_iter()
            .map(|rep| {
                asm.source
                    .path(&mut RngStream::new(cfg.master_seed, stream_index(i, rep)))
            })
            .collect();
        let side = DumpSidecar {
            model: asm.model.clone(),
            grid: asm.grid.clone(),
            master_seed: cfg.master_seed,
            first_stream: stream_index(i, 0),
            rows: 0,
            cols: 0,
            layout: String::new(),
        };
        let path = dir.join(format!("{}_n{n}.bin", cfg.name));
        write_path_dump(&path, &rows, &side)?;
        eprintln!("wrote {}", path.display());
    }
    Ok(0)
}

#[derive(serde::Serialize)]
struct TableRow {
    source: String,
    metric: &'static str,
    exponent: String,
    exponent_value: f64,
    log_power: u8,
}

fn table_row(source: &str, metric: Metric, r: RateClass) -> TableRow {
    TableRow {
        source: source.to_owned(),
        metric: metric.name(),
        exponent: r.exponent.to_string(),
        exponent_value: r.exponent_f64(),
        log_power: r.log_power,
    }
}

fn table(cli: &Cli, alpha_beta: &[String]) -> Result<u8, Failure> {
    let mut rows = Vec::new();
    for text in alpha_beta {
        let ab = parse_rational(text)?;
        for m in [Metric::Kolmogorov, Metric::Wasserstein1] {
            rows.push(table_row(
                &format!("alpha_beta={ab}"),
                m,
                theoretical_rate(ab, m)?,
            ));
        }
    }
    if cli.config.is_some() {
        let cfg = load_config(cli)?;
        if let Some([k, w]) = cfg.model.theoretical_rates()? {
            rows.push(table_row(&cfg.name, Metric::Kolmogorov, k));
            rows.push(table_row(&cfg.name, Metric::Wasserstein1, w));
        }
    }
    if rows.is_empty() {
        // Without arguments print the OU rates, the one parameter-free row.
        let ou = corollary_rate(levyma::bounds::CorollaryExample::Ou)?;
        rows.push(table_row("ou", Metric::Kolmogorov, ou.kolmogorov));
        rows.push(table_row("ou", Metric::Wasserstein1, ou.wasserstein));
    }
    let mut csv = String::from("source,metric,exponent,exponent_value,log_power\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            r.source, r.metric, r.exponent, r.exponent_value, r.log_power
        ));
    }
    let json = serde_json::to_string_pretty(&rows).expect("table serializes");
    emit(cli, cli.out.as_deref(), "table", &csv, &json)?;
    Ok(0)
}

fn parse_rational(text: &str) -> Result<levyma::bounds::Rational, Failure> {
    let bad = || Failure {
        code: EXIT_USAGE,
        msg: format!("cannot parse αβ value {text:?}"),
    };
    if let Some((p, q)) = text.split_once('/') {
        let p: i64 = p.trim().parse().map_err(|_| bad())?;
        let q: i64 = q.trim().parse().map_err(|_| bad())?;
        if q == 0 {
            return Err(bad());
        }
        return Ok(levyma::bounds::Rational::new(p, q));
    }
    let x: f64 = text.trim().parse().map_err(|_| bad())?;
    rational_from_f64(x).map_err(|_| bad())
}

fn report(cli: &Cli, files: &[PathBuf]) -> Result<u8, Failure> {
    let mut rows = Vec::new();
    for f in files {
        rows.extend(read_csv(f)?);
    }
    let merged = merge_rows(&rows);
    let mut csv = Vec::new();
    write_merged_csv(&mut csv, &merged)?;
    let json = serde_json::to_string_pretty(&merged).expect("summary serializes");
    emit(
        cli,
        cli.out.as_deref(),
        "summary",
        &String::from_utf8(csv).expect("utf-8 csv"),
        &json,
    )?;
    Ok(0)
}

fn read_csv(path: &Path) -> Result<Vec<harness::Row>, Failure> {
    let file =
        fs::File::open(path).map_err(|e| io_fail(&format!("cannot open {}", path.display()), e))?;
    Ok(read_rows(file)?)
}
