//! `shmx`: simulate, identify, rank and evaluate from the command line.
//!
//! Exit codes: 0 success, 1 configuration or input error, 2 numerical
//! failure, 3 I/O error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use shmx_core::config::ScenarioConfig;
use shmx_core::detect::{evaluate, DamageReport, DetectOptions, SuppressionSet, DEFAULT_GAMMA};
use shmx_core::order::{FixedOrder, OrderPolicy, OrderPolicyRegistry};
use shmx_core::pipeline::{
    granger, identify, load_reports, plot_csv, plot_rows, read_series, read_text, run_pipeline, simulate_record,
    write_atomic, write_series,
};
use shmx_core::signal::{parse_label_list, GroupPartition};
use shmx_core::varx::VarxModel;
use shmx_core::{Error, ErrorKind};

#[derive(Parser)]
#[command(name = "shmx", version, about = "Substructure damage detection with a reduced sensor set")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every stage from one configuration file.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the configuration's excitation seed.
        #[arg(long)]
        master_seed: Option<u64>,
    },
    /// Simulate one record: `healthy`, `baseline` or a damage id.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        master_seed: Option<u64>,
    },
    /// Fit a VARX model to a CSV record.
    Identify {
        #[arg(long)]
        data: PathBuf,
        /// Endogenous labels, e.g. `z6x,z6y,z7x`.
        #[arg(long)]
        endog: String,
        /// Exogenous labels; may be empty when `--q 0`.
        #[arg(long, default_value = "")]
        exog: String,
        #[arg(long)]
        p: usize,
        #[arg(long)]
        q: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pairwise conditional Granger causality between channel groups.
    Gc(GcArgs),
    /// Evaluate a record against a healthy model with channels suppressed.
    Detect {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Node ids (`7,8`), labels (`z7x`), or `none`.
        #[arg(long, allow_hyphen_values = true)]
        suppress: String,
        /// Healthy report whose DI is the classification baseline.
        #[arg(long)]
        baseline: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_GAMMA)]
        gamma: f64,
        #[arg(long, default_value_t = 0)]
        burn_in: usize,
        /// Scenario id written to the report; defaults to the data file stem.
        #[arg(long)]
        scenario: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Collect damage reports into a `scenario,suppression,di` CSV.
    PlotData {
        #[arg(long)]
        reports: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct GcArgs {
    #[arg(long)]
    data: PathBuf,
    /// `id:label[,label...];id:label[,label...]`
    #[arg(long)]
    groups: String,
    /// Fixed VAR order.
    #[arg(long, conflicts_with = "order_policy")]
    order: Option<usize>,
    /// Registered policy, e.g. `aic:20` (default) or `fixed:2`.
    #[arg(long)]
    order_policy: Option<String>,
    /// Extra labels added to every conditioning set.
    #[arg(long)]
    condition: Option<String>,
    /// Number of groups to select for suppression.
    #[arg(long, default_value_t = 1)]
    select: usize,
    #[arg(long)]
    out: PathBuf,
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Pipeline {
            config,
            out,
            master_seed,
        } => {
            let cfg = ScenarioConfig::from_file(&config)?;
            let manifest = run_pipeline(&cfg, &out, master_seed)?;
            println!(
                "run complete: master seed {}, suppressible groups {:?}",
                manifest.master_seed, manifest.gc_selected
            );
            let plot = read_text(&out.join("di_plot.csv"))?;
            print!("{plot}");
            println!("manifest: {}", out.join("manifest.json").display());
        }
        Command::Simulate {
            config,
            scenario,
            out,
            master_seed,
        } => {
            let cfg = ScenarioConfig::from_file(&config)?;
            let ts = simulate_record(&cfg, &scenario, master_seed.unwrap_or(cfg.excitation.seed))?;
            write_series(&out, &ts)?;
            println!("{}: {} samples x {} channels", out.display(), ts.n_samples(), ts.n_channels());
        }
        Command::Identify {
            data,
            endog,
            exog,
            p,
            q,
            out,
        } => {
            let ts = read_series(&data)?;
            let fit = identify(&ts, &parse_label_list(&endog)?, &parse_label_list(&exog)?, p, q)?;
            write_atomic(&out, fit.model.to_json().as_bytes())?;
            let meta = fit.model.meta().expect("fitted model");
            println!(
                "VARX({p},{q}): {} endogenous, {} exogenous, {} regression rows, condition {:.3e}",
                fit.model.n_endog(),
                fit.model.n_exog(),
                meta.n_eff,
                meta.condition
            );
        }
        Command::Gc(args) => {
            let ts = read_series(&args.data)?;
            let groups = GroupPartition::parse(&args.groups)?;
            let policy: Box<dyn OrderPolicy> = match (args.order, &args.order_policy) {
                (Some(p), _) => Box::new(FixedOrder(p)),
                (None, Some(spec)) => OrderPolicyRegistry::default().parse(spec)?,
                (None, None) => OrderPolicyRegistry::default().parse("aic:20")?,
            };
            let condition = match &args.condition {
                Some(s) => parse_label_list(s)?,
                None => Vec::new(),
            };
            let report = granger(&ts, &groups, policy.as_ref(), &condition, args.select)?;
            write_atomic(&args.out, report.to_json().as_bytes())?;
            println!("order {} ({})", report.order, report.order_policy);
            for r in &report.rows {
                println!("F({} -> {}) = {:.6e}", r.y, r.x, r.f);
            }
            for g in &report.summary {
                println!("F_G({}) = {:.6e}", g.group, g.f_g);
            }
            println!("selected {:?}", report.selected);
        }
        Command::Detect {
            model,
            data,
            suppress,
            baseline,
            gamma,
            burn_in,
            scenario,
            out,
        } => {
            let m = VarxModel::from_json(&read_text(&model)?)?;
            let ts = read_series(&data)?;
            let suppressed = if suppress.trim() == "none" {
                SuppressionSet::empty()
            } else {
                SuppressionSet::parse(&suppress)?
            };
            let base = baseline
                .as_deref()
                .map(|p| read_text(p).and_then(|t| DamageReport::from_json(&t)))
                .transpose()?;
            let scenario = scenario.unwrap_or_else(|| stem(&data));
            let options = DetectOptions { gamma, burn_in };
            let mut report = evaluate(&m, &ts, &suppressed, base.as_ref().map(|b| b.di), &options, &scenario)?;
            if let Some(b) = &base {
                if b.suppression != report.suppression {
                    report.warnings.push(format!(
                        "baseline was computed with suppression `{}`, this run uses `{}`",
                        b.suppression, report.suppression
                    ));
                }
            }
            write_atomic(&out, report.to_json().as_bytes())?;
            let verdict = match report.damaged {
                Some(true) => "damaged",
                Some(false) => "healthy",
                None => "unclassified (no baseline)",
            };
            println!("{} [{}]: DI = {:.6e} -> {verdict}", report.scenario, report.suppression, report.di);
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
        }
        Command::PlotData { reports, out } => {
            let all = load_reports(&reports)?;
            let csv = plot_csv(&plot_rows(&all))?;
            write_atomic(&out, csv.as_bytes())?;
            println!("{} rows -> {}", all.len(), out.display());
        }
    }
    Ok(())
}

fn stem(path: &Path) -> String {
    path.file_stem().map_or_else(|| "data".to_string(), |s| s.to_string_lossy().into_owned())
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Input => 1,
        ErrorKind::Numerical => 2,
        ErrorKind::Io => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.kind()))
        }
    }
}
