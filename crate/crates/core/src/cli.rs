//! The `fairstep` command line.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::bundle::Bundle;
use crate::cohort::{load_groups, write_enrollees, ExclusionReason, GroupDefinition};
use crate::design::{AgeBanding, Formula};
use crate::error::{Error, Result};
use crate::metrics::{report_rows, write_report_table, EvaluationMode, MetricReport};
use crate::scenario::Scenario;
use crate::service::{serve, AppState};
use crate::stepwise::{
    compare_policies, run_stepwise, trace_to_dot, write_trace_table, DecisionTrace, Pool,
    SelectionPolicy, Workspace,
};
use crate::synthpop::{generate, SyntheticSpec};

#[derive(Debug, Parser)]
#[command(name = "fairstep", version, about = "Stepwise risk-adjustment formula workbench")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate raw inputs and write a cohort bundle.
    Ingest {
        #[arg(long)]
        enrollees: PathBuf,
        #[arg(long)]
        hcc_map: PathBuf,
        #[arg(long)]
        ccs_map: PathBuf,
        #[arg(long)]
        hierarchy: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Generate a synthetic enrollee file from a spec.
    Simulate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the spec's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the spec's population size.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        json: bool,
    },
    /// Fit one formula and print fit and group metrics.
    Report {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        formula: PathBuf,
        #[arg(long)]
        groups: PathBuf,
        /// Number of cross-validation folds; in-sample when absent.
        #[arg(long)]
        cv: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        json: bool,
        /// Also write one CSV row per group.
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Run one selection policy from a baseline.
    Stepwise {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        baseline: PathBuf,
        #[arg(long)]
        pool: PathBuf,
        #[arg(long)]
        policy: PathBuf,
        #[arg(long)]
        groups: PathBuf,
        #[arg(long)]
        out_trace: Option<PathBuf>,
        #[arg(long)]
        dot: Option<PathBuf>,
        #[arg(long)]
        table: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Run several policies on the same inputs and report where they part.
    Compare {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        baseline: PathBuf,
        #[arg(long)]
        pool: PathBuf,
        #[arg(long)]
        groups: PathBuf,
        #[arg(long, num_args = 2.., required = true)]
        policies: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Serve the session API on localhost.
    Serve {
        #[arg(long)]
        bundle: Option<PathBuf>,
        #[arg(long, default_value_t = 8080)]
        port: u16,
    },
    /// Write the built-in scenario files to a directory.
    ExportScenario {
        #[arg(long)]
        out: PathBuf,
    },
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::File {
        path: path.to_path_buf(),
        source,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| Error::File {
        path: path.to_path_buf(),
        source,
    })
}

fn create(path: &Path) -> Result<std::io::BufWriter<fs::File>> {
    fs::File::create(path)
        .map(std::io::BufWriter::new)
        .map_err(|source| Error::File {
            path: path.to_path_buf(),
            source,
        })
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable")
}

struct Inputs {
    bundle: Bundle,
    groups: Vec<GroupDefinition>,
    banding: AgeBanding,
}

fn inputs(bundle: &Path, groups: &Path) -> Result<Inputs> {
    let bundle = Bundle::load(bundle)?;
    let groups = load_groups(groups, &bundle.maps)?;
    Ok(Inputs {
        bundle,
        groups,
        banding: AgeBanding::default(),
    })
}

fn load_formula(path: &Path, banding: &AgeBanding) -> Result<Formula> {
    let f = Formula::parse(&read_text(path)?)?;
    f.validate_cells(banding)?;
    Ok(f)
}

fn workspace(inp: &Inputs, universe: &Formula) -> Result<Workspace> {
    Workspace::from_records(&inp.bundle.records, universe, &inp.bundle.maps, &inp.banding, &inp.groups)
}

fn universe_of(baseline: &Formula, pool: &Pool) -> Result<Formula> {
    let extra: Vec<_> = pool.variables().filter(|v| !baseline.contains(v)).cloned().collect();
    baseline.with_appended(&extra)
}

pub fn format_report(report: &MetricReport) -> String {
    let mut s = String::new();
    s.push_str(&format!("r2      {:.6}\n", report.r2));
    match report.adj_r2 {
        Some(a) => s.push_str(&format!("adj_r2  {a:.6}\n")),
        None => s.push_str("adj_r2  -\n"),
    }
    if let EvaluationMode::CrossValidated { folds, seed } = report.evaluation_mode {
        s.push_str(&format!("mode    {folds}-fold cv, seed {seed}\n"));
    }
    s.push_str(&format!(
        "{:<12}{:>10}{:>14}{:>16}{:>12}{:>10}\n",
        "group", "n", "mean_spend", "net_comp", "nc/mean", "pr"
    ));
    for (id, g) in &report.group_metrics {
        s.push_str(&format!(
            "{:<12}{:>10}{:>14.2}{:>16.2}{:>12.4}{:>10.4}\n",
            id,
            g.n_g,
            g.group_mean_spend,
            g.net_compensation,
            g.relative_net_compensation(),
            g.predictive_ratio
        ));
    }
    s
}

fn execute(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Ingest {
            enrollees,
            hcc_map,
            ccs_map,
            hierarchy,
            out: dir,
            json,
        } => {
            let bundle = Bundle::ingest(&enrollees, &hcc_map, &ccs_map, hierarchy.as_deref())?;
            bundle.write(&dir)?;
            if json {
                writeln!(out, "{}", to_json(&bundle.exclusions))?;
            } else {
                let ex = &bundle.exclusions;
                writeln!(out, "input rows     {}", ex.input)?;
                for reason in [
                    ExclusionReason::MissingRegion,
                    ExclusionReason::MissingClaims,
                    ExclusionReason::NegativeClaims,
                ] {
                    writeln!(out, "excluded {:<22}{}", reason.as_str(), ex.count(reason))?;
                }
                writeln!(out, "kept rows      {}", bundle.records.len())?;
                writeln!(out, "bundle         {}", dir.display())?;
            }
        }
        Command::Simulate {
            spec,
            out: path,
            seed,
            n,
            json,
        } => {
            let mut spec = SyntheticSpec::parse(&read_text(&spec)?)?;
            if let Some(s) = seed {
                spec.seed = s;
            }
            if let Some(n) = n {
                spec.n = n;
            }
            spec.validate(None)?;
            let records = generate(&spec)?;
            write_enrollees(&records, create(&path)?)?;
            if json {
                writeln!(
                    out,
                    "{}",
                    serde_json::json!({ "rows": records.len(), "seed": spec.seed, "out": path })
                )?;
            } else {
                writeln!(out, "wrote {} rows to {} (seed {})", records.len(), path.display(), spec.seed)?;
            }
        }
        Command::Report {
            bundle,
            formula,
            groups,
            cv,
            seed,
            json,
            table,
        } => {
            let inp = inputs(&bundle, &groups)?;
            let formula = load_formula(&formula, &inp.banding)?;
            let mode = match cv {
                Some(folds) => EvaluationMode::CrossValidated { folds, seed },
                None => EvaluationMode::InSample,
            };
            let mut ws = workspace(&inp, &formula)?;
            ws.prepare(mode)?;
            let report = ws.report(&ws.state(&formula, mode)?)?;
            if let Some(t) = table {
                write_report_table(&report_rows("formula", &report), create(&t)?)?;
            }
            if json {
                writeln!(out, "{}", report.to_json())?;
            } else {
                write!(out, "{}", format_report(&report))?;
            }
        }
        Command::Stepwise {
            bundle,
            baseline,
            pool,
            policy,
            groups,
            out_trace,
            dot,
            table,
            json,
        } => {
            let inp = inputs(&bundle, &groups)?;
            let baseline = load_formula(&baseline, &inp.banding)?;
            let pool = Pool::parse(&read_text(&pool)?)?;
            let policy = SelectionPolicy::parse(&read_text(&policy)?)?;
            let mut ws = workspace(&inp, &universe_of(&baseline, &pool)?)?;
            ws.prepare(policy.evaluation_mode)?;
            let run = run_stepwise(&ws, &baseline, &pool, &policy)?;
            if let Some(p) = out_trace {
                write_text(&p, &run.trace.to_json())?;
            }
            if let Some(p) = dot {
                write_text(&p, &trace_to_dot(&run.trace))?;
            }
            if let Some(p) = table {
                write_trace_table(&run.trace, create(&p)?)?;
            }
            if json {
                writeln!(out, "{}", to_json(&run))?;
            } else {
                write!(out, "{}", format_trace(&run.trace))?;
                write!(out, "{}", format_report(&run.final_report))?;
            }
        }
        Command::Compare {
            bundle,
            baseline,
            pool,
            groups,
            policies,
            out: path,
            json,
        } => {
            let inp = inputs(&bundle, &groups)?;
            let baseline = load_formula(&baseline, &inp.banding)?;
            let pool = Pool::parse(&read_text(&pool)?)?;
            let policies = policies
                .iter()
                .map(|p| SelectionPolicy::parse(&read_text(p)?))
                .collect::<Result<Vec<_>>>()?;
            let mut ws = workspace(&inp, &universe_of(&baseline, &pool)?)?;
            let cmp = compare_policies(&mut ws, &baseline, &pool, &policies)?;
            if let Some(p) = path {
                write_text(&p, &to_json(&cmp))?;
            }
            if json {
                writeln!(out, "{}", to_json(&cmp))?;
            } else {
                write!(out, "{}", cmp.summary_table())?;
            }
        }
        Command::Serve { bundle, port } => {
            let state = match bundle {
                Some(b) => AppState::with_default_bundle(Bundle::load(&b)?),
                None => AppState::new(),
            };
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(serve(state, ([127, 0, 0, 1], port).into()))?;
        }
        Command::ExportScenario { out: dir } => {
            let s = Scenario::default_scenario();
            fs::create_dir_all(dir.join("policies")).map_err(|source| Error::File {
                path: dir.clone(),
                source,
            })?;
            s.maps.write_dir(&dir)?;
            write_text(&dir.join("spec.json"), &s.spec.to_json())?;
            write_text(&dir.join("groups.json"), &to_json(&s.groups))?;
            write_text(&dir.join("baseline.json"), &s.baseline.to_json())?;
            write_text(&dir.join("pool.json"), &to_json(&s.pool))?;
            write_text(&dir.join("policies/max_r2.json"), &to_json(&s.max_r2))?;
            write_text(&dir.join("policies/net_comp.json"), &to_json(&s.net_comp))?;
            writeln!(out, "wrote scenario to {}", dir.display())?;
        }
    }
    Ok(())
}

pub fn format_trace(trace: &DecisionTrace) -> String {
    let mut s = String::new();
    for e in &trace.entries {
        s.push_str(&format!(
            "#{:<3} {:<16} {:<7} dr2={:+.3e}",
            e.step,
            e.action.label(),
            if e.accepted { "accept" } else { "reject" },
            e.deltas.r2.absolute
        ));
        for (g, d) in &e.deltas.net_compensation {
            s.push_str(&format!(" dnc[{g}]={:+.2}", d.absolute));
        }
        s.push_str(&format!("  {}\n", e.reason));
    }
    let acts: Vec<String> = trace.accepted_actions().iter().map(|a| a.label()).collect();
    s.push_str(&format!("accepted: {}\n", if acts.is_empty() { "none".into() } else { acts.join(" ") }));
    s
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit code: 0 on success, 2 on usage or input-schema errors and
/// 1 on any other error.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = if code == 0 { write!(out, "{e}") } else { write!(err, "{e}") };
            return code;
        }
    };
    match execute(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            if e.is_schema_error() {
                2
            } else {
                1
            }
        }
    }
}
