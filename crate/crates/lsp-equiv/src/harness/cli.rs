//! Command-line front end. Exit codes: 0 all checks pass, 1 a check failed, 2 usage or config error.

use super::conditions::{condition_table, piecing_check};
use super::config::RunConfig;
use super::output::{json_string, Table};
use super::studies::{export_basis, risk_study, run_equivalence_chain, tv_decay};
use super::verify::verify;
use crate::error::{Error, Result};
use crate::report::VerificationReport;
use clap::{Parser, Subcommand, ValueEnum};
use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "lsp-equiv", about = "Numerical checks for the locally stationary equivalence chain")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON run configuration
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Run at this single n instead of the configured grid
    #[arg(long, global = true)]
    pub n: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; results go to stdout when absent
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value = "json")]
    pub format: Format,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// All inequality suites
    Verify,
    /// The equivalence-chain study, one row per n
    Chain,
    /// TV decay of the K = 1 characteristic-function oracle
    Tvdecay,
    /// White-noise pilot risk study
    Riskstudy,
    /// Numeric values of the asymptotic conditions
    Conditions,
    /// The basis {M_k} at the scheduled κ
    ExportBasis,
}

pub struct Outcome {
    pub pass: bool,
    pub files: Vec<(String, String)>,
}

fn render_table(t: &Table, format: Format) -> Result<String> {
    match format {
        Format::Csv => t.to_csv(),
        Format::Json => Ok(json_string(&t.to_json_value())),
    }
}

fn report_table(r: &VerificationReport) -> Table {
    let mut t = Table::new(&["check_id", "paper_ref", "lhs", "rhs", "tolerance", "margin", "pass", "runtime_ms", "note"]);
    for e in &r.entries {
        t.push(vec![
            e.check_id.clone().into(),
            e.paper_ref.clone().into(),
            e.lhs.into(),
            e.rhs.into(),
            e.tolerance.into(),
            e.margin.into(),
            e.pass.into(),
            e.runtime_ms.into(),
            e.note.clone().unwrap_or_default().into(),
        ]);
    }
    t
}

pub fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::from_path(p)?,
        None => RunConfig::default(),
    };
    if let Some(n) = cli.n {
        cfg.n_grid = vec![n];
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Runs a parsed command and returns the rendered outputs keyed by file name.
pub fn execute(cli: &Cli, cfg: &RunConfig) -> Result<Outcome> {
    let ext = match cli.format {
        Format::Csv => "csv",
        Format::Json => "json",
    };
    let file = |stem: &str| format!("{stem}.{ext}");
    match cli.command {
        Command::Verify => {
            let mut all = VerificationReport::new();
            for &n in &cfg.n_grid {
                all.extend(verify(cfg, n).entries);
            }
            let body = match cli.format {
                Format::Json => json_string(&serde_json::to_value(&all).map_err(|e| Error::Internal(e.to_string()))?),
                Format::Csv => report_table(&all).to_csv()?,
            };
            Ok(Outcome { pass: all.all_pass(), files: vec![(file("verify"), body)] })
        }
        Command::Chain => {
            let s = run_equivalence_chain(cfg)?;
            let ok = s.table.column("error").unwrap().iter().all(|c| **c == super::output::Cell::Str(String::new()));
            let body = match cli.format {
                Format::Csv => s.table.to_csv()?,
                Format::Json => json_string(&serde_json::json!({
                    "schema": crate::report::SCHEMA,
                    "rows": s.table.to_json_value(),
                    "decay_flags": s.decay_flags.iter().map(|(c, f)| (c.clone(), serde_json::Value::Bool(*f))).collect::<serde_json::Map<_, _>>(),
                })),
            };
            Ok(Outcome { pass: ok, files: vec![(file("chain"), body)] })
        }
        Command::Tvdecay => Ok(Outcome { pass: true, files: vec![(file("tvdecay"), render_table(&tv_decay(cfg)?, cli.format)?)] }),
        Command::Riskstudy => {
            let t = risk_study(cfg)?;
            let ok = t.column("pass").unwrap().iter().all(|c| **c == super::output::Cell::Bool(true));
            Ok(Outcome { pass: ok, files: vec![(file("riskstudy"), render_table(&t, cli.format)?)] })
        }
        Command::Conditions => {
            let mut t = Table::new(&["n", "K", "id", "condition", "value", "budget", "flagged"]);
            let mut ok = true;
            for &n in &cfg.n_grid {
                let k = cfg.k_override.unwrap_or_else(|| cfg.schedule.k(n));
                ok &= piecing_check(k, cfg.q, cfg.r).pass;
                for r in condition_table(n, &cfg.schedule, cfg.k_override, cfg.q, cfg.r, cfg.condition_budget) {
                    t.push(vec![n.into(), k.into(), r.id.into(), r.paper_ref.into(), r.value.into(), r.budget.into(), r.flagged.into()]);
                }
            }
            Ok(Outcome { pass: ok, files: vec![(file("conditions"), render_table(&t, cli.format)?)] })
        }
        Command::ExportBasis => {
            let mut files = Vec::new();
            for &n in &cfg.n_grid {
                let t = export_basis(n, cfg.schedule.kappa(n))?;
                files.push((file(&format!("basis_n{n}")), render_table(&t, cli.format)?));
            }
            Ok(Outcome { pass: true, files })
        }
    }
}

/// Full CLI entry point with output to `stdout`/`stderr`.
pub fn run(args: impl IntoIterator<Item = impl Into<OsString> + Clone>, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = if code == 0 { write!(stdout, "{e}") } else { write!(stderr, "{e}") };
            return code;
        }
    };
    let cfg = match load_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            return 2;
        }
    };
    let outcome = match execute(&cli, &cfg) {
        Ok(o) => o,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            return 1;
        }
    };
    for (name, body) in &outcome.files {
        let res = match &cli.out {
            Some(dir) => std::fs::create_dir_all(dir).and_then(|_| std::fs::write(dir.join(name), body)),
            None => stdout.write_all(body.as_bytes()),
        };
        if let Err(e) = res {
            let _ = writeln!(stderr, "error writing {name}: {e}");
            return 2;
        }
    }
    if outcome.pass {
        0
    } else {
        let _ = writeln!(stderr, "one or more checks failed");
        1
    }
}
