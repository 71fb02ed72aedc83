//! Command-line experiment runner.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::Parser;

use crate::error::{Error, Result};
use crate::metrics::{attach_copt_ratios, summarize};
use crate::output::{config_hash, write_atomically, write_csv, write_json, ExperimentSummary, RunManifest, SweepSpec};
use crate::scenario::ScenarioConfig;
use crate::sim::{run_monte_carlo, run_seeds, StrategyKind};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "hypercrowd", version, about = "Competitive crowdsensing task-assignment simulator")]
pub struct Cli {
    /// JSON config layered over the selected profile.
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Base profile: desk or paper.
    #[arg(long, default_value = "desk")]
    pub profile: String,

    #[arg(long)]
    pub seed: Option<u64>,

    #[arg(long)]
    pub runs: Option<usize>,

    #[arg(long)]
    pub steps: Option<usize>,

    /// Comma-separated list out of copt, mgs, prism, pacmab, cmab, random.
    #[arg(long, default_value = "copt,mgs,prism,pacmab,cmab,random")]
    pub strategies: String,

    /// Sweep axis as `key=v1,v2,...`; `k` and `z` are shorthands for `mus` and `task_types`.
    #[arg(long)]
    pub sweep: Option<String>,

    #[arg(long, default_value = "out")]
    pub out: PathBuf,

    /// Dotted-key overrides such as `mu.alpha=0.02`.
    pub overrides: Vec<String>,
}

pub fn parse_strategies(s: &str) -> Result<Vec<StrategyKind>> {
    let mut out = Vec::new();
    for part in s.split(',').filter(|p| !p.trim().is_empty()) {
        let k: StrategyKind = part.parse()?;
        if !out.contains(&k) {
            out.push(k);
        }
    }
    if out.is_empty() {
        return Err(Error::config("strategies", "no strategy selected"));
    }
    Ok(out)
}

pub fn parse_sweep(s: &str) -> Result<SweepSpec> {
    let (key, values) = s
        .split_once('=')
        .ok_or_else(|| Error::config("sweep", "expected key=v1,v2,..."))?;
    let key = match key.trim() {
        "k" | "K" => "mus".to_string(),
        "z" | "Z" => "task_types".to_string(),
        other => other.to_string(),
    };
    let values: Vec<String> = values
        .split(',')
        .map(|v| v.trim().to_string())
        .filter(|v| !v.is_empty())
        .collect();
    if values.is_empty() {
        return Err(Error::config("sweep", "no values given"));
    }
    Ok(SweepSpec { key, values })
}

/// Resolve the effective base configuration from the command line.
pub fn resolve_config(cli: &Cli) -> Result<ScenarioConfig> {
    let mut cfg = ScenarioConfig::profile(&cli.profile)?;
    if let Some(path) = &cli.config {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::config("--config", format!("{}: {e}", path.display())))?;
        cfg = cfg.layered(&text)?;
    }
    cfg = cfg.with_overrides(&cli.overrides)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(runs) = cli.runs {
        cfg.runs = runs;
    }
    if let Some(steps) = cli.steps {
        cfg.steps = steps;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Everything a run needs, validated before any simulation starts.
#[derive(Debug, Clone)]
pub struct Plan {
    pub base: ScenarioConfig,
    pub hash: String,
    pub strategies: Vec<StrategyKind>,
    pub sweep: Option<SweepSpec>,
    /// `(experiment name, config)` pairs.
    pub experiments: Vec<(String, ScenarioConfig)>,
}

pub fn plan(cli: &Cli) -> Result<Plan> {
    let base = resolve_config(cli)?;
    let strategies = parse_strategies(&cli.strategies)?;
    let sweep = cli.sweep.as_deref().map(parse_sweep).transpose()?;
    let experiments = match &sweep {
        None => vec![("base".to_string(), base.clone())],
        Some(s) => s
            .values
            .iter()
            .map(|v| Ok((format!("{}={v}", s.key), base.with_overrides(&[format!("{}={v}", s.key)])?)))
            .collect::<Result<_>>()?,
    };
    let hash = config_hash(&base)?;
    Ok(Plan {
        base,
        hash,
        strategies,
        sweep,
        experiments,
    })
}

/// Execute a plan, writing artifacts under `out/<config hash>/`.
pub fn execute(plan: &Plan, out: &Path) -> Result<RunManifest> {
    let root = out.join(&plan.hash);
    let seeds = run_seeds(plan.base.seed, plan.base.runs);
    let mut outputs = Vec::new();
    let mut summaries = Vec::new();
    for (name, cfg) in &plan.experiments {
        let mut per_strategy = Vec::new();
        for &kind in &plan.strategies {
            let runs = run_monte_carlo(cfg, kind, &seeds)?;
            let path = root.join(name).join(format!("{}.csv", kind.name()));
            write_atomically(&path, |f| write_csv(f, &runs, cfg.mcsps))?;
            outputs.push(path);
            per_strategy.push(summarize(kind, &runs, cfg.window));
        }
        attach_copt_ratios(&mut per_strategy);
        summaries.push(ExperimentSummary {
            name: name.clone(),
            config_hash: config_hash(cfg)?,
            strategies: per_strategy,
        });
    }
    let summary_path = root.join("summary.json");
    write_json(&summary_path, &summaries)?;
    outputs.push(summary_path);
    let manifest = RunManifest {
        config_hash: plan.hash.clone(),
        seeds,
        strategies: plan.strategies.clone(),
        sweep: plan.sweep.clone(),
        outputs,
        config: plan.base.clone(),
    };
    write_json(&root.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

/// Parse arguments, run, and map the outcome onto an exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let plan = match plan(&cli) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    match execute(&plan, &cli.out) {
        Ok(m) => {
            for p in &m.outputs {
                println!("{}", p.display());
            }
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config { .. } => EXIT_CONFIG,
                _ => EXIT_RUNTIME,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strategy_and_sweep_parsing() {
        assert_eq!(
            parse_strategies("prism, copt,prism").unwrap(),
            vec![StrategyKind::Prism, StrategyKind::Copt]
        );
        assert!(parse_strategies("prism,foo").is_err());
        let s = parse_sweep("k=50,100").unwrap();
        assert_eq!(s.key, "mus");
        assert_eq!(s.values, vec!["50", "100"]);
        assert!(parse_sweep("k").is_err());
    }

    #[test]
    fn bad_override_is_a_config_error() {
        let code = main_with_args(["hypercrowd", "--runs", "1", "--steps", "1", "mu.nope=1"]);
        assert_eq!(code, EXIT_CONFIG);
    }
}
