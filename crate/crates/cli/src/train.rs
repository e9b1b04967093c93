//! `train`: one experiment from a config file plus overrides.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use qfl_core::config::{FedConfig, Workflow};
use qfl_core::fedsim::run_experiment;

#[derive(Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub workflow: Option<Workflow>,
    pub clients: Option<usize>,
    pub trace: bool,
    /// Extra `key=value` pairs, applied last.
    pub set: Vec<String>,
}

pub fn load_config(path: Option<&Path>, o: &Overrides) -> Result<FedConfig> {
    let mut cfg = match path {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            FedConfig::parse(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => FedConfig::default(),
    };
    if let Some(s) = o.seed {
        cfg.seed = s;
    }
    if let Some(dir) = &o.out {
        cfg.out_dir = dir.display().to_string();
    }
    if let Some(w) = o.workflow {
        cfg.workflow = w;
    }
    if let Some(n) = o.clients {
        cfg.n_clients = n;
    }
    if o.trace {
        cfg.trace = true;
    }
    for kv in &o.set {
        let (k, v) = kv
            .split_once('=')
            .with_context(|| format!("override {kv:?} is not key=value"))?;
        cfg.set(k.trim(), v.trim())?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Runs the experiment and writes metrics.csv, summary.json, the resolved
/// config and, when tracing, the key trace. Returns the summary.
pub fn run(cfg: &FedConfig) -> Result<serde_json::Value> {
    let result = run_experiment(cfg)?;
    let dir = Path::new(&cfg.out_dir);
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    fs::write(dir.join("metrics.csv"), result.metrics_csv())?;
    let summary = serde_json::to_value(result.summary())?;
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    fs::write(dir.join("config.cfg"), cfg.canonical())?;
    if let Some(trace) = &result.trace {
        fs::write(dir.join("keytrace.txt"), trace)?;
    }
    println!(
        "{} / {}: {} rounds, {} clients, final loss {:.4}, final metric {:.4}",
        cfg.task,
        cfg.workflow,
        result.metrics.len(),
        cfg.n_clients,
        result.final_loss(),
        result.final_accuracy()
    );
    println!("wrote {}", dir.display());
    Ok(summary)
}
