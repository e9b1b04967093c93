//! Adder benchmark: exhaustive check and scheme comparison.

use std::fs;
use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use qfl_core::aggadder::{
    build_adder, report_comparison, verify_exhaustive, ComparisonRow, GateCostModel, REFERENCE_OURS,
};
use serde_json::json;

/// Accepts `4`, `2-6` or `2,3,4`.
pub fn parse_widths(spec: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for part in spec.split(',') {
        let part = part.trim();
        if let Some((a, b)) = part.split_once('-') {
            let (a, b): (usize, usize) = (a.trim().parse()?, b.trim().parse()?);
            if a > b {
                bail!("empty width range {part}");
            }
            out.extend(a..=b);
        } else {
            out.push(part.parse().with_context(|| format!("bad width {part:?}"))?);
        }
    }
    Ok(out)
}

pub struct BenchOutcome {
    pub csv: String,
    pub ok: bool,
    pub failure_report: serde_json::Value,
}

fn row_csv(r: &ComparisonRow, scheme: &str) -> String {
    format!("{scheme},{},{},{},{},{}\n", r.qubits, r.cx, r.ccx, r.cost, r.latency)
}

pub fn run(widths: &[usize], carry_in: bool, out_dir: Option<&Path>) -> Result<BenchOutcome> {
    let model = GateCostModel::default();
    let mut csv = String::from("scheme,qubits,cx,ccx,cost,latency\n");
    let mut failures = Vec::new();
    let mut references_written = false;
    for &w in widths {
        let started = Instant::now();
        let adder = build_adder(w, carry_in)?;
        let check = verify_exhaustive(&adder)?;
        let report = report_comparison(&model, &adder);
        eprintln!(
            "width {w}: {}/{} cases correct, {} dirty ancilla outputs ({:.3?})",
            check.cases - check.failures.len(),
            check.cases,
            check.dirty_ancillas,
            started.elapsed()
        );
        if !check.passed() {
            failures.push(json!({
                "width": w,
                "kind": "exhaustive",
                "failed_inputs": check.failures.len(),
                "dirty_ancillas": check.dirty_ancillas,
            }));
        }
        let (ours, references) = report.rows.split_last().expect("report has rows");
        if !references_written {
            for r in references {
                csv.push_str(&row_csv(r, &r.scheme));
            }
            references_written = true;
        }
        let reference_config = w == 4 && carry_in == REFERENCE_OURS.carry_in;
        let scheme = if reference_config {
            ours.scheme.clone()
        } else {
            format!("{}-w{w}", ours.scheme)
        };
        csv.push_str(&row_csv(ours, &scheme));
        if reference_config {
            for note in &report.notes {
                eprintln!("discrepancy: {note}");
            }
            if !report.target_met {
                failures.push(json!({
                    "width": w,
                    "kind": "reference_counts",
                    "notes": report.notes,
                }));
            }
        }
        if let Some(dir) = out_dir {
            fs::create_dir_all(dir)?;
            fs::write(dir.join(format!("adder_w{w}.qc")), adder.circuit.to_text())?;
        }
    }
    if let Some(dir) = out_dir {
        fs::write(dir.join("comparison.csv"), &csv)?;
    }
    Ok(BenchOutcome {
        ok: failures.is_empty(),
        failure_report: json!({ "command": "bench-adder", "failures": failures }),
        csv,
    })
}
