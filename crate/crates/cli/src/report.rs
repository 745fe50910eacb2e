//! Human-readable summaries and plot-data bundles assembled from the
//! artifacts a run directory already contains. Emission is data-only
//! (CSV/JSON/markdown); rendering is left to external tools.

use movload::error::{Error, Result};
use movload::training::{EvalOutcome, Timings};
use std::fmt::Write as _;
use std::path::Path;

fn load_json<T: serde::de::DeserializeOwned>(path: &Path) -> Option<T> {
    let text = std::fs::read_to_string(path).ok()?;
    serde_json::from_str(&text).ok()
}

fn find_reports(run: &Path) -> Vec<(String, EvalOutcome)> {
    let mut found = Vec::new();
    if let Ok(entries) = std::fs::read_dir(run) {
        let mut names: Vec<String> = entries
            .flatten()
            .filter_map(|e| e.file_name().into_string().ok())
            .filter(|n| n.starts_with("error_report") && n.ends_with(".json"))
            .collect();
        names.sort();
        for name in names {
            if let Some(report) = load_json::<EvalOutcome>(&run.join(&name)) {
                found.push((name, report));
            }
        }
    }
    found
}

fn emit_histograms(run: &Path, tag: &str, outcome: &EvalOutcome) -> Result<Vec<String>> {
    let mut written = Vec::new();
    let sets = [("direct", Some(&outcome.direct)), ("postprocessed", outcome.postprocessed.as_ref())];
    for (kind, report) in sets {
        let Some(report) = report else { continue };
        for comp in &report.components {
            let mut csv = String::from("bin_lo,bin_hi,count\n");
            for (i, count) in comp.histogram.iter().enumerate() {
                csv.push_str(&format!(
                    "{:e},{:e},{}\n",
                    comp.bin_edges[i],
                    comp.bin_edges[i + 1],
                    count
                ));
            }
            let name = format!("histogram_{tag}_{kind}_{}.csv", comp.name);
            std::fs::write(run.join(&name), csv)?;
            written.push(name);
        }
    }
    Ok(written)
}

fn summarize(md: &mut String, label: &str, outcome: &EvalOutcome) {
    let _ = writeln!(md, "### {label}\n");
    let _ = writeln!(md, "| component | mean rel L2 | std | max |");
    let _ = writeln!(md, "|---|---|---|---|");
    for comp in &outcome.direct.components {
        let _ = writeln!(
            md,
            "| {} | {:.4} | {:.4} | {:.4} |",
            comp.name, comp.mean, comp.std, comp.max
        );
    }
    if let Some(post) = &outcome.postprocessed {
        let _ = writeln!(md, "\nfull-domain reconstruction:\n");
        let _ = writeln!(md, "| component | mean rel L2 | std | max |");
        let _ = writeln!(md, "|---|---|---|---|");
        for comp in &post.components {
            let _ = writeln!(
                md,
                "| {} | {:.4} | {:.4} | {:.4} |",
                comp.name, comp.mean, comp.std, comp.max
            );
        }
    }
    let _ = writeln!(md);
}

pub fn cmd_report(run: &Path, compare: Option<&Path>) -> Result<()> {
    if !run.is_dir() {
        return Err(Error::artifact(format!("run directory {run:?} not found")));
    }
    let reports = find_reports(run);
    let timings: Option<Timings> = load_json(&run.join("timings.json"));
    let summary: Option<serde_json::Value> = load_json(&run.join("run_summary.json"));
    let mut missing = Vec::new();
    if reports.is_empty() {
        missing.push("error_report*.json");
    }
    if timings.is_none() {
        missing.push("timings.json");
    }

    let mut md = String::from("# Run report\n\n");
    if let Some(s) = &summary {
        let _ = writeln!(
            md,
            "strategy: **{}**, epochs: {}\n",
            s.get("strategy").and_then(|v| v.as_str()).unwrap_or("?"),
            s.get("epochs").and_then(|v| v.as_u64()).unwrap_or(0)
        );
    }

    let mut mean_std = String::from("report,kind,component,mean,std,max\n");
    for (name, outcome) in &reports {
        summarize(&mut md, name, outcome);
        let written = emit_histograms(run, name.trim_end_matches(".json"), outcome)?;
        let _ = writeln!(md, "histogram data: {}\n", written.join(", "));
        for comp in &outcome.direct.components {
            mean_std.push_str(&format!(
                "{name},direct,{},{:e},{:e},{:e}\n",
                comp.name, comp.mean, comp.std, comp.max
            ));
        }
        if let Some(post) = &outcome.postprocessed {
            for comp in &post.components {
                mean_std.push_str(&format!(
                    "{name},postprocessed,{},{:e},{:e},{:e}\n",
                    comp.name, comp.mean, comp.std, comp.max
                ));
            }
        }
    }
    std::fs::write(run.join("mean_std.csv"), mean_std)?;

    match &timings {
        Some(t) => {
            let _ = writeln!(md, "## Timing\n");
            let _ = writeln!(md, "- training: {:.1} s", t.train_seconds);
            let _ = writeln!(
                md,
                "- inference: {:.4} s/sample",
                t.inference_seconds_per_sample
            );
            if t.postprocess_seconds_per_sample > 0.0 {
                let _ = writeln!(
                    md,
                    "- post-processing: {:.4} s/sample",
                    t.postprocess_seconds_per_sample
                );
            }
            let mut csv = String::from("quantity,seconds\n");
            csv.push_str(&format!("train,{:e}\n", t.train_seconds));
            csv.push_str(&format!(
                "inference_per_sample,{:e}\n",
                t.inference_seconds_per_sample
            ));
            csv.push_str(&format!(
                "postprocess_per_sample,{:e}\n",
                t.postprocess_seconds_per_sample
            ));
            if let Some(fem) = t.fem_seconds_per_sample {
                let speedup = fem / t.inference_seconds_per_sample.max(1e-300);
                let _ = writeln!(md, "- reference simulation: {:.4} s/sample", fem);
                let _ = writeln!(
                    md,
                    "- speedup (simulation / inference): **{speedup:.0}x**{}",
                    if speedup >= 100.0 { " (>= 100x)" } else { "" }
                );
                csv.push_str(&format!("fem_per_sample,{fem:e}\n"));
                csv.push_str(&format!("speedup,{speedup:e}\n"));
            } else {
                let _ = writeln!(md, "- reference simulation timing unavailable");
            }
            std::fs::write(run.join("timing_comparison.csv"), csv)?;
        }
        None => {
            let _ = writeln!(md, "## Timing\n\ntimings.json absent; skipped.\n");
        }
    }

    if let Some(other) = compare {
        let other_reports = find_reports(other);
        let _ = writeln!(md, "## Comparison with {}\n", other.display());
        let _ = writeln!(md, "| report | component | this mean | other mean |");
        let _ = writeln!(md, "|---|---|---|---|");
        for (name, outcome) in &reports {
            if let Some((_, other_outcome)) = other_reports.iter().find(|(n, _)| n == name) {
                for (a, b) in outcome
                    .direct
                    .components
                    .iter()
                    .zip(&other_outcome.direct.components)
                {
                    let _ = writeln!(
                        md,
                        "| {name} | {} | {:.4} | {:.4} |",
                        a.name, a.mean, b.mean
                    );
                }
            }
        }
        if other_reports.is_empty() {
            let _ = writeln!(md, "\n(no reports found in the comparison directory)");
        }
    }

    if !missing.is_empty() {
        let _ = writeln!(md, "\nmissing artifacts: {}\n", missing.join(", "));
    }
    std::fs::write(run.join("report.md"), &md)?;
    println!("report written to {}", run.join("report.md").display());
    if reports.is_empty() && timings.is_none() {
        return Err(Error::artifact(format!(
            "no run artifacts found in {run:?} (missing: {})",
            missing.join(", ")
        )));
    }
    Ok(())
}
