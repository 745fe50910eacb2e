//! End-to-end command line: generate moving-load response datasets, train
//! the operator network under one of four strategies, evaluate and
//! reconstruct, sweep hyperparameters, and emit report bundles.
//!
//! Exit codes: 0 success, 2 config/schema error, 3 numerical failure,
//! 4 artifact mismatch.

mod config;
mod report;

use clap::{Parser, Subcommand};
use config::RunConfig;
use movload::data::{generate_dataset, load_dataset, save_dataset, Dataset};
use movload::error::{Error, Result};
use movload::mionet::load_checkpoint;
use movload::training::{
    evaluate, reconstruct_history_from_preds, resolve_retained_nodes, sweep, train,
    PhysicsContext, Strategy, Timings,
};
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "movload",
    about = "Moving-load structural response surrogates: FEM data generation, operator-network training, Schur reconstruction and reports"
)]
struct Cli {
    /// JSON run configuration (defaults apply when omitted)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// master seed override
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// single-threaded numeric kernels, bitwise reproducible runs
    #[arg(long, global = true)]
    deterministic: bool,
    /// worker threads (0 = runtime default)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// training strategy override (dd-full | dd-pi-full | dd-pi-schur | dd-schur)
    #[arg(long, global = true)]
    strategy: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the scenario grid and persist the processed dataset
    GenerateData,
    /// Train a strategy on an existing dataset
    Train {
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Evaluate a checkpoint on a dataset split
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// test | train
        #[arg(long)]
        split: Option<String>,
        /// temporal refinement factor for the query grid
        #[arg(long)]
        grid_factor: Option<usize>,
    },
    /// Reconstruct full-domain responses and export field snapshots
    Reconstruct {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// snapshot times, s (comma separated)
        #[arg(long, value_delimiter = ',')]
        times: Option<Vec<f64>>,
        /// sample ids to reconstruct (defaults to the first test sample)
        #[arg(long, value_delimiter = ',')]
        samples: Option<Vec<usize>>,
    },
    /// One training run per hyperparameter grid point
    Sweep {
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Summarize a finished run directory
    Report {
        #[arg(long)]
        run: PathBuf,
        /// second run directory for a side-by-side comparison
        #[arg(long)]
        compare: Option<PathBuf>,
    },
}

fn main() {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => 2,
                Error::Numerical(_) => 3,
                Error::Artifact(_) | Error::Io(_) => 4,
            }
        }
    };
    std::process::exit(code);
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    cfg.apply_overrides(
        cli.seed,
        cli.deterministic,
        cli.threads,
        cli.strategy.as_deref(),
    )?;
    let threads = if cfg.deterministic { 1 } else { cfg.threads };
    if threads > 0 {
        // ignore the error if a pool already exists (repeated init)
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }

    match cli.command {
        Command::GenerateData => {
            let out = require_out(&cli.out)?;
            cmd_generate_data(&cfg, &out)
        }
        Command::Train { dataset } => {
            let out = require_out(&cli.out)?;
            cmd_train(&cfg, &dataset, &out)
        }
        Command::Evaluate { checkpoint, dataset, split, grid_factor } => {
            let out = require_out(&cli.out)?;
            let mut cfg = cfg;
            if let Some(s) = split {
                cfg.evaluation.split = s;
            }
            if let Some(g) = grid_factor {
                cfg.evaluation.grid_factor = g;
            }
            cmd_evaluate(&cfg, &checkpoint, &dataset, &out)
        }
        Command::Reconstruct { checkpoint, dataset, times, samples } => {
            let out = require_out(&cli.out)?;
            let mut cfg = cfg;
            if let Some(t) = times {
                cfg.evaluation.snapshot_times = t;
            }
            cmd_reconstruct(&cfg, &checkpoint, &dataset, &out, samples)
        }
        Command::Sweep { dataset } => {
            let out = require_out(&cli.out)?;
            cmd_sweep(&cfg, &dataset, &out)
        }
        Command::Report { run, compare } => report::cmd_report(&run, compare.as_deref()),
    }
}

fn require_out(out: &Option<PathBuf>) -> Result<PathBuf> {
    out.clone().ok_or_else(|| Error::config("--out DIR is required for this command"))
}

fn cmd_generate_data(cfg: &RunConfig, out: &Path) -> Result<()> {
    cfg.echo(out)?;
    let params = cfg.structure.truss_params()?;
    let (dataset, manifest) = generate_dataset(
        &params,
        cfg.structure.mass_model,
        cfg.structure.rayleigh,
        &cfg.generation,
    )?;
    let ds_dir = out.join("dataset");
    save_dataset(&dataset, &ds_dir)?;
    let manifest_json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::artifact(format!("manifest serialization failed: {e}")))?;
    std::fs::write(ds_dir.join("manifest.json"), &manifest_json)?;

    let mut csv = String::from(
        "sample,velocity,pattern,intensity,trimmed_duration,lambda,peak_response,sim_seconds\n",
    );
    for r in &manifest.rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{:e},{:e}\n",
            r.sample,
            r.velocity,
            r.pattern,
            r.intensity,
            r.trimmed_duration,
            r.lambda,
            r.peak_response,
            r.sim_seconds
        ));
    }
    std::fs::write(out.join("manifest.csv"), csv)?;

    // assembled matrices travel with the dataset
    let model = dataset.rebuild_model()?;
    let system =
        movload::fem::assemble_system(&model, dataset.mass_model, dataset.rayleigh)?;
    let mat_dir = ds_dir.join("matrices");
    let n = system.n_dofs();
    let mut meta = movload::container::ContainerMeta::new(
        "matrices",
        serde_json::json!({ "n_dof": n, "constrained_dofs": system.constrained_dofs }),
    );
    meta.arrays.push(movload::container::write_array(&mat_dir, "K", &[n, n], system.k.data())?);
    meta.arrays.push(movload::container::write_array(&mat_dir, "M", &[n, n], system.m.data())?);
    meta.arrays.push(movload::container::write_array(&mat_dir, "C", &[n, n], system.c.data())?);
    movload::container::write_meta(&mat_dir, &meta)?;

    println!(
        "generated {} samples ({} nodes, {} steps) -> {}",
        dataset.n_samples,
        dataset.n_nodes,
        dataset.n_t,
        ds_dir.display()
    );
    println!(
        "reference duration {:.4} s, fem {:.4} s/sample, worst equilibrium residual {:.2e}",
        manifest.ref_duration, manifest.fem_seconds_per_sample, manifest.equilibrium_residual
    );
    Ok(())
}

fn validate_dataset_matches(cfg: &RunConfig, dataset: &Dataset) -> Result<()> {
    let params = cfg.structure.truss_params()?;
    if params != dataset.structure {
        return Err(Error::artifact(
            "dataset was generated from a different structure than the config names",
        ));
    }
    Ok(())
}

fn cmd_train(cfg: &RunConfig, dataset_path: &Path, out: &Path) -> Result<()> {
    cfg.echo(out)?;
    let dataset = load_dataset(dataset_path)?;
    validate_dataset_matches(cfg, &dataset)?;
    let arch = cfg.arch.arch(
        dataset.branch_inputs.cols(),
        dataset.coords.cols(),
        dataset.n_components,
    )?;
    std::fs::create_dir_all(out)?;
    let outcome = train(&dataset, &arch, &cfg.training, Some(out))?;

    let ctx = if cfg.training.strategy.postprocess() {
        Some(PhysicsContext::new(&dataset, &outcome.node_subset, true)?)
    } else {
        None
    };
    let eval = evaluate(
        &outcome.params,
        &dataset,
        &dataset.test_idx,
        "test",
        &outcome.node_subset,
        ctx.as_ref(),
        1,
    )?;

    let fem_seconds = read_manifest_fem_seconds(dataset_path);
    let timings = Timings {
        train_seconds: outcome.timings.train_seconds,
        inference_seconds_per_sample: eval.timings.inference_seconds_per_sample,
        postprocess_seconds_per_sample: eval.timings.postprocess_seconds_per_sample,
        fem_seconds_per_sample: fem_seconds,
    };
    write_json(&out.join("error_report.json"), &eval)?;
    write_json(&out.join("timings.json"), &timings)?;
    write_json(
        &out.join("run_summary.json"),
        &serde_json::json!({
            "strategy": cfg.training.strategy.as_str(),
            "epochs": cfg.training.epochs,
            "w2_used": outcome.w2_used,
            "physics_normalizer": outcome.normalizer,
            "node_subset": outcome.node_subset,
            "dataset": dataset_path.to_string_lossy(),
        }),
    )?;
    println!(
        "trained {} for {} epochs in {:.1} s -> {}",
        cfg.training.strategy.as_str(),
        cfg.training.epochs,
        timings.train_seconds,
        out.display()
    );
    for comp in &eval.direct.components {
        println!(
            "  test {}: mean rel L2 {:.4} (std {:.4}, max {:.4})",
            comp.name, comp.mean, comp.std, comp.max
        );
    }
    if let Some(post) = &eval.postprocessed {
        for comp in &post.components {
            println!(
                "  post-processed {}: mean rel L2 {:.4} (max {:.4})",
                comp.name, comp.mean, comp.max
            );
        }
    }
    Ok(())
}

fn read_manifest_fem_seconds(dataset_path: &Path) -> Option<f64> {
    let text = std::fs::read_to_string(dataset_path.join("manifest.json")).ok()?;
    let v: serde_json::Value = serde_json::from_str(&text).ok()?;
    v.get("fem_seconds_per_sample")?.as_f64()
}

/// Strategy and node subset recorded in a checkpoint.
fn checkpoint_context(
    run_meta: &serde_json::Value,
    dataset: &Dataset,
    cfg: &RunConfig,
) -> Result<(Strategy, Vec<usize>)> {
    let strategy: Strategy = run_meta
        .get("strategy")
        .and_then(|s| s.as_str())
        .unwrap_or(cfg.training.strategy.as_str())
        .parse()?;
    let node_subset: Vec<usize> = match run_meta.get("node_subset") {
        Some(v) => serde_json::from_value(v.clone())
            .map_err(|e| Error::artifact(format!("checkpoint node subset malformed: {e}")))?,
        None => {
            if strategy.schur_domain() {
                resolve_retained_nodes(dataset, &cfg.training)?
            } else {
                (0..dataset.n_nodes).collect()
            }
        }
    };
    for &n in &node_subset {
        if n >= dataset.n_nodes {
            return Err(Error::artifact("checkpoint node subset does not fit the dataset"));
        }
    }
    Ok((strategy, node_subset))
}

fn split_ids<'a>(dataset: &'a Dataset, name: &str) -> Result<&'a [usize]> {
    match name {
        "test" => Ok(&dataset.test_idx),
        "train" => Ok(&dataset.train_idx),
        other => Err(Error::config(format!("unknown split `{other}`"))),
    }
}

fn cmd_evaluate(cfg: &RunConfig, checkpoint: &Path, dataset_path: &Path, out: &Path) -> Result<()> {
    cfg.echo(out)?;
    let dataset = load_dataset(dataset_path)?;
    let (params, run_meta) = load_checkpoint(checkpoint)?;
    let (strategy, node_subset) = checkpoint_context(&run_meta, &dataset, cfg)?;
    let ids = split_ids(&dataset, &cfg.evaluation.split)?;
    let ctx = if strategy.postprocess() {
        Some(PhysicsContext::new(&dataset, &node_subset, true)?)
    } else {
        None
    };
    let eval = evaluate(
        &params,
        &dataset,
        ids,
        &cfg.evaluation.split,
        &node_subset,
        ctx.as_ref(),
        cfg.evaluation.grid_factor.max(1),
    )?;
    let name = format!("error_report.{}.json", cfg.evaluation.split);
    write_json(&out.join(name), &eval)?;
    println!(
        "evaluated {} on {} split ({} samples, grid factor {})",
        strategy.as_str(),
        cfg.evaluation.split,
        ids.len(),
        cfg.evaluation.grid_factor.max(1)
    );
    for comp in &eval.direct.components {
        println!("  {}: mean rel L2 {:.4}", comp.name, comp.mean);
    }
    Ok(())
}

fn cmd_reconstruct(
    cfg: &RunConfig,
    checkpoint: &Path,
    dataset_path: &Path,
    out: &Path,
    samples: Option<Vec<usize>>,
) -> Result<()> {
    cfg.echo(out)?;
    let dataset = load_dataset(dataset_path)?;
    let (params, run_meta) = load_checkpoint(checkpoint)?;
    let (strategy, node_subset) = checkpoint_context(&run_meta, &dataset, cfg)?;
    let sample_ids = samples.unwrap_or_else(|| vec![dataset.test_idx[0]]);
    for &sid in &sample_ids {
        if sid >= dataset.n_samples {
            return Err(Error::config(format!("sample {sid} out of range")));
        }
    }

    let coords = movload::linalg::Matrix::from_fn(node_subset.len(), 2, |r, c| {
        dataset.coords[(node_subset[r], c)]
    });
    let branch_raw = movload::linalg::Matrix::from_fn(
        sample_ids.len(),
        dataset.branch_inputs.cols(),
        |r, c| dataset.branch_inputs[(sample_ids[r], c)],
    );
    let branch = dataset.scalers.scale_inputs(&branch_raw);
    let preds = movload::mionet::predict(&params, &branch, &coords, &dataset.time_grid)?;

    // full-domain predictions: reconstruction for Schur strategies, direct
    // network output otherwise
    let len = dataset.n_t * dataset.n_nodes * dataset.n_components;
    let mut full = vec![vec![0.0; len]; sample_ids.len()];
    let mut vel: Vec<Option<Vec<f64>>> = vec![None; sample_ids.len()];
    let mut acc: Vec<Option<Vec<f64>>> = vec![None; sample_ids.len()];
    if strategy.postprocess() {
        let ctx = PhysicsContext::new(&dataset, &node_subset, true)?;
        for (row, &sid) in sample_ids.iter().enumerate() {
            let (u, v, a) = reconstruct_history_from_preds(&preds, row, sid, &dataset, &ctx)?;
            full[row] = u;
            vel[row] = Some(v);
            acc[row] = Some(a);
        }
    } else {
        for (row, _) in sample_ids.iter().enumerate() {
            for t in 0..dataset.n_t {
                for (pos, &node) in node_subset.iter().enumerate() {
                    for k in 0..dataset.n_components {
                        full[row][(t * dataset.n_nodes + node) * dataset.n_components + k] =
                            dataset.scalers.unscale_output(preds.get(row, t, pos, k), k);
                    }
                }
            }
        }
    }

    // field snapshots: per-node actual / predicted / |error| at the grid
    // point nearest each requested time
    std::fs::create_dir_all(out)?;
    for &snap in &cfg.evaluation.snapshot_times {
        let t_idx = dataset
            .time_grid
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - snap).abs().partial_cmp(&(b.1 - snap).abs()).unwrap())
            .map(|(i, _)| i)
            .unwrap_or(0);
        let mut csv = String::from("sample,node,x,y,component,actual,predicted,abs_error\n");
        for (row, &sid) in sample_ids.iter().enumerate() {
            for node in 0..dataset.n_nodes {
                for k in 0..dataset.n_components {
                    let actual = dataset.target(sid, t_idx, node, k);
                    let predicted =
                        full[row][(t_idx * dataset.n_nodes + node) * dataset.n_components + k];
                    csv.push_str(&format!(
                        "{},{},{},{},{},{:e},{:e},{:e}\n",
                        sid,
                        node,
                        dataset.coords[(node, 0)],
                        dataset.coords[(node, 1)],
                        ["Ux", "Uy", "Rz"][k.min(2)],
                        actual,
                        predicted,
                        (actual - predicted).abs()
                    ));
                }
            }
        }
        let tag = format!("{:.4}", dataset.time_grid[t_idx]).replace('.', "p");
        std::fs::write(out.join(format!("snapshot_t{tag}.csv")), csv)?;
    }

    // reconstructed histories in the response container layout
    for (row, &sid) in sample_ids.iter().enumerate() {
        let dir = out.join(format!("reconstructed-{sid:04}"));
        let n = dataset.n_nodes * dataset.n_components;
        let mut meta = movload::container::ContainerMeta::new(
            "response",
            serde_json::json!({
                "sample": sid,
                "dt": dataset.dt_ref(),
                "lambda": dataset.lambda[sid],
                "alpha_hht": dataset.alpha_hht,
                "scenario": dataset.scenarios[sid],
                "strategy": strategy.as_str(),
            }),
        );
        meta.arrays.push(movload::container::write_array(
            &dir,
            "u",
            &[dataset.n_t, n],
            &full[row],
        )?);
        if let (Some(v), Some(a)) = (&vel[row], &acc[row]) {
            meta.arrays
                .push(movload::container::write_array(&dir, "v", &[dataset.n_t, n], v)?);
            meta.arrays
                .push(movload::container::write_array(&dir, "a", &[dataset.n_t, n], a)?);
        }
        movload::container::write_meta(&dir, &meta)?;
    }
    println!(
        "reconstructed {} sample(s) at {} snapshot time(s) -> {}",
        sample_ids.len(),
        cfg.evaluation.snapshot_times.len(),
        out.display()
    );
    Ok(())
}

fn cmd_sweep(cfg: &RunConfig, dataset_path: &Path, out: &Path) -> Result<()> {
    cfg.echo(out)?;
    let dataset = load_dataset(dataset_path)?;
    validate_dataset_matches(cfg, &dataset)?;
    let points = sweep(
        &dataset,
        cfg.arch.neurons,
        cfg.arch.layers,
        cfg.arch.activation()?,
        &cfg.training,
        &cfg.sweep.axes,
        cfg.sweep.epochs,
    )?;
    let mut csv = String::from("axis,value,mean_rel_l2,std_rel_l2,train_minutes,status\n");
    for p in &points {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            p.axis, p.value, p.mean_rel_l2, p.std_rel_l2, p.train_minutes, p.status
        ));
    }
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("sweep.csv"), &csv)?;
    write_json(&out.join("sweep.json"), &points)?;
    println!("swept {} grid points -> {}", points.len(), out.display());
    Ok(())
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let json = serde_json::to_string_pretty(value)
        .map_err(|e| Error::artifact(format!("serialization failed: {e}")))?;
    std::fs::write(path, json)?;
    Ok(())
}
