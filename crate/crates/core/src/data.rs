//! Data pipeline: trim near-zero response tails, align scenarios of
//! different speeds onto one reference grid via stretch factors, resample,
//! assemble operator-learning datasets, and persist them bit-exactly.

use crate::container;
use crate::dynamics::{
    moving_load_history, simulate, IntegratorConfig, MovingLoadScenario, ResponseHistory,
};
use crate::error::{Error, Result};
use crate::fem::{
    assemble_system, build_truss_model, MassModel, RayleighCoefficients, StructureModel,
    TrussParams,
};
use crate::linalg::Matrix;
use crate::rng::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::time::Instant;

/// Keep steps up to the step immediately preceding the first run of
/// `consecutive` steps whose max-abs monitored component (over all nodes)
/// stays below `threshold`. The scan starts at the series peak so that the
/// quiet ramp-in of a transient is never mistaken for its tail. Returns the
/// input unchanged when no qualifying run exists.
pub fn trim_tail(
    history: &ResponseHistory,
    threshold: f64,
    consecutive: usize,
    component: usize,
) -> Result<ResponseHistory> {
    if history.n_steps() == 0 {
        return Err(Error::numerical("trim_tail: empty history"));
    }
    if threshold <= 0.0 || consecutive == 0 {
        return Err(Error::config("trim_tail: threshold and consecutive must be positive"));
    }
    if component >= 3 {
        return Err(Error::config("trim_tail: component must be 0, 1 or 2"));
    }
    let n_t = history.n_steps();
    let n_nodes = history.n_dofs() / 3;
    let series: Vec<f64> = (0..n_t)
        .map(|t| {
            (0..n_nodes)
                .map(|n| history.u[(t, 3 * n + component)].abs())
                .fold(0.0, f64::max)
        })
        .collect();
    let peak = series
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap_or(0);

    let mut run = 0usize;
    let mut cut: Option<usize> = None;
    for (t, &s) in series.iter().enumerate().skip(peak) {
        if s < threshold {
            run += 1;
            if run == consecutive {
                cut = Some(t + 1 - consecutive);
                break;
            }
        } else {
            run = 0;
        }
    }
    let keep = match cut {
        None => n_t,
        Some(c) => c.max(1),
    };
    Ok(slice_history(history, keep))
}

/// Keep exactly the first `steps` steps of a history.
pub fn trim_to_steps(history: &ResponseHistory, steps: usize) -> ResponseHistory {
    slice_history(history, steps)
}

fn slice_history(history: &ResponseHistory, keep: usize) -> ResponseHistory {
    let keep = keep.min(history.n_steps());
    let n = history.n_dofs();
    let copy = |m: &Matrix| {
        let mut out = Matrix::zeros(keep, n);
        for t in 0..keep {
            out.row_mut(t).copy_from_slice(m.row(t));
        }
        out
    };
    ResponseHistory {
        times: history.times[..keep].to_vec(),
        u: copy(&history.u),
        v: copy(&history.v),
        a: copy(&history.a),
        dt: history.dt,
        lambda: history.lambda,
        scenario: history.scenario.clone(),
    }
}

/// lambda = reference duration / actual duration.
pub fn stretch_factor(reference_duration: f64, actual_duration: f64) -> Result<f64> {
    if reference_duration <= 0.0 || actual_duration <= 0.0 {
        return Err(Error::config("stretch_factor: durations must be positive"));
    }
    Ok(reference_duration / actual_duration)
}

/// Linear resampling of u, v, a onto a uniform grid of `n_steps` points
/// spanning the source duration. Endpoints are copied exactly.
pub fn resample(history: &ResponseHistory, n_steps: usize) -> Result<ResponseHistory> {
    let m = history.n_steps();
    if m < 2 {
        return Err(Error::numerical("resample: source needs at least 2 steps"));
    }
    if n_steps < 2 {
        return Err(Error::config("resample: target needs at least 2 steps"));
    }
    let n = history.n_dofs();
    let duration = history.duration();
    let dt_new = duration / (n_steps - 1) as f64;
    let mut out = ResponseHistory {
        times: (0..n_steps).map(|j| j as f64 * dt_new).collect(),
        u: Matrix::zeros(n_steps, n),
        v: Matrix::zeros(n_steps, n),
        a: Matrix::zeros(n_steps, n),
        dt: dt_new,
        lambda: history.lambda,
        scenario: history.scenario.clone(),
    };
    for j in 0..n_steps {
        let (i0, w) = if j == 0 {
            (0usize, 0.0)
        } else if j == n_steps - 1 {
            (m - 1, 0.0)
        } else {
            let pos = j as f64 * (m - 1) as f64 / (n_steps - 1) as f64;
            let i = (pos.floor() as usize).min(m - 2);
            (i, pos - i as f64)
        };
        for (dst, src) in [
            (&mut out.u, &history.u),
            (&mut out.v, &history.v),
            (&mut out.a, &history.a),
        ] {
            let row = dst.row_mut(j);
            if w == 0.0 {
                row.copy_from_slice(src.row(i0));
            } else {
                let lo = src.row(i0);
                let hi = src.row(i0 + 1);
                for d in 0..n {
                    row[d] = (1.0 - w) * lo[d] + w * hi[d];
                }
            }
        }
    }
    Ok(out)
}

/// Input standardization (per feature) and per-component max-abs output
/// scaling, both fitted on the training split only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub input_shift: Vec<f64>,
    pub input_scale: Vec<f64>,
    pub output_scale: Vec<f64>,
    /// set when a scale had to be floored (degenerate statistics)
    pub degenerate: bool,
}

const SCALE_FLOOR: f64 = 1e-12;

impl ScalerParams {
    pub fn fit(
        branch: &Matrix,
        targets: &[f64],
        dims: (usize, usize, usize, usize),
        train_idx: &[usize],
    ) -> Result<ScalerParams> {
        if train_idx.is_empty() {
            return Err(Error::config("scaler fit: empty training split"));
        }
        let n_b = branch.cols();
        let (_, n_t, n_nodes, n_out) = dims;
        let count = train_idx.len() as f64;
        let mut shift = vec![0.0; n_b];
        let mut scale = vec![0.0; n_b];
        let mut degenerate = false;
        for f in 0..n_b {
            let mean = train_idx.iter().map(|&s| branch[(s, f)]).sum::<f64>() / count;
            let var = train_idx
                .iter()
                .map(|&s| (branch[(s, f)] - mean).powi(2))
                .sum::<f64>()
                / count;
            let mut sd = var.sqrt();
            if sd < SCALE_FLOOR {
                sd = 1.0;
                degenerate = true;
            }
            shift[f] = mean;
            scale[f] = sd;
        }
        let sample_len = n_t * n_nodes * n_out;
        let mut out_scale = vec![0.0f64; n_out];
        for &s in train_idx {
            let base = s * sample_len;
            for i in 0..sample_len {
                let comp = i % n_out;
                out_scale[comp] = out_scale[comp].max(targets[base + i].abs());
            }
        }
        for s in &mut out_scale {
            if *s < SCALE_FLOOR {
                *s = SCALE_FLOOR;
                degenerate = true;
            }
        }
        Ok(ScalerParams {
            input_shift: shift,
            input_scale: scale,
            output_scale: out_scale,
            degenerate,
        })
    }

    pub fn scale_inputs(&self, raw: &Matrix) -> Matrix {
        let mut out = raw.clone();
        for i in 0..out.rows() {
            let row = out.row_mut(i);
            for (f, x) in row.iter_mut().enumerate() {
                *x = (*x - self.input_shift[f]) / self.input_scale[f];
            }
        }
        out
    }

    pub fn unscale_inputs(&self, scaled: &Matrix) -> Matrix {
        let mut out = scaled.clone();
        for i in 0..out.rows() {
            let row = out.row_mut(i);
            for (f, x) in row.iter_mut().enumerate() {
                *x = *x * self.input_scale[f] + self.input_shift[f];
            }
        }
        out
    }

    pub fn scale_output(&self, value: f64, component: usize) -> f64 {
        value / self.output_scale[component]
    }

    pub fn unscale_output(&self, value: f64, component: usize) -> f64 {
        value * self.output_scale[component]
    }
}

/// Operator-learning dataset: raw branch inputs (velocity + padded axle
/// intensities), spatial coordinates, reference time grid, response targets
/// and per-sample stretch factors, plus the split and scalers fitted on the
/// training part. Tensors are stored in raw physical units; scaling is
/// applied at training time.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub branch_inputs: Matrix,
    pub coords: Matrix,
    pub time_grid: Vec<f64>,
    /// flat [sample][time][node][component]
    pub targets: Vec<f64>,
    pub n_samples: usize,
    pub n_t: usize,
    pub n_nodes: usize,
    pub n_components: usize,
    pub lambda: Vec<f64>,
    pub scalers: ScalerParams,
    pub train_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
    pub node_ids: Vec<usize>,
    pub scenarios: Vec<MovingLoadScenario>,
    pub ref_duration: f64,
    pub dt_native: f64,
    pub split_seed: u64,
    pub structure: TrussParams,
    pub mass_model: MassModel,
    pub rayleigh: RayleighCoefficients,
    pub alpha_hht: f64,
}

impl Dataset {
    pub fn target(&self, sample: usize, t: usize, node: usize, comp: usize) -> f64 {
        self.targets[((sample * self.n_t + t) * self.n_nodes + node) * self.n_components + comp]
    }

    pub fn sample_len(&self) -> usize {
        self.n_t * self.n_nodes * self.n_components
    }

    pub fn sample_targets(&self, sample: usize) -> &[f64] {
        let len = self.sample_len();
        &self.targets[sample * len..(sample + 1) * len]
    }

    pub fn dt_ref(&self) -> f64 {
        self.ref_duration / (self.n_t - 1) as f64
    }

    /// Rebuild the structural model this dataset was generated from.
    pub fn rebuild_model(&self) -> Result<StructureModel> {
        build_truss_model(&self.structure)
    }

    /// Per-sample force history on the reference grid: physical forces
    /// sampled at t_phys = tau / lambda.
    pub fn force_history(&self, model: &StructureModel, sample: usize) -> Result<Matrix> {
        let scenario = &self.scenarios[sample];
        let dt_phys = self.dt_ref() / self.lambda[sample];
        moving_load_history(model, scenario, dt_phys, self.n_t)
    }

    pub fn validate(&self) -> Result<()> {
        let expect = self.n_samples * self.sample_len();
        if self.targets.len() != expect {
            return Err(Error::artifact("dataset: target tensor shape mismatch"));
        }
        if self.branch_inputs.rows() != self.n_samples
            || self.lambda.len() != self.n_samples
            || self.scenarios.len() != self.n_samples
        {
            return Err(Error::artifact("dataset: per-sample table shape mismatch"));
        }
        if self.coords.rows() != self.n_nodes || self.node_ids.len() != self.n_nodes {
            return Err(Error::artifact("dataset: node table shape mismatch"));
        }
        if self.time_grid.len() != self.n_t {
            return Err(Error::artifact("dataset: time grid shape mismatch"));
        }
        for w in self.time_grid.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::artifact("dataset: time grid not increasing"));
            }
        }
        Ok(())
    }
}

/// Multi-axle load layouts applied to the base intensity, following the
/// train-configuration patterns: a single patch, or several patches with
/// uniform, front-loaded or rear-loaded intensity ramps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AxlePattern {
    Single,
    Uniform { axles: usize, spacing: f64 },
    Increasing { axles: usize, spacing: f64 },
    Decreasing { axles: usize, spacing: f64 },
}

impl AxlePattern {
    pub fn axle_count(&self) -> usize {
        match self {
            AxlePattern::Single => 1,
            AxlePattern::Uniform { axles, .. }
            | AxlePattern::Increasing { axles, .. }
            | AxlePattern::Decreasing { axles, .. } => *axles,
        }
    }

    /// (loads, offsets) for a base intensity.
    pub fn expand(&self, intensity: f64) -> (Vec<f64>, Vec<f64>) {
        match *self {
            AxlePattern::Single => (vec![intensity], vec![0.0]),
            AxlePattern::Uniform { axles, spacing } => (
                vec![intensity; axles],
                (0..axles).map(|i| i as f64 * spacing).collect(),
            ),
            AxlePattern::Increasing { axles, spacing } => (
                (0..axles)
                    .map(|i| intensity * (i + 1) as f64 / axles as f64)
                    .collect(),
                (0..axles).map(|i| i as f64 * spacing).collect(),
            ),
            AxlePattern::Decreasing { axles, spacing } => (
                (0..axles)
                    .map(|i| intensity * (axles - i) as f64 / axles as f64)
                    .collect(),
                (0..axles).map(|i| i as f64 * spacing).collect(),
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerationConfig {
    pub velocities: Vec<f64>,
    pub samples_per_group: usize,
    /// N/m
    pub intensity_range: (f64, f64),
    pub load_length: f64,
    pub axle_patterns: Vec<AxlePattern>,
    /// native simulation duration, s (extended automatically when a slow
    /// scenario needs longer to traverse)
    pub duration: f64,
    /// native step, s
    pub dt: f64,
    pub alpha_hht: f64,
    pub trim_threshold: f64,
    pub trim_consecutive: usize,
    /// monitored component for trimming: 0=ux, 1=uy, 2=rz
    pub trim_component: usize,
    /// share one trimmed duration per (velocity, pattern) group
    pub group_trim: bool,
    pub target_steps: usize,
    pub train_ratio: f64,
    pub seed: u64,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            velocities: vec![10.0, 15.0, 20.0, 25.0],
            samples_per_group: 50,
            intensity_range: (5_000.0, 30_000.0),
            load_length: 2.0,
            axle_patterns: vec![AxlePattern::Single],
            duration: 2.5,
            dt: 0.01,
            alpha_hht: -0.05,
            trim_threshold: 1e-6,
            trim_consecutive: 3,
            trim_component: 1,
            group_trim: true,
            target_steps: 56,
            train_ratio: 0.3,
            seed: 7,
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.velocities.is_empty() || self.axle_patterns.is_empty() || self.samples_per_group == 0
        {
            return Err(Error::config("empty scenario grid"));
        }
        if self.velocities.iter().any(|&v| v <= 0.0) {
            return Err(Error::config("velocities must be positive"));
        }
        if self.intensity_range.0 <= 0.0 || self.intensity_range.1 < self.intensity_range.0 {
            return Err(Error::config("invalid intensity range"));
        }
        if self.dt <= 0.0 || self.duration <= 0.0 {
            return Err(Error::config("dt and duration must be positive"));
        }
        if self.target_steps < 2 {
            return Err(Error::config("target_steps must be at least 2"));
        }
        if !(0.0..1.0).contains(&self.train_ratio) || self.train_ratio == 0.0 {
            return Err(Error::config("train ratio must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// One manifest row per generated sample.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestRow {
    pub sample: usize,
    pub velocity: f64,
    pub pattern: usize,
    pub intensity: f64,
    pub trimmed_duration: f64,
    pub lambda: f64,
    pub peak_response: f64,
    pub sim_seconds: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenerationManifest {
    pub rows: Vec<ManifestRow>,
    pub ref_duration: f64,
    pub fem_seconds_per_sample: f64,
    /// worst per-step equilibrium residual of the native-grid simulations
    pub equilibrium_residual: f64,
    /// informational: mean squared equilibrium residual of the resampled
    /// targets on the reference grid, relative to the effective-force
    /// norm. Linear interpolation breaks exact equilibrium, so this is
    /// reported rather than asserted.
    pub resampled_residual: f64,
}

/// Simulate the scenario grid, trim, stretch, resample and assemble the
/// dataset. Scenario simulations fan out across the rayon pool; results are
/// collected in grid order so output is independent of scheduling.
pub fn generate_dataset(
    params: &TrussParams,
    mass_model: MassModel,
    rayleigh: RayleighCoefficients,
    config: &GenerationConfig,
) -> Result<(Dataset, GenerationManifest)> {
    config.validate()?;
    let model = build_truss_model(params)?;
    let system = assemble_system(&model, mass_model, rayleigh)?;
    let span = model.bottom_chord_nodes().last().map(|&n| model.nodes[n].x).unwrap_or(0.0);

    // scenario grid with seeded intensities
    let mut rng = Rng::new(config.seed);
    let max_axles = config.axle_patterns.iter().map(|p| p.axle_count()).max().unwrap();
    struct Job {
        scenario: MovingLoadScenario,
        velocity: f64,
        pattern: usize,
        intensity: f64,
        group: usize,
    }
    let mut jobs = Vec::new();
    for (pi, pattern) in config.axle_patterns.iter().enumerate() {
        for (vi, &velocity) in config.velocities.iter().enumerate() {
            for _ in 0..config.samples_per_group {
                let intensity = rng.range(config.intensity_range.0, config.intensity_range.1);
                let (axle_loads, axle_offsets) = pattern.expand(intensity);
                let scenario = MovingLoadScenario {
                    velocity,
                    axle_loads,
                    axle_offsets,
                    load_length: config.load_length,
                    path: (0.0, span),
                };
                jobs.push(Job {
                    scenario,
                    velocity,
                    pattern: pi,
                    intensity,
                    group: pi * config.velocities.len() + vi,
                });
            }
        }
    }
    let n_samples = jobs.len();

    let integrator = IntegratorConfig::new(config.alpha_hht, config.dt)?;
    let sim_results: Vec<Result<(ResponseHistory, f64, f64)>> = jobs
        .par_iter()
        .map(|job| {
            let start = Instant::now();
            let duration = config.duration.max(job.scenario.traversal_time() + 0.3);
            let n_steps = (duration / config.dt).round() as usize + 1;
            let forces = moving_load_history(&model, &job.scenario, config.dt, n_steps)?;
            let hist = simulate(&system, &forces, &integrator, Some(job.scenario.clone()))?;
            let residual = sample_equilibrium_residual(&system, &forces, &hist, &integrator)?;
            Ok((hist, start.elapsed().as_secs_f64(), residual))
        })
        .collect();

    let mut histories = Vec::with_capacity(n_samples);
    let mut sim_seconds = Vec::with_capacity(n_samples);
    let mut worst_residual = 0.0f64;
    for (i, r) in sim_results.into_iter().enumerate() {
        match r {
            Ok((h, secs, res)) => {
                histories.push(h);
                sim_seconds.push(secs);
                worst_residual = worst_residual.max(res);
            }
            Err(e) => {
                return Err(Error::numerical(format!(
                    "scenario {} (v={}, intensity={}) failed: {e}",
                    i, jobs[i].velocity, jobs[i].intensity
                )))
            }
        }
    }

    // trim, optionally sharing the longest duration inside each group
    let mut trimmed: Vec<ResponseHistory> = Vec::with_capacity(n_samples);
    for h in &histories {
        trimmed.push(trim_tail(h, config.trim_threshold, config.trim_consecutive, config.trim_component)?);
    }
    if config.group_trim {
        let n_groups = config.axle_patterns.len() * config.velocities.len();
        let mut group_steps = vec![0usize; n_groups];
        for (job, t) in jobs.iter().zip(&trimmed) {
            group_steps[job.group] = group_steps[job.group].max(t.n_steps());
        }
        for (i, job) in jobs.iter().enumerate() {
            let steps = group_steps[job.group];
            if histories[i].n_steps() < steps {
                return Err(Error::numerical("group trim exceeds simulated duration"));
            }
            trimmed[i] = slice_history(&histories[i], steps);
        }
    }

    let ref_duration = trimmed.iter().map(|h| h.duration()).fold(0.0, f64::max);
    if ref_duration <= 0.0 {
        return Err(Error::numerical("all responses trimmed to nothing"));
    }

    // resample to the shared step count and record stretch factors
    let n_t = config.target_steps;
    let n_nodes = model.n_nodes();
    let n_out = 3;
    let mut targets = vec![0.0f64; n_samples * n_t * n_nodes * n_out];
    let mut lambda = Vec::with_capacity(n_samples);
    let mut rows = Vec::with_capacity(n_samples);
    for (i, t) in trimmed.iter().enumerate() {
        let dur = t.duration();
        let lam = stretch_factor(ref_duration, dur)?;
        let rs = resample(t, n_t)?;
        lambda.push(lam);
        let peak = rs.u.max_abs();
        rows.push(ManifestRow {
            sample: i,
            velocity: jobs[i].velocity,
            pattern: jobs[i].pattern,
            intensity: jobs[i].intensity,
            trimmed_duration: dur,
            lambda: lam,
            peak_response: peak,
            sim_seconds: sim_seconds[i],
        });
        for step in 0..n_t {
            for node in 0..n_nodes {
                for comp in 0..n_out {
                    targets[((i * n_t + step) * n_nodes + node) * n_out + comp] =
                        rs.u[(step, 3 * node + comp)];
                }
            }
        }
    }

    let mut branch = Matrix::zeros(n_samples, 1 + max_axles);
    for (i, job) in jobs.iter().enumerate() {
        branch[(i, 0)] = job.velocity;
        for (a, &q) in job.scenario.axle_loads.iter().enumerate() {
            branch[(i, 1 + a)] = q;
        }
    }

    let mut coords = Matrix::zeros(n_nodes, 2);
    for (n, node) in model.nodes.iter().enumerate() {
        coords[(n, 0)] = node.x;
        coords[(n, 1)] = node.y;
    }

    // seeded split
    let mut split_rng = Rng::new(config.seed ^ 0x5eed_5011d);
    let mut order: Vec<usize> = (0..n_samples).collect();
    split_rng.shuffle(&mut order);
    let n_train = ((n_samples as f64) * config.train_ratio).round().max(1.0) as usize;
    let train_idx: Vec<usize> = order[..n_train].to_vec();
    let test_idx: Vec<usize> = order[n_train..].to_vec();
    if test_idx.is_empty() {
        return Err(Error::config("train ratio leaves no test samples"));
    }

    let scalers = ScalerParams::fit(&branch, &targets, (n_samples, n_t, n_nodes, n_out), &train_idx)?;
    let dt_ref = ref_duration / (n_t - 1) as f64;
    let dataset = Dataset {
        branch_inputs: branch,
        coords,
        time_grid: (0..n_t).map(|j| j as f64 * dt_ref).collect(),
        targets,
        n_samples,
        n_t,
        n_nodes,
        n_components: n_out,
        lambda,
        scalers,
        train_idx,
        test_idx,
        node_ids: (0..n_nodes).collect(),
        scenarios: jobs.into_iter().map(|j| j.scenario).collect(),
        ref_duration,
        dt_native: config.dt,
        split_seed: config.seed,
        structure: *params,
        mass_model,
        rayleigh,
        alpha_hht: config.alpha_hht,
    };
    dataset.validate()?;
    let fem_seconds_per_sample = sim_seconds.iter().sum::<f64>() / n_samples as f64;
    let resampled_residual = resampled_equilibrium_residual(&dataset, &system)?;
    Ok((
        dataset,
        GenerationManifest {
            rows,
            ref_duration,
            fem_seconds_per_sample,
            equilibrium_residual: worst_residual,
            resampled_residual,
        },
    ))
}

/// Mean ratio of residual to effective-force energy when the resampled
/// targets are pushed back through the stretched one-step equilibrium.
fn resampled_equilibrium_residual(
    dataset: &Dataset,
    system: &crate::fem::AssembledSystem,
) -> Result<f64> {
    use std::collections::HashMap;
    let dt_ref = dataset.dt_ref();
    let model = dataset.rebuild_model()?;
    let mut systems: HashMap<u64, crate::training::PiSystem> = HashMap::new();
    let mut total = 0.0;
    for sid in 0..dataset.n_samples {
        let lam = dataset.lambda[sid];
        let sys = match systems.entry(lam.to_bits()) {
            std::collections::hash_map::Entry::Occupied(e) => e.into_mut(),
            std::collections::hash_map::Entry::Vacant(e) => {
                let cfg = IntegratorConfig::with_lambda(dataset.alpha_hht, dt_ref, lam)?;
                e.insert(crate::training::PiSystem::new(
                    system.m_ff(),
                    system.c_ff(),
                    system.k_ff(),
                    &cfg,
                )?)
            }
        };
        let forces_full = dataset.force_history(&model, sid)?;
        let nf = system.n_free();
        let mut forces = Matrix::zeros(dataset.n_t, nf);
        let mut u = Matrix::zeros(dataset.n_t, nf);
        for t in 0..dataset.n_t {
            let src = forces_full.row(t);
            let dst = forces.row_mut(t);
            for (i, &d) in system.free_dofs.iter().enumerate() {
                dst[i] = src[d];
            }
            let urow = u.row_mut(t);
            for s in 0..dataset.n_nodes {
                for comp in 0..dataset.n_components {
                    if let Some(fi) = system.free_index_of(3 * dataset.node_ids[s] + comp) {
                        urow[fi] = dataset.target(sid, t, s, comp);
                    }
                }
            }
        }
        let eval = crate::training::pi_full_eval(sys, &u, &forces, false, false);
        total += eval.residual_sq / eval.force_sq.max(1e-300);
    }
    Ok(total / dataset.n_samples.max(1) as f64)
}

fn sample_equilibrium_residual(
    system: &crate::fem::AssembledSystem,
    forces_full: &Matrix,
    hist: &ResponseHistory,
    config: &IntegratorConfig,
) -> Result<f64> {
    let n_t = hist.n_steps();
    let nf = system.n_free();
    let mut forces = Matrix::zeros(n_t, nf);
    let mut u = Matrix::zeros(n_t, nf);
    let mut v = Matrix::zeros(n_t, nf);
    let mut a = Matrix::zeros(n_t, nf);
    for t in 0..n_t {
        for (i, &d) in system.free_dofs.iter().enumerate() {
            forces[(t, i)] = forces_full[(t, d)];
            u[(t, i)] = hist.u[(t, d)];
            v[(t, i)] = hist.v[(t, d)];
            a[(t, i)] = hist.a[(t, d)];
        }
    }
    crate::dynamics::equilibrium_residual(
        system.m_ff(),
        system.c_ff(),
        system.k_ff(),
        &forces,
        &u,
        &v,
        &a,
        config,
    )
}

#[derive(Serialize, Deserialize)]
struct DatasetExtra {
    n_samples: usize,
    n_t: usize,
    n_nodes: usize,
    n_components: usize,
    scalers: ScalerParams,
    train_idx: Vec<usize>,
    test_idx: Vec<usize>,
    node_ids: Vec<usize>,
    scenarios: Vec<MovingLoadScenario>,
    ref_duration: f64,
    dt_native: f64,
    split_seed: u64,
    structure: TrussParams,
    mass_model: MassModel,
    rayleigh: RayleighCoefficients,
    alpha_hht: f64,
}

pub fn save_dataset(dataset: &Dataset, dir: &Path) -> Result<()> {
    dataset.validate()?;
    let extra = DatasetExtra {
        n_samples: dataset.n_samples,
        n_t: dataset.n_t,
        n_nodes: dataset.n_nodes,
        n_components: dataset.n_components,
        scalers: dataset.scalers.clone(),
        train_idx: dataset.train_idx.clone(),
        test_idx: dataset.test_idx.clone(),
        node_ids: dataset.node_ids.clone(),
        scenarios: dataset.scenarios.clone(),
        ref_duration: dataset.ref_duration,
        dt_native: dataset.dt_native,
        split_seed: dataset.split_seed,
        structure: dataset.structure,
        mass_model: dataset.mass_model,
        rayleigh: dataset.rayleigh,
        alpha_hht: dataset.alpha_hht,
    };
    let extra_json = serde_json::to_value(&extra)
        .map_err(|e| Error::artifact(format!("dataset metadata serialization failed: {e}")))?;
    let mut meta = container::ContainerMeta::new("dataset", extra_json);
    meta.arrays.push(container::write_array(
        dir,
        "branch",
        &[dataset.n_samples, dataset.branch_inputs.cols()],
        dataset.branch_inputs.data(),
    )?);
    meta.arrays.push(container::write_array(
        dir,
        "coords",
        &[dataset.n_nodes, 2],
        dataset.coords.data(),
    )?);
    meta.arrays
        .push(container::write_array(dir, "time", &[dataset.n_t], &dataset.time_grid)?);
    meta.arrays.push(container::write_array(
        dir,
        "targets",
        &[dataset.n_samples, dataset.n_t, dataset.n_nodes, dataset.n_components],
        &dataset.targets,
    )?);
    meta.arrays
        .push(container::write_array(dir, "lambda", &[dataset.n_samples], &dataset.lambda)?);
    container::write_meta(dir, &meta)
}

/// Shapes and metadata without loading the tensors.
pub fn load_dataset_shapes(dir: &Path) -> Result<Vec<(String, Vec<usize>)>> {
    let meta = container::read_meta(dir)?;
    if meta.kind != "dataset" {
        return Err(Error::artifact(format!("container at {dir:?} is not a dataset")));
    }
    Ok(meta.arrays.iter().map(|a| (a.name.clone(), a.shape.clone())).collect())
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let meta = container::read_meta(dir)?;
    if meta.kind != "dataset" {
        return Err(Error::artifact(format!("container at {dir:?} is not a dataset")));
    }
    let extra: DatasetExtra = serde_json::from_value(meta.extra.clone())
        .map_err(|e| Error::artifact(format!("dataset metadata malformed: {e}")))?;
    let branch_meta = meta.array("branch")?;
    let branch = Matrix::from_vec(
        branch_meta.shape[0],
        branch_meta.shape[1],
        container::read_array(dir, branch_meta)?,
    );
    let coords_meta = meta.array("coords")?;
    let coords = Matrix::from_vec(
        coords_meta.shape[0],
        coords_meta.shape[1],
        container::read_array(dir, coords_meta)?,
    );
    let time_grid = container::read_array(dir, meta.array("time")?)?;
    let targets = container::read_array(dir, meta.array("targets")?)?;
    let lambda = container::read_array(dir, meta.array("lambda")?)?;
    let dataset = Dataset {
        branch_inputs: branch,
        coords,
        time_grid,
        targets,
        n_samples: extra.n_samples,
        n_t: extra.n_t,
        n_nodes: extra.n_nodes,
        n_components: extra.n_components,
        lambda,
        scalers: extra.scalers,
        train_idx: extra.train_idx,
        test_idx: extra.test_idx,
        node_ids: extra.node_ids,
        scenarios: extra.scenarios,
        ref_duration: extra.ref_duration,
        dt_native: extra.dt_native,
        split_seed: extra.split_seed,
        structure: extra.structure,
        mass_model: extra.mass_model,
        rayleigh: extra.rayleigh,
        alpha_hht: extra.alpha_hht,
    };
    dataset.validate()?;
    Ok(dataset)
}
