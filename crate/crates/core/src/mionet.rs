//! Dual-trunk multiple-input operator network.
//!
//! A branch MLP encodes the load parameters (velocity + axle intensities),
//! a spatial trunk encodes node coordinates, and a temporal trunk encodes
//! query times. With H latent features and K output components the
//! prediction at (sample b, time t, node s, component k) is
//!
//!   G[b,t,s,k] = sum_h  B[b,h] * Ts[s, k*H + h] * Tt[t,h]  +  beta[k]
//!
//! i.e. branch and spatial features interact first, the temporal features
//! expand the result over the query grid, and a trainable per-component
//! bias shifts the output. Evaluation is continuous in t: any time grid is
//! accepted and grid membership never changes a prediction.
//!
//! Gradients are exact reverse-mode transposes of the forward products;
//! every reduction runs in a fixed order so training is bitwise
//! reproducible.

use crate::error::{Error, Result};
use crate::linalg::{matmul, matmul_a_bt, matmul_at_b, Matrix};
use crate::rng::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Sin,
}

impl Activation {
    pub fn apply(&self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Sin => x.sin(),
        }
    }

    /// Derivative given pre-activation `x` and output `y`.
    /// The ReLU subgradient at 0 is fixed to 0.
    pub fn derivative(&self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Sin => x.cos(),
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "sin" => Ok(Activation::Sin),
            other => Err(Error::config(format!("unknown activation `{other}`"))),
        }
    }
}

/// Layer widths of the three MLPs. Hidden layers apply the activation; the
/// final layer of each net is linear. The spatial trunk's last width is
/// H * n_out (one feature block per output component); branch and temporal
/// trunks end at H.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchConfig {
    pub branch_widths: Vec<usize>,
    pub spatial_widths: Vec<usize>,
    pub temporal_widths: Vec<usize>,
    pub hidden: usize,
    pub n_out: usize,
    pub activation: Activation,
}

impl ArchConfig {
    /// Rectangular nets: `layers` weight layers of `neurons` each.
    pub fn rectangular(
        n_branch_in: usize,
        spatial_dim: usize,
        neurons: usize,
        layers: usize,
        n_out: usize,
        activation: Activation,
    ) -> ArchConfig {
        let mids = |last: usize| -> Vec<usize> {
            let mut v = vec![neurons; layers];
            *v.last_mut().unwrap() = last;
            v
        };
        let mut branch = vec![n_branch_in];
        branch.extend(mids(neurons));
        let mut spatial = vec![spatial_dim];
        spatial.extend(mids(neurons * n_out));
        let mut temporal = vec![1];
        temporal.extend(mids(neurons));
        ArchConfig {
            branch_widths: branch,
            spatial_widths: spatial,
            temporal_widths: temporal,
            hidden: neurons,
            n_out,
            activation,
        }
    }

    /// The configuration used for the 56-node beam runs: six layers of 200
    /// neurons in every net, three output components.
    pub fn beam_default(n_branch_in: usize) -> ArchConfig {
        ArchConfig::rectangular(n_branch_in, 2, 200, 6, 3, Activation::Relu)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, widths) in [
            ("branch", &self.branch_widths),
            ("spatial", &self.spatial_widths),
            ("temporal", &self.temporal_widths),
        ] {
            if widths.len() < 2 || widths.iter().any(|&w| w == 0) {
                return Err(Error::config(format!("{name} widths invalid: {widths:?}")));
            }
        }
        if self.hidden == 0 || self.n_out == 0 {
            return Err(Error::config("hidden dim and n_out must be positive"));
        }
        if *self.branch_widths.last().unwrap() != self.hidden {
            return Err(Error::config("branch final width must equal hidden dim"));
        }
        if *self.temporal_widths.last().unwrap() != self.hidden {
            return Err(Error::config("temporal final width must equal hidden dim"));
        }
        if *self.spatial_widths.last().unwrap() != self.hidden * self.n_out {
            return Err(Error::config(
                "spatial final width must equal hidden dim times n_out",
            ));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        let net = |w: &[usize]| -> usize {
            w.windows(2).map(|p| p[0] * p[1] + p[1]).sum::<usize>()
        };
        net(&self.branch_widths)
            + net(&self.spatial_widths)
            + net(&self.temporal_widths)
            + self.n_out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub w: Matrix,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MionetParams {
    pub arch: ArchConfig,
    pub branch: Vec<Dense>,
    pub spatial: Vec<Dense>,
    pub temporal: Vec<Dense>,
    pub beta_out: Vec<f64>,
}

fn init_net(widths: &[usize], rng: &mut Rng) -> Vec<Dense> {
    widths
        .windows(2)
        .map(|p| {
            let (fan_in, fan_out) = (p[0], p[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let w = Matrix::from_fn(fan_in, fan_out, |_, _| rng.range(-bound, bound));
            Dense { w, b: vec![0.0; fan_out] }
        })
        .collect()
}

fn zero_net(widths: &[usize]) -> Vec<Dense> {
    widths
        .windows(2)
        .map(|p| Dense { w: Matrix::zeros(p[0], p[1]), b: vec![0.0; p[1]] })
        .collect()
}

/// Deterministic initialization: weights uniform in
/// +-sqrt(6 / (fan_in + fan_out)), biases and output bias zero.
pub fn init_params(arch: &ArchConfig, seed: u64) -> Result<MionetParams> {
    arch.validate()?;
    let mut rng = Rng::new(seed);
    Ok(MionetParams {
        branch: init_net(&arch.branch_widths, &mut rng),
        spatial: init_net(&arch.spatial_widths, &mut rng),
        temporal: init_net(&arch.temporal_widths, &mut rng),
        beta_out: vec![0.0; arch.n_out],
        arch: arch.clone(),
    })
}

impl MionetParams {
    pub fn zeros_like(arch: &ArchConfig) -> MionetParams {
        MionetParams {
            branch: zero_net(&arch.branch_widths),
            spatial: zero_net(&arch.spatial_widths),
            temporal: zero_net(&arch.temporal_widths),
            beta_out: vec![0.0; arch.n_out],
            arch: arch.clone(),
        }
    }

    /// Visit all parameter tensors in a fixed order.
    pub fn for_each_slice_mut(&mut self, mut f: impl FnMut(&mut [f64])) {
        for net in [&mut self.branch, &mut self.spatial, &mut self.temporal] {
            for layer in net {
                f(layer.w.data_mut());
                f(&mut layer.b);
            }
        }
        f(&mut self.beta_out);
    }

    pub fn for_each_slice(&self, mut f: impl FnMut(&[f64])) {
        for net in [&self.branch, &self.spatial, &self.temporal] {
            for layer in net {
                f(layer.w.data());
                f(&layer.b);
            }
        }
        f(&self.beta_out);
    }

    pub fn all_finite(&self) -> bool {
        let mut ok = true;
        self.for_each_slice(|s| ok &= s.iter().all(|x| x.is_finite()));
        ok
    }
}

struct MlpCache {
    /// input plus post-activation output of every layer
    outputs: Vec<Matrix>,
    /// pre-activations of every layer
    pres: Vec<Matrix>,
}

fn mlp_forward(layers: &[Dense], input: &Matrix, activation: Activation) -> (Matrix, MlpCache) {
    let n_layers = layers.len();
    let mut outputs = Vec::with_capacity(n_layers + 1);
    let mut pres = Vec::with_capacity(n_layers);
    outputs.push(input.clone());
    for (li, layer) in layers.iter().enumerate() {
        let mut z = matmul(outputs.last().unwrap(), &layer.w);
        for r in 0..z.rows() {
            let row = z.row_mut(r);
            for (x, b) in row.iter_mut().zip(&layer.b) {
                *x += b;
            }
        }
        let y = if li + 1 == n_layers {
            z.clone()
        } else {
            let mut y = z.clone();
            for x in y.data_mut() {
                *x = activation.apply(*x);
            }
            y
        };
        pres.push(z);
        outputs.push(y);
    }
    (outputs.last().unwrap().clone(), MlpCache { outputs, pres })
}

/// Backpropagate `d_out` through the MLP; returns per-layer gradients and
/// the gradient with respect to the input.
fn mlp_backward(
    layers: &[Dense],
    cache: &MlpCache,
    activation: Activation,
    d_out: &Matrix,
) -> (Vec<Dense>, Matrix) {
    let n_layers = layers.len();
    let mut grads: Vec<Dense> = layers
        .iter()
        .map(|l| Dense { w: Matrix::zeros(l.w.rows(), l.w.cols()), b: vec![0.0; l.b.len()] })
        .collect();
    let mut dy = d_out.clone();
    for li in (0..n_layers).rev() {
        let mut dz = dy;
        if li + 1 != n_layers {
            let pre = &cache.pres[li];
            let post = &cache.outputs[li + 1];
            for ((dzi, &zi), &yi) in dz.data_mut().iter_mut().zip(pre.data()).zip(post.data()) {
                *dzi *= activation.derivative(zi, yi);
            }
        }
        let x = &cache.outputs[li];
        grads[li].w = matmul_at_b(x, &dz);
        for r in 0..dz.rows() {
            let row = dz.row(r);
            for (bg, &d) in grads[li].b.iter_mut().zip(row) {
                *bg += d;
            }
        }
        dy = matmul_a_bt(&dz, &layers[li].w);
    }
    (grads, dy)
}

/// Forward intermediates kept for the backward pass.
pub struct ForwardCache {
    branch: MlpCache,
    spatial: MlpCache,
    temporal: MlpCache,
    branch_out: Matrix,
    temporal_out: Matrix,
    /// spatial features reshaped to (H, S * n_out)
    ts_r: Matrix,
    /// pairwise branch x temporal features, (B*T, H)
    w_bt: Matrix,
    pub n_samples: usize,
    pub n_times: usize,
    pub n_nodes: usize,
}

/// Predictions for a batch: a (B*T, S*K) matrix; entry (b*T + t, s*K + k)
/// holds component k at node s, time t, sample b.
pub struct Predictions {
    pub values: Matrix,
    pub n_samples: usize,
    pub n_times: usize,
    pub n_nodes: usize,
    pub n_out: usize,
}

impl Predictions {
    pub fn get(&self, b: usize, t: usize, s: usize, k: usize) -> f64 {
        self.values[(b * self.n_times + t, s * self.n_out + k)]
    }
}

fn reshape_spatial(ts_out: &Matrix, hidden: usize, n_out: usize) -> Matrix {
    let n_s = ts_out.rows();
    let mut ts_r = Matrix::zeros(hidden, n_s * n_out);
    for s in 0..n_s {
        let row = ts_out.row(s);
        for k in 0..n_out {
            for h in 0..hidden {
                ts_r[(h, s * n_out + k)] = row[k * hidden + h];
            }
        }
    }
    ts_r
}

/// Evaluate the operator for a batch of branch inputs over a coordinate set
/// and a time grid.
pub fn forward(
    params: &MionetParams,
    branch_in: &Matrix,
    coords: &Matrix,
    times: &[f64],
) -> Result<(Predictions, ForwardCache)> {
    let arch = &params.arch;
    if branch_in.cols() != arch.branch_widths[0] {
        return Err(Error::numerical("forward: branch input width mismatch"));
    }
    if coords.cols() != arch.spatial_widths[0] {
        return Err(Error::numerical("forward: coordinate width mismatch"));
    }
    if branch_in.data().iter().any(|x| !x.is_finite())
        || coords.data().iter().any(|x| !x.is_finite())
        || times.iter().any(|x| !x.is_finite())
    {
        return Err(Error::numerical("forward: non-finite input"));
    }
    let act = arch.activation;
    let (b_out, b_cache) = mlp_forward(&params.branch, branch_in, act);
    let (s_out, s_cache) = mlp_forward(&params.spatial, coords, act);
    let t_in = Matrix::from_vec(times.len(), 1, times.to_vec());
    let (t_out, t_cache) = mlp_forward(&params.temporal, &t_in, act);

    let (n_b, n_t, n_s) = (branch_in.rows(), times.len(), coords.rows());
    let (hidden, n_out) = (arch.hidden, arch.n_out);
    let ts_r = reshape_spatial(&s_out, hidden, n_out);

    let mut w_bt = Matrix::zeros(n_b * n_t, hidden);
    for b in 0..n_b {
        let brow = b_out.row(b);
        for t in 0..n_t {
            let trow = t_out.row(t);
            let dst = w_bt.row_mut(b * n_t + t);
            for h in 0..hidden {
                dst[h] = brow[h] * trow[h];
            }
        }
    }
    let mut values = matmul(&w_bt, &ts_r);
    for r in 0..values.rows() {
        let row = values.row_mut(r);
        for (i, x) in row.iter_mut().enumerate() {
            *x += params.beta_out[i % n_out];
        }
    }
    Ok((
        Predictions { values, n_samples: n_b, n_times: n_t, n_nodes: n_s, n_out },
        ForwardCache {
            branch: b_cache,
            spatial: s_cache,
            temporal: t_cache,
            branch_out: b_out,
            temporal_out: t_out,
            ts_r,
            w_bt,
            n_samples: n_b,
            n_times: n_t,
            n_nodes: n_s,
        },
    ))
}

/// Inference without gradient bookkeeping.
pub fn predict(
    params: &MionetParams,
    branch_in: &Matrix,
    coords: &Matrix,
    times: &[f64],
) -> Result<Predictions> {
    forward(params, branch_in, coords, times).map(|(p, _)| p)
}

/// Exact gradients of a scalar loss given d(loss)/d(predictions).
pub fn backward(
    params: &MionetParams,
    cache: &ForwardCache,
    d_preds: &Matrix,
) -> Result<MionetParams> {
    let arch = &params.arch;
    let (hidden, n_out) = (arch.hidden, arch.n_out);
    let (n_b, n_t, n_s) = (cache.n_samples, cache.n_times, cache.n_nodes);
    if d_preds.rows() != n_b * n_t || d_preds.cols() != n_s * n_out {
        return Err(Error::numerical("backward: prediction gradient shape mismatch"));
    }
    let mut grads = MionetParams::zeros_like(arch);

    for (i, x) in d_preds.data().iter().enumerate() {
        grads.beta_out[(i % (n_s * n_out)) % n_out] += x;
    }

    // contraction backward
    let d_wbt = matmul_a_bt(d_preds, &cache.ts_r);
    let d_tsr = matmul_at_b(&cache.w_bt, d_preds);

    // scatter (H, S*K) back to the spatial layout (S, K*H)
    let mut d_ts_out = Matrix::zeros(n_s, n_out * hidden);
    for s in 0..n_s {
        let dst = d_ts_out.row_mut(s);
        for k in 0..n_out {
            for h in 0..hidden {
                dst[k * hidden + h] = d_tsr[(h, s * n_out + k)];
            }
        }
    }

    let mut d_branch_out = Matrix::zeros(n_b, hidden);
    let mut d_temporal_out = Matrix::zeros(n_t, hidden);
    for b in 0..n_b {
        for t in 0..n_t {
            let dw = d_wbt.row(b * n_t + t);
            let brow = cache.branch_out.row(b);
            let trow = cache.temporal_out.row(t);
            let db = d_branch_out.row_mut(b);
            for h in 0..hidden {
                db[h] += dw[h] * trow[h];
            }
            let dt = d_temporal_out.row_mut(t);
            for h in 0..hidden {
                dt[h] += dw[h] * brow[h];
            }
        }
    }

    let act = arch.activation;
    let (gb, _) = mlp_backward(&params.branch, &cache.branch, act, &d_branch_out);
    let (gs, _) = mlp_backward(&params.spatial, &cache.spatial, act, &d_ts_out);
    let (gt, _) = mlp_backward(&params.temporal, &cache.temporal, act, &d_temporal_out);
    grads.branch = gb;
    grads.spatial = gs;
    grads.temporal = gt;
    if !grads.all_finite() {
        return Err(Error::numerical("backward: non-finite gradient"));
    }
    Ok(grads)
}

/// Adam optimizer state; moments mirror the parameter shapes.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: MionetParams,
    pub v: MionetParams,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(arch: &ArchConfig) -> AdamState {
        AdamState {
            m: MionetParams::zeros_like(arch),
            v: MionetParams::zeros_like(arch),
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// One bias-corrected Adam step.
pub fn adam_update(
    params: &mut MionetParams,
    grads: &MionetParams,
    state: &mut AdamState,
    lr: f64,
) {
    state.step += 1;
    let t = state.step as f64;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.epsilon);
    let bc1 = 1.0 - b1.powf(t);
    let bc2 = 1.0 - b2.powf(t);

    let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
        debug_assert_eq!(p.len(), g.len());
        for i in 0..p.len() {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    };
    let nets = [
        (&mut params.branch, &grads.branch, &mut state.m.branch, &mut state.v.branch),
        (&mut params.spatial, &grads.spatial, &mut state.m.spatial, &mut state.v.spatial),
        (&mut params.temporal, &grads.temporal, &mut state.m.temporal, &mut state.v.temporal),
    ];
    for (p_net, g_net, m_net, v_net) in nets {
        for i in 0..p_net.len() {
            update(
                p_net[i].w.data_mut(),
                g_net[i].w.data(),
                m_net[i].w.data_mut(),
                v_net[i].w.data_mut(),
            );
            update(&mut p_net[i].b, &g_net[i].b, &mut m_net[i].b, &mut v_net[i].b);
        }
    }
    update(
        &mut params.beta_out,
        &grads.beta_out,
        &mut state.m.beta_out,
        &mut state.v.beta_out,
    );
}

/// Persist parameters as a checkpoint container; `extra` carries run
/// metadata (seed, step, strategy, scaler reference).
pub fn save_checkpoint(
    dir: &std::path::Path,
    params: &MionetParams,
    extra: serde_json::Value,
) -> Result<()> {
    let arch_json = serde_json::to_value(&params.arch)
        .map_err(|e| Error::artifact(format!("arch serialization failed: {e}")))?;
    let mut meta = crate::container::ContainerMeta::new(
        "checkpoint",
        serde_json::json!({ "arch": arch_json, "run": extra }),
    );
    let nets = [
        ("branch", &params.branch),
        ("spatial", &params.spatial),
        ("temporal", &params.temporal),
    ];
    for (prefix, net) in nets {
        for (i, layer) in net.iter().enumerate() {
            meta.arrays.push(crate::container::write_array(
                dir,
                &format!("{prefix}_w{i}"),
                &[layer.w.rows(), layer.w.cols()],
                layer.w.data(),
            )?);
            meta.arrays.push(crate::container::write_array(
                dir,
                &format!("{prefix}_b{i}"),
                &[layer.b.len()],
                &layer.b,
            )?);
        }
    }
    meta.arrays.push(crate::container::write_array(
        dir,
        "beta_out",
        &[params.beta_out.len()],
        &params.beta_out,
    )?);
    crate::container::write_meta(dir, &meta)
}

pub fn load_checkpoint(dir: &std::path::Path) -> Result<(MionetParams, serde_json::Value)> {
    let meta = crate::container::read_meta(dir)?;
    if meta.kind != "checkpoint" {
        return Err(Error::artifact(format!("container at {dir:?} is not a checkpoint")));
    }
    let arch: ArchConfig = serde_json::from_value(
        meta.extra.get("arch").cloned().unwrap_or(serde_json::Value::Null),
    )
    .map_err(|e| Error::artifact(format!("checkpoint arch malformed: {e}")))?;
    arch.validate()?;
    let mut params = MionetParams::zeros_like(&arch);
    let nets = [
        ("branch", &mut params.branch),
        ("spatial", &mut params.spatial),
        ("temporal", &mut params.temporal),
    ];
    for (prefix, net) in nets {
        for (i, layer) in net.iter_mut().enumerate() {
            let w_meta = meta.array(&format!("{prefix}_w{i}"))?;
            if w_meta.shape != [layer.w.rows(), layer.w.cols()] {
                return Err(Error::artifact(format!(
                    "checkpoint array {prefix}_w{i} shape mismatch"
                )));
            }
            layer.w = Matrix::from_vec(
                w_meta.shape[0],
                w_meta.shape[1],
                crate::container::read_array(dir, w_meta)?,
            );
            layer.b = crate::container::read_array(dir, meta.array(&format!("{prefix}_b{i}"))?)?;
        }
    }
    params.beta_out = crate::container::read_array(dir, meta.array("beta_out")?)?;
    let run = meta.extra.get("run").cloned().unwrap_or(serde_json::Value::Null);
    Ok((params, run))
}
