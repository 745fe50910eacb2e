//! Implicit HHT-alpha transient integration of M a + C v + K u = F(t),
//! including the stretched-time variant: a velocity-dependent factor lambda
//! maps each scenario onto a shared reference grid by replacing the physical
//! step dt with dt/lambda inside the update relations, so that one grid
//! serves all load speeds.
//!
//! The one-step update is expressed as K_eff u_{t+1} = F_eff with a
//! time-invariant effective stiffness, factorized once and reused across all
//! steps and scenarios sharing (dt, lambda).

use crate::error::{Error, Result};
use crate::fem::{AssembledSystem, StructureModel};
use crate::linalg::{norm2, Cholesky, Matrix};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    /// HHT numerical damping parameter, in [-1/3, 0].
    pub alpha: f64,
    /// beta = 0.25 (1 - alpha)^2, derived.
    pub beta: f64,
    /// gamma = 0.5 - alpha, derived.
    pub gamma: f64,
    /// Grid step, s (on the stretched grid when lambda != 1).
    pub dt: f64,
    /// Time stretch factor; the physical step is dt / lambda.
    pub lambda: f64,
}

/// beta and gamma from the HHT damping parameter.
pub fn hht_params(alpha: f64) -> Result<(f64, f64)> {
    if !(-1.0 / 3.0..=0.0).contains(&alpha) {
        return Err(Error::config(format!(
            "HHT alpha must lie in [-1/3, 0], got {alpha}"
        )));
    }
    let beta = 0.25 * (1.0 - alpha) * (1.0 - alpha);
    let gamma = 0.5 - alpha;
    Ok((beta, gamma))
}

impl IntegratorConfig {
    pub fn new(alpha: f64, dt: f64) -> Result<Self> {
        Self::with_lambda(alpha, dt, 1.0)
    }

    pub fn with_lambda(alpha: f64, dt: f64, lambda: f64) -> Result<Self> {
        let (beta, gamma) = hht_params(alpha)?;
        if dt <= 0.0 {
            return Err(Error::config("dt must be positive"));
        }
        if lambda <= 0.0 {
            return Err(Error::config("lambda must be positive"));
        }
        Ok(IntegratorConfig { alpha, beta, gamma, dt, lambda })
    }

    /// Same integrator on a different grid.
    pub fn rescaled(&self, dt: f64, lambda: f64) -> Result<Self> {
        Self::with_lambda(self.alpha, dt, lambda)
    }

    pub fn coeffs(&self) -> StepCoeffs {
        let (a, b, g) = (self.alpha, self.beta, self.gamma);
        let (dt, l) = (self.dt, self.lambda);
        StepCoeffs {
            alpha: a,
            acc_u: l * l / (b * dt * dt),
            acc_v: l / (b * dt),
            acc_a: (1.0 - 2.0 * b) / (2.0 * b),
            vel_a0: dt / l * (1.0 - g),
            vel_a1: dt / l * g,
            keff_c: (1.0 + a) * g * l / (b * dt),
            f_c_v: a * g / b + g / b - 2.0 * a - 1.0,
            f_c_a: dt / l * (a * g / (2.0 * b) + g / (2.0 * b) - a - 1.0),
            f_c_u: l / dt * (g / b + a * g / b),
        }
    }
}

/// Scalar coefficients of the one-step update; shared by the full-domain and
/// Schur-block force expressions.
#[derive(Debug, Clone, Copy)]
pub struct StepCoeffs {
    pub alpha: f64,
    /// lambda^2 / (beta dt^2): multiplies u_{t+1} - u_t in the acceleration update.
    pub acc_u: f64,
    /// lambda / (beta dt): multiplies v_t in the acceleration update.
    pub acc_v: f64,
    /// (1 - 2 beta) / (2 beta): multiplies a_t in the acceleration update.
    pub acc_a: f64,
    /// (dt/lambda)(1 - gamma): weight of a_t in the velocity update.
    pub vel_a0: f64,
    /// (dt/lambda) gamma: weight of a_{t+1} in the velocity update.
    pub vel_a1: f64,
    /// (1 + alpha) gamma lambda / (beta dt): damping weight inside K_eff.
    pub keff_c: f64,
    /// C-bracket weight of v_t in the effective force.
    pub f_c_v: f64,
    /// C-bracket weight of a_t in the effective force.
    pub f_c_a: f64,
    /// C-bracket weight of u_t in the effective force.
    pub f_c_u: f64,
}

impl StepCoeffs {
    /// a_{t+1} from (u_t, v_t, a_t) and u_{t+1}.
    pub fn acceleration(&self, u_next: &[f64], u: &[f64], v: &[f64], a: &[f64], out: &mut [f64]) {
        for i in 0..out.len() {
            out[i] = self.acc_u * (u_next[i] - u[i]) - self.acc_v * v[i] - self.acc_a * a[i];
        }
    }

    /// v_{t+1} from (v_t, a_t) and a_{t+1}.
    pub fn velocity(&self, v: &[f64], a: &[f64], a_next: &[f64], out: &mut [f64]) {
        for i in 0..out.len() {
            out[i] = v[i] + self.vel_a0 * a[i] + self.vel_a1 * a_next[i];
        }
    }
}

/// K_eff = lambda^2 M / (beta dt^2) + (1+alpha) lambda gamma C / (beta dt) + (1+alpha) K.
pub fn effective_stiffness(
    m: &Matrix,
    c: &Matrix,
    k: &Matrix,
    config: &IntegratorConfig,
) -> Result<Matrix> {
    if m.rows() != c.rows() || m.rows() != k.rows() || m.rows() != m.cols() {
        return Err(Error::numerical("effective_stiffness: dimension mismatch"));
    }
    let cf = config.coeffs();
    let mut keff = Matrix::zeros(m.rows(), m.cols());
    keff.add_scaled(m, cf.acc_u);
    keff.add_scaled(c, cf.keff_c);
    keff.add_scaled(k, 1.0 + config.alpha);
    Ok(keff)
}

/// Effective force for the step t -> t+1 given the state at t.
#[allow(clippy::too_many_arguments)]
pub fn effective_force(
    f_t: &[f64],
    f_next: &[f64],
    u: &[f64],
    v: &[f64],
    a: &[f64],
    m: &Matrix,
    c: &Matrix,
    k: &Matrix,
    config: &IntegratorConfig,
) -> Vec<f64> {
    let cf = config.coeffs();
    let n = f_next.len();
    let mut out = vec![0.0; n];
    let mut mixed = vec![0.0; n];

    for i in 0..n {
        out[i] = f_next[i] + cf.alpha * f_t[i];
    }
    k.matvec_acc(u, -cf.alpha, &mut out);
    for i in 0..n {
        mixed[i] = cf.acc_u * u[i] + cf.acc_v * v[i] + cf.acc_a * a[i];
    }
    m.matvec_acc(&mixed, 1.0, &mut out);
    for i in 0..n {
        mixed[i] = cf.f_c_v * v[i] + cf.f_c_a * a[i] + cf.f_c_u * u[i];
    }
    c.matvec_acc(&mixed, 1.0, &mut out);
    out
}

/// Kinematic state at one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub a: Vec<f64>,
}

impl State {
    pub fn zero(n: usize) -> State {
        State { u: vec![0.0; n], v: vec![0.0; n], a: vec![0.0; n] }
    }
}

/// One-step solver with the factorized effective stiffness cached.
pub struct HhtStepper<'a> {
    m: &'a Matrix,
    c: &'a Matrix,
    k: &'a Matrix,
    keff_chol: Cholesky,
    config: IntegratorConfig,
}

impl<'a> HhtStepper<'a> {
    pub fn new(
        m: &'a Matrix,
        c: &'a Matrix,
        k: &'a Matrix,
        config: IntegratorConfig,
    ) -> Result<Self> {
        let keff = effective_stiffness(m, c, k, &config)?;
        let keff_chol = Cholesky::factor(&keff)
            .map_err(|e| Error::numerical(format!("singular effective stiffness: {e}")))?;
        Ok(HhtStepper { m, c, k, keff_chol, config })
    }

    pub fn config(&self) -> &IntegratorConfig {
        &self.config
    }

    /// Advance one step under forces (F_t, F_{t+1}).
    pub fn step(&self, state: &State, f_t: &[f64], f_next: &[f64]) -> State {
        let feff = effective_force(
            f_t, f_next, &state.u, &state.v, &state.a, self.m, self.c, self.k, &self.config,
        );
        let u_next = self.keff_chol.solve(&feff);
        let cf = self.config.coeffs();
        let n = u_next.len();
        let mut a_next = vec![0.0; n];
        cf.acceleration(&u_next, &state.u, &state.v, &state.a, &mut a_next);
        let mut v_next = vec![0.0; n];
        cf.velocity(&state.v, &state.a, &a_next, &mut v_next);
        State { u: u_next, v: v_next, a: a_next }
    }
}

/// Integrate the free-DOF system under a force history (one row per step).
/// Returns (u, v, a) histories of shape n_steps x n_free.
pub fn simulate_free(
    m: &Matrix,
    c: &Matrix,
    k: &Matrix,
    forces: &Matrix,
    config: &IntegratorConfig,
    initial: Option<State>,
) -> Result<(Matrix, Matrix, Matrix)> {
    let n = m.rows();
    if forces.cols() != n {
        return Err(Error::numerical("simulate_free: force width != n_dof"));
    }
    let n_t = forces.rows();
    if n_t == 0 {
        return Err(Error::numerical("simulate_free: empty force history"));
    }
    // a structure with unconstrained rigid modes has no static solution and
    // would drift unboundedly; reject it up front
    Cholesky::factor(k).map_err(|_| Error::numerical("singular static mode: stiffness is not positive definite on the free DOFs"))?;

    let stepper = HhtStepper::new(m, c, k, *config)?;
    let mut state = initial.unwrap_or_else(|| State::zero(n));
    if state.u.len() != n {
        return Err(Error::numerical("simulate_free: initial state size mismatch"));
    }
    // consistent initial acceleration: M a0 = F0 - C v0 - K u0
    {
        let mut rhs = forces.row(0).to_vec();
        c.matvec_acc(&state.v, -1.0, &mut rhs);
        k.matvec_acc(&state.u, -1.0, &mut rhs);
        let mchol = Cholesky::factor(m)
            .map_err(|e| Error::numerical(format!("mass matrix not positive definite: {e}")))?;
        state.a = mchol.solve(&rhs);
    }

    let mut u_hist = Matrix::zeros(n_t, n);
    let mut v_hist = Matrix::zeros(n_t, n);
    let mut a_hist = Matrix::zeros(n_t, n);
    u_hist.row_mut(0).copy_from_slice(&state.u);
    v_hist.row_mut(0).copy_from_slice(&state.v);
    a_hist.row_mut(0).copy_from_slice(&state.a);
    for t in 0..(n_t - 1) {
        state = stepper.step(&state, forces.row(t), forces.row(t + 1));
        u_hist.row_mut(t + 1).copy_from_slice(&state.u);
        v_hist.row_mut(t + 1).copy_from_slice(&state.v);
        a_hist.row_mut(t + 1).copy_from_slice(&state.a);
    }
    Ok((u_hist, v_hist, a_hist))
}

/// A moving multi-axle distributed load. Each axle is a uniform patch of
/// intensity `axle_loads[i]` (N/m) over `load_length` meters, trailing the
/// lead axle by `axle_offsets[i]`. The lead patch front starts at `path.0`
/// and travels toward `path.1` at `velocity`; off-span portions carry no
/// force. Unused axle slots must be exactly zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MovingLoadScenario {
    /// m/s
    pub velocity: f64,
    /// N/m per axle
    pub axle_loads: Vec<f64>,
    /// m behind the lead front, one per axle (lead axle offset 0)
    pub axle_offsets: Vec<f64>,
    /// m
    pub load_length: f64,
    /// start and end x-coordinate of the lead patch front, m
    pub path: (f64, f64),
}

impl MovingLoadScenario {
    pub fn single(velocity: f64, intensity: f64, load_length: f64, span: f64) -> Self {
        MovingLoadScenario {
            velocity,
            axle_loads: vec![intensity],
            axle_offsets: vec![0.0],
            load_length,
            path: (0.0, span),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.velocity <= 0.0 {
            return Err(Error::config("scenario velocity must be positive"));
        }
        if self.load_length <= 0.0 {
            return Err(Error::config("load length must be positive"));
        }
        if self.axle_loads.len() != self.axle_offsets.len() {
            return Err(Error::config("axle loads and offsets must pair up"));
        }
        if self.axle_loads.iter().any(|q| !q.is_finite() || *q < 0.0) {
            return Err(Error::config("axle loads must be finite and non-negative"));
        }
        if self.path.1 < self.path.0 {
            return Err(Error::config("path end precedes path start"));
        }
        Ok(())
    }

    /// Time for the last axle patch to clear the path.
    pub fn traversal_time(&self) -> f64 {
        let max_offset = self.axle_offsets.iter().cloned().fold(0.0, f64::max);
        (self.path.1 - self.path.0 + self.load_length + max_offset) / self.velocity
    }
}

/// Nodal force history for a moving load crossing the bottom chord.
/// Intensities distribute to the two bracketing chord nodes with linear
/// weights, so the applied vertical force always equals intensity times the
/// on-span patch length.
pub fn moving_load_history(
    model: &StructureModel,
    scenario: &MovingLoadScenario,
    dt: f64,
    n_steps: usize,
) -> Result<Matrix> {
    scenario.validate()?;
    if dt <= 0.0 {
        return Err(Error::config("dt must be positive"));
    }
    let chord = model.bottom_chord_nodes();
    if chord.len() < 2 {
        return Err(Error::config("loaded chord needs at least two nodes"));
    }
    let xs: Vec<f64> = chord.iter().map(|&n| model.nodes[n].x).collect();
    let (x_min, x_max) = (xs[0], xs[xs.len() - 1]);
    if scenario.path.0 < x_min - 1e-9 || scenario.path.1 > x_max + 1e-9 {
        return Err(Error::config(format!(
            "load path ({}, {}) outside chord extent ({x_min}, {x_max})",
            scenario.path.0, scenario.path.1
        )));
    }

    let mut forces = Matrix::zeros(n_steps, model.n_dofs());
    for step in 0..n_steps {
        let t = step as f64 * dt;
        let lead_front = scenario.path.0 + scenario.velocity * t;
        let row = forces.row_mut(step);
        for (qi, &q) in scenario.axle_loads.iter().enumerate() {
            if q == 0.0 {
                continue;
            }
            let front = lead_front - scenario.axle_offsets[qi];
            let (lo, hi) = (front - scenario.load_length, front);
            for seg in 0..xs.len() - 1 {
                let (x0, x1) = (xs[seg], xs[seg + 1]);
                let a = lo.max(x0);
                let b = hi.min(x1);
                if b <= a {
                    continue;
                }
                let h = x1 - x0;
                // integral of the ascending shape function over [a, b]
                let int_n2 = ((b - x0).powi(2) - (a - x0).powi(2)) / (2.0 * h);
                let int_n1 = (b - a) - int_n2;
                row[3 * chord[seg] + 1] -= q * int_n1;
                row[3 * chord[seg + 1] + 1] -= q * int_n2;
            }
        }
    }
    Ok(forces)
}

/// Per-DOF displacement, velocity and acceleration series on a uniform grid.
#[derive(Debug, Clone)]
pub struct ResponseHistory {
    pub times: Vec<f64>,
    pub u: Matrix,
    pub v: Matrix,
    pub a: Matrix,
    pub dt: f64,
    pub lambda: f64,
    pub scenario: Option<MovingLoadScenario>,
}

impl ResponseHistory {
    pub fn n_steps(&self) -> usize {
        self.times.len()
    }

    pub fn n_dofs(&self) -> usize {
        self.u.cols()
    }

    pub fn duration(&self) -> f64 {
        self.dt * (self.times.len().saturating_sub(1)) as f64
    }
}

/// Integrate an assembled structural system under a full-DOF force history.
/// Constrained DOFs stay identically zero.
pub fn simulate(
    system: &AssembledSystem,
    forces_full: &Matrix,
    config: &IntegratorConfig,
    scenario: Option<MovingLoadScenario>,
) -> Result<ResponseHistory> {
    if forces_full.cols() != system.n_dofs() {
        return Err(Error::numerical("simulate: force width != n_dof"));
    }
    let n_t = forces_full.rows();
    let mut forces_free = Matrix::zeros(n_t, system.n_free());
    for t in 0..n_t {
        let row = forces_full.row(t);
        let dst = forces_free.row_mut(t);
        for (i, &d) in system.free_dofs.iter().enumerate() {
            dst[i] = row[d];
        }
    }
    let (uf, vf, af) = simulate_free(
        system.m_ff(),
        system.c_ff(),
        system.k_ff(),
        &forces_free,
        config,
        None,
    )?;
    let n = system.n_dofs();
    let mut u = Matrix::zeros(n_t, n);
    let mut v = Matrix::zeros(n_t, n);
    let mut a = Matrix::zeros(n_t, n);
    for t in 0..n_t {
        for (i, &d) in system.free_dofs.iter().enumerate() {
            u[(t, d)] = uf[(t, i)];
            v[(t, d)] = vf[(t, i)];
            a[(t, d)] = af[(t, i)];
        }
    }
    let times = (0..n_t).map(|i| i as f64 * config.dt).collect();
    Ok(ResponseHistory {
        times,
        u,
        v,
        a,
        dt: config.dt,
        lambda: config.lambda,
        scenario,
    })
}

/// Persist a history as a response container: `u.f64`, `v.f64`, `a.f64`
/// (row-major n_t x n_dof) plus metadata (dt, lambda, scenario, alpha).
pub fn export_response(
    dir: &std::path::Path,
    history: &ResponseHistory,
    alpha_hht: f64,
) -> Result<()> {
    let n = history.n_dofs();
    let n_t = history.n_steps();
    let mut meta = crate::container::ContainerMeta::new(
        "response",
        serde_json::json!({
            "dt": history.dt,
            "lambda": history.lambda,
            "alpha_hht": alpha_hht,
            "scenario": history.scenario,
        }),
    );
    meta.arrays
        .push(crate::container::write_array(dir, "u", &[n_t, n], history.u.data())?);
    meta.arrays
        .push(crate::container::write_array(dir, "v", &[n_t, n], history.v.data())?);
    meta.arrays
        .push(crate::container::write_array(dir, "a", &[n_t, n], history.a.data())?);
    crate::container::write_meta(dir, &meta)
}

/// Load a response container written by [`export_response`].
pub fn load_response(dir: &std::path::Path) -> Result<ResponseHistory> {
    let meta = crate::container::read_meta(dir)?;
    if meta.kind != "response" {
        return Err(Error::numerical(format!("container at {dir:?} is not a response")));
    }
    let u_meta = meta.array("u")?;
    let (n_t, n) = (u_meta.shape[0], u_meta.shape[1]);
    let u = Matrix::from_vec(n_t, n, crate::container::read_array(dir, u_meta)?);
    let v = Matrix::from_vec(n_t, n, crate::container::read_array(dir, meta.array("v")?)?);
    let a = Matrix::from_vec(n_t, n, crate::container::read_array(dir, meta.array("a")?)?);
    let dt = meta.extra["dt"].as_f64().unwrap_or(0.0);
    let lambda = meta.extra["lambda"].as_f64().unwrap_or(1.0);
    let scenario = serde_json::from_value(meta.extra["scenario"].clone()).ok();
    Ok(ResponseHistory {
        times: (0..n_t).map(|i| i as f64 * dt).collect(),
        u,
        v,
        a,
        dt,
        lambda,
        scenario,
    })
}

/// Worst per-step relative residual of K_eff u_{t+1} = F_eff over a
/// free-DOF history; diagnostic for produced data.
pub fn equilibrium_residual(
    m: &Matrix,
    c: &Matrix,
    k: &Matrix,
    forces: &Matrix,
    u: &Matrix,
    v: &Matrix,
    a: &Matrix,
    config: &IntegratorConfig,
) -> Result<f64> {
    let keff = effective_stiffness(m, c, k, config)?;
    let mut worst: f64 = 0.0;
    for t in 0..u.rows().saturating_sub(1) {
        let feff = effective_force(
            forces.row(t),
            forces.row(t + 1),
            u.row(t),
            v.row(t),
            a.row(t),
            m,
            c,
            k,
            config,
        );
        let lhs = keff.matvec(u.row(t + 1));
        let mut num = 0.0;
        for i in 0..lhs.len() {
            num += (lhs[i] - feff[i]) * (lhs[i] - feff[i]);
        }
        let rel = num.sqrt() / norm2(&feff).max(1.0);
        worst = worst.max(rel);
    }
    Ok(worst)
}
