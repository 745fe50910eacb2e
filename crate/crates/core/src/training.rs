//! Training strategies, losses and evaluation.
//!
//! Four strategies are supported: purely data-driven over all nodes
//! (dd-full), data plus the dynamic-equilibrium residual over all nodes
//! (dd-pi-full), data plus the condensed-domain residual over the retained
//! nodes (dd-pi-schur), and data-driven over the retained nodes with
//! physics used only in post-processing (dd-schur).
//!
//! The physics losses walk the one-step update over the whole horizon and
//! differentiate through the recurrence exactly (reverse accumulation); a
//! per-step-detached mode is available to cut the backward cost.

use crate::data::Dataset;
use crate::dynamics::{IntegratorConfig, StepCoeffs};
use crate::error::{Error, Result};
use crate::fem::AssembledSystem;
use crate::linalg::{matmul, Matrix};
use crate::mionet::{
    adam_update, backward, forward, init_params, AdamState, ArchConfig, MionetParams, Predictions,
};
use crate::rng::Rng;
use crate::schur::SchurPartition;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    DdFull,
    DdPiFull,
    DdPiSchur,
    DdSchur,
}

impl Strategy {
    pub fn uses_physics_loss(&self) -> bool {
        matches!(self, Strategy::DdPiFull | Strategy::DdPiSchur)
    }

    /// Trains on the retained node subset only.
    pub fn schur_domain(&self) -> bool {
        matches!(self, Strategy::DdPiSchur | Strategy::DdSchur)
    }

    /// Needs full-domain reconstruction after prediction.
    pub fn postprocess(&self) -> bool {
        self.schur_domain()
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Strategy::DdFull => "dd-full",
            Strategy::DdPiFull => "dd-pi-full",
            Strategy::DdPiSchur => "dd-pi-schur",
            Strategy::DdSchur => "dd-schur",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dd-full" => Ok(Strategy::DdFull),
            "dd-pi-full" => Ok(Strategy::DdPiFull),
            "dd-pi-schur" => Ok(Strategy::DdPiSchur),
            "dd-schur" => Ok(Strategy::DdSchur),
            other => Err(Error::config(format!("unknown strategy `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradientMode {
    /// exact gradients through the whole time recurrence
    ThroughRecurrence,
    /// treat the recurrence state as constant per step (cheaper, inexact)
    PerStepDetached,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub strategy: Strategy,
    pub w1: f64,
    /// physics weight; None picks 1 / (mean squared effective-force norm of
    /// the training split) so both terms start at comparable size
    pub w2: Option<f64>,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// dataset node indices retained for the Schur strategies; None uses
    /// the evenly spaced bottom-chord default
    pub retained_nodes: Option<Vec<usize>>,
    pub retained_count: usize,
    pub gradient_mode: GradientMode,
    /// checkpoint cadence in epochs; 0 saves only the final state
    pub checkpoint_every: usize,
    pub log_every: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            strategy: Strategy::DdFull,
            w1: 1.0,
            w2: None,
            lr: 5e-4,
            batch_size: 20,
            epochs: 5000,
            seed: 7,
            retained_nodes: None,
            retained_count: 5,
            gradient_mode: GradientMode::ThroughRecurrence,
            checkpoint_every: 0,
            log_every: 100,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self, dataset: &Dataset) -> Result<()> {
        if self.w1 < 0.0 || self.w2.map_or(false, |w| w < 0.0) {
            return Err(Error::config("loss weights must be non-negative"));
        }
        if self.w1 == 0.0 && self.w2 == Some(0.0) {
            return Err(Error::config("loss weights must not both be zero"));
        }
        if self.batch_size == 0 || self.batch_size > dataset.train_idx.len() {
            return Err(Error::config(format!(
                "batch size {} invalid for {} training samples",
                self.batch_size,
                dataset.train_idx.len()
            )));
        }
        if self.epochs == 0 {
            return Err(Error::config("epochs must be positive"));
        }
        if self.lr <= 0.0 {
            return Err(Error::config("learning rate must be positive"));
        }
        Ok(())
    }
}

/// Mean over samples of the squared L2 mismatch over (time x nodes x
/// components), in scaled space. Accumulates `weight * gradient` into
/// `d_preds` and returns the raw loss.
pub fn loss_dd(
    preds: &Predictions,
    targets_scaled: &[f64],
    weight: f64,
    d_preds: &mut Matrix,
) -> f64 {
    let n = preds.values.data().len();
    debug_assert_eq!(targets_scaled.len(), n);
    let b = preds.n_samples as f64;
    let mut loss = 0.0;
    let g = 2.0 * weight / b;
    let pv = preds.values.data();
    let dv = d_preds.data_mut();
    for i in 0..n {
        let r = pv[i] - targets_scaled[i];
        loss += r * r;
        dv[i] += g * r;
    }
    loss / b
}

/// Combined per-step operators for the full-domain equilibrium residual:
/// r_{t} = K_eff u_t - (F_t + alpha F_{t-1} + A_u u_{t-1} + A_v v_{t-1}
/// + A_a a_{t-1}) with the kinematic recurrence supplying v and a.
#[derive(Debug, Clone)]
pub struct PiSystem {
    pub keff: Matrix,
    a_u: Matrix,
    a_v: Matrix,
    a_a: Matrix,
    cf: StepCoeffs,
}

impl PiSystem {
    pub fn new(m: &Matrix, c: &Matrix, k: &Matrix, config: &IntegratorConfig) -> Result<PiSystem> {
        let keff = crate::dynamics::effective_stiffness(m, c, k, config)?;
        let cf = config.coeffs();
        let n = m.rows();
        let mut a_u = Matrix::zeros(n, n);
        a_u.add_scaled(k, -cf.alpha);
        a_u.add_scaled(m, cf.acc_u);
        a_u.add_scaled(c, cf.f_c_u);
        let mut a_v = Matrix::zeros(n, n);
        a_v.add_scaled(m, cf.acc_v);
        a_v.add_scaled(c, cf.f_c_v);
        let mut a_a = Matrix::zeros(n, n);
        a_a.add_scaled(m, cf.acc_a);
        a_a.add_scaled(c, cf.f_c_a);
        Ok(PiSystem { keff, a_u, a_v, a_a, cf })
    }
}

/// Outcome of one physics-residual evaluation over a sample horizon.
pub struct PiEval {
    /// sum over steps of the squared residual norm
    pub residual_sq: f64,
    /// sum over steps of the squared effective-force norm (normalizer data)
    pub force_sq: f64,
    /// d(residual_sq)/d(u history), present when requested
    pub d_u: Option<Matrix>,
}

/// Evaluate the full-domain equilibrium residual of a displacement history
/// (rows = steps, free DOFs) under the force history, differentiating
/// through the velocity/acceleration recurrence when `want_grad`.
///
/// The kinematic recurrences are elementwise, so all matrix work batches
/// over the horizon: the forward pass is four time-batched products, the
/// adjoint four more plus an elementwise backward sweep. (The condensed
/// variant cannot batch this way: its eliminated-state solve sits inside
/// the time loop.)
pub fn pi_full_eval(
    sys: &PiSystem,
    u: &Matrix,
    forces: &Matrix,
    want_grad: bool,
    detached: bool,
) -> PiEval {
    let n_t = u.rows();
    let n = u.cols();
    let cf = &sys.cf;

    // kinematic history from the displacements (vector ops only)
    let mut v_hist = Matrix::zeros(n_t, n);
    let mut a_hist = Matrix::zeros(n_t, n);
    let mut v = vec![0.0; n];
    let mut a = vec![0.0; n];
    for t in 1..n_t {
        let mut a_next = vec![0.0; n];
        cf.acceleration(u.row(t), u.row(t - 1), &v, &a, &mut a_next);
        let mut v_next = vec![0.0; n];
        cf.velocity(&v, &a, &a_next, &mut v_next);
        a = a_next;
        v = v_next;
        a_hist.row_mut(t).copy_from_slice(&a);
        v_hist.row_mut(t).copy_from_slice(&v);
    }

    // batched products: row t of each is the operator applied to state row t
    // (all operators are symmetric)
    let ku = matmul(u, &sys.keff);
    let au = matmul(u, &sys.a_u);
    let av = matmul(&v_hist, &sys.a_v);
    let aa = matmul(&a_hist, &sys.a_a);

    let mut residuals = Matrix::zeros(n_t, n);
    let mut residual_sq = 0.0;
    let mut force_sq = 0.0;
    for t in 1..n_t {
        let r = residuals.row_mut(t);
        let (f_t, f_prev) = (forces.row(t), forces.row(t - 1));
        let (au_p, av_p, aa_p) = (au.row(t - 1), av.row(t - 1), aa.row(t - 1));
        let ku_t = ku.row(t);
        for i in 0..n {
            let feff = f_t[i] + cf.alpha * f_prev[i] + au_p[i] + av_p[i] + aa_p[i];
            force_sq += feff * feff;
            r[i] = ku_t[i] - feff;
        }
        residual_sq += crate::linalg::dot(r, r);
    }

    let d_u = want_grad.then(|| {
        let mut rbar = residuals;
        rbar.scale(2.0);
        // d_u from the K_eff u_t term
        let mut d_u = matmul(&rbar, &sys.keff);
        // S = -rbar seeds every F_eff adjoint; batch its products
        let mut s_mat = rbar;
        s_mat.scale(-1.0);
        let su = matmul(&s_mat, &sys.a_u);
        // rows shift down one step: F_eff(t) depends on state at t-1
        for t in 1..n_t {
            crate::linalg::axpy(1.0, su.row(t), d_u.row_mut(t - 1));
        }
        if !detached {
            let sv = matmul(&s_mat, &sys.a_v);
            let sa = matmul(&s_mat, &sys.a_a);
            let mut vbar_cur = vec![0.0; n];
            let mut abar_cur = vec![0.0; n];
            let mut vbar_prev = vec![0.0; n];
            let mut abar_prev = vec![0.0; n];
            for t in (1..n_t).rev() {
                crate::linalg::axpy(1.0, sv.row(t), &mut vbar_prev);
                crate::linalg::axpy(1.0, sa.row(t), &mut abar_prev);
                // v_t = v_{t-1} + vel_a0 a_{t-1} + vel_a1 a_t
                for i in 0..n {
                    vbar_prev[i] += vbar_cur[i];
                    abar_prev[i] += cf.vel_a0 * vbar_cur[i];
                    abar_cur[i] += cf.vel_a1 * vbar_cur[i];
                }
                // a_t = acc_u (u_t - u_{t-1}) - acc_v v_{t-1} - acc_a a_{t-1}
                let (row_t, row_prev) = {
                    let (lo, hi) = d_u.data_mut().split_at_mut(t * n);
                    (&mut hi[..n], &mut lo[(t - 1) * n..])
                };
                for i in 0..n {
                    row_t[i] += cf.acc_u * abar_cur[i];
                    row_prev[i] -= cf.acc_u * abar_cur[i];
                    vbar_prev[i] -= cf.acc_v * abar_cur[i];
                    abar_prev[i] -= cf.acc_a * abar_cur[i];
                }
                std::mem::swap(&mut vbar_cur, &mut vbar_prev);
                std::mem::swap(&mut abar_cur, &mut abar_prev);
                vbar_prev.iter_mut().for_each(|x| *x = 0.0);
                abar_prev.iter_mut().for_each(|x| *x = 0.0);
            }
        }
        d_u
    });
    PiEval { residual_sq, force_sq, d_u }
}

/// Per-lambda operators for the condensed-domain residual
/// r_t = S_eff u_I,t - F_C_eff,t, with the eliminated state reconstructed
/// step by step from zero initial conditions.
pub struct PiSchurSystem {
    pub part: SchurPartition,
    a_u: BlockOps,
    a_v: BlockOps,
    a_a: BlockOps,
    cf: StepCoeffs,
}

struct BlockOps {
    ii: Matrix,
    i_n: Matrix,
    ni: Matrix,
    nn: Matrix,
}

fn combine_blocks(
    m: &crate::schur::Blocks,
    c: &crate::schur::Blocks,
    k: &crate::schur::Blocks,
    wm: f64,
    wc: f64,
    wk: f64,
) -> BlockOps {
    let mk = |mb: &Matrix, cb: &Matrix, kb: &Matrix| {
        let mut out = Matrix::zeros(mb.rows(), mb.cols());
        out.add_scaled(mb, wm);
        out.add_scaled(cb, wc);
        out.add_scaled(kb, wk);
        out
    };
    BlockOps {
        ii: mk(&m.ii, &c.ii, &k.ii),
        i_n: mk(&m.i_n, &c.i_n, &k.i_n),
        ni: mk(&m.ni, &c.ni, &k.ni),
        nn: mk(&m.nn, &c.nn, &k.nn),
    }
}

impl PiSchurSystem {
    pub fn new(part: SchurPartition) -> PiSchurSystem {
        let cf = part.config().coeffs();
        let a_u = combine_blocks(&part.m, &part.c, &part.k, cf.acc_u, cf.f_c_u, -cf.alpha);
        let a_v = combine_blocks(&part.m, &part.c, &part.k, cf.acc_v, cf.f_c_v, 0.0);
        let a_a = combine_blocks(&part.m, &part.c, &part.k, cf.acc_a, cf.f_c_a, 0.0);
        PiSchurSystem { part, a_u, a_v, a_a, cf }
    }
}

/// Evaluate the condensed residual for a retained displacement history.
/// `forces_free` carries full free-DOF force rows; they are split through
/// the partition. Gradients flow through the whole recurrence, including
/// the eliminated-state reconstruction, unless `detached`.
pub fn pi_schur_eval(
    sys: &PiSchurSystem,
    u_i: &Matrix,
    forces_free: &Matrix,
    want_grad: bool,
    detached: bool,
) -> PiEval {
    let part = &sys.part;
    let cf = &sys.cf;
    let n_t = u_i.rows();
    let ni = part.n_retained();
    let nn = part.n_eliminated();
    debug_assert_eq!(u_i.cols(), ni);

    // forward pass, storing what the adjoint needs
    let mut residuals = Matrix::zeros(n_t, ni);
    let mut residual_sq = 0.0;
    let mut force_sq = 0.0;
    let mut v_i = vec![0.0; ni];
    let mut a_i = vec![0.0; ni];
    let mut u_n = vec![0.0; nn];
    let mut v_n = vec![0.0; nn];
    let mut a_n = vec![0.0; nn];
    let mut buf_i = vec![0.0; ni];

    for t in 1..n_t {
        let (f_i_prev, f_n_prev) = part.split_vec(forces_free.row(t - 1));
        let (f_i_t, f_n_t) = part.split_vec(forces_free.row(t));

        let mut f_i_eff = vec![0.0; ni];
        for i in 0..ni {
            f_i_eff[i] = f_i_t[i] + cf.alpha * f_i_prev[i];
        }
        sys.a_u.ii.matvec_acc(u_i.row(t - 1), 1.0, &mut f_i_eff);
        sys.a_u.i_n.matvec_acc(&u_n, 1.0, &mut f_i_eff);
        sys.a_v.ii.matvec_acc(&v_i, 1.0, &mut f_i_eff);
        sys.a_v.i_n.matvec_acc(&v_n, 1.0, &mut f_i_eff);
        sys.a_a.ii.matvec_acc(&a_i, 1.0, &mut f_i_eff);
        sys.a_a.i_n.matvec_acc(&a_n, 1.0, &mut f_i_eff);

        let mut f_n_eff = vec![0.0; nn];
        for i in 0..nn {
            f_n_eff[i] = f_n_t[i] + cf.alpha * f_n_prev[i];
        }
        sys.a_u.ni.matvec_acc(u_i.row(t - 1), 1.0, &mut f_n_eff);
        sys.a_u.nn.matvec_acc(&u_n, 1.0, &mut f_n_eff);
        sys.a_v.ni.matvec_acc(&v_i, 1.0, &mut f_n_eff);
        sys.a_v.nn.matvec_acc(&v_n, 1.0, &mut f_n_eff);
        sys.a_a.ni.matvec_acc(&a_i, 1.0, &mut f_n_eff);
        sys.a_a.nn.matvec_acc(&a_n, 1.0, &mut f_n_eff);

        // advance retained kinematics from the predicted displacements
        let mut a_i_next = vec![0.0; ni];
        cf.acceleration(u_i.row(t), u_i.row(t - 1), &v_i, &a_i, &mut a_i_next);
        let mut v_i_next = vec![0.0; ni];
        cf.velocity(&v_i, &a_i, &a_i_next, &mut v_i_next);
        a_i = a_i_next;
        v_i = v_i_next;

        // reconstruct the eliminated state
        let mut rhs = f_n_eff.clone();
        part.k_eff.ni.matvec_acc(u_i.row(t), -1.0, &mut rhs);
        let u_n_next = part.solve_eliminated(&rhs);
        let mut a_n_next = vec![0.0; nn];
        cf.acceleration(&u_n_next, &u_n, &v_n, &a_n, &mut a_n_next);
        let mut v_n_next = vec![0.0; nn];
        cf.velocity(&v_n, &a_n, &a_n_next, &mut v_n_next);
        u_n = u_n_next;
        a_n = a_n_next;
        v_n = v_n_next;

        // condensed force and residual
        let f_c = part.condensed_force(&f_i_eff, &f_n_eff).expect("sizes fixed");
        force_sq += crate::linalg::dot(&f_c, &f_c);
        part.s_eff().matvec_into(u_i.row(t), &mut buf_i);
        let r = residuals.row_mut(t);
        for i in 0..ni {
            r[i] = buf_i[i] - f_c[i];
        }
        residual_sq += crate::linalg::dot(r, r);
    }

    let d_u = want_grad.then(|| {
        let mut d_ui = Matrix::zeros(n_t, ni);
        let mut vbar_i_cur = vec![0.0; ni];
        let mut abar_i_cur = vec![0.0; ni];
        let mut vbar_i_prev = vec![0.0; ni];
        let mut abar_i_prev = vec![0.0; ni];
        let mut ubar_n_cur = vec![0.0; nn];
        let mut vbar_n_cur = vec![0.0; nn];
        let mut abar_n_cur = vec![0.0; nn];
        let mut ubar_n_prev = vec![0.0; nn];
        let mut vbar_n_prev = vec![0.0; nn];
        let mut abar_n_prev = vec![0.0; nn];
        for t in (1..n_t).rev() {
            // r_t = S_eff u_I,t - F_C,t
            let rbar: Vec<f64> = residuals.row(t).iter().map(|x| 2.0 * x).collect();
            part.s_eff().matvec_acc(&rbar, 1.0, d_ui.row_mut(t));
            let fbar_c: Vec<f64> = rbar.iter().map(|x| -x).collect();

            // F_C = F_I_eff - K_eff_IN Knn^-1 F_N_eff
            let fbar_i = fbar_c.clone();
            let tmp = part.k_eff.i_n.matvec_t(&fbar_c);
            let mut fbar_n: Vec<f64> = part.solve_eliminated(&tmp).iter().map(|x| -x).collect();

            if detached {
                // keep the direct dependence on u_I at t and t-1, holding
                // the recurrence state fixed
                crate::linalg::axpy(1.0, &sys.a_u.ii.matvec_t(&fbar_i), d_ui.row_mut(t - 1));
                if nn > 0 {
                    crate::linalg::axpy(1.0, &sys.a_u.ni.matvec_t(&fbar_n), d_ui.row_mut(t - 1));
                }
            } else {
                // v_N,t distribution
                for i in 0..nn {
                    vbar_n_prev[i] += vbar_n_cur[i];
                    abar_n_prev[i] += cf.vel_a0 * vbar_n_cur[i];
                    abar_n_cur[i] += cf.vel_a1 * vbar_n_cur[i];
                }
                // a_N,t distribution
                for i in 0..nn {
                    ubar_n_cur[i] += cf.acc_u * abar_n_cur[i];
                    ubar_n_prev[i] -= cf.acc_u * abar_n_cur[i];
                    vbar_n_prev[i] -= cf.acc_v * abar_n_cur[i];
                    abar_n_prev[i] -= cf.acc_a * abar_n_cur[i];
                }
                // u_N,t = Knn^-1 (F_N_eff - K_eff_NI u_I,t)
                if nn > 0 {
                    let z = part.solve_eliminated(&ubar_n_cur);
                    for i in 0..nn {
                        fbar_n[i] += z[i];
                    }
                    let w = part.k_eff.ni.matvec_t(&z);
                    for i in 0..ni {
                        d_ui[(t, i)] -= w[i];
                    }
                }
                // F_N_eff distribution to state at t-1
                if nn > 0 {
                    crate::linalg::axpy(1.0, &sys.a_u.ni.matvec_t(&fbar_n), d_ui.row_mut(t - 1));
                    let un_contrib = sys.a_u.nn.matvec_t(&fbar_n);
                    crate::linalg::axpy(1.0, &un_contrib, &mut ubar_n_prev);
                    crate::linalg::axpy(1.0, &sys.a_v.ni.matvec_t(&fbar_n), &mut vbar_i_prev);
                    crate::linalg::axpy(1.0, &sys.a_v.nn.matvec_t(&fbar_n), &mut vbar_n_prev);
                    crate::linalg::axpy(1.0, &sys.a_a.ni.matvec_t(&fbar_n), &mut abar_i_prev);
                    crate::linalg::axpy(1.0, &sys.a_a.nn.matvec_t(&fbar_n), &mut abar_n_prev);
                }
                // F_I_eff distribution to state at t-1
                crate::linalg::axpy(1.0, &sys.a_u.ii.matvec_t(&fbar_i), d_ui.row_mut(t - 1));
                crate::linalg::axpy(1.0, &sys.a_u.i_n.matvec_t(&fbar_i), &mut ubar_n_prev);
                crate::linalg::axpy(1.0, &sys.a_v.ii.matvec_t(&fbar_i), &mut vbar_i_prev);
                crate::linalg::axpy(1.0, &sys.a_v.i_n.matvec_t(&fbar_i), &mut vbar_n_prev);
                crate::linalg::axpy(1.0, &sys.a_a.ii.matvec_t(&fbar_i), &mut abar_i_prev);
                crate::linalg::axpy(1.0, &sys.a_a.i_n.matvec_t(&fbar_i), &mut abar_n_prev);

                // v_I,t distribution
                for i in 0..ni {
                    vbar_i_prev[i] += vbar_i_cur[i];
                    abar_i_prev[i] += cf.vel_a0 * vbar_i_cur[i];
                    abar_i_cur[i] += cf.vel_a1 * vbar_i_cur[i];
                }
                // a_I,t distribution
                let (row_t, row_prev) = {
                    let n_cols = ni;
                    let (lo, hi) = d_ui.data_mut().split_at_mut(t * n_cols);
                    (&mut hi[..n_cols], &mut lo[(t - 1) * n_cols..])
                };
                for i in 0..ni {
                    row_t[i] += cf.acc_u * abar_i_cur[i];
                    row_prev[i] -= cf.acc_u * abar_i_cur[i];
                    vbar_i_prev[i] -= cf.acc_v * abar_i_cur[i];
                    abar_i_prev[i] -= cf.acc_a * abar_i_cur[i];
                }
            }

            std::mem::swap(&mut vbar_i_cur, &mut vbar_i_prev);
            std::mem::swap(&mut abar_i_cur, &mut abar_i_prev);
            std::mem::swap(&mut ubar_n_cur, &mut ubar_n_prev);
            std::mem::swap(&mut vbar_n_cur, &mut vbar_n_prev);
            std::mem::swap(&mut abar_n_cur, &mut abar_n_prev);
            for v in [
                &mut vbar_i_prev,
                &mut abar_i_prev,
            ] {
                v.iter_mut().for_each(|x| *x = 0.0);
            }
            for v in [&mut ubar_n_prev, &mut vbar_n_prev, &mut abar_n_prev] {
                v.iter_mut().for_each(|x| *x = 0.0);
            }
        }
        d_ui
    });

    PiEval { residual_sq, force_sq, d_u }
}

/// Everything the physics losses and post-processing need, computed once
/// per (dataset, retained set): the assembled system, force histories on
/// the reference grid, and per-lambda operator caches.
pub struct PhysicsContext {
    pub system: AssembledSystem,
    /// (dataset node, component) -> free-DOF index
    pub free_map: Vec<Option<usize>>,
    /// per-sample force histories on the reference grid (n_t x n_free)
    pub forces: Vec<Matrix>,
    pi_full: HashMap<u64, PiSystem>,
    pi_schur: HashMap<u64, PiSchurSystem>,
    /// (subset position, component) pairs aligned with the partition's
    /// retained order
    pub retained_pred_map: Vec<(usize, usize)>,
    pub retained_nodes: Vec<usize>,
}

impl PhysicsContext {
    pub fn new(dataset: &Dataset, retained_nodes: &[usize], want_schur: bool) -> Result<Self> {
        let model = dataset.rebuild_model()?;
        let system = crate::fem::assemble_system(&model, dataset.mass_model, dataset.rayleigh)?;
        if model.n_nodes() != dataset.n_nodes {
            return Err(Error::artifact("dataset/structure node count mismatch"));
        }
        for (i, node) in model.nodes.iter().enumerate() {
            if (node.x - dataset.coords[(i, 0)]).abs() > 1e-9
                || (node.y - dataset.coords[(i, 1)]).abs() > 1e-9
            {
                return Err(Error::artifact("dataset coordinates do not match the structure"));
            }
        }
        let mut free_map = Vec::with_capacity(dataset.n_nodes * 3);
        for s in 0..dataset.n_nodes {
            let node = dataset.node_ids[s];
            for comp in 0..3 {
                free_map.push(system.free_index_of(3 * node + comp));
            }
        }

        let dt_ref = dataset.dt_ref();
        let forces: Vec<Matrix> = (0..dataset.n_samples)
            .into_par_iter()
            .map(|i| {
                let full = dataset.force_history(&model, i)?;
                let mut free = Matrix::zeros(dataset.n_t, system.n_free());
                for t in 0..dataset.n_t {
                    let row = full.row(t);
                    let dst = free.row_mut(t);
                    for (fi, &d) in system.free_dofs.iter().enumerate() {
                        dst[fi] = row[d];
                    }
                }
                Ok(free)
            })
            .collect::<Result<Vec<_>>>()?;

        let mut pi_full = HashMap::new();
        let mut pi_schur = HashMap::new();
        let mut retained_pred_map = Vec::new();
        let retained_free = crate::schur::retained_free_indices(&system, retained_nodes)?;
        for (pos, &node) in retained_nodes.iter().enumerate() {
            for comp in 0..3 {
                if system.free_index_of(3 * dataset.node_ids[node] + comp).is_some() {
                    retained_pred_map.push((pos, comp));
                }
            }
        }
        for &lam in &dataset.lambda {
            let key = lam.to_bits();
            if pi_full.contains_key(&key) {
                continue;
            }
            let cfg = IntegratorConfig::with_lambda(dataset.alpha_hht, dt_ref, lam)?;
            let sys = PiSystem::new(system.m_ff(), system.c_ff(), system.k_ff(), &cfg)?;
            pi_full.insert(key, sys);
            if want_schur {
                let part = SchurPartition::new(
                    system.m_ff(),
                    system.c_ff(),
                    system.k_ff(),
                    cfg,
                    &retained_free,
                )?;
                pi_schur.insert(key, PiSchurSystem::new(part));
            }
        }
        Ok(PhysicsContext {
            system,
            free_map,
            forces,
            pi_full,
            pi_schur,
            retained_pred_map,
            retained_nodes: retained_nodes.to_vec(),
        })
    }

    pub fn pi_full_for(&self, lambda: f64) -> &PiSystem {
        &self.pi_full[&lambda.to_bits()]
    }

    pub fn pi_schur_for(&self, lambda: f64) -> &PiSchurSystem {
        &self.pi_schur[&lambda.to_bits()]
    }

    /// Full-domain displacement history (free DOFs) from unscaled
    /// predictions of one sample over all dataset nodes.
    pub fn preds_to_free_history(
        &self,
        preds: &Predictions,
        sample_row: usize,
        scalers: &crate::data::ScalerParams,
    ) -> Matrix {
        let n_t = preds.n_times;
        let n_free = self.system.n_free();
        let mut u = Matrix::zeros(n_t, n_free);
        for t in 0..n_t {
            let row = u.row_mut(t);
            for s in 0..preds.n_nodes {
                for k in 0..preds.n_out {
                    if let Some(fi) = self.free_map[3 * s + k] {
                        row[fi] = scalers.unscale_output(preds.get(sample_row, t, s, k), k);
                    }
                }
            }
        }
        u
    }
}

/// Mean squared dynamic-equilibrium residual of full-domain predictions.
/// Accumulates `weight * gradient` into `d_preds`; returns the raw loss
/// (mean over batch samples of the per-sample residual sum).
pub fn loss_pi_full(
    preds: &Predictions,
    sample_ids: &[usize],
    dataset: &Dataset,
    ctx: &PhysicsContext,
    weight: f64,
    detached: bool,
    d_preds: &mut Matrix,
) -> f64 {
    let b = sample_ids.len() as f64;
    let evals: Vec<(f64, Option<Matrix>)> = sample_ids
        .par_iter()
        .enumerate()
        .map(|(row, &sid)| {
            let u = ctx.preds_to_free_history(preds, row, &dataset.scalers);
            let sys = ctx.pi_full_for(dataset.lambda[sid]);
            let eval = pi_full_eval(sys, &u, &ctx.forces[sid], weight != 0.0, detached);
            (eval.residual_sq, eval.d_u)
        })
        .collect();

    let mut loss = 0.0;
    for (row, (res, d_u)) in evals.into_iter().enumerate() {
        loss += res;
        if let Some(d_u) = d_u {
            let scale = weight / b;
            for t in 0..preds.n_times {
                let src = d_u.row(t);
                let dst_row = row * preds.n_times + t;
                let dst = d_preds.row_mut(dst_row);
                for s in 0..preds.n_nodes {
                    for k in 0..preds.n_out {
                        if let Some(fi) = ctx.free_map[3 * s + k] {
                            dst[s * preds.n_out + k] +=
                                scale * dataset.scalers.output_scale[k] * src[fi];
                        }
                    }
                }
            }
        }
    }
    loss / b
}

/// Mean squared condensed-equilibrium residual of retained-node
/// predictions, walking the reconstruction of the eliminated state.
pub fn loss_pi_schur(
    preds: &Predictions,
    sample_ids: &[usize],
    dataset: &Dataset,
    ctx: &PhysicsContext,
    weight: f64,
    detached: bool,
    d_preds: &mut Matrix,
) -> f64 {
    let b = sample_ids.len() as f64;
    let n_ret = ctx.retained_pred_map.len();
    let evals: Vec<(f64, Option<Matrix>)> = sample_ids
        .par_iter()
        .enumerate()
        .map(|(row, &sid)| {
            let mut u_i = Matrix::zeros(preds.n_times, n_ret);
            for t in 0..preds.n_times {
                let dst = u_i.row_mut(t);
                for (j, &(pos, comp)) in ctx.retained_pred_map.iter().enumerate() {
                    dst[j] = dataset
                        .scalers
                        .unscale_output(preds.get(row, t, pos, comp), comp);
                }
            }
            let sys = ctx.pi_schur_for(dataset.lambda[sid]);
            let eval = pi_schur_eval(sys, &u_i, &ctx.forces[sid], weight != 0.0, detached);
            (eval.residual_sq, eval.d_u)
        })
        .collect();

    let mut loss = 0.0;
    for (row, (res, d_u)) in evals.into_iter().enumerate() {
        loss += res;
        if let Some(d_u) = d_u {
            let scale = weight / b;
            for t in 0..preds.n_times {
                let src = d_u.row(t);
                let dst = d_preds.row_mut(row * preds.n_times + t);
                for (j, &(pos, comp)) in ctx.retained_pred_map.iter().enumerate() {
                    dst[pos * preds.n_out + comp] +=
                        scale * dataset.scalers.output_scale[comp] * src[j];
                }
            }
        }
    }
    loss / b
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LossCurvePoint {
    pub epoch: usize,
    pub total: f64,
    pub data: f64,
    pub physics: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Timings {
    pub train_seconds: f64,
    pub inference_seconds_per_sample: f64,
    pub postprocess_seconds_per_sample: f64,
    pub fem_seconds_per_sample: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComponentStats {
    pub name: String,
    pub mean: f64,
    pub std: f64,
    pub max: f64,
    pub histogram: Vec<u32>,
    pub bin_edges: Vec<f64>,
    pub zero_norm_samples: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorReport {
    pub split: String,
    pub sample_ids: Vec<usize>,
    /// relative L2 per sample and component, physical units
    pub per_sample: Vec<Vec<f64>>,
    pub components: Vec<ComponentStats>,
    pub grid_factor: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalOutcome {
    pub direct: ErrorReport,
    /// full-domain errors after physics-based reconstruction (Schur strategies)
    pub postprocessed: Option<ErrorReport>,
    pub timings: Timings,
}

const HISTOGRAM_BINS: usize = 20;
const COMPONENT_NAMES: [&str; 3] = ["Ux", "Uy", "Rz"];

fn component_stats(name: &str, errors: &[f64], zero_norms: usize) -> ComponentStats {
    let n = errors.len().max(1) as f64;
    let mean = errors.iter().sum::<f64>() / n;
    let var = errors.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / n;
    let max = errors.iter().cloned().fold(0.0, f64::max);
    let hi = if max > 0.0 { max * (1.0 + 1e-9) } else { 1.0 };
    let mut histogram = vec![0u32; HISTOGRAM_BINS];
    for &e in errors {
        let bin = ((e / hi) * HISTOGRAM_BINS as f64).floor() as usize;
        histogram[bin.min(HISTOGRAM_BINS - 1)] += 1;
    }
    let bin_edges = (0..=HISTOGRAM_BINS).map(|i| hi * i as f64 / HISTOGRAM_BINS as f64).collect();
    ComponentStats {
        name: name.to_string(),
        mean,
        std: var.sqrt(),
        max,
        histogram,
        bin_edges,
        zero_norm_samples: zero_norms,
    }
}

/// Relative L2 errors per sample and component between prediction and truth
/// tensors laid out as [sample][time][node][component] (physical units).
/// Components with zero truth norm report the absolute error instead and
/// are counted per component.
pub fn tensor_errors(
    pred: &[f64],
    truth: &[f64],
    n_samples: usize,
    n_t: usize,
    n_nodes: usize,
    n_out: usize,
    split: &str,
    sample_ids: &[usize],
    grid_factor: usize,
) -> ErrorReport {
    assert_eq!(pred.len(), n_samples * n_t * n_nodes * n_out);
    assert_eq!(pred.len(), truth.len());
    let mut per_sample = vec![vec![0.0; n_out]; n_samples];
    let mut zero_norms = vec![0usize; n_out];
    for s in 0..n_samples {
        let mut num = vec![0.0f64; n_out];
        let mut den = vec![0.0f64; n_out];
        let base = s * n_t * n_nodes * n_out;
        for i in 0..n_t * n_nodes * n_out {
            let k = i % n_out;
            let d = pred[base + i] - truth[base + i];
            num[k] += d * d;
            den[k] += truth[base + i] * truth[base + i];
        }
        for k in 0..n_out {
            per_sample[s][k] = if den[k] > 0.0 {
                (num[k] / den[k]).sqrt()
            } else {
                zero_norms[k] += 1;
                num[k].sqrt()
            };
        }
    }
    let components = (0..n_out)
        .map(|k| {
            let errs: Vec<f64> = per_sample.iter().map(|row| row[k]).collect();
            let name = COMPONENT_NAMES.get(k).copied().unwrap_or("C?");
            component_stats(name, &errs, zero_norms[k])
        })
        .collect();
    ErrorReport {
        split: split.to_string(),
        sample_ids: sample_ids.to_vec(),
        per_sample,
        components,
        grid_factor,
    }
}

/// Refine a uniform grid keeping every original point (factor 2 doubles the
/// resolution: n -> 2n - 1).
pub fn refine_grid(times: &[f64], factor: usize) -> Vec<f64> {
    if factor <= 1 {
        return times.to_vec();
    }
    let n = times.len();
    let m = factor * (n - 1) + 1;
    let span = times[n - 1] - times[0];
    (0..m).map(|j| times[0] + span * j as f64 / (m - 1) as f64).collect()
}

/// Scaled branch-input rows for the given samples.
fn branch_rows(dataset: &Dataset, ids: &[usize]) -> Matrix {
    let raw = Matrix::from_fn(ids.len(), dataset.branch_inputs.cols(), |r, c| {
        dataset.branch_inputs[(ids[r], c)]
    });
    dataset.scalers.scale_inputs(&raw)
}

/// Scaled target entries for the given samples over a node subset, laid out
/// to match `Predictions::values`.
fn scaled_subset_targets(dataset: &Dataset, ids: &[usize], subset: &[usize]) -> Vec<f64> {
    let (n_t, n_out) = (dataset.n_t, dataset.n_components);
    let mut out = Vec::with_capacity(ids.len() * n_t * subset.len() * n_out);
    for &sid in ids {
        for t in 0..n_t {
            for &node in subset {
                for k in 0..n_out {
                    out.push(dataset.scalers.scale_output(dataset.target(sid, t, node, k), k));
                }
            }
        }
    }
    out
}

/// Raw (physical) target entries for the given samples over a node subset.
fn raw_subset_targets(dataset: &Dataset, ids: &[usize], subset: &[usize]) -> Vec<f64> {
    let (n_t, n_out) = (dataset.n_t, dataset.n_components);
    let mut out = Vec::with_capacity(ids.len() * n_t * subset.len() * n_out);
    for &sid in ids {
        for t in 0..n_t {
            for &node in subset {
                for k in 0..n_out {
                    out.push(dataset.target(sid, t, node, k));
                }
            }
        }
    }
    out
}

fn subset_coords(dataset: &Dataset, subset: &[usize]) -> Matrix {
    Matrix::from_fn(subset.len(), dataset.coords.cols(), |r, c| dataset.coords[(subset[r], c)])
}

/// Retained node selection for the Schur strategies.
pub fn resolve_retained_nodes(dataset: &Dataset, config: &TrainingConfig) -> Result<Vec<usize>> {
    if let Some(nodes) = &config.retained_nodes {
        if nodes.is_empty() {
            return Err(Error::config("retained node list must not be empty"));
        }
        for &n in nodes {
            if n >= dataset.n_nodes {
                return Err(Error::config(format!("retained node {n} out of range")));
            }
        }
        return Ok(nodes.clone());
    }
    let model = dataset.rebuild_model()?;
    Ok(crate::schur::default_retained_nodes(&model, config.retained_count))
}

/// Mean squared effective-force norm of the training split, used as the
/// physics normalizer (w2 defaults to its reciprocal).
pub fn physics_normalizer(
    dataset: &Dataset,
    ctx: &PhysicsContext,
    schur: bool,
) -> f64 {
    let sums: Vec<f64> = dataset
        .train_idx
        .par_iter()
        .map(|&sid| {
            if schur {
                let sys = ctx.pi_schur_for(dataset.lambda[sid]);
                let n_ret = ctx.retained_pred_map.len();
                let mut u_i = Matrix::zeros(dataset.n_t, n_ret);
                for t in 0..dataset.n_t {
                    for (j, &(pos, comp)) in ctx.retained_pred_map.iter().enumerate() {
                        u_i[(t, j)] = dataset.target(sid, t, ctx.retained_nodes[pos], comp);
                    }
                }
                pi_schur_eval(sys, &u_i, &ctx.forces[sid], false, false).force_sq
            } else {
                let sys = ctx.pi_full_for(dataset.lambda[sid]);
                let mut u = Matrix::zeros(dataset.n_t, ctx.system.n_free());
                for t in 0..dataset.n_t {
                    let row = u.row_mut(t);
                    for s in 0..dataset.n_nodes {
                        for k in 0..dataset.n_components {
                            if let Some(fi) = ctx.free_map[3 * s + k] {
                                row[fi] = dataset.target(sid, t, s, k);
                            }
                        }
                    }
                }
                pi_full_eval(sys, &u, &ctx.forces[sid], false, false).force_sq
            }
        })
        .collect();
    sums.iter().sum::<f64>() / sums.len().max(1) as f64
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub params: MionetParams,
    pub curves: Vec<LossCurvePoint>,
    pub w2_used: f64,
    pub normalizer: Option<f64>,
    pub node_subset: Vec<usize>,
    pub timings: Timings,
    pub checkpoint_dir: Option<PathBuf>,
}

/// Shuffled mini-batch Adam over the configured strategy. Writes loss
/// curves and checkpoints under `out_dir` when given. Aborts on non-finite
/// loss, keeping the last good checkpoint.
pub fn train(
    dataset: &Dataset,
    arch: &ArchConfig,
    config: &TrainingConfig,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    config.validate(dataset)?;
    arch.validate()?;
    if arch.branch_widths[0] != dataset.branch_inputs.cols() {
        return Err(Error::config("arch branch input width does not match dataset"));
    }
    if arch.n_out != dataset.n_components {
        return Err(Error::config("arch output count does not match dataset"));
    }

    let strategy = config.strategy;
    let node_subset: Vec<usize> = if strategy.schur_domain() {
        resolve_retained_nodes(dataset, config)?
    } else {
        (0..dataset.n_nodes).collect()
    };
    let coords = subset_coords(dataset, &node_subset);
    let times = dataset.time_grid.clone();

    let needs_ctx = strategy.uses_physics_loss() || strategy.postprocess();
    let retained = if strategy.schur_domain() {
        node_subset.clone()
    } else {
        // a context built for a full strategy never builds partitions
        Vec::new()
    };
    let ctx = if needs_ctx {
        Some(PhysicsContext::new(
            dataset,
            if retained.is_empty() { &node_subset } else { &retained },
            strategy.schur_domain(),
        )?)
    } else {
        None
    };

    let (w2, normalizer) = if strategy.uses_physics_loss() {
        match config.w2 {
            Some(w) => (w, None),
            None => {
                let norm = physics_normalizer(
                    dataset,
                    ctx.as_ref().unwrap(),
                    matches!(strategy, Strategy::DdPiSchur),
                );
                (1.0 / norm.max(1e-300), Some(norm))
            }
        }
    } else {
        (0.0, None)
    };

    let mut params = init_params(arch, config.seed)?;
    let mut adam = AdamState::new(arch);
    let mut rng = Rng::new(config.seed ^ 0xbadc0de5u64);
    let mut curves = Vec::new();
    let train_start = Instant::now();
    let mut last_checkpoint: Option<PathBuf> = None;

    // per-sample scaled targets for the subset, train split only
    let train_ids = dataset.train_idx.clone();
    let mut order = train_ids.clone();

    for epoch in 0..config.epochs {
        rng.shuffle(&mut order);
        let mut epoch_total = 0.0;
        let mut epoch_data = 0.0;
        let mut epoch_physics = 0.0;
        let mut batches = 0.0;
        for batch in order.chunks(config.batch_size) {
            let branch = branch_rows(dataset, batch);
            let (preds, cache) = forward(&params, &branch, &coords, &times)?;
            let targets = scaled_subset_targets(dataset, batch, &node_subset);
            let mut d_preds = Matrix::zeros(preds.values.rows(), preds.values.cols());
            let l_data = loss_dd(&preds, &targets, config.w1, &mut d_preds);
            let l_phys = match strategy {
                Strategy::DdPiFull => loss_pi_full(
                    &preds,
                    batch,
                    dataset,
                    ctx.as_ref().unwrap(),
                    w2,
                    config.gradient_mode == GradientMode::PerStepDetached,
                    &mut d_preds,
                ),
                Strategy::DdPiSchur => loss_pi_schur(
                    &preds,
                    batch,
                    dataset,
                    ctx.as_ref().unwrap(),
                    w2,
                    config.gradient_mode == GradientMode::PerStepDetached,
                    &mut d_preds,
                ),
                _ => 0.0,
            };
            let total = config.w1 * l_data + w2 * l_phys;
            if !total.is_finite() {
                return Err(Error::numerical(format!(
                    "training diverged at epoch {epoch} (loss {total}); last checkpoint: {:?}",
                    last_checkpoint
                )));
            }
            let grads = backward(&params, &cache, &d_preds)?;
            adam_update(&mut params, &grads, &mut adam, config.lr);
            epoch_total += total;
            epoch_data += l_data;
            epoch_physics += l_phys;
            batches += 1.0;
        }
        if epoch % config.log_every.max(1) == 0 || epoch + 1 == config.epochs {
            curves.push(LossCurvePoint {
                epoch,
                total: epoch_total / batches,
                data: epoch_data / batches,
                physics: epoch_physics / batches,
            });
        }
        if let Some(dir) = out_dir {
            if config.checkpoint_every > 0 && (epoch + 1) % config.checkpoint_every == 0 {
                let ckpt = dir.join(format!("checkpoint-{:05}", epoch + 1));
                save_checkpoint_with_meta(&ckpt, &params, dataset, config, epoch + 1, &node_subset)?;
                last_checkpoint = Some(ckpt);
            }
        }
    }
    let train_seconds = train_start.elapsed().as_secs_f64();

    let checkpoint_dir = if let Some(dir) = out_dir {
        let ckpt = dir.join("checkpoint");
        save_checkpoint_with_meta(&ckpt, &params, dataset, config, config.epochs, &node_subset)?;
        write_loss_curves(&dir.join("loss_curves.csv"), &curves)?;
        Some(ckpt)
    } else {
        None
    };

    Ok(TrainOutcome {
        params,
        curves,
        w2_used: w2,
        normalizer,
        node_subset,
        timings: Timings { train_seconds, ..Default::default() },
        checkpoint_dir,
    })
}

fn save_checkpoint_with_meta(
    dir: &Path,
    params: &MionetParams,
    dataset: &Dataset,
    config: &TrainingConfig,
    step: usize,
    node_subset: &[usize],
) -> Result<()> {
    crate::mionet::save_checkpoint(
        dir,
        params,
        serde_json::json!({
            "seed": config.seed,
            "step": step,
            "strategy": config.strategy.as_str(),
            "scalers": dataset.scalers,
            "split_seed": dataset.split_seed,
            "node_subset": node_subset,
        }),
    )
}

pub fn write_loss_curves(path: &Path, curves: &[LossCurvePoint]) -> Result<()> {
    let mut out = String::from("epoch,total,data,physics\n");
    for p in curves {
        out.push_str(&format!("{},{:e},{:e},{:e}\n", p.epoch, p.total, p.data, p.physics));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Evaluate trained parameters on a sample split. For Schur strategies a
/// physics context reconstructs the full domain and reports post-processed
/// errors alongside retained-node errors.
pub fn evaluate(
    params: &MionetParams,
    dataset: &Dataset,
    split_ids: &[usize],
    split_name: &str,
    node_subset: &[usize],
    ctx: Option<&PhysicsContext>,
    grid_factor: usize,
) -> Result<EvalOutcome> {
    if split_ids.is_empty() {
        return Err(Error::config("evaluate: empty split"));
    }
    let coords = subset_coords(dataset, node_subset);
    let times = refine_grid(&dataset.time_grid, grid_factor);
    let branch = branch_rows(dataset, split_ids);

    let t0 = Instant::now();
    let preds = crate::mionet::predict(params, &branch, &coords, &times)?;
    let inference_seconds = t0.elapsed().as_secs_f64();

    // direct errors on the training grid points (every grid_factor-th row)
    let n_out = dataset.n_components;
    let n_sub = node_subset.len();
    let mut pred_phys = vec![0.0; split_ids.len() * dataset.n_t * n_sub * n_out];
    for (row, _) in split_ids.iter().enumerate() {
        for t in 0..dataset.n_t {
            for s in 0..n_sub {
                for k in 0..n_out {
                    let v = preds.get(row, t * grid_factor.max(1), s, k);
                    pred_phys[((row * dataset.n_t + t) * n_sub + s) * n_out + k] =
                        dataset.scalers.unscale_output(v, k);
                }
            }
        }
    }
    let truth = raw_subset_targets(dataset, split_ids, node_subset);
    let direct = tensor_errors(
        &pred_phys,
        &truth,
        split_ids.len(),
        dataset.n_t,
        n_sub,
        n_out,
        split_name,
        split_ids,
        grid_factor,
    );

    // physics-based reconstruction of the eliminated domain
    let mut postprocessed = None;
    let mut postprocess_seconds = 0.0;
    if let Some(ctx) = ctx {
        if !ctx.retained_pred_map.is_empty() && ctx.retained_nodes.len() == n_sub {
            let t1 = Instant::now();
            let full: Vec<Vec<f64>> = split_ids
                .par_iter()
                .enumerate()
                .map(|(row, &sid)| reconstruct_from_preds(&preds, row, sid, dataset, ctx))
                .collect::<Result<Vec<_>>>()?;
            postprocess_seconds = t1.elapsed().as_secs_f64();
            let mut pred_full =
                vec![0.0; split_ids.len() * dataset.n_t * dataset.n_nodes * n_out];
            let len = dataset.n_t * dataset.n_nodes * n_out;
            for (row, sample) in full.iter().enumerate() {
                pred_full[row * len..(row + 1) * len].copy_from_slice(sample);
            }
            let all_nodes: Vec<usize> = (0..dataset.n_nodes).collect();
            let truth_full = raw_subset_targets(dataset, split_ids, &all_nodes);
            postprocessed = Some(tensor_errors(
                &pred_full,
                &truth_full,
                split_ids.len(),
                dataset.n_t,
                dataset.n_nodes,
                n_out,
                split_name,
                split_ids,
                grid_factor,
            ));
        }
    }

    Ok(EvalOutcome {
        direct,
        postprocessed,
        timings: Timings {
            train_seconds: 0.0,
            inference_seconds_per_sample: inference_seconds / split_ids.len() as f64,
            postprocess_seconds_per_sample: postprocess_seconds / split_ids.len() as f64,
            fem_seconds_per_sample: None,
        },
    })
}

/// Full-domain predicted displacements [t][node][comp] for one sample:
/// retained nodes from the network, the rest reconstructed through the
/// condensed system.
pub fn reconstruct_from_preds(
    preds: &Predictions,
    row: usize,
    sample_id: usize,
    dataset: &Dataset,
    ctx: &PhysicsContext,
) -> Result<Vec<f64>> {
    reconstruct_history_from_preds(preds, row, sample_id, dataset, ctx).map(|(u, _, _)| u)
}

/// As [`reconstruct_from_preds`], returning the velocity and acceleration
/// histories the reconstruction produces alongside the displacements.
pub fn reconstruct_history_from_preds(
    preds: &Predictions,
    row: usize,
    sample_id: usize,
    dataset: &Dataset,
    ctx: &PhysicsContext,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let n_ret = ctx.retained_pred_map.len();
    // sample the network on the training grid rows when evaluated on a
    // refined grid
    let stride = (preds.n_times - 1) / (dataset.n_t - 1).max(1);
    let mut u_i = Matrix::zeros(dataset.n_t, n_ret);
    for t in 0..dataset.n_t {
        for (j, &(pos, comp)) in ctx.retained_pred_map.iter().enumerate() {
            u_i[(t, j)] = dataset
                .scalers
                .unscale_output(preds.get(row, t * stride.max(1), pos, comp), comp);
        }
    }
    let sys = ctx.pi_schur_for(dataset.lambda[sample_id]);
    let (u_free, v_free, a_free) = sys.part.reconstruct_full(&u_i, &ctx.forces[sample_id])?;
    let len = dataset.n_t * dataset.n_nodes * dataset.n_components;
    let mut out = (vec![0.0; len], vec![0.0; len], vec![0.0; len]);
    for t in 0..dataset.n_t {
        for s in 0..dataset.n_nodes {
            for k in 0..dataset.n_components {
                let idx = (t * dataset.n_nodes + s) * dataset.n_components + k;
                if let Some(fi) = ctx.free_map[3 * s + k] {
                    out.0[idx] = u_free[(t, fi)];
                    out.1[idx] = v_free[(t, fi)];
                    out.2[idx] = a_free[(t, fi)];
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepAxis {
    pub name: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepPoint {
    pub axis: String,
    pub value: f64,
    pub mean_rel_l2: f64,
    pub std_rel_l2: f64,
    pub train_minutes: f64,
    pub status: String,
}

/// One training run per grid point at reduced epochs; failures are recorded
/// and the sweep continues.
pub fn sweep(
    dataset: &Dataset,
    base_neurons: usize,
    base_layers: usize,
    activation: crate::mionet::Activation,
    base_config: &TrainingConfig,
    axes: &[SweepAxis],
    epochs: usize,
) -> Result<Vec<SweepPoint>> {
    if axes.is_empty() || axes.iter().all(|a| a.values.is_empty()) {
        return Err(Error::config("empty sweep grid"));
    }
    let mut points = Vec::new();
    for axis in axes {
        for &value in &axis.values {
            let mut neurons = base_neurons;
            let mut layers = base_layers;
            let mut act = activation;
            let mut config = base_config.clone();
            config.epochs = epochs;
            match axis.name.as_str() {
                "neurons" => neurons = value as usize,
                "layers" => layers = value as usize,
                "batch" => config.batch_size = value as usize,
                "lr" => config.lr = value,
                // 0 = relu, 1 = tanh, 2 = sin
                "activation" => {
                    act = match value as usize {
                        0 => crate::mionet::Activation::Relu,
                        1 => crate::mionet::Activation::Tanh,
                        2 => crate::mionet::Activation::Sin,
                        other => {
                            return Err(Error::config(format!(
                                "activation axis value {other} not in 0..=2"
                            )))
                        }
                    }
                }
                other => return Err(Error::config(format!("unknown sweep axis `{other}`"))),
            }
            let arch = ArchConfig::rectangular(
                dataset.branch_inputs.cols(),
                dataset.coords.cols(),
                neurons,
                layers,
                dataset.n_components,
                act,
            );
            let start = Instant::now();
            let run = train(dataset, &arch, &config, None).and_then(|outcome| {
                evaluate(
                    &outcome.params,
                    dataset,
                    &dataset.test_idx,
                    "test",
                    &outcome.node_subset,
                    None,
                    1,
                )
            });
            let minutes = start.elapsed().as_secs_f64() / 60.0;
            match run {
                Ok(eval) => {
                    let means: Vec<f64> = eval.direct.components.iter().map(|c| c.mean).collect();
                    let mean = means.iter().sum::<f64>() / means.len() as f64;
                    let stds: Vec<f64> = eval.direct.components.iter().map(|c| c.std).collect();
                    let std = stds.iter().sum::<f64>() / stds.len() as f64;
                    points.push(SweepPoint {
                        axis: axis.name.clone(),
                        value,
                        mean_rel_l2: mean,
                        std_rel_l2: std,
                        train_minutes: minutes,
                        status: "ok".to_string(),
                    });
                }
                Err(e) => points.push(SweepPoint {
                    axis: axis.name.clone(),
                    value,
                    mean_rel_l2: f64::NAN,
                    std_rel_l2: f64::NAN,
                    train_minutes: minutes,
                    status: format!("error: {e}"),
                }),
            }
        }
    }
    Ok(points)
}
