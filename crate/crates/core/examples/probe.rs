use movload::dynamics::*;
use movload::fem::*;

fn group_lambda(params: &TrussParams) -> ([f64; 4], [f64; 4], f64) {
    let model = build_truss_model(params).unwrap();
    let system = assemble_system(
        &model,
        MassModel::Consistent,
        RayleighCoefficients { a_r: 0.1, b_r: 0.05 },
    )
    .unwrap();
    let cfg = IntegratorConfig::new(-0.05, 0.01).unwrap();
    let uy_dofs: Vec<usize> = (0..model.n_nodes()).map(|n| 3 * n + 1).collect();
    let mut durations = [0.0_f64; 4];
    let mut peak_all = 0.0_f64;
    for (vi, v) in [10.0, 15.0, 20.0, 25.0].into_iter().enumerate() {
        for q in [5_000.0, 30_000.0] {
            let scenario = MovingLoadScenario::single(v, q, 2.0, 20.0);
            let n_t = 301;
            let forces = moving_load_history(&model, &scenario, cfg.dt, n_t).unwrap();
            let hist = simulate(&system, &forces, &cfg, None).unwrap();
            let series: Vec<f64> = (0..n_t)
                .map(|t| uy_dofs.iter().map(|&d| hist.u[(t, d)].abs()).fold(0.0, f64::max))
                .collect();
            peak_all = peak_all.max(series.iter().cloned().fold(0.0, f64::max));
            let peak_idx = series
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            let mut keep = n_t;
            let mut run = 0;
            for (t, &s) in series.iter().enumerate().skip(peak_idx) {
                if s < 1e-6 {
                    run += 1;
                    if run == 3 {
                        keep = t + 1 - 3;
                        break;
                    }
                } else {
                    run = 0;
                }
            }
            let dur = (keep.saturating_sub(1)) as f64 * cfg.dt;
            durations[vi] = durations[vi].max(dur);
        }
    }
    let lam = [
        durations[0] / durations[0],
        durations[0] / durations[1],
        durations[0] / durations[2],
        durations[0] / durations[3],
    ];
    (durations, lam, peak_all)
}

fn lowest_modes(params: &TrussParams, count: usize) {
    use movload::linalg::*;
    let model = build_truss_model(params).unwrap();
    let system = assemble_system(
        &model,
        MassModel::Consistent,
        RayleighCoefficients { a_r: 0.1, b_r: 0.05 },
    )
    .unwrap();
    let k = system.k_ff();
    let m = system.m_ff();
    let n = k.rows();
    let chol = Cholesky::factor(k).unwrap();
    let mut modes: Vec<Vec<f64>> = Vec::new();
    for mode_i in 0..count {
        let mut x: Vec<f64> = (0..n).map(|i| ((i * 37 + mode_i * 11) % 17) as f64 - 8.0).collect();
        for _ in 0..400 {
            // M-orthogonalize against found modes
            for prev in &modes {
                let mx = m.matvec(prev);
                let c = dot(&x, &mx) / dot(prev, &mx);
                axpy(-c, prev, &mut x);
            }
            let mx = m.matvec(&x);
            x = chol.solve(&mx);
            let nrm = norm2(&x);
            x.iter_mut().for_each(|v| *v /= nrm);
        }
        let kx = k.matvec(&x);
        let mx = m.matvec(&x);
        let omega2 = dot(&x, &kx) / dot(&x, &mx);
        let omega = omega2.sqrt();
        // characterize the shape: energy split by component
        let mut comp_energy = [0.0_f64; 3];
        for (i, &d) in system.free_dofs.iter().enumerate() {
            comp_energy[d % 3] += x[i] * x[i];
        }
        let top: Vec<(usize, f64)> = {
            let mut v: Vec<(usize, f64)> = system
                .free_dofs
                .iter()
                .enumerate()
                .map(|(i, &d)| (d, x[i].abs()))
                .collect();
            v.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
            v.truncate(4);
            v
        };
        println!(
            "  mode {mode_i}: omega={omega:.1} rad/s f={:.2} Hz sigma={:.1}  energy(ux,uy,rz)=({:.2},{:.2},{:.2})  top dofs {:?}",
            omega / (2.0 * std::f64::consts::PI),
            (0.1 + 0.05 * omega2) / 2.0,
            comp_energy[0], comp_energy[1], comp_energy[2],
            top.iter().map(|(d, _)| format!("n{}c{}", d / 3, d % 3)).collect::<Vec<_>>()
        );
        modes.push(x);
    }
}

fn main() {
    let targets = [1.0, 1.4125, 1.7795, 2.0926];
    for (web, braced) in [
        (1, None),
        (3, None),
        (3, Some(2)),
        (3, Some(1)),
        (9, None),
        (9, Some(1)),
        (27, None),
    ] {
        let mut params = beam_truss_params();
        params.web_every = web;
        params.braced_modules = braced;
        println!("--- web_every={web} braced={braced:?}");
        lowest_modes(&params, 2);
        let (dur, lam, peak) = group_lambda(&params);
        let devs: Vec<f64> = lam
            .iter()
            .zip(&targets)
            .map(|(l, t)| (l / t - 1.0) * 100.0)
            .collect();
        let worst = devs.iter().cloned().fold(0.0_f64, |m, d| m.max(d.abs()));
        println!(
            "braced={braced:?}: dur={dur:?} lam=[{:.4},{:.4},{:.4}] worst_dev={worst:.2}% peak={peak:.2e}",
            lam[1], lam[2], lam[3]
        );
        println!("   devs: {devs:.2?}");
    }
}
