use movload::data::{generate_dataset, GenerationConfig};
use movload::fem::{beam_truss_params, MassModel, RayleighCoefficients};
use movload::linalg::Matrix;
use movload::schur::default_retained_nodes;
use movload::training::{PhysicsContext, tensor_errors};

fn main() {
    let (dataset, _) = generate_dataset(
        &beam_truss_params(),
        MassModel::Consistent,
        RayleighCoefficients { a_r: 0.1, b_r: 0.05 },
        &GenerationConfig::default(),
    )
    .unwrap();
    let model = dataset.rebuild_model().unwrap();

    for (label, retained) in [
        ("default-5", default_retained_nodes(&model, 5)),
        ("web-points {5,9,14,18,23}", vec![5usize, 9, 14, 18, 23]),
        ("quarters {4,9,13,18,23}", vec![4usize, 9, 13, 18, 23]),
        ("wide-7", default_retained_nodes(&model, 7)),
    ] {
        let ctx = PhysicsContext::new(&dataset, &retained, true).unwrap();
        let ids = &dataset.test_idx;
        // feed EXACT retained displacements; measure the reconstruction floor
        let n_ret = ctx.retained_pred_map.len();
        let mut pred_full = vec![0.0; ids.len() * dataset.sample_len()];
        for (row, &sid) in ids.iter().enumerate() {
            let mut u_i = Matrix::zeros(dataset.n_t, n_ret);
            for t in 0..dataset.n_t {
                for (j, &(pos, comp)) in ctx.retained_pred_map.iter().enumerate() {
                    u_i[(t, j)] = dataset.target(sid, t, retained[pos], comp);
                }
            }
            let sys = ctx.pi_schur_for(dataset.lambda[sid]);
            let (u_free, _, _) = sys.part.reconstruct_full(&u_i, &ctx.forces[sid]).unwrap();
            let base = row * dataset.sample_len();
            for t in 0..dataset.n_t {
                for s in 0..dataset.n_nodes {
                    for k in 0..3 {
                        pred_full[base + (t * dataset.n_nodes + s) * 3 + k] =
                            match ctx.free_map[3 * s + k] {
                                Some(fi) => u_free[(t, fi)],
                                None => 0.0,
                            };
                    }
                }
            }
        }
        let all: Vec<usize> = (0..dataset.n_nodes).collect();
        let mut truth = Vec::with_capacity(pred_full.len());
        for &sid in ids {
            for t in 0..dataset.n_t {
                for &s in &all {
                    for k in 0..3 {
                        truth.push(dataset.target(sid, t, s, k));
                    }
                }
            }
        }
        let report = tensor_errors(
            &pred_full,
            &truth,
            ids.len(),
            dataset.n_t,
            dataset.n_nodes,
            3,
            "floor",
            ids,
            1,
        );
        print!("{label:28}");
        for c in &report.components {
            print!("  {} mean {:.4} max {:.4}", c.name, c.mean, c.max);
        }
        // find the worst Rz sample
        let (mut wi, mut wv) = (0, 0.0);
        for (i, row) in report.per_sample.iter().enumerate() {
            if row[2] > wv {
                wv = row[2];
                wi = i;
            }
        }
        let sid = ids[wi];
        println!(
            "  | worst Rz sample {} v={} q={:.0}",
            sid, dataset.scenarios[sid].velocity, dataset.scenarios[sid].axle_loads[0]
        );
    }
}
