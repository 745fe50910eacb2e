use movload::data::{generate_dataset, GenerationConfig};
use movload::fem::{beam_truss_params, MassModel, RayleighCoefficients};
use movload::mionet::{Activation, ArchConfig};
use movload::training::{evaluate, train, PhysicsContext, Strategy, TrainingConfig};

fn main() {
    let (dataset, _) = generate_dataset(
        &beam_truss_params(),
        MassModel::Consistent,
        RayleighCoefficients { a_r: 0.1, b_r: 0.05 },
        &GenerationConfig::default(),
    )
    .unwrap();
    let model = dataset.rebuild_model().unwrap();
    let retained = movload::schur::default_retained_nodes(&model, 5);
    let arch = ArchConfig::rectangular(
        dataset.branch_inputs.cols(),
        2,
        200,
        6,
        3,
        Activation::Relu,
    );
    for (label, epochs, lr) in [
        ("e5000-lr1e-3", 5000usize, 1e-3),
        ("e10000-lr5e-4", 10000, 5e-4),
        ("e8000-lr7.5e-4", 8000, 7.5e-4),
    ] {
        let config = TrainingConfig {
            strategy: Strategy::DdSchur,
            retained_nodes: Some(retained.clone()),
            batch_size: 20,
            epochs,
            lr,
            seed: 7,
            ..TrainingConfig::default()
        };
        let outcome = train(&dataset, &arch, &config, None).unwrap();
        let ctx = PhysicsContext::new(&dataset, &retained, true).unwrap();
        let eval = evaluate(
            &outcome.params,
            &dataset,
            &dataset.test_idx,
            "test",
            &retained,
            Some(&ctx),
            1,
        )
        .unwrap();
        print!("{label:16} retained Rz {:.4}/{:.4}", eval.direct.components[2].mean, eval.direct.components[2].max);
        let post = eval.postprocessed.unwrap();
        print!("  post:");
        for c in &post.components {
            print!(" {} {:.4}/{:.4}", c.name, c.mean, c.max);
        }
        println!();
    }
}
