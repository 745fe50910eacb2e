use movload::data::{generate_dataset, GenerationConfig};
use movload::fem::{beam_truss_params, MassModel, RayleighCoefficients};
use movload::mionet::{Activation, ArchConfig};
use movload::training::{train, Strategy, TrainingConfig};
use std::time::Instant;

fn main() {
    let t0 = Instant::now();
    let (dataset, _) = generate_dataset(
        &beam_truss_params(),
        MassModel::Consistent,
        RayleighCoefficients { a_r: 0.1, b_r: 0.05 },
        &GenerationConfig::default(),
    )
    .unwrap();
    println!("dataset: {:.1} s", t0.elapsed().as_secs_f64());

    let arch = ArchConfig::rectangular(
        dataset.branch_inputs.cols(),
        2,
        200,
        6,
        3,
        Activation::Relu,
    );
    for (strategy, epochs) in [
        (Strategy::DdFull, 20),
        (Strategy::DdPiFull, 6),
        (Strategy::DdPiSchur, 6),
        (Strategy::DdSchur, 20),
    ] {
        let config = TrainingConfig {
            strategy,
            batch_size: 20,
            epochs,
            lr: 5e-4,
            seed: 7,
            log_every: 1,
            ..TrainingConfig::default()
        };
        let t0 = Instant::now();
        let out = train(&dataset, &arch, &config, None).unwrap();
        let secs = t0.elapsed().as_secs_f64();
        println!(
            "{:12} {epochs:3} epochs: {secs:6.2} s ({:.3} s/epoch)  loss {:.3e} -> {:.3e}",
            strategy.as_str(),
            secs / epochs as f64,
            out.curves.first().unwrap().total,
            out.curves.last().unwrap().total
        );
    }
}
