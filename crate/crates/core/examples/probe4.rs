use movload::linalg::{matmul, matmul_a_bt, matmul_at_b, Matrix};
use movload::rng::Rng;
use std::time::Instant;

fn bench(name: &str, flops: f64, mut f: impl FnMut()) {
    // warm up
    f();
    let reps = 20;
    let t0 = Instant::now();
    for _ in 0..reps {
        f();
    }
    let secs = t0.elapsed().as_secs_f64() / reps as f64;
    println!("{name:32} {:8.3} ms  {:6.2} GF/s", secs * 1e3, flops / secs / 1e9);
}

fn main() {
    let mut rng = Rng::new(1);
    let w_bt = Matrix::from_fn(1120, 200, |_, _| rng.range(-1.0, 1.0));
    let ts_r = Matrix::from_fn(200, 168, |_, _| rng.range(-1.0, 1.0));
    let d_preds = Matrix::from_fn(1120, 168, |_, _| rng.range(-1.0, 1.0));
    let w200 = Matrix::from_fn(200, 200, |_, _| rng.range(-1.0, 1.0));
    let x56 = Matrix::from_fn(56, 200, |_, _| rng.range(-1.0, 1.0));
    let x1120 = Matrix::from_fn(1120, 200, |_, _| rng.range(-1.0, 1.0));

    let f = 2.0 * 1120.0 * 200.0 * 168.0;
    bench("contraction fwd (1120x200x168)", f, || {
        let _ = matmul(&w_bt, &ts_r);
    });
    bench("d_wbt a_bt (1120x168 @ 200x168)", f, || {
        let _ = matmul_a_bt(&d_preds, &ts_r);
    });
    bench("d_tsr at_b (1120x200 ^T 1120x168)", f, || {
        let _ = matmul_at_b(&w_bt, &d_preds);
    });
    let f = 2.0 * 56.0 * 200.0 * 200.0;
    bench("trunk layer fwd (56x200x200)", f, || {
        let _ = matmul(&x56, &w200);
    });
    bench("trunk dX a_bt (56x200 @ 200x200)", f, || {
        let _ = matmul_a_bt(&x56, &w200);
    });
    bench("trunk dW at_b (56^T)", f, || {
        let _ = matmul_at_b(&x56, &x56);
    });
    let f = 2.0 * 1120.0 * 200.0 * 200.0;
    bench("big a_bt (1120x200 @ 200x200)", f, || {
        let _ = matmul_a_bt(&x1120, &w200);
    });
}
