use movload::dynamics::*;
use movload::linalg::Matrix;

fn main() {
    let w = 2.0 * std::f64::consts::PI;
    let m = Matrix::from_vec(1, 1, vec![1.0]);
    let c = Matrix::from_vec(1, 1, vec![0.0]);
    let k = Matrix::from_vec(1, 1, vec![w * w]);
    let cfg = IntegratorConfig::new(0.0, 0.01).unwrap();
    let n_t = 1001;

    // path A: simulate_free (consistent a0 = -w^2)
    let forces = Matrix::zeros(n_t, 1);
    let init = State { u: vec![1.0], v: vec![0.0], a: vec![0.0] };
    let (u, _, _) = simulate_free(&m, &c, &k, &forces, &cfg, Some(init)).unwrap();
    let mut max_a = 0.0_f64;
    for t in 0..n_t {
        let exact = (w * t as f64 * 0.01).cos();
        max_a = max_a.max((u[(t, 0)] - exact).abs());
    }

    // path B: raw stepping from (u=1, v=0, a=0)
    let stepper = HhtStepper::new(&m, &c, &k, cfg).unwrap();
    let mut state = State { u: vec![1.0], v: vec![0.0], a: vec![0.0] };
    let zero = [0.0];
    let mut max_b = (1.0f64 - 1.0).abs();
    for t in 1..n_t {
        state = stepper.step(&state, &zero, &zero);
        let exact = (w * t as f64 * 0.01).cos();
        max_b = max_b.max((state.u[0] - exact).abs());
    }

    // path C: raw stepping from consistent a0
    let mut state = State { u: vec![1.0], v: vec![0.0], a: vec![-w * w] };
    let mut max_c = 0.0f64;
    for t in 1..n_t {
        state = stepper.step(&state, &zero, &zero);
        let exact = (w * t as f64 * 0.01).cos();
        max_c = max_c.max((state.u[0] - exact).abs());
    }

    println!("consistent a0 (simulate): {max_a:.6}");
    println!("zero a0       (stepping): {max_b:.6}");
    println!("consistent a0 (stepping): {max_c:.6}");
}
