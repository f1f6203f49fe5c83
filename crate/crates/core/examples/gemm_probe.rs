use ndarray::Array2;
use std::time::Instant;

fn main() {
    // Representative training GEMMs: activations [512 x in] x weights [in x out]
    for (m, k, n) in [(512, 900, 128), (512, 128, 128), (512, 27, 128), (128, 900, 128)] {
        let a = Array2::<f32>::from_elem((m, k), 0.5f32);
        let b = Array2::<f32>::from_elem((k, n), 0.25f32);
        let mut c = Array2::<f32>::zeros((m, n));
        let t0 = Instant::now();
        let iters = 200;
        for _ in 0..iters {
            ndarray::linalg::general_mat_mul(1.0f32, &a, &b, 0.0f32, &mut c);
        }
        let el = t0.elapsed().as_secs_f64();
        let gflops = (2.0 * m as f64 * k as f64 * n as f64 * iters as f64) / el / 1e9;
        println!("({m},{k},{n}): {gflops:.1} GFLOP/s single-thread");
    }
    // Two threads in parallel
    let t0 = Instant::now();
    let iters = 200;
    std::thread::scope(|s| {
        for _ in 0..2 {
            s.spawn(|| {
                let a = Array2::<f32>::from_elem((512, 900), 0.5f32);
                let b = Array2::<f32>::from_elem((900, 128), 0.25f32);
                let mut c = Array2::<f32>::zeros((512, 128));
                for _ in 0..iters {
                    ndarray::linalg::general_mat_mul(1.0f32, &a, &b, 0.0f32, &mut c);
                }
            });
        }
    });
    let el = t0.elapsed().as_secs_f64();
    let gflops = (2.0 * 512.0 * 900.0 * 128.0 * iters as f64 * 2.0) / el / 1e9;
    println!("(512,900,128) x2 threads: {gflops:.1} GFLOP/s total");
}
