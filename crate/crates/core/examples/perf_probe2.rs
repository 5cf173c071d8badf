// Micro-probes: which primitive is slow?
use ndarray::{Array1, Array2, Axis};
use std::time::Instant;

fn main() {
    let n = 20000;
    let a = Array2::<f32>::from_elem((24, 32), 0.5);
    let w = Array2::<f32>::from_elem((32, 32), 0.25);
    let t0 = Instant::now();
    let mut sink = 0f32;
    for _ in 0..n {
        let c = a.dot(&w);
        sink += c[[0, 0]];
    }
    println!("gemm 24x32@32x32      {:8.2} us", t0.elapsed().as_secs_f64() / n as f64 * 1e6);

    let v = Array1::<f32>::from_elem(64, 0.5);
    let m = Array2::<f32>::from_elem((64, 1024), 0.25);
    let t0 = Instant::now();
    for _ in 0..n {
        let c = v.dot(&m);
        sink += c[0];
    }
    println!("vecmat 64 @ 64x1024   {:8.2} us", t0.elapsed().as_secs_f64() / n as f64 * 1e6);

    let v2 = v.clone().insert_axis(Axis(0)); // 1x64
    let t0 = Instant::now();
    for _ in 0..n {
        let c = v2.dot(&m);
        sink += c[[0, 0]];
    }
    println!("gemm 1x64 @ 64x1024   {:8.2} us", t0.elapsed().as_secs_f64() / n as f64 * 1e6);

    let dm = Array1::<f32>::from_elem(1024, 0.1);
    let t0 = Instant::now();
    for _ in 0..n {
        let mut out = Array2::<f32>::zeros((64, 1024));
        for (i, &ai) in v.iter().enumerate() {
            for (j, &bj) in dm.iter().enumerate() {
                out[[i, j]] = ai * bj;
            }
        }
        sink += out[[0, 0]];
    }
    println!("outer indexed 64x1024 {:8.2} us", t0.elapsed().as_secs_f64() / n as f64 * 1e6);

    let va = v.clone().insert_axis(Axis(1)); // 64x1
    let vb = dm.clone().insert_axis(Axis(0)); // 1x1024
    let t0 = Instant::now();
    for _ in 0..n {
        let c = va.dot(&vb);
        sink += c[[0, 0]];
    }
    println!("outer gemm 64x1024    {:8.2} us", t0.elapsed().as_secs_f64() / n as f64 * 1e6);

    let t0 = Instant::now();
    for _ in 0..n {
        let c = m.dot(&dm); // mat-vec 64x1024 @ 1024
        sink += c[0];
    }
    println!("matvec 64x1024 @ 1024 {:8.2} us", t0.elapsed().as_secs_f64() / n as f64 * 1e6);

    let big = Array2::<f32>::from_elem((24, 128), 0.5);
    let w2 = Array2::<f32>::from_elem((128, 32), 0.25);
    let t0 = Instant::now();
    for _ in 0..n {
        let c = big.dot(&w2);
        sink += c[[0, 0]];
    }
    println!("gemm 24x128@128x32    {:8.2} us", t0.elapsed().as_secs_f64() / n as f64 * 1e6);
    println!("sink {sink}");
}
