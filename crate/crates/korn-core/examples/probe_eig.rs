use korn_core::geometry::Domain;
use korn_core::korn::{deflation_completeness, korn_constant, KornOptions};
use std::time::Instant;

fn main() {
    let dom = Domain::builtin("unit_cube").unwrap();
    let t0 = Instant::now();
    let rep = korn_constant(&dom, 0.0625, &KornOptions::default()).unwrap();
    println!(
        "h=1/16 iters={} lambda={:.12} c={:.9} dt={:.1}s",
        rep.iterations,
        rep.lambda_min,
        rep.c,
        t0.elapsed().as_secs_f64()
    );
    let t0 = Instant::now();
    let d = deflation_completeness(&dom, 0.0625, 7);
    println!(
        "deflation h=1/16 ratio={:.2e} dt={:.1}s",
        d.ratio,
        t0.elapsed().as_secs_f64()
    );
    let t0 = Instant::now();
    let rep = korn_constant(&dom, 0.03125, &KornOptions::default()).unwrap();
    println!(
        "h=1/32 iters={} lambda={:.12} c={:.9} dt={:.1}s",
        rep.iterations,
        rep.lambda_min,
        rep.c,
        t0.elapsed().as_secs_f64()
    );
}
