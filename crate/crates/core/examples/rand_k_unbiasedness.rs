//! Monte Carlo check of the Rand-k reconstruction against the exact
//! subset-enumeration oracle.
//!
//! Usage: `cargo run --release --example rand_k_unbiasedness -- [d] [k] [trials]`

use pfels::numerics::{gaussian_sample, ModelVector, RngStream};
use pfels::sparsifier::{
    embed_transpose, expected_reconstruction_oracle, generate_projection, project, variance_oracle,
};

fn arg(i: usize, default: usize) -> usize {
    std::env::args().nth(i).map(|a| a.parse().expect("expected an integer")).unwrap_or(default)
}

fn main() -> pfels::Result<()> {
    let (d, k, trials) = (arg(1, 8), arg(2, 3), arg(3, 200_000));
    let root = RngStream::new(7);
    let v = gaussian_sample(&root.child(0), d, 1.0);

    let mut mean = ModelVector::zeros(d);
    let mut sq_err = 0.0;
    for t in 0..trials {
        let proj = generate_projection(d, k, &root.derive(&[1, t as u64]))?;
        let r = embed_transpose(&proj, &project(&proj, &v)?)?;
        sq_err += r.sub(&v).norm_squared();
        mean.axpy(1.0 / trials as f64, &r);
    }

    let expected = v.scaled(k as f64 / d as f64);
    println!("d = {d}, k = {k}, {trials} draws");
    println!("{:>4} {:>12} {:>12} {:>12}", "i", "v_i", "mean A'Av", "(k/d) v_i");
    for i in 0..d {
        println!("{:>4} {:>12.6} {:>12.6} {:>12.6}", i, v.as_slice()[i], mean.as_slice()[i], expected.as_slice()[i]);
    }
    if d <= pfels::sparsifier::MAX_ENUMERATION_DIM {
        let exact = expected_reconstruction_oracle(d, k, &v)?;
        println!("enumeration vs (k/d) v: {:.3e}", exact.sub(&expected).norm());
        println!(
            "variance: sampled {:.6}, enumerated {:.6}, (1 - k/d)|v|^2 {:.6}",
            sq_err / trials as f64,
            variance_oracle(d, k, &v)?,
            (1.0 - k as f64 / d as f64) * v.norm_squared()
        );
    }
    Ok(())
}
