//! Empirical covariance of periodic Gaussian random fields against the kernel.
use iconcl::grf::{periodic_kernel, GrfConfig, GrfSampler};
use iconcl::rng::rng_from;

fn main() -> iconcl::Result<()> {
    let samples: usize = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(4000);
    let cfg = GrfConfig {
        clip: None,
        ..GrfConfig::default()
    };
    let sampler = GrfSampler::new(cfg.clone())?;
    let mut rng = rng_from(11);
    let n = cfg.n;
    let lags = [0, n / 8, n / 4, n / 2];
    let mut acc = vec![0.0; lags.len()];
    for _ in 0..samples {
        let u = sampler.draw(&mut rng);
        for (a, &lag) in acc.iter_mut().zip(&lags) {
            *a += (0..n).map(|i| u[i] * u[(i + lag) % n]).sum::<f64>() / n as f64;
        }
    }
    println!("{:>6} {:>10} {:>10}", "lag", "empirical", "kernel");
    for (a, &lag) in acc.iter().zip(&lags) {
        let d = lag as f64 / n as f64;
        println!(
            "{d:>6.3} {:>10.4} {:>10.4}",
            a / samples as f64,
            periodic_kernel(0.0, d, &cfg)
        );
    }
    Ok(())
}
