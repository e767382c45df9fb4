//! Rescaling time by `k` is the same as rescaling the flux by `k`.
use iconcl::flux::FluxSpec;
use iconcl::grid::GridFunction;
use iconcl::inference::stride_rescale;
use iconcl::solver::exact_forward;

fn main() -> iconcl::Result<()> {
    let u = GridFunction::from_cell_averages(100, |x| (2.0 * std::f64::consts::PI * x).cos())?;
    for base in [FluxSpec::SinCos, FluxSpec::SinCos.scaled(3.0)?] {
        println!("flux {base}");
        for k in [0.1, 0.2, 0.3, 0.4, 0.5] {
            let scaled = exact_forward(&u, &stride_rescale(&base, k)?, 0.1)?;
            let strided = exact_forward(&u, &base, 0.1 * k)?;
            println!(
                "  k = {k}: |F(kf, 0.1) - F(f, {:.2})| = {:.2e}",
                0.1 * k,
                scaled.l1_distance(&strided)?
            );
        }
    }
    Ok(())
}
