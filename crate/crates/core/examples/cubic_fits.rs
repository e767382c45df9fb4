//! Cubic stand-ins for non-polynomial fluxes: Taylor and least-squares fits.
use iconcl::evalkit::taylor_cubic;
use iconcl::flux::{adaptive_cubic_fit, cubic_fit, FluxSpec};

fn main() -> iconcl::Result<()> {
    for flux in [FluxSpec::SinCos, FluxSpec::Tanh] {
        println!("{flux}");
        let t = taylor_cubic(&flux);
        println!("  taylor      a={:+.4} b={:+.4} c={:+.4}", t.a, t.b, t.c);
        for (lo, hi) in [(-1.0, 1.0), (-2.0, 2.0)] {
            let f = cubic_fit(&flux, lo, hi)?;
            println!("  fit[{lo},{hi}] a={:+.4} b={:+.4} c={:+.4}", f.a, f.b, f.c);
        }
        let data = [-0.7, 0.2, 1.9];
        let a = adaptive_cubic_fit(&flux, &data)?;
        println!(
            "  adaptive on [{}, {}] a={:+.4} b={:+.4} c={:+.4}",
            a.lo, a.hi, a.coeffs.a, a.coeffs.b, a.coeffs.c
        );
    }
    Ok(())
}
