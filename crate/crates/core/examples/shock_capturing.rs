//! Burgers-type flux `u^2` from a square pulse: a shock on the right edge
//! moving at the Rankine-Hugoniot speed, a rarefaction on the left.
use iconcl::flux::FluxSpec;
use iconcl::grid::GridFunction;
use iconcl::solver::{simulate, BASE_DT};

fn main() -> iconcl::Result<()> {
    let n = 200;
    let u0 =
        GridFunction::from_cell_averages(n, |x| if (0.2..0.5).contains(&x) { 1.0 } else { 0.0 })?;
    let flux = FluxSpec::cubic(0.0, 1.0, 0.0);
    let t = 0.1;
    let rec = simulate(&u0, &flux, t, BASE_DT, 20)?;
    let u = rec.frame(rec.len() - 1);

    // Steepest downward jump after the initial plateau.
    let v = u.values();
    let front = (n / 4..n - 1)
        .max_by(|&a, &b| (v[a] - v[a + 1]).total_cmp(&(v[b] - v[b + 1])))
        .expect("non-empty range");
    let x_front = (front as f64 + 1.0) * u.dx();
    println!(
        "shock at x = {x_front:.4}, Rankine-Hugoniot predicts {:.4}",
        0.5 + t
    );
    println!("mass: {:.12} -> {:.12}", u0.mass(), u.mass());
    println!("range: [{:.4}, {:.4}]", u.min(), u.max());
    for (i, w) in v.iter().enumerate().step_by(10) {
        println!(
            "{:>6.3} {}",
            (i as f64 + 0.5) * u.dx(),
            "#".repeat((w * 40.0).round().max(0.0) as usize)
        );
    }
    Ok(())
}
