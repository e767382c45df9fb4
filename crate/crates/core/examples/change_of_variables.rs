//! Affine change of variables: the same operator seen in rescaled data.
use iconcl::dataset::{CondQoIPair, Direction};
use iconcl::flux::FluxSpec;
use iconcl::grid::GridFunction;
use iconcl::inference::{change_of_variables, change_of_variables_apply, ExactOperator};
use iconcl::solver::exact_forward;

fn main() -> iconcl::Result<()> {
    let flux = FluxSpec::cubic(0.4, -0.3, 0.8);
    let u = GridFunction::from_cell_averages(100, |x| {
        1.5 + 2.0 * (2.0 * std::f64::consts::PI * x).sin()
    })?;
    let tau = 0.05;
    let example = CondQoIPair::new(u.clone(), exact_forward(&u, &flux, tau)?, tau, 0)?;
    let direct = exact_forward(&u, &flux, tau)?;
    let exact = ExactOperator { flux };
    for r in [0.5, 1.0, 2.0, 3.0] {
        let (alpha, beta) = change_of_variables(std::slice::from_ref(&example), &u, r)?;
        let via = change_of_variables_apply(
            &exact,
            std::slice::from_ref(&example),
            &u,
            Direction::Forward,
            r,
        )?;
        println!(
            "r = {r}: alpha = {alpha:.4}, beta = {beta:.4}, |transformed - direct| = {:.2e}",
            via.l1_distance(&direct)?
        );
    }
    Ok(())
}
