//! Third-order WENO finite-volume discretization with classical RK4 stepping
//! on the periodic unit interval.
//!
//! Numerical fluxes use global Lax-Friedrichs splitting `f± = (f(u) ± α u) / 2`
//! with `α = max |f'(u)|` over the current stage, and the two-stencil WENO3
//! reconstruction (linear weights 1/3 and 2/3, Jiang-Shu smoothness indicators).
//! The regularizer is [`WENO_EPS`] times the squared range of the split flux.

use crate::error::{Error, Result};
use crate::flux::FluxSpec;
use crate::grid::{GridFunction, Record};

/// Solver time step used for data generation.
pub const BASE_DT: f64 = 0.0005;
pub const CFL_NUMBER: f64 = 0.5;
pub const MIN_WAVE_SPEED: f64 = 1e-8;
/// WENO regularizer, relative to the squared range of the split flux so the
/// scheme commutes with flux scaling and affine changes of variables.
pub const WENO_EPS: f64 = 1e-6;

/// Direction of time integration. `Backward` integrates `u_t - f(u)_x = 0`,
/// the time reversal of the conservation law; it is only meaningful before
/// shocks form.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeDirection {
    Forward,
    Backward,
}

impl TimeDirection {
    fn sign(self) -> f64 {
        match self {
            TimeDirection::Forward => 1.0,
            TimeDirection::Backward => -1.0,
        }
    }
}

/// Semi-discrete rate `-(F_{i+1/2} - F_{i-1/2}) / dx`.
pub fn weno3_rhs(state: &GridFunction, flux: &FluxSpec) -> Result<Vec<f64>> {
    let mut out = vec![0.0; state.len()];
    rhs_into(state.values(), state.dx(), flux, 1.0, &mut out)?;
    Ok(out)
}

#[inline]
fn weno3_face(m1: f64, c0: f64, p1: f64, eps: f64) -> f64 {
    // Left-biased value at the right face of the centre cell from (i-1, i, i+1).
    let q0 = -0.5 * m1 + 1.5 * c0;
    let q1 = 0.5 * c0 + 0.5 * p1;
    let b0 = (c0 - m1) * (c0 - m1);
    let b1 = (p1 - c0) * (p1 - c0);
    if eps == 0.0 {
        // Constant split flux: both stencils agree.
        return (q0 + 2.0 * q1) / 3.0;
    }
    let a0 = (1.0 / 3.0) / ((eps + b0) * (eps + b0));
    let a1 = (2.0 / 3.0) / ((eps + b1) * (eps + b1));
    (a0 * q0 + a1 * q1) / (a0 + a1)
}

fn squared_range(v: &[f64]) -> f64 {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (hi - lo) * (hi - lo)
}

fn rhs_into(u: &[f64], dx: f64, flux: &FluxSpec, sign: f64, out: &mut [f64]) -> Result<()> {
    let n = u.len();
    if let Some(index) = u.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numeric {
            index,
            context: "non-finite state entering WENO reconstruction".into(),
        });
    }
    let alpha = flux.max_wave_speed(u);
    let mut fp = Vec::with_capacity(n);
    let mut fm = Vec::with_capacity(n);
    for &v in u {
        let f = sign * flux.eval(v);
        fp.push(0.5 * (f + alpha * v));
        fm.push(0.5 * (f - alpha * v));
    }
    let ep = WENO_EPS * squared_range(&fp);
    let em = WENO_EPS * squared_range(&fm);
    // faces[i] is the numerical flux at x_{i+1/2}.
    let mut faces = Vec::with_capacity(n);
    for i in 0..n {
        let im1 = (i + n - 1) % n;
        let ip1 = (i + 1) % n;
        let ip2 = (i + 2) % n;
        let plus = weno3_face(fp[im1], fp[i], fp[ip1], ep);
        let minus = weno3_face(fm[ip2], fm[ip1], fm[i], em);
        faces.push(plus + minus);
    }
    for i in 0..n {
        out[i] = -(faces[i] - faces[(i + n - 1) % n]) / dx;
    }
    Ok(())
}

/// Largest stable step `CFL * dx / max |f'(u)|`.
pub fn cfl_dt(state: &GridFunction, flux: &FluxSpec) -> f64 {
    let speed = flux.max_wave_speed(state.values()).max(MIN_WAVE_SPEED);
    CFL_NUMBER * state.dx() / speed
}

pub fn rk4_step(state: &GridFunction, flux: &FluxSpec, dt: f64) -> Result<GridFunction> {
    rk4_step_directed(state, flux, dt, TimeDirection::Forward)
}

pub fn rk4_step_directed(
    state: &GridFunction,
    flux: &FluxSpec,
    dt: f64,
    direction: TimeDirection,
) -> Result<GridFunction> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Argument(format!(
            "time step must be positive, got {dt}"
        )));
    }
    let limit = cfl_dt(state, flux);
    if dt > limit * (1.0 + 1e-12) {
        return Err(Error::Stability {
            dt,
            limit,
            max_speed: flux.max_wave_speed(state.values()),
        });
    }
    let sign = direction.sign();
    let u = state.values();
    let n = u.len();
    let dx = state.dx();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut stage = vec![0.0; n];

    rhs_into(u, dx, flux, sign, &mut k1)?;
    for i in 0..n {
        stage[i] = u[i] + 0.5 * dt * k1[i];
    }
    rhs_into(&stage, dx, flux, sign, &mut k2)?;
    for i in 0..n {
        stage[i] = u[i] + 0.5 * dt * k2[i];
    }
    rhs_into(&stage, dx, flux, sign, &mut k3)?;
    for i in 0..n {
        stage[i] = u[i] + dt * k3[i];
    }
    rhs_into(&stage, dx, flux, sign, &mut k4)?;
    let next: Vec<f64> = (0..n)
        .map(|i| u[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect();
    if let Some(index) = next.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numeric {
            index,
            context: "non-finite value after RK4 step".into(),
        });
    }
    Ok(GridFunction::from_raw(next))
}

/// Advances by `dt`, splitting into equal sub-steps when the CFL limit requires it.
fn advance(
    state: &GridFunction,
    flux: &FluxSpec,
    dt: f64,
    direction: TimeDirection,
) -> Result<GridFunction> {
    let limit = cfl_dt(state, flux);
    let substeps = if dt <= limit {
        1
    } else {
        (dt / limit).ceil() as usize
    };
    let h = dt / substeps as f64;
    let mut current = rk4_step_directed(state, flux, h, direction)?;
    for _ in 1..substeps {
        current = rk4_step_directed(&current, flux, h, direction)?;
    }
    Ok(current)
}

fn step_count(span: f64, dt: f64) -> Result<usize> {
    if !(span >= 0.0 && span.is_finite() && dt > 0.0 && dt.is_finite()) {
        return Err(Error::Argument(format!(
            "need t_end >= 0 and dt > 0, got t_end={span}, dt={dt}"
        )));
    }
    let k = span / dt;
    let steps = k.round();
    if (k - steps).abs() > 1e-9 * k.max(1.0) {
        return Err(Error::Argument(format!(
            "t_end {span} is not an integer multiple of dt {dt}"
        )));
    }
    Ok(steps as usize)
}

/// Integrates to `t_end` with step `dt`, saving every `save_every` steps.
pub fn simulate(
    initial: &GridFunction,
    flux: &FluxSpec,
    t_end: f64,
    dt: f64,
    save_every: usize,
) -> Result<Record> {
    simulate_directed(initial, flux, t_end, dt, save_every, TimeDirection::Forward)
}

/// As [`simulate`]; for `Backward` the frames run toward earlier times and the
/// returned record is in integration order (frame `k` is `k * dt` before the
/// initial state).
pub fn simulate_directed(
    initial: &GridFunction,
    flux: &FluxSpec,
    t_end: f64,
    dt: f64,
    save_every: usize,
    direction: TimeDirection,
) -> Result<Record> {
    flux.validate()?;
    if save_every == 0 {
        return Err(Error::Argument("save_every must be at least 1".into()));
    }
    let steps = step_count(t_end, dt)?;
    if steps % save_every != 0 {
        return Err(Error::Argument(format!(
            "{steps} steps are not a multiple of save_every={save_every}"
        )));
    }
    let mut frames = Vec::with_capacity(steps / save_every + 1);
    frames.push(initial.clone());
    let mut state = initial.clone();
    for k in 1..=steps {
        state = advance(&state, flux, dt, direction)?;
        if k % save_every == 0 {
            frames.push(state.clone());
        }
    }
    Record::new(frames, dt * save_every as f64, 0.0)
}

/// Internal step for a span `tau`: `BASE_DT` when it divides `tau`, otherwise
/// the largest `tau / m` below it.
pub fn internal_dt(tau: f64) -> (f64, usize) {
    let k = tau / BASE_DT;
    let rounded = k.round();
    if rounded >= 1.0 && (k - rounded).abs() <= 1e-9 * k {
        (BASE_DT, rounded as usize)
    } else {
        let m = k.ceil().max(1.0) as usize;
        (tau / m as f64, m)
    }
}

fn exact_directed(
    u0: &GridFunction,
    flux: &FluxSpec,
    tau: f64,
    direction: TimeDirection,
) -> Result<GridFunction> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::Argument(format!(
            "stride must be positive, got {tau}"
        )));
    }
    flux.validate()?;
    let (dt, steps) = internal_dt(tau);
    let mut state = u0.clone();
    for _ in 0..steps {
        state = advance(&state, flux, dt, direction)?;
    }
    Ok(state)
}

/// Reference forward operator `F_{f,tau}`: the state `tau` later.
pub fn exact_forward(u0: &GridFunction, flux: &FluxSpec, tau: f64) -> Result<GridFunction> {
    exact_directed(u0, flux, tau, TimeDirection::Forward)
}

/// Time-reversed integration over `tau`; a preimage under `F_{f,tau}` for
/// smooth (pre-shock) data.
pub fn exact_backward(u0: &GridFunction, flux: &FluxSpec, tau: f64) -> Result<GridFunction> {
    exact_directed(u0, flux, tau, TimeDirection::Backward)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn sine(n: usize) -> GridFunction {
        GridFunction::from_cell_averages(n, |x| (2.0 * PI * x).sin()).unwrap()
    }

    #[test]
    fn zero_flux_has_zero_rate() {
        let rate = weno3_rhs(&sine(64), &FluxSpec::zero()).unwrap();
        assert!(rate.iter().all(|&r| r == 0.0));
    }

    #[test]
    fn constant_state_is_steady() {
        let state = GridFunction::constant(50, 0.3);
        for flux in [
            FluxSpec::cubic(1.0, -0.5, 0.7),
            FluxSpec::SinCos,
            FluxSpec::Tanh,
        ] {
            let rate = weno3_rhs(&state, &flux).unwrap();
            assert!(rate.iter().all(|r| r.abs() < 1e-12), "{flux}: {rate:?}");
        }
    }

    #[test]
    fn linear_flux_rate_approximates_advection() {
        // Cell average of -c u_x for u = sin(2 pi x) is -c (sin(2 pi (x+dx)) - sin(2 pi x)) / dx.
        let c = 0.8;
        let mut l1 = Vec::new();
        let mut linf = Vec::new();
        for n in [100usize, 200, 400] {
            let rate = weno3_rhs(&sine(n), &FluxSpec::cubic(0.0, 0.0, c)).unwrap();
            let dx = 1.0 / n as f64;
            let errs: Vec<f64> = rate
                .iter()
                .enumerate()
                .map(|(i, r)| {
                    let x = i as f64 * dx;
                    let exact = -c * ((2.0 * PI * (x + dx)).sin() - (2.0 * PI * x).sin()) / dx;
                    (r - exact).abs()
                })
                .collect();
            l1.push(errs.iter().sum::<f64>() / n as f64);
            linf.push(errs.iter().copied().fold(0.0, f64::max));
        }
        assert!(l1[0] / l1[1] > 6.0 && l1[1] / l1[2] > 6.0, "{l1:?}");
        // Pointwise third order only once critical points are resolved.
        assert!(linf[1] / linf[2] > 8.0, "{linf:?}");
    }

    #[test]
    fn rk4_zero_flux_is_identity() {
        let s = sine(40);
        let next = rk4_step(&s, &FluxSpec::zero(), 0.001).unwrap();
        assert_eq!(next, s);
    }

    #[test]
    fn rk4_conserves_mass() {
        let s =
            GridFunction::from_cell_averages(100, |x| 1.0 + 0.5 * (2.0 * PI * x).sin()).unwrap();
        let flux = FluxSpec::cubic(0.4, -0.8, 0.3);
        let next = rk4_step(&s, &flux, 0.0005).unwrap();
        assert!((next.mass() - s.mass()).abs() <= 1e-12 * s.mass().abs());
    }

    #[test]
    fn rk4_rejects_cfl_violation() {
        let s = sine(100);
        let err = rk4_step(&s, &FluxSpec::cubic(0.0, 0.0, 1.0), 0.01).unwrap_err();
        assert!(
            matches!(err, Error::Stability { max_speed, .. } if (max_speed - 1.0).abs() < 1e-12)
        );
    }

    #[test]
    fn cfl_examples() {
        let s = GridFunction::constant(100, 0.2);
        assert!((cfl_dt(&s, &FluxSpec::cubic(0.0, 0.0, 1.0)) - 0.005).abs() < 1e-15);
        assert!(cfl_dt(&s, &FluxSpec::zero()) > 1e5);
        let wide = GridFunction::from_point_values(100, |x| 6.0 * x - 3.0).unwrap();
        assert!(cfl_dt(&wide, &FluxSpec::cubic(1.0, 1.0, 1.0)) >= 0.5 * 0.01 / 34.0);
    }

    #[test]
    fn simulate_frame_count() {
        let rec = simulate(&sine(20), &FluxSpec::zero(), 0.5, 0.0005, 1).unwrap();
        assert_eq!(rec.len(), 1001);
        assert!(rec.frames().iter().all(|f| f == rec.frame(0)));
        let thinned = simulate(&sine(20), &FluxSpec::zero(), 0.5, 0.0005, 20).unwrap();
        assert_eq!(thinned.len(), 51);
        assert!((thinned.dt() - 0.01).abs() < 1e-15);
        assert!(simulate(&sine(20), &FluxSpec::zero(), 0.5, 0.0005, 3).is_err());
        assert!(simulate(&sine(20), &FluxSpec::zero(), 0.50025, 0.0005, 1).is_err());
    }

    #[test]
    fn internal_dt_divides_stride() {
        assert_eq!(internal_dt(0.1), (0.0005, 200));
        assert_eq!(internal_dt(0.01), (0.0005, 20));
        let (dt, m) = internal_dt(0.0012);
        assert_eq!(m, 3);
        assert!((dt * 3.0 - 0.0012).abs() < 1e-15);
    }

    #[test]
    fn backward_undoes_forward_on_smooth_data() {
        let u0 = GridFunction::from_cell_averages(100, |x| 0.3 * (2.0 * PI * x).sin()).unwrap();
        let flux = FluxSpec::cubic(0.0, 0.5, 0.2);
        let fwd = exact_forward(&u0, &flux, 0.05).unwrap();
        let back = exact_backward(&fwd, &flux, 0.05).unwrap();
        assert!(back.l1_distance(&u0).unwrap() < 1e-4);
    }
}
