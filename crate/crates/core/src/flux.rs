//! Flux functions `f(u)` for scalar conservation laws `u_t + f(u)_x = 0`.
//!
//! The training family is the cubic `a u^3 + b u^2 + c u`; `sin(u) - cos(u)`
//! and `tanh(u)` are the out-of-family test fluxes. `Scaled` and `Affine`
//! wrap another flux and express stride rescaling and change of variables.
//!
//! Textual encoding (used in configs, metadata and on the command line):
//!
//! ```text
//! cubic:a,b,c      sincos      tanh      scale:k:<inner>      affine:alpha:beta:<inner>
//! ```

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cubic Taylor polynomial of `sin(u) - cos(u)` at zero, constant dropped.
pub const SIN_COS_TAYLOR: CubicCoeffs = CubicCoeffs {
    a: -1.0 / 6.0,
    b: 0.5,
    c: 1.0,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CubicCoeffs {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl CubicCoeffs {
    pub fn new(a: f64, b: f64, c: f64) -> Self {
        CubicCoeffs { a, b, c }
    }

    pub fn to_flux(self) -> FluxSpec {
        FluxSpec::Cubic(self)
    }

    /// True when every coefficient lies in the training hypercube `[-1, 1]^3`.
    pub fn in_training_range(&self) -> bool {
        [self.a, self.b, self.c].iter().all(|v| v.abs() <= 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum FluxSpec {
    Cubic(CubicCoeffs),
    SinCos,
    Tanh,
    /// `k * inner(u)`, `k > 0`.
    Scaled {
        k: f64,
        inner: Box<FluxSpec>,
    },
    /// `inner(alpha * v + beta) / alpha`, the flux seen by `v = (u - beta) / alpha`.
    Affine {
        alpha: f64,
        beta: f64,
        inner: Box<FluxSpec>,
    },
}

impl FluxSpec {
    pub fn cubic(a: f64, b: f64, c: f64) -> Self {
        FluxSpec::Cubic(CubicCoeffs { a, b, c })
    }

    pub fn zero() -> Self {
        FluxSpec::cubic(0.0, 0.0, 0.0)
    }

    pub fn scaled(self, k: f64) -> Result<Self> {
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::Argument(format!(
                "flux multiplier must be positive and finite, got {k}"
            )));
        }
        Ok(FluxSpec::Scaled {
            k,
            inner: Box::new(self),
        })
    }

    pub fn affine(self, alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite() && beta.is_finite()) {
            return Err(Error::Argument(format!(
                "affine change of variables needs alpha > 0 and finite beta, got ({alpha}, {beta})"
            )));
        }
        Ok(FluxSpec::Affine {
            alpha,
            beta,
            inner: Box::new(self),
        })
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            FluxSpec::Cubic(c) => {
                if [c.a, c.b, c.c].iter().all(|v| v.is_finite()) {
                    Ok(())
                } else {
                    Err(Error::Config(format!(
                        "non-finite cubic coefficients {c:?}"
                    )))
                }
            }
            FluxSpec::SinCos | FluxSpec::Tanh => Ok(()),
            FluxSpec::Scaled { k, inner } => {
                if !(*k > 0.0 && k.is_finite()) {
                    return Err(Error::Config(format!("scaled flux needs k > 0, got {k}")));
                }
                inner.validate()
            }
            FluxSpec::Affine { alpha, beta, inner } => {
                if !(*alpha > 0.0 && alpha.is_finite() && beta.is_finite()) {
                    return Err(Error::Config(format!(
                        "affine flux needs alpha > 0, got ({alpha}, {beta})"
                    )));
                }
                inner.validate()
            }
        }
    }

    pub fn eval(&self, u: f64) -> f64 {
        match self {
            FluxSpec::Cubic(CubicCoeffs { a, b, c }) => ((a * u + b) * u + c) * u,
            FluxSpec::SinCos => u.sin() - u.cos(),
            FluxSpec::Tanh => u.tanh(),
            FluxSpec::Scaled { k, inner } => k * inner.eval(u),
            FluxSpec::Affine { alpha, beta, inner } => inner.eval(alpha * u + beta) / alpha,
        }
    }

    /// Analytic `f'(u)`.
    pub fn derivative(&self, u: f64) -> f64 {
        match self {
            FluxSpec::Cubic(CubicCoeffs { a, b, c }) => (3.0 * a * u + 2.0 * b) * u + c,
            FluxSpec::SinCos => u.cos() + u.sin(),
            FluxSpec::Tanh => {
                let s = 1.0 / u.cosh();
                s * s
            }
            FluxSpec::Scaled { k, inner } => k * inner.derivative(u),
            FluxSpec::Affine { alpha, beta, inner } => inner.derivative(alpha * u + beta),
        }
    }

    /// Largest `|f'(u)|` over the given values.
    pub fn max_wave_speed(&self, values: &[f64]) -> f64 {
        values
            .iter()
            .map(|&u| self.derivative(u).abs())
            .fold(0.0, f64::max)
    }

    pub fn as_cubic(&self) -> Option<CubicCoeffs> {
        match self {
            FluxSpec::Cubic(c) => Some(*c),
            _ => None,
        }
    }
}

pub fn eval_flux(spec: &FluxSpec, u: f64) -> f64 {
    spec.eval(u)
}

pub fn flux_derivative(spec: &FluxSpec, u: f64) -> f64 {
    spec.derivative(u)
}

impl fmt::Display for FluxSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FluxSpec::Cubic(CubicCoeffs { a, b, c }) => write!(f, "cubic:{a},{b},{c}"),
            FluxSpec::SinCos => write!(f, "sincos"),
            FluxSpec::Tanh => write!(f, "tanh"),
            FluxSpec::Scaled { k, inner } => write!(f, "scale:{k}:{inner}"),
            FluxSpec::Affine { alpha, beta, inner } => write!(f, "affine:{alpha}:{beta}:{inner}"),
        }
    }
}

fn parse_real(text: &str, what: &str) -> Result<f64> {
    text.trim()
        .parse::<f64>()
        .map_err(|_| Error::Config(format!("cannot parse {what} from {text:?}")))
}

impl FromStr for FluxSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (kind, rest) = match s.split_once(':') {
            Some((k, r)) => (k, Some(r)),
            None => (s, None),
        };
        let spec = match (kind, rest) {
            ("cubic", Some(args)) => {
                let parts: Vec<&str> = args.split(',').collect();
                if parts.len() != 3 {
                    return Err(Error::Config(format!(
                        "cubic flux needs three coefficients, got {s:?}"
                    )));
                }
                FluxSpec::cubic(
                    parse_real(parts[0], "a")?,
                    parse_real(parts[1], "b")?,
                    parse_real(parts[2], "c")?,
                )
            }
            ("sincos", None) => FluxSpec::SinCos,
            ("tanh", None) => FluxSpec::Tanh,
            ("scale", Some(args)) => {
                let (k, inner) = args
                    .split_once(':')
                    .ok_or_else(|| Error::Config(format!("scale flux needs k and inner: {s:?}")))?;
                FluxSpec::Scaled {
                    k: parse_real(k, "k")?,
                    inner: Box::new(inner.parse()?),
                }
            }
            ("affine", Some(args)) => {
                let mut it = args.splitn(3, ':');
                let alpha = it.next().unwrap_or_default();
                let beta = it.next();
                let inner = it.next();
                match (beta, inner) {
                    (Some(beta), Some(inner)) => FluxSpec::Affine {
                        alpha: parse_real(alpha, "alpha")?,
                        beta: parse_real(beta, "beta")?,
                        inner: Box::new(inner.parse()?),
                    },
                    _ => {
                        return Err(Error::Config(format!(
                            "affine flux needs alpha, beta and inner: {s:?}"
                        )))
                    }
                }
            }
            _ => return Err(Error::Config(format!("unknown flux encoding {s:?}"))),
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl TryFrom<String> for FluxSpec {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<FluxSpec> for String {
    fn from(f: FluxSpec) -> String {
        f.to_string()
    }
}

/// Number of uniformly spaced sample points (endpoints included) in the cubic fit.
pub const CUBIC_FIT_SAMPLES: usize = 101;

/// Least-squares cubic `a u^3 + b u^2 + c u + d` to `f` on `[lo, hi]`; `d` is dropped.
///
/// The residual is measured at [`CUBIC_FIT_SAMPLES`] equispaced points. The
/// normal equations are assembled in the scaled variable `s = (u - m) / h` on
/// `[-1, 1]` and the solution is expanded back to monomials in `u`.
pub fn cubic_fit(spec: &FluxSpec, lo: f64, hi: f64) -> Result<CubicCoeffs> {
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::Argument(format!(
            "cubic fit needs a non-degenerate interval, got [{lo}, {hi}]"
        )));
    }
    spec.validate()?;
    let m = 0.5 * (lo + hi);
    let h = 0.5 * (hi - lo);

    let mut gram = [[0.0f64; 4]; 4];
    let mut rhs = [0.0f64; 4];
    let last = (CUBIC_FIT_SAMPLES - 1) as f64;
    for k in 0..CUBIC_FIT_SAMPLES {
        let s = -1.0 + 2.0 * k as f64 / last;
        let fv = spec.eval(m + h * s);
        let powers = [1.0, s, s * s, s * s * s];
        for j in 0..4 {
            rhs[j] += fv * powers[j];
            for l in 0..4 {
                gram[j][l] += powers[j] * powers[l];
            }
        }
    }

    let e = solve4(gram, rhs)?;

    // p(u) = sum_j e_j ((u - m) / h)^j, expand into powers of u.
    let mut coeffs = [0.0f64; 4];
    for (j, ej) in e.iter().enumerate() {
        let scale = ej / h.powi(j as i32);
        for (i, c) in coeffs.iter_mut().enumerate().take(j + 1) {
            *c += scale * binomial(j, i) * (-m).powi((j - i) as i32);
        }
    }
    Ok(CubicCoeffs {
        a: coeffs[3],
        b: coeffs[2],
        c: coeffs[1],
    })
}

/// Result of [`adaptive_cubic_fit`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveFit {
    pub coeffs: CubicCoeffs,
    pub lo: f64,
    pub hi: f64,
    /// Set when the data was constant and the interval had to be widened.
    pub widened: bool,
}

/// Cubic fit over `[min u0, max u0]` of the supplied initial data.
pub fn adaptive_cubic_fit(spec: &FluxSpec, initial: &[f64]) -> Result<AdaptiveFit> {
    if initial.is_empty() {
        return Err(Error::Argument("adaptive cubic fit needs data".into()));
    }
    let lo = initial.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = initial.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi, widened) = if hi > lo {
        (lo, hi, false)
    } else {
        (lo - 0.5, hi + 0.5, true)
    };
    Ok(AdaptiveFit {
        coeffs: cubic_fit(spec, lo, hi)?,
        lo,
        hi,
        widened,
    })
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn solve4(mut a: [[f64; 4]; 4], mut b: [f64; 4]) -> Result<[f64; 4]> {
    for col in 0..4 {
        let pivot = (col..4)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap_or(col);
        if a[pivot][col].abs() < 1e-300 {
            return Err(Error::Numeric {
                index: col,
                context: "singular normal equations in cubic fit".into(),
            });
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..4 {
            let factor = a[row][col] / a[col][col];
            for k in col..4 {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = [0.0; 4];
    for row in (0..4).rev() {
        let tail: f64 = (row + 1..4).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row][row];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn eval_examples() {
        assert_eq!(FluxSpec::zero().eval(0.7), 0.0);
        assert_eq!(FluxSpec::cubic(1.0, 1.0, 1.0).eval(1.0), 3.0);
        assert_eq!(FluxSpec::SinCos.eval(0.0), -1.0);
    }

    #[test]
    fn derivative_examples() {
        assert_eq!(FluxSpec::cubic(1.0, 0.0, 0.0).derivative(2.0), 12.0);
        assert_eq!(FluxSpec::SinCos.derivative(0.0), 1.0);
        assert_eq!(FluxSpec::Tanh.derivative(0.0), 1.0);
    }

    fn random_spec(rng: &mut ChaCha8Rng) -> FluxSpec {
        let base = match rng.random_range(0..3) {
            0 => FluxSpec::cubic(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            ),
            1 => FluxSpec::SinCos,
            _ => FluxSpec::Tanh,
        };
        match rng.random_range(0..3) {
            0 => base,
            1 => base.scaled(rng.random_range(0.1..3.0)).unwrap(),
            _ => base
                .affine(rng.random_range(1.0..3.0), rng.random_range(-1.0..1.0))
                .unwrap(),
        }
    }

    #[test]
    fn derivative_matches_central_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = 1e-5;
        for _ in 0..100 {
            let spec = random_spec(&mut rng);
            let u: f64 = rng.random_range(-3.0..3.0);
            let fd = (spec.eval(u + h) - spec.eval(u - h)) / (2.0 * h);
            let exact = spec.derivative(u);
            let rel = (fd - exact).abs() / exact.abs().max(1e-3);
            assert!(rel <= 1e-6, "{spec}: fd {fd} vs {exact} at u={u}");
        }
    }

    #[test]
    fn scaled_flux_multiplies() {
        let inner = FluxSpec::cubic(0.3, -0.7, 0.2);
        let scaled = inner.clone().scaled(2.5).unwrap();
        for u in [-2.0, -0.1, 0.0, 1.3] {
            let want = 2.5 * inner.eval(u);
            assert!((scaled.eval(u) - want).abs() <= 4.0 * f64::EPSILON * want.abs().max(1.0));
        }
        assert!(inner.clone().scaled(0.0).is_err());
        assert!(inner.scaled(-1.0).is_err());
    }

    #[test]
    fn sin_cos_fits_match_reference_coefficients() {
        let fit = cubic_fit(&FluxSpec::SinCos, -1.0, 1.0).unwrap();
        assert!((fit.a + 0.157).abs() <= 1e-3, "{fit:?}");
        assert!((fit.b - 0.465).abs() <= 1e-3, "{fit:?}");
        assert!((fit.c - 0.998).abs() <= 1e-3, "{fit:?}");
        let fit = cubic_fit(&FluxSpec::SinCos, -2.0, 2.0).unwrap();
        assert!((fit.a + 0.132).abs() <= 1e-3, "{fit:?}");
        assert!((fit.b - 0.370).abs() <= 1e-3, "{fit:?}");
        assert!((fit.c - 0.971).abs() <= 1e-3, "{fit:?}");
    }

    #[test]
    fn cubic_fit_is_idempotent_on_cubics() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let c = CubicCoeffs::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            let lo = rng.random_range(-3.0..0.5);
            let hi = lo + rng.random_range(0.1..3.0);
            let fit = cubic_fit(&c.to_flux(), lo, hi).unwrap();
            assert!(
                (fit.a - c.a).abs() <= 1e-10,
                "{fit:?} vs {c:?} on [{lo},{hi}]"
            );
            assert!((fit.b - c.b).abs() <= 1e-10);
            assert!((fit.c - c.c).abs() <= 1e-10);
        }
    }

    #[test]
    fn cubic_fit_rejects_degenerate_interval() {
        assert!(matches!(
            cubic_fit(&FluxSpec::SinCos, 1.0, 1.0),
            Err(Error::Argument(_))
        ));
        assert!(cubic_fit(&FluxSpec::SinCos, 2.0, 1.0).is_err());
    }

    #[test]
    fn adaptive_fit_widens_constant_data() {
        let fit = adaptive_cubic_fit(&FluxSpec::SinCos, &[0.4; 8]).unwrap();
        assert!(fit.widened);
        assert!((fit.lo + 0.1).abs() < 1e-12 && (fit.hi - 0.9).abs() < 1e-12);
        let fit = adaptive_cubic_fit(&FluxSpec::SinCos, &[-1.0, 0.0, 1.0]).unwrap();
        assert!(!fit.widened);
        let direct = cubic_fit(&FluxSpec::SinCos, -1.0, 1.0).unwrap();
        assert_eq!(fit.coeffs, direct);
    }

    #[test]
    fn encoding_round_trips() {
        for text in [
            "cubic:0.5,-1,0.25",
            "sincos",
            "tanh",
            "scale:3:sincos",
            "scale:0.5:scale:2:cubic:1,0,0",
            "affine:2:-0.5:tanh",
        ] {
            let spec: FluxSpec = text.parse().unwrap();
            assert_eq!(spec.to_string(), text);
        }
        assert!("quartic:1".parse::<FluxSpec>().is_err());
        assert!("cubic:1,2".parse::<FluxSpec>().is_err());
        assert!("scale:-1:tanh".parse::<FluxSpec>().is_err());
    }
}
