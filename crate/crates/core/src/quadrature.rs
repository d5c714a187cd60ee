//! Adaptive one-dimensional quadrature.
//!
//! The workhorse is a 7/15-point Gauss–Kronrod rule with worst-interval-first
//! bisection. The same driver integrates real- or complex-valued integrands
//! through the [`Integrand`] element trait. Subdivision decisions depend only
//! on the integrand values, so repeated runs are bit-reproducible.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Kronrod-15 abscissae on [0, 1] (positive half; rule is symmetric).
const XGK: [f64; 8] = [
    0.991_455_371_120_813,
    0.949_107_912_342_759,
    0.864_864_423_359_769,
    0.741_531_185_599_394,
    0.586_087_235_467_691,
    0.405_845_151_377_397,
    0.207_784_955_007_898,
    0.0,
];

/// Kronrod-15 weights matching `XGK`.
const WGK: [f64; 8] = [
    0.022_935_322_010_529,
    0.063_092_092_629_979,
    0.104_790_010_322_250,
    0.140_653_259_715_525,
    0.169_004_726_639_267,
    0.190_350_578_064_785,
    0.204_432_940_075_298,
    0.209_482_141_084_728,
];

/// Gauss-7 weights for the nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_870,
    0.279_705_391_489_277,
    0.381_830_050_505_119,
    0.417_959_183_673_469,
];

/// Values the quadrature driver can accumulate: real or complex samples.
pub trait Integrand: Copy {
    fn zero() -> Self;
    fn add(self, other: Self) -> Self;
    fn sub(self, other: Self) -> Self;
    fn scale(self, by: f64) -> Self;
    fn norm(self) -> f64;
}

impl Integrand for f64 {
    fn zero() -> Self {
        0.0
    }
    fn add(self, other: Self) -> Self {
        self + other
    }
    fn sub(self, other: Self) -> Self {
        self - other
    }
    fn scale(self, by: f64) -> Self {
        self * by
    }
    fn norm(self) -> f64 {
        self.abs()
    }
}

impl Integrand for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn add(self, other: Self) -> Self {
        self + other
    }
    fn sub(self, other: Self) -> Self {
        self - other
    }
    fn scale(self, by: f64) -> Self {
        self * by
    }
    fn norm(self) -> f64 {
        num_complex::Complex::norm(self)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QuadEstimate<T> {
    pub value: T,
    pub error_bound: f64,
    pub evaluations: usize,
}

pub type Quad = QuadEstimate<f64>;

struct Panel<T> {
    a: f64,
    b: f64,
    value: T,
    error: f64,
}

fn kronrod_panel<T: Integrand>(f: &mut impl FnMut(f64) -> T, a: f64, b: f64) -> Panel<T> {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut kron = T::zero();
    let mut gauss = T::zero();
    for (i, (&x, &wk)) in XGK.iter().zip(WGK.iter()).enumerate() {
        let contrib = if x == 0.0 {
            f(mid)
        } else {
            f(mid - half * x).add(f(mid + half * x))
        };
        kron = kron.add(contrib.scale(wk));
        if i % 2 == 1 {
            gauss = gauss.add(contrib.scale(WG[i / 2]));
        }
    }
    let value = kron.scale(half);
    let error = value.sub(gauss.scale(half)).norm();
    Panel { a, b, value, error }
}

/// Adaptive Gauss–Kronrod integration of `f` over `[a, b]` to relative
/// tolerance `rel_tol`. `context` labels the integral in convergence errors.
pub fn adaptive<T: Integrand>(
    mut f: impl FnMut(f64) -> T,
    a: f64,
    b: f64,
    rel_tol: f64,
    max_panels: usize,
    context: &str,
) -> Result<QuadEstimate<T>> {
    if !(a.is_finite() && b.is_finite()) || a >= b {
        return Err(Error::domain(format!(
            "{context}: invalid integration interval [{a:e}, {b:e}]"
        )));
    }
    let mut evals = 15usize;
    let mut panels = vec![kronrod_panel(&mut f, a, b)];
    loop {
        let mut total = T::zero();
        let mut err = 0.0;
        let mut worst = 0usize;
        let mut worst_err = -1.0;
        for (i, p) in panels.iter().enumerate() {
            total = total.add(p.value);
            err += p.error;
            if p.error > worst_err {
                worst_err = p.error;
                worst = i;
            }
        }
        let scale = total.norm().max(f64::MIN_POSITIVE);
        if err <= rel_tol * scale || err == 0.0 {
            return Ok(QuadEstimate {
                value: total,
                error_bound: err,
                evaluations: evals,
            });
        }
        if panels.len() >= max_panels {
            return Err(Error::Convergence {
                context: context.to_string(),
                estimate: total.norm(),
                error_bound: err,
            });
        }
        let Panel { a, b, .. } = panels.swap_remove(worst);
        let mid = 0.5 * (a + b);
        // Interval too narrow to split further: accept what we have.
        if !(mid > a && mid < b) {
            return Ok(QuadEstimate {
                value: panels.iter().fold(T::zero(), |acc, p| acc.add(p.value)),
                error_bound: err,
                evaluations: evals,
            });
        }
        panels.push(kronrod_panel(&mut f, a, mid));
        panels.push(kronrod_panel(&mut f, mid, b));
        evals += 30;
    }
}

/// Trapezoid integration on a log-spaced grid, refined by doubling the node
/// count until two successive estimates agree to `rel_tol`. Used for the
/// Kramers-Kronig transform where the integrand lives on a broadband
/// logarithmic frequency axis. Requires `0 < a < b`.
pub fn log_trapezoid_refine(
    mut f: impl FnMut(f64) -> f64,
    a: f64,
    b: f64,
    rel_tol: f64,
    context: &str,
) -> Result<Quad> {
    if !(a > 0.0 && b > a) {
        return Err(Error::domain(format!(
            "{context}: log-grid integration needs 0 < a < b (got [{a:e}, {b:e}])"
        )));
    }
    let la = a.ln();
    let lb = b.ln();
    // In u = ln(w): integral = int f(e^u) e^u du.
    let g = |u: f64, f: &mut dyn FnMut(f64) -> f64| {
        let w = u.exp();
        f(w) * w
    };
    let mut n = 64usize;
    let mut prev = f64::NAN;
    let mut evals = 0usize;
    for _ in 0..14 {
        let h = (lb - la) / n as f64;
        let mut sum = 0.5 * (g(la, &mut f) + g(lb, &mut f));
        for i in 1..n {
            sum += g(la + h * i as f64, &mut f);
        }
        evals += n + 1;
        let value = sum * h;
        if prev.is_finite() {
            let err = (value - prev).abs();
            if err <= rel_tol * value.abs().max(f64::MIN_POSITIVE) {
                return Ok(Quad {
                    value,
                    error_bound: err,
                    evaluations: evals,
                });
            }
        }
        prev = value;
        n *= 2;
    }
    Err(Error::Convergence {
        context: context.to_string(),
        estimate: prev,
        error_bound: f64::NAN,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn polynomial_is_exact() {
        let q = adaptive(
            |x: f64| 7.0 * x.powi(4) + 2.0 * x.powi(3) - 11.0 * x * x + 15.0 * x + 1.0,
            -3.0,
            10.0,
            1e-12,
            64,
            "poly",
        )
        .unwrap();
        // Antiderivative evaluated at the bounds.
        let f = |x: f64| {
            7.0 * x.powi(5) / 5.0 + 0.5 * x.powi(4) - 11.0 * x.powi(3) / 3.0
                + 7.5 * x * x
                + x
        };
        let exact = f(10.0) - f(-3.0);
        assert!((q.value - exact).abs() <= 1e-9 * exact.abs());
    }

    #[test]
    fn decaying_oscillation() {
        // int_0^20 e^-x cos(4x) dx = [e^-x(4 sin 4x - cos 4x)/17]
        let q = adaptive(
            |x: f64| (-x).exp() * (4.0 * x).cos(),
            0.0,
            20.0,
            1e-10,
            512,
            "osc",
        )
        .unwrap();
        let anti = |x: f64| (-x).exp() * (4.0 * (4.0 * x).sin() - (4.0 * x).cos()) / 17.0;
        let exact = anti(20.0) - anti(0.0);
        assert!((q.value - exact).abs() <= 1e-9 * exact.abs().max(1e-3));
    }

    #[test]
    fn complex_integrand() {
        // int_0^pi e^{i x} dx = 2i
        let q = adaptive(
            |x: f64| Complex64::new(0.0, x).exp(),
            0.0,
            PI,
            1e-12,
            64,
            "cexp",
        )
        .unwrap();
        assert!((q.value - Complex64::new(0.0, 2.0)).norm() < 1e-10);
    }

    #[test]
    fn log_trapezoid_lorentzian_tail() {
        // int_a^b w0^2/(w^2+w0^2) dw/w over a wide log range vs quadrature of
        // the same thing with the adaptive rule.
        let w0 = 3.7e14;
        let f = |w: f64| w0 * w0 / (w * w + w0 * w0) / w;
        let a = 1e12;
        let b = 1e18;
        let q1 = log_trapezoid_refine(f, a, b, 1e-9, "kk").unwrap();
        let q2 = adaptive(|u: f64| f(u.exp()) * u.exp(), a.ln(), b.ln(), 1e-12, 256, "kk2")
            .unwrap();
        assert!((q1.value - q2.value).abs() < 1e-7 * q2.value.abs());
    }

    #[test]
    fn convergence_failure_carries_estimate() {
        // A needle the panel budget cannot resolve.
        let r = adaptive(
            |x: f64| 1.0 / ((x - 0.3141).powi(2) + 1e-18),
            0.0,
            1.0,
            1e-12,
            4,
            "needle",
        );
        match r {
            Err(Error::Convergence { estimate, error_bound, .. }) => {
                assert!(estimate.is_finite());
                assert!(error_bound > 0.0);
            }
            other => panic!("expected convergence error, got {other:?}"),
        }
    }
}
