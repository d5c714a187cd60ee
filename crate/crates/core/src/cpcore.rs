//! Casimir-Polder potential of one atomic state near the coated surface.
//!
//! The fluctuation term is a double integral over imaginary frequency s and
//! the longitudinal wavevector kappa in [s/c, inf), with the polarizability
//! evaluated on the imaginary axis and the stack reflection coefficients fed
//! by Kramers-Kronig permittivities. The resonant term (downward lines only)
//! integrates the scattering Green tensor at the real transition frequency,
//! split into a propagating branch (integrated in k_z, which removes the
//! 1/k_z endpoint) and an evanescent branch with weight exp(-2 q z).
//!
//! Conventions: energies in J, distances in m. Attractive potentials are
//! negative. Reflection coefficients follow the multilayer convention
//! (both -> -1 at normal incidence on a perfect conductor).

use num_complex::Complex64;
use rayon::prelude::*;

use crate::atomdata::StatePolarizability;
use crate::constants::{BOLTZMANN, EPSILON_0, HBAR, PLANCK, SPEED_OF_LIGHT};
use crate::error::{Error, Result};
use crate::multilayer::{
    reflection_imag_from_eps, CoatingStack, ImagAxisReflector, Medium, Polarization,
};
use crate::quadrature::{adaptive, Integrand};
use crate::spline::CubicSpline;

const C: f64 = SPEED_OF_LIGHT;

/// dc refractive index of the bare fused-silica interface used by the
/// long-range limit (value at the long-wavelength end of the silica data).
pub const LONG_RANGE_DC_INDEX: f64 = 2.038;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Full,
    ShortRange,
    LongRange,
}

impl Regime {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "full" => Ok(Regime::Full),
            "short" | "short_range" => Ok(Regime::ShortRange),
            "long" | "long_range" => Ok(Regime::LongRange),
            other => Err(Error::config(format!(
                "unknown regime {other:?} (expected full, short or long)"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::Full => "full",
            Regime::ShortRange => "short_range",
            Regime::LongRange => "long_range",
        }
    }
}

/// Quadrature policy for the potential integrals. The kappa integral is
/// truncated at s/c + kappa_cutoff/(2 z), where the exponential weight has
/// fallen below 1e-17 of its peak; results are reproducible bit-for-bit at a
/// fixed policy.
#[derive(Debug, Clone, Copy)]
pub struct TolerancePolicy {
    pub rel_tol: f64,
    pub kappa_cutoff: f64,
    pub outer_panels: usize,
    pub inner_panels: usize,
    pub resonant_panels: usize,
}

impl Default for TolerancePolicy {
    fn default() -> Self {
        TolerancePolicy {
            rel_tol: 1e-6,
            kappa_cutoff: 40.0,
            outer_panels: 700,
            inner_panels: 400,
            resonant_panels: 40_000,
        }
    }
}

impl TolerancePolicy {
    pub fn with_rel_tol(rel_tol: f64) -> Result<Self> {
        if !(rel_tol > 0.0 && rel_tol <= 1e-2) {
            return Err(Error::config(format!(
                "relative tolerance must be in (0, 1e-2], got {rel_tol:e}"
            )));
        }
        Ok(TolerancePolicy {
            rel_tol,
            ..TolerancePolicy::default()
        })
    }
}

/// A value with the quadrature error bound that produced it.
#[derive(Debug, Clone, Copy)]
pub struct Estimate {
    pub value: f64,
    pub error_bound: f64,
}

/// Two complex components integrated over shared nodes (G_xx and G_zz).
#[derive(Debug, Clone, Copy)]
struct Pair {
    xx: Complex64,
    zz: Complex64,
}

impl Integrand for Pair {
    fn zero() -> Self {
        Pair {
            xx: Complex64::new(0.0, 0.0),
            zz: Complex64::new(0.0, 0.0),
        }
    }
    fn add(self, other: Self) -> Self {
        Pair {
            xx: self.xx + other.xx,
            zz: self.zz + other.zz,
        }
    }
    fn sub(self, other: Self) -> Self {
        Pair {
            xx: self.xx - other.xx,
            zz: self.zz - other.zz,
        }
    }
    fn scale(self, by: f64) -> Self {
        Pair {
            xx: self.xx * by,
            zz: self.zz * by,
        }
    }
    fn norm(self) -> f64 {
        (self.xx.norm_sqr() + self.zz.norm_sqr()).sqrt()
    }
}

/// Potential evaluator bound to one stack. Reuses Kramers-Kronig results
/// across evaluations; all methods are pure and safe to call concurrently.
pub struct CpEvaluator<'a> {
    stack: &'a CoatingStack,
    reflector: ImagAxisReflector<'a>,
    lr_stack: CoatingStack,
    pub tol: TolerancePolicy,
}

impl<'a> CpEvaluator<'a> {
    pub fn new(stack: &'a CoatingStack) -> Result<Self> {
        Self::with_tolerance(stack, TolerancePolicy::default())
    }

    pub fn with_tolerance(stack: &'a CoatingStack, tol: TolerancePolicy) -> Result<Self> {
        let eps_dc = LONG_RANGE_DC_INDEX * LONG_RANGE_DC_INDEX;
        let lr_stack = CoatingStack::new(
            Medium::vacuum(),
            vec![],
            Medium::constant("fused-silica-dc", eps_dc),
        )
        .expect("static long-range stack is valid");
        Ok(CpEvaluator {
            stack,
            reflector: ImagAxisReflector::new(stack)?,
            lr_stack,
            tol,
        })
    }

    pub fn stack(&self) -> &CoatingStack {
        self.stack
    }

    fn check_z(z: f64) -> Result<()> {
        if !(z > 0.0) || !z.is_finite() {
            return Err(Error::domain(format!(
                "atom-surface distance must be positive (got {z:e})"
            )));
        }
        Ok(())
    }

    /// Fluctuation (imaginary-frequency) part of the potential, J.
    pub fn fluctuation(&self, state: &StatePolarizability, z: f64) -> Result<Estimate> {
        Self::check_z(z)?;
        state.validate()?;
        let s0 = state.dominant_omega();
        self.fluctuation_kernel(
            z,
            s0,
            |s| (state.alpha_symmetric(s), state.alpha_asymmetric(s)),
            self.stack,
            false,
        )
    }

    /// Long-range limit: dc polarizabilities over the bare dc substrate.
    /// Uses the state's reference static polarizability when supplied
    /// (isotropic), otherwise the level-sum value at s = 0.
    pub fn long_range_fluctuation(&self, state: &StatePolarizability, z: f64) -> Result<Estimate> {
        Self::check_z(z)?;
        state.validate()?;
        let (a_s, a_a) = match state.dc_polarizability {
            Some(alpha0) => (2.0 * alpha0, 0.0),
            None => (state.alpha_symmetric(0.0), state.alpha_asymmetric(0.0)),
        };
        let s0 = state.dominant_omega();
        self.fluctuation_kernel(z, s0, |_s| (a_s, a_a), &self.lr_stack, true)
    }

    /// Shared outer (s) and inner (kappa) integration. `constant_eps` skips
    /// the Kramers-Kronig cache when every medium is frequency independent.
    fn fluctuation_kernel(
        &self,
        z: f64,
        s0: f64,
        alpha: impl Fn(f64) -> (f64, f64),
        stack: &CoatingStack,
        constant_eps: bool,
    ) -> Result<Estimate> {
        let tol = &self.tol;
        let s_max = (tol.kappa_cutoff + 5.0) * C / (2.0 * z);
        let t_max = s_max / (s0 + s_max);
        let kappa_span = tol.kappa_cutoff / (2.0 * z);
        let inner_tol = tol.rel_tol * 0.25;
        let mut inner_err_rel: f64 = 0.0;

        let const_eps: Option<Vec<f64>> = if constant_eps {
            Some(
                (0..stack.slots())
                    .map(|j| stack.medium(j).epsilon_imag_axis(1.0))
                    .collect::<Result<_>>()?,
            )
        } else {
            None
        };

        let mut failed: Option<Error> = None;
        let outer = adaptive(
            |t: f64| {
                if failed.is_some() || t >= 1.0 {
                    return 0.0;
                }
                let s = s0 * t / (1.0 - t);
                let jac = s0 / ((1.0 - t) * (1.0 - t));
                let eps: Vec<f64> = if let Some(e) = &const_eps {
                    e.clone()
                } else {
                    self.reflector.eps_all(s)
                };
                let (a_s, a_a) = alpha(s);
                let lo = s / C;
                let hi = lo + kappa_span;
                let inner = adaptive(
                    |kappa: f64| {
                        let kt2 = (kappa * kappa - lo * lo).max(0.0);
                        let kt = kt2.sqrt();
                        let r_te = reflection_imag_from_eps(stack, &eps, s, kt, Polarization::TE);
                        let r_tm = reflection_imag_from_eps(stack, &eps, s, kt, Polarization::TM);
                        let weight = (-2.0 * kappa * z).exp();
                        let s2 = s * s;
                        // s^2 (r_te + (2 kappa^2 c^2/s^2 - 1) r_tm) grouped as
                        // s^2 r_te + (2 kappa^2 c^2 - s^2) r_tm: no blowup at small s.
                        let sym = s2 * r_te + (2.0 * kappa * kappa * C * C - s2) * r_tm;
                        let asym = s2 * (r_te + r_tm);
                        weight * (a_s * sym + a_a * asym)
                    },
                    lo.max(f64::MIN_POSITIVE),
                    hi,
                    inner_tol,
                    tol.inner_panels,
                    "cp inner kappa",
                );
                match inner {
                    Ok(q) => {
                        let rel = q.error_bound / q.value.abs().max(f64::MIN_POSITIVE);
                        if rel > inner_err_rel {
                            inner_err_rel = rel;
                        }
                        q.value * jac
                    }
                    Err(err) => {
                        failed = Some(err);
                        0.0
                    }
                }
            },
            0.0,
            t_max,
            tol.rel_tol,
            tol.outer_panels,
            "cp outer s",
        );
        if let Some(err) = failed {
            return Err(err);
        }
        let outer = outer?;
        let prefactor = HBAR / (16.0 * std::f64::consts::PI.powi(2) * EPSILON_0 * C * C);
        let value = prefactor * outer.value;
        let error_bound = prefactor * outer.error_bound + value.abs() * inner_err_rel;
        Ok(Estimate { value, error_bound })
    }

    /// Short-range (evanescent, TM-dominated) limit of the fluctuation term:
    /// -(hbar / 32 pi^2 eps0 z^3) int ds alpha_sym(i s) (eps_out - 1)/(eps_out + 1),
    /// with eps_out the outermost-layer permittivity on the imaginary axis.
    pub fn short_range_fluctuation(
        &self,
        state: &StatePolarizability,
        z: f64,
    ) -> Result<Estimate> {
        Self::check_z(z)?;
        state.validate()?;
        let s0 = state.dominant_omega();
        let outer = adaptive(
            |t: f64| {
                if t >= 1.0 - 1e-9 {
                    return 0.0;
                }
                let s = s0 * t / (1.0 - t);
                let jac = s0 / ((1.0 - t) * (1.0 - t));
                let eps = self.reflector.outer_epsilon(s);
                state.alpha_symmetric(s) * (eps - 1.0) / (eps + 1.0) * jac
            },
            0.0,
            1.0,
            self.tol.rel_tol,
            self.tol.outer_panels,
            "cp short-range s",
        )?;
        let prefactor = -HBAR / (32.0 * std::f64::consts::PI.powi(2) * EPSILON_0 * z.powi(3));
        Ok(Estimate {
            value: prefactor * outer.value,
            error_bound: prefactor.abs() * outer.error_bound,
        })
    }

    /// Resonant (scattering Green tensor) part, J. Exactly zero for states
    /// with no downward line; identical in every regime.
    pub fn resonant(&self, state: &StatePolarizability, z: f64) -> Result<f64> {
        Self::check_z(z)?;
        state.validate()?;
        let mut total = 0.0;
        for line in state.downward_lines() {
            let omega = line.transition_omega.abs();
            let (gxx, gzz) = self.green_components(omega, z)?;
            total -= (line.weight_x + line.weight_y) * gxx + line.weight_z * gzz;
        }
        Ok(total)
    }

    /// Re G_xx (= Re G_yy) and Re G_zz of the scattering part of the Green
    /// tensor at coincident points, height z, real frequency omega.
    fn green_components(&self, omega: f64, z: f64) -> Result<(f64, f64)> {
        let k = omega / C;
        let tol = &self.tol;
        let q_max = tol.kappa_cutoff / (2.0 * z);
        let resolved = self.stack.resolve(omega)?;
        let mut failed: Option<Error> = None;

        // Propagating branch: k_T in [0, k] mapped to k_z in (0, k], which
        // removes the 1/k_z endpoint singularity.
        let prop = adaptive(
            |kz: f64| {
                if failed.is_some() {
                    return Pair::zero();
                }
                let kt2 = (k * k - kz * kz).max(0.0);
                let kt = kt2.sqrt();
                let (r_tm, r_te) = match (
                    resolved.reflection(kt, Polarization::TM),
                    resolved.reflection(kt, Polarization::TE),
                ) {
                    (Ok(a), Ok(b)) => (a, b),
                    (Err(e), _) | (_, Err(e)) => {
                        failed = Some(e);
                        return Pair::zero();
                    }
                };
                let phase = Complex64::new(0.0, 2.0 * kz * z).exp();
                Pair {
                    zz: kt2 * r_tm * phase,
                    xx: (kz * kz * r_tm + k * k * r_te) * phase,
                }
            },
            0.0,
            k,
            tol.rel_tol,
            tol.resonant_panels,
            "green propagating",
        );
        if let Some(err) = failed {
            return Err(err);
        }
        let prop = prop?;

        // Evanescent branch: k_z = i q, q in (0, q_max], weight exp(-2 q z).
        let evan = adaptive(
            |q: f64| {
                if failed.is_some() {
                    return Pair::zero();
                }
                let kt = (k * k + q * q).sqrt();
                let (r_tm, r_te) = match (
                    resolved.reflection(kt, Polarization::TM),
                    resolved.reflection(kt, Polarization::TE),
                ) {
                    (Ok(a), Ok(b)) => (a, b),
                    (Err(e), _) | (_, Err(e)) => {
                        failed = Some(e);
                        return Pair::zero();
                    }
                };
                let weight = (-2.0 * q * z).exp();
                Pair {
                    // -i * dq jacobian folded in below; store plain values here.
                    zz: (k * k + q * q) * r_tm * weight,
                    xx: (-q * q * r_tm + k * k * r_te) * weight,
                }
            },
            f64::MIN_POSITIVE,
            q_max,
            tol.rel_tol,
            tol.resonant_panels,
            "green evanescent",
        );
        if let Some(err) = failed {
            return Err(err);
        }
        let evan = evan?;

        let i = Complex64::new(0.0, 1.0);
        // G_zz = -(i/4 pi eps0) [prop_zz + (-i) evan_zz]
        let g_zz = -(i / (4.0 * std::f64::consts::PI * EPSILON_0)) * (prop.value.zz - i * evan.value.zz);
        // G_xx = (i/8 pi eps0) [prop_xx + (-i) evan_xx]
        let g_xx = (i / (8.0 * std::f64::consts::PI * EPSILON_0)) * (prop.value.xx - i * evan.value.xx);
        Ok((g_xx.re, g_zz.re))
    }

    /// Total potential for the requested regime, J.
    pub fn total(&self, state: &StatePolarizability, z: f64, regime: Regime) -> Result<f64> {
        let fluct = match regime {
            Regime::Full => self.fluctuation(state, z)?,
            Regime::ShortRange => self.short_range_fluctuation(state, z)?,
            Regime::LongRange => self.long_range_fluctuation(state, z)?,
        };
        Ok(fluct.value + self.resonant(state, z)?)
    }
}

/// A sampled potential for one state, J, on a strictly increasing z grid.
#[derive(Debug, Clone)]
pub struct PotentialCurve {
    pub state_label: String,
    pub z_grid: Vec<f64>,
    pub values: Vec<f64>,
}

impl PotentialCurve {
    pub fn validate(&self) -> Result<()> {
        if self.z_grid.len() != self.values.len() || self.z_grid.len() < 2 {
            return Err(Error::config("potential curve needs matching grids"));
        }
        if self.z_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config("potential grid must be strictly increasing"));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("potential values must be finite"));
        }
        Ok(())
    }

    /// Values as transition frequencies, Hz.
    pub fn values_hz(&self) -> Vec<f64> {
        self.values.iter().map(|v| v / PLANCK).collect()
    }

    /// Values as temperatures, microkelvin.
    pub fn values_uk(&self) -> Vec<f64> {
        self.values.iter().map(|v| v / BOLTZMANN * 1e6).collect()
    }

    /// Cubic-spline interpolant in (ln z, V).
    pub fn interpolant(&self) -> Result<CurveInterpolant> {
        self.validate()?;
        let lnz: Vec<f64> = self.z_grid.iter().map(|z| z.ln()).collect();
        Ok(CurveInterpolant {
            spline: CubicSpline::new(lnz, self.values.clone())?,
        })
    }
}

#[derive(Debug, Clone)]
pub struct CurveInterpolant {
    spline: CubicSpline,
}

impl CurveInterpolant {
    pub fn eval(&self, z: f64) -> f64 {
        self.spline.eval(z.ln())
    }
}

/// Sample the total potential for one state on a log-spaced grid,
/// evaluating grid points in parallel.
pub fn sample_potential_curve(
    evaluator: &CpEvaluator,
    state: &StatePolarizability,
    regime: Regime,
    z_min: f64,
    z_max: f64,
    points: usize,
) -> Result<PotentialCurve> {
    if !(z_min > 0.0 && z_max > z_min) || points < 2 {
        return Err(Error::config(
            "potential curve needs 0 < z_min < z_max and at least 2 points",
        ));
    }
    let grid: Vec<f64> = (0..points)
        .map(|i| z_min * (z_max / z_min).powf(i as f64 / (points - 1) as f64))
        .collect();
    let values: Vec<f64> = grid
        .par_iter()
        .map(|&z| evaluator.total(state, z, regime))
        .collect::<Result<_>>()?;
    let curve = PotentialCurve {
        state_label: state.state_label.clone(),
        z_grid: grid,
        values,
    };
    curve.validate()?;
    Ok(curve)
}
