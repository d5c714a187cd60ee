//! Transfer-matrix optics for the coated surface.
//!
//! Complex reflection amplitudes at real frequency, real reflection
//! coefficients on the imaginary-frequency axis (fed by Kramers-Kronig
//! transformed dispersion tables), and the thickness-tolerance Monte Carlo.
//!
//! Sign convention: both polarization coefficients tend to -1 at normal
//! incidence on a perfect conductor. Angles are parameterized by the
//! conserved transverse wavevector k_T, so the real- and imaginary-axis
//! paths share the same layer recursion.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_pcg::Pcg64;

use crate::constants::SPEED_OF_LIGHT;
use crate::error::{Error, Result};


const C: f64 = SPEED_OF_LIGHT;

/// Relative tolerance for the Kramers-Kronig integral refinement.
const KK_REL_TOL: f64 = 1e-7;

/// A layer is treated as optically infinite once its decay exponent
/// exceeds this (the transmitted wave cannot return).
const OPAQUE_EXPONENT: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarization {
    TE,
    TM,
}

/// Tabulated complex refractive index n + ik on the real frequency axis,
/// strictly increasing in angular frequency.
#[derive(Debug, Clone)]
pub struct DispersionTable {
    pub material_label: String,
    omega: Vec<f64>,
    n: Vec<f64>,
    k: Vec<f64>,
}

impl DispersionTable {
    pub fn new(material_label: impl Into<String>, mut samples: Vec<(f64, f64, f64)>) -> Result<Self> {
        let label = material_label.into();
        if samples.len() < 2 {
            return Err(Error::config(format!(
                "dispersion table {label}: need at least 2 samples"
            )));
        }
        samples.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in samples.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::config(format!(
                    "dispersion table {label}: frequencies must be strictly increasing"
                )));
            }
        }
        for &(om, n, k) in &samples {
            let ok = om > 0.0 && n > 0.0 && k >= 0.0 && om.is_finite() && n.is_finite() && k.is_finite();
            if !ok {
                return Err(Error::config(format!(
                    "dispersion table {label}: require omega > 0, n > 0, k >= 0"
                )));
            }
        }
        Ok(DispersionTable {
            material_label: label,
            omega: samples.iter().map(|s| s.0).collect(),
            n: samples.iter().map(|s| s.1).collect(),
            k: samples.iter().map(|s| s.2).collect(),
        })
    }

    /// Load from a delimiter-separated file with header columns
    /// `omega_rad_s | wavelength_um, n, k`.
    pub fn load(path: impl AsRef<Path>, material_label: impl Into<String>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text, &path.display().to_string(), material_label)
    }

    pub fn parse(text: &str, path: &str, material_label: impl Into<String>) -> Result<Self> {
        let mut header: Option<Vec<String>> = None;
        let mut rows = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split(|c| c == ',' || c == '\t').map(str::trim).collect();
            let err = |msg: String| Error::Parse {
                path: path.to_string(),
                line: Some(lineno + 1),
                msg,
            };
            match &header {
                None => header = Some(fields.iter().map(|s| s.to_ascii_lowercase()).collect()),
                Some(cols) => {
                    if fields.len() != cols.len() {
                        return Err(err(format!(
                            "expected {} fields, found {}",
                            cols.len(),
                            fields.len()
                        )));
                    }
                    let get = |name: &str| cols.iter().position(|c| c == name).map(|i| fields[i]);
                    let parse = |v: &str, what: &str| -> Result<f64> {
                        v.parse::<f64>().map_err(|_| err(format!("bad {what}: {v:?}")))
                    };
                    let omega = if let Some(v) = get("omega_rad_s") {
                        parse(v, "omega_rad_s")?
                    } else if let Some(v) = get("wavelength_um") {
                        let wl = parse(v, "wavelength_um")?;
                        if wl <= 0.0 {
                            return Err(err("wavelength_um must be positive".into()));
                        }
                        2.0 * std::f64::consts::PI * C / (wl * 1e-6)
                    } else {
                        return Err(err("need omega_rad_s or wavelength_um column".into()));
                    };
                    let n = parse(get("n").ok_or_else(|| err("missing n".into()))?, "n")?;
                    let k = parse(get("k").ok_or_else(|| err("missing k".into()))?, "k")?;
                    rows.push((omega, n, k));
                }
            }
        }
        Self::new(material_label, rows)
    }

    pub fn omega_range(&self) -> (f64, f64) {
        (self.omega[0], *self.omega.last().unwrap())
    }

    /// Complex refractive index at a real frequency inside the tabulated
    /// range, interpolated linearly in ln(omega).
    pub fn refractive_index(&self, omega: f64) -> Result<Complex64> {
        let (lo, hi) = self.omega_range();
        if !(omega >= lo && omega <= hi) {
            return Err(Error::domain(format!(
                "{}: frequency {omega:e} outside tabulated range [{lo:e}, {hi:e}]",
                self.material_label
            )));
        }
        let i = match self.omega.binary_search_by(|v| v.total_cmp(&omega)) {
            Ok(i) => return Ok(Complex64::new(self.n[i], self.k[i])),
            Err(i) => i - 1,
        };
        let t = (omega.ln() - self.omega[i].ln()) / (self.omega[i + 1].ln() - self.omega[i].ln());
        Ok(Complex64::new(
            self.n[i] + t * (self.n[i + 1] - self.n[i]),
            self.k[i] + t * (self.k[i + 1] - self.k[i]),
        ))
    }

    /// Im[epsilon] = 2 n k at a real frequency, clamped into the tabulated
    /// range (queries land there only through rounding of exp(ln w)).
    fn im_epsilon(&self, omega: f64) -> f64 {
        let (lo, hi) = self.omega_range();
        match self.refractive_index(omega.clamp(lo, hi)) {
            Ok(nk) => 2.0 * nk.re * nk.im,
            Err(_) => 0.0,
        }
    }

    /// Kramers-Kronig transform to the imaginary axis:
    /// eps(i s) = 1 + (2/pi) int w' Im[eps(w')] / (w'^2 + s^2) dw',
    /// integrated over the tabulated range on a log-frequency grid aligned
    /// with the table nodes and refined by subdivision until converged.
    /// Real-valued, >= 1, monotone non-increasing in s.
    pub fn epsilon_imag_axis(&self, s: f64) -> Result<f64> {
        if s < 0.0 {
            return Err(Error::domain(format!(
                "imaginary frequency must be >= 0 (got {s:e})"
            )));
        }
        if self.k.iter().all(|&k| k == 0.0) {
            return Ok(1.0);
        }
        // Integrand in u = ln(w): w^2 Im[eps](w) / (w^2 + s^2), smooth inside
        // each table segment (the interpolation is linear in u).
        let g = |u: f64| -> f64 {
            let w = u.exp();
            w * w * self.im_epsilon(w) / (w * w + s * s)
        };
        let lnw: Vec<f64> = self.omega.iter().map(|w| w.ln()).collect();
        let mut m = 1usize;
        let mut prev = f64::NAN;
        for _ in 0..10 {
            let mut total = 0.0;
            for seg in lnw.windows(2) {
                let (a, b) = (seg[0], seg[1]);
                let h = (b - a) / m as f64;
                let mut sum = 0.5 * (g(a) + g(b));
                for i in 1..m {
                    sum += g(a + h * i as f64);
                }
                total += sum * h;
            }
            if prev.is_finite() {
                let err = (total - prev).abs();
                if err <= KK_REL_TOL * total.abs().max(f64::MIN_POSITIVE) {
                    return Ok(1.0 + 2.0 / std::f64::consts::PI * total);
                }
            }
            prev = total;
            m *= 2;
        }
        Err(Error::Convergence {
            context: format!("kk[{}]", self.material_label),
            estimate: 1.0 + 2.0 / std::f64::consts::PI * prev,
            error_bound: f64::NAN,
        })
    }
}

/// An optical medium: tabulated dispersion data or an idealized
/// frequency-independent permittivity (used for the bare dc substrate of the
/// long-range limit and for conductor/dielectric stand-ins in tests).
#[derive(Debug, Clone)]
pub enum Medium {
    Tabulated(DispersionTable),
    Constant { label: String, epsilon: f64 },
}

impl Medium {
    pub fn vacuum() -> Self {
        Medium::Constant {
            label: "vacuum".into(),
            epsilon: 1.0,
        }
    }

    pub fn constant(label: impl Into<String>, epsilon: f64) -> Self {
        Medium::Constant {
            label: label.into(),
            epsilon,
        }
    }

    pub fn label(&self) -> &str {
        match self {
            Medium::Tabulated(t) => &t.material_label,
            Medium::Constant { label, .. } => label,
        }
    }

    pub fn refractive_index(&self, omega: f64) -> Result<Complex64> {
        match self {
            Medium::Tabulated(t) => t.refractive_index(omega),
            Medium::Constant { epsilon, .. } => Ok(Complex64::new(epsilon.sqrt(), 0.0)),
        }
    }

    pub fn epsilon_imag_axis(&self, s: f64) -> Result<f64> {
        match self {
            Medium::Tabulated(t) => t.epsilon_imag_axis(s),
            Medium::Constant { epsilon, .. } => {
                if s < 0.0 {
                    Err(Error::domain("imaginary frequency must be >= 0"))
                } else {
                    Ok(*epsilon)
                }
            }
        }
    }

    /// Structural equality of the optical data (labels aside for constants).
    pub fn same_as(&self, other: &Medium) -> bool {
        match (self, other) {
            (Medium::Constant { epsilon: a, .. }, Medium::Constant { epsilon: b, .. }) => a == b,
            (Medium::Tabulated(a), Medium::Tabulated(b)) => {
                a.material_label == b.material_label
                    && a.omega == b.omega
                    && a.n == b.n
                    && a.k == b.k
            }
            _ => false,
        }
    }
}

/// Layered surface: outermost layer first, then inward to the substrate.
#[derive(Debug, Clone)]
pub struct CoatingStack {
    pub incident: Medium,
    pub layers: Vec<(Medium, f64)>,
    pub substrate: Medium,
}

impl CoatingStack {
    pub fn new(incident: Medium, layers: Vec<(Medium, f64)>, substrate: Medium) -> Result<Self> {
        for (m, d) in &layers {
            if !(*d > 0.0) || !d.is_finite() {
                return Err(Error::config(format!(
                    "layer {}: thickness must be positive (got {d:e})",
                    m.label()
                )));
            }
        }
        Ok(CoatingStack {
            incident,
            layers,
            substrate,
        })
    }

    /// Number of media slots: incident + layers + substrate.
    pub fn slots(&self) -> usize {
        self.layers.len() + 2
    }

    /// Count of leading layers made of the incident medium. They shift only
    /// the phase reference plane, so reflection is anchored past them at the
    /// first real interface.
    pub fn leading_pad(&self) -> usize {
        self.layers
            .iter()
            .take_while(|(m, _)| m.same_as(&self.incident))
            .count()
    }

    /// Medium at a slot index: 0 = incident, 1..=L = layers, L+1 = substrate.
    pub fn medium(&self, slot: usize) -> &Medium {
        if slot == 0 {
            &self.incident
        } else if slot <= self.layers.len() {
            &self.layers[slot - 1].0
        } else {
            &self.substrate
        }
    }
}

/// sinc-safe transfer-matrix entries: returns (cos d, sin d / kz, kz sin d)
/// where d = kz * thickness, stable as kz -> 0.
fn layer_terms(kz: Complex64, thickness: f64) -> (Complex64, Complex64, Complex64) {
    let delta = kz * thickness;
    if delta.norm() < 1e-8 {
        // cos ~ 1, sin(kz t)/kz ~ t, kz sin(kz t) ~ kz^2 t
        (Complex64::new(1.0, 0.0), Complex64::new(thickness, 0.0), kz * kz * thickness)
    } else {
        let (s, c) = (delta.sin(), delta.cos());
        (c, s / kz, kz * s)
    }
}

/// Longitudinal wavevector in a medium with complex eps at real frequency.
/// Branch: Im >= 0, and Re >= 0 when purely real.
fn kz_real_axis(eps: Complex64, omega: f64, k_t: f64) -> Complex64 {
    let arg = eps * (omega / C) * (omega / C) - k_t * k_t;
    let mut w = arg.sqrt();
    if w.im < 0.0 || (w.im == 0.0 && w.re < 0.0) {
        w = -w;
    }
    w
}

/// Shared Abeles recursion over pre-resolved (eps, kz, thickness) slots.
/// Slot 0 is the incident medium (thickness ignored), the last slot is the
/// substrate. Returns the complex reflection amplitude with the convention
/// r -> -1 at normal incidence on a perfect conductor.
fn reflection_from_kz(
    slots: &[(Complex64, Complex64, f64)],
    polarization: Polarization,
) -> Complex64 {
    let admittance = |eps: Complex64, kz: Complex64| -> Complex64 {
        match polarization {
            Polarization::TE => kz,
            Polarization::TM => eps / kz,
        }
    };
    // Characteristic matrix product, outermost layer first.
    let (mut a, mut b, mut c, mut d) = (
        Complex64::new(1.0, 0.0),
        Complex64::new(0.0, 0.0),
        Complex64::new(0.0, 0.0),
        Complex64::new(1.0, 0.0),
    );
    let mut substrate_slot = slots.len() - 1;
    for (j, &(eps, kz, thickness)) in slots.iter().enumerate().skip(1) {
        if j == slots.len() - 1 {
            break;
        }
        // Opaque layer: nothing returns from beyond it.
        if kz.im * thickness > OPAQUE_EXPONENT {
            substrate_slot = j;
            break;
        }
        let (cosd, sin_over_kz, kz_sin) = layer_terms(kz, thickness);
        let i = Complex64::new(0.0, 1.0);
        // Entries -i sin(d)/alpha and -i alpha sin(d), grouped so TM stays
        // finite at a layer cutoff (kz -> 0).
        let (m11, m12, m21, m22) = match polarization {
            Polarization::TE => (cosd, -i * sin_over_kz, -i * kz_sin, cosd),
            Polarization::TM => (cosd, -i * kz_sin / eps, -i * eps * sin_over_kz, cosd),
        };
        let (na, nb) = (a * m11 + b * m21, a * m12 + b * m22);
        let (nc, nd) = (c * m11 + d * m21, c * m12 + d * m22);
        a = na;
        b = nb;
        c = nc;
        d = nd;
    }
    let (eps_i, kz_i, _) = slots[0];
    let (eps_s, kz_s, _) = slots[substrate_slot];
    let alpha_i = admittance(eps_i, kz_i);
    let alpha_s = admittance(eps_s, kz_s);
    // r = (ai*A + ai*as*B - C - as*D) / (ai*A + ai*as*B + C + as*D),
    // evaluated through the grazing-incidence limits when an admittance
    // diverges (TM with kz -> 0).
    let (p, q) = if alpha_s.is_finite() {
        (a + alpha_s * b, c + alpha_s * d)
    } else {
        (b, d)
    };
    if alpha_i.is_finite() {
        let num = alpha_i * p - q;
        let den = alpha_i * p + q;
        if den.norm() == 0.0 {
            Complex64::new(-1.0, 0.0)
        } else {
            num / den
        }
    } else if p.norm() > 0.0 {
        Complex64::new(1.0, 0.0)
    } else {
        Complex64::new(-1.0, 0.0)
    }
}

/// Complex reflection amplitude of the stack at real angular frequency
/// `omega` and transverse wavevector `k_t`.
pub fn stack_reflection(
    stack: &CoatingStack,
    omega: f64,
    k_t: f64,
    polarization: Polarization,
) -> Result<Complex64> {
    if !(omega > 0.0) {
        return Err(Error::domain(format!("omega must be > 0 (got {omega:e})")));
    }
    if !(k_t >= 0.0) {
        return Err(Error::domain(format!("k_t must be >= 0 (got {k_t:e})")));
    }
    stack.resolve(omega)?.reflection(k_t, polarization)
}

/// Real reflection coefficient on the imaginary frequency axis (omega = i s),
/// using Kramers-Kronig permittivities. |r| <= 1 for passive media.
pub fn stack_reflection_imaginary(
    stack: &CoatingStack,
    s: f64,
    k_t: f64,
    polarization: Polarization,
) -> Result<f64> {
    if !(s > 0.0) {
        return Err(Error::domain(format!("s must be > 0 (got {s:e})")));
    }
    let eps: Vec<f64> = (0..stack.slots())
        .map(|j| stack.medium(j).epsilon_imag_axis(s))
        .collect::<Result<_>>()?;
    Ok(reflection_imag_from_eps(stack, &eps, s, k_t, polarization))
}

/// Imaginary-axis reflection given per-slot permittivities eps(i s), slot 0
/// the incident medium and the last slot the substrate.
/// kappa_j = sqrt(eps_j s^2/c^2 + k_T^2) is real; the whole recursion stays
/// in real arithmetic.
pub fn reflection_imag_from_eps(
    stack: &CoatingStack,
    eps: &[f64],
    s: f64,
    k_t: f64,
    polarization: Polarization,
) -> f64 {
    let kappa = |e: f64| (e * (s / C) * (s / C) + k_t * k_t).sqrt();
    let admittance = |e: f64, kp: f64| match polarization {
        Polarization::TE => kp,
        Polarization::TM => e / kp,
    };
    let (mut a, mut b, mut c, mut d) = (1.0f64, 0.0f64, 0.0f64, 1.0f64);
    let mut substrate_slot = stack.slots() - 1;
    for j in 1 + stack.leading_pad()..stack.slots() - 1 {
        let e = eps[j];
        let kp = kappa(e);
        let t = stack.layers[j - 1].1;
        if kp * t > OPAQUE_EXPONENT {
            substrate_slot = j;
            break;
        }
        let (ch, sh) = ((kp * t).cosh(), (kp * t).sinh());
        let alpha = admittance(e, kp);
        // M = [[cosh, sinh/alpha], [alpha sinh, cosh]] on the imaginary axis.
        let (m11, m12, m21, m22) = (ch, sh / alpha, alpha * sh, ch);
        let (na, nb) = (a * m11 + b * m21, a * m12 + b * m22);
        let (nc, nd) = (c * m11 + d * m21, c * m12 + d * m22);
        a = na;
        b = nb;
        c = nc;
        d = nd;
    }
    let alpha_i = admittance(eps[0], kappa(eps[0]));
    let alpha_s = admittance(eps[substrate_slot], kappa(eps[substrate_slot]));
    let p = a + alpha_s * b;
    let q = c + alpha_s * d;
    let num = alpha_i * p - q;
    let den = alpha_i * p + q;
    if den == 0.0 {
        -1.0
    } else {
        num / den
    }
}

/// Per-slot permittivity source used by the prepared reflector: either a
/// constant or a natural cubic spline of eps(i s) over ln s, sampled from
/// the exact Kramers-Kronig transform on a fixed 40-points-per-decade grid
/// (interpolation error well below the quadrature tolerances).
enum EpsSource {
    Constant(f64),
    Spline(crate::spline::CubicSpline),
}

impl EpsSource {
    fn eval(&self, s: f64) -> f64 {
        match self {
            EpsSource::Constant(e) => *e,
            EpsSource::Spline(sp) => sp.eval(s.max(f64::MIN_POSITIVE).ln()).max(1.0),
        }
    }
}

/// Span of the prepared imaginary-axis grid, rad/s.
const EPS_GRID_LO: f64 = 1e10;
const EPS_GRID_HI: f64 = 1e19;

/// Imaginary-axis reflection evaluator prepared once per stack: the
/// Kramers-Kronig permittivity of each tabulated medium is sampled on a
/// fixed logarithmic s grid and splined, so the potential quadratures pay
/// interpolation cost instead of a fresh transform per node.
pub struct ImagAxisReflector<'a> {
    stack: &'a CoatingStack,
    sources: Vec<EpsSource>,
}

impl<'a> ImagAxisReflector<'a> {
    pub fn new(stack: &'a CoatingStack) -> Result<Self> {
        let mut sources = Vec::with_capacity(stack.slots());
        for j in 0..stack.slots() {
            let src = match stack.medium(j) {
                Medium::Constant { epsilon, .. } => EpsSource::Constant(*epsilon),
                Medium::Tabulated(t) => {
                    if t.epsilon_imag_axis(0.0)? == 1.0 {
                        EpsSource::Constant(1.0)
                    } else {
                        let per_decade = 40.0;
                        let n = ((EPS_GRID_HI / EPS_GRID_LO).ln() / std::f64::consts::LN_10
                            * per_decade) as usize;
                        let mut lns = Vec::with_capacity(n + 1);
                        let mut eps = Vec::with_capacity(n + 1);
                        for i in 0..=n {
                            let s = EPS_GRID_LO
                                * (EPS_GRID_HI / EPS_GRID_LO).powf(i as f64 / n as f64);
                            lns.push(s.ln());
                            eps.push(t.epsilon_imag_axis(s)?);
                        }
                        EpsSource::Spline(crate::spline::CubicSpline::new(lns, eps)?)
                    }
                }
            };
            sources.push(src);
        }
        Ok(ImagAxisReflector { stack, sources })
    }

    pub fn stack(&self) -> &CoatingStack {
        self.stack
    }

    fn eps(&self, slot: usize, s: f64) -> f64 {
        self.sources[slot].eval(s)
    }

    /// Permittivities of every slot (incident, layers, substrate) at s.
    pub fn eps_all(&self, s: f64) -> Vec<f64> {
        (0..self.stack.slots()).map(|j| self.eps(j, s)).collect()
    }

    pub fn reflection(&self, s: f64, k_t: f64, polarization: Polarization) -> Result<f64> {
        if !(s > 0.0) {
            return Err(Error::domain(format!("s must be > 0 (got {s:e})")));
        }
        let eps = self.eps_all(s);
        Ok(reflection_imag_from_eps(self.stack, &eps, s, k_t, polarization))
    }

    /// Permittivity of the outermost layer (or the substrate when there are
    /// no layers) at imaginary frequency s; the short-range limit needs it.
    pub fn outer_epsilon(&self, s: f64) -> f64 {
        let slot = if self.stack.layers.is_empty() {
            self.stack.slots() - 1
        } else {
            1
        };
        self.eps(slot, s)
    }
}

/// A stack with per-slot permittivities resolved at one real frequency;
/// repeated angle scans (the Green-tensor integrals) reuse it.
pub struct ResolvedStack {
    omega: f64,
    /// (eps, thickness) per slot, leading incident-medium pads dropped.
    slots: Vec<(Complex64, f64)>,
}

impl CoatingStack {
    pub fn resolve(&self, omega: f64) -> Result<ResolvedStack> {
        if !(omega > 0.0) {
            return Err(Error::domain(format!("omega must be > 0 (got {omega:e})")));
        }
        let pad = self.leading_pad();
        let mut slots = Vec::with_capacity(self.slots() - pad);
        for j in (0..self.slots()).filter(|&j| j == 0 || j > pad) {
            let nk = self.medium(j).refractive_index(omega)?;
            let thickness = if j >= 1 && j <= self.layers.len() {
                self.layers[j - 1].1
            } else {
                0.0
            };
            slots.push((nk * nk, thickness));
        }
        Ok(ResolvedStack { omega, slots })
    }
}

impl ResolvedStack {
    pub fn reflection(&self, k_t: f64, polarization: Polarization) -> Result<Complex64> {
        if !(k_t >= 0.0) {
            return Err(Error::domain(format!("k_t must be >= 0 (got {k_t:e})")));
        }
        let slots: Vec<(Complex64, Complex64, f64)> = self
            .slots
            .iter()
            .map(|&(eps, d)| (eps, kz_real_axis(eps, self.omega, k_t), d))
            .collect();
        Ok(reflection_from_kz(&slots, polarization))
    }
}

/// Parse a stack definition file: TOML with `incident`, `substrate` and an
/// ordered `layers = [["material", thickness_nm], ...]` array (outermost
/// first). Material names resolve through the provided map; "vacuum" is
/// always available.
pub fn load_stack_file(
    path: impl AsRef<Path>,
    materials: &BTreeMap<String, Medium>,
) -> Result<CoatingStack> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_stack_file(&text, &path.display().to_string(), materials)
}

pub fn parse_stack_file(
    text: &str,
    path: &str,
    materials: &BTreeMap<String, Medium>,
) -> Result<CoatingStack> {
    #[derive(serde::Deserialize)]
    struct StackFile {
        #[serde(default)]
        schema_version: Option<u32>,
        incident: Option<String>,
        substrate: String,
        layers: Vec<(String, f64)>,
    }
    let parsed: StackFile = toml::from_str(text).map_err(|e| Error::Parse {
        path: path.to_string(),
        line: None,
        msg: e.to_string(),
    })?;
    if let Some(v) = parsed.schema_version {
        if v != 1 {
            return Err(Error::Parse {
                path: path.to_string(),
                line: None,
                msg: format!("unsupported stack schema version {v}"),
            });
        }
    }
    let resolve = |name: &str| -> Result<Medium> {
        if name.eq_ignore_ascii_case("vacuum") {
            return Ok(Medium::vacuum());
        }
        materials
            .get(name)
            .cloned()
            .ok_or_else(|| Error::config(format!("unknown material {name:?} in {path}")))
    };
    let incident = match &parsed.incident {
        Some(name) => resolve(name)?,
        None => Medium::vacuum(),
    };
    let substrate = resolve(&parsed.substrate)?;
    let layers = parsed
        .layers
        .iter()
        .map(|(name, d_nm)| Ok((resolve(name)?, d_nm * 1e-9)))
        .collect::<Result<Vec<_>>>()?;
    CoatingStack::new(incident, layers, substrate)
}

/// Reflection amplitudes, reflectances and phases for both polarizations.
#[derive(Debug, Clone, Copy)]
pub struct ReflectionResult {
    pub r_te: Complex64,
    pub r_tm: Complex64,
    pub reflectance_te: f64,
    pub reflectance_tm: f64,
    pub phase_te: f64,
    pub phase_tm: f64,
}

impl ReflectionResult {
    pub fn at_real_frequency(stack: &CoatingStack, omega: f64, k_t: f64) -> Result<Self> {
        let r_te = stack_reflection(stack, omega, k_t, Polarization::TE)?;
        let r_tm = stack_reflection(stack, omega, k_t, Polarization::TM)?;
        Ok(ReflectionResult {
            r_te,
            r_tm,
            reflectance_te: r_te.norm_sqr(),
            reflectance_tm: r_tm.norm_sqr(),
            phase_te: r_te.arg(),
            phase_tm: r_tm.arg(),
        })
    }
}

/// Monte-Carlo estimate of the normal-incidence reflection-phase statistics
/// under independent uniform thickness perturbations of half-width
/// `sigma_thickness` per layer. Deterministic for a fixed seed.
pub fn phase_tolerance_mc(
    stack: &CoatingStack,
    wavelength: f64,
    sigma_thickness: f64,
    trials: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if trials < 100 {
        return Err(Error::config(format!(
            "phase tolerance Monte Carlo needs at least 100 trials (got {trials})"
        )));
    }
    if !(wavelength > 0.0) || sigma_thickness < 0.0 {
        return Err(Error::domain(
            "wavelength must be positive and sigma_thickness >= 0",
        ));
    }
    let omega = 2.0 * std::f64::consts::PI * C / wavelength;
    let mut rng = Pcg64::seed_from_u64(seed);
    let mut phases = Vec::with_capacity(trials);
    for _ in 0..trials {
        let mut perturbed = stack.clone();
        for (_, d) in &mut perturbed.layers {
            let delta = if sigma_thickness > 0.0 {
                rng.gen_range(-sigma_thickness..=sigma_thickness)
            } else {
                0.0
            };
            *d = (*d + delta).max(1e-12);
        }
        let r = stack_reflection(&perturbed, omega, 0.0, Polarization::TE)?;
        phases.push(r.arg());
    }
    // Shifted two-pass moments: exact zero spread for identical samples.
    let n = phases.len() as f64;
    let p0 = phases[0];
    let mean_shift = phases.iter().map(|p| p - p0).sum::<f64>() / n;
    let var = phases
        .iter()
        .map(|p| {
            let d = (p - p0) - mean_shift;
            d * d
        })
        .sum::<f64>()
        / (n - 1.0);
    Ok((p0 + mean_shift, var.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn glass_halfspace(n_sub: f64) -> CoatingStack {
        CoatingStack::new(
            Medium::vacuum(),
            vec![],
            Medium::constant("glass", n_sub * n_sub),
        )
        .unwrap()
    }

    #[test]
    fn fresnel_normal_incidence() {
        let stack = glass_halfspace(1.5);
        let omega = 2.0 * std::f64::consts::PI * C / 914e-9;
        let r = stack_reflection(&stack, omega, 0.0, Polarization::TE).unwrap();
        assert!((r.re - (-0.2)).abs() < 1e-12 && r.im.abs() < 1e-14);
        let rtm = stack_reflection(&stack, omega, 0.0, Polarization::TM).unwrap();
        assert!((rtm - r).norm() < 1e-12);
    }

    #[test]
    fn no_interface_means_no_reflection() {
        let stack = CoatingStack::new(
            Medium::constant("glass", 2.25),
            vec![],
            Medium::constant("glass", 2.25),
        )
        .unwrap();
        let omega = 2.0e15;
        for kt in [0.0, 1.0e6, 5.0e6] {
            let r = stack_reflection(&stack, omega, kt, Polarization::TM).unwrap();
            assert!(r.norm() < 1e-14);
        }
    }

    #[test]
    fn incident_medium_layer_is_noop() {
        let omega = 2.2e15;
        let bare = glass_halfspace(1.7);
        let padded = CoatingStack::new(
            Medium::vacuum(),
            vec![(Medium::vacuum(), 137e-9)],
            Medium::constant("glass", 1.7 * 1.7),
        )
        .unwrap();
        for kt in [0.0, 3.0e6] {
            for pol in [Polarization::TE, Polarization::TM] {
                let r0 = stack_reflection(&bare, omega, kt, pol).unwrap();
                let r1 = stack_reflection(&padded, omega, kt, pol).unwrap();
                assert!((r0 - r1).norm() < 1e-12 * r0.norm().max(1.0));
            }
        }
    }

    #[test]
    fn half_wave_layer_is_invisible() {
        let omega = 2.0 * std::f64::consts::PI * C / 600e-9;
        let n_layer = 2.0;
        let d = std::f64::consts::PI / (n_layer * omega / C); // delta = pi at normal incidence
        let bare = glass_halfspace(1.5);
        let coated = CoatingStack::new(
            Medium::vacuum(),
            vec![(Medium::constant("hi", n_layer * n_layer), d)],
            Medium::constant("glass", 2.25),
        )
        .unwrap();
        for pol in [Polarization::TE, Polarization::TM] {
            let r0 = stack_reflection(&bare, omega, 0.0, pol).unwrap();
            let r1 = stack_reflection(&coated, omega, 0.0, pol).unwrap();
            assert!((r0 - r1).norm() < 1e-10);
        }
    }

    #[test]
    fn quarter_wave_layer_matches_closed_form() {
        let omega = 2.0 * std::f64::consts::PI * C / 600e-9;
        let n1 = 1.38;
        let ns = 1.52;
        let d = 0.5 * std::f64::consts::PI / (n1 * omega / C);
        let stack = CoatingStack::new(
            Medium::vacuum(),
            vec![(Medium::constant("ar", n1 * n1), d)],
            Medium::constant("glass", ns * ns),
        )
        .unwrap();
        let r = stack_reflection(&stack, omega, 0.0, Polarization::TE).unwrap();
        let expect = (ns - n1 * n1) / (ns + n1 * n1); // (ni*ns - n1^2)/(ni*ns + n1^2), ni = 1
        assert!((r.re - expect).abs() < 1e-10 && r.im.abs() < 1e-10);
    }

    /// Independent interface-recursion oracle with the same sign convention.
    fn recursive_reflection(
        media: &[(Complex64, f64)], // (eps, thickness); first & last half-spaces
        omega: f64,
        k_t: f64,
        pol: Polarization,
    ) -> Complex64 {
        let kz: Vec<Complex64> = media.iter().map(|&(e, _)| kz_real_axis(e, omega, k_t)).collect();
        let alpha = |j: usize| match pol {
            Polarization::TE => kz[j],
            Polarization::TM => media[j].0 / kz[j],
        };
        let mut r = {
            let (aj, ak) = (alpha(media.len() - 2), alpha(media.len() - 1));
            (aj - ak) / (aj + ak)
        };
        for j in (0..media.len() - 2).rev() {
            let (aj, ak) = (alpha(j), alpha(j + 1));
            let rho = (aj - ak) / (aj + ak);
            let phase = (Complex64::new(0.0, 2.0) * kz[j + 1] * media[j + 1].1).exp();
            r = (rho + r * phase) / (Complex64::new(1.0, 0.0) + rho * r * phase);
        }
        r
    }

    #[test]
    fn matches_interface_recursion_on_random_stacks() {
        let mut rng = Pcg64::seed_from_u64(42);
        let omega = 2.0 * std::f64::consts::PI * C / 914e-9;
        for _ in 0..40 {
            let nlayers = rng.gen_range(1..=6);
            let mut media = vec![(Complex64::new(1.0, 0.0), 0.0)];
            let mut layers = Vec::new();
            for _ in 0..nlayers {
                let n = rng.gen_range(1.2..2.4);
                let k = if rng.gen_bool(0.3) { rng.gen_range(0.0..0.2) } else { 0.0 };
                let d = rng.gen_range(20e-9..200e-9);
                let nk = Complex64::new(n, k);
                media.push((nk * nk, d));
                layers.push((Medium::constant("l", 0.0), d)); // placeholder, patched below
            }
            let ns = rng.gen_range(1.3..2.2);
            media.push((Complex64::new(ns * ns, 0.0), 0.0));
            // Build an equivalent CoatingStack; lossy layers need a tabulated
            // medium, so emulate with two-point tables of constant n, k.
            let mut stack_layers = Vec::new();
            for (i, &(eps, d)) in media[1..media.len() - 1].iter().enumerate() {
                let nk = eps.sqrt();
                let table = DispersionTable::new(
                    format!("m{i}"),
                    vec![(1e13, nk.re, nk.im), (1e17, nk.re, nk.im)],
                )
                .unwrap();
                stack_layers.push((Medium::Tabulated(table), d));
            }
            let _ = layers;
            let stack = CoatingStack::new(
                Medium::vacuum(),
                stack_layers,
                Medium::constant("sub", ns * ns),
            )
            .unwrap();
            for kt_frac in [0.0, 0.4, 0.95, 1.3] {
                let kt = kt_frac * omega / C;
                for pol in [Polarization::TE, Polarization::TM] {
                    let r1 = stack_reflection(&stack, omega, kt, pol).unwrap();
                    let r2 = recursive_reflection(&media, omega, kt, pol);
                    assert!(
                        (r1 - r2).norm() < 1e-9,
                        "mismatch: {r1} vs {r2} (kt={kt_frac}, {pol:?})"
                    );
                }
            }
        }
    }

    #[test]
    fn grazing_incidence_is_finite() {
        let stack = glass_halfspace(1.5);
        let omega = 2.0e15;
        let kt = omega / C; // kz_incident = 0 exactly
        for pol in [Polarization::TE, Polarization::TM] {
            let r = stack_reflection(&stack, omega, kt, pol).unwrap();
            assert!(r.is_finite(), "{pol:?} grazing produced {r}");
            assert!(r.norm() <= 1.0 + 1e-9);
        }
    }

    #[test]
    fn lossless_stack_reflectance_bounded() {
        let omega = 2.0 * std::f64::consts::PI * C / 700e-9;
        let stack = CoatingStack::new(
            Medium::vacuum(),
            vec![
                (Medium::constant("a", 1.9), 60e-9),
                (Medium::constant("b", 4.2), 45e-9),
                (Medium::constant("a2", 1.9), 55e-9),
            ],
            Medium::constant("glass", 2.1),
        )
        .unwrap();
        for i in 0..30 {
            let kt = omega / C * (i as f64 / 30.0) * 0.999;
            for pol in [Polarization::TE, Polarization::TM] {
                let r = stack_reflection(&stack, omega, kt, pol).unwrap();
                assert!(r.norm() <= 1.0 + 1e-10);
            }
        }
    }

    // --- imaginary axis ---

    #[test]
    fn imaginary_axis_single_interface_oracle() {
        // Hand-coded textbook forms with the -1 normal-incidence convention:
        // r_TE = (kappa - kappa1)/(kappa + kappa1),
        // r_TM = (kappa1 - eps*kappa)/(kappa1 + eps*kappa).
        let eps = 4.15;
        let stack = CoatingStack::new(Medium::vacuum(), vec![], Medium::constant("dc", eps)).unwrap();
        for s in [1e12, 7.7e14, 3.1e15] {
            for kt in [0.0, 1e5, 3e6, 4e7] {
                let kappa = ((s / C) * (s / C) + kt * kt).sqrt();
                let kappa1 = ((eps * (s / C) * (s / C)) + kt * kt).sqrt();
                let te = stack_reflection_imaginary(&stack, s, kt, Polarization::TE).unwrap();
                let tm = stack_reflection_imaginary(&stack, s, kt, Polarization::TM).unwrap();
                let te_expect = (kappa - kappa1) / (kappa + kappa1);
                let tm_expect = (kappa1 - eps * kappa) / (kappa1 + eps * kappa);
                assert!((te - te_expect).abs() < 1e-12);
                assert!((tm - tm_expect).abs() < 1e-12);
                assert!(te.abs() <= 1.0 && tm.abs() <= 1.0);
            }
        }
    }

    #[test]
    fn perfect_conductor_standin_approaches_minus_one() {
        let stack = CoatingStack::new(Medium::vacuum(), vec![], Medium::constant("pc", 1e12)).unwrap();
        for s in [1e14, 1e15, 1e16] {
            for kt_over in [0.0, 0.5, 2.0] {
                let kt = kt_over * s / C;
                for pol in [Polarization::TE, Polarization::TM] {
                    let r = stack_reflection_imaginary(&stack, s, kt, pol).unwrap();
                    assert!((r + 1.0).abs() < 1e-5, "r={r} at s={s} kt={kt} {pol:?}");
                }
            }
        }
    }

    #[test]
    fn imaginary_axis_monotone_in_substrate_eps() {
        let s = 1.1e15;
        let kt = 2.0e6;
        let mut prev_te = 0.0;
        let mut prev_tm = 0.0;
        for (i, eps) in [1.5, 2.5, 4.0, 8.0, 30.0].iter().enumerate() {
            let stack =
                CoatingStack::new(Medium::vacuum(), vec![], Medium::constant("x", *eps)).unwrap();
            let te = stack_reflection_imaginary(&stack, s, kt, Polarization::TE).unwrap();
            let tm = stack_reflection_imaginary(&stack, s, kt, Polarization::TM).unwrap();
            if i > 0 {
                assert!(te < prev_te, "TE should become more negative with eps");
                assert!(tm < prev_tm, "TM should become more negative with eps");
            }
            prev_te = te;
            prev_tm = tm;
        }
    }

    #[test]
    fn prepared_reflector_matches_direct() {
        let table = lorentz_table(1e16, 8.0e15, 2.0e14, 1.2);
        let stack = CoatingStack::new(
            Medium::vacuum(),
            vec![(Medium::Tabulated(table), 80e-9)],
            Medium::constant("glass", 2.1),
        )
        .unwrap();
        let refl = ImagAxisReflector::new(&stack).unwrap();
        for s in [3.0e14, 1.0e15, 6.0e15] {
            for kt in [0.0, 5.0e6] {
                let a = refl.reflection(s, kt, Polarization::TM).unwrap();
                let b = stack_reflection_imaginary(&stack, s, kt, Polarization::TM).unwrap();
                assert!((a - b).abs() < 1e-6 * b.abs().max(1e-6), "{a} vs {b}");
            }
        }
    }

    /// Densely tabulated single Lorentz oscillator for the KK oracle.
    fn lorentz_table(omega0: f64, omega_p: f64, gamma: f64, _dummy: f64) -> DispersionTable {
        let mut rows = Vec::new();
        let lo = omega0 / 300.0;
        let hi = omega0 * 300.0;
        let n = 4000;
        for i in 0..=n {
            let w = lo * (hi / lo).powf(i as f64 / n as f64);
            let eps = Complex64::new(
                1.0 + omega_p * omega_p * (omega0 * omega0 - w * w)
                    / ((omega0 * omega0 - w * w).powi(2) + gamma * gamma * w * w),
                omega_p * omega_p * gamma * w
                    / ((omega0 * omega0 - w * w).powi(2) + gamma * gamma * w * w),
            );
            let nk = eps.sqrt();
            rows.push((w, nk.re.max(1e-9), nk.im.max(0.0)));
        }
        DispersionTable::new("lorentz", rows).unwrap()
    }

    #[test]
    fn kk_lossless_table_gives_unity() {
        let t = DispersionTable::new(
            "clear",
            vec![(1e14, 1.5, 0.0), (1e15, 1.52, 0.0), (1e16, 1.6, 0.0)],
        )
        .unwrap();
        for s in [0.0, 1e13, 1e15, 1e17] {
            assert_eq!(t.epsilon_imag_axis(s).unwrap(), 1.0);
        }
    }

    #[test]
    fn kk_matches_analytic_lorentz_model() {
        let omega0 = 1.6e16;
        let omega_p = 1.1e16;
        let gamma = 0.05 * omega0;
        let table = lorentz_table(omega0, omega_p, gamma, 0.0);
        for i in 0..=20 {
            let s = omega0 * 10.0 * (i as f64 / 20.0);
            let got = table.epsilon_imag_axis(s).unwrap();
            let expect = 1.0 + omega_p * omega_p / (omega0 * omega0 + gamma * s + s * s);
            assert!(
                (got - expect).abs() <= 5e-3 * expect,
                "s={s:e}: got {got}, expect {expect}"
            );
            assert!(got >= 1.0);
        }
    }

    #[test]
    fn kk_monotone_and_suppressed_at_high_s() {
        let table = lorentz_table(1.6e16, 1.1e16, 8e14, 0.0);
        let e0 = table.epsilon_imag_axis(0.0).unwrap();
        let mut prev = e0;
        for i in 1..24 {
            let s = 1e13 * 2.4f64.powi(i);
            let e = table.epsilon_imag_axis(s).unwrap();
            assert!(e <= prev + 1e-12);
            prev = e;
        }
        let (_, hi) = table.omega_range();
        let far = table.epsilon_imag_axis(1e3 * hi).unwrap();
        assert!(far - 1.0 < 1e-4 * (e0 - 1.0));
    }

    #[test]
    fn kk_rejects_negative_s() {
        let table = lorentz_table(1.6e16, 1.1e16, 8e14, 0.0);
        assert!(table.epsilon_imag_axis(-1.0).is_err());
    }

    #[test]
    fn phase_mc_zero_sigma_is_exact() {
        let stack = CoatingStack::new(
            Medium::vacuum(),
            vec![(Medium::constant("a", 1.9), 60e-9)],
            Medium::constant("glass", 2.1),
        )
        .unwrap();
        let omega = 2.0 * std::f64::consts::PI * C / 914e-9;
        let r = stack_reflection(&stack, omega, 0.0, Polarization::TE).unwrap();
        let (mean, sd) = phase_tolerance_mc(&stack, 914e-9, 0.0, 200, 1).unwrap();
        assert_eq!(sd, 0.0);
        assert!((mean - r.arg()).abs() < 1e-12);
    }

    #[test]
    fn phase_mc_requires_trials() {
        let stack = glass_halfspace(1.5);
        assert!(phase_tolerance_mc(&stack, 914e-9, 1e-9, 10, 1).is_err());
    }
}
