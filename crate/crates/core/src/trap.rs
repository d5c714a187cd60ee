//! Total trapping potential (partially reflected standing wave + surface
//! potential), per-site bound states via the shooting method, and the
//! observable predictions built on them: transition shift, trap depth,
//! trap frequency, Lamb-Dicke parameter, ac-Stark differential.

use crate::constants::{PLANCK, W_PER_M2_TO_KW_PER_CM2};
use crate::cpcore::CurveInterpolant;
use crate::error::{Error, Result};

/// Standing-wave lattice formed by the incident beam and its partial
/// retro-reflection from the surface.
#[derive(Debug, Clone, Copy)]
pub struct LatticeConfig {
    /// Lattice wavelength, m.
    pub wavelength: f64,
    /// Incident peak intensity at the atoms, W/m^2.
    pub incident_peak_intensity: f64,
    /// Surface reflectance at the lattice wavelength.
    pub reflectance: f64,
    /// Reflection phase at normal incidence, rad.
    pub reflection_phase: f64,
}

impl LatticeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.wavelength > 0.0) {
            return Err(Error::config("lattice wavelength must be positive"));
        }
        if !(self.incident_peak_intensity > 0.0) {
            return Err(Error::config("lattice intensity must be positive"));
        }
        if !(0.0..=1.0).contains(&self.reflectance) {
            return Err(Error::config("reflectance must lie in [0, 1]"));
        }
        if !self.reflection_phase.is_finite() {
            return Err(Error::config("reflection phase must be finite"));
        }
        Ok(())
    }

    /// Standing-wave intensity at distance z from the surface, W/m^2:
    /// I0 [1 + R + 2 sqrt(R) cos(2 k z + phi)].
    pub fn intensity(&self, z: f64) -> f64 {
        let k = 2.0 * std::f64::consts::PI / self.wavelength;
        let sqrt_r = self.reflectance.sqrt();
        self.incident_peak_intensity
            * (1.0 + self.reflectance + 2.0 * sqrt_r * (2.0 * k * z + self.reflection_phase).cos())
    }
}

/// Free-function form of [`LatticeConfig::intensity`].
pub fn lattice_intensity(cfg: &LatticeConfig, z: f64) -> Result<f64> {
    cfg.validate()?;
    if z < 0.0 {
        return Err(Error::domain(format!("z must be >= 0 (got {z:e})")));
    }
    Ok(cfg.intensity(z))
}

/// Potential model of one atomic state over the surface: standing-wave
/// light shift plus an interpolated surface potential.
#[derive(Clone)]
pub struct StatePotential<'a> {
    pub lattice: &'a LatticeConfig,
    /// Trap polarizability at the lattice wavelength, Hz per kW/cm^2.
    /// Positive values mean the intensity maxima trap the atom.
    pub trap_polarizability: f64,
    /// Surface (Casimir-Polder) potential, J, or None for a pure lattice.
    pub surface: Option<&'a CurveInterpolant>,
}

impl StatePotential<'_> {
    /// Total potential at z, J.
    pub fn energy(&self, z: f64) -> f64 {
        let light = -self.trap_polarizability
            * PLANCK
            * self.lattice.intensity(z)
            * W_PER_M2_TO_KW_PER_CM2;
        let surface = self.surface.map_or(0.0, |c| c.eval(z));
        light + surface
    }
}

/// One lattice trapping site: a potential minimum with its flanking
/// barrier maxima. `index` counts from the surface, starting at 1.
#[derive(Debug, Clone, Copy)]
pub struct Site {
    pub index: usize,
    pub z_min: f64,
    pub u_min: f64,
    pub z_left: f64,
    pub u_left: f64,
    pub z_right: f64,
    pub u_right: f64,
}

impl Site {
    /// Depth to the lower of the two flanking barriers, J.
    pub fn depth(&self) -> f64 {
        self.u_left.min(self.u_right) - self.u_min
    }
}

fn golden_refine(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, minimize: bool) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let sign = if minimize { 1.0 } else { -1.0 };
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = sign * f(c);
    let mut fd = sign * f(d);
    for _ in 0..200 {
        if (b - a).abs() < 1e-16 * (a.abs() + b.abs()).max(1e-12) + 1e-15 {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = sign * f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = sign * f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// Locate trapping sites of `potential` inside `window` by a dense scan
/// refined with golden-section searches. Only minima with barrier maxima on
/// both sides and positive depth are reported. Returns an empty list when
/// nothing is bound in the window.
pub fn find_sites(
    potential: &impl Fn(f64) -> f64,
    window: (f64, f64),
    coarse_points: usize,
) -> Result<Vec<Site>> {
    let (lo, hi) = window;
    if !(lo > 0.0 && hi > lo) || coarse_points < 16 {
        return Err(Error::config(
            "site search needs 0 < lo < hi and at least 16 scan points",
        ));
    }
    let n = coarse_points;
    let h = (hi - lo) / (n - 1) as f64;
    let u: Vec<f64> = (0..n).map(|i| potential(lo + h * i as f64)).collect();
    let mut minima = Vec::new();
    let mut maxima = Vec::new();
    for i in 1..n - 1 {
        if u[i] < u[i - 1] && u[i] <= u[i + 1] {
            minima.push(i);
        }
        if u[i] > u[i - 1] && u[i] >= u[i + 1] {
            maxima.push(i);
        }
    }
    let refine = |i: usize, minimize: bool| {
        golden_refine(
            potential,
            lo + h * (i - 1) as f64,
            lo + h * (i + 1) as f64,
            minimize,
        )
    };
    let mut sites = Vec::new();
    for &im in &minima {
        let left_max = maxima.iter().rev().find(|&&j| j < im);
        let right_max = maxima.iter().find(|&&j| j > im);
        let (Some(&jl), Some(&jr)) = (left_max, right_max) else {
            continue;
        };
        let (z_min, u_min) = refine(im, true);
        let (z_left, u_left) = refine(jl, false);
        let (z_right, u_right) = refine(jr, false);
        let site = Site {
            index: 0,
            z_min,
            u_min,
            z_left,
            u_left,
            z_right,
            u_right,
        };
        if site.depth() > 0.0 {
            sites.push(site);
        }
    }
    sites.sort_by(|a, b| a.z_min.total_cmp(&b.z_min));
    for (i, s) in sites.iter_mut().enumerate() {
        s.index = i + 1;
    }
    Ok(sites)
}

/// Options of the bound-state shooting solver.
#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    /// Grid points across the well bracket.
    pub grid_points: usize,
    /// Energy bisection tolerance, J (default h * 1 Hz).
    pub energy_tol: f64,
    /// Cap on the number of levels returned.
    pub max_levels: usize,
    /// Scan ceiling override, J (default: the lower barrier top).
    pub max_energy: Option<f64>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            grid_points: 4001,
            energy_tol: PLANCK,
            max_levels: 8,
            max_energy: None,
        }
    }
}

/// Bound states of one well for one atomic state.
#[derive(Debug, Clone)]
pub struct BoundStateResult {
    pub site_index: usize,
    pub state_label: String,
    /// Motional level energies, J, ascending; at least the ground level.
    pub energies: Vec<f64>,
    /// Normalized wavefunctions matching `energies`, sampled on `z_grid`.
    pub wavefunctions: Vec<Vec<f64>>,
    pub z_grid: Vec<f64>,
    pub well_minimum_z: f64,
    pub well_depth: f64,
    /// Harmonic frequency from the curvature at the minimum, Hz; fallback
    /// for wells holding a single level.
    pub curvature_frequency_hz: f64,
}

/// Outcome of a bound-state solve: the well either holds at least one level
/// or the state is untrapped there.
#[derive(Debug, Clone)]
pub enum SolveOutcome {
    Bound(BoundStateResult),
    Untrapped,
}

impl SolveOutcome {
    pub fn bound(&self) -> Option<&BoundStateResult> {
        match self {
            SolveOutcome::Bound(b) => Some(b),
            SolveOutcome::Untrapped => None,
        }
    }
}

/// Numerov coefficients f_i = 2m (U_i - E)/hbar^2 so that psi'' = f psi.
fn numerov_f(u: &[f64], mass: f64, e: f64) -> Vec<f64> {
    u.iter()
        .map(|&ui| 2.0 * mass / crate::constants::HBAR.powi(2) * (ui - e))
        .collect()
}

fn numerov_step(
    h2: f64,
    psi_prev: f64,
    psi: f64,
    f_prev: f64,
    f_cur: f64,
    f_next: f64,
) -> f64 {
    (2.0 * psi * (1.0 + 5.0 * h2 * f_cur / 12.0) - psi_prev * (1.0 - h2 * f_prev / 12.0))
        / (1.0 - h2 * f_next / 12.0)
}

/// Full left-to-right sweep with psi(left) = 0; the interior node count is
/// the number of eigenvalues below `e` (Sturm oscillation), a monotone
/// staircase in energy.
fn nodes_below(u: &[f64], h: f64, mass: f64, e: f64) -> usize {
    let n = u.len();
    let f = numerov_f(u, mass, e);
    let h2 = h * h;
    let mut psi_prev = 0.0;
    let mut psi = 1e-120;
    let mut nodes = 0;
    for i in 1..n - 1 {
        let next = numerov_step(h2, psi_prev, psi, f[i - 1], f[i], f[i + 1]);
        if next * psi < 0.0 {
            nodes += 1;
        }
        psi_prev = psi;
        psi = next;
        let scale = psi.abs();
        if scale > 1e100 {
            psi /= scale;
            psi_prev /= scale;
        }
    }
    nodes
}

/// Two-sided Numerov shot: integrates from both classically forbidden sides
/// and returns the log-derivative mismatch at the matching index `im`,
/// expressed as a Wronskian-like determinant (no poles when the
/// eigenfunction has a node at `im`).
fn match_mismatch(u: &[f64], h: f64, mass: f64, e: f64, im: usize) -> f64 {
    let n = u.len();
    let f = numerov_f(u, mass, e);
    let h2 = h * h;
    let mut left = vec![0.0; im + 2];
    left[0] = 0.0;
    left[1] = 1e-120;
    for i in 1..=im {
        left[i + 1] = numerov_step(h2, left[i - 1], left[i], f[i - 1], f[i], f[i + 1]);
        let scale = left[i + 1].abs();
        if scale > 1e100 {
            for v in left[..=i + 1].iter_mut() {
                *v /= scale;
            }
        }
    }
    let mut right = vec![0.0; n];
    right[n - 1] = 0.0;
    right[n - 2] = 1e-120;
    for i in (im..=n - 2).rev() {
        right[i - 1] = numerov_step(h2, right[i + 1], right[i], f[i + 1], f[i], f[i - 1]);
        let scale = right[i - 1].abs();
        if scale > 1e100 {
            for v in right[i - 1..].iter_mut() {
                *v /= scale;
            }
        }
    }
    let ln = left[im].abs().max(left[im + 1].abs()).max(1e-300);
    let rn = right[im].abs().max(right[im - 1].abs()).max(1e-300);
    let (l0, l1, lm1) = (left[im] / ln, left[im + 1] / ln, left[im - 1] / ln);
    let (r0, r1, rm1) = (right[im] / rn, right[im + 1] / rn, right[im - 1] / rn);
    let dl = (l1 - lm1) / (2.0 * h);
    let dr = (r1 - rm1) / (2.0 * h);
    dl * r0 - dr * l0
}

/// Assemble and normalize the eigenfunction at a converged energy.
fn assemble_wavefunction(u: &[f64], h: f64, mass: f64, e: f64, im: usize) -> Vec<f64> {
    let n = u.len();
    let f: Vec<f64> = u
        .iter()
        .map(|&ui| 2.0 * mass / crate::constants::HBAR.powi(2) * (ui - e))
        .collect();
    let h2 = h * h;
    let step = |psi_prev: f64, psi: f64, f_prev: f64, f_cur: f64, f_next: f64| -> f64 {
        (2.0 * psi * (1.0 + 5.0 * h2 * f_cur / 12.0) - psi_prev * (1.0 - h2 * f_prev / 12.0))
            / (1.0 - h2 * f_next / 12.0)
    };
    let mut left = vec![0.0; im + 2];
    left[1] = 1e-120;
    for i in 1..=im {
        left[i + 1] = step(left[i - 1], left[i], f[i - 1], f[i], f[i + 1]);
        let scale = left[i + 1].abs();
        if scale > 1e100 {
            for v in left[..=i + 1].iter_mut() {
                *v /= scale;
            }
        }
    }
    let mut right = vec![0.0; n];
    right[n - 2] = 1e-120;
    for i in (1..=n - 2).rev() {
        right[i - 1] = step(right[i + 1], right[i], f[i + 1], f[i], f[i - 1]);
        let scale = right[i - 1].abs();
        if scale > 1e100 {
            for v in right[i - 1..].iter_mut() {
                *v /= scale;
            }
        }
        if i - 1 == im {
            break;
        }
    }
    let mut psi = vec![0.0; n];
    // Join the right branch onto the left; fall back to derivative matching
    // when the eigenfunction has a node at the matching point.
    let scale = if right[im].abs() > 1e-30 * left[im].abs().max(1e-300) && left[im] != 0.0 {
        left[im] / right[im]
    } else {
        (left[im + 1] - left[im - 1]) / (right[im + 1] - right[im - 1])
    };
    psi[..=im].copy_from_slice(&left[..=im]);
    for i in im + 1..n {
        psi[i] = right[i] * scale;
    }
    let mut norm = 0.0;
    for i in 0..n - 1 {
        norm += 0.5 * h * (psi[i] * psi[i] + psi[i + 1] * psi[i + 1]);
    }
    let norm = norm.sqrt();
    if norm > 0.0 {
        for v in psi.iter_mut() {
            *v /= norm;
        }
    }
    if psi[im] < 0.0 {
        for v in psi.iter_mut() {
            *v = -*v;
        }
    }
    psi
}

/// Shooting-method bound states for one well of `potential`, between the
/// flanking barrier positions of `site`. Integrates from both classically
/// forbidden sides, matches at the minimum and bisects on energy to
/// `energy_tol`.
pub fn solve_bound_states(
    potential: &impl Fn(f64) -> f64,
    site: &Site,
    state_label: &str,
    mass: f64,
    opts: &SolverOptions,
) -> Result<SolveOutcome> {
    if !(mass > 0.0) {
        return Err(Error::config("mass must be positive"));
    }
    if opts.grid_points < 64 {
        return Err(Error::config("solver needs at least 64 grid points"));
    }
    let (zl, zr) = (site.z_left, site.z_right);
    if !(zr > zl) {
        return Err(Error::config("well bracket is empty"));
    }
    let n = opts.grid_points;
    let h = (zr - zl) / (n - 1) as f64;
    let z_grid: Vec<f64> = (0..n).map(|i| zl + h * i as f64).collect();
    let u: Vec<f64> = z_grid.iter().map(|&z| potential(z)).collect();
    let im = u
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i.clamp(2, n - 3))
        .unwrap();
    let u_min = u[im];
    let ceiling = opts
        .max_energy
        .unwrap_or_else(|| site.u_left.min(site.u_right));
    if ceiling <= u_min {
        return Ok(SolveOutcome::Untrapped);
    }

    let d2 = (u[im + 1] - 2.0 * u[im] + u[im - 1]) / (h * h);
    let curvature_frequency_hz = if d2 > 0.0 {
        (d2 / mass).sqrt() / (2.0 * std::f64::consts::PI)
    } else {
        0.0
    };

    let span = ceiling - u_min;
    let e_lo = u_min + 1e-9 * span;
    let e_hi = ceiling - 1e-9 * span;
    // Sturm staircase isolates each level, then bisection on the
    // log-derivative mismatch converges inside the isolated bracket.
    let n_lo = nodes_below(&u, h, mass, e_lo);
    let n_hi = nodes_below(&u, h, mass, e_hi);
    let n_levels = (n_hi - n_lo).min(opts.max_levels);
    let mut energies = Vec::with_capacity(n_levels);
    for level in 0..n_levels {
        let target = n_lo + level;
        // Narrow [a, b] so that nodes(a) <= target < nodes(b).
        let (mut a, mut b) = (e_lo, e_hi);
        let polish_width = (opts.energy_tol * 64.0).max(1e-12 * span);
        while b - a > polish_width {
            let m = 0.5 * (a + b);
            if nodes_below(&u, h, mass, m) > target {
                b = m;
            } else {
                a = m;
            }
        }
        // Log-derivative matching bisection within the isolated bracket.
        let mut fa = match_mismatch(&u, h, mass, a, im);
        let fb = match_mismatch(&u, h, mass, b, im);
        if fa * fb < 0.0 {
            while b - a > opts.energy_tol {
                let m = 0.5 * (a + b);
                let fm = match_mismatch(&u, h, mass, m, im);
                if fa * fm <= 0.0 {
                    b = m;
                } else {
                    a = m;
                    fa = fm;
                }
            }
        } else {
            // Mismatch did not change sign across the tiny bracket (node at
            // the matching point shifts the crossing); keep the staircase
            // bisection down to tolerance.
            while b - a > opts.energy_tol {
                let m = 0.5 * (a + b);
                if nodes_below(&u, h, mass, m) > target {
                    b = m;
                } else {
                    a = m;
                }
            }
        }
        energies.push(0.5 * (a + b));
    }
    if energies.is_empty() {
        return Ok(SolveOutcome::Untrapped);
    }
    let wavefunctions: Vec<Vec<f64>> = energies
        .iter()
        .map(|&e| assemble_wavefunction(&u, h, mass, e, im))
        .collect();
    Ok(SolveOutcome::Bound(BoundStateResult {
        site_index: site.index,
        state_label: state_label.to_string(),
        energies,
        wavefunctions,
        z_grid,
        well_minimum_z: site.z_min,
        well_depth: site.depth(),
        curvature_frequency_hz,
    }))
}

/// Axial trap frequency from a solved well, Hz: the ground-to-first
/// splitting, or the curvature fallback when only one level is bound.
#[derive(Debug, Clone, Copy)]
pub struct TrapFrequency {
    pub hz: f64,
    pub from_curvature: bool,
}

pub fn trap_frequency(result: &BoundStateResult) -> Result<TrapFrequency> {
    match result.energies.len() {
        0 => Err(Error::config("no bound levels in result")),
        1 => Ok(TrapFrequency {
            hz: result.curvature_frequency_hz,
            from_curvature: true,
        }),
        _ => Ok(TrapFrequency {
            hz: (result.energies[1] - result.energies[0]) / PLANCK,
            from_curvature: false,
        }),
    }
}

/// Lamb-Dicke parameter eta = (2 pi / lambda_probe) sqrt(hbar / (2 m omega_z)).
pub fn lamb_dicke(nu_z_hz: f64, probe_wavelength: f64, mass: f64) -> Result<f64> {
    if !(nu_z_hz > 0.0) {
        return Err(Error::domain("trap frequency must be positive"));
    }
    if !(probe_wavelength > 0.0 && mass > 0.0) {
        return Err(Error::domain("wavelength and mass must be positive"));
    }
    let omega = 2.0 * std::f64::consts::PI * nu_z_hz;
    Ok(2.0 * std::f64::consts::PI / probe_wavelength
        * (crate::constants::HBAR / (2.0 * mass * omega)).sqrt())
}

/// Differential ac-Stark shift between two beam intensities, Hz.
/// Intensities in kW/cm^2, `delta_alpha` in Hz per kW/cm^2.
pub fn ac_stark_differential(
    i_far_kw_cm2: f64,
    i_close_kw_cm2: f64,
    delta_alpha: f64,
) -> Result<f64> {
    if i_far_kw_cm2 < 0.0 || i_close_kw_cm2 < 0.0 {
        return Err(Error::domain("intensities must be >= 0"));
    }
    Ok(delta_alpha * (i_close_kw_cm2 - i_far_kw_cm2))
}

/// Result of the transition-shift prediction.
#[derive(Debug, Clone)]
pub enum ShiftOutcome {
    Shift(ShiftPrediction),
    /// The named state holds no bound level in the first site.
    Untrapped { state_label: String },
}

#[derive(Debug, Clone)]
pub struct ShiftPrediction {
    /// Site-1 transition shift referenced to a far site, Hz.
    pub shift_hz: f64,
    /// Same difference without the far-site reference, Hz.
    pub shift_vs_free_hz: f64,
    pub reference_site: usize,
    pub site1_z_ground: f64,
    pub site1_z_excited: f64,
    pub ground_site1: BoundStateResult,
    pub excited_site1: BoundStateResult,
}

/// Predict the spectroscopic transition shift of site 1: the motional
/// ground-state energy difference between the excited and ground atomic
/// states at site 1, minus the same difference at a far reference site.
#[allow(clippy::too_many_arguments)]
pub fn predict_transition_shift(
    ground: &StatePotential,
    excited: &StatePotential,
    ground_label: &str,
    excited_label: &str,
    mass: f64,
    window: (f64, f64),
    reference_site: usize,
    opts: &SolverOptions,
) -> Result<ShiftOutcome> {
    if reference_site < 2 {
        return Err(Error::config("reference site must be >= 2"));
    }
    let scan_points =
        ((window.1 - window.0) / (ground.lattice.wavelength / 400.0)) as usize + 16;
    let g_fn = |z: f64| ground.energy(z);
    let e_fn = |z: f64| excited.energy(z);
    let g_sites = find_sites(&g_fn, window, scan_points)?;
    let e_sites = find_sites(&e_fn, window, scan_points)?;
    let Some(g1) = g_sites.first() else {
        return Ok(ShiftOutcome::Untrapped {
            state_label: ground_label.to_string(),
        });
    };
    // The excited site must be the same physical well as the ground site.
    let quarter = ground.lattice.wavelength / 4.0;
    let Some(e1) = e_sites.iter().find(|s| (s.z_min - g1.z_min).abs() < quarter) else {
        return Ok(ShiftOutcome::Untrapped {
            state_label: excited_label.to_string(),
        });
    };
    let g_ref = g_sites
        .iter()
        .find(|s| s.index == reference_site + (g1.index - 1))
        .ok_or_else(|| {
            Error::config(format!(
                "reference site {reference_site} not inside the window"
            ))
        })?;
    let e_ref = e_sites
        .iter()
        .find(|s| (s.z_min - g_ref.z_min).abs() < quarter)
        .ok_or_else(|| Error::config("excited state unbound at the reference site"))?;

    let SolveOutcome::Bound(gb1) = solve_bound_states(&g_fn, g1, ground_label, mass, opts)? else {
        return Ok(ShiftOutcome::Untrapped {
            state_label: ground_label.to_string(),
        });
    };
    let SolveOutcome::Bound(eb1) = solve_bound_states(&e_fn, e1, excited_label, mass, opts)? else {
        return Ok(ShiftOutcome::Untrapped {
            state_label: excited_label.to_string(),
        });
    };
    let SolveOutcome::Bound(gbr) = solve_bound_states(&g_fn, g_ref, ground_label, mass, opts)?
    else {
        return Err(Error::config("ground state unbound at the reference site"));
    };
    let SolveOutcome::Bound(ebr) = solve_bound_states(&e_fn, e_ref, excited_label, mass, opts)?
    else {
        return Err(Error::config("excited state unbound at the reference site"));
    };
    let site1_diff = eb1.energies[0] - gb1.energies[0];
    let ref_diff = ebr.energies[0] - gbr.energies[0];
    Ok(ShiftOutcome::Shift(ShiftPrediction {
        shift_hz: (site1_diff - ref_diff) / PLANCK,
        shift_vs_free_hz: site1_diff / PLANCK,
        reference_site,
        site1_z_ground: g1.z_min,
        site1_z_excited: e1.z_min,
        ground_site1: gb1,
        excited_site1: eb1,
    }))
}
