//! Command-line front end: configuration loading, fixture resolution,
//! subcommand entry points and table/report output.
//!
//! File schemas (all delimiter-separated text with a header row, or TOML):
//! - line list: `state_label, partner, wavelength_nm | omega_rad_s,
//!   weight_x_au, weight_y_au, weight_z_au` ('#' comments; a negative
//!   wavelength or frequency marks a partner below the state).
//! - dispersion: `omega_rad_s | wavelength_um, n, k`.
//! - stack: TOML with `incident`, `substrate`, `layers = [[material,
//!   thickness_nm], ...]`, outermost layer first.
//! - spectrum: `detuning_hz, counts` plus optional `# label:/location:/
//!   exposure:` metadata comments.
//! - run config: TOML, sections below; paths resolve relative to the config
//!   file's directory.
//!
//! Every run writes a `manifest.toml` with the config and fixture hashes,
//! seed and tolerance policy; outputs are written atomically (temp file +
//! rename) and are byte-identical for identical config + seed.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::atomdata::{load_line_lists, StatePolarizability};
use crate::constants::{BOLTZMANN, PLANCK, POLARIZABILITY_AU, SPEED_OF_LIGHT, SR88_MASS};
use crate::cpcore::{
    sample_potential_curve, CpEvaluator, CurveInterpolant, Regime, TolerancePolicy,
};
use crate::error::{Error, Result};
use crate::multilayer::{
    load_stack_file, phase_tolerance_mc, CoatingStack, DispersionTable, Medium, ReflectionResult,
};
use crate::specfit::{fit_ramp_calibration, fit_spectrum, FitModel, SpectrumDataset};
use crate::trap::{
    ac_stark_differential, find_sites, lamb_dicke, predict_transition_shift, solve_bound_states,
    trap_frequency, LatticeConfig, ShiftOutcome, SolveOutcome, SolverOptions, StatePotential,
};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub files: FilesSection,
    pub materials: BTreeMap<String, String>,
    pub atom: AtomSection,
    pub lattice: LatticeSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub coating: CoatingSection,
    #[serde(default)]
    pub calibration: CalibrationSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilesSection {
    pub line_list: String,
    pub stack: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomSection {
    pub ground_state: String,
    pub excited_state: String,
    /// Atom mass in kg; defaults to the 88Sr mass.
    #[serde(default)]
    pub mass_kg: Option<f64>,
    pub probe_wavelength_nm: f64,
    pub trap_polarizability_hz_per_kw_cm2: BTreeMap<String, f64>,
    /// Reference static polarizabilities for the far-field limit, atomic
    /// units; optional per state.
    #[serde(default)]
    pub dc_polarizability_au: BTreeMap<String, f64>,
    /// Differential trap polarizability (excited - ground) at the lattice
    /// wavelength, Hz per kW/cm^2, for the ac-Stark estimate.
    #[serde(default)]
    pub delta_trap_polarizability_hz_per_kw_cm2: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSection {
    pub wavelength_nm: f64,
    pub intensity_close_kw_per_cm2: f64,
    pub intensity_far_kw_per_cm2: f64,
    /// Surface reflectance at the lattice wavelength; derived from the
    /// stack when omitted.
    #[serde(default)]
    pub reflectance: Option<f64>,
    /// Reflection phase at the lattice wavelength, rad; derived from the
    /// stack when omitted.
    #[serde(default)]
    pub reflection_phase_rad: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub z_min_nm: f64,
    pub z_max_nm: f64,
    pub points: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            z_min_nm: 20.0,
            z_max_nm: 3400.0,
            points: 150,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_regime")]
    pub regime: String,
    #[serde(default = "default_tol")]
    pub cp_rel_tol: f64,
    #[serde(default = "default_ref_site")]
    pub reference_site: usize,
    #[serde(default = "default_bootstrap")]
    pub bootstrap_resamples: usize,
}

fn default_seed() -> u64 {
    1
}
fn default_regime() -> String {
    "full".into()
}
fn default_tol() -> f64 {
    1e-6
}
fn default_ref_site() -> usize {
    4
}
fn default_bootstrap() -> usize {
    crate::specfit::DEFAULT_BOOTSTRAP_RESAMPLES
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            seed: default_seed(),
            regime: default_regime(),
            cp_rel_tol: default_tol(),
            reference_site: default_ref_site(),
            bootstrap_resamples: default_bootstrap(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoatingSection {
    pub lambda_min_nm: f64,
    pub lambda_max_nm: f64,
    pub points: usize,
    pub mc_trials: usize,
    pub mc_sigma_nm: f64,
}

impl Default for CoatingSection {
    fn default() -> Self {
        CoatingSection {
            lambda_min_nm: 400.0,
            lambda_max_nm: 1000.0,
            points: 121,
            mc_trials: 10_000,
            mc_sigma_nm: 1.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSection {
    pub pixel_size_um: f64,
}

impl Default for CalibrationSection {
    fn default() -> Self {
        CalibrationSection { pixel_size_um: 8.0 }
    }
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<(RunConfig, String)> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        let cfg: RunConfig = toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: None,
            msg: e.to_string(),
        })?;
        if cfg.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(Error::config(format!(
                "unsupported config schema version {} (expected {})",
                cfg.schema_version, CONFIG_SCHEMA_VERSION
            )));
        }
        Ok((cfg, text))
    }
}

/// FNV-1a 64-bit hash of file bytes; stable fingerprint for manifests.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub regime: Option<Regime>,
    pub rel_tol: Option<f64>,
}

/// Fully resolved inputs of a run: fixtures loaded and validated, overrides
/// applied, hashes recorded for the manifest.
pub struct Setup {
    pub config: RunConfig,
    pub config_hash: u64,
    pub fixture_hashes: BTreeMap<String, u64>,
    pub stack: CoatingStack,
    pub states: BTreeMap<String, StatePolarizability>,
    pub mass: f64,
    pub regime: Regime,
    pub tolerance: TolerancePolicy,
    pub seed: u64,
    /// Lattice reflectance/phase at the lattice wavelength (configured or
    /// derived from the stack).
    pub reflectance: f64,
    pub reflection_phase: f64,
}

impl Setup {
    pub fn resolve(path: impl AsRef<Path>, overrides: &Overrides) -> Result<Setup> {
        let path = path.as_ref();
        let (mut config, text) = RunConfig::load(path)?;
        let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        let config_hash = fnv1a64(text.as_bytes());

        if let Some(seed) = overrides.seed {
            config.run.seed = seed;
        }
        if let Some(tol) = overrides.rel_tol {
            config.run.cp_rel_tol = tol;
        }
        let regime = match overrides.regime {
            Some(r) => r,
            None => Regime::parse(&config.run.regime)?,
        };
        let tolerance = TolerancePolicy::with_rel_tol(config.run.cp_rel_tol)?;

        let mut fixture_hashes = BTreeMap::new();
        let hash_file = |rel: &str,
                             fixture_hashes: &mut BTreeMap<String, u64>|
         -> Result<PathBuf> {
            let p = base.join(rel);
            let bytes = fs::read(&p).map_err(|source| Error::Io {
                path: p.display().to_string(),
                source,
            })?;
            fixture_hashes.insert(rel.to_string(), fnv1a64(&bytes));
            Ok(p)
        };

        let mut materials = BTreeMap::new();
        for (name, rel) in &config.materials {
            let p = hash_file(rel, &mut fixture_hashes)?;
            materials.insert(
                name.clone(),
                Medium::Tabulated(DispersionTable::load(&p, name.clone())?),
            );
        }
        let stack_path = hash_file(&config.files.stack, &mut fixture_hashes)?;
        let stack = load_stack_file(&stack_path, &materials)?;
        let lines_path = hash_file(&config.files.line_list, &mut fixture_hashes)?;
        let mut states = load_line_lists(&lines_path)?;

        for (label, state) in states.iter_mut() {
            if let Some(&alpha) = config.atom.trap_polarizability_hz_per_kw_cm2.get(label) {
                state.trap_polarizability = alpha;
            }
            if let Some(&alpha0) = config.atom.dc_polarizability_au.get(label) {
                state.dc_polarizability = Some(alpha0 * POLARIZABILITY_AU);
            }
        }
        for key in [&config.atom.ground_state, &config.atom.excited_state] {
            let state = states
                .get(key)
                .ok_or_else(|| Error::config(format!("state {key:?} not in line list")))?;
            if state.trap_polarizability == 0.0 {
                return Err(Error::config(format!(
                    "no trap polarizability configured for state {key:?}"
                )));
            }
        }
        let grid = &config.grid;
        if !(grid.z_min_nm > 0.0 && grid.z_max_nm > grid.z_min_nm) || grid.points == 0 {
            return Err(Error::config("z grid bounds must be positive and increasing"));
        }
        if !(config.lattice.wavelength_nm > 0.0
            && config.lattice.intensity_close_kw_per_cm2 > 0.0
            && config.lattice.intensity_far_kw_per_cm2 > 0.0)
        {
            return Err(Error::config(
                "lattice wavelength and intensities must be positive",
            ));
        }

        // Lattice reflectance/phase: configured values win, otherwise the
        // stack response at the lattice wavelength.
        let (reflectance, reflection_phase) = match (
            config.lattice.reflectance,
            config.lattice.reflection_phase_rad,
        ) {
            (Some(r), Some(p)) => (r, p),
            (r_cfg, p_cfg) => {
                let omega = 2.0 * std::f64::consts::PI * SPEED_OF_LIGHT
                    / (config.lattice.wavelength_nm * 1e-9);
                let refl = ReflectionResult::at_real_frequency(&stack, omega, 0.0)?;
                (
                    r_cfg.unwrap_or(refl.reflectance_te),
                    p_cfg.unwrap_or(refl.phase_te),
                )
            }
        };

        let seed = config.run.seed;
        let mass = config.atom.mass_kg.unwrap_or(SR88_MASS);
        Ok(Setup {
            config,
            config_hash,
            fixture_hashes,
            stack,
            states,
            mass,
            regime,
            tolerance,
            seed,
            reflectance,
            reflection_phase,
        })
    }

    pub fn ground(&self) -> &StatePolarizability {
        &self.states[&self.config.atom.ground_state]
    }

    pub fn excited(&self) -> &StatePolarizability {
        &self.states[&self.config.atom.excited_state]
    }

    pub fn lattice(&self, intensity_kw_cm2: f64) -> LatticeConfig {
        LatticeConfig {
            wavelength: self.config.lattice.wavelength_nm * 1e-9,
            incident_peak_intensity: intensity_kw_cm2 * 1e7,
            reflectance: self.reflectance,
            reflection_phase: self.reflection_phase,
        }
    }

    pub fn window(&self) -> (f64, f64) {
        (
            self.config.grid.z_min_nm * 1e-9,
            self.config.grid.z_max_nm * 1e-9,
        )
    }

    fn manifest(&self, command: &str, extra: &[(String, String)]) -> String {
        let mut out = String::new();
        out.push_str("# run manifest: inputs sufficient to reproduce this output\n");
        writeln!(out, "schema_version = {CONFIG_SCHEMA_VERSION}").unwrap();
        writeln!(out, "tool = \"cpsurf {}\"", env!("CARGO_PKG_VERSION")).unwrap();
        writeln!(out, "command = \"{command}\"").unwrap();
        writeln!(out, "seed = {}", self.seed).unwrap();
        writeln!(out, "regime = \"{}\"", self.regime.as_str()).unwrap();
        writeln!(out, "cp_rel_tol = {:e}", self.tolerance.rel_tol).unwrap();
        writeln!(out, "kappa_cutoff = {}", self.tolerance.kappa_cutoff).unwrap();
        writeln!(out, "config_hash = \"{:016x}\"", self.config_hash).unwrap();
        for (k, v) in extra {
            writeln!(out, "{k} = {v}").unwrap();
        }
        out.push_str("\n[fixture_hashes]\n");
        for (rel, h) in &self.fixture_hashes {
            writeln!(out, "\"{rel}\" = \"{h:016x}\"").unwrap();
        }
        out
    }
}

/// Write a file atomically (temp + rename).
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let io_err = |source: std::io::Error| Error::Io {
        path: path.display().to_string(),
        source,
    };
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err)?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents).map_err(io_err)?;
    fs::rename(&tmp, path).map_err(io_err)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

fn curve_interpolants(
    setup: &Setup,
    evaluator: &CpEvaluator,
    regime: Regime,
) -> Result<(CurveInterpolant, CurveInterpolant)> {
    let (lo, hi) = setup.window();
    let n = setup.config.grid.points.max(2);
    let cg = sample_potential_curve(evaluator, setup.ground(), regime, lo, hi, n)?;
    let ce = sample_potential_curve(evaluator, setup.excited(), regime, lo, hi, n)?;
    Ok((cg.interpolant()?, ce.interpolant()?))
}

/// Per-state Casimir-Polder curves and the differential shift curve.
pub fn cmd_cp_curve(setup: &Setup, out_dir: &Path) -> Result<Vec<PathBuf>> {
    use rayon::prelude::*;
    let evaluator = CpEvaluator::with_tolerance(&setup.stack, setup.tolerance)?;
    let (lo, hi) = setup.window();
    let n = setup.config.grid.points;
    let grid: Vec<f64> = if n == 1 {
        vec![lo]
    } else {
        (0..n)
            .map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64))
            .collect()
    };
    let mut files = Vec::new();
    let mut curves: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for state in [setup.ground(), setup.excited()] {
        let values: Vec<f64> = grid
            .par_iter()
            .map(|&z| evaluator.total(state, z, setup.regime))
            .collect::<Result<_>>()?;
        let mut out = String::from("z_m,potential_j,potential_hz,potential_uk\n");
        for (z, v) in grid.iter().zip(&values) {
            writeln!(
                out,
                "{:.9e},{:.9e},{:.9e},{:.9e}",
                z,
                v,
                v / PLANCK,
                v / BOLTZMANN * 1e6
            )
            .unwrap();
        }
        let path = out_dir.join(format!("cp_curve_{}.csv", state.state_label));
        write_atomic(&path, &out)?;
        files.push(path);
        curves.insert(state.state_label.clone(), values);
    }
    let vg = &curves[&setup.config.atom.ground_state];
    let ve = &curves[&setup.config.atom.excited_state];
    let mut out = String::from("z_m,differential_shift_hz\n");
    for (i, z) in grid.iter().enumerate() {
        writeln!(out, "{:.9e},{:.9e}", z, (ve[i] - vg[i]) / PLANCK).unwrap();
    }
    let path = out_dir.join("cp_curve_differential.csv");
    write_atomic(&path, &out)?;
    files.push(path);
    let mpath = out_dir.join("manifest.toml");
    write_atomic(&mpath, &setup.manifest("cp-curve", &[]))?;
    files.push(mpath);
    Ok(files)
}

/// Reflectance/phase versus wavelength and angle, plus the thickness
/// tolerance Monte Carlo.
pub fn cmd_coating(setup: &Setup, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let c = &setup.config.coating;
    if !(c.lambda_min_nm > 0.0 && c.lambda_max_nm > c.lambda_min_nm) || c.points < 2 {
        return Err(Error::config(
            "coating scan needs an increasing wavelength range",
        ));
    }
    let mut files = Vec::new();

    let mut out =
        String::from("wavelength_nm,reflectance_te,phase_te_rad,reflectance_tm,phase_tm_rad\n");
    for i in 0..c.points {
        let lam = c.lambda_min_nm
            + (c.lambda_max_nm - c.lambda_min_nm) * i as f64 / (c.points - 1) as f64;
        let omega = 2.0 * std::f64::consts::PI * SPEED_OF_LIGHT / (lam * 1e-9);
        let r = ReflectionResult::at_real_frequency(&setup.stack, omega, 0.0)?;
        writeln!(
            out,
            "{:.6},{:.9e},{:.9e},{:.9e},{:.9e}",
            lam, r.reflectance_te, r.phase_te, r.reflectance_tm, r.phase_tm
        )
        .unwrap();
    }
    let path = out_dir.join("coating_spectrum.csv");
    write_atomic(&path, &out)?;
    files.push(path);

    // Angle scan at the lattice wavelength, parameterized by k_T.
    let lam = setup.config.lattice.wavelength_nm * 1e-9;
    let omega = 2.0 * std::f64::consts::PI * SPEED_OF_LIGHT / lam;
    let k0 = omega / SPEED_OF_LIGHT;
    let mut out =
        String::from("k_t_over_k0,reflectance_te,phase_te_rad,reflectance_tm,phase_tm_rad\n");
    for i in 0..20 {
        let frac = i as f64 * 0.05;
        let r = ReflectionResult::at_real_frequency(&setup.stack, omega, frac * k0)?;
        writeln!(
            out,
            "{:.3},{:.9e},{:.9e},{:.9e},{:.9e}",
            frac, r.reflectance_te, r.phase_te, r.reflectance_tm, r.phase_tm
        )
        .unwrap();
    }
    let path = out_dir.join("coating_angle_scan.csv");
    write_atomic(&path, &out)?;
    files.push(path);

    let (mean, sd) =
        phase_tolerance_mc(&setup.stack, lam, c.mc_sigma_nm * 1e-9, c.mc_trials, setup.seed)?;
    let r_lat = ReflectionResult::at_real_frequency(&setup.stack, omega, 0.0)?;
    let mut report = String::new();
    report.push_str("# thickness-tolerance Monte Carlo at the lattice wavelength\n");
    writeln!(report, "schema_version = {CONFIG_SCHEMA_VERSION}").unwrap();
    writeln!(
        report,
        "wavelength_nm = {:.3}",
        setup.config.lattice.wavelength_nm
    )
    .unwrap();
    writeln!(report, "reflectance = {:.6}", r_lat.reflectance_te).unwrap();
    writeln!(report, "phase_rad = {:.6}", r_lat.phase_te).unwrap();
    writeln!(report, "mc_trials = {}", c.mc_trials).unwrap();
    writeln!(report, "mc_sigma_nm = {:.3}", c.mc_sigma_nm).unwrap();
    writeln!(report, "mc_phase_mean_rad = {:.6}", mean).unwrap();
    writeln!(report, "mc_phase_sd_rad = {:.6}", sd).unwrap();
    let path = out_dir.join("coating_mc.toml");
    write_atomic(&path, &report)?;
    files.push(path);

    let mpath = out_dir.join("manifest.toml");
    write_atomic(&mpath, &setup.manifest("coating", &[]))?;
    files.push(mpath);
    Ok(files)
}

/// One regime's prediction.
pub struct RegimePrediction {
    pub regime: Regime,
    pub outcome: ShiftOutcome,
}

/// Trap observables from the close/far fixtures (full regime).
pub struct TrapReport {
    pub site1_z_nm: f64,
    pub site1_depth_uk: f64,
    pub site2_depth_uk: f64,
    pub nu_close_khz: f64,
    pub nu_far_khz: f64,
    pub lamb_dicke: f64,
    pub ac_stark_hz: Option<f64>,
}

pub fn predict_regime(
    setup: &Setup,
    evaluator: &CpEvaluator,
    regime: Regime,
) -> Result<RegimePrediction> {
    let (ig, ie) = curve_interpolants(setup, evaluator, regime)?;
    let lattice = setup.lattice(setup.config.lattice.intensity_close_kw_per_cm2);
    let pg = StatePotential {
        lattice: &lattice,
        trap_polarizability: setup.ground().trap_polarizability,
        surface: Some(&ig),
    };
    let pe = StatePotential {
        lattice: &lattice,
        trap_polarizability: setup.excited().trap_polarizability,
        surface: Some(&ie),
    };
    let outcome = predict_transition_shift(
        &pg,
        &pe,
        &setup.config.atom.ground_state,
        &setup.config.atom.excited_state,
        setup.mass,
        setup.window(),
        setup.config.run.reference_site,
        &SolverOptions::default(),
    )?;
    Ok(RegimePrediction { regime, outcome })
}

pub fn trap_report(setup: &Setup, evaluator: &CpEvaluator) -> Result<TrapReport> {
    let (ig, _ie) = curve_interpolants(setup, evaluator, Regime::Full)?;
    let lattice = setup.lattice(setup.config.lattice.intensity_close_kw_per_cm2);
    let pg = StatePotential {
        lattice: &lattice,
        trap_polarizability: setup.ground().trap_polarizability,
        surface: Some(&ig),
    };
    let f = |z: f64| pg.energy(z);
    let scan =
        ((setup.window().1 - setup.window().0) / (lattice.wavelength / 400.0)) as usize + 16;
    let sites = find_sites(&f, setup.window(), scan)?;
    if sites.len() < 2 {
        return Err(Error::config(
            "close-position potential holds fewer than two sites",
        ));
    }
    let opts = SolverOptions::default();
    let b1 = solve_bound_states(
        &f,
        &sites[0],
        &setup.config.atom.ground_state,
        setup.mass,
        &opts,
    )?;
    let SolveOutcome::Bound(b1) = b1 else {
        return Err(Error::config("ground state unbound in site 1"));
    };
    let nu_close = trap_frequency(&b1)?;

    // Far position: the surface potential is negligible tens of microns out.
    let lattice_far = setup.lattice(setup.config.lattice.intensity_far_kw_per_cm2);
    let pf = StatePotential {
        lattice: &lattice_far,
        trap_polarizability: setup.ground().trap_polarizability,
        surface: None,
    };
    let ff = |z: f64| pf.energy(z);
    let sites_far = find_sites(&ff, setup.window(), scan)?;
    let bf = solve_bound_states(
        &ff,
        sites_far.get(1).unwrap_or(&sites_far[0]),
        &setup.config.atom.ground_state,
        setup.mass,
        &opts,
    )?;
    let SolveOutcome::Bound(bf) = bf else {
        return Err(Error::config("ground state unbound at the far position"));
    };
    let nu_far = trap_frequency(&bf)?;

    let probe = setup.config.atom.probe_wavelength_nm * 1e-9;
    let eta = lamb_dicke(nu_close.hz, probe, setup.mass)?;
    let ac = setup
        .config
        .atom
        .delta_trap_polarizability_hz_per_kw_cm2
        .map(|da| {
            ac_stark_differential(
                setup.config.lattice.intensity_far_kw_per_cm2,
                setup.config.lattice.intensity_close_kw_per_cm2,
                da,
            )
        })
        .transpose()?;
    Ok(TrapReport {
        site1_z_nm: sites[0].z_min * 1e9,
        site1_depth_uk: sites[0].depth() / BOLTZMANN * 1e6,
        site2_depth_uk: sites[1].depth() / BOLTZMANN * 1e6,
        nu_close_khz: nu_close.hz / 1e3,
        nu_far_khz: nu_far.hz / 1e3,
        lamb_dicke: eta,
        ac_stark_hz: ac,
    })
}

/// Three-regime prediction table plus trap observables.
pub fn cmd_predict(setup: &Setup, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let evaluator = CpEvaluator::with_tolerance(&setup.stack, setup.tolerance)?;
    let mut files = Vec::new();
    let mut table =
        String::from("regime,outcome,shift_hz,shift_vs_free_hz,site1_z_ground_nm\n");
    let mut report = String::new();
    report.push_str("# transition-shift prediction\n");
    writeln!(report, "schema_version = {CONFIG_SCHEMA_VERSION}").unwrap();
    for regime in [Regime::Full, Regime::ShortRange, Regime::LongRange] {
        let pred = predict_regime(setup, &evaluator, regime)?;
        match &pred.outcome {
            ShiftOutcome::Shift(p) => {
                writeln!(
                    table,
                    "{},bound,{:.3},{:.3},{:.3}",
                    regime.as_str(),
                    p.shift_hz,
                    p.shift_vs_free_hz,
                    p.site1_z_ground * 1e9
                )
                .unwrap();
                writeln!(report, "\n[{}]", regime.as_str()).unwrap();
                writeln!(report, "outcome = \"bound\"").unwrap();
                writeln!(report, "shift_hz = {:.3}", p.shift_hz).unwrap();
                writeln!(report, "shift_vs_free_hz = {:.3}", p.shift_vs_free_hz).unwrap();
                writeln!(report, "reference_site = {}", p.reference_site).unwrap();
                writeln!(report, "site1_z_ground_nm = {:.3}", p.site1_z_ground * 1e9).unwrap();
                writeln!(report, "site1_z_excited_nm = {:.3}", p.site1_z_excited * 1e9)
                    .unwrap();
            }
            ShiftOutcome::Untrapped { state_label } => {
                writeln!(table, "{},untrapped:{},,,", regime.as_str(), state_label).unwrap();
                writeln!(report, "\n[{}]", regime.as_str()).unwrap();
                writeln!(report, "outcome = \"untrapped\"").unwrap();
                writeln!(report, "untrapped_state = \"{state_label}\"").unwrap();
            }
        }
    }
    let trap = trap_report(setup, &evaluator)?;
    report.push_str("\n[trap]\n");
    writeln!(report, "site1_z_nm = {:.3}", trap.site1_z_nm).unwrap();
    writeln!(report, "site1_depth_uk = {:.3}", trap.site1_depth_uk).unwrap();
    writeln!(report, "site2_depth_uk = {:.3}", trap.site2_depth_uk).unwrap();
    writeln!(report, "nu_close_khz = {:.3}", trap.nu_close_khz).unwrap();
    writeln!(report, "nu_far_khz = {:.3}", trap.nu_far_khz).unwrap();
    writeln!(report, "lamb_dicke = {:.4}", trap.lamb_dicke).unwrap();
    if let Some(ac) = trap.ac_stark_hz {
        writeln!(report, "ac_stark_differential_hz = {:.3}", ac).unwrap();
    }

    let tpath = out_dir.join("predict_summary.csv");
    write_atomic(&tpath, &table)?;
    files.push(tpath);
    let rpath = out_dir.join("predict.toml");
    write_atomic(&rpath, &report)?;
    files.push(rpath);
    let mpath = out_dir.join("manifest.toml");
    write_atomic(&mpath, &setup.manifest("predict", &[]))?;
    files.push(mpath);
    Ok(files)
}

/// Spectral / sideband / calibration fitting entry point.
pub fn cmd_fit(
    setup: &Setup,
    data_path: &Path,
    model: FitModel,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    let mut report = String::new();
    report.push_str("# fit report\n");
    writeln!(report, "schema_version = {CONFIG_SCHEMA_VERSION}").unwrap();
    writeln!(report, "model = \"{}\"", model.as_str()).unwrap();

    match model {
        FitModel::Linear => {
            // Ramp calibration: (bias field G, center px) columns.
            let ds = load_xy(data_path)?;
            let cal = fit_ramp_calibration(&ds, setup.config.calibration.pixel_size_um * 1e-6)?;
            writeln!(report, "slope_px_per_g = {:.6}", cal.slope_px_per_g).unwrap();
            writeln!(report, "slope_um_per_g = {:.4}", cal.slope_m_per_g * 1e6).unwrap();
            writeln!(
                report,
                "slope_std_error_um_per_g = {:.4}",
                cal.slope_std_error_m_per_g * 1e6
            )
            .unwrap();
            writeln!(report, "intercept_px = {:.6}", cal.intercept_px).unwrap();
            writeln!(
                report,
                "intercept_std_error_px = {:.6}",
                cal.intercept_std_error_px
            )
            .unwrap();
        }
        FitModel::Gaussian => {
            let ds = load_xy(data_path)?;
            let fit = crate::specfit::fit_gaussian_center(&ds)?;
            writeln!(report, "converged = {}", fit.converged).unwrap();
            writeln!(report, "residual_norm = {:.6e}", fit.residual_norm).unwrap();
            report.push_str("\n[parameters]\n");
            for (name, (v, e)) in fit
                .parameter_names
                .iter()
                .zip(fit.parameters.iter().zip(&fit.std_errors))
            {
                writeln!(report, "{name} = [{v:.9e}, {e:.3e}]").unwrap();
            }
        }
        _ => {
            let ds = SpectrumDataset::load(data_path)?;
            let fit = fit_spectrum(&ds, model, setup.seed, setup.config.run.bootstrap_resamples)?;
            writeln!(report, "label = \"{}\"", ds.label).unwrap();
            writeln!(report, "converged = {}", fit.converged).unwrap();
            writeln!(report, "residual_norm = {:.6e}", fit.residual_norm).unwrap();
            writeln!(
                report,
                "secondary_peak_absent = {}",
                fit.secondary_peak_absent
            )
            .unwrap();
            if let Some(sep) = fit.peak_separation {
                writeln!(report, "separation_hz = {:.3}", sep.value_hz).unwrap();
                writeln!(report, "separation_ci16_hz = {:.3}", sep.ci_lower_hz).unwrap();
                writeln!(report, "separation_ci84_hz = {:.3}", sep.ci_upper_hz).unwrap();
            }
            report.push_str("\n[parameters]\n");
            for (name, (v, e)) in fit
                .parameter_names
                .iter()
                .zip(fit.parameters.iter().zip(&fit.std_errors))
            {
                writeln!(report, "{name} = [{v:.9e}, {e:.3e}]").unwrap();
            }
            // Fitted curve for plotting.
            let mut curve = String::from("detuning_hz,counts,model\n");
            for &(x, y) in &ds.points {
                let m = eval_model(model, &fit.parameters, x);
                writeln!(curve, "{:.9e},{:.9e},{:.9e}", x, y, m).unwrap();
            }
            let cpath = out_dir.join("fit_curve.csv");
            write_atomic(&cpath, &curve)?;
            files.push(cpath);
        }
    }

    let rpath = out_dir.join("fit_report.toml");
    write_atomic(&rpath, &report)?;
    files.push(rpath);
    let data_hash = fs::read(data_path)
        .map(|b| fnv1a64(&b))
        .map_err(|source| Error::Io {
            path: data_path.display().to_string(),
            source,
        })?;
    let mpath = out_dir.join("manifest.toml");
    write_atomic(
        &mpath,
        &setup.manifest(
            "fit",
            &[("data_hash".into(), format!("\"{data_hash:016x}\""))],
        ),
    )?;
    files.push(mpath);
    Ok(files)
}

/// Evaluate a fitted spectral model (for table output).
fn eval_model(model: FitModel, p: &[f64], x: f64) -> f64 {
    use crate::specfit::voigt;
    match model {
        FitModel::SingleVoigt => {
            p[0] + voigt(x, p[2], p[3], p[4], p[1], 0.0).unwrap_or(f64::NAN)
        }
        FitModel::DoubleVoigt | FitModel::DoubleVoigtDips => {
            p[0] + voigt(x, p[2], p[3], p[4], p[1], 0.0).unwrap_or(f64::NAN)
                + voigt(x, p[2] + p[6], p[3], p[4], p[5], 0.0).unwrap_or(f64::NAN)
        }
        FitModel::Gaussian => {
            let u = (x - p[2]) / p[3];
            p[0] + p[1] * (-0.5 * u * u).exp()
        }
        FitModel::Linear => p[0] + p[1] * x,
    }
}

/// Two-column numeric file (same delimiter rules as spectra).
fn load_xy(path: &Path) -> Result<Vec<(f64, f64)>> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut rows = Vec::new();
    let mut header_seen = false;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line
            .split(|c| c == ',' || c == '\t')
            .map(str::trim)
            .collect();
        if !header_seen {
            header_seen = true;
            if fields[0].parse::<f64>().is_err() {
                continue;
            }
        }
        if fields.len() < 2 {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: Some(lineno + 1),
                msg: "expected two numeric columns".into(),
            });
        }
        let parse = |v: &str| -> Result<f64> {
            v.parse::<f64>().map_err(|_| Error::Parse {
                path: path.display().to_string(),
                line: Some(lineno + 1),
                msg: format!("bad value {v:?}"),
            })
        };
        rows.push((parse(fields[0])?, parse(fields[1])?));
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            path: path.display().to_string(),
            line: None,
            msg: "no data rows".into(),
        });
    }
    Ok(rows)
}
