//! Ignored development tools used to (re)build the shipped fixture files
//! and to print the observable pipeline for fixture calibration. Run
//! explicitly, e.g.
//!   cargo test -p cpsurf --test fixture_tools -- --ignored gen_dispersion
//! The generated files live in crates/core/data/ and are committed.

use std::fmt::Write as _;
use std::path::PathBuf;

use num_complex::Complex64;

fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data")
}

/// One Lorentz oscillator: strength B (dimensionless), resonance wavelength
/// um, fractional damping gamma/omega0.
struct Osc {
    b: f64,
    lambda_um: f64,
    gamma_frac: f64,
}

fn eps_model(oscs: &[Osc], omega: f64) -> Complex64 {
    let mut eps = Complex64::new(1.0, 0.0);
    for o in oscs {
        let w0 = 2.0 * std::f64::consts::PI * 2.997_924_58e8 / (o.lambda_um * 1e-6);
        let gamma = o.gamma_frac * w0;
        eps += o.b * w0 * w0
            / Complex64::new(w0 * w0 - omega * omega, -gamma * omega);
    }
    eps
}

fn write_dispersion(name: &str, comment: &str, oscs: &[Osc], lo_um: f64, hi_um: f64) {
    let c = 2.997_924_58e8;
    let w_lo = 2.0 * std::f64::consts::PI * c / (hi_um * 1e-6);
    let w_hi = 2.0 * std::f64::consts::PI * c / (lo_um * 1e-6);
    let per_decade = 400.0;
    let n_rows = ((w_hi / w_lo).ln() / std::f64::consts::LN_10 * per_decade) as usize;
    let mut out = String::new();
    out.push_str(comment);
    out.push_str("omega_rad_s,n,k\n");
    for i in 0..=n_rows {
        let w = w_lo * (w_hi / w_lo).powf(i as f64 / n_rows as f64);
        let nk = eps_model(oscs, w).sqrt();
        writeln!(out, "{:.9e},{:.9e},{:.9e}", w, nk.re, nk.im.max(0.0)).unwrap();
    }
    let path = data_dir().join(format!("dispersion_{name}.csv"));
    std::fs::write(&path, out).unwrap();
    println!("wrote {} ({} rows)", path.display(), n_rows + 1);
}

fn silica_oscs() -> Vec<Osc> {
    // Visible/UV strengths and poles from the standard three-term fused
    // silica Sellmeier fit; one added far-IR oscillator carries the phonon
    // strength so the dc index reaches the literature long-wavelength value
    // (~2.038 at 125 um).
    vec![
        Osc { b: 0.696_166_3, lambda_um: 0.068_404_3, gamma_frac: 0.04 },
        Osc { b: 0.407_942_6, lambda_um: 0.116_241_4, gamma_frac: 0.04 },
        Osc { b: 0.897_479_4, lambda_um: 9.896_161, gamma_frac: 0.05 },
        Osc { b: 1.151_8, lambda_um: 21.5, gamma_frac: 0.06 },
    ]
}

fn mgf2_oscs() -> Vec<Osc> {
    // Ordinary-ray Sellmeier strengths/poles for MgF2.
    vec![
        Osc { b: 0.487_551_08, lambda_um: 0.043_384_08, gamma_frac: 0.04 },
        Osc { b: 0.398_750_31, lambda_um: 0.094_614_42, gamma_frac: 0.04 },
        Osc { b: 2.312_035_3, lambda_um: 23.793_604, gamma_frac: 0.06 },
    ]
}

fn hfo2_oscs() -> Vec<Osc> {
    // Effective thin-film model: UV strength fit to film indices
    // (n ~ 2.09 at 457 nm, ~2.02 at 914 nm), band-edge tail near 245 nm and
    // lattice phonon strength giving a dc permittivity around 16.
    vec![
        Osc { b: 2.745, lambda_um: 0.140, gamma_frac: 0.05 },
        Osc { b: 0.25, lambda_um: 0.245, gamma_frac: 0.08 },
        Osc { b: 12.0, lambda_um: 32.0, gamma_frac: 0.08 },
    ]
}

#[test]
#[ignore]
fn gen_dispersion() {
    std::fs::create_dir_all(data_dir()).unwrap();
    write_dispersion(
        "sio2",
        "# Fused silica (amorphous SiO2), synthetic Lorentz-oscillator model.\n\
         # UV/visible poles and strengths follow the standard three-term\n\
         # Sellmeier fit of fused silica; an additional 21.5 um oscillator\n\
         # carries the IR phonon strength so that n(125 um) ~ 2.038.\n\
         # Valid range 0.04-125 um.\n",
        &silica_oscs(),
        0.04,
        125.0,
    );
    write_dispersion(
        "mgf2",
        "# MgF2 (ordinary ray), synthetic Lorentz-oscillator model from the\n\
         # standard Sellmeier strengths and poles. Valid range 0.0275-125 um.\n",
        &mgf2_oscs(),
        0.0275,
        125.0,
    );
    write_dispersion(
        "hfo2",
        "# HfO2 thin film, effective Lorentz-oscillator model fit to typical\n\
         # ion-beam-sputtered film indices; dc permittivity ~16 from lattice\n\
         # phonons. Valid range 0.115-125 um.\n",
        &hfo2_oscs(),
        0.115,
        125.0,
    );
    // Spot-check indices at the lattice and probe wavelengths.
    for (name, oscs) in [
        ("sio2", silica_oscs()),
        ("mgf2", mgf2_oscs()),
        ("hfo2", hfo2_oscs()),
    ] {
        for lam_nm in [461.0, 689.0, 914.0] {
            let w = 2.0 * std::f64::consts::PI * 2.997_924_58e8 / (lam_nm * 1e-9);
            let nk = eps_model(&oscs, w).sqrt();
            println!("{name}: n({lam_nm} nm) = {:.5} + {:.2e} i", nk.re, nk.im);
        }
        let w125 = 2.0 * std::f64::consts::PI * 2.997_924_58e8 / 125.0e-6;
        println!("{name}: n(125 um) = {:.4}", eps_model(&oscs, w125).sqrt().re);
    }
}

// ---------------------------------------------------------------------------
// Stack tuning
// ---------------------------------------------------------------------------

use cpsurf::multilayer::{
    load_stack_file, phase_tolerance_mc, stack_reflection, CoatingStack, DispersionTable, Medium,
    Polarization,
};

fn load_medium(name: &str) -> Medium {
    let path = data_dir().join(format!("dispersion_{name}.csv"));
    Medium::Tabulated(DispersionTable::load(&path, name).unwrap())
}

struct Media {
    mgf2: Medium,
    hfo2: Medium,
    sio2: Medium,
}

impl Media {
    fn load() -> Self {
        Media {
            mgf2: load_medium("mgf2"),
            hfo2: load_medium("hfo2"),
            sio2: load_medium("sio2"),
        }
    }

    fn stack(&self, thicknesses_nm: &[f64]) -> CoatingStack {
        let layers = thicknesses_nm
            .iter()
            .enumerate()
            .map(|(i, &d)| {
                let m = if i % 2 == 0 {
                    self.mgf2.clone()
                } else {
                    self.hfo2.clone()
                };
                (m, d * 1e-9)
            })
            .collect();
        CoatingStack::new(Medium::vacuum(), layers, self.sio2.clone()).unwrap()
    }
}

fn stack_response(media: &Media, thicknesses_nm: &[f64]) -> (f64, f64, f64) {
    let stack = media.stack(thicknesses_nm);
    let omega = 2.0 * std::f64::consts::PI * 2.997_924_58e8 / 914e-9;
    let r = stack_reflection(&stack, omega, 0.0, Polarization::TE).unwrap();
    // Phase sensitivity sum over layers, (rad/nm)^2.
    let mut sens2 = 0.0;
    for j in 0..thicknesses_nm.len() {
        let mut d = thicknesses_nm.to_vec();
        d[j] += 0.1;
        let rp =
            stack_reflection(&media.stack(&d), omega, 0.0, Polarization::TE).unwrap();
        let dphi = (rp.arg() - r.arg()) / 0.1;
        sens2 += dphi * dphi;
    }
    (r.norm_sqr(), r.arg(), sens2)
}

#[test]
#[ignore]
fn tune_stack() {
    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = rand_pcg::Pcg64::seed_from_u64(20260808);
    let target_r = 0.178;
    let target_phi = -2.62;
    // Uniform 1 nm half-width noise has variance 1/3 nm^2; aim for a phase
    // spread comfortably below 0.03 rad.
    let target_sens2 = 0.0020;
    let media = Media::load();
    let objective = |d: &[f64]| {
        let (r, phi, s2) = stack_response(&media, d);
        let jr = ((r - target_r) / 0.002).powi(2);
        let jp = ((phi - target_phi) / 0.008).powi(2);
        let js = (s2 / target_sens2).max(1.0).powi(2) - 1.0;
        jr + jp + 2.0 * js
    };
    let mut best: Option<(f64, Vec<f64>)> = None;
    for start in 0..24 {
        let mut d: Vec<f64> = (0..7).map(|_| rng.gen_range(28.0..92.0)).collect();
        let mut j = objective(&d);
        let mut step = 8.0;
        while step > 0.02 {
            let mut improved = false;
            for i in 0..7 {
                for s in [step, -step] {
                    let mut trial = d.clone();
                    trial[i] = (trial[i] + s).clamp(20.0, 110.0);
                    let jt = objective(&trial);
                    if jt < j {
                        j = jt;
                        d = trial;
                        improved = true;
                    }
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        let (r, phi, s2) = stack_response(&media, &d);
        println!(
            "start {start}: J={j:.4} R={r:.4} phi={phi:.4} sens2={s2:.5} d={:?}",
            d.iter().map(|x| (x * 100.0).round() / 100.0).collect::<Vec<_>>()
        );
        if best.as_ref().map_or(true, |(bj, _)| j < *bj) {
            best = Some((j, d));
        }
    }
    let (j, d) = best.unwrap();
    let (r, phi, s2) = stack_response(&media, &d);
    println!("BEST J={j:.5}: R={r:.5} phi={phi:.5} sens2={s2:.6}");
    println!("thicknesses_nm = {d:?}");
    let stack = media.stack(&d);
    let (mean, sd) = phase_tolerance_mc(&stack, 914e-9, 1e-9, 10_000, 7).unwrap();
    println!("MC phase: mean {mean:.4}, sd {sd:.4}");
    // Emit the stack fixture file.
    let mut out = String::new();
    out.push_str(
        "# Seven-layer UV antireflection coating on fused silica,\n\
         # alternating MgF2/HfO2, outermost layer first. Thicknesses are a\n\
         # reconstruction tuned to reproduce the characterized response of\n\
         # the coated window at 914 nm (R ~ 0.178, phase ~ -2.62 rad at\n\
         # normal incidence); the individual values are not measured data.\n",
    );
    out.push_str("schema_version = 1\n");
    out.push_str("incident = \"vacuum\"\n");
    out.push_str("substrate = \"sio2\"\n");
    out.push_str("layers = [\n");
    for (i, t) in d.iter().enumerate() {
        let m = if i % 2 == 0 { "mgf2" } else { "hfo2" };
        out.push_str(&format!("    [\"{}\", {:.2}],\n", m, t));
    }
    out.push_str("]\n");
    std::fs::write(data_dir().join("stack_ar7.toml"), out).unwrap();
    println!("wrote stack_ar7.toml");
}

// ---------------------------------------------------------------------------
// Observable calibration
// ---------------------------------------------------------------------------

use cpsurf::atomdata::load_line_lists;
use cpsurf::constants::{BOLTZMANN, PLANCK, SR88_MASS};
use cpsurf::cpcore::{sample_potential_curve, CpEvaluator, Regime};
use cpsurf::trap::{
    find_sites, lamb_dicke, predict_transition_shift, solve_bound_states, trap_frequency,
    LatticeConfig, ShiftOutcome, SolverOptions, StatePotential,
};

fn fixture_stack() -> CoatingStack {
    let mut materials = std::collections::BTreeMap::new();
    for name in ["mgf2", "hfo2", "sio2"] {
        materials.insert(name.to_string(), load_medium(name));
    }
    load_stack_file(data_dir().join("stack_ar7.toml"), &materials).unwrap()
}

#[test]
#[ignore]
fn calibrate() {
    let t0 = std::time::Instant::now();
    let stack = fixture_stack();
    let omega914 = 2.0 * std::f64::consts::PI * 2.997_924_58e8 / 914e-9;
    let r914 = stack_reflection(&stack, omega914, 0.0, Polarization::TE).unwrap();
    println!("coating: R = {:.4}, phi = {:.4}", r914.norm_sqr(), r914.arg());

    let mut states = load_line_lists(data_dir().join("lines_sr88.csv")).unwrap();
    let au = cpsurf::constants::POLARIZABILITY_AU;
    states.get_mut("1S0").unwrap().dc_polarizability = Some(197.2 * au);
    states.get_mut("3P1_m0").unwrap().dc_polarizability = Some(498.8 * au);
    states.get_mut("3P1_m1").unwrap().dc_polarizability = Some(498.8 * au);
    let ground = &states["1S0"];
    let excited = &states["3P1_m0"];
    let excited_m1 = &states["3P1_m1"];
    for (label, st) in [("1S0", ground), ("3P1_m0", excited), ("3P1_m1", excited_m1)] {
        let au = cpsurf::constants::POLARIZABILITY_AU;
        let axx = st
            .polarizability_component(cpsurf::atomdata::Axis::X, 0.0)
            .unwrap()
            / au;
        let azz = st
            .polarizability_component(cpsurf::atomdata::Axis::Z, 0.0)
            .unwrap()
            / au;
        println!(
            "{label}: alpha_xx(0) = {axx:.1} au, alpha_zz(0) = {azz:.1} au, scalar = {:.1} au",
            (2.0 * axx + azz) / 3.0
        );
    }

    let eval = CpEvaluator::new(&stack).unwrap();
    for z in [100e-9, 189e-9, 645e-9] {
        let vg = eval.total(ground, z, Regime::Full).unwrap();
        let ve = eval.total(excited, z, Regime::Full).unwrap();
        println!(
            "z = {:>6.0} nm: Vg = {:9.1} Hz, Ve = {:9.1} Hz, diff = {:9.1} Hz",
            z * 1e9,
            vg / PLANCK,
            ve / PLANCK,
            (ve - vg) / PLANCK
        );
    }
    println!("t = {:?}", t0.elapsed());

    // Potential curves for the trap pipeline.
    let window = (20e-9, 3.4e-6);
    let curve_g =
        sample_potential_curve(&eval, ground, Regime::Full, window.0, window.1, 180).unwrap();
    let curve_e =
        sample_potential_curve(&eval, excited, Regime::Full, window.0, window.1, 180).unwrap();
    let interp_g = curve_g.interpolant().unwrap();
    let interp_e = curve_e.interpolant().unwrap();
    println!("curves sampled, t = {:?}", t0.elapsed());

    let lattice = LatticeConfig {
        wavelength: 914e-9,
        incident_peak_intensity: 75.8e7,
        reflectance: r914.norm_sqr(),
        reflection_phase: r914.arg(),
    };
    let alpha_trap = 23_900.0;
    let pot_g = StatePotential {
        lattice: &lattice,
        trap_polarizability: alpha_trap,
        surface: Some(&interp_g),
    };
    let pot_e = StatePotential {
        lattice: &lattice,
        trap_polarizability: alpha_trap + 19.0,
        surface: Some(&interp_e),
    };
    let f_g = |z: f64| pot_g.energy(z);
    let sites = find_sites(&f_g, window, 30000).unwrap();
    for s in sites.iter().take(3) {
        println!(
            "ground site {}: z = {:.1} nm, depth = {:.1} uK",
            s.index,
            s.z_min * 1e9,
            s.depth() / BOLTZMANN * 1e6
        );
    }
    let opts = SolverOptions::default();
    let b1 = solve_bound_states(&f_g, &sites[0], "1S0", SR88_MASS, &opts).unwrap();
    if let Some(b) = b1.bound() {
        let tf = trap_frequency(b).unwrap();
        println!(
            "site1 ground: levels {}, nu_z = {:.1} kHz, eta = {:.4}",
            b.energies.len(),
            tf.hz / 1e3,
            lamb_dicke(tf.hz, 689e-9, SR88_MASS).unwrap()
        );
    }
    let b2 = solve_bound_states(&f_g, &sites[1], "1S0", SR88_MASS, &opts).unwrap();
    if let Some(b) = b2.bound() {
        let tf = trap_frequency(b).unwrap();
        println!("site2 ground: nu_z = {:.1} kHz", tf.hz / 1e3);
    }

    // Far position: pure lattice at 60.9 kW/cm^2.
    let lattice_far = LatticeConfig {
        incident_peak_intensity: 60.9e7,
        ..lattice
    };
    let pot_far = StatePotential {
        lattice: &lattice_far,
        trap_polarizability: alpha_trap,
        surface: None,
    };
    let f_far = |z: f64| pot_far.energy(z);
    let sites_far = find_sites(&f_far, window, 30000).unwrap();
    let bf = solve_bound_states(&f_far, &sites_far[1], "1S0", SR88_MASS, &opts).unwrap();
    if let Some(b) = bf.bound() {
        let tf = trap_frequency(b).unwrap();
        println!("far nu_z = {:.1} kHz", tf.hz / 1e3);
    }

    // Transition shift, full regime.
    match predict_transition_shift(
        &pot_g, &pot_e, "1S0", "3P1_m0", SR88_MASS, window, 4, &opts,
    )
    .unwrap()
    {
        ShiftOutcome::Shift(p) => println!(
            "FULL: shift = {:.1} Hz (vs free {:.1} Hz), site1 z = {:.1}/{:.1} nm",
            p.shift_hz,
            p.shift_vs_free_hz,
            p.site1_z_ground * 1e9,
            p.site1_z_excited * 1e9
        ),
        ShiftOutcome::Untrapped { state_label } => println!("FULL: untrapped {state_label}"),
    }
    println!("t = {:?}", t0.elapsed());

    // Short range.
    let curve_g_sr =
        sample_potential_curve(&eval, ground, Regime::ShortRange, window.0, window.1, 180)
            .unwrap();
    let curve_e_sr =
        sample_potential_curve(&eval, excited, Regime::ShortRange, window.0, window.1, 180)
            .unwrap();
    let ig = curve_g_sr.interpolant().unwrap();
    let ie = curve_e_sr.interpolant().unwrap();
    let pg = StatePotential {
        lattice: &lattice,
        trap_polarizability: alpha_trap,
        surface: Some(&ig),
    };
    let pe = StatePotential {
        lattice: &lattice,
        trap_polarizability: alpha_trap + 19.0,
        surface: Some(&ie),
    };
    match predict_transition_shift(&pg, &pe, "1S0", "3P1_m0", SR88_MASS, window, 4, &opts).unwrap()
    {
        ShiftOutcome::Shift(p) => println!("SHORT: shift = {:.1} Hz", p.shift_hz),
        ShiftOutcome::Untrapped { state_label } => println!("SHORT: untrapped {state_label}"),
    }

    // Long range.
    let curve_g_lr =
        sample_potential_curve(&eval, ground, Regime::LongRange, window.0, window.1, 180).unwrap();
    let curve_e_lr =
        sample_potential_curve(&eval, excited, Regime::LongRange, window.0, window.1, 180)
            .unwrap();
    let ig = curve_g_lr.interpolant().unwrap();
    let ie = curve_e_lr.interpolant().unwrap();
    let pg = StatePotential {
        lattice: &lattice,
        trap_polarizability: alpha_trap,
        surface: Some(&ig),
    };
    let pe = StatePotential {
        lattice: &lattice,
        trap_polarizability: alpha_trap + 19.0,
        surface: Some(&ie),
    };
    match predict_transition_shift(&pg, &pe, "1S0", "3P1_m0", SR88_MASS, window, 4, &opts).unwrap()
    {
        ShiftOutcome::Shift(p) => println!("LONG: shift = {:.1} Hz", p.shift_hz),
        ShiftOutcome::Untrapped { state_label } => println!("LONG: untrapped {state_label}"),
    }

    // m = +/-1 comparison at 189 nm.
    let v_m0 = eval.total(excited, 189e-9, Regime::Full).unwrap();
    let v_m1 = eval.total(excited_m1, 189e-9, Regime::Full).unwrap();
    println!(
        "m0 vs m1 at 189 nm: {:.1} Hz vs {:.1} Hz (diff {:.1} Hz)",
        v_m0 / PLANCK,
        v_m1 / PLANCK,
        (v_m0 - v_m1) / PLANCK
    );
    println!("total t = {:?}", t0.elapsed());
}

// ---------------------------------------------------------------------------
// Line-list tuning: Newton iteration of three channel strengths onto the
// (full, short-range, 645 nm differential) targets.
// ---------------------------------------------------------------------------

use cpsurf::atomdata::StatePolarizability;

fn scale_partner(state: &StatePolarizability, partner: &str, scale: f64) -> StatePolarizability {
    let mut out = state.clone();
    for line in &mut out.lines {
        if line.partner_label == partner {
            line.weight_x *= scale;
            line.weight_y *= scale;
            line.weight_z *= scale;
        }
    }
    out
}

/// (full shift Hz, short-range shift Hz, potential difference at 645 nm Hz,
/// long-range excited-state site-1 barrier proxy in uK; trapped when > 0).
fn observables(
    stack: &CoatingStack,
    ground: &StatePolarizability,
    excited: &StatePolarizability,
    alpha_trap: f64,
) -> (f64, f64, f64, f64) {
    let eval = CpEvaluator::new(stack).unwrap();
    let window = (20e-9, 3.4e-6);
    let d645 = (eval.total(excited, 645e-9, Regime::Full).unwrap()
        - eval.total(ground, 645e-9, Regime::Full).unwrap())
        / PLANCK;
    let omega914 = 2.0 * std::f64::consts::PI * 2.997_924_58e8 / 914e-9;
    let r914 = stack_reflection(stack, omega914, 0.0, Polarization::TE).unwrap();
    let lattice = LatticeConfig {
        wavelength: 914e-9,
        incident_peak_intensity: 75.8e7,
        reflectance: r914.norm_sqr(),
        reflection_phase: r914.arg(),
    };
    let opts = SolverOptions::default();
    let mut shifts = [0.0f64; 2];
    for (i, regime) in [Regime::Full, Regime::ShortRange].iter().enumerate() {
        let cg = sample_potential_curve(&eval, ground, *regime, window.0, window.1, 150).unwrap();
        let ce = sample_potential_curve(&eval, excited, *regime, window.0, window.1, 150).unwrap();
        let ig = cg.interpolant().unwrap();
        let ie = ce.interpolant().unwrap();
        let pg = StatePotential {
            lattice: &lattice,
            trap_polarizability: alpha_trap,
            surface: Some(&ig),
        };
        let pe = StatePotential {
            lattice: &lattice,
            trap_polarizability: alpha_trap + 19.0,
            surface: Some(&ie),
        };
        shifts[i] = match predict_transition_shift(
            &pg, &pe, "1S0", "3P1_m0", SR88_MASS, window, 4, &opts,
        )
        .unwrap()
        {
            ShiftOutcome::Shift(p) => p.shift_hz,
            ShiftOutcome::Untrapped { .. } => f64::NAN,
        };
    }
    // Long-range excited barrier proxy: the highest total potential on the
    // surface side of the first antinode minus the local minimum there.
    let ce = sample_potential_curve(&eval, excited, Regime::LongRange, window.0, window.1, 150)
        .unwrap();
    let ie = ce.interpolant().unwrap();
    let pe = StatePotential {
        lattice: &lattice,
        trap_polarizability: alpha_trap + 19.0,
        surface: Some(&ie),
    };
    let barrier = (0..=240)
        .map(|i| 60e-9 + i as f64 * 0.5e-9)
        .map(|z| pe.energy(z))
        .fold(f64::MIN, f64::max);
    let well = (0..=200)
        .map(|i| 180e-9 + i as f64 * 0.5e-9)
        .map(|z| pe.energy(z))
        .fold(f64::MAX, f64::min);
    let proxy_uk = (barrier - well) / BOLTZMANN * 1e6;
    (shifts[0], shifts[1], d645, proxy_uk)
}

/// Newton tuning of the three free line-list strengths onto the full,
/// short-range and 645-nm differential targets. The long-range outcome is
/// controlled separately by the reference dc polarizabilities in the config,
/// so three knobs suffice. Converges in ~3 iterations from the published
/// starting values; the result is frozen into data/lines_sr88.csv.
#[test]
#[ignore]
fn tune_lines() {
    let stack = fixture_stack();
    let states = load_line_lists(data_dir().join("lines_sr88.csv")).unwrap();
    let ground0 = states["1S0"].clone();
    let excited0 = states["3P1_m0"].clone();
    let alpha_trap = 23_900.0;
    let target = [-15_600.0f64, 1_900.0, -283.0];
    let mut x = [1.0f64, 1.0, 1.0];
    let apply = |x: &[f64; 3]| {
        let e = scale_partner(&excited0, "5s4d_3D2", x[0]);
        let e = scale_partner(&e, "uv_residual", x[1]);
        let g = scale_partner(&ground0, "uv_residual", x[2]);
        (g, e)
    };
    for iter in 0..8 {
        let (g, e) = apply(&x);
        let f = observables(&stack, &g, &e, alpha_trap);
        let f0 = [f.0, f.1, f.2];
        println!(
            "iter {iter}: x = [{:.4}, {:.4}, {:.4}] -> full {:.1}, SR {:.1}, d645 {:.2} (lr proxy {:.2} uK)",
            x[0], x[1], x[2], f0[0], f0[1], f0[2], f.3
        );
        let resid: Vec<f64> = (0..3).map(|i| f0[i] - target[i]).collect();
        if resid[0].abs() < 120.0 && resid[1].abs() < 60.0 && resid[2].abs() < 6.0 {
            println!("converged: x = {x:?}");
            let (g, e) = apply(&x);
            for st in [&g, &e] {
                for line in &st.lines {
                    println!(
                        "  {} {}: ({:.5}, {:.5}, {:.5}) au",
                        st.state_label,
                        line.partner_label,
                        line.weight_x / cpsurf::constants::DIPOLE_SQ_AU,
                        line.weight_y / cpsurf::constants::DIPOLE_SQ_AU,
                        line.weight_z / cpsurf::constants::DIPOLE_SQ_AU
                    );
                }
            }
            return;
        }
        let mut jac = [[0.0f64; 3]; 3];
        for j in 0..3 {
            let mut xp = x;
            xp[j] += 0.03;
            let (g, e) = apply(&xp);
            let fp = observables(&stack, &g, &e, alpha_trap);
            let fp = [fp.0, fp.1, fp.2];
            for i in 0..3 {
                jac[i][j] = (fp[i] - f0[i]) / 0.03;
            }
        }
        let mut m = [[0.0f64; 4]; 3];
        for i in 0..3 {
            m[i][..3].copy_from_slice(&jac[i]);
            m[i][3] = -resid[i];
        }
        for c in 0..3 {
            let piv = (c..3)
                .max_by(|&a, &b| m[a][c].abs().total_cmp(&m[b][c].abs()))
                .unwrap();
            m.swap(c, piv);
            for r in c + 1..3 {
                let fct = m[r][c] / m[c][c];
                for k in c..4 {
                    m[r][k] -= fct * m[c][k];
                }
            }
        }
        let mut dx = [0.0f64; 3];
        for r in (0..3).rev() {
            let mut sum = m[r][3];
            for k in r + 1..3 {
                sum -= m[r][k] * dx[k];
            }
            dx[r] = sum / m[r][r];
        }
        for j in 0..3 {
            x[j] = (x[j] + dx[j].clamp(-0.5, 0.5)).clamp(0.05, 4.0);
        }
    }
}
