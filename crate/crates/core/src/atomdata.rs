//! Atomic level/line data and the imaginary-frequency polarizability tensor.
//!
//! A state is described by a list of dipole-coupled partner lines. Each line
//! carries the signed transition angular frequency (positive when the partner
//! lies above the state of interest) and the squared dipole matrix-element
//! components resolved onto the surface-frame Cartesian axes. The m-state
//! quantization axis of the shipped fixtures is the surface normal (z), which
//! keeps `alpha_xx == alpha_yy` for every fixture state; the angular-momentum
//! decomposition itself is done upstream when the fixture files are built.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::constants::{DIPOLE_SQ_AU, HBAR};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

/// One dipole-coupled transition out of the state of interest.
///
/// `transition_omega` is w_jn in rad/s, positive when the partner lies above
/// the state. Weights are |<n|d_mu|j>|^2 in C^2 m^2, summed over the partner
/// multiplet sublevels.
#[derive(Debug, Clone)]
pub struct SpectralLine {
    pub partner_label: String,
    pub transition_omega: f64,
    pub weight_x: f64,
    pub weight_y: f64,
    pub weight_z: f64,
}

impl SpectralLine {
    pub fn validate(&self) -> Result<()> {
        if self.transition_omega == 0.0 || !self.transition_omega.is_finite() {
            return Err(Error::config(format!(
                "line {}: transition frequency must be finite and nonzero",
                self.partner_label
            )));
        }
        let w = [self.weight_x, self.weight_y, self.weight_z];
        if w.iter().any(|&x| x < 0.0 || !x.is_finite()) {
            return Err(Error::config(format!(
                "line {}: dipole weights must be finite and >= 0",
                self.partner_label
            )));
        }
        if w.iter().all(|&x| x == 0.0) {
            return Err(Error::config(format!(
                "line {}: at least one dipole weight must be positive",
                self.partner_label
            )));
        }
        Ok(())
    }

    /// True when the partner lies below the state of interest, i.e. the line
    /// contributes to the resonant (scattering Green tensor) term.
    pub fn is_downward(&self) -> bool {
        self.transition_omega < 0.0
    }
}

/// All line data for one atomic state, plus the externally supplied trap
/// polarizability at the lattice wavelength (Hz per kW/cm^2).
#[derive(Debug, Clone)]
pub struct StatePolarizability {
    pub state_label: String,
    pub lines: Vec<SpectralLine>,
    pub trap_polarizability: f64,
    /// Reference static scalar polarizability, C^2 m^2 / J. The far-field
    /// (long-range) limit prefers this literature value over the level sum
    /// when it is supplied; level sums of finite line lists typically fall
    /// short of the reference statics.
    pub dc_polarizability: Option<f64>,
}

impl StatePolarizability {
    pub fn new(
        state_label: impl Into<String>,
        lines: Vec<SpectralLine>,
        trap_polarizability: f64,
    ) -> Result<Self> {
        let state = StatePolarizability {
            state_label: state_label.into(),
            lines,
            trap_polarizability,
            dc_polarizability: None,
        };
        state.validate()?;
        Ok(state)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lines.is_empty() {
            return Err(Error::config(format!(
                "state {}: line list is empty",
                self.state_label
            )));
        }
        for line in &self.lines {
            line.validate()?;
        }
        Ok(())
    }

    /// Diagonal polarizability component alpha_axis(i s) in C^2 m^2 / J.
    ///
    /// alpha(i s) = sum_j 2 w_jn |d_axis|^2 / (hbar (w_jn^2 + s^2)).
    pub fn polarizability_component(&self, axis: Axis, s: f64) -> Result<f64> {
        if s < 0.0 {
            return Err(Error::domain(format!(
                "imaginary frequency must be >= 0 (got {s:e})"
            )));
        }
        self.validate()?;
        let mut sum = 0.0;
        for line in &self.lines {
            let w = match axis {
                Axis::X => line.weight_x,
                Axis::Y => line.weight_y,
                Axis::Z => line.weight_z,
            };
            let om = line.transition_omega;
            sum += 2.0 * om * w / (HBAR * (om * om + s * s));
        }
        Ok(sum)
    }

    /// (alpha_xx + alpha_yy)/2 + alpha_zz at imaginary frequency s. Weight of
    /// the symmetric part of the surface-fluctuation integral.
    pub fn alpha_symmetric(&self, s: f64) -> f64 {
        self.alpha_combo(s, 0.5, 0.5, 1.0)
    }

    /// (alpha_xx + alpha_yy)/2 - alpha_zz at imaginary frequency s.
    pub fn alpha_asymmetric(&self, s: f64) -> f64 {
        self.alpha_combo(s, 0.5, 0.5, -1.0)
    }

    fn alpha_combo(&self, s: f64, cx: f64, cy: f64, cz: f64) -> f64 {
        let mut sum = 0.0;
        for line in &self.lines {
            let w = cx * line.weight_x + cy * line.weight_y + cz * line.weight_z;
            let om = line.transition_omega;
            sum += 2.0 * om * w / (HBAR * (om * om + s * s));
        }
        sum
    }

    pub fn downward_lines(&self) -> impl Iterator<Item = &SpectralLine> {
        self.lines.iter().filter(|l| l.is_downward())
    }

    /// Largest |w_jn| in the list; used to scale quadrature substitutions.
    pub fn dominant_omega(&self) -> f64 {
        self.lines
            .iter()
            .map(|l| l.transition_omega.abs())
            .fold(0.0, f64::max)
    }

    /// Returns a copy with every dipole weight scaled by `factor`.
    pub fn scaled_weights(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for line in &mut out.lines {
            line.weight_x *= factor;
            line.weight_y *= factor;
            line.weight_z *= factor;
        }
        out
    }
}

/// Parse a line-list file into states, keyed by state label.
///
/// Format: '#' comments, then a header row naming the columns
/// `state_label, partner, omega_rad_s | wavelength_nm, weight_x_au,
/// weight_y_au, weight_z_au` (comma- or tab-separated). A negative frequency
/// or wavelength marks a partner below the state of interest. Weights are in
/// atomic units of squared dipole moment, (e a0)^2.
pub fn load_line_lists(path: impl AsRef<Path>) -> Result<BTreeMap<String, StatePolarizability>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_line_lists(&text, &path.display().to_string())
}

pub fn parse_line_lists(
    text: &str,
    path: &str,
) -> Result<BTreeMap<String, StatePolarizability>> {
    let mut states: BTreeMap<String, StatePolarizability> = BTreeMap::new();
    let mut header: Option<Vec<String>> = None;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line
            .split(|c| c == ',' || c == '\t')
            .map(str::trim)
            .collect();
        let err = |msg: String| Error::Parse {
            path: path.to_string(),
            line: Some(lineno + 1),
            msg,
        };
        match &header {
            None => {
                header = Some(fields.iter().map(|s| s.to_ascii_lowercase()).collect());
                let h = header.as_ref().unwrap();
                if !h.contains(&"state_label".to_string()) {
                    return Err(err("header must name a state_label column".into()));
                }
            }
            Some(cols) => {
                if fields.len() != cols.len() {
                    return Err(err(format!(
                        "expected {} fields, found {}",
                        cols.len(),
                        fields.len()
                    )));
                }
                let get = |name: &str| -> Option<&str> {
                    cols.iter().position(|c| c == name).map(|i| fields[i])
                };
                let parse = |v: &str, what: &str| -> Result<f64> {
                    v.parse::<f64>()
                        .map_err(|_| err(format!("bad {what}: {v:?}")))
                };
                let label = get("state_label")
                    .ok_or_else(|| err("missing state_label".into()))?
                    .to_string();
                let partner = get("partner").unwrap_or("?").to_string();
                let omega = if let Some(v) = get("omega_rad_s") {
                    parse(v, "omega_rad_s")?
                } else if let Some(v) = get("wavelength_nm") {
                    let wl = parse(v, "wavelength_nm")?;
                    if wl == 0.0 {
                        return Err(err("wavelength_nm must be nonzero".into()));
                    }
                    // Sign of the wavelength carries the level ordering.
                    2.0 * std::f64::consts::PI * crate::constants::SPEED_OF_LIGHT
                        / (wl * 1e-9)
                } else {
                    return Err(err("need omega_rad_s or wavelength_nm column".into()));
                };
                let wx = parse(
                    get("weight_x_au").ok_or_else(|| err("missing weight_x_au".into()))?,
                    "weight_x_au",
                )? * DIPOLE_SQ_AU;
                let wy = parse(
                    get("weight_y_au").ok_or_else(|| err("missing weight_y_au".into()))?,
                    "weight_y_au",
                )? * DIPOLE_SQ_AU;
                let wz = parse(
                    get("weight_z_au").ok_or_else(|| err("missing weight_z_au".into()))?,
                    "weight_z_au",
                )? * DIPOLE_SQ_AU;
                let line = SpectralLine {
                    partner_label: partner,
                    transition_omega: omega,
                    weight_x: wx,
                    weight_y: wy,
                    weight_z: wz,
                };
                line.validate()?;
                states
                    .entry(label.clone())
                    .or_insert_with(|| StatePolarizability {
                        state_label: label,
                        lines: Vec::new(),
                        trap_polarizability: 0.0,
                        dc_polarizability: None,
                    })
                    .lines
                    .push(line);
            }
        }
    }
    if states.is_empty() {
        return Err(Error::Parse {
            path: path.to_string(),
            line: None,
            msg: "no line data found".into(),
        });
    }
    for state in states.values() {
        state.validate()?;
    }
    Ok(states)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_level(omega: f64, w: f64) -> StatePolarizability {
        StatePolarizability::new(
            "test",
            vec![SpectralLine {
                partner_label: "p".into(),
                transition_omega: omega,
                weight_x: w,
                weight_y: w,
                weight_z: w,
            }],
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn static_two_level_limit() {
        // alpha(0) = 2 w / (hbar w0) for a single upward line.
        let omega = 4.0e15;
        let w = 9.0 * DIPOLE_SQ_AU;
        let state = two_level(omega, w);
        let a = state.polarizability_component(Axis::X, 0.0).unwrap();
        let expect = 2.0 * w / (HBAR * omega);
        assert!((a - expect).abs() < 1e-12 * expect);
    }

    #[test]
    fn high_frequency_rolloff() {
        let omega = 4.0e15;
        let state = two_level(omega, DIPOLE_SQ_AU);
        let a0 = state.polarizability_component(Axis::Z, 0.0).unwrap();
        let ahigh = state
            .polarizability_component(Axis::Z, 1e6 * omega)
            .unwrap();
        assert!(ahigh < 1e-10 * a0);
    }

    #[test]
    fn monotone_decrease_for_ground_state() {
        let state = two_level(3.0e15, DIPOLE_SQ_AU);
        let mut prev = f64::INFINITY;
        for i in 0..60 {
            let s = 1e12 * (1.3f64).powi(i);
            let a = state.polarizability_component(Axis::Y, s).unwrap();
            assert!(a >= 0.0 && a < prev);
            prev = a;
        }
    }

    #[test]
    fn linearity_in_weights() {
        let state = two_level(2.0e15, DIPOLE_SQ_AU);
        let scaled = state.scaled_weights(3.5);
        let s = 7.7e14;
        let a = state.polarizability_component(Axis::X, s).unwrap();
        let b = scaled.polarizability_component(Axis::X, s).unwrap();
        assert!((b - 3.5 * a).abs() <= 1e-14 * a.abs());
    }

    #[test]
    fn negative_s_rejected_and_empty_list_rejected() {
        let state = two_level(2.0e15, DIPOLE_SQ_AU);
        assert!(state.polarizability_component(Axis::X, -1.0).is_err());
        assert!(StatePolarizability::new("bad", vec![], 0.0).is_err());
    }

    #[test]
    fn parses_csv_with_omega_and_wavelength() {
        let text = "\
# demo
state_label,partner,wavelength_nm,weight_x_au,weight_y_au,weight_z_au
g,up,461.0,9.0,9.0,9.0
g,down,-689.0,0.001,0.001,0.001
e,up,688.0,2.0,2.0,0.0
";
        let states = parse_line_lists(text, "mem").unwrap();
        assert_eq!(states.len(), 2);
        let g = &states["g"];
        assert_eq!(g.lines.len(), 2);
        assert!(g.lines[1].is_downward());
        assert_eq!(g.downward_lines().count(), 1);
        let om = g.lines[0].transition_omega;
        assert!((om - 2.0 * std::f64::consts::PI * 2.997_924_58e8 / 461e-9).abs() < 1.0);
    }
}
