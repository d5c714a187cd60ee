//! Physical constants (CODATA 2018, SI units) used across the crate.
//!
//! Every module takes its constants from here; nothing redefines them.

/// Reduced Planck constant, J·s.
pub const HBAR: f64 = 1.054_571_817e-34;

/// Planck constant, J·s (exact).
pub const PLANCK: f64 = 6.626_070_15e-34;

/// Speed of light in vacuum, m/s (exact).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Vacuum permittivity, F/m.
pub const EPSILON_0: f64 = 8.854_187_812_8e-12;

/// Boltzmann constant, J/K (exact).
pub const BOLTZMANN: f64 = 1.380_649e-23;

/// Atomic mass unit, kg.
pub const ATOMIC_MASS_KG: f64 = 1.660_539_066_60e-27;

/// Mass of a single 88Sr atom, kg (87.905 612 2 u).
pub const SR88_MASS: f64 = 87.905_612_2 * ATOMIC_MASS_KG;

/// Bohr radius, m.
pub const BOHR_RADIUS: f64 = 5.291_772_109_03e-11;

/// Elementary charge, C (exact).
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;

/// One atomic unit of squared dipole moment, (e·a0)^2 in C^2·m^2.
/// Line-list files carry dipole weights in these units.
pub const DIPOLE_SQ_AU: f64 =
    (ELEMENTARY_CHARGE * BOHR_RADIUS) * (ELEMENTARY_CHARGE * BOHR_RADIUS);

/// One atomic unit of polarizability, C^2·m^2/J.
pub const POLARIZABILITY_AU: f64 = 1.648_777_274_36e-41;

/// Convert an intensity in W/m^2 to kW/cm^2.
pub const W_PER_M2_TO_KW_PER_CM2: f64 = 1.0e-7;
