//! Geometry, system constants and the spherical-wave channel of a pinching
//! antenna radiating a guided signal.
//!
//! Every activated antenna sees the signal after two propagation legs: the
//! in-guide leg from the feed point (phase `2π/λ_g · |feed − antenna|`) and
//! the free-space leg to the user (phase `2π/λ · |user − antenna|`, amplitude
//! `√η / |user − antenna|`).

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Collinearity tolerance for points that must sit on a waveguide line, m.
const LINE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    /// A point on the ground plane (z = 0).
    pub const fn ground(x: f64, y: f64) -> Self {
        Self { x, y, z: 0.0 }
    }

    pub fn distance(&self, other: &Point3) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

/// Carrier, medium and link-budget constants shared by every module.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams {
    pub carrier_frequency: f64,
    pub speed_of_light: f64,
    pub wavelength: f64,
    pub n_eff: f64,
    pub guide_wavelength: f64,
    /// Free-space attenuation constant `c² / (16 π² f_c²)`, m².
    pub eta: f64,
    pub waveguide_height: f64,
    pub total_power: f64,
    pub noise_power: f64,
}

impl SystemParams {
    /// Wave number in free space, rad/m.
    pub fn k0(&self) -> f64 {
        2.0 * PI / self.wavelength
    }

    /// Wave number inside the waveguide, rad/m.
    pub fn kg(&self) -> f64 {
        2.0 * PI / self.guide_wavelength
    }

    /// Same parameters with a different total transmit power.
    pub fn with_power(&self, total_power: f64) -> Result<Self> {
        derive_params(
            self.carrier_frequency,
            self.n_eff,
            self.waveguide_height,
            total_power,
            self.noise_power,
        )
    }
}

/// Builds [`SystemParams`] from the primary inputs.
pub fn derive_params(
    carrier_frequency: f64,
    n_eff: f64,
    waveguide_height: f64,
    total_power: f64,
    noise_power: f64,
) -> Result<SystemParams> {
    let positive = |name: &str, v: f64| {
        if v.is_finite() && v > 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("{name} must be positive and finite, got {v}")))
        }
    };
    positive("carrier frequency", carrier_frequency)?;
    positive("waveguide height", waveguide_height)?;
    positive("total power", total_power)?;
    positive("noise power", noise_power)?;
    if !(n_eff.is_finite() && n_eff >= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "effective refractive index must be >= 1, got {n_eff}"
        )));
    }
    let c = SPEED_OF_LIGHT;
    let wavelength = c / carrier_frequency;
    Ok(SystemParams {
        carrier_frequency,
        speed_of_light: c,
        wavelength,
        n_eff,
        guide_wavelength: wavelength / n_eff,
        eta: c * c / (16.0 * PI * PI * carrier_frequency * carrier_frequency),
        waveguide_height,
        total_power,
        noise_power,
    })
}

/// Converts dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// A dielectric waveguide parallel to the x axis at height `height`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Waveguide {
    pub index: usize,
    pub y: f64,
    pub height: f64,
    pub feed: Point3,
    pub x_start: f64,
    pub x_end: f64,
}

impl Waveguide {
    pub fn new(index: usize, y: f64, height: f64, feed_x: f64, x_start: f64, x_end: f64) -> Result<Self> {
        let wg = Waveguide {
            index,
            y,
            height,
            feed: Point3::new(feed_x, y, height),
            x_start,
            x_end,
        };
        wg.validate()?;
        Ok(wg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.x_start.is_finite() && self.x_end.is_finite()) || self.x_start >= self.x_end {
            return Err(Error::Geometry(format!(
                "waveguide {} extent [{}, {}] is empty",
                self.index, self.x_start, self.x_end
            )));
        }
        if !self.contains(&self.feed) {
            return Err(Error::Geometry(format!(
                "feed point of waveguide {} is not on the waveguide line",
                self.index
            )));
        }
        if self.feed.x > self.x_start + LINE_TOL {
            return Err(Error::Geometry(format!(
                "feed of waveguide {} (x = {}) lies inside the extent starting at {}",
                self.index, self.feed.x, self.x_start
            )));
        }
        if !self.height.is_finite() || self.height <= 0.0 {
            return Err(Error::Geometry(format!("waveguide {} height must be positive", self.index)));
        }
        Ok(())
    }

    /// Location of an antenna activated at abscissa `x`.
    pub fn antenna_at(&self, x: f64) -> Point3 {
        Point3::new(x, self.y, self.height)
    }

    /// True when `p` lies on the waveguide line (ignores the x extent).
    pub fn contains(&self, p: &Point3) -> bool {
        (p.y - self.y).abs() <= LINE_TOL && (p.z - self.height).abs() <= LINE_TOL
    }

    pub fn in_extent(&self, x: f64) -> bool {
        x >= self.x_start && x <= self.x_end
    }
}

/// In-guide phase accumulated between the feed and an antenna, rad.
pub fn in_waveguide_phase(feed: &Point3, antenna: &Point3, params: &SystemParams) -> Result<f64> {
    if (feed.y - antenna.y).abs() > LINE_TOL || (feed.z - antenna.z).abs() > LINE_TOL {
        return Err(Error::Geometry(format!(
            "feed ({}, {}, {}) and antenna ({}, {}, {}) are not on one waveguide line",
            feed.x, feed.y, feed.z, antenna.x, antenna.y, antenna.z
        )));
    }
    Ok(params.kg() * feed.distance(antenna))
}

/// Total phase (free space plus in-guide) of the path feed → antenna → user.
pub fn total_phase(user: &Point3, antenna: &Point3, feed: &Point3, params: &SystemParams) -> f64 {
    params.k0() * user.distance(antenna) + params.kg() * feed.distance(antenna)
}

/// Channel coefficient between one activated antenna and a user.
pub fn channel_coefficient(
    user: &Point3,
    antenna: &Point3,
    feed: &Point3,
    params: &SystemParams,
) -> Result<Complex64> {
    let r = user.distance(antenna);
    if r <= f64::EPSILON {
        return Err(Error::Singularity { x: user.x, y: user.y, z: user.z });
    }
    let phase = params.k0() * r + params.kg() * feed.distance(antenna);
    Ok(Complex64::from_polar(params.eta.sqrt() / r, -phase))
}

/// Per-antenna channel coefficients for antennas at `positions` on `waveguide`.
pub fn channel_vector(
    user: &Point3,
    waveguide: &Waveguide,
    positions: &[f64],
    params: &SystemParams,
) -> Result<Vec<Complex64>> {
    positions
        .iter()
        .map(|&x| channel_coefficient(user, &waveguide.antenna_at(x), &waveguide.feed, params))
        .collect()
}

/// Coherent sum `Σ h_n · amplitude` for equal-amplitude antennas.
pub fn superpose(
    user: &Point3,
    waveguide: &Waveguide,
    positions: &[f64],
    amplitude: f64,
    params: &SystemParams,
) -> Result<Complex64> {
    let mut acc = Complex64::new(0.0, 0.0);
    for &x in positions {
        acc += channel_coefficient(user, &waveguide.antenna_at(x), &waveguide.feed, params)?;
    }
    Ok(acc * amplitude)
}

/// Noiseless received signal for a single-waveguide, single-user link with the
/// total power split equally over the activated antennas.
pub fn received_signal_swsu(
    user: &Point3,
    waveguide: &Waveguide,
    positions: &[f64],
    params: &SystemParams,
) -> Result<Complex64> {
    if positions.is_empty() {
        return Err(Error::InvalidParameter("codeword has no antennas".into()));
    }
    let amplitude = (params.total_power / positions.len() as f64).sqrt();
    superpose(user, waveguide, positions, amplitude, params)
}

/// `log2(1 + signal / (interference + noise))`.
pub fn rate_from_signal(signal_power: f64, interference_power: f64, noise_power: f64) -> f64 {
    (1.0 + signal_power / (interference_power + noise_power)).log2()
}

/// Wraps a phase into `[-π, π)`.
pub fn wrap_phase(phase: f64) -> f64 {
    let w = phase.rem_euclid(2.0 * PI);
    if w >= PI {
        w - 2.0 * PI
    } else {
        w
    }
}
