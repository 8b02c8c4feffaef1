//! Ionospheric pierce point (IPP) mapping under a single-layer thin-shell
//! ionosphere over a spherical Earth.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const DEFAULT_SHELL_HEIGHT_KM: f64 = 350.0;
pub const DEFAULT_EARTH_RADIUS_KM: f64 = 6371.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShellModel {
    pub shell_height_km: f64,
    pub earth_radius_km: f64,
}

impl Default for ShellModel {
    fn default() -> Self {
        ShellModel {
            shell_height_km: DEFAULT_SHELL_HEIGHT_KM,
            earth_radius_km: DEFAULT_EARTH_RADIUS_KM,
        }
    }
}

impl ShellModel {
    pub fn new(shell_height_km: f64, earth_radius_km: f64) -> Result<Self> {
        let shell = ShellModel {
            shell_height_km,
            earth_radius_km,
        };
        shell.validate()?;
        Ok(shell)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.shell_height_km > 0.0 && self.shell_height_km.is_finite()) {
            return Err(Error::Domain(format!(
                "shell height must be positive, got {} km",
                self.shell_height_km
            )));
        }
        if !(self.earth_radius_km > 0.0 && self.earth_radius_km.is_finite()) {
            return Err(Error::Domain(format!(
                "earth radius must be positive, got {} km",
                self.earth_radius_km
            )));
        }
        Ok(())
    }

    /// Earth-central angle between receiver and pierce point, in radians.
    pub fn central_angle(&self, elevation_deg: f64) -> Result<f64> {
        self.validate()?;
        if !(elevation_deg > 0.0 && elevation_deg <= 90.0) {
            return Err(Error::Domain(format!(
                "elevation must lie in (0, 90] degrees, got {elevation_deg}"
            )));
        }
        let e = elevation_deg.to_radians();
        let ratio = self.earth_radius_km / (self.earth_radius_km + self.shell_height_km);
        let psi = std::f64::consts::FRAC_PI_2 - e - (ratio * e.cos()).asin();
        // exact zenith: cos(pi/2) is not exactly zero in floating point
        Ok(psi.max(0.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IppCoordinate {
    pub lat_deg: f64,
    /// Canonical form, in [0, 360).
    pub lon_deg: f64,
}

/// Pierce point of the line of sight from a receiver at
/// (`receiver_lat_deg`, `receiver_lon_deg`) towards a satellite seen at
/// `elevation_deg`/`azimuth_deg`.
///
/// Longitude offset is evaluated with `atan2`, which agrees with the
/// `asin(sin ψ sin A / cos φ_ipp)` form wherever that form is valid and stays
/// correct when the offset exceeds 90° close to a pole. A pierce point that
/// lands on a pole takes the receiver longitude.
pub fn compute_ipp(
    receiver_lat_deg: f64,
    receiver_lon_deg: f64,
    elevation_deg: f64,
    azimuth_deg: f64,
    shell: &ShellModel,
) -> Result<IppCoordinate> {
    if !(-90.0..=90.0).contains(&receiver_lat_deg) || !receiver_lon_deg.is_finite() {
        return Err(Error::Domain(format!(
            "receiver position ({receiver_lat_deg}, {receiver_lon_deg}) out of range"
        )));
    }
    if !(0.0..360.0).contains(&azimuth_deg) {
        return Err(Error::Domain(format!(
            "azimuth must lie in [0, 360) degrees, got {azimuth_deg}"
        )));
    }
    let psi = shell.central_angle(elevation_deg)?;
    let phi = receiver_lat_deg.to_radians();
    let az = azimuth_deg.to_radians();

    let sin_lat = (phi.sin() * psi.cos() + phi.cos() * psi.sin() * az.cos()).clamp(-1.0, 1.0);
    let lat = sin_lat.asin();

    let lon_deg = if lat.cos() < 1e-12 {
        receiver_lon_deg
    } else {
        let dlon = (psi.sin() * az.sin() * phi.cos()).atan2(psi.cos() - phi.sin() * sin_lat);
        receiver_lon_deg + dlon.to_degrees()
    };

    Ok(IppCoordinate {
        lat_deg: lat.to_degrees(),
        lon_deg: canonical_lon(lon_deg),
    })
}

/// Wraps any longitude into [0, 360).
pub fn canonical_lon(lon_deg: f64) -> f64 {
    let l = lon_deg.rem_euclid(360.0);
    // rem_euclid can round up to exactly 360 for tiny negative inputs
    if l >= 360.0 {
        0.0
    } else {
        l
    }
}

/// Great-circle distance on a sphere of radius `radius_km` (haversine).
pub fn great_circle_km(lat1_deg: f64, lon1_deg: f64, lat2_deg: f64, lon2_deg: f64, radius_km: f64) -> f64 {
    let (p1, p2) = (lat1_deg.to_radians(), lat2_deg.to_radians());
    let dp = p2 - p1;
    let dl = (lon2_deg - lon1_deg).to_radians();
    let a = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * radius_km * a.sqrt().min(1.0).asin()
}
