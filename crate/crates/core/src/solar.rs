//! Solar position and clear-sky irradiance.
//!
//! Position follows the low-precision astronomical almanac formulation
//! (Michalsky 1988), good to roughly 0.01 degrees between 1950 and 2050 and
//! still far inside half a degree through 2100. Clear-sky GHI is the
//! Ineichen-Perez broadband model evaluated at sea level.

use chrono::{DateTime, Datelike, Duration, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Linke turbidity used when nothing else is configured.
pub const DEFAULT_LINKE_TURBIDITY: f64 = 3.0;

const SOLAR_CONSTANT: f64 = 1366.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub latitude_deg: f64,
    pub longitude_deg: f64,
}

impl GeoPoint {
    pub fn new(latitude_deg: f64, longitude_deg: f64) -> Result<Self> {
        if !(-90.0..=90.0).contains(&latitude_deg) {
            return Err(Error::Range(format!("latitude {latitude_deg} outside [-90, 90]")));
        }
        if !(-180.0..=180.0).contains(&longitude_deg) {
            return Err(Error::Range(format!("longitude {longitude_deg} outside [-180, 180]")));
        }
        Ok(Self {
            latitude_deg,
            longitude_deg,
        })
    }

    /// Great-circle distance in kilometres (haversine, mean Earth radius).
    pub fn distance_km(&self, other: &GeoPoint) -> f64 {
        const EARTH_RADIUS_KM: f64 = 6371.0088;
        let (p1, p2) = (self.latitude_deg.to_radians(), other.latitude_deg.to_radians());
        let dp = p2 - p1;
        let dl = (other.longitude_deg - self.longitude_deg).to_radians();
        let a = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
        2.0 * EARTH_RADIUS_KM * a.sqrt().clamp(0.0, 1.0).asin()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolarPosition {
    /// Apparent elevation including refraction, degrees.
    pub elevation_deg: f64,
    pub zenith_deg: f64,
    /// Clockwise from north, degrees in [0, 360).
    pub azimuth_deg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct ClearSkyValue {
    pub ghi_wm2: f64,
}

fn check_epoch(t: DateTime<Utc>) -> Result<()> {
    let year = t.year();
    if !(1950..=2100).contains(&year) {
        return Err(Error::Range(format!(
            "timestamp {t} outside the 1950-2100 solar position window"
        )));
    }
    Ok(())
}

fn julian_day(t: DateTime<Utc>) -> f64 {
    let secs = t.timestamp() as f64 + f64::from(t.timestamp_subsec_nanos()) * 1e-9;
    secs / 86_400.0 + 2_440_587.5
}

fn wrap_degrees(x: f64) -> f64 {
    x.rem_euclid(360.0)
}

pub fn solar_position(site: GeoPoint, t: DateTime<Utc>) -> Result<SolarPosition> {
    check_epoch(t)?;
    let n = julian_day(t) - 2_451_545.0;

    // Ecliptic coordinates
    let mean_lon = wrap_degrees(280.460 + 0.985_647_4 * n);
    let mean_anom = wrap_degrees(357.528 + 0.985_600_3 * n).to_radians();
    let ecl_lon =
        wrap_degrees(mean_lon + 1.915 * mean_anom.sin() + 0.020 * (2.0 * mean_anom).sin())
            .to_radians();
    let obliquity = (23.439 - 0.000_000_4 * n).to_radians();

    // Celestial coordinates
    let right_asc = (obliquity.cos() * ecl_lon.sin()).atan2(ecl_lon.cos());
    let declination = (obliquity.sin() * ecl_lon.sin()).asin();

    // Local coordinates
    let utc_hours = n.rem_euclid(1.0) * 24.0;
    // n is counted from noon, so the fractional day starts at 12:00 UTC
    let utc_hours = (utc_hours + 12.0).rem_euclid(24.0);
    let gmst = (6.697_375 + 0.065_709_824_2 * n + utc_hours).rem_euclid(24.0);
    let lmst = (gmst + site.longitude_deg / 15.0).rem_euclid(24.0);
    let mut hour_angle = lmst * 15.0 - right_asc.to_degrees();
    hour_angle = (hour_angle + 180.0).rem_euclid(360.0) - 180.0;
    let ha = hour_angle.to_radians();
    let lat = site.latitude_deg.to_radians();

    let sin_el = declination.sin() * lat.sin() + declination.cos() * lat.cos() * ha.cos();
    let geometric_el = sin_el.clamp(-1.0, 1.0).asin().to_degrees();

    let refraction = if geometric_el > -0.56 {
        3.515_61 * (0.1594 + 0.0196 * geometric_el + 0.000_02 * geometric_el * geometric_el)
            / (1.0 + 0.505 * geometric_el + 0.0845 * geometric_el * geometric_el)
    } else {
        0.56
    };
    let elevation_deg = (geometric_el + refraction).min(90.0);

    let az = (-ha.sin() * declination.cos())
        .atan2(declination.sin() * lat.cos() - declination.cos() * lat.sin() * ha.cos());
    let mut azimuth_deg = wrap_degrees(az.to_degrees());
    if azimuth_deg >= 360.0 {
        azimuth_deg = 0.0;
    }

    Ok(SolarPosition {
        elevation_deg,
        zenith_deg: 90.0 - elevation_deg,
        azimuth_deg,
    })
}

/// Extraterrestrial normal irradiance (Spencer 1971 orbital eccentricity).
pub fn extraterrestrial_irradiance(day_of_year: u32) -> f64 {
    let b = 2.0 * std::f64::consts::PI * (f64::from(day_of_year) - 1.0) / 365.0;
    let r2 = 1.000_11 + 0.034_221 * b.cos() + 0.001_28 * b.sin() + 0.000_719 * (2.0 * b).cos()
        + 0.000_077 * (2.0 * b).sin();
    SOLAR_CONSTANT * r2
}

/// Kasten & Young (1989) relative air mass from apparent zenith angle.
pub fn relative_air_mass(zenith_deg: f64) -> f64 {
    1.0 / (zenith_deg.to_radians().cos() + 0.505_72 * (6.079_95 + (90.0 - zenith_deg)).powf(-1.6364))
}

fn check_turbidity(turbidity: f64) -> Result<()> {
    if !(1.0..=10.0).contains(&turbidity) {
        return Err(Error::Parameter(format!(
            "Linke turbidity {turbidity} outside [1, 10]"
        )));
    }
    Ok(())
}

/// Ineichen-Perez GHI for a given apparent elevation, day of year and Linke
/// turbidity at zero altitude.
pub fn clearsky_ghi_at_elevation(
    elevation_deg: f64,
    day_of_year: u32,
    turbidity: f64,
) -> Result<ClearSkyValue> {
    check_turbidity(turbidity)?;
    if elevation_deg <= 0.0 {
        return Ok(ClearSkyValue { ghi_wm2: 0.0 });
    }
    let zenith = 90.0 - elevation_deg;
    let air_mass = relative_air_mass(zenith);
    // sea level: fh1 = fh2 = 1, cg1 = 0.868, cg2 = 0.0387
    let cg1 = 0.868;
    let cg2 = 0.0387;
    let i0 = extraterrestrial_irradiance(day_of_year);
    let ghi = cg1 * i0 * elevation_deg.to_radians().sin() * (-cg2 * air_mass * turbidity).exp();
    Ok(ClearSkyValue {
        ghi_wm2: ghi.max(0.0),
    })
}

pub fn clearsky_ghi(site: GeoPoint, t: DateTime<Utc>, turbidity: f64) -> Result<ClearSkyValue> {
    check_turbidity(turbidity)?;
    let pos = solar_position(site, t)?;
    clearsky_ghi_at_elevation(pos.elevation_deg, t.ordinal(), turbidity)
}

/// Representative instant of the hourly slot labelled `slot_start`, i.e. the
/// slot midpoint.
pub fn slot_midpoint(slot_start: DateTime<Utc>) -> DateTime<Utc> {
    slot_start + Duration::minutes(30)
}

/// Solar elevation of an hourly slot, evaluated at the slot midpoint.
pub fn slot_elevation(site: GeoPoint, slot_start: DateTime<Utc>) -> Result<f64> {
    Ok(solar_position(site, slot_midpoint(slot_start))?.elevation_deg)
}

/// Clear-sky GHI of an hourly slot, evaluated at the slot midpoint.
pub fn slot_clearsky(site: GeoPoint, slot_start: DateTime<Utc>, turbidity: f64) -> Result<f64> {
    Ok(clearsky_ghi(site, slot_midpoint(slot_start), turbidity)?.ghi_wm2)
}
