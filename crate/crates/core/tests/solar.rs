use chrono::{DateTime, Duration, TimeZone, Utc};
use ghicast::dataset::{elevation_filter, SiteSeries};
use ghicast::solar::{self, GeoPoint, DEFAULT_LINKE_TURBIDITY};
use proptest::prelude::*;

// Reference values from the NOAA solar calculator formulas and a
// straight-line Ineichen-Perez evaluation, computed outside this crate.
const NOAA_ELEVATION_2017_06_21_12Z: f64 = 61.116;
const ORACLE_NOON_CLEARSKY: f64 = 881.97;

fn de_bilt() -> GeoPoint {
    GeoPoint::new(52.1, 5.18).unwrap()
}

fn utc(y: i32, m: u32, d: u32, h: u32, min: u32) -> DateTime<Utc> {
    Utc.with_ymd_and_hms(y, m, d, h, min, 0).unwrap()
}

fn day_mask_count(y: i32, m: u32, d: u32) -> usize {
    let s = SiteSeries::empty("X", de_bilt(), utc(y, m, d, 0, 0), 24, DEFAULT_LINKE_TURBIDITY).unwrap();
    elevation_filter(&s, 3.0).unwrap().count()
}

#[test]
fn noon_elevation_matches_noaa() {
    let pos = solar::solar_position(de_bilt(), utc(2017, 6, 21, 12, 0)).unwrap();
    assert!((pos.elevation_deg - NOAA_ELEVATION_2017_06_21_12Z).abs() < 0.1, "{pos:?}");
    assert!((pos.elevation_deg - 61.3).abs() <= 0.5);
}

#[test]
fn noon_clearsky_matches_oracle() {
    let noon = (0..240)
        .map(|k| utc(2017, 6, 21, 10, 0) + Duration::minutes(k))
        .map(|t| solar::clearsky_ghi(de_bilt(), t, 3.0).unwrap().ghi_wm2)
        .fold(0.0, f64::max);
    assert!((noon - ORACLE_NOON_CLEARSKY).abs() < 1.0, "{noon}");
    assert!((820.0..=960.0).contains(&noon));
}

#[test]
fn retained_slots_per_day() {
    assert_eq!(day_mask_count(2017, 6, 21), 16);
    assert_eq!(day_mask_count(2017, 1, 1), 7);
    assert_eq!(day_mask_count(2017, 1, 15), 7);
    assert_eq!(day_mask_count(2017, 12, 21), 7);
}

#[test]
fn vacuous_threshold_keeps_everything() {
    let s = SiteSeries::empty("X", de_bilt(), utc(2017, 3, 1, 0, 0), 72, 3.0).unwrap();
    assert_eq!(elevation_filter(&s, -90.0).unwrap().count(), 72);
}

#[test]
fn midnight_is_dark() {
    let v = solar::clearsky_ghi(de_bilt(), utc(2017, 6, 21, 0, 0), 3.0).unwrap();
    assert_eq!(v.ghi_wm2, 0.0);
}

fn any_site() -> impl Strategy<Value = GeoPoint> {
    (-89.0..89.0f64, -180.0..180.0f64).prop_map(|(a, b)| GeoPoint::new(a, b).unwrap())
}

fn any_time() -> impl Strategy<Value = DateTime<Utc>> {
    let lo = utc(1951, 1, 1, 0, 0).timestamp();
    let hi = utc(2099, 12, 31, 0, 0).timestamp();
    (lo..hi).prop_map(|s| Utc.timestamp_opt(s, 0).unwrap())
}

proptest! {
    #[test]
    fn elevation_and_zenith_are_complementary(site in any_site(), t in any_time()) {
        let p = solar::solar_position(site, t).unwrap();
        prop_assert!((p.elevation_deg + p.zenith_deg - 90.0).abs() < 1e-9);
        prop_assert!((0.0..360.0).contains(&p.azimuth_deg));
    }

    #[test]
    fn clearsky_is_zero_exactly_when_sun_is_down(
        site in any_site(),
        t in any_time(),
        turbidity in 1.0..10.0f64,
    ) {
        let el = solar::solar_position(site, t).unwrap().elevation_deg;
        let g = solar::clearsky_ghi(site, t, turbidity).unwrap().ghi_wm2;
        prop_assert!(g >= 0.0);
        prop_assert_eq!(g == 0.0, el <= 0.0, "elevation {} ghi {}", el, g);
    }

    #[test]
    fn clearsky_is_bit_deterministic(site in any_site(), t in any_time()) {
        let a = solar::clearsky_ghi(site, t, 3.0).unwrap().ghi_wm2;
        let b = solar::clearsky_ghi(site, t, 3.0).unwrap().ghi_wm2;
        prop_assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn clearsky_rises_with_elevation(
        turbidity in 1.0..10.0f64,
        e1 in 0.1..89.9f64,
        e2 in 0.1..89.9f64,
    ) {
        prop_assume!((e1 - e2).abs() > 1e-6);
        let (lo, hi) = if e1 < e2 { (e1, e2) } else { (e2, e1) };
        let g = |e| solar::clearsky_ghi_at_elevation(e, 172, turbidity).unwrap().ghi_wm2;
        prop_assert!(g(hi) > g(lo));
    }
}

#[test]
fn equatorial_equinox_is_symmetric_about_noon() {
    let site = GeoPoint::new(0.0, 0.0).unwrap();
    let g = |t: DateTime<Utc>| solar::clearsky_ghi(site, t, 3.0).unwrap().ghi_wm2;
    // Solar noon at longitude 0 on 2017-03-20 is 12:07:30 UTC.
    let noon = utc(2017, 3, 20, 12, 7) + Duration::seconds(30);
    for k in 1..=3 {
        let before = g(noon - Duration::hours(k));
        let after = g(noon + Duration::hours(k));
        let rel = (before - after).abs() / before.max(after);
        assert!(rel < 0.02, "k={k}: {before} vs {after}");
    }
}
