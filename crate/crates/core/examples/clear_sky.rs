//! Solar elevation and clear-sky irradiance over a summer and a winter day.

use chrono::{Duration, TimeZone, Utc};
use ghicast::solar::{slot_clearsky, slot_elevation, GeoPoint, DEFAULT_LINKE_TURBIDITY};

fn main() -> ghicast::Result<()> {
    let de_bilt = GeoPoint::new(52.1, 5.18)?;
    for (label, day) in [("21 June", (2017, 6, 21)), ("21 December", (2017, 12, 21))] {
        let midnight = Utc.with_ymd_and_hms(day.0, day.1, day.2, 0, 0, 0).unwrap();
        println!("{label} at De Bilt (hourly slots, UTC)");
        let mut daily = 0.0;
        for h in 0..24 {
            let slot = midnight + Duration::hours(h);
            let el = slot_elevation(de_bilt, slot)?;
            let ghi = slot_clearsky(de_bilt, slot, DEFAULT_LINKE_TURBIDITY)?;
            daily += ghi;
            if ghi > 0.0 {
                println!("  {h:02}:00  elevation {el:6.2} deg  clear-sky {ghi:7.1} W/m2");
            }
        }
        println!("  daily clear-sky energy {:.2} kWh/m2\n", daily / 1000.0);
    }
    Ok(())
}
