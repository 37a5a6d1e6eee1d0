//! Geographic primitives: WGS84 points, haversine distance, and the local
//! kilometre frame used by synthetic scenarios.

use serde::{Deserialize, Serialize};

pub const EARTH_RADIUS_KM: f64 = 6371.0088;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatLon {
    pub lat: f64,
    pub lon: f64,
}

impl LatLon {
    pub fn new(lat: f64, lon: f64) -> Self {
        LatLon { lat, lon }
    }
}

/// Great-circle distance in kilometres.
pub fn haversine_km(a: LatLon, b: LatLon) -> f64 {
    let dlat = (b.lat - a.lat).to_radians();
    let dlon = (b.lon - a.lon).to_radians();
    let h = (dlat / 2.0).sin().powi(2)
        + a.lat.to_radians().cos() * b.lat.to_radians().cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().asin()
}

/// Equirectangular frame anchored at `origin`: kilometre offsets east (`dx`)
/// and north (`dy`) mapped to degrees. Adequate at the tens-of-km extent of a
/// feeder service area.
#[derive(Debug, Clone, Copy)]
pub struct LocalFrame {
    origin: LatLon,
    km_per_deg_lat: f64,
    km_per_deg_lon: f64,
}

impl LocalFrame {
    pub fn new(origin: LatLon) -> Self {
        let km_per_deg_lat = EARTH_RADIUS_KM * std::f64::consts::PI / 180.0;
        LocalFrame {
            origin,
            km_per_deg_lat,
            km_per_deg_lon: km_per_deg_lat * origin.lat.to_radians().cos(),
        }
    }

    pub fn to_latlon(&self, dx_km: f64, dy_km: f64) -> LatLon {
        LatLon {
            lat: self.origin.lat + dy_km / self.km_per_deg_lat,
            lon: self.origin.lon + dx_km / self.km_per_deg_lon,
        }
    }

    pub fn to_km(&self, p: LatLon) -> (f64, f64) {
        (
            (p.lon - self.origin.lon) * self.km_per_deg_lon,
            (p.lat - self.origin.lat) * self.km_per_deg_lat,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn haversine_zero_and_symmetry() {
        let a = LatLon::new(12.97, 77.59);
        let b = LatLon::new(13.04, 77.62);
        assert_eq!(haversine_km(a, a), 0.0);
        assert_relative_eq!(haversine_km(a, b), haversine_km(b, a));
    }

    #[test]
    fn one_degree_latitude_is_about_111_km() {
        let a = LatLon::new(13.0, 77.6);
        let b = LatLon::new(14.0, 77.6);
        assert_relative_eq!(haversine_km(a, b), 111.195, epsilon = 0.1);
    }

    #[test]
    fn local_frame_round_trips() {
        let frame = LocalFrame::new(LatLon::new(13.0, 77.6));
        let p = frame.to_latlon(3.25, -1.5);
        let (dx, dy) = frame.to_km(p);
        assert_relative_eq!(dx, 3.25, epsilon = 1e-9);
        assert_relative_eq!(dy, -1.5, epsilon = 1e-9);
        // the frame's metric tracks haversine closely at city scale
        let d = haversine_km(frame.to_latlon(0.0, 0.0), p);
        assert_relative_eq!(d, (3.25f64.powi(2) + 1.5f64.powi(2)).sqrt(), epsilon = 2e-3);
    }
}
