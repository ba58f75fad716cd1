//! Geography primitives: haversine distance, labeled campus polygons, and
//! the places.json place map.

use serde::{Deserialize, Serialize};

pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Great-circle distance in meters between two (lat, lon) points in degrees.
pub fn haversine_m(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (lat1, lon1) = (a.0.to_radians(), a.1.to_radians());
    let (lat2, lon2) = (b.0.to_radians(), b.1.to_radians());
    let dlat = lat2 - lat1;
    let dlon = lon2 - lon1;
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().asin()
}

/// The fixed label set of hand-marked campus places.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlaceLabel {
    Exercise,
    Food,
    Frat,
    Greens,
    Living,
    Study,
}

impl PlaceLabel {
    pub const ALL: [PlaceLabel; 6] = [
        PlaceLabel::Exercise,
        PlaceLabel::Food,
        PlaceLabel::Frat,
        PlaceLabel::Greens,
        PlaceLabel::Living,
        PlaceLabel::Study,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            PlaceLabel::Exercise => "exercise",
            PlaceLabel::Food => "food",
            PlaceLabel::Frat => "frat",
            PlaceLabel::Greens => "greens",
            PlaceLabel::Living => "living",
            PlaceLabel::Study => "study",
        }
    }
}

/// One labeled building/area: a simple closed polygon in (lat, lon) degrees.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Place {
    pub id: String,
    pub label: PlaceLabel,
    /// Vertices in order; the closing edge back to the first is implicit.
    pub polygon: Vec<(f64, f64)>,
}

impl Place {
    /// Even-odd ray casting on the (lat, lon) plane. Campus-scale polygons
    /// are small enough that planar containment is accurate.
    pub fn contains(&self, point: (f64, f64)) -> bool {
        let (py, px) = point;
        let mut inside = false;
        let n = self.polygon.len();
        let mut j = n - 1;
        for i in 0..n {
            let (yi, xi) = self.polygon[i];
            let (yj, xj) = self.polygon[j];
            if (yi > py) != (yj > py) && px < (xj - xi) * (py - yi) / (yj - yi) + xi {
                inside = !inside;
            }
            j = i;
        }
        inside
    }

    pub fn centroid(&self) -> (f64, f64) {
        let n = self.polygon.len() as f64;
        let lat = self.polygon.iter().map(|p| p.0).sum::<f64>() / n;
        let lon = self.polygon.iter().map(|p| p.1).sum::<f64>() / n;
        (lat, lon)
    }
}

/// The campus map: id -> labeled polygon.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PlaceMap {
    pub places: Vec<Place>,
}

impl PlaceMap {
    /// First place containing the point, or `None` when outdoors.
    pub fn locate(&self, point: (f64, f64)) -> Option<&Place> {
        self.places.iter().find(|p| p.contains(point))
    }

    pub fn by_id(&self, id: &str) -> Option<&Place> {
        self.places.iter().find(|p| p.id == id)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("place map serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(id: &str, label: PlaceLabel, lat: f64, lon: f64, half_m: f64) -> Place {
        // ~111_320 m per degree latitude; longitude scaled by cos(lat)
        let dlat = half_m / 111_320.0;
        let dlon = half_m / (111_320.0 * lat.to_radians().cos());
        Place {
            id: id.to_string(),
            label,
            polygon: vec![
                (lat - dlat, lon - dlon),
                (lat - dlat, lon + dlon),
                (lat + dlat, lon + dlon),
                (lat + dlat, lon - dlon),
            ],
        }
    }

    #[test]
    fn haversine_matches_known_scale() {
        // one degree of latitude is ~111.2 km
        let d = haversine_m((47.0, -122.0), (48.0, -122.0));
        assert!((d - 111_195.0).abs() < 100.0);
        assert_eq!(haversine_m((47.65, -122.3), (47.65, -122.3)), 0.0);
    }

    #[test]
    fn polygon_containment() {
        let p = square("gym", PlaceLabel::Exercise, 47.65, -122.30, 50.0);
        assert!(p.contains((47.65, -122.30)));
        assert!(!p.contains((47.66, -122.30)));
        let map = PlaceMap { places: vec![p] };
        assert_eq!(map.locate((47.65, -122.30)).unwrap().id, "gym");
        assert!(map.locate((0.0, 0.0)).is_none());
    }

    #[test]
    fn place_map_json_roundtrip() {
        let map = PlaceMap {
            places: vec![square("lib", PlaceLabel::Study, 47.653, -122.305, 40.0)],
        };
        let back = PlaceMap::from_json(&map.to_json()).unwrap();
        assert_eq!(back.places.len(), 1);
        assert_eq!(back.places[0].label, PlaceLabel::Study);
    }
}
