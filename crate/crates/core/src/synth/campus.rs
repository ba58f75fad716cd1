//! The fixed synthetic campus: labeled square buildings on a grid, spaced
//! far enough apart that 30 m density clustering separates them cleanly.

use crate::features::{Place, PlaceLabel, PlaceMap};

/// Campus anchor. Positions are offsets in meters from here.
const ORIGIN: (f64, f64) = (47.6550, -122.3080);

const M_PER_DEG_LAT: f64 = 111_320.0;

fn offset(north_m: f64, east_m: f64) -> (f64, f64) {
    let lat = ORIGIN.0 + north_m / M_PER_DEG_LAT;
    let lon = ORIGIN.1 + east_m / (M_PER_DEG_LAT * ORIGIN.0.to_radians().cos());
    (lat, lon)
}

fn square(id: &str, label: PlaceLabel, north_m: f64, east_m: f64, half_m: f64) -> Place {
    let c = offset(north_m, east_m);
    let dlat = half_m / M_PER_DEG_LAT;
    let dlon = half_m / (M_PER_DEG_LAT * c.0.to_radians().cos());
    Place {
        id: id.to_string(),
        label,
        polygon: vec![
            (c.0 - dlat, c.1 - dlon),
            (c.0 - dlat, c.1 + dlon),
            (c.0 + dlat, c.1 + dlon),
            (c.0 + dlat, c.1 - dlon),
        ],
    }
}

/// Ids of the study buildings classes can meet in.
pub fn study_buildings() -> Vec<&'static str> {
    vec!["study_1", "study_2", "study_3", "study_4"]
}

pub fn dorm_buildings() -> Vec<&'static str> {
    vec!["dorm_1", "dorm_2", "dorm_3", "dorm_4", "dorm_5", "dorm_6"]
}

pub fn frat_buildings() -> Vec<&'static str> {
    vec!["frat_1", "frat_2"]
}

pub fn food_buildings() -> Vec<&'static str> {
    vec!["food_1", "food_2", "food_3"]
}

pub fn exercise_buildings() -> Vec<&'static str> {
    vec!["gym_1", "gym_2"]
}

pub fn greens_areas() -> Vec<&'static str> {
    vec!["green_1", "green_2"]
}

/// The deterministic campus map shared by every synthetic cohort.
pub fn campus_map() -> PlaceMap {
    let mut places = Vec::new();
    // study row, north side
    places.push(square("study_1", PlaceLabel::Study, 800.0, -600.0, 70.0));
    places.push(square("study_2", PlaceLabel::Study, 800.0, -200.0, 70.0));
    places.push(square("study_3", PlaceLabel::Study, 800.0, 200.0, 70.0));
    places.push(square("study_4", PlaceLabel::Study, 800.0, 600.0, 70.0));
    // dorms, south side
    for (i, east) in [-1000.0, -600.0, -200.0, 200.0, 600.0, 1000.0].iter().enumerate() {
        places.push(square(dorm_buildings()[i], PlaceLabel::Living, -800.0, *east, 60.0));
    }
    // food between
    places.push(square("food_1", PlaceLabel::Food, 0.0, -800.0, 50.0));
    places.push(square("food_2", PlaceLabel::Food, 0.0, 0.0, 50.0));
    places.push(square("food_3", PlaceLabel::Food, 0.0, 800.0, 50.0));
    // gyms east
    places.push(square("gym_1", PlaceLabel::Exercise, 400.0, 1000.0, 70.0));
    places.push(square("gym_2", PlaceLabel::Exercise, -400.0, 1000.0, 70.0));
    // greens west
    places.push(square("green_1", PlaceLabel::Greens, 400.0, -1000.0, 90.0));
    places.push(square("green_2", PlaceLabel::Greens, -400.0, -1000.0, 90.0));
    // fraternity houses far south
    places.push(square("frat_1", PlaceLabel::Frat, -1300.0, -400.0, 50.0));
    places.push(square("frat_2", PlaceLabel::Frat, -1300.0, 400.0, 50.0));
    PlaceMap { places }
}
