//! Missing-data injection: drop events per sensor at a configured rate,
//! deterministically under the seed.

use std::collections::BTreeMap;

use rand::Rng;

use crate::domain::{ParticipantId, Sensor, SensorEvent};
use crate::rng::substream;

/// Drop each event of sensor `s` independently with probability
/// `rates[s]`. Participants get independent substreams, so the operation is
/// order-independent and reproducible.
pub fn inject_missingness(
    streams: &mut BTreeMap<ParticipantId, Vec<SensorEvent>>,
    rates: &BTreeMap<Sensor, f64>,
    seed: u64,
) {
    for (index, (_, events)) in streams.iter_mut().enumerate() {
        let mut rng = substream(seed, "missingness", index as u64);
        events.retain(|e| match rates.get(&e.sensor()) {
            Some(rate) => rng.gen::<f64>() >= *rate,
            None => true,
        });
    }
}
