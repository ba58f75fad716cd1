//! Location processing: dwell-weighted samples, static-sample gating,
//! density clustering, cluster dwell statistics and entropy, home
//! inference from nightly dwell, and the mobility measures (variance,
//! radius of gyration, distance, circadian movement).

use std::collections::BTreeMap;

use chrono::{NaiveDate, NaiveDateTime};

use crate::domain::{Epoch, Payload, SensorEvent};

use super::geo::haversine_m;

/// One location fix carrying the dwell time it stands for.
#[derive(Debug, Clone)]
pub struct LocationSample {
    pub t: NaiveDateTime,
    pub lat: f64,
    pub lon: f64,
    /// Minutes until the next sample, capped; the last sample counts as 1.
    pub weight_min: f64,
    /// Below the movement-speed threshold relative to the previous fix.
    pub is_static: bool,
    /// Global (whole-term) cluster id.
    pub cluster: Option<usize>,
    /// Index into the place map, when inside a labeled polygon.
    pub place: Option<usize>,
}

/// Turn raw location events into weighted samples. `gap_cap_min` bounds the
/// dwell a single fix can represent across a recording gap.
pub fn build_samples(events: &[SensorEvent], static_speed_kmh: f64, gap_cap_min: f64) -> Vec<LocationSample> {
    let fixes: Vec<(NaiveDateTime, f64, f64)> = events
        .iter()
        .filter_map(|e| match &e.payload {
            Payload::Location { lat, lon } => Some((e.timestamp, *lat, *lon)),
            _ => None,
        })
        .collect();
    let mut samples = Vec::with_capacity(fixes.len());
    for (i, &(t, lat, lon)) in fixes.iter().enumerate() {
        let weight_min = match fixes.get(i + 1) {
            Some(&(next_t, ..)) => {
                let dt = (next_t - t).num_minutes().max(0) as f64;
                dt.min(gap_cap_min).max(0.0)
            }
            None => 1.0,
        };
        // speed relative to the previous fix; the first sample uses the next
        let speed_kmh = |from: &(NaiveDateTime, f64, f64), to: &(NaiveDateTime, f64, f64)| {
            let minutes = (to.0 - from.0).num_minutes().max(1) as f64;
            let meters = haversine_m((from.1, from.2), (to.1, to.2));
            meters / 1000.0 / (minutes / 60.0)
        };
        let is_static = if i > 0 {
            speed_kmh(&fixes[i - 1], &fixes[i]) < static_speed_kmh
        } else if fixes.len() > 1 {
            speed_kmh(&fixes[0], &fixes[1]) < static_speed_kmh
        } else {
            true
        };
        samples.push(LocationSample {
            t,
            lat,
            lon,
            weight_min,
            is_static,
            cluster: None,
            place: None,
        });
    }
    samples
}

/// DBSCAN over (lat, lon) points with a haversine eps in meters. Returns
/// the cluster id per point (noise is `None`) and the cluster count.
/// Neighbor queries go through a grid hash so clustered cohort-scale inputs
/// stay near-linear.
pub fn dbscan(points: &[(f64, f64)], eps_m: f64, min_pts: usize) -> (Vec<Option<usize>>, usize) {
    let n = points.len();
    let mut assign: Vec<Option<usize>> = vec![None; n];
    let mut visited = vec![false; n];

    let lat0 = points.first().map(|p| p.0).unwrap_or(0.0);
    let cell_lat = eps_m / 111_320.0;
    let cell_lon = eps_m / (111_320.0 * lat0.to_radians().cos().abs().max(1e-6));
    let cell_of = |p: (f64, f64)| -> (i64, i64) {
        ((p.0 / cell_lat).floor() as i64, (p.1 / cell_lon).floor() as i64)
    };
    let mut grid: BTreeMap<(i64, i64), Vec<usize>> = BTreeMap::new();
    for (i, &p) in points.iter().enumerate() {
        grid.entry(cell_of(p)).or_default().push(i);
    }
    let neighbors = |i: usize| -> Vec<usize> {
        let (ci, cj) = cell_of(points[i]);
        let mut out = Vec::new();
        for di in -1..=1 {
            for dj in -1..=1 {
                if let Some(cell) = grid.get(&(ci + di, cj + dj)) {
                    out.extend(
                        cell.iter()
                            .copied()
                            .filter(|&j| haversine_m(points[i], points[j]) <= eps_m),
                    );
                }
            }
        }
        out
    };
    let mut next_cluster = 0;
    for i in 0..n {
        if visited[i] {
            continue;
        }
        visited[i] = true;
        let seed = neighbors(i);
        if seed.len() < min_pts {
            continue; // noise unless later reachable as a border point
        }
        let cluster = next_cluster;
        next_cluster += 1;
        assign[i] = Some(cluster);
        let mut queue = seed;
        while let Some(j) = queue.pop() {
            if assign[j].is_none() {
                assign[j] = Some(cluster);
            }
            if visited[j] {
                continue;
            }
            visited[j] = true;
            let nb = neighbors(j);
            if nb.len() >= min_pts {
                queue.extend(nb);
            }
        }
    }
    (assign, next_cluster)
}

/// A density cluster of static samples, ranked by total dwell time
/// (rank 0 = first-ranked).
#[derive(Debug, Clone)]
pub struct LocationCluster {
    pub id: usize,
    pub centroid: (f64, f64),
    pub dwell_min: f64,
    pub rank: usize,
}

/// Cluster the static samples in place and summarize the clusters.
pub fn cluster_static_samples(
    samples: &mut [LocationSample],
    eps_m: f64,
    min_pts: usize,
) -> Vec<LocationCluster> {
    let static_idx: Vec<usize> = (0..samples.len()).filter(|&i| samples[i].is_static).collect();
    let points: Vec<(f64, f64)> = static_idx.iter().map(|&i| (samples[i].lat, samples[i].lon)).collect();
    let (assign, n_clusters) = dbscan(&points, eps_m, min_pts);
    for (k, &i) in static_idx.iter().enumerate() {
        samples[i].cluster = assign[k];
    }
    let mut dwell = vec![0.0; n_clusters];
    let mut lat_sum = vec![0.0; n_clusters];
    let mut lon_sum = vec![0.0; n_clusters];
    let mut count = vec![0usize; n_clusters];
    for s in samples.iter() {
        if let Some(c) = s.cluster {
            dwell[c] += s.weight_min;
            lat_sum[c] += s.lat;
            lon_sum[c] += s.lon;
            count[c] += 1;
        }
    }
    let mut clusters: Vec<LocationCluster> = (0..n_clusters)
        .map(|c| LocationCluster {
            id: c,
            centroid: (lat_sum[c] / count[c] as f64, lon_sum[c] / count[c] as f64),
            dwell_min: dwell[c],
            rank: 0,
        })
        .collect();
    let mut order: Vec<usize> = (0..n_clusters).collect();
    order.sort_by(|&a, &b| {
        dwell[b]
            .partial_cmp(&dwell[a])
            .expect("finite dwell")
            .then(a.cmp(&b))
    });
    for (rank, &c) in order.iter().enumerate() {
        clusters[c].rank = rank;
    }
    clusters
}

/// Shannon entropy of a dwell distribution and its normalized form
/// (entropy / ln(k), zero below two clusters).
pub fn dwell_entropy(dwells: &[f64]) -> (f64, f64) {
    let positive: Vec<f64> = dwells.iter().copied().filter(|d| *d > 0.0).collect();
    let total: f64 = positive.iter().sum();
    if positive.is_empty() || total <= 0.0 {
        return (0.0, 0.0);
    }
    let entropy: f64 = positive
        .iter()
        .map(|d| {
            let p = d / total;
            -p * p.ln()
        })
        .sum();
    let normalized = if positive.len() >= 2 {
        entropy / (positive.len() as f64).ln()
    } else {
        0.0
    };
    (entropy, normalized)
}

/// Dwell fraction of each cluster during one night, with the night's total
/// observed dwell.
fn night_dwell(samples: &[LocationSample], day: NaiveDate, n_clusters: usize) -> (Vec<f64>, f64) {
    let start = day.and_hms_opt(0, 0, 0).expect("midnight");
    let end = day.and_hms_opt(6, 0, 0).expect("6am");
    let mut per_cluster = vec![0.0; n_clusters];
    let mut total = 0.0;
    for s in samples {
        if s.t >= start && s.t < end {
            total += s.weight_min;
            if let Some(c) = s.cluster {
                per_cluster[c] += s.weight_min;
            }
        }
    }
    (per_cluster, total)
}

/// Minimum observed night dwell for a night to count toward home inference.
pub const MIN_NIGHT_OBS_MIN: f64 = 180.0;

/// Infer the home cluster: some cluster must hold at least 80% of the
/// observed night dwell for strictly more than 3 consecutive nights.
/// Returns its centroid. Nights with under [`MIN_NIGHT_OBS_MIN`] observed
/// minutes never qualify.
pub fn infer_home(
    samples: &[LocationSample],
    clusters: &[LocationCluster],
    days: &[NaiveDate],
) -> Option<(f64, f64)> {
    if clusters.is_empty() {
        return None;
    }
    let mut best: Option<(usize, usize)> = None; // (run length, cluster)
    for cluster in clusters {
        let mut run = 0usize;
        let mut best_run = 0usize;
        for &day in days {
            let (per_cluster, total) = night_dwell(samples, day, clusters.len());
            let qualifies = total >= MIN_NIGHT_OBS_MIN && per_cluster[cluster.id] / total >= 0.8;
            run = if qualifies { run + 1 } else { 0 };
            best_run = best_run.max(run);
        }
        if best_run >= 4 {
            let better = match best {
                None => true,
                Some((len, c)) => {
                    best_run > len || (best_run == len && cluster.dwell_min > clusters[c].dwell_min)
                }
            };
            if better {
                best = Some((best_run, cluster.id));
            }
        }
    }
    best.map(|(_, c)| clusters[c].centroid)
}

/// Local (single-day) clusters for each calendar day.
#[derive(Debug, Clone, Default)]
pub struct LocalDayClusters {
    /// Parallel to the day's samples: local cluster id per sample.
    pub assign: Vec<Option<usize>>,
    pub n_clusters: usize,
}

/// Everything the per-window feature computation needs for one participant.
pub struct LocationContext {
    pub samples: Vec<LocationSample>,
    pub clusters: Vec<LocationCluster>,
    pub home: Option<(f64, f64)>,
    /// Sample index range per day (samples are time-sorted).
    pub day_ranges: BTreeMap<NaiveDate, (usize, usize)>,
    pub local: BTreeMap<NaiveDate, LocalDayClusters>,
}

impl LocationContext {
    pub fn build(
        events: &[SensorEvent],
        days: &[NaiveDate],
        static_speed_kmh: f64,
        gap_cap_min: f64,
        eps_m: f64,
        min_pts: usize,
    ) -> Self {
        let mut samples = build_samples(events, static_speed_kmh, gap_cap_min);
        let clusters = cluster_static_samples(&mut samples, eps_m, min_pts);
        let home = infer_home(&samples, &clusters, days);

        let mut day_ranges = BTreeMap::new();
        for &day in days {
            let start = samples.partition_point(|s| s.t < day.and_hms_opt(0, 0, 0).unwrap());
            let end = samples.partition_point(|s| {
                s.t < (day + chrono::Duration::days(1)).and_hms_opt(0, 0, 0).unwrap()
            });
            day_ranges.insert(day, (start, end));
        }

        let mut local = BTreeMap::new();
        for (&day, &(start, end)) in &day_ranges {
            let day_samples = &samples[start..end];
            let static_pos: Vec<usize> = (0..day_samples.len())
                .filter(|&i| day_samples[i].is_static)
                .collect();
            let pts: Vec<(f64, f64)> = static_pos
                .iter()
                .map(|&i| (day_samples[i].lat, day_samples[i].lon))
                .collect();
            let (assign_static, n_clusters) = dbscan(&pts, eps_m, min_pts);
            let mut assign = vec![None; day_samples.len()];
            for (k, &i) in static_pos.iter().enumerate() {
                assign[i] = assign_static[k];
            }
            local.insert(day, LocalDayClusters { assign, n_clusters });
        }

        LocationContext {
            samples,
            clusters,
            home,
            day_ranges,
            local,
        }
    }

    pub fn day_samples(&self, day: NaiveDate) -> &[LocationSample] {
        match self.day_ranges.get(&day) {
            Some(&(s, e)) => &self.samples[s..e],
            None => &[],
        }
    }

    /// Indices (relative to the day's slice) of samples inside the epoch.
    pub fn window_indices(&self, day: NaiveDate, epoch: Epoch) -> Vec<usize> {
        let (lo, hi) = epoch.window();
        self.day_samples(day)
            .iter()
            .enumerate()
            .filter(|(_, s)| {
                let m = s.t.time().hour() as u32 * 60 + s.t.time().minute();
                m >= lo && m < hi
            })
            .map(|(i, _)| i)
            .collect()
    }
}

use chrono::Timelike;

pub const LOCATION_NAMES: [&str; 18] = [
    "loc_variance",
    "loc_radius_gyration_m",
    "loc_distance_m",
    "loc_avg_speed_kmh",
    "loc_pct_moving",
    "loc_circadian",
    "loc_cluster1_min",
    "loc_cluster2_min",
    "loc_cluster3_min",
    "loc_local_clusters",
    "loc_local_dwell_mean",
    "loc_local_dwell_std",
    "loc_local_dwell_max",
    "loc_local_dwell_min",
    "loc_entropy",
    "loc_norm_entropy",
    "loc_home_min_10m",
    "loc_home_min_100m",
];

/// The location feature vector for one day/epoch window, aligned with
/// [`LOCATION_NAMES`]. `day_index` is the day's offset in `days`; circadian
/// movement uses the epoch's samples over all days up to and including it.
pub fn location_features(
    ctx: &LocationContext,
    days: &[NaiveDate],
    day_index: usize,
    epoch: Epoch,
) -> Vec<Option<f64>> {
    let day = days[day_index];
    let day_samples = ctx.day_samples(day);
    let idx = ctx.window_indices(day, epoch);
    let win: Vec<&LocationSample> = idx.iter().map(|&i| &day_samples[i]).collect();

    let lats: Vec<f64> = win.iter().map(|s| s.lat).collect();
    let lons: Vec<f64> = win.iter().map(|s| s.lon).collect();

    let variance = if win.len() >= 2 {
        let var = |xs: &[f64]| {
            let m = xs.iter().sum::<f64>() / xs.len() as f64;
            xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
        };
        Some((var(&lats) + var(&lons) + 1e-12).ln())
    } else {
        None
    };

    let rgyr = if win.is_empty() {
        None
    } else {
        let clat = lats.iter().sum::<f64>() / lats.len() as f64;
        let clon = lons.iter().sum::<f64>() / lons.len() as f64;
        let msq = win
            .iter()
            .map(|s| haversine_m((s.lat, s.lon), (clat, clon)).powi(2))
            .sum::<f64>()
            / win.len() as f64;
        Some(msq.sqrt())
    };

    let mut distance = 0.0;
    let mut elapsed_min = 0.0;
    for w in idx.windows(2) {
        let (a, b) = (&day_samples[w[0]], &day_samples[w[1]]);
        distance += haversine_m((a.lat, a.lon), (b.lat, b.lon));
        elapsed_min += (b.t - a.t).num_minutes().max(0) as f64;
    }
    let avg_speed = (elapsed_min > 0.0).then(|| distance / 1000.0 / (elapsed_min / 60.0));

    let pct_moving = if win.is_empty() {
        None
    } else {
        Some(win.iter().filter(|s| !s.is_static).count() as f64 / win.len() as f64)
    };

    let circadian = {
        let upto: Vec<&LocationSample> = days[..=day_index]
            .iter()
            .flat_map(|d| {
                let ds = ctx.day_samples(*d);
                ctx.window_indices(*d, epoch).into_iter().map(move |i| &ds[i])
            })
            .collect();
        circadian_movement(&upto)
    };

    let mut ranked_dwell = [0.0f64; 3];
    for s in &win {
        if let Some(c) = s.cluster {
            let rank = ctx.clusters[c].rank;
            if rank < 3 {
                ranked_dwell[rank] += s.weight_min;
            }
        }
    }

    let (n_local, local_dwells) = match ctx.local.get(&day) {
        Some(local) => {
            let mut dwell = vec![0.0f64; local.n_clusters];
            for &i in &idx {
                if let Some(c) = local.assign[i] {
                    dwell[c] += day_samples[i].weight_min;
                }
            }
            let positive: Vec<f64> = dwell.into_iter().filter(|d| *d > 0.0).collect();
            (positive.len(), positive)
        }
        None => (0, Vec::new()),
    };
    let (entropy, norm_entropy) = dwell_entropy(&local_dwells);

    let home_dwell = |radius_m: f64| {
        ctx.home.map(|home| {
            win.iter()
                .filter(|s| haversine_m((s.lat, s.lon), home) <= radius_m)
                .map(|s| s.weight_min)
                .sum::<f64>()
        })
    };

    use super::bouts::{max, mean, min, sample_std};
    vec![
        variance,
        rgyr,
        Some(distance),
        avg_speed,
        pct_moving,
        circadian,
        Some(ranked_dwell[0]),
        Some(ranked_dwell[1]),
        Some(ranked_dwell[2]),
        Some(n_local as f64),
        mean(&local_dwells),
        sample_std(&local_dwells),
        max(&local_dwells),
        min(&local_dwells),
        Some(entropy),
        Some(norm_entropy),
        home_dwell(10.0),
        home_dwell(100.0),
    ]
}

/// Lomb-Scargle normalized power of an unevenly sampled series at one
/// frequency (cycles per hour).
pub fn lomb_scargle_power(t_hours: &[f64], values: &[f64], freq: f64) -> f64 {
    assert_eq!(t_hours.len(), values.len());
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let omega = 2.0 * std::f64::consts::PI * freq;
    let (mut s2, mut c2) = (0.0, 0.0);
    for &t in t_hours {
        s2 += (2.0 * omega * t).sin();
        c2 += (2.0 * omega * t).cos();
    }
    let tau = s2.atan2(c2) / (2.0 * omega);
    let (mut cs, mut cc, mut ss, mut sc) = (0.0, 0.0, 0.0, 0.0);
    for (&t, &x) in t_hours.iter().zip(values) {
        let arg = omega * (t - tau);
        let (sin, cos) = arg.sin_cos();
        let d = x - mean;
        cs += d * cos;
        cc += cos * cos;
        ss += d * sin;
        sc += sin * sin;
    }
    let mut p = 0.0;
    if cc > 0.0 {
        p += cs * cs / cc;
    }
    if sc > 0.0 {
        p += ss * ss / sc;
    }
    0.5 * p
}

/// Spectral energy of the coordinate series in the 23.5h-24.5h band,
/// log-scaled. An approximation of circadian movement regularity.
pub fn circadian_movement(samples: &[&LocationSample]) -> Option<f64> {
    if samples.len() < 8 {
        return None;
    }
    let t0 = samples[0].t;
    let t_hours: Vec<f64> = samples
        .iter()
        .map(|s| (s.t - t0).num_minutes() as f64 / 60.0)
        .collect();
    let lats: Vec<f64> = samples.iter().map(|s| s.lat).collect();
    let lons: Vec<f64> = samples.iter().map(|s| s.lon).collect();
    let mut energy = 0.0;
    for period in [23.5, 24.0, 24.5] {
        let f = 1.0 / period;
        energy += lomb_scargle_power(&t_hours, &lats, f) + lomb_scargle_power(&t_hours, &lons, f);
    }
    Some((energy + 1e-12).ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{ParticipantId, Payload, SensorEvent};

    fn loc_event(day: u32, hm: (u32, u32), lat: f64, lon: f64) -> SensorEvent {
        SensorEvent::new(
            ParticipantId::from("p"),
            NaiveDate::from_ymd_opt(2018, 4, day)
                .unwrap()
                .and_hms_opt(hm.0, hm.1, 0)
                .unwrap(),
            Payload::Location { lat, lon },
        )
    }

    #[test]
    fn dbscan_separates_two_sites() {
        // 6 points at site A, 6 at site B 500 m away, 1 noise point far off
        let mut pts = Vec::new();
        for i in 0..6 {
            pts.push((47.65 + i as f64 * 1e-5, -122.30));
        }
        for i in 0..6 {
            pts.push((47.6545 + i as f64 * 1e-5, -122.30));
        }
        pts.push((47.9, -122.30));
        let (assign, n) = dbscan(&pts, 30.0, 5);
        assert_eq!(n, 2);
        assert!(assign[..6].iter().all(|a| *a == assign[0] && a.is_some()));
        assert!(assign[6..12].iter().all(|a| *a == assign[6] && a.is_some()));
        assert_ne!(assign[0], assign[6]);
        assert_eq!(assign[12], None);
    }

    #[test]
    fn entropy_cases() {
        // single cluster: zero both ways
        assert_eq!(dwell_entropy(&[42.0]), (0.0, 0.0));
        // two equal clusters: normalized entropy is exactly 1
        let (h, n) = dwell_entropy(&[30.0, 30.0]);
        assert!((h - (2.0f64).ln()).abs() < 1e-12);
        assert!((n - 1.0).abs() < 1e-12);
        // {60,30,10}: direct formula evaluation
        let (h, n) = dwell_entropy(&[60.0, 30.0, 10.0]);
        let expect = -(0.6f64 * 0.6f64.ln() + 0.3 * 0.3f64.ln() + 0.1 * 0.1f64.ln());
        assert!((h - expect).abs() < 1e-12);
        assert!((n - expect / 3.0f64.ln()).abs() < 1e-12);
        assert!((0.0..=1.0).contains(&n));
    }

    /// Nights at one point; `frac` of the night's samples at the home site,
    /// the rest at a site 1km away.
    fn night_stream(days: &[u32], frac: f64) -> Vec<SensorEvent> {
        let mut events = Vec::new();
        for &day in days {
            let total = 72; // every 5 minutes over [00:00, 06:00)
            let at_home = (total as f64 * frac).round() as u32;
            for k in 0..total {
                let minute = k * 5;
                let (lat, lon) = if k < at_home {
                    (47.6500, -122.3000)
                } else {
                    (47.6590, -122.3000)
                };
                events.push(loc_event(day, (minute / 60, minute % 60), lat, lon));
            }
        }
        events
    }

    fn infer(events: &[SensorEvent], days: &[u32]) -> Option<(f64, f64)> {
        let dates: Vec<NaiveDate> = days
            .iter()
            .map(|d| NaiveDate::from_ymd_opt(2018, 4, *d).unwrap())
            .collect();
        let mut samples = build_samples(events, 1.0, 15.0);
        let clusters = cluster_static_samples(&mut samples, 30.0, 5);
        infer_home(&samples, &clusters, &dates)
    }

    #[test]
    fn home_found_after_four_consecutive_nights_at_85pct() {
        let events = night_stream(&[2, 3, 4, 5], 0.85);
        let home = infer(&events, &[2, 3, 4, 5]).expect("home inferred");
        assert!(haversine_m(home, (47.65, -122.30)) < 30.0);
    }

    #[test]
    fn three_nights_only_is_not_home() {
        let events = night_stream(&[2, 3, 4], 1.0);
        assert_eq!(infer(&events, &[2, 3, 4, 5]), None);
    }

    #[test]
    fn four_nights_at_79pct_is_not_home() {
        let events = night_stream(&[2, 3, 4, 5], 0.79);
        assert_eq!(infer(&events, &[2, 3, 4, 5]), None);
    }

    #[test]
    fn broken_streak_is_not_home() {
        // 4 qualifying nights but not consecutive: 2,3 then 5,6
        let mut events = night_stream(&[2, 3], 0.9);
        events.extend(night_stream(&[4], 0.1));
        events.extend(night_stream(&[5, 6], 0.9));
        assert_eq!(infer(&events, &[2, 3, 4, 5, 6]), None);
    }

    #[test]
    fn lomb_scargle_peaks_at_true_period() {
        let t: Vec<f64> = (0..200).map(|i| i as f64 * 0.9).collect();
        let x: Vec<f64> = t.iter().map(|t| (2.0 * std::f64::consts::PI * t / 24.0).sin()).collect();
        let p24 = lomb_scargle_power(&t, &x, 1.0 / 24.0);
        let p7 = lomb_scargle_power(&t, &x, 1.0 / 7.0);
        assert!(p24 > 10.0 * p7);
    }
}
