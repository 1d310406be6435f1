//! Service area geometry, operating parameters, and daily request generation.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Time in minutes since the start of the operating day.
pub type Minutes = f64;

/// Planar location in kilometres.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn euclidean_km(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Per-axis law for customer coordinates inside a region, before the shift.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum SpatialLaw {
    Normal { mean_km: f64, sd_km: f64 },
    Uniform { lo_km: f64, hi_km: f64 },
}

impl SpatialLaw {
    fn sample_axis<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            SpatialLaw::Normal { mean_km, sd_km } => Normal::new(mean_km, sd_km)
                .expect("validated normal law")
                .sample(rng),
            SpatialLaw::Uniform { lo_km, hi_km } => rng.random_range(lo_km..=hi_km),
        }
    }

    /// Per-axis interval holding 99.9% of the mass.
    fn central_interval(&self) -> (f64, f64) {
        // two-sided 99.9% standard normal quantile
        const Z: f64 = 3.290_526_731_491_926;
        match *self {
            SpatialLaw::Normal { mean_km, sd_km } => (mean_km - Z * sd_km, mean_km + Z * sd_km),
            SpatialLaw::Uniform { lo_km, hi_km } => (lo_km, hi_km),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub id: usize,
    pub spatial_law: SpatialLaw,
    pub x_shift_km: f64,
    /// Zero for every built-in layout except the 2x2 grid of geography (c).
    #[serde(default)]
    pub y_shift_km: f64,
    pub initial_expected_demand: f64,
    pub demand_cap: f64,
}

impl Region {
    pub fn sample_location<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        let x = self.spatial_law.sample_axis(rng) + self.x_shift_km;
        let y = self.spatial_law.sample_axis(rng) + self.y_shift_km;
        Point::new(x, y)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Geography {
    pub regions: Vec<Region>,
    pub warehouse: Point,
    /// Ratio of road distance to straight-line distance.
    pub circuity_factor: f64,
    pub speed_kmh: f64,
}

pub const DEFAULT_CIRCUITY: f64 = 1.4;
pub const DEFAULT_SPEED_KMH: f64 = 30.0;

impl Geography {
    pub fn validate(&self) -> Result<()> {
        if self.regions.is_empty() {
            return Err(Error::config("geography.regions: at least one region required"));
        }
        for (idx, region) in self.regions.iter().enumerate() {
            if region.id != idx {
                return Err(Error::config(format!(
                    "geography.regions[{idx}].id: expected {idx}, found {}",
                    region.id
                )));
            }
            if !(region.initial_expected_demand >= 0.0) || !region.initial_expected_demand.is_finite() {
                return Err(Error::config(format!(
                    "geography.regions[{idx}].initial_expected_demand must be finite and >= 0"
                )));
            }
            if !(region.demand_cap > 0.0) || !region.demand_cap.is_finite() {
                return Err(Error::config(format!(
                    "geography.regions[{idx}].demand_cap must be finite and > 0"
                )));
            }
            match region.spatial_law {
                SpatialLaw::Normal { sd_km, .. } if !(sd_km > 0.0) => {
                    return Err(Error::config(format!(
                        "geography.regions[{idx}].sd_km must be > 0"
                    )))
                }
                SpatialLaw::Uniform { lo_km, hi_km } if !(hi_km > lo_km) => {
                    return Err(Error::config(format!(
                        "geography.regions[{idx}]: uniform law needs lo_km < hi_km"
                    )))
                }
                _ => {}
            }
        }
        if !(self.circuity_factor >= 1.0) {
            return Err(Error::config("geography.circuity_factor must be >= 1"));
        }
        if !(self.speed_kmh > 0.0) {
            return Err(Error::config("geography.speed_kmh must be > 0"));
        }
        Ok(())
    }

    pub fn num_regions(&self) -> usize {
        self.regions.len()
    }

    /// Road travel time in minutes between two points.
    pub fn travel_time(&self, a: Point, b: Point) -> Minutes {
        self.circuity_factor * a.euclidean_km(b) / self.speed_kmh * 60.0
    }

    pub fn initial_demands(&self) -> Vec<f64> {
        self.regions.iter().map(|r| r.initial_expected_demand).collect()
    }

    pub fn demand_caps(&self) -> Vec<f64> {
        self.regions.iter().map(|r| r.demand_cap).collect()
    }

    /// Axis-aligned box covering 99.9% of every region's customers per axis.
    pub fn bounding_box(&self) -> (Point, Point) {
        let mut lo = Point::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for region in &self.regions {
            let (a, b) = region.spatial_law.central_interval();
            lo.x = lo.x.min(a + region.x_shift_km);
            hi.x = hi.x.max(b + region.x_shift_km);
            lo.y = lo.y.min(a + region.y_shift_km);
            hi.y = hi.y.max(b + region.y_shift_km);
        }
        (lo, hi)
    }

    /// Largest warehouse travel time to a corner of [`Geography::bounding_box`].
    pub fn max_proxy_time(&self) -> Minutes {
        let (lo, hi) = self.bounding_box();
        [
            Point::new(lo.x, lo.y),
            Point::new(lo.x, hi.y),
            Point::new(hi.x, lo.y),
            Point::new(hi.x, hi.y),
        ]
        .into_iter()
        .map(|corner| self.travel_time(self.warehouse, corner))
        .fold(0.0, f64::max)
    }

    /// Divides initial demands and caps by `factor` (desk-scale runs).
    pub fn scaled(&self, factor: f64) -> Geography {
        let mut geo = self.clone();
        for region in &mut geo.regions {
            region.initial_expected_demand /= factor;
            region.demand_cap /= factor;
        }
        geo
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GeographyId {
    A,
    B,
    C,
}

impl GeographyId {
    pub const ALL: [GeographyId; 3] = [GeographyId::A, GeographyId::B, GeographyId::C];
}

impl fmt::Display for GeographyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GeographyId::A => "a",
            GeographyId::B => "b",
            GeographyId::C => "c",
        })
    }
}

impl FromStr for GeographyId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "a" => Ok(GeographyId::A),
            "b" => Ok(GeographyId::B),
            "c" => Ok(GeographyId::C),
            other => Err(Error::config(format!(
                "geography: unknown identifier `{other}` (expected a, b or c)"
            ))),
        }
    }
}

/// One of the three built-in service areas.
///
/// Two-region layouts draw both coordinates from N(5, 3) km and move Region 2
/// five kilometres to the right. In (a) the warehouse sits midway between the
/// two region centres; in (b) it sits on the outer edge of Region 1, one
/// standard deviation from its centre, so Region 1 is closer. Layout (c) is a 2x2 grid of 5 km squares around a
/// central warehouse.
pub fn builtin_geography(which: GeographyId) -> Geography {
    let normal = SpatialLaw::Normal {
        mean_km: 5.0,
        sd_km: 3.0,
    };
    let two_regions = |demands: [f64; 2]| -> Vec<Region> {
        demands
            .iter()
            .enumerate()
            .map(|(id, &d)| Region {
                id,
                spatial_law: normal,
                x_shift_km: 5.0 * id as f64,
                y_shift_km: 0.0,
                initial_expected_demand: d,
                demand_cap: 250.0,
            })
            .collect()
    };
    let (regions, warehouse) = match which {
        GeographyId::A => (two_regions([200.0, 50.0]), WAREHOUSE_A),
        GeographyId::B => (two_regions([125.0, 125.0]), WAREHOUSE_B),
        GeographyId::C => {
            let uniform = SpatialLaw::Uniform {
                lo_km: 0.0,
                hi_km: 5.0,
            };
            let regions = [50.0, 100.0, 25.0, 75.0]
                .iter()
                .enumerate()
                .map(|(id, &d)| Region {
                    id,
                    spatial_law: uniform,
                    x_shift_km: 5.0 * (id % 2) as f64,
                    y_shift_km: 5.0 * (id / 2) as f64,
                    initial_expected_demand: d,
                    demand_cap: 125.0,
                })
                .collect();
            (regions, Point::new(5.0, 5.0))
        }
    };
    Geography {
        regions,
        warehouse,
        circuity_factor: DEFAULT_CIRCUITY,
        speed_kmh: DEFAULT_SPEED_KMH,
    }
}

/// Midpoint between the Region 1 and Region 2 centres.
pub const WAREHOUSE_A: Point = Point::new(7.5, 5.0);
/// Outer edge of Region 1, away from Region 2.
pub const WAREHOUSE_B: Point = Point::new(2.0, 5.0);

/// Fleet and clock parameters of the operating day.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ServiceParams {
    pub vehicles: usize,
    /// Requests arrive in `[0, request_window]`.
    pub request_window: Minutes,
    /// Every vehicle must be back at the warehouse by this time.
    pub shift_end: Minutes,
    /// Accepted requests must be delivered within this many minutes.
    pub deadline_offset: Minutes,
    pub load_time: Minutes,
    pub service_time: Minutes,
}

impl Default for ServiceParams {
    fn default() -> Self {
        ServiceParams {
            vehicles: 5,
            request_window: 420.0,
            shift_end: 480.0,
            deadline_offset: 240.0,
            load_time: 3.0,
            service_time: 3.0,
        }
    }
}

impl ServiceParams {
    pub fn validate(&self) -> Result<()> {
        if self.vehicles == 0 {
            return Err(Error::config("fleet.vehicles must be >= 1"));
        }
        for (name, v) in [
            ("fleet.request_window", self.request_window),
            ("fleet.shift_end", self.shift_end),
            ("fleet.deadline_offset", self.deadline_offset),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::config(format!("{name} must be positive")));
            }
        }
        for (name, v) in [
            ("fleet.load_time", self.load_time),
            ("fleet.service_time", self.service_time),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::config(format!("{name} must be >= 0")));
            }
        }
        if self.shift_end < self.request_window {
            return Err(Error::config("fleet.shift_end must be >= fleet.request_window"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Customer {
    /// Position in the day's request sequence.
    pub id: usize,
    pub region_id: usize,
    pub location: Point,
    pub request_time: Minutes,
    pub deadline: Minutes,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DayScenario {
    pub customers: Vec<Customer>,
    pub expected_demands: Vec<f64>,
}

impl DayScenario {
    pub fn empty(num_regions: usize) -> Self {
        DayScenario {
            customers: Vec::new(),
            expected_demands: vec![0.0; num_regions],
        }
    }

    pub fn requests_per_region(&self) -> Vec<u64> {
        let mut counts = vec![0; self.expected_demands.len()];
        for c in &self.customers {
            counts[c.region_id] += 1;
        }
        counts
    }
}

/// Samples one day of requests: Poisson counts per region, uniform request
/// times on the request window, region-specific locations.
pub fn sample_day<R: Rng + ?Sized>(
    geo: &Geography,
    params: &ServiceParams,
    expected_demands: &[f64],
    rng: &mut R,
) -> DayScenario {
    assert_eq!(
        expected_demands.len(),
        geo.num_regions(),
        "one expected demand per region"
    );
    let window = params.request_window;
    // (request time, region, location) in generation order
    let mut raw: Vec<(f64, usize, Point)> = Vec::new();
    for (region, &demand) in geo.regions.iter().zip(expected_demands) {
        let count = if demand > 0.0 {
            Poisson::new(demand).expect("positive finite rate").sample(rng) as usize
        } else {
            0
        };
        for _ in 0..count {
            let t = rng.random_range(0.0..=window);
            let loc = region.sample_location(rng);
            raw.push((t, region.id, loc));
        }
    }

    let mut order: Vec<usize> = (0..raw.len()).collect();
    loop {
        order.sort_by(|&a, &b| raw[a].0.total_cmp(&raw[b].0).then(a.cmp(&b)));
        let tie = order
            .windows(2)
            .find(|w| raw[w[0]].0 == raw[w[1]].0)
            .map(|w| w[0].max(w[1]));
        match tie {
            Some(later) => raw[later].0 = rng.random_range(0.0..=window),
            None => break,
        }
    }

    let customers = order
        .into_iter()
        .enumerate()
        .map(|(k, idx)| {
            let (t, region_id, location) = raw[idx];
            Customer {
                id: k,
                region_id,
                location,
                request_time: t,
                deadline: t + params.deadline_offset,
            }
        })
        .collect();
    DayScenario {
        customers,
        expected_demands: expected_demands.to_vec(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn travel_time_examples() {
        let geo = Geography {
            circuity_factor: 1.0,
            ..builtin_geography(GeographyId::A)
        };
        let p = Point::new(1.5, -2.0);
        assert_eq!(geo.travel_time(p, p), 0.0);
        let t = geo.travel_time(Point::new(0.0, 0.0), Point::new(3.0, 4.0));
        assert!((t - 10.0).abs() < 1e-12);
    }

    #[test]
    fn builtin_demands() {
        assert_eq!(builtin_geography(GeographyId::A).initial_demands(), vec![200.0, 50.0]);
        assert_eq!(
            builtin_geography(GeographyId::C).initial_demands(),
            vec![50.0, 100.0, 25.0, 75.0]
        );
        let b = builtin_geography(GeographyId::B).initial_demands();
        assert_eq!(b[0], b[1]);
        assert_eq!(builtin_geography(GeographyId::C).demand_caps(), vec![125.0; 4]);
        for id in GeographyId::ALL {
            builtin_geography(id).validate().unwrap();
        }
    }

    #[test]
    fn unknown_geography_is_config_error() {
        assert!(matches!("d".parse::<GeographyId>(), Err(Error::Config(_))));
    }

    #[test]
    fn zero_demand_gives_empty_day() {
        let geo = builtin_geography(GeographyId::A);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let day = sample_day(&geo, &ServiceParams::default(), &[0.0, 0.0], &mut rng);
        assert!(day.customers.is_empty());
    }

    #[test]
    fn day_invariants() {
        let geo = builtin_geography(GeographyId::C);
        let params = ServiceParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let day = sample_day(&geo, &params, &geo.initial_demands(), &mut rng);
            for w in day.customers.windows(2) {
                assert!(w[0].request_time < w[1].request_time);
            }
            for (k, c) in day.customers.iter().enumerate() {
                assert_eq!(c.id, k);
                assert!(c.request_time >= 0.0 && c.request_time <= params.request_window);
                assert_eq!(c.deadline, c.request_time + params.deadline_offset);
                // uniform laws keep customers inside their own square
                let r = &geo.regions[c.region_id];
                assert!(c.location.x >= r.x_shift_km && c.location.x <= r.x_shift_km + 5.0);
                assert!(c.location.y >= r.y_shift_km && c.location.y <= r.y_shift_km + 5.0);
            }
        }
    }

    #[test]
    fn replay_is_deterministic() {
        let geo = builtin_geography(GeographyId::A);
        let params = ServiceParams::default();
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..5)
                .map(|_| sample_day(&geo, &params, &geo.initial_demands(), &mut rng))
                .collect::<Vec<_>>()
        };
        let a = serde_json::to_string(&run(42)).unwrap();
        let b = serde_json::to_string(&run(42)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bounding_box_contains_region_centres() {
        let geo = builtin_geography(GeographyId::A);
        let (lo, hi) = geo.bounding_box();
        assert!(lo.x < 5.0 && hi.x > 10.0 && lo.y < 5.0 && hi.y > 5.0);
        assert!(geo.max_proxy_time() > 0.0);
    }
}
