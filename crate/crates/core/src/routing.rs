//! Multi-trip vehicle plans and cheapest insertion.
//!
//! A vehicle runs a sequence of warehouse round trips. The trip that has left
//! the warehouse is locked and never modified; trips still waiting at the
//! warehouse are open for insertions. Every open trip is scheduled to depart
//! at its latest feasible time: the largest departure that keeps all of its
//! deadlines, all later trips' deadlines, and the end-of-shift return.

use serde::{Deserialize, Serialize};

use crate::instance::{Customer, Geography, Minutes, ServiceParams};

/// Slack for floating-point time comparisons.
pub const TIME_EPS: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trip {
    pub departure_time: Minutes,
    pub stops: Vec<Customer>,
    pub return_time: Minutes,
    pub locked: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Delivery {
    pub customer_id: usize,
    pub region_id: usize,
    pub vehicle_id: usize,
    pub time: Minutes,
    pub deadline: Minutes,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VehiclePlan {
    pub vehicle_id: usize,
    pub current_trip: Option<Trip>,
    pub pending_trips: Vec<Trip>,
    /// Earliest time the vehicle is back at the warehouse from completed trips.
    pub available_at: Minutes,
    pub delivered: Vec<Delivery>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum InsertionPosition {
    /// Insert before `stop` (0..=len) in pending trip `trip`.
    Stop { trip: usize, stop: usize },
    /// Append a new single-stop trip after all pending trips.
    NewTrip,
}

impl InsertionPosition {
    /// Lexicographic rank used for tie-breaking.
    pub fn order_key(self, pending: usize) -> (usize, usize) {
        match self {
            InsertionPosition::Stop { trip, stop } => (trip, stop),
            InsertionPosition::NewTrip => (pending, 0),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InsertionResult {
    pub feasible: bool,
    /// Added driving time; `f64::INFINITY` when infeasible.
    pub delta_time: Minutes,
    pub position: Option<InsertionPosition>,
}

impl InsertionResult {
    pub const INFEASIBLE: InsertionResult = InsertionResult {
        feasible: false,
        delta_time: f64::INFINITY,
        position: None,
    };
}

/// Timing summary of a trip relative to its departure.
#[derive(Clone, Copy, Debug, PartialEq)]
struct TripProfile {
    duration: Minutes,
    /// Latest departure meeting every stop deadline (ignoring the shift end).
    latest_departure: Minutes,
    travel: Minutes,
}

fn profile<'a>(
    geo: &Geography,
    params: &ServiceParams,
    stops: impl IntoIterator<Item = &'a Customer>,
) -> TripProfile {
    let mut at = geo.warehouse;
    let mut offset = params.load_time;
    let mut travel = 0.0;
    let mut latest = f64::INFINITY;
    let mut first = true;
    for c in stops {
        if !first {
            offset += params.service_time;
        }
        first = false;
        let leg = geo.travel_time(at, c.location);
        travel += leg;
        offset += leg;
        latest = latest.min(c.deadline - offset);
        at = c.location;
    }
    if !first {
        offset += params.service_time;
    }
    let back = geo.travel_time(at, geo.warehouse);
    TripProfile {
        duration: offset + back,
        latest_departure: latest,
        travel: travel + back,
    }
}

/// Latest departures of a chain of open trips, or `None` if the chain cannot
/// start at `earliest`.
fn latest_schedule(
    profiles: &[TripProfile],
    earliest: Minutes,
    shift_end: Minutes,
) -> Option<Vec<Minutes>> {
    let mut deps = vec![0.0; profiles.len()];
    let mut bound = shift_end;
    for (j, p) in profiles.iter().enumerate().rev() {
        let dep = p.latest_departure.min(bound - p.duration);
        deps[j] = dep;
        bound = dep;
    }
    match deps.first() {
        Some(&first) if first + TIME_EPS < earliest => None,
        _ => Some(deps),
    }
}

fn chain_feasible(profiles: &[TripProfile], earliest: Minutes, shift_end: Minutes) -> bool {
    let mut bound = shift_end;
    for p in profiles.iter().rev() {
        bound = p.latest_departure.min(bound - p.duration);
    }
    profiles.is_empty() || bound + TIME_EPS >= earliest
}

impl Trip {
    pub fn travel_time(&self, geo: &Geography) -> Minutes {
        let mut at = geo.warehouse;
        let mut total = 0.0;
        for c in &self.stops {
            total += geo.travel_time(at, c.location);
            at = c.location;
        }
        total + geo.travel_time(at, geo.warehouse)
    }

    /// Arrival time at each stop for the trip's departure time.
    pub fn arrival_times(&self, geo: &Geography, params: &ServiceParams) -> Vec<Minutes> {
        let mut at = geo.warehouse;
        let mut t = self.departure_time + params.load_time;
        let mut out = Vec::with_capacity(self.stops.len());
        for (k, c) in self.stops.iter().enumerate() {
            if k > 0 {
                t += params.service_time;
            }
            t += geo.travel_time(at, c.location);
            out.push(t);
            at = c.location;
        }
        out
    }
}

impl VehiclePlan {
    pub fn new(vehicle_id: usize) -> Self {
        VehiclePlan {
            vehicle_id,
            current_trip: None,
            pending_trips: Vec::new(),
            available_at: 0.0,
            delivered: Vec::new(),
        }
    }

    /// Time the vehicle is back at the warehouse after its last planned trip.
    pub fn final_return(&self) -> Minutes {
        self.pending_trips
            .last()
            .or(self.current_trip.as_ref())
            .map_or(self.available_at, |t| t.return_time)
    }

    fn ready_at(&self) -> Minutes {
        self.current_trip
            .as_ref()
            .map_or(self.available_at, |t| t.return_time)
    }

    /// Driving time of the locked and open trips.
    pub fn travel_time(&self, geo: &Geography) -> Minutes {
        self.current_trip
            .iter()
            .chain(&self.pending_trips)
            .map(|t| t.travel_time(geo))
            .sum()
    }

    pub fn pending_customers(&self) -> impl Iterator<Item = &Customer> {
        self.current_trip
            .iter()
            .chain(&self.pending_trips)
            .flat_map(|t| t.stops.iter())
    }

    pub fn stop_count(&self) -> usize {
        self.pending_customers().count()
    }

    fn reschedule(&mut self, geo: &Geography, params: &ServiceParams) {
        let profiles: Vec<TripProfile> = self
            .pending_trips
            .iter()
            .map(|t| profile(geo, params, &t.stops))
            .collect();
        let deps = latest_schedule(&profiles, f64::NEG_INFINITY, params.shift_end)
            .expect("unbounded earliest start is always schedulable");
        for ((trip, p), dep) in self.pending_trips.iter_mut().zip(&profiles).zip(deps) {
            trip.departure_time = dep;
            trip.return_time = dep + p.duration;
        }
    }
}

/// Cheapest feasible insertion of `c` into the open trips of `plan` at time `now`.
///
/// Ties (within `TIME_EPS`) go to the lowest (trip, stop) position; a new trip ranks after every
/// existing trip.
pub fn cheapest_insertion(
    plan: &VehiclePlan,
    c: &Customer,
    now: Minutes,
    geo: &Geography,
    params: &ServiceParams,
) -> InsertionResult {
    let earliest = plan.ready_at().max(now);
    let base: Vec<TripProfile> = plan
        .pending_trips
        .iter()
        .map(|t| profile(geo, params, &t.stops))
        .collect();
    let mut best = InsertionResult::INFEASIBLE;
    let mut scratch = base.clone();

    for (j, trip) in plan.pending_trips.iter().enumerate() {
        for pos in 0..=trip.stops.len() {
            let stops = trip.stops[..pos]
                .iter()
                .chain(std::iter::once(c))
                .chain(&trip.stops[pos..]);
            let p = profile(geo, params, stops);
            let delta = p.travel - base[j].travel;
            if delta + TIME_EPS < best.delta_time {
                scratch[j] = p;
                if chain_feasible(&scratch, earliest, params.shift_end) {
                    best = InsertionResult {
                        feasible: true,
                        delta_time: delta.max(0.0),
                        position: Some(InsertionPosition::Stop { trip: j, stop: pos }),
                    };
                }
                scratch[j] = base[j];
            }
        }
    }

    let p = profile(geo, params, std::iter::once(c));
    if p.travel + TIME_EPS < best.delta_time {
        scratch.push(p);
        if chain_feasible(&scratch, earliest, params.shift_end) {
            best = InsertionResult {
                feasible: true,
                delta_time: p.travel,
                position: Some(InsertionPosition::NewTrip),
            };
        }
    }
    best
}

/// Returns `plan` with `c` inserted at `result.position`.
///
/// # Panics
///
/// If `result` is infeasible.
pub fn apply_insertion(
    plan: &VehiclePlan,
    c: &Customer,
    result: &InsertionResult,
    geo: &Geography,
    params: &ServiceParams,
) -> VehiclePlan {
    assert!(result.feasible, "applying an infeasible insertion");
    let mut next = plan.clone();
    match result.position.expect("feasible insertion has a position") {
        InsertionPosition::Stop { trip, stop } => {
            next.pending_trips[trip].stops.insert(stop, c.clone());
        }
        InsertionPosition::NewTrip => next.pending_trips.push(Trip {
            departure_time: 0.0,
            stops: vec![c.clone()],
            return_time: 0.0,
            locked: false,
        }),
    }
    next.reschedule(geo, params);
    next
}

/// Moves the plan forward to `to_time`: finished trips are recorded as
/// deliveries and open trips whose scheduled departure has passed are locked.
pub fn advance_plan(
    plan: &VehiclePlan,
    to_time: Minutes,
    geo: &Geography,
    params: &ServiceParams,
) -> VehiclePlan {
    let mut next = plan.clone();
    advance_in_place(&mut next, to_time, geo, params);
    next
}

pub(crate) fn advance_in_place(
    plan: &mut VehiclePlan,
    to_time: Minutes,
    geo: &Geography,
    params: &ServiceParams,
) {
    loop {
        if let Some(trip) = &plan.current_trip {
            if trip.return_time <= to_time {
                let trip = plan.current_trip.take().expect("checked above");
                let arrivals = trip.arrival_times(geo, params);
                for (c, t) in trip.stops.iter().zip(arrivals) {
                    plan.delivered.push(Delivery {
                        customer_id: c.id,
                        region_id: c.region_id,
                        vehicle_id: plan.vehicle_id,
                        time: t,
                        deadline: c.deadline,
                    });
                }
                plan.available_at = trip.return_time;
                continue;
            }
            break;
        }
        match plan.pending_trips.first() {
            Some(trip) if trip.departure_time <= to_time => {
                let mut trip = plan.pending_trips.remove(0);
                trip.locked = true;
                plan.current_trip = Some(trip);
            }
            _ => break,
        }
    }
}

/// Full feasibility audit of a plan; returns a description of the first
/// violation found.
pub fn validate_plan(
    plan: &VehiclePlan,
    geo: &Geography,
    params: &ServiceParams,
) -> Result<(), String> {
    let mut ready = plan.available_at;
    for (k, trip) in plan.current_trip.iter().chain(&plan.pending_trips).enumerate() {
        if trip.departure_time + TIME_EPS < ready {
            return Err(format!("trip {k} departs at {} before {ready}", trip.departure_time));
        }
        let p = profile(geo, params, &trip.stops);
        if (trip.return_time - (trip.departure_time + p.duration)).abs() > 1e-6 {
            return Err(format!("trip {k} return time inconsistent"));
        }
        for (c, t) in trip.stops.iter().zip(trip.arrival_times(geo, params)) {
            if t > c.deadline + TIME_EPS {
                return Err(format!("customer {} reached at {t} after deadline {}", c.id, c.deadline));
            }
        }
        if trip.stops.is_empty() {
            return Err(format!("trip {k} is empty"));
        }
        ready = trip.return_time;
    }
    if ready > params.shift_end + TIME_EPS {
        return Err(format!("vehicle returns at {ready} after shift end"));
    }
    if plan.current_trip.as_ref().is_some_and(|t| !t.locked) {
        return Err("current trip not locked".into());
    }
    if plan.pending_trips.iter().any(|t| t.locked) {
        return Err("open trip marked locked".into());
    }
    for d in &plan.delivered {
        if d.time > d.deadline + TIME_EPS || d.time > params.shift_end + TIME_EPS {
            return Err(format!("customer {} delivered late", d.customer_id));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{builtin_geography, GeographyId, Point};

    fn customer(id: usize, x: f64, y: f64, t: f64, params: &ServiceParams) -> Customer {
        Customer {
            id,
            region_id: 0,
            location: Point::new(x, y),
            request_time: t,
            deadline: t + params.deadline_offset,
        }
    }

    #[test]
    fn empty_plan_new_trip() {
        let geo = builtin_geography(GeographyId::A);
        let params = ServiceParams::default();
        let c = customer(0, 5.0, 5.0, 10.0, &params);
        let res = cheapest_insertion(&VehiclePlan::new(0), &c, 10.0, &geo, &params);
        assert!(res.feasible);
        assert_eq!(res.position, Some(InsertionPosition::NewTrip));
        let out_back = 2.0 * geo.travel_time(geo.warehouse, c.location);
        assert!((res.delta_time - out_back).abs() < 1e-12);
    }

    #[test]
    fn unreachable_deadline_is_infeasible() {
        let geo = builtin_geography(GeographyId::A);
        let params = ServiceParams {
            deadline_offset: 5.0,
            ..ServiceParams::default()
        };
        // 10 km away: over 20 minutes of driving
        let c = customer(0, 17.5, 5.0, 0.0, &params);
        assert!(!cheapest_insertion(&VehiclePlan::new(0), &c, 0.0, &geo, &params).feasible);
    }

    #[test]
    fn shift_end_binds() {
        let geo = builtin_geography(GeographyId::A);
        let params = ServiceParams::default();
        let c = customer(0, 0.0, 0.0, 419.0, &params);
        // deadline is fine but the vehicle cannot return by 480
        let far = customer(1, -20.0, 5.0, 419.0, &params);
        assert!(cheapest_insertion(&VehiclePlan::new(0), &c, 419.0, &geo, &params).feasible);
        assert!(!cheapest_insertion(&VehiclePlan::new(0), &far, 419.0, &geo, &params).feasible);
    }

    #[test]
    fn apply_adds_exactly_one_stop() {
        let geo = builtin_geography(GeographyId::A);
        let params = ServiceParams::default();
        let mut plan = VehiclePlan::new(0);
        for k in 0..6 {
            let c = customer(k, 4.0 + k as f64, 3.0, 10.0 * k as f64, &params);
            plan = advance_plan(&plan, c.request_time, &geo, &params);
            let res = cheapest_insertion(&plan, &c, c.request_time, &geo, &params);
            assert!(res.feasible);
            let before = plan.stop_count();
            let old_tt = plan.travel_time(&geo);
            let next = apply_insertion(&plan, &c, &res, &geo, &params);
            assert_eq!(next.stop_count(), before + 1);
            assert!((next.travel_time(&geo) - old_tt - res.delta_time).abs() < 1e-6);
            validate_plan(&next, &geo, &params).unwrap();
            plan = next;
        }
    }

    #[test]
    #[should_panic(expected = "infeasible")]
    fn applying_infeasible_panics() {
        let geo = builtin_geography(GeographyId::A);
        let params = ServiceParams::default();
        let c = customer(0, 1.0, 1.0, 0.0, &params);
        apply_insertion(&VehiclePlan::new(0), &c, &InsertionResult::INFEASIBLE, &geo, &params);
    }

    #[test]
    fn advance_to_zero_and_horizon() {
        let geo = builtin_geography(GeographyId::A);
        let params = ServiceParams::default();
        let c = customer(0, 5.0, 5.0, 0.0, &params);
        let res = cheapest_insertion(&VehiclePlan::new(0), &c, 0.0, &geo, &params);
        let plan = apply_insertion(&VehiclePlan::new(0), &c, &res, &geo, &params);
        assert_eq!(advance_plan(&plan, 0.0, &geo, &params), plan);
        let done = advance_plan(&plan, params.shift_end, &geo, &params);
        assert!(done.current_trip.is_none() && done.pending_trips.is_empty());
        assert_eq!(done.delivered.len(), 1);
        assert!(done.delivered[0].time <= c.deadline);
    }

    #[test]
    fn latest_departure_waits_for_consolidation() {
        let geo = builtin_geography(GeographyId::A);
        let params = ServiceParams::default();
        let c = customer(0, 5.0, 5.0, 0.0, &params);
        let res = cheapest_insertion(&VehiclePlan::new(0), &c, 0.0, &geo, &params);
        let plan = apply_insertion(&VehiclePlan::new(0), &c, &res, &geo, &params);
        let trip = &plan.pending_trips[0];
        let arrival = trip.arrival_times(&geo, &params)[0];
        assert!((arrival - c.deadline).abs() < 1e-9);
    }
}
