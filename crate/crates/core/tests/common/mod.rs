#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sdd_core::dqn::{backward, batch_loss, QNetwork};
use sdd_core::instance::{Customer, Geography, Point, ServiceParams};
use sdd_core::intraday::{Decision, DecisionPoint};
use sdd_core::policies::Policy;
use sdd_core::routing::{InsertionPosition, VehiclePlan};

/// Driving minutes from first principles.
pub fn minutes(geo: &Geography, a: Point, b: Point) -> f64 {
    let km = ((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt();
    km * geo.circuity_factor / geo.speed_kmh * 60.0
}

fn trip_travel(geo: &Geography, stops: &[Customer]) -> f64 {
    let mut at = geo.warehouse;
    let mut t = 0.0;
    for c in stops {
        t += minutes(geo, at, c.location);
        at = c.location;
    }
    t + minutes(geo, at, geo.warehouse)
}

/// Earliest-departure simulation of the open trips: every trip leaves as
/// soon as the vehicle is back. Feasible iff some schedule is.
pub fn forward_feasible(
    ready: f64,
    trips: &[Vec<Customer>],
    geo: &Geography,
    params: &ServiceParams,
) -> bool {
    let mut t0 = ready;
    for stops in trips {
        let mut t = t0 + params.load_time;
        let mut at = geo.warehouse;
        for (k, c) in stops.iter().enumerate() {
            if k > 0 {
                t += params.service_time;
            }
            t += minutes(geo, at, c.location);
            if t > c.deadline + 1e-7 {
                return false;
            }
            at = c.location;
        }
        t += params.service_time + minutes(geo, at, geo.warehouse);
        t0 = t;
    }
    t0 <= params.shift_end + 1e-7
}

pub struct OracleInsertion {
    pub feasible: bool,
    pub delta: f64,
    pub position: Option<InsertionPosition>,
    /// Every feasible candidate with its delta, in rank order.
    pub candidates: Vec<(InsertionPosition, f64)>,
}

/// Enumerates every insertion position and re-simulates the whole plan.
pub fn brute_force_insertion(
    plan: &VehiclePlan,
    c: &Customer,
    now: f64,
    geo: &Geography,
    params: &ServiceParams,
) -> OracleInsertion {
    let ready = plan
        .current_trip
        .as_ref()
        .map_or(plan.available_at, |t| t.return_time)
        .max(now);
    let base: Vec<Vec<Customer>> = plan.pending_trips.iter().map(|t| t.stops.clone()).collect();
    let base_travel: f64 = base.iter().map(|s| trip_travel(geo, s)).sum();
    let mut candidates = Vec::new();
    for j in 0..base.len() {
        for pos in 0..=base[j].len() {
            let mut trips = base.clone();
            trips[j].insert(pos, c.clone());
            if forward_feasible(ready, &trips, geo, params) {
                let travel: f64 = trips.iter().map(|s| trip_travel(geo, s)).sum();
                candidates.push((InsertionPosition::Stop { trip: j, stop: pos }, travel - base_travel));
            }
        }
    }
    let mut trips = base.clone();
    trips.push(vec![c.clone()]);
    if forward_feasible(ready, &trips, geo, params) {
        candidates.push((InsertionPosition::NewTrip, trip_travel(geo, &[c.clone()])));
    }
    let best = candidates.iter().map(|x| x.1).fold(f64::INFINITY, f64::min);
    let pick = candidates.iter().find(|x| x.1 <= best + 1e-9);
    OracleInsertion {
        feasible: pick.is_some(),
        delta: best,
        position: pick.map(|x| x.0),
        candidates,
    }
}

/// Largest relative error between analytic and central-difference gradients
/// of the batch loss on a random network.
pub fn gradient_check(seed: u64, sizes: &[usize], batch: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = QNetwork::new(sizes, sizes[sizes.len() - 1] - 1, &mut rng);
    let xs: Vec<Vec<f64>> = (0..batch)
        .map(|_| (0..sizes[0]).map(|_| rng.random::<f64>()).collect())
        .collect();
    let acts: Vec<usize> = (0..batch).map(|_| rng.random_range(0..*sizes.last().unwrap())).collect();
    let targets: Vec<f64> = (0..batch).map(|_| rng.random_range(-2.0..2.0)).collect();
    let b: Vec<(&[f64], usize)> = xs.iter().zip(&acts).map(|(x, &a)| (x.as_slice(), a)).collect();
    let (_, grads) = backward(&net, &b, &targets);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for k in 0..net.layers.len() {
        let n_w = net.layers[k].weights.len();
        for p in 0..n_w + net.layers[k].bias.len() {
            let mut plus = net.clone();
            let mut minus = net.clone();
            let (analytic, pv, mv) = if p < n_w {
                plus.layers[k].weights[p] += h;
                minus.layers[k].weights[p] -= h;
                (grads.layers[k].0[p], &plus, &minus)
            } else {
                plus.layers[k].bias[p - n_w] += h;
                minus.layers[k].bias[p - n_w] -= h;
                (grads.layers[k].1[p - n_w], &plus, &minus)
            };
            let numeric = (batch_loss(pv, &b, &targets) - batch_loss(mv, &b, &targets)) / (2.0 * h);
            let scale = analytic.abs().max(numeric.abs());
            if scale > 1e-7 {
                worst = worst.max((analytic - numeric).abs() / scale);
            }
        }
    }
    worst
}

pub struct RejectAll;

impl Policy for RejectAll {
    fn name(&self) -> &str {
        "reject-all"
    }

    fn requires_training(&self) -> bool {
        false
    }

    fn decide(&self, _: &DecisionPoint<'_>, _: &Geography) -> Decision {
        Decision::REJECT
    }
}

/// Uniformly random feasible decision, seeded per customer.
pub struct RandomFeasible(pub u64);

impl Policy for RandomFeasible {
    fn name(&self) -> &str {
        "random"
    }

    fn requires_training(&self) -> bool {
        false
    }

    fn decide(&self, point: &DecisionPoint<'_>, _: &Geography) -> Decision {
        let c = point.state.pending_customer;
        let mut rng = ChaCha8Rng::seed_from_u64(self.0 ^ (c.id as u64).wrapping_mul(0x9E37));
        let f = point.feasible();
        f[rng.random_range(0..f.len())]
    }
}
