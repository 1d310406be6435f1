//! Stylized two-region steady-state allocation.
//!
//! Region `i` is served at rate `r_i` in `[0, 1]` and attracts demand
//! `lambda_i = ln(M_i r_i + 1)`. Serving `n` customers in a region of area `A`
//! costs `beta * sqrt(n A)` resource units (BHH tour length), and the two
//! regions share a budget `T`:
//!
//! ```text
//! maximize    lambda_1 r_1 + lambda_2 r_2
//! subject to  beta sqrt(r_1 lambda_1 A) + beta sqrt(r_2 lambda_2 A) <= T
//! ```
//!
//! With the budget binding, the objective reduces to a function of `r_2`
//! alone whose only interior critical point spends exactly `T / 2` in each
//! region. [`analyze`] evaluates the resulting candidate set.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StylizedInstance {
    /// Total delivery resource `T`.
    pub total_resource: f64,
    pub area: f64,
    pub beta: f64,
    pub m1: f64,
    pub m2: f64,
}

impl StylizedInstance {
    pub fn new(total_resource: f64, area: f64, beta: f64, m1: f64, m2: f64) -> Result<Self> {
        let inst = StylizedInstance {
            total_resource,
            area,
            beta,
            m1,
            m2,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("T", self.total_resource),
            ("A", self.area),
            ("beta", self.beta),
            ("M1", self.m1),
            ("M2", self.m2),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::config(format!("steady-state: {name} must be finite and > 0")));
            }
        }
        Ok(())
    }

    fn scale(&self) -> f64 {
        self.area * self.beta * self.beta
    }

    /// `T^2 / (A beta^2)`: services when the whole budget goes to one region.
    pub fn single_region_services(&self) -> f64 {
        self.total_resource * self.total_resource / self.scale()
    }

    /// Resource spent in a region with scale `m` served at rate `r`.
    pub fn resource(&self, m: f64, r: f64) -> f64 {
        self.beta * (self.area * services(m, r)).sqrt()
    }

    /// True when serving every request in both regions fits the budget.
    pub fn is_trivial(&self) -> bool {
        self.resource(self.m1, 1.0) + self.resource(self.m2, 1.0) <= self.total_resource
    }
}

/// Demand `ln(m r + 1)`.
pub fn demand(m: f64, r: f64) -> f64 {
    (m * r).ln_1p()
}

/// Services `r ln(m r + 1)`.
pub fn services(m: f64, r: f64) -> f64 {
    r * demand(m, r)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub r1: f64,
    pub r2: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub objective: f64,
    pub resource_used: f64,
    /// `T - resource_used`.
    pub slack: f64,
}

impl Allocation {
    pub fn new(inst: &StylizedInstance, r1: f64, r2: f64) -> Self {
        let lambda1 = demand(inst.m1, r1);
        let lambda2 = demand(inst.m2, r2);
        let resource_used = inst.resource(inst.m1, r1) + inst.resource(inst.m2, r2);
        Allocation {
            r1,
            r2,
            lambda1,
            lambda2,
            objective: lambda1 * r1 + lambda2 * r2,
            resource_used,
            slack: inst.total_resource - resource_used,
        }
    }

    /// Feasible within a relative tolerance of `1e-12` on the budget.
    pub fn is_feasible(&self, inst: &StylizedInstance) -> bool {
        (0.0..=1.0).contains(&self.r1)
            && (0.0..=1.0).contains(&self.r2)
            && self.resource_used <= inst.total_resource * (1.0 + 1e-12)
    }
}

/// Objective with the budget binding, as a function of `r2` only.
pub fn reduced_objective(inst: &StylizedInstance, r2: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&r2) {
        return Err(Error::Domain(format!("r2 = {r2} outside [0, 1]")));
    }
    let t = inst.total_resource;
    let g = services(inst.m2, r2);
    let spent = inst.beta * (inst.area * g).sqrt();
    if spent > t * (1.0 + 1e-12) {
        return Err(Error::Domain(format!(
            "r2 = {r2} needs {spent} resource units, more than T = {t}"
        )));
    }
    let ab2 = inst.scale();
    Ok((t * t - 2.0 * t * spent + 2.0 * ab2 * g) / ab2)
}

/// Closed-form derivative of [`reduced_objective`]; undefined at `r2 = 0`.
pub fn objective_derivative(inst: &StylizedInstance, r2: f64) -> Result<f64> {
    if !(r2 > 0.0 && r2 <= 1.0) {
        return Err(Error::Domain(format!(
            "derivative undefined at r2 = {r2} (domain is (0, 1])"
        )));
    }
    let mr = inst.m2 * r2;
    let ln = mr.ln_1p();
    let root = (inst.area * ln * r2).sqrt();
    let first = ln + mr + ln * mr;
    let second = 2.0 * inst.beta * root - inst.total_resource;
    Ok(first * second / (inst.beta * root * (mr + 1.0)))
}

/// First numerator factor of the derivative, `ln(M r + 1) + M r + M r ln(M r + 1)`.
pub fn derivative_first_factor(m: f64, r: f64) -> f64 {
    let mr = m * r;
    let ln = mr.ln_1p();
    ln + mr + ln * mr
}

const BISECTION_ITERS: usize = 200;

/// Rate in `(0, 1]` at which a region with scale `m` consumes exactly `T / 2`,
/// or `None` if even `r = 1` consumes less.
pub fn solve_critical_for(inst: &StylizedInstance, m: f64) -> Option<f64> {
    let half = 0.5 * inst.total_resource;
    let g = |r: f64| inst.resource(m, r) - half;
    if g(1.0) < 0.0 {
        return None;
    }
    let tol = 1e-10 * inst.total_resource;
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let mut mid = 1.0;
    for _ in 0..BISECTION_ITERS {
        mid = 0.5 * (lo + hi);
        let v = g(mid);
        if v.abs() <= tol || hi - lo <= f64::EPSILON {
            break;
        }
        if v < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(mid)
}

/// Critical point of the reduction in `r2`.
pub fn solve_critical(inst: &StylizedInstance) -> Option<f64> {
    solve_critical_for(inst, inst.m2)
}

/// Rate whose service count `r ln(m r + 1)` equals `target`, clamped to 1.
pub fn rate_for_services(m: f64, target: f64) -> f64 {
    if target <= 0.0 {
        return 0.0;
    }
    if target >= services(m, 1.0) {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..BISECTION_ITERS {
        let mid = 0.5 * (lo + hi);
        if services(m, mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON {
            break;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateKind {
    /// Whole budget to region 1 (rate clamped at 1, remainder left as slack).
    AllInRegion1,
    AllInRegion2,
    /// Region 1 at rate 1, the remaining budget spent in region 2.
    Region1Saturated,
    Region2Saturated,
    /// Both regions at their critical points, `T / 2` each.
    EqualSplit,
    /// Serving everything fits the budget.
    ServeAll,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub kind: CandidateKind,
    pub allocation: Allocation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    pub instance: StylizedInstance,
    pub trivial: bool,
    pub candidates: Vec<Candidate>,
    /// Index into `candidates`.
    pub winner: usize,
    pub r1_critical: Option<f64>,
    pub r2_critical: Option<f64>,
}

impl RegimeReport {
    pub fn winner(&self) -> &Candidate {
        &self.candidates[self.winner]
    }

    pub fn candidate(&self, kind: CandidateKind) -> Option<&Candidate> {
        self.candidates.iter().find(|c| c.kind == kind)
    }

    pub fn to_table(&self) -> String {
        let mut s = format!(
            "{:<20} {:>10} {:>10} {:>12} {:>12} {:>12}\n",
            "candidate", "r1", "r2", "objective", "resource", "slack"
        );
        for (k, c) in self.candidates.iter().enumerate() {
            let a = &c.allocation;
            let name = serde_json::to_value(c.kind)
                .ok()
                .and_then(|v| v.as_str().map(str::to_owned))
                .unwrap_or_default();
            s.push_str(&format!(
                "{:<20} {:>10.6} {:>10.6} {:>12.6} {:>12.6} {:>12.3e}{}\n",
                name,
                a.r1,
                a.r2,
                a.objective,
                a.resource_used,
                a.slack,
                if k == self.winner { "  <- winner" } else { "" }
            ));
        }
        s
    }
}

/// Spends `budget` in the region with scale `m` (rate clamped to 1).
fn rate_for_budget(inst: &StylizedInstance, m: f64, budget: f64) -> f64 {
    let target = (budget.max(0.0) / inst.beta).powi(2) / inst.area;
    rate_for_services(m, target)
}

/// Evaluates the candidate allocations and picks the best.
pub fn analyze(inst: &StylizedInstance) -> RegimeReport {
    let t = inst.total_resource;
    let mut candidates = Vec::new();
    let trivial = inst.is_trivial();
    if trivial {
        candidates.push(Candidate {
            kind: CandidateKind::ServeAll,
            allocation: Allocation::new(inst, 1.0, 1.0),
        });
    } else {
        let r1 = rate_for_budget(inst, inst.m1, t);
        candidates.push(Candidate {
            kind: CandidateKind::AllInRegion1,
            allocation: Allocation::new(inst, r1, 0.0),
        });
        let r2 = rate_for_budget(inst, inst.m2, t);
        candidates.push(Candidate {
            kind: CandidateKind::AllInRegion2,
            allocation: Allocation::new(inst, 0.0, r2),
        });
        if r1 >= 1.0 {
            let rest = t - inst.resource(inst.m1, 1.0);
            candidates.push(Candidate {
                kind: CandidateKind::Region1Saturated,
                allocation: Allocation::new(inst, 1.0, rate_for_budget(inst, inst.m2, rest)),
            });
        }
        if r2 >= 1.0 {
            let rest = t - inst.resource(inst.m2, 1.0);
            candidates.push(Candidate {
                kind: CandidateKind::Region2Saturated,
                allocation: Allocation::new(inst, rate_for_budget(inst, inst.m1, rest), 1.0),
            });
        }
    }
    let r1_critical = solve_critical_for(inst, inst.m1);
    let r2_critical = solve_critical(inst);
    if let (false, Some(a), Some(b)) = (trivial, r1_critical, r2_critical) {
        candidates.push(Candidate {
            kind: CandidateKind::EqualSplit,
            allocation: Allocation::new(inst, a, b),
        });
    }
    let winner = candidates
        .iter()
        .enumerate()
        .fold(0, |best, (k, c)| {
            if c.allocation.objective > candidates[best].allocation.objective {
                k
            } else {
                best
            }
        });
    RegimeReport {
        instance: *inst,
        trivial,
        candidates,
        winner,
        r1_critical,
        r2_critical,
    }
}

/// Improving move away from a slack allocation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BindingWitness {
    pub delta: f64,
    pub before: Allocation,
    pub after: Allocation,
    /// `lambda_1 * delta` with `lambda_1` held at its value before the move.
    pub fixed_demand_gain: f64,
    /// Actual objective change; at least `fixed_demand_gain` since demand
    /// grows with the service rate.
    pub objective_gain: f64,
}

/// For a feasible allocation with strict slack and `r1 < 1`, raises `r1` by
/// half the room left before the budget or the rate bound binds.
pub fn verify_binding(inst: &StylizedInstance, r1: f64, r2: f64) -> Result<BindingWitness> {
    let before = Allocation::new(inst, r1, r2);
    if !(0.0..1.0).contains(&r1) || !(0.0..=1.0).contains(&r2) {
        return Err(Error::Contract(format!(
            "need 0 <= r1 < 1 and 0 <= r2 <= 1, got ({r1}, {r2})"
        )));
    }
    if !(before.slack > 0.0) {
        return Err(Error::Contract(format!(
            "allocation ({r1}, {r2}) has no slack ({})",
            before.slack
        )));
    }
    let budget_for_1 = inst.total_resource - inst.resource(inst.m2, r2);
    let reach = rate_for_budget(inst, inst.m1, budget_for_1).min(1.0);
    let delta = 0.5 * (reach - r1);
    if !(delta > 0.0) {
        return Err(Error::Contract(format!(
            "no admissible step from ({r1}, {r2})"
        )));
    }
    let after = Allocation::new(inst, r1 + delta, r2);
    debug_assert!(after.slack > 0.0);
    Ok(BindingWitness {
        delta,
        before,
        after,
        fixed_demand_gain: before.lambda1 * delta,
        objective_gain: after.objective - before.objective,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inst() -> StylizedInstance {
        StylizedInstance::new(10.0, 4.0, 1.0, 30.0, 20.0).unwrap()
    }

    #[test]
    fn reduced_objective_at_zero() {
        let i = inst();
        assert_eq!(reduced_objective(&i, 0.0).unwrap(), 25.0);
        assert_eq!(reduced_objective(&i, 0.0).unwrap(), i.single_region_services());
    }

    #[test]
    fn derivative_undefined_at_zero() {
        assert!(matches!(objective_derivative(&inst(), 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn overspending_r2_is_domain_error() {
        let small = StylizedInstance::new(0.5, 4.0, 1.0, 30.0, 20.0).unwrap();
        assert!(matches!(reduced_objective(&small, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn critical_point_spends_half() {
        let i = StylizedInstance::new(6.0, 4.0, 1.0, 30.0, 20.0).unwrap();
        let r = solve_critical(&i).unwrap();
        assert!((i.resource(i.m2, r) - 3.0).abs() <= 1e-8);
        assert!(objective_derivative(&i, r).unwrap().abs() < 1e-8);
    }

    #[test]
    fn no_critical_point_with_large_budget() {
        let i = StylizedInstance::new(100.0, 4.0, 1.0, 30.0, 20.0).unwrap();
        assert!(solve_critical(&i).is_none());
    }

    #[test]
    fn trivial_case_serves_all() {
        let i = StylizedInstance::new(100.0, 4.0, 1.0, 30.0, 20.0).unwrap();
        let rep = analyze(&i);
        assert!(rep.trivial);
        assert_eq!(rep.winner().allocation.r1, 1.0);
        assert_eq!(rep.winner().allocation.r2, 1.0);
    }

    #[test]
    fn symmetric_instance_ties() {
        let i = StylizedInstance::new(3.0, 2.0, 1.0, 15.0, 15.0).unwrap();
        let rep = analyze(&i);
        let a = rep.candidate(CandidateKind::AllInRegion1).unwrap().allocation.objective;
        let b = rep.candidate(CandidateKind::AllInRegion2).unwrap().allocation.objective;
        assert_eq!(a, b);
    }

    #[test]
    fn binding_point_has_no_witness() {
        let i = StylizedInstance::new(3.0, 4.0, 1.0, 30.0, 20.0).unwrap();
        let r2 = 0.3;
        let r1 = rate_for_budget(&i, i.m1, i.total_resource - i.resource(i.m2, r2));
        assert!(r1 < 1.0);
        assert!(matches!(verify_binding(&i, r1, r2), Err(Error::Contract(_))));
    }

    #[test]
    fn slack_point_witness_improves() {
        let i = StylizedInstance::new(3.0, 4.0, 1.0, 30.0, 20.0).unwrap();
        let w = verify_binding(&i, 0.1, 0.1).unwrap();
        assert!(w.delta > 0.0);
        assert!(w.fixed_demand_gain > 0.0);
        assert!(w.objective_gain >= w.fixed_demand_gain);
        assert!(w.after.slack > 0.0);
    }
}
