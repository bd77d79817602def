//! Domain types, the chance-constrained feasibility test, the cost objective
//! and the solution metrics shared by every solver.
//!
//! All types are value objects; operations are pure functions over them.
//! Intervals are half-open `[start, end)` throughout, so the duration of an
//! application or instance is always `end - start`.

mod quantile;

pub use quantile::standard_normal_quantile;

use crate::error::{Error, Result};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

/// Identifier of an application.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AppId(pub u32);

/// Identifier of a purchasable instance type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TypeId(pub u32);

/// Identifier of an allocated instance within a portfolio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct InstanceId(pub u32);

impl fmt::Display for AppId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for TypeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for InstanceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Purchasing channel of an instance type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Market {
    Reserved,
    OnDemand,
    Spot,
}

impl Market {
    /// Whether instances of this market may only host preemptible apps.
    pub fn spot_only(self) -> bool {
        self == Market::Spot
    }
}

impl fmt::Display for Market {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Market::Reserved => "reserved",
            Market::OnDemand => "on-demand",
            Market::Spot => "spot",
        };
        f.write_str(s)
    }
}

/// A workload with a fixed lifespan and a normally distributed resource
/// demand per time slot.
#[derive(Debug, Clone, PartialEq)]
pub struct Application {
    pub id: AppId,
    /// First slot of the lifespan.
    pub start: u32,
    /// One past the last slot of the lifespan.
    pub end: u32,
    /// Whether the app tolerates revocation and may run on spot instances.
    pub preemptible: bool,
    /// Expected demand per slot.
    pub demand_mean: f64,
    /// Standard deviation of the demand per slot.
    pub demand_std: f64,
}

impl Application {
    pub fn duration(&self) -> u32 {
        self.end - self.start
    }

    pub fn slots(&self) -> std::ops::Range<u32> {
        self.start..self.end
    }

    pub fn demand_var(&self) -> f64 {
        self.demand_std * self.demand_std
    }
}

/// A purchasable machine profile.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceType {
    pub id: TypeId,
    pub market: Market,
    /// Resource capacity per slot.
    pub capacity: f64,
    /// Price per slot of up-time.
    pub price_per_slot: f64,
    /// Minimum allocation period in slots; 1 for on-demand and spot types.
    pub min_term: u32,
}

/// An instance bought for a span of time slots.
///
/// A reserved instance is billed for its full span regardless of occupancy,
/// and its span is at least the type's minimum term.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AllocatedInstance {
    pub id: InstanceId,
    pub type_ref: TypeId,
    pub start: u32,
    pub end: u32,
}

impl AllocatedInstance {
    pub fn duration(&self) -> u32 {
        self.end - self.start
    }

    pub fn covers(&self, t0: u32, t1: u32) -> bool {
        self.start <= t0 && t1 <= self.end
    }
}

/// Aggregated demand of a set of independent normally distributed workloads.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DemandDistribution {
    /// Sum of demand means.
    pub mean_sum: f64,
    /// Sum of demand variances.
    pub var_sum: f64,
}

impl DemandDistribution {
    pub fn new(mean_sum: f64, var_sum: f64) -> Self {
        Self { mean_sum, var_sum }
    }

    /// Sums the given applications in iteration order.
    pub fn from_apps<'a>(apps: impl IntoIterator<Item = &'a Application>) -> Self {
        let mut d = Self::default();
        for a in apps {
            d.mean_sum += a.demand_mean;
            d.var_sum += a.demand_var();
        }
        d
    }
}

/// A solution: the bought instances plus the per-slot assignment map.
///
/// A present `(app, slot) -> instance` entry means the app runs on that
/// instance during that slot; absence means unassigned. The map structure
/// makes per-slot hosts unique by construction.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Portfolio {
    pub instances: BTreeMap<InstanceId, AllocatedInstance>,
    pub assignments: BTreeMap<(AppId, u32), InstanceId>,
}

impl Portfolio {
    pub fn is_empty(&self) -> bool {
        self.instances.is_empty() && self.assignments.is_empty()
    }

    /// Per-instance, per-slot membership sets, derived from the assignments.
    pub fn slot_members(&self) -> BTreeMap<InstanceId, BTreeMap<u32, BTreeSet<AppId>>> {
        let mut index: BTreeMap<InstanceId, BTreeMap<u32, BTreeSet<AppId>>> = BTreeMap::new();
        for (&(app, slot), &inst) in &self.assignments {
            index.entry(inst).or_default().entry(slot).or_default().insert(app);
        }
        index
    }

    /// Distinct instances hosting the given app.
    pub fn hosts_of(&self, app: AppId) -> BTreeSet<InstanceId> {
        self.assignments
            .range((app, 0)..=(app, u32::MAX))
            .map(|(_, &inst)| inst)
            .collect()
    }
}

/// Solver input: applications, the type catalog, the planning horizon and
/// the required per-slot success probability.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    pub applications: Vec<Application>,
    pub catalog: Vec<InstanceType>,
    /// Number of time slots; app lifespans lie within `[0, horizon)`.
    pub horizon: u32,
    /// Minimum probability that aggregated demand stays within capacity.
    pub q_min: f64,
}

impl ProblemInstance {
    /// Builds a problem and runs load-time validation: interval and demand
    /// invariants per app, catalog invariants per type, unique ids, and the
    /// existence of a market-compatible type able to host each app alone.
    pub fn new(
        applications: Vec<Application>,
        catalog: Vec<InstanceType>,
        horizon: u32,
        q_min: f64,
    ) -> Result<Self> {
        let problem = Self { applications, catalog, horizon, q_min };
        problem.check()?;
        Ok(problem)
    }

    /// Load-time validation as performed by [`ProblemInstance::new`].
    pub fn check(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.q_min) {
            return Err(Error::ProbabilityOutOfRange { what: "q_min", value: self.q_min });
        }
        let mut app_ids = BTreeSet::new();
        for a in &self.applications {
            if !app_ids.insert(a.id) {
                return Err(Error::InvalidProblem(format!("duplicate application id {}", a.id)));
            }
            if a.start >= a.end {
                return Err(Error::InvalidProblem(format!(
                    "application {} has empty lifespan [{}, {})",
                    a.id, a.start, a.end
                )));
            }
            if a.end > self.horizon {
                return Err(Error::InvalidProblem(format!(
                    "application {} ends at {} beyond horizon {}",
                    a.id, a.end, self.horizon
                )));
            }
            let mean_ok = a.demand_mean.is_finite() && a.demand_mean > 0.0;
            if !mean_ok {
                return Err(Error::InvalidProblem(format!(
                    "application {} needs demand_mean > 0",
                    a.id
                )));
            }
            let std_ok = a.demand_std.is_finite() && a.demand_std >= 0.0;
            if !std_ok {
                return Err(Error::InvalidProblem(format!(
                    "application {} needs demand_std >= 0",
                    a.id
                )));
            }
        }
        let mut type_ids = BTreeSet::new();
        for t in &self.catalog {
            if !type_ids.insert(t.id) {
                return Err(Error::InvalidProblem(format!("duplicate type id {}", t.id)));
            }
            let capacity_ok = t.capacity.is_finite() && t.capacity > 0.0;
            if !capacity_ok {
                return Err(Error::InvalidProblem(format!("type {} needs capacity > 0", t.id)));
            }
            let price_ok = t.price_per_slot.is_finite() && t.price_per_slot > 0.0;
            if !price_ok {
                return Err(Error::InvalidProblem(format!(
                    "type {} needs price_per_slot > 0",
                    t.id
                )));
            }
            if t.min_term < 1 {
                return Err(Error::InvalidProblem(format!("type {} needs min_term >= 1", t.id)));
            }
            if t.market != Market::Reserved && t.min_term != 1 {
                return Err(Error::InvalidProblem(format!(
                    "type {} is {} and must have min_term 1",
                    t.id, t.market
                )));
            }
        }
        // Every app must fit alone on at least one market-compatible type,
        // otherwise the problem is unsolvable regardless of algorithm.
        let z = standard_normal_quantile(self.q_min);
        for a in &self.applications {
            let fits_somewhere = self.catalog.iter().any(|t| {
                (a.preemptible || !t.market.spot_only())
                    && feasible_with_z(a.demand_mean, a.demand_var(), t.capacity, z)
            });
            if !fits_somewhere {
                return Err(Error::UnsolvableApp(a.id));
            }
        }
        Ok(())
    }

    pub fn app(&self, id: AppId) -> Option<&Application> {
        self.applications.iter().find(|a| a.id == id)
    }

    pub fn instance_type(&self, id: TypeId) -> Option<&InstanceType> {
        self.catalog.iter().find(|t| t.id == id)
    }
}

/// Capacity check with a precomputed quantile; `z` is
/// `standard_normal_quantile(q_min)`. The degenerate zero-variance case
/// compares means directly so infinite quantiles cannot poison the result.
pub(crate) fn feasible_with_z(mean_sum: f64, var_sum: f64, capacity: f64, z: f64) -> bool {
    if var_sum <= 0.0 {
        mean_sum <= capacity
    } else {
        mean_sum + z * var_sum.sqrt() <= capacity
    }
}

/// Aggregated demand hosted by `instance` at `slot`: the sum of demand means
/// and variances over all applications assigned there. An empty slot yields
/// `(0, 0)`.
pub fn aggregated_demand(
    portfolio: &Portfolio,
    instance: InstanceId,
    slot: u32,
    problem: &ProblemInstance,
) -> Result<DemandDistribution> {
    if !portfolio.instances.contains_key(&instance) {
        return Err(Error::UnknownInstance(instance));
    }
    let mut demand = DemandDistribution::default();
    for (&(app, t), &inst) in &portfolio.assignments {
        if inst != instance || t != slot {
            continue;
        }
        let a = problem.app(app).ok_or(Error::UnknownApp(app))?;
        demand.mean_sum += a.demand_mean;
        demand.var_sum += a.demand_var();
    }
    Ok(demand)
}

/// The chance constraint in deterministic-equivalent form: the demand stays
/// within `capacity` with probability at least `q_min` iff
/// `mean_sum + z(q_min) * sqrt(var_sum) <= capacity`. With zero variance the
/// check degenerates to `mean_sum <= capacity`.
pub fn chance_feasible(demand: &DemandDistribution, capacity: f64, q_min: f64) -> Result<bool> {
    if !(0.0..=1.0).contains(&q_min) {
        return Err(Error::ProbabilityOutOfRange { what: "q_min", value: q_min });
    }
    let z = standard_normal_quantile(q_min);
    Ok(feasible_with_z(demand.mean_sum, demand.var_sum, capacity, z))
}

/// Whether `instance` can host `app` over the whole `[t0, t1)` range: the
/// instance span must cover the range, the market must be compatible (spot
/// hosts take preemptible apps only), and adding the app must keep every
/// slot chance-feasible. Violations yield `false`, never an error.
pub fn can_host(
    app: &Application,
    instance: &AllocatedInstance,
    t0: u32,
    t1: u32,
    portfolio: &Portfolio,
    problem: &ProblemInstance,
    q_min: f64,
) -> bool {
    if !instance.covers(t0, t1) {
        return false;
    }
    let ty = match problem.instance_type(instance.type_ref) {
        Some(ty) => ty,
        None => return false,
    };
    if ty.market.spot_only() && !app.preemptible {
        return false;
    }
    let z = standard_normal_quantile(q_min);
    // Membership per slot for just this instance.
    let mut members: BTreeMap<u32, BTreeSet<AppId>> = BTreeMap::new();
    for (&(a, t), &inst) in &portfolio.assignments {
        if inst == instance.id && t0 <= t && t < t1 {
            members.entry(t).or_default().insert(a);
        }
    }
    for t in t0..t1 {
        let mut ids: BTreeSet<AppId> = members.remove(&t).unwrap_or_default();
        ids.insert(app.id);
        let mut demand = DemandDistribution::default();
        for id in ids {
            let a = if id == app.id {
                app
            } else {
                match problem.app(id) {
                    Some(a) => a,
                    None => return false,
                }
            };
            demand.mean_sum += a.demand_mean;
            demand.var_sum += a.demand_var();
        }
        if !feasible_with_z(demand.mean_sum, demand.var_sum, ty.capacity, z) {
            return false;
        }
    }
    true
}

/// Total portfolio cost: the sum over instances of price per slot times span
/// length. The empty portfolio costs 0.
pub fn portfolio_cost(portfolio: &Portfolio, problem: &ProblemInstance) -> Result<f64> {
    let mut total = 0.0;
    for inst in portfolio.instances.values() {
        let ty = problem
            .instance_type(inst.type_ref)
            .ok_or(Error::UnknownType(inst.type_ref))?;
        total += ty.price_per_slot * f64::from(inst.duration());
    }
    Ok(total)
}

/// A single constraint violation found by [`validate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    /// App has no host at a slot of its lifespan.
    MissingAssignment { app: AppId, slot: u32 },
    /// Assignment at a slot outside the app's lifespan.
    OutsideLifespan { app: AppId, slot: u32 },
    /// Assignment at a slot outside the host instance's span.
    OutsideInstanceSpan { app: AppId, instance: InstanceId, slot: u32 },
    /// Assignment references an instance missing from the portfolio.
    UnknownInstance { app: AppId, instance: InstanceId, slot: u32 },
    /// Assignment references an application missing from the problem.
    UnknownApp { app: AppId, slot: u32 },
    /// Instance references a type missing from the catalog.
    UnknownType { instance: InstanceId, type_ref: TypeId },
    /// Instance span is empty or inverted.
    EmptySpan { instance: InstanceId },
    /// Non-preemptible app placed on a spot-market instance.
    MarketViolation { app: AppId, instance: InstanceId, slot: u32 },
    /// Chance constraint fails for an instance-slot.
    CapacityViolation { instance: InstanceId, slot: u32 },
    /// Non-preemptible app hosted by more than one instance.
    MultiHostNonPreemptible { app: AppId },
    /// Reserved instance allocated for less than its minimum term.
    MinTermViolation { instance: InstanceId },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::MissingAssignment { app, slot } => {
                write!(f, "app {app} unassigned at slot {slot}")
            }
            Violation::OutsideLifespan { app, slot } => {
                write!(f, "app {app} assigned at slot {slot} outside its lifespan")
            }
            Violation::OutsideInstanceSpan { app, instance, slot } => write!(
                f,
                "app {app} assigned to instance {instance} at slot {slot} outside the instance span"
            ),
            Violation::UnknownInstance { app, instance, slot } => {
                write!(f, "app {app} at slot {slot} references unknown instance {instance}")
            }
            Violation::UnknownApp { app, slot } => {
                write!(f, "assignment at slot {slot} references unknown app {app}")
            }
            Violation::UnknownType { instance, type_ref } => {
                write!(f, "instance {instance} references unknown type {type_ref}")
            }
            Violation::EmptySpan { instance } => {
                write!(f, "instance {instance} has an empty span")
            }
            Violation::MarketViolation { app, instance, slot } => write!(
                f,
                "non-preemptible app {app} on spot instance {instance} at slot {slot}"
            ),
            Violation::CapacityViolation { instance, slot } => {
                write!(f, "chance constraint fails on instance {instance} at slot {slot}")
            }
            Violation::MultiHostNonPreemptible { app } => {
                write!(f, "non-preemptible app {app} hosted by multiple instances")
            }
            Violation::MinTermViolation { instance } => {
                write!(f, "reserved instance {instance} allocated below its minimum term")
            }
        }
    }
}

/// Re-checks every constraint of a portfolio against a problem, returning
/// all violations found (empty iff the portfolio is valid). Violations are
/// data, not errors; arbitrary broken portfolios are acceptable input.
pub fn validate(portfolio: &Portfolio, problem: &ProblemInstance) -> Vec<Violation> {
    let mut violations = Vec::new();
    let z = standard_normal_quantile(problem.q_min);

    // Instance table invariants.
    for inst in portfolio.instances.values() {
        if inst.start >= inst.end {
            violations.push(Violation::EmptySpan { instance: inst.id });
            continue;
        }
        match problem.instance_type(inst.type_ref) {
            None => violations.push(Violation::UnknownType {
                instance: inst.id,
                type_ref: inst.type_ref,
            }),
            Some(ty) => {
                if ty.market == Market::Reserved && inst.duration() < ty.min_term {
                    violations.push(Violation::MinTermViolation { instance: inst.id });
                }
            }
        }
    }

    // Structural checks per assignment entry.
    for (&(app, slot), &inst_id) in &portfolio.assignments {
        let app_ref = match problem.app(app) {
            Some(a) => a,
            None => {
                violations.push(Violation::UnknownApp { app, slot });
                continue;
            }
        };
        if slot < app_ref.start || slot >= app_ref.end {
            violations.push(Violation::OutsideLifespan { app, slot });
        }
        let inst = match portfolio.instances.get(&inst_id) {
            Some(i) => i,
            None => {
                violations.push(Violation::UnknownInstance { app, instance: inst_id, slot });
                continue;
            }
        };
        if slot < inst.start || slot >= inst.end {
            violations.push(Violation::OutsideInstanceSpan { app, instance: inst_id, slot });
        }
        if let Some(ty) = problem.instance_type(inst.type_ref) {
            if ty.market.spot_only() && !app_ref.preemptible {
                violations.push(Violation::MarketViolation { app, instance: inst_id, slot });
            }
        }
    }

    // Coverage and single-host rule per application.
    for a in &problem.applications {
        let mut hosts = BTreeSet::new();
        for t in a.slots() {
            match portfolio.assignments.get(&(a.id, t)) {
                Some(&inst) => {
                    hosts.insert(inst);
                }
                None => violations.push(Violation::MissingAssignment { app: a.id, slot: t }),
            }
        }
        if !a.preemptible && hosts.len() > 1 {
            violations.push(Violation::MultiHostNonPreemptible { app: a.id });
        }
    }

    // Chance constraint per instance-slot over each instance's active span.
    let members = portfolio.slot_members();
    for inst in portfolio.instances.values() {
        let ty = match problem.instance_type(inst.type_ref) {
            Some(ty) => ty,
            None => continue,
        };
        let slots = members.get(&inst.id);
        for t in inst.start..inst.end {
            let mut demand = DemandDistribution::default();
            if let Some(apps) = slots.and_then(|m| m.get(&t)) {
                for &app in apps {
                    if let Some(a) = problem.app(app) {
                        demand.mean_sum += a.demand_mean;
                        demand.var_sum += a.demand_var();
                    }
                }
            }
            if !feasible_with_z(demand.mean_sum, demand.var_sum, ty.capacity, z) {
                violations.push(Violation::CapacityViolation { instance: inst.id, slot: t });
            }
        }
    }

    violations
}

/// Expected utilization of one instance: total assigned demand means over
/// the instance's active span, relative to the capacity provided for the
/// same period. Uses expected demands only; deviations are not counted.
pub fn utilization_rate(
    portfolio: &Portfolio,
    instance: InstanceId,
    problem: &ProblemInstance,
) -> Result<f64> {
    let inst = portfolio
        .instances
        .get(&instance)
        .ok_or(Error::UnknownInstance(instance))?;
    let ty = problem
        .instance_type(inst.type_ref)
        .ok_or(Error::UnknownType(inst.type_ref))?;
    let mut assigned = 0.0;
    for (&(app, t), &host) in &portfolio.assignments {
        if host != instance || t < inst.start || t >= inst.end {
            continue;
        }
        let a = problem.app(app).ok_or(Error::UnknownApp(app))?;
        assigned += a.demand_mean;
    }
    Ok(assigned / (ty.capacity * f64::from(inst.duration())))
}

/// Mean utilization over all instances of a portfolio.
pub fn mean_utilization(portfolio: &Portfolio, problem: &ProblemInstance) -> Result<f64> {
    if portfolio.instances.is_empty() {
        return Err(Error::UndefinedMetric("mean utilization of an empty portfolio"));
    }
    let mut sum = 0.0;
    for &id in portfolio.instances.keys() {
        sum += utilization_rate(portfolio, id, problem)?;
    }
    Ok(sum / portfolio.instances.len() as f64)
}

/// Duration-weighted utilization: instances with longer allocation periods
/// contribute proportionally more.
pub fn weighted_utilization(portfolio: &Portfolio, problem: &ProblemInstance) -> Result<f64> {
    if portfolio.instances.is_empty() {
        return Err(Error::UndefinedMetric("weighted utilization of an empty portfolio"));
    }
    let mut weighted = 0.0;
    let mut total_duration = 0.0;
    for inst in portfolio.instances.values() {
        let util = utilization_rate(portfolio, inst.id, problem)?;
        let duration = f64::from(inst.duration());
        weighted += duration * util;
        total_duration += duration;
    }
    Ok(weighted / total_duration)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn app(id: u32, start: u32, end: u32, preemptible: bool, mean: f64, std: f64) -> Application {
        Application {
            id: AppId(id),
            start,
            end,
            preemptible,
            demand_mean: mean,
            demand_std: std,
        }
    }

    fn ty(id: u32, market: Market, capacity: f64, price: f64, min_term: u32) -> InstanceType {
        InstanceType { id: TypeId(id), market, capacity, price_per_slot: price, min_term }
    }

    fn inst(id: u32, type_ref: u32, start: u32, end: u32) -> AllocatedInstance {
        AllocatedInstance { id: InstanceId(id), type_ref: TypeId(type_ref), start, end }
    }

    fn tiny_problem() -> ProblemInstance {
        ProblemInstance::new(
            vec![
                app(0, 0, 4, false, 3.0, 1.0),
                app(1, 0, 4, true, 2.0, 2.0),
            ],
            vec![
                ty(0, Market::Reserved, 10.0, 2.0, 5),
                ty(1, Market::OnDemand, 10.0, 3.0, 1),
                ty(2, Market::Spot, 10.0, 1.0, 1),
            ],
            6,
            0.95,
        )
        .unwrap()
    }

    #[test]
    fn aggregated_demand_empty_singleton_and_pair() {
        let problem = tiny_problem();
        let mut portfolio = Portfolio::default();
        portfolio.instances.insert(InstanceId(0), inst(0, 0, 0, 5));

        let d = aggregated_demand(&portfolio, InstanceId(0), 1, &problem).unwrap();
        assert_eq!(d, DemandDistribution::new(0.0, 0.0));

        portfolio.assignments.insert((AppId(0), 1), InstanceId(0));
        let d = aggregated_demand(&portfolio, InstanceId(0), 1, &problem).unwrap();
        assert_eq!(d, DemandDistribution::new(3.0, 1.0));

        portfolio.assignments.insert((AppId(1), 1), InstanceId(0));
        let d = aggregated_demand(&portfolio, InstanceId(0), 1, &problem).unwrap();
        // Independent normal sum: variances add, 1^2 + 2^2.
        assert_eq!(d, DemandDistribution::new(5.0, 5.0));

        assert_eq!(
            aggregated_demand(&portfolio, InstanceId(9), 1, &problem),
            Err(Error::UnknownInstance(InstanceId(9)))
        );
    }

    #[test]
    fn chance_feasible_examples() {
        let ok = |mean, var, cap, q| chance_feasible(&DemandDistribution::new(mean, var), cap, q);
        assert_eq!(ok(0.0, 0.0, 10.0, 0.99), Ok(true));
        // 3 + 1.6449 * 1 = 4.6449 <= 10
        assert_eq!(ok(3.0, 1.0, 10.0, 0.95), Ok(true));
        // 8 + 1.6449 * 2 = 11.29 > 10
        assert_eq!(ok(8.0, 4.0, 10.0, 0.95), Ok(false));
        // Deterministic boundary uses <=.
        assert_eq!(ok(9.0, 0.0, 9.0, 0.5), Ok(true));
        assert!(matches!(
            ok(1.0, 1.0, 10.0, 1.5),
            Err(Error::ProbabilityOutOfRange { .. })
        ));
    }

    #[test]
    fn chance_feasible_saturated_quantiles() {
        let d = DemandDistribution::new(3.0, 1.0);
        // q = 0 always passes, q = 1 never passes with positive variance.
        assert_eq!(chance_feasible(&d, 10.0, 0.0), Ok(true));
        assert_eq!(chance_feasible(&d, 10.0, 1.0), Ok(false));
        // With zero variance q = 1 reduces to the mean comparison.
        let det = DemandDistribution::new(3.0, 0.0);
        assert_eq!(chance_feasible(&det, 10.0, 1.0), Ok(true));
    }

    #[test]
    fn can_host_market_coverage_and_capacity() {
        let problem = tiny_problem();
        let mut portfolio = Portfolio::default();
        let spot = inst(0, 2, 0, 4);
        let reserved = inst(1, 0, 1, 4);
        let empty = inst(2, 0, 0, 6);
        portfolio.instances.insert(spot.id, spot.clone());
        portfolio.instances.insert(reserved.id, reserved.clone());
        portfolio.instances.insert(empty.id, empty.clone());

        let non_preemptible = &problem.applications[0];
        assert!(!can_host(non_preemptible, &spot, 0, 4, &portfolio, &problem, 0.95));
        assert!(!can_host(non_preemptible, &reserved, 0, 4, &portfolio, &problem, 0.95));
        assert!(can_host(non_preemptible, &empty, 0, 4, &portfolio, &problem, 0.95));
    }

    #[test]
    fn portfolio_cost_examples() {
        let problem = tiny_problem();
        let mut portfolio = Portfolio::default();
        assert_eq!(portfolio_cost(&portfolio, &problem).unwrap(), 0.0);

        portfolio.instances.insert(InstanceId(0), inst(0, 0, 0, 5));
        assert_eq!(portfolio_cost(&portfolio, &problem).unwrap(), 10.0);

        // Second instance: price 1.5, span 4 -> 6; total 16.
        let mut problem2 = problem.clone();
        problem2.catalog.push(ty(3, Market::OnDemand, 10.0, 1.5, 1));
        portfolio.instances.insert(InstanceId(1), inst(1, 3, 0, 4));
        assert_eq!(portfolio_cost(&portfolio, &problem2).unwrap(), 16.0);

        portfolio.instances.insert(InstanceId(2), inst(2, 9, 0, 4));
        assert!(matches!(
            portfolio_cost(&portfolio, &problem2),
            Err(Error::UnknownType(TypeId(9)))
        ));
    }

    #[test]
    fn cost_strictly_increases_with_span_extension() {
        let problem = tiny_problem();
        let mut portfolio = Portfolio::default();
        portfolio.instances.insert(InstanceId(0), inst(0, 0, 0, 5));
        let before = portfolio_cost(&portfolio, &problem).unwrap();
        portfolio.instances.get_mut(&InstanceId(0)).unwrap().end = 6;
        let after = portfolio_cost(&portfolio, &problem).unwrap();
        assert!(after > before);
    }

    #[test]
    fn validate_flags_constructed_violations() {
        let problem = tiny_problem();

        // Fully unassigned portfolio: one missing-assignment per app-slot.
        let portfolio = Portfolio::default();
        let violations = validate(&portfolio, &problem);
        assert!(violations.contains(&Violation::MissingAssignment { app: AppId(0), slot: 0 }));
        assert_eq!(violations.len(), 8);

        // Non-preemptible app on a spot host.
        let mut portfolio = Portfolio::default();
        portfolio.instances.insert(InstanceId(0), inst(0, 2, 0, 4));
        for t in 0..4 {
            portfolio.assignments.insert((AppId(0), t), InstanceId(0));
            portfolio.assignments.insert((AppId(1), t), InstanceId(0));
        }
        let violations = validate(&portfolio, &problem);
        assert!(violations
            .iter()
            .any(|v| matches!(v, Violation::MarketViolation { app: AppId(0), .. })));
        assert!(!violations
            .iter()
            .any(|v| matches!(v, Violation::MarketViolation { app: AppId(1), .. })));
    }

    #[test]
    fn validate_flags_min_term_and_multi_host() {
        let problem = tiny_problem();
        let mut portfolio = Portfolio::default();
        // Reserved type 0 has min_term 5 but the span is 4.
        portfolio.instances.insert(InstanceId(0), inst(0, 0, 0, 4));
        portfolio.instances.insert(InstanceId(1), inst(1, 1, 0, 4));
        for t in 0..4 {
            // Non-preemptible app 0 alternates hosts.
            let host = if t % 2 == 0 { InstanceId(0) } else { InstanceId(1) };
            portfolio.assignments.insert((AppId(0), t), host);
            portfolio.assignments.insert((AppId(1), t), InstanceId(1));
        }
        let violations = validate(&portfolio, &problem);
        assert!(violations.contains(&Violation::MinTermViolation { instance: InstanceId(0) }));
        assert!(violations.contains(&Violation::MultiHostNonPreemptible { app: AppId(0) }));
    }

    #[test]
    fn validate_flags_capacity_breach() {
        let mut problem = tiny_problem();
        problem.catalog[1].capacity = 4.0; // on-demand type now too small for both apps
        let mut portfolio = Portfolio::default();
        portfolio.instances.insert(InstanceId(0), inst(0, 1, 0, 4));
        for t in 0..4 {
            portfolio.assignments.insert((AppId(0), t), InstanceId(0));
            portfolio.assignments.insert((AppId(1), t), InstanceId(0));
        }
        let violations = validate(&portfolio, &problem);
        assert!(violations
            .iter()
            .any(|v| matches!(v, Violation::CapacityViolation { instance: InstanceId(0), .. })));
    }

    #[test]
    fn utilization_examples() {
        let problem = ProblemInstance::new(
            vec![app(0, 0, 2, true, 5.0, 0.0), app(1, 0, 2, true, 5.0, 0.0)],
            vec![ty(0, Market::OnDemand, 10.0, 1.0, 1)],
            4,
            0.95,
        )
        .unwrap();

        let mut portfolio = Portfolio::default();
        portfolio.instances.insert(InstanceId(0), inst(0, 0, 0, 2));
        assert_eq!(utilization_rate(&portfolio, InstanceId(0), &problem).unwrap(), 0.0);

        portfolio.assignments.insert((AppId(0), 0), InstanceId(0));
        portfolio.assignments.insert((AppId(0), 1), InstanceId(0));
        // capacity 10, span 2, one app mean 5 on both slots -> 0.5
        assert_eq!(utilization_rate(&portfolio, InstanceId(0), &problem).unwrap(), 0.5);

        // capacity 10, span 4, demand 5 on 2 slots only -> 0.25
        portfolio.instances.get_mut(&InstanceId(0)).unwrap().end = 4;
        assert_eq!(utilization_rate(&portfolio, InstanceId(0), &problem).unwrap(), 0.25);
    }

    #[test]
    fn weighted_utilization_examples() {
        let problem = ProblemInstance::new(
            vec![
                app(0, 0, 1, true, 2.0, 0.0),
                app(1, 0, 3, true, 8.0, 0.0),
            ],
            vec![ty(0, Market::OnDemand, 10.0, 1.0, 1)],
            4,
            0.95,
        )
        .unwrap();
        let mut portfolio = Portfolio::default();
        portfolio.instances.insert(InstanceId(0), inst(0, 0, 0, 1));
        portfolio.assignments.insert((AppId(0), 0), InstanceId(0));

        // Single instance: weighted equals plain utilization.
        assert_eq!(
            weighted_utilization(&portfolio, &problem).unwrap(),
            utilization_rate(&portfolio, InstanceId(0), &problem).unwrap()
        );

        // util 0.2 over duration 1 plus util 0.8 over duration 3 -> 0.65.
        portfolio.instances.insert(InstanceId(1), inst(1, 0, 0, 3));
        for t in 0..3 {
            portfolio.assignments.insert((AppId(1), t), InstanceId(1));
        }
        let w = weighted_utilization(&portfolio, &problem).unwrap();
        assert!((w - 0.65).abs() < 1e-12);

        assert!(matches!(
            weighted_utilization(&Portfolio::default(), &problem),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn load_validation_rejects_bad_input() {
        // Zero-length lifespan.
        let err = ProblemInstance::new(
            vec![app(0, 2, 2, false, 1.0, 0.0)],
            vec![ty(0, Market::Reserved, 10.0, 1.0, 1)],
            4,
            0.95,
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidProblem(_)));

        // Non-preemptible app with a spot-only catalog.
        let err = ProblemInstance::new(
            vec![app(0, 0, 2, false, 1.0, 0.0)],
            vec![ty(0, Market::Spot, 10.0, 1.0, 1)],
            4,
            0.95,
        )
        .unwrap_err();
        assert_eq!(err, Error::UnsolvableApp(AppId(0)));

        // App too large for every type.
        let err = ProblemInstance::new(
            vec![app(0, 0, 2, true, 12.0, 0.0)],
            vec![ty(0, Market::Spot, 10.0, 1.0, 1)],
            4,
            0.95,
        )
        .unwrap_err();
        assert_eq!(err, Error::UnsolvableApp(AppId(0)));

        // q_min out of range.
        let err =
            ProblemInstance::new(vec![], vec![ty(0, Market::Spot, 1.0, 1.0, 1)], 4, 1.2).unwrap_err();
        assert!(matches!(err, Error::ProbabilityOutOfRange { .. }));
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            // Adding demand never turns an infeasible slot feasible and
            // removing never turns a feasible one infeasible.
            #[test]
            fn chance_feasibility_is_monotone(
                mean in 0.0..30.0f64,
                var in 0.0..25.0f64,
                extra_mean in 0.001..10.0f64,
                extra_var in 0.0..9.0f64,
                capacity in 0.1..40.0f64,
                q in 0.5..0.999f64,
            ) {
                let base = DemandDistribution::new(mean, var);
                let more = DemandDistribution::new(mean + extra_mean, var + extra_var);
                let base_ok = chance_feasible(&base, capacity, q).unwrap();
                let more_ok = chance_feasible(&more, capacity, q).unwrap();
                // more demand feasible implies less demand feasible
                prop_assert!(!more_ok || base_ok);
            }

            // Cost is additive over disjoint instance sets.
            #[test]
            fn cost_is_additive(prices in proptest::collection::vec(0.1..10.0f64, 1..8)) {
                let catalog: Vec<InstanceType> = prices
                    .iter()
                    .enumerate()
                    .map(|(i, &p)| ty(i as u32, Market::OnDemand, 10.0, p, 1))
                    .collect();
                let problem =
                    ProblemInstance::new(vec![], catalog, 10, 0.95).unwrap();
                let mut all = Portfolio::default();
                let mut split_total = 0.0;
                for (i, _) in prices.iter().enumerate() {
                    let mut single = Portfolio::default();
                    let instance = inst(i as u32, i as u32, 0, (i as u32 % 5) + 1);
                    all.instances.insert(instance.id, instance.clone());
                    single.instances.insert(instance.id, instance);
                    split_total += portfolio_cost(&single, &problem).unwrap();
                }
                let combined = portfolio_cost(&all, &problem).unwrap();
                prop_assert!((combined - split_total).abs() < 1e-9 * combined.max(1.0));
            }
        }
    }
}
