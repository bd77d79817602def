//! Ground-truth utilities: an exhaustive optimal solver for desk-scale
//! instances and a Monte Carlo estimate of the chance constraint. Both are
//! independent of the heuristic solvers they are used to check.

use crate::error::{Error, Result};
use crate::model::{AppId, DemandDistribution, Portfolio, ProblemInstance, TypeId};
use crate::packing::{Ctx, Packing};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Size limits above which [`brute_force_optimum`] refuses to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleLimits {
    pub max_apps: usize,
    pub max_types: usize,
    pub max_horizon: u32,
}

impl Default for OracleLimits {
    fn default() -> Self {
        Self { max_apps: 4, max_types: 4, max_horizon: 8 }
    }
}

/// One unit of work for the enumeration: a non-preemptible app is placed
/// whole, a preemptible app one slot at a time.
#[derive(Debug, Clone, Copy)]
enum Item {
    Whole(AppId),
    Slice(AppId, u32),
}

struct OpenInstance {
    type_ref: TypeId,
    /// (item index, app, slots) per assigned item, for backtracking.
    items: Vec<(usize, AppId, Vec<u32>)>,
    /// slot -> app ids, kept sorted for the demand sum.
    members: std::collections::BTreeMap<u32, Vec<AppId>>,
}

impl OpenInstance {
    fn hull(&self) -> (u32, u32) {
        let lo = *self.members.keys().next().expect("open instance never empty");
        let hi = *self.members.keys().next_back().expect("open instance never empty");
        (lo, hi + 1)
    }
}

/// Frozen best solution: per instance, its type and assigned items.
type Grouping = Vec<(TypeId, Vec<(usize, AppId, Vec<u32>)>)>;

struct Search<'p> {
    ctx: Ctx<'p>,
    items: Vec<Item>,
    open: Vec<OpenInstance>,
    current_cost: f64,
    best_cost: f64,
    best: Option<Grouping>,
}

impl<'p> Search<'p> {
    fn item_slots(&self, item: Item) -> Result<Vec<u32>> {
        Ok(match item {
            Item::Whole(app) => self.ctx.app(app)?.slots().collect(),
            Item::Slice(_, t) => vec![t],
        })
    }

    fn item_app(&self, item: Item) -> AppId {
        match item {
            Item::Whole(a) | Item::Slice(a, _) => a,
        }
    }

    /// Billed cost of an instance: the tight hull of its assigned slots,
    /// extended forward to the type's minimum term.
    fn instance_cost(&self, inst: &OpenInstance) -> f64 {
        let ty = self.ctx.instance_type(inst.type_ref).expect("validated type");
        let (lo, hi) = inst.hull();
        let billed = (hi - lo).max(ty.min_term);
        ty.price_per_slot * f64::from(billed)
    }

    /// Whether adding the app at the given slots keeps every touched slot of
    /// the instance chance-feasible.
    fn fits(&self, inst: &OpenInstance, app: AppId, slots: &[u32]) -> Result<bool> {
        let candidate = self.ctx.app(app)?;
        let ty = self.ctx.instance_type(inst.type_ref)?;
        if !self.ctx.market_compatible(candidate, ty.market) {
            return Ok(false);
        }
        for &t in slots {
            let mut demand = DemandDistribution::default();
            let empty = Vec::new();
            let members = inst.members.get(&t).unwrap_or(&empty);
            if members.contains(&app) {
                return Ok(false); // a preemptible slice may not repeat a slot
            }
            let mut inserted = false;
            for &m in members {
                if !inserted && app < m {
                    demand.mean_sum += candidate.demand_mean;
                    demand.var_sum += candidate.demand_var();
                    inserted = true;
                }
                let a = self.ctx.app(m)?;
                demand.mean_sum += a.demand_mean;
                demand.var_sum += a.demand_var();
            }
            if !inserted {
                demand.mean_sum += candidate.demand_mean;
                demand.var_sum += candidate.demand_var();
            }
            if !crate::model::feasible_with_z(demand.mean_sum, demand.var_sum, ty.capacity, self.ctx.z)
            {
                return Ok(false);
            }
        }
        Ok(true)
    }

    fn push_item(&mut self, inst_idx: usize, item_idx: usize, app: AppId, slots: &[u32]) {
        let before = self.instance_cost(&self.open[inst_idx]);
        let inst = &mut self.open[inst_idx];
        inst.items.push((item_idx, app, slots.to_vec()));
        for &t in slots {
            let entry = inst.members.entry(t).or_default();
            let pos = entry.partition_point(|&m| m < app);
            entry.insert(pos, app);
        }
        let after = self.instance_cost(&self.open[inst_idx]);
        self.current_cost += after - before;
    }

    fn pop_item(&mut self, inst_idx: usize) {
        let before = self.instance_cost(&self.open[inst_idx]);
        let inst = &mut self.open[inst_idx];
        let (_, app, slots) = inst.items.pop().expect("pop on empty instance");
        debug_assert!(!inst.items.is_empty(), "joined instances keep their prior items");
        for t in slots {
            let entry = inst.members.get_mut(&t).expect("member slot present");
            entry.retain(|&m| m != app);
            if entry.is_empty() {
                inst.members.remove(&t);
            }
        }
        let after = self.instance_cost(&self.open[inst_idx]);
        self.current_cost += after - before;
    }

    fn recurse(&mut self, item_idx: usize) -> Result<()> {
        if self.current_cost >= self.best_cost {
            return Ok(()); // cost only grows along a branch
        }
        if item_idx == self.items.len() {
            self.best_cost = self.current_cost;
            self.best = Some(
                self.open
                    .iter()
                    .map(|i| (i.type_ref, i.items.clone()))
                    .collect(),
            );
            return Ok(());
        }
        let item = self.items[item_idx];
        let app = self.item_app(item);
        let slots = self.item_slots(item)?;

        // Join an already-open instance, in opening order.
        for inst_idx in 0..self.open.len() {
            if self.fits(&self.open[inst_idx], app, &slots)? {
                self.push_item(inst_idx, item_idx, app, &slots);
                self.recurse(item_idx + 1)?;
                self.pop_item(inst_idx);
            }
        }

        // Open a fresh instance of each fitting type. New groups are always
        // appended, so every grouping is enumerated exactly once.
        let candidate = self.ctx.app(app)?;
        for ty in &self.ctx.problem.catalog {
            if !self.ctx.fits_alone(candidate, ty) {
                continue;
            }
            self.open.push(OpenInstance {
                type_ref: ty.id,
                items: Vec::new(),
                members: std::collections::BTreeMap::new(),
            });
            let inst_idx = self.open.len() - 1;
            // An empty instance has no hull; account cost via push.
            let before = 0.0;
            let inst = &mut self.open[inst_idx];
            inst.items.push((item_idx, app, slots.clone()));
            for &t in &slots {
                inst.members.entry(t).or_default().push(app);
            }
            let after = self.instance_cost(&self.open[inst_idx]);
            self.current_cost += after - before;
            self.recurse(item_idx + 1)?;
            self.current_cost -= after;
            self.open.pop();
        }
        Ok(())
    }
}

/// Exhaustively enumerates all valid assignment groupings of a desk-scale
/// problem and returns a minimum-cost portfolio with its cost. Instance
/// spans are the tight hulls of their assigned slots, extended to the
/// type's minimum term. Problems above `limits` are refused.
pub fn brute_force_optimum(
    problem: &ProblemInstance,
    limits: OracleLimits,
) -> Result<(Portfolio, f64)> {
    if problem.applications.len() > limits.max_apps {
        return Err(Error::OracleLimits(format!(
            "{} apps > {}",
            problem.applications.len(),
            limits.max_apps
        )));
    }
    if problem.catalog.len() > limits.max_types {
        return Err(Error::OracleLimits(format!(
            "{} types > {}",
            problem.catalog.len(),
            limits.max_types
        )));
    }
    if problem.horizon > limits.max_horizon {
        return Err(Error::OracleLimits(format!(
            "horizon {} > {}",
            problem.horizon, limits.max_horizon
        )));
    }

    let ctx = Ctx::new(problem, problem.q_min)?;
    let mut items = Vec::new();
    for a in &problem.applications {
        if !a.preemptible {
            items.push(Item::Whole(a.id));
        }
    }
    for a in &problem.applications {
        if a.preemptible {
            for t in a.slots() {
                items.push(Item::Slice(a.id, t));
            }
        }
    }

    // Trivial upper bound: every item on its own instance of the first
    // fitting type. Keeps the search independent of the heuristic solvers.
    let mut upper = 0.0;
    for &item in &items {
        let app = match item {
            Item::Whole(a) | Item::Slice(a, _) => a,
        };
        let a = ctx.app(app)?;
        let ty = problem
            .catalog
            .iter()
            .find(|ty| ctx.fits_alone(a, ty))
            .ok_or(Error::UnsolvableApp(app))?;
        let span = match item {
            Item::Whole(_) => a.duration().max(ty.min_term),
            Item::Slice(..) => 1u32.max(ty.min_term),
        };
        upper += ty.price_per_slot * f64::from(span);
    }

    let mut search = Search {
        ctx,
        items,
        open: Vec::new(),
        current_cost: 0.0,
        best_cost: upper + 1e-9 * upper.max(1.0),
        best: None,
    };
    search.recurse(0)?;

    let best = match search.best {
        Some(b) => b,
        None => {
            // Only reachable when there are no items at all.
            return Ok((Portfolio::default(), 0.0));
        }
    };

    let ctx = Ctx::new(problem, problem.q_min)?;
    let mut packing = Packing::default();
    for (type_ref, assigned) in best {
        let ty = ctx.instance_type(type_ref)?;
        let lo = assigned
            .iter()
            .flat_map(|(_, _, slots)| slots.iter().copied())
            .min()
            .expect("instance never empty");
        let hi = assigned
            .iter()
            .flat_map(|(_, _, slots)| slots.iter().copied())
            .max()
            .expect("instance never empty")
            + 1;
        let (start, end) = ctx.span_for(ty, lo, hi);
        let id = packing.alloc(type_ref, start, end);
        for (_, app, slots) in assigned {
            packing.place(app, id, slots);
        }
    }
    let cost = packing.cost(&ctx);
    Ok((packing.to_portfolio(), cost))
}

/// Seeded Monte Carlo estimate of `P(D < capacity)` for a normal demand
/// aggregate. Intended for `samples >= 10_000`.
pub fn monte_carlo_feasibility(
    demand: &DemandDistribution,
    capacity: f64,
    samples: usize,
    seed: u64,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(demand.mean_sum, demand.var_sum.max(0.0).sqrt())
        .expect("finite demand parameters");
    let mut hits = 0usize;
    for _ in 0..samples {
        if normal.sample(&mut rng) < capacity {
            hits += 1;
        }
    }
    hits as f64 / samples as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        chance_feasible, portfolio_cost, validate, Application, InstanceType, Market,
    };

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

    #[test]
    fn empty_problem_costs_nothing() {
        let problem =
            ProblemInstance::new(vec![], vec![ty(0, Market::Spot, 4.0, 1.0, 1)], 4, 0.95).unwrap();
        let (portfolio, cost) = brute_force_optimum(&problem, OracleLimits::default()).unwrap();
        assert!(portfolio.is_empty());
        assert_eq!(cost, 0.0);
    }

    #[test]
    fn single_app_single_type_is_forced() {
        let problem = ProblemInstance::new(
            vec![app(0, 1, 3, false, 2.0, 0.0)],
            vec![ty(0, Market::Reserved, 4.0, 1.5, 5)],
            6,
            0.95,
        )
        .unwrap();
        let (portfolio, cost) = brute_force_optimum(&problem, OracleLimits::default()).unwrap();
        // Billed for max(min_term, span) slots.
        assert_eq!(cost, 1.5 * 5.0);
        assert!(validate(&portfolio, &problem).is_empty());
        assert_eq!(portfolio_cost(&portfolio, &problem).unwrap(), cost);
    }

    #[test]
    fn sharing_beats_isolation_on_constructed_instance() {
        // Three deterministic apps of demand 2 over the same span fit one
        // capacity-6 host; separate hosts would triple the cost.
        let problem = ProblemInstance::new(
            vec![
                app(0, 0, 4, false, 2.0, 0.0),
                app(1, 0, 4, false, 2.0, 0.0),
                app(2, 0, 4, false, 2.0, 0.0),
            ],
            vec![ty(0, Market::Reserved, 6.0, 3.0, 1)],
            6,
            0.95,
        )
        .unwrap();
        let (portfolio, cost) = brute_force_optimum(&problem, OracleLimits::default()).unwrap();
        assert_eq!(portfolio.instances.len(), 1);
        assert_eq!(cost, 12.0);
        assert!(validate(&portfolio, &problem).is_empty());
    }

    #[test]
    fn preemptible_slices_can_straddle_hosts() {
        // A cheap spot type with room for the preemptible app only where the
        // non-preemptible one is absent.
        let problem = ProblemInstance::new(
            vec![
                app(0, 0, 2, false, 3.0, 0.0),
                app(1, 0, 4, true, 2.0, 0.0),
            ],
            vec![
                ty(0, Market::Reserved, 5.0, 2.0, 1),
                ty(1, Market::Spot, 2.5, 0.5, 1),
            ],
            4,
            0.95,
        )
        .unwrap();
        let (portfolio, cost) = brute_force_optimum(&problem, OracleLimits::default()).unwrap();
        assert!(validate(&portfolio, &problem).is_empty());
        assert_eq!(portfolio_cost(&portfolio, &problem).unwrap(), cost);
    }

    #[test]
    fn refuses_oversized_problems() {
        let apps: Vec<Application> =
            (0..5).map(|i| app(i, 0, 2, true, 1.0, 0.0)).collect();
        let problem =
            ProblemInstance::new(apps, vec![ty(0, Market::Spot, 4.0, 1.0, 1)], 4, 0.95).unwrap();
        assert!(matches!(
            brute_force_optimum(&problem, OracleLimits::default()),
            Err(Error::OracleLimits(_))
        ));
    }

    #[test]
    fn monte_carlo_degenerate_cases() {
        let zero = DemandDistribution::new(0.0, 0.0);
        assert_eq!(monte_carlo_feasibility(&zero, 1.0, 10_000, 1), 1.0);

        let far = DemandDistribution::new(10.0, 1.0);
        assert_eq!(monte_carlo_feasibility(&far, 5.0, 10_000, 1), 0.0);
    }

    #[test]
    fn monte_carlo_matches_quantile_construction() {
        // Capacity placed at the 95% quantile of N(3, 1).
        let demand = DemandDistribution::new(3.0, 1.0);
        let cap = 3.0 + 1.6448536269514722;
        let p = monte_carlo_feasibility(&demand, cap, 1_000_000, 7);
        // 3 sigma of the binomial estimator at p = 0.95 and n = 1e6.
        let tolerance = 3.0 * (0.95 * 0.05 / 1e6f64).sqrt();
        assert!((p - 0.95).abs() < tolerance, "p = {p}");
    }

    #[test]
    fn analytic_and_monte_carlo_decisions_agree_off_boundary() {
        let mut seed = 11u64;
        for case in 0..25 {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
            let mean = (case as f64 * 0.73) % 8.0;
            let var = ((case as f64 * 0.37) % 3.0) + 0.05;
            let q = 0.5 + 0.49 * ((case as f64 * 0.11) % 1.0);
            let z = crate::model::standard_normal_quantile(q);
            // Capacity well off the analytic boundary in both directions.
            for offset in [-1.0, 1.0] {
                let cap = mean + z * var.sqrt() + offset;
                if cap <= 0.0 {
                    continue;
                }
                let demand = DemandDistribution::new(mean, var);
                let analytic = chance_feasible(&demand, cap, q).unwrap();
                let empirical = monte_carlo_feasibility(&demand, cap, 200_000, seed) >= q;
                assert_eq!(analytic, empirical, "mean={mean} var={var} q={q} cap={cap}");
            }
        }
    }
}
