//! Mutable packing state used inside the solvers.
//!
//! Capacity checks recompute the demand sum of a slot from its member set in
//! ascending app-id order, the same order `model::validate` uses, so solver
//! decisions and the final validation agree bit for bit even at boundaries.

use crate::error::{Error, Result};
use crate::model::{
    feasible_with_z, standard_normal_quantile, AllocatedInstance, AppId, Application, InstanceId,
    InstanceType, Market, Portfolio, ProblemInstance, TypeId,
};
use std::collections::{BTreeMap, BTreeSet};

/// Immutable lookups shared by one solve: app and type tables plus the
/// precomputed quantile for the chance constraint.
pub(crate) struct Ctx<'p> {
    pub problem: &'p ProblemInstance,
    pub z: f64,
    apps: BTreeMap<AppId, &'p Application>,
    types: BTreeMap<TypeId, &'p InstanceType>,
}

impl<'p> Ctx<'p> {
    pub fn new(problem: &'p ProblemInstance, q_min: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&q_min) {
            return Err(Error::ProbabilityOutOfRange { what: "q_min", value: q_min });
        }
        Ok(Self {
            problem,
            z: standard_normal_quantile(q_min),
            apps: problem.applications.iter().map(|a| (a.id, a)).collect(),
            types: problem.catalog.iter().map(|t| (t.id, t)).collect(),
        })
    }

    pub fn app(&self, id: AppId) -> Result<&'p Application> {
        self.apps.get(&id).copied().ok_or(Error::UnknownApp(id))
    }

    pub fn instance_type(&self, id: TypeId) -> Result<&'p InstanceType> {
        self.types.get(&id).copied().ok_or(Error::UnknownType(id))
    }

    /// Whether the app may run on the given market at all.
    pub fn market_compatible(&self, app: &Application, market: Market) -> bool {
        app.preemptible || !market.spot_only()
    }

    /// Whether the app alone satisfies the chance constraint on the type.
    pub fn fits_alone(&self, app: &Application, ty: &InstanceType) -> bool {
        self.market_compatible(app, ty.market)
            && feasible_with_z(app.demand_mean, app.demand_var(), ty.capacity, self.z)
    }

    /// Span for a fresh instance of `ty` hosting `[start, end)`: reserved
    /// types are extended forward to their minimum term.
    pub fn span_for(&self, ty: &InstanceType, start: u32, end: u32) -> (u32, u32) {
        (start, end.max(start + ty.min_term))
    }
}

#[derive(Debug, Clone)]
pub(crate) struct PackedInstance {
    pub inst: AllocatedInstance,
    /// slot -> applications assigned at that slot.
    pub members: BTreeMap<u32, BTreeSet<AppId>>,
}

impl PackedInstance {
    pub fn is_unused(&self) -> bool {
        self.members.is_empty()
    }

    /// Applications with at least one assignment on this instance.
    pub fn apps(&self) -> BTreeSet<AppId> {
        self.members.values().flatten().copied().collect()
    }

    /// Slots at which the given app is assigned here.
    pub fn slots_of(&self, app: AppId) -> BTreeSet<u32> {
        self.members
            .iter()
            .filter(|(_, apps)| apps.contains(&app))
            .map(|(&t, _)| t)
            .collect()
    }
}

/// Instances plus per-slot membership; the working form of a portfolio.
/// Instance ids count up from 0, so id order is creation order.
#[derive(Debug, Clone, Default)]
pub(crate) struct Packing {
    next_id: u32,
    pub instances: BTreeMap<InstanceId, PackedInstance>,
    /// app -> slot -> hosting instance.
    pub placements: BTreeMap<AppId, BTreeMap<u32, InstanceId>>,
}

impl Packing {
    pub fn alloc(&mut self, type_ref: TypeId, start: u32, end: u32) -> InstanceId {
        let id = InstanceId(self.next_id);
        self.next_id += 1;
        self.instances.insert(
            id,
            PackedInstance {
                inst: AllocatedInstance { id, type_ref, start, end },
                members: BTreeMap::new(),
            },
        );
        id
    }

    /// Assigns the app to the instance over the given slots.
    pub fn place(&mut self, app: AppId, instance: InstanceId, slots: impl IntoIterator<Item = u32>) {
        let packed = self.instances.get_mut(&instance).expect("placing on unknown instance");
        let by_slot = self.placements.entry(app).or_default();
        for t in slots {
            debug_assert!(
                packed.inst.start <= t && t < packed.inst.end,
                "placement outside instance span"
            );
            let prev = by_slot.insert(t, instance);
            debug_assert!(prev.is_none(), "double assignment of app {app} at slot {t}");
            packed.members.entry(t).or_default().insert(app);
        }
    }

    /// Removes the app's assignments on one instance, returning the freed
    /// slots. Does not drop the instance even if it becomes unused.
    pub fn unplace(&mut self, app: AppId, instance: InstanceId) -> BTreeSet<u32> {
        let packed = match self.instances.get_mut(&instance) {
            Some(p) => p,
            None => return BTreeSet::new(),
        };
        let freed = packed.slots_of(app);
        for &t in &freed {
            if let Some(apps) = packed.members.get_mut(&t) {
                apps.remove(&app);
                if apps.is_empty() {
                    packed.members.remove(&t);
                }
            }
        }
        if let Some(by_slot) = self.placements.get_mut(&app) {
            by_slot.retain(|t, _| !freed.contains(t));
            if by_slot.is_empty() {
                self.placements.remove(&app);
            }
        }
        freed
    }

    /// Removes the app from every instance; returns the previous hosts.
    pub fn unplace_everywhere(&mut self, app: AppId) -> BTreeSet<InstanceId> {
        let hosts: BTreeSet<InstanceId> = self
            .placements
            .get(&app)
            .map(|m| m.values().copied().collect())
            .unwrap_or_default();
        for &h in &hosts {
            self.unplace(app, h);
        }
        hosts
    }

    /// Deallocates an instance, returning the orphaned apps and the slots
    /// they lose.
    pub fn remove_instance(&mut self, instance: InstanceId) -> BTreeMap<AppId, BTreeSet<u32>> {
        let mut orphans: BTreeMap<AppId, BTreeSet<u32>> = BTreeMap::new();
        let packed = match self.instances.remove(&instance) {
            Some(p) => p,
            None => return orphans,
        };
        for (t, apps) in packed.members {
            for app in apps {
                orphans.entry(app).or_default().insert(t);
                if let Some(by_slot) = self.placements.get_mut(&app) {
                    by_slot.remove(&t);
                    if by_slot.is_empty() {
                        self.placements.remove(&app);
                    }
                }
            }
        }
        orphans
    }

    pub fn drop_if_unused(&mut self, instance: InstanceId) -> bool {
        if self.instances.get(&instance).is_some_and(PackedInstance::is_unused) {
            self.instances.remove(&instance);
            true
        } else {
            false
        }
    }

    /// Chance check for adding `extra` to an instance-slot. The sum runs over
    /// the member set plus the candidate in ascending app-id order.
    pub fn feasible_add(&self, ctx: &Ctx, instance: InstanceId, slot: u32, extra: AppId) -> bool {
        let packed = &self.instances[&instance];
        let capacity = match ctx.instance_type(packed.inst.type_ref) {
            Ok(ty) => ty.capacity,
            Err(_) => return false,
        };
        let members = packed.members.get(&slot);
        let mut mean = 0.0;
        let mut var = 0.0;
        let mut inserted = false;
        let mut add = |id: AppId| -> bool {
            match ctx.app(id) {
                Ok(a) => {
                    mean += a.demand_mean;
                    var += a.demand_var();
                    true
                }
                Err(_) => false,
            }
        };
        if let Some(members) = members {
            for &id in members {
                if !inserted && extra < id {
                    if !add(extra) {
                        return false;
                    }
                    inserted = true;
                }
                if id == extra {
                    inserted = true;
                }
                if !add(id) {
                    return false;
                }
            }
        }
        if !inserted && !add(extra) {
            return false;
        }
        feasible_with_z(mean, var, capacity, ctx.z)
    }

    /// First-fit test: span coverage of `[t0, t1)`, market compatibility and
    /// per-slot chance feasibility with the app added.
    pub fn can_place(&self, ctx: &Ctx, app: &Application, instance: InstanceId, t0: u32, t1: u32) -> bool {
        let packed = &self.instances[&instance];
        if !packed.inst.covers(t0, t1) {
            return false;
        }
        let ty = match ctx.instance_type(packed.inst.type_ref) {
            Ok(ty) => ty,
            Err(_) => return false,
        };
        if !ctx.market_compatible(app, ty.market) {
            return false;
        }
        (t0..t1).all(|t| self.feasible_add(ctx, instance, t, app.id))
    }

    /// Ids in creation order.
    pub fn instance_ids(&self) -> Vec<InstanceId> {
        self.instances.keys().copied().collect()
    }

    /// Maximal runs of lifespan slots at which the app is unassigned.
    pub fn gaps_of(&self, app: &Application) -> Vec<(u32, u32)> {
        let assigned = self.placements.get(&app.id);
        let mut gaps = Vec::new();
        let mut open: Option<u32> = None;
        for t in app.slots() {
            let hosted = assigned.is_some_and(|m| m.contains_key(&t));
            match (hosted, open) {
                (false, None) => open = Some(t),
                (true, Some(g0)) => {
                    gaps.push((g0, t));
                    open = None;
                }
                _ => {}
            }
        }
        if let Some(g0) = open {
            gaps.push((g0, app.end));
        }
        gaps
    }

    pub fn cost(&self, ctx: &Ctx) -> f64 {
        self.instances
            .values()
            .map(|p| {
                let price = ctx
                    .instance_type(p.inst.type_ref)
                    .map(|t| t.price_per_slot)
                    .unwrap_or(0.0);
                price * f64::from(p.inst.duration())
            })
            .sum()
    }

    pub fn to_portfolio(&self) -> Portfolio {
        let mut portfolio = Portfolio::default();
        for (id, packed) in &self.instances {
            portfolio.instances.insert(*id, packed.inst.clone());
        }
        for (&app, by_slot) in &self.placements {
            for (&t, &inst) in by_slot {
                portfolio.assignments.insert((app, t), inst);
            }
        }
        portfolio
    }

    pub fn from_portfolio(portfolio: &Portfolio) -> Result<Self> {
        let mut packing = Packing {
            next_id: portfolio.instances.keys().map(|id| id.0 + 1).max().unwrap_or(0),
            ..Packing::default()
        };
        for (id, inst) in &portfolio.instances {
            packing.instances.insert(
                *id,
                PackedInstance { inst: inst.clone(), members: BTreeMap::new() },
            );
        }
        for (&(app, t), &inst) in &portfolio.assignments {
            let packed = packing
                .instances
                .get_mut(&inst)
                .ok_or(Error::UnknownInstance(inst))?;
            packed.members.entry(t).or_default().insert(app);
            packing.placements.entry(app).or_default().insert(t, inst);
        }
        Ok(packing)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Market;

    fn problem() -> ProblemInstance {
        ProblemInstance::new(
            vec![
                Application {
                    id: AppId(0),
                    start: 0,
                    end: 4,
                    preemptible: true,
                    demand_mean: 3.0,
                    demand_std: 1.0,
                },
                Application {
                    id: AppId(1),
                    start: 1,
                    end: 3,
                    preemptible: true,
                    demand_mean: 4.0,
                    demand_std: 0.0,
                },
            ],
            vec![InstanceType {
                id: TypeId(0),
                market: Market::Spot,
                capacity: 8.0,
                price_per_slot: 1.0,
                min_term: 1,
            }],
            6,
            0.95,
        )
        .unwrap()
    }

    #[test]
    fn place_unplace_roundtrip() {
        let problem = problem();
        let ctx = Ctx::new(&problem, 0.95).unwrap();
        let mut packing = Packing::default();
        let id = packing.alloc(TypeId(0), 0, 4);
        packing.place(AppId(0), id, 0..4);
        assert_eq!(packing.gaps_of(ctx.app(AppId(0)).unwrap()), Vec::new());
        let freed = packing.unplace(AppId(0), id);
        assert_eq!(freed, (0..4).collect::<BTreeSet<_>>());
        assert_eq!(packing.gaps_of(ctx.app(AppId(0)).unwrap()), vec![(0, 4)]);
        assert!(packing.drop_if_unused(id));
    }

    #[test]
    fn feasible_add_matches_fresh_aggregation() {
        let problem = problem();
        let ctx = Ctx::new(&problem, 0.95).unwrap();
        let mut packing = Packing::default();
        let id = packing.alloc(TypeId(0), 0, 4);
        packing.place(AppId(0), id, 0..4);
        // 3 + 4 + 1.645 * 1 = 8.64 > 8: adding app 1 must fail.
        assert!(!packing.feasible_add(&ctx, id, 1, AppId(1)));
        // Alone at slot 4..? slot 0 has only app 0: 3 + 1.645 <= 8.
        assert!(packing.feasible_add(&ctx, id, 0, AppId(0)));
    }

    #[test]
    fn gaps_decompose_partial_coverage() {
        let problem = problem();
        let ctx = Ctx::new(&problem, 0.95).unwrap();
        let mut packing = Packing::default();
        let id = packing.alloc(TypeId(0), 1, 3);
        packing.place(AppId(0), id, 1..3);
        let app = ctx.app(AppId(0)).unwrap();
        assert_eq!(packing.gaps_of(app), vec![(0, 1), (3, 4)]);
    }

    #[test]
    fn portfolio_roundtrip_preserves_assignments() {
        let problem = problem();
        let ctx = Ctx::new(&problem, 0.95).unwrap();
        let mut packing = Packing::default();
        let id = packing.alloc(TypeId(0), 0, 4);
        packing.place(AppId(0), id, 0..4);
        packing.place(AppId(1), id, 1..3);
        let portfolio = packing.to_portfolio();
        let back = Packing::from_portfolio(&portfolio).unwrap();
        assert_eq!(back.to_portfolio(), portfolio);
        assert_eq!(back.cost(&ctx), packing.cost(&ctx));
    }
}
