//! ERICH, the greedy four-stage solver.
//!
//! Stage 1 sorts applications by increasing start and non-increasing demand
//! deviation, and instance types by price per capacity and slot. Stage 2
//! first-fits all non-preemptible apps onto reserved instances. Stage 3
//! tries to dissolve each reserved instance into on-demand replacements and
//! keeps the change only when strictly cheaper. Stage 4 packs preemptible
//! apps slot by slot into leftover capacity and opens spot instances for the
//! remaining gaps.

use crate::error::{Error, Result};
use crate::model::{Application, InstanceId, InstanceType, Market, Portfolio, ProblemInstance};
use crate::packing::{Ctx, Packing};

/// Tie-break rule applied after the documented sort keys.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum TieBreak {
    /// Break remaining ties by ascending id; keeps every sort total and the
    /// solver deterministic.
    #[default]
    IdAscending,
}

/// Solver configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ErichConfig {
    /// Required per-slot success probability, forwarded into every
    /// feasibility check.
    pub q_min: f64,
    pub tie_break: TieBreak,
}

impl ErichConfig {
    /// Config using the problem's own quality-of-service level.
    pub fn for_problem(problem: &ProblemInstance) -> Self {
        Self { q_min: problem.q_min, tie_break: TieBreak::default() }
    }
}

/// Stage 1 application order: start ascending, demand deviation descending,
/// id ascending. The sort is stable.
pub fn sort_applications(apps: &[Application]) -> Vec<Application> {
    let mut sorted = apps.to_vec();
    sorted.sort_by(|a, b| {
        a.start
            .cmp(&b.start)
            .then_with(|| b.demand_std.total_cmp(&a.demand_std))
            .then_with(|| a.id.cmp(&b.id))
    });
    sorted
}

/// Stage 1 catalog order: price per capacity and slot ascending, capacity
/// descending, id ascending.
pub fn sort_catalog(types: &[InstanceType]) -> Vec<InstanceType> {
    let mut sorted = types.to_vec();
    sorted.sort_by(|a, b| {
        let ra = a.price_per_slot / a.capacity;
        let rb = b.price_per_slot / b.capacity;
        ra.total_cmp(&rb)
            .then_with(|| b.capacity.total_cmp(&a.capacity))
            .then_with(|| a.id.cmp(&b.id))
    });
    sorted
}

/// Stage 2: first-fit every non-preemptible app onto an existing reserved
/// instance covering its lifespan, or open a new reserved instance of the
/// first fitting type, spanning the lifespan extended to the minimum term.
pub fn stage2_pack_reserved(
    problem: &ProblemInstance,
    q_min: f64,
    apps: &[Application],
    reserved_types: &[InstanceType],
    portfolio: Portfolio,
) -> Result<Portfolio> {
    let ctx = Ctx::new(problem, q_min)?;
    let mut packing = Packing::from_portfolio(&portfolio)?;
    stage2_impl(&ctx, &mut packing, apps, reserved_types)?;
    Ok(packing.to_portfolio())
}

fn stage2_impl(
    ctx: &Ctx,
    packing: &mut Packing,
    apps: &[Application],
    reserved_types: &[InstanceType],
) -> Result<()> {
    for app in apps {
        let existing = packing.instance_ids().into_iter().find(|&id| {
            let market = ctx
                .instance_type(packing.instances[&id].inst.type_ref)
                .map(|t| t.market);
            market == Ok(Market::Reserved) && packing.can_place(ctx, app, id, app.start, app.end)
        });
        if let Some(id) = existing {
            packing.place(app.id, id, app.slots());
            continue;
        }
        let ty = reserved_types
            .iter()
            .find(|ty| ctx.fits_alone(app, ty))
            .ok_or(Error::UnsolvableApp(app.id))?;
        let (start, end) = ctx.span_for(ty, app.start, app.end);
        let id = packing.alloc(ty.id, start, end);
        packing.place(app.id, id, app.slots());
    }
    Ok(())
}

/// Stage 3: for each reserved instance, in allocation order, build a
/// temporary portfolio without it, reinsert its apps first-fit over the
/// remaining instances and fresh on-demand instances spanning exactly each
/// app's lifespan, and adopt the result iff strictly cheaper.
pub fn stage3_reserved_to_ondemand(
    problem: &ProblemInstance,
    q_min: f64,
    ondemand_types: &[InstanceType],
    portfolio: Portfolio,
) -> Result<Portfolio> {
    let ctx = Ctx::new(problem, q_min)?;
    let mut packing = Packing::from_portfolio(&portfolio)?;
    stage3_impl(&ctx, &mut packing, ondemand_types)?;
    Ok(packing.to_portfolio())
}

fn stage3_impl(ctx: &Ctx, packing: &mut Packing, ondemand_types: &[InstanceType]) -> Result<()> {
    let reserved_ids: Vec<InstanceId> = packing
        .instance_ids()
        .into_iter()
        .filter(|&id| {
            ctx.instance_type(packing.instances[&id].inst.type_ref)
                .map(|t| t.market)
                == Ok(Market::Reserved)
        })
        .collect();

    for rid in reserved_ids {
        if !packing.instances.contains_key(&rid) {
            continue;
        }
        let mut tmp = packing.clone();
        let orphans = tmp.remove_instance(rid);
        let mut orphan_apps = Vec::with_capacity(orphans.len());
        for &app in orphans.keys() {
            orphan_apps.push(ctx.app(app)?.clone());
        }
        let orphan_apps = sort_applications(&orphan_apps);

        let mut feasible = true;
        'apps: for app in &orphan_apps {
            for id in tmp.instance_ids() {
                if tmp.can_place(ctx, app, id, app.start, app.end) {
                    tmp.place(app.id, id, app.slots());
                    continue 'apps;
                }
            }
            match ondemand_types.iter().find(|ty| ctx.fits_alone(app, ty)) {
                Some(ty) => {
                    let id = tmp.alloc(ty.id, app.start, app.end);
                    tmp.place(app.id, id, app.slots());
                }
                None => {
                    feasible = false;
                    break;
                }
            }
        }
        if feasible && tmp.cost(ctx) < packing.cost(ctx) {
            *packing = tmp;
        }
    }
    Ok(())
}

/// Stage 4: for each preemptible app, assign every lifespan slot hosted by
/// some existing instance (scanned in allocation order), then open one spot
/// instance per remaining contiguous gap.
pub fn stage4_pack_preemptible(
    problem: &ProblemInstance,
    q_min: f64,
    apps: &[Application],
    spot_types: &[InstanceType],
    portfolio: Portfolio,
) -> Result<Portfolio> {
    let ctx = Ctx::new(problem, q_min)?;
    let mut packing = Packing::from_portfolio(&portfolio)?;
    stage4_impl(&ctx, &mut packing, apps, spot_types)?;
    Ok(packing.to_portfolio())
}

fn stage4_impl(
    ctx: &Ctx,
    packing: &mut Packing,
    apps: &[Application],
    spot_types: &[InstanceType],
) -> Result<()> {
    for app in apps {
        let ids = packing.instance_ids();
        for t in app.slots() {
            let host = ids.iter().copied().find(|&id| packing.can_place(ctx, app, id, t, t + 1));
            if let Some(id) = host {
                packing.place(app.id, id, [t]);
            }
        }
        for (g0, g1) in packing.gaps_of(app) {
            let ty = spot_types
                .iter()
                .find(|ty| ctx.fits_alone(app, ty))
                .ok_or(Error::UnsolvableApp(app.id))?;
            let id = packing.alloc(ty.id, g0, g1);
            packing.place(app.id, id, g0..g1);
        }
    }
    Ok(())
}

/// Full solve with the per-stage cost trace.
#[derive(Debug, Clone, PartialEq)]
pub struct ErichOutcome {
    pub portfolio: Portfolio,
    /// Total cost after the reserved packing stage.
    pub stage2_cost: f64,
    /// Total cost after the on-demand densification stage.
    pub stage3_cost: f64,
}

/// Runs stages 1-4 and returns the portfolio together with the intermediate
/// stage costs.
pub fn solve_erich_traced(problem: &ProblemInstance, config: &ErichConfig) -> Result<ErichOutcome> {
    let ctx = Ctx::new(problem, config.q_min)?;
    let sorted_apps = sort_applications(&problem.applications);
    let sorted_catalog = sort_catalog(&problem.catalog);

    let by_market = |m: Market| -> Vec<InstanceType> {
        sorted_catalog.iter().filter(|t| t.market == m).cloned().collect()
    };
    let reserved = by_market(Market::Reserved);
    let ondemand = by_market(Market::OnDemand);
    let spot = by_market(Market::Spot);

    let non_preemptible: Vec<Application> =
        sorted_apps.iter().filter(|a| !a.preemptible).cloned().collect();
    let preemptible: Vec<Application> =
        sorted_apps.iter().filter(|a| a.preemptible).cloned().collect();

    let mut packing = Packing::default();
    stage2_impl(&ctx, &mut packing, &non_preemptible, &reserved)?;
    let stage2_cost = packing.cost(&ctx);
    stage3_impl(&ctx, &mut packing, &ondemand)?;
    let stage3_cost = packing.cost(&ctx);
    stage4_impl(&ctx, &mut packing, &preemptible, &spot)?;

    Ok(ErichOutcome { portfolio: packing.to_portfolio(), stage2_cost, stage3_cost })
}

/// Runs the four stages and returns the resulting portfolio. Deterministic:
/// identical inputs produce identical outputs.
pub fn solve_erich(problem: &ProblemInstance, config: &ErichConfig) -> Result<Portfolio> {
    solve_erich_traced(problem, config).map(|o| o.portfolio)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{portfolio_cost, validate, AppId, TypeId};

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
    fn sort_applications_keys_and_stability() {
        assert!(sort_applications(&[]).is_empty());

        let apps = vec![
            app(0, 2, 3, true, 1.0, 1.0),
            app(1, 0, 3, true, 1.0, 0.5),
            app(2, 0, 3, true, 1.0, 2.0),
        ];
        let order: Vec<u32> = sort_applications(&apps).iter().map(|a| a.id.0).collect();
        assert_eq!(order, vec![2, 1, 0]);

        // All-equal keys preserve input order.
        let equal = vec![
            app(5, 0, 2, true, 1.0, 1.0),
            app(3, 0, 2, true, 1.0, 1.0),
            app(4, 0, 2, true, 1.0, 1.0),
        ];
        let order: Vec<u32> = sort_applications(&equal).iter().map(|a| a.id.0).collect();
        assert_eq!(order, vec![3, 4, 5]); // id tie-break kicks in
    }

    #[test]
    fn sort_catalog_by_price_per_capacity() {
        let types = vec![
            ty(0, Market::Reserved, 10.0, 2.0, 1),
            ty(1, Market::Reserved, 10.0, 3.0, 1),
            ty(2, Market::Reserved, 4.0, 1.0, 1),
        ];
        let order: Vec<u32> = sort_catalog(&types).iter().map(|t| t.id.0).collect();
        assert_eq!(order, vec![0, 2, 1]); // ratios 0.2, 0.25, 0.3

        let single = vec![ty(7, Market::Spot, 4.0, 1.0, 1)];
        assert_eq!(sort_catalog(&single), single);

        // Equal ratios: larger capacity first.
        let tied = vec![
            ty(0, Market::Reserved, 5.0, 1.0, 1),
            ty(1, Market::Reserved, 10.0, 2.0, 1),
        ];
        let order: Vec<u32> = sort_catalog(&tied).iter().map(|t| t.id.0).collect();
        assert_eq!(order, vec![1, 0]);
    }

    #[test]
    fn stage2_extends_new_instance_to_min_term() {
        let problem = ProblemInstance::new(
            vec![app(0, 0, 4, false, 3.0, 1.0)],
            vec![ty(0, Market::Reserved, 10.0, 2.0, 5)],
            6,
            0.95,
        )
        .unwrap();
        let apps = sort_applications(&problem.applications);
        let catalog = sort_catalog(&problem.catalog);
        let portfolio =
            stage2_pack_reserved(&problem, 0.95, &apps, &catalog, Portfolio::default()).unwrap();

        assert_eq!(portfolio.instances.len(), 1);
        let inst = portfolio.instances.values().next().unwrap();
        assert_eq!((inst.start, inst.end), (0, 5));
        assert_eq!(portfolio.assignments.len(), 4);
        assert_eq!(portfolio_cost(&portfolio, &problem).unwrap(), 10.0);
    }

    #[test]
    fn stage2_shares_an_instance_when_chance_allows() {
        // 6 + 1.645 * sqrt(2) = 8.33 <= 10: both apps share one host.
        let problem = ProblemInstance::new(
            vec![
                app(0, 0, 4, false, 3.0, 1.0),
                app(1, 0, 4, false, 3.0, 1.0),
            ],
            vec![ty(0, Market::Reserved, 10.0, 2.0, 1)],
            6,
            0.95,
        )
        .unwrap();
        let portfolio = solve_erich(&problem, &ErichConfig::for_problem(&problem)).unwrap();
        assert_eq!(portfolio.instances.len(), 1);
        assert!(validate(&portfolio, &problem).is_empty());
    }

    #[test]
    fn stage2_unsolvable_when_capacity_too_small() {
        let apps = vec![app(0, 0, 4, false, 12.0, 0.0)];
        let catalog = vec![ty(0, Market::Reserved, 10.0, 2.0, 1)];
        // Load-time validation already rejects this problem; the stage
        // surfaces the same error when driven directly.
        let problem = ProblemInstance {
            applications: apps.clone(),
            catalog: catalog.clone(),
            horizon: 6,
            q_min: 0.95,
        };
        let err =
            stage2_pack_reserved(&problem, 0.95, &apps, &catalog, Portfolio::default()).unwrap_err();
        assert_eq!(err, Error::UnsolvableApp(AppId(0)));
    }

    #[test]
    fn stage3_drops_wasteful_reserved_instance() {
        // Reserved min_term 10 hosting a 2-slot app (cost 10) vs. a 2-slot
        // on-demand replacement (cost 2 * 2 = 4).
        let problem = ProblemInstance::new(
            vec![app(0, 0, 2, false, 3.0, 0.5)],
            vec![
                ty(0, Market::Reserved, 10.0, 1.0, 10),
                ty(1, Market::OnDemand, 10.0, 2.0, 1),
            ],
            12,
            0.95,
        )
        .unwrap();
        let outcome = solve_erich_traced(&problem, &ErichConfig::for_problem(&problem)).unwrap();
        assert_eq!(outcome.stage2_cost, 10.0);
        assert_eq!(outcome.stage3_cost, 4.0);
        let inst = outcome.portfolio.instances.values().next().unwrap();
        assert_eq!(inst.type_ref, TypeId(1));
    }

    #[test]
    fn stage3_without_reserved_instances_is_identity() {
        let problem = ProblemInstance::new(
            vec![app(0, 0, 2, true, 3.0, 0.5)],
            vec![
                ty(0, Market::OnDemand, 10.0, 2.0, 1),
                ty(1, Market::Spot, 10.0, 1.0, 1),
            ],
            4,
            0.95,
        )
        .unwrap();
        let catalog = sort_catalog(&problem.catalog);
        let ondemand: Vec<InstanceType> =
            catalog.iter().filter(|t| t.market == Market::OnDemand).cloned().collect();
        let mut portfolio = Portfolio::default();
        portfolio.instances.insert(
            crate::model::InstanceId(0),
            crate::model::AllocatedInstance {
                id: crate::model::InstanceId(0),
                type_ref: TypeId(1),
                start: 0,
                end: 2,
            },
        );
        portfolio.assignments.insert((AppId(0), 0), crate::model::InstanceId(0));
        portfolio.assignments.insert((AppId(0), 1), crate::model::InstanceId(0));
        let out = stage3_reserved_to_ondemand(&problem, 0.95, &ondemand, portfolio.clone()).unwrap();
        assert_eq!(out, portfolio);
    }

    #[test]
    fn stage3_keeps_original_on_equal_cost() {
        // Reserved: price 1, min_term 4 -> cost 4. On-demand replacement:
        // price 2 over 2 slots -> cost 4. Equal, so the reserved host stays.
        let problem = ProblemInstance::new(
            vec![app(0, 0, 2, false, 3.0, 0.0)],
            vec![
                ty(0, Market::Reserved, 10.0, 1.0, 4),
                ty(1, Market::OnDemand, 10.0, 2.0, 1),
            ],
            6,
            0.95,
        )
        .unwrap();
        let outcome = solve_erich_traced(&problem, &ErichConfig::for_problem(&problem)).unwrap();
        assert_eq!(outcome.stage2_cost, 4.0);
        assert_eq!(outcome.stage3_cost, 4.0);
        let inst = outcome.portfolio.instances.values().next().unwrap();
        assert_eq!(inst.type_ref, TypeId(0));
    }

    #[test]
    fn stage4_fills_existing_capacity_before_opening_spot() {
        // The reserved host bought for the non-preemptible app has room for
        // the preemptible one over its whole lifespan: no new instances.
        let problem = ProblemInstance::new(
            vec![
                app(0, 0, 4, false, 3.0, 0.0),
                app(1, 0, 4, true, 2.0, 0.0),
            ],
            vec![
                ty(0, Market::Reserved, 10.0, 2.0, 1),
                ty(1, Market::Spot, 10.0, 1.0, 1),
            ],
            6,
            0.95,
        )
        .unwrap();
        let portfolio = solve_erich(&problem, &ErichConfig::for_problem(&problem)).unwrap();
        assert_eq!(portfolio.instances.len(), 1);
        assert!(validate(&portfolio, &problem).is_empty());
    }

    #[test]
    fn stage4_opens_one_spot_instance_per_gap() {
        // Existing host covers only the middle of the app's lifespan, so the
        // prefix and suffix become two separate spot instances.
        let problem = ProblemInstance::new(
            vec![app(0, 0, 6, true, 3.0, 0.0)],
            vec![
                ty(0, Market::OnDemand, 10.0, 2.0, 1),
                ty(1, Market::Spot, 10.0, 1.0, 1),
            ],
            8,
            0.95,
        )
        .unwrap();
        let mut portfolio = Portfolio::default();
        portfolio.instances.insert(
            crate::model::InstanceId(0),
            crate::model::AllocatedInstance {
                id: crate::model::InstanceId(0),
                type_ref: TypeId(0),
                start: 2,
                end: 4,
            },
        );
        let apps = sort_applications(&problem.applications);
        let spot: Vec<InstanceType> = sort_catalog(&problem.catalog)
            .into_iter()
            .filter(|t| t.market == Market::Spot)
            .collect();
        let out = stage4_pack_preemptible(&problem, 0.95, &apps, &spot, portfolio).unwrap();

        assert_eq!(out.instances.len(), 3);
        let spans: Vec<(u32, u32)> = out
            .instances
            .values()
            .filter(|i| i.type_ref == TypeId(1))
            .map(|i| (i.start, i.end))
            .collect();
        assert_eq!(spans, vec![(0, 2), (4, 6)]);
        assert!(validate(&out, &problem).is_empty());
    }

    #[test]
    fn stage4_empty_preemptible_set_is_identity() {
        let problem = ProblemInstance::new(
            vec![],
            vec![ty(0, Market::Spot, 10.0, 1.0, 1)],
            4,
            0.95,
        )
        .unwrap();
        let out =
            stage4_pack_preemptible(&problem, 0.95, &[], &problem.catalog, Portfolio::default())
                .unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn empty_application_set_yields_empty_portfolio() {
        let problem = ProblemInstance::new(
            vec![],
            vec![ty(0, Market::Reserved, 10.0, 1.0, 2)],
            4,
            0.95,
        )
        .unwrap();
        let portfolio = solve_erich(&problem, &ErichConfig::for_problem(&problem)).unwrap();
        assert!(portfolio.is_empty());
        assert_eq!(portfolio_cost(&portfolio, &problem).unwrap(), 0.0);
    }

    #[test]
    fn solve_is_deterministic() {
        let problem = ProblemInstance::new(
            vec![
                app(0, 0, 4, false, 3.0, 1.0),
                app(1, 1, 5, true, 2.0, 0.5),
                app(2, 2, 6, false, 4.0, 0.2),
            ],
            vec![
                ty(0, Market::Reserved, 12.0, 2.0, 4),
                ty(1, Market::OnDemand, 8.0, 3.0, 1),
                ty(2, Market::Spot, 6.0, 1.0, 1),
            ],
            8,
            0.95,
        )
        .unwrap();
        let config = ErichConfig::for_problem(&problem);
        let a = solve_erich(&problem, &config).unwrap();
        let b = solve_erich(&problem, &config).unwrap();
        assert_eq!(a, b);
        assert!(validate(&a, &problem).is_empty());
    }

    #[test]
    fn full_solve_matches_stage_composition() {
        let problem = ProblemInstance::new(
            vec![
                app(0, 0, 4, false, 3.0, 1.0),
                app(1, 1, 5, true, 2.0, 0.5),
            ],
            vec![
                ty(0, Market::Reserved, 12.0, 2.0, 4),
                ty(1, Market::OnDemand, 8.0, 3.0, 1),
                ty(2, Market::Spot, 6.0, 1.0, 1),
            ],
            8,
            0.95,
        )
        .unwrap();
        let apps = sort_applications(&problem.applications);
        let catalog = sort_catalog(&problem.catalog);
        let filter = |m: Market| -> Vec<InstanceType> {
            catalog.iter().filter(|t| t.market == m).cloned().collect()
        };
        let non_pre: Vec<Application> = apps.iter().filter(|a| !a.preemptible).cloned().collect();
        let pre: Vec<Application> = apps.iter().filter(|a| a.preemptible).cloned().collect();

        let p = Portfolio::default();
        let p = stage2_pack_reserved(&problem, 0.95, &non_pre, &filter(Market::Reserved), p).unwrap();
        let p = stage3_reserved_to_ondemand(&problem, 0.95, &filter(Market::OnDemand), p).unwrap();
        let p = stage4_pack_preemptible(&problem, 0.95, &pre, &filter(Market::Spot), p).unwrap();

        let direct = solve_erich(&problem, &ErichConfig::for_problem(&problem)).unwrap();
        assert_eq!(p, direct);
    }
}
