//! Genetic operators: hybrid initialization, roulette-wheel selection, the
//! temporal zip-merge crossover, dominance-based mutation, first-fit repair
//! and the elitist merge.

use super::chromosome::Chromosome;
use super::GaConfig;
use crate::error::{Error, Result};
use crate::model::{
    feasible_with_z, AppId, Application, InstanceId, InstanceType, ProblemInstance,
};
use crate::packing::{Ctx, Packing};
use rand::Rng;
use std::collections::{BTreeMap, BTreeSet};

/// Catalog types able to host the app alone on a compatible market, in
/// catalog order.
fn fitting_types<'p>(ctx: &Ctx<'p>, app: &Application) -> Vec<&'p InstanceType> {
    ctx.problem.catalog.iter().filter(|ty| ctx.fits_alone(app, ty)).collect()
}

/// Builds one chromosome by placing every application either greedily
/// (first fit onto an existing instance, reducing the instance count) or at
/// a uniformly random feasible placement, possibly opening an instance of a
/// random fitting type.
fn build_individual(
    ctx: &Ctx,
    config: &GaConfig,
    fits: &BTreeMap<AppId, Vec<&InstanceType>>,
    rng: &mut impl Rng,
) -> Result<Chromosome> {
    let mut packing = Packing::default();
    for app in &ctx.problem.applications {
        let fitting = &fits[&app.id];
        let hosts: Vec<InstanceId> = packing
            .instance_ids()
            .into_iter()
            .filter(|&id| packing.can_place(ctx, app, id, app.start, app.end))
            .collect();
        let greedy = rng.gen::<f64>() < config.greedy_init_fraction;
        let placement = if greedy {
            match hosts.first() {
                Some(&id) => Placement::Existing(id),
                None if fitting.is_empty() => return Err(Error::UnsolvableApp(app.id)),
                None => Placement::Fresh(fitting[rng.gen_range(0..fitting.len())]),
            }
        } else {
            let total = hosts.len() + fitting.len();
            if total == 0 {
                return Err(Error::UnsolvableApp(app.id));
            }
            let pick = rng.gen_range(0..total);
            if pick < hosts.len() {
                Placement::Existing(hosts[pick])
            } else {
                Placement::Fresh(fitting[pick - hosts.len()])
            }
        };
        let id = match placement {
            Placement::Existing(id) => id,
            Placement::Fresh(ty) => {
                let (start, end) = ctx.span_for(ty, app.start, app.end);
                packing.alloc(ty.id, start, end)
            }
        };
        packing.place(app.id, id, app.slots());
    }
    Ok(Chromosome::from_packing(packing, ctx))
}

enum Placement<'t> {
    Existing(InstanceId),
    Fresh(&'t InstanceType),
}

/// Creates the initial population: per application an independent coin
/// decides between the greedy and the random placement path.
pub fn init_population(problem: &ProblemInstance, config: &GaConfig) -> Result<Vec<Chromosome>> {
    let ctx = Ctx::new(problem, problem.q_min)?;
    let fits: BTreeMap<AppId, Vec<&InstanceType>> = problem
        .applications
        .iter()
        .map(|a| (a.id, fitting_types(&ctx, a)))
        .collect();
    (0..config.population_size)
        .map(|k| {
            let mut rng = super::stream_rng(config.rng_seed, super::PHASE_INIT, 0, k as u64);
            build_individual(&ctx, config, &fits, &mut rng)
        })
        .collect()
}

/// Roulette-wheel parent selection for a minimization objective: the weight
/// of an individual is `max_cost - cost + eps`, normalized over the
/// population. Returns index pairs; the two parents of a pair are distinct
/// whenever the population has at least two members.
pub fn select_parents(
    population: &[Chromosome],
    pairs: usize,
    rng: &mut impl Rng,
) -> Vec<(usize, usize)> {
    assert!(!population.is_empty(), "selection needs a non-empty population");
    let max_cost = population.iter().map(|c| c.fitness()).fold(f64::MIN, f64::max);
    let eps = 1e-6 * max_cost;
    let weights: Vec<f64> = population.iter().map(|c| max_cost - c.fitness() + eps).collect();
    let total: f64 = weights.iter().sum();

    let mut selected = Vec::with_capacity(pairs);
    for _ in 0..pairs {
        let a = roulette_draw(&weights, total, rng);
        let mut b = roulette_draw(&weights, total, rng);
        while population.len() >= 2 && b == a {
            b = roulette_draw(&weights, total, rng);
        }
        selected.push((a, b));
    }
    selected
}

fn roulette_draw(weights: &[f64], total: f64, rng: &mut impl Rng) -> usize {
    if total <= 0.0 {
        return rng.gen_range(0..weights.len());
    }
    let mut r = rng.gen::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        r -= w;
        if r <= 0.0 {
            return i;
        }
    }
    weights.len() - 1
}

/// Instance ids of a parent ranked for transmission: average utilization
/// rate descending, price per slot ascending, id ascending.
fn ranked_instances(ctx: &Ctx, packing: &Packing) -> Vec<InstanceId> {
    let mut keyed: Vec<(InstanceId, f64, f64)> = packing
        .instances
        .iter()
        .map(|(&id, packed)| {
            let ty = ctx.instance_type(packed.inst.type_ref).expect("validated type");
            let assigned: f64 = packed
                .members
                .values()
                .flatten()
                .map(|&a| ctx.app(a).map(|a| a.demand_mean).unwrap_or(0.0))
                .sum();
            let util = assigned / (ty.capacity * f64::from(packed.inst.duration()));
            (id, util, ty.price_per_slot)
        })
        .collect();
    keyed.sort_by(|a, b| {
        b.1.total_cmp(&a.1).then_with(|| a.2.total_cmp(&b.2)).then_with(|| a.0.cmp(&b.0))
    });
    keyed.into_iter().map(|(id, _, _)| id).collect()
}

/// Temporal zip-merge crossover. Walks the time slots in order; at each
/// slot the parents' active instances, ranked by utilization and cost, are
/// zip-merged and each newly seen instance is adopted together with its
/// assignments. Hosts of already-assigned applications are eliminated
/// whole, as are hosts whose adoption would break a constraint; the
/// applications this leaves uncovered are reinserted by [`repair`]'s
/// first-fit heuristic, which packs them into the adopted cover's leftover
/// capacity before opening anything new.
pub fn crossover(
    parent_a: &Chromosome,
    parent_b: &Chromosome,
    problem: &ProblemInstance,
    rng: &mut impl Rng,
) -> Result<Chromosome> {
    let ctx = Ctx::new(problem, problem.q_min)?;
    let parents = [&parent_a.packing, &parent_b.packing];
    let ranked = [ranked_instances(&ctx, parents[0]), ranked_instances(&ctx, parents[1])];
    let mut decided = [BTreeSet::<InstanceId>::new(), BTreeSet::<InstanceId>::new()];
    let mut child = Packing::default();

    for t in 0..problem.horizon {
        let active = |side: usize| -> Vec<InstanceId> {
            ranked[side]
                .iter()
                .copied()
                .filter(|id| {
                    let inst = &parents[side].instances[id].inst;
                    inst.start <= t && t < inst.end
                })
                .collect()
        };
        let a_active = active(0);
        let b_active = active(1);
        let mut merged = Vec::with_capacity(a_active.len() + b_active.len());
        for i in 0..a_active.len().max(b_active.len()) {
            if let Some(&id) = a_active.get(i) {
                merged.push((0usize, id));
            }
            if let Some(&id) = b_active.get(i) {
                merged.push((1usize, id));
            }
        }

        for (side, iid) in merged {
            if !decided[side].insert(iid) {
                continue;
            }
            adopt_instance(&ctx, &mut child, parents[side], iid)?;
        }
    }

    // Reinsert whatever the pruning left unassigned.
    let mut orphans = Vec::new();
    for app in &problem.applications {
        for gap in child.gaps_of(app) {
            orphans.push((app.id, gap));
        }
    }
    repair_gaps(&ctx, &mut child, &orphans, rng)?;
    Ok(Chromosome::from_packing(child, &ctx))
}

/// Copies one parent instance into the child when its assignments do not
/// clash with what the child already hosts. An instance carrying any
/// already-adopted application (or, for preemptible apps, any
/// already-covered slot) is eliminated whole; its remaining apps stay
/// orphaned for the repair pass, which packs them into the adopted cover
/// first. Constraint-breaking adoptions are skipped the same way.
fn adopt_instance(
    ctx: &Ctx,
    child: &mut Packing,
    parent: &Packing,
    instance: InstanceId,
) -> Result<()> {
    let packed = &parent.instances[&instance];
    let mut plan: Vec<(AppId, BTreeSet<u32>)> = Vec::new();
    for app_id in packed.apps() {
        let app = ctx.app(app_id)?;
        let slots = packed.slots_of(app_id);
        if !app.preemptible {
            if child.placements.contains_key(&app_id) {
                return Ok(()); // host of an already assigned application
            }
            plan.push((app_id, slots));
        } else {
            let taken = child.placements.get(&app_id);
            if slots.iter().any(|t| taken.is_some_and(|m| m.contains_key(t))) {
                return Ok(());
            }
            plan.push((app_id, slots));
        }
    }
    if plan.is_empty() {
        return Ok(());
    }

    // Guard against constraint breaks. With q_min >= 0.5 a subset of a valid
    // parent slot is always feasible; below 0.5 the quantile flips sign and
    // dropping variance can hurt, so check explicitly.
    let ty = ctx.instance_type(packed.inst.type_ref)?;
    let mut per_slot: BTreeMap<u32, BTreeSet<AppId>> = BTreeMap::new();
    for (app_id, slots) in &plan {
        for &t in slots {
            per_slot.entry(t).or_default().insert(*app_id);
        }
    }
    for apps in per_slot.values() {
        let mut mean = 0.0;
        let mut var = 0.0;
        for &a in apps {
            let app = ctx.app(a)?;
            mean += app.demand_mean;
            var += app.demand_var();
        }
        if !feasible_with_z(mean, var, ty.capacity, ctx.z) {
            return Ok(()); // skip the whole instance
        }
    }

    let id = child.alloc(packed.inst.type_ref, packed.inst.start, packed.inst.end);
    for (app_id, slots) in plan {
        child.place(app_id, id, slots);
    }
    Ok(())
}

/// Temporal dominance: the candidate's lifespan covers every slot the
/// partition occupies on the instance, and the candidate's expected demand
/// strictly exceeds the partition's aggregate expected demand. For
/// independent normal demands the probability-above-one-half criterion
/// reduces to that strict mean comparison. Partitions are limited to two
/// applications.
pub fn dominates(
    chromosome: &Chromosome,
    instance: InstanceId,
    candidate: &Application,
    partition: &[&Application],
) -> bool {
    if partition.is_empty() || partition.len() > 2 {
        return false;
    }
    let packed = match chromosome.packing.instances.get(&instance) {
        Some(p) => p,
        None => return false,
    };
    let mut partition_mean = 0.0;
    for member in partition {
        if member.id == candidate.id {
            return false;
        }
        let slots = packed.slots_of(member.id);
        if slots.is_empty() {
            return false; // not assigned to this instance
        }
        let covered = slots.iter().all(|&t| candidate.start <= t && t < candidate.end);
        if !covered {
            return false;
        }
        partition_mean += member.demand_mean;
    }
    candidate.demand_mean > partition_mean
}

/// Dominance mutation: picks a random assigned application and a random
/// instance, searches the instance's partitions of size one and two in
/// deterministic order, and swaps the first dominated partition for the
/// candidate, rehosting the candidate over its whole lifespan. Evicted
/// applications are reinserted by [`repair`]. Without a feasible dominated
/// partition the chromosome is returned unchanged.
pub fn mutate(
    chromosome: Chromosome,
    problem: &ProblemInstance,
    rng: &mut impl Rng,
) -> Result<Chromosome> {
    let ctx = Ctx::new(problem, problem.q_min)?;
    let apps: Vec<AppId> = chromosome.packing.placements.keys().copied().collect();
    let instances = chromosome.packing.instance_ids();
    if apps.is_empty() || instances.is_empty() {
        return Ok(chromosome);
    }
    let candidate_id = apps[rng.gen_range(0..apps.len())];
    let instance = instances[rng.gen_range(0..instances.len())];
    let candidate = ctx.app(candidate_id)?;

    // The instance must be able to carry the candidate's whole lifespan.
    if !chromosome.packing.instances[&instance].inst.covers(candidate.start, candidate.end) {
        return Ok(chromosome);
    }

    let others: Vec<AppId> = chromosome.packing.instances[&instance]
        .apps()
        .into_iter()
        .filter(|&a| a != candidate_id)
        .collect();

    let mut partitions: Vec<Vec<AppId>> = others.iter().map(|&a| vec![a]).collect();
    for i in 0..others.len() {
        for j in i + 1..others.len() {
            partitions.push(vec![others[i], others[j]]);
        }
    }

    for partition in partitions {
        let members: Vec<&Application> = partition
            .iter()
            .map(|&a| ctx.app(a))
            .collect::<Result<_>>()?;
        if !dominates(&chromosome, instance, candidate, &members)
            || !swap_feasible(&ctx, &chromosome.packing, instance, candidate, &partition)
        {
            continue;
        }
        return apply_swap(&ctx, chromosome, instance, candidate, &partition, rng);
    }
    Ok(chromosome)
}

/// Whether hosting the candidate on the instance, with the partition gone,
/// keeps every lifespan slot chance-feasible.
fn swap_feasible(
    ctx: &Ctx,
    packing: &Packing,
    instance: InstanceId,
    candidate: &Application,
    partition: &[AppId],
) -> bool {
    let packed = &packing.instances[&instance];
    let ty = match ctx.instance_type(packed.inst.type_ref) {
        Ok(ty) => ty,
        Err(_) => return false,
    };
    if !ctx.market_compatible(candidate, ty.market) {
        return false;
    }
    for t in candidate.slots() {
        let mut members: BTreeSet<AppId> =
            packed.members.get(&t).cloned().unwrap_or_default();
        for p in partition {
            members.remove(p);
        }
        members.insert(candidate.id);
        let mut mean = 0.0;
        let mut var = 0.0;
        for &a in &members {
            let app = if a == candidate.id {
                candidate
            } else {
                match ctx.app(a) {
                    Ok(app) => app,
                    Err(_) => return false,
                }
            };
            mean += app.demand_mean;
            var += app.demand_var();
        }
        if !feasible_with_z(mean, var, ty.capacity, ctx.z) {
            return false;
        }
    }
    true
}

fn apply_swap(
    ctx: &Ctx,
    mut chromosome: Chromosome,
    instance: InstanceId,
    candidate: &Application,
    partition: &[AppId],
    rng: &mut impl Rng,
) -> Result<Chromosome> {
    let packing = &mut chromosome.packing;
    for &p in partition {
        packing.unplace(p, instance);
    }
    let previous_hosts = packing.unplace_everywhere(candidate.id);
    packing.place(candidate.id, instance, candidate.slots());
    for host in previous_hosts {
        if host != instance {
            packing.drop_if_unused(host);
        }
    }

    let mut orphans = Vec::new();
    for &p in partition {
        let app = ctx.app(p)?;
        for gap in packing.gaps_of(app) {
            orphans.push((p, gap));
        }
    }
    repair_gaps(ctx, packing, &orphans, rng)?;
    chromosome.refresh_fitness(ctx);
    Ok(chromosome)
}

/// Insertion heuristic: for each gap of an orphaned application, assign the
/// first existing instance (in creation order) able to host the whole gap;
/// failing that, open an instance of a uniformly random fitting type
/// spanning the gap, extended to the minimum term where the type requires
/// one. Non-preemptible applications are only ever orphaned whole, so their
/// gap equals their lifespan.
pub fn repair(
    chromosome: Chromosome,
    orphans: &[(AppId, (u32, u32))],
    problem: &ProblemInstance,
    rng: &mut impl Rng,
) -> Result<Chromosome> {
    let ctx = Ctx::new(problem, problem.q_min)?;
    let mut chromosome = chromosome;
    repair_gaps(&ctx, &mut chromosome.packing, orphans, rng)?;
    chromosome.refresh_fitness(&ctx);
    Ok(chromosome)
}

pub(crate) fn repair_gaps(
    ctx: &Ctx,
    packing: &mut Packing,
    orphans: &[(AppId, (u32, u32))],
    rng: &mut impl Rng,
) -> Result<()> {
    for &(app_id, (g0, g1)) in orphans {
        let app = ctx.app(app_id)?;
        debug_assert!(
            app.preemptible || (g0, g1) == (app.start, app.end),
            "non-preemptible orphans must be rehosted whole"
        );
        let host = packing
            .instance_ids()
            .into_iter()
            .find(|&id| packing.can_place(ctx, app, id, g0, g1));
        match host {
            Some(id) => packing.place(app_id, id, g0..g1),
            None => {
                let fitting = fitting_types(ctx, app);
                if fitting.is_empty() {
                    return Err(Error::UnsolvableApp(app_id));
                }
                let ty = fitting[rng.gen_range(0..fitting.len())];
                let (start, end) = ctx.span_for(ty, g0, g1);
                let id = packing.alloc(ty.id, start, end);
                packing.place(app_id, id, g0..g1);
            }
        }
    }
    Ok(())
}

/// Elitist merge: keeps the `population.len()` cheapest chromosomes of the
/// union, ties broken by insertion order (parents before offspring).
pub fn merge_generation(
    population: Vec<Chromosome>,
    offspring: Vec<Chromosome>,
) -> Vec<Chromosome> {
    let size = population.len();
    let mut all = population;
    all.extend(offspring);
    all.sort_by(|a, b| a.fitness().total_cmp(&b.fitness()));
    all.truncate(size);
    all
}
