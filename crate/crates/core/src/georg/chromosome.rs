//! Temporal group encoding: each locus is a time slot whose allele is the
//! set of instances active at that slot, each mapped to the applications it
//! hosts there. Backed by the shared packing state, which carries the same
//! relation keyed by instance.

use crate::error::Result;
use crate::model::{AppId, InstanceId, Portfolio, ProblemInstance};
use crate::packing::{Ctx, Packing};
use std::collections::{BTreeMap, BTreeSet};

/// One locus of the encoding: the instances active at a slot, each mapped
/// to the applications it hosts there.
pub type Gene = BTreeMap<InstanceId, BTreeSet<AppId>>;

/// One individual: a complete assignment plus its cached cost.
#[derive(Debug, Clone)]
pub struct Chromosome {
    pub(crate) packing: Packing,
    fitness: f64,
}

impl Chromosome {
    pub(crate) fn from_packing(packing: Packing, ctx: &Ctx) -> Self {
        let fitness = packing.cost(ctx);
        Self { packing, fitness }
    }

    pub(crate) fn refresh_fitness(&mut self, ctx: &Ctx) {
        self.fitness = self.packing.cost(ctx);
    }

    /// Cached total cost of the decoded portfolio.
    pub fn fitness(&self) -> f64 {
        self.fitness
    }

    /// Decodes the chromosome into its portfolio; the assignment relation is
    /// identical in both representations.
    pub fn to_portfolio(&self) -> Portfolio {
        self.packing.to_portfolio()
    }

    /// Encodes an existing portfolio. Fails on assignments referencing
    /// unknown instances.
    pub fn from_portfolio(portfolio: &Portfolio, problem: &ProblemInstance) -> Result<Self> {
        let ctx = Ctx::new(problem, problem.q_min)?;
        let packing = Packing::from_portfolio(portfolio)?;
        Ok(Self::from_packing(packing, &ctx))
    }

    /// Slot-indexed view of the encoding: for every slot in `[0, horizon)`,
    /// the active instances with the apps they host at that slot.
    pub fn genes(&self, horizon: u32) -> Vec<Gene> {
        let mut genes = vec![Gene::new(); horizon as usize];
        for (&id, packed) in &self.packing.instances {
            for t in packed.inst.start..packed.inst.end.min(horizon) {
                let apps = packed.members.get(&t).cloned().unwrap_or_default();
                genes[t as usize].insert(id, apps);
            }
        }
        genes
    }

    /// Number of instances in the encoded portfolio.
    pub fn instance_count(&self) -> usize {
        self.packing.instances.len()
    }
}
