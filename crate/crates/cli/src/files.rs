//! On-disk formats: scenario and solution JSON documents plus the profile
//! file accepted by `generate`. Unknown fields are rejected and every number
//! must be finite. Serialization order is fixed, so identical inputs produce
//! byte-identical files.

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;
use stbp_core::datagen::{AppSetProfile, TypeSetProfile};
use stbp_core::model::{
    AllocatedInstance, AppId, Application, InstanceId, InstanceType, Market, Portfolio,
    ProblemInstance, TypeId,
};

/// Marker for errors that are the caller's fault (malformed files, schema
/// violations, unknown names); these exit with the usage code.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage_error<T>(message: impl Into<String>) -> Result<T> {
    Err(UsageError(message.into()).into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MarketField {
    #[serde(rename = "reserved")]
    Reserved,
    #[serde(rename = "on-demand")]
    OnDemand,
    #[serde(rename = "spot")]
    Spot,
}

impl From<MarketField> for Market {
    fn from(m: MarketField) -> Market {
        match m {
            MarketField::Reserved => Market::Reserved,
            MarketField::OnDemand => Market::OnDemand,
            MarketField::Spot => Market::Spot,
        }
    }
}

impl From<Market> for MarketField {
    fn from(m: Market) -> MarketField {
        match m {
            Market::Reserved => MarketField::Reserved,
            Market::OnDemand => MarketField::OnDemand,
            Market::Spot => MarketField::Spot,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub q_min: f64,
    pub horizon: u32,
    pub applications: Vec<ApplicationRecord>,
    pub instance_types: Vec<InstanceTypeRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApplicationRecord {
    pub id: u32,
    pub start: u32,
    pub end: u32,
    pub preemptible: bool,
    pub demand_mean: f64,
    pub demand_std: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceTypeRecord {
    pub id: u32,
    pub market: MarketField,
    pub capacity: f64,
    pub price_per_slot: f64,
    pub min_term: u32,
}

impl ScenarioFile {
    pub fn from_problem(problem: &ProblemInstance) -> Self {
        Self {
            q_min: problem.q_min,
            horizon: problem.horizon,
            applications: problem
                .applications
                .iter()
                .map(|a| ApplicationRecord {
                    id: a.id.0,
                    start: a.start,
                    end: a.end,
                    preemptible: a.preemptible,
                    demand_mean: a.demand_mean,
                    demand_std: a.demand_std,
                })
                .collect(),
            instance_types: problem
                .catalog
                .iter()
                .map(|t| InstanceTypeRecord {
                    id: t.id.0,
                    market: t.market.into(),
                    capacity: t.capacity,
                    price_per_slot: t.price_per_slot,
                    min_term: t.min_term,
                })
                .collect(),
        }
    }

    pub fn into_problem(self) -> Result<ProblemInstance> {
        for value in [self.q_min]
            .into_iter()
            .chain(self.applications.iter().flat_map(|a| [a.demand_mean, a.demand_std]))
            .chain(
                self.instance_types
                    .iter()
                    .flat_map(|t| [t.capacity, t.price_per_slot]),
            )
        {
            if !value.is_finite() {
                return usage_error("scenario contains a non-finite number");
            }
        }
        let applications = self
            .applications
            .into_iter()
            .map(|a| Application {
                id: AppId(a.id),
                start: a.start,
                end: a.end,
                preemptible: a.preemptible,
                demand_mean: a.demand_mean,
                demand_std: a.demand_std,
            })
            .collect();
        let catalog = self
            .instance_types
            .into_iter()
            .map(|t| InstanceType {
                id: TypeId(t.id),
                market: t.market.into(),
                capacity: t.capacity,
                price_per_slot: t.price_per_slot,
                min_term: t.min_term,
            })
            .collect();
        match ProblemInstance::new(applications, catalog, self.horizon, self.q_min) {
            Ok(problem) => Ok(problem),
            Err(err) => usage_error(format!("scenario failed validation: {err}")),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolutionFile {
    pub instances: Vec<InstanceRecord>,
    pub assignments: Vec<AssignmentRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceRecord {
    pub id: u32,
    pub type_ref: u32,
    pub start: u32,
    pub end: u32,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssignmentRecord {
    pub app: u32,
    pub slot: u32,
    pub instance: u32,
}

impl SolutionFile {
    pub fn from_portfolio(portfolio: &Portfolio) -> Self {
        Self {
            instances: portfolio
                .instances
                .values()
                .map(|i| InstanceRecord {
                    id: i.id.0,
                    type_ref: i.type_ref.0,
                    start: i.start,
                    end: i.end,
                })
                .collect(),
            assignments: portfolio
                .assignments
                .iter()
                .map(|(&(app, slot), &inst)| AssignmentRecord {
                    app: app.0,
                    slot,
                    instance: inst.0,
                })
                .collect(),
        }
    }

    /// Schema-checked reconstruction: every referenced app, type and
    /// instance id must exist.
    pub fn into_portfolio(self, problem: &ProblemInstance) -> Result<Portfolio> {
        let mut portfolio = Portfolio::default();
        for record in self.instances {
            if problem.instance_type(TypeId(record.type_ref)).is_none() {
                return usage_error(format!(
                    "solution instance {} references unknown type {}",
                    record.id, record.type_ref
                ));
            }
            let id = InstanceId(record.id);
            if portfolio
                .instances
                .insert(
                    id,
                    AllocatedInstance {
                        id,
                        type_ref: TypeId(record.type_ref),
                        start: record.start,
                        end: record.end,
                    },
                )
                .is_some()
            {
                return usage_error(format!("solution repeats instance id {}", record.id));
            }
        }
        for record in self.assignments {
            if problem.app(AppId(record.app)).is_none() {
                return usage_error(format!(
                    "solution references unknown app id {}",
                    record.app
                ));
            }
            if !portfolio.instances.contains_key(&InstanceId(record.instance)) {
                return usage_error(format!(
                    "solution references unknown instance id {}",
                    record.instance
                ));
            }
            if portfolio
                .assignments
                .insert((AppId(record.app), record.slot), InstanceId(record.instance))
                .is_some()
            {
                return usage_error(format!(
                    "solution assigns app {} twice at slot {}",
                    record.app, record.slot
                ));
            }
        }
        Ok(portfolio)
    }
}

/// Custom generation profile accepted by `generate --profile <file.json>`.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileFile {
    pub applications: AppProfileRecord,
    pub instance_types: TypeProfileRecord,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppProfileRecord {
    pub n_non_preemptible: usize,
    pub n_preemptible: usize,
    pub mean_demand: f64,
    pub std_demand: f64,
    pub mean_sigma: f64,
    pub std_sigma: f64,
    pub mean_periods: f64,
    pub std_periods: f64,
    pub horizon: u32,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TypeProfileRecord {
    pub n_types: usize,
    pub mean_capacity: f64,
    pub std_capacity: f64,
    pub mean_price_reserved: f64,
    pub std_price_reserved: f64,
    pub mean_price_on_demand: f64,
    pub std_price_on_demand: f64,
    pub mean_price_spot: f64,
    pub std_price_spot: f64,
    pub reserved_min_term_min: u32,
    pub reserved_min_term_max: u32,
}

impl ProfileFile {
    pub fn into_profiles(self) -> (AppSetProfile, TypeSetProfile) {
        let a = self.applications;
        let t = self.instance_types;
        (
            AppSetProfile {
                n_non_preemptible: a.n_non_preemptible,
                n_preemptible: a.n_preemptible,
                mean_demand: a.mean_demand,
                std_demand: a.std_demand,
                mean_sigma: a.mean_sigma,
                std_sigma: a.std_sigma,
                mean_periods: a.mean_periods,
                std_periods: a.std_periods,
                horizon: a.horizon,
            },
            TypeSetProfile {
                n_types: t.n_types,
                mean_capacity: t.mean_capacity,
                std_capacity: t.std_capacity,
                mean_price_reserved: t.mean_price_reserved,
                std_price_reserved: t.std_price_reserved,
                mean_price_on_demand: t.mean_price_on_demand,
                std_price_on_demand: t.std_price_on_demand,
                mean_price_spot: t.mean_price_spot,
                std_price_spot: t.std_price_spot,
                reserved_min_term_range: (t.reserved_min_term_min, t.reserved_min_term_max),
            },
        )
    }
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read {what} file {}", path.display()))?;
    match serde_json::from_str(&text) {
        Ok(value) => Ok(value),
        Err(err) => usage_error(format!("malformed {what} file {}: {err}", path.display())),
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}
