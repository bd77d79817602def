//! Synthetic scenario generator.
//!
//! Application sets and instance-type catalogs are drawn to match target
//! sample moments (mean and spread of demands, demand deviations, lifespans,
//! capacities and per-market prices). Positive magnitudes are sampled from
//! moment-matched lognormals; a draw is accepted only when its sample
//! moments land within tolerance of the targets, with a retry budget.
//! Everything is seeded and deterministic.

use crate::error::{Error, Result};
use crate::model::{
    feasible_with_z, standard_normal_quantile, AppId, Application, InstanceType, Market,
    ProblemInstance, TypeId,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};

/// Relative tolerance for sample-moment conformance checks.
const MOMENT_TOLERANCE: f64 = 0.15;
/// Sample size from which moment checks are applied.
const MOMENT_CHECK_MIN: usize = 20;
/// Attempts before a generation request is declared failed.
const RETRY_CAP: usize = 512;

/// Default quality-of-service level used by built-in cases.
pub const DEFAULT_Q_MIN: f64 = 0.95;

/// Statistical shape of an application set.
#[derive(Debug, Clone, PartialEq)]
pub struct AppSetProfile {
    pub n_non_preemptible: usize,
    pub n_preemptible: usize,
    /// Target mean and spread of the per-app expected demand.
    pub mean_demand: f64,
    pub std_demand: f64,
    /// Target mean and spread of the per-app demand deviation.
    pub mean_sigma: f64,
    pub std_sigma: f64,
    /// Target mean and spread of lifespan lengths, in slots.
    pub mean_periods: f64,
    pub std_periods: f64,
    /// Sampling window; lifespans are placed uniformly within it.
    pub horizon: u32,
}

impl AppSetProfile {
    pub fn total(&self) -> usize {
        self.n_non_preemptible + self.n_preemptible
    }

    /// Same population at a shorter time scale: lifespan moments divided by
    /// `factor`, horizon recomputed.
    pub fn scaled_down(&self, factor: f64) -> Self {
        let mean_periods = self.mean_periods / factor;
        let std_periods = self.std_periods / factor;
        Self {
            mean_periods,
            std_periods,
            horizon: horizon_for(mean_periods, std_periods),
            ..self.clone()
        }
    }

    fn check(&self) -> Result<()> {
        let positive = [
            ("mean_demand", self.mean_demand),
            ("mean_periods", self.mean_periods),
        ];
        for (what, v) in positive {
            if v.is_nan() || v <= 0.0 {
                return Err(Error::Generation(format!("{what} must be > 0")));
            }
        }
        let non_negative = [
            ("std_demand", self.std_demand),
            ("mean_sigma", self.mean_sigma),
            ("std_sigma", self.std_sigma),
            ("std_periods", self.std_periods),
        ];
        for (what, v) in non_negative {
            if v.is_nan() || v < 0.0 {
                return Err(Error::Generation(format!("{what} must be >= 0")));
            }
        }
        if self.mean_periods > f64::from(self.horizon) {
            return Err(Error::Generation("mean_periods exceeds horizon".into()));
        }
        Ok(())
    }
}

/// Statistical shape of an instance-type catalog. Types are split evenly
/// across the three markets.
#[derive(Debug, Clone, PartialEq)]
pub struct TypeSetProfile {
    pub n_types: usize,
    pub mean_capacity: f64,
    pub std_capacity: f64,
    pub mean_price_reserved: f64,
    pub std_price_reserved: f64,
    pub mean_price_on_demand: f64,
    pub std_price_on_demand: f64,
    pub mean_price_spot: f64,
    pub std_price_spot: f64,
    /// Minimum-term range for reserved types, inclusive.
    pub reserved_min_term_range: (u32, u32),
}

impl TypeSetProfile {
    fn check(&self) -> Result<()> {
        if self.n_types < 1 {
            return Err(Error::Generation("n_types must be >= 1".into()));
        }
        for (what, v) in [
            ("mean_capacity", self.mean_capacity),
            ("mean_price_reserved", self.mean_price_reserved),
            ("mean_price_on_demand", self.mean_price_on_demand),
            ("mean_price_spot", self.mean_price_spot),
        ] {
            if v.is_nan() || v <= 0.0 {
                return Err(Error::Generation(format!("{what} must be > 0")));
            }
        }
        let (lo, hi) = self.reserved_min_term_range;
        if lo < 1 || lo > hi {
            return Err(Error::Generation("invalid reserved_min_term_range".into()));
        }
        Ok(())
    }
}

/// Sampling window that comfortably fits the lifespan distribution.
pub fn horizon_for(mean_periods: f64, std_periods: f64) -> u32 {
    (mean_periods + 4.0 * std_periods).ceil() as u32
}

/// Reserved minimum terms proportionate to the time scale: the base range
/// [10, 100] shifts up one decade for every decade of horizon past 10^2.
pub fn min_term_range_for_horizon(horizon: u32) -> (u32, u32) {
    let decades = f64::from(horizon.max(1)).log10().floor() as i32;
    let scale = 10u32.pow(decades.saturating_sub(2).max(0) as u32);
    (10 * scale, 100 * scale)
}

/// Positive sampler matching a target mean and standard deviation exactly
/// in distribution (lognormal moment matching). A zero spread collapses to
/// the constant mean; a zero mean collapses to the constant zero.
#[derive(Debug, Clone, Copy)]
struct PositiveSampler {
    kind: SamplerKind,
}

#[derive(Debug, Clone, Copy)]
enum SamplerKind {
    Zero,
    Constant(f64),
    LogNormal { dist: LogNormal<f64>, mu: f64, sigma: f64 },
}

impl PositiveSampler {
    fn new(mean: f64, std: f64) -> Self {
        let kind = if mean <= 0.0 {
            SamplerKind::Zero
        } else if std <= 0.0 {
            SamplerKind::Constant(mean)
        } else {
            let cv2 = (std / mean).powi(2);
            let sigma2 = (1.0 + cv2).ln();
            let mu = mean.ln() - sigma2 / 2.0;
            let sigma = sigma2.sqrt();
            SamplerKind::LogNormal {
                dist: LogNormal::new(mu, sigma).expect("finite parameters"),
                mu,
                sigma,
            }
        };
        Self { kind }
    }

    fn sample(&self, rng: &mut impl Rng) -> f64 {
        match self.kind {
            SamplerKind::Zero => 0.0,
            SamplerKind::Constant(c) => c,
            SamplerKind::LogNormal { dist, .. } => dist.sample(rng),
        }
    }

    /// E[X^p] of the sampled distribution.
    fn moment(&self, p: f64) -> f64 {
        match self.kind {
            SamplerKind::Zero => 0.0,
            SamplerKind::Constant(c) => c.powf(p),
            SamplerKind::LogNormal { mu, sigma, .. } => {
                (p * mu + p * p * sigma * sigma / 2.0).exp()
            }
        }
    }
}

fn sample_mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn sample_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let mean = sample_mean(values);
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

fn within_tolerance(value: f64, target: f64) -> bool {
    if target == 0.0 {
        value.abs() < 1e-9
    } else {
        (value - target).abs() <= MOMENT_TOLERANCE * target.abs()
    }
}

/// Generates an application set matching the profile. Demand means are
/// floored at 0.1 and lifespans at one slot; preemptibility flags match the
/// profile counts exactly. For sets of 20 or more apps the sample moments
/// must land within 15% of the targets, otherwise the set is redrawn, up to
/// a retry cap.
pub fn generate_apps(profile: &AppSetProfile, seed: u64) -> Result<Vec<Application>> {
    profile.check()?;
    let n = profile.total();
    if n == 0 {
        return Ok(Vec::new());
    }
    let demand = PositiveSampler::new(profile.mean_demand, profile.std_demand);
    let sigma = PositiveSampler::new(profile.mean_sigma, profile.std_sigma);
    let periods = PositiveSampler::new(profile.mean_periods, profile.std_periods);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    for _attempt in 0..RETRY_CAP {
        let mut apps = Vec::with_capacity(n);
        for k in 0..n {
            let demand_mean = demand.sample(&mut rng).max(0.1);
            let demand_std = sigma.sample(&mut rng);
            let length = (periods.sample(&mut rng).round() as i64)
                .clamp(1, i64::from(profile.horizon)) as u32;
            let start = rng.gen_range(0..=profile.horizon - length);
            apps.push(Application {
                id: AppId(k as u32),
                start,
                end: start + length,
                preemptible: k >= profile.n_non_preemptible,
                demand_mean,
                demand_std,
            });
        }
        if n < MOMENT_CHECK_MIN || moments_match(&apps, profile) {
            return Ok(apps);
        }
    }
    Err(Error::Generation(format!(
        "no application draw matched the profile moments within {} attempts",
        RETRY_CAP
    )))
}

fn moments_match(apps: &[Application], profile: &AppSetProfile) -> bool {
    let means: Vec<f64> = apps.iter().map(|a| a.demand_mean).collect();
    let sigmas: Vec<f64> = apps.iter().map(|a| a.demand_std).collect();
    let lengths: Vec<f64> = apps.iter().map(|a| f64::from(a.duration())).collect();
    within_tolerance(sample_mean(&means), profile.mean_demand)
        && within_tolerance(sample_std(&means), profile.std_demand)
        && within_tolerance(sample_mean(&sigmas), profile.mean_sigma)
        && within_tolerance(sample_std(&sigmas), profile.std_sigma)
        && within_tolerance(sample_mean(&lengths), profile.mean_periods)
        && within_tolerance(sample_std(&lengths), profile.std_periods)
}

/// Per-unit price premium for large machines: the effective rate grows as
/// capacity^SIZE_PREMIUM_EXPONENT, which keeps the cheapest
/// price-per-capacity offers among the smaller machines, the shape of real
/// cloud catalogs.
const SIZE_PREMIUM_EXPONENT: f64 = 0.1;
/// Residual per-type price noise (coefficient of variation).
const PRICE_NOISE_CV: f64 = 0.05;

/// Generates an instance-type catalog matching the profile: an even market
/// split, capacities shared across markets, prices following capacity with
/// a mild size premium and per-market base rates calibrated to reproduce
/// the target price means, and uniform minimum terms for reserved types.
/// Sample means of capacity and prices must land within 15% of the targets
/// for markets with at least 20 types.
pub fn generate_types(profile: &TypeSetProfile, seed: u64) -> Result<Vec<InstanceType>> {
    profile.check()?;
    let base = profile.n_types / 3;
    let rem = profile.n_types % 3;
    let counts = [
        (Market::Reserved, base + usize::from(rem > 0)),
        (Market::OnDemand, base + usize::from(rem > 1)),
        (Market::Spot, base),
    ];
    let capacity = PositiveSampler::new(profile.mean_capacity, profile.std_capacity);
    // E[price] = base * E[capacity^(1+premium)] * E[noise]; noise has mean 1.
    let sized_capacity_mean = capacity.moment(1.0 + SIZE_PREMIUM_EXPONENT);
    let base_rate_of = |market: Market| {
        let mean_price = match market {
            Market::Reserved => profile.mean_price_reserved,
            Market::OnDemand => profile.mean_price_on_demand,
            Market::Spot => profile.mean_price_spot,
        };
        mean_price / sized_capacity_mean
    };
    let noise = PositiveSampler::new(1.0, PRICE_NOISE_CV);
    let (term_lo, term_hi) = profile.reserved_min_term_range;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    for _attempt in 0..RETRY_CAP {
        let mut types = Vec::with_capacity(profile.n_types);
        let mut id = 0u32;
        for &(market, count) in &counts {
            let base_rate = base_rate_of(market);
            for _ in 0..count {
                let capacity = capacity.sample(&mut rng).max(0.1);
                let price_per_slot = (base_rate
                    * capacity.powf(1.0 + SIZE_PREMIUM_EXPONENT)
                    * noise.sample(&mut rng))
                .max(0.01);
                types.push(InstanceType {
                    id: TypeId(id),
                    market,
                    capacity,
                    price_per_slot,
                    min_term: if market == Market::Reserved {
                        rng.gen_range(term_lo..=term_hi)
                    } else {
                        1
                    },
                });
                id += 1;
            }
        }
        if type_means_match(&types, profile) {
            return Ok(types);
        }
    }
    Err(Error::Generation(format!(
        "no catalog draw matched the profile means within {} attempts",
        RETRY_CAP
    )))
}

fn type_means_match(types: &[InstanceType], profile: &TypeSetProfile) -> bool {
    let caps: Vec<f64> = types.iter().map(|t| t.capacity).collect();
    if caps.len() >= MOMENT_CHECK_MIN && !within_tolerance(sample_mean(&caps), profile.mean_capacity)
    {
        return false;
    }
    for (market, target) in [
        (Market::Reserved, profile.mean_price_reserved),
        (Market::OnDemand, profile.mean_price_on_demand),
        (Market::Spot, profile.mean_price_spot),
    ] {
        let prices: Vec<f64> = types
            .iter()
            .filter(|t| t.market == market)
            .map(|t| t.price_per_slot)
            .collect();
        if prices.len() >= MOMENT_CHECK_MIN && !within_tolerance(sample_mean(&prices), target) {
            return false;
        }
    }
    true
}

fn splitmix(seed: u64, salt: u64) -> u64 {
    let mut x = seed.wrapping_add(salt.wrapping_mul(0x9e3779b97f4a7c15));
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// Composes an application set and a catalog into a solvable problem:
/// horizon tightened to the last app end, and each app guaranteed to fit
/// alone on every market its solvers may need (reserved and on-demand for
/// non-preemptible apps, spot for preemptible ones), resampling offending
/// demands from the profile distributions.
pub fn build_case(
    app_profile: &AppSetProfile,
    type_profile: &TypeSetProfile,
    seed: u64,
    q_min: f64,
) -> Result<ProblemInstance> {
    if !(0.0..=1.0).contains(&q_min) {
        return Err(Error::ProbabilityOutOfRange { what: "q_min", value: q_min });
    }
    let mut apps = generate_apps(app_profile, splitmix(seed, 1))?;
    let types = generate_types(type_profile, splitmix(seed, 2))?;

    let z = standard_normal_quantile(q_min);
    let max_capacity_of = |market: Market| -> f64 {
        types
            .iter()
            .filter(|t| t.market == market)
            .map(|t| t.capacity)
            .fold(0.0, f64::max)
    };
    let needed_markets = |preemptible: bool| -> &'static [Market] {
        if preemptible {
            &[Market::Spot]
        } else {
            &[Market::Reserved, Market::OnDemand]
        }
    };

    let demand = PositiveSampler::new(app_profile.mean_demand, app_profile.std_demand);
    let sigma = PositiveSampler::new(app_profile.mean_sigma, app_profile.std_sigma);
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix(seed, 3));
    for app in apps.iter_mut() {
        let fits = |mean: f64, std: f64| {
            needed_markets(app.preemptible)
                .iter()
                .all(|&m| feasible_with_z(mean, std * std, max_capacity_of(m), z))
        };
        let mut attempts = 0;
        while !fits(app.demand_mean, app.demand_std) {
            attempts += 1;
            if attempts > RETRY_CAP {
                return Err(Error::Generation(format!(
                    "application {} cannot be sized to fit the catalog",
                    app.id
                )));
            }
            app.demand_mean = demand.sample(&mut rng).max(0.1);
            app.demand_std = sigma.sample(&mut rng);
        }
    }

    let horizon = apps.iter().map(|a| a.end).max().unwrap_or(1);
    ProblemInstance::new(apps, types, horizon, q_min)
}

/// Application-set profiles 1 through 6.
pub fn builtin_app_profile(set: usize) -> Option<AppSetProfile> {
    // (non-pre, pre, demand mean/std, sigma mean/std, periods mean/std)
    let rows: [(usize, usize, f64, f64, f64, f64, f64, f64); 6] = [
        (14, 6, 3.27, 1.71, 0.53, 0.48, 43.15, 33.4),
        (59, 41, 3.0, 2.62, 0.53, 0.74, 63.93, 43.94),
        (10, 10, 3.02, 2.01, 0.71, 0.63, 212.2, 167.88),
        (42, 58, 3.1, 2.57, 0.5, 0.59, 237.16, 171.57),
        (7, 13, 3.12, 2.69, 0.6, 0.56, 2758.55, 1996.98),
        (41, 59, 2.78, 1.97, 0.49, 0.57, 2871.74, 2055.67),
    ];
    if !(1..=6).contains(&set) {
        return None;
    }
    let (np, p, dm, ds, sm, ss, pm, ps) = rows[set - 1];
    Some(AppSetProfile {
        n_non_preemptible: np,
        n_preemptible: p,
        mean_demand: dm,
        std_demand: ds,
        mean_sigma: sm,
        std_sigma: ss,
        mean_periods: pm,
        std_periods: ps,
        horizon: horizon_for(pm, ps),
    })
}

/// Instance-type profiles 1 through 3, 500 types each. The minimum-term
/// range is set per case from the paired application profile's time scale.
pub fn builtin_type_profile(set: usize, reserved_min_term_range: (u32, u32)) -> Option<TypeSetProfile> {
    let rows: [(f64, f64, f64, f64, f64, f64, f64, f64); 3] = [
        (9.60, 8.77, 2.27, 2.85, 3.10, 2.16, 2.53, 2.21),
        (10.32, 11.40, 2.16, 2.38, 3.13, 2.57, 3.15, 4.84),
        (9.79, 9.91, 2.41, 3.80, 3.10, 2.41, 2.33, 1.74),
    ];
    if !(1..=3).contains(&set) {
        return None;
    }
    let (cm, cs, rm, rs, om, os, sm, ss) = rows[set - 1];
    Some(TypeSetProfile {
        n_types: 500,
        mean_capacity: cm,
        std_capacity: cs,
        mean_price_reserved: rm,
        std_price_reserved: rs,
        mean_price_on_demand: om,
        std_price_on_demand: os,
        mean_price_spot: sm,
        std_price_spot: ss,
        reserved_min_term_range,
    })
}

/// The six composed test cases: 1 = (apps 1, types 1), 2 = (apps 2, types
/// 1), 3 = (apps 3, types 2), 4 = (apps 4, types 2), 5 = (apps 5, types 3),
/// 6 = (apps 6, types 3).
pub fn builtin_case(case: usize) -> Option<(AppSetProfile, TypeSetProfile)> {
    builtin_case_scaled(case, 1.0)
}

/// Built-in case with lifespans and horizon divided by `scale` for
/// desk-scale experiments.
pub fn builtin_case_scaled(case: usize, scale: f64) -> Option<(AppSetProfile, TypeSetProfile)> {
    let type_set = match case {
        1 | 2 => 1,
        3 | 4 => 2,
        5 | 6 => 3,
        _ => return None,
    };
    let mut apps = builtin_app_profile(case)?;
    if scale != 1.0 {
        apps = apps.scaled_down(scale);
    }
    let types = builtin_type_profile(type_set, min_term_range_for_horizon(apps.horizon))?;
    Some((apps, types))
}
