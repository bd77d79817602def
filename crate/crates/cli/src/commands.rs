//! Subcommand implementations. Each returns the process exit code: 0 for
//! success, 1 for validation or solver failures; usage and parse problems
//! surface as [`UsageError`] and exit with 2.

use crate::files::{
    read_json, usage_error, write_json, ProfileFile, ScenarioFile, SolutionFile,
};
use crate::report::{
    append_result_rows, cost_field, generation_csv_path, write_generation_csv, ResultRow,
};
use anyhow::Result;
use std::path::{Path, PathBuf};
use std::time::Instant;
use stbp_core::datagen::{build_case, builtin_case, AppSetProfile, TypeSetProfile};
use stbp_core::erich::{solve_erich, ErichConfig};
use stbp_core::georg::{solve_georg, GaConfig};
use stbp_core::model::{portfolio_cost, validate, ProblemInstance};
use stbp_core::oracle::{brute_force_optimum, OracleLimits};

fn resolve_profile(name: &str) -> Result<(AppSetProfile, TypeSetProfile)> {
    if let Some(case) = name.strip_prefix("case_") {
        if let Ok(index) = case.parse::<usize>() {
            return match builtin_case(index) {
                Some(pair) => Ok(pair),
                None => usage_error(format!("unknown profile {name}; built-ins are case_1..case_6")),
            };
        }
    }
    let path = Path::new(name);
    if path.exists() {
        let profile: ProfileFile = read_json(path, "profile")?;
        return Ok(profile.into_profiles());
    }
    usage_error(format!(
        "unknown profile {name}; use case_1..case_6 or a profile JSON path"
    ))
}

fn load_scenario(path: &Path) -> Result<ProblemInstance> {
    let scenario: ScenarioFile = read_json(path, "scenario")?;
    scenario.into_problem()
}

fn case_name(path: &Path) -> String {
    path.file_stem().and_then(|s| s.to_str()).unwrap_or("scenario").to_string()
}

pub fn cmd_generate(profile: &str, seed: u64, q_min: f64, out: &Path) -> Result<i32> {
    let (apps, types) = resolve_profile(profile)?;
    let problem = build_case(&apps, &types, seed, q_min)?;
    write_json(out, &ScenarioFile::from_problem(&problem))?;
    println!(
        "wrote {} ({} applications, {} types, horizon {})",
        out.display(),
        problem.applications.len(),
        problem.catalog.len(),
        problem.horizon
    );
    Ok(0)
}

pub struct SolveArgs {
    pub scenario: PathBuf,
    pub algorithm: Algorithm,
    pub seed: u64,
    pub generations: Option<usize>,
    pub population: Option<usize>,
    pub out: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Algorithm {
    Erich,
    Georg,
}

impl Algorithm {
    fn name(self) -> &'static str {
        match self {
            Algorithm::Erich => "erich",
            Algorithm::Georg => "georg",
        }
    }
}

fn ga_config(seed: u64, generations: Option<usize>, population: Option<usize>) -> GaConfig {
    let mut config = match population {
        Some(size) => GaConfig::for_population(size),
        None => GaConfig::default(),
    };
    config.rng_seed = seed;
    if let Some(generations) = generations {
        config.generations = generations;
    }
    config
}

pub fn cmd_solve(args: &SolveArgs) -> Result<i32> {
    let problem = load_scenario(&args.scenario)?;
    let started = Instant::now();
    let (portfolio, generation_stats) = match args.algorithm {
        Algorithm::Erich => {
            (solve_erich(&problem, &ErichConfig::for_problem(&problem))?, None)
        }
        Algorithm::Georg => {
            let outcome =
                solve_georg(&problem, &ga_config(args.seed, args.generations, args.population))?;
            (outcome.best, Some(outcome.stats))
        }
    };
    let wall_time_ms = started.elapsed().as_millis();

    let violations = validate(&portfolio, &problem);
    let cost = portfolio_cost(&portfolio, &problem)?;

    if let Some(out) = &args.out {
        write_json(out, &SolutionFile::from_portfolio(&portfolio))?;
    }
    if let Some(report) = &args.report {
        let seed_field = match args.algorithm {
            Algorithm::Erich => String::new(),
            Algorithm::Georg => args.seed.to_string(),
        };
        let row = ResultRow::new(
            args.algorithm.name(),
            &case_name(&args.scenario),
            &seed_field,
            &portfolio,
            &problem,
            cost,
            wall_time_ms,
        );
        append_result_rows(report, &[row])?;
        if let Some(stats) = &generation_stats {
            write_generation_csv(&generation_csv_path(report), stats)?;
        }
    }

    println!(
        "{}: cost {} with {} instances in {} ms",
        args.algorithm.name(),
        cost_field(cost),
        portfolio.instances.len(),
        wall_time_ms
    );
    if violations.is_empty() {
        Ok(0)
    } else {
        for v in &violations {
            eprintln!("violation: {v}");
        }
        Ok(1)
    }
}

pub struct CompareArgs {
    pub scenario: PathBuf,
    pub seeds: Vec<u64>,
    pub generations: Option<usize>,
    pub population: Option<usize>,
    pub out: PathBuf,
}

/// Runs ERICH once and GEORG per seed, recording each GA run's
/// generation-0 mean as the semi-random baseline series.
pub fn cmd_compare(args: &CompareArgs) -> Result<i32> {
    let problem = load_scenario(&args.scenario)?;
    let case = case_name(&args.scenario);
    let mut rows = Vec::new();

    let started = Instant::now();
    let erich = solve_erich(&problem, &ErichConfig::for_problem(&problem))?;
    let erich_ms = started.elapsed().as_millis();
    let erich_cost = portfolio_cost(&erich, &problem)?;
    if !validate(&erich, &problem).is_empty() {
        return Ok(1);
    }
    rows.push(ResultRow::new("erich", &case, "", &erich, &problem, erich_cost, erich_ms));

    let mut baselines = Vec::new();
    for &seed in &args.seeds {
        let started = Instant::now();
        let outcome = solve_georg(&problem, &ga_config(seed, args.generations, args.population))?;
        let georg_ms = started.elapsed().as_millis();
        if !validate(&outcome.best, &problem).is_empty() {
            return Ok(1);
        }
        rows.push(ResultRow::new(
            "georg",
            &case,
            &seed.to_string(),
            &outcome.best,
            &problem,
            outcome.best_cost,
            georg_ms,
        ));
        baselines.push((seed, outcome.stats[0].mean_cost));
    }
    for (seed, mean_cost) in baselines {
        rows.push(ResultRow {
            solver: "baseline".into(),
            case: case.clone(),
            seed: seed.to_string(),
            total_cost: mean_cost,
            n_instances: 0,
            mean_utilization: 0.0,
            weighted_utilization: 0.0,
            wall_time_ms: 0,
        });
    }

    rows.sort_by(|a, b| (&a.solver, &a.seed).cmp(&(&b.solver, &b.seed)));
    append_result_rows(&args.out, &rows)?;
    println!("wrote {} ({} rows)", args.out.display(), rows.len());
    Ok(0)
}

pub fn cmd_validate(scenario: &Path, solution: &Path) -> Result<i32> {
    let problem = load_scenario(scenario)?;
    let solution: SolutionFile = read_json(solution, "solution")?;
    let portfolio = solution.into_portfolio(&problem)?;
    let violations = validate(&portfolio, &problem);
    if violations.is_empty() {
        println!("solution is valid");
        Ok(0)
    } else {
        for v in &violations {
            println!("violation: {v}");
        }
        println!("{} violations", violations.len());
        Ok(1)
    }
}

pub fn cmd_oracle(scenario: &Path, out: Option<&Path>) -> Result<i32> {
    let problem = load_scenario(scenario)?;
    let (portfolio, cost) = match brute_force_optimum(&problem, OracleLimits::default()) {
        Ok(result) => result,
        Err(err @ stbp_core::Error::OracleLimits(_)) => return usage_error(err.to_string()),
        Err(err) => return Err(err.into()),
    };
    debug_assert!(validate(&portfolio, &problem).is_empty());
    if let Some(out) = out {
        write_json(out, &SolutionFile::from_portfolio(&portfolio))?;
    }
    println!("optimum: cost {} with {} instances", cost_field(cost), portfolio.instances.len());
    Ok(0)
}
