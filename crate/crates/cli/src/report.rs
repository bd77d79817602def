//! CSV reports. Costs and utilizations render with six fraction digits so
//! reports reproduce bit-for-bit across runs; wall time is measured but
//! never asserted anywhere.

use anyhow::{Context, Result};
use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;
use stbp_core::georg::GenerationStats;
use stbp_core::model::{mean_utilization, weighted_utilization, Portfolio, ProblemInstance};

pub const RESULT_HEADER: &str =
    "solver,case,seed,total_cost,n_instances,mean_utilization,weighted_utilization,wall_time_ms";

pub fn cost_field(value: f64) -> String {
    format!("{value:.6}")
}

/// One result row per (solver, case, seed) run.
pub struct ResultRow {
    pub solver: String,
    pub case: String,
    pub seed: String,
    pub total_cost: f64,
    pub n_instances: usize,
    pub mean_utilization: f64,
    pub weighted_utilization: f64,
    pub wall_time_ms: u128,
}

impl ResultRow {
    pub fn new(
        solver: &str,
        case: &str,
        seed: &str,
        portfolio: &Portfolio,
        problem: &ProblemInstance,
        total_cost: f64,
        wall_time_ms: u128,
    ) -> Self {
        // Empty portfolios have no defined utilization; report zero.
        let mean = mean_utilization(portfolio, problem).unwrap_or(0.0);
        let weighted = weighted_utilization(portfolio, problem).unwrap_or(0.0);
        Self {
            solver: solver.to_string(),
            case: case.to_string(),
            seed: seed.to_string(),
            total_cost,
            n_instances: portfolio.instances.len(),
            mean_utilization: mean,
            weighted_utilization: weighted,
            wall_time_ms,
        }
    }

    fn render(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.solver,
            self.case,
            self.seed,
            cost_field(self.total_cost),
            self.n_instances,
            cost_field(self.mean_utilization),
            cost_field(self.weighted_utilization),
            self.wall_time_ms
        )
    }
}

/// Appends rows to a report file, writing the header first when the file is
/// new or empty.
pub fn append_result_rows(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let needs_header = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .with_context(|| format!("cannot open report {}", path.display()))?;
    if needs_header {
        writeln!(file, "{RESULT_HEADER}")?;
    }
    for row in rows {
        writeln!(file, "{}", row.render())?;
    }
    Ok(())
}

/// Writes the per-generation cost trace of one GA run.
pub fn write_generation_csv(path: &Path, stats: &[GenerationStats]) -> Result<()> {
    let mut text = String::from("generation,min_cost,mean_cost,max_cost\n");
    for s in stats {
        text.push_str(&format!(
            "{},{},{},{}\n",
            s.generation,
            cost_field(s.min_cost),
            cost_field(s.mean_cost),
            cost_field(s.max_cost)
        ));
    }
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

/// Path of the per-generation CSV derived from the report path.
pub fn generation_csv_path(report: &Path) -> std::path::PathBuf {
    let stem = report.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
    report.with_file_name(format!("{stem}.generations.csv"))
}
