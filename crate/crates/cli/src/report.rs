//! Report rendering: every table is written both machine-readable (CSV or
//! JSON) and human-readable; downstream tooling should consume only the
//! machine-readable form.

use serde::Serialize;

use apres_core::baselines::ChainLadderResult;
use apres_core::pipeline::FitReport;
use apres_core::sim::{
    quantile_rank, ReservePredictiveDistribution, SimulationConfig, StabilityPoint, SummaryReport,
};

pub fn selection_csv(report: &FitReport) -> String {
    let mut out = String::from("period,coverage,family,aic,bic,n,selected\n");
    for row in &report.selection {
        out.push_str(&format!(
            "{},{},{},{:.4},{:.4},{},{}\n",
            row.period,
            row.coverage,
            row.family.name(),
            row.aic,
            row.bic,
            row.n,
            row.selected
        ));
    }
    out
}

pub fn selection_table(report: &FitReport) -> String {
    let mut out = String::from(
        "Severity family selection (lower criterion wins)\n\
         period  coverage  family                 AIC            BIC        n  selected\n",
    );
    for row in &report.selection {
        out.push_str(&format!(
            "{:<7} {:<9} {:<20} {:>14.1} {:>14.1} {:>8} {}\n",
            row.period,
            row.coverage,
            row.family.name(),
            row.aic,
            row.bic,
            row.n,
            if row.selected { "  *" } else { "" }
        ));
    }
    if !report.notes.is_empty() {
        out.push_str("\nnotes:\n");
        for note in &report.notes {
            out.push_str(&format!("  - {note}\n"));
        }
    }
    out
}

pub fn distribution_csv(
    dist: &ReservePredictiveDistribution,
    coverage_names: &[String],
) -> String {
    let mut header = String::from("replication,total");
    for name in coverage_names {
        header.push_str(&format!(",{name}"));
    }
    header.push_str(",ibnr,reported\n");
    let mut out = header;
    for (i, r) in dist.replications.iter().enumerate() {
        out.push_str(&format!("{},{}", i, r.total));
        for c in &r.by_coverage {
            out.push_str(&format!(",{c}"));
        }
        out.push_str(&format!(",{},{}\n", r.by_class[0], r.by_class[1]));
    }
    out
}

#[derive(Serialize)]
pub struct SummaryJson {
    pub seed: u64,
    pub n_replications: usize,
    pub quantile: f64,
    pub evaluation_date: String,
    pub empty_warning: bool,
    pub total: StatJson,
    pub by_coverage: Vec<NamedStatJson>,
    pub by_class: Vec<NamedStatJson>,
}

#[derive(Serialize)]
pub struct StatJson {
    pub mean: f64,
    pub var: f64,
}

#[derive(Serialize)]
pub struct NamedStatJson {
    pub name: String,
    pub mean: f64,
    pub var: f64,
}

pub fn summary_json(
    summary: &SummaryReport,
    dist: &ReservePredictiveDistribution,
    config: &SimulationConfig,
    coverage_names: &[String],
) -> SummaryJson {
    SummaryJson {
        seed: config.master_seed,
        n_replications: summary.n_replications,
        quantile: summary.q,
        evaluation_date: config.evaluation_date.to_string(),
        empty_warning: dist.empty_warning,
        total: StatJson { mean: summary.total.mean, var: summary.total.var.to_dollars() },
        by_coverage: coverage_names
            .iter()
            .zip(&summary.by_coverage)
            .map(|(name, s)| NamedStatJson {
                name: name.clone(),
                mean: s.mean,
                var: s.var.to_dollars(),
            })
            .collect(),
        by_class: ["ibnr", "reported"]
            .iter()
            .zip(&summary.by_class)
            .map(|(name, s)| NamedStatJson {
                name: name.to_string(),
                mean: s.mean,
                var: s.var.to_dollars(),
            })
            .collect(),
    }
}

pub fn summary_table(summary: &SummaryReport, coverage_names: &[String]) -> String {
    let mut out = format!(
        "Predictive reserve distribution ({} replications)\n\
         scope            mean            VaR_{:.2}\n",
        summary.n_replications, summary.q
    );
    for (name, s) in coverage_names.iter().zip(&summary.by_coverage) {
        out.push_str(&format!("{:<12} {:>15.2} {:>15}\n", name, s.mean, s.var));
    }
    for (name, s) in ["ibnr", "reported"].iter().zip(&summary.by_class) {
        out.push_str(&format!("{:<12} {:>15.2} {:>15}\n", name, s.mean, s.var));
    }
    out.push_str(&format!(
        "{:<12} {:>15.2} {:>15}\n",
        "total", summary.total.mean, summary.total.var
    ));
    out
}

/// Histogram plot data (bin edges and counts) per coverage plus the total.
pub fn histograms(
    dist: &ReservePredictiveDistribution,
    coverage_names: &[String],
    bins: usize,
) -> Vec<(String, String)> {
    let bins = bins.max(1);
    let mut series: Vec<(String, Vec<f64>)> = vec![(
        "total".into(),
        dist.replications.iter().map(|r| r.total.to_dollars()).collect(),
    )];
    for (c, name) in coverage_names.iter().enumerate() {
        series.push((
            name.clone(),
            dist.replications.iter().map(|r| r.by_coverage[c].to_dollars()).collect(),
        ));
    }
    series
        .into_iter()
        .map(|(name, values)| {
            let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
            let mut counts = vec![0usize; bins];
            for v in &values {
                let idx = (((v - lo) / width) as usize).min(bins - 1);
                counts[idx] += 1;
            }
            let mut csv = String::from("bin_left,bin_right,count\n");
            for (i, count) in counts.iter().enumerate() {
                csv.push_str(&format!(
                    "{:.2},{:.2},{}\n",
                    lo + i as f64 * width,
                    lo + (i + 1) as f64 * width,
                    count
                ));
            }
            (name, csv)
        })
        .collect()
}

#[derive(Serialize)]
pub struct ComparisonRow {
    pub scope: String,
    pub model: String,
    pub mean: f64,
    pub var: f64,
}

#[derive(Serialize)]
pub struct Comparison {
    pub quantile: f64,
    pub rows: Vec<ComparisonRow>,
}

fn odp_stats(result: &ChainLadderResult, q: f64) -> (f64, f64) {
    let mut values = result.bootstrap_reserves.clone();
    values.sort_by(|a, b| a.total_cmp(b));
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let var = values[quantile_rank(q, values.len()) - 1];
    (mean, var)
}

pub fn comparison(
    coverage_names: &[String],
    quantile: f64,
    pattern: &SummaryReport,
    independence: &SummaryReport,
    odp_by_coverage: &[ChainLadderResult],
    odp_total: &ChainLadderResult,
) -> Comparison {
    let mut rows = Vec::new();
    for (c, name) in coverage_names.iter().enumerate() {
        rows.push(ComparisonRow {
            scope: name.clone(),
            model: "pattern".into(),
            mean: pattern.by_coverage[c].mean,
            var: pattern.by_coverage[c].var.to_dollars(),
        });
        rows.push(ComparisonRow {
            scope: name.clone(),
            model: "independence".into(),
            mean: independence.by_coverage[c].mean,
            var: independence.by_coverage[c].var.to_dollars(),
        });
        let (mean, var) = odp_stats(&odp_by_coverage[c], quantile);
        rows.push(ComparisonRow { scope: name.clone(), model: "odp".into(), mean, var });
    }
    rows.push(ComparisonRow {
        scope: "total".into(),
        model: "pattern".into(),
        mean: pattern.total.mean,
        var: pattern.total.var.to_dollars(),
    });
    rows.push(ComparisonRow {
        scope: "total".into(),
        model: "independence".into(),
        mean: independence.total.mean,
        var: independence.total.var.to_dollars(),
    });
    let (mean, var) = odp_stats(odp_total, quantile);
    rows.push(ComparisonRow { scope: "total".into(), model: "odp".into(), mean, var });
    Comparison { quantile, rows }
}

pub fn comparison_csv(comparison: &Comparison) -> String {
    let mut out = String::from("scope,model,mean,var\n");
    for row in &comparison.rows {
        out.push_str(&format!(
            "{},{},{:.2},{:.2}\n",
            row.scope, row.model, row.mean, row.var
        ));
    }
    out
}

pub fn comparison_table(comparison: &Comparison) -> String {
    let mut out = format!(
        "Model comparison (VaR at q={:.2})\n\
         scope        model               mean             VaR\n",
        comparison.quantile
    );
    for row in &comparison.rows {
        out.push_str(&format!(
            "{:<12} {:<13} {:>15.2} {:>15.2}\n",
            row.scope, row.model, row.mean, row.var
        ));
    }
    out
}

pub fn stability_csv(points: &[StabilityPoint]) -> String {
    let mut out = String::from("n_replications,var_total,rel_change\n");
    for p in points {
        out.push_str(&format!(
            "{},{},{}\n",
            p.n_replications,
            p.var_total,
            p.rel_change.map(|r| format!("{r:.6}")).unwrap_or_default()
        ));
    }
    out
}
