//! KPI reports: per-sequence measures, per-day breakdowns, the k-sweep and
//! the two-period comparison, plus JSON/CSV emission.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::engine::{replay, ReplayOutcome};
use super::events::EventRecord;
use super::scenario::Scenario;
use super::HarnessError;
use crate::controller::{CompiledCatalog, ControllerConfig};
use crate::domain::{Day, Order};
use crate::exec::Exec;
use crate::metrics::{
    batch_stats, color_differentiation, cpc_from_totals, cpc_reduction_from_abs_gain,
    deming_regression, differentiation_mass_at_most, index_width, pearson_correlation, sortedness,
    summary_stats, worsening_factor, SummaryStats,
};
use crate::paintshop::{simulate_by, PaintShopConfig};

/// Window length of the color differentiation histogram.
pub const DIFFERENTIATION_WINDOW: usize = 50;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LaneSortedness {
    pub cars: usize,
    pub lds: usize,
    pub expected_lds: f64,
    pub median_lds: f64,
}

impl LaneSortedness {
    fn of(blends: &[u64]) -> LaneSortedness {
        // repainted cars show up twice; the first pass is the one that counts
        let mut seen = BTreeSet::new();
        let distinct: Vec<u64> = blends.iter().copied().filter(|b| seen.insert(*b)).collect();
        let s = sortedness(&distinct).expect("distinct blends");
        LaneSortedness {
            cars: distinct.len(),
            lds: s.lds,
            expected_lds: s.expected_length,
            median_lds: s.median_length,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SequenceKpis {
    pub cars: usize,
    pub batch_count: usize,
    pub abs: f64,
    pub changeovers: usize,
    pub cpc: Option<f64>,
    /// Batch length -> cars in batches of that length.
    pub batch_lengths: BTreeMap<usize, usize>,
    /// Distinct colors -> number of 50-car windows; absent for short sequences.
    pub color_differentiation: Option<BTreeMap<usize, usize>>,
    pub sortedness: LaneSortedness,
    pub aabs: f64,
    pub paint_batches: usize,
    pub paint_changeovers: usize,
    pub paint_cars: usize,
    pub paint_lanes: Vec<LaneSortedness>,
}

/// Measures of one sequence of orders, earliest first.
pub fn sequence_kpis(
    orders: &[&Order],
    paint: &PaintShopConfig,
) -> Result<SequenceKpis, HarnessError> {
    let colors: Vec<_> = orders.iter().map(|o| &o.color).collect();
    let blends: Vec<u64> = orders.iter().map(|o| o.blend_number).collect();
    let stats = batch_stats(&colors);
    let out = simulate_by(orders, paint, |o| o.color.clone())
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    let nonempty = out
        .per_lane_sequences
        .iter()
        .filter(|l| !l.is_empty())
        .count();
    Ok(SequenceKpis {
        cars: orders.len(),
        batch_count: stats.batch_count,
        abs: stats.abs_f64(),
        changeovers: stats.changeovers(),
        cpc: cpc_from_totals(stats.changeovers(), orders.len()).ok(),
        batch_lengths: stats.cars_by_length(),
        color_differentiation: color_differentiation(&colors, DIFFERENTIATION_WINDOW).ok(),
        sortedness: LaneSortedness::of(&blends),
        aabs: out.aabs_f64(),
        paint_batches: out.batch_count,
        paint_changeovers: out.batch_count - nonempty,
        paint_cars: out.painted(),
        paint_lanes: out
            .per_lane_sequences
            .iter()
            .map(|l| LaneSortedness::of(&l.iter().map(|o| o.blend_number).collect::<Vec<_>>()))
            .collect(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DayKpis {
    pub day: Day,
    pub entering: SequenceKpis,
    pub leaving: SequenceKpis,
}

fn by_day(
    outcome: &ReplayOutcome,
    boundary: i64,
) -> BTreeMap<Day, (Vec<&Order>, Vec<&Order>)> {
    let cat = &outcome.catalog;
    let mut days: BTreeMap<Day, (Vec<&Order>, Vec<&Order>)> = BTreeMap::new();
    for c in &outcome.entering {
        if let Some(i) = c.order_id.as_deref().and_then(|id| cat.order_index(id)) {
            days.entry(c.entered_at.day(boundary))
                .or_default()
                .0
                .push(cat.order(i));
        }
    }
    for (e, o) in outcome.leaving.iter().zip(outcome.leaving_orders()) {
        days.entry(e.left_at.day(boundary)).or_default().1.push(o);
    }
    days
}

fn daily_kpis(
    outcome: &ReplayOutcome,
    paint: &PaintShopConfig,
    boundary: i64,
    exec: Exec,
) -> Result<Vec<DayKpis>, HarnessError> {
    let days: Vec<_> = by_day(outcome, boundary).into_iter().collect();
    exec.map(&days, |(day, (ent, lea))| {
        Ok(DayKpis {
            day: *day,
            entering: sequence_kpis(ent, paint)?,
            leaving: sequence_kpis(lea, paint)?,
        })
    })
    .into_iter()
    .collect()
}

/// KPIs of one replay.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KpiReport {
    pub scenario_id: String,
    pub label: String,
    pub strategy: String,
    pub k: Option<usize>,
    pub entering: SequenceKpis,
    pub leaving: SequenceKpis,
    pub days: Vec<DayKpis>,
    pub inconsistent_events: usize,
    pub cars_remaining: usize,
}

impl KpiReport {
    pub fn from_outcome(
        outcome: &ReplayOutcome,
        scenario: &Scenario,
        label: &str,
        controller: &ControllerConfig,
    ) -> Result<KpiReport, HarnessError> {
        let paint = &scenario.config.paintshop;
        Ok(KpiReport {
            scenario_id: scenario.config.scenario_id.clone(),
            label: label.into(),
            strategy: controller.strategy.to_string(),
            k: controller.substitution.then(|| controller.strategy.k()),
            entering: sequence_kpis(&outcome.entering_orders(), paint)?,
            leaving: sequence_kpis(&outcome.leaving_orders(), paint)?,
            days: daily_kpis(
                outcome,
                paint,
                scenario.config.day_boundary_seconds,
                controller.exec,
            )?,
            inconsistent_events: outcome.inconsistent,
            cars_remaining: outcome.remaining,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KSweepRow {
    pub k: usize,
    pub cars: usize,
    /// ABS of the sequence leaving the buffer.
    pub abs: f64,
    pub batch_count: usize,
    pub batch_lengths: BTreeMap<usize, usize>,
    pub color_differentiation: Option<BTreeMap<usize, usize>>,
    /// Share of 50-car windows with at most six colors.
    pub differentiation_mass_le_6: f64,
    pub aabs: f64,
    pub paint_batches: usize,
    pub inconsistent_events: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KSweepReport {
    pub scenario_id: String,
    pub rows: Vec<KSweepRow>,
}

/// Replays the same input once per `k` (`LastKEqual(k)`, no substitution for `k = 0`).
pub fn k_sweep(
    events: &[EventRecord],
    scenario: &Scenario,
    catalog: &Arc<CompiledCatalog>,
    ks: &[usize],
    paint: &PaintShopConfig,
    exec: Exec,
) -> Result<KSweepReport, HarnessError> {
    let rows: Result<Vec<KSweepRow>, HarnessError> = exec
        .map(ks, |&k| {
            let config = ControllerConfig {
                exec,
                ..ControllerConfig::last_k(k)
            };
            let out = replay(events, Arc::clone(catalog), scenario.config.buffer, config)?;
            let kpis = sequence_kpis(&out.leaving_orders(), paint)?;
            Ok(KSweepRow {
                k,
                cars: kpis.cars,
                abs: kpis.abs,
                batch_count: kpis.batch_count,
                batch_lengths: kpis.batch_lengths,
                differentiation_mass_le_6: kpis
                    .color_differentiation
                    .as_ref()
                    .map_or(0.0, |h| differentiation_mass_at_most(h, 6)),
                color_differentiation: kpis.color_differentiation,
                aabs: kpis.aabs,
                paint_batches: kpis.paint_batches,
                inconsistent_events: out.inconsistent,
            })
        })
        .into_iter()
        .collect();
    Ok(KSweepReport {
        scenario_id: scenario.config.scenario_id.clone(),
        rows: rows?,
    })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SortednessFactors {
    pub lds: Option<f64>,
    pub expected: Option<f64>,
    pub median: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WidthRegression {
    /// `(planned date, entering width, leaving width)`.
    pub points: Vec<(Day, f64, f64)>,
    pub entering_mean: Option<f64>,
    pub leaving_mean: Option<f64>,
    pub pearson: Option<f64>,
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodReport {
    pub label: String,
    pub days: Vec<DayKpis>,
    pub aabs_entering: Option<SummaryStats>,
    pub aabs_leaving: Option<SummaryStats>,
    pub cars_entering: usize,
    pub changeovers_entering: usize,
    pub cpc_entering: Option<f64>,
    pub cars_leaving: usize,
    pub changeovers_leaving: usize,
    pub cpc_leaving: Option<f64>,
    /// Leaving over entering, on daily means.
    pub worsening_input: SortednessFactors,
    pub worsening_lanes: Vec<SortednessFactors>,
    pub index_width: WidthRegression,
    pub inconsistent_events: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodComparison {
    pub scenario_id: String,
    pub old: PeriodReport,
    pub new: PeriodReport,
    /// Relative change of mean daily leaving aABS.
    pub aabs_gain: Option<f64>,
    /// Changeover reduction implied by `aabs_gain`.
    pub implied_cpc_reduction: Option<f64>,
    /// Relative change of leaving CPC.
    pub cpc_change: Option<f64>,
    /// Relative change of mean leaving index width.
    pub index_width_change: Option<f64>,
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = xs.collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn factors(
    days: &[DayKpis],
    pick: impl Fn(&SequenceKpis) -> Option<&LaneSortedness>,
) -> SortednessFactors {
    let side = |f: &dyn Fn(&DayKpis) -> &SequenceKpis, g: &dyn Fn(&LaneSortedness) -> f64| {
        mean(
            days.iter()
                .filter_map(|d| pick(f(d)))
                .filter(|s| s.cars > 0)
                .map(g),
        )
    };
    let factor = |g: &dyn Fn(&LaneSortedness) -> f64| {
        let e = side(&|d| &d.entering, g)?;
        let l = side(&|d| &d.leaving, g)?;
        worsening_factor(e, l).ok()
    };
    SortednessFactors {
        lds: factor(&|s| s.lds as f64),
        expected: factor(&|s| s.expected_lds),
        median: factor(&|s| s.median_lds),
    }
}

fn widths(orders: &[&Order]) -> BTreeMap<Day, f64> {
    let mut groups: BTreeMap<Day, Vec<f64>> = BTreeMap::new();
    for (i, o) in orders.iter().enumerate() {
        groups.entry(o.planned_date).or_default().push(i as f64);
    }
    groups
        .into_iter()
        .map(|(d, p)| (d, index_width(&p)))
        .collect()
}

fn width_regression(outcome: &ReplayOutcome) -> WidthRegression {
    let ent = widths(&outcome.entering_orders());
    let lea = widths(&outcome.leaving_orders());
    let points: Vec<(Day, f64, f64)> = ent
        .iter()
        .filter_map(|(d, &e)| lea.get(d).map(|&l| (*d, e, l)))
        .collect();
    let x: Vec<f64> = points.iter().map(|p| p.1).collect();
    let y: Vec<f64> = points.iter().map(|p| p.2).collect();
    let fit = deming_regression(&x, &y).ok();
    WidthRegression {
        entering_mean: mean(x.iter().copied()),
        leaving_mean: mean(y.iter().copied()),
        pearson: pearson_correlation(&x, &y).ok(),
        slope: fit.map(|f| f.slope),
        intercept: fit.map(|f| f.intercept),
        points,
    }
}

fn period_report(
    label: &str,
    events: &[EventRecord],
    scenario: &Scenario,
    catalog: &Arc<CompiledCatalog>,
    controller: ControllerConfig,
) -> Result<PeriodReport, HarnessError> {
    let out = replay(
        events,
        Arc::clone(catalog),
        scenario.config.buffer,
        controller,
    )?;
    let paint = &scenario.config.paintshop;
    let days = daily_kpis(
        &out,
        paint,
        scenario.config.day_boundary_seconds,
        controller.exec,
    )?;
    let aabs = |f: fn(&DayKpis) -> &SequenceKpis| {
        let xs: Vec<f64> = days
            .iter()
            .map(f)
            .filter(|s| s.cars > 0)
            .map(|s| s.aabs)
            .collect();
        summary_stats(&xs).ok()
    };
    let total = |f: fn(&DayKpis) -> &SequenceKpis| {
        let cars: usize = days.iter().map(|d| f(d).paint_cars).sum();
        let changeovers: usize = days.iter().map(|d| f(d).paint_changeovers).sum();
        (cars, changeovers, cpc_from_totals(changeovers, cars).ok())
    };
    let (cars_entering, changeovers_entering, cpc_entering) = total(|d| &d.entering);
    let (cars_leaving, changeovers_leaving, cpc_leaving) = total(|d| &d.leaving);
    Ok(PeriodReport {
        label: label.into(),
        aabs_entering: aabs(|d| &d.entering),
        aabs_leaving: aabs(|d| &d.leaving),
        cars_entering,
        changeovers_entering,
        cpc_entering,
        cars_leaving,
        changeovers_leaving,
        cpc_leaving,
        worsening_input: factors(&days, |s| Some(&s.sortedness)),
        worsening_lanes: (0..paint.paint_lane_count)
            .map(|i| factors(&days, |s| s.paint_lanes.get(i)))
            .collect(),
        index_width: width_regression(&out),
        inconsistent_events: out.inconsistent,
        days,
    })
}

fn relative(old: Option<f64>, new: Option<f64>) -> Option<f64> {
    match (old, new) {
        (Some(o), Some(n)) if o != 0.0 => Some(n / o - 1.0),
        _ => None,
    }
}

/// Replays two periods with the same controller settings and compares them.
/// Logs made of observed emissions reproduce whatever controlled the buffer
/// at the time.
pub fn period_compare(
    events_old: &[EventRecord],
    events_new: &[EventRecord],
    scenario: &Scenario,
    catalog: &Arc<CompiledCatalog>,
    controller: ControllerConfig,
) -> Result<PeriodComparison, HarnessError> {
    let old = period_report("P_old", events_old, scenario, catalog, controller)?;
    let new = period_report("P_new", events_new, scenario, catalog, controller)?;
    let aabs_gain = relative(
        old.aabs_leaving.map(|s| s.mean),
        new.aabs_leaving.map(|s| s.mean),
    );
    Ok(PeriodComparison {
        scenario_id: scenario.config.scenario_id.clone(),
        implied_cpc_reduction: aabs_gain.map(cpc_reduction_from_abs_gain),
        aabs_gain,
        cpc_change: relative(old.cpc_leaving, new.cpc_leaving),
        index_width_change: relative(old.index_width.leaving_mean, new.index_width.leaving_mean),
        old,
        new,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Json,
    Csv,
    Both,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            "both" => Ok(ReportFormat::Both),
            _ => Err(format!("unknown format {s:?} (json, csv, both)")),
        }
    }
}

/// Flat rows for the CSV form of a report.
pub trait CsvRows {
    type Row: Serialize;
    fn csv_rows(&self) -> Vec<Self::Row>;
}

#[derive(Serialize)]
pub struct SequenceRow {
    pub label: String,
    pub day: String,
    pub side: &'static str,
    pub cars: usize,
    pub batch_count: usize,
    pub abs: f64,
    pub changeovers: usize,
    pub cpc: Option<f64>,
    pub lds: usize,
    pub expected_lds: f64,
    pub median_lds: f64,
    pub aabs: f64,
    pub paint_batches: usize,
    pub paint_changeovers: usize,
}

fn sequence_row(label: &str, day: String, side: &'static str, k: &SequenceKpis) -> SequenceRow {
    SequenceRow {
        label: label.into(),
        day,
        side,
        cars: k.cars,
        batch_count: k.batch_count,
        abs: k.abs,
        changeovers: k.changeovers,
        cpc: k.cpc,
        lds: k.sortedness.lds,
        expected_lds: k.sortedness.expected_lds,
        median_lds: k.sortedness.median_lds,
        aabs: k.aabs,
        paint_batches: k.paint_batches,
        paint_changeovers: k.paint_changeovers,
    }
}

fn day_rows(label: &str, days: &[DayKpis]) -> Vec<SequenceRow> {
    days.iter()
        .flat_map(|d| {
            [
                sequence_row(label, d.day.to_string(), "entering", &d.entering),
                sequence_row(label, d.day.to_string(), "leaving", &d.leaving),
            ]
        })
        .collect()
}

impl CsvRows for KpiReport {
    type Row = SequenceRow;

    fn csv_rows(&self) -> Vec<SequenceRow> {
        let mut rows = day_rows(&self.label, &self.days);
        rows.push(sequence_row(
            &self.label,
            "all".into(),
            "entering",
            &self.entering,
        ));
        rows.push(sequence_row(
            &self.label,
            "all".into(),
            "leaving",
            &self.leaving,
        ));
        rows
    }
}

impl CsvRows for PeriodComparison {
    type Row = SequenceRow;

    fn csv_rows(&self) -> Vec<SequenceRow> {
        let mut rows = day_rows(&self.old.label, &self.old.days);
        rows.extend(day_rows(&self.new.label, &self.new.days));
        rows
    }
}

#[derive(Serialize)]
pub struct SweepCsvRow {
    pub k: usize,
    pub cars: usize,
    pub abs: f64,
    pub batch_count: usize,
    pub differentiation_mass_le_6: f64,
    pub aabs: f64,
    pub paint_batches: usize,
}

impl CsvRows for KSweepReport {
    type Row = SweepCsvRow;

    fn csv_rows(&self) -> Vec<SweepCsvRow> {
        self.rows
            .iter()
            .map(|r| SweepCsvRow {
                k: r.k,
                cars: r.cars,
                abs: r.abs,
                batch_count: r.batch_count,
                differentiation_mass_le_6: r.differentiation_mass_le_6,
                aabs: r.aabs,
                paint_batches: r.paint_batches,
            })
            .collect()
    }
}

/// Writes `report.json` and/or `report.csv` into `dir`.
pub fn report_emit<R: Serialize + CsvRows>(
    report: &R,
    dir: &Path,
    format: ReportFormat,
) -> Result<Vec<PathBuf>, HarnessError> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let mut written = Vec::new();
    if matches!(format, ReportFormat::Json | ReportFormat::Both) {
        let path = dir.join("report.json");
        let mut text = serde_json::to_string_pretty(report).expect("serializable");
        text.push('\n');
        fs::write(&path, text).map_err(|e| HarnessError::io(&path, e))?;
        written.push(path);
    }
    if matches!(format, ReportFormat::Csv | ReportFormat::Both) {
        let path = dir.join("report.csv");
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in report.csv_rows() {
            w.serialize(row)
                .map_err(|e| HarnessError::Config(e.to_string()))?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        fs::write(&path, bytes).map_err(|e| HarnessError::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
