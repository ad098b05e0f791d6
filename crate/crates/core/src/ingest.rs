//! Loading and aligning historical PV and load series.
//!
//! Input is two CSV files (PV and load) sharing the layout
//! `timestamp,<series>,<series>,...`. Timestamps are local time at period
//! resolution. The panel keeps only days on which every series reports every
//! period, so that per-day joint observations stay consistent across series.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{NaiveDate, NaiveDateTime, NaiveTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fewest complete days accepted for fitting per-period marginals.
pub const MIN_DAYS: usize = 30;

const TIMESTAMP_FORMATS: &[&str] = &[
    "%Y-%m-%dT%H:%M:%S",
    "%Y-%m-%dT%H:%M",
    "%Y-%m-%d %H:%M:%S",
    "%Y-%m-%d %H:%M",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum SeriesKind {
    Pv,
    Load,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesMeta {
    pub id: String,
    pub kind: SeriesKind,
    /// Nameplate or peak capacity in MW, used only for per-unit reporting.
    pub capacity: Option<f64>,
}

impl SeriesMeta {
    pub fn new(id: impl Into<String>, kind: SeriesKind) -> Self {
        Self {
            id: id.into(),
            kind,
            capacity: None,
        }
    }
}

/// Rectangular panel of observations: `samples[series][period][day]` in MW.
#[derive(Debug, Clone, PartialEq)]
pub struct TimePanel {
    periods_per_day: usize,
    series: Vec<SeriesMeta>,
    days: Vec<NaiveDate>,
    samples: Vec<Vec<Vec<f64>>>,
}

impl TimePanel {
    /// Builds a panel from already-aligned data, checking every invariant.
    ///
    /// `days` may be empty, in which case synthetic consecutive dates starting
    /// at 2020-01-01 are assigned.
    pub fn new(
        periods_per_day: usize,
        series: Vec<SeriesMeta>,
        mut days: Vec<NaiveDate>,
        samples: Vec<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        if periods_per_day == 0 || 86_400 % periods_per_day != 0 {
            return Err(Error::Alignment(format!(
                "{periods_per_day} periods do not tile a day in whole seconds"
            )));
        }
        if series.len() != samples.len() {
            return Err(Error::LengthMismatch {
                left: series.len(),
                right: samples.len(),
            });
        }
        let mut ids = HashSet::new();
        for meta in &series {
            if !ids.insert(meta.id.as_str()) {
                return Err(Error::Schema(format!("duplicate series id `{}`", meta.id)));
            }
            if let Some(cap) = meta.capacity {
                if !(cap > 0.0 && cap.is_finite()) {
                    return Err(Error::Schema(format!(
                        "series `{}` has non-positive capacity {cap}",
                        meta.id
                    )));
                }
            }
        }
        let day_count = samples
            .first()
            .and_then(|s| s.first())
            .map_or(days.len(), Vec::len);
        for (meta, per_series) in series.iter().zip(&samples) {
            if per_series.len() != periods_per_day {
                return Err(Error::Alignment(format!(
                    "series `{}` has {} periods, expected {periods_per_day}",
                    meta.id,
                    per_series.len()
                )));
            }
            for values in per_series {
                if values.len() != day_count {
                    return Err(Error::Alignment(format!(
                        "series `{}` is not rectangular ({} vs {day_count} days)",
                        meta.id,
                        values.len()
                    )));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFiniteInput);
                }
                if meta.kind == SeriesKind::Pv && values.iter().any(|&v| v < 0.0) {
                    return Err(Error::Schema(format!(
                        "PV series `{}` has negative values",
                        meta.id
                    )));
                }
            }
        }
        if days.is_empty() {
            let start = NaiveDate::from_ymd_opt(2020, 1, 1).expect("valid date");
            days = start.iter_days().take(day_count).collect();
        }
        if days.len() != day_count {
            return Err(Error::LengthMismatch {
                left: days.len(),
                right: day_count,
            });
        }
        if days.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Alignment("days must be strictly increasing".into()));
        }
        Ok(Self {
            periods_per_day,
            series,
            days,
            samples,
        })
    }

    pub fn periods_per_day(&self) -> usize {
        self.periods_per_day
    }

    pub fn day_count(&self) -> usize {
        self.days.len()
    }

    pub fn days(&self) -> &[NaiveDate] {
        &self.days
    }

    pub fn series(&self) -> &[SeriesMeta] {
        &self.series
    }

    /// Hours covered by one period.
    pub fn period_hours(&self) -> f64 {
        24.0 / self.periods_per_day as f64
    }

    /// Indices of the series of one kind, in declared order.
    pub fn indices_of(&self, kind: SeriesKind) -> Vec<usize> {
        self.series
            .iter()
            .enumerate()
            .filter(|(_, m)| m.kind == kind)
            .map(|(i, _)| i)
            .collect()
    }

    /// Day-indexed observations of series `index` at period `t`.
    ///
    /// Panics if either index is out of range.
    pub fn samples(&self, index: usize, t: usize) -> &[f64] {
        &self.samples[index][t]
    }

    /// Day-indexed observations of the series named `series_id` at period `t`.
    pub fn slice_period(&self, series_id: &str, t: usize) -> Result<&[f64]> {
        let index = self
            .series
            .iter()
            .position(|m| m.id == series_id)
            .ok_or_else(|| Error::UnknownSeries(series_id.to_string()))?;
        if t >= self.periods_per_day {
            return Err(Error::PeriodOutOfRange {
                period: t,
                periods: self.periods_per_day,
            });
        }
        Ok(&self.samples[index][t])
    }

    /// Per-day fleet total of one kind at period `t`.
    pub fn fleet_total(&self, kind: SeriesKind, t: usize) -> Vec<f64> {
        let mut total = vec![0.0; self.day_count()];
        for i in self.indices_of(kind) {
            for (acc, v) in total.iter_mut().zip(&self.samples[i][t]) {
                *acc += v;
            }
        }
        total
    }

    /// Per-day net load (total load minus total PV) at period `t`.
    pub fn net_load(&self, t: usize) -> Vec<f64> {
        let load = self.fleet_total(SeriesKind::Load, t);
        let pv = self.fleet_total(SeriesKind::Pv, t);
        load.iter().zip(&pv).map(|(l, p)| l - p).collect()
    }

    /// Largest per-day total load over all periods.
    pub fn peak_total_load(&self) -> f64 {
        (0..self.periods_per_day)
            .flat_map(|t| self.fleet_total(SeriesKind::Load, t))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Keeps the days in `[from, to]` (either bound optional).
    pub fn filter_days(&self, from: Option<NaiveDate>, to: Option<NaiveDate>) -> Result<Self> {
        let keep: Vec<usize> = self
            .days
            .iter()
            .enumerate()
            .filter(|(_, d)| from.is_none_or(|f| **d >= f) && to.is_none_or(|e| **d <= e))
            .map(|(i, _)| i)
            .collect();
        if keep.len() < MIN_DAYS {
            return Err(Error::EmptyPanel {
                days: keep.len(),
                required: MIN_DAYS,
            });
        }
        let samples = self
            .samples
            .iter()
            .map(|per_series| {
                per_series
                    .iter()
                    .map(|values| keep.iter().map(|&j| values[j]).collect())
                    .collect()
            })
            .collect();
        let days = keep.iter().map(|&j| self.days[j]).collect();
        Self::new(self.periods_per_day, self.series.clone(), days, samples)
    }

    /// Writes the panel back out as a PV file and a load file.
    pub fn write_csv(&self, pv_path: &Path, load_path: &Path) -> Result<()> {
        self.write_kind(SeriesKind::Pv, File::create(pv_path)?)?;
        self.write_kind(SeriesKind::Load, File::create(load_path)?)?;
        Ok(())
    }

    pub fn write_kind<W: Write>(&self, kind: SeriesKind, writer: W) -> Result<()> {
        let columns = self.indices_of(kind);
        let mut out = csv::Writer::from_writer(writer);
        let mut header = vec!["timestamp".to_string()];
        header.extend(columns.iter().map(|&i| self.series[i].id.clone()));
        out.write_record(&header)?;
        let step = 86_400 / self.periods_per_day as u32;
        for (j, day) in self.days.iter().enumerate() {
            for t in 0..self.periods_per_day {
                let secs = step * t as u32;
                let time = NaiveTime::from_num_seconds_from_midnight_opt(secs, 0)
                    .expect("period start within the day");
                let mut row = vec![day.and_time(time).format("%Y-%m-%dT%H:%M:%S").to_string()];
                row.extend(columns.iter().map(|&i| self.samples[i][t][j].to_string()));
                out.write_record(&row)?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    pub periods_per_day: usize,
    pub from: Option<NaiveDate>,
    pub to: Option<NaiveDate>,
}

impl LoadOptions {
    pub fn new(periods_per_day: usize) -> Self {
        Self {
            periods_per_day,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct LoadReport {
    pub panel: TimePanel,
    /// Days seen in either file that were removed for incompleteness.
    pub dropped_days: usize,
    /// Negative PV readings raised to 0 MW.
    pub clamped_pv_values: usize,
}

/// Loads and aligns the PV and load files into a rectangular panel.
pub fn load_panel(pv_csv: &Path, load_csv: &Path, periods_per_day: usize) -> Result<LoadReport> {
    load_panel_with(pv_csv, load_csv, &LoadOptions::new(periods_per_day))
}

pub fn load_panel_with(pv_csv: &Path, load_csv: &Path, options: &LoadOptions) -> Result<LoadReport> {
    read_panel(File::open(pv_csv)?, File::open(load_csv)?, options)
}

/// Reader-based variant of [`load_panel_with`].
pub fn read_panel<P: Read, L: Read>(pv: P, load: L, options: &LoadOptions) -> Result<LoadReport> {
    let periods = options.periods_per_day;
    if periods == 0 || 86_400 % periods != 0 {
        return Err(Error::Alignment(format!(
            "{periods} periods do not tile a day in whole seconds"
        )));
    }
    let pv = read_table(pv, SeriesKind::Pv, periods)?;
    let load = read_table(load, SeriesKind::Load, periods)?;

    let mut series: Vec<SeriesMeta> = Vec::new();
    let mut seen = HashSet::new();
    for meta in pv.series.iter().chain(&load.series) {
        if !seen.insert(meta.id.clone()) {
            return Err(Error::Schema(format!("series id `{}` appears twice", meta.id)));
        }
        series.push(meta.clone());
    }

    let in_range = |d: &NaiveDate| {
        options.from.is_none_or(|f| *d >= f) && options.to.is_none_or(|e| *d <= e)
    };
    let all_days: BTreeSet<NaiveDate> = pv
        .rows
        .keys()
        .chain(load.rows.keys())
        .copied()
        .filter(in_range)
        .collect();

    let mut days = Vec::new();
    let mut samples: Vec<Vec<Vec<f64>>> = vec![vec![Vec::new(); periods]; series.len()];
    let mut clamped = 0;
    for day in &all_days {
        let (Some(pv_day), Some(load_day)) = (pv.rows.get(day), load.rows.get(day)) else {
            continue;
        };
        let complete = pv_day
            .iter()
            .chain(load_day)
            .all(|col| col.iter().all(Option::is_some));
        if !complete {
            continue;
        }
        days.push(*day);
        for (col, values) in pv_day.iter().chain(load_day).enumerate() {
            for (t, v) in values.iter().enumerate() {
                let mut v = v.expect("checked complete");
                if series[col].kind == SeriesKind::Pv && v < 0.0 {
                    v = 0.0;
                    clamped += 1;
                }
                samples[col][t].push(v);
            }
        }
    }
    let dropped_days = all_days.len() - days.len();
    if days.len() < MIN_DAYS {
        return Err(Error::EmptyPanel {
            days: days.len(),
            required: MIN_DAYS,
        });
    }
    if dropped_days > 0 {
        log::info!("dropped {dropped_days} incomplete days");
    }
    Ok(LoadReport {
        panel: TimePanel::new(periods, series, days, samples)?,
        dropped_days,
        clamped_pv_values: clamped,
    })
}

struct Table {
    series: Vec<SeriesMeta>,
    /// date -> column -> period -> value
    rows: BTreeMap<NaiveDate, Vec<Vec<Option<f64>>>>,
}

fn read_table<R: Read>(reader: R, kind: SeriesKind, periods: usize) -> Result<Table> {
    let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = csv.headers()?.clone();
    if header.get(0).map(str::to_ascii_lowercase).as_deref() != Some("timestamp") {
        return Err(Error::Schema(format!(
            "{kind:?} file: first column must be `timestamp`"
        )));
    }
    if header.len() < 2 {
        return Err(Error::Schema(format!("{kind:?} file has no series columns")));
    }
    let series: Vec<SeriesMeta> = header
        .iter()
        .skip(1)
        .map(|id| {
            if id.is_empty() {
                Err(Error::Schema(format!("{kind:?} file has an empty column name")))
            } else {
                Ok(SeriesMeta::new(id, kind))
            }
        })
        .collect::<Result<_>>()?;

    let period_secs = 86_400 / periods as u32;
    let mut rows: BTreeMap<NaiveDate, Vec<Vec<Option<f64>>>> = BTreeMap::new();
    let mut stamps = HashSet::new();
    for (line, record) in csv.records().enumerate() {
        let record = record?;
        let row = line + 2;
        if record.len() != header.len() {
            return Err(Error::Schema(format!(
                "{kind:?} file line {row}: {} fields, expected {}",
                record.len(),
                header.len()
            )));
        }
        let stamp = parse_timestamp(&record[0]).ok_or_else(|| {
            Error::Schema(format!("{kind:?} file line {row}: bad timestamp `{}`", &record[0]))
        })?;
        let secs = stamp.time().num_seconds_from_midnight();
        if secs % period_secs != 0 || stamp.time().nanosecond() != 0 {
            return Err(Error::Alignment(format!(
                "{kind:?} file line {row}: `{}` is off the {periods}-period grid",
                &record[0]
            )));
        }
        if !stamps.insert(stamp) {
            return Err(Error::Alignment(format!(
                "{kind:?} file line {row}: duplicate timestamp `{}`",
                &record[0]
            )));
        }
        let t = (secs / period_secs) as usize;
        let day = rows
            .entry(stamp.date())
            .or_insert_with(|| vec![vec![None; periods]; series.len()]);
        for (col, field) in record.iter().skip(1).enumerate() {
            day[col][t] = parse_value(field).map_err(|msg| {
                Error::Schema(format!("{kind:?} file line {row}, column `{}`: {msg}", series[col].id))
            })?;
        }
    }
    Ok(Table { series, rows })
}

fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    TIMESTAMP_FORMATS
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
        .or_else(|| {
            NaiveDate::parse_from_str(s, "%Y-%m-%d")
                .ok()
                .map(|d| d.and_time(NaiveTime::MIN))
        })
}

fn parse_value(field: &str) -> std::result::Result<Option<f64>, String> {
    if field.is_empty() || field.eq_ignore_ascii_case("na") || field.eq_ignore_ascii_case("nan") {
        return Ok(None);
    }
    let v: f64 = field
        .parse()
        .map_err(|_| format!("`{field}` is not a number"))?;
    if !v.is_finite() {
        return Err(format!("`{field}` is not finite"));
    }
    Ok(Some(v))
}
