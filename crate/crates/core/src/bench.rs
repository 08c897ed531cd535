//! Timing harness for the encrypted pipeline.
//!
//! Every run goes through the loopback deployment and is checked against
//! the plaintext pipeline before its time is kept.

use std::fmt::Write as _;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataset::gen_data;
use crate::error::{Error, Result};
use crate::protocol::{ClientConfig, Loopback};
use crate::recommender::{recommend_plain, PreferenceVector, DEFAULT_RADIUS};
use crate::she::{keygen, KeyGenParams, SheKeys, DEFAULT_SECURITY_BITS};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Table,
    Csv,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "table" => Ok(Self::Table),
            "csv" => Ok(Self::Csv),
            other => Err(Error::Format(format!("unknown output format {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BenchConfig {
    pub sizes: Vec<usize>,
    /// Prime size in bits; N has twice as many.
    pub security_bits: u32,
    pub repetitions: usize,
    pub format: OutputFormat,
    pub users: usize,
    pub seed: u64,
    pub radius: u64,
    /// Run one untimed recommendation before the first timed one.
    pub warmup: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            sizes: vec![10, 20, 40, 80, 100],
            security_bits: DEFAULT_SECURITY_BITS,
            repetitions: 5,
            format: OutputFormat::Table,
            users: 3,
            seed: 1,
            radius: DEFAULT_RADIUS,
            warmup: true,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sizes.is_empty() {
            return Err(Error::Domain("bench needs at least one size".into()));
        }
        if self.sizes.contains(&0) {
            return Err(Error::Domain("bench sizes must be positive".into()));
        }
        if self.repetitions == 0 {
            return Err(Error::Domain("repetitions must be at least 1".into()));
        }
        Ok(())
    }
}

/// Averages over the repetitions of one size, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub size: usize,
    pub enc_time_s: f64,
    pub rec_time_s: f64,
    pub dec_time_s: f64,
    pub plain_total_s: f64,
    pub enc_total_s: f64,
}

/// Total times of an FHE-based protocol as published, keyed by size. Shown
/// for comparison only.
pub const EXTERNAL_BASELINE_S: [(usize, f64); 6] =
    [(10, 2.79), (20, 5.48), (40, 11.13), (80, 22.32), (100, 28.03), (1000, 269.47)];

pub fn run_bench(config: &BenchConfig) -> Result<Vec<BenchRow>> {
    config.validate()?;
    let keys = keygen(&KeyGenParams::seeded(config.security_bits, config.seed))?;
    run_bench_with_keys(config, &keys)
}

pub fn run_bench_with_keys(config: &BenchConfig, keys: &SheKeys) -> Result<Vec<BenchRow>> {
    config.validate()?;
    config
        .sizes
        .iter()
        .enumerate()
        .map(|(k, &size)| bench_size(config, keys, size, config.warmup && k == 0))
        .collect()
}

fn bench_size(config: &BenchConfig, keys: &SheKeys, size: usize, warmup: bool) -> Result<BenchRow> {
    let data = gen_data(size, config.users, config.seed.wrapping_add(size as u64))?;
    let cm = data.co_matrix()?;
    let client_config = ClientConfig { order: data.meta.order, radius: config.radius, rating_max: data.meta.rating_max };
    let mut deploy = Loopback::new(keys.clone(), client_config, config.seed ^ (size as u64).rotate_left(32));
    let client = &mut deploy.client;
    client.setup()?;
    client.initialize(size, &data.contributions()?)?;

    let pv = match data.pvs.first() {
        Some(pv) => pv.clone(),
        None => PreferenceVector::new(vec![0; size], data.meta.rating_max)?,
    };
    if warmup {
        client.recommend(&pv, data.placements[0])?;
    }
    let mut row = BenchRow { size, enc_time_s: 0.0, rec_time_s: 0.0, dec_time_s: 0.0, plain_total_s: 0.0, enc_total_s: 0.0 };
    for rep in 0..config.repetitions {
        let item = (size / 2 + rep * 7) % size;
        let cell = data.placements[item];
        let outcome = client.recommend(&pv, cell)?;
        let t = Instant::now();
        let expected = recommend_plain(&cm, &pv, outcome.location as usize, config.radius)?;
        let plain = t.elapsed().as_secs_f64();
        if outcome.items != expected {
            return Err(Error::OracleMismatch(format!(
                "size {size} seed {} location {} radius {}\n  pv: {:?}\n  expected: {expected:?}\n  got: {:?}",
                config.seed,
                outcome.location,
                config.radius,
                pv.ratings(),
                outcome.items
            )));
        }
        let tm = outcome.timings;
        row.enc_time_s += tm.encrypt.as_secs_f64();
        row.rec_time_s += tm.recommend.as_secs_f64();
        row.dec_time_s += tm.decrypt.as_secs_f64();
        row.plain_total_s += plain;
    }
    let reps = config.repetitions as f64;
    row.enc_time_s /= reps;
    row.rec_time_s /= reps;
    row.dec_time_s /= reps;
    row.plain_total_s /= reps;
    row.enc_total_s = row.enc_time_s + row.rec_time_s + row.dec_time_s;
    log::info!("size {size}: {row:?}");
    Ok(row)
}

/// rec_time of each size over the previous one.
pub fn recommendation_ratios(rows: &[BenchRow]) -> Vec<f64> {
    rows.windows(2).map(|w| w[1].rec_time_s / w[0].rec_time_s).collect()
}

const COLUMNS: [&str; 6] = ["size", "enc_time_s", "rec_time_s", "dec_time_s", "plain_total_s", "enc_total_s"];

fn fields(row: &BenchRow) -> [String; 6] {
    [
        row.size.to_string(),
        format!("{:.6}", row.enc_time_s),
        format!("{:.6}", row.rec_time_s),
        format!("{:.6}", row.dec_time_s),
        format!("{:.6}", row.plain_total_s),
        format!("{:.6}", row.enc_total_s),
    ]
}

pub fn render_table(rows: &[BenchRow]) -> String {
    let mut out = String::new();
    let line = |out: &mut String, cells: &[String]| {
        let _ = writeln!(out, "{:>6}  {:>12}  {:>12}  {:>12}  {:>13}  {:>12}", cells[0], cells[1], cells[2], cells[3], cells[4], cells[5]);
    };
    line(&mut out, &COLUMNS.map(String::from));
    for row in rows {
        line(&mut out, &fields(row));
    }
    out
}

pub fn render_csv(rows: &[BenchRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(COLUMNS).map_err(|e| Error::Format(e.to_string()))?;
    for row in rows {
        w.write_record(fields(row)).map_err(|e| Error::Format(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is ascii"))
}

pub fn render(rows: &[BenchRow], format: OutputFormat) -> Result<String> {
    match format {
        OutputFormat::Table => Ok(render_table(rows)),
        OutputFormat::Csv => render_csv(rows),
    }
}

fn row_from_cells<'a>(cells: impl Iterator<Item = &'a str>) -> Result<BenchRow> {
    let cells: Vec<&str> = cells.collect();
    let [size, enc, rec, dec, plain, total] = cells.as_slice() else {
        return Err(Error::Format(format!("expected 6 columns, got {}", cells.len())));
    };
    let f = |s: &str| s.parse::<f64>().map_err(|_| Error::Format(format!("bad number {s:?}")));
    Ok(BenchRow {
        size: size.parse().map_err(|_| Error::Format(format!("bad size {size:?}")))?,
        enc_time_s: f(enc)?,
        rec_time_s: f(rec)?,
        dec_time_s: f(dec)?,
        plain_total_s: f(plain)?,
        enc_total_s: f(total)?,
    })
}

pub fn parse_csv(text: &str) -> Result<Vec<BenchRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().map_err(|e| Error::Format(e.to_string()))?.clone();
    if header.iter().ne(COLUMNS) {
        return Err(Error::Format(format!("unexpected header {header:?}")));
    }
    r.records()
        .map(|rec| row_from_cells(rec.map_err(|e| Error::Format(e.to_string()))?.iter()))
        .collect()
}

pub fn parse_table(text: &str) -> Result<Vec<BenchRow>> {
    text.lines().skip(1).filter(|l| !l.trim().is_empty()).map(|l| row_from_cells(l.split_whitespace())).collect()
}

/// Our totals next to the published FHE-baseline totals. Sizes without a
/// published figure show "-".
pub fn render_external(rows: &[BenchRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:>6}  {:>12}  {:>22}", "size", "enc_total_s", "fhe_baseline_s(external)");
    for row in rows {
        let baseline = EXTERNAL_BASELINE_S
            .iter()
            .find(|(s, _)| *s == row.size)
            .map_or_else(|| "-".to_string(), |(_, t)| format!("{t:.2}"));
        let _ = writeln!(out, "{:>6}  {:>12.6}  {:>22}", row.size, row.enc_total_s, baseline);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows() -> Vec<BenchRow> {
        vec![
            BenchRow { size: 10, enc_time_s: 0.001, rec_time_s: 0.25, dec_time_s: 0.002, plain_total_s: 0.0, enc_total_s: 0.253 },
            BenchRow { size: 20, enc_time_s: 0.002, rec_time_s: 1.0, dec_time_s: 0.004, plain_total_s: 0.000001, enc_total_s: 1.006 },
        ]
    }

    #[test]
    fn csv_and_table_agree() {
        let rows = rows();
        let csv = parse_csv(&render_csv(&rows).unwrap()).unwrap();
        let table = parse_table(&render_table(&rows)).unwrap();
        assert_eq!(csv, table);
        assert_eq!(csv, rows);
        assert_eq!(recommendation_ratios(&rows), vec![4.0]);
    }

    #[test]
    fn config_validation() {
        assert!(BenchConfig { sizes: vec![], ..Default::default() }.validate().is_err());
        assert!(BenchConfig { repetitions: 0, ..Default::default() }.validate().is_err());
        assert!(BenchConfig::default().validate().is_ok());
    }

    #[test]
    fn external_column() {
        let text = render_external(&rows());
        assert!(text.contains("2.79"));
        assert!(text.contains("5.48"));
    }

    #[test]
    fn tiny_run_verifies_against_oracle() {
        let config = BenchConfig { sizes: vec![3, 4], security_bits: 32, repetitions: 1, ..Default::default() };
        let rows = run_bench(&config).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.enc_total_s >= r.rec_time_s && r.rec_time_s > 0.0));
    }
}
