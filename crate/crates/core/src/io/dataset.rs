//! Open-loop datasets as CSV: a `#` comment header with the schema, seed
//! and plant parameters, then one row per sample with both sides.

use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::Batch;
use crate::plant::{DisturbanceProfile, PlantParams};
use crate::scenario::{collect_open_loop, ScenarioConfig, Sweep};

pub const DATASET_SCHEMA: &str = "skidsafe-dataset/1";
const COLUMNS: [&str; 4] = ["v_left_mps", "n_left_rpm", "v_right_mps", "n_right_rpm"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

impl std::str::FromStr for Side {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "left" => Ok(Side::Left),
            "right" => Ok(Side::Right),
            other => Err(format!("side must be `left` or `right`, got `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub seed: u64,
    pub left_plant: PlantParams,
    pub right_plant: PlantParams,
    pub left: Batch,
    pub right: Batch,
}

impl Dataset {
    pub fn side(&self, side: Side) -> &Batch {
        match side {
            Side::Left => &self.left,
            Side::Right => &self.right,
        }
    }
}

/// Runs the open-loop sweep on both sides' nominal plants. The right side
/// draws its noise from `seed + 1` so the two sides are independent.
pub fn collect(scenario: &ScenarioConfig, sweep: &Sweep, seed: u64) -> Result<Dataset> {
    let none = DisturbanceProfile::None;
    let left_plant = scenario.left.plant;
    let right_plant = scenario.right.plant;
    Ok(Dataset {
        seed,
        left_plant,
        right_plant,
        left: collect_open_loop(&left_plant, &none, sweep, seed)?,
        right: collect_open_loop(&right_plant, &none, sweep, seed.wrapping_add(1))?,
    })
}

fn plant_line(p: &PlantParams) -> String {
    use super::fmt_f64;
    format!(
        "k_v_mps_per_rpm={} tau_s={} n_max_rpm={}",
        fmt_f64(p.k_v),
        fmt_f64(p.tau),
        fmt_f64(p.n_max)
    )
}

pub fn to_csv(d: &Dataset) -> Result<String> {
    if d.left.len() != d.right.len() {
        return Err(Error::Contract(
            "left and right datasets differ in length".into(),
        ));
    }
    let mut out = format!(
        "# schema: {DATASET_SCHEMA}\n# seed: {}\n# left_plant: {}\n# right_plant: {}\n",
        d.seed,
        plant_line(&d.left_plant),
        plant_line(&d.right_plant)
    );
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Contract(e.to_string());
    w.write_record(COLUMNS).map_err(io)?;
    for i in 0..d.left.len() {
        w.write_record([
            super::fmt_f64(d.left.inputs[i]),
            super::fmt_f64(d.left.targets[i]),
            super::fmt_f64(d.right.inputs[i]),
            super::fmt_f64(d.right.targets[i]),
        ])
        .map_err(io)?;
    }
    let body = w.into_inner().map_err(|e| Error::Contract(e.to_string()))?;
    out.push_str(std::str::from_utf8(&body).expect("csv output is utf-8"));
    Ok(out)
}

fn parse_plant(line: &str) -> std::result::Result<PlantParams, String> {
    let mut k_v = None;
    let mut tau = None;
    let mut n_max = None;
    for kv in line.split_whitespace() {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| format!("bad plant entry `{kv}`"))?;
        let x: f64 = v.parse().map_err(|_| format!("bad number `{v}`"))?;
        match k {
            "k_v_mps_per_rpm" => k_v = Some(x),
            "tau_s" => tau = Some(x),
            "n_max_rpm" => n_max = Some(x),
            _ => return Err(format!("unknown plant field `{k}`")),
        }
    }
    match (k_v, tau, n_max) {
        (Some(k_v), Some(tau), Some(n_max)) => Ok(PlantParams { k_v, tau, n_max }),
        _ => Err("incomplete plant line".into()),
    }
}

pub fn from_csv(text: &str) -> std::result::Result<Dataset, String> {
    let mut schema = None;
    let mut seed = None;
    let mut left_plant = None;
    let mut right_plant = None;
    for line in text.lines().take_while(|l| l.starts_with('#')) {
        let (k, v) = line[1..]
            .split_once(':')
            .ok_or_else(|| format!("bad header line `{line}`"))?;
        let v = v.trim();
        match k.trim() {
            "schema" => schema = Some(v.to_string()),
            "seed" => seed = Some(v.parse::<u64>().map_err(|e| format!("seed: {e}"))?),
            "left_plant" => left_plant = Some(parse_plant(v)?),
            "right_plant" => right_plant = Some(parse_plant(v)?),
            other => return Err(format!("unknown header key `{other}`")),
        }
    }
    if schema.as_deref() != Some(DATASET_SCHEMA) {
        return Err(format!("expected schema {DATASET_SCHEMA}, got {schema:?}"));
    }
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let header = r.headers().map_err(|e| e.to_string())?;
    if header.iter().collect::<Vec<_>>() != COLUMNS {
        return Err(format!("expected columns {COLUMNS:?}"));
    }
    let mut cols: [Vec<f64>; 4] = Default::default();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| e.to_string())?;
        if rec.len() != 4 {
            return Err(format!("row {}: expected 4 fields", i + 1));
        }
        for (j, field) in rec.iter().enumerate() {
            let x: f64 = field.parse().map_err(|_| {
                format!("row {}, column {}: bad number `{field}`", i + 1, COLUMNS[j])
            })?;
            cols[j].push(x);
        }
    }
    let [vl, nl, vr, nr] = cols;
    Ok(Dataset {
        seed: seed.ok_or("missing seed")?,
        left_plant: left_plant.ok_or("missing left_plant")?,
        right_plant: right_plant.ok_or("missing right_plant")?,
        left: Batch::new(vl, nl).map_err(|e| e.to_string())?,
        right: Batch::new(vr, nr).map_err(|e| e.to_string())?,
    })
}

pub fn save(path: &Path, d: &Dataset) -> Result<()> {
    super::write_atomic(path, to_csv(d)?.as_bytes())
}

pub fn load(path: &Path) -> Result<Dataset> {
    let text = super::read_to_string(path)?;
    from_csv(&text).map_err(|e| super::format_err(path, e))
}
