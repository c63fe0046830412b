//! Trace CSV. One row per control step; the column set and order are
//! fixed for a given schema version. Missing optional values are empty.

use std::path::Path;

use crate::error::{Error, Result};
use crate::scenario::{SideRecord, TraceRecord};
use crate::supervisor::Policy;

use super::{fmt_f64, fmt_opt};

pub const TRACE_SCHEMA: &str = "skidsafe-trace/1";

const SIDE_FIELDS: [&str; 15] = [
    "v_ref",
    "v",
    "e",
    "u_dnn",
    "u_s",
    "u_c",
    "alpha1",
    "alpha2",
    "theta_hat",
    "zeta",
    "o",
    "blf",
    "r_low",
    "denom_high",
    "status",
];

pub fn columns() -> Vec<String> {
    let mut cols = vec!["t".to_string()];
    for side in ["left", "right"] {
        cols.extend(SIDE_FIELDS.iter().map(|f| format!("{side}_{f}")));
    }
    cols
}

fn push_side(row: &mut Vec<String>, s: &SideRecord) {
    row.extend([
        fmt_f64(s.v_ref),
        fmt_f64(s.v),
        fmt_f64(s.e),
        fmt_opt(s.u_dnn),
        fmt_opt(s.u_s),
        fmt_opt(s.u_c),
        s.alpha1.to_string(),
        s.alpha2.to_string(),
        fmt_opt(s.theta_hat),
        fmt_opt(s.zeta),
        fmt_opt(s.o),
        fmt_opt(s.blf),
        fmt_opt(s.r_low),
        fmt_opt(s.denom_high),
        s.status.as_str().to_string(),
    ]);
}

pub fn to_csv(trace: &[TraceRecord]) -> String {
    let mut w = csv::Writer::from_writer(format!("# schema: {TRACE_SCHEMA}\n").into_bytes());
    w.write_record(columns()).expect("in-memory write");
    let mut row = Vec::with_capacity(1 + 2 * SIDE_FIELDS.len());
    for r in trace {
        row.clear();
        row.push(fmt_f64(r.t));
        push_side(&mut row, &r.left);
        push_side(&mut row, &r.right);
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

struct Fields<'a> {
    rec: &'a csv::StringRecord,
    pos: usize,
    row: usize,
}

impl<'a> Fields<'a> {
    fn next(&mut self) -> (&'a str, &'static str) {
        let name = if self.pos == 0 {
            "t"
        } else {
            SIDE_FIELDS[(self.pos - 1) % SIDE_FIELDS.len()]
        };
        let v: &'a str = &self.rec[self.pos];
        self.pos += 1;
        (v, name)
    }

    fn err(&self, name: &str, v: &str) -> String {
        format!("row {}, field {name}: bad value `{v}`", self.row)
    }

    fn f64(&mut self) -> std::result::Result<f64, String> {
        let (v, name) = self.next();
        v.parse().map_err(|_| self.err(name, v))
    }

    fn opt(&mut self) -> std::result::Result<Option<f64>, String> {
        let (v, name) = self.next();
        if v.is_empty() {
            return Ok(None);
        }
        v.parse().map(Some).map_err(|_| self.err(name, v))
    }

    fn flag(&mut self) -> std::result::Result<u8, String> {
        let (v, name) = self.next();
        match v {
            "0" => Ok(0),
            "1" => Ok(1),
            _ => Err(self.err(name, v)),
        }
    }

    fn side(&mut self) -> std::result::Result<SideRecord, String> {
        Ok(SideRecord {
            v_ref: self.f64()?,
            v: self.f64()?,
            e: self.f64()?,
            u_dnn: self.opt()?,
            u_s: self.opt()?,
            u_c: self.opt()?,
            alpha1: self.flag()?,
            alpha2: self.flag()?,
            theta_hat: self.opt()?,
            zeta: self.opt()?,
            o: self.opt()?,
            blf: self.opt()?,
            r_low: self.opt()?,
            denom_high: self.opt()?,
            status: {
                let (v, name) = self.next();
                v.parse::<Policy>().map_err(|_| self.err(name, v))?
            },
        })
    }
}

pub fn from_csv(text: &str) -> std::result::Result<Vec<TraceRecord>, String> {
    let first = text.lines().next().unwrap_or_default();
    if first != format!("# schema: {TRACE_SCHEMA}") {
        return Err(format!(
            "expected `# schema: {TRACE_SCHEMA}` on the first line"
        ));
    }
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let header = r.headers().map_err(|e| e.to_string())?;
    if header.iter().ne(columns().iter().map(String::as_str)) {
        return Err("trace columns do not match the schema".into());
    }
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| format!("row {}: {e}", i + 1))?;
        let mut f = Fields {
            rec: &rec,
            pos: 0,
            row: i + 1,
        };
        let t = f.f64()?;
        let left = f.side()?;
        let right = f.side()?;
        out.push(TraceRecord { t, left, right });
    }
    Ok(out)
}

pub fn save(path: &Path, trace: &[TraceRecord]) -> Result<()> {
    super::write_atomic(path, to_csv(trace).as_bytes())
}

pub fn load(path: &Path) -> Result<Vec<TraceRecord>> {
    let text = super::read_to_string(path)?;
    from_csv(&text).map_err(|e| super::format_err(path, e))
}

/// Loads a trace and rejects an empty one.
pub fn load_nonempty(path: &Path) -> Result<Vec<TraceRecord>> {
    let tr = load(path)?;
    if tr.is_empty() {
        return Err(Error::Format {
            path: path.display().to_string(),
            reason: "trace has no rows".into(),
        });
    }
    Ok(tr)
}
