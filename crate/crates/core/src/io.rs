//! CSV formats: daily profiles, capability curves and time series.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::capability::CapabilityCurve;
use crate::error::DataError;

pub const PROFILE_HEADER: [&str; 3] = ["hour", "load_mult", "solar_mult"];

pub const CAPABILITY_HEADER: [&str; 15] = [
    "curtailment",
    "q_lower_kvar",
    "q_upper_kvar",
    "q_base_kvar",
    "a",
    "b",
    "v0_lower",
    "v0_upper",
    "d_lo",
    "d_hi",
    "wc_q_lower_kvar",
    "wc_q_upper_kvar",
    "case_id",
    "feasible_lower",
    "feasible_upper",
];

pub const SERIES_HEADER: [&str; 3] = ["t", "series", "value"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub hour: usize,
    pub load_mult: f64,
    pub solar_mult: f64,
}

fn check_header<R: Read>(rdr: &mut csv::Reader<R>, want: &[&str]) -> Result<(), DataError> {
    let h = rdr.headers()?;
    if h.iter().ne(want.iter().copied()) {
        return Err(DataError::Format(format!(
            "expected header `{}`, found `{}`",
            want.join(","),
            h.iter().collect::<Vec<_>>().join(",")
        )));
    }
    Ok(())
}

/// Reads `hour,load_mult,solar_mult`; `rows` pins the row count.
pub fn read_profiles<R: Read>(r: R, rows: Option<usize>) -> Result<Vec<ProfileRow>, DataError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    check_header(&mut rdr, &PROFILE_HEADER)?;
    let out = rdr.deserialize().collect::<Result<Vec<ProfileRow>, _>>()?;
    if let Some(n) = rows {
        if out.len() != n {
            return Err(DataError::Format(format!("expected {n} profile rows, found {}", out.len())));
        }
    }
    Ok(out)
}

pub fn write_profiles<W: Write>(w: W, rows: &[ProfileRow]) -> Result<(), DataError> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Six significant digits, trailing zeros trimmed.
pub fn fmt_num(v: f64) -> String {
    if !v.is_finite() {
        return if v.is_nan() { "nan".into() } else { "inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let mag = v.abs().log10().floor() as i32;
    if !(-5..=14).contains(&mag) {
        return format!("{:.5e}", v);
    }
    let decimals = (5 - mag).max(0) as usize;
    let mut s = format!("{:.*}", decimals, v);
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    if s == "-0" {
        s = "0".into();
    }
    s
}

/// A numeric CSV cell: a value, `inf` (infeasible) or empty (not computed).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell {
    Value(f64),
    Infeasible,
    Missing,
}

impl Cell {
    pub fn from_opt(v: Option<f64>) -> Self {
        v.map_or(Cell::Infeasible, Cell::Value)
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            Cell::Value(v) => Some(*v),
            _ => None,
        }
    }

    pub fn render(&self) -> String {
        match self {
            Cell::Value(v) => fmt_num(*v),
            Cell::Infeasible => "inf".into(),
            Cell::Missing => String::new(),
        }
    }

    pub fn parse(s: &str) -> Result<Self, DataError> {
        match s.trim() {
            "" => Ok(Cell::Missing),
            "inf" => Ok(Cell::Infeasible),
            t => t.parse::<f64>().map(Cell::Value).map_err(|_| DataError::Format(format!("bad numeric cell `{t}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapabilityRow {
    pub curtailment: f64,
    pub q_lower_kvar: Cell,
    pub q_upper_kvar: Cell,
    pub q_base_kvar: f64,
    pub a: Cell,
    pub b: Cell,
    pub v0_lower: Cell,
    pub v0_upper: Cell,
    /// Grid-side voltages over which both nominal bounds remain deliverable.
    pub d_lo: Cell,
    pub d_hi: Cell,
    pub wc_q_lower_kvar: Cell,
    pub wc_q_upper_kvar: Cell,
    pub case_id: Option<u8>,
    pub feasible_lower: bool,
    pub feasible_upper: bool,
}

impl CapabilityRow {
    fn cells(&self) -> Vec<String> {
        vec![
            fmt_num(self.curtailment),
            self.q_lower_kvar.render(),
            self.q_upper_kvar.render(),
            fmt_num(self.q_base_kvar),
            self.a.render(),
            self.b.render(),
            self.v0_lower.render(),
            self.v0_upper.render(),
            self.d_lo.render(),
            self.d_hi.render(),
            self.wc_q_lower_kvar.render(),
            self.wc_q_upper_kvar.render(),
            self.case_id.map(|c| c.to_string()).unwrap_or_default(),
            self.feasible_lower.to_string(),
            self.feasible_upper.to_string(),
        ]
    }
}

pub fn capability_rows(curve: &CapabilityCurve) -> Vec<CapabilityRow> {
    curve
        .points
        .iter()
        .map(|p| {
            let ql = p.q_lower();
            let qu = p.q_upper();
            let base = curve.q_base;
            let norm = |q: Option<f64>| match q {
                Some(q) if base != 0.0 => Cell::Value((q - base) / base),
                Some(_) => Cell::Missing,
                None => Cell::Infeasible,
            };
            let (d_lo, d_hi) = match &p.interval {
                Some(iv) => (Cell::Value(iv.d_lower.lo.max(iv.d_upper.lo)), Cell::Value(iv.d_lower.hi.min(iv.d_upper.hi))),
                None => match (p.lower.v0(), p.upper.v0()) {
                    (Some(_), Some(_)) => (Cell::Missing, Cell::Missing),
                    _ => (Cell::Infeasible, Cell::Infeasible),
                },
            };
            let (wl, wu) = match (&p.worst, &p.interval) {
                (Some(_), Some(iv)) => (Cell::from_opt(iv.worst_case.0), Cell::from_opt(iv.worst_case.1)),
                (Some(w), None) => (Cell::from_opt(w.lower.q_kvar().filter(|_| ql.is_some())), Cell::from_opt(w.upper.q_kvar().filter(|_| qu.is_some()))),
                (None, _) => (Cell::Missing, Cell::Missing),
            };
            CapabilityRow {
                curtailment: p.curtailment,
                q_lower_kvar: Cell::from_opt(ql),
                q_upper_kvar: Cell::from_opt(qu),
                q_base_kvar: base,
                a: norm(ql),
                b: norm(qu),
                v0_lower: Cell::from_opt(p.lower.v0()),
                v0_upper: Cell::from_opt(p.upper.v0()),
                d_lo,
                d_hi,
                wc_q_lower_kvar: wl,
                wc_q_upper_kvar: wu,
                case_id: p.interval.map(|iv| iv.case_id),
                feasible_lower: p.lower.feasible(),
                feasible_upper: p.upper.feasible(),
            }
        })
        .collect()
}

pub fn write_capability_csv<W: Write>(w: W, rows: &[CapabilityRow]) -> Result<(), DataError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(CAPABILITY_HEADER)?;
    for r in rows {
        wtr.write_record(r.cells())?;
    }
    wtr.flush()?;
    Ok(())
}

fn parse_bool(s: &str) -> Result<bool, DataError> {
    match s.trim() {
        "true" => Ok(true),
        "false" => Ok(false),
        t => Err(DataError::Format(format!("bad flag `{t}`"))),
    }
}

fn parse_f64(s: &str) -> Result<f64, DataError> {
    s.trim().parse().map_err(|_| DataError::Format(format!("bad number `{s}`")))
}

pub fn read_capability_csv<R: Read>(r: R) -> Result<Vec<CapabilityRow>, DataError> {
    let mut rdr = csv::Reader::from_reader(r);
    check_header(&mut rdr, &CAPABILITY_HEADER)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let c = |k: usize| Cell::parse(&rec[k]);
        out.push(CapabilityRow {
            curtailment: parse_f64(&rec[0])?,
            q_lower_kvar: c(1)?,
            q_upper_kvar: c(2)?,
            q_base_kvar: parse_f64(&rec[3])?,
            a: c(4)?,
            b: c(5)?,
            v0_lower: c(6)?,
            v0_upper: c(7)?,
            d_lo: c(8)?,
            d_hi: c(9)?,
            wc_q_lower_kvar: c(10)?,
            wc_q_upper_kvar: c(11)?,
            case_id: match rec[12].trim() {
                "" => None,
                t => Some(t.parse().map_err(|_| DataError::Format(format!("bad case id `{t}`")))?),
            },
            feasible_lower: parse_bool(&rec[13])?,
            feasible_upper: parse_bool(&rec[14])?,
        });
    }
    Ok(out)
}

/// One `t,series,value` record.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesRow {
    pub t: usize,
    pub series: String,
    pub value: Cell,
}

pub fn write_series_csv<W: Write>(w: W, rows: &[SeriesRow]) -> Result<(), DataError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(SERIES_HEADER)?;
    for r in rows {
        wtr.write_record([r.t.to_string(), r.series.clone(), r.value.render()])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_series_csv<R: Read>(r: R) -> Result<Vec<SeriesRow>, DataError> {
    let mut rdr = csv::Reader::from_reader(r);
    check_header(&mut rdr, &SERIES_HEADER)?;
    rdr.records()
        .map(|rec| {
            let rec = rec?;
            Ok(SeriesRow {
                t: rec[0].trim().parse().map_err(|_| DataError::Format(format!("bad step `{}`", &rec[0])))?,
                series: rec[1].to_string(),
                value: Cell::parse(&rec[2])?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(fmt_num(1234.5678), "1234.57");
        assert_eq!(fmt_num(-0.000123456789), "-0.000123457");
        assert_eq!(fmt_num(2000.0), "2000");
        assert_eq!(fmt_num(0.0), "0");
        assert_eq!(fmt_num(-1e-20), "-1.00000e-20");
        assert_eq!(fmt_num(f64::INFINITY), "inf");
        assert_eq!(fmt_num(-0.0000001), "-1.00000e-7");
    }

    #[test]
    fn cells_round_trip() {
        for c in [Cell::Value(-0.84), Cell::Infeasible, Cell::Missing] {
            assert_eq!(Cell::parse(&c.render()).unwrap(), c);
        }
        assert!(Cell::parse("abc").is_err());
    }

    #[test]
    fn profile_row_count_enforced() {
        let text = "hour,load_mult,solar_mult\n0,0.5,0\n1,0.6,0\n";
        assert_eq!(read_profiles(text.as_bytes(), None).unwrap().len(), 2);
        assert!(read_profiles(text.as_bytes(), Some(24)).is_err());
        assert!(read_profiles("h,l,s\n".as_bytes(), None).is_err());
    }
}
