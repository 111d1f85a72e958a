//! Trace CSV export and import.
//!
//! Row 0 describes the state before any question (empty design fields, zero
//! cost); rows 1.. are the answered iterations. Id lists are hyphen-joined.

use std::io::{Read, Write};
use std::path::Path;

use crate::engine::{IterationRecord, Snapshot};
use crate::error::{Error, Result};

pub const HEADER: [&str; 11] = [
    "iteration",
    "agent",
    "k",
    "l",
    "subset",
    "cost",
    "cumulative_cost",
    "response",
    "criterion_value",
    "tv_plurality",
    "tv_borda",
];

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub agent: Option<usize>,
    pub depth: Option<usize>,
    pub size: Option<usize>,
    pub subset: Vec<usize>,
    pub cost: f64,
    pub cumulative_cost: f64,
    pub response: Vec<usize>,
    pub criterion_value: f64,
    pub tv_plurality: Option<f64>,
    pub tv_borda: Option<f64>,
}

impl TraceRow {
    pub fn initial(s: &Snapshot) -> Self {
        Self {
            iteration: 0,
            agent: None,
            depth: None,
            size: None,
            subset: vec![],
            cost: 0.0,
            cumulative_cost: 0.0,
            response: vec![],
            criterion_value: s.criterion_value,
            tv_plurality: s.tv_plurality,
            tv_borda: s.tv_borda,
        }
    }

    pub fn from_record(r: &IterationRecord) -> Self {
        Self {
            iteration: r.index,
            agent: Some(r.design.agent),
            depth: Some(r.design.question.depth()),
            size: Some(r.design.question.size()),
            subset: r.design.question.subset().to_vec(),
            cost: r.cost,
            cumulative_cost: r.cumulative_cost,
            response: r.response.ranking().to_vec(),
            criterion_value: r.criterion_value,
            tv_plurality: r.tv_plurality,
            tv_borda: r.tv_borda,
        }
    }

    fn fields(&self) -> [String; 11] {
        let opt = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
        let optf = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        [
            self.iteration.to_string(),
            opt(self.agent),
            opt(self.depth),
            opt(self.size),
            join_ids(&self.subset),
            self.cost.to_string(),
            self.cumulative_cost.to_string(),
            join_ids(&self.response),
            self.criterion_value.to_string(),
            optf(self.tv_plurality),
            optf(self.tv_borda),
        ]
    }
}

pub fn join_ids(ids: &[usize]) -> String {
    ids.iter().map(usize::to_string).collect::<Vec<_>>().join("-")
}

pub fn split_ids(s: &str) -> Result<Vec<usize>> {
    if s.is_empty() {
        return Ok(vec![]);
    }
    s.split('-')
        .map(|p| {
            p.parse::<usize>()
                .map_err(|_| Error::Parse(format!("bad id list {s:?}")))
        })
        .collect()
}

pub fn rows(initial: &Snapshot, trace: &[IterationRecord]) -> Vec<TraceRow> {
    std::iter::once(TraceRow::initial(initial))
        .chain(trace.iter().map(TraceRow::from_record))
        .collect()
}

pub fn write_csv<W: Write>(out: W, rows: &[TraceRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HEADER)?;
    for r in rows {
        w.write_record(r.fields())?;
    }
    w.flush()?;
    Ok(())
}

pub fn to_csv_string(rows: &[TraceRow]) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(&mut buf, rows)?;
    String::from_utf8(buf).map_err(|e| Error::Parse(e.to_string()))
}

pub fn write_file(path: &Path, rows: &[TraceRow]) -> Result<()> {
    write_csv(std::fs::File::create(path)?, rows)
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<TraceRow>> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if header != HEADER {
        return Err(Error::Parse(format!("unexpected trace header {header:?}")));
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let get = |i: usize| rec.get(i).unwrap_or("");
        let num = |i: usize| -> Result<f64> {
            get(i)
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("bad number {:?} in column {}", get(i), HEADER[i])))
        };
        let optnum = |i: usize| -> Result<Option<f64>> {
            if get(i).is_empty() {
                Ok(None)
            } else {
                num(i).map(Some)
            }
        };
        let optint = |i: usize| -> Result<Option<usize>> {
            if get(i).is_empty() {
                Ok(None)
            } else {
                get(i)
                    .parse::<usize>()
                    .map(Some)
                    .map_err(|_| Error::Parse(format!("bad integer {:?} in column {}", get(i), HEADER[i])))
            }
        };
        out.push(TraceRow {
            iteration: optint(0)?.ok_or_else(|| Error::Parse("missing iteration".into()))?,
            agent: optint(1)?,
            depth: optint(2)?,
            size: optint(3)?,
            subset: split_ids(get(4))?,
            cost: num(5)?,
            cumulative_cost: num(6)?,
            response: split_ids(get(7))?,
            criterion_value: num(8)?,
            tv_plurality: optnum(9)?,
            tv_borda: optnum(10)?,
        });
    }
    Ok(out)
}

pub fn read_file(path: &Path) -> Result<Vec<TraceRow>> {
    read_csv(std::fs::File::open(path)?)
}
