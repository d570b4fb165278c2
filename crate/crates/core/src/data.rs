//! Two-arm right-censored trial data: one `(arm, time, event)` row per subject.

use std::fmt;
use std::io::Read;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Arm {
    Control = 0,
    Treatment = 1,
}

impl Arm {
    pub const BOTH: [Arm; 2] = [Arm::Control, Arm::Treatment];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Arm> {
        match i {
            0 => Some(Arm::Control),
            1 => Some(Arm::Treatment),
            _ => None,
        }
    }

    pub fn other(self) -> Arm {
        match self {
            Arm::Control => Arm::Treatment,
            Arm::Treatment => Arm::Control,
        }
    }
}

/// Unit of the time axis. Only the default penalty depends on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeUnit {
    #[default]
    Years,
    Months,
    Days,
}

impl TimeUnit {
    /// Length of one unit expressed in years.
    pub fn in_years(self) -> f64 {
        match self {
            TimeUnit::Years => 1.0,
            TimeUnit::Months => 1.0 / 12.0,
            TimeUnit::Days => 1.0 / 365.25,
        }
    }
}

impl FromStr for TimeUnit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "years" | "year" | "y" => Ok(TimeUnit::Years),
            "months" | "month" | "m" => Ok(TimeUnit::Months),
            "days" | "day" | "d" => Ok(TimeUnit::Days),
            other => Err(Error::InvalidConfig(format!("unknown time unit `{other}`"))),
        }
    }
}

impl fmt::Display for TimeUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TimeUnit::Years => "years",
            TimeUnit::Months => "months",
            TimeUnit::Days => "days",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub arm: Arm,
    pub time: f64,
    pub event: bool,
}

impl SubjectRecord {
    pub fn new(arm: Arm, time: f64, event: bool) -> Self {
        Self { arm, time, event }
    }
}

/// Validated, immutable trial dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialDataset {
    records: Vec<SubjectRecord>,
    counts: [usize; 2],
    max_time: [f64; 2],
    time_unit: TimeUnit,
}

impl TrialDataset {
    pub fn new(records: Vec<SubjectRecord>, time_unit: TimeUnit) -> Result<Self> {
        let mut counts = [0usize; 2];
        let mut max_time = [0.0f64; 2];
        for (i, r) in records.iter().enumerate() {
            if !(r.time > 0.0 && r.time.is_finite()) {
                return Err(Error::NonPositiveTime { line: i as u64 + 2 });
            }
            let a = r.arm.index();
            counts[a] += 1;
            max_time[a] = max_time[a].max(r.time);
        }
        for arm in Arm::BOTH {
            if counts[arm.index()] < 2 {
                return Err(Error::ArmMissing {
                    arm: arm as u8,
                    count: counts[arm.index()],
                });
            }
        }
        Ok(Self {
            records,
            counts,
            max_time,
            time_unit,
        })
    }

    pub fn records(&self) -> &[SubjectRecord] {
        &self.records
    }

    pub fn n(&self) -> usize {
        self.records.len()
    }

    pub fn n_arm(&self, arm: Arm) -> usize {
        self.counts[arm.index()]
    }

    pub fn n1(&self) -> usize {
        self.counts[1]
    }

    pub fn n0(&self) -> usize {
        self.counts[0]
    }

    /// Allocation fraction n1/n.
    pub fn allocation(&self) -> f64 {
        self.n1() as f64 / self.n() as f64
    }

    pub fn time_unit(&self) -> TimeUnit {
        self.time_unit
    }

    pub fn max_follow_up(&self, arm: Arm) -> f64 {
        self.max_time[arm.index()]
    }

    /// Largest restriction time at which both arms' Kaplan–Meier curves are defined.
    pub fn max_estimable_time(&self) -> f64 {
        self.max_time[0].min(self.max_time[1])
    }

    pub fn event_count(&self) -> usize {
        self.records.iter().filter(|r| r.event).count()
    }

    /// `(time, event)` pairs of one arm, in record order.
    pub fn arm_records(&self, arm: Arm) -> Vec<(f64, bool)> {
        self.records
            .iter()
            .filter(|r| r.arm == arm)
            .map(|r| (r.time, r.event))
            .collect()
    }

    /// Dataset made of the records at `indices` (repeats allowed).
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let records = indices.iter().map(|&i| self.records[i]).collect();
        Self::new(records, self.time_unit)
    }

    /// Same records with arm labels exchanged.
    pub fn swap_arms(&self) -> Self {
        let records = self
            .records
            .iter()
            .map(|r| SubjectRecord::new(r.arm.other(), r.time, r.event))
            .collect();
        Self {
            records,
            counts: [self.counts[1], self.counts[0]],
            max_time: [self.max_time[1], self.max_time[0]],
            time_unit: self.time_unit,
        }
    }

    /// Same records with every time multiplied by `factor`.
    pub fn scale_times(&self, factor: f64) -> Result<Self> {
        let records = self
            .records
            .iter()
            .map(|r| SubjectRecord::new(r.arm, r.time * factor, r.event))
            .collect();
        Self::new(records, self.time_unit)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::with_capacity(16 * (self.records.len() + 1));
        out.push_str("arm,time,event\n");
        for r in &self.records {
            out.push_str(&format!("{},{},{}\n", r.arm as u8, r.time, r.event as u8));
        }
        out
    }
}

fn parse_binary(field: &str) -> Option<Option<bool>> {
    let v: f64 = field.trim().parse().ok()?;
    Some(if v == 0.0 {
        Some(false)
    } else if v == 1.0 {
        Some(true)
    } else {
        None
    })
}

/// Parses CSV with header `arm,time,event`. Line numbers in errors are 1-based
/// file lines (the header is line 1).
pub fn parse_dataset<R: Read>(source: R, time_unit: TimeUnit) -> Result<TrialDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let headers = reader
        .headers()
        .map_err(|e| Error::MalformedRow {
            line: 1,
            reason: e.to_string(),
        })?
        .clone();
    let names: Vec<&str> = headers.iter().collect();
    if names != ["arm", "time", "event"] {
        return Err(Error::MalformedRow {
            line: 1,
            reason: format!("expected header `arm,time,event`, found `{}`", names.join(",")),
        });
    }

    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| Error::MalformedRow {
            line: e.position().map_or(0, |p| p.line()),
            reason: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line());
        let malformed = |reason: &str| Error::MalformedRow {
            line,
            reason: reason.to_string(),
        };
        let arm = match parse_binary(&row[0]).ok_or_else(|| malformed("arm is not a number"))? {
            Some(false) => Arm::Control,
            Some(true) => Arm::Treatment,
            None => return Err(Error::InvalidArm { line }),
        };
        let time: f64 = row[1]
            .parse()
            .map_err(|_| malformed("time is not a number"))?;
        if !(time > 0.0 && time.is_finite()) {
            return Err(Error::NonPositiveTime { line });
        }
        let event = parse_binary(&row[2])
            .ok_or_else(|| malformed("event is not a number"))?
            .ok_or(Error::InvalidEvent { line })?;
        records.push(SubjectRecord::new(arm, time, event));
    }
    TrialDataset::new(records, time_unit)
}
