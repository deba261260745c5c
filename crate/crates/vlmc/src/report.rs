//! Verification reports.
//!
//! Every verdict in a report is a function of numbers stored next to it:
//! a check passes when `deviation <= threshold`. Statistical checks that
//! miss by less than a factor of two are graded `statistical_miss` instead of
//! `hard_fail`, which separates an unlucky draw from a broken implementation.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;

use crate::config::{ExperimentConfig, Kind};

/// A float that survives JSON even when it is not finite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Num(pub f64);

impl Serialize for Num {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let x = self.0;
        if x.is_finite() {
            s.serialize_f64(x)
        } else if x.is_nan() {
            s.serialize_str("nan")
        } else if x > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }
}

impl<'de> Deserialize<'de> for Num {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match Value::deserialize(d)? {
            Value::Number(n) => n.as_f64().map(Num).ok_or_else(|| serde::de::Error::custom("number out of range")),
            Value::String(s) => match s.as_str() {
                "nan" => Ok(Num(f64::NAN)),
                "inf" => Ok(Num(f64::INFINITY)),
                "-inf" => Ok(Num(f64::NEG_INFINITY)),
                other => Err(serde::de::Error::custom(format!("not a number: {other:?}"))),
            },
            other => Err(serde::de::Error::custom(format!("not a number: {other}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    StatisticalMiss,
    HardFail,
    /// Not judged (for example a histogram bin with too few hits).
    Skipped,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "pass",
            Verdict::StatisticalMiss => "statistical_miss",
            Verdict::HardFail => "hard_fail",
            Verdict::Skipped => "skipped",
        })
    }
}

/// One row of a report: a statistic, its target and the pass rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub label: String,
    pub n: Option<u64>,
    pub value: Num,
    pub target: Num,
    pub deviation: Num,
    pub threshold: Num,
    pub statistical: bool,
    pub verdict: Verdict,
}

/// `deviation <= threshold` passes; a statistical check within twice the
/// threshold is a miss; everything else (including NaN) fails hard.
pub fn judge(deviation: f64, threshold: f64, statistical: bool) -> Verdict {
    if deviation <= threshold {
        Verdict::Pass
    } else if statistical && deviation < 2.0 * threshold {
        Verdict::StatisticalMiss
    } else {
        Verdict::HardFail
    }
}

impl Check {
    pub fn new(label: impl Into<String>, n: Option<u64>, value: f64, target: f64, deviation: f64, threshold: f64, statistical: bool) -> Self {
        Self {
            label: label.into(),
            n,
            value: Num(value),
            target: Num(target),
            deviation: Num(deviation),
            threshold: Num(threshold),
            statistical,
            verdict: judge(deviation, threshold, statistical),
        }
    }

    /// `|value - target| <= threshold`.
    pub fn abs(label: impl Into<String>, n: Option<u64>, value: f64, target: f64, threshold: f64, statistical: bool) -> Self {
        Self::new(label, n, value, target, (value - target).abs(), threshold, statistical)
    }

    /// `value <= threshold` for a count or an upper-bounded statistic.
    pub fn at_most(label: impl Into<String>, n: Option<u64>, value: f64, threshold: f64, statistical: bool) -> Self {
        Self::new(label, n, value, threshold, value, threshold, statistical)
    }

    /// A recorded but unjudged row.
    pub fn skipped(label: impl Into<String>, n: Option<u64>, value: f64, target: f64) -> Self {
        Self {
            label: label.into(),
            n,
            value: Num(value),
            target: Num(target),
            deviation: Num((value - target).abs()),
            threshold: Num(f64::NAN),
            statistical: true,
            verdict: Verdict::Skipped,
        }
    }

    /// Recomputes the verdict from the stored numbers.
    pub fn recheck(&self) -> Verdict {
        if self.verdict == Verdict::Skipped {
            Verdict::Skipped
        } else {
            judge(self.deviation.0, self.threshold.0, self.statistical)
        }
    }
}

/// Worst verdict among the judged checks; no checks means a pass.
pub fn overall(checks: &[Check]) -> Verdict {
    let mut v = Verdict::Pass;
    for c in checks {
        match c.verdict {
            Verdict::HardFail => return Verdict::HardFail,
            Verdict::StatisticalMiss => v = Verdict::StatisticalMiss,
            _ => {}
        }
    }
    v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub kind: Kind,
    pub tool_version: String,
    pub seed: u64,
    /// The model section of the configuration.
    pub model: Value,
    pub config: ExperimentConfig,
    pub tolerance_scale: f64,
    /// Supporting quantities (moments, constants, counts).
    pub statistics: BTreeMap<String, Num>,
    pub checks: Vec<Check>,
    /// Set when the experiment could not be carried out.
    pub error: Option<String>,
    pub verdict: Verdict,
}

impl VerificationReport {
    /// Verdict recomputed from the checks alone.
    pub fn recompute(&self) -> Verdict {
        Self::verdict_of(&self.checks, self.error.is_some())
    }

    /// Overall verdict of a list of checks, re-judged from their numbers.
    pub fn verdict_of(checks: &[Check], errored: bool) -> Verdict {
        if errored {
            return Verdict::HardFail;
        }
        let rechecked: Vec<Check> = checks.iter().map(|c| Check { verdict: c.recheck(), ..c.clone() }).collect();
        overall(&rechecked)
    }

    /// Whether every stored verdict matches its recomputation.
    pub fn is_consistent(&self) -> bool {
        self.checks.iter().all(|c| c.recheck() == c.verdict) && self.recompute() == self.verdict
    }

    /// `n,statistic,value,target,deviation,threshold,verdict` rows.
    pub fn table_csv(&self) -> Result<String, csv::Error> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["n", "statistic", "value", "target", "deviation", "threshold", "verdict"])?;
        for c in &self.checks {
            w.write_record([
                c.n.map(|n| n.to_string()).unwrap_or_default(),
                c.label.clone(),
                c.value.0.to_string(),
                c.target.0.to_string(),
                c.deviation.0.to_string(),
                c.threshold.0.to_string(),
                c.verdict.to_string(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| e.into_error())?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grading() {
        assert_eq!(judge(0.1, 0.1, true), Verdict::Pass);
        assert_eq!(judge(0.15, 0.1, true), Verdict::StatisticalMiss);
        assert_eq!(judge(0.15, 0.1, false), Verdict::HardFail);
        assert_eq!(judge(0.25, 0.1, true), Verdict::HardFail);
        assert_eq!(judge(f64::NAN, 0.1, true), Verdict::HardFail);
    }

    #[test]
    fn non_finite_numbers_round_trip() {
        let c = Check::skipped("bin", Some(3), f64::INFINITY, 1.0);
        let text = serde_json::to_string(&c).unwrap();
        let back: Check = serde_json::from_str(&text).unwrap();
        assert_eq!(back.value.0, f64::INFINITY);
        assert!(back.threshold.0.is_nan());
        assert_eq!(back.recheck(), Verdict::Skipped);
    }

    #[test]
    fn overall_takes_the_worst() {
        let pass = Check::abs("a", None, 1.0, 1.0, 0.1, true);
        let miss = Check::abs("b", None, 1.15, 1.0, 0.1, true);
        let skip = Check::skipped("c", None, 5.0, 1.0);
        assert_eq!(overall(&[pass.clone(), skip.clone()]), Verdict::Pass);
        assert_eq!(overall(&[pass, miss, skip]), Verdict::StatisticalMiss);
    }
}
