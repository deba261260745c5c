//! JSON configuration: a model plus a list of experiments.
//!
//! ```json
//! {
//!   "v": 2, "k_max": 2,
//!   "table": [[0.5, 0.6], [0.4, 0.5], [0.45, 0.55]],
//!   "start": "y0",
//!   "experiments": [{ "kind": "slln", "n": [10000, 1000000], "samples": 20 }]
//! }
//! ```
//!
//! `delta1`/`delta2` may be given to pin the bounds of the table; otherwise
//! they are its largest and smallest entries. `start` is `"y0"` (default) or
//! `{"y1": int, "y2": [bits]}`.

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use vlmc_core::{MemoryState, ModelSpec};

use crate::error::CliError;

/// Experiment kinds understood by the verification harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Slln,
    Clt,
    Llt,
    Mdp,
    Tail,
    Arith,
    Is,
}

impl Kind {
    pub const ALL: [Kind; 7] = [Kind::Slln, Kind::Clt, Kind::Llt, Kind::Mdp, Kind::Tail, Kind::Arith, Kind::Is];

    pub fn name(self) -> &'static str {
        match self {
            Kind::Slln => "slln",
            Kind::Clt => "clt",
            Kind::Llt => "llt",
            Kind::Mdp => "mdp",
            Kind::Tail => "tail",
            Kind::Arith => "arith",
            Kind::Is => "is",
        }
    }

    pub fn parse(s: &str) -> Option<Kind> {
        Kind::ALL.into_iter().find(|k| k.name() == s)
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One experiment with every default filled in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub kind: Kind,
    /// Path lengths (a grid for `slln` and `is`, a single value otherwise).
    pub n: Vec<u64>,
    /// Trajectories per `n` (or IS paths).
    pub samples: u64,
    /// Overrides the seed derived from the manifest seed.
    pub seed: Option<u64>,
    /// Main pass/fail threshold; its meaning depends on the kind.
    pub tolerance: f64,
    /// `kappa = n^kappa_exponent` for `mdp`.
    pub kappa_exponent: f64,
    /// Deviation levels for `mdp`.
    pub y: Vec<f64>,
    /// Use exact binomial oracles when the table is constant.
    pub exact: bool,
    /// Target slope for `is`; the point is `x = round(alpha n)`.
    pub alpha: Option<f64>,
    /// Half-width of the `is` target window.
    pub window: u64,
    /// DP horizon; `None` picks the default from the tail constants.
    pub horizon: Option<usize>,
    /// `arith` grid spacing and lattice exclusion radius.
    pub grid_step: f64,
    pub margin: f64,
    /// Report file name inside the output directory.
    pub output: String,
}

impl ExperimentConfig {
    /// Defaults for `kind`.
    pub fn defaults(kind: Kind) -> Self {
        let (n, samples, tolerance) = match kind {
            Kind::Slln => (vec![10_000, 100_000, 1_000_000], 20, 5.0),
            Kind::Clt => (vec![10_000], 10_000, 0.02),
            Kind::Llt => (vec![2000], 1_000_000, 0.1),
            Kind::Mdp => (vec![100_000], 10_000, 0.2),
            Kind::Tail => (vec![200], 1, 0.0),
            Kind::Arith => (vec![0], 1, 1e-4),
            Kind::Is => (vec![500], 100_000, 0.1),
        };
        Self {
            kind,
            n,
            samples,
            seed: None,
            tolerance,
            kappa_exponent: 0.7,
            y: vec![1.0],
            exact: true,
            alpha: None,
            window: 0,
            horizon: None,
            grid_step: 0.01,
            margin: 0.05,
            output: format!("report-{}.json", kind.name()),
        }
    }
}

/// Parsed model: the validated spec and the start state.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub spec: ModelSpec,
    pub start: MemoryState,
    /// The model section as given, kept for hashing and echoing.
    pub source: Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub model: Model,
    pub experiments: Vec<ExperimentConfig>,
}

fn err(path: &str, msg: impl Into<String>) -> CliError {
    CliError::Config { path: path.to_string(), message: msg.into() }
}

fn as_u64(v: &Value, path: &str) -> Result<u64, CliError> {
    v.as_u64().ok_or_else(|| err(path, "expected a nonnegative integer"))
}

fn as_f64(v: &Value, path: &str) -> Result<f64, CliError> {
    v.as_f64().ok_or_else(|| err(path, "expected a number"))
}

fn check_keys(obj: &serde_json::Map<String, Value>, allowed: &[&str], path: &str) -> Result<(), CliError> {
    for key in obj.keys() {
        if !allowed.contains(&key.as_str()) {
            let p = if path.is_empty() { key.clone() } else { format!("{path}.{key}") };
            return Err(err(&p, "unknown field"));
        }
    }
    Ok(())
}

const MODEL_KEYS: [&str; 6] = ["v", "k_max", "table", "delta1", "delta2", "start"];

/// Parses a configuration document; the first violation is reported with
/// the path of the offending field.
pub fn parse_config(text: &str) -> Result<Config, CliError> {
    let root: Value = serde_json::from_str(text).map_err(|e| err("", format!("not valid JSON: {e}")))?;
    let obj = root.as_object().ok_or_else(|| err("", "expected an object"))?;
    let mut allowed: Vec<&str> = MODEL_KEYS.to_vec();
    allowed.push("experiments");
    check_keys(obj, &allowed, "")?;
    let model = parse_model(&root)?;
    let mut experiments = Vec::new();
    if let Some(list) = obj.get("experiments") {
        let list = list.as_array().ok_or_else(|| err("experiments", "expected an array"))?;
        for (i, e) in list.iter().enumerate() {
            experiments.push(parse_experiment(e, &format!("experiments[{i}]"))?);
        }
    }
    Ok(Config { model, experiments })
}

/// Parses the model fields of a configuration object.
pub fn parse_model(root: &Value) -> Result<Model, CliError> {
    let obj = root.as_object().ok_or_else(|| err("", "expected an object"))?;
    let v = as_u64(obj.get("v").ok_or_else(|| err("v", "missing"))?, "v")?;
    if v == 0 || v > u64::from(vlmc_core::model::MAX_DEPTH) {
        return Err(err("v", format!("context depth must be in 1..={}", vlmc_core::model::MAX_DEPTH)));
    }
    let v = v as u32;
    let table_v = obj.get("table").ok_or_else(|| err("table", "missing"))?;
    let rows = table_v.as_array().ok_or_else(|| err("table", "expected an array of rows"))?;
    if rows.is_empty() {
        return Err(err("table", "needs at least one row"));
    }
    let words = 1usize << (v - 1);
    let mut table = Vec::with_capacity(rows.len());
    for (k, row) in rows.iter().enumerate() {
        let path = format!("table[{k}]");
        let row = row.as_array().ok_or_else(|| err(&path, "expected an array"))?;
        if row.len() != words {
            return Err(err(&path, format!("expected {words} columns (2^(v-1)), found {}", row.len())));
        }
        let mut out = Vec::with_capacity(words);
        for (j, x) in row.iter().enumerate() {
            let path = format!("table[{k}][{j}]");
            let p = as_f64(x, &path)?;
            if !(p > 0.0 && p < 1.0) {
                return Err(err(&path, format!("probability {p} is not in the open interval (0, 1)")));
            }
            out.push(p);
        }
        table.push(out);
    }
    if let Some(k_max) = obj.get("k_max") {
        let k_max = as_u64(k_max, "k_max")?;
        if k_max as usize + 1 != table.len() {
            return Err(err("k_max", format!("k_max = {k_max} but the table has {} rows", table.len())));
        }
    }
    let spec = match (obj.get("delta1"), obj.get("delta2")) {
        (None, None) => ModelSpec::new(v, table.clone()).map_err(|e| err("table", e.to_string()))?,
        (Some(d1), Some(d2)) => {
            let (d1, d2) = (as_f64(d1, "delta1")?, as_f64(d2, "delta2")?);
            for (k, row) in table.iter().enumerate() {
                for (j, &p) in row.iter().enumerate() {
                    if p < d2 || p > d1 {
                        return Err(err(&format!("table[{k}][{j}]"), format!("probability {p} outside the bounds [{d2}, {d1}]")));
                    }
                }
            }
            ModelSpec::with_bounds(v, table.clone(), d1, d2).map_err(|e| err("delta1", e.to_string()))?
        }
        (Some(_), None) => return Err(err("delta2", "missing (delta1 and delta2 go together)")),
        (None, Some(_)) => return Err(err("delta1", "missing (delta1 and delta2 go together)")),
    };
    let start = match obj.get("start") {
        None => MemoryState::y0(v),
        Some(Value::String(s)) if s == "y0" => MemoryState::y0(v),
        Some(Value::Object(s)) => {
            check_keys(s, &["y1", "y2"], "start")?;
            let y1 = as_u64(s.get("y1").ok_or_else(|| err("start.y1", "missing"))?, "start.y1")?;
            let bits = s.get("y2").and_then(Value::as_array).ok_or_else(|| err("start.y2", "expected an array of bits"))?;
            let mut y2 = Vec::with_capacity(bits.len());
            for (i, b) in bits.iter().enumerate() {
                match b.as_u64() {
                    Some(x @ 0..=1) => y2.push(x as u8),
                    _ => return Err(err(&format!("start.y2[{i}]"), "expected 0 or 1")),
                }
            }
            let state = MemoryState::new(y1, &y2).map_err(|e| err("start.y2", e.to_string()))?;
            state.validate(&spec).map_err(|e| err("start.y2", e.to_string()))?;
            state
        }
        Some(_) => return Err(err("start", "expected \"y0\" or {\"y1\": ..., \"y2\": [...]}")),
    };
    let mut source = serde_json::Map::new();
    for key in MODEL_KEYS {
        if let Some(x) = obj.get(key) {
            source.insert(key.to_string(), x.clone());
        }
    }
    Ok(Model { spec, start, source: Value::Object(source) })
}

const EXPERIMENT_KEYS: [&str; 14] = [
    "kind",
    "n",
    "samples",
    "seed",
    "tolerance",
    "kappa_exponent",
    "y",
    "exact",
    "alpha",
    "window",
    "horizon",
    "grid_step",
    "margin",
    "output",
];

fn parse_experiment(e: &Value, path: &str) -> Result<ExperimentConfig, CliError> {
    let obj = e.as_object().ok_or_else(|| err(path, "expected an object"))?;
    check_keys(obj, &EXPERIMENT_KEYS, path)?;
    let p = |k: &str| format!("{path}.{k}");
    let kind_s = obj.get("kind").and_then(Value::as_str).ok_or_else(|| err(&p("kind"), "missing or not a string"))?;
    let kind = Kind::parse(kind_s).ok_or_else(|| {
        let names: Vec<&str> = Kind::ALL.iter().map(|k| k.name()).collect();
        err(&p("kind"), format!("unknown experiment kind {kind_s:?}; expected one of {}", names.join(", ")))
    })?;
    let mut c = ExperimentConfig::defaults(kind);
    if let Some(n) = obj.get("n") {
        c.n = match n {
            Value::Array(xs) => xs.iter().enumerate().map(|(i, x)| as_u64(x, &format!("{path}.n[{i}]"))).collect::<Result<_, _>>()?,
            x => vec![as_u64(x, &p("n"))?],
        };
        if c.n.is_empty() {
            return Err(err(&p("n"), "needs at least one value"));
        }
    }
    if let Some(x) = obj.get("samples") {
        c.samples = as_u64(x, &p("samples"))?;
        if c.samples == 0 {
            return Err(err(&p("samples"), "must be at least 1"));
        }
    }
    if let Some(x) = obj.get("seed") {
        c.seed = Some(as_u64(x, &p("seed"))?);
    }
    if let Some(x) = obj.get("tolerance") {
        c.tolerance = as_f64(x, &p("tolerance"))?;
        if !(c.tolerance > 0.0) {
            return Err(err(&p("tolerance"), "must be positive"));
        }
    }
    if let Some(x) = obj.get("kappa_exponent") {
        c.kappa_exponent = as_f64(x, &p("kappa_exponent"))?;
        if !(c.kappa_exponent > 0.5 && c.kappa_exponent < 1.0) {
            return Err(err(&p("kappa_exponent"), "must lie in (0.5, 1)"));
        }
    }
    if let Some(x) = obj.get("y") {
        c.y = match x {
            Value::Array(xs) => xs.iter().enumerate().map(|(i, x)| as_f64(x, &format!("{path}.y[{i}]"))).collect::<Result<_, _>>()?,
            x => vec![as_f64(x, &p("y"))?],
        };
        if let Some(i) = c.y.iter().position(|y| *y < 0.0) {
            return Err(err(&format!("{path}.y[{i}]"), "deviation levels must be nonnegative"));
        }
    }
    if let Some(x) = obj.get("exact") {
        c.exact = x.as_bool().ok_or_else(|| err(&p("exact"), "expected a boolean"))?;
    }
    if let Some(x) = obj.get("alpha") {
        let a = as_f64(x, &p("alpha"))?;
        if !(a > 0.0 && a < 1.0) {
            return Err(err(&p("alpha"), "must lie in (0, 1)"));
        }
        c.alpha = Some(a);
    }
    if let Some(x) = obj.get("window") {
        c.window = as_u64(x, &p("window"))?;
    }
    if let Some(x) = obj.get("horizon") {
        let h = as_u64(x, &p("horizon"))?;
        if h == 0 {
            return Err(err(&p("horizon"), "must be at least 1"));
        }
        c.horizon = Some(h as usize);
    }
    if let Some(x) = obj.get("grid_step") {
        c.grid_step = as_f64(x, &p("grid_step"))?;
        if !(c.grid_step > 0.0 && c.grid_step < 1.0) {
            return Err(err(&p("grid_step"), "must lie in (0, 1)"));
        }
    }
    if let Some(x) = obj.get("margin") {
        c.margin = as_f64(x, &p("margin"))?;
        if !(c.margin >= 0.0 && c.margin < 0.5) {
            return Err(err(&p("margin"), "must lie in [0, 0.5)"));
        }
    }
    if let Some(x) = obj.get("output") {
        let s = x.as_str().ok_or_else(|| err(&p("output"), "expected a file name"))?;
        if s.is_empty() || s.contains('/') || s.contains('\\') || s == "summary.json" {
            return Err(err(&p("output"), "must be a plain file name other than summary.json"));
        }
        c.output = s.to_string();
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    const M1: &str = r#"{"v": 2, "k_max": 2, "table": [[0.5, 0.6], [0.4, 0.5], [0.45, 0.55]]}"#;

    #[test]
    fn reference_model() {
        let c = parse_config(M1).unwrap();
        let s = &c.model.spec;
        assert_eq!((s.v(), s.k_max()), (2, 2));
        assert_eq!(s.rows(), vec![vec![0.5, 0.6], vec![0.4, 0.5], vec![0.45, 0.55]]);
        assert_eq!((s.delta1(), s.delta2()), (0.6, 0.4));
        assert_eq!(c.model.start, MemoryState::y0(2));
        assert!(c.experiments.is_empty());
    }

    #[test]
    fn entry_outside_the_open_interval() {
        let e = parse_config(r#"{"v": 2, "table": [[0.5, 1.0]]}"#).unwrap_err();
        assert!(e.to_string().contains("table[0][1]"), "{e}");
    }

    #[test]
    fn entry_outside_supplied_bounds() {
        let e = parse_config(r#"{"v": 1, "table": [[0.5], [0.7]], "delta1": 0.6, "delta2": 0.4}"#).unwrap_err();
        assert!(e.to_string().contains("table[1][0]"), "{e}");
    }

    #[test]
    fn unknown_kind_and_field() {
        let e = parse_config(r#"{"v": 1, "table": [[0.3]], "experiments": [{"kind": "ldp"}]}"#).unwrap_err();
        assert!(e.to_string().contains("experiments[0].kind"), "{e}");
        let e = parse_config(r#"{"v": 1, "table": [[0.3]], "experiments": [{"kind": "clt", "m": 3}]}"#).unwrap_err();
        assert!(e.to_string().contains("experiments[0].m"), "{e}");
    }

    #[test]
    fn explicit_start_and_defaults() {
        let c = parse_config(
            r#"{"v": 3, "table": [[0.3, 0.3, 0.3, 0.3]], "start": {"y1": 4, "y2": [1, 0, 1]},
                "experiments": [{"kind": "mdp", "n": 5000}]}"#,
        )
        .unwrap();
        assert_eq!(c.model.start, MemoryState::new(4, &[1, 0, 1]).unwrap());
        let e = &c.experiments[0];
        assert_eq!(e.n, vec![5000]);
        assert_eq!(e.kappa_exponent, 0.7);
        assert_eq!(e.output, "report-mdp.json");
    }
}
