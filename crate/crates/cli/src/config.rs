// SPDX-License-Identifier: MIT OR Apache-2.0

//! Run configuration: a TOML file read as flat dotted keys.
//!
//! Every setting lives under one dotted key such as `params.t` or
//! `data.synthetic.n_r`. Keys may be written dotted at top level or grouped
//! in `[tables]`; both flatten to the same key set. Overrides given as
//! `key=value` replace single keys after the file is read. Their values are
//! TOML literals (`5`, `1e-3`, `true`, `[50, 100]`, `"amkm"`), and anything
//! that is not a valid literal is taken as a bare string.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use kmm_core::{BandwidthPolicy, FusionMode, FusionReference, MatchParams, Method, TruthMode};
use toml::Value;

use crate::error::ConfigError;

type Flat = BTreeMap<String, Value>;

/// Output encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputFormat {
    #[default]
    Csv,
    Jsonl,
}

impl FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(Self::Csv),
            "jsonl" | "json-lines" => Ok(Self::Jsonl),
            other => Err(format!("unknown format `{other}` (expected csv or jsonl)")),
        }
    }
}

impl fmt::Display for OutputFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Csv => "csv",
            Self::Jsonl => "jsonl",
        })
    }
}

/// Two isotropic Gaussians. Means are per-coordinate vectors of length `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub d: usize,
    pub matching_mean: Vec<f64>,
    pub matching_sigma: f64,
    pub reference_mean: Vec<f64>,
    pub reference_sigma: f64,
    pub n_m: usize,
    pub n_r: usize,
}

/// One numeric CSV file, randomly split into matching and reference rows.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvData {
    pub path: PathBuf,
    pub header: bool,
    pub n_m: usize,
    pub n_r: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Synthetic(SyntheticData),
    Csv(CsvData),
}

impl DataSource {
    pub fn n_m(&self) -> usize {
        match self {
            Self::Synthetic(s) => s.n_m,
            Self::Csv(c) => c.n_m,
        }
    }

    pub fn n_r(&self) -> usize {
        match self {
            Self::Synthetic(s) => s.n_r,
            Self::Csv(c) => c.n_r,
        }
    }

    pub fn set_n_m(&mut self, v: usize) {
        match self {
            Self::Synthetic(s) => s.n_m = v,
            Self::Csv(c) => c.n_m = v,
        }
    }

    pub fn set_n_r(&mut self, v: usize) {
        match self {
            Self::Synthetic(s) => s.n_r = v,
            Self::Csv(c) => c.n_r = v,
        }
    }
}

/// Parameter varied by `sweep`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    NM,
    NR,
    N,
    NS,
    NH,
    Partitions,
}

impl SweepAxis {
    pub fn id(&self) -> &'static str {
        match self {
            Self::NM => "n_m",
            Self::NR => "n_r",
            Self::N => "n",
            Self::NS => "n_s",
            Self::NH => "n_h",
            Self::Partitions => "partitions",
        }
    }

    /// Whether varying this axis changes the fit of `method`.
    pub fn applies_to(&self, method: Method) -> bool {
        match self {
            Self::NM | Self::NR => true,
            Self::N | Self::NS => method == Method::Amkm,
            Self::NH => method == Method::GloKmm,
            Self::Partitions => method == Method::EnsKmm,
        }
    }
}

impl FromStr for SweepAxis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "n_m" => Self::NM,
            "n_r" => Self::NR,
            "n" => Self::N,
            "n_s" => Self::NS,
            "n_h" => Self::NH,
            "partitions" => Self::Partitions,
            other => return Err(format!("unknown axis `{other}` (expected n_m, n_r, n, n_s, n_h or partitions)")),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScalableSpec {
    pub initial_reference: usize,
    pub batch_size: usize,
    pub batches: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub method: Method,
    pub data: DataSource,
    pub kernel: BandwidthPolicy,
    /// `params.seed` is not read from the file; the runner sets it per repeat.
    pub params: MatchParams,
    /// Base seed. Repeat `r` uses `seed + r` for data and for the estimator.
    pub seed: u64,
    pub repeats: usize,
    pub standardize: bool,
    pub truth: TruthMode,
    pub output: Option<PathBuf>,
    pub format: OutputFormat,
    /// When false, `wallclock_ms` is written as 0 so output files are
    /// byte-for-byte reproducible.
    pub timing: bool,
    pub sweep: Option<SweepSpec>,
    pub scalable: Option<ScalableSpec>,
    /// Methods for `compare` when only one config file is given.
    pub compare_methods: Vec<Method>,
}

impl RunConfig {
    /// Reads `path`, applies `overrides` in order, and validates. Relative
    /// CSV paths are resolved against the directory holding `path`.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Read { path: path.display().to_string(), source })?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::parse(&text, overrides, Some(base))
    }

    /// Like [`RunConfig::load`] on in-memory text.
    pub fn parse(text: &str, overrides: &[String], base_dir: Option<&Path>) -> Result<Self, ConfigError> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        let mut flat = Flat::new();
        flatten("", table, &mut flat);
        for o in overrides {
            let (k, v) = parse_override(o)?;
            flat.insert(k, v);
        }
        let mut cfg = Self::from_flat(flat)?;
        if let (DataSource::Csv(c), Some(dir)) = (&mut cfg.data, base_dir) {
            if c.path.is_relative() {
                c.path = dir.join(&c.path);
            }
        }
        Ok(cfg)
    }

    fn from_flat(flat: Flat) -> Result<Self, ConfigError> {
        let mut f = Fields::new(flat);
        let method = f.parsed::<Method>("method")?.ok_or(ConfigError::Missing("method".into()))?;

        let has_synth = f.has_prefix("data.synthetic.");
        let has_csv = f.has_prefix("data.csv.") || f.has_prefix("data.split.");
        let data = match (has_synth, has_csv) {
            (true, true) => {
                return Err(field("data", "give either data.synthetic.* or data.csv.* with data.split.*, not both"))
            }
            (false, false) => return Err(field("data", "no data source; set data.synthetic.* or data.csv.path")),
            (true, false) => DataSource::Synthetic(synthetic(&mut f)?),
            (false, true) => DataSource::Csv(CsvData {
                path: PathBuf::from(f.required_str("data.csv.path")?),
                header: f.bool("data.csv.header")?.unwrap_or(true),
                n_m: f.required_count("data.split.n_m")?,
                n_r: f.required_count("data.split.n_r")?,
            }),
        };

        let kernel = match f.str("kernel.policy")?.as_deref() {
            None | Some("median") => {
                if f.peek("kernel.sigma") {
                    return Err(field("kernel.sigma", "only allowed with kernel.policy = \"fixed\""));
                }
                BandwidthPolicy::Median
            }
            Some("fixed") => {
                let s = f.f64("kernel.sigma")?.ok_or(ConfigError::Missing("kernel.sigma".into()))?;
                if !(s > 0.0 && s.is_finite()) {
                    return Err(field("kernel.sigma", format!("must be positive, got {s}")));
                }
                BandwidthPolicy::Fixed(s)
            }
            Some(other) => return Err(field("kernel.policy", format!("unknown policy `{other}` (expected median or fixed)"))),
        };

        let d = MatchParams::default();
        let params = MatchParams {
            t: f.count("params.t")?.unwrap_or(d.t),
            n: f.count("params.n")?.unwrap_or(d.n),
            n_s: f.count("params.n_s")?.unwrap_or(d.n_s),
            n_h: f.count("params.n_h")?.unwrap_or(d.n_h),
            lambda: f.f64("params.lambda")?.unwrap_or(d.lambda),
            seed: 0,
            partitions: f.count("params.partitions")?.unwrap_or(d.partitions),
            fusion: match f.str("params.fusion")?.as_deref() {
                None | Some("separable") => FusionMode::Separable,
                Some("coupled") => FusionMode::Coupled,
                Some(o) => return Err(field("params.fusion", format!("unknown mode `{o}` (expected separable or coupled)"))),
            },
            fusion_reference: match f.str("params.fusion_reference")?.as_deref() {
                None | Some("subset") => FusionReference::Subset,
                Some("full") => FusionReference::Full,
                Some(o) => return Err(field("params.fusion_reference", format!("unknown reference `{o}` (expected subset or full)"))),
            },
            batch_reps: f.count("params.batch_reps")?.unwrap_or(d.batch_reps),
        };
        if !(params.lambda >= 0.0 && params.lambda.is_finite()) {
            return Err(field("params.lambda", format!("must be nonnegative, got {}", params.lambda)));
        }

        let standardize = f.bool("standardize")?.unwrap_or(false);
        let truth = match f.str("truth")?.as_deref() {
            None => match data {
                DataSource::Synthetic(_) => TruthMode::Analytic,
                DataSource::Csv(_) => TruthMode::FullKmmOracle,
            },
            Some("analytic") => TruthMode::Analytic,
            Some("full-kmm-oracle") => TruthMode::FullKmmOracle,
            Some(o) => return Err(field("truth", format!("unknown truth `{o}` (expected analytic or full-kmm-oracle)"))),
        };
        match (&data, truth, standardize) {
            (DataSource::Csv(_), TruthMode::Analytic, _) => {
                return Err(field("truth", "analytic truth needs a synthetic data source"))
            }
            (DataSource::Synthetic(_), _, true) => {
                return Err(field("standardize", "only applies to CSV data; synthetic ratios are defined on raw coordinates"))
            }
            _ => {}
        }

        let sweep = if f.has_prefix("sweep.") {
            let axis = f.parsed::<SweepAxis>("sweep.axis")?.ok_or(ConfigError::Missing("sweep.axis".into()))?;
            let values = f.count_list("sweep.values")?.ok_or(ConfigError::Missing("sweep.values".into()))?;
            Some(SweepSpec { axis, values })
        } else {
            None
        };
        let scalable = if f.has_prefix("scalable.") {
            Some(ScalableSpec {
                initial_reference: f.required_count("scalable.initial_reference")?,
                batch_size: f.required_count("scalable.batch_size")?,
                batches: f.count("scalable.batches")?.ok_or(ConfigError::Missing("scalable.batches".into()))?,
            })
        } else {
            None
        };
        let compare_methods = match f.take("compare.methods") {
            None => Vec::new(),
            Some(Value::Array(items)) => items
                .iter()
                .map(|v| v.as_str().and_then(|s| s.parse::<Method>().ok()))
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| field("compare.methods", "expected a list of method names"))?,
            Some(_) => return Err(field("compare.methods", "expected a list of method names")),
        };

        let cfg = RunConfig {
            method,
            data,
            kernel,
            params,
            seed: f.u64("seed")?.unwrap_or(0),
            repeats: f.count("repeats")?.unwrap_or(5),
            standardize,
            truth,
            output: f.str("output")?.map(PathBuf::from),
            format: f.parsed::<OutputFormat>("format")?.unwrap_or_default(),
            timing: f.bool("timing")?.unwrap_or(true),
            sweep,
            scalable,
            compare_methods,
        };
        if cfg.repeats == 0 {
            return Err(field("repeats", "must be at least 1"));
        }
        f.finish()?;
        cfg.check_params()?;
        Ok(cfg)
    }

    /// Checks method-specific parameters against the configured reference size.
    pub fn check_params(&self) -> Result<(), ConfigError> {
        let n_r = match self.scalable {
            Some(s) => s.initial_reference,
            None => self.data.n_r(),
        };
        self.params.validate(self.method, n_r).map_err(|e| field("params", e.to_string()))
    }

    /// Flat dotted keys that [`RunConfig::parse`] maps back to `self`.
    pub fn to_flat(&self) -> BTreeMap<String, Value> {
        let mut m = Flat::new();
        let mut put = |k: &str, v: Value| {
            m.insert(k.to_string(), v);
        };
        let int = |v: usize| Value::Integer(v as i64);
        let floats = |v: &[f64]| Value::Array(v.iter().map(|x| Value::Float(*x)).collect());
        put("method", Value::String(self.method.id().into()));
        match &self.data {
            DataSource::Synthetic(s) => {
                put("data.synthetic.d", int(s.d));
                put("data.synthetic.matching_mean", floats(&s.matching_mean));
                put("data.synthetic.matching_sigma", Value::Float(s.matching_sigma));
                put("data.synthetic.reference_mean", floats(&s.reference_mean));
                put("data.synthetic.reference_sigma", Value::Float(s.reference_sigma));
                put("data.synthetic.n_m", int(s.n_m));
                put("data.synthetic.n_r", int(s.n_r));
            }
            DataSource::Csv(c) => {
                put("data.csv.path", Value::String(c.path.display().to_string()));
                put("data.csv.header", Value::Boolean(c.header));
                put("data.split.n_m", int(c.n_m));
                put("data.split.n_r", int(c.n_r));
            }
        }
        match self.kernel {
            BandwidthPolicy::Median => put("kernel.policy", Value::String("median".into())),
            BandwidthPolicy::Fixed(s) => {
                put("kernel.policy", Value::String("fixed".into()));
                put("kernel.sigma", Value::Float(s));
            }
        }
        let p = &self.params;
        put("params.t", int(p.t));
        put("params.n", int(p.n));
        put("params.n_s", int(p.n_s));
        put("params.n_h", int(p.n_h));
        put("params.lambda", Value::Float(p.lambda));
        put("params.partitions", int(p.partitions));
        put(
            "params.fusion",
            Value::String(match p.fusion {
                FusionMode::Separable => "separable",
                FusionMode::Coupled => "coupled",
            }
            .into()),
        );
        put(
            "params.fusion_reference",
            Value::String(match p.fusion_reference {
                FusionReference::Subset => "subset",
                FusionReference::Full => "full",
            }
            .into()),
        );
        put("params.batch_reps", int(p.batch_reps));
        put("seed", Value::Integer(self.seed as i64));
        put("repeats", int(self.repeats));
        put("standardize", Value::Boolean(self.standardize));
        put("truth", Value::String(self.truth.id().into()));
        if let Some(o) = &self.output {
            put("output", Value::String(o.display().to_string()));
        }
        put("format", Value::String(self.format.to_string()));
        put("timing", Value::Boolean(self.timing));
        if let Some(s) = &self.sweep {
            put("sweep.axis", Value::String(s.axis.id().into()));
            put("sweep.values", Value::Array(s.values.iter().map(|v| int(*v)).collect()));
        }
        if let Some(s) = self.scalable {
            put("scalable.initial_reference", int(s.initial_reference));
            put("scalable.batch_size", int(s.batch_size));
            put("scalable.batches", int(s.batches));
        }
        if !self.compare_methods.is_empty() {
            put(
                "compare.methods",
                Value::Array(self.compare_methods.iter().map(|m| Value::String(m.id().into())).collect()),
            );
        }
        m
    }

    /// Serializes as `key = value` lines with dotted keys.
    pub fn to_toml_string(&self) -> String {
        self.to_flat().iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

fn synthetic(f: &mut Fields) -> Result<SyntheticData, ConfigError> {
    let d = f.required_count("data.synthetic.d")?;
    let mut mean = |key: &str| -> Result<Vec<f64>, ConfigError> {
        let v = f.f64_or_list(key)?.unwrap_or_else(|| vec![0.0]);
        match v.len() {
            1 => Ok(vec![v[0]; d]),
            n if n == d => Ok(v),
            n => Err(field(key, format!("has {n} entries but data.synthetic.d = {d}"))),
        }
    };
    let matching_mean = mean("data.synthetic.matching_mean")?;
    let reference_mean = mean("data.synthetic.reference_mean")?;
    let mut sigma = |key: &str| -> Result<f64, ConfigError> {
        let s = f.f64(key)?.unwrap_or(1.0);
        if s > 0.0 && s.is_finite() {
            Ok(s)
        } else {
            Err(field(key, format!("must be positive, got {s}")))
        }
    };
    Ok(SyntheticData {
        d,
        matching_sigma: sigma("data.synthetic.matching_sigma")?,
        reference_sigma: sigma("data.synthetic.reference_sigma")?,
        matching_mean,
        reference_mean,
        n_m: f.required_count("data.synthetic.n_m")?,
        n_r: f.required_count("data.synthetic.n_r")?,
    })
}

fn field(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Field { key: key.to_string(), message: message.into() }
}

fn flatten(prefix: &str, table: toml::Table, out: &mut Flat) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k } else { format!("{prefix}.{k}") };
        match v {
            Value::Table(t) => flatten(&key, t, out),
            other => {
                out.insert(key, other);
            }
        }
    }
}

/// Splits `key=value`, reading the value as a TOML literal when possible.
pub fn parse_override(s: &str) -> Result<(String, Value), ConfigError> {
    let (k, v) = s.split_once('=').ok_or_else(|| ConfigError::BadOverride(s.to_string()))?;
    let (k, v) = (k.trim(), v.trim());
    if k.is_empty() {
        return Err(ConfigError::BadOverride(s.to_string()));
    }
    let value = format!("v = {v}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(v.to_string()));
    Ok((k.to_string(), value))
}

/// Typed, consuming access to the flat key map; leftovers are unknown keys.
struct Fields {
    map: Flat,
}

impl Fields {
    fn new(map: Flat) -> Self {
        Self { map }
    }

    fn take(&mut self, key: &str) -> Option<Value> {
        self.map.remove(key)
    }

    fn peek(&self, key: &str) -> bool {
        self.map.contains_key(key)
    }

    fn has_prefix(&self, prefix: &str) -> bool {
        self.map.keys().any(|k| k.starts_with(prefix))
    }

    fn str(&mut self, key: &str) -> Result<Option<String>, ConfigError> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s)),
            Some(v) => Err(field(key, format!("expected a string, got {v}"))),
        }
    }

    fn required_str(&mut self, key: &str) -> Result<String, ConfigError> {
        self.str(key)?.ok_or(ConfigError::Missing(key.into()))
    }

    fn parsed<T: FromStr>(&mut self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        self.str(key)?.map(|s| s.parse::<T>().map_err(|e| field(key, e.to_string()))).transpose()
    }

    fn bool(&mut self, key: &str) -> Result<Option<bool>, ConfigError> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::Boolean(b)) => Ok(Some(b)),
            Some(v) => Err(field(key, format!("expected true or false, got {v}"))),
        }
    }

    fn u64(&mut self, key: &str) -> Result<Option<u64>, ConfigError> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::Integer(i)) if i >= 0 => Ok(Some(i as u64)),
            Some(v) => Err(field(key, format!("expected a nonnegative integer, got {v}"))),
        }
    }

    fn count(&mut self, key: &str) -> Result<Option<usize>, ConfigError> {
        Ok(self.u64(key)?.map(|v| v as usize))
    }

    fn required_count(&mut self, key: &str) -> Result<usize, ConfigError> {
        match self.count(key)? {
            None => Err(ConfigError::Missing(key.into())),
            Some(0) => Err(field(key, "must be at least 1")),
            Some(v) => Ok(v),
        }
    }

    fn count_list(&mut self, key: &str) -> Result<Option<Vec<usize>>, ConfigError> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::Array(items)) if !items.is_empty() => items
                .iter()
                .map(|v| v.as_integer().filter(|i| *i > 0).map(|i| i as usize))
                .collect::<Option<Vec<_>>>()
                .map(Some)
                .ok_or_else(|| field(key, "expected a list of positive integers")),
            Some(_) => Err(field(key, "expected a nonempty list of positive integers")),
        }
    }

    fn f64(&mut self, key: &str) -> Result<Option<f64>, ConfigError> {
        match self.take(key) {
            None => Ok(None),
            Some(v) => as_f64(&v).map(Some).ok_or_else(|| field(key, format!("expected a number, got {v}"))),
        }
    }

    fn f64_or_list(&mut self, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::Array(items)) if !items.is_empty() => items
                .iter()
                .map(as_f64)
                .collect::<Option<Vec<_>>>()
                .map(Some)
                .ok_or_else(|| field(key, "expected a number or a list of numbers")),
            Some(v) => as_f64(&v).map(|x| Some(vec![x])).ok_or_else(|| field(key, "expected a number or a list of numbers")),
        }
    }

    fn finish(self) -> Result<(), ConfigError> {
        match self.map.into_keys().next() {
            Some(k) => Err(ConfigError::UnknownKey(k)),
            None => Ok(()),
        }
    }
}

fn as_f64(v: &Value) -> Option<f64> {
    match v {
        Value::Float(x) => Some(*x),
        Value::Integer(i) => Some(*i as f64),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SYNTH: &str = r#"
method = "amkm"
params.t = 3
[data.synthetic]
d = 2
reference_mean = 0.5
n_m = 40
n_r = 200
"#;

    #[test]
    fn defaults_and_broadcast() {
        let c = RunConfig::parse(SYNTH, &[], None).unwrap();
        assert_eq!(c.repeats, 5);
        assert_eq!(c.params.t, 3);
        assert_eq!((c.params.n, c.params.n_s, c.params.n_h, c.params.partitions), (50, 100, 100, 5));
        assert_eq!(c.truth, TruthMode::Analytic);
        assert_eq!(c.kernel, BandwidthPolicy::Median);
        match c.data {
            DataSource::Synthetic(s) => {
                assert_eq!(s.reference_mean, vec![0.5, 0.5]);
                assert_eq!(s.matching_mean, vec![0.0, 0.0]);
            }
            _ => panic!("expected synthetic data"),
        }
    }

    #[test]
    fn overrides_are_typed() {
        let c = RunConfig::parse(
            SYNTH,
            &["params.lambda=0.01".into(), "method=kmm".into(), "kernel.policy=fixed".into(), "kernel.sigma=2".into()],
            None,
        )
        .unwrap();
        assert_eq!(c.params.lambda, 0.01);
        assert_eq!(c.method, Method::Kmm);
        assert_eq!(c.kernel, BandwidthPolicy::Fixed(2.0));
        assert!(matches!(parse_override("novalue"), Err(ConfigError::BadOverride(_))));
    }

    #[test]
    fn round_trip() {
        let c = RunConfig::parse(SYNTH, &["sweep.axis=n".into(), "sweep.values=[50, 100]".into()], None).unwrap();
        let again = RunConfig::parse(&c.to_toml_string(), &[], None).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn field_level_errors() {
        let err = |o: &str| RunConfig::parse(SYNTH, &[o.to_string()], None).unwrap_err().to_string();
        assert!(err("params.t=\"x\"").contains("params.t"));
        assert!(err("bogus.key=1").contains("bogus.key"));
        assert!(err("params.n=500").contains("n = 500"));
        assert!(err("data.csv.path=x.csv").contains("not both"));
        assert!(err("standardize=true").contains("standardize"));
        assert!(err("kernel.sigma=1").contains("kernel.sigma"));
        assert!(err("repeats=0").contains("repeats"));
        let e = RunConfig::parse("method = \"kmm\"", &[], None).unwrap_err().to_string();
        assert!(e.contains("no data source"));
    }

    #[test]
    fn csv_source_and_oracle_default() {
        let text = "method = \"glokmm\"\ndata.csv.path = \"d.csv\"\ndata.split.n_m = 10\ndata.split.n_r = 150\n";
        let c = RunConfig::parse(text, &[], Some(Path::new("/cfg"))).unwrap();
        assert_eq!(c.truth, TruthMode::FullKmmOracle);
        match &c.data {
            DataSource::Csv(d) => assert_eq!(d.path, PathBuf::from("/cfg/d.csv")),
            _ => panic!("expected csv data"),
        }
        assert!(RunConfig::parse(text, &["truth=analytic".into()], None).is_err());
    }
}
