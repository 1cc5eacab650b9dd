//! Experiment runner behind the `stability-kit` binary: config loading,
//! suite dispatch and report emission.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use stability_core::circuit::{parse_circuit, InverterOracle};
use stability_core::corrsamp::{CorrSampConstants, CorrSampParams, CorrSampler};
use stability_core::crypto::{keygen, DpRandEnc};
use stability_core::dist::{estimate_rate, estimate_replicability, tv_distance, EmpiricalDistribution, FiniteDistribution, MIN_TRIALS};
use stability_core::harness::{criterion, verify_all, Metric, Report, Settings};
use stability_core::learners::{
    ClassSpec, FiniteClass, LabeledPoint, LearnerConstants, LearnerParams, ListHHConstants, RFiniteLearner,
};
use stability_core::algo::{run_on, StatAlgorithm};
use stability_core::parallel::par_map;
use stability_core::tape::{RandomTape, Seed};
use stability_core::transforms::{RepToDpConstants, RepToPgConstants};

pub const SUITES: [&str; 9] = [
    "corrsamp",
    "cs-explicit",
    "learn-finite",
    "list-hh",
    "rep2dp",
    "rep2pg",
    "dp2rep",
    "crypto-sep",
    "verify-all",
];

/// Built-in base algorithms accepted by `--base`, per suite.
pub const BASES: [(&str, &str); 3] = [("rep2dp", "toy"), ("rep2pg", "threshold-mean"), ("dp2rep", "exp-mech-learner")];

pub const DEFAULT_SEED: &str = "0";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {msg}")]
    Io { path: PathBuf, msg: String },
    #[error("invalid config JSON: {0}")]
    Json(String),
    #[error("unknown suite {0:?}")]
    UnknownSuite(String),
    #[error("seed: {0}")]
    Seed(String),
    #[error("{field} = {value} out of range: {why}")]
    Range {
        field: &'static str,
        value: String,
        why: String,
    },
    #[error("{path}: {msg}")]
    Input { path: PathBuf, msg: String },
}

fn range(field: &'static str, value: impl ToString, why: impl Into<String>) -> ConfigError {
    ConfigError::Range {
        field,
        value: value.to_string(),
        why: why.into(),
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub suite: String,
    /// Hex seed.
    pub seed: Option<String>,
    #[serde(flatten)]
    pub settings: Settings,
    /// Circuit file for `corrsamp`.
    pub circuit: Option<PathBuf>,
    /// Class and distribution files for `learn-finite`.
    pub class: Option<PathBuf>,
    pub dist: Option<PathBuf>,
    /// Named built-in base algorithm for the transform suites.
    pub base: Option<String>,
}

/// Labeled points with weights, `[[x, y, w], ...]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistSpec {
    pub points: Vec<(u32, bool, f64)>,
}

fn known_keys() -> Vec<String> {
    match serde_json::to_value(ExperimentConfig::default()) {
        Ok(serde_json::Value::Object(m)) => m.keys().cloned().collect(),
        _ => Vec::new(),
    }
}

/// Parses a config, fills defaults and validates ranges. Unknown keys are
/// returned as warnings.
pub fn parse_config(text: &str) -> Result<(ExperimentConfig, Vec<String>), ConfigError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| ConfigError::Json(e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| ConfigError::Json("top level must be an object".into()))?;
    let known = known_keys();
    let warnings = obj
        .keys()
        .filter(|k| !known.contains(k))
        .map(|k| format!("unknown config key {k:?} ignored"))
        .collect();
    let config: ExperimentConfig = serde_json::from_value(value).map_err(|e| ConfigError::Json(e.to_string()))?;
    let config = config.resolved();
    config.validate()?;
    Ok((config, warnings))
}

pub fn load_config(path: &Path) -> Result<(ExperimentConfig, Vec<String>), ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    parse_config(&text)
}

fn open_unit(field: &'static str, v: Option<f64>) -> Result<(), ConfigError> {
    match v {
        Some(x) if !(x > 0.0 && x < 1.0) => Err(range(field, x, "must lie in (0, 1)")),
        _ => Ok(()),
    }
}

impl ExperimentConfig {
    pub fn new(suite: &str) -> Self {
        ExperimentConfig {
            suite: suite.to_string(),
            ..Default::default()
        }
        .resolved()
    }

    /// Fills the seed and the constant blocks with their defaults.
    pub fn resolved(mut self) -> Self {
        self.seed.get_or_insert_with(|| DEFAULT_SEED.to_string());
        let s = &mut self.settings;
        s.corrsamp.get_or_insert_with(CorrSampConstants::default);
        s.learner.get_or_insert_with(LearnerConstants::default);
        s.list_hh.get_or_insert_with(ListHHConstants::default);
        self
    }

    pub fn seed(&self) -> Result<Seed, ConfigError> {
        self.seed
            .as_deref()
            .unwrap_or(DEFAULT_SEED)
            .parse()
            .map_err(|e: stability_core::tape::TapeError| ConfigError::Seed(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !SUITES.contains(&self.suite.as_str()) {
            return Err(ConfigError::UnknownSuite(self.suite.clone()));
        }
        self.seed()?;
        let s = &self.settings;
        if let Some(nu) = s.nu {
            if !(nu > 0.0 && nu < 0.5) {
                return Err(range("nu", nu, "must lie in (0, 0.5)"));
            }
        }
        open_unit("rho", s.rho)?;
        open_unit("alpha", s.alpha)?;
        open_unit("beta", s.beta)?;
        if let Some(eps) = s.eps {
            if !(eps > 0.0 && eps <= 4.0) {
                return Err(range("eps", eps, "must lie in (0, 4]"));
            }
        }
        if let Some(delta) = s.delta {
            if !(delta > 0.0 && delta < 0.5) {
                return Err(range("delta", delta, "must lie in (0, 0.5)"));
            }
        }
        if let Some(t) = s.trials {
            if t < MIN_TRIALS {
                return Err(range("trials", t, "below the Monte Carlo minimum of 100"));
            }
        }
        if let Some(b) = s.prime_bits {
            if !(4..=64).contains(&b) {
                return Err(range("prime_bits", b, "must lie in 4..=64"));
            }
        }
        if let Some(c) = s.corrsamp {
            if !(c.c0 > 0.0 && c.c1 > 0.0 && c.c2 > 0.0) {
                return Err(range("corrsamp", format!("{c:?}"), "constants must be positive"));
            }
        }
        if let Some(c) = s.learner {
            if !(c.c_tau > 0.0 && c.c_m > 0.0) {
                return Err(range("learner", format!("{c:?}"), "constants must be positive"));
            }
        }
        if let Some(c) = s.list_hh {
            if !(c.c_t1 > 0.0 && c.c_t2 > 0.0 && c.c_tau > 0.0) {
                return Err(range("list_hh", format!("{c:?}"), "constants must be positive"));
            }
        }
        if let Some(b) = &self.base {
            if !BASES.contains(&(self.suite.as_str(), b.as_str())) {
                return Err(range("base", b, "not a built-in base algorithm for this suite"));
            }
        }
        Ok(())
    }
}

fn read_input(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}

fn input_err(path: &Path, msg: impl ToString) -> ConfigError {
    ConfigError::Input {
        path: path.to_path_buf(),
        msg: msg.to_string(),
    }
}

/// Runs the configured suite. Deterministic in the config.
pub fn run_suite(config: &ExperimentConfig) -> Result<Report, ConfigError> {
    let config = config.clone().resolved();
    config.validate()?;
    let seed = config.seed()?;
    let tag = seed.to_string();
    let tape = RandomTape::new(seed);
    let s = &config.settings;
    let run = |ids: &[usize]| {
        let mut r = Report::new(&config.suite, &tag);
        for &id in ids {
            r.absorb(&format!("c{id:02}"), criterion(id, s, &tape.derive(id as u64), &tag));
        }
        r
    };
    let mut r = match config.suite.as_str() {
        "corrsamp" => match &config.circuit {
            Some(path) => corrsamp_file(&config, path, &tape, &tag)?,
            None => run(&[3, 4]),
        },
        "cs-explicit" => run(&[2]),
        "learn-finite" => match (&config.class, &config.dist) {
            (Some(c), Some(d)) => learn_files(&config, c, d, &tape, &tag)?,
            (None, None) => run(&[5, 6]),
            _ => return Err(range("class", "", "class and dist must be given together")),
        },
        "list-hh" => {
            let mut r = run(&[13]);
            let c = s.list_hh.unwrap_or_default();
            r.constant("c_t1", c.c_t1);
            r.constant("c_t2", c.c_t2);
            r.constant("c_tau", c.c_tau);
            r
        }
        "rep2dp" => {
            let mut r = run(&[7]);
            let c = RepToDpConstants::default();
            r.constant("c_k1", c.c_k1);
            r.constant("c_k2", c.c_k2);
            r.details.insert("base".into(), json!("toy"));
            r
        }
        "rep2pg" => {
            let mut r = run(&[8]);
            let c = RepToPgConstants::default();
            r.constant("c_k", c.c_k);
            r.constant("c_t", c.c_t);
            r.details.insert("base".into(), json!("threshold-mean"));
            r
        }
        "dp2rep" => {
            let mut r = run(&[9]);
            // the exponential-mechanism learner has an exact distribution
            r.constant("approximate", 0.0);
            r.details.insert("base".into(), json!("exp-mech-learner"));
            r
        }
        "crypto-sep" => crypto_sep(s, &tape, &tag)?,
        "verify-all" => {
            let mut r = verify_all(s, &tape, &tag);
            r.suite = "verify-all".into();
            r
        }
        other => return Err(ConfigError::UnknownSuite(other.to_string())),
    };
    r.suite = config.suite.clone();
    r.refresh();
    Ok(r)
}

fn corrsamp_file(config: &ExperimentConfig, path: &Path, tape: &RandomTape, tag: &str) -> Result<Report, ConfigError> {
    let s = &config.settings;
    let c = parse_circuit(&read_input(path)?).map_err(|e| input_err(path, e))?;
    let nu = s.nu.unwrap_or(0.1);
    let runs = s.trials.unwrap_or(10_000);
    let params = CorrSampParams::for_width(c.in_bits(), nu, s.corrsamp.unwrap_or_default())
        .map_err(|e| range("nu", nu, e.to_string()))?;
    let sampler = CorrSampler::new(c.clone(), params, InverterOracle::BruteForce).map_err(|e| input_err(path, e))?;
    let outs = par_map(runs, |i| sampler.sample(&tape.derive(i as u64)));
    let mut hist: BTreeMap<String, u64> = BTreeMap::new();
    let mut rounds = Vec::with_capacity(runs);
    let mut values = Vec::with_capacity(runs);
    for o in outs {
        let o = o.map_err(|e| input_err(path, e))?;
        let key = match o.value {
            Some(v) => format!("{:0w$b}", v, w = c.out_bits() as usize),
            None => "bot".to_string(),
        };
        *hist.entry(key).or_default() += 1;
        rounds.push(o.rounds);
        values.push(o.value);
    }
    let bots = values.iter().filter(|v| v.is_none()).count();
    let emp: EmpiricalDistribution<Option<u64>> = values.into_iter().collect();
    let target = c.induced_distribution().map(|b| Some(b.value()));
    let tv = tv_distance(&emp.normalize().expect("runs > 0"), &target);
    let mut r = Report::new("corrsamp", tag);
    r.metric("tv_to_target", Metric::le(tv, 5.0 * nu));
    r.metric("bot_rate", Metric::le(bots as f64 / runs as f64, 5.0 * nu));
    record_corrsamp(&mut r, &params);
    rounds.sort_unstable();
    r.constant("rounds_mean", rounds.iter().sum::<u64>() as f64 / runs as f64);
    r.constant("rounds_median", rounds[runs / 2] as f64);
    r.constant("rounds_max", *rounds.last().expect("runs > 0") as f64);
    r.constant("trials", runs as f64);
    r.details.insert("histogram".into(), json!(hist));
    Ok(r)
}

fn record_corrsamp(r: &mut Report, p: &CorrSampParams) {
    r.constant("c0", p.constants.c0);
    r.constant("c1", p.constants.c1);
    r.constant("c2", p.constants.c2);
    r.constant("k", f64::from(p.k));
    r.constant("t1", p.t1 as f64);
    r.constant("t2", p.t2 as f64);
}

fn learn_files(
    config: &ExperimentConfig,
    class_path: &Path,
    dist_path: &Path,
    tape: &RandomTape,
    tag: &str,
) -> Result<Report, ConfigError> {
    let s = &config.settings;
    let spec: ClassSpec = serde_json::from_str(&read_input(class_path)?).map_err(|e| input_err(class_path, e))?;
    let class = Arc::new(FiniteClass::from_spec(&spec).map_err(|e| input_err(class_path, e))?);
    let dspec: DistSpec = serde_json::from_str(&read_input(dist_path)?).map_err(|e| input_err(dist_path, e))?;
    let (pts, w): (Vec<LabeledPoint>, Vec<f64>) = dspec.points.iter().map(|&(x, y, w)| ((x, y), w)).unzip();
    let data = FiniteDistribution::from_weights(pts, w).map_err(|e| input_err(dist_path, e))?;
    class.check_points(data.outcomes()).map_err(|e| input_err(dist_path, e))?;
    let (rho, alpha, beta) = (s.rho.unwrap_or(0.2), s.alpha.unwrap_or(0.2), s.beta.unwrap_or(0.1));
    let trials = s.trials.unwrap_or(200);
    let opt = class.opt(&data);
    let realizable = opt == 0.0;
    let constants = s.learner.unwrap_or_default();
    let p = LearnerParams::new(class.len(), rho, alpha, beta, realizable, constants)
        .map_err(|e| range("learner", "", e.to_string()))?;
    let l = RFiniteLearner::new(class.clone(), p).expect("validated params");
    let output = run_on(&l, &data, &tape.derive(0), &mut tape.derive(1));
    let rep = estimate_replicability(|x: &[LabeledPoint], c: &RandomTape| l.run(x, c), &data, p.m, trials, &tape.derive(2))
        .expect("trials validated");
    let risks = par_map(trials, |i| {
        let t = tape.derive(3).derive(i as u64);
        class.true_risk(run_on(&l, &data, &t.derive(0), &mut t.derive(1)), &data)
    });
    let excess = risks.iter().sum::<f64>() / trials as f64 - opt;
    let good = risks.iter().filter(|&&e| e <= opt + alpha).count() as f64 / trials as f64;
    let mut r = Report::new("learn-finite", tag);
    r.metric("measured_replicability", Metric::ge_est(rep, 1.0 - rho));
    r.metric("measured_error", Metric::le(excess, alpha));
    r.metric("accurate_rate", Metric::ge(good, 1.0 - beta));
    r.constant("c_tau", constants.c_tau);
    r.constant("c_m", constants.c_m);
    r.constant("m", p.m as f64);
    r.constant("tau", p.tau);
    r.constant("opt", opt);
    r.constant("trials", trials as f64);
    r.details.insert("output".into(), json!(output));
    r.details.insert("realizable".into(), json!(realizable));
    Ok(r)
}

fn crypto_sep(s: &Settings, tape: &RandomTape, tag: &str) -> Result<Report, ConfigError> {
    let bits = s.prime_bits.unwrap_or(16);
    let eps = s.eps.unwrap_or(0.5);
    let beta = s.beta.unwrap_or(0.2);
    let trials = s.trials.unwrap_or(1000);
    let mut r = Report::new("crypto-sep", tag);
    let c10 = criterion(10, s, &tape.derive(10), tag);
    let c12 = criterion(12, s, &tape.derive(12), tag);
    r.metric("dp_ratio_max", c10.metrics["output_ratio_max"].clone());
    r.metric("advantage", c12.metrics["advantage"].clone());
    r.absorb("c10", c10);
    r.absorb("c11", criterion(11, s, &tape.derive(11), tag));
    r.absorb("c12", c12);
    let keys = keygen(bits, &tape.derive(0)).map_err(|e| range("prime_bits", bits, e.to_string()))?;
    let k = (1.0 / eps - 1e-9).ceil();
    let m = (k / beta).ceil() as usize;
    let alg = DpRandEnc::new(keys.public.clone(), eps, beta, m).map_err(|e| range("eps", eps, e.to_string()))?;
    let mut t = tape.derive(1);
    let sample: Vec<_> = (0..m).map(|_| keys.public.enc(true, &mut t)).collect();
    let fail = estimate_rate(trials, &tape.derive(2), |c| keys.dec(&alg.run(&sample, c)) != Some(true));
    r.metric("failure_rate", Metric::le_est(fail, beta));
    r.constant("prime_bits", f64::from(bits));
    r.constant("k", k);
    r.constant("m", m as f64);
    r.constant("trials", trials as f64);
    Ok(r)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

/// Serializes `report`. Field order is fixed; CSV has a header and one row
/// per metric.
pub fn emit_report(report: &Report, format: Format) -> String {
    match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("reports serialize");
            s.push('\n');
            s
        }
        Format::Csv => {
            let mut s = String::from("suite,seed,metric,value,cmp,bound,half_width,pass\n");
            for (name, m) in &report.metrics {
                let cmp = match m.cmp {
                    stability_core::harness::Cmp::Le => "le",
                    stability_core::harness::Cmp::Ge => "ge",
                    stability_core::harness::Cmp::Eq => "eq",
                };
                let hw = m.half_width.map(|h| h.to_string()).unwrap_or_default();
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{},{}",
                    report.suite, report.seed, name, m.value, cmp, m.bound, hw, m.pass
                );
            }
            s
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let (c, w) = parse_config(r#"{"suite":"cs-explicit","seed":"00"}"#).unwrap();
        assert!(w.is_empty());
        assert_eq!(c.settings.corrsamp, Some(CorrSampConstants::default()));
        assert_eq!(c.settings.learner, Some(LearnerConstants::default()));
        assert_eq!(c.seed().unwrap(), Seed(0));
    }

    #[test]
    fn range_errors_name_the_field() {
        let e = parse_config(r#"{"suite":"learn-finite","rho":1.5}"#).unwrap_err();
        assert!(matches!(e, ConfigError::Range { field: "rho", .. }), "{e}");
        let e = parse_config(r#"{"suite":"nope"}"#).unwrap_err();
        assert!(matches!(e, ConfigError::UnknownSuite(_)));
        let e = parse_config(r#"{"suite":"rep2dp","base":"other"}"#).unwrap_err();
        assert!(e.to_string().starts_with("base"));
        let e = parse_config(r#"{"suite":"crypto-sep","prime_bits":80}"#).unwrap_err();
        assert!(e.to_string().starts_with("prime_bits"));
    }

    #[test]
    fn unknown_keys_warn() {
        let (_, w) = parse_config(r#"{"suite":"corrsamp","colour":"blue"}"#).unwrap();
        assert_eq!(w.len(), 1);
        assert!(w[0].contains("colour"));
    }

    #[test]
    fn empty_report_emits_valid_json() {
        let r = Report::new("x", "00");
        let text = emit_report(&r, Format::Json);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["metrics"], json!({}));
        assert_eq!(emit_report(&r, Format::Csv).lines().count(), 1);
    }
}
