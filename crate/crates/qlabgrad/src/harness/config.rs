//! Experiment and suite configuration.
//!
//! Config files are flat UTF-8 `key = value` text with `#` comments. List
//! values are comma-separated. Scheme entries are indexed as
//! `scheme.N.key = value`.
//!
//! ```text
//! problem = booth
//! init = -5,-5
//! max_iters = 500
//! loss_target = 1e-6
//! seed = 42
//!
//! scheme.0.kind = qlabgrad
//! scheme.0.alpha0 = 0.1
//! scheme.1.kind = sgd
//! scheme.1.alpha = 0.01
//! ```

use crate::error::{Error, Result};
use crate::qlab::QlabConfig;
use crate::schemes::{AccumulatorMode, SchemeKind, SchemeSpec};
use crate::testfn::NamedFunction;
use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

/// Ordered `key = value` pairs with duplicate detection.
pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    let mut seen = BTreeSet::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let Some(eq) = line.find('=') else {
            return Err(Error::Config(format!(
                "line {}: expected `key = value`, got `{raw}`",
                lineno + 1
            )));
        };
        let key = line[..eq].trim().to_string();
        let value = line[eq + 1..].trim().to_string();
        if key.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", lineno + 1)));
        }
        if !seen.insert(key.clone()) {
            return Err(Error::Config(format!(
                "line {}: duplicate key `{key}`",
                lineno + 1
            )));
        }
        pairs.push((key, value));
    }
    Ok(pairs)
}

/// Key-value view with typed accessors and leftover detection.
pub struct KvMap {
    map: BTreeMap<String, String>,
    consumed: std::cell::RefCell<BTreeSet<String>>,
}

impl KvMap {
    pub fn parse(text: &str) -> Result<Self> {
        let map = parse_kv(text)?.into_iter().collect();
        Ok(KvMap {
            map,
            consumed: std::cell::RefCell::new(BTreeSet::new()),
        })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        let v = self.map.get(key).map(|s| s.as_str());
        if v.is_some() {
            self.consumed.borrow_mut().insert(key.to_string());
        }
        v
    }

    pub fn f64(&self, key: &str) -> Result<Option<f64>> {
        self.get(key)
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|_| Error::Config(format!("key `{key}`: `{v}` is not a number")))
            })
            .transpose()
    }

    pub fn u64(&self, key: &str) -> Result<Option<u64>> {
        self.get(key)
            .map(|v| {
                v.parse::<u64>()
                    .map_err(|_| Error::Config(format!("key `{key}`: `{v}` is not an integer")))
            })
            .transpose()
    }

    pub fn f64_list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        self.get(key)
            .map(|v| {
                v.split(',')
                    .map(|s| {
                        s.trim().parse::<f64>().map_err(|_| {
                            Error::Config(format!("key `{key}`: `{s}` is not a number"))
                        })
                    })
                    .collect()
            })
            .transpose()
    }

    pub fn u64_list(&self, key: &str) -> Result<Option<Vec<u64>>> {
        self.get(key)
            .map(|v| {
                v.split(',')
                    .map(|s| {
                        s.trim().parse::<u64>().map_err(|_| {
                            Error::Config(format!("key `{key}`: `{s}` is not an integer"))
                        })
                    })
                    .collect()
            })
            .transpose()
    }

    /// Keys whose `scheme.N.` prefix marks them as scheme entries, grouped by N.
    fn scheme_groups(&self) -> Result<BTreeMap<u64, BTreeMap<String, String>>> {
        let mut groups: BTreeMap<u64, BTreeMap<String, String>> = BTreeMap::new();
        for (key, value) in &self.map {
            let Some(rest) = key.strip_prefix("scheme.") else {
                continue;
            };
            let Some((index, field)) = rest.split_once('.') else {
                return Err(Error::Config(format!(
                    "key `{key}`: expected scheme.N.field"
                )));
            };
            let index: u64 = index
                .parse()
                .map_err(|_| Error::Config(format!("key `{key}`: `{index}` is not an index")))?;
            groups
                .entry(index)
                .or_default()
                .insert(field.to_string(), value.clone());
            self.consumed.borrow_mut().insert(key.clone());
        }
        Ok(groups)
    }

    /// Errors on any key never consumed, to catch typos early.
    pub fn reject_unknown(&self) -> Result<()> {
        let consumed = self.consumed.borrow();
        let unknown: Vec<&String> = self
            .map
            .keys()
            .filter(|k| !consumed.contains(*k))
            .collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "unknown key(s): {}",
                unknown
                    .iter()
                    .map(|s| format!("`{s}`"))
                    .collect::<Vec<_>>()
                    .join(", ")
            )))
        }
    }
}

/// What to optimize.
#[derive(Debug, Clone)]
pub enum ProblemSpec {
    Named(NamedFunction),
    Quadratic {
        eigenvalues: Vec<f64>,
        rotation_seed: Option<u64>,
        offset: Option<Vec<f64>>,
    },
    SynthMlp {
        hidden: Vec<usize>,
        n: usize,
        feature_dim: usize,
        classes: usize,
        spread: f64,
        data_seed: u64,
        holdout: usize,
        batch_size: usize,
    },
    IdxMlp {
        hidden: Vec<usize>,
        images: PathBuf,
        labels: PathBuf,
        batch_size: usize,
        /// Use only the first `limit` samples when set.
        limit: Option<usize>,
    },
}

/// Initial parameter point.
#[derive(Debug, Clone)]
pub enum InitSpec {
    /// Explicit coordinates (analytic problems).
    Point(Vec<f64>),
    /// Seeded random point; named functions draw inside their domain box,
    /// quadratics from a standard normal. Network problems always use seeded
    /// weight initialization and ignore this.
    Seed(u64),
    /// Nothing configured: named functions use their documented default
    /// start (booth (-5,-5), himmelblau (0,0), eggholder (0,0)); everything
    /// else behaves like `Seed(0)`.
    Default,
}

/// One optimizer entry of an experiment.
#[derive(Debug, Clone)]
pub struct SchemeEntry {
    pub label: String,
    pub kind: EntryKind,
}

#[derive(Debug, Clone)]
pub enum EntryKind {
    /// The quadratic-fit scheme with its search seed and refresh cadence.
    Qlabgrad { alpha0: f64, refresh_interval: Option<u64> },
    Baseline(SchemeSpec),
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    pub schemes: Vec<SchemeEntry>,
    pub init: InitSpec,
    pub max_iters: u64,
    pub loss_target: Option<f64>,
    pub grad_floor: f64,
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn parse_str(text: &str) -> Result<Self> {
        let kv = KvMap::parse(text)?;

        let problem = parse_problem(&kv)?;
        let init = match (kv.get("init"), kv.u64("init_seed")?) {
            (Some(_), Some(_)) => {
                return Err(Error::Config("set either `init` or `init_seed`, not both".into()))
            }
            (Some(_), None) => InitSpec::Point(kv.f64_list("init")?.unwrap()),
            (None, Some(seed)) => InitSpec::Seed(seed),
            (None, None) => InitSpec::Default,
        };

        let max_iters = kv.u64("max_iters")?.unwrap_or(1000);
        if max_iters == 0 {
            return Err(Error::Config("max_iters must be at least 1".into()));
        }
        let loss_target = kv.f64("loss_target")?;
        if let Some(t) = loss_target {
            if !t.is_finite() {
                return Err(Error::Config(format!("loss_target must be finite, got {t}")));
            }
        }
        let grad_floor = kv.f64("grad_floor")?.unwrap_or(1e-16);
        if grad_floor < 0.0 {
            return Err(Error::Config(format!(
                "grad_floor must be non-negative, got {grad_floor}"
            )));
        }
        let seed = kv.u64("seed")?.unwrap_or(0);
        let out_dir = kv.get("out_dir").map(PathBuf::from);

        let schemes = parse_schemes(&kv)?;
        if schemes.is_empty() {
            return Err(Error::Config("at least one scheme.N.kind entry is required".into()));
        }

        kv.reject_unknown()?;
        Ok(ExperimentConfig {
            problem,
            schemes,
            init,
            max_iters,
            loss_target,
            grad_floor,
            seed,
            out_dir,
        })
    }

    /// Per-entry quadratic-fit config carrying the experiment's gradient floor.
    pub fn qlab_config(&self, alpha0: f64, refresh_interval: Option<u64>) -> QlabConfig {
        let mut config = QlabConfig::full_batch(alpha0);
        config.refresh_interval = refresh_interval;
        config.grad_floor = self.grad_floor;
        config
    }
}

fn parse_problem(kv: &KvMap) -> Result<ProblemSpec> {
    let name = kv
        .get("problem")
        .ok_or_else(|| Error::Config("missing `problem`".into()))?;
    match name {
        "booth" | "himmelblau" | "eggholder" => {
            Ok(ProblemSpec::Named(NamedFunction::parse(name)?))
        }
        "quadratic" => {
            let eigenvalues = kv
                .f64_list("quadratic.eigenvalues")?
                .ok_or_else(|| Error::Config("quadratic problem needs `quadratic.eigenvalues`".into()))?;
            if eigenvalues.iter().any(|e| *e < 0.0) {
                return Err(Error::Config("eigenvalues must be non-negative".into()));
            }
            Ok(ProblemSpec::Quadratic {
                eigenvalues,
                rotation_seed: kv.u64("quadratic.rotation_seed")?,
                offset: kv.f64_list("quadratic.offset")?,
            })
        }
        "synth_mlp" => {
            let hidden = kv
                .u64_list("mlp.hidden")?
                .ok_or_else(|| Error::Config("network problem needs `mlp.hidden`".into()))?
                .into_iter()
                .map(|w| w as usize)
                .collect();
            let n = kv.u64("data.n")?.unwrap_or(2500) as usize;
            let feature_dim = kv.u64("data.d")?.unwrap_or(16) as usize;
            let classes = kv.u64("data.k")?.unwrap_or(10) as usize;
            let spread = kv.f64("data.spread")?.unwrap_or(0.15);
            let data_seed = kv.u64("data.seed")?.unwrap_or(7);
            let holdout = kv.u64("data.holdout")?.unwrap_or(0) as usize;
            let batch_size = kv.u64("batch_size")?.unwrap_or(64) as usize;
            if holdout >= n {
                return Err(Error::Config(format!(
                    "holdout {holdout} must be smaller than data.n {n}"
                )));
            }
            Ok(ProblemSpec::SynthMlp {
                hidden,
                n,
                feature_dim,
                classes,
                spread,
                data_seed,
                holdout,
                batch_size,
            })
        }
        "idx_mlp" => {
            let hidden = kv
                .u64_list("mlp.hidden")?
                .ok_or_else(|| Error::Config("network problem needs `mlp.hidden`".into()))?
                .into_iter()
                .map(|w| w as usize)
                .collect();
            let images = kv
                .get("idx.images")
                .ok_or_else(|| Error::Config("idx problem needs `idx.images`".into()))?
                .into();
            let labels = kv
                .get("idx.labels")
                .ok_or_else(|| Error::Config("idx problem needs `idx.labels`".into()))?
                .into();
            let batch_size = kv.u64("batch_size")?.unwrap_or(64) as usize;
            let limit = kv.u64("idx.limit")?.map(|v| v as usize);
            Ok(ProblemSpec::IdxMlp {
                hidden,
                images,
                labels,
                batch_size,
                limit,
            })
        }
        other => Err(Error::Config(format!("unknown problem `{other}`"))),
    }
}

fn parse_schemes(kv: &KvMap) -> Result<Vec<SchemeEntry>> {
    let mut entries = Vec::new();
    for (index, fields) in kv.scheme_groups()? {
        let take = |field: &str| fields.get(field).map(|s| s.as_str());
        let take_f64 = |field: &str| -> Result<Option<f64>> {
            take(field)
                .map(|v| {
                    v.parse::<f64>().map_err(|_| {
                        Error::Config(format!("scheme.{index}.{field}: `{v}` is not a number"))
                    })
                })
                .transpose()
        };
        let take_u64 = |field: &str| -> Result<Option<u64>> {
            take(field)
                .map(|v| {
                    v.parse::<u64>().map_err(|_| {
                        Error::Config(format!("scheme.{index}.{field}: `{v}` is not an integer"))
                    })
                })
                .transpose()
        };

        let kind_name = take("kind").ok_or_else(|| {
            Error::Config(format!("scheme.{index} is missing `scheme.{index}.kind`"))
        })?;
        let mut known_fields: BTreeSet<&str> =
            ["kind", "label"].into_iter().collect();

        let kind = if kind_name == "qlabgrad" {
            known_fields.extend(["alpha0", "refresh_interval"]);
            let alpha0 = take_f64("alpha0")?.unwrap_or(0.1);
            let refresh_interval = match take_u64("refresh_interval")? {
                Some(0) | None => None,
                Some(n) => Some(n),
            };
            EntryKind::Qlabgrad {
                alpha0,
                refresh_interval,
            }
        } else {
            known_fields.extend(["alpha", "beta", "gamma", "period", "mode", "lqa_additive"]);
            let scheme_kind = SchemeKind::parse(kind_name)?;
            let mut spec = SchemeSpec {
                kind: scheme_kind,
                alpha: take_f64("alpha")?,
                beta: take_f64("beta")?,
                gamma: take_f64("gamma")?,
                period: take_u64("period")?,
                accumulator_mode: AccumulatorMode::TableScalar,
                lqa_additive: take_u64("lqa_additive")?.unwrap_or(0) != 0,
            };
            if let Some(mode) = take("mode") {
                spec.accumulator_mode = match mode {
                    "scalar" | "table_scalar" => AccumulatorMode::TableScalar,
                    "per_coordinate" => AccumulatorMode::PerCoordinate,
                    other => {
                        return Err(Error::Config(format!(
                            "scheme.{index}.mode: unknown mode `{other}`"
                        )))
                    }
                };
            }
            spec.validate()?;
            EntryKind::Baseline(spec)
        };

        if let Some(unknown) = fields.keys().find(|k| !known_fields.contains(k.as_str())) {
            return Err(Error::Config(format!(
                "scheme.{index}.{unknown} is not a recognized field for `{kind_name}`"
            )));
        }

        let label = take("label")
            .map(str::to_string)
            .unwrap_or_else(|| format!("{index}-{kind_name}"));
        entries.push(SchemeEntry { label, kind });
    }
    Ok(entries)
}

/// Grid configuration for the convergence-theory suite.
#[derive(Debug, Clone)]
pub struct TheorySuiteConfig {
    pub dims: Vec<usize>,
    pub conds: Vec<f64>,
    pub seeds: u64,
    pub iters: Vec<u64>,
    /// Pre-learning rate as a fraction of `2/M`.
    pub plr_ratio: f64,
    pub rel_tol: f64,
}

impl Default for TheorySuiteConfig {
    fn default() -> Self {
        TheorySuiteConfig {
            dims: vec![1, 2, 10],
            conds: vec![1.0, 10.0, 100.0],
            seeds: 50,
            iters: vec![10, 100, 1000],
            plr_ratio: 0.9,
            rel_tol: 1e-9,
        }
    }
}

impl TheorySuiteConfig {
    pub fn parse_str(text: &str) -> Result<Self> {
        let kv = KvMap::parse(text)?;
        let defaults = TheorySuiteConfig::default();
        let config = TheorySuiteConfig {
            dims: kv
                .u64_list("dims")?
                .map(|v| v.into_iter().map(|d| d as usize).collect())
                .unwrap_or(defaults.dims),
            conds: kv.f64_list("conds")?.unwrap_or(defaults.conds),
            seeds: kv.u64("seeds")?.unwrap_or(defaults.seeds),
            iters: kv.u64_list("iters")?.unwrap_or(defaults.iters),
            plr_ratio: kv.f64("plr_ratio")?.unwrap_or(defaults.plr_ratio),
            rel_tol: kv.f64("tol")?.unwrap_or(defaults.rel_tol),
        };
        kv.reject_unknown()?;
        if config.dims.is_empty() || config.conds.is_empty() || config.iters.is_empty() {
            return Err(Error::Config("dims, conds, and iters must be non-empty".into()));
        }
        if config.seeds == 0 {
            return Err(Error::Config("seeds must be at least 1".into()));
        }
        if config.dims.contains(&0) {
            return Err(Error::Config("dims must be positive".into()));
        }
        if config.conds.iter().any(|c| *c < 1.0) {
            return Err(Error::Config("condition numbers must be at least 1".into()));
        }
        if !(config.plr_ratio > 0.0) {
            return Err(Error::Config("plr_ratio must be positive".into()));
        }
        Ok(config)
    }
}

/// Problem-plus-tolerance configuration for the gradient-check command.
#[derive(Debug, Clone)]
pub struct GradCheckConfig {
    pub problem: ProblemSpec,
    pub points: u64,
    pub rel_tol: f64,
    pub seed: u64,
}

impl GradCheckConfig {
    pub fn parse_str(text: &str) -> Result<Self> {
        let kv = KvMap::parse(text)?;
        let problem = parse_problem(&kv)?;
        let config = GradCheckConfig {
            problem,
            points: kv.u64("points")?.unwrap_or(20),
            rel_tol: kv.f64("tol")?.unwrap_or(1e-5),
            seed: kv.u64("seed")?.unwrap_or(0),
        };
        kv.reject_unknown()?;
        if config.points == 0 {
            return Err(Error::Config("points must be at least 1".into()));
        }
        if !(config.rel_tol > 0.0) {
            return Err(Error::Config("tol must be positive".into()));
        }
        Ok(config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BOOTH_TWO_SCHEMES: &str = "\
# trajectory study
problem = booth
init = -5,-5
max_iters = 500
loss_target = 1e-6
seed = 42

scheme.0.kind = qlabgrad
scheme.0.alpha0 = 0.1
scheme.1.kind = sgd
scheme.1.alpha = 0.01
";

    #[test]
    fn parses_a_two_scheme_experiment() {
        let config = ExperimentConfig::parse_str(BOOTH_TWO_SCHEMES).unwrap();
        assert!(matches!(config.problem, ProblemSpec::Named(NamedFunction::Booth)));
        assert_eq!(config.schemes.len(), 2);
        assert_eq!(config.schemes[0].label, "0-qlabgrad");
        assert!(matches!(
            config.schemes[0].kind,
            EntryKind::Qlabgrad { alpha0, .. } if alpha0 == 0.1
        ));
        assert_eq!(config.loss_target, Some(1e-6));
        assert_eq!(config.seed, 42);
        match &config.init {
            InitSpec::Point(p) => assert_eq!(p, &vec![-5.0, -5.0]),
            other => panic!("unexpected init {other:?}"),
        }
    }

    #[test]
    fn empty_scheme_list_is_rejected() {
        let err = ExperimentConfig::parse_str("problem = booth\n").unwrap_err();
        assert!(err.to_string().contains("scheme"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("{BOOTH_TWO_SCHEMES}\ntypo_key = 3\n");
        let err = ExperimentConfig::parse_str(&text).unwrap_err();
        assert!(err.to_string().contains("typo_key"), "{err}");
        let text = format!("{BOOTH_TWO_SCHEMES}\nscheme.0.alpha = 3\n");
        assert!(ExperimentConfig::parse_str(&text).is_err());
    }

    #[test]
    fn duplicate_keys_are_rejected() {
        let text = format!("{BOOTH_TWO_SCHEMES}\nproblem = booth\n");
        let err = ExperimentConfig::parse_str(&text).unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");
    }

    #[test]
    fn bad_scheme_hyperparameters_fail_at_parse_time() {
        let text = "\
problem = booth
scheme.0.kind = adam
scheme.0.alpha = 0.1
scheme.0.beta = 0.999
scheme.0.gamma = 1.0
";
        assert!(ExperimentConfig::parse_str(text).is_err());
    }

    #[test]
    fn quadratic_and_synth_problems_parse() {
        let text = "\
problem = quadratic
quadratic.eigenvalues = 1, 4
init_seed = 3
scheme.0.kind = qlabgrad
";
        let config = ExperimentConfig::parse_str(text).unwrap();
        match &config.problem {
            ProblemSpec::Quadratic { eigenvalues, .. } => {
                assert_eq!(eigenvalues, &vec![1.0, 4.0])
            }
            other => panic!("unexpected problem {other:?}"),
        }

        let text = "\
problem = synth_mlp
mlp.hidden = 32,32
data.n = 2500
data.holdout = 500
batch_size = 64
scheme.0.kind = qlabgrad
scheme.0.refresh_interval = 500
";
        let config = ExperimentConfig::parse_str(text).unwrap();
        match &config.problem {
            ProblemSpec::SynthMlp { hidden, holdout, .. } => {
                assert_eq!(hidden, &vec![32, 32]);
                assert_eq!(*holdout, 500);
            }
            other => panic!("unexpected problem {other:?}"),
        }
    }

    #[test]
    fn theory_suite_config_defaults_and_overrides() {
        let d = TheorySuiteConfig::parse_str("").unwrap();
        assert_eq!(d.dims, vec![1, 2, 10]);
        assert_eq!(d.seeds, 50);

        let c = TheorySuiteConfig::parse_str("dims = 2\nseeds = 5\nplr_ratio = 1.5\n").unwrap();
        assert_eq!(c.dims, vec![2]);
        assert_eq!(c.plr_ratio, 1.5);

        assert!(TheorySuiteConfig::parse_str("seeds = 0\n").is_err());
        assert!(TheorySuiteConfig::parse_str("bogus = 1\n").is_err());
    }
}
