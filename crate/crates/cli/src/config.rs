//! Experiment configuration files.
//!
//! A config is a TOML document with the sections `[mode]`, `[env]`, `[run]`,
//! `[outputs]` and, for joint runs, `[joint]`. Unknown keys are rejected and
//! every missing required key is reported at once.
//!
//! Required: `mode.kind`, all of `[env]`, `run.{n, m, m_tr, m_va, task_batch,
//! outer_steps, inner_steps, eta, beta, gamma_outer, gamma_inner}` and
//! `outputs.csv`.
//!
//! Defaults: `mc_replicas = 10`, `test_adapt_steps = 10`, `seed = 0`,
//! `decay = "constant"`, `inner_batch = 0`, `union_batch = 0` (0 = full),
//! `task_reduction = "mean"`, `incoherence_source = "union"`,
//! `langevin = true`, `u_init_mean = env.env_mean`, `u_init_std = 0.1`,
//! `n_test = 500`, `gap_protocol = "support"`, `test_langevin = false`;
//! `joint.lambda = 1.0`, `joint.batch = 0`, `joint.lipschitz = "running_max"`;
//! `outputs.eval_cadence = 1`, `outputs.plot_series =
//! ["bound_total", "gnorm_bound_total"]`, `outputs.plot` absent.
//! `run.sigma_sq` overrides the derived sub-gaussian constant.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use metasgld_core::joint::{Coupling, JointSettings, LipschitzMode};
use metasgld_core::{
    DecayRule, EnvironmentSpec, GapProtocol, RunConfig, Schedules, Source, TaskReduction,
};
use toml::{Table, Value};

pub const OUT_DIR_VAR: &str = "METASGLD_OUT_DIR";

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("cannot parse config: {0}")]
    Syntax(String),
    #[error("config errors:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Alternate,
    Joint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outputs {
    pub csv: PathBuf,
    pub plot: Option<PathBuf>,
    pub plot_series: Vec<String>,
    pub eval_cadence: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub run: RunConfig,
    pub env: EnvironmentSpec,
    pub joint: JointSettings,
    pub sigma_sq: Option<f64>,
    pub outputs: Outputs,
}

/// Tracks which keys of one table were read so leftovers can be reported.
struct Section<'a> {
    name: &'static str,
    table: Option<&'a Table>,
    seen: BTreeSet<String>,
    errors: &'a mut Vec<String>,
}

impl<'a> Section<'a> {
    fn new(root: &'a Table, name: &'static str, errors: &'a mut Vec<String>) -> Self {
        let table = match root.get(name) {
            Some(Value::Table(t)) => Some(t),
            Some(_) => {
                errors.push(format!("{name}: expected a table"));
                None
            }
            None => None,
        };
        Self {
            name,
            table,
            seen: BTreeSet::new(),
            errors,
        }
    }

    fn raw(&mut self, key: &str) -> Option<&'a Value> {
        self.seen.insert(key.to_string());
        self.table.and_then(|t| t.get(key))
    }

    fn bad(&mut self, key: &str, what: &str) {
        self.errors
            .push(format!("{}.{key}: expected {what}", self.name));
    }

    fn get<T>(&mut self, key: &str, what: &str, conv: impl Fn(&Value) -> Option<T>) -> Option<T> {
        let v = self.raw(key)?;
        let out = conv(v);
        if out.is_none() {
            self.bad(key, what);
        }
        out
    }

    fn required<T>(
        &mut self,
        key: &str,
        what: &str,
        conv: impl Fn(&Value) -> Option<T>,
    ) -> Option<T> {
        if self.raw(key).is_none() {
            self.errors
                .push(format!("missing required key {}.{key}", self.name));
            return None;
        }
        self.get(key, what, conv)
    }

    fn finish(self) {
        if let Some(t) = self.table {
            for k in t.keys() {
                if !self.seen.contains(k) {
                    self.errors.push(format!("unknown key {}.{k}", self.name));
                }
            }
        }
    }
}

fn as_usize(v: &Value) -> Option<usize> {
    v.as_integer().and_then(|i| usize::try_from(i).ok())
}

fn as_u64(v: &Value) -> Option<u64> {
    v.as_integer().and_then(|i| u64::try_from(i).ok())
}

fn as_f64(v: &Value) -> Option<f64> {
    match v {
        Value::Float(f) => Some(*f),
        Value::Integer(i) => Some(*i as f64),
        _ => None,
    }
}

fn as_vec(v: &Value) -> Option<Vec<f64>> {
    v.as_array()?.iter().map(as_f64).collect()
}

fn as_string(v: &Value) -> Option<String> {
    v.as_str().map(str::to_string)
}

fn as_strings(v: &Value) -> Option<Vec<String>> {
    v.as_array()?.iter().map(as_string).collect()
}

fn one_of<T: Copy>(choices: &'static [(&'static str, T)]) -> impl Fn(&Value) -> Option<T> {
    move |v| {
        let s = v.as_str()?;
        choices.iter().find(|(n, _)| *n == s).map(|(_, t)| *t)
    }
}

fn names<T>(choices: &[(&str, T)]) -> String {
    let n: Vec<String> = choices.iter().map(|(n, _)| format!("\"{n}\"")).collect();
    format!("one of {}", n.join(", "))
}

const MODES: &[(&str, Mode)] = &[("alternate", Mode::Alternate), ("joint", Mode::Joint)];
const REDUCTIONS: &[(&str, TaskReduction)] =
    &[("mean", TaskReduction::Mean), ("sum", TaskReduction::Sum)];
const SOURCES: &[(&str, Source)] = &[("union", Source::Union), ("tr", Source::Tr)];
const PROTOCOLS: &[(&str, GapProtocol)] = &[
    ("support", GapProtocol::Support),
    ("query", GapProtocol::Query),
];
const DECAYS: &[(&str, u8)] = &[("constant", 0), ("inverse_t", 1), ("exponential", 2)];

pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let root: Table = text
        .parse()
        .map_err(|e: toml::de::Error| ConfigError::Syntax(e.to_string()))?;
    let mut errors = Vec::new();
    for k in root.keys() {
        if !["mode", "env", "run", "joint", "outputs"].contains(&k.as_str()) {
            errors.push(format!("unknown section {k}"));
        }
    }

    let mut s = Section::new(&root, "mode", &mut errors);
    let mode = s.required("kind", &names(MODES), one_of(MODES));
    s.finish();

    let mut s = Section::new(&root, "env", &mut errors);
    let env_mean = s.required("env_mean", "an array of numbers", as_vec);
    let env_var = s.required("env_var", "a number", as_f64);
    let trunc_lo = s.required("trunc_lo", "an array of numbers", as_vec);
    let trunc_hi = s.required("trunc_hi", "an array of numbers", as_vec);
    let task_var = s.required("task_var", "a number", as_f64);
    s.finish();

    let mut s = Section::new(&root, "run", &mut errors);
    let int = "a non-negative integer";
    let num = "a number";
    let n = s.required("n", int, as_usize);
    let m = s.required("m", int, as_usize);
    let m_tr = s.required("m_tr", int, as_usize);
    let m_va = s.required("m_va", int, as_usize);
    let task_batch = s.required("task_batch", int, as_usize);
    let outer_steps = s.required("outer_steps", int, as_usize);
    let inner_steps = s.required("inner_steps", int, as_usize);
    let eta = s.required("eta", num, as_f64);
    let beta = s.required("beta", num, as_f64);
    let gamma_outer = s.required("gamma_outer", num, as_f64);
    let gamma_inner = s.required("gamma_inner", num, as_f64);
    let mc_replicas = s.get("mc_replicas", int, as_usize).unwrap_or(10);
    let test_adapt_steps = s.get("test_adapt_steps", int, as_usize).unwrap_or(10);
    let seed = s.get("seed", int, as_u64).unwrap_or(0);
    let decay_kind = s.get("decay", &names(DECAYS), one_of(DECAYS)).unwrap_or(0);
    let decay_c = s.get("decay_c", num, as_f64);
    let decay_rate = s.get("decay_rate", num, as_f64);
    let decay_period = s.get("decay_period", num, as_f64);
    let inner_batch = s.get("inner_batch", int, as_usize).unwrap_or(0);
    let union_batch = s.get("union_batch", int, as_usize).unwrap_or(0);
    let task_reduction = s
        .get("task_reduction", &names(REDUCTIONS), one_of(REDUCTIONS))
        .unwrap_or(TaskReduction::Mean);
    let incoherence_source = s
        .get("incoherence_source", &names(SOURCES), one_of(SOURCES))
        .unwrap_or(Source::Union);
    let langevin = s
        .get("langevin", "a boolean", Value::as_bool)
        .unwrap_or(true);
    let u_init_mean = s.get("u_init_mean", "an array of numbers", as_vec);
    let u_init_std = s.get("u_init_std", num, as_f64).unwrap_or(0.1);
    let n_test = s.get("n_test", int, as_usize).unwrap_or(500);
    let gap_protocol = s
        .get("gap_protocol", &names(PROTOCOLS), one_of(PROTOCOLS))
        .unwrap_or(GapProtocol::Support);
    let test_langevin = s
        .get("test_langevin", "a boolean", Value::as_bool)
        .unwrap_or(false);
    let sigma_sq = s.get("sigma_sq", num, as_f64);
    s.finish();

    let mut s = Section::new(&root, "joint", &mut errors);
    let lambda = s.get("lambda", num, as_f64).unwrap_or(1.0);
    let joint_batch = s.get("batch", int, as_usize).unwrap_or(0);
    let lipschitz = s
        .get("lipschitz", "\"running_max\" or a number", |v| match v {
            Value::String(x) if x == "running_max" => Some(LipschitzMode::RunningMax),
            other => as_f64(other).map(LipschitzMode::Fixed),
        })
        .unwrap_or(LipschitzMode::RunningMax);
    s.finish();

    let mut s = Section::new(&root, "outputs", &mut errors);
    let csv = s.required("csv", "a path string", as_string);
    let plot = s.get("plot", "a path string", as_string);
    let plot_series = s
        .get("plot_series", "an array of column names", as_strings)
        .unwrap_or_else(|| vec!["bound_total".into(), "gnorm_bound_total".into()]);
    let eval_cadence = s.get("eval_cadence", int, as_usize).unwrap_or(1);
    s.finish();

    let decay = match decay_kind {
        0 => Some(DecayRule::Constant),
        1 => match decay_c {
            Some(c) => Some(DecayRule::InverseT { c }),
            None => {
                errors.push("decay = \"inverse_t\" needs run.decay_c".into());
                None
            }
        },
        _ => match (decay_rate, decay_period) {
            (Some(rate), Some(period)) => Some(DecayRule::Exponential { rate, period }),
            _ => {
                errors.push(
                    "decay = \"exponential\" needs run.decay_rate and run.decay_period".into(),
                );
                None
            }
        },
    };
    if eval_cadence == 0 {
        errors.push("outputs.eval_cadence must be >= 1".into());
    }

    let (
        Some(mode),
        Some(env_mean),
        Some(env_var),
        Some(trunc_lo),
        Some(trunc_hi),
        Some(task_var),
        Some(n),
        Some(m),
        Some(m_tr),
        Some(m_va),
        Some(task_batch),
        Some(outer_steps),
        Some(inner_steps),
        Some(eta),
        Some(beta),
        Some(gamma_outer),
        Some(gamma_inner),
        Some(csv),
        Some(decay),
    ) = (
        mode,
        env_mean,
        env_var,
        trunc_lo,
        trunc_hi,
        task_var,
        n,
        m,
        m_tr,
        m_va,
        task_batch,
        outer_steps,
        inner_steps,
        eta,
        beta,
        gamma_outer,
        gamma_inner,
        csv,
        decay,
    )
    else {
        return Err(ConfigError::Invalid(errors));
    };
    if !errors.is_empty() {
        return Err(ConfigError::Invalid(errors));
    }

    let env = EnvironmentSpec {
        env_mean: env_mean.clone(),
        env_var,
        trunc_lo,
        trunc_hi,
        task_var,
    };
    let run = RunConfig {
        n,
        m,
        m_tr,
        m_va,
        task_batch,
        outer_steps,
        inner_steps,
        mc_replicas,
        schedules: Schedules {
            eta0: eta,
            beta0: beta,
            gamma_outer,
            gamma_inner,
            decay,
        },
        test_adapt_steps,
        seed,
        inner_batch,
        union_batch,
        task_reduction,
        incoherence_source,
        langevin,
        u_init_mean: u_init_mean.unwrap_or(env_mean),
        u_init_std,
        n_test,
        gap_protocol,
        test_langevin,
    };
    let cfg = ExperimentConfig {
        mode,
        run,
        env,
        joint: JointSettings {
            coupling: Coupling { lambda },
            batch: joint_batch,
            lipschitz,
        },
        sigma_sq,
        outputs: Outputs {
            csv: PathBuf::from(csv),
            plot: plot.map(PathBuf::from),
            plot_series,
            eval_cadence,
        },
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> anyhow::Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| anyhow::anyhow!("cannot read {}: {e}", path.display()))?;
    parse_config(&text).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))
}

fn str_of<T: PartialEq>(choices: &[(&'static str, T)], v: T) -> &'static str {
    choices
        .iter()
        .find(|(_, t)| *t == v)
        .map(|(n, _)| *n)
        .expect("listed choice")
}

fn floats(v: &[f64]) -> Value {
    Value::Array(v.iter().map(|x| Value::Float(*x)).collect())
}

fn int(v: usize) -> Value {
    Value::Integer(v as i64)
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut errors = Vec::new();
        if self.run.m_tr + self.run.m_va != self.run.m {
            errors.push(format!(
                "run.m_tr + run.m_va must equal run.m (m_tr = {}, m_va = {}, m = {})",
                self.run.m_tr, self.run.m_va, self.run.m
            ));
        }
        // the split check above already covers m, so probe the rest with a
        // consistent m
        let probe = RunConfig {
            m: self.run.m_tr + self.run.m_va,
            ..self.run.clone()
        };
        if let Err(e) = probe.validate() {
            errors.push(e.to_string());
        }
        if let Err(e) = self.env.validate() {
            errors.push(e.to_string());
        }
        if self.run.dim() != self.env.dim() {
            errors.push(format!(
                "run.u_init_mean has length {}, environment dimension is {}",
                self.run.dim(),
                self.env.dim()
            ));
        }
        if self.mode == Mode::Alternate && (self.run.m_tr == 0 || self.run.m_va == 0) {
            errors.push("alternate mode needs run.m_tr >= 1 and run.m_va >= 1".into());
        }
        if let Some(s) = self.sigma_sq {
            if !(s > 0.0 && s.is_finite()) {
                errors.push(format!("run.sigma_sq must be positive, got {s}"));
            }
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(errors))
        }
    }

    /// The resolved config as a TOML document that [`parse_config`] accepts
    /// and maps back to `self`.
    pub fn to_toml(&self) -> String {
        let mut mode = Table::new();
        mode.insert(
            "kind".into(),
            Value::String(str_of(MODES, self.mode).into()),
        );

        let e = &self.env;
        let mut env = Table::new();
        env.insert("env_mean".into(), floats(&e.env_mean));
        env.insert("env_var".into(), Value::Float(e.env_var));
        env.insert("trunc_lo".into(), floats(&e.trunc_lo));
        env.insert("trunc_hi".into(), floats(&e.trunc_hi));
        env.insert("task_var".into(), Value::Float(e.task_var));

        let r = &self.run;
        let mut run = Table::new();
        for (k, v) in [
            ("n", r.n),
            ("m", r.m),
            ("m_tr", r.m_tr),
            ("m_va", r.m_va),
            ("task_batch", r.task_batch),
            ("outer_steps", r.outer_steps),
            ("inner_steps", r.inner_steps),
            ("mc_replicas", r.mc_replicas),
            ("test_adapt_steps", r.test_adapt_steps),
            ("inner_batch", r.inner_batch),
            ("union_batch", r.union_batch),
            ("n_test", r.n_test),
        ] {
            run.insert(k.into(), int(v));
        }
        run.insert("seed".into(), Value::Integer(r.seed as i64));
        let s = &r.schedules;
        run.insert("eta".into(), Value::Float(s.eta0));
        run.insert("beta".into(), Value::Float(s.beta0));
        run.insert("gamma_outer".into(), Value::Float(s.gamma_outer));
        run.insert("gamma_inner".into(), Value::Float(s.gamma_inner));
        match s.decay {
            DecayRule::Constant => {
                run.insert("decay".into(), Value::String("constant".into()));
            }
            DecayRule::InverseT { c } => {
                run.insert("decay".into(), Value::String("inverse_t".into()));
                run.insert("decay_c".into(), Value::Float(c));
            }
            DecayRule::Exponential { rate, period } => {
                run.insert("decay".into(), Value::String("exponential".into()));
                run.insert("decay_rate".into(), Value::Float(rate));
                run.insert("decay_period".into(), Value::Float(period));
            }
        }
        run.insert(
            "task_reduction".into(),
            Value::String(str_of(REDUCTIONS, r.task_reduction).into()),
        );
        run.insert(
            "incoherence_source".into(),
            Value::String(str_of(SOURCES, r.incoherence_source).into()),
        );
        run.insert("langevin".into(), Value::Boolean(r.langevin));
        run.insert("u_init_mean".into(), floats(&r.u_init_mean));
        run.insert("u_init_std".into(), Value::Float(r.u_init_std));
        run.insert(
            "gap_protocol".into(),
            Value::String(str_of(PROTOCOLS, r.gap_protocol).into()),
        );
        run.insert("test_langevin".into(), Value::Boolean(r.test_langevin));
        if let Some(sg) = self.sigma_sq {
            run.insert("sigma_sq".into(), Value::Float(sg));
        }

        let mut joint = Table::new();
        joint.insert("lambda".into(), Value::Float(self.joint.coupling.lambda));
        joint.insert("batch".into(), int(self.joint.batch));
        joint.insert(
            "lipschitz".into(),
            match self.joint.lipschitz {
                LipschitzMode::RunningMax => Value::String("running_max".into()),
                LipschitzMode::Fixed(l) => Value::Float(l),
            },
        );

        let o = &self.outputs;
        let mut outputs = Table::new();
        outputs.insert("csv".into(), Value::String(o.csv.display().to_string()));
        if let Some(p) = &o.plot {
            outputs.insert("plot".into(), Value::String(p.display().to_string()));
        }
        outputs.insert(
            "plot_series".into(),
            Value::Array(o.plot_series.iter().cloned().map(Value::String).collect()),
        );
        outputs.insert("eval_cadence".into(), int(o.eval_cadence));

        let mut root = Table::new();
        root.insert("mode".into(), Value::Table(mode));
        root.insert("env".into(), Value::Table(env));
        root.insert("run".into(), Value::Table(run));
        root.insert("joint".into(), Value::Table(joint));
        root.insert("outputs".into(), Value::Table(outputs));
        toml::to_string(&root).expect("config tables serialize")
    }
}

/// Where an output path lands: under `$METASGLD_OUT_DIR` (file name only)
/// when that variable is set, otherwise as given.
pub fn resolve_output(path: &Path, out_dir: Option<&Path>) -> PathBuf {
    match out_dir {
        Some(dir) => dir.join(path.file_name().unwrap_or(path.as_os_str())),
        None => path.to_path_buf(),
    }
}

pub fn out_dir_from_env() -> Option<PathBuf> {
    std::env::var_os(OUT_DIR_VAR)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOY: &str = include_str!("../presets/toy_8_8.toml");

    #[test]
    fn toy_preset_matches_table_settings() {
        let c = parse_config(TOY).unwrap();
        assert_eq!(c.mode, Mode::Alternate);
        let r = &c.run;
        assert_eq!((r.n, r.m, r.m_tr, r.m_va), (20_000, 16, 8, 8));
        assert_eq!((r.task_batch, r.outer_steps, r.inner_steps), (5, 200, 4));
        assert_eq!((r.schedules.eta0, r.schedules.beta0), (0.2, 0.4));
        assert_eq!(
            (r.schedules.gamma_outer, r.schedules.gamma_inner),
            (1e4, 1e4)
        );
        assert_eq!(r.test_adapt_steps, 10);
        assert_eq!(r.mc_replicas, 10);
    }

    #[test]
    fn empty_document_lists_every_missing_key() {
        let ConfigError::Invalid(errs) = parse_config("").unwrap_err() else {
            panic!("expected invalid")
        };
        for key in [
            "mode.kind",
            "env.env_mean",
            "env.task_var",
            "run.n",
            "run.gamma_inner",
            "outputs.csv",
        ] {
            assert!(
                errs.iter().any(|e| e.contains(key)),
                "{key} not in {errs:?}"
            );
        }
        assert_eq!(errs.len(), 1 + 5 + 11 + 1);
    }

    #[test]
    fn split_mismatch_names_the_keys() {
        let bad = TOY.replace("m_va = 8", "m_va = 7");
        let e = parse_config(&bad).unwrap_err().to_string();
        assert!(e.contains("run.m_tr") && e.contains("run.m_va") && e.contains("run.m "));
    }

    #[test]
    fn unknown_and_mistyped_keys() {
        let e = parse_config(&TOY.replace("[run]", "[run]\nbogus = 1")).unwrap_err();
        assert!(e.to_string().contains("unknown key run.bogus"));
        let e = parse_config(&TOY.replace("n = 20000", "n = \"many\"")).unwrap_err();
        assert!(e.to_string().contains("run.n: expected"));
        let e = parse_config(&format!("{TOY}\n[extra]\nx = 1\n")).unwrap_err();
        assert!(e.to_string().contains("unknown section extra"));
    }

    #[test]
    fn canonical_form_round_trips() {
        for text in [
            TOY,
            include_str!("../presets/joint_demo.toml"),
            include_str!("../presets/toy_1_15.toml"),
        ] {
            let c = parse_config(text).unwrap();
            let again = parse_config(&c.to_toml()).unwrap();
            assert_eq!(c, again);
            assert_eq!(c.to_toml(), again.to_toml());
        }
    }

    #[test]
    fn out_dir_keeps_file_name() {
        let p = resolve_output(Path::new("runs/a.csv"), Some(Path::new("/tmp/x")));
        assert_eq!(p, PathBuf::from("/tmp/x/a.csv"));
        assert_eq!(
            resolve_output(Path::new("a.csv"), None),
            PathBuf::from("a.csv")
        );
    }
}
