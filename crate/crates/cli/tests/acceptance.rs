//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};

use metasgld_cli::load_config;
use metasgld_cli::table::{read_table, Table};
use metasgld_core::bounds::{
    gauss_kl_same_cov, step_term_consistency, subgaussian_mean_estimation,
};
use metasgld_core::joint::run_joint;
use metasgld_core::meta::{run_meta_sgld, sample_task_batch};
use metasgld_core::{
    derive_stream, DecayRule, EnvironmentSpec, JointSettings, LossModel, MetaRunOptions,
    ParamVector, RunConfig, Source, SubgaussianSpec,
};

const PRESETS: [&str; 3] = ["toy_8_8", "toy_15_1", "toy_1_15"];
/// Epoch-180 targets per preset: (G_inco, G_norm).
const TARGETS: [(f64, f64); 3] = [(0.7424, 14.014), (0.5468, 39.73), (2.149, 10.42)];
const REL_TOL: f64 = 0.30;
const RECOVERY_RADIUS: f64 = 2.0;
const SEEDS: [u64; 3] = [0, 1, 2];

struct Report {
    failures: usize,
}

impl Report {
    fn check(&mut self, id: &str, ok: bool, detail: String) {
        println!("{} [{id}] {detail}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            self.failures += 1;
        }
    }
}

fn preset_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("presets")
        .join(format!("{name}.toml"))
}

fn run_preset(name: &str, out_dir: &Path) -> Table {
    let out = Command::new(env!("CARGO_BIN_EXE_metasgld"))
        .arg("run")
        .arg(preset_path(name))
        .env("METASGLD_OUT_DIR", out_dir)
        .output()
        .expect("binary runs");
    assert!(
        out.status.success(),
        "{name}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    read_table(std::fs::File::open(out_dir.join(format!("{name}.csv"))).unwrap()).unwrap()
}

fn at_epoch(t: &Table, col: &str, epoch: f64) -> f64 {
    let i = t.column_index(col).unwrap();
    t.rows
        .iter()
        .find(|r| r[0] == Some(epoch))
        .and_then(|r| r[i])
        .unwrap()
}

fn last(t: &Table, col: &str) -> f64 {
    *t.column(col).unwrap().last().unwrap()
}

fn rel(x: f64, target: f64) -> f64 {
    (x - target) / target
}

fn point_mean(points: &[&[f64]]) -> [f64; 2] {
    let n = points.len() as f64;
    let mut s = [0.0; 2];
    for p in points {
        s[0] += p[0] / n;
        s[1] += p[1] / n;
    }
    s
}

fn table_replication(rep: &mut Report, tables: &[Table]) {
    for ((name, t), (inco, norm)) in PRESETS.iter().zip(tables).zip(TARGETS) {
        let g_inco = at_epoch(t, "bound_total", 180.0);
        let g_norm = at_epoch(t, "gnorm_bound_total", 180.0);
        let (ri, rn) = (rel(g_inco, inco), rel(g_norm, norm));
        rep.check(
            "1",
            ri.abs() <= REL_TOL && rn.abs() <= REL_TOL,
            format!(
                "{name} epoch 180: G_inco {g_inco:.4} vs {inco} ({:+.1}%), G_norm {g_norm:.3} vs {norm} ({:+.1}%)",
                100.0 * ri,
                100.0 * rn
            ),
        );
    }
}

fn ordering(rep: &mut Report, tables: &[Table]) {
    let inco: Vec<f64> = tables.iter().map(|t| last(t, "bound_total")).collect();
    let ratio: Vec<f64> = tables
        .iter()
        .map(|t| last(t, "gnorm_bound_total") / last(t, "bound_total"))
        .collect();
    let (r88, r151, r115) = (ratio[0], ratio[1], ratio[2]);
    rep.check(
        "2",
        inco[1] < inco[0] && inco[0] < inco[2],
        format!(
            "final G_inco ordering 15/1 {:.4} < 8/8 {:.4} < 1/15 {:.4}",
            inco[1], inco[0], inco[2]
        ),
    );
    rep.check(
        "2",
        r151 > r88 && r88 > r115,
        format!("final G_norm/G_inco ratio 15/1 {r151:.2} > 8/8 {r88:.2} > 1/15 {r115:.2}"),
    );
    rep.check(
        "2",
        r88 > 10.0 && r151 > 10.0,
        format!("ratio above 10 for 8/8 ({r88:.2}) and 15/1 ({r151:.2})"),
    );
}

fn observed_gap(rep: &mut Report, tables: &[Table]) {
    let mean_abs: Vec<f64> = tables
        .iter()
        .map(|t| {
            let g = t.column("gap").unwrap();
            g.iter().map(|x| x.abs()).sum::<f64>() / g.len() as f64
        })
        .collect();
    rep.check(
        "3",
        mean_abs[2] > mean_abs[0] && mean_abs[2] > mean_abs[1],
        format!(
            "mean |gap|: 1/15 {:.4} exceeds 8/8 {:.4} and 15/1 {:.4}",
            mean_abs[2], mean_abs[0], mean_abs[1]
        ),
    );
    let g = at_epoch(&tables[0], "gap", 180.0);
    rep.check(
        "3",
        g.abs() < 0.4,
        format!("toy_8_8 |gap| at epoch 180 = {:.4} < 0.4", g.abs()),
    );
}

fn recovery(rep: &mut Report) {
    let target = ParamVector::from_slice(&[-4.0, -4.0]).unwrap();
    for name in PRESETS {
        let cfg = load_config(&preset_path(name)).unwrap();
        let model = LossModel::mean_estimation(cfg.env.dim());
        let opts = MetaRunOptions {
            sg: subgaussian_mean_estimation(&model, &cfg.env, cfg.run.schedules.beta0).unwrap(),
            eval_cadence: None,
        };
        let mut worst = 0.0f64;
        let mut detail = Vec::new();
        for seed in SEEDS {
            let run_cfg = RunConfig {
                seed,
                ..cfg.run.clone()
            };
            let run = run_meta_sgld(&model, &run_cfg, &cfg.env, &opts).unwrap();
            let u = run.final_u();
            let d = u.sq_dist(&target).sqrt();
            worst = worst.max(d);
            detail.push(format!(
                "seed {seed} ({:.2}, {:.2}) d={d:.3}",
                u.as_slice()[0],
                u.as_slice()[1]
            ));
        }
        rep.check(
            "4",
            worst < RECOVERY_RADIUS,
            format!(
                "{name} final U within {RECOVERY_RADIUS} of (-4,-4): {}",
                detail.join(", ")
            ),
        );
    }
}

fn subgaussian(rep: &mut Report) {
    let env = EnvironmentSpec::synthetic();
    let sg = subgaussian_mean_estimation(&LossModel::mean_estimation(2), &env, 0.4).unwrap();
    rep.check(
        "5",
        (sg.sigma_sq - 1.3469).abs() <= 1e-4,
        format!("sub-gaussian sigma^2 = {:.8} (1.3469 +- 1e-4)", sg.sigma_sq),
    );
}

fn gradients_match_fd(rep: &mut Report) {
    let mut rng = derive_stream(11, &[1]);
    let mut worst = 0.0f64;
    for probe in 0..100 {
        let dim = 1 + probe % 4;
        let model = LossModel::mean_estimation(dim);
        let batch: Vec<Vec<f64>> = (0..1 + probe % 16)
            .map(|_| (0..dim).map(|_| 5.0 * rng.normal()).collect())
            .collect();
        let refs: Vec<&[f64]> = batch.iter().map(|v| v.as_slice()).collect();
        let w = rng.normal_vec(dim, 4.0);
        let g = model.batch_grad(&w, &refs).unwrap();
        let fd = model.finite_diff_grad(&w, &refs, 1e-6).unwrap();
        worst = worst.max((&g - &fd).norm() / g.norm().max(1e-12));
    }
    rep.check(
        "6a",
        worst < 1e-6,
        format!("analytic vs finite-difference gradient, worst rel. err {worst:.2e}"),
    );
}

fn term_is_twice_kl(rep: &mut Report) {
    let mut rng = derive_stream(12, &[1]);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let eta = 1e-3 + rng.uniform();
        let gamma = 10f64.powf(5.0 * rng.uniform());
        let eps = rng.normal_vec(2, 10.0);
        let (term, kl) = step_term_consistency(eta, gamma, &eps).unwrap();
        worst = worst.max((term - 2.0 * kl).abs() / term.max(f64::MIN_POSITIVE));
    }
    rep.check(
        "6b",
        worst <= 1e-12,
        format!("step term = 2 KL, worst rel. diff {worst:.1e}"),
    );
}

fn kl_quadrature(a: f64, b: f64, var: f64) -> f64 {
    let sd = var.sqrt();
    let n = 20_000;
    let (lo, hi) = (a - 40.0 * sd, a + 40.0 * sd);
    let h = (hi - lo) / n as f64;
    let norm = 1.0 / (2.0 * std::f64::consts::PI * var).sqrt();
    let mut s = 0.0;
    for i in 0..=n {
        let x = lo + i as f64 * h;
        let lp = -(x - a).powi(2) / (2.0 * var);
        let lq = -(x - b).powi(2) / (2.0 * var);
        let w = if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        s += w * norm * lp.exp() * (lp - lq);
    }
    s * h / 3.0
}

fn kl_vs_quadrature(rep: &mut Report) {
    let mut rng = derive_stream(13, &[1]);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let a = 3.0 * rng.normal();
        let b = a + 2.0 * rng.normal();
        let var = 0.05 + 3.0 * rng.uniform();
        let p = |x: f64| ParamVector::from_slice(&[x]).unwrap();
        let closed = gauss_kl_same_cov(&p(a), &p(b), var).unwrap();
        worst = worst.max((closed - kl_quadrature(a, b, var)).abs());
    }
    rep.check(
        "6c",
        worst < 1e-8,
        format!("Gaussian KL vs 1-D quadrature, worst abs. err {worst:.1e}"),
    );
}

fn monotone(rep: &mut Report, tables: &[Table]) {
    let cols = [
        "eps_u",
        "eps_w",
        "gnorm_u",
        "gnorm_w",
        "lipschitz",
        "bound_total",
        "gnorm_bound_total",
    ];
    let mut bad = Vec::new();
    for (name, t) in PRESETS.iter().zip(tables) {
        for c in cols {
            let v = t.column(c).unwrap();
            if v.windows(2).any(|w| w[1] < w[0]) {
                bad.push(format!("{name}.{c}"));
            }
        }
    }
    rep.check(
        "6d",
        bad.is_empty(),
        format!("accumulators non-decreasing over all epochs of every preset {bad:?}"),
    );
}

fn short(m_tr: usize, m_va: usize, t: usize) -> RunConfig {
    RunConfig {
        outer_steps: t,
        n_test: 50,
        ..RunConfig::synthetic(m_tr, m_va)
    }
}

fn sg() -> SubgaussianSpec {
    SubgaussianSpec::user(1.3469).unwrap()
}

fn meta(cfg: &RunConfig) -> metasgld_core::MetaRun {
    let opts = MetaRunOptions {
        sg: sg(),
        eval_cadence: None,
    };
    run_meta_sgld(
        &LossModel::mean_estimation(2),
        cfg,
        &EnvironmentSpec::synthetic(),
        &opts,
    )
    .unwrap()
}

fn zero_incoherence(rep: &mut Report) {
    let mut cfg = short(8, 8, 20);
    cfg.incoherence_source = Source::Tr;
    let run = meta(&cfg);
    let ok = run
        .records
        .iter()
        .all(|r| r.eps_u == 0.0 && r.eps_w == 0.0 && r.bound_total == 0.0);
    rep.check(
        "6e",
        ok,
        "incoherence identically zero when the union batch is the support set".into(),
    );
}

fn maml_equivalence(rep: &mut Report) {
    let mut cfg = short(8, 8, 30);
    cfg.inner_steps = 1;
    cfg.langevin = false;
    let env = EnvironmentSpec::synthetic();
    let run = meta(&cfg);
    let (beta, eta) = (cfg.schedules.beta0, cfg.schedules.eta0);
    let mut u = run.u_trace[0].as_slice().to_vec();
    let mut mismatch = None;
    for t in 1..=cfg.outer_steps {
        let tasks = sample_task_batch(&env, &cfg, t).unwrap();
        let mut total = [0.0; 2];
        for ds in &tasks {
            let tr = point_mean(&ds.source_points(Source::Tr));
            let va = point_mean(&ds.source_points(Source::Va));
            for i in 0..2 {
                let w = u[i] + -beta * (2.0 * (u[i] - tr[i]));
                total[i] += 2.0 * (w - va[i]);
            }
        }
        let scale = 1.0 / tasks.len() as f64;
        for i in 0..2 {
            u[i] += -eta * (scale * total[i]);
        }
        if run.u_trace[t].as_slice() != &u[..] && mismatch.is_none() {
            mismatch = Some(t);
        }
    }
    rep.check(
        "6f",
        mismatch.is_none(),
        format!("noise-off K=1 trajectory bitwise equals first-order MAML (first mismatch: {mismatch:?})"),
    );
}

fn joint_mode(rep: &mut Report) {
    let mut cfg = RunConfig::synthetic(16, 0);
    cfg.n = 5;
    cfg.outer_steps = 10_000;
    cfg.schedules.decay = DecayRule::InverseT { c: 0.1 };
    cfg.schedules.gamma_outer = 2.0;
    let settings = JointSettings {
        batch: 4,
        ..JointSettings::default()
    };
    let model = LossModel::mean_estimation(2);
    let run = run_joint(
        &model,
        &cfg,
        &EnvironmentSpec::synthetic(),
        &settings,
        &sg(),
    )
    .unwrap();
    let mut step_ok = true;
    let mut bound_ok = true;
    for r in &run.records {
        let eta = 0.1 / r.t as f64;
        let sigma_sq = eta;
        step_ok &=
            r.mi_step_term <= eta * eta * r.l_hat * r.l_hat / (2.0 * sigma_sq) * (1.0 + 1e-12);
        bound_ok &= r
            .closed_form
            .is_some_and(|c| r.joint_bound <= c * (1.0 + 1e-12));
    }
    let end = run.records.last().unwrap();
    rep.check(
        "6g",
        step_ok && bound_ok && run.records.len() == 10_000,
        format!(
            "joint mode over T = 1e4: per-step MI term within linearization ({step_ok}), bound {:.4} <= closed form {:.4} at every step ({bound_ok})",
            end.joint_bound,
            end.closed_form.unwrap_or(f64::NAN)
        ),
    );
}

fn reruns(rep: &mut Report, first_dir: &Path) {
    let again = tempfile::tempdir().unwrap();
    run_preset("toy_8_8", again.path());
    let a = std::fs::read(first_dir.join("toy_8_8.csv")).unwrap();
    let b = std::fs::read(again.path().join("toy_8_8.csv")).unwrap();
    rep.check(
        "6h",
        a == b,
        format!("toy_8_8 rerun CSV bit-identical ({} bytes)", a.len()),
    );
}

fn main() -> ExitCode {
    let mut rep = Report { failures: 0 };
    let dir = tempfile::tempdir().unwrap();
    let tables: Vec<Table> = PRESETS.iter().map(|p| run_preset(p, dir.path())).collect();

    table_replication(&mut rep, &tables);
    ordering(&mut rep, &tables);
    observed_gap(&mut rep, &tables);
    recovery(&mut rep);
    subgaussian(&mut rep);
    gradients_match_fd(&mut rep);
    term_is_twice_kl(&mut rep);
    kl_vs_quadrature(&mut rep);
    monotone(&mut rep, &tables);
    zero_incoherence(&mut rep);
    maml_equivalence(&mut rep);
    joint_mode(&mut rep);
    reruns(&mut rep, dir.path());

    if rep.failures == 0 {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {} check(s) failed", rep.failures);
        ExitCode::FAILURE
    }
}
