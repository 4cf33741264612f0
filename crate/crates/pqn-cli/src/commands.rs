use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use pqn_core::baselines::BenchmarkMethod;
use pqn_core::experiment::{
    benchmark_tours, evaluate_models, ExperimentConfig, ExperimentKind, ExperimentReport, Split,
};
use pqn_core::io::{
    read_checkpoint, read_history_csv, read_instances, read_steps_csv, write_checkpoint, write_history_csv,
    write_instances, write_steps_csv,
};
use pqn_core::model::{PolicyKind, TdScope};
use pqn_core::train::{self, Perturbation};
use pqn_core::PqnError;

use crate::plot::{self, Series};
use crate::TrainOverrides;

pub const SEED_ENV: &str = "PQN_SEED";
const CONFIG_FILE: &str = "experiment.json";

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Missing(PathBuf),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Missing(_) => 3,
            CliError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "bad configuration: {m}"),
            CliError::Missing(p) => write!(f, "missing file: {}", p.display()),
            CliError::Runtime(m) => write!(f, "{m}"),
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

/// Classifies a library error raised while handling `path` (if any).
fn classify(err: PqnError, path: Option<&Path>) -> CliError {
    match err {
        PqnError::Io(e) if e.kind() == std::io::ErrorKind::NotFound => {
            CliError::Missing(path.map(Path::to_path_buf).unwrap_or_default())
        }
        PqnError::InvalidArgument(_) | PqnError::Parse { .. } | PqnError::Capacity { .. } | PqnError::InvalidTour(_) => {
            let m = err.to_string();
            match path {
                Some(p) => CliError::Config(format!("{}: {m}", p.display())),
                None => CliError::Config(m),
            }
        }
        other => CliError::Runtime(other.to_string()),
    }
}

fn at<T>(path: &Path, r: pqn_core::Result<T>) -> CliResult<T> {
    r.map_err(|e| classify(e, Some(path)))
}

fn lib<T>(r: pqn_core::Result<T>) -> CliResult<T> {
    r.map_err(|e| classify(e, None))
}

fn io<T>(path: &Path, r: std::io::Result<T>) -> CliResult<T> {
    at(path, r.map_err(PqnError::from))
}

fn seed_from_env() -> CliResult<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Config(format!("{SEED_ENV}={v} is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

fn parse_pair<A: FromStr, B: FromStr>(flag: &str, text: &str) -> CliResult<(A, B)> {
    let bad = || CliError::Config(format!("--{flag} expects A:B, got `{text}`"));
    let (a, b) = text.split_once(':').ok_or_else(bad)?;
    Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
}

fn parse_split(text: &str) -> CliResult<Split> {
    match text {
        "train" => Ok(Split::Train),
        "eval" => Ok(Split::Eval),
        "test" => Ok(Split::Test),
        other => Err(CliError::Config(format!("unknown split `{other}` (train, eval, test)"))),
    }
}

fn split_file(out: &Path, split: Split) -> PathBuf {
    let name = match split {
        Split::Train => "train",
        Split::Eval => "eval",
        Split::Test => "test",
    };
    out.join(format!("{name}.json"))
}

fn method_name(kind: PolicyKind) -> &'static str {
    match kind {
        PolicyKind::Pqn => "pqn",
        PolicyKind::PtrNet => "ptrnet",
    }
}

fn apply_overrides(cfg: &mut ExperimentConfig, o: &TrainOverrides) -> CliResult {
    let t = &mut cfg.train;
    if let Some(k) = o.hidden {
        t.hidden = k;
        t.q_hidden = k;
    }
    if let Some(v) = o.epochs {
        t.epochs = v;
    }
    if let Some(v) = o.steps {
        t.steps_per_epoch = v;
    }
    if let Some(v) = o.gamma {
        t.gamma = v;
    }
    if let Some(v) = o.lr_ptr {
        t.lr_ptr = v;
    }
    if let Some(v) = o.lr_q {
        t.lr_q = v;
    }
    if let Some(v) = o.batch {
        t.batch_size = v;
    }
    if let Some(v) = o.sync_c {
        t.sync_every = v;
    }
    if let Some(v) = o.sup_steps {
        t.sup_steps = v;
    }
    if let Some(s) = &o.td_scope {
        t.td_scope = match s.as_str() {
            "q_only" => TdScope::QOnly,
            "all" => TdScope::All,
            other => return Err(CliError::Config(format!("unknown TD scope `{other}` (q_only, all)"))),
        };
    }
    if let Some(seed) = seed_from_env()?.or(o.seed) {
        t.seed = seed;
    }
    Ok(())
}

fn set_perturbation(cfg: &mut ExperimentConfig, range: &str, bounds: &str) -> CliResult {
    let (first_epoch, last_epoch) = parse_pair("perturb-range", range)?;
    let (alpha, beta) = parse_pair("perturb-bounds", bounds)?;
    cfg.perturbation = Some(Perturbation {
        first_epoch,
        last_epoch,
        alpha,
        beta,
        seed: cfg.train.seed,
    });
    Ok(())
}

fn load_config(out: &Path) -> CliResult<ExperimentConfig> {
    let path = out.join(CONFIG_FILE);
    let text = io(&path, fs::read_to_string(&path))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn save_config(out: &Path, cfg: &ExperimentConfig) -> CliResult {
    let path = out.join(CONFIG_FILE);
    let text = serde_json::to_string_pretty(cfg).map_err(|e| CliError::Runtime(e.to_string()))?;
    io(&path, fs::write(&path, text + "\n"))
}

pub struct GenerateOptions {
    pub experiment: String,
    pub n: Option<usize>,
    pub instances: Option<usize>,
    pub benchmark: Option<String>,
    pub perturb_range: Option<String>,
    pub perturb_bounds: Option<String>,
}

pub fn generate(out: &Path, opts: GenerateOptions, overrides: &TrainOverrides) -> CliResult {
    let kind = ExperimentKind::from_str(&opts.experiment).map_err(|e| CliError::Config(e.to_string()))?;
    let seed = seed_from_env()?.or(overrides.seed).unwrap_or(0);
    let mut cfg = ExperimentConfig::preset(kind, seed);
    if let Some(n) = opts.n {
        cfg.n = n;
    }
    if let Some(m) = opts.instances {
        cfg.instances = m;
    }
    if let Some(b) = &opts.benchmark {
        cfg.benchmark = BenchmarkMethod::from_str(b).map_err(|e| CliError::Config(e.to_string()))?;
    }
    apply_overrides(&mut cfg, overrides)?;
    if opts.perturb_range.is_some() || opts.perturb_bounds.is_some() {
        set_perturbation(
            &mut cfg,
            opts.perturb_range.as_deref().unwrap_or("5:10"),
            opts.perturb_bounds.as_deref().unwrap_or("0.9:1.1"),
        )?;
    }
    lib(cfg.validate())?;

    io(out, fs::create_dir_all(out))?;
    for split in [Split::Train, Split::Eval, Split::Test] {
        let path = split_file(out, split);
        let instances = lib(cfg.split_instances(split))?;
        at(&path, write_instances(&path, &instances))?;
    }
    save_config(out, &cfg)?;
    println!(
        "wrote {} instances per split (n = {}, seed {}) to {}",
        cfg.instances,
        cfg.n,
        cfg.instance_seed,
        out.display()
    );
    Ok(())
}

fn train_models(out: &Path, cfg: &ExperimentConfig, kinds: &[PolicyKind]) -> CliResult {
    let path = split_file(out, Split::Train);
    let instances = at(&path, read_instances(&path))?;
    if instances.iter().any(|i| i.n() != cfg.n) {
        return Err(CliError::Config(format!("{} does not match n = {}", path.display(), cfg.n)));
    }
    let benchmarks = lib(benchmark_tours(&instances, cfg.benchmark))?;
    for &kind in kinds {
        let name = method_name(kind);
        let (model, history) = lib(train::train(kind, &instances, &benchmarks, &cfg.train, cfg.perturbation))?;
        let ckpt = out.join(format!("{name}.ckpt.json"));
        at(&ckpt, write_checkpoint(&ckpt, &model))?;
        let hist = out.join(format!("{name}_history.csv"));
        at(&hist, write_history_csv(&hist, &history))?;
        let steps = out.join(format!("{name}_steps.csv"));
        at(&steps, write_steps_csv(&steps, &history))?;
        if let Some(last) = history.epochs.last() {
            println!(
                "{name}: {} epochs, final J {:.4}, sigma_B {:.2}, Q {:.3}, TD loss {:.5}, supervised loss {:.5}",
                history.epochs.len(),
                last.j_mean,
                last.sigma_b,
                last.q_mean,
                last.td_loss,
                last.sup_loss
            );
        }
    }
    Ok(())
}

pub fn train(out: &Path, method: &str, overrides: &TrainOverrides) -> CliResult {
    let kinds = match method {
        "pqn" => vec![PolicyKind::Pqn],
        "ptrnet" => vec![PolicyKind::PtrNet],
        "both" => vec![PolicyKind::Pqn, PolicyKind::PtrNet],
        other => return Err(CliError::Config(format!("unknown method `{other}` (pqn, ptrnet, both)"))),
    };
    let mut cfg = load_config(out)?;
    apply_overrides(&mut cfg, overrides)?;
    lib(cfg.validate())?;
    save_config(out, &cfg)?;
    train_models(out, &cfg, &kinds)
}

pub fn evaluate(out: &Path, split: &str) -> CliResult {
    let split = parse_split(split)?;
    let cfg = load_config(out)?;
    let path = split_file(out, split);
    let instances = at(&path, read_instances(&path))?;
    let pqn_path = out.join("pqn.ckpt.json");
    let ptr_path = out.join("ptrnet.ckpt.json");
    let pqn = at(&pqn_path, read_checkpoint(&pqn_path))?;
    let ptrnet = at(&ptr_path, read_checkpoint(&ptr_path))?;
    let mut report = lib(evaluate_models(&cfg, split, &instances, &pqn, &ptrnet))?;
    for (kind, slot) in [
        (PolicyKind::Pqn, &mut report.pqn_history),
        (PolicyKind::PtrNet, &mut report.ptrnet_history),
    ] {
        let hist = out.join(format!("{}_history.csv", method_name(kind)));
        if hist.exists() {
            *slot = at(&hist, read_history_csv(&hist))?;
        }
    }
    let json = out.join("report.json");
    at(&json, report.write_json(&json))?;
    let table = out.join("table.csv");
    at(&table, report.write_table_csv(&table))?;
    println!("{:<10} {:>10} {:>8}", "method", "J", "sigma_B");
    for m in &report.methods {
        println!("{:<10} {:>10.4} {:>8.2}", m.name, m.j_mean, m.sigma_b_mean);
    }
    Ok(())
}

pub fn perturb(out: &Path, range: &str, bounds: &str, split: &str, overrides: &TrainOverrides) -> CliResult {
    parse_split(split)?;
    let mut cfg = load_config(out)?;
    apply_overrides(&mut cfg, overrides)?;
    set_perturbation(&mut cfg, range, bounds)?;
    lib(cfg.validate())?;
    save_config(out, &cfg)?;
    train_models(out, &cfg, &[PolicyKind::Pqn, PolicyKind::PtrNet])?;
    evaluate(out, split)
}

fn epoch_series(rows: &[pqn_core::io::HistoryRow], f: impl Fn(&pqn_core::io::HistoryRow) -> f64) -> Vec<(f64, f64)> {
    rows.iter().map(|r| (r.epoch as f64, f(r))).collect()
}

pub fn report(out: &Path) -> CliResult {
    let cfg = load_config(out)?;
    let window = cfg
        .perturbation
        .map(|p| (p.first_epoch as f64, p.last_epoch as f64));
    let mut histories = Vec::new();
    for kind in [PolicyKind::Pqn, PolicyKind::PtrNet] {
        let path = out.join(format!("{}_history.csv", method_name(kind)));
        if path.exists() {
            histories.push((plot_label(kind), at(&path, read_history_csv(&path))?));
        }
    }
    if histories.is_empty() {
        return Err(CliError::Missing(out.join("pqn_history.csv")));
    }
    let panel = |title: &'static str, f: fn(&pqn_core::io::HistoryRow) -> f64| -> (String, Vec<Series>) {
        let series = histories
            .iter()
            .map(|(label, rows)| Series::new(label, epoch_series(rows, f)))
            .collect();
        (title.to_string(), series)
    };
    let metrics = [
        panel("mean tour cost J", |r| r.j_mean),
        panel("policy entropy", |r| r.entropy_mean),
        panel("mean Q", |r| r.q_mean),
        panel("sigma_B vs benchmark", |r| r.sigma_b),
    ];
    let mut written = Vec::new();
    let path = out.join("metrics.svg");
    plot::panels(&path, &metrics, "epoch", window).map_err(CliError::Runtime)?;
    written.push(path);
    let losses = [panel("TD loss", |r| r.td_loss), panel("supervised loss", |r| r.sup_loss)];
    let path = out.join("loss.svg");
    plot::panels(&path, &losses, "epoch", window).map_err(CliError::Runtime)?;
    written.push(path);

    let steps_path = out.join("pqn_steps.csv");
    if steps_path.exists() {
        let steps = at(&steps_path, read_steps_csv(&steps_path))?;
        let td: Vec<(f64, f64)> = steps
            .iter()
            .filter_map(|s| s.td_loss.map(|l| (s.step as f64, l)))
            .collect();
        // The epoch window maps onto the steps recorded in those epochs.
        let step_window = window.and_then(|(a, b)| {
            let inside: Vec<f64> = steps
                .iter()
                .filter(|s| (s.epoch as f64) >= a && (s.epoch as f64) <= b)
                .map(|s| s.step as f64)
                .collect();
            Some((*inside.first()?, *inside.last()?))
        });
        if !td.is_empty() {
            let path = out.join("td_loss_steps.svg");
            plot::panels(
                &path,
                &[("PQN TD loss per update".to_string(), vec![Series::new("PQN", td)])],
                "step",
                step_window,
            )
            .map_err(CliError::Runtime)?;
            written.push(path);
        }
    }

    let report_path = out.join("report.json");
    if report_path.exists() {
        let report = at(&report_path, ExperimentReport::read_json(&report_path))?;
        let inst_path = split_file(out, report.split);
        let instances = at(&inst_path, read_instances(&inst_path))?;
        if let Some(inst) = instances.first() {
            if let Some(coords) = inst.coords() {
                for m in &report.methods {
                    let path = out.join(format!("tour_{}.svg", m.name.to_lowercase().replace('-', "")));
                    let title = format!("{} tour, J = {:.4}", m.name, m.j[0]);
                    plot::tour(&path, &title, coords, &m.tours[0].order).map_err(CliError::Runtime)?;
                    written.push(path);
                }
            }
        }
    }
    for p in written {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn plot_label(kind: PolicyKind) -> &'static str {
    match kind {
        PolicyKind::Pqn => pqn_core::experiment::PQN_LABEL,
        PolicyKind::PtrNet => pqn_core::experiment::PTRNET_LABEL,
    }
}
