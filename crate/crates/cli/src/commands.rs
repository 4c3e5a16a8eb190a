use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use pacile::certificates::{
    augmented_excess_bound, classification_bound, estimate_expected_empirical_task_risk, estimate_mean_abs_deviation,
    kde_bound, surrogate_abs_term, AugmentedInputs, BoundCertificate, EmpiricalTermSource, GStarSource,
};
use pacile::format::{parse_posterior, posterior_to_string, sha256_hex, write_atomic};
use pacile::gaussian_posterior::{kl_isotropic, PriorConfig};
use pacile::kernel_features::Kernel;
use pacile::validation_suite::{run_experiment, write_suite, Experiment, SuiteConfig};
use pacile::SeedStream;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::Config;
use crate::data::{prepare, Prepared};
use crate::error::{config_err, CliError, CliResult};
use crate::train::{train, Algorithm, TrainOutcome};

/// What a command produced: its manifest, summary lines for the terminal and
/// the names of failed checks.
#[derive(Clone, Debug)]
pub struct CommandOutput {
    pub manifest: Value,
    pub lines: Vec<String>,
    pub failed: Vec<String>,
}

impl CommandOutput {
    fn new(manifest: Value, lines: Vec<String>) -> Self {
        Self { manifest, lines, failed: Vec::new() }
    }
}

/// Manifest label attached whenever hyperparameters were chosen on the training data.
pub const DATA_DEPENDENT_LABEL: &str = "data-dependent selection: certificate not valid as stated";

fn out_dir(cfg: &Config) -> CliResult<PathBuf> {
    let dir = PathBuf::from(cfg.get("out_dir"));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn seed(cfg: &Config) -> CliResult<u64> {
    cfg.parsed("seed")
}

fn write(dir: &Path, name: &str, bytes: &[u8]) -> CliResult<String> {
    write_atomic(&dir.join(name), bytes)?;
    Ok(sha256_hex(bytes))
}

fn write_manifest(dir: &Path, manifest: &Value) -> CliResult<()> {
    let mut bytes = serde_json::to_vec_pretty(manifest).map_err(|e| CliError::Core(e.into()))?;
    bytes.push(b'\n');
    write_atomic(&dir.join("manifest.json"), &bytes)?;
    Ok(())
}

fn dataset_json(p: &Prepared) -> Value {
    json!({
        "source": p.source,
        "name": p.dataset.name,
        "source_digest": p.source_digest,
        "digest": p.dataset.digest(),
        "m": p.dataset.m(),
        "d": p.dataset.d(),
        "n_labels": p.dataset.n_labels(),
        "loss": p.embedding.kind().name(),
        "dim_h": p.embedding.dim_h(),
    })
}

fn base_manifest(command: &str, cfg: &Config, prepared: Option<&Prepared>) -> serde_json::Map<String, Value> {
    let mut m = serde_json::Map::new();
    m.insert("command".into(), json!(command));
    m.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
    m.insert("config".into(), json!(cfg.effective()));
    if let Some(p) = prepared {
        m.insert("dataset".into(), dataset_json(p));
    }
    m
}

fn prior_json(p: &PriorConfig) -> Value {
    json!({
        "alpha": p.alpha,
        "t": p.t,
        "kappa": p.kappa,
        "m": p.m,
        "sigma_sq": p.sigma_sq(),
        "sigma0_sq": p.sigma0_sq(),
        "lambda": p.lambda(),
    })
}

fn candidates_csv(o: &TrainOutcome) -> String {
    let mut s = String::from("key,value,j_hat,note\n");
    for c in &o.candidates {
        let j = c.j_hat.map(|v| format!("{v:?}")).unwrap_or_default();
        s.push_str(&format!("{},{:?},{},\"{}\"\n", c.key, c.value, j, c.note.replace('"', "'")));
    }
    s
}

fn labels(data_dependent: bool) -> Vec<&'static str> {
    if data_dependent {
        vec![DATA_DEPENDENT_LABEL]
    } else {
        Vec::new()
    }
}

/// `train`: fits one posterior and writes it with its traces and manifest.
pub fn cmd_train(cfg: &Config) -> CliResult<CommandOutput> {
    let algorithm: Algorithm = cfg.get("algorithm").parse()?;
    let prepared = prepare(cfg)?;
    let root = SeedStream::new(seed(cfg)?);
    let outcome = train(
        cfg,
        &prepared,
        algorithm,
        cfg.f64("alpha")?,
        cfg.f64("t")?,
        &root.derive("train"),
        &root.derive("eval"),
    )?;
    let dir = out_dir(cfg)?;
    let mut meta = BTreeMap::new();
    meta.insert("algorithm".to_string(), algorithm.name().to_string());
    meta.insert("alpha".to_string(), format!("{:?}", outcome.prior.alpha));
    meta.insert("t".to_string(), format!("{:?}", outcome.prior.t));
    meta.insert("kappa".to_string(), format!("{:?}", outcome.prior.kappa));
    meta.insert("m".to_string(), format!("{:?}", outcome.prior.m));
    meta.insert("loss".to_string(), prepared.embedding.kind().name().to_string());
    meta.insert("dataset_digest".to_string(), prepared.dataset.digest().to_string());
    let posterior_sha = write(&dir, "posterior.txt", posterior_to_string(&outcome.posterior, &meta)?.as_bytes())?;
    let candidates_sha = write(&dir, "candidates.csv", candidates_csv(&outcome).as_bytes())?;
    write(&dir, "config.effective", cfg.render().as_bytes())?;
    if let Some(trace) = &outcome.trace_csv {
        write(&dir, "trace.csv", trace.as_bytes())?;
    }
    let sel = &outcome.candidates[outcome.selected];
    let mut m = base_manifest("train", cfg, Some(&prepared));
    m.insert("algorithm".into(), json!(algorithm.name()));
    m.insert("prior".into(), prior_json(&outcome.prior));
    m.insert("posterior_variance".into(), json!(outcome.posterior.variance));
    m.insert("parametrization".into(), json!(outcome.posterior.parametrization.tag()));
    m.insert(
        "result".into(),
        json!({
            "j_hat": outcome.j_hat.mean,
            "j_hat_std_error": outcome.j_hat.std_error,
            "j_c": outcome.j_c,
            "selected": {"key": sel.key, "value": sel.value},
            "iterations": outcome.iterations,
            "stop_reason": outcome.stop_reason,
        }),
    );
    m.insert(
        "files".into(),
        json!({"posterior.txt": posterior_sha, "candidates.csv": candidates_sha}),
    );
    m.insert("labels".into(), json!(labels(outcome.data_dependent())));
    m.insert("warnings".into(), json!(outcome.warnings));
    let manifest = Value::Object(m);
    write_manifest(&dir, &manifest)?;
    let line = format!(
        "{}: J-hat = {:.6} (se {:.2e}), {} = {}",
        algorithm.name(),
        outcome.j_hat.mean,
        outcome.j_hat.std_error,
        sel.key,
        sel.value
    );
    Ok(CommandOutput::new(manifest, vec![line]))
}

fn meta_f64(meta: &BTreeMap<String, String>, key: &str) -> CliResult<f64> {
    meta.get(key)
        .ok_or_else(|| config_err(format!("posterior file has no `{key}` metadata")))?
        .parse()
        .map_err(|_| config_err(format!("posterior metadata `{key}` is not a number")))
}

/// `certify`: evaluates every applicable certificate for a stored posterior.
pub fn cmd_certify(cfg: &Config) -> CliResult<CommandOutput> {
    let path = cfg.get("posterior");
    if path.is_empty() {
        return Err(config_err("certify needs `posterior = <file>`"));
    }
    let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("cannot read posterior {path}: {e}")))?;
    let (q, meta) = parse_posterior(&text)?;
    let prepared = prepare(cfg)?;
    if let Some(d) = meta.get("dataset_digest") {
        if d != prepared.dataset.digest() {
            return Err(config_err(format!(
                "posterior was trained on dataset {d}, but the configured dataset has digest {}",
                prepared.dataset.digest()
            )));
        }
    }
    let (h, dim_f) = (prepared.embedding.dim_h(), prepared.dataset.d());
    if q.mean.dim_h() != h || q.mean.dim_f() != dim_f {
        return Err(config_err(format!(
            "posterior shape {}x{} does not match the dataset ({h}x{dim_f})",
            q.mean.dim_h(),
            q.mean.dim_f()
        )));
    }
    let prior = PriorConfig::new(meta_f64(&meta, "alpha")?, meta_f64(&meta, "t")?, meta_f64(&meta, "kappa")?, meta_f64(&meta, "m")?)
        .map_err(|e| config_err(e.to_string()))?;
    let delta = cfg.f64("delta")?;
    let slack = cfg.f64("slack")?;
    let samples = cfg.usize("cert_samples")?;
    let s = seed(cfg)?;
    let root = SeedStream::new(s).derive("certify");
    let data = &prepared.data;
    let m = data.m() as f64;

    let mut certs: Vec<BoundCertificate> = Vec::new();
    let emp = estimate_expected_empirical_task_risk(&q, &prepared.embedding, data, samples, &root.derive("empirical"))?;
    let kl = kl_isotropic(&q, &prior)?;
    let mut c = classification_bound(emp.mean, kl, m, delta, slack)?;
    c.params.mc_samples = Some(samples);
    c.params.seed = Some(s);
    c.params.n_params = Some(q.n_params());
    c.params.parametrization = Some(q.parametrization.tag());
    certs.push(c);

    let mut oracle = Value::Null;
    let aug_stream = root.derive("augmented");
    let inputs = match &prepared.task {
        Some(task) => {
            let mut g = DMatrix::zeros(data.m(), h);
            for i in 0..data.m() {
                let idx = task.index_of(data.xs.row(i).transpose().as_slice())?;
                g.set_row(i, &task.g_star(idx)?.transpose());
            }
            let abs = estimate_mean_abs_deviation(&q, &data.xs, &g, samples, &aug_stream)?;
            let truth = task.expected_posterior_risk(&q, samples, &root.derive("oracle"))?;
            let bayes = task.f_star_and_bayes_risk()?.1;
            oracle = json!({
                "expected_true_risk": truth.mean,
                "expected_true_risk_std_error": truth.std_error,
                "bayes_risk": bayes,
                "excess_risk": truth.mean - bayes,
            });
            AugmentedInputs {
                empirical_abs_term: abs.mean,
                empirical_source: EmpiricalTermSource::Exact,
                g_star_norm: task.g_star_sup_norm()?,
                g_star_source: GStarSource::Oracle,
                delta,
            }
        }
        None => {
            let abs = surrogate_abs_term(&q, &prepared.embedding, data, samples, &aug_stream)?;
            let preds = q.mean.predict_rows(&data.xs)?;
            let plug_in = preds.row_iter().map(|r| r.norm()).fold(0.0, f64::max);
            AugmentedInputs {
                empirical_abs_term: abs.mean,
                empirical_source: EmpiricalTermSource::Surrogate,
                g_star_norm: plug_in,
                g_star_source: GStarSource::PlugIn,
                delta,
            }
        }
    };
    let mut aug = augmented_excess_bound(&q, &prior, &prepared.embedding, &inputs)?;
    aug.params.mc_samples = Some(samples);
    aug.params.seed = Some(s);
    certs.push(aug);

    let mut notes = Vec::new();
    match kde_bound(&q.mean, &Kernel::Linear, data, delta) {
        Ok(c) => certs.push(c),
        Err(pacile::Error::Precondition(msg)) => notes.push(format!("kde certificate skipped: {msg}")),
        Err(e) => return Err(e.into()),
    }

    let mut csv = BoundCertificate::csv_header();
    csv.push('\n');
    for c in &certs {
        csv.push_str(&c.to_csv_row());
        csv.push('\n');
    }
    let dir = out_dir(cfg)?;
    let sha = write(&dir, "certificates.csv", csv.as_bytes())?;
    let mut mf = base_manifest("certify", cfg, Some(&prepared));
    mf.insert("posterior_sha256".into(), json!(sha256_hex(text.as_bytes())));
    mf.insert("prior".into(), prior_json(&prior));
    mf.insert(
        "certificates".into(),
        json!(certs
            .iter()
            .map(|c| json!({"kind": c.kind.name(), "total": c.total, "certified": c.is_certified(), "flags": c.flags}))
            .collect::<Vec<_>>()),
    );
    mf.insert("oracle".into(), oracle);
    mf.insert("files".into(), json!({"certificates.csv": sha}));
    mf.insert("notes".into(), json!(notes));
    let manifest = Value::Object(mf);
    write_manifest(&dir, &manifest)?;
    let lines = certs
        .iter()
        .map(|c| {
            let flags = if c.flags.is_empty() { String::new() } else { format!(" [{}]", c.flags.join(", ")) };
            format!("{}: {:.6}{flags}", c.kind.name(), c.total)
        })
        .collect();
    Ok(CommandOutput::new(manifest, lines))
}

#[derive(Clone, Debug)]
pub struct HeatmapCell {
    pub alpha: f64,
    pub t: f64,
    pub j_hat: f64,
    pub sigma: f64,
    pub lambda: f64,
    pub selected: f64,
    pub data_dependent: bool,
}

/// Relative jumps `|a − b| / max(|a|, |b|)` between grid neighbours.
pub fn adjacent_jumps(grid: &[Vec<f64>]) -> Vec<f64> {
    let mut out = Vec::new();
    let rel = |a: f64, b: f64| {
        let s = a.abs().max(b.abs());
        if s == 0.0 {
            0.0
        } else {
            (a - b).abs() / s
        }
    };
    for i in 0..grid.len() {
        for j in 0..grid[i].len() {
            if i + 1 < grid.len() {
                out.push(rel(grid[i][j], grid[i + 1][j]));
            }
            if j + 1 < grid[i].len() {
                out.push(rel(grid[i][j], grid[i][j + 1]));
            }
        }
    }
    out
}

/// `max jump < 10 × median jump` (all-zero jumps pass).
pub fn smooth_enough(jumps: &[f64]) -> (bool, f64, f64) {
    if jumps.is_empty() {
        return (true, 0.0, 0.0);
    }
    let mut sorted = jumps.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = sorted.len();
    let median = if n % 2 == 1 { sorted[n / 2] } else { 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]) };
    let max = sorted[n - 1];
    let ok = if median == 0.0 { max == 0.0 } else { max < 10.0 * median };
    (ok, max, median)
}

fn pool(cfg: &Config) -> CliResult<rayon::ThreadPool> {
    let threads = cfg.usize("threads")?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| config_err(format!("cannot start {threads} threads: {e}")))
}

/// `sweep`: trains every algorithm on every `(α, t)` cell and writes one
/// heatmap CSV per algorithm.
pub fn cmd_sweep(cfg: &Config) -> CliResult<CommandOutput> {
    let alphas = cfg.list::<f64>("alpha_grid")?;
    let ts = cfg.list::<f64>("t_grid")?;
    let algorithms = cfg.list::<String>("algorithms")?
        .iter()
        .map(|a| a.parse::<Algorithm>())
        .collect::<CliResult<Vec<_>>>()?;
    if alphas.is_empty() || ts.is_empty() || algorithms.is_empty() {
        return Err(config_err("sweep needs non-empty alpha_grid, t_grid and algorithms"));
    }
    let prepared = prepare(cfg)?;
    let root = SeedStream::new(seed(cfg)?);
    let eval = root.derive("eval");
    let (na, nt) = (alphas.len(), ts.len());
    let cells: Vec<(usize, usize, usize)> = (0..algorithms.len())
        .flat_map(|a| (0..na).flat_map(move |i| (0..nt).map(move |j| (a, i, j))))
        .collect();
    let results: Vec<CliResult<HeatmapCell>> = pool(cfg)?.install(|| {
        cells
            .par_iter()
            .map(|&(a, i, j)| {
                let algo = algorithms[a];
                let stream = root.derive("sweep").derive(algo.name()).at((i * ts.len() + j) as u64);
                let o = train(cfg, &prepared, algo, alphas[i], ts[j], &stream, &eval)?;
                Ok(HeatmapCell {
                    alpha: alphas[i],
                    t: ts[j],
                    j_hat: o.j_hat.mean,
                    sigma: o.prior.sigma_sq().sqrt(),
                    lambda: o.prior.lambda(),
                    selected: o.candidates[o.selected].value,
                    data_dependent: o.data_dependent(),
                })
            })
            .collect()
    });
    let results = results.into_iter().collect::<CliResult<Vec<_>>>()?;
    let dir = out_dir(cfg)?;
    let mut files = serde_json::Map::new();
    let mut checks = Vec::new();
    let mut any_dependent = false;
    let mut failed = Vec::new();
    let mut lines = Vec::new();
    let per_algo = alphas.len() * ts.len();
    for (a, algo) in algorithms.iter().enumerate() {
        let block = &results[a * per_algo..(a + 1) * per_algo];
        let mut csv = String::from("alpha,t,j_hat,sigma,lambda\n");
        for c in block {
            csv.push_str(&format!("{:?},{:?},{:?},{:?},{:?}\n", c.alpha, c.t, c.j_hat, c.sigma, c.lambda));
            any_dependent |= c.data_dependent;
        }
        let name = format!("heatmap_{}.csv", algo.name());
        files.insert(name.clone(), json!(write(&dir, &name, csv.as_bytes())?));
        let finite = block.iter().all(|c| c.j_hat.is_finite());
        let grid: Vec<Vec<f64>> = (0..alphas.len()).map(|i| (0..ts.len()).map(|j| block[i * ts.len() + j].j_hat).collect()).collect();
        let (smooth, max, median) = smooth_enough(&adjacent_jumps(&grid));
        for (name, ok, detail) in [
            (format!("{}_finite", algo.name()), finite, format!("{} cells", block.len())),
            (format!("{}_smooth", algo.name()), smooth, format!("max jump {max:.4e}, median {median:.4e}")),
        ] {
            if !ok {
                failed.push(name.clone());
            }
            lines.push(format!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" }));
            checks.push(json!({"name": name, "passed": ok, "detail": detail}));
        }
    }
    let mut m = base_manifest("sweep", cfg, Some(&prepared));
    m.insert("files".into(), Value::Object(files));
    m.insert(
        "cells".into(),
        json!(results
            .iter()
            .zip(&cells)
            .map(|(c, &(a, _, _))| json!({"algorithm": algorithms[a].name(), "alpha": c.alpha, "t": c.t, "j_hat": c.j_hat, "selected": c.selected}))
            .collect::<Vec<_>>()),
    );
    m.insert("checks".into(), json!(checks));
    m.insert("labels".into(), json!(labels(any_dependent)));
    let manifest = Value::Object(m);
    write_manifest(&dir, &manifest)?;
    Ok(CommandOutput { manifest, lines, failed })
}

fn suite_config(cfg: &Config) -> CliResult<SuiteConfig> {
    let mut s = SuiteConfig { seed: seed(cfg)?, ..SuiteConfig::default() };
    s.relaxation_gap.mc_samples = cfg.usize("validate.relaxation_samples")?;
    s.correlation.m_values = cfg.list("validate.correlation_m")?;
    s.correlation.m_samples = cfg.usize("validate.correlation_samples")?;
    s.correlation.n_experiments = cfg.usize("validate.correlation_experiments")?;
    Ok(s)
}

/// `validate`: runs the numerical experiments.
pub fn cmd_validate(cfg: &Config, which: Option<&str>) -> CliResult<CommandOutput> {
    let which = which.unwrap_or(cfg.get("experiments"));
    let experiments: Vec<Experiment> = if which == "all" {
        Experiment::ALL.to_vec()
    } else {
        which
            .split(',')
            .map(|s| s.trim().parse::<Experiment>().map_err(|e| config_err(e.to_string())))
            .collect::<CliResult<_>>()?
    };
    let suite = suite_config(cfg)?;
    let reports = pool(cfg)?.install(|| {
        experiments
            .par_iter()
            .map(|&e| run_experiment(e, &suite))
            .collect::<pacile::Result<Vec<_>>>()
    })?;
    let dir = out_dir(cfg)?;
    let manifest = write_suite(&reports, suite.seed, &dir)?;
    let mut failed = Vec::new();
    let mut lines = Vec::new();
    for e in &manifest.experiments {
        for c in &e.checks {
            lines.push(format!("{} {}/{}: {}", if c.passed { "PASS" } else { "FAIL" }, e.experiment.name(), c.name, c.detail));
            if !c.passed {
                failed.push(format!("{}/{}", e.experiment.name(), c.name));
            }
        }
    }
    let value = serde_json::to_value(&manifest).map_err(|e| CliError::Core(e.into()))?;
    Ok(CommandOutput { manifest: value, lines, failed })
}
