//! Dataset loading and preprocessing driven by the config.

use std::path::Path;

use nalgebra::DMatrix;
use pacile::datasets::{load_csv, make_synthetic, FeatureKind, LabelColumns, MultiLabelDataset, SyntheticConfig, SyntheticTask};
use pacile::kernel_features::Standardizer;
use pacile::loss_embedding::{LossEmbedding, LossKind, MAX_ENUMERATED_LABELS};
use pacile::surrogate_regression::RegressionData;
use pacile::SeedStream;

use crate::config::Config;
use crate::error::{config_err, CliError, CliResult};

/// Feature preprocessing, applied in the order standardize, normalize, bias.
#[derive(Clone, Debug)]
pub struct Preprocess {
    pub standardizer: Option<Standardizer>,
    pub normalize_rows: bool,
    pub bias: bool,
}

impl Preprocess {
    pub fn apply(&self, xs: &DMatrix<f64>) -> CliResult<DMatrix<f64>> {
        let mut out = match &self.standardizer {
            Some(s) => s.transform(xs)?,
            None => xs.clone(),
        };
        if self.normalize_rows {
            for mut r in out.row_iter_mut() {
                let n = r.norm();
                if n > 0.0 {
                    r /= n;
                }
            }
        }
        if self.bias {
            let d = out.ncols();
            out = out.insert_column(d, 1.0);
        }
        Ok(out)
    }
}

#[derive(Clone, Debug)]
pub struct Prepared {
    /// The dataset after preprocessing.
    pub dataset: MultiLabelDataset,
    /// Digest of the dataset as loaded, before preprocessing.
    pub source_digest: String,
    pub source: String,
    pub embedding: LossEmbedding,
    pub data: RegressionData,
    /// The generating task, with its support preprocessed like the data.
    pub task: Option<SyntheticTask>,
    /// `max ‖xᵢ‖` over the preprocessed training inputs.
    pub empirical_kappa: f64,
}

impl Prepared {
    pub fn m(&self) -> usize {
        self.dataset.m()
    }
}

fn loss_kind(cfg: &Config) -> CliResult<LossKind> {
    cfg.get("loss").parse().map_err(|e: pacile::Error| config_err(e.to_string()))
}

fn synthetic(cfg: &Config) -> CliResult<(SyntheticTask, MultiLabelDataset)> {
    let features = match cfg.get("synthetic.features") {
        "gaussian" => FeatureKind::Gaussian,
        "one-hot" | "onehot" => FeatureKind::OneHot,
        other => return Err(config_err(format!("synthetic.features: expected gaussian or one-hot, got `{other}`"))),
    };
    let support_size = cfg.usize("synthetic.support_size")?;
    let sc = SyntheticConfig {
        support_size,
        n_labels: cfg.usize("synthetic.n_labels")?,
        concentration: cfg.f64("synthetic.concentration")?,
        feature_dim: if features == FeatureKind::OneHot { support_size } else { cfg.usize("synthetic.feature_dim")? },
        features,
        loss: loss_kind(cfg)?,
        marginal: None,
    };
    sc.validate().map_err(|e| config_err(e.to_string()))?;
    let seed: u64 = cfg.parsed("seed")?;
    let task = make_synthetic(seed, &sc)?;
    let m = cfg.usize("synthetic.m")?;
    if m == 0 {
        return Err(config_err("synthetic.m must be positive"));
    }
    let ds = task.sample_training_set(m, &SeedStream::new(seed).derive("synthetic-sample"))?;
    Ok((task, ds))
}

pub fn prepare(cfg: &Config) -> CliResult<Prepared> {
    if cfg.get("kernel") != "linear" {
        return Err(config_err(format!(
            "kernel `{}` has no explicit feature map; posterior training and certification need kernel = linear",
            cfg.get("kernel")
        )));
    }
    let kind = loss_kind(cfg)?;
    let source = cfg.get("dataset").to_string();
    let (task, raw) = if source == "synthetic" {
        let (t, d) = synthetic(cfg)?;
        (Some(t), d)
    } else {
        let columns = cfg.list::<String>("label_columns")?;
        let columns = if columns.is_empty() { LabelColumns::Prefixed } else { LabelColumns::Named(columns) };
        let path = Path::new(&source);
        if !path.exists() {
            return Err(config_err(format!("dataset `{source}` does not exist")));
        }
        (None, load_csv(path, &columns)?)
    };
    let l = raw.n_labels();
    if kind == LossKind::ZeroOne && l > MAX_ENUMERATED_LABELS {
        return Err(config_err(format!("zero-one loss enumerates 2^l outputs; l = {l} exceeds {MAX_ENUMERATED_LABELS}")));
    }
    let embedding = LossEmbedding::new(kind, l).map_err(|e| config_err(e.to_string()))?;
    let pre = Preprocess {
        standardizer: if cfg.bool("standardize")? { Some(Standardizer::fit(&raw.xs)?) } else { None },
        normalize_rows: cfg.bool("normalize_rows")?,
        bias: cfg.bool("bias")?,
    };
    let xs = pre.apply(&raw.xs)?;
    let mut names = raw.feature_names.clone();
    if pre.bias {
        names.push("bias".into());
    }
    let dataset = MultiLabelDataset::new(raw.name.clone(), xs, raw.ys.clone(), names)?;
    let task = match task {
        Some(t) => {
            let support = pre.apply(&t.x_support)?;
            Some(
                SyntheticTask::new(support, t.marginal.clone(), t.conditional.clone(), t.embedding.clone())
                    .map_err(|e| CliError::Config(format!("preprocessing merged synthetic support points: {e}")))?,
            )
        }
        None => None,
    };
    let data = dataset.regression_data(&embedding)?;
    let empirical_kappa = data.sq_norms.iter().cloned().fold(0.0, f64::max).sqrt();
    Ok(Prepared {
        source_digest: raw.digest().to_string(),
        dataset,
        source,
        embedding,
        data,
        task,
        empirical_kappa,
    })
}

/// `kappa` from the config, or the empirical value for `auto`.
pub fn kappa(cfg: &Config, prepared: &Prepared) -> CliResult<f64> {
    let k = match cfg.get("kappa") {
        "auto" => match &prepared.task {
            Some(t) => t.kappa(),
            None => prepared.empirical_kappa,
        },
        _ => cfg.f64("kappa")?,
    };
    if !(k > 0.0 && k.is_finite()) {
        return Err(config_err(format!("kappa must be positive, got {k}")));
    }
    Ok(k)
}
