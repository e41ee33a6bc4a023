//! Subcommand implementations. Each returns the text printed on stdout.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use cbid_core::classify::{class_metrics, i2c_with_metrics, knn_classify, nbnn_classify, Prediction};
use cbid_core::data::{mine_neighbors_patch, mine_triplets_image, Dataset, Label, Mode, PatchSet, TripletSet};
use cbid_core::hamming::{top_k, CodeDatabase, CodeEntry, Metric, WeightedMetric};
use cbid_core::hashfn::BinaryCode;
use cbid_core::trainer::gradcheck::{gradient_check_with, GradCheckConfig};
use cbid_core::trainer::{self, weak_gradient, DualState, TrainingSet, TripletProblem};
use cbid_core::hashfn::HashFunction;
use cbid_core::Matrix;

use crate::config::Config;
use crate::error::{CliError, Result};
use crate::formats::{self, Model};

/// Inputs shared by several subcommands.
#[derive(Debug, Clone, Default)]
pub struct Inputs {
    pub features: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub triplets: Option<PathBuf>,
    pub config: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub db: Option<PathBuf>,
    pub mode: Option<Mode>,
    pub k: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub trace: Option<PathBuf>,
    pub metric: MetricChoice,
    pub rule: Rule,
}

/// Distance used by retrieval and kNN.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MetricChoice {
    /// Uniform Hamming in image mode, the learned weights in patch mode.
    #[default]
    Auto,
    Uniform,
    /// Per-class columns in image mode, the shared column in patch mode.
    Weighted,
}

/// Image-mode classification rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Rule {
    #[default]
    Knn,
    I2c,
}

fn required<'a>(p: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    p.as_deref()
        .ok_or_else(|| CliError::Usage(format!("--{flag} is required")))
}

enum Loaded {
    Image(Dataset),
    Patch(PatchSet),
}

impl Loaded {
    /// Labels of the samples triplets index into.
    fn triplet_labels(&self) -> Vec<Label> {
        match self {
            Loaded::Image(d) => d.labels().to_vec(),
            Loaded::Patch(p) => p.patch_labels(),
        }
    }
}

fn max_label(labels: &[Label]) -> usize {
    labels.iter().copied().max().unwrap_or(0) as usize
}

fn load_training(inp: &Inputs, mode: Mode) -> Result<Loaded> {
    let fpath = required(&inp.features, "features")?;
    let labels = formats::read_labels(required(&inp.labels, "labels")?)?;
    match mode {
        Mode::Image => {
            let x = formats::read_features(fpath)?;
            if x.rows() == 0 {
                return Err(CliError::parse(fpath, 1, "no samples"));
            }
            Ok(Loaded::Image(Dataset::with_inferred_classes(x, labels)?))
        }
        Mode::Patch => {
            let (owner, x) = formats::read_patches(fpath)?;
            if x.rows() == 0 {
                return Err(CliError::parse(fpath, 1, "no patches"));
            }
            let k = max_label(&labels);
            Ok(Loaded::Patch(PatchSet::new(x, owner, labels, k)?))
        }
    }
}

pub fn mine(inp: &Inputs) -> Result<String> {
    let cfg = Config::load(inp.config.as_deref())?;
    let mode = inp.mode.unwrap_or(Mode::Image);
    let out = required(&inp.out, "out")?;
    let data = load_training(inp, mode)?;
    let set = match &data {
        Loaded::Image(d) => mine_triplets_image(d, cfg.hits, cfg.misses)?,
        Loaded::Patch(p) => mine_neighbors_patch(p)?,
    };
    formats::write_text(out, &formats::format_triplets(set.triples()))?;
    let (samples, classes) = match &data {
        Loaded::Image(d) => (d.len(), d.classes()),
        Loaded::Patch(p) => (p.len(), p.classes()),
    };
    Ok(format!(
        "mined {} triplets from {samples} samples in {classes} classes\n",
        set.len()
    ))
}

pub fn train(inp: &Inputs) -> Result<String> {
    let cfg = Config::load(inp.config.as_deref())?.with_seed(inp.seed);
    if cfg.train.bits == 0 {
        return Err(CliError::Usage("bits must be at least 1".into()));
    }
    let mode = inp.mode.unwrap_or(Mode::Image);
    let out = required(&inp.out, "out")?;
    let data = load_training(inp, mode)?;
    let triples = formats::read_triplets(required(&inp.triplets, "triplets")?)?;
    let ts = TripletSet::new(triples, mode, &data.triplet_labels())?;
    let set = match &data {
        Loaded::Image(d) => TrainingSet::Image { data: d, triplets: &ts },
        Loaded::Patch(p) => TrainingSet::Patch { patches: p, triplets: &ts },
    };
    let trained = trainer::train(set, &cfg.train)?;
    let model = Model {
        mode,
        codebook: trained.codebook,
        weights: trained.weights,
    };
    formats::write_text(out, &formats::format_model(&model))?;
    let trace_path = inp.trace.clone().unwrap_or_else(|| {
        let mut p = out.as_os_str().to_owned();
        p.push(".trace.csv");
        PathBuf::from(p)
    });
    formats::write_text(&trace_path, &formats::format_trace(&trained.trace))?;
    let mut msg = format!("learned {} of {} bits", model.codebook.bits(), cfg.train.bits);
    if let Some(last) = trained.trace.last() {
        write!(msg, ", final objective {}", last.objective).unwrap();
    }
    msg.push('\n');
    Ok(msg)
}

fn load_model(inp: &Inputs) -> Result<Model> {
    let m = formats::read_model(required(&inp.model, "model")?)?;
    if let Some(mode) = inp.mode {
        if mode != m.mode {
            return Err(CliError::Usage(format!(
                "--mode {} does not match the {} model",
                formats::mode_name(mode),
                formats::mode_name(m.mode)
            )));
        }
    }
    Ok(m)
}

/// Encoded query or reference samples with their grouping key.
struct Encoded {
    codes: Vec<BinaryCode>,
    /// Row index (image mode) or owner image index (patch mode).
    group: Vec<usize>,
}

fn encode_features(model: &Model, path: &Path) -> Result<Encoded> {
    let (group, x): (Option<Vec<usize>>, Matrix) = match model.mode {
        Mode::Image => (None, formats::read_features(path)?),
        Mode::Patch => {
            let (o, x) = formats::read_patches(path)?;
            (Some(o), x)
        }
    };
    let codes = model.codebook.encode(&x)?;
    let group = group.unwrap_or_else(|| (0..codes.len()).collect());
    Ok(Encoded { codes, group })
}

pub fn encode(inp: &Inputs) -> Result<String> {
    let model = load_model(inp)?;
    let out = required(&inp.out, "out")?;
    let enc = encode_features(&model, required(&inp.features, "features")?)?;
    let labels = match &inp.labels {
        Some(p) => Some(formats::read_labels(p)?),
        None => None,
    };
    let mut entries = Vec::with_capacity(enc.codes.len());
    for (i, (code, &g)) in enc.codes.into_iter().zip(&enc.group).enumerate() {
        let label = match &labels {
            Some(l) => *l.get(g).ok_or_else(|| {
                CliError::Data(format!("no label for sample {g}; the labels file has {} lines", l.len()))
            })?,
            None => 0,
        };
        entries.push(CodeEntry { id: i as u64, label, code });
    }
    if let (Some(l), Mode::Image) = (&labels, model.mode) {
        if l.len() != entries.len() {
            return Err(CliError::Data(format!(
                "{} labels for {} samples",
                l.len(),
                entries.len()
            )));
        }
    }
    let db = CodeDatabase::from_entries(model.codebook.bits(), entries)?;
    formats::write_text(out, &formats::format_db(&db))?;
    Ok(format!("encoded {} codes of {} bits\n", db.len(), db.bits()))
}

/// Metrics held for the lifetime of a query run.
enum Metrics {
    Shared(WeightedMetric),
    PerClass(Vec<WeightedMetric>),
}

impl Metrics {
    fn build(model: &Model, choice: MetricChoice) -> Metrics {
        let bits = model.codebook.bits();
        match (model.mode, choice) {
            (_, MetricChoice::Uniform) | (Mode::Image, MetricChoice::Auto) => {
                Metrics::Shared(WeightedMetric::uniform(bits).build_tables())
            }
            (Mode::Image, MetricChoice::Weighted) => Metrics::PerClass(class_metrics(&model.weights)),
            (Mode::Patch, _) => Metrics::Shared(shared_metric(model)),
        }
    }

    fn metric(&self) -> Metric<'_> {
        match self {
            Metrics::Shared(m) => Metric::Shared(m),
            Metrics::PerClass(ms) => Metric::PerClass(ms),
        }
    }
}

fn shared_metric(model: &Model) -> WeightedMetric {
    WeightedMetric::new(model.weights.column(0))
        .expect("model weights are nonnegative")
        .build_tables()
}

fn check_db(model: &Model, db: &CodeDatabase) -> Result<()> {
    if db.bits() != model.codebook.bits() {
        return Err(CliError::Data(format!(
            "database codes have {} bits, the model has {}",
            db.bits(),
            model.codebook.bits()
        )));
    }
    if db.entries().iter().any(|e| e.label == 0) {
        return Err(CliError::Data("database entries need labels".into()));
    }
    Ok(())
}

fn k_of(inp: &Inputs) -> Result<usize> {
    let k = match inp.k {
        Some(k) => k,
        None => Config::load(inp.config.as_deref())?.k,
    };
    if k == 0 {
        return Err(CliError::Usage("--k must be at least 1".into()));
    }
    Ok(k)
}

pub fn retrieve(inp: &Inputs) -> Result<String> {
    let model = load_model(inp)?;
    let db = formats::read_db(required(&inp.db, "db")?)?;
    check_db(&model, &db)?;
    let out = required(&inp.out, "out")?;
    let k = k_of(inp)?;
    let enc = encode_features(&model, required(&inp.features, "features")?)?;
    let metrics = Metrics::build(&model, inp.metric);
    let labels: BTreeMap<u64, Label> = db.entries().iter().map(|e| (e.id, e.label)).collect();
    let mut text = String::from("query_id,rank,id,label,distance\n");
    let mut truncated = false;
    for (q, code) in enc.codes.iter().enumerate() {
        let hits = top_k(&db, metrics.metric(), code, k)?;
        truncated |= hits.truncated;
        for (rank, (id, d)) in hits.hits.iter().enumerate() {
            writeln!(text, "{q},{},{id},{},{d}", rank + 1, labels[id]).unwrap();
        }
    }
    formats::write_text(out, &text)?;
    let mut msg = format!("retrieved top {k} for {} queries\n", enc.codes.len());
    if truncated {
        writeln!(msg, "warning: database holds fewer than {k} entries").unwrap();
    }
    Ok(msg)
}

/// Predictions keyed by query id: row index in image mode, owner image in
/// patch mode.
fn predict(inp: &Inputs, model: &Model, db: &CodeDatabase, enc: &Encoded) -> Result<Vec<(u64, Prediction)>> {
    match model.mode {
        Mode::Image => {
            let mut out = Vec::with_capacity(enc.codes.len());
            match inp.rule {
                Rule::Knn => {
                    let k = k_of(inp)?;
                    let metrics = Metrics::build(model, inp.metric);
                    for (q, code) in enc.codes.iter().enumerate() {
                        out.push((q as u64, knn_classify(db, metrics.metric(), code, k)?));
                    }
                }
                Rule::I2c => {
                    let metrics = class_metrics(&model.weights);
                    for (q, code) in enc.codes.iter().enumerate() {
                        out.push((q as u64, i2c_with_metrics(db, &metrics, code)?));
                    }
                }
            }
            Ok(out)
        }
        Mode::Patch => {
            if inp.rule == Rule::I2c {
                return Err(CliError::Usage("the i2c rule needs an image-mode model".into()));
            }
            let metric = shared_metric(model);
            let mut groups: BTreeMap<usize, Vec<BinaryCode>> = BTreeMap::new();
            for (code, &g) in enc.codes.iter().zip(&enc.group) {
                groups.entry(g).or_default().push(code.clone());
            }
            groups
                .into_iter()
                .map(|(g, patches)| Ok((g as u64, nbnn_classify(db, &metric, &patches)?)))
                .collect()
        }
    }
}

pub fn classify(inp: &Inputs) -> Result<String> {
    let model = load_model(inp)?;
    let db = formats::read_db(required(&inp.db, "db")?)?;
    check_db(&model, &db)?;
    let out = required(&inp.out, "out")?;
    let enc = encode_features(&model, required(&inp.features, "features")?)?;
    let preds = predict(inp, &model, &db, &enc)?;
    let rows: Vec<(u64, Label, f64)> = preds.iter().map(|(q, p)| (*q, p.label, p.score)).collect();
    formats::write_text(out, &formats::format_predictions(&rows))?;
    Ok(format!("classified {} queries\n", rows.len()))
}

/// Accuracy and precision@k of a query set against a code database.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub queries: usize,
    pub accuracy: f64,
    pub k: usize,
    pub precision_at_k: f64,
}

pub fn evaluate(inp: &Inputs) -> Result<EvalReport> {
    let model = load_model(inp)?;
    let db = formats::read_db(required(&inp.db, "db")?)?;
    check_db(&model, &db)?;
    let k = k_of(inp)?;
    let enc = encode_features(&model, required(&inp.features, "features")?)?;
    let labels = formats::read_labels(required(&inp.labels, "labels")?)?;
    let known = db.labels();
    let label_of = |g: usize| -> Result<Label> {
        let l = *labels.get(g).ok_or_else(|| {
            CliError::Data(format!("no label for query {g}; the labels file has {} lines", labels.len()))
        })?;
        if known.binary_search(&l).is_err() {
            return Err(CliError::Data(format!("query label {l} does not occur in the database")));
        }
        Ok(l)
    };
    if model.mode == Mode::Image && labels.len() != enc.codes.len() {
        return Err(CliError::Data(format!(
            "{} labels for {} queries",
            labels.len(),
            enc.codes.len()
        )));
    }
    if enc.codes.is_empty() {
        return Err(CliError::Data("no queries".into()));
    }

    let preds = predict(inp, &model, &db, &enc)?;
    let mut correct = 0;
    for (q, p) in &preds {
        if p.label == label_of(*q as usize)? {
            correct += 1;
        }
    }

    let metrics = Metrics::build(&model, inp.metric);
    let db_labels: BTreeMap<u64, Label> = db.entries().iter().map(|e| (e.id, e.label)).collect();
    let mut precision = 0.0;
    for (code, &g) in enc.codes.iter().zip(&enc.group) {
        let want = label_of(g)?;
        let hits = top_k(&db, metrics.metric(), code, k)?.hits;
        let same = hits.iter().filter(|(id, _)| db_labels[id] == want).count();
        precision += same as f64 / hits.len() as f64;
    }
    Ok(EvalReport {
        queries: preds.len(),
        accuracy: correct as f64 / preds.len() as f64,
        k,
        precision_at_k: precision / enc.codes.len() as f64,
    })
}

pub fn eval(inp: &Inputs) -> Result<String> {
    let r = evaluate(inp)?;
    let text = format!(
        "metric,value\nqueries,{}\naccuracy,{}\nprecision@{},{}\n",
        r.queries, r.accuracy, r.k, r.precision_at_k
    );
    if let Some(out) = &inp.out {
        formats::write_text(out, &text)?;
    }
    Ok(text)
}

/// Runs the weak-learner gradient check against `gradient`.
pub fn gradcheck_with<G>(cfg: &GradCheckConfig, gradient: G) -> Result<String>
where
    G: FnMut(&TripletProblem<'_>, &HashFunction, &DualState, Label) -> cbid_core::Result<(Vec<f64>, f64)>,
{
    let r = gradient_check_with(cfg, gradient)?;
    if !r.passed {
        return Err(CliError::CheckFailed {
            max_rel_error: r.max_rel_error,
            trials: r.trials,
        });
    }
    Ok(format!(
        "gradcheck passed: {} trials, max relative error {:e} (tolerance {:e})\n",
        r.trials, r.max_rel_error, cfg.tolerance
    ))
}

pub fn gradcheck(inp: &Inputs) -> Result<String> {
    let cfg = Config::load(inp.config.as_deref())?.with_seed(inp.seed);
    gradcheck_with(&cfg.gradcheck, weak_gradient)
}
