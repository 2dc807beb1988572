//! `eegxai` command-line front end.
//!
//! Every subcommand resolves its configuration from defaults, an optional
//! `--config` TOML file and finally explicit flags, then echoes the resolved
//! configuration (seed included) next to its outputs.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::attribution::{attribute_batch, AttributionParams, Method, RelevanceRecord, write_relevance_csv};
use crate::components::{
    aggregate_values, mean_relevance, write_component_csv, ComponentRelevance, ComponentScheme, SchemeKind,
};
use crate::data::{generate_synthetic, load_dataset, save_dataset, stratified_split, Dataset, SynthConfig};
use crate::error::{Error, Result};
use crate::nn::{train, NetworkSpec, TrainConfig};
use crate::perturb::{
    read_metrics_csv, run_protocol, summarize_metrics, write_summary_csv, Direction, EvalSplit,
    ProtocolConfig, RelevanceMode, ScoreKind, SessionMode,
};

#[derive(Parser, Debug)]
#[command(name = "eegxai", version, about = "Attribution and perturbation evaluation for EEG feature classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic multi-session dataset and its ground truth.
    Synth(SynthArgs),
    /// Train the MLP on one session, holding out a test split.
    Train(TrainArgs),
    /// Write relevance maps for a set of samples.
    Explain(ExplainArgs),
    /// Run the perturbation protocol and write curves and metrics.
    Evaluate(EvaluateArgs),
    /// Summarize metric tables from several runs.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
struct Common {
    /// TOML file with defaults for this subcommand; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for every random choice the subcommand makes.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[command(flatten)]
    common: Common,
    /// Samples per class in each session.
    #[arg(long)]
    samples_per_class: Option<usize>,
    /// Number of recording sessions.
    #[arg(long)]
    sessions: Option<usize>,
    /// Features carrying class signal.
    #[arg(long)]
    n_informative: Option<usize>,
    /// Distance between class means on informative features.
    #[arg(long)]
    separation: Option<f64>,
    /// Fraction of informative features whose pattern changes in later sessions.
    #[arg(long)]
    shift: Option<f64>,
    /// Standard deviation of the per-feature noise.
    #[arg(long)]
    noise: Option<f64>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    /// Dataset CSV.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Session the model is trained on.
    #[arg(long)]
    session: Option<u32>,
    /// Fraction of the training session held out for intra-session evaluation.
    #[arg(long)]
    test_fraction: Option<f64>,
    /// Upper bound on training epochs.
    #[arg(long)]
    max_epochs: Option<usize>,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    /// Initial Adam learning rate.
    #[arg(long)]
    learning_rate: Option<f64>,
}

#[derive(Args, Debug)]
struct AttributionArgs {
    /// Attribution methods, comma separated (saliency, guided_bp, lrp_z, integrated_gradients, deeplift, occlusion).
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
    /// Component schemes, comma separated (feature, band, channel).
    #[arg(long, value_delimiter = ',')]
    schemes: Option<Vec<SchemeKind>>,
    /// Integration steps for integrated gradients.
    #[arg(long)]
    ig_steps: Option<usize>,
    /// Stabilizer of the LRP z-rule.
    #[arg(long)]
    lrp_epsilon: Option<f64>,
    /// Rank components by relevance magnitude.
    #[arg(long)]
    abs_relevance: bool,
}

#[derive(Args, Debug)]
struct ExplainArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    attribution: AttributionArgs,
    /// Dataset CSV.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Model JSON written by `train`.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Split file from `train`; its held-out samples are explained.
    #[arg(long)]
    split: Option<PathBuf>,
    /// Explain this session instead of the held-out split.
    #[arg(long)]
    session: Option<u32>,
    /// Cap on explained samples, 0 for all.
    #[arg(long)]
    max_samples: Option<usize>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    attribution: AttributionArgs,
    /// Dataset CSV.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Model JSON written by `train`.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Split file written by `train`.
    #[arg(long)]
    split: Option<PathBuf>,
    /// Session used for inter-session evaluation.
    #[arg(long)]
    inter_session: Option<u32>,
    /// Orderings to evaluate, comma separated (real, presumed).
    #[arg(long, value_delimiter = ',')]
    relevance_modes: Option<Vec<RelevanceMode>>,
    /// Perturbation curves, comma separated (morf, lerf, single_component).
    #[arg(long, value_delimiter = ',')]
    directions: Option<Vec<Direction>>,
    /// Skip the random-ordering baseline.
    #[arg(long)]
    no_random: bool,
    /// Score tracked along the curves (probability or logit).
    #[arg(long)]
    score: Option<ScoreKind>,
    /// Average presumed relevance per predicted class instead of over all classes.
    #[arg(long)]
    presumed_per_class: bool,
    /// Cap on evaluated samples per split, 0 for all.
    #[arg(long)]
    max_eval_samples: Option<usize>,
    /// Cap on training samples averaged for presumed relevance, 0 for all.
    #[arg(long)]
    max_reference_samples: Option<usize>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    #[command(flatten)]
    common: Common,
    /// Metric CSVs produced by `evaluate`.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default)]
struct SynthRun {
    out: Option<PathBuf>,
    #[serde(flatten)]
    generator: SynthConfig,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default)]
struct TrainRun {
    data: Option<PathBuf>,
    out: Option<PathBuf>,
    session: u32,
    test_fraction: f64,
    #[serde(flatten)]
    training: TrainConfig,
}

impl Default for TrainRun {
    fn default() -> Self {
        Self {
            data: None,
            out: None,
            session: 1,
            test_fraction: 0.2,
            training: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default)]
struct ExplainRun {
    data: Option<PathBuf>,
    model: Option<PathBuf>,
    split: Option<PathBuf>,
    out: Option<PathBuf>,
    session: Option<u32>,
    max_samples: usize,
    methods: Vec<Method>,
    schemes: Vec<SchemeKind>,
    abs_relevance: bool,
    seed: u64,
    attribution: AttributionParams,
}

impl Default for ExplainRun {
    fn default() -> Self {
        Self {
            data: None,
            model: None,
            split: None,
            out: None,
            session: None,
            max_samples: 100,
            methods: Method::EXPLAINERS.to_vec(),
            schemes: SchemeKind::ALL.to_vec(),
            abs_relevance: false,
            seed: 0,
            attribution: AttributionParams::default(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default)]
struct EvaluateRun {
    data: Option<PathBuf>,
    model: Option<PathBuf>,
    split: Option<PathBuf>,
    out: Option<PathBuf>,
    inter_session: u32,
    #[serde(flatten)]
    protocol: ProtocolConfig,
}

impl Default for EvaluateRun {
    fn default() -> Self {
        Self {
            data: None,
            model: None,
            split: None,
            out: None,
            inter_session: 2,
            protocol: ProtocolConfig::default(),
        }
    }
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default)]
struct ReportRun {
    out: Option<PathBuf>,
    seed: u64,
    inputs: Vec<PathBuf>,
}

/// Held-out split of the training session, in dataset row indices.
#[derive(Debug, Serialize, Deserialize)]
struct SplitFile {
    session: u32,
    test_fraction: f64,
    seed: u64,
    train_indices: Vec<usize>,
    test_indices: Vec<usize>,
}

fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| {
        Error::InvalidConfig(format!("{}: {}", path.display(), e.message()))
    })
}

fn echo_config<T: Serialize>(out: &Path, command: &str, config: &T) -> Result<()> {
    let text = toml::to_string(config).map_err(|e| Error::InvalidConfig(format!("cannot serialize config: {e}")))?;
    let path = out.join(format!("{command}_config.toml"));
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

fn set<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

fn required<'a>(value: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    let path = value
        .as_deref()
        .ok_or_else(|| Error::InvalidConfig(format!("missing --{what}")))?;
    if !path.exists() {
        return Err(Error::InvalidConfig(format!("--{what} {} does not exist", path.display())));
    }
    Ok(path)
}

fn output_dir(out: &Option<PathBuf>) -> Result<PathBuf> {
    let dir = out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

fn load_split(path: &Path) -> Result<SplitFile> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn checked_subset(data: &Dataset, indices: &[usize], what: &str) -> Result<Dataset> {
    if let Some(&bad) = indices.iter().find(|&&i| i >= data.len()) {
        return Err(Error::InvalidConfig(format!(
            "{what} index {bad} outside a dataset of {} samples",
            data.len()
        )));
    }
    Ok(data.subset(indices))
}

fn apply_attribution_flags(
    args: AttributionArgs,
    methods: &mut Vec<Method>,
    schemes: &mut Vec<SchemeKind>,
    params: &mut AttributionParams,
    abs: &mut bool,
) {
    set(methods, args.methods);
    set(schemes, args.schemes);
    set(&mut params.ig_steps, args.ig_steps);
    set(&mut params.lrp_epsilon, args.lrp_epsilon);
    *abs |= args.abs_relevance;
}

fn synth(args: SynthArgs) -> Result<()> {
    let mut run: SynthRun = load_config(args.common.config.as_deref())?;
    let g = &mut run.generator;
    set(&mut run.out, args.common.out.map(Some));
    set(&mut g.seed, args.common.seed);
    set(&mut g.samples_per_class_per_session, args.samples_per_class);
    set(&mut g.n_sessions, args.sessions);
    set(&mut g.n_informative, args.n_informative);
    set(&mut g.class_separation, args.separation);
    set(&mut g.session_shift, args.shift);
    set(&mut g.noise_sigma, args.noise);

    let out = output_dir(&run.out)?;
    let (dataset, truth) = generate_synthetic(&run.generator)?;
    save_dataset(&dataset, out.join("dataset.csv"))?;
    truth.save(out.join("ground_truth.json"))?;
    echo_config(&out, "synth", &run)
}

fn train_cmd(args: TrainArgs) -> Result<()> {
    let mut run: TrainRun = load_config(args.common.config.as_deref())?;
    set(&mut run.out, args.common.out.map(Some));
    set(&mut run.data, args.data.map(Some));
    set(&mut run.session, args.session);
    set(&mut run.test_fraction, args.test_fraction);
    set(&mut run.training.seed, args.common.seed);
    set(&mut run.training.max_epochs, args.max_epochs);
    set(&mut run.training.hidden_layers, args.hidden);
    set(&mut run.training.learning_rate, args.learning_rate);

    let data = load_dataset(required(&run.data, "data")?)?;
    let out = output_dir(&run.out)?;
    let in_session: Vec<usize> = (0..data.len())
        .filter(|&i| data.samples()[i].session == run.session)
        .collect();
    if in_session.is_empty() {
        return Err(Error::InvalidConfig(format!("dataset has no session {}", run.session)));
    }
    let session = data.subset(&in_session);
    let (fit_idx, test_idx) = stratified_split(
        &session.labels(),
        session.n_classes(),
        run.test_fraction,
        run.training.seed,
    )?;
    // session-local positions back to dataset rows
    let fit_rows: Vec<usize> = fit_idx.iter().map(|&i| in_session[i]).collect();
    let test_rows: Vec<usize> = test_idx.iter().map(|&i| in_session[i]).collect();

    let (net, report) = train(&data.subset(&fit_rows), &run.training)?;
    net.save(out.join("model.json"))?;
    let report_path = out.join("train_report.json");
    fs::write(&report_path, serde_json::to_string_pretty(&report)? + "\n")
        .map_err(|e| Error::io(&report_path, e))?;
    let split = SplitFile {
        session: run.session,
        test_fraction: run.test_fraction,
        seed: run.training.seed,
        train_indices: fit_rows,
        test_indices: test_rows,
    };
    let split_path = out.join("split.json");
    fs::write(&split_path, serde_json::to_string(&split)? + "\n").map_err(|e| Error::io(&split_path, e))?;
    echo_config(&out, "train", &run)
}

fn explain(args: ExplainArgs) -> Result<()> {
    let mut run: ExplainRun = load_config(args.common.config.as_deref())?;
    set(&mut run.out, args.common.out.map(Some));
    set(&mut run.seed, args.common.seed);
    set(&mut run.data, args.data.map(Some));
    set(&mut run.model, args.model.map(Some));
    set(&mut run.split, args.split.map(Some));
    set(&mut run.session, args.session.map(Some));
    set(&mut run.max_samples, args.max_samples);
    apply_attribution_flags(
        args.attribution,
        &mut run.methods,
        &mut run.schemes,
        &mut run.attribution,
        &mut run.abs_relevance,
    );

    let data = load_dataset(required(&run.data, "data")?)?;
    let net = NetworkSpec::load(required(&run.model, "model")?)?;
    let out = output_dir(&run.out)?;

    let mut rows: Vec<usize> = match (run.session, &run.split) {
        (Some(s), _) => (0..data.len()).filter(|&i| data.samples()[i].session == s).collect(),
        (None, Some(_)) => load_split(required(&run.split, "split")?)?.test_indices,
        (None, None) => (0..data.len()).collect(),
    };
    checked_subset(&data, &rows, "split")?;
    if run.max_samples > 0 && rows.len() > run.max_samples {
        rows.shuffle(&mut ChaCha8Rng::seed_from_u64(run.seed));
        rows.truncate(run.max_samples);
        rows.sort_unstable();
    }
    if rows.is_empty() {
        return Err(Error::EmptyDataset("no samples selected for explanation".into()));
    }

    let mut inputs = Vec::with_capacity(rows.len());
    for &i in &rows {
        let x = data.samples()[i].features.as_slice();
        inputs.push((x, net.predict(x)?.0));
    }
    let schemes: Vec<ComponentScheme> = run
        .schemes
        .iter()
        .map(|&k| ComponentScheme::new(k, data.layout()))
        .collect();
    let mut records = Vec::new();
    for &method in &run.methods {
        let maps = attribute_batch(&net, &inputs, method, &run.attribution)?;
        let mut per_scheme = Vec::new();
        for scheme in &schemes {
            let scores = maps
                .iter()
                .map(|m| {
                    if run.abs_relevance {
                        let v: Vec<f64> = m.values.iter().map(|x| x.abs()).collect();
                        aggregate_values(&v, scheme)
                    } else {
                        aggregate_values(&m.values, scheme)
                    }
                })
                .collect::<Result<Vec<ComponentRelevance>>>()?;
            per_scheme.push(mean_relevance(&scores)?);
        }
        write_component_csv(out.join(format!("components_{}.csv", method.name())), &per_scheme)?;
        records.extend(rows.iter().zip(maps).map(|(&sample_id, map)| RelevanceRecord { sample_id, map }));
    }
    write_relevance_csv(out.join("relevance.csv"), &records)?;
    echo_config(&out, "explain", &run)
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let mut run: EvaluateRun = load_config(args.common.config.as_deref())?;
    let p = &mut run.protocol;
    set(&mut run.out, args.common.out.map(Some));
    set(&mut p.seed, args.common.seed);
    set(&mut run.data, args.data.map(Some));
    set(&mut run.model, args.model.map(Some));
    set(&mut run.split, args.split.map(Some));
    set(&mut run.inter_session, args.inter_session);
    set(&mut p.relevance_modes, args.relevance_modes);
    set(&mut p.directions, args.directions);
    set(&mut p.score, args.score);
    set(&mut p.max_eval_samples, args.max_eval_samples);
    set(&mut p.max_reference_samples, args.max_reference_samples);
    p.include_random &= !args.no_random;
    p.presumed_per_class |= args.presumed_per_class;
    apply_attribution_flags(
        args.attribution,
        &mut p.methods,
        &mut p.schemes,
        &mut p.attribution,
        &mut p.abs_relevance,
    );

    let data = load_dataset(required(&run.data, "data")?)?;
    let net = NetworkSpec::load(required(&run.model, "model")?)?;
    let split = load_split(required(&run.split, "split")?)?;
    let out = output_dir(&run.out)?;
    if split.session == run.inter_session {
        return Err(Error::InvalidConfig(format!(
            "inter-session evaluation must use a session other than the training session {}",
            split.session
        )));
    }
    let fit = checked_subset(&data, &split.train_indices, "train")?;
    let intra = checked_subset(&data, &split.test_indices, "test")?;
    let inter = data.session(run.inter_session);
    if inter.is_empty() {
        return Err(Error::InvalidConfig(format!("dataset has no session {}", run.inter_session)));
    }
    let evals = [
        EvalSplit {
            session_mode: SessionMode::Intra,
            data: &intra,
        },
        EvalSplit {
            session_mode: SessionMode::Inter,
            data: &inter,
        },
    ];
    let result = run_protocol(&net, &fit, &evals, &run.protocol)?;
    result.write_curves_csv(out.join("curves.csv"))?;
    result.write_metrics_csv(out.join("metrics.csv"))?;
    echo_config(&out, "evaluate", &run)
}

fn report(args: ReportArgs) -> Result<()> {
    let mut run: ReportRun = load_config(args.common.config.as_deref())?;
    set(&mut run.out, args.common.out.map(Some));
    set(&mut run.seed, args.common.seed);
    run.inputs = args.inputs;
    // the summary must not depend on argument order
    run.inputs.sort();
    run.inputs.dedup();
    let mut rows = Vec::new();
    for path in &run.inputs {
        if !path.exists() {
            return Err(Error::InvalidConfig(format!("{} does not exist", path.display())));
        }
        rows.extend(read_metrics_csv(path)?);
    }
    let out = output_dir(&run.out)?;
    write_summary_csv(out.join("summary.csv"), &summarize_metrics(&rows))?;
    echo_config(&out, "report", &run)
}

/// Runs the CLI on `args` (including the program name) and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let rendered = e.to_string();
            let first = rendered.lines().next().unwrap_or("usage error");
            eprintln!("{first} (try --help)");
            return 2;
        }
    };
    let outcome = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Train(a) => train_cmd(a),
        Command::Explain(a) => explain(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Report(a) => report(a),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            1
        }
    }
}
