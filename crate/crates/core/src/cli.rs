//! Command-line front end. `run` returns the process exit code: 0 on
//! success, 1 on runtime or I/O failure, 2 on usage errors.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{
    classwise_report, match_detections, mean_ap, per_class_ap, relative_saving, ApVariant, EvalDetection,
    LearningCurve, MatchResult, DEFAULT_IOU_THRESHOLD, DIFFICULT_AP_THRESHOLD,
};
use crate::records::{load_class_names, ParseOptions, Pool, DEFAULT_CONFIDENCE_FLOOR};
use crate::report;
use crate::scoring::{read_scores_csv, score_records, write_scores_csv, Method, MethodName};
use crate::selection::{
    overlap_matrix, read_history, write_history, CampaignState, InitialLabeled, RoundRecord, UndefinedPlacement,
};
use crate::sim::{
    generate_world, run_campaign, simulate_detections, Calibration, DetectorState, ExperimentConfig, SimOptions,
    SynthWorldConfig,
};

/// Environment variable holding the default worker-thread count.
pub const WORKERS_ENV: &str = "DETAL_WORKERS";

#[derive(Debug, Parser)]
#[command(name = "detal", version, about = "Active learning for object detection")]
pub struct Cli {
    /// Worker threads for parallel scoring and simulation (default: $DETAL_WORKERS, else all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score every image of a pool file under one method.
    Score(ScoreArgs),
    /// Move the top-scoring images of a score file into the labeled set.
    Select(SelectArgs),
    /// Run a multi-round selection campaign on real pools or the simulator.
    Campaign(CampaignArgs),
    /// Emit a synthetic pool file from a simulator config.
    Simulate(SimulateArgs),
    /// Per-class AP and mAP of a pool's reference detections against its ground truth.
    Eval(EvalArgs),
    /// Pairwise overlap of the images different campaigns selected in one round.
    Overlap(OverlapArgs),
    /// Relative label saving, charts and class-wise difficulty analysis.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Args)]
pub struct MethodArgs {
    /// Scoring method: r, c, ls, ls_c, lt_c, lt_c_gt, 3in1, lt_minabs_diff, lt_wsum_j, lt_wsum_t.
    #[arg(long, value_parser = parse_method)]
    pub method: MethodName,
    /// Weight of stability in LS+C.
    #[arg(long = "lambda", default_value_t = 1.0)]
    pub lambda: f64,
    /// Weight of stability in 3in1.
    #[arg(long = "lambda-ls", default_value_t = 1.0)]
    pub lambda_ls: f64,
    /// Weight of tightness in 3in1.
    #[arg(long = "lambda-lt", default_value_t = 1.0)]
    pub lambda_lt: f64,
}

impl MethodArgs {
    fn method(&self, seed: u64) -> Method {
        Method {
            name: self.method,
            lambda: self.lambda,
            lambda_ls: self.lambda_ls,
            lambda_lt: self.lambda_lt,
            seed,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct IngestArgs {
    /// Drop detections whose highest foreground probability is below this.
    #[arg(long, default_value_t = DEFAULT_CONFIDENCE_FLOOR)]
    pub confidence_floor: f64,
    /// JSON array of class names; fixes the expected number of classes.
    #[arg(long)]
    pub classes: Option<PathBuf>,
}

impl IngestArgs {
    fn options(&self) -> Result<ParseOptions> {
        let num_classes = match &self.classes {
            Some(p) => Some(load_class_names(p)?.len()),
            None => None,
        };
        Ok(ParseOptions {
            confidence_floor: self.confidence_floor,
            num_classes,
        })
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Placement {
    Last,
    First,
}

impl From<Placement> for UndefinedPlacement {
    fn from(p: Placement) -> Self {
        match p {
            Placement::Last => UndefinedPlacement::Last,
            Placement::First => UndefinedPlacement::First,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ApChoice {
    Prefix,
    Interpolated,
}

impl From<ApChoice> for ApVariant {
    fn from(a: ApChoice) -> Self {
        match a {
            ApChoice::Prefix => ApVariant::PrefixPrecision,
            ApChoice::Interpolated => ApVariant::Interpolated,
        }
    }
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub pool: PathBuf,
    #[command(flatten)]
    pub method: MethodArgs,
    /// Seed of the random method.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub ingest: IngestArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    /// Score CSV covering exactly the unlabeled images.
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long)]
    pub batch: usize,
    /// Campaign state JSON from a previous round; a fresh state is built from the scores otherwise.
    #[arg(long)]
    pub state: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "last")]
    pub undefined: Placement,
    /// Where to write the updated state JSON.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CampaignArgs {
    /// Pool file for round 1, or a directory of `pool.round{n}.jsonl` files.
    #[arg(long, conflicts_with = "sim_config", required_unless_present = "sim_config")]
    pub pool: Option<PathBuf>,
    /// Simulator config JSON.
    #[arg(long)]
    pub sim_config: Option<PathBuf>,
    #[command(flatten)]
    pub method: MethodArgs,
    #[arg(long)]
    pub batch: usize,
    #[arg(long)]
    pub rounds: usize,
    /// Size of the random initial labeled set.
    #[arg(long, default_value_t = 0, conflicts_with = "init_ids")]
    pub init: usize,
    /// File with one initial labeled image id per line.
    #[arg(long)]
    pub init_ids: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "last")]
    pub undefined: Placement,
    #[command(flatten)]
    pub ingest: IngestArgs,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub sim_config: PathBuf,
    /// Train the simulated detector on this many random pool images first.
    #[arg(long, default_value_t = 0)]
    pub labeled: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Emit the held-out test split instead of the unlabeled pool.
    #[arg(long)]
    pub test_split: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Pool file with reference detections and ground truth.
    #[arg(long)]
    pub pool: PathBuf,
    #[arg(long, default_value_t = DEFAULT_IOU_THRESHOLD)]
    pub iou: f64,
    #[arg(long, value_enum, default_value = "interpolated")]
    pub ap: ApChoice,
    /// Row label in the output.
    #[arg(long, default_value = "eval")]
    pub name: String,
    #[command(flatten)]
    pub ingest: IngestArgs,
    /// Per-class AP CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct OverlapArgs {
    /// History JSONL files, one or more.
    #[arg(long, num_args = 1.., required = true)]
    pub history: Vec<PathBuf>,
    /// Round whose selections are compared.
    #[arg(long, default_value_t = 1)]
    pub round: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Curve CSV files (`method,labels,map`).
    #[arg(long, num_args = 1.., required = true)]
    pub curves: Vec<PathBuf>,
    /// Passive baseline method name.
    #[arg(long)]
    pub baseline: String,
    /// Per-class AP CSV (`method,class,ap`) for the difficulty analysis.
    #[arg(long)]
    pub class_ap: Option<PathBuf>,
    #[arg(long, default_value_t = DIFFICULT_AP_THRESHOLD)]
    pub difficult_threshold: f64,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_method(s: &str) -> std::result::Result<MethodName, String> {
    s.parse::<MethodName>().map_err(|e| e.to_string())
}

/// Simulator config file: world, detector calibration and simulation switches.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfigFile {
    pub world: SynthWorldConfig,
    #[serde(default)]
    pub calibration: Calibration,
    #[serde(default)]
    pub sim: SimOptions,
    #[serde(default = "default_iou")]
    pub iou_threshold: f64,
    #[serde(default)]
    pub ap_variant: ApVariant,
}

fn default_iou() -> f64 {
    DEFAULT_IOU_THRESHOLD
}

impl SimConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: SimConfigFile = serde_json::from_str(&text)?;
        cfg.world.validate()?;
        cfg.sim.validate()?;
        Ok(cfg)
    }
}

/// Parses arguments and runs the command, returning the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    if let Err(msg) = validate_flags(&cli.command) {
        eprintln!("error: {msg}");
        return 2;
    }
    configure_workers(cli.workers);
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn validate_flags(cmd: &Command) -> std::result::Result<(), String> {
    let weights = |m: &MethodArgs| {
        if [m.lambda, m.lambda_ls, m.lambda_lt].iter().all(|w| w.is_finite()) {
            Ok(())
        } else {
            Err("weights must be finite".to_string())
        }
    };
    let floor = |i: &IngestArgs| {
        if (0.0..=1.0).contains(&i.confidence_floor) {
            Ok(())
        } else {
            Err("--confidence-floor must lie in [0, 1]".to_string())
        }
    };
    match cmd {
        Command::Score(a) => {
            weights(&a.method)?;
            floor(&a.ingest)
        }
        Command::Campaign(a) => {
            weights(&a.method)?;
            floor(&a.ingest)?;
            if a.batch == 0 && a.rounds > 0 {
                return Err("--batch must be positive".into());
            }
            Ok(())
        }
        Command::Eval(a) => {
            floor(&a.ingest)?;
            if !(0.0 < a.iou && a.iou < 1.0) {
                return Err("--iou must lie in (0, 1)".into());
            }
            Ok(())
        }
        Command::Overlap(a) if a.round == 0 => Err("--round counts from 1".into()),
        _ => Ok(()),
    }
}

fn configure_workers(flag: Option<usize>) {
    let n = flag.or_else(|| std::env::var(WORKERS_ENV).ok().and_then(|v| v.parse().ok()));
    if let Some(n) = n.filter(|n| *n > 0) {
        // Ignore the error if a pool was already built in this process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Score(a) => cmd_score(a),
        Command::Select(a) => cmd_select(a),
        Command::Campaign(a) => cmd_campaign(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Overlap(a) => cmd_overlap(a),
        Command::Report(a) => cmd_report(a),
    }
}

fn create(path: &Path) -> Result<fs::File> {
    fs::File::create(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn load_pool(path: &Path, ingest: &IngestArgs) -> Result<Pool> {
    let pool = Pool::load(path, &ingest.options()?)?;
    for w in &pool.warnings {
        eprintln!("warning: {w}");
    }
    Ok(pool)
}

fn warn_undefined(method: MethodName, undefined: usize, total: usize) {
    if undefined == 0 {
        return;
    }
    let why = if method.needs_ground_truth() {
        "records lack ground truth"
    } else if method.needs_noise() && method.needs_proposals() {
        "records lack noisy passes or proposal links"
    } else if method.needs_noise() {
        "records lack noisy passes"
    } else if method.needs_proposals() {
        "detections lack proposal links"
    } else {
        "images have no detections"
    };
    eprintln!("warning: {undefined} of {total} images have no defined {method} score ({why})");
}

fn cmd_score(a: ScoreArgs) -> Result<()> {
    let pool = load_pool(&a.pool, &a.ingest)?;
    let scores = score_records(&a.method.method(a.seed), &pool.records);
    warn_undefined(
        a.method.method,
        scores.iter().filter(|s| !s.defined()).count(),
        scores.len(),
    );
    write_scores_csv(&scores, create(&a.out)?)
}

fn cmd_select(a: SelectArgs) -> Result<()> {
    let text = fs::read(&a.scores).map_err(|e| Error::io(&a.scores, e))?;
    let scores = read_scores_csv(&text[..])?;
    let state = match &a.state {
        Some(p) => {
            let t = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str::<CampaignState>(&t)?
        }
        None => {
            let ids: Vec<String> = scores.iter().map(|s| s.image_id.clone()).collect();
            CampaignState::new(&ids, &[])?
        }
    };
    let (next, selected) = state.select_round(&scores, a.batch, a.undefined.into())?;
    write_text(&a.out, &(serde_json::to_string_pretty(&next)? + "\n"))?;
    for id in selected {
        println!("{id}");
    }
    Ok(())
}

fn read_id_list(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect())
}

/// Pool path for round `n` (1-based) under the `pool.round{n}.jsonl` scheme.
pub fn round_pool_path(base: &Path, n: usize) -> PathBuf {
    let name = format!("pool.round{n}.jsonl");
    if base.is_dir() {
        base.join(name)
    } else if n == 1 {
        base.to_path_buf()
    } else {
        base.parent().unwrap_or(Path::new(".")).join(name)
    }
}

fn cmd_campaign(a: CampaignArgs) -> Result<()> {
    fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let initial = match &a.init_ids {
        Some(p) => InitialLabeled::Explicit(read_id_list(p)?),
        None => InitialLabeled::Random {
            count: a.init,
            seed: a.seed,
        },
    };
    let method = a.method.method(0);
    match (&a.sim_config, &a.pool) {
        (Some(cfg_path), _) => campaign_sim(&a, cfg_path, method, initial),
        (None, Some(pool)) => campaign_real(&a, pool, method.with_seed(a.seed), initial),
        (None, None) => Err(Error::Config("either --pool or --sim-config is required".into())),
    }
}

fn campaign_sim(a: &CampaignArgs, cfg_path: &Path, method: Method, initial: InitialLabeled) -> Result<()> {
    let file = SimConfigFile::load(cfg_path)?;
    let world = generate_world(&file.world)?;
    if matches!(initial, InitialLabeled::Explicit(_)) {
        return Err(Error::Config(
            "simulated campaigns draw the initial set from --init and --seed".into(),
        ));
    }
    let cfg = ExperimentConfig {
        methods: vec![method],
        initial: initial.len(),
        batch_size: a.batch,
        rounds: a.rounds,
        seeds: vec![a.seed],
        calibration: file.calibration,
        sim: file.sim,
        iou_threshold: file.iou_threshold,
        ap_variant: file.ap_variant,
        undefined: a.undefined.into(),
    };
    cfg.validate(world.pool.len())?;
    let run = run_campaign(&world, &method, &cfg, a.seed)?;
    write_history(&run.history, create(&a.out.join("history.jsonl"))?)?;
    report::write_curves_csv(std::slice::from_ref(&run.curve), create(&a.out.join("curves.csv"))?)?;
    report::write_class_ap_csv(
        &[(method.name.to_string(), run.per_class_ap.clone())],
        create(&a.out.join("class_ap.csv"))?,
    )?;
    if let Some(m) = run.curve.final_map() {
        println!("{}: final mAP {m:.6} after {} rounds", method.name, run.history.len());
    }
    Ok(())
}

fn campaign_real(a: &CampaignArgs, base: &Path, method: Method, initial: InitialLabeled) -> Result<()> {
    // Check every round's pool exists before doing any work.
    for n in 1..=a.rounds {
        let p = round_pool_path(base, n);
        if !p.is_file() {
            return Err(Error::Config(format!(
                "missing pool for round {n}: expected {}",
                p.display()
            )));
        }
    }
    let mut state: Option<CampaignState> = None;
    let opts = a.ingest.options()?;
    for n in 1..=a.rounds {
        let path = round_pool_path(base, n);
        let pool = Pool::load(&path, &opts)?;
        for w in &pool.warnings {
            eprintln!("warning: {w}");
        }
        let current = match state.take() {
            Some(s) => s,
            None => {
                let ids: Vec<String> = pool.records.iter().map(|r| r.image_id.clone()).collect();
                let cfg = crate::selection::CampaignConfig {
                    method,
                    initial: initial.clone(),
                    batch_size: a.batch,
                    rounds: a.rounds,
                    undefined: a.undefined.into(),
                };
                cfg.validate(ids.len())?;
                CampaignState::new(&ids, &initial.resolve(&ids)?)?
            }
        };
        let records: Vec<_> = pool
            .records
            .into_iter()
            .filter(|r| current.unlabeled.contains(&r.image_id))
            .collect();
        if records.len() != current.unlabeled.len() {
            return Err(Error::Selection(format!(
                "{} covers {} of {} unlabeled images",
                path.display(),
                records.len(),
                current.unlabeled.len()
            )));
        }
        let scores = score_records(&method, &records);
        warn_undefined(
            method.name,
            scores.iter().filter(|s| !s.defined()).count(),
            scores.len(),
        );
        let (next, _) = current.select_round(&scores, a.batch, a.undefined.into())?;
        state = Some(next);
    }
    let history: Vec<RoundRecord> = state.as_ref().map(|s| s.history.clone()).unwrap_or_default();
    write_history(&history, create(&a.out.join("history.jsonl"))?)?;
    if let Some(s) = &state {
        write_text(&a.out.join("state.json"), &(serde_json::to_string_pretty(s)? + "\n"))?;
    }
    eprintln!("note: real-pool campaigns write selections only; evaluate retrained detectors with `eval`");
    Ok(())
}

fn cmd_simulate(a: SimulateArgs) -> Result<()> {
    let file = SimConfigFile::load(&a.sim_config)?;
    let world = generate_world(&file.world)?;
    let pool_ids = world.pool_ids();
    let labeled = InitialLabeled::Random {
        count: a.labeled,
        seed: a.seed,
    }
    .resolve(&pool_ids)?;
    let state = DetectorState::new(file.world.difficulty.clone())?
        .train_update(labeled.iter().filter_map(|id| world.image(id)))?;
    let images = if a.test_split { &world.test } else { &world.pool };
    let mut out = String::new();
    for img in images.iter().filter(|i| !state.labeled().contains(&i.id)) {
        let r = simulate_detections(&state, img, &file.calibration, &file.sim, &[a.seed, 0]);
        out.push_str(&r.to_json_line());
        out.push('\n');
    }
    write_text(&a.out, &out)
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let pool = load_pool(&a.pool, &a.ingest)?;
    let mut total = MatchResult::default();
    for r in &pool.records {
        let gts = r
            .ground_truth
            .as_ref()
            .ok_or_else(|| Error::Evaluation(format!("record `{}` has no ground truth", r.image_id)))?;
        let dets: Vec<EvalDetection> = r.reference.iter().map(EvalDetection::from).collect();
        total.merge(match_detections(&dets, gts, a.iou));
    }
    let aps = per_class_ap(&total, a.ap.into());
    report::write_class_ap_csv(&[(a.name.clone(), aps.clone())], create(&a.out)?)?;
    match mean_ap(&aps) {
        Some(m) => println!("mAP@{:.2}: {m:.6} over {} classes", a.iou, aps.len()),
        None => println!("mAP undefined: no ground-truth objects"),
    }
    Ok(())
}

fn cmd_overlap(a: OverlapArgs) -> Result<()> {
    let mut selections: Vec<(String, Vec<String>)> = Vec::new();
    for path in &a.history {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let history = read_history(std::io::BufReader::new(file))?;
        let rec = history
            .iter()
            .find(|r| r.round == a.round)
            .ok_or_else(|| Error::Selection(format!("{} has no round {}", path.display(), a.round)))?;
        let mut name = rec.method.clone();
        if selections.iter().any(|(n, _)| *n == name) {
            name = format!("{name}@{}", path.display());
        }
        selections.push((name, rec.selected.clone()));
    }
    let matrix = overlap_matrix(&selections)?;
    let mut w = csv::Writer::from_writer(create(&a.out)?);
    let mut header = vec!["method".to_string()];
    header.extend(selections.iter().map(|(n, _)| n.clone()));
    w.write_record(&header).map_err(|e| Error::Csv(e.to_string()))?;
    for ((name, _), row) in selections.iter().zip(&matrix) {
        let mut rec = vec![name.clone()];
        rec.extend(row.iter().map(|v| format!("{v:.6}")));
        w.write_record(&rec).map_err(|e| Error::Csv(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::Csv(e.to_string()))
}

fn cmd_report(a: ReportArgs) -> Result<()> {
    let mut curves: Vec<LearningCurve> = Vec::new();
    for path in &a.curves {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let parsed = report::read_curves_csv(&bytes[..]).map_err(|e| Error::Csv(format!("{}: {e}", path.display())))?;
        curves.extend(parsed);
    }
    let baseline = curves
        .iter()
        .find(|c| c.method == a.baseline)
        .cloned()
        .ok_or_else(|| Error::Evaluation(format!("baseline curve `{}` not found", a.baseline)))?;
    fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;

    let savings = curves
        .iter()
        .map(|c| relative_saving(&baseline, c))
        .collect::<Result<Vec<_>>>()?;
    report::write_saving_csv(&savings, create(&a.out.join("saving.csv"))?)?;
    report::write_saving_summary_csv(&savings, create(&a.out.join("saving_summary.csv"))?)?;

    let map_series: Vec<(String, Vec<(f64, f64)>)> = curves
        .iter()
        .map(|c| {
            (
                c.method.clone(),
                c.points.iter().map(|(n, m)| (*n as f64, *m)).collect(),
            )
        })
        .collect();
    write_text(
        &a.out.join("map.svg"),
        &report::line_chart_svg("mAP", "labeled images", "mAP", &map_series),
    )?;
    let saving_series: Vec<(String, Vec<(f64, f64)>)> = savings
        .iter()
        .map(|s| {
            (
                s.method.clone(),
                s.points
                    .iter()
                    .filter_map(|p| p.saving.map(|v| (p.labels as f64, v)))
                    .collect(),
            )
        })
        .collect();
    write_text(
        &a.out.join("saving.svg"),
        &report::line_chart_svg(
            "Relative saving of labeled images",
            "labeled images (baseline)",
            "saving",
            &saving_series,
        ),
    )?;

    if let Some(path) = &a.class_ap {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let aps = report::read_class_ap_csv(&bytes[..])?;
        let base = aps
            .get(&a.baseline)
            .ok_or_else(|| Error::Evaluation(format!("no per-class AP for baseline `{}`", a.baseline)))?;
        let reports = aps
            .iter()
            .filter(|(m, _)| **m != a.baseline)
            .map(|(m, ap)| classwise_report(base, ap, a.difficult_threshold).map(|r| (m.clone(), r)))
            .collect::<Result<Vec<_>>>()?;
        report::write_classwise_csv(&reports, create(&a.out.join("classwise.csv"))?)?;
    }
    for s in &savings {
        match s.average {
            Some(v) => println!(
                "{}: average saving {v:.6}{}",
                s.method,
                if s.flagged { " (some points unreached)" } else { "" }
            ),
            None => println!("{}: never reaches the baseline's mAP", s.method),
        }
    }
    Ok(())
}
