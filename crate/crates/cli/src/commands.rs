use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use mter_core::evaluation::{
    bprmf_baseline, eval_content_prediction, eval_recommendation, most_popular_baseline,
    paired_t_test, permutation_test, BprMfConfig, ContentKs, EvalReport, GainKind, PairedTTest,
    PermutationScope, RecommendationEval, Scorer, DEFAULT_KS,
};
use mter_core::ranking::{explain_item, recommend, render_explanation, ExplanationTemplate};
use mter_core::{
    load_lexicon, load_reviews, recursive_filter, relative_bpr_weight, split_corpus,
    train_with_observer, write_lexicon, write_reviews, Dims, IndexedCorpus, Lexicon, LossRecord,
    TrainingTensors,
};

use crate::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use crate::config::RunConfig;

#[derive(Debug, Parser)]
#[command(
    name = "mter",
    version,
    about = "Explainable recommendation from ratings and opinionated reviews"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Filter and split a review file into train/valid/test JSONL files.
    Preprocess(PreprocessArgs),
    /// Filter, split and train; writes a checkpoint directory.
    Train(TrainArgs),
    /// Top-K items for a user.
    Recommend(RecommendArgs),
    /// Feature and phrase explanation of one item for one user.
    Explain(ExplainArgs),
    /// NDCG report on the held-out split, optionally against baselines.
    Evaluate(EvaluateArgs),
    /// Phrase-reuse permutation test on a review file.
    Permtest(PermtestArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Seed for every random choice of the run.
    #[arg(long, env = "MTER_SEED")]
    pub seed: Option<u64>,
    /// Worker threads. All computation runs on one thread, so results do not
    /// depend on this value.
    #[arg(long, env = "MTER_THREADS", default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    pub threads: u32,
}

#[derive(Debug, Args)]
pub struct CorpusInput {
    /// Reviews, one JSON object per line.
    #[arg(long, env = "MTER_REVIEWS")]
    pub reviews: PathBuf,
    /// Sentiment lexicon TSV: feature, opinion, polarity.
    #[arg(long, env = "MTER_LEXICON")]
    pub lexicon: PathBuf,
}

/// Overrides for the flat config file. Each flag also reads `MTER_<NAME>`.
#[derive(Debug, Default, Args)]
pub struct Overrides {
    /// Flat TOML config file.
    #[arg(long, env = "MTER_CONFIG")]
    pub config: Option<PathBuf>,
    #[arg(long, env = "MTER_LAMBDA_B")]
    pub lambda_b: Option<f64>,
    #[arg(long, env = "MTER_LAMBDA_F")]
    pub lambda_f: Option<f64>,
    #[arg(long, env = "MTER_LAMBDA_G")]
    pub lambda_g: Option<f64>,
    #[arg(long, env = "MTER_BATCH_X")]
    pub batch_x: Option<usize>,
    #[arg(long, env = "MTER_BATCH_YU")]
    pub batch_yu: Option<usize>,
    #[arg(long, env = "MTER_BATCH_YI")]
    pub batch_yi: Option<usize>,
    #[arg(long, env = "MTER_N_S_BPR")]
    pub n_s_bpr: Option<usize>,
    #[arg(long, env = "MTER_T_ITER")]
    pub t_iter: Option<usize>,
    #[arg(long, env = "MTER_ETA")]
    pub eta: Option<f64>,
    #[arg(long, env = "MTER_ADA_EPS")]
    pub ada_eps: Option<f64>,
    #[arg(long, env = "MTER_INIT_SCALE")]
    pub init_scale: Option<f64>,
    #[arg(long, env = "MTER_EVAL_INTERVAL")]
    pub eval_interval: Option<usize>,
    /// Latent sizes a,b,c,d.
    #[arg(long, env = "MTER_DIMS", value_delimiter = ',')]
    pub dims: Option<Vec<usize>>,
    #[arg(long, env = "MTER_RATING_MAX")]
    pub rating_max: Option<u32>,
    #[arg(long, env = "MTER_MIN_FEATURE_SUPPORT")]
    pub min_feature_support: Option<usize>,
    #[arg(long, env = "MTER_MIN_REVIEW_TUPLES")]
    pub min_review_tuples: Option<usize>,
    #[arg(long, env = "MTER_MIN_USER_REVIEWS")]
    pub min_user_reviews: Option<usize>,
    #[arg(long, env = "MTER_MIN_ITEM_REVIEWS")]
    pub min_item_reviews: Option<usize>,
    /// Train/valid/test ratios.
    #[arg(long, env = "MTER_SPLIT", value_delimiter = ',')]
    pub split: Option<Vec<f64>>,
}

macro_rules! set {
    ($dst:expr, $src:expr) => {
        if let Some(v) = $src {
            $dst = v;
        }
    };
}

impl Overrides {
    fn resolve(&self) -> anyhow::Result<RunConfig> {
        let mut c = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        let t = &mut c.train;
        set!(t.lambda_b, self.lambda_b);
        set!(t.lambda_f, self.lambda_f);
        set!(t.lambda_g, self.lambda_g);
        set!(t.batch_x, self.batch_x);
        set!(t.batch_yu, self.batch_yu);
        set!(t.batch_yi, self.batch_yi);
        set!(t.n_s_bpr, self.n_s_bpr);
        set!(t.t_iter, self.t_iter);
        set!(t.eta, self.eta);
        set!(t.ada_eps, self.ada_eps);
        set!(t.init_scale, self.init_scale);
        set!(t.eval_interval, self.eval_interval);
        if let Some(d) = &self.dims {
            if d.len() != 4 {
                bail!("--dims needs 4 comma-separated sizes, got {}", d.len());
            }
            t.dims = Dims::new(d[0], d[1], d[2], d[3]);
        }
        set!(c.rating_max, self.rating_max);
        let f = &mut c.filter;
        set!(f.min_feature_support, self.min_feature_support);
        set!(f.min_review_tuples, self.min_review_tuples);
        set!(f.min_user_reviews, self.min_user_reviews);
        set!(f.min_item_reviews, self.min_item_reviews);
        if let Some(s) = &self.split {
            if s.len() != 3 {
                bail!("--split needs 3 comma-separated ratios, got {}", s.len());
            }
            (c.train_ratio, c.valid_ratio, c.test_ratio) = (s[0], s[1], s[2]);
        }
        Ok(c)
    }
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    #[command(flatten)]
    pub input: CorpusInput,
    /// Directory for train.jsonl, valid.jsonl and test.jsonl.
    #[arg(long)]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub overrides: Overrides,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub input: CorpusInput,
    /// Checkpoint directory.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub overrides: Overrides,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct RecommendArgs {
    #[arg(long, env = "MTER_CKPT")]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub user: String,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    /// Features per item in JSON output.
    #[arg(long, default_value_t = 3)]
    pub features: usize,
    /// Phrases per feature in JSON output.
    #[arg(long, default_value_t = 3)]
    pub phrases: usize,
    /// Print the full recommendation with explanations as JSON.
    #[arg(long)]
    pub json: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[arg(long, env = "MTER_CKPT")]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub user: String,
    #[arg(long)]
    pub item: String,
    #[arg(long, default_value_t = 3)]
    pub features: usize,
    #[arg(long, default_value_t = 3)]
    pub phrases: usize,
    #[arg(long)]
    pub json: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Valid,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GainArg {
    Exponential,
    Linear,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long, env = "MTER_CKPT")]
    pub ckpt: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitName::Test)]
    pub split: SplitName,
    /// Cut-offs for recommendation NDCG.
    #[arg(long, env = "MTER_K_LIST", value_delimiter = ',', default_values_t = DEFAULT_KS.to_vec())]
    pub k_list: Vec<usize>,
    #[arg(long, value_enum, default_value_t = GainArg::Exponential)]
    pub gain: GainArg,
    #[arg(long, default_value_t = ContentKs::default().feature_k)]
    pub feature_k: usize,
    #[arg(long, default_value_t = ContentKs::default().opinion_k)]
    pub opinion_k: usize,
    /// Also evaluate MostPopular and BPRMF with paired t-tests against MTER.
    #[arg(long)]
    pub baselines: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScopeArg {
    User,
    Item,
}

#[derive(Debug, Args)]
pub struct PermtestArgs {
    #[command(flatten)]
    pub input: CorpusInput,
    #[arg(long, env = "MTER_RATING_MAX", default_value_t = 5)]
    pub rating_max: u32,
    #[arg(long, value_enum, default_value_t = ScopeArg::User)]
    pub scope: ScopeArg,
    #[arg(long, default_value_t = 100)]
    pub n_perm: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

/// Parses `argv` (including the program name) and runs the command.
/// Returns the process exit code: 0 on success, 2 on usage errors, 1 on
/// any other failure.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

pub fn execute(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Preprocess(a) => preprocess(a),
        Command::Train(a) => train(a),
        Command::Recommend(a) => recommend_cmd(a),
        Command::Explain(a) => explain(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Permtest(a) => permtest(a),
    }
}

fn emit_text(text: &str, out: Option<&Path>) -> anyhow::Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| path.display().to_string()),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            Ok(stdout.flush()?)
        }
    }
}

fn emit_json(value: &impl Serialize, out: Option<&Path>) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    emit_text(&text, out)
}

struct Prepared {
    lexicon: Lexicon,
    train: IndexedCorpus,
    valid: IndexedCorpus,
    test: IndexedCorpus,
}

/// Root seed of a run: `--seed`, else the config's seed.
fn root_seed(common: &Common, config: &RunConfig) -> u64 {
    common.seed.unwrap_or(config.train.seed)
}

fn prepare(input: &CorpusInput, config: &RunConfig, split_seed: u64) -> anyhow::Result<Prepared> {
    config.validate()?;
    let lexicon = load_lexicon(&input.lexicon)?;
    let records = load_reviews(&input.reviews, &lexicon, config.rating_max)?;
    let filtered = recursive_filter(&records, &config.filter, config.rating_max)?;
    let (train, valid, test) = split_corpus(&filtered, config.split(), split_seed)?;
    Ok(Prepared {
        lexicon,
        train,
        valid,
        test,
    })
}

#[derive(Serialize)]
struct SplitSizes {
    train: usize,
    valid: usize,
    test: usize,
}

#[derive(Serialize)]
struct CorpusSummary {
    users: usize,
    items: usize,
    features: usize,
    opinions: usize,
    reviews: SplitSizes,
}

impl CorpusSummary {
    fn new(p: &Prepared) -> Self {
        Self {
            users: p.train.m(),
            items: p.train.n(),
            features: p.train.p(),
            opinions: p.train.q(),
            reviews: SplitSizes {
                train: p.train.reviews.len(),
                valid: p.valid.reviews.len(),
                test: p.test.reviews.len(),
            },
        }
    }
}

fn write_splits(dir: &Path, p: &Prepared) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| dir.display().to_string())?;
    for (name, corpus) in [("train", &p.train), ("valid", &p.valid), ("test", &p.test)] {
        write_reviews(dir.join(format!("{name}.jsonl")), &corpus.to_records())?;
    }
    Ok(())
}

fn preprocess(a: PreprocessArgs) -> anyhow::Result<()> {
    let config = a.overrides.resolve()?;
    let p = prepare(&a.input, &config, root_seed(&a.common, &config))?;
    write_splits(&a.out_dir, &p)?;
    emit_json(&CorpusSummary::new(&p), None)
}

#[derive(Serialize)]
struct TrainSummary {
    seed: u64,
    corpus: CorpusSummary,
    phi: f64,
    final_loss: Option<LossRecord>,
}

fn train(a: TrainArgs) -> anyhow::Result<()> {
    let mut config = a.overrides.resolve()?;
    let seed = root_seed(&a.common, &config);
    let mut root = ChaCha8Rng::seed_from_u64(seed);
    let split_seed: u64 = root.random();
    config.train.seed = root.random();
    let p = prepare(&a.input, &config, split_seed)?;
    let tensors = TrainingTensors::from_corpus(&p.train)?;
    let (model, trace) = train_with_observer(&tensors, &config.train, |_, _| {})?;

    save_checkpoint(&a.out, &model, &p.train, &config.train)?;
    write_splits(&a.out, &p)?;
    write_lexicon(a.out.join("lexicon.tsv"), &p.lexicon)?;
    emit_json(&trace, Some(&a.out.join("trace.json")))?;
    emit_json(
        &TrainSummary {
            seed,
            corpus: CorpusSummary::new(&p),
            phi: relative_bpr_weight(&config.train, p.train.m(), p.train.n()),
            final_loss: trace.last().copied(),
        },
        None,
    )
}

/// Checkpoint plus one of its stored splits, indexed with its id maps.
fn load_with_split(dir: &Path, split: &str) -> anyhow::Result<(Checkpoint, IndexedCorpus)> {
    let ck = load_checkpoint(dir)?;
    let corpus = load_split(dir, &ck, split)?;
    Ok((ck, corpus))
}

fn load_split(dir: &Path, ck: &Checkpoint, split: &str) -> anyhow::Result<IndexedCorpus> {
    let lexicon = load_lexicon(dir.join("lexicon.tsv"))?;
    let records = load_reviews(
        dir.join(format!("{split}.jsonl")),
        &lexicon,
        ck.manifest.rating_max,
    )?;
    Ok(ck.manifest.corpus().index_records(&records)?)
}

fn lookup(corpus: &IndexedCorpus, user: &str) -> anyhow::Result<usize> {
    match corpus.users.get(user) {
        Some(i) => Ok(i),
        None => bail!("unknown user {user:?}"),
    }
}

fn recommend_cmd(a: RecommendArgs) -> anyhow::Result<()> {
    if a.k == 0 {
        bail!("--k must be >= 1");
    }
    let (ck, train) = load_with_split(&a.ckpt, "train")?;
    let user = lookup(&train, &a.user)?;
    let seen = &train.items_by_user()[user];
    let rec = recommend(
        &ck.model,
        &train,
        user,
        seen,
        a.k,
        a.features.max(1),
        a.phrases.max(1),
    )?;
    if a.json {
        return emit_json(&rec, a.out.as_deref());
    }
    let mut text = String::new();
    for (rank, item) in rec.items.iter().enumerate() {
        text.push_str(&format!("{}\t{}\t{:.6}\n", rank + 1, item.item, item.score));
    }
    emit_text(&text, a.out.as_deref())
}

fn explain(a: ExplainArgs) -> anyhow::Result<()> {
    let ck = load_checkpoint(&a.ckpt)?;
    let corpus = ck.manifest.corpus();
    let user = lookup(&corpus, &a.user)?;
    let Some(item) = corpus.items.get(&a.item) else {
        bail!("unknown item {:?}", a.item);
    };
    let features = explain_item(&ck.model, &corpus, user, item, a.features, a.phrases)?;
    if a.json {
        return emit_json(&features, a.out.as_deref());
    }
    let pairs: Vec<(String, Vec<String>)> = features
        .iter()
        .map(|f| {
            (
                f.feature.clone(),
                f.phrases.iter().map(|p| p.phrase.clone()).collect(),
            )
        })
        .collect();
    let mut text = render_explanation(&a.item, &pairs, &ExplanationTemplate::default())?;
    text.push('\n');
    emit_text(&text, a.out.as_deref())
}

#[derive(Debug, Serialize)]
pub struct KTest {
    pub k: usize,
    #[serde(flatten)]
    pub test: PairedTTest,
}

#[derive(Debug, Serialize)]
pub struct BaselineReport {
    pub name: &'static str,
    pub recommendation: RecommendationEval,
    /// Paired t-test of MTER minus baseline per-user NDCG at each K.
    pub mter_vs_baseline: Vec<KTest>,
}

#[derive(Debug, Serialize)]
pub struct EvaluateReport {
    pub split: SplitName,
    pub gain: GainKind,
    #[serde(flatten)]
    pub mter: EvalReport,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub baselines: Vec<BaselineReport>,
}

fn evaluate(a: EvaluateArgs) -> anyhow::Result<()> {
    if a.k_list.is_empty() || a.k_list.contains(&0) {
        bail!("--k-list needs positive cut-offs");
    }
    let gain = match a.gain {
        GainArg::Exponential => GainKind::Exponential,
        GainArg::Linear => GainKind::Linear,
    };
    let (ck, train) = load_with_split(&a.ckpt, "train")?;
    let split = match a.split {
        SplitName::Valid => "valid",
        SplitName::Test => "test",
    };
    let held = load_split(&a.ckpt, &ck, split)?;
    let content_ks = ContentKs {
        feature_k: a.feature_k,
        opinion_k: a.opinion_k,
    };
    let recommendation = eval_recommendation(&ck.model, &train, &held, &a.k_list, gain)?;
    let content = eval_content_prediction(&ck.model, &held, content_ks)?;

    let mut baselines = Vec::new();
    if a.baselines {
        let mut bcfg = BprMfConfig::from_train_config(&ck.manifest.config);
        if let Some(seed) = a.common.seed {
            bcfg.seed = seed;
        }
        let popular = most_popular_baseline(&train);
        let bprmf = bprmf_baseline(&train, &bcfg)?;
        let scorers: [(&'static str, &dyn Scorer); 2] =
            [("MostPopular", &popular), ("BPRMF", &bprmf)];
        for (name, scorer) in scorers {
            let eval = eval_recommendation(scorer, &train, &held, &a.k_list, gain)?;
            let tests = a
                .k_list
                .iter()
                .map(|&k| {
                    let ours = recommendation.user_values(k).expect("k evaluated");
                    let theirs = eval.user_values(k).expect("k evaluated");
                    Ok(KTest {
                        k,
                        test: paired_t_test(&ours, &theirs)?,
                    })
                })
                .collect::<mter_core::Result<_>>()?;
            baselines.push(BaselineReport {
                name,
                recommendation: eval,
                mter_vs_baseline: tests,
            });
        }
    }
    emit_json(
        &EvaluateReport {
            split: a.split,
            gain,
            mter: EvalReport {
                recommendation,
                content,
            },
            baselines,
        },
        a.out.as_deref(),
    )
}

fn permtest(a: PermtestArgs) -> anyhow::Result<()> {
    if a.n_perm == 0 {
        bail!("--n-perm must be >= 1");
    }
    let lexicon = load_lexicon(&a.input.lexicon)?;
    let records = load_reviews(&a.input.reviews, &lexicon, a.rating_max)?;
    let corpus = IndexedCorpus::from_records(&records, a.rating_max);
    let scope = match a.scope {
        ScopeArg::User => PermutationScope::User,
        ScopeArg::Item => PermutationScope::Item,
    };
    let report = permutation_test(&corpus, scope, a.n_perm, a.common.seed.unwrap_or(0))?;
    emit_json(&report, a.out.as_deref())
}
