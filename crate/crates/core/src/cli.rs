//! Command-line interface: corpus preparation, training, parsing,
//! evaluation, lexicon maintenance, slot disambiguation, and the
//! unseen-value simulation harness.
//!
//! Every option can also come from a flat `key=value` config file
//! (`--config`); explicit flags win. Each run prints its resolved
//! configuration, seed included, before doing any work.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use crate::datasim::{
    generate_modified_test, modifications_tsv, scenario_run, sweep_modification_rate, Filter,
    NewValueCatalog, Scenario, SweepEntry,
};
use crate::disambiguator::{
    disamb_accuracy, filter_occurrences, gen_examples, load_examples, oracle_filter,
    save_examples, train_disamb, DisambModel, DisambTrainConfig, MarkerVocab,
};
use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::lexicon::{build_lexicon, match_spans, tag_tokens, Lexicon, TokenTags};
use crate::metrics::evaluate;
use crate::parser::{train, ParserMode, ParserModel, TrainConfig, TrainExample};
use crate::toycorpus;
use crate::treebank::{load_corpus, serialize_top, ParseTree, Utterance};

#[derive(Parser, Debug)]
#[command(name = "topspan", version, about = "Span-based intent-slot parser")]
pub struct Cli {
    /// Flat key=value config file; explicit flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub cmd: Cmd,
}

#[derive(Subcommand, Debug)]
pub enum Cmd {
    /// Write the built-in toy corpus, its lexicon, and the new-value catalog.
    Prep(PrepArgs),
    /// Train a parser.
    Train(TrainArgs),
    /// Parse plain utterances (one per line) with a trained model.
    Parse(ParseArgs),
    /// Evaluate a trained model on a gold corpus.
    Eval(EvalArgs),
    /// Build, inspect, or update a slot lexicon.
    #[command(subcommand)]
    Lexicon(LexiconCmd),
    /// Slot-disambiguation classifier: example generation, training, eval.
    #[command(subcommand)]
    Disamb(DisambCmd),
    /// Unseen-slot-value simulation: modify a test set and compare scenarios.
    Simulate(SimulateArgs),
}

// ---------------------------------------------------------------------------
// config file + flag resolution

/// Flat `key=value` file; `#` starts a comment, blank lines are skipped.
#[derive(Debug, Default, Clone)]
pub struct FileConfig(BTreeMap<String, String>);

impl FileConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse_at(i + 1, "expected `key = value`"))?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(Error::parse_at(i + 1, "empty config key"));
            }
            map.insert(k.to_string(), v.to_string());
        }
        Ok(FileConfig(map))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }
}

/// Merges flags over the config file over defaults, remembering every
/// resolved value so the effective configuration can be printed.
struct Resolver {
    file: FileConfig,
    resolved: Vec<(String, String)>,
}

impl Resolver {
    fn new(config: Option<&Path>) -> Result<Self> {
        let file = match config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        Ok(Resolver { file, resolved: Vec::new() })
    }

    fn parse_key<T: FromStr>(key: &str, raw: &str) -> Result<T> {
        raw.parse()
            .map_err(|_| Error::Config(format!("config key `{key}`: cannot parse `{raw}`")))
    }

    fn get<T: FromStr + Display>(&mut self, flag: Option<T>, key: &str, default: T) -> Result<T> {
        let v = match flag {
            Some(v) => v,
            None => match self.file.get(key) {
                Some(raw) => Self::parse_key(key, raw)?,
                None => default,
            },
        };
        self.resolved.push((key.to_string(), v.to_string()));
        Ok(v)
    }

    fn get_path(&mut self, flag: Option<PathBuf>, key: &str) -> Result<Option<PathBuf>> {
        let v = flag.or_else(|| self.file.get(key).map(PathBuf::from));
        self.resolved.push((
            key.to_string(),
            v.as_ref().map(|p| p.display().to_string()).unwrap_or_else(|| "-".into()),
        ));
        Ok(v)
    }

    fn require_path(&mut self, flag: Option<PathBuf>, key: &str) -> Result<PathBuf> {
        self.get_path(flag, key)?
            .ok_or_else(|| Error::Config(format!("missing required option `--{key}`")))
    }

    fn print(&self, cmd: &str) {
        for (k, v) in &self.resolved {
            println!("config {cmd}.{k} = {v}");
        }
    }
}

// ---------------------------------------------------------------------------
// shared pieces

#[derive(Args, Debug, Default)]
pub struct EncoderArgs {
    #[arg(long)]
    d_word: Option<usize>,
    #[arg(long)]
    d_pos: Option<usize>,
    #[arg(long)]
    d_slot: Option<usize>,
    #[arg(long)]
    d_model: Option<usize>,
    #[arg(long)]
    d_ff: Option<usize>,
    #[arg(long)]
    n_layers: Option<usize>,
    #[arg(long)]
    n_heads: Option<usize>,
    #[arg(long)]
    max_len: Option<usize>,
}

impl EncoderArgs {
    fn resolve(self, r: &mut Resolver, d: EncoderConfig) -> Result<EncoderConfig> {
        Ok(EncoderConfig {
            d_word: r.get(self.d_word, "d_word", d.d_word)?,
            d_pos: r.get(self.d_pos, "d_pos", d.d_pos)?,
            d_slot: r.get(self.d_slot, "d_slot", d.d_slot)?,
            d_model: r.get(self.d_model, "d_model", d.d_model)?,
            d_ff: r.get(self.d_ff, "d_ff", d.d_ff)?,
            n_layers: r.get(self.n_layers, "n_layers", d.n_layers)?,
            n_heads: r.get(self.n_heads, "n_heads", d.n_heads)?,
            max_len: r.get(self.max_len, "max_len", d.max_len)?,
            mode: d.mode,
        })
    }
}

fn keep_all_tags(utt: &Utterance, lex: &Lexicon) -> TokenTags {
    let occs = match_spans(utt, lex, lex.max_value_len().max(1));
    tag_tokens(utt, lex, &occs)
}

fn tags_with_filter(
    utt: &Utterance,
    lex: &Lexicon,
    disamb: Option<&DisambModel>,
    threshold: f64,
    gold: Option<&ParseTree>,
    oracle: bool,
) -> Result<TokenTags> {
    let occs = match_spans(utt, lex, lex.max_value_len().max(1));
    let occs = if oracle {
        let gold = gold.ok_or_else(|| Error::Config("oracle filter needs gold trees".into()))?;
        oracle_filter(&occs, gold)
    } else if let Some(m) = disamb {
        filter_occurrences(m, &utt.tokens, &occs, threshold)?
    } else {
        occs
    };
    Ok(tag_tokens(utt, lex, &occs))
}

// ---------------------------------------------------------------------------
// prep

#[derive(Args, Debug)]
pub struct PrepArgs {
    /// Output directory for train.top, dev.top, test.top, catalog.tsv,
    /// lexicon.tsv.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

fn cmd_prep(a: PrepArgs, config: Option<&Path>) -> Result<()> {
    let mut r = Resolver::new(config)?;
    let out = r.require_path(a.out, "out")?;
    let seed = r.get(a.seed, "seed", 1u64)?;
    r.print("prep");
    std::fs::create_dir_all(&out)?;
    let data = toycorpus::generate(seed);
    toycorpus::write_files(&data, &out)?;
    let (lex, stats) = build_lexicon(&data.train);
    lex.save(&out.join("lexicon.tsv"))?;
    println!(
        "prep wrote {} train / {} dev / {} test utterances, lexicon with {} categories / {} values",
        data.train.len(),
        data.dev.len(),
        data.test.len(),
        stats.categories,
        stats.unique_values
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// train

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long)]
    dev: Option<PathBuf>,
    /// Where to write the model checkpoint.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Slot lexicon (required by modes `lex` and `lex-gr`).
    #[arg(long)]
    lexicon: Option<PathBuf>,
    /// base | split | lex | lex-gr
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    eval_every: Option<usize>,
    #[arg(long)]
    d_hidden: Option<usize>,
    /// Disambiguation model filtering the training tags (lexicon modes).
    #[arg(long)]
    disamb: Option<PathBuf>,
    #[arg(long)]
    threshold: Option<f64>,
    /// keep-all | model | oracle (training-tag filter for lexicon modes)
    #[arg(long)]
    filter: Option<String>,
    #[command(flatten)]
    enc: EncoderArgs,
}

fn default_train_enc() -> EncoderConfig {
    EncoderConfig {
        d_word: 32,
        d_pos: 16,
        d_slot: 32,
        d_model: 64,
        d_ff: 128,
        n_layers: 2,
        n_heads: 4,
        max_len: 64,
        mode: crate::encoder::EncoderMode::Base,
    }
}

fn load_examples_for(
    path: &Path,
    lex: Option<&Lexicon>,
    disamb: Option<&DisambModel>,
    threshold: f64,
    oracle: bool,
) -> Result<Vec<TrainExample>> {
    let corpus = load_corpus(path)?;
    corpus
        .into_iter()
        .map(|(tree, utt)| {
            let tags = match lex {
                Some(l) if disamb.is_some() || oracle => {
                    Some(tags_with_filter(&utt, l, disamb, threshold, Some(&tree), oracle)?)
                }
                Some(l) => Some(keep_all_tags(&utt, l)),
                None => None,
            };
            Ok(TrainExample::new(utt, &tree, tags))
        })
        .collect()
}

fn cmd_train(a: TrainArgs, config: Option<&Path>) -> Result<()> {
    let mut r = Resolver::new(config)?;
    let train_path = r.require_path(a.train, "train")?;
    let dev_path = r.get_path(a.dev, "dev")?;
    let out = r.require_path(a.out, "out")?;
    let mode = ParserMode::parse(&r.get(a.mode, "mode", "base".to_string())?)?;
    let lexicon_path = r.get_path(a.lexicon, "lexicon")?;
    let cfg = TrainConfig {
        mode,
        enc: a.enc.resolve(&mut r, default_train_enc())?,
        d_hidden: r.get(a.d_hidden, "d_hidden", 32)?,
        epochs: r.get(a.epochs, "epochs", 60)?,
        lr: r.get(a.lr, "lr", 1e-2)?,
        batch_size: r.get(a.batch_size, "batch_size", 8)?,
        seed: r.get(a.seed, "seed", 1u64)?,
        eval_every: r.get(a.eval_every, "eval_every", 1)?,
        n_slot_ids: 0,
    };
    let disamb_path = r.get_path(a.disamb, "disamb")?;
    let threshold = r.get(a.threshold, "threshold", 0.5)?;
    let default_filter = if disamb_path.is_some() { "model" } else { "keep-all" };
    let filter = r.get(a.filter, "filter", default_filter.to_string())?;
    r.print("train");

    let lex = if mode.uses_lexicon() {
        let p = lexicon_path
            .ok_or_else(|| Error::Config(format!("mode {} requires --lexicon", mode.as_str())))?;
        Some(Lexicon::load(&p)?)
    } else {
        None
    };
    let cfg = TrainConfig {
        n_slot_ids: lex.as_ref().map(Lexicon::num_ids).unwrap_or(0),
        ..cfg
    };
    let disamb = match &disamb_path {
        Some(p) => Some(DisambModel::load(p)?),
        None => None,
    };
    let oracle = match filter.as_str() {
        "oracle" => true,
        "keep-all" => false,
        "model" => {
            if disamb.is_none() {
                return Err(Error::Config("filter `model` requires --disamb".into()));
            }
            false
        }
        other => {
            return Err(Error::Config(format!(
                "unknown filter `{other}` (expected keep-all|model|oracle)"
            )))
        }
    };
    let use_disamb = if filter == "model" { disamb.as_ref() } else { None };
    let train_ex = load_examples_for(&train_path, lex.as_ref(), use_disamb, threshold, oracle)?;
    let dev_ex = match dev_path {
        Some(p) => load_examples_for(&p, lex.as_ref(), use_disamb, threshold, oracle)?,
        None => Vec::new(),
    };
    let (model, log) = train(&train_ex, &dev_ex, &cfg)?;
    for line in &log.lines {
        println!("{line}");
    }
    println!("best_dev_em {:.4} at epoch {}", log.best_dev_em, log.best_epoch);
    model.save(&out)?;
    println!("model written to {}", out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// parse

#[derive(Args, Debug)]
pub struct ParseArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    /// Plain utterances, one per line, whitespace-tokenized.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    lexicon: Option<PathBuf>,
    /// Slot-disambiguation model used to filter lexicon matches.
    #[arg(long)]
    disamb: Option<PathBuf>,
    #[arg(long)]
    threshold: Option<f64>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn cmd_parse(a: ParseArgs, config: Option<&Path>) -> Result<()> {
    let mut r = Resolver::new(config)?;
    let model_path = r.require_path(a.model, "model")?;
    let input = r.require_path(a.input, "input")?;
    let lexicon_path = r.get_path(a.lexicon, "lexicon")?;
    let disamb_path = r.get_path(a.disamb, "disamb")?;
    let threshold = r.get(a.threshold, "threshold", 0.5)?;
    let out_path = r.get_path(a.out, "out")?;
    let model = ParserModel::load(&model_path)?;
    r.resolved.push(("seed".into(), model.store.seed().to_string()));
    r.print("parse");

    let lex = match &lexicon_path {
        Some(p) => Some(Lexicon::load(p)?),
        None => None,
    };
    if model.mode.uses_lexicon() && lex.is_none() {
        return Err(Error::Config(format!("mode {} requires --lexicon", model.mode.as_str())));
    }
    let disamb = match &disamb_path {
        Some(p) => Some(DisambModel::load(p)?),
        None => None,
    };
    let text = std::fs::read_to_string(&input)?;
    let mut out = String::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let tokens: Vec<String> = line.split_whitespace().map(str::to_string).collect();
        let utt = Utterance::new(tokens).map_err(|e| Error::parse_at(i + 1, e.to_string()))?;
        let tags = match (&lex, model.mode.uses_lexicon()) {
            (Some(l), true) => {
                Some(tags_with_filter(&utt, l, disamb.as_ref(), threshold, None, false)?)
            }
            _ => None,
        };
        match model.parse(&utt.tokens, tags.as_ref()) {
            Ok(tree) => out.push_str(&serialize_top(&tree, &utt)?),
            Err(e) => out.push_str(&format!("FAILED: {e}")),
        }
        out.push('\n');
    }
    match out_path {
        Some(p) => std::fs::write(p, out)?,
        None => print!("{out}"),
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// eval

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    lexicon: Option<PathBuf>,
    #[arg(long)]
    disamb: Option<PathBuf>,
    #[arg(long)]
    threshold: Option<f64>,
    /// keep-all | model | oracle
    #[arg(long)]
    filter: Option<String>,
}

fn cmd_eval(a: EvalArgs, config: Option<&Path>) -> Result<()> {
    let mut r = Resolver::new(config)?;
    let model_path = r.require_path(a.model, "model")?;
    let corpus_path = r.require_path(a.corpus, "corpus")?;
    let lexicon_path = r.get_path(a.lexicon, "lexicon")?;
    let disamb_path = r.get_path(a.disamb, "disamb")?;
    let threshold = r.get(a.threshold, "threshold", 0.5)?;
    let default_filter = if disamb_path.is_some() { "model" } else { "keep-all" };
    let filter = r.get(a.filter, "filter", default_filter.to_string())?;
    let model = ParserModel::load(&model_path)?;
    r.resolved.push(("seed".into(), model.store.seed().to_string()));
    r.print("eval");

    let lex = match &lexicon_path {
        Some(p) => Some(Lexicon::load(p)?),
        None => None,
    };
    if model.mode.uses_lexicon() && lex.is_none() {
        return Err(Error::Config(format!("mode {} requires --lexicon", model.mode.as_str())));
    }
    let disamb = match &disamb_path {
        Some(p) => Some(DisambModel::load(p)?),
        None => None,
    };
    let oracle = match filter.as_str() {
        "oracle" => true,
        "keep-all" => false,
        "model" => {
            if disamb.is_none() {
                return Err(Error::Config("filter `model` requires --disamb".into()));
            }
            false
        }
        other => {
            return Err(Error::Config(format!(
                "unknown filter `{other}` (expected keep-all|model|oracle)"
            )))
        }
    };
    let use_disamb = if filter == "model" { disamb.as_ref() } else { None };

    let corpus = load_corpus(&corpus_path)?;
    let mut preds = Vec::with_capacity(corpus.len());
    let mut golds = Vec::with_capacity(corpus.len());
    for (gold, utt) in &corpus {
        let tags = match (&lex, model.mode.uses_lexicon()) {
            (Some(l), true) => {
                Some(tags_with_filter(&utt, l, use_disamb, threshold, Some(gold), oracle)?)
            }
            _ => None,
        };
        preds.push(model.parse(&utt.tokens, tags.as_ref()).ok());
        golds.push(gold.clone());
    }
    let report = evaluate(&preds, &golds)?;
    println!("{}", report.key_values());
    Ok(())
}

// ---------------------------------------------------------------------------
// lexicon

#[derive(Subcommand, Debug)]
pub enum LexiconCmd {
    /// Extract a lexicon from a gold corpus.
    Build {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Add catalog values to an existing lexicon (no retraining needed).
    Update {
        #[arg(long)]
        lexicon: Option<PathBuf>,
        #[arg(long)]
        catalog: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print category and value counts.
    Stats {
        #[arg(long)]
        lexicon: Option<PathBuf>,
    },
}

fn cmd_lexicon(cmd: LexiconCmd, config: Option<&Path>) -> Result<()> {
    let mut r = Resolver::new(config)?;
    match cmd {
        LexiconCmd::Build { corpus, out } => {
            let corpus_path = r.require_path(corpus, "corpus")?;
            let out = r.require_path(out, "out")?;
            r.print("lexicon.build");
            let corpus = load_corpus(&corpus_path)?;
            let (lex, stats) = build_lexicon(&corpus);
            lex.save(&out)?;
            println!(
                "lexicon: {} categories, {} values ({} slot instances)",
                stats.categories, stats.unique_values, stats.total_values
            );
        }
        LexiconCmd::Update { lexicon, catalog, out } => {
            let lex_path = r.require_path(lexicon, "lexicon")?;
            let cat_path = r.require_path(catalog, "catalog")?;
            let out = r.require_path(out, "out")?;
            r.print("lexicon.update");
            let base = Lexicon::load(&lex_path)?;
            let catalog = NewValueCatalog::load(&cat_path, &base)?;
            let updated = crate::datasim::updated_lexicon(&base, &catalog)?;
            updated.save(&out)?;
            println!("added {} values across {} categories", catalog.len(), catalog.categories().count());
        }
        LexiconCmd::Stats { lexicon } => {
            let lex_path = r.require_path(lexicon, "lexicon")?;
            r.print("lexicon.stats");
            let lex = Lexicon::load(&lex_path)?;
            let stats = lex.stats();
            println!(
                "lexicon: {} categories, {} values, longest value {} tokens",
                stats.categories,
                stats.unique_values,
                lex.max_value_len()
            );
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// disamb

#[derive(Subcommand, Debug)]
pub enum DisambCmd {
    /// Generate classification examples from a gold corpus and a lexicon.
    Gen {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        lexicon: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the classifier on generated examples.
    Train(DisambTrainArgs),
    /// Accuracy of a trained classifier on an example file.
    Eval {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        examples: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
pub struct DisambTrainArgs {
    #[arg(long)]
    examples: Option<PathBuf>,
    /// Held-out examples for per-epoch accuracy reporting.
    #[arg(long)]
    held: Option<PathBuf>,
    /// Lexicon providing the marker-token categories.
    #[arg(long)]
    lexicon: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Probability of masking a matched-value token during training.
    #[arg(long)]
    value_dropout: Option<f64>,
    #[command(flatten)]
    enc: EncoderArgs,
}

fn default_disamb_enc() -> EncoderConfig {
    EncoderConfig {
        d_word: 16,
        d_pos: 8,
        d_slot: 16,
        d_model: 32,
        d_ff: 64,
        n_layers: 1,
        n_heads: 2,
        max_len: 64,
        mode: crate::encoder::EncoderMode::Base,
    }
}

fn cmd_disamb(cmd: DisambCmd, config: Option<&Path>) -> Result<()> {
    let mut r = Resolver::new(config)?;
    match cmd {
        DisambCmd::Gen { corpus, lexicon, out } => {
            let corpus_path = r.require_path(corpus, "corpus")?;
            let lex_path = r.require_path(lexicon, "lexicon")?;
            let out = r.require_path(out, "out")?;
            r.print("disamb.gen");
            let corpus = load_corpus(&corpus_path)?;
            let lex = Lexicon::load(&lex_path)?;
            let mut examples = Vec::new();
            for (tree, utt) in &corpus {
                examples.extend(gen_examples(tree, utt, &lex));
            }
            save_examples(&examples, &out)?;
            let pos = examples.iter().filter(|e| e.label).count();
            println!(
                "wrote {} examples ({} positive, {} negative)",
                examples.len(),
                pos,
                examples.len() - pos
            );
        }
        DisambCmd::Train(a) => {
            let examples_path = r.require_path(a.examples, "examples")?;
            let held_path = r.get_path(a.held, "held")?;
            let lex_path = r.require_path(a.lexicon, "lexicon")?;
            let out = r.require_path(a.out, "out")?;
            let cfg = DisambTrainConfig {
                enc: a.enc.resolve(&mut r, default_disamb_enc())?,
                epochs: r.get(a.epochs, "epochs", 15)?,
                lr: r.get(a.lr, "lr", 5e-3)?,
                batch_size: r.get(a.batch_size, "batch_size", 8)?,
                seed: r.get(a.seed, "seed", 1u64)?,
                value_dropout: r.get(a.value_dropout, "value_dropout", 0.3)?,
            };
            r.print("disamb.train");
            let train_ex = load_examples(&examples_path)?;
            let held_ex = match held_path {
                Some(p) => load_examples(&p)?,
                None => Vec::new(),
            };
            let markers = MarkerVocab::from_lexicon(&Lexicon::load(&lex_path)?);
            let (model, log) = train_disamb(&train_ex, &held_ex, &markers, &cfg)?;
            for line in &log {
                println!("{line}");
            }
            model.save(&out)?;
            println!("model written to {}", out.display());
        }
        DisambCmd::Eval { model, examples } => {
            let model_path = r.require_path(model, "model")?;
            let examples_path = r.require_path(examples, "examples")?;
            r.print("disamb.eval");
            let model = DisambModel::load(&model_path)?;
            let examples = load_examples(&examples_path)?;
            let acc = disamb_accuracy(&model, &examples)?;
            println!("disamb_accuracy {acc:.4} over {} examples", examples.len());
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// simulate

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    lexicon: Option<PathBuf>,
    #[arg(long)]
    catalog: Option<PathBuf>,
    #[arg(long)]
    test: Option<PathBuf>,
    /// updated-lexicon | stale-lexicon | regex-baseline
    #[arg(long)]
    scenario: Option<String>,
    /// Per-slot replacement probability for a single run.
    #[arg(long)]
    rate: Option<f64>,
    /// Comma-separated rates; runs the sweep instead of a single evaluation.
    #[arg(long)]
    rates: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// keep-all | model | oracle
    #[arg(long)]
    filter: Option<String>,
    #[arg(long)]
    disamb: Option<PathBuf>,
    #[arg(long)]
    threshold: Option<f64>,
    /// Where to write the modification log (single-rate runs only).
    #[arg(long)]
    mods_out: Option<PathBuf>,
    /// Where to write the modified test corpus (single-rate runs only).
    #[arg(long)]
    modified_out: Option<PathBuf>,
}

fn cmd_simulate(a: SimulateArgs, config: Option<&Path>) -> Result<()> {
    let mut r = Resolver::new(config)?;
    let model_path = r.require_path(a.model, "model")?;
    let lex_path = r.require_path(a.lexicon, "lexicon")?;
    let cat_path = r.require_path(a.catalog, "catalog")?;
    let test_path = r.require_path(a.test, "test")?;
    let scenario = Scenario::parse(&r.get(a.scenario, "scenario", "updated-lexicon".into())?)?;
    let rate = r.get(a.rate, "rate", 0.2)?;
    let rates_raw = r.get(a.rates, "rates", String::new())?;
    let seed = r.get(a.seed, "seed", 1u64)?;
    let disamb_path = r.get_path(a.disamb, "disamb")?;
    let default_filter = if disamb_path.is_some() { "model" } else { "keep-all" };
    let filter_name = r.get(a.filter, "filter", default_filter.into())?;
    let threshold = r.get(a.threshold, "threshold", 0.5)?;
    let mods_out = r.get_path(a.mods_out, "mods_out")?;
    let modified_out = r.get_path(a.modified_out, "modified_out")?;
    r.print("simulate");

    let model = ParserModel::load(&model_path)?;
    let base = Lexicon::load(&lex_path)?;
    let catalog = NewValueCatalog::load(&cat_path, &base)?;
    let test = load_corpus(&test_path)?;
    let disamb = match &disamb_path {
        Some(p) => Some(DisambModel::load(p)?),
        None => None,
    };
    let filter = match filter_name.as_str() {
        "keep-all" => Filter::KeepAll,
        "oracle" => Filter::Oracle,
        "model" => Filter::Model(
            disamb
                .as_ref()
                .ok_or_else(|| Error::Config("filter `model` requires --disamb".into()))?,
            threshold,
        ),
        other => {
            return Err(Error::Config(format!(
                "unknown filter `{other}` (expected keep-all|model|oracle)"
            )))
        }
    };

    if !rates_raw.is_empty() {
        let rates = rates_raw
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Config(format!("bad rate `{s}` in --rates")))
            })
            .collect::<Result<Vec<f64>>>()?;
        let entries = vec![SweepEntry {
            name: scenario.as_str().to_string(),
            model: &model,
            scenario,
            filter,
        }];
        let table = sweep_modification_rate(&entries, &base, &catalog, &test, &rates, seed)?;
        print!("{table}");
        return Ok(());
    }

    let (modified, mods) = generate_modified_test(&test, &catalog, rate, seed)?;
    println!("applied {} modifications at rate {rate}", mods.len());
    if let Some(p) = mods_out {
        std::fs::write(p, modifications_tsv(&mods))?;
    }
    if let Some(p) = modified_out {
        let mut buf = String::new();
        for (tree, utt) in &modified {
            buf.push_str(&serialize_top(tree, utt)?);
            buf.push('\n');
        }
        std::fs::write(p, buf)?;
    }
    let report = scenario_run(&model, &base, &catalog, &modified, scenario, &filter)?;
    println!("scenario {} {}", scenario.as_str(), report.key_values());
    Ok(())
}

// ---------------------------------------------------------------------------
// entry points

pub fn execute(cli: Cli) -> Result<()> {
    let config = cli.config.as_deref();
    match cli.cmd {
        Cmd::Prep(a) => cmd_prep(a, config),
        Cmd::Train(a) => cmd_train(a, config),
        Cmd::Parse(a) => cmd_parse(a, config),
        Cmd::Eval(a) => cmd_eval(a, config),
        Cmd::Lexicon(c) => cmd_lexicon(c, config),
        Cmd::Disamb(c) => cmd_disamb(c, config),
        Cmd::Simulate(a) => cmd_simulate(a, config),
    }
}

/// Parses the given argument list and runs it; used by tests and by `main`.
pub fn run_from<I, S>(args: I) -> Result<()>
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| Error::Config(e.to_string()))?;
    execute(cli)
}

/// Process entry point: 0 on success, 1 on any error (printed to stderr).
pub fn main() -> i32 {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
