//! Label scoring, CKY chart decoding with the span-splitting representation,
//! loss-augmented margin training, and model checkpoints.
//!
//! The chart works over fence coordinates: span `(i, j)` covers 1-indexed
//! tokens `i+1..j`, and an interior fence `k` splits it into `(i, k)` and
//! `(k, j)`. Every chart span carries a label; the reserved Dummy label
//! scores exactly 0 and is spliced out when the binarized tree is undone.

use std::collections::{BTreeSet, HashSet};
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::encoder::{
    self, boundaries, embed_tokens, encode, span_rep, span_split_rep, BoundarySet, EncoderConfig,
    EncoderMode, Vocab,
};
use crate::error::{Error, Result};
use crate::lexicon::TokenTags;
use crate::numcore::{adam_step, Gradients, OptimState, ParamStore, Tape, Tensor, Var};
use crate::treebank::{binarize, collapse_unary, debinarize, expand_unary, Label, ParseTree, Utterance};

/// Which inputs the parser sees and whether decoding uses the splitting
/// representation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParserMode {
    /// Word + position inputs, plain span representation.
    Base,
    /// Word + position inputs, span-splitting representation.
    Split,
    /// Lexicon-injected inputs, span-splitting representation.
    Lexicon,
    /// Lexicon-injected inputs with the generalized representation.
    Generalized,
}

impl ParserMode {
    pub fn encoder_mode(self) -> EncoderMode {
        match self {
            ParserMode::Base | ParserMode::Split => EncoderMode::Base,
            ParserMode::Lexicon => EncoderMode::LexiconInjected,
            ParserMode::Generalized => EncoderMode::Generalized,
        }
    }

    pub fn use_split(self) -> bool {
        self != ParserMode::Base
    }

    pub fn uses_lexicon(self) -> bool {
        matches!(self, ParserMode::Lexicon | ParserMode::Generalized)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ParserMode::Base => "base",
            ParserMode::Split => "split",
            ParserMode::Lexicon => "lex",
            ParserMode::Generalized => "lex-gr",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "base" => Ok(ParserMode::Base),
            "split" => Ok(ParserMode::Split),
            "lex" => Ok(ParserMode::Lexicon),
            "lex-gr" => Ok(ParserMode::Generalized),
            other => Err(Error::Config(format!(
                "unknown mode `{other}` (expected base|split|lex|lex-gr)"
            ))),
        }
    }
}

/// Id of the Dummy label in every [`LabelVocab`].
pub const DUMMY_ID: usize = 0;

/// Closed label set: Dummy at id 0, then every distinct (collapsed-chain or
/// atomic) label seen in the training trees, sorted.
#[derive(Debug, Clone)]
pub struct LabelVocab {
    labels: Vec<Label>,
}

impl LabelVocab {
    pub fn build(trees: &[ParseTree]) -> Self {
        let mut seen: BTreeSet<String> = BTreeSet::new();
        fn walk(t: &ParseTree, seen: &mut BTreeSet<String>) {
            if t.label != Label::Dummy {
                seen.insert(t.label.joined());
            }
            for c in &t.children {
                walk(c, seen);
            }
        }
        for t in trees {
            walk(t, &mut seen);
        }
        let mut labels = vec![Label::Dummy];
        for s in seen {
            labels.push(Label::parse(&s).expect("labels collected from parsed trees"));
        }
        LabelVocab { labels }
    }

    pub fn from_labels(labels: Vec<Label>) -> Self {
        assert_eq!(labels.first(), Some(&Label::Dummy), "Dummy must be id 0");
        LabelVocab { labels }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, label: &Label) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn label(&self, id: usize) -> &Label {
        &self.labels[id]
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }
}

/// Per-span cost added to every non-Dummy label score during loss-augmented
/// decoding; `(i, j, label_id) -> cost`.
pub type CostFn<'a> = &'a dyn Fn(usize, usize, usize) -> f64;

/// Produces label scores for a span, optionally conditioned on the chosen
/// split fence. Entry [`DUMMY_ID`] must be exactly 0.
pub trait SpanScorer {
    fn n_labels(&self) -> usize;
    fn scores(&self, i: usize, j: usize, k: Option<usize>) -> Vec<f64>;
}

/// Registers the one-layer feedforward label scorer.
pub fn register_scorer(store: &mut ParamStore, d_model: usize, d_hidden: usize, n_labels: usize) {
    store.add_fan_in("sc_w", d_model, d_hidden);
    // small positive bias keeps hidden units initially active; a margin
    // objective that mostly pushes scores down can otherwise kill every
    // ReLU unit and stall with zero gradients
    store.insert("sc_b", Tensor::new(vec![d_hidden], vec![0.1; d_hidden]));
    store.add_fan_in("sc_v", d_hidden, n_labels);
}

/// Tape version of the label scorer: `V · ReLU(W · rep + b)`, returned as a
/// raw score vector (the Dummy component is ignored by callers, which score
/// Dummy as 0 by contract).
pub fn score_labels_tape(tape: &mut Tape, store: &ParamStore, rep: Var) -> Var {
    let w = tape.param(store, "sc_w");
    let b = tape.param(store, "sc_b");
    let v = tape.param(store, "sc_v");
    let h = tape.matmul(rep, w);
    let h = tape.add(h, b);
    let h = tape.relu(h);
    tape.matmul(h, v)
}

/// Numeric scorer over fixed boundary vectors; used by the chart, which must
/// evaluate many spans without growing the tape.
pub struct NetworkScorer {
    bounds: Vec<Vec<f64>>,
    w: Tensor,
    b: Tensor,
    v: Tensor,
}

impl NetworkScorer {
    pub fn from_tape(tape: &Tape, store: &ParamStore, bset: &BoundarySet) -> Self {
        let bounds = (0..bset.len()).map(|k| tape.value(bset.fence(k)).data().to_vec()).collect();
        NetworkScorer {
            bounds,
            w: store.get("sc_w").expect("scorer registered").clone(),
            b: store.get("sc_b").unwrap().clone(),
            v: store.get("sc_v").unwrap().clone(),
        }
    }

    pub fn from_parts(bounds: Vec<Vec<f64>>, w: Tensor, b: Tensor, v: Tensor) -> Self {
        NetworkScorer { bounds, w, b, v }
    }

    pub fn n_fences(&self) -> usize {
        self.bounds.len()
    }
}

impl SpanScorer for NetworkScorer {
    fn n_labels(&self) -> usize {
        self.v.cols()
    }

    fn scores(&self, i: usize, j: usize, k: Option<usize>) -> Vec<f64> {
        let d = self.bounds[0].len();
        let mut rep = vec![0.0; d];
        for t in 0..d {
            rep[t] = self.bounds[j][t] - self.bounds[i][t];
            if let Some(k) = k {
                rep[t] += self.bounds[k][t];
            }
        }
        let hidden = self.w.cols();
        let mut h = vec![0.0; hidden];
        for (hj, bj) in h.iter_mut().zip(self.b.data()) {
            *hj = *bj;
        }
        for (t, &r) in rep.iter().enumerate() {
            if r == 0.0 {
                continue;
            }
            for (hj, &wv) in h.iter_mut().zip(self.w.row(t)) {
                *hj += r * wv;
            }
        }
        for hj in h.iter_mut() {
            if *hj < 0.0 {
                *hj = 0.0;
            }
        }
        let n_labels = self.v.cols();
        let mut s = vec![0.0; n_labels];
        for (t, &hv) in h.iter().enumerate() {
            if hv == 0.0 {
                continue;
            }
            for (sl, &vv) in s.iter_mut().zip(self.v.row(t)) {
                *sl += hv * vv;
            }
        }
        s[DUMMY_ID] = 0.0;
        s
    }
}

/// Split-independent score table `s(i, j, l)`; stands in for the network in
/// reference tests, where split independence makes chart decoding globally
/// optimal and comparable to exhaustive enumeration.
#[derive(Debug, Clone)]
pub struct TableScorer {
    n: usize,
    n_labels: usize,
    table: Vec<f64>,
}

impl TableScorer {
    pub fn new(n: usize, n_labels: usize, mut table: Vec<f64>) -> Self {
        assert_eq!(table.len(), (n + 1) * (n + 1) * n_labels);
        for i in 0..=n {
            for j in 0..=n {
                table[(i * (n + 1) + j) * n_labels + DUMMY_ID] = 0.0;
            }
        }
        TableScorer { n, n_labels, table }
    }

    pub fn random(rng: &mut impl rand::Rng, n: usize, n_labels: usize, range: f64) -> Self {
        let len = (n + 1) * (n + 1) * n_labels;
        let table = (0..len).map(|_| rng.gen_range(-range..=range)).collect();
        TableScorer::new(n, n_labels, table)
    }

    pub fn set(&mut self, i: usize, j: usize, l: usize, v: f64) {
        assert_ne!(l, DUMMY_ID, "Dummy score is fixed at 0");
        self.table[(i * (self.n + 1) + j) * self.n_labels + l] = v;
    }
}

impl SpanScorer for TableScorer {
    fn n_labels(&self) -> usize {
        self.n_labels
    }

    fn scores(&self, i: usize, j: usize, _k: Option<usize>) -> Vec<f64> {
        let base = (i * (self.n + 1) + j) * self.n_labels;
        self.table[base..base + self.n_labels].to_vec()
    }
}

/// Instrumentation collected while decoding.
#[derive(Debug, Clone, Copy, Default)]
pub struct DecodeStats {
    /// Spans where the splitting representation had more than one candidate
    /// fence, i.e. the dynamic choice actually mattered.
    pub multi_split_uses: usize,
}

#[derive(Debug, Clone)]
pub struct DecodeOutcome {
    /// Binarized tree with collapsed-chain labels; every chart span is a node.
    pub tree: ParseTree,
    pub score: f64,
    pub stats: DecodeStats,
}

#[derive(Clone, Copy)]
struct Cell {
    score: f64,
    label: usize,
    split: usize,
}

fn argmax_label(scores: &[f64], i: usize, j: usize, cost: Option<CostFn>) -> (usize, f64) {
    let mut best = (0usize, f64::NEG_INFINITY);
    for (l, &raw) in scores.iter().enumerate() {
        let mut s = if l == DUMMY_ID { 0.0 } else { raw };
        if let Some(c) = cost {
            s += c(i, j, l);
        }
        if s > best.1 {
            best = (l, s);
        }
    }
    best
}

/// Bottom-up chart decode. Width-1 spans take the best label directly; wider
/// spans first fix the split fence `k*` purely from the children's best
/// scores (ties to the lowest fence), then score labels once — with the
/// splitting representation at `k*` when `use_split` is set. Label ties break
/// to the lowest id. A supplied `cost` is added to every non-Dummy label
/// score before maximization (loss-augmented decoding).
pub fn cky_decode(
    n: usize,
    labels: &LabelVocab,
    scorer: &dyn SpanScorer,
    use_split: bool,
    cost: Option<CostFn>,
) -> DecodeOutcome {
    assert!(n >= 1, "empty utterance");
    assert_eq!(labels.len(), scorer.n_labels(), "label vocab / scorer mismatch");
    let mut chart = vec![vec![Cell { score: 0.0, label: 0, split: 0 }; n + 1]; n + 1];
    let mut stats = DecodeStats::default();
    for width in 1..=n {
        for i in 0..=n - width {
            let j = i + width;
            if width == 1 {
                let scores = scorer.scores(i, j, None);
                let (label, s) = argmax_label(&scores, i, j, cost);
                chart[i][j] = Cell { score: s, label, split: 0 };
                continue;
            }
            let mut k_star = i + 1;
            let mut children = chart[i][k_star].score + chart[k_star][j].score;
            for k in i + 2..j {
                let c = chart[i][k].score + chart[k][j].score;
                if c > children {
                    children = c;
                    k_star = k;
                }
            }
            if use_split && width > 2 {
                stats.multi_split_uses += 1;
            }
            let scores = scorer.scores(i, j, if use_split { Some(k_star) } else { None });
            let (label, s) = argmax_label(&scores, i, j, cost);
            chart[i][j] = Cell { score: s + children, label, split: k_star };
        }
    }

    fn backtrace(chart: &[Vec<Cell>], labels: &LabelVocab, i: usize, j: usize) -> ParseTree {
        let cell = chart[i][j];
        let children = if j - i == 1 {
            Vec::new()
        } else {
            vec![backtrace(chart, labels, i, cell.split), backtrace(chart, labels, cell.split, j)]
        };
        ParseTree::new(labels.label(cell.label).clone(), (i, j), children)
    }

    let tree = backtrace(&chart, labels, 0, n);
    DecodeOutcome { tree, score: chart[0][n].score, stats }
}

/// Sum of label scores over every node of a binarized tree; Dummy nodes
/// contribute 0. With `use_split`, each internal node's fence is its actual
/// child boundary — the tree fixes `k`, no argmax is taken.
pub fn tree_score(
    tree: &ParseTree,
    labels: &LabelVocab,
    scorer: &dyn SpanScorer,
    use_split: bool,
) -> Result<f64> {
    let (i, j) = tree.span;
    let split = node_split(tree, use_split)?;
    let own = if tree.label == Label::Dummy {
        0.0
    } else {
        let id = labels
            .id(&tree.label)
            .ok_or_else(|| Error::Eval(format!("label `{}` not in vocabulary", tree.label.joined())))?;
        scorer.scores(i, j, split)[id]
    };
    let mut total = own;
    for c in &tree.children {
        total += tree_score(c, labels, scorer, use_split)?;
    }
    Ok(total)
}

fn node_split(tree: &ParseTree, use_split: bool) -> Result<Option<usize>> {
    if !use_split || tree.children.is_empty() {
        return Ok(None);
    }
    if tree.children.len() != 2 {
        return Err(Error::Tree(format!(
            "expected a binarized node at {:?}, found {} children",
            tree.span,
            tree.children.len()
        )));
    }
    Ok(Some(tree.children[0].span.1))
}

/// [`tree_score`] rebuilt on the tape so gradients flow to the encoder and
/// scorer parameters. Returns a scalar variable.
pub fn tree_score_tape(
    tape: &mut Tape,
    store: &ParamStore,
    labels: &LabelVocab,
    b: &BoundarySet,
    tree: &ParseTree,
    use_split: bool,
) -> Result<Var> {
    let mut terms = Vec::new();
    collect_score_terms(tape, store, labels, b, tree, use_split, &mut terms)?;
    let mut total = match terms.first() {
        None => tape.constant(Tensor::scalar(0.0)),
        Some(&first) => first,
    };
    for &t in terms.iter().skip(1) {
        total = tape.add(total, t);
    }
    Ok(total)
}

fn collect_score_terms(
    tape: &mut Tape,
    store: &ParamStore,
    labels: &LabelVocab,
    b: &BoundarySet,
    tree: &ParseTree,
    use_split: bool,
    out: &mut Vec<Var>,
) -> Result<()> {
    let (i, j) = tree.span;
    if tree.label != Label::Dummy {
        let id = labels
            .id(&tree.label)
            .ok_or_else(|| Error::Eval(format!("label `{}` not in vocabulary", tree.label.joined())))?;
        let rep = match node_split(tree, use_split)? {
            Some(k) => span_split_rep(tape, b, i, j, k)?,
            None => span_rep(tape, b, i, j)?,
        };
        let scores = score_labels_tape(tape, store, rep);
        let picked = tape.slice(scores, id, id + 1);
        let picked = tape.sum(picked);
        out.push(picked);
    }
    for c in &tree.children {
        collect_score_terms(tape, store, labels, b, c, use_split, out)?;
    }
    Ok(())
}

/// Hamming cost against the gold tree's labeled spans: 1 for a non-Dummy
/// label the gold tree does not place at that exact span, else 0.
pub fn hamming_cost(gold: &ParseTree, labels: &LabelVocab) -> impl Fn(usize, usize, usize) -> f64 {
    let mut gold_spans: HashSet<(usize, usize, usize)> = HashSet::new();
    fn walk(
        t: &ParseTree,
        labels: &LabelVocab,
        out: &mut HashSet<(usize, usize, usize)>,
    ) {
        if t.label != Label::Dummy {
            if let Some(id) = labels.id(&t.label) {
                out.insert((t.span.0, t.span.1, id));
            }
        }
        for c in &t.children {
            walk(c, labels, out);
        }
    }
    walk(gold, labels, &mut gold_spans);
    move |i, j, l| {
        if l == DUMMY_ID || gold_spans.contains(&(i, j, l)) {
            0.0
        } else {
            1.0
        }
    }
}

/// θ(gold, T): sum of the gold-derived cost over T's nodes.
pub fn tree_theta(tree: &ParseTree, labels: &LabelVocab, cost: CostFn) -> f64 {
    let own = match labels.id(&tree.label) {
        Some(id) if tree.label != Label::Dummy => cost(tree.span.0, tree.span.1, id),
        _ => 0.0,
    };
    own + tree.children.iter().map(|c| tree_theta(c, labels, cost)).sum::<f64>()
}

/// Margin loss for one example: loss-augmented decode finds the most violated
/// rival `T*`; the loss is `max(0, s(T*) + θ(gold, T*) - s(gold))`.
pub struct MarginOutcome {
    pub loss: f64,
    pub rival: ParseTree,
    pub theta: f64,
}

pub fn margin_loss(
    gold: &ParseTree,
    labels: &LabelVocab,
    scorer: &dyn SpanScorer,
    use_split: bool,
) -> Result<MarginOutcome> {
    let n = gold.span.1;
    let cost = hamming_cost(gold, labels);
    let rival = cky_decode(n, labels, scorer, use_split, Some(&cost));
    let theta = tree_theta(&rival.tree, labels, &cost);
    let s_gold = tree_score(gold, labels, scorer, use_split)?;
    let loss = (rival.score - s_gold).max(0.0);
    Ok(MarginOutcome { loss, rival: rival.tree, theta })
}

/// One training example: tokens, the collapsed+binarized gold tree, and the
/// (already filtered) lexicon tags when the mode uses them.
#[derive(Debug, Clone)]
pub struct TrainExample {
    pub utt: Utterance,
    pub gold: ParseTree,
    pub tags: Option<TokenTags>,
}

impl TrainExample {
    pub fn new(utt: Utterance, original_tree: &ParseTree, tags: Option<TokenTags>) -> Self {
        let gold = binarize(&collapse_unary(original_tree));
        TrainExample { utt, gold, tags }
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub mode: ParserMode,
    pub enc: EncoderConfig,
    pub d_hidden: usize,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Dev evaluation cadence in epochs.
    pub eval_every: usize,
    /// Slot-embedding table size (lexicon id count); 0 outside lexicon modes.
    pub n_slot_ids: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mode: ParserMode::Base,
            enc: EncoderConfig::default(),
            d_hidden: 32,
            epochs: 60,
            lr: 1e-3,
            batch_size: 16,
            seed: 1,
            eval_every: 1,
            n_slot_ids: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.lr <= 0.0 || self.eval_every == 0 {
            return Err(Error::Config("hyperparameters must be positive".into()));
        }
        if self.mode.uses_lexicon() && self.n_slot_ids == 0 {
            return Err(Error::Config("lexicon mode requires n_slot_ids > 0".into()));
        }
        let mut enc = self.enc.clone();
        enc.mode = self.mode.encoder_mode();
        enc.validate()
    }
}

/// A trained parser: configuration, vocabularies, and parameters. The slot
/// lexicon itself is deliberately not part of the model — it is an external
/// resource that can change after training.
#[derive(Debug, Clone)]
pub struct ParserModel {
    pub mode: ParserMode,
    pub enc: EncoderConfig,
    pub d_hidden: usize,
    pub vocab: Vocab,
    pub labels: LabelVocab,
    pub store: ParamStore,
}

impl ParserModel {
    pub fn init(cfg: &TrainConfig, vocab: Vocab, labels: LabelVocab) -> Result<Self> {
        cfg.validate()?;
        let mut enc = cfg.enc.clone();
        enc.mode = cfg.mode.encoder_mode();
        let mut store = ParamStore::new(cfg.seed);
        encoder::register_params(&mut store, &enc, "", vocab.len(), cfg.n_slot_ids.max(1));
        register_scorer(&mut store, enc.d_model, cfg.d_hidden, labels.len());
        Ok(ParserModel { mode: cfg.mode, enc, d_hidden: cfg.d_hidden, vocab, labels, store })
    }

    /// Full forward pass up to boundary vectors for one utterance.
    pub fn boundaries_for(
        &self,
        tape: &mut Tape,
        tokens: &[String],
        tags: Option<&TokenTags>,
    ) -> Result<BoundarySet> {
        if self.mode.uses_lexicon() && tags.is_none() {
            return Err(Error::Config("lexicon mode requires token tags".into()));
        }
        let x = embed_tokens(tape, &self.store, &self.enc, "", &self.vocab, tokens, tags)?;
        let h = encode(tape, &self.store, &self.enc, "", x)?;
        boundaries(tape, &self.enc, h, tokens.len())
    }

    /// Decodes one utterance to a binarized collapsed tree.
    pub fn decode_utt(&self, tokens: &[String], tags: Option<&TokenTags>) -> Result<DecodeOutcome> {
        let mut tape = Tape::new();
        let b = self.boundaries_for(&mut tape, tokens, tags)?;
        let scorer = NetworkScorer::from_tape(&tape, &self.store, &b);
        Ok(cky_decode(tokens.len(), &self.labels, &scorer, self.mode.use_split(), None))
    }

    /// Decodes and undoes binarization and chain collapsing, yielding a tree
    /// in the original form. Fails when the decoded root is Dummy.
    pub fn parse(&self, tokens: &[String], tags: Option<&TokenTags>) -> Result<ParseTree> {
        let out = self.decode_utt(tokens, tags)?;
        Ok(expand_unary(&debinarize(&out.tree)?))
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let mut buf = Vec::new();
        writeln!(buf, "topspan-model v1")?;
        writeln!(buf, "mode {}", self.mode.as_str())?;
        for (k, v) in [
            ("d_word", self.enc.d_word),
            ("d_pos", self.enc.d_pos),
            ("d_slot", self.enc.d_slot),
            ("d_model", self.enc.d_model),
            ("d_ff", self.enc.d_ff),
            ("n_layers", self.enc.n_layers),
            ("n_heads", self.enc.n_heads),
            ("max_len", self.enc.max_len),
            ("d_hidden", self.d_hidden),
        ] {
            writeln!(buf, "config {k} {v}")?;
        }
        writeln!(buf, "seed {}", self.store.seed())?;
        let labels: Vec<String> =
            self.labels.labels().iter().skip(1).map(|l| l.joined()).collect();
        writeln!(buf, "labels {}", labels.len())?;
        for l in &labels {
            writeln!(buf, "{l}")?;
        }
        let words = self.vocab.tokens();
        writeln!(buf, "vocab {}", words.len())?;
        for w in words {
            writeln!(buf, "{w}")?;
        }
        self.store.write_params(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let mut lines = std::io::BufReader::new(file)
            .lines()
            .collect::<std::io::Result<Vec<_>>>()?
            .into_iter()
            .peekable();
        let expect = |lines: &mut std::iter::Peekable<std::vec::IntoIter<String>>, what: &str| {
            lines.next().ok_or_else(|| Error::Checkpoint(format!("missing {what}")))
        };
        let header = expect(&mut lines, "header")?;
        if header != "topspan-model v1" {
            return Err(Error::Checkpoint(format!("unexpected header `{header}`")));
        }
        let mode_line = expect(&mut lines, "mode")?;
        let mode = ParserMode::parse(
            mode_line
                .strip_prefix("mode ")
                .ok_or_else(|| Error::Checkpoint("bad mode line".into()))?,
        )?;
        let mut enc = EncoderConfig { mode: mode.encoder_mode(), ..EncoderConfig::default() };
        let mut d_hidden = 0usize;
        while lines.peek().map(|l| l.starts_with("config ")).unwrap_or(false) {
            let line = lines.next().unwrap();
            let mut parts = line.split_whitespace().skip(1);
            let key = parts.next().ok_or_else(|| Error::Checkpoint("bad config line".into()))?;
            let val: usize = parts
                .next()
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::Checkpoint(format!("bad config value for `{key}`")))?;
            match key {
                "d_word" => enc.d_word = val,
                "d_pos" => enc.d_pos = val,
                "d_slot" => enc.d_slot = val,
                "d_model" => enc.d_model = val,
                "d_ff" => enc.d_ff = val,
                "n_layers" => enc.n_layers = val,
                "n_heads" => enc.n_heads = val,
                "max_len" => enc.max_len = val,
                "d_hidden" => d_hidden = val,
                other => return Err(Error::Checkpoint(format!("unknown config key `{other}`"))),
            }
        }
        let seed_line = expect(&mut lines, "seed")?;
        let seed: u64 = seed_line
            .strip_prefix("seed ")
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Checkpoint("bad seed line".into()))?;
        let count_line = |line: String, tag: &str| -> Result<usize> {
            line.strip_prefix(&format!("{tag} "))
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Checkpoint(format!("bad {tag} count line")))
        };
        let n_labels = count_line(expect(&mut lines, "labels")?, "labels")?;
        let mut labels = vec![Label::Dummy];
        for _ in 0..n_labels {
            let raw = expect(&mut lines, "label")?;
            labels.push(Label::parse(&raw)?);
        }
        let n_words = count_line(expect(&mut lines, "vocab")?, "vocab")?;
        let mut words = Vec::with_capacity(n_words);
        for _ in 0..n_words {
            words.push(expect(&mut lines, "vocab entry")?);
        }
        let store = ParamStore::read_params(&mut lines, seed)?;
        Ok(ParserModel {
            mode,
            enc,
            d_hidden,
            vocab: Vocab::from_tokens(words),
            labels: LabelVocab::from_labels(labels),
            store,
        })
    }
}

#[derive(Debug, Clone, Default)]
pub struct TrainLog {
    pub lines: Vec<String>,
    pub best_dev_em: f64,
    pub best_epoch: usize,
    /// Accumulated over every decode of the run.
    pub stats: DecodeStats,
}

/// Exact match of two trees in original form (after undoing binarization and
/// chain collapsing); decode or debinarize failures count as mismatches.
fn gold_original(gold_binarized: &ParseTree) -> Result<ParseTree> {
    Ok(expand_unary(&debinarize(gold_binarized)?))
}

fn exact_match_rate(model: &ParserModel, examples: &[TrainExample]) -> (f64, DecodeStats) {
    let mut hits = 0usize;
    let mut stats = DecodeStats::default();
    for ex in examples {
        let Ok(gold) = gold_original(&ex.gold) else { continue };
        if let Ok(out) = model.decode_utt(&ex.utt.tokens, ex.tags.as_ref()) {
            stats.multi_split_uses += out.stats.multi_split_uses;
            if let Ok(pred) = debinarize(&out.tree) {
                if expand_unary(&pred) == gold {
                    hits += 1;
                }
            }
        }
    }
    if examples.is_empty() {
        (0.0, stats)
    } else {
        (hits as f64 / examples.len() as f64, stats)
    }
}

/// Shuffled minibatch hinge-loss training with best-dev checkpointing.
/// Deterministic for a fixed seed: the data order, initialization, and every
/// update depend only on the configuration.
pub fn train(
    train_ex: &[TrainExample],
    dev_ex: &[TrainExample],
    cfg: &TrainConfig,
) -> Result<(ParserModel, TrainLog)> {
    if train_ex.is_empty() {
        return Err(Error::Train("empty training corpus".into()));
    }
    cfg.validate()?;
    let vocab = Vocab::build(train_ex.iter().flat_map(|e| e.utt.tokens.iter()));
    let golds: Vec<ParseTree> = train_ex.iter().map(|e| e.gold.clone()).collect();
    let labels = LabelVocab::build(&golds);
    let mut model = ParserModel::init(cfg, vocab, labels)?;

    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed.wrapping_add(0x7261_696e));
    let mut optim = OptimState::new(cfg.lr);
    let mut log = TrainLog::default();
    let mut best_store = model.store.clone();
    let mut best_em = -1.0;
    let mut order: Vec<usize> = (0..train_ex.len()).collect();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut grads = Gradients::new();
            for &idx in batch {
                let ex = &train_ex[idx];
                let mut tape = Tape::new();
                let b = model.boundaries_for(&mut tape, &ex.utt.tokens, ex.tags.as_ref())?;
                let scorer = NetworkScorer::from_tape(&tape, &model.store, &b);
                let outcome =
                    margin_loss(&ex.gold, &model.labels, &scorer, model.mode.use_split())?;
                epoch_loss += outcome.loss;
                if outcome.loss <= 0.0 {
                    continue;
                }
                let use_split = model.mode.use_split();
                let s_rival =
                    tree_score_tape(&mut tape, &model.store, &model.labels, &b, &outcome.rival, use_split)?;
                let s_gold =
                    tree_score_tape(&mut tape, &model.store, &model.labels, &b, &ex.gold, use_split)?;
                let theta = tape.constant(Tensor::scalar(outcome.theta));
                let diff = tape.sub(s_rival, s_gold);
                let augmented = tape.add(diff, theta);
                let hinge = tape.relu(augmented);
                grads.merge(tape.backward(hinge)?);
            }
            grads.scale(1.0 / batch.len() as f64);
            grads.fill_missing(&model.store);
            adam_step(&mut model.store, &mut optim, &grads)?;
        }
        let mean_loss = epoch_loss / train_ex.len() as f64;
        if epoch % cfg.eval_every == 0 || epoch == cfg.epochs {
            let (dev_em, stats) = if dev_ex.is_empty() {
                exact_match_rate(&model, train_ex)
            } else {
                exact_match_rate(&model, dev_ex)
            };
            log.stats.multi_split_uses += stats.multi_split_uses;
            if dev_em > best_em {
                best_em = dev_em;
                best_store = model.store.clone();
                log.best_epoch = epoch;
            }
            log.lines.push(format!("epoch {epoch} loss {mean_loss:.4} dev_em {dev_em:.4}"));
        } else {
            log.lines.push(format!("epoch {epoch} loss {mean_loss:.4}"));
        }
    }
    log.best_dev_em = best_em.max(0.0);
    model.store = best_store;
    Ok((model, log))
}

/// Exhaustive reference decoders used by tests. Valid only for
/// split-independent scorers (such as [`TableScorer`]), where the chart's
/// split choice cannot change any label score.
pub mod oracle {
    use super::*;

    /// Recursively enumerates every binarized labeled tree over `(i, j)`
    /// without memoization, applying the same tie rules as the chart: lowest
    /// label id first, then lowest split fence.
    pub fn best_tree(
        i: usize,
        j: usize,
        labels: &LabelVocab,
        scorer: &dyn SpanScorer,
        cost: Option<CostFn>,
    ) -> (ParseTree, f64) {
        let scores = scorer.scores(i, j, None);
        let (label, label_score) = argmax_label(&scores, i, j, cost);
        if j - i == 1 {
            return (ParseTree::new(labels.label(label).clone(), (i, j), vec![]), label_score);
        }
        let mut best: Option<(ParseTree, ParseTree, f64)> = None;
        for k in i + 1..j {
            let (lt, ls) = best_tree(i, k, labels, scorer, cost);
            let (rt, rs) = best_tree(k, j, labels, scorer, cost);
            let total = ls + rs;
            if best.as_ref().map(|(_, _, s)| total > *s).unwrap_or(true) {
                best = Some((lt, rt, total));
            }
        }
        let (lt, rt, children_score) = best.unwrap();
        (
            ParseTree::new(labels.label(label).clone(), (i, j), vec![lt, rt]),
            label_score + children_score,
        )
    }
}
