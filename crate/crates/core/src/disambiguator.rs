//! Slot-disambiguation classifier: a small binary model that decides whether
//! a lexicon match occurrence is a real slot mention in its utterance.
//!
//! A candidate is presented to the classifier by wrapping the matched tokens
//! with per-category boundary marker tokens and prepending a CLS token; the
//! CLS hidden state feeds a two-class softmax head. Kept occurrences then
//! drive the parser's slot-category input features.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::encoder::{self, embed_tokens, encode, EncoderConfig, EncoderMode, Vocab};
use crate::error::{Error, Result};
use crate::lexicon::{Kept, Lexicon, MatchOccurrence};
use crate::numcore::{adam_step, Gradients, OptimState, ParamStore, Tape};
use crate::treebank::{span_display, Label, ParseTree, Utterance};

/// One classification instance: an utterance, a match occurrence in it, and
/// whether the gold tree labels that exact span with that category.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DisambExample {
    pub tokens: Vec<String>,
    pub occ: MatchOccurrence,
    pub label: bool,
}

/// Reserved classifier tokens: one left and one right boundary marker per
/// slot category, plus the CLS token.
#[derive(Debug, Clone)]
pub struct MarkerVocab {
    categories: Vec<String>,
}

pub const CLS_TOKEN: &str = "[CLS]";

impl MarkerVocab {
    pub fn new(categories: Vec<String>) -> Self {
        MarkerVocab { categories }
    }

    pub fn from_lexicon(lex: &Lexicon) -> Self {
        MarkerVocab { categories: lex.categories().to_vec() }
    }

    pub fn left(category: &str) -> String {
        format!("[{category}.left]")
    }

    pub fn right(category: &str) -> String {
        format!("[{category}.right]")
    }

    /// All reserved tokens: 2 x |categories| markers plus CLS.
    pub fn tokens(&self) -> Vec<String> {
        let mut out = vec![CLS_TOKEN.to_string()];
        for c in &self.categories {
            out.push(Self::left(c));
            out.push(Self::right(c));
        }
        out
    }

    pub fn n_markers(&self) -> usize {
        2 * self.categories.len()
    }
}

/// Collects `(span, category)` pairs of slot nodes in an original-form tree.
fn gold_slot_spans(tree: &ParseTree) -> BTreeSet<(usize, usize, String)> {
    let mut out = BTreeSet::new();
    fn walk(t: &ParseTree, out: &mut BTreeSet<(usize, usize, String)>) {
        if let Label::Slot(name) = &t.label {
            out.insert((t.span.0, t.span.1, name.clone()));
        }
        for c in &t.children {
            walk(c, out);
        }
    }
    walk(tree, &mut out);
    out
}

/// One training example per lexicon match occurrence in the utterance;
/// positive iff the gold tree has a slot node with that exact span and
/// category. All negatives are kept.
pub fn gen_examples(tree: &ParseTree, utt: &Utterance, lex: &Lexicon) -> Vec<DisambExample> {
    let gold = gold_slot_spans(tree);
    crate::lexicon::match_spans(utt, lex, lex.max_value_len())
        .into_iter()
        .map(|occ| {
            let label = gold.contains(&(occ.span.0, occ.span.1, occ.category.clone()));
            DisambExample { tokens: utt.tokens.clone(), occ, label }
        })
        .collect()
}

/// `[CLS] + tokens[..i] + [left] + tokens[i..j] + [right] + tokens[j..]`;
/// always `n + 3` tokens long.
pub fn insert_markers(tokens: &[String], occ: &MatchOccurrence) -> Vec<String> {
    let (i, j) = occ.span;
    let mut out = Vec::with_capacity(tokens.len() + 3);
    out.push(CLS_TOKEN.to_string());
    out.extend_from_slice(&tokens[..i]);
    out.push(MarkerVocab::left(&occ.category));
    out.extend_from_slice(&tokens[i..j]);
    out.push(MarkerVocab::right(&occ.category));
    out.extend_from_slice(&tokens[j..]);
    out
}

/// The trained classifier: its own vocabulary (marker tokens included), a
/// small encoder under the `cls_` parameter prefix, and a two-class head.
#[derive(Debug, Clone)]
pub struct DisambModel {
    pub enc: EncoderConfig,
    pub vocab: Vocab,
    pub store: ParamStore,
}

const PREFIX: &str = "cls_";

impl DisambModel {
    pub fn init(enc: EncoderConfig, mut vocab: Vocab, markers: &MarkerVocab, seed: u64) -> Result<Self> {
        let mut enc = enc;
        enc.mode = EncoderMode::Base;
        enc.validate()?;
        for t in markers.tokens() {
            vocab.intern(&t);
        }
        let mut store = ParamStore::new(seed);
        encoder::register_params(&mut store, &enc, PREFIX, vocab.len(), 1);
        store.add_zeros("cls_head_w", vec![enc.d_model, 2]);
        store.add_zeros("cls_head_b", vec![2]);
        Ok(DisambModel { enc, vocab, store })
    }

    /// Class logits `[false, true]` for a marker-wrapped token sequence,
    /// left on the tape so training can backpropagate through them.
    fn logits(&self, tape: &mut Tape, store: &ParamStore, tokens: &[String]) -> Result<crate::numcore::Var> {
        let x = embed_tokens(tape, store, &self.enc, PREFIX, &self.vocab, tokens, None)?;
        let h = encode(tape, store, &self.enc, PREFIX, x)?;
        // row 0 is the start sentinel; the CLS token sits at row 1
        let cls = tape.row(h, 1);
        let w = tape.param(store, "cls_head_w");
        let b = tape.param(store, "cls_head_b");
        let z = tape.matmul(cls, w);
        Ok(tape.add(z, b))
    }

    /// P(occurrence is a true slot mention).
    pub fn classify(&self, tokens: &[String], occ: &MatchOccurrence) -> Result<f64> {
        let marked = insert_markers(tokens, occ);
        let mut tape = Tape::new();
        let z = self.logits(&mut tape, &self.store, &marked)?;
        let z = tape.value(z).data().to_vec();
        let m = z[0].max(z[1]);
        let e0 = (z[0] - m).exp();
        let e1 = (z[1] - m).exp();
        Ok(e1 / (e0 + e1))
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let mut buf = Vec::new();
        writeln!(buf, "topspan-disamb v1")?;
        for (k, v) in [
            ("d_word", self.enc.d_word),
            ("d_pos", self.enc.d_pos),
            ("d_slot", self.enc.d_slot),
            ("d_model", self.enc.d_model),
            ("d_ff", self.enc.d_ff),
            ("n_layers", self.enc.n_layers),
            ("n_heads", self.enc.n_heads),
            ("max_len", self.enc.max_len),
        ] {
            writeln!(buf, "config {k} {v}")?;
        }
        writeln!(buf, "seed {}", self.store.seed())?;
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
        let header = lines.next().ok_or_else(|| Error::Checkpoint("empty file".into()))?;
        if header != "topspan-disamb v1" {
            return Err(Error::Checkpoint(format!("unexpected header `{header}`")));
        }
        let mut enc = EncoderConfig { mode: EncoderMode::Base, ..EncoderConfig::default() };
        while lines.peek().map(|l| l.starts_with("config ")).unwrap_or(false) {
            let line = lines.next().unwrap();
            let mut parts = line.split_whitespace().skip(1);
            let key = parts
                .next()
                .ok_or_else(|| Error::Checkpoint("bad config line".into()))?
                .to_string();
            let val: usize = parts
                .next()
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::Checkpoint(format!("bad config value for `{key}`")))?;
            match key.as_str() {
                "d_word" => enc.d_word = val,
                "d_pos" => enc.d_pos = val,
                "d_slot" => enc.d_slot = val,
                "d_model" => enc.d_model = val,
                "d_ff" => enc.d_ff = val,
                "n_layers" => enc.n_layers = val,
                "n_heads" => enc.n_heads = val,
                "max_len" => enc.max_len = val,
                other => return Err(Error::Checkpoint(format!("unknown config key `{other}`"))),
            }
        }
        let seed_line = lines.next().ok_or_else(|| Error::Checkpoint("missing seed".into()))?;
        let seed: u64 = seed_line
            .strip_prefix("seed ")
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Checkpoint("bad seed line".into()))?;
        let n_words: usize = lines
            .next()
            .and_then(|l| l.strip_prefix("vocab ").and_then(|s| s.parse().ok()))
            .ok_or_else(|| Error::Checkpoint("bad vocab count line".into()))?;
        let mut words = Vec::with_capacity(n_words);
        for _ in 0..n_words {
            words.push(lines.next().ok_or_else(|| Error::Checkpoint("missing vocab entry".into()))?);
        }
        let store = ParamStore::read_params(&mut lines, seed)?;
        Ok(DisambModel { enc, vocab: Vocab::from_tokens(words), store })
    }
}

/// Marks each occurrence Kept iff `P(true) >= threshold`; order preserved.
pub fn filter_occurrences(
    model: &DisambModel,
    tokens: &[String],
    occs: &[MatchOccurrence],
    threshold: f64,
) -> Result<Vec<MatchOccurrence>> {
    let mut out = Vec::with_capacity(occs.len());
    for occ in occs {
        let p = model.classify(tokens, occ)?;
        let mut occ = occ.clone();
        occ.kept = if p >= threshold { Kept::Kept } else { Kept::Removed };
        out.push(occ);
    }
    Ok(out)
}

/// Keeps exactly the occurrences whose `(span, category)` is a gold slot
/// span; the upper-bound filter usable only where gold trees exist.
pub fn oracle_filter(occs: &[MatchOccurrence], gold: &ParseTree) -> Vec<MatchOccurrence> {
    let spans = gold_slot_spans(gold);
    occs.iter()
        .map(|occ| {
            let mut occ = occ.clone();
            occ.kept = if spans.contains(&(occ.span.0, occ.span.1, occ.category.clone())) {
                Kept::Kept
            } else {
                Kept::Removed
            };
            occ
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct DisambTrainConfig {
    pub enc: EncoderConfig,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Probability of replacing a matched-value token with the unknown token
    /// during training. Lexicon values are replaceable at run time, so the
    /// keep/remove decision must rest on the surrounding context rather than
    /// on the value's surface form; dropping value tokens enforces that.
    pub value_dropout: f64,
}

impl Default for DisambTrainConfig {
    fn default() -> Self {
        DisambTrainConfig {
            enc: EncoderConfig::default(),
            epochs: 30,
            lr: 1e-3,
            batch_size: 16,
            seed: 1,
            value_dropout: 0.3,
        }
    }
}

/// Held-out accuracy of the classifier at threshold 0.5.
pub fn disamb_accuracy(model: &DisambModel, examples: &[DisambExample]) -> Result<f64> {
    if examples.is_empty() {
        return Ok(0.0);
    }
    let mut hits = 0usize;
    for ex in examples {
        let p = model.classify(&ex.tokens, &ex.occ)?;
        if (p >= 0.5) == ex.label {
            hits += 1;
        }
    }
    Ok(hits as f64 / examples.len() as f64)
}

/// Cross-entropy training of the classifier. Deterministic per seed; the
/// training set must contain both classes.
pub fn train_disamb(
    train_ex: &[DisambExample],
    held_ex: &[DisambExample],
    markers: &MarkerVocab,
    cfg: &DisambTrainConfig,
) -> Result<(DisambModel, Vec<String>)> {
    if train_ex.is_empty() {
        return Err(Error::Train("empty disambiguation training set".into()));
    }
    let n_pos = train_ex.iter().filter(|e| e.label).count();
    if n_pos == 0 || n_pos == train_ex.len() {
        return Err(Error::Train(
            "disambiguation training set contains a single class".into(),
        ));
    }
    let vocab = Vocab::build(train_ex.iter().flat_map(|e| e.tokens.iter()));
    let mut model = DisambModel::init(cfg.enc.clone(), vocab, markers, cfg.seed)?;

    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed.wrapping_add(0x6469_7361));
    let mut optim = OptimState::new(cfg.lr);
    let mut order: Vec<usize> = (0..train_ex.len()).collect();
    let mut log = Vec::new();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut grads = Gradients::new();
            for &idx in batch {
                let ex = &train_ex[idx];
                let mut tokens = ex.tokens.clone();
                for t in &mut tokens[ex.occ.span.0..ex.occ.span.1] {
                    if rng.gen_bool(cfg.value_dropout) {
                        *t = encoder::UNK_TOKEN.to_string();
                    }
                }
                let marked = insert_markers(&tokens, &ex.occ);
                let mut tape = Tape::new();
                let z = model.logits(&mut tape, &model.store, &marked)?;
                let target = ex.label as usize;
                let loss = tape.cross_entropy_logits(z, target);
                epoch_loss += tape.value(loss).item();
                grads.merge(tape.backward(loss)?);
            }
            grads.scale(1.0 / batch.len() as f64);
            grads.fill_missing(&model.store);
            adam_step(&mut model.store, &mut optim, &grads)?;
        }
        let held = if held_ex.is_empty() { train_ex } else { held_ex };
        let acc = disamb_accuracy(&model, held)?;
        log.push(format!(
            "epoch {epoch} loss {:.4} held_acc {acc:.4}",
            epoch_loss / train_ex.len() as f64
        ));
    }
    Ok((model, log))
}

/// TSV example files: `category<TAB>i:j<TAB>True|False<TAB>tokens`, with the
/// span shown over 1-indexed tokens.
pub fn save_examples(examples: &[DisambExample], path: &std::path::Path) -> Result<()> {
    let mut buf = Vec::new();
    for ex in examples {
        writeln!(
            buf,
            "{}\t{}\t{}\t{}",
            ex.occ.category,
            span_display(ex.occ.span),
            if ex.label { "True" } else { "False" },
            ex.tokens.join(" ")
        )?;
    }
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn load_examples(path: &std::path::Path) -> Result<Vec<DisambExample>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(Error::parse_at(lineno, "expected 4 tab-separated fields"));
        }
        let span = {
            let (a, b) = fields[1]
                .split_once(':')
                .ok_or_else(|| Error::parse_at(lineno, "bad span, expected i:j"))?;
            let a: usize = a.parse().map_err(|_| Error::parse_at(lineno, "bad span start"))?;
            let b: usize = b.parse().map_err(|_| Error::parse_at(lineno, "bad span end"))?;
            if a == 0 || b < a {
                return Err(Error::parse_at(lineno, "span out of range"));
            }
            (a - 1, b)
        };
        let label = match fields[2] {
            "True" => true,
            "False" => false,
            _ => return Err(Error::parse_at(lineno, "label must be True or False")),
        };
        let tokens: Vec<String> = fields[3].split_whitespace().map(str::to_string).collect();
        if span.1 > tokens.len() {
            return Err(Error::parse_at(lineno, "span exceeds utterance length"));
        }
        out.push(DisambExample {
            tokens,
            occ: MatchOccurrence {
                category: fields[0].to_string(),
                span,
                kept: Kept::Pending,
            },
            label,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::build_lexicon;
    use crate::treebank::parse_corpus;

    fn mini_corpus_text() -> &'static str {
        "[IN:GET_INFO_TRAFFIC How is traffic heading to [SL:DESTINATION [IN:GET_LOCATION_HOME [SL:TYPE_RELATION Dad ] 's house ] ] ]\n\
         [IN:CALL call [SL:CONTACT dad ] ]\n\
         [IN:GET_EVENT events [SL:SEARCH_RADIUS to ] ]\n\
         [IN:GET_DIRECTIONS directions to the [SL:DESTINATION house ] ]\n"
    }

    fn occ(category: &str, span: (usize, usize)) -> MatchOccurrence {
        MatchOccurrence { category: category.to_string(), span, kept: Kept::Pending }
    }

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn marker_insertion_wraps_span() {
        let tokens = toks("a b c");
        let marked = insert_markers(&tokens, &occ("SL:X", (1, 2)));
        assert_eq!(marked, toks("[CLS] a [SL:X.left] b [SL:X.right] c"));
        assert_eq!(marked.len(), tokens.len() + 3);
    }

    #[test]
    fn marker_insertion_handles_full_span() {
        let tokens = toks("dad 's house");
        let marked = insert_markers(&tokens, &occ("SL:DESTINATION", (0, 3)));
        assert_eq!(marked[0], CLS_TOKEN);
        assert_eq!(marked[1], "[SL:DESTINATION.left]");
        assert_eq!(marked[5], "[SL:DESTINATION.right]");
        assert_eq!(marked.len(), 6);
    }

    #[test]
    fn marker_vocab_has_two_tokens_per_category_plus_cls() {
        let mv = MarkerVocab::new(vec!["SL:A".into(), "SL:B".into(), "SL:C".into()]);
        assert_eq!(mv.n_markers(), 6);
        assert_eq!(mv.tokens().len(), 7);
    }

    #[test]
    fn gen_examples_labels_follow_gold_tree() {
        let corpus = parse_corpus(mini_corpus_text()).unwrap();
        let trees: Vec<_> = corpus.iter().map(|(t, _)| t.clone()).collect();
        let pairs: Vec<_> = corpus.iter().map(|(t, u)| (t.clone(), u.clone())).collect();
        let (lex, _) = build_lexicon(&pairs);
        let (tree, utt) = &corpus[0];
        let examples = gen_examples(tree, utt, &lex);
        let find = |cat: &str, span: (usize, usize)| {
            examples
                .iter()
                .find(|e| e.occ.category == cat && e.occ.span == span)
                .unwrap_or_else(|| panic!("missing example {cat} {span:?}"))
        };
        assert!(find("SL:DESTINATION", (5, 8)).label);
        assert!(find("SL:TYPE_RELATION", (5, 6)).label);
        assert!(!find("SL:CONTACT", (5, 6)).label);
        assert!(!find("SL:DESTINATION", (7, 8)).label);
        assert!(!find("SL:SEARCH_RADIUS", (4, 5)).label);
        let _ = trees;
    }

    #[test]
    fn gen_examples_empty_when_nothing_matches() {
        let corpus = parse_corpus(mini_corpus_text()).unwrap();
        let pairs: Vec<_> = corpus.iter().map(|(t, u)| (t.clone(), u.clone())).collect();
        let (lex, _) = build_lexicon(&pairs);
        let utt = Utterance::new(toks("nothing matches here")).unwrap();
        let tree = ParseTree::new(Label::parse("IN:UNSUPPORTED").unwrap(), (0, 3), vec![]);
        assert!(gen_examples(&tree, &utt, &lex).is_empty());
    }

    #[test]
    fn every_covered_gold_slot_yields_exactly_one_positive() {
        let corpus = parse_corpus(mini_corpus_text()).unwrap();
        let pairs: Vec<_> = corpus.iter().map(|(t, u)| (t.clone(), u.clone())).collect();
        let (lex, _) = build_lexicon(&pairs);
        for (tree, utt) in &corpus {
            let examples = gen_examples(tree, utt, &lex);
            for (i, j, cat) in gold_slot_spans(tree) {
                let positives = examples
                    .iter()
                    .filter(|e| e.label && e.occ.span == (i, j) && e.occ.category == cat)
                    .count();
                assert_eq!(positives, 1, "{cat} {}", span_display((i, j)));
            }
        }
    }

    fn tiny_enc() -> EncoderConfig {
        EncoderConfig {
            d_word: 8,
            d_pos: 8,
            d_slot: 8,
            d_model: 16,
            d_ff: 32,
            n_layers: 1,
            n_heads: 2,
            max_len: 24,
            mode: EncoderMode::Base,
        }
    }

    #[test]
    fn untrained_model_is_uncommitted() {
        let mv = MarkerVocab::new(vec!["SL:X".into()]);
        let vocab = Vocab::build(toks("a b c"));
        let model = DisambModel::init(tiny_enc(), vocab, &mv, 3).unwrap();
        let p = model.classify(&toks("a b c"), &occ("SL:X", (1, 2))).unwrap();
        assert_eq!(p, 0.5);
    }

    #[test]
    fn filter_is_monotone_in_threshold() {
        let mv = MarkerVocab::new(vec!["SL:X".into(), "SL:Y".into()]);
        let vocab = Vocab::build(toks("a b c d"));
        let model = DisambModel::init(tiny_enc(), vocab, &mv, 4).unwrap();
        let tokens = toks("a b c d");
        let occs = vec![occ("SL:X", (0, 2)), occ("SL:Y", (1, 3)), occ("SL:X", (3, 4))];
        let mut prev_kept = usize::MAX;
        for threshold in [0.0, 0.3, 0.5, 0.8, 1.1] {
            let filtered = filter_occurrences(&model, &tokens, &occs, threshold).unwrap();
            assert_eq!(filtered.len(), occs.len());
            let kept = filtered.iter().filter(|o| o.kept == Kept::Kept).count();
            assert!(kept <= prev_kept, "threshold {threshold} added kept occurrences");
            prev_kept = kept;
            if threshold == 0.0 {
                assert_eq!(kept, occs.len());
            }
            if threshold > 1.0 {
                assert_eq!(kept, 0);
            }
        }
    }

    #[test]
    fn oracle_filter_keeps_exactly_gold_spans() {
        let corpus = parse_corpus(mini_corpus_text()).unwrap();
        let pairs: Vec<_> = corpus.iter().map(|(t, u)| (t.clone(), u.clone())).collect();
        let (lex, _) = build_lexicon(&pairs);
        let (tree, utt) = &corpus[0];
        let occs = crate::lexicon::match_spans(utt, &lex, lex.max_value_len());
        let filtered = oracle_filter(&occs, tree);
        let kept: Vec<_> = filtered
            .iter()
            .filter(|o| o.kept == Kept::Kept)
            .map(|o| (o.category.clone(), o.span))
            .collect();
        assert_eq!(
            kept,
            vec![
                ("SL:TYPE_RELATION".to_string(), (5, 6)),
                ("SL:DESTINATION".to_string(), (5, 8)),
            ]
        );
        let no_slots = ParseTree::new(Label::parse("IN:UNSUPPORTED").unwrap(), (0, utt.len()), vec![]);
        assert!(oracle_filter(&occs, &no_slots).iter().all(|o| o.kept == Kept::Removed));
    }

    /// Synthetic separable task: the marked token decides the label.
    fn synthetic_examples() -> Vec<DisambExample> {
        let mut out = Vec::new();
        let fillers = ["alpha", "beta", "gamma", "delta", "epsilon", "zeta"];
        for (fi, f1) in fillers.iter().enumerate() {
            for (fj, f2) in fillers.iter().enumerate() {
                if fi == fj {
                    continue;
                }
                for (word, label) in [("good", true), ("bad", false)] {
                    let tokens = toks(&format!("{f1} {word} {f2}"));
                    out.push(DisambExample { tokens, occ: occ("SL:X", (1, 2)), label });
                }
            }
        }
        out
    }

    #[test]
    fn training_solves_a_separable_task() {
        let all = synthetic_examples();
        let (held, train_set): (Vec<_>, Vec<_>) =
            all.iter().cloned().enumerate().partition(|(i, _)| i % 5 == 0);
        let train_set: Vec<_> = train_set.into_iter().map(|(_, e)| e).collect();
        let held: Vec<_> = held.into_iter().map(|(_, e)| e).collect();
        let mv = MarkerVocab::new(vec!["SL:X".into()]);
        let cfg = DisambTrainConfig {
            enc: tiny_enc(),
            epochs: 12,
            lr: 5e-3,
            batch_size: 8,
            seed: 7,
            // the synthetic task's label lives on the marked token itself
            value_dropout: 0.0,
        };
        let (model, log) = train_disamb(&train_set, &held, &mv, &cfg).unwrap();
        let acc = disamb_accuracy(&model, &held).unwrap();
        assert_eq!(acc, 1.0, "log:\n{}", log.join("\n"));
    }

    #[test]
    fn training_rejects_single_class_sets() {
        let mut examples = synthetic_examples();
        examples.retain(|e| e.label);
        let mv = MarkerVocab::new(vec!["SL:X".into()]);
        let err = train_disamb(&examples, &[], &mv, &DisambTrainConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Train(_)));
    }

    #[test]
    fn training_is_deterministic_per_seed() {
        let all = synthetic_examples();
        let mv = MarkerVocab::new(vec!["SL:X".into()]);
        let cfg = DisambTrainConfig { enc: tiny_enc(), epochs: 2, lr: 5e-3, batch_size: 8, seed: 9, value_dropout: 0.0 };
        let (_, log_a) = train_disamb(&all, &[], &mv, &cfg).unwrap();
        let (_, log_b) = train_disamb(&all, &[], &mv, &cfg).unwrap();
        assert_eq!(log_a, log_b);
    }

    #[test]
    fn examples_tsv_round_trips() {
        let corpus = parse_corpus(mini_corpus_text()).unwrap();
        let pairs: Vec<_> = corpus.iter().map(|(t, u)| (t.clone(), u.clone())).collect();
        let (lex, _) = build_lexicon(&pairs);
        let mut all = Vec::new();
        for (tree, utt) in &corpus {
            all.extend(gen_examples(tree, utt, &lex));
        }
        assert!(!all.is_empty());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("examples.tsv");
        save_examples(&all, &path).unwrap();
        let loaded = load_examples(&path).unwrap();
        // lowercasing happens upstream in lexicon matching; round trip is exact
        assert_eq!(all, loaded);
    }

    #[test]
    fn model_checkpoint_round_trips() {
        let all = synthetic_examples();
        let mv = MarkerVocab::new(vec!["SL:X".into()]);
        let cfg = DisambTrainConfig { enc: tiny_enc(), epochs: 1, lr: 5e-3, batch_size: 8, seed: 11, value_dropout: 0.0 };
        let (model, _) = train_disamb(&all, &[], &mv, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("disamb.ckpt");
        model.save(&path).unwrap();
        let loaded = DisambModel::load(&path).unwrap();
        for ex in all.iter().take(5) {
            let a = model.classify(&ex.tokens, &ex.occ).unwrap();
            let b = loaded.classify(&ex.tokens, &ex.occ).unwrap();
            assert_eq!(a, b);
        }
    }
}
