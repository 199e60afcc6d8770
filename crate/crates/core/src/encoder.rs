//! Token embedding assembly, the small self-attention encoder, fence-boundary
//! vectors, and span representations.
//!
//! Three embedding modes: the base mode concatenates word and position
//! vectors; lexicon injection appends the summed slot-category vector; the
//! generalized mode additionally replaces the word vector of lexicon-covered
//! tokens with their slot-category vector, so two unseen values of the same
//! category embed identically.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::lexicon::TokenTags;
use crate::numcore::{ParamStore, Tape, Var};

/// How token inputs are assembled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncoderMode {
    Base,
    LexiconInjected,
    Generalized,
}

#[derive(Debug, Clone)]
pub struct EncoderConfig {
    pub d_word: usize,
    pub d_pos: usize,
    pub d_slot: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub max_len: usize,
    pub mode: EncoderMode,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            d_word: 64,
            d_pos: 64,
            d_slot: 64,
            d_model: 128,
            d_ff: 256,
            n_layers: 2,
            n_heads: 4,
            max_len: 64,
            mode: EncoderMode::Base,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_model % 2 != 0 {
            return Err(Error::Config("d_model must be even (boundary halving)".into()));
        }
        if self.d_model % self.n_heads != 0 {
            return Err(Error::Config("d_model must be divisible by n_heads".into()));
        }
        if self.mode == EncoderMode::Generalized && self.d_slot != self.d_word {
            return Err(Error::Config(
                "generalized mode requires d_slot == d_word (the slot vector substitutes the word vector)".into(),
            ));
        }
        Ok(())
    }

    pub fn input_width(&self) -> usize {
        match self.mode {
            EncoderMode::Base => self.d_word + self.d_pos,
            EncoderMode::LexiconInjected | EncoderMode::Generalized => {
                self.d_word + self.d_pos + self.d_slot
            }
        }
    }

    pub fn uses_lexicon(&self) -> bool {
        self.mode != EncoderMode::Base
    }
}

/// Reserved vocabulary ids.
pub const UNK_ID: usize = 0;
pub const START_ID: usize = 1;
pub const END_ID: usize = 2;
pub const UNK_TOKEN: &str = "<unk>";
const RESERVED: [&str; 3] = [UNK_TOKEN, "<s>", "</s>"];

/// Closed word vocabulary, lowercased. Line number = id in the file format;
/// ids 0..2 are reserved for UNK and the sentinel tokens.
#[derive(Debug, Clone)]
pub struct Vocab {
    tokens: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl Vocab {
    pub fn from_tokens(tokens: Vec<String>) -> Self {
        let mut all: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        all.extend(tokens);
        let index = all.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocab { tokens: all, index }
    }

    /// Sorted unique lowercased tokens of a corpus, plus the reserved ids.
    pub fn build(utterances: impl IntoIterator<Item = impl AsRef<str>>) -> Self {
        let mut set: std::collections::BTreeSet<String> = Default::default();
        for t in utterances {
            set.insert(t.as_ref().to_lowercase());
        }
        Vocab::from_tokens(set.into_iter().collect())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Id of a surface token; out-of-vocabulary maps to UNK, never an error.
    pub fn id(&self, token: &str) -> usize {
        self.index.get(&token.to_lowercase()).copied().unwrap_or(UNK_ID)
    }

    /// Adds a token if absent and returns its id (used for marker tokens).
    pub fn intern(&mut self, token: &str) -> usize {
        if let Some(&id) = self.index.get(token) {
            return id;
        }
        let id = self.tokens.len();
        self.tokens.push(token.to_string());
        self.index.insert(token.to_string(), id);
        id
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens[RESERVED.len()..]
    }

    pub fn all_tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// Registers all encoder parameters under `prefix` (the parser and the
/// disambiguation classifier each own an encoder with separate names).
pub fn register_params(
    store: &mut ParamStore,
    cfg: &EncoderConfig,
    prefix: &str,
    vocab_size: usize,
    n_slot_ids: usize,
) {
    store.add_uniform(&format!("{prefix}word_emb"), vec![vocab_size, cfg.d_word], 0.1);
    store.add_uniform(&format!("{prefix}pos_emb"), vec![cfg.max_len, cfg.d_pos], 0.1);
    if cfg.uses_lexicon() {
        store.add_uniform(&format!("{prefix}slot_emb"), vec![n_slot_ids, cfg.d_slot], 0.1);
    }
    store.add_fan_in(&format!("{prefix}in_w"), cfg.input_width(), cfg.d_model);
    store.add_zeros(&format!("{prefix}in_b"), vec![cfg.d_model]);
    let d_head = cfg.d_model / cfg.n_heads;
    for l in 0..cfg.n_layers {
        store.add_ones(&format!("{prefix}l{l}_ln1_g"), vec![cfg.d_model]);
        store.add_zeros(&format!("{prefix}l{l}_ln1_b"), vec![cfg.d_model]);
        for h in 0..cfg.n_heads {
            store.add_fan_in(&format!("{prefix}l{l}_h{h}_wq"), cfg.d_model, d_head);
            store.add_fan_in(&format!("{prefix}l{l}_h{h}_wk"), cfg.d_model, d_head);
            store.add_fan_in(&format!("{prefix}l{l}_h{h}_wv"), cfg.d_model, d_head);
        }
        store.add_fan_in(&format!("{prefix}l{l}_wo"), cfg.d_model, cfg.d_model);
        store.add_ones(&format!("{prefix}l{l}_ln2_g"), vec![cfg.d_model]);
        store.add_zeros(&format!("{prefix}l{l}_ln2_b"), vec![cfg.d_model]);
        store.add_fan_in(&format!("{prefix}l{l}_ff_w1"), cfg.d_model, cfg.d_ff);
        store.add_zeros(&format!("{prefix}l{l}_ff_b1"), vec![cfg.d_ff]);
        store.add_fan_in(&format!("{prefix}l{l}_ff_w2"), cfg.d_ff, cfg.d_model);
        store.add_zeros(&format!("{prefix}l{l}_ff_b2"), vec![cfg.d_model]);
    }
    store.add_ones(&format!("{prefix}ln_g"), vec![cfg.d_model]);
    store.add_zeros(&format!("{prefix}ln_b"), vec![cfg.d_model]);
}

/// Builds the input matrix for `tokens` with sentinels prepended/appended:
/// row t is `[w; p]`, `[w; p; q]`, or the generalized case split, per mode.
/// `tags` must be present in the lexicon modes.
pub fn embed_tokens(
    tape: &mut Tape,
    store: &ParamStore,
    cfg: &EncoderConfig,
    prefix: &str,
    vocab: &Vocab,
    tokens: &[String],
    tags: Option<&TokenTags>,
) -> Result<Var> {
    let n = tokens.len();
    if n + 2 > cfg.max_len {
        return Err(Error::TooLong(n + 2, cfg.max_len));
    }
    let mut word_ids = Vec::with_capacity(n + 2);
    word_ids.push(START_ID);
    word_ids.extend(tokens.iter().map(|t| vocab.id(t)));
    word_ids.push(END_ID);

    let word_table = tape.param(store, &format!("{prefix}word_emb"));
    let words = tape.gather(word_table, &word_ids);
    let pos_table = tape.param(store, &format!("{prefix}pos_emb"));
    let pos_ids: Vec<usize> = (0..n + 2).collect();
    let positions = tape.gather(pos_table, &pos_ids);

    match cfg.mode {
        EncoderMode::Base => Ok(tape.concat_cols(&[words, positions])),
        EncoderMode::LexiconInjected | EncoderMode::Generalized => {
            let tags = tags.expect("lexicon mode requires token tags");
            assert_eq!(tags.ids.len(), n, "tags must cover every token");
            let mut lists: Vec<Vec<usize>> = Vec::with_capacity(n + 2);
            lists.push(vec![0]); // sentinel carries the out-of-category tag
            lists.extend(tags.ids.iter().cloned());
            lists.push(vec![0]);
            let slot_table = tape.param(store, &format!("{prefix}slot_emb"));
            let slots = tape.gather_sum(slot_table, &lists);
            if cfg.mode == EncoderMode::LexiconInjected {
                Ok(tape.concat_cols(&[words, positions, slots]))
            } else {
                let mut mask = vec![false; n + 2];
                for (m, &f) in mask[1..=n].iter_mut().zip(&tags.in_lexicon) {
                    *m = f;
                }
                let first = tape.row_select(slots, words, &mask);
                Ok(tape.concat_cols(&[first, positions, slots]))
            }
        }
    }
}

/// Two-layer (by default) pre-norm self-attention encoder. Returns one
/// `d_model` row per input row, sentinels included.
pub fn encode(
    tape: &mut Tape,
    store: &ParamStore,
    cfg: &EncoderConfig,
    prefix: &str,
    x: Var,
) -> Result<Var> {
    let rows = tape.value(x).rows();
    if rows > cfg.max_len {
        return Err(Error::TooLong(rows, cfg.max_len));
    }
    let in_w = tape.param(store, &format!("{prefix}in_w"));
    let in_b = tape.param(store, &format!("{prefix}in_b"));
    let mut h = tape.matmul(x, in_w);
    h = tape.add_row(h, in_b);

    let d_head = cfg.d_model / cfg.n_heads;
    let scale = 1.0 / (d_head as f64).sqrt();
    for l in 0..cfg.n_layers {
        let ln1_g = tape.param(store, &format!("{prefix}l{l}_ln1_g"));
        let ln1_b = tape.param(store, &format!("{prefix}l{l}_ln1_b"));
        let normed = tape.layer_norm_rows(h, ln1_g, ln1_b);
        let mut heads = Vec::with_capacity(cfg.n_heads);
        for head in 0..cfg.n_heads {
            let wq = tape.param(store, &format!("{prefix}l{l}_h{head}_wq"));
            let wk = tape.param(store, &format!("{prefix}l{l}_h{head}_wk"));
            let wv = tape.param(store, &format!("{prefix}l{l}_h{head}_wv"));
            let q = tape.matmul(normed, wq);
            let k = tape.matmul(normed, wk);
            let v = tape.matmul(normed, wv);
            let kt = tape.transpose(k);
            let scores = tape.matmul(q, kt);
            let scores = tape.scale(scores, scale);
            let attn = tape.softmax_rows(scores);
            heads.push(tape.matmul(attn, v));
        }
        let merged = tape.concat_cols(&heads);
        let wo = tape.param(store, &format!("{prefix}l{l}_wo"));
        let attended = tape.matmul(merged, wo);
        h = tape.add(h, attended);

        let ln2_g = tape.param(store, &format!("{prefix}l{l}_ln2_g"));
        let ln2_b = tape.param(store, &format!("{prefix}l{l}_ln2_b"));
        let normed = tape.layer_norm_rows(h, ln2_g, ln2_b);
        let w1 = tape.param(store, &format!("{prefix}l{l}_ff_w1"));
        let b1 = tape.param(store, &format!("{prefix}l{l}_ff_b1"));
        let w2 = tape.param(store, &format!("{prefix}l{l}_ff_w2"));
        let b2 = tape.param(store, &format!("{prefix}l{l}_ff_b2"));
        let ff = tape.matmul(normed, w1);
        let ff = tape.add_row(ff, b1);
        let ff = tape.relu(ff);
        let ff = tape.matmul(ff, w2);
        let ff = tape.add_row(ff, b2);
        h = tape.add(h, ff);
    }
    let ln_g = tape.param(store, &format!("{prefix}ln_g"));
    let ln_b = tape.param(store, &format!("{prefix}ln_b"));
    Ok(tape.layer_norm_rows(h, ln_g, ln_b))
}

/// One boundary vector per fence position of an `n`-token utterance.
#[derive(Debug, Clone)]
pub struct BoundarySet {
    vars: Vec<Var>,
}

impl BoundarySet {
    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    /// Number of tokens covered.
    pub fn n_tokens(&self) -> usize {
        self.vars.len() - 1
    }

    pub fn fence(&self, k: usize) -> Var {
        self.vars[k]
    }
}

/// Builds fence vectors from sentinel-padded encoder outputs `h_0..h_{n+1}`:
/// `b_k = [second-half(h_k); first-half(h_{k+1})]` for `k = 0..n`.
pub fn boundaries(tape: &mut Tape, cfg: &EncoderConfig, h: Var, n: usize) -> Result<BoundarySet> {
    if cfg.d_model % 2 != 0 {
        return Err(Error::Config("d_model must be even to halve hidden states".into()));
    }
    assert_eq!(tape.value(h).rows(), n + 2, "encoder output must include sentinels");
    let half = cfg.d_model / 2;
    let mut vars = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let left = tape.row(h, k);
        let right = tape.row(h, k + 1);
        let second = tape.slice(left, half, cfg.d_model);
        let first = tape.slice(right, 0, half);
        vars.push(tape.concat(&[second, first]));
    }
    Ok(BoundarySet { vars })
}

/// Span representation `r(i, j) = b_j - b_i`.
pub fn span_rep(tape: &mut Tape, b: &BoundarySet, i: usize, j: usize) -> Result<Var> {
    if i >= j || j >= b.len() {
        return Err(Error::Span(i, j));
    }
    Ok(tape.sub(b.fence(j), b.fence(i)))
}

/// Span-splitting representation `r̂ = r(i, j) + b_k` for an interior fence.
pub fn span_split_rep(
    tape: &mut Tape,
    b: &BoundarySet,
    i: usize,
    j: usize,
    k: usize,
) -> Result<Var> {
    if !(i < k && k < j) {
        return Err(Error::Span(i, j));
    }
    let r = span_rep(tape, b, i, j)?;
    Ok(tape.add(r, b.fence(k)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::{build_lexicon, match_spans, tag_tokens};
    use crate::numcore::Tensor;
    use crate::treebank::{parse_corpus, Utterance};

    fn tiny_cfg(mode: EncoderMode) -> EncoderConfig {
        EncoderConfig {
            d_word: 4,
            d_pos: 4,
            d_slot: 4,
            d_model: 8,
            d_ff: 16,
            n_layers: 2,
            n_heads: 2,
            max_len: 16,
            mode,
        }
    }

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    fn setup(mode: EncoderMode, seed: u64) -> (EncoderConfig, Vocab, ParamStore) {
        let cfg = tiny_cfg(mode);
        cfg.validate().unwrap();
        let vocab = Vocab::build(toks("how is traffic heading to dad 's house near the mall"));
        let mut store = ParamStore::new(seed);
        register_params(&mut store, &cfg, "", vocab.len(), 5);
        (cfg, vocab, store)
    }

    #[test]
    fn base_mode_shape_includes_sentinels() {
        let (cfg, vocab, store) = setup(EncoderMode::Base, 1);
        let mut tape = Tape::new();
        let x = embed_tokens(&mut tape, &store, &cfg, "", &vocab, &toks("how is traffic"), None)
            .unwrap();
        assert_eq!(tape.value(x).shape(), &[5, 8]);
    }

    #[test]
    fn encode_is_deterministic() {
        let (cfg, vocab, store) = setup(EncoderMode::Base, 2);
        let run = || {
            let mut tape = Tape::new();
            let x = embed_tokens(&mut tape, &store, &cfg, "", &vocab, &toks("to the mall"), None)
                .unwrap();
            let h = encode(&mut tape, &store, &cfg, "", x).unwrap();
            tape.value(h).clone()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn position_embeddings_break_symmetry() {
        let (cfg, vocab, store) = setup(EncoderMode::Base, 3);
        let encode_tokens = |tokens: &[String]| {
            let mut tape = Tape::new();
            let x = embed_tokens(&mut tape, &store, &cfg, "", &vocab, tokens, None).unwrap();
            let h = encode(&mut tape, &store, &cfg, "", x).unwrap();
            tape.value(h).clone()
        };
        let a = encode_tokens(&toks("how is traffic heading"));
        let b = encode_tokens(&toks("how traffic is heading"));
        assert_ne!(a, b);
    }

    #[test]
    fn too_long_input_is_rejected() {
        let (cfg, vocab, store) = setup(EncoderMode::Base, 4);
        let long: Vec<String> = (0..20).map(|i| format!("t{i}")).collect();
        let mut tape = Tape::new();
        let err = embed_tokens(&mut tape, &store, &cfg, "", &vocab, &long, None).unwrap_err();
        assert!(matches!(err, Error::TooLong(..)));
    }

    #[test]
    fn boundary_count_and_halves() {
        let (cfg, vocab, store) = setup(EncoderMode::Base, 5);
        let mut tape = Tape::new();
        let x = embed_tokens(&mut tape, &store, &cfg, "", &vocab, &toks("mall"), None).unwrap();
        let h = encode(&mut tape, &store, &cfg, "", x).unwrap();
        let b = boundaries(&mut tape, &cfg, h, 1).unwrap();
        assert_eq!(b.len(), 2);
        // first half of b_k equals second half of h_k
        let h_val = tape.value(h).clone();
        let b0 = tape.value(b.fence(0)).clone();
        let half = cfg.d_model / 2;
        assert_eq!(&b0.data()[..half], &h_val.row(0)[half..]);
        assert_eq!(&b0.data()[half..], &tape.value(h).row(1)[..half]);
    }

    #[test]
    fn span_rep_telescopes_exactly() {
        let (cfg, vocab, store) = setup(EncoderMode::Base, 6);
        let mut tape = Tape::new();
        let x = embed_tokens(&mut tape, &store, &cfg, "", &vocab, &toks("to the mall near dad"), None)
            .unwrap();
        let h = encode(&mut tape, &store, &cfg, "", x).unwrap();
        let b = boundaries(&mut tape, &cfg, h, 5).unwrap();
        let r02 = span_rep(&mut tape, &b, 0, 2).unwrap();
        let r25 = span_rep(&mut tape, &b, 2, 5).unwrap();
        let r05 = span_rep(&mut tape, &b, 0, 5).unwrap();
        let sum = tape.add(r02, r25);
        let lhs = tape.value(sum).data().to_vec();
        let rhs = tape.value(r05).data();
        for (a, b) in lhs.iter().zip(rhs) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn span_rep_rejects_degenerate_span() {
        let (cfg, vocab, store) = setup(EncoderMode::Base, 7);
        let mut tape = Tape::new();
        let x = embed_tokens(&mut tape, &store, &cfg, "", &vocab, &toks("the mall"), None).unwrap();
        let h = encode(&mut tape, &store, &cfg, "", x).unwrap();
        let b = boundaries(&mut tape, &cfg, h, 2).unwrap();
        assert!(span_rep(&mut tape, &b, 1, 1).is_err());
        assert!(span_split_rep(&mut tape, &b, 0, 1, 1).is_err());
    }

    #[test]
    fn split_rep_differs_by_split_point() {
        let (cfg, vocab, store) = setup(EncoderMode::Base, 8);
        let mut tape = Tape::new();
        let x = embed_tokens(&mut tape, &store, &cfg, "", &vocab, &toks("to the mall near"), None)
            .unwrap();
        let h = encode(&mut tape, &store, &cfg, "", x).unwrap();
        let b = boundaries(&mut tape, &cfg, h, 4).unwrap();
        let r1 = span_split_rep(&mut tape, &b, 0, 4, 1).unwrap();
        let r2 = span_split_rep(&mut tape, &b, 0, 4, 2).unwrap();
        assert_ne!(tape.value(r1), tape.value(r2));
    }

    #[test]
    fn generalized_rep_ignores_word_vectors_of_covered_tokens() {
        let corpus = parse_corpus("[IN:X near [SL:LOCATION the mall ] ]\n").unwrap();
        let (lex, _) = build_lexicon(&corpus);
        let cfg = tiny_cfg(EncoderMode::Generalized);
        let vocab = Vocab::build(toks("near the mall"));
        let mut store = ParamStore::new(9);
        register_params(&mut store, &cfg, "", vocab.len(), lex.num_ids());
        let utt = Utterance::new(toks("near the mall")).unwrap();
        let occs = match_spans(&utt, &lex, lex.max_value_len());
        let tags = tag_tokens(&utt, &lex, &occs);

        let embed_with = |store: &ParamStore| {
            let mut tape = Tape::new();
            let x = embed_tokens(&mut tape, store, &cfg, "", &vocab, &utt.tokens, Some(&tags))
                .unwrap();
            tape.value(x).clone()
        };
        let before = embed_with(&store);
        // zero out every word vector; only lexicon-covered rows should survive
        let mut altered = store.clone();
        for token in ["near", "the", "mall"] {
            let id = vocab.id(token);
            let table = altered.get_mut("word_emb").unwrap();
            let row: Vec<f64> = table.row(id).iter().map(|_| 0.0).collect();
            table.row_mut(id).copy_from_slice(&row);
        }
        let after = embed_with(&altered);
        // rows 2..4 are the covered tokens (+1 for the start sentinel)
        for row in 2..4 {
            assert_eq!(before.row(row), after.row(row));
        }
        // the uncovered "near" row does change
        assert_ne!(before.row(1), after.row(1));
    }

    #[test]
    fn generalized_rep_is_identical_for_unseen_values_with_same_matches() {
        // two synthetic utterances whose only difference is the surface form
        // of a lexicon-covered value with the same category and length
        let corpus = parse_corpus(
            "[IN:X near [SL:LOCATION beach park ] ]\n[IN:X near [SL:LOCATION rocket company ] ]\n",
        )
        .unwrap();
        let (lex, _) = build_lexicon(&corpus);
        let cfg = tiny_cfg(EncoderMode::Generalized);
        let vocab = Vocab::build(toks("near beach park rocket company"));
        let mut store = ParamStore::new(10);
        register_params(&mut store, &cfg, "", vocab.len(), lex.num_ids());
        let embed_utt = |tokens: &[String]| {
            let utt = Utterance::new(tokens.to_vec()).unwrap();
            let occs = match_spans(&utt, &lex, lex.max_value_len());
            let tags = tag_tokens(&utt, &lex, &occs);
            let mut tape = Tape::new();
            let x = embed_tokens(&mut tape, &store, &cfg, "", &vocab, tokens, Some(&tags)).unwrap();
            tape.value(x).clone()
        };
        let a = embed_utt(&toks("near beach park"));
        let b = embed_utt(&toks("near rocket company"));
        // covered tokens at the same positions embed identically
        assert_eq!(a.row(2), b.row(2));
        assert_eq!(a.row(3), b.row(3));
    }

    #[test]
    fn gradient_check_through_encoder() {
        let cfg = tiny_cfg(EncoderMode::Base);
        let vocab = Vocab::build(toks("a b c d"));
        let mut store = ParamStore::new(11);
        register_params(&mut store, &cfg, "", vocab.len(), 1);
        let tokens = toks("a b c d");
        let err = crate::numcore::grad_check(
            |p| {
                let mut tape = Tape::new();
                let x = embed_tokens(&mut tape, p, &cfg, "", &vocab, &tokens, None)?;
                let h = encode(&mut tape, p, &cfg, "", x)?;
                let b = boundaries(&mut tape, &cfg, h, 4)?;
                let r = span_rep(&mut tape, &b, 0, 4)?;
                let sq = tape.mul(r, r);
                let loss = tape.sum(sq);
                let v = tape.value(loss).item();
                let g = tape.backward(loss)?;
                Ok((v, g))
            },
            &store,
            1e-5,
        )
        .unwrap();
        assert!(err <= 1e-4, "relative error {err}");
    }

    #[test]
    fn vocab_maps_oov_to_unk() {
        let vocab = Vocab::build(toks("alpha beta"));
        assert_eq!(vocab.id("gamma"), UNK_ID);
        assert_eq!(vocab.id("ALPHA"), vocab.id("alpha"));
        assert_ne!(vocab.id("alpha"), UNK_ID);
    }

    #[test]
    fn generalized_mode_requires_matching_dims() {
        let mut cfg = tiny_cfg(EncoderMode::Generalized);
        cfg.d_slot = 6;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn zero_boundary_makes_split_rep_equal_plain_rep() {
        // r̂ = r + b_k, so a zero b_k is the additive identity
        let mut tape = Tape::new();
        let b0 = tape.constant(Tensor::vector(vec![1.0, 2.0]));
        let b1 = tape.constant(Tensor::vector(vec![0.0, 0.0]));
        let b2 = tape.constant(Tensor::vector(vec![3.0, 5.0]));
        let b = BoundarySet { vars: vec![b0, b1, b2] };
        let r = span_rep(&mut tape, &b, 0, 2).unwrap();
        let r_hat = span_split_rep(&mut tape, &b, 0, 2, 1).unwrap();
        assert_eq!(tape.value(r), tape.value(r_hat));
    }
}
