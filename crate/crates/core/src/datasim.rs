//! Unseen-slot-value adaptation harness.
//!
//! A catalog of new slot values is injected into gold test trees at a chosen
//! rate, producing a modified test set whose slot values were never seen in
//! training. Three deployment scenarios are then compared on that set:
//! update the lexicon with the catalog (no retraining), leave the lexicon
//! stale, or rewrite new values back to known ones around an unchanged parser.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::disambiguator::{filter_occurrences, oracle_filter, DisambModel};
use crate::error::{Error, Result};
use crate::lexicon::{match_spans, tag_tokens, Lexicon};
use crate::metrics::{evaluate, EvalReport};
use crate::parser::ParserModel;
use crate::treebank::{Label, ParseTree, Utterance};

/// New values per existing slot category, loaded from the lexicon's TSV
/// format. Values keep their published casing; matching is case-insensitive
/// throughout.
#[derive(Debug, Clone)]
pub struct NewValueCatalog {
    entries: BTreeMap<String, Vec<Vec<String>>>,
}

impl NewValueCatalog {
    /// Parses `category<TAB>value tokens` lines. Every category must already
    /// exist in `base` (new categories would require retraining), and no
    /// value may already be listed under its category — the catalog models
    /// values the deployed system has never seen.
    pub fn parse(text: &str, base: &Lexicon) -> Result<Self> {
        let mut entries: BTreeMap<String, Vec<Vec<String>>> = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end();
            if line.is_empty() {
                continue;
            }
            let (cat, value) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse_at(i + 1, "expected `category<TAB>value`"))?;
            let tokens: Vec<String> = value.split_whitespace().map(str::to_string).collect();
            if tokens.is_empty() {
                return Err(Error::parse_at(i + 1, "empty catalog value"));
            }
            if base.values(cat).is_none() {
                return Err(Error::Catalog(format!(
                    "line {}: category `{cat}` not in the base lexicon",
                    i + 1
                )));
            }
            let lowered: Vec<String> = tokens.iter().map(|t| t.to_lowercase()).collect();
            if base.contains(cat, &lowered) {
                return Err(Error::Catalog(format!(
                    "line {}: `{value}` is already a known {cat} value",
                    i + 1
                )));
            }
            let bucket = entries.entry(cat.to_string()).or_default();
            if !bucket.contains(&tokens) {
                bucket.push(tokens);
            }
        }
        if entries.is_empty() {
            return Err(Error::Catalog("catalog is empty".into()));
        }
        Ok(NewValueCatalog { entries })
    }

    pub fn load(path: &std::path::Path, base: &Lexicon) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?, base)
    }

    pub fn categories(&self) -> impl Iterator<Item = &String> {
        self.entries.keys()
    }

    pub fn values(&self, category: &str) -> Option<&[Vec<String>]> {
        self.entries.get(category).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Base lexicon plus all catalog values; category ids are unchanged, so a
/// model trained against the base lexicon keeps working.
pub fn updated_lexicon(base: &Lexicon, catalog: &NewValueCatalog) -> Result<Lexicon> {
    let mut lex = base.clone();
    for (cat, values) in &catalog.entries {
        lex.add_entries(cat, values)?;
    }
    Ok(lex)
}

/// One slot-value replacement applied to a test utterance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Modification {
    /// 1-based utterance index within the test set.
    pub line: usize,
    pub category: String,
    /// Span of the replaced value in the original utterance.
    pub old_span: (usize, usize),
    /// Span of the new value in the modified utterance.
    pub new_span: (usize, usize),
    pub old: Vec<String>,
    pub new: Vec<String>,
}

/// TSV log of the applied modifications: line, category, old value, new value.
pub fn modifications_tsv(mods: &[Modification]) -> String {
    let mut out = String::from("line\tcategory\told\tnew\n");
    for m in mods {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            m.line,
            m.category,
            m.old.join(" "),
            m.new.join(" ")
        ));
    }
    out
}

/// Replaces gold leaf slot values whose category appears in the catalog with
/// a random catalog value, each independently with probability `p_replace`,
/// re-indexing every span. Reproducible for a given seed; `p_replace == 0`
/// returns the corpus unchanged.
pub fn generate_modified_test(
    corpus: &[(ParseTree, Utterance)],
    catalog: &NewValueCatalog,
    p_replace: f64,
    seed: u64,
) -> Result<(Vec<(ParseTree, Utterance)>, Vec<Modification>)> {
    if !(0.0..=1.0).contains(&p_replace) {
        return Err(Error::Config(format!("p_replace {p_replace} outside [0, 1]")));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(corpus.len());
    let mut mods = Vec::new();
    for (line0, (tree, utt)) in corpus.iter().enumerate() {
        let mut tokens = Vec::new();
        let new_tree =
            rebuild(tree, utt, catalog, p_replace, &mut rng, &mut tokens, line0 + 1, &mut mods);
        out.push((new_tree, Utterance::new(tokens)?));
    }
    Ok((out, mods))
}

fn rebuild(
    node: &ParseTree,
    utt: &Utterance,
    catalog: &NewValueCatalog,
    p: f64,
    rng: &mut ChaCha20Rng,
    tokens: &mut Vec<String>,
    line: usize,
    mods: &mut Vec<Modification>,
) -> ParseTree {
    let start = tokens.len();
    if node.children.is_empty() {
        if let Label::Slot(cat) = &node.label {
            if let Some(values) = catalog.values(cat) {
                // both draws always happen so the random stream does not
                // depend on p or on earlier outcomes
                let fire = rng.gen_bool(p);
                let pick = rng.gen_range(0..values.len());
                if fire {
                    let new = values[pick].clone();
                    tokens.extend(new.iter().cloned());
                    mods.push(Modification {
                        line,
                        category: cat.clone(),
                        old_span: node.span,
                        new_span: (start, tokens.len()),
                        old: utt.tokens[node.span.0..node.span.1].to_vec(),
                        new,
                    });
                    return ParseTree::new(node.label.clone(), (start, tokens.len()), vec![]);
                }
            }
        }
        tokens.extend(utt.tokens[node.span.0..node.span.1].iter().cloned());
        return ParseTree::new(node.label.clone(), (start, tokens.len()), vec![]);
    }
    let mut pos = node.span.0;
    let mut children = Vec::with_capacity(node.children.len());
    for child in &node.children {
        tokens.extend(utt.tokens[pos..child.span.0].iter().cloned());
        children.push(rebuild(child, utt, catalog, p, rng, tokens, line, mods));
        pos = child.span.1;
    }
    tokens.extend(utt.tokens[pos..node.span.1].iter().cloned());
    ParseTree::new(node.label.clone(), (start, tokens.len()), children)
}

/// One rewrite performed by the regex baseline, recorded so predicted spans
/// can be mapped back after parsing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Substitution {
    /// Span of the replacement in the rewritten token sequence.
    pub span: (usize, usize),
    pub category: String,
    /// The catalog value that was found in the input.
    pub original: Vec<String>,
    /// The known value it was rewritten to.
    pub replacement: Vec<String>,
}

/// The no-lexicon baseline: scans left to right, longest match first, for
/// catalog values and rewrites each to a fixed known value of the same
/// category (the lexicographically first one in the base lexicon). Matching
/// is case-insensitive. Ties between equally long matches go to the first
/// category in catalog order.
pub fn regex_substitute(
    tokens: &[String],
    catalog: &NewValueCatalog,
    base: &Lexicon,
) -> (Vec<String>, Vec<Substitution>) {
    let lowered: Vec<String> = tokens.iter().map(|t| t.to_lowercase()).collect();
    let n = tokens.len();
    let mut out = Vec::with_capacity(n);
    let mut subs = Vec::new();
    let mut i = 0;
    while i < n {
        let mut best: Option<(usize, &String)> = None;
        for (cat, values) in &catalog.entries {
            for v in values {
                let len = v.len();
                if i + len > n {
                    continue;
                }
                let matches = v
                    .iter()
                    .zip(&lowered[i..i + len])
                    .all(|(a, b)| a.to_lowercase() == *b);
                if matches && best.map(|(l, _)| len > l).unwrap_or(true) {
                    best = Some((len, cat));
                }
            }
        }
        if let Some((len, cat)) = best {
            if let Some(repl) = base.values(cat).and_then(|vs| vs.iter().next()) {
                subs.push(Substitution {
                    span: (out.len(), out.len() + repl.len()),
                    category: cat.clone(),
                    original: tokens[i..i + len].to_vec(),
                    replacement: repl.clone(),
                });
                out.extend(repl.iter().cloned());
                i += len;
                continue;
            }
        }
        out.push(tokens[i].clone());
        i += 1;
    }
    (out, subs)
}

/// Maps a tree predicted over rewritten tokens back to the original token
/// space by inverting the substitutions. Span boundaries that fall strictly
/// inside a rewritten region are clamped to it; a span that collapses to
/// nothing is an error (counted as a parse failure by the caller).
pub fn undo_substitution(
    tree: &ParseTree,
    subs: &[Substitution],
    n_rewritten: usize,
) -> Result<ParseTree> {
    // fence map from rewritten space to original space
    let mut map = Vec::with_capacity(n_rewritten + 1);
    for f in 0..=n_rewritten {
        let mut shift: isize = 0;
        let mut mapped = None;
        for s in subs {
            let (a, b) = s.span;
            let len_orig = s.original.len() as isize;
            let len_rew = (b - a) as isize;
            if f > a && f < b {
                let at_a = (a as isize + shift) as usize;
                mapped = Some(at_a + (f - a).min(s.original.len()));
                break;
            }
            if f >= b {
                shift += len_orig - len_rew;
            }
        }
        map.push(mapped.unwrap_or(((f as isize) + shift) as usize));
    }
    remap(tree, &map)
}

fn remap(node: &ParseTree, map: &[usize]) -> Result<ParseTree> {
    let (i, j) = node.span;
    if j >= map.len() {
        return Err(Error::Span(i, j));
    }
    let (i2, j2) = (map[i], map[j]);
    if j2 <= i2 {
        return Err(Error::Eval(format!(
            "substitution undo collapsed span {i}:{j}"
        )));
    }
    let children = node
        .children
        .iter()
        .map(|c| remap(c, map))
        .collect::<Result<Vec<_>>>()?;
    Ok(ParseTree::new(node.label.clone(), (i2, j2), children))
}

/// How a deployed system copes with the new values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    /// Catalog values added to the lexicon; the model is untouched.
    UpdatedLexicon,
    /// Nothing changes: the lexicon does not know the new values.
    StaleLexicon,
    /// New values rewritten to known ones before parsing, undone after.
    RegexBaseline,
}

impl Scenario {
    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::UpdatedLexicon => "updated-lexicon",
            Scenario::StaleLexicon => "stale-lexicon",
            Scenario::RegexBaseline => "regex-baseline",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "updated-lexicon" => Ok(Scenario::UpdatedLexicon),
            "stale-lexicon" => Ok(Scenario::StaleLexicon),
            "regex-baseline" => Ok(Scenario::RegexBaseline),
            other => Err(Error::Config(format!("unknown scenario `{other}`"))),
        }
    }
}

/// Which slot-disambiguation filter to run over lexicon matches.
pub enum Filter<'a> {
    /// Keep every match.
    KeepAll,
    /// Trained disambiguation model at the given keep threshold.
    Model(&'a DisambModel, f64),
    /// Gold-span filter; an upper bound, needs gold trees.
    Oracle,
}

/// Parses every test utterance under one scenario and evaluates against the
/// gold trees. Parse failures count against exact match rather than aborting
/// the run.
pub fn scenario_run(
    model: &ParserModel,
    base: &Lexicon,
    catalog: &NewValueCatalog,
    test: &[(ParseTree, Utterance)],
    scenario: Scenario,
    filter: &Filter,
) -> Result<EvalReport> {
    let lex = match scenario {
        Scenario::UpdatedLexicon => updated_lexicon(base, catalog)?,
        _ => base.clone(),
    };
    let mut preds = Vec::with_capacity(test.len());
    let mut golds = Vec::with_capacity(test.len());
    for (gold, utt) in test {
        golds.push(gold.clone());
        preds.push(parse_one(model, base, &lex, catalog, gold, utt, scenario, filter)?);
    }
    evaluate(&preds, &golds)
}

#[allow(clippy::too_many_arguments)]
fn parse_one(
    model: &ParserModel,
    base: &Lexicon,
    lex: &Lexicon,
    catalog: &NewValueCatalog,
    gold: &ParseTree,
    utt: &Utterance,
    scenario: Scenario,
    filter: &Filter,
) -> Result<Option<ParseTree>> {
    let (tokens, subs) = match scenario {
        Scenario::RegexBaseline => regex_substitute(&utt.tokens, catalog, base),
        _ => (utt.tokens.clone(), Vec::new()),
    };
    let parse_utt = Utterance::new(tokens.clone())?;
    let tags = if model.mode.uses_lexicon() {
        let occs = match_spans(&parse_utt, lex, lex.max_value_len().max(1));
        let occs = match filter {
            Filter::KeepAll => occs,
            Filter::Model(m, thr) => filter_occurrences(m, &tokens, &occs, *thr)?,
            Filter::Oracle => {
                if scenario == Scenario::RegexBaseline {
                    return Err(Error::Config(
                        "oracle filter needs gold spans, which the regex rewrite invalidates"
                            .into(),
                    ));
                }
                oracle_filter(&occs, gold)
            }
        };
        Some(tag_tokens(&parse_utt, lex, &occs))
    } else {
        None
    };
    let parsed = match model.parse(&tokens, tags.as_ref()) {
        Ok(t) => t,
        Err(_) => return Ok(None),
    };
    if subs.is_empty() {
        return Ok(Some(parsed));
    }
    Ok(undo_substitution(&parsed, &subs, tokens.len()).ok())
}

/// One column of the modification-rate sweep.
pub struct SweepEntry<'a> {
    pub name: String,
    pub model: &'a ParserModel,
    pub scenario: Scenario,
    pub filter: Filter<'a>,
}

/// Evaluates every entry at every modification rate and returns a TSV table
/// (`rate` column plus one exact-match column per entry). The same seed is
/// used at every rate, so rate 0 reproduces the unmodified evaluation.
pub fn sweep_modification_rate(
    entries: &[SweepEntry],
    base: &Lexicon,
    catalog: &NewValueCatalog,
    test: &[(ParseTree, Utterance)],
    rates: &[f64],
    seed: u64,
) -> Result<String> {
    let mut out = String::from("rate");
    for e in entries {
        out.push('\t');
        out.push_str(&e.name);
    }
    out.push('\n');
    for &rate in rates {
        let (modified, _) = generate_modified_test(test, catalog, rate, seed)?;
        out.push_str(&format!("{rate:.2}"));
        for e in entries {
            let report = scenario_run(e.model, base, catalog, &modified, e.scenario, &e.filter)?;
            out.push_str(&format!("\t{:.4}", report.exact_match));
        }
        out.push('\n');
    }
    Ok(out)
}
