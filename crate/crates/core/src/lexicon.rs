//! Slot lexicon: built from training trees, matched case-insensitively
//! against utterances, and updatable at runtime with new values for existing
//! categories. Category ids are frozen at build time so embeddings stay valid
//! across updates.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::treebank::{ParseTree, Utterance};

/// Map from slot category to its set of lowercased token-sequence values.
/// Id 0 is reserved for the out-of-category tag; categories get contiguous
/// ids from 1 in sorted order.
#[derive(Debug, Clone)]
pub struct Lexicon {
    entries: BTreeMap<String, BTreeSet<Vec<String>>>,
    categories: Vec<String>,
    max_value_len: usize,
}

/// Counts reported by [`build_lexicon`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexiconStats {
    pub categories: usize,
    pub total_values: usize,
    pub unique_values: usize,
}

/// Whether a match occurrence survived filtering.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kept {
    Pending,
    Kept,
    Removed,
}

/// One lexicon match: a category and the utterance span it matched.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchOccurrence {
    pub category: String,
    pub span: (usize, usize),
    pub kept: Kept,
}

impl Lexicon {
    fn from_entries(entries: BTreeMap<String, BTreeSet<Vec<String>>>) -> Self {
        let categories: Vec<String> = entries.keys().cloned().collect();
        let max_value_len = entries.values().flatten().map(Vec::len).max().unwrap_or(0);
        Lexicon { entries, categories, max_value_len }
    }

    pub fn empty() -> Self {
        Lexicon::from_entries(BTreeMap::new())
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    /// Category id, 1-based; id 0 is the out-of-category tag.
    pub fn category_id(&self, category: &str) -> Option<usize> {
        self.categories.iter().position(|c| c == category).map(|p| p + 1)
    }

    /// Total id count including the out-of-category tag.
    pub fn num_ids(&self) -> usize {
        self.categories.len() + 1
    }

    /// Length of the longest value; the default match window.
    pub fn max_value_len(&self) -> usize {
        self.max_value_len
    }

    pub fn contains(&self, category: &str, value: &[String]) -> bool {
        self.entries.get(category).is_some_and(|set| set.contains(value))
    }

    pub fn values(&self, category: &str) -> Option<&BTreeSet<Vec<String>>> {
        self.entries.get(category)
    }

    pub fn stats(&self) -> LexiconStats {
        let unique: usize = self.entries.values().map(BTreeSet::len).sum();
        LexiconStats {
            categories: self.categories.len(),
            total_values: unique,
            unique_values: unique,
        }
    }

    /// Adds values (lowercased) to an existing category. Category ids are
    /// unchanged, so a trained model keeps working; a brand-new category
    /// would require retraining and is rejected.
    pub fn add_entries(&mut self, category: &str, values: &[Vec<String>]) -> Result<()> {
        let set = self
            .entries
            .get_mut(category)
            .ok_or_else(|| Error::UnknownCategory(category.to_string()))?;
        for v in values {
            if v.is_empty() {
                continue;
            }
            let lowered: Vec<String> = v.iter().map(|t| t.to_lowercase()).collect();
            self.max_value_len = self.max_value_len.max(lowered.len());
            set.insert(lowered);
        }
        Ok(())
    }

    /// Writes the TSV form: `category<TAB>value tokens`, one per line.
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let mut out = String::new();
        for (cat, values) in &self.entries {
            for v in values {
                out.push_str(cat);
                out.push('\t');
                out.push_str(&v.join(" "));
                out.push('\n');
            }
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut entries: BTreeMap<String, BTreeSet<Vec<String>>> = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end();
            if line.is_empty() {
                continue;
            }
            let (cat, value) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse_at(i + 1, "expected `category<TAB>value`"))?;
            let tokens: Vec<String> =
                value.split_whitespace().map(|t| t.to_lowercase()).collect();
            if tokens.is_empty() {
                return Err(Error::parse_at(i + 1, "empty lexicon value"));
            }
            entries.entry(cat.to_string()).or_default().insert(tokens);
        }
        Ok(Lexicon::from_entries(entries))
    }
}

/// Builds the lexicon from gold trees: every slot-labeled node contributes its
/// covered token sequence, lowercased, under its category. Expects
/// unary-expanded trees. Stats count slot instances and unique values.
pub fn build_lexicon(corpus: &[(ParseTree, Utterance)]) -> (Lexicon, LexiconStats) {
    let mut entries: BTreeMap<String, BTreeSet<Vec<String>>> = BTreeMap::new();
    let mut total = 0usize;
    for (tree, utt) in corpus {
        collect_slots(tree, utt, &mut entries, &mut total);
    }
    let unique: usize = entries.values().map(BTreeSet::len).sum();
    let stats = LexiconStats { categories: entries.len(), total_values: total, unique_values: unique };
    (Lexicon::from_entries(entries), stats)
}

fn collect_slots(
    tree: &ParseTree,
    utt: &Utterance,
    entries: &mut BTreeMap<String, BTreeSet<Vec<String>>>,
    total: &mut usize,
) {
    if let crate::treebank::Label::Slot(cat) = &tree.label {
        entries.entry(cat.clone()).or_default().insert(utt.span_tokens_lower(tree.span));
        *total += 1;
    }
    for child in &tree.children {
        collect_slots(child, utt, entries, total);
    }
}

/// Every span of length `<= max_len` whose lowercased tokens appear in some
/// category, once per matching category, all `Pending`. Overlapping and
/// nested matches are all returned, ordered by (start, end, category).
pub fn match_spans(utt: &Utterance, lex: &Lexicon, max_len: usize) -> Vec<MatchOccurrence> {
    assert!(max_len >= 1, "max_len must be at least 1");
    let lowered: Vec<String> = utt.tokens.iter().map(|t| t.to_lowercase()).collect();
    let n = lowered.len();
    let mut out = Vec::new();
    for start in 0..n {
        for end in (start + 1)..=(start + max_len).min(n) {
            let piece = &lowered[start..end];
            for cat in lex.categories() {
                if lex.contains(cat, piece) {
                    out.push(MatchOccurrence {
                        category: cat.clone(),
                        span: (start, end),
                        kept: Kept::Pending,
                    });
                }
            }
        }
    }
    out
}

/// Per-token slot-category tags derived from the non-removed occurrences.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenTags {
    /// Distinct category ids covering each token, ascending; `[0]` (the
    /// out-of-category id) for uncovered tokens.
    pub ids: Vec<Vec<usize>>,
    /// True where the token lies inside at least one kept occurrence.
    pub in_lexicon: Vec<bool>,
}

/// Tags each token with the distinct categories of the occurrences covering
/// it (each category counted once per token). Removed occurrences are ignored.
pub fn tag_tokens(utt: &Utterance, lex: &Lexicon, occs: &[MatchOccurrence]) -> TokenTags {
    let n = utt.len();
    let mut sets: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for occ in occs {
        if occ.kept == Kept::Removed {
            continue;
        }
        let id = lex
            .category_id(&occ.category)
            .unwrap_or_else(|| panic!("occurrence category `{}` not in lexicon", occ.category));
        for slot in sets.iter_mut().take(occ.span.1).skip(occ.span.0) {
            slot.insert(id);
        }
    }
    let in_lexicon: Vec<bool> = sets.iter().map(|s| !s.is_empty()).collect();
    let ids = sets
        .into_iter()
        .map(|s| if s.is_empty() { vec![0] } else { s.into_iter().collect() })
        .collect();
    TokenTags { ids, in_lexicon }
}
