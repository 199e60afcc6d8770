//! Deterministic toy corpus for navigation/event-style utterances.
//!
//! Utterances come from a fixed template inventory with per-slot value pools.
//! The split is built so that the training portion covers every pool value —
//! the slot lexicon extracted from training therefore covers every slot
//! mention in dev and test — while the adaptation catalog values never occur
//! in training at all.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::error::Result;
use crate::treebank::{parse_top, ParseTree, Utterance};

/// Fixed-seed split sizes.
pub const N_TRAIN: usize = 50;
pub const N_DEV: usize = 20;
pub const N_TEST: usize = 200;

/// The canonical traffic-to-Dad's-house utterance; always the first training
/// line, and the fixture the disambiguation examples are checked against.
pub const CANONICAL_LINE: &str = "[IN:GET_INFO_TRAFFIC How is traffic heading to [SL:DESTINATION [IN:GET_LOCATION_HOME [SL:TYPE_RELATION Dad ] 's house ] ] ]";

/// New-value catalog for the adaptation experiment, in the lexicon's TSV
/// format. None of these values occur in the generated training data under
/// the same category.
pub const CATALOG_TSV: &str = "\
SL:TYPE_RELATION\tbrother in law
SL:TYPE_RELATION\troommate
SL:TYPE_RELATION\thomie
SL:TYPE_RELATION\tstepfather
SL:TYPE_RELATION\tboy friend
SL:LOCATION\tbeach park
SL:LOCATION\tschool building
SL:LOCATION\tstreet - 25
SL:LOCATION\tbridge
SL:LOCATION\trocket company
SL:POINT_ON_MAP\tSilicon Valley
SL:POINT_ON_MAP\tRed Rock Canyon
SL:POINT_ON_MAP\tWhite House
SL:POINT_ON_MAP\tAhaggar National Park
SL:POINT_ON_MAP\tSingapore
";

// Pools feeding categories that the new-value catalog later extends (rel,
// loc, pom) mix one-, two-, and three-token values so covered-run lengths
// and the position shifts they induce are all seen in training.
const POOLS: &[(&str, &[&str])] = &[
    ("rel", &["dad", "mom", "brother", "sister", "grand ma", "uncle", "mother in law"]),
    ("contact", &["ana", "dad", "mom", "james", "maria"]),
    (
        "loc",
        &["downtown", "the mall", "city hall", "the harbor", "the park", "old town square", "china town"],
    ),
    ("pom", &["union square", "golden gate", "alcatraz", "the ferry building"]),
    ("dest", &["work", "school", "the airport", "the office", "house"]),
    ("event", &["concerts", "movies", "festivals", "art shows"]),
    ("time", &["tonight", "tomorrow", "this weekend", "next week"]),
    ("path", &["the bridge", "main street", "highway nine"]),
];

const TEMPLATES: &[&str] = &[
    "[IN:GET_INFO_TRAFFIC How is traffic heading to [SL:DESTINATION [IN:GET_LOCATION_HOME [SL:TYPE_RELATION {rel} ] 's house ] ] ]",
    "[IN:GET_INFO_TRAFFIC how is traffic near [SL:LOCATION {loc} ] ]",
    "[IN:GET_EVENT any [SL:CATEGORY_EVENT {event} ] [SL:DATE_TIME {time} ] near [SL:LOCATION {loc} ] ]",
    "[IN:GET_DIRECTIONS directions to [SL:DESTINATION {dest} ] ]",
    "[IN:GET_DISTANCE how far is [SL:POINT_ON_MAP {pom} ] ]",
    "[IN:CALL call [SL:CONTACT {contact} ] now ]",
    "[IN:GET_EVENT any [SL:CATEGORY_EVENT {event} ] close [SL:SEARCH_RADIUS to ] me ]",
    "[IN:GET_INFO_ROUTE is [SL:PATH {path} ] busy ]",
    "[IN:GET_ESTIMATED_ARRIVAL when do i get to [SL:POINT_ON_MAP {pom} ] [SL:DATE_TIME {time} ] ]",
    "[IN:GET_DISTANCE distance from [SL:LOCATION {loc} ] to [SL:POINT_ON_MAP {pom} ] ]",
    "[IN:GET_EVENT what [SL:CATEGORY_EVENT {event} ] are there [SL:DATE_TIME {time} ] at [SL:POINT_ON_MAP {pom} ] ]",
    "[IN:GET_INFO_TRAFFIC traffic on [SL:PATH {path} ] [SL:DATE_TIME {time} ] ]",
    "[IN:GET_DIRECTIONS directions to [SL:DESTINATION [IN:GET_LOCATION_HOME [SL:CONTACT {contact} ] 's house ] ] ]",
    "[IN:GET_ESTIMATED_ARRIVAL eta to [SL:DESTINATION {dest} ] via [SL:PATH {path} ] ]",
];

fn pool(name: &str) -> &'static [&'static str] {
    POOLS.iter().find(|(n, _)| *n == name).map(|(_, v)| *v).unwrap_or(&[])
}

/// Expands every placeholder combination of one template, in pool order.
fn expand(template: &str) -> Vec<String> {
    let Some(start) = template.find('{') else {
        return vec![template.to_string()];
    };
    let end = template[start..].find('}').expect("unbalanced placeholder") + start;
    let name = &template[start + 1..end];
    let mut out = Vec::new();
    for value in pool(name) {
        let filled = format!("{}{}{}", &template[..start], value, &template[end + 1..]);
        out.extend(expand(&filled));
    }
    out
}

/// Gold (category, lowercased value) pairs of one rendered line, used for
/// the coverage-first selection.
fn pairs_in(line: &str) -> Vec<(String, Vec<String>)> {
    fn walk(t: &ParseTree, utt: &Utterance, out: &mut Vec<(String, Vec<String>)>) {
        if let crate::treebank::Label::Slot(cat) = &t.label {
            out.push((cat.clone(), utt.span_tokens_lower(t.span)));
        }
        for c in &t.children {
            walk(c, utt, out);
        }
    }
    let (tree, utt) = parse_top(line).expect("generated templates always parse");
    let mut out = Vec::new();
    walk(&tree, &utt, &mut out);
    out
}

#[derive(Debug, Clone)]
pub struct ToyData {
    pub train: Vec<(ParseTree, Utterance)>,
    pub dev: Vec<(ParseTree, Utterance)>,
    pub test: Vec<(ParseTree, Utterance)>,
}

fn parse_lines(lines: &[String]) -> Vec<(ParseTree, Utterance)> {
    lines
        .iter()
        .map(|l| parse_top(l).expect("generated templates always parse"))
        .collect()
}

/// Minimum number of training lines per template, so every utterance pattern
/// is seen with several different slot values.
const TEMPLATE_QUOTA: usize = 2;

/// Generates the fixed-size splits. Training starts with the canonical line
/// and is then filled in three passes over a seed-shuffled pool: a quota of
/// lines per template, lines introducing still-uncovered (category, value)
/// pairs, and a round-robin over templates. Dev and test draw from the
/// remainder, so training covers every template and every slot value they
/// contain.
pub fn generate(seed: u64) -> ToyData {
    let mut all: Vec<(usize, String)> = TEMPLATES
        .iter()
        .enumerate()
        .flat_map(|(ti, t)| expand(t).into_iter().map(move |l| (ti, l)))
        .collect();
    all.retain(|(_, l)| l != CANONICAL_LINE);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    all.shuffle(&mut rng);

    let mut uncovered: std::collections::BTreeSet<(String, Vec<String>)> =
        all.iter().flat_map(|(_, l)| pairs_in(l)).collect();
    let cover = |line: &str, set: &mut std::collections::BTreeSet<(String, Vec<String>)>| {
        for p in pairs_in(line) {
            set.remove(&p);
        }
    };
    cover(CANONICAL_LINE, &mut uncovered);
    let mut counts = vec![0usize; TEMPLATES.len()];
    counts[0] = 1;
    let mut train = vec![CANONICAL_LINE.to_string()];
    let mut used = vec![false; all.len()];

    // pass 1: template quota
    for (i, (ti, line)) in all.iter().enumerate() {
        if counts[*ti] < TEMPLATE_QUOTA && train.len() < N_TRAIN {
            counts[*ti] += 1;
            used[i] = true;
            cover(line, &mut uncovered);
            train.push(line.clone());
        }
    }
    // pass 2: remaining (category, value) coverage
    for (i, (ti, line)) in all.iter().enumerate() {
        if used[i] || train.len() >= N_TRAIN {
            continue;
        }
        if pairs_in(line).iter().any(|p| uncovered.contains(p)) {
            counts[*ti] += 1;
            used[i] = true;
            cover(line, &mut uncovered);
            train.push(line.clone());
        }
    }
    assert!(uncovered.is_empty(), "slot values missing from training: {uncovered:?}");
    // pass 3: round-robin over templates until full
    while train.len() < N_TRAIN {
        let t_next = (0..TEMPLATES.len())
            .min_by_key(|t| counts[*t])
            .expect("at least one template");
        let pick = all
            .iter()
            .enumerate()
            .find(|(i, (ti, _))| !used[*i] && *ti == t_next)
            .map(|(i, _)| i)
            .or_else(|| all.iter().enumerate().find(|(i, _)| !used[*i]).map(|(i, _)| i))
            .expect("template inventory too small");
        let (ti, line) = &all[pick];
        counts[*ti] += 1;
        used[pick] = true;
        train.push(line.clone());
    }

    let mut rest = all
        .iter()
        .enumerate()
        .filter(|(i, _)| !used[*i])
        .map(|(_, (_, l))| l.clone());
    let dev: Vec<String> = rest.by_ref().take(N_DEV).collect();
    let test: Vec<String> = rest.take(N_TEST).collect();
    assert_eq!(dev.len(), N_DEV, "template inventory too small");
    assert_eq!(test.len(), N_TEST, "template inventory too small");
    ToyData { train: parse_lines(&train), dev: parse_lines(&dev), test: parse_lines(&test) }
}

/// Writes train.top / dev.top / test.top / catalog.tsv into `dir`.
pub fn write_files(data: &ToyData, dir: &std::path::Path) -> Result<()> {
    use crate::treebank::serialize_top;
    for (name, part) in [("train.top", &data.train), ("dev.top", &data.dev), ("test.top", &data.test)]
    {
        let mut buf = String::new();
        for (tree, utt) in part {
            buf.push_str(&serialize_top(tree, utt)?);
            buf.push('\n');
        }
        std::fs::write(dir.join(name), buf)?;
    }
    std::fs::write(dir.join("catalog.tsv"), CATALOG_TSV)?;
    Ok(())
}
