//! Named parameter registry with deterministic initialization and a text
//! checkpoint format that round-trips values exactly.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Named map of parameters. Initialization order is the registration order,
/// so a fixed seed plus a fixed build sequence yields bit-identical values.
#[derive(Debug, Clone)]
pub struct ParamStore {
    params: BTreeMap<String, Tensor>,
    seed: u64,
    rng: ChaCha20Rng,
}

impl ParamStore {
    pub fn new(seed: u64) -> Self {
        ParamStore { params: BTreeMap::new(), seed, rng: ChaCha20Rng::seed_from_u64(seed) }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn insert(&mut self, name: &str, t: Tensor) {
        let prev = self.params.insert(name.to_string(), t);
        assert!(prev.is_none(), "duplicate parameter `{name}`");
    }

    /// Uniform init in [-range, range]; used for embedding tables.
    pub fn add_uniform(&mut self, name: &str, shape: Vec<usize>, range: f64) {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| self.rng.gen_range(-range..=range)).collect();
        self.insert(name, Tensor::new(shape, data));
    }

    /// Uniform init scaled by fan-in; used for weight matrices (rows = fan-in).
    pub fn add_fan_in(&mut self, name: &str, rows: usize, cols: usize) {
        let s = 1.0 / (rows as f64).sqrt();
        let data = (0..rows * cols).map(|_| self.rng.gen_range(-s..=s)).collect();
        self.insert(name, Tensor::matrix(rows, cols, data));
    }

    pub fn add_zeros(&mut self, name: &str, shape: Vec<usize>) {
        self.insert(name, Tensor::zeros(shape));
    }

    pub fn add_ones(&mut self, name: &str, shape: Vec<usize>) {
        let n: usize = shape.iter().product();
        self.insert(name, Tensor::new(shape, vec![1.0; n]));
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.params.get_mut(name)
    }

    pub fn names(&self) -> Vec<String> {
        self.params.keys().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.params.iter()
    }

    /// Writes the parameter section: one `param <name> <shape>` header line
    /// followed by one line of values formatted so parsing round-trips exactly.
    pub fn write_params(&self, w: &mut impl Write) -> Result<()> {
        for (name, t) in &self.params {
            let shape: Vec<String> = t.shape().iter().map(|d| d.to_string()).collect();
            writeln!(w, "param {} {}", name, shape.join(","))?;
            let vals: Vec<String> = t.data().iter().map(|v| format!("{v:?}")).collect();
            writeln!(w, "{}", vals.join(" "))?;
        }
        Ok(())
    }

    /// Reads a parameter section written by [`ParamStore::write_params`].
    pub fn read_params(lines: &mut std::iter::Peekable<impl Iterator<Item = String>>, seed: u64) -> Result<Self> {
        let mut store = ParamStore::new(seed);
        while let Some(line) = lines.peek() {
            if !line.starts_with("param ") {
                break;
            }
            let line = lines.next().unwrap();
            let mut parts = line.split_whitespace();
            parts.next(); // "param"
            let name = parts
                .next()
                .ok_or_else(|| Error::Checkpoint("param line missing name".into()))?
                .to_string();
            let shape: Vec<usize> = parts
                .next()
                .ok_or_else(|| Error::Checkpoint(format!("param `{name}` missing shape")))?
                .split(',')
                .map(|d| d.parse().map_err(|_| Error::Checkpoint(format!("bad shape for `{name}`"))))
                .collect::<Result<_>>()?;
            let values_line = lines
                .next()
                .ok_or_else(|| Error::Checkpoint(format!("param `{name}` missing values")))?;
            let data: Vec<f64> = values_line
                .split_whitespace()
                .map(|v| v.parse().map_err(|_| Error::Checkpoint(format!("bad value for `{name}`"))))
                .collect::<Result<_>>()?;
            let expect: usize = shape.iter().product();
            if data.len() != expect {
                return Err(Error::Checkpoint(format!(
                    "param `{name}` has {} values, expected {expect}",
                    data.len()
                )));
            }
            store.insert(&name, Tensor::new(shape, data));
        }
        Ok(store)
    }

    /// Standalone checkpoint: version line, seed, then the parameter section.
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let mut buf = Vec::new();
        writeln!(buf, "topspan-params v1")?;
        writeln!(buf, "seed {}", self.seed)?;
        self.write_params(&mut buf)?;
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
        if header != "topspan-params v1" {
            return Err(Error::Checkpoint(format!("unexpected header `{header}`")));
        }
        let seed_line = lines.next().ok_or_else(|| Error::Checkpoint("missing seed".into()))?;
        let seed = seed_line
            .strip_prefix("seed ")
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Checkpoint("bad seed line".into()))?;
        Self::read_params(&mut lines, seed)
    }
}

/// Per-parameter gradient accumulator produced by the backward pass.
#[derive(Debug, Default, Clone)]
pub struct Gradients {
    grads: BTreeMap<String, Tensor>,
}

impl Gradients {
    pub fn new() -> Self {
        Gradients::default()
    }

    pub fn accumulate(&mut self, name: &str, g: Tensor) {
        match self.grads.get_mut(name) {
            Some(existing) => existing.add_in_place(&g),
            None => {
                self.grads.insert(name.to_string(), g);
            }
        }
    }

    /// Adds every gradient from `other` into `self`.
    pub fn merge(&mut self, other: Gradients) {
        for (name, g) in other.grads {
            self.accumulate(&name, g);
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.grads.get(name)
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn scale(&mut self, c: f64) {
        for g in self.grads.values_mut() {
            g.scale_in_place(c);
        }
    }

    /// Inserts a zero gradient for every parameter the backward pass did not
    /// reach, so the optimizer can treat the set as complete.
    pub fn fill_missing(&mut self, store: &ParamStore) {
        for (name, t) in store.iter() {
            if !self.grads.contains_key(name) {
                self.grads.insert(name.clone(), Tensor::zeros(t.shape().to_vec()));
            }
        }
    }
}
