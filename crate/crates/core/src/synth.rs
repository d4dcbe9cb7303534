//! Seeded synthetic corpus: short query-like templated sentences over three
//! entity types with Zipf-distributed name frequencies, so that many test
//! names are rare or unseen and typing must lean on context.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng as _;
use rand_distr::{Distribution, Zipf};

use crate::corpus::{Dataset, GoldSpan, LabelSet, Provenance, Sentence};
use crate::rng::{self, Rng};
use crate::Result;

pub const ENTITY_TYPES: [&str; 3] = ["LOC", "ORG", "PER"];

const TEMPLATES: &[&str] = &[
    "{PER} in {LOC}",
    "flights to {LOC}",
    "{ORG} jobs in {LOC}",
    "{PER} contact",
    "buy {ORG} shares",
    "weather {LOC}",
    "{PER} {ORG} email",
    "cheap hotels near {LOC}",
    "{ORG} headquarters",
    "who is {PER}",
    "{PER} latest news",
    "{ORG} stock price today",
    "news about {PER} and {ORG}",
    "restaurants in {LOC}",
    "{PER} born in {LOC}",
    "{ORG} store {LOC}",
    "{PER} visited {LOC} last week .",
    "{ORG} hired {PER} as chief engineer .",
    "shares of {ORG} rose on monday .",
    "nothing unusual happened today .",
];

const ONSETS: &[&str] = &[
    "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "dr", "kr", "st",
    "tr", "gl",
];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ai", "ou"];
const CODAS: &[&str] = &["", "n", "r", "s", "l", "th", "x", "nd"];
const ORG_SUFFIXES: &[&str] = &["corp", "group", "bank", "labs"];
const LOC_PREFIXES: &[&str] = &["north", "port", "lake"];

/// Sizes and seed of a generated corpus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    /// Distinct base names per entity type.
    pub pool_size: usize,
    /// Zipf exponent of name frequencies.
    pub zipf_exponent: f64,
    /// Probability that an entity slot holds a plain noun instead.
    pub filler_rate: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            pool_size: 400,
            zipf_exponent: 1.1,
            filler_rate: 0.15,
        }
    }
}

fn syllable(r: &mut Rng) -> String {
    format!(
        "{}{}{}",
        ONSETS[r.random_range(0..ONSETS.len())],
        VOWELS[r.random_range(0..VOWELS.len())],
        CODAS[r.random_range(0..CODAS.len())]
    )
}

/// Fixed per-type name inventories plus a pool of plain nouns. Entries never
/// collide across pools or with template words.
struct NamePools {
    pools: Vec<Vec<String>>,
    zipf: Zipf<f64>,
}

impl NamePools {
    fn new(cfg: &SynthConfig) -> Self {
        let mut r = rng::stream(cfg.seed, "synth-names", &[]);
        let mut seen: alloc::collections::BTreeSet<String> = TEMPLATES
            .iter()
            .flat_map(|t| t.split_whitespace())
            .chain(ORG_SUFFIXES.iter().copied())
            .chain(LOC_PREFIXES.iter().copied())
            .map(String::from)
            .collect();
        let pools = (0..=ENTITY_TYPES.len())
            .map(|_| {
                let mut pool = Vec::with_capacity(cfg.pool_size);
                while pool.len() < cfg.pool_size {
                    let n = r.random_range(2..=3);
                    let name: String = (0..n).map(|_| syllable(&mut r)).collect();
                    if seen.insert(name.clone()) {
                        pool.push(name);
                    }
                }
                pool
            })
            .collect();
        let zipf =
            Zipf::new(cfg.pool_size as f64, cfg.zipf_exponent).expect("valid zipf parameters");
        Self { pools, zipf }
    }

    fn draw(&self, kind: usize, r: &mut Rng) -> String {
        let rank = self.zipf.sample(r) as usize - 1;
        self.pools[kind][rank.min(self.pools[kind].len() - 1)].clone()
    }

    fn filler(&self, r: &mut Rng) -> Vec<String> {
        alloc::vec![self.draw(ENTITY_TYPES.len(), r)]
    }

    fn mention(&self, kind: usize, r: &mut Rng) -> Vec<String> {
        let base = self.draw(kind, r);
        match ENTITY_TYPES[kind] {
            "PER" if r.random_bool(0.5) => alloc::vec![base, self.draw(kind, r)],
            "ORG" if r.random_bool(0.5) => {
                alloc::vec![
                    base,
                    String::from(ORG_SUFFIXES[r.random_range(0..ORG_SUFFIXES.len())])
                ]
            }
            "LOC" if r.random_bool(0.2) => {
                alloc::vec![
                    String::from(LOC_PREFIXES[r.random_range(0..LOC_PREFIXES.len())]),
                    base
                ]
            }
            _ => alloc::vec![base],
        }
    }
}

pub fn label_set() -> LabelSet {
    LabelSet::from_entity_types(ENTITY_TYPES).expect("distinct entity types")
}

/// A generator bound to one name inventory. Sentence `k` of any call is a
/// pure function of `(seed, split, k)`.
pub struct SynthCorpus {
    cfg: SynthConfig,
    names: NamePools,
    labels: LabelSet,
}

impl SynthCorpus {
    pub fn new(cfg: SynthConfig) -> Self {
        Self {
            names: NamePools::new(&cfg),
            labels: label_set(),
            cfg,
        }
    }

    /// `count` sentences of split `split`, with ids starting at `id_offset`.
    pub fn generate(&self, split: &str, count: usize, id_offset: u64) -> Result<Dataset> {
        let mut sentences = Vec::with_capacity(count);
        let mut annotations = Vec::with_capacity(count);
        for k in 0..count as u64 {
            let mut r = rng::stream(
                self.cfg.seed,
                "synth-sentence",
                &[rng::derive_seed(0, split, &[]), k],
            );
            let template = TEMPLATES[r.random_range(0..TEMPLATES.len())];
            let mut tokens = Vec::new();
            let mut spans = Vec::new();
            for word in template.split_whitespace() {
                let slot = word
                    .strip_prefix('{')
                    .and_then(|w| w.strip_suffix('}'))
                    .and_then(|w| ENTITY_TYPES.iter().position(|t| *t == w));
                match slot {
                    Some(_) if r.random_bool(self.cfg.filler_rate) => {
                        tokens.extend(self.names.filler(&mut r))
                    }
                    Some(kind) => {
                        let mention = self.names.mention(kind, &mut r);
                        let start = tokens.len();
                        tokens.extend(mention);
                        let label = self.labels.id(ENTITY_TYPES[kind]).expect("known type");
                        spans.push(GoldSpan::new(start, tokens.len() - 1, label));
                    }
                    None => tokens.push(String::from(word)),
                }
            }
            sentences.push(Sentence::new(id_offset + k, tokens)?);
            annotations.push(spans);
        }
        Dataset::new(
            sentences,
            annotations,
            self.labels.clone(),
            Provenance::WellAnnotated,
        )
    }
}

/// The standard experiment splits of one corpus seed.
#[derive(Debug, Clone)]
pub struct SynthSplits {
    pub train: Dataset,
    pub dev: Dataset,
    pub test: Dataset,
    /// Fully annotated extra sentences, to be corrupted by the caller.
    pub extra: Dataset,
}

pub fn standard_splits(
    cfg: SynthConfig,
    train: usize,
    dev: usize,
    test: usize,
    extra: usize,
) -> Result<SynthSplits> {
    let corpus = SynthCorpus::new(cfg);
    let mut offset = 0u64;
    let mut next = |split: &str, n: usize| {
        let ds = corpus.generate(split, n, offset);
        offset += n as u64;
        ds
    };
    Ok(SynthSplits {
        train: next("train", train)?,
        dev: next("dev", dev)?,
        test: next("test", test)?,
        extra: next("extra", extra)?,
    })
}
