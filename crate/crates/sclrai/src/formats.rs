//! On-disk formats.
//!
//! Binary files share one layout: an 8-byte magic, a little-endian `u32`
//! version, then the body. Integers are little-endian, strings are a `u32`
//! byte length followed by UTF-8, and every float is a little-endian `f32`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use sclrai_core::corpus::{EntityDictionary, LabelId, LabelSet, Sentence};
use sclrai_core::encoder::{
    Encoder, HiddenSequence, PrecomputedFeatures, Vocabulary, WindowEncoder,
};
use sclrai_core::eval::RepresentationRecord;
use sclrai_core::math::Matrix;
use sclrai_core::model::SpanModel;
use sclrai_core::rai::CentroidTable;
use sclrai_core::span_model::ScoringParams;
use sclrai_core::training::Hyperparams;

use crate::config;

pub const VERSION: u32 = 1;
pub const FEATURES_MAGIC: &[u8; 8] = b"SCLRAIFT";
pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SCLRAICK";
pub const CENTROIDS_MAGIC: &[u8; 8] = b"SCLRAICT";
pub const REPRS_MAGIC: &[u8; 8] = b"SCLRAIRP";

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("not a {expected} file")]
    Magic { expected: &'static str },

    #[error("unsupported format version {0}")]
    Version(u32),

    #[error("truncated input at byte {0}")]
    Truncated(usize),

    #[error("{0}")]
    Invalid(String),

    #[error(transparent)]
    Core(#[from] sclrai_core::Error),
}

pub type Result<T> = std::result::Result<T, FormatError>;

#[derive(Default)]
struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn with_header(magic: &[u8; 8]) -> Self {
        let mut w = Self::default();
        w.buf.extend_from_slice(magic);
        w.u32(VERSION);
        w
    }

    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn len(&mut self, v: usize) {
        self.u32(u32::try_from(v).expect("length fits in u32"));
    }

    fn floats(&mut self, v: &[f64]) {
        for x in v {
            self.buf.extend_from_slice(&(*x as f32).to_le_bytes());
        }
    }

    fn str(&mut self, s: &str) {
        self.len(s.len());
        self.buf.extend_from_slice(s.as_bytes());
    }

    fn labels(&mut self, labels: &LabelSet) {
        self.len(labels.len());
        for name in labels.names() {
            self.str(name);
        }
        self.len(labels.non_entity().0);
    }

    fn matrix(&mut self, m: &Matrix) {
        self.len(m.rows());
        self.len(m.cols());
        self.floats(m.as_slice());
    }

    fn section(&mut self, name: &str, body: Writer) {
        self.str(name);
        self.u64(body.buf.len() as u64);
        self.buf.extend_from_slice(&body.buf);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn with_header(buf: &'a [u8], magic: &[u8; 8], expected: &'static str) -> Result<Self> {
        let mut r = Self::new(buf);
        if r.take(8).ok() != Some(&magic[..]) {
            return Err(FormatError::Magic { expected });
        }
        match r.u32()? {
            VERSION => Ok(r),
            v => Err(FormatError::Version(v)),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.buf.len());
        let end = end.ok_or(FormatError::Truncated(self.pos))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn len(&mut self) -> Result<usize> {
        Ok(self.u32()? as usize)
    }

    fn floats(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(4).ok_or(FormatError::Truncated(self.pos))?)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect())
    }

    fn str(&mut self) -> Result<String> {
        let n = self.len()?;
        let bytes = self.take(n)?;
        String::from_utf8(bytes.to_vec())
            .map_err(|_| FormatError::Invalid("string is not UTF-8".into()))
    }

    fn labels(&mut self) -> Result<LabelSet> {
        let n = self.len()?;
        let names = (0..n).map(|_| self.str()).collect::<Result<Vec<_>>>()?;
        let v = self.len()?;
        Ok(LabelSet::new(names, v)?)
    }

    fn matrix(&mut self) -> Result<Matrix> {
        let rows = self.len()?;
        let cols = self.len()?;
        let data = self.floats(
            rows.checked_mul(cols)
                .ok_or(FormatError::Truncated(self.pos))?,
        )?;
        Ok(Matrix::from_vec(rows, cols, data)?)
    }

    fn finish(&self) -> Result<()> {
        if self.pos == self.buf.len() {
            Ok(())
        } else {
            Err(FormatError::Invalid(format!(
                "{} trailing bytes",
                self.buf.len() - self.pos
            )))
        }
    }

    fn sections(mut self) -> Result<BTreeMap<String, &'a [u8]>> {
        let mut out = BTreeMap::new();
        while self.pos < self.buf.len() {
            let name = self.str()?;
            let n = usize::try_from(self.u64()?).map_err(|_| FormatError::Truncated(self.pos))?;
            let body = self.take(n)?;
            if out.insert(name.clone(), body).is_some() {
                return Err(FormatError::Invalid(format!("duplicate section {name}")));
            }
        }
        Ok(out)
    }
}

pub fn write_features(features: &PrecomputedFeatures) -> Vec<u8> {
    let mut w = Writer::with_header(FEATURES_MAGIC);
    w.len(features.dim());
    w.u64(features.len() as u64);
    for (id, seq) in features.iter() {
        w.u64(id);
        w.len(seq.len());
        w.floats(seq.as_slice());
    }
    w.buf
}

pub fn read_features(bytes: &[u8]) -> Result<PrecomputedFeatures> {
    let mut r = Reader::with_header(bytes, FEATURES_MAGIC, "precomputed-feature")?;
    let dim = r.len()?;
    let count = r.u64()?;
    let mut out = PrecomputedFeatures::new(dim);
    for _ in 0..count {
        let id = r.u64()?;
        let n = r.len()?;
        let data = r.floats(n.checked_mul(dim).ok_or(FormatError::Truncated(r.pos))?)?;
        out.insert(id, HiddenSequence::new(dim, data)?)?;
    }
    if out.len() as u64 != count {
        return Err(FormatError::Invalid("duplicate sentence id".into()));
    }
    r.finish()?;
    Ok(out)
}

/// A trained model plus the hyperparameters it was trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: SpanModel,
    pub hyper: Hyperparams,
}

const WINDOW: &str = "window";
const PRECOMPUTED: &str = "precomputed";

/// Floats are rounded to `f32`, so only a quantized model round-trips exactly.
pub fn write_checkpoint(ckpt: &Checkpoint) -> Vec<u8> {
    let model = &ckpt.model;
    let mut out = Writer::with_header(CHECKPOINT_MAGIC);

    let mut s = Writer::default();
    s.str(&config::hyper_text(&ckpt.hyper));
    out.section("hyperparameters", s);

    let mut s = Writer::default();
    s.u64(ckpt.hyper.seed);
    out.section("seed", s);

    let mut s = Writer::default();
    s.labels(&model.labels);
    out.section("labels", s);

    let mut s = Writer::default();
    match &model.encoder {
        Encoder::Window(_) => s.str(WINDOW),
        Encoder::Precomputed(_) => s.str(PRECOMPUTED),
    }
    s.len(model.hidden_dim());
    out.section("encoder", s);

    if let Encoder::Window(enc) = &model.encoder {
        let mut s = Writer::default();
        s.len(enc.vocab.len());
        for t in enc.vocab.tokens() {
            s.str(t);
        }
        out.section("vocab", s);
        let mut s = Writer::default();
        s.matrix(&enc.embeddings);
        out.section("E", s);
        let mut s = Writer::default();
        s.matrix(&enc.mixing);
        out.section("U", s);
        let mut s = Writer::default();
        s.len(enc.bias.len());
        s.floats(&enc.bias);
        out.section("b", s);
    }

    let mut s = Writer::default();
    s.matrix(&model.scoring.projection);
    out.section("W", s);
    let mut s = Writer::default();
    s.matrix(&model.scoring.output);
    out.section("V", s);
    out.buf
}

/// A precomputed-feature checkpoint stores no features; `features` supplies
/// them.
pub fn read_checkpoint(bytes: &[u8], features: Option<PrecomputedFeatures>) -> Result<Checkpoint> {
    let sections = Reader::with_header(bytes, CHECKPOINT_MAGIC, "checkpoint")?.sections()?;
    let section = |name: &str| -> Result<Reader<'_>> {
        sections
            .get(name)
            .map(|b| Reader::new(b))
            .ok_or_else(|| FormatError::Invalid(format!("missing section {name}")))
    };

    let mut r = section("hyperparameters")?;
    let text = r.str()?;
    r.finish()?;
    let mut hyper = config::parse_hyper_text(&text).map_err(FormatError::Invalid)?;
    let mut r = section("seed")?;
    hyper.seed = r.u64()?;
    r.finish()?;

    let mut r = section("labels")?;
    let labels = r.labels()?;
    r.finish()?;

    let mut r = section("encoder")?;
    let kind = r.str()?;
    let hidden_dim = r.len()?;
    r.finish()?;

    let encoder = match kind.as_str() {
        WINDOW => {
            let mut r = section("vocab")?;
            let n = r.len()?;
            let tokens = (0..n).map(|_| r.str()).collect::<Result<Vec<_>>>()?;
            r.finish()?;
            let vocab = Vocabulary::from_tokens(tokens);
            if vocab.len() != n {
                return Err(FormatError::Invalid(
                    "vocabulary entries are not distinct".into(),
                ));
            }
            let mut r = section("E")?;
            let e = r.matrix()?;
            r.finish()?;
            let mut r = section("U")?;
            let u = r.matrix()?;
            r.finish()?;
            let mut r = section("b")?;
            let n = r.len()?;
            let b = r.floats(n)?;
            r.finish()?;
            Encoder::Window(WindowEncoder::from_parts(vocab, e, u, b)?)
        }
        PRECOMPUTED => {
            let features = features.ok_or_else(|| {
                FormatError::Invalid(
                    "checkpoint uses precomputed features but none were supplied".into(),
                )
            })?;
            Encoder::Precomputed(features)
        }
        other => {
            return Err(FormatError::Invalid(format!(
                "unknown encoder kind {other:?}"
            )))
        }
    };
    if sclrai_core::encoder::Encode::hidden_dim(&encoder) != hidden_dim {
        return Err(FormatError::Invalid(format!(
            "encoder dimension {} does not match checkpoint dimension {hidden_dim}",
            sclrai_core::encoder::Encode::hidden_dim(&encoder)
        )));
    }

    let mut r = section("W")?;
    let projection = r.matrix()?;
    r.finish()?;
    let mut r = section("V")?;
    let output = r.matrix()?;
    r.finish()?;

    let model = SpanModel::new(encoder, ScoringParams { projection, output }, labels)?;
    Ok(Checkpoint { model, hyper })
}

pub fn write_centroids(table: &CentroidTable) -> Vec<u8> {
    let mut w = Writer::with_header(CENTROIDS_MAGIC);
    w.labels(table.labels());
    w.len(table.dim());
    for l in 0..table.labels().len() {
        let id = LabelId(l);
        w.u64(table.count(id));
        if let Some(c) = table.centroid(id) {
            w.floats(c);
        }
    }
    w.buf
}

pub fn read_centroids(bytes: &[u8]) -> Result<CentroidTable> {
    let mut r = Reader::with_header(bytes, CENTROIDS_MAGIC, "centroid table")?;
    let labels = r.labels()?;
    let dim = r.len()?;
    let mut counts = Vec::with_capacity(labels.len());
    let mut centroids = Vec::with_capacity(labels.len());
    for _ in 0..labels.len() {
        let count = r.u64()?;
        counts.push(count);
        centroids.push(if count > 0 {
            Some(r.floats(dim)?)
        } else {
            None
        });
    }
    r.finish()?;
    Ok(CentroidTable::from_parts(labels, dim, counts, centroids)?)
}

pub fn write_representations(
    labels: &LabelSet,
    dim: usize,
    records: &[RepresentationRecord],
) -> Vec<u8> {
    let mut w = Writer::with_header(REPRS_MAGIC);
    w.labels(labels);
    w.len(dim);
    w.u64(records.len() as u64);
    for rec in records {
        w.u64(rec.sentence_id);
        w.len(rec.start);
        w.len(rec.end);
        w.len(rec.label.0);
        w.floats(&rec.rep);
    }
    w.buf
}

/// Label set, representation dimension and records.
pub fn read_representations(bytes: &[u8]) -> Result<(LabelSet, usize, Vec<RepresentationRecord>)> {
    let mut r = Reader::with_header(bytes, REPRS_MAGIC, "representation dump")?;
    let labels = r.labels()?;
    let dim = r.len()?;
    let count = r.u64()?;
    let mut records = Vec::new();
    for _ in 0..count {
        let sentence_id = r.u64()?;
        let start = r.len()?;
        let end = r.len()?;
        let label = r.len()?;
        if label >= labels.len() || start > end {
            return Err(FormatError::Invalid(format!(
                "bad record for sentence {sentence_id}"
            )));
        }
        records.push(RepresentationRecord {
            sentence_id,
            start,
            end,
            label: LabelId(label),
            rep: r.floats(dim)?,
        });
    }
    r.finish()?;
    Ok((labels, dim, records))
}

/// `surface form<TAB>label` lines, surface tokens joined by single spaces.
pub fn dictionary_text(dict: &EntityDictionary) -> String {
    let mut out = String::new();
    for (surface, label) in dict.iter() {
        let _ = writeln!(out, "{}\t{label}", surface.join(" "));
    }
    out
}

/// Blank lines are skipped.
pub fn parse_dictionary(text: &str) -> Result<EntityDictionary> {
    let mut entries = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let (surface, label) = line
            .split_once('\t')
            .filter(|(s, l)| !s.trim().is_empty() && !l.is_empty() && !l.contains('\t'))
            .ok_or_else(|| {
                FormatError::Invalid(format!(
                    "dictionary line {}: expected `surface<TAB>label`",
                    idx + 1
                ))
            })?;
        entries.push((
            surface
                .split(' ')
                .filter(|t| !t.is_empty())
                .map(String::from)
                .collect(),
            label.to_string(),
        ));
    }
    Ok(EntityDictionary::from_entries(entries)?)
}

/// One sentence per non-blank line; ids count non-blank lines from 0.
pub fn parse_raw_text(text: &str) -> Result<Vec<Sentence>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| Ok(Sentence::from_text(i as u64, l)?))
        .collect()
}

/// Entity counts of one `corrupt` run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CorruptStats {
    pub sentences: usize,
    pub input_entities: usize,
    pub kept: usize,
    pub dropped: usize,
    pub matched: usize,
}

impl CorruptStats {
    pub fn to_text(&self, mode: &str) -> String {
        format!(
            "mode\t{mode}\nsentences\t{}\ninput_entities\t{}\nkept\t{}\ndropped\t{}\nmatched\t{}\n",
            self.sentences, self.input_entities, self.kept, self.dropped, self.matched
        )
    }
}
