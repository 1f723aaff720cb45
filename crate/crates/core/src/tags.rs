//! Tag-scheme conversion (IOB1, BIO, IOBES), entity extraction, and
//! entity/token/example level scoring.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TagError {
    #[error("position {position}: malformed tag {tag:?}")]
    Malformed { position: usize, tag: String },
    #[error("position {position}: unexpected tag {tag:?}")]
    Violation { position: usize, tag: String },
    #[error("sentence {sentence}: gold has {gold} tags, prediction has {pred}")]
    ShapeMismatch { sentence: usize, gold: usize, pred: usize },
    #[error("gold has {gold} sentences, prediction has {pred}")]
    CountMismatch { gold: usize, pred: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Scheme {
    Iob1,
    Bio,
    Iobes,
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "iob1" | "iob" => Ok(Scheme::Iob1),
            "bio" | "iob2" => Ok(Scheme::Bio),
            "iobes" | "bioes" => Ok(Scheme::Iobes),
            _ => Err(format!("unknown tag scheme `{s}`")),
        }
    }
}

/// How violations of the tag grammar are handled.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Strict,
    #[default]
    Lenient,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Prefix {
    B,
    I,
    E,
    S,
}

/// A parsed tag: `O` or `<prefix>-<type>`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Tag<'a> {
    Outside,
    Chunk(Prefix, &'a str),
}

impl<'a> Tag<'a> {
    fn parse(tag: &'a str, position: usize) -> Result<Self, TagError> {
        if tag == "O" {
            return Ok(Tag::Outside);
        }
        let malformed = || TagError::Malformed {
            position,
            tag: tag.to_owned(),
        };
        let (prefix, etype) = tag.split_once('-').ok_or_else(malformed)?;
        if etype.is_empty() {
            return Err(malformed());
        }
        let prefix = match prefix {
            "B" => Prefix::B,
            "I" => Prefix::I,
            "E" => Prefix::E,
            "S" => Prefix::S,
            _ => return Err(malformed()),
        };
        Ok(Tag::Chunk(prefix, etype))
    }

    fn etype(self) -> Option<&'a str> {
        match self {
            Tag::Outside => None,
            Tag::Chunk(_, t) => Some(t),
        }
    }
}

fn parse_all<'a, S: AsRef<str>>(labels: &'a [S], allowed: &[Prefix]) -> Result<Vec<Tag<'a>>, TagError> {
    labels
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let tag = Tag::parse(l.as_ref(), i)?;
            match tag {
                Tag::Chunk(p, _) if !allowed.contains(&p) => Err(TagError::Malformed {
                    position: i,
                    tag: l.as_ref().to_owned(),
                }),
                t => Ok(t),
            }
        })
        .collect()
}

/// IOB1 to BIO: an `I-X` that opens an entity becomes `B-X`.
pub fn iob1_to_bio<S: AsRef<str>>(labels: &[S]) -> Result<Vec<String>, TagError> {
    let tags = parse_all(labels, &[Prefix::B, Prefix::I])?;
    let mut out = Vec::with_capacity(tags.len());
    let mut prev: Option<&str> = None;
    for (tag, raw) in tags.iter().zip(labels) {
        match *tag {
            Tag::Chunk(Prefix::I, etype) if prev != Some(etype) => out.push(format!("B-{etype}")),
            _ => out.push(raw.as_ref().to_owned()),
        }
        prev = tag.etype();
    }
    Ok(out)
}

/// BIO to IOBES. A stray `I-X` is an error in strict mode and is read as
/// `B-X` in lenient mode.
pub fn bio_to_iobes<S: AsRef<str>>(labels: &[S], mode: Mode) -> Result<Vec<String>, TagError> {
    let tags = parse_all(labels, &[Prefix::B, Prefix::I])?;
    // repair first so continuation checks below see a valid BIO sequence
    let mut fixed = Vec::with_capacity(tags.len());
    for (i, tag) in tags.iter().enumerate() {
        let prev = if i == 0 { None } else { fixed.get(i - 1).copied() };
        match *tag {
            Tag::Chunk(Prefix::I, etype) => {
                let continues = matches!(prev, Some(Tag::Chunk(Prefix::B | Prefix::I, t)) if t == etype);
                if continues {
                    fixed.push(*tag);
                } else if mode == Mode::Strict {
                    return Err(TagError::Violation {
                        position: i,
                        tag: labels[i].as_ref().to_owned(),
                    });
                } else {
                    fixed.push(Tag::Chunk(Prefix::B, etype));
                }
            }
            t => fixed.push(t),
        }
    }
    let mut out = Vec::with_capacity(fixed.len());
    for (i, tag) in fixed.iter().enumerate() {
        let next_continues = |etype: &str| matches!(fixed.get(i + 1), Some(Tag::Chunk(Prefix::I, t)) if *t == etype);
        out.push(match *tag {
            Tag::Outside => "O".to_owned(),
            Tag::Chunk(Prefix::B, t) if next_continues(t) => format!("B-{t}"),
            Tag::Chunk(Prefix::B, t) => format!("S-{t}"),
            Tag::Chunk(_, t) if next_continues(t) => format!("I-{t}"),
            Tag::Chunk(_, t) => format!("E-{t}"),
        });
    }
    Ok(out)
}

/// Convert `labels` from `from` to IOBES.
pub fn to_iobes<S: AsRef<str>>(labels: &[S], from: Scheme, mode: Mode) -> Result<Vec<String>, TagError> {
    match from {
        Scheme::Iob1 => bio_to_iobes(&iob1_to_bio(labels)?, mode),
        Scheme::Bio => bio_to_iobes(labels, mode),
        Scheme::Iobes => {
            parse_all(labels, &[Prefix::B, Prefix::I, Prefix::E, Prefix::S])?;
            Ok(labels.iter().map(|l| l.as_ref().to_owned()).collect())
        }
    }
}

/// A typed span `[start, end)` within sentence `sentence`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Entity {
    pub sentence: usize,
    pub start: usize,
    pub end: usize,
    pub etype: String,
}

impl fmt::Display for Entity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({},{})", self.etype, self.start, self.end)
    }
}

/// Extract entities from an IOBES sequence.
///
/// Lenient mode follows conlleval chunk boundaries: a stray `I`/`E` opens a
/// new span and an unterminated span closes at the end of the sentence.
/// `B`/`I`/`E` prefixes alone also accept plain BIO input in lenient mode.
pub fn extract_entities<S: AsRef<str>>(labels: &[S], mode: Mode, sentence: usize) -> Result<Vec<Entity>, TagError> {
    let tags = parse_all(labels, &[Prefix::B, Prefix::I, Prefix::E, Prefix::S])?;
    match mode {
        Mode::Strict => extract_strict(&tags, labels, sentence),
        Mode::Lenient => Ok(extract_lenient(&tags, sentence)),
    }
}

fn extract_strict<S: AsRef<str>>(tags: &[Tag<'_>], labels: &[S], sentence: usize) -> Result<Vec<Entity>, TagError> {
    let violation = |i: usize| TagError::Violation {
        position: i,
        tag: labels[i].as_ref().to_owned(),
    };
    let mut entities = Vec::new();
    let mut open: Option<(usize, &str)> = None;
    for (i, tag) in tags.iter().enumerate() {
        match (*tag, open) {
            (Tag::Outside, None) => {}
            (Tag::Chunk(Prefix::S, t), None) => entities.push(Entity {
                sentence,
                start: i,
                end: i + 1,
                etype: t.to_owned(),
            }),
            (Tag::Chunk(Prefix::B, t), None) => open = Some((i, t)),
            (Tag::Chunk(Prefix::I, t), Some((_, o))) if t == o => {}
            (Tag::Chunk(Prefix::E, t), Some((start, o))) if t == o => {
                entities.push(Entity {
                    sentence,
                    start,
                    end: i + 1,
                    etype: t.to_owned(),
                });
                open = None;
            }
            _ => return Err(violation(i)),
        }
    }
    if open.is_some() {
        return Err(violation(tags.len() - 1));
    }
    Ok(entities)
}

fn extract_lenient(tags: &[Tag<'_>], sentence: usize) -> Vec<Entity> {
    let mut entities = Vec::new();
    let mut open: Option<(usize, &str)> = None;
    let mut prev = Tag::Outside;
    for (i, &tag) in tags.iter().enumerate() {
        if open.is_some() && chunk_ends(prev, tag) {
            let (start, t) = open.take().unwrap();
            entities.push(Entity {
                sentence,
                start,
                end: i,
                etype: t.to_owned(),
            });
        }
        if chunk_starts(prev, tag) {
            open = tag.etype().map(|t| (i, t));
        }
        prev = tag;
    }
    if let Some((start, t)) = open {
        entities.push(Entity {
            sentence,
            start,
            end: tags.len(),
            etype: t.to_owned(),
        });
    }
    entities
}

// conlleval's endOfChunk, evaluated before consuming `tag`
fn chunk_ends(prev: Tag<'_>, tag: Tag<'_>) -> bool {
    use Prefix::*;
    match (prev, tag) {
        (Tag::Outside, _) => false,
        (Tag::Chunk(E | S, _), _) => true,
        (Tag::Chunk(B | I, _), Tag::Outside | Tag::Chunk(B | S, _)) => true,
        (Tag::Chunk(_, p), Tag::Chunk(_, t)) => p != t,
    }
}

// conlleval's startOfChunk
fn chunk_starts(prev: Tag<'_>, tag: Tag<'_>) -> bool {
    use Prefix::*;
    match (prev, tag) {
        (_, Tag::Outside) => false,
        (_, Tag::Chunk(B | S, _)) => true,
        (Tag::Outside | Tag::Chunk(E | S, _), Tag::Chunk(I | E, _)) => true,
        (Tag::Chunk(_, p), Tag::Chunk(_, t)) => p != t,
    }
}

/// Entity-level precision, recall and F1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ScoreReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ScoreReport {
    /// Zero denominators give 0, as conlleval does.
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        ScoreReport {
            precision,
            recall,
            f1,
            tp,
            fp,
            fn_,
        }
    }
}

fn check_shapes<G: AsRef<[S]>, P: AsRef<[S]>, S>(gold: &[G], pred: &[P]) -> Result<(), TagError> {
    for (i, (g, p)) in gold.iter().zip(pred).enumerate() {
        if g.as_ref().len() != p.as_ref().len() {
            return Err(TagError::ShapeMismatch {
                sentence: i,
                gold: g.as_ref().len(),
                pred: p.as_ref().len(),
            });
        }
    }
    if gold.len() != pred.len() {
        return Err(TagError::CountMismatch {
            gold: gold.len(),
            pred: pred.len(),
        });
    }
    Ok(())
}

/// Entities matching on type and both boundaries count as true positives.
pub fn entity_prf<S: AsRef<str>>(gold: &[Vec<S>], pred: &[Vec<S>], mode: Mode) -> Result<ScoreReport, TagError> {
    check_shapes(gold, pred)?;
    let collect = |seqs: &[Vec<S>]| -> Result<HashSet<Entity>, TagError> {
        let mut all = HashSet::new();
        for (i, s) in seqs.iter().enumerate() {
            all.extend(extract_entities(s, mode, i)?);
        }
        Ok(all)
    };
    let gold = collect(gold)?;
    let pred = collect(pred)?;
    let tp = gold.intersection(&pred).count();
    Ok(ScoreReport::from_counts(tp, pred.len() - tp, gold.len() - tp))
}

/// Fraction of tokens whose predicted tag equals the gold tag.
pub fn token_accuracy<S: AsRef<str> + PartialEq>(gold: &[Vec<S>], pred: &[Vec<S>]) -> Result<f64, TagError> {
    check_shapes(gold, pred)?;
    let (mut correct, mut total) = (0usize, 0usize);
    for (g, p) in gold.iter().zip(pred) {
        total += g.len();
        correct += g.iter().zip(p).filter(|(a, b)| a == b).count();
    }
    Ok(if total == 0 { 0.0 } else { correct as f64 / total as f64 })
}

/// Fraction of examples whose predicted label equals the gold label.
pub fn example_accuracy<S: AsRef<str> + PartialEq>(gold: &[S], pred: &[S]) -> Result<f64, TagError> {
    if gold.len() != pred.len() {
        return Err(TagError::CountMismatch {
            gold: gold.len(),
            pred: pred.len(),
        });
    }
    if gold.is_empty() {
        return Ok(0.0);
    }
    let correct = gold.iter().zip(pred).filter(|(a, b)| a == b).count();
    Ok(correct as f64 / gold.len() as f64)
}
