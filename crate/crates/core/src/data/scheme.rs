use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LabelScheme {
    Bio,
    #[default]
    Bioes,
}

impl FromStr for LabelScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bio" | "iob2" => Ok(Self::Bio),
            "bioes" | "iobes" => Ok(Self::Bioes),
            other => Err(Error::contract(format!("unknown label scheme {other}"))),
        }
    }
}

impl fmt::Display for LabelScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Bio => "bio",
            Self::Bioes => "bioes",
        })
    }
}

/// A typed entity segment with inclusive token bounds.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntitySpan {
    pub start: usize,
    pub end: usize,
    pub kind: String,
}

impl EntitySpan {
    pub fn new(start: usize, end: usize, kind: impl Into<String>) -> Self {
        Self {
            start,
            end,
            kind: kind.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Prefix {
    B,
    I,
    E,
    S,
    O,
}

pub(crate) fn split_tag(tag: &str) -> Option<(Prefix, &str)> {
    if tag == "O" {
        return Some((Prefix::O, ""));
    }
    let (p, kind) = tag.split_once('-')?;
    if kind.is_empty() {
        return None;
    }
    let prefix = match p {
        "B" => Prefix::B,
        "I" => Prefix::I,
        "E" => Prefix::E,
        "S" => Prefix::S,
        _ => return None,
    };
    Some((prefix, kind))
}

/// Decodes a sequence that must be well formed under `scheme`.
pub fn parse_spans<S: AsRef<str>>(labels: &[S], scheme: LabelScheme) -> Result<Vec<EntitySpan>> {
    let mut spans = Vec::new();
    let mut open: Option<(usize, &str)> = None;
    let err = |index: usize, message: &str| Error::Scheme {
        index,
        message: message.to_string(),
    };
    for (i, tag) in labels.iter().enumerate() {
        let tag = tag.as_ref();
        let (prefix, kind) = split_tag(tag).ok_or_else(|| err(i, &format!("malformed tag {tag:?}")))?;
        match scheme {
            LabelScheme::Bio => match prefix {
                Prefix::B => {
                    if let Some((s, k)) = open.take() {
                        spans.push(EntitySpan::new(s, i - 1, k));
                    }
                    open = Some((i, kind));
                }
                Prefix::I => match open {
                    Some((_, k)) if k == kind => {}
                    _ => return Err(err(i, &format!("{tag} does not continue a {kind} segment"))),
                },
                Prefix::O => {
                    if let Some((s, k)) = open.take() {
                        spans.push(EntitySpan::new(s, i - 1, k));
                    }
                }
                Prefix::E | Prefix::S => return Err(err(i, &format!("{tag} is not a BIO tag"))),
            },
            LabelScheme::Bioes => match prefix {
                Prefix::B | Prefix::S | Prefix::O if open.is_some() => {
                    return Err(err(i, &format!("{tag} interrupts an open segment")));
                }
                Prefix::B => open = Some((i, kind)),
                Prefix::S => spans.push(EntitySpan::new(i, i, kind)),
                Prefix::O => {}
                Prefix::I | Prefix::E => match open {
                    Some((s, k)) if k == kind => {
                        if prefix == Prefix::E {
                            spans.push(EntitySpan::new(s, i, k));
                            open = None;
                        }
                    }
                    _ => return Err(err(i, &format!("{tag} does not continue a {kind} segment"))),
                },
            },
        }
    }
    if let Some((s, k)) = open {
        match scheme {
            LabelScheme::Bio => spans.push(EntitySpan::new(s, labels.len() - 1, k)),
            LabelScheme::Bioes => {
                return Err(err(labels.len() - 1, &format!("segment {k} starting at {s} is never closed")));
            }
        }
    }
    Ok(spans)
}

/// Decodes possibly malformed predictions, keeping only well-formed
/// segments. A segment that is interrupted or never closed is dropped.
pub fn strict_spans<S: AsRef<str>>(labels: &[S], scheme: LabelScheme) -> Vec<EntitySpan> {
    let mut spans = Vec::new();
    let mut open: Option<(usize, String)> = None;
    for (i, tag) in labels.iter().enumerate() {
        let Some((prefix, kind)) = split_tag(tag.as_ref()) else {
            open = None;
            continue;
        };
        match scheme {
            LabelScheme::Bio => {
                let continues = prefix == Prefix::I && open.as_ref().is_some_and(|(_, k)| k == kind);
                if continues {
                    continue;
                }
                if let Some((s, k)) = open.take() {
                    spans.push(EntitySpan::new(s, i - 1, k));
                }
                if prefix == Prefix::B {
                    open = Some((i, kind.to_string()));
                }
            }
            LabelScheme::Bioes => {
                let same = open.as_ref().is_some_and(|(_, k)| k == kind);
                match prefix {
                    Prefix::I if same => {}
                    Prefix::E if same => {
                        let (s, k) = open.take().expect("checked open");
                        spans.push(EntitySpan::new(s, i, k));
                    }
                    Prefix::B => open = Some((i, kind.to_string())),
                    Prefix::S => {
                        open = None;
                        spans.push(EntitySpan::new(i, i, kind));
                    }
                    _ => open = None,
                }
            }
        }
    }
    if let (LabelScheme::Bio, Some((s, k))) = (scheme, open) {
        spans.push(EntitySpan::new(s, labels.len() - 1, k));
    }
    spans
}

/// Encodes non-overlapping spans over `n` tokens.
pub fn encode_spans(spans: &[EntitySpan], n: usize, scheme: LabelScheme) -> Vec<String> {
    let mut labels = vec!["O".to_string(); n];
    for span in spans {
        let k = &span.kind;
        for (i, label) in labels.iter_mut().enumerate().take(span.end + 1).skip(span.start) {
            *label = match scheme {
                LabelScheme::Bio if i == span.start => format!("B-{k}"),
                LabelScheme::Bio => format!("I-{k}"),
                LabelScheme::Bioes if span.start == span.end => format!("S-{k}"),
                LabelScheme::Bioes if i == span.start => format!("B-{k}"),
                LabelScheme::Bioes if i == span.end => format!("E-{k}"),
                LabelScheme::Bioes => format!("I-{k}"),
            };
        }
    }
    labels
}

pub fn convert_label_scheme<S: AsRef<str>>(labels: &[S], from: LabelScheme, to: LabelScheme) -> Result<Vec<String>> {
    let spans = parse_spans(labels, from)?;
    Ok(encode_spans(&spans, labels.len(), to))
}

/// Guesses the scheme of a well-formed sequence: BIOES if it carries any
/// `E-`/`S-` tag or is only valid as BIOES, else BIO.
pub fn detect_scheme<S: AsRef<str>>(labels: &[S]) -> Option<LabelScheme> {
    let has_es = labels
        .iter()
        .any(|t| matches!(split_tag(t.as_ref()), Some((Prefix::E | Prefix::S, _))));
    if has_es {
        return parse_spans(labels, LabelScheme::Bioes).ok().map(|_| LabelScheme::Bioes);
    }
    if parse_spans(labels, LabelScheme::Bio).is_ok() {
        Some(LabelScheme::Bio)
    } else if parse_spans(labels, LabelScheme::Bioes).is_ok() {
        Some(LabelScheme::Bioes)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(tags: &[&str]) -> Vec<String> {
        tags.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn bio_to_bioes_examples() {
        assert_eq!(convert_label_scheme(&["B-PER"], LabelScheme::Bio, LabelScheme::Bioes).unwrap(), v(&["S-PER"]));
        assert_eq!(
            convert_label_scheme(&["B-ORG", "I-ORG"], LabelScheme::Bio, LabelScheme::Bioes).unwrap(),
            v(&["B-ORG", "E-ORG"])
        );
        assert_eq!(
            convert_label_scheme(&["O", "B-A", "I-A", "I-A", "B-A", "O"], LabelScheme::Bio, LabelScheme::Bioes).unwrap(),
            v(&["O", "B-A", "I-A", "E-A", "S-A", "O"])
        );
    }

    #[test]
    fn invalid_input_reports_offending_index() {
        match convert_label_scheme(&["O", "O", "I-PER"], LabelScheme::Bio, LabelScheme::Bioes) {
            Err(Error::Scheme { index, .. }) => assert_eq!(index, 2),
            other => panic!("{other:?}"),
        }
        match convert_label_scheme(&["B-PER", "O"], LabelScheme::Bioes, LabelScheme::Bio) {
            Err(Error::Scheme { index, .. }) => assert_eq!(index, 1),
            other => panic!("{other:?}"),
        }
        match convert_label_scheme(&["B-PER", "I-LOC"], LabelScheme::Bio, LabelScheme::Bioes) {
            Err(Error::Scheme { index, .. }) => assert_eq!(index, 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn strict_decoding_drops_malformed_segments() {
        let pred = v(&["I-PER", "B-LOC", "O", "B-ORG", "E-ORG", "B-PER", "S-LOC", "E-LOC"]);
        assert_eq!(
            strict_spans(&pred, LabelScheme::Bioes),
            vec![EntitySpan::new(3, 4, "ORG"), EntitySpan::new(6, 6, "LOC")]
        );
        let bio = v(&["I-PER", "B-LOC", "I-LOC", "I-ORG"]);
        assert_eq!(strict_spans(&bio, LabelScheme::Bio), vec![EntitySpan::new(1, 2, "LOC")]);
    }

    #[test]
    fn detect_prefers_the_scheme_that_parses() {
        assert_eq!(detect_scheme(&["B-X", "I-X"]), Some(LabelScheme::Bio));
        assert_eq!(detect_scheme(&["B-X", "E-X"]), Some(LabelScheme::Bioes));
        assert_eq!(detect_scheme(&["O", "I-X"]), None);
    }

    fn bio_sequence() -> impl Strategy<Value = Vec<String>> {
        prop::collection::vec((0u8..5, 0u8..2), 1..30).prop_map(|draws| {
            let mut out: Vec<String> = Vec::new();
            for (choice, kind) in draws {
                let kind = if kind == 0 { "PER" } else { "LOC" };
                let prev_kind = out.last().and_then(|t| t.split_once('-')).map(|(_, k)| k.to_string());
                let tag = match choice {
                    0 | 1 => "O".to_string(),
                    2 | 3 => format!("B-{kind}"),
                    _ => match prev_kind {
                        Some(k) => format!("I-{k}"),
                        None => format!("B-{kind}"),
                    },
                };
                out.push(tag);
            }
            out
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn bio_bioes_round_trip(seq in bio_sequence()) {
            let bioes = convert_label_scheme(&seq, LabelScheme::Bio, LabelScheme::Bioes).unwrap();
            prop_assert!(parse_spans(&bioes, LabelScheme::Bioes).is_ok());
            let back = convert_label_scheme(&bioes, LabelScheme::Bioes, LabelScheme::Bio).unwrap();
            prop_assert_eq!(back, seq);
        }
    }
}
