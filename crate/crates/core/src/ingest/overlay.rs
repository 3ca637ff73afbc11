//! DDSM `.OVERLAY` annotation files.
//!
//! A file declares `TOTAL_ABNORMALITIES n` and then `n` blocks opened by
//! `ABNORMALITY i`. Each block carries one or more `LESION_TYPE` lines,
//! scalar keys such as `ASSESSMENT`, `SUBTLETY` and `PATHOLOGY`, and
//! outlines: a `BOUNDARY` or `CORE` keyword followed by a line holding the
//! start column, start row and a chain code terminated by `#`.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape tokens used by DDSM mass annotations. Compound values join these
/// with `-`.
pub const SHAPE_TOKENS: [&str; 10] = [
    "ROUND",
    "OVAL",
    "LOBULATED",
    "IRREGULAR",
    "ARCHITECTURAL_DISTORTION",
    "TUBULAR",
    "LYMPH_NODE",
    "ASYMMETRIC_BREAST_TISSUE",
    "FOCAL_ASYMMETRIC_DENSITY",
    "N/A",
];

pub const MARGIN_TOKENS: [&str; 6] =
    ["CIRCUMSCRIBED", "MICROLOBULATED", "OBSCURED", "ILL_DEFINED", "SPICULATED", "N/A"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutlineKind {
    Boundary,
    Core,
}

impl OutlineKind {
    fn keyword(self) -> &'static str {
        match self {
            OutlineKind::Boundary => "BOUNDARY",
            OutlineKind::Core => "CORE",
        }
    }
}

/// A chain-coded outline. Codes 0..=7 step N, NE, E, SE, S, SW, W, NW.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Outline {
    pub kind: OutlineKind,
    pub start: (u32, u32),
    pub chain: Vec<u8>,
}

/// Inclusive pixel box `(x0, y0)..=(x1, y1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl BoundingBox {
    pub fn width(&self) -> u32 {
        self.x1 - self.x0 + 1
    }

    pub fn height(&self) -> u32 {
        self.y1 - self.y0 + 1
    }
}

const STEPS: [(i64, i64); 8] = [(0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1)];

impl Outline {
    /// Pixels visited by the chain, starting point included.
    pub fn points(&self) -> Vec<(i64, i64)> {
        let mut p = (i64::from(self.start.0), i64::from(self.start.1));
        let mut out = Vec::with_capacity(self.chain.len() + 1);
        out.push(p);
        for &c in &self.chain {
            let (dx, dy) = STEPS[usize::from(c)];
            p = (p.0 + dx, p.1 + dy);
            out.push(p);
        }
        out
    }

    /// Box around the outline, clipped at zero.
    pub fn bounding_box(&self) -> BoundingBox {
        let pts = self.points();
        let clip = |v: i64| u32::try_from(v.max(0)).unwrap_or(u32::MAX);
        BoundingBox {
            x0: clip(pts.iter().map(|p| p.0).min().unwrap_or(0)),
            y0: clip(pts.iter().map(|p| p.1).min().unwrap_or(0)),
            x1: clip(pts.iter().map(|p| p.0).max().unwrap_or(0)),
            y1: clip(pts.iter().map(|p| p.1).max().unwrap_or(0)),
        }
    }
}

/// One `LESION_TYPE` line: the lesion kind followed by key/value pairs
/// such as `SHAPE OVAL MARGINS CIRCUMSCRIBED`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LesionType {
    pub kind: String,
    pub fields: Vec<(String, String)>,
}

impl LesionType {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.fields.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn is_mass(&self) -> bool {
        self.kind == "MASS"
    }
}

/// Lines of an abnormality block, in file order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Entry {
    Lesion(LesionType),
    Pathology(String),
    Outline(Outline),
    /// Any other `KEY value...` line, kept verbatim.
    Other { key: String, value: String },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Abnormality {
    pub index: u32,
    pub entries: Vec<Entry>,
    /// Line of the `ABNORMALITY` keyword, 1-based.
    pub line: usize,
}

impl Abnormality {
    pub fn lesions(&self) -> impl Iterator<Item = &LesionType> {
        self.entries.iter().filter_map(|e| match e {
            Entry::Lesion(l) => Some(l),
            _ => None,
        })
    }

    pub fn pathology(&self) -> Option<&str> {
        self.entries.iter().find_map(|e| match e {
            Entry::Pathology(p) => Some(p.as_str()),
            _ => None,
        })
    }

    pub fn outlines(&self) -> impl Iterator<Item = &Outline> {
        self.entries.iter().filter_map(|e| match e {
            Entry::Outline(o) => Some(o),
            _ => None,
        })
    }

    pub fn boundary(&self) -> Option<&Outline> {
        self.outlines().find(|o| o.kind == OutlineKind::Boundary)
    }

    pub fn mass(&self) -> Option<&LesionType> {
        self.lesions().find(|l| l.is_mass())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverlayFile {
    pub abnormalities: Vec<Abnormality>,
}

fn perr(line: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

fn check_tokens(value: &str, vocab: &[&str], what: &str, line: usize) -> Result<()> {
    for part in value.split('-') {
        if !vocab.contains(&part) {
            return Err(perr(
                line,
                format!("unknown {what} token {part:?}; expected one of {}", vocab.join(", ")),
            ));
        }
    }
    Ok(())
}

fn parse_lesion(rest: &[&str], line: usize) -> Result<LesionType> {
    let (kind, tail) = rest.split_first().ok_or_else(|| perr(line, "LESION_TYPE without a type"))?;
    if tail.len() % 2 != 0 {
        return Err(perr(line, "LESION_TYPE fields must come in key/value pairs"));
    }
    let fields: Vec<(String, String)> =
        tail.chunks(2).map(|kv| (kv[0].to_string(), kv[1].to_string())).collect();
    let lesion = LesionType { kind: kind.to_string(), fields };
    if lesion.is_mass() {
        let shape = lesion.get("SHAPE").ok_or_else(|| perr(line, "mass without SHAPE"))?;
        check_tokens(shape, &SHAPE_TOKENS, "shape", line)?;
        let margins = lesion.get("MARGINS").ok_or_else(|| perr(line, "mass without MARGINS"))?;
        check_tokens(margins, &MARGIN_TOKENS, "margin", line)?;
    }
    Ok(lesion)
}

fn parse_chain(text: &str, line: usize) -> Result<(u32, u32, Vec<u8>)> {
    let body = text
        .trim_end()
        .strip_suffix('#')
        .ok_or_else(|| perr(line, "outline chain must end with '#'"))?;
    let mut it = body.split_whitespace();
    let mut coord = |name: &str| -> Result<u32> {
        it.next()
            .ok_or_else(|| perr(line, format!("outline missing {name}")))?
            .parse()
            .map_err(|_| perr(line, format!("bad outline {name}")))
    };
    let x = coord("start column")?;
    let y = coord("start row")?;
    let chain = it
        .map(|t| match t.parse::<u8>() {
            Ok(c) if c < 8 => Ok(c),
            _ => Err(perr(line, format!("bad chain code {t:?}"))),
        })
        .collect::<Result<Vec<u8>>>()?;
    Ok((x, y, chain))
}

/// Parses one OVERLAY file. Every declared abnormality must be present
/// and carry at least one `LESION_TYPE` line and a `PATHOLOGY` line.
pub fn parse_overlay(text: &str) -> Result<OverlayFile> {
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
        .collect();
    let mut declared: Option<usize> = None;
    let mut abnormalities: Vec<Abnormality> = Vec::new();
    let mut i = 0;
    while i < lines.len() {
        let (ln, l) = lines[i];
        let toks: Vec<&str> = l.split_whitespace().collect();
        let key = toks[0];
        match key {
            "TOTAL_ABNORMALITIES" => {
                let n = toks.get(1).and_then(|t| t.parse().ok()).ok_or_else(|| perr(ln, "bad abnormality count"))?;
                declared = Some(n);
            }
            "ABNORMALITY" => {
                let index = toks.get(1).and_then(|t| t.parse().ok()).ok_or_else(|| perr(ln, "bad abnormality index"))?;
                abnormalities.push(Abnormality { index, entries: Vec::new(), line: ln });
            }
            _ => {
                let current = abnormalities
                    .last_mut()
                    .ok_or_else(|| perr(ln, format!("{key} before any ABNORMALITY")))?;
                let entry = match key {
                    "LESION_TYPE" => Entry::Lesion(parse_lesion(&toks[1..], ln)?),
                    "PATHOLOGY" => {
                        let p = toks.get(1).ok_or_else(|| perr(ln, "PATHOLOGY without a value"))?;
                        Entry::Pathology(p.to_string())
                    }
                    "BOUNDARY" | "CORE" => {
                        let kind = if key == "BOUNDARY" { OutlineKind::Boundary } else { OutlineKind::Core };
                        i += 1;
                        let (cl, chain_line) = *lines.get(i).ok_or_else(|| perr(ln, "outline keyword without a chain"))?;
                        let (x, y, chain) = parse_chain(chain_line, cl)?;
                        Entry::Outline(Outline { kind, start: (x, y), chain })
                    }
                    _ => Entry::Other { key: key.to_string(), value: toks[1..].join(" ") },
                };
                current.entries.push(entry);
            }
        }
        i += 1;
    }
    let declared = declared.ok_or_else(|| perr(1, "missing TOTAL_ABNORMALITIES line"))?;
    if abnormalities.len() != declared {
        return Err(perr(
            lines.last().map_or(1, |l| l.0),
            format!("declared {declared} abnormalities, found {}", abnormalities.len()),
        ));
    }
    for a in &abnormalities {
        if a.lesions().next().is_none() {
            return Err(perr(a.line, format!("abnormality {} has no LESION_TYPE line", a.index)));
        }
        if a.pathology().is_none() {
            return Err(perr(a.line, format!("abnormality {} has no PATHOLOGY line", a.index)));
        }
    }
    Ok(OverlayFile { abnormalities })
}

/// Canonical text form: single spaces, one key per line, chains on their
/// own line ending in ` #`.
pub fn serialize_overlay(file: &OverlayFile) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "TOTAL_ABNORMALITIES {}", file.abnormalities.len());
    for a in &file.abnormalities {
        let _ = writeln!(s, "ABNORMALITY {}", a.index);
        for e in &a.entries {
            match e {
                Entry::Lesion(l) => {
                    s.push_str("LESION_TYPE ");
                    s.push_str(&l.kind);
                    for (k, v) in &l.fields {
                        let _ = write!(s, " {k} {v}");
                    }
                    s.push('\n');
                }
                Entry::Pathology(p) => {
                    let _ = writeln!(s, "PATHOLOGY {p}");
                }
                Entry::Outline(o) => {
                    let _ = writeln!(s, "{}", o.kind.keyword());
                    let _ = write!(s, "{} {}", o.start.0, o.start.1);
                    for c in &o.chain {
                        let _ = write!(s, " {c}");
                    }
                    s.push_str(" #\n");
                }
                Entry::Other { key, value } => {
                    if value.is_empty() {
                        let _ = writeln!(s, "{key}");
                    } else {
                        let _ = writeln!(s, "{key} {value}");
                    }
                }
            }
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    const ONE: &str = "TOTAL_ABNORMALITIES 1\nABNORMALITY 1\nLESION_TYPE MASS SHAPE OVAL MARGINS CIRCUMSCRIBED\nASSESSMENT 3\nSUBTLETY 4\nPATHOLOGY BENIGN\nTOTAL_OUTLINES 1\nBOUNDARY\n10 20 2 2 4 4 6 6 0 0 #\n";

    #[test]
    fn parses_single_mass() {
        let f = parse_overlay(ONE).unwrap();
        assert_eq!(f.abnormalities.len(), 1);
        let a = &f.abnormalities[0];
        let m = a.mass().unwrap();
        assert_eq!(m.get("SHAPE"), Some("OVAL"));
        assert_eq!(m.get("MARGINS"), Some("CIRCUMSCRIBED"));
        assert_eq!(a.pathology(), Some("BENIGN"));
        let b = a.boundary().unwrap().bounding_box();
        assert_eq!(b, BoundingBox { x0: 10, y0: 20, x1: 12, y1: 22 });
        assert_eq!(serialize_overlay(&f), ONE);
    }

    #[test]
    fn zero_abnormalities_is_empty() {
        assert!(parse_overlay("TOTAL_ABNORMALITIES 0\n").unwrap().abnormalities.is_empty());
    }

    #[test]
    fn missing_lesion_type_reports_line() {
        let text = "TOTAL_ABNORMALITIES 1\nABNORMALITY 1\nPATHOLOGY BENIGN\n";
        match parse_overlay(text) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 2);
                assert!(message.contains("LESION_TYPE"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_tokens_list_vocabulary() {
        let text = "TOTAL_ABNORMALITIES 1\nABNORMALITY 1\nLESION_TYPE MASS SHAPE STAR MARGINS CIRCUMSCRIBED\nPATHOLOGY BENIGN\n";
        let e = parse_overlay(text).unwrap_err();
        assert!(alloc::format!("{e}").contains("ROUND"));
    }

    #[test]
    fn count_mismatch_is_an_error() {
        let text = "TOTAL_ABNORMALITIES 2\nABNORMALITY 1\nLESION_TYPE MASS SHAPE OVAL MARGINS OBSCURED\nPATHOLOGY MALIGNANT\n";
        assert!(parse_overlay(text).is_err());
    }

    #[test]
    fn bad_chain_rejected() {
        let text = "TOTAL_ABNORMALITIES 1\nABNORMALITY 1\nLESION_TYPE MASS SHAPE OVAL MARGINS OBSCURED\nPATHOLOGY MALIGNANT\nBOUNDARY\n1 2 9 #\n";
        assert!(parse_overlay(text).is_err());
        let text = text.replace("9 #", "3");
        assert!(parse_overlay(&text).is_err());
    }
}
