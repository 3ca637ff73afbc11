//! Mass annotations normalized to the attribute-graph vocabulary.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{validation, Result};
use crate::gcn::{ATTRIBUTE_NODES, BENIGN_NODE, MALIGNANT_NODE};
use crate::ingest::overlay::{Abnormality, BoundingBox, OverlayFile};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Shape {
    /// DDSM writes `ROUND`.
    Circle,
    Oval,
    Irregular,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Margin {
    Circumscribed,
    Obscured,
    IllDefined,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pathology {
    Benign,
    Malignant,
}

impl Pathology {
    pub fn label(self) -> usize {
        match self {
            Pathology::Benign => 0,
            Pathology::Malignant => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LesionAnnotation {
    pub case_id: String,
    pub abnormality: u32,
    pub shape: Option<Shape>,
    pub margin: Option<Margin>,
    pub lobulated: bool,
    pub spiculated: bool,
    pub pathology: Pathology,
    pub roi: Option<BoundingBox>,
}

pub const SHAPE_VOCABULARY: &str = "ROUND, OVAL, IRREGULAR, LOBULATED";
pub const MARGIN_VOCABULARY: &str = "CIRCUMSCRIBED, OBSCURED, ILL_DEFINED, MICROLOBULATED, SPICULATED";

fn parse_pathology(raw: &str) -> Result<Pathology> {
    match raw {
        "MALIGNANT" => Ok(Pathology::Malignant),
        "BENIGN" | "BENIGN_WITHOUT_CALLBACK" => Ok(Pathology::Benign),
        other => Err(validation!("pathology {other:?} has no benign/malignant label")),
    }
}

/// Maps one mass abnormality to the attribute vocabulary. Within the shape
/// and margin groups the first listed token wins; `LOBULATED` and
/// `MICROLOBULATED` set the lobulation flag, `SPICULATED` the spiculation
/// flag.
pub fn annotate(case_id: &str, a: &Abnormality) -> Result<LesionAnnotation> {
    let mass = a.mass().ok_or_else(|| validation!("abnormality {} is not a mass", a.index))?;
    let shape_raw = mass.get("SHAPE").unwrap_or("N/A");
    let margin_raw = mass.get("MARGINS").unwrap_or("N/A");
    let mut shape = None;
    let mut margin = None;
    let mut lobulated = false;
    let mut spiculated = false;
    if shape_raw != "N/A" {
        for t in shape_raw.split('-') {
            let s = match t {
                "ROUND" => Some(Shape::Circle),
                "OVAL" => Some(Shape::Oval),
                "IRREGULAR" => Some(Shape::Irregular),
                "LOBULATED" => {
                    lobulated = true;
                    None
                }
                other => {
                    return Err(validation!(
                        "shape token {other:?} has no attribute slot; expected one of {SHAPE_VOCABULARY}"
                    ))
                }
            };
            shape = shape.or(s);
        }
    }
    if margin_raw != "N/A" {
        for t in margin_raw.split('-') {
            let m = match t {
                "CIRCUMSCRIBED" => Some(Margin::Circumscribed),
                "OBSCURED" => Some(Margin::Obscured),
                "ILL_DEFINED" => Some(Margin::IllDefined),
                "MICROLOBULATED" => {
                    lobulated = true;
                    None
                }
                "SPICULATED" => {
                    spiculated = true;
                    None
                }
                other => {
                    return Err(validation!(
                        "margin token {other:?} has no attribute slot; expected one of {MARGIN_VOCABULARY}"
                    ))
                }
            };
            margin = margin.or(m);
        }
    }
    let pathology = parse_pathology(a.pathology().unwrap_or(""))?;
    Ok(LesionAnnotation {
        case_id: case_id.into(),
        abnormality: a.index,
        shape,
        margin,
        lobulated,
        spiculated,
        pathology,
        roi: a.boundary().map(|o| o.bounding_box()),
    })
}

/// Every mass abnormality of a file. Non-mass abnormalities are skipped.
pub fn mass_annotations(case_id: &str, file: &OverlayFile) -> Result<Vec<LesionAnnotation>> {
    file.abnormalities
        .iter()
        .filter(|a| a.mass().is_some())
        .map(|a| annotate(case_id, a))
        .collect()
}

/// Twelve-slot target vector in graph node order.
pub fn encode_attribute_vector(ann: &LesionAnnotation) -> [f64; 12] {
    let mut g = [0.0; 12];
    if let Some(s) = ann.shape {
        g[match s {
            Shape::Circle => 0,
            Shape::Oval => 1,
            Shape::Irregular => 2,
        }] = 1.0;
    }
    if let Some(m) = ann.margin {
        g[match m {
            Margin::Circumscribed => 3,
            Margin::Obscured => 4,
            Margin::IllDefined => 5,
        }] = 1.0;
    }
    g[if ann.lobulated { 6 } else { 7 }] = 1.0;
    g[if ann.spiculated { 8 } else { 9 }] = 1.0;
    g[match ann.pathology {
        Pathology::Benign => BENIGN_NODE,
        Pathology::Malignant => MALIGNANT_NODE,
    }] = 1.0;
    g
}

/// Checks the structural constraints of a target vector.
pub fn validate_attribute_vector(g: &[f64]) -> Result<()> {
    if g.len() != ATTRIBUTE_NODES.len() {
        return Err(validation!("attribute vector has {} slots", g.len()));
    }
    if g.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(validation!("attribute targets must be 0 or 1"));
    }
    let count = |r: core::ops::Range<usize>| g[r].iter().filter(|&&v| v == 1.0).count();
    let checks = [
        (count(0..3) <= 1, "at most one shape"),
        (count(3..6) <= 1, "at most one margin"),
        (count(6..8) == 1, "exactly one lobulation slot"),
        (count(8..10) == 1, "exactly one spiculation slot"),
        (count(10..12) == 1, "exactly one of benign/malignant"),
    ];
    for (ok, what) in checks {
        if !ok {
            return Err(validation!("attribute vector violates: {what}"));
        }
    }
    Ok(())
}

pub fn describe(g: &[f64]) -> String {
    let on: Vec<&str> = ATTRIBUTE_NODES.iter().zip(g).filter(|(_, &v)| v == 1.0).map(|(n, _)| *n).collect();
    format!("[{}]", on.join(", "))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::overlay::parse_overlay;

    fn file(shape: &str, margins: &str, pathology: &str) -> OverlayFile {
        parse_overlay(&format!(
            "TOTAL_ABNORMALITIES 1\nABNORMALITY 1\nLESION_TYPE MASS SHAPE {shape} MARGINS {margins}\nPATHOLOGY {pathology}\n"
        ))
        .unwrap()
    }

    #[test]
    fn oval_circumscribed_benign() {
        let a = mass_annotations("c", &file("OVAL", "CIRCUMSCRIBED", "BENIGN")).unwrap();
        let g = encode_attribute_vector(&a[0]);
        assert_eq!(g, [0., 1., 0., 1., 0., 0., 0., 1., 0., 1., 1., 0.]);
        assert_eq!(g.iter().sum::<f64>(), 5.0);
        validate_attribute_vector(&g).unwrap();
    }

    #[test]
    fn round_maps_to_circle_and_compounds_split() {
        let a = &mass_annotations("c", &file("ROUND-LOBULATED", "ILL_DEFINED-SPICULATED", "MALIGNANT")).unwrap()[0];
        assert_eq!(a.shape, Some(Shape::Circle));
        assert_eq!(a.margin, Some(Margin::IllDefined));
        assert!(a.lobulated && a.spiculated);
        let g = encode_attribute_vector(a);
        assert_eq!(g[MALIGNANT_NODE], 1.0);
        assert_eq!(g[BENIGN_NODE], 0.0);
    }

    #[test]
    fn unmapped_tokens_error() {
        assert!(mass_annotations("c", &file("TUBULAR", "OBSCURED", "BENIGN")).is_err());
        assert!(mass_annotations("c", &file("OVAL", "OBSCURED", "UNPROVEN")).is_err());
    }
}
