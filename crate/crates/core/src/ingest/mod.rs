//! DDSM-style annotation handling: OVERLAY parsing, attribute encoding,
//! case lists and patient-wise splits.

pub mod attributes;
pub mod overlay;
pub mod split;
pub mod test_list;

pub use attributes::{encode_attribute_vector, mass_annotations, LesionAnnotation, Margin, Pathology, Shape};
pub use overlay::{parse_overlay, serialize_overlay, BoundingBox, OverlayFile};
pub use split::{patient_split, patient_split_pinned, DomainRegistry, Split, SplitRatios};
pub use test_list::{ddsm_test_cases, load_test_list, CaseId, DDSM_TEST_LIST};
