//! Case-level DDSM test lists such as `benign_04_case0304`.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The published DDSM test division, whitespace separated.
pub const DDSM_TEST_LIST: &str = include_str!("ddsm_test_list.txt");

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Volume {
    Benign,
    Cancer,
}

/// A DDSM case: volume kind, volume number and case number.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CaseId {
    pub volume: Volume,
    pub volume_number: u16,
    pub case: u16,
}

impl fmt::Display for CaseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = match self.volume {
            Volume::Benign => "benign",
            Volume::Cancer => "cancer",
        };
        write!(f, "{v}_{:02}_case{:04}", self.volume_number, self.case)
    }
}

impl FromStr for CaseId {
    type Err = String;

    fn from_str(s: &str) -> core::result::Result<Self, String> {
        let bad = || format!("{s:?} is not of the form {{benign|cancer}}_NN_caseNNNN");
        let mut parts = s.split('_');
        let volume = match parts.next() {
            Some("benign") => Volume::Benign,
            Some("cancer") => Volume::Cancer,
            _ => return Err(bad()),
        };
        let num = parts.next().filter(|n| n.len() == 2).ok_or_else(bad)?;
        let case = parts.next().and_then(|c| c.strip_prefix("case")).filter(|c| c.len() == 4).ok_or_else(bad)?;
        if parts.next().is_some() || !num.bytes().chain(case.bytes()).all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        Ok(CaseId { volume, volume_number: num.parse().map_err(|_| bad())?, case: case.parse().map_err(|_| bad())? })
    }
}

/// Parses a whitespace-separated case list. Lines starting with `#` are
/// comments. Duplicates and malformed ids are errors.
pub fn load_test_list(text: &str) -> Result<BTreeSet<CaseId>> {
    let mut out = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.starts_with('#') {
            continue;
        }
        for tok in line.split_whitespace() {
            let id: CaseId = tok.parse().map_err(|message| Error::Parse { line: i + 1, message })?;
            if !out.insert(id) {
                return Err(Error::Parse { line: i + 1, message: format!("duplicate case {tok}") });
            }
        }
    }
    Ok(out)
}

pub fn ddsm_test_cases() -> BTreeSet<CaseId> {
    load_test_list(DDSM_TEST_LIST).expect("embedded list is well formed")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embedded_list_parses() {
        let ids = ddsm_test_cases();
        assert_eq!(ids.len(), 75);
        let text: BTreeSet<String> = ids.iter().map(|c| format!("{c}")).collect();
        assert!(text.contains("benign_04_case0304"));
    }

    #[test]
    fn duplicates_and_junk_rejected() {
        assert!(load_test_list("cancer_01_case3084 cancer_01_case3084").is_err());
        assert!(load_test_list("cancer_1_case3084").is_err());
        assert!(load_test_list("normal_01_case0001").is_err());
        assert!(load_test_list("").unwrap().is_empty());
    }
}
