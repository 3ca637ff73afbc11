//! Patient-wise splits and the multi-domain dataset registry.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{validation, Result};
use crate::rng::{stream, tags};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: u32,
    pub val: u32,
    pub test: u32,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios { train: 8, val: 1, test: 1 }
    }
}

impl SplitRatios {
    fn total(&self) -> Result<u64> {
        let t = u64::from(self.train) + u64::from(self.val) + u64::from(self.test);
        if t == 0 {
            return Err(validation!("split ratios sum to zero"));
        }
        Ok(t)
    }
}

/// `round(n * part / total)` in integers, halves rounding up.
fn share(n: usize, part: u32, total: u64) -> usize {
    ((2 * n as u64 * u64::from(part) + total) / (2 * total)) as usize
}

fn shuffled<P: Ord + Clone>(patients: &[P], seed: u64) -> Result<Vec<P>> {
    let unique: BTreeSet<&P> = patients.iter().collect();
    if unique.len() != patients.len() {
        return Err(validation!("patient list contains duplicates"));
    }
    // Sorting first makes the result independent of input order.
    let mut v: Vec<P> = unique.into_iter().cloned().collect();
    v.shuffle(&mut stream(seed, tags::SPLIT));
    Ok(v)
}

/// Seeded patient-wise partition. Validation and test receive the rounded
/// shares of the patient count; training takes the rest.
pub fn patient_split<P: Ord + Clone>(patients: &[P], ratios: SplitRatios, seed: u64) -> Result<BTreeMap<P, Split>> {
    let total = ratios.total()?;
    let order = shuffled(patients, seed)?;
    let n = order.len();
    let n_test = share(n, ratios.test, total);
    let n_val = share(n, ratios.val, total).min(n - n_test);
    Ok(order
        .into_iter()
        .enumerate()
        .map(|(i, p)| {
            let s = if i < n_test {
                Split::Test
            } else if i < n_test + n_val {
                Split::Val
            } else {
                Split::Train
            };
            (p, s)
        })
        .collect())
}

/// Pinned patients go to test; the remainder is split between train and
/// validation in the train:val ratio.
pub fn patient_split_pinned<P: Ord + Clone>(
    patients: &[P],
    pinned: &BTreeSet<P>,
    ratios: SplitRatios,
    seed: u64,
) -> Result<BTreeMap<P, Split>> {
    let rest: Vec<P> = patients.iter().filter(|p| !pinned.contains(p)).cloned().collect();
    let mut out = patient_split(&rest, SplitRatios { test: 0, ..ratios }, seed)?;
    for p in patients.iter().filter(|p| pinned.contains(p)) {
        if out.insert(p.clone(), Split::Test).is_some() {
            return Err(validation!("patient list contains duplicates"));
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub name: String,
    pub domain: usize,
    /// Patient id to sample keys.
    pub patients: BTreeMap<String, Vec<String>>,
    pub splits: BTreeMap<String, Split>,
}

/// Named datasets with contiguous domain indices `0..m` in insertion order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DomainRegistry {
    datasets: Vec<DatasetEntry>,
}

impl DomainRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a dataset and returns its domain index.
    pub fn add_dataset(&mut self, name: &str) -> Result<usize> {
        if self.datasets.iter().any(|d| d.name == name) {
            return Err(validation!("dataset {name:?} already registered"));
        }
        let domain = self.datasets.len();
        self.datasets.push(DatasetEntry {
            name: name.into(),
            domain,
            patients: BTreeMap::new(),
            splits: BTreeMap::new(),
        });
        Ok(domain)
    }

    pub fn add_sample(&mut self, dataset: &str, patient: &str, key: &str) -> Result<()> {
        let d = self.dataset_mut(dataset)?;
        d.patients.entry(patient.into()).or_default().push(key.into());
        Ok(())
    }

    pub fn datasets(&self) -> &[DatasetEntry] {
        &self.datasets
    }

    pub fn domains(&self) -> usize {
        self.datasets.len()
    }

    pub fn dataset(&self, name: &str) -> Result<&DatasetEntry> {
        self.datasets.iter().find(|d| d.name == name).ok_or_else(|| validation!("unknown dataset {name:?}"))
    }

    fn dataset_mut(&mut self, name: &str) -> Result<&mut DatasetEntry> {
        self.datasets.iter_mut().find(|d| d.name == name).ok_or_else(|| validation!("unknown dataset {name:?}"))
    }

    /// Splits every dataset patient-wise. `pinned` forces listed patients of
    /// the named dataset into test.
    pub fn assign_splits(
        &mut self,
        ratios: SplitRatios,
        seed: u64,
        pinned: Option<(&str, &BTreeSet<String>)>,
    ) -> Result<()> {
        for d in &mut self.datasets {
            let ids: Vec<String> = d.patients.keys().cloned().collect();
            d.splits = match pinned {
                Some((name, set)) if name == d.name => patient_split_pinned(&ids, set, ratios, seed)?,
                _ => patient_split(&ids, ratios, seed.wrapping_add(d.domain as u64))?,
            };
        }
        Ok(())
    }

    pub fn split_of(&self, dataset: &str, patient: &str) -> Result<Split> {
        self.dataset(dataset)?
            .splits
            .get(patient)
            .copied()
            .ok_or_else(|| validation!("patient {patient:?} has no split"))
    }

    /// Sample keys of one dataset in one split, patient order.
    pub fn samples(&self, dataset: &str, split: Split) -> Result<Vec<&str>> {
        let d = self.dataset(dataset)?;
        Ok(d.patients
            .iter()
            .filter(|(p, _)| d.splits.get(*p) == Some(&split))
            .flat_map(|(_, keys)| keys.iter().map(String::as_str))
            .collect())
    }
}
