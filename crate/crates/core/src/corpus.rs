//! Report records and the validated in-memory corpus.
//!
//! Annotations (entities, relations), observation labels and feature vectors
//! are produced upstream and carried here as plain data. A [`Corpus`] is
//! immutable once built and every record in it satisfies the invariants
//! checked by [`Corpus::new`].

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};

/// Number of observation labels per report.
pub const NUM_OBSERVATIONS: usize = 5;

/// Observation names, in label-vector order.
pub const OBSERVATIONS: [&str; NUM_OBSERVATIONS] = [
    "Cardiomegaly",
    "Edema",
    "Consolidation",
    "Atelectasis",
    "Pleural Effusion",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "validation" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(Error::UnknownSplit(other.to_string())),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Binary indicators for the five observations in [`OBSERVATIONS`] order.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct LabelVector([bool; NUM_OBSERVATIONS]);

impl LabelVector {
    pub const fn new(values: [bool; NUM_OBSERVATIONS]) -> Self {
        LabelVector(values)
    }

    /// Builds a label vector from integer indicators, rejecting wrong arity
    /// and values other than 0/1.
    pub fn from_ints(values: &[i64]) -> Result<Self> {
        if values.len() != NUM_OBSERVATIONS {
            return Err(Error::UnknownLabelArity(values.len()));
        }
        let mut out = [false; NUM_OBSERVATIONS];
        for (slot, &v) in out.iter_mut().zip(values) {
            *slot = match v {
                0 => false,
                1 => true,
                other => return Err(Error::InvalidLabelValue(other)),
            };
        }
        Ok(LabelVector(out))
    }

    pub fn values(&self) -> &[bool; NUM_OBSERVATIONS] {
        &self.0
    }

    pub fn to_ints(&self) -> [u8; NUM_OBSERVATIONS] {
        self.0.map(u8::from)
    }

    pub fn positives(&self) -> usize {
        self.0.iter().filter(|&&v| v).count()
    }
}

/// Entity classes: anatomy or observation, with presence modality.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EntityLabel {
    AnatDp,
    ObsDp,
    ObsDa,
    ObsU,
}

impl EntityLabel {
    pub const ALL: [EntityLabel; 4] = [
        EntityLabel::AnatDp,
        EntityLabel::ObsDp,
        EntityLabel::ObsDa,
        EntityLabel::ObsU,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EntityLabel::AnatDp => "ANAT-DP",
            EntityLabel::ObsDp => "OBS-DP",
            EntityLabel::ObsDa => "OBS-DA",
            EntityLabel::ObsU => "OBS-U",
        }
    }
}

impl FromStr for EntityLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EntityLabel::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| Error::UnknownEntityLabel(s.to_string()))
    }
}

impl fmt::Display for EntityLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RelationType {
    Modify,
    LocatedAt,
    SuggestiveOf,
}

impl RelationType {
    pub const ALL: [RelationType; 3] = [
        RelationType::Modify,
        RelationType::LocatedAt,
        RelationType::SuggestiveOf,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RelationType::Modify => "modify",
            RelationType::LocatedAt => "located_at",
            RelationType::SuggestiveOf => "suggestive_of",
        }
    }
}

impl FromStr for RelationType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RelationType::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| Error::UnknownRelationType(s.to_string()))
    }
}

impl fmt::Display for RelationType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Entity {
    pub text: String,
    pub label: EntityLabel,
}

impl Entity {
    pub fn new(text: impl Into<String>, label: EntityLabel) -> Self {
        Entity {
            text: text.into(),
            label,
        }
    }
}

/// Directed relation between two entities of the same graph, by position.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Relation {
    pub source: usize,
    pub kind: RelationType,
    pub target: usize,
}

/// Annotated entities and relations of one report.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FactGraph {
    entities: Vec<Entity>,
    relations: Vec<Relation>,
}

impl FactGraph {
    /// Validates that every entity normalizes to non-empty text and every
    /// relation endpoint is in range.
    pub fn new(entities: Vec<Entity>, relations: Vec<Relation>) -> Result<Self> {
        for (index, e) in entities.iter().enumerate() {
            if normalize_entity(&e.text).is_empty() {
                return Err(Error::EmptyEntity { index });
            }
        }
        for (index, r) in relations.iter().enumerate() {
            if r.source >= entities.len() || r.target >= entities.len() {
                return Err(Error::RelationOutOfRange {
                    index,
                    entities: entities.len(),
                });
            }
        }
        Ok(FactGraph { entities, relations })
    }

    pub fn empty() -> Self {
        FactGraph::default()
    }

    pub fn entities(&self) -> &[Entity] {
        &self.entities
    }

    pub fn relations(&self) -> &[Relation] {
        &self.relations
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }
}

/// Canonical form of an entity token: lowercased, internal whitespace
/// collapsed to single spaces, surrounding punctuation and whitespace removed.
pub fn normalize_entity(token_text: &str) -> String {
    let lowered = token_text.to_lowercase();
    let trimmed = lowered.trim_matches(|c: char| c.is_whitespace() || c.is_ascii_punctuation());
    let mut out = String::with_capacity(trimmed.len());
    for word in trimmed.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

/// One patient study.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportRecord {
    pub report_id: String,
    pub patient_id: String,
    pub split: Split,
    pub report_text: String,
    pub labels: LabelVector,
    pub graph: FactGraph,
    /// Opaque image reference handed to downstream consumers.
    pub image_ref: Option<String>,
    pub image_features: Vec<f64>,
    pub text_features: Option<Vec<f64>>,
}

impl ReportRecord {
    pub fn image_ref(&self) -> &str {
        self.image_ref.as_deref().unwrap_or(&self.report_id)
    }
}

/// Corpus-wide feature dimensions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FeatureDims {
    pub image: usize,
    pub text: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    dims: FeatureDims,
    records: Vec<ReportRecord>,
    by_id: BTreeMap<String, usize>,
}

impl Corpus {
    /// Checks id uniqueness and feature dimensions.
    pub fn new(dims: FeatureDims, records: Vec<ReportRecord>) -> Result<Self> {
        let mut by_id = BTreeMap::new();
        for (i, r) in records.iter().enumerate() {
            check_dims(dims, r)?;
            if by_id.insert(r.report_id.clone(), i).is_some() {
                return Err(Error::DuplicateId(r.report_id.clone()));
            }
        }
        Ok(Corpus { dims, records, by_id })
    }

    pub fn dims(&self) -> FeatureDims {
        self.dims
    }

    pub fn records(&self) -> &[ReportRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn position(&self, report_id: &str) -> Option<usize> {
        self.by_id.get(report_id).copied()
    }

    pub fn get(&self, report_id: &str) -> Option<&ReportRecord> {
        self.position(report_id).map(|i| &self.records[i])
    }

    pub fn require(&self, report_id: &str) -> Result<&ReportRecord> {
        self.get(report_id)
            .ok_or_else(|| Error::UnknownId(report_id.to_string()))
    }

    /// Positions of the records in `split`, in corpus order.
    pub fn split_positions(&self, split: Split) -> Vec<usize> {
        self.records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.split == split)
            .map(|(i, _)| i)
            .collect()
    }
}

pub(crate) fn check_dims(dims: FeatureDims, r: &ReportRecord) -> Result<()> {
    if r.image_features.len() != dims.image {
        return Err(Error::DimensionMismatch {
            id: r.report_id.clone(),
            field: "image_features",
            expected: dims.image,
            found: r.image_features.len(),
        });
    }
    if let Some(t) = &r.text_features {
        if t.len() != dims.text {
            return Err(Error::DimensionMismatch {
                id: r.report_id.clone(),
                field: "text_features",
                expected: dims.text,
                found: t.len(),
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn record(id: &str, img: usize) -> ReportRecord {
        ReportRecord {
            report_id: id.to_string(),
            patient_id: "p1".to_string(),
            split: Split::Train,
            report_text: "No acute findings.".to_string(),
            labels: LabelVector::default(),
            graph: FactGraph::empty(),
            image_ref: None,
            image_features: vec![0.5; img],
            text_features: Some(vec![1.0; 2]),
        }
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_entity("  Pleural  "), "pleural");
        assert_eq!(normalize_entity("effusion."), "effusion");
        assert_eq!(normalize_entity("CABG"), "cabg");
        assert_eq!(normalize_entity(" (Left   Lower\tLobe), "), "left lower lobe");
        assert_eq!(normalize_entity(" .,; "), "");
    }

    #[test]
    fn label_arity_and_values() {
        assert_eq!(LabelVector::from_ints(&[1, 0, 1, 0]), Err(Error::UnknownLabelArity(4)));
        assert_eq!(
            LabelVector::from_ints(&[1, 0, 2, 0, 0]),
            Err(Error::InvalidLabelValue(2))
        );
        let l = LabelVector::from_ints(&[1, 0, 1, 0, 0]).unwrap();
        assert_eq!(l.to_ints(), [1, 0, 1, 0, 0]);
        assert_eq!(l.positives(), 2);
    }

    #[test]
    fn graph_validation() {
        let ents = vec![
            Entity::new("pleural", EntityLabel::AnatDp),
            Entity::new("effusion", EntityLabel::ObsDp),
        ];
        let ok = FactGraph::new(
            ents.clone(),
            vec![Relation {
                source: 1,
                kind: RelationType::LocatedAt,
                target: 0,
            }],
        );
        assert!(ok.is_ok());
        let bad = FactGraph::new(
            ents.clone(),
            vec![Relation {
                source: 1,
                kind: RelationType::LocatedAt,
                target: 2,
            }],
        );
        assert_eq!(bad, Err(Error::RelationOutOfRange { index: 0, entities: 2 }));
        let empty = FactGraph::new(vec![Entity::new(" . ", EntityLabel::ObsU)], vec![]);
        assert_eq!(empty, Err(Error::EmptyEntity { index: 0 }));
    }

    #[test]
    fn corpus_rejects_duplicates_and_bad_dims() {
        let dims = FeatureDims { image: 3, text: 2 };
        let c = Corpus::new(dims, vec![record("s1", 3), record("s2", 3), record("s3", 3)]).unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c.position("s2"), Some(1));
        assert_eq!(
            Corpus::new(dims, vec![record("s1", 3), record("s1", 3)]),
            Err(Error::DuplicateId("s1".into()))
        );
        assert!(matches!(
            Corpus::new(dims, vec![record("s1", 4)]),
            Err(Error::DimensionMismatch {
                field: "image_features",
                ..
            })
        ));
    }

    #[test]
    fn enum_names_round_trip() {
        for l in EntityLabel::ALL {
            assert_eq!(l.as_str().parse::<EntityLabel>().unwrap(), l);
        }
        for r in RelationType::ALL {
            assert_eq!(r.as_str().parse::<RelationType>().unwrap(), r);
        }
        for s in Split::ALL {
            assert_eq!(s.as_str().parse::<Split>().unwrap(), s);
        }
        assert!("OBS".parse::<EntityLabel>().is_err());
    }
}
