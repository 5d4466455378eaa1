use std::collections::HashSet;
use std::path::Path;

use factmine_core::{
    Corpus, Entity, EntityLabel, FactGraph, FeatureDims, LabelVector, Relation, RelationType, ReportRecord, Split,
};
use serde::{Deserialize, Serialize};

use super::{parse_line, read_lines, split_header, LineWriter};
use crate::error::{Error, Result};

pub const CORPUS_SCHEMA: &str = "factmine-corpus/1";

#[derive(Serialize, Deserialize)]
struct Header {
    schema_version: String,
    image_dim: usize,
    text_dim: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Line {
    report_id: String,
    patient_id: String,
    split: String,
    report_text: String,
    labels: Vec<i64>,
    entities: Vec<(String, String)>,
    relations: Vec<(usize, String, usize)>,
    image_features: Vec<f64>,
    text_features: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    image_ref: Option<String>,
}

fn to_record(l: Line) -> factmine_core::Result<ReportRecord> {
    let entities = l
        .entities
        .into_iter()
        .map(|(text, label)| Ok(Entity::new(text, label.parse::<EntityLabel>()?)))
        .collect::<factmine_core::Result<Vec<_>>>()?;
    let relations = l
        .relations
        .into_iter()
        .map(|(source, kind, target)| {
            Ok(Relation {
                source,
                kind: kind.parse::<RelationType>()?,
                target,
            })
        })
        .collect::<factmine_core::Result<Vec<_>>>()?;
    Ok(ReportRecord {
        report_id: l.report_id,
        patient_id: l.patient_id,
        split: l.split.parse::<Split>()?,
        report_text: l.report_text,
        labels: LabelVector::from_ints(&l.labels)?,
        graph: FactGraph::new(entities, relations)?,
        image_ref: l.image_ref,
        image_features: l.image_features,
        text_features: l.text_features,
    })
}

/// Reads and validates a corpus file. Errors carry the offending line.
pub fn load_corpus(path: &Path, schema_version: &str) -> Result<Corpus> {
    let lines = read_lines(path)?;
    let header: Header = split_header(path, &lines, schema_version)?;
    let dims = FeatureDims {
        image: header.image_dim,
        text: header.text_dim,
    };
    let mut seen = HashSet::new();
    let mut records = Vec::with_capacity(lines.len().saturating_sub(1));
    for (line, text) in &lines[1..] {
        let raw: Line = parse_line(path, *line, text)?;
        let at = |e| Error::at_line(path, *line, e);
        let record = to_record(raw).map_err(at)?;
        if !seen.insert(record.report_id.clone()) {
            return Err(at(factmine_core::Error::DuplicateId(record.report_id)));
        }
        let check = |field, found: usize, expected| {
            if found == expected {
                Ok(())
            } else {
                Err(at(factmine_core::Error::DimensionMismatch {
                    id: record.report_id.clone(),
                    field,
                    expected,
                    found,
                }))
            }
        };
        check("image_features", record.image_features.len(), dims.image)?;
        if let Some(t) = &record.text_features {
            check("text_features", t.len(), dims.text)?;
        }
        records.push(record);
    }
    Ok(Corpus::new(dims, records)?)
}

pub fn write_corpus(path: &Path, corpus: &Corpus) -> Result<()> {
    let mut w = LineWriter::create(path)?;
    let dims = corpus.dims();
    w.write(&Header {
        schema_version: CORPUS_SCHEMA.to_string(),
        image_dim: dims.image,
        text_dim: dims.text,
    })?;
    for r in corpus.records() {
        let g = &r.graph;
        w.write(&Line {
            report_id: r.report_id.clone(),
            patient_id: r.patient_id.clone(),
            split: r.split.as_str().to_string(),
            report_text: r.report_text.clone(),
            labels: r.labels.to_ints().iter().map(|&v| v as i64).collect(),
            entities: g
                .entities()
                .iter()
                .map(|e| (e.text.clone(), e.label.as_str().to_string()))
                .collect(),
            relations: g
                .relations()
                .iter()
                .map(|x| (x.source, x.kind.as_str().to_string(), x.target))
                .collect(),
            image_features: r.image_features.clone(),
            text_features: r.text_features.clone(),
            image_ref: r.image_ref.clone(),
        })?;
    }
    w.finish()
}
