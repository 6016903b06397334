//! Schema metadata, CSV ingestion and dictionary encoding.
//!
//! A schema is a JSON document listing relations, their attributes and their
//! foreign keys. Every modeled attribute is dictionary-encoded: categorical
//! values are sorted lexicographically, numeric values are cut into
//! equi-depth bins. The code equal to the dictionary length is reserved for
//! missing values.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Read;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const DEFAULT_NUMERIC_BINS: usize = 32;
pub const OTHER_LABEL: &str = "__other__";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttributeKind {
    Categorical,
    Numeric,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributeDecl {
    pub name: String,
    pub kind: AttributeKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForeignKeyDecl {
    pub attribute: String,
    pub references: String,
    /// Per-edge override of the number of exported attributes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelationDecl {
    pub name: String,
    #[serde(default)]
    pub path: PathBuf,
    #[serde(default)]
    pub primary_key: Option<String>,
    #[serde(default)]
    pub attributes: Vec<AttributeDecl>,
    #[serde(default)]
    pub foreign_keys: Vec<ForeignKeyDecl>,
}

impl RelationDecl {
    fn is_key(&self, attribute: &str) -> bool {
        self.primary_key.as_deref() == Some(attribute)
            || self.foreign_keys.iter().any(|fk| fk.attribute == attribute)
    }

    /// Attributes that take part in the Bayesian networks: everything except
    /// primary and foreign keys.
    pub fn modeled_attributes(&self) -> impl Iterator<Item = &AttributeDecl> {
        self.attributes.iter().filter(|a| !self.is_key(&a.name))
    }

    pub fn attribute(&self, name: &str) -> Option<&AttributeDecl> {
        self.attributes.iter().find(|a| a.name == name)
    }

    pub fn foreign_key(&self, attribute: &str) -> Option<&ForeignKeyDecl> {
        self.foreign_keys.iter().find(|fk| fk.attribute == attribute)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncodingOptions {
    #[serde(default = "default_bins")]
    pub numeric_bins: usize,
    /// Keep only the N most frequent categorical values, folding the rest
    /// into [`OTHER_LABEL`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category_cap: Option<usize>,
}

fn default_bins() -> usize {
    DEFAULT_NUMERIC_BINS
}

impl Default for EncodingOptions {
    fn default() -> Self {
        EncodingOptions {
            numeric_bins: DEFAULT_NUMERIC_BINS,
            category_cap: None,
        }
    }
}

/// A foreign-key edge: `parent.attribute` references the primary key of `child`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FkEdge {
    pub parent: String,
    pub attribute: String,
    pub child: String,
}

impl FkEdge {
    pub fn key(&self) -> String {
        format!("{}.{}", self.parent, self.attribute)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub relations: Vec<RelationDecl>,
    #[serde(default)]
    pub encoding: EncodingOptions,
}

impl Schema {
    pub fn from_json(text: &str) -> Result<Schema> {
        let schema: Schema =
            serde_json::from_str(text).map_err(|e| Error::SchemaParse(e.to_string()))?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn relation(&self, name: &str) -> Option<&RelationDecl> {
        self.relations.iter().find(|r| r.name == name)
    }

    pub fn fk_edges(&self) -> Vec<FkEdge> {
        self.relations
            .iter()
            .flat_map(|r| {
                r.foreign_keys.iter().map(move |fk| FkEdge {
                    parent: r.name.clone(),
                    attribute: fk.attribute.clone(),
                    child: fk.references.clone(),
                })
            })
            .collect()
    }

    pub fn fk_edge(&self, parent: &str, attribute: &str) -> Option<FkEdge> {
        let fk = self.relation(parent)?.foreign_key(attribute)?;
        Some(FkEdge {
            parent: parent.to_string(),
            attribute: attribute.to_string(),
            child: fk.references.clone(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        let mut names = BTreeSet::new();
        for rel in &self.relations {
            if !names.insert(rel.name.as_str()) {
                return Err(Error::DuplicateRelation(rel.name.clone()));
            }
            let mut attrs = BTreeSet::new();
            for a in &rel.attributes {
                if !attrs.insert(a.name.as_str()) {
                    return Err(Error::DuplicateAttribute {
                        relation: rel.name.clone(),
                        attribute: a.name.clone(),
                    });
                }
            }
            let mut fks = BTreeSet::new();
            for fk in &rel.foreign_keys {
                if !fks.insert(fk.attribute.as_str()) {
                    return Err(Error::DuplicateAttribute {
                        relation: rel.name.clone(),
                        attribute: fk.attribute.clone(),
                    });
                }
            }
        }
        for rel in &self.relations {
            for fk in &rel.foreign_keys {
                let target =
                    self.relation(&fk.references)
                        .ok_or_else(|| Error::UnknownReference {
                            relation: rel.name.clone(),
                            attribute: fk.attribute.clone(),
                            references: fk.references.clone(),
                        })?;
                if target.primary_key.is_none() {
                    return Err(Error::MissingPrimaryKey {
                        relation: target.name.clone(),
                    });
                }
            }
        }
        self.build_order().map(|_| ())
    }

    /// Relations ordered so that every relation comes after all the relations
    /// it references.
    pub fn topological_order(&self) -> Vec<String> {
        self.build_order()
            .expect("schema acyclicity is checked on construction")
    }

    fn build_order(&self) -> Result<Vec<String>> {
        let mut built: BTreeSet<&str> = BTreeSet::new();
        let mut order = Vec::with_capacity(self.relations.len());
        while order.len() < self.relations.len() {
            let mut progressed = false;
            for rel in &self.relations {
                if built.contains(rel.name.as_str()) {
                    continue;
                }
                let ready = rel
                    .foreign_keys
                    .iter()
                    .all(|fk| fk.references != rel.name && built.contains(fk.references.as_str()));
                if ready {
                    built.insert(&rel.name);
                    order.push(rel.name.clone());
                    progressed = true;
                }
            }
            if !progressed {
                let stuck = self
                    .relations
                    .iter()
                    .filter(|r| !built.contains(r.name.as_str()))
                    .map(|r| r.name.clone())
                    .collect();
                return Err(Error::ForeignKeyCycle(stuck));
            }
        }
        Ok(order)
    }

    /// Stable identifier of the schema declarations. Data paths and per-edge
    /// `k` overrides are build settings and do not count.
    pub fn fingerprint(&self) -> String {
        let mut canonical = self.clone();
        for rel in &mut canonical.relations {
            rel.path = PathBuf::new();
            for fk in &mut rel.foreign_keys {
                fk.k = None;
            }
        }
        let text = serde_json::to_string(&canonical).expect("schema serializes");
        format!("{:016x}", fnv1a(text.as_bytes()))
    }
}

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    bytes
        .iter()
        .fold(OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(PRIME))
}

/// Reads a schema file; relative data paths resolve against its directory.
pub fn load_schema(path: impl AsRef<Path>) -> Result<Schema> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut schema = Schema::from_json(&text)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    for rel in &mut schema.relations {
        if rel.path.is_relative() {
            rel.path = base.join(&rel.path);
        }
    }
    Ok(schema)
}

/// Ordered value labels of one attribute.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dictionary {
    pub kind: AttributeKind,
    pub labels: Vec<String>,
    /// Bin boundaries for numeric attributes, `labels.len() + 1` of them.
    /// Bin `i` is `[edges[i], edges[i + 1])`; the last bin is closed.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bin_edges: Vec<f64>,
}

impl Dictionary {
    pub fn categorical(mut labels: Vec<String>) -> Dictionary {
        labels.sort();
        labels.dedup();
        Dictionary {
            kind: AttributeKind::Categorical,
            labels,
            bin_edges: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn null_code(&self) -> u32 {
        self.labels.len() as u32
    }

    /// Number of codes including the null code.
    pub fn cardinality(&self) -> usize {
        self.labels.len() + 1
    }

    pub fn decode(&self, code: u32) -> Option<&str> {
        self.labels.get(code as usize).map(String::as_str)
    }

    pub fn code_of(&self, label: &str) -> Option<u32> {
        match self.kind {
            AttributeKind::Categorical => self
                .labels
                .binary_search_by(|l| l.as_str().cmp(label))
                .ok()
                .map(|i| i as u32),
            AttributeKind::Numeric => self
                .labels
                .iter()
                .position(|l| l == label)
                .map(|i| i as u32),
        }
    }

    /// Bin holding `value`, if it lies inside the observed range.
    pub fn bin_of(&self, value: f64) -> Option<u32> {
        let bins = self.labels.len();
        if bins == 0 || value.is_nan() {
            return None;
        }
        let (lo, hi) = (self.bin_edges[0], self.bin_edges[bins]);
        if value < lo || value > hi {
            return None;
        }
        let starts = &self.bin_edges[..bins];
        let idx = starts.partition_point(|&e| e <= value) - 1;
        Some(idx as u32)
    }

    /// Bins that overlap the closed interval `[lo, hi]`.
    pub fn bins_overlapping(&self, lo: f64, hi: f64) -> Vec<u32> {
        let bins = self.labels.len();
        (0..bins)
            .filter(|&i| {
                let start = self.bin_edges[i];
                let end = self.bin_edges[i + 1];
                let last = i + 1 == bins;
                let below_end = if last { lo <= end } else { lo < end };
                below_end && hi >= start
            })
            .map(|i| i as u32)
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncodedColumn {
    pub name: String,
    pub dictionary: Arc<Dictionary>,
    pub codes: Vec<u32>,
}

impl EncodedColumn {
    pub fn null_code(&self) -> u32 {
        self.dictionary.null_code()
    }

    pub fn cardinality(&self) -> usize {
        self.dictionary.cardinality()
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    /// Raw label of a row, `None` for missing values.
    pub fn decode(&self, row: usize) -> Option<&str> {
        self.dictionary.decode(self.codes[row])
    }
}

#[derive(Clone, Debug)]
pub struct RelationData {
    pub name: String,
    pub row_count: usize,
    /// Modeled attributes in declaration order.
    pub columns: Vec<EncodedColumn>,
    /// Primary-key value per row, empty when the relation declares none.
    pub primary_keys: Vec<String>,
    pub pk_index: HashMap<String, u32>,
    /// Raw foreign-key values per declared foreign key.
    pub foreign_keys: Vec<(String, Vec<Option<String>>)>,
}

impl RelationData {
    pub fn column(&self, name: &str) -> Option<&EncodedColumn> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn foreign_key_values(&self, attribute: &str) -> Option<&[Option<String>]> {
        self.foreign_keys
            .iter()
            .find(|(a, _)| a == attribute)
            .map(|(_, v)| v.as_slice())
    }

    /// Probes `child`'s primary-key index with this relation's foreign-key
    /// values: matched child row per row, `None` for null or dangling keys.
    pub fn hash_join(&self, attribute: &str, child: &RelationData) -> Option<Vec<Option<u32>>> {
        let values = self.foreign_key_values(attribute)?;
        Some(
            values
                .iter()
                .map(|v| v.as_ref().and_then(|k| child.pk_index.get(k).copied()))
                .collect(),
        )
    }
}

pub fn ingest_relation(decl: &RelationDecl, options: &EncodingOptions) -> Result<RelationData> {
    let file = std::fs::File::open(&decl.path).map_err(|e| Error::io(&decl.path, e))?;
    ingest_relation_from_reader(decl, options, file)
}

pub fn ingest_relation_from_reader<R: Read>(
    decl: &RelationDecl,
    options: &EncodingOptions,
    reader: R,
) -> Result<RelationData> {
    let csv_err = |e: csv::Error| Error::Csv {
        relation: decl.name.clone(),
        message: e.to_string(),
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::Fields)
        .from_reader(reader);
    let headers = rdr.headers().map_err(csv_err)?.clone();
    let position = |column: &str| {
        headers
            .iter()
            .position(|h| h == column)
            .ok_or_else(|| Error::MissingColumn {
                relation: decl.name.clone(),
                column: column.to_string(),
            })
    };

    let modeled: Vec<&AttributeDecl> = decl.modeled_attributes().collect();
    let attr_pos = modeled
        .iter()
        .map(|a| position(&a.name))
        .collect::<Result<Vec<_>>>()?;
    let pk_pos = decl.primary_key.as_deref().map(position).transpose()?;
    let fk_pos = decl
        .foreign_keys
        .iter()
        .map(|fk| position(&fk.attribute))
        .collect::<Result<Vec<_>>>()?;

    let mut raw: Vec<Vec<Option<String>>> = vec![Vec::new(); modeled.len()];
    let mut primary_keys = Vec::new();
    let mut pk_index = HashMap::new();
    let mut fk_values: Vec<Vec<Option<String>>> = vec![Vec::new(); fk_pos.len()];
    let field = |record: &csv::StringRecord, pos: usize| -> Option<String> {
        record
            .get(pos)
            .filter(|s| !s.is_empty())
            .map(str::to_string)
    };

    let mut row_count = 0usize;
    for record in rdr.records() {
        let record = record.map_err(csv_err)?;
        for (slot, &pos) in raw.iter_mut().zip(&attr_pos) {
            slot.push(field(&record, pos));
        }
        if let Some(pos) = pk_pos {
            let key = field(&record, pos).ok_or_else(|| Error::NullPrimaryKey {
                relation: decl.name.clone(),
                row: row_count,
            })?;
            if pk_index.insert(key.clone(), row_count as u32).is_some() {
                return Err(Error::DuplicatePrimaryKey {
                    relation: decl.name.clone(),
                    key,
                });
            }
            primary_keys.push(key);
        }
        for (slot, &pos) in fk_values.iter_mut().zip(&fk_pos) {
            slot.push(field(&record, pos));
        }
        row_count += 1;
    }

    let columns = modeled
        .iter()
        .zip(raw)
        .map(|(attr, values)| encode_column(&decl.name, attr, &values, options))
        .collect::<Result<Vec<_>>>()?;

    Ok(RelationData {
        name: decl.name.clone(),
        row_count,
        columns,
        primary_keys,
        pk_index,
        foreign_keys: decl
            .foreign_keys
            .iter()
            .map(|fk| fk.attribute.clone())
            .zip(fk_values)
            .collect(),
    })
}

fn encode_column(
    relation: &str,
    attr: &AttributeDecl,
    values: &[Option<String>],
    options: &EncodingOptions,
) -> Result<EncodedColumn> {
    let (dictionary, codes) = match attr.kind {
        AttributeKind::Categorical => encode_categorical(values, options.category_cap),
        AttributeKind::Numeric => {
            let parsed = values
                .iter()
                .map(|v| {
                    v.as_deref()
                        .map(|s| {
                            s.parse::<f64>()
                                .ok()
                                .filter(|x| x.is_finite())
                                .ok_or_else(|| Error::NotNumeric {
                                    relation: relation.to_string(),
                                    attribute: attr.name.clone(),
                                    value: s.to_string(),
                                })
                        })
                        .transpose()
                })
                .collect::<Result<Vec<Option<f64>>>>()?;
            encode_numeric(&parsed, options.numeric_bins.max(1))
        }
    };
    Ok(EncodedColumn {
        name: attr.name.clone(),
        dictionary: Arc::new(dictionary),
        codes,
    })
}

fn encode_categorical(values: &[Option<String>], cap: Option<usize>) -> (Dictionary, Vec<u32>) {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for v in values.iter().flatten() {
        *counts.entry(v.as_str()).or_default() += 1;
    }
    let kept: BTreeSet<&str> = match cap {
        Some(cap) if counts.len() > cap => {
            let mut by_freq: Vec<(&str, usize)> = counts.iter().map(|(k, v)| (*k, *v)).collect();
            by_freq.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
            by_freq.into_iter().take(cap).map(|(k, _)| k).collect()
        }
        _ => counts.keys().copied().collect(),
    };
    let folded = kept.len() < counts.len();
    let mut labels: Vec<String> = kept.iter().map(|s| s.to_string()).collect();
    if folded {
        labels.push(OTHER_LABEL.to_string());
    }
    let dictionary = Dictionary::categorical(labels);
    let null = dictionary.null_code();
    let other = dictionary.code_of(OTHER_LABEL);
    let codes = values
        .iter()
        .map(|v| match v {
            None => null,
            Some(s) => dictionary
                .code_of(s)
                .filter(|_| kept.contains(s.as_str()))
                .or(other)
                .unwrap_or(null),
        })
        .collect();
    (dictionary, codes)
}

/// Equi-depth binning: bin starts are the order statistics at multiples of
/// `n / bins`, deduplicated, so a column with few distinct values gets one
/// bin per value.
fn encode_numeric(values: &[Option<f64>], bins: usize) -> (Dictionary, Vec<u32>) {
    let mut sorted: Vec<f64> = values.iter().flatten().copied().collect();
    sorted.sort_by(f64::total_cmp);
    let mut edges: Vec<f64> = Vec::new();
    if let Some(&max) = sorted.last() {
        let n = sorted.len();
        for i in 0..bins {
            let v = sorted[i * n / bins];
            if edges.last() != Some(&v) {
                edges.push(v);
            }
        }
        edges.push(max);
    }
    let bin_count = edges.len().saturating_sub(1);
    let labels = (0..bin_count)
        .map(|i| {
            let close = if i + 1 == bin_count { ']' } else { ')' };
            format!("[{}, {}{}", edges[i], edges[i + 1], close)
        })
        .collect();
    let dictionary = Dictionary {
        kind: AttributeKind::Numeric,
        labels,
        bin_edges: edges,
    };
    let null = dictionary.null_code();
    let codes = values
        .iter()
        .map(|v| v.and_then(|x| dictionary.bin_of(x)).unwrap_or(null))
        .collect();
    (dictionary, codes)
}

/// Something that can tell which dictionary an attribute uses.
pub trait DomainSource {
    fn dictionary(&self, relation: &str, attribute: &str) -> Option<&Dictionary>;
}

/// Schema plus encoded data for every relation.
#[derive(Clone, Debug)]
pub struct Catalog {
    pub schema: Schema,
    relations: BTreeMap<String, RelationData>,
    /// Resolved foreign keys (child row per parent row), keyed by `parent.fk`.
    resolved: BTreeMap<String, Vec<Option<u32>>>,
}

impl Catalog {
    /// Loads a schema file and ingests every relation it declares.
    pub fn load(schema_path: impl AsRef<Path>) -> Result<Catalog> {
        Catalog::from_schema(load_schema(schema_path)?)
    }

    /// Ingests every relation of an already loaded schema.
    pub fn from_schema(schema: Schema) -> Result<Catalog> {
        let data = schema
            .relations
            .iter()
            .map(|decl| ingest_relation(decl, &schema.encoding))
            .collect::<Result<Vec<_>>>()?;
        Catalog::from_relations(schema, data)
    }

    /// Builds a catalog from CSV text held in memory, keyed by relation name.
    pub fn from_csv_strings(schema: Schema, csv: &BTreeMap<String, String>) -> Result<Catalog> {
        let data = schema
            .relations
            .iter()
            .map(|decl| {
                let text = csv
                    .get(&decl.name)
                    .ok_or_else(|| Error::UnknownRelation(decl.name.clone()))?;
                ingest_relation_from_reader(decl, &schema.encoding, text.as_bytes())
            })
            .collect::<Result<Vec<_>>>()?;
        Catalog::from_relations(schema, data)
    }

    pub fn from_relations(schema: Schema, data: Vec<RelationData>) -> Result<Catalog> {
        schema.validate()?;
        let relations: BTreeMap<String, RelationData> =
            data.into_iter().map(|r| (r.name.clone(), r)).collect();
        for decl in &schema.relations {
            if !relations.contains_key(&decl.name) {
                return Err(Error::UnknownRelation(decl.name.clone()));
            }
        }
        let mut resolved = BTreeMap::new();
        for edge in schema.fk_edges() {
            let parent = &relations[&edge.parent];
            let child = &relations[&edge.child];
            let rows = parent
                .hash_join(&edge.attribute, child)
                .ok_or_else(|| Error::MissingColumn {
                    relation: edge.parent.clone(),
                    column: edge.attribute.clone(),
                })?;
            resolved.insert(edge.key(), rows);
        }
        Ok(Catalog {
            schema,
            relations,
            resolved,
        })
    }

    pub fn relation(&self, name: &str) -> Option<&RelationData> {
        self.relations.get(name)
    }

    pub fn relations(&self) -> impl Iterator<Item = &RelationData> {
        self.relations.values()
    }

    /// Matched child row for every parent row of a foreign-key edge.
    pub fn fk_targets(&self, parent: &str, attribute: &str) -> Option<&[Option<u32>]> {
        self.resolved
            .get(&format!("{parent}.{attribute}"))
            .map(Vec::as_slice)
    }

    pub fn row_count(&self, relation: &str) -> Option<usize> {
        self.relations.get(relation).map(|r| r.row_count)
    }

    /// Number of parent rows whose foreign key matches a child row.
    pub fn join_cardinality(&self, edge: &FkEdge) -> Option<u64> {
        self.fk_targets(&edge.parent, &edge.attribute)
            .map(|rows| rows.iter().filter(|r| r.is_some()).count() as u64)
    }
}

impl DomainSource for Catalog {
    fn dictionary(&self, relation: &str, attribute: &str) -> Option<&Dictionary> {
        self.relation(relation)?
            .column(attribute)
            .map(|c| c.dictionary.as_ref())
    }
}
