//! Labeled feature vectors and their on-disk format.
//!
//! A store directory holds two files:
//!
//! - `index.json`: `{"dim": int, "items": [{"id", "category", "split", "image_path"?}, ...]}`
//! - `features.f32`: little-endian float32, row-major, one row of `dim` values per
//!   index entry, in index order.
//!
//! CSV fixtures (`id,category,split,f0..f{dim-1}`) are accepted through
//! [`FeatureStore::from_csv`]; values are narrowed to f32 exactly as the
//! binary payload would store them.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const INDEX_FILE: &str = "index.json";
pub const PAYLOAD_FILE: &str = "features.f32";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureItem {
    pub id: String,
    pub category: String,
    pub vector: Vec<f64>,
    pub image_path: Option<PathBuf>,
    pub split: Split,
}

#[derive(Serialize, Deserialize)]
struct IndexEntry {
    id: String,
    category: String,
    split: Split,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    image_path: Option<PathBuf>,
}

#[derive(Serialize, Deserialize)]
struct IndexFile {
    dim: usize,
    items: Vec<IndexEntry>,
}

/// Immutable, validated collection of feature items.
#[derive(Debug, Clone)]
pub struct FeatureStore {
    dim: usize,
    items: Vec<FeatureItem>,
    categories: BTreeMap<String, Vec<usize>>,
    by_id: BTreeMap<String, usize>,
}

impl FeatureStore {
    /// Validates `items` and builds the category and id indexes.
    pub fn new(dim: usize, items: Vec<FeatureItem>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::PayloadMismatch("dim must be positive".into()));
        }
        let mut categories: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        let mut by_id = BTreeMap::new();
        for (i, item) in items.iter().enumerate() {
            if item.vector.len() != dim {
                return Err(Error::InvalidItem {
                    id: item.id.clone(),
                    reason: format!("vector length {} != dim {}", item.vector.len(), dim),
                });
            }
            if item.vector.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidItem {
                    id: item.id.clone(),
                    reason: "non-finite value in feature vector".into(),
                });
            }
            if by_id.insert(item.id.clone(), i).is_some() {
                return Err(Error::DuplicateId(item.id.clone()));
            }
            categories.entry(item.category.clone()).or_default().push(i);
        }
        Ok(Self {
            dim,
            items,
            categories,
            by_id,
        })
    }

    /// Loads `index.json` + `features.f32` from `dir`.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let index_path = dir.join(INDEX_FILE);
        let payload_path = dir.join(PAYLOAD_FILE);
        let index_bytes = fs::read(&index_path).map_err(|e| Error::io(&index_path, e))?;
        let index: IndexFile =
            serde_json::from_slice(&index_bytes).map_err(|e| Error::json(&index_path, e))?;

        let mut payload = Vec::new();
        fs::File::open(&payload_path)
            .and_then(|mut f| f.read_to_end(&mut payload))
            .map_err(|e| Error::io(&payload_path, e))?;

        let row_bytes = index.dim * 4;
        if index.dim == 0 || payload.len() % row_bytes != 0 {
            return Err(Error::PayloadMismatch(format!(
                "payload of {} bytes is not a whole number of {}-dim f32 rows",
                payload.len(),
                index.dim
            )));
        }
        let rows = payload.len() / row_bytes;
        if rows != index.items.len() {
            return Err(Error::PayloadMismatch(format!(
                "payload has {rows} rows but index lists {} items",
                index.items.len()
            )));
        }

        let items = index
            .items
            .into_iter()
            .zip(payload.chunks_exact(row_bytes))
            .map(|(entry, row)| FeatureItem {
                id: entry.id,
                category: entry.category,
                split: entry.split,
                image_path: entry.image_path,
                vector: row
                    .chunks_exact(4)
                    .map(|b| f64::from(f32::from_le_bytes([b[0], b[1], b[2], b[3]])))
                    .collect(),
            })
            .collect();
        Self::new(index.dim, items)
    }

    /// Writes the store to `dir` in the binary format, creating the directory if needed.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let index = IndexFile {
            dim: self.dim,
            items: self
                .items
                .iter()
                .map(|it| IndexEntry {
                    id: it.id.clone(),
                    category: it.category.clone(),
                    split: it.split,
                    image_path: it.image_path.clone(),
                })
                .collect(),
        };
        let index_path = dir.join(INDEX_FILE);
        let json = serde_json::to_vec_pretty(&index).map_err(|e| Error::json(&index_path, e))?;
        fs::write(&index_path, json).map_err(|e| Error::io(&index_path, e))?;

        let payload_path = dir.join(PAYLOAD_FILE);
        fs::write(&payload_path, self.payload_bytes()).map_err(|e| Error::io(&payload_path, e))
    }

    /// The `features.f32` payload for this store.
    pub fn payload_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.items.len() * self.dim * 4);
        for item in &self.items {
            for &v in &item.vector {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        out
    }

    /// Imports a CSV fixture with header `id,category,split,f0..f{dim-1}`.
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_reader(file)
    }

    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.len() < 4
            || &headers[0] != "id"
            || &headers[1] != "category"
            || &headers[2] != "split"
        {
            return Err(Error::PayloadMismatch(
                "CSV header must be id,category,split,f0..".into(),
            ));
        }
        let dim = headers.len() - 3;
        for (k, h) in headers.iter().skip(3).enumerate() {
            if h != format!("f{k}") {
                return Err(Error::PayloadMismatch(format!(
                    "CSV column {} should be f{k}, found {h}",
                    k + 3
                )));
            }
        }
        let mut items = Vec::new();
        for record in rdr.records() {
            let record = record?;
            let id = record[0].to_string();
            let split = match &record[2] {
                "train" => Split::Train,
                "test" => Split::Test,
                other => {
                    return Err(Error::InvalidItem {
                        id,
                        reason: format!("unknown split {other:?}"),
                    })
                }
            };
            let vector = record
                .iter()
                .skip(3)
                .map(|s| {
                    s.parse::<f32>().map(f64::from).map_err(|_| Error::InvalidItem {
                        id: id.clone(),
                        reason: format!("unparseable value {s:?}"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            items.push(FeatureItem {
                category: record[1].to_string(),
                id,
                split,
                image_path: None,
                vector,
            });
        }
        Self::new(dim, items)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[FeatureItem] {
        &self.items
    }

    pub fn item(&self, index: usize) -> &FeatureItem {
        &self.items[index]
    }

    /// Category id → item indices, each list in index-file order.
    pub fn categories(&self) -> &BTreeMap<String, Vec<usize>> {
        &self.categories
    }

    pub fn category_ids(&self) -> impl Iterator<Item = &str> {
        self.categories.keys().map(String::as_str)
    }

    pub fn index_of(&self, id: &str) -> Result<usize> {
        self.by_id
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownItem(id.to_string()))
    }

    pub fn get(&self, id: &str) -> Result<&FeatureItem> {
        Ok(&self.items[self.index_of(id)?])
    }

    pub fn category_indices(&self, category: &str) -> Result<&[usize]> {
        self.categories
            .get(category)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownCategory(category.to_string()))
    }

    /// Items of `category` in index order.
    pub fn category_view(&self, category: &str) -> Result<Vec<&FeatureItem>> {
        Ok(self
            .category_indices(category)?
            .iter()
            .map(|&i| &self.items[i])
            .collect())
    }

    /// Training-split indices of `category`, skipping `exclude` if given.
    pub fn train_indices(&self, category: &str, exclude: Option<&str>) -> Result<Vec<usize>> {
        Ok(self
            .category_indices(category)?
            .iter()
            .copied()
            .filter(|&i| {
                let it = &self.items[i];
                it.split == Split::Train && exclude != Some(it.id.as_str())
            })
            .collect())
    }

    /// A new store restricted to `categories`, keeping index order.
    pub fn subset(&self, categories: &HashSet<String>) -> Result<Self> {
        let items = self
            .items
            .iter()
            .filter(|it| categories.contains(&it.category))
            .cloned()
            .collect();
        Self::new(self.dim, items)
    }
}
