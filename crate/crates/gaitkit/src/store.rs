//! Embedding store: `index.json` plus one little-endian `f32` file per video.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use gaitkit_core::eval::EmbeddingLookup;
use serde::{Deserialize, Serialize};

use crate::error::{format_error, IoContext};
use crate::io::{read_json, write_atomic, write_json};
use crate::Result;

pub const INDEX: &str = "index.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub file: String,
    pub subject_id: String,
    pub camera_id: u32,
    pub len: usize,
    /// Frames the embedding was computed from.
    pub frames: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StoreIndex {
    pub embedding_len: usize,
    pub entries: BTreeMap<String, IndexEntry>,
}

/// File name for a video id; characters outside `[A-Za-z0-9._-]` become `_`.
fn file_name(video_id: &str) -> String {
    let stem: String = video_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "._-".contains(c) { c } else { '_' })
        .collect();
    format!("{stem}.f32")
}

fn encode(v: &[f32]) -> Vec<u8> {
    v.iter().flat_map(|x| x.to_le_bytes()).collect()
}

fn decode(bytes: &[u8]) -> Vec<f32> {
    bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect()
}

/// Store being written. The index is rewritten by [`StoreWriter::finish`].
#[derive(Debug)]
pub struct StoreWriter {
    dir: PathBuf,
    index: StoreIndex,
}

impl StoreWriter {
    /// Opens `dir`, keeping entries already indexed there.
    pub fn open(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).at(dir)?;
        let path = dir.join(INDEX);
        let index = if path.is_file() { read_json(&path)? } else { StoreIndex::default() };
        Ok(Self {
            dir: dir.to_path_buf(),
            index,
        })
    }

    pub fn insert(&mut self, video_id: &str, subject_id: &str, camera_id: u32, frames: usize, embedding: &[f32]) -> Result<()> {
        let index_path = self.dir.join(INDEX);
        if self.index.entries.is_empty() {
            self.index.embedding_len = embedding.len();
        } else if embedding.len() != self.index.embedding_len {
            return Err(format_error(
                &index_path,
                format!("embedding of length {} in a store of length {}", embedding.len(), self.index.embedding_len),
            ));
        }
        let file = file_name(video_id);
        if let Some((other, _)) = self.index.entries.iter().find(|(id, e)| e.file == file && id.as_str() != video_id) {
            return Err(format_error(&index_path, format!("videos `{other}` and `{video_id}` map to the same file")));
        }
        write_atomic(&self.dir.join(&file), &encode(embedding))?;
        self.index.entries.insert(
            video_id.to_string(),
            IndexEntry {
                file,
                subject_id: subject_id.to_string(),
                camera_id,
                len: embedding.len(),
                frames,
            },
        );
        Ok(())
    }

    pub fn finish(self) -> Result<StoreIndex> {
        write_json(&self.dir.join(INDEX), &self.index)?;
        Ok(self.index)
    }
}

/// A store read fully into memory.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmbeddingStore {
    pub index: StoreIndex,
    vectors: BTreeMap<String, Vec<f32>>,
}

impl EmbeddingStore {
    pub fn load(dir: &Path) -> Result<Self> {
        let index: StoreIndex = read_json(&dir.join(INDEX))?;
        let mut vectors = BTreeMap::new();
        for (id, e) in &index.entries {
            let path = dir.join(&e.file);
            let v = decode(&fs::read(&path).at(&path)?);
            if v.len() != e.len {
                return Err(format_error(&path, format!("holds {} values, index says {}", v.len(), e.len)));
            }
            vectors.insert(id.clone(), v);
        }
        Ok(Self { index, vectors })
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

impl EmbeddingLookup for EmbeddingStore {
    fn embedding(&self, video_id: &str) -> Option<&[f32]> {
        self.vectors.get(video_id).map(Vec::as_slice)
    }
}
