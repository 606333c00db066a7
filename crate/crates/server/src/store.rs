use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use seismoflow_core::flow::{parse_flow, serialize_flow, FlowError, FlowGraph};
use serde::Serialize;

pub const FLOW_EXTENSION: &str = ".flow.json";

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("flow id \"{0}\" cannot be used as a file name")]
    BadId(String),
    #[error("no flow named \"{0}\"")]
    NotFound(String),
    #[error("stored flow \"{id}\" is unreadable: {source}")]
    Corrupt { id: String, source: FlowError },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct FlowSummary {
    pub id: String,
    pub label: String,
    pub node_count: usize,
    pub wire_count: usize,
}

impl FlowSummary {
    pub fn of(graph: &FlowGraph) -> Self {
        FlowSummary {
            id: graph.id.clone(),
            label: graph.label.clone(),
            node_count: graph.nodes.len(),
            wire_count: graph.wires.len(),
        }
    }
}

/// One canonical `.flow.json` file per flow id.
#[derive(Debug, Clone)]
pub struct FlowStore {
    dir: PathBuf,
}

/// Ids become file names, so keep them to a portable alphabet.
pub fn valid_flow_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 128
        && !id.starts_with('.')
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

impl FlowStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(FlowStore { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, id: &str) -> Result<PathBuf, StoreError> {
        if !valid_flow_id(id) {
            return Err(StoreError::BadId(id.to_string()));
        }
        Ok(self.dir.join(format!("{id}{FLOW_EXTENSION}")))
    }

    /// The stored document, byte for byte.
    pub fn document(&self, id: &str) -> Result<String, StoreError> {
        match fs::read_to_string(self.path(id)?) {
            Ok(s) => Ok(s),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                Err(StoreError::NotFound(id.to_string()))
            }
            Err(e) => Err(e.into()),
        }
    }

    pub fn load(&self, id: &str) -> Result<FlowGraph, StoreError> {
        let doc = self.document(id)?;
        parse_flow(&doc).map_err(|source| StoreError::Corrupt {
            id: id.to_string(),
            source,
        })
    }

    /// Writes the canonical document through a temporary file and a rename.
    pub fn save(&self, graph: &FlowGraph) -> Result<String, StoreError> {
        let path = self.path(&graph.id)?;
        let doc = serialize_flow(graph);
        let tmp = self.dir.join(format!(".{}.tmp", graph.id));
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(doc.as_bytes())?;
            f.sync_all()?;
        }
        fs::rename(&tmp, &path)?;
        Ok(doc)
    }

    /// Summaries of every readable flow, ordered by id. Unreadable files are
    /// skipped with a warning.
    pub fn list(&self) -> Result<Vec<FlowSummary>, StoreError> {
        let mut out = Vec::new();
        for entry in fs::read_dir(&self.dir)? {
            let name = entry?.file_name();
            let Some(id) = name.to_str().and_then(|n| n.strip_suffix(FLOW_EXTENSION)) else {
                continue;
            };
            if !valid_flow_id(id) {
                continue;
            }
            match self.load(id) {
                Ok(g) => out.push(FlowSummary::of(&g)),
                Err(e) => tracing::warn!("{e}"),
            }
        }
        out.sort_by(|a, b| a.id.cmp(&b.id));
        Ok(out)
    }
}
