//! File-backed document repository.
//!
//! Layout under the data directory:
//!
//! ```text
//! models/<id>.xml          canonical model document (with layout, if any)
//! models/<id>.meta.json    timestamps and the cached validation report
//! notations/<id>.xml
//! notations/<id>.meta.json
//! ```
//!
//! Every file is written to a temporary sibling and renamed into place, so
//! readers see either the old or the new version.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use sbpm_core::api::Stored;
use sbpm_core::check::ValidationReport;
use serde::{Deserialize, Serialize};
use tokio::sync::Mutex;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Collection {
    Models,
    Notations,
}

impl Collection {
    fn dir(self) -> &'static str {
        match self {
            Collection::Models => "models",
            Collection::Notations => "notations",
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Meta {
    pub created_at: u64,
    pub updated_at: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation: Option<ValidationReport>,
}

pub struct Repository {
    root: PathBuf,
    writes: Mutex<()>,
}

/// Ids become file names, so they are restricted to a safe alphabet.
pub fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 128
        && !id.starts_with('.')
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

fn now_millis() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

async fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    tokio::fs::write(&tmp, bytes).await?;
    tokio::fs::rename(&tmp, path).await
}

async fn read_optional(path: &Path) -> std::io::Result<Option<String>> {
    match tokio::fs::read_to_string(path).await {
        Ok(s) => Ok(Some(s)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(e),
    }
}

impl Repository {
    pub async fn open(root: impl Into<PathBuf>) -> std::io::Result<Self> {
        let root = root.into();
        for c in [Collection::Models, Collection::Notations] {
            tokio::fs::create_dir_all(root.join(c.dir())).await?;
        }
        Ok(Repository {
            root,
            writes: Mutex::new(()),
        })
    }

    fn path(&self, c: Collection, id: &str, ext: &str) -> PathBuf {
        self.root.join(c.dir()).join(format!("{id}.{ext}"))
    }

    /// Stores a canonical document. Re-storing identical bytes only moves
    /// the update timestamp.
    pub async fn put(
        &self,
        c: Collection,
        id: &str,
        document: &str,
        validation: Option<ValidationReport>,
    ) -> std::io::Result<Stored> {
        let _guard = self.writes.lock().await;
        let doc_path = self.path(c, id, "xml");
        let previous = self.meta(c, id).await?;
        let now = now_millis();
        let meta = Meta {
            created_at: previous.as_ref().map_or(now, |m| m.created_at),
            updated_at: now,
            validation,
        };
        if read_optional(&doc_path).await?.as_deref() != Some(document) {
            write_atomic(&doc_path, document.as_bytes()).await?;
        }
        let meta_json = serde_json::to_vec_pretty(&meta).map_err(std::io::Error::other)?;
        write_atomic(&self.path(c, id, "meta.json"), &meta_json).await?;
        Ok(Stored {
            id: id.to_string(),
            created: previous.is_none(),
            created_at: meta.created_at,
            updated_at: meta.updated_at,
        })
    }

    pub async fn get(&self, c: Collection, id: &str) -> std::io::Result<Option<String>> {
        read_optional(&self.path(c, id, "xml")).await
    }

    pub async fn meta(&self, c: Collection, id: &str) -> std::io::Result<Option<Meta>> {
        match read_optional(&self.path(c, id, "meta.json")).await? {
            Some(s) => Ok(serde_json::from_str(&s).ok()),
            None => Ok(None),
        }
    }

    /// Stored ids, sorted.
    pub async fn list(&self, c: Collection) -> std::io::Result<Vec<String>> {
        let mut out = Vec::new();
        let mut dir = tokio::fs::read_dir(self.root.join(c.dir())).await?;
        while let Some(entry) = dir.next_entry().await? {
            let name = entry.file_name().to_string_lossy().into_owned();
            if let Some(id) = name.strip_suffix(".xml") {
                if valid_id(id) {
                    out.push(id.to_string());
                }
            }
        }
        out.sort();
        Ok(out)
    }
}
