//! One JSON document per session, replaced atomically on every change.

use serde::{Deserialize, Serialize};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use crate::alloop::SessionState;
use crate::dataio::SynthConfig;
use crate::error::{Error, Result};

/// Where a session's samples come from. Synthetic data is regenerated from
/// its config on reload, so the document stays small.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DatasetRef {
    Named { name: String },
    Synthetic { config: SynthConfig },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub id: String,
    pub dataset: DatasetRef,
    pub state: SessionState,
    /// Milliseconds since the Unix epoch.
    pub created_ms: u64,
    pub updated_ms: u64,
}

pub fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// Session ids are UUIDs; anything else never reaches the file system.
pub fn valid_id(id: &str) -> bool {
    uuid::Uuid::parse_str(id).is_ok()
}

#[derive(Debug, Clone)]
pub struct SessionStore {
    dir: PathBuf,
}

impl SessionStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(SessionStore { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.json"))
    }

    /// Writes to a temporary file, syncs it and renames it over the old
    /// document, so readers see either the previous or the new state.
    pub fn save(&self, record: &SessionRecord) -> Result<()> {
        if !valid_id(&record.id) {
            return Err(Error::InvalidArgument(format!("malformed session id {:?}", record.id)));
        }
        let path = self.path(&record.id);
        let tmp = self.dir.join(format!(".{}.json.tmp", record.id));
        {
            let mut f = fs::File::create(&tmp)?;
            serde_json::to_writer(&mut f, record)?;
            f.write_all(b"\n")?;
            f.sync_all()?;
        }
        fs::rename(&tmp, &path)?;
        Ok(())
    }

    pub fn load(&self, id: &str) -> Result<SessionRecord> {
        if !valid_id(id) {
            return Err(Error::NotFound(format!("session {id}")));
        }
        let bytes = match fs::read(self.path(id)) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(Error::NotFound(format!("session {id}")))
            }
            Err(e) => return Err(e.into()),
        };
        Ok(serde_json::from_slice(&bytes)?)
    }
}
