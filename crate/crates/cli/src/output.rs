use std::fs;
use std::io::Write;
use std::path::Path;

use tempfile::NamedTempFile;

use crate::error::{config, CliResult};

/// Files kept in memory until every output is ready.
#[derive(Default)]
pub struct Staged {
    files: Vec<(String, Vec<u8>)>,
}

impl Staged {
    pub fn add(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.files.push((name.into(), bytes));
    }

    pub fn is_empty(&self) -> bool {
        self.files.is_empty()
    }

    /// Writes every file under a temporary name, then renames them all.
    pub fn commit(self, dir: &Path) -> CliResult<()> {
        let fail = |e: std::io::Error| config(format!("{}: {e}", dir.display()));
        let mut pending = Vec::with_capacity(self.files.len());
        for (name, bytes) in &self.files {
            let target = dir.join(name);
            let parent = target.parent().unwrap_or(dir);
            fs::create_dir_all(parent).map_err(fail)?;
            let mut tmp = NamedTempFile::new_in(parent).map_err(fail)?;
            tmp.write_all(bytes).map_err(fail)?;
            pending.push((tmp, target));
        }
        for (tmp, target) in pending {
            tmp.persist(&target).map_err(|e| config(format!("{}: {}", target.display(), e.error)))?;
        }
        Ok(())
    }
}
