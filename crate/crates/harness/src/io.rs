//! JSON and JSONL helpers with write-then-rename semantics.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{HarnessError, Result};

pub fn read_jsonl<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| HarnessError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| HarnessError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| HarnessError::Record {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::Record {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}

/// A file written under a temporary name and moved into place by [`Staged::commit`].
/// Dropping it uncommitted removes the temporary file.
pub struct Staged {
    tmp: PathBuf,
    dest: PathBuf,
    committed: bool,
}

impl Staged {
    pub fn commit(mut self) -> Result<()> {
        fs::rename(&self.tmp, &self.dest).map_err(|e| HarnessError::io(&self.dest, e))?;
        self.committed = true;
        Ok(())
    }
}

impl Drop for Staged {
    fn drop(&mut self) {
        if !self.committed {
            let _ = fs::remove_file(&self.tmp);
        }
    }
}

fn stage(dest: &Path, write: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<Staged> {
    let mut name = dest.file_name().unwrap_or_default().to_os_string();
    name.push(".tmp");
    let tmp = dest.with_file_name(name);
    let staged = Staged {
        tmp: tmp.clone(),
        dest: dest.to_path_buf(),
        committed: false,
    };
    let file = File::create(&tmp).map_err(|e| HarnessError::io(&tmp, e))?;
    let mut w = BufWriter::new(file);
    write(&mut w)
        .and_then(|()| w.flush())
        .map_err(|e| HarnessError::io(&tmp, e))?;
    Ok(staged)
}

pub fn stage_jsonl<T: Serialize>(dest: &Path, items: &[T]) -> Result<Staged> {
    stage(dest, |w| {
        for item in items {
            serde_json::to_writer(&mut *w, item)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    })
}

pub fn stage_json<T: Serialize>(dest: &Path, value: &T) -> Result<Staged> {
    stage(dest, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        w.write_all(b"\n")
    })
}

pub fn write_json<T: Serialize>(dest: &Path, value: &T) -> Result<()> {
    stage_json(dest, value)?.commit()
}

pub fn write_jsonl<T: Serialize>(dest: &Path, items: &[T]) -> Result<()> {
    stage_jsonl(dest, items)?.commit()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uncommitted_stage_leaves_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let dest = dir.path().join("a.jsonl");
        {
            let _s = stage_jsonl(&dest, &[1, 2, 3]).unwrap();
            assert!(dir.path().join("a.jsonl.tmp").exists());
        }
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
        write_jsonl(&dest, &[1, 2]).unwrap();
        assert_eq!(read_jsonl::<u32>(&dest).unwrap(), vec![1, 2]);
    }
}
