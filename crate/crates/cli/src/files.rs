//! Reading inputs and writing outputs. Every output goes to a temporary file
//! in the destination directory and is renamed into place once complete.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use orderinfo::infometrics::PmiRecord;
use orderinfo::textdata::{self, ReadOptions, ScramblePair, SentenceFormat, SentenceRecord};
use serde::de::DeserializeOwned;
use serde::Serialize;
use tempfile::NamedTempFile;

use crate::error::{CliError, Result};

/// Fails with a usage error unless `path` is an existing file.
pub fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::usage(format!("input file {} does not exist", path.display())))
    }
}

pub fn require_dir(path: &Path) -> Result<()> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(CliError::usage(format!("input directory {} does not exist", path.display())))
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    require_file(path)?;
    File::open(path).map(BufReader::new).map_err(|e| CliError::from(e).in_file(path))
}

pub fn read_sentences(path: &Path, opts: ReadOptions) -> Result<Vec<SentenceRecord>> {
    let reader = open(path)?;
    textdata::read_sentences(reader, SentenceFormat::from_path(path), opts).map_err(|e| CliError::from(e).in_file(path))
}

pub fn read_scrambles(path: &Path) -> Result<Vec<ScramblePair>> {
    read_jsonl(path)
}

pub fn read_pmi(path: &Path) -> Result<Vec<PmiRecord>> {
    read_jsonl(path)
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let reader = open(path)?;
    textdata::read_jsonl(reader).map_err(|e| CliError::from(e).in_file(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let reader = open(path)?;
    serde_json::from_reader(reader).map_err(|e| CliError::from(e).in_file(path))
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let reader = open(path)?;
    csv::Reader::from_reader(reader)
        .into_deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(|e| CliError::from(e).in_file(path))
}

/// Writes `path` through a sibling temporary file, creating the parent
/// directory if needed.
pub fn write_atomic<F>(path: &Path, fill: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let fail = |e: std::io::Error| CliError::data(format!("cannot write {}: {e}", path.display()));
    fs::create_dir_all(&dir).map_err(fail)?;
    let mut tmp = NamedTempFile::new_in(&dir).map_err(fail)?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        fill(&mut w)?;
        w.flush().map_err(fail)?;
    }
    tmp.persist(path).map_err(|e| fail(e.error))?;
    Ok(())
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    write_atomic(path, |w| Ok(textdata::write_jsonl(w, items)?))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        w.write_all(b"\n")?;
        Ok(())
    })
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    write_atomic(path, |w| {
        let mut out = csv::Writer::from_writer(w);
        for r in rows {
            out.serialize(r)?;
        }
        out.flush()?;
        Ok(())
    })
}

/// Writes a CSV with an explicit header, for tables whose rows are built by
/// hand.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    write_atomic(path, |w| {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(header)?;
        for r in rows {
            out.write_record(r)?;
        }
        out.flush()?;
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_leaves_nothing_behind_on_failure() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        let r = write_atomic(&path, |w| {
            w.write_all(b"partial")?;
            Err(CliError::data("boom"))
        });
        assert!(r.is_err());
        assert!(!path.exists());
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
    }

    #[test]
    fn atomic_write_replaces_existing_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/out.txt");
        write_atomic(&path, |w| Ok(w.write_all(b"one")?)).unwrap();
        write_atomic(&path, |w| Ok(w.write_all(b"two")?)).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "two");
    }

    #[test]
    fn missing_input_is_a_usage_error() {
        let e = read_pmi(Path::new("/nonexistent/pmi.jsonl")).unwrap_err();
        assert_eq!(e.kind, crate::error::Kind::Usage);
    }
}
