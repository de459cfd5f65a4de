//! Per-instance prediction cache.
//!
//! Entries are keyed by the SHA-256 of the feature vector's little-endian
//! bytes and hold the backend's raw answer, so a cache hit validates to the
//! same [`ProbVector`](crate::prob::ProbVector) as the original query.
//!
//! The backing file is JSON lines: a header `{"classes":C}` followed by
//! `{"key":"<hex>","probs":[...]}` records written with 17 significant
//! digits.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::{Mutex, RwLock};

use serde::Deserialize;
use sha2::{Digest, Sha256};

use super::wire::format_number;
use super::ProbabilityBackend;
use crate::error::{Error, Result};

pub fn feature_key(x: &[f64]) -> String {
    let mut hasher = Sha256::new();
    for v in x {
        hasher.update(v.to_le_bytes());
    }
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    classes: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Entry {
    key: String,
    probs: Vec<f64>,
}

pub struct PredictionCache {
    inner: Option<Box<dyn ProbabilityBackend>>,
    num_classes: usize,
    entries: RwLock<HashMap<String, Vec<f64>>>,
    file: Option<Mutex<File>>,
}

fn read_entries(path: &Path) -> Result<(usize, HashMap<String, Vec<f64>>)> {
    let name = path.display().to_string();
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::format(&name, "line 1", "empty prediction file"))??;
    let header: Header = serde_json::from_str(&header)
        .map_err(|e| Error::format(&name, "line 1", format!("bad header: {e}")))?;
    let mut entries = HashMap::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: Entry = serde_json::from_str(&line)
            .map_err(|e| Error::format(&name, format!("line {}", i + 2), e.to_string()))?;
        if entry.probs.len() != header.classes {
            return Err(Error::format(
                &name,
                format!("line {}", i + 2),
                format!("{} probabilities for {} classes", entry.probs.len(), header.classes),
            ));
        }
        entries.insert(entry.key, entry.probs);
    }
    Ok((header.classes, entries))
}

fn entry_line(key: &str, probs: &[f64]) -> String {
    let parts: Vec<String> = probs.iter().map(|&v| format_number(v)).collect();
    format!("{{\"key\":\"{key}\",\"probs\":[{}]}}\n", parts.join(","))
}

impl PredictionCache {
    pub(crate) fn open_replay(path: &Path) -> Result<Self> {
        let (num_classes, entries) = read_entries(path)?;
        Ok(PredictionCache {
            inner: None,
            num_classes,
            entries: RwLock::new(entries),
            file: None,
        })
    }

    pub(crate) fn wrap(inner: Box<dyn ProbabilityBackend>, path: Option<&Path>) -> Result<Self> {
        let num_classes = inner.num_classes();
        let (entries, file) = match path {
            Some(p) if p.exists() => {
                let (classes, entries) = read_entries(p)?;
                if classes != num_classes {
                    return Err(Error::invalid(format!(
                        "cache file has {classes} classes, backend has {num_classes}"
                    )));
                }
                let file = OpenOptions::new().append(true).open(p)?;
                (entries, Some(file))
            }
            Some(p) => {
                let mut file = File::create(p)?;
                writeln!(file, "{{\"classes\":{num_classes}}}")?;
                (HashMap::new(), Some(file))
            }
            None => (HashMap::new(), None),
        };
        Ok(PredictionCache {
            inner: Some(inner),
            num_classes,
            entries: RwLock::new(entries),
            file: file.map(Mutex::new),
        })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn insert(&self, key: String, probs: &[f64]) -> Result<()> {
        let mut entries = self.entries.write().expect("cache lock");
        if entries.contains_key(&key) {
            return Ok(());
        }
        if let Some(file) = &self.file {
            let mut f = file.lock().expect("cache file lock");
            f.write_all(entry_line(&key, probs).as_bytes())?;
        }
        entries.insert(key, probs.to_vec());
        Ok(())
    }
}

impl ProbabilityBackend for PredictionCache {
    fn num_classes(&self) -> usize {
        self.num_classes
    }

    fn predict_raw(&self, x: &[f64]) -> Result<Vec<f64>> {
        let key = feature_key(x);
        if let Some(hit) = self.entries.read().expect("cache lock").get(&key) {
            return Ok(hit.clone());
        }
        let inner = self.inner.as_ref().ok_or_else(|| {
            Error::invalid("input not present in the recorded prediction file")
        })?;
        let probs = inner.predict_raw(x)?;
        self.insert(key, &probs)?;
        Ok(probs)
    }

    fn predict_raw_batch(&self, xs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let keys: Vec<String> = xs.iter().map(|x| feature_key(x)).collect();
        let mut out: Vec<Option<Vec<f64>>> = {
            let entries = self.entries.read().expect("cache lock");
            keys.iter().map(|k| entries.get(k).cloned()).collect()
        };
        let missing: Vec<usize> = (0..xs.len()).filter(|&i| out[i].is_none()).collect();
        if !missing.is_empty() {
            let inner = self.inner.as_ref().ok_or_else(|| {
                Error::invalid(format!("{} inputs not present in the recorded prediction file", missing.len()))
            })?;
            let queries: Vec<Vec<f64>> = missing.iter().map(|&i| xs[i].clone()).collect();
            let answers = inner.predict_raw_batch(&queries)?;
            for (&i, probs) in missing.iter().zip(answers) {
                self.insert(keys[i].clone(), &probs)?;
                out[i] = Some(probs);
            }
        }
        Ok(out.into_iter().map(|p| p.expect("filled")).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypothesis::SourceHypothesis;
    use crate::model::init_network;

    #[test]
    fn keys_are_stable_and_distinct() {
        assert_eq!(feature_key(&[1.0, 2.0]), feature_key(&[1.0, 2.0]));
        assert_ne!(feature_key(&[1.0, 2.0]), feature_key(&[2.0, 1.0]));
        assert_ne!(feature_key(&[0.0]), feature_key(&[-0.0]));
        assert_eq!(feature_key(&[]).len(), 64);
    }

    #[test]
    fn cache_is_transparent_and_replays() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("preds.jsonl");
        let net = init_network(&[3, 6, 4], 5).unwrap();
        let plain = SourceHypothesis::in_process(net.clone()).unwrap();
        let cached =
            SourceHypothesis::cached(SourceHypothesis::in_process(net).unwrap(), Some(&path)).unwrap();
        let xs: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 * 0.1, -0.3, 1.0 / (i + 1) as f64]).collect();
        let warm = cached.predict_batch(&xs).unwrap();
        for (x, w) in xs.iter().zip(&warm) {
            let direct = plain.predict(x).unwrap();
            assert_eq!(&direct, w);
            assert_eq!(cached.predict(x).unwrap(), direct);
        }
        drop(cached);

        let replay = SourceHypothesis::replay(&path).unwrap();
        assert_eq!(replay.num_classes(), 4);
        for x in &xs {
            let a = replay.predict(x).unwrap();
            let b = plain.predict(x).unwrap();
            assert!(a.values().iter().zip(b.values()).all(|(p, q)| p.to_bits() == q.to_bits()));
        }
        assert!(replay.predict(&[9.0, 9.0, 9.0]).is_err());
    }

    #[test]
    fn corrupt_file_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(&path, "{\"classes\":2}\n{\"key\":\"ab\",\"probs\":[1.0]}\n").unwrap();
        let err = SourceHypothesis::replay(&path).unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
    }
}
