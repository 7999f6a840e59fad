use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const DVEC_MAGIC: &[u8; 4] = b"DVEC";
const DVEC_VERSION: u32 = 1;

/// Per-utterance speaker embeddings of one video, each row scaled to unit norm on ingest.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub video_id: String,
    pub channel_id: Option<String>,
    pub utt_ids: Vec<String>,
    dim: usize,
    data: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Sidecar {
    video_id: String,
    #[serde(default)]
    channel_id: Option<String>,
    utt_ids: Vec<String>,
}

fn bad(message: impl Into<String>) -> Error {
    Error::Format {
        format: "DVEC",
        message: message.into(),
    }
}

impl EmbeddingSet {
    pub fn new(
        video_id: impl Into<String>,
        channel_id: Option<String>,
        utt_ids: Vec<String>,
        dim: usize,
        mut data: Vec<f32>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("embedding dimension must be positive"));
        }
        if data.len() != utt_ids.len() * dim {
            return Err(Error::invalid(format!(
                "{} utterance ids but {} values of dimension {dim}",
                utt_ids.len(),
                data.len()
            )));
        }
        for (i, row) in data.chunks_mut(dim).enumerate() {
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("embedding row {i} is not finite")));
            }
            let norm = row.iter().map(|&v| f64::from(v).powi(2)).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(Error::invalid(format!("embedding row {i} is all zero")));
            }
            for v in row.iter_mut() {
                *v = (f64::from(*v) / norm) as f32;
            }
        }
        Ok(Self {
            video_id: video_id.into(),
            channel_id: channel_id.filter(|c| !c.is_empty()),
            utt_ids,
            dim,
            data,
        })
    }

    pub fn len(&self) -> usize {
        self.utt_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utt_ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows_f64(&self) -> Vec<Vec<f64>> {
        self.data
            .chunks(self.dim)
            .map(|r| r.iter().map(|&v| f64::from(v)).collect())
            .collect()
    }

    /// Keeps only the rows whose utterance id satisfies `keep`.
    pub fn retain(&self, mut keep: impl FnMut(&str) -> bool) -> Self {
        let mut out = Self {
            utt_ids: Vec::new(),
            data: Vec::new(),
            ..self.clone()
        };
        for (i, id) in self.utt_ids.iter().enumerate() {
            if keep(id) {
                out.utt_ids.push(id.clone());
                out.data.extend_from_slice(self.row(i));
            }
        }
        out
    }

    pub fn write_dvec<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(DVEC_MAGIC)?;
        for field in [DVEC_VERSION, self.len() as u32, self.dim as u32] {
            w.write_all(&field.to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(self.data.len() * 4);
        for v in &self.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    /// Reads the matrix part; returns `(n, dim, values)`.
    pub fn read_dvec<R: Read>(mut r: R) -> Result<(usize, usize, Vec<f32>)> {
        let mut header = [0u8; 16];
        r.read_exact(&mut header).map_err(|_| bad("truncated header"))?;
        if &header[..4] != DVEC_MAGIC {
            return Err(bad(format!("bad magic {:?}", &header[..4])));
        }
        let word = |k: usize| u32::from_le_bytes(header[4 * k..4 * k + 4].try_into().expect("4 bytes"));
        let (version, n, dim) = (word(1), word(2) as usize, word(3) as usize);
        if version != DVEC_VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let mut raw = Vec::new();
        r.read_to_end(&mut raw)?;
        let count = n.checked_mul(dim).ok_or_else(|| bad("matrix size overflows"))?;
        if raw.len() != count * 4 {
            return Err(bad(format!(
                "expected {} payload bytes, found {}",
                count * 4,
                raw.len()
            )));
        }
        let values = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect();
        Ok((n, dim, values))
    }

    /// Path of the JSON sidecar belonging to a `.dvec` file.
    pub fn sidecar_path(dvec: &Path) -> PathBuf {
        dvec.with_extension("json")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let inner = || -> Result<Self> {
            let (n, dim, values) = Self::read_dvec(std::io::BufReader::new(fs::File::open(path)?))?;
            let side_path = Self::sidecar_path(path);
            let side: Sidecar = serde_json::from_slice(
                &fs::read(&side_path).map_err(|e| Error::from(e).with_path(&side_path))?,
            )?;
            if side.utt_ids.len() != n {
                return Err(bad(format!(
                    "sidecar lists {} utterances, matrix has {n}",
                    side.utt_ids.len()
                )));
            }
            Self::new(side.video_id, side.channel_id, side.utt_ids, dim.max(1), values)
        };
        inner().map_err(|e| e.with_path(path))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut buf = Vec::new();
        self.write_dvec(&mut buf)?;
        fs::write(path, buf).map_err(|e| Error::from(e).with_path(path))?;
        let side = Sidecar {
            video_id: self.video_id.clone(),
            channel_id: self.channel_id.clone(),
            utt_ids: self.utt_ids.clone(),
        };
        let side_path = Self::sidecar_path(path);
        fs::write(&side_path, serde_json::to_vec(&side)?)
            .map_err(|e| Error::from(e).with_path(side_path))?;
        Ok(())
    }
}

pub fn cosine_similarity(a: &[f32], b: &[f32]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(&x, &y)| f64::from(x) * f64::from(y)).sum();
    let na = a.iter().map(|&x| f64::from(x).powi(2)).sum::<f64>().sqrt();
    let nb = b.iter().map(|&x| f64::from(x).powi(2)).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set() -> EmbeddingSet {
        EmbeddingSet::new(
            "vid",
            Some("ch".into()),
            vec!["vid_00000".into(), "vid_00001".into()],
            3,
            vec![3.0, 4.0, 0.0, 0.0, 0.0, 2.0],
        )
        .unwrap()
    }

    #[test]
    fn rows_are_unit_norm() {
        let s = set();
        assert_eq!(s.row(0), &[0.6, 0.8, 0.0]);
        assert_eq!(s.row(1), &[0.0, 0.0, 1.0]);
        assert!(EmbeddingSet::new("v", None, vec!["a".into()], 2, vec![0.0, 0.0]).is_err());
        assert!(EmbeddingSet::new("v", None, vec!["a".into()], 2, vec![1.0]).is_err());
        assert_eq!(EmbeddingSet::new("v", Some(String::new()), vec![], 2, vec![]).unwrap().channel_id, None);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vid.dvec");
        let s = set();
        s.save(&path).unwrap();
        assert_eq!(EmbeddingSet::load(&path).unwrap(), s);
        let bytes = fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"DVEC");
        assert_eq!(bytes.len(), 16 + 6 * 4);
        fs::write(&path, &bytes[..20]).unwrap();
        assert!(EmbeddingSet::load(&path).unwrap_err().to_string().contains("payload"));
    }

    #[test]
    fn retain_and_cosine() {
        let s = set().retain(|id| id.ends_with('1'));
        assert_eq!(s.len(), 1);
        assert_eq!(s.row(0), &[0.0, 0.0, 1.0]);
        assert!((cosine_similarity(&[1.0, 0.0], &[1.0, 1.0]) - 0.5f64.sqrt()).abs() < 1e-7);
    }
}
