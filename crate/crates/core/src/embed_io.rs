//! Embedding exchange between external encoders and the engine.
//!
//! Data file layout (all little-endian):
//!
//! ```text
//! "LFV1" | u32 dim | { u16 id_len | id bytes | u32 rows | rows * dim * f32 }*
//! ```
//!
//! A JSON manifest sits next to the data file at `<data>.manifest.json`.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::mix_seed;

pub const MAGIC: &[u8; 4] = b"LFV1";
pub const NORM_TOLERANCE: f32 = 1e-4;

/// Per-passage sequence of token vectors, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenMatrix {
    pub passage_id: String,
    dim: usize,
    data: Vec<f32>,
}

impl TokenMatrix {
    pub fn new(passage_id: impl Into<String>, dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Format("token matrix dim must be positive".into()));
        }
        if data.len() % dim != 0 {
            return Err(Error::Dim {
                expected: dim,
                actual: data.len() % dim,
            });
        }
        Ok(TokenMatrix {
            passage_id: passage_id.into(),
            dim,
            data,
        })
    }

    pub fn from_rows(passage_id: impl Into<String>, rows: &[Vec<f32>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(dim * rows.len());
        for r in rows {
            if r.len() != dim {
                return Err(Error::Dim {
                    expected: dim,
                    actual: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(passage_id, dim, data)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_rows(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f32> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    /// First row whose norm is outside `1 ± tol`.
    pub fn check_unit_rows(&self, tol: f32) -> Result<()> {
        for (i, r) in self.rows().enumerate() {
            let norm = l2_norm(r);
            if !((norm - 1.0).abs() <= tol) {
                return Err(Error::Norm {
                    passage_id: self.passage_id.clone(),
                    row: i,
                    norm,
                });
            }
        }
        Ok(())
    }
}

pub fn l2_norm(v: &[f32]) -> f32 {
    v.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt() as f32
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingManifest {
    pub dim: usize,
    pub count: usize,
    pub tokenizer_name: String,
    pub encoder_tag: String,
}

pub fn manifest_path(data_path: &Path) -> PathBuf {
    let mut s = data_path.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

/// Streaming writer. Call [`EmbeddingWriter::finish`] to flush the data and
/// emit the manifest.
pub struct EmbeddingWriter {
    path: PathBuf,
    out: BufWriter<File>,
    dim: usize,
    count: usize,
    seen: HashSet<String>,
    tokenizer_name: String,
    encoder_tag: String,
}

impl EmbeddingWriter {
    pub fn create(
        path: &Path,
        dim: usize,
        tokenizer_name: &str,
        encoder_tag: &str,
    ) -> Result<Self> {
        if dim == 0 || dim > u32::MAX as usize {
            return Err(Error::Format(format!("invalid embedding dim {dim}")));
        }
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        out.write_all(MAGIC)
            .and_then(|_| out.write_all(&(dim as u32).to_le_bytes()))
            .map_err(|e| Error::io(path, e))?;
        Ok(EmbeddingWriter {
            path: path.to_owned(),
            out,
            dim,
            count: 0,
            seen: HashSet::new(),
            tokenizer_name: tokenizer_name.to_owned(),
            encoder_tag: encoder_tag.to_owned(),
        })
    }

    pub fn write(&mut self, m: &TokenMatrix) -> Result<()> {
        if m.dim() != self.dim {
            return Err(Error::Dim {
                expected: self.dim,
                actual: m.dim(),
            });
        }
        if m.is_empty() {
            return Err(Error::Size(format!("{} has no rows", m.passage_id)));
        }
        let id = m.passage_id.as_bytes();
        if id.is_empty() || id.len() > u16::MAX as usize {
            return Err(Error::Format(format!(
                "passage id length {} outside 1..=65535",
                id.len()
            )));
        }
        if !self.seen.insert(m.passage_id.clone()) {
            return Err(Error::Dup(m.passage_id.clone()));
        }
        let rows = u32::try_from(m.n_rows())
            .map_err(|_| Error::Size(format!("{} has too many rows", m.passage_id)))?;
        let io = |e| Error::io(&self.path, e);
        self.out.write_all(&(id.len() as u16).to_le_bytes()).map_err(io)?;
        self.out.write_all(id).map_err(io)?;
        self.out.write_all(&rows.to_le_bytes()).map_err(io)?;
        for x in m.as_slice() {
            self.out.write_all(&x.to_le_bytes()).map_err(io)?;
        }
        self.count += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<EmbeddingManifest> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))?;
        let manifest = EmbeddingManifest {
            dim: self.dim,
            count: self.count,
            tokenizer_name: self.tokenizer_name,
            encoder_tag: self.encoder_tag,
        };
        let mpath = manifest_path(&self.path);
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        std::fs::write(&mpath, json + "\n").map_err(|e| Error::io(&mpath, e))?;
        Ok(manifest)
    }
}

/// Write a whole stream of matrices. The dimension is taken from the first
/// matrix.
pub fn write_embeddings<'a, I>(
    path: &Path,
    matrices: I,
    tokenizer_name: &str,
    encoder_tag: &str,
) -> Result<EmbeddingManifest>
where
    I: IntoIterator<Item = &'a TokenMatrix>,
{
    let mut iter = matrices.into_iter().peekable();
    let Some(first) = iter.peek() else {
        return Err(Error::Size("no matrices to write".into()));
    };
    let mut w = EmbeddingWriter::create(path, first.dim(), tokenizer_name, encoder_tag)?;
    for m in iter {
        w.write(m)?;
    }
    w.finish()
}

/// Streaming reader validating dimensions and row norms.
pub struct EmbeddingReader {
    path: PathBuf,
    input: BufReader<File>,
    manifest: EmbeddingManifest,
    remaining: usize,
    seen: HashSet<String>,
    done: bool,
}

impl EmbeddingReader {
    pub fn open(path: &Path) -> Result<Self> {
        let mpath = manifest_path(path);
        let mtext = std::fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
        let manifest: EmbeddingManifest = serde_json::from_str(&mtext)
            .map_err(|e| Error::Format(format!("manifest {}: {e}", mpath.display())))?;
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut input = BufReader::new(file);
        let mut header = [0u8; 8];
        read_exact_or_format(&mut input, &mut header, "header")?;
        if &header[..4] != MAGIC {
            return Err(Error::Format("bad magic, expected LFV1".into()));
        }
        let dim = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
        if dim != manifest.dim || dim == 0 {
            return Err(Error::Format(format!(
                "header dim {dim} does not match manifest dim {}",
                manifest.dim
            )));
        }
        Ok(EmbeddingReader {
            path: path.to_owned(),
            input,
            remaining: manifest.count,
            manifest,
            seen: HashSet::new(),
            done: false,
        })
    }

    pub fn manifest(&self) -> &EmbeddingManifest {
        &self.manifest
    }

    fn read_record(&mut self) -> Result<TokenMatrix> {
        let dim = self.manifest.dim;
        let mut len = [0u8; 2];
        read_exact_or_format(&mut self.input, &mut len, "record header")?;
        let mut id = vec![0u8; u16::from_le_bytes(len) as usize];
        read_exact_or_format(&mut self.input, &mut id, "passage id")?;
        let id = String::from_utf8(id).map_err(|_| Error::Format("passage id is not UTF-8".into()))?;
        let mut rows = [0u8; 4];
        read_exact_or_format(&mut self.input, &mut rows, "row count")?;
        let rows = u32::from_le_bytes(rows) as usize;
        if rows == 0 {
            return Err(Error::Format(format!("{id} has zero rows")));
        }
        let mut bytes = vec![0u8; rows * dim * 4];
        read_exact_or_format(&mut self.input, &mut bytes, "row data")?;
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if !self.seen.insert(id.clone()) {
            return Err(Error::Dup(id));
        }
        let m = TokenMatrix::new(id, dim, data)?;
        m.check_unit_rows(NORM_TOLERANCE)?;
        Ok(m)
    }

    fn check_eof(&mut self) -> Result<()> {
        let mut b = [0u8; 1];
        match self.input.read(&mut b) {
            Ok(0) => Ok(()),
            Ok(_) => Err(Error::Format(format!(
                "{}: trailing bytes after {} records",
                self.path.display(),
                self.manifest.count
            ))),
            Err(e) => Err(Error::io(&self.path, e)),
        }
    }
}

fn read_exact_or_format(r: &mut impl Read, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        ErrorKind::UnexpectedEof => Error::Format(format!("truncated data file while reading {what}")),
        _ => Error::Format(format!("read error in {what}: {e}")),
    })
}

impl Iterator for EmbeddingReader {
    type Item = Result<TokenMatrix>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        if self.remaining == 0 {
            self.done = true;
            return self.check_eof().err().map(Err);
        }
        self.remaining -= 1;
        let r = self.read_record();
        if r.is_err() {
            self.done = true;
        }
        Some(r)
    }
}

/// Read every matrix, in stored order.
pub fn read_embeddings(path: &Path) -> Result<(EmbeddingManifest, Vec<TokenMatrix>)> {
    let reader = EmbeddingReader::open(path)?;
    let manifest = reader.manifest().clone();
    let matrices = reader.collect::<Result<Vec<_>>>()?;
    Ok((manifest, matrices))
}

/// Unit vector for a single token. Identical `(token, seed)` pairs always map
/// to the same vector.
pub fn synthetic_token_vector(token: &str, dim: usize, seed: u64) -> Vec<f32> {
    let key = mix_seed(seed, token);
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-3 {
            return v.iter().map(|x| (x / norm) as f32).collect();
        }
    }
}

/// Deterministic stand-in encoder: one hashed unit vector per token.
pub fn synthetic_embed(passage_id: &str, tokens: &[String], dim: usize, seed: u64) -> TokenMatrix {
    assert!(dim >= 2, "synthetic embeddings need dim >= 2");
    let mut data = Vec::with_capacity(tokens.len() * dim);
    for t in tokens {
        data.extend(synthetic_token_vector(t, dim, seed));
    }
    TokenMatrix::new(passage_id, dim, data).expect("dim divides data")
}

/// Encoder tag recorded for synthetic embeddings, e.g. `synthetic-d32-s7`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyntheticEncoder {
    pub dim: usize,
    pub seed: u64,
}

impl SyntheticEncoder {
    pub fn tag(&self) -> String {
        format!("synthetic-d{}-s{}", self.dim, self.seed)
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        let rest = tag.strip_prefix("synthetic-d")?;
        let (dim, seed) = rest.split_once("-s")?;
        Some(SyntheticEncoder {
            dim: dim.parse().ok()?,
            seed: seed.parse().ok()?,
        })
    }

    pub fn embed(&self, passage_id: &str, tokens: &[String]) -> TokenMatrix {
        synthetic_embed(passage_id, tokens, self.dim, self.seed)
    }
}
