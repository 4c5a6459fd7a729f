//! On-disk index layout.
//!
//! ```text
//! meta.json       IndexMeta
//! centroids.bin   "LFCE" u32 k  u32 dim  f32[k*dim]
//! scales.bin      "LFSC" u32 dim f32[dim]
//! codes.bin       "LFCO" u64 n  u32 dim  { u32 centroid | u8[ceil(dim/8)] }[n]
//! postings.bin    "LFPO" u32 k  { u64 len | u32[len] }[k]
//! passages.jsonl  PassageEntry per line
//! raw.bin         "LFRW" u64 n  u32 dim  f32[n*dim]      (only with store_raw)
//! ```
//!
//! All binary integers and floats are little-endian.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::{code_bytes, Centroids, IndexMeta, PassageEntry, QuantizedIndex, Scales};
use crate::error::{Error, Result};

pub const INDEX_FILES: [&str; 6] = [
    "meta.json",
    "centroids.bin",
    "scales.bin",
    "codes.bin",
    "postings.bin",
    "passages.jsonl",
];
const RAW_FILE: &str = "raw.bin";

struct Writer {
    path: PathBuf,
    out: BufWriter<fs::File>,
}

impl Writer {
    fn create(path: PathBuf, magic: &[u8; 4]) -> Result<Self> {
        let f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = Writer {
            path,
            out: BufWriter::new(f),
        };
        w.bytes(magic)?;
        Ok(w)
    }

    fn bytes(&mut self, b: &[u8]) -> Result<()> {
        self.out.write_all(b).map_err(|e| Error::io(&self.path, e))
    }

    fn u32(&mut self, v: usize) -> Result<()> {
        let v = u32::try_from(v).map_err(|_| Error::Size(format!("{v} does not fit in u32")))?;
        self.bytes(&v.to_le_bytes())
    }

    fn u64(&mut self, v: usize) -> Result<()> {
        self.bytes(&(v as u64).to_le_bytes())
    }

    fn f32s(&mut self, v: &[f32]) -> Result<()> {
        for x in v {
            self.bytes(&x.to_le_bytes())?;
        }
        Ok(())
    }

    fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

struct Reader<'a> {
    name: &'a str,
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn new(name: &'a str, buf: &'a [u8], magic: &[u8; 4]) -> Result<Self> {
        let mut r = Reader { name, buf };
        if r.take(4)? != magic {
            return Err(Error::Format(format!("{name}: bad magic")));
        }
        Ok(r)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() < n {
            return Err(Error::Format(format!("{}: truncated", self.name)));
        }
        let (head, rest) = self.buf.split_at(n);
        self.buf = rest;
        Ok(head)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn u64(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().unwrap());
        usize::try_from(v).map_err(|_| Error::Format(format!("{}: length overflow", self.name)))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let bytes = self.take(n.checked_mul(4).ok_or_else(|| Error::Format("length overflow".into()))?)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn end(&self) -> Result<()> {
        if self.buf.is_empty() {
            Ok(())
        } else {
            Err(Error::Format(format!("{}: trailing bytes", self.name)))
        }
    }
}

fn write_files(index: &QuantizedIndex, dir: &Path) -> Result<()> {
    let dim = index.dim();
    let meta = serde_json::to_string_pretty(&index.meta).expect("meta serializes");
    let p = dir.join("meta.json");
    fs::write(&p, meta + "\n").map_err(|e| Error::io(&p, e))?;

    let mut w = Writer::create(dir.join("centroids.bin"), b"LFCE")?;
    w.u32(index.k())?;
    w.u32(dim)?;
    w.f32s(&index.centroids.data)?;
    w.finish()?;

    let mut w = Writer::create(dir.join("scales.bin"), b"LFSC")?;
    w.u32(dim)?;
    w.f32s(&index.scales.per_dim)?;
    w.finish()?;

    let nb = code_bytes(dim);
    let mut w = Writer::create(dir.join("codes.bin"), b"LFCO")?;
    w.u64(index.n_tokens())?;
    w.u32(dim)?;
    for (t, &c) in index.centroid_ids.iter().enumerate() {
        w.bytes(&c.to_le_bytes())?;
        w.bytes(&index.sign_bits[t * nb..(t + 1) * nb])?;
    }
    w.finish()?;

    let mut w = Writer::create(dir.join("postings.bin"), b"LFPO")?;
    w.u32(index.k())?;
    for list in &index.postings {
        w.u64(list.len())?;
        for &t in list {
            w.bytes(&t.to_le_bytes())?;
        }
    }
    w.finish()?;

    let p = dir.join("passages.jsonl");
    let mut out = String::new();
    for e in &index.passages {
        out.push_str(&serde_json::to_string(e).expect("entry serializes"));
        out.push('\n');
    }
    fs::write(&p, out).map_err(|e| Error::io(&p, e))?;

    if let Some(raw) = &index.raw {
        let mut w = Writer::create(dir.join(RAW_FILE), b"LFRW")?;
        w.u64(index.n_tokens())?;
        w.u32(dim)?;
        w.f32s(raw)?;
        w.finish()?;
    }
    Ok(())
}

fn staging_dir(dir: &Path) -> Result<PathBuf> {
    let name = dir
        .file_name()
        .ok_or_else(|| Error::Config(format!("index path {} has no file name", dir.display())))?;
    let mut staged = std::ffi::OsString::from(".");
    staged.push(name);
    staged.push(format!(".staging-{}", std::process::id()));
    Ok(dir.with_file_name(staged))
}

impl QuantizedIndex {
    /// Persist to `dir`, replacing any existing directory. Files are written
    /// to a sibling staging directory first, so a failure never leaves a
    /// partial index at `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let staging = staging_dir(dir)?;
        if staging.exists() {
            fs::remove_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
        }
        fs::create_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
        if let Err(e) = write_files(self, &staging) {
            let _ = fs::remove_dir_all(&staging);
            return Err(e);
        }
        if dir.exists() {
            fs::remove_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::rename(&staging, dir).map_err(|e| Error::io(dir, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let read = |name: &str| {
            let p = dir.join(name);
            fs::read(&p).map_err(|e| Error::io(&p, e))
        };
        let meta_bytes = read("meta.json")?;
        let meta: IndexMeta = serde_json::from_slice(&meta_bytes)
            .map_err(|e| Error::Format(format!("meta.json: {e}")))?;
        let dim = meta.dim;
        if dim == 0 {
            return Err(Error::Format("meta.json: dim is zero".into()));
        }

        let buf = read("centroids.bin")?;
        let mut r = Reader::new("centroids.bin", &buf, b"LFCE")?;
        let (k, cdim) = (r.u32()?, r.u32()?);
        if cdim != dim || k != meta.k {
            return Err(Error::Format("centroids.bin disagrees with meta.json".into()));
        }
        let centroids = Centroids::new(dim, r.f32s(k * dim)?)?;
        r.end()?;

        let buf = read("scales.bin")?;
        let mut r = Reader::new("scales.bin", &buf, b"LFSC")?;
        if r.u32()? != dim {
            return Err(Error::Format("scales.bin disagrees with meta.json".into()));
        }
        let scales = Scales { per_dim: r.f32s(dim)? };
        r.end()?;

        let nb = code_bytes(dim);
        let buf = read("codes.bin")?;
        let mut r = Reader::new("codes.bin", &buf, b"LFCO")?;
        let n = r.u64()?;
        if r.u32()? != dim || n != meta.tokens_indexed {
            return Err(Error::Format("codes.bin disagrees with meta.json".into()));
        }
        let mut centroid_ids = Vec::with_capacity(n);
        let mut sign_bits = Vec::with_capacity(n * nb);
        for _ in 0..n {
            let c = r.u32()?;
            if c >= k {
                return Err(Error::Format(format!("codes.bin: centroid id {c} >= k")));
            }
            centroid_ids.push(c as u32);
            sign_bits.extend_from_slice(r.take(nb)?);
        }
        r.end()?;

        let buf = read("postings.bin")?;
        let mut r = Reader::new("postings.bin", &buf, b"LFPO")?;
        if r.u32()? != k {
            return Err(Error::Format("postings.bin disagrees with meta.json".into()));
        }
        let mut postings = Vec::with_capacity(k);
        for _ in 0..k {
            let len = r.u64()?;
            if len > n {
                return Err(Error::Format("postings.bin: list longer than token count".into()));
            }
            postings.push((0..len).map(|_| r.u32().map(|t| t as u32)).collect::<Result<Vec<_>>>()?);
        }
        r.end()?;

        let text = read("passages.jsonl")?;
        let text = String::from_utf8(text).map_err(|_| Error::Format("passages.jsonl is not UTF-8".into()))?;
        let passages = text
            .lines()
            .enumerate()
            .map(|(i, l)| {
                serde_json::from_str::<PassageEntry>(l).map_err(|e| Error::parse("passages.jsonl", i + 1, e.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        if passages.len() != meta.n_passages {
            return Err(Error::Format("passages.jsonl disagrees with meta.json".into()));
        }

        let raw = if meta.has_raw {
            let buf = read(RAW_FILE)?;
            let mut r = Reader::new(RAW_FILE, &buf, b"LFRW")?;
            if r.u64()? != n || r.u32()? != dim {
                return Err(Error::Format("raw.bin disagrees with meta.json".into()));
            }
            let v = r.f32s(n * dim)?;
            r.end()?;
            Some(v)
        } else {
            None
        };

        QuantizedIndex::from_parts(meta, centroids, scales, centroid_ids, sign_bits, postings, passages, raw)
    }
}
