//! Binary and TSV persistence for corpora, co-occurrence stores and dense
//! matrices.
//!
//! Every binary file starts with a 4-byte magic and a version byte; all
//! integers and floats are little-endian, and variable-length sequences are
//! prefixed with their `u64` length.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::graph::{CooccurrenceStore, WalkCorpus};

pub const FORMAT_VERSION: u8 = 1;
pub const CORPUS_MAGIC: [u8; 4] = *b"MNWK";
pub const COOC_MAGIC: [u8; 4] = *b"MNCO";
pub const MATRIX_MAGIC: [u8; 4] = *b"MNMX";

pub(crate) struct Encoder<W: Write> {
    inner: W,
}

impl<W: Write> Encoder<W> {
    pub(crate) fn new(mut inner: W, magic: [u8; 4]) -> std::io::Result<Self> {
        inner.write_all(&magic)?;
        inner.write_all(&[FORMAT_VERSION])?;
        Ok(Encoder { inner })
    }

    pub(crate) fn u8(&mut self, v: u8) -> std::io::Result<()> {
        self.inner.write_all(&[v])
    }

    pub(crate) fn u32(&mut self, v: u32) -> std::io::Result<()> {
        self.inner.write_all(&v.to_le_bytes())
    }

    pub(crate) fn u64(&mut self, v: u64) -> std::io::Result<()> {
        self.inner.write_all(&v.to_le_bytes())
    }

    pub(crate) fn f64(&mut self, v: f64) -> std::io::Result<()> {
        self.inner.write_all(&v.to_le_bytes())
    }

    pub(crate) fn f64s<'a>(
        &mut self,
        vs: impl IntoIterator<Item = &'a f64>,
    ) -> std::io::Result<()> {
        for v in vs {
            self.f64(*v)?;
        }
        Ok(())
    }

    pub(crate) fn finish(mut self) -> std::io::Result<W> {
        self.inner.flush()?;
        Ok(self.inner)
    }
}

pub(crate) struct Decoder<R: Read> {
    inner: R,
}

impl<R: Read> Decoder<R> {
    pub(crate) fn new(mut inner: R, magic: [u8; 4]) -> Result<Self> {
        let mut head = [0u8; 5];
        inner
            .read_exact(&mut head)
            .map_err(|_| Error::Format("truncated header".into()))?;
        if head[..4] != magic {
            return Err(Error::Format(format!(
                "bad magic {:?}, expected {:?}",
                &head[..4],
                magic
            )));
        }
        if head[4] != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported version {}", head[4])));
        }
        Ok(Decoder { inner })
    }

    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner
            .read_exact(&mut buf)
            .map_err(|_| Error::Format("unexpected end of data".into()))?;
        Ok(buf)
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        Ok(self.bytes::<1>()?[0])
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }

    pub(crate) fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Format("length overflows usize".into()))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }

    pub(crate) fn matrix(&mut self, rows: usize, cols: usize) -> Result<Array2<f64>> {
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            data.push(self.f64()?);
        }
        Array2::from_shape_vec((rows, cols), data).map_err(|e| Error::Format(e.to_string()))
    }

    pub(crate) fn expect_end(mut self) -> Result<()> {
        let mut probe = [0u8; 1];
        match self.inner.read(&mut probe) {
            Ok(0) => Ok(()),
            Ok(_) => Err(Error::Format("trailing bytes".into())),
            Err(e) => Err(Error::Format(e.to_string())),
        }
    }
}

pub(crate) fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

pub(crate) fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

pub fn encode_corpus<W: Write>(corpus: &WalkCorpus, out: W) -> std::io::Result<W> {
    let mut enc = Encoder::new(out, CORPUS_MAGIC)?;
    enc.u64(corpus.walk_length as u64)?;
    enc.u64(corpus.walks_per_node as u64)?;
    enc.u64(corpus.seed)?;
    enc.u64(corpus.node_count as u64)?;
    enc.u64(corpus.walks.len() as u64)?;
    for walk in &corpus.walks {
        enc.u64(walk.len() as u64)?;
        for &node in walk {
            enc.u32(node)?;
        }
    }
    enc.finish()
}

pub fn decode_corpus<R: Read>(input: R) -> Result<WalkCorpus> {
    let mut dec = Decoder::new(input, CORPUS_MAGIC)?;
    let walk_length = dec.usize()?;
    let walks_per_node = dec.usize()?;
    let seed = dec.u64()?;
    let node_count = dec.usize()?;
    let count = dec.usize()?;
    let mut walks = Vec::with_capacity(count.min(1 << 24));
    for _ in 0..count {
        let len = dec.usize()?;
        let mut walk = Vec::with_capacity(len.min(1 << 20));
        for _ in 0..len {
            walk.push(dec.u32()?);
        }
        walks.push(walk);
    }
    dec.expect_end()?;
    Ok(WalkCorpus {
        walks,
        walk_length,
        walks_per_node,
        seed,
        node_count,
    })
}

pub fn encode_cooccurrence<W: Write>(store: &CooccurrenceStore, out: W) -> std::io::Result<W> {
    let mut enc = Encoder::new(out, COOC_MAGIC)?;
    enc.u64(store.node_count() as u64)?;
    enc.u8(store.is_symmetric() as u8)?;
    enc.u64(store.len() as u64)?;
    for &(i, j, w) in store.entries() {
        enc.u32(i)?;
        enc.u32(j)?;
        enc.f64(w)?;
    }
    enc.finish()
}

pub fn decode_cooccurrence<R: Read>(input: R) -> Result<CooccurrenceStore> {
    let mut dec = Decoder::new(input, COOC_MAGIC)?;
    let n = dec.usize()?;
    let symmetric = match dec.u8()? {
        0 => false,
        1 => true,
        other => return Err(Error::Format(format!("bad symmetry flag {other}"))),
    };
    let count = dec.usize()?;
    let mut entries = Vec::with_capacity(count.min(1 << 24));
    for _ in 0..count {
        entries.push((dec.u32()?, dec.u32()?, dec.f64()?));
    }
    dec.expect_end()?;
    if symmetric {
        CooccurrenceStore::from_pairs(n, entries)
    } else {
        CooccurrenceStore::from_ordered_pairs(n, entries)
    }
}

pub fn encode_matrix<W: Write>(m: ArrayView2<'_, f64>, out: W) -> std::io::Result<W> {
    let mut enc = Encoder::new(out, MATRIX_MAGIC)?;
    enc.u64(m.nrows() as u64)?;
    enc.u64(m.ncols() as u64)?;
    enc.f64s(m.iter())?;
    enc.finish()
}

pub fn decode_matrix<R: Read>(input: R) -> Result<Array2<f64>> {
    let mut dec = Decoder::new(input, MATRIX_MAGIC)?;
    let rows = dec.usize()?;
    let cols = dec.usize()?;
    let m = dec.matrix(rows, cols)?;
    dec.expect_end()?;
    Ok(m)
}

pub fn write_corpus(path: &Path, corpus: &WalkCorpus) -> Result<()> {
    encode_corpus(corpus, create(path)?).map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_corpus(path: &Path) -> Result<WalkCorpus> {
    decode_corpus(open(path)?)
}

pub fn write_cooccurrence(path: &Path, store: &CooccurrenceStore) -> Result<()> {
    encode_cooccurrence(store, create(path)?).map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_cooccurrence(path: &Path) -> Result<CooccurrenceStore> {
    decode_cooccurrence(open(path)?)
}

pub fn write_matrix(path: &Path, m: ArrayView2<'_, f64>) -> Result<()> {
    encode_matrix(m, create(path)?).map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_matrix(path: &Path) -> Result<Array2<f64>> {
    decode_matrix(open(path)?)
}

/// Writes one row per line, tab separated. Floats use the shortest
/// representation that round-trips exactly.
pub fn write_matrix_tsv(path: &Path, m: ArrayView2<'_, f64>) -> Result<()> {
    let mut out = create(path)?;
    let mut write = || -> std::io::Result<()> {
        for row in m.rows() {
            let mut first = true;
            for v in row {
                if !first {
                    out.write_all(b"\t")?;
                }
                first = false;
                write!(out, "{v}")?;
            }
            out.write_all(b"\n")?;
        }
        out.flush()
    };
    write().map_err(|e| Error::io(path, e))
}

pub fn read_matrix_tsv(path: &Path) -> Result<Array2<f64>> {
    let reader = open(path)?;
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let before = data.len();
        for field in line.split('\t') {
            data.push(
                field
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| Error::parse(path, lineno + 1, format!("bad number {field:?}")))?,
            );
        }
        let width = data.len() - before;
        if *cols.get_or_insert(width) != width {
            return Err(Error::parse(path, lineno + 1, "ragged row"));
        }
        rows += 1;
    }
    Array2::from_shape_vec((rows, cols.unwrap_or(0)), data)
        .map_err(|e| Error::Format(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn header_is_checked() {
        let bytes = encode_matrix(array![[1.0, 2.0]].view(), Vec::new()).unwrap();
        assert_eq!(&bytes[..4], b"MNMX");
        assert_eq!(bytes[4], FORMAT_VERSION);
        assert!(matches!(decode_corpus(&bytes[..]), Err(Error::Format(_))));

        let mut wrong_version = bytes.clone();
        wrong_version[4] = 9;
        assert!(decode_matrix(&wrong_version[..]).is_err());
        assert!(decode_matrix(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn tsv_round_trip_is_exact() {
        let m = array![[0.1, -1e-300], [std::f64::consts::PI, 12345.678]];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.tsv");
        write_matrix_tsv(&path, m.view()).unwrap();
        assert_eq!(read_matrix_tsv(&path).unwrap(), m);
    }

    proptest! {
        #[test]
        fn corpus_round_trip(
            walks in proptest::collection::vec(proptest::collection::vec(0u32..50, 0..8), 0..10),
            seed in any::<u64>(),
        ) {
            let corpus = WalkCorpus { walks, walk_length: 8, walks_per_node: 3, seed, node_count: 50 };
            let bytes = encode_corpus(&corpus, Vec::new()).unwrap();
            prop_assert_eq!(decode_corpus(&bytes[..]).unwrap(), corpus);
        }

        #[test]
        fn cooccurrence_round_trip(
            pairs in proptest::collection::vec((0u32..20, 0u32..20, 0.01f64..10.0), 0..30),
        ) {
            let store = CooccurrenceStore::from_pairs(20, pairs).unwrap();
            let bytes = encode_cooccurrence(&store, Vec::new()).unwrap();
            prop_assert_eq!(decode_cooccurrence(&bytes[..]).unwrap(), store);
        }
    }
}
