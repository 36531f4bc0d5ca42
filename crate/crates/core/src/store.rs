//! Headerless per-video feature files: records stored back to back as
//! little-endian `f32`, `total_dims` values per record.

use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{ByteOrder, LittleEndian, WriteBytesExt};

use crate::error::{Error, Result};
use crate::layout::ComponentLayout;
use crate::manifest::VideoEntry;

/// Writes `records` to `path` and returns the manifest entry describing the
/// new file. Every record must have `layout.total_dims()` finite values.
pub fn write_features<I, R>(
    video_id: &str,
    class_label: usize,
    path: &Path,
    layout: &ComponentLayout,
    records: I,
) -> Result<VideoEntry>
where
    I: IntoIterator<Item = R>,
    R: AsRef<[f32]>,
{
    let dims = layout.total_dims();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut count = 0usize;
    for rec in records {
        let rec = rec.as_ref();
        if rec.len() != dims {
            return Err(Error::DimensionMismatch {
                expected: dims,
                actual: rec.len(),
            });
        }
        for (d, &v) in rec.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite { record: count, dim: d });
            }
            w.write_f32::<LittleEndian>(v).map_err(|e| Error::io(path, e))?;
        }
        count += 1;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(VideoEntry {
        video_id: video_id.to_string(),
        class_label,
        feature_count: count,
        feature_path: path.to_path_buf(),
    })
}

/// Number of whole records in the file at `path`, failing on a partial tail.
pub fn record_count(path: &Path, layout: &ComponentLayout) -> Result<usize> {
    let len = std::fs::metadata(path).map_err(|e| Error::io(path, e))?.len();
    let rb = layout.record_bytes() as u64;
    if len % rb != 0 {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            len,
            record: rb as usize,
        });
    }
    Ok((len / rb) as usize)
}

/// Sequential reader over one feature file. Holds one record's worth of
/// bytes plus the `BufReader` buffer, whatever the file size.
pub struct FeatureStream {
    path: PathBuf,
    reader: BufReader<File>,
    dims: usize,
    remaining: usize,
    index: usize,
    bytes: Vec<u8>,
}

impl FeatureStream {
    /// Opens the file for `entry`, checking its length against the layout
    /// and the declared feature count.
    pub fn open(entry: &VideoEntry, layout: &ComponentLayout) -> Result<Self> {
        let n = record_count(&entry.feature_path, layout)?;
        if n != entry.feature_count {
            return Err(Error::CountMismatch {
                path: entry.feature_path.clone(),
                declared: entry.feature_count,
                actual: n,
            });
        }
        Self::open_path(&entry.feature_path, layout)
    }

    /// Opens a raw feature file without a manifest entry.
    pub fn open_path(path: &Path, layout: &ComponentLayout) -> Result<Self> {
        let n = record_count(path, layout)?;
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            reader: BufReader::with_capacity(1 << 16, file),
            dims: layout.total_dims(),
            remaining: n,
            index: 0,
            bytes: vec![0u8; layout.record_bytes()],
        })
    }

    pub fn remaining(&self) -> usize {
        self.remaining
    }

    /// Reads the next record into `out`. Returns `Ok(false)` at end of file.
    pub fn read_into(&mut self, out: &mut [f32]) -> Result<bool> {
        if out.len() != self.dims {
            return Err(Error::DimensionMismatch {
                expected: self.dims,
                actual: out.len(),
            });
        }
        if self.remaining == 0 {
            return Ok(false);
        }
        self.reader.read_exact(&mut self.bytes).map_err(|e| {
            if e.kind() == ErrorKind::UnexpectedEof {
                Error::Truncated {
                    path: self.path.clone(),
                    len: (self.index * self.bytes.len()) as u64,
                    record: self.bytes.len(),
                }
            } else {
                Error::io(&self.path, e)
            }
        })?;
        LittleEndian::read_f32_into(&self.bytes, out);
        if let Some(d) = out.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                record: self.index,
                dim: d,
            });
        }
        self.index += 1;
        self.remaining -= 1;
        Ok(true)
    }

    /// Skips `n` records without decoding them.
    pub fn skip_records(&mut self, n: usize) -> Result<()> {
        let n = n.min(self.remaining);
        let bytes = (n * self.bytes.len()) as u64;
        let copied = std::io::copy(&mut (&mut self.reader).take(bytes), &mut std::io::sink())
            .map_err(|e| Error::io(&self.path, e))?;
        if copied != bytes {
            return Err(Error::Truncated {
                path: self.path.clone(),
                len: copied,
                record: self.bytes.len(),
            });
        }
        self.index += n;
        self.remaining -= n;
        Ok(())
    }
}

impl Iterator for FeatureStream {
    type Item = Result<Vec<f32>>;

    fn next(&mut self) -> Option<Self::Item> {
        let mut rec = vec![0f32; self.dims];
        match self.read_into(&mut rec) {
            Ok(true) => Some(Ok(rec)),
            Ok(false) => None,
            Err(e) => {
                self.remaining = 0;
                Some(Err(e))
            }
        }
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        (self.remaining, Some(self.remaining))
    }
}

/// Streams the records of `entry` in file order.
pub fn stream_features(entry: &VideoEntry, layout: &ComponentLayout) -> Result<FeatureStream> {
    FeatureStream::open(entry, layout)
}

/// Reads every record of `entry` into one row-major buffer.
pub fn read_all(entry: &VideoEntry, layout: &ComponentLayout) -> Result<Vec<f32>> {
    let mut s = FeatureStream::open(entry, layout)?;
    let dims = layout.total_dims();
    let mut out = vec![0f32; s.remaining() * dims];
    for chunk in out.chunks_exact_mut(dims) {
        s.read_into(chunk)?;
    }
    Ok(out)
}

/// Reads the records at the given strictly increasing indices, appending
/// them to `out`.
pub fn read_selected(
    entry: &VideoEntry,
    layout: &ComponentLayout,
    indices: &[usize],
    out: &mut Vec<f32>,
) -> Result<()> {
    let mut s = FeatureStream::open(entry, layout)?;
    let dims = layout.total_dims();
    let mut pos = 0usize;
    for &idx in indices {
        if idx < pos || idx >= entry.feature_count {
            return Err(Error::InvalidArgument(format!(
                "record index {idx} out of order or out of range"
            )));
        }
        s.skip_records(idx - pos)?;
        let start = out.len();
        out.resize(start + dims, 0.0);
        s.read_into(&mut out[start..])?;
        pos = idx + 1;
    }
    Ok(())
}
