use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::Array2;
use rayon::prelude::*;

use super::{layout_hash, vocab_dims, Accumulator, Encoding, Representation};
use crate::error::{Error, Result};
use crate::manifest::DatasetManifest;
use crate::store::FeatureStream;
use crate::vocab::{VocabScheme, VocabularySet};

/// Encodings of every video in a manifest, in manifest order.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedDataset {
    pub method: Representation,
    pub scheme: VocabScheme,
    pub k: usize,
    pub num_classes: usize,
    pub layout_hash: String,
    pub video_ids: Vec<String>,
    pub labels: Vec<usize>,
    pub empty: Vec<bool>,
    /// `videos × D`.
    pub matrix: Array2<f64>,
}

/// Streams each video's features through the encoder. Videos are encoded in
/// parallel; rows follow manifest order.
pub fn encode_dataset(
    manifest: &DatasetManifest,
    vocab: &VocabularySet,
    method: Representation,
) -> Result<EncodedDataset> {
    if vocab.layout != manifest.layout {
        return Err(Error::InvalidArgument(format!(
            "vocabulary layout {} does not match manifest layout {}",
            vocab.layout, manifest.layout
        )));
    }
    // validates compatibility once up front
    Accumulator::new(vocab, method)?;
    let dims = vocab_dims(vocab, method);
    let encodings: Vec<Encoding> = manifest
        .videos
        .par_iter()
        .map(|entry| {
            let run = || -> Result<Encoding> {
                let mut acc = Accumulator::new(vocab, method)?;
                let mut stream = FeatureStream::open(entry, &manifest.layout)?;
                let mut buf = vec![0f32; manifest.layout.total_dims()];
                while stream.read_into(&mut buf)? {
                    acc.push(&buf)?;
                }
                Ok(acc.finish())
            };
            run().map_err(|e| e.in_video(&entry.video_id))
        })
        .collect::<Result<_>>()?;

    let mut matrix = Array2::<f64>::zeros((encodings.len(), dims));
    for (mut row, e) in matrix.outer_iter_mut().zip(&encodings) {
        debug_assert_eq!(e.dims(), dims);
        row.assign(&ndarray::ArrayView1::from(&e.vector[..]));
    }
    let empty: Vec<bool> = encodings.iter().map(|e| e.empty).collect();
    let n_empty = empty.iter().filter(|&&e| e).count();
    if n_empty > 0 {
        log::warn!("{n_empty} videos encoded as empty ({method})");
    }
    Ok(EncodedDataset {
        method,
        scheme: vocab.scheme,
        k: vocab.k,
        num_classes: manifest.num_classes(),
        layout_hash: layout_hash(&vocab.layout),
        video_ids: manifest.videos.iter().map(|v| v.video_id.clone()).collect(),
        labels: manifest.labels(),
        empty,
        matrix,
    })
}

const HEADER: &str = "AVENC 1";

impl EncodedDataset {
    pub fn dims(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn len(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.nrows() == 0
    }

    /// Text header (one `key value` pair per line, then one `row` line per
    /// video, then `end`) followed by the matrix as little-endian `f64`,
    /// row-major.
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<W> {
        writeln!(w, "{HEADER}")?;
        writeln!(w, "method {}", self.method.name())?;
        writeln!(w, "scheme {}", self.scheme.tag())?;
        writeln!(w, "k {}", self.k)?;
        writeln!(w, "classes {}", self.num_classes)?;
        writeln!(w, "d {}", self.dims())?;
        writeln!(w, "rows {}", self.len())?;
        writeln!(w, "layout {}", self.layout_hash)?;
        for ((id, &label), &empty) in self.video_ids.iter().zip(&self.labels).zip(&self.empty) {
            writeln!(w, "row\t{id}\t{label}\t{}", empty as u8)?;
        }
        writeln!(w, "end")?;
        for &v in self.matrix.iter() {
            w.write_f64::<LittleEndian>(v)?;
        }
        Ok(w)
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        let mut r = BufReader::new(r);
        let mut line = String::new();
        let fmt = |m: String| Error::Format(m);
        let next_line = |r: &mut BufReader<R>, line: &mut String| -> Result<()> {
            line.clear();
            if r.read_line(line).map_err(|e| fmt(e.to_string()))? == 0 {
                return Err(fmt("unexpected end of header".into()));
            }
            let trimmed = line.trim_end_matches('\n').to_string();
            *line = trimmed;
            Ok(())
        };
        next_line(&mut r, &mut line)?;
        if line != HEADER {
            return Err(fmt(format!("not an encoding file (header {line:?})")));
        }
        let mut method = None;
        let mut scheme = None;
        let (mut k, mut classes, mut d, mut rows) = (None, None, None, None);
        let mut layout = String::new();
        let mut video_ids = Vec::new();
        let mut labels = Vec::new();
        let mut empty = Vec::new();
        loop {
            next_line(&mut r, &mut line)?;
            if line == "end" {
                break;
            }
            if let Some(rest) = line.strip_prefix("row\t") {
                let cols: Vec<&str> = rest.split('\t').collect();
                if cols.len() != 3 {
                    return Err(fmt(format!("bad row line {line:?}")));
                }
                video_ids.push(cols[0].to_string());
                labels.push(cols[1].parse().map_err(|_| fmt("bad label".into()))?);
                empty.push(cols[2] == "1");
                continue;
            }
            let (key, value) = line
                .split_once(' ')
                .ok_or_else(|| fmt(format!("bad header line {line:?}")))?;
            let num = || value.parse::<usize>().map_err(|_| fmt(format!("bad {key} value")));
            match key {
                "method" => method = Some(value.parse::<Representation>()?),
                "scheme" => scheme = Some(value.parse::<VocabScheme>()?),
                "k" => k = Some(num()?),
                "classes" => classes = Some(num()?),
                "d" => d = Some(num()?),
                "rows" => rows = Some(num()?),
                "layout" => layout = value.to_string(),
                _ => return Err(fmt(format!("unknown header key {key:?}"))),
            }
        }
        let missing = |k: &str| fmt(format!("header missing {k}"));
        let d = d.ok_or_else(|| missing("d"))?;
        let rows = rows.ok_or_else(|| missing("rows"))?;
        if video_ids.len() != rows {
            return Err(fmt(format!("{} row lines for {rows} rows", video_ids.len())));
        }
        let mut data = vec![0f64; rows * d];
        r.read_f64_into::<LittleEndian>(&mut data)
            .map_err(|e| fmt(format!("matrix body: {e}")))?;
        let mut rest = [0u8; 1];
        if r.read(&mut rest).map_err(|e| fmt(e.to_string()))? != 0 {
            return Err(fmt("trailing bytes after matrix".into()));
        }
        Ok(Self {
            method: method.ok_or_else(|| missing("method"))?,
            scheme: scheme.ok_or_else(|| missing("scheme"))?,
            k: k.ok_or_else(|| missing("k"))?,
            num_classes: classes.ok_or_else(|| missing("classes"))?,
            layout_hash: layout,
            video_ids,
            labels,
            empty,
            matrix: Array2::from_shape_vec((rows, d), data).expect("sized above"),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = self.write_to(BufWriter::new(file)).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(file)
    }

    /// Rows at `indices`, plus their labels.
    pub fn subset(&self, indices: &[usize]) -> (Array2<f64>, Vec<usize>) {
        (
            self.matrix.select(ndarray::Axis(0), indices),
            indices.iter().map(|&i| self.labels[i]).collect(),
        )
    }
}
