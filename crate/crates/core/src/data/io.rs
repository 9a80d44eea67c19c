//! Binary model and dataset files, headerless CSV, and grayscale images.
//!
//! Binary layout (all little-endian):
//!
//! ```text
//! model:   "GRBM" u16:version u32:M u32:N f64:σ f64[M]:b f64[N]:c f64[M·N]:W u32:crc
//! dataset: "GDAT" u16:version u32:L u32:M f64[L·M]:rows u32:crc
//! ```
//!
//! Matrices are row-major and the CRC-32 covers the `f64` payload.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::model::{DataBatch, GrbmParams};

pub const MODEL_MAGIC: &[u8; 4] = b"GRBM";
pub const DATASET_MAGIC: &[u8; 4] = b"GDAT";
pub const FORMAT_VERSION: u16 = 1;

const HEADER_LEN: usize = 4 + 2 + 4 + 4;

fn encode(magic: &[u8; 4], a: u32, b: u32, payload: impl Iterator<Item = f64>) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN);
    out.extend_from_slice(magic);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&a.to_le_bytes());
    out.extend_from_slice(&b.to_le_bytes());
    for v in payload {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let crc = crc32fast::hash(&out[HEADER_LEN..]);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

/// Validates the header and checksum and returns the two dimensions and the
/// decoded payload. `payload_len` maps the dimensions to a count of doubles.
fn decode(
    bytes: &[u8],
    magic: &[u8; 4],
    payload_len: impl Fn(u32, u32) -> Option<usize>,
) -> Result<(u32, u32, Vec<f64>)> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::MalformedHeader(format!(
            "file has {} bytes, header needs {HEADER_LEN}",
            bytes.len()
        )));
    }
    if &bytes[..4] != magic {
        return Err(Error::MalformedHeader(format!(
            "expected magic {:?}, found {:?}",
            String::from_utf8_lossy(magic),
            String::from_utf8_lossy(&bytes[..4])
        )));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FORMAT_VERSION {
        return Err(Error::MalformedHeader(format!(
            "unsupported format version {version}"
        )));
    }
    let a = u32::from_le_bytes(bytes[6..10].try_into().unwrap());
    let b = u32::from_le_bytes(bytes[10..14].try_into().unwrap());
    let count = payload_len(a, b)
        .ok_or_else(|| Error::MalformedHeader(format!("invalid dimensions {a} × {b}")))?;
    let expected = count
        .checked_mul(8)
        .and_then(|n| n.checked_add(HEADER_LEN + 4))
        .ok_or_else(|| Error::MalformedHeader(format!("dimensions {a} × {b} overflow")))?;
    if bytes.len() < expected {
        return Err(Error::TruncatedPayload {
            expected,
            found: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(Error::MalformedHeader(format!(
            "{} trailing bytes after checksum",
            bytes.len() - expected
        )));
    }
    let payload = &bytes[HEADER_LEN..expected - 4];
    let stored = u32::from_le_bytes(bytes[expected - 4..].try_into().unwrap());
    let computed = crc32fast::hash(payload);
    if stored != computed {
        return Err(Error::ChecksumMismatch { stored, computed });
    }
    let values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((a, b, values))
}

fn dim_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::InvalidData(format!("{what} {v} exceeds the file format")))
}

pub fn model_to_bytes(p: &GrbmParams) -> Result<Vec<u8>> {
    let m = dim_u32(p.n_visible(), "visible count")?;
    let n = dim_u32(p.n_hidden(), "hidden count")?;
    let payload = std::iter::once(p.sigma)
        .chain(p.visible_bias.iter().copied())
        .chain(p.hidden_bias.iter().copied())
        .chain(p.weights.iter().copied());
    Ok(encode(MODEL_MAGIC, m, n, payload))
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<GrbmParams> {
    let (m, n, v) = decode(bytes, MODEL_MAGIC, |m, n| {
        let (m, n) = (m as usize, n as usize);
        (m > 0 && n > 0).then(|| m.checked_mul(n)?.checked_add(m + n + 1))?
    })?;
    let (m, n) = (m as usize, n as usize);
    let sigma = v[0];
    let b = Array1::from(v[1..1 + m].to_vec());
    let c = Array1::from(v[1 + m..1 + m + n].to_vec());
    let w = Array2::from_shape_vec((m, n), v[1 + m + n..].to_vec()).expect("length checked");
    GrbmParams::new(w, b, c, sigma)
}

pub fn batch_to_bytes(d: &DataBatch) -> Result<Vec<u8>> {
    let l = dim_u32(d.len(), "sample count")?;
    let m = dim_u32(d.dim(), "dimension")?;
    Ok(encode(DATASET_MAGIC, l, m, d.samples().iter().copied()))
}

pub fn batch_from_bytes(bytes: &[u8]) -> Result<DataBatch> {
    let (l, m, v) = decode(bytes, DATASET_MAGIC, |l, m| {
        (l > 0 && m > 0).then(|| (l as usize).checked_mul(m as usize))?
    })?;
    DataBatch::new(Array2::from_shape_vec((l as usize, m as usize), v).expect("length checked"))
}

fn read_all(path: &Path) -> Result<Vec<u8>> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    Ok(bytes)
}

fn write_all(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(bytes)?;
    w.flush()?;
    Ok(())
}

pub fn save_model(p: &GrbmParams, path: impl AsRef<Path>) -> Result<()> {
    write_all(path.as_ref(), &model_to_bytes(p)?)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<GrbmParams> {
    model_from_bytes(&read_all(path.as_ref())?)
}

pub fn save_batch(d: &DataBatch, path: impl AsRef<Path>) -> Result<()> {
    write_all(path.as_ref(), &batch_to_bytes(d)?)
}

pub fn load_batch(path: impl AsRef<Path>) -> Result<DataBatch> {
    batch_from_bytes(&read_all(path.as_ref())?)
}

/// Headerless CSV, one sample per line. Values are written with the
/// shortest representation that parses back to the same double.
pub fn write_csv<W: Write>(d: &DataBatch, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    for row in d.samples().rows() {
        w.write_record(row.iter().map(|v| v.to_string()))
            .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<DataBatch> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut values = Vec::new();
    let mut width = None;
    let mut rows = 0usize;
    for (line, record) in r.records().enumerate() {
        let record = record.map_err(csv_error)?;
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if *width.get_or_insert(record.len()) != record.len() {
            return Err(Error::InvalidData(format!(
                "line {} has {} fields, expected {}",
                line + 1,
                record.len(),
                width.unwrap()
            )));
        }
        for field in record.iter() {
            let v: f64 = field.parse().map_err(|_| {
                Error::InvalidData(format!(
                    "line {}: cannot parse {field:?} as a number",
                    line + 1
                ))
            })?;
            values.push(v);
        }
        rows += 1;
    }
    let width = width.ok_or_else(|| Error::InvalidData("CSV input has no rows".into()))?;
    DataBatch::new(Array2::from_shape_vec((rows, width), values).expect("rectangular"))
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::InvalidData(format!("CSV: {other:?}")),
    }
}

pub fn save_csv(d: &DataBatch, path: impl AsRef<Path>) -> Result<()> {
    write_csv(d, BufWriter::new(File::create(path)?))
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<DataBatch> {
    read_csv(BufReader::new(File::open(path)?))
}

fn is_csv(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

/// Dataset in CSV form for `.csv` paths and the binary format otherwise.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<DataBatch> {
    let path = path.as_ref();
    if is_csv(path) {
        load_csv(path)
    } else {
        load_batch(path)
    }
}

pub fn save_dataset(d: &DataBatch, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if is_csv(path) {
        save_csv(d, path)
    } else {
        save_batch(d, path)
    }
}

/// Grayscale image as a matrix of intensities in `[0, 1]`. PGM files (8 or
/// 16 bit) are decoded; any other file is read as a whitespace-separated
/// matrix of numbers, one image row per line, used as-is.
pub fn load_image(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    let path = path.as_ref();
    let is_pgm = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
    if is_pgm {
        let img = image::ImageReader::open(path)?
            .with_guessed_format()?
            .decode()
            .map_err(|e| Error::InvalidData(format!("{}: {e}", path.display())))?
            .into_luma16();
        let (w, h) = img.dimensions();
        let scale = f64::from(u16::MAX);
        Ok(Array2::from_shape_fn((h as usize, w as usize), |(r, c)| {
            f64::from(img.get_pixel(c as u32, r as u32)[0]) / scale
        }))
    } else {
        let text = std::fs::read_to_string(path)?;
        parse_text_matrix(&text)
    }
}

pub fn parse_text_matrix(text: &str) -> Result<Array2<f64>> {
    let mut values = Vec::new();
    let mut width = None;
    let mut rows = 0;
    for (i, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if *width.get_or_insert(fields.len()) != fields.len() {
            return Err(Error::InvalidData(format!(
                "row {} has a different width",
                i + 1
            )));
        }
        for f in fields {
            values.push(
                f.parse::<f64>().map_err(|_| {
                    Error::InvalidData(format!("row {}: cannot parse {f:?}", i + 1))
                })?,
            );
        }
        rows += 1;
    }
    let width = width.ok_or_else(|| Error::InvalidData("empty matrix".into()))?;
    Ok(Array2::from_shape_vec((rows, width), values).expect("rectangular"))
}

/// Writes an 8-bit binary PGM, mapping `[lo, hi]` linearly to `0..=255`.
pub fn save_pgm(img: &Array2<f64>, lo: f64, hi: f64, path: impl AsRef<Path>) -> Result<()> {
    let (h, w) = img.dim();
    let span = if hi > lo { hi - lo } else { 1.0 };
    let pixels: Vec<u8> = img
        .iter()
        .map(|&v| (((v - lo) / span).clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let buf = image::GrayImage::from_raw(w as u32, h as u32, pixels).expect("sized buffer");
    buf.save_with_format(path.as_ref(), image::ImageFormat::Pnm)
        .map_err(|e| Error::InvalidData(format!("{}: {e}", path.as_ref().display())))
}
