//! FCD1 binary datasets, the CSV fallback, and split sidecars.
//!
//! FCD1 layout (little-endian):
//!
//! ```text
//! "FCD1" u32:version=1 u32:n u32:d u8:has_labels u8:has_patches
//! u16:patch_w u16:patch_h u16:patch_c
//! n × { u32:id i8:label(-1|+1|0) d×f32 [before w·h·c bytes, after w·h·c bytes] }
//! ```

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::dataio::{Dataset, Label, PatchGeometry, PatchPair, Sample};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"FCD1";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 + 4 + 1 + 1 + 2 + 2 + 2;

/// `<path>.split`: evaluation ids, one per line.
pub fn split_sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".split");
    PathBuf::from(s)
}

/// Loads FCD1 or, when the magic is absent, the CSV fallback. A split
/// sidecar next to the file is attached when present.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    let dataset = if bytes.starts_with(MAGIC) {
        decode_fcd1(&bytes)?
    } else {
        decode_csv(&bytes)?
    };
    let sidecar = split_sidecar_path(path);
    if sidecar.exists() {
        let eval = load_split(&sidecar)?;
        return dataset.with_eval_ids(eval);
    }
    Ok(dataset)
}

/// Writes FCD1, or CSV when the extension is `.csv`. The split, if any, goes
/// to the sidecar.
pub fn save_dataset(path: impl AsRef<Path>, dataset: &Dataset) -> Result<()> {
    let path = path.as_ref();
    let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let bytes = if is_csv {
        encode_csv(dataset)?
    } else {
        encode_fcd1(dataset)?
    };
    fs::write(path, bytes)?;
    if dataset.is_split() {
        save_split(split_sidecar_path(path), &dataset.eval_ids())?;
    }
    Ok(())
}

pub fn load_split(path: impl AsRef<Path>) -> Result<Vec<u32>> {
    let text = fs::read_to_string(path)?;
    let mut offset = 0u64;
    let mut ids = Vec::new();
    for line in text.split_inclusive('\n') {
        let trimmed = line.trim();
        if !trimmed.is_empty() {
            let id = trimmed
                .parse()
                .map_err(|_| Error::parse(offset, format!("bad id {trimmed:?} in split file")))?;
            ids.push(id);
        }
        offset += line.len() as u64;
    }
    Ok(ids)
}

pub fn save_split(path: impl AsRef<Path>, eval_ids: &[u32]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    for id in eval_ids {
        writeln!(f, "{id}")?;
    }
    Ok(())
}

pub(crate) fn encode_fcd1(ds: &Dataset) -> Result<Vec<u8>> {
    let geom = ds.patch_geometry().filter(|_| ds.has_patches());
    let patch_len = geom.map_or(0, |g| g.byte_len());
    let n = u32::try_from(ds.len()).map_err(|_| Error::InvalidArgument("too many samples".into()))?;
    let d = u32::try_from(ds.dim()).map_err(|_| Error::InvalidArgument("dimension too large".into()))?;
    let mut out = Vec::with_capacity(HEADER_LEN + ds.len() * (5 + 4 * ds.dim() + 2 * patch_len));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&n.to_le_bytes());
    out.extend_from_slice(&d.to_le_bytes());
    out.push(ds.has_labels() as u8);
    out.push(geom.is_some() as u8);
    let g = geom.unwrap_or(PatchGeometry {
        width: 0,
        height: 0,
        channels: 0,
    });
    out.extend_from_slice(&g.width.to_le_bytes());
    out.extend_from_slice(&g.height.to_le_bytes());
    out.extend_from_slice(&g.channels.to_le_bytes());
    for s in ds.samples() {
        out.extend_from_slice(&s.id.to_le_bytes());
        out.push(s.label.map_or(0, Label::as_i8) as u8);
        for &v in &s.features {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        if geom.is_some() {
            let p = s.patches.as_ref().expect("has_patches checked");
            out.extend_from_slice(&p.before);
            out.extend_from_slice(&p.after);
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < len {
            return Err(Error::parse(self.pos as u64, format!("truncated {what}")));
        }
        let s = &self.bytes[self.pos..self.pos + len];
        self.pos += len;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

pub(crate) fn decode_fcd1(bytes: &[u8]) -> Result<Dataset> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::parse(0, "bad magic, expected FCD1"));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::parse(4, format!("unsupported version {version}")));
    }
    let n = r.u32("sample count")? as usize;
    let d = r.u32("dimension")? as usize;
    if d == 0 {
        return Err(Error::parse(12, "dimension must be positive"));
    }
    let has_labels = r.u8("label flag")? != 0;
    let has_patches = r.u8("patch flag")? != 0;
    let geom = PatchGeometry {
        width: r.u16("patch width")?,
        height: r.u16("patch height")?,
        channels: r.u16("patch channels")?,
    };
    let patch_len = if has_patches { geom.byte_len() } else { 0 };

    let mut seen = HashSet::with_capacity(n);
    let mut samples = Vec::with_capacity(n.min(1 << 20));
    for _ in 0..n {
        let record_start = r.pos as u64;
        let id = r.u32("record id")?;
        if !seen.insert(id) {
            return Err(Error::parse(record_start, format!("duplicate id {id}")));
        }
        let label_pos = r.pos as u64;
        let raw = r.u8("record label")? as i8;
        let label = match raw {
            0 => None,
            v => Some(
                Label::from_i8(v)
                    .ok_or_else(|| Error::parse(label_pos, format!("invalid label {v}")))?,
            ),
        };
        if label.is_some() && !has_labels {
            return Err(Error::parse(label_pos, "label present in an unlabeled dataset"));
        }
        let feature_pos = r.pos as u64;
        let raw = r.take(4 * d, "features")?;
        let features: Vec<f64> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        if let Some(k) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::parse(feature_pos + 4 * k as u64, "non-finite feature"));
        }
        let patches = if has_patches {
            Some(PatchPair {
                before: r.take(patch_len, "before patch")?.to_vec(),
                after: r.take(patch_len, "after patch")?.to_vec(),
            })
        } else {
            None
        };
        samples.push(Sample {
            id,
            features,
            label,
            patches,
        });
    }
    if r.pos != bytes.len() {
        return Err(Error::parse(r.pos as u64, "trailing bytes after last record"));
    }
    Dataset::new(samples, d, has_patches.then_some(geom)).map_err(|e| Error::parse(0, e.to_string()))
}

fn encode_csv(ds: &Dataset) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["id".to_string(), "label".to_string()];
    header.extend((0..ds.dim()).map(|i| format!("f{i}")));
    w.write_record(&header).map_err(csv_io)?;
    for s in ds.samples() {
        let mut row = vec![s.id.to_string(), s.label.map_or(0, Label::as_i8).to_string()];
        row.extend(s.features.iter().map(|&v| (v as f32).to_string()));
        w.write_record(&row).map_err(csv_io)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

fn decode_csv(bytes: &[u8]) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes);
    let header = rdr
        .headers()
        .map_err(|e| Error::parse(0, format!("unreadable CSV header: {e}")))?
        .clone();
    if header.len() < 3 || &header[0] != "id" || &header[1] != "label" {
        return Err(Error::parse(0, "not an FCD1 file and not a CSV with header id,label,f0.."));
    }
    for (i, name) in header.iter().skip(2).enumerate() {
        if name != format!("f{i}") {
            return Err(Error::parse(0, format!("unexpected column {name:?}, expected f{i}")));
        }
    }
    let d = header.len() - 2;
    let mut seen = HashSet::new();
    let mut samples = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let off = e.position().map_or(0, |p| p.byte());
            Error::parse(off, format!("malformed CSV row: {e}"))
        })?;
        let off = rec.position().map_or(0, |p| p.byte());
        if rec.len() != d + 2 {
            return Err(Error::parse(off, format!("row has {} fields, expected {}", rec.len(), d + 2)));
        }
        let id: u32 = rec[0].parse().map_err(|_| Error::parse(off, format!("bad id {:?}", &rec[0])))?;
        if !seen.insert(id) {
            return Err(Error::parse(off, format!("duplicate id {id}")));
        }
        let label = match &rec[1] {
            "" | "0" => None,
            v => Some(
                v.parse::<i8>()
                    .ok()
                    .and_then(Label::from_i8)
                    .ok_or_else(|| Error::parse(off, format!("invalid label {v:?}")))?,
            ),
        };
        let features = rec
            .iter()
            .skip(2)
            .map(|v| {
                v.parse::<f32>()
                    .ok()
                    .filter(|f| f.is_finite())
                    .map(f64::from)
                    .ok_or_else(|| Error::parse(off, format!("bad feature {v:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        samples.push(Sample {
            id,
            features,
            label,
            patches: None,
        });
    }
    Dataset::new(samples, d, None).map_err(|e| Error::parse(0, e.to_string()))
}
