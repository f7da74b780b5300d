//! Grid and label files.
//!
//! Grid file layout, all little-endian:
//!
//! ```text
//! offset  size  field
//!      0     4  magic "CBPF"
//!      4     4  version (u32) = 1
//!      8    16  n, h, w, c (u32 each)
//!     24   4*N  N = n*h*w*c f32 values in grid layout order
//! ```
//!
//! Label files are UTF-8 text with one `index,label` pair per line. Blank
//! lines and lines starting with `#` are skipped.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::LocalDescriptorGrid;

pub const GRID_MAGIC: [u8; 4] = *b"CBPF";
pub const GRID_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridFileHeader {
    pub n: u32,
    pub h: u32,
    pub w: u32,
    pub c: u32,
}

impl GridFileHeader {
    pub fn payload_len(&self) -> u64 {
        u64::from(self.n) * u64::from(self.h) * u64::from(self.w) * u64::from(self.c) * 4
    }

    pub fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let mut out = [0u8; HEADER_LEN];
        out[0..4].copy_from_slice(&GRID_MAGIC);
        out[4..8].copy_from_slice(&GRID_VERSION.to_le_bytes());
        for (k, v) in [self.n, self.h, self.w, self.c].into_iter().enumerate() {
            out[8 + 4 * k..12 + 4 * k].copy_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn parse(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Truncated {
                expected: HEADER_LEN as u64,
                actual: bytes.len() as u64,
            });
        }
        if bytes[0..4] != GRID_MAGIC {
            return Err(Error::Format(format!(
                "bad magic {:?}, expected \"CBPF\"",
                String::from_utf8_lossy(&bytes[0..4])
            )));
        }
        let word = |k: usize| u32::from_le_bytes(bytes[4 * k..4 * k + 4].try_into().unwrap());
        let version = word(1);
        if version != GRID_VERSION {
            return Err(Error::Format(format!(
                "unsupported version {version}, expected {GRID_VERSION}"
            )));
        }
        let header = Self {
            n: word(2),
            h: word(3),
            w: word(4),
            c: word(5),
        };
        if header.n == 0 || header.h == 0 || header.w == 0 || header.c == 0 {
            return Err(Error::validation(format!(
                "header dimensions must be positive, got n={} h={} w={} c={}",
                header.n, header.h, header.w, header.c
            )));
        }
        Ok(header)
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Serializes a grid. Values are narrowed to `f32`.
pub fn encode_grid(grid: &LocalDescriptorGrid) -> Result<Vec<u8>> {
    let dim = |v: usize, name: &str| {
        u32::try_from(v).map_err(|_| Error::validation(format!("{name}={v} does not fit in u32")))
    };
    let header = GridFileHeader {
        n: dim(grid.n(), "n")?,
        h: dim(grid.h(), "h")?,
        w: dim(grid.w(), "w")?,
        c: dim(grid.c(), "c")?,
    };
    let mut out = Vec::with_capacity(HEADER_LEN + grid.data().len() * 4);
    out.extend_from_slice(&header.to_bytes());
    for (pos, &v) in grid.data().iter().enumerate() {
        let narrow = v as f32;
        if !narrow.is_finite() {
            return Err(Error::validation(format!(
                "value {v} at flat offset {pos} overflows f32"
            )));
        }
        out.extend_from_slice(&narrow.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_grid(bytes: &[u8]) -> Result<LocalDescriptorGrid> {
    let header = GridFileHeader::parse(bytes)?;
    let expected = HEADER_LEN as u64 + header.payload_len();
    if bytes.len() as u64 != expected {
        return Err(Error::Truncated {
            expected,
            actual: bytes.len() as u64,
        });
    }
    let data = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|b| f64::from(f32::from_le_bytes(b.try_into().unwrap())))
        .collect();
    LocalDescriptorGrid::new(
        header.n as usize,
        header.h as usize,
        header.w as usize,
        header.c as usize,
        data,
    )
}

pub fn write_grid(path: impl AsRef<Path>, grid: &LocalDescriptorGrid) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_grid(grid)?;
    fs::write(path, bytes).map_err(io_err(path))
}

pub fn read_grid(path: impl AsRef<Path>) -> Result<LocalDescriptorGrid> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(io_err(path))?;
    decode_grid(&bytes)
}

/// `(sample_index, class_id)` pairs in file order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabelTable {
    rows: Vec<(usize, usize)>,
}

impl LabelTable {
    /// Builds a table, rejecting duplicate sample indices.
    pub fn new(rows: Vec<(usize, usize)>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(rows.len());
        for &(index, _) in &rows {
            if !seen.insert(index) {
                return Err(Error::validation(format!("duplicate sample index {index}")));
            }
        }
        Ok(Self { rows })
    }

    /// Dense labels `0..n` where sample `i` has class `labels[i]`.
    pub fn from_dense(labels: &[usize]) -> Self {
        Self {
            rows: labels.iter().copied().enumerate().collect(),
        }
    }

    pub fn rows(&self) -> &[(usize, usize)] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// One past the largest class id, or 0 for an empty table.
    pub fn class_count(&self) -> usize {
        self.rows.iter().map(|&(_, y)| y + 1).max().unwrap_or(0)
    }

    /// Checks sample indices against `n` and class ids against `k`.
    pub fn validate(&self, n: Option<usize>, k: Option<usize>) -> Result<()> {
        for &(index, label) in &self.rows {
            if let Some(n) = n {
                if index >= n {
                    return Err(Error::validation(format!(
                        "sample index {index} out of range for {n} samples"
                    )));
                }
            }
            if let Some(k) = k {
                if label >= k {
                    return Err(Error::validation(format!(
                        "class id {label} out of range for {k} classes"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        self.rows
            .iter()
            .map(|(i, y)| format!("{i},{y}\n"))
            .collect()
    }
}

/// Parses label text. `n` bounds sample indices, `k` bounds class ids.
pub fn parse_labels(text: &str, n: Option<usize>, k: Option<usize>) -> Result<LabelTable> {
    let mut rows = Vec::new();
    let mut seen = HashSet::new();
    for (lineno, line) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parse_err = |msg: String| Error::Parse { line: line_no, msg };
        let mut fields = line.split(',');
        let (Some(a), Some(b), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(parse_err(format!("expected `index,label`, got {line:?}")));
        };
        let index: usize = a
            .trim()
            .parse()
            .map_err(|_| parse_err(format!("non-numeric sample index {a:?}")))?;
        let label: usize = b
            .trim()
            .parse()
            .map_err(|_| parse_err(format!("non-numeric class id {b:?}")))?;
        if !seen.insert(index) {
            return Err(parse_err(format!("duplicate sample index {index}")));
        }
        if let Some(n) = n {
            if index >= n {
                return Err(parse_err(format!(
                    "sample index {index} out of range for {n} samples"
                )));
            }
        }
        if let Some(k) = k {
            if label >= k {
                return Err(parse_err(format!(
                    "class id {label} out of range for {k} classes"
                )));
            }
        }
        rows.push((index, label));
    }
    Ok(LabelTable { rows })
}

pub fn read_labels(
    path: impl AsRef<Path>,
    n: Option<usize>,
    k: Option<usize>,
) -> Result<LabelTable> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_labels(&text, n, k)
}

pub fn write_labels(path: impl AsRef<Path>, labels: &LabelTable) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, labels.to_csv()).map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_grid_encoding() {
        let g = LocalDescriptorGrid::new(1, 1, 1, 1, vec![0.0]).unwrap();
        let bytes = encode_grid(&g).unwrap();
        assert_eq!(bytes.len(), 28);
        assert_eq!(&bytes[24..28], &[0, 0, 0, 0]);
        assert_eq!(&bytes[0..4], b"CBPF");
        assert_eq!(&bytes[4..8], &[1, 0, 0, 0]);
    }

    #[test]
    fn typical_payload_size() {
        let h = GridFileHeader {
            n: 2,
            h: 13,
            w: 13,
            c: 512,
        };
        assert_eq!(h.payload_len(), 692_224);
    }

    #[test]
    fn bad_magic() {
        let g = LocalDescriptorGrid::new(1, 1, 1, 1, vec![1.0]).unwrap();
        let mut bytes = encode_grid(&g).unwrap();
        bytes[0..4].copy_from_slice(b"XXXX");
        assert!(matches!(decode_grid(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn bad_version() {
        let g = LocalDescriptorGrid::new(1, 1, 1, 1, vec![1.0]).unwrap();
        let mut bytes = encode_grid(&g).unwrap();
        bytes[4] = 2;
        assert!(matches!(decode_grid(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn truncated_payload() {
        let mut bytes = GridFileHeader {
            n: 1,
            h: 1,
            w: 1,
            c: 2,
        }
        .to_bytes()
        .to_vec();
        bytes.extend_from_slice(&1.0f32.to_le_bytes());
        assert!(matches!(
            decode_grid(&bytes),
            Err(Error::Truncated {
                expected: 32,
                actual: 28
            })
        ));
        assert!(matches!(
            decode_grid(&bytes[..10]),
            Err(Error::Truncated { .. })
        ));
    }

    #[test]
    fn zero_header_fields_rejected() {
        for k in 0..4 {
            let mut dims = [1u32; 4];
            dims[k] = 0;
            let h = GridFileHeader {
                n: dims[0],
                h: dims[1],
                w: dims[2],
                c: dims[3],
            };
            assert!(matches!(
                decode_grid(&h.to_bytes()),
                Err(Error::Validation(_))
            ));
        }
    }

    #[test]
    fn nan_payload_rejected() {
        let mut bytes = GridFileHeader {
            n: 1,
            h: 1,
            w: 1,
            c: 1,
        }
        .to_bytes()
        .to_vec();
        bytes.extend_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(decode_grid(&bytes), Err(Error::Validation(_))));
    }

    #[test]
    fn overflowing_value_rejected_on_write() {
        let g = LocalDescriptorGrid::new(1, 1, 1, 1, vec![1e300]).unwrap();
        assert!(encode_grid(&g).is_err());
    }

    #[test]
    fn labels_basic() {
        let t = parse_labels("0,3\n1,0\n", None, None).unwrap();
        assert_eq!(t.rows(), &[(0, 3), (1, 0)]);
        assert_eq!(t.class_count(), 4);
    }

    #[test]
    fn labels_comments_and_blank_lines() {
        let t = parse_labels("# header\n\n2, 1\n", None, None).unwrap();
        assert_eq!(t.rows(), &[(2, 1)]);
    }

    #[test]
    fn labels_duplicate_index() {
        let err = parse_labels("0,3\n0,1\n", None, None).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn labels_non_numeric() {
        let err = parse_labels("0,3\nx,1\n", None, None).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        assert!(parse_labels("0;3\n", None, None).is_err());
        assert!(parse_labels("0,3,4\n", None, None).is_err());
    }

    #[test]
    fn labels_out_of_range() {
        assert!(matches!(
            parse_labels("0,5\n", None, Some(5)),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(parse_labels("7,0\n", Some(7), None).is_err());
    }

    #[test]
    fn labels_empty() {
        assert!(parse_labels("", None, None).unwrap().is_empty());
    }
}
