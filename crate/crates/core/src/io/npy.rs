//! NPY v1.0 subset: little-endian `f4`/`f8`, C order, 1-D or 2-D.

use std::fs;
use std::path::Path;

use super::DenseMatrix;
use crate::{Error, Result};

const MAGIC: &[u8; 6] = b"\x93NUMPY";
const PREAMBLE: usize = 10;
const ALIGN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

impl Precision {
    fn descr(self) -> &'static str {
        match self {
            Precision::F32 => "<f4",
            Precision::F64 => "<f8",
        }
    }

    fn width(self) -> usize {
        match self {
            Precision::F32 => 4,
            Precision::F64 => 8,
        }
    }
}

/// Reads a 1-D or 2-D float array. 1-D arrays become a single row.
pub fn read_matrix(path: impl AsRef<Path>) -> Result<DenseMatrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    read_matrix_bytes(&bytes)
}

pub fn read_matrix_bytes(bytes: &[u8]) -> Result<DenseMatrix> {
    if bytes.len() < PREAMBLE {
        return Err(format_err(bytes.len(), "file shorter than the npy preamble"));
    }
    if &bytes[..6] != MAGIC {
        return Err(format_err(0, "missing \\x93NUMPY magic"));
    }
    if bytes[6] != 1 || bytes[7] != 0 {
        return Err(format_err(
            6,
            format!(
                "unsupported npy version {}.{}, only 1.0 is accepted",
                bytes[6], bytes[7]
            ),
        ));
    }
    let header_len = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
    let data_start = PREAMBLE + header_len;
    if bytes.len() < data_start {
        return Err(format_err(8, format!("header length {header_len} exceeds file size")));
    }
    let header = std::str::from_utf8(&bytes[PREAMBLE..data_start])
        .map_err(|e| format_err(PREAMBLE + e.valid_up_to(), "header is not ASCII"))?;
    if !header.is_ascii() {
        return Err(format_err(PREAMBLE, "header is not ASCII"));
    }
    let dict = HeaderDict::parse(header, PREAMBLE)?;

    let precision = match dict.descr.as_str() {
        "<f4" => Precision::F32,
        "<f8" => Precision::F64,
        other => return Err(Error::Dtype(other.to_string())),
    };
    if dict.fortran_order {
        return Err(Error::UnsupportedLayout("fortran_order=True".into()));
    }
    let (rows, cols) = match dict.shape.as_slice() {
        [n] => (1, *n),
        [r, c] => (*r, *c),
        [] => return Err(Error::UnsupportedLayout("0-d arrays are not matrices".into())),
        s => return Err(Error::UnsupportedLayout(format!("{}-d shape {s:?}", s.len()))),
    };

    let count = rows
        .checked_mul(cols)
        .ok_or_else(|| format_err(PREAMBLE, "shape overflows"))?;
    let payload = &bytes[data_start..];
    let expected = count * precision.width();
    if payload.len() != expected {
        return Err(format_err(
            data_start,
            format!(
                "expected {expected} data bytes for shape {:?}, found {}",
                dict.shape,
                payload.len()
            ),
        ));
    }
    let data: Vec<f64> = match precision {
        Precision::F64 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
        Precision::F32 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect(),
    };
    DenseMatrix::new(rows, cols, data)
}

/// Writes a matrix as a 2-D array.
pub fn write_matrix(matrix: &DenseMatrix, path: impl AsRef<Path>, precision: Precision) -> Result<()> {
    let path = path.as_ref();
    let bytes = write_matrix_bytes(matrix, precision);
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes a vector as a 1-D array of shape `(len,)`.
pub fn write_vector(values: &[f64], path: impl AsRef<Path>, precision: Precision) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = header_bytes(precision, &format!("({},)", values.len()));
    push_values(&mut bytes, values, precision);
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn write_matrix_bytes(matrix: &DenseMatrix, precision: Precision) -> Vec<u8> {
    let mut bytes = header_bytes(precision, &format!("({}, {})", matrix.rows(), matrix.cols()));
    push_values(&mut bytes, matrix.data(), precision);
    bytes
}

fn header_bytes(precision: Precision, shape: &str) -> Vec<u8> {
    let mut dict = format!(
        "{{'descr': '{}', 'fortran_order': False, 'shape': {shape}, }}",
        precision.descr()
    );
    let unpadded = PREAMBLE + dict.len() + 1;
    let padding = (ALIGN - unpadded % ALIGN) % ALIGN;
    dict.extend(std::iter::repeat_n(' ', padding));
    dict.push('\n');

    let mut bytes = Vec::with_capacity(PREAMBLE + dict.len());
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&[1, 0]);
    bytes.extend_from_slice(&(dict.len() as u16).to_le_bytes());
    bytes.extend_from_slice(dict.as_bytes());
    bytes
}

fn push_values(bytes: &mut Vec<u8>, values: &[f64], precision: Precision) {
    bytes.reserve(values.len() * precision.width());
    match precision {
        Precision::F64 => values.iter().for_each(|v| bytes.extend_from_slice(&v.to_le_bytes())),
        Precision::F32 => values
            .iter()
            .for_each(|v| bytes.extend_from_slice(&(*v as f32).to_le_bytes())),
    }
}

fn format_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Format {
        offset,
        message: message.into(),
    }
}

#[derive(Debug)]
struct HeaderDict {
    descr: String,
    fortran_order: bool,
    shape: Vec<usize>,
}

#[derive(Debug)]
enum Value {
    Str(String),
    Bool(bool),
    Tuple(Vec<usize>),
}

/// Cursor over the Python-literal header dict. Offsets are reported
/// relative to the start of the file.
struct Cursor<'a> {
    src: &'a [u8],
    pos: usize,
    base: usize,
}

impl<'a> Cursor<'a> {
    fn err(&self, message: impl Into<String>) -> Error {
        format_err(self.base + self.pos, message)
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expect(&mut self, ch: u8) -> Result<()> {
        match self.peek() {
            Some(c) if c == ch => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(self.err(format!("expected '{}'", ch as char))),
        }
    }

    fn string(&mut self) -> Result<String> {
        let quote = match self.peek() {
            Some(q @ (b'\'' | b'"')) => q,
            _ => return Err(self.err("expected quoted string")),
        };
        self.pos += 1;
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos] != quote {
            self.pos += 1;
        }
        if self.pos == self.src.len() {
            return Err(self.err("unterminated string"));
        }
        let s = String::from_utf8_lossy(&self.src[start..self.pos]).into_owned();
        self.pos += 1;
        Ok(s)
    }

    fn word(&mut self) -> &'a [u8] {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphanumeric() {
            self.pos += 1;
        }
        &self.src[start..self.pos]
    }

    fn tuple(&mut self) -> Result<Vec<usize>> {
        self.expect(b'(')?;
        let mut dims = Vec::new();
        loop {
            if self.peek() == Some(b')') {
                self.pos += 1;
                return Ok(dims);
            }
            let at = self.pos;
            let digits = self.word();
            let text = std::str::from_utf8(digits).unwrap_or("");
            let dim = text
                .trim_end_matches('L')
                .parse::<usize>()
                .map_err(|_| format_err(self.base + at, format!("invalid shape entry {text:?}")))?;
            dims.push(dim);
            match self.peek() {
                Some(b',') => self.pos += 1,
                Some(b')') => {}
                _ => return Err(self.err("expected ',' or ')' in shape")),
            }
        }
    }

    fn value(&mut self) -> Result<Value> {
        match self.peek() {
            Some(b'\'' | b'"') => self.string().map(Value::Str),
            Some(b'(') => self.tuple().map(Value::Tuple),
            _ => {
                let at = self.pos;
                match self.word() {
                    b"True" => Ok(Value::Bool(true)),
                    b"False" => Ok(Value::Bool(false)),
                    _ => Err(format_err(self.base + at, "unrecognized header value")),
                }
            }
        }
    }
}

impl HeaderDict {
    fn parse(header: &str, base: usize) -> Result<Self> {
        let mut cur = Cursor {
            src: header.as_bytes(),
            pos: 0,
            base,
        };
        if !header.ends_with('\n') {
            return Err(format_err(base + header.len(), "header not terminated by newline"));
        }
        cur.expect(b'{')?;
        let mut descr = None;
        let mut fortran = None;
        let mut shape = None;
        loop {
            if cur.peek() == Some(b'}') {
                cur.pos += 1;
                break;
            }
            let key_at = cur.pos;
            let key = cur.string()?;
            cur.expect(b':')?;
            let value_at = cur.pos;
            let value = cur.value()?;
            let mismatch = || format_err(base + value_at, format!("wrong value type for key {key:?}"));
            match key.as_str() {
                "descr" => match value {
                    Value::Str(s) => descr = Some(s),
                    _ => return Err(mismatch()),
                },
                "fortran_order" => match value {
                    Value::Bool(b) => fortran = Some(b),
                    _ => return Err(mismatch()),
                },
                "shape" => match value {
                    Value::Tuple(t) => shape = Some(t),
                    _ => return Err(mismatch()),
                },
                _ => return Err(format_err(base + key_at, format!("unexpected header key {key:?}"))),
            }
            match cur.peek() {
                Some(b',') => cur.pos += 1,
                Some(b'}') => {}
                _ => return Err(cur.err("expected ',' or '}'")),
            }
        }
        cur.skip_ws();
        if cur.pos != cur.src.len() {
            return Err(cur.err("trailing bytes after header dict"));
        }
        let missing = |k: &str| format_err(base, format!("header missing key {k:?}"));
        Ok(HeaderDict {
            descr: descr.ok_or_else(|| missing("descr"))?,
            fortran_order: fortran.ok_or_else(|| missing("fortran_order"))?,
            shape: shape.ok_or_else(|| missing("shape"))?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw_npy(header: &str, payload: &[u8]) -> Vec<u8> {
        let mut dict = header.to_string();
        let unpadded = PREAMBLE + dict.len() + 1;
        dict.extend(std::iter::repeat_n(' ', (ALIGN - unpadded % ALIGN) % ALIGN));
        dict.push('\n');
        let mut out = MAGIC.to_vec();
        out.extend_from_slice(&[1, 0]);
        out.extend_from_slice(&(dict.len() as u16).to_le_bytes());
        out.extend_from_slice(dict.as_bytes());
        out.extend_from_slice(payload);
        out
    }

    fn f64_bytes(values: &[f64]) -> Vec<u8> {
        values.iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    #[test]
    fn reads_2x2_f64() {
        let bytes = raw_npy(
            "{'descr': '<f8', 'fortran_order': False, 'shape': (2, 2), }",
            &f64_bytes(&[1.0, 2.0, 3.0, 4.0]),
        );
        let m = read_matrix_bytes(&bytes).unwrap();
        assert_eq!(m, DenseMatrix::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap());
    }

    #[test]
    fn one_dimensional_becomes_single_row() {
        let bytes = raw_npy(
            "{'descr': '<f8', 'fortran_order': False, 'shape': (3,), }",
            &f64_bytes(&[1.0, 2.0, 3.0]),
        );
        let m = read_matrix_bytes(&bytes).unwrap();
        assert_eq!((m.rows(), m.cols()), (1, 3));
    }

    #[test]
    fn f32_is_widened() {
        let payload: Vec<u8> = [0.5f32, -1.25].iter().flat_map(|v| v.to_le_bytes()).collect();
        let bytes = raw_npy("{'descr': '<f4', 'fortran_order': False, 'shape': (1, 2), }", &payload);
        assert_eq!(read_matrix_bytes(&bytes).unwrap().data(), &[0.5, -1.25]);
    }

    #[test]
    fn header_is_aligned_and_newline_terminated() {
        let m = DenseMatrix::new(1, 1, vec![0.0]).unwrap();
        for p in [Precision::F32, Precision::F64] {
            let bytes = write_matrix_bytes(&m, p);
            let header_len = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
            assert_eq!((PREAMBLE + header_len) % ALIGN, 0);
            assert_eq!(bytes[PREAMBLE + header_len - 1], b'\n');
            let back = read_matrix_bytes(&bytes).unwrap();
            assert_eq!((back.rows(), back.cols()), (1, 1));
            assert_eq!(back.data(), &[0.0]);
        }
    }

    #[test]
    fn bad_magic_reports_offset_zero() {
        let mut bytes = write_matrix_bytes(&DenseMatrix::zeros(1, 1), Precision::F64);
        bytes[1] = b'X';
        assert!(matches!(
            read_matrix_bytes(&bytes),
            Err(Error::Format { offset: 0, .. })
        ));
    }

    #[test]
    fn version_two_is_rejected() {
        let mut bytes = write_matrix_bytes(&DenseMatrix::zeros(1, 1), Precision::F64);
        bytes[6] = 2;
        assert!(matches!(
            read_matrix_bytes(&bytes),
            Err(Error::Format { offset: 6, .. })
        ));
    }

    #[test]
    fn fortran_order_is_unsupported() {
        let bytes = raw_npy(
            "{'descr': '<f8', 'fortran_order': True, 'shape': (1, 1), }",
            &f64_bytes(&[1.0]),
        );
        assert!(matches!(read_matrix_bytes(&bytes), Err(Error::UnsupportedLayout(_))));
    }

    #[test]
    fn integer_and_big_endian_dtypes_are_rejected() {
        for descr in ["<i8", ">f8", "|u1"] {
            let header = format!("{{'descr': '{descr}', 'fortran_order': False, 'shape': (1,), }}");
            let bytes = raw_npy(&header, &[0u8; 8]);
            assert!(matches!(read_matrix_bytes(&bytes), Err(Error::Dtype(d)) if d == descr));
        }
    }

    #[test]
    fn three_dimensional_is_rejected() {
        let bytes = raw_npy(
            "{'descr': '<f8', 'fortran_order': False, 'shape': (1, 1, 1), }",
            &f64_bytes(&[1.0]),
        );
        assert!(matches!(read_matrix_bytes(&bytes), Err(Error::UnsupportedLayout(_))));
    }

    #[test]
    fn truncated_payload_is_a_format_error() {
        let bytes = raw_npy(
            "{'descr': '<f8', 'fortran_order': False, 'shape': (2, 2), }",
            &f64_bytes(&[1.0, 2.0, 3.0]),
        );
        match read_matrix_bytes(&bytes) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 128),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_dict_points_into_header() {
        let bytes = raw_npy(
            "{'descr': '<f8', 'fortran_order': Maybe, 'shape': (1,), }",
            &f64_bytes(&[1.0]),
        );
        match read_matrix_bytes(&bytes) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, PREAMBLE + 34),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_finite_payload_is_rejected() {
        let bytes = raw_npy(
            "{'descr': '<f8', 'fortran_order': False, 'shape': (1,), }",
            &f64_bytes(&[f64::NAN]),
        );
        assert!(read_matrix_bytes(&bytes).is_err());
    }
}
