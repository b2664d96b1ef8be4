//! Reader and writer for the NPY v1.0 array format.
//!
//! Layout: the magic string `\x93NUMPY`, version bytes `(1, 0)`, a
//! little-endian `u16` header length, then an ASCII Python dict literal with
//! the keys `descr`, `fortran_order` and `shape`. The header is padded with
//! spaces and a final newline so that the payload starts on a 64-byte
//! boundary. The payload is the raw little-endian element buffer.
//!
//! Only the dtypes the dataset needs are supported: `<f4`, `<f8`, `<i8`,
//! `|u1` and `|b1`. Fortran-ordered files are accepted and transposed to
//! row-major on load; the writer always emits row-major (C order).

use std::fs;
use std::path::Path;

use thiserror::Error;

const MAGIC: &[u8; 6] = b"\x93NUMPY";
const PREAMBLE_LEN: usize = MAGIC.len() + 2 + 2;
const ALIGN: usize = 64;

#[derive(Debug, Error)]
pub enum NpyError {
    #[error("not an NPY file (bad magic)")]
    BadMagic,
    #[error("unsupported NPY version {0}.{1}")]
    UnsupportedVersion(u8, u8),
    #[error("unsupported dtype {0:?}")]
    UnsupportedDtype(String),
    #[error("payload holds {found} bytes, header implies {expected}")]
    TruncatedPayload { expected: usize, found: usize },
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("non-finite value at flat index {0}")]
    NonFinite(usize),
    #[error("shape {shape:?} implies {expected} elements, buffer has {found}")]
    ShapeMismatch {
        shape: Vec<usize>,
        expected: usize,
        found: usize,
    },
    #[error("header of {0} bytes does not fit NPY v1.0")]
    HeaderTooLong(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Element type of an NPY payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
    I64,
    U8,
    Bool,
}

impl Dtype {
    pub fn descr(self) -> &'static str {
        match self {
            Dtype::F32 => "<f4",
            Dtype::F64 => "<f8",
            Dtype::I64 => "<i8",
            Dtype::U8 => "|u1",
            Dtype::Bool => "|b1",
        }
    }

    pub fn from_descr(descr: &str) -> Result<Self, NpyError> {
        // Single-byte types carry no byte order; numpy writes `|` but `<`/`=`
        // are equally unambiguous.
        match descr {
            "<f4" => Ok(Dtype::F32),
            "<f8" => Ok(Dtype::F64),
            "<i8" => Ok(Dtype::I64),
            "|u1" | "<u1" | "=u1" => Ok(Dtype::U8),
            "|b1" | "<b1" | "=b1" => Ok(Dtype::Bool),
            other => Err(NpyError::UnsupportedDtype(other.to_string())),
        }
    }

    pub fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 | Dtype::I64 => 8,
            Dtype::U8 | Dtype::Bool => 1,
        }
    }

    pub fn is_float(self) -> bool {
        matches!(self, Dtype::F32 | Dtype::F64)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArrayHeader {
    pub dtype: Dtype,
    pub fortran_order: bool,
    pub shape: Vec<usize>,
}

impl ArrayHeader {
    pub fn element_count(&self) -> usize {
        self.shape.iter().product()
    }
}

/// Typed element buffer, row-major.
#[derive(Debug, Clone, PartialEq)]
pub enum ArrayData {
    F32(Vec<f32>),
    F64(Vec<f64>),
    I64(Vec<i64>),
    U8(Vec<u8>),
    Bool(Vec<bool>),
}

impl ArrayData {
    pub fn dtype(&self) -> Dtype {
        match self {
            ArrayData::F32(_) => Dtype::F32,
            ArrayData::F64(_) => Dtype::F64,
            ArrayData::I64(_) => Dtype::I64,
            ArrayData::U8(_) => Dtype::U8,
            ArrayData::Bool(_) => Dtype::Bool,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            ArrayData::F32(v) => v.len(),
            ArrayData::F64(v) => v.len(),
            ArrayData::I64(v) => v.len(),
            ArrayData::U8(v) => v.len(),
            ArrayData::Bool(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Element `i` interpreted as a truth value (non-zero is true).
    pub fn truthy(&self, i: usize) -> bool {
        match self {
            ArrayData::F32(v) => v[i] != 0.0,
            ArrayData::F64(v) => v[i] != 0.0,
            ArrayData::I64(v) => v[i] != 0,
            ArrayData::U8(v) => v[i] != 0,
            ArrayData::Bool(v) => v[i],
        }
    }

    fn first_non_finite(&self) -> Option<usize> {
        match self {
            ArrayData::F32(v) => v.iter().position(|x| !x.is_finite()),
            ArrayData::F64(v) => v.iter().position(|x| !x.is_finite()),
            _ => None,
        }
    }

    fn permuted(&self, src_index: &[usize]) -> ArrayData {
        fn gather<E: Copy>(v: &[E], idx: &[usize]) -> Vec<E> {
            idx.iter().map(|&i| v[i]).collect()
        }
        match self {
            ArrayData::F32(v) => ArrayData::F32(gather(v, src_index)),
            ArrayData::F64(v) => ArrayData::F64(gather(v, src_index)),
            ArrayData::I64(v) => ArrayData::I64(gather(v, src_index)),
            ArrayData::U8(v) => ArrayData::U8(gather(v, src_index)),
            ArrayData::Bool(v) => ArrayData::Bool(gather(v, src_index)),
        }
    }
}

/// An NPY array held in memory in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseArray {
    pub header: ArrayHeader,
    pub data: ArrayData,
}

impl DenseArray {
    pub fn new(shape: Vec<usize>, data: ArrayData) -> Result<Self, NpyError> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(NpyError::ShapeMismatch {
                shape,
                expected,
                found: data.len(),
            });
        }
        Ok(Self {
            header: ArrayHeader {
                dtype: data.dtype(),
                fortran_order: false,
                shape,
            },
            data,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.header.shape
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ReadOptions {
    /// Reject NaN and infinities in floating payloads.
    pub strict_finite: bool,
}

pub fn read_npy(bytes: &[u8]) -> Result<DenseArray, NpyError> {
    read_npy_with(bytes, ReadOptions::default())
}

/// Read with non-finite floats rejected; used for brightness-temperature bands.
pub fn read_npy_strict(bytes: &[u8]) -> Result<DenseArray, NpyError> {
    read_npy_with(
        bytes,
        ReadOptions {
            strict_finite: true,
        },
    )
}

pub fn read_npy_with(bytes: &[u8], opts: ReadOptions) -> Result<DenseArray, NpyError> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(NpyError::BadMagic);
    }
    if bytes.len() < PREAMBLE_LEN {
        return Err(NpyError::MalformedHeader("file ends inside preamble".into()));
    }
    let (major, minor) = (bytes[6], bytes[7]);
    if (major, minor) != (1, 0) {
        return Err(NpyError::UnsupportedVersion(major, minor));
    }
    let header_len = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
    let data_start = PREAMBLE_LEN + header_len;
    if bytes.len() < data_start {
        return Err(NpyError::MalformedHeader("file ends inside header".into()));
    }
    let text = std::str::from_utf8(&bytes[PREAMBLE_LEN..data_start])
        .map_err(|_| NpyError::MalformedHeader("header is not ASCII".into()))?;
    let header = parse_header(text)?;

    let count = header.element_count();
    let payload = &bytes[data_start..];
    let expected = count * header.dtype.size();
    if payload.len() != expected {
        return Err(NpyError::TruncatedPayload {
            expected,
            found: payload.len(),
        });
    }
    let mut data = decode_payload(header.dtype, payload);

    if opts.strict_finite {
        if let Some(i) = data.first_non_finite() {
            return Err(NpyError::NonFinite(i));
        }
    }
    if header.fortran_order && header.shape.len() > 1 {
        data = data.permuted(&fortran_gather_index(&header.shape));
    }
    Ok(DenseArray {
        header: ArrayHeader {
            fortran_order: false,
            ..header
        },
        data,
    })
}

pub fn write_npy(array: &DenseArray) -> Result<Vec<u8>, NpyError> {
    let expected = array.header.element_count();
    if expected != array.data.len() {
        return Err(NpyError::ShapeMismatch {
            shape: array.header.shape.clone(),
            expected,
            found: array.data.len(),
        });
    }
    if array.header.dtype != array.data.dtype() {
        return Err(NpyError::UnsupportedDtype(format!(
            "header says {} but payload is {}",
            array.header.dtype.descr(),
            array.data.dtype().descr()
        )));
    }
    let mut text = format!(
        "{{'descr': '{}', 'fortran_order': False, 'shape': {}, }}",
        array.header.dtype.descr(),
        shape_literal(&array.header.shape)
    );
    let unpadded = PREAMBLE_LEN + text.len() + 1;
    let pad = (ALIGN - unpadded % ALIGN) % ALIGN;
    text.extend(std::iter::repeat_n(' ', pad));
    text.push('\n');
    let header_len =
        u16::try_from(text.len()).map_err(|_| NpyError::HeaderTooLong(text.len()))?;

    let mut out = Vec::with_capacity(PREAMBLE_LEN + text.len() + expected * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&header_len.to_le_bytes());
    out.extend_from_slice(text.as_bytes());
    encode_payload(&array.data, &mut out);
    Ok(out)
}

pub fn load_npy(path: impl AsRef<Path>) -> Result<DenseArray, NpyError> {
    read_npy(&fs::read(path)?)
}

pub fn load_npy_strict(path: impl AsRef<Path>) -> Result<DenseArray, NpyError> {
    read_npy_strict(&fs::read(path)?)
}

pub fn save_npy(path: impl AsRef<Path>, array: &DenseArray) -> Result<(), NpyError> {
    fs::write(path, write_npy(array)?)?;
    Ok(())
}

fn shape_literal(shape: &[usize]) -> String {
    match shape {
        [] => "()".to_string(),
        [n] => format!("({n},)"),
        _ => {
            let parts: Vec<String> = shape.iter().map(|d| d.to_string()).collect();
            format!("({})", parts.join(", "))
        }
    }
}

/// For each row-major position, the flat index of the same element in a
/// column-major buffer.
fn fortran_gather_index(shape: &[usize]) -> Vec<usize> {
    let count: usize = shape.iter().product();
    let mut f_strides = vec![1usize; shape.len()];
    for k in 1..shape.len() {
        f_strides[k] = f_strides[k - 1] * shape[k - 1];
    }
    let mut idx = vec![0usize; shape.len()];
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        out.push(idx.iter().zip(&f_strides).map(|(i, s)| i * s).sum());
        // odometer increment, last axis fastest
        for k in (0..shape.len()).rev() {
            idx[k] += 1;
            if idx[k] < shape[k] {
                break;
            }
            idx[k] = 0;
        }
    }
    out
}

fn decode_payload(dtype: Dtype, payload: &[u8]) -> ArrayData {
    match dtype {
        Dtype::F32 => ArrayData::F32(
            payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        ),
        Dtype::F64 => ArrayData::F64(
            payload
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        ),
        Dtype::I64 => ArrayData::I64(
            payload
                .chunks_exact(8)
                .map(|c| i64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        ),
        Dtype::U8 => ArrayData::U8(payload.to_vec()),
        Dtype::Bool => ArrayData::Bool(payload.iter().map(|&b| b != 0).collect()),
    }
}

fn encode_payload(data: &ArrayData, out: &mut Vec<u8>) {
    match data {
        ArrayData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        ArrayData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        ArrayData::I64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        ArrayData::U8(v) => out.extend_from_slice(v),
        ArrayData::Bool(v) => out.extend(v.iter().map(|&b| u8::from(b))),
    }
}

// --- header dict literal -------------------------------------------------

enum Value {
    Str(String),
    Bool(bool),
    Tuple(Vec<usize>),
}

struct Cursor<'a> {
    s: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.s.get(self.pos).copied()
    }

    fn expect(&mut self, c: u8) -> Result<(), NpyError> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(malformed(format!("expected '{}' at byte {}", c as char, self.pos)))
        }
    }

    fn string(&mut self) -> Result<String, NpyError> {
        let quote = match self.peek() {
            Some(q @ (b'\'' | b'"')) => q,
            _ => return Err(malformed(format!("expected string at byte {}", self.pos))),
        };
        self.pos += 1;
        let start = self.pos;
        while self.pos < self.s.len() && self.s[self.pos] != quote {
            self.pos += 1;
        }
        if self.pos == self.s.len() {
            return Err(malformed("unterminated string"));
        }
        let out = String::from_utf8_lossy(&self.s[start..self.pos]).into_owned();
        self.pos += 1;
        Ok(out)
    }

    fn word(&mut self) -> &'a [u8] {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_alphanumeric() {
            self.pos += 1;
        }
        &self.s[start..self.pos]
    }

    fn value(&mut self) -> Result<Value, NpyError> {
        match self.peek() {
            Some(b'\'' | b'"') => Ok(Value::Str(self.string()?)),
            Some(b'(') => {
                self.pos += 1;
                let mut dims = Vec::new();
                loop {
                    if self.peek() == Some(b')') {
                        self.pos += 1;
                        break;
                    }
                    let w = self.word();
                    let text = std::str::from_utf8(w).unwrap_or("");
                    // numpy 1.x wrote long integers as e.g. `3L`
                    let dim = text
                        .trim_end_matches('L')
                        .parse::<usize>()
                        .map_err(|_| malformed(format!("bad shape extent {text:?}")))?;
                    dims.push(dim);
                    match self.peek() {
                        Some(b',') => self.pos += 1,
                        Some(b')') => {}
                        _ => return Err(malformed("bad shape tuple")),
                    }
                }
                Ok(Value::Tuple(dims))
            }
            _ => match self.word() {
                b"True" => Ok(Value::Bool(true)),
                b"False" => Ok(Value::Bool(false)),
                other => Err(malformed(format!(
                    "unexpected token {:?}",
                    String::from_utf8_lossy(other)
                ))),
            },
        }
    }
}

fn malformed(msg: impl Into<String>) -> NpyError {
    NpyError::MalformedHeader(msg.into())
}

fn parse_header(text: &str) -> Result<ArrayHeader, NpyError> {
    let mut cur = Cursor {
        s: text.as_bytes(),
        pos: 0,
    };
    let (mut descr, mut fortran, mut shape) = (None, None, None);
    cur.expect(b'{')?;
    loop {
        if cur.peek() == Some(b'}') {
            cur.pos += 1;
            break;
        }
        let key = cur.string()?;
        cur.expect(b':')?;
        let value = cur.value()?;
        match (key.as_str(), value) {
            ("descr", Value::Str(s)) => descr = Some(s),
            ("fortran_order", Value::Bool(b)) => fortran = Some(b),
            ("shape", Value::Tuple(t)) => shape = Some(t),
            (k, _) => return Err(malformed(format!("unexpected key or value for {k:?}"))),
        }
        match cur.peek() {
            Some(b',') => cur.pos += 1,
            Some(b'}') => {}
            _ => return Err(malformed("expected ',' or '}'")),
        }
    }
    if cur.s[cur.pos..].iter().any(|b| !b.is_ascii_whitespace()) {
        return Err(malformed("trailing bytes after header dict"));
    }
    Ok(ArrayHeader {
        dtype: Dtype::from_descr(&descr.ok_or_else(|| malformed("missing descr"))?)?,
        fortran_order: fortran.ok_or_else(|| malformed("missing fortran_order"))?,
        shape: shape.ok_or_else(|| malformed("missing shape"))?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_roundtrip() {
        let a = DenseArray::new(vec![], ArrayData::F64(vec![5.0])).unwrap();
        let bytes = write_npy(&a).unwrap();
        let b = read_npy(&bytes).unwrap();
        assert_eq!(b.shape(), &[] as &[usize]);
        assert_eq!(b.data, ArrayData::F64(vec![5.0]));
    }

    #[test]
    fn corrupted_magic_is_rejected() {
        let a = DenseArray::new(vec![2], ArrayData::U8(vec![1, 2])).unwrap();
        let mut bytes = write_npy(&a).unwrap();
        bytes[1] = b'X';
        assert!(matches!(read_npy(&bytes), Err(NpyError::BadMagic)));
        assert!(matches!(read_npy(b"\x93NU"), Err(NpyError::BadMagic)));
    }

    #[test]
    fn version_two_is_rejected() {
        let a = DenseArray::new(vec![1], ArrayData::U8(vec![1])).unwrap();
        let mut bytes = write_npy(&a).unwrap();
        bytes[6] = 2;
        assert!(matches!(
            read_npy(&bytes),
            Err(NpyError::UnsupportedVersion(2, 0))
        ));
    }

    #[test]
    fn short_payload_is_truncated() {
        let a = DenseArray::new(vec![3], ArrayData::F32(vec![1.0, 2.0, 3.0])).unwrap();
        let bytes = write_npy(&a).unwrap();
        let err = read_npy(&bytes[..bytes.len() - 2]).unwrap_err();
        assert!(matches!(
            err,
            NpyError::TruncatedPayload {
                expected: 12,
                found: 10
            }
        ));
    }

    #[test]
    fn big_endian_dtype_is_unsupported() {
        let a = DenseArray::new(vec![1], ArrayData::F32(vec![1.0])).unwrap();
        let mut bytes = write_npy(&a).unwrap();
        let at = bytes.windows(3).position(|w| w == b"<f4").unwrap();
        bytes[at] = b'>';
        assert!(matches!(read_npy(&bytes), Err(NpyError::UnsupportedDtype(_))));
    }

    #[test]
    fn strict_mode_rejects_nan() {
        let a = DenseArray::new(vec![3], ArrayData::F32(vec![1.0, f32::NAN, 3.0])).unwrap();
        let bytes = write_npy(&a).unwrap();
        assert!(read_npy(&bytes).is_ok());
        assert!(matches!(read_npy_strict(&bytes), Err(NpyError::NonFinite(1))));
    }

    #[test]
    fn header_is_64_byte_aligned() {
        for shape in [vec![], vec![0], vec![7], vec![3, 4, 5, 6], vec![100_000, 2]] {
            let n = shape.iter().product();
            let a = DenseArray::new(shape, ArrayData::U8(vec![0; n])).unwrap();
            let bytes = write_npy(&a).unwrap();
            let hl = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
            assert_eq!((PREAMBLE_LEN + hl) % 64, 0);
            assert_eq!(bytes[PREAMBLE_LEN + hl - 1], b'\n');
        }
    }

    #[test]
    fn fortran_index_of_2x3() {
        // column-major [[0,2,4],[1,3,5]]
        assert_eq!(fortran_gather_index(&[2, 3]), vec![0, 2, 4, 1, 3, 5]);
    }

    #[test]
    fn shape_mismatch_on_construction() {
        assert!(DenseArray::new(vec![2, 2], ArrayData::F32(vec![1.0])).is_err());
    }
}
