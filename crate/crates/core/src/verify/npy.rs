//! NPY v1.0 container for little-endian `f4`/`f8` arrays in C order.

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{Element, Precision, Tensor};

const MAGIC: &[u8] = b"\x93NUMPY";
const ALIGN: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub enum NpyArray {
    F32(Tensor<f32>),
    F64(Tensor<f64>),
}

impl NpyArray {
    pub fn shape(&self) -> &[usize] {
        match self {
            NpyArray::F32(t) => t.shape(),
            NpyArray::F64(t) => t.shape(),
        }
    }

    pub fn into_f64(self) -> Tensor<f64> {
        match self {
            NpyArray::F32(t) => t.convert(),
            NpyArray::F64(t) => t,
        }
    }
}

fn descr(p: Precision) -> &'static str {
    match p {
        Precision::F32 => "<f4",
        Precision::F64 => "<f8",
    }
}

pub fn header_dict(precision: Precision, shape: &[usize]) -> String {
    let dims = match shape {
        [d] => format!("({d},)"),
        _ => format!(
            "({})",
            shape.iter().map(usize::to_string).collect::<Vec<_>>().join(", ")
        ),
    };
    format!(
        "{{'descr': '{}', 'fortran_order': False, 'shape': {}, }}",
        descr(precision),
        dims
    )
}

pub fn encode<T: Element + ToLeBytes>(t: &Tensor<T>) -> Result<Vec<u8>> {
    if !t.all_finite() {
        return Err(Error::Numeric("refusing to export non-finite values".into()));
    }
    let mut header = header_dict(T::PRECISION, t.shape());
    // Magic (6) + version (2) + header length (2) + dict + padding + '\n'.
    let unpadded = MAGIC.len() + 4 + header.len() + 1;
    let pad = (ALIGN - unpadded % ALIGN) % ALIGN;
    header.extend(std::iter::repeat_n(' ', pad));
    header.push('\n');
    let header_len = u16::try_from(header.len()).map_err(|_| Error::Npy("header too long".into()))?;

    let mut out = Vec::with_capacity(unpadded + pad + t.len() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&header_len.to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    for &v in t.data() {
        v.put_le(&mut out);
    }
    Ok(out)
}

pub fn write_npy<T: Element + ToLeBytes>(path: &Path, t: &Tensor<T>) -> Result<()> {
    let bytes = encode(t)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_npy(path: &Path) -> Result<NpyArray> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

pub fn decode(bytes: &[u8]) -> Result<NpyArray> {
    if bytes.len() < 10 || &bytes[..6] != MAGIC {
        return Err(Error::Npy("missing NPY magic".into()));
    }
    let (major, _minor) = (bytes[6], bytes[7]);
    let (header_start, header_len) = match major {
        1 => (10, u16::from_le_bytes([bytes[8], bytes[9]]) as usize),
        2 | 3 => {
            if bytes.len() < 12 {
                return Err(Error::Npy("truncated header length".into()));
            }
            (12, u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]) as usize)
        }
        v => return Err(Error::Npy(format!("unsupported version {v}"))),
    };
    let data_start = header_start + header_len;
    let header = bytes
        .get(header_start..data_start)
        .ok_or_else(|| Error::Npy("truncated header".into()))?;
    let header = std::str::from_utf8(header).map_err(|_| Error::Npy("header is not UTF-8".into()))?;
    let (dtype, fortran, shape) = parse_header(header)?;
    if fortran {
        return Err(Error::Npy("Fortran-ordered arrays are not supported".into()));
    }
    let count: usize = shape.iter().product();
    let payload = &bytes[data_start..];
    let width = match dtype {
        Precision::F32 => 4,
        Precision::F64 => 8,
    };
    if payload.len() != count * width {
        return Err(Error::Npy(format!(
            "payload has {} bytes, expected {}",
            payload.len(),
            count * width
        )));
    }
    Ok(match dtype {
        Precision::F32 => NpyArray::F32(Tensor::new(
            shape,
            payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect(),
        )?),
        Precision::F64 => NpyArray::F64(Tensor::new(
            shape,
            payload
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect(),
        )?),
    })
}

/// Extracts `descr`, `fortran_order` and `shape` from the header dict.
fn parse_header(header: &str) -> Result<(Precision, bool, Vec<usize>)> {
    let field = |key: &str| -> Result<&str> {
        let tag = format!("'{key}':");
        let at = header
            .find(&tag)
            .ok_or_else(|| Error::Npy(format!("header lacks '{key}'")))?;
        Ok(header[at + tag.len()..].trim_start())
    };

    let descr_field = field("descr")?;
    let dtype = if descr_field.starts_with("'<f4'") {
        Precision::F32
    } else if descr_field.starts_with("'<f8'") {
        Precision::F64
    } else {
        let end = descr_field.find(',').unwrap_or(descr_field.len());
        return Err(Error::Npy(format!(
            "unsupported dtype {}",
            &descr_field[..end]
        )));
    };

    let fortran_field = field("fortran_order")?;
    let fortran = if fortran_field.starts_with("False") {
        false
    } else if fortran_field.starts_with("True") {
        true
    } else {
        return Err(Error::Npy("malformed fortran_order".into()));
    };

    let shape_field = field("shape")?;
    let close = shape_field
        .find(')')
        .ok_or_else(|| Error::Npy("malformed shape".into()))?;
    let inner = shape_field
        .strip_prefix('(')
        .ok_or_else(|| Error::Npy("malformed shape".into()))?;
    let shape = inner[..close - 1]
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<usize>()
                .map_err(|_| Error::Npy(format!("bad extent '{s}'")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((dtype, fortran, shape))
}

/// Little-endian serialization for the element types NPY supports here.
pub trait ToLeBytes {
    fn put_le(self, out: &mut Vec<u8>);
}

impl ToLeBytes for f32 {
    fn put_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
}

impl ToLeBytes for f64 {
    fn put_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
}
