//! Reader and writer for the NPY array container (versions 1.0 through 3.0
//! on read, 1.0 on write), restricted to little-endian float32/float64 in
//! C order with one or two dimensions.

use std::io::{Read, Write};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 6] = b"\x93NUMPY";

/// Format version written by [`write_npy`].
pub const WRITE_VERSION: (u8, u8) = (1, 0);

const HEADER_ALIGN: usize = 64;

/// Element type of a stored array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Dtype {
    #[default]
    F32,
    F64,
}

impl Dtype {
    fn descr(self) -> &'static str {
        match self {
            Dtype::F32 => "<f4",
            Dtype::F64 => "<f8",
        }
    }

    fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

/// A decoded array, widened to f64.
#[derive(Debug, Clone, PartialEq)]
pub struct NpyArray {
    pub shape: Vec<usize>,
    pub dtype: Dtype,
    pub data: Vec<f64>,
}

pub fn read_npy<R: Read>(mut reader: R) -> Result<NpyArray> {
    let mut preamble = [0u8; 8];
    reader
        .read_exact(&mut preamble)
        .map_err(|_| Error::Format("file too short for NPY preamble".into()))?;
    if &preamble[..6] != MAGIC {
        return Err(Error::Format("missing NPY magic bytes".into()));
    }
    let major = preamble[6];
    let header_len = match major {
        1 => {
            let mut b = [0u8; 2];
            reader
                .read_exact(&mut b)
                .map_err(|_| Error::Format("truncated header length".into()))?;
            u16::from_le_bytes(b) as usize
        }
        2 | 3 => {
            let mut b = [0u8; 4];
            reader
                .read_exact(&mut b)
                .map_err(|_| Error::Format("truncated header length".into()))?;
            u32::from_le_bytes(b) as usize
        }
        v => return Err(Error::Format(format!("unsupported NPY version {v}.{}", preamble[7]))),
    };
    let mut header = vec![0u8; header_len];
    reader
        .read_exact(&mut header)
        .map_err(|_| Error::Format("truncated header".into()))?;
    let header = std::str::from_utf8(&header)
        .map_err(|_| Error::Format("header is not valid text".into()))?;
    let (dtype, fortran, shape) = parse_header(header)?;
    if fortran {
        return Err(Error::Format("Fortran-ordered arrays are not supported".into()));
    }

    let count: usize = shape.iter().product();
    let mut raw = Vec::with_capacity(count * dtype.size());
    reader
        .read_to_end(&mut raw)
        .map_err(|e| Error::Format(format!("reading payload: {e}")))?;
    if raw.len() < count * dtype.size() {
        return Err(Error::Format(format!(
            "payload holds {} bytes, shape {:?} needs {}",
            raw.len(),
            shape,
            count * dtype.size()
        )));
    }
    let data = match dtype {
        Dtype::F32 => raw[..count * 4]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect(),
        Dtype::F64 => raw[..count * 8]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect(),
    };
    Ok(NpyArray { shape, dtype, data })
}

fn dict_value<'a>(header: &'a str, key: &str) -> Result<&'a str> {
    let pat_single = format!("'{key}'");
    let pat_double = format!("\"{key}\"");
    let start = header
        .find(&pat_single)
        .map(|i| i + pat_single.len())
        .or_else(|| header.find(&pat_double).map(|i| i + pat_double.len()))
        .ok_or_else(|| Error::Format(format!("header lacks key '{key}'")))?;
    let rest = header[start..].trim_start();
    let rest = rest
        .strip_prefix(':')
        .ok_or_else(|| Error::Format(format!("malformed entry for '{key}'")))?
        .trim_start();
    let end = if rest.starts_with('(') {
        rest.find(')').map(|i| i + 1)
    } else {
        rest.find([',', '}'])
    }
    .ok_or_else(|| Error::Format(format!("unterminated value for '{key}'")))?;
    Ok(rest[..end].trim())
}

fn parse_header(header: &str) -> Result<(Dtype, bool, Vec<usize>)> {
    let descr = dict_value(header, "descr")?.trim_matches(|c| c == '\'' || c == '"');
    let dtype = match descr {
        "<f4" => Dtype::F32,
        "<f8" => Dtype::F64,
        other => {
            return Err(Error::Format(format!(
                "unsupported dtype '{other}' (expected '<f4' or '<f8')"
            )))
        }
    };
    let fortran = match dict_value(header, "fortran_order")? {
        "False" => false,
        "True" => true,
        other => return Err(Error::Format(format!("bad fortran_order '{other}'"))),
    };
    let shape_str = dict_value(header, "shape")?;
    let inner = shape_str
        .strip_prefix('(')
        .and_then(|s| s.strip_suffix(')'))
        .ok_or_else(|| Error::Format(format!("bad shape '{shape_str}'")))?;
    let shape = inner
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<usize>()
                .map_err(|_| Error::Format(format!("bad shape entry '{s}'")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((dtype, fortran, shape))
}

/// Writes a C-order array in format version 1.0.
pub fn write_npy<W: Write>(mut writer: W, shape: &[usize], data: &[f64], dtype: Dtype) -> Result<()> {
    let count: usize = shape.iter().product();
    if count != data.len() {
        return Err(Error::Shape(format!(
            "shape {shape:?} holds {count} values, got {}",
            data.len()
        )));
    }
    let shape_str = match shape {
        [n] => format!("({n},)"),
        _ => format!(
            "({})",
            shape.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(", ")
        ),
    };
    let mut header = format!(
        "{{'descr': '{}', 'fortran_order': False, 'shape': {}, }}",
        dtype.descr(),
        shape_str
    );
    let unpadded = MAGIC.len() + 2 + 2 + header.len() + 1;
    let pad = (HEADER_ALIGN - unpadded % HEADER_ALIGN) % HEADER_ALIGN;
    header.extend(std::iter::repeat_n(' ', pad));
    header.push('\n');
    let header_len = u16::try_from(header.len())
        .map_err(|_| Error::Format("header too long for version 1.0".into()))?;

    let mut buf = Vec::with_capacity(10 + header.len() + count * dtype.size());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&[WRITE_VERSION.0, WRITE_VERSION.1]);
    buf.extend_from_slice(&header_len.to_le_bytes());
    buf.extend_from_slice(header.as_bytes());
    match dtype {
        Dtype::F32 => data
            .iter()
            .for_each(|&v| buf.extend_from_slice(&(v as f32).to_le_bytes())),
        Dtype::F64 => data.iter().for_each(|&v| buf.extend_from_slice(&v.to_le_bytes())),
    }
    writer
        .write_all(&buf)
        .map_err(|e| Error::Format(format!("writing array: {e}")))?;
    Ok(())
}
