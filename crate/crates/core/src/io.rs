//! Plain-text tables with `# key = value` headers and portable any-map images.

use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Ordered `key = value` metadata carried in file headers.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Meta(pub Vec<(String, String)>);

impl Meta {
    pub fn new() -> Self {
        Self::default()
    }

    /// Sets `key`, replacing any earlier value.
    pub fn set(&mut self, key: &str, value: impl ToString) {
        let value = value.to_string();
        match self.0.iter_mut().find(|(k, _)| k == key) {
            Some(slot) => slot.1 = value,
            None => self.0.push((key.to_string(), value)),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn get_f64(&self, key: &str) -> Option<f64> {
        self.get(key).and_then(|v| v.parse().ok())
    }

    pub fn extend(&mut self, other: &Meta) {
        for (k, v) in &other.0 {
            self.set(k, v);
        }
    }

    pub fn write_header(&self, out: &mut String) {
        for (k, v) in &self.0 {
            let _ = writeln!(out, "# {k} = {v}");
        }
    }
}

/// Header metadata plus numeric rows of a delimited text table.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub meta: Meta,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    /// Parses whitespace- or comma-delimited rows. Lines starting with `#`
    /// are comments; those of the form `# key = value` populate the metadata.
    pub fn parse(text: &str) -> Result<Self> {
        let mut meta = Meta::new();
        let mut rows = Vec::new();
        let mut width = None;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if let Some((k, v)) = rest.split_once('=') {
                    meta.set(k.trim(), v.trim());
                }
                continue;
            }
            let row = line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.parse::<f64>().map_err(|_| Error::Parse {
                        line: i + 1,
                        msg: format!("not a number: {s:?}"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            match width {
                None => width = Some(row.len()),
                Some(w) if w != row.len() => {
                    return Err(Error::Parse {
                        line: i + 1,
                        msg: format!("expected {w} columns, found {}", row.len()),
                    })
                }
                _ => {}
            }
            rows.push(row);
        }
        Ok(Self { meta, rows })
    }

    pub fn columns(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    pub fn require_columns(&self, n: usize) -> Result<()> {
        if self.rows.is_empty() {
            return Err(Error::Parse {
                line: 0,
                msg: "table has no data rows".into(),
            });
        }
        if self.columns() != n {
            return Err(Error::Parse {
                line: 0,
                msg: format!("expected {n} columns, found {}", self.columns()),
            });
        }
        Ok(())
    }
}

/// Formats a float so that it parses back bit-exactly.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:e}")
}

/// Linear map of `values` onto 0..=255 with `lo → 0` and `hi → 255`.
pub fn to_gray(values: &[f64], lo: f64, hi: f64) -> Vec<u8> {
    let span = hi - lo;
    values
        .iter()
        .map(|&v| {
            if span <= 0.0 {
                0
            } else {
                (((v - lo) / span).clamp(0.0, 1.0) * 255.0).round() as u8
            }
        })
        .collect()
}

/// Binary graymap (P5). A single `#` comment line per metadata entry follows
/// the magic number.
pub fn encode_pgm(width: usize, height: usize, pixels: &[u8], meta: &Meta) -> Vec<u8> {
    assert_eq!(pixels.len(), width * height);
    let mut head = String::from("P5\n");
    meta.write_header(&mut head);
    let _ = write!(head, "{width} {height}\n255\n");
    let mut out = head.into_bytes();
    out.extend_from_slice(pixels);
    out
}

/// Decoded any-map image with samples scaled to `[0, 1]`, row-major from the top.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f64>,
}

/// Reads P1/P2/P4/P5 images. Bitmaps map black (1) to 1.0, graymaps map
/// white to 1.0.
pub fn decode_pnm(bytes: &[u8]) -> Result<Image> {
    let mut pos = 0usize;
    let magic = next_token(bytes, &mut pos)?;
    let bitmap = matches!(magic.as_str(), "P1" | "P4");
    if !matches!(magic.as_str(), "P1" | "P2" | "P4" | "P5") {
        return Err(parse_err(format!("unsupported image format {magic:?}")));
    }
    let width = next_uint(bytes, &mut pos)?;
    let height = next_uint(bytes, &mut pos)?;
    let maxval = if bitmap { 1 } else { next_uint(bytes, &mut pos)? };
    if width == 0 || height == 0 || maxval == 0 || maxval > 65535 {
        return Err(parse_err("invalid image dimensions or maximum value".into()));
    }
    let n = width * height;
    let mut pixels = Vec::with_capacity(n);
    match magic.as_str() {
        "P1" => {
            while pixels.len() < n {
                skip_space(bytes, &mut pos);
                let c = *bytes.get(pos).ok_or_else(|| parse_err("truncated bitmap".into()))?;
                pos += 1;
                match c {
                    b'0' => pixels.push(0.0),
                    b'1' => pixels.push(1.0),
                    _ => return Err(parse_err("bitmap samples must be 0 or 1".into())),
                }
            }
        }
        "P2" => {
            for _ in 0..n {
                pixels.push(next_uint(bytes, &mut pos)? as f64 / maxval as f64);
            }
        }
        "P4" => {
            pos += 1;
            let stride = width.div_ceil(8);
            let data = bytes
                .get(pos..pos + stride * height)
                .ok_or_else(|| parse_err("truncated bitmap".into()))?;
            for r in 0..height {
                for c in 0..width {
                    let byte = data[r * stride + c / 8];
                    pixels.push(((byte >> (7 - c % 8)) & 1) as f64);
                }
            }
        }
        _ => {
            pos += 1;
            let wide = maxval > 255;
            let bpp = if wide { 2 } else { 1 };
            let data = bytes
                .get(pos..pos + n * bpp)
                .ok_or_else(|| parse_err("truncated graymap".into()))?;
            for i in 0..n {
                let v = if wide {
                    u16::from_be_bytes([data[2 * i], data[2 * i + 1]]) as f64
                } else {
                    data[i] as f64
                };
                pixels.push(v / maxval as f64);
            }
        }
    }
    Ok(Image {
        width,
        height,
        pixels,
    })
}

fn parse_err(msg: String) -> Error {
    Error::Parse { line: 0, msg }
}

fn skip_space(bytes: &[u8], pos: &mut usize) {
    while *pos < bytes.len() {
        match bytes[*pos] {
            b'#' => {
                while *pos < bytes.len() && bytes[*pos] != b'\n' {
                    *pos += 1;
                }
            }
            c if c.is_ascii_whitespace() => *pos += 1,
            _ => break,
        }
    }
}

fn next_token(bytes: &[u8], pos: &mut usize) -> Result<String> {
    skip_space(bytes, pos);
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() && bytes[*pos] != b'#' {
        *pos += 1;
    }
    if start == *pos {
        return Err(parse_err("unexpected end of image header".into()));
    }
    Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
}

fn next_uint(bytes: &[u8], pos: &mut usize) -> Result<usize> {
    let t = next_token(bytes, pos)?;
    t.parse()
        .map_err(|_| parse_err(format!("expected an unsigned integer, found {t:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_round_trip_and_errors() {
        let t = Table::parse("# k0 = 0.5\n# note: free text\n1, 2\n3 4\n\n").unwrap();
        assert_eq!(t.meta.get_f64("k0"), Some(0.5));
        assert_eq!(t.rows, vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
        match Table::parse("1 2\n3\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            Table::parse("1 x\n"),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn float_format_is_lossless() {
        for v in [0.1, -1.0 / 3.0, 6.02e23, f64::MIN_POSITIVE] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn pgm_round_trip() {
        let mut meta = Meta::new();
        meta.set("source", "test");
        let px = [0u8, 128, 255, 7, 9, 200];
        let bytes = encode_pgm(3, 2, &px, &meta);
        let img = decode_pnm(&bytes).unwrap();
        assert_eq!((img.width, img.height), (3, 2));
        for (a, b) in img.pixels.iter().zip(px) {
            assert!((a * 255.0 - b as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn bitmaps_plain_and_raw() {
        let plain = decode_pnm(b"P1\n# c\n3 2\n0 1 0\n1 1 0\n").unwrap();
        assert_eq!(plain.pixels, vec![0.0, 1.0, 0.0, 1.0, 1.0, 0.0]);
        let raw = decode_pnm(&[b'P', b'4', b'\n', b'3', b' ', b'2', b'\n', 0b0100_0000, 0b1100_0000])
            .unwrap();
        assert_eq!(raw.pixels, plain.pixels);
    }

    #[test]
    fn gray_mapping_clamps() {
        assert_eq!(to_gray(&[-1.0, 0.0, 0.5, 1.0, 2.0], 0.0, 1.0), vec![0, 0, 128, 255, 255]);
    }
}
