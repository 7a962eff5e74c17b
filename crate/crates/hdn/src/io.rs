//! Depth-map and mask file formats.
//!
//! * PFM: `Pf\n<W> <H>\n<scale>\n` followed by `W*H` 32-bit floats, rows
//!   bottom-to-top. A negative scale means little-endian, positive means
//!   big-endian. Values are written with scale `-1`.
//! * PGM: binary `P5`, maxval 255; any nonzero byte is a valid pixel.
//! * CSV: comma-separated decimals, one image row per line; `nan` marks an
//!   invalid pixel (stored as 0).
//!
//! Every writer goes through a temporary file in the destination directory
//! that is renamed into place, so a failed write never leaves a partial file.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use hdn_core::DepthMap;

use crate::error::{Error, Result};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn format_err(path: &Path, field: &'static str, detail: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        field,
        detail: detail.into(),
    }
}

/// Writes `bytes` to `path` atomically.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(io_err(path))?;
    tmp.write_all(bytes).map_err(io_err(path))?;
    tmp.flush().map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e.error,
    })?;
    Ok(())
}

/// Splits a netpbm-style header into `count` whitespace-separated tokens
/// (skipping `#` comments) and returns them with the payload offset, which
/// starts after exactly one whitespace byte following the last token.
fn header_tokens<'a>(path: &Path, bytes: &'a [u8], count: usize) -> Result<(Vec<&'a str>, usize)> {
    let mut tokens = Vec::with_capacity(count);
    let mut pos = 0;
    while tokens.len() < count {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(format_err(path, "header", "truncated header"));
        }
        let tok = std::str::from_utf8(&bytes[start..pos])
            .map_err(|_| format_err(path, "header", "non-ASCII header"))?;
        tokens.push(tok);
    }
    if pos >= bytes.len() {
        return Err(format_err(path, "payload", "no data after header"));
    }
    Ok((tokens, pos + 1))
}

fn parse_dim(path: &Path, field: &'static str, tok: &str) -> Result<usize> {
    match tok.parse::<usize>() {
        Ok(v) if v > 0 => Ok(v),
        _ => Err(format_err(
            path,
            field,
            format!("expected a positive integer, got '{tok}'"),
        )),
    }
}

/// Decodes a grayscale PFM. `path` only labels errors.
pub fn decode_pfm(path: &Path, bytes: &[u8]) -> Result<DepthMap> {
    let (tok, offset) = header_tokens(path, bytes, 4)?;
    match tok[0] {
        "Pf" => {}
        "PF" => {
            return Err(format_err(
                path,
                "magic",
                "color PFM ('PF') is not supported",
            ))
        }
        other => {
            return Err(format_err(
                path,
                "magic",
                format!("expected 'Pf', got '{other}'"),
            ))
        }
    }
    let width = parse_dim(path, "width", tok[1])?;
    let height = parse_dim(path, "height", tok[2])?;
    let scale: f64 = tok[3]
        .parse()
        .ok()
        .filter(|s: &f64| s.is_finite() && *s != 0.0)
        .ok_or_else(|| {
            format_err(
                path,
                "scale",
                format!("expected a nonzero number, got '{}'", tok[3]),
            )
        })?;
    let little = scale < 0.0;
    let n = width * height;
    let payload = &bytes[offset..];
    if payload.len() < 4 * n {
        return Err(format_err(
            path,
            "payload",
            format!("expected {} bytes, found {}", 4 * n, payload.len()),
        ));
    }
    let mut values = vec![0.0; n];
    for (k, chunk) in payload[..4 * n].chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        };
        // file rows run bottom to top
        let (file_row, col) = (k / width, k % width);
        values[(height - 1 - file_row) * width + col] = f64::from(v);
    }
    Ok(DepthMap::from_values_masking_nonfinite(
        height, width, values,
    )?)
}

/// Encodes values as a little-endian grayscale PFM. The mask is not stored.
pub fn encode_pfm(map: &DepthMap) -> Vec<u8> {
    let (h, w) = (map.height(), map.width());
    let mut out = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(4 * h * w);
    for row in (0..h).rev() {
        for col in 0..w {
            out.extend_from_slice(&(map.value(row, col) as f32).to_le_bytes());
        }
    }
    out
}

/// Reads a grayscale PFM. Every finite pixel is valid.
pub fn read_pfm(path: &Path) -> Result<DepthMap> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    decode_pfm(path, &bytes)
}

pub fn write_pfm(map: &DepthMap, path: &Path) -> Result<()> {
    write_atomic(path, &encode_pfm(map))
}

/// A decoded mask: row-major validity flags.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub height: usize,
    pub width: usize,
    pub valid: Vec<bool>,
}

pub fn decode_pgm(path: &Path, bytes: &[u8]) -> Result<Mask> {
    let (tok, offset) = header_tokens(path, bytes, 4)?;
    if tok[0] != "P5" {
        return Err(format_err(
            path,
            "magic",
            format!("expected 'P5', got '{}'", tok[0]),
        ));
    }
    let width = parse_dim(path, "width", tok[1])?;
    let height = parse_dim(path, "height", tok[2])?;
    if tok[3] != "255" {
        return Err(format_err(
            path,
            "maxval",
            format!("expected 255, got '{}'", tok[3]),
        ));
    }
    let n = width * height;
    let payload = &bytes[offset..];
    if payload.len() < n {
        return Err(format_err(
            path,
            "payload",
            format!("expected {n} bytes, found {}", payload.len()),
        ));
    }
    Ok(Mask {
        height,
        width,
        valid: payload[..n].iter().map(|&b| b != 0).collect(),
    })
}

pub fn encode_pgm(height: usize, width: usize, valid: &[bool]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(valid.iter().map(|&v| if v { 255u8 } else { 0 }));
    out
}

pub fn read_mask(path: &Path) -> Result<Mask> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    decode_pgm(path, &bytes)
}

/// Writes a validity mask as `P5` (255 valid, 0 invalid).
pub fn write_mask(height: usize, width: usize, valid: &[bool], path: &Path) -> Result<()> {
    if valid.len() != height * width {
        return Err(Error::Usage(format!(
            "mask has {} entries, expected {}",
            valid.len(),
            height * width
        )));
    }
    write_atomic(path, &encode_pgm(height, width, valid))
}

/// Applies a mask to a map (AND with its existing validity).
pub fn apply_mask(map: &DepthMap, mask: &Mask, mask_path: &Path) -> Result<DepthMap> {
    if mask.height != map.height() || mask.width != map.width() {
        return Err(format_err(
            mask_path,
            "dimensions",
            format!(
                "mask is {}x{} but the map is {}x{}",
                mask.height,
                mask.width,
                map.height(),
                map.width()
            ),
        ));
    }
    let valid = map
        .valid()
        .iter()
        .zip(&mask.valid)
        .map(|(&a, &b)| a && b)
        .collect();
    Ok(map.with_mask(valid)?)
}

pub fn decode_csv_map(path: &Path, text: &str) -> Result<DepthMap> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut values = Vec::new();
    let mut valid = Vec::new();
    let mut width = None;
    let mut height = 0;
    for record in reader.records() {
        let record = record.map_err(|e| format_err(path, "row", e.to_string()))?;
        let row = record.position().map_or(height + 1, |p| p.line() as usize);
        for cell in &record {
            if cell.eq_ignore_ascii_case("nan") {
                values.push(0.0);
                valid.push(false);
            } else {
                let v = cell
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| {
                        format_err(
                            path,
                            "cell",
                            format!("row {row}: '{cell}' is not a finite number"),
                        )
                    })?;
                values.push(v);
                valid.push(true);
            }
        }
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => {
                return Err(format_err(
                    path,
                    "row",
                    format!("row {row} has {} cells, expected {w}", record.len()),
                ))
            }
            Some(_) => {}
        }
        height += 1;
    }
    let width = width.ok_or_else(|| format_err(path, "row", "no rows"))?;
    Ok(DepthMap::new(height, width, values, valid)?)
}

pub fn encode_csv_map(map: &DepthMap) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for r in 0..map.height() {
        let row = (0..map.width()).map(|c| {
            if map.is_valid(r * map.width() + c) {
                map.value(r, c).to_string()
            } else {
                "nan".to_string()
            }
        });
        writer.write_record(row).expect("writing to memory");
    }
    let bytes = writer.into_inner().expect("flushing to memory");
    String::from_utf8(bytes).expect("ASCII output")
}

pub fn read_csv_map(path: &Path) -> Result<DepthMap> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    decode_csv_map(path, &text)
}

pub fn write_csv_map(map: &DepthMap, path: &Path) -> Result<()> {
    write_atomic(path, encode_csv_map(map).as_bytes())
}

/// Reads a map by extension (`.pfm` or `.csv`), then applies an optional
/// PGM mask.
pub fn read_map(path: &Path, mask: Option<&Path>) -> Result<DepthMap> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    let map = match ext.as_deref() {
        Some("pfm") => read_pfm(path)?,
        Some("csv") => read_csv_map(path)?,
        _ => return Err(format_err(path, "extension", "expected .pfm or .csv")),
    };
    match mask {
        Some(mp) => apply_mask(&map, &read_mask(mp)?, mp),
        None => Ok(map),
    }
}

/// Writes a map by extension; for PFM a `<stem>.mask.pgm` sidecar is written
/// when some pixel is invalid.
pub fn write_map(map: &DepthMap, path: &Path) -> Result<()> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("pfm") => {
            write_pfm(map, path)?;
            if map.valid_count() < map.len() {
                write_mask(map.height(), map.width(), map.valid(), &mask_sidecar(path))?;
            }
            Ok(())
        }
        Some("csv") => write_csv_map(map, path),
        _ => Err(format_err(path, "extension", "expected .pfm or .csv")),
    }
}

/// `dir/name.pfm` -> `dir/name.mask.pgm`.
pub fn mask_sidecar(path: &Path) -> PathBuf {
    path.with_extension("mask.pgm")
}
