//! On-disk formats: SPF1 fields, PGM P2 masks, and atomic file writes.
//!
//! SPF1 is an ASCII header line `SPF1 <nx> <ny> <h>` followed by `nx * ny`
//! little-endian `f64` values in row-major order (row `j = 0` first).

use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use crate::error::{Result, SegError};
use crate::grid::{GridDomain, Mask, ScalarField};

pub fn encode_spf1(field: &ScalarField) -> Vec<u8> {
    let d = &field.domain;
    let mut out = format!("SPF1 {} {} {}\n", d.nx, d.ny, d.h).into_bytes();
    out.reserve(8 * d.len());
    for v in field.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Raw SPF1 contents, independent of any domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Spf1 {
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
    pub values: Vec<f64>,
}

pub fn decode_spf1(bytes: &[u8]) -> Result<Spf1> {
    let nl =
        bytes.iter().position(|&b| b == b'\n').ok_or_else(|| SegError::Format("missing SPF1 header line".into()))?;
    let header = std::str::from_utf8(&bytes[..nl]).map_err(|_| SegError::Format("non-ASCII header".into()))?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 4 || parts[0] != "SPF1" {
        return Err(SegError::Format(format!("bad header {header:?}")));
    }
    let bad = |what: &str| SegError::Format(format!("bad {what} in header {header:?}"));
    let nx: usize = parts[1].parse().map_err(|_| bad("nx"))?;
    let ny: usize = parts[2].parse().map_err(|_| bad("ny"))?;
    let h: f64 = parts[3].parse().map_err(|_| bad("h"))?;
    let body = &bytes[nl + 1..];
    if body.len() != 8 * nx * ny {
        return Err(SegError::Format(format!("expected {} payload bytes, found {}", 8 * nx * ny, body.len())));
    }
    let values = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Ok(Spf1 { nx, ny, h, values })
}

/// Decodes an SPF1 payload onto `domain`, checking dimensions and spacing.
pub fn field_from_spf1(domain: &Arc<GridDomain>, bytes: &[u8]) -> Result<ScalarField> {
    let raw = decode_spf1(bytes)?;
    if raw.nx != domain.nx || raw.ny != domain.ny || (raw.h - domain.h).abs() > 1e-12 * domain.h {
        return Err(SegError::Format("SPF1 grid does not match the domain".into()));
    }
    ScalarField::from_values(domain, raw.values)
}

pub fn encode_pgm(mask: &Mask) -> Vec<u8> {
    let d = &mask.domain;
    let mut s = format!("P2\n{} {}\n255\n", d.nx, d.ny);
    for j in 0..d.ny {
        let row: Vec<&str> = (0..d.nx).map(|i| if mask.get(d.index(i, j)) { "255" } else { "0" }).collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    s.into_bytes()
}

pub fn decode_pgm(domain: &Arc<GridDomain>, bytes: &[u8]) -> Result<Mask> {
    let text = std::str::from_utf8(bytes).map_err(|_| SegError::Format("PGM is not ASCII".into()))?;
    let mut tok = text.lines().filter(|l| !l.starts_with('#')).flat_map(str::split_whitespace);
    if tok.next() != Some("P2") {
        return Err(SegError::Format("missing P2 magic".into()));
    }
    let mut num = || -> Result<usize> {
        tok.next().and_then(|t| t.parse().ok()).ok_or_else(|| SegError::Format("truncated PGM".into()))
    };
    let (nx, ny, _max) = (num()?, num()?, num()?);
    if nx != domain.nx || ny != domain.ny {
        return Err(SegError::Format("PGM size does not match the domain".into()));
    }
    let bits = (0..nx * ny).map(|_| num().map(|v| v > 0)).collect::<Result<Vec<_>>>()?;
    Mask::from_bits(domain, bits)
}

/// Writes through a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path.file_name().ok_or_else(|| SegError::invalid("output path has no file name"))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_domain, Shape};
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let d = build_domain(Shape::Square { a: 1.0 }, 4).unwrap();
        let f = ScalarField::from_fn(&d, |p| p[0]);
        let bytes = encode_spf1(&f);
        assert!(bytes.starts_with(b"SPF1 5 5 0.25\n"));
        assert_eq!(bytes.len(), 14 + 8 * 25);
        assert_eq!(field_from_spf1(&d, &bytes).unwrap(), f);
        assert!(decode_spf1(b"SPF2 1 1 1\n").is_err());
        assert!(decode_spf1(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn pgm_round_trip() {
        let d = build_domain(Shape::Disk { radius: 1.0 }, 12).unwrap();
        let m = d.full_mask();
        let text = encode_pgm(&m);
        assert!(text.starts_with(b"P2\n13 13\n255\n"));
        assert_eq!(decode_pgm(&d, &text).unwrap(), m);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn spf1_preserves_bits(vals in proptest::collection::vec(-1e300f64..1e300, 49)) {
            let d = GridDomain::from_mask(7, 7, 0.1, [0.0, 0.0], vec![true; 49]).unwrap();
            let values: Vec<f64> = vals.iter().enumerate().map(|(i, &v)| if d.mask[i] { v } else { 0.0 }).collect();
            let f = ScalarField::from_values(&d, values).unwrap();
            prop_assert_eq!(field_from_spf1(&d, &encode_spf1(&f)).unwrap(), f);
        }
    }
}
