//! Point cloud files: whitespace-separated ASCII and a binary PLY subset.
//!
//! ASCII: one point per line, `x y z [r g b] [label]`, `#` starts a comment.
//! The column layout is fixed by the first data line unless declared.
//!
//! PLY: `binary_little_endian 1.0`, a single `vertex` element with float
//! `x y z`, optional uchar `red green blue` and optional int `label`.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::cloud::{Point3, PointCloud};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AsciiLayout {
    /// Taken from the field count of the first data line.
    Auto,
    Xyz,
    XyzLabel,
    XyzRgb,
    XyzRgbLabel,
}

impl AsciiLayout {
    fn from_fields(n: usize) -> Option<Self> {
        match n {
            3 => Some(AsciiLayout::Xyz),
            4 => Some(AsciiLayout::XyzLabel),
            6 => Some(AsciiLayout::XyzRgb),
            7 => Some(AsciiLayout::XyzRgbLabel),
            _ => None,
        }
    }

    fn fields(self) -> usize {
        match self {
            AsciiLayout::Auto => 0,
            AsciiLayout::Xyz => 3,
            AsciiLayout::XyzLabel => 4,
            AsciiLayout::XyzRgb => 6,
            AsciiLayout::XyzRgbLabel => 7,
        }
    }

    fn has_rgb(self) -> bool {
        matches!(self, AsciiLayout::XyzRgb | AsciiLayout::XyzRgbLabel)
    }

    fn has_label(self) -> bool {
        matches!(self, AsciiLayout::XyzLabel | AsciiLayout::XyzRgbLabel)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Ascii(AsciiLayout),
    Ply,
}

impl Format {
    /// `.ply` files are PLY, everything else ASCII with auto layout.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("ply") => Format::Ply,
            _ => Format::Ascii(AsciiLayout::Auto),
        }
    }
}

pub fn load_point_cloud(path: impl AsRef<Path>, format: Format) -> Result<PointCloud> {
    let bytes = fs::read(path.as_ref())?;
    match format {
        Format::Ascii(layout) => {
            let text = String::from_utf8(bytes).map_err(|_| Error::Parse {
                line: 0,
                msg: "file is not UTF-8".into(),
            })?;
            parse_ascii(&text, layout)
        }
        Format::Ply => parse_ply(&bytes),
    }
}

pub fn save_point_cloud(cloud: &PointCloud, path: impl AsRef<Path>, format: Format) -> Result<()> {
    let file = fs::File::create(path.as_ref())?;
    let mut w = BufWriter::new(file);
    match format {
        Format::Ascii(_) => write_ascii(cloud, &mut w)?,
        Format::Ply => write_ply(cloud, &mut w)?,
    }
    w.flush()?;
    Ok(())
}

pub fn parse_ascii(text: &str, layout: AsciiLayout) -> Result<PointCloud> {
    let mut layout = layout;
    let mut coords = Vec::new();
    let mut colors = Vec::new();
    let mut labels = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if layout == AsciiLayout::Auto {
            layout = AsciiLayout::from_fields(fields.len()).ok_or_else(|| Error::Parse {
                line: line_no,
                msg: format!("expected 3, 4, 6 or 7 fields, found {}", fields.len()),
            })?;
        }
        if fields.len() != layout.fields() {
            return Err(Error::Parse {
                line: line_no,
                msg: format!(
                    "expected {} fields, found {}",
                    layout.fields(),
                    fields.len()
                ),
            });
        }
        let num = |k: usize| -> Result<f64> {
            let v: f64 = fields[k].parse().map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("cannot parse `{}` as a number", fields[k]),
            })?;
            if !v.is_finite() {
                return Err(Error::invalid(format!(
                    "non-finite value on line {line_no}"
                )));
            }
            Ok(v)
        };
        coords.push([num(0)?, num(1)?, num(2)?]);
        if layout.has_rgb() {
            colors.push([num(3)?, num(4)?, num(5)?]);
        }
        if layout.has_label() {
            let k = fields.len() - 1;
            let l: u32 = fields[k].parse().map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("cannot parse `{}` as a label", fields[k]),
            })?;
            labels.push(l);
        }
    }
    if coords.is_empty() {
        return Err(Error::Parse {
            line: 0,
            msg: "no points in file".into(),
        });
    }
    PointCloud::new(
        coords,
        layout.has_rgb().then_some(colors),
        layout.has_label().then_some(labels),
    )
}

pub fn write_ascii(cloud: &PointCloud, w: &mut impl Write) -> Result<()> {
    for i in 0..cloud.len() {
        let p = cloud.coords()[i];
        write!(w, "{} {} {}", p[0], p[1], p[2])?;
        if let Some(c) = cloud.colors() {
            write!(w, " {} {} {}", c[i][0], c[i][1], c[i][2])?;
        }
        if let Some(l) = cloud.labels() {
            write!(w, " {}", l[i])?;
        }
        writeln!(w)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum PlyType {
    Float,
    Double,
    UChar,
    Int,
    UInt,
}

impl PlyType {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "float" | "float32" => PlyType::Float,
            "double" | "float64" => PlyType::Double,
            "uchar" | "uint8" => PlyType::UChar,
            "int" | "int32" => PlyType::Int,
            "uint" | "uint32" => PlyType::UInt,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            PlyType::UChar => 1,
            PlyType::Float | PlyType::Int | PlyType::UInt => 4,
            PlyType::Double => 8,
        }
    }

    fn read(self, b: &[u8]) -> f64 {
        match self {
            PlyType::Float => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            PlyType::Double => f64::from_le_bytes(b[..8].try_into().unwrap()),
            PlyType::UChar => b[0] as f64,
            PlyType::Int => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            PlyType::UInt => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
        }
    }
}

pub fn parse_ply(bytes: &[u8]) -> Result<PointCloud> {
    let end_tag = b"end_header\n";
    let header_end = bytes
        .windows(end_tag.len())
        .position(|w| w == end_tag)
        .ok_or_else(|| Error::Parse {
            line: 0,
            msg: "missing end_header".into(),
        })?
        + end_tag.len();
    let header = std::str::from_utf8(&bytes[..header_end]).map_err(|_| Error::Parse {
        line: 0,
        msg: "header is not UTF-8".into(),
    })?;

    let mut count: Option<usize> = None;
    let mut props: Vec<(String, PlyType)> = Vec::new();
    for (k, line) in header.lines().enumerate() {
        let line_no = k + 1;
        let tok: Vec<&str> = line.split_whitespace().collect();
        let perr = |msg: String| Error::Parse { line: line_no, msg };
        match tok.first().copied() {
            Some("ply") if k == 0 => {}
            _ if k == 0 => return Err(perr("missing `ply` magic".into())),
            Some("format") => {
                if tok.get(1) != Some(&"binary_little_endian") {
                    return Err(perr(format!("unsupported format `{}`", line)));
                }
            }
            Some("comment") | Some("obj_info") | Some("end_header") => {}
            Some("element") => {
                if tok.get(1) != Some(&"vertex") || count.is_some() {
                    return Err(perr("only a single `vertex` element is supported".into()));
                }
                count = Some(
                    tok.get(2)
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| perr("bad vertex count".into()))?,
                );
            }
            Some("property") => {
                if tok.len() != 3 {
                    return Err(perr("list properties are not supported".into()));
                }
                let ty = PlyType::parse(tok[1])
                    .ok_or_else(|| perr(format!("unsupported property type `{}`", tok[1])))?;
                let name = tok[2];
                let allowed = match name {
                    "x" | "y" | "z" => matches!(ty, PlyType::Float | PlyType::Double),
                    "red" | "green" | "blue" => ty == PlyType::UChar,
                    "label" => matches!(ty, PlyType::Int | PlyType::UInt),
                    _ => return Err(perr(format!("unsupported property `{name}`"))),
                };
                if !allowed {
                    return Err(perr(format!("property `{name}` has unsupported type")));
                }
                props.push((name.to_string(), ty));
            }
            Some(other) => return Err(perr(format!("unexpected header keyword `{other}`"))),
            None => {}
        }
    }
    let n = count.ok_or_else(|| Error::Parse {
        line: 0,
        msg: "no vertex element".into(),
    })?;
    let find = |name: &str| props.iter().position(|(p, _)| p == name);
    let (xi, yi, zi) = match (find("x"), find("y"), find("z")) {
        (Some(x), Some(y), Some(z)) => (x, y, z),
        _ => {
            return Err(Error::Parse {
                line: 0,
                msg: "x, y and z are required".into(),
            })
        }
    };
    let rgb = match (find("red"), find("green"), find("blue")) {
        (Some(r), Some(g), Some(b)) => Some([r, g, b]),
        (None, None, None) => None,
        _ => {
            return Err(Error::Parse {
                line: 0,
                msg: "partial color properties".into(),
            })
        }
    };
    let label = find("label");

    let mut offsets = Vec::with_capacity(props.len());
    let mut stride = 0;
    for (_, ty) in &props {
        offsets.push(stride);
        stride += ty.size();
    }
    let body = &bytes[header_end..];
    if body.len() < n * stride {
        return Err(Error::Parse {
            line: 0,
            msg: format!("expected {} vertex bytes, found {}", n * stride, body.len()),
        });
    }
    let mut coords = Vec::with_capacity(n);
    let mut colors = rgb.map(|_| Vec::with_capacity(n));
    let mut labels = label.map(|_| Vec::with_capacity(n));
    for i in 0..n {
        let rec = &body[i * stride..(i + 1) * stride];
        let get = |k: usize| props[k].1.read(&rec[offsets[k]..]);
        let p = [get(xi), get(yi), get(zi)];
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite coordinate in vertex {i}"
            )));
        }
        coords.push(p);
        if let (Some(idx), Some(c)) = (rgb, colors.as_mut()) {
            c.push([
                get(idx[0]) / 255.0,
                get(idx[1]) / 255.0,
                get(idx[2]) / 255.0,
            ]);
        }
        if let (Some(k), Some(l)) = (label, labels.as_mut()) {
            let v = get(k);
            if v < 0.0 {
                return Err(Error::invalid(format!("negative label in vertex {i}")));
            }
            l.push(v as u32);
        }
    }
    PointCloud::new(coords, colors, labels)
}

pub fn write_ply(cloud: &PointCloud, w: &mut impl Write) -> Result<()> {
    writeln!(w, "ply")?;
    writeln!(w, "format binary_little_endian 1.0")?;
    writeln!(w, "element vertex {}", cloud.len())?;
    for c in ["x", "y", "z"] {
        writeln!(w, "property float {c}")?;
    }
    if cloud.colors().is_some() {
        for c in ["red", "green", "blue"] {
            writeln!(w, "property uchar {c}")?;
        }
    }
    if cloud.labels().is_some() {
        writeln!(w, "property int label")?;
    }
    writeln!(w, "end_header")?;
    for i in 0..cloud.len() {
        for v in cloud.coords()[i] {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
        if let Some(c) = cloud.colors() {
            for v in c[i] {
                w.write_all(&[to_u8(v)])?;
            }
        }
        if let Some(l) = cloud.labels() {
            w.write_all(&(l[i] as i32).to_le_bytes())?;
        }
    }
    Ok(())
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Deterministic per-id color, used to paint components or predicted classes.
pub fn palette_color(id: usize) -> Point3 {
    let mut h = (id as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    h ^= h >> 29;
    h = h.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    h ^= h >> 32;
    let c = |s: u32| 0.15 + 0.8 * (((h >> s) & 0xff) as f64 / 255.0);
    [c(0), c(8), c(16)]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_line_xyz_file() {
        let c = parse_ascii("0 0 0\n1 0 0\n0 1 0\n", AsciiLayout::Auto).unwrap();
        assert_eq!(c.len(), 3);
        assert!(c.labels().is_none());
        assert!(c.colors().is_none());
        assert_eq!(c.coords()[1], [1.0, 0.0, 0.0]);
    }

    #[test]
    fn comments_and_blank_lines_are_skipped() {
        let c = parse_ascii(
            "# header\n\n0 0 0 3 # trailing\n1 1 1 2\n",
            AsciiLayout::Auto,
        )
        .unwrap();
        assert_eq!(c.labels(), Some(&[3u32, 2][..]));
    }

    #[test]
    fn short_line_names_the_line() {
        let text = "0 0 0 0.1 0.2 0.3 1\n1 1 1 0.5 0.5\n";
        match parse_ascii(text, AsciiLayout::XyzRgbLabel) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn non_finite_value_is_a_validation_error() {
        assert!(matches!(
            parse_ascii("0 0 inf\n", AsciiLayout::Auto),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn ply_rejects_ascii_format() {
        let bytes = b"ply\nformat ascii 1.0\nelement vertex 0\nend_header\n";
        assert!(matches!(parse_ply(bytes), Err(Error::Parse { .. })));
    }

    #[test]
    fn ply_round_trip_with_colors_and_labels() {
        let cloud = PointCloud::new(
            vec![[0.5, -1.25, 3.0], [2.0, 0.0, 1.0]],
            Some(vec![[1.0, 0.0, 0.2], [0.0, 1.0, 1.0]]),
            Some(vec![4, 0]),
        )
        .unwrap();
        let mut buf = Vec::new();
        write_ply(&cloud, &mut buf).unwrap();
        let back = parse_ply(&buf).unwrap();
        assert_eq!(back.coords(), cloud.coords());
        assert_eq!(back.labels(), cloud.labels());
        assert_eq!(back.colors().unwrap()[0][0], 1.0);
        assert_eq!(back.colors().unwrap()[0][2], 51.0 / 255.0);
    }
}
