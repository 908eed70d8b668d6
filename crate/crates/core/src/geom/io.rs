//! Readers for xyz / ply / obj point data and writers for meshes.
//!
//! PLY support covers `ascii 1.0` and `binary_little_endian 1.0` with
//! vertex positions and optional `nx ny nz` properties. Faces are skipped
//! when loading a point cloud.

use std::io::Write;
use std::path::Path;

use super::{GeomError, Mesh, PointCloud, Vec3};

pub fn load_point_cloud(path: impl AsRef<Path>) -> Result<PointCloud, GeomError> {
    let path = path.as_ref();
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .unwrap_or_default();
    let bytes = std::fs::read(path)?;
    let pc = match ext.as_str() {
        "xyz" => parse_xyz(&String::from_utf8_lossy(&bytes))?,
        "ply" => parse_ply(&bytes)?,
        "obj" => parse_obj(&String::from_utf8_lossy(&bytes))?,
        other => return Err(GeomError::UnsupportedFormat(other.to_string())),
    };
    if pc.is_empty() {
        return Err(GeomError::EmptyCloud);
    }
    if !pc.is_finite() {
        return Err(GeomError::Invalid("non-finite coordinate".into()));
    }
    Ok(pc)
}

fn parse_floats(line: &str, lineno: usize) -> Result<Vec<f64>, GeomError> {
    line.split_whitespace()
        .map(|tok| {
            tok.parse::<f64>().map_err(|_| GeomError::Parse {
                line: lineno,
                msg: format!("not a number: {tok:?}"),
            })
        })
        .collect()
}

/// Whitespace-separated records of 3 (position) or 6 (position + normal) floats.
pub fn parse_xyz(text: &str) -> Result<PointCloud, GeomError> {
    let mut points = Vec::new();
    let mut normals = Vec::new();
    let mut width = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let vals = parse_floats(line, i + 1)?;
        if vals.len() != 3 && vals.len() != 6 {
            return Err(GeomError::Parse {
                line: i + 1,
                msg: format!("expected 3 or 6 values, found {}", vals.len()),
            });
        }
        match width {
            None => width = Some(vals.len()),
            Some(w) if w != vals.len() => {
                return Err(GeomError::Parse { line: i + 1, msg: "inconsistent record width".into() })
            }
            _ => {}
        }
        points.push([vals[0], vals[1], vals[2]]);
        if vals.len() == 6 {
            normals.push([vals[3], vals[4], vals[5]]);
        }
    }
    finish(points, normals)
}

fn finish(points: Vec<Vec3>, normals: Vec<Vec3>) -> Result<PointCloud, GeomError> {
    if points.is_empty() {
        return Err(GeomError::EmptyCloud);
    }
    if normals.len() == points.len() {
        PointCloud::with_normals(points, normals)
    } else {
        Ok(PointCloud::new(points))
    }
}

/// `v` and `vn` records. When the counts match, `vn` are taken as per-vertex normals.
pub fn parse_obj(text: &str) -> Result<PointCloud, GeomError> {
    let mut points = Vec::new();
    let mut normals = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let mut it = line.splitn(2, char::is_whitespace);
        let tag = it.next().unwrap_or("");
        let rest = it.next().unwrap_or("");
        let target = match tag {
            "v" => &mut points,
            "vn" => &mut normals,
            _ => continue,
        };
        let vals = parse_floats(rest, i + 1)?;
        // `v x y z [w]` and optional per-vertex colours are tolerated.
        if vals.len() < 3 {
            return Err(GeomError::Parse { line: i + 1, msg: format!("{tag} needs 3 values") });
        }
        target.push([vals[0], vals[1], vals[2]]);
    }
    finish(points, normals)
}

/// Vertices and faces of an OBJ file. Polygons are fan-triangulated; texture
/// and normal indices (`f 1/2/3`) and negative indices are accepted.
pub fn parse_obj_mesh(text: &str) -> Result<Mesh, GeomError> {
    let mut mesh = Mesh::default();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let mut it = line.splitn(2, char::is_whitespace);
        let tag = it.next().unwrap_or("");
        let rest = it.next().unwrap_or("");
        match tag {
            "v" => {
                let vals = parse_floats(rest, i + 1)?;
                if vals.len() < 3 {
                    return Err(GeomError::Parse { line: i + 1, msg: "v needs 3 values".into() });
                }
                mesh.vertices.push([vals[0], vals[1], vals[2]]);
            }
            "f" => {
                let n = mesh.vertices.len() as i64;
                let idx = rest
                    .split_whitespace()
                    .map(|tok| {
                        let head = tok.split('/').next().unwrap_or("");
                        let v: i64 = head.parse().map_err(|_| GeomError::Parse { line: i + 1, msg: format!("bad face index {tok:?}") })?;
                        let v = if v < 0 { n + v } else { v - 1 };
                        if v < 0 || v >= n {
                            return Err(GeomError::Parse { line: i + 1, msg: format!("face index {tok} out of range") });
                        }
                        Ok(v as usize)
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                if idx.len() < 3 {
                    return Err(GeomError::Parse { line: i + 1, msg: "face needs 3 vertices".into() });
                }
                for k in 1..idx.len() - 1 {
                    mesh.triangles.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    Ok(mesh)
}

pub fn load_obj_mesh(path: impl AsRef<Path>) -> Result<Mesh, GeomError> {
    parse_obj_mesh(&std::fs::read_to_string(path)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum PlyFormat {
    Ascii,
    BinaryLe,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum PlyScalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl PlyScalar {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => Self::I8,
            "uchar" | "uint8" => Self::U8,
            "short" | "int16" => Self::I16,
            "ushort" | "uint16" => Self::U16,
            "int" | "int32" => Self::I32,
            "uint" | "uint32" => Self::U32,
            "float" | "float32" => Self::F32,
            "double" | "float64" => Self::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Self::I8 | Self::U8 => 1,
            Self::I16 | Self::U16 => 2,
            Self::I32 | Self::U32 | Self::F32 => 4,
            Self::F64 => 8,
        }
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Self::I8 => b[0] as i8 as f64,
            Self::U8 => b[0] as f64,
            Self::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Self::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Self::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Self::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Self::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Self::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug, Clone)]
enum PlyProperty {
    Scalar { name: String, ty: PlyScalar },
    List { count: PlyScalar, item: PlyScalar },
}

#[derive(Debug, Clone)]
struct PlyElement {
    name: String,
    count: usize,
    props: Vec<PlyProperty>,
}

pub fn parse_ply(bytes: &[u8]) -> Result<PointCloud, GeomError> {
    let perr = |line: usize, msg: &str| GeomError::Parse { line, msg: msg.to_string() };
    // Header is ascii terminated by "end_header\n".
    let marker = b"end_header";
    let hdr_end = bytes
        .windows(marker.len())
        .position(|w| w == marker)
        .ok_or_else(|| perr(1, "missing end_header"))?;
    let mut body_start = hdr_end + marker.len();
    if bytes.get(body_start) == Some(&b'\r') {
        body_start += 1;
    }
    if bytes.get(body_start) == Some(&b'\n') {
        body_start += 1;
    }
    let header = std::str::from_utf8(&bytes[..hdr_end]).map_err(|_| perr(1, "non-utf8 header"))?;

    let mut format = None;
    let mut elements: Vec<PlyElement> = Vec::new();
    for (i, line) in header.lines().enumerate() {
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["ply"] | [] => {}
            ["comment", ..] | ["obj_info", ..] => {}
            ["format", f, _ver] => {
                format = Some(match *f {
                    "ascii" => PlyFormat::Ascii,
                    "binary_little_endian" => PlyFormat::BinaryLe,
                    other => return Err(GeomError::UnsupportedFormat(format!("ply {other}"))),
                })
            }
            ["element", name, count] => elements.push(PlyElement {
                name: name.to_string(),
                count: count.parse().map_err(|_| perr(i + 1, "bad element count"))?,
                props: Vec::new(),
            }),
            ["property", "list", c, t, _name] => {
                let el = elements.last_mut().ok_or_else(|| perr(i + 1, "property before element"))?;
                el.props.push(PlyProperty::List {
                    count: PlyScalar::parse(c).ok_or_else(|| perr(i + 1, "bad list count type"))?,
                    item: PlyScalar::parse(t).ok_or_else(|| perr(i + 1, "bad list item type"))?,
                });
            }
            ["property", t, name] => {
                let el = elements.last_mut().ok_or_else(|| perr(i + 1, "property before element"))?;
                el.props.push(PlyProperty::Scalar {
                    name: name.to_string(),
                    ty: PlyScalar::parse(t).ok_or_else(|| perr(i + 1, "bad property type"))?,
                });
            }
            _ => return Err(perr(i + 1, &format!("unrecognised header line {line:?}"))),
        }
    }
    let format = format.ok_or_else(|| perr(1, "missing format line"))?;

    let mut points = Vec::new();
    let mut normals = Vec::new();
    let body = &bytes[body_start..];
    let mut cursor = 0usize;
    let text_body = if format == PlyFormat::Ascii {
        Some(String::from_utf8_lossy(body).into_owned())
    } else {
        None
    };
    let mut ascii_lines = text_body.as_deref().map(|t| t.lines().filter(|l| !l.trim().is_empty()));
    let header_lines = header.lines().count() + 1;
    let mut record = 0usize;

    for el in &elements {
        let slot = |name: &str| {
            el.props.iter().position(|p| matches!(p, PlyProperty::Scalar { name: n, .. } if n == name))
        };
        let (ix, iy, iz) = (slot("x"), slot("y"), slot("z"));
        let (inx, iny, inz) = (slot("nx"), slot("ny"), slot("nz"));
        let is_vertex = el.name == "vertex";
        if is_vertex && (ix.is_none() || iy.is_none() || iz.is_none()) {
            return Err(perr(1, "vertex element lacks x/y/z"));
        }
        for _ in 0..el.count {
            record += 1;
            let mut vals = vec![0.0f64; el.props.len()];
            match format {
                PlyFormat::Ascii => {
                    let line = ascii_lines
                        .as_mut()
                        .and_then(|l| l.next())
                        .ok_or_else(|| perr(header_lines + record, "truncated body"))?;
                    let nums = parse_floats(line, header_lines + record)?;
                    let mut k = 0usize;
                    for (pi, p) in el.props.iter().enumerate() {
                        match p {
                            PlyProperty::Scalar { .. } => {
                                vals[pi] = *nums
                                    .get(k)
                                    .ok_or_else(|| perr(header_lines + record, "short record"))?;
                                k += 1;
                            }
                            PlyProperty::List { .. } => {
                                let n = *nums
                                    .get(k)
                                    .ok_or_else(|| perr(header_lines + record, "short record"))?
                                    as usize;
                                k += 1 + n;
                            }
                        }
                    }
                }
                PlyFormat::BinaryLe => {
                    for (pi, p) in el.props.iter().enumerate() {
                        match *p {
                            PlyProperty::Scalar { ty, .. } => {
                                let sz = ty.size();
                                let b = body
                                    .get(cursor..cursor + sz)
                                    .ok_or_else(|| perr(header_lines, "truncated binary body"))?;
                                vals[pi] = ty.read_le(b);
                                cursor += sz;
                            }
                            PlyProperty::List { count, item } => {
                                let b = body
                                    .get(cursor..cursor + count.size())
                                    .ok_or_else(|| perr(header_lines, "truncated binary body"))?;
                                let n = count.read_le(b) as usize;
                                cursor += count.size() + n * item.size();
                                if cursor > body.len() {
                                    return Err(perr(header_lines, "truncated binary body"));
                                }
                            }
                        }
                    }
                }
            }
            if is_vertex {
                points.push([vals[ix.unwrap()], vals[iy.unwrap()], vals[iz.unwrap()]]);
                if let (Some(a), Some(b), Some(c)) = (inx, iny, inz) {
                    normals.push([vals[a], vals[b], vals[c]]);
                }
            }
        }
    }
    finish(points, normals)
}

pub fn write_xyz(path: impl AsRef<Path>, pc: &PointCloud) -> Result<(), GeomError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for (i, p) in pc.points.iter().enumerate() {
        match &pc.normals {
            Some(ns) => {
                let n = ns[i];
                writeln!(out, "{} {} {} {} {} {}", p[0], p[1], p[2], n[0], n[1], n[2])?
            }
            None => writeln!(out, "{} {} {}", p[0], p[1], p[2])?,
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_obj(path: impl AsRef<Path>, mesh: &Mesh) -> Result<(), GeomError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for v in &mesh.vertices {
        writeln!(out, "v {} {} {}", v[0], v[1], v[2])?;
    }
    for t in &mesh.triangles {
        writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1)?;
    }
    out.flush()?;
    Ok(())
}

/// Binary little-endian PLY with `double` positions and `uint` face indices.
pub fn write_ply_binary(path: impl AsRef<Path>, mesh: &Mesh) -> Result<(), GeomError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(
        out,
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\nelement face {}\nproperty list uchar uint vertex_indices\nend_header\n",
        mesh.vertices.len(),
        mesh.triangles.len()
    )?;
    for v in &mesh.vertices {
        for c in v {
            out.write_all(&c.to_le_bytes())?;
        }
    }
    for t in &mesh.triangles {
        out.write_all(&[3u8])?;
        for &i in t {
            out.write_all(&(i as u32).to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}
