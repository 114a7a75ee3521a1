//! OBJ and PLY (ASCII and binary little-endian) readers and writers.
//!
//! PLY files may carry extra per-vertex scalar properties; they round-trip
//! through [`PlyData::scalars`].

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use super::{PointCloud, TriMesh, Vec3};
use crate::{Error, Result};

/// Write `bytes` to a sibling temp file, then rename over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidInput(format!("not a file path: {}", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Loads an OBJ or PLY mesh and multiplies every coordinate by `scale_to_m`.
pub fn load_mesh(path: &Path, scale_to_m: f64) -> Result<TriMesh> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase());
    let (vertices, faces) = match ext.as_deref() {
        Some("obj") => read_obj(path)?,
        Some("ply") => {
            let d = read_ply(path)?;
            (d.vertices, d.faces)
        }
        _ => {
            return Err(Error::parse(path, 0, "unsupported mesh format (expected .obj or .ply)"));
        }
    };
    let vertices = vertices.into_iter().map(|v| v * scale_to_m).collect();
    TriMesh::new(vertices, faces).map_err(|e| match e {
        Error::EmptyMesh(m) => Error::EmptyMesh(format!("{m} in {}", path.display())),
        other => other,
    })
}

pub fn read_obj(path: &Path) -> Result<(Vec<Vec3>, Vec<[usize; 3]>)> {
    let text = fs::read_to_string(path)?;
    parse_obj(&text, path)
}

pub fn parse_obj(text: &str, path: &Path) -> Result<(Vec<Vec3>, Vec<[usize; 3]>)> {
    let mut vertices = Vec::new();
    let mut polys: Vec<(usize, Vec<i64>)> = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let ln = ln + 1;
        let line = line.split('#').next().unwrap_or("").trim();
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let c: Vec<f64> = it
                    .take(3)
                    .map(|s| s.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| Error::parse(path, ln, format!("bad vertex coordinate: {e}")))?;
                if c.len() != 3 {
                    return Err(Error::parse(path, ln, "vertex needs three coordinates"));
                }
                vertices.push(Vec3::new(c[0], c[1], c[2]));
            }
            Some("f") => {
                let idx: Vec<i64> = it
                    .map(|tok| tok.split('/').next().unwrap_or("").parse::<i64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| Error::parse(path, ln, format!("bad face index: {e}")))?;
                if idx.len() < 3 {
                    return Err(Error::parse(path, ln, "face needs at least three vertices"));
                }
                polys.push((ln, idx));
            }
            _ => {}
        }
    }
    let n = vertices.len() as i64;
    let mut faces = Vec::new();
    for (ln, idx) in polys {
        let resolved: Vec<usize> = idx
            .iter()
            .map(|&i| {
                let r = if i < 0 { n + i } else { i - 1 };
                if i == 0 || r < 0 || r >= n {
                    Err(Error::parse(path, ln, format!("face index {i} out of range")))
                } else {
                    Ok(r as usize)
                }
            })
            .collect::<Result<_>>()?;
        for k in 1..resolved.len() - 1 {
            faces.push([resolved[0], resolved[k], resolved[k + 1]]);
        }
    }
    Ok((vertices, faces))
}

pub fn write_obj(path: &Path, mesh: &TriMesh) -> Result<()> {
    let mut s = String::new();
    for v in mesh.vertices() {
        s.push_str(&format!("v {} {} {}\n", v.x, v.y, v.z));
    }
    for f in mesh.faces() {
        s.push_str(&format!("f {} {} {}\n", f[0] + 1, f[1] + 1, f[2] + 1));
    }
    write_atomic(path, s.as_bytes())
}

/// Contents of a PLY file: vertex positions, optional normals, optional
/// triangle faces and any number of named per-vertex scalars.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlyData {
    pub vertices: Vec<Vec3>,
    pub normals: Option<Vec<Vec3>>,
    pub faces: Vec<[usize; 3]>,
    pub scalars: Vec<(String, Vec<f64>)>,
}

impl PlyData {
    pub fn from_cloud(cloud: &PointCloud) -> Self {
        Self {
            vertices: cloud.points.clone(),
            normals: cloud.normals.clone(),
            ..Default::default()
        }
    }

    pub fn from_mesh(mesh: &TriMesh) -> Self {
        Self {
            vertices: mesh.vertices().to_vec(),
            faces: mesh.faces().to_vec(),
            ..Default::default()
        }
    }

    pub fn with_scalar(mut self, name: &str, values: Vec<f64>) -> Self {
        self.scalars.push((name.to_string(), values));
        self
    }

    pub fn scalar(&self, name: &str) -> Option<&[f64]> {
        self.scalars
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }

    pub fn to_cloud(&self) -> PointCloud {
        PointCloud {
            points: self.vertices.clone(),
            normals: self.normals.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Single(String, Scalar),
    List(String, Scalar, Scalar),
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Format {
    Ascii,
    BinaryLe,
}

fn parse_header<R: BufRead>(r: &mut R, path: &Path) -> Result<(Format, Vec<Element>, usize)> {
    let mut line = String::new();
    let mut ln = 0;
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            return Err(Error::parse(path, ln, "unexpected end of PLY header"));
        }
        ln += 1;
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["ply"] if ln == 1 => {}
            _ if ln == 1 => return Err(Error::parse(path, 1, "missing 'ply' magic")),
            ["format", "ascii", _] => format = Some(Format::Ascii),
            ["format", "binary_little_endian", _] => format = Some(Format::BinaryLe),
            ["format", f, _] => return Err(Error::parse(path, ln, format!("unsupported PLY format {f}"))),
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count
                    .parse()
                    .map_err(|_| Error::parse(path, ln, "bad element count"))?,
                props: Vec::new(),
            }),
            ["property", "list", ct, it, name] => {
                let (Some(ct), Some(it)) = (Scalar::parse(ct), Scalar::parse(it)) else {
                    return Err(Error::parse(path, ln, "bad list property type"));
                };
                elements
                    .last_mut()
                    .ok_or_else(|| Error::parse(path, ln, "property before element"))?
                    .props
                    .push(Property::List(name.to_string(), ct, it));
            }
            ["property", ty, name] => {
                let ty = Scalar::parse(ty).ok_or_else(|| Error::parse(path, ln, "bad property type"))?;
                elements
                    .last_mut()
                    .ok_or_else(|| Error::parse(path, ln, "property before element"))?
                    .props
                    .push(Property::Single(name.to_string(), ty));
            }
            ["end_header"] => break,
            _ => return Err(Error::parse(path, ln, format!("unrecognised header line: {}", line.trim()))),
        }
    }
    let format = format.ok_or_else(|| Error::parse(path, ln, "missing format line"))?;
    Ok((format, elements, ln))
}

/// Values of one element record: scalars per property, lists flattened.
type Record = Vec<Vec<f64>>;

fn read_records_ascii(lines: &mut std::str::Lines, el: &Element, path: &Path, ln: &mut usize) -> Result<Vec<Record>> {
    let mut out = Vec::with_capacity(el.count);
    for _ in 0..el.count {
        *ln += 1;
        let line = lines
            .next()
            .ok_or_else(|| Error::parse(path, *ln, format!("truncated {} data", el.name)))?;
        let mut toks = line.split_whitespace();
        let mut next = || -> Result<f64> {
            toks.next()
                .ok_or_else(|| Error::parse(path, *ln, "missing value"))?
                .parse::<f64>()
                .map_err(|e| Error::parse(path, *ln, format!("bad value: {e}")))
        };
        let mut rec = Vec::with_capacity(el.props.len());
        for p in &el.props {
            match p {
                Property::Single(..) => rec.push(vec![next()?]),
                Property::List(..) => {
                    let n = next()? as usize;
                    rec.push((0..n).map(|_| next()).collect::<Result<_>>()?);
                }
            }
        }
        out.push(rec);
    }
    Ok(out)
}

fn read_records_binary(data: &[u8], pos: &mut usize, el: &Element, path: &Path) -> Result<Vec<Record>> {
    let mut take = |n: usize| -> Result<&[u8]> {
        if *pos + n > data.len() {
            return Err(Error::parse(path, 0, format!("truncated binary {} data", el.name)));
        }
        let s = &data[*pos..*pos + n];
        *pos += n;
        Ok(s)
    };
    let mut out = Vec::with_capacity(el.count);
    for _ in 0..el.count {
        let mut rec = Vec::with_capacity(el.props.len());
        for p in &el.props {
            match *p {
                Property::Single(_, t) => rec.push(vec![t.read_le(take(t.size())?)]),
                Property::List(_, ct, it) => {
                    let n = ct.read_le(take(ct.size())?) as usize;
                    let mut v = Vec::with_capacity(n);
                    for _ in 0..n {
                        v.push(it.read_le(take(it.size())?));
                    }
                    rec.push(v);
                }
            }
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn read_ply(path: &Path) -> Result<PlyData> {
    let mut reader = BufReader::new(fs::File::open(path)?);
    let (format, elements, header_lines) = parse_header(&mut reader, path)?;
    let mut body = Vec::new();
    reader.read_to_end(&mut body)?;

    let mut tables: Vec<(Element, Vec<Record>)> = Vec::new();
    match format {
        Format::Ascii => {
            let text = String::from_utf8(body).map_err(|_| Error::parse(path, header_lines, "non-UTF8 ASCII body"))?;
            let mut lines = text.lines();
            let mut ln = header_lines;
            for el in elements {
                let recs = read_records_ascii(&mut lines, &el, path, &mut ln)?;
                tables.push((el, recs));
            }
        }
        Format::BinaryLe => {
            let mut pos = 0;
            for el in elements {
                let recs = read_records_binary(&body, &mut pos, &el, path)?;
                tables.push((el, recs));
            }
        }
    }

    let mut out = PlyData::default();
    for (el, recs) in tables {
        match el.name.as_str() {
            "vertex" => {
                let col = |name: &str| {
                    el.props.iter().position(|p| matches!(p, Property::Single(n, _) if n == name))
                };
                let (Some(x), Some(y), Some(z)) = (col("x"), col("y"), col("z")) else {
                    return Err(Error::parse(path, 0, "vertex element lacks x/y/z"));
                };
                out.vertices = recs.iter().map(|r| Vec3::new(r[x][0], r[y][0], r[z][0])).collect();
                if let (Some(nx), Some(ny), Some(nz)) = (col("nx"), col("ny"), col("nz")) {
                    out.normals = Some(recs.iter().map(|r| Vec3::new(r[nx][0], r[ny][0], r[nz][0])).collect());
                }
                for (k, p) in el.props.iter().enumerate() {
                    if let Property::Single(name, _) = p {
                        if !["x", "y", "z", "nx", "ny", "nz"].contains(&name.as_str()) {
                            out.scalars.push((name.clone(), recs.iter().map(|r| r[k][0]).collect()));
                        }
                    }
                }
            }
            "face" => {
                let k = el
                    .props
                    .iter()
                    .position(|p| matches!(p, Property::List(n, _, _) if n == "vertex_indices" || n == "vertex_index"))
                    .ok_or_else(|| Error::parse(path, 0, "face element lacks vertex_indices"))?;
                for r in &recs {
                    let idx: Vec<usize> = r[k].iter().map(|&v| v as usize).collect();
                    if idx.len() < 3 {
                        return Err(Error::parse(path, 0, "face with fewer than three vertices"));
                    }
                    for j in 1..idx.len() - 1 {
                        out.faces.push([idx[0], idx[j], idx[j + 1]]);
                    }
                }
            }
            _ => {}
        }
    }
    if let Some(f) = out.faces.iter().find(|f| f.iter().any(|&i| i >= out.vertices.len())) {
        return Err(Error::parse(path, 0, format!("face {f:?} indexes past the vertex list")));
    }
    Ok(out)
}

/// Serialises PLY to bytes. Coordinates and scalars are written as doubles so
/// values round-trip exactly.
pub fn ply_bytes(data: &PlyData, binary: bool) -> Result<Vec<u8>> {
    let n = data.vertices.len();
    if data.normals.as_ref().is_some_and(|v| v.len() != n) || data.scalars.iter().any(|(_, v)| v.len() != n) {
        return Err(Error::InvalidInput("per-vertex attribute length mismatch".into()));
    }
    let mut h = String::from("ply\n");
    h.push_str(if binary {
        "format binary_little_endian 1.0\n"
    } else {
        "format ascii 1.0\n"
    });
    h.push_str(&format!("element vertex {n}\n"));
    for c in ["x", "y", "z"] {
        h.push_str(&format!("property double {c}\n"));
    }
    if data.normals.is_some() {
        for c in ["nx", "ny", "nz"] {
            h.push_str(&format!("property double {c}\n"));
        }
    }
    for (name, _) in &data.scalars {
        h.push_str(&format!("property double {name}\n"));
    }
    if !data.faces.is_empty() {
        h.push_str(&format!("element face {}\n", data.faces.len()));
        h.push_str("property list uchar int vertex_indices\n");
    }
    h.push_str("end_header\n");

    let mut out = h.into_bytes();
    for i in 0..n {
        let mut row: Vec<f64> = data.vertices[i].iter().copied().collect();
        if let Some(nm) = &data.normals {
            row.extend(nm[i].iter());
        }
        row.extend(data.scalars.iter().map(|(_, v)| v[i]));
        if binary {
            for v in row {
                out.extend_from_slice(&v.to_le_bytes());
            }
        } else {
            let s: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            out.extend_from_slice(s.join(" ").as_bytes());
            out.push(b'\n');
        }
    }
    for f in &data.faces {
        if binary {
            out.push(3);
            for &i in f {
                out.extend_from_slice(&(i as i32).to_le_bytes());
            }
        } else {
            out.extend_from_slice(format!("3 {} {} {}\n", f[0], f[1], f[2]).as_bytes());
        }
    }
    Ok(out)
}

pub fn write_ply(path: &Path, data: &PlyData, binary: bool) -> Result<()> {
    write_atomic(path, &ply_bytes(data, binary)?)
}
