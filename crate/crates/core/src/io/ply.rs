//! PLY reader/writer for ASCII and binary little-endian files.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use crate::geometry::Point3;

#[derive(Debug, Error)]
pub enum PlyError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed PLY header: {0}")]
    MalformedHeader(String),
    #[error("element {element:?}: header declares {expected} entries, body has {found}")]
    CountMismatch {
        element: String,
        expected: usize,
        found: usize,
    },
    #[error("unsupported PLY format {0:?}")]
    UnsupportedFormat(String),
    #[error("malformed PLY body: {0}")]
    MalformedBody(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyFormat {
    Ascii,
    BinaryLittleEndian,
}

/// Storage width of the vertex coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlyDocument {
    pub vertices: Vec<Point3>,
    /// Triangles; polygons with more corners are fan-split on read.
    pub faces: Vec<[usize; 3]>,
    /// Extra scalar vertex properties, in header order.
    pub vertex_scalars: Vec<(String, Vec<f64>)>,
    pub precision: Precision,
}

impl PlyDocument {
    pub fn from_points(vertices: Vec<Point3>) -> Self {
        Self {
            vertices,
            faces: Vec::new(),
            vertex_scalars: Vec::new(),
            precision: Precision::F64,
        }
    }

    pub fn scalar(&self, name: &str) -> Option<&[f64]> {
        self.vertex_scalars
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
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

    fn decode(self, b: &[u8]) -> f64 {
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
    Scalar { name: String, ty: Scalar },
    List { name: String, count: Scalar, item: Scalar },
}

impl Property {
    fn name(&self) -> &str {
        match self {
            Property::Scalar { name, .. } | Property::List { name, .. } => name,
        }
    }
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

struct Header {
    format: PlyFormat,
    elements: Vec<Element>,
    body_offset: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header, PlyError> {
    let bad = |m: String| PlyError::MalformedHeader(m);
    let mut pos = 0;
    let mut next_line = || -> Option<String> {
        if pos >= bytes.len() {
            return None;
        }
        let end = bytes[pos..].iter().position(|&b| b == b'\n').map_or(bytes.len(), |e| pos + e);
        let line = String::from_utf8_lossy(&bytes[pos..end]).trim_end_matches('\r').to_string();
        pos = (end + 1).min(bytes.len());
        Some(line)
    };
    if next_line().as_deref().map(str::trim) != Some("ply") {
        return Err(bad("missing 'ply' magic".into()));
    }
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        let line = next_line().ok_or_else(|| bad("missing end_header".into()))?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.first().copied() {
            None | Some("comment") | Some("obj_info") => {}
            Some("format") => {
                if toks.len() != 3 {
                    return Err(bad(format!("bad format line {line:?}")));
                }
                format = Some(match toks[1] {
                    "ascii" => PlyFormat::Ascii,
                    "binary_little_endian" => PlyFormat::BinaryLittleEndian,
                    "binary_big_endian" => return Err(PlyError::UnsupportedFormat(toks[1].into())),
                    other => return Err(bad(format!("unknown format {other:?}"))),
                });
            }
            Some("element") => {
                if toks.len() != 3 {
                    return Err(bad(format!("bad element line {line:?}")));
                }
                let count = toks[2]
                    .parse()
                    .map_err(|_| bad(format!("bad element count {:?}", toks[2])))?;
                elements.push(Element {
                    name: toks[1].into(),
                    count,
                    properties: Vec::new(),
                });
            }
            Some("property") => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| bad("property before any element".into()))?;
                let ty = |s: &str| Scalar::parse(s).ok_or_else(|| bad(format!("unknown type {s:?}")));
                let prop = match toks.as_slice() {
                    ["property", "list", c, i, name] => Property::List {
                        name: (*name).into(),
                        count: ty(c)?,
                        item: ty(i)?,
                    },
                    ["property", t, name] => Property::Scalar {
                        name: (*name).into(),
                        ty: ty(t)?,
                    },
                    _ => return Err(bad(format!("bad property line {line:?}"))),
                };
                el.properties.push(prop);
            }
            Some("end_header") => break,
            Some(other) => return Err(bad(format!("unexpected header keyword {other:?}"))),
        }
    }
    let format = format.ok_or_else(|| bad("missing format line".into()))?;
    Ok(Header {
        format,
        elements,
        body_offset: pos,
    })
}

/// Raw rows: one `Vec<f64>` per property, lists flattened after their length.
type Row = Vec<Vec<f64>>;

struct AsciiBody<'a> {
    lines: std::iter::Peekable<std::str::Lines<'a>>,
}

impl AsciiBody<'_> {
    fn row(&mut self, el: &Element) -> Option<Result<Row, PlyError>> {
        let line = loop {
            let l = self.lines.next()?;
            if !l.trim().is_empty() {
                break l;
            }
        };
        let mut toks = line.split_whitespace();
        let mut next = |what: &str| -> Result<f64, PlyError> {
            let t = toks
                .next()
                .ok_or_else(|| PlyError::MalformedBody(format!("{}: missing {what}", el.name)))?;
            t.parse()
                .map_err(|_| PlyError::MalformedBody(format!("{}: bad number {t:?}", el.name)))
        };
        let mut row = Vec::with_capacity(el.properties.len());
        for p in &el.properties {
            match p {
                Property::Scalar { name, .. } => match next(name) {
                    Ok(v) => row.push(vec![v]),
                    Err(e) => return Some(Err(e)),
                },
                Property::List { name, .. } => {
                    let n = match next(name) {
                        Ok(n) if n >= 0.0 && n.fract() == 0.0 => n as usize,
                        Ok(_) => return Some(Err(PlyError::MalformedBody(format!("bad list length in {name}")))),
                        Err(e) => return Some(Err(e)),
                    };
                    let mut items = Vec::with_capacity(n);
                    for _ in 0..n {
                        match next(name) {
                            Ok(v) => items.push(v),
                            Err(e) => return Some(Err(e)),
                        }
                    }
                    row.push(items);
                }
            }
        }
        if toks.next().is_some() {
            return Some(Err(PlyError::MalformedBody(format!(
                "{}: extra values on line {line:?}",
                el.name
            ))));
        }
        Some(Ok(row))
    }

    fn has_more(&mut self) -> bool {
        while let Some(l) = self.lines.peek() {
            if l.trim().is_empty() {
                self.lines.next();
            } else {
                return true;
            }
        }
        false
    }
}

struct BinaryBody<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl BinaryBody<'_> {
    fn take(&mut self, ty: Scalar) -> Option<f64> {
        let n = ty.size();
        if self.pos + n > self.bytes.len() {
            return None;
        }
        let v = ty.decode(&self.bytes[self.pos..self.pos + n]);
        self.pos += n;
        Some(v)
    }

    fn row(&mut self, el: &Element) -> Option<Row> {
        let mut row = Vec::with_capacity(el.properties.len());
        for p in &el.properties {
            match *p {
                Property::Scalar { ty, .. } => row.push(vec![self.take(ty)?]),
                Property::List { count, item, .. } => {
                    let n = self.take(count)?;
                    let items = (0..n.max(0.0) as usize)
                        .map(|_| self.take(item))
                        .collect::<Option<Vec<_>>>()?;
                    row.push(items);
                }
            }
        }
        Some(row)
    }
}

fn parse(bytes: &[u8]) -> Result<PlyDocument, PlyError> {
    let header = parse_header(bytes)?;
    let body = &bytes[header.body_offset..];
    let mut ascii = match header.format {
        PlyFormat::Ascii => Some(AsciiBody {
            lines: std::str::from_utf8(body)
                .map_err(|_| PlyError::MalformedBody("ASCII body is not UTF-8".into()))?
                .lines()
                .peekable(),
        }),
        PlyFormat::BinaryLittleEndian => None,
    };
    let mut binary = BinaryBody { bytes: body, pos: 0 };

    let mut doc = PlyDocument::from_points(Vec::new());
    let mut saw_vertex = false;
    for el in &header.elements {
        let mut rows = Vec::with_capacity(el.count);
        for found in 0..el.count {
            let row = match ascii.as_mut() {
                Some(a) => a.row(el).transpose()?,
                None => binary.row(el),
            };
            match row {
                Some(r) => rows.push(r),
                None => {
                    return Err(PlyError::CountMismatch {
                        element: el.name.clone(),
                        expected: el.count,
                        found,
                    })
                }
            }
        }
        match el.name.as_str() {
            "vertex" => {
                saw_vertex = true;
                read_vertices(el, &rows, &mut doc)?;
            }
            "face" => read_faces(el, &rows, &mut doc)?,
            _ => {}
        }
    }
    let trailing = match ascii.as_mut() {
        Some(a) => a.has_more(),
        None => binary.pos < binary.bytes.len(),
    };
    if trailing {
        let last = header.elements.last();
        return Err(PlyError::CountMismatch {
            element: last.map_or_else(String::new, |e| e.name.clone()),
            expected: last.map_or(0, |e| e.count),
            found: last.map_or(0, |e| e.count) + 1,
        });
    }
    if !saw_vertex {
        return Err(PlyError::MalformedHeader("no vertex element".into()));
    }
    let n = doc.vertices.len();
    if let Some(f) = doc.faces.iter().find(|f| f.iter().any(|&i| i >= n)) {
        return Err(PlyError::MalformedBody(format!("face {f:?} indexes past {n} vertices")));
    }
    Ok(doc)
}

fn read_vertices(el: &Element, rows: &[Row], doc: &mut PlyDocument) -> Result<(), PlyError> {
    let find = |axis: &str| {
        el.properties
            .iter()
            .position(|p| matches!(p, Property::Scalar { name, .. } if name == axis))
            .ok_or_else(|| PlyError::MalformedHeader(format!("vertex element lacks property {axis}")))
    };
    let (ix, iy, iz) = (find("x")?, find("y")?, find("z")?);
    doc.precision = match &el.properties[ix] {
        Property::Scalar { ty: Scalar::F64, .. } => Precision::F64,
        _ => Precision::F32,
    };
    doc.vertices = rows.iter().map(|r| Point3::new(r[ix][0], r[iy][0], r[iz][0])).collect();
    doc.vertex_scalars = el
        .properties
        .iter()
        .enumerate()
        .filter(|(k, p)| ![ix, iy, iz].contains(k) && matches!(p, Property::Scalar { .. }))
        .map(|(k, p)| (p.name().to_string(), rows.iter().map(|r| r[k][0]).collect()))
        .collect();
    Ok(())
}

fn read_faces(el: &Element, rows: &[Row], doc: &mut PlyDocument) -> Result<(), PlyError> {
    let k = el
        .properties
        .iter()
        .position(|p| {
            matches!(p, Property::List { name, .. } if name == "vertex_indices" || name == "vertex_index")
        })
        .ok_or_else(|| PlyError::MalformedHeader("face element lacks vertex_indices".into()))?;
    for r in rows {
        let idx = &r[k];
        if idx.len() < 3 || idx.iter().any(|&v| v < 0.0 || v.fract() != 0.0) {
            return Err(PlyError::MalformedBody(format!("bad face {idx:?}")));
        }
        for t in 1..idx.len() - 1 {
            doc.faces.push([idx[0] as usize, idx[t] as usize, idx[t + 1] as usize]);
        }
    }
    Ok(())
}

pub fn read_ply(path: impl AsRef<Path>) -> Result<PlyDocument, PlyError> {
    parse(&fs::read(path)?)
}

/// Parses an in-memory PLY file.
pub fn parse_ply(bytes: &[u8]) -> Result<PlyDocument, PlyError> {
    parse(bytes)
}

pub fn write_ply(doc: &PlyDocument, path: impl AsRef<Path>, format: PlyFormat) -> Result<(), PlyError> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    out.write_all(&encode_ply(doc, format)?)?;
    out.flush()?;
    Ok(())
}

pub fn encode_ply(doc: &PlyDocument, format: PlyFormat) -> Result<Vec<u8>, PlyError> {
    let n = doc.vertices.len();
    if let Some((name, v)) = doc.vertex_scalars.iter().find(|(_, v)| v.len() != n) {
        return Err(PlyError::CountMismatch {
            element: format!("vertex property {name}"),
            expected: n,
            found: v.len(),
        });
    }
    let ty = match doc.precision {
        Precision::F32 => "float",
        Precision::F64 => "double",
    };
    let mut buf = Vec::new();
    let fmt = match format {
        PlyFormat::Ascii => "ascii",
        PlyFormat::BinaryLittleEndian => "binary_little_endian",
    };
    writeln!(buf, "ply\nformat {fmt} 1.0\nelement vertex {n}")?;
    for axis in ["x", "y", "z"] {
        writeln!(buf, "property {ty} {axis}")?;
    }
    for (name, _) in &doc.vertex_scalars {
        writeln!(buf, "property double {name}")?;
    }
    if !doc.faces.is_empty() {
        writeln!(buf, "element face {}\nproperty list uchar int vertex_indices", doc.faces.len())?;
    }
    writeln!(buf, "end_header")?;

    let coord = |v: f64| match doc.precision {
        Precision::F32 => (v as f32) as f64,
        Precision::F64 => v,
    };
    for (i, p) in doc.vertices.iter().enumerate() {
        match format {
            PlyFormat::Ascii => {
                let mut fields: Vec<String> = p.iter().map(|&c| coord(c).to_string()).collect();
                fields.extend(doc.vertex_scalars.iter().map(|(_, v)| v[i].to_string()));
                writeln!(buf, "{}", fields.join(" "))?;
            }
            PlyFormat::BinaryLittleEndian => {
                for &c in p.iter() {
                    match doc.precision {
                        Precision::F32 => buf.extend((c as f32).to_le_bytes()),
                        Precision::F64 => buf.extend(c.to_le_bytes()),
                    }
                }
                for (_, v) in &doc.vertex_scalars {
                    buf.extend(v[i].to_le_bytes());
                }
            }
        }
    }
    for f in &doc.faces {
        match format {
            PlyFormat::Ascii => writeln!(buf, "3 {} {} {}", f[0], f[1], f[2])?,
            PlyFormat::BinaryLittleEndian => {
                buf.push(3);
                for &i in f {
                    let i = i32::try_from(i)
                        .map_err(|_| PlyError::MalformedBody(format!("vertex index {i} too large")))?;
                    buf.extend(i.to_le_bytes());
                }
            }
        }
    }
    Ok(buf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const FIXTURE: &str = "ply
format ascii 1.0
comment three points
element vertex 3
property float x
property float y
property float z
end_header
0 0 0
1.5 -2 0.25
3 4 5
";

    #[test]
    fn ascii_fixture() {
        let doc = parse_ply(FIXTURE.as_bytes()).unwrap();
        assert_eq!(
            doc.vertices,
            vec![Point3::zeros(), Point3::new(1.5, -2.0, 0.25), Point3::new(3.0, 4.0, 5.0)]
        );
        assert_eq!(doc.precision, Precision::F32);
        assert!(doc.faces.is_empty());
    }

    fn random_doc(seed: u64, n: usize) -> PlyDocument {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vertices = (0..n)
            .map(|_| Point3::new(rng.random::<f64>() - 0.5, rng.random::<f64>() * 1e-7, rng.random::<f64>() * 3e5))
            .collect();
        PlyDocument::from_points(vertices)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let mut doc = random_doc(1, 1000);
        doc.faces = vec![[0, 1, 2], [2, 3, 4]];
        doc.vertex_scalars = vec![("saliency".into(), (0..1000).map(|i| i as f64 / 7.0).collect())];
        for format in [PlyFormat::Ascii, PlyFormat::BinaryLittleEndian] {
            let back = parse_ply(&encode_ply(&doc, format).unwrap()).unwrap();
            assert_eq!(back.vertices.len(), doc.vertices.len());
            for (a, b) in back.vertices.iter().zip(&doc.vertices) {
                for k in 0..3 {
                    assert_eq!(a[k].to_bits(), b[k].to_bits());
                }
            }
            assert_eq!(back, doc);
        }
    }

    #[test]
    fn single_precision_round_trip() {
        let mut doc = random_doc(2, 200);
        doc.precision = Precision::F32;
        for format in [PlyFormat::Ascii, PlyFormat::BinaryLittleEndian] {
            let back = parse_ply(&encode_ply(&doc, format).unwrap()).unwrap();
            for (a, b) in back.vertices.iter().zip(&doc.vertices) {
                for k in 0..3 {
                    assert_eq!(a[k], b[k] as f32 as f64);
                }
            }
        }
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cloud.ply");
        let doc = random_doc(3, 50);
        write_ply(&doc, &path, PlyFormat::BinaryLittleEndian).unwrap();
        assert_eq!(read_ply(&path).unwrap(), doc);
    }

    #[test]
    fn short_body_is_count_mismatch() {
        let mut text = String::from("ply\nformat ascii 1.0\nelement vertex 10\nproperty double x\nproperty double y\nproperty double z\nend_header\n");
        for i in 0..9 {
            text.push_str(&format!("{i} 0 0\n"));
        }
        match parse_ply(text.as_bytes()) {
            Err(PlyError::CountMismatch { expected: 10, found: 9, .. }) => {}
            other => panic!("{other:?}"),
        }
        let doc = random_doc(4, 10);
        let mut bin = encode_ply(&doc, PlyFormat::BinaryLittleEndian).unwrap();
        bin.truncate(bin.len() - 8);
        assert!(matches!(parse_ply(&bin), Err(PlyError::CountMismatch { found: 9, .. })));
    }

    #[test]
    fn trailing_data_is_count_mismatch() {
        let text = format!("{FIXTURE}7 8 9\n");
        assert!(matches!(parse_ply(text.as_bytes()), Err(PlyError::CountMismatch { .. })));
    }

    #[test]
    fn big_endian_unsupported() {
        let text = FIXTURE.replace("ascii", "binary_big_endian");
        assert!(matches!(parse_ply(text.as_bytes()), Err(PlyError::UnsupportedFormat(_))));
    }

    #[test]
    fn malformed_headers() {
        for text in [
            "plx\nformat ascii 1.0\nend_header\n",
            "ply\nelement vertex 1\nproperty float x\nproperty float y\nproperty float z\nend_header\n0 0 0\n",
            "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\n",
            "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nend_header\n0 0\n",
            "ply\nformat ascii 1.0\nelement vertex 1\nproperty quad x\nend_header\n0\n",
            "ply\nformat ascii 1.0\nproperty float x\nend_header\n",
        ] {
            assert!(matches!(parse_ply(text.as_bytes()), Err(PlyError::MalformedHeader(_))), "{text}");
        }
    }

    #[test]
    fn unknown_properties_and_elements_skipped() {
        let text = "ply
format ascii 1.0
element vertex 2
property uchar red
property double x
property double y
property double z
property list uchar int tags
element face 1
property list uchar int vertex_indices
element camera 1
property float fov
end_header
255 1 2 3 2 7 8
0 4 5 6 0
4 0 1 1 0
60
";
        let doc = parse_ply(text.as_bytes()).unwrap();
        assert_eq!(doc.vertices, vec![Point3::new(1.0, 2.0, 3.0), Point3::new(4.0, 5.0, 6.0)]);
        assert_eq!(doc.vertex_scalars, vec![("red".to_string(), vec![255.0, 0.0])]);
        // quad fan-split into two triangles
        assert_eq!(doc.faces, vec![[0, 1, 1], [0, 1, 0]]);
    }

    #[test]
    fn face_index_out_of_range() {
        let text = "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nproperty float z\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n0 0 0\n3 0 1 2\n";
        assert!(matches!(parse_ply(text.as_bytes()), Err(PlyError::MalformedBody(_))));
    }

    proptest! {
        #[test]
        fn any_finite_coordinates_survive(
            coords in prop::collection::vec(prop::array::uniform3(prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO), 0..40)
        ) {
            let doc = PlyDocument::from_points(coords.into_iter().map(Point3::from).collect());
            for format in [PlyFormat::Ascii, PlyFormat::BinaryLittleEndian] {
                let back = parse_ply(&encode_ply(&doc, format).unwrap()).unwrap();
                prop_assert_eq!(&back, &doc);
            }
        }
    }
}
