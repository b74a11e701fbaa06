//! Reader for 3DGS/2DGS vertex PLY files (ASCII and binary little-endian).

use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlyError {
    #[error("malformed PLY header at byte {offset}: {reason}")]
    MalformedHeader { offset: usize, reason: String },

    #[error("missing required vertex property `{property}` (header ends at byte {offset})")]
    MissingProperty { property: String, offset: usize },

    #[error("truncated payload: vertex {vertex}, property `{property}` needs bytes at offset {offset}")]
    Truncated {
        vertex: usize,
        property: String,
        offset: usize,
    },

    #[error("invalid value for property `{property}` of vertex {vertex} at byte {offset}")]
    InvalidValue {
        vertex: usize,
        property: String,
        offset: usize,
    },
}

/// One vertex as stored by the splat trainer, before activations.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSplat {
    pub position: [f64; 3],
    /// Two entries for 2DGS files, three for 3DGS files.
    pub log_scales: Vec<f64>,
    /// `(w, x, y, z)`, not necessarily normalized.
    pub rotation_quat: [f64; 4],
    pub opacity_logit: f64,
    pub sh_dc: [f64; 3],
    pub sh_rest: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Ascii,
    BinaryLe,
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
    fn parse(name: &str) -> Option<Scalar> {
        Some(match name {
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
            Scalar::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().expect("8 bytes")),
        }
    }
}

#[derive(Debug, Clone)]
struct Property {
    name: String,
    ty: Scalar,
}

#[derive(Debug)]
struct Header {
    format: Format,
    vertex_count: usize,
    properties: Vec<Property>,
    body_offset: usize,
}

fn header_err(offset: usize, reason: impl Into<String>) -> PlyError {
    PlyError::MalformedHeader {
        offset,
        reason: reason.into(),
    }
}

fn parse_header(bytes: &[u8]) -> Result<Header, PlyError> {
    let mut offset = 0;
    let next_line = |offset: &mut usize| -> Result<(usize, String), PlyError> {
        let start = *offset;
        let rest = &bytes[start..];
        let end = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| header_err(start, "unterminated header (no end_header line)"))?;
        *offset = start + end + 1;
        let line = std::str::from_utf8(&rest[..end]).map_err(|_| header_err(start, "header is not valid text"))?;
        Ok((start, line.trim_end_matches('\r').to_string()))
    };

    let (_, magic) = next_line(&mut offset)?;
    if magic.trim() != "ply" {
        return Err(header_err(0, "missing `ply` magic"));
    }

    let mut format = None;
    let mut vertex_count = None;
    let mut properties = Vec::new();
    // Only the vertex element is read; it must come first so its offset is known.
    let mut in_vertex = false;
    loop {
        let (at, line) = next_line(&mut offset)?;
        let mut tok = line.split_whitespace();
        match tok.next() {
            None | Some("comment") | Some("obj_info") => {}
            Some("format") => {
                let f = match tok.next() {
                    Some("ascii") => Format::Ascii,
                    Some("binary_little_endian") => Format::BinaryLe,
                    Some(other) => return Err(header_err(at, format!("unsupported format `{other}`"))),
                    None => return Err(header_err(at, "format line without a format")),
                };
                format = Some(f);
            }
            Some("element") => {
                let name = tok.next().ok_or_else(|| header_err(at, "element without a name"))?;
                let count = tok
                    .next()
                    .and_then(|c| c.parse::<usize>().ok())
                    .ok_or_else(|| header_err(at, format!("element `{name}` has no valid count")))?;
                if name == "vertex" {
                    if vertex_count.is_some() {
                        return Err(header_err(at, "duplicate vertex element"));
                    }
                    vertex_count = Some(count);
                    in_vertex = true;
                } else {
                    if vertex_count.is_none() && count > 0 {
                        return Err(header_err(at, format!("element `{name}` precedes the vertex element")));
                    }
                    in_vertex = false;
                }
            }
            Some("property") => {
                let ty = tok.next().ok_or_else(|| header_err(at, "property without a type"))?;
                if ty == "list" {
                    if in_vertex {
                        return Err(header_err(at, "list properties are not supported on vertices"));
                    }
                    continue;
                }
                let scalar = Scalar::parse(ty).ok_or_else(|| header_err(at, format!("unknown property type `{ty}`")))?;
                let name = tok.next().ok_or_else(|| header_err(at, "property without a name"))?;
                if in_vertex {
                    properties.push(Property {
                        name: name.to_string(),
                        ty: scalar,
                    });
                } else if vertex_count.is_none() {
                    return Err(header_err(at, "property outside of any element"));
                }
            }
            Some("end_header") => break,
            Some(other) => return Err(header_err(at, format!("unexpected header keyword `{other}`"))),
        }
    }

    Ok(Header {
        format: format.ok_or_else(|| header_err(offset, "missing format line"))?,
        vertex_count: vertex_count.ok_or_else(|| header_err(offset, "missing vertex element"))?,
        properties,
        body_offset: offset,
    })
}

/// Indices of the properties each `RawSplat` field is read from.
struct Layout {
    position: [usize; 3],
    scales: Vec<usize>,
    rotation: [usize; 4],
    opacity: usize,
    sh_dc: [usize; 3],
    sh_rest: Vec<usize>,
}

impl Layout {
    fn resolve(props: &[Property], header_end: usize) -> Result<Layout, PlyError> {
        let find = |name: &str| {
            props
                .iter()
                .position(|p| p.name == name)
                .ok_or_else(|| PlyError::MissingProperty {
                    property: name.to_string(),
                    offset: header_end,
                })
        };
        let mut scales = vec![find("scale_0")?, find("scale_1")?];
        if let Ok(s2) = find("scale_2") {
            scales.push(s2);
        }
        let mut rest: Vec<(usize, usize)> = props
            .iter()
            .enumerate()
            .filter_map(|(i, p)| p.name.strip_prefix("f_rest_").and_then(|n| n.parse().ok()).map(|n: usize| (n, i)))
            .collect();
        rest.sort_unstable();
        Ok(Layout {
            position: [find("x")?, find("y")?, find("z")?],
            scales,
            rotation: [find("rot_0")?, find("rot_1")?, find("rot_2")?, find("rot_3")?],
            opacity: find("opacity")?,
            sh_dc: [find("f_dc_0")?, find("f_dc_1")?, find("f_dc_2")?],
            sh_rest: rest.into_iter().map(|(_, i)| i).collect(),
        })
    }

    fn build(&self, v: &[f64]) -> RawSplat {
        RawSplat {
            position: self.position.map(|i| v[i]),
            log_scales: self.scales.iter().map(|&i| v[i]).collect(),
            rotation_quat: self.rotation.map(|i| v[i]),
            opacity_logit: v[self.opacity],
            sh_dc: self.sh_dc.map(|i| v[i]),
            sh_rest: self.sh_rest.iter().map(|&i| v[i]).collect(),
        }
    }
}

/// Parses a splat PLY file. One `RawSplat` per vertex, in file order.
pub fn load_ply(bytes: &[u8]) -> Result<Vec<RawSplat>, PlyError> {
    let header = parse_header(bytes)?;
    let layout = Layout::resolve(&header.properties, header.body_offset)?;
    let n_props = header.properties.len();
    let mut values = vec![0.0; n_props];
    let mut out = Vec::with_capacity(header.vertex_count);

    match header.format {
        Format::BinaryLe => {
            let mut at = header.body_offset;
            for vertex in 0..header.vertex_count {
                for (slot, prop) in values.iter_mut().zip(&header.properties) {
                    let size = prop.ty.size();
                    let chunk = bytes.get(at..at + size).ok_or_else(|| PlyError::Truncated {
                        vertex,
                        property: prop.name.clone(),
                        offset: at,
                    })?;
                    *slot = prop.ty.read_le(chunk);
                    at += size;
                }
                out.push(layout.build(&values));
            }
        }
        Format::Ascii => {
            let body = &bytes[header.body_offset..];
            let mut tokens = AsciiTokens {
                body,
                pos: 0,
                base: header.body_offset,
            };
            for vertex in 0..header.vertex_count {
                for (slot, prop) in values.iter_mut().zip(&header.properties) {
                    let (at, tok) = tokens.next().ok_or_else(|| PlyError::Truncated {
                        vertex,
                        property: prop.name.clone(),
                        offset: header.body_offset + body.len(),
                    })?;
                    *slot = std::str::from_utf8(tok)
                        .ok()
                        .and_then(|s| s.parse::<f64>().ok())
                        .ok_or_else(|| PlyError::InvalidValue {
                            vertex,
                            property: prop.name.clone(),
                            offset: at,
                        })?;
                }
                out.push(layout.build(&values));
            }
        }
    }
    Ok(out)
}

struct AsciiTokens<'a> {
    body: &'a [u8],
    pos: usize,
    base: usize,
}

impl<'a> Iterator for AsciiTokens<'a> {
    type Item = (usize, &'a [u8]);

    fn next(&mut self) -> Option<Self::Item> {
        while self.pos < self.body.len() && self.body[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if self.pos >= self.body.len() {
            return None;
        }
        let start = self.pos;
        while self.pos < self.body.len() && !self.body[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        Some((self.base + start, &self.body[start..self.pos]))
    }
}

fn property_names(splats: &[RawSplat]) -> Vec<String> {
    let n_scales = splats.first().map_or(3, |s| s.log_scales.len());
    let n_rest = splats.first().map_or(0, |s| s.sh_rest.len());
    let mut names: Vec<String> = ["x", "y", "z"].iter().map(|s| s.to_string()).collect();
    names.extend((0..3).map(|i| format!("f_dc_{i}")));
    names.extend((0..n_rest).map(|i| format!("f_rest_{i}")));
    names.push("opacity".into());
    names.extend((0..n_scales).map(|i| format!("scale_{i}")));
    names.extend((0..4).map(|i| format!("rot_{i}")));
    names
}

fn splat_values(s: &RawSplat) -> Vec<f64> {
    let mut v = s.position.to_vec();
    v.extend(s.sh_dc);
    v.extend(&s.sh_rest);
    v.push(s.opacity_logit);
    v.extend(&s.log_scales);
    v.extend(s.rotation_quat);
    v
}

fn header_text(splats: &[RawSplat], format: &str, ty: &str) -> String {
    let mut h = format!("ply\nformat {format} 1.0\nelement vertex {}\n", splats.len());
    for name in property_names(splats) {
        let _ = writeln!(h, "property {ty} {name}");
    }
    h.push_str("end_header\n");
    h
}

/// Writes splats as a binary little-endian PLY with float properties in the
/// usual trainer order. All splats must share the same scale/SH layout.
pub fn encode_binary(splats: &[RawSplat]) -> Vec<u8> {
    let mut out = header_text(splats, "binary_little_endian", "float").into_bytes();
    for s in splats {
        for v in splat_values(s) {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

pub fn encode_ascii(splats: &[RawSplat]) -> Vec<u8> {
    let mut out = header_text(splats, "ascii", "double");
    for s in splats {
        let line: Vec<String> = splat_values(s).iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out.into_bytes()
}
