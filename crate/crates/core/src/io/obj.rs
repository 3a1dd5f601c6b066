//! Minimal Wavefront OBJ reader: positions, normals and polygonal faces.

use crate::geometry::Vec3;

/// Mesh as indexed triangles, with optional per-corner normals.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ObjMesh {
    pub positions: Vec<Vec3>,
    pub normals: Vec<Vec3>,
    /// Position indices of each triangle.
    pub triangles: Vec<[usize; 3]>,
    /// Normal indices of each triangle, when every corner has one.
    pub triangle_normals: Vec<Option<[usize; 3]>>,
}

fn resolve(token: &str, len: usize, line: usize) -> Result<usize, String> {
    let i: i64 = token.parse().map_err(|_| format!("line {line}: bad index '{token}'"))?;
    let idx = if i > 0 { i - 1 } else { len as i64 + i };
    if i == 0 || idx < 0 || idx as usize >= len {
        return Err(format!("line {line}: index {i} out of range"));
    }
    Ok(idx as usize)
}

fn floats(parts: &[&str], line: usize) -> Result<Vec3, String> {
    if parts.len() < 3 {
        return Err(format!("line {line}: expected three coordinates"));
    }
    let mut v = [0.0f64; 3];
    for (k, p) in parts[..3].iter().enumerate() {
        v[k] = p.parse().map_err(|_| format!("line {line}: bad number '{p}'"))?;
        if !v[k].is_finite() {
            return Err(format!("line {line}: non-finite coordinate"));
        }
    }
    Ok(Vec3::from_array(v))
}

/// Parses OBJ text. Polygons are fan-triangulated; texture coordinates,
/// groups and material statements are ignored.
pub fn parse_obj(text: &str) -> Result<ObjMesh, String> {
    let mut mesh = ObjMesh::default();
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let content = raw.split('#').next().unwrap_or("");
        let parts: Vec<&str> = content.split_whitespace().collect();
        let Some((&kind, rest)) = parts.split_first() else { continue };
        match kind {
            "v" => mesh.positions.push(floats(rest, line)?),
            "vn" => mesh.normals.push(floats(rest, line)?.normalize_or_zero()),
            "f" => {
                if rest.len() < 3 {
                    return Err(format!("line {line}: face needs at least three vertices"));
                }
                let mut corners = Vec::with_capacity(rest.len());
                for c in rest {
                    let mut fields = c.split('/');
                    let p = resolve(fields.next().unwrap_or(""), mesh.positions.len(), line)?;
                    let _texcoord = fields.next();
                    let nrm = match fields.next() {
                        Some(s) if !s.is_empty() => Some(resolve(s, mesh.normals.len(), line)?),
                        _ => None,
                    };
                    corners.push((p, nrm));
                }
                for k in 1..corners.len() - 1 {
                    let tri = [corners[0], corners[k], corners[k + 1]];
                    mesh.triangles.push(tri.map(|c| c.0));
                    mesh.triangle_normals.push(match tri.map(|c| c.1) {
                        [Some(a), Some(b), Some(c)] => Some([a, b, c]),
                        _ => None,
                    });
                }
            }
            _ => {}
        }
    }
    if mesh.triangles.is_empty() {
        return Err("no faces".into());
    }
    Ok(mesh)
}
