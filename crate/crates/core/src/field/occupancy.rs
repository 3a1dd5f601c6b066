//! Separating-axis overlap test between a triangle and an axis-aligned box.

use crate::geometry::Vec3;

/// True when the triangle `v` and the box `center ± half` intersect. The box
/// should be slightly enlarged by the caller for a conservative answer.
pub fn triangle_box_overlap(center: Vec3, half: Vec3, v: [Vec3; 3]) -> bool {
    let v0 = v[0] - center;
    let v1 = v[1] - center;
    let v2 = v[2] - center;
    let e = [v1 - v0, v2 - v1, v0 - v2];

    // Box face normals.
    for a in 0..3 {
        let lo = v0[a].min(v1[a]).min(v2[a]);
        let hi = v0[a].max(v1[a]).max(v2[a]);
        if lo > half[a] || hi < -half[a] {
            return false;
        }
    }

    // Triangle normal.
    let n = e[0].cross(e[1]);
    let r = half.x * n.x.abs() + half.y * n.y.abs() + half.z * n.z.abs();
    if n.dot(v0).abs() > r {
        return false;
    }

    // Cross products of box axes with triangle edges.
    for edge in e {
        for a in 0..3 {
            let mut axis_unit = Vec3::ZERO;
            axis_unit[a] = 1.0;
            let axis = axis_unit.cross(edge);
            if axis.length_squared() == 0.0 {
                continue;
            }
            let p = [axis.dot(v0), axis.dot(v1), axis.dot(v2)];
            let lo = p[0].min(p[1]).min(p[2]);
            let hi = p[0].max(p[1]).max(p[2]);
            let r = half.x * axis.x.abs() + half.y * axis.y.abs() + half.z * axis.z.abs();
            if lo > r || hi < -r {
                return false;
            }
        }
    }
    true
}
