use std::f64::consts::PI;

use super::{Frame, GeometryError, SurfaceHit, Triangle, Vec3};

/// Cumulative area table over a subset of scene triangles, used for
/// uniform-by-area surface sampling with density `1 / total`.
#[derive(Clone, Debug)]
pub struct AreaTable {
    pub triangles: Vec<u32>,
    pub cumulative: Vec<f64>,
    pub total: f64,
}

impl AreaTable {
    pub fn new(all: &[Triangle], subset: impl IntoIterator<Item = u32>) -> Result<Self, GeometryError> {
        let mut triangles = Vec::new();
        let mut cumulative = Vec::new();
        let mut acc = 0.0;
        for id in subset {
            let a = all[id as usize].area();
            if a > 0.0 {
                acc += a;
                triangles.push(id);
                cumulative.push(acc);
            }
        }
        if triangles.is_empty() {
            return Err(GeometryError::EmptyAreaTable);
        }
        Ok(AreaTable { triangles, cumulative, total: acc })
    }

    /// Picks a triangle with probability proportional to its area.
    pub fn pick(&self, u: f64) -> u32 {
        let target = u * self.total;
        let i = self.cumulative.partition_point(|&c| c <= target);
        self.triangles[i.min(self.triangles.len() - 1)]
    }

    pub fn pdf(&self) -> f64 {
        1.0 / self.total
    }
}

/// Uniform point on the surfaces covered by `table`; returns the hit record
/// and its density per unit area.
pub fn sample_surface(table: &AreaTable, triangles: &[Triangle], u: [f64; 3]) -> (SurfaceHit, f64) {
    let id = table.pick(u[0]);
    let su = u[1].sqrt();
    let b1 = u[2] * su;
    let b2 = 1.0 - su;
    let hit = triangles[id as usize].surface_hit(id, 0.0, b1, b2);
    (hit, table.pdf())
}

/// Uniform direction on the hemisphere around `normal`, or on the whole
/// sphere when `two_sided`. Returns the direction and its solid-angle density.
pub fn sample_direction_uniform(normal: Vec3, two_sided: bool, u: [f64; 2]) -> (Vec3, f64) {
    let (z, pdf) = if two_sided {
        (1.0 - 2.0 * u[0], 1.0 / (4.0 * PI))
    } else {
        (u[0], 1.0 / (2.0 * PI))
    };
    let r = (1.0 - z * z).max(0.0).sqrt();
    let phi = 2.0 * PI * u[1];
    let local = Vec3::new(r * phi.cos(), r * phi.sin(), z);
    (Frame::from_normal(normal).to_world(local).normalize(), pdf)
}

/// Cosine-weighted hemisphere direction in local coordinates (z up).
pub fn cosine_hemisphere(u: [f64; 2]) -> Vec3 {
    let r = u[0].sqrt();
    let phi = 2.0 * PI * u[1];
    Vec3::new(r * phi.cos(), r * phi.sin(), (1.0 - u[0]).max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng;

    #[test]
    fn single_triangle_pdf_is_inverse_area() {
        let tris = vec![Triangle::new([Vec3::ZERO, Vec3::X * 2.0, Vec3::Y * 3.0], 0)];
        let table = AreaTable::new(&tris, [0]).unwrap();
        let mut rng = stream(1, 0, 0);
        for _ in 0..100 {
            let (hit, pdf) = sample_surface(&table, &tris, rng.random());
            assert_eq!(pdf, 1.0 / 3.0);
            assert!(hit.position.z.abs() < 1e-12);
            assert!(hit.position.x >= 0.0 && hit.position.y >= 0.0);
            assert!(hit.position.x / 2.0 + hit.position.y / 3.0 <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn selection_follows_area_fractions() {
        let tris = vec![
            Triangle::new([Vec3::ZERO, Vec3::X, Vec3::Y * 2.0], 0),
            Triangle::new([Vec3::Z, Vec3::Z + Vec3::X * 3.0, Vec3::Z + Vec3::Y * 2.0], 0),
        ];
        let table = AreaTable::new(&tris, [0, 1]).unwrap();
        assert!(table.cumulative[0] < table.cumulative[1]);
        assert_eq!(*table.cumulative.last().unwrap(), table.total);
        let n = 100_000;
        let mut rng = stream(2, 0, 0);
        let hits = (0..n).filter(|_| sample_surface(&table, &tris, rng.random()).0.triangle == 0).count();
        let p = 0.25;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        assert!((hits as f64 - n as f64 * p).abs() < 3.0 * sigma);
    }

    #[test]
    fn degenerate_only_table_is_rejected() {
        let tris = vec![Triangle::new([Vec3::ZERO, Vec3::X, Vec3::X * 2.0], 0)];
        assert!(AreaTable::new(&tris, [0]).is_err());
    }

    #[test]
    fn hemisphere_samples_and_cosine_integral() {
        let n = Vec3::new(0.2, -0.4, 0.9).normalize();
        let mut rng = stream(3, 0, 0);
        let count = 100_000;
        let mut cos_sum = 0.0;
        let mut one_sum = 0.0;
        for _ in 0..count {
            let (d, pdf) = sample_direction_uniform(n, false, rng.random());
            assert_eq!(pdf, 1.0 / (2.0 * PI));
            assert!((d.length() - 1.0).abs() < 1e-6);
            assert!(d.dot(n) >= -1e-12);
            cos_sum += d.dot(n) / pdf;
            one_sum += 1.0 / pdf;
        }
        let cos_est = cos_sum / count as f64;
        assert!((cos_est - PI).abs() < 0.01 * PI, "{cos_est}");
        assert!((one_sum / count as f64 - 2.0 * PI).abs() < 0.01 * 2.0 * PI);
    }

    #[test]
    fn sphere_samples_are_symmetric() {
        let mut rng = stream(4, 0, 0);
        let count = 100_000;
        let mut mean = Vec3::ZERO;
        for _ in 0..count {
            let (d, pdf) = sample_direction_uniform(Vec3::Z, true, rng.random());
            assert_eq!(pdf, 1.0 / (4.0 * PI));
            mean += d;
        }
        assert!((mean / count as f64).length() < 0.02);
    }
}
