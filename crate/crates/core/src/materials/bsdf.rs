use std::f64::consts::PI;

use crate::color::Rgb;
use crate::geometry::{reflect, cosine_hemisphere, Frame, Vec3};

/// Surface scattering models. All directions point away from the surface and
/// `n` is the shading normal on the side being shaded. Values exclude the
/// cosine factor.
#[derive(Clone, Debug, PartialEq)]
pub enum Bsdf {
    Lambertian { reflectance: Rgb },
    Mirror { reflectance: Rgb },
    GlossyPhong { reflectance: Rgb, exponent: f64 },
}

/// Sampled incident direction. `weight` is `f * cos / pdf`; for delta lobes
/// `pdf` is 1 and `weight` the specular reflectance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DirSample {
    pub wi: Vec3,
    pub pdf: f64,
    pub weight: Rgb,
    pub is_delta: bool,
}

impl Bsdf {
    pub fn is_delta(&self) -> bool {
        matches!(self, Bsdf::Mirror { .. })
    }

    pub fn diffuse_reflectance(&self) -> Rgb {
        match self {
            Bsdf::Lambertian { reflectance } => *reflectance,
            _ => Rgb::BLACK,
        }
    }

    pub fn specular_reflectance(&self) -> Rgb {
        match self {
            Bsdf::Lambertian { .. } => Rgb::BLACK,
            Bsdf::Mirror { reflectance } | Bsdf::GlossyPhong { reflectance, .. } => *reflectance,
        }
    }

    /// Scalar roughness fed to the network; zero for Lambertian and mirror.
    pub fn roughness(&self) -> f64 {
        match self {
            Bsdf::GlossyPhong { exponent, .. } => 1.0 / (1.0 + exponent),
            _ => 0.0,
        }
    }

    pub fn eval(&self, n: Vec3, wi: Vec3, wo: Vec3) -> Rgb {
        if n.dot(wi) <= 0.0 || n.dot(wo) <= 0.0 {
            return Rgb::BLACK;
        }
        match self {
            Bsdf::Lambertian { reflectance } => *reflectance / PI,
            Bsdf::Mirror { .. } => Rgb::BLACK,
            Bsdf::GlossyPhong { reflectance, exponent } => {
                let cos_alpha = reflect(wo, n).dot(wi).max(0.0);
                *reflectance * ((exponent + 2.0) / (2.0 * PI) * cos_alpha.powf(*exponent))
            }
        }
    }

    /// Density of `sample` producing `wi`, per unit solid angle. Zero for delta lobes.
    pub fn pdf(&self, n: Vec3, wi: Vec3, wo: Vec3) -> f64 {
        match self {
            Bsdf::Lambertian { .. } => {
                if n.dot(wo) <= 0.0 {
                    0.0
                } else {
                    n.dot(wi).max(0.0) / PI
                }
            }
            Bsdf::Mirror { .. } => 0.0,
            Bsdf::GlossyPhong { exponent, .. } => {
                if n.dot(wo) <= 0.0 {
                    return 0.0;
                }
                let cos_alpha = reflect(wo, n).dot(wi).max(0.0);
                (exponent + 1.0) / (2.0 * PI) * cos_alpha.powf(*exponent)
            }
        }
    }

    /// Importance-samples an incident direction. Returns `None` when `wo` is
    /// below the surface.
    pub fn sample(&self, n: Vec3, wo: Vec3, u: [f64; 2]) -> Option<DirSample> {
        if n.dot(wo) <= 0.0 {
            return None;
        }
        match self {
            Bsdf::Lambertian { reflectance } => {
                let wi = Frame::from_normal(n).to_world(cosine_hemisphere(u));
                Some(DirSample { wi, pdf: n.dot(wi).max(0.0) / PI, weight: *reflectance, is_delta: false })
            }
            Bsdf::Mirror { reflectance } => Some(DirSample {
                wi: reflect(wo, n),
                pdf: 1.0,
                weight: *reflectance,
                is_delta: true,
            }),
            Bsdf::GlossyPhong { exponent, .. } => {
                let cos_alpha = u[0].powf(1.0 / (exponent + 1.0));
                let sin_alpha = (1.0 - cos_alpha * cos_alpha).max(0.0).sqrt();
                let phi = 2.0 * PI * u[1];
                let local = Vec3::new(sin_alpha * phi.cos(), sin_alpha * phi.sin(), cos_alpha);
                let wi = Frame::from_normal(reflect(wo, n)).to_world(local).normalize();
                let pdf = self.pdf(n, wi, wo);
                let cos = n.dot(wi);
                let weight = if cos > 0.0 && pdf > 0.0 {
                    self.eval(n, wi, wo) * (cos / pdf)
                } else {
                    Rgb::BLACK
                };
                Some(DirSample { wi, pdf, weight, is_delta: false })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lambertian_eval_is_albedo_over_pi() {
        let b = Bsdf::Lambertian { reflectance: Rgb::splat(0.5) };
        let wi = Vec3::new(0.3, 0.1, 0.9).normalize();
        let wo = Vec3::new(-0.5, 0.2, 0.4).normalize();
        assert_eq!(b.eval(Vec3::Z, wi, wo), Rgb::splat(0.5 / PI));
        assert_eq!(b.eval(Vec3::Z, -wi, wo), Rgb::BLACK);
    }

    #[test]
    fn mirror_is_delta_only() {
        let b = Bsdf::Mirror { reflectance: Rgb::splat(0.9) };
        assert_eq!(b.eval(Vec3::Z, Vec3::Z, Vec3::Z), Rgb::BLACK);
        assert_eq!(b.pdf(Vec3::Z, Vec3::Z, Vec3::Z), 0.0);
        let s = b.sample(Vec3::Z, Vec3::Z, [0.3, 0.7]).unwrap();
        assert_eq!(s.wi, Vec3::Z);
        assert!(s.is_delta);
        assert_eq!(s.weight, Rgb::splat(0.9));
    }

    #[test]
    fn lambertian_white_weight_is_exactly_one() {
        let b = Bsdf::Lambertian { reflectance: Rgb::WHITE };
        let wo = Vec3::new(0.1, 0.2, 0.8).normalize();
        for i in 0..100 {
            let u = [(i as f64 + 0.5) / 100.0, ((i * 37) % 100) as f64 / 100.0];
            assert_eq!(b.sample(Vec3::Z, wo, u).unwrap().weight, Rgb::WHITE);
        }
    }

    #[test]
    fn lambertian_pdf_at_sixty_degrees() {
        let b = Bsdf::Lambertian { reflectance: Rgb::WHITE };
        let wi = Vec3::new((60f64).to_radians().sin(), 0.0, (60f64).to_radians().cos());
        assert!((b.pdf(Vec3::Z, wi, Vec3::Z) - 1.0 / (2.0 * PI)).abs() < 1e-12);
    }

    #[test]
    fn phong_roughness() {
        let b = Bsdf::GlossyPhong { reflectance: Rgb::splat(0.5), exponent: 9.0 };
        assert_eq!(b.roughness(), 0.1);
        assert_eq!(Bsdf::Mirror { reflectance: Rgb::WHITE }.roughness(), 0.0);
    }
}
