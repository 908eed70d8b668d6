//! Analytic surfaces with exact distance fields and area-uniform samplers.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::FieldError;
use crate::geom::{vec3, PointCloud, UnitCubeTransform, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AnalyticShape {
    Sphere { center: Vec3, radius: f64 },
    /// Ring around the z axis.
    Torus { center: Vec3, major: f64, minor: f64 },
    /// Axis-aligned box whose edges are rounded with radius `fillet`.
    Box { center: Vec3, half: Vec3, fillet: f64 },
    Ellipsoid { center: Vec3, radii: Vec3 },
    /// Segment `|z − c.z| ≤ half_length` on the z axis, thickened by `radius`.
    Capsule { center: Vec3, half_length: f64, radius: f64 },
    /// Z-aligned cylinder with flat caps and sharp rims.
    Cylinder { center: Vec3, radius: f64, half_height: f64 },
    /// Square patch of the plane `z = center.z`; the signed distance is that
    /// of the unbounded plane.
    Plane { center: Vec3, half: f64 },
    /// Disk in the plane `z = center.z`.
    OpenDisk { center: Vec3, radius: f64 },
    /// Upper half (`z ≥ center.z`) of a sphere.
    HalfSphere { center: Vec3, radius: f64 },
    /// `z = c.z + A·sin(ω(x − c.x))·sin(ω(y − c.y))` over a square of half-width `half`.
    WavySheet { center: Vec3, half: f64, amplitude: f64, frequency: f64 },
}

fn gauss_dir(rng: &mut impl Rng) -> Vec3 {
    loop {
        let v: Vec3 = [rng.random::<f64>() * 2.0 - 1.0, rng.random::<f64>() * 2.0 - 1.0, rng.random::<f64>() * 2.0 - 1.0];
        let n = vec3::norm(v);
        if n > 1e-6 && n <= 1.0 {
            return vec3::scale(v, 1.0 / n);
        }
    }
}

/// Distance from `p` to the circle of radius `r` in the plane `z = 0` about the origin.
fn circle_distance(p: Vec3, r: f64) -> f64 {
    let rho = (p[0] * p[0] + p[1] * p[1]).sqrt();
    ((rho - r).powi(2) + p[2] * p[2]).sqrt()
}

/// Signed distance to an axis-aligned ellipsoid centred at the origin. The
/// closest point satisfies `x_i = r_i² y_i / (r_i² + λ)`; the relevant root
/// of the constraint is the unique one above `−min r_i²`.
fn ellipsoid_sdf(y: Vec3, r: Vec3) -> f64 {
    let r2 = [r[0] * r[0], r[1] * r[1], r[2] * r[2]];
    let mut y = y;
    for c in 0..3 {
        if y[c].abs() < 1e-12 {
            y[c] = if y[c] < 0.0 { -1e-12 } else { 1e-12 };
        }
    }
    let level = (0..3).map(|c| y[c] * y[c] / r2[c]).sum::<f64>();
    let f = |l: f64| (0..3).map(|c| (r[c] * y[c] / (r2[c] + l)).powi(2)).sum::<f64>() - 1.0;
    let rmin2 = r2[0].min(r2[1]).min(r2[2]);
    let rmax = r[0].max(r[1]).max(r[2]);
    let mut lo = -rmin2;
    let mut hi = rmax * vec3::norm(y) + 1e-12;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let l = 0.5 * (lo + hi);
    let x: Vec3 = [0, 1, 2].map(|c| r2[c] * y[c] / (r2[c] + l));
    let d = vec3::dist(x, y);
    if level < 1.0 {
        -d
    } else {
        d
    }
}

fn rounded_box_sdf(p: Vec3, half: Vec3, fillet: f64) -> f64 {
    let q: Vec3 = [0, 1, 2].map(|c| p[c].abs() - half[c] + fillet);
    let outside = vec3::norm([q[0].max(0.0), q[1].max(0.0), q[2].max(0.0)]);
    let inside = q[0].max(q[1]).max(q[2]).min(0.0);
    outside + inside - fillet
}

impl AnalyticShape {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Sphere { .. } => "sphere",
            Self::Torus { .. } => "torus",
            Self::Box { .. } => "box",
            Self::Ellipsoid { .. } => "ellipsoid",
            Self::Capsule { .. } => "capsule",
            Self::Cylinder { .. } => "cylinder",
            Self::Plane { .. } => "plane",
            Self::OpenDisk { .. } => "open-disk",
            Self::HalfSphere { .. } => "half-sphere",
            Self::WavySheet { .. } => "wavy-sheet",
        }
    }

    /// Reference parameters for each kind, centred at the origin.
    pub fn standard(name: &str) -> Result<Self, FieldError> {
        let c = [0.0; 3];
        Ok(match name {
            "sphere" => Self::Sphere { center: c, radius: 0.5 },
            "torus" => Self::Torus { center: c, major: 0.35, minor: 0.15 },
            "box" => Self::Box { center: c, half: [0.4, 0.3, 0.25], fillet: 0.08 },
            "ellipsoid" => Self::Ellipsoid { center: c, radii: [0.5, 0.35, 0.25] },
            "capsule" => Self::Capsule { center: c, half_length: 0.25, radius: 0.2 },
            "cylinder" => Self::Cylinder { center: c, radius: 0.3, half_height: 0.3 },
            "plane" => Self::Plane { center: c, half: 0.5 },
            "open-disk" | "disk" => Self::OpenDisk { center: c, radius: 0.5 },
            "half-sphere" => Self::HalfSphere { center: c, radius: 0.5 },
            "wavy-sheet" => Self::WavySheet { center: c, half: 0.5, amplitude: 0.08, frequency: 2.0 * PI },
            other => return Err(FieldError::BadShape(format!("unknown shape {other}"))),
        })
    }

    pub fn validate(&self) -> Result<(), FieldError> {
        let pos = |v: f64| v.is_finite() && v > 0.0;
        let ok = match *self {
            Self::Sphere { radius, .. } | Self::OpenDisk { radius, .. } | Self::HalfSphere { radius, .. } => pos(radius),
            Self::Torus { major, minor, .. } => pos(major) && pos(minor) && minor < major,
            Self::Box { half, fillet, .. } => half.iter().all(|&h| pos(h)) && fillet >= 0.0 && half.iter().all(|&h| fillet < h),
            Self::Ellipsoid { radii, .. } => radii.iter().all(|&r| pos(r)),
            Self::Capsule { half_length, radius, .. } => pos(half_length) && pos(radius),
            Self::Cylinder { radius, half_height, .. } => pos(radius) && pos(half_height),
            Self::Plane { half, .. } => pos(half),
            Self::WavySheet { half, amplitude, frequency, .. } => pos(half) && amplitude >= 0.0 && amplitude.is_finite() && frequency.is_finite(),
        };
        let center = self.center();
        if ok && center.iter().all(|c| c.is_finite()) {
            Ok(())
        } else {
            Err(FieldError::BadShape(format!("invalid parameters for {}: {self:?}", self.name())))
        }
    }

    pub fn center(&self) -> Vec3 {
        match *self {
            Self::Sphere { center, .. }
            | Self::Torus { center, .. }
            | Self::Box { center, .. }
            | Self::Ellipsoid { center, .. }
            | Self::Capsule { center, .. }
            | Self::Cylinder { center, .. }
            | Self::Plane { center, .. }
            | Self::OpenDisk { center, .. }
            | Self::HalfSphere { center, .. }
            | Self::WavySheet { center, .. } => center,
        }
    }

    /// Whether an inside/outside sign exists.
    pub fn is_closed(&self) -> bool {
        matches!(
            self,
            Self::Sphere { .. } | Self::Torus { .. } | Self::Box { .. } | Self::Ellipsoid { .. } | Self::Capsule { .. } | Self::Cylinder { .. } | Self::Plane { .. }
        )
    }

    /// The same surface under `p ↦ (p − t.center)·t.scale + 0.5`.
    pub fn transformed(&self, t: &UnitCubeTransform) -> Self {
        let s = t.scale;
        let c = t.apply(self.center());
        match *self {
            Self::Sphere { radius, .. } => Self::Sphere { center: c, radius: radius * s },
            Self::Torus { major, minor, .. } => Self::Torus { center: c, major: major * s, minor: minor * s },
            Self::Box { half, fillet, .. } => Self::Box { center: c, half: vec3::scale(half, s), fillet: fillet * s },
            Self::Ellipsoid { radii, .. } => Self::Ellipsoid { center: c, radii: vec3::scale(radii, s) },
            Self::Capsule { half_length, radius, .. } => Self::Capsule { center: c, half_length: half_length * s, radius: radius * s },
            Self::Cylinder { radius, half_height, .. } => Self::Cylinder { center: c, radius: radius * s, half_height: half_height * s },
            Self::Plane { half, .. } => Self::Plane { center: c, half: half * s },
            Self::OpenDisk { radius, .. } => Self::OpenDisk { center: c, radius: radius * s },
            Self::HalfSphere { radius, .. } => Self::HalfSphere { center: c, radius: radius * s },
            Self::WavySheet { half, amplitude, frequency, .. } => {
                Self::WavySheet { center: c, half: half * s, amplitude: amplitude * s, frequency: frequency / s }
            }
        }
    }

    /// Signed distance, positive outside. `None` for open kinds.
    pub fn signed_distance(&self, p: Vec3) -> Option<f64> {
        let d = vec3::sub(p, self.center());
        match *self {
            Self::Sphere { radius, .. } => Some(vec3::norm(d) - radius),
            Self::Torus { major, minor, .. } => {
                let rho = (d[0] * d[0] + d[1] * d[1]).sqrt();
                Some(((rho - major).powi(2) + d[2] * d[2]).sqrt() - minor)
            }
            Self::Box { half, fillet, .. } => Some(rounded_box_sdf(d, half, fillet)),
            Self::Ellipsoid { radii, .. } => Some(ellipsoid_sdf(d, radii)),
            Self::Capsule { half_length, radius, .. } => Some(vec3::norm([d[0], d[1], d[2] - d[2].clamp(-half_length, half_length)]) - radius),
            Self::Cylinder { radius, half_height, .. } => {
                let a = (d[0] * d[0] + d[1] * d[1]).sqrt() - radius;
                let b = d[2].abs() - half_height;
                Some(a.max(b).min(0.0) + (a.max(0.0).powi(2) + b.max(0.0).powi(2)).sqrt())
            }
            Self::Plane { .. } => Some(d[2]),
            _ => None,
        }
    }

    /// Unsigned distance to the surface.
    pub fn distance(&self, p: Vec3) -> f64 {
        if let Some(s) = self.signed_distance(p) {
            return s.abs();
        }
        let d = vec3::sub(p, self.center());
        match *self {
            Self::OpenDisk { radius, .. } => {
                let rho = (d[0] * d[0] + d[1] * d[1]).sqrt();
                if rho <= radius {
                    d[2].abs()
                } else {
                    circle_distance(d, radius)
                }
            }
            Self::HalfSphere { radius, .. } => {
                if d[2] >= 0.0 {
                    (vec3::norm(d) - radius).abs()
                } else {
                    circle_distance(d, radius)
                }
            }
            Self::WavySheet { .. } => vec3::dist(p, self.closest_point(p)),
            _ => unreachable!("closed kinds handled above"),
        }
    }

    /// Closest surface point, used where no closed form is convenient.
    pub fn closest_point(&self, p: Vec3) -> Vec3 {
        match *self {
            Self::WavySheet { center, half, amplitude, frequency } => {
                let h = |u: f64, v: f64| center[2] + amplitude * (frequency * u).sin() * (frequency * v).sin();
                let at = |u: f64, v: f64| [center[0] + u, center[1] + v, h(u, v)];
                let (u0, v0) = ((p[0] - center[0]).clamp(-half, half), (p[1] - center[1]).clamp(-half, half));
                let reach = vec3::dist(p, at(u0, v0));
                // Coarse search over the disc that must contain the answer,
                // then shrinking pattern search.
                let mut best = (u0, v0, vec3::dist2(p, at(u0, v0)));
                let steps = 12;
                for i in -steps..=steps {
                    for j in -steps..=steps {
                        let u = (u0 + reach * i as f64 / steps as f64).clamp(-half, half);
                        let v = (v0 + reach * j as f64 / steps as f64).clamp(-half, half);
                        let d2 = vec3::dist2(p, at(u, v));
                        if d2 < best.2 {
                            best = (u, v, d2);
                        }
                    }
                }
                let mut step = reach / steps as f64;
                while step > 1e-10 {
                    let mut improved = false;
                    for (du, dv) in [(step, 0.0), (-step, 0.0), (0.0, step), (0.0, -step), (step, step), (-step, -step), (step, -step), (-step, step)] {
                        let u = (best.0 + du).clamp(-half, half);
                        let v = (best.1 + dv).clamp(-half, half);
                        let d2 = vec3::dist2(p, at(u, v));
                        if d2 < best.2 {
                            best = (u, v, d2);
                            improved = true;
                        }
                    }
                    if !improved {
                        step *= 0.5;
                    }
                }
                at(best.0, best.1)
            }
            _ => {
                let g = self.gradient(p);
                vec3::sub(p, vec3::scale(g, self.distance(p)))
            }
        }
    }

    /// Unit gradient of the unsigned distance, or zero where it is undefined.
    pub fn gradient(&self, p: Vec3) -> Vec3 {
        let d = vec3::sub(p, self.center());
        match *self {
            Self::Sphere { radius, .. } => {
                let n = vec3::normalize_or_zero(d);
                if vec3::norm(d) >= radius {
                    n
                } else {
                    vec3::scale(n, -1.0)
                }
            }
            Self::Plane { .. } => {
                if d[2] > 0.0 {
                    [0.0, 0.0, 1.0]
                } else if d[2] < 0.0 {
                    [0.0, 0.0, -1.0]
                } else {
                    [0.0; 3]
                }
            }
            Self::OpenDisk { radius, .. } => {
                let rho = (d[0] * d[0] + d[1] * d[1]).sqrt();
                let closest = if rho <= radius { [d[0], d[1], 0.0] } else { [d[0] * radius / rho, d[1] * radius / rho, 0.0] };
                vec3::normalize_or_zero(vec3::sub(d, closest))
            }
            Self::HalfSphere { radius, .. } => {
                let closest = if d[2] >= 0.0 {
                    vec3::scale(vec3::normalize_or_zero(d), radius)
                } else {
                    let rho = (d[0] * d[0] + d[1] * d[1]).sqrt();
                    if rho == 0.0 {
                        return [0.0; 3];
                    }
                    [d[0] * radius / rho, d[1] * radius / rho, 0.0]
                };
                if vec3::norm(d) == 0.0 {
                    return [0.0; 3];
                }
                vec3::normalize_or_zero(vec3::sub(d, closest))
            }
            Self::WavySheet { .. } => vec3::normalize_or_zero(vec3::sub(p, self.closest_point(p))),
            _ => self.numeric_gradient(p),
        }
    }

    /// Central differences of the unsigned distance, normalised; zero when the
    /// field is not differentiable there (magnitude far from one).
    pub fn numeric_gradient(&self, p: Vec3) -> Vec3 {
        let h = 1e-6;
        let mut g = [0.0; 3];
        for c in 0..3 {
            let mut a = p;
            let mut b = p;
            a[c] += h;
            b[c] -= h;
            g[c] = (self.distance(a) - self.distance(b)) / (2.0 * h);
        }
        let n = vec3::norm(g);
        if (n - 1.0).abs() > 0.1 {
            [0.0; 3]
        } else {
            vec3::scale(g, 1.0 / n)
        }
    }

    /// Surface area where a closed form exists.
    pub fn area(&self) -> Option<f64> {
        Some(match *self {
            Self::Sphere { radius, .. } => 4.0 * PI * radius * radius,
            Self::Torus { major, minor, .. } => 4.0 * PI * PI * major * minor,
            Self::Box { half, fillet, .. } => {
                let e = vec3::sub(half, [fillet; 3]);
                let faces = 8.0 * (e[0] * e[1] + e[1] * e[2] + e[0] * e[2]);
                let edges = 2.0 * PI * fillet * 2.0 * (e[0] + e[1] + e[2]);
                faces + edges + 4.0 * PI * fillet * fillet
            }
            Self::Capsule { half_length, radius, .. } => 4.0 * PI * radius * half_length + 4.0 * PI * radius * radius,
            Self::Cylinder { radius, half_height, .. } => 4.0 * PI * radius * half_height + 2.0 * PI * radius * radius,
            Self::Plane { half, .. } => 4.0 * half * half,
            Self::OpenDisk { radius, .. } => PI * radius * radius,
            Self::HalfSphere { radius, .. } => 2.0 * PI * radius * radius,
            Self::Ellipsoid { .. } | Self::WavySheet { .. } => return None,
        })
    }

    /// `n` area-uniform surface samples with unit normals.
    pub fn sample(&self, n: usize, seed: u64) -> Result<PointCloud, FieldError> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = self.center();
        let mut pts = Vec::with_capacity(n);
        let mut nrm = Vec::with_capacity(n);
        for _ in 0..n {
            let (p, nn) = self.sample_one(&mut rng);
            pts.push(vec3::add(c, p));
            nrm.push(nn);
        }
        Ok(PointCloud { points: pts, normals: Some(nrm) })
    }

    fn sample_one(&self, rng: &mut ChaCha8Rng) -> (Vec3, Vec3) {
        match *self {
            Self::Sphere { radius, .. } => {
                let u = gauss_dir(rng);
                (vec3::scale(u, radius), u)
            }
            Self::HalfSphere { radius, .. } => {
                let mut u = gauss_dir(rng);
                u[2] = u[2].abs();
                (vec3::scale(u, radius), u)
            }
            Self::Torus { major, minor, .. } => loop {
                let th = rng.random::<f64>() * 2.0 * PI;
                let ph = rng.random::<f64>() * 2.0 * PI;
                // Area element ∝ (R + r cos θ).
                if rng.random::<f64>() * (major + minor) <= major + minor * th.cos() {
                    let n = [th.cos() * ph.cos(), th.cos() * ph.sin(), th.sin()];
                    let p = [(major + minor * th.cos()) * ph.cos(), (major + minor * th.cos()) * ph.sin(), minor * th.sin()];
                    break (p, n);
                }
            },
            Self::Ellipsoid { radii, .. } => loop {
                let u = gauss_dir(rng);
                // Area element of the map u ↦ r∘u, relative to its maximum.
                let w = (0..3).map(|k| (u[k] / radii[k]).powi(2)).sum::<f64>().sqrt();
                let wmax = 1.0 / radii[0].min(radii[1]).min(radii[2]);
                if rng.random::<f64>() * wmax <= w {
                    let p = [0, 1, 2].map(|k| u[k] * radii[k]);
                    let n = vec3::normalize_or_zero([0, 1, 2].map(|k| u[k] / radii[k]));
                    break (p, n);
                }
            },
            Self::Capsule { half_length, radius, .. } => {
                let side = 4.0 * PI * radius * half_length;
                let caps = 4.0 * PI * radius * radius;
                if rng.random::<f64>() * (side + caps) < side {
                    let t = rng.random::<f64>() * 2.0 * PI;
                    let n = [t.cos(), t.sin(), 0.0];
                    ([radius * n[0], radius * n[1], (rng.random::<f64>() * 2.0 - 1.0) * half_length], n)
                } else {
                    let n = gauss_dir(rng);
                    let z = if n[2] >= 0.0 { half_length } else { -half_length };
                    ([radius * n[0], radius * n[1], z + radius * n[2]], n)
                }
            }
            Self::Cylinder { radius, half_height, .. } => {
                let side = 4.0 * PI * radius * half_height;
                let caps = 2.0 * PI * radius * radius;
                if rng.random::<f64>() * (side + caps) < side {
                    let t = rng.random::<f64>() * 2.0 * PI;
                    let n = [t.cos(), t.sin(), 0.0];
                    ([radius * n[0], radius * n[1], (rng.random::<f64>() * 2.0 - 1.0) * half_height], n)
                } else {
                    let r = radius * rng.random::<f64>().sqrt();
                    let t = rng.random::<f64>() * 2.0 * PI;
                    let s = if rng.random::<bool>() { 1.0 } else { -1.0 };
                    ([r * t.cos(), r * t.sin(), s * half_height], [0.0, 0.0, s])
                }
            }
            Self::Plane { half, .. } => ([(rng.random::<f64>() * 2.0 - 1.0) * half, (rng.random::<f64>() * 2.0 - 1.0) * half, 0.0], [0.0, 0.0, 1.0]),
            Self::OpenDisk { radius, .. } => {
                let r = radius * rng.random::<f64>().sqrt();
                let t = rng.random::<f64>() * 2.0 * PI;
                ([r * t.cos(), r * t.sin(), 0.0], [0.0, 0.0, 1.0])
            }
            Self::WavySheet { half, amplitude, frequency, .. } => loop {
                let u = (rng.random::<f64>() * 2.0 - 1.0) * half;
                let v = (rng.random::<f64>() * 2.0 - 1.0) * half;
                let hu = amplitude * frequency * (frequency * u).cos() * (frequency * v).sin();
                let hv = amplitude * frequency * (frequency * u).sin() * (frequency * v).cos();
                let w = (1.0 + hu * hu + hv * hv).sqrt();
                let wmax = (1.0 + 2.0 * (amplitude * frequency).powi(2)).sqrt();
                if rng.random::<f64>() * wmax <= w {
                    let p = [u, v, amplitude * (frequency * u).sin() * (frequency * v).sin()];
                    break (p, vec3::normalize_or_zero([-hu, -hv, 1.0]));
                }
            },
            Self::Box { half, fillet, .. } => {
                let e = vec3::sub(half, [fillet; 3]);
                // Pieces: 6 faces, 12 edge quarter-cylinders, 8 corner octants.
                let faces = [e[1] * e[2] * 4.0, e[0] * e[2] * 4.0, e[0] * e[1] * 4.0];
                let edges = [PI * fillet * e[0], PI * fillet * e[1], PI * fillet * e[2]];
                let corner = 0.5 * PI * fillet * fillet;
                let total = 2.0 * faces.iter().sum::<f64>() + 4.0 * edges.iter().sum::<f64>() + 8.0 * corner;
                let mut r = rng.random::<f64>() * total;
                let sgn = |rng: &mut ChaCha8Rng| if rng.random::<bool>() { 1.0 } else { -1.0 };
                for axis in 0..3 {
                    let a = 2.0 * faces[axis];
                    if r < a {
                        let s = sgn(rng);
                        let mut p = [0.0; 3];
                        let mut n = [0.0; 3];
                        for k in 0..3 {
                            p[k] = if k == axis { s * half[k] } else { (rng.random::<f64>() * 2.0 - 1.0) * e[k] };
                        }
                        n[axis] = s;
                        return (p, n);
                    }
                    r -= a;
                }
                for axis in 0..3 {
                    let a = 4.0 * edges[axis];
                    if r < a {
                        let (o1, o2) = ((axis + 1) % 3, (axis + 2) % 3);
                        let (s1, s2) = (sgn(rng), sgn(rng));
                        let t = rng.random::<f64>() * 0.5 * PI;
                        let mut n = [0.0; 3];
                        n[o1] = s1 * t.cos();
                        n[o2] = s2 * t.sin();
                        let mut p = [0.0; 3];
                        p[axis] = (rng.random::<f64>() * 2.0 - 1.0) * e[axis];
                        p[o1] = s1 * e[o1] + fillet * n[o1];
                        p[o2] = s2 * e[o2] + fillet * n[o2];
                        return (p, n);
                    }
                    r -= a;
                }
                let mut n = gauss_dir(rng);
                let signs = [sgn(rng), sgn(rng), sgn(rng)];
                for k in 0..3 {
                    n[k] = n[k].abs() * signs[k];
                }
                let p = [0, 1, 2].map(|k| signs[k] * e[k] + fillet * n[k]);
                (p, n)
            }
        }
    }
}
