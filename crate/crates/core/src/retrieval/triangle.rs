use std::fmt;
use std::str::FromStr;

use nalgebra::{Complex, Vector3};

use super::RetrievalError;
use crate::geometry::Point3;

/// Triangle over three salient-region centroids. For the standard face
/// signature the vertices are the two eyes followed by the nose; the
/// winding fixes the normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FacialTriangle {
    vertices: [Point3; 3],
    normal: Vector3<f64>,
}

/// Row labels of the standard-triangle file.
pub const TRIANGLE_LABELS: [&str; 3] = ["eye_l", "eye_r", "nose"];

impl FacialTriangle {
    pub fn new(a: Point3, b: Point3, c: Point3) -> Result<Self, RetrievalError> {
        let cross = (b - a).cross(&(c - a));
        let scale = (b - a).norm_squared().max((c - a).norm_squared()).max((c - b).norm_squared());
        let len = cross.norm();
        if !(len > 1e-12 * scale) || !len.is_finite() {
            return Err(RetrievalError::DegenerateTriangle);
        }
        Ok(Self {
            vertices: [a, b, c],
            normal: cross / len,
        })
    }

    pub fn vertices(&self) -> &[Point3; 3] {
        &self.vertices
    }

    pub fn centroid(&self) -> Point3 {
        (self.vertices[0] + self.vertices[1] + self.vertices[2]) / 3.0
    }

    pub fn normal(&self) -> Vector3<f64> {
        self.normal
    }

    /// Same triangle with opposite winding.
    pub fn flipped(&self) -> Self {
        let [a, b, c] = self.vertices;
        Self {
            vertices: [a, c, b],
            normal: -self.normal,
        }
    }

    /// Centered vertex coordinates in a right-handed frame whose third axis
    /// is the normal.
    fn planar_coordinates(&self) -> [Complex<f64>; 3] {
        let c = self.centroid();
        let e1 = (self.vertices[0] - c).normalize();
        let e2 = self.normal.cross(&e1);
        self.vertices.map(|v| {
            let d = v - c;
            Complex::new(d.dot(&e1), d.dot(&e2))
        })
    }
}

/// Matching error between a test triangle and the standard one.
///
/// The test triangle is centered on the standard centroid, rotated so the
/// normals agree, then rotated in-plane and uniformly scaled by the
/// least-squares optimum. The error is the mean of the three vertex
/// distances, minimized over the three cyclic vertex correspondences.
pub fn match_triangle(test: &FacialTriangle, standard: &FacialTriangle) -> f64 {
    let z = test.planar_coordinates();
    let w = standard.planar_coordinates();
    (0..3)
        .map(|shift| {
            let zs = [z[shift], z[(shift + 1) % 3], z[(shift + 2) % 3]];
            let num: Complex<f64> = zs.iter().zip(&w).map(|(a, b)| a.conj() * b).sum();
            let den: f64 = zs.iter().map(|a| a.norm_sqr()).sum();
            let a = num / den;
            zs.iter().zip(&w).map(|(p, q)| (a * p - q).norm()).sum::<f64>() / 3.0
        })
        .fold(f64::INFINITY, f64::min)
}

impl fmt::Display for FacialTriangle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (label, v) in TRIANGLE_LABELS.iter().zip(&self.vertices) {
            writeln!(f, "{label} {} {} {}", v.x, v.y, v.z)?;
        }
        Ok(())
    }
}

impl FromStr for FacialTriangle {
    type Err = RetrievalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut found: [Option<Point3>; 3] = [None; 3];
        for (n, line) in s.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            let bad = |why: &str| RetrievalError::MalformedTriangleFile(format!("line {}: {why}", n + 1));
            if toks.len() != 4 {
                return Err(bad("expected a label and three coordinates"));
            }
            let slot = TRIANGLE_LABELS
                .iter()
                .position(|l| *l == toks[0])
                .ok_or_else(|| bad(&format!("unknown label {:?}", toks[0])))?;
            if found[slot].is_some() {
                return Err(bad(&format!("duplicate label {:?}", toks[0])));
            }
            let mut xyz = [0.0; 3];
            for (k, t) in toks[1..].iter().enumerate() {
                xyz[k] = t
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| bad(&format!("bad coordinate {t:?}")))?;
            }
            found[slot] = Some(Point3::from(xyz));
        }
        match found {
            [Some(a), Some(b), Some(c)] => FacialTriangle::new(a, b, c),
            _ => Err(RetrievalError::MalformedTriangleFile(
                "need eye_l, eye_r and nose rows".into(),
            )),
        }
    }
}
