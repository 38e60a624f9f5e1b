use crate::autodiff::Scalar;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Point = [f64; 2];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("a polygon needs at least 3 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("vertex {0} is not strictly convex")]
    NotConvex(usize),
    #[error("vertices are in clockwise order")]
    ClockwiseOrder,
    #[error("edge {0} is degenerate")]
    DegenerateEdge(usize),
    #[error("vertex coordinates must be finite")]
    NonFinite,
    #[error("sampling strategy {strategy} needs a quadrilateral, got {n} vertices")]
    StrategyMismatch { strategy: &'static str, n: usize },
    #[error("invalid sampling parameter: {0}")]
    InvalidSampling(String),
    #[error("no triangle rule of order {0} (supported 1..=7)")]
    UnsupportedOrder(usize),
}

/// Where a point lies relative to a polygon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PointLocation {
    Interior,
    /// On edge `edge` (from vertex `edge` to `edge + 1`) at parameter `t`.
    Boundary { edge: usize, t: f64 },
    Exterior,
}

/// Default boundary tolerance in units of the polygon diameter.
pub const BOUNDARY_TOL: f64 = 1e-12;

/// Strictly convex polygon with counterclockwise vertices and cached edge data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Point>", into = "Vec<Point>")]
pub struct Polygon {
    vertices: Vec<Point>,
    normals: Vec<Point>,
    lengths: Vec<f64>,
    diameter: f64,
    area: f64,
}

impl TryFrom<Vec<Point>> for Polygon {
    type Error = GeometryError;
    fn try_from(v: Vec<Point>) -> Result<Self, Self::Error> {
        Polygon::new(v)
    }
}

impl From<Polygon> for Vec<Point> {
    fn from(p: Polygon) -> Self {
        p.vertices
    }
}

pub fn cross(a: Point, b: Point) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

fn norm(a: Point) -> f64 {
    a[0].hypot(a[1])
}

/// Signed area of the triangle `(a, b, c)`, positive when counterclockwise.
pub fn triangle_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * cross(sub(b, a), sub(c, a))
}

impl Polygon {
    /// Validate a vertex loop. Clockwise input is rejected, never reversed.
    pub fn new(vertices: Vec<Point>) -> Result<Self, GeometryError> {
        let n = vertices.len();
        if n < 3 {
            return Err(GeometryError::TooFewVertices(n));
        }
        if vertices.iter().flatten().any(|c| !c.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        let mut diameter: f64 = 0.0;
        for a in &vertices {
            for b in &vertices {
                diameter = diameter.max(norm(sub(*a, *b)));
            }
        }
        let mut lengths = Vec::with_capacity(n);
        let mut normals = Vec::with_capacity(n);
        for i in 0..n {
            let e = sub(vertices[(i + 1) % n], vertices[i]);
            let l = norm(e);
            if !(l > 1e-12 * diameter) {
                return Err(GeometryError::DegenerateEdge(i));
            }
            lengths.push(l);
            normals.push([e[1] / l, -e[0] / l]);
        }
        let area: f64 = (0..n).map(|i| 0.5 * cross(vertices[i], vertices[(i + 1) % n])).sum();
        if area <= 0.0 {
            return Err(GeometryError::ClockwiseOrder);
        }
        for i in 0..n {
            let e0 = sub(vertices[(i + 1) % n], vertices[i]);
            let e1 = sub(vertices[(i + 2) % n], vertices[(i + 1) % n]);
            if cross(e0, e1) <= 0.0 {
                return Err(GeometryError::NotConvex((i + 1) % n));
            }
        }
        // Turning left at every vertex with positive area still admits
        // self-overlapping star loops; total turning must be one revolution.
        let turning: f64 = (0..n)
            .map(|i| {
                let e0 = sub(vertices[(i + 1) % n], vertices[i]);
                let e1 = sub(vertices[(i + 2) % n], vertices[(i + 1) % n]);
                cross(e0, e1).atan2(e0[0] * e1[0] + e0[1] * e1[1])
            })
            .sum();
        if (turning - 2.0 * std::f64::consts::PI).abs() > 1e-6 {
            return Err(GeometryError::NotConvex(0));
        }
        Ok(Polygon { vertices, normals, lengths, diameter, area })
    }

    pub fn unit_square() -> Self {
        Polygon::new(vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]).expect("valid square")
    }

    /// Regular `n`-gon inscribed in the unit circle with a vertex on the positive x axis.
    pub fn regular(n: usize) -> Result<Self, GeometryError> {
        let verts = (0..n)
            .map(|k| {
                let a = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                [a.cos(), a.sin()]
            })
            .collect();
        Polygon::new(verts)
    }

    pub fn n(&self) -> usize {
        self.vertices.len()
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn vertex(&self, i: usize) -> Point {
        self.vertices[i % self.n()]
    }

    /// Outward unit normal of edge `i`.
    pub fn normal(&self, i: usize) -> Point {
        self.normals[i % self.n()]
    }

    pub fn edge_length(&self, i: usize) -> f64 {
        self.lengths[i % self.n()]
    }

    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    pub fn area(&self) -> f64 {
        self.area
    }

    /// Vertex average; interior for any convex polygon.
    pub fn centroid(&self) -> Point {
        let n = self.n() as f64;
        let s = self.vertices.iter().fold([0.0, 0.0], |a, v| [a[0] + v[0], a[1] + v[1]]);
        [s[0] / n, s[1] / n]
    }

    /// Point at parameter `s` along edge `i`, from `x_i` to `x_{i+1}`.
    pub fn edge_point(&self, i: usize, s: f64) -> Point {
        let (a, b) = (self.vertex(i), self.vertex(i + 1));
        [(1.0 - s) * a[0] + s * b[0], (1.0 - s) * a[1] + s * b[1]]
    }

    /// `det(n_{i-1}, n_i)`, positive for convex counterclockwise polygons.
    pub fn normal_det(&self, i: usize) -> f64 {
        let n = self.n();
        cross(self.normal(i + n - 1), self.normal(i))
    }

    /// Perpendicular distance from `(x, y)` to the line of edge `i`, positive inside.
    pub fn h<S: Scalar>(&self, i: usize, x: S, y: S) -> S {
        let v = self.vertex(i);
        let nn = self.normal(i);
        (S::constant(v[0]) - x).scale(nn[0]) + (S::constant(v[1]) - y).scale(nn[1])
    }

    pub fn distances<S: Scalar>(&self, x: S, y: S) -> Vec<S> {
        (0..self.n()).map(|i| self.h(i, x, y)).collect()
    }

    /// Signed area `A_i(x) = A(x_i, x_{i+1}, x) = l_i h_i(x) / 2`.
    pub fn edge_area<S: Scalar>(&self, i: usize, x: S, y: S) -> S {
        self.h(i, x, y).scale(0.5 * self.edge_length(i))
    }

    /// `B_i = A(x_{i-1}, x_i, x_{i+1})`.
    pub fn corner_area(&self, i: usize) -> f64 {
        let n = self.n();
        triangle_area(self.vertex(i + n - 1), self.vertex(i), self.vertex(i + 1))
    }

    pub fn locate(&self, p: Point, tol: f64) -> PointLocation {
        let hs = self.distances(p[0], p[1]);
        let scale = tol * self.diameter;
        let (imin, hmin) = hs
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, h)| if h < acc.1 { (i, h) } else { acc });
        if hmin < -scale {
            PointLocation::Exterior
        } else if hmin <= scale {
            let a = self.vertex(imin);
            let e = sub(self.vertex(imin + 1), a);
            let t = ((p[0] - a[0]) * e[0] + (p[1] - a[1]) * e[1]) / (e[0] * e[0] + e[1] * e[1]);
            PointLocation::Boundary { edge: imin, t: t.clamp(0.0, 1.0) }
        } else {
            PointLocation::Interior
        }
    }

    /// `n` triangles `(c, x_i, x_{i+1})` around the vertex centroid `c`.
    pub fn fan_triangulate(&self) -> Vec<[Point; 3]> {
        let c = self.centroid();
        (0..self.n()).map(|i| [c, self.vertex(i), self.vertex(i + 1)]).collect()
    }
}
