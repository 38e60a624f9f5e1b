//! Convex polygons, point location, fan triangulation, point sampling and
//! symmetric triangle quadrature.

mod polygon;
mod quadrature;
mod sampling;

pub use polygon::{cross, triangle_area, GeometryError, Point, PointLocation, Polygon, BOUNDARY_TOL};
pub use quadrature::{triangle_quadrature, TriangleRule};
pub use sampling::{bilinear_map, random_boundary, random_interior, refine_triangles, sample_points, Sampling};
