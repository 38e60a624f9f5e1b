//! Neural trial functions that satisfy Dirichlet data exactly on convex
//! polygons, built from Wachspress coordinates and transfinite interpolation.

pub mod autodiff;
pub mod barycentric;
pub mod expr;
pub mod geometry;
pub mod loss;
pub mod network;
pub mod optim;
pub mod transfinite;
pub mod trial;
