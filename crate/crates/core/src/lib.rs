//! Steklov eigenvalues of triangulated surfaces with boundary.
//!
//! The crate computes the spectrum of the density-weighted discrete
//! Dirichlet-to-Neumann operator on triangle meshes, supports boundary
//! densities in the discrete L-infinity class (smoothing, zeroing on arcs,
//! conformal pushes), modifies surface topology by puncturing and by gluing
//! boundary arcs, maximizes the normalized first eigenvalue over densities,
//! and ships experiment drivers with a command-line front end.

pub mod density;
pub mod lab;
pub mod mesh;
pub mod meshio;
pub mod optimize;
pub mod plot;
pub mod spectral;
