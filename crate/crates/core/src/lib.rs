//! Numerical tools for the bifurcation analysis of the Liouville system
//! `-Δu1 = 2e^{u1} + μe^{u2}`, `-Δu2 = μe^{u1} + 2e^{u2}` in the plane,
//! posed on the sphere through stereographic projection.

pub mod legendre;
pub mod quadrature;
pub mod spectral;
pub mod inversion;
pub mod coefficients;
pub mod continuation;
pub mod plane_transfer;
