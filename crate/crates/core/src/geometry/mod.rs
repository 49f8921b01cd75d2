//! Differential geometry of compatible almost complex structures on the
//! standard symplectic torus: structures and tangents, the three natural
//! connections, Hermitian curvature quantities, Hamiltonian dynamics, and
//! first-variation formulas.

pub mod connections;
pub mod dynamics;
pub mod hermitian;
pub mod structure;
pub mod variation;

pub use connections::{
    chern_connection, covariant_derivative, curvature, k_tensor, levi_civita, ric_form,
    ric_form_curvature_contraction, ricci, symplectic_connection,
};
pub use dynamics::{
    hamiltonian_field, lie_derivative_endo, lie_derivative_j, lie_derivative_j_integrable,
    nijenhuis_norm, poisson_bracket,
};
pub use hermitian::{
    anticanonical_theta, delta_j, endo_flat, hermitian_matrix, hermitian_ricci,
    hermitian_ricci_with_frame, hermitian_scalar, hermitian_scalar_wedge, laplacian, musical_flat,
    volume_density,
};
pub use structure::{
    flat_structure, lambda_raise, make_structure, min_eigenvalue_sym, omega_lower,
    project_tangent, random_tangent, tangent_residual, CompatibleStructure, StructureKind,
    SymplecticData, TangentAtJ,
};
pub use variation::{
    fd_richardson, fd_richardson_field, first_variation_levi_civita,
    first_variation_levi_civita_fd, j_along, j_along_tensor, variation_hermitian_ricci,
};
