//! Head meshes, sphere maps, ear caps and anthropometric normalization.

pub mod anthro;
pub mod features;
pub mod mesh;
pub mod param;
pub mod patch;

pub use anthro::{equivalent_head_radius, normalization_factor, AnthroRecord, HeadRadiusModel};
pub use features::{ear_sch_features, EarFeatureExtractor, EarFeatures, Side};
pub use mesh::{icosahedron, icosphere, load_mesh, TriMesh, Vec3};
pub use param::{spherical_parameterize, spherical_parameterize_with, ParamOptions, SphereMap};
pub use patch::{crop_cap, remesh_cap, uniform_cap_grid, CapFrame, CroppedCap, EarPatch};
