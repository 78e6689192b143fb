pub mod cc;
pub mod deformation;
pub mod heisenberg;
pub mod maps;
pub mod nilmanifold;
pub mod normal;
pub mod sphere;

pub use heisenberg::{dilate, group_law, heisenberg, heisenberg_form, heisenberg_frame, heisenberg_norm, inverse, HeisenbergPoint};
pub use nilmanifold::nilmanifold;
pub use sphere::{sphere, SphereAtlas, SphereChart, SphereOptions};
