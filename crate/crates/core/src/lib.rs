pub mod analysis;
pub mod classifier;
pub mod concept;
pub mod gaussian;
pub mod profile;
pub mod sprite;
pub mod tensor;
pub mod vae;
