pub mod benchmarks;
pub mod diffusion;
pub mod tomography;
pub mod transport;
