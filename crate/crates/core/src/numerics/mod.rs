//! Numeric containers, seeded randomness, FFT and tensor file I/O.

pub mod fft;
pub mod grid;
pub mod pgm;
pub mod rng;
pub mod tensor_file;

pub use fft::{fft2, fftshift, ifft2, ifftshift};
pub use grid::{ComplexGrid2D, Grid2D, Unit};
pub use rng::{gaussian, Rng};
pub use tensor_file::{load_tensor, save_tensor, DType, TensorData, TensorFile};
