//! Dense linear algebra, random streams and the `LDIR` tensor file format.

mod linalg;
mod rng;
mod tensor;

pub use linalg::{axpy, dot, matvec, norm, squared_distance, DenseMatrix, LatentVector};
pub(crate) use linalg::{gemv, gemv_acc, gemv_t_acc, outer_acc};
pub use rng::{mix64, sample_standard_normal, stream_id, RngStream};
pub(crate) use tensor::Cursor;
pub use tensor::{
    decode_tensor, encode_tensor, read_tensor, write_tensor, Tensor, TENSOR_MAGIC, TENSOR_VERSION,
};
