//! Dense `f64` arithmetic with reverse-mode gradients: just enough for
//! linear maps, cross-attention, position tables and a classification loss.

mod attention;
mod checkpoint;
mod gradcheck;
mod graph;
mod linear;
mod params;
mod position;
mod tensor;

pub use attention::{attend, Attended, CrossAttention, Projection};
pub use checkpoint::{
    apply_records, decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint,
    CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use gradcheck::{
    finite_diff_check, relative_error, GradCheckReport, ParamReport, ParamStatus, REL_ERROR_FLOOR,
};
pub use graph::{Gradients, Graph, Var};
pub use linear::LinearLayer;
pub use params::{ParamGroup, ParamId, ParamStore, Parameter};
pub use position::{sinusoidal_table, PeKind, PositionEncoding};
pub use tensor::{matmul, matmul_nt, matmul_tn, softmax_rows, Tensor};
