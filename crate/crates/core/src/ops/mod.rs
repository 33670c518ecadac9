//! Layer primitives with analytic backward passes.

pub mod activation;
pub mod concat;
pub mod conv;
pub mod dense;
pub(crate) mod gemm;
pub mod loss;
pub mod norm;
pub mod pool;

pub use activation::{elu, elu_backward, relu, relu_backward, ELU_ALPHA};
pub use concat::{concat_depth, concat_depth_backward};
pub use conv::{
    conv2d_backward, conv2d_forward, conv2d_naive, conv_transpose2d_backward,
    conv_transpose2d_forward, ConvGrads, ConvParams,
};
pub use dense::{dense_backward, dense_forward, DenseGrads, DenseParams};
pub use loss::{softmax, softmax_cross_entropy};
pub use norm::{
    batchnorm_backward, batchnorm_forward, batchnorm_infer, BatchNormCache, BatchNormGrads,
    BatchNormParams,
};
pub use pool::{
    global_avg_pool, global_avg_pool_backward, maxpool2d, maxpool2d_backward, PoolSpec,
};
