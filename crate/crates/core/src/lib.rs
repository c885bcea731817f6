//! FullDiT at desk scale: every condition — camera, identity, depth — becomes
//! tokens in one sequence processed by full self-attention, trained with flow
//! matching on a synthetic world whose labels analytically determine pixels.

pub mod curriculum;
pub mod diffusion;
pub mod formats;
pub mod geometry;
pub mod model;
pub mod synthbench;
pub mod tokenizer;

pub use diffusion::{
    cfg_combine, euler_integrate, euler_sample, fm_loss, noisy_sample, sample_tokens,
    velocity_target, DiffusionError, FlowConfig, ModelField, VelocityField,
};
pub use geometry::{
    cam_mc, camera_center, parse_trajectory, plucker_embedding, rot_err, serialize_trajectory,
    trans_err, CameraIntrinsics, CameraPose, GeometryError, PluckerFrame, Trajectory,
    TrajectoryFormat, TrajectoryFrame,
};
pub use model::{ModelConfig, ModelError, ModelParams, Precision};
pub use tokenizer::{
    assemble_sequence, CodecConfig, CodecMode, Condition, ConditionSet, ConditionedTokens, Latent,
    TokenFragment, TokenKind, TokenSequence, Tokenizer, TokenizerError, ToyCodec, VideoTensor,
};
