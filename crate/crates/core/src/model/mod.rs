//! The LightPneumoNet layer stack: declarative description, shape/parameter
//! introspection, parameter storage, full forward/backward passes, and the
//! `LPNW` checkpoint format.

mod checkpoint;
mod network;
mod params;
mod spec;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_weights, save_weights, MAGIC, VERSION,
};
pub use network::{model_backward, model_forward, ForwardCache, Mode};
pub use params::{init_params, ModelParams, ParamKind, ParamLayer};
pub use spec::{
    build_lightpneumonet, build_reduced, count_params, shape_trace, Activation, Architecture,
    LayerSpec, ModelSpec, ParamCount, ShapeTrace, TraceEntry,
};
