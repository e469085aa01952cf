//! Layer stack, head construction and model assembly.

pub mod head;
pub mod layers;
pub mod model;

pub use head::{build_head, HeadDescription, HeadSpec, OUTPUT_LAYER};
pub use layers::{Activation, FeatureShape, Initializer, Layer, LayerKind, LayerSpec};
pub use model::{assemble, BuiltModel, FreezePolicy, ModelSpec};
