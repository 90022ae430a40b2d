pub mod cbam;
pub mod map;

pub use cbam::{Cbam, ChannelAttention, SpatialAttention, DEFAULT_REDUCTION, SPATIAL_KERNEL};
pub use map::{activation_attention_map, edge_steps, raw_energy, AttentionMap, ATTENTION_POWER, EDGE_EXCLUSION_S};
