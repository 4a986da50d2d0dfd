//! Shared fixtures for the criterion benchmarks.

use commscope::{ModelConfig, ParallelLayout, ZeroStage};

/// 13B-scale GPT-style stack.
pub fn model_13b() -> ModelConfig {
    ModelConfig {
        attn_heads: 40,
        ..ModelConfig::new(50304, 5120, 40, 2048, 4)
    }
}

pub fn layout_3d(devices: u64) -> ParallelLayout {
    let mut layout = ParallelLayout::new(devices);
    layout.tensor = 2;
    layout.pipeline = 2;
    layout.zero_stage = ZeroStage::One;
    layout.num_microbatches = 4;
    layout
}

pub fn layout_zero3(devices: u64) -> ParallelLayout {
    let mut layout = ParallelLayout::new(devices);
    layout.zero_stage = ZeroStage::Three;
    layout
}
