//! Closed-form per-iteration communication volumes for every parallelism
//! scheme, plus their 3D composition. All results are exact rationals in
//! units of elements; byte conversion belongs to the reporting boundary.

use std::fmt;

use crate::error::Result;
use crate::types::{
    check_model_layout, CollectiveKind, KindMap, ModelConfig, ParallelLayout, ZeroStage,
};
use crate::volume::Volume;

/// Which scheme a prediction describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    Ddp,
    Zero1,
    Zero2,
    Zero3,
    Pipeline,
    Tensor,
    ThreeD,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Scheme::Ddp => "ddp",
            Scheme::Zero1 => "zero1",
            Scheme::Zero2 => "zero2",
            Scheme::Zero3 => "zero3",
            Scheme::Pipeline => "pipeline",
            Scheme::Tensor => "tensor",
            Scheme::ThreeD => "3d",
        };
        f.write_str(name)
    }
}

/// Predicted per-iteration wire volume, in elements, broken down by kind.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VolumePrediction {
    pub scheme: Scheme,
    pub per_kind_elems: KindMap<Volume>,
    /// Modeling caveats worth surfacing next to the numbers.
    pub notes: Vec<String>,
}

impl VolumePrediction {
    fn empty(scheme: Scheme) -> Self {
        VolumePrediction {
            scheme,
            per_kind_elems: KindMap::default(),
            notes: Vec::new(),
        }
    }

    pub fn total_elems(&self) -> Volume {
        self.per_kind_elems.iter().map(|(_, v)| *v).sum()
    }
}

/// Total trainable parameter count: embeddings (`2Vh`, or `Vh` when tied),
/// position embeddings `sh`, per-layer attention/MLP/norm weights, and the
/// final norm. With the conventional expansion factor 4 the per-layer term
/// is `12h^2 + 8h`.
pub fn param_count(cfg: &ModelConfig) -> u64 {
    let v = cfg.vocab_size as u128;
    let h = cfg.hidden as u128;
    let s = cfg.seq_len as u128;
    let l = cfg.layers as u128;
    let x = cfg.mlp_expansion as u128;

    let embeddings = if cfg.tied_embeddings { v * h } else { 2 * v * h };
    let per_layer = (4 + 2 * x) * h * h + 8 * h;
    let total = embeddings + s * h + l * per_layer + 2 * h;
    u64::try_from(total).expect("parameter count overflows u64")
}

/// Wire volume of one collective call with logical payload `m` over a group
/// of `g` ranks. Ring bounds for the reduction family, the logical payload
/// for point-to-point and broadcast.
pub fn collective_volume(kind: CollectiveKind, payload: u64, group_size: u64) -> Volume {
    assert!(group_size >= 1, "collective over an empty group");
    let m = payload as u128;
    let g = group_size as u128;
    match kind {
        CollectiveKind::Allreduce => Volume::ratio(2 * m * (g - 1), g),
        CollectiveKind::Allgather | CollectiveKind::ReduceScatter | CollectiveKind::Reduce => {
            Volume::ratio(m * (g - 1), g)
        }
        // Convention: one full traversal of the logical payload. The initial
        // parameter broadcast is reported separately and never enters the
        // per-scheme comparisons.
        CollectiveKind::Broadcast => Volume::from_int(m),
        CollectiveKind::Send | CollectiveKind::Recv => Volume::from_int(m),
    }
}

fn dp_component(params: u64, group: u64, stage: ZeroStage) -> KindMap<Volume> {
    let mut per_kind = KindMap::<Volume>::default();
    match stage {
        ZeroStage::None => {
            per_kind[CollectiveKind::Allreduce] =
                collective_volume(CollectiveKind::Allreduce, params, group);
        }
        ZeroStage::One | ZeroStage::Two => {
            per_kind[CollectiveKind::ReduceScatter] =
                collective_volume(CollectiveKind::ReduceScatter, params, group);
            per_kind[CollectiveKind::Allgather] =
                collective_volume(CollectiveKind::Allgather, params, group);
        }
        ZeroStage::Three => {
            per_kind[CollectiveKind::ReduceScatter] =
                collective_volume(CollectiveKind::ReduceScatter, params, group);
            // Gradient-exchange allgather plus the forward parameter
            // allgather that parameter sharding requires.
            per_kind[CollectiveKind::Allgather] =
                collective_volume(CollectiveKind::Allgather, params, group) * 2;
        }
    }
    per_kind
}

/// Plain data parallelism at the layout's data-parallel degree: one gradient
/// allreduce of the full parameter count per iteration.
pub fn ddp_volume(cfg: &ModelConfig, layout: &ParallelLayout) -> Result<VolumePrediction> {
    let group = layout.data_parallel()?;
    Ok(VolumePrediction {
        scheme: Scheme::Ddp,
        per_kind_elems: dp_component(param_count(cfg), group, ZeroStage::None),
        notes: Vec::new(),
    })
}

/// ZeRO sharded data parallelism at the layout's stage. Stages 1 and 2 swap
/// the gradient allreduce for a reduce-scatter/allgather pair of the same
/// total volume; stage 3 adds a second parameter allgather.
pub fn zero_volume(cfg: &ModelConfig, layout: &ParallelLayout) -> Result<VolumePrediction> {
    let group = layout.data_parallel()?;
    let scheme = match layout.zero_stage {
        ZeroStage::None => Scheme::Ddp,
        ZeroStage::One => Scheme::Zero1,
        ZeroStage::Two => Scheme::Zero2,
        ZeroStage::Three => Scheme::Zero3,
    };
    Ok(VolumePrediction {
        scheme,
        per_kind_elems: dp_component(param_count(cfg), group, layout.zero_stage),
        notes: Vec::new(),
    })
}

/// Pipeline-parallel point-to-point volume: each of the `p - 1` stage
/// boundaries moves a `b*s*h` activation forward and a `b*s*h` gradient
/// backward per micro-batch.
pub fn pipeline_volume(cfg: &ModelConfig, layout: &ParallelLayout) -> VolumePrediction {
    let mut pred = VolumePrediction::empty(Scheme::Pipeline);
    let boundaries = layout.pipeline.saturating_sub(1) as u128;
    let bsh = cfg.micro_batch as u128 * cfg.seq_len as u128 * cfg.hidden as u128;
    let per_direction = Volume::from_int(bsh * boundaries * layout.num_microbatches as u128);
    pred.per_kind_elems[CollectiveKind::Send] = per_direction;
    pred.per_kind_elems[CollectiveKind::Recv] = per_direction;
    if layout.num_microbatches > 1 {
        pred.notes.push(format!(
            "point-to-point volume scaled linearly by num_microbatches={}",
            layout.num_microbatches
        ));
    }
    pred
}

/// Tensor-parallel allreduce volume: six allreduces per layer (two forward,
/// two for activation recomputation, two backward) plus one at the
/// embedding, each of payload `b*s*h` over the tensor group. Without
/// recomputation the per-layer count drops to four.
pub fn tensor_volume(cfg: &ModelConfig, layout: &ParallelLayout, recompute: bool) -> VolumePrediction {
    let mut pred = VolumePrediction::empty(Scheme::Tensor);
    let t = layout.tensor as u128;
    let bsh = cfg.micro_batch as u128 * cfg.seq_len as u128 * cfg.hidden as u128;
    let factor = if recompute {
        12 * cfg.layers as u128 + 2
    } else {
        8 * cfg.layers as u128 + 2
    };
    pred.per_kind_elems[CollectiveKind::Allreduce] = Volume::ratio(factor * bsh * (t - 1), t);
    pred
}

/// Number of tensor-parallel allreduce calls per iteration: `6L + 1` with
/// recomputation, `4L + 1` without.
pub fn tensor_allreduce_calls(layers: u64, recompute: bool) -> u64 {
    if recompute {
        6 * layers + 1
    } else {
        4 * layers + 1
    }
}

/// 3D composition: the tensor term over `L/p` layers, the pipeline term,
/// and the data-parallel term for the layout's ZeRO stage, each computed
/// over its own group size. The totals are additive.
pub fn threed_volume(
    cfg: &ModelConfig,
    layout: &ParallelLayout,
    recompute: bool,
) -> Result<VolumePrediction> {
    check_model_layout(cfg, layout)?;
    let dp = layout.data_parallel()?;

    let mut stage_cfg = cfg.clone();
    stage_cfg.layers = cfg.layers / layout.pipeline;

    let tensor = tensor_volume(&stage_cfg, layout, recompute);
    let pipeline = pipeline_volume(cfg, layout);
    let data = dp_component(param_count(cfg), dp, layout.zero_stage);

    let mut pred = VolumePrediction::empty(Scheme::ThreeD);
    pred.per_kind_elems = data.map(|kind, v| {
        *v + tensor.per_kind_elems[kind] + pipeline.per_kind_elems[kind]
    });
    pred.notes = pipeline.notes;
    Ok(pred)
}

/// The 3D composition with the scheme relabeled when the layout degenerates
/// to a single pure scheme. This is what `predict` serves.
pub fn predict_volume(
    cfg: &ModelConfig,
    layout: &ParallelLayout,
    recompute: bool,
) -> Result<VolumePrediction> {
    let mut pred = threed_volume(cfg, layout, recompute)?;
    let dp = layout.data_parallel()?;
    pred.scheme = match (layout.tensor > 1, layout.pipeline > 1) {
        (false, false) => match layout.zero_stage {
            ZeroStage::None => Scheme::Ddp,
            ZeroStage::One => Scheme::Zero1,
            ZeroStage::Two => Scheme::Zero2,
            ZeroStage::Three => Scheme::Zero3,
        },
        (true, false) if dp == 1 => Scheme::Tensor,
        (false, true) if dp == 1 => Scheme::Pipeline,
        _ => Scheme::ThreeD,
    };
    Ok(pred)
}
