use std::fmt;
use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};

/// Transformer hyperparameters that determine communication payloads.
///
/// Counts are strictly positive except `layers`, which may be zero (a
/// degenerate stack of just embeddings and the final norm).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ModelConfig {
    pub vocab_size: u64,
    pub hidden: u64,
    pub layers: u64,
    pub seq_len: u64,
    pub micro_batch: u64,
    pub attn_heads: u64,
    /// MLP projection expansion factor; 4 is the conventional value.
    pub mlp_expansion: u64,
    /// Payload width in bytes; byte conversion happens only at reporting
    /// boundaries, volumes are carried in elements.
    pub elem_bytes: u32,
    pub tied_embeddings: bool,
}

impl ModelConfig {
    /// A config with the given required counts and conventional defaults
    /// (one attention head, expansion 4, 2-byte elements, untied embeddings).
    pub fn new(vocab_size: u64, hidden: u64, layers: u64, seq_len: u64, micro_batch: u64) -> Self {
        ModelConfig {
            vocab_size,
            hidden,
            layers,
            seq_len,
            micro_batch,
            attn_heads: 1,
            mlp_expansion: 4,
            elem_bytes: 2,
            tied_embeddings: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (field, value) in [
            ("vocab_size", self.vocab_size),
            ("hidden", self.hidden),
            ("seq_len", self.seq_len),
            ("micro_batch", self.micro_batch),
            ("attn_heads", self.attn_heads),
            ("mlp_expansion", self.mlp_expansion),
        ] {
            if value == 0 {
                return Err(Error::ZeroField { field });
            }
        }
        if !matches!(self.elem_bytes, 1 | 2 | 4 | 8) {
            return Err(Error::BadElemBytes {
                value: self.elem_bytes,
            });
        }
        if !self.hidden.is_multiple_of(self.attn_heads) {
            return Err(Error::HiddenNotDivisible {
                hidden: self.hidden,
                heads: self.attn_heads,
            });
        }
        Ok(())
    }

    pub fn validated(self) -> Result<Self> {
        self.validate()?;
        Ok(self)
    }
}

/// ZeRO optimizer-state sharding stage. `None` is plain data parallelism.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ZeroStage {
    None,
    One,
    Two,
    Three,
}

impl fmt::Display for ZeroStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ZeroStage::None => write!(f, "none"),
            ZeroStage::One => write!(f, "zero1"),
            ZeroStage::Two => write!(f, "zero2"),
            ZeroStage::Three => write!(f, "zero3"),
        }
    }
}

impl ZeroStage {
    pub fn from_token(token: &str) -> Option<ZeroStage> {
        match token.to_ascii_lowercase().as_str() {
            "none" | "0" | "ddp" => Some(ZeroStage::None),
            "1" | "zero1" => Some(ZeroStage::One),
            "2" | "zero2" => Some(ZeroStage::Two),
            "3" | "zero3" => Some(ZeroStage::Three),
            _ => None,
        }
    }
}

/// How the training job is laid out across devices.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ParallelLayout {
    pub devices: u64,
    pub tensor: u64,
    pub pipeline: u64,
    pub zero_stage: ZeroStage,
    /// Micro-batches per iteration; scales point-to-point volume linearly.
    pub num_microbatches: u64,
}

impl ParallelLayout {
    pub fn new(devices: u64) -> Self {
        ParallelLayout {
            devices,
            tensor: 1,
            pipeline: 1,
            zero_stage: ZeroStage::None,
            num_microbatches: 1,
        }
    }

    /// The data-parallel degree `d / (t * p)`.
    pub fn data_parallel(&self) -> Result<u64> {
        let model_parallel = self
            .tensor
            .checked_mul(self.pipeline)
            .filter(|mp| *mp > 0 && *mp <= self.devices)
            .ok_or(Error::NonDivisibleLayout {
                devices: self.devices,
                tensor: self.tensor,
                pipeline: self.pipeline,
            })?;
        if !self.devices.is_multiple_of(model_parallel) {
            return Err(Error::NonDivisibleLayout {
                devices: self.devices,
                tensor: self.tensor,
                pipeline: self.pipeline,
            });
        }
        Ok(self.devices / model_parallel)
    }

    pub fn validate(&self) -> Result<()> {
        for (field, value) in [
            ("devices", self.devices),
            ("tensor", self.tensor),
            ("pipeline", self.pipeline),
            ("num_microbatches", self.num_microbatches),
        ] {
            if value == 0 {
                return Err(Error::ZeroField { field });
            }
        }
        self.data_parallel()?;
        if self.zero_stage == ZeroStage::Three && self.pipeline > 1 {
            return Err(Error::Zero3WithPipeline {
                pipeline: self.pipeline,
            });
        }
        Ok(())
    }

    pub fn validated(self) -> Result<Self> {
        self.validate()?;
        Ok(self)
    }
}

/// Checks the divisibility constraints that only exist once a model is
/// paired with a layout: layers across pipeline stages, attention heads
/// across tensor ranks.
pub fn check_model_layout(cfg: &ModelConfig, layout: &ParallelLayout) -> Result<()> {
    if layout.pipeline > 1 && !cfg.layers.is_multiple_of(layout.pipeline) {
        return Err(Error::LayersNotDivisible {
            layers: cfg.layers,
            pipeline: layout.pipeline,
        });
    }
    if layout.tensor > 1 && !cfg.attn_heads.is_multiple_of(layout.tensor) {
        return Err(Error::HeadsNotDivisible {
            heads: cfg.attn_heads,
            tensor: layout.tensor,
        });
    }
    Ok(())
}

/// The closed set of communication operations the model reasons about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CollectiveKind {
    Allreduce,
    Allgather,
    ReduceScatter,
    Reduce,
    Broadcast,
    Send,
    Recv,
}

impl CollectiveKind {
    pub const ALL: [CollectiveKind; 7] = [
        CollectiveKind::Allreduce,
        CollectiveKind::Allgather,
        CollectiveKind::ReduceScatter,
        CollectiveKind::Reduce,
        CollectiveKind::Broadcast,
        CollectiveKind::Send,
        CollectiveKind::Recv,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Canonical lowercase name, also used in the trace format.
    pub fn name(self) -> &'static str {
        match self {
            CollectiveKind::Allreduce => "allreduce",
            CollectiveKind::Allgather => "allgather",
            CollectiveKind::ReduceScatter => "reducescatter",
            CollectiveKind::Reduce => "reduce",
            CollectiveKind::Broadcast => "broadcast",
            CollectiveKind::Send => "send",
            CollectiveKind::Recv => "recv",
        }
    }

    /// Parses a kind token, case-insensitively, including the aliases
    /// frameworks commonly log (`all_reduce`, `reduce_scatter_tensor`, ...).
    pub fn from_token(token: &str) -> Option<CollectiveKind> {
        match token.to_ascii_lowercase().as_str() {
            "allreduce" | "all_reduce" => Some(CollectiveKind::Allreduce),
            "allgather" | "all_gather" | "allgather_into_tensor" => Some(CollectiveKind::Allgather),
            "reducescatter" | "reduce_scatter" | "reduce_scatter_tensor" => {
                Some(CollectiveKind::ReduceScatter)
            }
            "reduce" => Some(CollectiveKind::Reduce),
            "broadcast" => Some(CollectiveKind::Broadcast),
            "send" => Some(CollectiveKind::Send),
            "recv" => Some(CollectiveKind::Recv),
            _ => None,
        }
    }
}

impl fmt::Display for CollectiveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Where in the iteration an event fires. Declaration order is phase order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Phase {
    Init,
    Forward,
    Recompute,
    Backward,
    OptimizerStep,
}

impl Phase {
    pub const ALL: [Phase; 5] = [
        Phase::Init,
        Phase::Forward,
        Phase::Recompute,
        Phase::Backward,
        Phase::OptimizerStep,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Phase::Init => "init",
            Phase::Forward => "forward",
            Phase::Recompute => "recompute",
            Phase::Backward => "backward",
            Phase::OptimizerStep => "optimizer_step",
        }
    }

    pub fn from_token(token: &str) -> Option<Phase> {
        match token.to_ascii_lowercase().as_str() {
            "init" => Some(Phase::Init),
            "forward" => Some(Phase::Forward),
            "recompute" => Some(Phase::Recompute),
            "backward" => Some(Phase::Backward),
            "optimizer_step" | "optimizerstep" | "step" => Some(Phase::OptimizerStep),
            _ => None,
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One communication call (or `repeat` identical calls): the unit the
/// schedule generator emits and the aggregators consume.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CollectiveEvent {
    pub kind: CollectiveKind,
    /// Logical message size in elements, before any collective scaling.
    pub payload_elems: u64,
    pub group_size: u64,
    pub phase: Phase,
    pub repeat: u64,
}

impl CollectiveEvent {
    pub fn new(kind: CollectiveKind, payload_elems: u64, group_size: u64, phase: Phase) -> Self {
        CollectiveEvent {
            kind,
            payload_elems,
            group_size,
            phase,
            repeat: 1,
        }
    }

    pub fn repeated(mut self, repeat: u64) -> Self {
        self.repeat = repeat;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.group_size < 1 {
            return Err(Error::BadEvent {
                reason: format!("{} event with empty group", self.kind),
            });
        }
        if self.repeat < 1 {
            return Err(Error::BadEvent {
                reason: format!("{} event with zero repeat", self.kind),
            });
        }
        if matches!(self.kind, CollectiveKind::Send | CollectiveKind::Recv)
            && self.group_size != 2
        {
            return Err(Error::BadEvent {
                reason: format!(
                    "{} event must have group_size 2, got {}",
                    self.kind, self.group_size
                ),
            });
        }
        Ok(())
    }
}

/// A dense map keyed by `CollectiveKind`, iterated in declaration order so
/// every rendering of per-kind data is deterministic.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct KindMap<T> {
    slots: [T; 7],
}

impl<T: Default> Default for KindMap<T> {
    fn default() -> Self {
        KindMap {
            slots: Default::default(),
        }
    }
}

impl<T> KindMap<T> {
    pub fn iter(&self) -> impl Iterator<Item = (CollectiveKind, &T)> {
        CollectiveKind::ALL.iter().map(|k| (*k, &self.slots[k.index()]))
    }

    pub fn map<U>(&self, f: impl Fn(CollectiveKind, &T) -> U) -> KindMap<U> {
        KindMap {
            slots: std::array::from_fn(|i| f(CollectiveKind::ALL[i], &self.slots[i])),
        }
    }
}

impl<T> Index<CollectiveKind> for KindMap<T> {
    type Output = T;
    fn index(&self, kind: CollectiveKind) -> &T {
        &self.slots[kind.index()]
    }
}

impl<T> IndexMut<CollectiveKind> for KindMap<T> {
    fn index_mut(&mut self, kind: CollectiveKind) -> &mut T {
        &mut self.slots[kind.index()]
    }
}
