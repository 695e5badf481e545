//! End-to-end cost model of prefill and decode for InstInfer and offloading baselines.
//!
//! Time is in seconds throughout this module.

mod baseline;
mod instinfer;
pub mod sweep;

pub use baseline::simulate_baseline;
pub use instinfer::{head_work, simulate_instinfer};

use serde::{Deserialize, Serialize};

use crate::engine::EngineConfig;
use crate::error::{Error, Result};
use crate::flash::FlashTiming;
use crate::layout::FlashGeometry;

pub const GIB: f64 = 1024.0 * 1024.0 * 1024.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    pub layers: usize,
    pub hidden: usize,
    pub heads: usize,
    pub params: f64,
    pub element_bytes: usize,
}

impl ModelSpec {
    pub fn opt_13b() -> Self {
        Self {
            name: "opt-13b".into(),
            layers: 40,
            hidden: 5120,
            heads: 40,
            params: 13e9,
            element_bytes: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.hidden == 0 || self.heads == 0 || self.element_bytes == 0 {
            return Err(Error::config("model dimensions must be >= 1"));
        }
        if self.hidden % self.heads != 0 {
            return Err(Error::config(format!(
                "hidden {} is not divisible by {} heads",
                self.hidden, self.heads
            )));
        }
        if !(self.params.is_finite() && self.params > 0.0) {
            return Err(Error::config("params must be > 0"));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.hidden / self.heads
    }

    pub fn kv_bytes_per_token(&self) -> f64 {
        (2 * self.element_bytes * self.hidden * self.layers) as f64
    }

    pub fn weight_bytes(&self) -> f64 {
        self.params * self.element_bytes as f64
    }

    /// Weights touched by one decoder layer: QKV, output projection and a 4× FFN.
    pub fn layer_weight_bytes(&self) -> f64 {
        12.0 * (self.hidden as f64).powi(2) * self.element_bytes as f64
    }
}

/// KV cache size: K and V for every layer, sequence and position.
pub fn kv_cache_bytes(model: &ModelSpec, batch: usize, seq: usize) -> f64 {
    model.kv_bytes_per_token() * batch as f64 * seq as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardwareSpec {
    pub gpu_peak_flops: f64,
    pub gpu_vram_bandwidth: f64,
    pub gpu_vram_bytes: f64,
    /// Activations and framework buffers kept out of the KV budget.
    pub gpu_workspace_bytes: f64,
    pub pcie_gpu_host: f64,
    pub host_memory_bytes: f64,
    pub pcie_csd: f64,
    pub csd_count: usize,
    /// Fixed device-side cost of one attention request (one sequence, one layer).
    pub csd_request_latency: f64,
    pub ssd_count: usize,
    pub ssd_bandwidth: f64,
    /// Host filesystem cost per I/O command of `host_fs_command_bytes`.
    pub host_fs_overhead: f64,
    pub host_fs_command_bytes: f64,
    /// Fraction of raw SSD bandwidth lost to the filesystem.
    pub host_fs_derate: f64,
}

impl Default for HardwareSpec {
    fn default() -> Self {
        Self {
            gpu_peak_flops: 154.8e12,
            gpu_vram_bandwidth: 768e9,
            gpu_vram_bytes: 48.0 * GIB,
            gpu_workspace_bytes: 6.0 * GIB,
            pcie_gpu_host: 32e9,
            host_memory_bytes: 48e9,
            pcie_csd: 7e9,
            csd_count: 1,
            csd_request_latency: 45e-6,
            ssd_count: 1,
            ssd_bandwidth: 7e9,
            host_fs_overhead: 100e-6,
            host_fs_command_bytes: 131072.0,
            host_fs_derate: 0.2,
        }
    }
}

impl HardwareSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("gpu_peak_flops", self.gpu_peak_flops),
            ("gpu_vram_bandwidth", self.gpu_vram_bandwidth),
            ("gpu_vram_bytes", self.gpu_vram_bytes),
            ("pcie_gpu_host", self.pcie_gpu_host),
            ("pcie_csd", self.pcie_csd),
            ("ssd_bandwidth", self.ssd_bandwidth),
            ("host_fs_command_bytes", self.host_fs_command_bytes),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("hardware {name} must be > 0")));
            }
        }
        let non_negative = [
            ("gpu_workspace_bytes", self.gpu_workspace_bytes),
            ("host_memory_bytes", self.host_memory_bytes),
            ("csd_request_latency", self.csd_request_latency),
            ("host_fs_overhead", self.host_fs_overhead),
        ];
        for (name, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(format!("hardware {name} must be >= 0")));
            }
        }
        if !(0.0..1.0).contains(&self.host_fs_derate) {
            return Err(Error::config("host_fs_derate must be in [0, 1)"));
        }
        if self.csd_count == 0 || self.ssd_count == 0 {
            return Err(Error::config("csd_count and ssd_count must be >= 1"));
        }
        Ok(())
    }

    /// Seconds to move `bytes` between SSDs and the GPU through the host filesystem.
    pub fn ssd_path_time(&self, bytes: f64) -> f64 {
        if bytes <= 0.0 {
            return 0.0;
        }
        let commands = (bytes / self.host_fs_command_bytes).ceil();
        let fs = commands * self.host_fs_overhead;
        let media = bytes / (self.ssd_count as f64 * self.ssd_bandwidth * (1.0 - self.host_fs_derate));
        let link = bytes / self.pcie_gpu_host;
        fs.max(media).max(link)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Workload {
    pub batch: usize,
    pub input_len: usize,
    pub output_len: usize,
}

impl Workload {
    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 || self.input_len == 0 {
            return Err(Error::config("batch and input_len must be >= 1"));
        }
        Ok(())
    }

    pub fn max_context(&self) -> usize {
        self.input_len + self.output_len
    }
}

/// How many page groups a sparse head touches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GroupLoad {
    /// A fraction `min(1, factor · ratio)` of groups on each axis.
    Factor { factor: f64 },
    /// Run SparF on seeded Gaussian tensors and count the groups it loads.
    Measured,
}

impl Default for GroupLoad {
    fn default() -> Self {
        GroupLoad::Factor { factor: 2.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sparsity {
    /// Kept fraction of embeddings and of tokens; 1 means dense attention.
    pub ratio: f64,
    #[serde(default)]
    pub group_load: GroupLoad,
}

impl Default for Sparsity {
    fn default() -> Self {
        Self::dense()
    }
}

impl Sparsity {
    pub fn dense() -> Self {
        Self {
            ratio: 1.0,
            group_load: GroupLoad::default(),
        }
    }

    pub fn ratio(ratio: f64) -> Self {
        Self {
            ratio,
            group_load: GroupLoad::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ratio > 0.0 && self.ratio <= 1.0) {
            return Err(Error::config(format!("sparsity ratio {} outside (0, 1]", self.ratio)));
        }
        if let GroupLoad::Factor { factor } = self.group_load {
            if !(factor.is_finite() && factor >= 1.0) {
                return Err(Error::config("group load factor must be >= 1"));
            }
        }
        Ok(())
    }

    pub fn is_dense(&self) -> bool {
        self.ratio >= 1.0
    }

    pub fn kept(&self, total: usize) -> usize {
        ((self.ratio * total as f64).ceil() as usize).clamp(1, total.max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SystemKind {
    /// Attention runs inside computational storage drives.
    Instinfer,
    /// KV cache in VRAM, then host memory, then SSD.
    HostOffload,
    /// KV cache in VRAM, else on SSD through the host filesystem.
    SsdOffload,
}

impl SystemKind {
    pub fn name(self) -> &'static str {
        match self {
            SystemKind::Instinfer => "instinfer",
            SystemKind::HostOffload => "host-offload",
            SystemKind::SsdOffload => "ssd-offload",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KvTier {
    Vram,
    Host,
    Ssd,
    Csd,
}

impl KvTier {
    pub fn name(self) -> &'static str {
        match self {
            KvTier::Vram => "vram",
            KvTier::Host => "host",
            KvTier::Ssd => "ssd",
            KvTier::Csd => "csd",
        }
    }
}

/// Everything one simulation needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub system: SystemKind,
    pub model: ModelSpec,
    pub hardware: HardwareSpec,
    pub workload: Workload,
    #[serde(default)]
    pub sparsity: Sparsity,
    #[serde(default)]
    pub flash_timing: FlashTiming,
    #[serde(default)]
    pub geometry: FlashGeometry,
    #[serde(default)]
    pub engine: EngineConfig,
    #[serde(default)]
    pub seed: u64,
}

impl Scenario {
    pub fn new(system: SystemKind, workload: Workload, sparsity: Sparsity) -> Self {
        Self {
            system,
            model: ModelSpec::opt_13b(),
            hardware: HardwareSpec::default(),
            workload,
            sparsity,
            flash_timing: FlashTiming::default(),
            geometry: FlashGeometry::default(),
            engine: EngineConfig::default(),
            seed: 0,
        }
    }

    pub fn with_csds(mut self, n: usize) -> Self {
        self.hardware.csd_count = n;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.hardware.validate()?;
        self.workload.validate()?;
        self.sparsity.validate()?;
        self.flash_timing.validate()?;
        self.geometry.validate()?;
        self.engine.validate()?;
        Ok(())
    }

    /// VRAM left for KV after weights and workspace; errors if the weights do not fit.
    pub fn vram_kv_budget(&self) -> Result<f64> {
        let used = self.model.weight_bytes() + self.hardware.gpu_workspace_bytes;
        if used > self.hardware.gpu_vram_bytes {
            return Err(Error::capacity(
                "gpu_vram_bytes",
                format!("weights and workspace need {used:.3e} B of {:.3e} B", self.hardware.gpu_vram_bytes),
            ));
        }
        Ok(self.hardware.gpu_vram_bytes - used)
    }
}

pub fn simulate(s: &Scenario) -> Result<ScenarioReport> {
    match s.system {
        SystemKind::Instinfer => simulate_instinfer(s),
        SystemKind::HostOffload | SystemKind::SsdOffload => simulate_baseline(s),
    }
}

/// Busy seconds per cost category over the whole decode phase.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Breakdown {
    pub weight_access: f64,
    pub kv_access: f64,
    pub compute: f64,
    pub transfer: f64,
}

impl Breakdown {
    pub fn total(&self) -> f64 {
        self.weight_access + self.kv_access + self.compute + self.transfer
    }

    /// Fractions of busy time in the order weight, KV, compute, transfer. All zero when idle.
    pub fn shares(&self) -> [f64; 4] {
        let t = self.total();
        if t <= 0.0 {
            return [0.0; 4];
        }
        [
            self.weight_access / t,
            self.kv_access / t,
            self.compute / t,
            self.transfer / t,
        ]
    }

    fn add(&mut self, o: &Breakdown) {
        self.weight_access += o.weight_access;
        self.kv_access += o.kv_access;
        self.compute += o.compute;
        self.transfer += o.transfer;
    }

    fn scaled(&self, k: f64) -> Breakdown {
        Breakdown {
            weight_access: self.weight_access * k,
            kv_access: self.kv_access * k,
            compute: self.compute * k,
            transfer: self.transfer * k,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub system: SystemKind,
    pub csd_count: usize,
    pub workload: Workload,
    pub ratio: f64,
    pub prefill_s: f64,
    pub decode_s: f64,
    pub breakdown: Breakdown,
    pub peak_vram_bytes: f64,
    pub kv_tier: KvTier,
}

impl ScenarioReport {
    pub fn total_s(&self) -> f64 {
        self.prefill_s + self.decode_s
    }

    pub fn decode_per_token_s(&self) -> f64 {
        if self.workload.output_len == 0 {
            0.0
        } else {
            self.decode_s / self.workload.output_len as f64
        }
    }

    /// Generated tokens per second over prefill and decode.
    pub fn throughput(&self) -> f64 {
        let tokens = (self.workload.batch * self.workload.output_len) as f64;
        if tokens == 0.0 || self.total_s() <= 0.0 {
            0.0
        } else {
            tokens / self.total_s()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Operator {
    QkvProj,
    OProj,
    Ffn,
    Logit,
    Attend,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Prefill,
    Decode,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct OperatorCost {
    pub flops: f64,
    pub bytes: f64,
    pub time: f64,
}

impl OperatorCost {
    pub fn memory_bound(&self, hw: &HardwareSpec) -> bool {
        self.bytes / hw.gpu_vram_bandwidth >= self.flops / hw.gpu_peak_flops
    }

    pub fn intensity(&self) -> f64 {
        if self.bytes > 0.0 {
            self.flops / self.bytes
        } else {
            0.0
        }
    }
}

/// Roofline cost of one decoder layer's operator on the GPU.
///
/// Decode processes one new token per sequence against `seq` cached positions; prefill
/// processes `seq` tokens per sequence.
pub fn operator_cost(op: Operator, phase: Phase, model: &ModelSpec, batch: usize, seq: usize, hw: &HardwareSpec) -> OperatorCost {
    if batch == 0 || seq == 0 {
        return OperatorCost::default();
    }
    let h = model.hidden as f64;
    let e = model.element_bytes as f64;
    let b = batch as f64;
    let s = seq as f64;
    let tokens = match phase {
        Phase::Prefill => b * s,
        Phase::Decode => b,
    };
    let (flops, bytes) = match op {
        Operator::QkvProj => (2.0 * tokens * 3.0 * h * h, e * (3.0 * h * h + 4.0 * tokens * h)),
        Operator::OProj => (2.0 * tokens * h * h, e * (h * h + 2.0 * tokens * h)),
        Operator::Ffn => (2.0 * tokens * 8.0 * h * h, e * (8.0 * h * h + 2.0 * tokens * h)),
        Operator::Logit | Operator::Attend => match phase {
            Phase::Decode => (2.0 * b * s * h, e * (b * s * h + 2.0 * b * h)),
            Phase::Prefill => (2.0 * b * s * s * h, e * (3.0 * b * s * h + b * s * s * model.heads as f64)),
        },
    };
    OperatorCost {
        flops,
        bytes,
        time: (flops / hw.gpu_peak_flops).max(bytes / hw.gpu_vram_bandwidth),
    }
}

/// GPU time of the projection and FFN operators of one layer, split into
/// (weight access, compute): memory-bound time counts as weight access.
fn linear_layer_cost(model: &ModelSpec, phase: Phase, batch: usize, seq: usize, hw: &HardwareSpec) -> Breakdown {
    let mut out = Breakdown::default();
    for op in [Operator::QkvProj, Operator::OProj, Operator::Ffn] {
        let c = operator_cost(op, phase, model, batch, seq, hw);
        if c.memory_bound(hw) {
            out.weight_access += c.time;
        } else {
            out.compute += c.time;
        }
    }
    out
}

/// Layer-wise pipelined prefill: layer i's KV push overlaps layer i+1's compute.
fn prefill_time(compute: &[f64], push: &[f64]) -> f64 {
    let mut t = 0.0;
    for i in 0..compute.len() {
        let prev_push = if i > 0 { push[i - 1] } else { 0.0 };
        t += compute[i].max(prev_push);
    }
    t + push.last().copied().unwrap_or(0.0)
}

/// GPU compute of one prefill layer, all operators.
fn prefill_layer_compute(model: &ModelSpec, w: &Workload, hw: &HardwareSpec) -> f64 {
    [
        Operator::QkvProj,
        Operator::OProj,
        Operator::Ffn,
        Operator::Logit,
        Operator::Attend,
    ]
    .iter()
    .map(|op| operator_cost(*op, Phase::Prefill, model, w.batch, w.input_len, hw).time)
    .sum()
}
