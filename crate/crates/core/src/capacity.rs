//! Capacity benchmarking, tier classification and architecture assignment.
//!
//! A hospital's compute capacity is measured as training throughput
//! (samples per second) on a small fixed workload and bucketed into one of
//! three tiers. The tier then fixes the model family the hospital is allowed
//! to submit.

use std::fmt;
use std::hint::black_box;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::identity::BenchmarkReport;

/// Throughput below this is `Weak`.
pub const MEDIUM_THRESHOLD: f64 = 100.0;
/// Throughput at or above this is `Strong`.
pub const STRONG_THRESHOLD: f64 = 300.0;

pub const DEFAULT_BENCHMARK_STEPS: u32 = 50;
pub const DEFAULT_BENCHMARK_BATCH: u32 = 32;
pub const DEFAULT_WARMUP_STEPS: u32 = 5;

#[derive(Debug, Error, PartialEq)]
pub enum CapacityError {
    #[error("benchmark requires at least one step and a batch of at least one sample")]
    EmptyWorkload,
    #[error("benchmark elapsed time was zero; re-run with more steps")]
    ZeroElapsed,
    #[error("injected throughput must be finite and non-negative, got {0}")]
    InvalidThroughput(f64),
}

/// Compute tier. Ordered `Weak < Medium < Strong`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CapacityClass {
    Weak,
    Medium,
    Strong,
}

impl CapacityClass {
    pub const ALL: [CapacityClass; 3] = [Self::Weak, Self::Medium, Self::Strong];

    /// Single-byte wire code used by benchmark packing.
    pub fn code(self) -> u8 {
        match self {
            Self::Weak => 0,
            Self::Medium => 1,
            Self::Strong => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Self::Weak),
            1 => Some(Self::Medium),
            2 => Some(Self::Strong),
            _ => None,
        }
    }
}

impl fmt::Display for CapacityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Weak => "weak",
            Self::Medium => "medium",
            Self::Strong => "strong",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ArchitectureFamily {
    MobileNetV3Small,
    EfficientNetB0,
    ResNet50,
}

impl ArchitectureFamily {
    /// Parameter count of the reference ImageNet configuration.
    ///
    /// Only the ResNet-50 figure feeds into cost accounting; the other two
    /// are informational.
    pub fn param_count(self) -> u64 {
        match self {
            Self::MobileNetV3Small => 2_542_856,
            Self::EfficientNetB0 => 5_288_548,
            Self::ResNet50 => 25_557_032,
        }
    }
}

impl fmt::Display for ArchitectureFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::MobileNetV3Small => "MobileNetV3Small",
            Self::EfficientNetB0 => "EfficientNetB0",
            Self::ResNet50 => "ResNet50",
        })
    }
}

/// Model family plus its parameter count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ArchitectureId {
    pub family: ArchitectureFamily,
    pub param_count: u64,
}

impl ArchitectureId {
    pub fn of(family: ArchitectureFamily) -> Self {
        Self {
            family,
            param_count: family.param_count(),
        }
    }
}

impl fmt::Display for ArchitectureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.family.fmt(f)
    }
}

/// How throughput is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum BenchmarkWorkload {
    /// Time the synthetic kernel on this host.
    Measured { warmup_steps: u32 },
    /// Use a fixed throughput. Makes registration reproducible.
    Injected { throughput: f64 },
}

impl BenchmarkWorkload {
    pub fn measured() -> Self {
        Self::Measured {
            warmup_steps: DEFAULT_WARMUP_STEPS,
        }
    }

    pub fn injected(throughput: f64) -> Self {
        Self::Injected { throughput }
    }
}

/// Applies the tier thresholds: `< 100` weak, `[100, 300)` medium, `>= 300` strong.
///
/// NaN and negative inputs fall into `Weak`.
pub fn classify_capacity(throughput: f64) -> CapacityClass {
    if throughput >= STRONG_THRESHOLD {
        CapacityClass::Strong
    } else if throughput >= MEDIUM_THRESHOLD {
        CapacityClass::Medium
    } else {
        CapacityClass::Weak
    }
}

pub fn assign_architecture(capacity: CapacityClass) -> ArchitectureId {
    ArchitectureId::of(match capacity {
        CapacityClass::Weak => ArchitectureFamily::MobileNetV3Small,
        CapacityClass::Medium => ArchitectureFamily::EfficientNetB0,
        CapacityClass::Strong => ArchitectureFamily::ResNet50,
    })
}

/// Runs (or injects) the capacity benchmark.
///
/// The report's `declared_capacity` is the tier implied by the measured
/// throughput; a dishonest participant has to overwrite it before signing.
pub fn run_benchmark(
    workload: BenchmarkWorkload,
    steps: u32,
    batch_size: u32,
) -> Result<BenchmarkReport, CapacityError> {
    if steps == 0 || batch_size == 0 {
        return Err(CapacityError::EmptyWorkload);
    }
    let throughput = match workload {
        BenchmarkWorkload::Injected { throughput } => {
            if !throughput.is_finite() || throughput < 0.0 {
                return Err(CapacityError::InvalidThroughput(throughput));
            }
            throughput
        }
        BenchmarkWorkload::Measured { warmup_steps } => {
            measure_throughput(warmup_steps, steps, batch_size)?
        }
    };
    Ok(BenchmarkReport {
        throughput,
        steps,
        batch_size,
        declared_capacity: classify_capacity(throughput),
    })
}

fn measure_throughput(warmup: u32, steps: u32, batch_size: u32) -> Result<f64, CapacityError> {
    let mut net = DummyNet::new();
    for _ in 0..warmup {
        net.train_step(batch_size);
    }
    let start = Instant::now();
    for _ in 0..steps {
        net.train_step(batch_size);
    }
    let elapsed = start.elapsed().as_secs_f64();
    black_box(&net);
    if elapsed <= 0.0 {
        return Err(CapacityError::ZeroElapsed);
    }
    Ok(f64::from(steps) * f64::from(batch_size) / elapsed)
}

const IMG: usize = 32;
const CHANNELS_IN: usize = 3;
const CHANNELS_OUT: usize = 8;
const KERNEL: usize = 3;
const CLASSES: usize = 10;
const FEATURES: usize = CHANNELS_OUT * (IMG - KERNEL + 1) * (IMG - KERNEL + 1);

/// One 3x3 convolution, one linear projection and a plain SGD update on the
/// projection. Inputs are a deterministic pseudo-image so repeated runs do
/// identical work.
struct DummyNet {
    conv: Vec<f32>,
    linear: Vec<f32>,
    input: Vec<f32>,
    features: Vec<f32>,
    logits: [f32; CLASSES],
}

impl DummyNet {
    fn new() -> Self {
        let fill = |n: usize, k: u32| -> Vec<f32> {
            (0..n)
                .map(|i| ((i as u32).wrapping_mul(2_654_435_761).wrapping_add(k) % 1000) as f32 / 1000.0 - 0.5)
                .collect()
        };
        Self {
            conv: fill(CHANNELS_OUT * CHANNELS_IN * KERNEL * KERNEL, 1),
            linear: fill(CLASSES * FEATURES, 2).iter().map(|w| w * 0.01).collect(),
            input: fill(CHANNELS_IN * IMG * IMG, 3),
            features: vec![0.0; FEATURES],
            logits: [0.0; CLASSES],
        }
    }

    fn train_step(&mut self, batch_size: u32) {
        let lr = 1e-4f32;
        for sample in 0..batch_size as usize {
            let label = sample % CLASSES;
            self.forward();
            // softmax cross-entropy gradient w.r.t. logits
            let max = self.logits.iter().cloned().fold(f32::MIN, f32::max);
            let mut grad = [0f32; CLASSES];
            let mut z = 0.0;
            for (g, &l) in grad.iter_mut().zip(&self.logits) {
                *g = (l - max).exp();
                z += *g;
            }
            for (c, g) in grad.iter_mut().enumerate() {
                *g /= z;
                if c == label {
                    *g -= 1.0;
                }
            }
            for (c, g) in grad.iter().enumerate() {
                let row = &mut self.linear[c * FEATURES..(c + 1) * FEATURES];
                for (w, f) in row.iter_mut().zip(&self.features) {
                    *w -= lr * g * f;
                }
            }
        }
    }

    fn forward(&mut self) {
        let out = IMG - KERNEL + 1;
        for oc in 0..CHANNELS_OUT {
            for y in 0..out {
                for x in 0..out {
                    let mut acc = 0f32;
                    for ic in 0..CHANNELS_IN {
                        for ky in 0..KERNEL {
                            for kx in 0..KERNEL {
                                let w = self.conv[((oc * CHANNELS_IN + ic) * KERNEL + ky) * KERNEL + kx];
                                let v = self.input[(ic * IMG + y + ky) * IMG + x + kx];
                                acc += w * v;
                            }
                        }
                    }
                    self.features[(oc * out + y) * out + x] = acc.max(0.0);
                }
            }
        }
        for (c, logit) in self.logits.iter_mut().enumerate() {
            let row = &self.linear[c * FEATURES..(c + 1) * FEATURES];
            *logit = row.iter().zip(&self.features).map(|(w, f)| w * f).sum();
        }
    }
}
