//! The linear convolutional network that embodies the inverse degradation
//! kernel: construction, forward evaluation, parameter counting, checkpoint
//! i/o, and collapse to a single effective kernel.
//!
//! The network is a chain of same-padded 3x3 convolutions with no bias and no
//! activation, so the whole model is one linear, translation-equivariant
//! operator. Its impulse response (the "effective kernel") therefore fully
//! describes it away from boundaries; for the canonical five-layer model the
//! receptive field is 11x11.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::format::{ByteReader, ByteWriter, FormatError};
use crate::gallery::delta_target;
use crate::tensor::{conv2d_same, ChannelStack, ConvLayerWeights, Grid2D, ShapeError};

/// Channel plan of the canonical model: five layers, width 32.
pub const CANONICAL_PLAN: [(usize, usize); 5] = [(1, 32), (32, 32), (32, 32), (32, 32), (32, 1)];

/// Parameter count of the canonical plan (1*32*9 + 3*32*32*9 + 32*1*9).
pub const CANONICAL_PARAM_COUNT: usize = 28_224;

/// Training provenance carried inside checkpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Provenance {
    pub gallery_seed: u64,
    pub epochs_completed: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LcnnModel {
    layers: Vec<ConvLayerWeights>,
    provenance: Provenance,
}

/// The single kernel a linear network collapses to: its impulse response.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveKernel {
    pub grid: Grid2D,
}

impl EffectiveKernel {
    pub fn support(&self) -> usize {
        self.grid.height()
    }
}

impl LcnnModel {
    /// Canonical five-layer model with seeded Gaussian initialization,
    /// per-layer standard deviation `1/sqrt(in_channels * 9)`.
    pub fn init(seed: u64) -> Self {
        Self::init_with_plan(&CANONICAL_PLAN, seed)
    }

    /// Arbitrary channel plan (used by tests and experiments); the plan must
    /// chain and map one channel to one channel end to end.
    pub fn init_with_plan(plan: &[(usize, usize)], seed: u64) -> Self {
        validate_plan(plan).expect("invalid channel plan");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = plan
            .iter()
            .map(|&(in_c, out_c)| {
                let std = 1.0 / ((in_c * 9) as f64).sqrt();
                let dist = Normal::new(0.0, std).unwrap();
                let values = (0..out_c * in_c * 9)
                    .map(|_| dist.sample(&mut rng))
                    .collect();
                ConvLayerWeights::from_values(out_c, in_c, values).unwrap()
            })
            .collect();
        LcnnModel {
            layers,
            provenance: Provenance::default(),
        }
    }

    pub fn from_layers(layers: Vec<ConvLayerWeights>) -> Result<Self, ShapeError> {
        let plan: Vec<(usize, usize)> = layers
            .iter()
            .map(|l| (l.in_channels(), l.out_channels()))
            .collect();
        validate_plan(&plan)?;
        Ok(LcnnModel {
            layers,
            provenance: Provenance::default(),
        })
    }

    pub fn layers(&self) -> &[ConvLayerWeights] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [ConvLayerWeights] {
        &mut self.layers
    }

    pub fn plan(&self) -> Vec<(usize, usize)> {
        self.layers
            .iter()
            .map(|l| (l.in_channels(), l.out_channels()))
            .collect()
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn set_provenance(&mut self, p: Provenance) {
        self.provenance = p;
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.len()).sum()
    }

    /// Half-width of the impulse response: one pixel per layer.
    pub fn receptive_radius(&self) -> usize {
        self.layers.len()
    }

    /// Side length of the effective kernel, `1 + 2 * layers`.
    pub fn effective_support(&self) -> usize {
        1 + 2 * self.layers.len()
    }

    /// Chains the same-padded convolutions over a single-channel input.
    pub fn forward(&self, input: &Grid2D) -> Grid2D {
        let mut stack = ChannelStack::from_grid(input);
        for layer in &self.layers {
            stack = conv2d_same(&stack, layer).expect("validated channel plan");
        }
        stack.into_grid()
    }

    /// The network's impulse response: forward-evaluate a centered impulse on
    /// a field wide enough that padding never touches the response, then crop
    /// to the receptive field.
    pub fn effective_kernel(&self) -> EffectiveKernel {
        let support = self.effective_support();
        let field = 2 * support - 1;
        let impulse = delta_target(field).expect("odd field size");
        let response = self.forward(&impulse);
        EffectiveKernel {
            grid: response.central_crop(support, support),
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), FormatError> {
        let mut w = ByteWriter::new(BufWriter::new(File::create(path)?));
        w.write_bytes(MODEL_MAGIC)?;
        w.write_u32(MODEL_VERSION)?;
        w.write_u32(self.layers.len() as u32)?;
        for l in &self.layers {
            w.write_u32(l.in_channels() as u32)?;
            w.write_u32(l.out_channels() as u32)?;
            w.write_u32(3)?;
            w.write_u32(3)?;
        }
        w.write_u64(self.provenance.gallery_seed)?;
        w.write_u32(self.provenance.epochs_completed)?;
        for l in &self.layers {
            for &v in l.values() {
                w.write_f64(v)?;
            }
        }
        w.finish()
    }

    pub fn load(path: &Path) -> Result<Self, FormatError> {
        let mut r = ByteReader::new(BufReader::new(File::open(path)?));
        r.expect_magic(MODEL_MAGIC, "model checkpoint")?;
        r.expect_version(MODEL_VERSION)?;
        let n_layers = r.read_u32("layer count")? as usize;
        if n_layers == 0 {
            return Err(r.invalid("zero layers"));
        }
        let mut plan = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            let in_c = r.read_u32("in channels")? as usize;
            let out_c = r.read_u32("out channels")? as usize;
            let kh = r.read_u32("kernel height")?;
            let kw = r.read_u32("kernel width")?;
            if kh != 3 || kw != 3 {
                return Err(r.invalid(format!("unsupported kernel size {kh}x{kw}")));
            }
            plan.push((in_c, out_c));
        }
        validate_plan(&plan).map_err(|e| r.invalid(e.to_string()))?;
        let provenance = Provenance {
            gallery_seed: r.read_u64("gallery seed")?,
            epochs_completed: r.read_u32("epochs completed")?,
        };
        let mut layers = Vec::with_capacity(n_layers);
        for &(in_c, out_c) in &plan {
            let values = r.read_f64_vec(out_c * in_c * 9, "layer weights")?;
            let layer = ConvLayerWeights::from_values(out_c, in_c, values)
                .map_err(|e| r.invalid(e.to_string()))?;
            layers.push(layer);
        }
        r.expect_eof()?;
        Ok(LcnnModel { layers, provenance })
    }

    /// Load and verify the checkpoint matches an expected channel plan.
    pub fn load_expecting(path: &Path, plan: &[(usize, usize)]) -> Result<Self, FormatError> {
        let model = Self::load(path)?;
        if model.plan() != plan {
            return Err(FormatError::ArchMismatch {
                expected: plan_string(plan),
                found: plan_string(&model.plan()),
            });
        }
        Ok(model)
    }
}

fn plan_string(plan: &[(usize, usize)]) -> String {
    let mut s = String::new();
    for (i, (in_c, out_c)) in plan.iter().enumerate() {
        if i == 0 {
            s.push_str(&in_c.to_string());
        }
        s.push('-');
        s.push_str(&out_c.to_string());
        let _ = in_c;
    }
    s
}

fn validate_plan(plan: &[(usize, usize)]) -> Result<(), ShapeError> {
    if plan.is_empty() {
        return Err(ShapeError::Mismatch("empty layer plan".into()));
    }
    if plan[0].0 != 1 || plan[plan.len() - 1].1 != 1 {
        return Err(ShapeError::Mismatch(
            "model must map 1 channel to 1 channel".into(),
        ));
    }
    for w in plan.windows(2) {
        if w[0].1 != w[1].0 {
            return Err(ShapeError::ChannelMismatch {
                input: w[0].1,
                expected: w[1].0,
            });
        }
    }
    Ok(())
}

const MODEL_MAGIC: &[u8; 8] = b"LCNNCKPT";
const MODEL_VERSION: u32 = 1;

/// A model whose every layer routes channel 0 through a centered one-hot tap;
/// its effective kernel is the discrete impulse.
pub fn identity_model(plan: &[(usize, usize)]) -> LcnnModel {
    let layers = plan
        .iter()
        .map(|&(in_c, out_c)| {
            let mut l = ConvLayerWeights::zeros(out_c, in_c);
            l.set(0, 0, 1, 1, 1.0);
            l
        })
        .collect();
    LcnnModel::from_layers(layers).expect("identity plan")
}
