//! Training: crossbar-abstracted forward, floating-point backward, SGD with
//! momentum on full-precision shadow weights, periodic tile refresh.

use ndarray::{s, Array1, Array2};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use xbar_core::energy::EnergyLedger;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::forward::{EvalMode, MappedBackend};
use crate::mapping::MappedNetwork;
use crate::network::{
    backward, forward_with, softmax_cross_entropy, ForwardTrace, FpBackend, Network,
};

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub lr: f32,
    pub momentum: f32,
    pub batch_size: usize,
    /// Steps between tile re-programming from the shadow weights.
    pub refresh_interval: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.01,
            momentum: 0.9,
            batch_size: 50,
            refresh_interval: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(Error::Spec(format!("learning rate {} invalid", self.lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Spec(format!("momentum {} invalid", self.momentum)));
        }
        if self.batch_size == 0 {
            return Err(Error::Spec("batch_size must be >= 1".into()));
        }
        if self.refresh_interval == 0 {
            return Err(Error::Spec("refresh_interval must be >= 1".into()));
        }
        Ok(())
    }
}

/// Optimizer state: one velocity buffer per mappable layer, plus the step
/// counter driving tile refresh.
pub struct TrainState {
    pub cfg: TrainConfig,
    pub velocity: Vec<Option<(Array2<f32>, Array1<f32>)>>,
    pub step: usize,
}

impl TrainState {
    pub fn new(net: &Network, cfg: TrainConfig) -> Result<TrainState> {
        cfg.validate()?;
        let velocity = net
            .params
            .iter()
            .map(|p| {
                p.as_ref()
                    .map(|p| (Array2::zeros(p.w.dim()), Array1::zeros(p.b.len())))
            })
            .collect();
        Ok(TrainState {
            cfg,
            velocity,
            step: 0,
        })
    }
}

/// One SGD step. With `mapped` present the forward pass runs on the tiles
/// (straight-through backward against the shadow weights) and the tiles are
/// re-programmed from the updated weights every `refresh_interval` steps;
/// without it this is plain floating-point training.
pub fn train_step(
    state: &mut TrainState,
    net: &mut Network,
    mut mapped: Option<&mut MappedNetwork>,
    images: &ndarray::Array4<f32>,
    labels: &[u8],
) -> Result<f32> {
    let mut ledger = EnergyLedger::default();
    let mut trace = ForwardTrace { caches: Vec::new() };

    let logits = match mapped.as_deref() {
        Some(m) => {
            let backend = MappedBackend {
                mapped: m,
                mode: EvalMode::NonIdeal,
            };
            forward_with(net, &backend, images, &mut ledger, Some(&mut trace))?
        }
        None => {
            let backend = FpBackend { net };
            forward_with(net, &backend, images, &mut ledger, Some(&mut trace))?
        }
    };

    let (loss, dlogits) = softmax_cross_entropy(&logits, labels)?;
    if !loss.is_finite() {
        return Err(Error::Diverged(format!("loss became {loss}")));
    }

    let grads = backward(net, &trace, &dlogits)?;
    for idx in 0..net.spec.layers.len() {
        if let (Some((dw, db)), Some((vw, vb)), Some(p)) = (
            &grads.per_layer[idx],
            &mut state.velocity[idx],
            &mut net.params[idx],
        ) {
            vw.zip_mut_with(dw, |v, g| *v = state.cfg.momentum * *v - state.cfg.lr * g);
            vb.zip_mut_with(db, |v, g| *v = state.cfg.momentum * *v - state.cfg.lr * g);
            p.w += &*vw;
            p.b += &*vb;
        }
    }

    state.step += 1;
    if let Some(m) = mapped.as_deref_mut() {
        if state.step % state.cfg.refresh_interval == 0 {
            m.remap_from(net)?;
        }
    }
    Ok(loss)
}

/// One pass over the dataset with a seeded shuffle. Returns the mean batch
/// loss.
pub fn train_epoch(
    state: &mut TrainState,
    net: &mut Network,
    mut mapped: Option<&mut MappedNetwork>,
    data: &Dataset,
    shuffle_seed: u64,
) -> Result<f32> {
    let n = data.len();
    if n == 0 {
        return Err(Error::Shape("empty training set".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(shuffle_seed);
    // Fisher-Yates
    for i in (1..n).rev() {
        let j = rand::Rng::gen_range(&mut rng, 0..=i);
        order.swap(i, j);
    }

    let b = state.cfg.batch_size;
    let mut total = 0.0f64;
    let mut batches = 0usize;
    let mut start = 0;
    while start < n {
        let stop = (start + b).min(n);
        let idx = &order[start..stop];
        let mut images = ndarray::Array4::zeros((
            idx.len(),
            data.images.dim().1,
            data.images.dim().2,
            data.images.dim().3,
        ));
        let mut labels = Vec::with_capacity(idx.len());
        for (k, &i) in idx.iter().enumerate() {
            images
                .slice_mut(s![k, .., .., ..])
                .assign(&data.images.slice(s![i, .., .., ..]));
            labels.push(data.labels[i]);
        }
        total += train_step(state, net, mapped.as_deref_mut(), &images, &labels)? as f64;
        batches += 1;
        start = stop;
    }
    Ok((total / batches as f64) as f32)
}
