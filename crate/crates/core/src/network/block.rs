//! One locally trained unit: main transform `f` followed by the auxiliary
//! projection `φ`. The structural loss is computed between the block input
//! and `Z = φ(f(X))`; gradients reach every parameter of `f` and `φ` and stop
//! at the block boundary.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::activation::Activation;
use super::feature_map::FeatureMap;
use super::layers::{avg_pool2, global_avg_pool, global_avg_pool_backward, max_pool2, max_pool2_backward, Conv2d, Dense};
use crate::error::{Error, Result};
use crate::losses::{structural_loss_grad, LossBundle, LossTerms};
use crate::numerics::Matrix;

/// Convolutional main transform: `pool(act(conv3x3(X)))`, optionally plus a
/// detached `avg_pool2(X)` skip.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvMain {
    pub conv: Conv2d,
    pub activation: Activation,
    pub pool: bool,
    pub skip: bool,
}

/// Dense main transform. The activation follows every layer but the last,
/// and the last as well when `activate_output` is set.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMain {
    pub layers: Vec<Dense>,
    pub activation: Activation,
    pub activate_output: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub enum MainBlock {
    Conv(ConvMain),
    Dense(DenseMain),
}

/// `φ` for convolutional features: pointwise convolutions, global average
/// pooling, then a fully connected projection.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvAux {
    pub convs: Vec<Conv2d>,
    pub fc: Dense,
}

#[derive(Clone, Debug, PartialEq)]
pub enum AuxBlock {
    /// `Z = flatten(Y')`.
    Identity,
    Conv(ConvAux),
    Dense(Dense),
}

/// Shape options for a convolutional `φ`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuxSpec {
    pub enabled: bool,
    /// Number of 1x1 convolutions, 0..=2. The first halves the channels.
    pub depth: usize,
    pub d_proj: usize,
}

impl Default for AuxSpec {
    fn default() -> Self {
        Self { enabled: true, depth: 1, d_proj: 256 }
    }
}

/// Gradients for every parameter of a block, in [`SphereBlock::params`]
/// order.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockGrads {
    pub names: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl BlockGrads {
    pub fn is_finite(&self) -> bool {
        self.values.iter().flatten().all(|v| v.is_finite())
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockOutput {
    pub yp: FeatureMap,
    pub z: Matrix,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SphereBlock {
    pub main: MainBlock,
    pub aux: AuxBlock,
}

/// Max-pool argmax indices with the pre-pool shape.
type PoolArgmax = (Vec<usize>, (usize, usize, usize, usize));

struct ConvCache {
    pre: FeatureMap,
    pool_arg: Option<PoolArgmax>,
}

struct DenseCache {
    /// Input to each layer, then the final output.
    inputs: Vec<Matrix>,
    pre: Vec<Matrix>,
}

enum MainCache {
    Conv(ConvCache),
    Dense(DenseCache),
}

enum AuxCache {
    Identity,
    Conv { conv_inputs: Vec<FeatureMap>, pooled: Matrix, last_hw: (usize, usize, usize) },
    Dense { input: Matrix },
}

impl SphereBlock {
    /// 3x3 convolutional block with a convolutional `φ` (or none).
    pub fn conv<R: Rng + ?Sized>(
        in_ch: usize,
        out_ch: usize,
        activation: Activation,
        skip: bool,
        aux: AuxSpec,
        rng: &mut R,
    ) -> Result<Self> {
        if in_ch == 0 || out_ch == 0 {
            return Err(Error::InvalidArgument("channel counts must be positive".into()));
        }
        let main = MainBlock::Conv(ConvMain { conv: Conv2d::new(in_ch, out_ch, 3, rng), activation, pool: true, skip });
        let aux = if aux.enabled {
            if aux.depth > 2 || aux.d_proj == 0 {
                return Err(Error::InvalidArgument(format!("unsupported aux shape depth={} d_proj={}", aux.depth, aux.d_proj)));
            }
            let mut convs = Vec::with_capacity(aux.depth);
            let mut ch = out_ch;
            for _ in 0..aux.depth {
                let half = (out_ch / 2).max(1);
                convs.push(Conv2d::new(ch, half, 1, rng));
                ch = half;
            }
            AuxBlock::Conv(ConvAux { convs, fc: Dense::new(ch, aux.d_proj, true, rng) })
        } else {
            AuxBlock::Identity
        };
        Ok(Self { main, aux })
    }

    /// Linear map `Y = XW`, no bias, `Z = Y`.
    pub fn linear<R: Rng + ?Sized>(n_in: usize, n_out: usize, rng: &mut R) -> Self {
        Self {
            main: MainBlock::Dense(DenseMain {
                layers: vec![Dense::new(n_in, n_out, false, rng)],
                activation: Activation::Identity,
                activate_output: false,
            }),
            aux: AuxBlock::Identity,
        }
    }

    /// `depth`-layer perceptron `n_in → hidden → … → n_out`, `Z = Y`.
    pub fn mlp<R: Rng + ?Sized>(
        n_in: usize,
        hidden: usize,
        n_out: usize,
        depth: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if depth == 0 {
            return Err(Error::InvalidArgument("mlp needs at least one layer".into()));
        }
        let mut layers = Vec::with_capacity(depth);
        for l in 0..depth {
            let i = if l == 0 { n_in } else { hidden };
            let o = if l + 1 == depth { n_out } else { hidden };
            layers.push(Dense::new(i, o, true, rng));
        }
        Ok(Self { main: MainBlock::Dense(DenseMain { layers, activation, activate_output: false }), aux: AuxBlock::Identity })
    }

    /// Parameter tensors with stable names, `f` first then `φ`.
    pub fn params(&self) -> Vec<(String, &[f64])> {
        let mut out: Vec<(String, &[f64])> = Vec::new();
        match &self.main {
            MainBlock::Conv(m) => {
                out.push(("f.conv.weight".into(), &m.conv.weight));
                out.push(("f.conv.bias".into(), &m.conv.bias));
            }
            MainBlock::Dense(m) => {
                for (i, l) in m.layers.iter().enumerate() {
                    out.push((format!("f.dense{i}.weight"), &l.weight));
                    if let Some(b) = &l.bias {
                        out.push((format!("f.dense{i}.bias"), b));
                    }
                }
            }
        }
        match &self.aux {
            AuxBlock::Identity => {}
            AuxBlock::Conv(a) => {
                for (i, c) in a.convs.iter().enumerate() {
                    out.push((format!("phi.conv{i}.weight"), &c.weight));
                    out.push((format!("phi.conv{i}.bias"), &c.bias));
                }
                out.push(("phi.fc.weight".into(), &a.fc.weight));
                out.push(("phi.fc.bias".into(), a.fc.bias.as_deref().unwrap_or(&[])));
            }
            AuxBlock::Dense(d) => {
                out.push(("phi.fc.weight".into(), &d.weight));
                if let Some(b) = &d.bias {
                    out.push(("phi.fc.bias".into(), b));
                }
            }
        }
        out
    }

    /// Mutable views in [`params`](Self::params) order.
    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        match &mut self.main {
            MainBlock::Conv(m) => {
                out.push(&mut m.conv.weight);
                out.push(&mut m.conv.bias);
            }
            MainBlock::Dense(m) => {
                for l in &mut m.layers {
                    out.push(&mut l.weight);
                    if let Some(b) = &mut l.bias {
                        out.push(b);
                    }
                }
            }
        }
        match &mut self.aux {
            AuxBlock::Identity => {}
            AuxBlock::Conv(a) => {
                for c in &mut a.convs {
                    out.push(&mut c.weight);
                    out.push(&mut c.bias);
                }
                out.push(&mut a.fc.weight);
                out.push(a.fc.bias.as_deref_mut().unwrap_or(&mut []));
            }
            AuxBlock::Dense(d) => {
                out.push(&mut d.weight);
                if let Some(b) = &mut d.bias {
                    out.push(b);
                }
            }
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|(_, p)| p.len()).sum()
    }

    /// `(Y', Z)` for a batch.
    pub fn forward(&self, x: &FeatureMap) -> Result<BlockOutput> {
        let (yp, _) = self.main_forward(x)?;
        let (z, _) = self.aux_forward(&yp)?;
        Ok(BlockOutput { yp, z })
    }

    /// Main-path output only; what the next block consumes.
    pub fn forward_main(&self, x: &FeatureMap) -> Result<FeatureMap> {
        Ok(self.main_forward(x)?.0)
    }

    /// Block objective on `(Z, flatten(X))` and its gradient for every
    /// parameter of `f` and `φ`. No gradient with respect to `X` is formed.
    pub fn backward(&self, x: &FeatureMap, terms: &LossTerms) -> Result<(BlockGrads, LossBundle)> {
        if x.batch() < 2 {
            return Err(Error::InvalidArgument("structural loss needs a batch of at least 2 samples".into()));
        }
        let (yp, main_cache) = self.main_forward(x)?;
        let (z, aux_cache) = self.aux_forward(&yp)?;
        let (bundle, dz) = structural_loss_grad(&z, &x.flatten(), terms)?;

        let mut grads: Vec<Vec<f64>> = Vec::new();
        let dyp = self.aux_backward(&yp, &aux_cache, &dz, &mut grads)?;
        let mut main_grads = self.main_backward(x, &main_cache, dyp)?;
        main_grads.append(&mut grads);
        let names = self.params().into_iter().map(|(n, _)| n).collect();
        Ok((BlockGrads { names, values: main_grads }, bundle))
    }

    fn main_forward(&self, x: &FeatureMap) -> Result<(FeatureMap, MainCache)> {
        match &self.main {
            MainBlock::Conv(m) => {
                let pre = m.conv.forward(x)?;
                let mut act = pre.clone();
                for v in act.data_mut() {
                    *v = m.activation.apply(*v);
                }
                let (mut out, pool_arg) = if m.pool {
                    let shape = act.shape();
                    let (p, arg) = max_pool2(&act);
                    (p, Some((arg, shape)))
                } else {
                    (act, None)
                };
                if m.skip {
                    add_skip(&mut out, x)?;
                }
                Ok((out, MainCache::Conv(ConvCache { pre, pool_arg })))
            }
            MainBlock::Dense(m) => {
                let mut h = x.flatten();
                let mut inputs = Vec::with_capacity(m.layers.len());
                let mut pre = Vec::with_capacity(m.layers.len());
                for (i, layer) in m.layers.iter().enumerate() {
                    let a = layer.forward(&h)?;
                    let last = i + 1 == m.layers.len();
                    let next = if !last || m.activate_output { a.map(|v| m.activation.apply(v)) } else { a.clone() };
                    inputs.push(std::mem::replace(&mut h, next));
                    pre.push(a);
                }
                let cols = h.cols();
                let out = FeatureMap::from_matrix(&h, cols, 1, 1)?;
                Ok((out, MainCache::Dense(DenseCache { inputs, pre })))
            }
        }
    }

    fn main_backward(&self, x: &FeatureMap, cache: &MainCache, dyp: FeatureMap) -> Result<Vec<Vec<f64>>> {
        match (&self.main, cache) {
            (MainBlock::Conv(m), MainCache::Conv(c)) => {
                // The skip term is detached: its gradient is simply dropped.
                let dact = match &c.pool_arg {
                    Some((arg, shape)) => max_pool2_backward(&dyp, arg, *shape),
                    None => dyp,
                };
                let mut dpre = dact;
                for (g, &p) in dpre.data_mut().iter_mut().zip(c.pre.data()) {
                    *g *= m.activation.derivative(p);
                }
                let (dw, db, _) = m.conv.backward(x, &dpre, false)?;
                Ok(vec![dw, db])
            }
            (MainBlock::Dense(m), MainCache::Dense(c)) => {
                let mut g = dyp.into_matrix();
                let mut per_layer: Vec<Vec<Vec<f64>>> = Vec::with_capacity(m.layers.len());
                for i in (0..m.layers.len()).rev() {
                    let last = i + 1 == m.layers.len();
                    if !last || m.activate_output {
                        for (gv, &p) in g.data_mut().iter_mut().zip(c.pre[i].data()) {
                            *gv *= m.activation.derivative(p);
                        }
                    }
                    let (dw, db, dx) = m.layers[i].backward(&c.inputs[i], &g, i > 0)?;
                    let mut entry = vec![dw];
                    if m.layers[i].bias.is_some() {
                        entry.push(db);
                    }
                    per_layer.push(entry);
                    if let Some(dx) = dx {
                        g = dx;
                    }
                }
                Ok(per_layer.into_iter().rev().flatten().collect())
            }
            _ => unreachable!("cache kind always matches the block kind"),
        }
    }

    fn aux_forward(&self, yp: &FeatureMap) -> Result<(Matrix, AuxCache)> {
        match &self.aux {
            AuxBlock::Identity => Ok((yp.flatten(), AuxCache::Identity)),
            AuxBlock::Dense(d) => {
                let input = yp.flatten();
                Ok((d.forward(&input)?, AuxCache::Dense { input }))
            }
            AuxBlock::Conv(a) => {
                let mut t = yp.clone();
                let mut conv_inputs = Vec::with_capacity(a.convs.len());
                for c in &a.convs {
                    let next = c.forward(&t)?;
                    conv_inputs.push(std::mem::replace(&mut t, next));
                }
                let pooled = global_avg_pool(&t);
                let z = a.fc.forward(&pooled)?;
                let last_hw = (t.channels(), t.height(), t.width());
                Ok((z, AuxCache::Conv { conv_inputs, pooled, last_hw }))
            }
        }
    }

    /// Pushes `φ`'s parameter gradients onto `grads` and returns `dL/dY'`.
    fn aux_backward(&self, yp: &FeatureMap, cache: &AuxCache, dz: &Matrix, grads: &mut Vec<Vec<f64>>) -> Result<FeatureMap> {
        let (_, c, h, w) = yp.shape();
        match (&self.aux, cache) {
            (AuxBlock::Identity, AuxCache::Identity) => FeatureMap::from_matrix(dz, c, h, w),
            (AuxBlock::Dense(d), AuxCache::Dense { input }) => {
                let (dw, db, dx) = d.backward(input, dz, true)?;
                grads.push(dw);
                if d.bias.is_some() {
                    grads.push(db);
                }
                FeatureMap::from_matrix(&dx.expect("requested"), c, h, w)
            }
            (AuxBlock::Conv(a), AuxCache::Conv { conv_inputs, pooled, last_hw }) => {
                let (dw_fc, db_fc, dpooled) = a.fc.backward(pooled, dz, true)?;
                let mut g = global_avg_pool_backward(&dpooled.expect("requested"), last_hw.1, last_hw.2);
                let mut conv_grads = Vec::with_capacity(2 * a.convs.len());
                for (conv, input) in a.convs.iter().zip(conv_inputs).rev() {
                    let (dw, db, dx) = conv.backward(input, &g, true)?;
                    conv_grads.push((dw, db));
                    g = dx.expect("requested");
                }
                for (dw, db) in conv_grads.into_iter().rev() {
                    grads.push(dw);
                    grads.push(db);
                }
                grads.push(dw_fc);
                grads.push(db_fc);
                Ok(g)
            }
            _ => unreachable!("cache kind always matches the block kind"),
        }
    }
}

/// Adds `avg_pool2(x)` onto `out`, channel `c` onto channel `c` for the
/// channels both have; extra output channels receive nothing.
fn add_skip(out: &mut FeatureMap, x: &FeatureMap) -> Result<()> {
    let pooled = avg_pool2(x);
    if (pooled.height(), pooled.width()) != (out.height(), out.width()) {
        return Err(Error::shape("skip", "pooled input and block output differ spatially"));
    }
    let plane = out.plane_len();
    let shared = pooled.channels().min(out.channels());
    for i in 0..out.batch() {
        let src = pooled.sample(i);
        let dst = out.sample_mut(i);
        for (d, s) in dst[..shared * plane].iter_mut().zip(&src[..shared * plane]) {
            *d += s;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(3)
    }

    #[test]
    fn zero_input_gives_fc_bias() {
        let mut block =
            SphereBlock::conv(3, 4, Activation::LeakyRelu(0.01), false, AuxSpec { enabled: true, depth: 1, d_proj: 5 }, &mut rng())
                .unwrap();
        if let AuxBlock::Conv(a) = &mut block.aux {
            a.fc.bias = Some(vec![0.5, -1.0, 2.0, 0.0, 3.0]);
        }
        let out = block.forward(&FeatureMap::zeros(2, 3, 4, 4)).unwrap();
        for i in 0..2 {
            assert_eq!(out.z.row(i), &[0.5, -1.0, 2.0, 0.0, 3.0]);
        }
    }

    #[test]
    fn default_shapes() {
        let block = SphereBlock::conv(3, 6, Activation::LeakyRelu(0.01), false, AuxSpec::default(), &mut rng()).unwrap();
        let mut r = rng();
        let x = FeatureMap::new(2, 3, 8, 8, (0..384).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap();
        let out = block.forward(&x).unwrap();
        assert_eq!(out.z.shape(), (2, 256));
        assert_eq!(out.yp.shape(), (2, 6, 4, 4));
    }

    #[test]
    fn batch_of_one_is_rejected() {
        let block = SphereBlock::linear(3, 2, &mut rng());
        let x = FeatureMap::new(1, 3, 1, 1, vec![1.0, 2.0, 3.0]).unwrap();
        assert!(block.backward(&x, &LossTerms::default()).is_err());
    }

    #[test]
    fn grads_align_with_params() {
        let block = SphereBlock::conv(2, 4, Activation::Tanh, true, AuxSpec { enabled: true, depth: 2, d_proj: 3 }, &mut rng()).unwrap();
        let x = FeatureMap::new(3, 2, 4, 4, (0..96).map(|i| ((i * 37 % 11) as f64 - 5.0) / 5.0).collect()).unwrap();
        let (g, _) = block.backward(&x, &LossTerms::default()).unwrap();
        let params = block.params();
        assert_eq!(g.values.len(), params.len());
        for ((name, p), (gn, gv)) in params.iter().zip(g.names.iter().zip(&g.values)) {
            assert_eq!(name, gn);
            assert_eq!(p.len(), gv.len(), "{name}");
        }
    }
}
