//! Layer kernels: stride-1 convolution through im2col, dense maps, pooling.

use rand::Rng;

use super::feature_map::FeatureMap;
use crate::error::{Error, Result};
use crate::numerics::{gemm_into, Matrix};

/// Uniform fan-in initialization, `U(−√(6/fan_in), √(6/fan_in))`.
pub fn kaiming_uniform<R: Rng + ?Sized>(rng: &mut R, fan_in: usize, n: usize) -> Vec<f64> {
    let bound = (6.0 / fan_in.max(1) as f64).sqrt();
    (0..n).map(|_| rng.random_range(-bound..bound)).collect()
}

/// Cross-correlation with stride 1 and symmetric zero padding.
/// Weights are laid out `out x in x k x k`.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv2d {
    pub in_ch: usize,
    pub out_ch: usize,
    pub ksize: usize,
    pub padding: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Conv2d {
    /// "Same" padding, initialized weights, zero bias.
    pub fn new<R: Rng + ?Sized>(in_ch: usize, out_ch: usize, ksize: usize, rng: &mut R) -> Self {
        let fan_in = in_ch * ksize * ksize;
        Self { in_ch, out_ch, ksize, padding: ksize / 2, weight: kaiming_uniform(rng, fan_in, out_ch * fan_in), bias: vec![0.0; out_ch] }
    }

    pub fn from_parts(in_ch: usize, out_ch: usize, ksize: usize, padding: usize, weight: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if weight.len() != out_ch * in_ch * ksize * ksize || bias.len() != out_ch {
            return Err(Error::shape("Conv2d::from_parts", "weight or bias length does not match the geometry"));
        }
        if ksize == 0 || 2 * padding + 1 < ksize {
            return Err(Error::InvalidArgument(format!("unsupported kernel {ksize} with padding {padding}")));
        }
        Ok(Self { in_ch, out_ch, ksize, padding, weight, bias })
    }

    fn patch_len(&self) -> usize {
        self.in_ch * self.ksize * self.ksize
    }

    pub fn output_hw(&self, h: usize, w: usize) -> (usize, usize) {
        (h + 2 * self.padding + 1 - self.ksize, w + 2 * self.padding + 1 - self.ksize)
    }

    fn is_pointwise(&self) -> bool {
        self.ksize == 1 && self.padding == 0
    }

    fn check_input(&self, x: &FeatureMap) -> Result<()> {
        if x.channels() != self.in_ch {
            return Err(Error::shape("conv2d", format!("expected {} input channels, got {}", self.in_ch, x.channels())));
        }
        if x.height() + 2 * self.padding < self.ksize || x.width() + 2 * self.padding < self.ksize {
            return Err(Error::shape("conv2d", "input smaller than kernel"));
        }
        Ok(())
    }

    pub fn forward(&self, x: &FeatureMap) -> Result<FeatureMap> {
        self.check_input(x)?;
        let (b, _, h, w) = x.shape();
        let (oh, ow) = self.output_hw(h, w);
        let plane = oh * ow;
        let kk = self.patch_len();
        let mut out = FeatureMap::zeros(b, self.out_ch, oh, ow);
        let mut cols = vec![0.0; if self.is_pointwise() { 0 } else { kk * plane }];
        for i in 0..b {
            let src: &[f64] = if self.is_pointwise() {
                x.sample(i)
            } else {
                im2col(x.sample(i), self.in_ch, h, w, self.ksize, self.padding, &mut cols);
                &cols
            };
            let dst = out.sample_mut(i);
            gemm_into(self.out_ch, kk, plane, 1.0, &self.weight, kk, 1, src, plane, 1, 0.0, dst);
            for (o, chunk) in dst.chunks_mut(plane).enumerate() {
                let bias = self.bias[o];
                for v in chunk {
                    *v += bias;
                }
            }
        }
        Ok(out)
    }

    /// Returns `(dW, db, dX)`; `dX` only when requested.
    pub fn backward(&self, x: &FeatureMap, dout: &FeatureMap, want_dx: bool) -> Result<(Vec<f64>, Vec<f64>, Option<FeatureMap>)> {
        self.check_input(x)?;
        let (b, _, h, w) = x.shape();
        let (oh, ow) = self.output_hw(h, w);
        if dout.shape() != (b, self.out_ch, oh, ow) {
            return Err(Error::shape("conv2d backward", format!("gradient shape {:?}", dout.shape())));
        }
        let plane = oh * ow;
        let kk = self.patch_len();
        let mut dw = vec![0.0; self.weight.len()];
        let mut db = vec![0.0; self.out_ch];
        let mut dx = want_dx.then(|| FeatureMap::zeros(b, self.in_ch, h, w));
        let mut cols = vec![0.0; if self.is_pointwise() { 0 } else { kk * plane }];
        let mut dcols = vec![0.0; if want_dx { kk * plane } else { 0 }];
        for i in 0..b {
            let g = dout.sample(i);
            for (o, chunk) in g.chunks(plane).enumerate() {
                db[o] += chunk.iter().sum::<f64>();
            }
            let src: &[f64] = if self.is_pointwise() {
                x.sample(i)
            } else {
                im2col(x.sample(i), self.in_ch, h, w, self.ksize, self.padding, &mut cols);
                &cols
            };
            // dW += dOut · colsᵀ
            gemm_into(self.out_ch, plane, kk, 1.0, g, plane, 1, src, 1, plane, 1.0, &mut dw);
            if let Some(dx) = dx.as_mut() {
                // dcols = Wᵀ · dOut
                gemm_into(kk, self.out_ch, plane, 1.0, &self.weight, 1, kk, g, plane, 1, 0.0, &mut dcols);
                let target = dx.sample_mut(i);
                if self.is_pointwise() {
                    target.copy_from_slice(&dcols);
                } else {
                    col2im(&dcols, self.in_ch, h, w, self.ksize, self.padding, target);
                }
            }
        }
        Ok((dw, db, dx))
    }
}

/// Unfolds one `c x h x w` sample into a `(c·k·k) x (oh·ow)` patch matrix.
fn im2col(sample: &[f64], c: usize, h: usize, w: usize, k: usize, pad: usize, cols: &mut [f64]) {
    let oh = h + 2 * pad + 1 - k;
    let ow = w + 2 * pad + 1 - k;
    let plane = oh * ow;
    for ch in 0..c {
        let src = &sample[ch * h * w..(ch + 1) * h * w];
        for ki in 0..k {
            for kj in 0..k {
                let row = ((ch * k + ki) * k + kj) * plane;
                let dst = &mut cols[row..row + plane];
                for oy in 0..oh {
                    let iy = oy + ki;
                    let out_row = &mut dst[oy * ow..(oy + 1) * ow];
                    if iy < pad || iy - pad >= h {
                        out_row.fill(0.0);
                        continue;
                    }
                    let src_row = &src[(iy - pad) * w..(iy - pad + 1) * w];
                    for (ox, v) in out_row.iter_mut().enumerate() {
                        let ix = ox + kj;
                        *v = if ix < pad || ix - pad >= w { 0.0 } else { src_row[ix - pad] };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]; overwrites `dx`.
fn col2im(cols: &[f64], c: usize, h: usize, w: usize, k: usize, pad: usize, dx: &mut [f64]) {
    let oh = h + 2 * pad + 1 - k;
    let ow = w + 2 * pad + 1 - k;
    let plane = oh * ow;
    dx.fill(0.0);
    for ch in 0..c {
        let dst = &mut dx[ch * h * w..(ch + 1) * h * w];
        for ki in 0..k {
            for kj in 0..k {
                let row = ((ch * k + ki) * k + kj) * plane;
                let src = &cols[row..row + plane];
                for oy in 0..oh {
                    let iy = oy + ki;
                    if iy < pad || iy - pad >= h {
                        continue;
                    }
                    for ox in 0..ow {
                        let ix = ox + kj;
                        if ix < pad || ix - pad >= w {
                            continue;
                        }
                        dst[(iy - pad) * w + ix - pad] += src[oy * ow + ox];
                    }
                }
            }
        }
    }
}

/// `Y = X·W (+ b)`, `W` stored `n_in x n_out` row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub n_in: usize,
    pub n_out: usize,
    pub weight: Vec<f64>,
    pub bias: Option<Vec<f64>>,
}

impl Dense {
    pub fn new<R: Rng + ?Sized>(n_in: usize, n_out: usize, with_bias: bool, rng: &mut R) -> Self {
        Self { n_in, n_out, weight: kaiming_uniform(rng, n_in, n_in * n_out), bias: with_bias.then(|| vec![0.0; n_out]) }
    }

    pub fn from_matrix(w: &Matrix, bias: Option<Vec<f64>>) -> Result<Self> {
        if let Some(b) = &bias {
            if b.len() != w.cols() {
                return Err(Error::shape("Dense::from_matrix", "bias length"));
            }
        }
        Ok(Self { n_in: w.rows(), n_out: w.cols(), weight: w.data().to_vec(), bias })
    }

    pub fn weight_matrix(&self) -> Matrix {
        Matrix::from_vec_unchecked(self.n_in, self.n_out, self.weight.clone())
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.n_in {
            return Err(Error::shape("dense", format!("expected {} inputs, got {}", self.n_in, x.cols())));
        }
        let mut out = Matrix::zeros(x.rows(), self.n_out);
        gemm_into(x.rows(), self.n_in, self.n_out, 1.0, x.data(), self.n_in, 1, &self.weight, self.n_out, 1, 0.0, out.data_mut());
        if let Some(b) = &self.bias {
            for i in 0..x.rows() {
                for (v, bv) in out.row_mut(i).iter_mut().zip(b) {
                    *v += bv;
                }
            }
        }
        Ok(out)
    }

    /// Returns `(dW, db, dX)`; `db` is empty without a bias.
    pub fn backward(&self, x: &Matrix, dy: &Matrix, want_dx: bool) -> Result<(Vec<f64>, Vec<f64>, Option<Matrix>)> {
        if x.cols() != self.n_in || dy.cols() != self.n_out || x.rows() != dy.rows() {
            return Err(Error::shape("dense backward", "input/gradient shapes disagree"));
        }
        let mut dw = vec![0.0; self.weight.len()];
        gemm_into(self.n_in, x.rows(), self.n_out, 1.0, x.data(), 1, self.n_in, dy.data(), self.n_out, 1, 0.0, &mut dw);
        let db =
            if self.bias.is_some() { (0..self.n_out).map(|j| (0..dy.rows()).map(|i| dy.get(i, j)).sum()).collect() } else { Vec::new() };
        let dx = if want_dx {
            let mut dx = Matrix::zeros(x.rows(), self.n_in);
            gemm_into(x.rows(), self.n_out, self.n_in, 1.0, dy.data(), self.n_out, 1, &self.weight, 1, self.n_out, 0.0, dx.data_mut());
            Some(dx)
        } else {
            None
        };
        Ok((dw, db, dx))
    }
}

/// 2x2 stride-2 max pooling (floor on odd sizes). Also returns, for each
/// output cell, the flat input index that won.
pub fn max_pool2(x: &FeatureMap) -> (FeatureMap, Vec<usize>) {
    let (b, c, h, w) = x.shape();
    let (oh, ow) = (h / 2, w / 2);
    let mut out = FeatureMap::zeros(b, c, oh, ow);
    let mut arg = vec![0usize; b * c * oh * ow];
    let data = x.data();
    let mut o = 0;
    for plane in 0..b * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best_idx = base + (2 * oy) * w + 2 * ox;
                let mut best = data[best_idx];
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = base + (2 * oy + dy) * w + 2 * ox + dx;
                    if data[idx] > best {
                        best = data[idx];
                        best_idx = idx;
                    }
                }
                out.data_mut()[o] = best;
                arg[o] = best_idx;
                o += 1;
            }
        }
    }
    (out, arg)
}

pub fn max_pool2_backward(dout: &FeatureMap, arg: &[usize], input_shape: (usize, usize, usize, usize)) -> FeatureMap {
    let (b, c, h, w) = input_shape;
    let mut dx = FeatureMap::zeros(b, c, h, w);
    let d = dx.data_mut();
    for (g, &idx) in dout.data().iter().zip(arg) {
        d[idx] += g;
    }
    dx
}

/// 2x2 stride-2 average pooling (floor on odd sizes).
pub fn avg_pool2(x: &FeatureMap) -> FeatureMap {
    let (b, c, h, w) = x.shape();
    let (oh, ow) = (h / 2, w / 2);
    let mut out = FeatureMap::zeros(b, c, oh, ow);
    let data = x.data();
    let mut o = 0;
    for plane in 0..b * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let at = |dy: usize, dx: usize| data[base + (2 * oy + dy) * w + 2 * ox + dx];
                out.data_mut()[o] = 0.25 * (at(0, 0) + at(0, 1) + at(1, 0) + at(1, 1));
                o += 1;
            }
        }
    }
    out
}

/// Adaptive average pooling to 1x1: `batch x channels`.
pub fn global_avg_pool(x: &FeatureMap) -> Matrix {
    let (b, c, _, _) = x.shape();
    let plane = x.plane_len();
    let data: Vec<f64> = x.data().chunks(plane).map(|p| p.iter().sum::<f64>() / plane as f64).collect();
    Matrix::from_vec_unchecked(b, c, data)
}

pub fn global_avg_pool_backward(dm: &Matrix, h: usize, w: usize) -> FeatureMap {
    let plane = h * w;
    let mut data = Vec::with_capacity(dm.rows() * dm.cols() * plane);
    for &g in dm.data() {
        let v = g / plane as f64;
        data.extend(std::iter::repeat_n(v, plane));
    }
    FeatureMap::from_vec_unchecked(dm.rows(), dm.cols(), h, w, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delta_kernel_is_identity() {
        let mut weight = vec![0.0; 9];
        weight[4] = 1.0;
        let conv = Conv2d::from_parts(1, 1, 3, 1, weight, vec![0.0]).unwrap();
        let x = FeatureMap::new(1, 1, 3, 3, (1..=9).map(f64::from).collect()).unwrap();
        assert_eq!(conv.forward(&x).unwrap(), x);
    }

    #[test]
    fn ones_kernel_center_sums_nine() {
        let conv = Conv2d::from_parts(1, 1, 3, 1, vec![1.0; 9], vec![0.0]).unwrap();
        let x = FeatureMap::new(1, 1, 3, 3, vec![1.0; 9]).unwrap();
        let y = conv.forward(&x).unwrap();
        assert_eq!(y.data()[4], 9.0);
        assert_eq!(y.data()[0], 4.0);
    }

    #[test]
    fn conv_rejects_channel_mismatch() {
        let conv = Conv2d::from_parts(2, 1, 3, 1, vec![0.0; 18], vec![0.0]).unwrap();
        assert!(conv.forward(&FeatureMap::zeros(1, 3, 4, 4)).is_err());
    }

    #[test]
    fn pooling() {
        let x = FeatureMap::new(1, 1, 2, 4, vec![1.0, 5.0, 2.0, 0.0, 3.0, 4.0, -1.0, 8.0]).unwrap();
        let (m, arg) = max_pool2(&x);
        assert_eq!(m.data(), &[5.0, 8.0]);
        assert_eq!(arg, vec![1, 7]);
        assert_eq!(avg_pool2(&x).data(), &[3.25, 2.25]);
        let g = max_pool2_backward(&FeatureMap::new(1, 1, 1, 2, vec![1.0, 2.0]).unwrap(), &arg, x.shape());
        assert_eq!(g.data(), &[0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 2.0]);
        assert_eq!(global_avg_pool(&x).data(), &[2.75]);
    }
}
