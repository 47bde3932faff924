//! The shared-weight feedforward network and its hand-written backprop.

use std::fs;
use std::path::Path;

use rand::Rng;

use crate::encode::EncodedVector;
use crate::error::{Error, Result};

const MODEL_MAGIC: &[u8; 4] = b"TMT1";

/// Fully connected layer, `rows` outputs by `cols` inputs, row-major weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub rows: usize,
    pub cols: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Layer {
            rows,
            cols,
            weights: vec![0.0; rows * cols],
            bias: vec![0.0; rows],
        }
    }

    fn row(&self, r: usize) -> &[f64] {
        &self.weights[r * self.cols..(r + 1) * self.cols]
    }

    fn affine_dense(&self, x: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|r| self.bias[r] + dot(self.row(r), x))
            .collect()
    }

    fn affine_sparse(&self, positions: &[usize]) -> Vec<f64> {
        (0..self.rows)
            .map(|r| {
                let row = self.row(r);
                self.bias[r] + positions.iter().map(|&p| row[p]).sum::<f64>()
            })
            .collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A network input: either a hashed binary vector or an arbitrary dense vector.
#[derive(Debug, Clone, Copy)]
pub enum Input<'a> {
    Sparse(&'a EncodedVector),
    Dense(&'a [f64]),
}

impl Input<'_> {
    pub fn len(&self) -> usize {
        match self {
            Input::Sparse(v) => v.len(),
            Input::Dense(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One twin of the siamese pair. Both twins read the same `layers`, so the
/// weights are shared by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SiameseModel {
    pub layers: Vec<Layer>,
    pub margin: f64,
}

/// Activations of every layer for one forward pass; the last entry is the embedding.
#[derive(Debug, Clone)]
pub(crate) struct Activations(Vec<Vec<f64>>);

impl Activations {
    pub(crate) fn output(&self) -> &[f64] {
        self.0.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Parameter-shaped accumulator for gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<Vec<f64>>,
    /// First-layer columns touched by sparse inputs; `None` once a dense input was seen.
    touched: Option<Vec<usize>>,
}

impl Gradients {
    pub fn zeros_like(model: &SiameseModel) -> Self {
        Gradients {
            weights: model.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            bias: model.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
            touched: Some(Vec::new()),
        }
    }

    fn clear(&mut self, first_cols: usize) {
        match self.touched.take() {
            Some(cols) => {
                let first = &mut self.weights[0];
                let rows = first.len() / first_cols.max(1);
                for c in cols {
                    for r in 0..rows {
                        first[r * first_cols + c] = 0.0;
                    }
                }
                for w in self.weights.iter_mut().skip(1) {
                    w.fill(0.0);
                }
            }
            None => self.weights.iter_mut().for_each(|w| w.fill(0.0)),
        }
        self.bias.iter_mut().for_each(|b| b.fill(0.0));
        self.touched = Some(Vec::new());
    }
}

impl SiameseModel {
    /// Random model with weights uniform in +-sqrt(6 / (fan_in + fan_out)) and zero biases.
    /// `dims` lists the input width followed by every layer's output width.
    pub fn init(dims: &[usize], margin: f64, rng: &mut impl Rng) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "layer dimensions must be positive and at least two long, got {dims:?}"
            )));
        }
        if !(margin > 0.0 && margin.is_finite()) {
            return Err(Error::InvalidArgument(format!("margin must be positive, got {margin}")));
        }
        let layers = dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let mut layer = Layer::zeros(fan_out, fan_in);
                for x in &mut layer.weights {
                    *x = rng.random_range(-limit..=limit);
                }
                layer
            })
            .collect();
        Ok(SiameseModel { layers, margin })
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.cols)
    }

    pub fn embedding_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.rows)
    }

    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(|l| l.rows))
            .collect()
    }

    fn check(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::InvalidArgument("model has no layers".into()));
        }
        for w in self.layers.windows(2) {
            if w[0].rows != w[1].cols {
                return Err(Error::DimensionMismatch {
                    expected: w[0].rows,
                    found: w[1].cols,
                });
            }
        }
        Ok(())
    }

    pub(crate) fn activations(&self, x: Input<'_>) -> Result<Activations> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                found: x.len(),
            });
        }
        let last = self.layers.len() - 1;
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = match (i, x) {
                (0, Input::Sparse(v)) => layer.affine_sparse(v.positions()),
                (0, Input::Dense(v)) => layer.affine_dense(v),
                _ => layer.affine_dense(&acts[i - 1]),
            };
            if i != last {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(z);
        }
        Ok(Activations(acts))
    }

    /// Embedding of one input.
    pub fn forward(&self, x: &EncodedVector) -> Result<Vec<f64>> {
        Ok(self.activations(Input::Sparse(x))?.0.pop().unwrap_or_default())
    }

    pub fn forward_input(&self, x: Input<'_>) -> Result<Vec<f64>> {
        Ok(self.activations(x)?.0.pop().unwrap_or_default())
    }

    /// Adds dLoss/dparams to `grads` given dLoss/d(embedding) = `upstream`.
    pub(crate) fn backward(
        &self,
        x: Input<'_>,
        acts: &Activations,
        upstream: &[f64],
        grads: &mut Gradients,
    ) {
        let mut delta = upstream.to_vec();
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let gw = &mut grads.weights[i];
            for (g, d) in grads.bias[i].iter_mut().zip(&delta) {
                *g += d;
            }
            if i == 0 {
                match x {
                    Input::Sparse(v) => {
                        for r in 0..layer.rows {
                            let d = delta[r];
                            if d != 0.0 {
                                for &p in v.positions() {
                                    gw[r * layer.cols + p] += d;
                                }
                            }
                        }
                        if let Some(t) = grads.touched.as_mut() {
                            t.extend_from_slice(v.positions());
                        }
                    }
                    Input::Dense(v) => {
                        for r in 0..layer.rows {
                            let d = delta[r];
                            let row = &mut gw[r * layer.cols..(r + 1) * layer.cols];
                            row.iter_mut().zip(v).for_each(|(g, xv)| *g += d * xv);
                        }
                        grads.touched = None;
                    }
                }
                break;
            }
            let input = &acts.0[i - 1];
            let mut next = vec![0.0; layer.cols];
            for r in 0..layer.rows {
                let d = delta[r];
                if d == 0.0 {
                    continue;
                }
                let row = layer.row(r);
                let grow = &mut gw[r * layer.cols..(r + 1) * layer.cols];
                for c in 0..layer.cols {
                    grow[c] += d * input[c];
                    next[c] += d * row[c];
                }
            }
            // Rectifier derivative of the layer below.
            for (n, a) in next.iter_mut().zip(input) {
                if *a <= 0.0 {
                    *n = 0.0;
                }
            }
            delta = next;
        }
    }

    /// Contrastive loss of one pair and its gradient, scaled by `scale`, added to `grads`.
    pub fn accumulate_pair(
        &self,
        a: Input<'_>,
        b: Input<'_>,
        unrelated: bool,
        scale: f64,
        grads: &mut Gradients,
    ) -> Result<f64> {
        let acts_a = self.activations(a)?;
        let acts_b = self.activations(b)?;
        let diff: Vec<f64> = acts_a
            .output()
            .iter()
            .zip(acts_b.output())
            .map(|(x, y)| x - y)
            .collect();
        let distance = dot(&diff, &diff).sqrt();
        let loss = super::contrastive_loss(unrelated, distance, self.margin)?;
        // dL/dD
        let d_loss = if !unrelated {
            2.0 * distance
        } else if distance < self.margin {
            -2.0 * (self.margin - distance)
        } else {
            0.0
        };
        if d_loss != 0.0 && distance > 0.0 {
            let coef = scale * d_loss / distance;
            let up_a: Vec<f64> = diff.iter().map(|d| coef * d).collect();
            let up_b: Vec<f64> = up_a.iter().map(|g| -g).collect();
            self.backward(a, &acts_a, &up_a, grads);
            self.backward(b, &acts_b, &up_b, grads);
        }
        Ok(loss)
    }

    /// Loss and full gradient for one pair.
    pub fn pair_gradients(&self, a: Input<'_>, b: Input<'_>, unrelated: bool) -> Result<(f64, Gradients)> {
        let mut grads = Gradients::zeros_like(self);
        grads.touched = None;
        let loss = self.accumulate_pair(a, b, unrelated, 1.0, &mut grads)?;
        Ok((loss, grads))
    }

    /// `params -= learning_rate * grads`, then clears `grads`.
    pub(crate) fn apply(&mut self, grads: &mut Gradients, learning_rate: f64) {
        let first_cols = self.input_dim();
        for (i, layer) in self.layers.iter_mut().enumerate() {
            match (&grads.touched, i) {
                (Some(cols), 0) => {
                    let mut cols = cols.clone();
                    cols.sort_unstable();
                    cols.dedup();
                    for r in 0..layer.rows {
                        for &c in &cols {
                            let k = r * layer.cols + c;
                            layer.weights[k] -= learning_rate * grads.weights[0][k];
                        }
                    }
                    grads.touched = Some(cols);
                }
                _ => layer
                    .weights
                    .iter_mut()
                    .zip(&grads.weights[i])
                    .for_each(|(w, g)| *w -= learning_rate * g),
            }
            layer
                .bias
                .iter_mut()
                .zip(&grads.bias[i])
                .for_each(|(b, g)| *b -= learning_rate * g);
        }
        grads.clear(first_cols);
    }

    pub fn is_finite(&self) -> bool {
        self.margin.is_finite()
            && self
                .layers
                .iter()
                .all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MODEL_MAGIC);
        out.extend_from_slice(&(self.layers.len() as u32).to_le_bytes());
        for l in &self.layers {
            out.extend_from_slice(&(l.rows as u32).to_le_bytes());
            out.extend_from_slice(&(l.cols as u32).to_le_bytes());
            for w in l.weights.iter().chain(&l.bias) {
                out.extend_from_slice(&w.to_le_bytes());
            }
        }
        out.extend_from_slice(&self.margin.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = ByteReader { bytes, pos: 0, path };
        if r.take(4)? != MODEL_MAGIC {
            return Err(Error::format(path, "bad magic, expected TMT1"));
        }
        let count = r.u32()? as usize;
        let mut layers = Vec::with_capacity(count);
        for _ in 0..count {
            let rows = r.u32()? as usize;
            let cols = r.u32()? as usize;
            let weights = (0..rows * cols).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            let bias = (0..rows).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            layers.push(Layer { rows, cols, weights, bias });
        }
        let margin = r.f64()?;
        if r.pos != bytes.len() {
            return Err(Error::format(path, "trailing bytes after margin"));
        }
        let model = SiameseModel { layers, margin };
        model.check().map_err(|e| Error::format(path, e.to_string()))?;
        if !model.is_finite() {
            return Err(Error::format(path, "non-finite parameters"));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}

pub(crate) struct ByteReader<'a> {
    pub(crate) bytes: &'a [u8],
    pub(crate) pos: usize,
    pub(crate) path: &'a Path,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::format(self.path, "unexpected end of file"))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encode::encode_ids;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_model(dims: &[usize], seed: u64) -> SiameseModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = SiameseModel::init(dims, 1.0, &mut rng).unwrap();
        for l in &mut m.layers {
            for b in &mut l.bias {
                *b = rng.random_range(-0.5..0.5);
            }
        }
        m
    }

    /// Straightforward matrix-vector reference, written independently of `Layer`.
    #[allow(clippy::needless_range_loop)]
    fn reference_forward(m: &SiameseModel, x: &[f64]) -> Vec<f64> {
        let mut h = x.to_vec();
        for (i, l) in m.layers.iter().enumerate() {
            let mut out = vec![0.0; l.rows];
            for r in 0..l.rows {
                let mut acc = l.bias[r];
                for c in 0..l.cols {
                    acc += l.weights[r * l.cols + c] * h[c];
                }
                out[r] = if i + 1 < m.layers.len() { acc.max(0.0) } else { acc };
            }
            h = out;
        }
        h
    }

    #[test]
    fn zero_model_gives_zero() {
        let m = SiameseModel {
            layers: vec![Layer::zeros(3, 5), Layer::zeros(2, 3)],
            margin: 1.0,
        };
        let x = encode_ids([1, 2, 3], 5);
        assert_eq!(m.forward(&x).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn one_hot_selects_column() {
        let mut l = Layer::zeros(3, 4);
        for (k, w) in l.weights.iter_mut().enumerate() {
            *w = k as f64;
        }
        let m = SiameseModel { layers: vec![l], margin: 1.0 };
        let x = [0.0, 0.0, 1.0, 0.0];
        assert_eq!(m.forward_input(Input::Dense(&x)).unwrap(), vec![2.0, 6.0, 10.0]);
    }

    #[test]
    fn tiny_model_matches_hand_computation() {
        // 2-2-2-2-2 with hand-picked weights; expected values worked by hand.
        let layer = |w: [f64; 4], b: [f64; 2]| Layer {
            rows: 2,
            cols: 2,
            weights: w.to_vec(),
            bias: b.to_vec(),
        };
        let m = SiameseModel {
            layers: vec![
                layer([1.0, -1.0, 0.5, 2.0], [0.0, -1.0]),
                layer([2.0, 1.0, -1.0, 1.0], [0.5, 0.0]),
                layer([1.0, 0.0, 0.0, -1.0], [0.0, 3.0]),
                layer([0.5, 0.5, -1.0, 2.0], [0.25, 0.0]),
            ],
            margin: 1.0,
        };
        // x = (1, 0.5)
        // h1 = relu(1 - 0.5, 0.5 + 1 - 1) = (0.5, 0.5)
        // h2 = relu(1+0.5+0.5, -0.5+0.5) = (2.0, 0.0)
        // h3 = relu(2.0, 3.0) = (2.0, 3.0)
        // out = (1+1.5+0.25, -2+6) = (2.75, 4.0)
        let out = m.forward_input(Input::Dense(&[1.0, 0.5])).unwrap();
        assert_eq!(out, vec![2.75, 4.0]);
        assert_eq!(out, reference_forward(&m, &[1.0, 0.5]));
    }

    #[test]
    fn sparse_and_dense_paths_agree() {
        let m = random_model(&[32, 8, 6, 5, 4], 11);
        let x = encode_ids([3, 17, 99, 1000], 32);
        let sparse = m.forward(&x).unwrap();
        let dense = m.forward_input(Input::Dense(&x.to_dense())).unwrap();
        for (s, d) in sparse.iter().zip(&dense) {
            assert!((s - d).abs() < 1e-12);
        }
        let reference = reference_forward(&m, &x.to_dense());
        for (s, r) in sparse.iter().zip(&reference) {
            assert!((s - r).abs() < 1e-12);
        }
    }

    #[test]
    fn dimension_mismatch() {
        let m = random_model(&[8, 4, 2], 1);
        let x = encode_ids([1], 9);
        assert!(matches!(
            m.forward(&x),
            Err(Error::DimensionMismatch { expected: 8, found: 9 })
        ));
    }

    #[test]
    fn init_respects_fan_limit() {
        let m = random_model(&[50, 30, 10], 5);
        let limit = (6.0f64 / 80.0).sqrt();
        assert!(m.layers[0].weights.iter().all(|w| w.abs() <= limit));
        assert!(SiameseModel::init(&[4], 1.0, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
        assert!(SiameseModel::init(&[4, 2], 0.0, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn sparse_gradient_matches_dense_gradient() {
        let m = random_model(&[16, 6, 5, 4, 3], 9);
        let a = encode_ids([1, 2], 16);
        let b = encode_ids([7, 8, 9], 16);
        for unrelated in [false, true] {
            let (la, ga) = m
                .pair_gradients(Input::Sparse(&a), Input::Sparse(&b), unrelated)
                .unwrap();
            let (da, db) = (a.to_dense(), b.to_dense());
            let (lb, gb) = m
                .pair_gradients(Input::Dense(&da), Input::Dense(&db), unrelated)
                .unwrap();
            assert!((la - lb).abs() < 1e-12);
            for (x, y) in ga.weights.iter().flatten().zip(gb.weights.iter().flatten()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn model_bytes_roundtrip_and_rejects_garbage() {
        let m = random_model(&[10, 4, 3], 3);
        let bytes = m.to_bytes();
        assert_eq!(&bytes[..4], b"TMT1");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 2);
        let p = Path::new("model.bin");
        assert_eq!(SiameseModel::from_bytes(&bytes, p).unwrap(), m);
        assert!(SiameseModel::from_bytes(&bytes[..bytes.len() - 1], p).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(SiameseModel::from_bytes(&bad, p).is_err());
    }
}
