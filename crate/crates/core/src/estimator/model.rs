use nalgebra::{DMatrix, DMatrixView, DMatrixViewMut};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EncoderConfig, EstimatorError, Pooling, Scaler};

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

/// Location of one weight tensor inside the flat parameter vector.
/// Tensors are stored column-major.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamLayout {
    pub tensors: Vec<TensorSpec>,
    pub total: usize,
}

impl ParamLayout {
    fn push(&mut self, name: String, rows: usize, cols: usize) -> usize {
        self.tensors.push(TensorSpec {
            name,
            rows,
            cols,
            offset: self.total,
        });
        self.total += rows * cols;
        self.tensors.len() - 1
    }

    pub fn get(&self, name: &str) -> Option<&TensorSpec> {
        self.tensors.iter().find(|t| t.name == name)
    }
}

#[derive(Debug, Clone)]
struct LayerIdx {
    wq: usize,
    bq: usize,
    wk: usize,
    bk: usize,
    wv: usize,
    bv: usize,
    wo: usize,
    bo: usize,
    ln1_g: usize,
    ln1_b: usize,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    ln2_g: usize,
    ln2_b: usize,
}

#[derive(Debug, Clone)]
struct Indices {
    embed_w: usize,
    embed_b: usize,
    layers: Vec<LayerIdx>,
    head_w: usize,
    head_b: usize,
}

fn build_layout(cfg: &EncoderConfig) -> (ParamLayout, Indices) {
    let mut l = ParamLayout {
        tensors: Vec::new(),
        total: 0,
    };
    let (f, d, ff, p) = (cfg.n_features, cfg.d_model, cfg.d_ff, cfg.n_outputs);
    let embed_w = l.push("embed.w".into(), f, d);
    let embed_b = l.push("embed.b".into(), 1, d);
    let layers = (0..cfg.n_layers)
        .map(|i| {
            let mut t = |n: &str, r, c| l.push(format!("layer{i}.{n}"), r, c);
            LayerIdx {
                wq: t("wq", d, d),
                bq: t("bq", 1, d),
                wk: t("wk", d, d),
                bk: t("bk", 1, d),
                wv: t("wv", d, d),
                bv: t("bv", 1, d),
                wo: t("wo", d, d),
                bo: t("bo", 1, d),
                ln1_g: t("ln1.gamma", 1, d),
                ln1_b: t("ln1.beta", 1, d),
                w1: t("ff.w1", d, ff),
                b1: t("ff.b1", 1, ff),
                w2: t("ff.w2", ff, d),
                b2: t("ff.b2", 1, d),
                ln2_g: t("ln2.gamma", 1, d),
                ln2_b: t("ln2.beta", 1, d),
            }
        })
        .collect();
    let head_w = l.push("head.w".into(), d, p);
    let head_b = l.push("head.b".into(), 1, p);
    (
        l,
        Indices {
            embed_w,
            embed_b,
            layers,
            head_w,
            head_b,
        },
    )
}

/// Sinusoidal table: `PE(pos, 2i) = sin(pos / 10000^(2i/d))`,
/// `PE(pos, 2i+1) = cos(pos / 10000^(2i/d))`.
pub fn positional_encoding(seq_len: usize, d_model: usize) -> DMatrix<f64> {
    DMatrix::from_fn(seq_len, d_model, |pos, j| {
        let pair = (j / 2) * 2;
        let angle = pos as f64 / 10000f64.powf(pair as f64 / d_model as f64);
        if j % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

/// Input-projection mask for grouped embeddings: feature `f` may only feed
/// the block of model dimensions assigned to its group.
fn group_mask(groups: &[usize], d_model: usize) -> DMatrix<f64> {
    let n_groups = groups.iter().max().map_or(1, |g| g + 1);
    DMatrix::from_fn(groups.len(), d_model, |f, j| {
        if j * n_groups / d_model == groups[f] {
            1.0
        } else {
            0.0
        }
    })
}

/// Activations kept from the forward pass for the backward pass.
#[derive(Debug, Clone)]
struct LayerCache {
    input: DMatrix<f64>,
    q: DMatrix<f64>,
    k: DMatrix<f64>,
    v: DMatrix<f64>,
    probs: Vec<DMatrix<f64>>,
    concat: DMatrix<f64>,
    drop1: Option<DMatrix<f64>>,
    xhat1: DMatrix<f64>,
    inv1: Vec<f64>,
    h1: DMatrix<f64>,
    pre: DMatrix<f64>,
    act: DMatrix<f64>,
    drop2: Option<DMatrix<f64>>,
    xhat2: DMatrix<f64>,
    inv2: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ForwardCache {
    x: DMatrix<f64>,
    layers: Vec<LayerCache>,
    pooled: DMatrix<f64>,
    pub output: Vec<f64>,
}

impl ForwardCache {
    /// Attention probabilities per layer and head (`seq_len × seq_len`).
    pub fn attention(&self) -> Vec<Vec<DMatrix<f64>>> {
        self.layers.iter().map(|l| l.probs.clone()).collect()
    }
}

/// Transformer encoder regressor with its input scaler.
#[derive(Debug, Clone)]
pub struct EncoderModel {
    pub config: EncoderConfig,
    pub layout: ParamLayout,
    pub params: Vec<f64>,
    pub scaler: Scaler,
    idx: Indices,
    pe: Option<DMatrix<f64>>,
    embed_mask: Option<DMatrix<f64>>,
}

fn layer_norm(z: &DMatrix<f64>, gamma: &DMatrixView<f64>, beta: &DMatrixView<f64>) -> (DMatrix<f64>, DMatrix<f64>, Vec<f64>) {
    let (rows, cols) = z.shape();
    let mut xhat = DMatrix::zeros(rows, cols);
    let mut inv = Vec::with_capacity(rows);
    for r in 0..rows {
        let row = z.row(r);
        let mean = row.mean();
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
        let s = 1.0 / (var + LN_EPS).sqrt();
        inv.push(s);
        for c in 0..cols {
            xhat[(r, c)] = (z[(r, c)] - mean) * s;
        }
    }
    let mut y = xhat.clone();
    for r in 0..rows {
        for c in 0..cols {
            y[(r, c)] = y[(r, c)] * gamma[(0, c)] + beta[(0, c)];
        }
    }
    (y, xhat, inv)
}

/// Returns `dz` and accumulates `dgamma`, `dbeta`.
fn layer_norm_backward(
    dy: &DMatrix<f64>,
    xhat: &DMatrix<f64>,
    inv: &[f64],
    gamma: &DMatrixView<f64>,
    dgamma: &mut DMatrixViewMut<f64>,
    dbeta: &mut DMatrixViewMut<f64>,
) -> DMatrix<f64> {
    let (rows, cols) = dy.shape();
    let mut dz = DMatrix::zeros(rows, cols);
    let n = cols as f64;
    for r in 0..rows {
        let mut sum = 0.0;
        let mut sum_x = 0.0;
        for c in 0..cols {
            dgamma[(0, c)] += dy[(r, c)] * xhat[(r, c)];
            dbeta[(0, c)] += dy[(r, c)];
            let g = dy[(r, c)] * gamma[(0, c)];
            sum += g;
            sum_x += g * xhat[(r, c)];
        }
        for c in 0..cols {
            let g = dy[(r, c)] * gamma[(0, c)];
            dz[(r, c)] = inv[r] * (g - sum / n - xhat[(r, c)] * sum_x / n);
        }
    }
    dz
}

fn add_bias(m: &mut DMatrix<f64>, b: &DMatrixView<f64>) {
    for mut row in m.row_iter_mut() {
        row += b;
    }
}

fn col_sums_into(m: &DMatrix<f64>, out: &mut DMatrixViewMut<f64>) {
    for c in 0..m.ncols() {
        out[(0, c)] += m.column(c).sum();
    }
}

fn dropout_mask(rows: usize, cols: usize, rate: f64, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let keep = 1.0 / (1.0 - rate);
    DMatrix::from_fn(rows, cols, |_, _| if rng.random::<f64>() < rate { 0.0 } else { keep })
}

impl EncoderModel {
    /// Fan-in scaled uniform weights, zero biases, unit layer-norm gains.
    pub fn new(config: EncoderConfig, seed: u64) -> Result<Self, EstimatorError> {
        config.validate()?;
        let (layout, idx) = build_layout(&config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![0.0; layout.total];
        for t in &layout.tensors {
            let name = t.name.as_str();
            let slice = &mut params[t.range()];
            if name.ends_with("gamma") {
                slice.fill(1.0);
            } else if t.rows > 1 {
                let bound = 1.0 / (t.rows as f64).sqrt();
                for v in slice.iter_mut() {
                    *v = rng.random_range(-bound..bound);
                }
            }
        }
        let mut model = Self {
            scaler: Scaler::identity(config.n_features),
            pe: config
                .positional_encoding
                .then(|| positional_encoding(config.seq_len, config.d_model)),
            embed_mask: config
                .feature_groups
                .as_ref()
                .map(|g| group_mask(g, config.d_model)),
            config,
            layout,
            params,
            idx,
        };
        if let Some(mask) = &model.embed_mask {
            let t = model.layout.tensors[model.idx.embed_w].clone();
            for (p, m) in model.params[t.range()].iter_mut().zip(mask.iter()) {
                *p *= m;
            }
        }
        Ok(model)
    }

    /// Rebuilds a model around stored parameters.
    pub fn from_parts(config: EncoderConfig, params: Vec<f64>, scaler: Scaler) -> Result<Self, EstimatorError> {
        let mut m = Self::new(config, 0)?;
        if params.len() != m.layout.total {
            return Err(EstimatorError::Shape(format!(
                "expected {} parameters, got {}",
                m.layout.total,
                params.len()
            )));
        }
        if scaler.mean.len() != m.config.n_features {
            return Err(EstimatorError::Shape("scaler width mismatch".into()));
        }
        m.params = params;
        m.scaler = scaler;
        Ok(m)
    }

    pub fn n_params(&self) -> usize {
        self.layout.total
    }

    fn spec(&self, i: usize) -> &TensorSpec {
        &self.layout.tensors[i]
    }

    fn w(&self, i: usize) -> DMatrixView<'_, f64> {
        let t = self.spec(i);
        DMatrixView::from_slice(&self.params[t.range()], t.rows, t.cols)
    }

    /// Standardised input matrix for a row-major `seq_len × n_features` window.
    pub fn prepare(&self, features: &[f64]) -> Result<DMatrix<f64>, EstimatorError> {
        let (l, f) = (self.config.seq_len, self.config.n_features);
        if features.len() != l * f {
            return Err(EstimatorError::Shape(format!(
                "expected {l}×{f} = {} inputs, got {}",
                l * f,
                features.len()
            )));
        }
        let mut x = DMatrix::from_row_slice(l, f, features);
        self.scaler.apply(&mut x);
        Ok(x)
    }

    /// Prediction for one window (dropout off).
    pub fn predict(&self, features: &[f64]) -> Result<Vec<f64>, EstimatorError> {
        let x = self.prepare(features)?;
        Ok(self.forward(&x, None).output)
    }

    /// Forward pass on a prepared input. Dropout is applied only when an
    /// RNG is supplied and the configured rate is positive.
    pub fn forward(&self, x: &DMatrix<f64>, mut rng: Option<&mut ChaCha8Rng>) -> ForwardCache {
        let cfg = &self.config;
        let (l, d) = (cfg.seq_len, cfg.d_model);
        let dh = d / cfg.n_heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut h = match &self.embed_mask {
            Some(mask) => x * self.w(self.idx.embed_w).component_mul(mask),
            None => x * self.w(self.idx.embed_w),
        };
        add_bias(&mut h, &self.w(self.idx.embed_b));
        if let Some(pe) = &self.pe {
            h += pe;
        }
        let mut layers = Vec::with_capacity(cfg.n_layers);
        for li in &self.idx.layers {
            let input = h;
            let mut q = &input * self.w(li.wq);
            add_bias(&mut q, &self.w(li.bq));
            let mut k = &input * self.w(li.wk);
            add_bias(&mut k, &self.w(li.bk));
            let mut v = &input * self.w(li.wv);
            add_bias(&mut v, &self.w(li.bv));
            let mut concat = DMatrix::zeros(l, d);
            let mut probs = Vec::with_capacity(cfg.n_heads);
            for head in 0..cfg.n_heads {
                let c0 = head * dh;
                let qh = q.columns(c0, dh);
                let kh = k.columns(c0, dh);
                let mut s = qh * kh.transpose() * scale;
                for mut row in s.row_iter_mut() {
                    let m = row.max();
                    row.apply(|v| *v = (*v - m).exp());
                    let z = row.sum();
                    row /= z;
                }
                let oh = &s * v.columns(c0, dh);
                concat.columns_mut(c0, dh).copy_from(&oh);
                probs.push(s);
            }
            let mut attn = &concat * self.w(li.wo);
            add_bias(&mut attn, &self.w(li.bo));
            let drop1 = match rng.as_deref_mut() {
                Some(r) if cfg.dropout > 0.0 => Some(dropout_mask(l, d, cfg.dropout, r)),
                _ => None,
            };
            if let Some(m) = &drop1 {
                attn.component_mul_assign(m);
            }
            let z1 = &input + attn;
            let (h1, xhat1, inv1) = layer_norm(&z1, &self.w(li.ln1_g), &self.w(li.ln1_b));
            let mut pre = &h1 * self.w(li.w1);
            add_bias(&mut pre, &self.w(li.b1));
            let act = pre.map(gelu);
            let mut ffn = &act * self.w(li.w2);
            add_bias(&mut ffn, &self.w(li.b2));
            let drop2 = match rng.as_deref_mut() {
                Some(r) if cfg.dropout > 0.0 => Some(dropout_mask(l, d, cfg.dropout, r)),
                _ => None,
            };
            if let Some(m) = &drop2 {
                ffn.component_mul_assign(m);
            }
            let z2 = &h1 + ffn;
            let (h2, xhat2, inv2) = layer_norm(&z2, &self.w(li.ln2_g), &self.w(li.ln2_b));
            layers.push(LayerCache {
                input,
                q,
                k,
                v,
                probs,
                concat,
                drop1,
                xhat1,
                inv1,
                h1,
                pre,
                act,
                drop2,
                xhat2,
                inv2,
            });
            h = h2;
        }
        let pooled = match cfg.pooling {
            Pooling::Mean => DMatrix::from_fn(1, d, |_, c| h.column(c).mean()),
            Pooling::Last => h.rows(l - 1, 1).into_owned(),
        };
        let mut out = &pooled * self.w(self.idx.head_w);
        add_bias(&mut out, &self.w(self.idx.head_b));
        ForwardCache {
            x: x.clone(),
            layers,
            pooled,
            output: out.iter().copied().collect(),
        }
    }

    /// Accumulates into `grad` the gradient of a scalar loss whose
    /// derivative with respect to the output is `dy`.
    pub fn backward(&self, cache: &ForwardCache, dy: &[f64], grad: &mut [f64]) {
        let cfg = &self.config;
        let (l, d) = (cfg.seq_len, cfg.d_model);
        let dh = d / cfg.n_heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let specs = &self.layout.tensors;
        // Split the gradient buffer into per-tensor views.
        let mut views: Vec<Option<DMatrixViewMut<f64>>> = Vec::with_capacity(specs.len());
        {
            let mut rest: &mut [f64] = grad;
            let mut consumed = 0;
            for t in specs {
                let (_, tail) = rest.split_at_mut(t.offset - consumed);
                let (head, tail) = tail.split_at_mut(t.len());
                views.push(Some(DMatrixViewMut::from_slice(head, t.rows, t.cols)));
                rest = tail;
                consumed = t.offset + t.len();
            }
        }
        let mut g = |i: usize| views[i].take().expect("each tensor visited once");

        let dy = DMatrix::from_row_slice(1, cfg.n_outputs, dy);
        let mut gw = g(self.idx.head_w);
        gw += cache.pooled.transpose() * &dy;
        let mut gb = g(self.idx.head_b);
        gb += &dy;
        let dpooled = &dy * self.w(self.idx.head_w).transpose();
        let mut dh_mat = DMatrix::zeros(l, d);
        match cfg.pooling {
            Pooling::Mean => {
                for r in 0..l {
                    dh_mat.row_mut(r).copy_from(&(&dpooled / l as f64));
                }
            }
            Pooling::Last => dh_mat.row_mut(l - 1).copy_from(&dpooled),
        }

        for (li, lc) in self.idx.layers.iter().zip(&cache.layers).rev() {
            // second sub-layer
            let mut dg2 = g(li.ln2_g);
            let mut db2n = g(li.ln2_b);
            let dz2 = layer_norm_backward(&dh_mat, &lc.xhat2, &lc.inv2, &self.w(li.ln2_g), &mut dg2, &mut db2n);
            let mut dh1 = dz2.clone();
            let mut dffn = dz2;
            if let Some(m) = &lc.drop2 {
                dffn.component_mul_assign(m);
            }
            let mut gw2 = g(li.w2);
            gw2 += lc.act.transpose() * &dffn;
            col_sums_into(&dffn, &mut g(li.b2));
            let dact = &dffn * self.w(li.w2).transpose();
            let dpre = dact.zip_map(&lc.pre, |a, p| a * gelu_grad(p));
            let mut gw1 = g(li.w1);
            gw1 += lc.h1.transpose() * &dpre;
            col_sums_into(&dpre, &mut g(li.b1));
            dh1 += &dpre * self.w(li.w1).transpose();

            // first sub-layer
            let mut dg1 = g(li.ln1_g);
            let mut db1n = g(li.ln1_b);
            let dz1 = layer_norm_backward(&dh1, &lc.xhat1, &lc.inv1, &self.w(li.ln1_g), &mut dg1, &mut db1n);
            let mut dinput = dz1.clone();
            let mut dattn = dz1;
            if let Some(m) = &lc.drop1 {
                dattn.component_mul_assign(m);
            }
            let mut gwo = g(li.wo);
            gwo += lc.concat.transpose() * &dattn;
            col_sums_into(&dattn, &mut g(li.bo));
            let dconcat = &dattn * self.w(li.wo).transpose();
            let mut dq = DMatrix::zeros(l, d);
            let mut dk = DMatrix::zeros(l, d);
            let mut dv = DMatrix::zeros(l, d);
            for (head, p) in lc.probs.iter().enumerate() {
                let c0 = head * dh;
                let doh = dconcat.columns(c0, dh);
                let dp = doh * lc.v.columns(c0, dh).transpose();
                dv.columns_mut(c0, dh).copy_from(&(p.transpose() * doh));
                let mut ds = dp.component_mul(p);
                for r in 0..l {
                    let rs = ds.row(r).sum();
                    for c in 0..l {
                        ds[(r, c)] -= p[(r, c)] * rs;
                    }
                }
                ds *= scale;
                dq.columns_mut(c0, dh).copy_from(&(&ds * lc.k.columns(c0, dh)));
                dk.columns_mut(c0, dh).copy_from(&(ds.transpose() * lc.q.columns(c0, dh)));
            }
            let it = lc.input.transpose();
            for (dm, w, b) in [(&dq, li.wq, li.bq), (&dk, li.wk, li.bk), (&dv, li.wv, li.bv)] {
                let mut gw = g(w);
                gw += &it * dm;
                col_sums_into(dm, &mut g(b));
                dinput += dm * self.w(w).transpose();
            }
            dh_mat = dinput;
        }

        let mut ge = g(self.idx.embed_w);
        let mut de = cache.x.transpose() * &dh_mat;
        if let Some(mask) = &self.embed_mask {
            de.component_mul_assign(mask);
        }
        ge += de;
        col_sums_into(&dh_mat, &mut g(self.idx.embed_b));
    }

    /// Mean-squared error over a batch, scaled by `loss_scale`, with its
    /// gradient. Dropout masks are drawn from `dropout_seed` per sample.
    pub fn loss_and_gradient(
        &self,
        inputs: &[&DMatrix<f64>],
        targets: &[&[f64]],
        loss_scale: f64,
        dropout_seed: Option<u64>,
    ) -> (f64, Vec<f64>) {
        let p = self.config.n_outputs;
        let denom = (inputs.len() * p) as f64;
        let mut grad = vec![0.0; self.layout.total];
        let mut loss = 0.0;
        for (i, (x, t)) in inputs.iter().zip(targets).enumerate() {
            let mut rng = dropout_seed.map(|s| ChaCha8Rng::seed_from_u64(s ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)));
            let cache = self.forward(x, rng.as_mut());
            let mut dy = vec![0.0; p];
            for j in 0..p {
                let r = cache.output[j] - t[j];
                loss += r * r;
                dy[j] = loss_scale * 2.0 * r / denom;
            }
            self.backward(&cache, &dy, &mut grad);
        }
        (loss_scale * loss / denom, grad)
    }
}
