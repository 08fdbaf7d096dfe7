use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView2, Axis, Zip};

use super::dist::PairDistribution;
use super::features::{pe_table, Batch};
use super::layout::{BnIdx, HeadIdx, LinearIdx, TensorRef};
use super::params::Network;
use super::{NormMode, Role};
use crate::error::{Error, Result};
use crate::routing::{Action, PairMask};

/// Batch statistics gathered by a training-mode forward pass, one
/// `(mean, biased variance, row count)` triple per normalization layer.
#[derive(Debug, Clone, PartialEq)]
pub struct BnStats {
    pub(crate) layers: Vec<(Vec<f64>, Vec<f64>, usize)>,
}

#[derive(Debug, Clone)]
struct BnCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
}

#[derive(Debug, Clone)]
struct BlockCache {
    h: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    attn: Vec<Array2<f64>>,
    bn1: BnCache,
    n1: Array2<f64>,
    f1: Array2<f64>,
    r: Array2<f64>,
    bn2: BnCache,
}

#[derive(Debug, Clone)]
struct TrunkCache {
    x: Array2<f64>,
    blocks: Vec<BlockCache>,
    out: Array2<f64>,
    mode: NormMode,
    size: usize,
    len: usize,
}

#[derive(Debug, Clone)]
struct FuseCache {
    og: Array2<f64>,
    hc: Array2<f64>,
}

#[derive(Debug, Clone)]
struct ActorCache {
    trunk: TrunkCache,
    fuse: FuseCache,
    argmax: Vec<usize>,
    kc: Array2<f64>,
    qc: Array2<f64>,
    tanh: Vec<Array2<f64>>,
}

/// Actor forward result: one distribution per sequence plus everything the
/// backward pass needs.
#[derive(Debug, Clone)]
pub struct ActorOutput {
    pub dists: Vec<PairDistribution>,
    /// Present in [`NormMode::Train`].
    pub stats: Option<BnStats>,
    cache: ActorCache,
}

#[derive(Debug, Clone)]
struct CriticCache {
    trunk: TrunkCache,
    fuse: FuseCache,
    pre: Array2<f64>,
    hidden: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct CriticOutput {
    pub values: Vec<f64>,
    pub stats: Option<BnStats>,
    cache: CriticCache,
}

impl TrunkCache {
    fn relu_pattern(&self, out: &mut Vec<usize>) {
        for b in &self.blocks {
            out.extend(b.f1.iter().map(|&v| usize::from(v > 0.0)));
        }
    }
}

impl ActorOutput {
    /// Active ReLU units and max-pool winners; equal patterns mean two
    /// forward passes lie on the same smooth piece.
    pub(crate) fn kink_pattern(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.cache.trunk.relu_pattern(&mut out);
        out.extend_from_slice(&self.cache.argmax);
        out
    }
}

impl CriticOutput {
    pub(crate) fn kink_pattern(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.cache.trunk.relu_pattern(&mut out);
        out.extend(self.cache.pre.iter().map(|&v| usize::from(v > 0.0)));
        out
    }
}

fn linear(x: &Array2<f64>, idx: LinearIdx, w: &[f64]) -> Array2<f64> {
    let mut y = x.dot(&idx.w.mat(w).t());
    if let Some(b) = idx.b {
        y += &b.vec(w);
    }
    y
}

/// Accumulates weight and bias gradients of `y = x W^T + b` and returns dx.
fn linear_back(
    x: &Array2<f64>,
    dy: &Array2<f64>,
    idx: LinearIdx,
    w: &[f64],
    grad: &mut [f64],
) -> Array2<f64> {
    accumulate_weight(idx.w, dy.view(), x.view(), grad);
    if let Some(b) = idx.b {
        b.vec_mut(grad).scaled_add(1.0, &dy.sum_axis(Axis(0)));
    }
    dy.dot(&idx.w.mat(w))
}

fn accumulate_weight(t: TensorRef, dy: ArrayView2<f64>, x: ArrayView2<f64>, grad: &mut [f64]) {
    let mut g = t.mat_mut(grad);
    general_mat_mul(1.0, &dy.t(), &x, 1.0, &mut g);
}

fn relu(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| v.max(0.0))
}

fn relu_back(pre: &Array2<f64>, dy: &mut Array2<f64>) {
    Zip::from(dy).and(pre).for_each(|d, &p| {
        if p <= 0.0 {
            *d = 0.0;
        }
    });
}

fn bn_forward(
    z: &Array2<f64>,
    idx: BnIdx,
    net: &Network,
    mode: NormMode,
    stats: &mut Vec<(Vec<f64>, Vec<f64>, usize)>,
) -> (Array2<f64>, BnCache) {
    let eps = net.config().bn_eps;
    let (mean, var) = match mode {
        NormMode::Train => {
            let mean = z.mean_axis(Axis(0)).expect("non-empty batch");
            let var = z.var_axis(Axis(0), 0.0);
            stats.push((mean.to_vec(), var.to_vec(), z.nrows()));
            (mean, var)
        }
        NormMode::Eval => {
            let r = net.running_stats();
            (idx.mean.vec(r).to_owned(), idx.var.vec(r).to_owned())
        }
    };
    let inv_std = var.mapv(|v| 1.0 / (v + eps).sqrt());
    let xhat = (z - &mean) * &inv_std;
    let w = net.weights();
    let out = &xhat * &idx.gamma.vec(w) + &idx.beta.vec(w);
    (out, BnCache { xhat, inv_std })
}

fn bn_backward(
    dout: &Array2<f64>,
    cache: &BnCache,
    idx: BnIdx,
    w: &[f64],
    grad: &mut [f64],
    mode: NormMode,
) -> Array2<f64> {
    idx.gamma
        .vec_mut(grad)
        .scaled_add(1.0, &(dout * &cache.xhat).sum_axis(Axis(0)));
    idx.beta.vec_mut(grad).scaled_add(1.0, &dout.sum_axis(Axis(0)));
    let dxhat = dout * &idx.gamma.vec(w);
    match mode {
        NormMode::Eval => dxhat * &cache.inv_std,
        NormMode::Train => {
            let m = dout.nrows() as f64;
            let sum = dxhat.sum_axis(Axis(0));
            let dot = (&dxhat * &cache.xhat).sum_axis(Axis(0));
            let centered = dxhat * m - &sum - &cache.xhat * &dot;
            centered * &(&cache.inv_std / m)
        }
    }
}

fn rows(b: usize, len: usize) -> ndarray::SliceInfo<[ndarray::SliceInfoElem; 2], ndarray::Ix2, ndarray::Ix2> {
    s![b * len..(b + 1) * len, ..]
}

fn row_softmax(mut m: Array2<f64>) -> Array2<f64> {
    for mut row in m.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let z = row.sum();
        row /= z;
    }
    m
}

impl Network {
    fn check_batch(&self, batch: &Batch) -> Result<()> {
        if batch.feature_dim() != self.config().feature_dim {
            return Err(Error::LengthMismatch {
                what: "feature dimension",
                left: batch.feature_dim(),
                right: self.config().feature_dim,
            });
        }
        Ok(())
    }

    fn trunk_forward(&self, batch: &Batch, mode: NormMode) -> Result<(TrunkCache, Option<BnStats>)> {
        self.check_batch(batch)?;
        let w = self.weights();
        let d = self.config().d_model;
        let (size, len) = (batch.size, batch.len);
        let scale = 1.0 / (d as f64).sqrt();
        let mut stats = Vec::new();

        let mut h = linear(&batch.x, self.layout.embed, w);
        let pe = pe_table(len, d);
        for b in 0..size {
            let mut rows_b = h.slice_mut(rows(b, len));
            rows_b += &pe;
        }

        let mut blocks = Vec::with_capacity(self.layout.blocks.len());
        for blk in &self.layout.blocks {
            let q = h.dot(&blk.wq.mat(w).t());
            let k = h.dot(&blk.wk.mat(w).t());
            let v = h.dot(&blk.wv.mat(w).t());
            let mut att = Array2::zeros(h.raw_dim());
            let mut attn = Vec::with_capacity(size);
            for b in 0..size {
                let sl = rows(b, len);
                let scores = q.slice(sl).dot(&k.slice(sl).t()) * scale;
                let a = row_softmax(scores);
                att.slice_mut(sl).assign(&a.dot(&v.slice(sl)));
                attn.push(a);
            }
            let z1 = &h + &att;
            let (n1, bn1) = bn_forward(&z1, blk.bn1, self, mode, &mut stats);
            let f1 = linear(&n1, blk.ff1, w);
            let r = relu(&f1);
            let f2 = linear(&r, blk.ff2, w);
            let z2 = &n1 + &f2;
            let (out, bn2) = bn_forward(&z2, blk.bn2, self, mode, &mut stats);
            blocks.push(BlockCache {
                h,
                q,
                k,
                v,
                attn,
                bn1,
                n1,
                f1,
                r,
                bn2,
            });
            h = out;
        }
        let stats = (mode == NormMode::Train).then_some(BnStats { layers: stats });
        Ok((
            TrunkCache {
                x: batch.x.clone(),
                blocks,
                out: h,
                mode,
                size,
                len,
            },
            stats,
        ))
    }

    fn trunk_backward(&self, cache: &TrunkCache, dout: Array2<f64>, grad: &mut [f64]) {
        let w = self.weights();
        let d = self.config().d_model;
        let scale = 1.0 / (d as f64).sqrt();
        let len = cache.len;
        let mut dh = dout;
        for (blk, c) in self.layout.blocks.iter().zip(cache.blocks.iter()).rev() {
            let dz2 = bn_backward(&dh, &c.bn2, blk.bn2, w, grad, cache.mode);
            let mut dr = linear_back(&c.r, &dz2, blk.ff2, w, grad);
            relu_back(&c.f1, &mut dr);
            let dn1 = linear_back(&c.n1, &dr, blk.ff1, w, grad) + &dz2;
            let dz1 = bn_backward(&dn1, &c.bn1, blk.bn1, w, grad, cache.mode);

            let mut dq = Array2::zeros(c.q.raw_dim());
            let mut dk = Array2::zeros(c.k.raw_dim());
            let mut dv = Array2::zeros(c.v.raw_dim());
            for (b, a) in c.attn.iter().enumerate() {
                let sl = rows(b, len);
                let datt = dz1.slice(sl);
                let da = datt.dot(&c.v.slice(sl).t());
                dv.slice_mut(sl).assign(&a.t().dot(&datt));
                let inner = (&da * a).sum_axis(Axis(1)).insert_axis(Axis(1));
                let ds = (da - &inner) * a * scale;
                dq.slice_mut(sl).assign(&ds.dot(&c.k.slice(sl)));
                dk.slice_mut(sl).assign(&ds.t().dot(&c.q.slice(sl)));
            }
            accumulate_weight(blk.wq, dq.view(), c.h.view(), grad);
            accumulate_weight(blk.wk, dk.view(), c.h.view(), grad);
            accumulate_weight(blk.wv, dv.view(), c.h.view(), grad);
            dh = dz1 + dq.dot(&blk.wq.mat(w)) + dk.dot(&blk.wk.mat(w)) + dv.dot(&blk.wv.mat(w));
        }
        linear_back(&cache.x, &dh, self.layout.embed, w, grad);
    }

    fn fuse_forward(&self, o: &Array2<f64>, og: Array2<f64>, node: LinearIdx, graph: LinearIdx, len: usize) -> FuseCache {
        let w = self.weights();
        let mut hc = linear(o, node, w);
        let g = linear(&og, graph, w);
        for (b, grow) in g.rows().into_iter().enumerate() {
            let mut rows_b = hc.slice_mut(rows(b, len));
            rows_b += &grow;
        }
        FuseCache { og, hc }
    }

    /// Returns (d node embeddings, d graph embedding).
    fn fuse_backward(
        &self,
        o: &Array2<f64>,
        fuse: &FuseCache,
        dhc: &Array2<f64>,
        node: LinearIdx,
        graph: LinearIdx,
        size: usize,
        len: usize,
        grad: &mut [f64],
    ) -> (Array2<f64>, Array2<f64>) {
        let w = self.weights();
        let d = dhc.ncols();
        let mut dg = Array2::zeros((size, d));
        for b in 0..size {
            dg.row_mut(b).assign(&dhc.slice(rows(b, len)).sum_axis(Axis(0)));
        }
        let dog = linear_back(&fuse.og, &dg, graph, w, grad);
        let do_ = linear_back(o, dhc, node, w, grad);
        (do_, dog)
    }

    fn role_check(&self, role: Role) -> Result<()> {
        if self.role() != role {
            return Err(Error::Config(format!("expected {role:?} network, got {:?}", self.role())));
        }
        Ok(())
    }

    /// Pair distributions for every sequence in the batch. Diagonal cells
    /// are always masked.
    pub fn actor_forward(&self, batch: &Batch, masks: &[PairMask], mode: NormMode) -> Result<ActorOutput> {
        self.role_check(Role::Actor)?;
        if masks.len() != batch.size {
            return Err(Error::LengthMismatch {
                what: "masks vs batch",
                left: masks.len(),
                right: batch.size,
            });
        }
        if let Some(m) = masks.iter().find(|m| m.size() != batch.len) {
            return Err(Error::LengthMismatch {
                what: "mask size vs sequence length",
                left: m.size(),
                right: batch.len,
            });
        }
        let HeadIdx::Actor {
            fuse_node,
            fuse_graph,
            key,
            query,
        } = self.layout.head
        else {
            unreachable!("actor layout")
        };
        let w = self.weights();
        let (size, len) = (batch.size, batch.len);
        let (trunk, stats) = self.trunk_forward(batch, mode)?;
        let o = &trunk.out;
        let d = o.ncols();
        let mut og = Array2::zeros((size, d));
        let mut argmax = vec![0usize; size * d];
        for b in 0..size {
            let ob = o.slice(rows(b, len));
            for c in 0..d {
                let (best, val) = ob
                    .column(c)
                    .iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |acc, (r, &v)| if v > acc.1 { (r, v) } else { acc });
                og[[b, c]] = val;
                argmax[b * d + c] = best;
            }
        }
        let fuse = self.fuse_forward(o, og, fuse_node, fuse_graph, len);
        let kc = linear(&fuse.hc, key, w);
        let qc = linear(&fuse.hc, query, w);
        let (clip, scale) = (self.config().clip, self.config().compat_scale);
        let mut dists = Vec::with_capacity(size);
        let mut tanh = Vec::with_capacity(size);
        for (b, mask) in masks.iter().enumerate() {
            let sl = rows(b, len);
            let t = kc.slice(sl).dot(&qc.slice(sl).t()).mapv(|y| (scale * y).tanh());
            let logits: Vec<f64> = t.iter().map(|&v| clip * v).collect();
            let mut mask = mask.clone();
            for i in 0..len {
                mask.set(i, i, false);
            }
            dists.push(PairDistribution::from_logits(logits, mask)?);
            tanh.push(t);
        }
        Ok(ActorOutput {
            dists,
            stats,
            cache: ActorCache {
                trunk,
                fuse,
                argmax,
                kc,
                qc,
                tanh,
            },
        })
    }

    /// Accumulates into `grad` the gradient of `sum_b weight[b] * log P_b(cell[b])`.
    pub fn actor_backward(&self, out: &ActorOutput, cells: &[Action], weight: &[f64], grad: &mut [f64]) -> Result<()> {
        self.role_check(Role::Actor)?;
        let HeadIdx::Actor {
            fuse_node,
            fuse_graph,
            key,
            query,
        } = self.layout.head
        else {
            unreachable!("actor layout")
        };
        let c = &out.cache;
        let (size, len) = (c.trunk.size, c.trunk.len);
        if cells.len() != size || weight.len() != size {
            return Err(Error::LengthMismatch {
                what: "actions vs batch",
                left: cells.len().min(weight.len()),
                right: size,
            });
        }
        for (dist, &a) in out.dists.iter().zip(cells) {
            dist.check(a)?;
        }
        let w = self.weights();
        let clip = self.config().clip * self.config().compat_scale;
        let d = c.kc.ncols();
        let mut dkc = Array2::zeros(c.kc.raw_dim());
        let mut dqc = Array2::zeros(c.qc.raw_dim());
        for b in 0..size {
            let p = out.dists[b].probs();
            let t = &c.tanh[b];
            let mut dy = Array2::from_shape_fn((len, len), |(i, j)| {
                let onehot = if i == cells[b].i && j == cells[b].j { 1.0 } else { 0.0 };
                weight[b] * (onehot - p[i * len + j]) * clip * (1.0 - t[[i, j]] * t[[i, j]])
            });
            for (cell, &ok) in dy.iter_mut().zip(out.dists[b].mask().cells()) {
                if !ok {
                    *cell = 0.0;
                }
            }
            let sl = rows(b, len);
            dkc.slice_mut(sl).assign(&dy.dot(&c.qc.slice(sl)));
            dqc.slice_mut(sl).assign(&dy.t().dot(&c.kc.slice(sl)));
        }
        let dhc = linear_back(&c.fuse.hc, &dkc, key, w, grad) + linear_back(&c.fuse.hc, &dqc, query, w, grad);
        let (mut do_, dog) = self.fuse_backward(&c.trunk.out, &c.fuse, &dhc, fuse_node, fuse_graph, size, len, grad);
        for b in 0..size {
            for col in 0..d {
                do_[[b * len + c.argmax[b * d + col], col]] += dog[[b, col]];
            }
        }
        self.trunk_backward(&c.trunk, do_, grad);
        Ok(())
    }

    /// State value of every sequence in the batch.
    pub fn critic_forward(&self, batch: &Batch, mode: NormMode) -> Result<CriticOutput> {
        self.role_check(Role::Critic)?;
        let HeadIdx::Critic {
            fuse_node,
            fuse_graph,
            hidden,
            out,
        } = self.layout.head
        else {
            unreachable!("critic layout")
        };
        let w = self.weights();
        let (size, len) = (batch.size, batch.len);
        let (trunk, stats) = self.trunk_forward(batch, mode)?;
        let o = &trunk.out;
        let mut og = Array2::zeros((size, o.ncols()));
        for b in 0..size {
            og.row_mut(b).assign(&o.slice(rows(b, len)).mean_axis(Axis(0)).expect("non-empty"));
        }
        let fuse = self.fuse_forward(o, og, fuse_node, fuse_graph, len);
        let pre = linear(&fuse.hc, hidden, w);
        let hid = relu(&pre);
        let u = linear(&hid, out, w);
        let values = (0..size)
            .map(|b| u.slice(rows(b, len)).mean().expect("non-empty"))
            .collect();
        Ok(CriticOutput {
            values,
            stats,
            cache: CriticCache {
                trunk,
                fuse,
                pre,
                hidden: hid,
            },
        })
    }

    /// Accumulates into `grad` the gradient of `sum_b weight[b] * v_b`.
    pub fn critic_backward(&self, out: &CriticOutput, weight: &[f64], grad: &mut [f64]) -> Result<()> {
        self.role_check(Role::Critic)?;
        let HeadIdx::Critic {
            fuse_node,
            fuse_graph,
            hidden,
            out: out_idx,
        } = self.layout.head
        else {
            unreachable!("critic layout")
        };
        let c = &out.cache;
        let (size, len) = (c.trunk.size, c.trunk.len);
        if weight.len() != size {
            return Err(Error::LengthMismatch {
                what: "weights vs batch",
                left: weight.len(),
                right: size,
            });
        }
        let w = self.weights();
        let du = Array2::from_shape_fn((size * len, 1), |(r, _)| weight[r / len] / len as f64);
        let mut dhid = linear_back(&c.hidden, &du, out_idx, w, grad);
        relu_back(&c.pre, &mut dhid);
        let dhc = linear_back(&c.fuse.hc, &dhid, hidden, w, grad);
        let (mut do_, dog) = self.fuse_backward(&c.trunk.out, &c.fuse, &dhc, fuse_node, fuse_graph, size, len, grad);
        for b in 0..size {
            let mut rows_b = do_.slice_mut(rows(b, len));
            rows_b.scaled_add(1.0 / len as f64, &dog.row(b));
        }
        self.trunk_backward(&c.trunk, do_, grad);
        Ok(())
    }
}

/// Evaluation-mode log-probability of the ordered cell `action` and its
/// gradient with respect to every actor weight.
pub fn log_prob_and_grad(
    net: &Network,
    features: &Array2<f64>,
    mask: &PairMask,
    action: Action,
) -> Result<(f64, Vec<f64>)> {
    let batch = Batch::single(features.clone())?;
    let out = net.actor_forward(&batch, std::slice::from_ref(mask), NormMode::Eval)?;
    let lp = out.dists[0].log_prob(action)?;
    let mut grad = net.zero_grad();
    net.actor_backward(&out, &[action], &[1.0], &mut grad)?;
    Ok((lp, grad))
}

/// Evaluation-mode state value and its gradient with respect to every
/// critic weight.
pub fn value_and_grad(net: &Network, features: &Array2<f64>) -> Result<(f64, Vec<f64>)> {
    let batch = Batch::single(features.clone())?;
    let out = net.critic_forward(&batch, NormMode::Eval)?;
    let mut grad = net.zero_grad();
    net.critic_backward(&out, &[1.0], &mut grad)?;
    Ok((out.values[0], grad))
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::super::NetConfig;
    use super::*;

    fn random_features(len: usize, f: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((len, f), |_| rng.gen())
    }

    fn net(role: Role, f: usize, d: usize, seed: u64) -> Network {
        Network::new(NetConfig::with_width(f, d), role, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    #[test]
    fn zero_weights_give_uniform_pairs_and_zero_value() {
        let actor = Network::zeros(NetConfig::with_width(2, 8), Role::Actor).unwrap();
        let x = random_features(3, 2, 0);
        let out = actor
            .actor_forward(&Batch::single(x.clone()).unwrap(), &[PairMask::off_diagonal(3)], NormMode::Eval)
            .unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expected = if i == j { 0.0 } else { 1.0 / 6.0 };
                assert!((out.dists[0].prob(i, j) - expected).abs() < 1e-15);
            }
        }
        let critic = Network::zeros(NetConfig::with_width(2, 8), Role::Critic).unwrap();
        let (v, g) = value_and_grad(&critic, &x).unwrap();
        assert_eq!(v, 0.0);
        assert!(g.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn eval_mode_is_independent_of_batch_mates() {
        let actor = net(Role::Actor, 7, 8, 1);
        let a = random_features(6, 7, 2);
        let b = random_features(6, 7, 3);
        let masks = vec![PairMask::off_diagonal(6); 2];
        let alone = actor
            .actor_forward(&Batch::single(a.clone()).unwrap(), &masks[..1], NormMode::Eval)
            .unwrap();
        let paired = actor
            .actor_forward(&Batch::new(&[b.clone(), a.clone()]).unwrap(), &masks, NormMode::Eval)
            .unwrap();
        for (x, y) in alone.dists[0].probs().iter().zip(paired.dists[1].probs()) {
            assert!((x - y).abs() < 1e-14);
        }
        let trained = actor
            .actor_forward(&Batch::new(&[b, a]).unwrap(), &masks, NormMode::Train)
            .unwrap();
        assert_eq!(trained.stats.unwrap().layers.len(), 6);
    }

    #[test]
    fn value_is_position_sensitive_and_batch_duplicable() {
        let critic = net(Role::Critic, 2, 8, 5);
        let x = random_features(5, 2, 6);
        let mut y = x.clone();
        for r in 0..5 {
            y.row_mut(r).assign(&x.row((r + 2) % 5));
        }
        let (vx, _) = value_and_grad(&critic, &x).unwrap();
        let (vy, _) = value_and_grad(&critic, &y).unwrap();
        assert!((vx - vy).abs() > 1e-9);
        let both = critic
            .critic_forward(&Batch::new(&[x.clone(), x]).unwrap(), NormMode::Eval)
            .unwrap();
        assert_eq!(both.values[0], vx);
        assert_eq!(both.values[1], vx);
    }

    #[test]
    fn batch_gradient_is_sum_of_single_gradients_in_eval_mode() {
        let critic = net(Role::Critic, 7, 8, 11);
        let items: Vec<_> = (0..3).map(|s| random_features(5, 7, 20 + s)).collect();
        let weights = [0.5, -1.0, 2.0];
        let out = critic
            .critic_forward(&Batch::new(&items).unwrap(), NormMode::Eval)
            .unwrap();
        let mut batched = critic.zero_grad();
        critic.critic_backward(&out, &weights, &mut batched).unwrap();
        let mut looped = critic.zero_grad();
        for (x, w) in items.iter().zip(weights) {
            let (_, g) = value_and_grad(&critic, x).unwrap();
            looped.iter_mut().zip(g).for_each(|(a, b)| *a += w * b);
        }
        for (a, b) in batched.iter().zip(&looped) {
            assert!((a - b).abs() <= 1e-10 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn score_function_identity() {
        let actor = net(Role::Actor, 2, 8, 13);
        let x = random_features(4, 2, 14);
        let mask = PairMask::off_diagonal(4);
        let out = actor
            .actor_forward(&Batch::single(x.clone()).unwrap(), &[mask.clone()], NormMode::Eval)
            .unwrap();
        let mut total = actor.zero_grad();
        let mut scale = 0.0f64;
        for i in 0..4 {
            for j in 0..4 {
                if i == j {
                    continue;
                }
                let p = out.dists[0].prob(i, j);
                let (_, g) = log_prob_and_grad(&actor, &x, &mask, Action { i, j }).unwrap();
                scale = scale.max(g.iter().fold(0.0f64, |m, v| m.max(v.abs())));
                total.iter_mut().zip(g).for_each(|(t, v)| *t += p * v);
            }
        }
        let worst = total.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(worst <= 1e-12 * scale.max(1.0), "{worst}");
    }

    #[test]
    fn masked_action_is_rejected() {
        let actor = net(Role::Actor, 2, 8, 1);
        let x = random_features(4, 2, 1);
        let mut mask = PairMask::off_diagonal(4);
        mask.forbid_pair(Action { i: 1, j: 2 });
        let r = log_prob_and_grad(&actor, &x, &mask, Action { i: 2, j: 1 });
        assert!(matches!(r, Err(Error::MaskedAction { .. })));
        let r = actor.actor_forward(&Batch::single(x).unwrap(), &[PairMask::none(4)], NormMode::Eval);
        assert!(matches!(r, Err(Error::NoFeasibleAction)));
    }
}
