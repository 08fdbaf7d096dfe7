use ndarray::{ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2};

use super::{NetConfig, Role};

/// A rows x cols block inside a flat parameter buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct TensorRef {
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl TensorRef {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }

    pub fn mat<'a>(&self, buf: &'a [f64]) -> ArrayView2<'a, f64> {
        ArrayView2::from_shape((self.rows, self.cols), &buf[self.range()]).expect("layout")
    }

    pub fn mat_mut<'a>(&self, buf: &'a mut [f64]) -> ArrayViewMut2<'a, f64> {
        ArrayViewMut2::from_shape((self.rows, self.cols), &mut buf[self.range()]).expect("layout")
    }

    pub fn vec<'a>(&self, buf: &'a [f64]) -> ArrayView1<'a, f64> {
        ArrayView1::from(&buf[self.range()])
    }

    pub fn vec_mut<'a>(&self, buf: &'a mut [f64]) -> ArrayViewMut1<'a, f64> {
        ArrayViewMut1::from(&mut buf[self.range()])
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct LinearIdx {
    /// `out x in`
    pub w: TensorRef,
    pub b: Option<TensorRef>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct BnIdx {
    pub gamma: TensorRef,
    pub beta: TensorRef,
    /// Running mean and variance inside the running-statistics buffer.
    pub mean: TensorRef,
    pub var: TensorRef,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct BlockIdx {
    pub wq: TensorRef,
    pub wk: TensorRef,
    pub wv: TensorRef,
    pub bn1: BnIdx,
    pub ff1: LinearIdx,
    pub ff2: LinearIdx,
    pub bn2: BnIdx,
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum HeadIdx {
    Actor {
        fuse_node: LinearIdx,
        fuse_graph: LinearIdx,
        key: LinearIdx,
        query: LinearIdx,
    },
    Critic {
        fuse_node: LinearIdx,
        fuse_graph: LinearIdx,
        hidden: LinearIdx,
        out: LinearIdx,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
    pub(crate) init: Init,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Init {
    FanIn(usize),
    One,
    Zero,
}

#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub tensors: Vec<TensorSpec>,
    pub running: Vec<TensorSpec>,
    pub n_weights: usize,
    pub n_running: usize,
    pub embed: LinearIdx,
    pub blocks: Vec<BlockIdx>,
    pub head: HeadIdx,
}

struct Builder {
    tensors: Vec<TensorSpec>,
    running: Vec<TensorSpec>,
    n_weights: usize,
    n_running: usize,
}

impl Builder {
    fn tensor(&mut self, name: String, rows: usize, cols: usize, init: Init) -> TensorRef {
        let t = TensorRef {
            offset: self.n_weights,
            rows,
            cols,
        };
        self.n_weights += t.len();
        self.tensors.push(TensorSpec {
            name,
            rows,
            cols,
            offset: t.offset,
            init,
        });
        t
    }

    fn running(&mut self, name: String, len: usize, init: Init) -> TensorRef {
        let t = TensorRef {
            offset: self.n_running,
            rows: 1,
            cols: len,
        };
        self.n_running += len;
        self.running.push(TensorSpec {
            name,
            rows: 1,
            cols: len,
            offset: t.offset,
            init,
        });
        t
    }

    fn linear(&mut self, name: &str, input: usize, output: usize, bias: bool) -> LinearIdx {
        let w = self.tensor(format!("{name}.weight"), output, input, Init::FanIn(input));
        let b = bias.then(|| self.tensor(format!("{name}.bias"), 1, output, Init::FanIn(input)));
        LinearIdx { w, b }
    }

    fn bn(&mut self, name: &str, width: usize) -> BnIdx {
        BnIdx {
            gamma: self.tensor(format!("{name}.scale"), 1, width, Init::One),
            beta: self.tensor(format!("{name}.shift"), 1, width, Init::Zero),
            mean: self.running(format!("{name}.running_mean"), width, Init::Zero),
            var: self.running(format!("{name}.running_var"), width, Init::One),
        }
    }
}

impl Layout {
    pub fn new(cfg: &NetConfig, role: Role) -> Self {
        let d = cfg.d_model;
        let mut b = Builder {
            tensors: Vec::new(),
            running: Vec::new(),
            n_weights: 0,
            n_running: 0,
        };
        let embed = b.linear("embed", cfg.feature_dim, d, true);
        let blocks = (0..cfg.n_blocks)
            .map(|k| {
                let p = format!("block{k}");
                BlockIdx {
                    wq: b.tensor(format!("{p}.attn.query"), d, d, Init::FanIn(d)),
                    wk: b.tensor(format!("{p}.attn.key"), d, d, Init::FanIn(d)),
                    wv: b.tensor(format!("{p}.attn.value"), d, d, Init::FanIn(d)),
                    bn1: b.bn(&format!("{p}.norm1"), d),
                    ff1: b.linear(&format!("{p}.ff1"), d, cfg.ff_hidden, true),
                    ff2: b.linear(&format!("{p}.ff2"), cfg.ff_hidden, d, true),
                    bn2: b.bn(&format!("{p}.norm2"), d),
                }
            })
            .collect();
        let head = match role {
            Role::Actor => HeadIdx::Actor {
                fuse_node: b.linear("fuse_node", d, d, true),
                fuse_graph: b.linear("fuse_graph", d, d, true),
                key: b.linear("compat_key", d, d, true),
                query: b.linear("compat_query", d, d, true),
            },
            Role::Critic => HeadIdx::Critic {
                fuse_node: b.linear("fuse_node", d, d, true),
                fuse_graph: b.linear("fuse_graph", d, d, true),
                hidden: b.linear("value_hidden", d, cfg.head_hidden, true),
                out: b.linear("value_out", cfg.head_hidden, 1, true),
            },
        };
        Layout {
            tensors: b.tensors,
            running: b.running,
            n_weights: b.n_weights,
            n_running: b.n_running,
            embed,
            blocks,
            head,
        }
    }
}
