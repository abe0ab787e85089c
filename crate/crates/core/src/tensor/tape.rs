use super::{mismatch, Result, Tensor, TensorError};
use crate::rng::SeededRng;

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

/// `tanh` through a single `exp`; saturates cleanly to ±1.
#[inline]
fn tanh(u: f64) -> f64 {
    1.0 - 2.0 / ((2.0 * u).exp() + 1.0)
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op {
    Leaf,
    MatMul { a: Var, b: Var },
    Bmm { a: Var, b: Var, trans_b: bool },
    Add { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Scale { a: Var, s: f64 },
    Softmax { a: Var, axis: usize },
    LayerNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<f64>, rstd: Vec<f64> },
    Gelu { a: Var },
    Dropout { a: Var, mask: Vec<f64> },
    Gather { a: Var, idx: Vec<usize> },
    Mean { a: Var, axis: usize },
    SumAll { a: Var },
    Concat { parts: Vec<Var>, axis: usize },
    Narrow { a: Var, axis: usize, start: usize },
    Reshape { a: Var },
    Permute { a: Var, perm: Vec<usize> },
    CrossEntropy { logits: Var, targets: Vec<usize>, probs: Vec<f64> },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Single-owner record of a forward computation.
///
/// Nodes are appended in execution order, so every node's parents precede it
/// and a reverse sweep visits each node once after all of its consumers.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, requires_grad });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient of a leaf after [`Tape::backward`], if any reached it.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads[v.0].as_deref()
    }

    pub fn grad_tensor(&self, v: Var) -> Option<Tensor> {
        let shape = self.shape(v).to_vec();
        self.grad(v).map(|g| Tensor::new(&shape, g.to_vec()).expect("grad matches value shape"))
    }

    fn push(&mut self, op_name: &'static str, value: Tensor, op: Op, parents: &[Var]) -> Result<Var> {
        if !value.all_finite() {
            return Err(TensorError::NonFinite { op: op_name });
        }
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node { value, op, requires_grad });
        self.grads.push(None);
        Ok(Var(self.nodes.len() - 1))
    }

    // ---- linear algebra -------------------------------------------------

    /// `a [.., k] × b [k, n] -> [.., n]`; leading dims of `a` are flattened into rows.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() < 2 || sb.len() != 2 || sa[sa.len() - 1] != sb[0] {
            return Err(mismatch("matmul", format!("{sa:?} x {sb:?}")));
        }
        let k = sb[0];
        let n = sb[1];
        let rows = self.value(a).numel() / k;
        let mut out = vec![0.0; rows * n];
        gemm(rows, k, n, self.value(a).data(), k, 1, self.value(b).data(), n, 1, &mut out, 0.0);
        let mut shape = sa[..sa.len() - 1].to_vec();
        shape.push(n);
        self.push("matmul", Tensor::new(&shape, out)?, Op::MatMul { a, b }, &[a, b])
    }

    /// Batched product `a [B, m, k] × b [B, k, n]`, or `× b[B, n, k]ᵀ` when `trans_b`.
    pub fn bmm(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] {
            return Err(mismatch("bmm", format!("{sa:?} x {sb:?}")));
        }
        let (batch, m, k) = (sa[0], sa[1], sa[2]);
        let (kb, n) = if trans_b { (sb[2], sb[1]) } else { (sb[1], sb[2]) };
        if kb != k {
            return Err(mismatch("bmm", format!("{sa:?} x {sb:?} (trans_b={trans_b})")));
        }
        let mut out = vec![0.0; batch * m * n];
        let (ad, bd) = (self.value(a).data(), self.value(b).data());
        for i in 0..batch {
            let ai = &ad[i * m * k..(i + 1) * m * k];
            let bi = &bd[i * k * n..(i + 1) * k * n];
            let ci = &mut out[i * m * n..(i + 1) * m * n];
            if trans_b {
                gemm(m, k, n, ai, k, 1, bi, 1, k, ci, 0.0);
            } else {
                gemm(m, k, n, ai, k, 1, bi, n, 1, ci, 0.0);
            }
        }
        self.push("bmm", Tensor::new(&[batch, m, n], out)?, Op::Bmm { a, b, trans_b }, &[a, b])
    }

    /// `x·w + bias` with `bias` broadcast over rows.
    pub fn linear(&mut self, x: Var, w: Var, bias: Var) -> Result<Var> {
        let y = self.matmul(x, w)?;
        self.add(y, bias)
    }

    // ---- elementwise ----------------------------------------------------

    /// Elementwise sum with right-aligned broadcasting of size-1 or missing dims.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out_shape = broadcast_shape(self.shape(a), self.shape(b)).ok_or_else(|| {
            mismatch("add", format!("{:?} + {:?}", self.shape(a), self.shape(b)))
        })?;
        let out = self.binary(a, b, &out_shape, |x, y| x + y);
        self.push("add", Tensor::new(&out_shape, out)?, Op::Add { a, b }, &[a, b])
    }

    /// Elementwise product with the same broadcasting rules as [`Tape::add`].
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out_shape = broadcast_shape(self.shape(a), self.shape(b)).ok_or_else(|| {
            mismatch("mul", format!("{:?} * {:?}", self.shape(a), self.shape(b)))
        })?;
        let out = self.binary(a, b, &out_shape, |x, y| x * y);
        self.push("mul", Tensor::new(&out_shape, out)?, Op::Mul { a, b }, &[a, b])
    }

    fn binary(&self, a: Var, b: Var, out_shape: &[usize], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        let (ta, tb) = (self.value(a), self.value(b));
        let ia = BroadcastIndex::new(out_shape, ta.shape());
        let ib = BroadcastIndex::new(out_shape, tb.shape());
        let n: usize = out_shape.iter().product();
        let (da, db) = (ta.data(), tb.data());
        let mut out = Vec::with_capacity(n);
        pair_each(&ia, &ib, n, |_, ja, jb| out.push(f(da[ja], db[jb])));
        out
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        let t = self.value(a);
        let out = t.data().iter().map(|v| v * s).collect();
        let shape = t.shape().to_vec();
        self.push("scale", Tensor::new(&shape, out)?, Op::Scale { a, s }, &[a])
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let out = t
            .data()
            .iter()
            .map(|&x| 0.5 * x * (1.0 + tanh(GELU_C * (x + GELU_A * x * x * x))))
            .collect();
        let shape = t.shape().to_vec();
        self.push("gelu", Tensor::new(&shape, out)?, Op::Gelu { a }, &[a])
    }

    /// Inverted dropout. Identity unless `rng` is given and `p > 0`.
    pub fn dropout(&mut self, a: Var, p: f64, rng: Option<&mut SeededRng>) -> Result<Var> {
        let rng = match rng {
            Some(r) if p > 0.0 => r,
            _ => return Ok(a),
        };
        if p >= 1.0 {
            return Err(mismatch("dropout", format!("p must be < 1, got {p}")));
        }
        let keep = 1.0 / (1.0 - p);
        let t = self.value(a);
        let mask: Vec<f64> = (0..t.numel()).map(|_| if rng.bernoulli(p) { 0.0 } else { keep }).collect();
        let out = t.data().iter().zip(&mask).map(|(x, m)| x * m).collect();
        let shape = t.shape().to_vec();
        self.push("dropout", Tensor::new(&shape, out)?, Op::Dropout { a, mask }, &[a])
    }

    // ---- reductions and normalization -----------------------------------

    /// Numerically stable softmax along `axis`.
    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        let t = self.value(a);
        let (outer, len, inner) = axis_split(t.shape(), axis)?;
        let x = t.data();
        if inner == 1 {
            let mut out = Vec::with_capacity(x.len());
            for row in x.chunks_exact(len) {
                let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let start = out.len();
                out.extend(row.iter().map(|v| (v - mx).exp()));
                let z: f64 = out[start..].iter().sum();
                let inv = 1.0 / z;
                out[start..].iter_mut().for_each(|v| *v *= inv);
            }
            let shape = t.shape().to_vec();
            return self.push("softmax", Tensor::new(&shape, out)?, Op::Softmax { a, axis }, &[a]);
        }
        let mut out = vec![0.0; x.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |j: usize| o * len * inner + j * inner + i;
                let mx = (0..len).map(|j| x[at(j)]).fold(f64::NEG_INFINITY, f64::max);
                let mut z = 0.0;
                for j in 0..len {
                    let e = (x[at(j)] - mx).exp();
                    out[at(j)] = e;
                    z += e;
                }
                for j in 0..len {
                    out[at(j)] /= z;
                }
            }
        }
        let shape = t.shape().to_vec();
        self.push("softmax", Tensor::new(&shape, out)?, Op::Softmax { a, axis }, &[a])
    }

    /// Per-vector normalization over the last dim, then `·gamma + beta` (eps = 1e-5).
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let t = self.value(x);
        let d = *t.shape().last().expect("rank >= 1");
        if self.shape(gamma) != [d] || self.shape(beta) != [d] {
            return Err(mismatch(
                "layer_norm",
                format!("x {:?}, gamma {:?}, beta {:?}", t.shape(), self.shape(gamma), self.shape(beta)),
            ));
        }
        let rows = t.numel() / d;
        let (g, b) = (self.value(gamma).data(), self.value(beta).data());
        let mut xhat = Vec::with_capacity(t.numel());
        let mut rstd = Vec::with_capacity(rows);
        let mut out = Vec::with_capacity(t.numel());
        for row in t.data().chunks_exact(d) {
            let mu = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / d as f64;
            let rs = 1.0 / (var + LN_EPS).sqrt();
            rstd.push(rs);
            for j in 0..d {
                let h = (row[j] - mu) * rs;
                xhat.push(h);
                out.push(h * g[j] + b[j]);
            }
        }
        let shape = t.shape().to_vec();
        self.push(
            "layer_norm",
            Tensor::new(&shape, out)?,
            Op::LayerNorm { x, gamma, beta, xhat, rstd },
            &[x, gamma, beta],
        )
    }

    /// Mean along `axis`; the axis is removed (a rank-1 input yields shape `[1]`).
    pub fn mean(&mut self, a: Var, axis: usize) -> Result<Var> {
        let t = self.value(a);
        let (outer, len, inner) = axis_split(t.shape(), axis)?;
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for j in 0..len {
                let src = &t.data()[(o * len + j) * inner..(o * len + j + 1) * inner];
                for (dst, v) in out[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                    *dst += v;
                }
            }
        }
        out.iter_mut().for_each(|v| *v /= len as f64);
        let mut shape: Vec<usize> = t.shape().to_vec();
        shape.remove(axis);
        if shape.is_empty() {
            shape.push(1);
        }
        self.push("mean", Tensor::new(&shape, out)?, Op::Mean { a, axis }, &[a])
    }

    pub fn sum_all(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).data().iter().sum();
        self.push("sum_all", Tensor::scalar(s), Op::SumAll { a }, &[a])
    }

    /// Mean two-class (or C-class) softmax cross-entropy. `logits` is `[B, C]` or `[C]`.
    pub fn cross_entropy_with_logits(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let t = self.value(logits);
        let c = *t.shape().last().expect("rank >= 1");
        let batch = t.numel() / c;
        if targets.len() != batch {
            return Err(mismatch("cross_entropy", format!("{} targets for batch {batch}", targets.len())));
        }
        let mut probs = vec![0.0; t.numel()];
        let mut loss = 0.0;
        for (r, &y) in targets.iter().enumerate() {
            if y >= c {
                return Err(TensorError::IndexOutOfRange { index: y, len: c });
            }
            let row = &t.data()[r * c..(r + 1) * c];
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|v| (v - mx).exp()).sum();
            for j in 0..c {
                probs[r * c + j] = (row[j] - mx).exp() / z;
            }
            loss += mx + z.ln() - row[y];
        }
        loss /= batch as f64;
        self.push(
            "cross_entropy",
            Tensor::scalar(loss),
            Op::CrossEntropy { logits, targets: targets.to_vec(), probs },
            &[logits],
        )
    }

    // ---- indexing and layout -------------------------------------------

    /// Rows of `a` (viewed as `[R, ..]`) selected by `idx`; repeated ids are allowed.
    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let t = self.value(a);
        let rows = t.shape()[0];
        let w = t.numel() / rows;
        let mut out = Vec::with_capacity(idx.len() * w);
        for &i in idx {
            if i >= rows {
                return Err(TensorError::IndexOutOfRange { index: i, len: rows });
            }
            out.extend_from_slice(&t.data()[i * w..(i + 1) * w]);
        }
        let mut shape = t.shape().to_vec();
        shape[0] = idx.len();
        self.push("gather_rows", Tensor::new(&shape, out)?, Op::Gather { a, idx: idx.to_vec() }, &[a])
    }

    /// Embedding lookup: rows of a `[vocab, dim]` table.
    pub fn embedding_lookup(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        self.gather_rows(table, ids)
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = self.shape(parts[0]).to_vec();
        if axis >= first.len() {
            return Err(TensorError::InvalidAxis { axis, rank: first.len() });
        }
        let mut total = 0;
        for &p in parts {
            let s = self.shape(p);
            let same_rest = s.len() == first.len()
                && s.iter().zip(&first).enumerate().all(|(d, (x, y))| d == axis || x == y);
            if !same_rest {
                return Err(mismatch("concat", format!("{s:?} vs {first:?} on axis {axis}")));
            }
            total += s[axis];
        }
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &p in parts {
                let t = self.value(p);
                let block = t.shape()[axis] * inner;
                out.extend_from_slice(&t.data()[o * block..(o + 1) * block]);
            }
        }
        let mut shape = first;
        shape[axis] = total;
        self.push("concat", Tensor::new(&shape, out)?, Op::Concat { parts: parts.to_vec(), axis }, parts)
    }

    /// Slice `[start, start+len)` along `axis`.
    pub fn narrow(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let t = self.value(a);
        let (outer, full, inner) = axis_split(t.shape(), axis)?;
        if len == 0 || start + len > full {
            return Err(TensorError::IndexOutOfRange { index: start + len, len: full });
        }
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * full + start) * inner;
            out.extend_from_slice(&t.data()[base..base + len * inner]);
        }
        let mut shape = t.shape().to_vec();
        shape[axis] = len;
        self.push("narrow", Tensor::new(&shape, out)?, Op::Narrow { a, axis, start }, &[a])
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(a).clone().reshaped(shape)?;
        self.push("reshape", t, Op::Reshape { a }, &[a])
    }

    /// Axis permutation: output dim `d` is input dim `perm[d]`.
    pub fn permute(&mut self, a: Var, perm: &[usize]) -> Result<Var> {
        let t = self.value(a);
        let rank = t.rank();
        let mut seen = vec![false; rank];
        if perm.len() != rank || perm.iter().any(|&p| p >= rank || std::mem::replace(&mut seen[p], true)) {
            return Err(mismatch("permute", format!("perm {perm:?} for shape {:?}", t.shape())));
        }
        let offsets = permute_offsets(t.shape(), perm);
        let out = offsets.iter().map(|&o| t.data()[o]).collect();
        let shape: Vec<usize> = perm.iter().map(|&p| t.shape()[p]).collect();
        self.push("permute", Tensor::new(&shape, out)?, Op::Permute { a, perm: perm.to_vec() }, &[a])
    }

    // ---- backward -------------------------------------------------------

    /// Reverse sweep from a scalar `loss`, accumulating into every leaf that requires grad.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).numel() != 1 {
            return Err(mismatch("backward", format!("loss must be scalar, got {:?}", self.shape(loss))));
        }
        self.grads[loss.0] = Some(vec![1.0]);
        let nodes = &self.nodes;
        let grads = &mut self.grads;
        for i in (0..=loss.0).rev() {
            let node = &nodes[i];
            if !node.requires_grad {
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            backprop_node(nodes, grads, node, g);
        }
        Ok(())
    }
}

fn slot<'a>(grads: &'a mut [Option<Vec<f64>>], nodes: &[Node], v: Var) -> Option<&'a mut Vec<f64>> {
    if !nodes[v.0].requires_grad {
        return None;
    }
    let n = nodes[v.0].value.numel();
    Some(grads[v.0].get_or_insert_with(|| vec![0.0; n]))
}

/// Add a full-size contribution to `v`'s gradient, adopting it when the slot is empty.
fn accumulate(grads: &mut [Option<Vec<f64>>], v: Var, contrib: Vec<f64>) {
    match &mut grads[v.0] {
        Some(acc) => acc.iter_mut().zip(&contrib).for_each(|(a, c)| *a += c),
        empty => *empty = Some(contrib),
    }
}

/// Accumulate `f(i)` for every element of `v`'s gradient, if `v` needs one.
fn accumulate_with(grads: &mut [Option<Vec<f64>>], nodes: &[Node], v: Var, n: usize, f: impl Fn(usize) -> f64) {
    if !nodes[v.0].requires_grad {
        return;
    }
    match &mut grads[v.0] {
        Some(acc) => acc.iter_mut().enumerate().for_each(|(i, a)| *a += f(i)),
        empty => *empty = Some((0..n).map(f).collect()),
    }
}

fn backprop_node(nodes: &[Node], grads: &mut [Option<Vec<f64>>], node: &Node, g_owned: Vec<f64>) {
    let val = |v: Var| &nodes[v.0].value;
    let g = &g_owned[..];
    match &node.op {
        Op::Leaf => {}
        Op::MatMul { a, b } => {
            let (ta, tb) = (val(*a), val(*b));
            let (k, n) = (tb.shape()[0], tb.shape()[1]);
            let rows = ta.numel() / k;
            if let Some(ga) = slot(grads, nodes, *a) {
                gemm(rows, n, k, g, n, 1, tb.data(), 1, n, ga, 1.0);
            }
            if let Some(gb) = slot(grads, nodes, *b) {
                gemm(k, rows, n, ta.data(), 1, k, g, n, 1, gb, 1.0);
            }
        }
        Op::Bmm { a, b, trans_b } => {
            let (ta, tb) = (val(*a), val(*b));
            let (batch, m, k) = (ta.shape()[0], ta.shape()[1], ta.shape()[2]);
            let n = node.value.shape()[2];
            if let Some(ga) = slot(grads, nodes, *a) {
                for i in 0..batch {
                    let gi = &g[i * m * n..(i + 1) * m * n];
                    let bi = &tb.data()[i * k * n..(i + 1) * k * n];
                    let gai = &mut ga[i * m * k..(i + 1) * m * k];
                    if *trans_b {
                        gemm(m, n, k, gi, n, 1, bi, k, 1, gai, 1.0);
                    } else {
                        gemm(m, n, k, gi, n, 1, bi, 1, n, gai, 1.0);
                    }
                }
            }
            if let Some(gb) = slot(grads, nodes, *b) {
                for i in 0..batch {
                    let gi = &g[i * m * n..(i + 1) * m * n];
                    let ai = &ta.data()[i * m * k..(i + 1) * m * k];
                    let gbi = &mut gb[i * k * n..(i + 1) * k * n];
                    if *trans_b {
                        gemm(n, m, k, gi, 1, n, ai, k, 1, gbi, 1.0);
                    } else {
                        gemm(k, m, n, ai, 1, k, gi, n, 1, gbi, 1.0);
                    }
                }
            }
        }
        Op::Add { a, b } => {
            for v in [*a, *b] {
                let shape = val(v).shape();
                if shape == node.value.shape() {
                    accumulate_with(grads, nodes, v, g.len(), |i| g[i]);
                } else if let Some(gv) = slot(grads, nodes, v) {
                    BroadcastIndex::new(node.value.shape(), shape).each(g.len(), |i, j| gv[j] += g[i]);
                }
            }
        }
        Op::Mul { a, b } => {
            let out_shape = node.value.shape();
            let (ta, tb) = (val(*a), val(*b));
            let ma = BroadcastIndex::new(out_shape, ta.shape());
            let mb = BroadcastIndex::new(out_shape, tb.shape());
            let (da, db) = (ta.data(), tb.data());
            if matches!(ma, BroadcastIndex::Same) {
                accumulate_with(grads, nodes, *a, g.len(), |i| g[i] * db[mb.map(i)]);
            } else if let Some(ga) = slot(grads, nodes, *a) {
                pair_each(&ma, &mb, g.len(), |i, ja, jb| ga[ja] += g[i] * db[jb]);
            }
            if matches!(mb, BroadcastIndex::Same) {
                accumulate_with(grads, nodes, *b, g.len(), |i| g[i] * da[ma.map(i)]);
            } else if let Some(gb) = slot(grads, nodes, *b) {
                pair_each(&ma, &mb, g.len(), |i, ja, jb| gb[jb] += g[i] * da[ja]);
            }
        }
        Op::Scale { a, s } => accumulate_with(grads, nodes, *a, g.len(), |i| s * g[i]),
        Op::Softmax { a, axis } => {
            let (outer, len, inner) = axis_split(node.value.shape(), *axis).expect("validated in forward");
            let y = node.value.data();
            if inner == 1 && nodes[a.0].requires_grad {
                let mut contrib = Vec::with_capacity(g.len());
                for (gr, yr) in g.chunks_exact(len).zip(y.chunks_exact(len)) {
                    let dot: f64 = gr.iter().zip(yr).map(|(g, y)| g * y).sum();
                    contrib.extend(gr.iter().zip(yr).map(|(g, y)| y * (g - dot)));
                }
                accumulate(grads, *a, contrib);
            } else if let Some(ga) = slot(grads, nodes, *a) {
                for o in 0..outer {
                    for i in 0..inner {
                        let at = |j: usize| o * len * inner + j * inner + i;
                        let dot: f64 = (0..len).map(|j| g[at(j)] * y[at(j)]).sum();
                        for j in 0..len {
                            ga[at(j)] += y[at(j)] * (g[at(j)] - dot);
                        }
                    }
                }
            }
        }
        Op::LayerNorm { x, gamma, beta, xhat, rstd } => {
            let d = val(*gamma).numel();
            let rows = xhat.len() / d;
            if let Some(gg) = slot(grads, nodes, *gamma) {
                for r in 0..rows {
                    for j in 0..d {
                        gg[j] += g[r * d + j] * xhat[r * d + j];
                    }
                }
            }
            if let Some(gb) = slot(grads, nodes, *beta) {
                for r in 0..rows {
                    for j in 0..d {
                        gb[j] += g[r * d + j];
                    }
                }
            }
            let gamma_v = val(*gamma).data();
            if nodes[x.0].requires_grad {
                let mut contrib = Vec::with_capacity(g.len());
                let mut dxhat = vec![0.0; d];
                for r in 0..rows {
                    let mut m1 = 0.0;
                    let mut m2 = 0.0;
                    for j in 0..d {
                        dxhat[j] = g[r * d + j] * gamma_v[j];
                        m1 += dxhat[j];
                        m2 += dxhat[j] * xhat[r * d + j];
                    }
                    m1 /= d as f64;
                    m2 /= d as f64;
                    contrib.extend((0..d).map(|j| rstd[r] * (dxhat[j] - m1 - xhat[r * d + j] * m2)));
                }
                accumulate(grads, *x, contrib);
            }
        }
        Op::Gelu { a } => {
            let x = val(*a).data();
            accumulate_with(grads, nodes, *a, x.len(), |i| {
                let v = x[i];
                let th = tanh(GELU_C * (v + GELU_A * v * v * v));
                g[i] * (0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * GELU_C * (1.0 + 3.0 * GELU_A * v * v))
            });
        }
        Op::Dropout { a, mask } => accumulate_with(grads, nodes, *a, mask.len(), |i| g[i] * mask[i]),
        Op::Gather { a, idx } => {
            let w = node.value.numel() / idx.len();
            if let Some(ga) = slot(grads, nodes, *a) {
                for (r, &src) in idx.iter().enumerate() {
                    for j in 0..w {
                        ga[src * w + j] += g[r * w + j];
                    }
                }
            }
        }
        Op::Mean { a, axis } => {
            let (outer, len, inner) = axis_split(val(*a).shape(), *axis).expect("validated in forward");
            if let Some(ga) = slot(grads, nodes, *a) {
                let s = 1.0 / len as f64;
                for o in 0..outer {
                    for j in 0..len {
                        for i in 0..inner {
                            ga[(o * len + j) * inner + i] += g[o * inner + i] * s;
                        }
                    }
                }
            }
        }
        Op::SumAll { a } => {
            if let Some(ga) = slot(grads, nodes, *a) {
                ga.iter_mut().for_each(|x| *x += g[0]);
            }
        }
        Op::CrossEntropy { logits, targets, probs } => {
            let c = probs.len() / targets.len();
            let s = g[0] / targets.len() as f64;
            if let Some(gl) = slot(grads, nodes, *logits) {
                for (r, &y) in targets.iter().enumerate() {
                    for j in 0..c {
                        let onehot = if j == y { 1.0 } else { 0.0 };
                        gl[r * c + j] += s * (probs[r * c + j] - onehot);
                    }
                }
            }
        }
        Op::Concat { parts, axis } => {
            let shape = node.value.shape();
            let outer: usize = shape[..*axis].iter().product();
            let inner: usize = shape[axis + 1..].iter().product();
            let total = shape[*axis] * inner;
            let mut offset = 0;
            for &p in parts {
                let block = val(p).shape()[*axis] * inner;
                if let Some(gp) = slot(grads, nodes, p) {
                    for o in 0..outer {
                        let src = &g[o * total + offset..o * total + offset + block];
                        for (dst, s) in gp[o * block..(o + 1) * block].iter_mut().zip(src) {
                            *dst += s;
                        }
                    }
                }
                offset += block;
            }
        }
        Op::Narrow { a, axis, start } => {
            let (outer, full, inner) = axis_split(val(*a).shape(), *axis).expect("validated in forward");
            let len = node.value.shape()[*axis];
            if let Some(ga) = slot(grads, nodes, *a) {
                for o in 0..outer {
                    let base = (o * full + start) * inner;
                    let src = &g[o * len * inner..(o + 1) * len * inner];
                    for (dst, s) in ga[base..base + len * inner].iter_mut().zip(src) {
                        *dst += s;
                    }
                }
            }
        }
        Op::Reshape { a } => {
            if nodes[a.0].requires_grad {
                accumulate(grads, *a, g_owned);
            }
        }
        Op::Permute { a, perm } => {
            if nodes[a.0].requires_grad {
                // The inverse permutation gathers instead of scattering.
                let mut inv = vec![0; perm.len()];
                for (d, &p) in perm.iter().enumerate() {
                    inv[p] = d;
                }
                let offsets = permute_offsets(node.value.shape(), &inv);
                accumulate(grads, *a, offsets.iter().map(|&o| g[o]).collect());
            }
        }
    }
}

/// `c = a·b + beta·c` for strided row/col layouts; thin safe wrapper over `dgemm`.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_rs: usize,
    a_cs: usize,
    b: &[f64],
    b_rs: usize,
    b_cs: usize,
    c: &mut [f64],
    beta: f64,
) {
    assert!(m == 0 || k == 0 || (m - 1) * a_rs + (k - 1) * a_cs < a.len());
    assert!(k == 0 || n == 0 || (k - 1) * b_rs + (n - 1) * b_cs < b.len());
    assert!(c.len() >= m * n);
    // SAFETY: the asserts above bound every strided access inside the slices.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            a_rs as isize,
            a_cs as isize,
            b.as_ptr(),
            b_rs as isize,
            b_cs as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn axis_split(shape: &[usize], axis: usize) -> Result<(usize, usize, usize)> {
    if axis >= shape.len() {
        return Err(TensorError::InvalidAxis { axis, rank: shape.len() });
    }
    Ok((shape[..axis].iter().product(), shape[axis], shape[axis + 1..].iter().product()))
}

fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for d in 0..rank {
        let da = if d + a.len() >= rank { a[d + a.len() - rank] } else { 1 };
        let db = if d + b.len() >= rank { b[d + b.len() - rank] } else { 1 };
        out[d] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return None,
        };
    }
    Some(out)
}

/// Maps a linear index of the broadcast output to the linear index of one operand.
enum BroadcastIndex {
    Same,
    Suffix(usize),
    General(Vec<usize>),
}

impl BroadcastIndex {
    fn new(out: &[usize], input: &[usize]) -> Self {
        let n_in: usize = input.iter().product();
        if out == input {
            return Self::Same;
        }
        let trimmed: Vec<usize> = input.iter().copied().skip_while(|&d| d == 1).collect();
        if out.ends_with(&trimmed) {
            return Self::Suffix(n_in);
        }
        let rank = out.len();
        let mut strides = vec![0; rank];
        let mut s = 1;
        for d in (0..rank).rev() {
            let k = d as isize - (rank - input.len()) as isize;
            if k >= 0 {
                let dim = input[k as usize];
                if dim != 1 {
                    strides[d] = s;
                }
                s *= dim;
            }
        }
        let n: usize = out.iter().product();
        let mut map = Vec::with_capacity(n);
        let mut idx = vec![0; rank];
        let mut off = 0;
        for _ in 0..n {
            map.push(off);
            for d in (0..rank).rev() {
                idx[d] += 1;
                off += strides[d];
                if idx[d] < out[d] {
                    break;
                }
                off -= strides[d] * out[d];
                idx[d] = 0;
            }
        }
        Self::General(map)
    }

    #[inline]
    fn map(&self, i: usize) -> usize {
        match self {
            Self::Same => i,
            Self::Suffix(n) => i % n,
            Self::General(m) => m[i],
        }
    }

    /// Calls `f(output_index, input_index)` for every output element.
    #[inline]
    fn each(&self, n: usize, mut f: impl FnMut(usize, usize)) {
        match self {
            Self::Same => (0..n).for_each(|i| f(i, i)),
            Self::Suffix(m) => {
                for base in (0..n).step_by(*m) {
                    (0..*m).for_each(|j| f(base + j, j));
                }
            }
            Self::General(map) => map.iter().enumerate().for_each(|(i, &j)| f(i, j)),
        }
    }
}

/// Calls `f(i, ja, jb)` for every output element of a two-operand broadcast.
#[inline]
fn pair_each(ia: &BroadcastIndex, ib: &BroadcastIndex, n: usize, mut f: impl FnMut(usize, usize, usize)) {
    match (ia, ib) {
        (_, BroadcastIndex::Same) => ia.each(n, |i, ja| f(i, ja, i)),
        (BroadcastIndex::Same, _) => ib.each(n, |i, jb| f(i, i, jb)),
        _ => (0..n).for_each(|i| f(i, ia.map(i), ib.map(i))),
    }
}

fn permute_offsets(in_shape: &[usize], perm: &[usize]) -> Vec<usize> {
    let rank = in_shape.len();
    let mut in_strides = vec![1; rank];
    for d in (0..rank.saturating_sub(1)).rev() {
        in_strides[d] = in_strides[d + 1] * in_shape[d + 1];
    }
    let out_shape: Vec<usize> = perm.iter().map(|&p| in_shape[p]).collect();
    let st: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
    let n: usize = in_shape.iter().product();
    let inner = out_shape[rank - 1];
    let inner_stride = st[rank - 1];
    let mut offsets = Vec::with_capacity(n);
    let mut idx = vec![0; rank];
    let mut base = 0;
    for _ in 0..n / inner {
        for j in 0..inner {
            offsets.push(base + j * inner_stride);
        }
        for d in (0..rank - 1).rev() {
            idx[d] += 1;
            base += st[d];
            if idx[d] < out_shape[d] {
                break;
            }
            base -= st[d] * out_shape[d];
            idx[d] = 0;
        }
    }
    offsets
}
