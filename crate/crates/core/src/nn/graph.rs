//! Reverse-mode automatic differentiation over a flat tape.
//!
//! Nodes are appended in evaluation order, so the tape is topologically
//! sorted by construction and backward is a single reverse sweep.

use super::tensor::{gemm, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    /// `[rows, n] + [n]` broadcast over rows.
    AddRow(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    AddScalar(NodeId),
    Neg(NodeId),
    Exp(NodeId),
    Log(NodeId),
    Sum(NodeId),
    Sigmoid(NodeId),
    Relu(NodeId),
    Clamp(NodeId, f64, f64),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    /// Whether any ancestor requires a gradient.
    tracked: bool,
}

/// The tape: values, the ops that produced them, and accumulated gradients
/// for every `requires_grad` leaf.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
}

fn same_shape(a: &Tensor, b: &Tensor, what: &str) -> Result<()> {
    if a.shape != b.shape {
        return Err(Error::Shape(format!(
            "{what}: {:?} vs {:?}",
            a.shape, b.shape
        )));
    }
    Ok(())
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[NodeId]) -> NodeId {
        let tracked = inputs.iter().any(|i| self.nodes[i.0].tracked);
        self.nodes.push(Node {
            value,
            op,
            requires_grad: false,
            tracked,
        });
        self.grads.push(None);
        NodeId(self.nodes.len() - 1)
    }

    /// Trainable leaf.
    pub fn param(&mut self, t: Tensor) -> NodeId {
        let id = self.push(t, Op::Leaf, &[]);
        self.nodes[id.0].requires_grad = true;
        self.nodes[id.0].tracked = true;
        id
    }

    /// Constant leaf.
    pub fn constant(&mut self, t: Tensor) -> NodeId {
        self.push(t, Op::Leaf, &[])
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn grad(&self, id: NodeId) -> Option<&Tensor> {
        self.grads[id.0].as_ref()
    }

    pub fn zero_grad(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = None);
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = super::tensor::matmul(self.value(a), self.value(b))?;
        Ok(self.push(v, Op::MatMul(a, b), &[a, b]))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (x, y) = (self.value(a), self.value(b));
        same_shape(x, y, "add")?;
        let data = x.data.iter().zip(&y.data).map(|(p, q)| p + q).collect();
        let v = Tensor::new(x.shape.clone(), data)?;
        Ok(self.push(v, Op::Add(a, b), &[a, b]))
    }

    pub fn add_row(&mut self, a: NodeId, bias: NodeId) -> Result<NodeId> {
        let (x, b) = (self.value(a), self.value(bias));
        let (_, n) = x.dims2()?;
        if b.numel() != n {
            return Err(Error::Shape(format!(
                "bias {:?} for rows of width {n}",
                b.shape
            )));
        }
        let data = x
            .data
            .chunks_exact(n)
            .flat_map(|row| row.iter().zip(&b.data).map(|(p, q)| p + q))
            .collect();
        let v = Tensor::new(x.shape.clone(), data)?;
        Ok(self.push(v, Op::AddRow(a, bias), &[a, bias]))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (x, y) = (self.value(a), self.value(b));
        same_shape(x, y, "mul")?;
        let data = x.data.iter().zip(&y.data).map(|(p, q)| p * q).collect();
        let v = Tensor::new(x.shape.clone(), data)?;
        Ok(self.push(v, Op::Mul(a, b), &[a, b]))
    }

    fn unary(&mut self, a: NodeId, op: Op, f: impl Fn(f64) -> f64) -> NodeId {
        let x = self.value(a);
        let v = Tensor {
            shape: x.shape.clone(),
            data: x.data.iter().map(|&p| f(p)).collect(),
        };
        self.push(v, op, &[a])
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        self.unary(a, Op::Scale(a, c), |x| c * x)
    }

    pub fn add_scalar(&mut self, a: NodeId, c: f64) -> NodeId {
        self.unary(a, Op::AddScalar(a), |x| x + c)
    }

    pub fn neg(&mut self, a: NodeId) -> NodeId {
        self.unary(a, Op::Neg(a), |x| -x)
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        self.unary(a, Op::Exp(a), f64::exp)
    }

    pub fn log(&mut self, a: NodeId) -> NodeId {
        self.unary(a, Op::Log(a), f64::ln)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        self.unary(a, Op::Sigmoid(a), sigmoid)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        self.unary(a, Op::Relu(a), |x| x.max(0.0))
    }

    /// Elementwise clamp; the gradient is passed only strictly inside the
    /// bounds.
    pub fn clamp(&mut self, a: NodeId, lo: f64, hi: f64) -> NodeId {
        self.unary(a, Op::Clamp(a, lo, hi), |x| x.clamp(lo, hi))
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let s = self.value(a).data.iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a), &[a])
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let nb = self.neg(b);
        self.add(a, nb)
    }

    /// `x · W + b` for `x: [rows, in]`, `W: [in, out]`, `b: [out]`.
    pub fn linear(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        let xw = self.matmul(x, w)?;
        self.add_row(xw, b)
    }

    /// Accumulate `∂loss/∂leaf` into every `requires_grad` leaf.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if self.value(loss).numel() != 1 {
            return Err(Error::Input(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape
            )));
        }
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.tracked {
                continue;
            }
            if node.requires_grad {
                match &mut self.grads[i] {
                    Some(acc) => acc.data.iter_mut().zip(&g).for_each(|(a, d)| *a += d),
                    slot @ None => {
                        *slot = Some(Tensor {
                            shape: node.value.shape.clone(),
                            data: g.clone(),
                        })
                    }
                }
            }
            let nodes = &self.nodes;
            let mut send = |id: NodeId, contrib: Vec<f64>| {
                if !nodes[id.0].tracked {
                    return;
                }
                match &mut adj[id.0] {
                    Some(acc) => acc.iter_mut().zip(&contrib).for_each(|(a, d)| *a += d),
                    slot @ None => *slot = Some(contrib),
                }
            };
            let out = &node.value.data;
            let val = |id: NodeId| &nodes[id.0].value;
            match node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let (m, k) = val(a).dims2()?;
                    let (_, n) = val(b).dims2()?;
                    if nodes[a.0].tracked {
                        // dA = dC · Bᵀ
                        let mut da = vec![0.0; m * k];
                        gemm(
                            m,
                            n,
                            k,
                            &g,
                            n as isize,
                            1,
                            &val(b).data,
                            1,
                            n as isize,
                            0.0,
                            &mut da,
                        );
                        send(a, da);
                    }
                    if nodes[b.0].tracked {
                        // dB = Aᵀ · dC
                        let mut db = vec![0.0; k * n];
                        gemm(
                            k,
                            m,
                            n,
                            &val(a).data,
                            1,
                            k as isize,
                            &g,
                            n as isize,
                            1,
                            0.0,
                            &mut db,
                        );
                        send(b, db);
                    }
                }
                Op::Add(a, b) => {
                    send(a, g.clone());
                    send(b, g);
                }
                Op::AddRow(a, b) => {
                    let n = val(b).numel();
                    let mut db = vec![0.0; n];
                    for row in g.chunks_exact(n) {
                        db.iter_mut().zip(row).for_each(|(s, v)| *s += v);
                    }
                    send(b, db);
                    send(a, g);
                }
                Op::Mul(a, b) => {
                    let (x, y) = (&val(a).data, &val(b).data);
                    if nodes[a.0].tracked {
                        send(a, g.iter().zip(y).map(|(d, q)| d * q).collect());
                    }
                    if nodes[b.0].tracked {
                        send(b, g.iter().zip(x).map(|(d, p)| d * p).collect());
                    }
                }
                Op::Scale(a, c) => send(a, g.iter().map(|d| d * c).collect()),
                Op::AddScalar(a) => send(a, g),
                Op::Neg(a) => send(a, g.iter().map(|d| -d).collect()),
                Op::Exp(a) => send(a, g.iter().zip(out).map(|(d, y)| d * y).collect()),
                Op::Log(a) => send(a, g.iter().zip(&val(a).data).map(|(d, x)| d / x).collect()),
                Op::Sum(a) => send(a, vec![g[0]; val(a).numel()]),
                Op::Sigmoid(a) => send(
                    a,
                    g.iter().zip(out).map(|(d, y)| d * y * (1.0 - y)).collect(),
                ),
                Op::Relu(a) => send(
                    a,
                    g.iter()
                        .zip(&val(a).data)
                        .map(|(d, &x)| if x > 0.0 { *d } else { 0.0 })
                        .collect(),
                ),
                Op::Clamp(a, lo, hi) => send(
                    a,
                    g.iter()
                        .zip(&val(a).data)
                        .map(|(d, &x)| if x > lo && x < hi { *d } else { 0.0 })
                        .collect(),
                ),
            }
        }
        Ok(())
    }
}
