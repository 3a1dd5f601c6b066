use super::{DiffError, ParamId, ParamStore, Real, Tensor};

/// Handle to a node recorded in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Clone, Debug)]
enum Op<T> {
    Constant,
    Param(ParamId),
    Affine { x: Var, w: Var, b: Var },
    Relu(Var),
    StopGradient,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Square(Var),
    Scale(Var, T),
    AddScalar(Var),
    Mean(Var),
    ConcatCols(Vec<Var>),
    SliceRows { x: Var, start: usize },
    SegmentSum { x: Var, offsets: Vec<usize> },
    Gather { param: ParamId, corners: Vec<[u32; 8]>, weights: Vec<[T; 8]> },
}

impl<T> Op<T> {
    fn name(&self) -> &'static str {
        match self {
            Op::Constant => "constant",
            Op::Param(_) => "param",
            Op::Affine { .. } => "affine",
            Op::Relu(_) => "relu",
            Op::StopGradient => "stop_gradient",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Div(..) => "div",
            Op::Square(_) => "square",
            Op::Scale(..) => "scale",
            Op::AddScalar(_) => "add_scalar",
            Op::Mean(_) => "mean",
            Op::ConcatCols(_) => "concat_cols",
            Op::SliceRows { .. } => "slice_rows",
            Op::SegmentSum { .. } => "segment_sum",
            Op::Gather { .. } => "trilinear_gather",
        }
    }
}

#[derive(Clone, Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Append-only record of a forward computation. `backward` walks the record
/// in exact reverse order and accumulates parameter gradients into a
/// [`ParamStore`].
#[derive(Clone, Debug, Default)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    missing_corners: u64,
    fault: Option<T>,
}

/// Sparse lattice of feature vectors addressed by integer vertex coordinates.
pub trait SparseFeatureLevel {
    /// Voxels per axis.
    fn resolution(&self) -> usize;
    /// Row of the feature tensor holding `vertex`, if it is stored.
    fn lookup(&self, vertex: [u32; 3]) -> Option<u32>;
    fn param(&self) -> ParamId;
}

/// Corner vertices and trilinear weights of the voxel enclosing `p` (in the
/// unit cube) on a lattice with `resolution` voxels per axis. Coordinates on
/// voxel faces floor into the upper voxel, except at `p = 1` which maps to
/// the last voxel. Corner `c` has offsets `(c & 1, (c >> 1) & 1, (c >> 2) & 1)`.
pub fn trilinear_corners(resolution: usize, p: [f64; 3]) -> ([[u32; 3]; 8], [f64; 8]) {
    let r = resolution as f64;
    let mut base = [0u32; 3];
    let mut t = [0.0; 3];
    for a in 0..3 {
        let s = p[a].clamp(0.0, 1.0) * r;
        let i = (s.floor() as usize).min(resolution - 1);
        base[a] = i as u32;
        t[a] = s - i as f64;
    }
    let mut corners = [[0u32; 3]; 8];
    let mut weights = [0.0; 8];
    for c in 0..8 {
        let mut w = 1.0;
        for a in 0..3 {
            let bit = (c >> a) & 1;
            corners[c][a] = base[a] + bit as u32;
            w *= if bit == 1 { t[a] } else { 1.0 - t[a] };
        }
        weights[c] = w;
    }
    (corners, weights)
}

/// Trilinearly interpolated features of `level` at each point. Corners absent
/// from sparse storage contribute a zero vector and receive no gradient; they
/// are counted in [`Graph::missing_corners`].
pub fn trilinear_gather<T: Real, L: SparseFeatureLevel>(
    graph: &mut Graph<T>,
    store: &ParamStore<T>,
    level: &L,
    points: &[[f64; 3]],
) -> Var {
    let mut corners = Vec::with_capacity(points.len());
    let mut weights = Vec::with_capacity(points.len());
    for p in points {
        let (coords, w) = trilinear_corners(level.resolution(), *p);
        let mut idx = [u32::MAX; 8];
        for c in 0..8 {
            match level.lookup(coords[c]) {
                Some(i) => idx[c] = i,
                None => graph.missing_corners += 1,
            }
        }
        corners.push(idx);
        weights.push(w.map(T::of));
    }
    graph.gather(store, level.param(), corners, weights)
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new(), missing_corners: 0, fault: None }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Number of interpolation corners that fell outside sparse storage.
    pub fn missing_corners(&self) -> u64 {
        self.missing_corners
    }

    /// Scales weight gradients of every affine layer by `factor` during
    /// backward. Used to check that gradient verification catches faults.
    pub fn inject_fault(&mut self, factor: T) {
        self.fault = Some(factor);
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Constant, false)
    }

    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        self.push(store.value(id).clone(), Op::Param(id), true)
    }

    /// `y = x W + b` with `x: B x in`, `W: in x out`, `b: 1 x out`.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var, DiffError> {
        let (xs, ws, bs) = (self.shape(x), self.shape(w), self.shape(b));
        if xs.1 != ws.0 {
            return Err(DiffError::Shape { op: "affine", lhs: xs, rhs: ws });
        }
        if bs != (1, ws.1) {
            return Err(DiffError::Shape { op: "affine bias", lhs: ws, rhs: bs });
        }
        let mut out = Tensor::zeros(xs.0, ws.1);
        let bias = self.value(b).data().to_vec();
        for r in 0..xs.0 {
            out.data_mut()[r * ws.1..(r + 1) * ws.1].copy_from_slice(&bias);
        }
        Tensor::gemm_into(self.value(x), false, self.value(w), false, T::one(), &mut out);
        let rg = self.rg(x) || self.rg(w) || self.rg(b);
        Ok(self.push(out, Op::Affine { x, w, b }, rg))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| if v > T::zero() { v } else { T::zero() });
        let rg = self.rg(x);
        self.push(out, Op::Relu(x), rg)
    }

    /// Identity in the forward pass; blocks all gradient flow.
    pub fn stop_gradient(&mut self, x: Var) -> Var {
        let out = self.value(x).clone();
        self.push(out, Op::StopGradient, false)
    }

    fn binary(&mut self, a: Var, b: Var, name: &'static str, f: impl Fn(T, T) -> T) -> Result<Tensor<T>, DiffError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(DiffError::Shape { op: name, lhs: sa, rhs: sb });
        }
        Ok(self.value(a).zip_map(self.value(b), f))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        let out = self.binary(a, b, "add", |x, y| x + y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        let out = self.binary(a, b, "sub", |x, y| x - y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        let out = self.binary(a, b, "mul", |x, y| x * y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Mul(a, b), rg))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        let out = self.binary(a, b, "div", |x, y| x / y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Div(a, b), rg))
    }

    pub fn square(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v * v);
        let rg = self.rg(x);
        self.push(out, Op::Square(x), rg)
    }

    pub fn scale(&mut self, x: Var, s: T) -> Var {
        let out = self.value(x).map(|v| v * s);
        let rg = self.rg(x);
        self.push(out, Op::Scale(x, s), rg)
    }

    pub fn add_scalar(&mut self, x: Var, s: T) -> Var {
        let out = self.value(x).map(|v| v + s);
        let rg = self.rg(x);
        self.push(out, Op::AddScalar(x), rg)
    }

    /// Mean over all elements, as a 1x1 tensor.
    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let n = t.data().len().max(1);
        let out = Tensor::scalar(t.sum() / T::of(n as f64));
        let rg = self.rg(x);
        self.push(out, Op::Mean(x), rg)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, DiffError> {
        let rows = parts.first().map(|&p| self.shape(p).0).unwrap_or(0);
        for &p in parts {
            if self.shape(p).0 != rows {
                return Err(DiffError::Shape { op: "concat_cols", lhs: self.shape(parts[0]), rhs: self.shape(p) });
            }
        }
        let cols: usize = parts.iter().map(|&p| self.shape(p).1).sum();
        let mut out = Tensor::zeros(rows, cols);
        let mut offset = 0;
        for &p in parts {
            let src = self.value(p);
            let pc = src.cols();
            for r in 0..rows {
                out.data_mut()[r * cols + offset..r * cols + offset + pc].copy_from_slice(src.row(r));
            }
            offset += pc;
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), rg))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var, DiffError> {
        let (rows, cols) = self.shape(x);
        if start + len > rows {
            return Err(DiffError::Shape { op: "slice_rows", lhs: (rows, cols), rhs: (start + len, cols) });
        }
        let out = Tensor::from_vec(len, cols, self.value(x).data()[start * cols..(start + len) * cols].to_vec());
        let rg = self.rg(x);
        Ok(self.push(out, Op::SliceRows { x, start }, rg))
    }

    /// Sums consecutive row groups: output row `g` is the sum of input rows
    /// `offsets[g]..offsets[g + 1]`. Empty groups yield zero rows.
    pub fn segment_sum(&mut self, x: Var, offsets: &[usize]) -> Result<Var, DiffError> {
        let (rows, cols) = self.shape(x);
        let valid = offsets.first() == Some(&0)
            && offsets.last() == Some(&rows)
            && offsets.windows(2).all(|w| w[0] <= w[1]);
        if !valid {
            return Err(DiffError::Invalid(format!("segment_sum: offsets do not partition {rows} rows")));
        }
        let groups = offsets.len() - 1;
        let mut out = Tensor::zeros(groups, cols);
        let src = self.value(x);
        for g in 0..groups {
            for r in offsets[g]..offsets[g + 1] {
                for c in 0..cols {
                    out.data_mut()[g * cols + c] += src.data()[r * cols + c];
                }
            }
        }
        let rg = self.rg(x);
        Ok(self.push(out, Op::SegmentSum { x, offsets: offsets.to_vec() }, rg))
    }

    /// Weighted sum of up to eight feature rows per output row. Indices equal
    /// to `u32::MAX` are skipped.
    pub fn gather(&mut self, store: &ParamStore<T>, param: ParamId, corners: Vec<[u32; 8]>, weights: Vec<[T; 8]>) -> Var {
        let feats = store.value(param);
        let l = feats.cols();
        let mut out = Tensor::zeros(corners.len(), l);
        for (i, (idx, w)) in corners.iter().zip(&weights).enumerate() {
            let dst = &mut out.data_mut()[i * l..(i + 1) * l];
            for c in 0..8 {
                if idx[c] == u32::MAX {
                    continue;
                }
                let src = feats.row(idx[c] as usize);
                for f in 0..l {
                    dst[f] += w[c] * src[f];
                }
            }
        }
        self.push(out, Op::Gather { param, corners, weights }, true)
    }

    /// Reports the first node holding a NaN or infinity.
    pub fn check_finite(&self) -> Result<(), DiffError> {
        match self.nodes.iter().position(|n| !n.value.is_finite()) {
            Some(i) => Err(DiffError::NonFinite { node: i, op: self.nodes[i].op.name() }),
            None => Ok(()),
        }
    }

    /// Back-propagates from the scalar `loss`, accumulating into `store`'s gradients.
    pub fn backward(&self, loss: Var, store: &mut ParamStore<T>) -> Result<(), DiffError> {
        if self.shape(loss) != (1, 1) {
            return Err(DiffError::NotScalar(self.shape(loss)));
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::scalar(T::one()));

        fn acc<T: Real>(grads: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) {
            match &mut grads[v.0] {
                Some(existing) => existing.accumulate(&g),
                slot => *slot = Some(g),
            }
        }

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            match &node.op {
                Op::Constant | Op::StopGradient => {}
                Op::Param(id) => store.grad_mut(*id).accumulate(&g),
                Op::Affine { x, w, b } => {
                    if self.rg(*x) {
                        let mut dx = Tensor::zeros(self.shape(*x).0, self.shape(*x).1);
                        Tensor::gemm_into(&g, false, self.value(*w), true, T::zero(), &mut dx);
                        acc(&mut grads, *x, dx);
                    }
                    if self.rg(*w) {
                        let mut dw = Tensor::zeros(self.shape(*w).0, self.shape(*w).1);
                        Tensor::gemm_into(self.value(*x), true, &g, false, T::zero(), &mut dw);
                        if let Some(f) = self.fault {
                            dw = dw.map(|v| v * f);
                        }
                        acc(&mut grads, *w, dw);
                    }
                    if self.rg(*b) {
                        let cols = g.cols();
                        let mut db = Tensor::zeros(1, cols);
                        for r in 0..g.rows() {
                            for c in 0..cols {
                                db.data_mut()[c] += g.data()[r * cols + c];
                            }
                        }
                        acc(&mut grads, *b, db);
                    }
                }
                Op::Relu(x) => {
                    let dx = g.zip_map(self.value(*x), |gv, xv| if xv > T::zero() { gv } else { T::zero() });
                    acc(&mut grads, *x, dx);
                }
                Op::Add(a, b) => {
                    if self.rg(*a) {
                        acc(&mut grads, *a, g.clone());
                    }
                    if self.rg(*b) {
                        acc(&mut grads, *b, g);
                    }
                }
                Op::Sub(a, b) => {
                    if self.rg(*b) {
                        acc(&mut grads, *b, g.map(|v| -v));
                    }
                    if self.rg(*a) {
                        acc(&mut grads, *a, g);
                    }
                }
                Op::Mul(a, b) => {
                    if self.rg(*a) {
                        acc(&mut grads, *a, g.zip_map(self.value(*b), |gv, bv| gv * bv));
                    }
                    if self.rg(*b) {
                        acc(&mut grads, *b, g.zip_map(self.value(*a), |gv, av| gv * av));
                    }
                }
                Op::Div(a, b) => {
                    let bv = self.value(*b);
                    if self.rg(*a) {
                        acc(&mut grads, *a, g.zip_map(bv, |gv, d| gv / d));
                    }
                    if self.rg(*b) {
                        // d(a/b)/db = -(a/b)/b
                        let q = node.value.zip_map(bv, |y, d| y / d);
                        acc(&mut grads, *b, g.zip_map(&q, |gv, qv| -gv * qv));
                    }
                }
                Op::Square(x) => {
                    let two = T::of(2.0);
                    acc(&mut grads, *x, g.zip_map(self.value(*x), |gv, xv| two * xv * gv));
                }
                Op::Scale(x, s) => {
                    let s = *s;
                    acc(&mut grads, *x, g.map(|v| v * s));
                }
                Op::AddScalar(x) => acc(&mut grads, *x, g),
                Op::Mean(x) => {
                    let (r, c) = self.shape(*x);
                    let v = g.data()[0] / T::of((r * c).max(1) as f64);
                    acc(&mut grads, *x, Tensor::full(r, c, v));
                }
                Op::ConcatCols(parts) => {
                    let (rows, cols) = g.shape();
                    let mut offset = 0;
                    for &p in parts {
                        let pc = self.shape(p).1;
                        if self.rg(p) {
                            let mut dp = Tensor::zeros(rows, pc);
                            for r in 0..rows {
                                dp.data_mut()[r * pc..(r + 1) * pc]
                                    .copy_from_slice(&g.data()[r * cols + offset..r * cols + offset + pc]);
                            }
                            acc(&mut grads, p, dp);
                        }
                        offset += pc;
                    }
                }
                Op::SliceRows { x, start } => {
                    let (rows, cols) = self.shape(*x);
                    let mut dx = Tensor::zeros(rows, cols);
                    dx.data_mut()[start * cols..start * cols + g.data().len()].copy_from_slice(g.data());
                    acc(&mut grads, *x, dx);
                }
                Op::SegmentSum { x, offsets } => {
                    let (rows, cols) = self.shape(*x);
                    let mut dx = Tensor::zeros(rows, cols);
                    for gi in 0..offsets.len() - 1 {
                        for r in offsets[gi]..offsets[gi + 1] {
                            dx.data_mut()[r * cols..(r + 1) * cols].copy_from_slice(g.row(gi));
                        }
                    }
                    acc(&mut grads, *x, dx);
                }
                Op::Gather { param, corners, weights } => {
                    let grad = store.grad_mut(*param);
                    let l = grad.cols();
                    for (i, (idx, w)) in corners.iter().zip(weights).enumerate() {
                        let src = g.row(i);
                        for c in 0..8 {
                            if idx[c] == u32::MAX {
                                continue;
                            }
                            let row = idx[c] as usize;
                            let dst = &mut grad.data_mut()[row * l..(row + 1) * l];
                            for f in 0..l {
                                dst[f] += w[c] * src[f];
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }
}
