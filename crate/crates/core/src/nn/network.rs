//! Layer graph over a flat parameter vector, with reverse-mode gradients.
//!
//! Tensors are `[channels, x, y, z]`, channel-major with z fastest. 2D
//! feature maps use `z = 1` and dense vectors use `[n, 1, 1, 1]`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub type Shape = [usize; 4];

pub const LAYER_NORM_EPS: f64 = 1e-5;

fn numel(s: &Shape) -> usize {
    s.iter().product()
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayerKind {
    /// Strided convolution with SAME padding (extra padding cell at the end).
    /// `taps[o]` lists `(kernel offset, input cell)` pairs for output cell `o`.
    Conv {
        kernel: [usize; 3],
        taps: Vec<Vec<(usize, usize)>>,
    },
    /// Normalizes over every element of the tensor; gain and offset per channel.
    LayerNorm,
    Relu,
    Tanh,
    /// `(C, X, Y, Z) -> (C*Z, X, Y)`, folding depth into channels.
    DepthToChannels,
    Flatten,
    Dense,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub name: String,
    pub kind: LayerKind,
    pub input: Shape,
    pub output: Shape,
    /// Start of this layer's parameters in the flat vector.
    pub offset: usize,
    pub num_params: usize,
}

pub struct NetworkBuilder {
    input: Shape,
    layers: Vec<Layer>,
    shape: Shape,
    offset: usize,
}

impl NetworkBuilder {
    pub fn new(input: Shape) -> Self {
        NetworkBuilder {
            input,
            layers: Vec::new(),
            shape: input,
            offset: 0,
        }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    fn push(&mut self, name: String, kind: LayerKind, output: Shape, num_params: usize) {
        self.layers.push(Layer {
            name,
            kind,
            input: self.shape,
            output,
            offset: self.offset,
            num_params,
        });
        self.shape = output;
        self.offset += num_params;
    }

    pub fn conv(
        &mut self,
        name: &str,
        out_channels: usize,
        kernel: [usize; 3],
        stride: [usize; 3],
    ) -> Result<&mut Self> {
        if out_channels == 0 || kernel.contains(&0) || stride.contains(&0) {
            return Err(Error::config(format!(
                "{name}: channels, kernel and stride must be positive"
            )));
        }
        let [ci, ix, iy, iz] = self.shape;
        let ins = [ix, iy, iz];
        let outs: [usize; 3] = std::array::from_fn(|a| ins[a].div_ceil(stride[a]));
        let pad: [usize; 3] = std::array::from_fn(|a| {
            ((outs[a] - 1) * stride[a] + kernel[a]).saturating_sub(ins[a]) / 2
        });
        let mut taps = Vec::with_capacity(outs.iter().product());
        for ox in 0..outs[0] {
            for oy in 0..outs[1] {
                for oz in 0..outs[2] {
                    let o = [ox, oy, oz];
                    let mut cell_taps = Vec::new();
                    for dx in 0..kernel[0] {
                        for dy in 0..kernel[1] {
                            for dz in 0..kernel[2] {
                                let d = [dx, dy, dz];
                                let mut idx = [0usize; 3];
                                let mut inside = true;
                                for a in 0..3 {
                                    let p = (o[a] * stride[a] + d[a]) as isize - pad[a] as isize;
                                    if p < 0 || p >= ins[a] as isize {
                                        inside = false;
                                        break;
                                    }
                                    idx[a] = p as usize;
                                }
                                if inside {
                                    let k = (dx * kernel[1] + dy) * kernel[2] + dz;
                                    cell_taps.push((k, (idx[0] * iy + idx[1]) * iz + idx[2]));
                                }
                            }
                        }
                    }
                    taps.push(cell_taps);
                }
            }
        }
        let kvol: usize = kernel.iter().product();
        let output = [out_channels, outs[0], outs[1], outs[2]];
        self.push(
            name.to_string(),
            LayerKind::Conv { kernel, taps },
            output,
            out_channels * ci * kvol + out_channels,
        );
        Ok(self)
    }

    pub fn layer_norm(&mut self, name: &str) -> &mut Self {
        let c = self.shape[0];
        self.push(name.to_string(), LayerKind::LayerNorm, self.shape, 2 * c);
        self
    }

    pub fn relu(&mut self, name: &str) -> &mut Self {
        self.push(name.to_string(), LayerKind::Relu, self.shape, 0);
        self
    }

    pub fn tanh(&mut self, name: &str) -> &mut Self {
        self.push(name.to_string(), LayerKind::Tanh, self.shape, 0);
        self
    }

    pub fn depth_to_channels(&mut self, name: &str) -> &mut Self {
        let [c, x, y, z] = self.shape;
        self.push(
            name.to_string(),
            LayerKind::DepthToChannels,
            [c * z, x, y, 1],
            0,
        );
        self
    }

    pub fn flatten(&mut self, name: &str) -> &mut Self {
        let n = numel(&self.shape);
        self.push(name.to_string(), LayerKind::Flatten, [n, 1, 1, 1], 0);
        self
    }

    /// Fully connected layer; a non-vector input is flattened implicitly.
    pub fn dense(&mut self, name: &str, out: usize) -> Result<&mut Self> {
        if out == 0 {
            return Err(Error::config(format!("{name}: width must be positive")));
        }
        let n = numel(&self.shape);
        self.shape = [n, 1, 1, 1];
        self.push(
            name.to_string(),
            LayerKind::Dense,
            [out, 1, 1, 1],
            out * n + out,
        );
        Ok(self)
    }

    pub fn finish(self) -> Network {
        Network {
            input: self.input,
            layers: self.layers,
            num_params: self.offset,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    input: Shape,
    layers: Vec<Layer>,
    num_params: usize,
}

/// Per-thread scratch space: activations at every layer boundary plus two
/// gradient buffers.
#[derive(Debug, Clone)]
pub struct Workspace {
    acts: Vec<Vec<f64>>,
    g_out: Vec<f64>,
    g_in: Vec<f64>,
}

impl Workspace {
    pub fn input_mut(&mut self) -> &mut [f64] {
        &mut self.acts[0]
    }

    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("workspace has an input buffer")
    }
}

impl Network {
    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn num_params(&self) -> usize {
        self.num_params
    }

    pub fn input_shape(&self) -> Shape {
        self.input
    }

    pub fn input_len(&self) -> usize {
        numel(&self.input)
    }

    pub fn output_len(&self) -> usize {
        self.layers
            .last()
            .map_or(self.input_len(), |l| numel(&l.output))
    }

    pub fn workspace(&self) -> Workspace {
        let mut acts = vec![vec![0.0; self.input_len()]];
        let mut widest = self.input_len();
        for l in &self.layers {
            let n = numel(&l.output);
            widest = widest.max(n);
            acts.push(vec![0.0; n]);
        }
        Workspace {
            acts,
            g_out: vec![0.0; widest],
            g_in: vec![0.0; widest],
        }
    }

    /// Fan-in scaled uniform weights, zero biases, unit layer-norm gains.
    pub fn init_params(&self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = vec![0.0; self.num_params];
        for l in &self.layers {
            let seg = &mut p[l.offset..l.offset + l.num_params];
            match &l.kind {
                LayerKind::Conv { .. } | LayerKind::Dense => {
                    let out = l.output[0];
                    let fan_in = (l.num_params - out) / out;
                    let limit = (6.0 / fan_in as f64).sqrt();
                    for w in &mut seg[..l.num_params - out] {
                        *w = rng.gen_range(-limit..limit);
                    }
                }
                LayerKind::LayerNorm => seg[..l.input[0]].fill(1.0),
                _ => {}
            }
        }
        p
    }

    fn check_params(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_params {
            return Err(Error::Shape {
                layer: "parameters".into(),
                expected: self.num_params,
                actual: params.len(),
            });
        }
        Ok(())
    }

    /// Forward pass on the input already written into the workspace.
    pub fn forward_ws<'w>(&self, params: &[f64], ws: &'w mut Workspace) -> Result<&'w [f64]> {
        self.check_params(params)?;
        for (i, l) in self.layers.iter().enumerate() {
            let (head, tail) = ws.acts.split_at_mut(i + 1);
            let x = &head[i];
            let y = &mut tail[0];
            let p = &params[l.offset..l.offset + l.num_params];
            forward_layer(l, p, x, y);
        }
        let out = ws.output();
        if !out.iter().all(|v| v.is_finite()) {
            let bad = self
                .layers
                .iter()
                .zip(&ws.acts[1..])
                .find(|(_, a)| !a.iter().all(|v| v.is_finite()))
                .map_or("output", |(l, _)| l.name.as_str());
            return Err(Error::Numerical {
                context: format!("non-finite activation in layer {bad}"),
            });
        }
        Ok(ws.output())
    }

    pub fn forward(&self, params: &[f64], input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.input_len() {
            return Err(Error::Shape {
                layer: self
                    .layers
                    .first()
                    .map_or("input".into(), |l| l.name.clone()),
                expected: self.input_len(),
                actual: input.len(),
            });
        }
        let mut ws = self.workspace();
        ws.acts[0].copy_from_slice(input);
        Ok(self.forward_ws(params, &mut ws)?.to_vec())
    }

    /// Accumulates d(loss)/d(params) into `grad` given d(loss)/d(output).
    /// Must follow `forward_ws` on the same workspace.
    pub fn backward_ws(
        &self,
        params: &[f64],
        ws: &mut Workspace,
        grad_out: &[f64],
        grad: &mut [f64],
    ) -> Result<()> {
        self.check_params(params)?;
        self.check_params(grad)?;
        if grad_out.len() != self.output_len() {
            return Err(Error::Shape {
                layer: "output gradient".into(),
                expected: self.output_len(),
                actual: grad_out.len(),
            });
        }
        ws.g_out[..grad_out.len()].copy_from_slice(grad_out);
        for (i, l) in self.layers.iter().enumerate().rev() {
            let (n_in, n_out) = (numel(&l.input), numel(&l.output));
            let p = &params[l.offset..l.offset + l.num_params];
            let gp = &mut grad[l.offset..l.offset + l.num_params];
            let need_input_grad = i > 0;
            backward_layer(
                l,
                p,
                &ws.acts[i],
                &ws.acts[i + 1],
                &ws.g_out[..n_out],
                gp,
                &mut ws.g_in[..n_in],
                need_input_grad,
            );
            std::mem::swap(&mut ws.g_out, &mut ws.g_in);
        }
        Ok(())
    }

    /// Names the first layer whose parameter gradient is not finite.
    pub fn check_gradient(&self, grad: &[f64]) -> Result<()> {
        for l in &self.layers {
            if !grad[l.offset..l.offset + l.num_params]
                .iter()
                .all(|g| g.is_finite())
            {
                return Err(Error::Numerical {
                    context: format!("non-finite gradient in layer {}", l.name),
                });
            }
        }
        Ok(())
    }
}

fn forward_layer(l: &Layer, p: &[f64], x: &[f64], y: &mut [f64]) {
    match &l.kind {
        LayerKind::Conv { kernel, taps } => {
            let ci_n = l.input[0];
            let in_cells = numel(&l.input) / ci_n;
            let co_n = l.output[0];
            let kvol: usize = kernel.iter().product();
            let (w, b) = p.split_at(co_n * ci_n * kvol);
            for co in 0..co_n {
                let wc = &w[co * ci_n * kvol..(co + 1) * ci_n * kvol];
                for (o, cell_taps) in taps.iter().enumerate() {
                    let mut acc = b[co];
                    for ci in 0..ci_n {
                        let wk = &wc[ci * kvol..(ci + 1) * kvol];
                        let xc = &x[ci * in_cells..(ci + 1) * in_cells];
                        for &(k, cell) in cell_taps {
                            acc += wk[k] * xc[cell];
                        }
                    }
                    y[co * taps.len() + o] = acc;
                }
            }
        }
        LayerKind::LayerNorm => {
            let c = l.input[0];
            let s = x.len() / c;
            let (mean, inv_std) = moments(x);
            let (gain, offset) = p.split_at(c);
            for ch in 0..c {
                for j in ch * s..(ch + 1) * s {
                    y[j] = gain[ch] * (x[j] - mean) * inv_std + offset[ch];
                }
            }
        }
        LayerKind::Relu => {
            for (yi, &xi) in y.iter_mut().zip(x) {
                *yi = xi.max(0.0);
            }
        }
        LayerKind::Tanh => {
            for (yi, &xi) in y.iter_mut().zip(x) {
                *yi = xi.tanh();
            }
        }
        LayerKind::DepthToChannels => {
            let [c, nx, ny, nz] = l.input;
            for ch in 0..c {
                for ix in 0..nx {
                    for iy in 0..ny {
                        for iz in 0..nz {
                            y[((ch * nz + iz) * nx + ix) * ny + iy] =
                                x[((ch * nx + ix) * ny + iy) * nz + iz];
                        }
                    }
                }
            }
        }
        LayerKind::Flatten => y.copy_from_slice(x),
        LayerKind::Dense => {
            let n = x.len();
            let (w, b) = p.split_at(y.len() * n);
            for (o, yo) in y.iter_mut().enumerate() {
                *yo = b[o]
                    + w[o * n..(o + 1) * n]
                        .iter()
                        .zip(x)
                        .map(|(a, b)| a * b)
                        .sum::<f64>();
            }
        }
    }
}

fn moments(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, 1.0 / (var + LAYER_NORM_EPS).sqrt())
}

#[allow(clippy::too_many_arguments)]
fn backward_layer(
    l: &Layer,
    p: &[f64],
    x: &[f64],
    y: &[f64],
    gy: &[f64],
    gp: &mut [f64],
    gx: &mut [f64],
    need_gx: bool,
) {
    match &l.kind {
        LayerKind::Conv { kernel, taps } => {
            let ci_n = l.input[0];
            let in_cells = numel(&l.input) / ci_n;
            let co_n = l.output[0];
            let kvol: usize = kernel.iter().product();
            let wlen = co_n * ci_n * kvol;
            if need_gx {
                gx.fill(0.0);
            }
            for co in 0..co_n {
                let go = &gy[co * taps.len()..(co + 1) * taps.len()];
                gp[wlen + co] += go.iter().sum::<f64>();
                for ci in 0..ci_n {
                    let base = (co * ci_n + ci) * kvol;
                    let xc = &x[ci * in_cells..(ci + 1) * in_cells];
                    for (o, cell_taps) in taps.iter().enumerate() {
                        let g = go[o];
                        if g == 0.0 {
                            continue;
                        }
                        for &(k, cell) in cell_taps {
                            gp[base + k] += g * xc[cell];
                        }
                        if need_gx {
                            let wk = &p[base..base + kvol];
                            let gxc = &mut gx[ci * in_cells..(ci + 1) * in_cells];
                            for &(k, cell) in cell_taps {
                                gxc[cell] += g * wk[k];
                            }
                        }
                    }
                }
            }
        }
        LayerKind::LayerNorm => {
            let c = l.input[0];
            let s = x.len() / c;
            let n = x.len() as f64;
            let (mean, inv_std) = moments(x);
            let (gain, _) = p.split_at(c);
            let mut sum_g = 0.0;
            let mut sum_gx = 0.0;
            for ch in 0..c {
                for j in ch * s..(ch + 1) * s {
                    let xhat = (x[j] - mean) * inv_std;
                    gp[ch] += gy[j] * xhat;
                    gp[c + ch] += gy[j];
                    let gh = gy[j] * gain[ch];
                    sum_g += gh;
                    sum_gx += gh * xhat;
                }
            }
            if need_gx {
                let (mg, mgx) = (sum_g / n, sum_gx / n);
                for ch in 0..c {
                    for j in ch * s..(ch + 1) * s {
                        let xhat = (x[j] - mean) * inv_std;
                        gx[j] = inv_std * (gy[j] * gain[ch] - mg - xhat * mgx);
                    }
                }
            }
        }
        LayerKind::Relu => {
            for ((g, &xi), &go) in gx.iter_mut().zip(x).zip(gy) {
                *g = if xi > 0.0 { go } else { 0.0 };
            }
        }
        LayerKind::Tanh => {
            for ((g, &yi), &go) in gx.iter_mut().zip(y).zip(gy) {
                *g = go * (1.0 - yi * yi);
            }
        }
        LayerKind::DepthToChannels => {
            let [c, nx, ny, nz] = l.input;
            for ch in 0..c {
                for ix in 0..nx {
                    for iy in 0..ny {
                        for iz in 0..nz {
                            gx[((ch * nx + ix) * ny + iy) * nz + iz] =
                                gy[((ch * nz + iz) * nx + ix) * ny + iy];
                        }
                    }
                }
            }
        }
        LayerKind::Flatten => gx.copy_from_slice(gy),
        LayerKind::Dense => {
            let n = x.len();
            let out = gy.len();
            let (gw, gb) = gp.split_at_mut(out * n);
            if need_gx {
                gx.fill(0.0);
            }
            for o in 0..out {
                let g = gy[o];
                gb[o] += g;
                if g == 0.0 {
                    continue;
                }
                for (gwi, &xi) in gw[o * n..(o + 1) * n].iter_mut().zip(x) {
                    *gwi += g * xi;
                }
                if need_gx {
                    for (gxi, &wi) in gx.iter_mut().zip(&p[o * n..(o + 1) * n]) {
                        *gxi += g * wi;
                    }
                }
            }
        }
    }
}
