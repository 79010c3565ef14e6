use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::tape::{Tape, Var};
use crate::tensor::{ParamLeaf, Tensor};

/// Forward-pass mode. Train mode uses batch statistics and live dropout;
/// eval mode uses running statistics and disables dropout.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Per-channel batch-normalization state: learnable affine plus running
/// statistics updated on every train-mode pass.
#[derive(Clone, Debug)]
pub struct BatchNormState {
    pub gamma_scale: ParamLeaf,
    pub beta_shift: ParamLeaf,
    pub running_mean: Tensor,
    pub running_var: Tensor,
    pub momentum: f64,
    pub eps: f64,
}

impl BatchNormState {
    pub fn new(channels: usize) -> Self {
        BatchNormState {
            gamma_scale: ParamLeaf::new("bn_gamma", Tensor::filled(&[channels], 1.0)),
            beta_shift: ParamLeaf::new("bn_beta", Tensor::zeros(&[channels])),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::filled(&[channels], 1.0),
            momentum: 0.1,
            eps: 1e-5,
        }
    }
}

fn shape_err(op: &str, detail: String) -> Error {
    Error::domain(format!("{op}: {detail}"))
}

/// Elementwise sum of two same-shape tensors.
pub fn add(tape: &mut Tape, a: Var, b: Var) -> Result<Var> {
    if tape.value(a).shape() != tape.value(b).shape() {
        return Err(shape_err(
            "add",
            format!(
                "shape mismatch {:?} vs {:?}",
                tape.value(a).shape(),
                tape.value(b).shape()
            ),
        ));
    }
    let data = tape
        .value(a)
        .data()
        .iter()
        .zip(tape.value(b).data())
        .map(|(x, y)| x + y)
        .collect();
    let out = Tensor::from_vec(tape.value(a).shape(), data)?;
    Ok(tape.push(
        out,
        Some(Box::new(move |g| {
            vec![(a, g.clone()), (b, g.clone())]
        })),
    ))
}

pub fn mul_scalar(tape: &mut Tape, a: Var, factor: f64) -> Var {
    let mut out = tape.value(a).clone();
    for v in out.data_mut() {
        *v *= factor;
    }
    tape.push(
        out,
        Some(Box::new(move |g| {
            let mut gx = g.clone();
            for v in gx.data_mut() {
                *v *= factor;
            }
            vec![(a, gx)]
        })),
    )
}

/// `[m,k] x [k,n] -> [m,n]` matrix product.
pub fn matmul(tape: &mut Tape, a: Var, b: Var) -> Result<Var> {
    let (sa, sb) = (tape.value(a).shape(), tape.value(b).shape());
    if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
        return Err(shape_err("matmul", format!("{sa:?} x {sb:?}")));
    }
    let (m, k, n) = (sa[0], sa[1], sb[1]);
    let av = tape.value(a).clone();
    let bv = tape.value(b).clone();
    let mut out = Tensor::zeros(&[m, n]);
    {
        let o = out.data_mut();
        for i in 0..m {
            for p in 0..k {
                let x = av.data()[i * k + p];
                for j in 0..n {
                    o[i * n + j] += x * bv.data()[p * n + j];
                }
            }
        }
    }
    Ok(tape.push(
        out,
        Some(Box::new(move |g| {
            let mut ga = Tensor::zeros(&[m, k]);
            let mut gb = Tensor::zeros(&[k, n]);
            for i in 0..m {
                for j in 0..n {
                    let gij = g.data()[i * n + j];
                    for p in 0..k {
                        ga.data_mut()[i * k + p] += gij * bv.data()[p * n + j];
                        gb.data_mut()[p * n + j] += gij * av.data()[i * k + p];
                    }
                }
            }
            vec![(a, ga), (b, gb)]
        })),
    ))
}

pub fn transpose2d(tape: &mut Tape, a: Var) -> Result<Var> {
    let s = tape.value(a).shape();
    if s.len() != 2 {
        return Err(shape_err("transpose2d", format!("rank {} input", s.len())));
    }
    let (m, n) = (s[0], s[1]);
    let mut out = Tensor::zeros(&[n, m]);
    for i in 0..m {
        for j in 0..n {
            out.data_mut()[j * m + i] = tape.value(a).data()[i * n + j];
        }
    }
    Ok(tape.push(
        out,
        Some(Box::new(move |g| {
            let mut ga = Tensor::zeros(&[m, n]);
            for i in 0..m {
                for j in 0..n {
                    ga.data_mut()[i * n + j] = g.data()[j * m + i];
                }
            }
            vec![(a, ga)]
        })),
    ))
}

/// Affine map over the last axis: `[..., f_in] -> [..., f_out]`.
pub fn linear(tape: &mut Tape, x: Var, w: Var, b: Var) -> Result<Var> {
    let sx = tape.value(x).shape().to_vec();
    let sw = tape.value(w).shape();
    let sb = tape.value(b).shape();
    if sx.is_empty() || sw.len() != 2 || sb.len() != 1 {
        return Err(shape_err("linear", "expected x[..,fin], w[fin,fout], b[fout]".into()));
    }
    let f_in = *sx.last().unwrap();
    let (wf_in, f_out) = (sw[0], sw[1]);
    if f_in != wf_in || sb[0] != f_out {
        return Err(shape_err(
            "linear",
            format!("x[..,{f_in}] incompatible with w{sw:?}, b{sb:?}"),
        ));
    }
    let rows = tape.value(x).len() / f_in;
    let xv = tape.value(x).clone();
    let wv = tape.value(w).clone();
    let bv = tape.value(b).clone();
    let mut out_shape = sx.clone();
    *out_shape.last_mut().unwrap() = f_out;
    let mut out = Tensor::zeros(&out_shape);
    {
        let o = out.data_mut();
        for r in 0..rows {
            for j in 0..f_out {
                o[r * f_out + j] = bv.data()[j];
            }
            for i in 0..f_in {
                let xi = xv.data()[r * f_in + i];
                if xi == 0.0 {
                    continue;
                }
                for j in 0..f_out {
                    o[r * f_out + j] += xi * wv.data()[i * f_out + j];
                }
            }
        }
    }
    Ok(tape.push(
        out,
        Some(Box::new(move |g| {
            let mut gx = Tensor::zeros(&sx);
            let mut gw = Tensor::zeros(&[f_in, f_out]);
            let mut gb = Tensor::zeros(&[f_out]);
            for r in 0..rows {
                for j in 0..f_out {
                    let grj = g.data()[r * f_out + j];
                    gb.data_mut()[j] += grj;
                    for i in 0..f_in {
                        gx.data_mut()[r * f_in + i] += grj * wv.data()[i * f_out + j];
                        gw.data_mut()[i * f_out + j] += grj * xv.data()[r * f_in + i];
                    }
                }
            }
            vec![(x, gx), (w, gw), (b, gb)]
        })),
    ))
}

pub fn relu(tape: &mut Tape, x: Var) -> Var {
    let xv = tape.value(x).clone();
    let mut out = xv.clone();
    for v in out.data_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    tape.push(
        out,
        Some(Box::new(move |g| {
            let mut gx = g.clone();
            for (gv, xv) in gx.data_mut().iter_mut().zip(xv.data()) {
                if *xv <= 0.0 {
                    *gv = 0.0;
                }
            }
            vec![(x, gx)]
        })),
    )
}

/// Shift-stabilized softmax along `axis`.
pub fn softmax_axis(tape: &mut Tape, x: Var, axis: usize) -> Result<Var> {
    let shape = tape.value(x).shape().to_vec();
    if axis >= shape.len() {
        return Err(shape_err("softmax", format!("axis {axis} of {shape:?}")));
    }
    let axis_len = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    let mut out = tape.value(x).clone();
    {
        let d = out.data_mut();
        for o in 0..outer {
            for i in 0..inner {
                let base = o * axis_len * inner + i;
                let mut max = f64::NEG_INFINITY;
                for k in 0..axis_len {
                    max = max.max(d[base + k * inner]);
                }
                let mut sum = 0.0;
                for k in 0..axis_len {
                    let e = (d[base + k * inner] - max).exp();
                    d[base + k * inner] = e;
                    sum += e;
                }
                for k in 0..axis_len {
                    d[base + k * inner] /= sum;
                }
            }
        }
    }
    let yv = out.clone();
    Ok(tape.push(
        out,
        Some(Box::new(move |g| {
            // dx = y * (g - sum(g * y, axis))
            let mut gx = g.clone();
            let d = gx.data_mut();
            for o in 0..outer {
                for i in 0..inner {
                    let base = o * axis_len * inner + i;
                    let mut dot = 0.0;
                    for k in 0..axis_len {
                        dot += d[base + k * inner] * yv.data()[base + k * inner];
                    }
                    for k in 0..axis_len {
                        let idx = base + k * inner;
                        d[idx] = yv.data()[idx] * (d[idx] - dot);
                    }
                }
            }
            vec![(x, gx)]
        })),
    ))
}

/// Inverted dropout: in train mode each element is zeroed with probability `p`
/// and survivors are scaled by `1/(1-p)`; eval mode is the identity.
pub fn dropout(tape: &mut Tape, x: Var, p: f64, mode: Mode, rng: &mut impl Rng) -> Result<Var> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::domain(format!("dropout probability {p} not in [0,1)")));
    }
    if mode == Mode::Eval || p == 0.0 {
        let out = tape.value(x).clone();
        return Ok(tape.push(out, Some(Box::new(move |g| vec![(x, g.clone())]))));
    }
    let scale = 1.0 / (1.0 - p);
    let mask: Vec<f64> = (0..tape.value(x).len())
        .map(|_| if rng.gen::<f64>() < p { 0.0 } else { scale })
        .collect();
    let mut out = tape.value(x).clone();
    for (v, m) in out.data_mut().iter_mut().zip(&mask) {
        *v *= m;
    }
    Ok(tape.push(
        out,
        Some(Box::new(move |g| {
            let mut gx = g.clone();
            for (v, m) in gx.data_mut().iter_mut().zip(&mask) {
                *v *= m;
            }
            vec![(x, gx)]
        })),
    ))
}

/// 3x3 same-padding cross-correlation without bias:
/// `[N,Cin,H,W] * [Cout,Cin,3,3] -> [N,Cout,H,W]`.
pub fn conv2d_3x3(tape: &mut Tape, x: Var, w: Var) -> Result<Var> {
    let sx = tape.value(x).shape().to_vec();
    let sw = tape.value(w).shape().to_vec();
    if sx.len() != 4 || sw.len() != 4 || sw[2] != 3 || sw[3] != 3 || sx[1] != sw[1] {
        return Err(shape_err("conv2d_3x3", format!("x{sx:?}, w{sw:?}")));
    }
    let (n, c_in, h, wd) = (sx[0], sx[1], sx[2], sx[3]);
    let c_out = sw[0];
    let xv = tape.value(x).clone();
    let wv = tape.value(w).clone();
    let idx_x = move |nn: usize, c: usize, i: usize, j: usize| ((nn * c_in + c) * h + i) * wd + j;
    let idx_o = move |nn: usize, c: usize, i: usize, j: usize| ((nn * c_out + c) * h + i) * wd + j;
    let idx_w = move |co: usize, ci: usize, di: usize, dj: usize| ((co * c_in + ci) * 3 + di) * 3 + dj;
    let mut out = Tensor::zeros(&[n, c_out, h, wd]);
    {
        let o = out.data_mut();
        for nn in 0..n {
            for co in 0..c_out {
                for i in 0..h {
                    for j in 0..wd {
                        let mut acc = 0.0;
                        for ci in 0..c_in {
                            for di in 0..3 {
                                let y = i as isize + di as isize - 1;
                                if y < 0 || y >= h as isize {
                                    continue;
                                }
                                for dj in 0..3 {
                                    let xj = j as isize + dj as isize - 1;
                                    if xj < 0 || xj >= wd as isize {
                                        continue;
                                    }
                                    acc += xv.data()[idx_x(nn, ci, y as usize, xj as usize)]
                                        * wv.data()[idx_w(co, ci, di, dj)];
                                }
                            }
                        }
                        o[idx_o(nn, co, i, j)] = acc;
                    }
                }
            }
        }
    }
    Ok(tape.push(
        out,
        Some(Box::new(move |g| {
            let mut gx = Tensor::zeros(&[n, c_in, h, wd]);
            let mut gw = Tensor::zeros(&[c_out, c_in, 3, 3]);
            for nn in 0..n {
                for co in 0..c_out {
                    for i in 0..h {
                        for j in 0..wd {
                            let go = g.data()[idx_o(nn, co, i, j)];
                            if go == 0.0 {
                                continue;
                            }
                            for ci in 0..c_in {
                                for di in 0..3 {
                                    let y = i as isize + di as isize - 1;
                                    if y < 0 || y >= h as isize {
                                        continue;
                                    }
                                    for dj in 0..3 {
                                        let xj = j as isize + dj as isize - 1;
                                        if xj < 0 || xj >= wd as isize {
                                            continue;
                                        }
                                        gx.data_mut()[idx_x(nn, ci, y as usize, xj as usize)] +=
                                            go * wv.data()[idx_w(co, ci, di, dj)];
                                        gw.data_mut()[idx_w(co, ci, di, dj)] +=
                                            go * xv.data()[idx_x(nn, ci, y as usize, xj as usize)];
                                    }
                                }
                            }
                        }
                    }
                }
            }
            vec![(x, gx), (w, gw)]
        })),
    ))
}

/// Batch normalization over `(N,H,W)` per channel with learnable affine.
///
/// Train mode normalizes with biased batch statistics and updates the running
/// stats as `running <- (1-momentum)*running + momentum*batch`; eval mode
/// normalizes with the running statistics.
pub fn batch_norm2d(
    tape: &mut Tape,
    x: Var,
    gamma: Var,
    beta: Var,
    state: &mut BatchNormState,
    mode: Mode,
) -> Result<Var> {
    let sx = tape.value(x).shape().to_vec();
    if sx.len() != 4 {
        return Err(shape_err("batch_norm2d", format!("rank {} input", sx.len())));
    }
    let (n, c, h, w) = (sx[0], sx[1], sx[2], sx[3]);
    if tape.value(gamma).len() != c || tape.value(beta).len() != c {
        return Err(shape_err("batch_norm2d", "affine length != channels".into()));
    }
    let m = n * h * w;
    if mode == Mode::Train && m < 2 {
        return Err(Error::domain("batch_norm2d needs N*H*W >= 2 in train mode"));
    }
    let eps = state.eps;
    let xv = tape.value(x).clone();
    let gv = tape.value(gamma).clone();
    let idx = move |nn: usize, cc: usize, i: usize, j: usize| ((nn * c + cc) * h + i) * w + j;

    let (mean, var): (Vec<f64>, Vec<f64>) = match mode {
        Mode::Train => {
            let mut mean = vec![0.0; c];
            let mut var = vec![0.0; c];
            for cc in 0..c {
                let mut sum = 0.0;
                for nn in 0..n {
                    for i in 0..h {
                        for j in 0..w {
                            sum += xv.data()[idx(nn, cc, i, j)];
                        }
                    }
                }
                let mu = sum / m as f64;
                let mut sq = 0.0;
                for nn in 0..n {
                    for i in 0..h {
                        for j in 0..w {
                            sq += (xv.data()[idx(nn, cc, i, j)] - mu).powi(2);
                        }
                    }
                }
                mean[cc] = mu;
                var[cc] = sq / m as f64;
            }
            for cc in 0..c {
                if var[cc] < 0.0 {
                    return Err(Error::Internal(format!(
                        "negative batch variance {}",
                        var[cc]
                    )));
                }
                state.running_mean.data_mut()[cc] =
                    (1.0 - state.momentum) * state.running_mean.data()[cc] + state.momentum * mean[cc];
                state.running_var.data_mut()[cc] =
                    (1.0 - state.momentum) * state.running_var.data()[cc] + state.momentum * var[cc];
            }
            (mean, var)
        }
        Mode::Eval => (
            state.running_mean.data().to_vec(),
            state.running_var.data().to_vec(),
        ),
    };
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();

    let mut xhat = Tensor::zeros(&sx);
    let mut out = Tensor::zeros(&sx);
    for cc in 0..c {
        let (gm, bt) = (gv.data()[cc], tape.value(beta).data()[cc]);
        for nn in 0..n {
            for i in 0..h {
                for j in 0..w {
                    let id = idx(nn, cc, i, j);
                    let xh = (xv.data()[id] - mean[cc]) * inv_std[cc];
                    xhat.data_mut()[id] = xh;
                    out.data_mut()[id] = gm * xh + bt;
                }
            }
        }
    }

    Ok(tape.push(
        out,
        Some(Box::new(move |g| {
            let mut ggamma = Tensor::zeros(&[c]);
            let mut gbeta = Tensor::zeros(&[c]);
            let mut gx = Tensor::zeros(&sx);
            for cc in 0..c {
                let mut sum_g = 0.0;
                let mut sum_gx = 0.0;
                for nn in 0..n {
                    for i in 0..h {
                        for j in 0..w {
                            let id = idx(nn, cc, i, j);
                            sum_g += g.data()[id];
                            sum_gx += g.data()[id] * xhat.data()[id];
                        }
                    }
                }
                ggamma.data_mut()[cc] = sum_gx;
                gbeta.data_mut()[cc] = sum_g;
                let scale = gv.data()[cc] * inv_std[cc];
                match mode {
                    Mode::Train => {
                        let mg = sum_g / m as f64;
                        let mgx = sum_gx / m as f64;
                        for nn in 0..n {
                            for i in 0..h {
                                for j in 0..w {
                                    let id = idx(nn, cc, i, j);
                                    gx.data_mut()[id] = scale
                                        * (g.data()[id] - mg - xhat.data()[id] * mgx);
                                }
                            }
                        }
                    }
                    Mode::Eval => {
                        for nn in 0..n {
                            for i in 0..h {
                                for j in 0..w {
                                    let id = idx(nn, cc, i, j);
                                    gx.data_mut()[id] = scale * g.data()[id];
                                }
                            }
                        }
                    }
                }
            }
            vec![(x, gx), (gamma, ggamma), (beta, gbeta)]
        })),
    ))
}

/// Layer normalization over the last axis with learnable affine.
pub fn layer_norm(tape: &mut Tape, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
    let sx = tape.value(x).shape().to_vec();
    let f = *sx
        .last()
        .ok_or_else(|| shape_err("layer_norm", "rank-0 input".into()))?;
    if tape.value(gamma).len() != f || tape.value(beta).len() != f {
        return Err(shape_err("layer_norm", "affine length != feature dim".into()));
    }
    let rows = tape.value(x).len() / f;
    let xv = tape.value(x).clone();
    let gv = tape.value(gamma).clone();
    let mut xhat = Tensor::zeros(&sx);
    let mut inv_std = vec![0.0; rows];
    let mut out = Tensor::zeros(&sx);
    for r in 0..rows {
        let row = &xv.data()[r * f..(r + 1) * f];
        let mu = row.iter().sum::<f64>() / f as f64;
        let var = row.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / f as f64;
        let is = 1.0 / (var + eps).sqrt();
        inv_std[r] = is;
        for k in 0..f {
            let xh = (row[k] - mu) * is;
            xhat.data_mut()[r * f + k] = xh;
            out.data_mut()[r * f + k] = gv.data()[k] * xh + tape.value(beta).data()[k];
        }
    }
    Ok(tape.push(
        out,
        Some(Box::new(move |g| {
            let mut gx = Tensor::zeros(&sx);
            let mut ggamma = Tensor::zeros(&[f]);
            let mut gbeta = Tensor::zeros(&[f]);
            for r in 0..rows {
                let mut mg = 0.0;
                let mut mgx = 0.0;
                for k in 0..f {
                    let id = r * f + k;
                    let dxh = g.data()[id] * gv.data()[k];
                    ggamma.data_mut()[k] += g.data()[id] * xhat.data()[id];
                    gbeta.data_mut()[k] += g.data()[id];
                    mg += dxh;
                    mgx += dxh * xhat.data()[id];
                }
                mg /= f as f64;
                mgx /= f as f64;
                for k in 0..f {
                    let id = r * f + k;
                    let dxh = g.data()[id] * gv.data()[k];
                    gx.data_mut()[id] = inv_std[r] * (dxh - mg - xhat.data()[id] * mgx);
                }
            }
            vec![(x, gx), (gamma, ggamma), (beta, gbeta)]
        })),
    ))
}

/// Mean over the last (spatial) axis; all leading axes preserved.
pub fn mean_last_axis(tape: &mut Tape, x: Var) -> Result<Var> {
    let sx = tape.value(x).shape().to_vec();
    let w = *sx
        .last()
        .ok_or_else(|| shape_err("mean_last_axis", "rank-0 input".into()))?;
    if w == 0 {
        return Err(shape_err("mean_last_axis", "empty last axis".into()));
    }
    let out_shape = sx[..sx.len() - 1].to_vec();
    let rows = tape.value(x).len() / w;
    let mut out = Tensor::zeros(&out_shape);
    for r in 0..rows {
        out.data_mut()[r] =
            tape.value(x).data()[r * w..(r + 1) * w].iter().sum::<f64>() / w as f64;
    }
    Ok(tape.push(
        out,
        Some(Box::new(move |g| {
            let mut gx = Tensor::zeros(&sx);
            for r in 0..rows {
                let gr = g.data()[r] / w as f64;
                for k in 0..w {
                    gx.data_mut()[r * w + k] = gr;
                }
            }
            vec![(x, gx)]
        })),
    ))
}

/// Concatenates `[N, C_i, T]` tensors along the feature axis.
pub fn concat_features(tape: &mut Tape, xs: &[Var]) -> Result<Var> {
    if xs.is_empty() {
        return Err(shape_err("concat_features", "no inputs".into()));
    }
    let first = tape.value(xs[0]).shape().to_vec();
    if first.len() != 3 {
        return Err(shape_err("concat_features", "inputs must be rank 3".into()));
    }
    let (n, t) = (first[0], first[2]);
    let mut channels = Vec::with_capacity(xs.len());
    for &x in xs {
        let s = tape.value(x).shape();
        if s.len() != 3 || s[0] != n || s[2] != t {
            return Err(shape_err("concat_features", format!("incompatible {s:?}")));
        }
        channels.push(s[1]);
    }
    let c_total: usize = channels.iter().sum();
    let mut out = Tensor::zeros(&[n, c_total, t]);
    let mut offset = 0;
    for (&x, &ci) in xs.iter().zip(&channels) {
        for nn in 0..n {
            for c in 0..ci {
                for k in 0..t {
                    out.data_mut()[(nn * c_total + offset + c) * t + k] =
                        tape.value(x).data()[(nn * ci + c) * t + k];
                }
            }
        }
        offset += ci;
    }
    let xs = xs.to_vec();
    Ok(tape.push(
        out,
        Some(Box::new(move |g| {
            let mut grads = Vec::with_capacity(xs.len());
            let mut offset = 0;
            for (&x, &ci) in xs.iter().zip(&channels) {
                let mut gx = Tensor::zeros(&[n, ci, t]);
                for nn in 0..n {
                    for c in 0..ci {
                        for k in 0..t {
                            gx.data_mut()[(nn * ci + c) * t + k] =
                                g.data()[(nn * c_total + offset + c) * t + k];
                        }
                    }
                }
                grads.push((x, gx));
                offset += ci;
            }
            grads
        })),
    ))
}

/// `[N,A,B] -> [N,B,A]`.
pub fn swap_last_axes(tape: &mut Tape, x: Var) -> Result<Var> {
    let s = tape.value(x).shape().to_vec();
    if s.len() != 3 {
        return Err(shape_err("swap_last_axes", format!("rank {} input", s.len())));
    }
    let (n, a, b) = (s[0], s[1], s[2]);
    let mut out = Tensor::zeros(&[n, b, a]);
    for nn in 0..n {
        for i in 0..a {
            for j in 0..b {
                out.data_mut()[(nn * b + j) * a + i] = tape.value(x).data()[(nn * a + i) * b + j];
            }
        }
    }
    Ok(tape.push(
        out,
        Some(Box::new(move |g| {
            let mut gx = Tensor::zeros(&[n, a, b]);
            for nn in 0..n {
                for i in 0..a {
                    for j in 0..b {
                        gx.data_mut()[(nn * a + i) * b + j] = g.data()[(nn * b + j) * a + i];
                    }
                }
            }
            vec![(x, gx)]
        })),
    ))
}

/// Drops a trailing axis of extent 1.
pub fn squeeze_last(tape: &mut Tape, x: Var) -> Result<Var> {
    let s = tape.value(x).shape().to_vec();
    if s.last() != Some(&1) {
        return Err(shape_err("squeeze_last", format!("last axis of {s:?} != 1")));
    }
    let out_shape = s[..s.len() - 1].to_vec();
    let out = Tensor::from_vec(&out_shape, tape.value(x).data().to_vec())?;
    Ok(tape.push(
        out,
        Some(Box::new(move |g| {
            let gx = Tensor::from_vec(&s, g.data().to_vec()).expect("same element count");
            vec![(x, gx)]
        })),
    ))
}

/// Scalar sum of all elements.
pub fn sum_all(tape: &mut Tape, x: Var) -> Var {
    let s = tape.value(x).shape().to_vec();
    let total: f64 = tape.value(x).data().iter().sum();
    tape.push(
        Tensor::scalar(total),
        Some(Box::new(move |g| {
            vec![(x, Tensor::filled(&s, g.item()))]
        })),
    )
}

/// Cross-entropy `-log(pred[label])` of a probability vector against a class
/// index. The prediction is clamped to `>= 1e-12` before the logarithm.
pub fn cross_entropy_loss(tape: &mut Tape, pred: Var, label: usize) -> Result<Var> {
    let p = tape.value(pred);
    let n = p.len();
    if label >= n {
        return Err(Error::domain(format!("label {label} out of range {n}")));
    }
    let sum: f64 = p.data().iter().sum();
    if (sum - 1.0).abs() > 1e-9 || p.data().iter().any(|&v| v < -1e-12) {
        return Err(Error::domain(format!(
            "prediction is not on the probability simplex (sum {sum})"
        )));
    }
    let p_label = p.data()[label].max(1e-12);
    let loss = Tensor::scalar(-p_label.ln());
    let shape = p.shape().to_vec();
    Ok(tape.push(
        loss,
        Some(Box::new(move |g| {
            let mut gp = Tensor::zeros(&shape);
            gp.data_mut()[label] = -g.item() / p_label;
            vec![(pred, gp)]
        })),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng;

    /// Central finite differences against the tape gradient for every input
    /// element of a scalar-valued function.
    fn fd_check(
        build: impl Fn(&mut Tape, &[Var]) -> Var,
        inputs: &[Tensor],
        tol_rel: f64,
    ) {
        let eval = |tensors: &[Tensor]| -> f64 {
            let mut tape = Tape::new();
            let vars: Vec<Var> = tensors.iter().map(|t| tape.leaf(t.clone())).collect();
            let loss = build(&mut tape, &vars);
            tape.value(loss).item()
        };
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
        let loss = build(&mut tape, &vars);
        let grads = tape.backward(loss).unwrap();
        let h = 1e-6;
        for (ti, t) in inputs.iter().enumerate() {
            for k in 0..t.len() {
                let mut plus = inputs.to_vec();
                plus[ti].data_mut()[k] += h;
                let mut minus = inputs.to_vec();
                minus[ti].data_mut()[k] -= h;
                let fd = (eval(&plus) - eval(&minus)) / (2.0 * h);
                let an = grads[vars[ti].0].data()[k];
                let denom = fd.abs().max(an.abs()).max(1e-8);
                assert!(
                    (fd - an).abs() / denom < tol_rel,
                    "input {ti} elem {k}: fd {fd} vs analytic {an}"
                );
            }
        }
    }

    fn random_tensor(shape: &[usize], seed: u64) -> Tensor {
        let mut rng = rng_from_seed(seed);
        let len = shape.iter().product();
        Tensor::from_vec(shape, (0..len).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect()).unwrap()
    }

    #[test]
    fn sum_all_gradient_is_ones() {
        let mut tape = Tape::new();
        let x = tape.leaf(random_tensor(&[3, 2], 1));
        let loss = sum_all(&mut tape, x);
        let grads = tape.backward(loss).unwrap();
        assert!(grads[x.0].data().iter().all(|&g| g == 1.0));
    }

    #[test]
    fn linear_identity_and_bias() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::from_vec(&[2], vec![1.0, 2.0]).unwrap());
        let w = tape.leaf(Tensor::from_vec(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap());
        let b = tape.leaf(Tensor::from_vec(&[2], vec![3.0, 4.0]).unwrap());
        let y = linear(&mut tape, x, w, b).unwrap();
        assert_eq!(tape.value(y).data(), &[4.0, 6.0]);
    }

    #[test]
    fn conv_identity_kernel_and_sums() {
        // center-delta kernel reproduces the input
        let mut tape = Tape::new();
        let x = tape.leaf(random_tensor(&[1, 1, 3, 3], 2));
        let mut kernel = Tensor::zeros(&[1, 1, 3, 3]);
        kernel.data_mut()[4] = 1.0;
        let w = tape.leaf(kernel);
        let y = conv2d_3x3(&mut tape, x, w).unwrap();
        assert_eq!(tape.value(y).data(), tape.value(x).data());

        // all-ones kernel on all-ones input counts the in-bounds neighborhood
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::filled(&[1, 1, 3, 3], 1.0));
        let w = tape.leaf(Tensor::filled(&[1, 1, 3, 3], 1.0));
        let y = conv2d_3x3(&mut tape, x, w).unwrap();
        assert_eq!(
            tape.value(y).data(),
            &[4.0, 6.0, 4.0, 6.0, 9.0, 6.0, 4.0, 6.0, 4.0]
        );

        // zero kernel gives zero output
        let mut tape = Tape::new();
        let x = tape.leaf(random_tensor(&[2, 3, 4, 5], 3));
        let w = tape.leaf(Tensor::zeros(&[2, 3, 3, 3]));
        let y = conv2d_3x3(&mut tape, x, w).unwrap();
        assert!(tape.value(y).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn softmax_properties() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::from_vec(&[3], vec![0.0, 0.0, 0.0]).unwrap());
        let y = softmax_axis(&mut tape, x, 0).unwrap();
        for &v in tape.value(y).data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        // shift invariance and normalization
        let raw = random_tensor(&[2, 4], 4);
        let mut shifted = raw.clone();
        for v in shifted.data_mut() {
            *v += 123.456;
        }
        let mut tape = Tape::new();
        let a = tape.leaf(raw);
        let b = tape.leaf(shifted);
        let ya = softmax_axis(&mut tape, a, 1).unwrap();
        let yb = softmax_axis(&mut tape, b, 1).unwrap();
        for (u, v) in tape.value(ya).data().iter().zip(tape.value(yb).data()) {
            assert!((u - v).abs() < 1e-9);
        }
        for row in 0..2 {
            let sum: f64 = tape.value(ya).data()[row * 4..(row + 1) * 4].iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn cross_entropy_reference_values() {
        let mut tape = Tape::new();
        let p = tape.leaf(Tensor::from_vec(&[3], vec![0.8, 0.1, 0.1]).unwrap());
        let loss = cross_entropy_loss(&mut tape, p, 0).unwrap();
        assert!((tape.value(loss).item() - 0.22314355131420976).abs() < 1e-12);

        let mut tape = Tape::new();
        let p = tape.leaf(Tensor::filled(&[3], 1.0 / 3.0));
        let loss = cross_entropy_loss(&mut tape, p, 2).unwrap();
        assert!((tape.value(loss).item() - 3.0f64.ln()).abs() < 1e-12);

        let mut tape = Tape::new();
        let p = tape.leaf(Tensor::from_vec(&[3], vec![1.0, 0.0, 0.0]).unwrap());
        let loss = cross_entropy_loss(&mut tape, p, 0).unwrap();
        assert_eq!(tape.value(loss).item(), 0.0);

        let mut tape = Tape::new();
        let p = tape.leaf(Tensor::from_vec(&[3], vec![0.9, 0.4, 0.1]).unwrap());
        assert!(cross_entropy_loss(&mut tape, p, 0).is_err());
    }

    #[test]
    fn softmax_cross_entropy_gradient_is_p_minus_y() {
        let logits = random_tensor(&[3], 5);
        let mut tape = Tape::new();
        let x = tape.leaf(logits.clone());
        let p = softmax_axis(&mut tape, x, 0).unwrap();
        let loss = cross_entropy_loss(&mut tape, p, 1).unwrap();
        let grads = tape.backward(loss).unwrap();
        let probs = tape.value(p).data();
        for k in 0..3 {
            let expect = probs[k] - if k == 1 { 1.0 } else { 0.0 };
            assert!((grads[x.0].data()[k] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn dropout_eval_is_identity_and_train_scales() {
        let x0 = random_tensor(&[100], 6);
        let mut rng = rng_from_seed(9);
        let mut tape = Tape::new();
        let x = tape.leaf(x0.clone());
        let y = dropout(&mut tape, x, 0.7, Mode::Eval, &mut rng).unwrap();
        assert_eq!(tape.value(y).data(), x0.data());

        let mut tape = Tape::new();
        let x = tape.leaf(x0.clone());
        let y = dropout(&mut tape, x, 0.5, Mode::Train, &mut rng).unwrap();
        for (yv, xv) in tape.value(y).data().iter().zip(x0.data()) {
            assert!(*yv == 0.0 || (*yv - 2.0 * xv).abs() < 1e-15);
        }
    }

    #[test]
    fn batch_norm_train_statistics() {
        // constant channel -> zero pre-affine output (plus beta shift)
        let mut st = BatchNormState::new(1);
        st.beta_shift.value.data_mut()[0] = 0.25;
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::filled(&[2, 1, 2, 2], 5.0));
        let g = tape.leaf(st.gamma_scale.value.clone());
        let b = tape.leaf(st.beta_shift.value.clone());
        let y = batch_norm2d(&mut tape, x, g, b, &mut st, Mode::Train).unwrap();
        for &v in tape.value(y).data() {
            assert!((v - 0.25).abs() < 1e-9);
        }

        // random input -> per-channel mean 0, variance ~1 pre-affine
        let mut st = BatchNormState::new(3);
        let x0 = random_tensor(&[4, 3, 5, 5], 7);
        let mut tape = Tape::new();
        let x = tape.leaf(x0);
        let g = tape.leaf(st.gamma_scale.value.clone());
        let b = tape.leaf(st.beta_shift.value.clone());
        let y = batch_norm2d(&mut tape, x, g, b, &mut st, Mode::Train).unwrap();
        let out = tape.value(y);
        for c in 0..3 {
            let mut vals = Vec::new();
            for n in 0..4 {
                for i in 0..5 {
                    for j in 0..5 {
                        vals.push(out.data()[((n * 3 + c) * 5 + i) * 5 + j]);
                    }
                }
            }
            let mean: f64 = vals.iter().sum::<f64>() / vals.len() as f64;
            let var: f64 = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
            assert!(mean.abs() < 1e-9);
            assert!((var - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn batch_norm_eval_uses_running_stats_only() {
        let mut st = BatchNormState::new(1);
        st.running_mean.data_mut()[0] = 0.0;
        st.running_var.data_mut()[0] = 1.0;
        let x0 = random_tensor(&[1, 1, 2, 2], 8);
        let mut tape = Tape::new();
        let x = tape.leaf(x0.clone());
        let g = tape.leaf(st.gamma_scale.value.clone());
        let b = tape.leaf(st.beta_shift.value.clone());
        let y = batch_norm2d(&mut tape, x, g, b, &mut st, Mode::Eval).unwrap();
        let scale = 1.0 / (1.0f64 + 1e-5).sqrt();
        for (yv, xv) in tape.value(y).data().iter().zip(x0.data()) {
            assert!((yv - xv * scale).abs() < 1e-12);
        }
    }

    #[test]
    fn layer_norm_rows_are_standardized() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::from_vec(&[1, 3], vec![1.0, 1.0, 1.0]).unwrap());
        let g = tape.leaf(Tensor::filled(&[3], 1.0));
        let b = tape.leaf(Tensor::zeros(&[3]));
        let y = layer_norm(&mut tape, x, g, b, 1e-5).unwrap();
        for &v in tape.value(y).data() {
            assert!(v.abs() < 1e-9);
        }

        let x0 = random_tensor(&[4, 6], 9);
        let mut tape = Tape::new();
        let x = tape.leaf(x0);
        let g = tape.leaf(Tensor::filled(&[6], 1.0));
        let b = tape.leaf(Tensor::zeros(&[6]));
        let y = layer_norm(&mut tape, x, g, b, 1e-12).unwrap();
        for r in 0..4 {
            let row = &tape.value(y).data()[r * 6..(r + 1) * 6];
            let mean: f64 = row.iter().sum::<f64>() / 6.0;
            assert!(mean.abs() < 1e-9);
        }
    }

    #[test]
    fn mean_last_axis_values() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::from_vec(&[1, 1, 1, 3], vec![1.0, 2.0, 3.0]).unwrap());
        let y = mean_last_axis(&mut tape, x).unwrap();
        assert_eq!(tape.value(y).data(), &[2.0]);
        assert_eq!(tape.value(y).shape(), &[1, 1, 1]);
    }

    #[test]
    fn gradients_match_finite_differences() {
        // compose each op into a scalar and compare against central differences
        fd_check(
            |tape, vars| {
                let y = conv2d_3x3(tape, vars[0], vars[1]).unwrap();
                let r = relu(tape, y);
                sum_all(tape, r)
            },
            &[random_tensor(&[2, 2, 3, 4], 10), random_tensor(&[2, 2, 3, 3], 11)],
            1e-5,
        );
        fd_check(
            |tape, vars| {
                let y = linear(tape, vars[0], vars[1], vars[2]).unwrap();
                let s = softmax_axis(tape, y, 1).unwrap();
                let l = mul_scalar(tape, s, 3.0);
                sum_all(tape, l)
            },
            &[
                random_tensor(&[3, 4], 12),
                random_tensor(&[4, 2], 13),
                random_tensor(&[2], 14),
            ],
            1e-5,
        );
        fd_check(
            |tape, vars| {
                let g = tape.leaf(Tensor::from_vec(&[3], vec![1.1, 0.9, 1.2]).unwrap());
                let b = tape.leaf(Tensor::from_vec(&[3], vec![0.1, -0.2, 0.0]).unwrap());
                let y = layer_norm(tape, vars[0], g, b, 1e-5).unwrap();
                sum_all_squared(tape, y)
            },
            &[random_tensor(&[4, 3], 15)],
            1e-4,
        );
        fd_check(
            |tape, vars| {
                let mut st = BatchNormState::new(2);
                let y =
                    batch_norm2d(tape, vars[0], vars[1], vars[2], &mut st, Mode::Train).unwrap();
                sum_all_squared(tape, y)
            },
            &[
                random_tensor(&[2, 2, 2, 3], 16),
                random_tensor(&[2], 17),
                random_tensor(&[2], 18),
            ],
            1e-4,
        );
        fd_check(
            |tape, vars| {
                // attention-shaped composition: scores, softmax, residual
                let k = matmul(tape, vars[0], vars[1]).unwrap(); // [n,f]
                let kt = transpose2d(tape, k).unwrap();
                let scores = matmul(tape, vars[2], kt).unwrap(); // [1,n]
                let scaled = mul_scalar(tape, scores, 0.5);
                let w = softmax_axis(tape, scaled, 1).unwrap();
                let v = matmul(tape, vars[0], vars[3]).unwrap();
                let q = matmul(tape, w, v).unwrap();
                let q = add(tape, q, vars[2]).unwrap();
                sum_all_squared(tape, q)
            },
            &[
                random_tensor(&[3, 2], 19),
                random_tensor(&[2, 2], 20),
                random_tensor(&[1, 2], 21),
                random_tensor(&[2, 2], 22),
            ],
            1e-5,
        );
        fd_check(
            |tape, vars| {
                let a = swap_last_axes(tape, vars[0]).unwrap(); // [2,3,2]
                let m = mean_last_axis(tape, a).unwrap(); // [2,3]
                let c = concat_features(tape, &[vars[1], vars[1]]).unwrap();
                let cm = mean_last_axis(tape, c).unwrap(); // [2,4]
                let s1 = sum_all_squared(tape, m);
                let s2 = sum_all_squared(tape, cm);
                add_scalars(tape, s1, s2)
            },
            &[random_tensor(&[2, 2, 3], 23), random_tensor(&[2, 2, 5], 24)],
            1e-5,
        );
    }

    fn add_scalars(tape: &mut Tape, a: Var, b: Var) -> Var {
        add(tape, a, b).unwrap()
    }

    // squared sum to exercise nonlinear paths in fd checks
    fn sum_all_squared(tape: &mut Tape, x: Var) -> Var {
        let xv = tape.value(x).clone();
        let mut sq = xv.clone();
        for v in sq.data_mut() {
            *v = *v * *v;
        }
        let total: f64 = sq.data().iter().sum();
        tape.push(
            Tensor::scalar(total),
            Some(Box::new(move |g| {
                let mut gx = xv.clone();
                for v in gx.data_mut() {
                    *v *= 2.0 * g.item();
                }
                vec![(x, gx)]
            })),
        )
    }
}
