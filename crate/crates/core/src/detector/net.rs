//! Layer arithmetic for the factorised network, generic over the float type
//! so gradients can be checked in double precision.

use num_traits::Float;

use super::{BlockConfig, DetectorConfig};
use crate::error::{Error, Result};

pub(crate) trait Real: Float + std::iter::Sum + Send + Sync + 'static {}
impl Real for f32 {}
impl Real for f64 {}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Dims {
    pub t: usize,
    pub h: usize,
    pub w: usize,
}

impl Dims {
    pub fn plane(&self) -> usize {
        self.h * self.w
    }

    pub fn len(&self) -> usize {
        self.t * self.h * self.w
    }
}

/// A named slice of the flat weight vector.
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Segment {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub len: usize,
}

#[derive(Clone, Debug)]
pub(crate) struct BlockLayout {
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    pub s: usize,
    pub p: usize,
    pub kt: usize,
    pub st: usize,
    pub pt: usize,
    pub pool_t: usize,
    pub pool_s: usize,
    pub input: Dims,
    pub spatial: Dims,
    pub temporal: Dims,
    pub output: Dims,
    pub w_spatial: usize,
    pub w_temporal: usize,
    pub b_temporal: usize,
}

#[derive(Clone, Debug)]
pub(crate) struct Layout {
    pub blocks: Vec<BlockLayout>,
    pub feat: usize,
    pub hidden: usize,
    pub w_hidden: usize,
    pub b_hidden: usize,
    pub w_out: usize,
    pub b_out: usize,
    pub n_params: usize,
    pub segments: Vec<Segment>,
    pub input_gain: f64,
}

/// Odd kernels are padded to keep size at stride 1; even kernels are not padded.
pub(crate) fn same_padding(k: usize) -> usize {
    if k % 2 == 1 {
        k / 2
    } else {
        0
    }
}

fn conv_len(n: usize, k: usize, s: usize, p: usize) -> Option<usize> {
    (n + 2 * p >= k).then(|| (n + 2 * p - k) / s + 1)
}

impl Layout {
    pub fn new(cfg: &DetectorConfig) -> Result<Self> {
        let inp = &cfg.input;
        if inp.frames == 0 || inp.height == 0 || inp.width == 0 {
            return Err(Error::Config("input dimensions must be positive".into()));
        }
        if cfg.blocks.is_empty() || cfg.head_hidden == 0 {
            return Err(Error::Config("detector needs at least one block and a hidden layer".into()));
        }
        let mut dims = Dims {
            t: inp.frames,
            h: inp.height,
            w: inp.width,
        };
        let mut cin = 1;
        let mut off = 0;
        let mut segments = Vec::new();
        let mut push = |name: String, shape: Vec<usize>, off: &mut usize| {
            let len = shape.iter().product();
            segments.push(Segment {
                name,
                shape,
                offset: *off,
                len,
            });
            *off += len;
            *off - len
        };
        let mut blocks = Vec::with_capacity(cfg.blocks.len());
        for (i, b) in cfg.blocks.iter().enumerate() {
            let BlockConfig {
                channels,
                spatial_kernel: k,
                spatial_stride: s,
                temporal_kernel: kt,
                temporal_stride: st,
                pool_t,
                pool_s,
            } = *b;
            if channels == 0 || k == 0 || s == 0 || kt == 0 || st == 0 || pool_t == 0 || pool_s == 0 {
                return Err(Error::Config(format!("block {i}: sizes must be positive")));
            }
            let p = same_padding(k);
            let pt = same_padding(kt);
            let too_small = || Error::Config(format!("block {i}: input {}x{}x{} too small", dims.t, dims.h, dims.w));
            let spatial = Dims {
                t: dims.t,
                h: conv_len(dims.h, k, s, p).ok_or_else(too_small)?,
                w: conv_len(dims.w, k, s, p).ok_or_else(too_small)?,
            };
            let temporal = Dims {
                t: conv_len(dims.t, kt, st, pt).ok_or_else(too_small)?,
                ..spatial
            };
            let output = Dims {
                t: temporal.t / pool_t,
                h: temporal.h / pool_s,
                w: temporal.w / pool_s,
            };
            if output.len() == 0 {
                return Err(too_small());
            }
            let w_spatial = push(format!("block{i}.spatial"), vec![channels, cin, k, k], &mut off);
            let w_temporal = push(format!("block{i}.temporal"), vec![channels, channels, kt], &mut off);
            let b_temporal = push(format!("block{i}.temporal_bias"), vec![channels], &mut off);
            blocks.push(BlockLayout {
                cin,
                cout: channels,
                k,
                s,
                p,
                kt,
                st,
                pt,
                pool_t,
                pool_s,
                input: dims,
                spatial,
                temporal,
                output,
                w_spatial,
                w_temporal,
                b_temporal,
            });
            dims = output;
            cin = channels;
        }
        let hidden = cfg.head_hidden;
        let w_hidden = push("head.hidden".into(), vec![hidden, cin], &mut off);
        let b_hidden = push("head.hidden_bias".into(), vec![hidden], &mut off);
        let w_out = push("head.out".into(), vec![1, hidden], &mut off);
        let b_out = push("head.out_bias".into(), vec![1], &mut off);
        Ok(Self {
            blocks,
            feat: cin,
            hidden,
            w_hidden,
            b_hidden,
            w_out,
            b_out,
            n_params: off,
            segments,
            input_gain: cfg.input_gain,
        })
    }

    pub fn input_len(&self) -> usize {
        self.blocks[0].input.len()
    }
}

/// Output positions `y` whose input index `y * s + off` lies in `[0, n_in)`.
#[inline]
fn valid(n_out: usize, n_in: usize, s: usize, off: isize) -> (usize, usize) {
    let s_i = s as isize;
    let lo = if off >= 0 { 0 } else { ((-off + s_i - 1) / s_i) as usize };
    let last = n_in as isize - 1 - off;
    let hi = if last < 0 { 0 } else { ((last / s_i) as usize + 1).min(n_out) };
    (lo, hi.max(lo))
}

#[inline]
pub(crate) fn sigmoid<F: Real>(x: F) -> F {
    F::one() / (F::one() + (-x).exp())
}

#[inline]
fn silu<F: Real>(x: F) -> F {
    x * sigmoid(x)
}

#[inline]
fn silu_grad<F: Real>(x: F) -> F {
    let s = sigmoid(x);
    s * (F::one() + x * (F::one() - s))
}

/// Class-weighted binary cross-entropy of a logit, and its derivative.
pub(crate) fn bce<F: Real>(z: F, positive: bool, pos_weight: F) -> (F, F) {
    // log(1 + e^x) without overflow
    let softplus = |x: F| x.max(F::zero()) + (-x.abs()).exp().ln_1p();
    if positive {
        (pos_weight * softplus(-z), pos_weight * (sigmoid(z) - F::one()))
    } else {
        (softplus(z), sigmoid(z))
    }
}

pub(crate) struct BlockTrace<F> {
    spatial: Vec<F>,
    pre: Vec<F>,
    out: Vec<F>,
}

pub(crate) struct Trace<F> {
    blocks: Vec<BlockTrace<F>>,
    feat: Vec<F>,
    hidden_pre: Vec<F>,
    pub logit: F,
}

fn spatial_conv<F: Real>(b: &BlockLayout, w: &[F], x: &[F]) -> Vec<F> {
    let (id, od) = (b.input, b.spatial);
    let mut out = vec![F::zero(); b.cout * od.len()];
    if b.p == 0 && b.k == b.s {
        patch_conv(b, w, x, &mut out);
        return out;
    }
    for o in 0..b.cout {
        for i in 0..b.cin {
            for ky in 0..b.k {
                let offy = ky as isize - b.p as isize;
                let (y0, y1) = valid(od.h, id.h, b.s, offy);
                for kx in 0..b.k {
                    let offx = kx as isize - b.p as isize;
                    let (x0, x1) = valid(od.w, id.w, b.s, offx);
                    if x0 >= x1 {
                        continue;
                    }
                    let wv = w[((o * b.cin + i) * b.k + ky) * b.k + kx];
                    for t in 0..id.t {
                        let src = &x[(i * id.t + t) * id.plane()..][..id.plane()];
                        let dst = &mut out[(o * od.t + t) * od.plane()..][..od.plane()];
                        for y in y0..y1 {
                            let iy = ((y * b.s) as isize + offy) as usize;
                            let srow = &src[iy * id.w..][..id.w];
                            let drow = &mut dst[y * od.w + x0..y * od.w + x1];
                            let ix0 = ((x0 * b.s) as isize + offx) as usize;
                            if b.s == 1 {
                                for (d, &v) in drow.iter_mut().zip(&srow[ix0..ix0 + (x1 - x0)]) {
                                    *d = *d + wv * v;
                                }
                            } else {
                                for (d, &v) in drow.iter_mut().zip(srow[ix0..].iter().step_by(b.s)) {
                                    *d = *d + wv * v;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Non-overlapping, unpadded patches (kernel equal to stride).
fn patch_conv<F: Real>(b: &BlockLayout, w: &[F], x: &[F], out: &mut [F]) {
    let (id, od) = (b.input, b.spatial);
    let k = b.k;
    for o in 0..b.cout {
        for i in 0..b.cin {
            let wk = &w[(o * b.cin + i) * k * k..][..k * k];
            for t in 0..id.t {
                let src = &x[(i * id.t + t) * id.plane()..][..id.plane()];
                let dst = &mut out[(o * od.t + t) * od.plane()..][..od.plane()];
                for y in 0..od.h {
                    let drow = &mut dst[y * od.w..][..od.w];
                    for ky in 0..k {
                        let srow = &src[(y * k + ky) * id.w..][..od.w * k];
                        let wr = &wk[ky * k..][..k];
                        for (d, patch) in drow.iter_mut().zip(srow.chunks_exact(k)) {
                            *d = *d + patch.iter().zip(wr).fold(F::zero(), |a, (&p, &q)| a + p * q);
                        }
                    }
                }
            }
        }
    }
}

fn spatial_conv_back<F: Real>(
    b: &BlockLayout,
    w: &[F],
    x: &[F],
    gout: &[F],
    gw: &mut [F],
    mut gx: Option<&mut [F]>,
) {
    let (id, od) = (b.input, b.spatial);
    if b.p == 0 && b.k == b.s {
        patch_conv_back(b, w, x, gout, gw, gx);
        return;
    }
    for o in 0..b.cout {
        for i in 0..b.cin {
            for ky in 0..b.k {
                let offy = ky as isize - b.p as isize;
                let (y0, y1) = valid(od.h, id.h, b.s, offy);
                for kx in 0..b.k {
                    let offx = kx as isize - b.p as isize;
                    let (x0, x1) = valid(od.w, id.w, b.s, offx);
                    if x0 >= x1 {
                        continue;
                    }
                    let wi = ((o * b.cin + i) * b.k + ky) * b.k + kx;
                    let wv = w[wi];
                    let ix0 = ((x0 * b.s) as isize + offx) as usize;
                    let n = x1 - x0;
                    let mut acc = F::zero();
                    for t in 0..id.t {
                        let src = &x[(i * id.t + t) * id.plane()..][..id.plane()];
                        let g = &gout[(o * od.t + t) * od.plane()..][..od.plane()];
                        for y in y0..y1 {
                            let iy = ((y * b.s) as isize + offy) as usize;
                            let srow = &src[iy * id.w..][..id.w];
                            let grow = &g[y * od.w + x0..y * od.w + x1];
                            if b.s == 1 {
                                acc = acc + dot(grow, &srow[ix0..ix0 + n]);
                            } else {
                                acc = grow
                                    .iter()
                                    .zip(srow[ix0..].iter().step_by(b.s))
                                    .fold(acc, |a, (&p, &q)| a + p * q);
                            }
                            if let Some(gx) = gx.as_deref_mut() {
                                let gxrow = &mut gx[(i * id.t + t) * id.plane() + iy * id.w..][..id.w];
                                if b.s == 1 {
                                    for (d, &p) in gxrow[ix0..ix0 + n].iter_mut().zip(grow) {
                                        *d = *d + wv * p;
                                    }
                                } else {
                                    for (d, &p) in gxrow[ix0..].iter_mut().step_by(b.s).zip(grow) {
                                        *d = *d + wv * p;
                                    }
                                }
                            }
                        }
                    }
                    gw[wi] = gw[wi] + acc;
                }
            }
        }
    }
}

fn patch_conv_back<F: Real>(
    b: &BlockLayout,
    w: &[F],
    x: &[F],
    gout: &[F],
    gw: &mut [F],
    mut gx: Option<&mut [F]>,
) {
    let (id, od) = (b.input, b.spatial);
    let k = b.k;
    let mut acc = vec![F::zero(); k * k];
    for o in 0..b.cout {
        for i in 0..b.cin {
            acc.fill(F::zero());
            let wk = &w[(o * b.cin + i) * k * k..][..k * k];
            for t in 0..id.t {
                let src = &x[(i * id.t + t) * id.plane()..][..id.plane()];
                let g = &gout[(o * od.t + t) * od.plane()..][..od.plane()];
                for y in 0..od.h {
                    let grow = &g[y * od.w..][..od.w];
                    for ky in 0..k {
                        let row = (y * k + ky) * id.w;
                        let srow = &src[row..][..od.w * k];
                        let a = &mut acc[ky * k..][..k];
                        for (&gv, patch) in grow.iter().zip(srow.chunks_exact(k)) {
                            for (av, &p) in a.iter_mut().zip(patch) {
                                *av = *av + gv * p;
                            }
                        }
                        if let Some(gx) = gx.as_deref_mut() {
                            let wr = &wk[ky * k..][..k];
                            let gxrow = &mut gx[(i * id.t + t) * id.plane() + row..][..od.w * k];
                            for (&gv, patch) in grow.iter().zip(gxrow.chunks_exact_mut(k)) {
                                for (d, &q) in patch.iter_mut().zip(wr) {
                                    *d = *d + gv * q;
                                }
                            }
                        }
                    }
                }
            }
            let base = (o * b.cin + i) * k * k;
            for (gv, &a) in gw[base..base + k * k].iter_mut().zip(&acc) {
                *gv = *gv + a;
            }
        }
    }
}

/// Dot product with eight independent accumulators so the loop vectorises.
#[inline]
fn dot<F: Real>(a: &[F], b: &[F]) -> F {
    let mut acc = [F::zero(); 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let tail = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .fold(F::zero(), |s, (&p, &q)| s + p * q);
    for (pa, pb) in ca.zip(cb) {
        for j in 0..8 {
            acc[j] = acc[j] + pa[j] * pb[j];
        }
    }
    acc.iter().fold(tail, |s, &v| s + v)
}

fn temporal_conv<F: Real>(b: &BlockLayout, w: &[F], bias: &[F], x: &[F]) -> Vec<F> {
    let (id, od) = (b.spatial, b.temporal);
    let plane = od.plane();
    let mut out = vec![F::zero(); b.cout * od.len()];
    for o in 0..b.cout {
        for t in 0..od.t {
            let dst = &mut out[(o * od.t + t) * plane..][..plane];
            dst.fill(bias[o]);
            for i in 0..b.cout {
                for kk in 0..b.kt {
                    let ti = (t * b.st + kk) as isize - b.pt as isize;
                    if ti < 0 || ti as usize >= id.t {
                        continue;
                    }
                    let wv = w[(o * b.cout + i) * b.kt + kk];
                    let src = &x[(i * id.t + ti as usize) * plane..][..plane];
                    for (d, &s) in dst.iter_mut().zip(src) {
                        *d = *d + wv * s;
                    }
                }
            }
        }
    }
    out
}

fn temporal_conv_back<F: Real>(
    b: &BlockLayout,
    w: &[F],
    x: &[F],
    gout: &[F],
    gw: &mut [F],
    gb: &mut [F],
    gx: &mut [F],
) {
    let (id, od) = (b.spatial, b.temporal);
    let plane = od.plane();
    for o in 0..b.cout {
        for t in 0..od.t {
            let g = &gout[(o * od.t + t) * plane..][..plane];
            gb[o] = gb[o] + g.iter().fold(F::zero(), |a, &v| a + v);
            for i in 0..b.cout {
                for kk in 0..b.kt {
                    let ti = (t * b.st + kk) as isize - b.pt as isize;
                    if ti < 0 || ti as usize >= id.t {
                        continue;
                    }
                    let wi = (o * b.cout + i) * b.kt + kk;
                    let base = (i * id.t + ti as usize) * plane;
                    let src = &x[base..][..plane];
                    gw[wi] = gw[wi] + dot(g, src);
                    let wv = w[wi];
                    for (d, &p) in gx[base..][..plane].iter_mut().zip(g) {
                        *d = *d + wv * p;
                    }
                }
            }
        }
    }
}

fn avg_pool<F: Real>(b: &BlockLayout, x: &[F]) -> Vec<F> {
    let (id, od) = (b.temporal, b.output);
    if b.pool_t == 1 && b.pool_s == 1 {
        return x.to_vec();
    }
    let scale = F::one() / F::from(b.pool_t * b.pool_s * b.pool_s).unwrap();
    let mut out = vec![F::zero(); b.cout * od.len()];
    for c in 0..b.cout {
        for t in 0..od.t {
            for y in 0..od.h {
                for xx in 0..od.w {
                    let mut acc = F::zero();
                    for a in 0..b.pool_t {
                        for dy in 0..b.pool_s {
                            let row = ((c * id.t + t * b.pool_t + a) * id.h + y * b.pool_s + dy) * id.w;
                            for dx in 0..b.pool_s {
                                acc = acc + x[row + xx * b.pool_s + dx];
                            }
                        }
                    }
                    out[((c * od.t + t) * od.h + y) * od.w + xx] = acc * scale;
                }
            }
        }
    }
    out
}

fn avg_pool_back<F: Real>(b: &BlockLayout, gout: &[F]) -> Vec<F> {
    let (id, od) = (b.temporal, b.output);
    if b.pool_t == 1 && b.pool_s == 1 {
        return gout.to_vec();
    }
    let scale = F::one() / F::from(b.pool_t * b.pool_s * b.pool_s).unwrap();
    let mut gx = vec![F::zero(); b.cout * id.len()];
    for c in 0..b.cout {
        for t in 0..od.t {
            for y in 0..od.h {
                for xx in 0..od.w {
                    let g = gout[((c * od.t + t) * od.h + y) * od.w + xx] * scale;
                    for a in 0..b.pool_t {
                        for dy in 0..b.pool_s {
                            let row = ((c * id.t + t * b.pool_t + a) * id.h + y * b.pool_s + dy) * id.w;
                            for dx in 0..b.pool_s {
                                gx[row + xx * b.pool_s + dx] = g;
                            }
                        }
                    }
                }
            }
        }
    }
    gx
}

pub(crate) fn forward<F: Real>(l: &Layout, params: &[F], input: &[F]) -> Trace<F> {
    debug_assert_eq!(params.len(), l.n_params);
    debug_assert_eq!(input.len(), l.input_len());
    let mut blocks: Vec<BlockTrace<F>> = Vec::with_capacity(l.blocks.len());
    for (bi, b) in l.blocks.iter().enumerate() {
        let x: &[F] = if bi == 0 { input } else { &blocks[bi - 1].out };
        let mut spatial = spatial_conv(b, &params[b.w_spatial..], x);
        if bi == 0 {
            // the first convolution has no bias, so scaling its output scales the input
            let g = F::from(l.input_gain).unwrap();
            spatial.iter_mut().for_each(|v| *v = *v * g);
        }
        let pre = temporal_conv(b, &params[b.w_temporal..], &params[b.b_temporal..], &spatial);
        let act: Vec<F> = pre.iter().map(|&v| silu(v)).collect();
        let out = avg_pool(b, &act);
        blocks.push(BlockTrace { spatial, pre, out });
    }
    let last = l.blocks.last().expect("layout has blocks");
    let n = last.output.len();
    let inv_n = F::one() / F::from(n).unwrap();
    let top = &blocks.last().expect("layout has blocks").out;
    let feat: Vec<F> = (0..l.feat)
        .map(|c| top[c * n..(c + 1) * n].iter().copied().sum::<F>() * inv_n)
        .collect();
    let hidden_pre: Vec<F> = (0..l.hidden)
        .map(|j| {
            let row = &params[l.w_hidden + j * l.feat..][..l.feat];
            row.iter().zip(&feat).fold(params[l.b_hidden + j], |a, (&w, &f)| a + w * f)
        })
        .collect();
    let logit = hidden_pre
        .iter()
        .enumerate()
        .fold(params[l.b_out], |a, (j, &h)| a + params[l.w_out + j] * silu(h));
    Trace {
        blocks,
        feat,
        hidden_pre,
        logit,
    }
}

/// Adds `dlogit * d(logit)/d(params)` into `grad`.
pub(crate) fn backward<F: Real>(l: &Layout, params: &[F], input: &[F], tr: &Trace<F>, dlogit: F, grad: &mut [F]) {
    grad[l.b_out] = grad[l.b_out] + dlogit;
    let mut gfeat = vec![F::zero(); l.feat];
    for j in 0..l.hidden {
        let hp = tr.hidden_pre[j];
        grad[l.w_out + j] = grad[l.w_out + j] + dlogit * silu(hp);
        let gh = dlogit * params[l.w_out + j] * silu_grad(hp);
        grad[l.b_hidden + j] = grad[l.b_hidden + j] + gh;
        for c in 0..l.feat {
            let wi = l.w_hidden + j * l.feat + c;
            grad[wi] = grad[wi] + gh * tr.feat[c];
            gfeat[c] = gfeat[c] + gh * params[wi];
        }
    }
    let last = l.blocks.last().expect("layout has blocks");
    let n = last.output.len();
    let inv_n = F::one() / F::from(n).unwrap();
    let mut gout: Vec<F> = Vec::with_capacity(l.feat * n);
    for &g in &gfeat {
        gout.extend(std::iter::repeat(g * inv_n).take(n));
    }

    for (bi, b) in l.blocks.iter().enumerate().rev() {
        let bt = &tr.blocks[bi];
        let mut gpre = avg_pool_back(b, &gout);
        for (g, &x) in gpre.iter_mut().zip(&bt.pre) {
            *g = *g * silu_grad(x);
        }
        let mut gsp = vec![F::zero(); bt.spatial.len()];
        {
            let (head, tail) = grad.split_at_mut(b.b_temporal);
            temporal_conv_back(
                b,
                &params[b.w_temporal..],
                &bt.spatial,
                &gpre,
                &mut head[b.w_temporal..],
                &mut tail[..b.cout],
                &mut gsp,
            );
        }
        if bi == 0 {
            let g = F::from(l.input_gain).unwrap();
            gsp.iter_mut().for_each(|v| *v = *v * g);
        }
        let x: &[F] = if bi == 0 { input } else { &tr.blocks[bi - 1].out };
        let mut gx = (bi > 0).then(|| vec![F::zero(); x.len()]);
        spatial_conv_back(
            b,
            &params[b.w_spatial..],
            x,
            &gsp,
            &mut grad[b.w_spatial..b.w_temporal],
            gx.as_deref_mut(),
        );
        if let Some(gx) = gx {
            gout = gx;
        }
    }
}
