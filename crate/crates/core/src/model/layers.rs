//! Single-sample building blocks with explicit backward passes.
//!
//! Activations are planar `channels × height × width` slices. Layer weights
//! live in one flat parameter buffer; each layer records its offsets.

/// 2D convolution, stride 1, zero "same" padding, odd square kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Conv2d {
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    /// Offset of the `cout × (cin·k·k)` weight matrix.
    pub w_off: usize,
    /// Offset of the `cout` biases.
    pub b_off: usize,
}

impl Conv2d {
    pub fn new(cin: usize, cout: usize, k: usize, offset: &mut usize) -> Self {
        let w_off = *offset;
        let b_off = w_off + cout * cin * k * k;
        *offset = b_off + cout;
        Self {
            cin,
            cout,
            k,
            w_off,
            b_off,
        }
    }

    pub fn fan_in(&self) -> usize {
        self.cin * self.k * self.k
    }

    fn weights<'a>(&self, params: &'a [f64]) -> &'a [f64] {
        &params[self.w_off..self.w_off + self.cout * self.fan_in()]
    }

    /// Unfold `input` into a `(cin·k·k) × (h·w)` patch matrix.
    fn im2col(&self, input: &[f64], h: usize, w: usize, cols: &mut Vec<f64>) {
        let hw = h * w;
        let r = (self.k / 2) as isize;
        cols.clear();
        cols.resize(self.fan_in() * hw, 0.0);
        if self.k == 1 {
            cols.copy_from_slice(&input[..self.cin * hw]);
            return;
        }
        let mut row = 0;
        for c in 0..self.cin {
            let plane = &input[c * hw..(c + 1) * hw];
            for dy in -r..=r {
                for dx in -r..=r {
                    let dst = &mut cols[row * hw..(row + 1) * hw];
                    for y in 0..h {
                        let sy = y as isize + dy;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        let src_row = &plane[sy as usize * w..(sy as usize + 1) * w];
                        let dst_row = &mut dst[y * w..(y + 1) * w];
                        let x0 = (-dx).max(0) as usize;
                        let x1 = (w as isize - dx).min(w as isize) as usize;
                        for x in x0..x1 {
                            dst_row[x] = src_row[(x as isize + dx) as usize];
                        }
                    }
                    row += 1;
                }
            }
        }
    }

    /// Fold a patch-matrix gradient back onto the input gradient (accumulating).
    fn col2im(&self, cols: &[f64], h: usize, w: usize, dinput: &mut [f64]) {
        let hw = h * w;
        if self.k == 1 {
            for (d, c) in dinput.iter_mut().zip(cols) {
                *d += c;
            }
            return;
        }
        let r = (self.k / 2) as isize;
        let mut row = 0;
        for c in 0..self.cin {
            let plane = &mut dinput[c * hw..(c + 1) * hw];
            for dy in -r..=r {
                for dx in -r..=r {
                    let src = &cols[row * hw..(row + 1) * hw];
                    for y in 0..h {
                        let sy = y as isize + dy;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        let x0 = (-dx).max(0) as usize;
                        let x1 = (w as isize - dx).min(w as isize) as usize;
                        let dst_row = &mut plane[sy as usize * w..(sy as usize + 1) * w];
                        let src_row = &src[y * w..(y + 1) * w];
                        for x in x0..x1 {
                            dst_row[(x as isize + dx) as usize] += src_row[x];
                        }
                    }
                    row += 1;
                }
            }
        }
    }

    pub fn forward(&self, params: &[f64], input: &[f64], h: usize, w: usize, out: &mut [f64], cols: &mut Vec<f64>) {
        let hw = h * w;
        self.im2col(input, h, w, cols);
        let bias = &params[self.b_off..self.b_off + self.cout];
        for (o, &b) in bias.iter().enumerate() {
            out[o * hw..(o + 1) * hw].fill(b);
        }
        let kdim = self.fan_in();
        // out[cout × hw] += W[cout × kdim] · cols[kdim × hw]
        unsafe {
            matrixmultiply::dgemm(
                self.cout,
                kdim,
                hw,
                1.0,
                self.weights(params).as_ptr(),
                kdim as isize,
                1,
                cols.as_ptr(),
                hw as isize,
                1,
                1.0,
                out.as_mut_ptr(),
                hw as isize,
                1,
            );
        }
    }

    /// Accumulate parameter gradients and, if requested, the input gradient.
    #[allow(clippy::too_many_arguments)]
    pub fn backward(
        &self,
        params: &[f64],
        input: &[f64],
        h: usize,
        w: usize,
        dout: &[f64],
        grads: &mut [f64],
        dinput: Option<&mut [f64]>,
        cols: &mut Vec<f64>,
    ) {
        let hw = h * w;
        let kdim = self.fan_in();
        self.im2col(input, h, w, cols);
        for o in 0..self.cout {
            grads[self.b_off + o] += dout[o * hw..(o + 1) * hw].iter().sum::<f64>();
        }
        // dW[cout × kdim] += dout[cout × hw] · colsᵀ[hw × kdim]
        unsafe {
            matrixmultiply::dgemm(
                self.cout,
                hw,
                kdim,
                1.0,
                dout.as_ptr(),
                hw as isize,
                1,
                cols.as_ptr(),
                1,
                hw as isize,
                1.0,
                grads[self.w_off..].as_mut_ptr(),
                kdim as isize,
                1,
            );
        }
        if let Some(dinput) = dinput {
            // dcols[kdim × hw] = Wᵀ[kdim × cout] · dout[cout × hw]
            let mut dcols = vec![0.0; kdim * hw];
            unsafe {
                matrixmultiply::dgemm(
                    kdim,
                    self.cout,
                    hw,
                    1.0,
                    self.weights(params).as_ptr(),
                    1,
                    kdim as isize,
                    dout.as_ptr(),
                    hw as isize,
                    1,
                    0.0,
                    dcols.as_mut_ptr(),
                    hw as isize,
                    1,
                );
            }
            self.col2im(&dcols, h, w, dinput);
        }
    }
}

pub(crate) fn relu_inplace(x: &mut [f64]) {
    for v in x.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Zero the gradient wherever the ReLU output was not positive.
pub(crate) fn relu_backward(out: &[f64], grad: &mut [f64]) {
    for (g, &o) in grad.iter_mut().zip(out) {
        if o <= 0.0 {
            *g = 0.0;
        }
    }
}

/// 2×2 max pooling; returns the flat source index of every output.
pub(crate) fn maxpool2(input: &[f64], c: usize, h: usize, w: usize) -> (Vec<f64>, Vec<u32>) {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = vec![0.0; c * oh * ow];
    let mut idx = vec![0u32; c * oh * ow];
    for ch in 0..c {
        let base = ch * h * w;
        for y in 0..oh {
            for x in 0..ow {
                let cands = [
                    base + 2 * y * w + 2 * x,
                    base + 2 * y * w + 2 * x + 1,
                    base + (2 * y + 1) * w + 2 * x,
                    base + (2 * y + 1) * w + 2 * x + 1,
                ];
                let mut best = cands[0];
                for &i in &cands[1..] {
                    if input[i] > input[best] {
                        best = i;
                    }
                }
                let o = ch * oh * ow + y * ow + x;
                out[o] = input[best];
                idx[o] = best as u32;
            }
        }
    }
    (out, idx)
}

pub(crate) fn maxpool2_backward(dout: &[f64], idx: &[u32], dinput: &mut [f64]) {
    for (&g, &i) in dout.iter().zip(idx) {
        dinput[i as usize] += g;
    }
}

/// Nearest-neighbour ×2 upsampling.
pub(crate) fn upsample2(input: &[f64], c: usize, h: usize, w: usize) -> Vec<f64> {
    let (oh, ow) = (2 * h, 2 * w);
    let mut out = vec![0.0; c * oh * ow];
    for ch in 0..c {
        for y in 0..oh {
            let src = &input[ch * h * w + (y / 2) * w..ch * h * w + (y / 2 + 1) * w];
            let dst = &mut out[ch * oh * ow + y * ow..ch * oh * ow + (y + 1) * ow];
            for x in 0..ow {
                dst[x] = src[x / 2];
            }
        }
    }
    out
}

/// Sum each 2×2 block of the upsampled gradient.
pub(crate) fn upsample2_backward(dout: &[f64], c: usize, h: usize, w: usize) -> Vec<f64> {
    let (oh, ow) = (2 * h, 2 * w);
    let mut din = vec![0.0; c * h * w];
    for ch in 0..c {
        for y in 0..oh {
            for x in 0..ow {
                din[ch * h * w + (y / 2) * w + x / 2] += dout[ch * oh * ow + y * ow + x];
            }
        }
    }
    din
}

#[cfg(test)]
mod tests {
    use super::*;

    // Direct nested-loop convolution used as an independent reference.
    fn conv_naive(conv: &Conv2d, params: &[f64], input: &[f64], h: usize, w: usize) -> Vec<f64> {
        let r = (conv.k / 2) as isize;
        let mut out = vec![0.0; conv.cout * h * w];
        for o in 0..conv.cout {
            for y in 0..h {
                for x in 0..w {
                    let mut s = params[conv.b_off + o];
                    for c in 0..conv.cin {
                        for ky in 0..conv.k {
                            for kx in 0..conv.k {
                                let sy = y as isize + ky as isize - r;
                                let sx = x as isize + kx as isize - r;
                                if sy < 0 || sx < 0 || sy >= h as isize || sx >= w as isize {
                                    continue;
                                }
                                let wi = conv.w_off + o * conv.fan_in() + (c * conv.k + ky) * conv.k + kx;
                                s += params[wi] * input[c * h * w + sy as usize * w + sx as usize];
                            }
                        }
                    }
                    out[o * h * w + y * w + x] = s;
                }
            }
        }
        out
    }

    fn lcg(seed: &mut u64) -> f64 {
        *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((*seed >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    }

    #[test]
    fn conv_matches_naive_loops() {
        let mut off = 0;
        let conv = Conv2d::new(2, 3, 3, &mut off);
        let mut s = 11;
        let params: Vec<f64> = (0..off).map(|_| lcg(&mut s)).collect();
        let (h, w) = (5, 4);
        let input: Vec<f64> = (0..2 * h * w).map(|_| lcg(&mut s)).collect();
        let mut out = vec![0.0; 3 * h * w];
        let mut cols = Vec::new();
        conv.forward(&params, &input, h, w, &mut out, &mut cols);
        let expect = conv_naive(&conv, &params, &input, h, w);
        for (a, b) in out.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn conv_backward_matches_finite_differences() {
        let mut off = 0;
        let conv = Conv2d::new(2, 2, 3, &mut off);
        let mut s = 5;
        let params: Vec<f64> = (0..off).map(|_| lcg(&mut s)).collect();
        let (h, w) = (4, 3);
        let input: Vec<f64> = (0..2 * h * w).map(|_| lcg(&mut s)).collect();
        let weights: Vec<f64> = (0..2 * h * w).map(|_| lcg(&mut s)).collect();
        // loss = Σ weights ⊙ conv(input)
        let loss = |p: &[f64], x: &[f64]| -> f64 {
            conv_naive(&conv, p, x, h, w).iter().zip(&weights).map(|(a, b)| a * b).sum()
        };
        let mut grads = vec![0.0; off];
        let mut dinput = vec![0.0; input.len()];
        let mut cols = Vec::new();
        conv.backward(&params, &input, h, w, &weights, &mut grads, Some(&mut dinput), &mut cols);
        let eps = 1e-6;
        for i in 0..off {
            let mut p = params.clone();
            p[i] += eps;
            let up = loss(&p, &input);
            p[i] -= 2.0 * eps;
            let dn = loss(&p, &input);
            assert!(((up - dn) / (2.0 * eps) - grads[i]).abs() < 1e-7);
        }
        for i in 0..input.len() {
            let mut x = input.clone();
            x[i] += eps;
            let up = loss(&params, &x);
            x[i] -= 2.0 * eps;
            let dn = loss(&params, &x);
            assert!(((up - dn) / (2.0 * eps) - dinput[i]).abs() < 1e-7);
        }
    }

    #[test]
    fn pool_and_upsample_shapes() {
        let x: Vec<f64> = (0..16).map(f64::from).collect();
        let (p, idx) = maxpool2(&x, 1, 4, 4);
        assert_eq!(p, vec![5.0, 7.0, 13.0, 15.0]);
        let mut d = vec![0.0; 16];
        maxpool2_backward(&[1.0, 2.0, 3.0, 4.0], &idx, &mut d);
        assert_eq!(d[5], 1.0);
        assert_eq!(d[15], 4.0);
        let u = upsample2(&[1.0, 2.0], 1, 1, 2);
        assert_eq!(u, vec![1.0, 1.0, 2.0, 2.0, 1.0, 1.0, 2.0, 2.0]);
        assert_eq!(upsample2_backward(&u, 1, 1, 2), vec![4.0, 8.0]);
    }
}
