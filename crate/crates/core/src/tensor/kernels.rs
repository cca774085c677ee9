//! Raw slice kernels behind the graph ops.

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub cout: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub ho: usize,
    pub wo: usize,
}

impl ConvGeom {
    pub fn new(cin: usize, h: usize, w: usize, cout: usize, k: usize, stride: usize, pad: usize) -> Option<Self> {
        if stride == 0 || h + 2 * pad < k || w + 2 * pad < k {
            return None;
        }
        let ho = (h + 2 * pad - k) / stride + 1;
        let wo = (w + 2 * pad - k) / stride + 1;
        Some(Self {
            cin,
            h,
            w,
            cout,
            k,
            stride,
            pad,
            ho,
            wo,
        })
    }

    fn rows(&self) -> usize {
        self.cin * self.k * self.k
    }

    fn pixels(&self) -> usize {
        self.ho * self.wo
    }
}

/// Unfolds one sample `(Cin, H, W)` into `(Cin*k*k, Ho*Wo)`.
fn im2col(x: &[f64], g: &ConvGeom, col: &mut [f64]) {
    let p = g.pixels();
    for ci in 0..g.cin {
        let plane = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (ci * g.k + ky) * g.k + kx;
                let dst = &mut col[row * p..(row + 1) * p];
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    let drow = &mut dst[oy * g.wo..(oy + 1) * g.wo];
                    if iy < 0 || iy >= g.h as isize {
                        drow.fill(0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for (ox, d) in drow.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        *d = if ix < 0 || ix >= g.w as isize {
                            0.0
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

fn col2im(col: &[f64], g: &ConvGeom, dx: &mut [f64]) {
    let p = g.pixels();
    for ci in 0..g.cin {
        let plane = &mut dx[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (ci * g.k + ky) * g.k + kx;
                let src = &col[row * p..(row + 1) * p];
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let drow = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for ox in 0..g.wo {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            drow[ix as usize] += src[oy * g.wo + ox];
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn conv2d_forward(x: &[f64], batch: usize, kernel: &[f64], bias: Option<&[f64]>, g: &ConvGeom) -> Vec<f64> {
    let (r, p) = (g.rows(), g.pixels());
    let mut col = vec![0.0; r * p];
    let mut out = vec![0.0; batch * g.cout * p];
    for b in 0..batch {
        im2col(&x[b * g.cin * g.h * g.w..(b + 1) * g.cin * g.h * g.w], g, &mut col);
        let ob = &mut out[b * g.cout * p..(b + 1) * g.cout * p];
        for co in 0..g.cout {
            let orow = &mut ob[co * p..(co + 1) * p];
            orow.fill(bias.map_or(0.0, |bs| bs[co]));
            let krow = &kernel[co * r..(co + 1) * r];
            for (ri, &kv) in krow.iter().enumerate() {
                let crow = &col[ri * p..(ri + 1) * p];
                for (o, &c) in orow.iter_mut().zip(crow) {
                    *o += kv * c;
                }
            }
        }
    }
    out
}

/// Returns `(dx, dkernel, dbias)`.
pub(crate) fn conv2d_backward(
    x: &[f64],
    batch: usize,
    kernel: &[f64],
    dy: &[f64],
    g: &ConvGeom,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (r, p) = (g.rows(), g.pixels());
    let mut col = vec![0.0; r * p];
    let mut dcol = vec![0.0; r * p];
    let mut dx = vec![0.0; x.len()];
    let mut dk = vec![0.0; kernel.len()];
    let mut db = vec![0.0; g.cout];
    for b in 0..batch {
        let xs = b * g.cin * g.h * g.w..(b + 1) * g.cin * g.h * g.w;
        im2col(&x[xs.clone()], g, &mut col);
        let dyb = &dy[b * g.cout * p..(b + 1) * g.cout * p];
        dcol.fill(0.0);
        for co in 0..g.cout {
            let drow = &dyb[co * p..(co + 1) * p];
            db[co] += drow.iter().sum::<f64>();
            let krow = &kernel[co * r..(co + 1) * r];
            let dkrow = &mut dk[co * r..(co + 1) * r];
            for ri in 0..r {
                let crow = &col[ri * p..(ri + 1) * p];
                dkrow[ri] += crow.iter().zip(drow).map(|(c, d)| c * d).sum::<f64>();
                let kv = krow[ri];
                let dcrow = &mut dcol[ri * p..(ri + 1) * p];
                for (dc, &d) in dcrow.iter_mut().zip(drow) {
                    *dc += kv * d;
                }
            }
        }
        col2im(&dcol, g, &mut dx[xs]);
    }
    (dx, dk, db)
}

/// `x (rows, cin) @ w (cin, cout) + b`.
pub(crate) fn fc_forward(x: &[f64], rows: usize, cin: usize, w: &[f64], cout: usize, b: Option<&[f64]>) -> Vec<f64> {
    let mut out = vec![0.0; rows * cout];
    for i in 0..rows {
        let orow = &mut out[i * cout..(i + 1) * cout];
        if let Some(b) = b {
            orow.copy_from_slice(b);
        }
        for k in 0..cin {
            let xv = x[i * cin + k];
            for (o, &wv) in orow.iter_mut().zip(&w[k * cout..(k + 1) * cout]) {
                *o += xv * wv;
            }
        }
    }
    out
}

/// Returns `(dx, dw, db)`.
pub(crate) fn fc_backward(
    x: &[f64],
    rows: usize,
    cin: usize,
    w: &[f64],
    cout: usize,
    dy: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut dx = vec![0.0; rows * cin];
    let mut dw = vec![0.0; cin * cout];
    let mut db = vec![0.0; cout];
    for i in 0..rows {
        let drow = &dy[i * cout..(i + 1) * cout];
        for (d, &v) in db.iter_mut().zip(drow) {
            *d += v;
        }
        for k in 0..cin {
            let wrow = &w[k * cout..(k + 1) * cout];
            dx[i * cin + k] = wrow.iter().zip(drow).map(|(a, b)| a * b).sum();
            let xv = x[i * cin + k];
            for (dwv, &d) in dw[k * cout..(k + 1) * cout].iter_mut().zip(drow) {
                *dwv += xv * d;
            }
        }
    }
    (dx, dw, db)
}

/// 3x3 max pool, stride 2, padding 1 (padding never wins). Returns the
/// output and, per output element, the flat input index it came from.
pub(crate) fn max_pool_forward(x: &[f64], planes: usize, h: usize, w: usize) -> (Vec<f64>, Vec<usize>, usize, usize) {
    let ho = (h + 2 - 3) / 2 + 1;
    let wo = (w + 2 - 3) / 2 + 1;
    let mut out = Vec::with_capacity(planes * ho * wo);
    let mut arg = Vec::with_capacity(planes * ho * wo);
    for pl in 0..planes {
        let base = pl * h * w;
        for oy in 0..ho {
            for ox in 0..wo {
                let mut best = f64::NEG_INFINITY;
                let mut best_i = usize::MAX;
                for ky in 0..3 {
                    let iy = (oy * 2 + ky) as isize - 1;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kx in 0..3 {
                        let ix = (ox * 2 + kx) as isize - 1;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        let i = base + iy as usize * w + ix as usize;
                        if x[i] > best {
                            best = x[i];
                            best_i = i;
                        }
                    }
                }
                out.push(best);
                arg.push(best_i);
            }
        }
    }
    (out, arg, ho, wo)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct nested-loop convolution for comparison.
    fn naive_conv(x: &[f64], k: &[f64], g: &ConvGeom) -> Vec<f64> {
        let mut out = vec![0.0; g.cout * g.ho * g.wo];
        for co in 0..g.cout {
            for oy in 0..g.ho {
                for ox in 0..g.wo {
                    let mut s = 0.0;
                    for ci in 0..g.cin {
                        for ky in 0..g.k {
                            for kx in 0..g.k {
                                let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                                let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                                if iy >= 0 && ix >= 0 && (iy as usize) < g.h && (ix as usize) < g.w {
                                    s += x[(ci * g.h + iy as usize) * g.w + ix as usize]
                                        * k[((co * g.cin + ci) * g.k + ky) * g.k + kx];
                                }
                            }
                        }
                    }
                    out[(co * g.ho + oy) * g.wo + ox] = s;
                }
            }
        }
        out
    }

    #[test]
    fn conv_matches_naive() {
        for &(stride, pad, h, w) in &[(1, 1, 5, 6), (2, 1, 7, 8), (2, 0, 6, 6), (1, 0, 4, 3)] {
            let g = ConvGeom::new(2, h, w, 3, 3, stride, pad).unwrap();
            let x: Vec<f64> = (0..2 * h * w).map(|i| ((i * 37 % 11) as f64) - 5.0).collect();
            let k: Vec<f64> = (0..3 * 2 * 9).map(|i| ((i * 13 % 7) as f64) * 0.25 - 0.5).collect();
            let got = conv2d_forward(&x, 1, &k, None, &g);
            let want = naive_conv(&x, &k, &g);
            assert_eq!(got.len(), want.len());
            for (a, b) in got.iter().zip(&want) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn conv_output_sizes() {
        let g = ConvGeom::new(3, 64, 64, 8, 3, 2, 1).unwrap();
        assert_eq!((g.ho, g.wo), (32, 32));
        let g = ConvGeom::new(3, 5, 5, 8, 3, 2, 1).unwrap();
        assert_eq!((g.ho, g.wo), (3, 3));
        assert!(ConvGeom::new(3, 1, 1, 8, 3, 1, 0).is_none());
    }

    #[test]
    fn max_pool_picks_window_max() {
        let x: Vec<f64> = (0..16).map(|v| v as f64).collect();
        let (out, arg, ho, wo) = max_pool_forward(&x, 1, 4, 4);
        assert_eq!((ho, wo), (2, 2));
        assert_eq!(out, vec![5.0, 7.0, 13.0, 15.0]);
        assert_eq!(arg, vec![5, 7, 13, 15]);
    }
}
