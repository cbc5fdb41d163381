//! Raw convolution kernels: im2col/col2im around a single-threaded sgemm.

/// Row-major matrix view: `(rows, cols)` with optional transposition of the
/// stored buffer.
#[derive(Clone, Copy)]
pub(crate) struct MatView<'a> {
    pub data: &'a [f32],
    /// Logical number of rows.
    pub rows: usize,
    /// Logical number of columns.
    pub cols: usize,
    /// The buffer stores the transpose (`cols x rows`, row-major).
    pub transposed: bool,
}

impl<'a> MatView<'a> {
    pub fn new(data: &'a [f32], rows: usize, cols: usize) -> Self {
        Self { data, rows, cols, transposed: false }
    }

    /// Logical `rows x cols` view of a buffer stored as `cols x rows`.
    pub fn transpose_of(data: &'a [f32], rows: usize, cols: usize) -> Self {
        Self { data, rows, cols, transposed: true }
    }

    fn strides(&self) -> (isize, isize) {
        if self.transposed {
            (1, self.rows as isize)
        } else {
            (self.cols as isize, 1)
        }
    }
}

/// `c = a * b + beta * c` with `c` row-major `a.rows x b.cols`.
pub(crate) fn gemm(a: MatView<'_>, b: MatView<'_>, beta: f32, c: &mut [f32]) {
    assert_eq!(a.cols, b.rows, "gemm inner dimensions");
    assert!(a.data.len() >= a.rows * a.cols && b.data.len() >= b.rows * b.cols);
    assert!(c.len() >= a.rows * b.cols);
    let (rsa, csa) = a.strides();
    let (rsb, csb) = b.strides();
    // SAFETY: bounds checked above; strides describe dense row-major storage.
    unsafe {
        matrixmultiply::sgemm(
            a.rows,
            a.cols,
            b.cols,
            1.0,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            b.cols as isize,
            1,
        );
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeometry {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvGeometry {
    pub fn out_height(&self) -> usize {
        (self.height + 2 * self.padding - self.kernel) / self.stride + 1
    }

    pub fn out_width(&self) -> usize {
        (self.width + 2 * self.padding - self.kernel) / self.stride + 1
    }

    pub fn patch_len(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    /// A 1x1, stride-1, unpadded convolution reads its input as the column matrix.
    pub fn is_pointwise(&self) -> bool {
        self.kernel == 1 && self.stride == 1 && self.padding == 0
    }

    /// Output columns whose input column `ox * stride + kj - padding` is in
    /// range, as a half-open interval.
    fn valid_cols(&self, kj: usize) -> (usize, usize) {
        let wo = self.out_width();
        let lo = self.padding.saturating_sub(kj).div_ceil(self.stride);
        let hi_in = self.width + self.padding; // exclusive bound of ox*stride + kj
        let hi = if hi_in <= kj { 0 } else { (hi_in - kj).div_ceil(self.stride) };
        (lo.min(wo), hi.min(wo).max(lo.min(wo)))
    }
}

/// Unfolds one `(C, H, W)` image into a `(C*K*K, Ho*Wo)` column matrix.
pub(crate) fn im2col(input: &[f32], g: &ConvGeometry, cols: &mut [f32]) {
    let (ho, wo) = (g.out_height(), g.out_width());
    let plane = g.height * g.width;
    let mut row = 0;
    for c in 0..g.channels {
        let src = &input[c * plane..(c + 1) * plane];
        for ki in 0..g.kernel {
            for kj in 0..g.kernel {
                let (lo, hi) = g.valid_cols(kj);
                let dst = &mut cols[row * ho * wo..(row + 1) * ho * wo];
                for oy in 0..ho {
                    let iy = (oy * g.stride + ki) as isize - g.padding as isize;
                    let line = &mut dst[oy * wo..(oy + 1) * wo];
                    if iy < 0 || iy >= g.height as isize {
                        line.fill(0.0);
                        continue;
                    }
                    let src_row = &src[iy as usize * g.width..(iy as usize + 1) * g.width];
                    line[..lo].fill(0.0);
                    line[hi..].fill(0.0);
                    if lo < hi {
                        let start = lo * g.stride + kj - g.padding;
                        if g.stride == 1 {
                            line[lo..hi].copy_from_slice(&src_row[start..start + (hi - lo)]);
                        } else {
                            for (o, v) in line[lo..hi].iter_mut().zip(src_row[start..].iter().step_by(g.stride)) {
                                *o = *v;
                            }
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters column gradients back onto the image,
/// accumulating into `input_grad`.
pub(crate) fn col2im(cols: &[f32], g: &ConvGeometry, input_grad: &mut [f32]) {
    let (ho, wo) = (g.out_height(), g.out_width());
    let plane = g.height * g.width;
    let mut row = 0;
    for c in 0..g.channels {
        let dst = &mut input_grad[c * plane..(c + 1) * plane];
        for ki in 0..g.kernel {
            for kj in 0..g.kernel {
                let (lo, hi) = g.valid_cols(kj);
                let src = &cols[row * ho * wo..(row + 1) * ho * wo];
                for oy in 0..ho {
                    let iy = (oy * g.stride + ki) as isize - g.padding as isize;
                    if iy < 0 || iy >= g.height as isize || lo >= hi {
                        continue;
                    }
                    let dst_row = &mut dst[iy as usize * g.width..(iy as usize + 1) * g.width];
                    let line = &src[oy * wo + lo..oy * wo + hi];
                    let start = lo * g.stride + kj - g.padding;
                    if g.stride == 1 {
                        for (d, v) in dst_row[start..start + line.len()].iter_mut().zip(line) {
                            *d += v;
                        }
                    } else {
                        for (d, v) in dst_row[start..].iter_mut().step_by(g.stride).zip(line) {
                            *d += v;
                        }
                    }
                }
                row += 1;
            }
        }
    }
}
