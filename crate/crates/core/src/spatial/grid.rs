use crate::autodiff::{pixel_coord, sample_bilinear_into};
use crate::autodiff::sampler_strides as strides;
use crate::error::{shape_err, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::similarity::{apply_rows, SimilarityMatrix};

/// i-th of n points spaced uniformly over [−1, 1], endpoints included.
#[inline]
pub fn linspace_value<T: Scalar>(i: usize, n: usize) -> T {
    let span = T::from_usize_c(n - 1);
    (T::from_usize_c(2 * i) - span) / span
}

/// Applies the upper 2×3 rows of a homogeneous matrix to (x, y).
#[inline]
pub fn apply_affine<T: Scalar>(m: &[[T; 3]; 2], x: T, y: T) -> (T, T) {
    apply_rows(m, x, y)
}

/// 2×H′×W′ normalized sampling coordinates; plane 0 holds y (rows), plane 1
/// holds x (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct SampleGrid<T> {
    height: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Scalar> SampleGrid<T> {
    pub fn from_planes(height: usize, width: usize, ys: Vec<T>, xs: Vec<T>) -> Result<Self> {
        if ys.len() != height * width || xs.len() != height * width {
            return shape_err("grid planes do not match extent");
        }
        let mut data = ys;
        data.extend(xs);
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn ys(&self) -> &[T] {
        &self.data[..self.height * self.width]
    }

    pub fn xs(&self) -> &[T] {
        &self.data[self.height * self.width..]
    }

    /// (x, y) at output location (row, col).
    pub fn point(&self, row: usize, col: usize) -> (T, T) {
        let i = row * self.width + col;
        (self.xs()[i], self.ys()[i])
    }

    pub fn as_tensor(&self) -> Tensor<T> {
        Tensor::new(&[2, self.height, self.width], self.data.clone()).expect("consistent grid")
    }
}

/// Uniform grid over x ∈ [−1, 1] (columns) and y ∈ [−1, 1] (rows).
pub fn generate_grid<T: Scalar>(height: usize, width: usize) -> Result<SampleGrid<T>> {
    if height < 2 || width < 2 {
        return shape_err(format!("grid must be at least 2×2, got {height}×{width}"));
    }
    let mut ys = Vec::with_capacity(height * width);
    let mut xs = Vec::with_capacity(height * width);
    for i in 0..height {
        for j in 0..width {
            ys.push(linspace_value(i, height));
            xs.push(linspace_value(j, width));
        }
    }
    SampleGrid::from_planes(height, width, ys, xs)
}

/// Maps every grid point through the upper 2×3 of `m`.
pub fn transform_grid<T: Scalar>(grid: &SampleGrid<T>, m: &SimilarityMatrix<T>) -> SampleGrid<T> {
    let rows = m.affine_rows();
    let (ys, xs): (Vec<T>, Vec<T>) = grid
        .xs()
        .iter()
        .zip(grid.ys())
        .map(|(&x, &y)| {
            let (tx, ty) = apply_rows(&rows, x, y);
            (ty, tx)
        })
        .unzip();
    SampleGrid::from_planes(grid.height, grid.width, ys, xs).expect("same extent")
}

/// Samples an H×W×C image at every grid point, giving H′×W′×C. Points whose
/// bilinear support lies outside the image read as zero.
pub fn bilinear_sample<T: Scalar>(image: &Tensor<T>, grid: &SampleGrid<T>) -> Result<Tensor<T>> {
    let (h, w, c) = match *image.shape() {
        [h, w, c] => (h, w, c),
        ref s => return shape_err(format!("bilinear_sample expects H×W×C, got {s:?}")),
    };
    let mut out = vec![T::zero(); grid.height * grid.width * c];
    sample_bilinear_into(
        image.data(),
        (h, w, c),
        strides(1, c),
        grid.ys(),
        grid.xs(),
        &mut out,
        strides(1, c),
    );
    Tensor::new(&[grid.height, grid.width, c], out)
}

/// trans(I, M) for a single-channel H×W image onto an out_h×out_w grid.
pub fn warp_image<T: Scalar>(
    image: &[T],
    (h, w): (usize, usize),
    m: &SimilarityMatrix<T>,
    (out_h, out_w): (usize, usize),
) -> Result<Vec<T>> {
    if image.len() != h * w {
        return shape_err("image buffer does not match its extent");
    }
    let grid = transform_grid(&generate_grid(out_h, out_w)?, m);
    let mut out = vec![T::zero(); out_h * out_w];
    sample_bilinear_into(
        image,
        (h, w, 1),
        strides(0, 1),
        grid.ys(),
        grid.xs(),
        &mut out,
        strides(0, 1),
    );
    Ok(out)
}

/// Nearest-neighbour resampling of an integer label map at M-transformed grid
/// points; points outside the image become label 0.
pub fn warp_labels_nearest<T: Scalar>(
    labels: &[u8],
    (h, w): (usize, usize),
    m: &SimilarityMatrix<T>,
    (out_h, out_w): (usize, usize),
) -> Result<Vec<u8>> {
    if labels.len() != h * w {
        return shape_err("label buffer does not match its extent");
    }
    let grid = transform_grid(&generate_grid(out_h, out_w)?, m);
    let half = T::from_f64c(0.5);
    Ok(grid
        .ys()
        .iter()
        .zip(grid.xs())
        .map(|(&gy, &gx)| {
            let py = pixel_coord(gy, h);
            let px = pixel_coord(gx, w);
            let inside = |p: T, n: usize| p > -half && p < T::from_usize_c(n) - half;
            if inside(py, h) && inside(px, w) {
                let (r, c) = (py.round().to_usize(), px.round().to_usize());
                match (r, c) {
                    (Some(r), Some(c)) if r < h && c < w => labels[r * w + c],
                    _ => 0,
                }
            } else {
                0
            }
        })
        .collect())
}
