//! Speech adapter: temporal average pooling followed by a projection into the
//! backbone's embedding width.
//!
//! With 20 ms input frames and the default factor of 4, each adapter frame
//! covers 80 ms. A trailing partial window is averaged over the rows it
//! actually has, so a sequence of `T` rows always yields `ceil(T / factor)`.

use ndarray::{s, Array1, Array2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

pub const DEFAULT_DOWNSAMPLE: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct AdapterParams {
    pub downsample_factor: usize,
    /// `d_enc x hidden`
    pub w_proj: Array2<f64>,
    pub b_proj: Array1<f64>,
}

impl AdapterParams {
    /// Projection weights are drawn from `N(0, (gain / sqrt(d_enc))^2)`; a
    /// gain of zero starts the projection at zero.
    pub fn init<R: Rng>(d_enc: usize, hidden: usize, factor: usize, gain: f64, rng: &mut R) -> Result<Self> {
        if factor == 0 {
            return Err(Error::InvalidParameter("downsample factor must be >= 1".into()));
        }
        if !(gain >= 0.0 && gain.is_finite()) {
            return Err(Error::InvalidParameter(format!("adapter gain must be finite and >= 0, got {gain}")));
        }
        let dist = Normal::new(0.0, gain / (d_enc as f64).sqrt()).expect("finite std");
        Ok(Self {
            downsample_factor: factor,
            w_proj: Array2::from_shape_simple_fn((d_enc, hidden), || dist.sample(rng)),
            b_proj: Array1::zeros(hidden),
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            downsample_factor: self.downsample_factor,
            w_proj: Array2::zeros(self.w_proj.raw_dim()),
            b_proj: Array1::zeros(self.b_proj.raw_dim()),
        }
    }

    pub fn project(&self, seq: &Array2<f64>) -> Result<Array2<f64>> {
        project(seq, self)
    }
}

/// Number of output rows for `t` input rows.
pub fn downsampled_len(t: usize, factor: usize) -> usize {
    t.div_ceil(factor)
}

pub fn downsample(seq: &Array2<f64>, factor: usize) -> Result<Array2<f64>> {
    if factor == 0 {
        return Err(Error::InvalidParameter("downsample factor must be >= 1".into()));
    }
    let t = seq.nrows();
    if t == 0 {
        return Err(Error::EmptyInput("downsample input"));
    }
    let mut out = Array2::zeros((downsampled_len(t, factor), seq.ncols()));
    for (w, mut row) in out.rows_mut().into_iter().enumerate() {
        let start = w * factor;
        let end = (start + factor).min(t);
        row.assign(
            &seq.slice(s![start..end, ..])
                .mean_axis(Axis(0))
                .expect("window is non-empty"),
        );
    }
    Ok(out)
}

/// Spreads each output-row gradient evenly over the rows of its window.
pub(crate) fn downsample_backward(d_out: &Array2<f64>, t: usize, factor: usize) -> Array2<f64> {
    let mut d_in = Array2::zeros((t, d_out.ncols()));
    for (w, grad) in d_out.rows().into_iter().enumerate() {
        let start = w * factor;
        let end = (start + factor).min(t);
        let share = &grad / (end - start) as f64;
        for mut row in d_in.slice_mut(s![start..end, ..]).rows_mut() {
            row.assign(&share);
        }
    }
    d_in
}

/// Rowwise `x W_proj + b_proj`.
pub fn project(seq: &Array2<f64>, params: &AdapterParams) -> Result<Array2<f64>> {
    if seq.ncols() != params.w_proj.nrows() {
        return Err(Error::DimensionMismatch {
            context: "adapter projection input",
            expected: params.w_proj.nrows(),
            found: seq.ncols(),
        });
    }
    Ok(seq.dot(&params.w_proj) + &params.b_proj)
}

/// Accumulates projection gradients into `grads`; returns the input gradient.
pub(crate) fn project_backward(
    input: &Array2<f64>,
    d_out: &Array2<f64>,
    params: &AdapterParams,
    grads: &mut AdapterParams,
) -> Array2<f64> {
    grads.w_proj += &input.t().dot(d_out);
    grads.b_proj += &d_out.sum_axis(Axis(0));
    d_out.dot(&params.w_proj.t())
}
