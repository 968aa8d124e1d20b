use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{shape, Error, Result};

/// Dense 4-D `f32` array in NCHW order.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: [usize; 4],
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: [usize; 4], data: Vec<f32>) -> Result<Self> {
        let len = checked_len(dims)?;
        if len != data.len() {
            return Err(shape(
                "tensor",
                format!("dims {:?} need {} values, got {}", dims, len, data.len()),
            ));
        }
        Ok(Self { dims, data })
    }

    /// Panics if any extent is zero; use [`Tensor::new`] for untrusted dims.
    pub fn zeros(dims: [usize; 4]) -> Self {
        Self::filled(dims, 0.0)
    }

    pub fn filled(dims: [usize; 4], value: f32) -> Self {
        let len = checked_len(dims).expect("tensor extents must be >= 1");
        Self {
            dims,
            data: vec![value; len],
        }
    }

    pub fn from_fn(dims: [usize; 4], mut f: impl FnMut([usize; 4]) -> f32) -> Self {
        let mut t = Self::zeros(dims);
        let [n, c, h, w] = dims;
        let mut i = 0;
        for a in 0..n {
            for b in 0..c {
                for y in 0..h {
                    for x in 0..w {
                        t.data[i] = f([a, b, y, x]);
                        i += 1;
                    }
                }
            }
        }
        t
    }

    /// A vector parameter, stored as `[n, 1, 1, 1]`.
    pub fn vector(values: Vec<f32>) -> Result<Self> {
        Self::new([values.len(), 1, 1, 1], values)
    }

    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    pub fn batch(&self) -> usize {
        self.dims[0]
    }

    pub fn channels(&self) -> usize {
        self.dims[1]
    }

    pub fn height(&self) -> usize {
        self.dims[2]
    }

    pub fn width(&self) -> usize {
        self.dims[3]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn plane_len(&self) -> usize {
        self.dims[2] * self.dims[3]
    }

    /// The `h × w` plane of channel `c` in batch item `n`.
    pub fn plane(&self, n: usize, c: usize) -> &[f32] {
        let hw = self.plane_len();
        let start = (n * self.dims[1] + c) * hw;
        &self.data[start..start + hw]
    }

    pub fn plane_mut(&mut self, n: usize, c: usize) -> &mut [f32] {
        let hw = self.plane_len();
        let start = (n * self.dims[1] + c) * hw;
        &mut self.data[start..start + hw]
    }

    /// All channels of batch item `n`.
    pub fn item(&self, n: usize) -> &[f32] {
        let chw = self.dims[1] * self.plane_len();
        &self.data[n * chw..(n + 1) * chw]
    }

    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> f32 {
        self.data[self.offset(n, c, y, x)]
    }

    pub fn set(&mut self, n: usize, c: usize, y: usize, x: usize, v: f32) {
        let i = self.offset(n, c, y, x);
        self.data[i] = v;
    }

    fn offset(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        let [_, cc, hh, ww] = self.dims;
        ((n * cc + c) * hh + y) * ww + x
    }

    pub fn reshape(self, dims: [usize; 4]) -> Result<Self> {
        Self::new(dims, self.data)
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Self {
        Self {
            dims: self.dims,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn map_inplace(&mut self, f: impl Fn(f32) -> f32) {
        self.data.iter_mut().for_each(|v| *v = f(*v));
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.check_same(other, "add")?;
        Ok(Self {
            dims: self.dims,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        self.check_same(other, "add")?;
        self.data
            .iter_mut()
            .zip(&other.data)
            .for_each(|(a, b)| *a += b);
        Ok(())
    }

    pub fn scale(&self, s: f32) -> Tensor {
        self.map(|v| v * s)
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> Result<f32> {
        self.check_same(other, "max_abs_diff")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn ensure_finite(&self, op: &'static str) -> Result<()> {
        if self.all_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite(op))
        }
    }

    fn check_same(&self, other: &Tensor, op: &'static str) -> Result<()> {
        if self.dims != other.dims {
            return Err(shape(
                op,
                format!("dims {:?} vs {:?}", self.dims, other.dims),
            ));
        }
        Ok(())
    }

    /// Concatenates along the channel axis (batch and spatial extents must agree).
    pub fn concat_channels(parts: &[&Tensor]) -> Result<Tensor> {
        let first = parts
            .first()
            .ok_or_else(|| shape("concat_channels", "no inputs"))?;
        let [n, _, h, w] = first.dims;
        for p in parts {
            if p.dims[0] != n || p.dims[2] != h || p.dims[3] != w {
                return Err(shape(
                    "concat_channels",
                    format!("dims {:?} vs {:?}", first.dims, p.dims),
                ));
            }
        }
        let c: usize = parts.iter().map(|p| p.dims[1]).sum();
        let mut data = Vec::with_capacity(n * c * h * w);
        for b in 0..n {
            for p in parts {
                data.extend_from_slice(p.item(b));
            }
        }
        Tensor::new([n, c, h, w], data)
    }
}

fn checked_len(dims: [usize; 4]) -> Result<usize> {
    if dims.contains(&0) {
        return Err(shape("tensor", format!("zero extent in {:?}", dims)));
    }
    dims.iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| shape("tensor", format!("extent overflow in {:?}", dims)))
}

/// Convolution hyper-parameters. `groups == in_channels` is depth-wise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: (usize, usize),
    pub stride: usize,
    pub padding: usize,
    pub groups: usize,
}

impl ConvSpec {
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel: (kernel, kernel),
            stride: 1,
            padding: 0,
            groups: 1,
        }
    }

    pub fn pointwise(in_channels: usize, out_channels: usize) -> Self {
        Self::new(in_channels, out_channels, 1)
    }

    /// Depth-wise `k × k` with "same" padding.
    pub fn depthwise(channels: usize, kernel: usize, stride: usize) -> Self {
        Self {
            stride,
            padding: kernel / 2,
            groups: channels,
            ..Self::new(channels, channels, kernel)
        }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn with_padding(mut self, padding: usize) -> Self {
        self.padding = padding;
        self
    }

    pub fn with_groups(mut self, groups: usize) -> Self {
        self.groups = groups;
        self
    }

    pub fn weight_dims(&self) -> [usize; 4] {
        [
            self.out_channels,
            self.in_channels / self.groups.max(1),
            self.kernel.0,
            self.kernel.1,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |d: alloc::string::String| Err(shape("conv2d", d));
        if self.groups == 0 || self.stride == 0 || self.kernel.0 == 0 || self.kernel.1 == 0 {
            return bad(format!("degenerate spec {:?}", self));
        }
        if !self.in_channels.is_multiple_of(self.groups)
            || !self.out_channels.is_multiple_of(self.groups)
        {
            return bad(format!(
                "channels {} -> {} not divisible by groups {}",
                self.in_channels, self.out_channels, self.groups
            ));
        }
        Ok(())
    }

    /// Output spatial extent for an input extent, or `None` if it would be < 1.
    pub fn output_extent(&self, input: usize, axis: usize) -> Option<usize> {
        let k = if axis == 0 {
            self.kernel.0
        } else {
            self.kernel.1
        };
        let padded = input + 2 * self.padding;
        if padded < k {
            return None;
        }
        Some((padded - k) / self.stride + 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_rejects_length_mismatch_and_zero_extents() {
        assert!(Tensor::new([1, 1, 2, 2], vec![0.0; 3]).is_err());
        assert!(Tensor::new([1, 0, 2, 2], vec![]).is_err());
        assert!(Tensor::new([1, 1, 2, 2], vec![0.0; 4]).is_ok());
    }

    #[test]
    fn indexing_is_nchw() {
        let t = Tensor::from_fn([2, 3, 4, 5], |[n, c, y, x]| {
            (n * 1000 + c * 100 + y * 10 + x) as f32
        });
        assert_eq!(t.at(1, 2, 3, 4), 1234.0);
        assert_eq!(t.plane(1, 2)[3 * 5 + 4], 1234.0);
        assert_eq!(t.data()[((3 + 2) * 4 + 3) * 5 + 4], 1234.0);
    }

    #[test]
    fn conv_output_arithmetic() {
        let s = ConvSpec::depthwise(8, 3, 2);
        assert_eq!(s.output_extent(16, 0), Some(8));
        assert_eq!(s.output_extent(15, 1), Some(8));
        let p = ConvSpec::pointwise(4, 8);
        assert_eq!(p.output_extent(5, 0), Some(5));
        assert_eq!(ConvSpec::new(1, 1, 5).output_extent(3, 0), None);
    }

    #[test]
    fn concat_channels_stacks_items() {
        let a = Tensor::filled([2, 1, 2, 2], 1.0);
        let b = Tensor::filled([2, 2, 2, 2], 2.0);
        let c = Tensor::concat_channels(&[&a, &b]).unwrap();
        assert_eq!(c.dims(), [2, 3, 2, 2]);
        assert_eq!(c.at(1, 0, 1, 1), 1.0);
        assert_eq!(c.at(1, 2, 0, 0), 2.0);
    }
}
