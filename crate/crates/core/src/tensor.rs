//! Intermediate activations in the token layout `(B, D, N)` and the
//! recovered time-frequency grid `(B, D, F', T')`.
//!
//! Tokens are frequency-major, `n = f * T' + t`, so both layouts share the
//! same row-major buffer and `fold` / `unfold` only change the shape tag.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    Folded { tokens: usize },
    Unfolded { freq: usize, time: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActivationTensor {
    data: Vec<f32>,
    batch: usize,
    dim: usize,
    layout: Layout,
}

impl ActivationTensor {
    pub fn unfolded(data: Vec<f32>, batch: usize, dim: usize, freq: usize, time: usize) -> Result<Self> {
        Self::with_layout(data, batch, dim, Layout::Unfolded { freq, time })
    }

    pub fn folded(data: Vec<f32>, batch: usize, dim: usize, tokens: usize) -> Result<Self> {
        Self::with_layout(data, batch, dim, Layout::Folded { tokens })
    }

    pub fn zeros_unfolded(batch: usize, dim: usize, freq: usize, time: usize) -> Self {
        Self {
            data: vec![0.0; batch * dim * freq * time],
            batch,
            dim,
            layout: Layout::Unfolded { freq, time },
        }
    }

    fn with_layout(data: Vec<f32>, batch: usize, dim: usize, layout: Layout) -> Result<Self> {
        let per = match layout {
            Layout::Folded { tokens } => tokens,
            Layout::Unfolded { freq, time } => freq * time,
        };
        if data.len() != batch * dim * per {
            return Err(Error::ShapeMismatch(format!(
                "{} elements for batch {batch}, dim {dim}, layout {layout:?}",
                data.len()
            )));
        }
        Ok(Self {
            data,
            batch,
            dim,
            layout,
        })
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn tokens(&self) -> usize {
        match self.layout {
            Layout::Folded { tokens } => tokens,
            Layout::Unfolded { freq, time } => freq * time,
        }
    }

    /// `(F', T')` when unfolded.
    pub fn grid(&self) -> Option<(usize, usize)> {
        match self.layout {
            Layout::Unfolded { freq, time } => Some((freq, time)),
            Layout::Folded { .. } => None,
        }
    }

    pub(crate) fn expect_grid(&self) -> Result<(usize, usize)> {
        self.grid()
            .ok_or_else(|| Error::ShapeMismatch("expected an unfolded tensor".into()))
    }

    /// Dimensions in their natural order: `[B, D, N]` or `[B, D, F', T']`.
    pub fn dims(&self) -> Vec<usize> {
        match self.layout {
            Layout::Folded { tokens } => vec![self.batch, self.dim, tokens],
            Layout::Unfolded { freq, time } => vec![self.batch, self.dim, freq, time],
        }
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

    /// Element `(b, d, f, t)` of an unfolded tensor.
    pub fn at(&self, b: usize, d: usize, f: usize, t: usize) -> f32 {
        let (nf, nt) = self.grid().expect("unfolded tensor");
        self.data[((b * self.dim + d) * nf + f) * nt + t]
    }

    /// Contiguous `(d, f)` row of length `T'` for item `b`.
    pub fn time_row(&self, b: usize, d: usize, f: usize) -> &[f32] {
        let (nf, nt) = self.grid().expect("unfolded tensor");
        let start = ((b * self.dim + d) * nf + f) * nt;
        &self.data[start..start + nt]
    }

    pub fn time_row_mut(&mut self, b: usize, d: usize, f: usize) -> &mut [f32] {
        let (nf, nt) = self.grid().expect("unfolded tensor");
        let start = ((b * self.dim + d) * nf + f) * nt;
        &mut self.data[start..start + nt]
    }

    /// Item `b` as its own batch-of-one tensor.
    pub fn item(&self, b: usize) -> Self {
        let per = self.dim * self.tokens();
        Self {
            data: self.data[b * per..(b + 1) * per].to_vec(),
            batch: 1,
            dim: self.dim,
            layout: self.layout,
        }
    }

    /// Concatenate along the batch axis; all parts must share dim and layout.
    pub fn stack(parts: &[Self]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::ShapeMismatch("cannot stack zero tensors".into()))?;
        let mut data = Vec::with_capacity(parts.iter().map(|p| p.data.len()).sum());
        let mut batch = 0;
        for p in parts {
            if p.dim != first.dim || p.layout != first.layout {
                return Err(Error::ShapeMismatch(format!(
                    "cannot stack {:?} with {:?}",
                    p.dims(),
                    first.dims()
                )));
            }
            data.extend_from_slice(&p.data);
            batch += p.batch;
        }
        Ok(Self {
            data,
            batch,
            dim: first.dim,
            layout: first.layout,
        })
    }

    /// Swap the frequency and time axes of an unfolded tensor.
    pub fn transpose_grid(&self) -> Result<Self> {
        let (nf, nt) = self.expect_grid()?;
        let mut out = Self::zeros_unfolded(self.batch, self.dim, nt, nf);
        for b in 0..self.batch {
            for d in 0..self.dim {
                for f in 0..nf {
                    for t in 0..nt {
                        out.data[((b * self.dim + d) * nt + t) * nf + f] = self.at(b, d, f, t);
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// `(B, D, F', T') -> (B, D, F'T')`.
pub fn fold(x: ActivationTensor) -> Result<ActivationTensor> {
    let (freq, time) = x
        .grid()
        .ok_or_else(|| Error::ShapeMismatch("fold expects an unfolded tensor".into()))?;
    Ok(ActivationTensor {
        layout: Layout::Folded { tokens: freq * time },
        ..x
    })
}

/// `(B, D, F'T') -> (B, D, F', T')`; exact inverse of [`fold`].
pub fn unfold(x: ActivationTensor, freq: usize, time: usize) -> Result<ActivationTensor> {
    let Layout::Folded { tokens } = x.layout else {
        return Err(Error::ShapeMismatch("unfold expects a folded tensor".into()));
    };
    if freq * time != tokens || freq == 0 || time == 0 {
        return Err(Error::ShapeMismatch(format!(
            "{tokens} tokens cannot be unfolded into a {freq}x{time} grid"
        )));
    }
    Ok(ActivationTensor {
        layout: Layout::Unfolded { freq, time },
        ..x
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(b: usize, d: usize, f: usize, t: usize) -> ActivationTensor {
        let n = b * d * f * t;
        ActivationTensor::unfolded((0..n).map(|v| v as f32).collect(), b, d, f, t).unwrap()
    }

    #[test]
    fn fold_shape_and_index_rule() {
        let x = ramp(2, 3, 8, 13);
        let v = x.at(1, 2, 2, 5);
        let y = fold(x).unwrap();
        assert_eq!(y.dims(), vec![2, 3, 104]);
        let n = 2 * 13 + 5;
        assert_eq!(n, 31);
        assert_eq!(y.data()[(3 + 2) * 104 + n], v);
    }

    #[test]
    fn unfold_rejects_bad_grid_and_layout() {
        let x = ramp(1, 2, 8, 13);
        assert!(unfold(x.clone(), 8, 13).is_err());
        let y = fold(x).unwrap();
        assert!(fold(y.clone()).is_err());
        assert!(unfold(y.clone(), 7, 13).is_err());
        let z = unfold(y, 8, 13).unwrap();
        assert_eq!(z.dims(), vec![1, 2, 8, 13]);
    }

    #[test]
    fn fold_preserves_sum() {
        let x = ramp(2, 2, 4, 5);
        let s: f32 = x.data().iter().sum();
        assert_eq!(fold(x).unwrap().data().iter().sum::<f32>(), s);
    }

    #[test]
    fn constructor_checks_length() {
        assert!(ActivationTensor::unfolded(vec![0.0; 5], 1, 1, 2, 3).is_err());
        assert!(ActivationTensor::folded(vec![0.0; 6], 1, 2, 3).is_ok());
    }

    #[test]
    fn transpose_swaps_axes() {
        let x = ramp(1, 2, 3, 4);
        let y = x.transpose_grid().unwrap();
        assert_eq!(y.dims(), vec![1, 2, 4, 3]);
        assert_eq!(y.at(0, 1, 3, 2), x.at(0, 1, 2, 3));
    }

    #[test]
    fn stack_and_item() {
        let a = ramp(1, 2, 2, 2);
        let b = ramp(2, 2, 2, 2);
        let s = ActivationTensor::stack(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(s.batch(), 3);
        assert_eq!(s.item(0), a);
        assert_eq!(s.item(2), b.item(1));
        assert!(ActivationTensor::stack(&[a, ramp(1, 3, 2, 2)]).is_err());
    }
}
