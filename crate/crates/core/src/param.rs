//! Flat parameter vectors and their block layout.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense vector of parameters, gradients or curvature estimates.
///
/// Every entry is finite; constructors reject NaN and infinities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        Self::check_finite(&values, "parameter vector")?;
        if values.is_empty() {
            return Err(Error::InvalidArgument("parameter vector must be non-empty".into()));
        }
        Ok(Self(values))
    }

    /// Like [`ParamVector::new`] but reports `what` when a coordinate is non-finite.
    pub fn checked(values: Vec<f64>, what: &'static str) -> Result<Self> {
        Self::check_finite(&values, what)?;
        Self::new(values)
    }

    pub fn zeros(d: usize) -> Self {
        assert!(d > 0, "parameter vector must be non-empty");
        Self(vec![0.0; d])
    }

    pub fn filled(d: usize, value: f64) -> Self {
        assert!(d > 0 && value.is_finite());
        Self(vec![value; d])
    }

    fn check_finite(values: &[f64], what: &'static str) -> Result<()> {
        match values.iter().position(|v| !v.is_finite()) {
            Some(index) => Err(Error::NonFiniteValue { what, index }),
            None => Ok(()),
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.0.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn dot(&self, other: &ParamVector) -> f64 {
        debug_assert_eq!(self.len(), other.len());
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Elementwise product.
    pub fn hadamard(&self, other: &ParamVector) -> ParamVector {
        debug_assert_eq!(self.len(), other.len());
        ParamVector(self.0.iter().zip(&other.0).map(|(a, b)| a * b).collect())
    }

    /// `self + alpha * other`, rejecting overflow.
    pub fn add_scaled(&self, alpha: f64, other: &ParamVector) -> Result<ParamVector> {
        debug_assert_eq!(self.len(), other.len());
        let out: Vec<f64> = self.0.iter().zip(&other.0).map(|(a, b)| a + alpha * b).collect();
        Self::checked(out, "linear combination")
    }

    pub fn scaled(&self, alpha: f64) -> Result<ParamVector> {
        Self::checked(self.0.iter().map(|v| alpha * v).collect(), "scaled vector")
    }

    /// Checks that `self` has length `expected`.
    pub fn expect_len(&self, expected: usize, what: &'static str) -> Result<()> {
        if self.len() == expected {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                what,
                expected,
                got: self.len(),
            })
        }
    }
}

impl TryFrom<Vec<f64>> for ParamVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        ParamVector::new(v)
    }
}

impl From<ParamVector> for Vec<f64> {
    fn from(p: ParamVector) -> Vec<f64> {
        p.0
    }
}

impl std::ops::Index<usize> for ParamVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl<'a> IntoIterator for &'a ParamVector {
    type Item = &'a f64;
    type IntoIter = std::slice::Iter<'a, f64>;
    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

/// Partition of a flat parameter vector into groups (one per model tensor)
/// together with the spatial-averaging block size used inside each group.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSpec {
    groups: Vec<usize>,
    block_size: usize,
}

impl BlockSpec {
    pub fn new(groups: Vec<usize>, block_size: usize) -> Result<Self> {
        if block_size == 0 {
            return Err(Error::InvalidArgument("block size must be >= 1".into()));
        }
        if groups.is_empty() || groups.contains(&0) {
            return Err(Error::InvalidArgument("parameter groups must be non-empty".into()));
        }
        Ok(Self { groups, block_size })
    }

    /// A single group spanning all `d` parameters.
    pub fn single(d: usize, block_size: usize) -> Result<Self> {
        Self::new(vec![d], block_size)
    }

    pub fn groups(&self) -> &[usize] {
        &self.groups
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn dim(&self) -> usize {
        self.groups.iter().sum()
    }

    pub fn with_block_size(&self, block_size: usize) -> Result<Self> {
        Self::new(self.groups.clone(), block_size)
    }

    /// Half-open index ranges of every block, in order. Blocks restart at each
    /// group boundary; the last block of a group may be shorter than `b`.
    pub fn blocks(&self) -> impl Iterator<Item = std::ops::Range<usize>> + '_ {
        let b = self.block_size;
        let mut starts = Vec::with_capacity(self.groups.len());
        let mut offset = 0;
        for &len in &self.groups {
            starts.push((offset, len));
            offset += len;
        }
        starts
            .into_iter()
            .flat_map(move |(start, len)| (0..len).step_by(b).map(move |i| start + i..start + (i + b).min(len)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite() {
        let err = ParamVector::new(vec![1.0, f64::NAN]).unwrap_err();
        assert_eq!(
            err,
            Error::NonFiniteValue {
                what: "parameter vector",
                index: 1
            }
        );
        assert!(ParamVector::new(vec![f64::INFINITY]).is_err());
        assert!(ParamVector::new(vec![]).is_err());
    }

    #[test]
    fn blocks_respect_group_boundaries() {
        let spec = BlockSpec::new(vec![5, 3], 2).unwrap();
        let blocks: Vec<_> = spec.blocks().collect();
        assert_eq!(blocks, vec![0..2, 2..4, 4..5, 5..7, 7..8]);
        assert_eq!(spec.dim(), 8);
    }

    #[test]
    fn block_size_zero_rejected() {
        assert!(BlockSpec::single(4, 0).is_err());
    }

    #[test]
    fn serde_rejects_nan_payload() {
        let v: std::result::Result<ParamVector, _> = serde_json::from_str("[1.0, 2.0]");
        assert_eq!(v.unwrap().as_slice(), &[1.0, 2.0]);
        let empty: std::result::Result<ParamVector, _> = serde_json::from_str("[]");
        assert!(empty.is_err());
    }
}
