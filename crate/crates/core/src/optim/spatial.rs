use crate::param::{BlockSpec, ParamVector};

/// Replaces every entry of `diag` by the mean of its block. Blocks of
/// `blocks.block_size()` consecutive entries restart at each group
/// boundary; a short trailing block is averaged over its actual length.
///
/// Panics if `diag` and `blocks` disagree on the dimension.
pub fn spatial_average(diag: &ParamVector, blocks: &BlockSpec) -> ParamVector {
    assert_eq!(diag.len(), blocks.dim(), "block layout does not match vector");
    if blocks.block_size() == 1 {
        return diag.clone();
    }
    let src = diag.as_slice();
    let mut out = vec![0.0; src.len()];
    for range in blocks.blocks() {
        let mean = src[range.clone()].iter().sum::<f64>() / range.len() as f64;
        out[range].fill(mean);
    }
    ParamVector::new(out).expect("means of finite values are finite")
}
