//! Supervised losses between a denoised cloud and its clean reference.

use std::rc::Rc;

use crate::error::{Error, Result};
use crate::geometry::{Point3, SpatialIndex};
use crate::tensor::{Scalar, Tape, Tensor, Var};

fn check_aligned<T: Scalar>(tape: &Tape<T>, denoised: Var, clean: &Tensor<T>) -> Result<()> {
    let d = tape.value(denoised);
    if d.shape() != clean.shape() || d.shape().len() != 2 || d.cols() != 3 {
        return Err(Error::contract(format!(
            "denoised {:?} and clean {:?} must be aligned N x 3 clouds",
            d.shape(),
            clean.shape()
        )));
    }
    Ok(())
}

/// `(1/N) sum_i ||denoised_i - clean_i||^2`.
pub fn loss_mse<T: Scalar>(tape: &mut Tape<T>, denoised: Var, clean: &Tensor<T>) -> Result<Var> {
    check_aligned(tape, denoised, clean)?;
    let c = tape.constant(clean.clone());
    let diff = tape.sub(denoised, c)?;
    let sq = tape.row_squared_norm(diff)?;
    Ok(tape.mean(sq))
}

/// Index of the nearest clean point for every denoised point, searched
/// only within its own patch. Rows are grouped in consecutive patches of
/// `patch_len` points.
pub fn nearest_clean<T: Scalar>(denoised: &Tensor<T>, clean: &Tensor<T>, patch_len: usize) -> Result<Vec<usize>> {
    let n = clean.rows();
    if patch_len == 0 || n % patch_len != 0 {
        return Err(Error::contract(format!("{n} rows do not split into patches of {patch_len}")));
    }
    let to_points = |t: &Tensor<T>, range: std::ops::Range<usize>| -> Vec<Point3> {
        range.map(|i| std::array::from_fn(|a| t.at(i, a).to_f64())).collect()
    };
    let mut out = Vec::with_capacity(n);
    for start in (0..n).step_by(patch_len) {
        let index = SpatialIndex::build(&to_points(clean, start..start + patch_len));
        for q in to_points(denoised, start..start + patch_len) {
            out.push(start + index.nearest(&q)?.0);
        }
    }
    Ok(out)
}

/// MSE plus `lambda` times the mean squared distance of every denoised
/// point to its nearest clean point. The nearest-point selection is held
/// fixed; gradients flow through the selected clean point's offset only.
pub fn loss_mse_sp<T: Scalar>(
    tape: &mut Tape<T>,
    denoised: Var,
    clean: &Tensor<T>,
    patch_len: usize,
    lambda: f64,
) -> Result<Var> {
    if !(lambda >= 0.0) {
        return Err(Error::config(format!("lambda must be non-negative, got {lambda}")));
    }
    let mse = loss_mse(tape, denoised, clean)?;
    if lambda == 0.0 {
        return Ok(mse);
    }
    let nearest: Rc<[usize]> = nearest_clean(tape.value(denoised), clean, patch_len)?.into();
    let c = tape.constant(clean.clone());
    let targets = tape.gather_rows(c, nearest)?;
    let diff = tape.sub(denoised, targets)?;
    let sq = tape.row_squared_norm(diff)?;
    let sp = tape.mean(sq);
    let sp = tape.scale(sp, T::from_f64(lambda));
    tape.add(mse, sp)
}
