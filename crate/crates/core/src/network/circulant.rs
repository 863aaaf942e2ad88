use std::rc::Rc;

use crate::error::{Error, Result};
use crate::tensor::Scalar;

/// Shape of a linear map whose `d_out x d_in` weight is a stack of
/// circulant blocks built from a few free generator rows.
///
/// The rows are split into blocks of `d_in` rows (the last block may be
/// shorter). Each block owns `m` generators and is divided into `m`
/// groups of `q = ceil(d_in / m)` consecutive rows; row `j*q + s` of a
/// block is generator `j` cyclically shifted right by `s`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CirculantStackLinear {
    pub d_in: usize,
    pub d_out: usize,
    pub m: usize,
}

impl CirculantStackLinear {
    pub fn new(d_in: usize, d_out: usize, m: usize) -> Result<Self> {
        if d_in == 0 || d_out == 0 || m == 0 || m > d_in {
            return Err(Error::config(format!(
                "circulant layer {d_out}x{d_in} with {m} generator rows per block"
            )));
        }
        Ok(CirculantStackLinear { d_in, d_out, m })
    }

    pub fn blocks(&self) -> usize {
        self.d_out.div_ceil(self.d_in)
    }

    /// Shape of the generator tensor: one row per generator.
    pub fn generator_shape(&self) -> [usize; 2] {
        [self.blocks() * self.m, self.d_in]
    }

    /// Free parameters including the bias.
    pub fn param_count(&self) -> usize {
        self.blocks() * self.m * self.d_in + self.d_out
    }

    fn stride(&self) -> usize {
        self.d_in.div_ceil(self.m)
    }

    /// Generator row and shift governing output row `r`.
    pub fn row_source(&self, r: usize) -> (usize, usize) {
        let block = r / self.d_in;
        let offset = r % self.d_in;
        let q = self.stride();
        (block * self.m + offset / q, offset % q)
    }

    /// For every entry of the materialized matrix (row-major), the flat
    /// position of the generator entry it copies.
    pub fn index_map(&self) -> Rc<[usize]> {
        let d = self.d_in;
        let mut map = Vec::with_capacity(self.d_out * d);
        for r in 0..self.d_out {
            let (g, s) = self.row_source(r);
            for c in 0..d {
                map.push(g * d + (c + d - s) % d);
            }
        }
        map.into()
    }

    pub fn materialize<T: Scalar>(&self, generators: &[T]) -> Result<Vec<T>> {
        let [rows, cols] = self.generator_shape();
        if generators.len() != rows * cols {
            return Err(Error::Dimension {
                op: "circulant materialize",
                lhs: vec![rows, cols],
                rhs: vec![generators.len()],
            });
        }
        Ok(self.index_map().iter().map(|&i| generators[i]).collect())
    }
}

/// `W x + bias` with `W` the materialized circulant stack.
pub fn circulant_matvec<T: Scalar>(
    layer: &CirculantStackLinear,
    generators: &[T],
    bias: &[T],
    x: &[T],
) -> Result<Vec<T>> {
    if x.len() != layer.d_in || bias.len() != layer.d_out {
        return Err(Error::Dimension {
            op: "circulant_matvec",
            lhs: vec![layer.d_out, layer.d_in],
            rhs: vec![bias.len(), x.len()],
        });
    }
    let d = layer.d_in;
    let mut out = Vec::with_capacity(layer.d_out);
    for (r, &b) in bias.iter().enumerate() {
        let (g, s) = layer.row_source(r);
        let gen = &generators[g * d..(g + 1) * d];
        let mut acc = b;
        for (c, &xc) in x.iter().enumerate() {
            acc += gen[(c + d - s) % d] * xc;
        }
        out.push(acc);
    }
    Ok(out)
}
