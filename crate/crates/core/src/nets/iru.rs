use crate::ndcore::{self, Elementwise, Tape, Tensor, Var};

use super::{NetError, Result};

/// Weights of one IRU layer. Both linear maps read `[x, tanh(c)]` (width 2H)
/// and emit width H.
#[derive(Clone, Debug, PartialEq)]
pub struct IruParams {
    pub forget_w: Tensor,
    pub forget_b: Tensor,
    pub input_w: Tensor,
    pub input_b: Tensor,
}

impl IruParams {
    pub fn zeros(hidden: usize) -> Self {
        Self {
            forget_w: Tensor::zeros(&[2 * hidden, hidden]),
            forget_b: Tensor::zeros(&[hidden]),
            input_w: Tensor::zeros(&[2 * hidden, hidden]),
            input_b: Tensor::zeros(&[hidden]),
        }
    }

    pub fn hidden(&self) -> usize {
        self.forget_b.numel()
    }
}

fn concat_cols(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (ra, ca) = a.dims2("concat")?;
    let (_, cb) = b.dims2("concat")?;
    let mut data = Vec::with_capacity(ra * (ca + cb));
    for i in 0..ra {
        data.extend_from_slice(a.row(i));
        data.extend_from_slice(b.row(i));
    }
    Ok(Tensor::new(vec![ra, ca + cb], data)?)
}

/// Eager IRU update for a `[B, H]` batch:
///
/// ```text
/// f   = sigmoid(Forget([x, tanh c]))
/// I   = tanh(Input([x, tanh c]))
/// out = f * c + (1 - f) * I
/// ```
pub fn iru_block(x: &Tensor, c: &Tensor, p: &IruParams) -> Result<Tensor> {
    let h = p.hidden();
    for t in [x, c] {
        let (_, w) = t.dims2("iru_block")?;
        if w != h {
            return Err(NetError::Width { expected: h, got: w });
        }
    }
    if x.shape() != c.shape() {
        return Err(NetError::Width {
            expected: x.shape()[0],
            got: c.shape()[0],
        });
    }
    let xc = concat_cols(x, &c.map(ndcore::tanh))?;
    let f = ndcore::elementwise(
        Elementwise::Sigmoid,
        &ndcore::matmul_add(&xc, &p.forget_w, &p.forget_b)?,
        None,
    )?;
    let input = ndcore::elementwise(
        Elementwise::Tanh,
        &ndcore::matmul_add(&xc, &p.input_w, &p.input_b)?,
        None,
    )?;
    let data = f
        .data()
        .iter()
        .zip(c.data())
        .zip(input.data())
        .map(|((f, c), i)| f * c + (1.0 - f) * i)
        .collect();
    Ok(Tensor::new(c.shape().to_vec(), data)?)
}

/// Tape-recorded IRU update; `params` are `[forget_w, forget_b, input_w, input_b]`.
pub fn iru_cell(tape: &mut Tape, x: Var, c: Var, params: [Var; 4]) -> Result<Var> {
    let [fw, fb, iw, ib] = params;
    Ok(tape.iru(x, c, fw, fb, iw, ib)?)
}
