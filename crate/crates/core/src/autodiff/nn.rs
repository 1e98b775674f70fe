//! Composite layers built from graph primitives.

use super::graph::{Graph, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// `x·W + b` applied to the last axis of `x`. `W` is `[din, dout]`, `b` is `[dout]`.
pub fn linear<T: Scalar>(g: &mut Graph<T>, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
    let xs = g.shape(x).to_vec();
    let ws = g.shape(w).to_vec();
    if ws.len() != 2 || xs.last() != Some(&ws[0]) {
        return Err(Error::Shape(format!("linear of {xs:?} with weight {ws:?}")));
    }
    let (din, dout) = (ws[0], ws[1]);
    let rows = xs.iter().product::<usize>() / din.max(1);
    let flat = g.reshape(x, &[rows, din])?;
    let mut y = g.matmul(flat, w)?;
    if let Some(b) = b {
        let b_row = g.reshape(b, &[1, dout])?;
        y = g.add(y, b_row)?;
    }
    let mut out_shape = xs;
    *out_shape.last_mut().unwrap() = dout;
    g.reshape(y, &out_shape)
}

/// Weights of a gated recurrent unit with fused `[reset | update | candidate]` blocks.
#[derive(Clone, Copy, Debug)]
pub struct GruVars {
    /// `[din, 3·hidden]`
    pub w_input: Var,
    /// `[hidden, 3·hidden]`
    pub w_hidden: Var,
    pub b_input: Var,
    pub b_hidden: Var,
}

/// One GRU step over rows of `h` (`[.., hidden]`) with inputs `u` (`[.., din]`).
///
/// `r = σ(Wᵢᵣu + Wₕᵣh)`, `z = σ(Wᵢ_z u + Wₕ_z h)`, `n = tanh(Wᵢₙu + r⊙Wₕₙh)`,
/// output `(1−z)⊙h + z⊙n`: an update gate of 1 replaces the state with the
/// candidate.
pub fn gru_cell<T: Scalar>(g: &mut Graph<T>, h: Var, u: Var, p: &GruVars) -> Result<Var> {
    let hidden = *g.shape(h).last().ok_or_else(|| Error::Shape("gru on scalar".into()))?;
    if g.shape(p.w_hidden) != [hidden, 3 * hidden] {
        return Err(Error::Shape(format!(
            "gru hidden weight {:?} does not match hidden size {hidden}",
            g.shape(p.w_hidden)
        )));
    }
    let axis = g.shape(h).len() - 1;
    let gi = linear(g, u, p.w_input, Some(p.b_input))?;
    let gh = linear(g, h, p.w_hidden, Some(p.b_hidden))?;
    let (ir, iz, inn) = (g.slice(gi, axis, 0, hidden)?, g.slice(gi, axis, hidden, hidden)?, g.slice(gi, axis, 2 * hidden, hidden)?);
    let (hr, hz, hn) = (g.slice(gh, axis, 0, hidden)?, g.slice(gh, axis, hidden, hidden)?, g.slice(gh, axis, 2 * hidden, hidden)?);
    let r = g.add(ir, hr)?;
    let r = g.sigmoid(r);
    let z = g.add(iz, hz)?;
    let z = g.sigmoid(z);
    let gated = g.mul(r, hn)?;
    let n = g.add(inn, gated)?;
    let n = g.tanh(n);
    let delta = g.sub(n, h)?;
    let step = g.mul(z, delta)?;
    g.add(h, step)
}

/// Mean squared error over all entries.
pub fn mse<T: Scalar>(g: &mut Graph<T>, a: Var, b: Var) -> Result<Var> {
    if g.shape(a) != g.shape(b) {
        return Err(Error::Shape(format!("mse of {:?} and {:?}", g.shape(a), g.shape(b))));
    }
    let d = g.sub(a, b)?;
    let sq = g.mul(d, d)?;
    Ok(g.mean(sq))
}
