//! LSTM forward pass composed from tape primitives.
//!
//! Gates follow the usual i, f, g, o packing of the `4H`-wide projection:
//!   i = sigmoid(z[0H..1H])   f = sigmoid(z[1H..2H])
//!   g = tanh   (z[2H..3H])   o = sigmoid(z[3H..4H])
//!   c_t = f * c_{t-1} + i * g,   h_t = o * tanh(c_t)
//!
//! Because every step is built from recorded primitives, gradients flow
//! through the full recurrence without a hand-derived backward.

use crate::error::{shape_err, Result, TensorError};
use crate::tape::{Tape, Var};

/// Tape handles for one LSTM layer's weights.
///
/// `w_input: [4H, D_in]`, `w_hidden: [4H, H]`, `bias: [4H]`.
#[derive(Debug, Clone, Copy)]
pub struct LstmVars {
    pub w_input: Var,
    pub w_hidden: Var,
    pub bias: Var,
}

/// Run an LSTM over `x: [T, B, D_in]`, returning the full hidden
/// sequence `[T, B, H]`. `h0`/`c0` are `[B, H]`.
pub fn lstm_forward(
    tape: &mut Tape,
    x: Var,
    weights: LstmVars,
    h0: Var,
    c0: Var,
) -> Result<Var> {
    let xs = tape.value(x).shape().to_vec();
    if xs.len() != 3 {
        return Err(shape_err(
            "lstm_forward",
            format!("expected [T,B,D] input, got {xs:?}"),
        ));
    }
    let (t_len, batch, d_in) = (xs[0], xs[1], xs[2]);
    if t_len == 0 {
        return Err(TensorError::Contract(
            "lstm_forward: empty sequence (T = 0)".into(),
        ));
    }
    let ws = tape.value(weights.w_input).shape().to_vec();
    if ws.len() != 2 || ws[1] != d_in || ws[0] % 4 != 0 {
        return Err(shape_err(
            "lstm_forward",
            format!("w_input shape {ws:?} incompatible with input dim {d_in}"),
        ));
    }
    let hidden = ws[0] / 4;
    for (name, v, want) in [
        ("w_hidden", weights.w_hidden, vec![4 * hidden, hidden]),
        ("bias", weights.bias, vec![4 * hidden]),
        ("h0", h0, vec![batch, hidden]),
        ("c0", c0, vec![batch, hidden]),
    ] {
        if tape.value(v).shape() != want.as_slice() {
            return Err(shape_err(
                "lstm_forward",
                format!("{name} shape {:?}, expected {want:?}", tape.value(v).shape()),
            ));
        }
    }

    let mut h = h0;
    let mut c = c0;
    let mut outputs = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let xt = tape.narrow(x, 0, t, 1)?;
        let xt = tape.reshape(xt, vec![batch, d_in])?;
        let zx = tape.linear(xt, weights.w_input, Some(weights.bias))?;
        let zh = tape.linear(h, weights.w_hidden, None)?;
        let z = tape.add(zx, zh)?;
        let i_gate = tape.narrow(z, 1, 0, hidden)?;
        let f_gate = tape.narrow(z, 1, hidden, hidden)?;
        let g_gate = tape.narrow(z, 1, 2 * hidden, hidden)?;
        let o_gate = tape.narrow(z, 1, 3 * hidden, hidden)?;
        let i_gate = tape.sigmoid(i_gate);
        let f_gate = tape.sigmoid(f_gate);
        let g_gate = tape.tanh(g_gate);
        let o_gate = tape.sigmoid(o_gate);
        let fc = tape.mul(f_gate, c)?;
        let ig = tape.mul(i_gate, g_gate)?;
        c = tape.add(fc, ig)?;
        let ct = tape.tanh(c);
        h = tape.mul(o_gate, ct)?;
        outputs.push(tape.reshape(h, vec![1, batch, hidden])?);
    }
    tape.concat(&outputs, 0)
}
