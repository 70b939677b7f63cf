//! Building blocks shared by the encoders, generators and classifiers.
//!
//! A layer owns [`ParamId`]s into a [`ParamStore`]. Before a forward pass it
//! is *bound*: its parameters are placed on the tape once, so a recurrent
//! cell unrolled over many steps reuses the same tape variables.
//!
//! Sequences are batched time-major: row `t * batch + b` holds step `t` of
//! sequence `b`. Padding sits at the end of each sequence and is masked out
//! of the recurrent state.

use gef_tensor::{ParamId, ParamStore, Tape, Tensor, Var};
use rand::Rng;

use crate::error::{GefError, Result};
use crate::text::vocab::PAD;

#[derive(Debug, Clone)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct BoundLinear {
    pub w: Var,
    pub b: Var,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let w = store.add(format!("{name}.w"), Tensor::xavier(in_dim, out_dim, rng))?;
        let b = store.add(format!("{name}.b"), Tensor::zeros(&[1, out_dim]))?;
        Ok(Self { w, b, in_dim, out_dim })
    }

    pub fn bind(&self, tape: &mut Tape, store: &ParamStore) -> Result<BoundLinear> {
        Ok(BoundLinear {
            w: tape.param(store, self.w)?,
            b: tape.param(store, self.b)?,
        })
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        self.bind(tape, store)?.apply(tape, x)
    }

    /// Zero weight and bias, so the layer outputs zeros.
    pub fn zero(&self, store: &mut ParamStore) {
        store.get_mut(self.w).data_mut().fill(0.0);
        store.get_mut(self.b).data_mut().fill(0.0);
    }
}

impl BoundLinear {
    pub fn apply(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let xw = tape.matmul(x, self.w)?;
        Ok(tape.add(xw, self.b)?)
    }
}

/// A padded batch of token-id sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct SeqBatch {
    pub batch: usize,
    pub max_len: usize,
    pub lengths: Vec<usize>,
    /// `max_len * batch` ids, time-major, padded with PAD.
    pub ids: Vec<usize>,
}

impl SeqBatch {
    pub fn new<S: AsRef<[usize]>>(seqs: &[S]) -> Result<Self> {
        if seqs.is_empty() {
            return Err(GefError::validation("empty batch"));
        }
        let lengths: Vec<usize> = seqs.iter().map(|s| s.as_ref().len()).collect();
        if lengths.contains(&0) {
            return Err(GefError::validation("empty sequence in batch"));
        }
        let batch = seqs.len();
        let max_len = *lengths.iter().max().expect("non-empty");
        let mut ids = vec![PAD; max_len * batch];
        for (b, s) in seqs.iter().enumerate() {
            for (t, &id) in s.as_ref().iter().enumerate() {
                ids[t * batch + b] = id;
            }
        }
        Ok(Self {
            batch,
            max_len,
            lengths,
            ids,
        })
    }

    /// Ids of sequence `b`, without padding.
    pub fn sequence(&self, b: usize) -> Vec<usize> {
        (0..self.lengths[b]).map(|t| self.ids[t * self.batch + b]).collect()
    }

    /// `[batch, 1]` step mask, or `None` when every sequence is still
    /// running at step `t`.
    pub fn step_mask(&self, t: usize) -> Option<Vec<f64>> {
        if self.lengths.iter().all(|&l| t < l) {
            None
        } else {
            Some(self.lengths.iter().map(|&l| f64::from(u8::from(t < l))).collect())
        }
    }

    /// Segment id (the sequence) and weight `1/len` of every time-major
    /// row that is not padding, for mean pooling with `segment_sum`.
    pub fn mean_pool_weights(&self) -> (Vec<usize>, Vec<f64>) {
        let mut seg = Vec::with_capacity(self.ids.len());
        let mut w = Vec::with_capacity(self.ids.len());
        for t in 0..self.max_len {
            for b in 0..self.batch {
                seg.push(b);
                w.push(if t < self.lengths[b] { 1.0 / self.lengths[b] as f64 } else { 0.0 });
            }
        }
        (seg, w)
    }
}

/// `h_prev + mask * (h_new - h_prev)`: rows whose sequence has ended keep
/// their previous state.
fn masked_update(tape: &mut Tape, h_prev: Var, h_new: Var, mask: Option<&[f64]>) -> Result<Var> {
    match mask {
        None => Ok(h_new),
        Some(m) => {
            let mv = tape.constant(&[m.len(), 1], m.to_vec())?;
            let d = tape.sub(h_new, h_prev)?;
            let dm = tape.mul(d, mv)?;
            Ok(tape.add(h_prev, dm)?)
        }
    }
}

/// Gated recurrent unit.
#[derive(Debug, Clone)]
pub struct Gru {
    pub wx: Linear,
    pub wh: ParamId,
    pub bh: ParamId,
    pub hidden: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct BoundGru {
    wx: BoundLinear,
    wh: Var,
    bh: Var,
    hidden: usize,
}

impl Gru {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let wx = Linear::new(store, &format!("{name}.x"), in_dim, 3 * hidden, rng)?;
        let wh = store.add(format!("{name}.h.w"), Tensor::xavier(hidden, 3 * hidden, rng))?;
        let bh = store.add(format!("{name}.h.b"), Tensor::zeros(&[1, 3 * hidden]))?;
        Ok(Self { wx, wh, bh, hidden })
    }

    pub fn bind(&self, tape: &mut Tape, store: &ParamStore) -> Result<BoundGru> {
        Ok(BoundGru {
            wx: self.wx.bind(tape, store)?,
            wh: tape.param(store, self.wh)?,
            bh: tape.param(store, self.bh)?,
            hidden: self.hidden,
        })
    }
}

impl BoundGru {
    pub fn hidden(&self) -> usize {
        self.hidden
    }

    /// Input projections for all steps at once: `[rows, in] -> [rows, 3h]`.
    pub fn project(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        self.wx.apply(tape, x)
    }

    /// One step from a projected input `xp` (`[batch, 3h]`).
    pub fn step(&self, tape: &mut Tape, xp: Var, h: Var) -> Result<Var> {
        let n = self.hidden;
        let hw = tape.matmul(h, self.wh)?;
        let hp = tape.add(hw, self.bh)?;
        let xr = tape.slice_cols(xp, 0, n)?;
        let xz = tape.slice_cols(xp, n, n)?;
        let xn = tape.slice_cols(xp, 2 * n, n)?;
        let hr = tape.slice_cols(hp, 0, n)?;
        let hz = tape.slice_cols(hp, n, n)?;
        let hn = tape.slice_cols(hp, 2 * n, n)?;
        let r_in = tape.add(xr, hr)?;
        let r = tape.sigmoid(r_in)?;
        let z_in = tape.add(xz, hz)?;
        let z = tape.sigmoid(z_in)?;
        let rhn = tape.mul(r, hn)?;
        let n_in = tape.add(xn, rhn)?;
        let cand = tape.tanh(n_in)?;
        let d = tape.sub(h, cand)?;
        let zd = tape.mul(z, d)?;
        Ok(tape.add(cand, zd)?)
    }

    /// Run over a projected time-major input (`[T*batch, 3h]`), returning
    /// the state after every step (padding steps repeat the last state).
    pub fn run(
        &self,
        tape: &mut Tape,
        xp: Var,
        seq: &SeqBatch,
        h0: Var,
        reverse: bool,
    ) -> Result<Vec<Var>> {
        let mut h = h0;
        let mut states = vec![h0; seq.max_len];
        let steps: Box<dyn Iterator<Item = usize>> = if reverse {
            Box::new((0..seq.max_len).rev())
        } else {
            Box::new(0..seq.max_len)
        };
        for t in steps {
            let x_t = tape.slice_rows(xp, t * seq.batch, seq.batch)?;
            let h_new = self.step(tape, x_t, h)?;
            h = masked_update(tape, h, h_new, seq.step_mask(t).as_deref())?;
            states[t] = h;
        }
        Ok(states)
    }
}

/// Long short-term memory cell.
#[derive(Debug, Clone)]
pub struct Lstm {
    pub wx: Linear,
    pub wh: ParamId,
    pub hidden: usize,
}

impl Lstm {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let wx = Linear::new(store, &format!("{name}.x"), in_dim, 4 * hidden, rng)?;
        // Forget-gate bias starts at 1.
        store.get_mut(wx.b).data_mut()[hidden..2 * hidden].fill(1.0);
        let wh = store.add(format!("{name}.h.w"), Tensor::xavier(hidden, 4 * hidden, rng))?;
        Ok(Self { wx, wh, hidden })
    }

    /// Final hidden state of every sequence in `seq`, given the embedded
    /// time-major input `x`.
    pub fn final_state(&self, tape: &mut Tape, store: &ParamStore, x: Var, seq: &SeqBatch) -> Result<Var> {
        let n = self.hidden;
        let xp = self.wx.forward(tape, store, x)?;
        let wh = tape.param(store, self.wh)?;
        let mut h = tape.constant(&[seq.batch, n], vec![0.0; seq.batch * n])?;
        let mut c = h;
        for t in 0..seq.max_len {
            let x_t = tape.slice_rows(xp, t * seq.batch, seq.batch)?;
            let hw = tape.matmul(h, wh)?;
            let g = tape.add(x_t, hw)?;
            let i_in = tape.slice_cols(g, 0, n)?;
            let f_in = tape.slice_cols(g, n, n)?;
            let c_in = tape.slice_cols(g, 2 * n, n)?;
            let o_in = tape.slice_cols(g, 3 * n, n)?;
            let i = tape.sigmoid(i_in)?;
            let f = tape.sigmoid(f_in)?;
            let cc = tape.tanh(c_in)?;
            let o = tape.sigmoid(o_in)?;
            let fc = tape.mul(f, c)?;
            let ic = tape.mul(i, cc)?;
            let c_new = tape.add(fc, ic)?;
            let tc = tape.tanh(c_new)?;
            let h_new = tape.mul(o, tc)?;
            let mask = seq.step_mask(t);
            c = masked_update(tape, c, c_new, mask.as_deref())?;
            h = masked_update(tape, h, h_new, mask.as_deref())?;
        }
        Ok(h)
    }
}

/// Embedded input for a recurrent layer: token ids looked up in a table,
/// or per-step distributions over the vocabulary multiplied into it.
#[derive(Debug, Clone, Copy)]
pub enum SeqInput<'a> {
    Hard(&'a SeqBatch),
    /// `dists` is `[T*batch, V]`, time-major like `seq.ids`; only the
    /// lengths of `seq` are used.
    Soft { dists: Var, seq: &'a SeqBatch },
}

impl SeqInput<'_> {
    pub fn seq(&self) -> &SeqBatch {
        match self {
            SeqInput::Hard(s) | SeqInput::Soft { seq: s, .. } => s,
        }
    }

    /// `[T*batch, d]` embedded input.
    pub fn embed(&self, tape: &mut Tape, table: Var) -> Result<Var> {
        match self {
            SeqInput::Hard(s) => Ok(tape.embedding(table, &s.ids)?),
            SeqInput::Soft { dists, .. } => Ok(tape.matmul(*dists, table)?),
        }
    }
}

pub fn zeros_var(tape: &mut Tape, rows: usize, cols: usize) -> Result<Var> {
    Ok(tape.constant(&[rows, cols], vec![0.0; rows * cols])?)
}
