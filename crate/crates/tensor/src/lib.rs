//! Dense `f64` tensors with a dynamic reverse-mode tape, an Adam optimiser
//! and a binary checkpoint container.
//!
//! ```
//! use gef_tensor::{ParamStore, Tape, Tensor};
//!
//! let mut store = ParamStore::new();
//! let w = store.add("w", Tensor::new(&[1, 2], vec![1.0, -2.0]).unwrap()).unwrap();
//! let mut tape = Tape::new();
//! let x = tape.param(&store, w).unwrap();
//! let sq = tape.mul(x, x).unwrap();
//! let loss = tape.sum(sq).unwrap();
//! tape.backward_into(loss, &mut store).unwrap();
//! assert_eq!(store.get(w).grad().unwrap(), &[2.0, -4.0]);
//! ```

pub mod checkpoint;
pub mod error;
pub mod gradcheck;
pub mod optim;
pub mod tape;
pub mod tensor;

pub use checkpoint::Checkpoint;
pub use error::{Result, TensorError};
pub use optim::{adam_update, AdamConfig, AdamState};
pub use tape::{Gradients, Tape, Var};
pub use tensor::{Param, ParamId, ParamStore, Tensor};
