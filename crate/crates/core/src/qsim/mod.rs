//! Exact statevector simulation: embeddings, the gate set, entangling and
//! tensor-network ansätze, Pauli-Z readout and parameter-shift gradients.

mod block;
mod circuits;
mod state;

pub use block::{amplitude_vjp, parameter_shift, Embedding, QuantumBlock};
pub use circuits::{ansatz_circuit, dump_circuit, sel_circuit, sel_gates, AnsatzKind, AnsatzSpec};
pub use state::{amplitude_embed, ry_template_gates, unitarity_defect, Gate, Mat2, Statevector};
