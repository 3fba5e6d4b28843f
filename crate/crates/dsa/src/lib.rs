//! Modeling and optimization of dynamic scattering arrays.
//!
//! A dynamic scattering array is a small set of actively fed antenna
//! elements surrounded by a cloud of passive scatterers terminated by
//! reconfigurable reactive loads. Strong mutual coupling lets the loads act
//! as a wave-domain signal processor: tuning the reactances (together with
//! an optional digital precoder) shapes the end-to-end channel for tasks
//! such as superdirective beam steering, multi-user zero forcing, and
//! channel diagonalization — with far fewer RF chains than a conventional
//! array.
//!
//! The crate is organized along the physical signal path:
//!
//! * [`em`] — Hertzian-dipole primitives: the free-space Green's dyadic,
//!   mutual/self impedances, and field evaluation.
//! * [`geometry`] — array builders (concentric-ring disks and cylinders,
//!   random disks, ULA/UCA baselines) and far-field test rings.
//! * [`network`] — impedance-matrix assembly, the input impedance seen
//!   through the loads, the lossless matching network, the wave-domain
//!   precoder `W_em`, and power/Q bookkeeping, plus an independent
//!   full-circuit solver used to cross-check the closed forms.
//! * [`channel`] — transimpedance matrices (free-space far field and a
//!   composite re-scattered model), end-to-end channel assembly, and gain
//!   patterns.
//! * [`optimize`] — the alternating fit of load reactances, digital
//!   precoder, and link-budget scale, built on a quasi-Newton descent with
//!   finite-difference gradients.
//! * [`usecases`] — target builders and metrics for beam steering,
//!   zero-forcing MISO, and SVD-based MIMO.
//! * [`io`] — reproducible structured-text export/import.
//!
//! A worked tour with runnable snippets lives in the `book/` directory of
//! the repository.
//!
//! ```
//! use dsa::em::PhysicalConstants;
//! use dsa::geometry::{build_cylinder_dsa, ElementDims};
//! use dsa::network::{assemble_impedance, LoadVector, NetworkState};
//!
//! let consts = PhysicalConstants::default();
//! let lambda = consts.wavelength(28e9);
//! let geom = build_cylinder_dsa(
//!     lambda / 4.0, 2, 1, lambda, 1, ElementDims::standard(lambda),
//! )?;
//! let (_, partition) = assemble_impedance(&geom, &consts)?;
//! let state = NetworkState::new(&partition, &LoadVector::zeros(geom.n_scatterers()), 50.0)?;
//! assert_eq!(state.wem.nrows(), geom.n_total());
//! # Ok::<(), dsa::DsaError>(())
//! ```

pub mod channel;
pub mod em;
pub mod error;
pub mod geometry;
mod linalg;
pub mod io;
pub mod network;
pub mod optimize;
pub mod usecases;

pub use error::{DsaError, Result};

pub use em::{Dipole, PhysicalConstants};
pub use geometry::{DsaGeometry, ElementDims, TestPointSet};
pub use network::{ImpedancePartition, LoadVector, NetworkState};
pub use channel::{NlosScene, Transimpedance};
pub use optimize::{OptProblem, OptSolution};
pub use usecases::TargetSpec;
