//! Robust structure recovery of Gaussian graphical models whose observed
//! covariance is corrupted by unknown independent diagonal noise.
//!
//! Under such noise the graph is only identifiable up to an equivalence
//! class, summarised by an articulated set tree (AST): the block-cut
//! structure with the interiors of non-trivial blocks collapsed and leaf
//! families made interchangeable. The crate provides
//!
//! - [`graph`]: graphs, block decompositions, ASTs, separators, joint graphs
//!   and the equivalence-class checker;
//! - [`ggm`]: model synthesis, information distances, sampling and margins;
//! - [`nomad`]: the recovery pipeline from a distance matrix to an AST;
//! - [`identifiability`]: confounding decompositions that keep the
//!   observed covariance fixed while changing the precision pattern;
//! - [`oracle`]: exhaustive reference implementations for verification;
//! - [`experiments`]: generators, trial sweeps and scoring;
//! - [`io`]: JSON and CSV formats.
//!
//! ```
//! use nomad_ggm::{experiments::gsyn_standin, ggm::*, nomad::*, same_equivalence_class};
//!
//! let g = gsyn_standin();
//! let (model, _) = synthesize_model(&g, WeightRange::default(), 0.5, 7, &SynthesisOptions::default()).unwrap();
//! let out = run_nomad(&model.observed_distances(), &Tolerances::population()).unwrap();
//! assert!(same_equivalence_class(&g, &out.ast).unwrap());
//! ```

pub mod error;
pub mod experiments;
pub mod ggm;
pub mod graph;
pub mod identifiability;
pub mod io;
pub mod nomad;
pub mod oracle;

pub use error::{NomadError, Result};
pub use ggm::{DistanceMatrix, GgmModel, ModelMargins, NoiseSpec, PrecisionMatrix};
pub use graph::{
    block_decomposition, build_ast, same_equivalence_class, ArticulatedSetTree, BlockDecomposition, UndirectedGraph, Vertex,
    VertexSet,
};
pub use nomad::{run_nomad, run_nomad_on_data, NomadOutput, Tolerances};
