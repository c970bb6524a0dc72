//! Gate cutting: planning, quasiprobability expansion, fragment execution
//! and reconstruction.

pub mod execute;
pub mod manifest;
pub mod plan;
pub mod policy;
pub mod qpd;
pub mod reconstruct;
pub mod variant;

pub use execute::{execute_fragment, execute_variant, result_path, ExecutionMode, FragmentResult};
pub use manifest::{PlanManifest, MANIFEST_PATH};
pub use plan::{plan_cuts, plan_cuts_with, CutPlan, PlannerConfig};
pub use policy::{select_backend, BackendPolicy, BackendRole, FixedPolicy, ThresholdPolicy};
pub use qpd::{channel_deviation, decompose_gate, gamma, LocalOp, LocalStep, QpdTerm};
pub use reconstruct::{reconstruct, ReconstructionResult, ResultMode};
pub use variant::{
    fragment_path, generate_variants, term_digits, variant, variant_coefficient, variant_count, Fragment,
    FragmentCircuit, FragmentOp, StoredFragment, SubcircuitVariant,
};
