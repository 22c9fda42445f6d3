//! Mechanism descriptors and what they say about a run: whether it puts
//! its program into effect, directly or not, as an interpretation or an
//! execution, and how executional the mechanism is.

mod certify;
mod classify;
mod descriptor;
mod score;

pub use certify::{
    certify, certify_interpreter, certify_uniformity, enumerate_programs, start_states,
    subject_alphabet, Certificate, CertifyError, Sample, Witness,
};
pub use classify::{
    check_wellfounded, classify, is_executable, report, Classification, ClassifyError,
    ProvenanceStore, RunReport, Violation, WellfoundedReport, MAX_CHAIN,
};
pub use descriptor::{
    MachineSpec, MechanismDescriptor, MechanismFlags, MechanismKind, PagingInfo, PagingMode,
};
pub use score::{
    base_score, executionality, ExecutionalityReport, FREQUENT_SWAP_INTERVAL, RARE_SWAP_INTERVAL,
};
