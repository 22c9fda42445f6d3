//! The executionality rubric.

use serde::{Deserialize, Serialize};

use super::{MechanismDescriptor, MechanismKind, PagingMode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionalityReport {
    pub score: f64,
    #[serde(rename = "positive")]
    pub positive_indicators: Vec<String>,
    #[serde(rename = "negative")]
    pub negative_indicators: Vec<String>,
    pub dominated_by_negative: bool,
}

/// Base score of each mechanism kind.
pub fn base_score(kind: MechanismKind) -> f64 {
    match kind {
        MechanismKind::Manual => -1.0,
        MechanismKind::Simulation => -0.8,
        MechanismKind::Interpreted | MechanismKind::CompiledIntermediate => -0.5,
        MechanismKind::JitFragments => -0.2,
        MechanismKind::CompiledObject => 0.0,
        MechanismKind::Direct | MechanismKind::Oracle => 0.7,
    }
}

/// Paging more often than this per step count is a hard negative.
pub const FREQUENT_SWAP_INTERVAL: f64 = 10.0;
/// Paging at least this rarely does not count against execution.
pub const RARE_SWAP_INTERVAL: f64 = 100.0;

const MANAGED_CAP: f64 = -0.2;
const DEDICATED_CAP: f64 = -0.5;
const FREQUENT_PAGING_CAP: f64 = -0.3;

/// Scores how far a mechanism counts as execution, in `[-1, 1]`.
///
/// Soft indicators (concurrency, occasional code-controlled paging) only
/// dampen a positive score. Hard indicators cap the score below zero
/// whatever positives are present.
pub fn executionality(desc: &MechanismDescriptor) -> ExecutionalityReport {
    let f = &desc.flags;
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    let mut hard: Vec<f64> = Vec::new();

    let base = base_score(desc.kind);
    if base > 0.0 {
        pos.push("operational_order_stepping".to_string());
        if f.pipelined {
            pos.push("pipelined".to_string());
        }
    } else if base < 0.0 {
        neg.push(desc.kind.as_str().to_string());
        hard.push(base);
    }
    let mut score = base;

    if f.concurrent_threads > 1 {
        neg.push("concurrent_threads".to_string());
        if score > 0.0 {
            score = (score - 0.1 * f64::from(f.concurrent_threads - 1)).max(0.1);
        }
    }
    match (f.paging.mode, f.paging.mean_swap_interval) {
        (PagingMode::Hardware, Some(_)) => pos.push("hardware_paging".to_string()),
        (PagingMode::CodeControlled, Some(i)) if i < FREQUENT_SWAP_INTERVAL => {
            neg.push("frequent_code_controlled_paging".to_string());
            hard.push(FREQUENT_PAGING_CAP);
        }
        (PagingMode::CodeControlled, Some(i)) if i < RARE_SWAP_INTERVAL => {
            neg.push("code_controlled_paging".to_string());
            if score > 0.0 {
                score /= 2.0;
            }
        }
        _ => {}
    }
    if f.managed {
        neg.push("managed".to_string());
        hard.push(MANAGED_CAP);
    }
    if f.dedicated_hardware || desc.machine.dedicated_hardware {
        neg.push("dedicated_hardware".to_string());
        hard.push(DEDICATED_CAP);
    }

    let dominated = !hard.is_empty();
    for cap in hard {
        score = score.min(cap);
    }
    ExecutionalityReport {
        score: score.clamp(-1.0, 1.0),
        positive_indicators: pos,
        negative_indicators: neg,
        dominated_by_negative: dominated,
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::mechanism::{MachineSpec, PagingInfo};
    use crate::service::InterfaceSpec;

    fn desc(kind: MechanismKind) -> MechanismDescriptor {
        MechanismDescriptor::new(kind, MachineSpec::register_machine(16, Arc::new(InterfaceSpec::new())))
    }

    #[test]
    fn kinds() {
        let d = executionality(&desc(MechanismKind::Direct));
        assert!(d.score > 0.0);
        assert!(d.negative_indicators.is_empty());
        assert_eq!(executionality(&desc(MechanismKind::Manual)).score, -1.0);
        assert!(executionality(&desc(MechanismKind::Interpreted)).score < 0.0);
        assert_eq!(executionality(&desc(MechanismKind::CompiledObject)).score, 0.0);
    }

    #[test]
    fn pipelining_keeps_direct_positive() {
        let mut d = desc(MechanismKind::Direct);
        d.flags.pipelined = true;
        let r = executionality(&d);
        assert_eq!(r.score, executionality(&desc(MechanismKind::Direct)).score);
        assert!(r.positive_indicators.contains(&"pipelined".to_string()));
    }

    #[test]
    fn concurrency_dampens_but_stays_positive() {
        let mut d = desc(MechanismKind::Direct);
        d.flags.concurrent_threads = 3;
        let r = executionality(&d);
        assert!(r.score > 0.0 && r.score < 0.7);
        assert!(!r.dominated_by_negative);
        d.flags.concurrent_threads = 1000;
        assert!(executionality(&d).score > 0.0);
    }

    #[test]
    fn paging_thresholds() {
        let mut d = desc(MechanismKind::Direct);
        d.flags.paging = PagingInfo {
            mode: PagingMode::CodeControlled,
            mean_swap_interval: Some(3.0),
        };
        assert!(executionality(&d).score < 0.0);
        d.flags.paging.mean_swap_interval = Some(50.0);
        let mid = executionality(&d).score;
        assert!(mid > 0.0 && mid < 0.7);
        d.flags.paging.mean_swap_interval = Some(500.0);
        assert_eq!(executionality(&d).score, 0.7);
        d.flags.paging = PagingInfo {
            mode: PagingMode::Hardware,
            mean_swap_interval: Some(2.0),
        };
        assert_eq!(executionality(&d).score, 0.7);
    }

    #[test]
    fn hard_negatives_dominate() {
        let mut d = desc(MechanismKind::Direct);
        d.flags.dedicated_hardware = true;
        d.flags.pipelined = true;
        let r = executionality(&d);
        assert!(r.score <= -0.5);
        assert!(r.dominated_by_negative);
        let mut d = desc(MechanismKind::Direct);
        d.flags.managed = true;
        assert!(executionality(&d).score < 0.0);
    }
}
