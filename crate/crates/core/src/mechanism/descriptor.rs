use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::service::InterfaceSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MechanismKind {
    Direct,
    Interpreted,
    CompiledObject,
    CompiledIntermediate,
    JitFragments,
    Oracle,
    /// Score-only: nothing in the toolkit produces manual runs.
    Manual,
    Simulation,
}

impl MechanismKind {
    pub const ALL: [MechanismKind; 8] = [
        MechanismKind::Direct,
        MechanismKind::Interpreted,
        MechanismKind::CompiledObject,
        MechanismKind::CompiledIntermediate,
        MechanismKind::JitFragments,
        MechanismKind::Oracle,
        MechanismKind::Manual,
        MechanismKind::Simulation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MechanismKind::Direct => "direct",
            MechanismKind::Interpreted => "interpreted",
            MechanismKind::CompiledObject => "compiled_object",
            MechanismKind::CompiledIntermediate => "compiled_intermediate",
            MechanismKind::JitFragments => "jit_fragments",
            MechanismKind::Oracle => "oracle",
            MechanismKind::Manual => "manual",
            MechanismKind::Simulation => "simulation",
        }
    }
}

/// The architecture a mechanism runs on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MachineSpec {
    pub name: String,
    /// Longest program the machine can hold loaded at once (≥ 1).
    pub max_loaded_len: u64,
    pub iface: Arc<InterfaceSpec>,
    /// The machine's design is dedicated to one particular program.
    #[serde(default)]
    pub dedicated_hardware: bool,
}

impl MachineSpec {
    pub fn new(name: impl Into<String>, max_loaded_len: u64, iface: Arc<InterfaceSpec>) -> Self {
        MachineSpec {
            name: name.into(),
            max_loaded_len: max_loaded_len.max(1),
            iface,
            dedicated_hardware: false,
        }
    }

    /// The register machine every engine in this crate runs on.
    pub fn register_machine(max_loaded_len: u64, iface: Arc<InterfaceSpec>) -> Self {
        MachineSpec::new("boolean-register machine", max_loaded_len, iface)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PagingMode {
    #[default]
    Hardware,
    CodeControlled,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PagingInfo {
    pub mode: PagingMode,
    /// Mean number of steps between page swaps; absent when no swap happened.
    pub mean_swap_interval: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MechanismFlags {
    pub pipelined: bool,
    pub concurrent_threads: u32,
    pub managed: bool,
    pub dedicated_hardware: bool,
    pub paging: PagingInfo,
}

impl Default for MechanismFlags {
    fn default() -> Self {
        MechanismFlags {
            pipelined: false,
            concurrent_threads: 1,
            managed: false,
            dedicated_hardware: false,
            paging: PagingInfo::default(),
        }
    }
}

/// How a run came about.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechanismDescriptor {
    pub kind: MechanismKind,
    pub machine: MachineSpec,
    pub flags: MechanismFlags,
    pub uniform_certified: bool,
}

impl MechanismDescriptor {
    pub fn new(kind: MechanismKind, machine: MachineSpec) -> Self {
        let flags = MechanismFlags {
            dedicated_hardware: machine.dedicated_hardware,
            ..MechanismFlags::default()
        };
        MechanismDescriptor {
            kind,
            machine,
            flags,
            uniform_certified: false,
        }
    }

    /// Descriptor for putting a program directly into effect on `machine`.
    pub fn direct(machine: MachineSpec) -> Self {
        MechanismDescriptor::new(MechanismKind::Direct, machine)
    }
}
