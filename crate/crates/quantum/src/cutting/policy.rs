use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Which class of executor a fragment is routed to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum BackendRole {
    Cpu,
    Gpu,
    Qpu,
}

impl BackendRole {
    pub const ALL: [BackendRole; 3] = [BackendRole::Cpu, BackendRole::Gpu, BackendRole::Qpu];

    pub fn as_str(self) -> &'static str {
        match self {
            BackendRole::Cpu => "CPU",
            BackendRole::Gpu => "GPU",
            BackendRole::Qpu => "QPU",
        }
    }
}

impl fmt::Display for BackendRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BackendRole {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "cpu" => Ok(BackendRole::Cpu),
            "gpu" => Ok(BackendRole::Gpu),
            "qpu" => Ok(BackendRole::Qpu),
            other => Err(format!("unknown backend role {other:?}")),
        }
    }
}

/// Maps a fragment width to the backend that should run it.
pub trait BackendPolicy: Send + Sync {
    fn select(&self, num_qubits: usize) -> BackendRole;
}

/// Small circuits to the QPU, medium to CPU, large to GPU.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ThresholdPolicy {
    pub qpu_max_qubits: usize,
    pub cpu_max_qubits: usize,
}

impl Default for ThresholdPolicy {
    fn default() -> Self {
        Self {
            qpu_max_qubits: 5,
            cpu_max_qubits: 20,
        }
    }
}

impl BackendPolicy for ThresholdPolicy {
    fn select(&self, num_qubits: usize) -> BackendRole {
        if num_qubits <= self.qpu_max_qubits {
            BackendRole::Qpu
        } else if num_qubits <= self.cpu_max_qubits {
            BackendRole::Cpu
        } else {
            BackendRole::Gpu
        }
    }
}

/// Routes everything to one backend.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FixedPolicy(pub BackendRole);

impl BackendPolicy for FixedPolicy {
    fn select(&self, _num_qubits: usize) -> BackendRole {
        self.0
    }
}

/// The shipped default policy.
pub fn select_backend(num_qubits: usize) -> BackendRole {
    ThresholdPolicy::default().select(num_qubits)
}
