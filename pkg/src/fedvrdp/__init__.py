"""Byzantine-robust federated learning with a variance-reduced client-level DP mechanism.

Clients train with local momentum SGD, restrict their updates to a
server-chosen top-k mask, clip and add Gaussian noise; the package also
provides robust aggregation baselines, model-poisoning attacks, a closed-form
privacy accountant and a deterministic round-loop simulator.
"""

from .accountant import epsilon_for, per_round_ledger, sigma_for
from .config import ExperimentConfig, load_config
from .errors import (
    ConfigurationError,
    DomainError,
    FedVRDPError,
    IngestionError,
    NotCertifiableError,
    ProtocolError,
    TrainingDivergedError,
)
from .model import Dataset, ModelSpec
from .orchestrator import Federation, run_experiment

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError",
    "Dataset",
    "DomainError",
    "ExperimentConfig",
    "FedVRDPError",
    "Federation",
    "IngestionError",
    "ModelSpec",
    "NotCertifiableError",
    "ProtocolError",
    "TrainingDivergedError",
    "epsilon_for",
    "load_config",
    "per_round_ledger",
    "run_experiment",
    "sigma_for",
]
