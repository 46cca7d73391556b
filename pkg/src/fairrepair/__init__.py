"""Fairness measurement and repair for small dense networks on tabular data."""

__version__ = "0.1.0"

from .errors import FairRepairError  # noqa: E402
from .metrics import FairnessReport, evaluate  # noqa: E402
from .nn import Network, NetworkConfig, TrainConfig, build_network, train  # noqa: E402
from .repair import RepairConfig, fairneuron_repair  # noqa: E402
from .slicing import SliceParams, get_activation_path, slice_dataset  # noqa: E402

__all__ = [
    "FairRepairError", "FairnessReport", "evaluate", "Network", "NetworkConfig", "TrainConfig",
    "build_network", "train", "RepairConfig", "fairneuron_repair", "SliceParams",
    "get_activation_path", "slice_dataset", "__version__",
]
