"""Flow routing on paired structural/functional graphs.

The numerical core lives in :mod:`flowroute.spectral`, :mod:`flowroute.resistance`
and :mod:`flowroute.flow`; the trainable model in :mod:`flowroute.nn`.
"""

__version__ = "0.1.0"

from .errors import FlowRouteError  # noqa: E402
from .flow import aggregate_flow_closed_form, aggregate_flow_oracle, demand_laplacian  # noqa: E402
from .graph import ConnectomePair, EdgeList, build_edge_list  # noqa: E402
from .resistance import effective_resistance  # noqa: E402
from .spectral import build_laplacian  # noqa: E402

__all__ = [
    "ConnectomePair",
    "EdgeList",
    "FlowRouteError",
    "aggregate_flow_closed_form",
    "aggregate_flow_oracle",
    "build_edge_list",
    "build_laplacian",
    "demand_laplacian",
    "effective_resistance",
]
