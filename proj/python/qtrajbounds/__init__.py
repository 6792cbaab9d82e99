"""Uncertainty bounds for Markovian open quantum systems."""

from ._core import (
    BoundReport,
    Bundle,
    Error,
    MaserParams,
    OpenSystem,
    bounds,
    build_maser,
    cycle_current,
    embed_classical,
    phi_inverse,
    random_chain,
    sweep,
    tkur_lower_bound,
    traj,
)

__all__ = [
    "BoundReport",
    "Bundle",
    "Error",
    "MaserParams",
    "OpenSystem",
    "bounds",
    "build_maser",
    "cycle_current",
    "embed_classical",
    "phi_inverse",
    "random_chain",
    "sweep",
    "tkur_lower_bound",
    "traj",
]
