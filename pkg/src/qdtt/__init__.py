"""qdtt: GHz-clocked entangled photon pair source simulator and time-tag
analysis toolkit.

Subpackages cover the full chain: Monte Carlo tag generation for the pulsed
XX-X cascade (simulate), the binary tag stream format (ttr), high-throughput
correlation (correlate, with a compiled kernel and a numpy fallback),
two-photon state tomography and negativity (tomography, polarization), HOM
and Michelson coherence modeling (interferometry), and scalar estimators
(estimators).  The ``qdtt`` command line exposes the pipeline.
"""

__version__ = "0.1.0"

from ._kernels import BACKEND as KERNEL_BACKEND  # noqa: F401
from .params import CascadeParams, ChannelConfig, paper_defaults  # noqa: F401
from .polarization import (  # noqa: F401
    CascadeStateParams,
    bell_fidelity,
    bell_state,
    cascade_state,
    max_bell_fidelity,
    negativity,
    partial_transpose,
    projection_probability,
)
