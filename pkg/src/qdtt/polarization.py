"""Polarization algebra and two-photon states of the XX-X radiative cascade.

Two-photon matrices use the basis ordering |HH>, |HV>, |VH>, |VV>, where the
first slot is the biexciton (XX) photon and the second the exciton (X) photon.

The circular convention is fixed project-wide as R = (H - iV)/sqrt(2) and
L = (H + iV)/sqrt(2).  The (R,L) correlations of the Phi+ Bell state flip
under the opposite sign choice, so a single pinned convention matters; with
this one, Phi+ gives zero coincidence probability in (R,R) and 1/2 in (R,L).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_SQ2 = math.sqrt(2.0)

JONES = {
    "H": np.array([1.0, 0.0], dtype=complex),
    "V": np.array([0.0, 1.0], dtype=complex),
    "D": np.array([1.0 / _SQ2, 1.0 / _SQ2], dtype=complex),
    "A": np.array([1.0 / _SQ2, -1.0 / _SQ2], dtype=complex),
    "R": np.array([1.0 / _SQ2, -1j / _SQ2], dtype=complex),
    "L": np.array([1.0 / _SQ2, 1j / _SQ2], dtype=complex),
}
BASIS_LABELS = tuple(JONES)
ORTHOGONAL = {"H": "V", "V": "H", "D": "A", "A": "D", "R": "L", "L": "R"}

# Complementary basis-pair groups used by the 36-entry correlation matrix:
# each group {(I,J), (I,Jperp), (Iperp,J), (Iperp,Jperp)} is a complete
# two-photon measurement whose outcome probabilities sum to one.
BASIS_PAIRS = (("H", "V"), ("D", "A"), ("R", "L"))

# Eigenvalues of a partially transposed state this close to zero (from
# round-off) are clamped so that negativity never reports ~1e-14 entanglement.
EIG_CLAMP = 1e-12
_HERM_TOL = 1e-9


def jones_vector(basis) -> np.ndarray:
    """Return the unit Jones vector for a basis label or a raw 2-vector."""
    if isinstance(basis, str):
        try:
            return JONES[basis]
        except KeyError:
            raise ValueError(f"unknown polarization basis {basis!r}") from None
    v = np.asarray(basis, dtype=complex)
    if v.shape != (2,):
        raise ValueError("Jones vector must have shape (2,)")
    n = np.linalg.norm(v)
    if not math.isclose(n, 1.0, rel_tol=0, abs_tol=1e-10):
        raise ValueError("Jones vector must be unit norm")
    return v


@dataclass(frozen=True)
class CascadeStateParams:
    """Parameters of the precessing two-photon cascade state.

    The exciton fine structure makes the relative phase of the |HH> and |VV>
    components advance linearly with the XX-X emission delay; one precession
    period corresponds to ``precession_period_ps``.  ``coherence_time_ps`` is
    the exciton pure-dephasing time damping the off-diagonal elements
    (infinite by default: the ideal cascade stays pure at every delay).
    """

    precession_period_ps: float
    phase_offset_rad: float = 0.0
    coherence_time_ps: float = math.inf
    lifetime_ps: float = 200.4

    def __post_init__(self):
        if not self.precession_period_ps > 0:
            raise ValueError("precession_period_ps must be > 0")
        if not self.lifetime_ps > 0:
            raise ValueError("lifetime_ps must be > 0")
        if not self.coherence_time_ps > 0:
            raise ValueError("coherence_time_ps must be > 0")


def cascade_phase(tau_ps, params: CascadeStateParams):
    """Relative |VV> phase at emission delay tau: 2*pi*tau/T_p + offset."""
    if math.isinf(params.precession_period_ps):
        return np.broadcast_to(params.phase_offset_rad, np.shape(tau_ps)).copy() \
            if np.ndim(tau_ps) else params.phase_offset_rad
    return 2.0 * math.pi * np.asarray(tau_ps) / params.precession_period_ps \
        + params.phase_offset_rad


def cascade_state(tau_ps: float, params: CascadeStateParams) -> np.ndarray:
    """Density matrix of the cascade two-photon state at delay ``tau_ps``.

    Pure-state form (|HH> + e^{i phi(tau)} |VV>)/sqrt(2) with the coherence
    additionally damped by exp(-tau/T2*).
    """
    if tau_ps < 0:
        raise ValueError("emission delay must be non-negative")
    phi = float(cascade_phase(tau_ps, params))
    damp = 1.0 if math.isinf(params.coherence_time_ps) else \
        math.exp(-tau_ps / params.coherence_time_ps)
    rho = np.zeros((4, 4), dtype=complex)
    rho[0, 0] = 0.5
    rho[3, 3] = 0.5
    coh = 0.5 * damp * np.exp(1j * phi)
    rho[3, 0] = coh          # <VV| rho |HH>
    rho[0, 3] = np.conj(coh)
    return rho


def bell_state(phi: float = 0.0) -> np.ndarray:
    """Density matrix of (|HH> + e^{i phi}|VV>)/sqrt(2)."""
    v = np.array([1.0, 0.0, 0.0, np.exp(1j * phi)], dtype=complex) / _SQ2
    return np.outer(v, v.conj())


def _check_density(rho: np.ndarray, require_trace: bool = True) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (4, 4):
        raise ValueError("density matrix must be 4x4")
    if np.max(np.abs(rho - rho.conj().T)) > _HERM_TOL:
        raise ValueError("matrix is not Hermitian")
    if require_trace and abs(np.trace(rho).real - 1.0) > 1e-6:
        raise ValueError("matrix does not have unit trace")
    return rho


def projection_probability(rho: np.ndarray, basis_xx, basis_x) -> float:
    """Probability of projecting the XX photon onto ``basis_xx`` and the X
    photon onto ``basis_x``: <b_xx b_x| rho |b_xx b_x>."""
    rho = _check_density(rho)
    v = np.kron(jones_vector(basis_xx), jones_vector(basis_x))
    p = float(np.real(v.conj() @ rho @ v))
    # round-off guard only; anything further out is a genuinely bad state
    if p < -1e-9 or p > 1.0 + 1e-9:
        raise ValueError(f"projection probability {p} outside [0, 1]")
    return min(max(p, 0.0), 1.0)


def partial_transpose(rho: np.ndarray) -> np.ndarray:
    """Transpose the X-photon (second qubit) indices."""
    rho = _check_density(rho, require_trace=False)
    return rho.reshape(2, 2, 2, 2).transpose(0, 3, 2, 1).reshape(4, 4)


def negativity(rho: np.ndarray) -> float:
    """Entanglement negativity: sum of |negative eigenvalues| of the partial
    transpose.  0 for separable states, 0.5 for maximally entangled ones."""
    rho = _check_density(rho)
    w = np.linalg.eigvalsh(partial_transpose(rho))
    w = np.where((w < 0.0) & (w > -EIG_CLAMP), 0.0, w)
    return float(-w[w < 0.0].sum())


def pair_probability_coeffs(basis_xx, basis_x) -> tuple[float, complex]:
    """Coefficients (alpha, beta) such that the joint projection probability
    of the cascade state at coherence ``d`` and phase ``phi`` is
    alpha + d * Re(beta * e^{i phi}).  Lets delay-dependent probabilities be
    evaluated on whole arrays without building density matrices."""
    ba = jones_vector(basis_xx)
    bb = jones_vector(basis_x)
    x = np.conj(ba[0] * bb[0])
    y = np.conj(ba[1] * bb[1])
    alpha = 0.5 * (abs(x) ** 2 + abs(y) ** 2)
    beta = complex(np.conj(x) * y)
    return float(alpha), beta


def bell_fidelity(rho: np.ndarray, phi: float = 0.0) -> float:
    """Overlap <Phi(phi)| rho |Phi(phi)> with Phi(phi) = (|HH>+e^{i phi}|VV>)/sqrt2."""
    rho = _check_density(rho)
    f = 0.5 * (rho[0, 0].real + rho[3, 3].real) + np.real(np.exp(1j * phi) * rho[0, 3])
    return float(f)


def max_bell_fidelity(rho: np.ndarray) -> tuple[float, float]:
    """Maximize the Bell fidelity over the relative phase.

    Returns (fidelity, phi_opt); the optimum is phi = -arg(rho_{HH,VV}).
    """
    rho = _check_density(rho)
    f = 0.5 * (rho[0, 0].real + rho[3, 3].real) + abs(rho[0, 3])
    phi = float(-np.angle(rho[0, 3])) if rho[0, 3] != 0 else 0.0
    return float(f), phi
