"""
Dense operator checks: Loewner-order inequalities, projector tests and the
projection sandwich lemma
"""

import logging
from typing import Tuple

import numpy as np
from scipy.linalg import eigvalsh, null_space, orth

from config import Config
from config_events import event_empty
from fock_hilbert import LocalFactor, pvm_projector
from lattice_geometry import LatticeSurface, Region, shrunk_set


logger = logging.getLogger(__name__)


def min_eigenvalue(matrix: np.ndarray) -> float:
    """Smallest eigenvalue of the Hermitian part"""
    if matrix.size == 0:
        return 0.0
    return float(eigvalsh((matrix + matrix.conj().T) / 2)[0])


def loewner_gap(lower: np.ndarray, upper: np.ndarray) -> float:
    """min eig(upper − lower); nonnegative iff lower ≤ upper"""
    return min_eigenvalue(upper - lower)


def operator_leq(lower: np.ndarray, upper: np.ndarray, tolerance: float = None) -> bool:
    tolerance = Config.PSD_TOL if tolerance is None else tolerance
    return loewner_gap(lower, upper) >= -tolerance


def projector_residual(P: np.ndarray) -> float:
    """max(|P² − P|, |P − P†|)"""
    return float(max(np.max(np.abs(P @ P - P)), np.max(np.abs(P - P.conj().T))))


def projector_onto(vectors: np.ndarray) -> np.ndarray:
    """Orthogonal projector onto the column span"""
    if vectors.size == 0:
        return np.zeros((vectors.shape[0],) * 2, dtype=complex)
    basis = orth(vectors)
    return basis @ basis.conj().T


def random_projector(dim: int, rank: int, rng: np.random.Generator) -> np.ndarray:
    vectors = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    return projector_onto(vectors)


def sandwich_triple(dim: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Random projections (Q, P, P̂) with QPQ ≤ P̂ ≤ Q

    P̂ projects onto range(QPQ) plus random extra directions inside range(Q).
    """
    Q = random_projector(dim, int(rng.integers(1, dim + 1)), rng)
    P = random_projector(dim, int(rng.integers(1, dim + 1)), rng)
    core = orth(Q @ P @ Q, rcond=1e-10)
    # Directions of range(Q) orthogonal to range(QPQ)
    q_basis = orth(Q, rcond=1e-10)
    if core.size:
        free = null_space(core.conj().T @ q_basis, rcond=1e-10)
        leftovers = q_basis @ free
    else:
        leftovers = q_basis
    extra = leftovers.shape[1]
    if extra:
        pick = int(rng.integers(0, extra + 1))
        mix = rng.normal(size=(extra, pick)) + 1j * rng.normal(size=(extra, pick))
        added = leftovers @ mix
    else:
        added = np.zeros((dim, 0), dtype=complex)
    span = np.hstack([core, added]) if core.size else added
    P_hat = projector_onto(span) if span.size else np.zeros((dim, dim), dtype=complex)
    return Q, P, P_hat


def sandwich_gaps(Q: np.ndarray, P: np.ndarray, P_hat: np.ndarray) -> Tuple[float, float, float]:
    """(QPQ ≤ P̂ gap, P̂ ≤ Q gap, P ≤ P̂ + (I − Q) gap)"""
    identity = np.eye(len(Q))
    return (
        loewner_gap(Q @ P @ Q, P_hat),
        loewner_gap(P_hat, Q),
        loewner_gap(P, P_hat + identity - Q),
    )


def fs_projector_inequality(U: np.ndarray, R: Region, target: LatticeSurface,
                            factor: LocalFactor) -> float:
    """min eig of P(∅(Sr(R, Σ'))) − U P(∅(R)) U†"""
    source_full = Region.full(R.surface)
    before = pvm_projector(event_empty(R, source_full), factor).mask.astype(float)
    after_region = shrunk_set(R, target)
    after = pvm_projector(event_empty(after_region, Region.full(target)), factor).mask.astype(float)
    evolved = (U * before[None, :]) @ U.conj().T
    return loewner_gap(evolved, np.diag(after))
