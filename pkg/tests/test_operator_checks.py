"""
Unit tests for Loewner-order and projector utilities
"""

import numpy as np
import pytest

from lattice_geometry import LatticeSurface, Region
from operator_checks import (
    fs_projector_inequality, loewner_gap, min_eigenvalue, operator_leq, projector_onto,
    projector_residual, random_projector, sandwich_gaps, sandwich_triple,
)
from qca_dynamics import evolution_operator


@pytest.mark.unit
class TestLoewnerOrder:
    """Test operator inequalities"""

    def test_gap_of_scaled_identity(self):
        assert loewner_gap(np.eye(3), 2 * np.eye(3)) == pytest.approx(1.0)
        assert loewner_gap(2 * np.eye(3), np.eye(3)) == pytest.approx(-1.0)

    def test_operator_leq(self):
        P = np.diag([1.0, 0.0])
        assert operator_leq(P, np.eye(2))
        assert not operator_leq(np.eye(2), P)

    def test_empty_matrix(self):
        assert min_eigenvalue(np.zeros((0, 0))) == 0.0


@pytest.mark.unit
class TestProjectors:
    """Test projector construction"""

    def test_projector_onto_span(self, rng):
        P = random_projector(5, 2, rng)
        assert projector_residual(P) < 1e-12
        assert np.trace(P).real == pytest.approx(2.0)

    def test_projector_onto_nothing(self):
        assert np.allclose(projector_onto(np.zeros((3, 0))), 0)

    def test_sandwich_lemma(self, rng):
        """QPQ ≤ P̂ ≤ Q implies P ≤ P̂ + (I − Q)"""
        for _ in range(25):
            dim = int(rng.integers(2, 6))
            Q, P, P_hat = sandwich_triple(dim, rng)
            assert projector_residual(P_hat) < 1e-9
            for gap in sandwich_gaps(Q, P, P_hat):
                assert gap >= -1e-9


@pytest.mark.unit
class TestFiniteSpeedInequality:
    """Test the projector form of finite propagation speed"""

    def test_lawful_dynamics(self, coin_model):
        source = LatticeSurface.flat(3, 0)
        target = LatticeSurface.staircase(3, 1)
        U = evolution_operator(source, target, coin_model)
        for mask in range(8):
            assert fs_projector_inequality(U, Region(source, mask), target, coin_model.factor) >= -1e-10
