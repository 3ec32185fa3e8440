"""
Unit tests for the cellular automaton dynamics and the axiom verifiers
"""

import numpy as np
import pytest

from fock_hilbert import (
    X_DOWN, X_EMPTY, X_UP, LocalFactor, random_state, single_particle, vacuum_state,
)
from lattice_geometry import LatticeSurface, Region, SurfaceError
from qca_dynamics import (
    FSViolationError, GateModel, build_schedule, evolution_operator, evolve, gate_unitarity_residual,
    local_gates, reduced_evolution_W, schedule_order_residual, shared_region, verify_FS, verify_IL,
    verify_NCFV, verify_NCFV_local,
)


def flat_region(n_sites, layer=0):
    return Region.full(LatticeSurface.flat(n_sites, layer))


@pytest.mark.unit
class TestGates:
    """Test the local gate set"""

    @pytest.mark.parametrize("model_fixture", [
        "free_model", "coin_model", "interacting_model", "nonlocal_model", "creation_model",
    ])
    def test_gates_are_unitary(self, model_fixture, request):
        model = request.getfixturevalue(model_fixture)
        assert gate_unitarity_residual(local_gates(model)) < 1e-12

    def test_interacting_factor(self, interacting_model):
        assert interacting_model.factor == LocalFactor(with_y=True)
        assert interacting_model.d == 6

    def test_shift_exchanges(self, free_model):
        gates = local_gates(free_model)
        even, odd = gates.shift_even.reshape(9, 9), gates.shift_odd.reshape(9, 9)
        up_left, down_right = X_UP * 3 + X_EMPTY, X_EMPTY * 3 + X_DOWN
        assert even[down_right, up_left] == 1
        assert even[up_left, down_right] == 1
        assert odd[X_EMPTY * 3 + X_UP, X_DOWN * 3 + X_EMPTY] == 1
        blocked = X_UP * 3 + X_UP
        assert even[blocked, blocked] == 1

    def test_model_dict(self, interacting_model):
        data = interacting_model.to_dict()
        assert data['interacting'] is True
        assert data['defect'] == 'none'
        assert GateModel.from_dict(data) == interacting_model


@pytest.mark.unit
class TestSchedules:
    """Test gate schedules between cuts"""

    def test_straddling_surface(self, free_model):
        with pytest.raises(SurfaceError, match="not a brickwork cut"):
            build_schedule(LatticeSurface.flat(4, 0), LatticeSurface.staircase(4, 0), free_model)

    def test_order_of_surfaces(self, free_model):
        with pytest.raises(SurfaceError, match="nowhere above"):
            build_schedule(LatticeSurface.flat(3, 2), LatticeSurface.flat(3, 1), free_model)

    def test_cells_per_row(self, free_model):
        schedule = build_schedule(LatticeSurface.flat(4, 0), LatticeSurface.flat(4, 1), free_model)
        kinds = [cell.kind for cell in schedule.cells]
        assert kinds.count('coin') == 4
        assert [cell.sites for cell in schedule.cells if cell.kind == 'shift'] == [(0, 1), (2, 3)]

    def test_odd_rows_flip_then_shift(self, interacting_model):
        schedule = build_schedule(LatticeSurface.flat(4, 1), LatticeSurface.flat(4, 2), interacting_model)
        kinds = [cell.kind for cell in schedule.cells]
        assert kinds.count('flip') == 4
        assert 'coin' not in kinds and 'interaction' not in kinds
        assert [cell.sites for cell in schedule.cells if cell.kind == 'shift'] == [(1, 2)]

    def test_unrelated_cells_commute(self, interacting_model):
        schedule = build_schedule(LatticeSurface.flat(4, 0), LatticeSurface.flat(4, 2), interacting_model)
        assert schedule.commutation_residual(local_gates(interacting_model)) < 1e-12

    def test_topological_orders_agree(self, interacting_model, rng):
        psi = random_state(flat_region(3), interacting_model.factor, rng)
        assert schedule_order_residual(psi, LatticeSurface((2, 2, 3)), interacting_model) < 1e-12


@pytest.mark.unit
class TestEvolution:
    """Test evolution between cuts"""

    @pytest.mark.parametrize("site, spin, layer, expected", [
        (2, 'up', 2, 3),
        (3, 'up', 2, 4),
        (0, 'up', 6, 3),
        (2, 'down', 2, 1),
        (3, 'down', 2, 2),
        (4, 'down', 4, 2),
    ])
    def test_spin_sets_direction(self, free_model, site, spin, layer, expected):
        """Without coin mixing an up moves one site right and a down one site left every two rows"""
        psi = single_particle(flat_region(6), free_model.factor, site, spin)
        evolved = evolve(psi, LatticeSurface.flat(6, layer), free_model)
        moved = single_particle(flat_region(6, layer), free_model.factor, expected, spin)
        assert np.allclose(evolved.amplitudes, moved.amplitudes)

    def test_reflects_at_the_edge(self, free_model):
        psi = single_particle(flat_region(4), free_model.factor, 3, 'up')
        evolved = evolve(psi, LatticeSurface.flat(4, 4), free_model)
        moved = single_particle(flat_region(4, 4), free_model.factor, 2, 'down')
        assert np.allclose(evolved.amplitudes, moved.amplitudes)

    def test_unitarity_along_a_detour(self, coin_model, rng):
        """Evolving to a curved cut and back returns the initial state"""
        psi = random_state(flat_region(5), coin_model.factor, rng)
        there = evolve(psi, LatticeSurface.vee(5, 1, 1), coin_model)
        back = evolve(there, LatticeSurface.flat(5, 0), coin_model)
        assert np.linalg.norm(back.amplitudes - psi.amplitudes) < 1e-12

    def test_density_matches_state(self, interacting_model, rng):
        psi = random_state(flat_region(3), interacting_model.factor, rng)
        target = LatticeSurface((2, 2, 3))
        evolved = evolve(psi, target, interacting_model)
        rho = evolve(psi.to_density(), target, interacting_model)
        assert np.allclose(rho.matrix, np.outer(evolved.amplitudes, evolved.amplitudes.conj()))

    def test_operator_is_unitary(self, coin_model):
        U = evolution_operator(LatticeSurface.flat(3, 0), LatticeSurface.staircase(3, 1), coin_model)
        assert np.allclose(U.conj().T @ U, np.eye(27))

    def test_partial_state_rejected(self, free_model):
        sub = Region.from_sites(LatticeSurface.flat(3, 0), [0, 1])
        with pytest.raises(ValueError, match="whole surface"):
            evolve(vacuum_state(sub, free_model.factor), LatticeSurface.flat(3, 1), free_model)


@pytest.mark.unit
class TestReducedEvolution:
    """Test the reduced evolution operators W"""

    def test_isometry_for_local_dynamics(self, coin_model):
        A = Region.from_sites(LatticeSurface.flat(4, 0), [1])
        W = reduced_evolution_W(A, LatticeSurface.flat(4, 0), LatticeSurface.flat(4, 1), coin_model)
        assert W.target.site_list == [0, 1, 2]
        assert W.matrix.shape == (27, 3)
        assert W.isometry_defect < 1e-12

    @pytest.mark.negative
    def test_creation_breaks_isometry(self, creation_model):
        A = Region.from_sites(LatticeSurface.flat(3, 0), [0])
        with pytest.raises(FSViolationError, match="not an isometry"):
            reduced_evolution_W(A, LatticeSurface.flat(3, 0), LatticeSurface.flat(3, 1), creation_model)
        unchecked = reduced_evolution_W(A, LatticeSurface.flat(3, 0), LatticeSurface.flat(3, 1),
                                        creation_model, check=False)
        assert unchecked.isometry_defect > 1e-3


@pytest.mark.unit
class TestVerifiers:
    """Test the axiom verifiers on lawful and defective models"""

    SOURCE = LatticeSurface.flat(3, 0)
    TARGET = LatticeSurface((1, 1, 0))

    def test_shared_region(self):
        assert shared_region(self.SOURCE, self.TARGET).site_list == [2]

    def test_locality_holds(self, coin_model):
        report = verify_IL(self.SOURCE, self.TARGET, shared_region(self.SOURCE, self.TARGET), coin_model)
        assert report.passed
        assert report.residual < 1e-11

    def test_non_shared_site_rejected(self, coin_model):
        with pytest.raises(SurfaceError, match="not shared"):
            verify_IL(self.SOURCE, self.TARGET, Region.from_sites(self.SOURCE, [0]), coin_model)

    @pytest.mark.negative
    def test_nonlocal_phase_breaks_locality(self, nonlocal_model):
        report = verify_IL(self.SOURCE, self.TARGET, shared_region(self.SOURCE, self.TARGET), nonlocal_model)
        assert not report.passed
        assert report.details['factorization_residual'] > 1e-3

    def test_finite_speed_holds(self, interacting_model, rng):
        A = Region.from_sites(self.SOURCE, [0])
        report = verify_FS(A, self.SOURCE, LatticeSurface.flat(3, 1), interacting_model, trials=2, rng=rng,
                           regions=[Region(self.SOURCE, mask) for mask in range(8)])
        assert report.passed
        assert report.details['grown'] == [0, 1]
        assert report.details['projector_min_eigenvalue'] >= -1e-10

    @pytest.mark.negative
    def test_creation_breaks_finite_speed(self, creation_model, rng):
        A = Region.from_sites(self.SOURCE, [0])
        report = verify_FS(A, self.SOURCE, LatticeSurface.flat(3, 1), creation_model, trials=1, rng=rng)
        assert not report.passed

    def test_vacuum_stability(self, interacting_model, nonlocal_model):
        target = LatticeSurface.staircase(3, 1)
        assert verify_NCFV(self.SOURCE, target, interacting_model).passed
        assert verify_NCFV(self.SOURCE, target, nonlocal_model).passed

    @pytest.mark.negative
    def test_creation_breaks_vacuum_stability(self, creation_model):
        report = verify_NCFV(self.SOURCE, LatticeSurface.flat(3, 1), creation_model)
        assert not report.passed
        assert report.residual > 1e-3

    def test_local_vacuum_stability(self, coin_model):
        shared = shared_region(self.SOURCE, self.TARGET)
        assert verify_NCFV_local(self.SOURCE, self.TARGET, shared, coin_model).passed
