"""
Unit tests for the truncated Fock-space linear algebra
"""

import numpy as np
import pytest

from config_events import CapacityError, event_exists
from fock_hilbert import (
    DensityOp, LocalFactor, QuantumState, X_UP, apply_site_map, basis_index, born_distribution,
    check_capacity, embed_state_vacuum, embed_vacuum, expectation, is_concentrated, partial_trace,
    product_state, pvm_projector, random_density, random_state, single_particle, tensor_join,
    tensor_split, vacuum_state,
)
from lattice_geometry import LatticeSurface, Region


@pytest.fixture
def region():
    return Region.full(LatticeSurface.flat(3, 0))


@pytest.mark.unit
class TestLocalFactor:
    """Test the per-site occupation factor"""

    def test_dimensions(self):
        assert LocalFactor().dim == 3
        assert LocalFactor(with_y=True).dim == 6

    def test_local_indices(self):
        factor = LocalFactor(with_y=True)
        assert factor.index(X_UP, 1) == 3
        assert factor.x_of(3) == X_UP and factor.y_of(3) == 1
        assert list(factor.occupied) == [False, True, True, True, True, True]

    def test_y_without_species(self):
        with pytest.raises(ValueError, match="y-species not present"):
            LocalFactor().index(0, 1)

    def test_capacity(self):
        with pytest.raises(CapacityError, match="exceeds limit"):
            check_capacity(LocalFactor(), 10)


@pytest.mark.unit
class TestStates:
    """Test state construction and validation"""

    def test_vacuum(self, region):
        psi = vacuum_state(region, LocalFactor())
        assert psi.dim == 27
        assert psi.amplitudes[0] == 1
        assert born_distribution(psi) == {0: 1.0}

    def test_single_particle_index(self, region):
        factor = LocalFactor()
        psi = single_particle(region, factor, 1, 'up')
        assert basis_index(region, factor, {1: X_UP}) == 3
        assert np.argmax(np.abs(psi.amplitudes)) == 3
        assert born_distribution(psi) == {0b010: 1.0}

    def test_y_particle(self, region):
        psi = single_particle(region, LocalFactor(with_y=True), 2, species='y')
        assert born_distribution(psi) == {0b100: 1.0}

    def test_distribution_keeps_only_occupied_configurations(self, region):
        psi = product_state(region, LocalFactor(), {0: [1, 1, 0]})
        assert set(born_distribution(psi)) == {0b000, 0b001}
        assert born_distribution(psi, tol=0.6) == {}

    def test_bad_spin(self, region):
        with pytest.raises(ValueError, match="spin must be 'up' or 'down'"):
            single_particle(region, LocalFactor(), 0, 'sideways')

    def test_norm_above_one(self, region):
        with pytest.raises(ValueError, match="exceeds 1"):
            QuantumState(region, LocalFactor(), np.full(27, 1.0))

    def test_wrong_length(self, region):
        with pytest.raises(ValueError, match="needs 27 amplitudes"):
            QuantumState(region, LocalFactor(), np.zeros(9))

    def test_product_state_is_normalised(self, region):
        psi = product_state(region, LocalFactor(), {0: [1, 1, 0], 2: [0, 0, 2]})
        assert psi.norm() == pytest.approx(1.0)
        distribution = born_distribution(psi)
        assert distribution[0b100] == pytest.approx(0.5)
        assert distribution[0b101] == pytest.approx(0.5)

    def test_random_state_concentration(self, region, rng):
        support = Region.from_sites(region.surface, [0, 1])
        psi = random_state(region, LocalFactor(), rng, concentrated_in=support)
        assert is_concentrated(psi, support)
        assert not is_concentrated(psi, Region.from_sites(region.surface, [0]))

    def test_random_density_is_valid(self, region, rng):
        rho = random_density(region, LocalFactor(), rng, rank=3)
        assert rho.is_valid()
        assert rho.trace() == pytest.approx(1.0)


@pytest.mark.unit
class TestProjectors:
    """Test PVM projectors built from events"""

    def test_expectation_of_occupied_site(self, region):
        factor = LocalFactor()
        psi = single_particle(region, factor, 1)
        projector = pvm_projector(event_exists(Region.from_sites(region.surface, [1])), factor)
        assert projector.rank == 27 - 9
        assert expectation(psi, projector) == pytest.approx(1.0)
        assert expectation(psi.to_density(), projector) == pytest.approx(1.0)

    def test_compose_is_intersection(self, region):
        factor = LocalFactor()
        first = pvm_projector(event_exists(Region.from_sites(region.surface, [0])), factor)
        second = pvm_projector(event_exists(Region.from_sites(region.surface, [2])), factor)
        assert first.compose(second).rank == 2 * 3 * 2

    def test_apply_keeps_matching_amplitudes(self, region, rng):
        factor = LocalFactor()
        psi = random_state(region, factor, rng)
        projector = pvm_projector(event_exists(Region.from_sites(region.surface, [1])), factor)
        projected = projector.apply(psi)
        assert projected.norm() ** 2 == pytest.approx(expectation(psi, projector))
        assert np.allclose(projector.apply(projected).amplitudes, projected.amplitudes)

    def test_event_outside_operator_region(self, region):
        sub = Region.from_sites(region.surface, [0])
        with pytest.raises(ValueError, match="not inside operator region"):
            pvm_projector(event_exists(region), LocalFactor(), sub)


@pytest.mark.unit
class TestFactorisation:
    """Test tensor splits, partial traces and vacuum embeddings"""

    def test_split_join_identity(self, region, rng):
        psi = random_state(region, LocalFactor(), rng)
        view = tensor_split(psi, Region.from_sites(region.surface, [2, 0]))
        assert view.as_matrix().shape == (9, 3)
        assert np.allclose(tensor_join(view).amplitudes, psi.amplitudes)

    def test_partial_trace_of_product(self, region):
        factor = LocalFactor()
        psi = product_state(region, factor, {0: [0, 1, 0], 1: [1, 0, 1]})
        reduced = partial_trace(psi.to_density(), Region.from_sites(region.surface, [1, 2]))
        assert reduced.region.site_list == [0]
        assert np.allclose(reduced.matrix, np.diag([0, 1, 0]))

    def test_embed_then_trace(self, rng):
        surface = LatticeSurface.flat(3, 0)
        sub = Region.from_sites(surface, [0, 2])
        rho = random_density(sub, LocalFactor(), rng)
        extra = Region.from_sites(surface, [1])
        joint = embed_vacuum(rho, extra)
        assert joint.region.site_list == [0, 1, 2]
        assert joint.trace() == pytest.approx(1.0)
        assert np.allclose(partial_trace(joint, extra).matrix, rho.matrix)

    def test_embed_pure_state(self):
        surface = LatticeSurface.flat(3, 0)
        factor = LocalFactor()
        psi = single_particle(Region.from_sites(surface, [0, 2]), factor, 2)
        joint = embed_state_vacuum(psi, Region.from_sites(surface, [1]))
        assert joint.region.site_list == [0, 1, 2]
        assert born_distribution(joint) == {0b100: 1.0}

    def test_embed_overlap(self, region, rng):
        rho = random_density(region, LocalFactor(), rng)
        with pytest.raises(ValueError, match="overlaps state region"):
            embed_vacuum(rho, Region.from_sites(region.surface, [1]))

    def test_site_map_moves_a_particle(self):
        """Identity map from site 0 onto site 2"""
        surface = LatticeSurface.flat(2, 0)
        factor = LocalFactor()
        psi = single_particle(Region.full(surface), factor, 0)
        moved, sites = apply_site_map(psi.amplitudes, [0, 1], np.eye(3), [0], [2], factor.dim)
        assert sites == [1, 2]
        assert np.argmax(np.abs(moved)) == X_UP * 3

    def test_site_map_shape_mismatch(self):
        with pytest.raises(ValueError, match="does not match"):
            apply_site_map(np.zeros(9), [0, 1], np.eye(9), [0], [2], 3)

    def test_density_shape(self, region):
        with pytest.raises(ValueError, match="needs shape"):
            DensityOp(region, LocalFactor(), np.eye(3))
