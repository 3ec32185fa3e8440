"""
Unit tests for configurations, events, outcome records and reconstruction
"""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from config_events import (
    CapacityError, InconsistentDistributionError, OutcomePattern, OutcomeSeq, all_configurations,
    all_outcomes, all_patterns, compatible_outcomes, configurations_with_n, event_MB,
    event_MC_family, event_MC_limits, event_MP, event_NB, event_all, event_empty, event_exists,
    full_event, join_configuration, reconstruct_distribution, split_configuration,
    vacuum_event, vacuum_probabilities_from_born,
)
from lattice_geometry import LatticeSurface, Partition, Region, slice_decompose


@pytest.fixture
def surface():
    return LatticeSurface.flat(4, 0)


@pytest.fixture
def staircase_decomposition():
    return slice_decompose(LatticeSurface.staircase(4, 1), Partition.from_site_lists(4, [[0, 1], [2, 3]]), 2)


@pytest.mark.unit
class TestConfigurations:
    """Test configuration space enumeration"""

    def test_all_configurations(self, surface):
        region = Region.from_sites(surface, [1, 3])
        assert list(all_configurations(region)) == [0, 2, 8, 10]

    def test_particle_number_sector(self, surface):
        configs = configurations_with_n(Region.full(surface), 2)
        assert len(configs) == 6
        assert all(bin(int(q)).count("1") == 2 for q in configs)

    def test_split_and_join(self, surface):
        A = Region.from_sites(surface, [0, 1])
        B = Region.from_sites(surface, [2, 3])
        assert split_configuration(0b1010, A, B) == (0b0010, 0b1000)
        assert join_configuration(0b0010, 0b1000, A, B) == 0b1010

    def test_split_overlapping_regions(self, surface):
        A = Region.from_sites(surface, [0, 1])
        with pytest.raises(ValueError, match="overlap at sites \\[1\\]"):
            split_configuration(0, A, Region.from_sites(surface, [1, 2]))

    def test_capacity_limit(self):
        region = Region.full(LatticeSurface.flat(25, 0))
        with pytest.raises(CapacityError, match="cannot materialise"):
            all_configurations(region)


@pytest.mark.unit
class TestEvents:
    """Test event generators and their algebra"""

    def test_generators(self, surface):
        R = Region.from_sites(surface, [1, 2])
        assert list(event_empty(R).members()) == [0, 1, 8, 9]
        assert 0b0010 in event_exists(R)
        assert 0b0001 not in event_exists(R)
        assert list(event_all(R).members()) == [0, 2, 4, 6]

    def test_vacuum_and_full(self, surface):
        full = Region.full(surface)
        assert list(vacuum_event(full).members()) == [0]
        assert len(full_event(full).members()) == 16

    def test_region_outside_ambient(self, surface):
        with pytest.raises(ValueError, match="not inside ambient region"):
            event_empty(Region.from_sites(surface, [3]), Region.from_sites(surface, [0, 1]))

    @given(a=st.integers(min_value=0, max_value=15), b=st.integers(min_value=0, max_value=15))
    @settings(max_examples=40, deadline=None)
    def test_de_morgan(self, a, b):
        surface = LatticeSurface.flat(4, 0)
        S = event_exists(Region(surface, a))
        T = event_empty(Region(surface, b))
        assert (~(S | T)).same_members(~S & ~T)
        assert (S & T).issubset(S)
        assert S.difference(T).same_members(S & ~T)

    def test_product_event(self, surface):
        A = Region.from_sites(surface, [0])
        B = Region.from_sites(surface, [2])
        joint = event_exists(A, A).product(event_empty(B, B))
        assert joint.region.site_list == [0, 2]
        assert list(joint.members()) == [1]

    def test_mixed_ambients_rejected(self, surface):
        S = event_empty(Region.from_sites(surface, [0]), Region.from_sites(surface, [0]))
        T = event_empty(Region.from_sites(surface, [1]))
        with pytest.raises(ValueError, match="different regions"):
            S & T


@pytest.mark.unit
class TestOutcomeRecords:
    """Test outcome sequences and patterns"""

    def test_record_index_and_pattern(self):
        s = OutcomeSeq(1, ((1, 0), (0, 1)))
        assert s.index == 1 + 8
        assert s.to_key() == '10.01'
        assert s.K == 2
        assert s.pattern() == OutcomePattern((1, 1))
        assert OutcomeSeq.from_index(9, 1, 2, 2) == s

    def test_pattern_from_key(self):
        assert OutcomePattern.from_key('10') == OutcomePattern((1, 0))
        assert OutcomePattern.from_key('011').to_key() == '011'

    def test_invalid_records(self):
        with pytest.raises(ValueError, match="differ in length"):
            OutcomeSeq(0, ((1, 0), (1,)))
        with pytest.raises(ValueError, match="0/1"):
            OutcomeSeq(0, ((2,),))
        with pytest.raises(ValueError, match="0/1"):
            OutcomePattern((0, 3))

    def test_compatible_outcomes(self, staircase_decomposition):
        dec = staircase_decomposition
        counts = {L.to_key(): len(list(compatible_outcomes(L, dec))) for L in all_patterns(2)}
        assert counts == {'00': 1, '10': 3, '01': 3, '11': 9}
        for L in all_patterns(2):
            for s in compatible_outcomes(L, dec):
                assert s.pattern() == L

    def test_all_outcomes(self, staircase_decomposition):
        records = list(all_outcomes(staircase_decomposition))
        assert [s.index for s in records] == list(range(16))


@pytest.mark.unit
class TestDetectionEvents:
    """Test M_B, M_P and the M_C families"""

    def test_MB_on_detection_surface(self, staircase_decomposition):
        dec = staircase_decomposition
        event = event_MB((1, 0), dec, 2)
        # B_2 = {1, 2, 3}; patch 1 meets it at site 1, patch 2 at sites 2, 3
        assert 0b0010 in event
        assert 0b0110 not in event
        assert 0b0001 not in event

    def test_NB_restricted_to_strip(self, staircase_decomposition):
        event = event_NB((1, 0), staircase_decomposition, 2)
        assert event.region.site_list == [1, 2, 3]
        assert list(event.members()) == [0b0010]

    def test_MB_wrong_width(self, staircase_decomposition):
        with pytest.raises(ValueError, match="round outcome has 1 entries"):
            event_MB((1,), staircase_decomposition, 1)

    def test_MP(self, surface):
        part = Partition.from_site_lists(4, [[0, 1], [2, 3]])
        event = event_MP(OutcomePattern((1, 0)), part, Region.full(surface))
        assert list(event.members()) == [1, 2, 3]

    def test_limit_is_union_of_records(self, staircase_decomposition):
        """M_C^ε(L) = ∪_{s compatible with L} M_C(s), and the shrunk/grown versions nest around it"""
        dec = staircase_decomposition
        configs = all_configurations(Region.full(dec.sigma))
        for L in all_patterns(dec.r):
            union = np.zeros(len(configs), dtype=bool)
            for s in compatible_outcomes(L, dec):
                exact, lower, upper = event_MC_family(s, dec)
                union |= exact.contains(configs)
                assert lower.issubset(exact) and exact.issubset(upper)
            limit, lower_limit, upper_limit = event_MC_limits(L, dec)
            assert np.array_equal(limit.contains(configs), union)
            assert lower_limit.issubset(limit) and limit.issubset(upper_limit)

    def test_exact_limit_matches_patterns(self, staircase_decomposition):
        """Round cores cover each patch, so M_C^ε(L) is M_P(L)"""
        dec = staircase_decomposition
        sigma_region = Region.full(dec.sigma)
        for L in all_patterns(dec.r):
            limit, _, _ = event_MC_limits(L, dec)
            assert limit.same_members(event_MP(L, dec.partition, sigma_region))


@pytest.mark.unit
class TestReconstruction:
    """Test recovery of a distribution from vacuum probabilities"""

    def test_recovers_distribution(self, surface):
        region = Region.from_sites(surface, [0, 2, 3])
        distribution = {0: 0.1, 0b0001: 0.2, 0b0101: 0.3, 0b1101: 0.4}
        vacuum = vacuum_probabilities_from_born(distribution, region)
        assert vacuum[0] == pytest.approx(1.0)
        assert vacuum[0b0001] == pytest.approx(0.1)
        rebuilt = reconstruct_distribution(vacuum, region)
        for q in rebuilt:
            assert rebuilt[q] == pytest.approx(distribution.get(q, 0.0), abs=1e-12)

    def test_negative_mass(self, surface):
        region = Region.from_sites(surface, [1])
        with pytest.raises(InconsistentDistributionError, match="negative mass"):
            reconstruct_distribution({0: 1.0, 0b0010: 1.5}, region)

    def test_missing_probability(self, surface):
        region = Region.from_sites(surface, [1])
        with pytest.raises(InconsistentDistributionError, match="missing vacuum probability"):
            reconstruct_distribution({0: 1.0}, region)
