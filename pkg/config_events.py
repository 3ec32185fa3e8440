"""
Configuration Space and Event Algebra
Species-merged occupation configurations over finite site sets, the
∅/∃/∀ event generators, the composite detection events and the
reconstruction of a configuration distribution from vacuum-event
probabilities.

Features:
- Configurations as integer bitmasks over lattice sites
- Events as vectorised predicates with set algebra and lazy materialisation
- Outcome records s (per round and patch) and coarse patterns L
- Detection events M_B, N_B, M_P and the shrunk/grown families M_C
- Möbius inversion over the subset lattice
"""

import itertools
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterator, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from config import Config
from lattice_geometry import (
    Partition, PatchGrowth, Region, SliceDecomposition, sites_from_mask,
)


logger = logging.getLogger(__name__)


class CapacityError(ValueError):
    """Raised when a dense object would exceed the configured capacity"""


class InconsistentDistributionError(ValueError):
    """Raised when vacuum-event probabilities admit no distribution"""


# Configuration space

def local_to_global(local: np.ndarray, sites: Sequence[int]) -> np.ndarray:
    """Map local subset indices (bit j = j-th site of ``sites``) to lattice bitmasks"""
    local = np.asarray(local, dtype=np.int64)
    result = np.zeros_like(local)
    for j, site in enumerate(sites):
        result |= ((local >> j) & 1) << site
    return result


def global_to_local(masks: np.ndarray, sites: Sequence[int]) -> np.ndarray:
    masks = np.asarray(masks, dtype=np.int64)
    result = np.zeros_like(masks)
    for j, site in enumerate(sites):
        result |= ((masks >> site) & 1) << j
    return result


def popcount_array(masks: np.ndarray, n_bits: int) -> np.ndarray:
    masks = np.asarray(masks, dtype=np.int64)
    counts = np.zeros_like(masks)
    for bit in range(n_bits):
        counts += (masks >> bit) & 1
    return counts


def _require_materialisable(region: Region) -> None:
    if region.count > Config.MAX_EVENT_SITES:
        raise CapacityError(
            f"cannot materialise Γ over {region.count} sites (limit {Config.MAX_EVENT_SITES})"
        )


def all_configurations(region: Region) -> np.ndarray:
    """Γ(R) as ascending lattice bitmasks"""
    _require_materialisable(region)
    return local_to_global(np.arange(1 << region.count, dtype=np.int64), region.site_list)


def configurations_with_n(region: Region, n: int) -> np.ndarray:
    """The n-particle sector Γ_n(R)"""
    configs = all_configurations(region)
    n_bits = region.surface.n_sites
    return configs[popcount_array(configs, n_bits) == n]


def split_configuration(q: int, A: Region, B: Region) -> Tuple[int, int]:
    """Γ(A ∪ B) → Γ(A) × Γ(B)"""
    if A.sites & B.sites:
        raise ValueError(f"split regions overlap at sites {sites_from_mask(A.sites & B.sites)}")
    if q & ~(A.sites | B.sites):
        raise ValueError(f"configuration {sites_from_mask(q)} not inside A ∪ B")
    return q & A.sites, q & B.sites


def join_configuration(qa: int, qb: int, A: Region, B: Region) -> int:
    if A.sites & B.sites:
        raise ValueError(f"join regions overlap at sites {sites_from_mask(A.sites & B.sites)}")
    if qa & ~A.sites or qb & ~B.sites:
        raise ValueError("configuration parts outside their regions")
    return qa | qb


# Events

Predicate = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class Event:
    """A set of configurations of the ambient region, given as a predicate"""
    region: Region
    predicate: Predicate = field(repr=False)
    label: str = ''

    def contains(self, configs) -> np.ndarray:
        configs = np.asarray(configs, dtype=np.int64)
        inside = (configs & ~np.int64(self.region.sites)) == 0
        return inside & np.asarray(self.predicate(configs), dtype=bool)

    def __contains__(self, config: int) -> bool:
        return bool(self.contains(np.array([config]))[0])

    def _require_same_ambient(self, other: 'Event') -> None:
        if other.region.sites != self.region.sites:
            raise ValueError(
                f"events live on different regions ({self.region.site_list} vs {other.region.site_list})"
            )

    def __and__(self, other: 'Event') -> 'Event':
        self._require_same_ambient(other)
        return Event(self.region, lambda c: self.contains(c) & other.contains(c),
                     f"({self.label} ∩ {other.label})")

    def __or__(self, other: 'Event') -> 'Event':
        self._require_same_ambient(other)
        return Event(self.region, lambda c: self.contains(c) | other.contains(c),
                     f"({self.label} ∪ {other.label})")

    def __invert__(self) -> 'Event':
        return Event(self.region, lambda c: ~self.contains(c), f"¬{self.label}")

    def difference(self, other: 'Event') -> 'Event':
        return self & ~other

    def product(self, other: 'Event') -> 'Event':
        """S_A × S_B on Γ(A ∪ B) for disjoint ambient regions"""
        if self.region.sites & other.region.sites:
            raise ValueError("product events need disjoint regions")
        joint = self.region.union(other.region)
        a_sites, b_sites = np.int64(self.region.sites), np.int64(other.region.sites)
        return Event(joint, lambda c: self.contains(c & a_sites) & other.contains(c & b_sites),
                     f"{self.label} × {other.label}")

    def members(self) -> np.ndarray:
        configs = all_configurations(self.region)
        return configs[self.contains(configs)]

    def same_members(self, other: 'Event') -> bool:
        self._require_same_ambient(other)
        configs = all_configurations(self.region)
        return bool(np.array_equal(self.contains(configs), other.contains(configs)))

    def issubset(self, other: 'Event') -> bool:
        self._require_same_ambient(other)
        configs = all_configurations(self.region)
        return bool(np.all(~self.contains(configs) | other.contains(configs)))

    def to_dict(self) -> Dict:
        return {
            'region': self.region.site_list,
            'label': self.label,
            'members': [int(q) for q in self.members()],
        }


def _ambient(R: Region, ambient: Optional[Region]) -> Region:
    ambient = ambient if ambient is not None else Region.full(R.surface)
    if R.sites & ~ambient.sites:
        raise ValueError(f"region {R.site_list} not inside ambient region {ambient.site_list}")
    return ambient


def full_event(ambient: Region) -> Event:
    return Event(ambient, lambda c: np.ones(np.shape(c), dtype=bool), 'Γ')


def vacuum_event(ambient: Region) -> Event:
    """{∅}, the single empty configuration"""
    return Event(ambient, lambda c: np.asarray(c) == 0, '{∅}')


def event_empty(R: Region, ambient: Optional[Region] = None) -> Event:
    """∅(R): no particle in R"""
    ambient = _ambient(R, ambient)
    mask = np.int64(R.sites)
    return Event(ambient, lambda c: (np.asarray(c) & mask) == 0, f"∅{R.site_list}")


def event_exists(R: Region, ambient: Optional[Region] = None) -> Event:
    """∃(R): at least one particle in R"""
    ambient = _ambient(R, ambient)
    mask = np.int64(R.sites)
    return Event(ambient, lambda c: (np.asarray(c) & mask) != 0, f"∃{R.site_list}")


def event_all(R: Region, ambient: Optional[Region] = None) -> Event:
    """∀(R): every particle in R"""
    ambient = _ambient(R, ambient)
    event = event_empty(ambient.difference(R), ambient)
    return Event(ambient, event.predicate, f"∀{R.site_list}")


# Outcome records

@dataclass(frozen=True)
class OutcomePattern:
    """Coarse-grained result L_ℓ per patch"""
    bits: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, 'bits', tuple(int(b) for b in self.bits))
        if any(b not in (0, 1) for b in self.bits):
            raise ValueError(f"outcome pattern must be 0/1, got {self.bits}")

    @property
    def r(self) -> int:
        return len(self.bits)

    def to_key(self) -> str:
        return ''.join(str(b) for b in self.bits)

    @classmethod
    def from_key(cls, key: str) -> 'OutcomePattern':
        return cls(tuple(int(ch) for ch in key))


def all_patterns(r: int) -> List[OutcomePattern]:
    return [OutcomePattern(bits) for bits in itertools.product((0, 1), repeat=r)]


@dataclass(frozen=True)
class OutcomeSeq:
    """Detection record s: rows k = κ..K, columns ℓ = 1..r"""
    kappa: int
    rows: Tuple[Tuple[int, ...], ...]

    def __post_init__(self):
        rows = tuple(tuple(int(b) for b in row) for row in self.rows)
        object.__setattr__(self, 'rows', rows)
        if not rows:
            raise ValueError("outcome sequence needs at least one round")
        if len({len(row) for row in rows}) != 1:
            raise ValueError("outcome sequence rows differ in length")
        if any(b not in (0, 1) for row in rows for b in row):
            raise ValueError("outcome sequence entries must be 0/1")

    @property
    def K(self) -> int:
        return self.kappa + len(self.rows) - 1

    @property
    def r(self) -> int:
        return len(self.rows[0])

    def row(self, k: int) -> Tuple[int, ...]:
        return self.rows[k - self.kappa]

    @property
    def index(self) -> int:
        """Position in the fixed enumeration order, bit (k - κ)·r + ℓ"""
        value = 0
        for i, row in enumerate(self.rows):
            for j, b in enumerate(row):
                value |= b << (i * self.r + j)
        return value

    @classmethod
    def from_index(cls, index: int, kappa: int, n_rounds: int, r: int) -> 'OutcomeSeq':
        rows = tuple(tuple((index >> (i * r + j)) & 1 for j in range(r)) for i in range(n_rounds))
        return cls(kappa, rows)

    def pattern(self) -> OutcomePattern:
        return OutcomePattern(tuple(int(any(row[j] for row in self.rows)) for j in range(self.r)))

    def matches(self, dec: SliceDecomposition) -> bool:
        return self.kappa == dec.kappa and self.K == dec.K and self.r == dec.r

    def to_key(self) -> str:
        return '.'.join(''.join(str(b) for b in row) for row in self.rows)

    def to_dict(self) -> Dict:
        return {'kappa': self.kappa, 'rows': [list(row) for row in self.rows]}


def _require_matching(s: OutcomeSeq, dec: SliceDecomposition) -> None:
    if not s.matches(dec):
        raise ValueError(
            f"outcome sequence shape (κ={s.kappa}, K={s.K}, r={s.r}) does not match "
            f"decomposition (κ={dec.kappa}, K={dec.K}, r={dec.r})"
        )


def all_outcomes(dec: SliceDecomposition) -> Iterator[OutcomeSeq]:
    n_bits = dec.n_protocol_rounds * dec.r
    for index in range(1 << n_bits):
        yield OutcomeSeq.from_index(index, dec.kappa, dec.n_protocol_rounds, dec.r)


def compatible_outcomes(L: OutcomePattern, dec: SliceDecomposition) -> Iterator[OutcomeSeq]:
    """Every s with s_·ℓ = 0 where L_ℓ = 0 and some s_kℓ = 1 where L_ℓ = 1, in index order"""
    if L.r != dec.r:
        raise ValueError(f"pattern has {L.r} patches, decomposition has {dec.r}")
    n_rounds = dec.n_protocol_rounds
    columns = [[0] if bit == 0 else list(range(1, 1 << n_rounds)) for bit in L.bits]
    seqs = []
    for choice in itertools.product(*columns):
        rows = tuple(tuple((choice[j] >> i) & 1 for j in range(dec.r)) for i in range(n_rounds))
        seqs.append(OutcomeSeq(dec.kappa, rows))
    yield from sorted(seqs, key=lambda s: s.index)


# Detection events

def _hits(mask: int, wanted: int) -> Predicate:
    mask = np.int64(mask)
    if wanted:
        return lambda c: (np.asarray(c) & mask) != 0
    return lambda c: (np.asarray(c) & mask) == 0


def _conjunction(ambient: Region, predicates: List[Predicate], label: str) -> Event:
    def predicate(c):
        c = np.asarray(c, dtype=np.int64)
        result = np.ones(c.shape, dtype=bool)
        for p in predicates:
            result &= p(c)
        return result
    return Event(ambient, predicate, label)


def event_MB(s_row: Sequence[int], dec: SliceDecomposition, k: int) -> Event:
    """M_B(s_k) on Γ(Υ_k): ∩_ℓ ∅(B_kℓ) or ∃(B_kℓ)"""
    rnd = dec.round(k)
    if len(s_row) != dec.r:
        raise ValueError(f"round outcome has {len(s_row)} entries, partition has {dec.r}")
    predicates = [_hits(b.sites, bit) for b, bit in zip(rnd.B_patch, s_row)]
    return _conjunction(Region.full(rnd.upsilon), predicates, f"M_B{tuple(s_row)}@{k}")


def event_NB(s_row: Sequence[int], dec: SliceDecomposition, k: int) -> Event:
    """N_B(s_k), the same event restricted to Γ(B_k)"""
    rnd = dec.round(k)
    if len(s_row) != dec.r:
        raise ValueError(f"round outcome has {len(s_row)} entries, partition has {dec.r}")
    predicates = [_hits(b.sites, bit) for b, bit in zip(rnd.B_patch, s_row)]
    return _conjunction(rnd.B, predicates, f"N_B{tuple(s_row)}@{k}")


def event_MP(L: OutcomePattern, part: Partition, sigma_region: Region) -> Event:
    """M_P(L) on Γ(Σ): ∩_ℓ ∅(P_ℓ) or ∃(P_ℓ)"""
    if L.r != part.r:
        raise ValueError(f"pattern has {L.r} patches, partition has {part.r}")
    predicates = [_hits(patch, bit) for patch, bit in zip(part.patches, L.bits)]
    return _conjunction(sigma_region, predicates, f"M_P{L.to_key()}")


def event_MC_family(s: OutcomeSeq, dec: SliceDecomposition) -> Tuple[Event, Event, Event]:
    """(M_C(s), M̌_C(s), M̂_C(s))"""
    _require_matching(s, dec)
    exact, lower, upper = [], [], []
    for k in dec.protocol_rounds:
        rnd = dec.round(k)
        for index, bit in enumerate(s.row(k)):
            core = rnd.C_patch[index].sites
            check = rnd.C_check[index].sites
            hat = rnd.C_hat[index].sites
            exact.append(_hits(core, bit))
            if bit:
                lower.append(_hits(check, 1))
                upper.append(_hits(hat, 1))
            else:
                lower.append(_hits(hat, 0))
                upper.append(_hits(check, 0))
    ambient = Region.full(dec.sigma)
    key = s.to_key()
    return (
        _conjunction(ambient, exact, f"M_C({key})"),
        _conjunction(ambient, lower, f"M̌_C({key})"),
        _conjunction(ambient, upper, f"M̂_C({key})"),
    )


def _limit_predicate(L: OutcomePattern, dec: SliceDecomposition,
                     empty_sets: List[List[int]], exists_sets: List[List[int]]) -> Predicate:
    """Union over s compatible with L of ∩_{k,ℓ} (∅(empty_sets) if s=0 else ∃(exists_sets))

    The union factorises over patches. For L_ℓ = 1 each round must admit some
    value of s_kℓ and at least one round must admit s_kℓ = 1.
    """
    def predicate(c):
        c = np.asarray(c, dtype=np.int64)
        result = np.ones(c.shape, dtype=bool)
        for index, bit in enumerate(L.bits):
            empties = empty_sets[index]
            exists = exists_sets[index]
            if bit == 0:
                union = 0
                for mask in empties:
                    union |= mask
                result &= (c & np.int64(union)) == 0
                continue
            every_round = np.ones(c.shape, dtype=bool)
            some_hit = np.zeros(c.shape, dtype=bool)
            for empty_mask, exists_mask in zip(empties, exists):
                zero_ok = (c & np.int64(empty_mask)) == 0
                one_ok = (c & np.int64(exists_mask)) != 0
                every_round &= zero_ok | one_ok
                some_hit |= one_ok
            result &= every_round & some_hit
        return result
    return predicate


def event_MC_limits(L: OutcomePattern, dec: SliceDecomposition) -> Tuple[Event, Event, Event]:
    """(M_C^ε(L), M̌_C^ε(L), M̂_C^ε(L)), the unions over s compatible with L"""
    if L.r != dec.r:
        raise ValueError(f"pattern has {L.r} patches, decomposition has {dec.r}")
    rounds = [dec.round(k) for k in dec.protocol_rounds]
    core = [[rnd.C_patch[i].sites for rnd in rounds] for i in range(dec.r)]
    check = [[rnd.C_check[i].sites for rnd in rounds] for i in range(dec.r)]
    hat = [[rnd.C_hat[i].sites for rnd in rounds] for i in range(dec.r)]
    ambient = Region.full(dec.sigma)
    key = L.to_key()
    return (
        Event(ambient, _limit_predicate(L, dec, core, core), f"M_C^ε({key})"),
        Event(ambient, _limit_predicate(L, dec, hat, check), f"M̌_C^ε({key})"),
        Event(ambient, _limit_predicate(L, dec, check, hat), f"M̂_C^ε({key})"),
    )


def event_MP_bracket(L: OutcomePattern, growth: PatchGrowth) -> Tuple[Event, Event]:
    """(M̌_P^ε(L) ∩ ∅(∂P^ε), M̂_P^ε(L)) from shrunk and grown patches"""
    if L.r != len(growth.shrunk):
        raise ValueError(f"pattern has {L.r} patches, growth has {len(growth.shrunk)}")
    lower = [_hits(growth.boundary.sites, 0)]
    upper = []
    for shrunk, grown, bit in zip(growth.shrunk, growth.grown, L.bits):
        if bit:
            lower.append(_hits(shrunk.sites, 1))
            upper.append(_hits(grown.sites, 1))
        else:
            lower.append(_hits(grown.sites, 0))
            upper.append(_hits(shrunk.sites, 0))
    ambient = Region.full(growth.boundary.surface)
    key = L.to_key()
    return (
        _conjunction(ambient, lower, f"M̌_P^ε({key}) ∩ ∅(∂P)"),
        _conjunction(ambient, upper, f"M̂_P^ε({key})"),
    )


# Reconstruction

def _subset_sums(values: np.ndarray, n: int, inverse: bool = False) -> np.ndarray:
    """Zeta transform over the subset lattice, or its Möbius inverse"""
    out = np.array(values, dtype=float)
    for j in range(n):
        view = out.reshape(-1, 2, 1 << j)
        if inverse:
            view[:, 1, :] -= view[:, 0, :]
        else:
            view[:, 1, :] += view[:, 0, :]
    return out


def vacuum_probabilities_from_born(distribution: Mapping[int, float], region: Region) -> Dict[int, float]:
    """Probability of ∅(A) for every A ⊆ R, keyed by lattice bitmask of A"""
    _require_materialisable(region)
    n = region.count
    sites = region.site_list
    local = np.zeros(1 << n)
    for q, p in distribution.items():
        local[int(global_to_local(np.array([q]), sites)[0])] += p
    inside = _subset_sums(local, n)
    full = (1 << n) - 1
    keys = local_to_global(np.arange(1 << n), sites)
    # P(∅(A)) = P(q ⊆ R ∖ A)
    return {int(keys[a]): float(inside[full ^ a]) for a in range(1 << n)}


def reconstruct_distribution(vacuum_probs: Mapping[int, float], region: Region,
                             tolerance: float = None) -> Dict[int, float]:
    """Recover p(q) from P(∅(A)) by inclusion–exclusion"""
    _require_materialisable(region)
    tolerance = Config.RECONSTRUCTION_NEG_TOL if tolerance is None else tolerance
    n = region.count
    sites = region.site_list
    full = (1 << n) - 1
    keys = local_to_global(np.arange(1 << n), sites)
    g = np.zeros(1 << n)
    for a in range(1 << n):
        key = int(keys[a])
        if key not in vacuum_probs:
            raise InconsistentDistributionError(
                f"missing vacuum probability for sites {sites_from_mask(key)}"
            )
        g[full ^ a] = vacuum_probs[key]
    p = _subset_sums(g, n, inverse=True)
    worst = float(p.min()) if len(p) else 0.0
    if worst < -tolerance:
        bad = int(keys[int(np.argmin(p))])
        raise InconsistentDistributionError(
            f"negative mass {worst:.3e} at configuration {sites_from_mask(bad)}"
        )
    logger.debug(f"Reconstructed distribution over {n} sites, total mass {p.sum():.15f}")
    return {int(keys[q]): float(p[q]) for q in range(1 << n)}
