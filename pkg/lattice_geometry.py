"""
Lattice Causal Geometry
Discrete causal structure of 1+1 Minkowski space on the open lattice [0, L)
with a lightspeed of one site per layer.

Features:
- Lattice Cauchy surfaces with named generators (flat, staircase, vee, peak)
- Causal order, grown sets and shrunk sets
- Brickwork cut predicate, cut enumeration and random cuts
- Detection-slice decomposition for the sequential protocol
- Shrunk and grown partition patches
"""

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np


logger = logging.getLogger(__name__)


class SurfaceError(ValueError):
    """Raised when a surface or region violates a lattice invariant"""


class PartitionError(ValueError):
    """Raised when a detector partition is not admissible"""


# Row ``a`` of the brickwork couples the pair (x, x + 1) iff (x + a) is even.
PAIR_PARITY = 0


def couples(left_site: int, row: int) -> bool:
    """Whether the brickwork row carries a pair gate on (left_site, left_site + 1)"""
    return (left_site + row) % 2 == PAIR_PARITY


def mask_from_sites(sites: Iterable[int]) -> int:
    mask = 0
    for site in sites:
        mask |= 1 << int(site)
    return mask


def sites_from_mask(mask: int) -> List[int]:
    """Ascending site indices of a bitmask"""
    sites = []
    index = 0
    while mask:
        if mask & 1:
            sites.append(index)
        mask >>= 1
        index += 1
    return sites


def popcount(mask: int) -> int:
    return bin(mask).count("1")


@dataclass(frozen=True)
class SpacetimePoint:
    """A lattice point (site, layer)"""
    site: int
    layer: int


def causal_leq(p: SpacetimePoint, q: SpacetimePoint) -> bool:
    """p lies in the causal past of q (reflexive)"""
    return abs(q.site - p.site) <= q.layer - p.layer


def _reach(src_sites: np.ndarray, src_layers: np.ndarray,
           dst_sites: np.ndarray, dst_layers: np.ndarray, mode: str) -> np.ndarray:
    """For each destination point, whether some source point is causally related.

    ``mode`` is 'future' (destination in the future of a source), 'past' or
    'either'.
    """
    if len(src_sites) == 0:
        return np.zeros(len(dst_sites), dtype=bool)
    dx = np.abs(dst_sites[:, None] - src_sites[None, :])
    dt = dst_layers[:, None] - src_layers[None, :]
    if mode == 'future':
        related = dx <= dt
    elif mode == 'past':
        related = dx <= -dt
    else:
        related = dx <= np.abs(dt)
    return related.any(axis=1)


@dataclass(frozen=True)
class LatticeSurface:
    """Integer time assignment per site with |layers[x+1] - layers[x]| <= 1"""
    layers: Tuple[int, ...]

    def __post_init__(self):
        layers = tuple(int(t) for t in self.layers)
        object.__setattr__(self, 'layers', layers)
        if not layers:
            raise SurfaceError("surface must cover at least one site")
        for x in range(len(layers) - 1):
            if abs(layers[x + 1] - layers[x]) > 1:
                raise SurfaceError(
                    f"not lattice-spacelike at sites {x}-{x + 1} "
                    f"(layers {layers[x]} and {layers[x + 1]})"
                )

    # Generators

    @classmethod
    def flat(cls, n_sites: int, layer: int) -> 'LatticeSurface':
        return cls(tuple([layer] * n_sites))

    @classmethod
    def staircase(cls, n_sites: int, offset: int = 1, low: int = 0,
                  high: Optional[int] = None) -> 'LatticeSurface':
        """layers[x] = clip(x + offset, low, high); an odd offset gives a brickwork cut"""
        layers = []
        for x in range(n_sites):
            t = max(x + offset, low)
            if high is not None:
                t = min(t, high)
            layers.append(t)
        return cls(tuple(layers))

    @classmethod
    def vee(cls, n_sites: int, center: int, base: int) -> 'LatticeSurface':
        """Valley with a flat bottom on {center, center + 1}"""
        return cls(tuple(base + max(center - x, x - center - 1, 0) for x in range(n_sites)))

    @classmethod
    def peak(cls, n_sites: int, center: int, top: int) -> 'LatticeSurface':
        """Ridge with a flat top on {center, center + 1}"""
        return cls(tuple(top - max(center - x, x - center - 1, 0) for x in range(n_sites)))

    # Basic accessors

    @property
    def n_sites(self) -> int:
        return len(self.layers)

    @cached_property
    def layer_array(self) -> np.ndarray:
        return np.asarray(self.layers, dtype=np.int64)

    @property
    def all_sites(self) -> int:
        return (1 << self.n_sites) - 1

    @property
    def min_layer(self) -> int:
        return min(self.layers)

    @property
    def max_layer(self) -> int:
        return max(self.layers)

    @property
    def is_flat(self) -> bool:
        return self.min_layer == self.max_layer

    def point(self, site: int) -> SpacetimePoint:
        if not 0 <= site < self.n_sites:
            raise SurfaceError(f"site {site} outside lattice [0, {self.n_sites})")
        return SpacetimePoint(site, self.layers[site])

    # Derived surfaces

    def clamp(self, low: int, high: int) -> 'LatticeSurface':
        return LatticeSurface(tuple(min(max(t, low), high) for t in self.layers))

    def pointwise_min(self, other: 'LatticeSurface') -> 'LatticeSurface':
        self._require_same_size(other)
        return LatticeSurface(tuple(min(a, b) for a, b in zip(self.layers, other.layers)))

    def is_below(self, other: 'LatticeSurface') -> bool:
        """Nowhere above ``other``"""
        self._require_same_size(other)
        return all(a <= b for a, b in zip(self.layers, other.layers))

    # Validation

    def brickwork_violations(self) -> List[int]:
        """Left sites x whose step to x + 1 cuts through a pair gate"""
        bad = []
        for x in range(self.n_sites - 1):
            a, b = self.layers[x], self.layers[x + 1]
            if a != b and couples(x, min(a, b)):
                bad.append(x)
        return bad

    def is_brickwork_cut(self) -> bool:
        return not self.brickwork_violations()

    def require_brickwork_cut(self) -> None:
        bad = self.brickwork_violations()
        if bad:
            x = bad[0]
            raise SurfaceError(
                f"not a brickwork cut at sites {x}-{x + 1} "
                f"(layers {self.layers[x]} and {self.layers[x + 1]})"
            )

    def require_non_negative(self) -> None:
        if self.min_layer < 0:
            raise SurfaceError(
                f"surface must lie in the future of layer 0 (minimum layer {self.min_layer})"
            )

    def _require_same_size(self, other: 'LatticeSurface') -> None:
        if other.n_sites != self.n_sites:
            raise SurfaceError(
                f"surfaces cover different lattices ({self.n_sites} vs {other.n_sites} sites)"
            )

    def to_dict(self) -> Dict:
        return {'layers': list(self.layers)}


@dataclass(frozen=True)
class Region:
    """A set of sites on a surface, identified with its points"""
    surface: LatticeSurface
    sites: int = 0

    def __post_init__(self):
        if self.sites < 0 or self.sites & ~self.surface.all_sites:
            raise SurfaceError(
                f"region sites {sites_from_mask(self.sites)} outside lattice [0, {self.surface.n_sites})"
            )

    @classmethod
    def full(cls, surface: LatticeSurface) -> 'Region':
        return cls(surface, surface.all_sites)

    @classmethod
    def empty(cls, surface: LatticeSurface) -> 'Region':
        return cls(surface, 0)

    @classmethod
    def from_sites(cls, surface: LatticeSurface, sites: Iterable[int]) -> 'Region':
        return cls(surface, mask_from_sites(sites))

    @cached_property
    def site_list(self) -> List[int]:
        return sites_from_mask(self.sites)

    @property
    def count(self) -> int:
        return popcount(self.sites)

    @property
    def is_empty(self) -> bool:
        return self.sites == 0

    def contains_site(self, site: int) -> bool:
        return bool(self.sites >> site & 1)

    def points(self) -> List[SpacetimePoint]:
        return [self.surface.point(x) for x in self.site_list]

    def complement(self) -> 'Region':
        return Region(self.surface, self.surface.all_sites & ~self.sites)

    def union(self, other: 'Region') -> 'Region':
        return Region(self.surface, self.sites | other.sites)

    def intersection(self, other: 'Region') -> 'Region':
        return Region(self.surface, self.sites & other.sites)

    def difference(self, other: 'Region') -> 'Region':
        return Region(self.surface, self.sites & ~other.sites)

    def issubset(self, other: 'Region') -> bool:
        return self.sites & ~other.sites == 0

    def with_surface(self, surface: LatticeSurface) -> 'Region':
        return Region(surface, self.sites)

    def to_dict(self) -> Dict:
        return {'sites': self.site_list, 'layers': [self.surface.layers[x] for x in self.site_list]}


def _points_of(region: Region) -> Tuple[np.ndarray, np.ndarray]:
    sites = np.asarray(region.site_list, dtype=np.int64)
    return sites, region.surface.layer_array[sites] if len(sites) else sites


def grown_set(A: Region, target: LatticeSurface) -> Region:
    """Points of ``target`` in the causal future or past of A"""
    A.surface._require_same_size(target)
    src_sites, src_layers = _points_of(A)
    sites = np.arange(target.n_sites)
    hit = _reach(src_sites, src_layers, sites, target.layer_array, 'either')
    return Region.from_sites(target, np.nonzero(hit)[0])


def shrunk_set(A: Region, target: LatticeSurface) -> Region:
    """Points of ``target`` whose grown set on A's surface lies inside A"""
    source = A.surface
    source._require_same_size(target)
    sites = np.arange(target.n_sites)
    dx = np.abs(sites[:, None] - sites[None, :])
    dt = np.abs(target.layer_array[:, None] - source.layer_array[None, :])
    cone = dx <= dt
    inside = np.array([A.contains_site(y) for y in range(source.n_sites)], dtype=bool)
    keep = ~(cone & ~inside[None, :]).any(axis=1)
    return Region.from_sites(target, np.nonzero(keep)[0])


def future_of_surface(surface: LatticeSurface, sites: np.ndarray, layers: np.ndarray) -> np.ndarray:
    """Membership of the points (sites, layers) in the causal future of the whole surface"""
    all_sites = np.arange(surface.n_sites)
    return _reach(all_sites, surface.layer_array, sites, layers, 'future')


def past_of_surface(surface: LatticeSurface, sites: np.ndarray, layers: np.ndarray) -> np.ndarray:
    all_sites = np.arange(surface.n_sites)
    return _reach(all_sites, surface.layer_array, sites, layers, 'past')


def past_of_region(region: Region, target: LatticeSurface) -> Region:
    """Points of ``target`` in the causal past of the region"""
    src_sites, src_layers = _points_of(region)
    sites = np.arange(target.n_sites)
    hit = _reach(src_sites, src_layers, sites, target.layer_array, 'past')
    return Region.from_sites(target, np.nonzero(hit)[0])


# Brickwork cuts

def _cut_steps(x: int, t: int, low: int, high: int) -> List[int]:
    steps = [t]
    if t + 1 <= high and not couples(x, t):
        steps.append(t + 1)
    if t - 1 >= low and not couples(x, t - 1):
        steps.append(t - 1)
    return steps


def enumerate_cuts(n_sites: int, low: int, high: int) -> Iterator[LatticeSurface]:
    """Every brickwork cut with all layers in [low, high]"""
    def extend(prefix: List[int]) -> Iterator[List[int]]:
        if len(prefix) == n_sites:
            yield prefix
            return
        x = len(prefix) - 1
        for t in sorted(_cut_steps(x, prefix[-1], low, high)):
            yield from extend(prefix + [t])

    for start in range(low, high + 1):
        for layers in extend([start]):
            yield LatticeSurface(tuple(layers))


def random_cut(n_sites: int, rng: np.random.Generator, low: int, high: int) -> LatticeSurface:
    """Random walk over admissible steps; always a brickwork cut"""
    layers = [int(rng.integers(low, high + 1))]
    for x in range(n_sites - 1):
        steps = _cut_steps(x, layers[-1], low, high)
        layers.append(int(steps[rng.integers(len(steps))]))
    return LatticeSurface(tuple(layers))


# Partitions

@dataclass(frozen=True)
class Partition:
    """Disjoint nonempty detector patches P_1..P_r; the remainder is implicit"""
    n_sites: int
    patches: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, 'patches', tuple(int(p) for p in self.patches))
        if not self.patches:
            raise PartitionError("partition needs at least one patch")
        full = (1 << self.n_sites) - 1
        for index, patch in enumerate(self.patches, 1):
            if patch == 0:
                raise PartitionError(f"patch {index} is empty")
            if patch & ~full:
                raise PartitionError(
                    f"patch {index} has sites outside lattice [0, {self.n_sites})"
                )
        for i in range(len(self.patches)):
            for j in range(i + 1, len(self.patches)):
                shared = self.patches[i] & self.patches[j]
                if shared:
                    raise PartitionError(
                        f"partition not disjoint: patches {i + 1} and {j + 1} "
                        f"share sites {sites_from_mask(shared)}"
                    )

    @classmethod
    def from_site_lists(cls, n_sites: int, patches: Sequence[Iterable[int]]) -> 'Partition':
        return cls(n_sites, tuple(mask_from_sites(p) for p in patches))

    @classmethod
    def from_ranges(cls, n_sites: int, ranges: Sequence[Tuple[int, int]]) -> 'Partition':
        """Inclusive site ranges"""
        return cls.from_site_lists(n_sites, [range(lo, hi + 1) for lo, hi in ranges])

    @property
    def r(self) -> int:
        return len(self.patches)

    @property
    def union(self) -> int:
        mask = 0
        for patch in self.patches:
            mask |= patch
        return mask

    @property
    def remainder(self) -> int:
        return ((1 << self.n_sites) - 1) & ~self.union

    def to_dict(self) -> Dict:
        return {'patches': [sites_from_mask(p) for p in self.patches]}


# Slice decomposition

@dataclass(frozen=True)
class SliceRound:
    """Regions of one detection round k"""
    k: int
    upsilon: LatticeSurface
    A: Region
    B: Region
    C: Region
    R: Region
    B_patch: Tuple[Region, ...]
    C_patch: Tuple[Region, ...]
    C_check: Tuple[Region, ...]
    C_hat: Tuple[Region, ...]
    D: Tuple[Region, ...]

    @property
    def detector_strip(self) -> Region:
        """B_k ∪ R_k, the region traced out and reset to vacuum"""
        return self.B.union(self.R)

    def to_dict(self) -> Dict:
        return {
            'k': self.k,
            'layer': self.upsilon.layers[0],
            'A': self.A.site_list,
            'B': self.B.site_list,
            'C': self.C.site_list,
            'R': self.R.site_list,
            'patches': [
                {
                    'B': b.site_list,
                    'C': c.site_list,
                    'C_check': cc.site_list,
                    'C_hat': ch.site_list,
                    'D': d.site_list,
                }
                for b, c, cc, ch, d in zip(self.B_patch, self.C_patch, self.C_check, self.C_hat, self.D)
            ],
        }


@dataclass(frozen=True, eq=False)
class SliceDecomposition:
    """Flat detection surfaces Υ_k = layer k·m and the regions they induce on Σ"""
    sigma: LatticeSurface
    partition: Partition
    m: int
    kappa: int
    K: int
    first_round: int
    rounds: Dict[int, SliceRound] = field(repr=False)
    S: Region = None

    def round(self, k: int) -> SliceRound:
        try:
            return self.rounds[k]
        except KeyError:
            raise KeyError(f"round {k} outside decomposed range [{self.first_round}, {self.K}]")

    @property
    def protocol_rounds(self) -> range:
        return range(self.kappa, self.K + 1)

    @property
    def n_protocol_rounds(self) -> int:
        return self.K - self.kappa + 1

    @property
    def r(self) -> int:
        return self.partition.r

    @property
    def n_sites(self) -> int:
        return self.sigma.n_sites

    def upsilon(self, k: int) -> LatticeSurface:
        return LatticeSurface.flat(self.n_sites, k * self.m)

    def xi_surface(self, k: int) -> LatticeSurface:
        """Ξ_{k-1,k}: A_k at layer km, C_k on Σ, B_{k-1} ∪ R_{k-1} at layer (k-1)m"""
        return self.sigma.clamp((k - 1) * self.m, k * self.m)

    def check_invariants(self) -> List[str]:
        """Violated decomposition invariants, empty when all hold"""
        problems = []
        full = self.sigma.all_sites
        covered = 0
        for k, rnd in sorted(self.rounds.items()):
            if rnd.A.sites & rnd.B.sites or rnd.A.sites & rnd.R.sites or rnd.B.sites & rnd.R.sites:
                problems.append(f"round {k}: A, B, R overlap")
            if rnd.A.sites | rnd.B.sites | rnd.R.sites != full:
                problems.append(f"round {k}: A, B, R do not cover the detection surface")
            if covered & rnd.C.sites:
                problems.append(f"round {k}: C overlaps an earlier round")
            covered |= rnd.C.sites
            for index in range(self.r):
                check, core, hat = rnd.C_check[index], rnd.C_patch[index], rnd.C_hat[index]
                if not (check.issubset(core) and core.issubset(hat)):
                    problems.append(f"round {k}, patch {index + 1}: shrunk/grown nesting fails")
                grown = grown_set(rnd.B_patch[index], self.sigma)
                if grown.sites != hat.sites | rnd.D[index].sites:
                    problems.append(f"round {k}, patch {index + 1}: Gr(B) differs from C_hat ∪ D")
        if covered & self.S.sites:
            problems.append("S overlaps a round")
        if covered | self.S.sites != full:
            problems.append("rounds and S do not cover Σ")
        return problems

    def to_dict(self) -> Dict:
        return {
            'm': self.m,
            'kappa': self.kappa,
            'K': self.K,
            'sigma': list(self.sigma.layers),
            'partition': self.partition.to_dict()['patches'],
            'S': self.S.site_list,
            'rounds': [self.rounds[k].to_dict() for k in sorted(self.rounds)],
        }


def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)


def _build_round(sigma: LatticeSurface, part: Partition, m: int, k: int) -> SliceRound:
    n = sigma.n_sites
    sites = np.arange(n)
    upsilon = LatticeSurface.flat(n, k * m)
    below = LatticeSurface.flat(n, (k - 1) * m)

    at_upsilon = np.full(n, k * m)
    A = Region.from_sites(upsilon, np.nonzero(~future_of_surface(sigma, sites, at_upsilon))[0])

    sigma_layers = sigma.layer_array
    in_past_now = past_of_surface(upsilon, sites, sigma_layers)
    in_past_before = past_of_surface(below, sites, sigma_layers)
    C = Region.from_sites(sigma, np.nonzero(in_past_now & ~in_past_before)[0])

    B = grown_set(C, upsilon)
    R = Region(upsilon, upsilon.all_sites & ~(A.sites | B.sites))

    B_patch, C_patch, C_check, C_hat, D = [], [], [], [], []
    for patch in part.patches:
        b = Region(upsilon, B.sites & patch)
        B_patch.append(b)
        C_patch.append(Region(sigma, C.sites & patch))
        # Null segments of Σ can put earlier-round points into Sr(B, Σ); keep the round-k core.
        C_check.append(shrunk_set(b, sigma).intersection(C))
        C_hat.append(past_of_region(b, sigma).intersection(C))
        D.append(grown_set(b, sigma).difference(C))

    return SliceRound(
        k=k, upsilon=upsilon, A=A, B=B, C=C, R=R,
        B_patch=tuple(B_patch), C_patch=tuple(C_patch),
        C_check=tuple(C_check), C_hat=tuple(C_hat), D=tuple(D),
    )


def slice_decompose(sigma: LatticeSurface, part: Partition, m: int) -> SliceDecomposition:
    """Decompose Σ and the detection surfaces Υ_k into the protocol regions"""
    if int(m) != m or m <= 0:
        raise ValueError(f"Slice decomposition error: m must be a positive integer, got {m}")
    sigma.require_non_negative()
    if part.n_sites != sigma.n_sites:
        raise PartitionError(
            f"partition covers {part.n_sites} sites but the surface has {sigma.n_sites}"
        )

    patch_layers = [sigma.layers[x] for x in sites_from_mask(part.union)]
    kappa = _ceil_div(min(patch_layers), m)
    K = _ceil_div(max(patch_layers), m)
    first_round = min(kappa - 1, _ceil_div(sigma.min_layer, m))

    rounds = {k: _build_round(sigma, part, m, k) for k in range(first_round, K + 1)}
    S = Region.from_sites(sigma, [x for x in range(sigma.n_sites) if sigma.layers[x] > K * m])

    logger.debug(f"Slice decomposition: m={m}, kappa={kappa}, K={K}, rounds={len(rounds)}")
    return SliceDecomposition(
        sigma=sigma, partition=part, m=m, kappa=kappa, K=K,
        first_round=first_round, rounds=rounds, S=S,
    )


# Patch growth

@dataclass(frozen=True)
class PatchGrowth:
    """Shrunk patches P̌^m, grown patches P̂^m and the boundary layer ∂P^m on Σ"""
    m: int
    shrunk: Tuple[Region, ...]
    grown: Tuple[Region, ...]
    boundary: Region


def patch_shrink_grow(part: Partition, sigma: LatticeSurface, m: int) -> PatchGrowth:
    if m <= 0:
        raise ValueError(f"Patch growth error: m must be a positive integer, got {m}")
    n = sigma.n_sites

    def ball(x: int) -> int:
        return mask_from_sites(range(max(0, x - m), min(n - 1, x + m) + 1))

    shrunk, grown = [], []
    boundary = 0
    for patch in part.patches:
        core = 0
        hull = 0
        for x in sites_from_mask(patch):
            around = ball(x)
            hull |= around
            if around & ~patch == 0:
                core |= 1 << x
        shrunk.append(Region(sigma, core))
        grown.append(Region(sigma, hull))
        boundary |= hull & ~core

    return PatchGrowth(m=m, shrunk=tuple(shrunk), grown=tuple(grown), boundary=Region(sigma, boundary))


def patch_inclusion_violations(dec: SliceDecomposition, growth: PatchGrowth) -> List[str]:
    """Shrunk patches lie in the union of shrunk cores, grown cores lie in grown patches"""
    problems = []
    for index in range(dec.r):
        check_union = 0
        hat_union = 0
        for k in dec.protocol_rounds:
            rnd = dec.round(k)
            check_union |= rnd.C_check[index].sites
            hat_union |= rnd.C_hat[index].sites
        if growth.shrunk[index].sites & ~check_union:
            problems.append(f"patch {index + 1}: shrunk patch not covered by shrunk cores")
        if hat_union & ~growth.grown[index].sites:
            problems.append(f"patch {index + 1}: grown cores leave the grown patch")
    return problems
