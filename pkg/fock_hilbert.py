"""
Truncated Fock-Space Linear Algebra
States and density operators over a product of per-site occupation factors.

Basis order is mixed-radix little-endian over the sites of a region (the
first site varies fastest); within a site the x-species is major, so the
local index is 2·x + y when the y-species is present. Internally every
vector is a Fortran-order tensor with one axis per site.

Features:
- Local factors of dimension 3 (x only) or 6 (x and y)
- QuantumState / DensityOp values with JSON serialisation
- Diagonal PVM projectors from events (species-merged)
- Tensor split/join, partial trace, vacuum embedding
- Site maps between regions and vacuum-embedding indices
"""

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.linalg import eigvalsh

from config import Config
from config_events import CapacityError, Event
from lattice_geometry import Region


logger = logging.getLogger(__name__)

# x-species occupation values
X_EMPTY, X_UP, X_DOWN = 0, 1, 2
SPINS = {'up': X_UP, 'down': X_DOWN}


@dataclass(frozen=True)
class LocalFactor:
    """Per-site Hilbert space: x in {empty, up, down}, optional y in {empty, occupied}"""
    with_y: bool = False

    @property
    def dim(self) -> int:
        return 6 if self.with_y else 3

    def index(self, x: int, y: int = 0) -> int:
        if x not in (X_EMPTY, X_UP, X_DOWN) or y not in (0, 1):
            raise ValueError(f"invalid local occupation (x={x}, y={y})")
        if y and not self.with_y:
            raise ValueError("y-species not present in this local factor")
        return 2 * x + y if self.with_y else x

    def x_of(self, index: int) -> int:
        return index // 2 if self.with_y else index

    def y_of(self, index: int) -> int:
        return index % 2 if self.with_y else 0

    @cached_property
    def occupied(self) -> np.ndarray:
        """Species-merged occupation per local index"""
        return np.arange(self.dim) != 0

    def to_dict(self) -> Dict:
        return {'dim': self.dim, 'species': ['x', 'y'] if self.with_y else ['x']}


def check_capacity(factor: LocalFactor, n_sites: int) -> int:
    dim = factor.dim ** n_sites
    if dim > Config.MAX_DENSE_DIM:
        raise CapacityError(
            f"dense dimension {factor.dim}^{n_sites} = {dim} exceeds limit {Config.MAX_DENSE_DIM}"
        )
    return dim


def basis_digits(factor: LocalFactor, n_sites: int) -> np.ndarray:
    """Local index of every site for every basis state, shape (dim, n_sites)"""
    dim = factor.dim ** n_sites
    idx = np.arange(dim)
    return np.stack([(idx // factor.dim ** j) % factor.dim for j in range(n_sites)], axis=1) \
        if n_sites else np.zeros((1, 0), dtype=np.int64)


def basis_configurations(region: Region, factor: LocalFactor) -> np.ndarray:
    """Species-merged configuration bitmask of every basis state"""
    digits = basis_digits(factor, region.count)
    masks = np.zeros(len(digits), dtype=np.int64)
    for j, site in enumerate(region.site_list):
        masks |= factor.occupied[digits[:, j]].astype(np.int64) << site
    return masks


def _as_tensor(vectors: np.ndarray, n: int, d: int) -> np.ndarray:
    """(d^n, ...) → (d,)*n + (...)"""
    return vectors.reshape((d,) * n + vectors.shape[1:], order='F')


def _as_flat(tensor: np.ndarray, n: int, d: int) -> np.ndarray:
    return tensor.reshape((d ** n,) + tensor.shape[n:], order='F')


@dataclass(frozen=True, eq=False)
class QuantumState:
    """Amplitudes over the occupation basis of a region"""
    region: Region
    factor: LocalFactor
    amplitudes: np.ndarray

    def __post_init__(self):
        dim = check_capacity(self.factor, self.region.count)
        amplitudes = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if amplitudes.shape != (dim,):
            raise ValueError(f"state needs {dim} amplitudes, got {amplitudes.shape[0]}")
        norm = float(np.linalg.norm(amplitudes))
        if norm > 1 + Config.NORM_TOL:
            raise ValueError(f"state norm {norm:.15f} exceeds 1")
        object.__setattr__(self, 'amplitudes', amplitudes)

    @property
    def dim(self) -> int:
        return len(self.amplitudes)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalized(self) -> 'QuantumState':
        norm = self.norm()
        if norm == 0:
            raise ValueError("cannot normalise the zero vector")
        return QuantumState(self.region, self.factor, self.amplitudes / norm)

    def tensor(self) -> np.ndarray:
        return _as_tensor(self.amplitudes, self.region.count, self.factor.dim)

    def with_region(self, region: Region) -> 'QuantumState':
        if region.sites != self.region.sites:
            raise ValueError("relabelled region must keep the same sites")
        return QuantumState(region, self.factor, self.amplitudes)

    def to_density(self) -> 'DensityOp':
        return DensityOp(self.region, self.factor, np.outer(self.amplitudes, self.amplitudes.conj()))

    def to_dict(self) -> Dict:
        return {
            'sites': self.region.site_list,
            'layers': list(self.region.surface.layers),
            'local_dim': self.factor.dim,
            'amplitudes': [[float(a.real), float(a.imag)] for a in self.amplitudes],
        }


@dataclass(frozen=True, eq=False)
class DensityOp:
    """Density operator over the occupation basis of a region"""
    region: Region
    factor: LocalFactor
    matrix: np.ndarray

    def __post_init__(self):
        dim = check_capacity(self.factor, self.region.count)
        matrix = np.asarray(self.matrix, dtype=complex)
        if matrix.shape != (dim, dim):
            raise ValueError(f"density operator needs shape {(dim, dim)}, got {matrix.shape}")
        object.__setattr__(self, 'matrix', matrix)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def trace(self) -> float:
        return float(np.trace(self.matrix).real)

    def hermiticity_residual(self) -> float:
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T))) if self.dim else 0.0

    def min_eigenvalue(self) -> float:
        hermitian = (self.matrix + self.matrix.conj().T) / 2
        return float(eigvalsh(hermitian)[0])

    def is_valid(self, normalized: bool = True) -> bool:
        if self.hermiticity_residual() > Config.HERMITIAN_TOL:
            return False
        if normalized and abs(self.trace() - 1) > Config.NORM_TOL * max(1, self.dim):
            return False
        return self.min_eigenvalue() >= -Config.PSD_TOL

    def normalized(self) -> 'DensityOp':
        trace = self.trace()
        if trace <= 0:
            raise ValueError("cannot normalise a density operator with zero trace")
        return DensityOp(self.region, self.factor, self.matrix / trace)

    def with_region(self, region: Region) -> 'DensityOp':
        if region.sites != self.region.sites:
            raise ValueError("relabelled region must keep the same sites")
        return DensityOp(region, self.factor, self.matrix)

    def to_dict(self) -> Dict:
        return {
            'sites': self.region.site_list,
            'layers': list(self.region.surface.layers),
            'local_dim': self.factor.dim,
            'matrix': [[[float(a.real), float(a.imag)] for a in row] for row in self.matrix],
        }


StateLike = Union[QuantumState, DensityOp]


# Constructors

def vacuum_state(region: Region, factor: LocalFactor) -> QuantumState:
    """All sites empty, phase +1"""
    dim = check_capacity(factor, region.count)
    amplitudes = np.zeros(dim, dtype=complex)
    amplitudes[0] = 1.0
    return QuantumState(region, factor, amplitudes)


def basis_index(region: Region, factor: LocalFactor, occupations: Mapping[int, int]) -> int:
    """Basis index for {site: local index}; unlisted sites are empty"""
    index = 0
    positions = {site: j for j, site in enumerate(region.site_list)}
    for site, local in occupations.items():
        if site not in positions:
            raise ValueError(f"site {site} not in region {region.site_list}")
        if not 0 <= local < factor.dim:
            raise ValueError(f"local index {local} outside [0, {factor.dim})")
        index += int(local) * factor.dim ** positions[site]
    return index


def basis_state(region: Region, factor: LocalFactor, occupations: Mapping[int, int]) -> QuantumState:
    amplitudes = np.zeros(check_capacity(factor, region.count), dtype=complex)
    amplitudes[basis_index(region, factor, occupations)] = 1.0
    return QuantumState(region, factor, amplitudes)


def single_particle(region: Region, factor: LocalFactor, site: int,
                    spin: str = 'up', species: str = 'x') -> QuantumState:
    if species == 'x':
        if spin not in SPINS:
            raise ValueError(f"spin must be 'up' or 'down', got {spin!r}")
        local = factor.index(SPINS[spin])
    elif species == 'y':
        local = factor.index(X_EMPTY, 1)
    else:
        raise ValueError(f"species must be 'x' or 'y', got {species!r}")
    return basis_state(region, factor, {site: local})


def product_state(region: Region, factor: LocalFactor,
                  local_vectors: Mapping[int, Sequence[complex]]) -> QuantumState:
    """Tensor product of per-site vectors; unlisted sites are empty"""
    result = np.ones(1, dtype=complex)
    for site in region.site_list:
        if site in local_vectors:
            vec = np.asarray(local_vectors[site], dtype=complex)
            if vec.shape != (factor.dim,):
                raise ValueError(f"site {site} vector needs {factor.dim} entries")
        else:
            vec = np.zeros(factor.dim, dtype=complex)
            vec[0] = 1.0
        # Little-endian: later sites are the slower index
        result = np.kron(vec, result)
    norm = np.linalg.norm(result)
    if norm == 0:
        raise ValueError("product state is the zero vector")
    return QuantumState(region, factor, result / norm)


def random_state(region: Region, factor: LocalFactor, rng: np.random.Generator,
                 concentrated_in: Optional[Region] = None) -> QuantumState:
    """Normalised complex Gaussian state, optionally supported on ∀(concentrated_in)"""
    dim = check_capacity(factor, region.count)
    amplitudes = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    if concentrated_in is not None:
        allowed = (basis_configurations(region, factor) & ~np.int64(concentrated_in.sites)) == 0
        amplitudes = np.where(allowed, amplitudes, 0)
    return QuantumState(region, factor, amplitudes / np.linalg.norm(amplitudes))


def random_density(region: Region, factor: LocalFactor, rng: np.random.Generator,
                   rank: int = 2) -> DensityOp:
    dim = check_capacity(factor, region.count)
    vectors = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    matrix = vectors @ vectors.conj().T
    return DensityOp(region, factor, matrix / np.trace(matrix).real)


# Projectors

@dataclass(frozen=True, eq=False)
class PVMProjector:
    """Diagonal 0/1 projector in the occupation basis"""
    region: Region
    factor: LocalFactor
    mask: np.ndarray

    @property
    def rank(self) -> int:
        return int(np.count_nonzero(self.mask))

    def as_matrix(self) -> np.ndarray:
        return np.diag(self.mask.astype(complex))

    def compose(self, other: 'PVMProjector') -> 'PVMProjector':
        """P(S)P(T) = P(S ∩ T)"""
        if other.region.sites != self.region.sites:
            raise ValueError("projectors act on different regions")
        return PVMProjector(self.region, self.factor, self.mask & other.mask)

    def apply(self, psi: QuantumState) -> QuantumState:
        return QuantumState(psi.region, psi.factor, np.where(self.mask, psi.amplitudes, 0))

    def sandwich(self, rho: DensityOp) -> DensityOp:
        """P ρ P"""
        keep = self.mask.astype(float)
        return DensityOp(rho.region, rho.factor, rho.matrix * np.outer(keep, keep))

    def expectation(self, state: StateLike) -> float:
        return expectation(state, self)


def pvm_projector(event: Event, factor: LocalFactor, region: Optional[Region] = None) -> PVMProjector:
    """P(S) ⊗ I on ``region`` (defaults to the event's ambient region)"""
    region = region if region is not None else event.region
    if event.region.sites & ~region.sites:
        raise ValueError(
            f"event region {event.region.site_list} not inside operator region {region.site_list}"
        )
    configs = basis_configurations(region, factor)
    mask = event.contains(configs & np.int64(event.region.sites))
    return PVMProjector(region, factor, mask)


def expectation(state: StateLike, projector: PVMProjector) -> float:
    if isinstance(state, QuantumState):
        weights = np.abs(state.amplitudes) ** 2
    else:
        weights = np.real(np.diag(state.matrix))
    return float(np.sum(weights[projector.mask]))


def born_distribution(state: StateLike, tol: float = Config.PRUNE_TOL) -> Dict[int, float]:
    """Species-merged configuration probabilities above ``tol``, keyed by lattice bitmask"""
    configs = basis_configurations(state.region, state.factor)
    if isinstance(state, QuantumState):
        weights = np.abs(state.amplitudes) ** 2
    else:
        weights = np.real(np.diag(state.matrix))
    keys, inverse = np.unique(configs, return_inverse=True)
    totals = np.bincount(inverse.reshape(-1), weights=weights, minlength=len(keys))
    return {int(k): float(p) for k, p in zip(keys, totals) if p > tol}


def concentration_residual(psi: QuantumState, A: Region) -> float:
    """‖P(∀(A))ψ − ψ‖"""
    outside = (basis_configurations(psi.region, psi.factor) & ~np.int64(A.sites)) != 0
    return float(np.linalg.norm(psi.amplitudes[outside]))


def is_concentrated(psi: QuantumState, A: Region, tolerance: float = None) -> bool:
    tolerance = Config.CONCENTRATION_TOL if tolerance is None else tolerance
    if A.sites & ~psi.region.sites:
        raise ValueError(f"region {A.site_list} not inside state region {psi.region.site_list}")
    return concentration_residual(psi, A) <= tolerance


# Tensor factorisation

@dataclass(frozen=True, eq=False)
class FactorizedView:
    """A state or density operator re-indexed with the ``first`` sites leading"""
    first: Region
    rest: Region
    original: Region
    factor: LocalFactor
    data: np.ndarray
    is_density: bool

    def as_matrix(self) -> np.ndarray:
        """States only: amplitude matrix [first index, rest index]"""
        if self.is_density:
            raise ValueError("as_matrix is defined for states")
        d = self.factor.dim
        return self.data.reshape((d ** self.first.count, d ** self.rest.count), order='F')


def _permute_sites(data: np.ndarray, n: int, d: int, perm: List[int], is_density: bool) -> np.ndarray:
    if is_density:
        tensor = data.reshape((d,) * (2 * n), order='F')
        tensor = np.transpose(tensor, perm + [n + p for p in perm])
        return tensor.reshape((d ** n, d ** n), order='F')
    tensor = data.reshape((d,) * n, order='F')
    return np.transpose(tensor, perm).reshape(-1, order='F')


def tensor_split(state: StateLike, A: Region) -> FactorizedView:
    region = state.region
    if A.sites & ~region.sites:
        raise ValueError(f"region {A.site_list} not inside {region.site_list}")
    positions = {site: j for j, site in enumerate(region.site_list)}
    first = Region(region.surface, A.sites)
    rest = region.difference(A)
    perm = [positions[s] for s in first.site_list + rest.site_list]
    is_density = isinstance(state, DensityOp)
    raw = state.matrix if is_density else state.amplitudes
    data = _permute_sites(raw, region.count, state.factor.dim, perm, is_density)
    return FactorizedView(first, rest, region, state.factor, data, is_density)


def tensor_join(view: FactorizedView) -> StateLike:
    order = view.first.site_list + view.rest.site_list
    positions = {site: j for j, site in enumerate(order)}
    perm = [positions[s] for s in view.original.site_list]
    data = _permute_sites(view.data, len(order), view.factor.dim, perm, view.is_density)
    if view.is_density:
        return DensityOp(view.original, view.factor, data)
    return QuantumState(view.original, view.factor, data)


def partial_trace(rho: DensityOp, traced: Region) -> DensityOp:
    region = rho.region
    if traced.sites & ~region.sites:
        raise ValueError(f"traced sites {traced.site_list} not inside {region.site_list}")
    kept = region.difference(traced)
    if traced.is_empty:
        return rho
    view = tensor_split(rho, kept)
    d = rho.factor.dim
    dk, dt = d ** kept.count, d ** (region.count - kept.count)
    blocks = view.data.reshape((dk, dt, dk, dt), order='F')
    return DensityOp(kept, rho.factor, np.einsum('atbt->ab', blocks))


def embed_vacuum(rho: DensityOp, extra: Region) -> DensityOp:
    """ρ ⊗ |∅⟩⟨∅| on region ∪ extra"""
    if rho.region.sites & extra.sites:
        raise ValueError(
            f"vacuum region {extra.site_list} overlaps state region {rho.region.site_list}"
        )
    if extra.is_empty:
        return rho
    joint = Region(extra.surface, rho.region.sites | extra.sites)
    d = rho.factor.dim
    check_capacity(rho.factor, joint.count)
    indices = embedding_indices(rho.region.site_list, joint.site_list, d)
    matrix = np.zeros((d ** joint.count,) * 2, dtype=complex)
    matrix[np.ix_(indices, indices)] = rho.matrix
    return DensityOp(joint, rho.factor, matrix)


def embed_state_vacuum(psi: QuantumState, extra: Region) -> QuantumState:
    if psi.region.sites & extra.sites:
        raise ValueError("vacuum region overlaps state region")
    joint = Region(extra.surface, psi.region.sites | extra.sites)
    d = psi.factor.dim
    amplitudes = np.zeros(check_capacity(psi.factor, joint.count), dtype=complex)
    amplitudes[embedding_indices(psi.region.site_list, joint.site_list, d)] = psi.amplitudes
    return QuantumState(joint, psi.factor, amplitudes)


def embedding_indices(sub_sites: Sequence[int], ambient_sites: Sequence[int], d: int) -> np.ndarray:
    """Ambient basis index of (sub basis state) ⊗ (vacuum elsewhere), in sub index order"""
    positions = {site: j for j, site in enumerate(ambient_sites)}
    missing = [s for s in sub_sites if s not in positions]
    if missing:
        raise ValueError(f"sites {missing} not inside ambient sites {list(ambient_sites)}")
    n = len(sub_sites)
    idx = np.arange(d ** n)
    result = np.zeros(d ** n, dtype=np.int64)
    for j, site in enumerate(sub_sites):
        result += ((idx // d ** j) % d) * d ** positions[site]
    return result


def apply_site_map(vectors: np.ndarray, sites: Sequence[int], op: np.ndarray,
                   in_sites: Sequence[int], out_sites: Sequence[int], d: int) -> Tuple[np.ndarray, List[int]]:
    """Apply op: H_in → H_out to the ``in_sites`` factor of each column of ``vectors``

    ``vectors`` has shape (d^|sites|,) or (d^|sites|, batch). Returns the new
    vectors and the ascending site list (sites ∖ in_sites) ∪ out_sites.
    """
    sites = list(sites)
    in_sites, out_sites = list(in_sites), list(out_sites)
    kept = [s for s in sites if s not in in_sites]
    if len(kept) + len(in_sites) != len(sites):
        raise ValueError(f"input sites {in_sites} not inside {sites}")
    if set(kept) & set(out_sites):
        raise ValueError(f"output sites {out_sites} collide with untouched sites")
    op = np.asarray(op)
    if op.shape != (d ** len(out_sites), d ** len(in_sites)):
        raise ValueError(f"site map shape {op.shape} does not match {len(out_sites)}←{len(in_sites)} sites")

    single = vectors.ndim == 1
    batch = vectors.reshape(len(vectors), -1)
    n = len(sites)
    tensor = _as_tensor(batch, n, d)
    op_tensor = op.reshape((d,) * (len(out_sites) + len(in_sites)), order='F')
    positions = {site: j for j, site in enumerate(sites)}
    contracted = np.tensordot(
        op_tensor, tensor,
        axes=(list(range(len(out_sites), len(out_sites) + len(in_sites))), [positions[s] for s in in_sites]),
    )
    # Axes now: out_sites..., kept sites..., batch
    current = out_sites + kept
    new_sites = sorted(current)
    perm = [current.index(s) for s in new_sites] + [len(current)]
    result = _as_flat(np.transpose(contracted, perm), len(new_sites), d)
    return (result[:, 0] if single else result), new_sites
