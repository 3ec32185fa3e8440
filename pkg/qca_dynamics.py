"""
Quantum Cellular Automaton Dynamics
Local-gate unitary dynamics between brickwork cuts of the lattice.

The walk has a period of two rows. An even row applies, to every advancing
site, the coin, the interaction (interacting models only) and any
negative-control gate, and then the shift on the even pairs (x, x + 1).
An odd row flips the x-spin of every advancing site and then shifts the odd
pairs. The even shift exchanges |up, empty⟩ with |empty, down⟩ and the odd
shift exchanges |down, empty⟩ with |empty, up⟩, so a lone up moves one site
right and a lone down one site left per period, whatever its sublattice.
A lattice surface is a cut through this circuit; evolution between two cuts
applies exactly the cells lying between them.

Features:
- GateModel with free walk, emission–absorption coupling and negative controls
- GateSchedule with a networkx dependency DAG and alternative topological orders
- evolve for states, density operators and column batches
- Dense evolution operators and reduced evolution operators W
- Verifiers for interaction locality, finite propagation speed and vacuum stability
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from config import Config
from config_events import CapacityError
from fock_hilbert import (
    DensityOp, LocalFactor, QuantumState, StateLike, X_DOWN, X_EMPTY, X_UP,
    concentration_residual, embedding_indices, random_state, vacuum_state,
)
from operator_checks import fs_projector_inequality
from lattice_geometry import (
    LatticeSurface, Region, SurfaceError, couples, grown_set,
)


logger = logging.getLogger(__name__)


class FSViolationError(ValueError):
    """Raised when a reduced evolution operator fails to be an isometry"""


class Defect(Enum):
    """Negative-control modifications of the gate set"""
    NONE = 'none'
    NONLOCAL = 'nonlocal'
    VACUUM_CREATION = 'vacuum_creation'


NONLOCAL_PHASE = np.pi / 2
CREATION_ANGLE = np.pi / 7


@dataclass(frozen=True)
class GateModel:
    """Local unitary specification from which every U_Σ^Σ' is composed"""
    theta: float = 0.0
    theta_y: float = 0.0
    coupling: float = 0.0
    phase: float = 0.0
    interacting: bool = False
    defect: Defect = Defect.NONE

    @property
    def factor(self) -> LocalFactor:
        return LocalFactor(with_y=self.interacting)

    @property
    def d(self) -> int:
        return self.factor.dim

    def to_dict(self) -> Dict[str, Any]:
        return {
            'theta': self.theta,
            'theta_y': self.theta_y,
            'coupling': self.coupling,
            'phase': self.phase,
            'interacting': self.interacting,
            'defect': self.defect.value,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'GateModel':
        return cls(
            theta=float(data.get('theta', 0.0)),
            theta_y=float(data.get('theta_y', 0.0)),
            coupling=float(data.get('coupling', 0.0)),
            phase=float(data.get('phase', 0.0)),
            interacting=bool(data.get('interacting', False)),
            defect=Defect(data.get('defect', 'none')),
        )


@dataclass(frozen=True, eq=False)
class LocalGates:
    """Single-site gates are d×d; pair gates are (d, d, d, d) with axes [out_l, out_r, in_l, in_r]"""
    d: int
    coin: np.ndarray
    interaction: Optional[np.ndarray]
    flip: np.ndarray
    shift_even: np.ndarray
    shift_odd: np.ndarray
    phase: Optional[np.ndarray] = None
    creation: Optional[np.ndarray] = None

    def single_site(self) -> List[Tuple[str, np.ndarray]]:
        gates = [('coin', self.coin), ('flip', self.flip)]
        if self.interaction is not None:
            gates.append(('interaction', self.interaction))
        if self.creation is not None:
            gates.append(('creation', self.creation))
        return gates

    def pairs(self) -> List[Tuple[str, np.ndarray]]:
        gates = [('shift_even', self.shift_even), ('shift_odd', self.shift_odd)]
        if self.phase is not None:
            gates.append(('phase', self.phase))
        return gates


def _x_coin(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    coin = np.eye(3, dtype=complex)
    coin[X_UP, X_UP], coin[X_DOWN, X_UP] = c, s
    coin[X_UP, X_DOWN], coin[X_DOWN, X_DOWN] = -s, c
    return coin


def _x_flip() -> np.ndarray:
    flip = np.eye(3, dtype=complex)
    flip[[X_UP, X_DOWN]] = flip[[X_DOWN, X_UP]]
    return flip


def _x_shift(left: int, right: int) -> np.ndarray:
    """Exchange |left, empty⟩ ↔ |empty, right⟩; every other pair state holds"""
    shift = np.eye(9, dtype=complex)
    a, b = left * 3 + X_EMPTY, X_EMPTY * 3 + right
    shift[[a, b]] = shift[[b, a]]
    return shift.reshape(3, 3, 3, 3)


def _y_shift(theta_y: float) -> np.ndarray:
    c, s = np.cos(theta_y), np.sin(theta_y)
    hop = np.eye(4, dtype=complex)
    left, right = 2, 1
    hop[left, left], hop[right, left] = c, -1j * s
    hop[left, right], hop[right, right] = -1j * s, c
    return hop.reshape(2, 2, 2, 2)


def _interaction(coupling: float, phase: float) -> np.ndarray:
    c, s = np.cos(coupling), np.sin(coupling)
    gate = np.eye(6, dtype=complex)
    for x in (X_UP, X_DOWN):
        empty, occupied = 2 * x, 2 * x + 1
        gate[empty, empty] = c
        gate[occupied, empty] = -1j * np.exp(1j * phase) * s
        gate[empty, occupied] = -1j * np.exp(-1j * phase) * s
        gate[occupied, occupied] = c
    return gate


def local_gates(model: GateModel) -> LocalGates:
    """Coin, shift and interaction gates of a model"""
    d = model.d
    x_shifts = (_x_shift(X_UP, X_DOWN), _x_shift(X_DOWN, X_UP))
    if model.interacting:
        coin = np.kron(_x_coin(model.theta), np.eye(2))
        flip = np.kron(_x_flip(), np.eye(2))
        y_hop = _y_shift(model.theta_y)
        shift_even, shift_odd = (np.einsum('abcd,efgh->aebfcgdh', s, y_hop).reshape(6, 6, 6, 6)
                                 for s in x_shifts)
        interaction = _interaction(model.coupling, model.phase)
    else:
        coin = _x_coin(model.theta)
        flip = _x_flip()
        shift_even, shift_odd = x_shifts
        interaction = None

    phase = creation = None
    if model.defect is Defect.NONLOCAL:
        occupied = (np.arange(d) != 0).astype(float)
        diag = np.exp(1j * NONLOCAL_PHASE * np.outer(occupied, occupied)).reshape(-1)
        phase = np.diag(diag).reshape(d, d, d, d)
    elif model.defect is Defect.VACUUM_CREATION:
        c, s = np.cos(CREATION_ANGLE), np.sin(CREATION_ANGLE)
        creation = np.eye(d, dtype=complex)
        creation[0, 0], creation[1, 0] = c, s
        creation[0, 1], creation[1, 1] = -s, c

    return LocalGates(d=d, coin=coin, interaction=interaction, flip=flip,
                      shift_even=shift_even, shift_odd=shift_odd, phase=phase, creation=creation)


def gate_unitarity_residual(gates: LocalGates) -> float:
    """max |G†G − I| over every local gate"""
    d = gates.d
    worst = 0.0
    matrices = [g for _, g in gates.single_site()]
    matrices.extend(pair.reshape(d * d, d * d) for _, pair in gates.pairs())
    for g in matrices:
        worst = max(worst, float(np.max(np.abs(g.conj().T @ g - np.eye(len(g))))))
    return worst


# Schedules

@dataclass(frozen=True)
class Cell:
    """One gate application"""
    kind: str
    sites: Tuple[int, ...]
    row: int


@dataclass
class GateSchedule:
    """Ordered cells covering the causal volume between two ordered cuts"""
    lower: LatticeSurface
    upper: LatticeSurface
    cells: List[Cell] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.cells)

    def schedule_graph(self) -> nx.DiGraph:
        """Wire-order dependencies: consecutive cells on a common site"""
        graph = nx.DiGraph()
        graph.add_nodes_from(range(len(self.cells)))
        last_on_site: Dict[int, int] = {}
        for index, cell in enumerate(self.cells):
            for site in cell.sites:
                if site in last_on_site:
                    graph.add_edge(last_on_site[site], index)
                last_on_site[site] = index
        return graph

    def topological_order(self, reverse_sites: bool = False) -> List[int]:
        graph = self.schedule_graph()
        if not reverse_sites:
            return list(nx.lexicographical_topological_sort(graph))
        return list(nx.lexicographical_topological_sort(
            graph, key=lambda i: (-max(self.cells[i].sites), i)))

    def commutation_residual(self, gates: LocalGates) -> float:
        """Largest commutator norm over cell pairs unrelated in the dependency DAG"""
        graph = self.schedule_graph()
        closure = nx.transitive_closure_dag(graph)
        worst = 0.0
        for i in range(len(self.cells)):
            for j in range(i + 1, len(self.cells)):
                if closure.has_edge(i, j) or closure.has_edge(j, i):
                    continue
                shared = set(self.cells[i].sites) & set(self.cells[j].sites)
                if shared:
                    worst = max(worst, _cell_commutator(self.cells[i], self.cells[j], gates))
        return worst


def build_schedule(lower: LatticeSurface, upper: LatticeSurface, model: GateModel) -> GateSchedule:
    """Cells between two cuts with ``lower`` nowhere above ``upper``"""
    if not lower.is_below(upper):
        raise SurfaceError("schedule needs the first surface nowhere above the second")
    lower.require_brickwork_cut()
    upper.require_brickwork_cut()
    n = lower.n_sites
    schedule = GateSchedule(lower, upper)
    even_singles = ['coin'] + (['interaction'] if model.interacting else [])
    if model.defect is Defect.VACUUM_CREATION:
        even_singles.append('creation')

    for row in range(lower.min_layer, upper.max_layer):
        advancing = [x for x in range(n) if lower.layers[x] <= row < upper.layers[x]]
        if not advancing:
            continue
        moving = set(advancing)
        singles = even_singles if row % 2 == 0 else ['flip']
        for x in advancing:
            for kind in singles:
                schedule.cells.append(Cell(kind, (x,), row))
        if model.defect is Defect.NONLOCAL:
            for x in advancing:
                if x + 1 < n:
                    schedule.cells.append(Cell('phase', (x, x + 1), row))
        for x in advancing:
            if x + 1 < n and couples(x, row):
                if x + 1 not in moving:
                    raise SurfaceError(f"pair gate ({x}, {x + 1}) at row {row} straddles the cut")
                schedule.cells.append(Cell('shift', (x, x + 1), row))
            elif x > 0 and couples(x - 1, row) and x - 1 not in moving:
                raise SurfaceError(f"pair gate ({x - 1}, {x}) at row {row} straddles the cut")
    return schedule


def _gate_of(cell: Cell, gates: LocalGates) -> np.ndarray:
    if cell.kind == 'shift':
        return gates.shift_even if cell.row % 2 == 0 else gates.shift_odd
    return {
        'coin': gates.coin,
        'interaction': gates.interaction,
        'creation': gates.creation,
        'flip': gates.flip,
        'phase': gates.phase,
    }[cell.kind]


def _cell_commutator(a: Cell, b: Cell, gates: LocalGates) -> float:
    d = gates.d
    support = sorted(set(a.sites) | set(b.sites))
    dim = d ** len(support)
    identity = np.eye(dim, dtype=complex)
    ops = []
    for cell in (a, b):
        tensor = identity.reshape((d,) * len(support) + (dim,), order='F')
        tensor = _apply_gate(tensor, _gate_of(cell, gates), [support.index(s) for s in cell.sites])
        ops.append(tensor.reshape(dim, dim, order='F'))
    return float(np.max(np.abs(ops[0] @ ops[1] - ops[1] @ ops[0])))


def _adjoint(gate: np.ndarray) -> np.ndarray:
    if gate.ndim == 2:
        return gate.conj().T
    return np.conj(gate.transpose(2, 3, 0, 1))


def _apply_gate(tensor: np.ndarray, gate: np.ndarray, axes: List[int]) -> np.ndarray:
    if len(axes) == 1:
        out = np.tensordot(gate, tensor, axes=([1], [axes[0]]))
        return np.moveaxis(out, 0, axes[0])
    out = np.tensordot(gate, tensor, axes=([2, 3], axes))
    return np.moveaxis(out, [0, 1], axes)


def _run_schedule(tensor: np.ndarray, schedule: GateSchedule, gates: LocalGates, n: int,
                  density: bool, adjoint: bool, order: Optional[Sequence[int]] = None) -> np.ndarray:
    order = list(order) if order is not None else list(range(len(schedule.cells)))
    if adjoint:
        order = order[::-1]
    for index in order:
        cell = schedule.cells[index]
        gate = _gate_of(cell, gates)
        if adjoint:
            gate = _adjoint(gate)
        axes = list(cell.sites)
        tensor = _apply_gate(tensor, gate, axes)
        if density:
            tensor = _apply_gate(tensor, np.conj(gate), [n + a for a in axes])
    return tensor


def _evolve_tensor(tensor: np.ndarray, source: LatticeSurface, target: LatticeSurface,
                   model: GateModel, density: bool) -> np.ndarray:
    source.require_brickwork_cut()
    target.require_brickwork_cut()
    if source.n_sites != target.n_sites:
        raise SurfaceError(
            f"surfaces cover different lattices ({source.n_sites} vs {target.n_sites} sites)"
        )
    if source == target:
        return tensor
    gates = local_gates(model)
    n = source.n_sites
    # U_Σ^Σ' = U_{Σ∧Σ'}^{Σ'} (U_{Σ∧Σ'}^{Σ})†
    meet = source.pointwise_min(target)
    if meet != source:
        tensor = _run_schedule(tensor, build_schedule(meet, source, model), gates, n, density, adjoint=True)
    if meet != target:
        tensor = _run_schedule(tensor, build_schedule(meet, target, model), gates, n, density, adjoint=False)
    return tensor


def _require_full(state: StateLike) -> LatticeSurface:
    surface = state.region.surface
    if state.region.sites != surface.all_sites:
        raise ValueError("evolution needs a state on the whole surface")
    return surface


def evolve(state: StateLike, target: LatticeSurface, model: GateModel) -> StateLike:
    """U_Σ^Σ' ψ for states, U ρ U† for density operators"""
    source = _require_full(state)
    d, n = state.factor.dim, source.n_sites
    region = Region.full(target)
    if isinstance(state, DensityOp):
        tensor = state.matrix.reshape((d,) * (2 * n), order='F')
        tensor = _evolve_tensor(tensor, source, target, model, density=True)
        return DensityOp(region, state.factor, tensor.reshape((d ** n, d ** n), order='F'))
    tensor = state.amplitudes.reshape((d,) * n, order='F')
    tensor = _evolve_tensor(tensor, source, target, model, density=False)
    return QuantumState(region, state.factor, tensor.reshape(-1, order='F'))


def evolve_columns(vectors: np.ndarray, source: LatticeSurface, target: LatticeSurface,
                   model: GateModel) -> np.ndarray:
    """Evolve every column of a (d^L, batch) array"""
    d, n = model.d, source.n_sites
    tensor = vectors.reshape((d,) * n + (vectors.shape[1],), order='F')
    tensor = _evolve_tensor(tensor, source, target, model, density=False)
    return tensor.reshape(vectors.shape, order='F')


def evolve_in_order(psi: QuantumState, target: LatticeSurface, model: GateModel,
                    reverse_sites: bool = False) -> QuantumState:
    """Forward evolution applying the schedule in a chosen topological order"""
    source = _require_full(psi)
    schedule = build_schedule(source, target, model)
    order = schedule.topological_order(reverse_sites=reverse_sites)
    d, n = psi.factor.dim, source.n_sites
    tensor = _run_schedule(psi.amplitudes.reshape((d,) * n, order='F'), schedule,
                           local_gates(model), n, density=False, adjoint=False, order=order)
    return QuantumState(Region.full(target), psi.factor, tensor.reshape(-1, order='F'))


def evolution_operator(source: LatticeSurface, target: LatticeSurface, model: GateModel) -> np.ndarray:
    """Dense U_Σ^Σ' in the little-endian occupation basis"""
    dim = model.d ** source.n_sites
    if dim > Config.MAX_DENSE_OPERATOR_DIM:
        raise CapacityError(
            f"dense operator dimension {dim} exceeds limit {Config.MAX_DENSE_OPERATOR_DIM}"
        )
    return evolve_columns(np.eye(dim, dtype=complex), source, target, model)


def reduced_factor(operator: np.ndarray, A_sites: Sequence[int], n_sites: int, d: int) -> Tuple[np.ndarray, float]:
    """Best factor V with operator ≈ I_A ⊗ V, and the Frobenius residual"""
    A_sites = list(A_sites)
    rest = [x for x in range(n_sites) if x not in A_sites]
    order = A_sites + rest
    tensor = operator.reshape((d,) * (2 * n_sites), order='F')
    tensor = np.transpose(tensor, order + [n_sites + x for x in order])
    dA, dR = d ** len(A_sites), d ** len(rest)
    blocks = tensor.reshape((dA, dR, dA, dR), order='F')
    factor = np.einsum('aiaj->ij', blocks) / dA
    rebuilt = np.einsum('ab,ij->aibj', np.eye(dA), factor)
    residual = float(np.linalg.norm(blocks - rebuilt))
    return factor, residual


# Reduced evolution

@dataclass(frozen=True, eq=False)
class ReducedEvolution:
    """W: H_source → H_target, columns in source basis order"""
    source: Region
    target: Region
    matrix: np.ndarray
    isometry_defect: float

    @property
    def adjoint(self) -> np.ndarray:
        return self.matrix.conj().T


def reduced_evolution_W(A: Region, source: LatticeSurface, target: LatticeSurface, model: GateModel,
                        target_region: Optional[Region] = None, check: bool = True) -> ReducedEvolution:
    """W ψ_A = ⟨∅(target^c)| U |ψ_A ⊗ ∅(A^c)⟩"""
    if target_region is None:
        target_region = grown_set(A.with_surface(source), target)
    else:
        target_region = Region(target, target_region.sites)
    d = model.d
    n = source.n_sites
    all_sites = list(range(n))
    columns = embedding_indices(A.site_list, all_sites, d)
    full_dim = d ** n
    inputs = np.zeros((full_dim, len(columns)), dtype=complex)
    inputs[columns, np.arange(len(columns))] = 1.0
    evolved = evolve_columns(inputs, source, target, model)
    rows = embedding_indices(target_region.site_list, all_sites, d)
    matrix = evolved[rows, :]
    defect = float(np.max(np.abs(matrix.conj().T @ matrix - np.eye(len(columns))))) if len(columns) else 0.0
    if check and defect > Config.FS_VIOLATION_TOL:
        raise FSViolationError(
            f"reduced evolution of sites {A.site_list} into {target_region.site_list} "
            f"is not an isometry (defect {defect:.3e})"
        )
    return ReducedEvolution(Region(source, A.sites), target_region, matrix, defect)


# Verifiers

@dataclass
class VerifierReport:
    """Outcome of one axiom check"""
    name: str
    passed: bool
    residual: float
    details: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'name': self.name,
            'passed': self.passed,
            'residual': self.residual,
            'details': self.details,
        }


def _shared_check(source: LatticeSurface, target: LatticeSurface, A: Region) -> None:
    for x in A.site_list:
        if source.layers[x] != target.layers[x]:
            raise SurfaceError(
                f"site {x} is not shared: layers {source.layers[x]} and {target.layers[x]}"
            )


def _alternative_pair(source: LatticeSurface, target: LatticeSurface,
                      A: Region) -> Optional[Tuple[LatticeSurface, LatticeSurface]]:
    """Another cut pair agreeing off A and sharing A at a different layer"""
    for delta in (2, -2, 4, -4):
        try:
            s = LatticeSurface(tuple(t + delta if A.contains_site(x) else t
                                     for x, t in enumerate(source.layers)))
            t = LatticeSurface(tuple(u + delta if A.contains_site(x) else u
                                     for x, u in enumerate(target.layers)))
        except SurfaceError:
            continue
        if s.is_brickwork_cut() and t.is_brickwork_cut():
            return s, t
    return None


def verify_IL(source: LatticeSurface, target: LatticeSurface, A: Region, model: GateModel) -> VerifierReport:
    """U_Σ^Σ' = I_A ⊗ U_{Σ∖A}^{Σ'∖A} on a shared region A"""
    _shared_check(source, target, A)
    d, n = model.d, source.n_sites
    if A.is_empty:
        return VerifierReport('interaction_locality', True, 0.0, {'shared': []})
    U = evolution_operator(source, target, model)
    V, residual = reduced_factor(U, A.site_list, n, d)
    details: Dict[str, Any] = {'shared': A.site_list, 'factorization_residual': residual}

    independence = None
    alternative = _alternative_pair(source, target, A)
    if alternative is not None and A.count < n:
        U_alt = evolution_operator(alternative[0], alternative[1], model)
        V_alt, _ = reduced_factor(U_alt, A.site_list, n, d)
        independence = float(np.linalg.norm(V - V_alt))
    details['independence_residual'] = independence

    worst = max(residual, independence or 0.0)
    passed = worst <= Config.FACTORIZATION_TOL
    if not passed:
        logger.warning(f"Interaction locality fails on shared sites {A.site_list}: residual {worst:.3e}")
    return VerifierReport('interaction_locality', passed, worst, details)


def verify_FS(A: Region, source: LatticeSurface, target: LatticeSurface, model: GateModel,
              trials: int = None, rng: Optional[np.random.Generator] = None,
              regions: Optional[Sequence[Region]] = None) -> VerifierReport:
    """States concentrated in A stay concentrated in Gr(A, Σ'); projector form on ``regions``"""
    trials = Config.DEFAULT_FS_TRIALS if trials is None else trials
    rng = rng if rng is not None else np.random.default_rng(0)
    factor = model.factor
    full = Region.full(source)
    grown = grown_set(A.with_surface(source), target)

    worst = 0.0
    for _ in range(trials):
        if A.is_empty:
            psi = vacuum_state(full, factor)
        else:
            psi = random_state(full, factor, rng, concentrated_in=A)
        worst = max(worst, concentration_residual(evolve(psi, target, model), grown))
    details: Dict[str, Any] = {'region': A.site_list, 'grown': grown.site_list,
                               'concentration_residual': worst}

    if regions:
        U = evolution_operator(source, target, model)
        inequality = min(fs_projector_inequality(U, R.with_surface(source), target, factor)
                         for R in regions)
        details['projector_min_eigenvalue'] = inequality
        operator_ok = inequality >= -Config.PSD_TOL
    else:
        operator_ok = True

    passed = worst <= Config.CONCENTRATION_TOL and operator_ok
    if not passed:
        logger.warning(f"Finite propagation speed fails from sites {A.site_list}: residual {worst:.3e}")
    return VerifierReport('finite_speed', passed, worst, details)


def _vacuum_projector_residual(vector: np.ndarray) -> float:
    vacuum = np.zeros_like(vector)
    vacuum[0] = 1.0
    return float(np.linalg.norm(np.outer(vector, vector.conj()) - np.outer(vacuum, vacuum)))


def verify_NCFV(source: LatticeSurface, target: LatticeSurface, model: GateModel) -> VerifierReport:
    """‖U P_vac U† − P_vac‖"""
    vac = vacuum_state(Region.full(source), model.factor)
    residual = _vacuum_projector_residual(evolve(vac, target, model).amplitudes)
    passed = residual <= Config.FACTORIZATION_TOL
    if not passed:
        logger.warning(f"Vacuum not invariant: residual {residual:.3e}")
    return VerifierReport('vacuum_stability', passed, residual)


def verify_NCFV_local(source: LatticeSurface, target: LatticeSurface, A: Region,
                      model: GateModel) -> VerifierReport:
    """Vacuum of Σ∖A maps to the vacuum of Σ'∖A under the reduced factor"""
    _shared_check(source, target, A)
    d, n = model.d, source.n_sites
    U = evolution_operator(source, target, model)
    V, _ = reduced_factor(U, A.site_list, n, d)
    rest_dim = V.shape[0]
    vacuum = np.zeros(rest_dim, dtype=complex)
    vacuum[0] = 1.0
    residual = _vacuum_projector_residual(V @ vacuum) if rest_dim else 0.0
    passed = residual <= Config.FACTORIZATION_TOL
    if not passed:
        logger.warning(f"Local vacuum stability fails off shared sites {A.site_list}: residual {residual:.3e}")
    return VerifierReport('local_vacuum_stability', passed, residual, {'shared': A.site_list})


def shared_region(source: LatticeSurface, target: LatticeSurface) -> Region:
    """Sites where both surfaces pass at the same layer"""
    return Region.from_sites(source, [x for x in range(source.n_sites)
                                      if source.layers[x] == target.layers[x]])


def schedule_order_residual(psi: QuantumState, target: LatticeSurface, model: GateModel) -> float:
    """Distance between two topological orders of the same schedule"""
    first = evolve_in_order(psi, target, model)
    second = evolve_in_order(psi, target, model, reverse_sites=True)
    return float(np.linalg.norm(first.amplitudes - second.amplitudes))


def all_regions(source: LatticeSurface) -> List[Region]:
    """Every subset of the surface, for exhaustive projector checks"""
    n = source.n_sites
    return [Region(source, mask) for mask in range(1 << n)]
