"""
Sequential Detection Protocol
Detection rounds on the flat surfaces Υ_k, the outcome distribution they
produce, and the closed-form, curved Born and bracketing quantities that
the distribution is compared against.

A run evolves the initial state to Υ_{κ-1}, discards what already crossed Σ,
and then alternates evolution to Υ_k with the detection map D_k, which
projects on the round outcome, traces out the detector strip B_k ∪ R_k and
puts the vacuum back in its place.

Features:
- DetectionRun with cached decomposition, Σ-state and reduced evolutions
- Exact depth-first branch enumeration with pruning and optional threads
- Closed-form P(s), curved Born values and the shrunk/grown brackets
- Auxiliary ρ_{A_k} recursion with its four consistency properties
- Operator-level checks of the bracket argument
- Convergence sweep over the round length m
"""

import logging
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from config import Config
from config_events import (
    CapacityError, Event, OutcomePattern, OutcomeSeq, _require_matching, all_configurations,
    all_outcomes, all_patterns, compatible_outcomes, event_MB, event_MC_family,
    event_MC_limits, event_MP, event_MP_bracket, event_NB, event_empty, event_exists,
)
from fock_hilbert import (
    DensityOp, QuantumState, StateLike, apply_site_map, embed_vacuum, expectation,
    partial_trace, pvm_projector,
)
from lattice_geometry import (
    LatticeSurface, Partition, PatchGrowth, Region, SliceDecomposition, patch_shrink_grow,
    slice_decompose,
)
from operator_checks import loewner_gap, min_eigenvalue
from qca_dynamics import (
    GateModel, ReducedEvolution, VerifierReport, evolution_operator, evolve, reduced_evolution_W,
)


logger = logging.getLogger(__name__)


# Runs

@dataclass
class DetectionRun:
    """One detection experiment: dynamics, initial state, Σ, patches and round length"""
    model: GateModel
    initial: StateLike
    sigma: LatticeSurface
    partition: Partition
    m: int
    replace_vacuum: bool = True
    check_isometry: bool = True
    _w_cache: Dict[Tuple, ReducedEvolution] = field(default_factory=dict, init=False, repr=False)
    _block_cache: Dict[Tuple, np.ndarray] = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        surface = self.initial.region.surface
        if not surface.is_flat or surface.min_layer != 0:
            raise ValueError(f"initial state must live on flat layer 0, got layers {list(surface.layers)}")
        if self.initial.region.sites != surface.all_sites:
            raise ValueError("initial state must cover every site")
        if surface.n_sites != self.sigma.n_sites:
            raise ValueError(
                f"initial state has {surface.n_sites} sites but Σ has {self.sigma.n_sites}"
            )
        if self.initial.factor != self.model.factor:
            raise ValueError(
                f"initial state has local dimension {self.initial.factor.dim}, "
                f"model needs {self.model.d}"
            )
        self.sigma.require_brickwork_cut()
        self.sigma.require_non_negative()
        bits = self.decomposition.r * self.decomposition.n_protocol_rounds
        if bits > Config.MAX_OUTCOME_BITS:
            raise CapacityError(
                f"outcome record needs {bits} bits (r={self.decomposition.r}, "
                f"rounds={self.decomposition.n_protocol_rounds}), limit {Config.MAX_OUTCOME_BITS}"
            )

    @cached_property
    def decomposition(self) -> SliceDecomposition:
        return slice_decompose(self.sigma, self.partition, self.m)

    @cached_property
    def growth(self) -> PatchGrowth:
        return patch_shrink_grow(self.partition, self.sigma, self.m)

    @cached_property
    def sigma_state(self) -> StateLike:
        """ψ_Σ, or ρ_Σ for a mixed initial state"""
        return evolve(self.initial, self.sigma, self.model)

    @property
    def sigma_region(self) -> Region:
        return Region.full(self.sigma)

    def with_m(self, m: int) -> 'DetectionRun':
        other = replace(self, m=m)
        if 'sigma_state' in self.__dict__:
            other.__dict__['sigma_state'] = self.sigma_state
        return other

    def to_dict(self) -> Dict[str, Any]:
        return {
            'model': self.model.to_dict(),
            'sigma': list(self.sigma.layers),
            'partition': self.partition.to_dict()['patches'],
            'm': self.m,
            'replace_vacuum': self.replace_vacuum,
        }


def _require_density_capacity(run: DetectionRun) -> None:
    dim = run.model.d ** run.sigma.n_sites
    if dim > Config.MAX_DENSE_OPERATOR_DIM:
        raise CapacityError(
            f"sequential run needs {dim}x{dim} density operators, limit {Config.MAX_DENSE_OPERATOR_DIM}"
        )


def _as_density(state: StateLike) -> DensityOp:
    return state.to_density() if isinstance(state, QuantumState) else state


def _row_bits(row_index: int, r: int) -> Tuple[int, ...]:
    return tuple((row_index >> j) & 1 for j in range(r))


# Detection maps

def first_surface_prepare(initial: StateLike, dec: SliceDecomposition, model: GateModel,
                          replace_vacuum: bool = True) -> DensityOp:
    """Evolve to Υ_{κ-1}, drop what crossed Σ already and restore the vacuum there"""
    k = dec.kappa - 1
    rho = evolve(_as_density(initial), dec.upsilon(k), model)
    if not replace_vacuum:
        return rho
    strip = dec.round(k).detector_strip
    return embed_vacuum(partial_trace(rho, strip), strip)


def detection_map_Dk(rho: DensityOp, s_row: Sequence[int], dec: SliceDecomposition, k: int,
                     replace_vacuum: bool = True) -> Tuple[Optional[DensityOp], float]:
    """D_k(ρ) and 𝓝_k = tr(P(M_B(s_k)) ρ); the state is None for a pruned branch"""
    projector = pvm_projector(event_MB(s_row, dec, k), rho.factor)
    normalization = projector.expectation(rho)
    if normalization <= Config.PRUNE_TOL:
        return None, normalization
    collapsed = projector.sandwich(rho)
    if replace_vacuum:
        strip = dec.round(k).detector_strip
        collapsed = embed_vacuum(partial_trace(collapsed, strip), strip)
    return DensityOp(collapsed.region, collapsed.factor, collapsed.matrix / normalization), normalization


# Sequential enumeration

@dataclass
class SequentialResult:
    """Per-record probabilities P(s) in record order and per-pattern sums"""
    kappa: int
    K: int
    r: int
    m: int
    probabilities: Dict[int, float] = field(default_factory=dict)
    pattern_totals: Dict[str, float] = field(default_factory=dict)
    explored: int = 0
    pruned: int = 0

    @property
    def n_rounds(self) -> int:
        return self.K - self.kappa + 1

    def probability(self, s: OutcomeSeq) -> float:
        return self.probabilities.get(s.index, 0.0)

    def outcome(self, index: int) -> OutcomeSeq:
        return OutcomeSeq.from_index(index, self.kappa, self.n_rounds, self.r)

    def total(self) -> float:
        return float(sum(self.probabilities.values()))

    def to_dict(self) -> Dict[str, Any]:
        return {
            'kappa': self.kappa,
            'K': self.K,
            'r': self.r,
            'm': self.m,
            'explored': self.explored,
            'pruned': self.pruned,
            'total': self.total(),
            'probabilities': {self.outcome(i).to_key(): p for i, p in self.probabilities.items()},
            'patterns': dict(self.pattern_totals),
        }


@dataclass
class _BranchTally:
    probabilities: Dict[int, float] = field(default_factory=dict)
    patterns: Dict[int, float] = field(default_factory=dict)
    explored: int = 0
    pruned: int = 0


def _descend(run: DetectionRun, rho: DensityOp, k: int, probability: float, index: int,
             pattern: int, tally: _BranchTally) -> None:
    dec = run.decomposition
    if k > dec.K:
        tally.probabilities[index] = probability
        tally.patterns[pattern] = tally.patterns.get(pattern, 0.0) + probability
        return
    evolved = evolve(rho, dec.upsilon(k), run.model)
    shift = (k - dec.kappa) * dec.r
    for row_index in range(1 << dec.r):
        after, normalization = detection_map_Dk(evolved, _row_bits(row_index, dec.r), dec, k,
                                                run.replace_vacuum)
        tally.explored += 1
        if after is None:
            tally.pruned += 1
            continue
        _descend(run, after, k + 1, probability * normalization,
                 index | (row_index << shift), pattern | row_index, tally)


def _top_branch(run: DetectionRun, evolved: DensityOp, row_index: int) -> _BranchTally:
    dec = run.decomposition
    tally = _BranchTally(explored=1)
    after, normalization = detection_map_Dk(evolved, _row_bits(row_index, dec.r), dec, dec.kappa,
                                            run.replace_vacuum)
    if after is None:
        tally.pruned = 1
        return tally
    _descend(run, after, dec.kappa + 1, normalization, row_index, row_index, tally)
    logger.debug(f"Branch {row_index} of round {dec.kappa}: {len(tally.probabilities)} records")
    return tally


def run_sequential(run: DetectionRun, workers: int = None) -> SequentialResult:
    """P(s) = Π_k 𝓝_k for every record s, by depth-first enumeration"""
    workers = Config.DEFAULT_WORKERS if workers is None else workers
    if workers < 1:
        raise ValueError(f"workers must be at least 1, got {workers}")
    _require_density_capacity(run)
    dec = run.decomposition
    logger.info(
        f"Sequential run started: m={run.m}, rounds {dec.kappa}..{dec.K}, r={dec.r}, "
        f"{run.model.d ** dec.n_sites}-dimensional states"
    )

    prepared = first_surface_prepare(run.initial, dec, run.model, run.replace_vacuum)
    evolved = evolve(prepared, dec.upsilon(dec.kappa), run.model)
    branches = range(1 << dec.r)
    tallies: Dict[int, _BranchTally] = {}
    if workers == 1:
        for row_index in branches:
            tallies[row_index] = _top_branch(run, evolved, row_index)
    else:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            futures = {executor.submit(_top_branch, run, evolved, row_index): row_index
                       for row_index in branches}
            for future in as_completed(futures):
                tallies[futures[future]] = future.result()

    result = SequentialResult(kappa=dec.kappa, K=dec.K, r=dec.r, m=run.m)
    merged: Dict[int, float] = {}
    patterns = {index: 0.0 for index in range(1 << dec.r)}
    for row_index in branches:
        tally = tallies[row_index]
        merged.update(tally.probabilities)
        for pattern, value in sorted(tally.patterns.items()):
            patterns[pattern] += value
        result.explored += tally.explored
        result.pruned += tally.pruned
    result.probabilities = dict(sorted(merged.items()))
    result.pattern_totals = {OutcomePattern(_row_bits(p, dec.r)).to_key(): v for p, v in patterns.items()}
    logger.info(
        f"Sequential run finished: {len(result.probabilities)} records, "
        f"{result.explored} branches, {result.pruned} pruned"
    )
    return result


def _pattern_of(index: int, n_rounds: int, r: int) -> int:
    row_mask = (1 << r) - 1
    pattern = 0
    for i in range(n_rounds):
        pattern |= (index >> (i * r)) & row_mask
    return pattern


def coarse_grain(P_s: Union[SequentialResult, Mapping[int, float]],
                 dec: SliceDecomposition) -> Dict[str, float]:
    """P_det(L) = Σ_{s compatible with L} P(s), keyed by pattern"""
    values = P_s.probabilities if isinstance(P_s, SequentialResult) else P_s
    totals = {index: 0.0 for index in range(1 << dec.r)}
    for index in sorted(values):
        totals[_pattern_of(index, dec.n_protocol_rounds, dec.r)] += values[index]
    return {OutcomePattern(_row_bits(p, dec.r)).to_key(): v for p, v in totals.items()}


# Closed form

def _reduced_W(run: DetectionRun, key: Tuple, A: Region, source: LatticeSurface,
               target: LatticeSurface, target_region: Region) -> ReducedEvolution:
    if key not in run._w_cache:
        run._w_cache[key] = reduced_evolution_W(A, source, target, run.model,
                                                target_region=target_region,
                                                check=run.check_isometry)
    return run._w_cache[key]


def detector_transfer(run: DetectionRun, k: int) -> ReducedEvolution:
    """W_{C_k}^{B_k}, from C_k on Ξ_{k-1,k} to B_k on Υ_k"""
    dec = run.decomposition
    rnd = dec.round(k)
    xi = dec.xi_surface(k)
    return _reduced_W(run, ('C', k), rnd.C.with_surface(xi), xi, rnd.upsilon, rnd.B)


def slab_transfer(run: DetectionRun, k: int) -> ReducedEvolution:
    """U_{A_{k-1}}^{A_k ∪ C_k}, from A_{k-1} on Υ_{k-1} to A_k ∪ C_k on Ξ_{k-1,k}"""
    dec = run.decomposition
    before, now = dec.round(k - 1), dec.round(k)
    xi = dec.xi_surface(k)
    target = Region(xi, now.A.sites | now.C.sites)
    return _reduced_W(run, ('A', k), before.A, before.upsilon, xi, target)


def round_transfer(run: DetectionRun, k: int) -> ReducedEvolution:
    """W_{A_k}^{A_{k+1} ∪ B_{k+1}}, from A_k on Υ_k to Υ_{k+1}"""
    dec = run.decomposition
    now, after = dec.round(k), dec.round(k + 1)
    target = Region(after.upsilon, after.A.sites | after.B.sites)
    return _reduced_W(run, ('AB', k), now.A, now.upsilon, after.upsilon, target)


def detector_block(run: DetectionRun, k: int, s_row: Sequence[int]) -> np.ndarray:
    """P̃_{C_k} = W† P_{B_k}(N_B(s_k)) W on H_{C_k}; a 1×1 block when C_k is empty"""
    key = (k, tuple(s_row))
    if key in run._block_cache:
        return run._block_cache[key]
    dec = run.decomposition
    rnd = dec.round(k)
    if rnd.C.is_empty:
        block = np.eye(1, dtype=complex) * (0.0 if any(s_row) else 1.0)
    else:
        W = detector_transfer(run, k)
        mask = pvm_projector(event_NB(s_row, dec, k), run.model.factor).mask.astype(float)
        block = (W.adjoint * mask[None, :]) @ W.matrix
    run._block_cache[key] = block
    return block


def _apply_record(run: DetectionRun, s: OutcomeSeq, vectors: np.ndarray) -> np.ndarray:
    """⊗_k P̃_{C_k} ⊗ I applied to the columns of vectors over H_Σ"""
    dec = run.decomposition
    sites = list(range(dec.n_sites))
    for k in dec.protocol_rounds:
        block = detector_block(run, k, s.row(k))
        C_sites = dec.round(k).C.site_list
        if not C_sites:
            vectors = vectors * block[0, 0]
            continue
        vectors, _ = apply_site_map(vectors, sites, block, C_sites, C_sites, run.model.d)
    return vectors


def closed_expression(run: DetectionRun, s: OutcomeSeq) -> float:
    """⟨ψ_Σ|P(s)|ψ_Σ⟩, or tr(P(s) ρ_Σ)"""
    _require_matching(s, run.decomposition)
    state = run.sigma_state
    if isinstance(state, QuantumState):
        image = _apply_record(run, s, state.amplitudes)
        return float(np.vdot(state.amplitudes, image).real)
    return float(np.trace(_apply_record(run, s, state.matrix)).real)


def closed_distribution(run: DetectionRun) -> Dict[int, float]:
    """Closed-form P(s) for every record, keyed by record index"""
    return {s.index: closed_expression(run, s) for s in all_outcomes(run.decomposition)}


def closed_operator(run: DetectionRun, s: OutcomeSeq) -> np.ndarray:
    """Dense P(s) on H_Σ"""
    _require_matching(s, run.decomposition)
    dim = run.model.d ** run.sigma.n_sites
    if dim > Config.MAX_DENSE_OPERATOR_DIM:
        raise CapacityError(f"dense operator dimension {dim} exceeds limit {Config.MAX_DENSE_OPERATOR_DIM}")
    return _apply_record(run, s, np.eye(dim, dtype=complex))


# Curved Born rule and brackets

def curved_born_event(run: DetectionRun, S: Event) -> float:
    """⟨ψ_Σ|P_Σ(S)|ψ_Σ⟩ for an event of Γ(Σ)"""
    return expectation(run.sigma_state, pvm_projector(S, run.model.factor, run.sigma_region))


def curved_born(run: DetectionRun, L: OutcomePattern) -> float:
    return curved_born_event(run, event_MP(L, run.partition, run.sigma_region))


def curved_born_distribution(run: DetectionRun) -> Dict[str, float]:
    return {L.to_key(): curved_born(run, L) for L in all_patterns(run.partition.r)}


def bounds(run: DetectionRun, L: OutcomePattern) -> Tuple[float, float]:
    """(⟨P(M̌_C^ε(L))⟩, ⟨P(M̂_C^ε(L))⟩)"""
    _, lower, upper = event_MC_limits(L, run.decomposition)
    return curved_born_event(run, lower), curved_born_event(run, upper)


def outer_bounds(run: DetectionRun, L: OutcomePattern) -> Tuple[float, float]:
    """(⟨P(M̌_P(L) ∩ ∅(∂P))⟩, ⟨P(M̂_P(L))⟩) from the shrunk and grown patches"""
    lower, upper = event_MP_bracket(L, run.growth)
    return curved_born_event(run, lower), curved_born_event(run, upper)


# Branch trails

@dataclass
class BranchStep:
    """States around one detection round of a single branch"""
    k: int
    rho_upsilon: DensityOp
    rho_after: Optional[DensityOp]
    normalization: float


@dataclass
class BranchTrail:
    record: OutcomeSeq
    prepared: DensityOp
    steps: List[BranchStep] = field(default_factory=list)

    @property
    def probability(self) -> float:
        return float(np.prod([step.normalization for step in self.steps])) if self.steps else 1.0

    @property
    def pruned(self) -> bool:
        return bool(self.steps) and self.steps[-1].rho_after is None

    def to_dict(self) -> Dict[str, Any]:
        return {
            'record': self.record.to_key(),
            'probability': self.probability,
            'pruned': self.pruned,
            'normalizations': [step.normalization for step in self.steps],
        }


def sequential_branch(run: DetectionRun, s: OutcomeSeq) -> BranchTrail:
    """Follow one record through the rounds, keeping ρ_{Υ_k} and ρ'_{Υ_k}"""
    dec = run.decomposition
    _require_matching(s, dec)
    _require_density_capacity(run)
    rho = first_surface_prepare(run.initial, dec, run.model, run.replace_vacuum)
    trail = BranchTrail(record=s, prepared=rho)
    for k in dec.protocol_rounds:
        evolved = evolve(rho, dec.upsilon(k), run.model)
        after, normalization = detection_map_Dk(evolved, s.row(k), dec, k, run.replace_vacuum)
        trail.steps.append(BranchStep(k, evolved, after, normalization))
        if after is None:
            break
        rho = after
    return trail


@dataclass
class AuxiliaryStep:
    """ρ_{A_k} and the property residuals measured at round k"""
    k: int
    rho_A: Optional[DensityOp]
    normalization: float
    residuals: Dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'k': self.k,
            'sites': self.rho_A.region.site_list if self.rho_A is not None else None,
            'normalization': self.normalization,
            'residuals': dict(self.residuals),
        }


@dataclass
class AuxiliaryTrail:
    record: OutcomeSeq
    steps: List[AuxiliaryStep] = field(default_factory=list)

    @property
    def worst(self) -> float:
        values = [v for step in self.steps for v in step.residuals.values()]
        return max(values) if values else 0.0

    @property
    def passed(self) -> bool:
        return self.worst <= Config.PROBABILITY_TOL

    def to_dict(self) -> Dict[str, Any]:
        return {
            'record': self.record.to_key(),
            'passed': self.passed,
            'worst_residual': self.worst,
            'steps': [step.to_dict() for step in self.steps],
        }


def _max_diff(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.max(np.abs(a - b))) if a.size else 0.0


def _vacuum_extended(rho_A: DensityOp, surface: LatticeSurface, extra: Region) -> DensityOp:
    return embed_vacuum(rho_A.with_region(Region(surface, rho_A.region.sites)),
                        Region(surface, extra.sites))


def _prefix_probability(result: SequentialResult, s: OutcomeSeq, rounds: int) -> float:
    mask = (1 << (rounds * result.r)) - 1
    wanted = s.index & mask
    return float(sum(p for i, p in sorted(result.probabilities.items()) if i & mask == wanted))


def auxiliary_rho_trail(run: DetectionRun, s: OutcomeSeq,
                        sequential: Optional[SequentialResult] = None) -> AuxiliaryTrail:
    """Auxiliary ρ_{A_k} along record s, checked against the sequential states

    Residuals per round: ``vacuum_product`` for ρ'_{Υ_k} = ρ_{A_k} ⊗ |∅⟩⟨∅|,
    ``propagation`` for ρ_{Υ_{k+1}} = W ρ_{A_k} W† ⊗ |∅⟩⟨∅|, ``normalization``
    for 𝓝_k = 𝓝_{A_k}, ``conditional`` for P(s_k | s_{<k}) = 𝓝_{A_k}.
    """
    dec = run.decomposition
    _require_matching(s, dec)
    if not run.replace_vacuum:
        raise ValueError("auxiliary ρ trail needs the vacuum replacement of the detection map")
    branch = sequential_branch(run, s)
    sequential = sequential if sequential is not None else run_sequential(run)
    factor = run.model.factor
    trail = AuxiliaryTrail(record=s)

    start = dec.round(dec.kappa - 1)
    rho0 = evolve(_as_density(run.initial), start.upsilon, run.model)
    rho_A = partial_trace(rho0, start.detector_strip)
    first = AuxiliaryStep(dec.kappa - 1, rho_A, 1.0)
    first.residuals['vacuum_product'] = _max_diff(
        branch.prepared.matrix, _vacuum_extended(rho_A, start.upsilon, start.detector_strip).matrix)
    trail.steps.append(first)

    previous_marginal = 1.0
    for offset, step in enumerate(branch.steps):
        k = step.k
        rnd = dec.round(k)
        residuals: Dict[str, float] = {}

        W = round_transfer(run, k - 1)
        propagated = DensityOp(W.target, factor, W.matrix @ rho_A.matrix @ W.adjoint)
        residuals['propagation'] = _max_diff(
            step.rho_upsilon.matrix, embed_vacuum(propagated, rnd.R).matrix)

        U = slab_transfer(run, k)
        moved = U.matrix @ rho_A.matrix @ U.adjoint
        sites = U.target.site_list
        if rnd.C.is_empty:
            weighted = moved * detector_block(run, k, s.row(k))[0, 0]
        else:
            weighted, _ = apply_site_map(moved, sites, detector_block(run, k, s.row(k)),
                                         rnd.C.site_list, rnd.C.site_list, run.model.d)
        traced = partial_trace(DensityOp(U.target, factor, weighted), Region(U.target.surface, rnd.C.sites))
        normalization = traced.trace()
        residuals['normalization'] = abs(step.normalization - normalization)

        marginal = _prefix_probability(sequential, s, offset + 1)
        if previous_marginal > Config.PRUNE_TOL:
            residuals['conditional'] = abs(marginal / previous_marginal - normalization)
        previous_marginal = marginal

        if normalization <= Config.PRUNE_TOL:
            trail.steps.append(AuxiliaryStep(k, None, normalization, residuals))
            logger.debug(f"Auxiliary trail of {s.to_key()} ends at round {k}: zero normalization")
            break
        rho_A = DensityOp(traced.region, factor, traced.matrix / normalization).with_region(rnd.A)
        if step.rho_after is not None:
            residuals['vacuum_product'] = _max_diff(
                step.rho_after.matrix, _vacuum_extended(rho_A, rnd.upsilon, rnd.detector_strip).matrix)
        trail.steps.append(AuxiliaryStep(k, rho_A, normalization, residuals))

    if not trail.passed:
        logger.warning(f"Auxiliary ρ properties fail on record {s.to_key()}: worst residual {trail.worst:.3e}")
    return trail


def w_composition_residual(run: DetectionRun, k: int) -> float:
    """‖W_{A_k}^{A_{k+1} ∪ B_{k+1}} − (I ⊗ W_{C_{k+1}}^{B_{k+1}}) U_{A_k}^{A_{k+1} ∪ C_{k+1}}‖_max"""
    dec = run.decomposition
    after = dec.round(k + 1)
    direct = round_transfer(run, k)
    U = slab_transfer(run, k + 1)
    if after.C.is_empty:
        return _max_diff(direct.matrix, U.matrix)
    W = detector_transfer(run, k + 1)
    composed, _ = apply_site_map(U.matrix, U.target.site_list, W.matrix,
                                 after.C.site_list, after.B.site_list, run.model.d)
    return _max_diff(direct.matrix, composed)


# Operator-level checks

def projector_inequalities(run: DetectionRun, k: int, index: int) -> VerifierReport:
    """P(∅(Ĉ ∪ D)) ≤ U P(∅(B)) U† ≤ P(∅(Č)) and P(∃(Č)) ≤ U P(∃(B)) U† ≤ P(∃(Ĉ ∪ D))

    ``index`` is the zero-based patch; U is U_{Υ_k}^Σ.
    """
    dec = run.decomposition
    rnd = dec.round(k)
    factor = run.model.factor
    B = rnd.B_patch[index]
    check, grown = rnd.C_check[index], rnd.C_hat[index].union(rnd.D[index])
    ups_full, sig_full = Region.full(rnd.upsilon), run.sigma_region

    U = evolution_operator(rnd.upsilon, run.sigma, run.model)

    def moved(event: Event) -> np.ndarray:
        mask = pvm_projector(event, factor).mask.astype(float)
        return (U * mask[None, :]) @ U.conj().T

    def onto(event: Event) -> np.ndarray:
        return np.diag(pvm_projector(event, factor).mask.astype(complex))

    empty_B, exists_B = moved(event_empty(B, ups_full)), moved(event_exists(B, ups_full))
    gaps = {
        'empty_lower': loewner_gap(onto(event_empty(grown, sig_full)), empty_B),
        'empty_upper': loewner_gap(empty_B, onto(event_empty(check, sig_full))),
        'exists_lower': loewner_gap(onto(event_exists(check, sig_full)), exists_B),
        'exists_upper': loewner_gap(exists_B, onto(event_exists(grown, sig_full))),
    }
    worst = min(gaps.values())
    passed = worst >= -Config.PSD_TOL
    if not passed:
        logger.warning(f"Projector inequalities fail at round {k}, patch {index + 1}: gap {worst:.3e}")
    return VerifierReport('projector_inequalities', passed, max(0.0, -worst),
                          {'k': k, 'patch': index + 1, **gaps})


def lower_bound_partition(run: DetectionRun, L: OutcomePattern) -> float:
    """max over Γ(Σ) of |Σ_{s:L} 1[M̌_C(s)] − 1[M̌_C^ε(L)]|"""
    dec = run.decomposition
    configs = all_configurations(run.sigma_region)
    counts = np.zeros(len(configs), dtype=np.int64)
    for s in compatible_outcomes(L, dec):
        _, lower, _ = event_MC_family(s, dec)
        counts += lower.contains(configs)
    _, limit, _ = event_MC_limits(L, dec)
    return float(np.max(np.abs(counts - limit.contains(configs).astype(np.int64))))


def upper_bound_operator(run: DetectionRun, L: OutcomePattern) -> float:
    """Smallest eigenvalue of P(M̂_C^ε(L)) − Σ_{s:L} P(s)"""
    total = None
    for s in compatible_outcomes(L, run.decomposition):
        operator = closed_operator(run, s)
        total = operator if total is None else total + operator
    _, _, upper = event_MC_limits(L, run.decomposition)
    ceiling = np.diag(pvm_projector(upper, run.model.factor, run.sigma_region).mask.astype(complex))
    return min_eigenvalue(ceiling - total)


def double_detection_discrepancy(run: DetectionRun, workers: int = None) -> Dict[str, Any]:
    """Exploratory: max_L |ΔP_det(L)| between vacuum replacement and plain collapse"""
    dec = run.decomposition
    with_reset = coarse_grain(run_sequential(replace(run, replace_vacuum=True), workers), dec)
    without_reset = coarse_grain(run_sequential(replace(run, replace_vacuum=False), workers), dec)
    difference = max(abs(with_reset[key] - without_reset[key]) for key in with_reset)
    if difference > Config.PROBABILITY_TOL:
        logger.warning(f"Exploratory: skipping the vacuum replacement changes P_det by {difference:.3e}")
    return {
        'exploratory': True,
        'max_abs_difference': difference,
        'with_replacement': with_reset,
        'without_replacement': without_reset,
    }


# Convergence sweep

@dataclass
class SweepRow:
    m: int
    L: str
    lower: float
    sequential: float
    upper: float
    born: float
    outer_lower: float
    outer_upper: float

    @property
    def width(self) -> float:
        return self.upper - self.lower

    @property
    def outer_width(self) -> float:
        return self.outer_upper - self.outer_lower

    def to_dict(self) -> Dict[str, Any]:
        return {
            'm': self.m,
            'L': self.L,
            'lower': self.lower,
            'sequential': self.sequential,
            'upper': self.upper,
            'born': self.born,
            'outer_lower': self.outer_lower,
            'outer_upper': self.outer_upper,
        }


@dataclass
class SweepResult:
    rows: List[SweepRow] = field(default_factory=list)
    violations: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations

    def widths(self, outer: bool = True) -> Dict[int, float]:
        """Largest bracket width per m, from the outer bounds or the per-round bounds"""
        result: Dict[int, float] = {}
        for row in self.rows:
            result[row.m] = max(result.get(row.m, 0.0), row.outer_width if outer else row.width)
        return result

    def to_dict(self) -> Dict[str, Any]:
        return {
            'passed': self.passed,
            'violations': list(self.violations),
            'widths': {str(m): w for m, w in self.widths().items()},
            'round_widths': {str(m): w for m, w in self.widths(outer=False).items()},
            'rows': [row.to_dict() for row in self.rows],
        }


def _chain_violations(row: SweepRow) -> List[str]:
    chain = [('outer_lower', row.outer_lower), ('lower', row.lower), ('sequential', row.sequential),
             ('upper', row.upper), ('outer_upper', row.outer_upper)]
    problems = []
    for (a, x), (b, y) in zip(chain, chain[1:]):
        if x > y + Config.PROBABILITY_TOL:
            problems.append(f"m={row.m}, L={row.L}: {a} {x:.12g} exceeds {b} {y:.12g}")
    return problems


def convergence_sweep(run: DetectionRun, m_values: Sequence[int], workers: int = None) -> SweepResult:
    """
    Brackets for each m, coarsest first, with chain, nesting and pinching checks

    Nesting across m is asserted on the outer bounds only. The per-round bounds of two
    values of m come from different round decompositions and need not nest; they are
    reported through widths(outer=False) and must pinch the curved Born value at m=1.
    """
    m_values = sorted({int(m) for m in m_values}, reverse=True)
    if not m_values or m_values[-1] < 1:
        raise ValueError(f"m values must be positive integers, got {m_values}")
    result = SweepResult()
    patterns = all_patterns(run.partition.r)
    born = {L.to_key(): curved_born(run, L) for L in patterns}
    previous: Dict[str, SweepRow] = {}

    for m in m_values:
        current = run.with_m(m)
        detected = coarse_grain(run_sequential(current, workers), current.decomposition)
        for L in patterns:
            key = L.to_key()
            lower, upper = bounds(current, L)
            outer_lower, outer_upper = outer_bounds(current, L)
            row = SweepRow(m, key, lower, detected[key], upper, born[key], outer_lower, outer_upper)
            result.rows.append(row)
            result.violations.extend(_chain_violations(row))
            before = previous.get(key)
            if before is not None:
                if row.outer_lower < before.outer_lower - Config.PROBABILITY_TOL:
                    result.violations.append(f"L={key}: outer lower bound drops from m={before.m} to m={m}")
                if row.outer_upper > before.outer_upper + Config.PROBABILITY_TOL:
                    result.violations.append(f"L={key}: outer upper bound grows from m={before.m} to m={m}")
            if m == 1 and max(abs(lower - row.born), abs(upper - row.born)) > 1e-9:
                result.violations.append(f"L={key}: bracket does not pinch the curved Born value at m=1")
            if run.sigma.is_flat and run.sigma.min_layer % m == 0 \
                    and abs(row.sequential - row.born) > Config.PROBABILITY_TOL:
                result.violations.append(f"L={key}: flat Σ detection differs from the Born value at m={m}")
            previous[key] = row
        logger.debug(f"Sweep m={m}: widest outer bracket {result.widths()[m]:.3e}")

    if result.violations:
        logger.warning(f"Convergence sweep found {len(result.violations)} violations")
    return result
