#!/usr/bin/env python3
"""
Verification Suite
Runs the axiom checks and the detection-theorem comparisons for one
experiment and collects every residual into a report

Features:
- axioms: interaction locality, finite propagation speed, vacuum stability
- theorem: sequential vs closed form, normalisation, brackets, reduced
  operators, auxiliary ρ properties, operator inequalities, reconstruction
  and the convergence sweep
- all: both of the above
"""

import itertools
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Iterator, List, Tuple

import numpy as np

from config import Config
from config_events import (
    OutcomePattern, all_patterns, reconstruct_distribution, vacuum_probabilities_from_born,
)
from detection_protocol import (
    DetectionRun, auxiliary_rho_trail, bounds, closed_distribution, coarse_grain,
    convergence_sweep, curved_born_distribution, detector_transfer, double_detection_discrepancy,
    lower_bound_partition, projector_inequalities, round_transfer, run_sequential, slab_transfer,
    upper_bound_operator, w_composition_residual,
)
from experiment_config import ExperimentConfig
from fock_hilbert import born_distribution
from lattice_geometry import LatticeSurface, Region, enumerate_cuts, random_cut
from operator_checks import sandwich_gaps, sandwich_triple
from qca_dynamics import (
    GateModel, VerifierReport, all_regions, shared_region, verify_FS, verify_IL, verify_NCFV,
    verify_NCFV_local,
)


logger = logging.getLogger(__name__)

SUITES = ('axioms', 'theorem', 'all')


class SuiteSelectionError(ValueError):
    """Raised for an empty or unknown suite name"""


@dataclass
class SuiteReport:
    """Every check of one suite run"""
    name: str
    suite: str
    checks: List[VerifierReport] = field(default_factory=list)
    exploratory: Dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    @property
    def exit_code(self) -> int:
        return 0 if self.passed else 1

    def failures(self) -> List[str]:
        return [check.name for check in self.checks if not check.passed]

    def to_dict(self) -> Dict[str, Any]:
        return {
            'name': self.name,
            'suite': self.suite,
            'passed': self.passed,
            'failures': self.failures(),
            'checks': [check.to_dict() for check in self.checks],
            'exploratory': self.exploratory,
        }


def _merge(name: str, reports: List[VerifierReport], tolerance: float) -> VerifierReport:
    """One summary entry: worst residual, first failing case"""
    worst = max((r.residual for r in reports), default=0.0)
    failing = [r for r in reports if not r.passed]
    details: Dict[str, Any] = {'cases': len(reports), 'failed_cases': len(failing), 'tolerance': tolerance}
    if failing:
        details['first_failure'] = failing[0].details
    return VerifierReport(name, not failing, worst, details)


def _check(name: str, residual: float, tolerance: float, **details) -> VerifierReport:
    passed = residual <= tolerance
    if not passed:
        logger.warning(f"Check {name} fails: residual {residual:.3e} above {tolerance:.1e}")
    return VerifierReport(name, passed, float(residual), {'tolerance': tolerance, **details})


# Axioms

def cut_pairs(n_sites: int, options, rng: np.random.Generator) -> Iterator[Tuple[LatticeSurface, LatticeSurface]]:
    """Every ordered pair of distinct cuts on small lattices, random pairs otherwise"""
    if n_sites <= options.exhaustive_max_sites:
        cuts = list(enumerate_cuts(n_sites, 0, options.cut_high))
        for source, target in itertools.permutations(cuts, 2):
            yield source, target
        return
    for _ in range(options.random_pairs):
        yield random_cut(n_sites, rng, 0, options.cut_high), random_cut(n_sites, rng, 0, options.cut_high)


def run_axioms(model: GateModel, n_sites: int, options) -> List[VerifierReport]:
    rng = np.random.default_rng(options.seed)
    dense_ok = model.d ** n_sites <= Config.MAX_DENSE_OPERATOR_DIM
    projector_form = n_sites <= options.operator_checks_max_sites and dense_ok
    il, fs, ncfv, ncfv_local = [], [], [], []

    for source, target in cut_pairs(n_sites, options, rng):
        shared = shared_region(source, target)
        if dense_ok and not shared.is_empty:
            il.append(verify_IL(source, target, shared, model))
            ncfv_local.append(verify_NCFV_local(source, target, shared, model))
        mask = int(rng.integers(1, 1 << n_sites))
        A = Region(source, mask)
        regions = all_regions(source) if projector_form else None
        fs.append(verify_FS(A, source, target, model, trials=options.fs_trials, rng=rng, regions=regions))
        ncfv.append(verify_NCFV(source, target, model))

    logger.info(f"Axiom checks: {len(fs)} cut pairs, {len(il)} with shared sites")
    return [
        _merge('interaction_locality', il, Config.FACTORIZATION_TOL),
        _merge('finite_speed', fs, Config.CONCENTRATION_TOL),
        _merge('vacuum_stability', ncfv, Config.FACTORIZATION_TOL),
        _merge('local_vacuum_stability', ncfv_local, Config.FACTORIZATION_TOL),
    ]


# Theorem

def _reduced_operator_checks(run: DetectionRun) -> List[VerifierReport]:
    dec = run.decomposition
    defects, compositions = [], []
    for k in dec.protocol_rounds:
        defects.append(detector_transfer(run, k).isometry_defect)
        defects.append(slab_transfer(run, k).isometry_defect)
    for k in range(dec.kappa - 1, dec.K):
        defects.append(round_transfer(run, k).isometry_defect)
        compositions.append(w_composition_residual(run, k))
    return [
        _check('reduced_isometry', max(defects, default=0.0), Config.ISOMETRY_TOL),
        _check('w_composition', max(compositions, default=0.0), Config.ISOMETRY_TOL),
    ]


def _operator_checks(run: DetectionRun, patterns: List[OutcomePattern]) -> List[VerifierReport]:
    dec = run.decomposition
    projector = [projector_inequalities(run, k, index)
                 for k in dec.protocol_rounds for index in range(dec.r)]
    ceiling = min(upper_bound_operator(run, L) for L in patterns)
    return [
        _merge('projector_inequalities', projector, Config.PSD_TOL),
        _check('upper_bound_operator', max(0.0, -ceiling), Config.PSD_TOL, min_eigenvalue=ceiling),
    ]


def _sandwich_check(trials: int, seed: int) -> VerifierReport:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        dim = int(rng.integers(2, 7))
        worst = min(worst, *sandwich_gaps(*sandwich_triple(dim, rng)))
    return _check('projection_sandwich', max(0.0, -worst), Config.PSD_TOL, trials=trials, min_gap=worst)


def run_theorem(config: ExperimentConfig, workers: int = None) -> Tuple[List[VerifierReport], Dict[str, Any]]:
    options = config.suite
    workers = options.workers if workers is None else workers
    run = config.build_run()
    dec = run.decomposition
    patterns = all_patterns(dec.r)
    checks: List[VerifierReport] = []

    sequential = run_sequential(run, workers)
    closed = closed_distribution(run)
    mismatch = max(abs(sequential.probabilities.get(i, 0.0) - p) for i, p in closed.items())
    checks.append(_check('sequential_vs_closed', mismatch, Config.PROBABILITY_TOL, records=len(closed)))

    detected = coarse_grain(sequential, dec)
    born = curved_born_distribution(run)
    checks.append(_check('normalization', max(
        abs(sequential.total() - 1), abs(sum(detected.values()) - 1), abs(sum(born.values()) - 1),
    ), Config.PROBABILITY_TOL))
    checks.append(_check('coarse_grain_paths', max(
        abs(detected[key] - sequential.pattern_totals[key]) for key in detected
    ), Config.PROBABILITY_TOL))

    slack = 0.0
    for L in patterns:
        lower, upper = bounds(run, L)
        value = detected[L.to_key()]
        slack = max(slack, lower - value, value - upper)
    checks.append(_check('bracket', max(0.0, slack), Config.PROBABILITY_TOL))
    checks.append(_check('lower_bound_partition',
                         max(lower_bound_partition(run, L) for L in patterns), 0.0))

    checks.extend(_reduced_operator_checks(run))

    trails = [auxiliary_rho_trail(run, sequential.outcome(index), sequential)
              for index in list(sequential.probabilities)[:options.max_trails]]
    checks.append(_check('auxiliary_rho', max((t.worst for t in trails), default=0.0),
                         Config.PROBABILITY_TOL, records=len(trails)))

    if dec.n_sites <= options.operator_checks_max_sites \
            and run.model.d ** dec.n_sites <= Config.MAX_DENSE_OPERATOR_DIM:
        checks.extend(_operator_checks(run, patterns))
    if options.sandwich_trials:
        checks.append(_sandwich_check(options.sandwich_trials, options.seed))

    state_born = born_distribution(run.sigma_state)
    region = Region.full(run.sigma)
    rebuilt = reconstruct_distribution(vacuum_probabilities_from_born(state_born, region), region)
    checks.append(_check('reconstruction', max(
        abs(rebuilt.get(q, 0.0) - state_born.get(q, 0.0)) for q in set(rebuilt) | set(state_born)
    ), Config.NORM_TOL))

    sweep = convergence_sweep(run, options.m_values, workers)
    checks.append(VerifierReport('convergence_sweep', sweep.passed, float(len(sweep.violations)),
                                 {'violations': sweep.violations,
                                  'widths': {str(m): w for m, w in sweep.widths().items()},
                                  'round_widths': {str(m): w for m, w in sweep.widths(outer=False).items()}}))

    exploratory: Dict[str, Any] = {}
    if options.double_detection:
        exploratory['double_detection'] = double_detection_discrepancy(run, workers)
    return checks, exploratory


def run_suite(config: ExperimentConfig, suite: str, workers: int = None) -> SuiteReport:
    """Run the selected checks; exit code 1 iff any check fails"""
    if not suite or suite not in SUITES:
        raise SuiteSelectionError(f"suite must be one of {', '.join(SUITES)}, got {suite!r}")
    report = SuiteReport(name=config.name, suite=suite)
    logger.info(f"Suite {suite!r} started for experiment {config.name!r}")
    if suite in ('axioms', 'all'):
        report.checks.extend(run_axioms(config.build_model(), config.n_sites, config.suite))
    if suite in ('theorem', 'all'):
        checks, exploratory = run_theorem(config, workers)
        report.checks.extend(checks)
        report.exploratory.update(exploratory)
    if report.passed:
        logger.info(f"Suite {suite!r} passed: {len(report.checks)} checks")
    else:
        logger.warning(f"Suite {suite!r} failed: {', '.join(report.failures())}")
    return report
