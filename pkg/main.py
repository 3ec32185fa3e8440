#!/usr/bin/env python3
"""
curved-born: detection experiments on a lattice hypersurface evolution
Command line entry point for running, comparing and verifying experiments

Subcommands:
- run       sequential detection distribution
- closed    closed-form record probabilities
- born      curved Born distribution on Σ
- bounds    shrunk/grown brackets per pattern
- sweep     brackets across round lengths, written to sweep.csv
- trail     auxiliary ρ properties along one record
- geometry  slice decomposition dump
- suite     axiom and theorem checks, written to report.json
"""

import argparse
import logging
import sys
from datetime import datetime
from typing import Any, Dict, List, Optional, Sequence

from config import Config, configure_logging
from config_events import OutcomeSeq, all_patterns
from detection_protocol import (
    auxiliary_rho_trail, bounds, closed_distribution, coarse_grain, convergence_sweep,
    curved_born_distribution, outer_bounds, run_sequential,
)
from experiment_config import ExperimentConfig, load_config
from result_exporter import ResultExporter, format_table
from verification_suite import SUITES, run_suite


logger = logging.getLogger(__name__)

COMMANDS = ('run', 'closed', 'born', 'bounds', 'sweep', 'trail', 'geometry', 'suite')


def display_distribution(title: str, values: Dict[str, float], label: str = 'L') -> None:
    """Print a keyed probability table"""
    print(f"\n{title}")
    print(format_table([label, 'probability'], [[key, value] for key, value in values.items()]))


def display_rows(title: str, headers: List[str], rows: List[Dict[str, Any]]) -> None:
    print(f"\n{title}")
    print(format_table(headers, [[row[h] for h in headers] for row in rows]))


def display_report(report: Dict[str, Any]) -> None:
    """Print suite checks with their residuals"""
    print(f"\nSuite {report['suite']} for {report['name']}: {'PASSED' if report['passed'] else 'FAILED'}")
    rows = [[c['name'], 'ok' if c['passed'] else 'FAIL', c['residual']] for c in report['checks']]
    print(format_table(['check', 'status', 'residual'], rows))


def safe_operation(operation_name, operation_func, *args, **kwargs):
    """Execute operation; domain errors exit with status 2"""
    try:
        return operation_func(*args, **kwargs)
    except (ValueError, IOError) as e:
        logger.error(f"{operation_name} failed: {e}")
        print(f"Error in {operation_name}: {e}")
        raise SystemExit(2)


def parse_m_list(text: str) -> List[int]:
    try:
        values = [int(part) for part in text.split(',') if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"--m needs comma-separated integers, got {text!r}")
    if not values or any(m < 1 for m in values):
        raise argparse.ArgumentTypeError(f"--m needs positive integers, got {text!r}")
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='curved-born',
        description='Sequential detection on a lattice hypersurface evolution and the curved Born rule')
    parser.add_argument('command', choices=COMMANDS, help='What to compute')
    parser.add_argument('--config', required=True, help='Experiment JSON file')
    parser.add_argument('--out', help='Output directory for result.json, sweep.csv and report.json')
    parser.add_argument('--suite', default='all', help=f"Suite to run: {', '.join(SUITES)}")
    parser.add_argument('--m', type=parse_m_list, help='Round length(s), e.g. 4,2,1')
    parser.add_argument('--record', help='Outcome record for trail, rows joined by dots, e.g. 01.10')
    parser.add_argument('--workers', type=int, default=None, help='Threads for outcome branches')
    parser.add_argument('--log-level', default=Config.LOG_LEVEL,
                        choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'], help='Logging level')
    return parser


def _parse_record(text: str, kappa: int) -> OutcomeSeq:
    rows = [tuple(int(ch) for ch in row) for row in text.split('.')]
    return OutcomeSeq(kappa, tuple(rows))


def _base_payload(config: ExperimentConfig, command: str, run) -> Dict[str, Any]:
    return {'experiment': config.name, 'command': command, 'run': run.to_dict()}


def command_run(config: ExperimentConfig, args) -> Dict[str, Any]:
    run = config.build_run(m=args.m[0] if args.m else None)
    result = run_sequential(run, args.workers or config.suite.workers)
    detected = coarse_grain(result, run.decomposition)
    display_distribution(f"Detection distribution (m={run.m})", detected)
    payload = _base_payload(config, 'run', run)
    payload.update({'sequential': result.to_dict(), 'detection': detected})
    return payload


def command_closed(config: ExperimentConfig, args) -> Dict[str, Any]:
    run = config.build_run(m=args.m[0] if args.m else None)
    dec = run.decomposition
    values = closed_distribution(run)
    keyed = {OutcomeSeq.from_index(i, dec.kappa, dec.n_protocol_rounds, dec.r).to_key(): p
             for i, p in values.items()}
    display_distribution(f"Closed-form record probabilities (m={run.m})", keyed, label='s')
    payload = _base_payload(config, 'closed', run)
    payload.update({'closed': keyed, 'detection': coarse_grain(values, dec)})
    return payload


def command_born(config: ExperimentConfig, args) -> Dict[str, Any]:
    run = config.build_run(m=args.m[0] if args.m else None)
    born = curved_born_distribution(run)
    display_distribution("Curved Born distribution", born)
    payload = _base_payload(config, 'born', run)
    payload['born'] = born
    return payload


def command_bounds(config: ExperimentConfig, args) -> Dict[str, Any]:
    run = config.build_run(m=args.m[0] if args.m else None)
    born = curved_born_distribution(run)
    rows = []
    for L in all_patterns(run.partition.r):
        lower, upper = bounds(run, L)
        outer_lower, outer_upper = outer_bounds(run, L)
        rows.append({'L': L.to_key(), 'outer_lower': outer_lower, 'lower': lower,
                     'born': born[L.to_key()], 'upper': upper, 'outer_upper': outer_upper})
    display_rows(f"Brackets (m={run.m})", ['L', 'outer_lower', 'lower', 'born', 'upper', 'outer_upper'], rows)
    payload = _base_payload(config, 'bounds', run)
    payload['bounds'] = rows
    return payload


def command_sweep(config: ExperimentConfig, args) -> Dict[str, Any]:
    run = config.build_run()
    m_values = args.m or config.suite.m_values
    sweep = convergence_sweep(run, m_values, args.workers or config.suite.workers)
    rows = [row.to_dict() for row in sweep.rows]
    display_rows("Convergence sweep", ['m', 'L', 'outer_lower', 'lower', 'sequential', 'upper',
                                       'outer_upper', 'born'], rows)
    for violation in sweep.violations:
        print(f"  violation: {violation}")
    payload = _base_payload(config, 'sweep', run)
    payload['sweep'] = sweep.to_dict()
    return payload


def command_trail(config: ExperimentConfig, args) -> Dict[str, Any]:
    run = config.build_run(m=args.m[0] if args.m else None)
    sequential = run_sequential(run, args.workers or config.suite.workers)
    if args.record:
        record = _parse_record(args.record, run.decomposition.kappa)
    else:
        index = max(sequential.probabilities, key=lambda i: (sequential.probabilities[i], -i))
        record = sequential.outcome(index)
    trail = auxiliary_rho_trail(run, record, sequential)
    rows = [{'k': step.k, 'normalization': step.normalization,
             'worst': max(step.residuals.values(), default=0.0)} for step in trail.steps]
    display_rows(f"Auxiliary ρ trail for record {record.to_key()}", ['k', 'normalization', 'worst'], rows)
    payload = _base_payload(config, 'trail', run)
    payload['trail'] = trail.to_dict()
    return payload


def command_geometry(config: ExperimentConfig, args) -> Dict[str, Any]:
    run = config.build_run(m=args.m[0] if args.m else None)
    dec = run.decomposition
    growth = run.growth
    rows = [{'k': k, 'A': dec.round(k).A.site_list, 'B': dec.round(k).B.site_list,
             'C': dec.round(k).C.site_list, 'R': dec.round(k).R.site_list} for k in sorted(dec.rounds)]
    display_rows(f"Slice decomposition (m={dec.m}, κ={dec.kappa}, K={dec.K})", ['k', 'A', 'B', 'C', 'R'], rows)
    payload = _base_payload(config, 'geometry', run)
    payload['decomposition'] = dec.to_dict()
    payload['patches'] = {
        'shrunk': [r.site_list for r in growth.shrunk],
        'grown': [r.site_list for r in growth.grown],
        'boundary': growth.boundary.site_list,
    }
    payload['problems'] = dec.check_invariants()
    return payload


HANDLERS = {
    'run': command_run,
    'closed': command_closed,
    'born': command_born,
    'bounds': command_bounds,
    'sweep': command_sweep,
    'trail': command_trail,
    'geometry': command_geometry,
}


def _status(command: str, payload: Dict[str, Any]) -> int:
    if command == 'sweep' and not payload['sweep']['passed']:
        return 1
    if command == 'trail' and not payload['trail']['passed']:
        return 1
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    started = datetime.now()

    config = safe_operation("config loading", load_config, args.config)
    exporter = safe_operation("output setup", ResultExporter, args.out) if args.out else None

    if args.command == 'suite':
        report = safe_operation("suite", run_suite, config, args.suite, args.workers)
        payload = report.to_dict()
        display_report(payload)
        if exporter:
            safe_operation("report export", exporter.write_report, payload, started=started)
        return report.exit_code

    payload = safe_operation(args.command, HANDLERS[args.command], config, args)
    if exporter:
        safe_operation("result export", exporter.write_result, payload)
        if args.command == 'sweep':
            safe_operation("sweep export", exporter.write_sweep, payload['sweep']['rows'])
    return _status(args.command, payload)


if __name__ == "__main__":
    sys.exit(main())
