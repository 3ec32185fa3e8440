#!/usr/bin/env python3
"""
Result Export Utilities
Deterministic persistence of run results, sweeps and suite reports

Features:
- result.json with sorted keys and shortest round-trip floats
- sweep.csv with 17 significant digits
- report.json with suite residuals and process memory figures
- Aligned-column text tables for terminal output
"""

import csv
import json
import logging
import os
from datetime import datetime
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import psutil

from config import Config


logger = logging.getLogger(__name__)


SWEEP_COLUMNS = ['m', 'L', 'lower', 'sequential', 'upper', 'born', 'outer_lower', 'outer_upper']


def to_plain(value: Any) -> Any:
    """Convert numpy scalars, complex numbers and tuples into JSON values"""
    if isinstance(value, dict):
        return {str(k): to_plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_plain(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return float(value)
    if isinstance(value, (complex, np.complexfloating)):
        return [float(value.real), float(value.imag)]
    return value


def dumps_deterministic(payload: Dict[str, Any]) -> str:
    """JSON text that is byte-identical for identical payloads"""
    return json.dumps(to_plain(payload), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def format_float(value: float) -> str:
    return format(float(value), Config.CSV_FLOAT_FORMAT)


def format_table(headers: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    """Aligned text columns; floats in 12 significant digits"""
    def cell(v: Any) -> str:
        if isinstance(v, (float, np.floating)):
            return f"{float(v):.12g}"
        return str(v)

    text_rows = [[cell(v) for v in row] for row in rows]
    widths = [len(h) for h in headers]
    for row in text_rows:
        for j, item in enumerate(row):
            widths[j] = max(widths[j], len(item))
    lines = ["  ".join(h.ljust(widths[j]) for j, h in enumerate(headers)).rstrip()]
    lines.append("  ".join("-" * w for w in widths))
    for row in text_rows:
        lines.append("  ".join(item.rjust(widths[j]) for j, item in enumerate(row)).rstrip())
    return "\n".join(lines)


class ResultExporter:
    def __init__(self, output_dir: str = None):
        """Initialize exporter with an output directory, created if missing"""
        self.output_dir = self._validate_output_dir(output_dir or '.')
        self.peak_rss = 0
        self._sample_memory()

    def _validate_output_dir(self, directory: str) -> str:
        abs_path = os.path.abspath(directory)
        if os.path.exists(abs_path) and not os.path.isdir(abs_path):
            raise ValueError(f"Output path is not a directory: {abs_path}")
        os.makedirs(abs_path, exist_ok=True)
        if not os.access(abs_path, os.W_OK):
            raise ValueError(f"No write permission for directory: {abs_path}")
        return abs_path

    def _filepath(self, filename: str) -> str:
        safe = os.path.basename(filename)
        if not safe or safe in ('.', '..'):
            raise ValueError(f"Invalid output filename: {filename!r}")
        return os.path.join(self.output_dir, safe)

    def _sample_memory(self) -> int:
        rss = psutil.Process().memory_info().rss
        self.peak_rss = max(self.peak_rss, rss)
        return rss

    def _write_text(self, filepath: str, text: str) -> None:
        try:
            with open(filepath, 'w', encoding='utf-8', newline='') as f:
                f.write(text)
        except (IOError, OSError) as e:
            raise IOError(f"Failed to write {filepath}: {e}")

    def write_result(self, payload: Dict[str, Any], filename: str = None) -> str:
        """result.json: no timestamps, no memory figures"""
        filepath = self._filepath(filename or Config.RESULT_FILE)
        self._write_text(filepath, dumps_deterministic(payload))
        self._sample_memory()
        logger.info(f"Result written to {filepath}")
        return filepath

    def write_sweep(self, rows: List[Dict[str, Any]], filename: str = None) -> str:
        """sweep.csv with one row per (m, L)"""
        filepath = self._filepath(filename or Config.SWEEP_FILE)
        try:
            with open(filepath, 'w', newline='', encoding='utf-8') as f:
                writer = csv.writer(f, lineterminator='\n')
                writer.writerow(SWEEP_COLUMNS)
                for row in rows:
                    writer.writerow([
                        int(row['m']),
                        row['L'],
                        *(format_float(row[c]) for c in SWEEP_COLUMNS[2:]),
                    ])
        except (IOError, OSError) as e:
            raise IOError(f"Failed to write CSV file: {e}")
        self._sample_memory()
        logger.info(f"Sweep written to {filepath}: {len(rows)} rows")
        return filepath

    def write_report(self, report: Dict[str, Any], filename: str = None,
                     started: Optional[datetime] = None) -> str:
        """report.json: suite residuals plus process memory and timing"""
        filepath = self._filepath(filename or Config.REPORT_FILE)
        rss = self._sample_memory()
        payload = dict(report)
        payload['process'] = {
            'rss_bytes': rss,
            'peak_rss_bytes': self.peak_rss,
            'finished': datetime.now().isoformat(timespec='seconds'),
        }
        if started is not None:
            payload['process']['started'] = started.isoformat(timespec='seconds')
        self._write_text(filepath, dumps_deterministic(payload))
        logger.info(f"Report written to {filepath}")
        return filepath
