# services/reports.py
"""
Report Writer Service
Writes one self-describing directory per run, named after the manifest hash:
manifest.json, report.json, plot-ready CSV tables and timing.json.

Everything except timing.json is a pure function of the manifest.
"""
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union
import csv
import json
import logging
import math

from models.report import Report, RunManifest

logger = logging.getLogger(__name__)

HASH_PREFIX = 12

Table = Tuple[List[str], List[Sequence[Any]]]


def format_value(value: Any) -> str:
    """Floats with 17 significant digits; everything else as str."""
    if isinstance(value, bool) or value is None:
        return "" if value is None else str(value).lower()
    if isinstance(value, float):
        return "%.17g" % value
    return str(value)


def run_directory(out: Union[str, Path], manifest: RunManifest) -> Path:
    return Path(out) / f"{manifest.command}-{manifest.digest()[:HASH_PREFIX]}"


def write_json(path: Path, payload: Any) -> Path:
    text = json.dumps(payload, indent=2, sort_keys=True, allow_nan=True)
    path.write_text(text + "\n", encoding="utf-8")
    return path


def write_csv(path: Path, header: List[str], rows: List[Sequence[Any]]) -> Path:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            if len(row) != len(header):
                raise ValueError(f"{path.name}: row has {len(row)} fields, header has {len(header)}")
            writer.writerow([format_value(v) for v in row])
    return path


def emit_report(
    report: Report,
    out: Union[str, Path],
    tables: Optional[Dict[str, Table]] = None,
    wall_time: Optional[float] = None,
    directory: Optional[Path] = None,
) -> Path:
    """
    Write a run's report, manifest and CSV tables.

    Args:
        report: finished report; its manifest names the run directory
        out: parent output directory
        tables: CSV name (without suffix) -> (header, rows)
        wall_time: seconds, stored apart from the deterministic files
        directory: run directory already created by the pipeline

    Returns:
        Path of the run directory

    Raises:
        OSError: the output directory or a file cannot be written
    """
    tables = tables or {}
    directory = directory or run_directory(out, report.manifest)
    directory.mkdir(parents=True, exist_ok=True)

    outputs = sorted(set(report.manifest.outputs) | {f"{name}.csv" for name in tables} | {"report.json"})
    report.manifest.outputs = outputs
    for name, (header, rows) in sorted(tables.items()):
        write_csv(directory / f"{name}.csv", header, rows)
    write_json(directory / "report.json", report.model_dump(mode="json"))
    write_json(directory / "manifest.json", {**report.manifest.model_dump(mode="json"),
                                             "digest": report.manifest.digest()})
    if wall_time is not None and math.isfinite(wall_time):
        write_json(directory / "timing.json", {"wall_time_seconds": wall_time})

    status = "passed" if report.passed else f"{len(report.failures)} failure(s)"
    logger.info(f"Report for '{report.manifest.command}' written to {directory} ({status})")
    return directory
