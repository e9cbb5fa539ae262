"""Write enforcement artifacts plus a manifest describing the run."""

from __future__ import annotations

import csv
from datetime import datetime, timezone
from fractions import Fraction
import io
import json
import logging
from pathlib import Path

from stlenforce import __version__
from stlenforce.core import storage
from stlenforce.core.numbers import format_rational
from stlenforce.services.enforcer import EnforcedSignal, EnforcementReport, report_to_json
from stlenforce.services.signal import Signal, merge_times, to_csv


_LOGGER = logging.getLogger(__name__)

ENFORCED_NAME = "enforced.csv"
REPORT_NAME = "report.json"
PLOT_NAME = "plot.csv"
MANIFEST_NAME = "manifest.json"


def _now_iso() -> str:
    return datetime.now(timezone.utc).isoformat()


def plot_data(original: Signal, enforced: Signal) -> str:
    """Paired input/output columns over the union of both time grids."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    header = ["time"]
    for name in original.variables:
        header += [f"{name}_in", f"{name}_out"]
    writer.writerow(header)
    for t in merge_times(original.times, enforced.times):
        before, after = original.point_at(t), enforced.point_at(t)
        row = [format_rational(t)]
        for name in original.variables:
            row += [format_rational(before[name]), format_rational(after[name])]
        writer.writerow(row)
    return buffer.getvalue()


def write_enforcement_artifacts(
    out_dir: Path,
    *,
    original: Signal,
    enforced: EnforcedSignal,
    report: EnforcementReport,
    property_text: str,
    eps: Fraction,
    source: Path | None = None,
    include_plot: bool = True,
) -> Path:
    """Returns the manifest path; an unchanged signal is copied byte for byte from ``source``."""
    out_dir = storage.ensure_output_dir(Path(out_dir))
    files: list[str] = []

    enforced_path = out_dir / ENFORCED_NAME
    if not enforced.changed and source is not None:
        storage.copy_file(source, enforced_path)
    else:
        storage.write_text(enforced_path, to_csv(enforced.signal))
    files.append(ENFORCED_NAME)

    storage.write_text(out_dir / REPORT_NAME, report_to_json(report))
    files.append(REPORT_NAME)

    if include_plot:
        storage.write_text(out_dir / PLOT_NAME, plot_data(original, enforced.signal))
        files.append(PLOT_NAME)

    manifest = {
        "created_at": _now_iso(),
        "tool_version": __version__,
        "property": property_text,
        "eps": format_rational(eps),
        "source": str(source) if source is not None else None,
        "changed": enforced.changed,
        "accepted": report.accepted,
        "modified_count": report.modified_count,
        "files": files,
    }
    manifest_path = storage.write_text(out_dir / MANIFEST_NAME, json.dumps(manifest, indent=2))
    _LOGGER.info("Wrote %d artifacts to %s", len(files) + 1, out_dir)
    return manifest_path
