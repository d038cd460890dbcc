"""
Report files written into the run's output directory.

    report.json   resolved config, report body, verdicts, overall pass flag
    *.csv         per-sample / per-trial / per-node tables, floats as %.17g
"""

import json
import math
import logging
from pathlib import Path

import numpy as np
from django.conf import settings

from apps.operators.services.grid import CSV_FLOAT_FORMAT

logger = logging.getLogger(__name__)


REPORT_FILE = 'report.json'


def output_directory(data: dict) -> Path:
    if data.get('out'):
        return Path(data['out'])
    return Path(settings.LAB_OUTPUT_DIR) / f"{data['command']}-seed{data.get('seed', 0)}"


def to_jsonable(value):
    """Plain JSON types; non-finite floats become null."""
    if isinstance(value, dict):
        return {str(key): to_jsonable(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(item) for item in value]
    if isinstance(value, np.ndarray):
        return [to_jsonable(item) for item in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


def build_document(resolved_config: dict, report: dict, verdicts: dict) -> dict:
    return to_jsonable({
        'config': resolved_config,
        'report': report,
        'verdicts': verdicts,
        'pass': all(verdicts.values()),
    })


def write_artifacts(directory: Path, document: dict, tables: dict) -> list:
    directory.mkdir(parents=True, exist_ok=True)
    written = []

    report_path = directory / REPORT_FILE
    report_path.write_text(json.dumps(document, indent=2, sort_keys=True, allow_nan=False), encoding='utf-8')
    written.append(report_path)

    for name, frame in tables.items():
        path = directory / name
        frame.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT)
        written.append(path)

    logger.info(f"Wrote {len(written)} artifact(s) to {directory}")
    return written
