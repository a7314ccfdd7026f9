"""Report data: manifests, CSV/JSON writers, boxplot summaries, deviation tables, SVG curves."""

from __future__ import annotations

import hashlib
import json
import math
import os
import time
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ConfigError, DuelBenchError


class ReportError(DuelBenchError):
    """Results input is incomplete or inconsistent."""


# --- manifest ------------------------------------------------------------------

def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def timestamp() -> str:
    """UTC ISO time, pinned by SOURCE_DATE_EPOCH when set."""
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    t = int(epoch) if epoch else int(time.time())
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(t))


def build_manifest(version: str, command: str, config: dict, seed: int, operators, registry,
                   inputs=()) -> dict:
    """Run manifest. The hash covers everything except the timestamp."""
    closure = {
        "tool": "duelbench",
        "version": version,
        "command": command,
        "config": config,
        "seed": seed,
        "operator_set": list(operators),
        "registry": list(registry),
        "inputs": {str(p): file_sha256(p) for p in inputs},
    }
    digest = hashlib.sha256(canonical_json(closure).encode()).hexdigest()
    return dict(closure, manifest_hash=digest, created=timestamp())


# --- writers -------------------------------------------------------------------

def fmt(v) -> str:
    if isinstance(v, float):
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(v)


def write_csv(path, header, rows, manifest_hash: str | None = None) -> Path:
    """CSV with an optional leading ``# manifest_hash: ...`` comment line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = []
    if manifest_hash:
        lines.append(f"# manifest_hash: {manifest_hash}")
    lines.append(",".join(header))
    lines += [",".join(fmt(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")
    return path


def read_report_csv(path) -> tuple[list[str], list[list[str]]]:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln and not ln.startswith("#")]
    if not lines:
        raise ReportError(f"{path}: empty CSV")
    return lines[0].split(","), [ln.split(",") for ln in lines[1:]]


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n")
    return path


# --- schemas -------------------------------------------------------------------

def load_schema(name: str) -> dict:
    text = resources.files("duelbench").joinpath("schemas", f"{name}.schema.json").read_text()
    return json.loads(text)


def validate(obj, name: str) -> None:
    import jsonschema

    try:
        jsonschema.validate(obj, load_schema(name))
    except jsonschema.ValidationError as exc:
        where = ".".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{name}: field {where}: {exc.message}") from None


CSV_HEADERS = {
    "roc": ["threshold", "fpr", "tpr"],
    "prc": ["threshold", "recall", "precision"],
    "boxplot": ["method", "n", "min", "q1", "median", "q3", "max"],
    "deviation": ["dataset", "method", "auroc", "mean_auroc", "deviation"],
}


def validate_csv(path, kind: str) -> None:
    """Check a report CSV's header and row widths; ``heatmap`` and ``similarity`` are
    square/rectangular tables with an ID first column."""
    header, rows = read_report_csv(path)
    if kind in CSV_HEADERS:
        if header != CSV_HEADERS[kind]:
            raise ReportError(f"{path}: header {header} != {CSV_HEADERS[kind]}")
    elif kind in ("heatmap", "similarity"):
        if header[0] not in ("dataset", "id") or len(header) < 2:
            raise ReportError(f"{path}: unexpected header {header}")
        if kind == "similarity" and len(rows) != len(header) - 1:
            raise ReportError(f"{path}: similarity matrix is not square")
    else:
        raise ReportError(f"unknown CSV kind {kind!r}")
    bad = [i for i, r in enumerate(rows) if len(r) != len(header)]
    if bad:
        raise ReportError(f"{path}: rows {bad[:5]} have the wrong width")


# --- summaries -----------------------------------------------------------------

def boxplot_summary(values) -> dict:
    """Five-number summary; quartiles by linear interpolation between order statistics."""
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise ReportError("boxplot of an empty sample")
    q1, med, q3 = np.percentile(v, [25, 50, 75], method="linear")
    return {"n": int(v.size), "min": float(v.min()), "q1": float(q1), "median": float(med),
            "q3": float(q3), "max": float(v.max())}


def deviation_table(aurocs: dict) -> list[tuple]:
    """Rows (dataset, method, auroc, mean, auroc - mean); every dataset must cover the
    same method set, with at least two methods."""
    if not aurocs:
        raise ReportError("no results to report")
    methods = sorted(set().union(*(set(m) for m in aurocs.values())))
    if len(methods) < 2:
        raise ReportError("deviation needs at least two methods per dataset")
    gaps = {d: sorted(set(methods) - set(m)) for d, m in aurocs.items()}
    gaps = {d: g for d, g in gaps.items() if g}
    if gaps:
        listing = "; ".join(f"{d}: {', '.join(g)}" for d, g in sorted(gaps.items()))
        raise ReportError(f"missing method entries: {listing}")
    rows = []
    for name in sorted(aurocs):
        vals = np.array([aurocs[name][m] for m in methods], dtype=np.float64)
        mean = math.fsum(vals) / vals.size
        for m, v in zip(methods, vals):
            rows.append((name, m, float(v), mean, float(v) - mean))
    return rows


# --- svg -----------------------------------------------------------------------

def svg_curve(path, curves: dict, xlabel: str, ylabel: str, size: int = 320) -> Path:
    """Minimal line plot of ``{label: (x, y)}`` on the unit square."""
    pad = 40
    span = size - 2 * pad
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"]
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}">',
             f'<rect x="{pad}" y="{pad}" width="{span}" height="{span}" fill="none" '
             f'stroke="#888"/>',
             f'<text x="{size / 2}" y="{size - 8}" text-anchor="middle" '
             f'font-size="11">{xlabel}</text>',
             f'<text x="12" y="{size / 2}" font-size="11" transform="rotate(-90 12 '
             f'{size / 2})" text-anchor="middle">{ylabel}</text>']
    for k, (label, (xs, ys)) in enumerate(sorted(curves.items())):
        pts = " ".join(f"{pad + x * span:.2f},{pad + (1 - y) * span:.2f}"
                       for x, y in zip(xs, ys))
        c = colors[k % len(colors)]
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{c}" stroke-width="1.5"/>')
        parts.append(f'<text x="{pad + 6}" y="{pad + 14 + 12 * k}" font-size="10" '
                     f'fill="{c}">{label}</text>')
    parts.append("</svg>")
    path = Path(path)
    path.write_text("\n".join(parts) + "\n")
    return path
