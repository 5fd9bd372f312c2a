"""Render suite results: per-domain CSV table, JSON bundle, radar JSON + SVG.

Percentages are printed to one decimal (rounded half away from zero) and
Transformation to four decimals. Rows follow the canonical domain order.
The radar plot is dependency-free SVG: one axis per domain at equal angles
from 12 o'clock clockwise, two closed polylines, radial scale 0-100%.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import DOMAIN_ORDER
from .runner import SuiteResult

RADAR_SIZE = 600
RADAR_OUTER_RADIUS = 250.0
RADAR_MIN_DOMAINS = 3

CSV_HEADER = "domain,baseline,rag,improvements,transformation,flags"


@dataclass(frozen=True)
class ReportRow:
    domain: str  # canonical domain name, or "Overall"
    s_base: float
    s_rag: float
    improvements: float
    transformation: float
    flags: tuple[str, ...] = ()


@dataclass
class ReportBundle:
    rows: list[ReportRow]  # per-domain, canonical order
    overall: ReportRow | None
    meta: dict = field(default_factory=dict)


def build_bundle(result: SuiteResult) -> ReportBundle:
    rows = []
    for domain in DOMAIN_ORDER:
        if domain not in result.per_domain:
            continue
        dr = result.per_domain[domain]
        rows.append(
            ReportRow(
                domain=domain.value,
                s_base=dr.base.S,
                s_rag=dr.rag.S,
                improvements=dr.report.improvements,
                transformation=dr.report.transformation,
                flags=tuple(sorted(dr.report.flags)),
            )
        )
    o = result.overall
    overall = ReportRow(
        domain="Overall",
        s_base=o.base.S,
        s_rag=o.rag.S,
        improvements=o.report.improvements,
        transformation=o.report.transformation,
        flags=tuple(sorted(o.report.flags)),
    )
    return ReportBundle(rows=rows, overall=overall, meta=dict(result.meta))


def round_half_away(value: float, decimals: int) -> float:
    scale = 10.0**decimals
    return math.copysign(math.floor(abs(value) * scale + 0.5), value) / scale


def _pct(value: float, signed: bool = False) -> str:
    pct = round_half_away(value * 100.0, 1)
    text = f"{pct:+.1f}%" if signed else f"{pct:.1f}%"
    # avoid the confusing "-0.0%"
    if text == "-0.0%":
        text = "+0.0%" if signed else "0.0%"
    return text


def emit_table(bundle: ReportBundle) -> str:
    """Per-domain CSV with an Overall row last."""
    lines = [CSV_HEADER]
    rows = list(bundle.rows)
    if bundle.overall is not None:
        rows.append(bundle.overall)
    for row in rows:
        lines.append(
            ",".join(
                (
                    row.domain,
                    _pct(row.s_base),
                    _pct(row.s_rag),
                    _pct(row.improvements, signed=True),
                    f"{row.transformation:.4f}",
                    ";".join(row.flags),
                )
            )
        )
    return "\n".join(lines) + "\n"


def parse_table(text: str) -> list[dict]:
    """Inverse of emit_table at printed precision (used by round-trip checks)."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != CSV_HEADER:
        raise ValueError(f"unexpected CSV header: {lines[:1]}")
    rows = []
    for line in lines[1:]:
        domain, base, rag, imp, trans, flags = line.split(",")
        rows.append(
            {
                "domain": domain,
                "s_base": float(base.rstrip("%")) / 100.0,
                "s_rag": float(rag.rstrip("%")) / 100.0,
                "improvements": float(imp.rstrip("%")) / 100.0,
                "transformation": float(trans),
                "flags": tuple(f for f in flags.split(";") if f),
            }
        )
    return rows


def _row_dict(row: ReportRow) -> dict:
    return {
        "domain": row.domain,
        "s_base": row.s_base,
        "s_rag": row.s_rag,
        "improvements": row.improvements,
        "transformation": round_half_away(row.transformation, 4),
        "flags": list(row.flags),
    }


def emit_json(bundle: ReportBundle) -> str:
    payload = {
        "rows": [_row_dict(r) for r in bundle.rows],
        "overall": _row_dict(bundle.overall) if bundle.overall is not None else None,
        "meta": bundle.meta,
    }
    return json.dumps(payload, indent=2, ensure_ascii=False, sort_keys=True) + "\n"


def emit_radar_json(bundle: ReportBundle) -> str:
    payload = {row.domain: {"s_base": row.s_base, "s_rag": row.s_rag} for row in bundle.rows}
    return json.dumps(payload, indent=2, ensure_ascii=False, sort_keys=True) + "\n"


def radar_vertex(index: int, n_axes: int, fraction: float, cx: float = RADAR_SIZE / 2, cy: float = RADAR_SIZE / 2, outer: float = RADAR_OUTER_RADIUS) -> tuple[float, float]:
    """Cartesian vertex for axis `index`: 12 o'clock start, clockwise."""
    angle = -math.pi / 2.0 + 2.0 * math.pi * index / n_axes
    r = fraction * outer
    return (cx + r * math.cos(angle), cy + r * math.sin(angle))


def emit_radar_svg(bundle: ReportBundle) -> str | None:
    """Radar SVG, or None (with a notice) when fewer than 3 domains exist."""
    rows = bundle.rows
    n = len(rows)
    if n < RADAR_MIN_DOMAINS:
        return None
    cx = cy = RADAR_SIZE / 2
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{RADAR_SIZE}" height="{RADAR_SIZE}" '
        f'viewBox="0 0 {RADAR_SIZE} {RADAR_SIZE}">',
        f'<rect width="{RADAR_SIZE}" height="{RADAR_SIZE}" fill="white"/>',
    ]
    for ring in (0.25, 0.5, 0.75, 1.0):
        ring_pts = " ".join(
            f"{x:.3f},{y:.3f}" for x, y in (radar_vertex(i, n, ring) for i in range(n))
        )
        parts.append(f'<polygon points="{ring_pts}" fill="none" stroke="#cccccc" stroke-width="1"/>')
    for i, row in enumerate(rows):
        x, y = radar_vertex(i, n, 1.0)
        parts.append(f'<line x1="{cx}" y1="{cy}" x2="{x:.3f}" y2="{y:.3f}" stroke="#cccccc" stroke-width="1"/>')
        lx, ly = radar_vertex(i, n, 1.12)
        parts.append(
            f'<text x="{lx:.3f}" y="{ly:.3f}" font-size="16" font-family="sans-serif" '
            f'text-anchor="middle" dominant-baseline="middle">{row.domain}</text>'
        )
    series = (("s_base", "#1f77b4", [r.s_base for r in rows]), ("s_rag", "#d62728", [r.s_rag for r in rows]))
    for name, color, values in series:
        # full float precision so vertex radii encode the accuracy exactly
        pts = " ".join(
            f"{x!r},{y!r}" for x, y in (radar_vertex(i, n, v) for i, v in enumerate(values))
        )
        parts.append(
            f'<polygon points="{pts}" fill="{color}" fill-opacity="0.15" stroke="{color}" '
            f'stroke-width="2" data-series="{name}"/>'
        )
    parts.append(
        f'<text x="20" y="{RADAR_SIZE - 20}" font-size="14" font-family="sans-serif">'
        f'base (blue) vs rag (red), radial scale 0-100%</text>'
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_reports(bundle: ReportBundle, out_dir: str | Path) -> dict[str, Path]:
    """Write report.csv / report.json / radar.json / radar.svg; returns paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: dict[str, Path] = {}
    for name, text in (
        ("report.csv", emit_table(bundle)),
        ("report.json", emit_json(bundle)),
        ("radar.json", emit_radar_json(bundle)),
    ):
        path = out_dir / name
        path.write_text(text, encoding="utf-8")
        written[name] = path
    svg = emit_radar_svg(bundle)
    if svg is None:
        import logging

        logging.getLogger(__name__).warning(
            "radar plot skipped: needs at least %d domains, got %d", RADAR_MIN_DOMAINS, len(bundle.rows)
        )
    else:
        path = out_dir / "radar.svg"
        path.write_text(svg, encoding="utf-8")
        written["radar.svg"] = path
    return written
