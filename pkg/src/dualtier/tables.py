"""Summary grids built from the report documents of a run directory."""

from __future__ import annotations

import json
from pathlib import Path

DETECTION_COLUMNS = ["scenario", "tier1", "tier2", "tier1_accuracy", "tier1_f1",
                     "tier2_accuracy", "tier2_f1"]
RETRAINING_COLUMNS = ["scenario", "initial_attack_accuracy", "initial_attack_weighted_f1",
                      "final_attack_accuracy", "final_attack_weighted_f1", "rounds"]
PURITY_COLUMNS = ["scenario", "fold", "round", "promoted", "PSL1", "PSL2", "PSLC"]


class ReportError(ValueError):
    pass


def _load(path: Path) -> dict:
    try:
        return json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ReportError(f"corrupt report {path}: {exc}") from exc


def collect(out_dir) -> dict[str, list[list]]:
    out = Path(out_dir)
    cv_files = sorted((out / "cv").glob("*.json"))
    if not cv_files:
        raise ReportError(f"no reports under {out}")
    detection, retraining, purity = [], [], []
    for path in cv_files:
        doc = _load(path)
        try:
            sid, mean = doc["meta"]["scenario"], doc["mean"]
            detection.append([sid, doc["meta"]["tier1"], doc["meta"]["tier2"]]
                             + [mean[c] for c in DETECTION_COLUMNS[3:]])
            retraining.append([sid] + [mean[c] for c in RETRAINING_COLUMNS[1:]])
        except KeyError as exc:
            raise ReportError(f"{path}: missing field {exc}") from exc
    for path in sorted((out / "reports").glob("*/fold*.json")):
        doc = _load(path)
        for ev in doc.get("events", []):
            q = ev.get("quality")
            if q is None:
                continue
            purity.append([doc["meta"]["scenario"], doc["meta"]["fold"], ev["round"],
                           ev["promoted_class"] or "-", q["psl1"], q["psl2"], q["pslc"]])
    return {"detection": detection, "retraining": retraining, "purity": purity}


def _cell(v, precision: int | None) -> str:
    if isinstance(v, float):
        return repr(v) if precision is None else f"{v:.{precision}f}"
    return str(v)


COLUMNS = {"detection": DETECTION_COLUMNS, "retraining": RETRAINING_COLUMNS,
           "purity": PURITY_COLUMNS}


def render(tables: dict, precision: int = 2) -> str:
    lines = []
    for name, rows in tables.items():
        cols = COLUMNS[name]
        cells = [cols] + [[_cell(v, precision) for v in r] for r in rows]
        widths = [max(len(row[i]) for row in cells) for i in range(len(cols))]
        lines.append(f"== {name} ==")
        for row in cells:
            lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
        lines.append("")
    return "\n".join(lines)


def flat(tables: dict) -> str:
    """Tab-separated blocks at full precision, one per table."""
    lines = []
    for name, rows in tables.items():
        lines.append(f"# {name}")
        lines.append("\t".join(COLUMNS[name]))
        lines.extend("\t".join(_cell(v, None) for v in r) for r in rows)
    return "\n".join(lines) + "\n"


def parse_flat(text: str) -> dict[str, list[list[str]]]:
    tables, current = {}, None
    for line in text.splitlines():
        if line.startswith("# "):
            current = line[2:]
            tables[current] = []
        elif current is not None and line:
            tables[current].append(line.split("\t"))
    # first row of each block is the header
    return {k: v[1:] for k, v in tables.items()}
