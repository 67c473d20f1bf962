"""Text and JSON renderings of a :class:`RunReport`."""
from __future__ import annotations

import json

from .pipeline import ROLES

__all__ = ["emit_report", "table_header", "format_row", "parse_report"]

_LABEL_WIDTH = 16
_COL_WIDTH = 7


def table_header(role: str) -> list[str]:
    cols = ["ACC", "AUC", "F1"]
    for label in ROLES[role].labels:
        cols += [f"R({label})", f"P({label})", f"F1({label})"]
    return cols


def format_row(row, role: str) -> list[str]:
    """Two-decimal cells: accuracy in percent, the rest as fractions."""
    cells = [f"{row.acc:.2f}", "n/a" if row.auc is None else f"{row.auc:.2f}", f"{row.macro_f1:.2f}"]
    for label in ROLES[role].labels:
        pc = row.per_class[label]
        cells += [f"{pc['recall']:.2f}", f"{pc['precision']:.2f}", f"{pc['f1']:.2f}"]
    return cells


def _line(label: str, cells: list[str]) -> str:
    return (f"{label:<{_LABEL_WIDTH}}" + "".join(f"{c:>{_COL_WIDTH}}" for c in cells)).rstrip()


def _table(report, role: str, granularity: str) -> list[str]:
    title = {"gender": "Gender classifier (attacker)", "diagnosis": "Diagnosis classifier (utility)"}[role]
    rows = getattr(report, role)
    n = rows["original"][granularity].n
    out = [f"{title}, {granularity} level (n={n})", _line("", table_header(role))]
    for cond, name in (("original", "Original data"), ("perturbed", "Perturbed data")):
        out.append(_line(name, format_row(rows[cond][granularity], role)))
    return out


def _text(report) -> str:
    atk = report.config["attack"]
    lines = [
        f"Scenario: {report.scenario_id}",
        f"Ledger: {'complete' if report.ledger['complete'] else 'VIOLATED'} ({report.ledger['n_entries']} resource uses)",
        f"Attack: {atk['method']} epsilon={atk['epsilon']} alpha={atk['alpha']} iterations={atk['iterations']}",
        f"Seed: {report.seed}",
        "",
    ]
    for granularity in ("chunk", "recording"):
        for role in ("gender", "diagnosis"):
            lines += _table(report, role, granularity) + [""]
    lines.append(f"Utility drop (diagnosis ACC, chunk level): {report.utility_drop:.2f} points")
    lines.append(f"Utility drop (diagnosis ACC, recording level): {report.utility_drop_recording:.2f} points")
    lines.append("F1 is the macro average over both classes; weighted F1 is in report.json.")
    return "\n".join(lines) + "\n"


def emit_report(report, fmt: str = "text") -> str:
    """``"json"`` is the canonical machine form; ``"text"`` prints the four tables."""
    if fmt == "json":
        return json.dumps(report.to_dict(), indent=2, ensure_ascii=False, allow_nan=False) + "\n"
    if fmt == "text":
        return _text(report)
    raise ValueError(f"format must be 'text' or 'json', got {fmt!r}")


def parse_report(document: str):
    from .experiment import RunReport

    return RunReport.from_dict(json.loads(document))
