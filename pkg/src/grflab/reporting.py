"""Run reports, monitor-series serialization, and figure rendering.

Reports are byte-stable for a fixed configuration and platform: the JSON is
written with sorted keys and shortest round-trip float representation, and
wall time lives only on the in-memory object, never in the file.  Monitor
CSV files carry one channel per column, ordered lexicographically.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .entropy import MonitorSeries

REPORT_SCHEMA = "grflab-report-v1"


@dataclass
class CheckRow:
    """One verified quantity: pass iff value <= tol."""

    name: str
    value: float
    tol: float
    passed: bool
    order: float | None = None
    note: str = ""

    def as_dict(self) -> dict:
        out = {"name": self.name, "value": float(self.value),
               "tol": float(self.tol), "passed": bool(self.passed)}
        if self.order is not None:
            out["order"] = float(self.order)
        if self.note:
            out["note"] = self.note
        return out


def check_leq(name: str, value: float, tol: float, order: float | None = None,
              note: str = "") -> CheckRow:
    value = float(value)
    return CheckRow(name, value, float(tol), bool(value <= tol), order, note)


def check_flag(name: str, ok: bool, note: str = "") -> CheckRow:
    return CheckRow(name, 0.0 if ok else 1.0, 0.5, bool(ok), None, note)


@dataclass
class RunReport:
    """Per-check results for one run or verification suite."""

    config_hash: str
    checks: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)
    wall_time_s: float = 0.0

    def add(self, row: CheckRow) -> CheckRow:
        self.checks.append(row)
        return row

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_json_dict(self) -> dict:
        # wall time intentionally excluded: reports are byte-stable per config
        return {
            "schema": REPORT_SCHEMA,
            "config_hash": self.config_hash,
            "all_passed": self.all_passed,
            "checks": [c.as_dict() for c in self.checks],
            "meta": _jsonable(self.meta),
        }

    def summary_lines(self) -> list:
        lines = []
        for c in self.checks:
            status = "PASS" if c.passed else "FAIL"
            extra = f"  order={c.order:.2f}" if c.order is not None else ""
            lines.append(f"[{status}] {c.name}: value={c.value:.3e} "
                         f"tol={c.tol:.3e}{extra}")
        return lines


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in sorted(obj.items(), key=lambda kv: str(kv[0]))}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (bool, int, float, str)) or obj is None:
        return obj
    return str(obj)


def write_report(report: RunReport, path: str):
    payload = json.dumps(report.to_json_dict(), sort_keys=True, indent=1)
    with open(path, "w") as fh:
        fh.write(payload + "\n")


def series_to_csv(series: MonitorSeries, path: str):
    names = sorted(series.channels)
    with open(path, "w") as fh:
        fh.write(",".join(["time"] + names) + "\n")
        for i, t in enumerate(series.times):
            row = [repr(float(t))] + [repr(float(series.channels[n][i]))
                                      for n in names]
            fh.write(",".join(row) + "\n")


def read_csv(path: str) -> tuple:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    return header, data


def render_report_dir(directory: str) -> list:
    """Render every monitor CSV and the report summary to PNG figures.

    Returns the list of written figure paths.  Uses the Agg canvas, so it is
    safe on headless hosts.
    """
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    written = []
    for name in sorted(os.listdir(directory)):
        if not name.endswith(".csv"):
            continue
        header, data = read_csv(os.path.join(directory, name))
        if data.size == 0:
            continue
        t = data[:, 0]
        fig, ax = plt.subplots(figsize=(6.0, 3.6))
        positive = True
        for j, chan in enumerate(header[1:], start=1):
            y = data[:, j]
            positive = positive and np.all(y > 0)
            ax.plot(t, y, label=chan, lw=1.2)
        if positive and data[:, 1:].max() / max(data[:, 1:].min(), 1e-300) > 1e3:
            ax.set_yscale("log")
        ax.set_xlabel("t")
        ax.legend(fontsize=7, frameon=False)
        ax.set_title(name[:-4], fontsize=9)
        fig.tight_layout()
        out = os.path.join(directory, name[:-4] + ".png")
        fig.savefig(out, dpi=140)
        plt.close(fig)
        written.append(out)

    report_path = os.path.join(directory, "report.json")
    if os.path.exists(report_path):
        with open(report_path) as fh:
            report = json.load(fh)
        checks = report.get("checks", [])
        if checks:
            names = [c["name"] for c in checks]
            margins = [np.log10(max(c["value"], 1e-300) / max(c["tol"], 1e-300))
                       for c in checks]
            colors = ["#2a7e43" if c["passed"] else "#b03030" for c in checks]
            fig, ax = plt.subplots(figsize=(7.0, 0.34 * len(checks) + 1.2))
            ax.barh(range(len(checks)), margins, color=colors)
            ax.axvline(0.0, color="k", lw=0.8)
            ax.set_yticks(range(len(checks)))
            ax.set_yticklabels(names, fontsize=7)
            ax.set_xlabel("log10(value / tol)   (left of 0 passes)")
            fig.tight_layout()
            out = os.path.join(directory, "report_summary.png")
            fig.savefig(out, dpi=140)
            plt.close(fig)
            written.append(out)
    return written
