"""Render sweep-result figures with diff-testable sidecar data files.

Input CSVs follow the sweep tool's column contracts:

* summary: k, lambda_max, seed, final_accuracy, final_loss, comm_ru_avg,
  comp_ru_avg, total_ru_avg, overage_ru
* curves:  k, lambda_max, seed, t, accuracy, loss

Every figure writes a sidecar CSV (``<image stem>.points.csv``) holding
exactly the aggregated points that were plotted: per group, the mean across
seeds plus the min-max envelope.  Figures can be regenerated by any backend;
the sidecar is the stable artifact to diff.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import matplotlib
import numpy as np

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be fixed first)

KINDS = ("curves", "ru_bars", "lambda_tradeoff")

SUMMARY_COLUMNS = (
    "k",
    "lambda_max",
    "seed",
    "final_accuracy",
    "final_loss",
    "comm_ru_avg",
    "comp_ru_avg",
    "total_ru_avg",
    "overage_ru",
)

CURVE_COLUMNS = ("k", "lambda_max", "seed", "t", "accuracy", "loss")


class PlotInputError(ValueError):
    """Raised for missing columns, empty inputs, or ambiguous groupings."""


@dataclass(frozen=True)
class PlotSpec:
    kind: str
    input_csv: str
    output_path: str

    def __post_init__(self):
        if self.kind not in KINDS:
            raise PlotInputError(
                f"unknown figure kind {self.kind!r}; choose one of {KINDS}"
            )


def _read_csv(path, required_columns):
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in required_columns if c not in header]
        if missing:
            raise PlotInputError(
                f"{path}: missing required columns: {', '.join(missing)}"
            )
        rows = list(reader)
    if not rows:
        raise PlotInputError(f"{path}: CSV has a header but no data rows")
    return rows


def _aggregate(rows, group_cols, value_cols):
    """Mean/min/max of the value columns per group, in first-seen group order."""
    groups: dict[tuple, dict[str, list[float]]] = {}
    order = []
    for row in rows:
        key = tuple(float(row[c]) for c in group_cols)
        if key not in groups:
            groups[key] = {c: [] for c in value_cols}
            order.append(key)
        for c in value_cols:
            groups[key][c].append(float(row[c]))
    out = []
    for key in sorted(order):
        entry = dict(zip(group_cols, key))
        for c in value_cols:
            values = np.asarray(groups[key][c])
            entry[f"{c}_mean"] = float(np.mean(values))
            entry[f"{c}_min"] = float(np.min(values))
            entry[f"{c}_max"] = float(np.max(values))
        out.append(entry)
    return out


def sidecar_path(output_path) -> Path:
    out = Path(output_path)
    return out.with_name(out.stem + ".points.csv")


def _write_sidecar(path, entries):
    columns = list(entries[0].keys())
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for entry in entries:
            writer.writerow([repr(entry[c]) for c in columns])


def _has_band(entries, col):
    return any(e[f"{col}_min"] < e[f"{col}_max"] for e in entries)


def _render_curves(rows, out_path):
    entries = _aggregate(
        rows, group_cols=("k", "lambda_max", "t"), value_cols=("accuracy", "loss")
    )
    ks = sorted({e["k"] for e in entries})
    fig, (ax_acc, ax_loss) = plt.subplots(2, 1, figsize=(7, 7), sharex=True)
    for k in ks:
        pts = [e for e in entries if e["k"] == k]
        ts = [e["t"] for e in pts]
        for ax, col in ((ax_acc, "accuracy"), (ax_loss, "loss")):
            mean = [e[f"{col}_mean"] for e in pts]
            line, = ax.plot(ts, mean, marker="o", label=f"k={int(k)}")
            if _has_band(pts, col):
                ax.fill_between(
                    ts,
                    [e[f"{col}_min"] for e in pts],
                    [e[f"{col}_max"] for e in pts],
                    alpha=0.15,
                    color=line.get_color(),
                )
    ax_acc.set_ylabel("test accuracy")
    ax_loss.set_ylabel("probe loss")
    ax_loss.set_xlabel("time (s)")
    ax_acc.legend(loc="lower right", fontsize=8)
    ax_acc.set_title("Training progress by number of sub-pools")
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return entries


def _render_ru_bars(rows, out_path):
    lams = {row["lambda_max"] for row in rows}
    if len(lams) > 1:
        raise PlotInputError(
            "ru_bars needs a single lambda_max per figure; "
            f"the CSV carries {sorted(lams)}"
        )
    entries = _aggregate(
        rows, group_cols=("k",), value_cols=("comm_ru_avg", "comp_ru_avg")
    )
    ks = [int(e["k"]) for e in entries]
    comm = np.array([e["comm_ru_avg_mean"] for e in entries])
    comp = np.array([e["comp_ru_avg_mean"] for e in entries])
    x = np.arange(len(ks))
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.bar(x, comm, label="communication", color="#4878d0")
    ax.bar(x, comp, bottom=comm, label="computing", color="#ee854a")
    ax.set_xticks(x, [str(k) for k in ks])
    ax.set_xlabel("number of sub-pools")
    ax.set_ylabel("resource units per second")
    ax.set_title("Resource use for model training")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return entries


def _render_lambda_tradeoff(rows, out_path):
    ks = {row["k"] for row in rows}
    if len(ks) > 1:
        raise PlotInputError(
            "lambda_tradeoff needs a single k per figure; "
            f"the CSV carries {sorted(ks)}"
        )
    entries = _aggregate(
        rows,
        group_cols=("lambda_max",),
        value_cols=("final_accuracy", "total_ru_avg"),
    )
    lams = [e["lambda_max"] for e in entries]
    fig, ax_acc = plt.subplots(figsize=(7, 4.5))
    ax_ru = ax_acc.twinx()
    acc_mean = [e["final_accuracy_mean"] for e in entries]
    ru_mean = [e["total_ru_avg_mean"] for e in entries]
    line_a, = ax_acc.plot(lams, acc_mean, marker="o", color="#4878d0",
                          label="accuracy")
    if _has_band(entries, "final_accuracy"):
        ax_acc.fill_between(
            lams,
            [e["final_accuracy_min"] for e in entries],
            [e["final_accuracy_max"] for e in entries],
            alpha=0.15,
            color=line_a.get_color(),
        )
    line_r, = ax_ru.plot(lams, ru_mean, marker="s", color="#ee854a",
                         label="avg RU/s")
    if _has_band(entries, "total_ru_avg"):
        ax_ru.fill_between(
            lams,
            [e["total_ru_avg_min"] for e in entries],
            [e["total_ru_avg_max"] for e in entries],
            alpha=0.15,
            color=line_r.get_color(),
        )
    ax_acc.set_xlabel("peak data arrival rate")
    ax_acc.set_ylabel("final accuracy")
    ax_ru.set_ylabel("average resource units per second")
    ax_acc.set_title("Service quality and resource use vs arrival rate")
    ax_acc.legend(handles=[line_a, line_r], loc="lower right")
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return entries


def render(spec: PlotSpec) -> Path:
    """Render one figure plus its sidecar; returns the image path."""
    out_path = Path(spec.output_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    if spec.kind == "curves":
        rows = _read_csv(spec.input_csv, CURVE_COLUMNS)
        entries = _render_curves(rows, out_path)
    elif spec.kind == "ru_bars":
        rows = _read_csv(spec.input_csv, SUMMARY_COLUMNS)
        entries = _render_ru_bars(rows, out_path)
    else:
        rows = _read_csv(spec.input_csv, SUMMARY_COLUMNS)
        entries = _render_lambda_tradeoff(rows, out_path)
    _write_sidecar(sidecar_path(out_path), entries)
    return out_path
