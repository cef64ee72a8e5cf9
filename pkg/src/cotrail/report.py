"""CSV and SVG report emission for pipeline runs."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from cotrail.infotheory import SweepRow  # noqa: E402
from cotrail.seedexp import ExpansionTrace  # noqa: E402

_SVG_META = {"Date": None}  # keep SVG output reproducible


@dataclass
class EvalRow:
    """One test-partition evaluation of a seed-list iteration."""

    iteration: int
    auc: float
    n_activities: int
    relevant_users_per_converted_cluster: float


def write_sweep_csv(rows: list[SweepRow], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["s", "before_bits", "after_bits"])
        for r in rows:
            writer.writerow([r.org_size, f"{r.before_bits:.6f}", f"{r.after_bits:.6f}"])


def plot_sweep(rows: list[SweepRow], path) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    xs = [r.org_size for r in rows]
    ax.plot(xs, [r.before_bits for r in rows], marker="o", markersize=3,
            label="before augmentation")
    ax.plot(xs, [r.after_bits for r in rows], marker="s", markersize=3,
            label="after augmentation")
    ax.set_xlabel("organization size s")
    ax.set_ylabel("H(C|R) [bits]")
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata=_SVG_META)
    plt.close(fig)


def write_table1_csv(baseline: EvalRow, evals: list[EvalRow], path) -> None:
    """Per-iteration lifts against the empty-seed baseline.

    AUC lift is in absolute percentage points versus the empty-seed model;
    the activity-count lift is relative to the initial list (iteration 0).
    """
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["iteration", "auc_lift_pct", "n_activities_lift_pct",
                         "relevant_users_per_converted_cluster"])
        if not evals:
            return
        n0 = evals[0].n_activities
        for ev in evals:
            auc_lift = (ev.auc - baseline.auc) * 100.0
            act_lift = ((ev.n_activities - n0) / n0 * 100.0) if n0 else 0.0
            writer.writerow([ev.iteration, f"{auc_lift:.4f}", f"{act_lift:.4f}",
                             f"{ev.relevant_users_per_converted_cluster:.4f}"])


def plot_auc_lifts(baseline: EvalRow, evals: list[EvalRow], path) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    xs = [ev.iteration for ev in evals]
    lifts = [(ev.auc - baseline.auc) * 100.0 for ev in evals]
    ax.bar(xs, lifts, color="#3b6ea5")
    ax.set_xlabel("seed-list iteration")
    ax.set_ylabel("AUC lift over empty-seed baseline [pct points]")
    ax.set_xticks(xs)
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata=_SVG_META)
    plt.close(fig)


def emit_report(trace: ExpansionTrace, baseline: EvalRow, evals: list[EvalRow],
                sweep_rows: list[SweepRow], out_dir) -> list[Path]:
    """Write table1.csv, fig4.svg and fig3.svg under ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    table1 = out / "table1.csv"
    write_table1_csv(baseline, evals, table1)
    fig4 = out / "fig4.svg"
    plot_auc_lifts(baseline, evals, fig4)
    fig3 = out / "fig3.svg"
    plot_sweep(sweep_rows, fig3)
    return [table1, fig4, fig3]
