"""Report persistence: canonical JSON, long-format CSV tables, and
rendered PNG figures side by side in one output directory."""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Any, Optional

from ..rationals import dumps_canonical, frac
from .comparison import APP_SERIES_FIELDS

ACTION_KINDS = ("consolidate", "replicate", "move")


def _num(value: Any) -> Optional[float]:
    if value is None:
        return None
    return float(frac(value))


def series_rows(report: dict) -> list[dict]:
    """(strategy, app, window, metric, value) long format."""
    rows = []
    for strategy, summary in sorted(report["strategies"].items()):
        for entry in summary["series"]:
            window = entry["window"]
            for app, metrics in sorted(entry["apps"].items()):
                for metric in APP_SERIES_FIELDS:
                    rows.append({
                        "strategy": strategy, "app": app,
                        "window_start": window["t_start"],
                        "window_end": window["t_end"],
                        "metric": metric,
                        "value": metrics.get(metric),
                    })
    return rows


def action_rows(report: dict) -> list[dict]:
    """(strategy, window, selected strategy, action kind, count)."""
    rows = []
    for strategy, summary in sorted(report["strategies"].items()):
        for entry in summary.get("timeline") or []:
            counts = {kind: 0 for kind in ACTION_KINDS}
            for action in entry["actions"]:
                counts[action["kind"]] += 1
            for kind in ACTION_KINDS:
                rows.append({
                    "strategy": strategy,
                    "window_index": entry["index"],
                    "window_start": entry["window"]["t_start"],
                    "selected": entry["strategy"],
                    "kind": kind,
                    "count": counts[kind],
                })
    return rows


def monitored_rows(report: dict) -> list[dict]:
    """Per-window monitored series for loop-driven strategies."""
    rows = []
    for strategy, summary in sorted(report["strategies"].items()):
        for entry in summary.get("timeline") or []:
            observed = entry["observed"]
            rows.append({
                "strategy": strategy,
                "window_index": entry["index"],
                "window_start": entry["window"]["t_start"],
                "selected": entry["strategy"],
                "overloaded_count": len(observed["overloaded"]),
                "congested_count": len(observed["congested"]),
                "degraded_count": len(observed["degraded"]),
                "placement_cost": observed["placement_cost"],
                "actions": len(entry["actions"]),
            })
    return rows


def summary_rows(report: dict) -> list[dict]:
    rows = []
    for strategy, summary in sorted(report["strategies"].items()):
        requests = summary.get("requests", {})
        rows.append({
            "strategy": strategy,
            "simulation_id": summary["simulation_id"],
            "final_clock": summary["final_clock"],
            "final_replicas": summary["final_replicas"],
            "placement_cost_total": summary["placement_cost_total"],
            "requests_total": requests.get("requests_total"),
            "requests_successful": requests.get("requests_successful"),
            "requests_unsuccessful": requests.get("requests_unsuccessful"),
            "actions_total": summary.get("actions_total", 0),
        })
    return rows


def _write_csv(path: Path, rows: list[dict]) -> None:
    if not rows:
        path.write_text("")
        return
    with path.open("w", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=list(rows[0]))
        writer.writeheader()
        for row in rows:
            writer.writerow({k: ("" if v is None else v)
                             for k, v in row.items()})


def render_decomposition_figure(report: dict, path: Path) -> None:
    """Rows = applications, columns = strategies; each panel shows the
    per-window response decomposition means."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    strategies = sorted(report["strategies"])
    apps = sorted({app for s in strategies
                   for entry in report["strategies"][s]["series"]
                   for app in entry["apps"]})
    if not strategies or not apps:
        return
    fig, axes = plt.subplots(len(apps), len(strategies),
                             figsize=(4 * len(strategies), 2.6 * len(apps)),
                             squeeze=False, sharex=True)
    components = [("network_mean", "tab:blue"),
                  ("waiting_mean", "tab:orange"),
                  ("processing_mean", "tab:green")]
    for col, strategy in enumerate(strategies):
        series = report["strategies"][strategy]["series"]
        xs = [_num(entry["window"]["t_start"]) for entry in series]
        for row, app in enumerate(apps):
            ax = axes[row][col]
            for metric, color in components:
                ys = [(_num(entry["apps"].get(app, {}).get(metric)) or 0.0)
                      for entry in series]
                ax.plot(xs, ys, label=metric.replace("_mean", ""),
                        color=color, linewidth=1.2)
            if row == 0:
                ax.set_title(strategy)
            if col == 0:
                ax.set_ylabel(app, fontsize=8)
    axes[0][0].legend(fontsize=7)
    for ax in axes[-1]:
        ax.set_xlabel("time")
    fig.suptitle("Response decomposition per window")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_timeline_figure(report: dict, path: Path,
                           strategy: str = "agent") -> bool:
    """Monitored series plus executed actions for a loop-driven run."""
    summary = report["strategies"].get(strategy)
    timeline = (summary or {}).get("timeline")
    if not timeline:
        return False
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    xs = [_num(entry["window"]["t_start"]) for entry in timeline]
    congested = [len(e["observed"]["congested"]) for e in timeline]
    overloaded = [len(e["observed"]["overloaded"]) for e in timeline]
    cost = [_num(e["observed"]["placement_cost"]) for e in timeline]

    fig, axes = plt.subplots(4, 1, figsize=(8, 7), sharex=True)
    axes[0].step(xs, congested, where="post", color="tab:red")
    axes[0].set_ylabel("congested")
    axes[1].step(xs, overloaded, where="post", color="tab:purple")
    axes[1].set_ylabel("overloaded")
    axes[2].plot(xs, cost, color="tab:brown")
    axes[2].set_ylabel("placement cost")
    kind_level = {kind: i for i, kind in enumerate(ACTION_KINDS)}
    for entry in timeline:
        x = _num(entry["window"]["t_start"])
        for action in entry["actions"]:
            axes[3].scatter([x], [kind_level[action["kind"]]], s=18,
                            color="tab:gray")
    axes[3].set_yticks(list(kind_level.values()))
    axes[3].set_yticklabels(list(kind_level))
    axes[3].set_ylim(-0.5, len(kind_level) - 0.5)
    axes[3].set_ylabel("actions")
    axes[3].set_xlabel("time")
    fig.suptitle(f"Control loop timeline ({strategy})")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return True


def write_report(report: dict, out_dir: str | Path,
                 figures: bool = True) -> list[Path]:
    """Persist one comparison report: report.json, the CSV tables, and
    (unless disabled) the rendered figures. Returns the written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    path = out / "report.json"
    path.write_text(dumps_canonical(report) + "\n")
    written.append(path)

    for name, rows in (("series.csv", series_rows(report)),
                       ("actions.csv", action_rows(report)),
                       ("monitored.csv", monitored_rows(report)),
                       ("summary.csv", summary_rows(report))):
        path = out / name
        _write_csv(path, rows)
        written.append(path)

    if figures:
        fig_path = out / "response_decomposition.png"
        render_decomposition_figure(report, fig_path)
        if fig_path.exists():
            written.append(fig_path)
        for strategy in ("agent", "control"):
            if (report["strategies"].get(strategy) or {}).get("timeline"):
                fig_path = out / f"timeline_{strategy}.png"
                if render_timeline_figure(report, fig_path, strategy):
                    written.append(fig_path)
    return written


def read_report(path: str | Path) -> dict:
    return json.loads(Path(path).read_text())
