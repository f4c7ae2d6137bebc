"""Command-line front end: build scenarios, run strategies, compare them,
and re-export reports (CSV tables plus rendered figures)."""

from __future__ import annotations

import json
from pathlib import Path

import click

from . import __version__
from .agents import AgentConfig
from .rationals import frac, jsonable
from .scenario import (build_scenario_documents, default_documents,
                       desk_profile, full_profile, read_report,
                       read_scenario, run_comparison, write_report,
                       write_scenario)

PROFILES = ("desk", "full", "default")
STRATEGY_CHOICES = ("random", "greedy", "agent", "control")


def _documents(scenario_dir, profile, seed, clusters, nodes_per_cluster):
    if scenario_dir:
        return read_scenario(scenario_dir)
    if profile == "full":
        return build_scenario_documents(full_profile(), seed)
    if profile == "default":
        return default_documents(clusters=clusters,
                                 nodes_per_cluster=nodes_per_cluster,
                                 seed=seed)
    return build_scenario_documents(desk_profile(), seed)


def _agent_config(path, window_length):
    doc = json.loads(Path(path).read_text()) if path else {}
    if window_length is not None and "window_length" not in doc:
        doc["window_length"] = window_length
    return AgentConfig.from_document(doc)


def _echo_summary(report: dict) -> None:
    click.echo(f"{'strategy':<10} {'replicas':>8} {'cost':>10} "
               f"{'ok/total':>13} {'actions':>8}")
    for strategy, summary in sorted(report["strategies"].items()):
        requests = summary.get("requests", {})
        ok = requests.get("requests_successful", 0)
        total = requests.get("requests_total", 0)
        cost = float(frac(summary["placement_cost_total"]))
        click.echo(f"{strategy:<10} {summary['final_replicas']:>8} "
                   f"{cost:>10.3f} {f'{ok}/{total}':>13} "
                   f"{summary.get('actions_total', 0):>8}")
    click.echo(f"workload equivalent across runs: "
               f"{report['workload_equivalent']}")


seed_option = click.option("--seed", default=0, show_default=True,
                           help="scenario and placement seed")
scenario_option = click.option("--scenario", "scenario_dir",
                               type=click.Path(exists=True, file_okay=False),
                               help="scenario directory from `build`")
profile_option = click.option("--profile", type=click.Choice(PROFILES),
                              default="desk", show_default=True)
horizon_option = click.option("--horizon", default=None,
                              help="simulation end time (scenario default)")
window_option = click.option("--window", "window_length", default=None,
                             help="actionable window length "
                                  "(scenario default)")
agent_config_option = click.option("--agent-config", "agent_config_path",
                                   type=click.Path(exists=True, dir_okay=False),
                                   help="JSON overrides for thresholds, "
                                        "weights, and budget")
chains_option = click.option("--chains", default=20, show_default=True,
                             help="shared chains for random placement")
out_option = click.option("--out", "out_dir", type=click.Path(),
                          required=True, help="output directory")
figures_option = click.option("--figures/--no-figures", default=True,
                              show_default=True)


@click.group()
@click.version_option(version=__version__, prog_name="edgesim")
def main():
    """Cloud-edge simulation scenarios, strategy runs, and reports."""


@main.command()
@profile_option
@seed_option
@click.option("--clusters", default=3, show_default=True,
              help="cluster count for the default profile")
@click.option("--nodes-per-cluster", default=10, show_default=True,
              help="nodes per cluster for the default profile")
@out_option
def build(profile, seed, clusters, nodes_per_cluster, out_dir):
    """Write scenario documents (topology, applications, users,
    processes, placements) to a directory."""
    docs = _documents(None, profile, seed, clusters, nodes_per_cluster)
    write_scenario(out_dir, docs)
    topology = docs["topology"]
    total = sum(len(c["nodes"]) for c in topology["clusters"])
    click.echo(f"wrote scenario '{docs['profile']}' "
               f"({len(topology['clusters'])} clusters, {total} nodes, "
               f"seed {jsonable(docs['seed'])}) to {out_dir}")


def _run_strategies(scenario_dir, profile, seed, clusters, nodes_per_cluster,
                    strategies, horizon, window_length, agent_config_path,
                    chains, out_dir, figures):
    docs = _documents(scenario_dir, profile, seed, clusters,
                      nodes_per_cluster)
    config = _agent_config(
        agent_config_path,
        window_length if window_length is not None
        else docs.get("window_length"))
    report = run_comparison(
        docs, strategies=strategies,
        horizon=frac(horizon) if horizon is not None else None,
        window_length=frac(window_length) if window_length is not None else None,
        seed=seed, chains=chains, config=config)
    paths = write_report(report, out_dir, figures=figures)
    _echo_summary(report)
    for path in paths:
        click.echo(f"  {path}")
    return report


@main.command()
@scenario_option
@profile_option
@seed_option
@click.option("--clusters", default=3, show_default=True)
@click.option("--nodes-per-cluster", default=10, show_default=True)
@click.option("--strategy", type=click.Choice(STRATEGY_CHOICES),
              default="agent", show_default=True)
@horizon_option
@window_option
@agent_config_option
@chains_option
@out_option
@figures_option
def run(scenario_dir, profile, seed, clusters, nodes_per_cluster, strategy,
        horizon, window_length, agent_config_path, chains, out_dir, figures):
    """Run one placement strategy end to end and export its report."""
    _run_strategies(scenario_dir, profile, seed, clusters, nodes_per_cluster,
                    (strategy,), horizon, window_length, agent_config_path,
                    chains, out_dir, figures)


@main.command()
@scenario_option
@profile_option
@seed_option
@click.option("--clusters", default=3, show_default=True)
@click.option("--nodes-per-cluster", default=10, show_default=True)
@click.option("--strategies", default="random,greedy,agent",
              show_default=True, help="comma-separated strategy set")
@horizon_option
@window_option
@agent_config_option
@chains_option
@out_option
@figures_option
def compare(scenario_dir, profile, seed, clusters, nodes_per_cluster,
            strategies, horizon, window_length, agent_config_path, chains,
            out_dir, figures):
    """Run several strategies on one workload realization and compare."""
    names = tuple(s.strip() for s in strategies.split(",") if s.strip())
    bad = [s for s in names if s not in STRATEGY_CHOICES]
    if bad:
        raise click.BadParameter(f"unknown strategies: {bad}")
    _run_strategies(scenario_dir, profile, seed, clusters, nodes_per_cluster,
                    names, horizon, window_length, agent_config_path,
                    chains, out_dir, figures)


@main.command()
@click.option("--report", "report_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="stored report.json")
@out_option
@figures_option
def export(report_path, out_dir, figures):
    """Re-export the CSV tables and figures from a stored report."""
    report = read_report(report_path)
    paths = write_report(report, out_dir, figures=figures)
    for path in paths:
        click.echo(f"  {path}")


if __name__ == "__main__":
    main()
