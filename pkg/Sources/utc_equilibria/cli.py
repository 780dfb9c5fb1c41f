# MIT License
# Copyright (c) 2025 Ronnie Garrison
"""
utc-eq: experiment harness for linear-swap regret dynamics.

    utc-eq run --game kuhn:P=2,D=3 --iters 1000 --out runs/kuhn23
    utc-eq bench --game fig1 --game kuhn:P=2,D=3 --iters 200
    utc-eq describe leduc:P=2,R=3,S=2
    utc-eq export-game sheriff:N=1,B=1,R=1 sheriff.json
    utc-eq export-dag fig3 --player 0 fig3_p0.graphml
"""
from __future__ import annotations

import csv
import io
import logging
import re
import time
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Sequence

import click
import numpy as np
import psutil
from rich.console import Console
from rich.table import Table
from tqdm import tqdm

from .config import RunConfig, load_run_configs
from .errors import (
    ConfigError,
    EnumerationLimitError,
    FixedPointError,
    InfeasibleStrategyError,
    MalformedGameError,
    PerfectRecallError,
    UtcEquilibriaError,
)
from .evaluation import best_response_value, gap_report
from .games import GameSpec, build_game, save_game
from .io_utils import atomic_write_text, write_json
from .learning import Dynamics, IterationRecord
from .logs import setup_logger
from .utc import build_utc_dag, count_pure_deviations, write_deviation, write_graphml

logger = logging.getLogger(__name__)
console = Console()

DESCRIBE_DAG_LIMIT = 200_000
DEFAULT_WARMUP = 10


# ===== Exit codes =====
class ConfigFailure(click.ClickException):
    exit_code = 2


class NumericalFailure(click.ClickException):
    exit_code = 3


class ResourceFailure(click.ClickException):
    exit_code = 4


@contextmanager
def _exit_codes() -> Iterator[None]:
    try:
        yield
    except (ConfigError, MalformedGameError, PerfectRecallError, EnumerationLimitError) as exc:
        logger.error("%s", exc)
        raise ConfigFailure(str(exc)) from exc
    except (FixedPointError, InfeasibleStrategyError) as exc:
        logger.error("numerical failure: %s %s", exc, exc.context or "")
        raise NumericalFailure(str(exc)) from exc
    except UtcEquilibriaError as exc:
        logger.error("%s", exc)
        raise click.ClickException(str(exc)) from exc


# ===== Helpers =====
def csv_header(num_players: int) -> List[str]:
    return (
        ["t", "wall_ms", "iter_ms_mean", "iter_ms_std", "gap_max", "gap_sum"]
        + [f"gap_p{i + 1}" for i in range(num_players)]
        + ["ext_gap_max", "fp_residual_max"]
    )


def _fmt(value: float) -> str:
    return f"{value:.12g}"


def _default_out(spec: str) -> Path:
    return Path("runs") / re.sub(r"[^A-Za-z0-9_.-]+", "_", spec).strip("_")


def _peak_rss_mb(current: float) -> float:
    return max(current, psutil.Process().memory_info().rss / (1024 * 1024))


def execute_run(config: RunConfig, quiet: bool = False) -> Dict[str, Any]:
    """Run the dynamics for one config and write run.csv / summary.json (and deviations)."""
    spec = GameSpec.parse(config.game)
    game = spec.build()
    out = config.out if config.out is not None else _default_out(str(spec))
    summary_game = game.summary()
    logger.info("game %s: %d terminal states, d=%s", spec, summary_game["terminal_states"], summary_game["d_per_player"])

    dynamics = Dynamics(game, config)
    rows: List[List[str]] = []
    window_ms: List[float] = []
    window_fp: List[float] = []
    last: Optional[IterationRecord] = None
    peak_rss = _peak_rss_mb(0.0)
    started = time.perf_counter()
    records = tqdm(dynamics.run(), total=config.iters, desc=str(spec), disable=quiet, unit="it")
    for record in records:
        last = record
        window_ms.append(record.wall_ms)
        window_fp.append(record.fp_residual_max)
        if record.gaps is None:
            continue
        peak_rss = _peak_rss_mb(peak_rss)
        report = record.gaps
        if config.timing:
            timing = [(time.perf_counter() - started) * 1000.0, float(np.mean(window_ms)), float(np.std(window_ms))]
        else:
            timing = [0.0, 0.0, 0.0]
        rows.append(
            [str(record.t)] + [_fmt(v) for v in timing]
            + [_fmt(report.gap_max), _fmt(report.gap_sum)]
            + [_fmt(g) for g in report.gaps]
            + [_fmt(report.ext_gap_max), _fmt(max(window_fp))]
        )
        records.set_postfix(gap=f"{report.gap_max:.3g}")
        window_ms, window_fp = [], []
    total_time = time.perf_counter() - started

    if last is None:
        raise ResourceFailure(f"time limit of {config.time_limit}s reached before the first iteration completed")

    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(csv_header(game.num_players))
    writer.writerows(rows)
    atomic_write_text(Path(out) / "run.csv", buffer.getvalue())

    final = dynamics.accumulator
    final_report = last.gaps if last.gaps is not None else gap_report(final, dynamics.dags, dynamics.tfdps)
    summary: Dict[str, Any] = {
        "game": str(spec),
        "algo": config.algo,
        "seed": config.seed,
        "normalize": config.normalize,
        "terminal_states": summary_game["terminal_states"],
        "d_per_player": summary_game["d_per_player"],
        "dag_nodes_per_player": [dag.num_nodes for dag in dynamics.dags],
        "iterations_completed": dynamics.t,
        "termination": dynamics.termination,
        "total_time": total_time if config.timing else 0.0,
        "final_gaps": final_report.to_record(),
        "average_utilities": list(final.average_utilities()),
        "peak_rss_mb": peak_rss,
    }
    write_json(Path(out) / "summary.json", summary)

    if config.export_deviations:
        for i, dag in enumerate(dynamics.dags):
            best = best_response_value(dag, final.G_bar[i])
            write_deviation(Path(out) / "deviations" / f"p{i + 1}.json", best.deviation, dag)
    logger.info("run finished: %d iterations (%s), gap_max=%.6g, artifacts in %s",
                dynamics.t, dynamics.termination, final_report.gap_max, out)
    return summary


def bench_config(config: RunConfig, warmup: int) -> Dict[str, Any]:
    """Run `warmup` untimed iterations, then `config.iters` measured ones."""
    game = build_game(config.game)
    total = config.iters + warmup
    dynamics = Dynamics(game, config.model_copy(update={"iters": total, "log_every": total}))
    times = [record.wall_ms for record in dynamics.run()]
    window = times[warmup:] if len(times) > warmup else times
    return {
        "game": config.game,
        "algo": config.algo,
        "iterations": len(times),
        "warmup": min(warmup, len(times)),
        "iter_ms_mean": float(np.mean(window)),
        "iter_ms_std": float(np.std(window)),
    }


# ===== CLI =====
@click.group()
@click.option("--verbose", is_flag=True, help="Enable debug logging")
@click.option("--log-file", type=click.Path(dir_okay=False), help="Also log to a rotating file")
def cli(verbose: bool, log_file: Optional[str]) -> None:
    """Learn linear correlated equilibria with UTC deviations."""
    setup_logger(log_file=log_file, level=logging.DEBUG if verbose else logging.INFO)


@cli.command("run")
@click.option("--game", "game", help="Game spec, e.g. kuhn:P=2,D=3 or file:game.json")
@click.option("--algo", type=click.Choice(["utc-cfr-rm+", "utc-cfr-rm"]), help="Local regret minimizer")
@click.option("--iters", type=int, help="Iteration limit")
@click.option("--time-limit", type=float, help="Wall-clock limit in seconds")
@click.option("--seed", type=int, help="Random seed")
@click.option("--eps-fp", type=float, help="Fixed-point tolerance")
@click.option("--log-every", type=int, help="Gap evaluation cadence")
@click.option("--out", type=click.Path(file_okay=False), help="Output directory")
@click.option("--no-timing", is_flag=True, help="Write zeros in the timing columns")
@click.option("--normalize", is_flag=True, help="Learn from utilities rescaled to [0, 1]")
@click.option("--config", "config_path", type=click.Path(dir_okay=False), help="YAML run config")
@click.option("--export-deviations", is_flag=True, help="Write each player's best deviation")
@click.option("--quiet", is_flag=True, help="Hide the progress bar")
def run_command(
    game: Optional[str], algo: Optional[str], iters: Optional[int], time_limit: Optional[float],
    seed: Optional[int], eps_fp: Optional[float], log_every: Optional[int], out: Optional[str],
    no_timing: bool, normalize: bool, config_path: Optional[str], export_deviations: bool, quiet: bool,
) -> None:
    """Run the learning dynamics and write run.csv and summary.json."""
    overrides = {
        "game": game, "algo": algo, "iters": iters, "time_limit": time_limit, "seed": seed,
        "eps_fp": eps_fp, "log_every": log_every, "out": out,
        "timing": False if no_timing else None,
        "normalize": True if normalize else None,
        "export_deviations": True if export_deviations else None,
    }
    with _exit_codes():
        if config_path:
            configs = load_run_configs(config_path, **{k: v for k, v in overrides.items() if v is not None})
        elif game is None:
            raise ConfigError("either --game or --config is required")
        else:
            configs = [RunConfig.create(**overrides)]
        for config in configs:
            summary = execute_run(config, quiet=quiet)
            if not quiet:
                click.echo(
                    f"{summary['game']}: {summary['iterations_completed']} iterations "
                    f"({summary['termination']}), gap_max={summary['final_gaps']['gap_max']:.6g}"
                )


@cli.command("bench")
@click.option("--game", "games", multiple=True, help="Game spec (repeatable)")
@click.option("--config", "config_path", type=click.Path(dir_okay=False), help="YAML list of runs")
@click.option("--iters", type=int, default=100, show_default=True, help="Measured iterations per config")
@click.option("--warmup", type=int, default=DEFAULT_WARMUP, show_default=True, help="Iterations excluded from timing")
@click.option("--algo", type=click.Choice(["utc-cfr-rm+", "utc-cfr-rm"]), default="utc-cfr-rm+", show_default=True)
@click.option("--out", type=click.Path(file_okay=False), help="Directory for bench.json")
def bench_command(
    games: Sequence[str], config_path: Optional[str], iters: int, warmup: int, algo: str, out: Optional[str]
) -> None:
    """Time iterations per config (configs run one after another)."""
    with _exit_codes():
        if config_path:
            configs = load_run_configs(config_path)
        elif games:
            configs = [RunConfig.create(game=g, algo=algo, iters=iters) for g in games]
        else:
            raise ConfigError("bench needs at least one --game or a --config")
        results = [bench_config(c, warmup) for c in configs]

    table = Table(title="Iteration time")
    table.add_column("Game", style="cyan")
    table.add_column("Algorithm")
    table.add_column("Iterations", justify="right")
    table.add_column("ms / iteration", justify="right")
    for r in results:
        table.add_row(r["game"], r["algo"], str(r["iterations"]), f"{r['iter_ms_mean']:.3f} ± {r['iter_ms_std']:.3f}")
    console.print(table)
    if out:
        write_json(Path(out) / "bench.json", {"results": results})
        logger.info("bench results written to %s", Path(out) / "bench.json")


@cli.command("describe")
@click.argument("game_spec")
def describe_command(game_spec: str) -> None:
    """Print game and UTC DAG sizes."""
    with _exit_codes():
        game = build_game(game_spec)
        summary = game.summary()
        table = Table(title=f"{game_spec}: {summary['terminal_states']} terminal states, {summary['nodes']} nodes")
        for column in ("Player", "Infosets", "d", "DAG nodes", "DAG full", "Pure deviations"):
            table.add_column(column, justify="right")
        for i, tfdp in enumerate(game.sequence_form.tfdps):
            full = tfdp.d * tfdp.d + tfdp.num_decision_points * (tfdp.num_decision_points + tfdp.d)
            if full > DESCRIBE_DAG_LIMIT:
                table.add_row(str(i + 1), str(tfdp.num_decision_points), str(tfdp.d), "-", str(full), "-")
                continue
            dag = build_utc_dag(tfdp)
            pure = 1
            for size in count_pure_deviations(dag):
                pure *= size
            table.add_row(
                str(i + 1), str(tfdp.num_decision_points), str(tfdp.d),
                str(dag.num_nodes), str(full), f"{pure:.3e}" if pure >= 10**9 else str(pure),
            )
    console.print(table)


@cli.command("export-game")
@click.argument("game_spec")
@click.argument("path", type=click.Path(dir_okay=False))
def export_game_command(game_spec: str, path: str) -> None:
    """Write a game as a JSON document."""
    with _exit_codes():
        target = save_game(build_game(game_spec), path)
    click.echo(str(target))


@cli.command("export-dag")
@click.argument("game_spec")
@click.argument("path", type=click.Path(dir_okay=False))
@click.option("--player", type=int, default=0, show_default=True, help="Zero-based player index")
def export_dag_command(game_spec: str, path: str, player: int) -> None:
    """Write one player's UTC DAG as GraphML."""
    with _exit_codes():
        game = build_game(game_spec)
        if not 0 <= player < game.num_players:
            raise ConfigError(f"player must be in [0, {game.num_players - 1}] (got {player})")
        target = write_graphml(build_utc_dag(game.tfdp(player)), path)
    click.echo(str(target))


def main() -> None:
    cli(prog_name="utc-eq")


if __name__ == "__main__":
    main()
