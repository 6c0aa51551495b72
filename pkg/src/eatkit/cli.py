"""Command-line front end for the certification workflow.

Subcommands follow the pipeline order: ``validate`` and ``parse-data`` turn
a data config plus ``.dat`` files into aggregated counts, ``mintradeoff``
runs the relaxations, ``rates`` sweeps the finite-size bound, ``plot-data``
exports a 2D grid for plotting, and ``serve`` starts the local service.

Exit codes: 0 success, 2 validation error, 3 solver failure, 4 I/O error.
"""

from __future__ import annotations

import json
import math
import sys

import click

from .bell import BellParseError, parse_expression
from .eat import DEFAULT_BETA_EXPONENTS
from .ingest import (IngestError, counts_to_behavior, expression_value_with_error,
                     parse_data_config, parse_data_files)
from .persistence import (EdqDocument, SchemaError, counts_from_payload,
                          document_for, load_stage, save_stage,
                          sweep_from_payload)
from .pipeline import MinTradeoffInfo, calculate_min_tradeoff
from .relaxations import InfeasibleTargets, RelaxationError

EXIT_VALIDATION = 2
EXIT_SOLVER = 3
EXIT_IO = 4


def _read(path: str) -> str:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return fh.read()
    except OSError as e:
        click.echo(f"error: cannot read {path}: {e}", err=True)
        sys.exit(EXIT_IO)


def _load(path: str, kind: str) -> EdqDocument:
    try:
        return load_stage(path, kind)
    except OSError as e:
        click.echo(f"error: cannot read {path}: {e}", err=True)
        sys.exit(EXIT_IO)
    except SchemaError as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(EXIT_VALIDATION)


def _save(doc: EdqDocument, path: str):
    try:
        save_stage(doc, path)
    except OSError as e:
        click.echo(f"error: cannot write {path}: {e}", err=True)
        sys.exit(EXIT_IO)


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


@click.group()
def main():
    """Finite-size randomness and key rates for device-independent protocols."""


@main.command()
@click.option("--config", "config_path", required=True, type=str)
def validate(config_path):
    """Check a data-config JSON file."""
    try:
        cfg = parse_data_config(_read(config_path))
    except IngestError as e:
        click.echo(f"invalid: {e}", err=True)
        sys.exit(EXIT_VALIDATION)
    click.echo(f"ok: {cfg.scenario.settings_a}x{cfg.scenario.settings_b} "
               f"setting pairs, data directory {cfg.directory_with_datafiles!r}")


@main.command(name="parse-data")
@click.option("--config", "config_path", required=True, type=str)
@click.option("--data-dir", "data_dir", default=None, type=str,
              help="Override the directory named in the config.")
@click.option("--out", "out_path", required=True, type=str)
def parse_data(config_path, data_dir, out_path):
    """Aggregate all .dat files into per-setting-pair counts."""
    try:
        cfg = parse_data_config(_read(config_path))
        counts = parse_data_files(cfg, directory=data_dir)
        behavior, events = counts_to_behavior(counts)
    except IngestError as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(EXIT_VALIDATION)
    _save(document_for(counts), out_path)
    click.echo(f"files read: {counts.files_read}")
    click.echo(f"rows ignored: {counts.ignored_rows_metadata} (metadata), "
               f"{counts.ignored_rows_unknown_tag} (unknown tag), "
               f"{counts.ignored_rows_short} (short)")
    click.echo(f"events per second: {events!r}")
    click.echo(f"max no-signaling discrepancy: "
               f"{behavior.no_signaling.max_discrepancy!r}")
    click.echo(f"wrote {out_path}")


@main.command()
@click.option("--eber", "eber_path", default=None, type=str,
              help="Aggregated counts (.edq) for data-driven certificates.")
@click.option("--certificate", "certificates", multiple=True, required=True)
@click.option("--value", "values", multiple=True, type=float,
              help="Certificate value; omit to evaluate from data.")
@click.option("--a-config", default=None, type=str)
@click.option("--b-config", default=None, type=str)
@click.option("--spot", required=True, type=str, help="x,y generation setting")
@click.option("--entropy", type=click.Choice(["min", "vn"]), default="min")
@click.option("--use-case", type=click.Choice(["rng", "qkd"]), default="rng")
@click.option("--level", default=2, type=int)
@click.option("--m-radau", default=8, type=int)
@click.option("--hab", default=None, type=str,
              help='H(A|B) entries like "(0,2):0.01" separated by ";"')
@click.option("--confidence", default=0.99, type=float)
@click.option("--no-derate", is_flag=True, default=False,
              help="Use raw data values without subtracting the error bar.")
@click.option("--guess", type=click.Choice(["pair", "alice"]), default="pair")
@click.option("--nickname", default="", type=str)
@click.option("--out", "out_path", required=True, type=str)
def mintradeoff(eber_path, certificates, values, a_config, b_config, spot,
                entropy, use_case, level, m_radau, hab, confidence, no_derate,
                guess, nickname, out_path):
    """Compute the affine entropy tradeoff from certificates."""
    counts = None
    if eber_path is not None:
        doc = _load(eber_path, "eber-data")
        try:
            counts = counts_from_payload(doc.payload)
        except SchemaError as e:
            click.echo(f"error: {e}", err=True)
            sys.exit(EXIT_VALIDATION)
        scenario_cfg = (list(counts.scenario.a_config),
                        list(counts.scenario.b_config))
    if a_config is not None and b_config is not None:
        scenario_cfg = ([int(v) for v in a_config.split(",")],
                        [int(v) for v in b_config.split(",")])
    elif counts is None:
        click.echo("error: provide --eber or both --a-config and --b-config",
                   err=True)
        sys.exit(EXIT_VALIDATION)

    from .scenario import Scenario
    scenario = Scenario(tuple(scenario_cfg[0]), tuple(scenario_cfg[1]))
    cert_values = list(values)
    if not cert_values:
        if counts is None:
            click.echo("error: give --value per certificate or an --eber file",
                       err=True)
            sys.exit(EXIT_VALIDATION)
        for text in certificates:
            try:
                expr = parse_expression(text, scenario)
            except BellParseError as e:
                click.echo(f"error: {e}", err=True)
                sys.exit(EXIT_VALIDATION)
            value, half = expression_value_with_error(expr, counts, confidence)
            target = value if no_derate else value - half
            click.echo(f"{text}: value {value!r}, half-width {half!r}, "
                       f"target {target!r}")
            cert_values.append(target)
    if len(cert_values) != len(certificates):
        click.echo("error: need one --value per --certificate", err=True)
        sys.exit(EXIT_VALIDATION)

    hab_dict = {}
    if hab:
        for item in hab.split(";"):
            key, val = item.split(":")
            x, y = key.replace("(", "").replace(")", "").split(",")
            hab_dict[(int(x), int(y))] = float(val)
    spot_pair = tuple(int(v) for v in spot.split(","))

    try:
        info = calculate_min_tradeoff(
            list(certificates), cert_values, scenario_cfg[0], scenario_cfg[1],
            spot_pair, relaxation_level=level, m_radau=m_radau,
            entropy_type_str=("min-entropy" if entropy == "min"
                              else "von Neumann entropy"),
            use_case_str=("Randomness Generation" if use_case == "rng"
                          else "Key Distribution"),
            hab_dict=hab_dict, setup_nickname=nickname, guess=guess,
            progress=lambda s: click.echo(f"  .. {s}", err=True))
    except (BellParseError, ValueError) as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(EXIT_VALIDATION)
    except (InfeasibleTargets, RelaxationError) as e:
        click.echo(f"solver error: {e}", err=True)
        sys.exit(EXIT_SOLVER)
    _save(document_for(info), out_path)
    click.echo(f"certificate value: {info.certificate_value!r}")
    click.echo(f"asymptotic keyrate: {info.asymptotic_keyrate!r}")
    click.echo(f"diameter of min-tradeoff: {info.diameter!r}")
    click.echo(f"wrote {out_path}")


@main.command()
@click.option("--mt", "mt_path", required=True, type=str)
@click.option("--chunk-time", required=True, type=str)
@click.option("--events-per-sec", required=True, type=str)
@click.option("--eps-s", required=True, type=str)
@click.option("--p-omega", required=True, type=str)
@click.option("--gamma", required=True, type=str)
@click.option("--switch-delay", default=0.0, type=float)
@click.option("--subtract-consumption", is_flag=True, default=False)
@click.option("--beta-max", default=DEFAULT_BETA_EXPONENTS[-1], type=int,
              help="Largest -log2(beta) on the grid.")
@click.option("--out", "out_path", required=True, type=str)
def rates(mt_path, chunk_time, events_per_sec, eps_s, p_omega, gamma,
          switch_delay, subtract_consumption, beta_max, out_path):
    """Finite-size net gain over the Cartesian product of parameter lists."""
    doc = _load(mt_path, "min-tradeoff")
    info = MinTradeoffInfo.from_str(json.dumps(doc.payload))
    try:
        result = info.calculate_eat_rates(
            _floats(chunk_time), _floats(events_per_sec), _floats(eps_s),
            _floats(p_omega), _floats(gamma), switch_delay=switch_delay,
            subtract_consumption_for_test_rounds=subtract_consumption,
            beta_exponents=range(1, beta_max + 1))
    except ValueError as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(EXIT_VALIDATION)
    _save(EdqDocument("sweep-result",
                      json.loads(result.to_json()),
                      setup_nickname=info.setup_nickname), out_path)
    best = result.best
    click.echo(f"asymptotic rate per event: {info.asymptotic_keyrate!r}")
    click.echo(f"net gain per second: {best.net_gain_per_second!r}")
    summary = dict(result.tradeoff_summary)
    summary.update({
        "epsS": best.eps_s, "events per second": best.events_per_second,
        "single data chunk generation time": best.chunk_time,
        "pOmega": best.p_omega, "-log beta": float(best.minus_log2_beta),
        "test round probability": best.gamma,
    })
    click.echo(json.dumps(summary, indent=2))
    click.echo(f"wrote {out_path}")


@main.command(name="plot-data")
@click.option("--sweep", "sweep_path", required=True, type=str)
@click.option("--x", "x_axis", required=True, type=str)
@click.option("--y", "y_axis", required=True, type=str)
@click.option("--out", "out_path", required=True, type=str)
def plot_data(sweep_path, x_axis, y_axis, out_path):
    """Export the 2D net-gain grid behind a sweep as CSV."""
    doc = _load(sweep_path, "sweep-result")
    try:
        result = sweep_from_payload(doc.payload)
    except SchemaError as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(EXIT_VALIDATION)
    axes = {
        "-log-beta": lambda c: c.minus_log2_beta,
        "gamma": lambda c: c.gamma,
        "chunk-time": lambda c: c.chunk_time,
        "events-per-sec": lambda c: c.events_per_second,
        "eps-s": lambda c: c.eps_s,
        "p-omega": lambda c: c.p_omega,
    }
    if x_axis not in axes or y_axis not in axes:
        click.echo(f"error: axes must be among {sorted(axes)}", err=True)
        sys.exit(EXIT_VALIDATION)
    if x_axis == y_axis:
        click.echo("error: x and y axes must differ", err=True)
        sys.exit(EXIT_VALIDATION)
    lines = [f"{x_axis},{y_axis},net_gain_per_second"]
    for cell in doc.payload.get("cells", []):
        c = sweep_from_payload({"cells": [cell], "best": cell}).cells[0]
        lines.append(f"{axes[x_axis](c)!r},{axes[y_axis](c)!r},"
                     f"{c.net_gain_per_second!r}")
    try:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as e:
        click.echo(f"error: cannot write {out_path}: {e}", err=True)
        sys.exit(EXIT_IO)
    click.echo(f"wrote {out_path} ({len(lines) - 1} cells)")


@main.command()
@click.option("--port", default=8741, type=int)
@click.option("--host", default="127.0.0.1", type=str)
@click.option("--state-dir", default=None, type=str)
def serve(port, host, state_dir):
    """Run the local HTTP service for the web UI."""
    from .service import serve as run_service
    run_service(bind_address=host, port=port, state_directory=state_dir)


if __name__ == "__main__":
    main()
