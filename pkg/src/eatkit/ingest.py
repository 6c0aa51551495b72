"""Data-config parsing and aggregation of experimental click-count files.

A data config (JSON) maps columns of whitespace-separated integer ``.dat``
files onto setting pairs, single-detector click counts and coincidence
counts.  Every accepted row is summed into per-setting-pair totals; rows
whose metadata column differs from the configured value are skipped.
All column indices in the JSON are 1-based.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .bell import BellExpression
from .scenario import BehaviorDistribution, Scenario

__all__ = [
    "DataConfig",
    "AggregatedCounts",
    "IngestError",
    "parse_data_config",
    "parse_data_files",
    "counts_to_behavior",
    "expression_value_with_error",
]


class IngestError(ValueError):
    pass


_REQUIRED_FIELDS = [
    "A_config", "B_config", "settings_indices", "alice_clicks_column",
    "bob_clicks_column", "alice_bob_clicks_column", "time_per_line",
    "setting_column_number", "meta_data_column_number", "meta_data_column_value",
    "directory_with_datafiles",
]


@dataclass
class DataConfig:
    """Column layout of the experimental data files (mirrors the JSON)."""

    a_config: list[int]
    b_config: list[int]
    settings_indices: list[list[int]]
    alice_clicks_column: list[int]
    bob_clicks_column: list[int]
    alice_bob_clicks_column: list[list[int]]
    time_per_line: float
    setting_column_number: int
    meta_data_column_number: int
    meta_data_column_value: int
    directory_with_datafiles: str
    setup_nickname: str = ""
    human_description: str = ""
    additional_data_dict: dict = field(default_factory=dict)

    @property
    def scenario(self) -> Scenario:
        return Scenario(tuple(self.a_config), tuple(self.b_config))

    def validate(self) -> None:
        sc = self.scenario
        rows, cols = sc.settings_a, sc.settings_b
        if len(self.settings_indices) != rows or any(
                len(r) != cols for r in self.settings_indices):
            raise IngestError(
                f"settings_indices must be a {rows}x{cols} matrix matching "
                "A_config x B_config")
        tags = [t for row in self.settings_indices for t in row]
        if len(set(tags)) != len(tags):
            raise IngestError("settings_indices contains duplicate tags")
        if any(t <= 0 for t in tags):
            raise IngestError("settings_indices tags must be positive")
        if self.time_per_line <= 0:
            raise IngestError("time_per_line must be positive")
        if len(self.alice_clicks_column) != sc.outcomes_a:
            raise IngestError(
                f"alice_clicks_column needs {sc.outcomes_a} entries (one per outcome)")
        if len(self.bob_clicks_column) != sc.outcomes_b:
            raise IngestError(
                f"bob_clicks_column needs {sc.outcomes_b} entries (one per outcome)")
        if len(self.alice_bob_clicks_column) != sc.outcomes_a or any(
                len(r) != sc.outcomes_b for r in self.alice_bob_clicks_column):
            raise IngestError(
                f"alice_bob_clicks_column must be {sc.outcomes_a}x{sc.outcomes_b}")
        structural = [self.setting_column_number, self.meta_data_column_number]
        clicks = (self.alice_clicks_column + self.bob_clicks_column
                  + [c for row in self.alice_bob_clicks_column for c in row])
        for c in structural + clicks:
            if c < 1:
                raise IngestError(f"column index {c} is not 1-based positive")
        if len(set(structural + clicks)) != len(structural + clicks):
            raise IngestError("column indices overlap between roles")

    def to_dict(self) -> dict:
        sc = self.scenario
        return {
            "A_config": list(self.a_config),
            "B_config": list(self.b_config),
            "AO": sc.outcomes_a,
            "BO": sc.outcomes_b,
            "AS": sc.settings_a,
            "BS": sc.settings_b,
            "settings_indices": [list(r) for r in self.settings_indices],
            "alice_clicks_column": list(self.alice_clicks_column),
            "bob_clicks_column": list(self.bob_clicks_column),
            "alice_bob_clicks_column": [list(r) for r in self.alice_bob_clicks_column],
            "time_per_line": self.time_per_line,
            "setting_column_number": self.setting_column_number,
            "meta_data_column_number": self.meta_data_column_number,
            "meta_data_column_value": self.meta_data_column_value,
            "directory_with_datafiles": self.directory_with_datafiles,
            "setup_nickname": self.setup_nickname,
            "human_description": self.human_description,
            "additional_data_dict": dict(self.additional_data_dict),
        }


def parse_data_config(json_text: str) -> DataConfig:
    """Parse and validate a data-config JSON document."""
    try:
        raw = json.loads(json_text)
    except json.JSONDecodeError as e:
        raise IngestError(f"invalid JSON: {e}") from e
    if not isinstance(raw, dict):
        raise IngestError("data config must be a JSON object")
    for name in _REQUIRED_FIELDS:
        if name not in raw:
            raise IngestError(f"missing required field {name!r}")
    cfg = DataConfig(
        a_config=[int(k) for k in raw["A_config"]],
        b_config=[int(k) for k in raw["B_config"]],
        settings_indices=[[int(t) for t in row] for row in raw["settings_indices"]],
        alice_clicks_column=[int(c) for c in raw["alice_clicks_column"]],
        bob_clicks_column=[int(c) for c in raw["bob_clicks_column"]],
        alice_bob_clicks_column=[[int(c) for c in row]
                                 for row in raw["alice_bob_clicks_column"]],
        time_per_line=float(raw["time_per_line"]),
        setting_column_number=int(raw["setting_column_number"]),
        meta_data_column_number=int(raw["meta_data_column_number"]),
        meta_data_column_value=int(raw["meta_data_column_value"]),
        directory_with_datafiles=str(raw["directory_with_datafiles"]),
        setup_nickname=str(raw.get("setup_nickname", "")),
        human_description=str(raw.get("human_description", "")),
        additional_data_dict=dict(raw.get("additional_data_dict", {})),
    )
    cfg.validate()
    return cfg


@dataclass
class AggregatedCounts:
    """Click totals per setting pair, summed over all accepted data rows.

    alice_clicks[(x, y)][a], bob_clicks[(x, y)][b] and
    coincidences[(x, y)][a][b] are integer arrays; total_time[(x, y)] is
    time_per_line times the number of accepted rows carrying that tag.
    """

    scenario: Scenario
    alice_clicks: dict
    bob_clicks: dict
    coincidences: dict
    total_time: dict
    ignored_rows_metadata: int = 0
    ignored_rows_unknown_tag: int = 0
    ignored_rows_short: int = 0
    files_read: int = 0
    setup_nickname: str = ""

    def pair_total(self, x: int, y: int) -> int:
        return int(self.coincidences[(x, y)].sum())

    def validate(self) -> None:
        for (x, y) in self.scenario.setting_pairs():
            co = self.coincidences[(x, y)]
            for a in range(co.shape[0]):
                for b in range(co.shape[1]):
                    if co[a, b] > min(self.alice_clicks[(x, y)][a],
                                      self.bob_clicks[(x, y)][b]):
                        raise IngestError(
                            f"coincidences exceed singles at pair {(x, y)} "
                            f"cell ({a},{b})")


def parse_data_files(config: DataConfig, directory: str | None = None) -> AggregatedCounts:
    """Sum all ``.dat`` files in the configured directory into per-pair counts.

    Files are processed in lexicographic name order (summation makes the
    order immaterial for results, but warnings stay deterministic).  A row is
    accepted iff its metadata column equals the configured value; rows with
    unknown setting tags or too few columns are counted and skipped.
    """
    config.validate()
    directory = directory or config.directory_with_datafiles
    if not os.path.isdir(directory):
        raise IngestError(f"data directory not found: {directory}")
    sc = config.scenario
    tag_to_pair = {}
    for x in range(sc.settings_a):
        for y in range(sc.settings_b):
            tag_to_pair[config.settings_indices[x][y]] = (x, y)

    alice = {p: np.zeros(sc.a_config[p[0]], dtype=np.int64) for p in sc.setting_pairs()}
    bob = {p: np.zeros(sc.b_config[p[1]], dtype=np.int64) for p in sc.setting_pairs()}
    coinc = {p: np.zeros((sc.a_config[p[0]], sc.b_config[p[1]]), dtype=np.int64)
             for p in sc.setting_pairs()}
    rows_per_pair = {p: 0 for p in sc.setting_pairs()}
    ignored_meta = ignored_tag = ignored_short = 0

    max_col = max([config.setting_column_number, config.meta_data_column_number]
                  + config.alice_clicks_column + config.bob_clicks_column
                  + [c for row in config.alice_bob_clicks_column for c in row])

    names = sorted(n for n in os.listdir(directory) if n.endswith(".dat"))
    files_read = 0
    accepted = 0
    for name in names:
        path = os.path.join(directory, name)
        try:
            with open(path, "r", encoding="ascii") as fh:
                lines = fh.readlines()
        except OSError as e:
            raise IngestError(f"cannot read data file {path}: {e}") from e
        files_read += 1
        for lineno, line in enumerate(lines, start=1):
            tokens = line.split()
            if not tokens:
                continue
            if len(tokens) < max_col:
                ignored_short += 1
                continue
            try:
                values = [int(t) for t in tokens]
            except ValueError:
                bad = next(i for i, t in enumerate(tokens, start=1)
                           if not _is_int(t))
                raise IngestError(
                    f"non-integer token in {name}, line {lineno}, column {bad}")
            if values[config.meta_data_column_number - 1] != config.meta_data_column_value:
                ignored_meta += 1
                continue
            tag = values[config.setting_column_number - 1]
            pair = tag_to_pair.get(tag)
            if pair is None:
                ignored_tag += 1
                continue
            x, y = pair
            for a in range(sc.a_config[x]):
                alice[pair][a] += values[config.alice_clicks_column[a] - 1]
            for b in range(sc.b_config[y]):
                bob[pair][b] += values[config.bob_clicks_column[b] - 1]
            for a in range(sc.a_config[x]):
                for b in range(sc.b_config[y]):
                    coinc[pair][a, b] += values[config.alice_bob_clicks_column[a][b] - 1]
            rows_per_pair[pair] += 1
            accepted += 1
    if accepted == 0:
        raise IngestError(
            f"no accepted rows in {directory!r} ({files_read} files; "
            f"{ignored_meta} rows ignored by metadata, {ignored_tag} unknown tags, "
            f"{ignored_short} short rows)")
    total_time = {p: rows_per_pair[p] * config.time_per_line for p in rows_per_pair}
    counts = AggregatedCounts(
        scenario=sc, alice_clicks=alice, bob_clicks=bob, coincidences=coinc,
        total_time=total_time, ignored_rows_metadata=ignored_meta,
        ignored_rows_unknown_tag=ignored_tag, ignored_rows_short=ignored_short,
        files_read=files_read, setup_nickname=config.setup_nickname)
    counts.validate()
    return counts


def _is_int(token: str) -> bool:
    try:
        int(token)
        return True
    except ValueError:
        return False


def counts_to_behavior(counts: AggregatedCounts):
    """Normalize coincidences into P(a,b|x,y) and estimate the event rate.

    Probabilities come from coincidence counts alone.  The event rate counts
    detections per party (max over parties of total single clicks) divided by
    total collection time, which is what "events per second" means for the
    spot-checking protocols downstream.
    """
    table = {}
    for pair in counts.scenario.setting_pairs():
        tot = counts.pair_total(*pair)
        if tot <= 0:
            raise IngestError(f"no coincidences recorded for setting pair {pair}")
        table[pair] = counts.coincidences[pair].astype(float) / float(tot)
    behavior = BehaviorDistribution(counts.scenario, table)
    time_total = sum(counts.total_time.values())
    singles_a = sum(int(v.sum()) for v in counts.alice_clicks.values())
    singles_b = sum(int(v.sum()) for v in counts.bob_clicks.values())
    events_per_second = max(singles_a, singles_b) / time_total
    return behavior, events_per_second


def expression_value_with_error(expr: BellExpression, counts: AggregatedCounts,
                                confidence: float):
    """Expression value on the counts with a one-sided deviation half-width.

    Each non-constant atom is treated as a bounded per-event statistic
    (span 2 for correlators, 1 for probabilities and marginals) estimated
    from the coincidence total of its setting pair; a two-sided Hoeffding
    bound with a union bound over the m atoms gives

        half_width = sum_k |c_k| * span_k * sqrt(ln(2 m / (1-confidence)) / (2 N_k)).
    """
    if not (0.0 < confidence < 1.0):
        raise ValueError(f"confidence must lie in (0,1), got {confidence}")
    behavior, _ = counts_to_behavior(counts)
    value = float(sum(c * _atom_value(a, behavior) for c, a in expr.terms))
    atoms = [(c, a) for c, a in expr.terms if a.kind != "const"]
    m = len(atoms)
    if m == 0:
        return value, 0.0
    log_term = math.log(2.0 * m / (1.0 - confidence))
    half = 0.0
    for coeff, atom in atoms:
        pair = _atom_pair(atom)
        n_k = counts.pair_total(*pair)
        span = 2.0 if atom.kind == "C" else 1.0
        half += abs(coeff) * span * math.sqrt(log_term / (2.0 * n_k))
    return value, half


def _atom_value(atom, behavior: BehaviorDistribution) -> float:
    if atom.kind == "const":
        return 1.0
    if atom.kind == "C":
        return behavior.correlator(atom.x, atom.y)
    if atom.kind == "P":
        return behavior.prob(atom.a, atom.b, atom.x, atom.y)
    marg = behavior.marginals()
    if atom.kind == "PA":
        return marg.pa_value(atom.a, atom.x)
    return marg.pb_value(atom.b, atom.y)


def _atom_pair(atom) -> tuple[int, int]:
    """Setting pair whose coincidence total feeds the atom's estimator."""
    if atom.kind == "C" or atom.kind == "P":
        return atom.x, atom.y
    if atom.kind == "PA":
        return atom.x, 0
    return 0, atom.y
