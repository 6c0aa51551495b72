"""Stage documents: versioned JSON files with the ``.edq`` extension.

Every pipeline stage (data config, aggregated counts, certificate set,
tradeoff function, sweep result) can be saved and restored, so long
computations never need to be repeated.  Payloads are plain JSON for
inspectability; the format is this package's own and makes no
compatibility claims towards other tools.
"""

from __future__ import annotations

import datetime
import json
import os
from dataclasses import dataclass

import numpy as np

from .eat import EatCell, EatSweepResult
from .ingest import AggregatedCounts, DataConfig, parse_data_config
from .pipeline import MinTradeoffInfo
from .scenario import Scenario

__all__ = ["EdqDocument", "SchemaError", "save_stage", "load_stage",
           "counts_to_payload", "counts_from_payload",
           "sweep_to_payload", "sweep_from_payload"]

KINDS = ("data-config", "eber-data", "certificate", "min-tradeoff", "sweep-result")
FORMAT_VERSION = 1


class SchemaError(ValueError):
    pass


@dataclass
class EdqDocument:
    kind: str
    payload: dict
    version: int = FORMAT_VERSION
    created_at: str = ""
    setup_nickname: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaError(f"unknown document kind {self.kind!r}; "
                              f"expected one of {KINDS}")
        if not self.created_at:
            self.created_at = datetime.datetime.now(
                datetime.timezone.utc).isoformat()

    def to_json(self) -> str:
        return json.dumps({
            "kind": self.kind,
            "version": self.version,
            "created_at": self.created_at,
            "setup_nickname": self.setup_nickname,
            "payload": self.payload,
        }, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "EdqDocument":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as e:
            raise SchemaError(f"not a valid document: {e}") from e
        if not isinstance(raw, dict) or "kind" not in raw:
            raise SchemaError("document must be a JSON object with a 'kind'")
        if raw["kind"] not in KINDS:
            raise SchemaError(f"unknown document kind {raw['kind']!r}; "
                              f"expected one of {KINDS}")
        if int(raw.get("version", -1)) > FORMAT_VERSION:
            raise SchemaError(
                f"document version {raw['version']} is newer than supported "
                f"({FORMAT_VERSION})")
        return cls(kind=raw["kind"], payload=raw.get("payload", {}),
                   version=int(raw.get("version", FORMAT_VERSION)),
                   created_at=raw.get("created_at", ""),
                   setup_nickname=raw.get("setup_nickname", ""))


def save_stage(doc: EdqDocument, path: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(doc.to_json())
    os.replace(tmp, path)


def load_stage(path: str, expected_kind: str | None = None) -> EdqDocument:
    with open(path, "r", encoding="utf-8") as fh:
        doc = EdqDocument.from_json(fh.read())
    if expected_kind is not None and doc.kind != expected_kind:
        raise SchemaError(
            f"expected a {expected_kind!r} document, found {doc.kind!r}")
    return doc


def counts_to_payload(counts: AggregatedCounts) -> dict:
    sc = counts.scenario
    pairs = {}
    for (x, y) in sc.setting_pairs():
        pairs[f"{x},{y}"] = {
            "alice_clicks": counts.alice_clicks[(x, y)].tolist(),
            "bob_clicks": counts.bob_clicks[(x, y)].tolist(),
            "coincidences": counts.coincidences[(x, y)].tolist(),
            "total_time": counts.total_time[(x, y)],
        }
    return {
        "A_config": list(sc.a_config), "B_config": list(sc.b_config),
        "pairs": pairs,
        "ignored_rows_metadata": counts.ignored_rows_metadata,
        "ignored_rows_unknown_tag": counts.ignored_rows_unknown_tag,
        "ignored_rows_short": counts.ignored_rows_short,
        "files_read": counts.files_read,
        "setup_nickname": counts.setup_nickname,
    }


def counts_from_payload(payload: dict) -> AggregatedCounts:
    try:
        sc = Scenario(tuple(payload["A_config"]), tuple(payload["B_config"]))
        alice, bob, coinc, times = {}, {}, {}, {}
        for key, rec in payload["pairs"].items():
            x, y = (int(v) for v in key.split(","))
            alice[(x, y)] = np.asarray(rec["alice_clicks"], dtype=np.int64)
            bob[(x, y)] = np.asarray(rec["bob_clicks"], dtype=np.int64)
            coinc[(x, y)] = np.asarray(rec["coincidences"], dtype=np.int64)
            times[(x, y)] = float(rec["total_time"])
    except (KeyError, TypeError, ValueError) as e:
        raise SchemaError(f"malformed eber-data payload: {e}") from e
    return AggregatedCounts(
        scenario=sc, alice_clicks=alice, bob_clicks=bob, coincidences=coinc,
        total_time=times,
        ignored_rows_metadata=int(payload.get("ignored_rows_metadata", 0)),
        ignored_rows_unknown_tag=int(payload.get("ignored_rows_unknown_tag", 0)),
        ignored_rows_short=int(payload.get("ignored_rows_short", 0)),
        files_read=int(payload.get("files_read", 0)),
        setup_nickname=payload.get("setup_nickname", ""))


def sweep_to_payload(result: EatSweepResult) -> dict:
    return json.loads(result.to_json())


def sweep_from_payload(payload: dict) -> EatSweepResult:
    try:
        def cell(d):
            return EatCell(
                chunk_time=d["single data chunk generation time"],
                events_per_second=d["events per second"], eps_s=d["epsS"],
                p_omega=d["pOmega"], gamma=d["test round probability"],
                minus_log2_beta=int(d["-log beta"]),
                n_rounds=int(d["rounds per chunk"]), t_rate=d["rate per round"],
                eps_v=d["eps_v"], eps_k=d["eps_k"], eps_omega=d["eps_omega"],
                bound_bits=d["entropy bound per chunk"],
                gross_rate=d["gross rate per second"],
                net_gain_per_second=d["net_gain_per_second"],
                consumption_per_second=d["consumption per second"])
        cells = [cell(d) for d in payload["cells"]]
        best = cell(payload["best"])
    except (KeyError, TypeError) as e:
        raise SchemaError(f"malformed sweep payload: {e}") from e
    return EatSweepResult(cells=cells, best=best,
                          tradeoff_summary=payload.get("tradeoff", {}))


def document_for(obj, setup_nickname: str = "") -> EdqDocument:
    """Wrap a known stage object in a document."""
    if isinstance(obj, DataConfig):
        return EdqDocument("data-config", obj.to_dict(),
                           setup_nickname=obj.setup_nickname)
    if isinstance(obj, AggregatedCounts):
        return EdqDocument("eber-data", counts_to_payload(obj),
                           setup_nickname=obj.setup_nickname)
    if isinstance(obj, MinTradeoffInfo):
        return EdqDocument("min-tradeoff", json.loads(obj.to_str()),
                           setup_nickname=obj.setup_nickname)
    if isinstance(obj, EatSweepResult):
        return EdqDocument("sweep-result", sweep_to_payload(obj),
                           setup_nickname=setup_nickname)
    raise TypeError(f"no document mapping for {type(obj).__name__}")
