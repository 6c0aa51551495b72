import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eatkit.bell import parse_expression
from eatkit.ingest import (AggregatedCounts, IngestError, counts_to_behavior,
                           expression_value_with_error, parse_data_config,
                           parse_data_files)
from eatkit.scenario import Scenario

CHSH = "C(0,0) + C(0,1) + C(1,0) - C(1,1)"

# Canonical 2x2 column layout: tag, metadata, Alice singles in 3-4, Bob
# singles in 6 and 10, coincidence columns [[7,8],[11,12]].
CONFIG = {
    "A_config": [2, 2], "B_config": [2, 2], "AO": 2, "BO": 2, "AS": 2, "BS": 2,
    "settings_indices": [[1, 2], [3, 4]],
    "alice_clicks_column": [3, 4],
    "bob_clicks_column": [6, 10],
    "alice_bob_clicks_column": [[7, 8], [11, 12]],
    "time_per_line": 1.0,
    "setting_column_number": 1,
    "meta_data_column_number": 2,
    "meta_data_column_value": 0,
    "directory_with_datafiles": "",
    "setup_nickname": "Simple Bell",
    "human_description": "ideal maximally violating counts",
    "additional_data_dict": {},
}

P_HI, P_LO = 426776695, 73223304
ALIGNED = f"0 500000000 {P_HI} {P_LO} 0 500000000 {P_LO} {P_HI}"
ANTI = f"0 500000000 {P_LO} {P_HI} 0 500000000 {P_HI} {P_LO}"
DATA_LINES = [
    f"1 0 500000000 500000000 {ALIGNED}",
    f"2 0 500000000 500000000 {ALIGNED}",
    f"3 0 500000000 500000000 {ALIGNED}",
    f"4 0 500000000 500000000 {ANTI}",
    "2 1 1 2 3 4 5 6 7 8 9 0",  # metadata 1: must be skipped
]


@pytest.fixture
def data_dir(tmp_path):
    (tmp_path / "run1.dat").write_text("\n".join(DATA_LINES) + "\n")
    return tmp_path


@pytest.fixture
def config(data_dir):
    raw = dict(CONFIG)
    raw["directory_with_datafiles"] = str(data_dir)
    return parse_data_config(json.dumps(raw))


class TestParseConfig:
    def test_canonical_config(self):
        cfg = parse_data_config(json.dumps(CONFIG))
        assert cfg.scenario == Scenario((2, 2), (2, 2))
        assert {t for row in cfg.settings_indices for t in row} == {1, 2, 3, 4}
        assert cfg.alice_bob_clicks_column == [[7, 8], [11, 12]]

    def test_round_trip_dict(self):
        cfg = parse_data_config(json.dumps(CONFIG))
        again = parse_data_config(json.dumps(cfg.to_dict()))
        assert again.to_dict() == cfg.to_dict()

    def test_missing_field_named(self):
        raw = {k: v for k, v in CONFIG.items() if k != "settings_indices"}
        with pytest.raises(IngestError, match="settings_indices"):
            parse_data_config(json.dumps(raw))

    def test_duplicate_tag_rejected(self):
        raw = dict(CONFIG, settings_indices=[[1, 2], [2, 3]])
        with pytest.raises(IngestError, match="duplicate"):
            parse_data_config(json.dumps(raw))

    def test_shape_mismatch(self):
        raw = dict(CONFIG, settings_indices=[[1, 2, 5], [3, 4, 6]])
        with pytest.raises(IngestError, match="matrix"):
            parse_data_config(json.dumps(raw))

    def test_nonpositive_time(self):
        raw = dict(CONFIG, time_per_line=0.0)
        with pytest.raises(IngestError, match="time_per_line"):
            parse_data_config(json.dumps(raw))

    def test_overlapping_columns(self):
        raw = dict(CONFIG, setting_column_number=3)
        with pytest.raises(IngestError, match="overlap"):
            parse_data_config(json.dumps(raw))


class TestParseFiles:
    def test_aggregation_and_skipped_row(self, config):
        counts = parse_data_files(config)
        assert counts.ignored_rows_metadata == 1
        assert counts.files_read == 1
        for pair in counts.scenario.setting_pairs():
            assert counts.alice_clicks[pair].tolist() == [500000000, 500000000]
            assert counts.bob_clicks[pair].tolist() == [500000000, 500000000]
            assert counts.total_time[pair] == 1.0
        assert counts.coincidences[(0, 0)].tolist() == [[P_HI, P_LO],
                                                        [P_LO, P_HI]]
        assert counts.coincidences[(1, 1)].tolist() == [[P_LO, P_HI],
                                                        [P_HI, P_LO]]

    def test_empty_directory(self, tmp_path):
        raw = dict(CONFIG, directory_with_datafiles=str(tmp_path))
        cfg = parse_data_config(json.dumps(raw))
        with pytest.raises(IngestError, match="no accepted rows"):
            parse_data_files(cfg)

    def test_only_ignored_rows_reports_count(self, tmp_path):
        (tmp_path / "x.dat").write_text("2 1 1 2 3 4 5 6 7 8 9 0\n" * 3)
        raw = dict(CONFIG, directory_with_datafiles=str(tmp_path))
        cfg = parse_data_config(json.dumps(raw))
        with pytest.raises(IngestError, match="3 rows ignored"):
            parse_data_files(cfg)

    def test_unknown_tag_counted(self, tmp_path):
        lines = DATA_LINES[:4] + [f"9 0 500000000 500000000 {ALIGNED}"]
        (tmp_path / "x.dat").write_text("\n".join(lines) + "\n")
        raw = dict(CONFIG, directory_with_datafiles=str(tmp_path))
        counts = parse_data_files(parse_data_config(json.dumps(raw)))
        assert counts.ignored_rows_unknown_tag == 1

    def test_non_integer_token_located(self, tmp_path):
        (tmp_path / "x.dat").write_text(
            DATA_LINES[0] + "\n" + DATA_LINES[1].replace("500000000", "5e8", 1))
        raw = dict(CONFIG, directory_with_datafiles=str(tmp_path))
        with pytest.raises(IngestError, match="line 2"):
            parse_data_files(parse_data_config(json.dumps(raw)))

    def test_short_rows_skipped(self, tmp_path):
        (tmp_path / "x.dat").write_text(DATA_LINES[0] + "\n1 0 5\n")
        raw = dict(CONFIG, directory_with_datafiles=str(tmp_path))
        counts = parse_data_files(parse_data_config(json.dumps(raw)))
        assert counts.ignored_rows_short == 1

    def test_split_across_files_matches_single(self, tmp_path, config):
        one = parse_data_files(config)
        dir2 = tmp_path / "multi"
        dir2.mkdir()
        (dir2 / "a.dat").write_text("\n".join(DATA_LINES[:2]) + "\n")
        (dir2 / "b.dat").write_text("\n".join(DATA_LINES[2:]) + "\n")
        two = parse_data_files(parse_data_config(json.dumps(
            dict(CONFIG, directory_with_datafiles=str(dir2)))))
        for pair in one.scenario.setting_pairs():
            assert np.array_equal(one.coincidences[pair], two.coincidences[pair])
            assert one.total_time[pair] == two.total_time[pair]


class TestBehaviorAndRates:
    def test_probabilities_and_event_rate(self, config):
        counts = parse_data_files(config)
        behavior, events = counts_to_behavior(counts)
        assert behavior.prob(0, 0, 0, 0) == pytest.approx(
            P_HI / (2 * (P_HI + P_LO)), abs=1e-15)
        assert events == 1e9  # singles define the event rate

    def test_chsh_value(self, config):
        counts = parse_data_files(config)
        behavior, _ = counts_to_behavior(counts)
        expr = parse_expression(CHSH, behavior.scenario)
        from eatkit.bell import evaluate_expression
        assert evaluate_expression(expr, behavior) == pytest.approx(
            2.8284271, abs=1e-6)

    def test_zero_coincidences_rejected(self, config):
        counts = parse_data_files(config)
        counts.coincidences[(0, 1)][:] = 0
        with pytest.raises(IngestError, match="no coincidences"):
            counts_to_behavior(counts)

    def test_duplicate_rows_keep_behavior(self, tmp_path):
        (tmp_path / "x.dat").write_text("\n".join(DATA_LINES[:4]) + "\n")
        single = parse_data_files(parse_data_config(json.dumps(
            dict(CONFIG, directory_with_datafiles=str(tmp_path)))))
        dir2 = tmp_path / "double"
        dir2.mkdir()
        (dir2 / "x.dat").write_text("\n".join(DATA_LINES[:4] * 2) + "\n")
        double = parse_data_files(parse_data_config(json.dumps(
            dict(CONFIG, directory_with_datafiles=str(dir2)))))
        b1, e1 = counts_to_behavior(single)
        b2, e2 = counts_to_behavior(double)
        assert b1 == b2
        assert e1 == e2


@st.composite
def row_splits(draw):
    """A base row of counts and a split of it into several rows."""
    base = draw(st.lists(st.integers(0, 10 ** 6), min_size=10, max_size=10))
    k = draw(st.integers(1, 4))
    parts = []
    remaining = list(base)
    for i in range(k - 1):
        frac = draw(st.floats(0.0, 1.0))
        part = [int(v * frac) for v in remaining]
        parts.append(part)
        remaining = [r - p for r, p in zip(remaining, part)]
    parts.append(remaining)
    return base, parts


@given(row_splits())
@settings(max_examples=60, deadline=None)
def test_summation_invariance_under_row_splits(tmp_path_factory, data):
    base, parts = data
    a0, a1, b0, b1, c00, c01, c10, c11, _, _ = base
    # coincidences must not exceed singles; enforce by construction
    a0 += c00 + c01
    a1 += c10 + c11
    b0 += c00 + c10
    b1 += c01 + c11

    def row(vals):
        v_a0, v_a1, v_b0, v_b1, v00, v01, v10, v11 = vals
        return f"1 0 {v_a0} {v_a1} 0 {v_b0} {v00} {v01} 0 {v_b1} {v10} {v11}"

    def adjusted(p):
        return [p[0] + p[4] + p[5], p[1] + p[6] + p[7],
                p[2] + p[4] + p[6], p[3] + p[5] + p[7],
                p[4], p[5], p[6], p[7]]

    tmp = tmp_path_factory.mktemp("split")
    whole = tmp / "whole"
    split = tmp / "split"
    whole.mkdir(), split.mkdir()
    (whole / "x.dat").write_text(
        row([a0, a1, b0, b1, c00, c01, c10, c11]) + "\n")
    (split / "x.dat").write_text(
        "\n".join(row(adjusted(p[:8])) for p in parts) + "\n")

    def load(d):
        return parse_data_files(parse_data_config(json.dumps(
            dict(CONFIG, settings_indices=[[1, 5], [6, 7]],
                 directory_with_datafiles=str(d)))), directory=str(d))

    try:
        one = load(whole)
    except IngestError:
        return  # all-zero rows: nothing to compare
    many = load(split)
    assert np.array_equal(one.coincidences[(0, 0)], many.coincidences[(0, 0)])
    assert np.array_equal(one.alice_clicks[(0, 0)], many.alice_clicks[(0, 0)])


class TestErrorBars:
    def test_chsh_half_width_small_at_large_counts(self, config):
        counts = parse_data_files(config)
        expr = parse_expression(CHSH, counts.scenario)
        value, half = expression_value_with_error(expr, counts, 0.99)
        assert value == pytest.approx(2.8284271, abs=1e-6)
        assert 0.0 < half < 1e-3

    def test_half_width_increases_with_confidence(self, config):
        counts = parse_data_files(config)
        expr = parse_expression(CHSH, counts.scenario)
        widths = [expression_value_with_error(expr, counts, c)[1]
                  for c in (0.9, 0.99, 0.999, 0.999999)]
        assert widths == sorted(widths)
        assert widths[-1] > widths[0]

    def test_constant_expression_no_error(self, config):
        counts = parse_data_files(config)
        expr = parse_expression("3.8", counts.scenario)
        assert expression_value_with_error(expr, counts, 0.99) == (3.8, 0.0)

    def test_confidence_domain(self, config):
        counts = parse_data_files(config)
        expr = parse_expression(CHSH, counts.scenario)
        for bad in (0.0, 1.0, -0.2, 1.5):
            with pytest.raises(ValueError, match="confidence"):
                expression_value_with_error(expr, counts, bad)

    def test_inverse_sqrt_scaling(self, tmp_path):
        # scale all counts by N and check the log-log slope of the half-width
        widths = []
        scales = [100, 10_000, 1_000_000]
        for i, n in enumerate(scales):
            d = tmp_path / f"s{i}"
            d.mkdir()
            c00, c01 = 40 * n, 10 * n
            a = c00 + c01
            (d / "x.dat").write_text(
                "\n".join(
                    f"{tag} 0 {a} {a} 0 {a} {c00} {c01} 0 {a} {c01} {c00}"
                    for tag in (1, 2, 3, 4)) + "\n")
            counts = parse_data_files(parse_data_config(json.dumps(
                dict(CONFIG, directory_with_datafiles=str(d)))))
            expr = parse_expression(CHSH, counts.scenario)
            widths.append(expression_value_with_error(expr, counts, 0.99)[1])
        slope = np.polyfit(np.log(scales), np.log(widths), 1)[0]
        assert slope == pytest.approx(-0.5, abs=0.05)
