"""Panel ingestion, synthetic generation, and splitting."""

import numpy as np
import pytest

from bwsl.errors import DataError
from bwsl.market import (
    CSV_HEADER,
    MarketPanel,
    SynthConfig,
    format_month,
    load_panel,
    parse_month,
    save_panel,
    split,
    substream,
    synth_market,
)


def _write(tmp_path, rows, name="panel.csv"):
    path = tmp_path / name
    path.write_text(CSV_HEADER + "\n" + "\n".join(rows) + "\n", encoding="utf-8")
    return path


def _row(stock, period, close, vol=0.5, volume=1000, mcap=1e6, pe=12, bm=0.4, div=0.1):
    return f"{stock},{period},{close},{vol},{volume},{mcap},{pe},{bm},{div}"


def test_parse_and_format_month_roundtrip():
    assert format_month(parse_month("1990-01")) == "1990-01"
    assert parse_month("1990-02") - parse_month("1990-01") == 1
    with pytest.raises(DataError):
        parse_month("1990-13")
    with pytest.raises(DataError):
        parse_month("199001")


def test_load_well_formed_two_stock_three_month_panel(tmp_path):
    rows = [
        _row("A", f"2001-{m:02d}", 10 + m) for m in (1, 2, 3)
    ] + [
        _row("B", f"2001-{m:02d}", 20 + m) for m in (1, 2, 3)
    ]
    panel = load_panel(_write(tmp_path, rows))
    assert panel.n_stocks == 2 and panel.n_periods == 3
    assert panel.mask.all()
    assert panel.bar("A", "2001-02").close == 12.0


def test_load_rejects_non_positive_close_with_row_number(tmp_path):
    rows = [_row("A", "2001-01", 10.0), _row("A", "2001-02", -1.0)]
    with pytest.raises(DataError, match=":3:"):
        load_panel(_write(tmp_path, rows))


def test_load_rejects_duplicate_bar(tmp_path):
    rows = [_row("A", "2001-01", 10.0), _row("A", "2001-01", 11.0)]
    with pytest.raises(DataError, match="duplicate"):
        load_panel(_write(tmp_path, rows))


def test_load_rejects_malformed_row(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text(CSV_HEADER + "\nA,2001-01,10,0.5,1\n", encoding="utf-8")
    with pytest.raises(DataError, match=":2:"):
        load_panel(path)


def test_missing_month_is_masked_exactly_there(tmp_path):
    rows = [
        _row("A", "2001-01", 10),
        _row("A", "2001-02", 11),
        _row("A", "2001-03", 12),
        _row("B", "2001-01", 20),
        _row("B", "2001-03", 22),
    ]
    panel = load_panel(_write(tmp_path, rows))
    expected = np.array([[True, True, True], [True, False, True]])
    np.testing.assert_array_equal(panel.mask, expected)
    assert not panel.has_bar("B", "2001-02")


def test_save_load_roundtrip_is_byte_identical(tmp_path):
    cfg = SynthConfig(num_stocks=5, num_periods=30, seed=3)
    panel = synth_market(cfg)
    p1 = tmp_path / "a.csv"
    p2 = tmp_path / "b.csv"
    save_panel(panel, p1)
    save_panel(load_panel(p1), p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_scientific_notation_accepted(tmp_path):
    rows = [_row("A", "2001-01", "1.5e1", mcap="1e6"), _row("A", "2001-02", 16)]
    panel = load_panel(_write(tmp_path, rows))
    assert panel.bar("A", "2001-01").close == 15.0


def test_synth_same_seed_is_bitwise_identical():
    cfg = SynthConfig(num_stocks=6, num_periods=30, seed=11)
    a = synth_market(cfg)
    b = synth_market(cfg)
    for f in ("close", "vol", "volume", "mcap", "pe", "bm", "div"):
        assert a.field(f).tobytes() == b.field(f).tobytes()
    assert a.stock_ids == b.stock_ids


def test_synth_shape_and_mask():
    panel = synth_market(SynthConfig(num_stocks=8, num_periods=30, seed=1))
    assert panel.mask.shape == (8, 30)
    assert panel.mask.all()


def test_synth_vol_scale_tracks_configured_range():
    cfg = SynthConfig(
        num_stocks=8, num_periods=30, vol_range=(0.01, 0.01), seed=5,
        momentum=0.5, reversion=0.5,
    )
    panel = synth_market(cfg)
    ratio = panel.field("vol") / panel.field("close")
    assert np.all(ratio >= 0.5 * 0.01)
    assert np.all(ratio <= 2.0 * 0.01)


def test_synth_validates_config():
    with pytest.raises(DataError):
        SynthConfig(num_stocks=3, num_periods=30)
    with pytest.raises(DataError):
        SynthConfig(num_stocks=8, num_periods=10)
    with pytest.raises(DataError):
        SynthConfig(num_stocks=8, num_periods=30, vol_range=(0.0, 0.1))


def test_substream_is_deterministic_and_named():
    a = substream(7, "data").standard_normal(4)
    b = substream(7, "data").standard_normal(4)
    c = substream(7, "init").standard_normal(4)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_split_train_ends_at_cut():
    # 47 years monthly, cut at 1990-01
    start = parse_month("1970-01")
    n = 47 * 12
    values = {
        f: np.full((2, n), v)
        for f, v in (
            ("close", 10.0),
            ("vol", 0.1),
            ("volume", 1.0),
            ("mcap", 1e6),
            ("pe", 10.0),
            ("bm", 0.5),
            ("div", 0.1),
        )
    }
    panel = MarketPanel(["A", "B"], start, values, np.ones((2, n), dtype=bool))
    train, test = split(panel, "1990-01", k=12)
    assert format_month(train.end) == "1990-01"
    assert train.start == panel.start
    assert test.end == panel.end


def test_split_test_overlap_supports_first_decision():
    panel = synth_market(SynthConfig(num_stocks=4, num_periods=40, seed=2))
    cut = panel.start + 24
    train, test = split(panel, cut, k=12)
    # first decision time after the cut has a full 12-month window on the test panel
    t = cut + 1
    assert test.start == cut - 11
    assert test.index_of(t) == 12
    assert train.end + 1 == t


def test_split_rejects_cut_on_the_edge():
    panel = synth_market(SynthConfig(num_stocks=4, num_periods=30, seed=2))
    with pytest.raises(DataError):
        split(panel, panel.end)
    with pytest.raises(DataError):
        split(panel, panel.start)


def test_split_leaves_no_gap():
    panel = synth_market(SynthConfig(num_stocks=4, num_periods=36, seed=9))
    cut = panel.start + 20
    train, test = split(panel, cut, k=6)
    assert train.end - test.start + 1 == 6  # exactly the k-month overlap
    assert np.array_equal(
        np.union1d(train.periods, test.periods), panel.periods
    )


def test_panel_arrays_are_read_only():
    panel = synth_market(SynthConfig(num_stocks=4, num_periods=30, seed=2))
    with pytest.raises(ValueError):
        panel.field("close")[0, 0] = 1.0
