import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from homnet.errors import DataError
from homnet.ingest import (EdgeList, EventLog, load_edges, load_events, load_genre_map, write_edges,
                           write_events, write_genre_map)


def test_events_sorted_by_user_then_time(tsv):
    ev = load_events(tsv("e.tsv", ["1\t5\t9\t100", "1\t5\t9\t50"]))
    assert ev.rows() == [(1, 5, 9, 50), (1, 5, 9, 100)]


def test_empty_event_file(tsv):
    ev = load_events(tsv("e.tsv", []))
    assert len(ev) == 0 and ev.report.n_rows == 0


def test_malformed_row_is_skipped_and_reported(tsv):
    ev = load_events(tsv("e.tsv", ["0\t1\t2\t3", "a\tb\tc\td", "1\t1\t2\t4"]))
    assert len(ev) == 2
    assert ev.report.n_skipped == 1
    assert ev.report.skipped[0][0] == 2
    assert "line 2" in ev.report.summary()


def test_too_many_malformed_rows_abort(tsv):
    lines = [f"0\t1\t2\t{i}" for i in range(18)] + ["x\ty\tz\tw"] * 3
    with pytest.raises(DataError, match="too many malformed"):
        load_events(tsv("e.tsv", lines))


def test_ten_percent_malformed_is_tolerated(tsv):
    lines = [f"0\t1\t2\t{i}" for i in range(18)] + ["x"] * 2
    assert len(load_events(tsv("e.tsv", lines))) == 18


def test_missing_file_is_data_error(tmp_path):
    with pytest.raises(DataError, match="no such file"):
        load_events(tmp_path / "nope.tsv")


def test_header_is_tolerated(tsv):
    ev = load_events(tsv("e.tsv", ["user\tartist\ttrack\tts", "0\t1\t2\t3"]), header=True)
    assert ev.rows() == [(0, 1, 2, 3)] and ev.report.n_skipped == 0


def test_negative_timestamp_rejected(tsv):
    ev = load_events(tsv("e.tsv", ["0\t1\t2\t3", "0\t1\t2\t-3", "0\t1\t2\t4"]))
    assert len(ev) == 2 and ev.report.skipped[0][1] == "negative id or timestamp"


def test_genre_map_rows(tsv):
    gm = load_genre_map(tsv("g.tsv", ["5\t0\t2.0", "5\t1\t1.0"]))
    assert gm.weights == {5: [(0, 2.0), (1, 1.0)]}
    assert gm.n_genres == 2


def test_empty_genre_map_respects_override(tsv):
    gm = load_genre_map(tsv("g.tsv", []), n_genres=1998)
    assert gm.weights == {} and gm.n_genres == 1998


def test_negative_genre_weight_rejected(tsv):
    gm = load_genre_map(tsv("g.tsv", ["5\t0\t2.0", "5\t1\t-1", "6\t0\t1.0"]))
    assert gm.weights == {5: [(0, 2.0)], 6: [(0, 1.0)]}
    assert gm.report.n_skipped == 1 and "invalid weight" in gm.report.skipped[0][1]


def test_genre_beyond_override_rejected(tsv):
    gm = load_genre_map(tsv("g.tsv", ["1\t0\t1.0", "1\t7\t1.0", "2\t1\t1.0"]), n_genres=3)
    assert gm.weights == {1: [(0, 1.0)], 2: [(1, 1.0)]}


def test_edges_deduplicated_undirected(tsv):
    assert load_edges(tsv("x.tsv", ["1\t2", "2\t1"])).edges.tolist() == [[1, 2]]


def test_self_loop_skipped(tsv):
    el = load_edges(tsv("x.tsv", ["3\t3", "1\t2", "1\t3"]))
    assert el.edges.tolist() == [[1, 2], [1, 3]]
    assert el.report.skipped == [(1, "self-loop")]


def test_two_edges(tsv):
    assert len(load_edges(tsv("x.tsv", ["1\t2", "1\t3"]))) == 2


def test_writers_roundtrip(tmp_path):
    ev = EventLog.from_rows([(2, 1, 3, 10), (0, 4, 4, 5)])
    write_events(ev, tmp_path / "e.tsv")
    assert load_events(tmp_path / "e.tsv").rows() == ev.rows()
    el = EdgeList([[3, 1], [0, 2]])
    write_edges(el, tmp_path / "x.tsv")
    assert load_edges(tmp_path / "x.tsv").edges.tolist() == [[0, 2], [1, 3]]
    from homnet.ingest import GenreMap

    gm = GenreMap(3, {4: [(0, 0.1), (2, 1 / 3)]})
    write_genre_map(gm, tmp_path / "g.tsv")
    assert load_genre_map(tmp_path / "g.tsv", 3).weights == gm.weights


event_rows = st.lists(st.tuples(*[st.integers(0, 50)] * 3, st.integers(0, 10**9)), max_size=40)


@settings(max_examples=60, deadline=None)
@given(event_rows)
def test_loader_is_function_of_bytes_and_sorted(tmp_path_factory, rows):
    d = tmp_path_factory.mktemp("ev")
    path = d / "e.tsv"
    path.write_text("".join("\t".join(map(str, r)) + "\n" for r in rows))
    a, b = load_events(path), load_events(path)
    assert a.rows() == b.rows()
    keys = [(u, t) for u, _, _, t in a.rows()]
    assert keys == sorted(keys)
    assert sorted(a.rows()) == sorted(rows)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 20), st.integers(0, 20)), max_size=60))
def test_edge_list_invariants(pairs):
    el = EdgeList(np.asarray(pairs, dtype=np.int64).reshape(-1, 2))
    e = el.edges
    assert np.all(e[:, 0] < e[:, 1])
    assert len({tuple(x) for x in e.tolist()}) == len(e)
    assert {tuple(x) for x in e.tolist()} == {(min(a, b), max(a, b)) for a, b in pairs if a != b}
