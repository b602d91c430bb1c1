"""First-visit profiling tests: replay, merge, ordering, partitions."""

import random

import pytest

from binlab import timeprofile as tp

import corpus


def test_record_run_replay_semantics():
    p = tp.record_run(["f", "g", "f", "h"], ["f", "g", "h"])
    f, g, h = p.counters["f"], p.counters["g"], p.counters["h"]
    assert (f.first_visit, f.last_visit, f.runs) == (0, 2, 1)
    assert (g.first_visit, g.last_visit) == (1, 1)
    assert (h.first_visit, h.last_visit) == (2, 2)
    assert p.function_counter == 3
    assert f.startup_score == 2 and g.startup_score == 0


def test_record_run_empty_and_single():
    empty = tp.record_run([], ["f"])
    assert empty.function_counter == 0
    assert empty.counters.get("f") is None or \
        empty.counters["f"].first_visit is None
    single = tp.record_run(["f"], ["f"])
    c = single.counters["f"]
    assert (c.first_visit, c.last_visit, c.runs) == (0, 0, 1)


def test_record_run_rejects_unknown_name():
    with pytest.raises(tp.UnknownFunction):
        tp.record_run(["mystery"], ["f"])


def test_first_visits_contiguous_property():
    rng = random.Random(corpus.BASE_SEED + 99)
    universe = [f"fn{i}" for i in range(30)]
    for _ in range(200):
        trace = [rng.choice(universe) for _ in range(rng.randint(0, 60))]
        p = tp.record_run(trace, universe)
        firsts = sorted(c.first_visit for c in p.counters.values()
                        if c.first_visit is not None)
        assert firsts == list(range(len(firsts)))
        assert p.function_counter == len(firsts)
        for c in p.counters.values():
            if c.first_visit is not None:
                assert c.last_visit >= c.first_visit


# --------------------------------------------------------------------------
# merging
# --------------------------------------------------------------------------

def test_merge_with_empty_keeps_ranks():
    universe = ["a", "b", "c"]
    p = tp.record_run(["b", "a", "c"], universe)
    merged = tp.merge_profiles(p, tp.record_run([], universe))
    for name in ("a", "b", "c"):
        assert merged.counters[name].first_visit == \
            p.counters[name].first_visit


def test_merge_commutative_and_name_tiebreak():
    universe = ["f", "g"]
    p = tp.record_run(["f", "g"], universe)  # f=0, g=1
    q = tp.record_run(["g", "f"], universe)  # g=0, f=1
    pq = tp.merge_profiles(p, q)
    qp = tp.merge_profiles(q, p)
    # means tie at 0.5; the name order resolves f before g
    assert pq.counters["f"].first_visit == 0
    assert pq.counters["g"].first_visit == 1
    assert pq.to_json_dict() == qp.to_json_dict()


def test_merge_weights_by_runs():
    universe = ["f", "g", "h"]
    p = tp.record_run(["f", "g", "h"], universe)  # f=0 g=1 h=2
    q1 = tp.record_run(["h", "g", "f"], universe)  # h=0 g=1 f=2
    # two runs shaped like q1 drag f behind h
    heavy = tp.merge_profiles(q1, tp.record_run(["h", "g", "f"], universe))
    merged = tp.merge_profiles(p, heavy)
    assert merged.counters["h"].first_visit < merged.counters["f"].first_visit
    assert merged.counters["f"].runs == 3


def test_merge_rejects_universe_mismatch():
    with pytest.raises(tp.UniverseMismatch):
        tp.merge_profiles(tp.record_run([], ["a"]), tp.record_run([], ["b"]))


def test_merge_ranks_dense_property():
    rng = random.Random(corpus.BASE_SEED + 7)
    universe = [f"fn{i}" for i in range(12)]
    for _ in range(100):
        t1 = [rng.choice(universe) for _ in range(rng.randint(0, 20))]
        t2 = [rng.choice(universe) for _ in range(rng.randint(0, 20))]
        merged = tp.merge_profiles(tp.record_run(t1, universe),
                                   tp.record_run(t2, universe))
        firsts = sorted(c.first_visit for c in merged.counters.values()
                        if c.first_visit is not None)
        assert firsts == list(range(len(firsts)))
        for c in merged.counters.values():
            if c.first_visit is not None:
                assert c.last_visit >= c.first_visit


# --------------------------------------------------------------------------
# ordering and partitions
# --------------------------------------------------------------------------

def test_order_functions_visited_first():
    universe = ["h", "g", "f", "x"]
    p = tp.record_run(["f", "g", "h"], universe)
    assert tp.order_functions(p, universe) == ["f", "g", "h", "x"]


def test_order_functions_without_profile_is_declaration_order():
    universe = ["c", "a", "b"]
    p = tp.record_run([], universe)
    assert tp.order_functions(p) == ["c", "a", "b"]


def test_order_matches_first_occurrence_property():
    rng = random.Random(corpus.BASE_SEED + 31)
    universe = [f"fn{i}" for i in range(20)]
    for _ in range(100):
        trace = [rng.choice(universe) for _ in range(rng.randint(0, 40))]
        p = tp.record_run(trace, universe)
        order = tp.order_functions(p)
        assert sorted(order) == sorted(universe)
        seen = list(dict.fromkeys(trace))
        assert order[:len(seen)] == seen


def test_partition_fill_and_overflow():
    order = [f"p{i}" for i in range(4)]
    assert tp.partition_functions(order, 2, 2) == \
        [["p0", "p1"], ["p2", "p3"], []]
    order = [("f", True)] + [("u", False)]
    assert tp.partition_functions(order, 3, 10) == [["f"], [], [], ["u"]]
    order = [f"p{i}" for i in range(10)]
    parts = tp.partition_functions(order, 2, 3)
    assert parts[0] == ["p0", "p1", "p2"]
    assert parts[1] == ["p3", "p4", "p5"]
    assert parts[2] == ["p6", "p7", "p8", "p9"]


def test_partition_concatenation_preserves_order():
    rng = random.Random(corpus.BASE_SEED + 67)
    for _ in range(50):
        n = rng.randint(0, 20)
        order = [(f"p{i}", rng.random() < 0.8) for i in range(n)]
        k = rng.randint(1, 4)
        cap = rng.randint(1, 5)
        parts = tp.partition_functions(order, k, cap)
        assert len(parts) == k + 1
        flat = [name for part in parts[:k] for name in part]
        profiled = [name for name, ok in order if ok]
        assert flat == profiled[:len(flat)]
        assert all(len(part) <= cap for part in parts[:k])


def test_partition_rejects_bad_arguments():
    with pytest.raises(tp.InvalidArgument):
        tp.partition_functions([], 0, 5)
    with pytest.raises(tp.InvalidArgument):
        tp.partition_functions([], 2, 0)


# --------------------------------------------------------------------------
# file formats
# --------------------------------------------------------------------------

def test_read_trace_skips_comments_and_blanks():
    assert tp.read_trace("f\n# comment\n\n  g  \nh # trailing\n") == \
        ["f", "g", "h"]


def test_ordering_file_formats():
    assert tp.ordering_file(["a", "b"]) == "a\nb\n"
    assert tp.ordering_file(["a"], section_prefix=True) == ".text.a\n"


def test_profile_json_round_shape():
    p = tp.record_run(["f", "g", "f"], ["f", "g"])
    payload = p.to_json_dict()
    assert payload["f"] == {"first": 0, "last": 2, "runs": 1,
                            "startup_score": 2}
    assert set(payload) == {"f", "g"}
