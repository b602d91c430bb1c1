"""Folding pipeline tests: fingerprints, classes, refinement, comparison,
merge planning and application."""

import random

import pytest

from binlab import icf
from binlab.ir import parse_module, validate_module
from binlab.ir.types import (
    Component,
    Decl,
    DeclRef,
    IntConst,
    I32,
    SsaName,
)

import corpus
import oracles


def _parse_funcs(text):
    module = parse_module(text)
    assert validate_module(module) == []
    return module


# --------------------------------------------------------------------------
# fingerprints
# --------------------------------------------------------------------------

FP_SRC = """
func f(i32, i32) -> i32 {
entry:
  %3 = add %1(decl.parm a), %2(decl.parm b)
  if lt %3, const.i32 10 then small else big
small:
  br done
big:
  debug
  br done
done:
  %4 = phi [small: const.i32 1, big: const.i32 2]
  ret %4
}
"""


def test_fingerprint_counts_and_frozen_compound():
    f = _parse_funcs(FP_SRC).function("f")
    fp = icf.fingerprint_function(f)
    assert fp.arg_count == 2
    assert fp.bb_count == 4
    assert fp.edge_count == 4
    assert fp.bb_sizes == (2, 1, 1, 1)  # debug statements excluded
    assert fp.compound == 2401355300


def test_fingerprint_ignores_names():
    f = _parse_funcs(FP_SRC).function("f")
    g = _parse_funcs(
        FP_SRC.replace("func f(", "func g(").replace("%3", "%7")
        .replace("%4", "%8").replace("parm a", "parm x")
        .replace("parm b", "parm y")).function("g")
    assert icf.fingerprint_function(g) == icf.fingerprint_function(f)


def test_fingerprint_component_differs_with_extra_block():
    f = _parse_funcs(FP_SRC).function("f")
    g = _parse_funcs(
        FP_SRC.replace("big:\n  debug\n  br done",
                       "big:\n  debug\n  br extra\nextra:\n  br done")
    ).function("f")
    fa, fb = icf.fingerprint_function(f), icf.fingerprint_function(g)
    assert fa.bb_count != fb.bb_count


def test_fingerprint_rejects_external():
    f = _parse_funcs("func ext() -> void flags [external]").function("ext")
    with pytest.raises(icf.ExternalFunction):
        icf.fingerprint_function(f)


# --------------------------------------------------------------------------
# initial classes
# --------------------------------------------------------------------------

GROUPS_SRC = """
decl func sqrt

func pow_like(i32, i32) -> i32 {
b0:
  %3 = mul %1(decl.parm base), %2(decl.parm exp)
  %4 = add %3, %3
  ret %4
}

func two_arg_1(i32, i32) -> i32 {
b0:
  %3 = sub %1(decl.parm a), %2(decl.parm b)
  ret %3
}

func two_arg_2(i32, i32) -> i32 {
b0:
  %3 = sub %2(decl.parm d), %1(decl.parm c)
  ret %3
}

func caller_1(i32) -> i32 {
b0:
  %2 = call sqrt(%1(decl.parm v))
  ret %2
}

func caller_2(i32) -> i32 {
b0:
  %2 = call sqrt(%1(decl.parm w))
  ret %2
}

func caller_3(i32) -> i32 {
b0:
  %2 = call caller_1(%1(decl.parm z))
  ret %2
}
"""


def test_initial_classes_group_by_compound():
    module = _parse_funcs(GROUPS_SRC)
    fps = {f.index: icf.fingerprint_function(f) for f in module.functions}
    classes = icf.build_initial_classes(fps)
    members = sorted(sorted(c.members) for c in classes)
    # one singleton, one pair of two-arg functions, one trio of callers
    assert members == [[0], [1, 2], [3, 4, 5]]
    assert [c.id for c in classes] == [0, 1, 2]


def test_initial_classes_distinct_and_shared():
    import dataclasses
    fp = icf.fingerprint_function(_parse_funcs(FP_SRC).function("f"))
    other = dataclasses.replace(fp, compound=fp.compound ^ 1)
    classes = icf.build_initial_classes({0: fp, 1: other, 2: fp})
    assert sorted(sorted(c.members) for c in classes) == [[0, 2], [1]]


# --------------------------------------------------------------------------
# refinement
# --------------------------------------------------------------------------

def _refined_sets(classes, calls):
    return {frozenset(c.members) for c in icf.refine_classes(classes, calls)}


def test_refine_no_calls_is_identity():
    classes = [icf.CongruenceClass(0, frozenset({0, 1})),
               icf.CongruenceClass(1, frozenset({2}))]
    assert _refined_sets(classes, {}) == {frozenset({0, 1}), frozenset({2})}


def test_refine_splits_by_call_target_class():
    # class C = {foo, a, rest}; foo calls a (in C), a calls into B,
    # rest calls an external symbol -> C splits into three singletons
    classes = [icf.CongruenceClass(0, frozenset({0})),      # A
               icf.CongruenceClass(1, frozenset({1, 2})),   # B
               icf.CongruenceClass(2, frozenset({3, 4, 5}))]  # C
    calls = {3: (4,), 4: (1,), 5: ("external_sym",)}
    got = _refined_sets(classes, calls)
    assert got == {frozenset({0}), frozenset({1, 2}),
                   frozenset({3}), frozenset({4}), frozenset({5})}


def test_refine_arity_differences_split():
    classes = [icf.CongruenceClass(0, frozenset({0, 1}))]
    calls = {0: (0,), 1: ()}
    assert _refined_sets(classes, calls) == {frozenset({0}), frozenset({1})}


def _random_instance(rng, max_funcs=16):
    n = rng.randint(2, max_funcs)
    k = rng.randint(1, max(1, n // 2))
    members = {i: [] for i in range(k)}
    for f in range(n):
        members[rng.randrange(k)].append(f)
    classes = [icf.CongruenceClass(cid, frozenset(ms))
               for cid, ms in members.items() if ms]
    calls = {}
    for f in range(n):
        vec = []
        for _ in range(rng.randint(0, 3)):
            if rng.random() < 0.25:
                vec.append(rng.choice(["ext_a", "ext_b"]))
            else:
                vec.append(rng.randrange(n))
        calls[f] = tuple(vec)
    return classes, calls


def test_refine_matches_naive_oracle():
    for case in range(150):
        rng = random.Random(corpus.BASE_SEED * 7919 + case)
        classes, calls = _random_instance(rng)
        got = _refined_sets(classes, calls)
        assert got == oracles.naive_refine(classes, calls)


def test_refine_only_subdivides():
    for case in range(60):
        rng = random.Random(corpus.BASE_SEED * 104729 + case)
        classes, calls = _random_instance(rng)
        refined = icf.refine_classes(classes, calls)
        original = [set(c.members) for c in classes]
        # every output class fits inside exactly one input class
        for c in refined:
            assert sum(1 for o in original if set(c.members) <= o) == 1
        # membership conserved
        assert set().union(*(c.members for c in refined)) == \
            set().union(*original)


# --------------------------------------------------------------------------
# pairwise comparison
# --------------------------------------------------------------------------

def test_compare_trivial_equal():
    module = _parse_funcs(
        "func a() -> i32 { b0: ret const.i32 0 }\n"
        "func b() -> i32 { b0: ret const.i32 0 }")
    v = icf.compare_functions(module.function("a"), module.function("b"))
    assert v.equal
    assert v.map.ssa_fwd == {}


def test_compare_constant_mismatch():
    module = _parse_funcs(
        "func a() -> i32 { b0: ret const.i32 5 }\n"
        "func b() -> i32 { b0: ret const.i32 6 }")
    v = icf.compare_functions(module.function("a"), module.function("b"))
    assert not v.equal
    assert v.reason == "OPERAND_MISMATCH"


ADDREF_SRC = """
func AddRef_a(ptr(record(nsAutoRefCnt))) -> i32 {
b0:
  %2 = add mref(%1(decl.parm this), 8), const.i32 1
  ret %2
}

func AddRef_b(ptr(record(Widget))) -> i32 {
b0:
  %5 = add mref(%4(decl.parm self), 8), const.i32 1
  ret %5
}
"""


def test_compare_addref_record_pointers_fold():
    module = _parse_funcs(ADDREF_SRC)
    v = icf.compare_functions(module.function("AddRef_a"),
                              module.function("AddRef_b"))
    assert v.equal
    assert v.map.ssa_fwd == {1: 4, 2: 5}
    assert v.map.decl_fwd == {DeclRef("this", "parm"): DeclRef("self", "parm")}
    assert oracles.oracle_equal(module.function("AddRef_a"),
                                module.function("AddRef_b"))


def test_compare_scalar_pointer_types_do_not_fold():
    module = _parse_funcs(
        "func a(ptr(i32)) -> void { b0: ret }\n"
        "func b(ptr(i64)) -> void { b0: ret }")
    v = icf.compare_functions(module.function("a"), module.function("b"))
    assert not v.equal and v.reason == "TYPE_MISMATCH"


@pytest.mark.parametrize("mutation,reason", [
    ("func b() -> i32 attrs [nothrow] { b0: ret const.i32 0 }",
     "ATTR_MISMATCH"),
    ("func b() -> i32 { b0: debug\n  ret const.i32 0 }", None),  # still equal
    ("func b() -> i32 { b0: label L\n  ret const.i32 0 }", "STMT_COUNT"),
])
def test_compare_attribute_and_count_rules(mutation, reason):
    module = _parse_funcs(
        "func a() -> i32 { b0: ret const.i32 0 }\n" + mutation)
    v = icf.compare_functions(module.function("a"), module.function("b"))
    if reason is None:
        assert v.equal
    else:
        assert not v.equal and v.reason == reason


def test_compare_asm_never_equal():
    module = _parse_funcs(
        'func a() -> void { b0: asm "nop"\n  ret }\n'
        'func b() -> void { b0: asm "nop"\n  ret }')
    v = icf.compare_functions(module.function("a"), module.function("b"))
    assert not v.equal and v.reason == "ASM_STMT"


def test_compare_callee_identity():
    module = _parse_funcs("""
decl func ext1
decl func ext2
func a() -> void { b0: call ext1() ret }
func b() -> void { b0: call ext2() ret }
func c() -> void { b0: call ext1() ret }
""")
    assert not icf.compare_functions(module.function("a"),
                                     module.function("b")).equal
    assert icf.compare_functions(module.function("a"),
                                 module.function("c")).equal


def test_compare_eh_isomorphism():
    module = _parse_funcs("""
func a() -> void eh { 1 try { 2 cleanup } } { b0: resx 2 }
func b() -> void eh { 7 try { 9 cleanup } } { b0: resx 9 }
func c() -> void eh { 1 try } { b0: resx 1 }
""")
    assert icf.compare_functions(module.function("a"),
                                 module.function("b")).equal
    v = icf.compare_functions(module.function("a"), module.function("c"))
    assert not v.equal and v.reason == "EH_MISMATCH"


def test_compare_agrees_with_oracle_on_corpus():
    for case in range(80):
        module = corpus.generate_module(case)
        funcs = [f for f in module.functions if f.blocks]
        for i, fa in enumerate(funcs):
            for fb in funcs[i + 1:]:
                assert icf.compare_functions(fa, fb).equal == \
                    oracles.oracle_equal(fa, fb), (case, fa.name, fb.name)


# --------------------------------------------------------------------------
# check_operand
# --------------------------------------------------------------------------

def test_check_operand_extends_bijection():
    m = icf.CorrespondenceMap()
    assert icf.check_operand(SsaName(1), SsaName(7), m)
    assert m.ssa_fwd == {1: 7} and m.ssa_rev == {7: 1}
    assert not icf.check_operand(SsaName(1), SsaName(9), m)
    assert not icf.check_operand(SsaName(2), SsaName(7), m)
    assert m.ssa_fwd == {1: 7}


def test_check_operand_component_recursion():
    m = icf.CorrespondenceMap()
    a = Component("aref", Decl(DeclRef("A", "var")), SsaName(2))
    b = Component("aref", Decl(DeclRef("B", "var")), SsaName(5))
    assert icf.check_operand(a, b, m)
    assert m.decl_fwd == {DeclRef("A", "var"): DeclRef("B", "var")}
    assert m.ssa_fwd == {2: 5}
    # kind mismatch fails without touching the map
    c = Component("cref", Decl(DeclRef("A", "var")), SsaName(2))
    assert not icf.check_operand(c, b, m)


def test_check_operand_failure_restores_map():
    m = icf.CorrespondenceMap()
    assert icf.check_operand(SsaName(1), SsaName(7), m)
    before = m.snapshot()
    # base would add 5<->8, then the selector clash must roll it back
    a = Component("mref", SsaName(5), SsaName(1))
    b = Component("mref", SsaName(8), SsaName(9))
    assert not icf.check_operand(a, b, m)
    assert m.snapshot() == before


def test_check_operand_transactional_property():
    rng = random.Random(corpus.BASE_SEED + 12345)

    def rand_operand(depth=0):
        roll = rng.random()
        if roll < 0.4 or depth >= 2:
            return SsaName(rng.randint(1, 5))
        if roll < 0.6:
            return Decl(DeclRef(rng.choice("uvw"), rng.choice(("var",
                                                               "parm"))))
        if roll < 0.8:
            return IntConst(I32, rng.randint(0, 3))
        return Component(rng.choice(("aref", "cref", "mref")),
                         rand_operand(depth + 1),
                         rng.choice((0, 8, rand_operand(depth + 1))))

    for _ in range(500):
        m = icf.CorrespondenceMap()
        for _ in range(rng.randint(0, 3)):
            icf.check_operand(rand_operand(), rand_operand(), m)
        before = m.snapshot()
        changed = icf.check_operand(rand_operand(), rand_operand(), m)
        if not changed:
            assert m.snapshot() == before


# --------------------------------------------------------------------------
# merge planning
# --------------------------------------------------------------------------

def _merge_mechanism(member_flags: str, rep_flags: str = "") -> str:
    def fmt(flags):
        return f" flags [{flags}]" if flags else ""
    module = _parse_funcs(
        f"func rep() -> i32{fmt(rep_flags)} {{ b0: ret const.i32 0 }}\n"
        f"func member() -> i32{fmt(member_flags)} "
        "{ b0: ret const.i32 0 }")
    plan = icf.plan_merges([{0, 1}], {f.index: f for f in module.functions})
    (group,) = plan.groups
    assert group.representative == 0
    return group.merged[0].mechanism


def test_merge_rule_alias():
    assert _merge_mechanism("") == icf.ALIAS
    # one untaken address suffices
    assert _merge_mechanism("address_taken") == icf.ALIAS
    assert _merge_mechanism("", "address_taken") == icf.ALIAS


def test_merge_rule_thunk():
    assert _merge_mechanism("comdat, writeable") == icf.THUNK
    assert _merge_mechanism("address_taken, comdat",
                            "address_taken, writeable") == icf.THUNK


def test_merge_rule_redirect():
    assert _merge_mechanism("comdat") == icf.REDIRECT
    assert _merge_mechanism("address_taken, comdat", "address_taken") == \
        icf.REDIRECT


def test_plan_skips_singletons_and_picks_lowest_index():
    module = _parse_funcs(
        "func a() -> i32 { b0: ret const.i32 0 }\n"
        "func b() -> i32 { b0: ret const.i32 0 }\n"
        "func c() -> i32 { b0: ret const.i32 1 }")
    plan = icf.plan_merges([{1, 0}, {2}],
                           {f.index: f for f in module.functions})
    assert len(plan.groups) == 1
    assert plan.groups[0].representative == 0
    assert [i.index for i in plan.groups[0].merged] == [1]


# --------------------------------------------------------------------------
# application and whole pipeline
# --------------------------------------------------------------------------

TRIPLE_SRC = """
func first(i32) -> i32 {
b0:
  %2 = add %1(decl.parm a), const.i32 1
  ret %2
}

func second(i32) -> i32 {
b0:
  %5 = add %4(decl.parm b), const.i32 1
  ret %5
}

func third(i32) -> i32 {
b0:
  %3 = add %2(decl.parm c), const.i32 1
  ret %3
}
"""


def test_fold_three_identical_to_aliases():
    module = _parse_funcs(TRIPLE_SRC)
    folded, report, plan = icf.fold_module(module)
    assert report.functions_before == 3
    assert report.functions_after == 1
    assert report.folded_count == 2
    assert report.estimated_bytes_saved == 2 * 2 * 16  # 2 bodies x 2 stmts
    assert {f["mechanism"] for f in report.folded} == {"alias"}
    kept = folded.function("first")
    assert kept.blocks
    assert folded.function("second").alias_of == "first"
    assert folded.function("third").alias_of == "first"
    assert validate_module(folded) == []


def test_fold_thunk_keeps_distinct_address():
    module = _parse_funcs(
        TRIPLE_SRC.replace("func second(i32) -> i32 {",
                           "func second(i32) -> i32 "
                           "flags [address_taken, comdat, writeable] {")
        .replace("func first(i32) -> i32 {",
                 "func first(i32) -> i32 flags [address_taken] {"))
    folded, report, _ = icf.fold_module(module)
    mechs = {f["dropped"]: f["mechanism"] for f in report.folded}
    assert mechs["second"] == "thunk"
    thunk = folded.function("second")
    assert len(thunk.blocks) == 1
    call, ret = thunk.blocks[0].statements
    assert call.callee == "first" and len(call.operands) == 1
    assert ret.kind == "RETURN"
    assert validate_module(folded) == []


def test_fold_redirect_rewrites_callers():
    module = _parse_funcs(
        TRIPLE_SRC.replace("func second(i32) -> i32 {",
                           "func second(i32) -> i32 "
                           "flags [address_taken, comdat] {")
        .replace("func first(i32) -> i32 {",
                 "func first(i32) -> i32 flags [address_taken] {")
        + """
func caller(i32) -> i32 {
b0:
  %2 = call second(%1(decl.parm n))
  ret %2
}
""")
    folded, report, _ = icf.fold_module(module)
    mechs = {f["dropped"]: f["mechanism"] for f in report.folded}
    assert mechs["second"] == "redirect"
    assert "second" not in folded.function_names()
    call = folded.function("caller").blocks[0].statements[0]
    assert call.callee == "first"
    assert validate_module(folded) == []


def test_apply_merges_rejects_unknown_indices():
    module = _parse_funcs(TRIPLE_SRC)
    plan = icf.MergePlan((icf.MergeGroup(0, (icf.MergeItem(42,
                                                           icf.ALIAS),)),))
    with pytest.raises(icf.PlanInconsistent):
        icf.apply_merges(module, plan)


def test_fold_jobs_deterministic():
    module = corpus.generate_module(3, n_funcs=5)
    _, r1, p1 = icf.fold_module(module, jobs=1)
    _, r2, p2 = icf.fold_module(module, jobs=4)
    assert p1 == p2
    assert r1.to_json_dict() == r2.to_json_dict()
