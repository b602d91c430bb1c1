"""Semantic function folding.

Pipeline: fingerprint -> initial congruence classes -> call-target refinement
-> pairwise structural comparison -> merge planning and application.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Union

from .ir.types import (
    ASM,
    ASSIGN,
    CALL,
    COND,
    DEBUG,
    EH_DISPATCH,
    GOTO,
    I64,
    LABEL,
    RESX,
    RETURN,
    SWITCH,
    BasicBlock,
    Component,
    Decl,
    DeclInfo,
    DeclRef,
    EhRegion,
    FuncFlags,
    IntConst,
    MiniFunction,
    MiniModule,
    OtherConst,
    SsaName,
    Statement,
    cfg_checksum,
    fnv1a_fold,
    statement_kind_code,
    types_compatible,
)


class ExternalFunction(Exception):
    """Fingerprinting requested for a function without a body."""


class PlanInconsistent(Exception):
    """A merge plan references functions unknown to the module."""


# --------------------------------------------------------------------------
# fingerprints and congruence classes
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Fingerprint:
    arg_count: int
    bb_count: int
    edge_count: int
    cfg_checksum: int
    bb_sizes: tuple  # non-debug statement count per block
    bb_kind_hashes: tuple  # per-block hash over statement kind codes
    compound: int


def _block_kind_hash(block: BasicBlock) -> int:
    codes = [statement_kind_code(s.kind) for s in block.statements
             if s.kind != DEBUG]
    return fnv1a_fold(codes)


def fingerprint_function(f: MiniFunction) -> Fingerprint:
    if f.flags.external or not f.blocks:
        raise ExternalFunction(f.name)
    bb_sizes = tuple(b.nondebug_stmt_count() for b in f.blocks)
    bb_kind_hashes = tuple(_block_kind_hash(b) for b in f.blocks)
    checksum = cfg_checksum(f)
    compound = fnv1a_fold(
        (f.arg_count, f.bb_count, f.edge_count, checksum)
        + bb_sizes + bb_kind_hashes)
    return Fingerprint(arg_count=f.arg_count, bb_count=f.bb_count,
                       edge_count=f.edge_count, cfg_checksum=checksum,
                       bb_sizes=bb_sizes, bb_kind_hashes=bb_kind_hashes,
                       compound=compound)


@dataclass(frozen=True)
class CongruenceClass:
    id: int
    members: frozenset  # function indices


def build_initial_classes(fps: dict) -> list:
    """Group function indices by compound fingerprint, ids in order of first
    appearance."""
    by_compound = {}
    order = []
    for index, fp in fps.items():
        if fp.compound not in by_compound:
            by_compound[fp.compound] = []
            order.append(fp.compound)
        by_compound[fp.compound].append(index)
    return [CongruenceClass(i, frozenset(by_compound[c]))
            for i, c in enumerate(order)]


def call_vector(f: MiniFunction, module: MiniModule):
    """Call targets in statement order: index of a defined internal function,
    or the external symbol name."""
    internal = {g.name: g.index for g in module.functions
                if not g.flags.external and g.alias_of is None}
    targets = []
    for block in f.blocks:
        for stmt in block.statements:
            if stmt.kind == CALL:
                targets.append(internal.get(stmt.callee, stmt.callee))
    return tuple(targets)


def refine_classes(classes: list, calls: dict) -> list:
    """Split classes until no class properly splits another at any call
    position (worklist partition refinement; smaller pieces re-enter the
    worklist first)."""
    members = {c.id: sorted(c.members) for c in classes}
    next_id = max(members, default=-1) + 1
    max_arity = max((len(v) for v in calls.values()), default=0)

    # splitters: internal class ids and external symbol names
    externals = sorted({t for v in calls.values() for t in v
                        if isinstance(t, str)})
    worklist = [("c", cid) for cid in sorted(members)] + \
               [("x", name) for name in externals]
    queued = set(worklist)

    def hits_splitter(f, i, split_members):
        vec = calls.get(f, ())
        if i >= len(vec):
            return False
        t = vec[i]
        return not isinstance(t, str) and t in split_members

    while worklist:
        splitter = worklist.pop(0)
        queued.discard(splitter)
        # membership is snapshotted once at pop: every call position is split
        # against the same set, even if the splitter splits itself mid-way
        if splitter[0] == "c":
            split_members = set(members[splitter[1]])
        for i in range(max_arity):
            if splitter[0] == "c":
                matches = lambda f: hits_splitter(f, i, split_members)
            else:
                name = splitter[1]
                matches = lambda f: i < len(calls.get(f, ())) and \
                    calls[f][i] == name
            # group the functions whose i-th call targets the splitter
            hits = {}
            for cid in sorted(members):
                for f in members[cid]:
                    if matches(f):
                        hits.setdefault(cid, []).append(f)
            for cid in sorted(hits):
                inside = hits[cid]
                if len(inside) == len(members[cid]):
                    continue  # no proper split
                outside = [f for f in members[cid] if f not in set(inside)]
                members[cid] = outside
                new_id = next_id
                next_id += 1
                members[new_id] = inside
                old_key = ("c", cid)
                new_key = ("c", new_id)
                if old_key in queued:
                    worklist.append(new_key)
                    queued.add(new_key)
                else:
                    smaller = new_key if len(inside) <= len(outside) \
                        else old_key
                    worklist.append(smaller)
                    queued.add(smaller)
    return [CongruenceClass(cid, frozenset(members[cid]))
            for cid in sorted(members) if members[cid]]


# --------------------------------------------------------------------------
# pairwise comparison
# --------------------------------------------------------------------------

@dataclass
class CorrespondenceMap:
    ssa_fwd: dict = field(default_factory=dict)
    ssa_rev: dict = field(default_factory=dict)
    decl_fwd: dict = field(default_factory=dict)
    decl_rev: dict = field(default_factory=dict)
    edge_pairs: dict = field(default_factory=dict)

    def snapshot(self):
        return (dict(self.ssa_fwd), dict(self.ssa_rev),
                dict(self.decl_fwd), dict(self.decl_rev))

    def restore(self, snap):
        self.ssa_fwd, self.ssa_rev, self.decl_fwd, self.decl_rev = \
            (dict(d) for d in snap)


@dataclass(frozen=True)
class Verdict:
    equal: bool
    map: Optional[CorrespondenceMap] = None
    reason: Optional[str] = None
    location: Optional[str] = None

    @staticmethod
    def yes(m: CorrespondenceMap) -> "Verdict":
        return Verdict(True, map=m)

    @staticmethod
    def no(reason: str, location: str) -> "Verdict":
        return Verdict(False, reason=reason, location=location)


def _pair_ssa(i: int, j: int, m: CorrespondenceMap) -> bool:
    if i in m.ssa_fwd:
        return m.ssa_fwd[i] == j
    if j in m.ssa_rev:
        return False
    m.ssa_fwd[i] = j
    m.ssa_rev[j] = i
    return True


def _pair_decl(d1: DeclRef, d2: DeclRef, m: CorrespondenceMap) -> bool:
    if d1.cls != d2.cls:
        return False
    if d1 in m.decl_fwd:
        return m.decl_fwd[d1] == d2
    if d2 in m.decl_rev:
        return False
    m.decl_fwd[d1] = d2
    m.decl_rev[d2] = d1
    return True


def _check_operand_inner(o1, o2, m: CorrespondenceMap) -> bool:
    if isinstance(o1, SsaName) and isinstance(o2, SsaName):
        if not _pair_ssa(o1.index, o2.index, m):
            return False
        if (o1.default_decl is None) != (o2.default_decl is None):
            return False
        if o1.default_decl is not None:
            return _pair_decl(o1.default_decl, o2.default_decl, m)
        return True
    if isinstance(o1, Decl) and isinstance(o2, Decl):
        return _pair_decl(o1.ref, o2.ref, m)
    if isinstance(o1, IntConst) and isinstance(o2, IntConst):
        return types_compatible(o1.type, o2.type) and o1.value == o2.value
    if isinstance(o1, OtherConst) and isinstance(o2, OtherConst):
        return o1.type == o2.type and o1.payload == o2.payload
    if isinstance(o1, Component) and isinstance(o2, Component):
        if o1.kind != o2.kind:
            return False
        if not _check_operand_inner(o1.base, o2.base, m):
            return False
        s1, s2 = o1.selector, o2.selector
        if isinstance(s1, int) and isinstance(s2, int):
            return s1 == s2
        if isinstance(s1, int) or isinstance(s2, int):
            return False
        return _check_operand_inner(s1, s2, m)
    return False


def check_operand(o1, o2, m: CorrespondenceMap) -> bool:
    """Try to extend the correspondence map; on failure the map is restored to
    its entry state."""
    snap = m.snapshot()
    if _check_operand_inner(o1, o2, m):
        return True
    m.restore(snap)
    return False


def _eh_isomorphic(a: Optional[EhRegion], b: Optional[EhRegion],
                   region_map: dict) -> bool:
    if (a is None) != (b is None):
        return False
    if a is None:
        return True
    if a.kind != b.kind or len(a.children) != len(b.children):
        return False
    region_map[a.region_id] = b.region_id
    return all(_eh_isomorphic(ca, cb, region_map)
               for ca, cb in zip(a.children, b.children))


_COMPARED_KINDS_SKIPPED = (DEBUG, EH_DISPATCH)


def _compared_statements(block: BasicBlock):
    return [s for s in block.statements
            if s.kind not in _COMPARED_KINDS_SKIPPED]


def _compare_statement(sa: Statement, sb: Statement, oa: dict, ob: dict,
                       region_map: dict, m: CorrespondenceMap, where: str):
    """oa/ob map block labels to ordinals in either function."""
    if sa.kind != sb.kind:
        return Verdict.no("STMT_KIND", where)
    kind = sa.kind
    if kind == ASM:
        return Verdict.no("ASM_STMT", where)
    if kind == CALL:
        if len(sa.operands) != len(sb.operands):
            return Verdict.no("CALL_ARGS", where)
        if sa.callee != sb.callee:
            return Verdict.no("CALLEE_MISMATCH", where)
        for x, y in zip(sa.operands, sb.operands):
            if not check_operand(x, y, m):
                return Verdict.no("OPERAND_MISMATCH", where)
        if (sa.result is None) != (sb.result is None):
            return Verdict.no("OPERAND_MISMATCH", where)
        if sa.result is not None and \
                not check_operand(SsaName(sa.result), SsaName(sb.result), m):
            return Verdict.no("OPERAND_MISMATCH", where)
        return None
    if kind == ASSIGN:
        if sa.opcode != sb.opcode:
            return Verdict.no("OPCODE_MISMATCH", where)
        if len(sa.operands) != len(sb.operands):
            return Verdict.no("OPERAND_MISMATCH", where)
        for x, y in zip(sa.operands, sb.operands):
            if not check_operand(x, y, m):
                return Verdict.no("OPERAND_MISMATCH", where)
        if not check_operand(SsaName(sa.result), SsaName(sb.result), m):
            return Verdict.no("OPERAND_MISMATCH", where)
        return None
    if kind == COND:
        if sa.opcode != sb.opcode:
            return Verdict.no("OPCODE_MISMATCH", where)
        for x, y in zip(sa.operands, sb.operands):
            if not check_operand(x, y, m):
                return Verdict.no("OPERAND_MISMATCH", where)
        # targets are validated through positional edge correspondence
        return None
    if kind == SWITCH:
        if not check_operand(sa.operands[0], sb.operands[0], m):
            return Verdict.no("OPERAND_MISMATCH", where)
        if len(sa.cases) != len(sb.cases):
            return Verdict.no("SWITCH_MISMATCH", where)
        for ca, cb in zip(sa.cases, sb.cases):
            if ca.low != cb.low or ca.high != cb.high:
                return Verdict.no("SWITCH_MISMATCH", where)
            if oa[ca.target] != ob[cb.target]:
                return Verdict.no("SWITCH_MISMATCH", where)
        if oa[sa.default_target] != ob[sb.default_target]:
            return Verdict.no("SWITCH_MISMATCH", where)
        return None
    if kind == RESX:
        if region_map.get(sa.region) != sb.region:
            return Verdict.no("EH_MISMATCH", where)
        return None
    if kind == LABEL:
        if not _pair_decl_checked(sa.label_decl, sb.label_decl, m):
            return Verdict.no("OPERAND_MISMATCH", where)
        return None
    if kind == RETURN:
        if len(sa.operands) != len(sb.operands):
            return Verdict.no("OPERAND_MISMATCH", where)
        if sa.operands and not check_operand(sa.operands[0], sb.operands[0],
                                             m):
            return Verdict.no("OPERAND_MISMATCH", where)
        return None
    if kind == GOTO:
        if (sa.branch_target is None) != (sb.branch_target is None):
            return Verdict.no("OPERAND_MISMATCH", where)
        if sa.branch_target is not None:
            if oa[sa.branch_target] != ob[sb.branch_target]:
                return Verdict.no("EDGE_MISMATCH", where)
            return None
        if not check_operand(sa.operands[0], sb.operands[0], m):
            return Verdict.no("OPERAND_MISMATCH", where)
        return None
    raise AssertionError(f"unhandled statement kind {kind}")


def _pair_decl_checked(d1, d2, m):
    snap = m.snapshot()
    if _pair_decl(d1, d2, m):
        return True
    m.restore(snap)
    return False


def compare_functions(a: MiniFunction, b: MiniFunction) -> Verdict:
    """Structural equality proof; Equal carries the SSA/decl/edge mapping."""
    if a.arg_count != b.arg_count:
        return Verdict.no("ARG_COUNT", "signature")
    if a.bb_count != b.bb_count:
        return Verdict.no("BB_COUNT", "cfg")
    if a.edge_count != b.edge_count:
        return Verdict.no("EDGE_COUNT", "cfg")
    if cfg_checksum(a) != cfg_checksum(b):
        return Verdict.no("CFG_CHECKSUM", "cfg")
    for i, (ta, tb) in enumerate(zip(a.arg_types, b.arg_types)):
        if not types_compatible(ta, tb):
            return Verdict.no("TYPE_MISMATCH", f"arg {i}")
    if not types_compatible(a.result_type, b.result_type):
        return Verdict.no("TYPE_MISMATCH", "result")
    if a.attributes != b.attributes:
        return Verdict.no("ATTR_MISMATCH", "attributes")

    region_map = {}
    if not _eh_isomorphic(a.eh_regions, b.eh_regions, region_map):
        return Verdict.no("EH_MISMATCH", "eh")

    oa = {blk.label: i for i, blk in enumerate(a.blocks)}
    ob = {blk.label: i for i, blk in enumerate(b.blocks)}
    m = CorrespondenceMap()

    for bi, (ba, bb) in enumerate(zip(a.blocks, b.blocks)):
        where = f"bb {bi}"
        if ba.nondebug_stmt_count() != bb.nondebug_stmt_count():
            return Verdict.no("STMT_COUNT", where)
        sa_list = _compared_statements(ba)
        sb_list = _compared_statements(bb)
        if len(sa_list) != len(sb_list):
            return Verdict.no("STMT_KIND", where)
        for si, (sa, sb) in enumerate(zip(sa_list, sb_list)):
            bad = _compare_statement(sa, sb, oa, ob, region_map, m,
                                     f"{where} stmt {si}")
            if bad is not None:
                return bad

    for bi, (ba, bb) in enumerate(zip(a.blocks, b.blocks)):
        where = f"bb {bi} edges"
        if len(ba.out_edges) != len(bb.out_edges):
            return Verdict.no("EDGE_MISMATCH", where)
        for ei, (ea, eb) in enumerate(zip(ba.out_edges, bb.out_edges)):
            if ea.flags != eb.flags or oa[ea.dest] != ob[eb.dest]:
                return Verdict.no("EDGE_MISMATCH", where)
            m.edge_pairs[(bi, ei)] = (bi, ei)

    for bi, (ba, bb) in enumerate(zip(a.blocks, b.blocks)):
        where = f"bb {bi} phi"
        if len(ba.phis) != len(bb.phis):
            return Verdict.no("PHI_MISMATCH", where)
        for pa, pb in zip(ba.phis, bb.phis):
            if len(pa.args) != len(pb.args):
                return Verdict.no("PHI_MISMATCH", where)
            if not check_operand(SsaName(pa.result), SsaName(pb.result), m):
                return Verdict.no("PHI_MISMATCH", where)
            for (preda, arga), (predb, argb) in zip(pa.args, pb.args):
                if oa[preda] != ob[predb]:
                    return Verdict.no("PHI_MISMATCH", where)
                if not check_operand(arga, argb, m):
                    return Verdict.no("PHI_MISMATCH", where)
    return Verdict.yes(m)


# --------------------------------------------------------------------------
# merge planning and application
# --------------------------------------------------------------------------

ALIAS = "ALIAS"
THUNK = "THUNK"
REDIRECT = "REDIRECT"


@dataclass(frozen=True)
class MergeItem:
    index: int
    mechanism: str


@dataclass(frozen=True)
class MergeGroup:
    representative: int
    merged: tuple  # of MergeItem


@dataclass(frozen=True)
class MergePlan:
    groups: tuple  # of MergeGroup


def _mechanism(member: MiniFunction, rep: MiniFunction) -> str:
    if (not member.flags.address_taken or not rep.flags.address_taken) \
            and not member.flags.comdat:
        return ALIAS
    if not member.flags.writeable and not rep.flags.writeable:
        return REDIRECT
    return THUNK


def plan_merges(equal_groups: list, functions_by_index: dict) -> MergePlan:
    """One group per set of pairwise-equal function indices; the lowest index
    keeps its body."""
    groups = []
    for group in equal_groups:
        if len(group) < 2:
            continue
        ordered = sorted(group)
        rep = functions_by_index[ordered[0]]
        merged = tuple(
            MergeItem(idx, _mechanism(functions_by_index[idx], rep))
            for idx in ordered[1:])
        groups.append(MergeGroup(ordered[0], merged))
    return MergePlan(tuple(sorted(groups, key=lambda g: g.representative)))


@dataclass
class FoldReport:
    functions_before: int
    functions_after: int
    folded: list  # of {"kept", "dropped", "mechanism"}
    estimated_bytes_saved: int

    @property
    def folded_count(self) -> int:
        return len(self.folded)

    def to_json_dict(self) -> dict:
        return {
            "functions_before": self.functions_before,
            "functions_after": self.functions_after,
            "folded": self.folded,
            "estimated_bytes_saved": self.estimated_bytes_saved,
        }


_BYTES_PER_STATEMENT = 16  # declared body-size proxy for the report


def _statement_count(f: MiniFunction) -> int:
    return sum(len(b.statements) for b in f.blocks)


def _make_thunk(member: MiniFunction, rep_name: str) -> MiniFunction:
    args = tuple(SsaName(i + 1, DeclRef(f"__a{i + 1}", "parm"))
                 for i in range(member.arg_count))
    returns_value = member.result_type.kind != "void"
    result = member.arg_count + 1 if returns_value else None
    stmts = [Statement(kind=CALL, callee=rep_name, operands=args,
                       result=result)]
    if returns_value:
        stmts.append(Statement(kind=RETURN, operands=(SsaName(result),)))
    else:
        stmts.append(Statement(kind=RETURN))
    block = BasicBlock(label="bb0", statements=stmts)
    return MiniFunction(
        name=member.name, index=member.index, arg_types=list(member.arg_types),
        result_type=member.result_type, attributes=member.attributes,
        flags=replace_flags(member.flags), blocks=[block],
        ssa_count=member.arg_count + (1 if returns_value else 0))


def replace_flags(flags: FuncFlags) -> FuncFlags:
    return FuncFlags(address_taken=flags.address_taken, comdat=flags.comdat,
                     writeable=flags.writeable, external=flags.external)


def apply_merges(module: MiniModule, plan: MergePlan):
    by_index = {f.index: f for f in module.functions}
    for group in plan.groups:
        if group.representative not in by_index or \
                any(item.index not in by_index for item in group.merged):
            raise PlanInconsistent("plan references unknown function indices")

    mechanism_of = {}
    rep_of = {}
    for group in plan.groups:
        rep_name = by_index[group.representative].name
        for item in group.merged:
            mechanism_of[item.index] = item.mechanism
            rep_of[item.index] = rep_name

    redirect_names = {by_index[i].name: rep_of[i]
                      for i, mech in mechanism_of.items() if mech == REDIRECT}

    out_functions = []
    folded = []
    bytes_saved = 0
    need_parm_decls = False
    for f in module.functions:
        mech = mechanism_of.get(f.index)
        if mech is None:
            out_functions.append(_rewrite_calls(f, redirect_names))
            continue
        bytes_saved += _statement_count(f) * _BYTES_PER_STATEMENT
        folded.append({"kept": rep_of[f.index], "dropped": f.name,
                       "mechanism": mech.lower()})
        if mech == ALIAS:
            out_functions.append(MiniFunction(
                name=f.name, index=f.index, arg_types=list(f.arg_types),
                result_type=f.result_type, attributes=f.attributes,
                flags=replace_flags(f.flags), alias_of=rep_of[f.index]))
        elif mech == THUNK:
            out_functions.append(_make_thunk(f, rep_of[f.index]))
            need_parm_decls = need_parm_decls or f.arg_count > 0
        # REDIRECT drops the function entirely

    declarations = dict(module.declarations)
    if need_parm_decls:
        max_args = max(f.arg_count for f in module.functions)
        for i in range(1, max_args + 1):
            declarations.setdefault(f"__a{i}", DeclInfo("parm", I64))

    new_module = MiniModule(functions=out_functions,
                            declarations=declarations)
    report = FoldReport(
        functions_before=len(module.functions),
        functions_after=len(module.functions) - len(folded),
        folded=folded,
        estimated_bytes_saved=bytes_saved)
    return new_module, report


def _rewrite_calls(f: MiniFunction, redirect_names: dict) -> MiniFunction:
    if not redirect_names or not f.blocks:
        return f
    new_blocks = []
    changed = False
    for b in f.blocks:
        stmts = []
        for s in b.statements:
            if s.kind == CALL and s.callee in redirect_names:
                s = replace(s, callee=redirect_names[s.callee])
                changed = True
            stmts.append(s)
        new_blocks.append(BasicBlock(label=b.label, phis=list(b.phis),
                                     statements=stmts,
                                     out_edges=list(b.out_edges)))
    if not changed:
        return f
    return MiniFunction(
        name=f.name, index=f.index, arg_types=list(f.arg_types),
        result_type=f.result_type, attributes=f.attributes,
        flags=replace_flags(f.flags), blocks=new_blocks,
        eh_regions=f.eh_regions, ssa_count=f.ssa_count, alias_of=f.alias_of)


# --------------------------------------------------------------------------
# whole pipeline
# --------------------------------------------------------------------------

def _group_equal(funcs: list) -> list:
    """Partition a congruence class into groups of pairwise-equal functions."""
    leaders = []  # (function, [indices])
    for f in funcs:
        placed = False
        for leader, bucket in leaders:
            if compare_functions(leader, f).equal:
                bucket.append(f.index)
                placed = True
                break
        if not placed:
            leaders.append((f, [f.index]))
    return [set(bucket) for _, bucket in leaders]


def fold_module(module: MiniModule, jobs: int = 1):
    """Run the full folding pipeline; returns (folded module, FoldReport,
    MergePlan)."""
    candidates = [f for f in module.functions
                  if not f.flags.external and f.alias_of is None]
    by_index = {f.index: f for f in candidates}
    fps = {f.index: fingerprint_function(f) for f in candidates}
    classes = build_initial_classes(fps)
    calls = {f.index: call_vector(f, module) for f in candidates}
    refined = refine_classes(classes, calls)

    multi = [sorted(c.members) for c in refined if len(c.members) > 1]
    class_funcs = [[by_index[i] for i in ms] for ms in multi]
    if jobs > 1 and len(class_funcs) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            grouped = list(pool.map(_group_equal, class_funcs))
    else:
        grouped = [_group_equal(fs) for fs in class_funcs]

    equal_groups = [g for groups in grouped for g in groups if len(g) > 1]
    plan = plan_merges(equal_groups, by_index)
    new_module, report = apply_merges(module, plan)
    return new_module, report, plan
