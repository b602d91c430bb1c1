"""Structural validator for mini IR modules.

Violations are reported as diagnostics, one per finding; an empty list means
every type invariant holds.
"""

from __future__ import annotations

from dataclasses import dataclass

from .types import (
    ASSIGN,
    CALL,
    COND,
    GOTO,
    RESX,
    RETURN,
    SWITCH,
    Component,
    Decl,
    MiniFunction,
    MiniModule,
    SsaName,
)


@dataclass(frozen=True)
class Diagnostic:
    code: str
    function: str  # empty for module-level findings
    detail: str

    def __str__(self) -> str:
        where = f" [{self.function}]" if self.function else ""
        return f"{self.code}{where}: {self.detail}"


def validate_module(module: MiniModule) -> list:
    diags = []
    seen = set()
    for f in module.functions:
        if f.name in seen:
            diags.append(Diagnostic("DUP_FUNCTION", "",
                                    f"function {f.name!r} defined twice"))
        seen.add(f.name)

    callable_names = set(seen)
    callable_names.update(
        name for name, info in module.declarations.items()
        if info.cls == "func")

    for f in module.functions:
        diags.extend(_validate_function(f, module, callable_names))
    return diags


def _validate_function(f: MiniFunction, module: MiniModule,
                       callable_names: set) -> list:
    diags = []

    if f.alias_of is not None:
        if f.alias_of not in set(module.function_names()):
            diags.append(Diagnostic("BAD_ALIAS", f.name,
                                    f"alias target {f.alias_of!r} undefined"))
        if f.blocks:
            diags.append(Diagnostic("BAD_ALIAS", f.name,
                                    "alias carries a body"))
        return diags

    if f.flags.external:
        if f.blocks:
            diags.append(Diagnostic("EXTERNAL_BODY", f.name,
                                    "external function has a body"))
        return diags
    if not f.blocks:
        diags.append(Diagnostic("MISSING_BODY", f.name,
                                "non-external function has no blocks"))
        return diags

    labels = {}
    for i, b in enumerate(f.blocks):
        if b.label in labels:
            diags.append(Diagnostic("DUP_LABEL", f.name,
                                    f"block label {b.label!r} reused"))
        labels[b.label] = i

    _check_edges(f, labels, diags)
    _check_terminators(f, diags)
    _check_calls(f, callable_names, diags)
    _check_decl_classes(f, module, diags)
    _check_eh(f, diags)
    _check_ssa(f, labels, diags)
    return diags


def _check_edges(f, labels, diags):
    for b in f.blocks:
        for e in b.out_edges:
            if e.dest not in labels:
                diags.append(Diagnostic(
                    "BAD_EDGE", f.name,
                    f"block {b.label}: edge to undeclared label {e.dest}"))
        for phi in b.phis:
            for pred, _ in phi.args:
                if pred not in labels:
                    diags.append(Diagnostic(
                        "BAD_PHI", f.name,
                        f"block {b.label}: phi references unknown "
                        f"predecessor {pred}"))


def _check_terminators(f, diags):
    for b in f.blocks:
        for i, stmt in enumerate(b.statements):
            if stmt.is_terminator() and i != len(b.statements) - 1:
                diags.append(Diagnostic(
                    "BAD_TERMINATOR", f.name,
                    f"block {b.label}: statements after terminator"))
                break
        last = b.statements[-1] if b.statements else None
        if last is None:
            continue
        if last.kind == COND:
            flagsets = [e.flags for e in b.out_edges[:2]]
            if len(b.out_edges) != 2 or \
                    flagsets != [frozenset({"true"}), frozenset({"false"})]:
                diags.append(Diagnostic(
                    "BAD_TERMINATOR", f.name,
                    f"block {b.label}: conditional needs exactly a "
                    "true and a false edge"))
        elif last.kind == SWITCH:
            want = len(last.cases) + 1
            if len(b.out_edges) != want:
                diags.append(Diagnostic(
                    "BAD_TERMINATOR", f.name,
                    f"block {b.label}: switch edge count {len(b.out_edges)} "
                    f"!= cases + default ({want})"))


def _check_calls(f, callable_names, diags):
    for b in f.blocks:
        for stmt in b.statements:
            if stmt.kind == CALL and stmt.callee not in callable_names:
                diags.append(Diagnostic(
                    "UNKNOWN_CALLEE", f.name,
                    f"call target {stmt.callee!r} is neither defined nor "
                    "declared"))


def _check_decl_classes(f, module, diags):
    def visit(op, where):
        if isinstance(op, SsaName) and op.default_decl is not None:
            visit(Decl(op.default_decl), where)
        elif isinstance(op, Decl):
            info = module.declarations.get(op.ref.name)
            if info is not None and info.cls != op.ref.cls:
                diags.append(Diagnostic(
                    "DECL_CLASS", f.name,
                    f"{where}: {op.ref.name!r} referenced as {op.ref.cls}, "
                    f"declared as {info.cls}"))
        elif isinstance(op, Component):
            visit(op.base, where)
            if not isinstance(op.selector, int):
                visit(op.selector, where)

    for b in f.blocks:
        for phi in b.phis:
            for _, arg in phi.args:
                visit(arg, f"block {b.label}")
        for stmt in b.statements:
            for op in stmt.operands:
                visit(op, f"block {b.label}")
            if stmt.label_decl is not None:
                visit(Decl(stmt.label_decl), f"block {b.label}")


def _check_eh(f, diags):
    if f.eh_regions is None:
        return
    seen = set()

    def walk(region):
        if region.region_id in seen:
            diags.append(Diagnostic(
                "EH_DUP_REGION", f.name,
                f"EH region id {region.region_id} reused"))
        seen.add(region.region_id)
        for c in region.children:
            walk(c)

    walk(f.eh_regions)


def _ssa_uses(op, out):
    if isinstance(op, SsaName):
        out.append(op)
    elif isinstance(op, Component):
        _ssa_uses(op.base, out)
        if not isinstance(op.selector, int):
            _ssa_uses(op.selector, out)


def _dominators(f: MiniFunction, labels: dict) -> list:
    n = len(f.blocks)
    preds = [[] for _ in range(n)]
    for b in f.blocks:
        src = labels[b.label]
        for e in b.out_edges:
            if e.dest in labels:
                preds[labels[e.dest]].append(src)
    full = set(range(n))
    dom = [full.copy() for _ in range(n)]
    dom[0] = {0}
    changed = True
    while changed:
        changed = False
        for i in range(1, n):
            sets = [dom[p] for p in preds[i]]
            new = set.intersection(*sets) | {i} if sets else {i}
            if new != dom[i]:
                dom[i] = new
                changed = True
    return dom


def _check_ssa(f, labels, diags):
    # def site: (block index, statement position); phis define at position -1,
    # default definitions at function entry.
    defs = {}
    redefined = set()

    for bi, b in enumerate(f.blocks):
        for phi in b.phis:
            if phi.result in defs:
                redefined.add(phi.result)
            defs.setdefault(phi.result, (bi, -1))
        for si, stmt in enumerate(b.statements):
            if stmt.result is not None:
                if stmt.result in defs:
                    redefined.add(stmt.result)
                defs.setdefault(stmt.result, (bi, si))

    default_defs = set()
    for b in f.blocks:
        for phi in b.phis:
            for _, arg in phi.args:
                uses = []
                _ssa_uses(arg, uses)
                for u in uses:
                    if u.default_decl is not None:
                        default_defs.add(u.index)
        for stmt in b.statements:
            uses = []
            for op in stmt.operands:
                _ssa_uses(op, uses)
            for u in uses:
                if u.default_decl is not None:
                    default_defs.add(u.index)

    for index in redefined:
        diags.append(Diagnostic("SSA_REDEF", f.name,
                                f"%{index} defined more than once"))
    for index in sorted(default_defs):
        if index in defs:
            diags.append(Diagnostic(
                "SSA_REDEF", f.name,
                f"%{index} is a default definition but also assigned"))

    dom = _dominators(f, labels)

    def check_use(u, use_block, use_pos, where):
        if u.default_decl is not None or u.index in default_defs:
            return
        site = defs.get(u.index)
        if site is None:
            diags.append(Diagnostic("SSA_UNDEF", f.name,
                                    f"{where}: %{u.index} never defined"))
            return
        def_block, def_pos = site
        ok = (def_block == use_block and def_pos < use_pos) or \
            (def_block != use_block and def_block in dom[use_block])
        if not ok:
            diags.append(Diagnostic(
                "SSA_DOM", f.name,
                f"{where}: %{u.index} used before its definition dominates "
                "the use"))

    for bi, b in enumerate(f.blocks):
        for phi in b.phis:
            for pred, arg in phi.args:
                if pred not in labels:
                    continue
                uses = []
                _ssa_uses(arg, uses)
                pb = labels[pred]
                for u in uses:
                    # a phi argument is consumed at the end of its predecessor
                    check_use(u, pb, len(f.blocks[pb].statements),
                              f"block {b.label} phi")
        for si, stmt in enumerate(b.statements):
            uses = []
            for op in stmt.operands:
                _ssa_uses(op, uses)
            for u in uses:
                check_use(u, bi, si, f"block {b.label}")
