"""Canonical text form for the mini IR; parse(print(m)) == m structurally."""

from __future__ import annotations

from .parse import implied_edges
from .types import (
    ASM,
    ASSIGN,
    CALL,
    COND,
    DEBUG,
    EH_DISPATCH,
    GOTO,
    LABEL,
    RESX,
    RETURN,
    SWITCH,
    BasicBlock,
    Component,
    Decl,
    EhRegion,
    IntConst,
    MiniFunction,
    MiniModule,
    OtherConst,
    SsaName,
    Statement,
)

_FLAG_ORDER = ("address_taken", "comdat", "writeable", "external")
_ATTR_ORDER = ("nothrow", "noreturn", "constructor", "destructor")


def print_operand(op) -> str:
    if isinstance(op, SsaName):
        if op.default_decl is not None:
            return f"%{op.index}(decl.{op.default_decl.cls} {op.default_decl.name})"
        return f"%{op.index}"
    if isinstance(op, Decl):
        return f"decl.{op.ref.cls} {op.ref.name}"
    if isinstance(op, IntConst):
        return f"const.{op.type.kind} {op.value}"
    if isinstance(op, OtherConst):
        return f"const.{op.type.kind} {op.payload}"
    if isinstance(op, Component):
        sel = op.selector if isinstance(op.selector, int) \
            else print_operand(op.selector)
        return f"{op.kind}({print_operand(op.base)}, {sel})"
    raise TypeError(f"not an operand: {op!r}")


def print_statement(stmt: Statement) -> str:
    if stmt.kind == ASSIGN:
        ops = ", ".join(print_operand(o) for o in stmt.operands)
        return f"%{stmt.result} = {stmt.opcode} {ops}"
    if stmt.kind == CALL:
        ops = ", ".join(print_operand(o) for o in stmt.operands)
        head = f"%{stmt.result} = " if stmt.result is not None else ""
        return f"{head}call {stmt.callee}({ops})"
    if stmt.kind == COND:
        lhs, rhs = stmt.operands
        return (f"if {stmt.opcode} {print_operand(lhs)}, {print_operand(rhs)} "
                f"then {stmt.then_target} else {stmt.else_target}")
    if stmt.kind == SWITCH:
        cases = ", ".join(
            f"{c.low} -> {c.target}" if c.low == c.high
            else f"{c.low} .. {c.high} -> {c.target}"
            for c in stmt.cases)
        disc = print_operand(stmt.operands[0])
        return f"switch {disc} [{cases}] default {stmt.default_target}"
    if stmt.kind == RETURN:
        if stmt.operands:
            return f"ret {print_operand(stmt.operands[0])}"
        return "ret"
    if stmt.kind == GOTO:
        if stmt.branch_target is not None:
            return f"br {stmt.branch_target}"
        return f"goto {print_operand(stmt.operands[0])}"
    if stmt.kind == LABEL:
        return f"label {stmt.label_decl.name}"
    if stmt.kind == RESX:
        return f"resx {stmt.region}"
    if stmt.kind == EH_DISPATCH:
        return f"eh_dispatch {stmt.region}"
    if stmt.kind == DEBUG:
        return "debug"
    if stmt.kind == ASM:
        escaped = stmt.text.replace("\\", "\\\\").replace('"', '\\"')
        return f'asm "{escaped}"'
    raise ValueError(f"unknown statement kind {stmt.kind}")


def _print_eh(region: EhRegion) -> str:
    inner = ""
    if region.children:
        inner = " { " + " ".join(_print_eh(c) for c in region.children) + " }"
    return f"{region.region_id} {region.kind}{inner}"


def _print_block(block: BasicBlock, next_label, lines: list):
    lines.append(f"{block.label}:")
    for phi in block.phis:
        args = ", ".join(f"{pred}: {print_operand(arg)}"
                         for pred, arg in phi.args)
        lines.append(f"  %{phi.result} = phi [{args}]")
    for stmt in block.statements:
        lines.append(f"  {print_statement(stmt)}")
    implied = implied_edges(block, next_label)
    assert block.out_edges[:len(implied)] == implied, \
        f"block {block.label}: out_edges inconsistent with terminator"
    for edge in block.out_edges[len(implied):]:
        flags = ", ".join(sorted(edge.flags))
        lines.append(f"  edge {edge.dest} [{flags}]")


def print_function(func: MiniFunction) -> str:
    args = ", ".join(str(t) for t in func.arg_types)
    head = f"func {func.name}({args}) -> {func.result_type}"
    attrs = [a for a in _ATTR_ORDER if a in func.attributes]
    if attrs:
        head += " attrs [" + ", ".join(attrs) + "]"
    flags = [f for f in _FLAG_ORDER if getattr(func.flags, f)]
    if flags:
        head += " flags [" + ", ".join(flags) + "]"
    if func.alias_of is not None:
        return head + f" = alias {func.alias_of}\n"
    if func.eh_regions is not None:
        head += " eh { " + _print_eh(func.eh_regions) + " }"
    if not func.blocks:
        return head + "\n"
    lines = [head + " {"]
    for i, block in enumerate(func.blocks):
        next_label = func.blocks[i + 1].label if i + 1 < len(func.blocks) \
            else None
        _print_block(block, next_label, lines)
    lines.append("}")
    return "\n".join(lines) + "\n"


def print_module(module: MiniModule) -> str:
    # Explicit decl lines come first so re-parsing reproduces the registry
    # exactly; declarations of defined functions re-register themselves.
    parts = []
    defined = set(module.function_names())
    for name, info in module.declarations.items():
        if name in defined:
            continue
        parts.append(f"decl {info.cls} {name} {info.type}\n")
    for func in module.functions:
        parts.append(print_function(func))
    return "\n".join(parts)
