"""Data model for the mini SSA IR.

All types are plain value objects; nothing mutates them after the parser (or a
programmatic builder) finishes a module, so they are safe to share freely.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

# Statement kinds.
ASSIGN = "ASSIGN"
CALL = "CALL"
COND = "COND"
SWITCH = "SWITCH"
RETURN = "RETURN"
LABEL = "LABEL"
GOTO = "GOTO"
RESX = "RESX"
DEBUG = "DEBUG"
EH_DISPATCH = "EH_DISPATCH"
ASM = "ASM"

STATEMENT_KINDS = (
    ASSIGN, CALL, COND, SWITCH, RETURN, LABEL, GOTO, RESX, DEBUG,
    EH_DISPATCH, ASM,
)
_KIND_CODE = {k: i for i, k in enumerate(STATEMENT_KINDS)}

# Edge flags and their bit values (used by the CFG checksum).
EDGE_FLAG_BITS = {
    "fallthru": 1,
    "true": 2,
    "false": 4,
    "eh": 8,
    "abnormal": 16,
}

FUNC_ATTRIBUTES = ("nothrow", "noreturn", "constructor", "destructor")

DECL_CLASSES = ("var", "parm", "label", "func")


@dataclass(frozen=True)
class TypeTag:
    kind: str  # void | i8 | i16 | i32 | i64 | f32 | f64 | ptr | record
    pointee: Optional["TypeTag"] = None
    name: Optional[str] = None

    def __str__(self) -> str:
        if self.kind == "ptr":
            return f"ptr({self.pointee})"
        if self.kind == "record":
            return f"record({self.name})"
        return self.kind


VOID = TypeTag("void")
I8 = TypeTag("i8")
I16 = TypeTag("i16")
I32 = TypeTag("i32")
I64 = TypeTag("i64")
F32 = TypeTag("f32")
F64 = TypeTag("f64")

SCALAR_TYPES = {t.kind: t for t in (VOID, I8, I16, I32, I64, F32, F64)}


def types_compatible(a: TypeTag, b: TypeTag) -> bool:
    """True when no conversion between the two types is needed.

    Pointers to records are mutually compatible regardless of the record name
    (reference-counting wrappers differ only in the class behind the pointer);
    pointers to scalars require equal pointee tags.
    """
    if a.kind == "ptr" and b.kind == "ptr":
        assert a.pointee is not None and b.pointee is not None
        if a.pointee.kind == "record" and b.pointee.kind == "record":
            return True
        return types_compatible(a.pointee, b.pointee)
    return a == b


@dataclass(frozen=True)
class DeclRef:
    name: str
    cls: str  # var | parm | label | func


@dataclass(frozen=True)
class DeclInfo:
    cls: str
    type: TypeTag


@dataclass(frozen=True)
class SsaName:
    index: int
    default_decl: Optional[DeclRef] = None  # set for default definitions


@dataclass(frozen=True)
class Decl:
    ref: DeclRef


@dataclass(frozen=True)
class IntConst:
    type: TypeTag
    value: int  # fits in a signed 128-bit range


@dataclass(frozen=True)
class OtherConst:
    type: TypeTag
    payload: str  # structural payload, compared verbatim


@dataclass(frozen=True)
class Component:
    kind: str  # aref | cref | mref
    base: "Operand"
    selector: Union["Operand", int]  # operand index or byte offset


Operand = Union[SsaName, Decl, IntConst, OtherConst, Component]


@dataclass(frozen=True)
class SwitchCase:
    low: int
    high: int
    target: str


@dataclass(frozen=True)
class Statement:
    kind: str
    opcode: Optional[str] = None  # ASSIGN/COND operator tag
    operands: tuple = ()
    result: Optional[int] = None  # SSA index defined (ASSIGN, optionally CALL)
    callee: Optional[str] = None  # CALL
    cases: tuple = ()  # SWITCH: SwitchCase entries
    default_target: Optional[str] = None  # SWITCH
    then_target: Optional[str] = None  # COND
    else_target: Optional[str] = None  # COND
    branch_target: Optional[str] = None  # plain "br" GOTO
    region: Optional[int] = None  # RESX / EH_DISPATCH
    text: Optional[str] = None  # ASM opaque payload
    label_decl: Optional[DeclRef] = None  # LABEL

    def is_terminator(self) -> bool:
        return self.kind in (COND, SWITCH, RETURN, GOTO, RESX)


@dataclass(frozen=True)
class PhiNode:
    result: int
    args: tuple  # of (pred_label, Operand)


@dataclass(frozen=True)
class Edge:
    dest: str
    flags: frozenset = frozenset()

    def flag_mask(self) -> int:
        return sum(EDGE_FLAG_BITS[f] for f in self.flags)


@dataclass
class BasicBlock:
    label: str
    phis: list = field(default_factory=list)
    statements: list = field(default_factory=list)
    out_edges: list = field(default_factory=list)

    def nondebug_stmt_count(self) -> int:
        return sum(1 for s in self.statements if s.kind != DEBUG)


@dataclass(frozen=True)
class EhRegion:
    region_id: int
    kind: str  # try | cleanup | must_not_throw
    children: tuple = ()


@dataclass
class FuncFlags:
    address_taken: bool = False
    comdat: bool = False
    writeable: bool = False
    external: bool = False


@dataclass
class MiniFunction:
    name: str
    index: int
    arg_types: list = field(default_factory=list)
    result_type: TypeTag = VOID
    attributes: frozenset = frozenset()
    flags: FuncFlags = field(default_factory=FuncFlags)
    blocks: list = field(default_factory=list)
    eh_regions: Optional[EhRegion] = None
    ssa_count: int = 0
    alias_of: Optional[str] = None  # set for body-less aliases

    @property
    def arg_count(self) -> int:
        return len(self.arg_types)

    @property
    def bb_count(self) -> int:
        return len(self.blocks)

    @property
    def edge_count(self) -> int:
        return sum(len(b.out_edges) for b in self.blocks)

    def block_ordinal(self, label: str) -> int:
        for i, b in enumerate(self.blocks):
            if b.label == label:
                return i
        raise KeyError(label)


@dataclass
class MiniModule:
    functions: list = field(default_factory=list)
    declarations: dict = field(default_factory=dict)  # name -> DeclInfo

    def function(self, name: str) -> MiniFunction:
        for f in self.functions:
            if f.name == name:
                return f
        raise KeyError(name)

    def function_names(self):
        return [f.name for f in self.functions]


FNV_OFFSET = 0x811C9DC5
FNV_PRIME = 0x01000193


def fnv1a_fold(values, h: int = FNV_OFFSET) -> int:
    """FNV-1a over the little-endian 4-byte encoding of each 32-bit value."""
    for v in values:
        v &= 0xFFFFFFFF
        for _ in range(4):
            h = ((h ^ (v & 0xFF)) * FNV_PRIME) & 0xFFFFFFFF
            v >>= 8
    return h


def statement_kind_code(kind: str) -> int:
    return _KIND_CODE[kind]


def cfg_checksum(f: MiniFunction) -> int:
    """32-bit checksum of the control-flow shape only.

    Folds (block count, then per block: out-degree, each edge's destination
    ordinal, each edge's flag bitmask); statement contents, SSA numbering and
    names never enter the stream.
    """
    ordinals = {b.label: i for i, b in enumerate(f.blocks)}
    stream = [len(f.blocks)]
    for b in f.blocks:
        stream.append(len(b.out_edges))
        for e in b.out_edges:
            stream.append(ordinals[e.dest])
            stream.append(e.flag_mask())
    return fnv1a_fold(stream)
