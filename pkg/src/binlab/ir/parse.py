"""Parser for the line-oriented IR text format.

The concrete grammar is documented in the README; `#` starts a comment and an
empty input parses to an empty module.
"""

from __future__ import annotations

import re
from typing import Optional

from .types import (
    ASM,
    ASSIGN,
    CALL,
    COND,
    DEBUG,
    DECL_CLASSES,
    EDGE_FLAG_BITS,
    EH_DISPATCH,
    FUNC_ATTRIBUTES,
    GOTO,
    I64,
    LABEL,
    RESX,
    RETURN,
    SCALAR_TYPES,
    SWITCH,
    BasicBlock,
    Component,
    Decl,
    DeclInfo,
    DeclRef,
    Edge,
    EhRegion,
    FuncFlags,
    IntConst,
    MiniFunction,
    MiniModule,
    OtherConst,
    PhiNode,
    SsaName,
    Statement,
    SwitchCase,
    TypeTag,
)

_STMT_KEYWORDS = {
    "if", "switch", "ret", "goto", "br", "call", "label", "resx", "debug",
    "eh_dispatch", "asm", "edge",
}

_COMPONENT_KINDS = {"aref": "aref", "cref": "cref", "mref": "mref"}

_INT128_MIN = -(1 << 127)
_INT128_MAX = (1 << 127) - 1


class IrSyntaxError(Exception):
    def __init__(self, line: int, col: int, message: str):
        super().__init__(f"{line}:{col}: {message}")
        self.line = line
        self.col = col
        self.message = message


_TOKEN_RE = re.compile(
    r"""
      (?P<ws>\s+)
    | (?P<comment>\#[^\n]*)
    | (?P<ssa>%\d+)
    | (?P<int>-?\d+)
    | (?P<name>[A-Za-z_][A-Za-z0-9_.$]*)
    | (?P<string>"(?:[^"\\]|\\.)*")
    | (?P<arrow>->)
    | (?P<dots>\.\.)
    | (?P<sym>[()\[\]{}:,=])
    """,
    re.VERBOSE,
)


class _Token:
    __slots__ = ("kind", "value", "line", "col")

    def __init__(self, kind, value, line, col):
        self.kind = kind
        self.value = value
        self.line = line
        self.col = col


def _tokenize(text: str):
    tokens = []
    line = 1
    line_start = 0
    pos = 0
    n = len(text)
    while pos < n:
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise IrSyntaxError(line, pos - line_start + 1,
                                f"unexpected character {text[pos]!r}")
        kind = m.lastgroup
        value = m.group()
        if kind not in ("ws", "comment"):
            tokens.append(_Token(kind, value, line, m.start() - line_start + 1))
        nl = value.count("\n")
        if nl:
            line += nl
            line_start = m.start() + value.rfind("\n") + 1
        pos = m.end()
    tokens.append(_Token("eof", "", line, pos - line_start + 1))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.pos = 0

    # token helpers -----------------------------------------------------
    def peek(self, ahead: int = 0) -> _Token:
        return self.tokens[min(self.pos + ahead, len(self.tokens) - 1)]

    def next(self) -> _Token:
        t = self.tokens[self.pos]
        if t.kind != "eof":
            self.pos += 1
        return t

    def error(self, message: str, tok: Optional[_Token] = None):
        tok = tok or self.peek()
        raise IrSyntaxError(tok.line, tok.col, message)

    def expect(self, value: str) -> _Token:
        t = self.next()
        if t.value != value:
            self.error(f"expected {value!r}, found {t.value!r}", t)
        return t

    def accept(self, value: str) -> bool:
        if self.peek().value == value:
            self.next()
            return True
        return False

    def expect_name(self, what: str = "identifier") -> str:
        t = self.next()
        if t.kind != "name":
            self.error(f"expected {what}, found {t.value!r}", t)
        return t.value

    def expect_int(self) -> int:
        t = self.next()
        if t.kind != "int":
            self.error(f"expected integer, found {t.value!r}", t)
        return int(t.value)

    # module ------------------------------------------------------------
    def parse_module(self) -> MiniModule:
        module = MiniModule()
        self._decl_registry = module.declarations
        while self.peek().kind != "eof":
            t = self.peek()
            if t.value == "func":
                f = self.parse_func(len(module.functions))
                module.functions.append(f)
            elif t.value == "decl":
                self.parse_decl()
            else:
                self.error(f"expected 'func' or 'decl', found {t.value!r}")
        return module

    def parse_decl(self):
        self.expect("decl")
        cls = self.expect_name("declaration class")
        if cls not in DECL_CLASSES:
            self.error(f"unknown declaration class {cls!r}")
        name = self.expect_name("declaration name")
        type_ = I64
        if self.peek().kind == "name" and self.peek().value in SCALAR_TYPES \
                or self.peek().value in ("ptr", "record"):
            type_ = self.parse_type()
        self._register_decl(DeclRef(name, cls), type_)

    def _register_decl(self, ref: DeclRef, type_: Optional[TypeTag] = None):
        if ref.name not in self._decl_registry:
            self._decl_registry[ref.name] = DeclInfo(ref.cls, type_ or I64)

    # functions ---------------------------------------------------------
    def parse_func(self, index: int) -> MiniFunction:
        self.expect("func")
        name = self.expect_name("function name")
        self.expect("(")
        arg_types = []
        if self.peek().value != ")":
            arg_types.append(self.parse_type())
            while self.accept(","):
                arg_types.append(self.parse_type())
        self.expect(")")
        self.expect("->")
        result_type = self.parse_type()

        attributes = frozenset()
        flags = FuncFlags()
        if self.accept("attrs"):
            attributes = frozenset(self._parse_name_list(FUNC_ATTRIBUTES,
                                                         "attribute"))
        if self.accept("flags"):
            for fl in self._parse_name_list(
                    ("address_taken", "comdat", "writeable", "external"),
                    "flag"):
                setattr(flags, fl, True)

        func = MiniFunction(name=name, index=index, arg_types=arg_types,
                            result_type=result_type, attributes=attributes,
                            flags=flags)
        self._register_decl(DeclRef(name, "func"))

        if self.accept("="):
            self.expect("alias")
            func.alias_of = self.expect_name("alias target")
            return func

        if self.accept("eh"):
            self.expect("{")
            children = []
            while self.peek().value != "}":
                children.append(self.parse_eh_region())
            self.expect("}")
            if len(children) == 1:
                func.eh_regions = children[0]
            else:
                # implicit root region 0 groups several top-level regions
                func.eh_regions = EhRegion(0, "try", tuple(children))

        if self.peek().value != "{":
            return func  # body-less (external) function

        self.expect("{")
        defined = set()
        while self.peek().value != "}":
            func.blocks.append(self.parse_block(defined))
        self.expect("}")
        self._derive_edges(func)
        func.ssa_count = len(defined)
        return func

    def _parse_name_list(self, allowed, what):
        self.expect("[")
        names = [self.expect_name(what)]
        while self.accept(","):
            names.append(self.expect_name(what))
        self.expect("]")
        for n in names:
            if n not in allowed:
                self.error(f"unknown {what} {n!r}")
        return names

    def parse_eh_region(self) -> EhRegion:
        region_id = self.expect_int()
        kind = self.expect_name("region kind")
        if kind not in ("try", "cleanup", "must_not_throw"):
            self.error(f"unknown EH region kind {kind!r}")
        children = []
        if self.accept("{"):
            while self.peek().value != "}":
                children.append(self.parse_eh_region())
            self.expect("}")
        return EhRegion(region_id, kind, tuple(children))

    # blocks ------------------------------------------------------------
    def parse_block(self, defined: set) -> BasicBlock:
        label = self.expect_name("block label")
        self.expect(":")
        block = BasicBlock(label=label)
        explicit_edges = []
        while True:
            t = self.peek()
            if t.kind == "eof" or t.value == "}":
                break
            if t.kind == "name" and t.value not in _STMT_KEYWORDS \
                    and self.peek(1).value == ":":
                break  # next block starts
            if t.value == "edge":
                self.next()
                dest = self.expect_name("edge destination")
                flags = frozenset(self._parse_name_list(
                    tuple(EDGE_FLAG_BITS), "edge flag"))
                explicit_edges.append(Edge(dest, flags))
                continue
            if explicit_edges:
                self.error("statements may not follow explicit edges")
            if t.kind == "ssa" and self.peek(1).value == "=" \
                    and self.peek(2).value == "phi":
                if block.statements:
                    self.error("phi nodes must precede statements")
                block.phis.append(self.parse_phi(defined))
            else:
                block.statements.append(self.parse_stmt(defined))
        block.out_edges = explicit_edges  # implied edges prepended later
        return block

    def parse_phi(self, defined: set) -> PhiNode:
        result = int(self.next().value[1:])
        defined.add(result)
        self.expect("=")
        self.expect("phi")
        self.expect("[")
        args = []
        while True:
            pred = self.expect_name("predecessor label")
            self.expect(":")
            args.append((pred, self.parse_operand(defined)))
            if not self.accept(","):
                break
        self.expect("]")
        return PhiNode(result=result, args=tuple(args))

    # statements --------------------------------------------------------
    def parse_stmt(self, defined: set) -> Statement:
        t = self.peek()
        if t.kind == "ssa":
            return self.parse_assign_or_call(defined)
        if t.value == "call":
            return self.parse_call(None, defined)
        if t.value == "if":
            return self.parse_cond(defined)
        if t.value == "switch":
            return self.parse_switch(defined)
        if t.value == "ret":
            self.next()
            operands = ()
            if self._at_operand():
                operands = (self.parse_operand(defined),)
            return Statement(kind=RETURN, operands=operands)
        if t.value == "goto":
            self.next()
            target = self.parse_operand(defined)
            if not isinstance(target, SsaName):
                self.error("goto target must be an SSA name", t)
            return Statement(kind=GOTO, operands=(target,))
        if t.value == "br":
            self.next()
            return Statement(kind=GOTO,
                             branch_target=self.expect_name("branch target"))
        if t.value == "label":
            self.next()
            name = self.expect_name("label declaration")
            ref = DeclRef(name, "label")
            self._register_decl(ref)
            return Statement(kind=LABEL, label_decl=ref)
        if t.value == "resx":
            self.next()
            return Statement(kind=RESX, region=self.expect_int())
        if t.value == "eh_dispatch":
            self.next()
            return Statement(kind=EH_DISPATCH, region=self.expect_int())
        if t.value == "debug":
            self.next()
            return Statement(kind=DEBUG)
        if t.value == "asm":
            self.next()
            tok = self.next()
            if tok.kind != "string":
                self.error("expected quoted assembler text", tok)
            return Statement(kind=ASM, text=_unquote(tok.value))
        self.error(f"expected statement, found {t.value!r}")

    def parse_assign_or_call(self, defined: set) -> Statement:
        result = int(self.next().value[1:])
        self.expect("=")
        if self.peek().value == "call":
            stmt = self.parse_call(result, defined)
        else:
            opcode = self.expect_name("opcode")
            operands = [self.parse_operand(defined)]
            while self.accept(","):
                operands.append(self.parse_operand(defined))
            stmt = Statement(kind=ASSIGN, opcode=opcode,
                             operands=tuple(operands), result=result)
        defined.add(result)
        return stmt

    def parse_call(self, result: Optional[int], defined: set) -> Statement:
        self.expect("call")
        callee = self.expect_name("call target")
        self.expect("(")
        operands = []
        if self.peek().value != ")":
            operands.append(self.parse_operand(defined))
            while self.accept(","):
                operands.append(self.parse_operand(defined))
        self.expect(")")
        return Statement(kind=CALL, callee=callee, operands=tuple(operands),
                         result=result)

    def parse_cond(self, defined: set) -> Statement:
        self.expect("if")
        opcode = self.expect_name("comparison opcode")
        lhs = self.parse_operand(defined)
        self.expect(",")
        rhs = self.parse_operand(defined)
        self.expect("then")
        then_target = self.expect_name("then target")
        self.expect("else")
        else_target = self.expect_name("else target")
        return Statement(kind=COND, opcode=opcode, operands=(lhs, rhs),
                         then_target=then_target, else_target=else_target)

    def parse_switch(self, defined: set) -> Statement:
        self.expect("switch")
        t = self.next()
        if t.kind != "ssa":
            self.error("switch discriminant must be an SSA name", t)
        disc = SsaName(int(t.value[1:]))
        self.expect("[")
        cases = []
        while True:
            low = self.expect_int()
            high = low
            if self.accept(".."):
                high = self.expect_int()
            self.expect("->")
            cases.append(SwitchCase(low, high,
                                    self.expect_name("case target")))
            if not self.accept(","):
                break
        self.expect("]")
        self.expect("default")
        default = self.expect_name("default target")
        return Statement(kind=SWITCH, operands=(disc,), cases=tuple(cases),
                         default_target=default)

    # operands ----------------------------------------------------------
    def _at_operand(self) -> bool:
        t = self.peek()
        if t.kind == "ssa":
            return True
        if t.kind == "name":
            head = t.value.split(".", 1)[0]
            return head in ("decl", "const") or t.value in _COMPONENT_KINDS
        return False

    def parse_operand(self, defined: set):
        t = self.next()
        if t.kind == "ssa":
            index = int(t.value[1:])
            default_decl = None
            if self.accept("("):
                default_decl = self._parse_decl_ref()
                self.expect(")")
                defined.add(index)  # default definition
            return SsaName(index, default_decl)
        if t.kind == "name":
            if t.value in _COMPONENT_KINDS:
                self.expect("(")
                base = self.parse_operand(defined)
                self.expect(",")
                if self.peek().kind == "int":
                    selector = self.expect_int()
                else:
                    selector = self.parse_operand(defined)
                self.expect(")")
                return Component(t.value, base, selector)
            head, _, rest = t.value.partition(".")
            if head == "decl":
                return Decl(self._finish_decl_ref(rest, t))
            if head == "const":
                return self._parse_const(rest, t)
        self.error(f"expected operand, found {t.value!r}", t)

    def _parse_decl_ref(self) -> DeclRef:
        t = self.next()
        head, _, rest = t.value.partition(".")
        if t.kind != "name" or head != "decl":
            self.error("expected decl reference", t)
        return self._finish_decl_ref(rest, t)

    def _finish_decl_ref(self, cls: str, tok: _Token) -> DeclRef:
        if cls not in DECL_CLASSES:
            self.error(f"unknown declaration class {cls!r}", tok)
        name = self.expect_name("declaration name")
        ref = DeclRef(name, cls)
        self._register_decl(ref)
        return ref

    def _parse_const(self, type_name: str, tok: _Token):
        if type_name not in SCALAR_TYPES or type_name == "void":
            self.error(f"unknown constant type {type_name!r}", tok)
        type_ = SCALAR_TYPES[type_name]
        if type_name in ("f32", "f64"):
            t = self.next()
            if t.kind not in ("int", "name"):
                self.error("expected constant payload", t)
            return OtherConst(type_, t.value)
        value = self.expect_int()
        if not _INT128_MIN <= value <= _INT128_MAX:
            self.error("integer constant exceeds 128-bit signed range", tok)
        return IntConst(type_, value)

    # types -------------------------------------------------------------
    def parse_type(self) -> TypeTag:
        name = self.expect_name("type")
        if name in SCALAR_TYPES:
            return SCALAR_TYPES[name]
        if name == "ptr":
            self.expect("(")
            pointee = self.parse_type()
            self.expect(")")
            return TypeTag("ptr", pointee=pointee)
        if name == "record":
            self.expect("(")
            rec = self.expect_name("record name")
            self.expect(")")
            return TypeTag("record", name=rec)
        self.error(f"unknown type {name!r}")

    # edges -------------------------------------------------------------
    def _derive_edges(self, func: MiniFunction):
        for i, block in enumerate(func.blocks):
            implied = implied_edges(block, func.blocks[i + 1].label
                                    if i + 1 < len(func.blocks) else None)
            block.out_edges = implied + block.out_edges


def implied_edges(block: BasicBlock, next_label: Optional[str]):
    """Edges implied by the block's final statement (or fallthrough)."""
    last = block.statements[-1] if block.statements else None
    if last is not None and last.kind == COND:
        return [Edge(last.then_target, frozenset({"true"})),
                Edge(last.else_target, frozenset({"false"}))]
    if last is not None and last.kind == SWITCH:
        edges = [Edge(c.target) for c in last.cases]
        edges.append(Edge(last.default_target))
        return edges
    if last is not None and last.kind == GOTO:
        if last.branch_target is not None:
            return [Edge(last.branch_target, frozenset({"fallthru"}))]
        return []  # computed goto: no static destinations modeled
    if last is not None and last.kind in (RETURN, RESX):
        return []
    if next_label is not None:
        return [Edge(next_label, frozenset({"fallthru"}))]
    return []


def _unquote(s: str) -> str:
    body = s[1:-1]
    return body.replace('\\"', '"').replace("\\\\", "\\")


def parse_module(text: str) -> MiniModule:
    """Parse IR text to a MiniModule; raises IrSyntaxError on malformed input."""
    return _Parser(text).parse_module()
