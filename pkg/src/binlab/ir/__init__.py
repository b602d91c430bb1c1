"""Mini SSA intermediate representation: types, parser, printer, validator."""

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
    DeclInfo,
    DeclRef,
    EDGE_FLAG_BITS,
    EhRegion,
    Edge,
    FuncFlags,
    IntConst,
    MiniFunction,
    MiniModule,
    Operand,
    OtherConst,
    PhiNode,
    SsaName,
    Statement,
    SwitchCase,
    TypeTag,
    cfg_checksum,
    types_compatible,
)
from .parse import IrSyntaxError, parse_module
from .printer import print_module
from .validate import Diagnostic, validate_module

__all__ = [
    "ASM",
    "ASSIGN",
    "CALL",
    "COND",
    "DEBUG",
    "EH_DISPATCH",
    "GOTO",
    "LABEL",
    "RESX",
    "RETURN",
    "SWITCH",
    "BasicBlock",
    "Component",
    "Decl",
    "DeclInfo",
    "DeclRef",
    "Diagnostic",
    "EDGE_FLAG_BITS",
    "EhRegion",
    "Edge",
    "FuncFlags",
    "IntConst",
    "IrSyntaxError",
    "MiniFunction",
    "MiniModule",
    "Operand",
    "OtherConst",
    "PhiNode",
    "SsaName",
    "Statement",
    "SwitchCase",
    "TypeTag",
    "cfg_checksum",
    "parse_module",
    "print_module",
    "types_compatible",
    "validate_module",
]
