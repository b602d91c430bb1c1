"""Command line front end: fold, reorder, pagesim, dynlink, relpack."""

from __future__ import annotations

import argparse
import json
import sys
import time

from . import elfmodel, icf, pagesim, timeprofile
from .ir import IrSyntaxError, parse_module, print_module, validate_module


class EngineError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


def _read(path: str) -> str:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise EngineError("IO", f"cannot read {path}: {exc}") from exc


def _write(path, text: str):
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def _json_report(payload: dict, args) -> str:
    if getattr(args, "timestamps", False):
        payload = dict(payload)
        payload["generated_at"] = int(time.time())
    return json.dumps(payload, indent=2) + "\n"


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------

def cmd_fold(args) -> int:
    try:
        module = parse_module(_read(args.infile))
    except IrSyntaxError as exc:
        raise EngineError("PARSE", str(exc)) from exc
    diags = validate_module(module)
    if diags:
        for d in diags:
            print(f"ERROR {d.code}: {d}", file=sys.stderr)
        return 1
    folded, report, _plan = icf.fold_module(module, jobs=args.jobs)
    _write(args.report, _json_report(report.to_json_dict(), args))
    if args.emit_ir:
        _write(args.emit_ir, print_module(folded))
    return 0


def cmd_reorder(args) -> int:
    try:
        module = parse_module(_read(args.module))
    except IrSyntaxError as exc:
        raise EngineError("PARSE", str(exc)) from exc
    universe = [f.name for f in module.functions if not f.flags.external]
    trace = timeprofile.read_trace(_read(args.trace))
    try:
        profile = timeprofile.record_run(trace, universe)
    except timeprofile.UnknownFunction as exc:
        raise EngineError("UNKNOWN_FUNCTION",
                          f"trace names unknown function {exc}") from exc
    order = timeprofile.order_functions(profile)
    _write(args.order_out,
           timeprofile.ordering_file(order,
                                     section_prefix=args.section_prefix))
    if args.profile_out:
        _write(args.profile_out, profile.dump_json() + "\n")
    return 0


def cmd_pagesim(args) -> int:
    try:
        layout = pagesim.load_layout_json(_read(args.layout),
                                          page_size=args.page_size,
                                          alignment=args.align)
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise EngineError("LAYOUT", f"bad layout file: {exc}") from exc
    trace = timeprofile.read_trace(_read(args.trace))
    cache = pagesim.PageCacheModel(readahead_sectors=args.readahead_sectors,
                                   file_pages=args.file_pages)
    try:
        report = pagesim.simulate_startup(layout, trace, cache)
    except pagesim.UnknownFunction as exc:
        raise EngineError("UNKNOWN_FUNCTION",
                          f"trace names unplaced function {exc}") from exc
    payload = report.to_json_dict()
    if args.preload:
        payload["preload_pages"] = pagesim.preload_pages(layout)
    payload["summary"] = pagesim.summarize(report, seek_ms=args.seek_ms)
    _write(args.out, _json_report(payload, args))
    if args.csv:
        _write(args.csv, pagesim.emit_seek_report(report,
                                                  page_size=args.page_size))
    return 0


def cmd_dynlink(args) -> int:
    scopes = []
    for path in args.symbols:
        symbols = elfmodel.read_symbol_list(_read(path))
        try:
            scopes.append(elfmodel.build_table(
                symbols, args.kind, args.nbuckets,
                maskwords=args.maskwords, bloom_shift=args.bloom_shift))
        except elfmodel.InvalidArgument as exc:
            raise EngineError("INVALID_ARGUMENT", str(exc)) from exc
    probes = [line for line in _read(args.probes).splitlines()
              if line.strip() and not line.lstrip().startswith("#")]
    report = elfmodel.simulate_relocation_lookups(scopes, probes,
                                                  cache_enabled=args.cache)
    payload = report.to_json_dict()
    if args.histogram:
        if args.kind.upper() != "SYSV":
            raise EngineError("INVALID_ARGUMENT",
                              "--histogram requires --kind sysv")
        payload["histogram"] = elfmodel.format_histogram(
            elfmodel.chain_statistics(scopes[0]))
    _write(args.out, _json_report(payload, args))
    return 0


def cmd_relpack(args) -> int:
    try:
        table = elfmodel.read_relocation_csv(_read(args.infile),
                                             format=args.format,
                                             wordsize=args.wordsize)
        packed, passthrough = elfmodel.pack_relocation_table(
            table, relative_rtype=args.relative_rtype)
    except (elfmodel.InvalidArgument, elfmodel.OffsetOverflow,
            elfmodel.Unsorted, ValueError) as exc:
        raise EngineError("RELPACK", str(exc)) from exc
    relative = len(table.entries) - len(passthrough)
    payload = {
        "entries": len(table.entries),
        "relative": relative,
        "runs": len(packed.runs),
        "packed_bytes": packed.packed_bytes,
        "passthrough_entries": len(passthrough),
        "unpacked_bytes": elfmodel.relocation_table_size(
            relative, table.format, table.wordsize),
        "passthrough_bytes": elfmodel.relocation_table_size(
            len(passthrough), table.format, table.wordsize),
    }
    _write(args.out, _json_report(payload, args))
    return 0


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------

class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(prog="binlab")
    parser.add_argument("--timestamps", action="store_true",
                        help="include a generation timestamp in reports")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fold", help="fold semantically equal functions")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--report", default=None)
    p.add_argument("--emit-ir", dest="emit_ir", default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_fold)

    p = sub.add_parser("reorder", help="order functions by first visit")
    p.add_argument("--module", required=True)
    p.add_argument("--trace", required=True)
    p.add_argument("--order-out", dest="order_out", default=None)
    p.add_argument("--profile-out", dest="profile_out", default=None)
    p.add_argument("--section-prefix", action="store_true",
                   help="prefix each name with .text.")
    p.set_defaults(func=cmd_reorder)

    p = sub.add_parser("pagesim", help="simulate cold-start page reads")
    p.add_argument("--layout", required=True)
    p.add_argument("--trace", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--csv", default=None)
    p.add_argument("--page-size", dest="page_size", type=int,
                   default=pagesim.DEFAULT_PAGE_SIZE)
    p.add_argument("--readahead-sectors", dest="readahead_sectors", type=int,
                   default=pagesim.DEFAULT_READAHEAD_SECTORS)
    p.add_argument("--align", type=int, default=pagesim.DEFAULT_ALIGNMENT)
    p.add_argument("--file-pages", dest="file_pages", type=int, default=None)
    p.add_argument("--seek-ms", dest="seek_ms", type=int,
                   default=pagesim.DEFAULT_SEEK_MS)
    p.add_argument("--preload", action="store_true",
                   help="report sequential whole-region preload pages")
    p.set_defaults(func=cmd_pagesim)

    p = sub.add_parser("dynlink", help="symbol lookup cost model")
    p.add_argument("--symbols", action="append", required=True,
                   help="symbol list file, one per lookup scope (repeatable)")
    p.add_argument("--probes", required=True)
    p.add_argument("--kind", choices=["sysv", "gnu"], default="sysv")
    p.add_argument("--nbuckets", type=int, required=True)
    p.add_argument("--maskwords", type=int, default=1)
    p.add_argument("--bloom-shift", dest="bloom_shift", type=int, default=6)
    p.add_argument("--cache", action="store_true")
    p.add_argument("--histogram", action="store_true")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_dynlink)

    p = sub.add_parser("relpack", help="pack relative relocations")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--format", choices=["REL", "RELA"], default="RELA")
    p.add_argument("--wordsize", type=int, choices=[32, 64], default=64)
    p.add_argument("--relative-rtype", dest="relative_rtype", type=int,
                   default=8)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_relpack)
    return parser


def dispatch(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        return args.func(args)
    except EngineError as exc:
        print(f"ERROR {exc.code}: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
