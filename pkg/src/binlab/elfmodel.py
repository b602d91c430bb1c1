"""Dynamic symbol lookup and relocation accounting models.

Covers both ELF hash table formats (classic SysV and GNU with its Bloom
filter), chain statistics in the eu-readelf layout, lookup-scope cost
simulation, relocation table sizing, relative-relocation packing and the
wasted-space breakdown for RELA/64 tables.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction


class InvalidArgument(Exception):
    pass


class OffsetOverflow(Exception):
    pass


class Unsorted(Exception):
    pass


# --------------------------------------------------------------------------
# hashes
# --------------------------------------------------------------------------

def _to_bytes(name) -> bytes:
    return name.encode("utf-8") if isinstance(name, str) else bytes(name)


def elf_sysv_hash(name) -> int:
    """Classic ELF symbol hash (used by the .hash section)."""
    h = 0
    for c in _to_bytes(name):
        h = ((h << 4) + c) & 0xFFFFFFFF
        g = h & 0xF0000000
        if g:
            h ^= g >> 24
        h &= ~g & 0xFFFFFFFF
    return h


def elf_gnu_hash(name) -> int:
    """GNU symbol hash (djb-style, 5381/33)."""
    h = 5381
    for c in _to_bytes(name):
        h = (h * 33 + c) & 0xFFFFFFFF
    return h


# --------------------------------------------------------------------------
# tables
# --------------------------------------------------------------------------

@dataclass
class SymbolSet:
    names: list

    def __post_init__(self):
        if len(set(self.names)) != len(self.names):
            raise InvalidArgument("symbol names must be unique")


@dataclass
class SysvTable:
    nbuckets: int
    buckets: list  # bucket -> list of symbol indices
    names: list

    @property
    def nsymbols(self) -> int:
        return len(self.names)


@dataclass
class GnuTable:
    nbuckets: int
    maskwords: int
    wordbits: int
    bloom_shift: int
    bloom_bits: int  # single bitset over maskwords * wordbits positions
    buckets: list  # bucket -> list of (symbol index, stored hash)
    names: list

    @property
    def bloom_size(self) -> int:
        return self.maskwords * self.wordbits

    @property
    def nsymbols(self) -> int:
        return len(self.names)

    def bloom_positions(self, h: int):
        size = self.bloom_size
        return h % size, (h >> self.bloom_shift) % size

    def bloom_contains(self, h: int) -> bool:
        p1, p2 = self.bloom_positions(h)
        return bool(self.bloom_bits >> p1 & 1) and \
            bool(self.bloom_bits >> p2 & 1)


def build_table(symbols: SymbolSet, kind: str, nbuckets: int,
                maskwords: int = 1, bloom_shift: int = 6,
                wordbits: int = 64):
    """Build a SysV or GNU lookup table; symbols join their chains in input
    order."""
    if nbuckets < 1:
        raise InvalidArgument("nbuckets must be >= 1")
    names = list(symbols.names)
    if kind.upper() == "SYSV":
        buckets = [[] for _ in range(nbuckets)]
        for idx, name in enumerate(names):
            buckets[elf_sysv_hash(name) % nbuckets].append(idx)
        return SysvTable(nbuckets=nbuckets, buckets=buckets, names=names)
    if kind.upper() != "GNU":
        raise InvalidArgument(f"unknown table kind {kind!r}")
    if maskwords < 1 or maskwords & (maskwords - 1):
        raise InvalidArgument("maskwords must be a power of two >= 1")
    table = GnuTable(nbuckets=nbuckets, maskwords=maskwords,
                     wordbits=wordbits, bloom_shift=bloom_shift,
                     bloom_bits=0, buckets=[[] for _ in range(nbuckets)],
                     names=names)
    for idx, name in enumerate(names):
        h = elf_gnu_hash(name)
        p1, p2 = table.bloom_positions(h)
        table.bloom_bits |= (1 << p1) | (1 << p2)
        # bit 0 is reserved for the chain terminator marker
        table.buckets[h % nbuckets].append([idx, h & ~1])
    for chain in table.buckets:
        if chain:
            chain[-1][1] |= 1  # terminator
    return table


# --------------------------------------------------------------------------
# chain statistics
# --------------------------------------------------------------------------

@dataclass
class ChainStats:
    nbuckets: int
    nsymbols: int
    histogram: dict  # chain length -> bucket count (zero length included)
    avg_successful: float
    avg_unsuccessful: float


def stats_from_histogram(nbuckets: int, histogram: dict) -> ChainStats:
    nsymbols = sum(length * count for length, count in histogram.items())
    tests = sum(length * (length + 1) // 2 * count
                for length, count in histogram.items())
    avg_successful = tests / nsymbols if nsymbols else 0.0
    avg_unsuccessful = nsymbols / nbuckets if nbuckets else 0.0
    return ChainStats(nbuckets=nbuckets, nsymbols=nsymbols,
                      histogram=dict(histogram),
                      avg_successful=avg_successful,
                      avg_unsuccessful=avg_unsuccessful)


def chain_statistics(table: SysvTable) -> ChainStats:
    histogram = {}
    for chain in table.buckets:
        histogram[len(chain)] = histogram.get(len(chain), 0) + 1
    return stats_from_histogram(table.nbuckets, histogram)


def format_histogram(stats: ChainStats, section: str = ".hash",
                     addr: int | None = None, offset: int | None = None,
                     link: str | None = None) -> str:
    """Render the histogram the way eu-readelf -I prints it."""
    lines = [f"Hist. for bucket list length in section '{section}' "
             f"({stats.nbuckets} buckets):"]
    if addr is not None:
        lines.append(f" Addr: {addr:#010x}  Offset: {offset:#08x}  "
                     f"Link to section: '{link}'")
    lines.append(" Length  Number  ")
    for length in sorted(stats.histogram):
        count = stats.histogram[length]
        pct_s = f"{count * 100 / stats.nbuckets:.1f}" if stats.nbuckets \
            else "0.0"
        suffix = "%" if length == 0 else ""
        lines.append(f"{length:>7}{count:>8}{pct_s:>11}{suffix}")
    lines.append(f" Average number of tests:   successful lookup: "
                 f"{stats.avg_successful:f}")
    lines.append(f"\t\t\t  unsuccessful lookup: {stats.avg_unsuccessful:f}")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# lookup
# --------------------------------------------------------------------------

@dataclass
class LookupResult:
    found: bool
    string_comparisons: int
    bloom_rejected: bool = False
    hash_comparisons: int = 0


def lookup_symbol(table, name) -> LookupResult:
    if isinstance(table, SysvTable):
        chain = table.buckets[elf_sysv_hash(name) % table.nbuckets]
        comparisons = 0
        for idx in chain:
            comparisons += 1
            if table.names[idx] == name:
                return LookupResult(True, comparisons)
        return LookupResult(False, comparisons)

    assert isinstance(table, GnuTable)
    h = elf_gnu_hash(name)
    if not table.bloom_contains(h):
        return LookupResult(False, 0, bloom_rejected=True)
    chain = table.buckets[h % table.nbuckets]
    comparisons = 0
    hash_comparisons = 0
    for idx, stored in chain:
        hash_comparisons += 1
        if (stored | 1) == (h | 1):
            comparisons += 1
            if table.names[idx] == name:
                return LookupResult(True, comparisons,
                                    hash_comparisons=hash_comparisons)
        if stored & 1:
            break  # terminator
    return LookupResult(False, comparisons,
                        hash_comparisons=hash_comparisons)


@dataclass
class CostReport:
    relocations: int
    total_string_comparisons: int
    avg_scopes_searched: float
    cache_hits: int
    unresolved: int

    def to_json_dict(self) -> dict:
        return {
            "relocations": self.relocations,
            "total_string_comparisons": self.total_string_comparisons,
            "avg_scopes_searched": f"{self.avg_scopes_searched:.6f}",
            "cache_hits": self.cache_hits,
            "unresolved": self.unresolved,
        }


def simulate_relocation_lookups(scopes, relocations,
                                cache_enabled: bool = False) -> CostReport:
    """Resolve each relocation against the ordered lookup scopes; with the
    cache enabled, repeated names skip the walk entirely."""
    relocations = list(relocations)
    cache = set()
    total_comparisons = 0
    scopes_searched = 0
    looked_up = 0
    cache_hits = 0
    unresolved = 0
    for name in relocations:
        if cache_enabled and name in cache:
            cache_hits += 1
            continue
        looked_up += 1
        found = False
        for i, table in enumerate(scopes):
            result = lookup_symbol(table, name)
            total_comparisons += result.string_comparisons
            if result.found:
                scopes_searched += i + 1
                found = True
                break
        if not found:
            scopes_searched += len(scopes)
            unresolved += 1
        if cache_enabled:
            cache.add(name)
    avg = scopes_searched / looked_up if looked_up else 0.0
    return CostReport(relocations=len(relocations),
                      total_string_comparisons=total_comparisons,
                      avg_scopes_searched=avg,
                      cache_hits=cache_hits,
                      unresolved=unresolved)


# --------------------------------------------------------------------------
# relocations
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class RelocEntry:
    offset: int
    rtype: int
    sym: int | None = None
    addend: int | None = None


@dataclass
class RelocationTable:
    entries: list
    format: str  # REL | RELA
    wordsize: int  # 32 | 64

    def __post_init__(self):
        if self.format == "RELA":
            bad = [e for e in self.entries if e.addend is None]
        else:
            bad = [e for e in self.entries if e.addend is not None]
        if bad:
            raise InvalidArgument(
                f"{self.format} entries and addends are inconsistent")


_ENTRY_BYTES = {("RELA", 64): 24, ("REL", 64): 16,
                ("RELA", 32): 12, ("REL", 32): 8}


def relocation_table_size(n: int, format: str, wordsize: int) -> int:
    if n < 0:
        raise InvalidArgument("entry count must be >= 0")
    key = (format, wordsize)
    if key not in _ENTRY_BYTES:
        raise InvalidArgument(f"unsupported combination {key}")
    return _ENTRY_BYTES[key] * n


@dataclass(frozen=True)
class PackedRun:
    start_offset: int
    count: int


PACKED_RUN_BYTES = 8  # 4 bytes start offset + 4 bytes consecutive count


@dataclass
class PackedRelocations:
    runs: list
    stride: int  # wordsize bytes between consecutive packed offsets

    @property
    def packed_bytes(self) -> int:
        return PACKED_RUN_BYTES * len(self.runs)


def pack_relative_relocations(offsets, wordsize: int = 64) \
        -> PackedRelocations:
    """Greedy run-length grouping of consecutive offsets (next = prev +
    wordsize bytes)."""
    stride = wordsize // 8
    runs = []
    prev = None
    for off in offsets:
        if off >= 1 << 32 or off < 0:
            raise OffsetOverflow(f"offset {off:#x} outside 32-bit range")
        if prev is not None and off <= prev:
            raise Unsorted("offsets must be strictly increasing")
        if prev is not None and off == prev + stride:
            runs[-1] = PackedRun(runs[-1].start_offset, runs[-1].count + 1)
        else:
            runs.append(PackedRun(off, 1))
        prev = off
    return PackedRelocations(runs=runs, stride=stride)


def unpack_relocations(packed: PackedRelocations) -> list:
    offsets = []
    for run in packed.runs:
        offsets.extend(run.start_offset + i * packed.stride
                       for i in range(run.count))
    return offsets


def pack_relocation_table(table: RelocationTable, relative_rtype: int):
    """Pack only the relative-kind entries; everything else passes through."""
    relative = sorted(e.offset for e in table.entries
                      if e.rtype == relative_rtype)
    passthrough = [e for e in table.entries if e.rtype != relative_rtype]
    packed = pack_relative_relocations(relative, wordsize=table.wordsize)
    return packed, passthrough


# --------------------------------------------------------------------------
# waste accounting
# --------------------------------------------------------------------------

def _pct(numerator: int, denominator: int) -> str:
    """Exact rational percentage, rendered to 2 decimals (half-up)."""
    if denominator == 0:
        return "0.00"
    scaled = Fraction(numerator * 100, denominator) * 100
    rounded = (scaled.numerator * 2 + scaled.denominator) // \
        (scaled.denominator * 2)
    return f"{rounded // 100}.{rounded % 100:02d}"


@dataclass
class WasteReport:
    total_entries: int
    entries_without_symref: int
    table_bytes: int
    bytes: dict  # component -> wasted bytes
    percentages: dict  # component -> "xx.xx" of the table size
    total_wasted: int
    total_percentage: str

    def to_json_dict(self) -> dict:
        return {
            "total_entries": self.total_entries,
            "entries_without_symref": self.entries_without_symref,
            "table_bytes": self.table_bytes,
            "bytes": self.bytes,
            "percentages": self.percentages,
            "total_wasted": self.total_wasted,
            "total_percentage": self.total_percentage,
        }


def waste_report(total_entries: int, entries_without_symref: int,
                 format: str = "RELA", wordsize: int = 64) -> WasteReport:
    """Wasted bytes in a relocation table: duplicated addends, oversized type
    encoding, needless symbol references, oversized offsets."""
    if entries_without_symref > total_entries or total_entries < 0:
        raise InvalidArgument("inconsistent entry counts")
    if format != "RELA" or wordsize != 64:
        raise InvalidArgument("waste accounting is defined for RELA/64")
    table = relocation_table_size(total_entries, format, wordsize)
    parts = {
        "addend": 8 * total_entries,
        "type": 3 * total_entries,
        "symref": 4 * entries_without_symref,
        "offset": 4 * total_entries,
    }
    total = sum(parts.values())
    return WasteReport(
        total_entries=total_entries,
        entries_without_symref=entries_without_symref,
        table_bytes=table,
        bytes=parts,
        percentages={k: _pct(v, table) for k, v in parts.items()},
        total_wasted=total,
        total_percentage=_pct(total, table))


# --------------------------------------------------------------------------
# file formats
# --------------------------------------------------------------------------

def read_symbol_list(text: str) -> SymbolSet:
    names = [line.strip() for line in text.splitlines()
             if line.strip() and not line.lstrip().startswith("#")]
    return SymbolSet(names)


def read_relocation_csv(text: str, format: str = "RELA",
                        wordsize: int = 64) -> RelocationTable:
    """CSV rows: offset,rtype,has_sym,addend (addend blank for REL)."""
    entries = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#") or line.startswith("offset"):
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 4:
            raise InvalidArgument(f"line {lineno}: expected 4 fields")
        offset = int(parts[0], 0)
        rtype = int(parts[1], 0)
        has_sym = parts[2] in ("1", "true", "yes")
        addend = int(parts[3], 0) if parts[3] != "" else None
        entries.append(RelocEntry(offset=offset, rtype=rtype,
                                  sym=0 if has_sym else None, addend=addend))
    return RelocationTable(entries=entries, format=format, wordsize=wordsize)
