"""Cold-start page read simulator.

Functions are placed contiguously in a .text-like region; every touch of a
non-resident page triggers a read of a fixed read-ahead window of consecutive
pages (the kernel constant: 256 sectors of 256 bytes = 16 pages of 4096).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

DEFAULT_PAGE_SIZE = 4096
DEFAULT_ALIGNMENT = 16
DEFAULT_READAHEAD_SECTORS = 256
SECTOR_BYTES = 256
DEFAULT_SEEK_MS = 30


class UnknownFunction(Exception):
    pass


@dataclass(frozen=True)
class Placement:
    name: str
    offset: int
    size: int


@dataclass
class BinaryLayout:
    placements: list
    total_size: int
    page_size: int = DEFAULT_PAGE_SIZE
    alignment: int = DEFAULT_ALIGNMENT

    def placement(self, name: str) -> Placement:
        index = getattr(self, "_index", None)
        if index is None or len(index) != len(self.placements):
            index = {p.name: p for p in self.placements}
            self._index = index
        try:
            return index[name]
        except KeyError:
            raise UnknownFunction(name) from None


def _align_up(n: int, alignment: int) -> int:
    return (n + alignment - 1) // alignment * alignment


def layout_functions(order, page_size: int = DEFAULT_PAGE_SIZE,
                     alignment: int = DEFAULT_ALIGNMENT) -> BinaryLayout:
    """Place (name, size) pairs contiguously in the given order; every slot is
    padded to the alignment."""
    placements = []
    offset = 0
    for name, size in order:
        if size < 1:
            raise ValueError(f"function {name!r} has size {size}")
        placements.append(Placement(name, offset, size))
        offset += _align_up(size, alignment)
    return BinaryLayout(placements=placements, total_size=offset,
                        page_size=page_size, alignment=alignment)


@dataclass(frozen=True)
class ReadEvent:
    sequence: int
    start_page: int
    pages_read: int


@dataclass
class PageCacheModel:
    readahead_sectors: int = DEFAULT_READAHEAD_SECTORS
    file_pages: int | None = None  # clip window to this many pages if set
    resident: set = field(default_factory=set)
    events: list = field(default_factory=list)

    def readahead_pages(self, page_size: int) -> int:
        return max(1, self.readahead_sectors * SECTOR_BYTES // page_size)


@dataclass
class PageReadReport:
    distinct_pages_read: int
    read_events: int
    seek_count: int
    events: list

    def to_json_dict(self) -> dict:
        return {"pages": self.distinct_pages_read,
                "events": self.read_events,
                "seeks": self.seek_count}


def simulate_startup(layout: BinaryLayout, trace,
                     cache: PageCacheModel | None = None) -> PageReadReport:
    """Replay a call trace over the layout; returns the page read report.

    A touch of a non-resident page reads a full read-ahead window starting at
    the faulting page. Windows run past the end of the region unless the cache
    is configured with an explicit file size.
    """
    cache = cache if cache is not None else PageCacheModel()
    page = layout.page_size
    window = cache.readahead_pages(page)
    seeks = 0
    prev_end = None
    for name in trace:
        p = layout.placement(name)
        first = p.offset // page
        last = (p.offset + p.size - 1) // page
        for idx in range(first, last + 1):
            if idx in cache.resident:
                continue
            count = window
            if cache.file_pages is not None:
                count = min(count, cache.file_pages - idx)
                count = max(count, 1)
            for read in range(idx, idx + count):
                cache.resident.add(read)
            if prev_end is None or idx != prev_end:
                seeks += 1
            prev_end = idx + count
            cache.events.append(ReadEvent(len(cache.events), idx, count))
    return PageReadReport(distinct_pages_read=len(cache.resident),
                          read_events=len(cache.events),
                          seek_count=seeks,
                          events=list(cache.events))


def preload_pages(layout: BinaryLayout) -> int:
    """Pages a sequential whole-region preload would read."""
    return -(-layout.total_size // layout.page_size)


def emit_seek_report(report: PageReadReport,
                     page_size: int = DEFAULT_PAGE_SIZE) -> str:
    """CSV in the seek-trace shape: one line per read event."""
    lines = ["sequence,start_offset_bytes,pages_read"]
    for e in report.events:
        lines.append(f"{e.sequence},{e.start_page * page_size},{e.pages_read}")
    return "\n".join(lines) + "\n"


def summarize(report: PageReadReport, seek_ms: int = DEFAULT_SEEK_MS) -> str:
    return (f"pages={report.distinct_pages_read} events={report.read_events} "
            f"seeks={report.seek_count} "
            f"est_seek_cost_ms={report.seek_count * seek_ms}")


def load_layout_json(text: str, page_size: int = DEFAULT_PAGE_SIZE,
                     alignment: int = DEFAULT_ALIGNMENT) -> BinaryLayout:
    """[{"name": .., "size": ..}] honored in order."""
    items = json.loads(text)
    return layout_functions([(i["name"], i["size"]) for i in items],
                            page_size=page_size, alignment=alignment)
