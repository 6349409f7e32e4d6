"""CSV and SVG renderings of a simulated timeline.

Both outputs are pure functions of the timeline, so identical inputs give
byte-identical files.
"""

import csv
import io
from html import escape

from .simulator import EventKind, _KIND_RANK

CSV_COLUMNS = ("stage", "kind", "micro_batch", "start_us", "end_us")

COLORS = {
    EventKind.FP: "#4e79a7",
    EventKind.BP: "#f28e2b",
    EventKind.SEND_F: "#59a14f",
    EventKind.RECV_F: "#8cd17d",
    EventKind.SEND_B: "#b07aa1",
    EventKind.RECV_B: "#d4a6c8",
}


def _global_mb(event, M):
    return event.minibatch * M + event.micro_batch


def _csv_order(timeline):
    return sorted(timeline.events,
                  key=lambda e: (e.stage, e.start, _KIND_RANK[e.kind], _global_mb(e, timeline.M),
                                 e.end))


def to_csv(timeline):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for e in _csv_order(timeline):
        writer.writerow((e.stage, e.kind.value, _global_mb(e, timeline.M), e.start, e.end))
    return buf.getvalue().encode("utf-8")


ROW_H = 36
LEFT = 70
TOP = 30
WIDTH = 1000


def _fmt(x):
    return f"{x:.2f}".rstrip("0").rstrip(".")


def to_svg(timeline, title=None):
    span = max(timeline.makespan, 1)
    scale = WIDTH / span
    height = TOP + ROW_H * max(timeline.N, 1) + 30
    title = title or f"{timeline.schedule.value}  M={timeline.M}  N={timeline.N}  makespan={timeline.makespan}us"
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{LEFT + WIDTH + 20}" height="{height}" '
        f'font-family="monospace" font-size="10">',
        f'<text x="{LEFT}" y="16" font-size="12">{escape(title)}</text>',
    ]
    for s in range(1, timeline.N + 1):
        y = TOP + (s - 1) * ROW_H
        out.append(f'<text x="4" y="{y + ROW_H // 2}">stage {s}</text>')
        out.append(f'<line x1="{LEFT}" y1="{y + ROW_H - 2}" x2="{LEFT + WIDTH}" '
                   f'y2="{y + ROW_H - 2}" stroke="#dddddd"/>')
    for e in _csv_order(timeline):
        y = TOP + (e.stage - 1) * ROW_H
        # compute band: FP on top, BP below (they overlap under FBP-AS); comm band at the bottom
        if e.kind is EventKind.FP:
            y0, h = y, 12
        elif e.kind is EventKind.BP:
            y0, h = y + 12, 12
        else:
            y0, h = y + 26, 6
        x = LEFT + e.start * scale
        w = max((e.end - e.start) * scale, 0.5)
        mb = _global_mb(e, timeline.M)
        out.append(f'<rect x="{_fmt(x)}" y="{y0}" width="{_fmt(w)}" height="{h}" '
                   f'fill="{COLORS[e.kind]}" stroke="#ffffff" stroke-width="0.5">'
                   f'<title>{e.kind.value} m={mb} [{e.start},{e.end})</title></rect>')
        if e.kind.is_compute and w >= 14:
            out.append(f'<text x="{_fmt(x + 2)}" y="{y0 + 9}" fill="#ffffff">{mb}</text>')
    axis_y = TOP + ROW_H * timeline.N + 14
    out.append(f'<text x="{LEFT}" y="{axis_y}">0</text>')
    out.append(f'<text x="{LEFT + WIDTH - 40}" y="{axis_y}">{timeline.makespan}us</text>')
    out.append("</svg>")
    return ("\n".join(out) + "\n").encode("utf-8")
