"""SVG curves of the critical mass and the sharp constant against ``p``."""
from __future__ import annotations

import io
import logging
import math
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

log = logging.getLogger(__name__)

CURVES = (
    ("c0_routeA", "critical mass $c_0$", "c0_vs_p.svg"),
    ("C_best", "sharp constant $C$", "cbest_vs_p.svg"),
)


def _series(rows, key):
    groups = defaultdict(list)
    for r in rows:
        y = r[key]
        if isinstance(y, float) and math.isnan(y):
            continue
        groups[(r["N"], r["s_low"], r["s_high"])].append((r["p"], y))
    return {k: sorted(v) for k, v in sorted(groups.items())}


def _data_comment(rows, key) -> str:
    lines = [f"data: N,s_low,s_high,p,{key}"]
    for r in rows:
        lines.append(f"{r['N']},{r['s_low']!r},{r['s_high']!r},{r['p']!r},{r[key]!r}")
    body = "\n".join(lines).replace("--", "- -")
    return f"<!--\n{body}\n-->\n"


def render_curve(rows, key: str, ylabel: str) -> str:
    """Return standalone SVG text; the plotted table is embedded as a comment."""
    with matplotlib.rc_context({"svg.hashsalt": "mixedgn", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(5.0, 3.6))
        for (N, sl, sh), pts in _series(rows, key).items():
            ps, ys = zip(*pts)
            ax.plot(ps, ys, marker="o", lw=1.2, label=f"N={N}, s=({sl:g}, {sh:g})")
        ax.set_xlabel("$p$")
        ax.set_ylabel(ylabel)
        if ax.lines:
            ax.legend(fontsize=8)
        fig.tight_layout()
        buf = io.StringIO()
        fig.savefig(buf, format="svg", metadata={"Date": None})
        plt.close(fig)
    svg = buf.getvalue()
    head, sep, tail = svg.partition("?>\n")
    if not sep:
        return _data_comment(rows, key) + svg
    return head + sep + _data_comment(rows, key) + tail


def write_report(rows, out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if not rows:
        log.warning("no rows to plot; writing empty axes")
    paths = []
    for key, label, name in CURVES:
        path = out_dir / name
        path.write_text(render_curve(rows, key, label))
        paths.append(path)
    return paths
