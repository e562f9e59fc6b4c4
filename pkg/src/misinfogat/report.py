"""Static HTML rendering of evaluation runs and per-node explanations.

One index page with the modality ablation table, one page per explained
node showing the tweet, its engagement counts, the classification, the
grouped feature-importance bars, and a token heat strip (green supports
the shown label, red opposes, opacity proportional to |normalized|).
Everything is inline; the pages load with no network access.
"""

from __future__ import annotations

import html
import re
from pathlib import Path

from .graphlime import GROUP_NAMES
from .training import MODE_DISPLAY

_MODE_ROWS = [(mode.value, label) for mode, label in MODE_DISPLAY.items()]

_CSS = """
body { font-family: Georgia, serif; margin: 2em auto; max-width: 46em; color: #222; }
table { border-collapse: collapse; margin: 1em 0; }
td, th { border: 1px solid #999; padding: 0.3em 0.8em; text-align: left; }
.bar { background: #4a6fa5; height: 1em; display: inline-block; vertical-align: middle; }
.barrow { margin: 0.25em 0; }
.barlabel { display: inline-block; width: 11em; }
.strip span { padding: 0.15em 0.25em; margin: 0 0.1em; border-radius: 3px; }
.verdict { font-weight: bold; }
blockquote { border-left: 3px solid #ccc; margin-left: 0; padding-left: 1em; }
"""


class WriteFailure(OSError):
    def __init__(self, path, cause):
        self.path = str(path)
        super().__init__(f"could not write {path}: {cause}")


def _page(title: str, body: str) -> str:
    return (
        "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\">"
        f"<title>{html.escape(title)}</title><style>{_CSS}</style></head>\n"
        f"<body>\n{body}\n</body></html>\n"
    )


def _safe_name(node_id: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]", "_", node_id)


def render_index(run_report: dict, node_ids: list[str]) -> str:
    rows = []
    for value, label in _MODE_ROWS:
        cell = run_report.get(value)
        shown = f"{cell['mean']:.4f} ± {cell['std']:.4f}" if cell else "—"
        rows.append(f"<tr><td>{html.escape(label)}</td><td>{shown}</td></tr>")
    links = "".join(
        f'<li><a href="node_{_safe_name(nid)}.html">{html.escape(nid)}</a></li>'
        for nid in node_ids
    )
    body = (
        "<h1>Misinformation ablation report</h1>\n"
        "<table><tr><th>Modality</th><th>F1 (mean ± std)</th></tr>\n"
        + "\n".join(rows)
        + "\n</table>\n"
        + (f"<h2>Explained nodes</h2>\n<ul>{links}</ul>" if links else "")
    )
    return _page("Ablation report", body)


def _heat_strip(attribution: dict) -> str:
    spans = []
    for token, value in zip(attribution["tokens"], attribution["normalized"]):
        color = "0,128,0" if value > 0 else "200,32,32"
        spans.append(
            f'<span style="background: rgba({color},{abs(value):.4f})">'
            f"{html.escape(token)}</span>"
        )
    return '<div class="strip">' + "".join(spans) + "</div>"


def _grouped_bars(explanation: dict) -> str:
    grouped = explanation["grouped"]
    scores = [grouped["replies"], grouped["quotes"], grouped["retweets"], grouped["text"]]
    peak = max(scores) if max(scores) > 0 else 1.0
    rows = []
    for name, score in zip(GROUP_NAMES, scores):
        width = 100.0 * score / peak
        rows.append(
            f'<div class="barrow"><span class="barlabel">{html.escape(name)}</span>'
            f'<span class="bar" style="width:{width:.1f}px"></span> {score:.4f}</div>'
        )
    return "\n".join(rows)


def render_node_page(
    explanation: dict, attribution: dict | None, meta: dict | None
) -> str:
    nid = explanation["node_id"]
    meta = meta or {}
    text = meta.get("text", "(unavailable)")
    parts = [f"<h1>Node {html.escape(nid)}</h1>"]
    parts.append(f"<h2>Tweet</h2><blockquote>{html.escape(text)}</blockquote>")
    parts.append(
        "<h2>Engagement</h2><table>"
        f"<tr><th>Replies</th><td>{meta.get('reply_count', '—')}</td></tr>"
        f"<tr><th>Quotes</th><td>{meta.get('quote_count', '—')}</td></tr>"
        f"<tr><th>Retweets</th><td>{meta.get('retweet_count', '—')}</td></tr>"
        "</table>"
    )
    parts.append(
        "<h2>Classification</h2>"
        f'<p class="verdict">{html.escape(explanation["label"])} '
        f"(P(misinformation) = {explanation['probability']:.4f})</p>"
    )
    parts.append("<h2>Feature importance</h2>\n" + _grouped_bars(explanation))
    if attribution is not None:
        parts.append("<h2>Word importance</h2>\n" + _heat_strip(attribution))
    return _page(f"Node {nid}", "\n".join(parts))


def render_report(
    explanations: list[dict],
    attributions: list[dict],
    run_report: dict,
    out_dir,
    metadata: dict | None = None,
) -> list[str]:
    """Write index + per-node pages; returns the written paths."""
    out = Path(out_dir)
    attr_by_id = {a["node_id"]: a for a in attributions}
    meta = metadata or {}
    ordered = sorted(explanations, key=lambda e: e["node_id"])
    written = []

    def emit(path: Path, content: str):
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(content, encoding="utf-8")
        except OSError as exc:
            raise WriteFailure(path, exc) from exc
        written.append(str(path))

    emit(out / "index.html", render_index(run_report, [e["node_id"] for e in ordered]))
    for exp in ordered:
        nid = exp["node_id"]
        page = render_node_page(exp, attr_by_id.get(nid), meta.get(nid))
        emit(out / f"node_{_safe_name(nid)}.html", page)
    return written
