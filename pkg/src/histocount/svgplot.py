"""Hand-emitted SVG bar and line charts; no plotting dependency, no
timestamps, fixed number formatting, so output bytes are reproducible."""

import numpy as np

WIDTH = 640
HEIGHT = 360
MARGIN_L = 56
MARGIN_R = 16
MARGIN_T = 36
MARGIN_B = 48

TARGET_FILL = "#4878a8"
PRED_FILL = "#e08214"
SERIES_COLORS = ["#4878a8", "#e08214", "#51a051", "#b04040"]


def _esc(s):
    return (
        str(s)
        .replace("&", "&amp;")
        .replace("<", "&lt;")
        .replace(">", "&gt;")
        .replace('"', "&quot;")
    )


def _header(title):
    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>\n',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">\n',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>\n',
    ]
    if title:
        parts.append(
            f'<text x="{WIDTH / 2:.1f}" y="20" text-anchor="middle" '
            f'font-family="sans-serif" font-size="14">{_esc(title)}</text>\n'
        )
    return "".join(parts)


def _axes(y_max, x_labels=None):
    x0, x1 = MARGIN_L, WIDTH - MARGIN_R
    y0, y1 = HEIGHT - MARGIN_B, MARGIN_T
    out = [
        f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>\n',
        f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>\n',
    ]
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        y = y0 - frac * (y0 - y1)
        val = frac * y_max
        out.append(
            f'<text x="{x0 - 6}" y="{y + 4:.1f}" text-anchor="end" '
            f'font-family="sans-serif" font-size="10">{val:.3g}</text>\n'
        )
        if frac > 0:
            out.append(
                f'<line x1="{x0}" y1="{y:.1f}" x2="{x1}" y2="{y:.1f}" '
                f'stroke="#dddddd"/>\n'
            )
    return "".join(out)


def histogram_pair_svg(target_hist, pred_hist, edges, title=""):
    """Side-by-side target/prediction bars, one group per bin, with the
    bin edges labeling the x axis."""
    t = np.asarray(target_hist, dtype=float)
    p = np.asarray(pred_hist, dtype=float)
    edges = np.asarray(edges, dtype=float)
    n = t.size
    if p.size != n or edges.size != n + 1:
        raise ValueError("histogram/edge lengths do not match")
    y_max = max(1.0, float(max(t.max(), p.max())) * 1.05)
    x0, x1 = MARGIN_L, WIDTH - MARGIN_R
    y0, y1 = HEIGHT - MARGIN_B, MARGIN_T
    span = x1 - x0
    group_w = span / n
    bar_w = group_w * 0.38

    out = [_header(title), _axes(y_max)]

    def bar(x, value, fill):
        h = (value / y_max) * (y0 - y1)
        out.append(
            f'<rect x="{x:.2f}" y="{y0 - h:.2f}" width="{bar_w:.2f}" '
            f'height="{h:.2f}" fill="{fill}"/>\n'
        )

    for i in range(n):
        gx = x0 + i * group_w
        bar(gx + group_w * 0.08, t[i], TARGET_FILL)
        bar(gx + group_w * 0.54, p[i], PRED_FILL)
    for i in range(n + 1):
        x = x0 + i * group_w
        out.append(
            f'<text x="{x:.2f}" y="{y0 + 14}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="9">{edges[i]:.0f}</text>\n'
        )
    out.append(
        f'<text x="{(x0 + x1) / 2:.1f}" y="{HEIGHT - 12}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="11">object size (px)</text>\n'
    )
    # legend
    ly = MARGIN_T + 4
    out.append(f'<rect x="{x1 - 150}" y="{ly}" width="10" height="10" fill="{TARGET_FILL}"/>\n')
    out.append(
        f'<text x="{x1 - 136}" y="{ly + 9}" font-family="sans-serif" font-size="10">target</text>\n'
    )
    out.append(f'<rect x="{x1 - 80}" y="{ly}" width="10" height="10" fill="{PRED_FILL}"/>\n')
    out.append(
        f'<text x="{x1 - 66}" y="{ly + 9}" font-family="sans-serif" font-size="10">predicted</text>\n'
    )
    out.append("</svg>\n")
    return "".join(out)


def line_chart_svg(xs, series, title="", xlabel="", ylabel=""):
    """Polyline chart; `series` maps a label to a list of y values."""
    xs = np.asarray(xs, dtype=float)
    if xs.size < 1:
        raise ValueError("need at least one x value")
    y_max = 1e-12
    for ys in series.values():
        if len(ys) != xs.size:
            raise ValueError("series length does not match xs")
        y_max = max(y_max, float(np.max(ys)))
    y_max *= 1.05
    x_min, x_max = float(xs.min()), float(xs.max())
    x_span = (x_max - x_min) or 1.0
    x0, x1 = MARGIN_L, WIDTH - MARGIN_R
    y0, y1 = HEIGHT - MARGIN_B, MARGIN_T

    def px(x):
        return x0 + (x - x_min) / x_span * (x1 - x0)

    def py(y):
        return y0 - (y / y_max) * (y0 - y1)

    out = [_header(title), _axes(y_max)]
    for k, (label, ys) in enumerate(sorted(series.items())):
        color = SERIES_COLORS[k % len(SERIES_COLORS)]
        pts = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in zip(xs, ys))
        out.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="2"/>\n'
        )
        for x, y in zip(xs, ys):
            out.append(
                f'<circle cx="{px(x):.2f}" cy="{py(y):.2f}" r="3" fill="{color}"/>\n'
            )
        ly = MARGIN_T + 6 + 14 * k
        out.append(f'<rect x="{x1 - 120}" y="{ly}" width="10" height="10" fill="{color}"/>\n')
        out.append(
            f'<text x="{x1 - 106}" y="{ly + 9}" font-family="sans-serif" '
            f'font-size="10">{_esc(label)}</text>\n'
        )
    for x in xs:
        out.append(
            f'<text x="{px(x):.2f}" y="{y0 + 14}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="9">{x:g}</text>\n'
        )
    if xlabel:
        out.append(
            f'<text x="{(x0 + x1) / 2:.1f}" y="{HEIGHT - 12}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="11">{_esc(xlabel)}</text>\n'
        )
    if ylabel:
        out.append(
            f'<text x="14" y="{(y0 + y1) / 2:.1f}" font-family="sans-serif" '
            f'font-size="11" transform="rotate(-90 14 {(y0 + y1) / 2:.1f})" '
            f'text-anchor="middle">{_esc(ylabel)}</text>\n'
        )
    out.append("</svg>\n")
    return "".join(out)
