"""Tiny deterministic SVG emitters for report plots.

Hand-rolled rather than a plotting library so that identical inputs always
produce byte-identical files (no timestamps or renderer metadata).
"""

from __future__ import annotations

PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b")
WIDTH, HEIGHT = 640, 400
MARGIN = 56


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def _scale(values, lo, hi, out_lo, out_hi):
    span = hi - lo if hi > lo else 1.0
    return [out_lo + (v - lo) / span * (out_hi - out_lo) for v in values]


def _frame(title: str, x_label: str, y_label: str) -> list[str]:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2}" y="20" text-anchor="middle" font-size="14" '
        f'font-family="sans-serif">{title}</text>',
        f'<text x="{WIDTH / 2}" y="{HEIGHT - 8}" text-anchor="middle" font-size="12" '
        f'font-family="sans-serif">{x_label}</text>',
        f'<text x="14" y="{HEIGHT / 2}" text-anchor="middle" font-size="12" '
        f'font-family="sans-serif" transform="rotate(-90 14 {HEIGHT / 2})">{y_label}</text>',
        f'<rect x="{MARGIN}" y="{MARGIN / 2}" width="{WIDTH - 2 * MARGIN}" '
        f'height="{HEIGHT - MARGIN - MARGIN / 2}" fill="none" stroke="#888"/>',
    ]


def line_plot(series: dict[str, tuple[list[float], list[float]]], title: str = "",
              x_label: str = "", y_label: str = "") -> str:
    """Multi-series line plot; series maps name -> (xs, ys)."""
    all_x = [x for xs, _ in series.values() for x in xs]
    all_y = [y for _, ys in series.values() for y in ys]
    x_lo, x_hi = min(all_x), max(all_x)
    y_lo, y_hi = min(all_y + [0.0]), max(all_y + [0.0])
    parts = _frame(title, x_label, y_label)
    plot_l, plot_r = MARGIN, WIDTH - MARGIN
    plot_t, plot_b = MARGIN / 2, HEIGHT - MARGIN
    for idx, (name, (xs, ys)) in enumerate(series.items()):
        color = PALETTE[idx % len(PALETTE)]
        px = _scale(xs, x_lo, x_hi, plot_l, plot_r)
        py = _scale(ys, y_lo, y_hi, plot_b, plot_t)
        points = " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in zip(px, py))
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{points}"/>')
        for a, b in zip(px, py):
            parts.append(f'<circle cx="{_fmt(a)}" cy="{_fmt(b)}" r="3" fill="{color}"/>')
        parts.append(
            f'<text x="{plot_r - 150}" y="{plot_t + 16 + 16 * idx}" font-size="12" '
            f'font-family="sans-serif" fill="{color}">{name}</text>'
        )
    # axis extremes
    parts.append(
        f'<text x="{plot_l}" y="{plot_b + 16}" font-size="10" font-family="sans-serif" '
        f'text-anchor="middle">{x_lo:g}</text>'
    )
    parts.append(
        f'<text x="{plot_r}" y="{plot_b + 16}" font-size="10" font-family="sans-serif" '
        f'text-anchor="middle">{x_hi:g}</text>'
    )
    parts.append(
        f'<text x="{plot_l - 6}" y="{plot_b}" font-size="10" font-family="sans-serif" '
        f'text-anchor="end">{y_lo:.2f}</text>'
    )
    parts.append(
        f'<text x="{plot_l - 6}" y="{plot_t + 10}" font-size="10" font-family="sans-serif" '
        f'text-anchor="end">{y_hi:.2f}</text>'
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def grouped_bars(groups: list[str], series: dict[str, list[float]],
                 errors: dict[str, list[float]] | None = None, title: str = "",
                 y_label: str = "") -> str:
    """Grouped bar chart with optional standard-error whiskers.

    `series` maps a bar name to one value per group.
    """
    names = list(series)
    highs = [v + (errors[n][g] if errors else 0.0)
             for n in names for g, v in enumerate(series[n])]
    y_hi = max(highs + [0.0]) * 1.1 or 1.0
    parts = _frame(title, "", y_label)
    plot_l, plot_r = MARGIN, WIDTH - MARGIN
    plot_t, plot_b = MARGIN / 2, HEIGHT - MARGIN
    group_w = (plot_r - plot_l) / max(1, len(groups))
    bar_w = group_w / (len(names) + 1)

    def y_of(v: float) -> float:
        return plot_b - v / y_hi * (plot_b - plot_t)

    for g, group in enumerate(groups):
        x0 = plot_l + g * group_w + bar_w / 2
        for s, name in enumerate(names):
            value = series[name][g]
            color = PALETTE[s % len(PALETTE)]
            x = x0 + s * bar_w
            top = y_of(value)
            parts.append(
                f'<rect x="{_fmt(x)}" y="{_fmt(top)}" width="{_fmt(bar_w * 0.9)}" '
                f'height="{_fmt(plot_b - top)}" fill="{color}"/>'
            )
            if errors is not None:
                err = errors[name][g]
                cx = x + bar_w * 0.45
                parts.append(
                    f'<line x1="{_fmt(cx)}" y1="{_fmt(y_of(value - err))}" '
                    f'x2="{_fmt(cx)}" y2="{_fmt(y_of(value + err))}" stroke="black"/>'
                )
        parts.append(
            f'<text x="{_fmt(x0 + bar_w * len(names) / 2)}" y="{plot_b + 16}" font-size="11" '
            f'font-family="sans-serif" text-anchor="middle">{group}</text>'
        )
    for s, name in enumerate(names):
        color = PALETTE[s % len(PALETTE)]
        parts.append(
            f'<text x="{plot_r - 120}" y="{plot_t + 16 + 16 * s}" font-size="12" '
            f'font-family="sans-serif" fill="{color}">{name}</text>'
        )
    parts.append(
        f'<text x="{plot_l - 6}" y="{plot_t + 10}" font-size="10" font-family="sans-serif" '
        f'text-anchor="end">{y_hi:.2f}</text>'
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
