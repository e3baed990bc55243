"""Minimal static SVG plots (text output, no rendering dependency).

Coordinates are printed with three decimals, so identical inputs give
byte-identical files.
"""
import numpy as np

COLORS = {"honly": "#1b9e77", "nocomp": "#d95f02", "comp": "#7570b3"}
W, H, PAD = 640, 400, 50


def _f(v):
    return f"{v:.3f}"


def _header(title):
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
        f'viewBox="0 0 {W} {H}">',
        f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
        f'<text x="{W / 2}" y="20" text-anchor="middle" font-size="14">{title}</text>',
    ]


def _scale(lo, hi, a, b):
    span = hi - lo if hi > lo else 1.0
    return lambda v: a + (np.asarray(v, dtype=float) - lo) * (b - a) / span


def _axes(xlo, xhi, ylo, yhi, xlabel, ylabel):
    out = [
        f'<line x1="{PAD}" y1="{H - PAD}" x2="{W - PAD}" y2="{H - PAD}" stroke="black"/>',
        f'<line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{H - PAD}" stroke="black"/>',
        f'<text x="{W / 2}" y="{H - 10}" text-anchor="middle" font-size="12">{xlabel}</text>',
        f'<text x="15" y="{H / 2}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 15 {H / 2})">{ylabel}</text>',
        f'<text x="{PAD}" y="{H - PAD + 15}" font-size="10">{xlo:.3g}</text>',
        f'<text x="{W - PAD}" y="{H - PAD + 15}" text-anchor="end" font-size="10">{xhi:.3g}</text>',
        f'<text x="{PAD - 5}" y="{H - PAD}" text-anchor="end" font-size="10">{ylo:.3g}</text>',
        f'<text x="{PAD - 5}" y="{PAD + 5}" text-anchor="end" font-size="10">{yhi:.3g}</text>',
    ]
    return out


def _legend(names):
    out = []
    for i, name in enumerate(names):
        y = PAD + 15 * i
        c = COLORS.get(name, "black")
        out.append(f'<line x1="{W - PAD - 80}" y1="{y}" x2="{W - PAD - 60}" y2="{y}" '
                   f'stroke="{c}" stroke-width="2"/>')
        out.append(f'<text x="{W - PAD - 55}" y="{y + 4}" font-size="10">{name}</text>')
    return out


def line_plot(series, title, xlabel, ylabel, max_points=800):
    """``series``: {name: (x, y)}; long series are decimated evenly."""
    xs = np.concatenate([np.asarray(x, dtype=float) for x, _ in series.values()])
    ys = np.concatenate([np.asarray(y, dtype=float) for _, y in series.values()])
    xlo, xhi = float(xs.min()), float(xs.max())
    ylo, yhi = min(0.0, float(ys.min())), float(ys.max())
    sx = _scale(xlo, xhi, PAD, W - PAD)
    sy = _scale(ylo, yhi, H - PAD, PAD)
    out = _header(title) + _axes(xlo, xhi, ylo, yhi, xlabel, ylabel)
    for name, (x, y) in series.items():
        x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        step = max(1, int(np.ceil(len(x) / max_points)))
        idx = np.r_[np.arange(0, len(x), step), len(x) - 1] if len(x) else np.arange(0)
        pts = " ".join(f"{_f(a)},{_f(b)}" for a, b in zip(sx(x[idx]), sy(y[idx])))
        out.append(f'<polyline fill="none" stroke="{COLORS.get(name, "black")}" '
                   f'stroke-width="1.5" points="{pts}"/>')
    out += _legend(list(series)) + ["</svg>"]
    return "\n".join(out) + "\n"


def ellipse_plot(clouds, ellipses, title, xlabel="Fx [N]", ylabel="Fy [N]", max_points=400):
    """Scatter of 2-D samples with their ForceEllipse outlines (equal axes)."""
    pts_all = [np.asarray(c, dtype=float) for c in clouds.values()]
    ext = [np.abs(p).max() for p in pts_all if p.size]
    for e in ellipses.values():
        ext.append(np.abs(e.center).max() + e.semi_axes[0])
    r = max(ext + [1e-9])
    s = _scale(-r, r, PAD, H - PAD)
    sy = _scale(-r, r, H - PAD, PAD)
    out = _header(title) + _axes(-r, r, -r, r, xlabel, ylabel)
    for name, cloud in clouds.items():
        c = COLORS.get(name, "black")
        cloud = np.asarray(cloud, dtype=float)
        step = max(1, int(np.ceil(len(cloud) / max_points)))
        for x, y in zip(s(cloud[::step, 0]), sy(cloud[::step, 1])):
            out.append(f'<circle cx="{_f(x)}" cy="{_f(y)}" r="1" fill="{c}" opacity="0.4"/>')
    for name, e in ellipses.items():
        c = COLORS.get(name, "black")
        t = np.linspace(0.0, 2 * np.pi, 73)
        ca, sa = np.cos(e.orientation), np.sin(e.orientation)
        ex = e.center[0] + e.semi_axes[0] * np.cos(t) * ca - e.semi_axes[1] * np.sin(t) * sa
        ey = e.center[1] + e.semi_axes[0] * np.cos(t) * sa + e.semi_axes[1] * np.sin(t) * ca
        pts = " ".join(f"{_f(a)},{_f(b)}" for a, b in zip(s(ex), sy(ey)))
        out.append(f'<polyline fill="none" stroke="{c}" stroke-width="2" points="{pts}"/>')
    out += _legend(list(clouds)) + ["</svg>"]
    return "\n".join(out) + "\n"


def bar_plot(values, errors, title, ylabel):
    """One bar per name with a +-error whisker."""
    names = list(values)
    top = max([values[n] + errors.get(n, 0.0) for n in names] + [1e-12])
    sy = _scale(0.0, top, H - PAD, PAD)
    width = (W - 2 * PAD) / max(len(names), 1)
    out = _header(title) + _axes(0, len(names), 0.0, top, "", ylabel)
    for i, n in enumerate(names):
        x0 = PAD + i * width + 0.2 * width
        y = float(sy(values[n]))
        c = COLORS.get(n, "gray")
        out.append(f'<rect x="{_f(x0)}" y="{_f(y)}" width="{_f(0.6 * width)}" '
                   f'height="{_f(H - PAD - y)}" fill="{c}"/>')
        e = errors.get(n, 0.0)
        if e > 0:
            xm = x0 + 0.3 * width
            out.append(f'<line x1="{_f(xm)}" y1="{_f(float(sy(values[n] - e)))}" x2="{_f(xm)}" '
                       f'y2="{_f(float(sy(values[n] + e)))}" stroke="black"/>')
        out.append(f'<text x="{_f(x0 + 0.3 * width)}" y="{H - PAD + 28}" text-anchor="middle" '
                   f'font-size="11">{n}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
