"""Static SVG renderers for the CLI artifacts.

Every renderer is deterministic: fixed canvas, fixed sampling, fixed
number formatting, no timestamps.  Reruns on identical data produce
byte-identical files, which is what makes golden-file diffs meaningful.
"""
from __future__ import annotations

import math
from typing import Optional, Sequence

import numpy as np

__all__ = ["KINDS", "EmptyArtifactError", "render"]

KINDS = ("ACCESS_HEATMAP", "PHI_PLOT", "RULES_3D_PROJECTION", "RULES_XY",
         "MESH")

WIDTH = 640
HEIGHT = 480
MARGIN_L = 62
MARGIN_R = 18
MARGIN_T = 18
MARGIN_B = 46

# cavalier projection used for the two 3-d kinds
DEPTH_X = 0.35
DEPTH_Y = 0.18


class EmptyArtifactError(ValueError):
    """Raised when a renderer receives nothing to draw."""


def _f(v: float) -> str:
    return f"{v:.2f}"


class _Frame:
    """Data rectangle to pixel rectangle, y axis flipped."""

    def __init__(self, x0, x1, y0, y1):
        if not (x1 > x0 and y1 > y0):
            raise EmptyArtifactError("empty artifact: degenerate view box")
        self.x0, self.x1, self.y0, self.y1 = x0, x1, y0, y1
        self.sx = (WIDTH - MARGIN_L - MARGIN_R) / (x1 - x0)
        self.sy = (HEIGHT - MARGIN_T - MARGIN_B) / (y1 - y0)

    @classmethod
    def around(cls, xs, ys, pad: float = 0.05) -> "_Frame":
        xs = np.asarray(xs, dtype=float).ravel()
        ys = np.asarray(ys, dtype=float).ravel()
        keep = np.isfinite(xs) & np.isfinite(ys)
        if not keep.any():
            raise EmptyArtifactError("empty artifact: no finite samples")
        xs, ys = xs[keep], ys[keep]
        x0, x1 = float(xs.min()), float(xs.max())
        y0, y1 = float(ys.min()), float(ys.max())
        dx = max(x1 - x0, 1e-9)
        dy = max(y1 - y0, 1e-9)
        return cls(x0 - pad * dx, x1 + pad * dx, y0 - pad * dy,
                   y1 + pad * dy)

    def px(self, x) -> float:
        return MARGIN_L + (x - self.x0) * self.sx

    def py(self, y) -> float:
        return HEIGHT - MARGIN_B - (y - self.y0) * self.sy


def _axes(frame: _Frame, x_label: str, y_label: str) -> list:
    parts = [
        f'<rect x="{_f(MARGIN_L)}" y="{_f(MARGIN_T)}"'
        f' width="{_f(WIDTH - MARGIN_L - MARGIN_R)}"'
        f' height="{_f(HEIGHT - MARGIN_T - MARGIN_B)}"'
        ' fill="none" stroke="#444" stroke-width="1"/>'
    ]
    for tick in np.linspace(frame.x0, frame.x1, 5):
        px = frame.px(tick)
        parts.append(f'<line x1="{_f(px)}" y1="{_f(HEIGHT - MARGIN_B)}"'
                     f' x2="{_f(px)}" y2="{_f(HEIGHT - MARGIN_B + 5)}"'
                     ' stroke="#444" stroke-width="1"/>')
        parts.append(f'<text x="{_f(px)}" y="{_f(HEIGHT - MARGIN_B + 18)}"'
                     ' font-size="11" text-anchor="middle"'
                     f' fill="#222">{tick:.4g}</text>')
    for tick in np.linspace(frame.y0, frame.y1, 5):
        py = frame.py(tick)
        parts.append(f'<line x1="{_f(MARGIN_L - 5)}" y1="{_f(py)}"'
                     f' x2="{_f(MARGIN_L)}" y2="{_f(py)}"'
                     ' stroke="#444" stroke-width="1"/>')
        parts.append(f'<text x="{_f(MARGIN_L - 8)}" y="{_f(py + 4)}"'
                     ' font-size="11" text-anchor="end"'
                     f' fill="#222">{tick:.4g}</text>')
    parts.append(f'<text x="{_f((MARGIN_L + WIDTH - MARGIN_R) / 2)}"'
                 f' y="{_f(HEIGHT - 8)}" font-size="12"'
                 f' text-anchor="middle" fill="#222">{x_label}</text>')
    parts.append(f'<text x="14" y="{_f((MARGIN_T + HEIGHT - MARGIN_B) / 2)}"'
                 ' font-size="12" text-anchor="middle" fill="#222"'
                 f' transform="rotate(-90 14'
                 f' {_f((MARGIN_T + HEIGHT - MARGIN_B) / 2)})"'
                 f'>{y_label}</text>')
    return parts


def _doc(body: Sequence) -> str:
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}"'
            f' height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}"'
            ' font-family="Menlo, monospace">')
    bg = f'<rect width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>'
    return "\n".join([head, bg, *body, "</svg>"]) + "\n"


def _polyline(frame: _Frame, xs, ys, color: str, width: float = 1.5,
              dash: str = "") -> str:
    pts = " ".join(f"{_f(frame.px(x))},{_f(frame.py(y))}"
                   for x, y in zip(xs, ys))
    extra = f' stroke-dasharray="{dash}"' if dash else ""
    return (f'<polyline points="{pts}" fill="none" stroke="{color}"'
            f' stroke-width="{width}"{extra}/>')


def _dot(frame: _Frame, x, y, color: str, r: float = 3.5) -> str:
    return (f'<circle cx="{_f(frame.px(x))}" cy="{_f(frame.py(y))}"'
            f' r="{_f(r)}" fill="{color}"/>')


# ---------------------------------------------------------------------------
# heatmap


def _heat_color(q: int) -> str:
    # q in [-7, 7]: blue for negative, white at zero, red for positive
    if q < 0:
        f = -q / 7.0
        r, g, b = 255 - int(215 * f), 255 - int(175 * f), 255 - int(55 * f)
    else:
        f = q / 7.0
        r, g, b = 255 - int(55 * f), 255 - int(195 * f), 255 - int(205 * f)
    return f"#{r:02x}{g:02x}{b:02x}"


def access_heatmap(thetas, values, *, x_label: str = "t",
                   y_label: str = "theta") -> str:
    """Signed heatmap of a function on a square parameter grid.

    Cells are quantized to 15 levels and merged into horizontal runs, so
    the file stays small even for dense grids; the zero set reads as the
    white band between the blue and red regions.
    """
    thetas = np.asarray(thetas, dtype=float)
    values = np.asarray(values, dtype=float)
    if thetas.size == 0 or values.size == 0:
        raise EmptyArtifactError("empty artifact: no heatmap samples")
    if values.shape != (thetas.size, thetas.size):
        raise ValueError("values must be square over the sample grid")

    stride = max(1, int(math.ceil(thetas.size / 128)))
    sub = thetas[::stride]
    grid = values[::stride, ::stride]
    n = sub.size
    vmax = float(np.nanmax(np.abs(grid)))
    if not (vmax > 0):
        raise EmptyArtifactError("empty artifact: heatmap is identically 0")
    q = np.round(7.0 * np.clip(grid / vmax, -1.0, 1.0))
    q = np.nan_to_num(q, nan=0.0).astype(int)

    step = float(sub[1] - sub[0]) if n > 1 else 1.0
    lo = float(sub[0]) - 0.5 * step
    hi = float(sub[-1]) + 0.5 * step
    frame = _Frame(lo, hi, lo, hi)
    cells = []
    ch = abs(frame.sy) * step + 0.5
    for j in range(n):
        ytop = frame.py(sub[j] + 0.5 * step)
        i = 0
        while i < n:
            k = i
            while k + 1 < n and q[k + 1, j] == q[i, j]:
                k += 1
            xl = frame.px(sub[i] - 0.5 * step)
            w = frame.px(sub[k] + 0.5 * step) - xl + 0.5
            cells.append(f'<rect x="{_f(xl)}" y="{_f(ytop)}"'
                         f' width="{_f(w)}" height="{_f(ch)}"'
                         f' fill="{_heat_color(int(q[i, j]))}"/>')
            i = k + 1
    return _doc([*cells, *_axes(frame, x_label, y_label)])


# ---------------------------------------------------------------------------
# branch plot


def phi_plot(t, phi, *, obstruction_t=None, diagonal_t=None,
             period: float = 2.0 * math.pi) -> str:
    """Partner parameter against base parameter along a traced branch."""
    t = np.asarray(t, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if t.size < 2:
        raise EmptyArtifactError("empty artifact: branch has no samples")
    frame = _Frame.around(np.concatenate([t, t]),
                          np.concatenate([phi, t + period]))
    body = []
    for off, label in ((0.0, "diag"), (period, "diag+period")):
        body.append(_polyline(frame, [frame.x0, frame.x1],
                              [frame.x0 + off, frame.x1 + off],
                              "#999999", 1.0, dash="4,4"))
    body.append(_polyline(frame, t, phi, "#1f5fb4", 1.8))
    if obstruction_t is not None:
        k = int(np.argmin(np.abs(t - obstruction_t)))
        body.append(_dot(frame, t[k], phi[k], "#c23030"))
    if diagonal_t is not None:
        body.append(_dot(frame, t[-1], phi[-1], "#2e8b57"))
    return _doc([*body, *_axes(frame, "t", "phi")])


# ---------------------------------------------------------------------------
# rules, planar and projected


def rules_xy(segments, *, boundary=None, vertex=None,
             char_points=None) -> str:
    """Planar segments (rules or chords) with an optional outline."""
    segs = np.asarray(segments, dtype=float)
    if segs.size == 0:
        raise EmptyArtifactError("empty artifact: no segments to draw")
    if segs.ndim != 3 or segs.shape[1:] != (2, 2):
        raise ValueError("segments must have shape (n, 2, 2)")
    xs = [segs[:, :, 0]]
    ys = [segs[:, :, 1]]
    if boundary is not None:
        boundary = np.asarray(boundary, dtype=float)
        xs.append(boundary[:, 0])
        ys.append(boundary[:, 1])
    frame = _Frame.around(np.concatenate([a.ravel() for a in xs]),
                          np.concatenate([a.ravel() for a in ys]))
    body = []
    for seg in segs:
        body.append(_polyline(frame, seg[:, 0], seg[:, 1], "#1f5fb4", 1.0))
    if boundary is not None:
        body.append(_polyline(frame, boundary[:, 0], boundary[:, 1],
                              "#222222", 1.8))
    if char_points is not None:
        for cx, cy in np.asarray(char_points, dtype=float).reshape(-1, 2):
            body.append(_dot(frame, cx, cy, "#c23030", 3.0))
    if vertex is not None:
        body.append(_dot(frame, vertex[0], vertex[1], "#2e8b57", 4.0))
    return _doc([*body, *_axes(frame, "x", "y")])


def _project(pts: np.ndarray) -> np.ndarray:
    out = np.empty(pts.shape[:-1] + (2,))
    out[..., 0] = pts[..., 0] + DEPTH_X * pts[..., 1]
    out[..., 1] = pts[..., 2] + DEPTH_Y * pts[..., 1]
    return out


def rules_3d(segments, *, boundary=None) -> str:
    """Cavalier projection of space segments, plus the frame axes."""
    segs = np.asarray(segments, dtype=float)
    if segs.size == 0:
        raise EmptyArtifactError("empty artifact: no segments to draw")
    if segs.ndim != 3 or segs.shape[1:] != (2, 3):
        raise ValueError("segments must have shape (n, 2, 3)")
    flat = [_project(segs).reshape(-1, 2)]
    bnd2 = None
    if boundary is not None:
        bnd2 = _project(np.asarray(boundary, dtype=float))
        flat.append(bnd2)
    allpts = np.concatenate(flat)
    scale = 0.25 * float(np.nanmax(np.abs(allpts))) or 1.0
    axes3 = scale * np.array([[1.0, 0, 0], [0, 1.0, 0], [0, 0, 1.0]])
    axes2 = _project(axes3)
    frame = _Frame.around(np.concatenate([allpts[:, 0], axes2[:, 0], [0]]),
                          np.concatenate([allpts[:, 1], axes2[:, 1], [0]]))
    body = []
    for vec, name in zip(axes2, ("x", "y", "t")):
        body.append(_polyline(frame, [0, vec[0]], [0, vec[1]],
                              "#888888", 1.0))
        body.append(f'<text x="{_f(frame.px(vec[0] * 1.12))}"'
                    f' y="{_f(frame.py(vec[1] * 1.12))}" font-size="11"'
                    f' text-anchor="middle" fill="#555">{name}</text>')
    proj = _project(segs)
    for seg in proj:
        body.append(_polyline(frame, seg[:, 0], seg[:, 1], "#1f5fb4", 1.0))
    if bnd2 is not None:
        body.append(_polyline(frame, bnd2[:, 0], bnd2[:, 1], "#222222", 1.8))
    return _doc([*body, *_axes(frame, "x + depth", "t + depth")])


def mesh(verts, faces) -> str:
    """Wireframe of a vertex/face mesh in the cavalier projection."""
    verts = np.asarray(verts, dtype=float)
    if verts.size == 0 or len(faces) == 0:
        raise EmptyArtifactError("empty artifact: mesh has no faces")
    proj = _project(verts)
    edges = set()
    for face in faces:
        m = len(face)
        for a in range(m):
            i, j = int(face[a]), int(face[(a + 1) % m])
            edges.add((min(i, j), max(i, j)))
    frame = _Frame.around(proj[:, 0], proj[:, 1])
    body = []
    for i, j in sorted(edges):
        body.append(_polyline(frame, [proj[i, 0], proj[j, 0]],
                              [proj[i, 1], proj[j, 1]], "#1f5fb4", 0.8))
    return _doc([*body, *_axes(frame, "x + depth", "t + depth")])


_RENDERERS = {
    "ACCESS_HEATMAP": access_heatmap,
    "PHI_PLOT": phi_plot,
    "RULES_3D_PROJECTION": rules_3d,
    "RULES_XY": rules_xy,
    "MESH": mesh,
}


def render(kind: str, *args, **kwargs) -> str:
    """Dispatch to a renderer by artifact kind."""
    if kind not in _RENDERERS:
        raise ValueError(f"unknown render kind '{kind}'; expected one of "
                         f"{', '.join(KINDS)}")
    return _RENDERERS[kind](*args, **kwargs)
