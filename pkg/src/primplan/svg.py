"""Self-contained SVG plots of grids, potential fields, trajectories and obstacles."""

import math
from xml.sax.saxutils import escape

import numpy as np

from .env import OCCUPIED, UNKNOWN

PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2"]


class Canvas:
    """World-to-pixel mapping with the y axis pointing up."""

    def __init__(self, lo, hi, px_per_m=40.0, margin=10.0):
        self.lo = np.asarray(lo, float)
        self.hi = np.asarray(hi, float)
        self.s = float(px_per_m)
        self.margin = margin
        self.w = (self.hi[0] - self.lo[0]) * self.s + 2 * margin
        self.h = (self.hi[1] - self.lo[1]) * self.s + 2 * margin
        self.items = []

    def xy(self, p):
        return (self.margin + (p[0] - self.lo[0]) * self.s, self.margin + (self.hi[1] - p[1]) * self.s)

    def rect(self, lo, hi, fill, opacity=1.0):
        x0, y1 = self.xy(lo)
        x1, y0 = self.xy(hi)
        self.items.append(
            f'<rect x="{x0:.2f}" y="{y0:.2f}" width="{x1 - x0:.2f}" height="{y1 - y0:.2f}" '
            f'fill="{fill}" fill-opacity="{opacity:.3f}" stroke="none"/>'
        )

    def polyline(self, pts, color, width=2.0, dash=None, opacity=1.0):
        if len(pts) < 2:
            return
        d = " ".join(f"{x:.2f},{y:.2f}" for x, y in (self.xy(p) for p in pts))
        extra = f' stroke-dasharray="{dash}"' if dash else ""
        self.items.append(
            f'<polyline points="{d}" fill="none" stroke="{color}" stroke-width="{width}" '
            f'stroke-opacity="{opacity:.3f}"{extra}/>'
        )

    def polygon(self, pts, fill, stroke="none", opacity=0.5):
        d = " ".join(f"{x:.2f},{y:.2f}" for x, y in (self.xy(p) for p in pts))
        self.items.append(f'<polygon points="{d}" fill="{fill}" fill-opacity="{opacity:.3f}" stroke="{stroke}"/>')

    def circle(self, p, r_px, fill):
        x, y = self.xy(p)
        self.items.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="{r_px}" fill="{fill}"/>')

    def text(self, p, s, size=12):
        x, y = self.xy(p)
        self.items.append(f'<text x="{x:.2f}" y="{y:.2f}" font-size="{size}" font-family="sans-serif">{escape(s)}</text>')

    def render(self, title=None):
        head = (
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.w:.0f}" height="{self.h:.0f}" '
            f'viewBox="0 0 {self.w:.2f} {self.h:.2f}">'
        )
        body = ['<rect width="100%" height="100%" fill="white"/>'] + self.items
        if title:
            body.append(f'<title>{escape(title)}</title>')
        return "\n".join([head] + body + ["</svg>", ""])


def _runs(mask):
    """Yield (row, start, stop) runs of True along axis 1."""
    for i, row in enumerate(mask):
        j = 0
        n = len(row)
        while j < n:
            if row[j]:
                k = j
                while k < n and row[k]:
                    k += 1
                yield i, j, k
                j = k
            else:
                j += 1


def draw_workspace(cv, ws, heat=True):
    grid = ws.grid
    r = grid.resolution
    o = grid.origin
    if heat and ws.pf is not None and ws.pf.F_max > 0:
        U = ws.pf.U / ws.pf.F_max
        levels = np.round(U * 8) / 8
        for lv in np.unique(levels):
            if lv <= 0:
                continue
            for i, j0, j1 in _runs((levels == lv) & (grid.cells != OCCUPIED)):
                cv.rect(o + [i * r, j0 * r], o + [(i + 1) * r, j1 * r], "#ff3b30", 0.45 * lv)
    for val, color in ((UNKNOWN, "#c8c8c8"), (OCCUPIED, "#222222")):
        for i, j0, j1 in _runs(grid.cells == val):
            cv.rect(o + [i * r, j0 * r], o + [(i + 1) * r, j1 * r], color)


def draw_trajectory(cv, traj, color, width=2.0, yaw_every=None, dash=None):
    if not traj.segments:
        cv.circle(traj.start.pos, 3, color)
        return
    ts = np.linspace(0.0, traj.T, max(2, int(traj.T * 20) + 1))
    cv.polyline(traj.sample_positions(ts), color, width, dash)
    if yaw_every and traj.start.yaw is not None:
        size = 0.18
        for t in np.arange(0.0, traj.T + 1e-9, yaw_every):
            i, tau = traj.locate(min(t, traj.T))
            seg = traj.segments[i]
            p = seg.positions([tau])[0]
            a = float(seg.yaw_at(tau))
            tip = p + size * np.array([math.cos(a), math.sin(a)])
            left = p + 0.5 * size * np.array([math.cos(a + 2.4), math.sin(a + 2.4)])
            right = p + 0.5 * size * np.array([math.cos(a - 2.4), math.sin(a - 2.4)])
            cv.polygon([tip, left, right], color, opacity=0.9)


def draw_polytope(cv, poly, color, opacity=0.35):
    v = poly.vertices
    if v is None or len(v) < 3:
        return
    c = v.mean(axis=0)
    order = np.argsort(np.arctan2(v[:, 1] - c[1], v[:, 0] - c[0]))
    cv.polygon(v[order], color, stroke=color, opacity=opacity)


def plot(ws=None, trajectories=(), labels=(), start=None, goal=None, obstacles=(), extent=None, title=None,
         yaw_every=None, px_per_m=None):
    """Render a full figure and return the SVG text."""
    if extent is None:
        if ws is not None:
            extent = (ws.grid.origin, ws.grid.upper)
        else:
            pts = [t.sample_positions(np.linspace(0, t.T, 50)) for t in trajectories if t.segments]
            allp = np.vstack(pts) if pts else np.zeros((1, 2))
            extent = (allp.min(axis=0) - 1, allp.max(axis=0) + 1)
    lo, hi = extent
    span = float(max(hi[0] - lo[0], hi[1] - lo[1]))
    cv = Canvas(lo, hi, px_per_m or max(4.0, 800.0 / span))
    if ws is not None:
        draw_workspace(cv, ws)
    for k, (poly, color) in enumerate(obstacles):
        draw_polytope(cv, poly, color or "#555555")
    for k, traj in enumerate(trajectories):
        draw_trajectory(cv, traj, PALETTE[k % len(PALETTE)], yaw_every=yaw_every)
    if start is not None:
        cv.circle(start, 5, "#2ca02c")
    if goal is not None:
        cv.circle(goal, 5, "#d62728")
    for k, lab in enumerate(labels):
        cv.text(np.array([lo[0], hi[1]]) + np.array([0.2, -0.4 * (k + 1)]) * (span / 20), lab)
        cv.items[-1] = cv.items[-1].replace("<text ", f'<text fill="{PALETTE[k % len(PALETTE)]}" ')
    return cv.render(title)
