"""Static workspace: occupancy grid, distance field, potential field and tunnel."""

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels

FREE, OCCUPIED, UNKNOWN = 0, 1, 2


@dataclass(frozen=True, eq=False)
class OccupancyGrid:
    """Axis ``k`` of ``cells`` indexes coordinate ``k``; flattening is C order."""

    origin: np.ndarray
    resolution: float
    cells: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=float).reshape(-1))
        object.__setattr__(self, "cells", np.asarray(self.cells, dtype=np.uint8))
        if self.resolution <= 0:
            raise ValueError("resolution must be positive")
        if self.cells.ndim != self.origin.shape[0]:
            raise ValueError("cells dimensionality does not match origin")
        if min(self.cells.shape) < 1:
            raise ValueError("every axis needs at least one cell")
        self.cells.setflags(write=False)

    @property
    def dims(self):
        return tuple(self.cells.shape)

    @property
    def m(self):
        return self.origin.shape[0]

    @property
    def upper(self):
        return self.origin + self.resolution * np.array(self.dims)

    def world_to_cell(self, p):
        return tuple(int(math.floor((float(x) - o) / self.resolution)) for x, o in zip(p, self.origin))

    def cell_center(self, idx):
        return self.origin + (np.asarray(idx, dtype=float) + 0.5) * self.resolution

    def in_bounds(self, idx):
        return all(0 <= i < n for i, n in zip(idx, self.dims))

    def occupied_mask(self):
        return self.cells == OCCUPIED

    def with_cells(self, cells):
        return OccupancyGrid(self.origin.copy(), self.resolution, np.array(cells, dtype=np.uint8))

    @classmethod
    def empty(cls, origin, resolution, dims, value=FREE):
        return cls(origin, resolution, np.full(tuple(dims), value, dtype=np.uint8))

    def fill_box(self, lo, hi, value=OCCUPIED):
        """Return a copy with every cell whose center lies in the box [lo, hi] set to ``value``."""
        cells = np.array(self.cells)
        axes = [self.origin[k] + (np.arange(n) + 0.5) * self.resolution for k, n in enumerate(self.dims)]
        masks = [(a >= lo[k] - 1e-9) & (a <= hi[k] + 1e-9) for k, a in enumerate(axes)]
        sel = masks[0]
        for mk in masks[1:]:
            sel = np.multiply.outer(sel, mk)
        cells[sel] = value
        return self.with_cells(cells)

    def to_json(self):
        return {
            "origin": self.origin.tolist(),
            "resolution": self.resolution,
            "dims": list(self.dims),
            "cells": self.cells.ravel().astype(int).tolist(),
        }

    @classmethod
    def from_json(cls, obj, source="<grid>"):
        try:
            origin, res, dims, cells = obj["origin"], obj["resolution"], obj["dims"], obj["cells"]
        except KeyError as exc:
            raise ValueError(f"{source}: missing grid field {exc}") from None
        if len(cells) != int(np.prod(dims)):
            raise ValueError(f"{source}: cell array has {len(cells)} entries, dims {dims} need {int(np.prod(dims))}")
        arr = np.asarray(cells, dtype=int)
        if arr.size and (arr.min() < 0 or arr.max() > 2):
            raise ValueError(f"{source}: cell values must be 0, 1 or 2")
        return cls(origin, float(res), arr.reshape(dims))


def load_grid(path):
    with open(path) as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}:{exc.lineno}: {exc.msg}") from None
    return OccupancyGrid.from_json(obj, source=str(path))


def save_grid(grid, path):
    with open(path, "w") as fh:
        json.dump(grid.to_json(), fh)


@dataclass(frozen=True, eq=False)
class DistanceField:
    grid: OccupancyGrid
    d: np.ndarray  # meters; inf when the grid has no occupied cell


def distance_transform(grid):
    """Exact Euclidean distance from every cell center to the nearest occupied cell center.

    Unknown cells count as free.
    """
    sq = kernels.squared_edt(grid.occupied_mask())
    return DistanceField(grid, np.sqrt(sq) * grid.resolution)


@dataclass(frozen=True, eq=False)
class PotentialField:
    F_max: float
    d_thr: float
    k: float
    U: np.ndarray


def potential_value(d, F_max, d_thr, k):
    """Truncated polynomial potential ``F_max (1 - d/d_thr)^k`` for ``d < d_thr``, else 0."""
    d = np.asarray(d, dtype=float)
    with np.errstate(invalid="ignore"):
        inner = np.clip(1.0 - d / d_thr, 0.0, 1.0)
        return np.where(d < d_thr, F_max * inner**k, 0.0)


def build_potential(df, F_max, d_thr, k):
    if F_max <= 0 or d_thr <= 0 or k <= 0:
        raise ValueError("F_max, d_thr and k must be positive")
    return PotentialField(float(F_max), float(d_thr), float(k), potential_value(df.d, F_max, d_thr, k))


@dataclass(frozen=True, eq=False)
class Workspace:
    """Grid plus derived fields. Immutable; map edits produce a new instance."""

    grid: OccupancyGrid
    bounded: bool = True
    potential_params: tuple | None = None  # (F_max, d_thr, k)
    df: DistanceField = field(init=False)
    pf: PotentialField | None = field(init=False)

    def __post_init__(self):
        df = distance_transform(self.grid)
        object.__setattr__(self, "df", df)
        pf = build_potential(df, *self.potential_params) if self.potential_params else None
        object.__setattr__(self, "pf", pf)
        object.__setattr__(self, "_occ_flat", self.grid.occupied_mask().ravel())
        object.__setattr__(self, "_u_flat", pf.U.ravel() if pf is not None else None)

    @property
    def resolution(self):
        return self.grid.resolution

    def with_cells(self, cells):
        return replace(self, grid=self.grid.with_cells(cells))

    def flat_index(self, points):
        return kernels.cell_indices(points, self.grid.origin, self.grid.resolution, self.grid.dims)

    def occupied_at(self, points):
        idx = self.flat_index(points)
        out = np.full(idx.shape, self.bounded)
        inside = idx >= 0
        out[inside] = self._occ_flat[idx[inside]]
        return out

    def potential_at(self, points):
        idx = self.flat_index(points)
        if self._u_flat is None:
            return np.zeros(idx.shape)
        out = np.zeros(idx.shape)
        inside = idx >= 0
        out[inside] = self._u_flat[idx[inside]]
        return out

    def changed_cells(self, other):
        """Flat indices where occupancy or potential differ between two workspaces."""
        diff = self._occ_flat != other._occ_flat
        if self._u_flat is not None or other._u_flat is not None:
            a = self._u_flat if self._u_flat is not None else 0.0
            b = other._u_flat if other._u_flat is not None else 0.0
            diff = diff | (np.abs(a - b) > 1e-12)
        return np.flatnonzero(diff)


def v_bar(spec):
    return float(spec.v_max)


def sample_count(p, spec, r_M):
    """Number of uniform samples ``ceil(v_max dt / r_M)``, at least 2."""
    if r_M <= 0:
        raise ValueError("r_M must be positive")
    return max(2, math.ceil(v_bar(spec) * p.dt / r_M - 1e-9))


def sample_times(dt, n):
    return np.linspace(0.0, dt, n)


def collision_cost(p, pf_or_ws, n_samples):
    """Riemann-sum line integral of the potential along a primitive."""
    ts = sample_times(p.dt, n_samples)
    h = p.dt / (n_samples - 1)
    pos = p.positions(ts)
    speed = np.linalg.norm(p.velocities(ts), axis=1)
    if isinstance(pf_or_ws, Workspace):
        U = pf_or_ws.potential_at(pos)
    else:
        raise TypeError("collision_cost needs a Workspace with a potential field")
    return float(np.sum(U * speed) * h)


def primitive_collides_static(p, ws, n_samples):
    """Point-sample collision test with twice the cost-rule sample count."""
    ts = sample_times(p.dt, 2 * n_samples)
    return bool(np.any(ws.occupied_at(p.positions(ts))))


@dataclass(frozen=True, eq=False)
class Tunnel:
    ref_traj: object
    r: float
    ref_polyline: np.ndarray

    @classmethod
    def around(cls, traj, r, r_M):
        if r <= 0:
            raise ValueError("tunnel radius must be positive")
        if math.isinf(r) or traj.T == 0:
            return cls(traj, float(r), traj.start.pos[None, :].copy())
        n = max(2, math.ceil(traj.T / (0.5 * r_M / _max_speed(traj))) + 1)
        ts = np.linspace(0.0, traj.T, n)
        return cls(traj, float(r), traj.sample_positions(ts))


def _max_speed(traj):
    best = 1e-9
    for seg in traj.segments:
        v = seg.velocities(np.linspace(0.0, seg.dt, 9))
        best = max(best, float(np.max(np.linalg.norm(v, axis=1))))
    return best


def in_tunnel(p, tun, n_samples):
    if math.isinf(tun.r):
        return True
    pos = p.positions(sample_times(p.dt, n_samples))
    return bool(np.all(kernels.polyline_distance(pos, tun.ref_polyline) <= tun.r + 1e-9))
