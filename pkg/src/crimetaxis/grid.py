"""Cell-centred finite volumes on a rectangle with homogeneous Neumann walls.

Fields are plain ``numpy`` arrays of shape ``(ny, nx)`` (row-major, x varies
fastest).  Every reduction goes through ``np.sum`` on a contiguous array so
results do not depend on BLAS threading.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DomainError, SingularityError, UsageError
from .model import Parameters, cutoff_eta


@dataclass(frozen=True)
class Grid:
    nx: int
    ny: int
    lx: float = 1.0
    ly: float = 1.0

    def __post_init__(self):
        if int(self.nx) != self.nx or int(self.ny) != self.ny:
            raise DomainError("nx and ny must be integers")
        if self.nx < 2 or self.ny < 2:
            raise DomainError(f"need nx, ny >= 2, got {self.nx}x{self.ny}")
        if not (self.lx > 0 and self.ly > 0) or not (math.isfinite(self.lx) and math.isfinite(self.ly)):
            raise DomainError("domain side lengths must be positive and finite")

    @property
    def dx(self) -> float:
        return self.lx / self.nx

    @property
    def dy(self) -> float:
        return self.ly / self.ny

    @property
    def h(self) -> float:
        return max(self.dx, self.dy)

    @property
    def cell_area(self) -> float:
        return self.dx * self.dy

    @property
    def area(self) -> float:
        return self.lx * self.ly

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny, self.nx)

    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Cell-centre coordinates ``(X, Y)``, each of shape ``(ny, nx)``."""
        x = (np.arange(self.nx) + 0.5) * self.dx
        y = (np.arange(self.ny) + 0.5) * self.dy
        return np.meshgrid(x, y)

    def check(self, f: np.ndarray, name: str = "field") -> np.ndarray:
        f = np.asarray(f, dtype=float)
        if f.shape != self.shape:
            raise UsageError(f"{name} has shape {f.shape}, grid expects {self.shape}")
        return f


def laplacian_neumann(f: np.ndarray, grid: Grid) -> np.ndarray:
    """Five-point Laplacian with mirrored ghost cells (zero normal derivative).

    Written as a difference of face fluxes, so the cell sum vanishes up to
    rounding.
    """
    f = grid.check(f)
    out = np.zeros_like(f)
    fx = np.diff(f, axis=1) * (1.0 / grid.dx**2)
    fy = np.diff(f, axis=0) * (1.0 / grid.dy**2)
    out[:, :-1] += fx
    out[:, 1:] -= fx
    out[:-1, :] += fy
    out[1:, :] -= fy
    return out


def gradient_centered(f: np.ndarray, grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    """Per-cell gradient by central differences.

    Boundary cells mirror their inner neighbour, which sets the wall-normal
    component to zero there; tangential components stay centred.
    """
    f = grid.check(f)
    gx = np.zeros_like(f)
    gy = np.zeros_like(f)
    gx[:, 1:-1] = (f[:, 2:] - f[:, :-2]) / (2.0 * grid.dx)
    gy[1:-1, :] = (f[2:, :] - f[:-2, :]) / (2.0 * grid.dy)
    return gx, gy


def face_gradients(f: np.ndarray, grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    """Two-point differences on interior faces: shapes ``(ny, nx-1)`` and ``(ny-1, nx)``."""
    f = grid.check(f)
    return np.diff(f, axis=1) / grid.dx, np.diff(f, axis=0) / grid.dy


def dirichlet_form(f: np.ndarray, g: np.ndarray, grid: Grid) -> float:
    """Face-based discrete ``∫ ∇f·∇g``; equals ``-integrate(g * laplacian_neumann(f))`` exactly."""
    fx, fy = face_gradients(f, grid)
    gx, gy = face_gradients(g, grid)
    return float(np.sum(fx * gx) * grid.cell_area + np.sum(fy * gy) * grid.cell_area)


def _taxis_face_fluxes(u, v, grid: Grid, p: Parameters):
    """Upwind taxis fluxes plus the face rates and donor masks they were built from."""
    dvx = v[:, 1:] - v[:, :-1]
    dvy = v[1:, :] - v[:-1, :]
    # mass moves up the v-gradient, so the donor is the lower-v cell
    mx = dvx > 0
    my = dvy > 0
    upx = np.where(mx, u[:, :-1], u[:, 1:])
    upy = np.where(my, u[:-1, :], u[1:, :])
    ratex = (2.0 * p.chi / grid.dx) * dvx / (v[:, 1:] + v[:, :-1])
    ratey = (2.0 * p.chi / grid.dy) * dvy / (v[1:, :] + v[:-1, :])
    if p.eps != 0:
        ratex *= cutoff_eta(p.eps, upx)
        ratey *= cutoff_eta(p.eps, upy)
    return upx * ratex, upy * ratey, ratex, ratey, mx, my


def _divergence(fx: np.ndarray, fy: np.ndarray, grid: Grid) -> np.ndarray:
    out = np.zeros(grid.shape)
    fx = fx * (1.0 / grid.dx)
    fy = fy * (1.0 / grid.dy)
    out[:, :-1] += fx
    out[:, 1:] -= fx
    out[:-1, :] += fy
    out[1:, :] -= fy
    return out


def taxis_divergence(u: np.ndarray, v: np.ndarray, p: Parameters, grid: Grid) -> np.ndarray:
    """Discrete ``∇·(χ η_ε(u) u/v ∇v)`` with upwind donor values and zero wall flux.

    The taxis contribution to ``u_t`` is the negative of this field.
    """
    u = grid.check(u, "u")
    v = grid.check(v, "v")
    if np.any(v <= 0):
        raise SingularityError("taxis_divergence requires v > 0 in every cell")
    fx, fy, *_ = _taxis_face_fluxes(u, v, grid, p)
    return _divergence(fx, fy, grid)


def _outflow(ratex, ratey, mx, my, grid: Grid) -> np.ndarray:
    out = np.zeros(grid.shape)
    ax = np.abs(ratex) * (1.0 / grid.dx)
    ay = np.abs(ratey) * (1.0 / grid.dy)
    # donor of an x-face is the left cell when dv > 0, the right cell otherwise
    out[:, :-1] += ax * mx
    out[:, 1:] += ax * ~mx
    out[:-1, :] += ay * my
    out[1:, :] += ay * ~my
    return out


def taxis_outflow_rate(u: np.ndarray, v: np.ndarray, p: Parameters, grid: Grid) -> np.ndarray:
    """Per-cell rate (per unit of u) at which upwind taxis drains each donor cell."""
    _, _, ratex, ratey, mx, my = _taxis_face_fluxes(u, v, grid, p)
    return _outflow(ratex, ratey, mx, my, grid)


def taxis_terms(u: np.ndarray, v: np.ndarray, p: Parameters, grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    """``(taxis_divergence, taxis_outflow_rate)`` from one evaluation of the face fluxes."""
    if np.any(v <= 0):
        raise SingularityError("taxis terms require v > 0 in every cell")
    fx, fy, ratex, ratey, mx, my = _taxis_face_fluxes(u, v, grid, p)
    return _divergence(fx, fy, grid), _outflow(ratex, ratey, mx, my, grid)


def integrate(f: np.ndarray, grid: Grid) -> float:
    """Midpoint rule ``sum(f) dx dy``."""
    f = grid.check(f)
    return float(np.sum(f) * grid.cell_area)


def lp_norm(f: np.ndarray, grid: Grid, p: float) -> float:
    if not p >= 1:
        raise DomainError(f"lp_norm needs p >= 1, got {p!r}")
    a = np.abs(grid.check(f))
    if p == 1:
        return integrate(a, grid)
    if p == 2:
        return math.sqrt(integrate(a * a, grid))
    return integrate(a**p, grid) ** (1.0 / p)


def centered_gradient_energy(f: np.ndarray, grid: Grid) -> float:
    """``integrate(gx² + gy²)`` for :func:`gradient_centered` without building the fields."""
    ex = f[:, 2:] - f[:, :-2]
    ey = f[2:, :] - f[:-2, :]
    sx = float(np.sum(ex * ex)) / (4.0 * grid.dx**2)
    sy = float(np.sum(ey * ey)) / (4.0 * grid.dy**2)
    return (sx + sy) * grid.cell_area


def grad_power_integral(v: np.ndarray, grid: Grid, p: float) -> float:
    """``∫ |∇ v^{p/2}|²`` using :func:`gradient_centered`."""
    if not p >= 1:
        raise DomainError(f"grad_power_integral needs p >= 1, got {p!r}")
    v = grid.check(v)
    if np.any(v < 0):
        raise DomainError("grad_power_integral needs v >= 0")
    w = v if p == 2 else (v * v if p == 4 else v ** (p / 2.0))
    return centered_gradient_energy(w, grid)


# -- snapshot files -----------------------------------------------------------

def write_snapshot(path, f: np.ndarray, grid: Grid, t: float) -> None:
    """Header ``nx ny lx ly t`` then one value per line in row-major order."""
    f = grid.check(f)
    lines = [f"{grid.nx} {grid.ny} {float(grid.lx)!r} {float(grid.ly)!r} {float(t)!r}"]
    lines.extend(repr(float(x)) for x in f.ravel())
    Path(path).write_text("\n".join(lines) + "\n")


def read_snapshot(path) -> tuple[Grid, float, np.ndarray]:
    tokens = Path(path).read_text().split()
    if len(tokens) < 5:
        raise UsageError(f"{path}: truncated snapshot header")
    nx, ny = int(tokens[0]), int(tokens[1])
    grid = Grid(nx, ny, float(tokens[2]), float(tokens[3]))
    t = float(tokens[4])
    values = tokens[5:]
    if len(values) != nx * ny:
        raise UsageError(f"{path}: expected {nx * ny} values, found {len(values)}")
    f = np.array([float(x) for x in values]).reshape(ny, nx)
    return grid, t, f
