"""Conjugate gradients for ``(shift I - dt Δ_h) x = b`` on a Neumann grid.

The optional preconditioner is the exact inverse of the same operator in the
DCT-II basis (the reflected five-point stencil is diagonal there), so the
preconditioned iteration normally stops after one or two sweeps.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import fft as sfft

from .grid import Grid, laplacian_neumann


class SolverError(RuntimeError):
    """CG failed to reach the requested residual."""


@dataclass(frozen=True)
class SolveInfo:
    iterations: int
    relres: float


def _eigenvalues(grid: Grid) -> np.ndarray:
    kx = np.arange(grid.nx)
    ky = np.arange(grid.ny)
    lx = (2.0 / grid.dx**2) * (1.0 - np.cos(np.pi * kx / grid.nx))
    ly = (2.0 / grid.dy**2) * (1.0 - np.cos(np.pi * ky / grid.ny))
    return ly[:, None] + lx[None, :]


class ShiftedLaplaceSolver:
    def __init__(self, grid: Grid, rtol: float = 1e-10, maxiter: int = 500, precondition: bool = True):
        self.grid = grid
        self.rtol = rtol
        self.maxiter = maxiter
        self.precondition = precondition
        self._lam = _eigenvalues(grid)

    def apply(self, x: np.ndarray, dt: float, shift: float) -> np.ndarray:
        return shift * x - dt * laplacian_neumann(x, self.grid)

    def _prec(self, r: np.ndarray, dt: float, shift: float) -> np.ndarray:
        if not self.precondition:
            return r
        rh = sfft.dctn(r, type=2, norm="ortho", workers=1)
        rh /= shift + dt * self._lam
        return sfft.idctn(rh, type=2, norm="ortho", workers=1)

    def solve_pair(self, b1: np.ndarray, b2: np.ndarray, dt: float, shift1: float,
                   shift2: float) -> tuple[np.ndarray, np.ndarray, int]:
        """Solve two systems with one batched transform for the initial guesses.

        Each component is still verified (and, if needed, refined) by
        :meth:`solve`; returns both solutions and the total CG iterations.
        """
        x0 = None
        if self.precondition:
            rh = sfft.dctn(np.stack((b1, b2)), type=2, norm="ortho", axes=(1, 2), workers=1)
            rh[0] /= shift1 + dt * self._lam
            rh[1] /= shift2 + dt * self._lam
            x0 = sfft.idctn(rh, type=2, norm="ortho", axes=(1, 2), workers=1)
        x1, i1 = self.solve(b1, dt, shift1, None if x0 is None else x0[0])
        x2, i2 = self.solve(b2, dt, shift2, None if x0 is None else x0[1])
        return x1, x2, i1.iterations + i2.iterations

    def solve(self, b: np.ndarray, dt: float, shift: float = 1.0,
              x0: np.ndarray | None = None) -> tuple[np.ndarray, SolveInfo]:
        """Return ``x`` with ``||b - A x|| <= rtol ||b||`` and the iteration record."""
        b = self.grid.check(b)
        bnorm = math.sqrt(float(np.sum(b * b)))
        if bnorm == 0.0:
            return np.zeros_like(b), SolveInfo(0, 0.0)
        x = np.array(self._prec(b, dt, shift) if x0 is None else x0, dtype=float)
        r = b - self.apply(x, dt, shift)
        rnorm = math.sqrt(float(np.sum(r * r)))
        if rnorm <= self.rtol * bnorm:
            return x, SolveInfo(0, rnorm / bnorm)
        z = self._prec(r, dt, shift)
        pdir = z.copy()
        rz = float(np.sum(r * z))
        for it in range(1, self.maxiter + 1):
            ap = self.apply(pdir, dt, shift)
            denom = float(np.sum(pdir * ap))
            if not denom > 0:
                raise SolverError(f"loss of positive definiteness (p·Ap = {denom!r})")
            alpha = rz / denom
            x += alpha * pdir
            r -= alpha * ap
            rnorm = math.sqrt(float(np.sum(r * r)))
            if not math.isfinite(rnorm):
                raise SolverError("non-finite residual")
            if rnorm <= self.rtol * bnorm:
                return x, SolveInfo(it, rnorm / bnorm)
            z = self._prec(r, dt, shift)
            rz_new = float(np.sum(r * z))
            pdir = z + (rz_new / rz) * pdir
            rz = rz_new
        raise SolverError(f"no convergence in {self.maxiter} iterations (relres {rnorm / bnorm:.3e})")
