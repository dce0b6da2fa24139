"""Per-snapshot diagnostics, running time integrals and bound verdicts.

Cumulative integrals use the left-endpoint rectangle rule on the step lattice:
the increment over a step of length ``dt`` is ``dt`` times the integrand at
the state the step started from, which is the state the explicit stage sees.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import UsageError
from .grid import (
    Grid,
    centered_gradient_energy,
    dirichlet_form,
    gradient_centered,
    integrate,
    laplacian_neumann,
    lp_norm,
)
from .model import BoundConstants, Parameters, reaction_u

DEFAULT_P_SET = (2.0, 3.0, 5.0)


@dataclass(frozen=True)
class DiagnosticsConfig:
    p_set: tuple[float, ...] = DEFAULT_P_SET
    q: float | None = None

    def q_for(self, p: Parameters) -> float:
        return self.q if self.q is not None else 2.0 + p.gamma / 2.0


@dataclass(frozen=True)
class DiagnosticsRecord:
    t: float
    mass_u: float
    mass_v: float
    linf_u: float
    linf_v: float
    min_v: float
    grad_v_lq: float
    lp_v: dict[float, float]
    # instantaneous integrands of the running integrals
    int_uv: float
    int_u2: float
    int_u2g: float
    grad_ln_u: float
    grad_vp2: dict[float, float]
    # running integrals over [0, t]
    cum_u: float = 0.0
    cum_uv: float = 0.0
    cum_u2: float = 0.0
    cum_u2g: float = 0.0
    cum_grad_ln_u: float = 0.0
    cum_grad_vp2: dict[float, float] = field(default_factory=dict)


_CUM_PAIRS = (
    ("cum_u", "mass_u"),
    ("cum_uv", "int_uv"),
    ("cum_u2", "int_u2"),
    ("cum_u2g", "int_u2g"),
    ("cum_grad_ln_u", "grad_ln_u"),
)


def _half_powers(v: np.ndarray, p_set) -> dict[float, np.ndarray]:
    """``v^{p/2}`` for each p; integer p reuse one square root instead of ``pow``."""
    out = {}
    root = None
    for q in map(float, p_set):
        if q == 2:
            out[q] = v
        elif q == int(q) and q <= 12:
            if root is None:
                root = np.sqrt(v)
            w = root
            for _ in range(int(q) - 1):
                w = w * root
            out[q] = w
        else:
            out[q] = v ** (q / 2.0)
    return out


def _integrands(state, p: Parameters, cfg: DiagnosticsConfig) -> dict:
    grid: Grid = state.grid
    u, v = state.u, state.v
    u2 = u * u
    ex = (u[:, 2:] - u[:, :-2]) / (2.0 * grid.dx * (u[:, 1:-1] + 1.0))
    ey = (u[2:, :] - u[:-2, :]) / (2.0 * grid.dy * (u[1:-1, :] + 1.0))
    if np.any(v < 0):
        raise UsageError("diagnostics need v >= 0")
    return dict(
        mass_u=integrate(u, grid),
        int_uv=integrate(u * v, grid),
        int_u2=integrate(u2, grid),
        int_u2g=integrate(u2 if p.gamma == 0 else u ** (2.0 + p.gamma), grid),
        grad_ln_u=(float(np.sum(ex * ex)) + float(np.sum(ey * ey))) * grid.cell_area,
        grad_vp2={q: centered_gradient_energy(w, grid) for q, w in _half_powers(v, cfg.p_set).items()},
    )


def _instantaneous(state, p: Parameters, cfg: DiagnosticsConfig, integrands: dict | None = None) -> dict:
    grid: Grid = state.grid
    u, v = state.u, state.v
    gx, gy = gradient_centered(v, grid)
    out = dict(integrands) if integrands is not None else _integrands(state, p, cfg)
    out.update(
        t=float(state.t),
        mass_v=integrate(v, grid),
        linf_u=float(np.max(np.abs(u))),
        linf_v=float(np.max(np.abs(v))),
        min_v=float(np.min(v)),
        grad_v_lq=lp_norm(np.sqrt(gx * gx + gy * gy), grid, cfg.q_for(p)),
        lp_v={float(q): lp_norm(v, grid, q) for q in cfg.p_set},
    )
    return out


def compute_record(state, p: Parameters, prev: DiagnosticsRecord | None = None,
                   dt_since_prev: float = 0.0,
                   cfg: DiagnosticsConfig = DiagnosticsConfig()) -> DiagnosticsRecord:
    """Record at ``state``; running integrals advance by ``dt_since_prev`` times ``prev``'s integrands."""
    inst = _instantaneous(state, p, cfg)
    if prev is None:
        if dt_since_prev != 0:
            raise UsageError("dt_since_prev needs a previous record")
        return DiagnosticsRecord(**inst, cum_grad_vp2={q: 0.0 for q in inst["grad_vp2"]})
    if dt_since_prev < 0:
        raise UsageError("dt_since_prev must be nonnegative")
    cum = {c: getattr(prev, c) + dt_since_prev * getattr(prev, i) for c, i in _CUM_PAIRS}
    cum["cum_grad_vp2"] = {
        q: prev.cum_grad_vp2.get(q, 0.0) + dt_since_prev * prev.grad_vp2.get(q, 0.0)
        for q in inst["grad_vp2"]
    }
    return DiagnosticsRecord(**inst, **cum)


class RunningIntegrals:
    """Step-by-step accumulator equivalent to chaining :func:`compute_record` at every step.

    Only the integrands are evaluated per step; the full record is assembled
    on demand at output times.
    """

    def __init__(self, state0, p: Parameters, cfg: DiagnosticsConfig = DiagnosticsConfig()):
        self.p = p
        self.cfg = cfg
        self.cum = {c: 0.0 for c, _ in _CUM_PAIRS}
        self.cum_grad_vp2 = {float(q): 0.0 for q in cfg.p_set}
        self.current = _integrands(state0, p, cfg)

    def advance(self, new_state, dt: float) -> None:
        for c, i in _CUM_PAIRS:
            self.cum[c] += dt * self.current[i]
        for q in self.cum_grad_vp2:
            self.cum_grad_vp2[q] += dt * self.current["grad_vp2"][q]
        self.current = _integrands(new_state, self.p, self.cfg)

    def record(self, state) -> DiagnosticsRecord:
        inst = _instantaneous(state, self.p, self.cfg, self.current)
        return DiagnosticsRecord(**inst, **self.cum, cum_grad_vp2=dict(self.cum_grad_vp2))


# -- verdicts -------------------------------------------------------------------

@dataclass(frozen=True)
class Verdict:
    name: str
    bound: float
    observed: float
    margin: float
    tolerance: float
    passed: bool

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return (f"CHECK {self.name} bound={self.bound!r} observed={self.observed!r} "
                f"margin={self.margin!r} {tag}")


def _upper(name: str, bound: float, observed: float, tolerance: float) -> Verdict:
    margin = bound - observed
    return Verdict(name, float(bound), float(observed), float(margin), float(tolerance),
                   bool(margin >= -tolerance))


def slack(bound: float, dt: float, h: float) -> float:
    """Discretisation allowance ``5 (dt + h²) |bound|`` for the analytic ceilings."""
    return 5.0 * (dt + h * h) * abs(bound)


def _need(records: Sequence[DiagnosticsRecord]) -> None:
    if len(records) == 0:
        raise UsageError("empty record sequence")


def check_l1_bound(records: Sequence[DiagnosticsRecord], bc: BoundConstants,
                   dt: float = 0.0, h: float = 0.0) -> Verdict:
    """``max_t max(‖u‖₁, ‖v‖₁)`` against the L1 ceiling."""
    _need(records)
    observed = max(max(r.mass_u, r.mass_v) for r in records)
    bound = bc.l1_ceiling
    return _upper("l1_ceiling", bound, observed, slack(bound, dt, h))


def _record_at(records: Sequence[DiagnosticsRecord], T: float) -> DiagnosticsRecord:
    _need(records)
    if records[-1].t < T * (1 - 1e-12):
        raise UsageError(f"trajectory ends at t={records[-1].t!r} before T={T!r}")
    best = min(records, key=lambda r: abs(r.t - T))
    if abs(best.t - T) > 1e-9 * max(1.0, abs(T)):
        raise UsageError(f"no record at T={T!r}")
    return best


def check_u2_time_integral(records: Sequence[DiagnosticsRecord], bc: BoundConstants, T: float,
                           dt: float = 0.0, h: float = 0.0) -> Verdict:
    """``∫₀ᵀ∫ u²`` against its ceiling at the record closest to ``T``."""
    rec = _record_at(records, T)
    bound = bc.c2_of_T(T)
    return _upper("u2_time_integral", bound, rec.cum_u2, slack(bound, dt, h))


def check_u2g_time_integral(records: Sequence[DiagnosticsRecord], bc: BoundConstants, T: float,
                            dt: float = 0.0, h: float = 0.0) -> Verdict:
    """``∫₀ᵀ∫ u^{2+γ}`` against ``(∫(u₀+v₀) + T|ρ| C₁) / μ``."""
    rec = _record_at(records, T)
    bound = bc.c2g_of_T(T)
    return _upper("u2g_time_integral", bound, rec.cum_u2g, slack(bound, dt, h))


def check_v_lower_bound(records: Sequence[DiagnosticsRecord], v0_min: float) -> Verdict:
    """``min v(t) >= e^{-t} min v₀`` with no slack; reported at the tightest record."""
    if not v0_min > 0:
        raise UsageError("v0_min must be positive")
    _need(records)
    tight = min(records, key=lambda r: r.min_v - math.exp(-r.t) * v0_min)
    floor = math.exp(-tight.t) * v0_min
    margin = tight.min_v - floor
    return Verdict("v_lower_bound", floor, tight.min_v, margin, 0.0, bool(margin >= 0.0))


def certify(records: Sequence[DiagnosticsRecord], p: Parameters, grid: Grid,
            dt: float, T: float | None = None) -> list[Verdict]:
    """All computable ceilings for a finished run, using its first record as initial data."""
    _need(records)
    r0 = records[0]
    bc_ = _bounds_from_first(r0, p, grid)
    T = records[-1].t if T is None else T
    out = [
        check_l1_bound(records, bc_, dt, grid.h),
        check_v_lower_bound(records, r0.min_v),
        check_u2_time_integral(records, bc_, T, dt, grid.h),
    ]
    if p.gamma > 0:
        out.append(check_u2g_time_integral(records, bc_, T, dt, grid.h))
    return out


def _bounds_from_first(r0: DiagnosticsRecord, p: Parameters, grid: Grid) -> BoundConstants:
    from .model import bound_constants

    return bound_constants(p, grid.area, r0.mass_u + r0.mass_v)


def verdict_report(verdicts: Iterable[Verdict]) -> str:
    return "".join(v.line() + "\n" for v in verdicts)


# -- mass identity ----------------------------------------------------------------

def mass_identity_residual(records: Sequence[DiagnosticsRecord], p: Parameters) -> float:
    """``∫u(T) - ∫u₀ - (-∫∫uv + ρ∫∫u - μ∫∫u^{2+γ})`` from the running integrals of the last record."""
    _need(records)
    r0, rT = records[0], records[-1]
    source = -rT.cum_uv + p.rho * rT.cum_u - p.mu * rT.cum_u2g
    return (rT.mass_u - r0.mass_u) - source


def mass_identity_defect(records: Sequence[DiagnosticsRecord], p: Parameters) -> float:
    """Mass balance at the last record against trapezoidal quadrature of the source on the record lattice.

    With a record after every step this isolates the first-order time
    error of the scheme: the running integrals use the left endpoint, so
    the defect equals half the sum of ``dt`` times the change of the source.
    """
    _need(records)
    if len(records) < 2:
        return 0.0
    t = np.array([r.t for r in records])
    f = np.array([-r.int_uv + p.rho * r.mass_u - p.mu * r.int_u2g for r in records])
    source = float(np.sum(0.5 * np.diff(t) * (f[1:] + f[:-1])))
    return (records[-1].mass_u - records[0].mass_u) - source


# -- weak formulation residuals -----------------------------------------------------

def _bump(x: np.ndarray, c: float, w: float) -> np.ndarray:
    z = np.clip((x - c) / w, -1.0, 1.0)
    # squared raised cosine: C^3, flat at the edge of its support
    return (0.5 * (1.0 + np.cos(np.pi * z))) ** 2


@dataclass(frozen=True)
class TestFunction:
    """Separable test function ``psi(x, y) * zeta(t)`` built from raised-cosine bumps.

    Spatial support is the box ``|x - cx| < wx, |y - cy| < wy``; keeping it away
    from the walls makes the normal derivative vanish there.  The time window is
    centred at ``tc`` with half-width ``tw``; ``tc = 0`` gives a window that is
    active at the initial time.
    """

    __test__ = False  # not a pytest class

    name: str
    cx: float
    cy: float
    wx: float
    wy: float
    tc: float
    tw: float

    def psi(self, grid: Grid) -> np.ndarray:
        X, Y = grid.centers()
        return _bump(X, self.cx, self.wx) * _bump(Y, self.cy, self.wy)

    def zeta(self, t) -> np.ndarray:
        return _bump(np.asarray(t, dtype=float), self.tc, self.tw)

    @property
    def t_support_end(self) -> float:
        return self.tc + self.tw


def bump_catalog(grid: Grid, t_end: float) -> list[TestFunction]:
    """Five test functions at distinct centres, widths and time windows inside ``[0, t_end)``."""
    lx, ly, T = grid.lx, grid.ly, t_end
    specs = [
        ("centre_early", 0.50, 0.50, 0.30, 0.30, 0.00, 0.50),
        ("lower_left", 0.30, 0.30, 0.20, 0.20, 0.40, 0.30),
        ("right", 0.70, 0.40, 0.25, 0.25, 0.25, 0.25),
        ("upper", 0.40, 0.70, 0.20, 0.25, 0.60, 0.30),
        ("wide_long", 0.60, 0.55, 0.35, 0.40, 0.00, 0.90),
    ]
    return [TestFunction(n, cx * lx, cy * ly, wx * lx, wy * ly, tc * T, tw * T)
            for n, cx, cy, wx, wy, tc, tw in specs]


@dataclass
class Trajectory:
    """Snapshots on a uniform output lattice, plus the diagnostics records there."""

    grid: Grid
    times: np.ndarray
    u: np.ndarray
    v: np.ndarray
    records: list[DiagnosticsRecord] = field(default_factory=list)

    @property
    def spacing(self) -> float:
        if len(self.times) < 2:
            return 0.0
        return float(self.times[1] - self.times[0])


@dataclass(frozen=True)
class WeakFormResidual:
    name: str
    ln_u: float
    ln_u_scale: float
    v_identity: float
    v_scale: float


@dataclass(frozen=True)
class WeakFormReport:
    tests: list[WeakFormResidual]
    mass: list[tuple[float, float, float]]  # (T, residual, scale)

    def sign_checks(self, dt: float, h: float) -> dict[str, bool]:
        """Sign conditions with slack ``5 (dt + h) * scale``."""
        f = 5.0 * (dt + h)
        out = {"mass_property": all(r <= f * s for _, r, s in self.mass)}
        for t in self.tests:
            out[f"ln_u:{t.name}"] = t.ln_u >= -f * t.ln_u_scale
        return out


def _check_uniform(times: np.ndarray) -> float:
    if len(times) < 3:
        raise UsageError("trajectory needs at least three snapshots")
    d = np.diff(times)
    if np.max(np.abs(d - d[0])) > 1e-9 * d[0]:
        raise UsageError("trajectory snapshots must be uniformly spaced")
    return float(d[0])


def weakform_residuals(traj: Trajectory, p: Parameters,
                       tests: Sequence[TestFunction]) -> WeakFormReport:
    """Signed residuals (left minus right side) of the generalized-solution relations.

    Time integrals use the left rectangle rule on the snapshot lattice and
    ``zeta_t`` comes from centred differences of ``zeta`` on that lattice.  In
    the ``v`` identity the gradient pairing is the face-based one the scheme
    itself uses, so its residual only carries time-discretisation error.
    """
    grid = traj.grid
    times = np.asarray(traj.times, dtype=float)
    delta = _check_uniform(times)
    K = len(times) - 1
    for tf in tests:
        if tf.t_support_end > times[-1] * (1 + 1e-12):
            raise UsageError(f"test {tf.name!r} extends past the trajectory end t={times[-1]!r}")
    results = []
    ln_fields = []
    for k in range(K):
        u, v = traj.u[k], traj.v[k]
        lnu = np.log1p(u)
        lx_, ly_ = gradient_centered(lnu, grid)
        vx, vy = gradient_centered(v, grid)
        coef = u / (v * (u + 1.0))
        src = reaction_u(u, v, p) / (u + 1.0)
        ln_fields.append((lnu, lx_ * lx_ + ly_ * ly_, coef * (lx_ * vx + ly_ * vy), coef, vx, vy, src))
    lnu0 = np.log1p(traj.u[0])
    for tf in tests:
        psi = tf.psi(grid)
        lap_psi = laplacian_neumann(psi, grid)
        px, py = gradient_centered(psi, grid)
        z = tf.zeta(times)
        zt = np.gradient(z, delta)
        ln_terms = np.zeros(7)
        v_terms = np.zeros(5)
        for k in range(K):
            lnu, g2, cross, coef, vx, vy, src = ln_fields[k]
            u, v = traj.u[k], traj.v[k]
            if zt[k] != 0.0:
                ln_terms[0] -= delta * zt[k] * integrate(lnu * psi, grid)
                v_terms[0] += delta * zt[k] * integrate(v * psi, grid)
            if z[k] != 0.0:
                w = delta * z[k]
                ln_terms[2] += w * integrate(lnu * lap_psi, grid)
                ln_terms[3] += w * integrate(g2 * psi, grid)
                ln_terms[4] -= w * p.chi * integrate(cross * psi, grid)
                ln_terms[5] += w * p.chi * integrate(coef * (vx * px + vy * py), grid)
                ln_terms[6] += w * integrate(src * psi, grid)
                v_terms[2] += w * dirichlet_form(v, psi, grid)
                v_terms[3] += w * integrate(v * psi, grid)
                v_terms[4] -= w * integrate(u * v * psi, grid)
        ln_terms[1] = -z[0] * integrate(lnu0 * psi, grid)
        v_terms[1] = z[0] * integrate(traj.v[0] * psi, grid)
        ln_res = (ln_terms[0] + ln_terms[1]) - float(np.sum(ln_terms[2:]))
        v_res = (v_terms[0] + v_terms[1]) - float(np.sum(v_terms[2:]))
        results.append(WeakFormResidual(tf.name, float(ln_res), float(np.sum(np.abs(ln_terms))),
                                        float(v_res), float(np.sum(np.abs(v_terms)))))
    mass = []
    if traj.records:
        r0 = traj.records[0]
        for rec in traj.records[1:]:
            res = mass_identity_residual([r0, rec], p)
            scale = (abs(rec.mass_u) + abs(r0.mass_u) + rec.cum_uv + abs(p.rho) * rec.cum_u
                     + p.mu * rec.cum_u2g)
            mass.append((rec.t, float(res), float(scale)))
    return WeakFormReport(results, mass)


# -- CSV -------------------------------------------------------------------------------

_SCALARS = [f.name for f in fields(DiagnosticsRecord)
            if f.name not in ("lp_v", "grad_vp2", "cum_grad_vp2")]
_MAPS = ("lp_v", "grad_vp2", "cum_grad_vp2")


def _columns(p_set: Sequence[float]) -> list[str]:
    cols = list(_SCALARS)
    for m in _MAPS:
        cols.extend(f"{m}_p{float(q)!r}" for q in p_set)
    return cols


def records_to_csv(records: Sequence[DiagnosticsRecord]) -> str:
    _need(records)
    p_set = sorted(records[0].lp_v)
    cols = _columns(p_set)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in records:
        row = [repr(float(getattr(r, c))) for c in _SCALARS]
        for m in _MAPS:
            d = getattr(r, m)
            row.extend(repr(float(d[q])) for q in p_set)
        w.writerow(row)
    return buf.getvalue()


def records_from_csv(text: str) -> list[DiagnosticsRecord]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise UsageError("empty diagnostics CSV")
    header = rows[0]
    missing = [c for c in _SCALARS if c not in header]
    if missing:
        raise UsageError(f"diagnostics CSV lacks columns {missing}")
    idx = {c: i for i, c in enumerate(header)}
    map_cols: dict[str, list[tuple[float, int]]] = {m: [] for m in _MAPS}
    for c, i in idx.items():
        for m in _MAPS:
            if c.startswith(m + "_p"):
                map_cols[m].append((float(c[len(m) + 2:]), i))
    out = []
    for row in rows[1:]:
        if not row:
            continue
        kw = {c: float(row[idx[c]]) for c in _SCALARS}
        for m in _MAPS:
            kw[m] = {q: float(row[i]) for q, i in map_cols[m]}
        out.append(DiagnosticsRecord(**kw))
    return out


def write_records(path, records: Sequence[DiagnosticsRecord]) -> None:
    Path(path).write_text(records_to_csv(records))


def read_records(path) -> list[DiagnosticsRecord]:
    return records_from_csv(Path(path).read_text())
