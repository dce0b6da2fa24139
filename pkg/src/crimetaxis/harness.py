"""Run configuration, initial data and the multi-run experiments.

Configuration files are flat ``key = value`` text with ``#`` comments.  The
accepted keys, their types and defaults are listed in :data:`KEYS`.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .diagnostics import DiagnosticsConfig, DiagnosticsRecord, Trajectory
from .errors import ConfigError, CrimeTaxisError, DomainError, StepFailure, UsageError
from .grid import Grid, gradient_centered, integrate
from .model import Parameters, homogeneous_fixed_point
from .stepper import RunResult, State, StepControl, Thresholds, TrajectoryCollector, run

logger = logging.getLogger(__name__)

IC_KINDS = ("constant", "fixed_point", "gaussian_bump", "perturbed_homogeneous", "seeded_random")
DEFAULT_EPS_LADDER = (0.4, 0.2, 0.1, 0.05, 0.025)


def _floats(text: str) -> tuple[float, ...]:
    parts = [s for s in text.replace(",", " ").split() if s]
    if not parts:
        raise ValueError("empty list")
    return tuple(float(s) for s in parts)


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_float(text: str) -> float | None:
    return None if text.strip().lower() in ("", "none", "auto") else float(text)


# key -> (parser, default)
KEYS: dict[str, tuple[Any, Any]] = {
    "nx": (int, 64),
    "ny": (int, 64),
    "lx": (float, 1.0),
    "ly": (float, 1.0),
    "rho": (float, 2.0),
    "mu": (float, 1.0),
    "chi": (float, 2.0),
    "gamma": (float, 0.0),
    "eps": (float, 0.0),
    "dt_init": (float, 1e-3),
    "dt_min": (float, 1e-9),
    "cfl_safety": (float, 0.9),
    "v_guard": (_opt_float, None),
    "t_end": (float, 1.0),
    "output_every": (float, 0.1),
    "ic": (str, "gaussian_bump"),
    "ic.u": (float, 0.0),
    "ic.v": (float, 1.0),
    "ic.center_x": (_opt_float, None),
    "ic.center_y": (_opt_float, None),
    "ic.width": (float, 0.15),
    "ic.u_amplitude": (float, 1.0),
    "ic.u_floor": (float, 0.5),
    "ic.v_amplitude": (float, 0.3),
    "ic.v_floor": (float, 1.0),
    "ic.amplitude": (float, 0.1),
    "ic.mode_x": (int, 1),
    "ic.mode_y": (int, 1),
    "ic.seed": (int, 0),
    "ic.v0_min": (float, 1e-12),
    "p_set": (_floats, (2.0, 3.0, 5.0)),
    "q": (_opt_float, None),
    "u_sup_max": (float, math.inf),
    "v_w1inf_max": (float, math.inf),
    "v_min": (float, 0.0),
    "output_dir": (str, "out"),
    "snapshots": (_bool, False),
    "eps_ladder": (_floats, DEFAULT_EPS_LADDER),
    "gammas": (_floats, (0.0, 1.0)),
    "horizons": (_floats, (25.0, 50.0, 100.0)),
    "jobs": (int, 1),
}


def default_ic_params() -> dict:
    return {k[3:]: d for k, (_, d) in KEYS.items() if k.startswith("ic.")}


@dataclass(frozen=True)
class RunConfig:
    grid: Grid = Grid(64, 64)
    params: Parameters = Parameters()
    control: StepControl = StepControl()
    ic_kind: str = "gaussian_bump"
    ic_params: dict = field(default_factory=default_ic_params)
    diagnostics: DiagnosticsConfig = DiagnosticsConfig()
    thresholds: Thresholds = Thresholds()
    output_dir: str = "out"
    snapshots: bool = False
    eps_ladder: tuple[float, ...] = DEFAULT_EPS_LADDER
    gammas: tuple[float, ...] = (0.0, 1.0)
    horizons: tuple[float, ...] = (25.0, 50.0, 100.0)
    jobs: int = 1

    def with_params(self, **kw) -> "RunConfig":
        return replace(self, params=replace(self.params, **kw))

    def with_control(self, **kw) -> "RunConfig":
        return replace(self, control=replace(self.control, **kw))


def parse_config(text: str) -> RunConfig:
    """Parse and validate flat ``key = value`` text; every error names its key and line."""
    values: dict[str, Any] = {}
    lines: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("expected 'key = value'", line=lineno)
        key, _, val = (s.strip() for s in line.partition("="))
        if key not in KEYS:
            raise ConfigError("unknown key", key=key, line=lineno)
        if key in values:
            raise ConfigError(f"duplicate key (first set on line {lines[key]})", key=key, line=lineno)
        parser = KEYS[key][0]
        try:
            values[key] = parser(val)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"cannot parse {val!r}: {exc}", key=key, line=lineno) from None
        lines[key] = lineno
    return build_config(values, lines)


def build_config(values: dict[str, Any], lines: dict[str, int] | None = None) -> RunConfig:
    """Fill defaults and enforce every constraint; ``lines`` only improves messages."""
    lines = lines or {}
    for key in values:
        if key not in KEYS:
            raise ConfigError("unknown key", key=key, line=lines.get(key))
    v = {k: values.get(k, d) for k, (_, d) in KEYS.items()}

    def fail(key: str, msg: str):
        raise ConfigError(msg, key=key, line=lines.get(key))

    checks = [
        ("mu", v["mu"] > 0, "constraint mu > 0 violated"),
        ("chi", v["chi"] > 0, "constraint chi > 0 violated"),
        ("gamma", v["gamma"] >= 0, "constraint gamma >= 0 violated"),
        ("eps", 0 <= v["eps"] <= 1, "constraint 0 <= eps <= 1 violated"),
        ("nx", v["nx"] >= 2, "constraint nx >= 2 violated"),
        ("ny", v["ny"] >= 2, "constraint ny >= 2 violated"),
        ("lx", v["lx"] > 0, "constraint lx > 0 violated"),
        ("ly", v["ly"] > 0, "constraint ly > 0 violated"),
        ("dt_init", v["dt_init"] > 0, "constraint dt_init > 0 violated"),
        ("dt_min", 0 < v["dt_min"] <= v["dt_init"], "constraint 0 < dt_min <= dt_init violated"),
        ("cfl_safety", 0 < v["cfl_safety"] <= 1, "constraint 0 < cfl_safety <= 1 violated"),
        ("v_guard", v["v_guard"] is None or v["v_guard"] > 0, "constraint v_guard > 0 violated"),
        ("t_end", v["t_end"] >= 0, "constraint t_end >= 0 violated"),
        ("output_every", v["output_every"] > 0, "constraint output_every > 0 violated"),
        ("ic", v["ic"] in IC_KINDS, f"ic must be one of {', '.join(IC_KINDS)}"),
        ("ic.v0_min", v["ic.v0_min"] > 0, "constraint ic.v0_min > 0 violated"),
        ("ic.width", v["ic.width"] > 0, "constraint ic.width > 0 violated"),
        ("p_set", all(q >= 1 for q in v["p_set"]), "every p in p_set must be >= 1"),
        ("q", v["q"] is None or v["q"] >= 1, "constraint q >= 1 violated"),
        ("jobs", v["jobs"] >= 1, "constraint jobs >= 1 violated"),
        ("eps_ladder", _strictly_decreasing(v["eps_ladder"]) and all(0 < e <= 1 for e in v["eps_ladder"]),
         "eps_ladder must be strictly decreasing within (0, 1]"),
        ("gammas", all(g >= 0 for g in v["gammas"]), "every gamma must be >= 0"),
        ("horizons", all(T > 0 for T in v["horizons"]), "horizons must be positive"),
    ]
    for key, ok, msg in checks:
        if not ok:
            fail(key, msg)
    ic_params = {k[3:]: val for k, val in v.items() if k.startswith("ic.")}
    cfg = RunConfig(
        grid=Grid(v["nx"], v["ny"], v["lx"], v["ly"]),
        params=Parameters(v["rho"], v["mu"], v["chi"], v["gamma"], v["eps"]),
        control=StepControl(v["dt_init"], v["dt_min"], v["cfl_safety"], v["v_guard"],
                            v["t_end"], v["output_every"]),
        ic_kind=v["ic"],
        ic_params=ic_params,
        diagnostics=DiagnosticsConfig(tuple(v["p_set"]), v["q"]),
        thresholds=Thresholds(v["u_sup_max"], v["v_w1inf_max"], v["v_min"]),
        output_dir=v["output_dir"],
        snapshots=v["snapshots"],
        eps_ladder=tuple(v["eps_ladder"]),
        gammas=tuple(v["gammas"]),
        horizons=tuple(v["horizons"]),
        jobs=v["jobs"],
    )
    try:
        make_initial(cfg.ic_kind, cfg.grid, cfg.ic_params, cfg.params)
    except DomainError as exc:
        fail("ic", str(exc))
    return cfg


def _strictly_decreasing(xs: Sequence[float]) -> bool:
    return all(a > b for a, b in zip(xs, xs[1:]))


# -- initial data ---------------------------------------------------------------------

def make_initial(kind: str, grid: Grid, params: dict | None = None,
                 model: Parameters | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Initial fields ``(u0, v0)`` of the requested kind.

    ``params`` uses the ``ic.*`` keys without the prefix; missing entries take
    the defaults from :data:`KEYS`.  ``fixed_point`` (and the homogeneous base
    of the perturbed kinds, when one exists) needs the model parameters.
    """
    P = default_ic_params()
    P.update(params or {})
    X, Y = grid.centers()
    if kind == "constant":
        u0 = np.full(grid.shape, float(P["u"]))
        v0 = np.full(grid.shape, float(P["v"]))
    elif kind == "fixed_point":
        fp = homogeneous_fixed_point(model) if model is not None else None
        if fp is None:
            raise DomainError("fixed_point initial data needs rho > mu (no positive equilibrium)")
        u0 = np.full(grid.shape, fp[0])
        v0 = np.full(grid.shape, fp[1])
    elif kind == "gaussian_bump":
        cx = grid.lx / 2 if P["center_x"] is None else P["center_x"]
        cy = grid.ly / 2 if P["center_y"] is None else P["center_y"]
        g = np.exp(-((X - cx) ** 2 + (Y - cy) ** 2) / P["width"] ** 2)
        u0 = P["u_floor"] + P["u_amplitude"] * g
        v0 = P["v_floor"] + P["v_amplitude"] * g
    elif kind in ("perturbed_homogeneous", "seeded_random"):
        fp = homogeneous_fixed_point(model) if model is not None else None
        ub, vb = fp if fp is not None else (P["u"], P["v"])
        if kind == "perturbed_homogeneous":
            mode = (np.cos(P["mode_x"] * np.pi * X / grid.lx)
                    * np.cos(P["mode_y"] * np.pi * Y / grid.ly))
            u0 = ub * (1.0 + P["amplitude"] * mode)
            v0 = vb * (1.0 + P["amplitude"] * mode)
        else:
            rng = np.random.default_rng(np.uint64(P["seed"] % 2**64))
            u0 = ub * (1.0 + P["amplitude"] * rng.uniform(-1.0, 1.0, grid.shape))
            v0 = vb * (1.0 + P["amplitude"] * rng.uniform(-1.0, 1.0, grid.shape))
    else:
        raise DomainError(f"unknown initial-condition kind {kind!r}")
    if np.any(u0 < 0):
        raise DomainError("initial u must be nonnegative")
    if np.any(v0 <= 0) or float(np.min(v0)) < P["v0_min"]:
        raise DomainError(f"initial v must be >= v0_min = {P['v0_min']!r} > 0 everywhere")
    return u0, v0


def initial_state(cfg: RunConfig) -> State:
    u0, v0 = make_initial(cfg.ic_kind, cfg.grid, cfg.ic_params, cfg.params)
    return State(0.0, u0, v0, cfg.grid)


# -- single runs -----------------------------------------------------------------------

@dataclass
class Outcome:
    """A finished (or failed) run together with what it emitted."""

    config: RunConfig
    result: RunResult | None
    collector: TrajectoryCollector
    error: str | None = None
    failure: StepFailure | None = None

    @property
    def ok(self) -> bool:
        return self.error is None

    @property
    def records(self) -> list[DiagnosticsRecord]:
        return self.collector.records

    def trajectory(self) -> Trajectory:
        return self.collector.trajectory(self.config.grid)


def simulate(cfg: RunConfig, keep_fields: bool = False, catch: bool = True) -> Outcome:
    """Run one configuration; step failures are captured unless ``catch`` is false."""
    col = TrajectoryCollector(keep_fields=keep_fields)
    s0 = initial_state(cfg)
    try:
        res = run(s0, cfg.params, cfg.control, col, cfg.thresholds, cfg.diagnostics)
    except StepFailure as exc:
        if not catch:
            raise
        logger.warning("run failed: %s", exc)
        return Outcome(cfg, None, col, error=str(exc), failure=exc)
    return Outcome(cfg, res, col)


def _simulate_fields(cfg: RunConfig) -> Outcome:
    out = simulate(cfg, keep_fields=True)
    out.failure = None  # exceptions carrying arrays do not pickle reliably
    return out


def _simulate_records(cfg: RunConfig) -> Outcome:
    out = simulate(cfg, keep_fields=False)
    out.failure = None
    return out


def _map(fn, cfgs: Sequence[RunConfig], jobs: int) -> list[Outcome]:
    if jobs <= 1 or len(cfgs) <= 1:
        return [fn(c) for c in cfgs]
    with ProcessPoolExecutor(max_workers=min(jobs, len(cfgs))) as pool:
        return list(pool.map(fn, cfgs))


# -- epsilon sweep -----------------------------------------------------------------------

DISTANCE_COLUMNS = ("d_lnu", "d_v", "d_gradv", "d_u_lp")


@dataclass(frozen=True)
class SweepRow:
    eps_hi: float
    eps_lo: float
    d_lnu: float
    d_v: float
    d_gradv: float
    d_u_lp: float


@dataclass
class SweepReport:
    eps_ladder: tuple[float, ...]
    rows: list[SweepRow]
    failed: list[float] = field(default_factory=list)
    sup_u: dict[float, float] = field(default_factory=dict)
    records: dict[float, list[DiagnosticsRecord]] = field(default_factory=dict)

    def monotone(self) -> dict[str, bool]:
        """Whether each distance column is nonincreasing down the ladder."""
        out = {}
        for col in DISTANCE_COLUMNS:
            xs = [getattr(r, col) for r in self.rows]
            out[col] = all(b <= a for a, b in zip(xs, xs[1:]))
        return out

    def to_csv(self) -> str:
        lines = ["eps_hi,eps_lo," + ",".join(DISTANCE_COLUMNS)]
        for r in self.rows:
            vals = [r.eps_hi, r.eps_lo] + [getattr(r, c) for c in DISTANCE_COLUMNS]
            lines.append(",".join(repr(float(x)) for x in vals))
        return "\n".join(lines) + "\n"

    @staticmethod
    def rows_from_csv(text: str) -> list[SweepRow]:
        lines = [l for l in text.splitlines() if l.strip()]
        header = lines[0].split(",")
        if header != ["eps_hi", "eps_lo", *DISTANCE_COLUMNS]:
            raise UsageError(f"unexpected sweep CSV header {header}")
        return [SweepRow(*(float(x) for x in l.split(","))) for l in lines[1:]]


def spacetime_distances(a: Trajectory, b: Trajectory) -> dict[str, float]:
    """Space-time distances between two trajectories on the same snapshot lattice.

    Left rectangle rule in time over the stored snapshots.
    """
    if a.u.shape != b.u.shape or not np.array_equal(a.times, b.times):
        raise UsageError("trajectories must share the grid and the snapshot lattice")
    grid = a.grid
    K = len(a.times) - 1
    sums = dict.fromkeys(DISTANCE_COLUMNS, 0.0)
    for k in range(K):
        dt = float(a.times[k + 1] - a.times[k])
        dl = np.log1p(b.u[k]) - np.log1p(a.u[k])
        dv = b.v[k] - a.v[k]
        gx, gy = gradient_centered(dv, grid)
        du = np.abs(b.u[k] - a.u[k])
        sums["d_lnu"] += dt * integrate(dl * dl, grid)
        sums["d_v"] += dt * integrate(dv * dv, grid)
        sums["d_gradv"] += dt * integrate(gx * gx + gy * gy, grid)
        sums["d_u_lp"] += dt * integrate(du * np.sqrt(du), grid)
    return {
        "d_lnu": math.sqrt(sums["d_lnu"]),
        "d_v": math.sqrt(sums["d_v"]),
        "d_gradv": math.sqrt(sums["d_gradv"]),
        "d_u_lp": sums["d_u_lp"] ** (2.0 / 3.0),
    }


def eps_sweep(cfg: RunConfig, ladder: Sequence[float] | None = None, T: float | None = None,
              jobs: int | None = None) -> SweepReport:
    """Run every rung of a strictly decreasing cutoff ladder on one lattice and compare neighbours."""
    ladder = tuple(cfg.eps_ladder if ladder is None else ladder)
    if len(ladder) < 2:
        raise UsageError("eps ladder needs at least two rungs")
    if not _strictly_decreasing(ladder):
        raise UsageError("eps ladder must be strictly decreasing")
    if not all(0 < e <= 1 for e in ladder):
        raise UsageError("eps ladder entries must lie in (0, 1]")
    base = cfg if T is None else cfg.with_control(t_end=T)
    cfgs = [base.with_params(eps=e) for e in ladder]
    outs = _map(_simulate_fields, cfgs, cfg.jobs if jobs is None else jobs)
    failed = [e for e, o in zip(ladder, outs) if not o.ok]
    trajs = {e: o.trajectory() for e, o in zip(ladder, outs) if o.ok}
    sup_u = {e: max(r.linf_u for r in o.records) for e, o in zip(ladder, outs) if o.ok}
    rows = []
    for hi, lo in zip(ladder, ladder[1:]):
        if hi in trajs and lo in trajs:
            d = spacetime_distances(trajs[hi], trajs[lo])
            rows.append(SweepRow(hi, lo, **d))
    return SweepReport(ladder, rows, failed, sup_u, {e: o.records for e, o in zip(ladder, outs)})


# -- gamma comparison -----------------------------------------------------------------------

@dataclass(frozen=True)
class GammaRow:
    gamma: float
    T: float
    sup_linf_u: float
    sup_linf_v: float
    ok: bool = True


@dataclass
class GammaReport:
    rows: list[GammaRow]
    stabilized: dict[float, bool | None]
    records: dict[float, list[DiagnosticsRecord]] = field(default_factory=dict)

    def to_csv(self) -> str:
        lines = ["gamma,T,sup_linf_u,sup_linf_v,ok,stabilized"]
        for r in self.rows:
            flag = self.stabilized.get(r.gamma)
            lines.append(f"{r.gamma!r},{r.T!r},{r.sup_linf_u!r},{r.sup_linf_v!r},{int(r.ok)},"
                         f"{'' if flag is None else int(flag)}")
        return "\n".join(lines) + "\n"


def relative_spread(xs: Sequence[float]) -> float:
    hi, lo = max(xs), min(xs)
    return 0.0 if hi == 0 else (hi - lo) / abs(hi)


def gamma_compare(cfg: RunConfig, gammas: Sequence[float] | None = None,
                  horizons: Sequence[float] | None = None, tol: float = 0.01,
                  jobs: int | None = None) -> GammaReport:
    """Sup-in-time maxima of ``u`` and ``v`` per exponent offset and horizon.

    Each exponent is simulated once up to the longest horizon; shorter
    horizons read the prefix of that trajectory, which is bit-identical to a
    separate run because output times (and hence horizons that are multiples
    of ``output_every``) are hit exactly.  Rows with ``gamma > 0`` get a
    stabilisation flag (maxima agree within ``tol``); ``gamma = 0`` gets none.
    """
    gammas = tuple(cfg.gammas if gammas is None else gammas)
    horizons = tuple(sorted(cfg.horizons if horizons is None else horizons))
    if any(g < 0 for g in gammas):
        raise UsageError("gammas must be nonnegative")
    for T in horizons:
        k = T / cfg.control.output_every
        if abs(k - round(k)) > 1e-9 * max(1.0, k):
            raise UsageError(f"horizon {T!r} is not a multiple of output_every")
    cfgs = [cfg.with_params(gamma=g).with_control(t_end=horizons[-1]) for g in gammas]
    outs = _map(_simulate_records, cfgs, cfg.jobs if jobs is None else jobs)
    rows: list[GammaRow] = []
    stabilized: dict[float, bool | None] = {}
    for g, out in zip(gammas, outs):
        per_T = []
        for T in horizons:
            recs = [r for r in out.records if r.t <= T * (1 + 1e-12)]
            reached = bool(recs) and recs[-1].t >= T * (1 - 1e-12)
            su = max(r.linf_u for r in recs) if recs else math.nan
            sv = max(r.linf_v for r in recs) if recs else math.nan
            row = GammaRow(g, T, su, sv, out.ok or reached)
            rows.append(row)
            per_T.append(row)
        if g > 0:
            good = all(r.ok for r in per_T)
            stabilized[g] = bool(good
                                 and relative_spread([r.sup_linf_u for r in per_T]) <= tol
                                 and relative_spread([r.sup_linf_v for r in per_T]) <= tol)
        else:
            stabilized[g] = None
    return GammaReport(rows, stabilized, {g: o.records for g, o in zip(gammas, outs)})


# -- heat oracle -------------------------------------------------------------------------------

def heat_exact(grid: Grid, t: float) -> np.ndarray:
    X, Y = grid.centers()
    decay = math.exp(-math.pi**2 * (1.0 / grid.lx**2 + 1.0 / grid.ly**2) * t)
    return 1.0 + 0.5 * decay * np.cos(np.pi * X / grid.lx) * np.cos(np.pi * Y / grid.ly)


def heat_oracle_error(grid: Grid, dt: float, T: float) -> float:
    """Space-time L2 error of the pure heat flow against the separable cosine solution."""
    if T == 0:
        return 0.0
    u0 = heat_exact(grid, 0.0)
    s0 = State(0.0, u0, u0.copy(), grid)
    ctrl = StepControl(dt_init=dt, dt_min=min(1e-12, dt), t_end=T, output_every=dt)
    err2 = 0.0
    last_t = 0.0

    def sink(_rec, state):
        nonlocal err2, last_t
        if state.t == 0.0:
            return
        e = state.u - heat_exact(grid, state.t)
        err2 += (state.t - last_t) * integrate(e * e, grid)
        last_t = state.t

    run(s0, None, ctrl, sink, diag=DiagnosticsConfig(p_set=(2.0,)), heat_only=True)
    return math.sqrt(err2)


def fitted_slope(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    return float(np.polyfit(np.log(np.asarray(xs, float)), np.log(np.asarray(ys, float)), 1)[0])
