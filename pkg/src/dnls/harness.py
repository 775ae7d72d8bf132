"""Experiment pipelines, configuration and result emission.

Every runner takes an :class:`ExperimentConfig` and returns an
:class:`ExperimentReport` holding flat records (one dict per sweep point),
named verdicts and summary numbers.  :func:`write_outputs` turns a report into
``records.csv``, ``summary.json`` and ``plot.dat``.
"""
from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import analysis as an
from .calculus import (
    LocalizationKernel,
    SeamContaminationError,
    commutator_hZ,
    discretize,
    extend,
    laplacian_omega,
    localize,
    reduced_radius,
    weight_multiply,
    weight_shift_identity_residual,
)
from .dynamics import (
    SolverConfig,
    continuum_solve,
    fourier_resample,
    free_gaussian,
    gaussian,
    kernel_sup,
    linear_flow,
    linear_flow_samples,
    nls_solve,
    small_amplitude_rescale,
)
from .lattice import (
    ContinuumGrid,
    GridFunction,
    LatticeSpec,
    PeriodicLattice,
    choose_R_for_alpha,
    resample_to_continuum,
)
from .spectral import SpectralCoeffs, basis_matrix, forward, inverse, symbol_grid

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "ExperimentReport",
    "EXPERIMENTS",
    "run",
    "write_outputs",
    "fit_slope",
    "make_datum",
]

log = logging.getLogger(__name__)

EXPERIMENT_TAGS = (
    "spectral-check",
    "commutator",
    "dispersive",
    "strichartz",
    "linfty",
    "weighted-growth",
    "converge",
    "small-amplitude",
    "solve",
)

PASS, FAIL, SKIP = "PASS", "FAIL", "SKIP"


class ConfigError(ValueError):
    """Invalid experiment configuration."""


# -- configuration ------------------------------------------------------------------


def _default_data():
    return [{"kind": "gaussian", "sigma": 1.0, "amplitude": 1.0}]


@dataclass
class ExperimentConfig:
    """Sweep description for one experiment.

    ``R`` is an explicit list of half-sides; when empty, ``R`` follows
    ``choose_R_for_alpha(K, alpha, c_R)``.  ``data`` is a list of datum
    selectors, e.g. ``{"kind": "gaussian", "sigma": 1, "amplitude": 1}``,
    ``{"kind": "single-mode", "m": [1, 1]}`` or ``{"kind": "random", "seed": 3}``;
    see :func:`make_datum` for the full list.
    """

    experiment: str
    d: int = 2
    K: list = field(default_factory=lambda: [4, 8, 16, 32])
    R: list = field(default_factory=list)
    alpha: list = field(default_factory=lambda: [0.5])
    N: list = field(default_factory=lambda: [1.0])
    T: list = field(default_factory=lambda: [1.0])
    t: list = field(default_factory=list)
    data: list = field(default_factory=_default_data)
    pairs: list = field(default_factory=list)
    tau: float = 1e-3
    sigma: float = 1.0
    nonlinear: bool = True
    c_R: float = 1.0
    eps: float = 0.05
    delta: float = 0.1
    seed: int = 0
    interp: str = "cellwise"
    n_t: int = 24
    nt_factor: float = 4.0
    snapshot_every: int = 10
    ref_h: float = 0.0
    quad_h: float = 0.0
    box_L: float = 4 * math.pi
    tau_gate: bool = True
    diagnostics: bool = True
    output: str = ""

    def __post_init__(self):
        self.validate()

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigError("configuration must be a JSON object")
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(raw) - names)
        if unknown:
            raise ConfigError(f"unknown configuration keys: {unknown}")
        if "experiment" not in raw:
            raise ConfigError("missing 'experiment'")
        try:
            return cls(**raw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read configuration {path}: {exc}") from exc
        return cls.from_dict(raw)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def validate(self):
        if self.experiment not in EXPERIMENT_TAGS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; expected one of {EXPERIMENT_TAGS}")
        if self.d not in (1, 2, 3):
            raise ConfigError("d must be 1, 2 or 3")
        for name in ("K", "R", "alpha", "N", "T", "t", "data", "pairs"):
            if not isinstance(getattr(self, name), list):
                raise ConfigError(f"{name} must be a list")
        if not self.K or any(not isinstance(k, int) or k < 1 for k in self.K):
            raise ConfigError("K must be a nonempty list of positive integers")
        if any(not isinstance(r, int) or r < 1 for r in self.R):
            raise ConfigError("R entries must be positive integers")
        if any(a < 0 for a in self.alpha) or not self.alpha:
            raise ConfigError("alpha must be a nonempty list of nonnegative numbers")
        if any(not (0 < n <= 1) for n in self.N):
            raise ConfigError("N entries must lie in (0, 1]")
        if not self.tau > 0 or self.tau > 0.5:
            raise ConfigError("tau must lie in (0, 0.5]")
        if not 0 < self.delta < 1:
            raise ConfigError("delta must lie in (0, 1)")
        if self.eps <= 0:
            raise ConfigError("eps must be positive")
        if self.interp not in ("cellwise", "multilinear"):
            raise ConfigError("interp must be 'cellwise' or 'multilinear'")
        for p in self.pairs:
            if not (isinstance(p, (list, tuple)) and len(p) == 2):
                raise ConfigError("pairs must be [q, r] lists")
        for datum in self.data:
            if not isinstance(datum, dict) or datum.get("kind") not in _DATUM_KINDS:
                raise ConfigError(f"bad datum selector {datum!r}; kinds are {sorted(_DATUM_KINDS)}")
        if self.experiment in ("converge", "small-amplitude") and any(not 0 < T <= 2 for T in self.T):
            raise ConfigError("convergence runs need 0 < T <= 2")

    def specs(self, alpha: float | None = None) -> list[LatticeSpec]:
        """One lattice per K (paired with R[i] if given, else R from alpha)."""
        a = self.alpha[0] if alpha is None else alpha
        if self.R and len(self.R) not in (1, len(self.K)):
            raise ConfigError("R must have one entry or one per K")
        out = []
        for i, K in enumerate(self.K):
            if self.R:
                R = self.R[i] if len(self.R) == len(self.K) else self.R[0]
            else:
                R = choose_R_for_alpha(K, a, self.c_R)
            spec = LatticeSpec(self.d, K, R, a)
            if spec.d == 3 and spec.size > 63**3:
                raise ConfigError("d = 3 runs are capped at 63^3 interior points")
            out.append(spec)
        return out


# -- report -------------------------------------------------------------------------


@dataclass
class ExperimentReport:
    experiment: str
    columns: list
    records: list = field(default_factory=list)
    verdicts: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    plot: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    artifacts: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(v != FAIL for v in self.verdicts.values())

    def verdict(self, name: str, ok: bool | None, detail: str = ""):
        self.verdicts[name] = SKIP if ok is None else (PASS if ok else FAIL)
        if detail:
            self.summary.setdefault("details", {})[name] = detail

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for rec in self.records:
            w.writerow([_fmt(rec.get(c, "")) for c in self.columns])
        return buf.getvalue()

    def plot_text(self) -> str:
        blocks = []
        for label, xs, ys in self.plot:
            lines = [f"# {label}"] + [f"{_fmt(x)} {_fmt(y)}" for x, y in zip(xs, ys)]
            blocks.append("\n".join(lines))
        return "\n\n\n".join(blocks) + ("\n" if blocks else "")


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.12e}"
    return str(v)


def write_outputs(report: ExperimentReport, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "records.csv").write_text(report.csv_text())
    summary = {
        "experiment": report.experiment,
        "passed": report.passed,
        "verdicts": report.verdicts,
        "summary": _jsonable(report.summary),
        "timings": report.timings,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    if report.plot:
        (out / "plot.dat").write_text(report.plot_text())
    return out


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


# -- helpers ------------------------------------------------------------------------


def fit_slope(x, y) -> tuple[float, float]:
    """Least-squares ``(slope, intercept)`` of ``log y`` against ``log x``."""
    lx, ly = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    if lx.size < 2:
        raise ValueError("need at least two points for a slope")
    b, a = np.polyfit(lx, ly, 1)
    return float(b), float(a)


def _map(fn: Callable, items: list, threads: int) -> list:
    """Ordered map, optionally over a thread pool."""
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _timed(report: ExperimentReport, key: str):
    class _T:
        def __enter__(self):
            self.t0 = time.perf_counter()

        def __exit__(self, *exc):
            report.timings[key] = report.timings.get(key, 0.0) + time.perf_counter() - self.t0

    return _T()


_DATUM_KINDS = {"gaussian", "single-mode", "random", "delta", "bump", "zero"}


def datum_label(datum: dict) -> str:
    kind = datum["kind"]
    if kind == "gaussian":
        return f"gaussian(s={datum.get('sigma', 1.0):g},a={datum.get('amplitude', 1.0):g})"
    if kind == "single-mode":
        m = datum.get("m", "top")
        return f"mode({m if isinstance(m, str) else '-'.join(map(str, m))})"
    if kind == "random":
        return f"random({datum.get('seed', 0)})"
    if kind == "bump":
        return f"bump(w={datum.get('width', 2.0):g}h)"
    return kind


def _mode_index(spec: LatticeSpec, m) -> tuple:
    if m == "top":
        return (spec.n - 1,) * spec.d
    if m == "low":
        return (0,) * spec.d
    if m == "mid":
        return (spec.n // 2,) * spec.d
    idx = tuple(int(k) - 1 for k in m)
    if len(idx) != spec.d or any(not 0 <= k < spec.n for k in idx):
        raise ConfigError(f"mode index {m} is outside the frequency set")
    return idx


def make_datum(datum: dict, spec: LatticeSpec, seed: int = 0) -> GridFunction:
    """Initial datum on a finite lattice.

    Kinds: ``gaussian`` (sigma, amplitude; cell-averaged), ``single-mode``
    (``m`` = list of integer indices in 1..2KR-1, or "top"/"mid"/"low";
    frequency ``xi = m/(2R)``), ``random`` (complex normal, ``seed``),
    ``delta`` (unit value at the origin), ``bump`` (Gaussian of width
    ``width * h``), ``zero``.
    """
    kind = datum["kind"]
    if kind == "gaussian":
        u0 = gaussian(datum.get("sigma", 1.0), datum.get("amplitude", 1.0))
        return discretize(u0, spec)
    if kind == "single-mode":
        c = np.zeros(spec.shape)
        c[_mode_index(spec, datum.get("m", "top"))] = 1.0
        return inverse(SpectralCoeffs(spec, c))
    if kind == "random":
        rng = np.random.default_rng([seed, datum.get("seed", 0), spec.K, spec.R])
        v = rng.standard_normal(spec.shape) + 1j * rng.standard_normal(spec.shape)
        return GridFunction(spec, v)
    if kind == "delta":
        v = np.zeros(spec.shape, dtype=complex)
        v[(spec.n // 2,) * spec.d] = 1.0
        return GridFunction(spec, v)
    if kind == "bump":
        w = datum.get("width", 2.0) * spec.h
        r2 = sum(g**2 for g in spec.mesh())
        return GridFunction(spec, np.exp(-r2 / (2 * w * w)))
    if kind == "zero":
        return GridFunction(spec, np.zeros(spec.shape))
    raise ConfigError(f"unknown datum kind {kind!r}")


# -- spectral check -----------------------------------------------------------------

SPECTRAL_LIMIT = 4096


def cosine_sum_defect(L: int, theta: np.ndarray) -> float:
    """``sum_{k=1}^L cos(k theta)`` against ``sin((2L+1) theta/2) / (2 sin(theta/2)) - 1/2``."""
    k = np.arange(1, L + 1)
    lhs = np.cos(np.outer(theta, k)).sum(axis=1)
    rhs = np.sin((2 * L + 1) * theta / 2) / (2 * np.sin(theta / 2)) - 0.5
    return float(np.max(np.abs(lhs - rhs)))


def spectral_defects(spec: LatticeSpec) -> dict:
    """Orthonormality, completeness and eigen-equation defects by explicit matrices."""
    if spec.size > SPECTRAL_LIMIT:
        raise ConfigError(f"spec with {spec.size} points exceeds the direct-oracle limit {SPECTRAL_LIMIT}")
    E = basis_matrix(spec)
    w = spec.h**spec.d
    eye = np.eye(spec.size)
    ortho = float(np.abs(w * (E.T @ E) - eye).max())
    compl = float(np.abs(w * (E @ E.T) - eye).max())
    # apply the stencil to every basis vector at once
    P = symbol_grid(spec).ravel()
    cols = E.T.reshape((spec.size,) + spec.shape)
    lap = np.stack([laplacian_omega(GridFunction(spec, c)).values.ravel() for c in cols])
    res = np.abs(lap + P[:, None] * E.T).max(axis=1)
    # backward error: residual over ||Lap|| ||e||, the scale of roundoff in the stencil
    eig = float((res / (P.max() * np.abs(E.T).max(axis=1))).max())
    eig_rel = float((res / (1 + P)).max())
    return {"orthonormality": ortho, "completeness": compl, "eigen": eig, "eigen_vs_eigenvalue": eig_rel}


def run_spectral_check(cfg: ExperimentConfig, threads: int = 1) -> ExperimentReport:
    rep = ExperimentReport(
        "spectral-check",
        ["d", "K", "R", "points", "orthonormality", "completeness", "eigen", "eigen_vs_eigenvalue", "fast_direct"],
    )
    Rs = cfg.R or [1]
    specs = [LatticeSpec(cfg.d, K, R) for K in cfg.K for R in Rs]

    def point(spec):
        out = spectral_defects(spec)
        rng = np.random.default_rng([cfg.seed, spec.K, spec.R])
        f = GridFunction(spec, rng.standard_normal(spec.shape) + 1j * rng.standard_normal(spec.shape))
        a, b = forward(f).coeffs, forward(f, method="direct").coeffs
        out["fast_direct"] = float(np.abs(a - b.reshape(a.shape)).max() / np.abs(b).max())
        return dict(d=spec.d, K=spec.K, R=spec.R, points=spec.size, **out)

    with _timed(rep, "sweep"):
        rep.records = _map(point, specs, threads)
    theta = np.linspace(0.01, 2 * math.pi - 0.01, 1001)
    cos_def = max(cosine_sum_defect(L, theta) for L in range(1, 33))
    rep.summary["cosine_sum_defect"] = cos_def
    for key, tol in (("orthonormality", 1e-10), ("eigen", 1e-10), ("completeness", 1e-8), ("fast_direct", 1e-12)):
        worst = max(r[key] for r in rep.records)
        rep.summary[f"max_{key}"] = worst
        rep.verdict(key, worst < tol)
    rep.verdict("cosine_sum", cos_def < 1e-10)
    return rep


# -- commutators --------------------------------------------------------------------


def shift_commutator_residual(spec: LatticeSpec, m, j: int, t: float, form: str = "sum") -> float:
    """``[phi_j, U(t)] e`` computed numerically vs the two-term phase-difference formula.

    The formula follows from the shift identity for ``phi_j e``; ``form``
    selects the difference or the sum form of the identity (see
    :func:`dnls.calculus.weight_shift_identity_residual`).
    """
    c = np.zeros(spec.shape)
    idx = _mode_index(spec, m)
    c[idx] = 1.0
    e = inverse(SpectralCoeffs(spec, c))
    num = weight_multiply(linear_flow(e, t), j).values - linear_flow(weight_multiply(e, j), t).values
    P = symbol_grid(spec)
    rho = spec.half_side / math.pi
    pred = np.zeros(spec.shape, dtype=complex)
    p0 = P[idx]
    for sgn in (-1, 1):
        k = list(idx)
        k[j] += sgn
        if not 0 <= k[j] < spec.n:
            continue
        ck = np.zeros(spec.shape)
        ck[tuple(k)] = 1.0
        ek = inverse(SpectralCoeffs(spec, ck)).values
        # coefficient of e_{xi + sgn delta} in phi e_xi
        coef = -sgn * rho if form == "difference" else -rho
        pred += coef * (np.exp(-1j * t * p0) - np.exp(-1j * t * P[tuple(k)])) * ek
    return float(np.abs(num - pred).max())


SHIFT_LIMIT = 31**2


def shift_identity_sweep(spec: LatticeSpec, form: str = "difference") -> float:
    """Max residual of the weight shift identity over every frequency and axis of ``spec``."""
    if spec.size > SHIFT_LIMIT:
        raise ConfigError(f"shift identity sweep is limited to {SHIFT_LIMIT} points")
    xi = spec.frequencies()
    return max(
        weight_shift_identity_residual(spec, [xi[k] for k in m], j, form)
        for m in np.ndindex(*spec.shape)
        for j in range(spec.d)
    )


def run_commutator(cfg: ExperimentConfig, threads: int = 1) -> ExperimentReport:
    rep = ExperimentReport(
        "commutator", ["part", "d", "K", "R", "datum", "t", "value"]
    )
    ts = cfg.t or [0.25, 0.5, 1.0, 2.0]
    if any(not 0 <= t <= 2 for t in ts):
        raise ConfigError("commutator times must lie in [0, 2]")
    d = max(cfg.d, 1)

    # (a) hZ^d identity on a 16 pi box
    def hz_point(args):
        K, t = args
        lat = PeriodicLattice(d, math.pi / K, 16 * K)
        mesh = lat.mesh()
        f = GridFunction(lat, gaussian()(*mesh) * LocalizationKernel(2.0)(*mesh))
        try:
            D = commutator_hZ(f, t)
            val, status = math.sqrt(lat.h**d * float(np.sum(np.abs(D) ** 2))), "ok"
        except SeamContaminationError:
            val, status = float("nan"), "seam"
        return dict(part="hZ", d=d, K=K, R=0, datum="gaussian*eta2", t=t, value=val, status=status)

    # (b) ratio on the finite lattice
    specs = cfg.specs()
    data = cfg.data
    jobs = [(s, dm) for s in specs for dm in data]

    def omega_point(args):
        spec, dm = args
        f = make_datum(dm, spec, cfg.seed)
        H = an.hs_norm(f, 1.0)
        rows = []
        for t in ts:
            if t == 0 or H == 0:
                ratio = 0.0
            else:
                tot = 0.0
                for j in range(spec.d):
                    a = weight_multiply(linear_flow(f, t), j).values - linear_flow(weight_multiply(f, j), t).values
                    tot += spec.h**spec.d * float(np.sum(np.abs(a) ** 2))
                ratio = math.sqrt(tot) / (t * H)
            rows.append(dict(part="omega", d=spec.d, K=spec.K, R=spec.R, datum=datum_label(dm), t=t, value=ratio, status="ok"))
        return rows

    with _timed(rep, "sweep"):
        hz = _map(hz_point, [(K, t) for K in cfg.K for t in ts if t > 0], threads)
        om = [r for rows in _map(omega_point, jobs, threads) for r in rows]

    # single-mode shift check on the smallest spec
    spec0 = specs[0]
    shift_res = {
        form: max(
            shift_commutator_residual(spec0, m, j, t, form)
            for m in ("top", "mid", "low")
            for j in range(spec0.d)
            for t in ts
        )
        for form in ("difference", "sum")
    }
    # seam-contaminated points carry no value; they are listed in the summary instead
    seam = [r for r in hz if r["status"] == "seam"]
    hz = [r for r in hz if r["status"] == "ok"]
    shift_specs = [sp for sp in specs if sp.size <= SHIFT_LIMIT]
    shift_id = {form: max((shift_identity_sweep(sp, form) for sp in shift_specs), default=None)
                for form in ("difference", "sum")}
    rep.summary.update(shift_identity_difference=shift_id["difference"], shift_identity_sum=shift_id["sum"])
    rep.verdict("shift_identity_difference", None if shift_id["difference"] is None else shift_id["difference"] < 1e-12)
    rep.verdict("shift_identity_sum", None if shift_id["sum"] is None else shift_id["sum"] < 1e-12)
    rep.records = hz + om
    ok = [r["value"] for r in hz]
    rep.summary.update(hz_max_defect=max(ok) if ok else None,
                       hz_skipped=[{"K": r["K"], "t": r["t"], "reason": "seam contamination"} for r in seam],
                       two_term_residual_difference=shift_res["difference"], two_term_residual=shift_res["sum"])
    rep.verdict("hZ_identity", (max(ok) < 1e-9) if ok else None)
    rep.verdict("two_term_formula", shift_res["sum"] < 1e-10)
    consts = {}
    for r in om:
        consts[r["K"]] = max(consts.get(r["K"], 0.0), r["value"])
    rep.summary["constant_per_K"] = consts
    vals = [v for v in consts.values() if v > 0]
    spread = max(vals) / min(vals) if vals else 1.0
    rep.summary["constant_spread"] = spread
    rep.verdict("omega_ratio_stable", spread <= 2.0)
    rep.plot = [(f"K={K} ratio vs t, {lab}", [r["t"] for r in om if r["K"] == K and r["datum"] == lab],
                 [r["value"] for r in om if r["K"] == K and r["datum"] == lab])
                for K in consts for lab in dict.fromkeys(r["datum"] for r in om)]
    return rep


# -- dispersive decay ---------------------------------------------------------------


def compensated_constant(spec: LatticeSpec, N: float, n_t: int = 24, method: str = "factorized"):
    """``max_t sup|K_{t,N}| (t h / N)^(d/3)`` over ``t`` uniform in ``(0, R h / (2N)]``."""
    tmax = spec.R * spec.h / (2 * N)
    ts = tmax * np.arange(1, n_t + 1) / n_t
    vals = [kernel_sup(spec, t, N, method) * (t * spec.h / N) ** (spec.d / 3) for t in ts]
    return ts, np.array(vals)


def run_dispersive(cfg: ExperimentConfig, threads: int = 1) -> ExperimentReport:
    rep = ExperimentReport("dispersive", ["sweep", "d", "K", "R", "N", "t", "sup_kernel", "compensated"])
    Rs = cfg.R or [1]

    def sweep(Ks, label):
        pts = [(LatticeSpec(cfg.d, K, R), N) for K in Ks for R in Rs for N in cfg.N]

        def point(args):
            spec, N = args
            ts, C = compensated_constant(spec, N, cfg.n_t)
            rows = []
            for t, c in zip(ts, C):
                sup = c / (t * spec.h / N) ** (spec.d / 3)
                rows.append(dict(sweep=label, d=spec.d, K=spec.K, R=spec.R, N=N, t=t, sup_kernel=sup, compensated=c))
            return rows

        return [r for rows in _map(point, pts, threads) for r in rows]

    half = sorted({max(1, K // 2) for K in cfg.K})
    with _timed(rep, "sweep"):
        main = sweep(cfg.K, "main")
        coarse = sweep(half, "half")
    rep.records = main + coarse

    def cmax(rows):
        out = {}
        for r in rows:
            key = (r["K"], r["R"], r["N"])
            out[key] = max(out.get(key, 0.0), r["compensated"])
        return out

    cm, ch = cmax(main), cmax(coarse)
    per_N = {}
    for (K, R, N), c in cm.items():
        per_N.setdefault(N, []).append(c)
    spreads = {N: max(v) / min(v) for N, v in per_N.items()}
    glob = max(cm.values()) / min(cm.values())
    growth = max(cm.values()) / max(ch.values())
    rep.summary.update(
        constants={f"K={K},R={R},N={N:g}": c for (K, R, N), c in sorted(cm.items())},
        spread_per_N={f"{N:g}": s for N, s in sorted(spreads.items())},
        spread_global=glob,
        growth_ratio=growth,
    )
    rep.verdict("spread", glob <= 2.0)
    rep.verdict("no_growth", growth <= 1.25)

    # factorised vs direct kernel on small specs
    small = [s for s in {LatticeSpec(cfg.d, K, R) for K in cfg.K + half for R in Rs} if s.size <= 31**2 and cfg.d <= 2]
    if small:
        dev = 0.0
        for s in sorted(small, key=lambda s: (s.K, s.R)):
            for N in cfg.N:
                t = s.R * s.h / (2 * N)
                dev = max(dev, abs(kernel_sup(s, t, N, "direct") - kernel_sup(s, t, N)))
        rep.summary["factorized_vs_direct"] = dev
        rep.verdict("factorized_vs_direct", dev < 1e-10)
    for (K, R, N) in sorted(cm):
        rows = [r for r in main if (r["K"], r["R"], r["N"]) == (K, R, N)]
        rep.plot.append((f"K={K} R={R} N={N:g}: t vs compensated", [r["t"] for r in rows], [r["compensated"] for r in rows]))
    return rep


# -- Strichartz ---------------------------------------------------------------------


def strichartz_ratios(f: GridFunction, pairs, alpha: float, eps: float = 0.05, nt_factor: float = 4.0, T: float = 1.0):
    """``rho = ||exp(it Lap) f||_{L^q_t([0,T]; L^r)} / ||f||_{H^s}`` for each pair.

    Time samples resolve the fastest phase: ``n_t = ceil(nt_factor * max P)``.
    Returns a list of ``(rho, rho_half)``; ``rho_half`` uses every other
    sample, as a quadrature check.
    """
    spec = f.domain
    Pmax = 4 * spec.d / spec.h**2
    nt = int(math.ceil(nt_factor * Pmax * T))
    nt += nt % 2
    ts = np.linspace(0.0, T, nt + 1)
    rs = sorted({p[1] for p in pairs})
    norms = {r: np.empty(ts.size) for r in rs}
    w = spec.h**spec.d
    for k, (_, v) in enumerate(linear_flow_samples(f, ts)):
        a = np.abs(v)
        for r in rs:
            norms[r][k] = a.max() if math.isinf(r) else (w * np.sum(a**r)) ** (1 / r)
    out = []
    for q, r in pairs:
        s = an.loss_exponent(q, alpha, eps)
        H = an.hs_norm(f, s)
        if H == 0:
            out.append((0.0, 0.0))
            continue
        if math.isinf(q):
            full, half = norms[r].max(), norms[r][::2].max()
        else:
            full = np.trapezoid(norms[r] ** q, ts) ** (1 / q)
            half = np.trapezoid(norms[r][::2] ** q, ts[::2]) ** (1 / q)
        out.append((float(full / H), float(half / H)))
    return out


DEFAULT_PAIRS = {2: [(6.0, 4.0), (4.0, 8.0)], 3: [(4.0, 4.0)]}
_PAIR_COUNT = {2: 13, 3: 12}


def _pairs(cfg: ExperimentConfig) -> list[tuple[float, float]]:
    if cfg.d not in (2, 3):
        raise ConfigError("Strichartz pairs are defined for d = 2, 3")
    if not cfg.pairs:
        wanted = DEFAULT_PAIRS[cfg.d]
        return [(p.q, p.r) for p in an.admissible_pairs(cfg.d, _PAIR_COUNT[cfg.d]) if (p.q, p.r) in wanted]
    out = []
    for q, r in cfg.pairs:
        q = math.inf if q in ("inf", None) else float(q)
        r = math.inf if r in ("inf", None) else float(r)
        try:
            an.AdmissiblePair(q, r, cfg.d)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        out.append((q, r))
    return out


def run_strichartz(cfg: ExperimentConfig, threads: int = 1) -> ExperimentReport:
    rep = ExperimentReport(
        "strichartz", ["q", "r", "alpha", "s", "datum", "K", "R", "h", "rho", "rho_half_sampling"]
    )
    pairs = _pairs(cfg)
    alpha = cfg.alpha[0]
    specs = cfg.specs(alpha)
    jobs = [(s, dm) for s in specs for dm in cfg.data]

    def point(args):
        spec, dm = args
        f = make_datum(dm, spec, cfg.seed)
        return strichartz_ratios(f, pairs, alpha, cfg.eps, cfg.nt_factor)

    with _timed(rep, "sweep"):
        res = _map(point, jobs, threads)
    for (spec, dm), vals in zip(jobs, res):
        for (q, r), (rho, rho2) in zip(pairs, vals):
            rep.records.append(dict(q=q, r=r, alpha=alpha, s=an.loss_exponent(q, alpha, cfg.eps), datum=datum_label(dm),
                                    K=spec.K, R=spec.R, h=spec.h, rho=rho, rho_half_sampling=rho2))
    slopes = {}
    quad = 0.0
    for q, r in pairs:
        for dm in cfg.data:
            lab = datum_label(dm)
            rows = [x for x in rep.records if x["q"] == q and x["r"] == r and x["datum"] == lab]
            quad = max(quad, max(abs(x["rho"] - x["rho_half_sampling"]) / x["rho"] for x in rows if x["rho"] > 0))
            if len(rows) >= 2 and all(x["rho"] > 0 for x in rows):
                slopes[f"({q:g},{r:g}) {lab}"] = fit_slope([x["h"] for x in rows], [x["rho"] for x in rows])[0]
            rep.plot.append((f"({q:g},{r:g}) {lab}: h vs rho", [x["h"] for x in rows], [x["rho"] for x in rows]))
    rep.summary.update(slopes=slopes, min_slope=min(slopes.values()) if slopes else None, quadrature_change=quad)
    rep.verdict("slope", (min(slopes.values()) >= -0.05) if slopes else None)
    rep.verdict("time_quadrature", quad < 0.01)
    return rep


# -- continuum limit ----------------------------------------------------------------


def _grids(cfg: ExperimentConfig, spec_max: LatticeSpec):
    L = cfg.box_L
    if L < spec_max.half_side:
        raise ConfigError(f"reference box half-width {L:g} is smaller than the lattice box {spec_max.half_side:g}")
    ref_h = cfg.ref_h or (math.pi / 16 if cfg.d <= 2 else math.pi / 8)
    quad_h = cfg.quad_h or {1: math.pi / 512, 2: math.pi / 128, 3: math.pi / 16}[cfg.d]
    ref = ContinuumGrid(cfg.d, ref_h, L)
    quad = ContinuumGrid(cfg.d, quad_h, L, offset=0.5)
    return ref, quad


def _datum_u0(cfg: ExperimentConfig):
    dm = cfg.data[0]
    if dm["kind"] == "zero":
        return gaussian(1.0, 0.0), (1.0, 0.0)
    if dm["kind"] != "gaussian":
        raise ConfigError("convergence runs need a gaussian datum")
    s, a = dm.get("sigma", 1.0), dm.get("amplitude", 1.0)
    return gaussian(s, a), (s, a)


def _l2(values, cell: float) -> float:
    return float(math.sqrt(cell * np.sum(np.abs(values) ** 2)))


def lattice_solution(cfg: ExperimentConfig, spec: LatticeSpec, T: float, tau: float | None = None) -> GridFunction:
    """``w(T)`` from ``w0 = eta_R d_h u0`` on the finite lattice."""
    u0, _ = _datum_u0(cfg)
    w0 = localize(discretize(u0, spec), LocalizationKernel(spec.R))
    sig = cfg.sigma if cfg.nonlinear else 0.0
    return nls_solve(w0, SolverConfig(tau=tau or cfg.tau, T=T, sigma=sig)).final


def reference_solution(cfg: ExperimentConfig, ref: ContinuumGrid, quad: ContinuumGrid, T: float, tau=None) -> GridFunction:
    u0, (s, a) = _datum_u0(cfg)
    if not cfg.nonlinear:
        return GridFunction(quad, free_gaussian(s, a, T)(*quad.mesh()))
    u = continuum_solve(u0, T, ref, tau_ref=tau or cfg.tau, sigma=cfg.sigma)
    return fourier_resample(u, quad)


def convergence_point(cfg: ExperimentConfig, spec: LatticeSpec, T: float, uq: GridFunction, quad: ContinuumGrid):
    w = lattice_solution(cfg, spec, T)
    lw = resample_to_continuum(w, quad, cfg.interp)
    err = _l2(uq.values - lw.values, quad.cell_volume)
    return w, err


def decomposition(cfg: ExperimentConfig, spec: LatticeSpec, T: float, w: GridFunction) -> dict:
    """Tail and localized parts of the error split with ``eta_{R~}`` on ``hZ^d``.

    ``v`` solves the lattice equation on a periodic box from the undamped
    datum ``d_h u0``.  The box is four times the finite lattice, enlarged to a
    side of at least ``16 pi`` so that the tail-mass monitor stays below 1e-8
    for small ``R``.
    """
    u0, _ = _datum_u0(cfg)
    lat = PeriodicLattice.around(spec, max(4, math.ceil(8 / spec.R)))
    v0 = discretize(u0, lat)
    sig = cfg.sigma if cfg.nonlinear else 0.0
    traj = nls_solve(v0, SolverConfig(tau=cfg.tau, T=T, sigma=sig))
    v = traj.final
    Ew = extend(w, lat)
    eta = LocalizationKernel(reduced_radius(spec.R)).on(lat)
    cell = lat.h**lat.d
    tail = _l2((1 - eta) * v.values, cell) + _l2((1 - eta) * Ew.values, cell)
    local = _l2(eta * (v.values - Ew.values), cell)
    return {"tail": tail, "localized": local, "box_tail_mass": max(traj.diagnostics.get("tail_mass", [0.0]))}


def run_converge(cfg: ExperimentConfig, threads: int = 1) -> ExperimentReport:
    rep = ExperimentReport(
        "converge",
        ["d", "alpha", "T", "K", "R", "h", "error", "compensated", "tail", "localized", "box_tail_mass"],
    )
    alpha = cfg.alpha[0]
    specs = cfg.specs(alpha)
    ref, quad = _grids(cfg, max(specs, key=lambda s: s.half_side))
    gamma = min(alpha, 0.5)
    for T in cfg.T:
        with _timed(rep, "reference"):
            uq = reference_solution(cfg, ref, quad, T)

        def point(spec):
            w, err = convergence_point(cfg, spec, T, uq, quad)
            row = dict(d=cfg.d, alpha=alpha, T=T, K=spec.K, R=spec.R, h=spec.h, error=err,
                       compensated=err * spec.h ** (-gamma) if err > 0 else 0.0)
            if cfg.diagnostics:
                row.update(decomposition(cfg, spec, T, w))
            return row

        with _timed(rep, "lattice"):
            rows = _map(point, specs, threads)
        rep.records.extend(rows)
        errs = [r["error"] for r in rows]
        hs = [r["h"] for r in rows]
        key = f"T={T:g}"
        if all(e > 0 for e in errs) and len(rows) >= 2:
            slope = fit_slope(hs, errs)[0]
            rep.summary.setdefault("slopes", {})[key] = slope
            if cfg.d <= 2 and len(rows) >= 3:
                rep.verdict(f"slope {key}", slope >= gamma - 0.1)
        rep.verdict(f"finite {key}", all(math.isfinite(e) for e in errs))
        rep.plot.append((f"{key}: h vs error", hs, errs))

        if cfg.tau_gate and cfg.nonlinear and max(errs) > 0:
            with _timed(rep, "tau_gate"):
                fine = specs[-1]
                w1 = lattice_solution(cfg, fine, T)
                w2 = lattice_solution(cfg, fine, T, cfg.tau / 2)
                lat_split = _l2(w1.values - w2.values, fine.h**fine.d)
                u2 = reference_solution(cfg, ref, quad, T, cfg.tau / 2)
                ref_split = _l2(uq.values - u2.values, quad.cell_volume)
            bound = 0.1 * min(errs)
            rep.summary.setdefault("tau_gate", {})[key] = {
                "lattice_splitting": lat_split, "reference_splitting": ref_split, "bound": bound,
            }
            ok = lat_split < bound and ref_split < bound
            rep.verdict(f"tau_gate {key}", ok)
            if not ok:
                log.error("splitting error is not below the h-error; reduce tau (now %g)", cfg.tau)
    return rep


# -- small amplitude ----------------------------------------------------------------


def run_small_amplitude(cfg: ExperimentConfig, threads: int = 1) -> ExperimentReport:
    rep = ExperimentReport(
        "small-amplitude",
        ["d", "alpha", "T", "K", "R", "h", "bridge_residual", "error", "error_scaled",
         "factor_measured", "factor_h_half_d", "factor_change_of_variables", "compensated"],
    )
    alpha = cfg.alpha[0]
    specs = cfg.specs(alpha)
    ref, quad = _grids(cfg, max(specs, key=lambda s: s.half_side))
    sig = cfg.sigma if cfg.nonlinear else 0.0
    gamma = min(alpha, 0.5)
    T = cfg.T[0]
    uq = reference_solution(cfg, ref, quad, T)

    def point(spec):
        h, d = spec.h, spec.d
        u0, _ = _datum_u0(cfg)
        w0 = localize(discretize(u0, spec), LocalizationKernel(spec.R))
        traj = nls_solve(w0, SolverConfig(tau=cfg.tau, T=T, sigma=sig))
        scaled = small_amplitude_rescale(traj, "to_unit").final
        W0 = small_amplitude_rescale(type(traj)(np.array([0.0]), [w0]), "to_unit").final
        direct = nls_solve(W0, SolverConfig(tau=cfg.tau / h**2, T=T / h**2, sigma=sig)).final
        bridge = _l2(scaled.values - direct.values, 1.0) / max(_l2(direct.values, 1.0), 1e-300)
        # error in both variables on the quadrature nodes
        lw = resample_to_continuum(traj.final, quad, cfg.interp)
        diff = uq.values - lw.values
        err = _l2(diff, quad.cell_volume)
        err_scaled = _l2(h * diff, (quad.h_ref / h) ** d)
        factor = err_scaled / err if err > 0 else float("nan")
        return dict(d=d, alpha=alpha, T=T, K=spec.K, R=spec.R, h=h, bridge_residual=bridge, error=err,
                    error_scaled=err_scaled, factor_measured=factor, factor_h_half_d=h ** (d / 2),
                    factor_change_of_variables=h ** (1 - d / 2),
                    compensated=err_scaled * h ** (-d / 2 - gamma))

    with _timed(rep, "sweep"):
        rep.records = _map(point, specs, threads)
    bridge = max(r["bridge_residual"] for r in rep.records)
    half_d = max(abs(r["factor_measured"] / r["factor_h_half_d"] - 1) for r in rep.records)
    cov = max(abs(r["factor_measured"] / r["factor_change_of_variables"] - 1) for r in rep.records)
    rep.summary.update(bridge_residual=bridge, factor_deviation_h_half_d=half_d, factor_deviation_change_of_variables=cov)
    rep.verdict("bridge", bridge < 1e-9)
    rep.verdict("factor_h^(d/2)", half_d < 1e-9)
    rep.verdict("factor_h^(1-d/2)", cov < 1e-9)
    rep.plot.append(("h vs compensated scaled error", [r["h"] for r in rep.records], [r["compensated"] for r in rep.records]))
    return rep


# -- growth bounds ------------------------------------------------------------------


def _growth_trajectory(cfg: ExperimentConfig, spec: LatticeSpec, Tmax: float):
    f = make_datum(cfg.data[0], spec, cfg.seed)
    sc = SolverConfig(tau=cfg.tau, T=Tmax, sigma=cfg.sigma if cfg.nonlinear else 0.0, snapshot_every=cfg.snapshot_every)
    return nls_solve(f, sc)


def run_linfty(cfg: ExperimentConfig, threads: int = 1) -> ExperimentReport:
    rep = ExperimentReport("linfty", ["d", "alpha", "delta", "q", "K", "R", "T", "norm", "normalized"])
    Ts = sorted(cfg.T)
    if 1.0 not in Ts:
        raise ConfigError("the T sweep must contain T = 1")
    alpha = cfg.alpha[0]
    q = an.linfty_exponent(cfg.d, alpha, cfg.delta)
    specs = cfg.specs(alpha)

    def point(spec):
        traj = _growth_trajectory(cfg, spec, Ts[-1])
        rows = []
        for T in Ts:
            sel = traj.times <= T + 1e-12
            times = traj.times[sel]
            sup = np.array([np.abs(s.values).max() for s, k in zip(traj.states, sel) if k])
            norm = float(np.trapezoid(sup**q, times) ** (1 / q))
            rows.append(dict(d=spec.d, alpha=alpha, delta=cfg.delta, q=q, K=spec.K, R=spec.R, T=T,
                             norm=norm, normalized=norm / an.japanese(T) ** (1 / q)))
        return rows

    with _timed(rep, "sweep"):
        rep.records = [r for rows in _map(point, specs, threads) for r in rows]
    worst = 1.0
    for spec in specs:
        rows = [r for r in rep.records if r["K"] == spec.K]
        base = next(r["normalized"] for r in rows if r["T"] == 1.0)
        if base == 0:
            continue
        for r in rows:
            ratio = r["normalized"] / base
            worst = max(worst, ratio, 1 / ratio if ratio > 0 else math.inf)
        rep.plot.append((f"K={spec.K}: T vs normalized", [r["T"] for r in rows], [r["normalized"] for r in rows]))
    rep.summary.update(q=q, worst_ratio_to_T1=worst)
    rep.verdict("bounded", worst <= 2.0)
    return rep


def affine_envelope(t, y) -> tuple[float, float, float]:
    """Least-squares line ``a + b t`` lifted by the largest residual: ``y <= a + b t`` everywhere.

    Returns ``(a, b, margin)``.
    """
    t, y = np.asarray(t, float), np.asarray(y, float)
    b, a = np.polyfit(t, y, 1)
    margin = float(max(0.0, np.max(y - (a + b * t))))
    return float(a + margin), float(b), margin


def run_weighted_growth(cfg: ExperimentConfig, threads: int = 1) -> ExperimentReport:
    rep = ExperimentReport("weighted-growth", ["d", "alpha", "K", "R", "t", "phi_norm", "log_phi_norm"])
    Ts = sorted(cfg.T)
    alpha = cfg.alpha[0]
    specs = cfg.specs(alpha)

    def point(spec):
        traj = _growth_trajectory(cfg, spec, Ts[-1])
        rows = []
        for t, s in zip(traj.times, traj.states):
            nrm = an.weighted_norm(s, "phi")
            rows.append(dict(d=spec.d, alpha=alpha, K=spec.K, R=spec.R, t=float(t), phi_norm=nrm,
                             log_phi_norm=math.log(nrm) if nrm > 0 else float("-inf")))
        return rows

    with _timed(rep, "sweep"):
        rep.records = [r for rows in _map(point, specs, threads) for r in rows]
    ok_all = True
    fits = {}
    for spec in specs:
        rows = [r for r in rep.records if r["K"] == spec.K]
        if any(r["phi_norm"] == 0 for r in rows):
            fits[f"K={spec.K}"] = "zero datum"
            continue
        t = np.array([r["t"] for r in rows])
        y = np.array([r["log_phi_norm"] for r in rows])
        rates = {}
        for T in Ts:
            sel = t <= T + 1e-12
            a, b, m = affine_envelope(t[sel], y[sel])
            rates[T] = b
        a, b, m = affine_envelope(t, y)
        early = max(rates[T] for T in Ts[:-1]) if len(Ts) > 1 else rates[Ts[0]]
        # the growth rate must not accelerate as the window lengthens
        ok = rates[Ts[-1]] <= 1.05 * early + 1e-12 if early >= 0 else rates[Ts[-1]] <= 1e-12
        ok_all &= ok
        fits[f"K={spec.K}"] = {"intercept": a, "rate": b, "margin": m, "rates": {f"{T:g}": r for T, r in rates.items()}}
        rep.plot.append((f"K={spec.K}: t vs log phi-norm", t, y))
    rep.summary["fits"] = fits
    rep.verdict("affine_bound", ok_all)
    return rep


# -- plain solve ---------------------------------------------------------------------


def run_solve(cfg: ExperimentConfig, threads: int = 1) -> ExperimentReport:
    rep = ExperimentReport("solve", ["K", "R", "t", "mass", "energy", "mass_drift", "energy_drift"])
    spec = cfg.specs()[0]
    T = cfg.T[0]
    traj = _growth_trajectory(cfg, spec, T)
    m0, e0 = an.mass(traj.states[0]), an.energy(traj.states[0], cfg.sigma)
    for t, s in zip(traj.times, traj.states):
        m, e = an.mass(s), an.energy(s, cfg.sigma)
        rep.records.append(dict(K=spec.K, R=spec.R, t=float(t), mass=m, energy=e, mass_drift=abs(m - m0), energy_drift=abs(e - e0)))
    drift = max(r["mass_drift"] for r in rep.records) / max(m0, 1e-300)
    rep.summary.update(relative_mass_drift=drift, max_energy_drift=max(r["energy_drift"] for r in rep.records))
    rep.artifacts["trajectory"] = traj
    rep.verdict("mass", drift < 1e-10)
    rep.plot.append(("t vs energy", [r["t"] for r in rep.records], [r["energy"] for r in rep.records]))
    return rep


EXPERIMENTS: dict[str, Callable[[ExperimentConfig, int], ExperimentReport]] = {
    "spectral-check": run_spectral_check,
    "commutator": run_commutator,
    "dispersive": run_dispersive,
    "strichartz": run_strichartz,
    "linfty": run_linfty,
    "weighted-growth": run_weighted_growth,
    "converge": run_converge,
    "small-amplitude": run_small_amplitude,
    "solve": run_solve,
}


def run(cfg: ExperimentConfig, threads: int = 1) -> ExperimentReport:
    t0 = time.perf_counter()
    rep = EXPERIMENTS[cfg.experiment](cfg, threads)
    rep.timings["total"] = time.perf_counter() - t0
    return rep
