"""Synthetic functional data with locally varying smoothness, and a benchmark.

Curves are ``Y_i(t) = mu(t) + xi_i1 phi_1(t) + xi_i2 phi_2(t) + eps``, where
the mean and both components vanish on ``[0, 1/2]`` and follow
``t^(-3/2) sin(w pi t^(1/4))`` on ``(1/2, 1]`` (``w = 1`` for the mean,
``w = 4k`` for component ``k``). Scores have variances 4 and 1.
"""

import csv
import io
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import quad

from .data import FunctionalDataset
from .exceptions import DataValidationError
from .fpca import FpcaConfig, fit_afpca, truncate_pve

SCORE_VARIANCES = (4.0, 1.0)
FREQUENCIES = {"mean": 1.0, "phi1": 4.0, "phi2": 8.0}


def _raw(t, w: float) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    m = t > 0.5
    out[m] = t[m] ** -1.5 * np.sin(w * np.pi * t[m] ** 0.25)
    return out


def raw_integral(w: float) -> float:
    """``int_{1/2}^1 t^(-3/2) sin(w pi t^(1/4)) dt``."""
    return quad(lambda s: s**-1.5 * np.sin(w * np.pi * s**0.25), 0.5, 1.0, epsabs=1e-13, epsrel=1e-13)[0]


def _inner(f: Callable, g: Callable) -> float:
    return quad(lambda s: f(np.array([s]))[0] * g(np.array([s]))[0], 0.5, 1.0, epsabs=1e-13, epsrel=1e-13, limit=200)[0]


@dataclass(frozen=True)
class TruthSpec:
    """True mean and components as callables on ``[0, 1]``.

    With ``paper_constants=False`` (default) each function is scaled to unit
    L2 norm and ``phi2`` is made orthogonal to ``phi1``; the resulting
    ``phi2 = a * raw2 - b * phi1``. With ``paper_constants=True`` each raw
    function is multiplied by its own integral and no orthogonalization is
    done.
    """

    c_mean: float
    c_phi1: float
    c_phi2: float
    gs_coef: float
    paper_constants: bool = False
    score_variances: Tuple[float, float] = SCORE_VARIANCES

    def mean(self, t) -> np.ndarray:
        return self.c_mean * _raw(t, FREQUENCIES["mean"])

    def phi1(self, t) -> np.ndarray:
        return self.c_phi1 * _raw(t, FREQUENCIES["phi1"])

    def phi2(self, t) -> np.ndarray:
        return self.c_phi2 * _raw(t, FREQUENCIES["phi2"]) - self.gs_coef * self.phi1(t)

    def fpcs(self, t) -> np.ndarray:
        return np.column_stack([self.phi1(t), self.phi2(t)])


def true_functions(paper_constants: bool = False) -> TruthSpec:
    if paper_constants:
        return TruthSpec(
            c_mean=raw_integral(FREQUENCIES["mean"]),
            c_phi1=raw_integral(FREQUENCIES["phi1"]),
            c_phi2=raw_integral(FREQUENCIES["phi2"]),
            gs_coef=0.0,
            paper_constants=True,
        )

    def unit(w):
        return 1.0 / np.sqrt(_inner(lambda t: _raw(t, w), lambda t: _raw(t, w)))

    c_mean, c1, c2 = unit(FREQUENCIES["mean"]), unit(FREQUENCIES["phi1"]), unit(FREQUENCIES["phi2"])
    phi1 = lambda t: c1 * _raw(t, FREQUENCIES["phi1"])  # noqa: E731
    raw2 = lambda t: c2 * _raw(t, FREQUENCIES["phi2"])  # noqa: E731
    proj = _inner(phi1, raw2)
    if abs(proj) <= 1e-8:
        return TruthSpec(c_mean, c1, c2, 0.0)
    # Gram-Schmidt, then rescale the residual to unit norm
    resid_norm = np.sqrt(1.0 - proj**2)
    return TruthSpec(c_mean, c1, c2 / resid_norm, proj / resid_norm)


@dataclass(eq=False)
class SimulatedData:
    dataset: FunctionalDataset
    grid: np.ndarray
    scores: np.ndarray
    noiseless: np.ndarray
    truth: TruthSpec


def generate_dataset(
    I: int,
    sigma2: float,
    seed=0,
    grid_size: int = 100,
    truth: Optional[TruthSpec] = None,
) -> SimulatedData:
    """Draw ``I`` curves on an equally spaced grid over ``[0, 1]``.

    ``seed`` may be an int or anything accepted by
    :func:`numpy.random.default_rng`.
    """
    if I < 2:
        raise DataValidationError("need at least two subjects")
    if not sigma2 > 0:
        raise DataValidationError("sigma2 must be positive")
    if grid_size < 2:
        raise DataValidationError("grid_size must be at least 2")
    truth = truth or true_functions()
    rng = np.random.default_rng(seed)
    grid = np.linspace(0.0, 1.0, grid_size)
    sd = np.sqrt(np.asarray(truth.score_variances))
    scores = rng.standard_normal((I, 2)) * sd
    noiseless = truth.mean(grid)[None, :] + scores @ truth.fpcs(grid).T
    Y = noiseless + np.sqrt(sigma2) * rng.standard_normal(noiseless.shape)
    data = FunctionalDataset.from_matrix(grid, Y, domain=(0.0, 1.0))
    return SimulatedData(data, grid, scores, noiseless, truth)


def ise(estimate, truth, grid, sign_invariant: bool = False) -> float:
    """Trapezoid integral of the squared difference on ``grid``.

    With ``sign_invariant=True`` the smaller of the errors for ``estimate``
    and ``-estimate`` is returned (components are identified up to sign).
    """
    estimate = np.asarray(estimate, dtype=float)
    truth = np.asarray(truth, dtype=float)
    grid = np.asarray(grid, dtype=float)
    if not (estimate.shape == truth.shape == grid.shape):
        raise DataValidationError("estimate, truth and grid must have equal length")
    val = float(np.trapezoid((estimate - truth) ** 2, grid))
    if sign_invariant:
        val = min(val, float(np.trapezoid((estimate + truth) ** 2, grid)))
    return val


METHODS = ("adaptive", "baseline")


@dataclass
class StudyConfig:
    I_values: Sequence[int] = (25, 50, 100)
    sigma2_values: Sequence[float] = (0.1, 0.2)
    replicates: int = 20
    grid_size: int = 100
    P: int = 40
    K_init: int = 15
    pve: float = 0.99
    max_iter: int = 200
    tol: float = 1e-6
    base_seed: int = 0
    methods: Sequence[str] = METHODS
    paper_constants: bool = False
    n_jobs: int = 1
    keep_fits: bool = False

    def __post_init__(self):
        if self.replicates < 1:
            raise ValueError("replicates must be at least 1")
        if self.grid_size < 2:
            raise ValueError("grid_size must be at least 2")
        self.I_values = tuple(int(v) for v in self.I_values)
        self.sigma2_values = tuple(float(v) for v in self.sigma2_values)
        self.methods = tuple(self.methods)


REPORT_FIELDS = (
    "method",
    "I",
    "sigma2",
    "replicate",
    "status",
    "K_selected",
    "ise_mean",
    "ise_fpc1",
    "ise_fpc2",
    "mise",
    "mise_noisy",
    "sigma2_hat",
    "n_iter",
    "converged",
)


def replicate_seed(base_seed: int, I: int, sigma2: float, replicate: int) -> np.random.SeedSequence:
    """Seed derived from the cell values, so a cell's data do not depend on which other cells run."""
    return np.random.SeedSequence([int(base_seed), int(I), int(round(sigma2 * 1e6)), int(replicate)])


def evaluate_fit(sim: SimulatedData, full_model, pve: float) -> Dict[str, float]:
    """Accuracy metrics of one fit against the generating truth.

    Component errors use the full ordered fit (so a second component is
    scored even if truncation drops it); reconstructions use the truncated
    model.
    """
    grid = sim.grid
    truth = sim.truth
    model = truncate_pve(full_model, pve)
    fpcs = full_model.fpcs(grid)
    true_fpcs = truth.fpcs(grid)
    curves = model.curves(grid)
    Y = sim.dataset.as_matrix()
    out = {
        "K_selected": model.K,
        "ise_mean": ise(model.mean(grid), truth.mean(grid), grid),
        "ise_fpc1": ise(fpcs[:, 0], true_fpcs[:, 0], grid, sign_invariant=True) if fpcs.shape[1] > 0 else np.nan,
        "ise_fpc2": ise(fpcs[:, 1], true_fpcs[:, 1], grid, sign_invariant=True) if fpcs.shape[1] > 1 else np.nan,
        "mise": float(np.mean([ise(c, x, grid) for c, x in zip(curves, sim.noiseless)])),
        "mise_noisy": float(np.mean([ise(c, y, grid) for c, y in zip(curves, Y)])),
        "sigma2_hat": model.sigma2,
        "n_iter": model.n_iter,
        "converged": bool(model.converged),
    }
    return out


def _run_replicate(args):
    config, I, sigma2, rep = args
    truth = true_functions(config.paper_constants)
    sim = generate_dataset(I, sigma2, replicate_seed(config.base_seed, I, sigma2, rep), config.grid_size, truth)
    rows, timings, fits = [], [], {}
    for method in config.methods:
        row = {"method": method, "I": I, "sigma2": sigma2, "replicate": rep}
        fcfg = FpcaConfig(
            P=config.P,
            K_init=config.K_init,
            pve=config.pve,
            max_iter=config.max_iter,
            tol=config.tol,
            mode=method,
            seed=rep,
        )
        start = time.perf_counter()
        try:
            full = fit_afpca(sim.dataset, fcfg, truncate=False)
            row.update(evaluate_fit(sim, full, config.pve))
            row["status"] = "ok"
            if config.keep_fits:
                fits[method] = full
        except Exception as exc:  # a failed replicate is recorded, never fatal
            row["status"] = f"failed:{type(exc).__name__}"
        timings.append({"method": method, "I": I, "sigma2": sigma2, "replicate": rep,
                        "seconds": time.perf_counter() - start})
        rows.append(row)
    kept = {"I": I, "sigma2": sigma2, "replicate": rep, "sim": sim, "fits": fits} if config.keep_fits else None
    return rows, timings, kept


@dataclass
class MetricsReport:
    """Per-replicate metric rows plus wall-clock timings.

    Timings are kept apart from ``rows`` so the CSV report is reproducible
    byte for byte.
    """

    config: StudyConfig
    rows: List[dict]
    timings: List[dict] = field(default_factory=list)
    fits: List = field(default_factory=list)

    def select(self, method=None, I=None, sigma2=None, ok_only=True) -> List[dict]:
        out = []
        for r in self.rows:
            if method is not None and r["method"] != method:
                continue
            if I is not None and r["I"] != I:
                continue
            if sigma2 is not None and not np.isclose(r["sigma2"], sigma2):
                continue
            if ok_only and r.get("status") != "ok":
                continue
            out.append(r)
        return out

    def values(self, key, **kw) -> np.ndarray:
        return np.array([r[key] for r in self.select(**kw)], dtype=float)

    def summary(self) -> List[dict]:
        """Median and quartiles of each metric per method and cell."""
        out = []
        metrics = ("K_selected", "ise_mean", "ise_fpc1", "ise_fpc2", "mise", "mise_noisy")
        for method in self.config.methods:
            for I in self.config.I_values:
                for s2 in self.config.sigma2_values:
                    entry = {"method": method, "I": I, "sigma2": s2,
                             "n_ok": len(self.select(method=method, I=I, sigma2=s2)),
                             "n_failed": len(self.select(method=method, I=I, sigma2=s2, ok_only=False))
                             - len(self.select(method=method, I=I, sigma2=s2))}
                    for m in metrics:
                        v = self.values(m, method=method, I=I, sigma2=s2)
                        v = v[np.isfinite(v)]
                        if v.size:
                            q1, med, q3 = np.percentile(v, [25, 50, 75])
                        else:
                            q1 = med = q3 = np.nan
                        entry[m] = {"q1": q1, "median": med, "q3": q3}
                    out.append(entry)
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(REPORT_FIELDS)
        for r in self.rows:
            writer.writerow([format_value(r.get(k, np.nan)) for k in REPORT_FIELDS])
        return buf.getvalue()

    def summary_json(self) -> str:
        payload = {
            "config": {k: v for k, v in asdict(self.config).items() if k != "keep_fits"},
            "summary": self.summary(),
            "timings": self.timings,
        }
        return json.dumps(sanitize(payload), indent=2)


def format_value(v) -> str:
    """17-significant-digit text for floats, ``NA`` for non-finite values."""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g") if np.isfinite(v) else "NA"
    return str(v)


def sanitize(obj):
    """Make a payload JSON-safe: arrays to lists, non-finite floats to ``"NA"``."""
    if isinstance(obj, dict):
        return {str(k): sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [sanitize(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return sanitize(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if np.isfinite(obj) else "NA"
    return obj


def run_study(config: Optional[StudyConfig] = None) -> MetricsReport:
    """Fit every method on every (I, sigma2, replicate) dataset.

    Both methods in a replicate see the same data. Results do not depend on
    ``n_jobs``: rows are collected in a fixed order.
    """
    config = config or StudyConfig()
    jobs = [
        (config, I, s2, rep)
        for I in config.I_values
        for s2 in config.sigma2_values
        for rep in range(config.replicates)
    ]
    if config.n_jobs > 1:
        with ProcessPoolExecutor(max_workers=config.n_jobs) as pool:
            results = list(pool.map(_run_replicate, jobs))
    else:
        results = [_run_replicate(j) for j in jobs]
    rows, timings, fits = [], [], []
    for r, t, f in results:
        rows.extend(r)
        timings.extend(t)
        if f is not None:
            fits.append(f)
    return MetricsReport(config, rows, timings, fits)
