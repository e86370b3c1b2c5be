"""Bivariate lead-lag path simulation on uniform time grids.

Two synthesis routes produce the same kind of object (a PathBatch of
log-price pairs):

* simulate_hry: explicit construction from four independent Gaussian
  increment streams. The second component reuses the first component's
  driving stream shifted by the lag, so the cross-covariance of the
  increments is exact for piecewise-constant correlation kernels aligned
  to the grid.
* simulate_spectral: circulant-embedding synthesis of the stationary
  increment sequence whose cross-covariance is the exact integral of the
  cross-spectral density. Marginals are exactly Brownian.

Both are reproducible bit-for-bit from (model, grid, n_paths, seed) and
independent of chunking and worker count.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .kernels import CorrelationKernel, StepFunction
from .rng import (
    STREAM_DRIFT,
    STREAM_W0,
    STREAM_W1,
    STREAM_W2,
    STREAM_W3,
    path_generators,
)
from .spectral import (
    CrossSpectralDensity,
    default_validation_grid,
    increment_cross_cov,
    validate_csd,
)

HRY = "hry"
SPECTRAL = "spectral"

DRIFT_ZERO = "zero"
DRIFT_LINEAR = "linear"
DRIFT_BROWNIAN = "brownian"

# Grid times within this tolerance (times max(1, scale)) count as on-grid.
GRID_TOL = 1e-9
# Negative embedding eigenvalues below this fraction of the max are clipped.
EMBED_CLIP_FRACTION = 1e-10
# Refuse to materialize batches larger than this many bytes in one array.
MAX_BATCH_BYTES = 3_200_000_000


class GridMismatchError(ValueError):
    """Lag or requested time is not commensurate with the grid."""


class EmbeddingError(RuntimeError):
    """Circulant embedding produced a spectral matrix that is not PSD."""

    def __init__(self, min_eigenvalue: float, max_eigenvalue: float):
        self.min_eigenvalue = float(min_eigenvalue)
        self.max_eigenvalue = float(max_eigenvalue)
        super().__init__(
            "circulant embedding is not positive semidefinite: "
            f"min eigenvalue {min_eigenvalue:.6e} "
            f"(max eigenvalue {max_eigenvalue:.6e}, "
            f"clip threshold {EMBED_CLIP_FRACTION:.1e} * max)"
        )


class PriceOverflowError(ValueError):
    """Exponentiating a log-price overflowed at a specific node."""


@dataclass(frozen=True)
class Grid:
    """Uniform time grid: n_steps steps of size dt starting at t_start."""

    dt: float
    n_steps: int
    t_start: float = 0.0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise ValueError("grid step must be positive and finite")
        if not (isinstance(self.n_steps, (int, np.integer)) and self.n_steps >= 1):
            raise ValueError("n_steps must be an integer >= 1")
        if not (math.isfinite(self.t_start) and self.t_start >= 0):
            raise ValueError("t_start must be finite and >= 0")
        object.__setattr__(self, "dt", float(self.dt))
        object.__setattr__(self, "n_steps", int(self.n_steps))
        object.__setattr__(self, "t_start", float(self.t_start))

    @property
    def times(self) -> np.ndarray:
        return self.t_start + self.dt * np.arange(self.n_steps + 1)

    @property
    def t_end(self) -> float:
        return self.t_start + self.dt * self.n_steps

    def index_of(self, t: float) -> int:
        """Index of grid point t; rejects off-grid times."""
        i = int(round((t - self.t_start) / self.dt))
        if i < 0 or i > self.n_steps:
            raise ValueError(f"time {t} outside grid [{self.t_start}, {self.t_end}]")
        if abs(self.t_start + i * self.dt - t) > GRID_TOL * max(1.0, abs(t)):
            raise ValueError(f"time {t} is not a grid point (step {self.dt})")
        return i

    def to_dict(self) -> dict:
        return {"dt": self.dt, "n_steps": self.n_steps, "t_start": self.t_start}

    @staticmethod
    def from_dict(d: dict) -> "Grid":
        extra = set(d) - {"dt", "n_steps", "t_start"}
        if extra:
            raise ValueError(f"unknown grid keys {sorted(extra)}")
        return Grid(float(d["dt"]), int(d["n_steps"]), float(d.get("t_start", 0.0)))


@dataclass(frozen=True)
class DriftSpec:
    """Drift component added to the log prices.

    kind "zero": no drift. kind "linear": A_t = mu * (t - t_start).
    kind "brownian": an independent bivariate Brownian drift with
    volatilities (vol1, vol2) and instantaneous correlation corr, driven
    by the dedicated drift RNG substream so that drift and the price
    noise stay independent by construction.
    """

    kind: str = DRIFT_ZERO
    mu1: float = 0.0
    mu2: float = 0.0
    vol1: float = 0.0
    vol2: float = 0.0
    corr: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in (DRIFT_ZERO, DRIFT_LINEAR, DRIFT_BROWNIAN):
            raise ValueError(f"unknown drift kind {self.kind!r}")
        for name in ("mu1", "mu2", "vol1", "vol2", "corr"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise ValueError(f"drift parameter {name} must be finite")
            object.__setattr__(self, name, v)
        if self.kind == DRIFT_BROWNIAN:
            if self.vol1 < 0 or self.vol2 < 0:
                raise ValueError("drift volatilities must be >= 0")
            if abs(self.corr) > 1:
                raise ValueError("drift correlation must lie in [-1, 1]")

    @staticmethod
    def zero() -> "DriftSpec":
        return DriftSpec()

    @staticmethod
    def linear(mu1: float, mu2: float) -> "DriftSpec":
        return DriftSpec(kind=DRIFT_LINEAR, mu1=mu1, mu2=mu2)

    @staticmethod
    def brownian(vol1: float, vol2: float, corr: float = 0.0) -> "DriftSpec":
        return DriftSpec(kind=DRIFT_BROWNIAN, vol1=vol1, vol2=vol2, corr=corr)

    @property
    def uses_rng(self) -> bool:
        return self.kind == DRIFT_BROWNIAN and (self.vol1 > 0 or self.vol2 > 0)

    def to_dict(self) -> dict:
        if self.kind == DRIFT_ZERO:
            return {"kind": self.kind}
        if self.kind == DRIFT_LINEAR:
            return {"kind": self.kind, "mu1": self.mu1, "mu2": self.mu2}
        return {
            "kind": self.kind,
            "vol1": self.vol1,
            "vol2": self.vol2,
            "corr": self.corr,
        }

    @staticmethod
    def from_dict(d: dict) -> "DriftSpec":
        kind = d.get("kind", DRIFT_ZERO)
        allowed = {
            DRIFT_ZERO: {"kind"},
            DRIFT_LINEAR: {"kind", "mu1", "mu2"},
            DRIFT_BROWNIAN: {"kind", "vol1", "vol2", "corr"},
        }
        if kind not in allowed:
            raise ValueError(f"unknown drift kind {kind!r}")
        extra = set(d) - allowed[kind]
        if extra:
            raise ValueError(f"unknown drift keys {sorted(extra)}")
        return DriftSpec(**{k: v for k, v in d.items()})


def _coerce_sigma(sigma) -> float | StepFunction:
    if isinstance(sigma, StepFunction):
        return sigma
    s = float(sigma)
    if not (math.isfinite(s) and s > 0):
        raise ValueError("volatility must be positive and finite")
    return s


def _sigma_cells(sigma: float | StepFunction, tcells: np.ndarray) -> np.ndarray:
    if isinstance(sigma, StepFunction):
        return np.asarray(sigma(tcells), dtype=float)
    return np.full(tcells.size, float(sigma))


def _sigma_dict(sigma: float | StepFunction):
    return sigma.to_dict() if isinstance(sigma, StepFunction) else float(sigma)


def _sigma_from_dict(v) -> float | StepFunction:
    if isinstance(v, dict):
        return StepFunction.from_dict(v)
    return _coerce_sigma(v)


@dataclass(frozen=True)
class LagModelSpec:
    """Bivariate lead-lag log-price model.

    form "hry" uses a lag theta and a correlation kernel rho; form
    "spectral" uses a cross-spectral density f. Both share per-component
    volatilities (positive constants or step functions of time) and a
    drift specification.
    """

    form: str
    theta: float = 0.0
    rho: CorrelationKernel | None = None
    f: CrossSpectralDensity | None = None
    sigma1: float | StepFunction = 1.0
    sigma2: float | StepFunction = 1.0
    drift: DriftSpec = DriftSpec()

    def __post_init__(self) -> None:
        if self.form not in (HRY, SPECTRAL):
            raise ValueError(f"unknown model form {self.form!r}")
        theta = float(self.theta)
        if not (math.isfinite(theta) and theta >= 0):
            raise ValueError("lag theta must be finite and >= 0")
        object.__setattr__(self, "theta", theta)
        if self.form == HRY:
            if not isinstance(self.rho, CorrelationKernel):
                raise ValueError("hry form requires a correlation kernel rho")
            if self.f is not None:
                raise ValueError("hry form does not take a spectral density")
        else:
            if not isinstance(self.f, CrossSpectralDensity):
                raise ValueError("spectral form requires a cross-spectral density f")
            if self.rho is not None:
                raise ValueError("spectral form does not take a correlation kernel")
            if theta != 0.0:
                raise ValueError("spectral form carries its lag inside f; theta must be 0")
        object.__setattr__(self, "sigma1", _coerce_sigma(self.sigma1))
        object.__setattr__(self, "sigma2", _coerce_sigma(self.sigma2))
        if not isinstance(self.drift, DriftSpec):
            raise ValueError("drift must be a DriftSpec")

    @staticmethod
    def hry(theta: float, rho: CorrelationKernel, sigma1=1.0, sigma2=1.0,
            drift: DriftSpec | None = None) -> "LagModelSpec":
        return LagModelSpec(form=HRY, theta=theta, rho=rho, sigma1=sigma1,
                            sigma2=sigma2, drift=drift or DriftSpec())

    @staticmethod
    def spectral(f: CrossSpectralDensity, sigma1=1.0, sigma2=1.0,
                 drift: DriftSpec | None = None) -> "LagModelSpec":
        return LagModelSpec(form=SPECTRAL, f=f, sigma1=sigma1, sigma2=sigma2,
                            drift=drift or DriftSpec())

    def to_dict(self) -> dict:
        d = {
            "form": self.form,
            "sigma1": _sigma_dict(self.sigma1),
            "sigma2": _sigma_dict(self.sigma2),
            "drift": self.drift.to_dict(),
        }
        if self.form == HRY:
            d["theta"] = self.theta
            d["rho"] = self.rho.to_dict()
        else:
            d["f"] = self.f.to_dict()
        return d

    @staticmethod
    def from_dict(d: dict) -> "LagModelSpec":
        form = d.get("form")
        if form == HRY:
            allowed = {"form", "theta", "rho", "sigma1", "sigma2", "drift"}
        elif form == SPECTRAL:
            allowed = {"form", "f", "sigma1", "sigma2", "drift"}
        else:
            raise ValueError(f"unknown model form {form!r}")
        extra = set(d) - allowed
        if extra:
            raise ValueError(f"unknown model keys {sorted(extra)}")
        kwargs = {
            "form": form,
            "sigma1": _sigma_from_dict(d.get("sigma1", 1.0)),
            "sigma2": _sigma_from_dict(d.get("sigma2", 1.0)),
            "drift": DriftSpec.from_dict(d.get("drift", {"kind": DRIFT_ZERO})),
        }
        if form == HRY:
            kwargs["theta"] = float(d.get("theta", 0.0))
            kwargs["rho"] = CorrelationKernel.from_dict(d["rho"])
        else:
            kwargs["f"] = CrossSpectralDensity.from_dict(d["f"])
        return LagModelSpec(**kwargs)

    def model_hash(self) -> str:
        """Stable 16-hex digest of the model parameters."""
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class PathBatch:
    """Simulated paths: values[p, i, c] is component c of path p at node i.

    values holds log prices; prices (set by to_prices) holds their
    exponentials. path_offset records the absolute index of the first
    path so that chunked runs can be stitched together reproducibly.
    """

    grid: Grid
    n_paths: int
    values: np.ndarray
    seed: int
    model_hash: str
    path_offset: int = 0
    prices: np.ndarray | None = None

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        expected = (self.n_paths, self.grid.n_steps + 1, 2)
        if v.shape != expected:
            raise ValueError(f"values shape {v.shape} != {expected}")
        if not np.all(np.isfinite(v)):
            raise ValueError("path values must be finite")
        object.__setattr__(self, "values", v)
        v.flags.writeable = False
        if self.prices is not None and self.prices.shape != expected:
            raise ValueError("prices shape mismatch")

    @property
    def times(self) -> np.ndarray:
        return self.grid.times


# ---------------------------------------------------------------------------
# HRY synthesis
# ---------------------------------------------------------------------------


class _HryContext:
    """Precomputed per-cell coefficients shared by all paths."""

    def __init__(self, model: LagModelSpec, grid: Grid):
        if grid.t_start != 0.0:
            raise ValueError("simulation grids must start at t=0")
        n, dt = grid.n_steps, grid.dt
        theta = model.theta
        k0 = int(round(theta / dt))
        if abs(k0 * dt - theta) > GRID_TOL * max(theta, dt):
            raise GridMismatchError(
                f"lag {theta} is not an integer multiple of the grid step {dt}"
            )
        self.n, self.dt, self.k0 = n, dt, k0
        sqdt = math.sqrt(dt)
        tcells = grid.times[:-1]
        rho_c = np.atleast_1d(np.asarray(model.rho(tcells), dtype=float))
        self.a1 = np.sign(rho_c) * np.sqrt(np.abs(rho_c)) * sqdt
        self.b1 = np.sqrt(1.0 - np.abs(rho_c)) * sqdt
        self.sqdt = sqdt
        self.s1 = _sigma_cells(model.sigma1, tcells)
        self.s2 = _sigma_cells(model.sigma2, tcells)
        self.drift = model.drift
        self.m0 = min(k0, n)
        n_lag = n - k0
        self.need = {
            STREAM_W0: self.m0 > 0,
            STREAM_W1: bool(np.any(self.a1 != 0.0)),
            STREAM_W2: bool(np.any(self.b1 != 0.0)),
            STREAM_W3: n_lag > 0 and bool(np.any(self.b1[:n_lag] != 0.0)),
            STREAM_DRIFT: self.drift.uses_rng,
        }
        self.streams = [s for s, used in self.need.items() if used]

    def fill(self, seed: int, lo: int, hi: int) -> np.ndarray:
        """Paths lo..hi-1 (absolute indices) as an (hi-lo, n+1, 2) array."""
        n, k0, m0 = self.n, self.k0, self.m0
        count = hi - lo
        n_lag = max(n - k0, 0)
        x0 = np.empty((count, m0)) if self.need[STREAM_W0] else None
        x1 = np.empty((count, n)) if self.need[STREAM_W1] else None
        x2 = np.empty((count, n)) if self.need[STREAM_W2] else None
        x3 = np.empty((count, n_lag)) if self.need[STREAM_W3] else None
        ed = np.empty((count, n, 2)) if self.need[STREAM_DRIFT] else None
        for j in range(count):
            gens = dict(zip(self.streams, path_generators(seed, lo + j, self.streams)))
            if x0 is not None:
                x0[j] = gens[STREAM_W0].standard_normal(m0)
            if x1 is not None:
                x1[j] = gens[STREAM_W1].standard_normal(n)
            if x2 is not None:
                x2[j] = gens[STREAM_W2].standard_normal(n)
            if x3 is not None:
                x3[j] = gens[STREAM_W3].standard_normal(n_lag)
            if ed is not None:
                ed[j] = gens[STREAM_DRIFT].standard_normal((n, 2))

        db1 = np.zeros((count, n))
        if x1 is not None:
            db1 += self.a1 * x1
        if x2 is not None:
            db1 += self.b1 * x2
        db2 = np.zeros((count, n))
        if x0 is not None:
            db2[:, :m0] = self.sqdt * x0
        if n_lag > 0:
            if x1 is not None:
                db2[:, k0:] += np.abs(self.a1[:n_lag]) * x1[:, :n_lag]
            if x3 is not None:
                db2[:, k0:] += self.b1[:n_lag] * x3

        dx = np.empty((count, n, 2))
        dx[:, :, 0] = self.s1 * db1
        dx[:, :, 1] = self.s2 * db2
        _add_drift_increments(self.drift, self.dt, dx, ed)
        out = np.empty((count, n + 1, 2))
        out[:, 0, :] = 0.0
        np.cumsum(dx, axis=1, out=out[:, 1:, :])
        return out


def _add_drift_increments(drift: DriftSpec, dt: float, dx: np.ndarray,
                          ed: np.ndarray | None) -> None:
    if drift.kind == DRIFT_LINEAR:
        dx[:, :, 0] += drift.mu1 * dt
        dx[:, :, 1] += drift.mu2 * dt
    elif drift.kind == DRIFT_BROWNIAN and ed is not None:
        sq = math.sqrt(dt)
        dx[:, :, 0] += drift.vol1 * sq * ed[:, :, 0]
        c = drift.corr
        dx[:, :, 1] += drift.vol2 * sq * (c * ed[:, :, 0]
                                          + math.sqrt(1.0 - c * c) * ed[:, :, 1])


# ---------------------------------------------------------------------------
# Spectral synthesis (multivariate circulant embedding)
# ---------------------------------------------------------------------------


class _SpectralContext:
    """Embedding factors shared by all paths of one (model, grid) pair."""

    def __init__(self, model: LagModelSpec, grid: Grid):
        if grid.t_start != 0.0:
            raise ValueError("simulation grids must start at t=0")
        check = validate_csd(model.f, default_validation_grid(model.f))
        if not check.passed:
            raise ValueError(
                "cross-spectral density failed validation: "
                f"max |f| = {check.max_abs:.6g}, "
                f"max conjugate-symmetry violation = {check.max_hermite_violation:.3g}"
            )
        n, dt = grid.n_steps, grid.dt
        self.n, self.dt = n, dt
        N = 1 << max(1, (2 * n - 1).bit_length())
        half = N // 2
        # gamma[k] = E[dB1_m dB2_{m+k}] for k = -half..half.
        gamma = {k: increment_cross_cov(model.f, dt, k) for k in range(-half, half + 1)}
        # Circulant block sequence C(k), k = 0..N-1, wrapping C(k) = R(k-N)
        # past the midpoint; R(k)_{12} = gamma(-k), R(k)_{21} = gamma(k).
        r12 = np.empty(N)
        r21 = np.empty(N)
        for k in range(N):
            ku = k if k <= half else k - N
            r12[k] = gamma[-ku]
            r21[k] = gamma[ku]
        mid = 0.5 * (gamma[half] + gamma[-half])
        r12[half] = mid
        r21[half] = mid
        blocks = np.zeros((N, 2, 2))
        blocks[0, 0, 0] = dt
        blocks[0, 1, 1] = dt
        blocks[:, 0, 1] = r12
        blocks[:, 1, 0] = r21
        G = np.fft.fft(blocks, axis=0)
        G = 0.5 * (G + np.conj(np.transpose(G, (0, 2, 1))))
        w, U = np.linalg.eigh(G)
        wmax = float(w.max())
        wmin = float(w.min())
        if wmin < -EMBED_CLIP_FRACTION * max(wmax, 1e-300):
            raise EmbeddingError(wmin, wmax)
        w = np.clip(w, 0.0, None)
        self.L = U * np.sqrt(w)[:, None, :]
        self.N = N
        tcells = grid.times[:-1]
        self.s1 = _sigma_cells(model.sigma1, tcells)
        self.s2 = _sigma_cells(model.sigma2, tcells)
        self.drift = model.drift
        self.streams = [STREAM_W0, STREAM_W1]
        if self.drift.uses_rng:
            self.streams.append(STREAM_DRIFT)

    def fill(self, seed: int, lo: int, hi: int) -> np.ndarray:
        n, N = self.n, self.N
        count = hi - lo
        zr = np.empty((count, N, 2))
        zi = np.empty((count, N, 2))
        ed = np.empty((count, n, 2)) if self.drift.uses_rng else None
        for j in range(count):
            gens = dict(zip(self.streams, path_generators(seed, lo + j, self.streams)))
            zr[j] = gens[STREAM_W0].standard_normal((N, 2))
            zi[j] = gens[STREAM_W1].standard_normal((N, 2))
            if ed is not None:
                ed[j] = gens[STREAM_DRIFT].standard_normal((n, 2))
        xi = zr + 1j * zi
        eta = np.einsum("jab,pjb->pja", self.L, xi)
        y = np.fft.ifft(eta, axis=1) * math.sqrt(N)
        d = y.real[:, :n, :]
        dx = np.empty((count, n, 2))
        dx[:, :, 0] = self.s1 * d[:, :, 0]
        dx[:, :, 1] = self.s2 * d[:, :, 1]
        _add_drift_increments(self.drift, self.dt, dx, ed)
        out = np.empty((count, n + 1, 2))
        out[:, 0, :] = 0.0
        np.cumsum(dx, axis=1, out=out[:, 1:, :])
        return out


# ---------------------------------------------------------------------------
# Drivers
# ---------------------------------------------------------------------------


def _make_context(model: LagModelSpec, grid: Grid):
    return _HryContext(model, grid) if model.form == HRY else _SpectralContext(model, grid)


def _default_chunk(model: LagModelSpec, grid: Grid, n_paths: int) -> int:
    if model.form == SPECTRAL:
        N = 1 << max(1, (2 * grid.n_steps - 1).bit_length())
        target = max(1, int(1_500_000 // N))
    else:
        target = max(1, int(8_000_000 // grid.n_steps))
    return min(n_paths, target)


def iter_path_chunks(model: LagModelSpec, grid: Grid, n_paths: int, seed: int,
                     path_offset: int = 0, chunk_size: int | None = None):
    """Yield (lo, hi, values) chunks without materializing the whole batch.

    lo/hi are absolute path indices; values has shape (hi-lo, n_steps+1, 2).
    The content of each path depends only on (model, grid, seed, absolute
    path index), so any chunking yields identical paths.
    """
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    if path_offset < 0:
        raise ValueError("path_offset must be >= 0")
    ctx = _make_context(model, grid)
    cs = chunk_size if chunk_size is not None else _default_chunk(model, grid, n_paths)
    if cs < 1:
        raise ValueError("chunk_size must be >= 1")
    for lo in range(path_offset, path_offset + n_paths, cs):
        hi = min(lo + cs, path_offset + n_paths)
        yield lo, hi, ctx.fill(seed, lo, hi)


def _simulate(model: LagModelSpec, grid: Grid, n_paths: int, seed: int,
              path_offset: int, chunk_size: int | None, workers: int) -> PathBatch:
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    if path_offset < 0:
        raise ValueError("path_offset must be >= 0")
    if workers < 1:
        raise ValueError("workers must be >= 1")
    nbytes = n_paths * (grid.n_steps + 1) * 2 * 8
    if nbytes > MAX_BATCH_BYTES:
        raise ValueError(
            f"batch of {nbytes} bytes exceeds the in-memory cap; "
            "reduce n_paths or consume iter_path_chunks instead"
        )
    ctx = _make_context(model, grid)
    cs = chunk_size if chunk_size is not None else _default_chunk(model, grid, n_paths)
    if cs < 1:
        raise ValueError("chunk_size must be >= 1")
    values = np.empty((n_paths, grid.n_steps + 1, 2))
    spans = [
        (lo, min(lo + cs, path_offset + n_paths))
        for lo in range(path_offset, path_offset + n_paths, cs)
    ]

    def job(span):
        lo, hi = span
        values[lo - path_offset:hi - path_offset] = ctx.fill(seed, lo, hi)

    if workers > 1 and len(spans) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(job, spans))
    else:
        for span in spans:
            job(span)
    return PathBatch(
        grid=grid,
        n_paths=n_paths,
        values=values,
        seed=seed,
        model_hash=model.model_hash(),
        path_offset=path_offset,
    )


def simulate_hry(model: LagModelSpec, grid: Grid, n_paths: int, seed: int, *,
                 path_offset: int = 0, chunk_size: int | None = None,
                 workers: int = 1) -> PathBatch:
    """Simulate the explicit four-stream realization of the lag model."""
    if model.form != HRY:
        raise ValueError("simulate_hry requires a model with form 'hry'")
    return _simulate(model, grid, n_paths, seed, path_offset, chunk_size, workers)


def simulate_spectral(model: LagModelSpec, grid: Grid, n_paths: int, seed: int, *,
                      path_offset: int = 0, chunk_size: int | None = None,
                      workers: int = 1) -> PathBatch:
    """Simulate via circulant embedding of the increment covariance."""
    if model.form != SPECTRAL:
        raise ValueError("simulate_spectral requires a model with form 'spectral'")
    return _simulate(model, grid, n_paths, seed, path_offset, chunk_size, workers)


def simulate(model: LagModelSpec, grid: Grid, n_paths: int, seed: int,
             **kwargs) -> PathBatch:
    """Dispatch to the simulator matching model.form."""
    if model.form == HRY:
        return simulate_hry(model, grid, n_paths, seed, **kwargs)
    return simulate_spectral(model, grid, n_paths, seed, **kwargs)


# ---------------------------------------------------------------------------
# Derived quantities and export
# ---------------------------------------------------------------------------


def to_prices(batch: PathBatch) -> PathBatch:
    """Componentwise exponential of the log prices, as a new batch."""
    with np.errstate(over="ignore"):
        s = np.exp(batch.values)
    bad = ~np.isfinite(s)
    if np.any(bad):
        p, i, c = np.argwhere(bad)[0]
        raise PriceOverflowError(
            f"price overflow at path {batch.path_offset + int(p)}, "
            f"grid index {int(i)}, component {int(c) + 1} "
            f"(log price {batch.values[p, i, c]:.6g})"
        )
    s.flags.writeable = False
    return dataclasses.replace(batch, prices=s)


def empirical_cross_cov(batch: PathBatch, t: float, s: float,
                        pair: tuple[int, int] = (0, 1)) -> tuple[float, float]:
    """Sample mean and standard error of X^i_t * X^j_s across paths.

    Components are 0-based. For unit volatility and zero drift the log
    prices coincide with the underlying correlated Brownian pair, so this
    estimates their cross-covariance (both components start at 0).
    """
    if tuple(sorted(set(pair) - {0, 1})):
        raise ValueError("pair components must be 0 or 1")
    if len(pair) != 2:
        raise ValueError("pair must have exactly two components")
    i = batch.grid.index_of(t)
    j = batch.grid.index_of(s)
    prods = batch.values[:, i, pair[0]] * batch.values[:, j, pair[1]]
    est = float(np.mean(prods))
    if batch.n_paths < 2:
        return est, float("nan")
    stderr = float(np.std(prods, ddof=1) / math.sqrt(batch.n_paths))
    return est, stderr


def batch_meta(batch: PathBatch) -> dict:
    """Metadata sidecar contents for an exported batch."""
    return {
        "model_hash": batch.model_hash,
        "seed": batch.seed,
        "path_offset": batch.path_offset,
        "n_paths": batch.n_paths,
        "grid": batch.grid.to_dict(),
        "columns": ["path_id", "t", "X1", "X2"]
        + (["S1", "S2"] if batch.prices is not None else []),
    }


def export_csv(batch: PathBatch, csv_path: str, meta_path: str | None = None) -> None:
    """Write one row per (path, node) plus a JSON metadata sidecar.

    Floats are written with repr so the file round-trips exactly and the
    bytes are deterministic for a given batch.
    """
    meta = batch_meta(batch)
    times = batch.times
    with open(csv_path, "w", newline="") as fh:
        fh.write(",".join(meta["columns"]) + "\n")
        for p in range(batch.n_paths):
            pid = batch.path_offset + p
            for i in range(batch.grid.n_steps + 1):
                row = [str(pid), repr(float(times[i])),
                       repr(float(batch.values[p, i, 0])),
                       repr(float(batch.values[p, i, 1]))]
                if batch.prices is not None:
                    row.append(repr(float(batch.prices[p, i, 0])))
                    row.append(repr(float(batch.prices[p, i, 1])))
                fh.write(",".join(row) + "\n")
    if meta_path is None:
        meta_path = csv_path + ".meta.json"
    with open(meta_path, "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
