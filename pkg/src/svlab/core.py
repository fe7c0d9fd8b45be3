"""Grids, signed matrix measures, kernels, noise laws and RNG streams.

These are the shared substrate types: a uniform time grid, a finitely
represented matrix-valued signed measure (atoms plus a piecewise-constant
density), matrix kernel sequences for the summation equations, scalar noise
laws with exact or quadrature moments, and the reproducible per-path RNG
stream convention.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .quad import adaptive_simpson

ARTIFACT_VERSION = "0.1.0"
DEFAULT_NORM = "max"


class GridError(ValueError):
    """Raised for inconsistent grid or snapping requests."""


class MeasureError(ValueError):
    """Raised for malformed measure representations."""


class HistoryUnderflow(RuntimeError):
    """An atom or density cell reached back before the stored history."""


def vector_norm(x: np.ndarray, kind: str = DEFAULT_NORM) -> np.ndarray:
    """Norm on R^d along the last axis: 'max' (default), 'sum' or 'euclid'."""
    x = np.asarray(x, float)
    if kind == "max":
        return np.max(np.abs(x), axis=-1)
    if kind == "sum":
        return np.sum(np.abs(x), axis=-1)
    if kind == "euclid":
        return np.sqrt(np.sum(x * x, axis=-1))
    raise ValueError(f"unknown norm {kind!r}")


# ---------------------------------------------------------------------------
# grid

@dataclass(frozen=True)
class GridSpec:
    """Uniform grid on [0, horizon_T] with step step_h.

    n_steps is the smallest step count whose right endpoint covers the
    horizon; t_k = k * step_h for k = 0..n_steps.
    """

    step_h: float
    horizon_T: float

    def __post_init__(self):
        if not (self.step_h > 0):
            raise GridError("step_h must be positive")
        if self.horizon_T < self.step_h:
            raise GridError("horizon_T must be at least one step")

    @property
    def n_steps(self) -> int:
        return int(math.ceil(self.horizon_T / self.step_h - 1e-9))

    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.step_h

    def snap(self, x: float) -> int:
        """Nearest grid index of a location; rejects half-step ties."""
        k = int(math.floor(x / self.step_h + 0.5))
        if abs(x - k * self.step_h) >= (0.5 - 1e-9) * self.step_h:
            raise GridError(f"location {x} is {abs(x - k * self.step_h):.3g} "
                            f"from the grid, not under h/2")
        return k

    def index_at(self, t: float) -> int:
        k = self.snap(t)
        if k < 0 or k > self.n_steps:
            raise GridError(f"time {t} outside [0, {self.horizon_T}]")
        return k


# ---------------------------------------------------------------------------
# signed matrix measures

@dataclass(frozen=True)
class DensitySample:
    """Piecewise-constant matrix density: values[k] holds on
    [start + k*step, start + (k+1)*step)."""

    start: float
    step: float
    values: np.ndarray  # (K, d, d)

    def __post_init__(self):
        v = np.asarray(self.values, float)
        if v.ndim != 3 or v.shape[1] != v.shape[2]:
            raise MeasureError("density values must have shape (K, d, d)")
        object.__setattr__(self, "values", v)
        if not (self.step > 0):
            raise MeasureError("density step must be positive")

    @property
    def end(self) -> float:
        return self.start + self.values.shape[0] * self.step

    def at(self, s: np.ndarray) -> np.ndarray:
        idx = np.floor((np.asarray(s, float) - self.start) / self.step).astype(int)
        idx = np.clip(idx, 0, self.values.shape[0] - 1)
        return self.values[idx]


@dataclass(frozen=True)
class SignedMeasureRepr:
    """Matrix-valued signed measure: finitely many atoms plus an optional
    piecewise-constant density, supported either in [0, inf) (convolution
    kernels) or in [-tau, 0] (delay kernels). Mixed-sign support is rejected.
    """

    dim: int
    atoms: tuple = ()          # ((location, weight (d,d)), ...)
    density: Optional[DensitySample] = None

    def __post_init__(self):
        norm_atoms = []
        for loc, w in self.atoms:
            w = np.asarray(w, float)
            if w.shape == ():
                w = w.reshape(1, 1)
            if w.shape != (self.dim, self.dim):
                raise MeasureError(f"atom weight shape {w.shape} != ({self.dim}, {self.dim})")
            norm_atoms.append((float(loc), w))
        object.__setattr__(self, "atoms", tuple(norm_atoms))
        locs = [loc for loc, _ in self.atoms]
        lo = min(locs, default=0.0)
        hi = max(locs, default=0.0)
        if self.density is not None:
            if self.density.values.shape[1] != self.dim:
                raise MeasureError("density dimension mismatch")
            lo = min(lo, self.density.start)
            hi = max(hi, self.density.end)
        if lo < 0 and hi > 0:
            raise MeasureError("support must lie in [0, inf) or in [-tau, 0]")
        object.__setattr__(self, "support", (lo, hi))

    @property
    def negative_support(self) -> bool:
        return self.support[0] < 0

    def total_variation(self) -> np.ndarray:
        """Componentwise total variation matrix: sum of |atom weights| plus
        the cellwise |density| mass."""
        tv = np.zeros((self.dim, self.dim))
        for _, w in self.atoms:
            tv += np.abs(w)
        if self.density is not None:
            tv += np.sum(np.abs(self.density.values), axis=0) * self.density.step
        return tv

    def digest(self) -> str:
        payload = {
            "dim": self.dim,
            "atoms": [[float(loc).hex(), [[v.hex() for v in row] for row in w.tolist()]]
                      for loc, w in self.atoms],
        }
        if self.density is not None:
            payload["density"] = {
                "start": float(self.density.start).hex(),
                "step": float(self.density.step).hex(),
                "values": hashlib.sha256(
                    np.ascontiguousarray(self.density.values).tobytes()).hexdigest(),
            }
        return hashlib.sha256(canonical_json(payload).encode()).hexdigest()


def point_mass(weight, location: float = 0.0) -> SignedMeasureRepr:
    """Measure with a single matrix atom (weight may be scalar for d = 1)."""
    w = np.atleast_2d(np.asarray(weight, float))
    return SignedMeasureRepr(dim=w.shape[0], atoms=((location, w),))


def neg_identity_point_mass(dim: int) -> SignedMeasureRepr:
    """The kernel -delta_0 I, whose paths coincide with the mean-reverting
    unit-rate process."""
    return point_mass(-np.eye(dim), 0.0)


def is_neg_identity_point_mass(m: SignedMeasureRepr) -> bool:
    if m.density is not None or len(m.atoms) != 1:
        return False
    loc, w = m.atoms[0]
    return loc == 0.0 and np.array_equal(w, -np.eye(m.dim))


class CompiledMeasure:
    """A measure bound to a grid: atom lags snapped to whole steps and the
    density sampled at left endpoints, ready for per-step convolution."""

    def __init__(self, measure: SignedMeasureRepr, grid: GridSpec):
        self.measure = measure
        self.grid = grid
        self.negative_support = measure.negative_support
        lags, weights = [], []
        for loc, w in measure.atoms:
            lags.append(grid.snap(abs(loc)))
            weights.append(w)
        self.atom_lags = np.asarray(lags, int)
        self.atom_weights = (np.stack(weights) if weights
                             else np.zeros((0, measure.dim, measure.dim)))
        h = grid.step_h
        dlags, dweights = [], []
        dens = measure.density
        if dens is not None:
            if self.negative_support:
                # left endpoints of [-tau, 0) cells, lag = -s
                ell = 1
                while -ell * h >= dens.start - 1e-12:
                    s = -ell * h
                    if s < dens.end - 1e-12:
                        dlags.append(ell)
                        dweights.append(dens.at(np.array([s]))[0] * h)
                    ell += 1
            else:
                ell = 0
                while ell * h < dens.end - 1e-12:
                    s = ell * h
                    if s >= dens.start - 1e-12:
                        dlags.append(ell)
                        dweights.append(dens.at(np.array([s]))[0] * h)
                    ell += 1
        self.dens_lags = np.asarray(dlags, int)
        self.dens_weights = (np.stack(dweights) if dweights
                             else np.zeros((0, measure.dim, measure.dim)))

    def convolve(self, path: np.ndarray, t_index: int, history_offset: int = 0) -> np.ndarray:
        """Quadrature of the past-weighted integral at step t_index.

        path[i] is the state at grid index i - history_offset. Kernels on
        [0, inf) truncate to [0, t]; delay kernels must find their whole
        support in the stored history or HistoryUnderflow is raised.
        """
        out = np.zeros(path.shape[1:])
        if self.atom_lags.size:
            idx = t_index - self.atom_lags + history_offset
            if self.negative_support:
                if np.any(idx < 0):
                    raise HistoryUnderflow("atom lag reaches before stored history")
                keep = slice(None)
            else:
                keep = self.atom_lags <= t_index
                idx = idx[keep]
            w = self.atom_weights[keep]
            if idx.size:
                out = out + np.einsum("kab,kb...->a...", w, path[idx])
        if self.dens_lags.size:
            if self.negative_support:
                idx = t_index - self.dens_lags + history_offset
                if np.any(idx < 0):
                    raise HistoryUnderflow("density cell reaches before stored history")
                w = self.dens_weights
            else:
                keep = self.dens_lags <= t_index - 1
                idx = t_index - self.dens_lags[keep] + history_offset
                w = self.dens_weights[keep]
            if idx.size:
                out = out + np.einsum("kab,kb...->a...", w, path[idx])
        return out


def convolve_measure(m: SignedMeasureRepr, path: np.ndarray, t_index: int,
                     grid: GridSpec, history_offset: int = 0) -> np.ndarray:
    """One-shot convolution quadrature (compiles the measure on the fly)."""
    return CompiledMeasure(m, grid).convolve(np.asarray(path, float), t_index,
                                             history_offset)


def total_variation(m: SignedMeasureRepr) -> np.ndarray:
    return m.total_variation()


# ---------------------------------------------------------------------------
# matrix kernel sequences (summation equations)

@dataclass(frozen=True)
class GeometricTail:
    """Closed-form tail K(n) = coeff * ratio^(n - start) for n >= start."""

    start: int
    coeff: np.ndarray
    ratio: float

    def __post_init__(self):
        object.__setattr__(self, "coeff", np.atleast_2d(np.asarray(self.coeff, float)))
        if not (0 < abs(self.ratio) < 1):
            raise ValueError("tail ratio must satisfy 0 < |ratio| < 1")


@dataclass(frozen=True)
class MatrixKernelSeq:
    """Kernel sequence n -> (d, d) matrix with finite explicit entries and an
    optional geometric tail; componentwise absolutely summable by
    construction."""

    dim: int
    entries: dict = field(default_factory=dict)   # n -> (d, d)
    tail: Optional[GeometricTail] = None

    def __post_init__(self):
        fixed = {}
        for n, w in self.entries.items():
            w = np.atleast_2d(np.asarray(w, float))
            if w.shape != (self.dim, self.dim):
                raise ValueError(f"entry {n} has shape {w.shape}")
            if int(n) < 0:
                raise ValueError("kernel indices start at 0")
            fixed[int(n)] = w
        object.__setattr__(self, "entries", fixed)
        if self.tail is not None and self.tail.coeff.shape != (self.dim, self.dim):
            raise ValueError("tail coefficient dimension mismatch")

    def values(self, n_max: int) -> np.ndarray:
        """Dense (n_max + 1, d, d) array of K(0..n_max)."""
        out = np.zeros((n_max + 1, self.dim, self.dim))
        if self.tail is not None:
            n = np.arange(self.tail.start, n_max + 1)
            if n.size:
                out[n] = self.tail.coeff[None, :, :] * \
                    (self.tail.ratio ** (n - self.tail.start))[:, None, None]
        for k, w in self.entries.items():
            if k <= n_max:
                out[k] = w
        return out

    def l1_matrix(self) -> np.ndarray:
        """Componentwise l1 mass, with the tail summed in closed form."""
        tot = np.zeros((self.dim, self.dim))
        for k, w in self.entries.items():
            if self.tail is not None and k >= self.tail.start:
                tot -= np.abs(self.tail.coeff) * abs(self.tail.ratio) ** (k - self.tail.start)
            tot += np.abs(w)
        if self.tail is not None:
            tot += np.abs(self.tail.coeff) / (1.0 - abs(self.tail.ratio))
        return tot


# ---------------------------------------------------------------------------
# scalar noise laws

class ScalarLaw:
    """Scalar law with sampling plus exact/quadrature set moments.

    mass_on / truncated_mean_on integrate the law and x * law over finite
    interval unions; discrete parts are summed exactly, density parts go
    through adaptive Simpson (abs tol 1e-10).
    """

    quad_tol = 1e-10

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        raise NotImplementedError

    def atom_list(self):
        return []

    def density_fn(self):
        return None

    def support_hint(self):
        """Bounded interval carrying most of the density mass, or None."""
        return None

    def mass_on(self, intervals) -> float:
        return self._integrate(intervals, lambda x: 1.0, np.ones_like)

    def truncated_mean_on(self, intervals) -> float:
        return self._integrate(intervals, lambda x: x, lambda x: x)

    def _integrate(self, intervals, weight_scalar, weight_array) -> float:
        total = 0.0
        for x, p in self.atom_list():
            if any(lo <= x <= hi for lo, hi in intervals):
                total += weight_scalar(x) * p
        dens = self.density_fn()
        if dens is not None:
            for lo, hi in intervals:
                if hi > lo:
                    total += adaptive_simpson(lambda x: weight_scalar(x) * dens(x),
                                              lo, hi, self.quad_tol)
        return total


@dataclass(frozen=True)
class GaussianLaw(ScalarLaw):
    mean: float = 0.0
    std: float = 1.0

    def sample(self, rng, n):
        return self.mean + self.std * rng.standard_normal(n)

    def density_fn(self):
        mu, sd = self.mean, self.std
        return lambda x: math.exp(-0.5 * ((x - mu) / sd) ** 2) / (sd * math.sqrt(2 * math.pi))

    def support_hint(self):
        return (self.mean - 2.0 * self.std, self.mean + 2.0 * self.std)


@dataclass(frozen=True)
class UniformLaw(ScalarLaw):
    lo: float = 0.0
    hi: float = 1.0

    def __post_init__(self):
        if not self.hi > self.lo:
            raise ValueError("uniform law needs hi > lo")

    def sample(self, rng, n):
        return rng.uniform(self.lo, self.hi, n)

    def density_fn(self):
        lo, hi = self.lo, self.hi
        inv = 1.0 / (hi - lo)
        return lambda x: inv if lo <= x <= hi else 0.0

    def support_hint(self):
        return (self.lo, self.hi)


@dataclass(frozen=True)
class FiniteDiscreteLaw(ScalarLaw):
    outcomes: tuple
    probs: tuple

    def __post_init__(self):
        out = tuple(float(x) for x in self.outcomes)
        pr = tuple(float(p) for p in self.probs)
        if len(out) != len(pr) or not out:
            raise ValueError("outcomes and probs must align and be nonempty")
        if any(p < 0 for p in pr) or abs(sum(pr) - 1.0) > 1e-9:
            raise ValueError("probabilities must be nonnegative and sum to 1")
        object.__setattr__(self, "outcomes", out)
        object.__setattr__(self, "probs", pr)

    def sample(self, rng, n):
        return rng.choice(np.asarray(self.outcomes), size=n, p=np.asarray(self.probs))

    def atom_list(self):
        return list(zip(self.outcomes, self.probs))


def two_point_law(x1: float, x2: float, p1: float = 0.5) -> FiniteDiscreteLaw:
    return FiniteDiscreteLaw((x1, x2), (p1, 1.0 - p1))


def constant_law(c: float) -> FiniteDiscreteLaw:
    return FiniteDiscreteLaw((c,), (1.0,))


@dataclass(frozen=True)
class SampledDensityLaw(ScalarLaw):
    """Piecewise-constant density on [start, start + len(values)*step)."""

    start: float
    step: float
    values: tuple

    def __post_init__(self):
        v = tuple(float(x) for x in self.values)
        if any(x < 0 for x in v):
            raise ValueError("density values must be nonnegative")
        if abs(sum(v) * self.step - 1.0) > 1e-9:
            raise ValueError("density must integrate to 1")
        object.__setattr__(self, "values", v)

    def sample(self, rng, n):
        cdf = np.cumsum(np.asarray(self.values) * self.step)
        u = rng.random(n)
        cell = np.searchsorted(cdf, u, side="right")
        cell = np.clip(cell, 0, len(self.values) - 1)
        prev = np.concatenate([[0.0], cdf])[cell]
        dens = np.asarray(self.values)[cell]
        frac = np.where(dens > 0, (u - prev) / (dens * self.step), 0.0)
        return self.start + (cell + frac) * self.step

    def density_fn(self):
        start, step, vals = self.start, self.step, self.values

        def dens(x):
            k = int(math.floor((x - start) / step))
            return vals[k] if 0 <= k < len(vals) else 0.0
        return dens

    def support_hint(self):
        return (self.start, self.start + len(self.values) * self.step)


@dataclass(frozen=True)
class NoiseSpec:
    """Noise family for the driving sequence xi(n) / Brownian increments.

    family 'gaussian-iid' with independent components is the only family
    that may be paired with a non-diagonal diffusion.
    """

    family: str
    laws: tuple
    component_independence: bool = True
    joint_sampler: Optional[Callable] = None

    _FAMILIES = ("gaussian-iid", "two-point", "uniform", "finite-discrete",
                 "custom-sampled")

    def __post_init__(self):
        if self.family not in self._FAMILIES:
            raise ValueError(f"unknown noise family {self.family!r}")
        if not self.laws and self.joint_sampler is None:
            raise ValueError("noise needs per-component laws or a joint sampler")
        if not self.component_independence and self.joint_sampler is None:
            raise ValueError("dependent components need a joint sampler")

    @property
    def dim(self) -> int:
        return len(self.laws)

    @property
    def unrestricted_diffusion(self) -> bool:
        return self.family == "gaussian-iid" and self.component_independence

    def draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.joint_sampler is not None:
            out = np.asarray(self.joint_sampler(rng, n), float)
            if out.shape != (n, self.dim) and self.dim:
                raise ValueError("joint sampler returned wrong shape")
            return out
        if self.family == "gaussian-iid" and all(
                isinstance(l, GaussianLaw) and l.mean == 0.0 and l.std == 1.0
                for l in self.laws):
            return rng.standard_normal((n, self.dim))
        cols = [law.sample(rng, n) for law in self.laws]
        return np.stack(cols, axis=1)

    @staticmethod
    def gaussian(m: int) -> "NoiseSpec":
        return NoiseSpec("gaussian-iid", tuple(GaussianLaw() for _ in range(m)))

    @staticmethod
    def two_point(x1: float, x2: float, p1: float = 0.5, m: int = 1) -> "NoiseSpec":
        return NoiseSpec("two-point", tuple(two_point_law(x1, x2, p1) for _ in range(m)))

    @staticmethod
    def uniform(lo: float, hi: float, m: int = 1) -> "NoiseSpec":
        return NoiseSpec("uniform", tuple(UniformLaw(lo, hi) for _ in range(m)))


# ---------------------------------------------------------------------------
# RNG streams and manifests

def rng_stream(master_seed: int, path_index: int) -> np.random.Generator:
    """Independent, reproducible stream for one ensemble path.

    The same (master_seed, path_index) always gives the same draw sequence;
    distinct path indices give statistically independent streams, so results
    do not depend on scheduling order.
    """
    return np.random.default_rng(np.random.SeedSequence([int(master_seed),
                                                         int(path_index)]))


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def config_digest(config: dict) -> str:
    return hashlib.sha256(canonical_json(config).encode()).hexdigest()


@dataclass(frozen=True)
class RunManifest:
    """Identity card of a run: same manifest means bit-identical outputs."""

    master_seed: int
    config_digest: str
    artifact_version: str = ARTIFACT_VERSION
    norm: str = DEFAULT_NORM

    def to_json(self) -> str:
        return json.dumps({
            "master_seed": self.master_seed,
            "config_digest": self.config_digest,
            "artifact_version": self.artifact_version,
            "norm": self.norm,
        }, sort_keys=True, indent=2) + "\n"
