"""Built-in perturbation families and their exact window arithmetic.

The two stars are the spike train (tall thin triangles with unit-window mass
exactly 1/n) and the chirped oscillation e^{alpha t} sin(e^{beta t}). Both
come with companion quadrature routines that are independent enough of the
closed forms to act as cross-checks.
"""
from __future__ import annotations

import ast
import re
from dataclasses import dataclass

import numpy as np

from .quad import bisect_root, simpson_segments, trapezoid_refined


@dataclass(frozen=True)
class SpikeFamily:
    """Spike train: zero on [0, 2]; on [n, n+1] (n >= 2) a triangle of height
    n^beta rising on (n + a_n, n + 1/2] and falling on (n + 1/2, n + 1 - a_n)
    with a_n = 1/2 - 1/n^(beta+1). The area of each spike is exactly 1/n.
    Boundary points take the zero branch.
    """

    beta: float = 0.32

    def __post_init__(self):
        if not (self.beta > 0):
            raise ValueError("spike exponent beta must be positive")

    def a(self, n) -> np.ndarray:
        n = np.asarray(n, float)
        return 0.5 - n ** -(self.beta + 1.0)

    def height(self, n) -> np.ndarray:
        return np.asarray(n, float) ** self.beta

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, float)
        if np.any(t < 0):
            raise ValueError("spike family is defined on t >= 0")
        n = np.floor(t).astype(int)
        live = n >= 2
        nf = np.where(live, n, 2).astype(float)
        frac = t - n
        a_n = 0.5 - nf ** -(self.beta + 1.0)
        h_n = nf ** self.beta
        half_w = 0.5 - a_n
        rising = live & (frac > a_n) & (frac <= 0.5)
        falling = live & (frac > 0.5) & (frac < 1.0 - a_n)
        out = np.zeros_like(t, dtype=float)
        out[rising] = (h_n * (frac - a_n) / half_w)[rising]
        out[falling] = (h_n * (1.0 - a_n - frac) / half_w)[falling]
        if out.shape == ():
            return float(out)
        return out

    def breakpoints(self, n: int):
        """Slope-break abscissae of the spike on [n, n+1]."""
        a_n = float(self.a(n))
        return (n + a_n, n + 0.5, n + 1.0 - a_n)

    def window_exact(self, n: int) -> float:
        """Closed-form unit-window mass: integral over [n, n+1] is 1/n."""
        if n < 2:
            raise ValueError("spikes start at n = 2")
        return 1.0 / n

    def truncated_mass_exact(self, n: int) -> float:
        """Closed-form mass of the part of the spike above level 1."""
        if n < 2:
            raise ValueError("spikes start at n = 2")
        if float(self.height(n)) <= 1.0:
            raise ValueError(f"spike {n} never exceeds level 1")
        b = self.beta
        return 1.0 / n - 2.0 / n ** (b + 1.0) + 1.0 / n ** (2.0 * b + 1.0)

    def window_quadrature(self, n: int, h: float = 1e-4) -> float:
        """Unit-window mass by trapezoid on the uniform grid refined with the
        branch breakpoints (exact for the piecewise-linear display)."""
        if n < 2:
            raise ValueError("spikes start at n = 2")
        return trapezoid_refined(self, n, n + 1.0, h, self.breakpoints(n))

    def truncated_mass_quadrature(self, n: int, h: float = 1e-4) -> float:
        """Mass above level 1 with the crossings located by bisection on the
        evaluated function (no use of the closed-form crossing formula)."""
        if n < 2:
            raise ValueError("spikes start at n = 2")
        lo, mid, hi = self.breakpoints(n)
        c1 = bisect_root(lambda s: self(s) - 1.0, lo, mid, tol=1e-14)
        c2 = bisect_root(lambda s: self(s) - 1.0, mid, hi, tol=1e-14)
        return trapezoid_refined(lambda s: np.asarray(self(s), float) - 1.0,
                                 c1, c2, h, (mid,))

    def square_integral_to(self, T: int) -> float:
        """Integral of the squared spike train over [0, T], per-segment
        Simpson (exact for the piecewise-quadratic square)."""
        total = 0.0
        sq = lambda s: np.asarray(self(s)) ** 2
        for n in range(2, int(T)):
            lo, mid, hi = self.breakpoints(n)
            total += simpson_segments(sq, (lo, mid, hi))
        return total


@dataclass(frozen=True)
class OscFamily:
    """Chirped oscillation e^{alpha t} sin(e^{beta t}) with 0 < alpha < beta.

    Its pointwise magnitude blows up while every unit window integral decays
    like e^{(alpha-beta) t}. Evaluation refuses phases beyond float range.
    """

    alpha: float = 0.1
    beta: float = 0.5

    def __post_init__(self):
        if not (0 < self.alpha < self.beta):
            raise ValueError("need 0 < alpha < beta")

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, float)
        if np.any(self.beta * t > 700.0):
            raise ValueError("oscillation phase overflows float range")
        out = np.exp(self.alpha * t) * np.sin(np.exp(self.beta * t))
        if out.shape == ():
            return float(out)
        return out


def zero_f(t):
    return np.zeros_like(np.asarray(t, float))


@dataclass(frozen=True)
class ConstFamily:
    c: float = 1.0

    def __call__(self, t):
        return np.full_like(np.asarray(t, float), self.c)


@dataclass(frozen=True)
class GeometricWindowFamily:
    """Piecewise-constant f = ratio^n on [n, n+1): unit windows are exactly
    geometric."""

    ratio: float = 0.5

    def __post_init__(self):
        if not (0 < self.ratio < 1):
            raise ValueError("ratio must lie in (0, 1)")

    def __call__(self, t):
        t = np.asarray(t, float)
        if np.any(t < 0):
            raise ValueError("defined on t >= 0")
        return self.ratio ** np.floor(t)


@dataclass(frozen=True)
class ExpDecayFamily:
    rate: float = 1.0

    def __call__(self, t):
        return np.exp(-self.rate * np.asarray(t, float))


@dataclass(frozen=True)
class SqrtOf:
    inner: object

    def __call__(self, t):
        return np.sqrt(np.asarray(self.inner(t), float))


_CALL_RE = re.compile(r"^([a-z_]+)\((.*)\)$")


def _parse_kwargs(argstr: str) -> dict:
    kwargs = {}
    depth = 0
    parts, buf = [], []
    for ch in argstr:
        if ch == "," and depth == 0:
            parts.append("".join(buf))
            buf = []
        else:
            depth += ch == "("
            depth -= ch == ")"
            buf.append(ch)
    if buf:
        parts.append("".join(buf))
    for part in parts:
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise ValueError(f"corpus arguments must be key=value, got {part!r}")
        key, val = part.split("=", 1)
        kwargs[key.strip()] = ast.literal_eval(val.strip())
    return kwargs


def resolve(name: str):
    """Parse a corpus expression like ``spike(beta=0.32)`` or
    ``sqrt(spike(beta=0.32))`` into a vectorized callable."""
    name = name.strip()
    if name == "zero":
        return zero_f
    m = _CALL_RE.match(name)
    if m is None:
        raise ValueError(f"unknown corpus function {name!r}")
    head, inner = m.group(1), m.group(2)
    if head == "sqrt":
        return SqrtOf(resolve(inner))
    kwargs = _parse_kwargs(inner)
    families = {
        "spike": SpikeFamily,
        "osc": OscFamily,
        "const": ConstFamily,
        "geomwin": GeometricWindowFamily,
        "exp_decay": ExpDecayFamily,
    }
    if head not in families:
        raise ValueError(f"unknown corpus function {head!r}")
    return families[head](**kwargs)
