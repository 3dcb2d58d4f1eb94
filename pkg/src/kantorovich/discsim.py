"""Monte Carlo for the diffusion on the closed unit disc.

From an interior point u the chain jumps to a uniform point of a ball:

* ``|u| <= 1/2``: the ball of radius ``1 - |u|`` around 0;
* ``1/2 <= |u| < 1``: the ball of radius ``1 - |u|`` around ``(2 - 1/|u|) u``,
  which touches the unit circle at ``u/|u|``.

Points of the unit circle are fixed.  Randomness comes from numpy's Philox
counter-based generator, one stream per ``(seed, trajectory id)``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from ._validation import DomainError, check_nonnegative_int, check_positive_int

__all__ = [
    "DiscState",
    "BOUNDARY_TOL",
    "make_stream",
    "disc_step",
    "disc_trajectory",
    "disc_cesaro",
    "batch_means_error",
    "trajectory_to_csv",
    "averages_to_csv",
]

BOUNDARY_TOL = 1e-15
_DRAWS = 1 << 16
_MAX_STEPS = 10_000_000


@dataclass(frozen=True)
class DiscState:
    re: float
    im: float

    def __post_init__(self):
        re, im = float(self.re), float(self.im)
        if not (math.isfinite(re) and math.isfinite(im)):
            raise DomainError("disc state must be finite")
        if re * re + im * im > 1.0 + 1e-12:
            raise DomainError(f"({re}, {im}) lies outside the closed unit disc")
        object.__setattr__(self, "re", re)
        object.__setattr__(self, "im", im)

    @classmethod
    def from_complex(cls, z: complex) -> "DiscState":
        return cls(z.real, z.imag)

    def __complex__(self) -> complex:
        return complex(self.re, self.im)

    @property
    def modulus(self) -> float:
        return math.hypot(self.re, self.im)

    @property
    def on_boundary(self) -> bool:
        return self.modulus >= 1.0 - BOUNDARY_TOL


def make_stream(seed: int, trajectory_id: int = 0) -> np.random.Generator:
    """Philox stream keyed by the seed and the trajectory id."""
    seed = check_nonnegative_int(seed, "seed")
    trajectory_id = check_nonnegative_int(trajectory_id, "trajectory_id")
    ss = np.random.SeedSequence(seed, spawn_key=(trajectory_id,))
    return np.random.Generator(np.random.Philox(ss))


def _jump(re: float, im: float, r: float, a: float, b: float):
    """One transition from (re, im) using the uniforms a (radius) and b (angle).

    Returns the next point; boundary points are returned unchanged.
    """
    if r >= 1.0 - BOUNDARY_TOL:
        return re, im
    radius = 1.0 - r
    if r <= 0.5:
        cre, cim = 0.0, 0.0
    else:
        s = 2.0 - 1.0 / r
        cre, cim = s * re, s * im
    rho = radius * math.sqrt(a)
    theta = 2.0 * math.pi * b
    nre, nim = cre + rho * math.cos(theta), cim + rho * math.sin(theta)
    # rounding can push a point a hair past the circle; pull it back
    n2 = nre * nre + nim * nim
    if n2 > 1.0:
        scale = 1.0 / math.sqrt(n2)
        nre, nim = nre * scale, nim * scale
    return nre, nim


def disc_step(u: DiscState, rng: np.random.Generator) -> DiscState:
    """One step of the chain; boundary states come back unchanged."""
    r = u.modulus
    if r >= 1.0 - BOUNDARY_TOL:
        return u
    a, b = rng.random(2)
    return DiscState(*_jump(u.re, u.im, r, float(a), float(b)))


def _as_state(z0) -> DiscState:
    if isinstance(z0, DiscState):
        return z0
    if isinstance(z0, complex):
        return DiscState.from_complex(z0)
    if isinstance(z0, (tuple, list)) and len(z0) == 2:
        return DiscState(*z0)
    return DiscState(float(z0), 0.0)


def disc_trajectory(z0, n: int, seed: int, trajectory_id: int = 0) -> np.ndarray:
    """``n`` steps from ``z0``; returns a complex array of length ``n + 1``."""
    z = _as_state(z0)
    n = check_positive_int(n, "n")
    if n > _MAX_STEPS:
        raise DomainError(f"n is capped at {_MAX_STEPS}")
    out = np.empty(n + 1, dtype=complex)
    out[0] = complex(z)
    re, im = z.re, z.im
    r = math.hypot(re, im)
    if r >= 1.0 - BOUNDARY_TOL:
        out[1:] = out[0]
        return out
    rng = make_stream(seed, trajectory_id)
    re_out = np.empty(n + 1)
    im_out = np.empty(n + 1)
    re_out[0], im_out[0] = re, im
    k = 1
    while k <= n:
        m = min(_DRAWS, n + 1 - k)
        draws = rng.random((m, 2)).tolist()
        for a, b in draws:
            re, im = _jump(re, im, r, a, b)
            r = math.hypot(re, im)
            re_out[k] = re
            im_out[k] = im
            k += 1
    out.real = re_out
    out.imag = im_out
    return out


def disc_cesaro(f, z0, n: int, seed: int, trajectory_id: int = 0) -> np.ndarray:
    """Running averages ``(f(xi_0) + ... + f(xi_m)) / (m + 1)``, m = 0..n.

    ``f`` takes complex points.
    """
    path = disc_trajectory(z0, n, seed, trajectory_id)
    values = evaluate_complex(f, path)
    if np.all(values == values[0]):
        # keep constant series exact; cumulative sums would round
        return np.full(len(values), values[0])
    return np.cumsum(values) / np.arange(1, len(values) + 1)


def evaluate_complex(f, z: np.ndarray) -> np.ndarray:
    try:
        out = np.asarray(f(z), dtype=float)
        if out.shape == z.shape:
            return out
    except (TypeError, ValueError):
        pass
    return np.array([float(f(complex(v))) for v in z])


def batch_means_error(values: np.ndarray, n_batches: int = 50) -> float:
    """Standard error of the mean of a correlated series by batch means."""
    values = np.asarray(values, dtype=float)
    n_batches = check_positive_int(n_batches, "n_batches")
    size = len(values) // n_batches
    if size < 2 or n_batches < 2:
        raise DomainError("series too short for batch means")
    means = values[: size * n_batches].reshape(n_batches, size).mean(axis=1)
    return float(means.std(ddof=1) / math.sqrt(n_batches))


def _table(header, columns, rows) -> str:
    buf = io.StringIO()
    if header:
        for line in header.splitlines():
            buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    w.writerows(rows)
    return buf.getvalue()


def trajectory_to_csv(path: np.ndarray, header: str | None = None) -> str:
    rows = ([k, repr(float(z.real)), repr(float(z.imag))] for k, z in enumerate(path))
    return _table(header, ["step", "re", "im"], rows)


def averages_to_csv(averages: np.ndarray, header: str | None = None) -> str:
    rows = ([k, repr(float(v))] for k, v in enumerate(averages))
    return _table(header, ["step", "avg"], rows)
