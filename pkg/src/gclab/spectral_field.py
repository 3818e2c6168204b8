"""Mean-zero real fields on the circle in a truncated trigonometric basis.

Coefficients are stored as interleaved pairs ``(c_1, s_1, c_2, s_2, ...)``
for the L2-normalised basis functions ``cos(jx)/sqrt(pi)`` and
``sin(jx)/sqrt(pi)``.  With this normalisation the L2 norm of a field is the
Euclidean norm of its coefficient vector, and the Laplacian eigenvalue
attached to both members of pair ``j`` is ``j**2``.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

SQRT_PI = np.sqrt(np.pi)


class DimensionError(ValueError):
    """Fields, weights or grids with incompatible truncations."""


class AliasingError(ValueError):
    """Physical grid too coarse to represent the requested modes."""


def mode_indices(n_modes: int) -> np.ndarray:
    """Wavenumber of every coefficient slot: ``[1, 1, 2, 2, ..., N, N]``."""
    return np.repeat(np.arange(1, n_modes + 1), 2)


@dataclass(frozen=True, eq=False)
class SpectralField:
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float).reshape(-1)
        if c.size == 0 or c.size % 2:
            raise DimensionError(f"need an even, positive number of coefficients, got {c.size}")
        if not np.all(np.isfinite(c)):
            raise ValueError("field coefficients must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SpectralField):
            return NotImplemented
        return bool(np.array_equal(self.coeffs, other.coeffs))

    __hash__ = None

    @property
    def modes(self) -> int:
        return self.coeffs.size // 2

    @classmethod
    def zeros(cls, n_modes: int) -> "SpectralField":
        return cls(np.zeros(2 * n_modes))

    @classmethod
    def unit_mode(cls, n_modes: int, j: int, kind: str = "cos", amplitude: float = 1.0) -> "SpectralField":
        """Field ``amplitude * e`` where ``e`` is the normalised cos/sin mode of index ``j``."""
        if not 1 <= j <= n_modes:
            raise DimensionError(f"mode {j} outside 1..{n_modes}")
        c = np.zeros(2 * n_modes)
        c[2 * (j - 1) + (0 if kind == "cos" else 1)] = amplitude
        return cls(c)

    def cos_coeffs(self) -> np.ndarray:
        return self.coeffs[0::2]

    def sin_coeffs(self) -> np.ndarray:
        return self.coeffs[1::2]

    def __add__(self, other: "SpectralField") -> "SpectralField":
        _check_same(self, other)
        return SpectralField(self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        _check_same(self, other)
        return SpectralField(self.coeffs - other.coeffs)

    def __mul__(self, scalar: float) -> "SpectralField":
        return SpectralField(self.coeffs * float(scalar))

    __rmul__ = __mul__

    def norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))

    def to_csv(self) -> str:
        """CSV rows ``mode_index,cos_coeff,sin_coeff`` with a header."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["mode_index", "cos_coeff", "sin_coeff"])
        for j, (c, s) in enumerate(zip(self.cos_coeffs(), self.sin_coeffs()), start=1):
            w.writerow([j, repr(float(c)), repr(float(s))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "SpectralField":
        rows = list(csv.DictReader(io.StringIO(text)))
        n = len(rows)
        c = np.zeros(2 * n)
        for row in rows:
            j = int(row["mode_index"])
            c[2 * (j - 1)] = float(row["cos_coeff"])
            c[2 * (j - 1) + 1] = float(row["sin_coeff"])
        return cls(c)

    def to_json(self) -> str:
        return json.dumps([float(x) for x in self.coeffs])

    @classmethod
    def from_json(cls, text: str) -> "SpectralField":
        return cls(np.asarray(json.loads(text), dtype=float))


def _check_same(u: SpectralField, v: SpectralField) -> None:
    if u.modes != v.modes:
        raise DimensionError(f"truncation mismatch: {u.modes} vs {v.modes}")


@dataclass(frozen=True)
class WeightSequence:
    """Positive weights ``b`` attached to every coefficient slot."""

    b: np.ndarray
    b0: float | None = field(default=None, compare=False)
    r: float | None = field(default=None, compare=False)

    def __post_init__(self):
        b = np.array(self.b, dtype=float).reshape(-1)
        if b.size == 0:
            raise DimensionError("empty weight sequence")
        if not np.all(np.isfinite(b)) or np.any(b <= 0):
            raise ValueError("weights must be finite and strictly positive")
        b.setflags(write=False)
        object.__setattr__(self, "b", b)

    @classmethod
    def power_law(cls, n_modes: int, b0: float = 1.0, r: float = 1.0) -> "WeightSequence":
        """``b_j = b0 * j**(-r)``, repeated for the cos/sin pair of each ``j``."""
        if b0 <= 0:
            raise ValueError("b0 must be positive")
        if r <= 0.5:
            raise ValueError("r must exceed 1/2 for square summability")
        return cls(b0 * mode_indices(n_modes).astype(float) ** (-r), b0=b0, r=r)

    def __len__(self) -> int:
        return self.b.size

    def square_sum(self) -> float:
        return float(np.sum(self.b**2))


def sobolev_norm(u: SpectralField, s: float) -> float:
    """``(sum_j j**(2s) (c_j**2 + s_j**2))**(1/2)``."""
    if s < 0:
        raise ValueError("Sobolev index must be non-negative")
    j = mode_indices(u.modes).astype(float)
    return float(np.sqrt(np.sum(j ** (2 * s) * u.coeffs**2)))


def sobolev_norms(coeffs: np.ndarray, s: float) -> np.ndarray:
    """Row-wise :func:`sobolev_norm` for a ``(..., 2N)`` coefficient array."""
    coeffs = np.asarray(coeffs, dtype=float)
    j = mode_indices(coeffs.shape[-1] // 2).astype(float)
    return np.sqrt(np.sum(j ** (2 * s) * coeffs**2, axis=-1))


def weighted_inner(u: SpectralField, v: SpectralField, b: WeightSequence, power: int = 2) -> float:
    """``sum_j b_j**(-power) u_j v_j``; ``power=2`` gives ``(.,.)_b``, ``power=4`` the ``b**2`` pairing."""
    if power not in (2, 4):
        raise ValueError("power must be 2 or 4")
    _check_same(u, v)
    if len(b) != u.coeffs.size:
        raise DimensionError(f"weights of length {len(b)} for {u.coeffs.size} coefficients")
    return float(np.sum(b.b ** (-power) * u.coeffs * v.coeffs))


def weighted_norm(u: SpectralField, b: WeightSequence, power: int = 2) -> float:
    return float(np.sqrt(weighted_inner(u, u, b, power)))


def _spectrum(coeffs: np.ndarray, M: int) -> np.ndarray:
    n = coeffs.shape[-1] // 2
    U = np.zeros(coeffs.shape[:-1] + (M // 2 + 1,), dtype=complex)
    U[..., 1 : n + 1] = (M / (2 * SQRT_PI)) * (coeffs[..., 0::2] - 1j * coeffs[..., 1::2])
    return U


def evaluate_on_grid(u: SpectralField | np.ndarray, M: int) -> np.ndarray:
    """Values ``u(2 pi m / M)`` for ``m = 0..M-1``.

    Accepts a field or a raw ``(..., 2N)`` coefficient array; requires
    ``M >= 2N + 2`` so that every retained mode lies strictly below Nyquist.
    """
    coeffs = u.coeffs if isinstance(u, SpectralField) else np.asarray(u, dtype=float)
    n = coeffs.shape[-1] // 2
    if M < 2 * n + 2:
        raise AliasingError(f"grid of {M} points cannot carry {n} modes (need M >= {2 * n + 2})")
    return np.fft.irfft(_spectrum(coeffs, M), n=M, axis=-1)


def analyze_grid(values: np.ndarray, n_modes: int) -> np.ndarray:
    """Project grid values onto the first ``n_modes`` cos/sin pairs (inverse of synthesis)."""
    values = np.asarray(values, dtype=float)
    M = values.shape[-1]
    if M < 2 * n_modes + 2:
        raise AliasingError(f"grid of {M} points cannot resolve {n_modes} modes")
    U = np.fft.rfft(values, axis=-1)[..., 1 : n_modes + 1] * (2 * SQRT_PI / M)
    out = np.empty(values.shape[:-1] + (2 * n_modes,))
    out[..., 0::2] = U.real
    out[..., 1::2] = -U.imag
    return out
