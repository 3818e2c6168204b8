"""Decomposable (product) noise measures on the truncated space.

Coordinate ``j`` of a draw is ``b_j * xi_j`` with ``xi_j`` distributed
according to a one-dimensional :class:`ComponentDensity`.  Everything that
involves densities is computed in log space.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import integrate
from scipy.interpolate import PchipInterpolator

from .spectral_field import SpectralField, WeightSequence, mode_indices

LOG_SQRT_2PI = 0.5 * math.log(2 * math.pi)


def as_coeffs(x) -> np.ndarray:
    """Coefficient array of a field, or the array itself."""
    if isinstance(x, SpectralField):
        return x.coeffs
    return np.asarray(x, dtype=float)


@dataclass(frozen=True)
class ComponentDensity:
    """One-dimensional reference density ``rho~``.

    ``family="gaussian"`` is the standard normal.  ``family="genexp"`` is
    ``exp(-a|r|**beta + q(r)) / Z`` with ``q(r) = sum_k q_coeffs[k-1] cos(k r)``
    and ``1 < beta <= 2``; ``Z`` is computed by quadrature on construction.
    """

    family: str = "gaussian"
    a: float = 0.5
    beta: float = 2.0
    q_coeffs: tuple = ()
    log_norm: float = field(init=False, repr=False)
    variation: float = field(init=False, repr=False)
    first_moment: float = field(init=False, repr=False)
    _quantile: object = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        fam = self.family.lower()
        if fam not in ("gaussian", "genexp"):
            raise ValueError(f"unknown density family {self.family!r}")
        object.__setattr__(self, "family", fam)
        object.__setattr__(self, "q_coeffs", tuple(float(c) for c in self.q_coeffs))
        if fam == "genexp":
            if not self.a > 0:
                raise ValueError("GenExp needs a > 0")
            if not 1 < self.beta <= 2:
                raise ValueError("GenExp needs 1 < beta <= 2")
        if fam == "gaussian":
            object.__setattr__(self, "log_norm", LOG_SQRT_2PI)
            object.__setattr__(self, "variation", math.sqrt(2 / math.pi))
            object.__setattr__(self, "first_moment", math.sqrt(2 / math.pi))
            object.__setattr__(self, "_quantile", None)
            return
        R = self.support_radius()
        z, _ = integrate.quad(lambda r: math.exp(self._log_unnorm(r)), -R, R, limit=400, points=[0.0])
        object.__setattr__(self, "log_norm", math.log(z))
        var, _ = integrate.quad(lambda r: abs(self._dlog(r)) * self.pdf(r), -R, R, limit=400, points=[0.0])
        m1, _ = integrate.quad(lambda r: abs(r) * self.pdf(r), -R, R, limit=400, points=[0.0])
        object.__setattr__(self, "variation", var)
        object.__setattr__(self, "first_moment", m1)
        object.__setattr__(self, "_quantile", self._build_quantile(R))

    # -- pointwise ---------------------------------------------------------
    def _q(self, r):
        out = np.zeros_like(np.asarray(r, dtype=float))
        for k, c in enumerate(self.q_coeffs, start=1):
            out = out + c * np.cos(k * r)
        return out

    def _dq(self, r):
        out = np.zeros_like(np.asarray(r, dtype=float))
        for k, c in enumerate(self.q_coeffs, start=1):
            out = out - k * c * np.sin(k * r)
        return out

    def _log_unnorm(self, r):
        return -self.a * np.abs(r) ** self.beta + self._q(r)

    def logpdf(self, r):
        r = np.asarray(r, dtype=float)
        if self.family == "gaussian":
            return -0.5 * r * r - LOG_SQRT_2PI
        return self._log_unnorm(r) - self.log_norm

    def pdf(self, r):
        return np.exp(self.logpdf(r))

    def _dlog(self, r):
        """``d/dr log rho~``."""
        r = np.asarray(r, dtype=float)
        if self.family == "gaussian":
            return -r
        return -self.a * self.beta * np.sign(r) * np.abs(r) ** (self.beta - 1) + self._dq(r)

    def support_radius(self, log_tail: float = 40.0) -> float:
        """Radius beyond which the density is below ``exp(-log_tail)`` of its peak scale."""
        if self.family == "gaussian":
            return math.sqrt(2 * log_tail)
        qmax = sum(abs(c) for c in self.q_coeffs)
        return ((log_tail + 2 * qmax) / self.a) ** (1 / self.beta)

    # -- sampling ----------------------------------------------------------
    def _build_quantile(self, R: float, n: int = 4096):
        # 4096-node table of r against log-odds of the CDF; lower and upper tail
        # masses are integrated from their own ends so neither loses precision
        fine = np.linspace(-R, R, 16 * (n - 1) + 1)
        dens = self.pdf(fine)
        lower = integrate.cumulative_simpson(dens, x=fine, initial=0.0)
        upper = integrate.cumulative_simpson(dens[::-1], x=-fine[::-1], initial=0.0)[::-1]
        lower, upper = lower[::16], upper[::16]
        nodes = fine[::16]
        ok = (lower > 0) & (upper > 0)
        logit = np.log(lower[ok]) - np.log(upper[ok])
        keep = np.concatenate(([True], np.diff(logit) > 0))
        return PchipInterpolator(logit[keep], nodes[ok][keep], extrapolate=False)

    def sample(self, rng: np.random.Generator, shape) -> np.ndarray:
        if self.family == "gaussian":
            return rng.standard_normal(shape)
        p = rng.random(shape)
        p = np.where(p == 0.0, np.nextafter(0.0, 1.0), p)
        logit = np.log(p) - np.log1p(-p)
        out = self._quantile(logit)
        miss = np.isnan(out)
        if np.any(miss):
            # beyond the table: invert the leading tail exp(-a|r|^beta)
            pt = np.minimum(p[miss], 1 - p[miss])
            r = (np.maximum(-(np.log(pt) + self.log_norm), 0.0) / self.a) ** (1 / self.beta)
            out[miss] = np.where(p[miss] < 0.5, -r, r)
        return out

    def to_dict(self) -> dict:
        return {"family": self.family, "a": self.a, "beta": self.beta, "q_coeffs": list(self.q_coeffs)}


GAUSSIAN = ComponentDensity("gaussian")


@dataclass(frozen=True)
class NoiseModel:
    weights: WeightSequence
    component: ComponentDensity | Sequence[ComponentDensity] = GAUSSIAN

    def __post_init__(self):
        if not isinstance(self.component, ComponentDensity):
            comps = tuple(self.component)
            if len(comps) != len(self.weights):
                raise ValueError("per-coordinate densities must match the number of weights")
            object.__setattr__(self, "component", comps)

    @property
    def dim(self) -> int:
        return len(self.weights)

    @property
    def b(self) -> np.ndarray:
        return self.weights.b

    def components(self) -> list[ComponentDensity]:
        if isinstance(self.component, ComponentDensity):
            return [self.component] * self.dim
        return list(self.component)

    @property
    def is_gaussian(self) -> bool:
        return all(c.family == "gaussian" for c in self.components())

    def log_ref(self, x: np.ndarray) -> np.ndarray:
        """``log rho~_j(x_j)`` elementwise for standardised coordinates ``x``."""
        if isinstance(self.component, ComponentDensity):
            return self.component.logpdf(x)
        out = np.empty_like(x)
        for j, c in enumerate(self.component):
            out[..., j] = c.logpdf(x[..., j])
        return out

    def variation_constant(self) -> float:
        return max(c.variation for c in self.components())


def sample(model: NoiseModel, rng: np.random.Generator, size: int | None = None):
    """One draw (a :class:`SpectralField` when the dimension is even) or ``size`` draws as an array."""
    shape = (model.dim,) if size is None else (size, model.dim)
    if isinstance(model.component, ComponentDensity):
        xi = model.component.sample(rng, shape)
    else:
        xi = np.stack([c.sample(rng, shape[:-1]) for c in model.component], axis=-1)
    eta = xi * model.b
    if size is None and model.dim % 2 == 0:
        return SpectralField(eta)
    return eta


def log_shift_terms(model: NoiseModel, a, u) -> np.ndarray:
    """Per-coordinate ``log rho_j(u_j - a_j) - log rho_j(u_j)``."""
    a, u = as_coeffs(a), as_coeffs(u)
    b = model.b
    if a.shape[-1] != b.size or u.shape[-1] != b.size:
        raise ValueError("shift/point dimension does not match the noise model")
    return model.log_ref((u - a) / b) - model.log_ref(u / b)


def log_shift_density(model: NoiseModel, a, u):
    """``log d(ell_a)/d(ell)`` at ``u``; batched over leading axes of arrays."""
    terms = log_shift_terms(model, a, u)
    if terms.ndim == 1:
        return math.fsum(terms)
    return terms.sum(axis=-1)


def log_shift_density_gaussian(model: NoiseModel, a, u):
    """Cameron-Martin closed form ``-||a||_b^2 / 2 + (a, u)_b``."""
    a, u = as_coeffs(a), as_coeffs(u)
    ib2 = model.b ** -2
    return np.sum(ib2 * a * (u - 0.5 * a), axis=-1)


def tv_shift_bound(model: NoiseModel, a, a2) -> float:
    """``(C/2) sum_j |a_j - a2_j| / b_j`` with ``C`` the largest total variation of ``rho~_j``."""
    d = np.abs(as_coeffs(a) - as_coeffs(a2))
    return 0.5 * model.variation_constant() * float(np.sum(d / model.b))


def gaussian_tv_bound(model: NoiseModel, a, a2) -> float:
    """``2 (1 - exp(-||a - a2||_b^2 / 4))**(1/2)`` for Gaussian shifts."""
    d = as_coeffs(a) - as_coeffs(a2)
    cm2 = float(np.sum((d / model.b) ** 2))
    return 2.0 * math.sqrt(-math.expm1(-cm2 / 4))


def admissibility_check(model: NoiseModel, s: float, flat_tol: float = 0.01) -> dict:
    """Truncated versions of the summability conditions on ``b``.

    Partial sums of ``sum_j b_j**-2 j**(-2(1+s))`` are reported together with
    the best constants ``C2 = sup sum b_j**-1 |v_j|`` over the unit sphere of
    ``V^{s+1}`` and ``C3 = sup sum b_j**-2 |v_j|`` over that of ``V^{2(s+1)}``
    (both attained by Cauchy-Schwarz).  The report "passes" when the last
    quarter of the partial sum contributes less than ``flat_tol`` of the total.
    """
    b = model.b
    j = mode_indices(b.size // 2).astype(float) if b.size % 2 == 0 else np.arange(1, b.size + 1.0)
    terms = b**-2 * j ** (-2 * (1 + s))
    partial = np.cumsum(terms)
    total = float(partial[-1])
    q = int(math.floor(0.75 * terms.size))
    tail = float(terms[q:].sum())
    c2 = math.sqrt(float(np.sum(b**-2 * j ** (-2 * (s + 1)))))
    c3 = math.sqrt(float(np.sum(b**-4 * j ** (-4 * (s + 1)))))
    comps = model.components()
    passes = bool(np.isfinite(total) and tail < flat_tol * total)
    return {
        "s": s,
        "partial_sums": partial.tolist(),
        "total": total,
        "tail_fraction": tail / total if total > 0 else 0.0,
        "passes": passes,
        "C2": c2,
        "C3": c3,
        "C1_first_moment": max(c.first_moment for c in comps),
        "variation_constant": model.variation_constant(),
    }
