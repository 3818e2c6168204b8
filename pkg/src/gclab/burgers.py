"""Time-one flow map of the forced viscous Burgers equation on the circle.

``u_t - nu u_xx + u u_x = h`` is integrated on the truncated spectral space
with the Lawson (integrating-factor) fourth-order Runge-Kutta scheme: the
diagonal viscous part is propagated exactly by ``exp(-nu j**2 t)`` and the
quadratic term is advanced explicitly.

With ``dealias=True`` the quadratic term is the exact Galerkin projection of
``u u_x`` onto the retained modes, evaluated as a direct convolution of
Fourier coefficients; this is what a 3/2-padded pseudospectral product
returns, without the FFTs (numba cannot call them).  ``dealias=False`` uses
the aliased pseudospectral product on the minimal ``2N + 2`` point grid.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numba
import numpy as np

from .rng import stream
from .spectral_field import (
    SpectralField,
    analyze_grid,
    evaluate_on_grid,
    mode_indices,
    sobolev_norms,
)

log = logging.getLogger(__name__)


class IntegrationError(FloatingPointError):
    """Non-finite state produced by the time integrator."""

    def __init__(self, message: str, substep: int):
        super().__init__(message)
        self.substep = substep


@dataclass(frozen=True)
class FlowConfig:
    nu: float
    h: SpectralField
    substeps: int = 1000
    dealias: bool = True

    def __post_init__(self):
        if not self.nu > 0:
            raise ValueError("viscosity must be positive")
        if self.substeps < 1:
            raise ValueError("substeps must be >= 1")

    @property
    def modes(self) -> int:
        return self.h.modes


@numba.njit(cache=True)
def _galerkin_advection(c, out):
    # out <- coefficients of P_N(u u_x) in the real interleaved basis
    n = c.shape[0] // 2
    a = np.empty(n + 1, dtype=np.complex128)
    a[0] = 0.0
    for j in range(1, n + 1):
        a[j] = complex(c[2 * j - 2], -c[2 * j - 1]) / (2.0 * np.sqrt(np.pi))
    for m in range(1, n + 1):
        # (u^2)_m = sum_{0<j<m} a_j a_{m-j} + 2 sum_{j>m} a_j conj(a_{j-m})
        acc = 0.0 + 0.0j
        for j in range(1, m):
            acc += a[j] * a[m - j]
        acc2 = 0.0 + 0.0j
        for j in range(m + 1, n + 1):
            acc2 += a[j] * np.conj(a[j - m])
        acc += 2.0 * acc2
        val = 0.5j * m * acc * (2.0 * np.sqrt(np.pi))
        out[2 * m - 2] = val.real
        out[2 * m - 1] = -val.imag


@numba.njit(cache=True)
def _rhs(c, h, out):
    _galerkin_advection(c, out)
    for i in range(c.shape[0]):
        out[i] = h[i] - out[i]


@numba.njit(cache=True)
def _flow_batch(states, h, nu, substeps):
    # returns (result, index of first failing substep or -1, failing row)
    B, d = states.shape
    dt = 1.0 / substeps
    E = np.empty(d)
    E2 = np.empty(d)
    for i in range(d):
        j = i // 2 + 1
        E[i] = np.exp(-nu * j * j * dt)
        E2[i] = np.exp(-nu * j * j * dt * 0.5)
    out = np.empty_like(states)
    k1 = np.empty(d)
    k2 = np.empty(d)
    k3 = np.empty(d)
    k4 = np.empty(d)
    tmp = np.empty(d)
    for b in range(B):
        u = states[b].copy()
        for step in range(substeps):
            _rhs(u, h, k1)
            for i in range(d):
                tmp[i] = E2[i] * (u[i] + 0.5 * dt * k1[i])
            _rhs(tmp, h, k2)
            for i in range(d):
                tmp[i] = E2[i] * u[i] + 0.5 * dt * k2[i]
            _rhs(tmp, h, k3)
            for i in range(d):
                tmp[i] = E[i] * u[i] + dt * E2[i] * k3[i]
            _rhs(tmp, h, k4)
            ok = True
            for i in range(d):
                u[i] = E[i] * u[i] + dt / 6.0 * (E[i] * k1[i] + 2.0 * E2[i] * (k2[i] + k3[i]) + k4[i])
                if not np.isfinite(u[i]):
                    ok = False
            if not ok:
                return out, step, b
        out[b] = u
    return out, -1, -1


def advection_term(coeffs: np.ndarray, M: int | None = None) -> np.ndarray:
    """Pseudospectral ``u u_x`` projected on the retained modes.

    ``M`` is the physical grid size; ``M >= 3N + 1`` makes the product
    alias-free and equal to the Galerkin convolution used by the integrator.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    n = coeffs.shape[-1] // 2
    M = 4 * n if M is None else M
    u = evaluate_on_grid(coeffs, M)
    sq = analyze_grid(u * u, n)
    j = mode_indices(n)
    # d/dx of (c cos + s sin) swaps the pair: c' = j s, s' = -j c
    out = np.empty_like(sq)
    out[..., 0::2] = 0.5 * j[0::2] * sq[..., 1::2]
    out[..., 1::2] = -0.5 * j[1::2] * sq[..., 0::2]
    return out


def _flow_aliased(states: np.ndarray, cfg: FlowConfig) -> np.ndarray:
    n = cfg.modes
    M = 2 * n + 2
    j2 = mode_indices(n).astype(float) ** 2
    dt = 1.0 / cfg.substeps
    E = np.exp(-cfg.nu * j2 * dt)
    E2 = np.exp(-cfg.nu * j2 * dt / 2)
    h = cfg.h.coeffs

    def F(c):
        return h - advection_term(c, M)

    u = states.copy()
    for step in range(cfg.substeps):
        k1 = F(u)
        k2 = F(E2 * (u + dt / 2 * k1))
        k3 = F(E2 * u + dt / 2 * k2)
        k4 = F(E * u + dt * E2 * k3)
        u = E * u + dt / 6 * (E * k1 + 2 * E2 * (k2 + k3) + k4)
        if not np.all(np.isfinite(u)):
            raise IntegrationError(f"non-finite state at substep {step}", step)
    return u


def flow_coeffs(states: np.ndarray, cfg: FlowConfig) -> np.ndarray:
    """Apply the time-one map to a ``(2N,)`` or ``(B, 2N)`` coefficient array."""
    states = np.asarray(states, dtype=float)
    single = states.ndim == 1
    batch = np.ascontiguousarray(np.atleast_2d(states))
    if batch.shape[-1] != cfg.h.coeffs.size:
        raise ValueError(f"state has {batch.shape[-1]} coefficients, forcing has {cfg.h.coeffs.size}")
    if cfg.dealias:
        out, bad, row = _flow_batch(batch, cfg.h.coeffs, float(cfg.nu), int(cfg.substeps))
        if bad >= 0:
            raise IntegrationError(f"non-finite state at substep {bad} (batch row {row})", bad)
    else:
        out = _flow_aliased(batch, cfg)
    return out[0] if single else out


def flow_map(u0: SpectralField, cfg: FlowConfig) -> SpectralField:
    """Time-one solution ``S(u0)`` of the truncated Burgers system."""
    return SpectralField(flow_coeffs(u0.coeffs, cfg))


def _ball_samples(rng: np.random.Generator, samples: int, dim: int, radius: float) -> np.ndarray:
    # uniform directions, norms uniform in [0, radius] with the boundary always hit once
    g = rng.standard_normal((samples, dim))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    r = radius * rng.random(samples)
    r[0] = radius
    return g * r[:, None]


@dataclass
class ProbeReport:
    """Per-radius maxima of a probe statistic; ``to_json`` gives the wire form."""

    radii: list
    values: list
    samples: int
    seed: int
    extra: dict

    def records(self) -> list[dict]:
        return [
            {"radius": float(r), "max_norm": float(v), "samples": self.samples, "seed": self.seed}
            for r, v in zip(self.radii, self.values)
        ]

    def to_json(self) -> str:
        return json.dumps({"records": self.records(), **self.extra})


def dissipativity_probe(cfg: FlowConfig, samples: int, radius: float | list, rng_seed: int = 0) -> ProbeReport:
    """Empirical constant ``C`` in ``||S(u)|| <= exp(-nu) ||u|| + C`` on balls.

    ``radius`` may be a single value or a list, giving the growth profile of
    the constant.  ``extra['holds']`` is true by construction of ``C``.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    radii = [float(radius)] if np.isscalar(radius) else [float(r) for r in radius]
    q = np.exp(-cfg.nu)
    consts, holds = [], True
    for i, rad in enumerate(radii):
        u = _ball_samples(stream(rng_seed, "dissipativity", i), samples, 2 * cfg.modes, rad)
        su = flow_coeffs(u, cfg)
        excess = np.linalg.norm(su, axis=1) - q * np.linalg.norm(u, axis=1)
        c_hat = max(0.0, float(excess.max()))
        holds &= bool(np.all(np.linalg.norm(su, axis=1) <= q * np.linalg.norm(u, axis=1) + c_hat + 1e-12))
        consts.append(c_hat)
    return ProbeReport(radii, consts, samples, rng_seed, {"q": float(q), "C_hat": consts[-1], "holds": holds})


def kruzhkov_probe(cfg: FlowConfig, m: int, samples: int, radii, rng_seed: int = 0) -> ProbeReport:
    """Max of ``||S(u)||_{m+1}`` over samples with ``||u|| <= radius``, per radius."""
    if m < 0:
        raise ValueError("m must be non-negative")
    out = []
    for i, rad in enumerate(radii):
        u = _ball_samples(stream(rng_seed, "kruzhkov", i), samples, 2 * cfg.modes, float(rad))
        norms = sobolev_norms(flow_coeffs(u, cfg), m + 1)
        if not np.all(np.isfinite(norms)):
            raise IntegrationError("non-finite Sobolev norm", -1)
        out.append(float(norms.max()))
    return ProbeReport([float(r) for r in radii], out, samples, rng_seed, {"m": m})
