"""Simulation of the kicked chain and its entropy-flux statistics."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy import stats

from .noise import as_coeffs, log_shift_density, sample
from .rng import stream
from .spectral_field import sobolev_norms
from .burgers import FlowConfig
from .transition import TransitionModel, sigma_from_images

log = logging.getLogger(__name__)


class InsufficientDataError(ValueError):
    pass


class ChainIntegrationError(FloatingPointError):
    """Flow-map failure during a chain step."""

    def __init__(self, message: str, step: int):
        super().__init__(message)
        self.step = step


@dataclass
class Trajectory:
    """A simulated path.

    ``states`` holds every ``thin``-th state (``state_steps`` gives their
    indices, always including 0 and the final step); the scalar series
    ``flux_increments``, ``norms_l2``, ``norms_h1`` and ``log_rho_fwd`` are kept
    for every step.
    """

    states: np.ndarray
    state_steps: np.ndarray
    flux_increments: np.ndarray
    norms_l2: np.ndarray
    norms_h1: np.ndarray
    log_rho_fwd: np.ndarray
    seed: int
    chain_id: int = 0
    config_hash: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def k(self) -> int:
        return self.flux_increments.size

    def dump_csv(self) -> str:
        """``step,norm_L2,norm_H1,sigma,xi_running`` (step 0 has no flux)."""
        xi = ergodic_flux(self) if self.k else np.empty(0)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["step", "norm_L2", "norm_H1", "sigma", "xi_running"])
        w.writerow([0, repr(float(self.norms_l2[0])), repr(float(self.norms_h1[0])), "", ""])
        for n in range(self.k):
            w.writerow([
                n + 1,
                repr(float(self.norms_l2[n + 1])),
                repr(float(self.norms_h1[n + 1])),
                repr(float(self.flux_increments[n])),
                repr(float(xi[n])),
            ])
        return buf.getvalue()


def config_digest(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=str).encode()).hexdigest()[:16]


def noise_draw(tm: TransitionModel, seed: int, chain_id: int, step: int, size: int | None = None) -> np.ndarray:
    """Kick applied at ``step`` (1-based) of chain ``chain_id``."""
    x = sample(tm.noise, stream(seed, "chain", chain_id, step), size)
    return as_coeffs(x)


def simulate(
    tm: TransitionModel,
    u0,
    k: int,
    seed: int = 0,
    thin: int = 100,
    chain_id: int = 0,
    config_hash: str = "",
) -> Trajectory:
    """Run ``k`` steps of ``u_n = S(u_{n-1}) + eta_n`` from ``u0``.

    Each step evaluates the flow map once; its image is reused for the
    backward term of ``sigma`` at the next step.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if thin < 1:
        raise ValueError("thin must be >= 1")
    u = np.array(as_coeffs(u0), dtype=float)
    d = u.size
    flux = np.empty(k)
    lrf = np.empty(k)
    l2 = np.empty(k + 1)
    h1 = np.empty(k + 1)
    kept_steps = [0]
    kept = [u.copy()]
    l2[0] = np.linalg.norm(u)
    h1[0] = _h1(u)
    try:
        Su = tm.apply(u)
    except FloatingPointError as exc:
        raise ChainIntegrationError(str(exc), 0) from exc
    for n in range(k):
        v = Su + noise_draw(tm, seed, chain_id, n + 1)
        try:
            Sv = tm.apply(v)
        except FloatingPointError as exc:
            raise ChainIntegrationError(f"step {n + 1}: {exc}", n + 1) from exc
        flux[n] = sigma_from_images(tm.noise, u, v, Su, Sv)
        lrf[n] = log_shift_density(tm.noise, Su, v)
        l2[n + 1] = np.linalg.norm(v)
        h1[n + 1] = _h1(v)
        if (n + 1) % thin == 0 or n + 1 == k:
            kept_steps.append(n + 1)
            kept.append(v.copy())
        u, Su = v, Sv
    return Trajectory(
        states=np.array(kept).reshape(len(kept), d),
        state_steps=np.array(kept_steps),
        flux_increments=flux,
        norms_l2=l2,
        norms_h1=h1,
        log_rho_fwd=lrf,
        seed=seed,
        chain_id=chain_id,
        config_hash=config_hash,
    )


def _h1(u: np.ndarray) -> float:
    if u.size % 2:
        return float(np.linalg.norm(u))
    return float(sobolev_norms(u, 1.0))


def ergodic_flux(traj: Trajectory) -> np.ndarray:
    """Running averages ``xi_n = (1/n) sum_{m<n} sigma(u_m, u_{m+1})``, ``n = 1..k``."""
    if traj.k == 0:
        raise InsufficientDataError("empty trajectory")
    return np.cumsum(traj.flux_increments) / np.arange(1, traj.k + 1)


@dataclass
class EpEstimate:
    mean: float
    stderr: float
    ci95: tuple
    n: int
    block: int

    def to_dict(self) -> dict:
        return {"ep_mean": self.mean, "ep_stderr": self.stderr, "ci95": list(self.ci95), "n": self.n, "block": self.block}


def batch_means(x: np.ndarray, block: int) -> EpEstimate:
    """Overlapping batch means estimate of the mean of a stationary series."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if block < 1 or n < 10 * block:
        raise InsufficientDataError(f"need at least {10 * block} samples, have {n}")
    mean = float(x.mean())
    c = np.concatenate(([0.0], np.cumsum(x - mean)))
    bm = (c[block:] - c[:-block]) / block
    var = n * block / ((n - block) * (n - block + 1)) * float(np.sum(bm * bm))
    se = float(np.sqrt(var / n))
    dof = max(1.5 * (n / block - 1), 1.0)
    half = float(stats.t.ppf(0.975, dof)) * se
    return EpEstimate(mean, se, (mean - half, mean + half), n, block)


def estimate_ep(traj: Trajectory, burn_in: int = 1000, block: int = 100) -> EpEstimate:
    """Mean entropy production ``<sigma>`` after ``burn_in`` steps, with a 95% interval."""
    if traj.k - burn_in < 10 * block:
        raise InsufficientDataError(f"k - burn_in = {traj.k - burn_in} < 10 * block = {10 * block}")
    return batch_means(traj.flux_increments[burn_in:], block)


@dataclass
class Histogram:
    edges: np.ndarray
    probs: np.ndarray
    mean: float
    var: float
    n: int

    def to_dict(self) -> dict:
        return {"edges": self.edges.tolist(), "probs": self.probs.tolist(), "mean": self.mean, "var": self.var, "n": self.n}


BUILTIN_OBSERVABLES = ("norm_L2", "norm_H1", "sigma")


def observable_series(traj: Trajectory, obs, burn_in: int = 0) -> np.ndarray:
    """Samples of a named built-in (every step) or a callable on stored states."""
    if isinstance(obs, str):
        if obs == "norm_L2":
            return traj.norms_l2[burn_in:]
        if obs == "norm_H1":
            return traj.norms_h1[burn_in:]
        if obs == "sigma":
            return traj.flux_increments[max(burn_in - 1, 0):] if burn_in else traj.flux_increments
        if obs.startswith("mode:"):
            idx = int(obs.split(":")[1])
            return traj.states[traj.state_steps >= burn_in, idx]
        raise KeyError(f"unknown observable {obs!r}")
    return np.array([obs(s) for s in traj.states[traj.state_steps >= burn_in]])


def _histogram(x: np.ndarray, edges: np.ndarray) -> Histogram:
    counts, _ = np.histogram(np.clip(x, edges[0], edges[-1]), bins=edges)
    return Histogram(edges, counts / max(x.size, 1), float(np.mean(x)), float(np.var(x)), int(x.size))


def occupation_stats(
    traj: Trajectory,
    observables: dict[str, str | Callable] | list,
    bins: int = 20,
    burn_in: int = 0,
    reference: Trajectory | None = None,
) -> dict:
    """Empirical distributions of finite-dimensional observables.

    With ``reference`` the histograms of both trajectories share bin edges
    and the total-variation discrepancy per observable is reported under
    ``"tv"`` (a mixing diagnostic, not a rate estimate).
    """
    if not isinstance(observables, dict):
        observables = {str(o): o for o in observables}
    hists, tv, ref_hists = {}, {}, {}
    for name, obs in observables.items():
        x = observable_series(traj, obs, burn_in)
        y = observable_series(reference, obs, burn_in) if reference is not None else None
        pool = x if y is None else np.concatenate([x, y])
        lo, hi = float(pool.min()), float(pool.max())
        if hi <= lo:
            hi = lo + 1.0
        edges = np.linspace(lo, hi, bins + 1)
        hists[name] = _histogram(x, edges)
        if y is not None:
            ref_hists[name] = _histogram(y, edges)
            tv[name] = 0.5 * float(np.abs(hists[name].probs - ref_hists[name].probs).sum())
    out = {"histograms": hists}
    if reference is not None:
        out["reference_histograms"] = ref_hists
        out["tv"] = tv
    return out


def refined_for_radius(tm: TransitionModel, radius: float) -> TransitionModel:
    """Copy of ``tm`` whose flow takes enough substeps to start stably at ``||u|| = radius``.

    The explicit advection step needs roughly ``dt |u|_max N`` below a fixed
    constant; ``0.625 R N`` substeps keeps it there for states of norm ``R``.
    """
    if not isinstance(tm.flow, FlowConfig):
        return tm
    need = math.ceil(0.625 * radius * tm.flow.modes)
    if need <= tm.flow.substeps:
        return tm
    return replace(tm, flow=replace(tm.flow, substeps=need))


def lyapunov_drift_probe(tm: TransitionModel, samples: int, radii, rng_seed: int = 0, direction: str = "random") -> dict:
    """Monte Carlo ``E ||u_1||`` on spheres ``||u|| = R`` and a fitted ``q R + M``.

    ``direction="random"`` draws isotropic directions in coefficient space;
    ``"mode1"`` uses random unit vectors in the span of the first mode pair,
    the slowest-decaying direction of the linear part.  The flow time step is
    refined with the radius (see :func:`refined_for_radius`).
    """
    d = tm.dim
    means, ses = [], []
    for i, R in enumerate(radii):
        rng = stream(rng_seed, "drift", i)
        if direction == "mode1":
            g = np.zeros((samples, d))
            g[:, : min(2, d)] = rng.standard_normal((samples, min(2, d)))
        else:
            g = rng.standard_normal((samples, d))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        u = g * float(R)
        eta = as_coeffs(sample(tm.noise, stream(rng_seed, "drift-noise", i), samples))
        u1 = refined_for_radius(tm, R).apply(u) + eta
        n1 = np.linalg.norm(u1, axis=1)
        means.append(float(n1.mean()))
        ses.append(float(n1.std(ddof=1) / np.sqrt(samples)) if samples > 1 else 0.0)
    r = np.asarray(radii, dtype=float)
    if r.size >= 2:
        q_hat, M_hat = (float(x) for x in np.polyfit(r, means, 1))
    else:
        q_hat, M_hat = float("nan"), means[0]
    # local constants M_R = E||u_1|| - q_hat R, reported for plateau checks
    local_M = [m - q_hat * R for m, R in zip(means, r)]
    return {
        "radii": r.tolist(),
        "mean_norm": means,
        "stderr": ses,
        "q_hat": q_hat,
        "M_hat": M_hat,
        "local_M": local_M,
        "q_theory": float(np.exp(-tm.flow.nu)) if hasattr(tm.flow, "nu") else None,
    }
