"""Scaled cumulant generating functions, rate functions and the fluctuation relation.

The stored curve is ``e(alpha) = lim (1/k) log E exp(-alpha k xi_k)``, so the
symmetry to test is ``e(alpha) = e(1 - alpha)`` and the rate function is
``I(r) = sup_alpha (-alpha r - e(alpha))``.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .noise import as_coeffs, sample
from .oracle import GridKernel, tilted_eigenvalue
from .rng import stream
from .transition import TransitionModel, sigma_from_images

PROVENANCES = ("oracle", "mc_naive", "mc_cloning", "analytic")
ORACLE_WINDOW = (-1.0, 2.0)
NAIVE_WINDOW = (-0.25, 1.25)
CLONING_WINDOW = (-1.0, 2.0)


class NonConvexError(ValueError):
    def __init__(self, message: str, triple):
        super().__init__(message)
        self.triple = triple


class PopulationCollapseError(RuntimeError):
    pass


@dataclass
class ScgfCurve:
    alphas: np.ndarray
    values: np.ndarray
    provenance: str = "oracle"
    stderr: np.ndarray | None = None
    flags: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.alphas = np.asarray(self.alphas, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.alphas.shape != self.values.shape or self.alphas.ndim != 1:
            raise ValueError("alphas and values must be 1-d of equal length")
        if np.any(np.diff(self.alphas) <= 0):
            raise ValueError("alphas must be strictly increasing")
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")
        if self.stderr is None:
            self.stderr = np.zeros_like(self.values)
        self.stderr = np.asarray(self.stderr, dtype=float)
        if self.flags is None:
            self.flags = np.zeros(self.values.shape, dtype=bool)

    def __call__(self, alpha: float) -> float:
        return float(np.interp(alpha, self.alphas, self.values))

    def symmetry_defect(self) -> np.ndarray:
        """``|e(a) - e(1 - a)|`` at every grid point whose mirror is also on the grid."""
        out = np.full(self.alphas.size, np.nan)
        for i, a in enumerate(self.alphas):
            j = np.flatnonzero(np.isclose(self.alphas, 1 - a, atol=1e-9))
            if j.size:
                out[i] = abs(self.values[i] - self.values[j[0]])
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["alpha", "scgf", "stderr", "provenance"])
        for a, e, s in zip(self.alphas, self.values, self.stderr):
            w.writerow([repr(float(a)), repr(float(e)), repr(float(s)), self.provenance])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "ScgfCurve":
        rows = list(csv.DictReader(io.StringIO(text)))
        if not rows:
            raise ValueError("empty curve")
        prov = rows[0]["provenance"]
        return cls(
            np.array([float(r["alpha"]) for r in rows]),
            np.array([float(r["scgf"]) for r in rows]),
            prov,
            np.array([float(r["stderr"]) for r in rows]),
        )


@dataclass
class RateFunction:
    """``I`` on a grid; ``I_values`` is ``+inf`` exactly where ``finite`` is false."""

    rs: np.ndarray
    I_values: np.ndarray
    finite: np.ndarray
    domain: tuple
    hull_correction: float = 0.0

    @property
    def minimizer(self) -> float:
        return float(self.rs[np.argmin(self.I_values)])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["r", "I", "finite"])
        for r, v, f in zip(self.rs, self.I_values, self.finite):
            w.writerow([repr(float(r)), repr(float(v)) if f else "inf", int(f)])
        return buf.getvalue()


def oracle_curve(kern: GridKernel, alphas) -> ScgfCurve:
    """SCGF from the leading eigenvalue of the tilted grid operator."""
    alphas = np.asarray(alphas, dtype=float)
    lo, hi = ORACLE_WINDOW
    if alphas.min() < lo - 1e-12 or alphas.max() > hi + 1e-12:
        raise ValueError(f"oracle alphas must lie in [{lo}, {hi}]")
    vals, init = [], None
    for a in alphas:
        res = tilted_eigenvalue(kern, float(a), init=init)
        init = res.right
        vals.append(res.scgf)
    return ScgfCurve(alphas, np.array(vals), "oracle", meta={"tau_q": kern.tau_q})


def lower_hull(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Indices of the lower convex hull of points sorted by ``x`` (monotone chain)."""
    idx: list[int] = []
    for i in range(x.size):
        while len(idx) >= 2:
            a, b = idx[-2], idx[-1]
            # drop b when it lies on or above the chord a -> i
            if (y[b] - y[a]) * (x[i] - x[a]) >= (y[i] - y[a]) * (x[b] - x[a]):
                idx.pop()
            else:
                break
        idx.append(i)
    return np.array(idx)


def _neg_conjugate(x: np.ndarray, y: np.ndarray, ps: np.ndarray):
    """``sup_i (-p x_i - y_i)`` for each ``p``; ``+inf`` where ``-p`` is outside the hull slopes.

    One sweep over the hull for sorted ``p`` (linear time).
    """
    h = lower_hull(x, y)
    hx, hy = x[h], y[h]
    slopes = np.diff(hy) / np.diff(hx)
    out = np.full(ps.size, math.inf)
    if slopes.size == 0:
        return out, np.zeros(ps.size, dtype=bool)
    order = np.argsort(-ps)  # increasing slope -p
    j = 0
    for t in order:
        s = -ps[t]
        if s < slopes[0] or s > slopes[-1]:
            continue
        while j < slopes.size - 1 and slopes[j] < s:
            j += 1
        # the optimal vertex is where the hull slope crosses s
        v = j if slopes[j] >= s else j + 1
        cand = -ps[t] * hx[v] - hy[v]
        if v > 0:
            cand = max(cand, -ps[t] * hx[v - 1] - hy[v - 1])
        if v + 1 < hx.size:
            cand = max(cand, -ps[t] * hx[v + 1] - hy[v + 1])
        out[t] = cand
    return out, np.isfinite(out)


def check_convex(curve: ScgfCurve, tol=None) -> float:
    """Largest excess of a point above the chord of its neighbours; raises past ``tol``.

    ``tol`` defaults to ``1e-9`` for oracle/analytic curves and to twice the
    point's standard error for Monte Carlo curves.
    """
    a, e = curve.alphas, curve.values
    worst = 0.0
    for i in range(1, a.size - 1):
        t = (a[i] - a[i - 1]) / (a[i + 1] - a[i - 1])
        excess = e[i] - ((1 - t) * e[i - 1] + t * e[i + 1])
        lim = tol if tol is not None else (1e-9 if curve.provenance in ("oracle", "analytic") else 2 * curve.stderr[i])
        if excess > lim:
            raise NonConvexError(
                f"nonconvex at alphas ({a[i-1]:g}, {a[i]:g}, {a[i+1]:g}): excess {excess:.3e} > {lim:.3e}",
                (float(a[i - 1]), float(a[i]), float(a[i + 1])),
            )
        worst = max(worst, excess)
    return worst


def legendre_transform(curve: ScgfCurve, rs, tol=None) -> RateFunction:
    """``I(r) = sup_alpha (-alpha r - e(alpha))`` over the sampled alphas."""
    check_convex(curve, tol)
    rs = np.asarray(rs, dtype=float)
    h = lower_hull(curve.alphas, curve.values)
    hull_vals = np.interp(curve.alphas, curve.alphas[h], curve.values[h])
    correction = float(np.max(curve.values - hull_vals))
    if curve.provenance in ("mc_naive", "mc_cloning"):
        excess = curve.values - hull_vals
        if np.any(excess > 2 * curve.stderr + 1e-15):
            i = int(np.argmax(excess - 2 * curve.stderr))
            raise NonConvexError(f"hull correction {excess[i]:.3e} exceeds two standard errors at alpha={curve.alphas[i]:g}",
                                 (float(curve.alphas[max(i - 1, 0)]), float(curve.alphas[i]), float(curve.alphas[min(i + 1, curve.alphas.size - 1)])))
    I, fin = _neg_conjugate(curve.alphas, curve.values, rs)
    hx = curve.alphas[h]
    if h.size >= 2:
        s = np.diff(curve.values[h]) / np.diff(hx)
        domain = (float(-s[-1]), float(-s[0]))
    else:
        domain = (math.nan, math.nan)
    return RateFunction(rs, I, fin, domain, correction)


def conjugate_back(rate: RateFunction, alphas) -> np.ndarray:
    """``e(alpha) = sup_r (-alpha r - I(r))`` over the finite part of ``rate``."""
    m = rate.finite
    out, _ = _neg_conjugate(rate.rs[m], rate.I_values[m], np.asarray(alphas, dtype=float))
    return out


def gc_residual(rate: RateFunction, sym_tol: float = 1e-9) -> float:
    """``max |I(-r) - I(r) - r|`` over grid pairs ``(r, -r)`` where both values are finite."""
    rs = rate.rs
    if not np.allclose(rs, -rs[::-1], atol=sym_tol * max(1.0, float(np.abs(rs).max()))):
        raise ValueError("r-grid must be symmetric about 0")
    Im, Ip = rate.I_values[::-1], rate.I_values
    both = rate.finite & rate.finite[::-1]
    if not np.any(both):
        raise ValueError("no pair (r, -r) with both values finite")
    return float(np.max(np.abs(Im[both] - Ip[both] - rs[both])))


def gc_verdict(rate: RateFunction, tolerance: float) -> dict:
    res = gc_residual(rate)
    return {"gc_residual": res, "tolerance": tolerance, "pass": bool(res <= tolerance)}


# -- Monte Carlo ------------------------------------------------------------

def _initial(tm: TransitionModel, u0, count: int, seed: int, label: str) -> np.ndarray:
    if u0 is None:
        return as_coeffs(sample(tm.noise, stream(seed, label, "init"), count))
    u = np.asarray(as_coeffs(u0), dtype=float)
    return np.broadcast_to(u, (count, u.size)).copy()


def _check_window(alphas, window, name):
    a = np.atleast_1d(np.asarray(alphas, dtype=float))
    if a.min() < window[0] - 1e-12 or a.max() > window[1] + 1e-12:
        raise ValueError(f"{name} alphas must lie in [{window[0]}, {window[1]}]")


def ensemble_flux(tm: TransitionModel, u0, k: int, ensemble: int, seed: int = 0, k0: int = 0):
    """Total fluxes ``sum sigma`` of ``ensemble`` independent chains over steps ``(k0, k]`` and ``(0, k0]``.

    With ``u0=None`` the starting points are drawn from the noise law.
    """
    if k < 1 or ensemble < 1:
        raise ValueError("k and ensemble must be >= 1")
    if not 0 <= k0 < k:
        raise ValueError("need 0 <= k0 < k")
    u = _initial(tm, u0, ensemble, seed, "naive")
    Su = tm.apply(u)
    tail = np.zeros(ensemble)
    head = np.zeros(ensemble)
    for n in range(1, k + 1):
        v = Su + as_coeffs(sample(tm.noise, stream(seed, "naive", n), ensemble))
        Sv = tm.apply(v)
        s = sigma_from_images(tm.noise, u, v, Su, Sv)
        if n <= k0:
            head += s
        else:
            tail += s
        u, Su = v, Sv
    return tail, head


def _log_mean_exp(x: np.ndarray) -> float:
    return float(logsumexp(x) - math.log(x.size))


def mc_scgf_naive(
    tm: TransitionModel,
    u0,
    alphas,
    k: int,
    ensemble: int,
    seed: int = 0,
    k0: int = 0,
    groups: int = 50,
    window=NAIVE_WINDOW,
) -> ScgfCurve:
    """Direct ensemble estimate of ``(1/k) log E exp(-alpha sum sigma)``.

    With ``k0 > 0`` the estimate is the increment
    ``(log E exp(-alpha S_k) - log E exp(-alpha S_{k0})) / (k - k0)``, which
    removes the boundary contribution that decays like ``1/k``.  Standard
    errors come from a grouped delete-one-group jackknife; ``flags`` marks
    alphas whose effective sample size is below 10% of the ensemble.
    """
    _check_window(alphas, window, "naive")
    alphas = np.asarray(alphas, dtype=float)
    tail, head = ensemble_flux(tm, u0, k, ensemble, seed, k0)
    total = tail + head
    G = max(2, min(groups, ensemble))
    labels = np.arange(ensemble) % G

    def est(mask, a):
        v = _log_mean_exp(-a * total[mask])
        if k0:
            v -= _log_mean_exp(-a * head[mask])
        return v / (k - k0)

    vals, ses, flags, ess_all = [], [], [], []
    everything = np.ones(ensemble, dtype=bool)
    for a in alphas:
        if a == 0.0:
            vals.append(0.0)
            ses.append(0.0)
            flags.append(False)
            ess_all.append(float(ensemble))
            continue
        lw = -a * total
        w = np.exp(lw - lw.max())
        ess = float(w.sum() ** 2 / np.sum(w * w))
        full = est(everything, a)
        if ess < 1.0 + 1e-9:
            vals.append(full)
            ses.append(math.inf)
            flags.append(True)
            ess_all.append(ess)
            continue
        loo = np.array([est(labels != g, a) for g in range(G)])
        se = math.sqrt((G - 1) / G * float(np.sum((loo - loo.mean()) ** 2)))
        vals.append(full)
        ses.append(se)
        flags.append(ess < 0.1 * ensemble)
        ess_all.append(ess)
    xi = total / k
    return ScgfCurve(
        alphas, np.array(vals), "mc_naive", np.array(ses), np.array(flags),
        meta={"k": k, "k0": k0, "ensemble": ensemble, "seed": seed, "ess": ess_all,
              "xi_min": float(xi.min()), "xi_max": float(xi.max()),
              "bracket_ok": [bool(e >= (-a * xi.max() if a > 0 else -a * xi.min()) - 1e-12)
                             for a, e in zip(alphas, vals)]},
    )


def _systematic_resample(rng: np.random.Generator, w: np.ndarray) -> np.ndarray:
    P = w.size
    c = np.cumsum(w)
    c /= c[-1]
    pos = (rng.random() + np.arange(P)) / P
    return np.minimum(np.searchsorted(c, pos, side="right"), P - 1)


def mc_scgf_cloning(
    tm: TransitionModel,
    u0,
    alpha: float,
    k: int,
    population: int,
    seed: int = 0,
    burn_in: int = 0,
    repetitions: int = 8,
    window=CLONING_WINDOW,
) -> dict:
    """Population-dynamics estimate of the tilted growth rate.

    Each walker is propagated one step, weighted by ``exp(-alpha sigma)`` and
    the population is resampled (systematic resampling) to fixed size; the
    estimate is the mean of ``log(mean weight)`` over steps after ``burn_in``.
    Independent repetitions give the standard error.
    """
    if population < 100:
        raise ValueError("population must be >= 100")
    if not 0 <= burn_in < k:
        raise ValueError("need 0 <= burn_in < k")
    _check_window(alpha, window, "cloning")
    if alpha == 0.0:
        return {"alpha": 0.0, "scgf": 0.0, "stderr": 0.0, "repetitions": [0.0] * repetitions}
    reps = []
    for r in range(repetitions):
        x = _initial(tm, u0, population, seed, f"cloning-{r}")
        Sx = tm.apply(x)
        acc = 0.0
        for n in range(1, k + 1):
            v = Sx + as_coeffs(sample(tm.noise, stream(seed, "cloning", r, n), population))
            Sv = tm.apply(v)
            lw = -alpha * sigma_from_images(tm.noise, x, v, Sx, Sv)
            lm = logsumexp(lw)
            if not np.isfinite(lm):
                raise PopulationCollapseError(f"all weights vanished at step {n} (repetition {r})")
            if n > burn_in:
                acc += float(lm - math.log(population))
            idx = _systematic_resample(stream(seed, "resample", r, n), np.exp(lw - lm))
            x, Sx = v[idx], Sv[idx]
        reps.append(acc / (k - burn_in))
    reps_a = np.array(reps)
    se = float(reps_a.std(ddof=1) / math.sqrt(repetitions)) if repetitions > 1 else math.inf
    return {"alpha": float(alpha), "scgf": float(reps_a.mean()), "stderr": se, "repetitions": reps}


def cloning_curve(tm, u0, alphas, k, population, seed=0, burn_in=0, repetitions=8) -> ScgfCurve:
    out = [mc_scgf_cloning(tm, u0, float(a), k, population, seed, burn_in, repetitions) for a in alphas]
    return ScgfCurve(np.asarray(alphas, dtype=float), np.array([o["scgf"] for o in out]), "mc_cloning",
                     np.array([o["stderr"] for o in out]),
                     meta={"k": k, "population": population, "burn_in": burn_in, "repetitions": repetitions})


def verdict_json(rate: RateFunction, tolerance: float) -> str:
    return json.dumps(gc_verdict(rate, tolerance))
