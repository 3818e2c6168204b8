"""Quadrature-exact entropy formalism for the scalar chain ``u' = S(u) + eta``.

All operators act on functions sampled at quadrature nodes ``x_i`` and
integrate against the noise law ``ell`` with the masses
``m_i = w_i * theta(x_i)``.  The transition density with respect to ``ell``
is ``K_ij = rho(x_i, x_j) = theta(x_j - S(x_i)) / theta(x_j)``.

Because ``ell``-inner products use the same masses on both sides, the
tilted operators satisfy the duality ``(P_a^k f, g) = (f, P_{1-a}^k g)``
exactly in floating point arithmetic, and the scaled cumulant generating
function inherits the symmetry ``e(a) = e(1 - a)`` at machine precision.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.special import logsumexp, ndtr

from .noise import GAUSSIAN, ComponentDensity
from .rng import stream

log = logging.getLogger(__name__)


class DomainTooSmallError(ValueError):
    def __init__(self, message: str, leakage: float):
        super().__init__(message)
        self.leakage = leakage


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, history=()):
        super().__init__(message)
        self.history = list(history)


class BoundaryConcentrationError(RuntimeError):
    def __init__(self, message: str, edge_mass: float):
        super().__init__(message)
        self.edge_mass = edge_mass


@dataclass(frozen=True)
class ScalarMap:
    """Deterministic part of the scalar chain.

    kinds: ``tanh`` (``scale * tanh(kappa u)``), ``linear`` (``q u``),
    ``constant`` (``c``), ``table`` (cubic spline through ``xs``/``ys``, held
    constant outside the table).
    """

    kind: str
    kappa: float = 1.0
    scale: float = 1.0
    q: float = 0.5
    c: float = 0.0
    xs: tuple = ()
    ys: tuple = ()

    def __post_init__(self):
        if self.kind not in ("tanh", "linear", "constant", "table"):
            raise ValueError(f"unknown map kind {self.kind!r}")
        if self.kind == "table":
            if len(self.xs) < 2 or len(self.xs) != len(self.ys):
                raise ValueError("table map needs matching xs/ys of length >= 2")
            object.__setattr__(self, "xs", tuple(float(x) for x in self.xs))
            object.__setattr__(self, "ys", tuple(float(y) for y in self.ys))

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        if self.kind == "tanh":
            return self.scale * np.tanh(self.kappa * u)
        if self.kind == "linear":
            return self.q * u
        if self.kind == "constant":
            return np.full_like(u, self.c)
        spline = CubicSpline(self.xs, self.ys)
        return spline(np.clip(u, self.xs[0], self.xs[-1]))

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.kind == "tanh":
            d.update(kappa=self.kappa, scale=self.scale)
        elif self.kind == "linear":
            d.update(q=self.q)
        elif self.kind == "constant":
            d.update(c=self.c)
        else:
            d.update(xs=list(self.xs), ys=list(self.ys))
        return d


def quadrature(L: float, n: int, rule: str = "gauss-legendre"):
    if rule == "gauss-legendre":
        x, w = np.polynomial.legendre.leggauss(n)
        return L * x, L * w
    if rule == "trapezoid":
        x = np.linspace(-L, L, n)
        w = np.full(n, x[1] - x[0])
        w[0] = w[-1] = 0.5 * (x[1] - x[0])
        return x, w
    raise ValueError(f"unknown quadrature rule {rule!r}")


@dataclass
class GridKernel:
    nodes: np.ndarray
    weights: np.ndarray
    log_density: np.ndarray
    log_theta: np.ndarray
    tau_q: float
    leakage: float
    L: float
    rule: str
    smap: ScalarMap
    density: ComponentDensity
    b: float
    row_defect: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.nodes.size

    @property
    def log_mass(self) -> np.ndarray:
        return np.log(self.weights) + self.log_theta

    @property
    def mass(self) -> np.ndarray:
        return np.exp(self.log_mass)

    @property
    def K(self) -> np.ndarray:
        return np.exp(self.log_density)

    def sigma(self) -> np.ndarray:
        """``sigma(x_i, x_j)`` at all node pairs."""
        return self.log_density - self.log_density.T

    def transfer(self, f: np.ndarray) -> np.ndarray:
        """``(R f)(x_j) = sum_i m_i f_i K_ij``."""
        return (self.mass * f) @ self.K

    def integrate(self, f: np.ndarray) -> float:
        return float(np.dot(self.mass, f))

    def summary(self) -> dict:
        return {"n": self.n, "L": self.L, "rule": self.rule, "b": self.b, "tau_q": self.tau_q,
                "leakage": self.leakage, "map": self.smap.to_dict(), "density": self.density.to_dict()}


def _tail_masses(density: ComponentDensity, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Mass of ``rho~`` outside ``[lo, hi]`` (elementwise)."""
    if density.family == "gaussian":
        return ndtr(lo) + ndtr(-hi)
    from scipy import integrate

    R = density.support_radius()
    out = np.empty(np.broadcast(lo, hi).shape)
    for i, (a, c) in enumerate(np.broadcast(lo, hi)):
        left = integrate.quad(density.pdf, -R, a, limit=200)[0] if a > -R else 0.0
        right = integrate.quad(density.pdf, c, R, limit=200)[0] if c < R else 0.0
        out.flat[i] = left + right
    return out


def build_kernel(
    smap: ScalarMap,
    density: ComponentDensity = GAUSSIAN,
    L: float = 10.0,
    n: int = 512,
    rule: str = "gauss-legendre",
    b: float = 1.0,
    max_leakage: float = 1e-10,
) -> GridKernel:
    """Discretise the scalar transition kernel on ``[-L, L]``.

    ``leakage`` is the probability, under the chain started from ``ell``, of
    leaving ``[-L, L]`` in one step plus the mass of ``ell`` outside it;
    exceeding ``max_leakage`` raises :class:`DomainTooSmallError`.
    """
    if n < 64:
        raise ValueError("need at least 64 nodes")
    x, w = quadrature(L, n, rule)
    Sx = smap(x)
    log_theta = density.logpdf(x / b) - math.log(b)
    log_joint = density.logpdf((x[None, :] - Sx[:, None]) / b) - math.log(b)
    log_density = log_joint - log_theta[None, :]
    rows = np.exp(logsumexp(log_joint + np.log(w)[None, :], axis=1))
    defect = rows - 1.0
    tau_q = float(np.max(np.abs(defect)))
    # one-step exit probability from each node, weighted by ell, plus ell's own tail
    exit_i = _tail_masses(density, (-L - Sx) / b, (L - Sx) / b)
    own_tail = float(_tail_masses(density, np.array([-L / b]), np.array([L / b]))[0])
    leakage = float(np.dot(w * np.exp(log_theta), exit_i)) + own_tail
    if leakage > max_leakage:
        raise DomainTooSmallError(f"boundary leakage {leakage:.3e} exceeds {max_leakage:.1e}; enlarge L", leakage)
    log.debug("kernel n=%d L=%g rule=%s tau_q=%.3e leakage=%.3e", n, L, rule, tau_q, leakage)
    return GridKernel(x, w, log_density, log_theta, tau_q, leakage, L, rule, smap, density, b, defect)


@dataclass
class ScalarState:
    """Density with respect to ``ell`` at the nodes."""

    f: np.ndarray
    iterations: int = 0
    residual: float = 0.0


def normalize(kern: GridKernel, f: np.ndarray) -> ScalarState:
    f = np.asarray(f, dtype=float)
    if np.any(f < 0):
        raise ValueError("density must be non-negative")
    return ScalarState(f / kern.integrate(f))


def stationary_density(kern: GridKernel, tol: float = 1e-13, max_iter: int = 10000) -> ScalarState:
    """Fixed point of the transfer operator by power iteration from ``f = 1``."""
    f = np.ones(kern.n) / kern.integrate(np.ones(kern.n))
    res = math.inf
    for it in range(1, max_iter + 1):
        g = kern.transfer(f)
        g /= kern.integrate(g)
        res = kern.integrate(np.abs(g - f))
        f = g
        if res < tol:
            return ScalarState(f, it, res)
    raise ConvergenceError(f"no convergence in {max_iter} iterations (L1 residual {res:.3e})", [res])


def _joint(kern: GridKernel, f: np.ndarray) -> np.ndarray:
    # law of (u_0, u_1) when u_0 has ell-density f, as node-pair masses
    m = kern.mass
    return (m * f)[:, None] * kern.K * m[None, :]


def ep_rate(kern: GridKernel, rho: ScalarState) -> float:
    """Stationary mean entropy production ``<sigma>``."""
    return float(np.sum(_joint(kern, rho.f) * kern.sigma()))


def detailed_balance_residual(kern: GridKernel, rho: ScalarState) -> float:
    """``max |P(u_i, v_j) - P(v_j, u_i)|`` over node pairs of the stationary joint masses."""
    J = _joint(kern, rho.f)
    return float(np.max(np.abs(J - J.T)))


def _xlogy_ratio(num, den):
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(num > 0, num * np.log(num / den), 0.0)
    return out


def ep_functional(kern: GridKernel, f: ScalarState, rho: ScalarState) -> dict:
    """Entropy production, flux, entropy change and boundary term for one step from ``f``.

    ``ep`` integrates ``-log((R f)(u1) rho(u1, u0) / (f(u0) rho(u0, u1)))``,
    ``flux`` integrates the boundary observable
    ``log(rho(u0) rho(u0, u1) / (rho(u1) rho(u1, u0)))`` and ``delta_S`` is the
    change of ``-Ent(lambda | mu)`` over the step.  ``balance_residual`` is
    ``delta_S - (ep - flux)``, zero up to the row defect of the kernel.
    """
    fv = f.f
    Rf = kern.transfer(fv)
    J = _joint(kern, fv)
    logK = kern.log_density
    rho_v = rho.f
    with np.errstate(divide="ignore", invalid="ignore"):
        log_f = np.log(fv)
        log_Rf = np.log(Rf)
        log_rho = np.log(rho_v)
        ep_int = -(log_Rf[None, :] + logK.T - log_f[:, None] - logK)
        flux_int = log_rho[:, None] + logK - log_rho[None, :] - logK.T
    mask = J > 0
    ep = float(np.sum(J[mask] * ep_int[mask]))
    flux = float(np.sum(J[mask] * flux_int[mask]))
    m = kern.mass
    S0 = -float(np.sum(m * _xlogy_ratio(fv, rho_v)))
    S1 = -float(np.sum(m * _xlogy_ratio(Rf, rho_v)))
    boundary = float(np.dot(m, (Rf - fv) * np.where(rho_v > 0, log_rho, 0.0)))
    jensen = -math.log(kern.integrate(kern.transfer(Rf)))
    delta_S = S1 - S0
    return {
        "ep": ep,
        "flux": flux,
        "delta_S": delta_S,
        "boundary": boundary,
        "jensen_bound": jensen,
        "balance_residual": delta_S - (ep - flux),
        "tau_q": kern.tau_q,
    }


def k_step_balance(kern: GridKernel, f: ScalarState, rho: ScalarState, k: int) -> dict:
    """Entropy balance over ``k`` steps.

    ``lhs = (S(lambda_k) - S(lambda_0)) / k`` against
    ``rhs = mean_n Ep(lambda_n) - E xi_k + boundary / k``.
    """
    fn = f.f
    m = kern.mass
    sig = kern.sigma()
    eps, mean_sigma = [], []
    log_rho = np.log(rho.f)
    S0 = -float(np.sum(m * _xlogy_ratio(fn, rho.f)))
    f0 = fn
    for _ in range(k):
        st = ScalarState(fn)
        eps.append(ep_functional(kern, st, rho)["ep"])
        mean_sigma.append(float(np.sum(_joint(kern, fn) * sig)))
        fn = kern.transfer(fn)
    Sk = -float(np.sum(m * _xlogy_ratio(fn, rho.f)))
    boundary = float(np.dot(m, (fn - f0) * log_rho))
    lhs = (Sk - S0) / k
    rhs = float(np.mean(eps)) - float(np.mean(mean_sigma)) + boundary / k
    return {"lhs": lhs, "rhs": rhs, "residual": lhs - rhs, "mean_ep": float(np.mean(eps)),
            "mean_xi": float(np.mean(mean_sigma)), "boundary": boundary}


def tilted_log_matrix(kern: GridKernel, alpha: float) -> np.ndarray:
    """``log T_ij`` of the tilted operator ``(P_a f)_i = sum_j T_ij f_j``."""
    logK = kern.log_density
    return kern.log_mass[None, :] + (1 - alpha) * logK + alpha * logK.T


@dataclass
class TiltedResult:
    alpha: float
    lam: float
    scgf: float
    right: np.ndarray
    left: np.ndarray
    iterations: int
    edge_mass: float


def _power(T: np.ndarray, v: np.ndarray, tol: float, max_iter: int, window: int = 10):
    hist = []
    for it in range(1, max_iter + 1):
        w = T @ v
        s = np.linalg.norm(w)
        if not s > 0 or not np.isfinite(s):
            raise ConvergenceError("power iteration produced a null or non-finite vector", hist)
        # Rayleigh-type estimate on normalised iterates
        lam = float(np.dot(v, w) / np.dot(v, v))
        v = w / s
        hist.append(lam)
        if len(hist) > window:
            ref = hist[-1 - window]
            if abs(lam - ref) <= tol * abs(lam):
                return lam, v, it, hist
    raise ConvergenceError(f"power iteration stagnated after {max_iter} iterations", hist[-50:])


def tilted_eigenvalue(
    kern: GridKernel,
    alpha: float,
    tol: float = 1e-12,
    max_iter: int = 200000,
    init: np.ndarray | None = None,
    edge_fraction: float = 0.05,
    max_edge_mass: float = 1e-6,
) -> TiltedResult:
    """Leading eigenvalue of the discretised tilted operator.

    The matrix is rescaled by ``exp(max log T)`` before iterating so every
    entry is at most one.  The left eigenvector is obtained from the dual
    operator ``P_{1-a}`` (the adjoint in the ``ell`` inner product).  When the
    eigen-measure ``m * left * right`` puts more than ``max_edge_mass`` on the
    outer ``edge_fraction`` of the domain the result is rejected.
    """
    logT = tilted_log_matrix(kern, alpha)
    shift = float(logT.max())
    T = np.exp(logT - shift)
    v0 = np.ones(kern.n) if init is None else np.abs(init) + 1e-300
    lam, r, it, _ = _power(T, v0 / np.linalg.norm(v0), tol, max_iter)
    logTd = tilted_log_matrix(kern, 1 - alpha)
    shift_d = float(logTd.max())
    lam_d, l, it_d, _ = _power(np.exp(logTd - shift_d), np.ones(kern.n) / math.sqrt(kern.n), tol, max_iter)
    m = kern.mass
    prod = m * np.abs(l) * np.abs(r)
    prod /= prod.sum()
    edge = float(prod[np.abs(kern.nodes) > (1 - edge_fraction) * kern.L].sum())
    if edge > max_edge_mass:
        raise BoundaryConcentrationError(
            f"tilted eigen-measure at alpha={alpha} has {edge:.2e} mass near the boundary", edge)
    log_lam = math.log(lam) + shift
    return TiltedResult(alpha, math.exp(log_lam), log_lam, np.abs(r), np.abs(l), it + it_d, edge)


def duality_residual(kern: GridKernel, alpha: float, trials: int = 10, rng_seed: int = 0, ks=(1, 2, 3)) -> float:
    """Largest relative defect of ``(P_a^k f, g)_ell = (f, P_{1-a}^k g)_ell`` over random ``f, g >= 0``."""
    Ta = np.exp(tilted_log_matrix(kern, alpha))
    Tb = np.exp(tilted_log_matrix(kern, 1 - alpha))
    m = kern.mass
    rng = stream(rng_seed, "duality")
    worst = 0.0
    for _ in range(trials):
        f = rng.random(kern.n)
        g = rng.random(kern.n)
        pf, pg = f, g
        for k in range(1, max(ks) + 1):
            pf = Ta @ pf
            pg = Tb @ pg
            if k in ks:
                lhs = float(np.dot(m, pf * g))
                rhs = float(np.dot(m, f * pg))
                worst = max(worst, abs(lhs - rhs) / max(abs(lhs), abs(rhs)))
    return worst


def ks_entropies(kern: GridKernel, rho: ScalarState) -> dict:
    """Entropy rates of the stationary chain and of its time reversal.

    ``h_plus = -E log rho(u0, u1)`` and ``h_minus = -E log rho(u1, u0)``
    under the stationary pair law (densities relative to ``ell``), so that
    ``h_minus - h_plus`` is the mean entropy production.
    """
    J = _joint(kern, rho.f)
    logK = kern.log_density
    h_plus = -float(np.sum(J * logK))
    h_minus = -float(np.sum(J * logK.T))
    mean_sigma = ep_rate(kern, rho)
    return {"h_plus": h_plus, "h_minus": h_minus, "sigma_mean": mean_sigma,
            "identity_residual": (h_minus - h_plus) - mean_sigma}
