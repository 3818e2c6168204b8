"""Command line entry point ``gclab <simulate|oracle|scgf|rate|verify>``."""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import chain, oracle, rate
from .burgers import FlowConfig
from .config import ConfigError, RunConfig, load_config, parse_config
from .noise import ComponentDensity, NoiseModel, log_shift_density, log_shift_density_gaussian
from .rng import stream
from .spectral_field import SpectralField, WeightSequence
from .transition import TransitionModel, sigma, sigma_gaussian_closed

log = logging.getLogger("gclab")

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3
NUMERIC_ERRORS = (
    FloatingPointError,
    oracle.ConvergenceError,
    oracle.DomainTooSmallError,
    oracle.BoundaryConcentrationError,
    rate.PopulationCollapseError,
    rate.NonConvexError,
    chain.InsufficientDataError,
)


# -- model construction ---------------------------------------------------

def component(cfg: RunConfig) -> ComponentDensity:
    n = cfg.noise
    if n.family == "gaussian":
        return ComponentDensity("gaussian")
    return ComponentDensity("genexp", a=n.a, beta=n.beta, q_coeffs=tuple(n.q_coeffs))


def scalar_map(cfg: RunConfig) -> oracle.ScalarMap:
    m = cfg.model.scalar.map
    return oracle.ScalarMap(m.kind, kappa=m.kappa, scale=m.scale, q=m.q, c=m.c, xs=tuple(m.xs), ys=tuple(m.ys))


def forcing(cfg: RunConfig) -> SpectralField:
    bm = cfg.model.burgers
    h = SpectralField.zeros(bm.N)
    for f in bm.h_spec:
        if f.mode > bm.N:
            raise ConfigError(f"model.burgers.h_spec: mode {f.mode} exceeds N={bm.N}")
        h = h + SpectralField.unit_mode(bm.N, f.mode, f.kind, f.amplitude)
    return h


def transition_model(cfg: RunConfig) -> TransitionModel:
    if cfg.model.burgers is not None:
        bm = cfg.model.burgers
        noise = NoiseModel(WeightSequence.power_law(bm.N, cfg.noise.b0, cfg.noise.r), component(cfg))
        return TransitionModel(FlowConfig(bm.nu, forcing(cfg), bm.substeps, bm.dealias), noise)
    noise = NoiseModel(WeightSequence(np.array([cfg.noise.b0])), component(cfg))
    return TransitionModel(scalar_map(cfg), noise)


def kernel(cfg: RunConfig) -> oracle.GridKernel:
    if cfg.model.scalar is None:
        raise ConfigError("model.scalar: this command needs a scalar model")
    g = cfg.model.scalar.grid
    return oracle.build_kernel(scalar_map(cfg), component(cfg), g.L, g.n, g.rule, b=cfg.noise.b0)


def initial_state(cfg: RunConfig, tm: TransitionModel) -> np.ndarray:
    u0 = np.zeros(tm.dim)
    if cfg.run.u0_norm > 0:
        g = stream(cfg.run.seed, "u0").standard_normal(tm.dim)
        u0 = cfg.run.u0_norm * g / np.linalg.norm(g)
    return u0


# -- output ---------------------------------------------------------------

def out_dir(cfg: RunConfig, command: str, base: str | None) -> Path:
    tag = cfg.output.tag or chain.config_digest(cfg.model_dump(mode="json"))
    d = Path(base or cfg.output.dir) / command / tag
    d.mkdir(parents=True, exist_ok=True)
    (d / "config.resolved").write_text(cfg.resolved_yaml())
    return d


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else ("inf" if x > 0 else "-inf" if x < 0 else "nan")
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    return x


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def _plot(path: Path, x, y, xlabel: str, ylabel: str) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "gclab"
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(x, y, lw=1.2)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


# -- commands -------------------------------------------------------------

def cmd_simulate(cfg: RunConfig, base=None) -> int:
    tm = transition_model(cfg)
    d = out_dir(cfg, "simulate", base)
    u0 = initial_state(cfg, tm)
    digest = chain.config_digest(cfg.model_dump(mode="json"))
    ests, seeds = [], []
    for cid in range(cfg.run.ensemble):
        traj = chain.simulate(tm, u0, cfg.run.k, cfg.run.seed, cfg.run.thin, cid, digest)
        seeds.append([cfg.run.seed, cid])
        if "csv" in cfg.output.formats:
            (d / f"trajectory_{cid}.csv").write_text(traj.dump_csv())
        try:
            ests.append(chain.estimate_ep(traj, cfg.run.burn_in, cfg.run.block))
        except chain.InsufficientDataError as exc:
            log.warning("chain %d: %s", cid, exc)
    summary = {"seeds": seeds, "config_hash": digest}
    if ests:
        means = np.array([e.mean for e in ests])
        ses = np.array([e.stderr for e in ests])
        m = float(means.mean())
        se = float(np.sqrt(np.sum(ses**2)) / len(ests))
        summary.update(ep_mean=m, ep_stderr=se, ci95=[m - 1.96 * se, m + 1.96 * se],
                       chains=[e.to_dict() for e in ests])
    drift = chain.lyapunov_drift_probe(tm, 200, [5.0, 10.0, 20.0, 40.0], cfg.run.seed)
    summary.update(q_hat=drift["q_hat"], M_hat=drift["M_hat"])
    write_json(d / "summary.json", summary)
    log.info("simulate -> %s", d)
    return EXIT_OK


def _oracle_report(cfg: RunConfig):
    kern = kernel(cfg)
    rho = oracle.stationary_density(kern)
    ks = oracle.ks_entropies(kern, rho)
    dual = max(oracle.duality_residual(kern, a, rng_seed=cfg.run.seed) for a in cfg.verify.duality_alphas)
    report = {
        "ep": oracle.ep_rate(kern, rho),
        "h_plus": ks["h_plus"],
        "h_minus": ks["h_minus"],
        "db_residual": oracle.detailed_balance_residual(kern, rho),
        "duality_residual": dual,
        "tau_q": kern.tau_q,
        "leakage": kern.leakage,
        "iterations": rho.iterations,
    }
    return kern, rho, report


def cmd_oracle(cfg: RunConfig, base=None) -> int:
    kern, rho, report = _oracle_report(cfg)
    d = out_dir(cfg, "oracle", base)
    lines = ["node,rho"] + [f"{x!r},{f!r}" for x, f in zip(kern.nodes.tolist(), rho.f.tolist())]
    (d / "rho.csv").write_text("\n".join(lines) + "\n")
    write_json(d / "kernel.json", kern.summary())
    write_json(d / "summary.json", report)
    return EXIT_OK


def _scgf_curve(cfg: RunConfig) -> rate.ScgfCurve:
    s = cfg.scgf
    if s is None:
        raise ConfigError("scgf: section required for this command")
    alphas = s.alpha_grid()
    if s.method == "oracle":
        return rate.oracle_curve(kernel(cfg), alphas)
    tm = transition_model(cfg)
    u0 = initial_state(cfg, tm) if cfg.run.u0_norm > 0 else None
    if s.method == "naive":
        return rate.mc_scgf_naive(tm, u0, alphas, s.k, s.ensemble, cfg.run.seed, s.k0)
    return rate.cloning_curve(tm, u0, alphas, s.k, s.population, cfg.run.seed, s.burn_in, s.repetitions)


def _r_grid(cfg: RunConfig, curve: rate.ScgfCurve) -> np.ndarray:
    s = cfg.scgf
    if s.r_max is not None:
        r_max = s.r_max
    else:
        # slopes of the curve bound the finite domain of I
        sl = np.diff(curve.values) / np.diff(curve.alphas) if curve.alphas.size > 1 else np.zeros(1)
        r_max = max(1.0, float(np.max(np.abs(sl))))
    n = int(math.ceil(r_max / s.r_step))
    half = s.r_step * np.arange(1, n + 1)
    return np.concatenate((-half[::-1], [0.0], half))


def cmd_scgf(cfg: RunConfig, base=None) -> int:
    curve = _scgf_curve(cfg)
    d = out_dir(cfg, "scgf", base)
    (d / "scgf.csv").write_text(curve.to_csv())
    sym = curve.symmetry_defect()
    summary = {"provenance": curve.provenance, "n": int(curve.alphas.size),
               "symmetry_defect": float(np.nanmax(sym)) if np.any(np.isfinite(sym)) else None,
               "flags": curve.flags.tolist(), "meta": curve.meta}
    write_json(d / "summary.json", summary)
    if cfg.output.plot:
        _plot(d / "scgf.svg", curve.alphas, curve.values, "alpha", "e(alpha)")
    return EXIT_OK


def cmd_rate(cfg: RunConfig, base=None) -> int:
    curve = _scgf_curve(cfg)
    rf = rate.legendre_transform(curve, _r_grid(cfg, curve))
    verdict = rate.gc_verdict(rf, cfg.scgf.gc_tolerance)
    d = out_dir(cfg, "rate", base)
    (d / "scgf.csv").write_text(curve.to_csv())
    (d / "rate.csv").write_text(rf.to_csv())
    write_json(d / "verdict.json", verdict)
    write_json(d / "summary.json", {**verdict, "domain": list(rf.domain), "minimizer": rf.minimizer,
                                    "hull_correction": rf.hull_correction, "provenance": curve.provenance})
    if cfg.output.plot:
        m = rf.finite
        _plot(d / "rate.svg", rf.rs[m], rf.I_values[m], "r", "I(r)")
    return EXIT_OK if verdict["pass"] else EXIT_CHECK


def _check(checks: list, name: str, value, tolerance, ok: bool) -> None:
    checks.append({"name": name, "value": value, "tolerance": tolerance, "pass": bool(ok)})


def _verify_scalar(cfg: RunConfig, checks: list) -> None:
    kern, rho, rep = _oracle_report(cfg)
    tq = kern.tau_q
    floor = tq + 1e-12
    _check(checks, "leakage", kern.leakage, 1e-10, kern.leakage <= 1e-10)
    _check(checks, "perron_positive", float(rho.f.min()), 0.0, rho.f.min() > 0)
    _check(checks, "ep_nonnegative", rep["ep"], -tq, rep["ep"] >= -tq)
    ks = oracle.ks_entropies(kern, rho)
    _check(checks, "ks_identity", abs(ks["identity_residual"]), floor, abs(ks["identity_residual"]) <= floor)
    _check(checks, "duality", rep["duality_residual"], 1e-10, rep["duality_residual"] <= 1e-10)
    m = cfg.model.scalar.map
    reversible = cfg.verify.expect_reversible == "yes" or (
        cfg.verify.expect_reversible == "auto"
        and (m.kind == "constant" or (m.kind == "linear" and cfg.noise.family == "gaussian"))
    )
    if reversible:
        _check(checks, "ep_zero", abs(rep["ep"]), 1e-8, abs(rep["ep"]) <= 1e-8)
        _check(checks, "detailed_balance", rep["db_residual"], 1e-8, rep["db_residual"] <= 1e-8)
        dh = abs(rep["h_minus"] - rep["h_plus"])
        _check(checks, "h_minus_eq_h_plus", dh, 1e-8, dh <= 1e-8)
    else:
        _check(checks, "ep_positive", rep["ep"], 10 * tq, rep["ep"] > 10 * tq)
    rng = stream(cfg.run.seed, "verify-densities")
    worst = 0.0
    for _ in range(5):
        f = oracle.normalize(kern, rng.random(kern.n) * np.exp(-rng.random() * kern.nodes**2))
        worst = max(worst, abs(oracle.ep_functional(kern, f, rho)["balance_residual"]))
    _check(checks, "entropy_balance", worst, floor, worst <= floor)
    stat = oracle.ep_functional(kern, rho, rho)
    _check(checks, "stationary_delta_S", abs(stat["delta_S"]), floor, abs(stat["delta_S"]) <= floor)
    s = cfg.scgf
    sym_alphas = np.round(np.arange(-1.0, 2.0 + 1e-9, 0.05), 12)
    sym = rate.oracle_curve(kern, sym_alphas).symmetry_defect()
    _check(checks, "scgf_symmetry", float(np.nanmax(sym)), 1e-7, np.nanmax(sym) <= 1e-7)
    if s is not None and s.method == "oracle":
        curve = rate.oracle_curve(kern, s.alpha_grid())
        tol = s.gc_tolerance
    else:
        curve = rate.oracle_curve(kern, np.round(np.arange(-1.0, 2.0 + 1e-9, 0.01), 12))
        tol = 1e-5
    rf = rate.legendre_transform(curve, np.round(np.arange(-1.0, 1.0 + 5e-4, 0.001), 12))
    gc = rate.gc_residual(rf)
    _check(checks, "gc_residual", gc, tol, gc <= tol)


def _verify_burgers(cfg: RunConfig, checks: list) -> None:
    tm = transition_model(cfg)
    n = cfg.verify.samples
    rng = stream(cfg.run.seed, "verify")
    u = rng.standard_normal((n, tm.dim)) * 3
    v = rng.standard_normal((n, tm.dim)) * 3
    Su, Sv = tm.apply(u), tm.apply(v)
    s_uv = sigma(tm, u, v, Su, Sv)
    s_vu = sigma(tm, v, u, Sv, Su)
    anti = float(np.max(np.abs(s_uv + s_vu)))
    _check(checks, "sigma_antisymmetry", anti, 1e-10, anti <= 1e-10)
    if tm.noise.is_gaussian:
        closed = sigma_gaussian_closed(tm.noise, u, v, Su, Sv)
        err = float(np.max(np.abs(closed - s_uv)))
        _check(checks, "sigma_closed_form", err, 1e-9, err <= 1e-9)
        lc = log_shift_density_gaussian(tm.noise, Su, v)
        err = float(np.max(np.abs(lc - log_shift_density(tm.noise, Su, v))))
        _check(checks, "log_shift_closed_form", err, 1e-9, err <= 1e-9)
    drift = chain.lyapunov_drift_probe(tm, n, [5.0, 10.0, 20.0, 40.0], cfg.run.seed, direction="mode1")
    q = math.exp(-cfg.model.burgers.nu)
    _check(checks, "drift_q_hat", drift["q_hat"], q + 0.05, drift["q_hat"] <= q + 0.05)
    traj = chain.simulate(tm, initial_state(cfg, tm), cfg.run.k, cfg.run.seed, cfg.run.thin)
    est = chain.estimate_ep(traj, cfg.run.burn_in, cfg.run.block)
    _check(checks, "ep_ci_above_zero", est.ci95[0], 0.0, est.ci95[0] > 0)


def cmd_verify(cfg: RunConfig, base=None) -> int:
    checks: list = []
    if cfg.model.scalar is not None:
        _verify_scalar(cfg, checks)
    else:
        _verify_burgers(cfg, checks)
    failures = [c["name"] for c in checks if not c["pass"]]
    d = out_dir(cfg, "verify", base)
    write_json(d / "summary.json", {"pass": not failures, "failures": failures, "checks": checks})
    for c in checks:
        log.info("%-24s %s value=%s tol=%s", c["name"], "PASS" if c["pass"] else "FAIL", c["value"], c["tolerance"])
    return EXIT_OK if not failures else EXIT_CHECK


COMMANDS = {"simulate": cmd_simulate, "oracle": cmd_oracle, "scgf": cmd_scgf, "rate": cmd_rate, "verify": cmd_verify}


def main(argv=None) -> int:
    p = argparse.ArgumentParser(prog="gclab", description="Entropy production and fluctuation-relation laboratory.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None, help="output root (overrides output.dir)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("-v", "--verbose", action="store_true")
    args = p.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None or args.threads is not None:
            data = cfg.model_dump()
            if args.seed is not None:
                data["run"]["seed"] = args.seed
            if args.threads is not None:
                data["threads"] = args.threads
            cfg = parse_config(data)
        if cfg.threads > 0:
            import numba

            numba.set_num_threads(min(cfg.threads, numba.config.NUMBA_NUM_THREADS))
        return COMMANDS[args.command](cfg, args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NUMERIC_ERRORS as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
