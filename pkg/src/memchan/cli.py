"""Command-line front end.

    memchan simulate --config run.json [--output report.json] [--seed N] [--threads T]

Subcommands: simulate, capacity, fano, verify-appendix, sweep.  Exit
codes: 0 success, 1 a check failed, 2 configuration error, 3 a resource
cap was hit.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
import time
import warnings
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from .capacity import OptimizerOptions, maximize_holevo
from .config import TASKS, RunConfig, build_channel, build_input, parse_config, to_jsonable
from .core import (
    DensityMatrix, fidelity_with_pure, partial_trace, random_density_matrix,
    random_pure_state, trace_distance, von_neumann_entropy,
)
from .errors import ConfigError, ResourceCapError
from .markov import (
    MarkovNoiseSpec, build_unitary_model, equivalence_check, markov_channel_direct,
    n_block_approximation_error, steady_state, verify_appendix_A1, verify_appendix_A2,
)
from .memory import apply_n, memoryless_probe
from .metrics import as_memory_channel, ce_trend, info_report, rate_sandwich
from .zoo import recoverable_fraction

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_CAP = 0, 1, 2, 3
CHECK_TOL = 1e-9


def _check(name, passed, residual=None, tol=None, **extra):
    out = {"name": name, "status": "pass" if passed else "fail"}
    if residual is not None:
        out["residual"] = float(residual)
    if tol is not None:
        out["tol"] = tol
    out.update(extra)
    return out


def _skip(name, reason):
    return {"name": name, "status": f"skipped: {reason}"}


def cmd_simulate(cfg: RunConfig, threads=1):
    ch = build_channel(cfg.channel)
    rng = np.random.default_rng(cfg.seed)
    d = ch.d
    n = cfg.n
    rho, psi = build_input(cfg.input, d, n, rng)
    res = {"d": d, "n": n}
    flags = []
    if isinstance(ch, MarkovNoiseSpec) and cfg.route == "direct":
        out = markov_channel_direct(ch, rho, n)
        res["route"] = "direct"
    else:
        mc = as_memory_channel(ch)
        flags.extend(mc.flags)
        jo = apply_n(mc, rho, n)
        out = jo.rho_Q
        res["route"] = "memory-model"
        res["memory_entropy_bits"] = von_neumann_entropy(jo.rho_M)
        res["memory_eigenvalues"] = jo.rho_M.eigenvalues()
        frac = recoverable_fraction(mc, n, seed=cfg.seed)
        res["recoverable_fraction"] = str(frac)
        res["recoverable_fraction_value"] = float(frac)
    res["output_eigenvalues"] = out.eigenvalues()
    res["output_entropy_bits"] = von_neumann_entropy(out)
    res["input_entropy_bits"] = von_neumann_entropy(rho)
    res["trace_distance_to_input"] = trace_distance(out, rho)
    res["marginal_trace_distances"] = [
        trace_distance(partial_trace(out, [i]), partial_trace(rho, [i])) for i in range(n)]
    if psi is not None:
        res["fidelity_to_input"] = fidelity_with_pure(psi, out)
    return res, [], flags


def _optimizer_options(cfg, threads):
    try:
        return OptimizerOptions(**cfg.optimizer, seed=cfg.seed, threads=threads)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc), field="optimizer") from None


def _capacity_point(ch, cfg, threads):
    opts = _optimizer_options(cfg, threads)
    best = maximize_holevo(ch, cfg.n, opts)
    rs = rate_sandwich(ch, cfg.n, best.ensemble)
    res = {
        "holevo_bits_per_use": best.value,
        "restart_values": best.restart_values,
        "rate_lower": rs.lower,
        "rate_upper": rs.upper,
        "with_memory_rate": rs.with_memory_rate,
        "ensemble_weights": best.ensemble.weights,
    }
    checks = [_check("rate-sandwich-order", rs.ordered)]
    return res, checks, list(best.flags)


def cmd_capacity(cfg: RunConfig, threads=1):
    if cfg.sweep is not None:
        return cmd_sweep(cfg, threads)
    ch = build_channel(cfg.channel)
    res, checks, flags = _capacity_point(ch, cfg, threads)
    if cfg.product_search:
        prod = maximize_holevo(ch, cfg.n, _optimizer_options(cfg, threads), product=True)
        res["product_holevo_bits_per_use"] = prod.value
        flags.extend(f"product:{f}" for f in prod.flags)
    if cfg.ce_trend:
        res["ce_trend"] = dict(zip(map(str, cfg.ce_trend), ce_trend(ch, cfg.ce_trend)))
    return res, checks, flags


def cmd_sweep(cfg: RunConfig, threads=1):
    values = [float(v) for v in cfg.sweep["values"]]

    def point(mu):
        ch = build_channel(cfg.channel, mu=mu)
        r, c, f = _capacity_point(ch, cfg, 1)
        return mu, r, c, f

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            points = list(pool.map(point, values))
    else:
        points = [point(v) for v in values]
    rows, checks, flags = [], [], []
    for mu, r, c, f in points:
        rows.append({"mu": mu, "holevo_bits_per_use": r["holevo_bits_per_use"],
                     "rate_lower": r["rate_lower"], "rate_upper": r["rate_upper"],
                     "with_memory_rate": r["with_memory_rate"]})
        checks.extend(dict(x, name=f"{x['name']}[mu={mu}]") for x in c)
        flags.extend(f"mu={mu}:{x}" for x in f)
    return {"sweep_param": "mu", "rows": rows}, checks, flags


def write_sweep_csv(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        for row in rows:
            w.writerow({k: repr(float(v)) for k, v in row.items()})


def fano_suite(ch, n, trials, rng):
    """Entropy exchange against the finite-memory Fano bound on random inputs."""
    mc = as_memory_channel(ch)
    D = mc.d ** n
    worst = -np.inf
    violations = 0
    for t in range(trials):
        rank = 1 + t % D
        rho = random_density_matrix(D, rng, rank=rank, dims=[mc.d] * n)
        rep = info_report(mc, rho, n)
        gap = rep.S_E_bits - rep.fano_bound_bits
        worst = max(worst, gap)
        violations += gap > CHECK_TOL
    return worst, violations


def cmd_fano(cfg: RunConfig, threads=1):
    ch = build_channel(cfg.channel)
    rng = np.random.default_rng(cfg.seed)
    worst, bad = fano_suite(ch, cfg.n, cfg.trials, rng)
    res = {"instances": cfg.trials, "max_excess_bits": worst, "violations": bad}
    return res, [_check("fano-inequality", bad == 0, worst, CHECK_TOL)], []


def cmd_verify(cfg: RunConfig, threads=1):
    ch = build_channel(cfg.channel)
    n = cfg.n
    checks, res, flags = [], {}, []
    trials = cfg.trials
    if isinstance(ch, MarkovNoiseSpec):
        direct = None
        if cfg.fault_injection == "transpose-gamma-direct":
            direct = _tampered_direct(ch)
            flags.append("fault-injection:transpose-gamma-direct")
        try:
            dist = equivalence_check(ch, n, trials, seed=cfg.seed, direct=direct)
            checks.append(_check("equivalence", dist <= CHECK_TOL, dist, CHECK_TOL))
        except ValueError as exc:
            # a corrupted construction can stop producing valid states at all
            checks.append(_check("equivalence", False, tol=CHECK_TOL, error=str(exc)))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            ss = steady_state(ch.gamma, ch.p0)
        res["steady_state"] = ss.distribution
        res["regular"] = ss.regular
        stationary = bool(np.abs(ch.gamma @ ch.p0 - ch.p0).sum() <= 1e-12)
        res["n_block_residual"] = {
            f"n=1,l={n}": n_block_approximation_error(ch, 1, n, seed=cfg.seed)}
        exact = n_block_approximation_error(ch, n, n, seed=cfg.seed)
        res["n_block_residual"][f"n={n},l={n}"] = exact
        if stationary:
            checks.append(_check("n-block-exact-at-steady-state", exact <= CHECK_TOL, exact, CHECK_TOL))
        else:
            checks.append(_skip("n-block-exact-at-steady-state", "p0 is not stationary"))
        if ch.unitary_kraus:
            a1 = verify_appendix_A1(ch, trials, tol=1e-12, seed=cfg.seed)
            checks.append(_check("appendix-A1", a1.passed, a1.residual, 1e-12))
            rng = np.random.default_rng(cfg.seed)
            d = ch.d
            inputs = [DensityMatrix.basis(0, [d] * n),
                      random_pure_state(d ** n, rng, [d] * n).density(),
                      random_density_matrix(d ** n, rng, dims=[d] * n)]
            a2 = verify_appendix_A2(ch, inputs, n, tol=1e-11)
            checks.append(_check("appendix-A2", a2.passed, a2.residual, 1e-11))
        else:
            checks.append(_skip("appendix-A1", "precondition"))
            checks.append(_skip("appendix-A2", "precondition"))
        flags.extend(build_unitary_model(ch).flags)
    else:
        checks.append(_skip("equivalence", "not a Markov noise channel"))
    mc = as_memory_channel(ch)
    res["memoryless_probe"] = memoryless_probe(mc, trials=5, seed=cfg.seed)
    worst, bad = fano_suite(ch, n, trials, np.random.default_rng(cfg.seed))
    checks.append(_check("fano-inequality", bad == 0, worst, CHECK_TOL))
    return res, checks, flags


def _tampered_direct(spec):
    """Direct evaluator run on a copy of ``spec`` with its transition matrix transposed.

    The copy bypasses validation, so the equivalence check has to catch it.
    """
    fake = object.__new__(MarkovNoiseSpec)
    object.__setattr__(fake, "kraus", spec.kraus)
    object.__setattr__(fake, "gamma", np.ascontiguousarray(spec.gamma.T))
    object.__setattr__(fake, "p0", spec.p0)
    return lambda _spec, rho, n: markov_channel_direct(fake, rho, n)


COMMANDS = {
    "simulate": cmd_simulate,
    "capacity": cmd_capacity,
    "fano": cmd_fano,
    "verify-appendix": cmd_verify,
    "sweep": cmd_sweep,
}


def run(cfg: RunConfig, threads=1):
    """Execute a parsed config; returns (report dict, exit code)."""
    t0 = time.perf_counter()
    report = {"version": __version__, "command": cfg.task, "config": cfg.resolved()}
    try:
        res, checks, flags = COMMANDS[cfg.task](cfg, threads)
        code = EXIT_CHECK if any(c["status"] == "fail" for c in checks) else EXIT_OK
    except ResourceCapError as exc:
        res, checks, flags = {}, [], [f"resource-cap: {exc}"]
        code = EXIT_CAP
    report.update(results=res, checks=checks, flags=flags, exit_status=code)
    report["wall_clock_s"] = time.perf_counter() - t0
    return to_jsonable(report), code


def build_parser():
    p = argparse.ArgumentParser(prog="memchan", description=__doc__.splitlines()[0] if __doc__ else None)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in TASKS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="JSON run configuration")
        sp.add_argument("--output", help="report path (default: config output, else stdout)")
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--threads", type=int, default=1)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        with open(args.config) as fh:
            text = fh.read()
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = parse_config(text, task=args.command)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("seed must be nonnegative", field="--seed")
            cfg.seed = args.seed
        if args.output:
            cfg.output = args.output
        if args.threads < 1:
            raise ConfigError("threads must be positive", field="--threads")
        report, code = run(cfg, args.threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    text = json.dumps(report, indent=2)
    if cfg.output:
        with open(cfg.output, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    rows = report["results"].get("rows") if isinstance(report.get("results"), dict) else None
    if rows:
        csv_path = cfg.csv or (cfg.output.rsplit(".", 1)[0] + ".csv" if cfg.output else None)
        if csv_path:
            write_sweep_csv(rows, csv_path)
    return code


if __name__ == "__main__":
    sys.exit(main())
