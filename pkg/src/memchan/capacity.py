"""Random-restart search for the largest Holevo quantity of an n-use channel.

Ensembles are pure states parametrised by unnormalised complex vectors,
with weights given by a softmax over real logits.  Each restart does
rounds of block-coordinate Nelder-Mead (one ensemble member at a time,
its state and weight logit together) and stops once a round gains less than the
convergence tolerance.  The result is a lower bound on the maximum.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import minimize

from .core import EIG_CUTOFF, DensityMatrix, kron_all
from .memory import channel_choi
from .metrics import Ensemble, as_memory_channel


@dataclass
class OptimizerOptions:
    restarts: int = 4
    ensemble_size: Optional[int] = None  # default d^(2n)
    max_iters: int = 60  # coordinate rounds per restart
    convergence_tol: float = 1e-9
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        for name in ("restarts", "max_iters", "threads"):
            if getattr(self, name) < 1:
                raise ValueError(f"optimizer option {name} must be positive")
        if self.ensemble_size is not None and self.ensemble_size < 1:
            raise ValueError("optimizer option ensemble_size must be positive")
        if self.convergence_tol <= 0:
            raise ValueError("optimizer option convergence_tol must be positive")


@dataclass
class HolevoResult:
    value: float
    ensemble: Ensemble
    restart_values: list
    flags: list = field(default_factory=list)


class _Objective:
    """Holevo quantity of a pure-state ensemble with cached member outputs."""

    def __init__(self, J, D, d, n, K, product):
        self.Jmat = J.reshape(D * D, D * D)
        self.D, self.d, self.n, self.K = D, d, n, K
        self.product = product
        self.vec_len = 2 * (d * n if product else D)

    def state(self, x):
        if self.product:
            parts = []
            for s in range(self.n):
                seg = x[2 * self.d * s: 2 * self.d * (s + 1)]
                v = seg[:self.d] + 1j * seg[self.d:]
                parts.append(v / (np.linalg.norm(v) or 1.0))
            return kron_all(parts)
        v = x[:self.D] + 1j * x[self.D:]
        return v / (np.linalg.norm(v) or 1.0)

    def output(self, x):
        psi = self.state(x)
        return (np.outer(psi, psi.conj()).ravel() @ self.Jmat).reshape(self.D, self.D)

    def chi(self, weights, outs, ents):
        avg = (weights @ outs.reshape(self.K, -1)).reshape(self.D, self.D)
        return _entropy(avg) - float(weights @ ents)


def _entropy(mat):
    # outputs are Hermitian by construction; eigvalsh reads one triangle
    lam = np.linalg.eigvalsh(mat)
    lam = lam[lam > EIG_CUTOFF]
    return float(-np.dot(lam, np.log2(lam)))


def _softmax(z):
    e = np.exp(z - z.max())
    return e / e.sum()


def _run_restart(obj: _Objective, opts: OptimizerOptions, idx: int):
    rng = np.random.default_rng([opts.seed, idx])
    K, L = obj.K, obj.vec_len
    vecs = rng.normal(size=(K, L))
    logits = np.zeros(K)
    outs = np.array([obj.output(v) for v in vecs])
    ents = np.array([_entropy(o) for o in outs])
    best = obj.chi(_softmax(logits), outs, ents)
    nm = dict(xatol=1e-9, fatol=1e-13, maxiter=400 * (L + 1), adaptive=True)
    converged = False
    for _ in range(opts.max_iters):
        start = best
        for i in range(K):
            saved = outs[i].copy(), ents[i], logits[i]

            def f(z, i=i):
                outs[i] = obj.output(z[:L])
                ents[i] = _entropy(outs[i])
                logits[i] = z[L]
                return -obj.chi(_softmax(logits), outs, ents)

            z0 = np.concatenate([vecs[i], [logits[i]]])
            res = minimize(f, z0, method="Nelder-Mead", options=nm)
            outs[i], ents[i], logits[i] = saved
            if -res.fun > best:
                best = -res.fun
                vecs[i], logits[i] = res.x[:L], res.x[L]
                outs[i] = obj.output(vecs[i])
                ents[i] = _entropy(outs[i])
        if best - start < opts.convergence_tol:
            converged = True
            break
    return best, vecs, logits, converged


def maximize_holevo(ch, n: int, opts: Optional[OptimizerOptions] = None,
                    product: bool = False) -> HolevoResult:
    """Best Holevo quantity per use found over pure-state ensembles.

    ``product=True`` restricts signal states to products across the n uses.
    Restart ``i`` draws from a generator seeded by ``(seed, i)``, so results
    do not depend on thread scheduling and never decrease as restarts grow.
    """
    ch = as_memory_channel(ch)
    opts = opts or OptimizerOptions()
    D = ch.d ** n
    K = opts.ensemble_size or D * D
    obj = _Objective(channel_choi(ch, n), D, ch.d, n, K, product)
    if opts.threads > 1:
        with ThreadPoolExecutor(opts.threads) as pool:
            runs = list(pool.map(lambda i: _run_restart(obj, opts, i), range(opts.restarts)))
    else:
        runs = [_run_restart(obj, opts, i) for i in range(opts.restarts)]
    values = [r[0] / n for r in runs]
    best_i = int(np.argmax(values))
    _, vecs, logits, _ = runs[best_i]
    w = _softmax(logits)
    w = w / w.sum()
    members = []
    for wi, v in zip(w, vecs):
        psi = obj.state(v)
        members.append((wi, DensityMatrix(np.outer(psi, psi.conj()), [ch.d] * n, validate=False)))
    flags = [f"budget-exhausted:restart-{i}" for i, r in enumerate(runs) if not r[3]]
    value = values[best_i]
    if value > np.log2(ch.d) + 1e-9:
        flags.append("exceeds-log-d")
    return HolevoResult(value, Ensemble(tuple(members), n), values, flags)
