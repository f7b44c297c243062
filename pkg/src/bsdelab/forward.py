"""Forward diffusion dG = b(t, G) dt + sigma(t, G) dW started at (t, x).

Coefficients are vectorised callables: ``b(t, x)`` maps an (P, m) array of
states to (P, m) and ``sigma(t, x)`` maps it to (P, m, d). They must be
deterministic in (t, x).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import InvalidArgument, NumericalFailure
from .stochastic import STREAM_PROBES, BrownianPaths, rng_for


@dataclass(frozen=True, eq=False)
class ForwardModel:
    m: int
    d: int
    b: Callable
    sigma: Callable
    L1: float = 1.0
    L2: float = 1.0
    label: str = "custom"
    params: dict = field(default_factory=dict)


@dataclass(frozen=True, eq=False)
class ForwardPaths:
    start_node: int
    x: np.ndarray  # (m,)
    states: np.ndarray  # (M, N+1, m)

    def at(self, n: int) -> np.ndarray:
        return self.states[:, n, :]


def linear_model(a: float = 0.0, a0: float = 0.0, c: float = 1.0, label: str | None = None) -> ForwardModel:
    """Scalar model b(t, x) = a*x + a0, sigma(t, x) = c (m = d = 1)."""

    def b(t, x):
        return a * x + a0

    def sigma(t, x):
        return np.full(x.shape + (1,), float(c))

    L1 = abs(a)
    L2 = max(abs(a), abs(a0) + abs(c))
    return ForwardModel(1, 1, b, sigma, L1, L2, label or "linear", {"a": a, "a0": a0, "c": c})


def brownian_model() -> ForwardModel:
    return linear_model(0.0, 0.0, 1.0, label="brownian")


def euler_maruyama(model: ForwardModel, paths: BrownianPaths, start) -> ForwardPaths:
    """Explicit Euler-Maruyama; the state is frozen at x on nodes before the start node."""
    node, x = start
    x = np.atleast_1d(np.asarray(x, dtype=float))
    grid = paths.grid
    if not 0 <= node <= grid.N:
        raise InvalidArgument(f"start node {node} outside grid 0..{grid.N}")
    if x.shape != (model.m,):
        raise InvalidArgument(f"start point has shape {x.shape}, model dimension is {model.m}")
    if model.d != paths.d:
        raise InvalidArgument(f"model expects d={model.d}, paths have d={paths.d}")

    M, N = paths.M, grid.N
    G = np.empty((M, N + 1, model.m))
    G[:, : node + 1, :] = x
    t = grid.nodes
    cur = np.broadcast_to(x, (M, model.m)).copy()
    with np.errstate(over="ignore", invalid="ignore"):
        for n in range(node, N):
            drift = np.asarray(model.b(t[n], cur), dtype=float)
            vol = np.asarray(model.sigma(t[n], cur), dtype=float)
            cur = cur + drift * grid.dt + np.einsum("pij,pj->pi", vol, paths.increments[:, n, :])
            bad = ~np.isfinite(cur)
            if bad.any():
                m_bad = int(np.argwhere(bad)[0][0])
                raise NumericalFailure(
                    f"non-finite state on path {m_bad} at step {n}", node=n, path=m_bad, module="forward-sde"
                )
            G[:, n + 1, :] = cur
    G.flags.writeable = False
    return ForwardPaths(node, x, G)


@dataclass
class AssumptionReport:
    checks: dict  # name -> bool
    observed: dict  # name -> float
    notes: list = field(default_factory=list)
    witnesses: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def __getitem__(self, key):
        return self.checks[key]


def probe_pairs(m: int, probes: int, seed: int, box: float, T: float):
    """Sampled (t, x, x') triples used by the Lipschitz and growth audits.

    A third of the pairs share all but one coordinate so that axis-aligned
    Lipschitz ratios are attained, not only averaged over.
    """
    rng = rng_for(seed, STREAM_PROBES, 0)
    t = rng.uniform(0.0, T, probes)
    x = rng.uniform(-box, box, (probes, m))
    xp = rng.uniform(-box, box, (probes, m))
    k = probes // 3
    if m > 1 and k:
        axis = rng.integers(0, m, k)
        xp[:k] = x[:k]
        xp[np.arange(k), axis] = rng.uniform(-box, box, k)
    return t, x, xp


def _coef_norms(model, t, x):
    b = np.asarray(model.b(t, x), dtype=float).reshape(len(x), model.m)
    s = np.asarray(model.sigma(t, x), dtype=float).reshape(len(x), model.m, model.d)
    return b, s


def _vec_t(f, t, x):
    """Evaluate a coefficient at per-probe times (coefficients take scalar t)."""
    return np.stack([np.asarray(f(ti, xi[None, :]), dtype=float)[0] for ti, xi in zip(t, x)])


def check_h_assumptions(
    model: ForwardModel,
    probes: int = 2000,
    seed: int = 0,
    box: float = 5.0,
    T: float = 1.0,
    times=(),
    gap_tol: float = 1e-6,
) -> AssumptionReport:
    """Spot-check Lipschitz (H1), linear growth (H2) and right-continuity in t (H3)."""
    if probes < 1:
        raise InvalidArgument("probes must be >= 1")
    t, x, xp = probe_pairs(model.m, probes, seed, box, T)
    b1 = _vec_t(model.b, t, x)
    b2 = _vec_t(model.b, t, xp)
    s1 = _vec_t(model.sigma, t, x)
    s2 = _vec_t(model.sigma, t, xp)
    dx = np.linalg.norm(x - xp, axis=1)
    ok = dx > 0
    num = np.linalg.norm(b1 - b2, axis=1) + np.linalg.norm((s1 - s2).reshape(probes, -1), axis=1)
    lip = num[ok] / dx[ok]
    lip_max = float(lip.max()) if lip.size else 0.0
    growth = (np.linalg.norm(b1, axis=1) + np.linalg.norm(s1.reshape(probes, -1), axis=1)) / (
        1.0 + np.linalg.norm(x, axis=1)
    )
    growth_max = float(growth.max())

    h = 1e-9
    probe_t = np.concatenate([t[: min(probes, 200)], np.asarray(times, dtype=float)])
    probe_t = probe_t[probe_t + h <= T]
    px = x[np.arange(len(probe_t)) % probes]

    def gap(ta, tb):
        return np.linalg.norm(_vec_t(model.b, ta, px) - _vec_t(model.b, tb, px), axis=1) + np.linalg.norm(
            (_vec_t(model.sigma, ta, px) - _vec_t(model.sigma, tb, px)).reshape(len(ta), -1), axis=1
        )

    right = gap(probe_t + h, probe_t) if len(probe_t) else np.zeros(0)
    right_max = float(right.max()) if right.size else 0.0
    notes = []
    user_t = np.asarray(times, dtype=float)
    if user_t.size:
        left_t = user_t[user_t - h >= 0]
        if left_t.size:
            px_l = x[np.arange(len(left_t)) % probes]
            left = np.linalg.norm(
                _vec_t(model.b, left_t - h, px_l) - _vec_t(model.b, left_t, px_l), axis=1
            ) + np.linalg.norm(
                (_vec_t(model.sigma, left_t - h, px_l) - _vec_t(model.sigma, left_t, px_l)).reshape(len(left_t), -1),
                axis=1,
            )
            for ti, g in zip(left_t, left):
                if g > gap_tol:
                    notes.append(f"left-discontinuity at t={ti:g}: gap {g:.6g}")

    lip_arg = int(np.argmax(np.where(ok, num / np.where(ok, dx, 1.0), -1.0)))
    return AssumptionReport(
        checks={
            "H1": lip_max <= model.L1 * (1 + 1e-9) + 1e-12,
            "H2": growth_max <= model.L2 * (1 + 1e-9) + 1e-12,
            "H3": right_max <= gap_tol,
        },
        observed={"lipschitz_ratio": lip_max, "growth_ratio": growth_max, "right_gap": right_max},
        notes=notes,
        witnesses={"H1": (float(t[lip_arg]), x[lip_arg].tolist(), xp[lip_arg].tolist())},
    )
