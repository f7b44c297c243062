"""Duality checks for a computed BSDE solution.

For a test process dX = u dr + v dW on [s, t] with X_s = eta, Ito's product
rule against dY = -g dr + Z dW gives

    E[Y_t X_t + int_s^t X g dr] = E[Y_s eta + int_s^t (u Y + v . Z) dr].

The discrete version sums over grid steps. The drift pairing u*Y uses the
one-step conditional mean Yhat_n = Y_n - dt*g_n rather than Y_n: with that
choice the discrete identity holds exactly in expectation, while the plain
left-endpoint sum carries an O(dt) bias.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument
from .generators import Generator, TerminalCondition
from .solver import BsdeSolution
from .stochastic import STREAM_TESTS, PathContext, rng_for


@dataclass(frozen=True, eq=False)
class DualTestProcess:
    u: np.ndarray  # (M, N)
    v: np.ndarray  # (M, N, d)
    eta: np.ndarray  # (M,)
    s: int
    label: str = "test"

    def X(self, increments: np.ndarray, dt: float) -> np.ndarray:
        """Euler path of dX = u dr + v dW from X_s = eta; X is held at eta before s."""
        M, N, _ = increments.shape
        X = np.empty((M, N + 1))
        X[:, : self.s + 1] = self.eta[:, None]
        step = self.u[:, self.s :] * dt + np.einsum("mnd,mnd->mn", self.v[:, self.s :], increments[:, self.s :])
        X[:, self.s + 1 :] = self.eta[:, None] + np.cumsum(step, axis=1)
        return X


def constant_test_process(ctx: PathContext, u=0.0, v=0.0, eta=1.0, s: int = 0) -> DualTestProcess:
    M, N, d = ctx.paths.increments.shape
    return DualTestProcess(
        np.full((M, N), float(u)), np.full((M, N, d), float(v)), np.full(M, float(eta)), s, f"const({u:g},{v:g},{eta:g})"
    )


def random_test_process(ctx: PathContext, index: int, seed: int = 0, s: int | None = None) -> DualTestProcess:
    """Smooth adapted test process with random coefficients:
    u = a0 + a1 tanh(W_n), v = b0 + b1 cos(W_n), eta = c0 + c1 W_s.

    Coefficients depend only on (seed, index), so the same family is drawn on
    any grid; the start time is a fraction in {0, 1/4, 1/2} of the horizon.
    """
    rng = rng_for(seed, STREAM_TESTS, index)
    a0, a1, b0, b1, c0, c1 = rng.uniform(-1.0, 1.0, 6)
    N = ctx.grid.N
    if s is None:
        s = int(N * rng.choice([0.0, 0.25, 0.5]))
    W = ctx.paths.W[:, :-1, :]
    u = a0 + a1 * np.tanh(W[:, :, 0])
    v = b0 + b1 * np.cos(W)
    eta = c0 + c1 * ctx.paths.W[:, s, 0]
    return DualTestProcess(u, v, eta, s, f"random#{index}")


@dataclass
class ResidualReport:
    label: str
    lhs: float
    rhs: float
    residual: float
    se: float
    tolerance: float
    s: int
    t: int

    @property
    def passed(self) -> bool:
        return self.residual <= self.tolerance


def _driver_along(sol: BsdeSolution, g: Generator, s: int, t: int) -> np.ndarray:
    u = sol.ctx.U.values if sol.ctx is not None and sol.ctx.U is not None else None
    nodes = sol.grid.nodes
    return np.column_stack([g(nodes[n], sol.Y[:, n], sol.Z[:, n, :], u) for n in range(s, t)])


def transposition_residual(
    sol: BsdeSolution,
    g: Generator,
    xi: TerminalCondition | None,
    tests,
    s: int | None = None,
    t: int | None = None,
    riemann: str = "predictable",
    se_mult: float = 3.0,
    dt_mult: float = 5.0,
) -> list[ResidualReport]:
    """Residual of the duality identity on [s, t] for each test process.

    ``s`` defaults to each test's own start node and ``t`` to the terminal
    node. Tolerance is max(se_mult*SE, dt_mult*dt*scale) where scale is the
    RMS size of the per-path left-hand side (at least 1).
    """
    if sol.ctx is None:
        raise InvalidArgument("solution carries no path context")
    ctx = sol.ctx
    nt = sol.terminal_node
    t = nt if t is None else t
    if xi is not None and t == nt:
        if not np.array_equal(sol.Y[:, nt], xi(ctx)):
            raise InvalidArgument("terminal condition does not match the solution")
    if riemann not in ("predictable", "left"):
        raise InvalidArgument(f"unknown riemann rule {riemann!r}")
    dt = sol.grid.dt
    inc = ctx.paths.increments
    out = []
    for test in tests:
        s_ = test.s if s is None else s
        if not 0 <= s_ <= t <= nt:
            raise InvalidArgument(f"need 0 <= s <= t <= {nt}, got s={s_}, t={t}")
        if s_ < test.s:
            raise InvalidArgument("test process starts after s")
        X = test.X(inc, dt)
        gv = _driver_along(sol, g, s_, t) if t > s_ else np.zeros((ctx.M, 0))
        if riemann == "predictable":
            ypair = sol.Y[:, s_:t] - dt * gv
        else:
            ypair = sol.Y[:, s_:t]
        lhs_p = sol.Y[:, t] * X[:, t] + dt * np.sum(X[:, s_:t] * gv, axis=1)
        rhs_p = (
            sol.Y[:, s_] * X[:, s_]
            + dt * np.sum(test.u[:, s_:t] * ypair, axis=1)
            + dt * np.einsum("mnd,mnd->m", test.v[:, s_:t], sol.Z[:, s_:t, :])
        )
        diff = lhs_p - rhs_p
        se = float(np.std(diff, ddof=1) / np.sqrt(ctx.M))
        scale = max(1.0, float(np.sqrt(np.mean(lhs_p**2))))
        tol = max(se_mult * se, dt_mult * dt * scale)
        out.append(
            ResidualReport(test.label, float(lhs_p.mean()), float(rhs_p.mean()), float(abs(diff.mean())), se, tol, s_, t)
        )
    return out


@dataclass
class AprioriReport:
    ratios: list
    norms_solution: list
    norms_data: list
    bound: float
    spread: float
    labels: list = field(default_factory=list)

    def bounded(self, rel_tol: float = 0.05) -> bool:
        return bool(np.isfinite(self.bound) and self.spread <= rel_tol)


def solution_norm(sol: BsdeSolution) -> float:
    """sqrt(E[sup_n Y_n^2] + E[sum_n |Z_n|^2 dt])."""
    nt = sol.terminal_node
    sup_y = np.max(sol.Y**2, axis=1)
    zz = np.sum(sol.Z[:, :nt, :] ** 2, axis=(1, 2)) * sol.grid.dt
    return float(np.sqrt(np.mean(sup_y) + np.mean(zz)))


def data_norm(g: Generator, xi_values: np.ndarray, grid) -> float:
    """||g(., 0, 0)||_{L^2(dt)} + ||xi||_{L^2}."""
    nodes = grid.nodes[:-1]
    g00 = np.array([g(t, np.zeros(1), np.zeros((1, 1)))[0] for t in nodes])
    return float(np.sqrt(np.sum(g00**2) * grid.dt) + np.sqrt(np.mean(xi_values**2)))


def apriori_estimate_audit(sols, g: Generator, xis=None) -> AprioriReport:
    """Ratio of solution norm to data norm for a family of runs with a shared
    driver. ``spread`` is (max - min) / max over the family."""
    if isinstance(sols, BsdeSolution):
        sols = [sols]
    ratios, ns, nd, labels = [], [], [], []
    for i, sol in enumerate(sols):
        xi_vals = sol.Y[:, sol.terminal_node] if xis is None else xis[i](sol.ctx)
        a = solution_norm(sol)
        b = data_norm(g, xi_vals, sol.grid)
        ns.append(a)
        nd.append(b)
        ratios.append(a / b if b > 0 else (0.0 if a == 0 else np.inf))
        labels.append(sol.xi.label if sol.xi is not None else f"run{i}")
    r = np.asarray(ratios)
    spread = float((r.max() - r.min()) / r.max()) if r.max() > 0 else 0.0
    return AprioriReport(ratios, ns, nd, float(r.max()), spread, labels)
