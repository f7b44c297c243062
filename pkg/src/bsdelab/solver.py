"""Backward solvers for dY = -g(t, Y, Z) dt + Z dW, Y_T = xi.

Three routes to the same object:

* :func:`solve_lsmc` - least-squares Monte Carlo on simulated paths;
* :func:`solve_tree` - exact dynamic programming on a recombining binomial
  lattice (d = 1, small N), used as a brute-force oracle;
* :func:`closed_form_linear` - the explicit solution for g = a*y + b*z + c and
  terminals affine in W_T.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument, NumericalFailure
from .generators import Generator, TerminalCondition
from .stochastic import BrownianPaths, PathContext, TimeGrid


def as_context(paths) -> PathContext:
    if isinstance(paths, PathContext):
        return paths
    if isinstance(paths, BrownianPaths):
        return PathContext(paths)
    raise InvalidArgument(f"expected BrownianPaths or PathContext, got {type(paths).__name__}")


@dataclass(frozen=True)
class RegressionBasis:
    """Polynomials up to ``degree`` in the time-t_n state, plus features and
    strata carried by the terminal condition.

    ``state`` is ``"W"`` (Brownian position) or ``"forward"`` (forward
    diffusion attached to the context). With an enlargement variable in the
    context every regression is run separately per atom of U.
    """

    degree: int = 2
    state: str = "W"
    stratify_u: bool = True

    def state_at(self, ctx: PathContext, n: int) -> np.ndarray:
        if self.state == "W":
            return ctx.paths.W[:, n, :]
        if self.state == "forward":
            if ctx.forward is None:
                raise InvalidArgument("forward-state basis needs forward paths in the context")
            return ctx.forward.states[:, n, :]
        raise InvalidArgument(f"unknown basis state {self.state!r}")

    def features(self, ctx: PathContext, n: int, xi: TerminalCondition | None = None) -> np.ndarray:
        x = self.state_at(ctx, n)
        cols = [np.ones(ctx.M)]
        for deg in range(1, self.degree + 1):
            for idx in itertools.combinations_with_replacement(range(x.shape[1]), deg):
                cols.append(np.prod(x[:, idx], axis=1))
        if xi is not None:
            for node, fn in xi.features:
                if n >= node:
                    cols.append(np.asarray(fn(ctx), dtype=float))
        return np.column_stack(cols)

    def strata(self, ctx: PathContext, n: int, xi: TerminalCondition | None = None) -> np.ndarray:
        """Integer key columns (M, k); paths with equal rows share a regression."""
        keys = []
        if self.stratify_u and ctx.U is not None:
            keys.append(ctx.U.index)
        if xi is not None:
            for node, ind in xi.events:
                if n >= node:
                    keys.append(np.asarray(ind(ctx), dtype=bool).astype(np.int64))
        if not keys:
            return np.zeros((ctx.M, 0), dtype=np.int64)
        return np.column_stack(keys).astype(np.int64)

    @property
    def size(self) -> int:
        return -1  # depends on the state dimension; see BsdeSolution.diagnostics


@dataclass
class _NodeFit:
    keep: np.ndarray
    scale: np.ndarray
    alpha: np.ndarray  # (B,)
    beta: np.ndarray  # (B, d)


@dataclass(eq=False)
class BsdeSolution:
    Y: np.ndarray  # (M, n_T+1)
    Z: np.ndarray  # (M, n_T+1, d)
    grid: TimeGrid
    seed: int | None
    solver: str
    diagnostics: dict = field(default_factory=dict)
    Yhat: np.ndarray | None = None  # (M, n_T) one-step conditional means
    ctx: PathContext | None = None
    g: Generator | None = None
    xi: TerminalCondition | None = None
    basis: RegressionBasis | None = None
    fits: list | None = None  # per node: {stratum key: _NodeFit}
    picard_iters: int = 0

    @property
    def terminal_node(self) -> int:
        return self.Y.shape[1] - 1

    @property
    def M(self) -> int:
        return self.Y.shape[0]

    def estimator(self, n: int = 0) -> np.ndarray:
        """Per-path unbiased estimator whose sample mean is mean(Y[:, n]).

        xi + sum_k (Y_k - Yhat_k) - sum_k Z_k dW_k over k >= n; the Z dW sum
        is a zero-mean control, so this is the natural Monte Carlo estimator
        of E[Y_n] with the martingale part removed.
        """
        if self.Yhat is None or self.ctx is None:
            return self.Y[:, n].copy()
        nt = self.terminal_node
        dW = self.ctx.paths.increments[:, n:nt, :]
        drift = (self.Y[:, n:nt] - self.Yhat[:, n:nt]).sum(axis=1)
        mart = np.einsum("mkd,mkd->m", self.Z[:, n:nt, :], dW)
        return self.Y[:, nt] + drift - mart

    def mean_se(self, n: int = 0) -> float:
        return float(np.std(self.estimator(n), ddof=1) / np.sqrt(self.M))

    def y0(self):
        """Y at the first node: a scalar, or {atom: value} under an enlarged F_0."""
        if self.ctx is not None and self.ctx.U is not None:
            U = self.ctx.U
            return {float(U.atoms[j]): float(np.mean(self.Y[U.index == j, 0])) for j in range(U.n_atoms)
                    if np.any(U.index == j)}
        return float(np.mean(self.Y[:, 0]))

    def predict(self, ctx: PathContext, n: int) -> np.ndarray:
        """Evaluate the fitted Y_n on another path set (out-of-sample)."""
        if self.fits is None:
            raise InvalidArgument("only regression solutions can be evaluated out of sample")
        if n == self.terminal_node:
            return self.xi(ctx)
        X = self.basis.features(ctx, n, self.xi)
        keys = self.basis.strata(ctx, n, self.xi)
        yhat = np.empty(ctx.M)
        Z = np.empty((ctx.M, self.Z.shape[2]))
        for key, sel in _groups(keys):
            fit = self.fits[n].get(key)
            if fit is None:
                raise NumericalFailure(f"stratum {key} unseen at node {n}", node=n, module="bsde-solver")
            Xs = X[sel][:, fit.keep] / fit.scale
            yhat[sel] = Xs @ fit.alpha
            Z[sel] = Xs @ fit.beta
        u = ctx.U.values if ctx.U is not None else None
        y, _ = _picard(self.g, self.grid.nodes[n], yhat, Z, u, self.grid.dt, self.picard_iters)
        return y


def _groups(keys: np.ndarray):
    if keys.shape[1] == 0:
        yield (), np.ones(keys.shape[0], dtype=bool)
        return
    uniq, inv = np.unique(keys, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    for j, row in enumerate(uniq):
        yield tuple(int(v) for v in row), inv == j


def _independent_columns(X: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Greedy selection of linearly independent columns (constant column first).

    Degenerate features (W at node 0, a carried feature equal to the current
    state) are dropped instead of making the regression singular.
    """
    rms = np.sqrt(np.mean(X**2, axis=0))
    rms[rms == 0] = 1.0
    Xn = X / rms
    G = Xn.T @ Xn / X.shape[0]
    kept = []
    for j in range(X.shape[1]):
        if G[j, j] <= tol:
            continue
        if kept:
            Gk = G[np.ix_(kept, kept)]
            r = G[j, j] - G[j, kept] @ np.linalg.solve(Gk, G[kept, j])
            if r <= tol * G[j, j]:
                continue
        kept.append(j)
    return np.asarray(kept, dtype=int)


def _picard(g, t, yhat, Z, u, dt, iters):
    y = yhat
    diffs = []
    for _ in range(iters):
        y_new = yhat + dt * g(t, y, Z, u)
        diffs.append(float(np.max(np.abs(y_new - y))) if y.size else 0.0)
        y = y_new
    return y, diffs


def _check_contraction(g: Generator, dt: float):
    if g.K * dt >= 1.0:
        raise InvalidArgument(f"Picard map does not contract: K*dt = {g.K * dt:.4g} >= 1")


def solve_lsmc(
    g: Generator,
    xi: TerminalCondition,
    paths,
    basis: RegressionBasis | None = None,
    picard_iters: int = 3,
) -> BsdeSolution:
    """Backward least-squares Monte Carlo.

    At each node the next value is regressed jointly on the time-t_n basis
    and on the basis times dW:

        Y_{n+1} ~ phi(x_n) . alpha + sum_k (phi(x_n) . beta_k) dW_k

    so that Yhat_n = phi . alpha estimates E[Y_{n+1} | F_n] and
    Z_n = phi . beta estimates E[Y_{n+1} dW | F_n] / dt. Y_n then solves
    Y_n = Yhat_n + dt g(t_n, Y_n, Z_n) by ``picard_iters`` sweeps.
    """
    ctx = as_context(paths)
    basis = basis or RegressionBasis()
    grid = ctx.grid
    dt = grid.dt
    _check_contraction(g, dt)
    if picard_iters < 1:
        raise InvalidArgument("picard_iters must be >= 1")
    nt = xi.at_node(ctx)
    M, d = ctx.M, ctx.paths.d
    Y = np.empty((M, nt + 1))
    Z = np.zeros((M, nt + 1, d))
    Yhat = np.empty((M, nt))
    Y[:, nt] = xi(ctx)
    if not np.all(np.isfinite(Y[:, nt])):
        raise NumericalFailure("terminal condition is not finite", node=nt, module="bsde-solver")
    u = ctx.U.values if ctx.U is not None else None
    fits = [None] * nt
    conds = np.zeros(nt)
    sizes = np.zeros(nt, dtype=int)
    picard_diffs = []
    t = grid.nodes

    for n in range(nt - 1, -1, -1):
        X = basis.features(ctx, n, xi)
        keys = basis.strata(ctx, n, xi)
        dW = ctx.paths.increments[:, n, :]
        target = Y[:, n + 1]
        node_fits = {}
        worst_cond = 0.0
        for key, sel in _groups(keys):
            Xs = X[sel]
            keep = _independent_columns(Xs)
            Xk = Xs[:, keep]
            scale = np.sqrt(np.mean(Xk**2, axis=0))
            scale[scale == 0] = 1.0
            Xk = Xk / scale
            dWs = dW[sel]
            A = np.concatenate([Xk] + [Xk * dWs[:, [k]] for k in range(d)], axis=1)
            if A.shape[0] < A.shape[1]:
                raise NumericalFailure(
                    f"stratum {key} at node {n} has {A.shape[0]} paths for {A.shape[1]} regressors",
                    node=n, module="bsde-solver",
                )
            coef, _, rank, sv = np.linalg.lstsq(A, target[sel], rcond=None)
            if rank < A.shape[1]:
                raise NumericalFailure(f"rank-deficient regression at node {n}", node=n, module="bsde-solver")
            B = Xk.shape[1]
            alpha = coef[:B]
            beta = coef[B:].reshape(d, B).T
            Yhat[sel, n] = Xk @ alpha
            Z[sel, n, :] = Xk @ beta
            node_fits[key] = _NodeFit(keep, scale, alpha, beta)
            worst_cond = max(worst_cond, float(sv[0] / sv[-1]))
            sizes[n] = max(sizes[n], B)
        fits[n] = node_fits
        conds[n] = worst_cond
        Y[:, n], diffs = _picard(g, t[n], Yhat[:, n], Z[:, n, :], u, dt, picard_iters)
        picard_diffs.append(diffs)
        if not np.all(np.isfinite(Y[:, n])):
            m_bad = int(np.flatnonzero(~np.isfinite(Y[:, n]))[0])
            raise NumericalFailure(f"non-finite Y at node {n}", node=n, path=m_bad, module="bsde-solver")
    if nt > 0:
        Z[:, nt, :] = Z[:, nt - 1, :]  # diagnostic only

    diag = {
        "basis_size": int(sizes.max()) if nt else 0,
        "condition": conds,
        "picard_diffs": np.array(picard_diffs[::-1]),
        "picard_bound": g.K * dt / (1 - g.K * dt),
    }
    return BsdeSolution(Y, Z, grid, ctx.paths.seed, "lsmc", diag, Yhat, ctx, g, xi, basis, fits, picard_iters)


@dataclass(eq=False)
class TreeSolution:
    """Solution on a recombining binomial lattice; level n has n+1 nodes."""

    W: list  # W[n]: (n+1,) positions (2j - n) sqrt(dt)
    Y: list
    Z: list
    grid: TimeGrid
    solver: str = "tree"

    @property
    def y0(self) -> float:
        return float(self.Y[0][0])

    def interpolate(self, n: int, w: np.ndarray) -> np.ndarray:
        """Piecewise-linear interpolation of Y_n between lattice nodes."""
        return np.interp(w, self.W[n], self.Y[n])


MAX_TREE_STEPS = 24


def solve_tree(g: Generator, xi, N: int, T: float = 1.0, tol: float = 1e-14, max_iter: int = 500) -> TreeSolution:
    """Exact backward dynamic programming with dW = +/- sqrt(dt), p = 1/2 (d = 1).

    ``xi`` is a vectorised function of W_T or a terminal condition with
    ``of_w`` set.
    """
    if N > MAX_TREE_STEPS:
        raise InvalidArgument(f"tree limited to N <= {MAX_TREE_STEPS}, got {N}")
    if g.u_dependent:
        raise InvalidArgument("tree oracle does not model the enlargement variable")
    f = xi.of_w if isinstance(xi, TerminalCondition) else xi
    if f is None:
        raise InvalidArgument("tree oracle needs a terminal that is a function of W_T")
    grid = TimeGrid(T, N)
    dt = grid.dt
    _check_contraction(g, dt)
    sq = np.sqrt(dt)
    Ws = [(2 * np.arange(n + 1) - n) * sq for n in range(N + 1)]
    Ys = [None] * (N + 1)
    Zs = [None] * (N + 1)
    Ys[N] = np.asarray(f(Ws[N]), dtype=float) * np.ones(N + 1)
    Zs[N] = np.zeros(N + 1)
    for n in range(N - 1, -1, -1):
        up, down = Ys[n + 1][1:], Ys[n + 1][:-1]
        mean = 0.5 * (up + down)
        z = (up - down) / (2 * sq)
        y = mean.copy()
        for _ in range(max_iter):
            y_new = mean + dt * g(grid.nodes[n], y, z[:, None])
            if np.max(np.abs(y_new - y)) <= tol * (1 + np.max(np.abs(y_new))):
                y = y_new
                break
            y = y_new
        Ys[n], Zs[n] = y, z
    Zs[N] = Zs[N - 1].copy() if N else Zs[N]
    return TreeSolution(Ws, Ys, Zs, grid)


def closed_form_linear(a: float, b: float, c: float, xi: TerminalCondition, paths) -> BsdeSolution:
    """Explicit solution of the linear BSDE g = a*y + b*z + c (d = 1).

    For xi = s*W_T + k:
        Y_t = e^{a(T-t)} (s (W_t + b (T-t)) + k) + c (e^{a(T-t)} - 1) / a
        Z_t = s e^{a(T-t)}
    with c (T - t) in place of the last term when a = 0.
    """
    ctx = as_context(paths)
    if ctx.paths.d != 1:
        raise InvalidArgument("closed form implemented for d = 1")
    if xi.affine is None or xi.node is not None:
        raise InvalidArgument(f"closed form needs xi affine in W_T, got {xi.label!r}")
    s, k = xi.affine
    grid = ctx.grid
    tau = (grid.t0 + grid.T) - grid.nodes
    growth = np.exp(a * tau)
    integral = tau if a == 0 else np.expm1(a * tau) / a
    W = ctx.paths.W[:, :, 0]
    Y = growth * (s * (W + b * tau) + k) + c * integral
    Y[:, -1] = xi(ctx)
    Z = np.broadcast_to((s * growth)[None, :, None], (ctx.M, grid.N + 1, 1)).copy()
    return BsdeSolution(Y, Z, grid, ctx.paths.seed, "closed-form", {}, None, ctx, None, xi)
