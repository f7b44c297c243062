"""Recovering a driver from small-horizon solutions, and the generator-level
consequences of solution-level orderings and identities.

For a probe (t, y, z) and a short horizon eps, the BSDE on [t, t + eps] with
terminal y + z.(W_{t+eps} - W_t) has Y_t = y + eps*g(t, y, z) + o(eps). With a
forward diffusion G started at (t, x) and terminal y + p.(G_{t+eps} - x) the
first-order term becomes g(t, y, sigma^T p) + p.b(t, x). Each eps is solved on
its own sub-grid of a fixed number of steps, all sharing one seed.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument
from .forward import ForwardModel, euler_maruyama
from .generators import (
    Generator,
    TerminalCondition,
    check_a_assumptions,
    probe_property,
    property_violation,
    terminal_affine_w,
    terminal_const,
    terminal_of_w,
)
from .gexpectation import SolverConfig, gate
from .solver import MAX_TREE_STEPS, RegressionBasis, closed_form_linear, solve_lsmc, solve_tree
from .stochastic import PathContext, TimeGrid, simulate_brownian

DEFAULT_EPSILONS = (0.2, 0.1, 0.05, 0.025)


@dataclass(frozen=True)
class RepresentationProbe:
    t: float = 0.0
    y: float = 0.0
    z: tuple | float | None = None
    x: tuple | float | None = None
    p: tuple | float | None = None
    epsilons: tuple = DEFAULT_EPSILONS

    def zvec(self) -> np.ndarray:
        return np.atleast_1d(np.asarray(self.z, dtype=float))


@dataclass
class RepresentationReport:
    epsilons: list
    estimates: list  # mean D_eps
    errors: list  # L^2 norm of D_eps - target over paths
    ses: list
    target: float
    averaged: list = field(default_factory=list)  # (1/eps) int_t^{t+eps} g(r, y, z) dr
    solver: str = ""

    def verdict(self, final_tol: float = 0.03, max_inversions: int = 1, floor: float = 1e-12) -> dict:
        """Errors must not grow as eps shrinks, except for at most
        ``max_inversions`` increases each within one standard error."""
        inversions, bad = 0, 0
        for k in range(1, len(self.errors)):
            rise = self.errors[k] - self.errors[k - 1]
            if rise > floor:
                inversions += 1
                if rise > self.ses[k] + floor:
                    bad += 1
        monotone = bad == 0 and inversions <= max_inversions
        final = self.errors[-1] if self.errors else np.inf
        return {
            "monotone": bool(monotone),
            "inversions": inversions,
            "final_error": float(final),
            "final_ok": bool(final <= final_tol),
            "passed": bool(monotone and final <= final_tol),
        }


def _check_epsilons(epsilons, t, cfg: SolverConfig):
    grid = cfg.grid
    eps = [float(e) for e in epsilons]
    if not eps or any(e <= 0 for e in eps):
        raise InvalidArgument("epsilons must be positive")
    if any(b >= a for a, b in zip(eps, eps[1:])):
        raise InvalidArgument("epsilons must be strictly decreasing")
    grid.node_of(t)
    for e in eps:
        if e < grid.dt * (1 - 1e-9):
            raise InvalidArgument(f"eps = {e:g} is below the grid resolution {grid.dt:g}")
        k = e / grid.dt
        if abs(k - round(k)) > 1e-9:
            raise InvalidArgument(f"eps = {e:g} is not a multiple of dt = {grid.dt:g}")
        if t + e > cfg.T * (1 + 1e-12):
            raise InvalidArgument(f"t + eps = {t + e:g} exceeds the horizon {cfg.T:g}")
    return eps


def _brownian_terminal(y: float, z: np.ndarray) -> TerminalCondition:
    if z.size == 1:
        return terminal_affine_w(float(z[0]), float(y))

    def fn(ctx):
        return y + ctx.paths.W[:, -1, :] @ z

    return TerminalCondition(fn, "brownian", f"{y:g}+z.W")


def _pick_solver(g: Generator, sub_solver: str, d: int) -> str:
    if sub_solver == "auto":
        return "closed-form" if (g.linear is not None and d == 1) else "lsmc"
    if sub_solver not in ("lsmc", "closed-form", "tree"):
        raise InvalidArgument(f"unknown sub-solver {sub_solver!r}")
    return sub_solver


def _averaged_driver(g: Generator, sub: TimeGrid, y: float, z: np.ndarray) -> float:
    vals = np.array([g(s, np.array([y]), z[None, :])[0] for s in sub.nodes])
    trapezoid = getattr(np, "trapezoid", None) or np.trapz
    return float(trapezoid(vals, sub.nodes) / sub.T)


def difference_quotient_brownian(
    g: Generator,
    probe: RepresentationProbe,
    cfg: SolverConfig | None = None,
    sub_steps: int = 32,
    sub_solver: str = "auto",
    audit: bool = True,
) -> RepresentationReport:
    """D_eps = (Y_t - y)/eps for terminal y + z.(W_{t+eps} - W_t), compared with g(t, y, z)."""
    cfg = cfg or SolverConfig()
    z = probe.zvec()
    d = z.size
    if audit:
        rep = check_a_assumptions(g, probes=cfg.audit_probes, seed=cfg.seed, d=d, T=cfg.T)
        if not (rep["A1"] and rep["A3"]):
            raise InvalidArgument(f"driver fails the Lipschitz audit: {rep.observed}")
    eps = _check_epsilons(probe.epsilons, probe.t, cfg)
    kind = _pick_solver(g, sub_solver, d)
    target = float(g(probe.t, np.array([probe.y]), z[None, :])[0])
    xi = _brownian_terminal(probe.y, z)
    ests, errs, ses, avgs = [], [], [], []
    for e in eps:
        sub = TimeGrid(e, sub_steps, probe.t)
        if kind == "tree":
            if d != 1:
                raise InvalidArgument("tree sub-solver needs d = 1")
            tree = _tree_shifted(g, probe, z, TimeGrid(e, min(sub_steps, MAX_TREE_STEPS), probe.t))
            dq = np.array([(tree.y0 - probe.y) / e])
            se = 0.0
        else:
            paths = simulate_brownian(sub, d, cfg.M, cfg.seed)
            if kind == "closed-form":
                a, b, c = g.linear
                sol = closed_form_linear(a, b, c, xi, paths)
                se = 0.0
            else:
                sol = solve_lsmc(g, xi, paths, RegressionBasis(cfg.degree), cfg.picard_iters)
                se = sol.mean_se(0) / e
            dq = (sol.Y[:, 0] - probe.y) / e
        ests.append(float(dq.mean()))
        errs.append(float(np.sqrt(np.mean((dq - target) ** 2))))
        ses.append(float(se))
        avgs.append(_averaged_driver(g, sub, probe.y, z))
    return RepresentationReport(eps, ests, errs, ses, target, avgs, kind)


def _tree_shifted(g, probe, z, sub):
    """Tree on [t, t+eps]: shift time so the driver sees absolute times."""
    shifted = Generator(lambda s, y, zz: g(s + sub.t0, y, zz), g.K, g.flags, g.label, g.params)
    return solve_tree(shifted, lambda w: probe.y + z[0] * w, sub.N, sub.T)


def _is_brownian_model(model: ForwardModel) -> bool:
    p = model.params
    return model.m == model.d == 1 and p.get("a") == 0 and p.get("a0") == 0 and p.get("c") == 1


def difference_quotient_forward(
    g: Generator,
    model: ForwardModel,
    probe: RepresentationProbe,
    cfg: SolverConfig | None = None,
    sub_steps: int = 32,
    sub_solver: str = "auto",
    audit: bool = True,
) -> RepresentationReport:
    """D_eps = (Y_t - y)/eps for terminal y + p.(G^{t,x}_{t+eps} - x), compared
    with g(t, y, sigma(t,x)^T p) + p.b(t, x).

    For the Brownian model (b = 0, sigma = 1) the probe is delegated to the
    Brownian form with z = p, so both forms agree bit for bit.
    """
    from .forward import check_h_assumptions

    cfg = cfg or SolverConfig()
    x = np.atleast_1d(np.asarray(probe.x, dtype=float))
    p = np.atleast_1d(np.asarray(probe.p, dtype=float))
    if x.shape != (model.m,) or p.shape != (model.m,):
        raise InvalidArgument(f"x and p must have length m = {model.m}")
    if audit:
        rep = check_a_assumptions(g, probes=cfg.audit_probes, seed=cfg.seed, d=model.d, T=cfg.T)
        if not (rep["A1"] and rep["A3"]):
            raise InvalidArgument(f"driver fails the Lipschitz audit: {rep.observed}")
        h = check_h_assumptions(model, probes=500, seed=cfg.seed, T=cfg.T)
        if not h.passed:
            raise InvalidArgument(f"forward model fails its audit: {h.observed}")
    if _is_brownian_model(model):
        bprobe = RepresentationProbe(probe.t, probe.y, tuple(p.tolist()), epsilons=probe.epsilons)
        return difference_quotient_brownian(g, bprobe, cfg, sub_steps, sub_solver, audit=False)

    eps = _check_epsilons(probe.epsilons, probe.t, cfg)
    t = probe.t
    sig = np.asarray(model.sigma(t, x[None, :]), dtype=float).reshape(model.m, model.d)
    bx = np.asarray(model.b(t, x[None, :]), dtype=float).reshape(model.m)
    zeff = sig.T @ p
    target = float(g(t, np.array([probe.y]), zeff[None, :])[0] + p @ bx)

    def fn(ctx):
        return probe.y + (ctx.forward.states[:, -1, :] - x) @ p

    xi = TerminalCondition(fn, "forward", "y+p.(G-x)")
    basis = RegressionBasis(cfg.degree, state="forward")
    ests, errs, ses, avgs = [], [], [], []
    for e in eps:
        sub = TimeGrid(e, sub_steps, t)
        paths = simulate_brownian(sub, model.d, cfg.M, cfg.seed)
        fwd = euler_maruyama(model, paths, (0, x))
        ctx = PathContext(paths, forward=fwd)
        sol = solve_lsmc(g, xi, ctx, basis, cfg.picard_iters)
        dq = (sol.Y[:, 0] - probe.y) / e
        ests.append(float(dq.mean()))
        errs.append(float(np.sqrt(np.mean((dq - target) ** 2))))
        ses.append(sol.mean_se(0) / e)
        avgs.append(_averaged_driver(g, sub, probe.y, zeff) + float(p @ bx))
    return RepresentationReport(eps, ests, errs, ses, target, avgs, "lsmc")


def linear_forward_quotient(eps: float, a: float, x: float, y: float, p: float, b: float) -> float:
    """Exact quotient for g = b*z, G with drift a*G and unit volatility.

    Under the measure that absorbs the b*z term, G has drift a*G + b, so
    E[G_eps] = (x + b/a) e^{a eps} - b/a and D_eps = p (E[G_eps] - x)/eps.
    """
    if a == 0:
        mean = x + b * eps
    else:
        mean = (x + b / a) * np.exp(a * eps) - b / a
    return float(p * (mean - x) / eps)


# --- converse comparison ------------------------------------------------------------


def default_probe_grid(T: float = 1.0, d: int = 1):
    ts = [k * T / 8 for k in range(8)]
    ys = [-1.0, 0.0, 1.0]
    zs = [-1.0, 0.0, 1.0]
    out = []
    for t in ts:
        for y in ys:
            for zc in zs:
                out.append((t, y, tuple([zc] * d)))
    return out


@dataclass
class ConverseReport:
    hypothesis: list  # (label, max over nodes of mean(Y1 - Y2)/SE, holds)
    probes: list  # (t, y, z, D1, D2, diff, se, violated)

    @property
    def hypothesis_holds(self) -> bool:
        return all(h[2] for h in self.hypothesis)

    @property
    def violations(self) -> list:
        return [p for p in self.probes if p[7]]

    @property
    def dominance(self) -> bool:
        return not self.violations

    @property
    def consistent(self) -> bool:
        """Solution ordering over the whole family implies no probe with g1 > g2."""
        return (not self.hypothesis_holds) or self.dominance


def _ordered(s1, s2, N, M):
    worst = -np.inf
    for n in range(N):
        dn = s1.estimator(n) - s2.estimator(n)
        se = max(float(np.std(dn, ddof=1) / np.sqrt(M)), 1e-9)
        worst = max(worst, float(dn.mean()) / se)
    return worst


def converse_comparison(
    g1: Generator,
    g2: Generator,
    cfg: SolverConfig | None = None,
    family=None,
    probes=None,
    eps: float | None = None,
    probe_paths: int = 2**12,
    sub_solver: str = "auto",
) -> ConverseReport:
    """Test the claim g1 <= g2.

    Step 1 checks the solution-level hypothesis Y(g1; xi) <= Y(g2; xi) over a
    terminal family. Step 2 estimates both drivers by difference quotients at
    the smallest eps on a probe grid; a probe is a violation when D1 - D2
    exceeds three standard errors.
    """
    from .gexpectation import default_family

    cfg = cfg or SolverConfig()
    for g in (g1, g2):
        rep = check_a_assumptions(g, probes=cfg.audit_probes, seed=cfg.seed, d=cfg.d, T=cfg.T)
        if not (rep["A1"] and rep["A3"]):
            raise InvalidArgument(f"{g.describe()} fails the Lipschitz audit")
    family = family if family is not None else default_family()
    ctx = cfg.context()
    hyp = []
    for xi in family:
        s1 = solve_lsmc(g1, xi, ctx, cfg.basis, cfg.picard_iters)
        s2 = solve_lsmc(g2, xi, ctx, cfg.basis, cfg.picard_iters)
        w = _ordered(s1, s2, cfg.N, ctx.M)
        hyp.append((xi.label, w, bool(w <= 3.0)))

    eps = eps if eps is not None else cfg.grid.dt
    pcfg = cfg.with_(M=probe_paths)
    rows = []
    for t, y, z in probes if probes is not None else default_probe_grid(cfg.T, cfg.d):
        if t + eps > cfg.T + 1e-12:
            continue
        pr = RepresentationProbe(t, y, z, epsilons=(eps,))
        r1 = difference_quotient_brownian(g1, pr, pcfg, sub_solver=sub_solver, audit=False)
        r2 = difference_quotient_brownian(g2, pr, pcfg, sub_solver=sub_solver, audit=False)
        diff = r1.estimates[0] - r2.estimates[0]
        se = float(np.hypot(r1.ses[0], r2.ses[0]))
        violated = diff > 3 * se + 1e-9
        rows.append((t, y, tuple(z), r1.estimates[0], r2.estimates[0], diff, se, bool(violated)))
    return ConverseReport(hyp, rows)


# --- characterization suites -------------------------------------------------------

PROPERTIES = ("positive_homogeneity", "translation_invariance", "subadditivity", "convexity")
_GEN_PROPERTY = {
    "positive_homogeneity": "positively_homogeneous",
    "translation_invariance": "independent_of_y",
    "subadditivity": "subadditive",
    "convexity": "convex",
}
_FLAG = {
    "positive_homogeneity": "positively_homogeneous",
    "translation_invariance": "independent_of_y",
    "subadditivity": "subadditive",
    "convexity": "convex_in_z",
}


@dataclass
class CharacterizationReport:
    property: str
    direction: str
    flag_declared: bool
    solution_holds: bool
    generator_holds: bool | None
    statistic: float
    tolerance: float
    checks: list = field(default_factory=list)  # (description, statistic, tolerance, ok)
    witness: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        """The implication under test is not contradicted."""
        if self.direction == "generator=>solution":
            return (not self.generator_holds) or self.solution_holds
        return (not self.solution_holds) or bool(self.generator_holds)


def _rms(a):
    return float(np.sqrt(np.mean(a**2)))


def _solution_checks(g, prop, cfg, ctx, tol_l2, se_mult):
    """Solution-level identity or inequality for a property; list of checks."""
    solve = lambda xi: solve_lsmc(g, xi, ctx, cfg.basis, cfg.picard_iters)  # noqa: E731
    w = terminal_affine_w()
    sq = terminal_of_w(lambda x: x * x, "W_T^2")
    checks, witness = [], {}
    N = cfg.N
    if prop == "positive_homogeneity":
        base = {xi.label: (xi, solve(xi)) for xi in (w, sq)}
        for alpha in (0.0, 0.5, 2.0):
            for label, (xi, s) in base.items():
                sa = solve(alpha * xi)
                r = max(_rms(sa.Y[:, n] - alpha * s.Y[:, n]) for n in range(N + 1))
                tol = 1e-12 if alpha == 0 else tol_l2
                checks.append((f"Y(a*xi) = a*Y(xi), a={alpha:g}, xi={label}", r, tol, r <= tol))
    elif prop == "translation_invariance":
        nt = cfg.node(0.5)
        beta = terminal_affine_w(node=nt)
        for xi in (w, sq):
            s, sb = solve(xi), solve(xi + beta)
            bvals = beta(ctx)
            r = max(_rms(sb.Y[:, n] - s.Y[:, n] - bvals) for n in range(nt, N + 1))
            checks.append((f"Y_s(xi + W_0.5) = Y_s(xi) + W_0.5 for s >= 0.5, xi={xi.label}", r, tol_l2, r <= tol_l2))
        zero = solve(terminal_const(0.0))
        one = solve(terminal_const(1.0))
        gap = float(abs(one.Y[:, 0].mean() - zero.Y[:, 0].mean() - 1.0))
        checks.append(("E_g[0 + 1] = E_g[0] + 1", gap, tol_l2, gap <= tol_l2))
        witness = {"E_g[1]": float(one.Y[:, 0].mean()), "E_g[0]": float(zero.Y[:, 0].mean()), "gap": gap}
    elif prop in ("subadditivity", "convexity"):
        pairs = [(w, -w), (w, sq)]
        weights = (1.0,) if prop == "subadditivity" else (0.25, 0.5, 0.75)
        for x1, x2 in pairs:
            s1, s2 = solve(x1), solve(x2)
            for a in weights:
                if prop == "subadditivity":
                    sc = solve(x1 + x2)
                    lhs_e = sc.estimator
                    rhs_e = lambda n: s1.estimator(n) + s2.estimator(n)  # noqa: E731
                    name = f"Y(xi1+xi2) <= Y(xi1)+Y(xi2), ({x1.label}, {x2.label})"
                else:
                    sc = solve(a * x1 + (1 - a) * x2)
                    lhs_e = sc.estimator
                    rhs_e = lambda n, a=a: a * s1.estimator(n) + (1 - a) * s2.estimator(n)  # noqa: E731
                    name = f"convex combination a={a:g}, ({x1.label}, {x2.label})"
                worst = -np.inf
                for n in range(N):
                    dn = lhs_e(n) - rhs_e(n)
                    se = max(float(np.std(dn, ddof=1) / np.sqrt(ctx.M)), 1e-9)
                    worst = max(worst, float(dn.mean()) / se)
                checks.append((name, worst, se_mult, worst <= se_mult))
    else:
        raise InvalidArgument(f"unknown property {prop!r}; expected one of {PROPERTIES}")
    return checks, witness


def characterization_suite(
    g: Generator,
    prop: str,
    direction: str = "generator=>solution",
    cfg: SolverConfig | None = None,
    tol_l2: float = 0.03,
    se_mult: float = 3.0,
) -> CharacterizationReport:
    """Solution-level consequences of a generator property, or the reverse.

    ``generator=>solution``: the generator property is probed directly and
    the solution-level statement is tested on a terminal family.
    ``solution=>generator``: the solution-level statement is sampled first
    and, when it holds, the generator property is checked pointwise.
    Both directions always report both sides so that negative witnesses
    (a property failing at both levels) are visible.
    """
    if prop not in PROPERTIES:
        raise InvalidArgument(f"unknown property {prop!r}; expected one of {PROPERTIES}")
    if direction not in ("generator=>solution", "solution=>generator"):
        raise InvalidArgument(f"unknown direction {direction!r}")
    cfg = cfg or SolverConfig()
    gate(g, cfg, need_a5=False)
    ctx = cfg.context()
    checks, witness = _solution_checks(g, prop, cfg, ctx, tol_l2, se_mult)
    sol_ok = all(c[3] for c in checks)
    viol = property_violation(g, _GEN_PROPERTY[prop], probes=4000, seed=cfg.seed, d=cfg.d, T=cfg.T)
    gen_ok = bool(viol <= 1e-9)
    stat = max(c[1] for c in checks)
    tol = max(c[2] for c in checks)
    witness = dict(witness, generator_violation=viol)
    return CharacterizationReport(prop, direction, bool(g.flags.get(_FLAG[prop], False)), sol_ok, gen_ok,
                                  stat, tol, checks, witness)


# --- equivalences at the g-expectation level ----------------------------------------


@dataclass
class EquivalenceRow:
    name: str
    expectation_level: bool
    generator_level: bool
    detail: str = ""

    @property
    def agrees(self) -> bool:
        return self.expectation_level == self.generator_level


def axiom_equivalence_suite(g: Generator, cfg: SolverConfig | None = None, se_mult: float = 3.0, tol: float = 0.02):
    """Positive homogeneity, translation invariance, sub-additivity and
    convexity of E_g, each set against its generator-level counterpart."""
    cfg = cfg or SolverConfig()
    gate(g, cfg)
    ctx = cfg.context()
    solve = lambda xi: solve_lsmc(g, xi, ctx, cfg.basis, cfg.picard_iters)  # noqa: E731
    w = terminal_affine_w()
    sq = terminal_of_w(lambda x: x * x, "W_T^2")
    cache = {}

    def E(xi):
        if xi.label not in cache:
            cache[xi.label] = solve(xi)
        return cache[xi.label]

    def leq(s_lhs, rhs_est):
        """E_g-level 'lhs <= rhs' within se_mult standard errors; returns (ok, z-score)."""
        dn = s_lhs.estimator(0) - rhs_est
        se = max(float(np.std(dn, ddof=1) / np.sqrt(ctx.M)), 1e-9)
        zs = float(dn.mean()) / se
        return zs <= se_mult, zs

    probe = lambda name: probe_property(g, name, probes=4000, seed=cfg.seed, d=cfg.d, T=cfg.T)  # noqa: E731
    ind_y = probe("independent_of_y")
    rows = []

    # positive homogeneity
    worst = 0.0
    for xi in (w, sq):
        for a in (0.5, 2.0):
            worst = max(worst, abs(E(a * xi).Y[:, 0].mean() - a * E(xi).Y[:, 0].mean()))
    rows.append(EquivalenceRow("positive_homogeneity", bool(worst <= tol), probe("positively_homogeneous"),
                               f"max |E_g[a xi] - a E_g[xi]| = {worst:.3g}"))

    # translation invariance
    worst = 0.0
    for xi in (w, sq, terminal_const(0.0)):
        for c in (-1.0, 1.0):
            worst = max(worst, abs(E(xi + c).Y[:, 0].mean() - E(xi).Y[:, 0].mean() - c))
    rows.append(EquivalenceRow("translation_invariance", bool(worst <= tol), ind_y,
                               f"max |E_g[xi + c] - E_g[xi] - c| = {worst:.3g}"))

    # sub-additivity, including the chain through translation invariance
    ok, zmax = True, -np.inf
    for x1, x2 in ((w, -w), (w, sq)):
        o, zs = leq(E(x1 + x2), E(x1).estimator(0) + E(x2).estimator(0))
        ok &= o
        zmax = max(zmax, zs)
    for xi in (w, sq):
        for c in (1.0,):
            o1, z1 = leq(E(xi + c), E(xi).estimator(0) + E(terminal_const(c)).estimator(0))
            o2, z2 = leq(E(xi), E(xi + c).estimator(0) + E(terminal_const(-c)).estimator(0))
            ok &= o1 and o2
            zmax = max(zmax, z1, z2)
    rows.append(EquivalenceRow("subadditivity", bool(ok), bool(ind_y and probe("subadditive_in_z")),
                               f"largest z-score {zmax:.3g}"))

    # convexity
    ok, zmax = True, -np.inf
    for x1, x2 in ((w, -w), (w, sq)):
        for a in (0.25, 0.5, 0.75):
            o, zs = leq(E(a * x1 + (1 - a) * x2), a * E(x1).estimator(0) + (1 - a) * E(x2).estimator(0))
            ok &= o
            zmax = max(zmax, zs)
    rows.append(EquivalenceRow("convexity", bool(ok), bool(ind_y and probe("convex_in_z")),
                               f"largest z-score {zmax:.3g}"))
    return rows
