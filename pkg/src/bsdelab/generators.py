"""BSDE drivers g(t, y, z), terminal conditions and their assumption audits."""
from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .errors import InvalidArgument
from .forward import AssumptionReport
from .stochastic import STREAM_PROBES, PathContext, rng_for

FLAG_NAMES = (
    "independent_of_y",
    "positively_homogeneous",
    "subadditive",
    "convex_in_z",
    "satisfies_A5",
)


@dataclass(frozen=True, eq=False)
class Generator:
    """Driver of the BSDE.

    ``fn(t, y, z)`` is vectorised: y has shape (P,), z has shape (P, d) and
    the result has shape (P,). With ``u_dependent`` the call is
    ``fn(t, y, z, u)`` where u holds the per-path value of the enlargement
    variable (zeros when there is none). Callables must be pure.
    """

    fn: Callable
    K: float
    flags: dict
    label: str = "custom"
    params: dict = field(default_factory=dict)
    u_dependent: bool = False
    linear: tuple | None = None  # (a, b, c) when g = a*y + b*z + c

    def __call__(self, t, y, z, u=None):
        y = np.asarray(y, dtype=float)
        z = np.asarray(z, dtype=float)
        if z.ndim == 1:
            z = z[:, None]
        if self.u_dependent:
            if u is None:
                u = np.zeros(y.shape)
            out = self.fn(t, y, z, u)
        else:
            out = self.fn(t, y, z)
        return np.broadcast_to(np.asarray(out, dtype=float), y.shape)

    def describe(self) -> str:
        if not self.params:
            return self.label
        args = ",".join(f"{v:g}" for v in self.params.values())
        return f"{self.label}({args})"


def _zero(t, y, z):
    return np.zeros(y.shape)


def make_linear(a: float = 0.0, b=1.0, c: float = 0.0) -> Generator:
    """g = a*y + b.z + c. ``b`` may be a scalar (applied to every z component) or a length-d vector."""
    bvec = np.atleast_1d(np.asarray(b, dtype=float))

    def fn(t, y, z):
        coef = np.broadcast_to(bvec, (z.shape[1],))
        return a * y + z @ coef + c

    K = max(abs(a), float(np.linalg.norm(bvec)))
    flags = {
        "independent_of_y": a == 0,
        "positively_homogeneous": c == 0,
        # additive up to the constant: g(p1 + p2) = g(p1) + g(p2) - c
        "subadditive": c >= 0,
        "convex_in_z": True,
        "satisfies_A5": c == 0 and a == 0,
    }
    scalar_b = bvec.size == 1
    params = {"a": a, "b": float(bvec[0]) if scalar_b else tuple(bvec.tolist()), "c": c}
    return Generator(fn, K, flags, "linear", params, linear=(a, float(bvec[0]), c) if scalar_b else None)


def make_kappa_abs_z(kappa: float = 0.5) -> Generator:
    def fn(t, y, z):
        return kappa * np.linalg.norm(z, axis=1)

    flags = {
        "independent_of_y": True,
        "positively_homogeneous": True,
        "subadditive": kappa >= 0,
        "convex_in_z": kappa >= 0,
        "satisfies_A5": True,
    }
    return Generator(fn, abs(kappa), flags, "kappa_abs_z", {"kappa": kappa})


def make_discount(beta: float = 1.0) -> Generator:
    def fn(t, y, z):
        return -beta * y

    flags = {
        "independent_of_y": beta == 0,
        "positively_homogeneous": True,
        "subadditive": True,
        "convex_in_z": True,
        "satisfies_A5": beta == 0,
    }
    return Generator(fn, abs(beta), flags, "discount", {"beta": beta}, linear=(-beta, 0.0, 0.0))


def make_zero() -> Generator:
    flags = {name: True for name in FLAG_NAMES}
    return Generator(_zero, 0.0, flags, "zero", {}, linear=(0.0, 0.0, 0.0))


def make_custom(fn, K, flags=None, label="custom", u_dependent=False, d=1, seed=0) -> Generator:
    """Wrap a user driver. Flags not given are inferred by probing."""
    g = Generator(fn, float(K), {}, label, {}, u_dependent=u_dependent)
    inferred = {name: probe_property(g, name, d=d, seed=seed) for name in FLAG_NAMES}
    inferred.update(flags or {})
    return replace(g, flags=inferred)


_CATALOG = {
    "zero": (make_zero, ()),
    "linear": (make_linear, ("a", "b", "c")),
    "kappa_abs_z": (make_kappa_abs_z, ("kappa",)),
    "discount": (make_discount, ("beta",)),
}

CATALOG_DEFAULTS = {
    "zero": {},
    "linear": {"a": 0.0, "b": 1.0, "c": 0.0},
    "kappa_abs_z": {"kappa": 0.5},
    "discount": {"beta": 1.0},
}

_SPEC = re.compile(r"^\s*([A-Za-z_]+)\s*(?:\((.*)\))?\s*$")


def builtin(label: str, *args, **params) -> Generator:
    """Catalog lookup, e.g. ``builtin("kappa_abs_z", kappa=0.5)`` or ``builtin("linear(0,1,0)")``."""
    m = _SPEC.match(label)
    if not m:
        raise InvalidArgument(f"cannot parse generator spec {label!r}")
    name, argstr = m.group(1), m.group(2)
    if argstr:
        try:
            args = tuple(float(a) for a in argstr.split(",") if a.strip()) + args
        except ValueError as exc:
            raise InvalidArgument(f"bad arguments in generator spec {label!r}") from exc
    if name == "custom":
        if "fn" not in params or "K" not in params:
            raise InvalidArgument("custom generator needs fn= and K=")
        return make_custom(**params)
    if name not in _CATALOG:
        raise InvalidArgument(f"unknown generator {name!r}; known: {sorted(_CATALOG) + ['custom']}")
    factory, names = _CATALOG[name]
    if len(args) > len(names):
        raise InvalidArgument(f"{name} takes at most {len(names)} arguments")
    kwargs = dict(CATALOG_DEFAULTS[name])
    kwargs.update(zip(names, args))
    unknown = set(params) - set(names)
    if unknown:
        raise InvalidArgument(f"unknown parameters {sorted(unknown)} for {name}")
    kwargs.update(params)
    return factory(**kwargs)


def catalog_labels():
    return sorted(_CATALOG) + ["custom"]


# --- probing ---------------------------------------------------------------


def _probe_points(n, d, seed, box_y, box_z, T, stream_block=0):
    rng = rng_for(seed, STREAM_PROBES, 100 + stream_block)
    t = rng.uniform(0.0, T, n)
    y = rng.uniform(-box_y, box_y, n)
    z = rng.uniform(-box_z, box_z, (n, d))
    u = rng.choice([-1.0, 1.0], n)
    return t, y, z, u


def _eval(g, t, y, z, u):
    """Evaluate at per-probe times."""
    ts = np.unique(t)
    if ts.size == 1:
        return g(ts[0], y, z, u)
    out = np.empty(y.shape)
    for ti in ts:
        sel = t == ti
        out[sel] = g(ti, y[sel], z[sel], u[sel])
    return out


def probe_property(
    g: Generator, name: str, probes: int = 2000, seed: int = 0, d: int = 1, box_y=5.0, box_z=5.0, T=1.0, tol=1e-9
) -> bool:
    """Direct pointwise test of a structural property of g on the probe box.

    Probe times are shared within a probe batch (one t per batch of pairs)
    so time-dependent drivers are compared at equal t.
    """
    return bool(property_violation(g, name, probes, seed, d, box_y, box_z, T) <= tol)


def property_violation(g, name, probes=2000, seed=0, d=1, box_y=5.0, box_z=5.0, T=1.0):
    """Largest observed violation of a property on the probe box (0 means none seen)."""
    rng = rng_for(seed, STREAM_PROBES, 200)
    n_t = 16
    per = max(1, probes // n_t)
    worst = 0.0
    for t in rng.uniform(0.0, T, n_t):
        y1 = rng.uniform(-box_y, box_y, per)
        y2 = rng.uniform(-box_y, box_y, per)
        z1 = rng.uniform(-box_z, box_z, (per, d))
        z2 = rng.uniform(-box_z, box_z, (per, d))
        u = rng.choice([-1.0, 1.0], per)
        a = rng.uniform(0.0, 1.0, per)
        f = lambda y, z: g(t, y, z, u)  # noqa: E731
        if name == "independent_of_y":
            v = np.abs(f(y1, z1) - f(y2, z1))
        elif name == "positively_homogeneous":
            alpha = rng.uniform(0.0, 4.0, per)
            v = np.abs(f(alpha * y1, alpha[:, None] * z1) - alpha * f(y1, z1))
        elif name == "subadditive":
            v = f(y1 + y2, z1 + z2) - f(y1, z1) - f(y2, z2)
        elif name == "convex":
            v = f(a * y1 + (1 - a) * y2, a[:, None] * z1 + (1 - a[:, None]) * z2) - (
                a * f(y1, z1) + (1 - a) * f(y2, z2)
            )
        elif name == "convex_in_z":
            v = f(y1, a[:, None] * z1 + (1 - a[:, None]) * z2) - (a * f(y1, z1) + (1 - a) * f(y1, z2))
        elif name == "subadditive_in_z":
            v = f(y1, z1 + z2) - f(y1, z1) - f(y1, z2)
        elif name == "satisfies_A5":
            v = np.abs(f(y1, np.zeros_like(z1)))
        else:
            raise InvalidArgument(f"unknown property {name!r}")
        worst = max(worst, float(np.max(v)))
    return worst


def check_a_assumptions(
    g: Generator,
    probes: int = 10_000,
    seed: int = 0,
    d: int = 1,
    box_y: float = 5.0,
    box_z: float = 5.0,
    T: float = 1.0,
    gap_tol: float = 1e-6,
) -> AssumptionReport:
    """Audit A1 (Lipschitz in (y, z)), sampled sup |g(t,0,0)|, right-continuity
    in t and g(t, y, 0) = 0.

    Integrability conditions cannot be decided from samples; the sampled sup of
    |g(t, 0, 0)| is reported and only required to be finite.
    """
    if probes < 1:
        raise InvalidArgument("probes must be >= 1")
    t, y, z, u = _probe_points(probes, d, seed, box_y, box_z, T)
    t2, y2, z2, _ = _probe_points(probes, d, seed, box_y, box_z, T, stream_block=1)
    k = probes // 3
    # first third moves y only, second third moves z only, the rest moves both
    y2[k : 2 * k] = y[k : 2 * k]
    z2[:k] = z[:k]
    t2 = t
    g1 = _eval(g, t, y, z, u)
    g2 = _eval(g, t2, y2, z2, u)
    dist = np.abs(y - y2) + np.linalg.norm(z - z2, axis=1)
    ok = dist > 0
    ratio = np.where(ok, np.abs(g1 - g2) / np.where(ok, dist, 1.0), 0.0)
    i_lip = int(np.argmax(ratio))
    lip = float(ratio[i_lip])

    tg = np.linspace(0.0, T, 257)
    zeros1 = np.zeros(1)
    g00 = np.array([g(ti, zeros1, np.zeros((1, d)), zeros1)[0] for ti in tg])
    sup00 = float(np.max(np.abs(g00)))

    h = 1e-9
    n_rc = min(probes, 500)
    tr = np.minimum(t[:n_rc], T - 2 * h)
    right = np.abs(_eval(g, tr + h, y[:n_rc], z[:n_rc], u[:n_rc]) - _eval(g, tr, y[:n_rc], z[:n_rc], u[:n_rc]))
    right_max = float(right.max())

    # deterministic levels first so that witnesses are readable
    fixed = np.array([1.0, -1.0, 0.5, -0.5, box_y, -box_y])
    ya5 = np.concatenate([fixed, y])
    ta5 = np.concatenate([np.zeros(fixed.size), t])
    ua5 = np.concatenate([np.ones(fixed.size), u])
    a5 = np.abs(_eval(g, ta5, ya5, np.zeros((ya5.size, d)), ua5))
    a5_max = float(a5.max())
    a5_bad = np.flatnonzero(a5 > 1e-12)
    witnesses = {"A1": {"t": float(t[i_lip]), "y": (float(y[i_lip]), float(y2[i_lip])),
                        "z": (z[i_lip].tolist(), z2[i_lip].tolist()), "ratio": lip}}
    if a5_bad.size:
        i = int(a5_bad[0])
        witnesses["A5"] = {"t": float(ta5[i]), "y": float(ya5[i]), "z": 0.0,
                           "g": float(_eval(g, ta5[i : i + 1], ya5[i : i + 1], np.zeros((1, d)), ua5[i : i + 1])[0])}
    return AssumptionReport(
        checks={
            "A1": lip <= g.K * (1 + 1e-9) + 1e-12,
            "A3": bool(np.isfinite(sup00)),
            "A4": right_max <= gap_tol,
            "A5": a5_max <= 1e-12,
        },
        observed={"lipschitz_ratio": lip, "sup_g00": sup00, "right_gap": right_max, "max_abs_g_y0": a5_max},
        witnesses=witnesses,
    )


# --- terminal conditions ---------------------------------------------------


@dataclass(frozen=True, eq=False)
class TerminalCondition:
    """Square-integrable functional of the path data observed up to ``node``.

    ``affine`` is (scale, shift) when the value is ``scale * W_node + shift``
    (component 0); closed-form solvers rely on it.
    """

    fn: Callable  # PathContext -> (M,) array
    kind: str = "brownian"
    label: str = "xi"
    node: int | None = None
    affine: tuple | None = None
    features: tuple = ()  # (node, PathContext -> (M,) array) regressors carried from node on
    events: tuple = ()  # (node, PathContext -> (M,) bool) strata carried from node on
    of_w: Callable | None = None  # f with xi = f(W_T) when xi depends on W_T only

    def __call__(self, ctx: PathContext) -> np.ndarray:
        return np.asarray(self.fn(ctx), dtype=float).reshape(ctx.M)

    def at_node(self, ctx: PathContext) -> int:
        return ctx.grid.N if self.node is None else self.node

    def _merge(self, other, fn, label, affine, of_w=None):
        if isinstance(other, TerminalCondition):
            node = None if None in (self.node, other.node) else max(self.node, other.node)
            kinds = {self.kind, other.kind}
            kind = "enlarged" if "enlarged" in kinds else ("forward" if "forward" in kinds else "brownian")
            feats = self.features + other.features
            evs = self.events + other.events
        else:
            node, kind, feats, evs = self.node, self.kind, self.features, self.events
        return TerminalCondition(fn, kind, label, node, affine, feats, evs, of_w)

    def __add__(self, other):
        if isinstance(other, TerminalCondition):
            aff = None
            if self.affine and other.affine and self.node == other.node:
                aff = (self.affine[0] + other.affine[0], self.affine[1] + other.affine[1])
            f1, f2 = self.of_w, other.of_w
            of_w = (lambda w: f1(w) + f2(w)) if f1 and f2 else None
            return self._merge(other, lambda ctx: self(ctx) + other(ctx), f"({self.label})+({other.label})", aff, of_w)
        c = float(other)
        aff = (self.affine[0], self.affine[1] + c) if self.affine else None
        f = self.of_w
        of_w = (lambda w: f(w) + c) if f else None
        return self._merge(c, lambda ctx: self(ctx) + c, f"({self.label})+{c:g}", aff, of_w)

    __radd__ = __add__

    def __mul__(self, alpha):
        a = float(alpha)
        aff = (a * self.affine[0], a * self.affine[1]) if self.affine else None
        f = self.of_w
        of_w = (lambda w: a * f(w)) if f else None
        return self._merge(a, lambda ctx: a * self(ctx), f"{a:g}*({self.label})", aff, of_w)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-other if isinstance(other, TerminalCondition) else -float(other))

    def with_feature(self, node: int, fn: Callable) -> "TerminalCondition":
        return replace(self, features=self.features + ((node, fn),))

    def restricted_to(self, event_node: int, indicator: Callable, label: str = "A") -> "TerminalCondition":
        """I_A * xi for an event A measurable at ``event_node``; A becomes a regression stratum."""
        return TerminalCondition(
            lambda ctx: indicator(ctx).astype(float) * self(ctx),
            self.kind,
            f"I[{label}]*({self.label})",
            self.node,
            None,
            self.features,
            self.events + ((event_node, indicator),),
        )


def terminal_affine_w(scale: float = 1.0, shift: float = 0.0, node: int | None = None) -> TerminalCondition:
    """xi = scale * W_node + shift (first Brownian component); node None means T."""

    def fn(ctx):
        n = ctx.grid.N if node is None else node
        return scale * ctx.paths.W[:, n, 0] + shift

    label = f"{scale:g}*W" + ("_T" if node is None else f"[{node}]") + (f"+{shift:g}" if shift else "")
    if node is None:
        return TerminalCondition(fn, "brownian", label, None, (scale, shift), of_w=lambda w: scale * w + shift)
    # the value is frozen at ``node``; regressions must be able to see it afterwards
    return TerminalCondition(fn, "brownian", label, None, None, ((node, lambda ctx: ctx.paths.W[:, node, 0]),))


def terminal_const(c: float) -> TerminalCondition:
    c = float(c)
    return TerminalCondition(
        lambda ctx: np.full(ctx.M, c), "brownian", f"{c:g}", None, (0.0, c), of_w=lambda w: np.full(np.shape(w), c)
    )


def terminal_of_w(f: Callable, label: str = "f(W_T)") -> TerminalCondition:
    """xi = f(W_T) for a vectorised scalar function f."""
    return TerminalCondition(lambda ctx: f(ctx.paths.W[:, -1, 0]), "brownian", label, of_w=f)


def terminal_forward_affine(y: float, p, x) -> TerminalCondition:
    """xi = y + p . (G_T - x) for the forward paths attached to the context."""
    p = np.atleast_1d(np.asarray(p, dtype=float))
    x = np.atleast_1d(np.asarray(x, dtype=float))

    def fn(ctx):
        if ctx.forward is None:
            raise InvalidArgument("terminal needs forward paths in the context")
        return y + (ctx.forward.states[:, -1, :] - x) @ p

    return TerminalCondition(fn, "forward", f"{y:g}+p.(G_T-x)")


def terminal_enlarged(f: Callable, label: str = "f(W_T,U)") -> TerminalCondition:
    """xi = f(W_T, U) where U is the enlargement variable."""

    def fn(ctx):
        if ctx.U is None:
            raise InvalidArgument("terminal needs an enlargement variable")
        return f(ctx.paths.W[:, -1, 0], ctx.U.values)

    return TerminalCondition(fn, "enlarged", label)


def terminal_values(values: np.ndarray, node: int, label: str = "Y_t", state_fn=None) -> TerminalCondition:
    """Frozen per-path values observed at ``node`` (e.g. a previously computed Y_t)."""
    v = np.asarray(values, dtype=float)
    feats = () if state_fn is None else ((node, state_fn),)
    return TerminalCondition(lambda ctx: v, "brownian", label, node, None, feats)


def second_moment(xi: TerminalCondition, ctx: PathContext) -> float:
    return float(np.mean(xi(ctx) ** 2))
