"""Seeded randomness, uniform time grids, Brownian increments and the
initial-enlargement variable.

Random numbers come from Philox streams keyed by ``(seed, stream, block)``
where a block is a fixed run of :data:`BLOCK_PATHS` consecutive paths. Path
``m`` therefore always receives the same normals for a given seed, whatever
the total number of paths or the order in which blocks are produced.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import InvalidArgument

BLOCK_PATHS = 1024

STREAM_BROWNIAN = 0
STREAM_ENLARGEMENT = 1
STREAM_PROBES = 2
STREAM_TESTS = 3

_U64 = (1 << 64) - 1


def rng_for(seed: int, stream: int, block: int = 0) -> np.random.Generator:
    """Counter-based generator for one ``(seed, stream, block)`` key."""
    ss = np.random.SeedSequence([int(seed) & _U64, int(stream), int(block)])
    return np.random.Generator(np.random.Philox(ss))


def _block_draws(seed, stream, n_paths, per_path, draw):
    out = []
    for block in range(-(-n_paths // BLOCK_PATHS)):
        take = min(BLOCK_PATHS, n_paths - block * BLOCK_PATHS)
        rng = rng_for(seed, stream, block)
        # always draw the full block so the first m paths never depend on n_paths
        out.append(draw(rng, (BLOCK_PATHS,) + per_path)[:take])
    return np.concatenate(out, axis=0)


@dataclass(frozen=True)
class TimeGrid:
    T: float
    N: int
    t0: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.T) and self.T > 0):
            raise InvalidArgument(f"horizon T must be positive, got {self.T!r}")
        if int(self.N) != self.N or self.N < 1:
            raise InvalidArgument(f"number of steps N must be a positive integer, got {self.N!r}")
        object.__setattr__(self, "N", int(self.N))

    @property
    def dt(self) -> float:
        return self.T / self.N

    @cached_property
    def nodes(self) -> np.ndarray:
        t = self.t0 + np.arange(self.N + 1) * self.dt
        t[-1] = self.t0 + self.T
        t.flags.writeable = False
        return t

    def node_of(self, time: float, tol: float = 1e-9) -> int:
        """Index of the node at ``time``; raises if ``time`` is off-grid."""
        k = (time - self.t0) / self.dt
        n = int(round(k))
        if abs(k - n) > tol or not 0 <= n <= self.N:
            raise InvalidArgument(f"time {time!r} is not a node of {self}")
        return n


def make_grid(T: float, N: int) -> TimeGrid:
    return TimeGrid(float(T), N)


@dataclass(frozen=True, eq=False)
class BrownianPaths:
    grid: TimeGrid
    d: int
    M: int
    increments: np.ndarray  # (M, N, d)
    seed: int

    @cached_property
    def W(self) -> np.ndarray:
        """Cumulative paths, shape (M, N+1, d), with W[:, 0] = 0."""
        W = np.zeros((self.M, self.grid.N + 1, self.d))
        np.cumsum(self.increments, axis=1, out=W[:, 1:])
        W.flags.writeable = False
        return W

    def at(self, n: int) -> np.ndarray:
        return self.W[:, n, :]

    def coarsen(self, factor: int) -> "BrownianPaths":
        """Same Brownian paths observed on a grid ``factor`` times coarser."""
        N = self.grid.N
        if factor < 1 or N % factor:
            raise InvalidArgument(f"cannot coarsen {N} steps by {factor}")
        inc = self.increments.reshape(self.M, N // factor, factor, self.d).sum(axis=2)
        inc.flags.writeable = False
        grid = TimeGrid(self.grid.T, N // factor, self.grid.t0)
        return BrownianPaths(grid, self.d, self.M, inc, self.seed)


def simulate_brownian(grid: TimeGrid, d: int, M: int, seed: int) -> BrownianPaths:
    if d < 1 or M < 1:
        raise InvalidArgument(f"need d >= 1 and M >= 1, got d={d}, M={M}")
    z = _block_draws(
        seed, STREAM_BROWNIAN, M, (grid.N, d), lambda rng, shape: rng.standard_normal(shape)
    )
    inc = z * np.sqrt(grid.dt)
    inc.flags.writeable = False
    return BrownianPaths(grid, int(d), int(M), inc, int(seed))


@dataclass(frozen=True, eq=False)
class EnlargementVariable:
    """Independent time-0 random variable U with finite support.

    Adding sigma(U) to F_0 gives a filtration strictly larger than the
    Brownian one, so that Y_0 becomes a random variable (one value per atom).
    """

    atoms: np.ndarray
    probs: np.ndarray
    index: np.ndarray  # (M,) atom index per path

    @property
    def values(self) -> np.ndarray:
        return self.atoms[self.index]

    @property
    def n_atoms(self) -> int:
        return len(self.atoms)


def sample_enlargement(atoms, probs, M: int, seed: int) -> EnlargementVariable:
    atoms = np.asarray(atoms, dtype=float)
    probs = np.asarray(probs, dtype=float)
    if atoms.ndim != 1 or atoms.size == 0:
        raise InvalidArgument("enlargement needs a nonempty list of atoms")
    if probs.shape != atoms.shape:
        raise InvalidArgument("atoms and probs must have the same length")
    if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-12:
        raise InvalidArgument(f"probabilities must be >= 0 and sum to 1, got {probs.tolist()}")
    if M < 1:
        raise InvalidArgument("M must be positive")
    u = _block_draws(seed, STREAM_ENLARGEMENT, M, (), lambda rng, shape: rng.random(shape))
    cdf = np.cumsum(probs)
    cdf[-1] = 1.0
    index = np.searchsorted(cdf, u, side="right")
    index = np.minimum(index, len(atoms) - 1)
    index.flags.writeable = False
    return EnlargementVariable(atoms, probs, index)


INITIAL = "initial"


@dataclass(frozen=True, eq=False)
class Event:
    """Indicator of a set A measurable at a node (or at time 0 through U)."""

    indicator: np.ndarray  # (M,) bool
    node: int | str
    label: str = ""

    def available_at(self, n: int) -> bool:
        return self.node == INITIAL or n >= self.node

    @property
    def as_float(self) -> np.ndarray:
        return self.indicator.astype(float)


def half_space_event(paths: BrownianPaths, node: int, threshold: float = 0.0, component: int = 0) -> Event:
    ind = paths.at(node)[:, component] > threshold
    return Event(ind, node, f"W[{node}]>{threshold:g}")


def band_event(paths: BrownianPaths, node: int, lo: float, hi: float, component: int = 0) -> Event:
    w = paths.at(node)[:, component]
    return Event((w > lo) & (w < hi), node, f"{lo:g}<W[{node}]<{hi:g}")


def atom_event(U: EnlargementVariable, atom: int) -> Event:
    return Event(U.index == atom, INITIAL, f"U=={U.atoms[atom]:g}")


@dataclass(frozen=True, eq=False)
class PathContext:
    """Everything a path functional may look at: W, optionally U and a forward diffusion."""

    paths: BrownianPaths
    U: EnlargementVariable | None = None
    forward: object | None = None  # ForwardPaths
    extras: dict = field(default_factory=dict)

    @property
    def grid(self) -> TimeGrid:
        return self.paths.grid

    @property
    def M(self) -> int:
        return self.paths.M
