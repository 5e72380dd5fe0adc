"""Exhaustive enumeration of index triples (I, J, K) and the counting rules.

Each of I, J, K has length 2m with entries in 1..N.  A triple *survives* when
neither vanishing condition applies:

1. some i_l occurs exactly once in I, J and K together;
2. some slot l has j_l != k_l with both values occurring exactly once.

Under (1) the first cancellation kills the integral, under (2) the second.
Only this direction is proved, so the integral oracle is used to confirm
soundness, never completeness.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import permutations
from math import comb, factorial, prod

import numpy as np

from ..errors import BudgetExceeded, InvalidArgument
from .phi import PhiField

BUDGET = 10**8
VANISH_REL = 1e-6


def binom(a, b):
    """C(a, b), zero when a < b or either argument is negative."""
    if a < 0 or b < 0 or a < b:
        return 0
    return comb(a, b)


def compositions(total, parts, minimum=0):
    """All tuples of ``parts`` integers >= minimum summing to ``total``."""
    if parts == 0:
        if total == 0:
            yield ()
        return
    for first in range(minimum, total - minimum * (parts - 1) + 1):
        for rest in compositions(total - first, parts - 1, minimum):
            yield (first,) + rest


def stars_and_bars(total, parts):
    return binom(total + parts - 1, parts - 1)


def restricted_count_paper(two_m, s):
    """The count as displayed in the source: C(2m - 2s - 1, s - 1)."""
    return binom(two_m - 2 * s - 1, s - 1)


def restricted_count(two_m, s):
    """Solutions of a_1 + ... + a_s = 2m with a_i >= 2: C(2m - s - 1, s - 1)."""
    return binom(two_m - s - 1, s - 1)


def paper_bound(N, m):
    """2m (8e)^m N^{4m} sum_s sum_{a_i >= 2} (2m)! / prod a_i!."""
    multi = sum(factorial(2 * m) // prod(factorial(a) for a in comp)
                for s in range(1, m + 1) for comp in compositions(2 * m, s, 2))
    return 2 * m * (8 * np.e) ** m * float(N) ** (4 * m) * multi


# ---------------------------------------------------------------------------
# triples
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IndexTriple:
    """I, J, K with 1-based entries in 1..N."""

    I: tuple
    J: tuple
    K: tuple
    N: int

    def __post_init__(self):
        lens = {len(self.I), len(self.J), len(self.K)}
        if len(lens) != 1 or lens.pop() % 2 or not self.I:
            raise InvalidArgument("I, J, K must share an even positive length")
        for v in self.I + self.J + self.K:
            if not 1 <= v <= self.N:
                raise InvalidArgument(f"index {v} outside 1..{self.N}")

    @property
    def m(self):
        return len(self.I) // 2

    @property
    def multiplicities(self):
        """a_t: how often each value t = 1..N occurs in I."""
        return tuple(self.I.count(t) for t in range(1, self.N + 1))

    def array(self):
        return np.array([self.I, self.J, self.K]) - 1


def survives_batch(T, N):
    """Vectorized rule over T of shape (B, 3, 2m), values in 0..N-1."""
    T = np.asarray(T)
    B, _, L = T.shape
    flat = T.reshape(B, 3 * L).astype(np.int64)
    cnt = np.bincount((flat + N * np.arange(B)[:, None]).ravel(),
                      minlength=B * N).reshape(B, N)
    at = np.take_along_axis(cnt, flat, axis=1).reshape(B, 3, L)
    cond1 = (at[:, 0] == 1).any(axis=1)
    cond2 = ((T[:, 1] != T[:, 2]) & (at[:, 1] == 1) & (at[:, 2] == 1)).any(axis=1)
    return ~(cond1 | cond2)


def survives(triple: IndexTriple) -> bool:
    return bool(survives_batch(triple.array()[None], triple.N)[0])


def _digits(start, stop, base, width):
    r = np.arange(start, stop, dtype=np.int64)
    out = np.empty((len(r), width), dtype=np.int8)
    for c in range(width - 1, -1, -1):
        r, out[:, c] = np.divmod(r, base)
    return out


def iter_triples(N, m, chunk_lead=True):
    """Yield (B, 3, 2m) blocks covering all N^{6m} triples, one per leading index."""
    L = 2 * m
    rest = N ** (3 * L - 1)
    step = min(rest, 1 << 22)
    for lead in range(N):
        for s in range(0, rest, step):
            body = _digits(s, min(rest, s + step), N, 3 * L - 1)
            block = np.empty((len(body), 3 * L), dtype=np.int8)
            block[:, 0] = lead
            block[:, 1:] = body
            yield block.reshape(-1, 3, L)


def check_budget(N, m, budget=BUDGET):
    total = N ** (6 * m)
    if total > budget:
        raise BudgetExceeded(f"N^(6m) = {N}^{6 * m} = {total} exceeds the budget {budget:g}")
    return total


# ---------------------------------------------------------------------------
# integral oracle (d = 1)
# ---------------------------------------------------------------------------

def canonical_codes(T, N):
    """Label-invariant code per triple: minimum over value relabelings.

    Slots are unordered (the product commutes) and j, k are interchangeable
    (phi2 is symmetric in its last two arguments).
    """
    T = np.asarray(T, dtype=np.int64)
    best = None
    base = N**3
    for perm in permutations(range(N)):
        P = np.asarray(perm)[T]
        j = np.minimum(P[:, 1], P[:, 2])
        k = np.maximum(P[:, 1], P[:, 2])
        slot = np.sort(P[:, 0] * N * N + j * N + k, axis=1)
        code = np.zeros(len(T), dtype=np.int64)
        for c in range(slot.shape[1]):
            code = code * base + slot[:, c]
        best = code if best is None else np.minimum(best, code)
    return best


def decode(code, N, m):
    slots = []
    for _ in range(2 * m):
        code, s = divmod(int(code), N**3)
        slots.append((s // (N * N), (s // N) % N, s % N))
    return np.array(slots[::-1]).T


class Oracle:
    """Product integrals of phi2 on a tensor grid, cached by canonical class."""

    def __init__(self, field: PhiField, quad_n: int = 32):
        if field.dim != 1:
            raise InvalidArgument("the integral oracle is implemented for d = 1")
        if quad_n < 32:
            raise InvalidArgument("quad_n must be >= 32")
        x = (np.arange(quad_n) / quad_n)[:, None]
        self.F = field.phi2(x[:, None, None], x[None, :, None], x[None, None, :])
        self.absF = np.abs(self.F)
        self.w = field.rho(x) / quad_n
        self.cache = {}

    def integral(self, T):
        """(value, scale) for a triple given as a (3, 2m) array of labels."""
        T = np.asarray(T)
        labels = {v: chr(ord("a") + i) for i, v in enumerate(np.unique(T))}
        subs = [labels[T[0, l]] + labels[T[1, l]] + labels[T[2, l]] for l in range(T.shape[1])]
        spec = ",".join(subs + list(labels.values())) + "->"
        ws = [self.w] * len(labels)
        val = np.einsum(spec, *([self.F] * len(subs)), *ws, optimize="greedy")
        scale = np.einsum(spec, *([self.absF] * len(subs)), *ws, optimize="greedy")
        return float(val), float(scale)

    def vanishes(self, T, code=None):
        if code is not None and code in self.cache:
            return self.cache[code][0]
        val, scale = self.integral(T)
        out = abs(val) < VANISH_REL * scale
        if code is not None:
            self.cache[code] = (out, val, scale)
        return out


def oracle_vanishes(triple: IndexTriple, field: PhiField, quad_n: int = 32) -> bool:
    return Oracle(field, quad_n).vanishes(triple.array())


def oracle_field(seed: int = 0, tries: int = 8):
    """A nondegenerate d = 1 trig field for oracle tests.

    Parameters are redrawn if the all-equal m = 1 integral lands below the
    vanishing tolerance.
    """
    from .. import rng
    from ..kernels import make_kernel
    from ..meanfield import cosine_density

    g = rng.stream(seed, "field", 0)
    for _ in range(tries):
        amp = float(g.uniform(0.1, 0.4))
        mode = int(g.integers(1, 3))
        a_rho = float(g.uniform(0.1, 0.4))
        spec = make_kernel(1, diffusion=("trig_sigma", [1.0, amp, mode]))
        f = PhiField(spec, cosine_density(64, [a_rho], dim=1))
        if not Oracle(f).vanishes(np.zeros((3, 2), dtype=int)):
            return f
    raise RuntimeError("could not draw a nondegenerate field")


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

@dataclass
class EnumerationReport:
    N: int
    m: int
    total: int
    survivors: int
    paper_bound: float
    stars_bars_direct: int
    stars_bars_formula: int
    restricted: list = field(default_factory=list)  # (s, direct, corrected, paper)
    oracle: dict | None = None

    @property
    def stars_bars_ok(self):
        return self.stars_bars_direct == self.stars_bars_formula

    @property
    def restricted_ok(self):
        return all(d == c for _, d, c, _ in self.restricted)

    @property
    def paper_restricted_agrees(self):
        return all(d == p for _, d, _, p in self.restricted)

    @property
    def within_bound(self):
        return self.survivors <= self.paper_bound

    @property
    def sound(self):
        return self.oracle is None or self.oracle["rejected_nonvanishing"] == 0

    @property
    def identity_checks_passed(self):
        return self.stars_bars_ok and self.restricted_ok and self.within_bound and self.sound


def enumerate_survivors(N: int, m: int, field: PhiField | None = None, quad_n: int = 32,
                        budget: int = BUDGET) -> EnumerationReport:
    """Count survivors over all N^{6m} triples and run the identity checks.

    With ``field`` given (d = 1), every rejected class is integrated by the
    oracle; survivor classes are integrated too so accidental zeros are
    reported.
    """
    if N < 1 or m < 1:
        raise InvalidArgument("N and m must be positive")
    total = check_budget(N, m, budget)
    oracle = Oracle(field, quad_n) if field is not None else None
    survivors = 0
    classes = {}
    for block in iter_triples(N, m):
        keep = survives_batch(block, N)
        survivors += int(keep.sum())
        if oracle is not None:
            codes = canonical_codes(block, N)
            u, idx = np.unique(codes, return_index=True)
            for c, i in zip(u.tolist(), idx.tolist()):
                classes.setdefault(c, bool(keep[i]))
    info = None
    if oracle is not None:
        rej_bad, surv_zero = [], 0
        for c, keep in classes.items():
            van = oracle.vanishes(decode(c, N, m), code=c)
            if not keep and not van:
                rej_bad.append(decode(c, N, m) + 1)
            surv_zero += int(keep and van)
        info = {"classes": len(classes), "rejected_classes": sum(not k for k in classes.values()),
                "rejected_nonvanishing": len(rej_bad), "offenders": rej_bad[:10],
                "survivor_classes_vanishing": surv_zero}
    direct = sum(1 for _ in compositions(2 * m, N))
    restricted = [(s, sum(1 for _ in compositions(2 * m, s, 2)), restricted_count(2 * m, s),
                   restricted_count_paper(2 * m, s)) for s in range(1, m + 1)]
    return EnumerationReport(N, m, total, survivors, paper_bound(N, m), direct,
                             stars_and_bars(2 * m, N), restricted, info)
