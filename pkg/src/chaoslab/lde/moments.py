"""Constants of the exponential law of large numbers and Monte Carlo checks."""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np

from .. import rng
from ..chaos import density_ratios, sigma_bound
from ..errors import ConstraintViolation, InvalidArgument
from ..kernels import grid_points
from .phi import PhiField, sample_background

E = np.e
HYPOTHESIS_LIMIT = 1.0 / (6 * E**2)
P_GRID = (1, 2, 4, 8, 16)


def alpha_of(m):
    return 32 * E**3 * m**2


def beta_of(m):
    return (3 * E**2 * m) ** 2


def bound_constant(alpha, beta):
    """2 (1 + 4 alpha / (1 - alpha)^3 + 1 / (1 - beta))."""
    if not (alpha < 1 and beta < 1):
        raise ConstraintViolation(
            f"alpha={alpha:.4g}, beta={beta:.4g}: both must be < 1",
            assumption="alpha < 1" if alpha >= 1 else "beta < 1")
    return 2 * (1 + 4 * alpha / (1 - alpha) ** 3 + 1 / (1 - beta))


@dataclass(frozen=True)
class BoundConstants:
    B: float  # pointwise bound on |phi2|
    eta: float
    M_p_sup: float  # certified: eta * B
    M_p_sup_sampled: float
    alpha: float
    beta: float
    C_bound: float

    @property
    def hypothesis_holds(self):
        return self.M_p_sup < HYPOTHESIS_LIMIT

    def as_dict(self):
        return {"B": self.B, "eta": self.eta, "M_p_sup": self.M_p_sup,
                "M_p_sup_sampled": self.M_p_sup_sampled, "alpha": self.alpha,
                "beta": self.beta, "C": self.C_bound}


def phi2_bound(field: PhiField):
    """8d|s|^2 + 8d|s|^2 |grad rho|/inf rho + 2d|s|^2 |D^2 rho|/inf rho."""
    r1, r2, _ = density_ratios([field.background])
    return sigma_bound(field.spec, r1, r2)


def sampled_moment_sup(field: PhiField, eta=1.0, nx=None, nz=48, p_grid=P_GRID):
    """max_p ||sup_{z,z'} |eta phi2(., z, z')| ||_{L^p(rho dx)} / p over ``p_grid``."""
    n = nx or min(field.background.n, 64 if field.dim == 1 else 16)
    xs = grid_points(n, field.dim)
    sup = eta * field.sup_abs(xs, nz=nz if field.dim == 1 else 12)
    w = field.rho(xs) / n**field.dim
    vals = [float((w @ sup**p) ** (1.0 / p)) / p for p in p_grid]
    return max(vals), sup


def constants(field: PhiField, eta_mode="paper_formula", eta=None, sample=True):
    """B, eta, the moment bound and alpha, beta, C.

    ``eta_mode='paper_formula'`` sets eta = 1/(12 e^2 B); ``'given'`` uses
    ``eta``.  The moment sup is certified by eta * B, which dominates every
    L^p norm divided by p >= 1.
    """
    B = phi2_bound(field)
    if eta_mode == "paper_formula":
        eta = 1.0 / (12 * E**2 * B)
    elif eta_mode == "given":
        if eta is None or not eta > 0:
            raise InvalidArgument("eta_mode='given' needs a positive eta")
    else:
        raise InvalidArgument(f"unknown eta_mode {eta_mode!r}")
    m = eta * B
    a, b = alpha_of(m), beta_of(m)
    C = bound_constant(a, b)
    sampled = sampled_moment_sup(field, eta)[0] if sample else float("nan")
    return BoundConstants(B, float(eta), m, sampled, a, b, C)


# ---------------------------------------------------------------------------
# Monte Carlo
# ---------------------------------------------------------------------------

@dataclass
class MCEstimate:
    N: int
    n_mc: int
    mean: float
    stderr: float
    ci: tuple
    max_exponent: float
    C_bound: float | None = None

    @property
    def upper(self):
        return self.mean + 3 * self.stderr

    @property
    def within_bound(self):
        return self.C_bound is None or self.upper <= self.C_bound


MC_BLOCK = 500


def _scaled_sums(field: PhiField, eta, N, n_mc, seed):
    """N^-2 sum eta phi2 per configuration; one stream per fixed-size block."""
    f = field.scaled(eta)
    out = np.empty(n_mc)
    for start in range(0, n_mc, MC_BLOCK):
        stop = min(n_mc, start + MC_BLOCK)
        g = rng.stream(seed, "mc", N, start)
        X = sample_background(f, (stop - start, N), g)
        out[start:stop] = f.grouped_sum(X) / N**2
    return out


def _bootstrap_ci(values, seed, n_boot=200, level=0.95):
    g = rng.stream(seed, "bootstrap", len(values), 0)
    means = np.array([values[g.integers(0, len(values), len(values))].mean()
                      for _ in range(n_boot)])
    lo, hi = np.quantile(means, [(1 - level) / 2, (1 + level) / 2])
    return float(lo), float(hi)


def exp_moment_mc(field: PhiField, eta: float, N: int, n_mc: int = 10_000, seed: int = 0,
                  C_bound: float | None = None) -> MCEstimate:
    """Monte Carlo estimate of E exp(N^-2 sum_{i,j,k} eta phi2(x_i, x_j, x_k)).

    Configurations are i.i.d. draws from the background to the power N.
    """
    if N < 2:
        raise InvalidArgument("N must be >= 2")
    if n_mc < 1000:
        raise InvalidArgument("n_mc must be >= 1000")
    expo = _scaled_sums(field, eta, N, n_mc, seed)
    mx = float(np.abs(expo).max())
    if mx > 700:
        raise OverflowError(f"exponent reached {mx:.4g}")
    vals = np.exp(expo)
    se = float(vals.std(ddof=1) / np.sqrt(n_mc))
    return MCEstimate(N, n_mc, float(vals.mean()), se, _bootstrap_ci(vals, seed), mx,
                      C_bound)


def exp_moment_quadrature(field: PhiField, eta: float, n: int = 64):
    """The N = 2 exponential moment by tensor-grid quadrature (d = 1)."""
    if field.dim != 1:
        raise InvalidArgument("tensor quadrature implemented for d = 1")
    x = np.arange(n) / n
    X = np.stack(np.meshgrid(x, x, indexing="ij"), axis=-1).reshape(-1, 2, 1)
    f = field.scaled(eta)
    expo = f.grouped_sum(X) / 4.0
    w = field.rho(x[:, None]) / n
    W = np.outer(w, w).ravel()
    return float(W @ np.exp(expo))


def moment_term_mc(field: PhiField, eta: float, N: int, m: int, n_mc: int = 10_000,
                   seed: int = 0):
    """r_m = 2/(2m)! E[(N^-2 sum eta phi2)^(2m)], with its standard error."""
    s = _scaled_sums(field, eta, N, n_mc, seed)
    v = 2.0 / factorial(2 * m) * s ** (2 * m)
    return float(v.mean()), float(v.std(ddof=1) / np.sqrt(n_mc))


def large_m_bound(m_sup, m):
    """2 (3 e^2 M)^(2m), valid when 4m > N."""
    return 2 * (3 * E**2 * m_sup) ** (2 * m)


def small_m_bound(m_sup, m):
    """2 * 2 m^2 (sqrt(32 e^3) M)^(2m), valid when 4 <= 4m <= N."""
    return 2 * 2 * m**2 * (np.sqrt(32 * E**3) * m_sup) ** (2 * m)


def proposition_bound(m_sup, m, N):
    return large_m_bound(m_sup, m) if 4 * m > N else small_m_bound(m_sup, m)
