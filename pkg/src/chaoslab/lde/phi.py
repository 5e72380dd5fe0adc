"""Error fields of the entropy estimate and their cancellation identities.

For a background density rho and diagonal diffusion sigma write, per axis a,

    F_a(x, z, z') = sigma_aa(x - z) sigma_aa(x - z') - (sigma_aa * rho)(x)^2

Then phi2 = sum_a d_a^2 F_a + 2 d_a F_a d_a log rho + F_a d_a^2 rho / rho,
which equals rho^{-1} sum_a d_a^2 (rho F_a).  That identity is why the
integral against rho(x) vanishes; averaging F over z, z' ~ rho gives the
second cancellation.
"""

from __future__ import annotations

import numpy as np

from .. import rng
from ..errors import CancellationFailure, DomainError, InvalidArgument
from ..kernels import KernelSpec, grid_points
from ..meanfield import DensityGrid


class PhiField:
    """phi1 / phi2 for a kernel and a fixed background density.

    ``scale`` multiplies every value (the eta of the exponential moment).
    """

    def __init__(self, spec: KernelSpec, background: DensityGrid, kind="phi2",
                 scale=1.0):
        if kind not in ("phi1", "phi2"):
            raise InvalidArgument(f"unknown field kind {kind!r}")
        if background.dim != spec.dim:
            raise InvalidArgument("background and kernel dimensions differ")
        if not background.values.min() > 0:
            raise DomainError("background density must be strictly positive")
        if not spec.is_trig:
            raise InvalidArgument("phi fields need trigonometric kernels")
        self.spec = spec
        self.background = background
        self.kind = kind
        self.scale = float(scale)
        self.dim = spec.dim
        self.rho = background.interpolant()
        # unit mass so constant diffusion gives S = c and F = 0 exactly
        mass = 1.0
        self.mass = mass

        def conv(f):
            return f.convolve(self.rho.fourier_coefficients(f.wavevectors), mass)

        self.sig = []  # per axis: (sigma, sigma', sigma'') along that axis
        self.S = []  # per axis: (S, S', S'') with S = sigma * rho
        for a, f in enumerate(spec.diffusion):
            f1 = f.derivative(a)
            f2 = f1.derivative(a)
            self.sig.append((f, f1, f2))
            S = conv(f)
            S1 = S.derivative(a)
            self.S.append((S, S1, S1.derivative(a)))
        self.K = list(spec.drift)
        self.divK = spec.divergence_field
        self.KS = [conv(f) for f in spec.drift]
        self.divKS = conv(self.divK)

    def scaled(self, scale):
        out = object.__new__(PhiField)
        out.__dict__.update(self.__dict__)
        out.scale = float(scale)
        return out

    # -- background --------------------------------------------------------
    def background_terms(self, x):
        """rho, d_a log rho and d_a^2 rho / rho at x, shapes (...), (..., d), (..., d)."""
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1, self.dim)
        val, grad, sec = self.rho.derivatives(flat)
        if np.any(val <= 0):
            raise DomainError("background interpolant is not positive at a probe")
        shp = x.shape[:-1]
        return (val.reshape(shp), (grad / val[:, None]).reshape(shp + (self.dim,)),
                (sec / val[:, None]).reshape(shp + (self.dim,)))

    # -- phi2 --------------------------------------------------------------
    def phi2(self, x, z, z2):
        """phi2(x, z, z2) with broadcasting over leading axes."""
        x, z, z2 = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (x, z, z2)))
        _, g, h = self.background_terms(x)
        out = np.zeros(x.shape[:-1])
        dj = x - z
        dk = x - z2
        for a in range(self.dim):
            f, f1, f2 = self.sig[a]
            S, S1, S2 = self.S[a]
            sj, sj1, sj2 = f(dj), f1(dj), f2(dj)
            sk, sk1, sk2 = f(dk), f1(dk), f2(dk)
            s, s1, s2 = S(x), S1(x), S2(x)
            F = sj * sk - s * s
            F1 = sj1 * sk + sj * sk1 - 2 * s * s1
            F2 = sj2 * sk + 2 * sj1 * sk1 + sj * sk2 - 2 * (s1 * s1 + s * s2)
            out += F2 + 2 * F1 * g[..., a] + F * h[..., a]
        return self.scale * out

    def phi2_zeroth(self, x, z, z2):
        """sum_a F_a, the function whose derivatives build phi2."""
        x, z, z2 = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (x, z, z2)))
        out = np.zeros(x.shape[:-1])
        for a in range(self.dim):
            f = self.sig[a][0]
            S = self.S[a][0]
            out += f(x - z) * f(x - z2) - S(x) ** 2
        return out

    def grouped_sum(self, X):
        """sum_{i,j,k} phi2(x_i, x_j, x_k) for configurations X of shape (B, N, d).

        Uses sum_j sigma(x_i - x_j) and its derivatives, each an O(N) mode
        sum, so the triple sum costs O(N) per configuration.
        """
        X = np.asarray(X, dtype=float)
        if X.ndim == 2:
            X = X[None]
        N = X.shape[1]
        _, g, h = self.background_terms(X)
        tot = np.zeros(X.shape[:-1])
        N2 = float(N * N)
        for a in range(self.dim):
            f, f1, f2 = self.sig[a]
            S, S1, S2 = self.S[a]
            A0, A1, A2 = f.pair_sums(X), f1.pair_sums(X), f2.pair_sums(X)
            s, s1, s2 = S(X), S1(X), S2(X)
            sF = A0 * A0 - N2 * s * s
            sF1 = 2 * A1 * A0 - 2 * N2 * s * s1
            sF2 = 2 * A2 * A0 + 2 * A1 * A1 - 2 * N2 * (s1 * s1 + s * s2)
            tot += sF2 + 2 * sF1 * g[..., a] + sF * h[..., a]
        return self.scale * tot.sum(axis=-1)

    def naive_sum(self, X):
        """The same triple sum by direct O(N^3) evaluation."""
        X = np.asarray(X, dtype=float)
        if X.ndim == 2:
            X = X[None]
        xi = X[:, :, None, None, :]
        xj = X[:, None, :, None, :]
        xk = X[:, None, None, :, :]
        return self.phi2(xi, xj, xk).sum(axis=(1, 2, 3))

    # -- phi1 --------------------------------------------------------------
    def phi1(self, x, z):
        """-(divK(x-z) - divK*rho(x)) - (K(x-z) - K*rho(x)) . grad log rho(x)."""
        x, z = np.broadcast_arrays(np.asarray(x, float), np.asarray(z, float))
        _, g, _ = self.background_terms(x)
        out = -(self.divK(x - z) - self.divKS(x))
        for a in range(self.dim):
            out = out - (self.K[a](x - z) - self.KS[a](x)) * g[..., a]
        return self.scale * out

    def __call__(self, *args):
        return self.phi2(*args) if self.kind == "phi2" else self.phi1(*args)

    # -- sup over the two trailing slots -----------------------------------
    def sup_abs(self, x, nz=48):
        """sup_{z,z'} |phi2(x, z, z')| sampled on an nz^d x nz^d grid, per point x."""
        x = np.asarray(x, dtype=float).reshape(-1, self.dim)
        zs = grid_points(nz, self.dim)
        out = np.empty(len(x))
        for i, xi in enumerate(x):
            v = self.phi2(xi[None, None, :], zs[:, None, :], zs[None, :, :])
            out[i] = np.abs(v).max()
        return out


def sample_background(field: PhiField, shape, g):
    """Exact draws from the background interpolant by rejection."""
    fine = grid_points(256 if field.dim == 1 else 64, field.dim)
    vmax = 1.05 * float(field.rho(fine).max())
    count = int(np.prod(shape))
    got, need = [], count
    while need > 0:
        batch = max(int(1.5 * need * vmax / field.mass) + 16, 64)
        x = g.random((batch, field.dim))
        acc = g.random(batch) * vmax < field.rho(x)
        got.append(x[acc][:need])
        need -= len(got[-1])
    return np.concatenate(got).reshape(tuple(shape) + (field.dim,))


# ---------------------------------------------------------------------------
# cancellation checks
# ---------------------------------------------------------------------------

QUAD_TOL = 1e-8


def check_cancellations(field: PhiField, probe_count: int = 64, seed: int = 0,
                        quad_n: int | None = None, tol: float = QUAD_TOL, raise_on_fail=False):
    """Residuals of both cancellation identities at random probes.

    Family 1: int phi(x, z, z') rho(x) dx for random (z, z').
    Family 2: int int phi(x, z, z') rho(z) rho(z') dz dz' for random x.
    Both use the periodic rectangle rule on ``quad_n`` nodes per axis (the
    background resolution by default).  For phi1 the analogous identities
    int phi1(x, z) rho(x) dx and int phi1(x, z) rho(z) dz are checked.
    """
    if probe_count < 1:
        raise InvalidArgument("probe_count must be >= 1")
    n = quad_n or field.background.n
    d = field.dim
    nodes = grid_points(n, d)
    w = field.rho(nodes) / n**d
    g = rng.stream(seed, "probe", probe_count, n)
    zs = g.random((probe_count, d))
    z2s = g.random((probe_count, d))
    xs = g.random((probe_count, d))
    fam1 = np.empty(probe_count)
    fam2 = np.empty(probe_count)
    for p in range(probe_count):
        if field.kind == "phi2":
            fam1[p] = field.phi2(nodes, zs[p], z2s[p]) @ w
            vals = field.phi2(xs[p][None, None, :], nodes[:, None, :], nodes[None, :, :])
            fam2[p] = w @ vals @ w
        else:
            fam1[p] = field.phi1(nodes, zs[p]) @ w
            fam2[p] = field.phi1(xs[p][None, :], nodes) @ w
    r1 = float(np.abs(fam1).max())
    r2 = float(np.abs(fam2).max())
    report = {"n": n, "probes": probe_count, "max_first": r1, "max_second": r2,
              "worst_first": (zs[np.argmax(np.abs(fam1))], z2s[np.argmax(np.abs(fam1))]),
              "worst_second": xs[np.argmax(np.abs(fam2))],
              "ok": r1 < tol and r2 < tol}
    if raise_on_fail and not report["ok"]:
        raise CancellationFailure(
            f"cancellation residuals {r1:.3g}, {r2:.3g} exceed {tol:g}",
            probe=report["worst_first"] if r1 >= tol else report["worst_second"])
    return report
