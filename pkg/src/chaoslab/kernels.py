"""Torus geometry and closed-form interaction kernels.

Every kernel component is a finite trigonometric sum

    f(x) = c + sum_p a_p sin(2 pi k_p . x) + b_p cos(2 pi k_p . x)

with integer wave vectors k_p.  This family is closed under differentiation,
under convolution with a periodic density, and its pairwise sums over a
particle cloud factorize into O(N) mode sums.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import ConstraintViolation, InvalidArgument

TWO_PI = 2.0 * np.pi


# ---------------------------------------------------------------------------
# torus geometry
# ---------------------------------------------------------------------------

def wrap(raw):
    """Reduce coordinates modulo 1 into [0, 1)."""
    x = np.asarray(raw, dtype=float)
    if not np.all(np.isfinite(x)):
        raise InvalidArgument("cannot wrap non-finite coordinates")
    out = np.mod(x, 1.0)
    # np.mod can round tiny negatives up to exactly 1.0
    out[out >= 1.0] = 0.0
    return out


def displacement(a, b):
    """Minimal-image representative of ``a - b``, each component in [-1/2, 1/2)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape[-1:] != b.shape[-1:]:
        raise InvalidArgument(
            f"dimension mismatch: {a.shape[-1:]} vs {b.shape[-1:]}")
    d = a - b
    return d - np.floor(d + 0.5)


def grid_points(n, dim):
    """Nodes j/n of the uniform periodic grid, shape (n**dim, dim)."""
    axes = np.arange(n) / n
    mesh = np.meshgrid(*([axes] * dim), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


# ---------------------------------------------------------------------------
# trigonometric fields
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TrigField:
    """Scalar trigonometric polynomial on the d-torus."""

    dim: int
    wavevectors: np.ndarray  # (P, d) integers
    sin_coef: np.ndarray  # (P,)
    cos_coef: np.ndarray  # (P,)
    const: float = 0.0
    support_radius: float | None = None

    def __post_init__(self):
        k = np.asarray(self.wavevectors, dtype=np.int64).reshape(-1, self.dim)
        a = np.asarray(self.sin_coef, dtype=float).reshape(-1)
        b = np.asarray(self.cos_coef, dtype=float).reshape(-1)
        if not (len(k) == len(a) == len(b)):
            raise InvalidArgument("wavevectors and coefficients differ in length")
        object.__setattr__(self, "wavevectors", k)
        object.__setattr__(self, "sin_coef", a)
        object.__setattr__(self, "cos_coef", b)
        object.__setattr__(self, "const", float(self.const))

    @classmethod
    def constant(cls, dim, value):
        return cls(dim, np.zeros((0, dim), int), np.zeros(0), np.zeros(0), value)

    @classmethod
    def zero(cls, dim):
        return cls.constant(dim, 0.0)

    @property
    def n_modes(self):
        return len(self.sin_coef)

    @property
    def max_frequency(self):
        if self.n_modes == 0:
            return 0
        return int(np.abs(self.wavevectors).max())

    def _phase(self, x):
        x = np.asarray(x, dtype=float)
        return TWO_PI * (x @ self.wavevectors.T)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.full(x.shape[:-1], self.const)
        if self.n_modes:
            th = self._phase(x)
            out = out + np.sin(th) @ self.sin_coef + np.cos(th) @ self.cos_coef
        return out

    def derivative(self, axis):
        """Exact partial derivative along ``axis`` as a new field."""
        w = TWO_PI * self.wavevectors[:, axis]
        return TrigField(self.dim, self.wavevectors, -w * self.cos_coef,
                         w * self.sin_coef, 0.0)

    def gradient(self, x):
        return np.stack([self.derivative(a)(x) for a in range(self.dim)], axis=-1)

    def hessian(self, x):
        rows = []
        for a in range(self.dim):
            da = self.derivative(a)
            rows.append(np.stack([da.derivative(b)(x) for b in range(self.dim)],
                                 axis=-1))
        return np.stack(rows, axis=-2)

    def convolve(self, density_hat, mass=1.0):
        """Return ``f * rho`` as a field, given rho's Fourier coefficients.

        ``density_hat[p]`` must equal  int rho(y) exp(-2 pi i k_p . y) dy  for
        the wave vectors of this field.
        """
        rh = np.asarray(density_hat, dtype=complex).reshape(-1)
        re, im = rh.real, rh.imag
        a, b = self.sin_coef, self.cos_coef
        return TrigField(self.dim, self.wavevectors, a * re - b * im,
                         a * im + b * re, self.const * mass)

    def pair_sums(self, pos):
        """Sum_k f(x_i - x_k) for every i, including k = i.

        ``pos`` has shape (..., N, d); the result has shape (..., N).  The sum
        is computed through the angle-difference identities, which is exact
        and costs O(N * modes).
        """
        pos = np.asarray(pos, dtype=float)
        n = pos.shape[-2]
        out = np.full(pos.shape[:-1], self.const * n)
        if self.n_modes:
            th = self._phase(pos)  # (..., N, P)
            s, c = np.sin(th), np.cos(th)
            S = s.sum(axis=-2, keepdims=True)
            C = c.sum(axis=-2, keepdims=True)
            sin_sum = s * C - c * S
            cos_sum = c * C + s * S
            out = out + sin_sum @ self.sin_coef + cos_sum @ self.cos_coef
        return out

    def pair_values(self, xi, xk):
        """f(x_i - x_k) for all pairs; shapes (..., N, d), (..., M, d) -> (..., N, M)."""
        diff = displacement(np.asarray(xi)[..., :, None, :],
                            np.asarray(xk)[..., None, :, :])
        return self(diff)


def trig_sum_field(dim, terms, const=0.0):
    """Build a field from ``(coef, kind, wavevector)`` triples, kind in {'sin','cos'}."""
    ks, a, b = [], [], []
    for coef, kind, k in terms:
        ks.append(k)
        a.append(coef if kind == "sin" else 0.0)
        b.append(coef if kind == "cos" else 0.0)
    if not ks:
        return TrigField.constant(dim, const)
    return TrigField(dim, np.array(ks), np.array(a), np.array(b), const)


# ---------------------------------------------------------------------------
# kernel specifications
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NormData:
    drift_sup: float
    potential_sup: float  # upper bound for ||div K|| in the dual Sobolev norm
    sigma_w2inf: float
    grid_pts: int

    @property
    def div_drift_bound(self):
        return self.potential_sup


@dataclass(frozen=True, eq=False)
class KernelSpec:
    """Drift kernel K, its divergence potential g, and diagonal diffusion sigma."""

    dim: int
    drift: tuple
    drift_potential: tuple
    diffusion: tuple
    sigma_floor: float
    drift_name: str = "custom"
    drift_params: tuple = ()
    diffusion_name: str = "custom"
    diffusion_params: tuple = ()
    norm_grid_pts: int = 64
    support_radius: float | None = None
    _norms: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        d = self.dim
        for name in ("drift", "drift_potential", "diffusion"):
            comps = tuple(getattr(self, name))
            if len(comps) != d or any(c.dim != d for c in comps):
                raise InvalidArgument(f"{name} must have {d} components of dim {d}")
            object.__setattr__(self, name, comps)
        if not self.sigma_floor > 0:
            raise ConstraintViolation("sigma_floor must be positive",
                                      assumption="diffusion lower bound")
        check_sigma_floor(self)

    # evaluation -----------------------------------------------------------
    def K(self, x):
        return np.stack([f(x) for f in self.drift], axis=-1)

    def div_K(self, x):
        return sum(f.derivative(a)(x) for a, f in enumerate(self.drift))

    def g(self, x):
        return np.stack([f(x) for f in self.drift_potential], axis=-1)

    def sigma(self, x):
        """Diagonal entries sigma_aa(x), shape (..., d)."""
        return np.stack([f(x) for f in self.diffusion], axis=-1)

    @cached_property
    def divergence_field(self):
        fields = [f.derivative(a) for a, f in enumerate(self.drift)]
        k = np.concatenate([f.wavevectors for f in fields])
        a = np.concatenate([f.sin_coef for f in fields])
        b = np.concatenate([f.cos_coef for f in fields])
        return TrigField(self.dim, k, a, b, 0.0)

    @property
    def is_trig(self):
        return all(isinstance(f, TrigField)
                   for f in self.drift + self.diffusion)

    @property
    def identity(self):
        return {"drift": self.drift_name, "drift_params": list(self.drift_params),
                "diffusion": self.diffusion_name,
                "diffusion_params": list(self.diffusion_params),
                "dim": self.dim}

    @property
    def norm_data(self) -> NormData:
        if "data" not in self._norms:
            self._norms["data"] = norm_audit(self, self.norm_grid_pts)
        return self._norms["data"]

    @property
    def max_frequency(self):
        return max(f.max_frequency for f in self.drift + self.diffusion)


def check_sigma_floor(spec: KernelSpec, grid_pts=None):
    n = grid_pts or max(spec.norm_grid_pts, 16)
    pts = grid_points(n, spec.dim)
    sig = spec.sigma(pts)
    low = float(sig.min())
    if not low > spec.sigma_floor:
        raise ConstraintViolation(
            f"diffusion kernel dips to {low:.6g}, not above the floor "
            f"{spec.sigma_floor:.6g} (uniform ellipticity assumption on sigma)",
            assumption="diffusion lower bound")
    return low


def _sup(values):
    return float(np.max(np.abs(values))) if np.size(values) else 0.0


def norm_audit(spec: KernelSpec, grid_pts: int = 64) -> NormData:
    """Sup-norms of K, of the potential g, and the W^{2,inf} norm of sigma.

    Norms are sampled on a uniform grid with ``grid_pts`` nodes per axis.
    The W^{2,inf} norm is the max of the sup-norms of sigma, of all its first
    partials and of all its second partials.
    """
    if grid_pts < 16:
        raise InvalidArgument("norm_audit needs at least 16 nodes per axis")
    pts = grid_points(grid_pts, spec.dim)
    drift = spec.K(pts)
    pot = spec.g(pts)
    drift_sup = _sup(np.linalg.norm(drift, axis=-1))
    pot_sup = _sup(np.linalg.norm(pot, axis=-1))
    parts = []
    for f in spec.diffusion:
        parts.append(_sup(f(pts)))
        parts.append(_sup(f.gradient(pts)))
        parts.append(_sup(f.hessian(pts)))
    return NormData(drift_sup, pot_sup, max(parts), grid_pts)


def derivative_audit(spec: KernelSpec, grid_pts: int = 64):
    """Compare declared derivatives with centred finite differences.

    Returns a dict of ``(max_error, tolerance)`` pairs.  The tolerance is
    ``10 h^2`` scaled by the sup of the derivative that controls the
    truncation error of the stencil (third derivative for first-order
    stencils, fourth for the second-order stencil).
    """
    h = 1.0 / grid_pts
    pts = grid_points(grid_pts, spec.dim)
    eye = np.eye(spec.dim)
    report = {}

    def fd1(fn, a):
        return (fn(pts + h * eye[a]) - fn(pts - h * eye[a])) / (2 * h)

    def fd2(fn, a):
        return (fn(pts + h * eye[a]) - 2 * fn(pts) + fn(pts - h * eye[a])) / h**2

    e1 = e2 = 0.0
    t1 = t2 = 0.0
    for f in spec.diffusion:
        for a in range(spec.dim):
            da = f.derivative(a)
            d3 = da.derivative(a).derivative(a)
            d4 = d3.derivative(a)
            e1 = max(e1, _sup(fd1(f, a) - da(pts)))
            e2 = max(e2, _sup(fd2(f, a) - da.derivative(a)(pts)))
            t1 = max(t1, _sup(d3(pts)))
            t2 = max(t2, _sup(d4(pts)))
    report["sigma_grad"] = (e1, 10 * h**2 * max(t1, 1.0))
    report["sigma_hess"] = (e2, 10 * h**2 * max(t2, 1.0))

    ediv = ediv_g = 0.0
    tdiv = 0.0
    decl = spec.div_K(pts)
    fd_div = sum(fd1(f, a) for a, f in enumerate(spec.drift))
    fd_div_g = sum(fd1(f, a) for a, f in enumerate(spec.drift_potential))
    for a, f in enumerate(spec.drift):
        tdiv = max(tdiv, _sup(f.derivative(a).derivative(a).derivative(a)(pts)))
    for a, f in enumerate(spec.drift_potential):
        tdiv = max(tdiv, _sup(f.derivative(a).derivative(a).derivative(a)(pts)))
    ediv = _sup(fd_div - decl)
    ediv_g = _sup(fd_div_g - decl)
    report["div_K"] = (ediv, 10 * h**2 * max(tdiv, 1.0))
    report["div_g"] = (ediv_g, 10 * h**2 * max(tdiv, 1.0))
    report["div_K_mean"] = (abs(float(np.mean(decl))), 1e-12)
    return report


# ---------------------------------------------------------------------------
# builtin families
# ---------------------------------------------------------------------------

DRIFT_FAMILIES = ("trig_drift", "zero_drift")
DIFFUSION_FAMILIES = ("constant_sigma", "trig_sigma")
BUILTIN_NAMES = DRIFT_FAMILIES + DIFFUSION_FAMILIES


def _unit(dim, axis, mode):
    k = [0] * dim
    k[axis] = int(mode)
    return k


def _drift_fields(name, dim, params):
    params = [float(p) for p in params]
    if name == "zero_drift":
        if params:
            raise InvalidArgument("zero_drift takes no parameters")
        z = tuple(TrigField.zero(dim) for _ in range(dim))
        return z, z
    if name == "trig_drift":
        if not params or len(params) % 2:
            raise InvalidArgument(
                "trig_drift expects (amplitude, mode) pairs, got %r" % (params,))
        pairs = list(zip(params[0::2], params[1::2]))
        for _, m in pairs:
            if m != int(m) or m < 1:
                raise InvalidArgument("trig_drift modes must be positive integers")
        comps = []
        for a in range(dim):
            comps.append(trig_sum_field(
                dim, [(amp, "sin", _unit(dim, a, m)) for amp, m in pairs]))
        comps = tuple(comps)
        # K itself is a vector potential for div K: div g = div K with g = K
        return comps, comps
    raise InvalidArgument(f"unknown drift family {name!r}")


def _diffusion_fields(name, dim, params):
    params = [float(p) for p in params]
    if name == "constant_sigma":
        if not 1 <= len(params) <= 2:
            raise InvalidArgument("constant_sigma expects [c] or [c, floor]")
        c = params[0]
        floor = params[1] if len(params) == 2 else 0.5 * c
        if not c > 0:
            raise ConstraintViolation("constant_sigma needs c > 0",
                                      assumption="diffusion lower bound")
        if not floor < c:
            raise ConstraintViolation(
                f"floor {floor} must lie strictly below c={c}",
                assumption="diffusion lower bound")
        return tuple(TrigField.constant(dim, c) for _ in range(dim)), floor
    if name == "trig_sigma":
        if not 3 <= len(params) <= 4:
            raise InvalidArgument("trig_sigma expects [base, amp, mode(, floor)]")
        base, amp, mode = params[:3]
        if mode != int(mode) or mode < 1:
            raise InvalidArgument("trig_sigma mode must be a positive integer")
        if not abs(amp) < base:
            raise ConstraintViolation(
                f"oscillation amplitude {abs(amp)} >= baseline {base}: sigma "
                "would not stay above a positive floor",
                assumption="diffusion lower bound")
        low = base - abs(amp)
        if len(params) == 4:
            floor = params[3]
        else:
            floor = 0.5 * base if low > 0.5 * base else 0.5 * low
        if not 0 < floor < low:
            raise ConstraintViolation(
                f"floor {floor} must lie in (0, {low})",
                assumption="diffusion lower bound")
        comps = tuple(
            trig_sum_field(dim, [(amp, "sin", _unit(dim, a, mode))], const=base)
            for a in range(dim))
        return comps, floor
    raise InvalidArgument(f"unknown diffusion family {name!r}")


def make_kernel(dim, drift=("zero_drift", ()), diffusion=("constant_sigma", (1.0,)),
                norm_grid_pts=64) -> KernelSpec:
    """Assemble a KernelSpec from a drift family and a diffusion family."""
    if dim not in (1, 2, 3) or int(dim) != dim:
        raise InvalidArgument(f"unsupported dimension {dim}")
    dname, dparams = drift
    sname, sparams = diffusion
    K, g = _drift_fields(dname, dim, dparams)
    sig, floor = _diffusion_fields(sname, dim, sparams)
    return KernelSpec(dim, K, g, sig, floor, dname, tuple(float(p) for p in dparams),
                      sname, tuple(float(p) for p in sparams), norm_grid_pts)


def builtin_kernel(name, dim, params=()) -> KernelSpec:
    """Single named family; the other half of the model takes its neutral default.

    Drift families pair with sigma = 1 (floor 1/2); diffusion families pair
    with K = 0.
    """
    if name in DRIFT_FAMILIES:
        return make_kernel(dim, drift=(name, tuple(params)))
    if name in DIFFUSION_FAMILIES:
        return make_kernel(dim, diffusion=(name, tuple(params)))
    raise InvalidArgument(
        f"unknown kernel family {name!r}; expected one of {BUILTIN_NAMES}")
