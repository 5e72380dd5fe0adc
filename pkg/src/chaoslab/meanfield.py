"""Pseudo-spectral solver for the McKean-Vlasov equation on the torus.

    d_t rho + div((K * rho) rho) = sum_a d_a^2 ( rho (sigma_aa * rho)^2 )

Densities live on uniform periodic grids with n nodes per axis (d = 1, 2).
Convolutions are diagonal in Fourier space; the nonlinear diffusion flux is
formed pointwise and differentiated spectrally.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, DomainError, InvalidArgument, InvalidDensity, PositivityLoss
from .kernels import TWO_PI, KernelSpec, grid_points

MASS_TOL = 1e-10


# ---------------------------------------------------------------------------
# grids
# ---------------------------------------------------------------------------

def wavenumbers(n):
    return np.fft.fftfreq(n, d=1.0 / n)


@dataclass(eq=False)
class DensityGrid:
    values: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim not in (1, 2) or len(set(v.shape)) != 1:
            raise InvalidArgument("density grid must be n or n x n")
        n = v.shape[0]
        if n < 4 or n & (n - 1):
            raise InvalidArgument(f"nodes per axis must be a power of two, got {n}")
        self.values = v

    @property
    def dim(self):
        return self.values.ndim

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def cell_volume(self):
        return self.n ** (-self.dim)

    def nodes(self):
        return grid_points(self.n, self.dim)

    def mass(self):
        return float(self.values.sum() * self.cell_volume)

    def validate(self, strict=False):
        v = self.values
        if not np.all(np.isfinite(v)):
            raise InvalidDensity("density contains non-finite values")
        if strict and not v.min() > 0:
            raise DomainError(f"density must be strictly positive (min {v.min():.3g})")
        if v.min() < 0:
            raise InvalidDensity(f"density has negative nodes (min {v.min():.3g})")
        m = self.mass()
        if not m > 0:
            raise InvalidDensity("density has zero total mass")
        return m

    def copy(self, values=None, time=None):
        return DensityGrid(self.values.copy() if values is None else values,
                           self.time if time is None else time)

    # spectral helpers -----------------------------------------------------
    def hat(self):
        return np.fft.fftn(self.values)

    def fourier_coefficients(self, wavevectors):
        """int rho(y) exp(-2 pi i k.y) dy for the given integer wave vectors."""
        k = np.asarray(wavevectors, dtype=np.int64).reshape(-1, self.dim)
        h = self.hat() * self.cell_volume
        idx = tuple(np.mod(k[:, a], self.n) for a in range(self.dim))
        out = h[idx]
        # Nyquist modes are ambiguous; fall back to the direct sum
        nyq = np.any(np.abs(k) >= self.n // 2, axis=1)
        if np.any(nyq):
            pts = self.nodes()
            ph = np.exp(-1j * TWO_PI * (pts @ k[nyq].T))
            out = out.astype(complex)
            out[nyq] = (self.values.reshape(-1) @ ph) * self.cell_volume
        return out

    def gradient(self):
        """Spectral gradient, shape (d, n, ..., n)."""
        h = self.hat()
        return np.stack([np.real(np.fft.ifftn(h * _dmult(self.n, self.dim, a)))
                         for a in range(self.dim)])

    def second_derivatives(self):
        """Pure second partials d_a^2 rho, shape (d, n, ..., n)."""
        h = self.hat()
        return np.stack([np.real(np.fft.ifftn(h * _d2mult(self.n, self.dim, a)))
                         for a in range(self.dim)])

    def hessian(self):
        h = self.hat()
        d = self.dim
        out = np.empty((d, d) + self.values.shape)
        for a in range(d):
            for b in range(d):
                if a == b:
                    m = _d2mult(self.n, d, a)
                else:
                    m = _dmult(self.n, d, a) * _dmult(self.n, d, b)
                out[a, b] = np.real(np.fft.ifftn(h * m))
        return out

    def interpolant(self):
        return TrigInterpolant.from_grid(self)

    def cell_masses(self, bins):
        """Exact integrals of the trigonometric interpolant over a bins^d partition."""
        return self.interpolant().cell_masses(bins)


def _axis_shape(d, a, n):
    s = [1] * d
    s[a] = n
    return s


def _dmult(n, d, a):
    k = wavenumbers(n)
    m = 1j * TWO_PI * k
    m[n // 2] = 0.0  # odd derivative of the Nyquist mode vanishes on the grid
    return m.reshape(_axis_shape(d, a, n))


def _d2mult(n, d, a):
    k = wavenumbers(n)
    return (-(TWO_PI * k) ** 2).reshape(_axis_shape(d, a, n))


def dealias_mask(n, d):
    k = np.abs(wavenumbers(n))
    keep = k < n / 3.0
    mask = keep
    for _ in range(d - 1):
        mask = np.multiply.outer(mask, keep)
    return mask


class TrigInterpolant:
    """The band-limited function whose samples are a DensityGrid.

    Stores a pruned list of Fourier modes so it can be evaluated, together
    with exact derivatives, at arbitrary points.  Nyquist modes are split
    evenly between +n/2 and -n/2 so the interpolant is real.
    """

    def __init__(self, dim, wavevectors, coef):
        self.dim = dim
        self.wavevectors = np.asarray(wavevectors, dtype=np.int64).reshape(-1, dim)
        self.coef = np.asarray(coef, dtype=complex)

    @classmethod
    def from_grid(cls, grid: DensityGrid, prune=1e-15):
        n, d = grid.n, grid.dim
        h = grid.hat() * grid.cell_volume
        k1 = wavenumbers(n).astype(np.int64)
        mesh = np.meshgrid(*([k1] * d), indexing="ij")
        ks = np.stack([m.ravel() for m in mesh], axis=-1)
        c = h.ravel()
        # split Nyquist
        extra_k, extra_c = [], []
        for a in range(d):
            sel = ks[:, a] == -(n // 2)
            if np.any(sel):
                c = c.copy()
                c[sel] *= 0.5
                kk = ks[sel].copy()
                kk[:, a] = n // 2
                extra_k.append(kk)
                extra_c.append(c[sel])
        if extra_k:
            ks = np.concatenate([ks] + extra_k)
            c = np.concatenate([c] + extra_c)
        keep = np.abs(c) > prune * max(np.abs(c).max(), 1e-300)
        return cls(d, ks[keep], c[keep])

    def _basis(self, x):
        x = np.asarray(x, dtype=float)
        return np.exp(1j * TWO_PI * (x @ self.wavevectors.T))

    def __call__(self, x):
        return np.real(self._basis(x) @ self.coef)

    def derivatives(self, x):
        """Return (value, grad, pure second partials) at points x."""
        E = self._basis(x)
        w = 1j * TWO_PI * self.wavevectors  # (P, d)
        val = np.real(E @ self.coef)
        grad = np.stack([np.real(E @ (self.coef * w[:, a])) for a in range(self.dim)],
                        axis=-1)
        sec = np.stack([np.real(E @ (self.coef * w[:, a] ** 2)) for a in range(self.dim)],
                       axis=-1)
        return val, grad, sec

    def fourier_coefficients(self, wavevectors):
        table = {tuple(k): c for k, c in zip(map(tuple, self.wavevectors), self.coef)}
        k = np.asarray(wavevectors, dtype=np.int64).reshape(-1, self.dim)
        return np.array([table.get(tuple(kk), 0.0) for kk in k], dtype=complex)

    def cell_masses(self, bins):
        """Integrate over each cell of a uniform bins^d partition."""
        d = self.dim
        edges = np.arange(bins + 1) / bins
        # per-axis integrals of exp(2 pi i k x) over [e_j, e_{j+1}]
        out = np.zeros((bins,) * d)
        factors = []
        for a in range(d):
            k = self.wavevectors[:, a][:, None]
            lo, hi = edges[:-1][None, :], edges[1:][None, :]
            with np.errstate(divide="ignore", invalid="ignore"):
                f = (np.exp(1j * TWO_PI * k * hi) - np.exp(1j * TWO_PI * k * lo)) / (
                    1j * TWO_PI * k)
            f = np.where(k == 0, hi - lo, f)
            factors.append(f)  # (P, bins)
        if d == 1:
            out = np.real(self.coef @ factors[0])
        else:
            out = np.real(np.einsum("p,pi,pj->ij", self.coef, factors[0], factors[1]))
        return out


# ---------------------------------------------------------------------------
# builtin initial data
# ---------------------------------------------------------------------------

def uniform_density(n, dim=1):
    return DensityGrid(np.ones((n,) * dim))


def cosine_density(n, amplitudes, dim=1, mollify=None):
    """rho0 = 1 + sum_m a_m cos(2 pi m . x) with sum |a_m| < 1.

    ``amplitudes`` maps a mode (int, or tuple for d = 2) to its coefficient,
    or is a sequence (a_1, a_2, ...) for modes 1, 2, ... along every axis sum.
    """
    if not isinstance(amplitudes, dict):
        amplitudes = {m + 1: a for m, a in enumerate(amplitudes)}
    total = sum(abs(a) for a in amplitudes.values())
    if not total < 1:
        raise InvalidDensity(f"sum of |a_m| = {total} must be < 1 for a positive density")
    pts = grid_points(n, dim)
    vals = np.ones(len(pts))
    for m, a in amplitudes.items():
        k = np.atleast_1d(np.asarray(m, dtype=float))
        if k.size == 1 and dim > 1:
            k = np.full(dim, k[0])
        vals += a * np.cos(TWO_PI * pts @ k)
    grid = DensityGrid(vals.reshape((n,) * dim))
    if mollify is not None:
        grid = mollified(grid, mollify)
    return grid


def mollified(grid: DensityGrid, cutoff):
    """Spectral low-pass: keep modes with |k| <= cutoff (mass and mean preserved)."""
    h = grid.hat()
    k = np.abs(wavenumbers(grid.n))
    mask = k <= cutoff
    full = mask
    for _ in range(grid.dim - 1):
        full = np.multiply.outer(full, mask)
    return grid.copy(np.real(np.fft.ifftn(h * full)))


# ---------------------------------------------------------------------------
# operators
# ---------------------------------------------------------------------------

def sample_kernel(kernel_component, n, dim):
    pts = grid_points(n, dim)
    return np.asarray(kernel_component(pts), dtype=float).reshape((n,) * dim)


def convolve(grid: DensityGrid, kernel_component):
    """Periodic convolution (f * rho)(x_j) = int f(x_j - y) rho(y) dy via FFT.

    ``kernel_component`` is either a callable on points (..., d) or an array
    already sampled on the grid.
    """
    if callable(kernel_component):
        ks = sample_kernel(kernel_component, grid.n, grid.dim)
    else:
        ks = np.asarray(kernel_component, dtype=float)
        if ks.shape != grid.values.shape:
            raise InvalidArgument(
                f"kernel sampled on {ks.shape}, density on {grid.values.shape}")
    return np.real(np.fft.ifftn(np.fft.fftn(ks) * grid.hat())) * grid.cell_volume


def _spectral(values):
    return np.fft.fftn(values)


class _Operator:
    """Precomputed spectral data for one (spec, n) pair."""

    def __init__(self, spec: KernelSpec, n: int, dealias: bool = True):
        d = spec.dim
        self.spec, self.n, self.d = spec, n, d
        vol = n ** (-d)
        self.K_hat = [np.fft.fftn(sample_kernel(f, n, d)) * vol for f in spec.drift]
        self.S_hat = [np.fft.fftn(sample_kernel(f, n, d)) * vol for f in spec.diffusion]
        self.D1 = [_dmult(n, d, a) for a in range(d)]
        self.D2 = [_d2mult(n, d, a) for a in range(d)]
        self.mask = dealias_mask(n, d) if dealias else None

    def coefficients(self, rho_hat):
        """V = K * rho (d arrays) and U_a = (sigma_aa * rho)^2 (d arrays)."""
        V = [np.real(np.fft.ifftn(kh * rho_hat)) for kh in self.K_hat]
        U = [np.real(np.fft.ifftn(sh * rho_hat)) ** 2 for sh in self.S_hat]
        return V, U

    def linear_rhs(self, rho, V, U):
        """-div(V rho) + sum_a d_a^2(U_a rho) for frozen V, U."""
        acc = np.zeros(rho.shape, dtype=complex)
        for a in range(self.d):
            acc -= self.D1[a] * _spectral(V[a] * rho)
            acc += self.D2[a] * _spectral(U[a] * rho)
        if self.mask is not None:
            acc *= self.mask
        acc.flat[0] = 0.0
        return np.real(np.fft.ifftn(acc))

    def rhs(self, rho):
        V, U = self.coefficients(_spectral(rho))
        return self.linear_rhs(rho, V, U)


def rhs(grid: DensityGrid, spec: KernelSpec, dealias=True):
    """Time derivative -div((K*rho) rho) + sum_a d_a^2(rho (sigma_aa*rho)^2)."""
    _check_dims(grid, spec)
    grid.validate(strict=True)
    return _Operator(spec, grid.n, dealias).rhs(grid.values)


def _check_dims(grid, spec):
    if grid.dim != spec.dim:
        raise InvalidArgument(f"grid is {grid.dim}-d but kernel is {spec.dim}-d")


# ---------------------------------------------------------------------------
# time marching
# ---------------------------------------------------------------------------

@dataclass
class PdeConfig:
    dt: float
    t_end: float
    stepper: str = "explicit_rk2"
    mode: str = "direct_march"
    max_iters: int = 50
    tol: float = 1e-8
    dealias: bool = True
    c_cfl: float = 0.2
    checkpoints: tuple | None = None
    mollify: float | None = None

    def validate(self, spec=None, n=None):
        errs = []
        if not self.dt > 0:
            errs.append("dt must be positive")
        if not self.t_end >= 0:
            errs.append("t_end must be nonnegative")
        if self.stepper not in ("explicit_rk2", "semi_implicit"):
            errs.append(f"unknown stepper {self.stepper!r}")
        if self.mode not in ("direct_march", "picard"):
            errs.append(f"unknown mode {self.mode!r}")
        if self.mode == "picard" and self.max_iters < 1:
            errs.append("picard needs max_iters >= 1")
        if spec is not None and n is not None and self.stepper == "explicit_rk2":
            lim = cfl_limit(spec, n, self.c_cfl)
            if self.dt > lim * (1 + 1e-12):
                errs.append(f"dt={self.dt:.3g} violates the diffusive CFL limit "
                            f"{lim:.3g} (use a smaller dt or semi_implicit)")
        if errs:
            raise ConfigError(errs)


def cfl_limit(spec: KernelSpec, n: int, c_cfl=0.2):
    s = spec.norm_data.sigma_w2inf
    return c_cfl * (1.0 / n) ** 2 / s**2


@dataclass
class Trajectory:
    grids: list
    mass_drift: float = 0.0
    min_value: float = np.inf
    max_rhs_mean: float = 0.0
    steps: int = 0
    info: dict = field(default_factory=dict)

    @property
    def times(self):
        return np.array([g.time for g in self.grids])

    @property
    def final(self):
        return self.grids[-1]

    def at(self, t, atol=1e-9):
        for g in self.grids:
            if abs(g.time - t) <= atol:
                return g
        raise KeyError(f"no checkpoint at t={t}")


def _schedule(cfg: PdeConfig):
    """Step sizes and the step indices that land on checkpoints.

    Each interval between consecutive checkpoints is split into equal steps
    no longer than ``cfg.dt``, so checkpoint times are hit exactly.
    """
    marks = sorted({float(t) for t in (cfg.checkpoints or ()) if 0 < t < cfg.t_end}
                   | ({float(cfg.t_end)} if cfg.t_end > 0 else set()))
    hs, keep, prev = [], set(), 0.0
    for t in marks:
        k = max(1, int(np.ceil((t - prev) / cfg.dt - 1e-9)))
        hs += [(t - prev) / k] * k
        keep.add(len(hs))
        prev = t
    times = np.concatenate([[0.0], np.cumsum(hs)]) if hs else np.zeros(1)
    # pin checkpoint nodes to their exact values
    for s, t in zip(sorted(keep), marks):
        times[s] = t
    return np.asarray(hs), times, keep


class _Stepper:
    def __init__(self, op: _Operator, cfg: PdeConfig, h: float):
        self.op, self.cfg, self.h = op, cfg, h
        if cfg.stepper == "semi_implicit":
            lap = sum(op.D2)
            self.lap = lap
        self.last_rhs_mean = 0.0

    def _imex_coeff(self, U):
        return float(max(u.max() for u in U))

    def advance(self, rho, coeffs0=None, coeffs1=None):
        """One step; coeffs0/coeffs1 freeze (V, U) at the step start/end."""
        op, h = self.op, self.h
        if coeffs0 is None:
            f0 = op.rhs(rho)
        else:
            f0 = op.linear_rhs(rho, *coeffs0)
        self.last_rhs_mean = abs(float(f0.mean()))
        if self.cfg.stepper == "explicit_rk2":
            pred = rho + h * f0
            if coeffs1 is None:
                f1 = op.rhs(pred)
            else:
                f1 = op.linear_rhs(pred, *coeffs1)
            return rho + 0.5 * h * (f0 + f1)
        # first-order IMEX: stiff part D * Laplacian implicit, remainder explicit
        if coeffs0 is None:
            _, U = op.coefficients(_spectral(rho))
        else:
            U = coeffs0[1]
        D = self._imex_coeff(U)
        rhs_hat = _spectral(rho) + h * (_spectral(f0) - D * self.lap * _spectral(rho))
        new_hat = rhs_hat / (1.0 - h * D * self.lap)
        return np.real(np.fft.ifftn(new_hat))


def _diagnose(rho, t):
    if not np.all(np.isfinite(rho)):
        raise PositivityLoss(f"non-finite density at t={t:.4g}; reduce dt or use "
                             "semi_implicit")
    lo = float(rho.min())
    if not lo > 0:
        raise PositivityLoss(f"positivity lost at t={t:.4g} (min {lo:.3g}); reduce dt "
                             "or use semi_implicit")
    return lo


def march(grid: DensityGrid, spec: KernelSpec, cfg: PdeConfig) -> Trajectory:
    """Advance the mean-field equation from ``grid.time`` to ``cfg.t_end``.

    Returns grids at ``cfg.checkpoints`` (plus the initial and final state).
    Raises PositivityLoss if the density stops being strictly positive.
    """
    _check_dims(grid, spec)
    cfg.validate(spec, grid.n)
    m0 = grid.validate(strict=True)
    if abs(m0 - 1) > 1e-8:
        raise InvalidDensity(f"initial mass {m0:.12g} is not 1")
    op = _Operator(spec, grid.n, cfg.dealias)
    hs, times, keep = _schedule(cfg)
    nsteps = len(hs)
    st = _Stepper(op, cfg, hs[0] if nsteps else 0.0)
    rho = grid.values.copy()
    t0 = grid.time
    out = [grid.copy(time=t0)]
    lo = float(rho.min())
    max_rhs_mean = 0.0
    for s in range(1, nsteps + 1):
        st.h = hs[s - 1]
        rho = st.advance(rho)
        max_rhs_mean = max(max_rhs_mean, st.last_rhs_mean)
        t = t0 + times[s]
        lo = min(lo, _diagnose(rho, t))
        if s in keep:
            out.append(DensityGrid(rho.copy(), t))
    drift = max(abs(g.mass() - m0) for g in out)
    traj = Trajectory(out, drift, lo, max_rhs_mean, nsteps,
                      {"dt": float(hs.max()) if nsteps else 0.0, "stepper": cfg.stepper,
                       "n": grid.n})
    return traj


# ---------------------------------------------------------------------------
# Picard iteration
# ---------------------------------------------------------------------------

@dataclass
class PicardResult:
    trajectory: Trajectory
    residuals: list
    converged: bool
    iterations: int

    @property
    def ratios(self):
        r = np.asarray(self.residuals)
        return r[1:] / r[:-1] if len(r) > 1 else np.array([])


def _l2(a, b):
    return float(np.sqrt(np.mean((a - b) ** 2)))


def picard_solve(grid0: DensityGrid, spec: KernelSpec, cfg: PdeConfig) -> PicardResult:
    """Fixed-point iteration with frozen transport and diffusion coefficients.

    Sweep n solves the linear problem whose coefficients V = K * rho and
    U_a = (sigma_aa * rho)^2 are taken from sweep n-1 at every time level.
    The zeroth sweep freezes the coefficients of the initial datum.
    Stops when the sup over checkpoints of the L2 distance between successive
    sweeps drops below ``cfg.tol``.
    """
    _check_dims(grid0, spec)
    cfg.validate(spec, grid0.n)
    if cfg.mollify is not None:
        grid0 = mollified(grid0, cfg.mollify)
    grid0.validate(strict=True)
    op = _Operator(spec, grid0.n, cfg.dealias)
    hs, times, keep = _schedule(cfg)
    nsteps = len(hs)
    st = _Stepper(op, cfg, hs[0] if nsteps else 0.0)

    prev = np.broadcast_to(grid0.values, (nsteps + 1,) + grid0.values.shape).copy()
    residuals = []
    converged = False
    it = 0
    for it in range(1, cfg.max_iters + 1):
        coeffs = [op.coefficients(_spectral(prev[s])) for s in range(nsteps + 1)]
        cur = np.empty_like(prev)
        cur[0] = grid0.values
        rho = grid0.values.copy()
        for s in range(1, nsteps + 1):
            st.h = hs[s - 1]
            rho = st.advance(rho, coeffs[s - 1], coeffs[s])
            _diagnose(rho, grid0.time + times[s])
            cur[s] = rho
        res = max(_l2(cur[s], prev[s]) for s in sorted(keep | {0}))
        residuals.append(res)
        prev = cur
        if res < cfg.tol:
            converged = True
            break
    grids = [DensityGrid(prev[0].copy(), grid0.time)]
    grids += [DensityGrid(prev[s].copy(), grid0.time + times[s]) for s in sorted(keep) if s > 0]
    m0 = grid0.mass()
    traj = Trajectory(grids, max(abs(g.mass() - m0) for g in grids),
                      float(prev.min()), 0.0, nsteps,
                      {"dt": float(hs.max()) if nsteps else 0.0, "stepper": cfg.stepper,
                       "n": grid0.n})
    return PicardResult(traj, residuals, converged, it)


def solve(grid0, spec, cfg):
    if cfg.mode == "picard":
        return picard_solve(grid0, spec, cfg).trajectory
    return march(grid0, spec, cfg)


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------

@dataclass
class EnergyReport:
    times: np.ndarray
    l2: np.ndarray
    h1: np.ndarray
    h2: np.ndarray
    envelopes: dict

    @property
    def ok(self):
        return all(e["ok"] for e in self.envelopes.values())


def _envelope_fit(t, y):
    t = np.asarray(t, float)
    y = np.asarray(y, float)
    if len(t) < 2 or np.ptp(t) == 0:
        B = 0.0
    else:
        B = max(0.0, float(np.polyfit(t, np.log(np.maximum(y, 1e-300)), 1)[0]))
    A = float(np.max(y * np.exp(-B * t)))
    ok = bool(np.isfinite(A) and np.isfinite(B)
              and np.all(y <= A * np.exp(B * t) * (1 + 1e-12)))
    return {"A": A, "B": B, "ok": ok}


def energy_diagnostics(trajectory) -> EnergyReport:
    """Squared L2 norms of rho, grad rho and the Hessian at each checkpoint.

    Each sequence is bounded by a fitted envelope A exp(B t), A, B >= 0.
    """
    grids = trajectory.grids if isinstance(trajectory, Trajectory) else list(trajectory)
    if not grids:
        raise InvalidArgument("empty trajectory")
    t = np.array([g.time for g in grids])
    l2, h1, h2 = [], [], []
    for g in grids:
        vol = g.cell_volume
        l2.append(float(np.sum(g.values**2) * vol))
        h1.append(float(np.sum(g.gradient() ** 2) * vol))
        h2.append(float(np.sum(g.hessian() ** 2) * vol))
    l2, h1, h2 = map(np.array, (l2, h1, h2))
    env = {name: _envelope_fit(t, y) for name, y in
           (("l2", l2), ("grad", h1), ("hess", h2))}
    return EnergyReport(t, l2, h1, h2, env)


def density_norms(grid: DensityGrid):
    """(inf rho, ||grad rho||_inf, ||Hessian rho||_inf) on the grid nodes."""
    gr = grid.gradient()
    hs = grid.hessian()
    gnorm = np.sqrt(np.sum(gr**2, axis=0))
    hnorm = np.max(np.abs(hs.reshape(grid.dim * grid.dim, -1)), axis=0)
    return float(grid.values.min()), float(gnorm.max()), float(hnorm.max())
