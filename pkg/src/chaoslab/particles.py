"""Euler-Maruyama integration of the N-particle system on the torus.

    dX^i = (1/N) sum_k K(X^i - X^k) dt + (sqrt 2 / N) sum_k sigma(X^i - X^k) dB^i

Sums run over every k, the self term k = i included.  An ensemble carries M
independent replicas stored as one (M, N, d) array; noise for replica r at
step s comes from a stream keyed by (seed, r, s).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import rng
from .errors import ConfigError, InvalidArgument, InvalidDensity, NumericalBlowup
from .kernels import KernelSpec, displacement, grid_points, wrap
from .meanfield import DensityGrid

INTERACTIONS = ("spectral", "direct", "cell_list")


@dataclass
class ParticleEnsemble:
    positions: np.ndarray  # (M, N, d)
    seed: int
    time: float = 0.0
    step_index: int = 0
    replica_ids: np.ndarray | None = None

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float)
        if self.positions.ndim != 3:
            raise InvalidArgument("positions must have shape (replicas, N, d)")
        if self.replica_ids is None:
            self.replica_ids = np.arange(self.positions.shape[0])

    @property
    def n_replicas(self):
        return self.positions.shape[0]

    @property
    def n_particles(self):
        return self.positions.shape[1]

    @property
    def dim(self):
        return self.positions.shape[2]

    @property
    def replicas(self):
        return list(self.positions)

    def copy(self):
        return ParticleEnsemble(self.positions.copy(), self.seed, self.time,
                                self.step_index, self.replica_ids.copy())

    def partition(self, parts):
        """Split into sub-ensembles by replica; noise keys travel with the ids."""
        chunks = np.array_split(np.arange(self.n_replicas), parts)
        return [ParticleEnsemble(self.positions[c].copy(), self.seed, self.time,
                                 self.step_index, self.replica_ids[c].copy())
                for c in chunks if len(c)]

    @classmethod
    def merge(cls, parts):
        parts = sorted(parts, key=lambda p: p.replica_ids[0])
        pos = np.concatenate([p.positions for p in parts])
        ids = np.concatenate([p.replica_ids for p in parts])
        p0 = parts[0]
        return cls(pos, p0.seed, p0.time, p0.step_index, ids)


@dataclass
class SimConfig:
    dt: float = 1e-3
    t_end: float = 1.0
    scheme: str = "euler_maruyama"
    seed: int = 0
    interaction: str = "spectral"
    cutoff: float | None = None
    include_self: bool = True

    def validate(self, spec: KernelSpec | None = None):
        errs = []
        if not self.dt > 0:
            errs.append("particles: dt must be positive")
        if not self.t_end > 0:
            errs.append("particles: t_end must be positive")
        elif self.dt > self.t_end:
            errs.append("particles: dt must not exceed t_end")
        if self.scheme != "euler_maruyama":
            errs.append(f"particles: unknown scheme {self.scheme!r}")
        if self.interaction not in INTERACTIONS:
            errs.append(f"particles: unknown interaction {self.interaction!r}")
        if self.interaction == "cell_list":
            if self.cutoff is None or not self.cutoff > 0:
                errs.append("particles: cell_list needs a positive cutoff")
            if spec is not None:
                r = spec.support_radius
                if r is None:
                    errs.append("particles: cell_list requires kernels with a declared "
                                "compact support radius (builtin trig kernels are global)")
                elif self.cutoff is not None and self.cutoff < r:
                    errs.append(f"particles: cutoff {self.cutoff} below support radius {r}")
        if self.interaction == "spectral" and spec is not None and not spec.is_trig:
            errs.append("particles: spectral interaction needs trigonometric kernels")
        if errs:
            raise ConfigError(errs)


# ---------------------------------------------------------------------------
# initial sampling
# ---------------------------------------------------------------------------

def sample_initial(density: DensityGrid, n_particles: int, n_replicas: int,
                   seed: int) -> ParticleEnsemble:
    """Draw i.i.d. positions from ``density``.

    In d = 1 the density is treated as its piecewise-linear interpolant and
    sampled by inverse CDF; in d >= 2 by rejection against the bilinear
    interpolant.  Replica r draws from its own stream.
    """
    v = np.asarray(density.values, dtype=float)
    if np.any(~np.isfinite(v)) or v.min() < 0:
        raise InvalidDensity("density has negative or non-finite nodes")
    if not v.sum() > 0:
        raise InvalidDensity("density has zero total mass")
    out = np.empty((n_replicas, n_particles, density.dim))
    for r in range(n_replicas):
        g = rng.stream(seed, "init", r)
        if density.dim == 1:
            out[r, :, 0] = _inverse_cdf_1d(v, g.random(n_particles))
        else:
            out[r] = _rejection(v, n_particles, g)
    return ParticleEnsemble(out, seed)


def _inverse_cdf_1d(v, u):
    """Invert the CDF of the periodic piecewise-linear interpolant of v."""
    n = len(v)
    h = 1.0 / n
    left = v
    right = np.roll(v, -1)
    cell = 0.5 * (left + right) * h
    cdf = np.concatenate([[0.0], np.cumsum(cell)])
    total = cdf[-1]
    target = u * total
    j = np.clip(np.searchsorted(cdf, target, side="right") - 1, 0, n - 1)
    # skip zero-mass cells
    r = target - cdf[j]
    a, b = left[j], right[j]
    slope = (b - a) / h
    with np.errstate(divide="ignore", invalid="ignore"):
        # solve a s + slope s^2 / 2 = r for s in [0, h]
        disc = np.sqrt(np.maximum(a * a + 2 * slope * r, 0.0))
        s_quad = 2 * r / (a + disc)
        s_lin = np.where(a > 0, r / a, 0.0)
    s = np.where(np.abs(slope) > 1e-14 * np.maximum(a, 1e-300), s_quad, s_lin)
    s = np.where(np.isfinite(s), s, 0.5 * h)
    s = np.clip(s, 0.0, h * (1 - 1e-15))
    return wrap(j * h + s)


def _bilinear(v, x):
    n = v.shape[0]
    y = x * n
    i0 = np.floor(y).astype(int) % n
    f = y - np.floor(y)
    i1 = (i0 + 1) % n
    a = v[i0[:, 0], i0[:, 1]] * (1 - f[:, 0]) * (1 - f[:, 1])
    b = v[i1[:, 0], i0[:, 1]] * f[:, 0] * (1 - f[:, 1])
    c = v[i0[:, 0], i1[:, 1]] * (1 - f[:, 0]) * f[:, 1]
    e = v[i1[:, 0], i1[:, 1]] * f[:, 0] * f[:, 1]
    return a + b + c + e


def _rejection(v, count, g):
    if v.ndim != 2:
        raise InvalidArgument("rejection sampling implemented for d = 2")
    vmax = v.max()
    got = []
    need = count
    while need > 0:
        batch = max(2 * need, 64)
        x = g.random((batch, 2))
        acc = g.random(batch) * vmax < _bilinear(v, x)
        got.append(x[acc][:need])
        need -= len(got[-1])
    return wrap(np.concatenate(got))


# ---------------------------------------------------------------------------
# interaction sums
# ---------------------------------------------------------------------------

def _direct_sums(fields, pos, include_self):
    """sum_k f(x_i - x_k) by explicit pairwise evaluation, one field per axis."""
    diff = displacement(pos[:, :, None, :], pos[:, None, :, :])  # (M, N, N, d)
    out = np.stack([f(diff).sum(axis=-1) for f in fields], axis=-1)
    if not include_self:
        zero = np.zeros(pos.shape[-1])
        out -= np.stack([f(zero) for f in fields])
    return out


def _spectral_sums(fields, pos, include_self):
    out = np.stack([f.pair_sums(pos) for f in fields], axis=-1)
    if not include_self:
        zero = np.zeros(pos.shape[-1])
        out -= np.stack([f(zero) for f in fields])
    return out


def _cell_list_sums(fields, pos, cutoff, include_self):
    """Neighbour-cell pair search; pairs beyond ``cutoff`` contribute nothing."""
    M, N, d = pos.shape
    ncell = max(1, int(np.floor(1.0 / cutoff)))
    if ncell < 3:
        ncell = 1
    out = np.zeros((M, N, len(fields)))
    offsets = np.array(np.meshgrid(*([[-1, 0, 1]] * d), indexing="ij")).reshape(d, -1).T
    if ncell == 1:
        offsets = np.zeros((1, d), int)
    for m in range(M):
        x = pos[m]
        cell = np.floor(x * ncell).astype(int) % ncell
        key = np.ravel_multi_index(cell.T, (ncell,) * d)
        order = np.argsort(key, kind="stable")
        buckets = {}
        for idx in order:
            buckets.setdefault(int(key[idx]), []).append(idx)
        buckets = {k: np.array(v) for k, v in buckets.items()}
        for k, members in buckets.items():
            c = np.array(np.unravel_index(k, (ncell,) * d))
            neigh = set()
            for off in offsets:
                neigh.add(int(np.ravel_multi_index(tuple((c + off) % ncell), (ncell,) * d)))
            others = [buckets[q] for q in sorted(neigh) if q in buckets]
            if not others:
                continue
            nb = np.concatenate(others)
            diff = displacement(x[members][:, None, :], x[nb][None, :, :])
            near = np.linalg.norm(diff, axis=-1) <= cutoff
            for a, f in enumerate(fields):
                vals = np.where(near, f(diff), 0.0)
                out[m, members, a] = vals.sum(axis=1)
    if not include_self:
        zero = np.zeros(d)
        out -= np.stack([f(zero) for f in fields])
    return out


def interaction_sums(spec: KernelSpec, pos, cfg: SimConfig):
    """Return (sum_k K(x_i-x_k), sum_k sigma(x_i-x_k)), each (M, N, d)."""
    mode = cfg.interaction
    if mode == "spectral":
        fn = lambda fs: _spectral_sums(fs, pos, cfg.include_self)
    elif mode == "direct":
        fn = lambda fs: _direct_sums(fs, pos, cfg.include_self)
    else:
        fn = lambda fs: _cell_list_sums(fs, pos, cfg.cutoff, cfg.include_self)
    return fn(spec.drift), fn(spec.diffusion)


# ---------------------------------------------------------------------------
# stepping
# ---------------------------------------------------------------------------

def noise(ens: ParticleEnsemble, step_index: int):
    """Standard normal increments for every replica at ``step_index``."""
    M, N, d = ens.positions.shape
    out = np.empty((M, N, d))
    for r, rid in enumerate(ens.replica_ids):
        out[r] = rng.stream(ens.seed, "noise", rid, step_index).standard_normal((N, d))
    return out


def step(ens: ParticleEnsemble, spec: KernelSpec, dt: float, cfg: SimConfig | None = None,
         xi=None) -> ParticleEnsemble:
    """One Euler-Maruyama step; returns a new ensemble.

    ``xi`` overrides the keyed noise (shape (M, N, d)), which tests use to
    pin the Brownian increments.
    """
    if not dt > 0:
        raise InvalidArgument(f"dt must be positive, got {dt}")
    if spec.dim != ens.dim:
        raise InvalidArgument(f"kernel is {spec.dim}-d, ensemble is {ens.dim}-d")
    cfg = cfg or SimConfig(dt=dt, t_end=dt, seed=ens.seed,
                           interaction="spectral" if spec.is_trig else "direct")
    pos = ens.positions
    N = ens.n_particles
    drift_sum, sig_sum = interaction_sums(spec, pos, cfg)
    if xi is None:
        xi = noise(ens, ens.step_index)
    new = pos + (drift_sum / N) * dt + (np.sqrt(2.0) / N) * sig_sum * xi * np.sqrt(dt)
    bad = ~np.all(np.isfinite(new), axis=(1, 2))
    if np.any(bad):
        r = int(ens.replica_ids[np.argmax(bad)])
        raise NumericalBlowup(f"non-finite positions in replica {r}", replica=r)
    return ParticleEnsemble(wrap(new), ens.seed, ens.time + dt, ens.step_index + 1,
                            ens.replica_ids.copy())


@dataclass
class Snapshot:
    time: float
    positions: np.ndarray
    step_index: int


def run(ens: ParticleEnsemble, spec: KernelSpec, cfg: SimConfig, observers=()):
    """Integrate to ``cfg.t_end`` and return snapshots at the checkpoint times.

    Checkpoints must be sorted multiples of dt inside [0, t_end]; with no
    checkpoints only the final state is returned.
    """
    cfg.validate(spec)
    nsteps = int(round(cfg.t_end / cfg.dt))
    if abs(nsteps * cfg.dt - cfg.t_end) > 1e-9 * max(1.0, cfg.t_end) + cfg.dt:
        raise ConfigError("particles: t_end is not reachable in whole steps")
    obs = list(observers)
    if obs != sorted(obs):
        raise ConfigError("particles: checkpoints must be sorted")
    want = {}
    for t in obs:
        if t < -1e-12 or t > cfg.t_end + 1e-9:
            raise ConfigError(f"particles: checkpoint {t} outside [0, t_end]")
        k = t / cfg.dt
        if abs(k - round(k)) > 1e-6:
            raise ConfigError(f"particles: checkpoint {t} is not a multiple of dt")
        want[int(round(k))] = t
    if not want:
        want[nsteps] = cfg.t_end
    snaps = []
    cur = ens
    if 0 in want:
        snaps.append(Snapshot(cur.time, cur.positions.copy(), cur.step_index))
    for s in range(1, nsteps + 1):
        cur = step(cur, spec, cfg.dt, cfg)
        if s in want:
            snaps.append(Snapshot(cur.time, cur.positions.copy(), cur.step_index))
    return snaps, cur
