"""Distance between the particle system and the tensorized mean-field law.

Marginals of the particle ensemble are binned on a periodic grid and compared
with the exact cell masses of the mean-field density: plug-in relative
entropy, L1 distance, and the Pinsker bound sqrt(2 k H_k).  Statistical
tolerances come from a bootstrap over independent replicas.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .errors import DomainError, InvalidArgument, UndersampledError
from .kernels import KernelSpec
from .meanfield import DensityGrid, Trajectory, density_norms
from .particles import SimConfig, run, sample_initial

MIN_PER_BIN = 10
PAIR_CAP = 400_000


@dataclass
class MarginalEstimate:
    order: int
    dim: int
    bins: int
    counts: np.ndarray  # (replicas, bins**(d k)) raw counts per replica

    @property
    def n_samples(self):
        return int(self.counts.sum())

    @property
    def histogram(self):
        tot = self.counts.sum(axis=0)
        return (tot / tot.sum()).reshape((self.bins,) * (self.dim * self.order))

    def resample(self, idx):
        return MarginalEstimate(self.order, self.dim, self.bins, self.counts[idx])


def _cell_index(x, bins):
    """Flat cell index for points x of shape (..., D) on a bins^D grid."""
    c = np.minimum(np.floor(x * bins).astype(np.int64), bins - 1)
    flat = np.zeros(c.shape[:-1], dtype=np.int64)
    for a in range(c.shape[-1]):
        flat = flat * bins + c[..., a]
    return flat


def default_bins(n_samples, dim, k=1, cap=None):
    b = max(2, int(np.floor(n_samples ** (1.0 / (dim * k + 2)))))
    while b > 2 and n_samples < MIN_PER_BIN * b ** (dim * k):
        b -= 1
    if cap is not None:
        b = min(b, cap)
    return b


def estimate_marginal(positions, k: int, bins: int, seed: int = 0,
                      pair_cap: int = PAIR_CAP) -> MarginalEstimate:
    """Bin the k-particle marginal of an ensemble snapshot (M, N, d).

    k = 1 pools every particle of every replica (exchangeability); k = 2
    pools ordered pairs i != j, subsampled uniformly to at most ``pair_cap``
    pairs in total.
    """
    pos = np.asarray(positions, dtype=float)
    if pos.ndim == 2:
        pos = pos[None]
    M, N, d = pos.shape
    if k not in (1, 2):
        raise InvalidArgument("only 1- and 2-particle marginals are supported")
    ncell = bins ** (d * k)
    if k == 1:
        samples = pos
    else:
        if N < 2:
            raise InvalidArgument("pair marginal needs N >= 2")
        per = N * (N - 1)
        if per * M <= pair_cap:
            i, j = np.nonzero(~np.eye(N, dtype=bool))
        else:
            n_pairs = max(1, pair_cap // M)
            g = rng.stream(seed, "subsample", N, bins)
            i = g.integers(0, N, n_pairs)
            j = (i + 1 + g.integers(0, N - 1, n_pairs)) % N
        samples = np.concatenate([pos[:, i, :], pos[:, j, :]], axis=-1)
    n_samples = samples.shape[0] * samples.shape[1]
    need = MIN_PER_BIN * ncell
    if n_samples < need:
        raise UndersampledError(
            f"{n_samples} pooled samples for {ncell} cells; need at least {need}",
            minimum=need)
    idx = _cell_index(samples, bins)  # (M, S)
    offs = idx + ncell * np.arange(M)[:, None]
    counts = np.bincount(offs.ravel(), minlength=M * ncell).reshape(M, ncell)
    return MarginalEstimate(k, d, bins, counts.astype(float))


def limit_cell_masses(limit: DensityGrid, bins: int, k: int):
    q1 = np.clip(limit.cell_masses(bins).ravel(), 0.0, None)
    q = q1
    for _ in range(k - 1):
        q = np.multiply.outer(q, q1).ravel()
    return q / q.sum()


def _kl(p, q, k):
    nz = p > 0
    if np.any(q[nz] <= 0):
        raise DomainError("limit density has a zero cell where the sample has mass")
    return float(np.sum(p[nz] * np.log(p[nz] / q[nz])) / k)


def relative_entropy(marg: MarginalEstimate, limit: DensityGrid, k: int | None = None,
                     q=None) -> float:
    """(1/k) sum_cells p log(p / q) with q the cell masses of rho^{(x)k}."""
    k = k or marg.order
    if not limit.values.min() > 0:
        raise DomainError("limit density must be strictly positive")
    p = marg.histogram.ravel()
    if q is None:
        q = limit_cell_masses(limit, marg.bins, k)
    return _kl(p, q, k)


def l1_distance(marg: MarginalEstimate, limit: DensityGrid, k: int | None = None,
                q=None) -> float:
    k = k or marg.order
    if not limit.values.min() > 0:
        raise DomainError("limit density must be strictly positive")
    p = marg.histogram.ravel()
    if q is None:
        q = limit_cell_masses(limit, marg.bins, k)
    return float(np.abs(p - q).sum())


def plugin_bias(marg: MarginalEstimate, k: int | None = None):
    """Leading-order bias (cells - 1) / (2 n) of the plug-in KL, rescaled by 1/k."""
    k = k or marg.order
    cells = marg.bins ** (marg.dim * marg.order)
    return (cells - 1) / (2.0 * marg.n_samples) / k


def bootstrap(marg: MarginalEstimate, limit: DensityGrid, n_boot=200, seed=0):
    """Bootstrap standard deviations of (H, L1) over replicas."""
    M = marg.counts.shape[0]
    q = limit_cell_masses(limit, marg.bins, marg.order)
    g = rng.stream(seed, "bootstrap", M, marg.bins, marg.order)
    hs, ls = np.empty(n_boot), np.empty(n_boot)
    for b in range(n_boot):
        sub = marg.resample(g.integers(0, M, M))
        hs[b] = relative_entropy(sub, limit, q=q)
        ls[b] = l1_distance(sub, limit, q=q)
    return float(hs.std(ddof=1)), float(ls.std(ddof=1))


# ---------------------------------------------------------------------------
# theoretical envelope
# ---------------------------------------------------------------------------

def density_ratios(grids, t=None):
    """sup over grids (with time <= t) of ||grad rho||/inf rho and ||D^2 rho||/inf rho."""
    r1 = r2 = 0.0
    lo = np.inf
    for g in grids:
        if t is not None and g.time > t + 1e-12:
            continue
        inf, gsup, hsup = density_norms(g)
        if not inf > 0:
            raise DomainError(f"limit density not positive at t={g.time}")
        lo = min(lo, inf)
        r1 = max(r1, gsup / inf)
        r2 = max(r2, hsup / inf)
    return r1, r2, lo


def sigma_bound(spec: KernelSpec, r1, r2):
    """8d|s|^2 + 8d|s|^2 r1 + 2d|s|^2 r2 with |s| the W^{2,inf} norm of sigma."""
    d = spec.dim
    s2 = spec.norm_data.sigma_w2inf ** 2
    return 8 * d * s2 + 8 * d * s2 * r1 + 2 * d * s2 * r2


def constant_M(spec: KernelSpec, grids, t=None):
    """Growth constant of the entropy envelope from kernel and limit norms."""
    nd = spec.norm_data
    r1, r2, _ = density_ratios(grids, t)
    div = nd.div_drift_bound
    drift_part = (nd.drift_sup + div) * r1 + spec.dim / spec.sigma_floor**2 * div**2
    return drift_part + 12 * np.e**2 * sigma_bound(spec, r1, r2)


def theoretical_envelope(spec: KernelSpec, limit_traj, t: float, n_particles: int,
                         universal_C: float = 1.0, H0: float = 0.0):
    """exp(C M t) (H_N(0) + 1/N), with M taken uniformly over [0, t]."""
    if not universal_C > 0:
        raise InvalidArgument("universal constant must be positive")
    grids = limit_traj.grids if isinstance(limit_traj, Trajectory) else list(limit_traj)
    M = constant_M(spec, grids, t)
    with np.errstate(over="ignore"):
        env = np.exp(universal_C * M * t) * (H0 + 1.0 / n_particles)
    return float(env), M


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------

COLUMNS = ("N", "t", "H1", "H2", "L1_1", "L1_2", "ckp_1", "ckp_2", "envelope", "M",
           "slope")


@dataclass
class ChaosRow:
    N: int
    t: float
    H1: float
    H2: float
    L1_1: float
    L1_2: float
    ckp_1: float
    ckp_2: float
    envelope: float
    M: float
    bias_1: float
    bias_2: float
    sd_H1: float
    sd_H2: float
    sd_L1_1: float
    sd_L1_2: float
    status: str = "ok"


@dataclass
class ChaosReport:
    rows: list
    slope: float
    universal_C: float
    min_C: float
    bins: tuple
    meta: dict = field(default_factory=dict)

    def at(self, N, t):
        for r in self.rows:
            if r.N == N and abs(r.t - t) < 1e-12:
                return r
        raise KeyError((N, t))

    def final_rows(self):
        tf = max(r.t for r in self.rows)
        return sorted((r for r in self.rows if abs(r.t - tf) < 1e-12), key=lambda r: r.N)

    def ckp_violations(self, nsig=3.0):
        out = []
        for r in self.rows:
            if r.status != "ok":
                continue
            if r.L1_1 > r.ckp_1 + nsig * r.sd_L1_1:
                out.append((r.N, r.t, 1))
            if r.L1_2 > r.ckp_2 + nsig * r.sd_L1_2:
                out.append((r.N, r.t, 2))
        return out

    def monotone_violations(self, nsig=3.0):
        out = []
        for t in sorted({r.t for r in self.rows}):
            rows = sorted((r for r in self.rows if r.t == t), key=lambda r: r.N)
            for a, b in zip(rows, rows[1:]):
                if b.H1 > a.H1 + nsig * max(a.sd_H1, b.sd_H1):
                    out.append((a.N, b.N, t))
        return out


def fit_slope(Ns, Hs):
    Ns, Hs = np.asarray(Ns, float), np.asarray(Hs, float)
    ok = Hs > 0
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(Ns[ok]), np.log(Hs[ok]), 1)[0])


def minimal_constant(rows, H0=0.0):
    """Smallest C with H1 <= exp(C M t)(H0 + 1/N) on every row."""
    c = 0.0
    for r in rows:
        base = H0 + 1.0 / r.N
        if r.H1 <= base:
            continue
        if r.t <= 0 or r.M <= 0:
            return float("inf")
        c = max(c, np.log(r.H1 / base) / (r.M * r.t))
    return float(c)


def _row_metrics(N, t, pos, limit, spec, grids, bins1, bins2, universal_C, n_boot, seed,
                 H0):
    m1 = estimate_marginal(pos, 1, bins1, seed)
    m2 = estimate_marginal(pos, 2, bins2, seed)
    q1 = limit_cell_masses(limit, bins1, 1)
    q2 = limit_cell_masses(limit, bins2, 2)
    H1 = relative_entropy(m1, limit, q=q1)
    H2 = relative_entropy(m2, limit, q=q2)
    L1 = l1_distance(m1, limit, q=q1)
    L2 = l1_distance(m2, limit, q=q2)
    sh1, sl1 = bootstrap(m1, limit, n_boot, seed)
    sh2, sl2 = bootstrap(m2, limit, n_boot, seed)
    env, M = theoretical_envelope(spec, grids, t, N, universal_C, H0)
    return ChaosRow(N, t, H1, H2, L1, L2, float(np.sqrt(2 * max(H1, 0.0))),
                    float(np.sqrt(4 * max(H2, 0.0))), env, M,
                    plugin_bias(m1), plugin_bias(m2), sh1, sh2, sl1, sl2)


def chaos_sweep(N_list, t_checkpoints, spec: KernelSpec, pde_traj: Trajectory,
                sim_cfg: SimConfig, n_replicas: int = 64, bins: int | None = None,
                bins2: int | None = None, n_boot: int = 200, universal_C: float = 1.0,
                workers: int = 1, H0: float = 0.0) -> ChaosReport:
    """Run the particle system for each N and compare against ``pde_traj``.

    The initial ensemble is sampled i.i.d. from the first grid of
    ``pde_traj``.  A single bin count is used across the sweep so the
    plug-in bias scales like 1/(N M) throughout.
    """
    N_list = [int(n) for n in N_list]
    if len(N_list) < 2 or any(b <= a for a, b in zip(N_list, N_list[1:])):
        raise InvalidArgument("N_list needs at least two strictly increasing values")
    t_checkpoints = sorted(float(t) for t in t_checkpoints)
    grids = pde_traj.grids
    limits = {t: pde_traj.at(t) for t in t_checkpoints}
    d = spec.dim
    n_grid = grids[0].n
    n_min = N_list[0] * n_replicas
    bins1 = bins or default_bins(n_min, d, 1, cap=n_grid)
    if bins2 is None:
        pairs = min(N_list[0] * (N_list[0] - 1) * n_replicas, PAIR_CAP)
        bins2 = default_bins(pairs, d, 2, cap=bins1)
    rho0 = grids[0]

    def one(N):
        ens = sample_initial(rho0, N, n_replicas, sim_cfg.seed)
        cfg = SimConfig(sim_cfg.dt, max(t_checkpoints), sim_cfg.scheme, sim_cfg.seed,
                        sim_cfg.interaction, sim_cfg.cutoff, sim_cfg.include_self)
        snaps, _ = run(ens, spec, cfg, t_checkpoints)
        rows = []
        for snap, t in zip(snaps, t_checkpoints):
            try:
                rows.append(_row_metrics(N, t, snap.positions, limits[t], spec, grids,
                                         bins1, bins2, universal_C, n_boot,
                                         sim_cfg.seed, H0))
            except (UndersampledError, DomainError) as exc:
                nan = float("nan")
                rows.append(ChaosRow(N, t, *([nan] * 14), status=f"failed: {exc}"))
        return rows

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            per_n = list(pool.map(one, N_list))
    else:
        per_n = [one(N) for N in N_list]
    rows = [r for rs in per_n for r in rs]
    tf = t_checkpoints[-1]
    final = sorted((r for r in rows if r.t == tf and r.status == "ok"), key=lambda r: r.N)
    slope = fit_slope([r.N for r in final], [r.H1 for r in final])
    ok_rows = [r for r in rows if r.status == "ok"]
    report = ChaosReport(rows, slope, universal_C, minimal_constant(ok_rows, H0),
                         (bins1, bins2), {"replicas": n_replicas, "n_boot": n_boot})
    return report
