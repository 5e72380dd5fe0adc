"""Run an ExperimentConfig stage by stage and record a manifest."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

from .. import __version__
from ..chaos import COLUMNS as CHAOS_COLUMNS
from ..chaos import chaos_sweep
from ..lde import (PhiField, check_cancellations, constants, enumerate_survivors,
                   exp_moment_mc)
from ..lde.enumeration import check_budget
from ..meanfield import march, picard_solve
from ..particles import run as run_particles
from ..particles import sample_initial
from . import io
from .config import ExperimentConfig

SCHEMAS = {
    "chaos_report.csv": list(CHAOS_COLUMNS),
    "lde_cancellations.csv": ["kind", "n", "probes", "max_first", "max_second", "passed"],
    "lde_constants.csv": ["B", "eta", "M_p_sup", "M_p_sup_sampled", "alpha", "beta", "C"],
    "lde_mc.csv": ["N", "n_mc", "mean", "stderr", "ci_low", "ci_high", "max_exponent",
                   "C_bound", "within_bound"],
    "enumeration.csv": ["N", "m", "survivors", "paper_bound", "identity_checks_passed"],
    "pde_diagnostics.csv": ["t", "mass", "min_value"],
}


@dataclass
class StageRecord:
    name: str
    status: str = "pending"
    seconds: float = 0.0
    error: str | None = None


@dataclass
class RunManifest:
    config_sha256: str
    version: str
    kind: str
    seed: int
    stages: list = field(default_factory=list)
    files: list = field(default_factory=list)  # dicts: path, sha256, bytes

    @property
    def ok(self):
        return all(s.status == "ok" for s in self.stages)

    def to_dict(self):
        return {"config_sha256": self.config_sha256, "version": self.version,
                "kind": self.kind, "seed": self.seed,
                "stages": [vars(s) for s in self.stages], "files": self.files}

    def verify(self, root):
        """True when every listed file exists and matches its checksum."""
        root = Path(root)
        return all((root / f["path"]).exists() and io.sha256(root / f["path"]) == f["sha256"]
                   for f in self.files)


class _Run:
    def __init__(self, cfg: ExperimentConfig, out: Path):
        self.cfg = cfg
        self.out = out
        self.manifest = RunManifest(cfg.sha256(), __version__, cfg.kind, cfg.seed)
        self.written = []

    def emit(self, paths):
        for p in paths if isinstance(paths, (list, tuple)) else [paths]:
            self.written.append(Path(p))

    def csv(self, name, rows, meta=None, columns=None):
        self.emit(io.write_csv(self.out / name, columns or SCHEMAS[name], rows, meta))

    def stage(self, name, fn):
        rec = StageRecord(name)
        self.manifest.stages.append(rec)
        t0 = time.perf_counter()
        try:
            result = fn()
        except BaseException as exc:
            rec.status = "failed"
            rec.error = f"{type(exc).__name__}: {exc}"
            rec.seconds = time.perf_counter() - t0
            self.finish()
            raise
        rec.status = "ok"
        rec.seconds = time.perf_counter() - t0
        return result

    def finish(self):
        files = []
        for p in sorted(set(self.written)):
            files.append({"path": str(p.relative_to(self.out)), "sha256": io.sha256(p),
                          "bytes": p.stat().st_size})
        self.manifest.files = files
        text = json.dumps(self.manifest.to_dict(), indent=2, sort_keys=True) + "\n"
        io.atomic_write(self.out / "manifest.json", text)
        return self.manifest


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------

def _kernel_meta(cfg):
    k = cfg["kernel"]
    return {"kernel": f"{k['drift']}{k['drift_params']}+{k['diffusion']}{k['diffusion_params']}"}


def _solve(run: _Run, spec, t_end, checkpoints):
    cfg = run.cfg
    pcfg = cfg.pde_config(spec, t_end, checkpoints)
    grid0 = cfg.initial_density()
    if pcfg.mode == "picard":
        res = picard_solve(grid0, spec, pcfg)
        traj = res.trajectory
        traj.info["picard_residuals"] = res.residuals
        traj.info["picard_converged"] = res.converged
    else:
        traj = march(grid0, spec, pcfg)
    return traj


def _write_trajectory(run: _Run, traj, spec):
    d = spec.dim
    cols = ["node"] + [f"x{a + 1}" for a in range(d)] + ["value"]
    files = []
    for k, g in enumerate(traj.grids):
        nodes = g.nodes()
        vals = g.values.reshape(-1)
        rows = [(i, *nodes[i], vals[i]) for i in range(len(vals))]
        name = f"pde_t{k:03d}.csv"
        run.csv(name, rows, {"t": io.fmt(g.time), "n": g.n, "d": d}, columns=cols)
        files.append(name)
    run.csv("pde_diagnostics.csv",
            [(g.time, g.mass(), float(g.values.min())) for g in traj.grids])
    info = {"n": traj.grids[0].n, "d": d, "dt": traj.info.get("dt"),
            "stepper": traj.info.get("stepper"), "kernel": spec.identity,
            "mass_drift": traj.mass_drift, "min_value": traj.min_value,
            "max_rhs_mean": traj.max_rhs_mean, "steps": traj.steps, "checkpoints": files}
    for key in ("picard_residuals", "picard_converged"):
        if key in traj.info:
            info[key] = traj.info[key]
    text = json.dumps(info, indent=2, sort_keys=True, default=str) + "\n"
    run.emit(io.atomic_write(run.out / "pde_manifest.json", text))


def _simulate(run: _Run, spec):
    cfg = run.cfg
    part = cfg["particles"]
    sim = cfg.sim_config()
    rho0 = cfg.initial_density()
    for N in part["N_list"]:
        ens = sample_initial(rho0, N, part["replicas"], part["seed"])
        snaps, _ = run_particles(ens, spec, sim, cfg.checkpoints())
        for k, s in enumerate(snaps):
            meta = {"N": N, "d": spec.dim, "M": part["replicas"], "t": io.fmt(s.time),
                    "seed": part["seed"], **_kernel_meta(cfg)}
            run.emit(io.write_snapshot(run.out / f"snapshot_N{N}_t{k:03d}.csv", s.positions,
                                       meta, part["binary_twin"]))


def _chaos(run: _Run, spec, traj):
    cfg = run.cfg
    part, met = cfg["particles"], cfg["metrics"]
    rep = chaos_sweep(part["N_list"], cfg.checkpoints(), spec, traj, cfg.sim_config(),
                      n_replicas=part["replicas"], bins=met["bins"], bins2=met["bins2"],
                      n_boot=met["bootstrap"], universal_C=met["universal_C"],
                      workers=met["workers"])
    rows = [(r.N, r.t, r.H1, r.H2, r.L1_1, r.L1_2, r.ckp_1, r.ckp_2, r.envelope, r.M,
             rep.slope) for r in rep.rows]
    run.csv("chaos_report.csv", rows, {"bins": rep.bins[0], "bins2": rep.bins[1],
                                       "universal_C": rep.universal_C,
                                       "min_C": io.fmt(rep.min_C), **_kernel_meta(cfg)})
    detail_cols = ["N", "t", "bias_1", "bias_2", "sd_H1", "sd_H2", "sd_L1_1", "sd_L1_2",
                   "status"]
    run.csv("chaos_detail.csv", [(r.N, r.t, r.bias_1, r.bias_2, r.sd_H1, r.sd_H2,
                                  r.sd_L1_1, r.sd_L1_2, r.status) for r in rep.rows],
            columns=detail_cols)
    series = []
    for t in cfg.checkpoints():
        rs = sorted((r for r in rep.rows if abs(r.t - t) < 1e-12), key=lambda r: r.N)
        series.append((f"H1, t={t:g}", [r.N for r in rs], [r.H1 for r in rs],
                       [3 * r.sd_H1 for r in rs], False))
    final = series[-1]
    if final[1] and final[2][0] > 0:
        N0, H0 = final[1][0], final[2][0]
        series.append(("1/N reference", final[1], [H0 * N0 / N for N in final[1]], None, True))
    svg = io.loglog_svg(series, title=f"H1 vs N (slope {rep.slope:.3f})")
    run.emit(io.atomic_write(run.out / "chaos_plot.svg", svg))
    return rep


def _lde_background(run: _Run, spec):
    t = run.cfg["lde"]["background_time"]
    if t > 0:
        return _solve(run, spec, t, (t,)).final
    return run.cfg.initial_density()


def _enumeration_rows(pairs, field_for_oracle, quad_n):
    rows, reports = [], []
    for N, m in pairs:
        rep = enumerate_survivors(N, m, field=field_for_oracle, quad_n=quad_n)
        reports.append(rep)
        rows.append((N, m, rep.survivors, rep.paper_bound, rep.identity_checks_passed))
    return rows, reports


def _restricted_csv(run, reports):
    cols = ["N", "m", "s", "direct", "corrected_formula", "paper_formula"]
    rows = [(r.N, r.m, s, d, c, p) for r in reports for s, d, c, p in r.restricted]
    run.csv("restricted_counts.csv", rows, columns=cols)


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def execute(cfg: ExperimentConfig, out=None) -> RunManifest:
    """Run every stage of ``cfg`` and write outputs plus manifest.json into ``out``."""
    out = Path(out or cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    run = _Run(cfg, out)
    run.emit(io.atomic_write(out / "config.json", cfg.serialize()))
    kind = cfg.kind

    if kind == "enumerate":
        e = cfg["enumerate"]
        run.stage("budget", lambda: check_budget(e["N"], e["m"]))

        def go():
            from ..lde import oracle_field
            fld = oracle_field(cfg.seed) if e["oracle"] else None
            rows, reps = _enumeration_rows([(e["N"], e["m"])], fld, e["quad_n"])
            run.csv("enumeration.csv", rows)
            _restricted_csv(run, reps)
        run.stage("enumerate", go)
        return run.finish()

    spec = run.stage("kernel", cfg.kernel)
    if kind == "simulate":
        run.stage("simulate", lambda: _simulate(run, spec))
    elif kind == "solve_pde":
        traj = run.stage("solve_pde", lambda: _solve(run, spec, None, None))
        run.stage("write", lambda: _write_trajectory(run, traj, spec))
    elif kind == "chaos_study":
        traj = run.stage("solve_pde", lambda: _solve(run, spec, None, None))
        run.stage("chaos_sweep", lambda: _chaos(run, spec, traj))
    elif kind == "lde_audit":
        lde = cfg["lde"]
        for N, m in lde["enumeration"]:
            run.stage(f"budget_N{N}_m{m}", lambda N=N, m=m: check_budget(N, m))
        bg = run.stage("background", lambda: _lde_background(run, spec))
        fld = run.stage("field", lambda: PhiField(spec, bg))

        def consts():
            c = constants(fld, lde["eta_mode"], lde["eta"])
            run.csv("lde_constants.csv", [(c.B, c.eta, c.M_p_sup, c.M_p_sup_sampled,
                                           c.alpha, c.beta, c.C_bound)],
                    {"hypothesis_holds": c.hypothesis_holds})
            return c
        c = run.stage("constants", consts)

        def cancel():
            rows = []
            for kind_ in ("phi2", "phi1"):
                f = fld if kind_ == "phi2" else PhiField(spec, bg, kind="phi1")
                r = check_cancellations(f, lde["probes"], cfg.seed)
                rows.append((kind_, r["n"], r["probes"], r["max_first"], r["max_second"],
                             r["ok"]))
            run.csv("lde_cancellations.csv", rows)
        run.stage("cancellations", cancel)

        def mc():
            rows = []
            for N in lde["N_list"]:
                est = exp_moment_mc(fld, c.eta, N, lde["n_mc"], cfg.seed, C_bound=c.C_bound)
                rows.append((N, est.n_mc, est.mean, est.stderr, est.ci[0], est.ci[1],
                             est.max_exponent, c.C_bound, est.within_bound))
            run.csv("lde_mc.csv", rows)
        run.stage("monte_carlo", mc)

        def enum():
            from ..lde import oracle_field
            ofld = oracle_field(cfg.seed) if lde["oracle"] else None
            rows, reps = _enumeration_rows([tuple(p) for p in lde["enumeration"]], ofld,
                                           lde["quad_n"])
            run.csv("enumeration.csv", rows)
            _restricted_csv(run, reps)
        if lde["enumeration"]:
            run.stage("enumeration", enum)
    return run.finish()

