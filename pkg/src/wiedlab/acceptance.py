"""Acceptance suite: every gate criterion as a measurable check.

The benchmark artifacts are produced once per process (through the same
runner the CLI uses) and shared across criteria; determinism re-runs the
pipeline.  Calibrated thresholds come from the shipped calibration file
next to the config.  `run_acceptance` powers both the CLI `verify`
subcommand and tests/test_acceptance.py.
"""

from __future__ import annotations

import json
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import diagnostics as dg
from .assembly import ForcingSpec, functional_gradient, functional_value
from .combustion import beta_eval
from .config import load_config
from .grid import Cylinder, GridSpec, build_grid, weighted_norm
from .parabolic import ParabolicConfig, analytic_heat_oracle, solve_parabolic
from .runner import load_field, run_experiment


@dataclass
class CriterionResult:
    name: str
    passed: bool
    detail: str
    skipped: bool = False


def calibration_path(config_path) -> Path:
    p = Path(config_path)
    return p.with_name(p.stem + ".calibration.json")


def load_calibration(config_path) -> dict:
    p = calibration_path(config_path)
    if not p.exists():
        return {}
    return json.loads(p.read_text())


class AcceptanceContext:
    """Lazily runs the benchmark once and caches everything heavy."""

    def __init__(self, config_path, workdir: str | None = None):
        self.config_path = str(config_path)
        self.cfg = load_config(config_path)
        self.workdir = Path(workdir or tempfile.mkdtemp(prefix="wiedlab-acc-"))
        self.calibration = load_calibration(config_path)
        self._run = None

    def benchmark(self):
        if self._run is None:
            out = self.workdir / "run-a"
            manifest = run_experiment(self.cfg, out=str(out))
            grid = build_grid(self.cfg.grid)
            levels = []
            for eps in self.cfg.schedule.values():
                g2, arr, side = load_field(out / "fields" / f"eps-{eps:g}.f64")
                levels.append((eps, arr.reshape(grid.spec.nt + 1, -1)))
            _, ref, _ = load_field(out / "fields" / "parabolic.f64")
            stats = json.loads((out / "reports" / "levels.json").read_text())
            self._run = {"manifest": manifest, "grid": grid,
                         "levels": levels,
                         "reference": ref.reshape(grid.spec.nt + 1, -1),
                         "stats": stats, "out": out}
        return self._run


# ---------------------------------------------------------------------------

def criterion_gradient_consistency(ctx) -> CriterionResult:
    t0 = time.time()
    grid = build_grid(GridSpec(d=1, a=0.5, L=1.0, Y=1.0, T=1.0,
                               nx=6, ny=6, nt=6))
    rng = np.random.default_rng(101)
    worst = 0.0
    for _ in range(3):
        U = 0.5 + 0.4 * rng.standard_normal(grid.spacetime_shape)
        eta = rng.standard_normal(grid.spacetime_shape)
        eta.reshape(grid.spec.nt + 1, -1)[0] = 0.0
        G = functional_gradient(grid, ctx.cfg.model, 0.2, U)
        h = 1e-5
        fd = (functional_value(grid, ctx.cfg.model, 0.2, U + h * eta)
              - functional_value(grid, ctx.cfg.model, 0.2, U - h * eta)
              ) / (2 * h)
        an = float(np.sum(G * eta.reshape(G.shape)))
        worst = max(worst, abs(fd - an) / max(abs(fd), 1e-300))
    dt = time.time() - t0
    ok = worst <= 1e-6 and dt < 5.0
    return CriterionResult(
        "1 gradient consistency", ok,
        f"max relative FD error {worst:.2e} (tol 1e-6), {dt:.1f}s (< 5s)")


def criterion_linear_oracle(ctx) -> CriterionResult:
    t0 = time.time()
    w, T, L = 0.08, 0.08, 2.5
    errs = []
    for h in (1 / 32, 1 / 64, 1 / 128):
        nx, ny = int(round(2 * L / h)), int(round(L / h))
        nt = int(np.ceil(T / (4.0 * h * h)))
        grid = build_grid(GridSpec(d=1, a=0.0, L=L, Y=L, T=T,
                                   nx=nx, ny=ny, nt=nt, grading=1.0))
        ym, xm = grid.coords()
        X = np.stack(np.broadcast_arrays(xm, ym), axis=-1)
        U0 = analytic_heat_oracle(X, 0.0, w).ravel()
        traj = solve_parabolic(grid, None, ParabolicConfig(linear_tol=1e-10),
                               U0)
        errs.append(float(np.max(np.abs(
            traj[-1] - analytic_heat_oracle(X, T, w).ravel()))))
    orders = [float(np.log2(errs[i] / errs[i + 1])) for i in range(2)]
    dt = time.time() - t0
    ok = min(orders) >= 1.8 and errs[-1] <= 5e-3 and dt < 30.0
    return CriterionResult(
        "2 linear oracle", ok,
        f"orders {orders[0]:.2f}/{orders[1]:.2f} (>= 1.8), "
        f"final Linf {errs[-1]:.2e} (<= 5e-3), {dt:.1f}s (< 30s)")


def criterion_eps_limit(ctx) -> CriterionResult:
    run = ctx.benchmark()
    dists = [s["dist_to_ref"] for s in run["stats"]]
    eps = [s["eps"] for s in run["stats"]]
    strict = all(b < a for a, b in zip(dists, dists[1:]))
    third = dists[-1] <= dists[0] / 3.0
    wall = run["manifest"]["wallclock_s"]
    ok = (strict and third and len(dists) == 5
          and abs(eps[0] - 0.2) < 1e-12 and wall < 600.0)
    return CriterionResult(
        "3 eps-limit consistency", ok,
        f"distances {['%.4f' % d for d in dists]}, strict decrease "
        f"{strict}, last/first {dists[-1] / dists[0]:.3f} (<= 1/3), "
        f"{wall:.0f}s (< 600s)")


def criterion_max_principle(ctx) -> CriterionResult:
    run = ctx.benchmark()
    worst = 0.0
    for _, U in run["levels"]:
        worst = max(worst, float(U.max() - 1.0), float(-U.min()))
    ref = run["reference"]
    worst = max(worst, float(ref.max() - 1.0), float(-ref.min()))
    ok = worst <= 1e-8
    return CriterionResult(
        "4 maximum principle", ok,
        f"worst excursion outside [0,1]: {worst:.2e} (tol 1e-8)")


def criterion_energy_identity(ctx) -> CriterionResult:
    run = ctx.benchmark()
    grid = run["grid"]
    worst_ratio, details = 0.0, []
    for (eps, U), st in zip(run["levels"], run["stats"]):
        rep = dg.energy_decomposition(grid, ctx.cfg.model, eps, U)
        tol = 10.0 * st["el_tol_abs"]
        worst_ratio = max(worst_ratio, rep.identity_l1 / tol)
        details.append(f"{rep.identity_l1:.1e}/{tol:.1e}")
    ok = worst_ratio <= 1.0
    return CriterionResult(
        "5 energy identity", ok,
        f"|E'+2I|_1 vs 10x EL tolerance per level: {', '.join(details)}")


def criterion_uniform_bounds(ctx) -> CriterionResult:
    run = ctx.benchmark()
    grid = run["grid"]
    reports = [dg.energy_decomposition(grid, ctx.cfg.model, eps, U)
               for eps, U in run["levels"]]
    ub = dg.uniform_bounds_report(reports, factor=4.0)
    return CriterionResult(
        "6 uniform energy bounds", ub["uniform"],
        f"dt-energy spread {ub['dt_energy_spread']:.2f}, windowed spread "
        f"{ub['windowed_spread']:.2f} (both <= 4)")


def criterion_linf_l2(ctx) -> CriterionResult:
    run = ctx.benchmark()
    grid = run["grid"]
    cal = ctx.calibration.get("linf_l2_max")
    if cal is None:
        return CriterionResult("7 L2->Linf uniformity", False,
                               "no calibration file", skipped=False)
    p, q = ctx.cfg.forcing_exponents
    ratios = []
    for eps, U in run["levels"]:
        tr = U.reshape(grid.spacetime_shape)[:, 0, :]
        forcing = ForcingSpec(f=-np.asarray(beta_eval(ctx.cfg.model, tr)),
                              p=p, q=q)
        r = dg.linf_l2_ratio(grid, U.reshape(grid.spacetime_shape), forcing,
                             center=(0.0, 0.0, 2.0), radius=1.0)
        ratios.append(r["ratio"])
    ok = all(r <= 4.0 * cal for r in ratios)
    return CriterionResult(
        "7 L2->Linf uniformity", ok,
        f"ratios {['%.3f' % r for r in ratios]} <= 4 x frozen {cal:.3f}")


def criterion_no_spikes(ctx) -> CriterionResult:
    run = ctx.benchmark()
    grid = run["grid"]
    delta = ctx.calibration.get("no_spikes_delta", 0.5)
    cyl = Cylinder((0.0, 0.0, 2.0), 1.0)
    fld = run["levels"][-1][1].reshape(grid.spacetime_shape)
    upos = np.clip(fld, 0.0, None)
    denom = weighted_norm(grid, upos, "L2a", region=cyl)
    lam = np.sqrt(delta) / denom
    rep = dg.no_spikes_iteration(grid, lam * upos, cyl)
    smallness = float(np.sum(
        np.multiply.outer(grid.tvol,
                          grid.node_mass.reshape(grid.spatial_shape))
        * (lam * upos) ** 2 * cyl.mask(grid)))
    ok = bool(rep.converged and smallness <= delta * (1 + 1e-12))
    return CriterionResult(
        "8 no-spikes decay", ok,
        f"scaled smallness {smallness:.3f} <= delta {delta}, "
        f"E_12 = {rep.energies[-1]:.1e} (<= 1e-12)")


def criterion_holder(ctx) -> CriterionResult:
    run = ctx.benchmark()
    grid = run["grid"]
    fld = run["levels"][-1][1].reshape(grid.spacetime_shape)
    probes = next(d.options["centers"] for d in ctx.cfg.diagnostics
                  if d.name == "holder")
    details, ok = [], True
    for c in probes:
        rep = dg.fit_holder(dg.oscillation_table(grid, fld, tuple(c), 3))
        ratios = rep.ratios()
        good = (0.05 < rep.alpha < 1.0 and rep.fit_residual <= 0.15
                and all(r <= 0.95 for r in ratios))
        ok = ok and good
        details.append(f"x0={c[0]:g},t0={c[-1]:g}: alpha={rep.alpha:.3f} "
                       f"resid={rep.fit_residual:.3f} "
                       f"maxratio={max(ratios):.3f}")
    return CriterionResult(
        "9 oscillation decay / Hoelder fit", ok, "; ".join(details))


def _slice_family(n, seed):
    """Random smooth slice functions crossing both De Giorgi levels."""
    rng = np.random.default_rng(seed)
    fams = []
    for _ in range(n):
        k1 = rng.integers(1, 4)
        k2 = rng.integers(1, 3)
        a1 = 0.45 + 0.4 * rng.random()
        ph = 2 * np.pi * rng.random()
        sl = 0.5 + 0.5 * rng.random()

        def f(x, y, k1=k1, k2=k2, a1=a1, ph=ph, sl=sl):
            return (0.25 + a1 * np.cos(k1 * np.pi * x / 1.2 + ph)
                    * np.cos(k2 * np.pi * y / 2.4)
                    + 0.2 * sl * x)
        fams.append(f)
    return fams


def criterion_isoperimetric(ctx) -> CriterionResult:
    cal = ctx.calibration.get("isoperimetric_max")
    if cal is None:
        return CriterionResult("10 isoperimetric stability", False,
                               "no calibration file")
    coarse = build_grid(GridSpec(d=1, a=0.5, L=1.2, Y=1.2, T=1.0,
                                 nx=40, ny=12, nt=2))
    fine = build_grid(GridSpec(d=1, a=0.5, L=1.2, Y=1.2, T=1.0,
                               nx=80, ny=24, nt=2))
    ok, worst_drift, worst_ratio = True, 0.0, 0.0
    for f in _slice_family(10, seed=ctx.cfg.seed):
        rc = dg.isoperimetric_check(coarse, coarse.eval_spatial(f), p=1.5)
        rf = dg.isoperimetric_check(fine, fine.eval_spatial(f), p=1.5)
        worst_ratio = max(worst_ratio, rc["ratio"])
        ok = ok and rc["ratio"] <= cal * (1 + 1e-9)
        if rc["ratio"] > 0:
            drift = abs(rf["ratio"] / rc["ratio"] - 1.0)
            worst_drift = max(worst_drift, drift)
            ok = ok and drift <= 0.2
    return CriterionResult(
        "10 isoperimetric stability", ok,
        f"max ratio {worst_ratio:.3f} <= frozen {cal:.3f}, refinement "
        f"drift {worst_drift:.2%} (<= 20%)")


def criterion_determinism(ctx) -> CriterionResult:
    run = ctx.benchmark()
    out_b = ctx.workdir / "run-b"
    manifest_b = run_experiment(ctx.cfg, out=str(out_b))
    same = run["manifest"]["artifacts"] == manifest_b["artifacts"]
    n = len(manifest_b["artifacts"])
    return CriterionResult(
        "11 determinism", bool(same),
        f"{n} artifact hashes {'identical' if same else 'DIFFER'} "
        "across two runs")


ALL_CRITERIA = [
    criterion_gradient_consistency,
    criterion_linear_oracle,
    criterion_eps_limit,
    criterion_max_principle,
    criterion_energy_identity,
    criterion_uniform_bounds,
    criterion_linf_l2,
    criterion_no_spikes,
    criterion_holder,
    criterion_isoperimetric,
    criterion_determinism,
]

SLOW = {criterion_eps_limit, criterion_max_principle,
        criterion_energy_identity, criterion_uniform_bounds,
        criterion_linf_l2, criterion_no_spikes, criterion_holder,
        criterion_determinism}


def run_acceptance(config_path, workdir=None, skip_slow=False):
    ctx = AcceptanceContext(config_path, workdir=workdir)
    results = []
    for crit in ALL_CRITERIA:
        if skip_slow and crit in SLOW:
            results.append(CriterionResult(crit.__name__, False,
                                           "skipped (--skip-slow)",
                                           skipped=True))
            continue
        results.append(crit(ctx))
    return results
