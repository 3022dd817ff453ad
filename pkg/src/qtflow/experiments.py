"""Canned experiments behind the command-line subcommands.

Each ``cmd_*`` function takes an :class:`~qtflow.config.ExperimentConfig`,
writes its files under ``out`` and returns ``(passed, summary)``.  Checks
are printed as ``PASS``/``FAIL`` lines carrying the measured value and the
threshold.
"""
import json
import logging
import math
import os
from pathlib import Path

import numpy as np

from . import checkpoint, diagnostics as dg, regularity as rg, timestepper as ts
from .config import initial_state, random_tensor_field, random_velocity_field
from .timestepper import State

log = logging.getLogger(__name__)


class Check:
    """One pass/fail criterion."""

    def __init__(self, name, value, threshold, relation, tag):
        self.name = name
        self.value = value
        self.threshold = threshold
        self.relation = relation
        self.tag = tag
        ops = {">=": lambda a, b: a >= b, "<=": lambda a, b: a <= b,
               ">": lambda a, b: a > b, "<": lambda a, b: a < b,
               "==": lambda a, b: a == b}
        self.passed = bool(ops[relation](value, threshold))

    def line(self):
        word = "PASS" if self.passed else "FAIL"
        return (f"{word} [{self.tag}] {self.name}: {_fmt(self.value)} "
                f"{self.relation} {_fmt(self.threshold)}")

    def as_dict(self):
        return {"name": self.name, "value": self.value, "threshold": self.threshold,
                "relation": self.relation, "tag": self.tag, "passed": self.passed}


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, float, np.floating)):
        return f"{float(v):.6g}"
    return str(v)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else repr(f)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def plot_series(path, x, ys, xlabel="t", ylabel="", logy=False):
    """Static SVG line chart; deterministic output for identical input."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    matplotlib.rcParams["svg.hashsalt"] = "qtflow"
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, y in ys.items():
        y = np.asarray(y, dtype=float)
        if logy and np.any(y > 0):
            ax.semilogy(x, np.where(y > 0, y, np.nan), label=label)
        else:
            ax.plot(x, y, label=label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if len(ys) > 1:
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _report(checks, echo):
    for c in checks:
        echo(c.line())
    return all(c.passed for c in checks)


def _base_params(cfg):
    return {"dim": cfg.dim, "n": cfg.n, "dt": cfg.dt, "t_end": cfg.t_end,
            "scheme": cfg.scheme, "potential": cfg.potential.as_dict()}


def _prepare_out(out):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def simulate(cfg, grid, s0, out, echo=print, observers=(), tag="run"):
    """Run, stream records to CSV/JSONL and write checkpoints."""
    out = _prepare_out(out)
    scfg = cfg.solver()
    rec = dg.Recorder(grid, scfg.model, grid.lq_norm(s0.q, math.inf),
                      cfg.q_list, balance=cfg.balance)
    params = _base_params(cfg)
    with open(out / f"{tag}.csv", "w", newline="", encoding="utf-8") as fc, \
            open(out / f"{tag}.jsonl", "w", encoding="utf-8") as fj:
        sinks = [dg.CsvSink(fc), dg.JsonLinesSink(fj)]
        ckpt = None
        if cfg.checkpoint_every:
            def save(state):
                checkpoint.save(out / f"{tag}_t{state.t:.6f}.npz", state, params)
            ckpt = (cfg.checkpoint_every, save)
        if scfg.n_steps == 0:
            r0 = rec(s0)
            for s in sinks:
                s.emit(r0)
            result = ts.RunResult(s0, [r0], 0)
        else:
            result = ts.run(grid, s0, scfg, recorder=rec, sinks=sinks,
                            observers=observers, checkpoint=ckpt)
    checkpoint.save(out / f"{tag}_final.npz", result.state, params)
    return result


def _plot_records(out, records, tag="run"):
    if len(records) < 2:
        return
    t = dg.series(records, "t")
    for name in dg.CSV_FIELDS[1:]:
        plot_series(Path(out) / f"{tag}_{name}.svg", t, {name: dg.series(records, name)},
                    ylabel=name)


def cmd_simulate(cfg, grid, out, seed=None, echo=print):
    s0 = initial_state(cfg, grid, seed)
    result = simulate(cfg, grid, s0, out, echo)
    _plot_records(out, result.records)
    summary = {"steps": result.steps, "t_final": result.state.t,
               "records": len(result.records)}
    checks = []
    p = cfg.potential
    if (cfg.initial.family == "uniaxial_mode" and p.b == 0 and p.c == 0
            and not np.any(s0.u)):
        exact = ts.linear_relaxation_exact(grid, s0.q, p.a, result.state.t - s0.t,
                                           cfg.relaxation)
        err = ts.relative_error(result.state.q, exact)
        summary["linear_oracle_error"] = err
        tol = 2e-3 if cfg.scheme == "IMEX1" else 1e-5
        echo(f"linear oracle relative error {err:.3e} (scheme tolerance {tol:g})")
    if result.records:
        last = result.records[-1]
        echo(f"t={last.t:.6g} energy={last.energy:.6e} q_linf={last.q_norms[math.inf]:.6e}"
             f" u_l2={last.u_l2:.6e}")
    write_json(Path(out) / "summary.json", {"command": "simulate", **summary})
    return _report(checks, echo), summary


def cmd_decay(cfg, grid, out, seed=None, echo=print):
    from .config import ConfigError
    p = cfg.potential
    amp = cfg.q0_amplitude()
    if amp is not None and amp > p.r / 2:
        raise ConfigError(f"decay needs ||Q0||_inf <= r/2 = {p.r / 2:.6g}, got {amp:.6g}")
    s0 = initial_state(cfg, grid, seed)
    q0inf = grid.lq_norm(s0.q, math.inf)
    if q0inf > p.r / 2 * (1 + 1e-12):
        raise ConfigError(f"decay needs ||Q0||_inf <= r/2 = {p.r / 2:.6g}, got {q0inf:.6g}")
    result = simulate(cfg, grid, s0, out, echo)
    recs = result.records
    _plot_records(out, recs)
    t = dg.series(recs, "t")
    fits = {
        "q_l2": dg.decay_fit(t, dg.series(recs, "q_l2")),
        "q_l4": dg.decay_fit(t, dg.series(recs, "q_l4")),
        "q_linf": dg.decay_fit(t, dg.series(recs, "q_linf")),
        "u_l2+q_h1": dg.decay_fit(t, dg.series(recs, "u_l2") + dg.series(recs, "q_h1")),
    }
    margin = float(np.min(dg.max_principle_margin(recs, q0inf)))
    checks = [
        Check("decay rate of ||Q||_L4", fits["q_l4"].rate, 0.95 * p.c1, ">=", "Lq-decay"),
        Check("decay rate of ||Q||_Linf", fits["q_linf"].rate, 0.95 * p.c1, ">=", "Lq-decay"),
        Check("min max-principle margin", margin, -1e-3 * q0inf, ">=", "max-principle"),
        Check("decay rate of ||u||_L2+||Q||_H1", fits["u_l2+q_h1"].rate, 0.0, ">",
              "energy-decay"),
    ]
    echo(f"fitted L2 rate of Q: {fits['q_l2'].rate:.6g}")
    passed = _report(checks, echo)
    summary = {"command": "decay", "c1": p.c1, "q0_linf": q0inf, "margin_min": margin,
               "fits": {k: vars(v) for k, v in fits.items()},
               "checks": [c.as_dict() for c in checks], "passed": passed}
    write_json(Path(out) / "summary.json", summary)
    return passed, summary


def perturbation(grid, rng, band, size):
    """Random band-limited ``(du, dQ)`` with ``||dQ||_inf = ||du||_L2 = size``."""
    dq = random_tensor_field(grid, rng, band, 1.0)
    du = random_velocity_field(grid, rng, band, 1.0)
    return size * du, size * dq


def snapshot_run(grid, s0, scfg, every, keep_from=-math.inf, observers=()):
    """Run without records, storing ``s0`` and every ``every``-th state with
    ``t >= keep_from``."""
    snaps = [s0] if s0.t >= keep_from else []

    def grab(k, state):
        if k % every == 0 and state.t >= keep_from - 1e-12:
            snaps.append(state)

    result = ts.run(grid, s0, scfg, observers=(grab,) + tuple(observers))
    if not snaps or snaps[-1].t != result.state.t:
        snaps.append(result.state)
    return snaps


def cmd_depend(cfg, grid, out, seed=None, echo=print):
    out = _prepare_out(out)
    dep = cfg.depend
    s0 = initial_state(cfg, grid, seed)
    scfg = cfg.solver()
    every = dep["snapshot_every"]
    base = snapshot_run(grid, s0, scfg, every)
    rng_seed = dep["seed"] if seed is None else seed + 1
    reports = {}
    for size in dep["sizes"]:
        rng = np.random.default_rng(rng_seed)
        du, dq = perturbation(grid, rng, cfg.initial.band, size)
        pert = snapshot_run(grid, State(s0.t, s0.u + du, s0.q + dq), scfg, every)
        reports[size] = dg.dependence_metrics(grid, base, pert, c_abs=dep["c_abs"])
    ratios = [rep.sup_ratio for rep in reports.values()]
    finite = all(math.isfinite(r) for r in ratios)
    nz = [r for r in ratios if r > 0]
    spread = max(nz) / min(nz) if nz else 1.0
    checks = [Check("sup ratio finite", finite, True, "==", "continuous-dependence"),
              Check("sup ratio spread across sizes", spread, 2.0, "<=",
                    "continuous-dependence")]
    for size, rep in reports.items():
        checks.append(Check(f"Gronwall envelope respected (size {size:g})",
                            rep.within_bound, True, "==", "continuous-dependence"))
    passed = _report(checks, echo)
    rows = []
    for size, rep in reports.items():
        for t, e, a, b in zip(rep.t, rep.e_n, rep.a_n, rep.bound):
            rows.append(f"{size!r},{t!r},{e!r},{a!r},{b!r}")
    with open(out / "dependence.csv", "w", encoding="utf-8") as fh:
        fh.write("size,t,e_n,a_n,bound\n" + "\n".join(rows) + "\n")
    for size, rep in reports.items():
        if rep.e_n[0] > 0:
            plot_series(out / f"dependence_{size:g}.svg", rep.t,
                        {"E_n/E_n(0)": rep.e_n / rep.e_n[0]}, ylabel="ratio")
    summary = {"command": "depend",
               "sizes": {f"{s:g}": {"sup_ratio": rep.sup_ratio,
                                    "within_bound": rep.within_bound}
                         for s, rep in reports.items()},
               "checks": [c.as_dict() for c in checks], "passed": passed}
    write_json(out / "summary.json", summary)
    return passed, summary


def criterion_centers(cfg, grid):
    centers = cfg.criterion["centers"]
    if centers:
        return [tuple(c) for c in centers]
    return [(math.pi,) * grid.dim]


def cmd_criterion(cfg, grid, out, seed=None, echo=print, trajectory=None):
    """CKN reports over ``theta^k rho``, the iteration verdict, the local
    energy residual and the Besov monitor.

    ``trajectory`` may supply ``(snapshots, besov_series)`` from an earlier
    run; otherwise a fresh run is made.
    """
    out = _prepare_out(out)
    cr = cfg.criterion
    rho, theta, eps1 = cr["rho"], cr["theta"], cr["eps1"]
    t0 = cr["t0"] if cr["t0"] is not None else cfg.t_end
    if 4 * rho >= math.pi:
        raise ValueError(f"criterion.rho={rho} too large: need 4*rho < pi")
    if t0 - (4 * rho) ** 2 < -1e-12 or t0 > cfg.t_end + 1e-12:
        raise ValueError(f"criterion window [{t0 - (4 * rho) ** 2:.6g}, {t0:.6g}]"
                         f" is outside [0, {cfg.t_end:.6g}]")
    if trajectory is None:
        s0 = initial_state(cfg, grid, seed)
        besov = []

        def monitor(k, state):
            if k % cr["besov_every"] == 0:
                besov.append((state.t, rg.besov_monitor(grid, state)))

        besov.append((s0.t, rg.besov_monitor(grid, s0)))
        snaps = snapshot_run(grid, s0, cfg.solver(t_end=t0), cr["snapshot_every"],
                             keep_from=t0 - (4 * rho) ** 2, observers=(monitor,))
    else:
        snaps, besov = trajectory
    pressures = rg.trajectory_pressures(grid, snaps)
    model = cfg.solver().model
    results = []
    checks = []
    for center in criterion_centers(cfg, grid):
        c3 = tuple(center) + (0.0,) * (3 - len(center))
        reps = [rg.ckn_quantities(grid, snaps, pressures, center, t0, rho * theta ** k,
                                  eps1=eps1, theta=theta)
                for k in range(cr["levels"])]
        verdict = rg.criterion_iteration(reps, eps1=eps1, theta=theta)
        le = rg.local_energy_residual(grid, snaps, pressures,
                                      rg.CutoffSpec(c3, t0, rho), model)
        results.append({"center": list(center), "reports": [r.as_dict() for r in reps],
                        "verdict": verdict.as_dict(), "local_energy": {
                            "residual": le.residual, "scale": le.scale,
                            "terms": le.terms}})
        where = ",".join(f"{c:.3g}" for c in center)
        checks.append(Check(f"F1 nonincreasing in k beyond first step at ({where})",
                            verdict.nonincreasing_after_first, True, "==", "iteration"))
        checks.append(Check(f"local energy residual / scale at ({where})",
                            le.residual / le.scale if le.scale else 0.0, 1e-3, "<=",
                            "local-energy"))
        echo(f"F1 profile at ({where}): " + ", ".join(f"{v:.4e}" for v in verdict.profile)
             + f"; first small k = {verdict.k}")
    bt = np.array([b[0] for b in besov])
    bv = np.array([b[1] for b in besov])
    transient = bt >= bt[0] + 0.2 * (bt[-1] - bt[0]) if len(bt) > 1 else np.ones(1, bool)
    late = float(np.max(bv[transient])) if bv.size else 0.0
    checks.append(Check("Besov monitor after transient", late, cr["eps0"], "<=",
                        "besov-smallness"))
    passed = _report(checks, echo)
    if len(bt) > 1:
        plot_series(out / "besov_monitor.svg", bt, {"B(u)+B(gradQ)": bv}, ylabel="M(t)")
    with open(out / "ckn_reports.csv", "w", encoding="utf-8") as fh:
        fh.write("center,t0,r,E,E_star,E3,P32,F1,M,small\n")
        for res in results:
            for r in res["reports"]:
                fh.write(" ".join(f"{c!r}" for c in r["center"])
                         + "," + ",".join(repr(r[k]) for k in
                                          ("t0", "r", "E", "E_star", "E3", "P32", "F1",
                                           "M", "small")) + "\n")
    summary = {"command": "criterion", "t0": t0, "rho": rho, "theta": theta,
               "eps1": eps1, "centers": results,
               "besov": {"t": bt, "value": bv},
               "checks": [c.as_dict() for c in checks], "passed": passed}
    write_json(out / "summary.json", summary)
    return passed, summary


def convergence_table(cfg, workers=1, schemes=("IMEX1", "IMEX2")):
    """Errors of the linear-relaxation oracle over ``dt in {4,2,1} dt0``
    and the configured resolutions."""
    from .grid import Grid
    from .qtensor import PotentialParams, UNIAXIAL
    conv = cfg.convergence
    p = PotentialParams(cfg.potential.a, 0.0, 0.0)
    rows = []
    for n in conv["ns"]:
        grid = Grid(cfg.dim, n, workers=workers)
        q0 = np.multiply.outer(UNIAXIAL, np.sin(grid.x[0]))
        s0 = State(0.0, np.zeros((cfg.dim,) + grid.shape), q0)
        exact = ts.linear_relaxation_exact(grid, q0, p.a, conv["t_end"], cfg.relaxation)
        for scheme in schemes:
            errs = []
            for m in (4, 2, 1):
                scfg = ts.SolverConfig(m * conv["dt0"], conv["t_end"], p, scheme=scheme,
                                       relaxation=cfg.relaxation, freeze_velocity=True)
                res = ts.run(grid, s0, scfg)
                errs.append(ts.relative_error(res.state.q, exact))
            orders = ts.observed_order(errs)
            rows.append({"n": n, "scheme": scheme, "dts": [4 * conv["dt0"], 2 * conv["dt0"],
                                                          conv["dt0"]],
                         "errors": errs, "orders": list(orders)})
    return rows


def cmd_convergence(cfg, grid, out, seed=None, echo=print):
    out = _prepare_out(out)
    rows = convergence_table(cfg, workers=grid.workers)
    checks = []
    expect = {"IMEX1": 1.0, "IMEX2": 2.0}
    with open(out / "convergence.csv", "w", encoding="utf-8") as fh:
        fh.write("n,scheme,dt,error,order\n")
        for row in rows:
            for i, (dt, e) in enumerate(zip(row["dts"], row["errors"])):
                o = row["orders"][i - 1] if i else float("nan")
                fh.write(f"{row['n']},{row['scheme']},{dt!r},{e!r},{o!r}\n")
            echo(f"n={row['n']} {row['scheme']}: errors "
                 + ", ".join(f"{e:.3e}" for e in row["errors"])
                 + "; orders " + ", ".join(f"{o:.3f}" for o in row["orders"]))
            o = row["orders"][-1]
            checks.append(Check(f"observed order {row['scheme']} n={row['n']}",
                                abs(o - expect[row["scheme"]]), 0.2, "<=",
                                "time-accuracy"))
    passed = _report(checks, echo)
    write_json(out / "summary.json", {"command": "convergence", "rows": rows,
                                      "checks": [c.as_dict() for c in checks],
                                      "passed": passed})
    return passed, {"rows": rows}


def threads_from_env(flag=None):
    if flag is not None:
        return max(1, int(flag))
    env = os.environ.get("QTF_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            log.warning("ignoring non-integer QTF_THREADS=%r", env)
    return 1
