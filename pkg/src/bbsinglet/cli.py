"""Command-line entry point: ``bbsinglet {validate,optimize,simulate,hbac,fit}``.

Data files are deterministic for a given config and seed; timestamps go only
to ``run.log``.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, bundled_names, json_schema, load_config
from .engine import THREADS_ENV, BBSequence, CommutationError, build_problem
from .ga import optimize
from .relaxation import EngineGain, FitError, affine_gain, fit_monoexponential, hbac_simulate
from .spins import validate_z_commutation
from .symmetry import reduced_blocks
from .tables import TableError, read_pulse_table, read_xy, write_history, write_pulse_table, write_trajectory, write_xy

log = logging.getLogger("bbsinglet")

DIM_LIMIT = 4096
BYTES_PER_COMPLEX = 16


class CLIError(RuntimeError):
    def __init__(self, msg, code=2):
        super().__init__(msg)
        self.code = code


def memory_estimate(cfg: RunConfig) -> dict[str, float]:
    """Bytes for the dense propagator cache and for the symmetry-reduced working set."""
    n = cfg.n_spins
    k = len(cfg.spin_system.channels)
    d = 2**n
    dense = (2**k + 2) * d * d * BYTES_PER_COMPLEX
    out = {"dim": d, "dense_bytes": float(dense)}
    if n <= 24:
        sysm = cfg.build_system(max_spins=None)
        blocks = reduced_blocks(sysm)
        dims = [int(np.prod([s.dim for s in slots])) for _, slots in blocks]
        pop = cfg.ga.population_size
        out["reduced_bytes"] = float(sum((2**k + 2) * b * b + pop * b * b for b in dims) * BYTES_PER_COMPLEX)
        out["blocks"] = dims
    return out


def _fmt_bytes(b: float) -> str:
    for unit in ("B", "KiB", "MiB", "GiB", "TiB"):
        if b < 1024:
            return f"{b:.1f} {unit}"
        b /= 1024
    return f"{b:.1f} PiB"


def _load(path: str) -> RunConfig:
    try:
        return load_config(path)
    except ConfigError as exc:
        raise CLIError(str(exc)) from exc


def _system(cfg: RunConfig, force: bool):
    d = 2**cfg.n_spins
    if d > DIM_LIMIT and not force:
        raise CLIError(
            f"Hilbert dimension {d} exceeds {DIM_LIMIT}; reduce the spin count or pass --force "
            "(the optimizer works on symmetry-reduced blocks, see 'validate' for the estimate)"
        )
    return cfg.build_system(max_spins=None if force else 12)


def _out_dir(cfg: RunConfig, out: str | None) -> Path:
    p = Path(out or cfg.output.directory)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _attach_log(out: Path) -> None:
    fh = logging.FileHandler(out / "run.log")
    fh.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(message)s"))
    log.addHandler(fh)


def _problem(cfg: RunConfig, sysm):
    try:
        return build_problem(sysm, cfg.bb.dt_s, cfg.polarizations(), reduce=True)
    except CommutationError as exc:
        raise CLIError(str(exc), code=1) from exc


def _png(cfg: RunConfig) -> bool:
    return "png" in cfg.output.formats


# --- commands ------------------------------------------------------------


def cmd_validate(args) -> int:
    cfg = _load(args.config)
    print("schema: PASS")
    n = cfg.n_spins
    print(f"spins: {n}  Hilbert dimension: {2 ** n}")
    ok = True
    mem = memory_estimate(cfg)
    print(f"memory: dense cache {_fmt_bytes(mem['dense_bytes'])}", end="")
    if "reduced_bytes" in mem:
        print(f", symmetry-reduced {_fmt_bytes(mem['reduced_bytes'])} (block dims {mem['blocks']})")
    else:
        print()
    if 2**n > DIM_LIMIT and not args.force:
        print(f"dimension guard: FAIL ({2 ** n} > {DIM_LIMIT}; use --force)")
        ok = False
    try:
        sysm = cfg.build_system(max_spins=None)
    except ValueError as exc:
        print(f"spin system: FAIL ({exc})")
        return 1
    report = validate_z_commutation(sysm)
    print(report)
    if not report.passed:
        for i, j in report.offending:
            a, b = sysm.sites[i], sysm.sites[j]
            print(f"  -> coupling {a.label or i}-{b.label or j} ({a.species}/{b.species}) is isotropic")
    ok = ok and report.passed
    print(f"result: {'PASS' if ok else 'FAIL'}")
    return 0 if ok else 1


def cmd_optimize(args) -> int:
    cfg = _load(args.config)
    sysm = _system(cfg, args.force)
    out = _out_dir(cfg, args.out)
    _attach_log(out)
    ga_cfg = cfg.ga.to_ga_config(seed=args.seed)
    problem = _problem(cfg, sysm)
    template = BBSequence.silent(cfg.bb.n_segments, cfg.bb.dt_s, problem.channels)
    log.info("optimizing %d spins, %d segments, seed %d", sysm.n_spins, template.n_segments, ga_cfg.master_seed)

    def progress(rec):
        log.info("generation %d best Q %.6f mean Q %.6f", rec.generation, rec.best_Q, rec.mean_Q)

    res = optimize(problem, ga_cfg, template, callback=progress)
    traj = problem.trajectory(res.best, stride=1)
    write_pulse_table(out / "pulse.csv", res.best, sysm)
    write_history(out / "history.jsonl", res.history)
    write_trajectory(out / "trajectory.csv", traj)
    summary = {
        "seed": ga_cfg.master_seed,
        "n_spins": sysm.n_spins,
        "n_segments": template.n_segments,
        "dt_s": template.dt,
        "generations_run": res.history[-1].generation,
        "best_Q": res.best_q,
        "best_enhancement": res.best_enhancement,
        "ceiling_Q": res.ceiling_q,
        "ceiling_enhancement": res.ceiling_enhancement,
        "symmetric_ceiling_Q": problem.ceiling_q(restricted=True),
        "symmetric_ceiling_enhancement": problem.ceiling_enhancement(restricted=True),
        "best_chromosome_id": res.best.id,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    if _png(cfg):
        from .plotting import plot_history, plot_pulse, plot_trajectory

        plot_trajectory(traj, out / "trajectory.png")
        plot_pulse(res.best, sysm, out / "pulse.png")
        plot_history(res.history, out / "history.png", res.ceiling_q)
    print(f"best Q {res.best_q:.6f}  (ceiling {res.ceiling_q:.6f}, symmetric ceiling {summary['symmetric_ceiling_Q']:.6f})")
    print(f"enhancement {res.best_enhancement:.4f}  (ceiling {res.ceiling_enhancement:.4f})")
    print(f"outputs written to {out}")
    return 0


def cmd_simulate(args) -> int:
    cfg = _load(args.config)
    sysm = _system(cfg, args.force)
    try:
        seq = read_pulse_table(args.pulse, sysm, dt=cfg.bb.dt_s)
    except (OSError, TableError) as exc:
        raise CLIError(str(exc)) from exc
    problem = _problem(cfg, sysm)
    traj = problem.trajectory(seq, stride=args.stride)
    out = _out_dir(cfg, args.out)
    write_trajectory(out / "trajectory.csv", traj)
    if _png(cfg):
        from .plotting import plot_trajectory

        plot_trajectory(traj, out / "trajectory.png")
    print(f"final Q {traj.q_values[-1]:.6f}  enhancement {traj.enhancement[-1]:.4f}")
    print(f"trajectory written to {out / 'trajectory.csv'}")
    return 0


def cmd_hbac(args) -> int:
    cfg = _load(args.config)
    if cfg.relaxation is None:
        raise CLIError("config has no 'relaxation' section")
    rel = cfg.relaxation
    sysm = _system(cfg, args.force)
    out = _out_dir(cfg, args.out)
    pol = cfg.polarizations()
    pair_species = sysm.sites[sysm.singlet_pair[0]].species
    if rel.gain is not None:
        gain = affine_gain(rel.gain.alpha, rel.gain.beta)
        source = "analytic gain from config"
    else:
        problem = _problem(cfg, sysm)
        if args.pulse:
            try:
                seq = read_pulse_table(args.pulse, sysm, dt=cfg.bb.dt_s)
            except (OSError, TableError) as exc:
                raise CLIError(str(exc)) from exc
            source = f"BB pulse {args.pulse}"
        else:
            _attach_log(out)
            template = BBSequence.silent(cfg.bb.n_segments, cfg.bb.dt_s, problem.channels)
            seq = optimize(problem, cfg.ga.to_ga_config(seed=args.seed), template).best
            source = "BB pulse optimized from config"
        gain = EngineGain(problem, seq)
    states = hbac_simulate(rel.to_params(), gain, args.iterations, pol, pair_species, rel.ancilla_residual)
    ancillas = sorted(states[0].eps_ancilla)
    with open(out / "hbac.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["m", "eps_singlet"] + [f"eps_{k}" for k in ancillas])
        for s in states:
            w.writerow([s.iteration, repr(s.eps_singlet)] + [repr(s.eps_ancilla[k]) for k in ancillas])
    if _png(cfg):
        from .plotting import plot_hbac

        plot_hbac(states, out / "hbac.png")
    print(f"# {source}")
    print("m,eps_singlet," + ",".join(f"eps_{k}" for k in ancillas))
    for s in states:
        print(f"{s.iteration},{s.eps_singlet:.6f}," + ",".join(f"{s.eps_ancilla[k]:.6f}" for k in ancillas))
    return 0


def cmd_fit(args) -> int:
    try:
        t, y = read_xy(args.data)
    except (OSError, TableError) as exc:
        raise CLIError(str(exc)) from exc
    try:
        fit = fit_monoexponential(t, y, model=args.model)
    except FitError as exc:
        raise CLIError(f"fit failed: {exc}", code=1) from exc
    print(f"model: {args.model}")
    print(f"amplitude: {fit.amplitude:.6g}")
    print(f"time_constant_s: {fit.time_constant:.6g}")
    print(f"rms_residual: {fit.residual:.6g}")
    out = Path(args.out) if args.out else Path(args.data).with_suffix("")
    out.mkdir(parents=True, exist_ok=True)
    tt = np.linspace(t.min(), t.max(), 200)
    write_xy(out / "fit.csv", tt, fit.curve(tt), header=("time_s", "fitted"))
    if args.plot:
        from .plotting import plot_fit

        plot_fit(t, y, fit, out / "fit.png")
    return 0


def cmd_schema(args) -> int:
    print(json_schema())
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="bbsinglet",
        description="Bang-bang pulse design for singlet-order enhancement.",
        epilog=f"Configs may be file paths or bundled:<name> ({', '.join(bundled_names())}). "
        f"Set {THREADS_ENV} to evaluate fitness in parallel threads.",
    )
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed=False, out=True):
        sp.add_argument("config")
        if seed:
            sp.add_argument("--seed", type=int, default=None, help="override ga.master_seed")
        if out:
            sp.add_argument("--out", default=None, help="output directory (default: output.directory)")
        sp.add_argument("--force", action="store_true", help=f"allow Hilbert dimensions above {DIM_LIMIT}")

    sp = sub.add_parser("validate", help="schema, dimension and z-commutation checks")
    common(sp, out=False)
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("optimize", help="run the genetic algorithm and export the best pulse")
    common(sp, seed=True)
    sp.set_defaults(func=cmd_optimize)

    sp = sub.add_parser("simulate", help="propagate a pulse table and write the trajectory")
    common(sp)
    sp.add_argument("pulse", help="pulse table (CSV)")
    sp.add_argument("--stride", type=int, default=1)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("hbac", help="iterate AC/HBAC with phenomenological relaxation")
    common(sp, seed=True)
    sp.add_argument("--iterations", "-m", type=int, default=3)
    sp.add_argument("--pulse", default=None, help="pulse table for the transfer gain")
    sp.set_defaults(func=cmd_hbac)

    sp = sub.add_parser("fit", help="mono-exponential fit of (time_s, value) data")
    sp.add_argument("data")
    sp.add_argument("--model", choices=["decay", "inversion"], default="decay")
    sp.add_argument("--out", default=None)
    sp.add_argument("--plot", action="store_true", help="also write fit.png")
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("schema", help="print the config JSON schema")
    sp.set_defaults(func=cmd_schema)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    log.setLevel(logging.INFO)
    log.propagate = False
    if args.verbose:
        sh = logging.StreamHandler(sys.stderr)
        sh.setFormatter(logging.Formatter("%(message)s"))
        log.addHandler(sh)
    if getattr(args, "stride", 1) < 1:
        parser.error("--stride must be >= 1")
    if getattr(args, "iterations", 0) < 0:
        parser.error("--iterations must be >= 0")
    try:
        return args.func(args)
    except CLIError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    finally:
        for h in list(log.handlers):
            log.removeHandler(h)
            h.close()


if __name__ == "__main__":
    sys.exit(main())
