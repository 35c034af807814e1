"""Command-line interface.

Exit codes: 0 success, 2 configuration error, 3 when any run in a campaign
ends Trapped (the machine-checkable trap signal); gradcheck exits 1 when the
finite-difference error exceeds its threshold.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import backend, campaigns, dynamics
from .config import (
    ConfigError,
    default_config,
    load_config,
    with_jobs,
    with_seed,
)
from .field import TimeGrid, dump_field
from .optimizer import Outcome

_KIND_BY_COMMAND = {
    "stats": "random_stats",
    "traps": "trap_test",
    "scale": "scaling_sweep",
    "structure": "structure_study",
}


def _add_common(parser, config_required: bool):
    if config_required:
        parser.add_argument("config", help="campaign config file (qlandscape-config v1)")
    else:
        parser.add_argument("config", nargs="?", default=None,
                            help="optional config file (qlandscape-config v1)")
    parser.add_argument("--out", default=None,
                        help="output directory (default: $QLANDSCAPE_OUT or ./qlandscape-out)")
    parser.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE", help="override a config key (repeatable)")
    parser.add_argument("--jobs", type=int, default=None, help="worker process count")
    parser.add_argument("--seed", type=int, default=None, help="master seed override")


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="qlandscape",
        description="Climb state-transfer control landscapes and run the campaign experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for cmd, help_text in [
        ("stats", "transfer-probability statistics of random fields"),
        ("traps", "trap-freedom test: climb every cell x seed"),
        ("scale", "search-effort scaling sweep over N"),
        ("structure", "landscape-structure study (metrics, milestones, spectra)"),
    ]:
        p = sub.add_parser(cmd, help=help_text)
        _add_common(p, config_required=True)
    p = sub.add_parser("single", help="one climb from one seeded start field")
    _add_common(p, config_required=False)
    p.add_argument("--dump-field", default=None, metavar="PATH",
                   help="write the optimized field as two-column text (t, eps)")
    p = sub.add_parser("gradcheck", help="finite-difference check of the flow gradient")
    _add_common(p, config_required=False)
    p.add_argument("--points", type=int, default=20, help="random time-points to probe")
    p.add_argument("--fd-step", type=float, default=1e-5, help="finite-difference step")
    return parser


def _resolve_config(args, kind):
    if args.config is not None:
        cfg = load_config(args.config, overrides=args.overrides, kind=kind)
    else:
        cfg = default_config(kind, overrides=args.overrides)
    if args.seed is not None:
        cfg = with_seed(cfg, args.seed)
    if args.jobs is not None:
        cfg = with_jobs(cfg, args.jobs)
    return cfg


def _out_dir(args) -> str:
    return args.out or os.environ.get("QLANDSCAPE_OUT") or "qlandscape-out"


def _run_campaign_command(args, kind) -> int:
    cfg = _resolve_config(args, kind)
    result = campaigns.run_campaign(cfg)
    written = campaigns.write_outputs(result, _out_dir(args))
    for name in sorted(written):
        print(f"wrote {written[name]}")
    if cfg.kind != "random_stats":
        n = len(result.rows)
        trapped = sum(1 for r in result.rows if r["outcome"] == Outcome.TRAPPED.value)
        converged = sum(1 for r in result.rows if r["outcome"] == Outcome.CONVERGED.value)
        print(f"{n} runs: {converged} converged, {trapped} trapped")
        if trapped:
            return 3
    return 0


def _run_single(args) -> int:
    cfg = _resolve_config(args, "trap_test")
    if len(campaigns.enumerate_cells(cfg)) != 1:
        raise ConfigError("single expects exactly one cell (one n, dipole, strength)")
    from dataclasses import replace

    cfg = replace(cfg, runs_per_cell=1, write_traces=True)
    result = campaigns.run_campaign(cfg, keep_records=True)
    out = _out_dir(args)
    written = campaigns.write_outputs(result, out)
    row = result.rows[0]
    print(
        f"outcome={row['outcome']} initial_p={row['initial_p']:.3e} "
        f"final_p={row['final_p']:.6f} effort={row['effort']} "
        f"refinements={row['refinements']}"
    )
    for name in sorted(written):
        print(f"wrote {written[name]}")
    if args.dump_field:
        record = result.records[row["run_id"]]
        dump_field(record.final_field, args.dump_field)
        print(f"wrote {args.dump_field}")
    return 3 if row["outcome"] == Outcome.TRAPPED.value else 0


def _run_gradcheck(args) -> int:
    cfg = _resolve_config(args, "trap_test")
    cells = campaigns.enumerate_cells(cfg)
    if len(cells) != 1:
        raise ConfigError("gradcheck expects exactly one cell")
    cell = cells[0]
    from .config import make_dipole_spec
    from .field import FieldSpec, generate_initial_field
    from .qsys import build_system

    system = build_system(
        cell.n_levels, cfg.h0_kind, make_dipole_spec(cell.dipole, cfg.master_seed),
        (cell.target_i, cell.target_f),
        gamma=cfg.gamma, omega=cfg.omega, dissoc=cfg.dissoc,
    )
    grid = TimeGrid(cfg.horizon, cell.n_t)
    fld = generate_initial_field(
        FieldSpec(cell.strength, cfg.k_components, cfg.envelope_beta,
                  cell.omega_max, cfg.master_seed + 1),
        grid,
    )
    h0, mu, eps, dt = system.energies, system.dipole, fld.samples, grid.dt
    i0, f0 = system.i_index, system.f_index
    _, _, grad = backend.grad_p(h0, mu, eps, dt, i0, f0)
    rng = np.random.default_rng(cfg.master_seed + 2)
    points = rng.choice(eps.size, size=min(args.points, eps.size), replace=False)
    h = args.fd_step
    worst = 0.0
    for j in points:
        ep, em = eps.copy(), eps.copy()
        ep[j] += h
        em[j] -= h
        pp, _ = backend.evolve_p(h0, mu, ep, dt, i0, f0)
        pm, _ = backend.evolve_p(h0, mu, em, dt, i0, f0)
        fd = (pp - pm) / (2.0 * h * dt)
        err = abs(fd - grad[j]) / max(abs(fd), 1e-10)
        worst = max(worst, err)
    print(f"max relative gradient error over {len(points)} points: {worst:.3e}")
    return 0 if worst < 1e-4 else 1


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command in _KIND_BY_COMMAND:
            return _run_campaign_command(args, _KIND_BY_COMMAND[args.command])
        if args.command == "single":
            return _run_single(args)
        return _run_gradcheck(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entry() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    raise SystemExit(main())
