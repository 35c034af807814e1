"""Campaign orchestration: seeded cells, parallel runs, aggregation, CSV output.

Each run derives its RNG seeds from (master seed, cell index, replicate), so a
campaign's results are independent of worker count and execution order; rows
are merged in run order before writing.  Output files are written atomically
(temp file + rename) with a versioned comment line above the CSV header.
"""

from __future__ import annotations

import math
import os
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field as dataclass_field

import numpy as np

from . import backend, dynamics
from .config import CampaignConfig, dipole_label, make_dipole_spec
from .field import ControlField, FieldSpec, TimeGrid, generate_initial_field
from .metrics import (
    curvature,
    hessian_spectrum,
    hessian_trace,
    magnitude_gap,
    ratio_metric,
    slope_metric,
    spectrum_summary,
)
from .optimizer import ClimbRecord, Outcome, climb, descend_to_floor, effort_from_record
from .qsys import build_system

__all__ = [
    "Cell",
    "CampaignResult",
    "aggregate",
    "enumerate_cells",
    "run_campaign",
    "run_random_stats",
    "run_scaling_sweep",
    "run_structure_study",
    "run_trap_test",
    "write_outputs",
]

RUNS_SCHEMA_VERSION = "qlandscape-runs v1"
HISTOGRAM_BINS = np.logspace(-12.0, 0.0, 65)

_MAX_FIELD_ATTEMPTS = 5000

RUN_COLUMNS = [
    "run_id", "kind", "h0", "n_levels", "dipole", "target_i", "target_f",
    "strength", "k_components", "omega_rule", "omega_max", "n_t", "horizon",
    "master_seed", "system_seed", "field_seed", "field_attempts",
    "initial_p", "outcome", "effort", "iterations", "refinements", "final_p",
    "r_eps", "path_len", "euclid_dist", "s0", "smax",
    "trace_bottom", "trace_top", "curvature_bottom", "curvature_top",
    "n_pos_bottom", "n_neg_top", "top_gap", "bottom_floor_p",
    "monotone_ok", "unitarity_defect", "row_sum_dev",
    "trace_file", "spectrum_file", "wall_time",
]


@dataclass(frozen=True)
class Cell:
    index: int
    n_levels: int
    dipole: tuple
    strength: float
    target_i: int
    target_f: int
    omega_max: float
    n_t: int

    @property
    def label(self) -> str:
        return dipole_label(self.dipole)


def _ladder_energy(config: CampaignConfig, level: int) -> float:
    """Level energy from the H0 formula (1-based label), independent of N."""
    if config.h0_kind == "rotor":
        return config.gamma * (level - 1) * level
    x = level - 0.5
    return config.omega * x - (config.omega**2 / config.dissoc) * x * x


def _cell_omega(config: CampaignConfig, n: int, target_f: int) -> float:
    e1 = _ladder_energy(config, 1)
    if config.omega_rule == "omega_f":
        return _ladder_energy(config, target_f) - e1
    if config.omega_rule == "omega_20":
        return _ladder_energy(config, 20) - e1
    return 0.5 * (_ladder_energy(config, n) - e1)


def _cell_n_t(config: CampaignConfig, n: int) -> int:
    if config.n_t:
        return config.n_t
    if config.one_to_n and n >= 30:
        return 4096
    return 2048


def enumerate_cells(config: CampaignConfig) -> list:
    cells = []
    for n in config.n_values:
        for dip in config.dipoles:
            for strength in config.strengths:
                f = n if config.one_to_n else config.target_f
                cells.append(
                    Cell(
                        index=len(cells),
                        n_levels=n,
                        dipole=dip,
                        strength=strength,
                        target_i=config.target_i,
                        target_f=f,
                        omega_max=_cell_omega(config, n, f),
                        n_t=_cell_n_t(config, n),
                    )
                )
    return cells


def _derive_seed(master: int, cell_index: int, rep: int, stream: int, extra: int = 0) -> int:
    ss = np.random.SeedSequence((master, cell_index, rep, stream, extra))
    return int(ss.generate_state(1, np.uint64)[0])


def _draw_start_field(config: CampaignConfig, cell: Cell, rep: int, system, grid):
    """Generate initial fields until one passes the discard rule."""
    threshold = config.settings.discard_above_p
    for attempt in range(_MAX_FIELD_ATTEMPTS):
        fseed = _derive_seed(config.master_seed, cell.index, rep, 1, attempt)
        spec = FieldSpec(
            strength=cell.strength,
            n_components=config.k_components,
            envelope_beta=config.envelope_beta,
            omega_max=cell.omega_max,
            seed=fseed,
        )
        fld = generate_initial_field(spec, grid)
        p0, _ = backend.evolve_p(
            system.energies, system.dipole, fld.samples, grid.dt,
            system.i_index, system.f_index,
        )
        if p0 < threshold:
            return fld, fseed, p0, attempt + 1
    raise RuntimeError(
        f"no start field below P={threshold} in {_MAX_FIELD_ATTEMPTS} draws "
        f"(cell {cell.index}, replicate {rep})"
    )


def _monotone_ok(record: ClimbRecord) -> bool:
    """Accepted-iterate P non-decreasing within each grid segment."""
    bounds = [0, *record.refine_points, len(record.iterates)]
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        ps = [it.p for it in record.iterates[lo:hi]]
        if any(b < a - 1e-12 for a, b in zip(ps[:-1], ps[1:])):
            return False
    return True


def _structure_extras(system, record: ClimbRecord, row: dict) -> None:
    """Trace and curvature at the near-bottom and near-top climb points."""
    if record.first_counted_field is not None:
        cache = dynamics.propagate(system, record.first_counted_field)
        row["trace_bottom"] = hessian_trace(cache)
        grad = dynamics.gradient(cache)
        if np.any(grad):
            row["curvature_bottom"] = curvature(cache, grad)
    top_cache = dynamics.propagate(system, record.final_field)
    row["trace_top"] = hessian_trace(top_cache)
    if record.near_top_field is not None:
        cache = dynamics.propagate(system, record.near_top_field)
        grad = dynamics.gradient(cache)
        if np.any(grad):
            row["curvature_top"] = curvature(cache, grad)


def _execute_run(args):
    """One climb: returns (row, trace_rows, spectrum_rows, record-or-None)."""
    config, cell, rep, keep_record = args
    t_start = time.perf_counter()
    sys_seed = _derive_seed(config.master_seed, cell.index, rep, 0)
    system = build_system(
        cell.n_levels, config.h0_kind,
        make_dipole_spec(cell.dipole, sys_seed),
        (cell.target_i, cell.target_f),
        gamma=config.gamma, omega=config.omega, dissoc=config.dissoc,
    )
    grid = TimeGrid(config.horizon, cell.n_t)
    fld, fseed, p_raw, attempts = _draw_start_field(config, cell, rep, system, grid)

    row = {col: None for col in RUN_COLUMNS}
    row.update(
        run_id=f"{cell.index:04d}-{rep:03d}",
        kind=config.kind, h0=config.h0_kind, n_levels=cell.n_levels,
        dipole=cell.label, target_i=cell.target_i, target_f=cell.target_f,
        strength=cell.strength, k_components=config.k_components,
        omega_rule=config.omega_rule, omega_max=cell.omega_max,
        n_t=cell.n_t, horizon=config.horizon,
        master_seed=config.master_seed, system_seed=sys_seed, field_seed=fseed,
        field_attempts=attempts,
    )

    spectrum_rows = []
    if config.spectra:
        fld = descend_to_floor(system, fld, floor_p=config.bottom_p)
        cache_b = dynamics.propagate(system, fld)
        p_bottom = dynamics.transition_probability(cache_b)
        ev_b = hessian_spectrum(cache_b, stride=config.spectrum_stride)
        summ_b = spectrum_summary(ev_b, cell.n_levels, "bottom")
        row["n_pos_bottom"] = summ_b.n_positive
        row["bottom_floor_p"] = p_bottom
        spectrum_rows += [("bottom", i, float(v)) for i, v in enumerate(ev_b)]

    record = climb(system, fld, config.settings)
    row["initial_p"] = record.initial_p
    row["outcome"] = record.outcome.value
    row["effort"] = record.effort
    row["iterations"] = len(record.iterates) - 1
    row["refinements"] = record.refinements_used
    row["final_p"] = record.final_p
    if len(record.iterates) >= 2:
        ratio = ratio_metric(record)
        if not ratio.degenerate:
            row["r_eps"] = ratio.r_eps
        row["path_len"] = ratio.path_len
        row["euclid_dist"] = ratio.euclid_dist
    counted = [it for it in record.iterates if it.p >= config.settings.count_from_p]
    if counted:
        row["s0"] = counted[0].slope
    row["smax"] = max(it.slope for it in record.iterates)
    row["monotone_ok"] = int(_monotone_ok(record))

    final_cache = dynamics.propagate(system, record.final_field)
    row["unitarity_defect"] = final_cache.unitarity_defect()
    rows_p = np.abs(final_cache.u_final) ** 2
    row["row_sum_dev"] = float(np.max(np.abs(rows_p.sum(axis=0) - 1.0)))

    if config.kind == "structure_study":
        _structure_extras(system, record, row)
        if config.spectra:
            ev_t = hessian_spectrum(final_cache, stride=config.spectrum_stride)
            summ_t = spectrum_summary(ev_t, cell.n_levels, "top")
            row["n_neg_top"] = summ_t.n_negative
            row["top_gap"] = magnitude_gap(ev_t, 2 * cell.n_levels - 2)
            spectrum_rows += [("top", i, float(v)) for i, v in enumerate(ev_t)]

    trace_rows = []
    if config.write_traces:
        trace_rows = [
            (i, it.s, it.p, it.slope, it.ds)
            for i, it in enumerate(record.iterates)
        ]
    milestone_rows = [
        (m.milestone, m.s, m.p, m.slope, m.path_len, m.euclid,
         (m.path_len / m.euclid) if m.euclid > 0 else float("nan"))
        for m in record.milestones
    ]
    row["wall_time"] = time.perf_counter() - t_start
    return row, trace_rows, spectrum_rows, milestone_rows, (record if keep_record else None)


def _execute_stats_cell(args):
    """Transfer probabilities of freshly drawn fields; no climbing."""
    config, cell = args
    sys_seed_cache = {}
    ps = np.empty(config.runs_per_cell)
    for rep in range(config.runs_per_cell):
        sys_seed = _derive_seed(config.master_seed, cell.index, rep, 0)
        system = sys_seed_cache.get(sys_seed)
        if system is None:
            system = build_system(
                cell.n_levels, config.h0_kind,
                make_dipole_spec(cell.dipole, sys_seed),
                (cell.target_i, cell.target_f),
                gamma=config.gamma, omega=config.omega, dissoc=config.dissoc,
            )
            sys_seed_cache[sys_seed] = system
        grid = TimeGrid(config.horizon, cell.n_t)
        fseed = _derive_seed(config.master_seed, cell.index, rep, 1)
        spec = FieldSpec(
            strength=cell.strength, n_components=config.k_components,
            envelope_beta=config.envelope_beta, omega_max=cell.omega_max,
            seed=fseed,
        )
        fld = generate_initial_field(spec, grid)
        ps[rep], _ = backend.evolve_p(
            system.energies, system.dipole, fld.samples, grid.dt,
            system.i_index, system.f_index,
        )
    counts, _ = np.histogram(np.clip(ps, 1e-12, 1.0), HISTOGRAM_BINS)
    return ps, counts


@dataclass
class CampaignResult:
    config: CampaignConfig
    cells: list
    rows: list
    trace_rows: dict = dataclass_field(default_factory=dict)
    spectrum_rows: dict = dataclass_field(default_factory=dict)
    milestone_rows: dict = dataclass_field(default_factory=dict)
    records: dict = dataclass_field(default_factory=dict)
    histograms: dict = dataclass_field(default_factory=dict)
    stats: list = dataclass_field(default_factory=list)

    @property
    def any_trapped(self) -> bool:
        return any(r["outcome"] == Outcome.TRAPPED.value for r in self.rows)

    def cell_rows(self, **match) -> list:
        out = []
        for row in self.rows:
            if all(row[k] == v for k, v in match.items()):
                out.append(row)
        return out


def _pool_map(fn, items, jobs):
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items, chunksize=1))


def run_campaign(config: CampaignConfig, keep_records: bool = False) -> CampaignResult:
    """Execute all cells x replicates; rows come back in deterministic order."""
    cells = enumerate_cells(config)
    result = CampaignResult(config=config, cells=cells, rows=[])
    if config.kind == "random_stats":
        outs = _pool_map(_execute_stats_cell, [(config, c) for c in cells], config.jobs)
        for cell, (ps, counts) in zip(cells, outs):
            result.histograms[cell.index] = (ps, counts)
            result.stats.append(
                {
                    "cell": cell.index, "h0": config.h0_kind,
                    "n_levels": cell.n_levels, "dipole": cell.label,
                    "strength": cell.strength,
                    "target_i": cell.target_i, "target_f": cell.target_f,
                    "count": len(ps),
                    "mean_p": float(np.mean(ps)),
                    "stderr_p": float(np.std(ps, ddof=1) / math.sqrt(len(ps))) if len(ps) > 1 else 0.0,
                    "min_p": float(np.min(ps)), "max_p": float(np.max(ps)),
                }
            )
        return result

    tasks = [(config, cell, rep, keep_records) for cell in cells for rep in range(config.runs_per_cell)]
    outs = _pool_map(_execute_run, tasks, config.jobs)
    for (cfg, cell, rep, _), (row, trace, spectrum, milestones, record) in zip(tasks, outs):
        result.rows.append(row)
        if trace:
            result.trace_rows[row["run_id"]] = trace
        if spectrum:
            result.spectrum_rows[row["run_id"]] = spectrum
        if milestones:
            result.milestone_rows[row["run_id"]] = milestones
        if record is not None:
            result.records[row["run_id"]] = record
    return result


def run_random_stats(config: CampaignConfig) -> CampaignResult:
    if config.kind != "random_stats":
        raise ValueError(f"expected a random_stats config, got {config.kind}")
    return run_campaign(config)


def run_trap_test(config: CampaignConfig, keep_records: bool = False) -> CampaignResult:
    if config.kind != "trap_test":
        raise ValueError(f"expected a trap_test config, got {config.kind}")
    return run_campaign(config, keep_records=keep_records)


def run_scaling_sweep(config: CampaignConfig, keep_records: bool = False) -> CampaignResult:
    if config.kind != "scaling_sweep":
        raise ValueError(f"expected a scaling_sweep config, got {config.kind}")
    return run_campaign(config, keep_records=keep_records)


def run_structure_study(config: CampaignConfig, keep_records: bool = False) -> CampaignResult:
    if config.kind != "structure_study":
        raise ValueError(f"expected a structure_study config, got {config.kind}")
    return run_campaign(config, keep_records=keep_records)


def aggregate(rows: list, group_by: tuple, values: tuple) -> list:
    """Mean, standard error, min, and max of the values per group key.

    Rows whose value is None are skipped per value column; a group with no
    usable rows at all raises.
    """
    if not rows:
        raise ValueError("cannot aggregate an empty row set")
    groups: dict = {}
    for row in rows:
        key = tuple(row[k] for k in group_by)
        groups.setdefault(key, []).append(row)
    out = []
    for key in sorted(groups, key=lambda k: tuple(str(x) for x in k)):
        bucket = groups[key]
        summary = dict(zip(group_by, key))
        summary["count"] = len(bucket)
        for col in values:
            vals = np.array([r[col] for r in bucket if r[col] is not None], dtype=float)
            if vals.size == 0:
                summary[f"mean_{col}"] = None
                summary[f"stderr_{col}"] = None
                summary[f"min_{col}"] = None
                summary[f"max_{col}"] = None
                continue
            summary[f"mean_{col}"] = float(vals.mean())
            summary[f"stderr_{col}"] = (
                float(vals.std(ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else 0.0
            )
            summary[f"min_{col}"] = float(vals.min())
            summary[f"max_{col}"] = float(vals.max())
        out.append(summary)
    return out


def _fit_rows(result: CampaignResult) -> list:
    """Least-squares slope of log(mean effort) vs N per (dipole, strength) series."""
    rows = [r for r in result.rows if r["effort"] is not None]
    cell_means = aggregate(rows, ("dipole", "strength", "n_levels"), ("effort",))
    series: dict = {}
    for item in cell_means:
        series.setdefault((item["dipole"], item["strength"]), []).append(
            (item["n_levels"], item["mean_effort"])
        )
    fits = []
    for (dip, strength), points in sorted(series.items(), key=lambda kv: str(kv[0])):
        points.sort()
        ns = np.array([p[0] for p in points], dtype=float)
        means = np.array([p[1] for p in points], dtype=float)
        if len(points) < 2 or np.any(means <= 0):
            continue
        slope, intercept = np.polyfit(ns, np.log(means), 1)
        fits.append(
            {
                "h0": result.config.h0_kind, "dipole": dip, "strength": strength,
                "n_points": len(points), "slope": float(slope),
                "intercept": float(intercept),
            }
        )
    return fits


def _format_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write_csv(path, comment: str, header: list, rows) -> None:
    """Atomic CSV write: temp file in the target directory, then rename."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(f"# {comment}\n")
            fh.write(",".join(header) + "\n")
            for row in rows:
                fh.write(",".join(_format_value(v) for v in row) + "\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_outputs(result: CampaignResult, out_dir) -> dict:
    """Write runs/summary (and histogram, trace, spectrum, fit) CSV files."""
    os.makedirs(out_dir, exist_ok=True)
    written = {}
    config = result.config

    if config.kind == "random_stats":
        hist_header = [
            "cell", "h0", "n_levels", "dipole", "strength", "target_i",
            "target_f", "bin_lo", "bin_hi", "count",
        ]
        hist_rows = []
        for cell in result.cells:
            _, counts = result.histograms[cell.index]
            for b, count in enumerate(counts):
                hist_rows.append(
                    (cell.index, config.h0_kind, cell.n_levels, cell.label,
                     cell.strength, cell.target_i, cell.target_f,
                     float(HISTOGRAM_BINS[b]), float(HISTOGRAM_BINS[b + 1]), int(count))
                )
        path = os.path.join(out_dir, "histogram.csv")
        _write_csv(path, "qlandscape-histogram v1", hist_header, hist_rows)
        written["histogram"] = path
        sum_header = list(result.stats[0].keys())
        path = os.path.join(out_dir, "summary.csv")
        _write_csv(path, "qlandscape-summary v1", sum_header,
                   [[s[k] for k in sum_header] for s in result.stats])
        written["summary"] = path
        return written

    rows = sorted(result.rows, key=lambda r: r["run_id"])
    path = os.path.join(out_dir, "runs.csv")
    _write_csv(path, RUNS_SCHEMA_VERSION, RUN_COLUMNS,
               [[r[c] for c in RUN_COLUMNS] for r in rows])
    written["runs"] = path

    summary = aggregate(
        result.rows,
        ("h0", "dipole", "strength", "n_levels", "target_f"),
        ("effort", "r_eps", "s0", "smax", "initial_p", "final_p", "refinements"),
    )
    for item in summary:
        bucket = [
            r for r in result.rows
            if (r["h0"], r["dipole"], r["strength"], r["n_levels"], r["target_f"])
            == (item["h0"], item["dipole"], item["strength"], item["n_levels"], item["target_f"])
        ]
        item["n_converged"] = sum(1 for r in bucket if r["outcome"] == "Converged")
        item["n_trapped"] = sum(1 for r in bucket if r["outcome"] == "Trapped")
        item["n_cap"] = sum(1 for r in bucket if r["outcome"] == "IterationCapHit")
    sum_header = list(summary[0].keys())
    path = os.path.join(out_dir, "summary.csv")
    _write_csv(path, "qlandscape-summary v1", sum_header,
               [[s[k] for k in sum_header] for s in summary])
    written["summary"] = path

    if config.kind == "scaling_sweep":
        fits = _fit_rows(result)
        if fits:
            header = list(fits[0].keys())
            path = os.path.join(out_dir, "fits.csv")
            _write_csv(path, "qlandscape-fits v1", header,
                       [[f[k] for k in header] for f in fits])
            written["fits"] = path

    for run_id, trace in result.trace_rows.items():
        path = os.path.join(out_dir, f"trace_{run_id}.csv")
        _write_csv(path, "qlandscape-trace v1", ["iter", "s", "p", "slope", "ds"], trace)
        written[f"trace_{run_id}"] = path
    for run_id, spectrum in result.spectrum_rows.items():
        path = os.path.join(out_dir, f"spectrum_{run_id}.csv")
        _write_csv(path, "qlandscape-spectrum v1", ["where", "index", "eigenvalue"], spectrum)
        written[f"spectrum_{run_id}"] = path
    for run_id, milestones in result.milestone_rows.items():
        path = os.path.join(out_dir, f"milestones_{run_id}.csv")
        _write_csv(
            path, "qlandscape-milestones v1",
            ["milestone", "s", "p", "slope", "path_len", "euclid", "r_eps"],
            milestones,
        )
        written[f"milestones_{run_id}"] = path
    return written
