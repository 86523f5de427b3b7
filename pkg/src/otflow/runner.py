"""Experiment execution and on-disk artifacts.

All files go through an atomic temp+rename write, floats are formatted with
shortest round-trip repr, and every random draw is keyed off explicit integer
seeds, so identical configs produce byte-identical outputs regardless of
timing or worker count.

Seed discipline: the editor noise stream uses the experiment seed directly;
auxiliary draws use fixed offsets (seed, 1) for input sampling and (seed, 2)
for verification states; sweep cell c replicate r derives its seed from
(base seed, c, r).  Parallel and serial sweeps therefore agree bit-exactly.
"""

import csv
import io
import itertools
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .config import ConfigError, derive_config
from .core import integrate
from .editors import (FlowEditConfig, InversionEditConfig, RngSeed,
                      transport_enhanced_flowedit, transport_guided_inversion_edit)
from .fields import make_velocity
from .metrics import (VerifySetup, make_enhanced, verify_convergence_bound,
                      verify_discretization_bound, verify_edit_control_bound,
                      w2_dirac_to_gaussian, w2_dirac_to_points, w2_empirical_exact,
                      w2_gaussian)
from .svgplot import render_metric_chart, render_point_cloud, render_trajectories

_METRIC_COLUMNS = ("reconstruction_l2", "displacement_l2", "transport_work", "w2_to_target")


@dataclass
class RunArtifacts:
    files: list
    metrics: dict
    reports: list


@dataclass
class SweepOutcome:
    results_path: str
    n_rows: int
    n_failed: int


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return str(float(x))


def atomic_write_text(path, text):
    """Write via temp file + rename so readers never see a truncated file."""
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)
    return path


def _rng(*key):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(list(key))))


def derive_seed(base_seed, cell_index, replicate):
    """64-bit seed for one sweep cell, independent of execution order."""
    ss = np.random.SeedSequence([int(base_seed), int(cell_index), int(replicate)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def trajectory_csv(traj):
    """t, z_0..z_{d-1}, v_0..v_{d-1}, transport_norm, weight; one row per grid point."""
    d = traj.dim
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["t"] + [f"z_{i}" for i in range(d)] + [f"v_{i}" for i in range(d)]
                    + ["transport_norm", "weight"])
    for k in range(traj.times.shape[0]):
        row = [_fmt(traj.times[k])]
        row += [_fmt(v) for v in traj.states[k]]
        row += [_fmt(v) for v in traj.velocities[k]]
        row += [_fmt(traj.transport_norms[k]), _fmt(traj.weights[k])]
        writer.writerow(row)
    return buf.getvalue()


def points_csv(points):
    """Headerless point rows, loadable back as a dataset csv."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    for row in np.asarray(points, dtype=float):
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _draw_from_dataset(registry, name, rng):
    if registry.kind(name) == "gaussian":
        mean, cov = registry.gaussian(name)
        return rng.multivariate_normal(mean, cov)
    pts = registry.points(name)
    return np.array(pts[rng.integers(len(pts))])


def _draw_target_state(registry, condition, rng):
    if condition.kind == "dataset":
        return _draw_from_dataset(registry, condition.name, rng)
    names = registry.names()
    return _draw_from_dataset(registry, names[rng.integers(len(names))], rng)


def _w2_to_condition(output, registry, condition):
    if condition is None or condition.kind != "dataset":
        return None
    if registry.kind(condition.name) == "gaussian":
        mean, cov = registry.gaussian(condition.name)
        return w2_dirac_to_gaussian(output, mean, cov)
    return w2_dirac_to_points(output, registry.points(condition.name))


def _cloud_w2_to_condition(cloud, registry, condition):
    if condition.kind != "dataset":
        return None
    cloud = np.asarray(cloud, dtype=float)
    if registry.kind(condition.name) == "gaussian":
        mean, cov = registry.gaussian(condition.name)
        emp_mean = cloud.mean(axis=0)
        centered = cloud - emp_mean
        emp_cov = centered.T @ centered / cloud.shape[0]
        return w2_gaussian(emp_mean, emp_cov, mean, cov)
    pts = registry.points(condition.name)
    if cloud.shape[0] % len(pts) == 0 and cloud.shape[0] <= 2048:
        # Equal-size exact assignment against the atom-replicated dataset.
        reps = np.repeat(pts, cloud.shape[0] // len(pts), axis=0)
        return w2_empirical_exact(cloud, reps)[0]
    return None


def _resolve_x0(cfg, seed):
    if cfg.inputs["x0"] is not None:
        return cfg.inputs["x0"]
    rng = _rng(seed, 1)
    return _draw_from_dataset(cfg.registry, cfg.inputs["sample_source"], rng)


def _run_invert_edit(cfg, seed):
    edit_cfg = InversionEditConfig(
        eta=cfg.editor["eta"],
        transport=cfg.transport,
        grid=cfg.grid,
        condition_target=cfg.editor["condition"],
        scales=cfg.scales,
        eta_window=cfg.editor["eta_window"],
    )
    x0 = _resolve_x0(cfg, seed)
    result = transport_guided_inversion_edit(edit_cfg, cfg.registry, cfg.codec, x0,
                                             cfg.inputs["x_target"])
    metrics = {
        "reconstruction_l2": result.summary.reconstruction_l2,
        "displacement_l2": result.summary.displacement_l2,
        "transport_work": result.summary.transport_work,
        "w2_to_target": _w2_to_condition(result.output, cfg.registry, cfg.editor["condition"]),
    }
    return metrics, result


def _run_flowedit(cfg, seed):
    edit_cfg = FlowEditConfig(
        transport=cfg.transport,
        grid=cfg.grid,
        cond_src=cfg.editor["cond_src"],
        cond_tar=cfg.editor["cond_tar"],
        scales=cfg.scales,
        seed=RngSeed(seed),
        n_avg=cfg.editor["n_avg"],
        n_max=cfg.editor["n_max"],
        n_min=cfg.editor["n_min"],
    )
    x0 = _resolve_x0(cfg, seed)
    result = transport_enhanced_flowedit(edit_cfg, cfg.registry, cfg.codec, x0)
    metrics = {
        "reconstruction_l2": result.summary.reconstruction_l2,
        "displacement_l2": result.summary.displacement_l2,
        "transport_work": result.summary.transport_work,
        "w2_to_target": _w2_to_condition(result.output, cfg.registry, cfg.editor["cond_tar"]),
    }
    return metrics, result


def _run_generate(cfg, seed):
    rng = _rng(seed)
    noise = rng.standard_normal((cfg.inputs["count"], cfg.registry.dim()))
    field = make_velocity(cfg.registry, cfg.editor["condition"], cfg.scales)
    if cfg.transport.beta0 > 0.0:
        if cfg.inputs["x_target"] is None:
            raise ConfigError("generate with transport.beta0 > 0 needs inputs.x_target")
        field = make_enhanced(field, cfg.codec.encode(cfg.inputs["x_target"]), cfg.transport)
    traj = integrate(field, noise, cfg.grid)
    cloud = cfg.codec.decode(traj.final_state)
    metrics = {
        "reconstruction_l2": None,
        "displacement_l2": None,
        "transport_work": None,
        "w2_to_target": _cloud_w2_to_condition(cloud, cfg.registry, cfg.editor["condition"]),
    }
    return metrics, (traj, cloud)


def run_verify(cfg, seed):
    """Run the configured bound verifications and return BoundReports."""
    vsection = cfg.verify
    rng = _rng(seed, 2)
    dim = cfg.registry.dim()
    z_target = _draw_target_state(cfg.registry, vsection["condition"], rng)
    reports = []
    kinds = ("discretization", "convergence", "edit_control") if vsection["kind"] == "all" \
        else (vsection["kind"],)
    if "discretization" in kinds:
        field = make_velocity(cfg.registry, vsection["condition"], cfg.scales)
        z_init = rng.standard_normal(dim)
        reports.append(verify_discretization_bound(
            field, cfg.transport, z_init, z_target, vsection["step_counts"],
            probe_t=vsection["probe_t"]))
    if "convergence" in kinds or "edit_control" in kinds:
        setup = VerifySetup(
            registry=cfg.registry,
            condition=vsection["condition"],
            scales=cfg.scales,
            grid=cfg.grid,
            transport=cfg.transport,
            z_target=z_target,
            n_runs=vsection["n_runs"],
            seed=seed,
        )
        if "convergence" in kinds:
            reports.append(verify_convergence_bound(setup, vsection["beta0_list"]))
        if "edit_control" in kinds:
            reports.append(verify_edit_control_bound(setup, vsection["edit_beta0_list"], vsection["phi"]))
    return reports


def _report_lines(cfg, seed, metrics=None, reports=None):
    lines = ["[run]", f"name = {cfg.name}", f"algorithm = {cfg.algorithm}", f"seed = {seed}", ""]
    if metrics is not None:
        lines.append("[result]")
        for key in _METRIC_COLUMNS:
            lines.append(f"{key} = {_fmt(metrics[key])}")
        lines.append("")
    for rep in reports or []:
        lines.append(f"[report.{rep.bound_kind}]")
        lines.append(f"passed = {_fmt(rep.passed)}")
        lines.append(f"slope = {_fmt(rep.slope)}")
        for key in sorted(rep.fitted_constants):
            lines.append(f"{key} = {_fmt(rep.fitted_constants[key])}")
        for key in sorted(rep.tolerance_used):
            val = rep.tolerance_used[key]
            text = ", ".join(_fmt(v) for v in val) if isinstance(val, tuple) else _fmt(val)
            lines.append(f"tolerance.{key} = {text}")
        lines.append("")
    return "\n".join(lines)


def _measured_csv(report):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["series", "control", "observed"])
    for series, control, observed in report.measured:
        writer.writerow([series, _fmt(control), _fmt(observed)])
    return buf.getvalue()


def run_experiment(cfg, out_dir=None, seed=None):
    """Execute one configured run and write its artifacts.

    Editing runs write a trajectory CSV and a report; generate writes the
    sample cloud; verify writes one measured CSV per bound.  Plots are added
    for 2-D data when experiment.plot is true.
    """
    out_dir = out_dir or cfg.output_dir
    seed = cfg.seed if seed is None else seed
    os.makedirs(out_dir, exist_ok=True)
    base = os.path.join(out_dir, cfg.name)
    files = []
    reports = []

    if cfg.algorithm == "verify":
        reports = run_verify(cfg, seed)
        for rep in reports:
            files.append(atomic_write_text(f"{base}_{rep.bound_kind}_measured.csv",
                                           _measured_csv(rep)))
        metrics = None
    elif cfg.algorithm == "generate":
        metrics, (traj, cloud) = _run_generate(cfg, seed)
        files.append(atomic_write_text(f"{base}_samples.csv", points_csv(cloud)))
        if cfg.plot and cloud.shape[1] == 2:
            files.append(atomic_write_text(f"{base}_samples.svg", render_point_cloud([cloud])))
    else:
        runner = _run_invert_edit if cfg.algorithm == "invert_edit" else _run_flowedit
        metrics, result = runner(cfg, seed)
        files.append(atomic_write_text(f"{base}_trajectory.csv",
                                       trajectory_csv(result.trajectory)))
        if cfg.plot and result.trajectory.dim == 2:
            files.append(atomic_write_text(f"{base}_trajectory.svg",
                                           render_trajectories([result.trajectory.states])))

    files.append(atomic_write_text(f"{base}_report.txt",
                                   _report_lines(cfg, seed, metrics, reports)))
    return RunArtifacts(files=files, metrics=metrics or {}, reports=reports)


def _sweep_cell(cfg, overrides, seed):
    cell_cfg = derive_config(cfg, overrides)
    if cell_cfg.algorithm == "invert_edit":
        return _run_invert_edit(cell_cfg, seed)[0]
    if cell_cfg.algorithm == "flowedit":
        return _run_flowedit(cell_cfg, seed)[0]
    if cell_cfg.algorithm == "generate":
        return _run_generate(cell_cfg, seed)[0]
    raise ConfigError(f"sweeps do not support algorithm {cell_cfg.algorithm!r}")


def run_sweep(cfg, out_dir=None, workers=1, seed=None):
    """Run the Cartesian sweep and write one results CSV.

    Row order is the product order of the axes as configured, then replicate.
    Failed cells keep their row with an error message; the caller decides the
    exit status from n_failed.
    """
    if not cfg.sweep_axes:
        raise ConfigError("sweep needs at least one axis = line in [sweep]")
    out_dir = out_dir or cfg.output_dir
    base_seed = cfg.seed if seed is None else seed
    os.makedirs(out_dir, exist_ok=True)
    paths = [path for path, _ in cfg.sweep_axes]
    cells = list(itertools.product(*[vals for _, vals in cfg.sweep_axes]))

    tasks = []
    for cell_index, combo in enumerate(cells):
        for rep in range(cfg.replicates):
            tasks.append((cell_index, combo, rep, derive_seed(base_seed, cell_index, rep)))

    def work(task):
        _, combo, rep, cell_seed = task
        try:
            metrics = _sweep_cell(cfg, dict(zip(paths, combo)), cell_seed)
            return metrics, ""
        except Exception as exc:  # noqa: BLE001 - cell isolation is the contract
            message = f"{type(exc).__name__}: {exc}".replace("\n", " ")
            return None, message

    workers = max(1, int(workers))
    if workers == 1:
        outcomes = [work(t) for t in tasks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(work, tasks))

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(list(paths) + ["replicate", "seed"] + list(_METRIC_COLUMNS) + ["error"])
    n_failed = 0
    for (cell_index, combo, rep, cell_seed), (metrics, error) in zip(tasks, outcomes):
        row = list(combo) + [str(rep), str(cell_seed)]
        if metrics is None:
            n_failed += 1
            row += ["" for _ in _METRIC_COLUMNS] + [error]
        else:
            row += [_fmt(metrics[k]) for k in _METRIC_COLUMNS] + [""]
        writer.writerow(row)

    results_path = atomic_write_text(os.path.join(out_dir, f"{cfg.name}_results.csv"),
                                     buf.getvalue())
    if cfg.plot and len(paths) == 1:
        rows = _numeric_rows(buf.getvalue(), paths[0], "w2_to_target")
        if rows:
            atomic_write_text(os.path.join(out_dir, f"{cfg.name}_results.svg"),
                              render_metric_chart(rows, paths[0], "w2_to_target"))
    return SweepOutcome(results_path=results_path, n_rows=len(tasks), n_failed=n_failed)


def _numeric_rows(csv_text, x_key, y_key):
    reader = csv.DictReader(io.StringIO(csv_text))
    rows = []
    for record in reader:
        if record.get("error"):
            continue
        try:
            rows.append((float(record[x_key]), float(record[y_key])))
        except (ValueError, KeyError, TypeError):
            continue
    return rows


def gen_data(cfg, out_dir=None, seed=None):
    """Materialize every configured dataset as a headerless CSV.

    Point sets are written verbatim; Gaussian specs are sampled with
    inputs.count points using a per-dataset seed offset.
    """
    out_dir = out_dir or cfg.output_dir
    seed = cfg.seed if seed is None else seed
    os.makedirs(out_dir, exist_ok=True)
    files = []
    for index, name in enumerate(cfg.registry.names()):
        if cfg.registry.kind(name) == "gaussian":
            mean, cov = cfg.registry.gaussian(name)
            rng = _rng(seed, 3, index)
            pts = rng.multivariate_normal(mean, cov, size=cfg.inputs["count"])
        else:
            pts = cfg.registry.points(name)
        files.append(atomic_write_text(os.path.join(out_dir, f"{name}.csv"), points_csv(pts)))
    return files
