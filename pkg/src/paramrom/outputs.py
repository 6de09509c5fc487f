"""Writing reports to disk: CSV tables, the run manifest, plot scripts and figures.

CSV files carry fixed column schemas and fixed float formats and never
include timings, so identical configs and seeds give byte-identical files.
Timings, cache statistics and provenance go to ``manifest.json``.
"""

import csv
import hashlib
import json
import os
import subprocess

import numpy as np

from . import __version__
from .experiments import ConvergenceReport, ReconstructionReport
from .measurement import Observation, write_observation_csv
from .plotting import render, write_plot_script

MANIFEST_VERSION = 1
FLOAT = "{:.10e}"


def _f(x):
    return FLOAT.format(float(x))


def _writer(path):
    fh = open(path, "w", newline="")
    return fh, csv.writer(fh, lineterminator="\n")


def _git_revision():
    here = os.path.dirname(os.path.abspath(__file__))
    try:
        out = subprocess.run(
            ["git", "rev-parse", "HEAD"], cwd=here, capture_output=True, text=True, timeout=5, check=True
        )
        return out.stdout.strip() or None
    except (OSError, subprocess.SubprocessError):
        return None


def content_hash(paths, root):
    h = hashlib.sha256()
    for p in sorted(paths):
        h.update(os.path.relpath(p, root).encode())
        with open(p, "rb") as fh:
            h.update(fh.read())
    return h.hexdigest()


def write_convergence(report: ConvergenceReport, out_dir):
    files = []
    grid = lambda n: f"{n}x{n}"
    label = grid if report.row_name == "t_grid" else str
    path = os.path.join(out_dir, "errors_table.csv")
    fh, w = _writer(path)
    with fh:
        w.writerow([report.row_name] + [grid(c) for c in report.cols])
        for i, r in enumerate(report.rows):
            w.writerow([label(r)] + [_f(e) for e in report.errors[i]])
    files.append(path)
    if report.stds is not None:
        path = os.path.join(out_dir, "std_table.csv")
        fh, w = _writer(path)
        with fh:
            w.writerow([report.row_name] + [grid(c) for c in report.cols])
            for i, r in enumerate(report.rows):
                w.writerow([label(r)] + [_f(e) for e in report.stds[i]])
        files.append(path)
    path = os.path.join(out_dir, "errors_long.csv")
    fh, w = _writer(path)
    with fh:
        w.writerow(["row_name", "row", "col", "h_x", "error", "std"])
        for i, r in enumerate(report.rows):
            for j, c in enumerate(report.cols):
                std = "" if report.stds is None else _f(report.stds[i, j])
                w.writerow([report.row_name, r, c, _f(report.h_x[j]), _f(report.errors[i, j]), std])
    files.append(path)
    path = os.path.join(out_dir, "rates.csv")
    fh, w = _writer(path)
    with fh:
        w.writerow(["name", "rate"])
        for k, v in report.rates.items():
            w.writerow([k, _f(v)])
    files.append(path)
    return files


def write_reconstruction(report: ReconstructionReport, out_dir):
    files = []
    s = report.config.settings
    trace_dir = os.path.join(out_dir, "traces")
    obs_dir = os.path.join(out_dir, "observations")
    os.makedirs(trace_dir, exist_ok=True)
    os.makedirs(obs_dir, exist_ok=True)

    path = os.path.join(out_dir, "potentials.csv")
    fh, w = _writer(path)
    with fh:
        w.writerow(["index", "type", "amplitude", "width", "center_x", "center_y"])
        for i, p in enumerate(report.potentials):
            d = p.to_dict()
            if d["type"] == "constant":
                w.writerow([i, "constant", _f(d["value"]), "", "", ""])
            else:
                w.writerow([i, "gaussian", _f(d["amplitude"]), _f(d["width"]), _f(d["center"][0]), _f(d["center"][1])])
    files.append(path)

    tcols = [f"t_{i + 1}" for i in range(s.n_t)]
    path = os.path.join(out_dir, "parameters.csv")
    fh, w = _writer(path)
    with fh:
        w.writerow(["trial", "role"] + tcols)
        for k in range(len(report.targets)):
            w.writerow([k, "target"] + [_f(v) for v in report.targets[k]])
            w.writerow([k, "initial"] + [_f(v) for v in report.initial[k]])
    files.append(path)

    for o in report.observations:
        name = f"p{o['pixels'].nx}_c{o['coverage']:.4f}_t{o['trial']}.csv"
        path = os.path.join(obs_dir, name)
        write_observation_csv(path, Observation(q=o["q"], mask=o["mask"]), o["pixels"])
        files.append(path)

    runs_path = os.path.join(out_dir, "runs.csv")
    est_path = os.path.join(out_dir, "estimates.csv")
    fr, wr = _writer(runs_path)
    fe, we = _writer(est_path)
    with fr, fe:
        wr.writerow(
            ["label", "pixels", "coverage", "noise", "weighted", "trial", "realization", "iterations",
             "final_loss", "param_error", "potential_error", "stalled", "converged"]
        )
        we.writerow(["label"] + tcols)
        for r in report.runs:
            fin = r.trace.final()
            wr.writerow(
                [r.label, r.pixels, f"{r.coverage:.4f}", f"{r.noise:.4f}", int(r.weighted), r.trial, r.realization,
                 fin.iteration, _f(fin.loss), _f(fin.param_error), _f(fin.potential_error),
                 int(r.trace.stalled), int(r.trace.converged)]
            )
            we.writerow([r.label] + [_f(v) for v in r.trace.t_hat])
            path = os.path.join(trace_dir, r.label + ".csv")
            r.trace.write_csv(path)
            files.append(path)
    files += [runs_path, est_path]

    path = os.path.join(out_dir, "summary.csv")
    fh, w = _writer(path)
    keys = ["n_runs", "mean_param_error", "std_param_error", "mean_potential_error", "std_potential_error",
            "stalled_runs"]
    with fh:
        w.writerow(["pixels", "coverage", "noise", "weighted"] + keys)
        for row in report.aggregate():
            w.writerow(
                [row["pixels"], f"{row['coverage']:.4f}", f"{row['noise']:.4f}", int(row["weighted"]), row["n_runs"]]
                + [_f(row[k]) for k in keys[1:-1]]
                + [row["stalled_runs"]]
            )
    files.append(path)
    return files


def emit_outputs(report, out_dir, figures=True):
    """Write CSVs, plot script, optional PNG figures and the manifest; returns the manifest dict."""
    os.makedirs(out_dir, exist_ok=True)
    if isinstance(report, ConvergenceReport):
        cfg_kind = report.kind
        csvs = write_convergence(report, out_dir)
    elif isinstance(report, ReconstructionReport):
        cfg_kind = "reconstruct"
        csvs = write_reconstruction(report, out_dir)
    else:
        raise TypeError(f"cannot write a {type(report).__name__}")
    script = write_plot_script(cfg_kind, out_dir)
    pngs = render(script, out_dir) if figures else []
    return csvs, script, pngs


def write_manifest(cfg, report, out_dir, csvs, script, pngs, extra=None):
    manifest = {
        "manifest_version": MANIFEST_VERSION,
        "package_version": __version__,
        "git_revision": _git_revision(),
        "config": cfg.to_dict(),
        "seeds": {"master": cfg.seed, "streams": _streams(cfg.kind)},
        "content_hash": content_hash(csvs, out_dir),
        "outputs": {
            "csv": sorted(os.path.relpath(p, out_dir) for p in csvs),
            "plot_script": os.path.relpath(script, out_dir),
            "figures": sorted(os.path.relpath(p, out_dir) for p in pngs),
        },
        "runtime_seconds": {k: round(float(v), 3) for k, v in report.runtimes.items()},
        "snapshot_cache": report.cache_stats,
    }
    if isinstance(report, ConvergenceReport):
        manifest["rates"] = report.rates
    else:
        manifest["fit"] = report.fit
    if extra:
        manifest.update(extra)
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
    return manifest


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _streams(kind):
    return {
        "convergence-low": [],
        "convergence-high": ["manufactured.directions", "manufactured.centers", "features(M, network)",
                             "mc(network, repeat)"],
        "reconstruct": ["potentials", "features(attempt)", "target(trial)", "init(trial)",
                        "noise(pixels, level, trial, realization)"],
    }[kind]
