"""Plot scripts written next to the CSV outputs.

Each script only needs numpy and matplotlib and reads the CSVs in its own
directory (or the directory given as its first argument), so figures can be
regenerated without this package. :func:`render` runs a script in-process
with the Agg backend to produce the PNG files.
"""

import os
import runpy
import sys

_HEADER = '''"""Regenerate figures from the CSV files in this directory."""
import csv
import os
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

HERE = sys.argv[1] if len(sys.argv) > 1 else os.path.dirname(os.path.abspath(__file__))


def read(name):
    with open(os.path.join(HERE, name), newline="") as fh:
        return list(csv.DictReader(fh))

'''

CONVERGENCE = _HEADER + '''
long = read("errors_long.csv")
rows = sorted({int(r["row"]) for r in long})
cols = sorted({int(r["col"]) for r in long})
row_name = long[0]["row_name"]
err = np.zeros((len(rows), len(cols)))
hx = {}
for r in long:
    err[rows.index(int(r["row"])), cols.index(int(r["col"]))] = float(r["error"])
    hx[int(r["col"])] = float(r["h_x"])

fig, ax = plt.subplots(figsize=(6, 4.5))
im = ax.imshow(np.log10(err), origin="lower", cmap="viridis")
ax.set_xticks(range(len(cols)), [f"{c}x{c}" for c in cols])
ax.set_yticks(range(len(rows)), [f"{r}x{r}" if row_name == "t_grid" else str(r) for r in rows])
ax.set_xlabel("x-grid")
ax.set_ylabel("t-grid" if row_name == "t_grid" else "M")
for i in range(len(rows)):
    for j in range(len(cols)):
        shade = (np.log10(err[i, j]) - np.log10(err).min()) / max(np.ptp(np.log10(err)), 1e-12)
        ax.text(j, i, f"{err[i, j]:.2e}", ha="center", va="center", fontsize=7, color="k" if shade > 0.6 else "w")
fig.colorbar(im, ax=ax, label="log10 relative L2 error")
fig.tight_layout()
fig.savefig(os.path.join(HERE, "heatmap.png"), dpi=120)
plt.close(fig)

fig, ax = plt.subplots(figsize=(5.5, 4.2))
h = np.array([hx[c] for c in cols])
for i, r in enumerate(rows):
    label = f"t-grid {r}x{r}" if row_name == "t_grid" else f"M={r}"
    ax.loglog(h, err[i], "o-", label=label)
ax.set_xlabel("h_x")
ax.set_ylabel("relative L2 error")
ax.legend(fontsize=8)
ax.grid(True, which="both", alpha=0.3)
fig.tight_layout()
fig.savefig(os.path.join(HERE, "error_vs_h.png"), dpi=120)
plt.close(fig)

if row_name == "M":
    fig, ax = plt.subplots(figsize=(5.5, 4.2))
    std = np.zeros_like(err)
    for r in long:
        std[rows.index(int(r["row"])), cols.index(int(r["col"]))] = float(r["std"])
    for j, c in enumerate(cols):
        ax.errorbar(rows, err[:, j], yerr=std[:, j], marker="o", label=f"{c}x{c}")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("M (ReLU units)")
    ax.set_ylabel("relative L2 error")
    ax.legend(fontsize=8)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(os.path.join(HERE, "error_vs_M.png"), dpi=120)
    plt.close(fig)
'''

RECONSTRUCTION = _HEADER + '''
summary = read("summary.csv")
runs = read("runs.csv")


def group_key(r):
    return (r["pixels"], r["coverage"], r["noise"], r["weighted"])


sweeps = [k for k in ("pixels", "coverage", "noise") if len({r[k] for r in summary}) > 1]
sweep = sweeps[0] if sweeps else None

if sweep is not None:
    fig, ax = plt.subplots(figsize=(5.5, 4.2))
    for wtd in sorted({r["weighted"] for r in summary}):
        sub = [r for r in summary if r["weighted"] == wtd]
        x = np.array([float(r[sweep]) for r in sub])
        y = np.array([float(r["mean_param_error"]) for r in sub])
        s = np.array([float(r["std_param_error"]) for r in sub])
        order = np.argsort(x)
        name = "weighted loss" if wtd == "1" else "unweighted loss"
        ax.errorbar(x[order], y[order], yerr=s[order], marker="o", capsize=3, label=name)
    labels = {"pixels": "pixels per side", "coverage": "observed fraction", "noise": "relative noise amplitude"}
    ax.set_xlabel(labels[sweep])
    ax.set_ylabel("mean final parameter error")
    ax.set_yscale("log")
    ax.legend()
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(os.path.join(HERE, f"final_error_vs_{sweep}.png"), dpi=120)
    plt.close(fig)

# one trace (first trial and realization) per group
fig, axes = plt.subplots(1, 3, figsize=(13, 3.8))
seen = set()
for r in runs:
    key = group_key(r)
    if key in seen:
        continue
    seen.add(key)
    tr = read(os.path.join("traces", r["label"] + ".csv"))
    it = [int(x["iteration"]) for x in tr]
    label = r["label"].rsplit("_t", 1)[0]
    for ax, col in zip(axes, ("loss", "param_error", "potential_error")):
        ax.semilogy(it, [float(x[col]) for x in tr], label=label)
for ax, title in zip(axes, ("loss", "parameter error", "potential error (max norm)")):
    ax.set_xlabel("iteration")
    ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
axes[0].legend(fontsize=6)
fig.tight_layout()
fig.savefig(os.path.join(HERE, "traces.png"), dpi=120)
plt.close(fig)

# true and recovered potential of the first run
pots = read("potentials.csv")
params = read("parameters.csv")
est = read("estimates.csv")
n = 200
xs = np.linspace(-1, 1, n)
X, Y = np.meshgrid(xs, xs, indexing="xy")


def potential(t):
    mu = np.full_like(X, float(pots[0]["amplitude"]))
    for p, ti in zip(pots[1:], t):
        d2 = (X - float(p["center_x"])) ** 2 + (Y - float(p["center_y"])) ** 2
        mu += ti * float(p["amplitude"]) * np.exp(-d2 / float(p["width"]) ** 2)
    return mu


first = runs[0]
cols = [k for k in est[0] if k.startswith("t_")]
t_hat = [float(est[0][k]) for k in cols]
truth = next(p for p in params if p["trial"] == first["trial"] and p["role"] == "target")
t_true = [float(truth[k]) for k in cols]
mu_true, mu_hat = potential(t_true), potential(t_hat)
fig, axes = plt.subplots(1, 3, figsize=(13, 3.9))
vmax = max(mu_true.max(), mu_hat.max())
for ax, img, title in zip(axes, (mu_true, mu_hat, np.abs(mu_true - mu_hat)),
                          ("true potential", "recovered potential", "absolute error")):
    im = ax.imshow(img, origin="lower", extent=(-1, 1, -1, 1), vmax=None if title == "absolute error" else vmax)
    ax.set_title(title)
    fig.colorbar(im, ax=ax)
fig.suptitle(first["label"])
fig.tight_layout()
fig.savefig(os.path.join(HERE, "potentials.png"), dpi=120)
plt.close(fig)
'''

SCRIPTS = {
    "convergence-low": ("plot_convergence.py", CONVERGENCE),
    "convergence-high": ("plot_convergence.py", CONVERGENCE),
    "reconstruct": ("plot_reconstruction.py", RECONSTRUCTION),
}


def write_plot_script(kind, out_dir):
    name, text = SCRIPTS[kind]
    path = os.path.join(out_dir, name)
    with open(path, "w") as fh:
        fh.write(text)
    return path


def render(script_path, out_dir=None):
    """Run a generated plot script in-process; returns the PNG files it wrote."""
    out_dir = out_dir or os.path.dirname(os.path.abspath(script_path))
    import matplotlib

    matplotlib.use("Agg")
    saved = sys.argv
    sys.argv = [script_path, out_dir]
    try:
        runpy.run_path(script_path, run_name="__main__")
    finally:
        sys.argv = saved
    return sorted(os.path.join(out_dir, f) for f in os.listdir(out_dir) if f.endswith(".png"))
