"""File-based figure rendering for CLI artifacts.

Every renderer takes the already-computed result object and a target
path, draws with the Agg backend, and returns the path.  Figures are
companions to the delimited outputs, never the primary record.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _finish(fig, path: str) -> str:
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_trajectory(traj, path: str) -> str:
    fig, (ax0, ax1) = plt.subplots(
        2, 1, figsize=(7, 5), sharex=True,
        gridspec_kw={"height_ratios": [3, 1]})
    n = traj.states.shape[1]
    if n <= 8:
        for i in range(n):
            ax0.plot(traj.times, traj.states[:, i], lw=1.2, label=f"u_{i+1}")
        ax0.legend(loc="best", fontsize=8)
    else:
        im = ax0.imshow(
            traj.states.T, aspect="auto", origin="lower",
            extent=[traj.times[0], traj.times[-1], 0.5, n + 0.5],
            cmap="viridis")
        fig.colorbar(im, ax=ax0, label="u")
        ax0.set_ylabel("component")
    ax0.set_title(f"trajectory ({traj.scheme})")
    ax1.semilogy(traj.times, np.maximum(traj.distances, 1e-18), lw=1.0,
                 color="tab:red")
    ax1.set_xlabel("t")
    ax1.set_ylabel("dist to set")
    return _finish(fig, path)


def plot_report(report, path: str) -> str:
    fig, (ax0, ax1) = plt.subplots(1, 2, figsize=(9, 4))
    rows = [r for r in report.index_table if r["index"] is not None]
    ts = [r["t"] for r in rows]
    idx = [r["index"] for r in rows]
    ax0.axhline(report.rhs_value, color="tab:gray", ls="--",
                label=f"field degree = {report.rhs_value}")
    ax0.plot(ts, idx, "o-", color="tab:blue", label="return-map index")
    bad = [r for r in report.index_table if r["index"] is None]
    if bad:
        ax0.plot([r["t"] for r in bad], [report.rhs_value] * len(bad), "rx",
                 label="failed")
    ax0.set_xscale("log")
    ax0.set_xlabel("t")
    ax0.set_ylabel("integer")
    ax0.set_title(f"{report.scenario}: "
                  f"{'PASS' if report.passed else 'FAIL'}")
    ax0.legend(fontsize=8)
    res = [max(r["residual"], 1e-18) for r in report.index_table]
    ax1.loglog(
        [r["t"] for r in report.index_table], res, "s-", color="tab:green")
    ax1.set_xlabel("t")
    ax1.set_ylabel("min boundary residual")
    ax1.set_title("boundary clearance")
    return _finish(fig, path)


def plot_degree(cert, path: str) -> str:
    fig, ax = plt.subplots(figsize=(6, 4))
    labels = [e["param"] for e in cert.stability]
    vals = [e["value"] for e in cert.stability]
    xs = range(len(vals))
    ax.plot(xs, vals, "o-")
    ax.set_xticks(list(xs))
    ax.set_xticklabels(labels, rotation=30, ha="right", fontsize=7)
    ax.set_ylabel("integer")
    ax.set_title(f"degree {cert.value} ({cert.method}), "
                 f"residual floor {cert.min_boundary_residual:.2e}")
    return _finish(fig, path)


def plot_funnel(sample, traj_dim: int, path: str) -> str:
    fig, ax = plt.subplots(figsize=(6, 5))
    if traj_dim == 2:
        for name, tr in sample.trajectories.items():
            ax.plot(tr.states[:, 0], tr.states[:, 1], lw=1.0, label=name)
            ax.plot(tr.states[-1, 0], tr.states[-1, 1], "o", ms=5)
        ax.set_xlabel("u_1")
        ax.set_ylabel("u_2")
    else:
        for name, tr in sample.trajectories.items():
            ys = (tr.states[:, 0] if traj_dim == 1
                  else np.linalg.norm(tr.states, axis=1))
            ax.plot(tr.times, ys, lw=1.0, label=name)
        ax.set_xlabel("t")
        ax.set_ylabel("u" if traj_dim == 1 else "|u|")
    ax.legend(fontsize=8)
    ax.set_title("solution funnel sample")
    return _finish(fig, path)


def plot_scan(report, path: str) -> str:
    fig, ax = plt.subplots(figsize=(7, 4))
    zs = sorted({r["z"] for r in report.rows})
    for z in zs:
        rows = sorted((r for r in report.rows if r["z"] == z),
                      key=lambda r: r["t"])
        ax.plot([r["t"] for r in rows],
                [max(r["floor"], 1e-18) for r in rows],
                "o-", lw=1.0, label=f"z={z:g}")
    ax.axhline(report.threshold, color="tab:red", ls="--", label="threshold")
    ax.set_yscale("log")
    ax.set_xlabel("t")
    ax.set_ylabel("boundary return floor")
    ax.set_title(f"{report.scenario}: boundary exclusion")
    ax.legend(fontsize=8)
    return _finish(fig, path)


def plot_bridge(report, path: str) -> str:
    fig, ax = plt.subplots(figsize=(7, 4))
    for stage, rows in (("flow family", report.stage1),
                        ("contraction to update map", report.stage2)):
        ax.plot([r["z"] for r in rows],
                [max(r["floor"], 1e-18) for r in rows], "o-", label=stage)
    ax.set_yscale("log")
    ax.set_xlabel("z")
    ax.set_ylabel("min boundary residual")
    ax.set_title(f"{report.scenario}: homotopy bridge at "
                 f"t={report.t:g}, h={report.h:g}")
    ax.legend(fontsize=8)
    return _finish(fig, path)
