"""Figure rendering for the benchmark CLI report paths.

Every report subcommand can drop a PNG next to its CSV.  The CSV remains
the machine-readable contract; the figures are companions for quick
inspection.  Uses the Agg backend so headless runs work.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def _finite_pairs(xs, ys):
    pts = [(x, y) for x, y in zip(xs, ys) if y is not None and y > 0]
    return [p[0] for p in pts], [p[1] for p in pts]


def convergence_figure(rows: list[dict], path, title: str) -> None:
    """Log-log error-versus-resolution plot with a slope-2 guide."""
    hs = [r["h_over_sqrt2"] for r in rows]
    fig, ax = plt.subplots(figsize=(5.0, 3.8))
    for key, label, marker in (("err_dense", "dense history", "o"),
                               ("err_isvd", "compressed history", "s")):
        x, y = _finite_pairs(hs, [r.get(key) for r in rows])
        if x:
            ax.loglog(x, y, marker=marker, label=label)
    x, y = _finite_pairs(hs, [r.get("err_dense") for r in rows])
    if len(x) >= 2:
        guide = [y[0] * (xi / x[0]) ** 2 for xi in x]
        ax.loglog(x, guide, "k--", linewidth=0.8, label="slope 2")
    ax.set_xlabel(r"$h/\sqrt{2}$")
    ax.set_ylabel(r"$L^2$ error at $T$")
    ax.set_title(title)
    ax.legend(fontsize=8)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def ranktrace_figure(steps, ranks, pending, path, title: str) -> None:
    """Rank (and buffered-column count) against the step index."""
    fig, ax = plt.subplots(figsize=(5.0, 3.8))
    ax.step(steps, ranks, where="post", label="rank")
    ax.set_xlabel("time step")
    ax.set_ylabel("rank")
    ax2 = ax.twinx()
    ax2.plot(steps, pending, color="tab:orange", alpha=0.6, linewidth=0.8, label="buffered")
    ax2.set_ylabel("buffered columns", color="tab:orange")
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def bench_figure(rows: list[dict], path, title: str) -> None:
    """Wall time and history bytes against the number of steps."""
    ns = [r["n_steps"] for r in rows]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8.0, 3.6))
    ax1.loglog(ns, [r["time_dense_s"] for r in rows], "o-", label="dense")
    ax1.loglog(ns, [r["time_isvd_s"] for r in rows], "s-", label="compressed")
    ax1.set_xlabel("time steps")
    ax1.set_ylabel("wall time [s]")
    ax1.legend(fontsize=8)
    ax1.grid(True, which="both", alpha=0.3)
    ax2.loglog(ns, [r["mem_dense_bytes"] for r in rows], "o-", label="dense")
    ax2.loglog(ns, [r["mem_isvd_bytes"] for r in rows], "s-", label="compressed")
    ax2.set_xlabel("time steps")
    ax2.set_ylabel("history bytes")
    ax2.legend(fontsize=8)
    ax2.grid(True, which="both", alpha=0.3)
    fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def weights_figure(ns, chi, varpi, path, title: str) -> None:
    fig, ax = plt.subplots(figsize=(5.0, 3.8))
    ax.loglog(ns[1:], chi[1:], "o-", markersize=3, label=r"$\chi_n$")
    ax.loglog(ns[1:], [abs(v) for v in varpi[1:]], "s-", markersize=3, label=r"$|\varpi_n|$")
    ax.set_xlabel("n")
    ax.legend(fontsize=8)
    ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
