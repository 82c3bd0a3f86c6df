"""Benchmark command line interface.

Subcommands: ``solve``, ``convergence``, ``ranktrace``, ``bench``,
``weights``.  Configuration comes from a flat ``key=value`` file
(``--config``) overridden by command-line flags.  Report subcommands write
UTF-8 CSV with a header row (floats carry 17 significant digits, so they
round-trip exactly) and, when an output path is given, a companion PNG
figure unless ``--no-plot`` is passed.

Exit codes: 0 ok, 1 configuration error, 2 ``--check`` failure,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import plots
from .fem import assemble, build_mesh
from .grids import TimeGrid
from .kernels import SmoothKernel, VariableOrderKernel, WeaklySingularKernel, cq_weights, kernel_integral_weaksing
from .problems import REFERENCE_ERRORS, ManufacturedProblem, by_name, default_n_steps, zero_problem
from .solver import SCHEME_SOLVERS, RunResult
from .linalg import SolveFailureError

SCHEMES = ("cn", "bdf2cq", "vo-l1")
HISTORIES = ("dense", "isvd", "both")
PROBLEMS = ("example1", "example2", "example3", "custom")

ERROR_MATCH_RTOL = 0.05      # relative slack against the reference tables
RATE_TOL = 0.15              # |observed rate - 2| tolerance
DIFF_TOL = 1e-11             # dense-vs-compressed agreement at tol = 1e-12
ORTHO_TOL = 1e-10


class ConfigError(Exception):
    pass


class CheckFailure(Exception):
    pass


@dataclass
class RunConfig:
    problem: str = "example1"
    scheme: str | None = None
    history: str = "both"
    n_div: int = 8
    n_steps: int | None = None
    t_final: float = 1.0
    tol: float = 1e-12
    alpha: float = 0.8
    lam: float = 0.2
    varpi_mode: str = "exact-const"
    out: str | None = None
    seed: int = 0
    check: bool = False
    plot: bool = True
    levels: tuple[int, ...] = ()
    nsteps_list: tuple[int, ...] = ()
    checkpoint: str | None = None


_CONFIG_CASTS = {
    "problem": str, "scheme": str, "history": str, "n_div": int, "n_steps": int,
    "t_final": float, "tol": float, "alpha": float, "lam": float,
    "varpi_mode": str, "out": str, "seed": int, "check": lambda s: s.lower() in ("1", "true", "yes"),
    "plot": lambda s: s.lower() in ("1", "true", "yes"),
    "levels": lambda s: tuple(int(x) for x in s.replace(",", " ").split()),
    "nsteps_list": lambda s: tuple(int(x) for x in s.replace(",", " ").split()),
    "checkpoint": str,
}

_FILE_KEY_ALIASES = {"lambda": "lam", "ndiv": "n_div", "nsteps": "n_steps"}


def _read_config_file(path: str) -> dict:
    values = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip().replace("-", "_")
        key = _FILE_KEY_ALIASES.get(key, key)
        if key not in _CONFIG_CASTS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            values[key] = _CONFIG_CASTS[key](val.strip())
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key}: {exc}") from exc
    return values


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _build_parser() -> _Parser:
    p = _Parser(prog="memflow", description="Memory-kernel solver benchmarks")
    sub = p.add_subparsers(dest="command", required=True)

    def add_common(sp):
        sp.add_argument("--config", help="flat key=value config file")
        sp.add_argument("--problem", choices=PROBLEMS)
        sp.add_argument("--scheme", choices=SCHEMES)
        sp.add_argument("--history", choices=HISTORIES)
        sp.add_argument("--ndiv", type=int, dest="n_div")
        sp.add_argument("--nsteps", type=int, dest="n_steps")
        sp.add_argument("--t-final", type=float, dest="t_final")
        sp.add_argument("--tol", type=float)
        sp.add_argument("--alpha", type=float)
        sp.add_argument("--lambda", type=float, dest="lam")
        sp.add_argument("--varpi-mode", choices=("exact-const", "paper-printed"), dest="varpi_mode")
        sp.add_argument("--out", help="output path ('-' or omitted: stdout)")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--check", action="store_true", default=None)
        sp.add_argument("--plot", action="store_true", default=None)
        sp.add_argument("--no-plot", action="store_false", dest="plot", default=None)

    add_common(sub.add_parser("solve", help="run one configuration, emit a JSON summary"))
    sp = sub.add_parser("convergence", help="error table across mesh levels (CSV)")
    add_common(sp)
    sp.add_argument("--levels", help="comma-separated n_div list, e.g. 8,16,32,64")
    sp = sub.add_parser("ranktrace", help="per-step rank trace of the compressed history (CSV)")
    add_common(sp)
    sp.add_argument("--checkpoint", help="write the final compressed state to this file")
    sp = sub.add_parser("bench", help="dense vs compressed wall time and memory across step counts (CSV)")
    add_common(sp)
    sp.add_argument("--nsteps-list", dest="nsteps_list", help="comma-separated step counts")
    add_common(sub.add_parser("weights", help="dump convolution-quadrature weight tables (CSV)"))
    return p


def _merge_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig()
    file_values = _read_config_file(args.config) if getattr(args, "config", None) else {}
    merged = {}
    for key in RunConfig.__dataclass_fields__:
        flag = getattr(args, key, None)
        if key in ("levels", "nsteps_list") and isinstance(flag, str):
            flag = _CONFIG_CASTS[key](flag)
        if flag is not None:
            merged[key] = flag
        elif key in file_values:
            merged[key] = file_values[key]
    cfg = replace(cfg, **merged)
    if cfg.problem not in PROBLEMS:
        raise ConfigError(f"unknown problem {cfg.problem!r}")
    if cfg.history not in HISTORIES:
        raise ConfigError(f"unknown history {cfg.history!r}")
    if cfg.n_div < 2:
        raise ConfigError("ndiv must be >= 2")
    if cfg.tol <= 0:
        raise ConfigError("tol must be positive")
    if cfg.t_final <= 0:
        raise ConfigError("t-final must be positive")
    return cfg


def _resolve_problem(cfg: RunConfig) -> tuple[ManufacturedProblem, str]:
    if cfg.problem == "custom":
        scheme = cfg.scheme or "cn"
        if scheme == "cn":
            kernel = SmoothKernel(np.log1p, label="log1p")
        elif scheme == "bdf2cq":
            kernel = WeaklySingularKernel(alpha=cfg.alpha, lam=cfg.lam)
        elif scheme == "vo-l1":
            kernel = VariableOrderKernel(lambda t: 0.5 + 0.25 * np.sin(5.0 * t))
        else:
            raise ConfigError(f"unknown scheme {scheme!r}")
        return zero_problem(kernel, scheme), scheme
    problem = by_name(cfg.problem, alpha=cfg.alpha, lam=cfg.lam)
    scheme = cfg.scheme or problem.scheme
    if scheme != problem.scheme:
        raise ConfigError(
            f"scheme {scheme!r} is incompatible with {cfg.problem} "
            f"(kernel family requires {problem.scheme!r})"
        )
    return problem, scheme


def _run_single(cfg: RunConfig, problem, scheme: str, history: str,
                n_div: int, n_steps: int, keep_trajectory=False) -> RunResult:
    mesh = build_mesh(n_div)
    system = assemble(mesh)
    grid = TimeGrid.uniform(cfg.t_final, n_steps)
    solver = SCHEME_SOLVERS[(scheme, history)]
    kwargs = {"keep_trajectory": keep_trajectory}
    if scheme == "bdf2cq":
        kwargs["varpi_mode"] = cfg.varpi_mode
    if history == "isvd":
        return solver(system, problem.kernel, grid, problem, cfg.tol, **kwargs)
    return solver(system, problem.kernel, grid, problem, **kwargs)


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def _write_csv(out: str | None, header: list[str], rows: list[dict]) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(row.get(col)) for col in header))
    text = "\n".join(lines) + "\n"
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def _plot_path(out: str | None) -> Path | None:
    if out is None or out == "-":
        return None
    return Path(out).with_suffix(".png")


def _summary_dict(res: RunResult) -> dict:
    return {
        "final_l2_error": res.final_l2_error,
        "final_rank": res.final_rank,
        "T_sv": res.n_sv_truncations,
        "n_reorth": res.n_reorth,
        "peak_history_bytes": res.peak_history_bytes,
        "n_steps": res.n_steps,
        "m": res.m,
        "timings": {k: res.timings.get(k, 0.0) for k in ("assembly", "solves", "history_sum", "isvd_update", "total")},
    }


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_solve(cfg: RunConfig) -> int:
    problem, scheme = _resolve_problem(cfg)
    n_steps = cfg.n_steps or default_n_steps(problem.label, cfg.n_div, cfg.t_final)
    results: dict[str, RunResult] = {}
    for history in ("dense", "isvd"):
        if cfg.history in (history, "both"):
            results[history] = _run_single(cfg, problem, scheme, history, cfg.n_div, n_steps)
    payload = {
        "config": {
            "problem": cfg.problem, "scheme": scheme, "history": cfg.history,
            "ndiv": cfg.n_div, "nsteps": n_steps, "t_final": cfg.t_final,
            "tol": cfg.tol, "alpha": cfg.alpha, "lambda": cfg.lam,
            "varpi_mode": cfg.varpi_mode, "seed": cfg.seed,
        },
        "results": {k: _summary_dict(v) for k, v in results.items()},
    }
    if len(results) == 2:
        payload["diff_l2"] = float(np.linalg.norm(results["dense"].final_u - results["isvd"].final_u))
    text = json.dumps(payload, sort_keys=True, indent=2) + "\n"
    if cfg.out is None or cfg.out == "-":
        sys.stdout.write(text)
    else:
        Path(cfg.out).write_text(text, encoding="utf-8")
    if cfg.check:
        problems = []
        if len(results) == 2 and not payload["diff_l2"] <= DIFF_TOL:
            problems.append(f"dense/isvd difference {payload['diff_l2']:.3e} > {DIFF_TOL}")
        st = results.get("isvd") and results["isvd"].isvd_state
        if st is not None and not st.orthogonality_error() <= ORTHO_TOL:
            problems.append(f"orthogonality drift {st.orthogonality_error():.3e} > {ORTHO_TOL}")
        if problems:
            raise CheckFailure("; ".join(problems))
    return 0


def cmd_convergence(cfg: RunConfig) -> int:
    problem, scheme = _resolve_problem(cfg)
    levels = cfg.levels or (8, 16, 32, 64)
    if len(levels) < 2:
        raise ConfigError("convergence needs at least 2 levels")
    header = ["h_over_sqrt2", "err_dense", "rate_dense", "err_isvd", "rate_isvd",
              "diff_dense_isvd", "rank_final", "T_sv", "time_dense_s", "time_isvd_s",
              "mem_dense_bytes", "mem_isvd_bytes"]
    rows = []
    for nd in levels:
        n_steps = cfg.n_steps or default_n_steps(problem.label, nd, cfg.t_final)
        row: dict = {"h_over_sqrt2": 1.0 / nd}
        dense = isvd = None
        if cfg.history in ("dense", "both"):
            dense = _run_single(cfg, problem, scheme, "dense", nd, n_steps)
            row.update(err_dense=dense.final_l2_error, time_dense_s=dense.timings["total"],
                       mem_dense_bytes=dense.peak_history_bytes)
        if cfg.history in ("isvd", "both"):
            isvd = _run_single(cfg, problem, scheme, "isvd", nd, n_steps)
            row.update(err_isvd=isvd.final_l2_error, time_isvd_s=isvd.timings["total"],
                       mem_isvd_bytes=isvd.peak_history_bytes, rank_final=isvd.final_rank,
                       T_sv=isvd.n_sv_truncations)
        if dense is not None and isvd is not None:
            row["diff_dense_isvd"] = float(np.linalg.norm(dense.final_u - isvd.final_u))
        rows.append(row)
    for prev, cur in zip(rows, rows[1:]):
        for ek, rk in (("err_dense", "rate_dense"), ("err_isvd", "rate_isvd")):
            e0, e1 = prev.get(ek), cur.get(ek)
            if e0 and e1 and e0 > 0 and e1 > 0:
                cur[rk] = float(np.log2(e0 / e1))
    _write_csv(cfg.out, header, rows)
    png = _plot_path(cfg.out)
    if cfg.plot and png is not None:
        plots.convergence_figure(rows, png, f"{problem.label} ({scheme})")
    if cfg.check:
        _check_convergence(cfg, problem, rows, levels)
    return 0


def _check_convergence(cfg: RunConfig, problem, rows: list[dict], levels) -> None:
    reference = REFERENCE_ERRORS.get(problem.label, {})
    if problem.label == "example2" and (cfg.alpha, cfg.lam) != (0.8, 0.2):
        reference = {}  # the reference ladder is for the stock kernel parameters
    issues = []
    for nd, row in zip(levels, rows):
        for key in ("err_dense", "err_isvd"):
            err = row.get(key)
            ref = reference.get(nd)
            if err is not None and ref is not None and abs(err - ref) > ERROR_MATCH_RTOL * ref:
                issues.append(f"ndiv={nd} {key}={err:.3e} not within {ERROR_MATCH_RTOL:.0%} of {ref:.2e}")
        diff = row.get("diff_dense_isvd")
        if diff is not None and cfg.tol <= 1e-12 and diff > DIFF_TOL:
            issues.append(f"ndiv={nd} dense/isvd difference {diff:.3e} > {DIFF_TOL}")
    if problem.label in ("example1", "example2"):
        for row in rows[1:]:
            for key in ("rate_dense", "rate_isvd"):
                rate = row.get(key)
                if rate is not None and abs(rate - 2.0) > RATE_TOL:
                    issues.append(f"{key}={rate:.3f} outside 2 +- {RATE_TOL}")
    if issues:
        raise CheckFailure("; ".join(issues))


def cmd_ranktrace(cfg: RunConfig) -> int:
    if cfg.history == "dense":
        raise ConfigError("ranktrace requires the compressed history (--history isvd)")
    problem, scheme = _resolve_problem(cfg)
    n_steps = cfg.n_steps or default_n_steps(problem.label, cfg.n_div, cfg.t_final)
    res = _run_single(cfg, problem, scheme, "isvd", cfg.n_div, n_steps)
    header = ["step", "rank", "q", "T_sv"]
    rows = [
        {"step": s, "rank": int(res.rank_trace[s]), "q": int(res.q_trace[s]), "T_sv": int(res.tsv_trace[s])}
        for s in range(n_steps + 1)
    ]
    _write_csv(cfg.out, header, rows)
    if cfg.checkpoint:
        if res.isvd_state is None:
            raise ConfigError("no compressed state was built (all columns were zero)")
        res.isvd_state.save_checkpoint(cfg.checkpoint)
    png = _plot_path(cfg.out)
    if cfg.plot and png is not None:
        plots.ranktrace_figure([r["step"] for r in rows], [r["rank"] for r in rows],
                               [r["q"] for r in rows], png, f"{problem.label} rank trace")
    if cfg.check:
        issues = []
        st = res.isvd_state
        if st is None:
            issues.append("no compressed state was built")
        else:
            if not st.orthogonality_error() <= ORTHO_TOL:
                issues.append(f"orthogonality drift {st.orthogonality_error():.3e} > {ORTHO_TOL}")
            recon = st.reconstruct_column(st.ell - 1)
            drift = float(np.linalg.norm(recon - res.final_u))
            budget = 2.0 * cfg.tol + 1e-13
            if drift > budget:
                issues.append(f"last-column reconstruction drift {drift:.3e} > {budget:.3e}")
        if issues:
            raise CheckFailure("; ".join(issues))
    return 0


def cmd_bench(cfg: RunConfig) -> int:
    problem, scheme = _resolve_problem(cfg)
    sweep = cfg.nsteps_list or (100, 200, 400, 800)
    header = ["n_steps", "time_dense_s", "time_isvd_s", "mem_dense_bytes", "mem_isvd_bytes",
              "rank_final", "T_sv", "diff_dense_isvd"]
    rows = []
    for n_steps in sweep:
        dense = _run_single(cfg, problem, scheme, "dense", cfg.n_div, n_steps)
        isvd = _run_single(cfg, problem, scheme, "isvd", cfg.n_div, n_steps)
        rows.append({
            "n_steps": n_steps,
            "time_dense_s": dense.timings["total"],
            "time_isvd_s": isvd.timings["total"],
            "mem_dense_bytes": dense.peak_history_bytes,
            "mem_isvd_bytes": isvd.peak_history_bytes,
            "rank_final": isvd.final_rank,
            "T_sv": isvd.n_sv_truncations,
            "diff_dense_isvd": float(np.linalg.norm(dense.final_u - isvd.final_u)),
        })
    _write_csv(cfg.out, header, rows)
    png = _plot_path(cfg.out)
    if cfg.plot and png is not None:
        plots.bench_figure(rows, png, f"{problem.label} ({scheme}) dense vs compressed")
    if cfg.check:
        last = rows[-1]
        if not last["mem_isvd_bytes"] < last["mem_dense_bytes"]:
            raise CheckFailure(
                f"compressed history bytes {last['mem_isvd_bytes']} not below dense "
                f"{last['mem_dense_bytes']} at N={last['n_steps']}"
            )
    return 0


def cmd_weights(cfg: RunConfig) -> int:
    n_steps = cfg.n_steps or 64
    grid = TimeGrid.uniform(cfg.t_final, n_steps)
    weights = cq_weights(cfg.alpha, cfg.lam, grid, mode=cfg.varpi_mode)
    header = ["n", "t_n", "chi", "varpi"]
    rows = [
        {"n": n, "t_n": grid.nodes[n], "chi": weights.chi[n], "varpi": weights.varpi[n]}
        for n in range(n_steps + 1)
    ]
    _write_csv(cfg.out, header, rows)
    png = _plot_path(cfg.out)
    if cfg.plot and png is not None:
        plots.weights_figure([r["n"] for r in rows], [r["chi"] for r in rows],
                             [r["varpi"] for r in rows], png,
                             f"CQ weights  alpha={cfg.alpha} lambda={cfg.lam}")
    if cfg.check:
        issues = []
        if abs(weights.chi[0] - 1.5 ** (-cfg.alpha)) > 1e-15:
            issues.append("chi[0] != (3/2)^(-alpha)")
        if cfg.varpi_mode == "exact-const":
            target = kernel_integral_weaksing(cfg.alpha, cfg.lam, grid.nodes)
            rule = weights.dt ** cfg.alpha * np.cumsum(weights.chi) + weights.varpi
            resid = float(np.abs(rule - target).max())
            if resid > 1e-12:
                issues.append(f"constant-exactness residual {resid:.3e} > 1e-12")
        if issues:
            raise CheckFailure("; ".join(issues))
    return 0


_COMMANDS = {
    "solve": cmd_solve,
    "convergence": cmd_convergence,
    "ranktrace": cmd_ranktrace,
    "bench": cmd_bench,
    "weights": cmd_weights,
}


def main(argv: list[str] | None = None) -> int:
    try:
        args = _build_parser().parse_args(argv)
        cfg = _merge_config(args)
        return _COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"memflow: configuration error: {exc}", file=sys.stderr)
        return 1
    except CheckFailure as exc:
        print(f"memflow: check failed: {exc}", file=sys.stderr)
        return 2
    except (SolveFailureError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"memflow: numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
