"""``hill-gse`` command-line front end.

Exit codes: 0 success, 1 configuration or usage error, 2 numerical
failure, 3 a property check failed in ``verify``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from . import __version__
from .config import RunConfig, apply_seed_override, load_config
from .errors import ConfigError, NumericalError
from .hill import ground_state
from .montecarlo import (
    DensityEstimate,
    estimate_density,
    estimate_density_direct,
    estimate_distribution_direct,
    estimate_distribution_thm23,
    fit_tail_rate,
)
from .properties import run_all
from .riccati import phi as phi_of
from .sampler import sample_batch
from .variational import multistart, solve_euler_lagrange

# flags whose values may legitimately start with '-' (e.g. "--window -8:-4")
_SIGNED_VALUE_FLAGS = ("--window", "--lambdas", "--lambda", "--lambda-min", "--lambda-max")

DENSITY_COLUMNS = ("lambda", "f_hat", "stderr", "n_eff", "tilt_theta")
RATE_COLUMNS = ("lambda", "J_over_lambda2", "target", "eig_residual", "iters")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


def _fmt(v):
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return f"{float(v):.16e}"


def header_lines(cfg: RunConfig, n_samples=None):
    return [
        f"# hill-gse {__version__}",
        f"# config_sha256: {cfg.sha256()}",
        f"# seed: {cfg.seed}",
        f"# n_samples: {cfg.n_samples if n_samples is None else n_samples}",
        f"# config: {cfg.canonical_json()}",
    ]


def write_csv(path, cfg, columns, rows, n_samples=None):
    """Header comments, a column line and rows in ``%.16e``; '-' writes stdout."""
    lines = header_lines(cfg, n_samples)
    lines.append(",".join(columns))
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    text = "\n".join(lines) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", newline="\n") as fh:
            fh.write(text)


def write_run_record(path, cfg, command, elapsed, extra=None):
    """Sidecar ``<out>.run.json`` holding the wall-clock, kept apart so outputs stay byte-stable."""
    if path in (None, "-"):
        return
    rec = {
        "tool": "hill-gse",
        "version": __version__,
        "command": command,
        "config_sha256": cfg.sha256(),
        "seed": cfg.seed,
        "n_samples": cfg.n_samples,
        "wall_clock_s": elapsed,
    }
    rec.update(extra or {})
    with open(f"{path}.run.json", "w") as fh:
        json.dump(rec, fh, indent=2, sort_keys=True)
        fh.write("\n")


def emit_json(obj, path=None):
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def _meta(cfg, t0, n_samples=None):
    return {
        "version": __version__,
        "config_sha256": cfg.sha256(),
        "seed": cfg.seed,
        "n_samples": cfg.n_samples if n_samples is None else n_samples,
        "wall_clock_s": time.perf_counter() - t0,
    }


def read_csv_with_header(path):
    """(comment lines, column names or None, 2-D float array) from a CSV written by this tool or by hand."""
    comments, names, rows = [], None, []
    try:
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                if line.startswith("#"):
                    comments.append(line)
                    continue
                parts = [p.strip() for p in line.split(",")]
                try:
                    rows.append([float(p) for p in parts])
                except ValueError:
                    if names is not None or rows:
                        raise ConfigError(f"{path}: unexpected non-numeric line {line[:40]!r}") from None
                    names = parts
    except FileNotFoundError as exc:
        raise ConfigError(f"file not found: {path}") from exc
    if not rows:
        raise ConfigError(f"{path}: no numeric data")
    if len({len(r) for r in rows}) != 1:
        raise ConfigError(f"{path}: ragged rows")
    return comments, names, np.asarray(rows)


def read_potential(path, row=0):
    """A potential on the uniform grid.

    Accepts one value per line, a single comma-separated row, or a
    ``hill-gse sample`` file (``row`` selects the sample, the q0 column is
    dropped).
    """
    _, names, data = read_csv_with_header(path)
    if names and names[-1] == "q0":
        data = data[:, :-1]
    if data.shape[1] == 1:
        return data[:, 0]
    if not 0 <= row < data.shape[0]:
        raise ConfigError(f"row {row} out of range for {data.shape[0]} samples")
    return data[row]


def parse_floats(text, what):
    try:
        vals = [float(t) for t in text.replace(" ", "").split(",") if t]
    except ValueError as exc:
        raise ConfigError(f"cannot parse {what}: {text!r}") from exc
    if not vals:
        raise ConfigError(f"empty {what}")
    return vals


def parse_window(text):
    parts = text.split(":")
    if len(parts) != 2:
        raise ConfigError(f"window must look like a:b, got {text!r}")
    a, b = parse_floats(parts[0], "window"), parse_floats(parts[1], "window")
    return a[0], b[0]


def lambda_grid(lo, hi, step):
    if not step > 0 or hi < lo:
        raise ConfigError("need lambda-min <= lambda-max and step > 0")
    n = int(round((hi - lo) / step)) + 1
    return [float(v) for v in lo + step * np.arange(n)]


# ---------------------------------------------------------------------------
# subcommands


def cmd_sample(args, cfg):
    n = args.n or cfg.n_samples
    cfg = cfg.replace(n_samples=n)
    kernel = cfg.make_kernel()
    b = sample_batch(kernel, n, cfg.seed, args.stream)
    cols = [f"q_{j}" for j in range(kernel.grid_size)] + ["q0"]
    rows = (np.append(v, q0) for v, q0 in zip(b.values, b.q0))
    write_csv(args.out, cfg, cols, rows)
    return cfg, {}


def _modes_for(q, cfg):
    # a potential file may sit on a coarser grid than the config's
    return min(cfg.galerkin_modes, q.size // 2)


def cmd_eig(args, cfg, t0):
    q = read_potential(args.potential, args.row)
    gs = ground_state(q, args.method, _modes_for(q, cfg), cfg.ode_steps)
    emit_json({"lambda0": gs.lambda0, "residual": gs.residual, "method": gs.method,
               "meta": _meta(cfg, t0, 1)}, args.out)


def cmd_phi(args, cfg, t0):
    q = read_potential(args.potential, args.row)
    q_tilde = q - q.mean()
    d = phi_of(q_tilde, args.method, _modes_for(q, cfg), cfg.ode_steps)
    emit_json({"phi": d.phi, "lambda0_tilde": d.lambda0_tilde, "residual": d.residual,
               "phi_logderiv": d.phi_logderiv, "q0": float(q.mean()), "method": d.method,
               "meta": _meta(cfg, t0, 1)}, args.out)


def _lambdas_from(args, cfg):
    if args.lambda_min is not None or args.lambda_max is not None:
        if args.lambda_min is None or args.lambda_max is None:
            raise ConfigError("give both --lambda-min and --lambda-max")
        return lambda_grid(float(args.lambda_min), float(args.lambda_max), args.step)
    if cfg.lambdas:
        return [float(v) for v in cfg.lambdas]
    return lambda_grid(-8.0, 6.0, args.step)


def cmd_density(args, cfg):
    lambdas = _lambdas_from(args, cfg)
    cfg = cfg.replace(n_samples=args.n or cfg.n_samples, lambdas=lambdas,
                      tilt=args.tilt or cfg.tilt, theta=args.theta)
    kernel = cfg.make_kernel()
    if args.method == "kde":
        est = estimate_density_direct(kernel, lambdas, cfg.n_samples, args.bandwidth, cfg.seed,
                                      cfg.galerkin_modes, args.threads)
    else:
        est = estimate_density(kernel, lambdas, cfg.n_samples, None if cfg.tilt == "none" else cfg.tilt,
                               cfg.seed, cfg.galerkin_modes, args.threads, cfg.theta)
    rows = zip(est.lambdas, est.f_hat, est.stderr, est.n_eff, est.tilt_theta)
    write_csv(args.out, cfg, DENSITY_COLUMNS, rows)
    return cfg, {"n_failed": est.n_failed, "method": args.method}


def cmd_dist(args, cfg, t0):
    lambdas = parse_floats(args.lambda_, "--lambda")
    cfg = cfg.replace(n_samples=args.n or cfg.n_samples, lambdas=lambdas)
    kernel = cfg.make_kernel()
    if args.method == "thm23":
        est = estimate_distribution_thm23(kernel, lambdas, cfg.n_samples, seed=cfg.seed,
                                          ode_steps=cfg.ode_steps, threads=args.threads)
    else:
        est = estimate_distribution_direct(kernel, lambdas, cfg.n_samples, cfg.seed, cfg.galerkin_modes,
                                           args.threads)
    out = {
        "method": est.method,
        "lambda": [float(v) for v in est.lambdas],
        "p_hat": [float(v) for v in est.p_hat],
        "stderr": [float(v) for v in est.stderr],
        "n_failed": est.n_failed,
        "extra": {k: float(v) for k, v in est.extra.items()},
        "meta": _meta(cfg, t0),
    }
    emit_json(out, args.out)


def load_density_csv(path):
    """Rebuild a DensityEstimate from a ``hill-gse density`` CSV."""
    comments, names, data = read_csv_with_header(path)
    if names is None or tuple(names) != DENSITY_COLUMNS:
        raise ConfigError(f"{path}: expected columns {','.join(DENSITY_COLUMNS)}")
    cfg_line = [c for c in comments if c.startswith("# config: ")]
    if not cfg_line:
        raise ConfigError(f"{path}: missing '# config:' header")
    cfg = RunConfig.from_dict(json.loads(cfg_line[0][len("# config: "):]))
    kernel = cfg.make_kernel()
    lam, f, se, ne, th = data.T
    return DensityEstimate(lam, f, se, ne, th, cfg.n_samples, cfg.seed, kernel.sigma0_sq, kernel.k0), cfg


def cmd_tailfit(args, t0):
    est, cfg = load_density_csv(args.input)
    window = parse_window(args.window) if args.window else ((3.0, 6.0) if args.side == "right" else (-8.0, -4.0))
    fit = fit_tail_rate(est, args.side, window)
    emit_json({"rate_hat": fit.rate_hat, "target": fit.target, "rel_err": fit.rel_err, "side": fit.side,
               "window": list(fit.window), "n_points": fit.n_points, "intercept": fit.intercept,
               "meta": _meta(cfg, t0)}, args.out)


def cmd_variational(args, cfg):
    lambdas = parse_floats(args.lambdas, "--lambdas") if args.lambdas else [float(v) for v in (cfg.lambdas or [])]
    if not lambdas:
        raise ConfigError("no λ values: pass --lambdas or set 'lambdas' in the config")
    cfg = cfg.replace(lambdas=lambdas)
    kernel = cfg.make_kernel()
    tol = float(cfg.tolerances.get("variational", 1e-9))
    rows, extra = [], {"shape_error": [], "residuals": []}
    if args.dump_qopt:
        os.makedirs(args.dump_qopt, exist_ok=True)
    for lam in lambdas:
        if args.multistart > 1:
            r, _ = multistart(kernel, lam, n_starts=args.multistart, seed=cfg.seed, tol=tol)
        else:
            r = solve_euler_lagrange(kernel, lam, tol=tol)
        rows.append((lam, r.J_over_lambda2, 1.0 / (2.0 * kernel.k0), r.residuals["eigenvalue"], r.iterations))
        extra["shape_error"].append(r.shape_error(kernel))
        extra["residuals"].append(r.residuals)
        if args.dump_qopt:
            name = os.path.join(args.dump_qopt, f"qopt_lambda_{lam:g}.csv")
            write_csv(name, cfg, ("x", "q_opt", "a_opt", "psi"), zip(kernel.x, r.q_opt, r.a_opt, r.psi))
    write_csv(args.out, cfg, RATE_COLUMNS, rows)
    return cfg, extra


def cmd_verify(args, cfg):
    kernel = cfg.make_kernel()
    results = run_all(kernel, cfg.seed, cfg.galerkin_modes, cfg.ode_steps, scale=args.scale)
    print(f"{'property':<28} {'n':>6} {'viol':>6} {'worst':>12} {'bound':>10}  status")
    for r in results:
        print(r.row())
    ok = all(r.passed for r in results)
    print("verify: all properties pass" if ok else "verify: FAILED")
    return 0 if ok else 3


# ---------------------------------------------------------------------------


def build_parser():
    p = _Parser(prog="hill-gse", description="Ground-state energy statistics for Hill operators with Gaussian potentials.")
    p.add_argument("--version", action="version", version=f"hill-gse {__version__}")
    common = _Parser(add_help=False)
    common.add_argument("--config", default="default", help="JSON run config or 'default'")
    common.add_argument("--seed", type=int, default=None, help="overrides config and $HILL_GSE_SEED")
    common.add_argument("--threads", type=int, default=1, help="worker threads (never changes results)")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("sample", parents=[common], help="draw potentials")
    s.add_argument("--n", type=int, default=None)
    s.add_argument("--stream", type=int, default=0)
    s.add_argument("--out", default="-")

    for name, helptext in (("eig", "ground state of a potential"), ("phi", "Φ of a centred potential")):
        s = sub.add_parser(name, parents=[common], help=helptext)
        s.add_argument("--potential", required=True)
        s.add_argument("--row", type=int, default=0, help="sample index in a multi-row file")
        s.add_argument("--method", choices=("galerkin", "discriminant"),
                       default="galerkin" if name == "eig" else "discriminant")
        s.add_argument("--out", default="-")

    s = sub.add_parser("density", parents=[common], help="density of Λ₀ on a λ grid")
    s.add_argument("--lambda-min", type=float, default=None)
    s.add_argument("--lambda-max", type=float, default=None)
    s.add_argument("--step", type=float, default=0.5)
    s.add_argument("--n", type=int, default=None)
    s.add_argument("--tilt", choices=("none", "auto"), default=None)
    s.add_argument("--theta", type=float, default=None)
    s.add_argument("--method", choices=("formula", "kde"), default="formula")
    s.add_argument("--bandwidth", type=float, default=None)
    s.add_argument("--out", default="-")

    s = sub.add_parser("dist", parents=[common], help="P(Λ₀ > λ)")
    s.add_argument("--lambda", dest="lambda_", required=True, help="one value or a comma list")
    s.add_argument("--n", type=int, default=None)
    s.add_argument("--method", choices=("thm23", "direct"), default="thm23")
    s.add_argument("--out", default="-")

    s = sub.add_parser("tailfit", help="fit -log f(λ) ≈ rλ² over a window of a density CSV")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--side", choices=("left", "right"), required=True)
    s.add_argument("--window", default=None, help="a:b (default 3:6 right, -8:-4 left)")
    s.add_argument("--out", default="-")

    s = sub.add_parser("variational", parents=[common], help="minimal-cost potentials and J/λ²")
    s.add_argument("--lambdas", default=None, help='comma list, e.g. "-10,-20,-50"')
    s.add_argument("--multistart", type=int, default=1)
    s.add_argument("--dump-qopt", default=None, help="directory for per-λ minimizer CSVs")
    s.add_argument("--out", default="-")

    s = sub.add_parser("verify", parents=[common], help="run the property suite")
    s.add_argument("--scale", type=float, default=1.0, help="fraction of the default sample counts")
    return p


def _join_signed_values(argv):
    out, i = [], 0
    while i < len(argv):
        tok = argv[i]
        if tok in _SIGNED_VALUE_FLAGS and i + 1 < len(argv):
            out.append(f"{tok}={argv[i + 1]}")
            i += 2
        else:
            out.append(tok)
            i += 1
    return out


def _dispatch(args):
    t0 = time.perf_counter()
    if args.command == "tailfit":
        cmd_tailfit(args, t0)
        return 0
    if args.threads < 1:
        raise ConfigError("--threads must be >= 1")
    cfg = apply_seed_override(load_config(args.config), args.seed)
    if args.command == "eig":
        cmd_eig(args, cfg, t0)
        return 0
    if args.command == "phi":
        cmd_phi(args, cfg, t0)
        return 0
    if args.command == "dist":
        cmd_dist(args, cfg, t0)
        return 0
    if args.command == "verify":
        return cmd_verify(args, cfg)
    handler = {"sample": cmd_sample, "density": cmd_density, "variational": cmd_variational}[args.command]
    cfg, extra = handler(args, cfg)
    write_run_record(args.out, cfg, args.command, time.perf_counter() - t0,
                     {"threads": args.threads, "extra": extra})
    return 0


def run(argv=None):
    """Parse ``argv`` and execute; returns the process exit code."""
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = build_parser().parse_args(_join_signed_values(argv))
        return _dispatch(args)
    except NumericalError as exc:
        print(f"hill-gse: numerical failure in {exc.module}: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, ValueError, OSError) as exc:
        print(f"hill-gse: configuration error: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
