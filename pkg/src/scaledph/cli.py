"""Command-line interface: ``scaledph fit|approximate|simulate|eval|tailclass|taildep``.

Exit codes: 0 success, 1 usage or validation error, 2 fit stopped at the
iteration cap without converging.
"""

import argparse
import json
import sys

import numpy as np

from . import io
from .em import (QuadratureConfig, approximate_density, em_corr_cph, em_mml, em_mv_siph,
                 em_siph, log_grid)
from .errors import ScaledPHError
from .multivar import (CorrelatedGammaModel, SharedModel, correlated_density, correlated_sample,
                       correlated_survival, empirical_tail_dependence, shared_density,
                       shared_sample, shared_survival, upper_tail_dependence)
from .siph import SiphModel, siph_density, siph_sample, siph_survival, tail_class

EXIT_OK, EXIT_USAGE, EXIT_NOCONV = 0, 1, 2


class CLIError(Exception):
    pass


def _fmt(v):
    return f"{v:.7g}"


# ---------------------------------------------------------------------------
# fit

def _dims(text):
    try:
        dims = [int(v) for v in str(text).split(",")]
    except ValueError:
        raise CLIError(f"--p must be an integer or a comma-separated list, got {text!r}") from None
    if any(p < 1 for p in dims):
        raise CLIError("--p entries must be positive")
    return dims


def cmd_fit(args):
    cols = io.read_dataset(args.data)
    cfg = QuadratureConfig(n_theta=args.quad_nodes)
    common = dict(cfg=cfg, seed=args.seed, tol=args.tol, max_iter=args.max_iter,
                  structure=args.structure)
    dims = _dims(args.p)
    if args.kind in ("siph", "mml"):
        if len(dims) != 1:
            raise CLIError(f"--kind {args.kind} takes a single --p")
        obs = io.univariate_data(cols)
        if args.kind == "mml":
            rep = em_mml(obs, dims[0], **common)
        else:
            rep = em_siph(obs, dims[0], args.intensity, args.scaling, **common)
    elif args.kind == "shared":
        Y = io.multivariate_data(cols)
        if len(dims) == 1:
            dims = dims * Y.shape[1]
        lams = args.intensity.split(",")
        if len(lams) == 1:
            lams = lams * Y.shape[1]
        rep = em_mv_siph(Y, dims, lams, args.scaling, **common)
    else:
        Y = io.multivariate_data(cols)
        if Y.shape[1] != 2:
            raise CLIError("--kind correlated needs columns y1, y2")
        if len(dims) == 1:
            dims = dims * 2
        if args.intensity != "constant" or args.scaling != "gamma":
            raise CLIError("--kind correlated fits constant intensities with gamma scaling only")
        rep = em_corr_cph(Y, dims, **common)
    return _emit_fit(rep, args)


def _emit_fit(rep, args):
    model_doc = io.model_to_dict(rep.model)
    report = rep.to_dict()
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(model_doc, fh, indent=2)
            fh.write("\n")
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2)
            fh.write("\n")
    if not args.out and not args.report:
        json.dump({"model": model_doc, "report": report}, sys.stdout, indent=2)
        sys.stdout.write("\n")
    print(f"loglik={_fmt(rep.loglik)} iterations={rep.iterations} converged={rep.converged}",
          file=sys.stderr)
    return EXIT_OK if rep.converged else EXIT_NOCONV


def cmd_approximate(args):
    target = io.load_model(args.target)
    if not isinstance(target, SiphModel) or target.q:
        raise CLIError("the target must be a univariate model without covariates")
    try:
        lo, hi, n = args.grid.split(":")
        lo, hi, n = float(lo), float(hi), int(n)
    except ValueError:
        raise CLIError(f"--grid must be min:max:steps, got {args.grid!r}") from None
    if not 0 < lo < hi or n < 2:
        raise CLIError("--grid needs 0 < min < max and steps >= 2")
    dims = _dims(args.p)
    if len(dims) != 1:
        raise CLIError("--p must be a single integer")
    rep = approximate_density(lambda y: siph_density(target, y), log_grid(lo, hi, n), dims[0],
                              args.intensity, args.scaling, QuadratureConfig(n_theta=args.quad_nodes),
                              args.seed, structure=args.structure, tol=args.tol,
                              max_iter=args.max_iter)
    return _emit_fit(rep, args)


# ---------------------------------------------------------------------------
# simulate

def cmd_simulate(args):
    model = io.load_model(args.model)
    if args.n < 1:
        raise CLIError("--n must be positive")
    rng = np.random.default_rng(args.seed)
    if isinstance(model, SiphModel):
        x = None
        if model.q:
            if args.x is None:
                raise CLIError(f"the model has {model.q} covariates; pass one row with --x")
            x = np.array([float(v) for v in args.x.split(",")])
        data = siph_sample(model, x=x, size=args.n, rng=rng)[:, None]
        header = ["y"]
    elif isinstance(model, SharedModel):
        data = shared_sample(model, size=args.n, rng=rng)
        header = [f"y{i + 1}" for i in range(data.shape[1])]
    else:
        data = correlated_sample(model, size=args.n, rng=rng)
        header = ["y1", "y2"]
    out = open(args.out, "w", encoding="utf-8", newline="") if args.out else sys.stdout
    try:
        out.write(",".join(header) + "\n")
        for row in data:
            out.write(",".join(repr(float(v)) for v in row) + "\n")
    finally:
        if args.out:
            out.close()
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval

def quantile(model, u, tol=1e-10):
    """``y`` with ``S(y) = 1 - u`` by bisection."""
    if not 0 < u < 1:
        raise CLIError(f"quantile level must lie in (0, 1), got {u}")
    target = 1.0 - u
    hi = 1.0
    while siph_survival(model, hi) > target:
        hi *= 2.0
        if hi > 1e300:
            raise CLIError("quantile is beyond the floating-point range")
    lo = 0.0
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if siph_survival(model, mid) > target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _grid(text):
    try:
        a, b, n = text.split(":")
        a, b, n = float(a), float(b), int(n)
    except ValueError:
        raise CLIError(f"--grid must be min:max:steps, got {text!r}") from None
    if n < 1 or b < a:
        raise CLIError("--grid needs max >= min and steps >= 1")
    return np.linspace(a, b, n + 1) if n > 1 or b > a else np.array([a])


def _points(values):
    out = []
    for v in values:
        try:
            out.append([float(c) for c in v.split(",")])
        except ValueError:
            raise CLIError(f"cannot parse --at value {v!r}") from None
    return out


def cmd_eval(args):
    model = io.load_model(args.model)
    rows, header = [], None
    what = args.what
    if what.startswith("qq:"):
        if not isinstance(model, SiphModel):
            raise CLIError("qq output is available for univariate models only")
        y = np.sort(io.univariate_data(io.read_dataset(what[3:])).y)
        n = y.size
        header = ["theoretical", "empirical"]
        rows = [(quantile(model, (i + 0.5) / n), y[i]) for i in range(n)]
    elif what == "quantile":
        if not isinstance(model, SiphModel):
            raise CLIError("quantiles are available for univariate models only")
        if not args.at:
            raise CLIError("quantile needs --at levels")
        header = ["u", "y"]
        for (u,) in _points(args.at):
            q = quantile(model, u)
            rows.append((u, q))
    elif what in ("density", "survival", "both"):
        if isinstance(model, SiphModel):
            if args.grid:
                pts = [[v] for v in _grid(args.grid)]
            elif args.at:
                pts = _points(args.at)
            else:
                raise CLIError("give --grid or --at")
            header = ["y"]
            for p in pts:
                if len(p) != 1:
                    raise CLIError("univariate models take one coordinate per --at")
            ys = np.array([p[0] for p in pts])
            cols = [ys]
            if what in ("density", "both"):
                header.append("f")
                cols.append(np.atleast_1d(siph_density(model, ys)))
            if what in ("survival", "both"):
                header.append("S")
                cols.append(np.atleast_1d(siph_survival(model, ys)))
            rows = list(zip(*cols))
        else:
            if not args.at or args.grid:
                raise CLIError("multivariate models take --at y1,y2[,y3] points only")
            pts = _points(args.at)
            d = model.d if isinstance(model, SharedModel) else 2
            header = [f"y{i + 1}" for i in range(d)]
            if what in ("density", "both"):
                header.append("f")
            if what in ("survival", "both"):
                header.append("S")
            for p in pts:
                if len(p) != d:
                    raise CLIError(f"each --at point needs {d} coordinates")
                row = list(p)
                if isinstance(model, SharedModel):
                    if what in ("density", "both"):
                        row.append(shared_density(model, p))
                    if what in ("survival", "both"):
                        row.append(shared_survival(model, p))
                else:
                    if what in ("density", "both"):
                        row.append(correlated_density(model, *p))
                    if what in ("survival", "both"):
                        row.append(correlated_survival(model, *p))
                rows.append(row)
    else:
        raise CLIError(f"unknown --what {what!r}")
    out = open(args.out, "w", encoding="utf-8", newline="") if args.out else sys.stdout
    try:
        io.write_table(out, header, rows)
    finally:
        if args.out:
            out.close()
    return EXIT_OK


# ---------------------------------------------------------------------------
# tail class and tail dependence

def cmd_tailclass(args):
    model = io.load_model(args.model)
    if isinstance(model, SiphModel):
        print(tail_class(model.scaling, model.intensity, model.phase.T))
    elif isinstance(model, SharedModel):
        for i, (ph, lam) in enumerate(model.marginals):
            print(f"y{i + 1}: {tail_class(model.scaling, lam, ph.T)}")
    else:
        from .scaling import Gamma
        for i, (ph, lam) in enumerate((model.marginal1, model.marginal2)):
            k = model.kappa0 + (model.kappa1, model.kappa2)[i]
            print(f"y{i + 1}: {tail_class(Gamma(alpha=k), lam, ph.T)}")
    return EXIT_OK


def cmd_taildep(args):
    if (args.model is None) == (args.data is None):
        raise CLIError("give exactly one of a model file or --data")
    if args.model is not None:
        model = io.load_model(args.model)
        if isinstance(model, CorrelatedGammaModel) or not isinstance(model, SharedModel):
            raise CLIError("the closed form covers bivariate shared models only")
        print(f"{_fmt(upper_tail_dependence(model))} (formula)")
    else:
        Y = io.multivariate_data(io.read_dataset(args.data))
        if Y.shape[1] != 2:
            raise CLIError("tail dependence needs columns y1, y2")
        print(f"{_fmt(empirical_tail_dependence(Y, args.q))} (empirical, q={args.q:g})")
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser():
    ap = argparse.ArgumentParser(prog="scaledph", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", help="fit a model to a CSV dataset by EM")
    f.add_argument("data")
    f.add_argument("--kind", choices=io.KINDS, default="siph")
    f.add_argument("--p", default="2", help="phase dimension, or a comma-separated list")
    f.add_argument("--intensity", default="constant",
                   help="intensity family (comma-separated per coordinate for --kind shared)")
    f.add_argument("--scaling", default="gamma")
    f.add_argument("--structure", choices=("general", "coxian"), default="general")
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--tol", type=float, default=1e-7)
    f.add_argument("--max-iter", type=int, default=2000)
    f.add_argument("--quad-nodes", type=int, default=100)
    f.add_argument("--out", help="fitted model file (JSON)")
    f.add_argument("--report", help="run report file (JSON)")
    f.set_defaults(func=cmd_fit)

    a = sub.add_parser("approximate", help="fit a SIPH template to a known density")
    a.add_argument("target", help="model file holding the target law")
    a.add_argument("--grid", default="0.001:10:200", help="log-spaced nodes min:max:steps")
    a.add_argument("--p", default="3")
    a.add_argument("--intensity", default="weibull")
    a.add_argument("--scaling", default="stable")
    a.add_argument("--structure", choices=("general", "coxian"), default="general")
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--tol", type=float, default=1e-7)
    a.add_argument("--max-iter", type=int, default=2000)
    a.add_argument("--quad-nodes", type=int, default=100)
    a.add_argument("--out", help="fitted model file (JSON)")
    a.add_argument("--report", help="run report file (JSON)")
    a.set_defaults(func=cmd_approximate)

    s = sub.add_parser("simulate", help="draw a sample from a model file")
    s.add_argument("model")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--x", help="covariate row for models with covariates, e.g. 1,0")
    s.add_argument("--out")
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("eval", help="tabulate density, survival, quantiles or QQ pairs")
    e.add_argument("model")
    e.add_argument("--grid", help="min:max:steps")
    e.add_argument("--at", action="append", help="evaluation point (repeatable)")
    e.add_argument("--what", default="both",
                   help="density, survival, both, quantile or qq:DATA.csv")
    e.add_argument("--out")
    e.set_defaults(func=cmd_eval)

    t = sub.add_parser("tailclass", help="print the tail class of a model")
    t.add_argument("model")
    t.set_defaults(func=cmd_tailclass)

    d = sub.add_parser("taildep", help="upper tail dependence from a model or a dataset")
    d.add_argument("model", nargs="?")
    d.add_argument("--data")
    d.add_argument("--q", type=float, default=0.95)
    d.set_defaults(func=cmd_taildep)
    return ap


def main(argv=None):
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        return args.func(args)
    except (CLIError, ScaledPHError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
