"""Command-line entry point: `ssvcert <command> ...` or `python -m ssvcert`.

Exit codes: 0 ok, 2 usage error, 3 size cap exceeded.
"""
import argparse
import csv
import io
import json
import sys
from math import sqrt

import numpy as np

from . import __version__
from .errors import SizeError

EXIT_OK, EXIT_USAGE, EXIT_SIZE = 0, 2, 3


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def report(command, params, result):
    doc = {"command": command, "version": __version__, "params": params, "result": result}
    return json.dumps(_jsonable(doc), sort_keys=True, indent=1) + "\n"


def _csv(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _emit(text, out):
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _load(path):
    from .datasets import load
    return load(path).X


# ---------------------------------------------------------------- commands

def cmd_gen(a):
    from .datasets import dumps, generate
    extra = {}
    if a.dist == "ngca-planted":
        extra = {k: v for k, v in (("eta", a.inst_eta), ("alpha", a.inst_alpha)) if v is not None}
    ds = generate(a.dist, a.n, a.d, seed=a.seed, df=a.df, instance=a.instance, **extra)
    _emit(dumps(ds), a.out)


def cmd_certify(a):
    from .certify import certify
    X = _load(a.inp)
    c = certify(X, a.eta, a.method, p=a.p)
    params = {"method": a.method, "p": a.p, "eta": a.eta, "n": X.shape[0], "d": X.shape[1]}
    if a.report == "csv":
        _emit(_csv(["method", "eta", "p", "n", "d", "value", "ssv"],
                   [[a.method, a.eta, a.p, X.shape[0], X.shape[1], repr(c.value), repr(c.ssv)]]), a.out)
    else:
        _emit(report("certify", params, c.to_dict()), a.out)


def cmd_oracle(a):
    from .certify import brute_force_ssv
    X = _load(a.inp)
    v = brute_force_ssv(X, a.eta)
    _emit(report("oracle", {"eta": a.eta, "n": X.shape[0], "d": X.shape[1]},
                 {"value": v, "ssv": sqrt(max(v, 0.0))}), a.out)


def cmd_distortion(a):
    from .apps import certify_distortion
    X = _load(a.inp)
    c = certify_distortion(X, p=a.p, methods=tuple(a.methods.split(",")))
    _emit(report("distortion", {"p": a.p, "n": X.shape[0], "d": X.shape[1], "methods": a.methods},
                 c.to_dict()), a.out)


def cmd_two_to_p(a):
    from .apps import certify_two_to_p
    X = _load(a.inp)
    c = certify_two_to_p(X, a.p, methods=tuple(a.methods.split(",")))
    _emit(report("two-to-p", {"p": a.p, "n": X.shape[0], "d": X.shape[1], "methods": a.methods},
                 c.to_dict()), a.out)


def cmd_sparse_pca(a):
    from .apps import sparse_pca_certify
    X = _load(a.inp)
    r = sparse_pca_certify(X, a.eta, a.beta)
    _emit(report("sparse-pca", {"eta": a.eta, "beta": a.beta, "N": X.shape[0], "dim": X.shape[1]}, r), a.out)


def _robust_rows(a, mean):
    from .robust import (Truth, covariance_aware_mean, generate_and_corrupt,
                         robust_covariance, sandwich, second_moment)
    rows = []
    truth = Truth(np.zeros(a.d), np.eye(a.d))
    for seed in range(a.seed, a.seed + a.seeds):
        ds = generate_and_corrupt(a.n, a.d, truth, a.eta, a.adversary, seed=seed)
        if mean:
            r = covariance_aware_mean(ds.points, a.eta, a.alpha, truth=truth, cov_mode=a.mode, seed=seed)
            naive = float(np.linalg.norm(ds.points.mean(axis=0)))
            rows.append([seed, a.n, a.d, a.eta, a.alpha, a.mode, a.adversary,
                         r.metrics["mahalanobis"], r.metrics["euclidean"], naive])
        else:
            r = robust_covariance(ds.points, a.eta, a.alpha, mode=a.mode, truth_cov=truth.cov)
            lo, hi = sandwich(second_moment(ds.points), truth.cov)
            rows.append([seed, a.n, a.d, a.eta, a.alpha, a.mode, a.adversary,
                         r.metrics["eig_min"], r.metrics["eig_max"], lo, hi])
    return rows


def cmd_robust(a, mean):
    rows = _robust_rows(a, mean)
    base = ["seed", "n", "d", "eta", "alpha", "mode", "adversary"]
    if mean:
        header = base + ["mahalanobis", "euclidean", "naive_euclidean"]
        errs = np.array([r[7] for r in rows])
        summary = {"seeds": len(rows), "median_mahalanobis": float(np.median(errs)),
                   "max_mahalanobis": float(errs.max()),
                   "frac_within_5_sqrt_eta": float(np.mean(errs <= 5 * sqrt(a.eta)))}
    else:
        header = base + ["eig_min", "eig_max", "naive_eig_min", "naive_eig_max"]
        ok = [0.7 <= r[7] and r[8] <= 1.3 for r in rows]
        naive_ok = [0.7 <= r[9] and r[10] <= 1.3 for r in rows]
        summary = {"seeds": len(rows), "frac_within_0.7_1.3": float(np.mean(ok)),
                   "naive_frac_within_0.7_1.3": float(np.mean(naive_ok))}
    if a.report == "csv":
        _emit(_csv(header, rows), a.out)
    else:
        params = {k: getattr(a, k) for k in ("n", "d", "eta", "alpha", "mode", "adversary", "seeds", "seed")}
        _emit(report("robust-mean" if mean else "robust-cov", params,
                     {"summary": summary, "rows": [dict(zip(header, r)) for r in rows]}), a.out)


def _instance_params(a):
    keys = {"cov": ("eta", "alpha"), "mean": ("eta", "sigma"), "subg": ("eta", "alpha", "i_star"), "null": ()}
    return {k: getattr(a, k) for k in keys[a.kind] if getattr(a, k) is not None}


def cmd_lowdeg(a):
    from .lowdeg import advantage_bound, hermite_profile, make_instance
    inst = make_instance(a.kind, **_instance_params(a))
    if a.action == "instance":
        prof = hermite_profile(inst, a.D)
        _emit(report("lowdeg-instance", {"kind": a.kind, **_instance_params(a), "D": a.D},
                     {"instance": inst.to_dict(), "check": inst.check(), "profile": prof.tolist()}), a.out)
        return
    prof = hermite_profile(inst, a.D)
    if a.sweep_n:
        ns = [float(x) for x in a.sweep_n.split(",")]
        rows = [[a.kind, n, a.d, a.D, repr(advantage_bound(prof, n, a.d, a.D).value)] for n in ns]
        _emit(_csv(["kind", "n", "d", "D", "value"], rows), a.out)
        return
    r = advantage_bound(prof, a.n, a.d, a.D)
    _emit(report("lowdeg-advantage", {"kind": a.kind, **_instance_params(a), "n": a.n, "d": a.d, "D": a.D},
                 r.to_dict()), a.out)


def cmd_sweep(a):
    """Threshold curve: for each eta, the smallest n/d^2 on the grid at which the
    certified resilience of Gaussian data is at most target * sqrt(eta)."""
    from .certify import certify
    etas = [float(x) for x in a.etas.split(",")]
    ratios = [float(x) for x in a.ratios.split(",")]
    rows = []
    for eta in etas:
        found = ""
        for ratio in ratios:
            n = max(int(round(ratio * a.d ** 2)), 2)
            vals = []
            for s in range(a.seeds):
                X = np.random.default_rng(a.seed + s).standard_normal((n, a.d))
                vals.append(certify(X, eta, a.method, p=a.p).value)
            mean = float(np.mean(vals))
            if a.detail:
                rows.append([eta, n, a.d, ratio, a.method, repr(mean), repr(sqrt(mean)), mean <= a.target * sqrt(eta)])
            if mean <= a.target * sqrt(eta) and found == "":
                found = ratio
                if not a.detail:
                    break
        if not a.detail:
            rows.append([eta, a.d, a.method, a.target, found])
    if a.detail:
        header = ["eta", "n", "d", "n_over_d2", "method", "resilience", "ssv", "refuted"]
    else:
        header = ["eta", "d", "method", "target", "min_n_over_d2"]
    _emit(_csv(header, rows), a.out)


# ---------------------------------------------------------------- parser

def build_parser():
    p = argparse.ArgumentParser(prog="ssvcert", description="Sparse singular value and resilience certificates.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, **kw):
        sp = sub.add_parser(name, **kw)
        sp.set_defaults(func=func)
        sp.add_argument("--out", default=None, help="write here instead of stdout")
        return sp

    g = add("gen", cmd_gen, help="sample a dataset file")
    g.add_argument("--dist", default="gaussian", choices=["gaussian", "rademacher", "scaled-t", "ngca-planted"])
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--d", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--df", type=float, default=5.0)
    g.add_argument("--instance", default="cov", choices=["cov", "mean", "subg", "null"])
    g.add_argument("--inst-eta", type=float, default=None)
    g.add_argument("--inst-alpha", type=float, default=None)

    c = add("certify", cmd_certify, help="certify resilience of a dataset")
    c.add_argument("--method", default="schatten", choices=["trivial", "pairwise", "m4", "schatten"])
    c.add_argument("--p", type=int, default=4)
    c.add_argument("--eta", type=float, required=True)
    c.add_argument("--in", dest="inp", required=True)
    c.add_argument("--report", default="json", choices=["json", "csv"])

    o = add("oracle", cmd_oracle, help="exact resilience by enumeration")
    o.add_argument("--in", dest="inp", required=True)
    o.add_argument("--eta", type=float, required=True)

    dd = add("distortion", cmd_distortion, help="certify l2/l1 distortion of the column span")
    dd.add_argument("--in", dest="inp", required=True)
    dd.add_argument("--p", type=int, default=4)
    dd.add_argument("--methods", default="pairwise,m4,schatten")

    t = add("two-to-p", cmd_two_to_p, help="certify the 2->p norm")
    t.add_argument("--in", dest="inp", required=True)
    t.add_argument("--p", type=float, required=True)
    t.add_argument("--methods", default="pairwise,m4")

    s = add("sparse-pca", cmd_sparse_pca, help="certify absence of a sparse spike")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--eta", type=float, required=True)
    s.add_argument("--beta", type=float, required=True)

    for name, mean in (("robust-cov", False), ("robust-mean", True)):
        r = add(name, lambda a, m=mean: cmd_robust(a, m), help="seeded robust estimation benchmark")
        r.add_argument("--n", type=int, default=4000)
        r.add_argument("--d", type=int, default=4)
        r.add_argument("--eta", type=float, default=0.05)
        r.add_argument("--alpha", type=float, default=0.0)
        r.add_argument("--mode", default="cert_filter", choices=["cert_filter", "sos_full"])
        r.add_argument("--adversary", default="mean_shift", choices=["none", "mean_shift", "cov_spike", "ngca_plant"])
        r.add_argument("--seeds", type=int, default=5)
        r.add_argument("--seed", type=int, default=0, help="first seed")
        r.add_argument("--report", default="json", choices=["json", "csv"])

    lw = add("lowdeg", cmd_lowdeg, help="low-degree advantage bounds and hard instances")
    lw.add_argument("action", choices=["advantage", "instance"])
    lw.add_argument("--kind", default="cov", choices=["cov", "mean", "subg", "null"])
    lw.add_argument("--eta", type=float, default=None)
    lw.add_argument("--alpha", type=float, default=None)
    lw.add_argument("--sigma", type=float, default=None)
    lw.add_argument("--i-star", dest="i_star", type=int, default=None)
    lw.add_argument("--n", type=float, default=1000.0)
    lw.add_argument("--d", type=int, default=50)
    lw.add_argument("--D", type=int, default=8)
    lw.add_argument("--sweep-n", default=None, help="comma-separated n values; emits CSV")

    sw = add("sweep", cmd_sweep, help="threshold curve of n/d^2 against eta (CSV)")
    sw.add_argument("--d", type=int, default=4)
    sw.add_argument("--etas", default="0.05,0.1,0.2,0.3")
    sw.add_argument("--ratios", default="1,2,4,8,16,32")
    sw.add_argument("--method", default="m4", choices=["trivial", "pairwise", "m4", "schatten"])
    sw.add_argument("--p", type=int, default=4)
    sw.add_argument("--target", type=float, default=2.0, help="refute when resilience <= target*sqrt(eta)")
    sw.add_argument("--seeds", type=int, default=3)
    sw.add_argument("--seed", type=int, default=0)
    sw.add_argument("--detail", action="store_true", help="emit every grid point")
    return p


def run_cli(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        args.func(args)
    except SizeError as exc:
        sys.stderr.write(f"size cap exceeded: {exc}\n")
        return EXIT_SIZE
    except (ValueError, OSError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_USAGE
    return EXIT_OK


def main():
    sys.exit(run_cli())
