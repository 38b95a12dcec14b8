"""Command line entry point (``rtbandit <subcommand>``)."""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .design import compute_design
from .diffusion import DiffusionParams, moments, sample_outcomes
from .estimation import QueryDataset, load_dataset, save_dataset
from .gse import DiffusionFeedback, GseConfig, SignFeedback, estimate, run_gse
from .harness import ConfigError, load_config, run_sweep
from .instances import gen_sphere_instance, instance_to_dict, load_instance, save_instance
from .theory import weight_curves_csv


def _out(args):
    if getattr(args, "out", None):
        return open(args.out, "w", newline="")
    return sys.stdout


def cmd_moments(args):
    m = moments(args.u, args.a)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["u", "a", "p_choice_pos", "mean_choice", "var_choice", "mean_time", "var_time"])
    w.writerow([args.u, args.a] + [repr(v) for v in (m.p_choice_pos, m.mean_choice, m.var_choice,
                                                      m.mean_time, m.var_time)])
    return 0


def cmd_sample(args):
    rng = np.random.default_rng(args.seed)
    if args.instance:
        inst = load_instance(args.instance)
        params, queries = inst.params, inst.queries
        counts = np.full(len(queries), args.n)
    else:
        params = DiffusionParams([args.u], args.a, args.t_nondec)
        queries, counts = np.array([[1.0]]), np.array([args.n])
    if args.dataset:
        idx, cs, dts, rts = [], [], [], []
        for q, x in enumerate(queries):
            c, dt, rt = sample_outcomes(params, x, int(counts[q]), rng)
            idx.append(np.full(c.size, q))
            cs.append(c), dts.append(dt), rts.append(rt)
        data = QueryDataset.from_samples(queries, np.concatenate(idx), np.concatenate(cs),
                                         np.concatenate(dts), np.concatenate(rts))
        csv_path, feat = save_dataset(data, args.dataset)
        print(f"wrote {csv_path} and {feat}", file=sys.stderr)
        return 0
    fh = _out(args)
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["query_id", "choice", "decision_time", "response_time"])
    for q, x in enumerate(queries):
        c, dt, rt = sample_outcomes(params, x, int(counts[q]), rng)
        for row in zip(c, dt, rt):
            w.writerow([q, int(row[0]), repr(float(row[1])), repr(float(row[2]))])
    if fh is not sys.stdout:
        fh.close()
    return 0


def cmd_estimate(args):
    data = load_dataset(args.data, args.features)
    est = estimate(args.estimator, data)
    print(json.dumps({"estimator": args.estimator, "scale": est.scale.value,
                      "theta_hat": [float(v) for v in est.theta_hat]}))
    return 0


def cmd_design(args):
    inst = load_instance(args.instance)
    theta_ref = None
    if args.kind == "hard":
        theta_ref = (np.array(json.loads(args.theta_ref), dtype=float) if args.theta_ref
                     else inst.params.theta_star)
    lam = compute_design(args.kind, inst.arms, inst.queries, theta_ref=theta_ref)
    fh = _out(args)
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["query_id", "weight"])
    for i, v in enumerate(lam.weights):
        w.writerow([i, repr(float(v))])
    if fh is not sys.stdout:
        fh.close()
    return 0


def cmd_run(args):
    inst = load_instance(args.instance)
    cfg = GseConfig(args.budget, args.eta, args.design, args.estimator, args.buffer, args.a_prior)
    fb = SignFeedback(inst.params) if args.feedback == "sign" else DiffusionFeedback(inst.params)
    res = run_gse(inst, cfg, fb, np.random.default_rng(args.seed))
    doc = res.to_dict()
    doc["best_arm"] = inst.best_arm
    print(json.dumps(doc, indent=1))
    return 0


def cmd_sweep(args):
    config = load_config(args.config)
    if args.seed is not None:
        config = type(config)(**{**config.__dict__, "seed": args.seed})
    out = run_sweep(config, out_dir=args.out_dir, threads=args.threads)
    print(f"{len(out.results)} cells, {out.failed} failed replications -> {args.out_dir}",
          file=sys.stderr)
    return 0 if out.failed == 0 else 1


def cmd_theory(args):
    text = weight_curves_csv()
    if args.out_dir:
        Path(args.out_dir).mkdir(parents=True, exist_ok=True)
        (Path(args.out_dir) / "weight_curves.csv").write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_gen_instance(args):
    inst = gen_sphere_instance(args.d, args.k, args.c_z, np.random.default_rng(args.seed),
                               args.a, args.t_nondec, args.query_kind)
    if args.out:
        save_instance(inst, args.out)
    else:
        print(json.dumps(instance_to_dict(inst), indent=1))
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="rtbandit", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("moments", help="analytic choice and decision-time moments")
    s.add_argument("--u", type=float, required=True)
    s.add_argument("--a", type=float, required=True)
    s.set_defaults(func=cmd_moments)

    s = sub.add_parser("sample", help="draw choices and response times")
    s.add_argument("--u", type=float, default=1.0)
    s.add_argument("--a", type=float, default=1.0)
    s.add_argument("--t-nondec", type=float, default=0.0)
    s.add_argument("--instance", help="sample every query of an instance file instead")
    s.add_argument("--n", type=int, default=1000, help="draws per query")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.add_argument("--dataset", help="write aggregated statistics (CSV + features sidecar) here")
    s.set_defaults(func=cmd_sample)

    s = sub.add_parser("estimate", help="estimate the preference vector from a dataset CSV")
    s.add_argument("data")
    s.add_argument("--features")
    s.add_argument("--estimator", default="chdt",
                   choices=["chdt", "chdt_rt", "ch_mle", "ch_logit", "chdt_logit"])
    s.set_defaults(func=cmd_estimate)

    s = sub.add_parser("design", help="Frank-Wolfe design weights for an instance")
    s.add_argument("instance")
    s.add_argument("--kind", default="transductive", choices=["transductive", "hard"])
    s.add_argument("--theta-ref", help="JSON list; defaults to the instance's true vector")
    s.add_argument("--out")
    s.set_defaults(func=cmd_design)

    s = sub.add_parser("run", help="one GSE run on an instance file")
    s.add_argument("instance")
    s.add_argument("--budget", type=float, required=True)
    s.add_argument("--eta", type=int, default=2)
    s.add_argument("--design", default="transductive", choices=["transductive", "hard"])
    s.add_argument("--estimator", default="chdt",
                   choices=["chdt", "chdt_rt", "ch_mle", "ch_logit", "chdt_logit"])
    s.add_argument("--buffer", type=float)
    s.add_argument("--a-prior", type=float, default=1.5)
    s.add_argument("--feedback", default="diffusion", choices=["diffusion", "sign"])
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="replicated experiment sweep from a JSON/TOML config")
    s.add_argument("config")
    s.add_argument("--seed", type=int, help="override the config's master seed")
    s.add_argument("--threads", type=int, default=1, help="worker processes")
    s.add_argument("--out-dir", default="results")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("theory", help="analytic weight tables")
    tsub = s.add_subparsers(dest="theory_command", required=True)
    t = tsub.add_parser("curves", help="weight curves CSV over u for a in {0.5, 1.5}")
    t.add_argument("--out-dir")
    t.set_defaults(func=cmd_theory)

    s = sub.add_parser("gen-instance", help="draw a sphere instance")
    s.add_argument("--d", type=int, default=5)
    s.add_argument("--k", type=int, default=10)
    s.add_argument("--c-z", type=float, default=1.0)
    s.add_argument("--a", type=float, default=1.0)
    s.add_argument("--t-nondec", type=float, default=0.0)
    s.add_argument("--query-kind", default="all_pairs", choices=["all_pairs", "reference"])
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_gen_instance)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"rtbandit: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
