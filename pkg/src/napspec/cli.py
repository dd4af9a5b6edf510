"""Command-line entry point: ``napspec <command> ...``.

Data goes to stdout (or ``--out``), diagnostics to stderr. Exit codes:
0 ok, 2 bad input, 3 the most refined NAP fails verification, 4 verifier Unknown.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import statistics
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import estimate, metrics, minimize, volume
from .nap import ONE, Nap, class_nap, coarsen_neuron, load_nap, save_nap
from .network import InputDomain, ModelError, load_dataset, load_model
from .oracle import SyntheticOracle, VerifierOracle, load_synthetic_oracle
from .verifier import Verdict, check_non_ambiguity, load_query, verify

EXIT_INPUT, EXIT_REFINED_FAILS, EXIT_UNKNOWN = 2, 3, 4


class InputError(Exception):
    pass


def _emit(doc, out: str | None) -> None:
    text = doc if isinstance(doc, str) else json.dumps(doc, indent=2) + "\n"
    if out:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _sub_seed(seed: int, *keys: int) -> int:
    return int(np.random.SeedSequence([seed, *keys]).generate_state(1, np.uint64)[0] >> 1)


def _class_rows_nap(net, data, c, delta):
    if not np.any(data.labels == c):
        raise InputError(f"class {c} has no rows in the dataset")
    return class_nap(net, data, c, delta)


def _domain(args, net):
    if getattr(args, "query", None):
        return load_query(args.query).domain
    return InputDomain.unit(net.input_dim)


def cmd_extract(args) -> int:
    net = load_model(args.model)
    data = load_dataset(args.data)
    P = _class_rows_nap(net, data, args.cls, args.delta)
    if args.out:
        save_nap(P, args.out)
    summary = {"nap": str(P), "signature": list(P.signature), "size": P.size, "counts": P.counts()}
    sys.stdout.write(json.dumps(summary) + "\n")
    return 0


def _reference(args, signature, net=None, data=None, c=None) -> Nap:
    if args.nap:
        return load_nap(args.nap)
    if net is not None and data is not None:
        return _class_rows_nap(net, data, c, args.delta)
    return Nap(signature, np.full(sum(signature), ONE, dtype=np.int8))


def _run_algo(algo, ref, oracle, *, seed, s, theta, eta, k, budget, theta_mode=None, keep_trace=True):
    if algo == "coarsen":
        return minimize.coarsen(ref, oracle, keep_trace=keep_trace)
    if algo == "stoch":
        adaptive = None if theta_mode is None else theta_mode == "adaptive"
        cfg = minimize.StochConfig(
            s=None if adaptive else s, theta=theta, eta=eta, adaptive=adaptive,
            max_calls=budget, seed=seed,
        )
        return minimize.stoch_coarsen(ref, oracle, cfg, keep_trace=keep_trace)
    if algo == "refine":
        return minimize.refine_search(oracle, ref.signature, ref, keep_trace=keep_trace)
    if algo == "sample-refine":
        if s is None:
            raise InputError("sample-refine needs --s")
        return minimize.sample_refine(
            oracle, ref.signature, ref, s=s, k=k, theta=theta, seed=seed,
            max_calls=budget, keep_trace=keep_trace,
        )
    raise InputError(f"unknown algorithm {algo}")


def cmd_minimize(args) -> int:
    if args.oracle:
        oracle = load_synthetic_oracle(args.oracle)
        ref = _reference(args, oracle.signature)
    else:
        if not (args.model and args.query):
            raise InputError("a verifier-backed run needs --model and --query (or use --oracle)")
        net = load_model(args.model)
        query = load_query(args.query)
        data = load_dataset(args.data) if args.data else None
        if data is None and not args.nap:
            raise InputError("need --data (to extract the class NAP) or --nap")
        ref = _reference(args, net.signature, net, data, query.target)
        oracle = VerifierOracle(net, query)
    rep = _run_algo(
        args.algo, ref, oracle, seed=args.seed, s=args.s, theta=args.theta, eta=args.eta,
        k=args.k, budget=args.budget, theta_mode=args.theta_mode,
    )
    doc = rep.to_json()
    doc["algo"] = args.algo
    doc["reference"] = str(ref)
    _emit(doc, args.out)
    if rep.terminated_by is minimize.Termination.REFINED_FAILS:
        print("the most refined NAP fails verification", file=sys.stderr)
        return EXIT_REFINED_FAILS
    return 0


def cmd_verify(args) -> int:
    net = load_model(args.model)
    P = load_nap(args.nap)
    query = load_query(args.query)
    res = verify(net, P, query, prune=not args.no_prune)
    doc = res.to_json()
    doc["nap"] = str(P)
    _emit(doc, args.out)
    return EXIT_UNKNOWN if res.verdict is Verdict.UNKNOWN else 0


def cmd_volume(args) -> int:
    net = load_model(args.model)
    P = load_nap(args.nap)
    data = load_dataset(args.data)
    domain = _domain(args, net)
    anchor_nap = load_nap(args.anchor_nap) if args.anchor_nap else P
    center = volume.pseudo_center(net, anchor_nap, data.X, seed=args.seed)
    _emit(volume.expand_orthotope(net, P, center, domain, args.tol).to_json(), args.out)
    return 0


def cmd_coverage(args) -> int:
    net = load_model(args.model)
    P = load_nap(args.nap)
    data = load_dataset(args.data)
    if not np.any(data.labels == args.cls):
        raise InputError(f"class {args.cls} has no rows in the dataset")
    _emit({"coverage": metrics.coverage(net, P, data, args.cls)}, args.out)
    return 0


def _attack_cfg(args) -> estimate.AttackConfig:
    return estimate.AttackConfig(
        eps=args.eps, alpha=args.alpha, iterations=args.iterations, restarts=args.restarts, seed=args.seed
    )


def cmd_estimate(args) -> int:
    net = load_model(args.model)
    data = load_dataset(args.data)
    P = load_nap(args.nap) if args.nap else _class_rows_nap(net, data, args.cls, args.delta)
    domain = _domain(args, net)
    if args.algo == "adv-prune":
        rows = data.X[data.labels == args.cls]
        sub = type(data)(rows, np.full(rows.shape[0], args.cls))
        found = estimate.opt_adv_prune(net, sub, P, _attack_cfg(args), domain, workers=args.workers)
    else:
        X = data.of_class(args.cls)
        if args.beta is None or args.gamma is None:
            dflt = estimate.default_gradient_config(net, X, args.cls)
        cfg = estimate.GradientSearchConfig(
            args.beta if args.beta is not None else dflt.beta,
            args.gamma if args.gamma is not None else dflt.gamma,
        )
        found = estimate.gradient_search(net, X, P, cfg, args.cls)
    _emit(found.to_json(), args.out)
    return 0


def cmd_metrics(args) -> int:
    net = load_model(args.model)
    data = load_dataset(args.data)
    P = load_nap(args.nap) if args.nap else _class_rows_nap(net, data, args.cls, args.delta)
    domain = _domain(args, net)
    classes = sorted(set(int(c) for c in data.labels))
    naps = [class_nap(net, data, c, args.delta) for c in classes]
    cls_rows = data.labels == args.cls
    sub = type(data)(data.X[cls_rows], data.labels[cls_rows])
    rej = metrics.adversarial_rejection(net, P, sub, _attack_cfg(args), args.trials, domain, args.workers)
    formal = []
    for i in range(len(naps)):
        for j in range(i + 1, len(naps)):
            r = check_non_ambiguity(net, naps[i], naps[j], domain)
            formal.append({"classes": [classes[i], classes[j]], "status": r.status})
    doc = {
        "nap": str(P),
        "coverage": metrics.coverage(net, P, data, args.cls),
        "rejection": rej.to_json(),
        "ambiguity": {
            "class_naps": {str(c): str(p) for c, p in zip(classes, naps)},
            "empirical_conflicts": metrics.non_ambiguity_empirical(net, naps, data) if len(naps) > 1 else 0,
            "formal": formal,
        },
    }
    _emit(doc, args.out)
    return 0


def _is_minimal(oracle, P: Nap) -> bool:
    if not oracle(P).passed:
        return False
    return all(not oracle(coarsen_neuron(P, i)).passed for i in P.refined())


def cmd_simulate(args) -> int:
    n, s = args.n, args.planted_size
    fixed = load_synthetic_oracle(args.clauses) if args.clauses else None
    if fixed is not None:
        n = sum(fixed.signature)
    elif s is None or not 0 <= s <= n:
        raise InputError("--planted-size must lie in [0, n] unless --clauses is given")
    if args.algo == "refine" and n > minimize.MAX_REFINE_NEURONS:
        raise InputError(f"refine is limited to n <= {minimize.MAX_REFINE_NEURONS}")

    def trial(t):
        if fixed is not None:
            oracle = fixed
        else:
            rng = np.random.default_rng([args.seed, t])
            oracle = SyntheticOracle((n,), [sorted(rng.choice(n, s, replace=False).tolist())])
        ref = Nap((n,), np.full(n, ONE, dtype=np.int8))
        target = args.s if args.s is not None else s
        rep = _run_algo(
            args.algo, ref, oracle, seed=_sub_seed(args.seed, t), s=target, theta=args.theta,
            eta=args.eta, k=args.k, budget=args.budget, theta_mode=args.theta_mode, keep_trace=False,
        )
        ok = rep.result is not None and _is_minimal(oracle, rep.result)
        return rep.calls, ok

    if args.workers > 1:
        with ThreadPoolExecutor(args.workers) as pool:
            results = list(pool.map(trial, range(args.trials)))
    else:
        results = [trial(t) for t in range(args.trials)]

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["algo", "n", "s", "trial", "calls", "success"])
    s_col = "" if s is None else s
    for t, (calls, ok) in enumerate(results):
        w.writerow([args.algo, n, s_col, t, calls, int(ok)])
    calls = [r[0] for r in results]
    rate = sum(r[1] for r in results) / max(len(results), 1)
    if calls:
        w.writerow([args.algo, n, s_col, "median", statistics.median(calls), f"{rate:.6f}"])
        w.writerow([args.algo, n, s_col, "mean", f"{statistics.fmean(calls):.6f}", f"{rate:.6f}"])
    _emit(buf.getvalue(), args.out)
    if s is not None and args.algo == "stoch" and args.theta_mode != "adaptive" and s > 0 and calls:
        bound = 3 * (math.e * s * math.log(n) + s + 1)
        print(f"median calls {statistics.median(calls)} vs 3x bound {bound:.1f}", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="napspec", description="Minimal NAP specifications for ReLU networks")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, model=True, data=True):
        if model:
            sp.add_argument("--model", required=True)
        if data:
            sp.add_argument("--data", required=True)
        sp.add_argument("--out")

    sp = sub.add_parser("extract", help="class NAP from labelled data")
    common(sp)
    sp.add_argument("--class", dest="cls", type=int, required=True)
    sp.add_argument("--delta", type=float, default=0.99)
    sp.set_defaults(func=cmd_extract)

    sp = sub.add_parser("minimize", help="search for a minimal NAP specification")
    sp.add_argument("--algo", choices=["coarsen", "stoch", "refine", "sample-refine"], required=True)
    sp.add_argument("--model")
    sp.add_argument("--data")
    sp.add_argument("--query")
    sp.add_argument("--oracle", help="synthetic oracle JSON instead of the verifier")
    sp.add_argument("--nap", help="reference (most refined) NAP; default: class NAP")
    sp.add_argument("--delta", type=float, default=0.99)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--eta", type=float, default=0.1)
    sp.add_argument("--theta", type=float)
    sp.add_argument("--theta-mode", choices=["fixed", "adaptive"])
    sp.add_argument("--s", type=int)
    sp.add_argument("--k", type=int, default=200)
    sp.add_argument("--budget", type=int, default=10_000)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_minimize)

    sp = sub.add_parser("verify", help="verify a NAP robustness query")
    common(sp, data=False)
    sp.add_argument("--nap", required=True)
    sp.add_argument("--query", required=True)
    sp.add_argument("--no-prune", action="store_true")
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("volume", help="orthotope volume estimate of a NAP region")
    common(sp)
    sp.add_argument("--nap", required=True)
    sp.add_argument("--anchor-nap", help="pick the anchor from rows exhibiting this NAP instead")
    sp.add_argument("--query", help="take the input domain from this query file")
    sp.add_argument("--tol", type=float, default=1e-4)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_volume)

    sp = sub.add_parser("coverage", help="fraction of class rows exhibiting a NAP")
    common(sp)
    sp.add_argument("--nap", required=True)
    sp.add_argument("--class", dest="cls", type=int, required=True)
    sp.set_defaults(func=cmd_coverage)

    for name, fn, helptext in (
        ("estimate", cmd_estimate, "verifier-free essential-neuron estimates"),
        ("metrics", cmd_metrics, "coverage, adversarial rejection and ambiguity"),
    ):
        sp = sub.add_parser(name, help=helptext)
        common(sp)
        if name == "estimate":
            sp.add_argument("--algo", choices=["adv-prune", "gradient"], required=True)
            sp.add_argument("--beta", type=float)
            sp.add_argument("--gamma", type=float)
        else:
            sp.add_argument("--trials", type=int, default=1)
        sp.add_argument("--nap")
        sp.add_argument("--query", help="take the input domain from this query file")
        sp.add_argument("--class", dest="cls", type=int, required=True)
        sp.add_argument("--delta", type=float, default=0.99)
        sp.add_argument("--eps", type=float, default=0.1)
        sp.add_argument("--alpha", type=float)
        sp.add_argument("--iterations", type=int, default=40)
        sp.add_argument("--restarts", type=int, default=5)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--workers", type=int, default=1)
        sp.set_defaults(func=fn)

    sp = sub.add_parser("simulate", help="call-complexity experiments on synthetic oracles")
    sp.add_argument("--algo", choices=["coarsen", "stoch", "refine", "sample-refine"], required=True)
    sp.add_argument("--n", type=int, default=64)
    sp.add_argument("--planted-size", type=int)
    sp.add_argument("--clauses", help="fixed synthetic oracle JSON instead of a planted clause")
    sp.add_argument("--s", type=int, help="size target passed to the algorithm (default: planted size)")
    sp.add_argument("--trials", type=int, default=100)
    sp.add_argument("--theta-mode", choices=["fixed", "adaptive"], default="fixed")
    sp.add_argument("--theta", type=float)
    sp.add_argument("--eta", type=float, default=0.1)
    sp.add_argument("--k", type=int, default=200)
    sp.add_argument("--budget", type=int, default=100_000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_simulate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (InputError, ModelError, ValueError, KeyError, OSError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
