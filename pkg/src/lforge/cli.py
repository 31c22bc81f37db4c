"""Command line entry point: ``lforge synthesize | verify | model``.

Exit codes: 0 parent exists (or verification passed), 10 local stage failed,
11 patching failed, 2 input error, 1 internal error or failed verification.
"""

import argparse
import datetime
import json
import os
import sys
import tempfile
import time

import numpy as np

from . import mpdo
from .mpdo import MODELS, TROTTER_ORDERS, build_model, spec_from_dict, spec_to_dict
from .numerics import DEFAULT_TOL
from .synthesis import SIGN_NOTE, k_sweep, oracle_report, synthesize

FORMAT_VERSION = 1
EXIT_CODES = {"parent_exists": 0, "local_stage_failed": 10, "patching_failed": 11}
EXIT_INPUT, EXIT_INTERNAL = 2, 1


class InputError(Exception):
    pass


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if np.isfinite(x) else str(x)
    if isinstance(x, complex):
        return [x.real, x.imag]
    return x


def report_to_dict(rep, spec, boundaries, master_seed=None, oracle=None, timings=None):
    f, patch = rep.structure, rep.patch
    out = {
        "format_version": FORMAT_VERSION,
        "verdict": rep.verdict,
        "k": rep.k,
        "dims": {
            "span": rep.span_dim,
            "fixed_space": rep.fixed_dim,
            "target": {str(L): v for L, v in sorted(rep.target.items())},
        },
        "factors": rep.factors,
        "d0": None if f is None else f.d0,
        "rho_spectra": [] if f is None else [r.tolist() for r in f.rho_spectra()],
        "ranks": [] if patch is None else [r for r in patch.ranks if r is not None],
        "s_sequence": [] if patch is None else [list(p) for p in patch.s_sequence],
        "patching": None if patch is None else {
            "verdict": patch.verdict,
            "stabilized": patch.stabilized,
            "max_sites": rep.max_sites,
        },
        "mpdo_form": rep.mpdo_form(),
        "seeds": {"master": master_seed, "run": rep.seed},
        "tolerances": rep.tolerances,
        "timings": timings,
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds"),
        "error": rep.error,
        "warnings": rep.warnings,
        "certificate": rep.certificate,
        "input": spec_to_dict(spec, boundaries),
        "structure": None if f is None else {
            "U": mpdo.encode_complex(f.U),
            "d0": f.d0,
            "factors": [list(x) for x in f.factors],
            "rhos": [r.tolist() for r in f.rhos],
            "gauge": "U is fixed up to unitaries inside each M_d factor and permutations of copies",
        },
        "lindbladian": None if rep.term is None else {
            "k": rep.term.k,
            "d": rep.term.d,
            "sign": SIGN_NOTE,
            "vectorization": "column stacking, vec(X)[a + n*b] = X[a, b]",
            "superoperator": mpdo.encode_complex(rep.term.superop),
        },
    }
    if oracle is not None:
        out["oracle"] = oracle
    return _jsonable(out)


def write_atomic(path, text):
    path = os.path.abspath(path)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path), prefix=".lforge-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _dumps(obj):
    return json.dumps(obj, indent=1, sort_keys=False) + "\n"


# ---------------------------------------------------------------------------
# argument handling


def _int_list(text):
    try:
        return tuple(int(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma separated list of integers, got {text!r}")


def _seed_default():
    raw = os.environ.get("LFORGE_SEED")
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise InputError(f"LFORGE_SEED must be an integer, got {raw!r}")


def _add_model_args(p):
    p.add_argument("--J", type=_int_list, default=(3,), help="Pauli indices, e.g. 1,2,3")
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--h", type=float, default=1.0)
    p.add_argument("--order", choices=TROTTER_ORDERS, default="field_outer")
    p.add_argument("--p", type=float, default=0.5)


def build_parser():
    ap = argparse.ArgumentParser(prog="lforge", description="k-local parent Lindbladians for MPDO families")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synthesize", help="run the pipeline for one k or a k range")
    src = s.add_mutually_exclusive_group(required=True)
    src.add_argument("--model", choices=MODELS)
    src.add_argument("--spec", help="MPDO spec JSON file")
    _add_model_args(s)
    s.add_argument("--k", type=int)
    s.add_argument("--k-min", type=int)
    s.add_argument("--k-max", type=int)
    s.add_argument("--seed", type=int, default=None, help="master seed (default: $LFORGE_SEED or 0)")
    s.add_argument("--max-sites", type=int, default=None, help="patching horizon (default k + 6)")
    s.add_argument("--rank-tol", type=float, default=None)
    s.add_argument("--oracle-check", action="store_true", help="embed dense oracle comparisons")
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--out", help="report JSON path")
    s.add_argument("--timings", action="store_true", help="record wall times (breaks byte-identity)")

    v = sub.add_parser("verify", help="re-check an emitted report against dense oracles")
    v.add_argument("report")
    v.add_argument("--L", type=int, default=None, help="chain length (default k + 1)")

    m = sub.add_parser("model", help="write a model family as an MPDO spec JSON")
    m.add_argument("name")
    _add_model_args(m)
    m.add_argument("--out", help="output path (default: stdout)")
    return ap


def _load_spec(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}")
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}")
    try:
        return spec_from_dict(obj)
    except (ValueError, KeyError, TypeError) as exc:
        raise InputError(f"{path}: invalid MPDO spec: {exc}")


def _model(args, name):
    try:
        return build_model(name, J=args.J, beta=args.beta, h=args.h, order=args.order, p=args.p)
    except ValueError as exc:
        raise InputError(str(exc))


# ---------------------------------------------------------------------------
# commands


def cmd_synthesize(args):
    if (args.k is None) == (args.k_min is None and args.k_max is None):
        raise InputError("give either --k or --k-min/--k-max")
    if args.k is not None:
        ks = [args.k]
    else:
        if args.k_min is None or args.k_max is None:
            raise InputError("--k-min and --k-max must be given together")
        ks = list(range(args.k_min, args.k_max + 1))
    if not ks or min(ks) < 2:
        raise InputError("k must be at least 2")
    if args.max_sites is not None and args.max_sites <= max(ks):
        raise InputError("--max-sites must exceed k")
    seed = _seed_default() if args.seed is None else args.seed
    if not 0 <= seed < 2**64:
        raise InputError("seed must be a 64-bit unsigned integer")
    try:
        tol = DEFAULT_TOL.updated(rank_tol=args.rank_tol)
    except ValueError as exc:
        raise InputError(str(exc))
    spec, bnd = _load_spec(args.spec) if args.spec else _model(args, args.model)

    t0 = time.perf_counter()
    if len(ks) == 1:
        reports = [synthesize(spec, bnd, ks[0], seed, tol, args.max_sites)]
    else:
        reports = k_sweep(spec, bnd, ks, seed, tol, args.max_sites, jobs=args.jobs)
    elapsed = time.perf_counter() - t0

    docs = []
    for rep in reports:
        oracle, timings = None, None
        if args.oracle_check:
            t1 = time.perf_counter()
            oracle = oracle_report(rep, spec, bnd, tol=tol)
            if args.timings:
                timings = {"oracle_s": time.perf_counter() - t1}
        if args.timings:
            timings = dict(timings or {}, pipeline_s=elapsed / len(reports))
        docs.append(report_to_dict(rep, spec, bnd, seed, oracle, timings))
        print(rep.summary())

    verdict = _sweep_verdict([r.verdict for r in reports])
    if len(docs) == 1:
        doc = docs[0]
    else:
        doc = {"format_version": FORMAT_VERSION, "verdict": verdict, "k": ks,
               "seeds": {"master": seed}, "sweep": docs}
    if args.out:
        write_atomic(args.out, _dumps(doc))
    return EXIT_CODES[verdict]


def _sweep_verdict(verdicts):
    for v in ("parent_exists", "patching_failed"):
        if v in verdicts:
            return v
    return "local_stage_failed"


def cmd_verify(args):
    from .patching import global_kernel_dim, kernel_residual
    from .mpdo import contract_pairs, full_chain_span_dim

    try:
        with open(args.report) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read report: {exc}")
    if not isinstance(doc, dict) or doc.get("format_version") != FORMAT_VERSION:
        raise InputError("not a format_version 1 report")
    if doc.get("lindbladian") is None or "input" not in doc:
        raise InputError("report carries no Lindbladian")
    try:
        spec, bnd = spec_from_dict(doc["input"])
        lind = doc["lindbladian"]
        k, d = int(lind["k"]), int(lind["d"])
        S = mpdo.decode_complex(lind["superoperator"]) + np.eye(d ** (2 * k))
    except (ValueError, KeyError, TypeError) as exc:
        raise InputError(f"malformed report: {exc}")
    L = k + 1 if args.L is None else args.L
    if L < k:
        raise InputError("L must be at least k")
    tol = DEFAULT_TOL.updated(**{key: doc.get("tolerances", {}).get(key) for key in DEFAULT_TOL.as_dict()})
    try:
        kernel = global_kernel_dim(S, d, k, L, tol)
    except Exception as exc:
        raise InputError(str(exc))
    target = full_chain_span_dim(spec, bnd, L, tol)
    res = kernel_residual(S, contract_pairs(spec, bnd, L), d, k, L)
    print(f"L={L}: kernel dim {kernel}, target dim {target}, annihilation residual {res:.2e}")
    ok = kernel == target and res < 1e-8
    if not ok:
        print(f"verification failed: kernel {kernel} vs target {target}, residual {res:.2e}", file=sys.stderr)
    return 0 if ok else EXIT_INTERNAL


def cmd_model(args):
    if args.name not in MODELS and args.name != "domain_wall":
        raise InputError(f"unknown model {args.name!r}; available: {', '.join(MODELS)}")
    spec, bnd = _model(args, args.name)
    text = mpdo.dumps_spec(spec, bnd)
    if args.out:
        write_atomic(args.out, text)
    else:
        sys.stdout.write(text)
    return 0


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and EXIT_INPUT
    handler = {"synthesize": cmd_synthesize, "verify": cmd_verify, "model": cmd_model}[args.command]
    try:
        return handler(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:                          # pragma: no cover - defensive
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
