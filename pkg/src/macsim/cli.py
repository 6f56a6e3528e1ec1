"""``macsim`` command line.

Every command reads JSON files that follow the schemas in ``macsim/schemas``
and writes a JSON report (stdout unless ``--output`` is given). Reports are
deterministic for a fixed configuration and seed; the wall-clock time goes to
a ``<output>.timing.json`` sidecar (or to stderr) so the report itself stays
byte-identical across runs.

Exit codes: 0 success, 1 schema/input error, 2 parameter error, 3 resource cap.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from importlib import resources

import jsonschema
import numpy as np

from . import __version__, _accel
from .probability import Channel, Decomposition, MacChannel, Pmf, ProbabilityError

EXIT_OK, EXIT_SCHEMA, EXIT_PARAM, EXIT_CAP = 0, 1, 2, 3


class SchemaError(Exception):
    pass


class CapError(Exception):
    pass


# --- loading -------------------------------------------------------------------


def _schema(name):
    return json.loads(resources.files("macsim").joinpath("schemas", f"{name}.json").read_text())


def _load(path, schema):
    try:
        with open(path) as f:
            text = f.read()
        doc = json.loads(text)
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaError(f"{path}: {exc}") from None
    try:
        jsonschema.validate(doc, _schema(schema))
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise SchemaError(f"{path}: {where}: {exc.message}") from None
    return doc, hashlib.sha256(text.encode()).hexdigest()


def _build(path, schema, factory):
    doc, digest = _load(path, schema)
    try:
        return factory(doc), digest
    except (ProbabilityError, KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"{path}: {exc}") from None


def _inputs(doc):
    return Pmf.from_dict(doc["q1"]), Pmf.from_dict(doc["q2"])


# --- helpers ---------------------------------------------------------------------


def _jsonify(x):
    if isinstance(x, dict):
        return {str(k): _jsonify(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonify(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonify(x.tolist())
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if np.isfinite(x) else str(x)
    return x


def _eps(name, v, closed_zero=False):
    lo_ok = v >= 0 if closed_zero else v > 0
    if not (lo_ok and v < 1):
        raise ValueError(f"{name} must lie in {'[0' if closed_zero else '(0'}, 1), got {v}")


def _delta(delta, *eps):
    if not 0 < delta < min(eps):
        raise ValueError(f"delta must lie in (0, {min(eps)}), got {delta}")


def _fmt(v):
    return f"{v:.9g}"


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as f:
        f.write(",".join(header) + "\n")
        for r in rows:
            f.write(",".join(_fmt(v) if isinstance(v, (float, np.floating)) else str(v) for v in r) + "\n")


def _aggregate(per, mode, q):
    per = np.asarray(per)
    return float(per.max()) if mode == "max" else float(q.probs @ per)


# --- commands ---------------------------------------------------------------------


def cmd_imax(a, prov):
    from .entropic import SmoothingSpec, imax_channel, imax_state, smooth_imax

    w, prov["channel"] = _build(a.channel, "channel", Channel.from_dict)
    _eps("epsilon", a.epsilon, closed_zero=True)
    q = None
    if a.variant == "state":
        if not a.input:
            raise ValueError("--input is required for the state variant")
        q, prov["input"] = _build(a.input, "pmf", Pmf.from_dict)
    spec = SmoothingSpec(a.epsilon, a.variant, q)
    res = smooth_imax(w, spec)
    closed = imax_state(w, q) if q is not None else imax_channel(w)
    out = res.to_dict()
    out["closed_form_unsmoothed"] = closed
    return out, f"{res.value:.6f}"


def cmd_p2p(a, prov):
    from .entropic import SmoothingSpec
    from .probability import row_tv
    from .rejection import build_p2p, exact_induced_p2p, p2p_sample

    w, prov["channel"] = _build(a.channel, "channel", Channel.from_dict)
    _eps("epsilon", a.epsilon)
    _delta(a.delta, a.epsilon)
    q = None
    if a.variant == "state":
        if not a.input:
            raise ValueError("--input is required for the state variant")
        q, prov["input"] = _build(a.input, "pmf", Pmf.from_dict)
    p = build_p2p(w, SmoothingSpec(a.epsilon, a.variant, q), a.delta)
    exact = exact_induced_p2p(p)
    exact_per = row_tv(exact.rows, w.rows)
    nx, ny = w.shape
    xs = np.repeat(np.arange(nx), a.samples)
    idx, sym, aborted = p2p_sample(p, xs, a.seed)
    counts = np.bincount(xs * ny + sym, minlength=nx * ny).reshape(nx, ny) / a.samples
    emp_per = row_tv(counts, w.rows)
    mode = "average" if a.variant == "state" else "max"
    return {
        "protocol": p.to_dict(),
        "rate_bits": p.rate_bits,
        "mode": mode,
        "exact_tv_per_input": exact_per,
        "exact_tv": _aggregate(exact_per, mode, q),
        "empirical_tv_per_input": emp_per,
        "empirical_tv": _aggregate(emp_per, mode, q),
        "abort_rate": float(aborted.mean()),
        "abort_rate_per_input": aborted.reshape(nx, a.samples).mean(axis=1),
        "samples_per_input": a.samples,
    }, f"rate_bits={p.rate_bits:g}"


def cmd_simulate(a, prov):
    from .mac import build_mac_protocol, verify_simulation

    m, prov["mac"] = _build(a.mac, "mac", MacChannel.from_dict)
    d, prov["decomp"] = _build(a.decomp, "decomposition", Decomposition.from_dict)
    inputs = None
    if a.variant == "fixed":
        if not a.inputs:
            raise ValueError("--inputs is required for the fixed variant")
        inputs, prov["inputs"] = _build(a.inputs, "inputs", _inputs)
    _eps("eps1", a.eps1)
    _eps("eps2", a.eps2)
    _delta(a.delta, a.eps1, a.eps2)
    p = build_mac_protocol(d, a.eps1, a.eps2, a.delta, a.variant, inputs)
    rep = verify_simulation(p, m, a.samples, a.seed)
    return rep, f"exact_tv={rep['exact_tv']:.6g}"


def cmd_converse(a, prov):
    from .mac import ProtocolTables, converse_extract

    t, prov["tables"] = _build(a.tables, "tables", ProtocolTables.from_dict)
    inputs = None
    if a.inputs:
        inputs, prov["inputs"] = _build(a.inputs, "inputs", _inputs)
    _eps("eps1", a.eps1, closed_zero=True)
    _eps("eps2", a.eps2, closed_zero=True)
    ce = converse_extract(t, a.eps1, a.eps2, inputs)
    out = ce.to_dict()
    out["aux1"] = ce.aux1.to_dict()
    out["aux2"] = ce.aux2.to_dict()
    return out, f"satisfied={list(ce.satisfied)}"


def _dims(s):
    try:
        a, b = (int(v) for v in s.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("dims must look like 'a,b'") from None
    return a, b


def cmd_region(a, prov):
    from .region import trace_region

    m, prov["mac"] = _build(a.mac, "mac", MacChannel.from_dict)
    inputs = None
    if a.mode == "fixed":
        if not a.inputs:
            raise ValueError("--inputs is required for the fixed mode")
        inputs, prov["inputs"] = _build(a.inputs, "inputs", _inputs)
    _eps("eps1", a.eps1)
    _eps("eps2", a.eps2)
    _delta(a.delta, a.eps1, a.eps2)
    if min(a.dims) < 1:
        raise ValueError("dims must be >= 1")
    clouds, decomps = trace_region(m, a.dims, a.mode, inputs, a.eps1, a.eps2, a.delta,
                                   samples=a.samples, restarts=a.restarts, iters=a.iters, seed=a.seed)
    rows = [(k, p.r1, p.r2) for k, pts in clouds.items() for p in pts]
    if a.csv:
        _write_csv(a.csv, ["kind", "r1", "r2"], rows)
    return {
        "points": [p.to_dict() for pts in clouds.values() for p in pts],
        "decompositions": [d.to_dict() for d in decomps],
        "searched": a.samples,
        "kept": len(decomps),
    }, f"{len(rows)} points from {len(decomps)} decompositions"


def cmd_reduce(a, prov):
    from .region import reduce_cardinality

    d, prov["decomp"] = _build(a.decomp, "decomposition", Decomposition.from_dict)
    inputs, prov["inputs"] = _build(a.inputs, "inputs", _inputs)
    if a.smoothing_eps is not None:
        _eps("smoothing-eps", a.smoothing_eps)
    log = []
    r = reduce_cardinality(d, inputs, a.smoothing_eps, log)
    return {"decomposition": r.to_dict(), "steps": log, "dims_before": list(d.dims),
            "dims_after": list(r.dims)}, f"dims {d.dims} -> {r.dims}"


def cmd_aep(a, prov):
    from .region import aep_curve

    w, prov["channel"] = _build(a.channel, "channel", Channel.from_dict)
    q = None
    if a.variant == "state":
        if not a.input:
            raise ValueError("--input is required for the state variant")
        q, prov["input"] = _build(a.input, "pmf", Pmf.from_dict)
    _eps("epsilon", a.epsilon)
    if a.n_max < 1:
        raise ValueError("--n-max must be >= 1")
    curve = aep_curve(w, q, a.epsilon, a.n_max, a.variant)
    if a.csv:
        _write_csv(a.csv, ["n", "value"], curve.points)
    if curve.capped and a.strict:
        raise CapError(curve.notice)
    return curve.to_dict(), " ".join(f"{n}:{v:.6f}" for n, v in curve.points)


def cmd_cq(a, prov):
    from . import cq

    if a.cq_command in ("imax", "mutual", "convex-split"):
        t, prov["state"] = _build(a.state, "cqstate", cq.CqState.from_dict)
    if a.cq_command == "imax":
        _eps("epsilon", a.epsilon, closed_zero=True)
        res = cq.cq_smooth_imax(t, a.epsilon)
        return {"imax": cq.cq_imax(t), **res.to_dict()}, f"{res.value:.6f}"
    if a.cq_command == "mutual":
        v = cq.cq_mutual_information(t)
        return {"mutual_information": v}, f"{v:.6f}"
    if a.cq_command == "convex-split":
        _eps("epsilon", a.epsilon)
        _delta(a.delta, a.epsilon)
        chk = cq.convex_split_check(t, a.epsilon, a.delta, a.n)
        if chk.passed is None and chk.tv is None and a.strict:
            raise CapError(chk.note)
        return chk.to_dict(), f"n={chk.n} tv={chk.tv} pass={chk.passed}"
    # rates
    in1, prov["input1"] = _build(a.input1, "measured", cq.MeasuredInput.from_dict)
    in2, prov["input2"] = _build(a.input2, "measured", cq.MeasuredInput.from_dict)
    a1, prov["aux1"] = _build(a.aux1, "channel", Channel.from_dict)
    a2, prov["aux2"] = _build(a.aux2, "channel", Channel.from_dict)
    dec, prov["decoder"] = _build(a.decoder, "channel", Channel.from_dict)
    _eps("eps1", a.eps1)
    _eps("eps2", a.eps2)
    _delta(a.delta, a.eps1, a.eps2)
    try:
        Decomposition(a1, a2, dec)
    except ProbabilityError as exc:
        raise SchemaError(str(exc)) from None
    point, rep = cq.csqc_rates((in1, in2), (a1, a2), dec, a.eps1, a.eps2, a.delta, a.mode)
    return {"point": point.to_dict(), **rep}, f"r1={point.r1:.6f} r2={point.r2:.6f}"


# --- parser ------------------------------------------------------------------------


def _parser():
    p = argparse.ArgumentParser(prog="macsim", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=f"macsim {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, stochastic=False):
        sp.add_argument("--output", "-o", help="report path (default: stdout)")
        sp.add_argument("--threads", type=int, default=None,
                        help="worker threads for the sampling kernels (default: $MACSIM_THREADS or 1)")
        if stochastic:
            sp.add_argument("--seed", type=int, required=True, help="64-bit seed")

    s = sub.add_parser("imax", help="(smoothed) max-mutual information of a channel")
    s.add_argument("--channel", required=True)
    s.add_argument("--epsilon", type=float, default=0.0)
    s.add_argument("--variant", choices=("state", "channel"), default="channel")
    s.add_argument("--input")
    common(s)

    s = sub.add_parser("p2p", help="point-to-point channel simulation")
    s.add_argument("--channel", required=True)
    s.add_argument("--epsilon", type=float, required=True)
    s.add_argument("--delta", type=float, required=True)
    s.add_argument("--variant", choices=("state", "channel"), default="channel")
    s.add_argument("--input")
    s.add_argument("--samples", type=int, default=10_000)
    common(s, stochastic=True)

    s = sub.add_parser("simulate", help="MAC simulation with exact and Monte Carlo audit")
    s.add_argument("--mac", required=True)
    s.add_argument("--decomp", required=True)
    s.add_argument("--eps1", type=float, required=True)
    s.add_argument("--eps2", type=float, required=True)
    s.add_argument("--delta", type=float, required=True)
    s.add_argument("--variant", choices=("fixed", "universal"), default="fixed")
    s.add_argument("--inputs")
    s.add_argument("--samples", type=int, default=10_000)
    common(s, stochastic=True)

    s = sub.add_parser("converse", help="extract auxiliaries from protocol tables")
    s.add_argument("--tables", required=True)
    s.add_argument("--eps1", type=float, required=True)
    s.add_argument("--eps2", type=float, required=True)
    s.add_argument("--inputs", help="input pair (omit for the universal variant)")
    common(s)

    s = sub.add_parser("region", help="trace inner/outer/iid rate regions")
    s.add_argument("--mac", required=True)
    s.add_argument("--dims", type=_dims, required=True)
    s.add_argument("--mode", choices=("fixed", "universal"), default="fixed")
    s.add_argument("--inputs")
    s.add_argument("--eps1", type=float, default=0.1)
    s.add_argument("--eps2", type=float, default=0.1)
    s.add_argument("--delta", type=float, default=0.01)
    s.add_argument("--restarts", type=int, default=4)
    s.add_argument("--iters", type=int, default=50)
    s.add_argument("--samples", type=int, default=8, help="independent searches")
    s.add_argument("--csv")
    common(s, stochastic=True)

    s = sub.add_parser("reduce", help="cardinality reduction of a decomposition")
    s.add_argument("--decomp", required=True)
    s.add_argument("--inputs", required=True)
    s.add_argument("--smoothing-eps", type=float, default=None)
    common(s)

    s = sub.add_parser("aep", help="(1/n) smoothed I_max of product channels")
    s.add_argument("--channel", required=True)
    s.add_argument("--input")
    s.add_argument("--epsilon", type=float, required=True)
    s.add_argument("--n-max", type=int, default=8)
    s.add_argument("--variant", choices=("state", "channel"), default="state")
    s.add_argument("--csv")
    s.add_argument("--strict", action="store_true", help="exit 3 instead of emitting a partial curve")
    common(s)

    c = sub.add_parser("cq", help="classical-quantum quantities")
    csub = c.add_subparsers(dest="cq_command", required=True)
    s = csub.add_parser("imax")
    s.add_argument("--state", required=True)
    s.add_argument("--epsilon", type=float, default=0.0)
    common(s)
    s = csub.add_parser("mutual")
    s.add_argument("--state", required=True)
    common(s)
    s = csub.add_parser("convex-split")
    s.add_argument("--state", required=True)
    s.add_argument("--epsilon", type=float, required=True)
    s.add_argument("--delta", type=float, required=True)
    s.add_argument("--n", type=int, default=None, help="override the prescribed decoy count")
    s.add_argument("--strict", action="store_true", help="exit 3 when the decoy count is over the cap")
    common(s)
    s = csub.add_parser("rates")
    s.add_argument("--input1", required=True)
    s.add_argument("--input2", required=True)
    s.add_argument("--aux1", required=True)
    s.add_argument("--aux2", required=True)
    s.add_argument("--decoder", required=True)
    s.add_argument("--eps1", type=float, required=True)
    s.add_argument("--eps2", type=float, required=True)
    s.add_argument("--delta", type=float, required=True)
    s.add_argument("--mode", choices=("oneshot_inner", "oneshot_outer", "iid"), default="oneshot_inner")
    common(s)
    return p


COMMANDS = {
    "imax": cmd_imax, "p2p": cmd_p2p, "simulate": cmd_simulate, "converse": cmd_converse,
    "region": cmd_region, "reduce": cmd_reduce, "aep": cmd_aep, "cq": cmd_cq,
}

_NOT_CONFIG = {"output", "threads"}


def _fail(code, kind, msg):
    sys.stderr.write(json.dumps({"error": kind, "exit": code, "message": str(msg)}) + "\n")
    return code


def run(argv=None) -> int:
    from .region import ResourceCapExceeded

    args = _parser().parse_args(argv)
    threads = args.threads
    if threads is None:
        threads = int(os.environ.get("MACSIM_THREADS", "1") or 1)
    _accel.set_threads(threads)
    t0 = time.perf_counter()
    prov = {}
    try:
        result, summary = COMMANDS[args.command](args, prov)
    except SchemaError as exc:
        return _fail(EXIT_SCHEMA, "schema", exc)
    except (CapError, ResourceCapExceeded) as exc:
        return _fail(EXIT_CAP, "resource_cap", exc)
    except ProbabilityError as exc:
        return _fail(EXIT_SCHEMA, "input", exc)
    except ValueError as exc:
        return _fail(EXIT_PARAM, "parameter", exc)
    elapsed = time.perf_counter() - t0
    config = {k: v for k, v in sorted(vars(args).items()) if k not in _NOT_CONFIG}
    report = {
        "macsim_version": __version__,
        "command": args.command if args.command != "cq" else f"cq {args.cq_command}",
        "config": config,
        "input_sha256": prov,
        "result": result,
    }
    text = json.dumps(_jsonify(report), indent=2, sort_keys=True) + "\n"
    timing = json.dumps({"wall_clock_s": round(elapsed, 6), "threads": threads})
    if args.output:
        with open(args.output, "w") as f:
            f.write(text)
        with open(args.output + ".timing.json", "w") as f:
            f.write(timing + "\n")
        print(summary)
    else:
        sys.stdout.write(text)
        sys.stderr.write(timing + "\n")
    return EXIT_OK


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
