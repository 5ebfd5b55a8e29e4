"""Command-line front end: spectra, distortion constants, probabilities."""

from __future__ import annotations

import argparse
import contextlib
import csv
import io
import json
import math
import sys

import numpy as np

from . import __version__
from .characteristic_spectra import characteristic_spectrum, distortion_constant
from .errors import NotAvailableError, ParameterError, SmallBallError
from .process_catalog import Family, ProcessSpec, kernel
from .smallball import NYSTROM_MAX_K, ReportConfig, SmallBallReport, report, spectrum_for
from .spectral_oracle import closed_form_spectrum, nystrom_spectrum

SCHEMA_VERSION = "1"

_ALIASES = {
    "wiener": Family.WIENER,
    "w": Family.WIENER,
    "bridge": Family.BRIDGE,
    "bb": Family.BRIDGE,
    "xalpha": Family.XALPHA,
    "ou": Family.OU,
    "ou0": Family.OU_ZERO,
    "iou": Family.INTEGRATED_OU,
}


def parse_process(name, alpha, beta):
    """``[demeaned-]family`` plus parameters into a ProcessSpec."""
    name = name.strip().lower()
    demeaned = name.startswith("demeaned-")
    if demeaned:
        name = name[len("demeaned-") :]
    if name not in _ALIASES:
        raise ParameterError(f"unknown process {name!r}; choose from {', '.join(sorted(_ALIASES))}")
    return ProcessSpec(_ALIASES[name], alpha=alpha, beta=beta, demeaned=demeaned)


# --------------------------------------------------------------------------
# output


def _clean(v):
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return None if not math.isfinite(v) else v
    if isinstance(v, np.integer):
        return int(v)
    return v


def _fmt(v, digits):
    if isinstance(v, (float, np.floating)):
        return "nan" if not math.isfinite(v) else f"{float(v):.{digits}g}"
    return "" if v is None else str(v)


def emit(fh, fmt, command, config, header, rows, extra=None):
    if fmt == "json":
        doc = {
            "version": SCHEMA_VERSION,
            "command": command,
            "config": config,
            "columns": list(header),
            "rows": [[_clean(v) for v in r] for r in rows],
        }
        if extra:
            doc.update(extra)
        json.dump(doc, fh, indent=2)
        fh.write("\n")
    elif fmt == "csv":
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v, 17) for v in r])
    else:
        cells = [list(header)] + [[_fmt(v, 6) for v in r] for r in rows]
        widths = [max(len(c[i]) for c in cells) for i in range(len(header))]
        for c in cells:
            fh.write("  ".join(x.rjust(wd) for x, wd in zip(c, widths)).rstrip() + "\n")


@contextlib.contextmanager
def _output(path):
    if path in (None, "-"):
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            yield fh


def _base_config(args):
    return {
        "process": args.process,
        "alpha": args.alpha,
        "beta": args.beta,
    }


# --------------------------------------------------------------------------
# commands


def _analytic_spectrum(spec, K):
    try:
        return closed_form_spectrum(spec, K)
    except NotAvailableError:
        return characteristic_spectrum(spec, K)


def cmd_eigs(args, out):
    spec = parse_process(args.process, args.alpha, args.beta)
    config = _base_config(args) | {"k": args.k, "method": args.method, "nodes": args.nodes, "compare": args.compare}
    if args.compare:
        if args.k > NYSTROM_MAX_K:
            raise ParameterError(f"--compare supports k <= {NYSTROM_MAX_K}")
        ny = nystrom_spectrum(kernel(spec), n_nodes=args.nodes, k_max=args.k).spectrum
        ref = _analytic_spectrum(spec, args.k)
        rel = np.abs(ny.mu / ref.mu - 1.0)
        rows = [(k, a, b, r) for k, a, b, r in zip(range(1, args.k + 1), ny.mu, ref.mu, rel)]
        header = ("k", "mu_nystrom", f"mu_{ref.provenance}", "rel_diff")
        emit(out, args.format, "eigs", config, header, rows, {"max_rel_diff": float(rel.max())})
        return 0
    if args.method == "nystrom":
        s = nystrom_spectrum(kernel(spec), n_nodes=args.nodes, k_max=args.k).spectrum
    else:
        s = spectrum_for(spec, args.k, args.method, args.nodes)
    emit(out, args.format, "eigs", config, ("k", "mu", "lambda"), s.rows(), {"provenance": s.provenance, "zero_modes": s.zero_modes})
    return 0


def cmd_constant(args, out):
    spec = parse_process(args.process, args.alpha, args.beta)
    config = _base_config(args) | {"K": args.K}
    closed = distortion_constant(spec, "closed_form").value
    prod = distortion_constant(spec, "product", args.K)
    rows = [("closed_form", closed), ("product", prod.value), ("abs_diff", abs(prod.value - closed)), ("partial_product", prod.partial)]
    trace = [{"K": k, "value": v} for k, v in prod.trace]
    if args.format == "table":
        rows = [(name, f"{v:.12g}") for name, v in rows]
    emit(out, args.format, "constant", config, ("quantity", "value"), rows, {"trace": trace})
    return 0


def cmd_prob(args, out):
    spec = parse_process(args.process, args.alpha, args.beta)
    eps = [float(e) for e in args.eps.split(",") if e.strip()]
    methods = [m.strip() for m in args.method.split(",") if m.strip()]
    cfg = ReportConfig(methods, K=args.K, n_samples=args.samples, seed=args.seed, n_nodes=args.nodes, spectrum_method=args.spectrum)
    rows = report(spec, eps, cfg)
    config = _base_config(args) | {
        "eps": eps,
        "methods": methods,
        "K": args.K,
        "samples": args.samples,
        "seed": args.seed,
        "nodes": args.nodes,
        "spectrum": args.spectrum,
    }
    extra = {"flags": [list(r.flags) for r in rows]}
    emit(out, args.format, "prob", config, SmallBallReport.CSV_FIELDS, [r.row() for r in rows], extra)
    return 0


def _selftest_checks(n_nodes):
    """(name, passed, detail) for the headline invariants at modest size."""
    checks = []
    base = nystrom_spectrum(kernel(ProcessSpec(Family.XALPHA, alpha=0.0, demeaned=True)), n_nodes, 10).spectrum.mu
    worst = 0.0
    for a in (1.0, 2.0, -0.5):
        mu = nystrom_spectrum(kernel(ProcessSpec(Family.XALPHA, alpha=a, demeaned=True)), n_nodes, 10).spectrum.mu
        worst = max(worst, float(np.max(np.abs(mu / base - 1))))
    checks.append(("alpha-invariance", worst <= 1e-8, f"max rel diff {worst:.2e}"))

    for fam in (Family.OU, Family.OU_ZERO, Family.INTEGRATED_OU):
        spec = ProcessSpec(fam, beta=1.0, demeaned=True)
        ny = nystrom_spectrum(kernel(spec), n_nodes, 10).spectrum.mu
        ch = characteristic_spectrum(spec, 10).mu
        d = float(np.max(np.abs(ny / ch - 1)))
        checks.append((f"dual-solver {spec.label}", d <= 1e-6, f"max rel diff {d:.2e}"))

    for fam in (Family.OU, Family.OU_ZERO, Family.INTEGRATED_OU):
        spec = ProcessSpec(fam, beta=1.0, demeaned=True)
        r = distortion_constant(spec, "product", 500)
        checks.append((f"product {spec.label}", r.error <= 1e-4, f"|product - closed| {r.error:.2e}"))
    return checks


def cmd_selftest(args, out):
    checks = _selftest_checks(args.nodes)
    rows = [("PASS" if ok else "FAIL", name, detail) for name, ok, detail in checks]
    emit(out, args.format, "selftest", {"nodes": args.nodes}, ("status", "check", "detail"), rows)
    return 0 if all(ok for _, ok, _ in checks) else 1


# --------------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="l2smallball", description=__doc__)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, process=True):
        if process:
            sp.add_argument("--process", required=True, help="[demeaned-]wiener|bridge|xalpha|ou|ou0|iou")
            sp.add_argument("--alpha", type=float, default=0.0)
            sp.add_argument("--beta", type=float, default=1.0)
        sp.add_argument("--format", choices=("table", "csv", "json"), default="table")
        sp.add_argument("--output", default=None, help="file path (default: stdout)")

    e = sub.add_parser("eigs", help="KL eigenvalues")
    common(e)
    e.add_argument("--k", type=int, default=10)
    e.add_argument("--method", choices=("auto", "nystrom", "charfn", "closed_form"), default="auto")
    e.add_argument("--nodes", type=int, default=2000)
    e.add_argument("--compare", action="store_true", help="Nystrom next to the analytic spectrum")
    e.set_defaults(func=cmd_eigs)

    c = sub.add_parser("constant", help="distortion constant")
    common(c)
    c.add_argument("--K", type=int, default=500)
    c.set_defaults(func=cmd_constant)

    r = sub.add_parser("prob", help="small-ball probabilities")
    common(r)
    r.add_argument("--eps", required=True, help="comma-separated list")
    r.add_argument("--method", default="imhof,asymptotic", help="comma list of imhof, mc, asymptotic")
    r.add_argument("--K", type=int, default=2000)
    r.add_argument("--samples", type=int, default=1_000_000)
    r.add_argument("--seed", type=int, default=None)
    r.add_argument("--nodes", type=int, default=2000)
    r.add_argument("--spectrum", choices=("auto", "nystrom", "charfn", "closed_form"), default="auto")
    r.set_defaults(func=cmd_prob)

    s = sub.add_parser("selftest", help="alpha-invariance, dual-solver and product checks")
    common(s, process=False)
    s.add_argument("--nodes", type=int, default=1000)
    s.set_defaults(func=cmd_selftest)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    buf = io.StringIO()
    try:
        code = args.func(args, buf)
    except (SmallBallError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    with _output(args.output) as fh:
        fh.write(buf.getvalue())
    return code


if __name__ == "__main__":
    sys.exit(main())
