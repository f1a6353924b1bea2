"""Batch command line: cantor, generate, analyze, spectrum, verify.

Every output file embeds the tool version and the fully resolved
configuration (as header comments or manifest fields), and contains no
timestamps, so re-running a manifest reproduces it byte for byte.

Exit codes: 0 success, 1 argument/validation error, 2 numeric or resource
failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import __version__
from ._io import atomic_write_text, fmt, write_csv, write_json
from .analysis import (
    Spectrum,
    fit_exponents,
    legendre_D_from_xi,
    legendre_xi_from_D,
    structure_functions,
)
from .errors import MfLabError, NumericError, ResourceLimitError, ValidationError
from .fractal import (
    IfsSpec,
    box_counting_dimension,
    build_cover,
    similarity_dimension,
)
from .generators import (
    CascadeSpec,
    VelocitySeries,
    analytic_zeta,
    brownian_baseline,
    synthesize_inversion_jumps,
    synthesize_subordinated,
)
from .langevin import (
    LangevinParams,
    exact_relaxation,
    integrate_linear,
    log_flow_residual,
    scale_invariant_solution,
)
from .valuation import (
    deform,
    family_valuation,
    inversion_image,
    measure_conservation_residual,
    ultrametric_defect,
    valuation_exponent,
)


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on bad flags; the contract reserves 1 for that."""

    def error(self, message):
        self.exit(1, f"{self.prog}: error: {message}\n")


# dests accepted from a key=value config file, with their converters
_CONFIG_TYPES = {
    "pieces": int,
    "ratio": float,
    "weights": str,
    "level": int,
    "grid_exponents": str,
    "generator": str,
    "n": int,
    "count": int,
    "seed": int,
    "v0": float,
    "tau0": float,
    "branching": int,
    "depth": int,
    "sigma": float,
    "mu": float,
    "cascade_seed": int,
    "q": str,
    "tau": str,
    "fit_min": float,
    "fit_max": float,
    "h_grid": str,
    "q_grid": str,
    "direction": str,
    "outdir": str,
    "tag": str,
}


def _apply_config_file(args, argv):
    if not getattr(args, "config", None):
        return
    explicit = set()
    for token in argv:
        if token.startswith("--"):
            explicit.add(token[2:].split("=", 1)[0].replace("-", "_"))
    path = args.config
    if not os.path.exists(path):
        raise ValidationError(f"config file not found: {path}")
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValidationError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, _, value = line.partition("=")
            key = key.strip().replace("-", "_")
            if key not in _CONFIG_TYPES:
                raise ValidationError(f"{path}:{lineno}: unknown key {key!r}")
            if not hasattr(args, key):
                raise ValidationError(
                    f"{path}:{lineno}: key {key!r} does not apply to this subcommand"
                )
            if key in explicit:
                continue  # flags win
            try:
                setattr(args, key, _CONFIG_TYPES[key](value.strip()))
            except ValueError as exc:
                raise ValidationError(f"{path}:{lineno}: bad value for {key}: {exc}")


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip() != ""]
    except ValueError as exc:
        raise ValidationError(f"expected a comma-separated number list, got {text!r}")


def _grid(text: str) -> np.ndarray:
    """Parse 'min:max:count' into a linspace grid."""
    parts = text.split(":")
    if len(parts) != 3:
        raise ValidationError(f"expected min:max:count, got {text!r}")
    try:
        lo, hi, count = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError as exc:
        raise ValidationError(f"bad grid {text!r}: {exc}")
    if count < 1 or not lo < hi:
        raise ValidationError(f"bad grid {text!r}")
    return np.linspace(lo, hi, count)


def _out(args, name: str) -> str:
    return os.path.join(args.outdir, f"{args.tag}{name}")


def _comments(config: dict) -> list[str]:
    return [f"mflab {__version__}", "config = " + json.dumps(config, sort_keys=True)]


# ----------------------------------------------------------------- cantor

def _cantor_spec(args) -> IfsSpec:
    if args.spec_file:
        with open(args.spec_file) as fh:
            return IfsSpec.from_json(fh.read())
    if args.pieces is None or args.ratio is None:
        raise ValidationError("give --spec-file or both --pieces and --ratio")
    weights = _floats(args.weights) if args.weights else None
    return IfsSpec.equal_pieces(args.pieces, args.ratio, weights)


def cmd_cantor(args) -> int:
    spec = _cantor_spec(args)
    cover = build_cover(spec, args.level)
    config = {
        "subcommand": "cantor",
        "spec": spec.to_dict(),
        "level": args.level,
        "grid_exponents": args.grid_exponents,
    }
    sim = similarity_dimension(spec)
    if args.grid_exponents:
        lo, _, hi = args.grid_exponents.partition(":")
        exponents = range(int(lo), int(hi) + 1)
        box = box_counting_dimension(cover, exponents).to_dict()
    elif args.level >= 9:
        box = box_counting_dimension(cover).to_dict()
    else:
        box = None  # too shallow for a meaningful grid
    cover.to_csv(_out(args, "cover.csv"), _comments(config))
    write_json(
        _out(args, "dimension.json"),
        {
            "version": __version__,
            "config": config,
            "similarity": sim.to_dict(),
            "box_counting": box,
        },
    )
    return 0


# ---------------------------------------------------------------- generate

def _generate_one(args, seed):
    if args.generator == "brownian":
        return brownian_baseline(args.v0, args.n, seed)
    if args.generator == "subordinated":
        weights = tuple(_floats(args.weights)) if args.weights else None
        spec = CascadeSpec(
            branching=args.branching,
            depth=args.depth,
            weights=weights,
            mu=args.mu,
            sigma=args.sigma,
            seed=args.cascade_seed,
        )
        return synthesize_subordinated(spec, args.v0, args.tau0, args.n, seed)
    if args.generator == "inversion":
        if args.ifs_file:
            with open(args.ifs_file) as fh:
                ifs = IfsSpec.from_json(fh.read())
        else:
            if args.pieces is None or args.ratio is None:
                raise ValidationError(
                    "inversion generator needs --ifs-file or --pieces/--ratio"
                )
            weights = _floats(args.weights) if args.weights else None
            ifs = IfsSpec.equal_pieces(args.pieces, args.ratio, weights)
        return synthesize_inversion_jumps(ifs, args.v0, args.tau0, args.n, seed)
    raise ValidationError(f"unknown generator {args.generator!r}")


def cmd_generate(args) -> int:
    config = {
        "subcommand": "generate",
        "generator": args.generator,
        "n": args.n,
        "seed": args.seed,
        "count": args.count,
        "v0": args.v0,
        "tau0": args.tau0,
        "weights": args.weights,
        "branching": args.branching,
        "depth": args.depth,
        "sigma": args.sigma,
        "mu": args.mu,
        "cascade_seed": args.cascade_seed,
        "pieces": args.pieces,
        "ratio": args.ratio,
        "ifs_file": args.ifs_file,
    }
    entries = []
    for i in range(args.count):
        seed = args.seed if args.count == 1 else [args.seed, i]
        series = _generate_one(args, seed)
        name = "series.csv" if args.count == 1 else f"series_{i:03d}.csv"
        series.to_csv(_out(args, name), _comments(config))
        entries.append({"file": f"{args.tag}{name}", "seed": seed})
    manifest = {
        "version": __version__,
        "config": config,
        "series": entries,
    }
    if args.generator == "subordinated" and args.weights:
        q = [1.0, 2.0, 3.0, 4.0]
        manifest["oracle"] = {
            "q": q,
            "xi_expected": analytic_zeta(
                _floats(args.weights), np.asarray(q) / 2.0
            ).tolist(),
        }
    write_json(_out(args, "manifest.json"), manifest)
    return 0


# ----------------------------------------------------------------- analyze

def cmd_analyze(args) -> int:
    if not os.path.exists(args.input):
        raise ValidationError(f"input file not found: {args.input}")
    series = VelocitySeries.from_csv(args.input)
    q = _floats(args.q)
    tau = np.asarray(_floats(args.tau)) if args.tau else None
    table = structure_functions(series, q, tau)
    fit_min = args.fit_min if args.fit_min is not None else 4.0 * series.spacing
    fit_max = args.fit_max if args.fit_max is not None else series.span / 8.0
    fit = fit_exponents(table, (fit_min, fit_max))
    config = {
        "subcommand": "analyze",
        "input": args.input,
        "q": q,
        "tau": None if tau is None else tau.tolist(),
        "fit_min": fit_min,
        "fit_max": fit_max,
    }
    table.to_csv(_out(args, "table.csv"), _comments(config))
    payload = {"version": __version__, "config": config}
    payload.update(fit.to_dict())
    write_json(_out(args, "fit.json"), payload)

    # plot data: log-log columns plus the fitted line, ready for any plotter
    rows = []
    for qi, qv in enumerate(table.q.tolist()):
        usable = (table.counts[qi] > 0) & (table.S[qi] > 0.0)
        log_tau = np.log(table.tau[usable])
        log_s = np.log(table.S[qi][usable])
        anchor = log_s - fit.xi[qi] * log_tau
        intercept = float(np.mean(anchor))
        for lt, ls in zip(log_tau.tolist(), log_s.tolist()):
            rows.append((qv, lt, ls, intercept + fit.xi[qi] * lt))
    write_csv(_out(args, "plot.csv"), "q,log_tau,log_S,log_S_fit", rows, _comments(config))
    return 0


# ---------------------------------------------------------------- spectrum

def cmd_spectrum(args) -> int:
    if not os.path.exists(args.input):
        raise ValidationError(f"input file not found: {args.input}")
    config = {
        "subcommand": "spectrum",
        "direction": args.direction,
        "input": args.input,
        "h_grid": args.h_grid,
        "q_grid": args.q_grid,
    }
    if args.direction == "xi-to-D":
        with open(args.input) as fh:
            data = json.loads(fh.read())
        try:
            pair = (data["q"], data["xi"])
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"{args.input} lacks q/xi arrays") from exc
        spectrum = legendre_D_from_xi(pair, _grid(args.h_grid))
        spectrum.to_csv(_out(args, "spectrum.csv"), _comments(config))
        return 0
    if args.direction == "D-to-xi":
        spectrum = Spectrum.from_csv(args.input)
        fit = legendre_xi_from_D(spectrum, _grid(args.q_grid))
        write_csv(
            _out(args, "exponents.csv"),
            "q,xi",
            zip(fit.q.tolist(), fit.xi.tolist()),
            _comments(config),
        )
        return 0
    raise ValidationError(f"unknown direction {args.direction!r}")


# ------------------------------------------------------------------ verify

def _verify_checks(seed: int, perturb: str | None) -> list[dict]:
    rng = np.random.default_rng(seed)
    checks = []

    def add(name, passed, detail):
        checks.append({"name": name, "passed": bool(passed), "detail": detail})

    factor = 1.01 if perturb == "T" else 1.0
    worst = 0.0
    for (t, a, p, n) in [(0.1, 0.5, 1.5, 3), (0.01, 1 / 3, 2.0, 7), (0.37, 0.21, 2.5, 11)]:
        res = measure_conservation_residual(t, a, p, n, t_big_factor=factor)
        worst = max(worst, res.residual / n)
    add("measure-conservation", worst < 1e-10, f"max residual/n = {worst:.3e}")

    tm = rng.uniform(0.01, 0.99, 1000)
    aa = rng.uniform(0.0, 3.0, 1000)
    worst = max(
        abs(valuation_exponent(t_, inversion_image(t_, a_).tau_plus) - a_)
        for t_, a_ in zip(tm, aa)
    )
    add("inversion-round-trip", worst < 1e-10, f"max |a' - a| = {worst:.3e}")

    xs = rng.uniform(1e-6, 0.999, 1000)
    ph = rng.uniform(0.0, 1.0, 1000)
    worst = 0.0
    for x, f in zip(xs, ph):
        plus, minus = deform(x, f)
        worst = max(worst, abs(plus * minus - x * x) / (x * x))
    add("deformation-geometric-mean", worst < 1e-13, f"max rel defect = {worst:.3e}")

    t_grid = np.geomspace(1e-6, 0.5, 1000)
    t_arr, tau_arr = scale_invariant_solution(3.0 * math.log(1e6), t_grid)
    residual = log_flow_residual(t_arr, tau_arr)
    add("log-time-flow", residual < 1e-8, f"max residual = {residual:.3e}")

    params = LangevinParams(T0=2.0, sigma=0.0, v0=1.0, dt=0.01, steps=200, seed=seed)
    exact = exact_relaxation(params)
    closed = params.v0 * np.exp(-exact.t / params.T0)
    dev = float(np.max(np.abs(exact.v - closed)))
    coarse = integrate_linear(params)
    fine = integrate_linear(
        LangevinParams(T0=2.0, sigma=0.0, v0=1.0, dt=0.005, steps=400, seed=seed)
    )
    err_c = float(np.max(np.abs(coarse.v - params.v0 * np.exp(-coarse.t / 2.0))))
    err_f = float(np.max(np.abs(fine.v - params.v0 * np.exp(-fine.t / 2.0))))
    ratio = err_c / err_f
    add(
        "linear-relaxation",
        dev < 1e-12 and 1.6 < ratio < 2.4,
        f"exact dev = {dev:.3e}, halving ratio = {ratio:.2f}",
    )

    ls = rng.uniform(0.05, 0.95, 1000)
    lams = rng.uniform(0.1, 3.0, 1000)
    ds = rng.uniform(1e-8, 1e-3, 1000)
    worst = max(
        abs(family_valuation(d, lam, l) - l) - abs(math.log(lam)) / math.log(1.0 / d)
        for d, lam, l in zip(ds, lams, ls)
    )
    add("valuation-convergence", worst < 1e-10, f"max bound excess = {worst:.3e}")

    ok = True
    detail = ""
    for _ in range(50):
        l1, l2 = rng.uniform(0.1, 0.9, 2)
        lam1, lam2 = rng.uniform(0.5, 2.0, 2)
        defects = [ultrametric_defect(d, l1, l2, lam1, lam2) for d in (1e-4, 1e-8, 1e-12)]
        if not (defects[0] > defects[1] > defects[2] > 0.0):
            ok = False
            detail = f"non-monotone defects {defects}"
            break
    add("ultrametric-defect", ok, detail or "defect shrinks across 1e-4, 1e-8, 1e-12")
    return checks


def cmd_verify(args) -> int:
    checks = _verify_checks(args.seed, args.perturb)
    all_passed = all(c["passed"] for c in checks)
    if args.json:
        print(json.dumps({"version": __version__, "passed": all_passed, "checks": checks}, indent=2))
    else:
        for c in checks:
            print(f"[{'PASS' if c['passed'] else 'FAIL'}] {c['name']}: {c['detail']}")
        print(f"verify: {'all checks passed' if all_passed else 'FAILURES detected'}")
    return 0 if all_passed else 2


# ------------------------------------------------------------------- main

def build_parser() -> _Parser:
    parser = _Parser(prog="mflab", description=__doc__)
    parser.add_argument("--version", action="version", version=f"mflab {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(p):
        p.add_argument("--outdir", default=".", help="output directory")
        p.add_argument("--tag", default="", help="prefix for output file names")
        p.add_argument("--config", default=None, help="key=value defaults file; flags win")

    p = sub.add_parser("cantor", help="build a cover and report dimensions")
    common(p)
    p.add_argument("--pieces", type=int, default=None)
    p.add_argument("--ratio", type=float, default=None)
    p.add_argument("--weights", default=None, help="comma-separated piece weights")
    p.add_argument("--spec-file", default=None, help="IFS spec as JSON")
    p.add_argument("--level", type=int, default=10)
    p.add_argument("--grid-exponents", default=None, help="box grid as lo:hi")
    p.set_defaults(func=cmd_cantor)

    p = sub.add_parser("generate", help="synthesize a velocity series")
    common(p)
    p.add_argument("--generator", required=True, choices=["subordinated", "inversion", "brownian"])
    p.add_argument("--n", type=int, default=2**14)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=1, help="ensemble size")
    p.add_argument("--v0", type=float, default=1.0)
    p.add_argument("--tau0", type=float, default=1.0)
    p.add_argument("--weights", default=None)
    p.add_argument("--branching", type=int, default=2)
    p.add_argument("--depth", type=int, default=10)
    p.add_argument("--sigma", type=float, default=None)
    p.add_argument("--mu", type=float, default=0.0)
    p.add_argument("--cascade-seed", type=int, default=0)
    p.add_argument("--pieces", type=int, default=None)
    p.add_argument("--ratio", type=float, default=None)
    p.add_argument("--ifs-file", default=None)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("analyze", help="structure functions and exponent fits")
    common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--q", default="1,2,4")
    p.add_argument("--tau", default=None, help="comma-separated lags (series time units)")
    p.add_argument("--fit-min", type=float, default=None)
    p.add_argument("--fit-max", type=float, default=None)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("spectrum", help="exchange exponents and spectrum")
    common(p)
    p.add_argument("--direction", required=True, choices=["xi-to-D", "D-to-xi"])
    p.add_argument("--input", required=True)
    p.add_argument("--h-grid", default="0.0:1.5:601")
    p.add_argument("--q-grid", default="-8.0:8.0:65")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("verify", help="run the identity suite")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--perturb", default=None, choices=["T"], help="inject a defect")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_verify)

    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _apply_config_file(args, argv)
        return args.func(args)
    except ValidationError as exc:
        print(f"mflab: error: {exc}", file=sys.stderr)
        return 1
    except (NumericError, ResourceLimitError) as exc:
        print(f"mflab: numeric/resource failure: {exc}", file=sys.stderr)
        return 2
    except MfLabError as exc:
        print(f"mflab: failure: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"mflab: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
