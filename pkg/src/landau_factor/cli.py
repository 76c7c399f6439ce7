"""``landau-factor`` command-line front end.

Commands: ``identities``, ``factorize``, ``holonomy``, ``scan``, ``report``.
Exit status is 0 when every verdict passes, 2 when a verdict fails and 1 on
configuration or runtime errors.
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import analysis
from .config import ConfigError, ScenarioConfig, load_config
from .export import (
    FRAME_COLUMNS,
    dump_matrix,
    frame_rows,
    line_plot_svg,
    read_json,
    write_csv,
    write_json,
)
from .geometry import FrameDriftError, PathError, QuadratureError, displacement_path
from .hilbert import DimensionCapError, build_operator_set
from .propagators import ConvergenceError, HermiticityError, factorize

log = logging.getLogger("landau_factor")

COMMANDS = ("identities", "factorize", "holonomy", "scan", "report")
VERDICTS = "verdicts.json"

EXIT_OK, EXIT_ERROR, EXIT_FAIL = 0, 1, 2


def _out_dir(config: ScenarioConfig | None, args) -> Path:
    if args.out:
        return Path(args.out)
    return Path(config.output.directory if config else "out")


def _wants(config: ScenarioConfig, fmt: str) -> bool:
    return fmt in config.output.formats


def _identity_rows(reports):
    for r in reports:
        for t, a, b in zip(r.times, r.interior, r.full):
            yield [r.name, t, a, b, r.tolerance, r.verdict]


def _identity_plots(out: Path, reports):
    for k, r in enumerate(reports):
        series = {"interior": (r.times, r.interior), "full space": (r.times, r.full)}
        line_plot_svg(out / f"identity_{k:02d}.svg", series, r.name, "t", "relative residual")


def cmd_identities(config: ScenarioConfig, args) -> dict:
    reports = analysis.identity_suite(config, progress=lambda n: log.info("identity %s", n))
    out = _out_dir(config, args)
    if _wants(config, "csv"):
        write_csv(out / "identities.csv", ["identity", "t", "interior", "full", "tolerance", "verdict"],
                  _identity_rows(reports))
    if _wants(config, "svg"):
        _identity_plots(out, reports)
    for r in reports:
        print(f"{r.verdict.upper():4s}  {r.name:40s} max interior {r.max_interior:.3e}  (tol {r.tolerance:.0e})")
    return {"verdicts": [r.to_dict() for r in reports]}


def cmd_factorize(config: ScenarioConfig, args) -> dict:
    p = config.physical
    path = config.build_path()
    frame = config.frame(path=path)
    t = config.end_time(path)
    ops = build_operator_set(p, config.basis)
    tol = config.integrator.tol
    mode = config.run.mode
    bundle = factorize(ops, p, frame, t, tol=tol, with_u_xi=(mode == "full"), u2d_source="factorized")
    idx = ops.interior_index
    unit = {}
    for name in ("R", "g_t", "g_0", "U1d", "M", "UB", "Utilde_eps", "U_eps", "U_xi"):
        U = getattr(bundle, name)
        if U is not None:
            X = U[:, idx]
            unit[name] = float(np.max(np.abs(X.conj().T @ X - np.eye(idx.size))))
    verdicts = [analysis.IdentityReport(f"unitarity {k}", [t], [v], [v], 1e-8).to_dict() for k, v in unit.items()]
    dpath = displacement_path(frame, p.L)
    ue_dev = analysis.projected_distance(bundle.U_eps_1st, bundle.U_eps, ops.interior)
    if mode != "adiabatic":
        rep = analysis.check_full_factorization(config.oracle_basis or config.basis, p, frame, t,
                                                integ_tol=max(tol, 1e-7), mode=mode)
        verdicts.append(rep.to_dict())
        print(f"{rep.verdict.upper():4s}  {rep.name}: {rep.max_interior:.3e} (tol {rep.tolerance:.0e})")
    scalars = {
        "t": t, "beta": bundle.beta, "d": list(bundle.d), "delta": bundle.delta, "gamma": bundle.gamma,
        "coefficients": bundle.coeffs.as_dict() if bundle.coeffs else None,
        "u_eps_first_order_residual": ue_dev,
        "unitarity_full_space": bundle.unitarity(),
    }
    out = _out_dir(config, args)
    if args.dump_matrices:
        for name in ("R", "g_t", "g_0", "U1d", "M", "UB", "Utilde_eps", "U_eps", "U_xi", "U_eps_1st"):
            U = getattr(bundle, name)
            if U is not None:
                dump_matrix(out / "matrices" / f"{name}.bin", U)
    if _wants(config, "csv"):
        times = np.linspace(0.0, t, config.run.sample_count)
        write_csv(out / "frame.csv", FRAME_COLUMNS, frame_rows(frame, dpath, times))
    for k, v in unit.items():
        print(f"{'PASS' if v <= 1e-8 else 'FAIL':4s}  unitarity {k:12s} {v:.3e}")
    return {"verdicts": verdicts, "scalars": scalars}


def cmd_holonomy(config: ScenarioConfig, args) -> dict:
    p = config.physical
    path = config.build_path()
    frame = config.frame(path=path)
    if not path.is_closed():
        raise ConfigError("holonomy needs a closed path (cone with integer periods or a triangle)")
    h = analysis.holonomy_phases(p, frame, config.holonomy.cutoff, config.holonomy.m_values)
    errs = [r["error"] for r in h["rows"]]
    reports = [analysis.IdentityReport("R(T) phases = -m Omega", [h["t"]], [max(errs)], [max(errs)], 1e-4,
                                       {"flagged": h["flagged"]})]
    ang = analysis.IdentityReport(
        "frame holonomy = solid angle", [h["t"]],
        [abs(math.remainder(h["holonomy_angle"] - h["omega"], 2 * math.pi))], [frame.drift], 1e-6)
    reports.append(ang)
    out = _out_dir(config, args)
    if _wants(config, "csv"):
        write_csv(out / "holonomy.csv", ["m", "phase", "expected", "error", "eigen_residual"],
                  [[r["m"], r["phase"], r["expected"], r["error"], r["eigen_residual"]] for r in h["rows"]])
        dpath = displacement_path(frame, p.L)
        times = np.linspace(0.0, frame.duration, max(config.run.sample_count, 2))
        write_csv(out / "frame.csv", FRAME_COLUMNS, frame_rows(frame, dpath, times))
    print(f"Omega = {h['omega']:.12f}")
    print(f"{'m':>3s} {'phase':>14s} {'-m Omega':>14s} {'error':>10s}")
    for r in h["rows"]:
        print(f"{r['m']:3d} {r['phase']:14.10f} {r['expected']:14.10f} {r['error']:10.2e}")
    passed = all(r.passed for r in reports) and not h["flagged"]
    verdicts = [r.to_dict() for r in reports]
    if h["flagged"]:
        verdicts[0]["verdict"] = "fail"
    return {"verdicts": verdicts, "holonomy": h, "passed_override": passed}


def cmd_scan(config: ScenarioConfig, args) -> dict:
    sc = config.scan
    if sc is None:
        raise ConfigError("scan needs a [scan] section")
    res = analysis.scaling_scan(config, sc.control, sc.values, sc.response, sc.end_time_fraction,
                                sc.expected, sc.band, threads=args.threads)
    out = _out_dir(config, args)
    if _wants(config, "csv"):
        write_csv(out / "scan.csv", [sc.control, sc.response], zip(res.values, res.responses))
    if _wants(config, "svg"):
        _scan_plot(out / "scan.svg", res.to_dict())
    print(f"exponent {res.exponent:.4f} (fit residual {res.fit_residual:.2e})")
    verdict = "pass" if res.within_band in (True, None) else "fail"
    return {"scan": res.to_dict(),
            "verdicts": [{"name": f"scan {sc.response} vs {sc.control}", "verdict": verdict,
                          "exponent": res.exponent, "expected": sc.expected, "band": sc.band}]}


def _scan_plot(path, d):
    line_plot_svg(path, {d["response"]: (d["values"], d["responses"])},
                  f"{d['response']} vs {d['control']} (slope {d['exponent']:.3f})",
                  d["control"], d["response"], logx=True, logy=True)


def cmd_report(args) -> int:
    out = Path(args.out or "out")
    src = out / VERDICTS
    if not src.exists():
        print(f"no {VERDICTS} in {out}", file=sys.stderr)
        return EXIT_ERROR
    doc = read_json(src)
    verdicts = doc.get("verdicts", [])
    print(f"command: {doc.get('command')}  schema {doc.get('schema_version')}")
    for v in verdicts:
        val = v.get("max_interior", v.get("exponent"))
        val_s = f"{val:.3e}" if isinstance(val, (int, float)) else "-"
        print(f"{v['verdict'].upper():4s}  {v['name']:40s} {val_s}")
    for k, v in enumerate(verdicts):
        if "times" in v and "interior" in v:
            full = [x if x is not None else float("nan") for x in v["full"]]
            line_plot_svg(out / f"report_{k:02d}.svg",
                          {"interior": (v["times"], v["interior"]), "full space": (v["times"], full)},
                          v["name"], "t", "relative residual")
    if "scan" in doc:
        _scan_plot(out / "report_scan.svg", doc["scan"])
    return EXIT_OK if all(v["verdict"] == "pass" for v in verdicts) else EXIT_FAIL


HANDLERS = {
    "identities": cmd_identities,
    "factorize": cmd_factorize,
    "holonomy": cmd_holonomy,
    "scan": cmd_scan,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="landau-factor",
                                 description="Factorized evolution of a Landau electron in a rotating field.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="scenario TOML file (not needed for report)")
    ap.add_argument("--out", help="output directory (default: [output].directory)")
    ap.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                    help="override a config entry, e.g. physical.eps=0.02 (repeatable)")
    ap.add_argument("--threads", type=int, default=1, help="workers for scan points")
    ap.add_argument("--dump-matrices", action="store_true", help="write factor matrices as binary dumps")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_ERROR
    try:
        if args.command == "report":
            return cmd_report(args)
        if not args.config:
            raise ConfigError(f"{args.command} needs --config")
        config = load_config(args.config, args.override)
        payload = HANDLERS[args.command](config, args)
    except (ConfigError, DimensionCapError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (ConvergenceError, HermiticityError, FrameDriftError, QuadratureError, PathError,
            np.linalg.LinAlgError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    override = payload.pop("passed_override", None)
    passed = all(v["verdict"] == "pass" for v in payload["verdicts"])
    if override is not None:
        passed = passed and override
    payload["passed"] = passed
    out = _out_dir(config, args)
    if _wants(config, "json"):
        write_json(out / VERDICTS, payload, config, args.command)
    return EXIT_OK if passed else EXIT_FAIL


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
