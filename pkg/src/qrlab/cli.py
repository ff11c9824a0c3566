"""Batch front door: JSON-configured experiments, CSV/JSON reports.

Subcommands: algebra, homotopy, degree, distortion, limits, estimates, demo.
Every run writes ``summary.json`` (extracted constants and pass/fail flags)
plus CSV tables into the output directory.  Exit codes: 0 all assertions
passed, 1 assertion failure, 2 invalid configuration, 3 I/O error.

Reports are byte-reproducible: reductions are deterministic, floats are
serialized via repr, keys are sorted, and no timestamps are emitted.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from .exterior_algebra import ComassConfig, KCovector, comass_report, grassmann_norm
from .grid_forms import GridDomain, GridForm, HolderSequence, bump_form, read_qrgf
from .homotopy_operator import TOperator, homotopy_identity_residual, norm_bound_check
from .sampled_maps import DistortionParams, SampledMap, derivative, distortion_check
from .families import family_by_name, sample
from .degree_index import Subdomain, degree, preimage_count
from .cohomology_limits import (
    FamilyParams,
    HarmonicBasis,
    admissibility_check,
    build_limit_map,
    covering_rescalings,
    default_dictionary,
    exact_form_decay,
    pairing_lower_bound_check,
    point_evaluate_phi,
)
from .estimates import (
    Cube,
    CubeFamily,
    DEFAULT_LAMBDAS,
    gehring_probe,
    holder_average_monotonicity,
    weak_reverse_holder_check,
)
from .target_forms import AnalyticTargetForm, TrigField, constant_form

EXIT_OK = 0
EXIT_ASSERT = 1
EXIT_CONFIG = 2
EXIT_IO = 3

_SCHEMAS = {
    "algebra": {"command", "n", "terms", "restarts", "sample_budget", "seed", "out"},
    "homotopy": {"command", "resolution", "radius", "suite", "ps", "residual_tol",
                 "seed", "out"},
    "degree": {"command", "family", "k", "scale", "y", "resolution", "radius",
               "matrix", "seed", "out", "map_file", "torus", "corner", "sides"},
    "distortion": {"command", "family", "kind", "k", "scale", "a", "matrix", "K",
                   "resolution", "seed", "out", "map_file", "torus", "corner",
                   "sides"},
    "limits": {"command", "n", "radii", "K", "D", "resolution_factor",
               "dictionary_scales", "exact_test_frequency", "seed", "out"},
    "estimates": {"command", "family", "k", "scale", "a", "K", "resolution",
                  "levels", "lambdas", "seed", "out"},
    "demo": {"command", "seed", "out"},
}


class ConfigError(Exception):
    pass


def _json_default(o):
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serializable: {type(o)}")


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=2, default=_json_default)
                    + "\n")


def write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(repr(x) if isinstance(x, float) else str(x) for x in row))
    path.write_text("\n".join(lines) + "\n")


def _load_config(args) -> dict:
    cfg: dict = {}
    if args.config:
        try:
            text = Path(args.config).read_text()
        except OSError as e:
            raise IOError(f"cannot read config: {e}")
        try:
            cfg = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(
                f"malformed JSON at line {e.lineno}, column {e.colno}: {e.msg}")
        if not isinstance(cfg, dict):
            raise ConfigError("configuration must be a JSON object")
    cfg.setdefault("command", args.command)
    if cfg["command"] != args.command:
        raise ConfigError(
            f"config command {cfg['command']!r} disagrees with {args.command!r}")
    for key, value in vars(args).items():
        if key in ("config", "command") or value is None:
            continue
        cfg[key] = value
    allowed = _SCHEMAS[args.command]
    unknown = set(cfg) - allowed
    if unknown:
        raise ConfigError(f"unknown configuration fields: {sorted(unknown)}")
    cfg.setdefault("seed", 0)
    cfg.setdefault("out", "out")
    return cfg


def _sampled_map_from_cfg(cfg: dict, default_res: int, corner, sides) -> SampledMap:
    res = int(cfg.get("resolution", default_res))
    if "map_file" in cfg:
        n, m, file_res, coeffs = read_qrgf(cfg["map_file"])
        dom = GridDomain.box(cfg.get("corner", corner), cfg.get("sides", sides),
                             file_res)
        return SampledMap(dom, m, coeffs, torus=bool(cfg.get("torus", False)))
    fam = family_by_name(cfg.get("family", "winding"), n=2,
                         k=cfg.get("k", 2), scale=cfg.get("scale", 1.0),
                         a=cfg.get("a", 2.0),
                         **({"matrix": cfg["matrix"]} if "matrix" in cfg else {}))
    dom = GridDomain.box(cfg.get("corner", corner), cfg.get("sides", sides), res)
    return sample(fam, dom)


# ---------------------------------------------------------------------------
# Command implementations.  Each returns (summary dict, ok flag).
# ---------------------------------------------------------------------------

def cmd_algebra(cfg: dict, out: Path):
    n = int(cfg.get("n", 4))
    terms = cfg.get("terms", [{"index": [1, 2], "coeff": 1.0},
                              {"index": [3, 4], "coeff": 1.0}])
    k = len(terms[0]["index"])
    cov = KCovector.zero(n, k)
    for t in terms:
        cov = cov + float(t["coeff"]) * KCovector.basis(n, tuple(t["index"]))
    ccfg = ComassConfig(restarts=int(cfg.get("restarts", 12)),
                        sample_budget=int(cfg.get("sample_budget", 200_000)),
                        seed=int(cfg["seed"]))
    rep = comass_report(cov, ccfg)
    g = grassmann_norm(cov)
    binom_bound = math.sqrt(math.comb(n, k)) * rep.value
    ok = rep.value <= g + 1e-9 and g <= binom_bound + 1e-9
    summary = {"n": n, "degree": k, "comass_ascent": rep.ascent,
               "comass_sampled": rep.sampled, "comass": rep.value,
               "grassmann": g, "inequality_chain_ok": ok,
               "methods_agree": abs(rep.ascent - rep.sampled) <= 1e-3 * max(rep.value, 1.0)}
    write_csv(out / "algebra.csv", ["method", "value"],
              [["ascent", rep.ascent], ["sampled", rep.sampled], ["grassmann", g]])
    return summary, ok


def _homotopy_suite(dom: GridDomain, names) -> list[tuple[str, GridForm]]:
    x = dom.points
    out = []
    for name in names:
        if name == "volume":
            out.append((name, GridForm.constant(dom, KCovector.basis(2, (1, 2)))))
        elif name == "dx1":
            out.append((name, GridForm.constant(dom, KCovector.basis(2, (1,)))))
        elif name == "cos":
            v = np.zeros(dom.res + (2,))
            v[..., 1] = np.cos(0.5 * np.pi * x[..., 0] / dom.radius)
            out.append((name, GridForm(dom, 1, v)))
        elif name == "poly-volume":
            v = np.zeros(dom.res + (1,))
            v[..., 0] = 1.0 + 0.5 * x[..., 0] * x[..., 1] / dom.radius**2
            out.append((name, GridForm(dom, 2, v)))
        else:
            raise ConfigError(f"unknown suite form {name!r}")
    return out


def cmd_homotopy(cfg: dict, out: Path):
    res = int(cfg.get("resolution", 32))
    radius = float(cfg.get("radius", 1.0))
    tol = float(cfg.get("residual_tol", 0.08))
    dom = GridDomain.ball_domain([0.0, 0.0], radius, res)
    op = TOperator.for_domain(dom)
    suite = _homotopy_suite(dom, cfg.get("suite", ["volume", "dx1", "cos"]))
    residuals = {name: homotopy_identity_residual(w, op) for name, w in suite}
    ps = [math.inf if p in ("inf", "Infinity") else float(p)
          for p in cfg.get("ps", [1, 2, "inf"])]
    bounds = {str(p): norm_bound_check([w for _, w in suite], p, op)["constant"]
              for p in ps}
    ok = all(r <= tol for r in residuals.values())
    rows = [[name, res, float(dom.h[0]), r] for name, r in sorted(residuals.items())]
    write_csv(out / "homotopy_identity.csv", ["form", "resolution", "h", "residual"],
              rows)
    write_csv(out / "homotopy_norm_bounds.csv", ["p", "resolution", "h", "constant"],
              [[p, res, float(dom.h[0]), c] for p, c in sorted(bounds.items())])
    return {"residuals": residuals, "norm_bound_constants": bounds,
            "residual_tol": tol, "resolution": res, "ok": ok}, ok


def cmd_degree(cfg: dict, out: Path):
    res = int(cfg.get("resolution", 128))
    f = _sampled_map_from_cfg(cfg, res, corner=[-1.1, -1.1], sides=[2.2, 2.2])
    y = [float(v) for v in str(cfg.get("y", "0,0")).split(",")]
    radius = float(cfg.get("radius", 1.0))
    result = degree(f, y, Subdomain.ball([0.0, 0.0], radius))
    try:
        count = preimage_count(f, y)["count"] if np.linalg.norm(y) > 1e-9 else None
    except ValueError:
        count = None
    summary = {"raw": result.raw, "rounded": result.rounded, "gap": result.gap,
               "bump_radius": result.bump_radius,
               "boundary_distance": result.boundary_distance,
               "unreliable": result.unreliable, "resolution": res,
               "preimage_count": count}
    write_csv(out / "degree.csv",
              ["resolution", "h", "raw", "rounded", "gap", "unreliable"],
              [[res, float(f.domain.h[0]), result.raw, result.rounded, result.gap,
                result.unreliable]])
    return summary, not result.unreliable


def cmd_distortion(cfg: dict, out: Path):
    res = int(cfg.get("resolution", 256))
    f = _sampled_map_from_cfg(cfg, res, corner=[-1.0, -1.0], sides=[2.0, 2.0])
    kind = cfg.get("kind", "qr")
    params = DistortionParams(K=float(cfg.get("K", 1.0)))
    if kind.startswith("qr-curve"):
        params.omega = constant_form(f.m, f.domain.n, tuple(range(1, f.domain.n + 1)),
                                     torus=f.torus)
    rep = distortion_check(f, kind, params)
    summary = {"kind": kind, "quantiles": rep.quantiles,
               "satisfied_fraction": rep.satisfied_fraction,
               "max_minimal_constant": rep.max_min_constant(),
               "resolution": res}
    write_csv(out / "distortion.csv",
              ["quantile", "resolution", "h", "residual"],
              [[q, res, float(f.domain.h[0]), v]
               for q, v in sorted(rep.quantiles.items())])
    return summary, True


def cmd_limits(cfg: dict, out: Path):
    n = int(cfg.get("n", 2))
    radii = [float(r) for r in cfg.get("radii", [2.0, 4.0, 8.0])]
    K = float(cfg.get("K", 1.0))
    D = float(cfg.get("D", 2.0 ** (n + 1)))
    factor = int(cfg.get("resolution_factor", 12))
    vol = constant_form(n, n, tuple(range(1, n + 1)), torus=True)
    params = FamilyParams(K=K, D=D, omega=vol)
    seq = covering_rescalings(n, radii, params,
                              res_rule=lambda r: max(64, int(factor * r)))
    holder = HolderSequence.degree_over_k(n)
    basis = HarmonicBasis(m=n, top_degree=n)
    dictionary = []
    for deg in range(n + 1):
        dictionary += default_dictionary(
            n, deg, scales=tuple(cfg.get("dictionary_scales", (0.3, 0.45, 0.7))))

    adm = admissibility_check(seq, basis, C=D**2, holder=holder)
    nu = tuple(cfg.get("exact_test_frequency", [1] + [0] * (n - 1)))
    alpha = AnalyticTargetForm.of(n, 0, {(): TrigField.sin(n, nu)}, torus=True)
    decay = exact_form_decay(seq, alpha, dictionary)
    L = build_limit_map(seq, basis, holder, dictionary)
    phi = point_evaluate_phi(L)
    bound_rows = pairing_lower_bound_check(seq)

    ok = (adm.passed and decay.consistent and phi.rank == 2**n
          and phi.defect <= 0.05 and all(r["holds"] for r in bound_rows))

    write_csv(out / "limits_decay.csv",
              ["j", "A", "pairing_max", "normalized"],
              [[r.j, r.A, r.pairing_max, r.normalized] for r in decay.rows])
    class_rows = []
    for (k, I), cl in sorted(L.classes.items()):
        class_rows.append([k, "".join(map(str, I)) or "1",
                           cl.cauchy_increments[-1] if cl.cauchy_increments else 0.0,
                           cl.closedness_residual])
    write_csv(out / "limits_classes.csv",
              ["degree", "class", "cauchy_last_increment", "closedness_residual"],
              class_rows)
    write_csv(out / "limits_pairing_bound.csv",
              ["j", "A", "pairing", "bound", "holds"],
              [[r["j"], r["A"], r["pairing"], r["bound"], r["holds"]]
               for r in bound_rows])
    phi_table = {f"{k}:{''.join(map(str, I)) or '1'}": phi.table[(k, I)].coeffs.tolist()
                 for (k, I) in phi.table}
    write_json(out / "phi.json", {"x0": list(phi.x0), "defect": phi.defect,
                                  "rank": phi.rank, "matrix": phi_table})
    summary = {"admissibility_worst": adm.worst, "admissibility_bound": adm.bound,
               "decay_consistent": decay.consistent,
               "decay_exponent": decay.fitted_exponent,
               "phi_rank": phi.rank, "phi_defect": phi.defect,
               "pairing_bound_all_hold": all(r["holds"] for r in bound_rows),
               "resolutions": [e.F.domain.res[0] for e in seq.entries],
               "ok": ok}
    return summary, ok


def cmd_estimates(cfg: dict, out: Path):
    res = int(cfg.get("resolution", 128))
    f = _sampled_map_from_cfg(cfg, res, corner=[-1.5, -1.5], sides=[3.0, 3.0])
    K = float(cfg.get("K", 1.0))
    levels = int(cfg.get("levels", 3))
    lambdas = tuple(float(x) for x in cfg.get("lambdas", DEFAULT_LAMBDAS))
    root = Cube((-1.0, -1.0), 2.0)
    fam = CubeFamily.build(root, levels)
    df = derivative(f)
    rows = weak_reverse_holder_check(f, 1.0, K, fam, df=df)
    gr = gehring_probe(f, fam, df=df, lambdas=lambdas)
    mono = holder_average_monotonicity(f, fam, df=df)
    min_margin = min(r.margin for r in rows)
    ok = min_margin >= -1e-9 and mono <= 1e-10
    csv_rows = []
    for row in rows:
        for lam in lambdas:
            csv_rows.append([repr(row.cube.corner[0]), repr(row.cube.corner[1]),
                             row.cube.side, res, float(f.domain.h[0]), lam,
                             row.margin, gr.ratios[lam]])
    write_csv(out / "estimates.csv",
              ["corner_x", "corner_y", "side", "resolution", "h", "lambda",
               "reverse_holder_margin", "gehring_ratio"], csv_rows)
    summary = {"min_margin": min_margin, "monotonicity_excess": mono,
               "gehring_ratios": {str(k): v for k, v in gr.ratios.items()},
               "lambda_star": gr.lambda_star, "ok": ok}
    return summary, ok


def cmd_demo(cfg: dict, out: Path):
    """End-to-end covering-map pipeline at demo scale."""
    summary = {}
    ok = True
    sub = dict(cfg)
    sub.pop("command", None)
    for name, runner, extra in (
        ("degree", cmd_degree, {"family": "winding", "k": 2, "y": "0,0",
                                "resolution": 96}),
        ("limits", cmd_limits, {"radii": [2.0, 4.0, 8.0], "resolution_factor": 10}),
        ("estimates", cmd_estimates, {"family": "covering", "resolution": 96}),
    ):
        c = {**sub, **extra, "command": name}
        c = {k: v for k, v in c.items() if k in _SCHEMAS[name]}
        s, good = runner(c, out)
        summary[name] = s
        ok = ok and good
    summary["ok"] = ok
    return summary, ok


_COMMANDS = {
    "algebra": cmd_algebra,
    "homotopy": cmd_homotopy,
    "degree": cmd_degree,
    "distortion": cmd_distortion,
    "limits": cmd_limits,
    "estimates": cmd_estimates,
    "demo": cmd_demo,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qrlab",
                                 description="numerical distortion/cohomology lab")
    ap.add_argument("command", choices=sorted(_COMMANDS))
    ap.add_argument("--config", help="JSON experiment file")
    ap.add_argument("--out", help="output directory (default: out)")
    ap.add_argument("--seed", type=int, help="seed for randomized oracles")
    ap.add_argument("--resolution", type=int, help="grid resolution per axis")
    ap.add_argument("--family", help="map family name")
    ap.add_argument("--k", type=int, help="winding power / family parameter")
    ap.add_argument("--scale", type=float, help="covering scale")
    ap.add_argument("--K", type=float, dest="K", help="distortion constant")
    ap.add_argument("--kind", help="distortion inequality kind")
    ap.add_argument("--y", help="target point, comma-separated")
    ap.add_argument("--radius", type=float, help="domain / subdomain radius")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load_config(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except IOError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    out = Path(cfg["out"])
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        print(f"error: cannot create output directory: {e}", file=sys.stderr)
        return EXIT_IO
    np.random.seed(int(cfg["seed"]) % 2**32)  # legacy consumers; oracles use Generator
    try:
        summary, ok = _COMMANDS[cfg["command"]](cfg, out)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    summary["command"] = cfg["command"]
    summary["seed"] = int(cfg["seed"])
    write_json(out / "summary.json", summary)
    print(json.dumps(summary, sort_keys=True, default=_json_default))
    return EXIT_OK if ok else EXIT_ASSERT


if __name__ == "__main__":
    sys.exit(main())
