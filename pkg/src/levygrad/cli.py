"""Command line entry point and the consolidated verification run.

Configs are INI files::

    [model]
    family = Stable
    alpha = 1.0
    d = 1

    [domain]
    kind = ball          ; or peanut
    radius = 1.0

    [paths]
    n_paths = 100000
    seed = 20240611
    dt = 0.001
    eps = auto

    [run]
    R = 1.0
    checks = all
"""
from __future__ import annotations

import argparse
import configparser
import json
import logging
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import difference, dirichlet, freekernel, renewal, symbols
from .report import CheckEntry, RatioBand, SCHEMA_VERSION, VerificationReport, _plain, write_csv
from .symbols import ModelSpec

log = logging.getLogger("levygrad")

OUT_ENV = "LEVYGRAD_OUT"
DEFAULT_SEED = 20240611


# -- configuration -----------------------------------------------------------------------------


@dataclass
class RunConfig:
    model: dict = field(default_factory=lambda: {"family": "Stable", "alpha": 1.0, "d": 1})
    domain: dict = field(default_factory=lambda: {"kind": "ball", "radius": 1.0})
    paths: dict = field(default_factory=lambda: {"n_paths": 100000, "seed": DEFAULT_SEED, "dt": 1e-3, "eps": "auto"})
    R: float = 1.0
    checks: list = field(default_factory=lambda: ["all"])
    out_dir: str | None = None
    schema_version: int = SCHEMA_VERSION

    def model_spec(self) -> ModelSpec:
        return ModelSpec.from_dict(self.model)

    def build_domain(self):
        return make_domain(self.domain, self.model_spec().d)

    def path_config(self, n_paths: int | None = None) -> dirichlet.PathConfig:
        p = self.paths
        model = self.model_spec()
        n = int(n_paths or p.get("n_paths", 100000))
        seed = int(p.get("seed", DEFAULT_SEED))
        dt = float(p.get("dt", 1e-3))
        gauss = str(p.get("substitute_gaussian", "true")).lower() in ("1", "true", "yes")
        eps = p.get("eps", "auto")
        if eps in (None, "auto"):
            cfg = dirichlet.PathConfig.auto(model, dt=dt, n_paths=n, seed=seed)
            return dirichlet.PathConfig(cfg.eps, dt, n, seed, gauss)
        return dirichlet.PathConfig(float(eps), dt, n, seed, gauss)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_ini(cls, text: str) -> "RunConfig":
        cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
        cp.read_string(text)
        allowed = {"model", "domain", "paths", "run"}
        bad = set(cp.sections()) - allowed
        if bad:
            raise ValueError(f"unknown config sections: {sorted(bad)}")
        cfg = cls()
        if cp.has_section("model"):
            cfg.model = dict(cp["model"])
        if cp.has_section("domain"):
            cfg.domain = dict(cp["domain"])
        if cp.has_section("paths"):
            cfg.paths = {**cfg.paths, **dict(cp["paths"])}
        if cp.has_section("run"):
            run = dict(cp["run"])
            unknown = set(run) - {"r", "checks", "out_dir"}
            if unknown:
                raise ValueError(f"unknown [run] keys: {sorted(unknown)}")
            cfg.R = float(run.get("r", cfg.R))
            cfg.checks = [c.strip() for c in run.get("checks", "all").split(",") if c.strip()]
            cfg.out_dir = run.get("out_dir")
        cfg.model_spec()
        return cfg


def make_domain(desc: dict, d: int):
    kind = desc.get("kind", "ball")
    if kind == "ball":
        center = desc.get("center")
        if isinstance(center, str):
            center = [float(c) for c in center.split(",")]
        center = tuple(center) if center is not None else tuple([0.0] * d)
        return dirichlet.Ball(center, float(desc.get("radius", 1.0)))
    if kind == "peanut":
        return difference.peanut(d, float(desc.get("offset", 0.5)), float(desc.get("radius", 0.8)))
    raise ValueError(f"unknown domain kind {kind!r}")


# -- the checks --------------------------------------------------------------------------------


def _entry(check_id, anchor, grid_id, fn, seed=None) -> CheckEntry:
    t0 = time.perf_counter()
    try:
        band, ci, passed, diag, values = fn()
    except Exception as exc:  # a failing check must not stop the run
        log.exception("check %s failed", check_id)
        return CheckEntry(check_id, anchor, grid_id, None, None, False, seed, time.perf_counter() - t0, f"{type(exc).__name__}: {exc}", {})
    band_d = band.to_dict() if isinstance(band, RatioBand) else band
    if isinstance(band_d, dict):
        band_d = {k: band_d[k] for k in ("min", "median", "max", "grid_id", "n") if k in band_d}
    return CheckEntry(check_id, anchor, grid_id, band_d, ci, bool(passed), seed, time.perf_counter() - t0, diag, values)


def _finite_band(b: RatioBand):
    return b, None, b.finite_positive, "" if b.finite_positive else "band not finite and positive", {}


def _ci_pair(b: RatioBand):
    return [b.extra["ci_min"][0], b.extra["ci_max"][1]]


def _seed_pair(fn, model, cfg, **kw):
    b1 = fn(model, cfg=cfg, **kw)
    b2 = fn(model, cfg=cfg.with_seed((cfg.seed + 1) % 2**64), **kw)
    return b1, b2, dirichlet.reproducibility(b1, b2)


def check_list(config: RunConfig):
    """(check_id, anchor, grid_id, thunk, seed) in dependency order."""
    model = config.model_spec()
    R = config.R
    d = model.d
    domain = config.build_domain()
    ev = symbols.evaluator(model)
    out = []

    def add(cid, anchor, grid, fn, seed=None):
        out.append((cid, anchor, grid, fn, seed))

    # symbols
    def psi_sandwich():
        r = np.geomspace(1e-3, 1e3, 61)
        p, ps = ev.psi(r), ev.psi_star(r)
        ratio = ps / p
        ok = bool(np.all(ps >= p * (1 - 1e-12)) and np.all(ps <= np.pi**2 * p))
        return RatioBand.from_values("psi_star/psi", ratio, "r_1e-3_1e3_61"), None, ok, "", {}

    add("symbols.psi_sandwich", "running maximum sandwich of the exponent", "r_1e-3_1e3_61", psi_sandwich)

    def scaling():
        cert = symbols.estimate_scaling(model, 1.0 / R)
        ok = cert.C_lower > 0 and np.isfinite(cert.C_upper)
        return {"min": cert.C_lower, "max": cert.C_upper}, None, ok, "", {"alpha_lower": cert.alpha_lower, "alpha_upper": cert.alpha_upper}

    add("symbols.scaling", "weak lower and upper scaling", "scaling_25x25", scaling)

    # renewal
    rf = renewal.renewal(model)

    def vpsi():
        lo, hi = renewal.check_Vpsi(model, np.geomspace(1e-3, 1e2, 51))
        ok = 0 < lo <= hi < np.inf
        return {"min": lo, "max": hi}, None, ok, "; ".join(rf.notes), {}

    add("renewal.Vpsi", "V squared against 1/psi(1/r)", "r_1e-3_1e2_51", vpsi)

    def vscale():
        g = [(e, w) for e in np.geomspace(1e-3, 1, 13) for w in np.geomspace(1e-3, 1, 13)]
        c1 = renewal.check_V_scaling(model, g)
        return {"min": c1}, None, c1 > 0, "", {}

    add("renewal.V_scaling", "scaling of the inverse renewal function", "eta_w_13x13", vscale)

    def cond_h():
        h = renewal.estimate_H(model, R)
        return {"max": h}, None, bool(np.isfinite(h) and h >= 1), "", {}

    add("renewal.H", "condition (H)", "H_nodes", cond_h)

    def subadd():
        rng = np.random.default_rng(0)
        a, b = np.exp(rng.uniform(np.log(1e-4), np.log(1e2), (2, 1000)))
        gap = rf.V(a) + rf.V(b) - rf.V(a + b)
        ok = bool(np.all(gap >= -1e-9 * rf.V(a + b)))
        return {"min": float(np.min(gap / rf.V(a + b)))}, None, ok, "", {}

    add("renewal.subadditivity", "subadditivity of V", "random_pairs_1000", subadd)

    # free kernel
    def lift():
        ts, rs = (0.1, 1.0), (0.2, 1.0, 3.0)
        errs = []
        for t in ts:
            for r in rs:
                h = r / 100
                ps = [freekernel.p(model, d, t, r + k * h) for k in (-2, -1, 1, 2)]
                fd = (ps[0] - 8 * ps[1] + 8 * ps[2] - ps[3]) / (12 * h)
                ex = float(freekernel.dp_dr(model, t, r))
                errs.append(abs(ex - fd) / abs(ex))
        worst = float(max(errs))
        return {"max": worst}, None, worst < 1e-5, "", {}

    add("freekernel.dimension_lift", "dimension lift of the radial derivative", "t2_r3", lift)

    for name, fn, anchor in (
        ("upper", lambda: freekernel.check_upper(model), "upper heat kernel bound"),
        ("comparability", lambda: freekernel.check_comparability(model, R), "heat kernel comparability"),
        ("derestimate", lambda: freekernel.check_derestimate(model), "radial derivative estimate"),
        ("p0", lambda: freekernel.check_p0(model), "on-diagonal heat kernel"),
    ):
        add(f"freekernel.{name}", anchor, "standard", (lambda f=fn: _finite_band(f())))

    def lower():
        c, c1 = freekernel.check_lower(model)
        return {"min": c}, None, c > 0, "", {"c1": c1}

    add("freekernel.lower", "lower heat kernel bound", "standard", lower)

    def grad():
        sb, lb = freekernel.check_grad_comparability(model, R)
        ok = sb.finite_positive and lb.finite_positive
        return {"min": min(sb.min, lb.min), "median": lb.median, "max": max(sb.max, lb.max)}, None, ok, "", {"small_r": sb.to_dict(), "large_r": lb.to_dict()}

    add("freekernel.grad_comparability", "gradient comparability", "standard", grad)

    def nu_est():
        band, dbl = freekernel.check_nu_estimates(model, R)
        return band, None, band.finite_positive and np.isfinite(dbl), "", {"doubling": dbl}

    add("freekernel.nu_estimates", "Levy density against V", "standard_r", nu_est)

    def lem1():
        b = freekernel.check_lem1(model)
        ok = bool(np.isfinite(b.max) and b.extra["min_difference"] >= 0)
        return b, None, ok, "", {}

    add("freekernel.lem1", "free reflected difference", "lem1", lem1)

    def mass():
        m = freekernel.total_mass(model, 1.0)
        return {"max": abs(m - 1)}, None, abs(m - 1) < 1e-3, "", {"mass": m}

    add("freekernel.mass", "normalization of p_t", "t1", mass)

    # Dirichlet
    cfg = config.path_config()

    def lambda1():
        res = dirichlet.estimate_lambda1_detail(model, R, cfg)
        val = res.value * rf.V(R) ** 2
        ok = 1 / 8 <= val <= 10 and res.window_shift < 0.1
        return {"median": val}, [val - 2 * res.stderr * rf.V(R) ** 2, val + 2 * res.stderr * rf.V(R) ** 2], ok, "", {"window_shift": res.window_shift}

    add("dirichlet.lambda1", "eigenvalue comparability", "window_V2_3V2", lambda1, cfg.seed)

    def hk():
        r1 = dirichlet.check_hk_kula2(model, R, cfg=cfg.with_paths(2 * cfg.n_paths))
        r2 = dirichlet.check_hk_kula2(model, R, cfg=cfg.with_paths(2 * cfg.n_paths).with_seed((cfg.seed + 1) % 2**64))
        b = r1["band"]
        rep = dirichlet.reproducibility(b, r2["band"])
        ci = _ci_pair(b)
        ok = b.min > 0.05 and b.max < 20 and ci[0] > 0 and np.isfinite(ci[1]) and rep and r1["profile"].finite_positive
        return b, ci, ok, "" if ok else f"reproducible={rep}", {"profile": r1["profile"].to_dict(), "second_seed": r2["band"].to_dict()}

    add("dirichlet.hk_factorization", "Dirichlet heat kernel factorization on balls", "hk_3x3x3", hk, cfg.seed)

    def main1():
        b1, b2, rep = _seed_pair(dirichlet.check_main1, model, cfg, domain=domain)
        ci = _ci_pair(b1)
        ok = bool(np.isfinite(b1.max) and np.isfinite(ci[1]) and rep)
        spec_ok = True
        if model.family in (symbols.Family.STABLE, symbols.Family.RELATIVISTIC):
            for t in (0.1, 0.5):
                for x in (0.0, 0.5, 0.9):
                    x_ = np.eye(d)[0] * x
                    dl = domain.delta(x_)
                    a = dirichlet.main1_rate(model, dl, t)
                    s = dirichlet.specialized_rate(model, dl, t)
                    lo = 1.0 if model.family is symbols.Family.STABLE else 1 / np.sqrt(1 + 2 * model.m)
                    spec_ok &= lo * (1 - 1e-12) <= s / a <= 1 + 1e-12
        return b1, ci, ok and spec_ok, f"reproducible={rep}, specialization={spec_ok}", {"second_seed": b2.to_dict()}

    add("dirichlet.main1", "gradient bound for the Dirichlet heat kernel", "main1_grid", main1, cfg.seed)

    def iw():
        if d != 1:
            return None, None, True, "skipped: quadrature side implemented for d = 1", {}
        res = dirichlet.check_ikeda_watanabe(model, dirichlet.interval(-R, R), B=(R, 2 * R), cfg=cfg)
        ok = res.z < 3 and res.boundary_mass < 1e-3
        return {"median": res.discrepancy}, [res.discrepancy - 3 * res.combined_se, res.discrepancy + 3 * res.combined_se], ok, "", {
            "lhs": res.lhs.mean, "rhs": res.rhs.mean, "boundary_mass": res.boundary_mass}

    add("dirichlet.ikeda_watanabe", "exit distribution formula", "A_0_0.5_B_R_2R", iw, cfg.seed)

    def constants():
        vals = {}
        ok = True
        for RR in (0.5, 1.0, 2.0):
            c = dirichlet.estimate_appendix_constants(model, RR)
            vals[str(RR)] = c.values()
            ok &= c.all_positive
        return None, None, ok, "", vals

    add("dirichlet.constants", "scale constants of the kernel bounds", "constant_grids", constants)

    # difference
    def ab():
        b = difference.check_ABLevyquotient(model)
        return b, None, bool(np.isfinite(b.max) and b.extra["min_nu_tilde"] >= 0), "", {}

    add("difference.ABLevyquotient", "difference Levy kernel bound", "ab_grid", ab)

    def key():
        res = difference.check_key(model, cfg=cfg)
        return {"max": max(res.worst_lower_z, res.worst_upper_z)}, None, res.passed, "", {"worst_lower_z": res.worst_lower_z, "worst_upper_z": res.worst_upper_z}

    add("difference.key", "difference sandwich", "key_grid", key, cfg.seed)

    for name, fn, anchor in (
        ("lem4", difference.check_lem4, "difference bound, x near the centre"),
        ("lem3", difference.check_lem3, "difference bound, y near the centre"),
        ("lem5", difference.check_lem5, "difference bound, y away from the centre"),
        ("m_estimate", difference.check_m_estimate, "difference bound on general domains"),
    ):
        def lemma(fn=fn):
            b1, b2, rep = _seed_pair(fn, model, cfg)
            ci = _ci_pair(b1)
            ok = bool(np.isfinite(b1.max) and np.isfinite(ci[1]) and rep)
            return b1, ci, ok, f"reproducible={rep}", {"second_seed": b2.to_dict()}

        add(f"difference.{name}", anchor, f"{name}_grid", lemma, cfg.seed)
    return out


def run_all(config: RunConfig) -> VerificationReport:
    report = VerificationReport(config=config.to_dict())
    wanted = set(config.checks)
    for cid, anchor, grid, fn, seed in check_list(config):
        if "all" not in wanted and cid not in wanted and cid.split(".")[0] not in wanted:
            continue
        log.info("running %s", cid)
        report.add(_entry(cid, anchor, grid, fn, seed))
    return report


# -- command line ------------------------------------------------------------------------------


def _model_from_args(args) -> ModelSpec:
    data = {"family": args.family, "d": args.d}
    if args.alpha is not None:
        data["alpha"] = args.alpha
    if args.m is not None:
        data["m"] = args.m
    return ModelSpec.from_dict(data)


def _config_from_args(args) -> RunConfig:
    if args.config:
        cfg = RunConfig.from_ini(Path(args.config).read_text())
    else:
        model = _model_from_args(args)
        cfg = RunConfig(model=model.to_dict())
        cfg.model = {k: v for k, v in cfg.model.items() if v is not None}
    if args.n_paths:
        cfg.paths["n_paths"] = args.n_paths
    if args.seed is not None:
        cfg.paths["seed"] = args.seed
    if args.dt:
        cfg.paths["dt"] = args.dt
    if args.eps:
        cfg.paths["eps"] = args.eps
    if args.R:
        cfg.R = args.R
    if args.domain:
        cfg.domain = {"kind": args.domain, **({"radius": args.radius} if args.radius else {})}
    return cfg


def _out_dir(args, cfg: RunConfig) -> Path:
    d = args.out or cfg.out_dir or os.environ.get(OUT_ENV) or "."
    p = Path(d)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _point(s: str, d: int) -> np.ndarray:
    v = np.array([float(c) for c in s.split(",")])
    if v.size == 1 and d > 1:
        v = np.eye(d)[0] * v[0]
    if v.size != d:
        raise ValueError(f"point {s!r} has the wrong dimension")
    return v


def _estimate_json(est) -> dict:
    return _plain({"mean": est.mean, "stderr": est.stderr, "n": est.n, "seed": est.seed})


def _load_grid(path):
    if not path:
        return None
    return json.loads(Path(path).read_text())


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI run configuration")
    common.add_argument("--family", default="Stable", choices=[f.value for f in symbols.Family])
    common.add_argument("--alpha", type=float, default=1.0)
    common.add_argument("--m", type=float)
    common.add_argument("--d", type=int, default=1)
    common.add_argument("--domain", choices=["ball", "peanut"])
    common.add_argument("--radius", type=float)
    common.add_argument("--R", type=float)
    common.add_argument("--grid", help="JSON grid file (keys xs, ys, ts)")
    common.add_argument("--n-paths", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--eps", type=float)
    common.add_argument("--dt", type=float)
    common.add_argument("--out", help=f"output directory (default ${OUT_ENV} or .)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="levygrad", description="Numerical verification of gradient estimates for Dirichlet heat kernels.")
    sub = p.add_subparsers(dest="cmd", required=True)
    for name in ("model", "renewal", "kernel", "lambda1", "verify-hk", "verify-main1", "verify-iw", "verify-diff", "constants", "run-all"):
        sub.add_parser(name, parents=[common])
    for name in ("survival", "pd", "grad"):
        sp = sub.add_parser(name, parents=[common])
        sp.add_argument("--x", required=True, help="start point, comma separated")
        sp.add_argument("--t", type=float, required=True)
        if name != "survival":
            sp.add_argument("--y", required=True, help="end point, comma separated")
        if name == "grad":
            sp.add_argument("--h", type=float)
    return p


def _emit(out: Path, name: str, payload: dict):
    path = out / f"{name}.json"
    path.write_text(json.dumps(_plain(payload), indent=2, sort_keys=True))
    print(path)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    cfg = _config_from_args(args)
    out = _out_dir(args, cfg)
    model = cfg.model_spec()
    d = model.d
    grid = _load_grid(args.grid)
    cmd = args.cmd

    if cmd == "run-all":
        rep = run_all(cfg)
        (out / "report.json").write_text(rep.dumps())
        print(out / "report.json")
        for e in rep.entries:
            print(f"{'PASS' if e.passed else 'FAIL'} {e.check_id} {e.diagnostics}")
        return 0 if rep.passed else 1
    if cmd in ("verify-hk", "verify-main1", "verify-iw", "verify-diff", "constants"):
        ids = {"verify-hk": ["dirichlet.hk_factorization"], "verify-main1": ["dirichlet.main1"], "verify-iw": ["dirichlet.ikeda_watanabe"],
               "verify-diff": ["difference"], "constants": ["dirichlet.constants"]}[cmd]
        cfg.checks = ids
        if grid and cmd in ("verify-hk", "verify-main1"):
            fn = dirichlet.check_hk_kula2 if cmd == "verify-hk" else dirichlet.check_main1
            g = (grid["xs"], grid["ys"], grid["ts"])
            res = fn(model, cfg.R, grid=g, cfg=cfg.path_config()) if cmd == "verify-hk" else fn(model, cfg.build_domain(), g, cfg.path_config())
            band = res["band"] if isinstance(res, dict) else res
            _emit(out, cmd, {"schema_version": SCHEMA_VERSION, "band": band.to_dict()})
            return 0 if band.finite_positive else 1
        rep = run_all(cfg)
        (out / f"{cmd}.json").write_text(rep.dumps())
        print(out / f"{cmd}.json")
        return 0 if rep.passed else 1
    if cmd == "model":
        r = np.geomspace(1e-3, 1e3, 61)
        write_csv(out / "symbols.csv", symbols.symbol_table(model, r))
        _emit(out, "model", {"model": model.to_dict(), "label": model.label(), "monotone": symbols.evaluator(model).monotone})
        return 0
    if cmd == "renewal":
        rf = renewal.renewal(model)
        write_csv(out / "renewal.csv", rf.table())
        _emit(out, "renewal", {"model": model.to_dict(), "H": rf.H(cfg.R), "flagged": rf.flagged, "notes": rf.notes})
        return 0
    if cmd == "kernel":
        ts, rs = freekernel.standard_t_grid(), freekernel.standard_r_grid(cfg.R)
        cols = {"t": np.repeat(ts, len(rs)), "r": np.tile(rs, len(ts))}
        cols["p"] = np.concatenate([freekernel.density(model)(t, rs) for t in ts])
        cols["dp_dr"] = np.concatenate([freekernel.dp_dr(model, t, rs) for t in ts])
        write_csv(out / "kernel.csv", cols)
        print(out / "kernel.csv")
        return 0
    pcfg = cfg.path_config()
    dom = cfg.build_domain()
    if cmd == "lambda1":
        res = dirichlet.estimate_lambda1_detail(model, cfg.R, pcfg)
        _emit(out, "lambda1", {"lambda1": res.value, "stderr": res.stderr, "doubled_window": res.doubled, "seed": pcfg.seed})
        return 0
    x = _point(args.x, d)
    if cmd == "survival":
        _emit(out, "survival", _estimate_json(dirichlet.estimate_survival(model, dom, x, args.t, pcfg)))
        return 0
    y = _point(args.y, d)
    if cmd == "pd":
        _emit(out, "pd", _estimate_json(dirichlet.estimate_pD(model, dom, args.t, x, y, pcfg)))
        return 0
    if cmd == "grad":
        _emit(out, "grad", _estimate_json(dirichlet.estimate_grad_pD(model, dom, args.t, x, y, pcfg, h=args.h)))
        return 0
    raise AssertionError(cmd)


if __name__ == "__main__":
    sys.exit(main())
