"""Command-line front end: ``hybridsde {simulate,couple,check,resolvent}``.

Everything beyond the config path, output directory, seed and thread count
lives in a JSON config that is validated before any computation.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path
from typing import Annotated, Literal, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, PositiveInt, ValidationError

from . import __version__
from .coupling import estimate_Wf, feller_bound
from .diagnostics import (SamplePlan, check_assumption_2_1, check_assumption_2_2_and_3_2,
                          check_assumption_4_3_and_ellipticity, modulus)
from .errors import AllPathsTruncated
from .integrator import IntegratorConfig, ensemble, regime_majorant, simulate_hybrid
from .io import dumps, path_csv_text, path_sidecar, write_csv
from .model import generator_matrix, model_from_json
from .resolvent import series_terms, verify_series
from .rng import Streams

EXIT_OK, EXIT_CONFIG, EXIT_DEGENERATE = 0, 2, 3


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class Example1Model(_Strict):
    name: Literal["example1"]
    alpha: float = Field(0.5, gt=0, lt=2)
    M: int = Field(20, ge=2)
    eps: PositiveFloat = 0.1
    lump_tail: bool = False


class ZeroModel(_Strict):
    name: Literal["zero"]
    dim: PositiveInt = 1
    M: PositiveInt = 2


class FrozenExample1Model(_Strict):
    name: Literal["frozen-example1"]
    x_star: list[float] | None
    alpha: float = Field(0.5, gt=0, lt=2)
    M: int = Field(20, ge=2)
    eps: PositiveFloat = 0.1


class GeometricModel(_Strict):
    name: Literal["geometric"]
    kappa_prime: PositiveFloat = 1.0
    M: int = Field(10, ge=2)
    dim: PositiveInt = 1


ModelSection = Annotated[Union[Example1Model, ZeroModel, FrozenExample1Model, GeometricModel],
                         Field(discriminator="name")]


class IntegratorSection(_Strict):
    dt: PositiveFloat
    T: PositiveFloat = 1.0
    R_max: PositiveFloat = 1e3
    eps: PositiveFloat | None = None
    switching: Literal["clock", "thinning"] = "clock"
    majorant_H: PositiveFloat | None = None
    chunk_size: PositiveInt = 8192


class SimulateSection(_Strict):
    n_paths: PositiveInt = 1
    statistic: Literal["norm", "regime", "no_switch"] = "norm"
    write_paths: bool = False


class CoupleSection(_Strict):
    t: float = Field(0.5, ge=0)
    r0: list[PositiveFloat] = [0.1, 0.05, 0.025, 0.0125]
    direction: list[float] | None = None
    n_paths: PositiveInt = 2000
    R: PositiveFloat = 3.0
    delta0: PositiveFloat = 1.0
    modulus: Literal["r", "rlog", "rloglog"] = "r"
    kappa_R: float | None = Field(None, ge=0)
    fit_points: PositiveInt = 10_000


class CheckSection(_Strict):
    assumptions: list[Literal["2.1", "2.2-3.2", "4.3"]] = ["2.1", "2.2-3.2", "4.3"]
    n_points: PositiveInt = 10_000
    scale: PositiveFloat = 5.0
    delta0: PositiveFloat = 1.0
    R: PositiveFloat = 3.0
    holder_delta: float = Field(1.0, gt=0, le=1)
    modulus: Literal["r", "rlog", "rloglog"] = "r"
    H: PositiveFloat | None = None
    kappa: PositiveFloat | None = None


class ResolventSection(_Strict):
    alpha: PositiveFloat
    kappa: float = Field(ge=0)
    m: PositiveInt = 5
    n_paths: PositiveInt = 20_000
    f: Literal["one", "regime-indicator"] = "one"
    f_regime: PositiveInt = 1
    exact: bool = False


class _RunBase(_Strict):
    model: ModelSection
    integrator: IntegratorSection
    seed: int = 0
    out: str | None = None
    x0: list[float]
    k0: PositiveInt = 1


class SimulateRun(_RunBase):
    command: Literal["simulate"]
    simulate: SimulateSection = SimulateSection()


class CoupleRun(_RunBase):
    command: Literal["couple"]
    couple: CoupleSection = CoupleSection()


class CheckRun(_Strict):
    command: Literal["check"]
    model: ModelSection
    seed: int = 0
    out: str | None = None
    check: CheckSection = CheckSection()


class ResolventRun(_RunBase):
    command: Literal["resolvent"]
    resolvent: ResolventSection


RunConfig = Annotated[Union[SimulateRun, CoupleRun, CheckRun, ResolventRun],
                      Field(discriminator="command")]


class _Envelope(_Strict):
    run: RunConfig


def load_config(doc: dict, command: str, seed: int | None = None):
    """Validate a config mapping for ``command``; raises ``ValidationError``."""
    doc = dict(doc)
    doc.setdefault("command", command)
    if seed is not None:
        doc["seed"] = seed
    return _Envelope.model_validate({"run": doc}).run


def _format_error(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        loc = [str(p) for p in err["loc"][1:]]
        # drop discriminator tags such as "simulate" or "example1" from the path
        loc = [p for i, p in enumerate(loc) if not (i == 0 and p in
                                                    ("simulate", "couple", "check", "resolvent")
                                                    and len(loc) > 1)]
        loc = [p for p in loc if p not in ("example1", "zero", "frozen-example1", "geometric")]
        lines.append(f"{'.'.join(loc) or '<root>'}: {err['msg']}")
    return "; ".join(lines)


def _build(cfg, threads: int):
    model = model_from_json(cfg.model.model_dump())
    if getattr(cfg, "integrator", None) is None:
        return model, None
    it = cfg.integrator
    icfg = IntegratorConfig(
        dt=it.dt, T=it.T, R_max=it.R_max, eps=it.eps, seed=cfg.seed, switching=it.switching,
        majorant=regime_majorant(it.majorant_H) if it.majorant_H else None,
        chunk_size=it.chunk_size, threads=threads)
    return model, icfg


def _header(cfg) -> dict:
    return {"version": __version__, "config": cfg.model_dump(mode="json")}


def _write(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8", newline="")


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(cfg: SimulateRun, out: Path, threads: int = 1) -> list[Path]:
    model, icfg = _build(cfg, threads)
    sim = cfg.simulate
    written = []
    if sim.n_paths == 1 or sim.write_paths:
        n_rec = sim.n_paths if sim.write_paths else 1
        for p in range(n_rec):
            rec = simulate_hybrid(model, cfg.x0, cfg.k0, icfg, Streams.from_seed(cfg.seed, p))
            stem = out / ("path" if n_rec == 1 else f"path_{p:04d}")
            _write(stem.with_suffix(".csv"), path_csv_text(rec))
            _write(stem.with_suffix(".json"),
                   dumps(path_sidecar(rec, {**_header(cfg), "integrator_config": rec.config})))
            written += [stem.with_suffix(".csv"), stem.with_suffix(".json")]
        if sim.n_paths == 1:
            return written
    stats = {
        "norm": lambda b: np.linalg.norm(b.x, axis=1),
        "regime": lambda b: b.k.astype(float),
        "no_switch": lambda b: (b.n_switches == 0).astype(float),
    }
    res = ensemble(model, cfg.x0, cfg.k0, icfg, sim.n_paths, stats[sim.statistic])
    doc = {**_header(cfg), **res.to_dict(), "statistic": sim.statistic,
           "partition": res.partition}
    _write(out / "summary.json", dumps(doc))
    return written + [out / "summary.json"]


def _fit_kappa_R(model, sec: CoupleSection, seed: int) -> float:
    plan = SamplePlan(n_points=sec.fit_points, scale=sec.R, delta0=sec.delta0, seed=seed)
    reps = check_assumption_2_2_and_3_2(model, modulus(sec.modulus), sec.R, sec.delta0, plan)
    return max(r.fitted_constant for r in reps if r.assumption.startswith("3.2"))


def cmd_couple(cfg: CoupleRun, out: Path, threads: int = 1) -> list[Path]:
    model, icfg = _build(cfg, threads)
    sec = cfg.couple
    x = np.asarray(cfg.x0, dtype=float)
    e = np.zeros_like(x)
    e[0] = 1.0
    if sec.direction is not None:
        e = np.asarray(sec.direction, dtype=float)
        e = e / np.linalg.norm(e)
    kappa = sec.kappa_R if sec.kappa_R is not None else _fit_kappa_R(model, sec, cfg.seed)
    rho = modulus(sec.modulus)
    rows, reports = [], []
    for r0 in sec.r0:
        w = estimate_Wf(model, sec.t, x, x + r0 * e, cfg.k0, icfg, sec.n_paths, R=sec.R,
                        delta0=sec.delta0)
        b = feller_bound(r0, sec.t, kappa, sec.delta0, w.p_exit_R, rho)
        ok = w.estimate <= b["bound"] + 3 * w.se
        reports.append({**w.to_dict(), "bound": b["bound"], "bihari": b["bihari"],
                        "switch_loss": b["switch_loss"], "pass": bool(ok)})
        rows.append([r0, w.estimate, w.se, b["bound"]])
    doc = {**_header(cfg), "kappa_R": kappa, "modulus": sec.modulus, "reports": reports}
    _write(out / "couple.json", dumps(doc))
    write_csv(out / "couple.csv", ["r0", "estimate", "se", "bound"], rows)
    return [out / "couple.json", out / "couple.csv"]


def cmd_check(cfg: CheckRun, out: Path, threads: int = 1) -> list[Path]:
    model, _ = _build(cfg, threads)
    sec = cfg.check
    plan = SamplePlan(n_points=sec.n_points, scale=sec.scale, delta0=sec.delta0, seed=cfg.seed)
    reports = []
    if "2.1" in sec.assumptions:
        reports += check_assumption_2_1(model, plan, sec.holder_delta, sec.H)
    if "2.2-3.2" in sec.assumptions:
        reports += check_assumption_2_2_and_3_2(model, modulus(sec.modulus), sec.R, sec.delta0,
                                                plan)
    if "4.3" in sec.assumptions:
        reports += check_assumption_4_3_and_ellipticity(model, sec.R, plan, sec.kappa, sec.H)
    doc = {**_header(cfg), "reports": [r.to_dict() for r in reports]}
    _write(out / "check.json", dumps(doc))
    return [out / "check.json"]


def cmd_resolvent(cfg: ResolventRun, out: Path, threads: int = 1) -> list[Path]:
    model, icfg = _build(cfg, threads)
    sec = cfg.resolvent
    if sec.f == "one":
        fv = lambda x, k: np.ones(len(k))
    else:
        fv = lambda x, k: (np.asarray(k) == sec.f_regime).astype(float)
    exact = None
    if sec.exact:
        if not model.frozen:
            raise ValueError("resolvent.exact needs a model with frozen x")
        Q = generator_matrix(model, cfg.x0)
        M = model.regime_cap
        fk = fv(np.repeat(np.asarray(cfg.x0, float)[None, :], M, axis=0), np.arange(1, M + 1))
        exact = float(np.linalg.solve(sec.alpha * np.eye(M) - Q, fk)[cfg.k0 - 1])
    terms = series_terms(model, fv, sec.alpha, cfg.x0, cfg.k0, sec.m, icfg, sec.n_paths, 1.0)
    reports, rows = [], []
    for m in range(1, sec.m + 1):
        r = verify_series(model, fv, sec.alpha, cfg.x0, cfg.k0, m, icfg, sec.n_paths, sec.kappa,
                          1.0, exact, terms)
        reports.append(r.to_dict())
        rows.append([m, r.D, r.se, r.B])
    G, se = terms.total()
    doc = {**_header(cfg), "G": G, "G_se": se, "exact": exact, "tail": terms.tail,
           "reports": reports}
    _write(out / "resolvent.json", dumps(doc))
    write_csv(out / "resolvent.csv", ["m", "estimate", "se", "bound"], rows)
    return [out / "resolvent.json", out / "resolvent.csv"]


COMMANDS = {"simulate": cmd_simulate, "couple": cmd_couple, "check": cmd_check,
            "resolvent": cmd_resolvent}


def _threads(arg: int | None) -> int:
    if arg is not None:
        return max(1, arg)
    env = os.environ.get("HYBRIDSDE_THREADS")
    return max(1, int(env)) if env and env.isdigit() else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="hybridsde", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, type=Path)
    parser.add_argument("--out", type=Path, default=None)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--threads", type=int, default=None)
    args = parser.parse_args(argv)
    try:
        doc = json.loads(args.config.read_text(encoding="utf-8"))
        cfg = load_config(doc, args.command, args.seed)
        if cfg.command != args.command:
            raise ValueError(f"config is for {cfg.command!r}, not {args.command!r}")
    except ValidationError as exc:
        print(f"config error: {_format_error(exc)}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out or Path(cfg.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    try:
        for p in COMMANDS[args.command](cfg, out, _threads(args.threads)):
            print(p)
    except AllPathsTruncated as exc:
        print(f"degenerate result: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
