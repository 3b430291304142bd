"""Command line entry point: ``mmot <command> [options]``.

Commands: gen, solve, check-conditions, conjugate, diagnose, certify.
Every command writes JSON reports to ``--out``; timestamps and the host go to
a separate ``metadata.json`` so the reports themselves are reproducible.

Exit codes: 0 success, 2 a condition check failed, 1 error.
"""

from __future__ import annotations

import argparse
import datetime
import json
import os
import platform
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .conditions import (
    DET_TOL,
    NEGDEF_MARGIN,
    TWIST_TOL,
    check_nondegenerate,
    check_twist,
    hessian_part_bound,
    scan_T_negative,
    segment_certificate,
)
from .costs import (
    ConcaveOfSum,
    CostModel,
    GPlusQuadratic,
    HedonicCost,
    SeparableSubCost,
    bilinear_normal_form,
    cost_from_dict,
)
from .diagnostics import MASS_TOL, graph_extract, pushforward_check, round_entropic, uniqueness_probe
from .duality import Potentials, conjugate_pass, conjugacy_defect, dual_uniqueness_probe, verify_slackness
from .geometry import DiscreteMarginal, DomainBox, dirichlet_marginal, uniform_marginal
from .solver import Coupling, make_instance, solve_entropic, solve_lp

COMMANDS = ("gen", "solve", "check-conditions", "conjugate", "diagnose", "certify")
PRESETS = ("gs", "bilinear-neg", "bilinear-pos", "gq", "hedonic")


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    instance: str | None = None
    cost: str | None = None
    preset: str | None = None
    coupling: str | None = None
    potentials: str | None = None
    solver: str = "lp"
    epsilon: float | None = None
    samples: int = 100
    trials: int = 5
    seed: int = 0
    m: int = 3
    n: int = 5
    dim: int = 2
    weights: str = "uniform"
    mass_tol: float = MASS_TOL
    det_tol: float = DET_TOL
    twist_tol: float = TWIST_TOL
    margin: float = NEGDEF_MARGIN
    steps: int = 64
    x1: list | None = None
    u1_grad: list | None = None
    start: list | None = None
    end: list | None = None
    last_guess: list | None = None
    out: str = "."
    extra: dict = field(default_factory=dict)

    def validate(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        if self.preset is not None and self.preset not in PRESETS:
            raise ConfigError(f"unknown preset {self.preset!r}; choose from {PRESETS}")
        for name in ("mass_tol", "det_tol", "twist_tol"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"--{name.replace('_', '-')} must be positive")
        if self.epsilon is not None and self.epsilon <= 0:
            raise ConfigError("--epsilon must be positive")
        if self.margin < 0:
            raise ConfigError("--margin must be nonnegative")
        for name in ("instance", "cost", "coupling", "potentials"):
            p = getattr(self, name)
            if p is not None and not Path(p).is_file():
                raise ConfigError(f"{name} file not found: {p}")


# ---------------------------------------------------------------------------
# presets and files


def preset_cost(name: str, m: int = 3, dim: int = 2) -> tuple[CostModel, list]:
    """Cost and domain boxes for a named preset."""
    unit = [DomainBox.unit(dim) for _ in range(m)]
    if name == "gs":
        return ConcaveOfSum(m, dim), unit
    if m != 3:
        raise ConfigError(f"preset {name!r} is three-marginal")
    if name == "bilinear-neg":
        skew = np.zeros((dim, dim))
        if dim > 1:
            skew[0, 1], skew[1, 0] = 0.3, -0.3
        return bilinear_normal_form(-np.eye(dim) + skew), unit
    if name == "bilinear-pos":
        return bilinear_normal_form(np.eye(dim)), unit
    if name == "gq":
        return GPlusQuadratic(dim, "diff_quadratic"), unit
    if name == "hedonic":
        comps = [SeparableSubCost(P=-(1.0 + 0.25 * i) * np.eye(dim)) for i in range(3)]
        return HedonicCost(DomainBox(-5 * np.ones(dim), 5 * np.ones(dim)), comps), unit
    raise ConfigError(f"unknown preset {name!r}")


def _read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from None


def _write_json(out: Path, name: str, obj) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    p = out / name
    p.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    return p


def load_instance(path):
    """Instance file: {"marginals": [paths...], "cost": path}, paths relative to the file."""
    path = Path(path)
    doc = _read_json(path)
    root = path.parent
    margs = []
    for mp in doc["marginals"]:
        full = root / mp
        margs.append(DiscreteMarginal.from_dict(_read_json(full)))
    cost = cost_from_dict(_read_json(root / doc["cost"]))
    return make_instance(margs, cost, cap=int(doc.get("cap", 10**6)))


def _load_cost(cfg: RunConfig):
    if cfg.cost:
        c = cost_from_dict(_read_json(cfg.cost))
        return c, [DomainBox.unit(d) for d in c.dims]
    if cfg.instance:
        inst = load_instance(cfg.instance)
        return inst.cost, [mu.box for mu in inst.marginals]
    if cfg.preset:
        return preset_cost(cfg.preset, cfg.m, cfg.dim)
    raise ConfigError("need --cost, --instance or --preset")


def _require_instance(cfg: RunConfig):
    if not cfg.instance:
        raise ConfigError(f"{cfg.command} needs --instance")
    return load_instance(cfg.instance)


# ---------------------------------------------------------------------------
# commands


def cmd_gen(cfg: RunConfig, out: Path) -> int:
    if not cfg.preset:
        raise ConfigError("gen needs --preset")
    cost, boxes = preset_cost(cfg.preset, cfg.m, cfg.dim)
    names = []
    for i, box in enumerate(boxes):
        s = cfg.seed * 1000 + i
        if cfg.weights == "dirichlet":
            mu = dirichlet_marginal(box, cfg.n, s)
        else:
            mu = uniform_marginal(box, cfg.n, s)
        names.append(f"marginal_{i}.json")
        _write_json(out, names[-1], mu.to_dict())
    _write_json(out, "cost.json", cost.to_dict())
    _write_json(out, "instance.json", {"marginals": names, "cost": "cost.json"})
    return 0


def cmd_solve(cfg: RunConfig, out: Path) -> int:
    inst = _require_instance(cfg)
    if cfg.solver == "entropic":
        eps = cfg.epsilon if cfg.epsilon is not None else 0.01 * max(inst.cost_range(), 1e-12)
        res = solve_entropic(inst, eps)
        _write_json(out, "coupling.json", res.coupling.to_json())
        _write_json(
            out,
            "entropic.json",
            {
                "epsilon": eps,
                "iterations": res.iterations,
                "converged": res.converged,
                "tv_error": res.tv_error,
                "objective": res.coupling.objective,
                "status": "converged" if res.converged else "inconclusive",
            },
        )
        return 0
    sol = solve_lp(inst)
    _write_json(out, "coupling.json", sol.coupling.to_json())
    _write_json(out, "dual.json", sol.dual.to_json())
    _write_json(out, "slackness.json", verify_slackness(inst, sol.coupling, sol.dual).to_dict())
    return 0


def cmd_check(cfg: RunConfig, out: Path) -> int:
    cost, boxes = _load_cost(cfg)
    last = cost.m - 1
    reports = [
        check_twist(cost, 0, last, cfg.samples, 4, cfg.seed, boxes, cfg.twist_tol),
        check_nondegenerate(cost, 0, last, cfg.samples, cfg.seed, boxes, cfg.det_tol),
    ]
    if cost.m >= 3:
        reports.append(scan_T_negative(cost, cfg.samples, cfg.seed, boxes, cfg.margin))
    for r in reports:
        _write_json(out, f"{r.condition}.json", r.to_dict())
    return 2 if any(r.verdict == "fail" for r in reports) else 0


def _load_coupling(path, inst) -> Coupling:
    rows = _read_json(path)
    idx = np.array([r["index"] for r in rows], dtype=int).reshape(-1, inst.m)
    w = np.array([r["mass"] for r in rows], dtype=float)
    return Coupling(idx, w, float(w @ inst.cost_tensor[tuple(idx.T)]), inst.shape)


def cmd_conjugate(cfg: RunConfig, out: Path) -> int:
    inst = _require_instance(cfg)
    start = Potentials(_read_json(cfg.potentials)) if cfg.potentials else solve_lp(inst).dual
    u = conjugate_pass(inst, start)
    _write_json(out, "potentials.json", u.to_json())
    _write_json(
        out,
        "conjugation.json",
        {
            "dual_objective_in": start.objective(inst.weights),
            "dual_objective_out": u.objective(inst.weights),
            "conjugacy_defect": conjugacy_defect(inst, u),
        },
    )
    return 0


def cmd_diagnose(cfg: RunConfig, out: Path) -> int:
    inst = _require_instance(cfg)
    coupling = _load_coupling(cfg.coupling, inst) if cfg.coupling else solve_lp(inst).coupling
    if cfg.solver == "entropic" and not cfg.coupling:
        eps = cfg.epsilon if cfg.epsilon is not None else 0.01 * max(inst.cost_range(), 1e-12)
        coupling = solve_entropic(inst, eps).coupling
        verdict = round_entropic(coupling, inst)
    else:
        verdict = graph_extract(coupling, cfg.mass_tol, inst)
    _write_json(out, "graph.json", verdict.to_dict())
    if verdict.is_graph:
        (out / "maps.csv").write_text(verdict.maps_csv())
        _write_json(out, "pushforward.json", pushforward_check(coupling, verdict, inst).to_dict())
    _write_json(out, "uniqueness.json", uniqueness_probe(inst, cfg.trials, cfg.seed, mass_tol=cfg.mass_tol).to_dict())
    _write_json(out, "dual_uniqueness.json", dual_uniqueness_probe(inst, cfg.trials, cfg.seed).to_dict())
    return 0


def cmd_certify(cfg: RunConfig, out: Path) -> int:
    cost, boxes = _load_cost(cfg)
    for name in ("x1", "u1_grad", "start", "end"):
        if getattr(cfg, name) is None:
            raise ConfigError(f"certify needs --{name.replace('_', '-')}")
    value = segment_certificate(
        cost, cfg.x1, cfg.u1_grad, cfg.start, cfg.end, cfg.steps, cfg.last_guess, boxes[-1]
    )
    h_bound = hessian_part_bound(cost, cfg.samples, cfg.seed, boxes)
    _write_json(
        out,
        "certificate.json",
        {"s_integral": value, "h_part_eigenvalue_bound": h_bound, "steps": cfg.steps, "negative": value < 0},
    )
    return 0


HANDLERS = {
    "gen": cmd_gen,
    "solve": cmd_solve,
    "check-conditions": cmd_check,
    "conjugate": cmd_conjugate,
    "diagnose": cmd_diagnose,
    "certify": cmd_certify,
}


def run(cfg: RunConfig) -> int:
    cfg.validate()
    out = Path(cfg.out)
    code = HANDLERS[cfg.command](cfg, out)
    meta = {
        "command": cfg.command,
        "finished": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "python": platform.python_version(),
        "version": __version__,
        "exit_code": code,
        "threads": os.environ.get("MMOT_THREADS"),
    }
    _write_json(out, "metadata.json", meta)
    return code


# ---------------------------------------------------------------------------
# argument parsing


def _vec(s):
    return [float(v) for v in s.split(",")]


def _vecs(s):
    return [_vec(part) for part in s.split(";")]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mmot", description="Discrete multi-marginal optimal transport toolkit")
    p.add_argument("command", nargs="?", choices=COMMANDS)
    p.add_argument("--config", help="JSON document with the same keys as the flags")
    p.add_argument("--instance")
    p.add_argument("--cost")
    p.add_argument("--preset", choices=PRESETS)
    p.add_argument("--coupling")
    p.add_argument("--potentials")
    p.add_argument("--solver", choices=("lp", "entropic"))
    p.add_argument("--epsilon", type=float)
    p.add_argument("--samples", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--weights", choices=("uniform", "dirichlet"))
    p.add_argument("--mass-tol", type=float)
    p.add_argument("--det-tol", type=float)
    p.add_argument("--twist-tol", type=float)
    p.add_argument("--margin", type=float)
    p.add_argument("--steps", type=int)
    p.add_argument("--x1", type=_vec, help="comma separated vector")
    p.add_argument("--u1-grad", type=_vec)
    p.add_argument("--start", type=_vecs, help="middle coordinates, ';' between factors")
    p.add_argument("--end", type=_vecs)
    p.add_argument("--last-guess", type=_vec)
    p.add_argument("--out")
    return p


def config_from_args(args: argparse.Namespace) -> RunConfig:
    data = {}
    if args.config:
        data.update(_read_json(args.config))
    for key, val in vars(args).items():
        if key == "config" or val is None:
            continue
        data[key] = val
    if "command" not in data:
        raise ConfigError("no command given")
    known = set(RunConfig.__dataclass_fields__)
    extra = {k: v for k, v in data.items() if k not in known}
    cfg = RunConfig(**{k: v for k, v in data.items() if k in known})
    cfg.extra = extra
    return cfg


def _thread_limit():
    n = os.environ.get("MMOT_THREADS")
    if not n:
        return None
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:  # pragma: no cover
        return None
    return threadpool_limits(limits=int(n))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    limiter = _thread_limit()
    try:
        cfg = config_from_args(args)
        return run(cfg)
    except (ConfigError, KeyError, ValueError, RuntimeError) as exc:
        print(f"mmot: error: {exc}", file=sys.stderr)
        return 1
    finally:
        if limiter is not None:
            limiter.restore_original_limits()


if __name__ == "__main__":
    sys.exit(main())
