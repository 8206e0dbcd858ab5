"""Command-line experiment runner.

Subcommands ``converge``, ``conserve``, ``symmetry`` and ``trees-selftest``
each write a deterministic CSV whose ``#`` header records the full plan.
"""

from __future__ import annotations

import argparse
import hashlib
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .diagnostics import (convergence_slope, h1_error, kdv_energy, kdv_momentum, mass,
                          nls_energy, symmetry_defect)
from .freqpoly import p_dom, p_low, parse as parse_poly
from .integrators import (B_FAMILIES, Diverged, FixedPointConfig, Method, NoConvergence,
                          SchemeSpec, evolve, interp_symmetry_check)
from .spectral import Grid, SpectralField, kdv_data, load_field, rough_data, save_field, smooth_data
from .trees import (Equation, bck_coproduct, check_kirchhoff, f_dom, f_low, from_sexpr,
                    generate_trees, lemma_check, random_tree, splittings,
                    symmetry_condition_check, symmetry_condition_violation,
                    symmetry_factor, to_sexpr)

KINDS = ("converge", "conserve", "symmetry", "trees-selftest")
DATA_CLASSES = ("smooth", "h2", "h3", "h4", "h5")

DEFAULT_SCHEMES = {
    ("converge", Equation.NLS): "NLS_OS18,NLS_BS22,NLS_SYM1,NLS_MID1,NLS_MID2,NLS_STRANG",
    ("converge", Equation.KDV): "KDV_SYM1,KDV_BS2",
    ("conserve", Equation.NLS): "NLS_MID1,NLS_MID2,NLS_BS22,NLS_STRANG",
    ("conserve", Equation.KDV): "KDV_SYM1,KDV_STRANG",
    ("symmetry", Equation.NLS): "NLS_SYM1,NLS_MID1,NLS_MID2,NLS_STRANG,NLS_BS22,NLS_OS18",
    ("symmetry", Equation.KDV): "KDV_SYM1",
}
SYMMETRIC = {Method.NLS_SYM1, Method.NLS_MID1, Method.NLS_MID2, Method.NLS_STRANG, Method.KDV_SYM1}
FAMILY_EXPECTED = {"NLS_OS18": False, "NLS_SYM1": True, "NLS_MID1": True, "NLS_MID2": True}


class PlanError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentPlan:
    kind: str
    eq: Equation = Equation.NLS
    schemes: tuple[str, ...] = ()
    data: str = "h2"
    modes: int = 256
    taus: tuple[float, ...] = ()
    t_end: float = 1.0
    seed: int = 1
    fp_tol: float = 1e-12
    fp_max_iter: int = 50
    stride: int = 10
    micro: int = 20
    ref_factor: int = 64
    samples: int = 100
    out: str | None = None
    cache_dir: str | None = None
    jobs: int = 1

    def validate(self) -> "ExperimentPlan":
        if self.kind not in KINDS:
            raise PlanError(f"unknown experiment kind {self.kind!r}")
        if self.data not in DATA_CLASSES:
            raise PlanError(f"data must be one of {', '.join(DATA_CLASSES)}")
        if self.kind == "trees-selftest":
            return self
        if not self.taus:
            raise PlanError("empty tau ladder")
        if any(not (t > 0) for t in self.taus):
            raise PlanError("time steps must be positive")
        if any(b >= a for a, b in zip(self.taus, self.taus[1:])):
            raise PlanError("tau ladder must be strictly decreasing")
        if not self.t_end > 0:
            raise PlanError("t-end must be positive")
        if self.kind == "conserve" and len(self.taus) != 1:
            raise PlanError("conserve runs take a single --tau")
        if self.kind == "converge" and len(self.taus) < 3:
            raise PlanError("a convergence study needs at least three time steps")
        for s in self.schemes:
            try:
                m = Method(s)
            except ValueError:
                raise PlanError(f"unknown scheme {s!r}") from None
            if m.equation is not self.eq:
                raise PlanError(f"{s} does not solve {self.eq.value}")
        if self.kind in ("converge", "conserve"):
            for t in self.taus:
                self.steps_for(t)
        try:
            FixedPointConfig(self.fp_tol, self.fp_max_iter)
        except ValueError as e:
            raise PlanError(str(e)) from None
        if self.modes < 8 or self.modes & (self.modes - 1):
            raise PlanError("modes must be a power of two >= 8")
        return self

    def steps_for(self, tau: float) -> int:
        n = round(self.t_end / tau)
        if n < 1 or abs(n * tau - self.t_end) > 1e-9 * max(1.0, self.t_end):
            raise PlanError(f"t-end {self.t_end} is not a multiple of tau {tau}")
        return n

    @property
    def fp(self) -> FixedPointConfig:
        return FixedPointConfig(self.fp_tol, self.fp_max_iter)

    def spec(self, name: str) -> SchemeSpec:
        return SchemeSpec.parse(name, fp=self.fp, micro=self.micro)

    def header(self) -> list[str]:
        d = asdict(self)
        d["eq"] = self.eq.value
        d["schemes"] = ",".join(self.schemes)
        d["taus"] = ",".join(repr(t) for t in self.taus)
        lines = [f"# lowreg {__version__}"]
        for key in ("kind", "eq", "schemes", "data", "modes", "taus", "t_end", "seed",
                    "fp_tol", "fp_max_iter", "stride", "micro", "ref_factor", "samples"):
            lines.append(f"# {key}={d[key]}")
        return lines


def initial_data(plan: ExperimentPlan) -> SpectralField:
    g = Grid(plan.modes)
    u = smooth_data(g) if plan.data == "smooth" else rough_data(g, float(plan.data[1:]), plan.seed)
    return kdv_data(u) if plan.eq is Equation.KDV else u


def _fmt(x: float) -> str:
    return "nan" if not math.isfinite(x) else repr(float(x))


class Report:
    def __init__(self, plan: ExperimentPlan, columns: Sequence[str]):
        self.lines = plan.header() + [",".join(columns)]
        self.ok = True

    def row(self, *cells):
        self.lines.append(",".join(_fmt(c) if isinstance(c, float) else str(c) for c in cells))

    def note(self, text: str):
        self.lines.append(f"# {text}")

    def text(self) -> str:
        return "\n".join(self.lines) + "\n"


# converge

def _reference_scheme(eq: Equation) -> str:
    return "NLS_MID2" if eq is Equation.NLS else "KDV_BS2"


def _run_cell(args):
    spec, u0, tau, steps = args
    try:
        return "OK", evolve(spec, u0, tau, steps).final
    except Diverged:
        return "DIVERGED", None
    except NoConvergence:
        return "NOCONV", None


def _cache_path(plan: ExperimentPlan, tau: float) -> Path | None:
    if not plan.cache_dir:
        return None
    key = repr((plan.eq.value, plan.data, plan.modes, plan.seed, plan.t_end, tau,
                _reference_scheme(plan.eq), plan.fp_tol, plan.fp_max_iter)).encode()
    return Path(plan.cache_dir) / f"ref-{hashlib.sha256(key).hexdigest()[:16]}.lrf"


def reference_solution(plan: ExperimentPlan, u0: SpectralField, tau: float) -> SpectralField:
    path = _cache_path(plan, tau)
    if path is not None and path.exists():
        return load_field(path)
    out = evolve(plan.spec(_reference_scheme(plan.eq)), u0, tau, plan.steps_for(tau)).final
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        save_field(path, out)
    return out


def _map(plan: ExperimentPlan, fn, items):
    if plan.jobs > 1:
        with ProcessPoolExecutor(plan.jobs) as ex:
            return list(ex.map(fn, items))
    return [fn(x) for x in items]


def run_converge(plan: ExperimentPlan) -> Report:
    u0 = initial_data(plan)
    tau_ref = min(plan.taus) / plan.ref_factor
    rep = Report(plan, ["kind", "scheme", "tau", "value", "status"])
    rep.note(f"reference={_reference_scheme(plan.eq)} tau_ref={tau_ref!r}")
    try:
        ref = reference_solution(plan, u0, tau_ref)
        coarse = reference_solution(plan, u0, 2 * tau_ref)
    except (Diverged, NoConvergence) as e:
        rep.ok = False
        status = "DIVERGED" if isinstance(e, Diverged) else "NOCONV"
        rep.row("floor", _reference_scheme(plan.eq), 2 * tau_ref, float("nan"), status)
        return rep
    floor = h1_error(coarse, ref)
    rep.row("floor", _reference_scheme(plan.eq), 2 * tau_ref, floor, "OK")
    cells = [(plan.spec(s), u0, t, plan.steps_for(t)) for s in plan.schemes for t in plan.taus]
    results = iter(_map(plan, _run_cell, cells))
    for s in plan.schemes:
        errs = []
        for t in plan.taus:
            status, out = next(results)
            err = h1_error(out, ref) if status == "OK" else float("nan")
            if status != "OK":
                rep.ok = False
            errs.append(err)
            rep.row("error", s, t, err, status)
        try:
            rep.row("slope", s, "", convergence_slope(plan.taus, errs, floor), "OK")
        except ValueError:
            rep.row("slope", s, "", float("nan"), "INSUFFICIENT")
    return rep


# conserve

def run_conserve(plan: ExperimentPlan) -> Report:
    u0 = initial_data(plan)
    tau = plan.taus[0]
    steps = plan.steps_for(tau)
    if plan.eq is Equation.NLS:
        obs = [mass, nls_energy]
    else:
        obs = [kdv_momentum, kdv_energy]
    rep = Report(plan, ["scheme", "t", "mass_err", "energy_err", "status"])
    if plan.eq is Equation.KDV:
        rep.note("for kdv mass_err is the momentum integral of u^2")
    for s in plan.schemes:
        spec = plan.spec(s)
        u, n = u0, 0
        first = [f(u0) for f in obs]
        rep.row(s, 0.0, 0.0, 0.0, "OK")
        while n < steps:
            chunk = min(plan.stride, steps - n)
            try:
                u = evolve(spec, u, tau, chunk).final
            except (Diverged, NoConvergence) as e:
                rep.ok = False
                status = "DIVERGED" if isinstance(e, Diverged) else "NOCONV"
                rep.row(s, (n + (e.step or chunk)) * tau, float("nan"), float("nan"), status)
                break
            n += chunk
            vals = [f(u) for f in obs]
            rep.row(s, n * tau, *(abs(v - v0) / abs(v0) for v, v0 in zip(vals, first)), "OK")
    return rep


# symmetry

def _sample_points(seed: int, n: int = 20):
    rng = np.random.Generator(np.random.PCG64(seed))
    taus = rng.uniform(0.01, 0.2, n)
    zs = 1j * rng.uniform(-5, 5, (n, 4))
    return list(zip(taus, zs))


def run_symmetry(plan: ExperimentPlan) -> Report:
    u0 = initial_data(plan)
    rep = Report(plan, ["kind", "scheme", "tau", "value", "status"])
    bound = 10 * plan.fp_tol
    for s in plan.schemes:
        spec = plan.spec(s)
        for t in plan.taus:
            try:
                d = symmetry_defect(spec, u0, t)
            except (Diverged, NoConvergence) as e:
                rep.ok = False
                rep.row("defect", s, t, float("nan"), "DIVERGED" if isinstance(e, Diverged) else "NOCONV")
                continue
            if spec.method in SYMMETRIC:
                status = "pass" if d <= bound else "fail"
                rep.ok &= status == "pass"
            else:
                status = "asym"
            rep.row("defect", s, t, d, status)
    if plan.eq is Equation.NLS:
        tree = generate_trees(Equation.NLS, 0)[1].children[0]
        samples = _sample_points(plan.seed)
        for name, fam in B_FAMILIES.items():
            worst = symmetry_condition_violation(fam, tree, samples)
            passed = worst <= 1e-12
            rep.ok &= passed == FAMILY_EXPECTED[name]
            rep.row("family", name, "", worst, "pass" if passed else "fail")
    return rep


# trees self-test

def _paper_checks() -> list[tuple[str, int, int]]:
    rows = []
    nls0 = generate_trees(Equation.NLS, 0)
    nls1 = generate_trees(Equation.NLS, 1)
    kdv1 = generate_trees(Equation.KDV, 1)
    everything = nls1 + kdv1 + generate_trees(Equation.KDV, 0) + nls0
    rows.append(("kirchhoff", len(everything), sum(not check_kirchhoff(t) for t in everything)))
    want = [1, 2, 2, 4]
    rows.append(("symmetry_factor", 4, sum(symmetry_factor(t) != w for t, w in zip(nls1, want))))
    tt = nls0[1].children[0]
    dom_ok = [
        f_dom(tt) == parse_poly("2*k1^2", 3),
        f_low(tt) == parse_poly("-2*k1*k2 - 2*k1*k3 + 2*k2*k3", 3),
        p_dom(parse_poly("2*k1^2 - 2*k1*k2 - 2*k1*k3 + 2*k2*k3", 3)) == parse_poly("2*k1^2", 3),
        p_low(parse_poly("3*k1^2*k2 + 3*k1*k2^2", 2)) == parse_poly("3*k1^2*k2 + 3*k1*k2^2", 2),
    ]
    rows.append(("dominant_frequency", len(dom_ok), dom_ok.count(False)))
    big = nls1[2]
    counts = [len(bck_coproduct(big.children[0])) == 3, len(bck_coproduct(tt)) == 2]
    rows.append(("coproduct_terms", 2, counts.count(False)))
    counts = [len(splittings(big)) == 4, len(splittings(big.children[0])) == 4]
    rows.append(("splitting_counts", 2, counts.count(False)))
    gen = [(t, Equation.NLS) for t in nls1] + [(t, Equation.KDV) for t in kdv1]
    rows.append(("lemma_generated", len(gen), sum(not lemma_check(t, e) for t, e in gen)))
    rows.append(("sexpr_roundtrip", len(everything),
                 sum(from_sexpr(to_sexpr(t)) != t for t in everything)))
    return rows


def run_trees_selftest(plan: ExperimentPlan) -> Report:
    rep = Report(plan, ["check", "instances", "failures"])
    rows = _paper_checks()
    rng = np.random.Generator(np.random.PCG64(plan.seed))
    rand = [random_tree(Equation.NLS, rng) for _ in range(plan.samples)]
    rows.append(("lemma_random", len(rand), sum(not lemma_check(t) for t in rand)))
    nodes = [0.0, 1.0]
    Ls = rng.uniform(-50, 50, 20)
    rows.append(("interp_symmetric_nodes", len(Ls),
                 sum(not interp_symmetry_check(L, 0.1, nodes) for L in Ls)))
    rows.append(("interp_asymmetric_detected", len(Ls),
                 sum(interp_symmetry_check(L, 0.1, [0.0, 0.7]) for L in Ls if abs(L) > 1e-3)))
    tree = generate_trees(Equation.NLS, 0)[1].children[0]
    samples = _sample_points(plan.seed)
    fam_fail = sum(symmetry_condition_check(B_FAMILIES[n], tree, samples) != exp
                   for n, exp in FAMILY_EXPECTED.items())
    rows.append(("coefficient_families", len(FAMILY_EXPECTED), fam_fail))
    for check, n, bad in rows:
        rep.row(check, n, bad)
        rep.ok &= bad == 0
    return rep


RUNNERS = {
    "converge": run_converge,
    "conserve": run_conserve,
    "symmetry": run_symmetry,
    "trees-selftest": run_trees_selftest,
}


# argument handling

def _floats(text: str) -> tuple[float, ...]:
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "^" in part:  # allow 2^-4
            base, exp = part.split("^")
            out.append(float(base) ** float(exp))
        else:
            out.append(float(part))
    return tuple(out)


def read_config(path: str) -> dict[str, str]:
    out = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise PlanError(f"{path}:{n}: expected key=value")
        key, val = line.split("=", 1)
        out[key.strip().replace("-", "_")] = val.strip()
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lowreg", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="kind", required=True)
    for kind in KINDS:
        s = sub.add_parser(kind)
        s.add_argument("--config", help="plain key=value file; flags override it")
        s.add_argument("--eq", choices=["nls", "kdv"])
        s.add_argument("--scheme", help="comma-separated method names")
        s.add_argument("--data", choices=DATA_CLASSES)
        s.add_argument("--modes", type=int)
        s.add_argument("--t-end", type=float)
        s.add_argument("--taus", help="comma-separated decreasing ladder, e.g. 2^-4,2^-5")
        s.add_argument("--tau")
        s.add_argument("--seed", type=int)
        s.add_argument("--out")
        s.add_argument("--fp-tol", type=float)
        s.add_argument("--fp-max-iter", type=int)
        s.add_argument("--stride", type=int)
        s.add_argument("--micro", type=int, help="RK4 substeps per KdV Strang step")
        s.add_argument("--ref-factor", type=int)
        s.add_argument("--samples", type=int)
        s.add_argument("--cache-dir")
        s.add_argument("--jobs", type=int)
    return p


_INT_KEYS = {"modes", "seed", "fp_max_iter", "stride", "micro", "ref_factor", "samples", "jobs"}
_FLOAT_KEYS = {"t_end", "fp_tol"}


def plan_from_args(argv: Sequence[str] | None = None) -> ExperimentPlan:
    args = build_parser().parse_args(argv)
    kind = args.kind
    vals: dict[str, str | int | float] = {}
    if args.config:
        vals.update(read_config(args.config))
    for key, val in vars(args).items():
        if key in ("kind", "config") or val is None:
            continue
        vals[key] = val
    eq = Equation(str(vals.pop("eq", "nls")).lower())
    defaults = {
        "converge": dict(modes=256 if eq is Equation.NLS else 128, t_end=1.0,
                         taus=",".join(f"2^-{j}" for j in range(4, 9))),
        "conserve": dict(modes=128, t_end=200.0, tau="0.02"),
        "symmetry": dict(modes=256 if eq is Equation.NLS else 128, t_end=1.0, taus="0.02,0.01"),
        "trees-selftest": dict(modes=256, t_end=1.0, taus=""),
    }[kind]
    if "tau" in vals or "taus" in vals:
        defaults.pop("tau", None)
        defaults.pop("taus", None)
    for k, v in defaults.items():
        vals.setdefault(k, v)
    if "tau" in vals:
        if "taus" in vals:
            raise PlanError("give either --tau or --taus, not both")
        vals["taus"] = str(vals.pop("tau"))
    kwargs: dict = {"kind": kind, "eq": eq}
    for key, val in vals.items():
        if key == "taus":
            kwargs["taus"] = _floats(str(val))
        elif key == "scheme" or key == "schemes":
            kwargs["schemes"] = tuple(x.strip().upper() for x in str(val).split(",") if x.strip())
        elif key in _INT_KEYS:
            kwargs[key] = int(val)
        elif key in _FLOAT_KEYS:
            kwargs[key] = float(val)
        elif key in ("data", "out", "cache_dir"):
            kwargs[key] = str(val)
        else:
            raise PlanError(f"unknown setting {key!r}")
    if "schemes" not in kwargs and kind != "trees-selftest":
        kwargs["schemes"] = tuple(DEFAULT_SCHEMES[(kind, eq)].split(","))
    return ExperimentPlan(**kwargs).validate()


def main(argv: Sequence[str] | None = None) -> int:
    try:
        plan = plan_from_args(argv)
    except PlanError as e:
        print(f"lowreg: configuration error: {e}", file=sys.stderr)
        return 2
    rep = RUNNERS[plan.kind](plan)
    text = rep.text()
    if plan.out:
        Path(plan.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0 if rep.ok else 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
