"""Command-line runner: ``spqm verify|scenario|export --config FILE``.

Reports are JSON with sorted keys and residuals rounded to seven
significant digits, so identical configurations and seeds give identical
bytes. Exit status is 0 exactly when every check passes.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .coherent_states import (
    SymCoord,
    fock_overlap_series,
    homomorphism_residual,
    poly_space,
    resolution_check,
    scalar_kernel,
)
from .config import ConfigError, RunConfig, ScenarioConfig, load_config, parse_coefficient
from .evolution import (
    GeneratorSpec,
    evolve_ode,
    magnus_path,
    nonunitary_probe,
    parabolic_drift,
    wei_norman,
)
from .involutions import ad_matrix, build_involutions
from .numerics import mat_exp
from .observables import (
    DensityState,
    boltzmann_flow,
    build_phase_ops,
    ehrenfest_flow,
    lorentzian_ground_state,
    stress_energy,
    trace_operator,
    vev_metric,
)
from .rep_theory import (
    build_fock,
    build_metaplectic,
    ccr_residual,
    defining_module,
    weight_decompose,
    weyl_dimension,
)
from .sp_algebra import (
    build_basis,
    census,
    defining_realization,
    jacobi_residual,
    parse_label,
    random_element,
    relation_residuals,
    structure_constants,
    StructureConstants,
)

log = logging.getLogger("spqm")


@dataclass(frozen=True)
class Check:
    suite: str
    name: str
    residual: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.residual)) and self.residual <= self.tolerance

    def as_dict(self) -> dict:
        return {
            "suite": self.suite,
            "name": self.name,
            "residual": _round(self.residual),
            "tolerance": self.tolerance,
            "status": "pass" if self.passed else "fail",
        }


def _round(x: float) -> float:
    if not math.isfinite(x) or x == 0:
        return abs(float(x)) if x == 0 else float(x)
    return float(f"{x:.6e}")


# ---------------------------------------------------------------- output helpers


def write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    buf = io.StringIO(newline="")
    w = csv.writer(buf, lineterminator="\r\n", quoting=csv.QUOTE_MINIMAL)
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    path.write_bytes(buf.getvalue().encode("utf-8"))


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v) + 0.0)
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def write_json(path: Path, payload) -> None:
    path.write_bytes((json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=False) + "\n").encode("utf-8"))


# ---------------------------------------------------------------- verify suites


def _suite_algebra(n: int, seed: int, samples: int) -> list[Check]:
    c = census(n)
    expect = {
        "generators": n * (2 * n + 1),
        "z_plus": n * (n + 1) // 2,
        "z_minus": n * (n + 1) // 2,
        "u": n * n,
        "parabolic": n * (n + 1) // 2 + n * n,
        "sp_mod_u": n * (n + 1),
    }
    out = [Check("algebra", f"census.{k}", float(abs(c[k] - v)), 0.0) for k, v in sorted(expect.items())]
    basis = build_basis(n)
    out.append(Check("algebra", "jacobi", jacobi_residual(structure_constants(basis)), 1e-9))
    rel = relation_residuals(defining_realization(n), transposed_ee=True)
    out += [Check("algebra", f"relation {k}", v, 1e-9) for k, v in sorted(rel.items())]
    return out


def _suite_involutions(n: int, seed: int, samples: int) -> list[Check]:
    inv = build_involutions(n)
    out = [Check("involutions", f"quaternion {k}", v, 1e-12) for k, v in sorted(inv.quaternion_residuals().items())]
    rng = np.random.default_rng(seed)
    basis = build_basis(n)
    real = defining_realization(n)
    worst = 0.0
    for _ in range(samples):
        g = mat_exp(real.dense(random_element(basis, rng, "split_real", scale=0.5)))
        worst = max(worst, float(np.max(np.abs(g.conj().T @ inv.J @ g - inv.J))))
    out.append(Check("involutions", "g^+ J g = J", worst, 1e-9))
    composed = ad_matrix(inv.J, basis) @ ad_matrix(inv.K, basis) - ad_matrix(inv.L, basis)
    out.append(Check("involutions", "Ad(J)Ad(K) = Ad(L)", float(np.max(np.abs(composed))), 1e-10))
    return out


def _suite_rep(n: int, seed: int, samples: int) -> list[Check]:
    out = [
        Check("rep", "weyl(defining) = 2n", float(abs(weyl_dimension([1] + [0] * (n - 1), n) - 2 * n)), 0.0),
        Check("rep", "weyl(adjoint) = dim", float(abs(weyl_dimension([2] + [0] * (n - 1), n) - n * (2 * n + 1))), 0.0),
        Check("rep", "defining weights", float(abs(len(weight_decompose(defining_module(n))) - 2 * n)), 0.0),
    ]
    fock = build_fock(n, 4 if n > 2 else 6, 1)
    out.append(Check("rep", "ccr", ccr_residual(fock), 1e-12))
    rel = relation_residuals(fock, fock.interior(), transposed_ee=True)
    out.append(Check("rep", "fock interior relations", max(rel.values()), 1e-9))
    return out


def _suite_cs(n: int, seed: int, samples: int) -> list[Check]:
    out = []
    for label, module in (("trivial", None), ("defining", defining_module(1))):
        out.append(Check("cs", f"homomorphism n=1 {label}", homomorphism_residual(poly_space(1, 5, module), 3), 1e-8))
    out.append(Check("cs", "resolution c=3", resolution_check(3.0, 5).residual, 1e-6))
    z = 0.3 + 0.2j
    k = scalar_kernel(SymCoord(np.array([[z]])), SymCoord(np.array([[np.conj(z)]])), 0.5)
    out.append(Check("cs", "kernel vs fock series", abs(k - fock_overlap_series(z, np.conj(z), 1, 80)), 1e-8))
    return out


def _two_term_spec(n: int) -> GeneratorSpec:
    b = build_basis(n)
    x = b.element(("e", 1, 1)) + b.element(("f", 1, 1))
    return GeneratorSpec([(lambda t: math.cos(t), x), (lambda t: 0.5 + 0.0 * t, b.element(("h", 1)))])


def _suite_evolution(n: int, seed: int, samples: int) -> list[Check]:
    real = defining_realization(n)
    spec = _two_term_spec(n)
    grid = np.linspace(0.0, 0.5, 11)
    ode = evolve_ode(spec, grid, real).final()
    mag = magnus_path(spec, grid, 4, real, steps_per_interval=4).final()
    wn = wei_norman(spec, grid).reconstruct(real)
    diff = lambda a, b: float(np.max(np.abs(a - b)))
    return [
        Check("evolution", "ode vs magnus4", diff(ode, mag), 1e-7),
        Check("evolution", "ode vs wei-norman", diff(ode, wn), 1e-7),
        Check("evolution", "magnus4 vs wei-norman", diff(mag, wn), 1e-7),
        Check("evolution", "unitarity drift", float(np.max(np.abs(ode.conj().T @ ode - np.eye(2 * n)))), 1e-9),
    ]


def _suite_observables(n: int, seed: int, samples: int) -> list[Check]:
    gs = lorentzian_ground_state()
    v = vev_metric(gs.vector, gs.realization)
    out = [Check("observables", "(3,1) eta", float(np.max(np.abs(v.eta - np.diag([1, 1, 1, -1])))), 1e-10)]
    b1 = build_basis(1)
    js = build_fock(1, 4, 1)
    ops = build_phase_ops(b1, js)
    H = trace_operator(stress_energy(ops))
    rng = np.random.default_rng(seed)
    psi = rng.normal(size=js.dim) + 1j * rng.normal(size=js.dim)
    tr = ehrenfest_flow(ops, H, psi, np.linspace(0.0, 1.0, 1001))
    out.append(Check("observables", "ehrenfest", tr.ehrenfest_defect(), 1e-6))
    out.append(Check("observables", "energy drift", tr.energy_drift(), 1e-7))
    bt = boltzmann_flow(DensityState.pure(psi), H.toarray() / abs(H).max(), np.linspace(0.0, 1.0, 11))
    out.append(Check("observables", "boltzmann trace", bt.trace_drift(), 1e-10))
    return out


SUITE_FUNCS = {
    "algebra": _suite_algebra,
    "involutions": _suite_involutions,
    "rep": _suite_rep,
    "cs": _suite_cs,
    "evolution": _suite_evolution,
    "observables": _suite_observables,
}


def _run_suite(args) -> list[Check]:
    name, n, seed, samples = args
    return SUITE_FUNCS[name](n, seed, samples)


def _pool_map(func, items: list, jobs: int) -> list:
    if jobs <= 1 or len(items) <= 1:
        return [func(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(func, items))


def run_verify(cfg: RunConfig, out_dir: Path, jobs: int = 1) -> dict:
    v = cfg.verify
    results = _pool_map(_run_suite, [(s, v.rank, cfg.seed, v.samples) for s in v.suites], jobs)
    checks = [c for group in results for c in group]
    report = {
        "command": "verify",
        "schema_version": cfg.schema_version,
        "seed": cfg.seed,
        "rank": v.rank,
        "census": census(v.rank),
        "checks": [c.as_dict() for c in checks],
        "artifacts": ["report.json"],
        "passed": all(c.passed for c in checks),
        "version": __version__,
    }
    write_json(out_dir / "report.json", report)
    return report


# ---------------------------------------------------------------- scenarios


def _spec_from(sc: ScenarioConfig, self_adjoint: bool = True) -> GeneratorSpec:
    basis = build_basis(sc.rank)
    terms = [(parse_coefficient(expr), basis.element(parse_label(name, sc.rank))) for name, expr in sorted(sc.generators.items())]
    return GeneratorSpec(terms, self_adjoint=self_adjoint)


def _realize(sc: ScenarioConfig):
    r = sc.realization
    if r.kind == "defining":
        return defining_realization(sc.rank)
    if r.kind == "fock":
        return build_fock(sc.rank, r.cutoff, r.flavours)
    if r.kind == "metaplectic":
        return build_metaplectic(sc.rank, r.cutoff, r.flavours)
    return lorentzian_ground_state(r.cutoff).realization


def _vacuum(real) -> np.ndarray:
    v = np.zeros(real.dim, complex)
    v[0] = 1.0
    return v


def _scenario_ehrenfest(sc: ScenarioConfig, seed: int):
    real = _realize(sc)
    basis = build_basis(sc.rank)
    ops = build_phase_ops(basis, real)
    if sc.hamiltonian == "stress_energy":
        H = trace_operator(stress_energy(ops))
    else:
        spec = _spec_from(sc)
        H = real.matrix(spec.element(0.0))
    rng = np.random.default_rng(seed)
    psi = _vacuum(real) if sc.state == "vacuum" else rng.normal(size=real.dim) + 1j * rng.normal(size=real.dim)
    grid = np.linspace(sc.grid.start, sc.grid.stop, sc.grid.steps)
    tr = ehrenfest_flow(ops, H, psi, grid)
    n = sc.rank
    header = ["t"]
    for name in ("q", "pi"):
        for i in range(n):
            for j in range(n):
                header += [f"{name}{i + 1}{j + 1}_re", f"{name}{i + 1}{j + 1}_im"]
    header.append("energy")
    rows = []
    for k, t in enumerate(tr.times):
        row = [float(t)]
        for arr in (tr.q[k], tr.pi[k]):
            for z in arr.ravel():
                row += [float(z.real), float(z.imag)]
        row.append(float(tr.energy[k]))
        rows.append(row)
    checks = [
        Check("scenario", f"{sc.id}: energy drift", tr.energy_drift(), 1e-7),
        Check("scenario", f"{sc.id}: ehrenfest", tr.ehrenfest_defect(), 1e-6),
    ]
    return checks, {"trajectory": (header, rows)}, {}


def _scenario_drift(sc: ScenarioConfig, seed: int):
    real = defining_realization(sc.rank)
    spec = _spec_from(sc)
    grid = np.linspace(sc.grid.start, sc.grid.stop, sc.grid.steps)
    rep = parabolic_drift(evolve_ode(spec, grid, real))
    basis = build_basis(sc.rank)
    parab = set(basis.label_set("parabolic"))
    in_p = all(basis.index[parse_label(name, sc.rank)] in parab for name in sc.generators)
    checks = []
    if in_p:
        checks.append(Check("scenario", f"{sc.id}: leakage for parabolic generators", rep.max_leakage, 1e-10))
    rows = [[float(t), float(x)] for t, x in zip(rep.times, rep.leakage)]
    return checks, {"leakage": (["t", "leakage"], rows)}, {"parabolic_generators": in_p, "max_leakage": _round(rep.max_leakage)}


def _scenario_probe(sc: ScenarioConfig, seed: int):
    real = _realize(sc)
    spec = _spec_from(sc, self_adjoint=False)
    vac = _vacuum(real)
    grid = np.linspace(sc.grid.start, sc.grid.stop, sc.grid.steps)
    drift = nonunitary_probe(spec, grid, real, vac)
    H0 = real.matrix(spec.element(grid[0]))
    H0 = H0.toarray() if hasattr(H0, "toarray") else H0
    # d<phi|phi>/dt for phi' = -iH phi
    oracle = float(np.vdot(vac, 1j * (H0.conj().T - H0) @ vac).real)
    rows = [[float(t), float(x)] for t, x in zip(drift.times, drift.norms)]
    h = grid[1] - grid[0]
    checks = [Check("scenario", f"{sc.id}: initial norm rate", abs(drift.initial_rate() - oracle), max(1e-6, 50 * h * h))]
    return checks, {"norm": (["t", "norm2"], rows)}, {"rate_oracle": _round(oracle), "rate_measured": _round(drift.initial_rate())}


def _scenario_evolution(sc: ScenarioConfig, seed: int):
    real = defining_realization(sc.rank)
    spec = _spec_from(sc)
    grid = np.linspace(sc.grid.start, sc.grid.stop, sc.grid.steps)
    ode = evolve_ode(spec, grid, real)
    mag = magnus_path(spec, grid, 4, real, steps_per_interval=4)
    wn = wei_norman(spec, grid)
    rows = []
    worst = [0.0, 0.0, 0.0]
    for k, t in enumerate(grid):
        w = wn.reconstruct(real, k)
        d = [np.max(np.abs(ode.mats[k] - mag.mats[k])), np.max(np.abs(ode.mats[k] - w)), np.max(np.abs(mag.mats[k] - w))]
        worst = [max(a, float(b)) for a, b in zip(worst, d)]
        rows.append([float(t)] + [float(x) for x in d])
    checks = [
        Check("scenario", f"{sc.id}: ode vs magnus4", worst[0], 1e-7),
        Check("scenario", f"{sc.id}: ode vs wei-norman", worst[1], 1e-7),
        Check("scenario", f"{sc.id}: magnus4 vs wei-norman", worst[2], 1e-7),
        Check("scenario", f"{sc.id}: unitarity drift", ode.unitarity_drift(), 1e-9),
    ]
    return checks, {"agreement": (["t", "ode_magnus4", "ode_wei_norman", "magnus4_wei_norman"], rows)}, {}


def _scenario_geometry(sc: ScenarioConfig, seed: int):
    from scipy.sparse.linalg import expm_multiply

    gs = lorentzian_ground_state(sc.realization.cutoff)
    real = gs.realization
    spec = _spec_from(sc)
    H = real.matrix(spec.element(0.0))
    base = vev_metric(gs.vector, real)
    grid = np.linspace(sc.grid.start, sc.grid.stop, sc.grid.steps)
    states = expm_multiply(-1j * H, gs.vector, start=grid[0], stop=grid[-1], num=len(grid), endpoint=True)
    rows, last = [], base
    for t, psi in zip(grid, states):
        last = vev_metric(psi, real, scale=base.scale)
        rows.append([float(t)] + [float(x) for x in last.eta.ravel()])
    header = ["t"] + [f"eta{i + 1}{j + 1}" for i in range(4) for j in range(4)]
    checks = [Check("scenario", f"{sc.id}: ground-state eta", float(np.max(np.abs(base.eta - np.diag([1.0, 1, 1, -1])))), 1e-10)]
    snap = {
        "eta_initial": [[_round(x) for x in r] for r in base.eta],
        "eta_final": [[_round(x) for x in r] for r in last.eta],
        "signature_initial": list(base.signature),
        "change_norm": _round(float(np.linalg.norm(last.eta - base.eta))),
    }
    return checks, {"eta": (header, rows)}, snap


SCENARIO_FUNCS = {
    "ehrenfest": _scenario_ehrenfest,
    "parabolic_drift": _scenario_drift,
    "nonunitary_probe": _scenario_probe,
    "evolution": _scenario_evolution,
    "geometry": _scenario_geometry,
}


def _run_scenario(args):
    sc, seed, out_dir = args
    try:
        checks, tables, extra = SCENARIO_FUNCS[sc.kind](sc, seed)
    except Exception as exc:  # surfaced with scenario context
        return sc.id, [Check("scenario", f"{sc.id}: run", float("inf"), 0.0)], [], {"error": f"{type(exc).__name__}: {exc}"}
    files = []
    for name, (header, rows) in sorted(tables.items()):
        if "csv" in sc.outputs:
            fname = f"{sc.id}_{name}.csv"
            write_csv(Path(out_dir) / fname, header, rows)
            files.append(fname)
    if "json" in sc.outputs and extra:
        fname = f"{sc.id}_summary.json"
        write_json(Path(out_dir) / fname, extra)
        files.append(fname)
    return sc.id, checks, files, extra


def run_scenario(cfg: RunConfig, out_dir: Path, jobs: int = 1) -> dict:
    if not cfg.scenarios:
        raise ConfigError("scenarios", "no scenarios configured")
    results = _pool_map(_run_scenario, [(sc, cfg.seed, str(out_dir)) for sc in cfg.scenarios], jobs)
    results.sort(key=lambda r: r[0])
    checks = [c for _, cs, _, _ in results for c in cs]
    report = {
        "command": "scenario",
        "schema_version": cfg.schema_version,
        "seed": cfg.seed,
        "scenarios": [
            {"id": sid, "checks": [c.as_dict() for c in cs], "artifacts": files, **({"error": extra["error"]} if "error" in extra else {})}
            for sid, cs, files, extra in results
        ],
        "passed": all(c.passed for c in checks),
        "version": __version__,
    }
    write_json(out_dir / "report.json", report)
    return report


# ---------------------------------------------------------------- export


def export_tables(cfg: RunConfig, out_dir: Path) -> dict:
    e = cfg.export
    n = e.rank
    files, checks = [], []
    if "structure_constants" in e.tables:
        sc = structure_constants(build_basis(n))
        text = sc.to_json()
        path = out_dir / "structure_constants.json"
        path.write_bytes(text.encode("utf-8"))
        back = StructureConstants.from_json(path.read_text(encoding="utf-8"))
        checks.append(Check("export", "structure constants round trip", float(np.max(np.abs(back.tensor - sc.tensor))), 0.0))
        files.append(path.name)
    if "weights" in e.tables:
        mod = defining_module(n)
        rows = []
        for k, w in enumerate(mod.weights):
            rows.append([k] + [float(np.real(x)) for x in w])
        write_csv(out_dir / "weights_defining.csv", ["row"] + [f"h{i + 1}" for i in range(n)], rows)
        files.append("weights_defining.csv")
        checks.append(Check("export", "defining weight rows", float(abs(len(rows) - 2 * n)), 0.0))
    if "kernel" in e.tables:
        zs = np.linspace(0.0, 0.8, e.kernel_points)
        rows = []
        for zp in zs:
            for zc in zs:
                k = scalar_kernel(SymCoord(np.array([[zp]])), SymCoord(np.array([[zc]])), e.kernel_c)
                rows.append([float(zp), float(zc), float(k.real), float(k.imag)])
        write_csv(out_dir / "kernel_n1.csv", ["zprime", "zstar", "kernel_re", "kernel_im"], rows)
        files.append("kernel_n1.csv")
        at_zero = max(abs(r[2] - 1.0) + abs(r[3]) for r in rows if r[0] == 0.0)
        checks.append(Check("export", "kernel at Z'=0", at_zero, 1e-14))
    report = {
        "command": "export",
        "schema_version": cfg.schema_version,
        "seed": cfg.seed,
        "rank": n,
        "checks": [c.as_dict() for c in checks],
        "artifacts": sorted(files),
        "passed": all(c.passed for c in checks),
        "version": __version__,
    }
    write_json(out_dir / "report.json", report)
    return report


# ---------------------------------------------------------------- entry point


DEFAULT_CONFIG = "schema_version: 1\nseed: 0\n"


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="spqm", description="Symplectic algebra, coherent-state and evolution checks.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("verify", "run the invariant suites"),
        ("scenario", "run evolution and observable scenarios"),
        ("export", "write structure constants, weight tables and kernel samples"),
    ):
        s = sub.add_parser(name, help=help_text)
        s.add_argument("--config", type=Path, help="YAML configuration (defaults are used when omitted)")
        s.add_argument("--out", type=Path, default=Path("out"), help="output directory")
        s.add_argument("--seed", type=int, help="override the configured seed")
        s.add_argument("--jobs", type=int, default=1, help="worker processes")
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        text = args.config.read_text(encoding="utf-8") if args.config else DEFAULT_CONFIG
        cfg = load_config(text)
    except ConfigError as exc:
        print(json.dumps({"error": "config", "field": exc.field_path, "line": exc.line, "message": str(exc)}, sort_keys=True), file=sys.stderr)
        return 2
    except OSError as exc:
        print(json.dumps({"error": "io", "path": str(args.config), "message": exc.strerror}, sort_keys=True), file=sys.stderr)
        return 2
    if args.seed is not None:
        cfg = RunConfig(cfg.schema_version, args.seed, cfg.verify, cfg.scenarios, cfg.export)
    try:
        args.out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(json.dumps({"error": "io", "path": str(args.out), "message": exc.strerror}, sort_keys=True), file=sys.stderr)
        return 2
    runner = {"verify": run_verify, "scenario": run_scenario, "export": lambda c, o, j: export_tables(c, o)}[args.command]
    try:
        report = runner(cfg, args.out, args.jobs)
    except ConfigError as exc:
        print(json.dumps({"error": "config", "field": exc.field_path, "line": exc.line, "message": str(exc)}, sort_keys=True), file=sys.stderr)
        return 2
    failed = [c for c in _all_checks(report) if c["status"] != "pass"]
    for c in failed:
        log.warning("FAIL %s: %s residual=%s tol=%s", c["suite"], c["name"], c["residual"], c["tolerance"])
    print(f"{args.command}: {'pass' if report['passed'] else 'fail'} ({len(failed)} failing) -> {args.out / 'report.json'}")
    return 0 if report["passed"] else 1


def _all_checks(report: dict) -> list[dict]:
    if "scenarios" in report:
        return [c for s in report["scenarios"] for c in s["checks"]]
    return report["checks"]


if __name__ == "__main__":
    sys.exit(main())
