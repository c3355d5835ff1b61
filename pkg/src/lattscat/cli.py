"""Batch experiment runner with a reproducibility contract.

Subcommands:

    dispersion   level-set geometry table for a list of directions
    green        kernel values and defect residuals on a block
    forward      solve one potential, write psi and far-field tables
    recover      phase recovery from a phaseless-sample CSV
    converge     orchestrated error-vs-radius study from a config file
    suite        run every config in a directory, aggregate pass/fail

Every command accepts --out, --seed, --format csv|json where meaningful;
converge and suite read versioned JSON configs (schema "lattscat/1",
unknown keys rejected).  The same config and seed produce byte-identical
output: floats are printed with %.17g, rows are emitted in a fixed
order, and all randomness flows from seeds recorded in the config.

Environment overrides for tolerance knobs (applied at run time, never
serialized): LATTSCAT_QUAD_TOL (quadrature tolerance for the kernel),
LATTSCAT_NQUAD (quadrature order), LATTSCAT_DELTA_MIN (determinant
rejection threshold).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import (
    Direction,
    LatticePoint,
    Potential,
    check_energy,
    make_random_potential,
)
from .dispersion import gamma_of_omega
from .errors import (
    ConfigError,
    DegenerateSeparation,
    InsideSupport,
    LattScatError,
)
from .forward import (
    IncidentWave,
    extract_f_reference,
    solve_forward,
    transfer_matrix_d1,
)
from .green import GreenEvaluator
from .phaseless import add_noise, read_samples, sample_many, sample_pair
from .recover import (
    DELTA_MIN,
    circle_grid,
    exceptional_scan,
    random_directions,
    recover_pair,
    recover_three_point_d1,
    recover_two_point_d1_iterated,
    screen_directions,
)

SCHEMA = "lattscat/1"


def _fmt(v) -> str:
    return "%.17g" % float(v)


def _env_float(name: str, fallback):
    raw = os.environ.get(name)
    if raw is None:
        return fallback
    try:
        return float(raw)
    except ValueError as exc:
        raise ConfigError(f"{name} must be a number, got {raw!r}") from exc


def _env_int(name: str, fallback):
    raw = os.environ.get(name)
    if raw is None:
        return fallback
    try:
        return int(raw)
    except ValueError as exc:
        raise ConfigError(f"{name} must be an integer, got {raw!r}") from exc


# -- configuration ------------------------------------------------------------


def _require_keys(d: dict, allowed: set, required: set, where: str) -> None:
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")
    missing = required - set(d)
    if missing:
        raise ConfigError(f"missing keys in {where}: {sorted(missing)}")


@dataclass(frozen=True, slots=True)
class PotentialSpec:
    kind: str = "random"
    halfwidth: int = 1
    amplitude: float = 1.0
    seed: int | None = None
    complex_values: bool = False
    density: float = 1.0
    path: str | None = None

    @classmethod
    def from_dict(cls, d: dict) -> "PotentialSpec":
        kind = d.get("kind", "random")
        if kind == "file":
            _require_keys(d, {"kind", "path"}, {"path"}, "potential")
            return cls(kind="file", path=str(d["path"]))
        if kind != "random":
            raise ConfigError(f"potential kind must be 'random' or 'file', got {kind!r}")
        _require_keys(d, {"kind", "halfwidth", "amplitude", "seed", "complex", "density"},
                      set(), "potential")
        return cls(kind="random",
                   halfwidth=int(d.get("halfwidth", 1)),
                   amplitude=float(d.get("amplitude", 1.0)),
                   seed=None if d.get("seed") is None else int(d["seed"]),
                   complex_values=bool(d.get("complex", False)),
                   density=float(d.get("density", 1.0)))

    def to_dict(self) -> dict:
        if self.kind == "file":
            return {"kind": "file", "path": self.path}
        return {"kind": "random", "halfwidth": self.halfwidth,
                "amplitude": self.amplitude, "seed": self.seed,
                "complex": self.complex_values, "density": self.density}

    def build(self, dim: int, fallback_seed: int) -> Potential:
        if self.kind == "file":
            return Potential.load(self.path)
        seed = self.seed if self.seed is not None else fallback_seed
        if self.complex_values:
            print("note: complex potentials break the real-data symmetry the "
                  "recovery formulas assume; use for forward experiments only",
                  file=sys.stderr)
        return make_random_potential(dim, self.halfwidth, self.amplitude, seed=seed,
                                     complex_values=self.complex_values,
                                     density=self.density)


@dataclass(frozen=True, slots=True)
class OmegaSpec:
    count: int = 0
    seed: int | None = None
    screen_delta: float = 0.0
    listed: tuple[tuple[float, ...], ...] = ()

    @classmethod
    def from_dict(cls, d: dict) -> "OmegaSpec":
        _require_keys(d, {"count", "seed", "screen_delta", "list"}, set(), "omega")
        listed = tuple(tuple(float(c) for c in w) for w in d.get("list", ()))
        count = int(d.get("count", 0))
        if not listed and count <= 0:
            raise ConfigError("omega needs a nonempty 'list' or a positive 'count'")
        return cls(count=count,
                   seed=None if d.get("seed") is None else int(d["seed"]),
                   screen_delta=float(d.get("screen_delta", 0.0)),
                   listed=listed)

    def to_dict(self) -> dict:
        out: dict = {"count": self.count, "seed": self.seed,
                     "screen_delta": self.screen_delta}
        if self.listed:
            out["list"] = [list(w) for w in self.listed]
        return out


@dataclass(frozen=True, slots=True)
class SGridSpec:
    start: float = 40.0
    factor: float = 2.0
    count: int = 4

    @classmethod
    def from_dict(cls, d: dict) -> "SGridSpec":
        _require_keys(d, {"start", "factor", "count"}, set(), "s_grid")
        spec = cls(start=float(d.get("start", 40.0)),
                   factor=float(d.get("factor", 2.0)),
                   count=int(d.get("count", 4)))
        if spec.start <= 0 or spec.factor <= 1.0 or spec.count < 1:
            raise ConfigError("s_grid needs start > 0, factor > 1, count >= 1")
        return spec

    def to_dict(self) -> dict:
        return {"start": self.start, "factor": self.factor, "count": self.count}

    def values(self) -> tuple[float, ...]:
        return tuple(self.start * self.factor ** j for j in range(self.count))


_TOP_KEYS = {
    "schema", "kind", "name", "dimension", "energy", "seed", "potential",
    "incident", "omega", "zeta", "s_grid", "reference_s_grid", "sites",
    "d1_method", "trials", "noise", "delta_min", "slope_window",
    "min_pass_fraction", "error_tol", "deltas", "scan_delta",
    "scan_max_fraction", "quad_tol", "n_quad", "out",
}

_DEFAULT_WINDOWS = {2: (-0.8, -0.3), 3: (-1.4, -0.7)}


@dataclass(frozen=True, slots=True)
class ExperimentConfig:
    """One experiment, fully determined: geometry, seeds, and pass rules."""

    kind: str
    dimension: int
    energy: float
    name: str = ""
    seed: int = 0
    potential: PotentialSpec = field(default_factory=PotentialSpec)
    incident: tuple[float, ...] | None = None
    omega: OmegaSpec = field(default_factory=lambda: OmegaSpec(count=1))
    zeta: tuple[int, ...] | None = None
    s_grid: SGridSpec = field(default_factory=SGridSpec)
    reference_s_grid: tuple[float, ...] | None = None
    sites: tuple[int, ...] = (-3, -5, -10)
    d1_method: str = "three-point"
    trials: int = 1
    noise: float = 0.0
    delta_min: float = DELTA_MIN
    slope_window: tuple[float, float] | None = None
    min_pass_fraction: float = 0.8
    error_tol: float = 1e-9
    deltas: tuple[float, ...] = (1e-1, 1e-2, 1e-3)
    scan_delta: float = 1e-2
    scan_max_fraction: float = 0.15
    quad_tol: float | None = None
    n_quad: int | None = None
    out: str | None = None

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        if d.get("schema") != SCHEMA:
            raise ConfigError(f"config schema must be {SCHEMA!r}, got {d.get('schema')!r}")
        _require_keys(d, _TOP_KEYS, {"schema", "kind", "dimension", "energy"}, "config")
        kind = d["kind"]
        if kind not in ("converge", "scan"):
            raise ConfigError(f"kind must be 'converge' or 'scan', got {kind!r}")
        dim = int(d["dimension"])
        if dim not in (1, 2, 3):
            raise ConfigError("dimension must be 1, 2, or 3")
        energy = float(d["energy"])
        try:
            check_energy(energy, dim)
        except LattScatError as exc:
            raise ConfigError(f"bad energy: {exc}") from exc

        method = d.get("d1_method", "three-point")
        if method not in ("three-point", "two-point"):
            raise ConfigError("d1_method must be 'three-point' or 'two-point'")

        window = d.get("slope_window")
        if window is not None:
            window = (float(window[0]), float(window[1]))
            if window[0] >= window[1]:
                raise ConfigError("slope_window must be (low, high) with low < high")

        incident = d.get("incident")
        if incident is not None:
            incident = tuple(float(c) for c in incident)
            if len(incident) != dim:
                raise ConfigError("incident direction has the wrong dimension")

        zeta = d.get("zeta")
        if zeta is not None:
            zeta = tuple(int(c) for c in zeta)
            if len(zeta) != dim:
                raise ConfigError("zeta has the wrong dimension")
            if all(c == 0 for c in zeta):
                raise ConfigError("zeta must be a nonzero offset")

        ref_grid = d.get("reference_s_grid")
        if ref_grid is not None:
            ref_grid = tuple(float(s) for s in ref_grid)

        cfg = cls(
            kind=kind, dimension=dim, energy=energy,
            name=str(d.get("name", "")),
            seed=int(d.get("seed", 0)),
            potential=PotentialSpec.from_dict(d.get("potential", {})),
            incident=incident,
            omega=OmegaSpec.from_dict(d.get("omega", {"count": 1})),
            zeta=zeta,
            s_grid=SGridSpec.from_dict(d.get("s_grid", {})),
            reference_s_grid=ref_grid,
            sites=tuple(int(x) for x in d.get("sites", (-3, -5, -10))),
            d1_method=method,
            trials=int(d.get("trials", 1)),
            noise=float(d.get("noise", 0.0)),
            delta_min=float(d.get("delta_min", DELTA_MIN)),
            slope_window=window,
            min_pass_fraction=float(d.get("min_pass_fraction", 0.8)),
            error_tol=float(d.get("error_tol", 1e-9)),
            deltas=tuple(float(x) for x in d.get("deltas", (1e-1, 1e-2, 1e-3))),
            scan_delta=float(d.get("scan_delta", 1e-2)),
            scan_max_fraction=float(d.get("scan_max_fraction", 0.15)),
            quad_tol=None if d.get("quad_tol") is None else float(d["quad_tol"]),
            n_quad=None if d.get("n_quad") is None else int(d["n_quad"]),
            out=d.get("out"),
        )
        if cfg.noise < 0:
            raise ConfigError("noise must be non-negative")
        return cfg

    def to_dict(self) -> dict:
        out = {
            "schema": SCHEMA, "kind": self.kind, "name": self.name,
            "dimension": self.dimension, "energy": self.energy, "seed": self.seed,
            "potential": self.potential.to_dict(),
            "omega": self.omega.to_dict(),
            "s_grid": self.s_grid.to_dict(),
            "sites": list(self.sites), "d1_method": self.d1_method,
            "trials": self.trials, "noise": self.noise,
            "delta_min": self.delta_min,
            "min_pass_fraction": self.min_pass_fraction,
            "error_tol": self.error_tol, "deltas": list(self.deltas),
            "scan_delta": self.scan_delta,
            "scan_max_fraction": self.scan_max_fraction,
        }
        if self.incident is not None:
            out["incident"] = list(self.incident)
        if self.zeta is not None:
            out["zeta"] = list(self.zeta)
        if self.reference_s_grid is not None:
            out["reference_s_grid"] = list(self.reference_s_grid)
        if self.slope_window is not None:
            out["slope_window"] = list(self.slope_window)
        if self.quad_tol is not None:
            out["quad_tol"] = self.quad_tol
        if self.n_quad is not None:
            out["n_quad"] = self.n_quad
        if self.out is not None:
            out["out"] = self.out
        return out


def load_config(path) -> ExperimentConfig:
    try:
        raw = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    cfg = ExperimentConfig.from_dict(data)
    if not cfg.name:
        cfg = replace(cfg, name=Path(path).stem)
    return cfg


# -- output helpers -----------------------------------------------------------


def _rows_to_csv(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow(r)
    return buf.getvalue()


def _rows_to_json(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    out = [dict(zip(header, r)) for r in rows]
    return json.dumps(out, indent=2, sort_keys=True) + "\n"


def _emit(header, rows, fmt: str, out: str | None) -> None:
    text = _rows_to_csv(header, rows) if fmt == "csv" else _rows_to_json(header, rows)
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _parse_vector(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(c) for c in text.split(","))
    except ValueError as exc:
        raise ConfigError(f"cannot parse vector {text!r}") from exc


# -- experiment machinery -----------------------------------------------------


def _incident_for(cfg: ExperimentConfig) -> IncidentWave:
    if cfg.dimension == 1:
        return IncidentWave.right_moving(cfg.energy)
    comps = cfg.incident
    if comps is None:
        comps = tuple(1.0 if i == 0 else 0.0 for i in range(cfg.dimension))
    return IncidentWave.traveling(Direction.from_vector(comps), cfg.energy)


def _green_for(cfg: ExperimentConfig) -> GreenEvaluator:
    quad_tol = _env_float("LATTSCAT_QUAD_TOL", cfg.quad_tol)
    n_quad = _env_int("LATTSCAT_NQUAD", cfg.n_quad)
    kwargs = {}
    if quad_tol is not None:
        kwargs["quad_tol"] = quad_tol
    if n_quad is not None:
        kwargs["n_quad"] = n_quad
    return GreenEvaluator(cfg.dimension, cfg.energy, **kwargs)


def _directions_for(cfg: ExperimentConfig, incident: IncidentWave,
                    zeta: LatticePoint) -> list[Direction]:
    spec = cfg.omega
    if spec.listed:
        dirs = [Direction.from_vector(w) for w in spec.listed]
        if spec.screen_delta > 0:
            dirs = screen_directions(incident, zeta, cfg.energy, dirs, spec.screen_delta)
        return dirs
    seed = spec.seed if spec.seed is not None else cfg.seed + 2
    kept: list[Direction] = []
    batch = 0
    while len(kept) < spec.count:
        if batch > 100:
            raise ConfigError(
                f"could not find {spec.count} directions passing the screen "
                f"delta={spec.screen_delta} after {batch} batches")
        cand = random_directions(cfg.dimension, spec.count, seed + 1000 * batch)
        if spec.screen_delta > 0:
            cand = screen_directions(incident, zeta, cfg.energy, cand, spec.screen_delta)
        kept.extend(cand)
        batch += 1
    return kept[: spec.count]


def _fit_slope(svals, errs) -> float:
    return float(np.polyfit(np.log(svals), np.log(errs), 1)[0])


def _default_reference_grid(s_max: float) -> tuple[float, ...]:
    return tuple(round(s_max * f) for f in (1.0, 1.25, 1.55, 1.9, 2.2))


def _converge_one_direction(cfg, sol, w, zeta, svals, noise_base, widx):
    """Error-vs-radius rows for one direction; failures become row flags."""
    ref_grid = cfg.reference_s_grid or _default_reference_grid(max(svals))
    f_ref = extract_f_reference(sol, w, s_grid=ref_grid)
    rows = []
    fit_s, fit_e = [], []
    rejected = 0
    for sidx, s in enumerate(svals):
        try:
            sx, sy = sample_pair(sol, s, w, zeta)
        except InsideSupport:
            rows.append((w, s, float("nan"), float("nan"), "inside-support"))
            rejected += 1
            continue
        if cfg.noise > 0:
            sx = add_noise(sx, cfg.noise, noise_base + 10 * (100 * widx + sidx))
            sy = add_noise(sy, cfg.noise, noise_base + 10 * (100 * widx + sidx) + 1)
        res = recover_pair(sx, sy, cfg.energy, delta_min=cfg.delta_min,
                           on_singular="reject")
        if res.rejected:
            rows.append((w, s, float("nan"), float("nan"), "near-singular"))
            rejected += 1
            continue
        err = abs(res.f_plus - f_ref.value)
        fit_s.append(s)
        fit_e.append(max(err, 1e-300))
        slope = _fit_slope(fit_s, fit_e) if len(fit_s) >= 2 else float("nan")
        rows.append((w, s, err, slope, ""))
    slope = _fit_slope(fit_s, fit_e) if len(fit_s) >= 3 else None
    return rows, slope, rejected, f_ref


def run_converge(cfg: ExperimentConfig, threads: int = 1) -> tuple[dict, str]:
    """Error-vs-radius study; returns (report, csv_text)."""
    if cfg.kind != "converge":
        raise ConfigError(f"run_converge got a {cfg.kind!r} config")
    if cfg.dimension == 1:
        return _run_converge_d1(cfg)

    delta_min = _env_float("LATTSCAT_DELTA_MIN", cfg.delta_min)
    cfg = replace(cfg, delta_min=delta_min)
    zeta = LatticePoint(cfg.zeta if cfg.zeta is not None
                        else tuple(1 if i == 0 else 0 for i in range(cfg.dimension)))
    incident = _incident_for(cfg)
    green = _green_for(cfg)
    pot = cfg.potential.build(cfg.dimension, cfg.seed + 1)
    sol = solve_forward(pot, incident, green=green)
    dirs = _directions_for(cfg, incident, zeta)
    if not dirs:
        raise ConfigError("no directions survive the exceptional-set screen")
    svals = cfg.s_grid.values()
    noise_base = cfg.seed + 3
    window = cfg.slope_window or _DEFAULT_WINDOWS[cfg.dimension]

    def work(item):
        widx, w = item
        return _converge_one_direction(cfg, sol, w, zeta, svals, noise_base, widx)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(work, enumerate(dirs)))
    else:
        outcomes = [work(item) for item in enumerate(dirs)]

    header = [f"omega_{i+1}" for i in range(cfg.dimension)] + ["s", "error", "slope_so_far"]
    csv_rows = []
    per_dir = []
    passed = 0
    for w, (rows, slope, rejected, f_ref) in zip(dirs, outcomes):
        for _, s, err, slope_sf, flag in rows:
            csv_rows.append([_fmt(c) for c in w.components]
                            + [_fmt(s), _fmt(err), _fmt(slope_sf)])
        ok = slope is not None and window[0] <= slope <= window[1]
        passed += ok
        per_dir.append({
            "omega": list(w.components),
            "slope": slope,
            "pass": bool(ok),
            "rejected_points": rejected,
            "f_reference": [f_ref.value.real, f_ref.value.imag],
            "reference_estimate": f_ref.residual_estimate,
        })
    frac = passed / len(dirs)
    report = {
        "name": cfg.name or "converge",
        "kind": "converge",
        "dimension": cfg.dimension,
        "energy": cfg.energy,
        "s_grid": list(svals),
        "slope_window": list(window),
        "directions": per_dir,
        "pass_fraction": frac,
        "min_pass_fraction": cfg.min_pass_fraction,
        "status": "pass" if frac >= cfg.min_pass_fraction else "fail",
    }
    return report, _rows_to_csv(header, csv_rows)


def _run_converge_d1(cfg: ExperimentConfig) -> tuple[dict, str]:
    """Reflected-side recovery against the transfer-matrix oracle."""
    incident = _incident_for(cfg)
    k = incident.k[0]
    sites = cfg.sites
    if len(sites) < 3:
        raise ConfigError("d=1 converge needs at least three sites")
    pts = [LatticePoint((x,)) for x in sites[:3]]

    header = ["omega_1", "s", "error", "slope_so_far"]
    rows = []
    err_max = 0.0
    failures = []
    for trial in range(cfg.trials):
        pot_seed = (cfg.potential.seed if cfg.potential.seed is not None
                    else cfg.seed + 1) + trial
        pot = replace(cfg.potential, seed=pot_seed).build(1, pot_seed)
        for p in pts:
            if pot.contains(p):
                raise ConfigError(f"site {p.coords[0]} lies inside the support")
        sol = solve_forward(pot, incident)
        oracle, _ = transfer_matrix_d1(pot, incident)
        samples = sample_many(sol, pts)
        avals = [smp.a for smp in samples]
        try:
            if cfg.d1_method == "three-point":
                rec = recover_three_point_d1(*avals, *(x for x in sites[:3]), k)
            else:
                rec, _, converged = recover_two_point_d1_iterated(
                    avals[0], avals[1], sites[0], sites[1], k, max_iter=2000)
                if not converged:
                    failures.append({"trial": trial, "reason": "fixed-point-not-converged",
                                     "abs_s21": abs(oracle)})
                    rows.append([_fmt(-1.0), _fmt(abs(sites[0])), _fmt(float("nan")),
                                 _fmt(float("nan"))])
                    continue
        except DegenerateSeparation as exc:
            raise ConfigError(f"degenerate site geometry for E={cfg.energy}: {exc}") from exc
        err = abs(rec - oracle)
        err_max = max(err_max, err)
        rows.append([_fmt(-1.0), _fmt(abs(sites[0])), _fmt(err), _fmt(float("nan"))])
    report = {
        "name": cfg.name or "converge-d1",
        "kind": "converge",
        "dimension": 1,
        "energy": cfg.energy,
        "method": cfg.d1_method,
        "trials": cfg.trials,
        "error_max": err_max,
        "error_tol": cfg.error_tol,
        "failures": failures,
        "status": "pass" if err_max < cfg.error_tol and not failures else "fail",
    }
    return report, _rows_to_csv(header, rows)


def run_scan(cfg: ExperimentConfig) -> tuple[dict, str]:
    """Exceptional-direction census; returns (report, csv_text)."""
    if cfg.kind != "scan":
        raise ConfigError(f"run_scan got a {cfg.kind!r} config")
    if cfg.dimension < 2:
        raise ConfigError("scan is defined for d >= 2")
    incident = _incident_for(cfg)
    zeta = LatticePoint(cfg.zeta if cfg.zeta is not None
                        else tuple(1 for _ in range(cfg.dimension)))
    spec = cfg.omega
    if spec.listed:
        dirs = [Direction.from_vector(w) for w in spec.listed]
    elif cfg.dimension == 2:
        dirs = circle_grid(spec.count)
    else:
        dirs = random_directions(3, spec.count, spec.seed if spec.seed is not None
                                 else cfg.seed + 2)
    report_obj = exceptional_scan(incident, zeta, cfg.energy, dirs, deltas=cfg.deltas)

    header = [f"omega_{i+1}" for i in range(cfg.dimension)] + ["distance"]
    rows = [[_fmt(c) for c in w] + [_fmt(d)]
            for w, d in zip(report_obj.omegas, report_obj.distances)]
    monotone = all(a >= b for a, b in zip(report_obj.fractions, report_obj.fractions[1:]))
    at_delta = report_obj.fraction_below(cfg.scan_delta)
    ok = monotone and at_delta < cfg.scan_max_fraction
    report = {
        "name": cfg.name or "scan",
        "kind": "scan",
        "dimension": cfg.dimension,
        "energy": cfg.energy,
        "zeta": list(zeta.coords),
        "deltas": list(report_obj.deltas),
        "fractions": list(report_obj.fractions),
        "monotone": bool(monotone),
        "fraction_at_scan_delta": at_delta,
        "scan_delta": cfg.scan_delta,
        "scan_max_fraction": cfg.scan_max_fraction,
        "status": "pass" if ok else "fail",
    }
    return report, _rows_to_csv(header, rows)


# -- subcommand handlers ------------------------------------------------------


def _cmd_dispersion(args) -> int:
    dim = args.dim
    if args.omega:
        dirs = [Direction.from_vector(_parse_vector(t)) for t in args.omega]
    else:
        dirs = random_directions(dim, args.omega_count, args.seed)
    header = ([f"omega_{i+1}" for i in range(dim)]
              + [f"gamma_{i+1}" for i in range(dim)] + ["mu", "kkt_residual"])
    rows = []
    for w in dirs:
        pt = gamma_of_omega(w, args.energy)
        rows.append([_fmt(c) for c in w.components] + [_fmt(c) for c in pt.gamma]
                    + [_fmt(pt.mu), _fmt(pt.kkt_residual)])
    _emit(header, rows, args.format, args.out)
    return 0


def _cmd_green(args) -> int:
    kwargs = {}
    quad_tol = _env_float("LATTSCAT_QUAD_TOL", args.quad_tol)
    n_quad = _env_int("LATTSCAT_NQUAD", None)
    if quad_tol is not None:
        kwargs["quad_tol"] = quad_tol
    if n_quad is not None:
        kwargs["n_quad"] = n_quad
    ev = GreenEvaluator(args.dim, args.energy, **kwargs)
    b = args.halfwidth
    axes = [range(-b, b + 1)] * args.dim
    pts = [LatticePoint(c) for c in np.stack(
        np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, args.dim)]
    pts.sort(key=lambda p: p.coords)
    ev.precompute([p.coords for p in pts], eps=args.eps)
    header = [f"x_{i+1}" for i in range(args.dim)] + ["re", "im", "defect_residual"]
    rows = []
    for p in pts:
        g = ev.value(p.coords, eps=args.eps)
        defect = ev.defect(p.coords, eps=args.eps)
        rows.append([str(c) for c in p.coords]
                    + [_fmt(g.real), _fmt(g.imag), _fmt(abs(defect))])
    _emit(header, rows, args.format, args.out)
    return 0


def _cmd_forward(args) -> int:
    pot = Potential.load(args.potential)
    dim = pot.dim
    if args.omega:
        dirs = [Direction.from_vector(_parse_vector(t)) for t in args.omega]
    else:
        dirs = random_directions(dim, args.omega_count, args.seed)
    if dim == 1:
        incident = IncidentWave.right_moving(args.energy)
    elif args.incident is not None:
        incident = IncidentWave.traveling(
            Direction.from_vector(_parse_vector(args.incident)), args.energy)
    else:
        axis = tuple(1.0 if i == 0 else 0.0 for i in range(dim))
        incident = IncidentWave.traveling(Direction(axis), args.energy)
    sol = solve_forward(pot, incident)

    psi_header = [f"x_{i+1}" for i in range(dim)] + ["re_psi", "im_psi"]
    psi_rows = []
    for p in pot.support:
        val = sol.psi_on_support[p]
        psi_rows.append([str(c) for c in p.coords] + [_fmt(val.real), _fmt(val.imag)])

    ref_header = ([f"omega_{i+1}" for i in range(dim)]
                  + ["re_f", "im_f", "residual_estimate", "method"])
    ref_rows = []
    s_grid = tuple(float(s) for s in args.s_grid.split(",")) if args.s_grid else None
    for w in dirs:
        fv = extract_f_reference(sol, w, s_grid=s_grid)
        ref_rows.append([_fmt(c) for c in w.components]
                        + [_fmt(fv.value.real), _fmt(fv.value.imag),
                           _fmt(fv.residual_estimate), fv.method])

    if args.out:
        base = Path(args.out)
        psi_path = base.with_name(base.name + "_psi.csv")
        ref_path = base.with_name(base.name + "_fref.csv")
        psi_path.write_text(_rows_to_csv(psi_header, psi_rows))
        ref_path.write_text(_rows_to_csv(ref_header, ref_rows))
    else:
        sys.stdout.write(_rows_to_csv(psi_header, psi_rows))
        sys.stdout.write(_rows_to_csv(ref_header, ref_rows))
    return 0


def _cmd_recover(args) -> int:
    delta_min = _env_float("LATTSCAT_DELTA_MIN", args.delta_min)
    if args.k:
        k = _parse_vector(args.k)
    else:
        comps = _parse_vector(args.incident)
        if len(comps) == 1:
            k = (IncidentWave.right_moving(args.energy).k[0],)
        else:
            k = IncidentWave.traveling(Direction.from_vector(comps), args.energy).k
    with open(args.samples, newline="") as fh:
        samples = read_samples(fh, k)
    if not samples:
        raise ConfigError("sample file holds no rows")
    dim = samples[0].x.dim

    header = ([f"omega_{i+1}" for i in range(dim)]
              + ["s", "re_f", "im_f", "abs_D", "rejected_flag", "method"])
    rows = []
    if dim == 1:
        base = [smp for smp in samples if smp.zeta == (0,)]
        base.sort(key=lambda smp: -smp.x.coords[0])
        if len(base) < 3:
            raise ConfigError("d=1 recovery needs three zeta=0 sample rows")
        xs = [smp.x.coords[0] for smp in base[:3]]
        rec = recover_three_point_d1(base[0].a, base[1].a, base[2].a, *xs, k[0])
        rows.append([_fmt(-1.0), _fmt(abs(xs[0])), _fmt(rec.real), _fmt(rec.imag),
                     _fmt(float("nan")), "0", "three-point"])
    else:
        groups: dict = {}
        for smp in samples:
            key = (smp.s, smp.omega)
            groups.setdefault(key, []).append(smp)
        for key in sorted(groups, key=lambda kv: (kv[0], kv[1])):
            pair = groups[key]
            if len(pair) != 2:
                continue
            zero = tuple(0 for _ in range(dim))
            sx = next((p for p in pair if p.zeta == zero), None)
            sy = next((p for p in pair if p.zeta != zero), None)
            if sx is None or sy is None:
                continue
            res = recover_pair(sx, sy, args.energy, delta_min=delta_min,
                               on_singular="reject")
            if res.rejected:
                rows.append([_fmt(c) for c in sx.omega]
                            + [_fmt(sx.s), _fmt(float("nan")), _fmt(float("nan")),
                               _fmt(abs(res.det)), "1", res.method])
            else:
                rows.append([_fmt(c) for c in sx.omega]
                            + [_fmt(sx.s), _fmt(res.f_plus.real), _fmt(res.f_plus.imag),
                               _fmt(abs(res.det)), "0", res.method])
    _emit(header, rows, args.format, args.out)
    return 0


def _cmd_converge(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if cfg.kind == "scan":
        report, csv_text = run_scan(cfg)
    else:
        report, csv_text = run_converge(cfg, threads=args.threads)
    out = args.out or cfg.out
    json_text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if out:
        base = Path(out)
        base.with_name(base.name + ".csv").write_text(csv_text)
        base.with_name(base.name + ".json").write_text(json_text)
    if args.format == "json" or not out:
        sys.stdout.write(json_text if args.format == "json" else csv_text)
    return 0 if report["status"] == "pass" else 1


def _cmd_suite(args) -> int:
    root = Path(args.configs)
    if not root.is_dir():
        print(f"config directory {root} does not exist", file=sys.stderr)
        return 2
    paths = sorted(root.glob("*.json"))
    if not paths:
        print(f"no configs found in {root}", file=sys.stderr)
        return 2

    results = []
    exit_code = 0
    for path in paths:
        try:
            cfg = load_config(path)
            if args.seed is not None:
                cfg = replace(cfg, seed=args.seed)
            if cfg.kind == "scan":
                report, csv_text = run_scan(cfg)
            else:
                report, csv_text = run_converge(cfg, threads=args.threads)
        except ConfigError as exc:
            results.append({"config": path.name, "status": "config-error",
                            "detail": str(exc)})
            exit_code = 2
            continue
        except LattScatError as exc:
            results.append({"config": path.name, "status": "error",
                            "detail": f"{type(exc).__name__}: {exc}"})
            if exit_code != 2:
                exit_code = 1
            continue
        if args.out:
            base = Path(args.out) / path.stem
            base.parent.mkdir(parents=True, exist_ok=True)
            base.with_name(base.name + ".csv").write_text(csv_text)
            base.with_name(base.name + ".json").write_text(
                json.dumps(report, indent=2, sort_keys=True) + "\n")
        results.append({"config": path.name, "status": report["status"],
                        "report": report})
        if report["status"] != "pass" and exit_code == 0:
            exit_code = 1

    summary = {"results": results, "exit_code": exit_code}
    if args.out:
        (Path(args.out) / "summary.json").write_text(
            json.dumps(summary, indent=2, sort_keys=True) + "\n")
    width = max(len(r["config"]) for r in results)
    for r in results:
        line = f"{r['config']:<{width}}  {r['status']}"
        if r["status"] in ("config-error", "error"):
            line += f"  ({r['detail']})"
        print(line)
    print(f"suite: {sum(r['status'] == 'pass' for r in results)}/{len(results)} passed")
    return exit_code


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lattscat",
                                description="lattice scattering experiments")
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("dispersion", help="level-set geometry table")
    d.add_argument("--dim", type=int, required=True, choices=(1, 2, 3))
    d.add_argument("--energy", type=float, required=True)
    d.add_argument("--omega", action="append", metavar="C1,C2,...")
    d.add_argument("--omega-count", type=int, default=8)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--format", choices=("csv", "json"), default="csv")
    d.add_argument("--out")
    d.set_defaults(func=_cmd_dispersion)

    g = sub.add_parser("green", help="kernel values with defect residuals")
    g.add_argument("--dim", type=int, required=True, choices=(1, 2, 3))
    g.add_argument("--energy", type=float, required=True)
    g.add_argument("--eps", type=float, default=0.0)
    g.add_argument("--halfwidth", type=int, default=2)
    g.add_argument("--quad-tol", type=float, default=None)
    g.add_argument("--format", choices=("csv", "json"), default="csv")
    g.add_argument("--out")
    g.set_defaults(func=_cmd_green)

    f = sub.add_parser("forward", help="solve one potential, emit psi and far field")
    f.add_argument("--potential", required=True, help="potential JSON file")
    f.add_argument("--energy", type=float, required=True)
    f.add_argument("--omega", action="append", metavar="C1,C2,...")
    f.add_argument("--omega-count", type=int, default=4)
    f.add_argument("--incident", metavar="C1,C2,...", default=None)
    f.add_argument("--s-grid", default=None, metavar="S1,S2,...")
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--out", help="base path; writes <base>_psi.csv and <base>_fref.csv")
    f.set_defaults(func=_cmd_forward)

    r = sub.add_parser("recover", help="phase recovery from a sample CSV")
    r.add_argument("--samples", required=True)
    r.add_argument("--energy", type=float, required=True)
    r.add_argument("--incident", metavar="C1,C2,...",
                   help="incident direction; wave vector derived from it")
    r.add_argument("--k", metavar="K1,K2,...", help="incident wave vector, overrides --incident")
    r.add_argument("--delta-min", type=float, default=DELTA_MIN)
    r.add_argument("--format", choices=("csv", "json"), default="csv")
    r.add_argument("--out")
    r.set_defaults(func=_cmd_recover)

    c = sub.add_parser("converge", help="error-vs-radius study from a config")
    c.add_argument("--config", required=True)
    c.add_argument("--out", help="base path for .csv and .json outputs")
    c.add_argument("--seed", type=int, default=None)
    c.add_argument("--threads", type=int, default=1)
    c.add_argument("--format", choices=("csv", "json"), default="csv")
    c.set_defaults(func=_cmd_converge)

    s = sub.add_parser("suite", help="run every config in a directory")
    s.add_argument("configs", nargs="?", default="configs")
    s.add_argument("--out", help="directory for per-experiment outputs and summary")
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--threads", type=int, default=1)
    s.set_defaults(func=_cmd_suite)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except LattScatError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
