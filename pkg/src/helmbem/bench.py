"""Benchmark harness: sweep formulation x preconditioner x scene cells.

A run builds each scene once, assembles boundary operators into a shared
cache so every formulation at the same wavenumber reuses them, solves each
feasible cell with GMRES, scores single-sphere cells against the analytic
series (PSNR), and cross-checks multi-sphere cells against a reference
formulation through mass-weighted trace agreement.  Cells that fail are
recorded with an error category; the sweep never aborts.

Outputs: a versioned records CSV with a fixed column set, a summary JSON,
and optional per-cell field CSVs.
"""

from __future__ import annotations

import csv
import json
import os
import time
from dataclasses import dataclass

import numpy as np
import yaml

from .assembly import AssemblyParams, OperatorStore
from .fields import FieldGrid, evaluate_field, export_field_csv, make_grid, psnr, tag_regions
from .formulations import (
    FormulationError,
    build_system,
    list_formulations,
    parse_formulation,
    predicted_counts,
    recover_traces,
    trace_deviation,
)
from .gmres import gmres
from .preconditioners import (
    FeasibilityError,
    attach_preconditioner,
    is_feasible,
    list_preconditioners,
    parse_preconditioner,
)
from .scene import Scene, SceneError, sphere_scene, two_sphere_scene
from .sphere import solve_sphere_series

CSV_SCHEMA_VERSION = 1
CSV_COLUMNS = (
    "scene",
    "formulation",
    "variant",
    "preconditioner",
    "frequency_hz",
    "materials",
    "nodes",
    "d_over_lambda",
    "assembly_seconds",
    "iterations",
    "converged",
    "solve_seconds",
    "seconds_per_iteration",
    "psnr_db",
    "excluded",
    "status",
    "reason",
)
EXCLUSION_PSNR_DB = 20.0
DEFAULT_TOLERANCE = 1e-5
DEFAULT_MAXITER = 1000


class BenchConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SceneSpec:
    """Declarative geometry + material + frequency cell of the matrix."""

    name: str
    geometry: str  # "sphere" | "two-sphere"
    radius: float
    materials: tuple
    frequency: float
    points_per_wavelength: float = 4.0
    separation: float | None = None
    exterior: str = "water"
    direction: tuple = (0.0, 0.0, 1.0)

    def __post_init__(self):
        # YAML 1.1 reads exponents without a sign ("2.5e5") as strings;
        # coerce every numeric field so configs stay forgiving.
        for name in ("radius", "frequency", "points_per_wavelength"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if self.separation is not None:
            object.__setattr__(self, "separation", float(self.separation))
        object.__setattr__(
            self, "direction", tuple(float(c) for c in self.direction)
        )

    def build(self) -> Scene:
        if self.geometry == "sphere":
            if len(self.materials) != 1:
                raise BenchConfigError(f"scene {self.name}: one material for a sphere")
            return sphere_scene(
                self.radius,
                self.materials[0],
                self.frequency,
                exterior=self.exterior,
                points_per_wavelength=self.points_per_wavelength,
                direction=self.direction,
            )
        if self.geometry == "two-sphere":
            if len(self.materials) != 2:
                raise BenchConfigError(f"scene {self.name}: two materials needed")
            if self.separation is None:
                raise BenchConfigError(f"scene {self.name}: separation needed")
            return two_sphere_scene(
                self.radius,
                self.materials,
                self.separation,
                self.frequency,
                exterior=self.exterior,
                points_per_wavelength=self.points_per_wavelength,
                direction=self.direction,
            )
        raise BenchConfigError(f"scene {self.name}: unknown geometry {self.geometry!r}")

    @property
    def has_oracle(self) -> bool:
        return self.geometry == "sphere"

    @property
    def materials_label(self) -> str:
        return f"{self.exterior}/" + "+".join(self.materials)


@dataclass(frozen=True)
class BenchmarkConfig:
    scenes: tuple
    formulations: tuple
    preconditioners: tuple
    tol: float = DEFAULT_TOLERANCE
    maxiter: int = DEFAULT_MAXITER
    seed: int = 0
    grid_num: int = 51
    grid_extent: float = 0.03
    output_dir: str = "bench-out"
    write_fields: bool = False
    parallel: bool = False
    workers: int = 2

    def __post_init__(self):
        if not self.scenes:
            raise BenchConfigError("config needs at least one scene")
        if not self.formulations or not self.preconditioners:
            raise BenchConfigError("config needs formulations and preconditioners")
        names = [s.name for s in self.scenes]
        if len(set(names)) != len(names):
            raise BenchConfigError("scene names must be unique")
        for token in self.formulations:
            parse_formulation(token)
        for token in self.preconditioners:
            parse_preconditioner(token)
        if self.tol <= 0 or self.maxiter < 1:
            raise BenchConfigError("tol must be positive and maxiter at least 1")

    @classmethod
    def from_dict(cls, data: dict) -> "BenchmarkConfig":
        data = dict(data)
        scenes = []
        for raw in data.pop("scenes", ()):
            raw = dict(raw)
            if "materials" in raw:
                raw["materials"] = tuple(raw["materials"])
            elif "interior" in raw:
                raw["materials"] = (raw.pop("interior"),)
            if "direction" in raw:
                raw["direction"] = tuple(raw["direction"])
            try:
                scenes.append(SceneSpec(**raw))
            except TypeError as exc:
                raise BenchConfigError(f"bad scene entry: {exc}") from None
        matrix = data.pop("matrix", {})
        formulations = tuple(matrix.get("formulations", data.pop("formulations", ())))
        preconditioners = tuple(
            matrix.get("preconditioners", data.pop("preconditioners", ()))
        )
        solver = data.pop("solver", {})
        grid = data.pop("grid", {})
        known = {}
        for key in ("seed", "output_dir", "write_fields", "parallel", "workers"):
            if key in data:
                known[key] = data.pop(key)
        if data:
            raise BenchConfigError(f"unknown config keys: {sorted(data)}")
        return cls(
            scenes=tuple(scenes),
            formulations=formulations,
            preconditioners=preconditioners,
            tol=float(solver.get("tol", DEFAULT_TOLERANCE)),
            maxiter=int(solver.get("maxiter", DEFAULT_MAXITER)),
            grid_num=int(grid.get("num", 51)),
            grid_extent=float(grid.get("extent", 0.03)),
            **known,
        )

    @classmethod
    def from_file(cls, path) -> "BenchmarkConfig":
        with open(path) as handle:
            data = yaml.safe_load(handle)
        if not isinstance(data, dict):
            raise BenchConfigError(f"{path}: top level must be a mapping")
        return cls.from_dict(data)


# ---------------------------------------------------------------------------
# Records
# ---------------------------------------------------------------------------


@dataclass
class BenchmarkRecord:
    scene: str
    formulation: str
    variant: str
    preconditioner: str
    frequency_hz: float
    materials: str
    nodes: int
    d_over_lambda: float
    assembly_seconds: float | None = None
    iterations: int | None = None
    converged: bool | None = None
    solve_seconds: float | None = None
    seconds_per_iteration: float | None = None
    psnr_db: float | None = None
    excluded: bool | None = None
    status: str = "ok"
    reason: str = ""

    def row(self) -> list:
        def fmt(value):
            if value is None:
                return ""
            if isinstance(value, (bool, np.bool_)):
                return "true" if value else "false"
            if isinstance(value, float):
                return f"{value:.6g}"
            return str(value)

        return [fmt(getattr(self, col)) for col in CSV_COLUMNS]


def write_records_csv(path, records) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(CSV_COLUMNS)
        for record in records:
            writer.writerow(record.row())


def _split_token(token: str) -> tuple[str, str]:
    if ":" in token:
        family, variant = token.split(":", 1)
        return family, variant
    return token, ""


def _error_category(exc: Exception) -> str:
    if isinstance(exc, FeasibilityError):
        return "infeasible"
    if isinstance(exc, FormulationError):
        return "formulation"
    if isinstance(exc, (SceneError, BenchConfigError)):
        return "config"
    if isinstance(exc, np.linalg.LinAlgError):
        return "linear-algebra"
    if isinstance(exc, MemoryError):
        return "memory"
    return "error"


# ---------------------------------------------------------------------------
# Cell execution
# ---------------------------------------------------------------------------


@dataclass
class _ScenePack:
    """Everything shared by all cells on one scene."""

    spec: SceneSpec
    scene: Scene
    nodes: int
    d_over_lambda: float
    grid: np.ndarray | None = None
    region: np.ndarray | None = None
    exact: np.ndarray | None = None  # oracle values on non-buffer points


def _prepare_scene(spec: SceneSpec, config: BenchmarkConfig) -> _ScenePack:
    scene = spec.build()
    pack = _ScenePack(
        spec=spec,
        scene=scene,
        nodes=scene.total_nodes(),
        d_over_lambda=scene.domain_size() / scene.min_wavelength(),
    )
    if spec.has_oracle:
        pack.grid = make_grid(extent=config.grid_extent, num=config.grid_num)
        pack.region = tag_regions(scene, pack.grid)
        series = solve_sphere_series(
            spec.radius,
            (0.0, 0.0, 0.0),
            scene.k0,
            scene.wavenumber(1),
            scene.sigma(0),
            scene.sigma(1),
            direction=spec.direction,
        )
        valid = pack.region != -1
        pack.exact = series.total(pack.grid[valid])
    return pack


def _field_csv_name(pack: _ScenePack, f_token: str, p_token: str) -> str:
    safe = lambda s: s.replace(":", "-").replace(",", "_")
    return f"field_{pack.spec.name}_{safe(f_token)}_{safe(p_token)}.csv"


def run_cell(pack: _ScenePack, f_token: str, p_token: str, config: BenchmarkConfig,
             store: OperatorStore, out_dir=None):
    """One benchmark cell; returns (record, traces-or-None)."""
    family, variant = _split_token(f_token)
    record = BenchmarkRecord(
        scene=pack.spec.name,
        formulation=family,
        variant=variant,
        preconditioner=p_token,
        frequency_hz=pack.spec.frequency,
        materials=pack.spec.materials_label,
        nodes=pack.nodes,
        d_over_lambda=pack.d_over_lambda,
    )
    try:
        f_spec = parse_formulation(f_token)
        p_spec = parse_preconditioner(p_token)
        if not is_feasible(f_spec.family, p_spec.kind):
            record.status = "skipped"
            record.reason = (
                f"infeasible: {p_spec.kind} preconditioning is not defined for "
                f"{f_spec.family}"
            )
            return record, None

        t0 = time.perf_counter()
        system = build_system(f_spec, pack.scene, store)
        pre = attach_preconditioner(system, p_spec)
        record.assembly_seconds = time.perf_counter() - t0

        x, report = gmres(pre.operator, pre.rhs, tol=config.tol, maxiter=config.maxiter)
        record.iterations = report.iterations
        record.converged = report.converged
        record.solve_seconds = report.solve_seconds
        if report.iterations:
            record.seconds_per_iteration = report.solve_seconds / report.iterations

        traces = recover_traces(system, x)
        if pack.spec.has_oracle:
            grid = FieldGrid(pack.grid, region=pack.region)
            evaluated = evaluate_field(traces, system.spec, pack.scene, grid)
            record.psnr_db = psnr(pack.exact, evaluated.values[evaluated.valid])
            record.excluded = record.psnr_db < EXCLUSION_PSNR_DB
            if config.write_fields and out_dir is not None:
                export_field_csv(
                    os.path.join(out_dir, _field_csv_name(pack, f_token, p_token)),
                    evaluated,
                )
        return record, traces
    except Exception as exc:  # cell failures must not abort the sweep
        record.status = "error"
        record.reason = f"{_error_category(exc)}: {exc}"
        return record, None


# ---------------------------------------------------------------------------
# Sweep driver
# ---------------------------------------------------------------------------


@dataclass
class BenchmarkReport:
    records: list
    csv_path: str
    summary_path: str
    summary: dict


def _run_cells_sequential(packs, config, out_dir):
    store = OperatorStore()
    records, solutions = [], {}
    for pack in packs:
        for f_token in config.formulations:
            for p_token in config.preconditioners:
                record, traces = run_cell(pack, f_token, p_token, config, store, out_dir)
                records.append(record)
                if traces is not None:
                    solutions[(pack.spec.name, f_token, p_token)] = traces
    return records, solutions, store


def _run_cells_parallel(packs, config, out_dir):
    # Each worker keeps a private operator cache: sharing would serialize on
    # a lock during assembly, which is the dominant cost.
    from concurrent.futures import ThreadPoolExecutor

    cells = [
        (pack, f, p)
        for pack in packs
        for f in config.formulations
        for p in config.preconditioners
    ]

    def work(cell):
        pack, f_token, p_token = cell
        return cell, run_cell(pack, f_token, p_token, config, OperatorStore(), out_dir)

    records, solutions = [], {}
    with ThreadPoolExecutor(max_workers=max(1, config.workers)) as pool:
        for cell, (record, traces) in pool.map(work, cells):
            records.append(record)
            if traces is not None:
                solutions[(cell[0].spec.name, cell[1], cell[2])] = traces
    return records, solutions, None


def _trace_agreement(packs, config, solutions, store) -> dict:
    """Cross-formulation agreement for scenes without an analytic oracle."""
    out = {}
    agreement_store = store if store is not None else OperatorStore()
    for pack in packs:
        if pack.spec.has_oracle:
            continue
        keys = [k for k in solutions if k[0] == pack.spec.name]
        if len(keys) < 2:
            continue
        reference = keys[0]
        pairs = {}
        for key in keys[1:]:
            label = f"{key[1]}+{key[2]}"
            pairs[label] = trace_deviation(
                solutions[key], solutions[reference], pack.scene, agreement_store
            )
        out[pack.spec.name] = {
            "reference": f"{reference[1]}+{reference[2]}",
            "pairs": pairs,
            "worst": max(pairs.values()) if pairs else None,
        }
    return out


def run_benchmark(config: BenchmarkConfig) -> BenchmarkReport:
    t_start = time.perf_counter()
    out_dir = config.output_dir
    os.makedirs(out_dir, exist_ok=True)
    np.random.seed(config.seed)  # solver path is deterministic; seed recorded

    packs = [_prepare_scene(spec, config) for spec in config.scenes]
    runner = _run_cells_parallel if config.parallel else _run_cells_sequential
    records, solutions, store = runner(packs, config, out_dir)

    csv_path = os.path.join(out_dir, f"records_v{CSV_SCHEMA_VERSION}.csv")
    write_records_csv(csv_path, records)

    statuses = [r.status for r in records]
    summary = {
        "csv_schema_version": CSV_SCHEMA_VERSION,
        "generated": time.strftime("%Y-%m-%dT%H:%M:%S"),
        "seed": config.seed,
        "tol": config.tol,
        "maxiter": config.maxiter,
        "timings_comparable": not config.parallel,
        "cells": {
            "total": len(records),
            "ok": statuses.count("ok"),
            "skipped": statuses.count("skipped"),
            "error": statuses.count("error"),
        },
        "scenes": {
            pack.spec.name: {
                "nodes": pack.nodes,
                "d_over_lambda": pack.d_over_lambda,
                "frequency_hz": pack.spec.frequency,
                "materials": pack.spec.materials_label,
            }
            for pack in packs
        },
        "trace_agreement": _trace_agreement(packs, config, solutions, store),
        "operator_cache": {
            "kernel_assemblies": store.assembly_count if store is not None else None,
            "shared": store is not None,
        },
        "records_csv": os.path.basename(csv_path),
        "total_seconds": time.perf_counter() - t_start,
    }
    summary_path = os.path.join(out_dir, "summary.json")
    with open(summary_path, "w") as handle:
        json.dump(summary, handle, indent=2)
    return BenchmarkReport(records, csv_path, summary_path, summary)


# ---------------------------------------------------------------------------
# Cell enumeration (the "list" verb)
# ---------------------------------------------------------------------------


def list_cells(num_objects: int = 1) -> list:
    """Feasible formulation/preconditioner cells with operator budgets."""
    rows = []
    for f_token in list_formulations():
        family, _ = _split_token(f_token)
        spaces, bio, matvec = predicted_counts(f_token, num_objects)
        for p_token in list_preconditioners():
            p_spec = parse_preconditioner(p_token)
            rows.append(
                {
                    "formulation": f_token,
                    "preconditioner": p_token,
                    "feasible": is_feasible(family, p_spec.kind),
                    "unknown_blocks": spaces,
                    "operators": bio,
                    "matvecs_per_apply": matvec,
                }
            )
    return rows
