import json
import subprocess

from helmbem.bench import (
    BenchmarkConfig, SceneSpec, run_benchmark, list_cells, BenchConfigError,
)

cfg = BenchmarkConfig(
    scenes=(
        SceneSpec("fat-250k", "sphere", 0.005, ("fat",), 250e3, points_per_wavelength=2.0),
        SceneSpec("pair-100k", "two-sphere", 0.005, ("fat", "bone"), 100e3,
                  points_per_wavelength=2.0, separation=0.035),
    ),
    formulations=("pmchwt", "muller", "mtf"),
    preconditioners=("mass", "calderon:full"),
    tol=1e-5,
    maxiter=400,
    output_dir="/tmp/bench-smoke",
    write_fields=True,
)
report = run_benchmark(cfg)
for r in report.records:
    print(f"{r.scene:10s} {r.formulation:8s}+{r.preconditioner:14s} {r.status:8s}"
          f" its={r.iterations} psnr={r.psnr_db if r.psnr_db is None else round(r.psnr_db,1)}"
          f" excl={r.excluded} asm={r.assembly_seconds if r.assembly_seconds is None else round(r.assembly_seconds,2)}"
          f" {r.reason[:60]}")
print()
print(json.dumps(report.summary, indent=1)[:1600])
print()
print(subprocess.run(["head", "-4", report.csv_path], capture_output=True, text=True).stdout)
print(subprocess.run(["ls", "/tmp/bench-smoke"], capture_output=True, text=True).stdout)

rows = list_cells(1)
feasible = [r for r in rows if r["feasible"]]
print(f"list_cells: {len(rows)} cells, {len(feasible)} feasible")
print(rows[0])

# config loader
with open("/tmp/bench.yml", "w") as fh:
    fh.write("""
seed: 3
solver: {tol: 1.0e-4, maxiter: 99}
grid: {num: 21, extent: 0.02}
output_dir: /tmp/bench-cfg
scenes:
  - {name: s1, geometry: sphere, radius: 0.005, interior: fat, frequency: 2.5e5, points_per_wavelength: 2.0}
matrix:
  formulations: [pmchwt, "combined-trace:1,-1,1,-1"]
  preconditioners: [mass]
""")
cfg2 = BenchmarkConfig.from_file("/tmp/bench.yml")
print(f"from_file: tol={cfg2.tol} maxiter={cfg2.maxiter} grid={cfg2.grid_num} "
      f"forms={cfg2.formulations}")
try:
    BenchmarkConfig.from_dict({"scenes": [], "formulations": ["pmchwt"], "preconditioners": ["mass"]})
    print("FAIL empty scenes accepted")
except BenchConfigError as e:
    print(f"empty scenes rejected: {e}")
try:
    BenchmarkConfig.from_dict({"bogus": 1, "scenes": [{"name": "s", "geometry": "sphere", "radius": 1e-3, "materials": ["fat"], "frequency": 1e5}], "formulations": ["pmchwt"], "preconditioners": ["mass"]})
    print("FAIL unknown key accepted")
except BenchConfigError as e:
    print(f"unknown key rejected: {e}")
