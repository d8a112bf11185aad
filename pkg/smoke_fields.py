import time

import numpy as np

from helmbem.fields import (
    FieldGrid, make_grid, tag_regions, evaluate_field, psnr, layer_potential,
    export_field_csv,
)
from helmbem.formulations import (
    build_system, recover_traces, InterfaceSolution, SolutionTraces,
    parse_formulation, incident_rhs,
)
from helmbem.scene import sphere_scene
from helmbem.sphere import solve_sphere_series
from helmbem.gmres import gmres
from helmbem.preconditioners import attach_preconditioner, parse_preconditioner

t0 = time.time()

# (a) frozen psnr example
val = psnr([2, 0], [2, 0.2])
print(f"psnr([2,0],[2,0.2]) = {val:.6f} dB (expect 23.010300)")
assert abs(val - 23.0103) < 5e-5

# edge cases
assert psnr([1, 2j], [1, 2j]) == float("inf")
try:
    psnr([0, 0], [1, 2])
    print("FAIL: zero-reference accepted")
except ValueError as e:
    print(f"zero-reference raises: {e}")
# scale coherence
rng = np.random.default_rng(7)
a = rng.normal(size=20) + 1j * rng.normal(size=20)
b = a + 0.01 * (rng.normal(size=20) + 1j * rng.normal(size=20))
print(f"scale coherence delta = {abs(psnr(a, b) - psnr(10 * a, 10 * b)):.2e}")

# scene
scene = sphere_scene(0.005, "fat", 500e3, points_per_wavelength=4.0)
mesh = scene.mesh(1)
print(f"nodes={mesh.num_vertices} h_max={mesh.h_max:.6f}")

grid_pts = make_grid(extent=0.03, num=51)
region = tag_regions(scene, grid_pts)
n_ext = int(np.sum(region == 0)); n_int = int(np.sum(region == 1)); n_buf = int(np.sum(region == -1))
print(f"regions: ext={n_ext} int={n_int} buffer={n_buf}")

# (b) zero potentials -> exterior = incident, interior = 0
zero = np.zeros(mesh.num_vertices, dtype=complex)
sol0 = InterfaceSolution(
    interface=1, dirichlet=zero, neumann=zero,
    exterior_layers=(("single", zero), ("double", zero)),
    interior_layers=(("single", zero), ("double", zero)),
)
spec = parse_formulation("pmchwt")
tr0 = SolutionTraces(spec=spec, interfaces=(sol0,))
fg0 = evaluate_field(tr0, spec, scene, grid_pts)
ext_mask = fg0.region == 0
inc = scene.source(fg0.points[ext_mask])
print(f"zero-layer exterior vs incident: {np.max(np.abs(fg0.values[ext_mask] - inc)):.2e}")
print(f"zero-layer interior max |p|: {np.max(np.abs(fg0.values[fg0.region == 1])):.2e}")
print(f"buffer values NaN: {np.all(np.isnan(fg0.values[fg0.region == -1].real))}")
print(f"excluded_count={fg0.excluded_count}")

# (c) oracle-fed direct representation
k0 = scene.k0
km = scene.wavenumber(1)
s0 = scene.sigma(0)
sm = scene.sigma(1)
series = solve_sphere_series(0.005, (0, 0, 0), k0, km, s0, sm)
phi, psi = series.exterior_traces(mesh.vertices)
psi_raw = (s0 / sm) * psi
sol = InterfaceSolution(
    interface=1, dirichlet=phi, neumann=psi,
    exterior_layers=(("single", -psi), ("double", -phi)),
    interior_layers=(("single", psi_raw), ("double", phi)),
)
tr = SolutionTraces(spec=spec, interfaces=(sol,))
fg = evaluate_field(tr, spec, scene, grid_pts)
exact = series.total(fg.points[fg.valid])
val = psnr(exact, fg.values[fg.valid])
print(f"oracle-fed representation PSNR = {val:.2f} dB (need >= 30)")
ext_exact = series.total(fg.points[ext_mask])
print(f"  exterior-only PSNR = {psnr(ext_exact, fg.values[ext_mask]):.2f} dB")
int_mask = fg.region == 1
int_exact = series.total(fg.points[int_mask])
print(f"  interior-only PSNR = {psnr(int_exact, fg.values[int_mask]):.2f} dB")

# (d) C4: full solve PMCHWT + mass, PSNR >= 25 dB
t1 = time.time()
system = build_system("pmchwt", scene)
pre = attach_preconditioner(system, parse_preconditioner("mass"))
x, rep = gmres(pre.operator, pre.rhs, tol=1e-5, maxiter=1000)
print(f"solve: converged={rep.converged} its={rep.iterations}")
traces = recover_traces(system, x)
fg4 = evaluate_field(traces, system.spec, scene, FieldGrid(grid_pts))
exact4 = series.total(fg4.points[fg4.valid])
val4 = psnr(exact4, fg4.values[fg4.valid])
print(f"C4 PSNR = {val4:.2f} dB (need >= 25) [{time.time() - t1:.1f}s]")
m_ext = fg4.region == 0
m_int = fg4.region == 1
print(f"  exterior-only = {psnr(series.total(fg4.points[m_ext]), fg4.values[m_ext]):.2f} dB")
print(f"  interior-only = {psnr(series.total(fg4.points[m_int]), fg4.values[m_int]):.2f} dB")

export_field_csv("/tmp/field.csv", fg4)
import subprocess
print(subprocess.run(["head", "-3", "/tmp/field.csv"], capture_output=True, text=True).stdout)
print(f"total {time.time() - t0:.1f}s")
