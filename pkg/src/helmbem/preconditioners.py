"""Left preconditioners for the transmission block systems.

All preconditioners compose with block-diagonal inverse-mass solves so that
they map dual (test-space) residuals back to coefficient vectors:

* ``mass``           -- inverse mass per block row; the baseline everything
  else builds on.
* ``calderon:diag``  -- per-interface Calderon block (exterior + interior)
  reapplied with mass interleaving; ``calderon:full`` keeps the
  cross-interface coupling blocks as well.  Both reuse the system's already
  assembled matrices.  Available for the trace-pair families whose operator
  *is* a Calderon block (pmchwt, mtf).
* ``oo``             -- opposite-order smoothing: rows whose diagonal is
  hypersingular-dominated are multiplied by -V (exterior wavenumber), rows
  that are single-layer dominated by +D, second-kind rows by the identity.
* ``osrc``           -- on-surface-radiation-condition approximations of the
  NtD/DtN maps via a rotated-branch Pade expansion of (I + LB/k_eps^2)^(+-1/2)
  realised with sparse LU solves; NtD left-multiplies Neumann-equation rows
  and DtN Dirichlet-equation rows, in the anti-diagonal arrangement for
  trace-pair layouts.

Feasibility follows the per-family matrix recorded in
``formulations.FamilyInfo`` (Calderon only for pmchwt/mtf; Mueller takes
mass only).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linops import (
    BlockOp,
    CallableOp,
    ChainOp,
    DenseOp,
    FactorizedInverseOp,
    LinearOp,
    ScaledOp,
    SumOp,
)
from .formulations import BlockSystem, family_info

PRECONDITIONER_TOKENS = ("mass", "calderon:diag", "calderon:full", "oo", "osrc")

_TOKEN_TO_KIND = {
    "mass": "mass",
    "calderon:diag": "calderon-diagonal",
    "calderon:full": "calderon-full",
    "oo": "opposite-order",
    "osrc": "osrc",
}
_KIND_TO_TOKEN = {v: k for k, v in _TOKEN_TO_KIND.items()}


class FeasibilityError(ValueError):
    pass


@dataclass(frozen=True)
class OSRCParams:
    """Tuning of the surface NtD/DtN approximations.

    ``damping_eps = None`` selects the resolution-aware default
    0.4 * (Re(k) * R)^(-2/3) per interface, with R the enclosing-sphere
    radius of the mesh.  ``wavenumber_choice`` picks which medium's
    wavenumber the maps approximate (the interior one by default, since
    they stand in for the eliminated interior impedance maps).
    """

    pade_terms: int = 4
    branch_angle: float = np.pi / 3
    damping_eps: float | None = None
    wavenumber_choice: str = "interior"

    def __post_init__(self):
        if self.pade_terms < 1:
            raise ValueError("pade_terms must be >= 1")
        if not 0 < self.branch_angle < np.pi:
            raise ValueError("branch_angle must lie in (0, pi)")
        if self.damping_eps is not None and self.damping_eps <= 0:
            raise ValueError("damping_eps must be positive")
        if self.wavenumber_choice not in ("interior", "exterior"):
            raise ValueError("wavenumber_choice must be 'interior' or 'exterior'")


@dataclass(frozen=True)
class PreconditionerSpec:
    kind: str  # mass | calderon-diagonal | calderon-full | opposite-order | osrc
    osrc_params: OSRCParams = field(default_factory=OSRCParams)

    def __post_init__(self):
        if self.kind not in _KIND_TO_TOKEN:
            raise ValueError(f"unknown preconditioner kind {self.kind!r}")

    @property
    def token(self) -> str:
        return _KIND_TO_TOKEN[self.kind]


def parse_preconditioner(token: str, osrc_params: OSRCParams | None = None) -> PreconditionerSpec:
    token = token.strip().lower()
    if token not in _TOKEN_TO_KIND:
        raise ValueError(
            f"unknown preconditioner {token!r}; expected one of {PRECONDITIONER_TOKENS}"
        )
    return PreconditionerSpec(_TOKEN_TO_KIND[token], osrc_params or OSRCParams())


def list_preconditioners() -> tuple:
    return PRECONDITIONER_TOKENS


def is_feasible(family: str, kind: str) -> bool:
    info = family_info(family)
    if kind == "mass":
        return True
    if kind in ("calderon-diagonal", "calderon-full"):
        return info.supports_calderon
    return info.supports_osrc


def _require_feasible(system: BlockSystem, kind: str):
    family = system.spec.family
    if not is_feasible(family, kind):
        feasible = [
            t for t in PRECONDITIONER_TOKENS if is_feasible(family, _TOKEN_TO_KIND[t])
        ]
        raise FeasibilityError(
            f"preconditioner {_KIND_TO_TOKEN[kind]!r} is not available for the "
            f"{family!r} formulation; feasible choices: {feasible}"
        )


@dataclass
class PreconditionedSystem:
    """Left-preconditioned view of a block system.

    ``operator`` is P A, ``rhs`` is P b; the solution set is unchanged.
    ``action`` exposes P itself (dual residual -> coefficient vector).
    """

    system: BlockSystem
    spec: PreconditionerSpec
    action: LinearOp
    operator: LinearOp
    rhs: np.ndarray

    @property
    def size(self) -> int:
        return self.system.size


# ---------------------------------------------------------------------------
# Shared plumbing
# ---------------------------------------------------------------------------


def _mass_inverses(system: BlockSystem):
    """One factorized mass inverse per interface (meshes shared by token)."""
    cache = {}
    for m in range(1, system.scene.num_objects + 1):
        mesh = system.scene.mesh(m)
        if mesh.token not in cache:
            cache[mesh.token] = FactorizedInverseOp(system.store.mass(mesh))
    return cache


def _row_mass_solve(system: BlockSystem, inverses, vec: np.ndarray) -> np.ndarray:
    out = np.empty_like(vec, dtype=complex)
    for i, row in enumerate(system.rows):
        sl = system.row_slice(i)
        inv = inverses[system.scene.mesh(row.interface).token]
        out[sl] = inv.matvec(vec[sl])
    return out


def bounding_radius(mesh) -> float:
    verts = mesh.vertices
    center = verts.mean(axis=0)
    return float(np.linalg.norm(verts - center, axis=1).max())


# ---------------------------------------------------------------------------
# Mass
# ---------------------------------------------------------------------------


def build_mass_preconditioner(system: BlockSystem) -> LinearOp:
    inverses = _mass_inverses(system)

    def apply(vec):
        return _row_mass_solve(system, inverses, vec)

    return CallableOp((system.size, system.size), apply)


# ---------------------------------------------------------------------------
# Calderon reuse
# ---------------------------------------------------------------------------


def _calderon_block_operator(system: BlockSystem, mode: str) -> LinearOp:
    """The formulation's own Calderon blocks, without identity couplings.

    Full mode replays every assembled block (per interface-pair slot that is
    l + l^2 Calderon block applies); diagonal mode applies one self block
    per unknown pair -- for the single-trace layout the interior
    impedance-scaled block, whose self-composition is the quarter identity.
    Nothing new is assembled or stored; matrices come from the shared cache.
    """
    scene = system.scene
    store = system.store
    counter = system.counter
    ell = scene.num_objects
    cross = mode == "calderon-full"

    def dense(kind, region, row, col):
        dop = store.get(
            kind, scene.wavenumber(region), scene.mesh(row), scene.mesh(col)
        )
        return DenseOp(dop.matrix, counter)

    family = system.spec.family
    if family == "pmchwt":
        if cross:
            # The trace-combined operator is exactly the Calderon grid: the
            # half-identity couplings cancel in this family.
            return system.operator
        blocks = [[None] * (2 * ell) for _ in range(2 * ell)]
        for m in range(1, ell + 1):
            i = 2 * (m - 1)
            sig0m = scene.sigma(0) / scene.sigma(m)
            sigm0 = scene.sigma(m) / scene.sigma(0)
            blocks[i][i] = ScaledOp(-1.0, dense("K", m, m, m))
            blocks[i][i + 1] = ScaledOp(sig0m, dense("V", m, m, m))
            blocks[i + 1][i] = ScaledOp(sigm0, dense("D", m, m, m))
            blocks[i + 1][i + 1] = dense("T", m, m, m)
        return BlockOp(blocks)

    # mtf: exterior Calderon grid over the (+) slots, interior blocks over (-)
    blocks = [[None] * (4 * ell) for _ in range(4 * ell)]
    for m in range(1, ell + 1):
        i = 4 * (m - 1)
        for n in range(1, ell + 1):
            if n != m and not cross:
                continue
            j = 4 * (n - 1)
            blocks[i][j] = ScaledOp(-1.0, dense("K", 0, m, n))
            blocks[i][j + 1] = dense("V", 0, m, n)
            blocks[i + 1][j] = dense("D", 0, m, n)
            blocks[i + 1][j + 1] = dense("T", 0, m, n)
        j = 4 * (m - 1)
        blocks[i + 2][j + 2] = ScaledOp(-1.0, dense("K", m, m, m))
        blocks[i + 2][j + 3] = dense("V", m, m, m)
        blocks[i + 3][j + 2] = dense("D", m, m, m)
        blocks[i + 3][j + 3] = dense("T", m, m, m)
    return BlockOp(blocks)


def build_calderon_preconditioner(system: BlockSystem, mode: str = "full") -> LinearOp:
    """Mass-interleaved reapplication of the system's Calderon blocks."""
    kind = {"diagonal": "calderon-diagonal", "full": "calderon-full"}.get(mode, mode)
    if kind not in ("calderon-diagonal", "calderon-full"):
        raise ValueError(f"unknown Calderon mode {mode!r}")
    _require_feasible(system, kind)
    core = _calderon_block_operator(system, kind)
    inverses = _mass_inverses(system)

    def apply(vec):
        u = _row_mass_solve(system, inverses, vec)
        u = core.matvec(u)
        return _row_mass_solve(system, inverses, u)

    return CallableOp((system.size, system.size), apply)


# ---------------------------------------------------------------------------
# Opposite order
# ---------------------------------------------------------------------------


def _trace_pairs(system: BlockSystem):
    """Indices of (Dirichlet-row, Neumann-row) pairs over trace-pair columns.

    Returns (pairs, singles): rows grouped by (interface, group) form a pair
    when exactly two rows of complementary kinds sit over columns that both
    carry trace unknowns; everything else is handled row by row.
    """
    groups = {}
    for i, row in enumerate(system.rows):
        groups.setdefault((row.interface, row.group), []).append(i)
    pairs, singles = [], []
    for members in groups.values():
        kinds = {system.rows[i].kind for i in members}
        if (
            len(members) == 2
            and kinds == {"dirichlet", "neumann"}
            and all("trace" in system.cols[i].role for i in members)
        ):
            i_d = next(i for i in members if system.rows[i].kind == "dirichlet")
            i_n = next(i for i in members if system.rows[i].kind == "neumann")
            pairs.append((i_d, i_n))
        else:
            singles.extend(members)
    return pairs, singles


def build_opposite_order_preconditioner(system: BlockSystem) -> LinearOp:
    """Flatten each row by an exterior operator of the opposite order.

    Rows of order +1 (hypersingular-dominated) are multiplied by -V_0,
    order -1 (single-layer dominated) by +D_0, order 0 by the identity,
    always after an inverse-mass solve.  For trace-pair rows whose orders
    are exactly {-1, +1} -- the strong operators then sit on the
    anti-diagonal of the pair -- the two products swap slots, so the
    composition carries V.D and D.V second-kind blocks on the diagonal;
    multiplying such rows in place would instead produce a permuted system
    with spectrum symmetric about zero.
    """
    _require_feasible(system, "opposite-order")
    scene = system.scene
    store = system.store
    counter = system.counter
    inverses = _mass_inverses(system)

    def flattener(i, sign_v=-1.0):
        row = system.rows[i]
        mesh = scene.mesh(row.interface)
        if row.order > 0:
            return ScaledOp(sign_v, DenseOp(store.get("V", scene.k0, mesh).matrix, counter))
        if row.order < 0:
            return DenseOp(store.get("D", scene.k0, mesh).matrix, counter)
        return None

    pairs, singles = _trace_pairs(system)
    plan = []  # (output_row, source_row, op_or_None)
    for i_d, i_n in pairs:
        orders = {system.rows[i_d].order, system.rows[i_n].order}
        if orders == {-1, 1}:
            plan.append((i_d, i_n, flattener(i_n, sign_v=1.0)))
            plan.append((i_n, i_d, flattener(i_d)))
        else:
            plan.append((i_d, i_d, flattener(i_d)))
            plan.append((i_n, i_n, flattener(i_n)))
    for i in singles:
        plan.append((i, i, flattener(i)))

    def apply(vec):
        coeff = _row_mass_solve(system, inverses, vec)
        out = np.zeros_like(coeff)
        for i_out, i_src, op in plan:
            src = coeff[system.row_slice(i_src)]
            if op is not None:
                inv = inverses[scene.mesh(system.rows[i_src].interface).token]
                src = inv.matvec(op.matvec(src))
            out[system.row_slice(i_out)] += src
        return out

    return CallableOp((system.size, system.size), apply)


# ---------------------------------------------------------------------------
# OSRC (on-surface radiation condition) NtD / DtN actions
# ---------------------------------------------------------------------------


def pade_sqrt_coefficients(nterms: int, branch_angle: float):
    """Rotated-branch Pade coefficients for sqrt(1 + z).

    Starting from the real [N/N] Taylor-Pade family
        sqrt(1 + z) ~ 1 + sum_j a_j z / (1 + b_j z),
        a_j = 2/(2N+1) sin^2(j pi/(2N+1)),  b_j = cos^2(j pi/(2N+1)),
    the branch cut is rotated off the negative real axis by the angle theta
    through z -> e^{-i theta}(1 + z) - 1, giving
        sqrt(1 + z) ~ C0 + sum_j A_j z / (1 + B_j z).
    """
    n = np.arange(1, nterms + 1)
    a = 2.0 / (2 * nterms + 1) * np.sin(n * np.pi / (2 * nterms + 1)) ** 2
    b = np.cos(n * np.pi / (2 * nterms + 1)) ** 2
    zeta = np.exp(-1j * branch_angle) - 1.0
    denom = 1.0 + b * zeta
    c0 = np.exp(1j * branch_angle / 2) * (1.0 + np.sum(a * zeta / denom))
    big_a = np.exp(-1j * branch_angle / 2) * a / denom**2
    big_b = np.exp(-1j * branch_angle) * b / denom
    return complex(c0), big_a.astype(complex), big_b.astype(complex)


def default_damping(k: complex, radius: float) -> float:
    return 0.4 * (np.real(k) * radius) ** (-2.0 / 3.0)


class SurfaceWaveOps:
    """Approximate NtD and DtN maps of one interface.

    Realises (1/ik)(I + LB/k_eps^2)^(-1/2) and ik (I + LB/k_eps^2)^(+1/2)
    on P1 coefficient vectors, with LB the weak Laplace-Beltrami operator
    (stiffness matrix S, so the discrete action of LB/k_eps^2 is
    -M^{-1} S / k_eps^2).  Each apply costs pade_terms (DtN) or
    pade_terms + 1 (NtD) sparse triangular solves; the LU factorizations
    are computed once here.
    """

    def __init__(self, mesh, k: complex, params: OSRCParams, store=None):
        from .assembly import OperatorStore

        store = store or OperatorStore()
        self.k = complex(k)
        self.params = params
        eps = params.damping_eps
        if eps is None:
            eps = default_damping(self.k, bounding_radius(mesh))
        self.eps = float(eps)
        k_eps = self.k * (1.0 + 1j * self.eps)
        self.k_eps = k_eps
        mass = store.mass(mesh).astype(complex)
        stiff = store.laplace_beltrami(mesh).astype(complex)
        self._mass = mass
        self._stiff = stiff
        c0, big_a, big_b = pade_sqrt_coefficients(params.pade_terms, params.branch_angle)
        self.c0 = c0
        self.big_a = big_a
        self._shift = stiff / (k_eps * k_eps)
        self._resolvents = [
            FactorizedInverseOp(mass - bj * self._shift) for bj in big_b
        ]
        self._plain = FactorizedInverseOp(mass - self._shift)
        self.size = mass.shape[0]

    def _z_rhs(self, x):
        # Right-hand side of (M - B_j S/k_eps^2) u = -(S/k_eps^2) x, the weak
        # form of u = (1 + B_j z)^{-1} z x with z = LB/k_eps^2.
        return -(self._shift @ x)

    def dtn(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=complex)
        acc = self.c0 * x
        rhs = self._z_rhs(x)
        for aj, solve in zip(self.big_a, self._resolvents):
            acc = acc + aj * solve.matvec(rhs)
        return 1j * self.k * acc

    def ntd(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=complex)
        u0 = self._plain.matvec(self._mass @ x)  # (1 + z)^{-1} x
        acc = self.c0 * u0
        rhs = self._z_rhs(u0)
        for aj, solve in zip(self.big_a, self._resolvents):
            acc = acc + aj * solve.matvec(rhs)
        return acc / (1j * self.k)

    def dtn_op(self) -> LinearOp:
        return CallableOp((self.size, self.size), self.dtn)

    def ntd_op(self) -> LinearOp:
        return CallableOp((self.size, self.size), self.ntd)


def build_osrc_actions(mesh, k: complex, params: OSRCParams | None = None, store=None):
    """(NtD, DtN) coefficient-space actions for one surface."""
    ops = SurfaceWaveOps(mesh, k, params or OSRCParams(), store=store)
    return ops.ntd_op(), ops.dtn_op()


def _pair_map_scales(system: BlockSystem, interface: int):
    """Cluster-merging normalisation for trace-pair rows.

    With impedance-weighted trace sums the leading coefficients of the
    Neumann row's hypersingular part and the Dirichlet row's single-layer
    part are w_D = nu+ - nu- sigma_m/sigma_0 and w_V = eta+ - eta-
    sigma_0/sigma_m; dividing the NtD and DtN products by w_D/2 and w_V/2
    puts both composed diagonal blocks on the same accumulation point.
    Couplings without scalar weights fall back to 1.
    """
    spec = system.spec
    scene = system.scene
    if spec.family not in ("pmchwt", "combined-trace"):
        return 1.0, 1.0
    if spec.family == "pmchwt":
        ep, em, vp, vm = 1.0, -1.0, 1.0, -1.0
    else:
        coup = spec.resolved_coupling()
        try:
            ep = complex(coup.entry("eta_plus", interface))
            em = complex(coup.entry("eta_minus", interface))
            vp = complex(coup.entry("nu_plus", interface))
            vm = complex(coup.entry("nu_minus", interface))
        except TypeError:
            return 1.0, 1.0
    sig0m = scene.sigma(0) / scene.sigma(interface)
    sigm0 = scene.sigma(interface) / scene.sigma(0)
    w_v = ep - em * sig0m
    w_d = vp - vm * sigm0
    a = 2.0 / w_d if abs(w_d) > 1e-12 else 1.0
    b = 2.0 / w_v if abs(w_v) > 1e-12 else 1.0
    return a, b


def build_osrc_preconditioner(system: BlockSystem, params: OSRCParams | None = None) -> LinearOp:
    """NtD against Neumann-equation rows, DtN against Dirichlet-equation rows.

    For layouts whose unknown pairs are (Dirichlet, Neumann) traces the two
    products are arranged anti-diagonally (the NtD-multiplied Neumann row
    lands in the Dirichlet slot and vice versa); rows without a trace-pair
    partner are multiplied in place.
    """
    _require_feasible(system, "osrc")
    params = params or OSRCParams()
    scene = system.scene
    inverses = _mass_inverses(system)

    waves = {}
    for m in range(1, scene.num_objects + 1):
        k = scene.wavenumber(m if params.wavenumber_choice == "interior" else 0)
        waves[m] = SurfaceWaveOps(scene.mesh(m), k, params, store=system.store)

    pairs, singles = _trace_pairs(system)
    plan = []  # (output_row_index, source_row_index, "ntd" | "dtn", scale)
    for i_d, i_n in pairs:
        a, b = _pair_map_scales(system, system.rows[i_d].interface)
        plan.append((i_d, i_n, "ntd", a))
        plan.append((i_n, i_d, "dtn", b))
    for i in singles:
        action = "dtn" if system.rows[i].kind == "dirichlet" else "ntd"
        plan.append((i, i, action, 1.0))

    def apply(vec):
        coeff = _row_mass_solve(system, inverses, vec)
        out = np.zeros_like(coeff)
        for i_out, i_src, action, scale in plan:
            wave = waves[system.rows[i_src].interface]
            src = coeff[system.row_slice(i_src)]
            val = wave.ntd(src) if action == "ntd" else wave.dtn(src)
            out[system.row_slice(i_out)] += scale * val
        return out

    return CallableOp((system.size, system.size), apply)


# ---------------------------------------------------------------------------
# Attachment
# ---------------------------------------------------------------------------


def attach_preconditioner(system: BlockSystem, spec) -> PreconditionedSystem:
    """Left-precondition ``system``; the solution set is unchanged."""
    if isinstance(spec, str):
        spec = parse_preconditioner(spec)
    _require_feasible(system, spec.kind)
    if spec.kind == "mass":
        action = build_mass_preconditioner(system)
    elif spec.kind == "calderon-diagonal":
        action = build_calderon_preconditioner(system, "diagonal")
    elif spec.kind == "calderon-full":
        action = build_calderon_preconditioner(system, "full")
    elif spec.kind == "opposite-order":
        action = build_opposite_order_preconditioner(system)
    else:
        action = build_osrc_preconditioner(system, spec.osrc_params)
    operator = ChainOp(action, system.operator)
    rhs = action.matvec(system.rhs)
    return PreconditionedSystem(system, spec, action, operator, rhs)
