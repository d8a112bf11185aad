"""Block-system builders for multi-body acoustic transmission problems.

Each formulation family turns the transmission problem (ell disjoint
penetrable objects in a homogeneous exterior, plane-wave excitation) into a
square block system over per-interface coefficient vectors:

* ``dirichlet`` / ``neumann``      -- one exterior and one interior trace row
  per interface, unknowns are the exterior Cauchy data (phi_m, psi_m).
* ``pmchwt`` / ``muller``          -- difference / sum of the exterior and
  interior Calderon rows, same unknowns.
* ``combined-trace|domain|mixed``  -- weighted combinations of the four
  constituent rows with scalar or operator coefficients.
* ``mtf``                          -- separate exterior and interior trace
  pairs coupled through scaled identities (4 blocks per interface).
* ``aff:*``                        -- a single auxiliary potential per
  interface; the Cauchy data are lifted from it by interior operators and
  substituted into one exterior row.
* ``spf:*``                        -- one interior and one exterior layer
  potential per interface, matched through the transmission conditions.
* ``mpf:*``                        -- one exterior layer potential plus one
  retained exterior trace per interface; the eliminated interior map is
  realised through a regularising left multiplier instead of an inverse.

Conventions used throughout (and documented where they bite):

* phi_m is the Dirichlet trace of the total field on interface m; psi_m is
  the *exterior* Neumann trace.  Interior Neumann data are recovered via the
  admittance ratio sigma_0/sigma_m only at evaluation time.
* Normals point out of the objects.  The Neumann trace of the single-layer
  potential jumps to (-1/2 I + T) on the side the normal points into and to
  (+1/2 I + T) on the other side; the Dirichlet trace of the double-layer
  potential jumps to (+-1/2 I + K).  The normal derivative of the double
  layer is -D on both sides.
* Exterior scattered fields are represented as  p_sca = sum_n V_0n psi_n+
  (single layer)  or  p_sca = -sum_n K_0n phi_n+  (double layer); the direct
  representation is  p_sca = -sum_n (V_0n psi_n - K_0n phi_n).  Interior
  fields use  p = V_m chi  or  p = -K_m chi  with the interior wavenumber.
* Galerkin identities: every 1/2 I becomes 1/2 M (sparse mass); operator
  products are realised as composed actions interleaved with mass inverses,
  never multiplied out.
"""

from __future__ import annotations

from collections import namedtuple
from dataclasses import dataclass, field, replace

import numpy as np

from .assembly import OperatorStore, _basis_matrix, _quad_points
from .linops import (
    ApplyCounter,
    BlockOp,
    CallableOp,
    ChainOp,
    DenseOp,
    FactorizedInverseOp,
    LinearOp,
    ScaledOp,
    SparseOp,
    SumOp,
    ZeroOp,
)
from .quadrature import triangle_rule
from .scene import Scene

RHS_QUADRATURE_POINTS = 5

AFF_VARIANTS = ("dir-psi", "neu-psi", "dir-phi", "neu-phi")
SPF_VARIANTS = ("sl-sl", "dl-dl", "sl-dl", "dl-sl")
MPF_VARIANTS = tuple(
    f"{ext}-{elim}-{reg}"
    for ext in ("sl", "dl")
    for elim in ("dtn", "ntd")
    for reg in ("ad", "sl")
)

COMBINED_FAMILIES = ("combined-trace", "combined-domain", "combined-mixed")


class FormulationError(ValueError):
    pass


class DependencyError(RuntimeError):
    """An operator block required by a builder is unavailable."""


# ---------------------------------------------------------------------------
# Specs and identifiers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CombinedCoefficients:
    """Row-combination coefficients (eta couples Dirichlet-trace rows, nu
    Neumann-trace rows; +/- select the exterior/interior constituent).

    Each entry is a complex scalar, a LinearOp acting on one interface's
    coefficient space (single-interface scenes), or a callable
    ``m -> LinearOp`` for multi-interface scenes.
    """

    eta_plus: object = 1.0
    eta_minus: object = -1.0
    nu_plus: object = 1.0
    nu_minus: object = -1.0

    def entry(self, name: str, m: int):
        value = getattr(self, name)
        if isinstance(value, LinearOp):
            return value
        if callable(value):
            return value(m)
        return complex(value)


@dataclass(frozen=True)
class FormulationSpec:
    family: str
    variant: str | None = None
    coupling: CombinedCoefficients | None = None
    rhs_convention: str = "consistent"  # or "printed"
    aff_weights: tuple | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise FormulationError(f"unknown formulation family {self.family!r}")
        info = FAMILIES[self.family]
        if info.variants and self.variant not in info.variants:
            raise FormulationError(
                f"family {self.family!r} needs a variant from {info.variants}"
            )
        if not info.variants and self.variant is not None:
            raise FormulationError(f"family {self.family!r} takes no variant")
        if self.rhs_convention not in ("consistent", "printed"):
            raise FormulationError("rhs_convention must be 'consistent' or 'printed'")
        if self.coupling is not None and self.family not in COMBINED_FAMILIES:
            raise FormulationError("coupling coefficients apply to combined families only")
        if self.aff_weights is not None:
            if self.family != "aff":
                raise FormulationError("aff_weights applies to the aff family only")
            if len(self.aff_weights) != 2 or not any(self.aff_weights):
                raise FormulationError("aff_weights needs two entries, not both zero")

    @property
    def token(self) -> str:
        return self.family if self.variant is None else f"{self.family}:{self.variant}"

    def resolved_coupling(self) -> CombinedCoefficients:
        return self.coupling if self.coupling is not None else CombinedCoefficients()


@dataclass(frozen=True)
class FamilyInfo:
    family: str
    variants: tuple
    supports_calderon: bool
    supports_osrc: bool  # also the opposite-order feasibility column

    def unknown_blocks(self, ell: int) -> int:
        return {"mtf": 4 * ell, "aff": ell}.get(self.family, 2 * ell)

    def operator_count(self, ell: int) -> int:
        if self.family in ("pmchwt", "muller", "mtf") or self.family in COMBINED_FAMILIES:
            return 4 * ell + 4 * ell * ell
        return 2 * ell + 2 * ell * ell

    def matvec_count(self, ell: int) -> int:
        if self.family in ("pmchwt", "muller", "mtf") or self.family in COMBINED_FAMILIES:
            return 4 * ell + 4 * ell * ell
        if self.family in ("aff", "mpf"):
            return ell + 3 * ell * ell
        return 2 * ell + 2 * ell * ell


FAMILIES = {
    "dirichlet": FamilyInfo("dirichlet", (), False, True),
    "neumann": FamilyInfo("neumann", (), False, True),
    "pmchwt": FamilyInfo("pmchwt", (), True, True),
    "muller": FamilyInfo("muller", (), False, False),
    "combined-trace": FamilyInfo("combined-trace", (), False, True),
    "combined-domain": FamilyInfo("combined-domain", (), False, True),
    "combined-mixed": FamilyInfo("combined-mixed", (), False, True),
    "mtf": FamilyInfo("mtf", (), True, True),
    "aff": FamilyInfo("aff", AFF_VARIANTS, False, True),
    "spf": FamilyInfo("spf", SPF_VARIANTS, False, True),
    "mpf": FamilyInfo("mpf", MPF_VARIANTS, False, True),
}


def family_info(family: str) -> FamilyInfo:
    try:
        return FAMILIES[family]
    except KeyError:
        raise FormulationError(f"unknown formulation family {family!r}") from None


def parse_formulation(token: str) -> FormulationSpec:
    """Parse a stable identifier like "pmchwt" or "mpf:sl-dtn-ad".

    Combined families accept four comma-separated scalars after the colon
    ("combined-trace:1,-1,1,-1") setting the row-coupling coefficients in
    the order eta+, eta-, nu+, nu-.
    """
    token = token.strip().lower()
    if ":" in token:
        family, rest = token.split(":", 1)
        if family in COMBINED_FAMILIES:
            try:
                weights = tuple(complex(p.strip()) for p in rest.split(","))
            except ValueError as exc:
                raise FormulationError(
                    f"bad coupling coefficients {rest!r}: {exc}"
                ) from None
            if len(weights) != 4:
                raise FormulationError(
                    "combined families take four coefficients (eta+, eta-, nu+, nu-)"
                )
            return FormulationSpec(family, coupling=CombinedCoefficients(*weights))
        return FormulationSpec(family, rest)
    return FormulationSpec(token)


def list_formulations() -> tuple:
    """All stable formulation identifiers, most aggregated families expanded."""
    out = []
    for family, info in FAMILIES.items():
        if info.variants:
            out.extend(f"{family}:{v}" for v in info.variants)
        else:
            out.append(family)
    return tuple(out)


# ---------------------------------------------------------------------------
# System metadata
# ---------------------------------------------------------------------------

OperatorKey = namedtuple("OperatorKey", "kind region row col")


@dataclass(frozen=True)
class BlockInfo:
    label: str
    interface: int
    size: int
    role: str


@dataclass(frozen=True)
class RowInfo:
    label: str
    interface: int
    size: int
    kind: str  # "dirichlet" | "neumann" | "mixed" test-equation type
    group: str  # rows sharing (interface, group) with kinds {D, N} form a pair
    order: int  # leading operator order on the diagonal: -1, 0, +1


@dataclass
class BlockSystem:
    """Immutable result of a formulation build.

    ``operator`` maps stacked coefficient vectors to stacked dual (test
    space) vectors; ``rhs`` lives in the dual space.  ``required`` lists the
    dense boundary operators the build touched as (kind, region, row
    interface, column interface) keys; ``counter`` counts dense matrix-vector
    products through every operator the build created.
    """

    spec: FormulationSpec
    scene: Scene
    operator: LinearOp
    rhs: np.ndarray
    rows: tuple
    cols: tuple
    store: OperatorStore
    counter: ApplyCounter
    required: tuple
    aux: dict = field(default_factory=dict)

    @property
    def size(self) -> int:
        return int(self.operator.shape[0])

    @property
    def row_offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum([r.size for r in self.rows])])

    @property
    def col_offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum([c.size for c in self.cols])])

    def row_slice(self, i: int) -> slice:
        off = self.row_offsets
        return slice(int(off[i]), int(off[i + 1]))

    def col_slice(self, i: int) -> slice:
        off = self.col_offsets
        return slice(int(off[i]), int(off[i + 1]))

    def col_index(self, label: str) -> int:
        for i, c in enumerate(self.cols):
            if c.label == label:
                return i
        raise KeyError(label)

    def block_of(self, solution: np.ndarray, label: str) -> np.ndarray:
        return solution[self.col_slice(self.col_index(label))]

    def matvecs_per_apply(self, seed: int = 0) -> int:
        rng = np.random.default_rng(seed)
        x = rng.standard_normal(self.size) + 1j * rng.standard_normal(self.size)
        before = self.counter.dense_matvecs
        self.operator.matvec(x)
        used = self.counter.dense_matvecs - before
        self.counter.reset()
        return int(used)

    def unknown_block_count(self) -> int:
        return len(self.cols)

    def operator_count(self) -> int:
        return len(self.required)


@dataclass(frozen=True)
class InterfaceSolution:
    """Recovered representation data for one interface.

    ``dirichlet``/``neumann`` are the exterior total-field Cauchy data in
    the sigma-0 Neumann convention.  ``exterior_layers`` is this interface's
    contribution to the scattered field outside all objects, as
    ("single"|"double", coefficients) terms meaning +V_0m c / -K_0m c.
    ``interior_layers`` represents the total field inside the object with
    the interior wavenumber, same term semantics (+V_m c / -K_m c).
    """

    interface: int
    dirichlet: np.ndarray
    neumann: np.ndarray
    exterior_layers: tuple
    interior_layers: tuple


@dataclass(frozen=True)
class SolutionTraces:
    spec: FormulationSpec
    interfaces: tuple

    def __getitem__(self, m: int) -> InterfaceSolution:
        for s in self.interfaces:
            if s.interface == m:
                return s
        raise KeyError(m)


# ---------------------------------------------------------------------------
# Right-hand sides and norms
# ---------------------------------------------------------------------------


def incident_rhs(scene: Scene, m: int):
    """Galerkin projections (b_D, b_N) of the incident traces on interface m."""
    mesh = scene.mesh(m)
    rule = triangle_rule(RHS_QUADRATURE_POINTS)
    basis = _basis_matrix(mesh, rule)
    pts = _quad_points(mesh, rule)
    values_d = scene.source(pts)
    values_n = scene.source.normal_derivative(pts, mesh.normals[:, None, :])
    b_d = basis.T @ values_d.ravel()
    b_n = basis.T @ values_n.ravel()
    return b_d, b_n


def mass_weighted_norm(mass, u: np.ndarray) -> float:
    """sqrt(u^H M u): the L2 surface norm of a P1 coefficient vector."""
    return float(np.sqrt(np.real(np.vdot(u, mass @ u))))


def trace_deviation(a: SolutionTraces, b: SolutionTraces, scene: Scene, store=None) -> float:
    """Worst mass-weighted relative gap between two solutions' exterior data.

    Compares Dirichlet and Neumann traces on every interface against the
    second argument's norms; the largest ratio is returned, so "deviation
    <= 0.02" means every trace agrees within 2 percent in the surface L2
    sense.
    """
    store = store if store is not None else OperatorStore()
    worst = 0.0
    for m in range(1, scene.num_objects + 1):
        mass = store.mass(scene.mesh(m))
        for attr in ("dirichlet", "neumann"):
            ours = getattr(a[m], attr)
            ref = getattr(b[m], attr)
            scale = mass_weighted_norm(mass, ref)
            if scale == 0.0:
                continue
            worst = max(worst, mass_weighted_norm(mass, ours - ref) / scale)
    return worst


def predicted_counts(spec, num_objects: int = 1) -> tuple[int, int, int]:
    """Per-family operator budget for ``num_objects`` interfaces.

    Returns (unknown potential blocks, distinct dense kernels, dense
    matvecs per operator apply).  Building the system and inspecting
    ``unknown_block_count`` / ``operator_count`` / ``matvecs_per_apply``
    must reproduce these numbers exactly.
    """
    if isinstance(spec, str):
        spec = parse_formulation(spec)
    ell = int(num_objects)
    if ell < 1:
        raise FormulationError("need at least one object")
    family = spec.family
    small = 2 * ell + 2 * ell * ell
    large = 4 * ell + 4 * ell * ell
    lean = ell + 3 * ell * ell
    if family in ("dirichlet", "neumann", "spf"):
        return 2 * ell, small, small
    if family == "aff":
        return ell, small, lean
    if family == "mpf":
        return 2 * ell, small, lean
    if family == "mtf":
        return 4 * ell, large, large
    return 2 * ell, large, large


# ---------------------------------------------------------------------------
# Builder plumbing
# ---------------------------------------------------------------------------


class _Builder:
    def __init__(self, spec: FormulationSpec, scene: Scene, store: OperatorStore):
        self.spec = spec
        self.scene = scene
        self.store = store
        self.counter = ApplyCounter()
        self.required = {}
        self._mass_ops = {}
        self._mass_inv = {}
        self._rhs_cache = {}

    # -- operator access ------------------------------------------------
    def dense(self, kind: str, region: int, row: int, col: int) -> LinearOp:
        key = OperatorKey(kind, region, row, col)
        try:
            dop = self.store.get(
                kind,
                self.scene.wavenumber(region),
                self.scene.mesh(row),
                self.scene.mesh(col),
            )
        except Exception as exc:  # pragma: no cover - depends on store failure
            raise DependencyError(f"operator block unavailable: {key}") from exc
        self.required[key] = True
        return DenseOp(dop.matrix, self.counter)

    def exterior(self, kind: str, row: int, col: int) -> LinearOp:
        return self.dense(kind, 0, row, col)

    def interior(self, kind: str, m: int) -> LinearOp:
        return self.dense(kind, m, m, m)

    def mass_matrix(self, m: int):
        return self.store.mass(self.scene.mesh(m))

    def mass(self, m: int) -> LinearOp:
        if m not in self._mass_ops:
            self._mass_ops[m] = SparseOp(self.mass_matrix(m))
        return self._mass_ops[m]

    def half_mass(self, m: int, scale: complex = 1.0) -> LinearOp:
        return ScaledOp(0.5 * scale, self.mass(m))

    def mass_inv(self, m: int) -> LinearOp:
        if m not in self._mass_inv:
            self._mass_inv[m] = FactorizedInverseOp(self.mass_matrix(m))
        return self._mass_inv[m]

    def rhs_pair(self, m: int):
        if m not in self._rhs_cache:
            self._rhs_cache[m] = incident_rhs(self.scene, m)
        return self._rhs_cache[m]

    def sigma_ratio(self, num: int, den: int) -> float:
        return self.scene.sigma(num) / self.scene.sigma(den)

    def nodes(self, m: int) -> int:
        return self.scene.mesh(m).num_vertices

    # -- finishing ------------------------------------------------------
    def finish(self, operator, rhs, rows, cols, aux=None) -> BlockSystem:
        return BlockSystem(
            spec=self.spec,
            scene=self.scene,
            operator=operator,
            rhs=np.asarray(rhs, dtype=complex),
            rows=tuple(rows),
            cols=tuple(cols),
            store=self.store,
            counter=self.counter,
            required=tuple(self.required),
            aux=dict(aux or {}),
        )


def _sum_entries(entries):
    """Collapse {col: [ops]} into one LinearOp per column (None = zero)."""
    if not entries:
        return None
    if len(entries) == 1:
        return entries[0]
    return SumOp(*entries)


class _RowAccumulator:
    """One block row under construction: per-column operator terms, a dual
    right-hand side, and scan data for classifying the row's leading order."""

    def __init__(self, ncols: int, size: int):
        self.entries = [[] for _ in range(ncols)]
        self.rhs = np.zeros(size, dtype=complex)
        self.size = size
        self.col_kinds = [set() for _ in range(ncols)]
        self.identity_weights = {}
        self.identity_forced = False

    def add(self, col: int, op: LinearOp, kinds=(), identity=0.0):
        """identity: net scalar weight of an identity contribution in this
        term (so opposite-signed half-identities cancel out of the row's
        classification), or None when the weight is operator-valued."""
        self.entries[col].append(op)
        self.col_kinds[col].update(kinds)
        if identity is None:
            self.identity_forced = True
        elif identity:
            self.identity_weights[col] = self.identity_weights.get(col, 0.0) + identity

    def operator_row(self):
        row = [_sum_entries(e) for e in self.entries]
        if all(op is None for op in row):
            row = [ZeroOp((self.size, self.size)) for _ in row]
        return row

    def order_for(self, cols) -> int:
        """Leading order of the row restricted to the given columns.

        The restriction matters for layouts where a row's identity term sits
        on a different unknown pair than its strong operators (the coupling
        identities of the multi-trace layout): there the row behaves like a
        first-kind row over its own pair.
        """
        kinds = set()
        for c in cols:
            kinds |= self.col_kinds[c]
        has_identity = self.identity_forced or any(
            abs(self.identity_weights.get(c, 0.0)) > 1e-12 for c in cols
        )
        if "D" in kinds:
            return 1
        if "V" in kinds and not has_identity:
            return -1
        return 0

    @property
    def order(self) -> int:
        return self.order_for(range(len(self.entries)))


# ---------------------------------------------------------------------------
# Single-trace families (Dirichlet, Neumann, PMCHWT, Mueller, combined)
# ---------------------------------------------------------------------------


class _TraceAtoms:
    """The four constituent Galerkin rows of interface m over the (phi_n,
    psi_n) layout: exterior/interior Dirichlet- and Neumann-trace rows.

    Returned as (terms, rhs) where terms maps global column index to a list
    of (op, kinds, identity) contributions.
    """

    def __init__(self, b: _Builder):
        self.b = b
        self.ell = b.scene.num_objects

    def _cols(self, n: int):
        return 2 * (n - 1), 2 * (n - 1) + 1

    def ext_dirichlet(self, m: int):
        b = self.b
        terms = []
        cphi_m, _ = self._cols(m)
        terms.append((cphi_m, b.half_mass(m), (), 1.0))
        for n in range(1, self.ell + 1):
            cphi, cpsi = self._cols(n)
            terms.append((cphi, ScaledOp(-1.0, b.exterior("K", m, n)), ("K",), 0.0))
            terms.append((cpsi, b.exterior("V", m, n), ("V",), 0.0))
        return terms, b.rhs_pair(m)[0]

    def ext_neumann(self, m: int):
        b = self.b
        terms = []
        _, cpsi_m = self._cols(m)
        terms.append((cpsi_m, b.half_mass(m), (), 1.0))
        for n in range(1, self.ell + 1):
            cphi, cpsi = self._cols(n)
            terms.append((cphi, b.exterior("D", m, n), ("D",), 0.0))
            terms.append((cpsi, b.exterior("T", m, n), ("T",), 0.0))
        return terms, b.rhs_pair(m)[1]

    def int_dirichlet(self, m: int):
        b = self.b
        cphi, cpsi = self._cols(m)
        terms = [
            (cphi, b.half_mass(m), (), 1.0),
            (cphi, b.interior("K", m), ("K",), 0.0),
            (cpsi, ScaledOp(-b.sigma_ratio(0, m), b.interior("V", m)), ("V",), 0.0),
        ]
        return terms, None

    def int_neumann(self, m: int):
        b = self.b
        cphi, cpsi = self._cols(m)
        terms = [
            (cpsi, b.half_mass(m), (), 1.0),
            (cphi, ScaledOp(-b.sigma_ratio(m, 0), b.interior("D", m)), ("D",), 0.0),
            (cpsi, ScaledOp(-1.0, b.interior("T", m)), ("T",), 0.0),
        ]
        return terms, None


def _wrap_coefficient(b: _Builder, coeff, m: int):
    """Normalise a combination coefficient to ('scalar', c) or ('op', action).

    Operator coefficients act on interface-m coefficient vectors; the
    returned action is the dual-space conjugation M C M^-1 so rows remain
    test-space functionals.
    """
    if isinstance(coeff, LinearOp):
        dual = ChainOp(b.mass(m), coeff, b.mass_inv(m))
        return "op", dual
    c = complex(coeff)
    return "scalar", c


def _combine(acc: _RowAccumulator, b: _Builder, m: int, parts):
    """acc += sum of coeff * atom over (coeff, atom) pairs."""
    for coeff, (terms, rhs) in parts:
        mode, action = _wrap_coefficient(b, coeff, m)
        if mode == "scalar":
            if action == 0:
                continue
            for col, op, kinds, ident in terms:
                acc.add(
                    col,
                    op if action == 1 else ScaledOp(action, op),
                    kinds,
                    action * ident,
                )
            if rhs is not None:
                acc.rhs += action * rhs
        else:
            for col, op, kinds, ident in terms:
                acc.add(col, ChainOp(action, op), kinds, None if ident else 0.0)
            if rhs is not None:
                acc.rhs += action.matvec(rhs)


def _apply_coefficient(b: _Builder, coeff, m: int, vec: np.ndarray) -> np.ndarray:
    mode, action = _wrap_coefficient(b, coeff, m)
    if mode == "scalar":
        return action * vec
    return action.matvec(vec)


def build_single_trace(spec: FormulationSpec, scene: Scene, store: OperatorStore) -> BlockSystem:
    """Families whose unknowns are one (phi_m, psi_m) trace pair per interface."""
    b = _Builder(spec, scene, store)
    atoms = _TraceAtoms(b)
    ell = scene.num_objects
    sizes = [b.nodes(m) for m in range(1, ell + 1)]

    cols = []
    for m in range(1, ell + 1):
        cols.append(BlockInfo(f"phi[{m}]", m, sizes[m - 1], "dirichlet-trace"))
        cols.append(BlockInfo(f"psi[{m}]", m, sizes[m - 1], "neumann-trace"))

    block_rows = []
    rows = []
    rhs_parts = []
    for m in range(1, ell + 1):
        size = sizes[m - 1]
        acc1 = _RowAccumulator(2 * ell, size)
        acc2 = _RowAccumulator(2 * ell, size)
        if spec.family == "dirichlet":
            _combine(acc1, b, m, [(1.0, atoms.ext_dirichlet(m))])
            _combine(acc2, b, m, [(1.0, atoms.int_dirichlet(m))])
            kinds = ("dirichlet", "dirichlet")
            groups = ("exterior", "interior")
        elif spec.family == "neumann":
            _combine(acc1, b, m, [(1.0, atoms.ext_neumann(m))])
            _combine(acc2, b, m, [(1.0, atoms.int_neumann(m))])
            kinds = ("neumann", "neumann")
            groups = ("exterior", "interior")
        elif spec.family == "pmchwt":
            _combine(acc1, b, m, [(1.0, atoms.ext_dirichlet(m)), (-1.0, atoms.int_dirichlet(m))])
            _combine(acc2, b, m, [(1.0, atoms.ext_neumann(m)), (-1.0, atoms.int_neumann(m))])
            kinds = ("dirichlet", "neumann")
            groups = ("trace", "trace")
        elif spec.family == "muller":
            _combine(acc1, b, m, [(1.0, atoms.ext_dirichlet(m)), (1.0, atoms.int_dirichlet(m))])
            _combine(acc2, b, m, [(1.0, atoms.ext_neumann(m)), (1.0, atoms.int_neumann(m))])
            kinds = ("dirichlet", "neumann")
            groups = ("trace", "trace")
        else:
            coup = spec.resolved_coupling()
            ep, em = coup.entry("eta_plus", m), coup.entry("eta_minus", m)
            vp, vm = coup.entry("nu_plus", m), coup.entry("nu_minus", m)
            if spec.family == "combined-trace":
                row1 = [(ep, atoms.ext_dirichlet(m)), (em, atoms.int_dirichlet(m))]
                row2 = [(vp, atoms.ext_neumann(m)), (vm, atoms.int_neumann(m))]
            elif spec.family == "combined-domain":
                row1 = [(ep, atoms.ext_dirichlet(m)), (vp, atoms.ext_neumann(m))]
                row2 = [(em, atoms.int_dirichlet(m)), (vm, atoms.int_neumann(m))]
            else:  # combined-mixed
                row1 = [(ep, atoms.ext_dirichlet(m)), (vm, atoms.int_neumann(m))]
                row2 = [(vp, atoms.ext_neumann(m)), (em, atoms.int_dirichlet(m))]
            _combine(acc1, b, m, row1)
            _combine(acc2, b, m, row2)
            if spec.rhs_convention == "printed":
                # As-printed alternative: the incident Dirichlet data in row 1
                # carries the *interior* eta coefficient.
                b_d, b_n = b.rhs_pair(m)
                if spec.family == "combined-trace":
                    acc1.rhs = _apply_coefficient(b, em, m, b_d)
                elif spec.family == "combined-domain":
                    acc1.rhs = _apply_coefficient(b, em, m, b_d) + _apply_coefficient(
                        b, vp, m, b_n
                    )
                else:
                    acc1.rhs = _apply_coefficient(b, em, m, b_d)
            kinds = ("dirichlet", "neumann")
            groups = ("trace", "trace")
        own = (2 * (m - 1), 2 * (m - 1) + 1)
        for acc, kind, group, tag in ((acc1, kinds[0], groups[0], 1), (acc2, kinds[1], groups[1], 2)):
            block_rows.append(acc.operator_row())
            rows.append(RowInfo(f"row{tag}[{m}]", m, size, kind, group, acc.order_for(own)))
            rhs_parts.append(acc.rhs)

    operator = BlockOp(block_rows)
    return b.finish(operator, np.concatenate(rhs_parts), rows, cols)


# ---------------------------------------------------------------------------
# Multiple traces
# ---------------------------------------------------------------------------


def build_mtf(spec: FormulationSpec, scene: Scene, store: OperatorStore) -> BlockSystem:
    """Separate exterior (+) and interior (-) trace pairs per interface.

    The exterior rows are the exterior Calderon equations in the (+)
    unknowns with the transmission map of the (-) pair entering through
    scaled half identities; the interior rows are the (unscaled) interior
    Calderon equations in the (-) pair.  psi- is the raw interior Neumann
    trace (no sigma scaling), psi+ the exterior one.
    """
    b = _Builder(spec, scene, store)
    ell = scene.num_objects
    sizes = [b.nodes(m) for m in range(1, ell + 1)]

    cols = []
    for m in range(1, ell + 1):
        n = sizes[m - 1]
        cols.append(BlockInfo(f"phi+[{m}]", m, n, "dirichlet-trace-ext"))
        cols.append(BlockInfo(f"psi+[{m}]", m, n, "neumann-trace-ext"))
        cols.append(BlockInfo(f"phi-[{m}]", m, n, "dirichlet-trace-int"))
        cols.append(BlockInfo(f"psi-[{m}]", m, n, "neumann-trace-int"))

    def c(n, slot):
        return 4 * (n - 1) + slot

    block_rows = []
    rows = []
    rhs_parts = []
    for m in range(1, ell + 1):
        size = sizes[m - 1]
        b_d, b_n = b.rhs_pair(m)
        ext_d = _RowAccumulator(4 * ell, size)
        ext_n = _RowAccumulator(4 * ell, size)
        int_d = _RowAccumulator(4 * ell, size)
        int_n = _RowAccumulator(4 * ell, size)
        for n in range(1, ell + 1):
            ext_d.add(c(n, 0), ScaledOp(-1.0, b.exterior("K", m, n)), ("K",))
            ext_d.add(c(n, 1), b.exterior("V", m, n), ("V",))
            ext_n.add(c(n, 0), b.exterior("D", m, n), ("D",))
            ext_n.add(c(n, 1), b.exterior("T", m, n), ("T",))
        ext_d.add(c(m, 2), b.half_mass(m), identity=1.0)
        ext_n.add(c(m, 3), b.half_mass(m, b.sigma_ratio(m, 0)), identity=1.0)
        ext_d.rhs += b_d
        ext_n.rhs += b_n

        int_d.add(c(m, 0), b.half_mass(m, -1.0), identity=1.0)
        int_d.add(c(m, 2), ScaledOp(-1.0, b.interior("K", m)), ("K",))
        int_d.add(c(m, 3), b.interior("V", m), ("V",))
        int_n.add(c(m, 1), b.half_mass(m, -b.sigma_ratio(0, m)), identity=1.0)
        int_n.add(c(m, 2), b.interior("D", m), ("D",))
        int_n.add(c(m, 3), b.interior("T", m), ("T",))

        ext_pair = (c(m, 0), c(m, 1))
        int_pair = (c(m, 2), c(m, 3))
        for acc, label, kind, group, own in (
            (ext_d, f"ext-D[{m}]", "dirichlet", "exterior", ext_pair),
            (ext_n, f"ext-N[{m}]", "neumann", "exterior", ext_pair),
            (int_d, f"int-D[{m}]", "dirichlet", "interior", int_pair),
            (int_n, f"int-N[{m}]", "neumann", "interior", int_pair),
        ):
            block_rows.append(acc.operator_row())
            rows.append(RowInfo(label, m, size, kind, group, acc.order_for(own)))
            rhs_parts.append(acc.rhs)

    operator = BlockOp(block_rows)
    return b.finish(operator, np.concatenate(rhs_parts), rows, cols)


# ---------------------------------------------------------------------------
# Auxiliary-field formulations
# ---------------------------------------------------------------------------

# Interior lifts mapping the auxiliary potential to exterior Cauchy data:
#   psi-ansatz:  gamma_D = V_m chi,        gamma_N = (sm/s0)(1/2 I + T_m) chi
#   phi-ansatz:  gamma_D = (1/2 I - K_m) chi,  gamma_N = (sm/s0) D_m chi
_AFF_TABLE = {
    # variant: (ansatz, default weights (w_D, w_N))
    "dir-psi": ("psi", (1.0, 0.0)),
    "neu-psi": ("psi", (0.0, 1.0)),
    "dir-phi": ("phi", (1.0, 0.0)),
    "neu-phi": ("phi", (0.0, 1.0)),
}


def build_aff(spec: FormulationSpec, scene: Scene, store: OperatorStore) -> BlockSystem:
    """One auxiliary potential per interface; Cauchy data are interior lifts.

    The lift that feeds a row's own half-identity term is applied once per
    source interface and reused across rows; the complementary lift is
    recomputed inside the pair loop, so one apply costs ell + 3 ell^2 dense
    products (matching the published per-iteration accounting).
    """
    b = _Builder(spec, scene, store)
    ell = scene.num_objects
    sizes = [b.nodes(m) for m in range(1, ell + 1)]
    ansatz, default_w = _AFF_TABLE[spec.variant]
    w_d, w_n = spec.aff_weights if spec.aff_weights is not None else default_w
    w_d, w_n = complex(w_d), complex(w_n)

    role = "aff-potential-sl" if ansatz == "psi" else "aff-potential-dl"
    label = "psi_hat" if ansatz == "psi" else "phi_hat"
    cols = [
        BlockInfo(f"{label}[{m}]", m, sizes[m - 1], role) for m in range(1, ell + 1)
    ]
    offsets = np.concatenate([[0], np.cumsum(sizes)])

    # Interior lift actions per source interface (dual-space outputs).
    def lift_d(n):
        if ansatz == "psi":
            return b.interior("V", n)
        return SumOp(b.half_mass(n), ScaledOp(-1.0, b.interior("K", n)))

    def lift_n(n):
        if ansatz == "psi":
            return SumOp(b.half_mass(n), b.interior("T", n))
        return b.interior("D", n)

    lifts_d = [lift_d(n) for n in range(1, ell + 1)]
    lifts_n = [lift_n(n) for n in range(1, ell + 1)]
    minv = [b.mass_inv(n) for n in range(1, ell + 1)]
    k0_ops = [[b.exterior("K", m, n) for n in range(1, ell + 1)] for m in range(1, ell + 1)] if w_d else None
    v0_ops = [[b.exterior("V", m, n) for n in range(1, ell + 1)] for m in range(1, ell + 1)] if w_d else None
    d0_ops = [[b.exterior("D", m, n) for n in range(1, ell + 1)] for m in range(1, ell + 1)] if w_n else None
    t0_ops = [[b.exterior("T", m, n) for n in range(1, ell + 1)] for m in range(1, ell + 1)] if w_n else None
    sig = [b.sigma_ratio(n, 0) for n in range(1, ell + 1)]

    total = int(offsets[-1])

    def apply(x):
        out = np.zeros(total, dtype=complex)
        chunks = [x[offsets[i]: offsets[i + 1]] for i in range(ell)]
        # Shared lifts: the ones feeding the diagonal half-identity terms.
        if w_d:
            shared_d = [lifts_d[i].matvec(chunks[i]) for i in range(ell)]
        if w_n:
            shared_n = [lifts_n[i].matvec(chunks[i]) for i in range(ell)]
        for i in range(ell):  # row interface m = i + 1
            row = np.zeros(sizes[i], dtype=complex)
            if w_d:
                part = 0.5 * shared_d[i].copy()
                for j in range(ell):
                    gd = minv[j].matvec(shared_d[j])
                    gn = sig[j] * minv[j].matvec(lifts_n[j].matvec(chunks[j]))
                    part += -k0_ops[i][j].matvec(gd) + v0_ops[i][j].matvec(gn)
                row += w_d * part
            if w_n:
                part = 0.5 * sig[i] * shared_n[i].copy()
                for j in range(ell):
                    gd = minv[j].matvec(lifts_d[j].matvec(chunks[j]))
                    gn = sig[j] * minv[j].matvec(shared_n[j])
                    part += d0_ops[i][j].matvec(gd) + t0_ops[i][j].matvec(gn)
                row += w_n * part
            out[offsets[i]: offsets[i + 1]] = row
        return out

    operator = CallableOp((total, total), apply)

    rows = []
    rhs_parts = []
    if w_d and w_n:
        kind = "dirichlet" if abs(w_d) >= abs(w_n) else "neumann"
    else:
        kind = "dirichlet" if w_d else "neumann"
    # Leading order of the row's diagonal term: the pure variants have
    # diagonals 1/2 V_m (order -1), (sigma/4)(I + 2T_m) and (1/4)(I - 2K_m)
    # (order 0), and (sigma/2) D_m (order +1).
    if w_n and ansatz == "phi":
        order = 1
    elif w_d and not w_n and ansatz == "psi":
        order = -1
    else:
        order = 0
    for i, m in enumerate(range(1, ell + 1)):
        b_d, b_n = b.rhs_pair(m)
        rhs_parts.append(w_d * b_d + w_n * b_n)
        rows.append(RowInfo(f"aff[{m}]", m, sizes[i], kind, "single", order))

    aux = {"ansatz": ansatz, "weights": (w_d, w_n)}
    return b.finish(operator, np.concatenate(rhs_parts), rows, cols, aux)


# ---------------------------------------------------------------------------
# Single-potential formulations
# ---------------------------------------------------------------------------


def build_spf(spec: FormulationSpec, scene: Scene, store: OperatorStore) -> BlockSystem:
    """One interior and one exterior layer potential per interface.

    The variant tag is "<exterior>-<interior>" by layer type; e.g.
    "sl-dl" radiates a single layer outside and represents the interior
    field by a double layer.
    """
    b = _Builder(spec, scene, store)
    ell = scene.num_objects
    sizes = [b.nodes(m) for m in range(1, ell + 1)]
    ext_type, int_type = spec.variant.split("-")

    cols = []
    for m in range(1, ell + 1):
        n = sizes[m - 1]
        int_label = "psi-" if int_type == "sl" else "phi-"
        ext_label = "psi+" if ext_type == "sl" else "phi+"
        cols.append(BlockInfo(f"{int_label}[{m}]", m, n, f"potential-int-{int_type}"))
        cols.append(BlockInfo(f"{ext_label}[{m}]", m, n, f"potential-ext-{ext_type}"))

    def c(n, slot):
        return 2 * (n - 1) + slot

    block_rows = []
    rows = []
    rhs_parts = []
    for m in range(1, ell + 1):
        size = sizes[m - 1]
        b_d, b_n = b.rhs_pair(m)
        acc_d = _RowAccumulator(2 * ell, size)
        acc_n = _RowAccumulator(2 * ell, size)

        # Interior column: traces of the interior representation.
        if int_type == "sl":  # p = V_m chi inside
            acc_d.add(c(m, 0), b.interior("V", m), ("V",))
            acc_n.add(
                c(m, 0),
                ScaledOp(
                    b.sigma_ratio(m, 0),
                    SumOp(b.half_mass(m), b.interior("T", m)),
                ),
                ("T",),
                identity=1.0,
            )
        else:  # p = -K_m chi inside
            acc_d.add(
                c(m, 0),
                SumOp(b.half_mass(m), ScaledOp(-1.0, b.interior("K", m))),
                ("K",),
                identity=1.0,
            )
            acc_n.add(c(m, 0), ScaledOp(b.sigma_ratio(m, 0), b.interior("D", m)), ("D",))

        # Exterior columns: minus the exterior traces of the radiated field.
        for n in range(1, ell + 1):
            if ext_type == "sl":  # p_sca = sum V_0n chi_n
                acc_d.add(c(n, 1), ScaledOp(-1.0, b.exterior("V", m, n)), ("V",))
                acc_n.add(c(n, 1), ScaledOp(-1.0, b.exterior("T", m, n)), ("T",))
                if n == m:
                    acc_n.add(c(m, 1), b.half_mass(m), identity=1.0)
            else:  # p_sca = -sum K_0n chi_n
                acc_d.add(c(n, 1), b.exterior("K", m, n), ("K",))
                if n == m:
                    acc_d.add(c(m, 1), b.half_mass(m), identity=1.0)
                acc_n.add(c(n, 1), ScaledOp(-1.0, b.exterior("D", m, n)), ("D",))

        acc_d.rhs += b_d
        acc_n.rhs += b_n
        for acc, label, kind in ((acc_d, f"D[{m}]", "dirichlet"), (acc_n, f"N[{m}]", "neumann")):
            block_rows.append(acc.operator_row())
            rows.append(RowInfo(label, m, size, kind, "pair", acc.order))
            rhs_parts.append(acc.rhs)

    operator = BlockOp(block_rows)
    return b.finish(operator, np.concatenate(rhs_parts), rows, cols)


# ---------------------------------------------------------------------------
# Mixed-potential formulations
# ---------------------------------------------------------------------------


def build_mpf(spec: FormulationSpec, scene: Scene, store: OperatorStore) -> BlockSystem:
    """One exterior layer potential plus one retained exterior trace.

    Variants: "<ext>-<elim>-<reg>" with ext in {sl, dl} (exterior layer),
    elim in {dtn, ntd} (which interior map was eliminated; dtn retains the
    Dirichlet trace, ntd the Neumann trace), reg in {ad, sl} (second-kind or
    first-kind regularising left multiplier on the eliminated row).

    The eliminated interior map never appears as an inverse: the row that
    would contain it is left-multiplied so the composition collapses to a
    plain interior operator, and the same multiplier is applied to that
    row's right-hand side (mass-interleaved).  The multiplier acts per
    source-interface contribution, costing ell + 3 ell^2 products per apply.
    """
    b = _Builder(spec, scene, store)
    ell = scene.num_objects
    sizes = [b.nodes(m) for m in range(1, ell + 1)]
    ext_type, elim, reg = spec.variant.split("-")

    cols = []
    for m in range(1, ell + 1):
        n = sizes[m - 1]
        pot_label = "psi0" if ext_type == "sl" else "phi0"
        trace_role = "dirichlet-trace" if elim == "dtn" else "neumann-trace"
        cols.append(BlockInfo(f"{pot_label}[{m}]", m, n, f"potential-ext-{ext_type}"))
        cols.append(BlockInfo(f"t[{m}]", m, n, trace_role))

    offsets = np.concatenate([[0], np.cumsum([c.size for c in cols])])
    total = int(offsets[-1])

    def pot_chunk(x, n):
        i = 2 * (n - 1)
        return x[offsets[i]: offsets[i + 1]]

    def trace_chunk(x, n):
        i = 2 * (n - 1) + 1
        return x[offsets[i]: offsets[i + 1]]

    # Exterior-trace contributions of the radiated potential, per (m, n):
    # dual-space value of gamma_D / gamma_N of the exterior representation.
    if ext_type == "sl":
        v0 = [[b.exterior("V", m, n) for n in range(1, ell + 1)] for m in range(1, ell + 1)]
        t0 = [[b.exterior("T", m, n) for n in range(1, ell + 1)] for m in range(1, ell + 1)]

        def ext_d_term(m, n, chi):
            return v0[m - 1][n - 1].matvec(chi)

        def ext_n_term(m, n, chi):
            out = t0[m - 1][n - 1].matvec(chi)
            if m == n:
                out = out - 0.5 * (b.mass(m).matvec(chi))
            return out

    else:
        k0 = [[b.exterior("K", m, n) for n in range(1, ell + 1)] for m in range(1, ell + 1)]
        d0 = [[b.exterior("D", m, n) for n in range(1, ell + 1)] for m in range(1, ell + 1)]

        def ext_d_term(m, n, chi):
            out = -k0[m - 1][n - 1].matvec(chi)
            if m == n:
                out = out - 0.5 * (b.mass(m).matvec(chi))
            return out

        def ext_n_term(m, n, chi):
            return d0[m - 1][n - 1].matvec(chi)

    # Regularising multiplier pieces on the eliminated row of interface m.
    sig = [b.sigma_ratio(m, 0) for m in range(1, ell + 1)]
    inv_sig = [b.sigma_ratio(0, m) for m in range(1, ell + 1)]
    minv = [b.mass_inv(m) for m in range(1, ell + 1)]
    if elim == "dtn":
        # Eliminated row (Neumann): sigma-ratio * DtN_m t - gamma_N(ext) = b_N
        if reg == "ad":
            mult = [SumOp(b.half_mass(m), ScaledOp(-1.0, b.interior("T", m)))
                    for m in range(1, ell + 1)]
            tcoef = [ScaledOp(sig[m - 1], b.interior("D", m)) for m in range(1, ell + 1)]
        else:
            mult = [b.interior("V", m) for m in range(1, ell + 1)]
            tcoef = [ScaledOp(sig[m - 1], SumOp(b.half_mass(m), b.interior("K", m)))
                     for m in range(1, ell + 1)]
    else:
        # Eliminated row (Dirichlet): sigma-ratio^-1 NtD_m t - gamma_D(ext) = b_D
        if reg == "ad":
            mult = [SumOp(b.half_mass(m), b.interior("K", m)) for m in range(1, ell + 1)]
            tcoef = [ScaledOp(inv_sig[m - 1], b.interior("V", m)) for m in range(1, ell + 1)]
        else:
            mult = [b.interior("D", m) for m in range(1, ell + 1)]
            tcoef = [ScaledOp(inv_sig[m - 1],
                              SumOp(b.half_mass(m), ScaledOp(-1.0, b.interior("T", m))))
                     for m in range(1, ell + 1)]

    def apply(x):
        out = np.zeros(total, dtype=complex)
        for i in range(ell):
            m = i + 1
            nrow = sizes[i]
            t = trace_chunk(x, m)
            if elim == "dtn":
                plain = b.mass(m).matvec(t)  # Dirichlet row: M t - gamma_D(ext)
                regd = tcoef[i].matvec(t)  # Neumann row after multiplication
                for n in range(1, ell + 1):
                    chi = pot_chunk(x, n)
                    plain -= ext_d_term(m, n, chi)
                    regd -= mult[i].matvec(minv[i].matvec(ext_n_term(m, n, chi)))
                d_row, n_row = plain, regd
            else:
                plain = b.mass(m).matvec(t)  # Neumann row: M t - gamma_N(ext)
                regd = tcoef[i].matvec(t)  # Dirichlet row after multiplication
                for n in range(1, ell + 1):
                    chi = pot_chunk(x, n)
                    plain -= ext_n_term(m, n, chi)
                    regd -= mult[i].matvec(minv[i].matvec(ext_d_term(m, n, chi)))
                d_row, n_row = regd, plain
            out[offsets[2 * i]: offsets[2 * i] + nrow] = d_row
            out[offsets[2 * i] + nrow: offsets[2 * i + 2]] = n_row
        return out

    operator = CallableOp((total, total), apply)

    rows = []
    rhs_parts = []
    # The untouched row keeps its mass term on the retained trace (order 0);
    # the regularised row's diagonal is the collapsed trace coefficient:
    # dtn: sigma D_m (ad, +1) or sigma (1/2 M + K_m) (sl, 0);
    # ntd: V_m / sigma (ad, -1) or (1/2 M - T_m) / sigma (sl, 0).
    for i, m in enumerate(range(1, ell + 1)):
        b_d, b_n = b.rhs_pair(m)
        if elim == "dtn":
            rhs_d = b_d
            rhs_n = mult[i].matvec(minv[i].matvec(b_n))
            order_d = 0
            order_n = 1 if reg == "ad" else 0
        else:
            rhs_n = b_n
            rhs_d = mult[i].matvec(minv[i].matvec(b_d))
            order_n = 0
            order_d = -1 if reg == "ad" else 0
        rows.append(RowInfo(f"D[{m}]", m, sizes[i], "dirichlet", "pair", order_d))
        rows.append(RowInfo(f"N[{m}]", m, sizes[i], "neumann", "pair", order_n))
        rhs_parts.append(rhs_d)
        rhs_parts.append(rhs_n)

    aux = {"ext_type": ext_type, "elim": elim, "reg": reg}
    return b.finish(operator, np.concatenate(rhs_parts), rows, cols, aux)


# ---------------------------------------------------------------------------
# Dispatch
# ---------------------------------------------------------------------------


def build_system(
    spec,
    scene: Scene,
    store: OperatorStore | None = None,
) -> BlockSystem:
    """Build the block system for ``spec`` (a FormulationSpec or token)."""
    if isinstance(spec, str):
        spec = parse_formulation(spec)
    if store is None:
        store = OperatorStore()
    if spec.family == "mtf":
        return build_mtf(spec, scene, store)
    if spec.family == "aff":
        return build_aff(spec, scene, store)
    if spec.family == "spf":
        return build_spf(spec, scene, store)
    if spec.family == "mpf":
        return build_mpf(spec, scene, store)
    return build_single_trace(spec, scene, store)


# ---------------------------------------------------------------------------
# Trace recovery
# ---------------------------------------------------------------------------


def _direct_exterior(phi, psi):
    return (("single", -psi), ("double", -phi))


def _direct_interior(phi, psi_raw):
    return (("single", psi_raw), ("double", phi))


def recover_traces(system: BlockSystem, solution: np.ndarray) -> SolutionTraces:
    """Map a solution vector to per-interface Cauchy data and layer terms."""
    spec = system.spec
    scene = system.scene
    store = system.store
    solution = np.asarray(solution, dtype=complex)
    if solution.shape != (system.size,):
        raise FormulationError(
            f"solution has shape {solution.shape}, system expects ({system.size},)"
        )
    out = []

    def minv(m):
        return FactorizedInverseOp(store.mass(scene.mesh(m)))

    def interior_matrix(kind, m):
        return store.get(kind, scene.wavenumber(m), scene.mesh(m)).matrix

    if spec.family == "mtf":
        for m in range(1, scene.num_objects + 1):
            phi_p = system.block_of(solution, f"phi+[{m}]")
            psi_p = system.block_of(solution, f"psi+[{m}]")
            phi_m = system.block_of(solution, f"phi-[{m}]")
            psi_m = system.block_of(solution, f"psi-[{m}]")
            out.append(
                InterfaceSolution(
                    m,
                    phi_p,
                    psi_p,
                    _direct_exterior(phi_p, psi_p),
                    _direct_interior(phi_m, psi_m),
                )
            )
    elif spec.family == "aff":
        ansatz = system.aux["ansatz"]
        for m in range(1, scene.num_objects + 1):
            chi = system.block_of(
                solution, f"psi_hat[{m}]" if ansatz == "psi" else f"phi_hat[{m}]"
            )
            inv = minv(m)
            s = scene.sigma(m) / scene.sigma(0)
            if ansatz == "psi":
                phi = inv.matvec(interior_matrix("V", m) @ chi)
                psi = s * (0.5 * chi + inv.matvec(interior_matrix("T", m) @ chi))
                interior = (("single", chi),)
            else:
                phi = 0.5 * chi - inv.matvec(interior_matrix("K", m) @ chi)
                psi = s * inv.matvec(interior_matrix("D", m) @ chi)
                interior = (("double", chi),)
            out.append(
                InterfaceSolution(m, phi, psi, _direct_exterior(phi, psi), interior)
            )
    elif spec.family == "spf":
        ext_type, int_type = spec.variant.split("-")
        for m in range(1, scene.num_objects + 1):
            int_label = "psi-" if int_type == "sl" else "phi-"
            ext_label = "psi+" if ext_type == "sl" else "phi+"
            chi_int = system.block_of(solution, f"{int_label}[{m}]")
            chi_ext = system.block_of(solution, f"{ext_label}[{m}]")
            inv = minv(m)
            s = scene.sigma(m) / scene.sigma(0)
            if int_type == "sl":
                phi = inv.matvec(interior_matrix("V", m) @ chi_int)
                psi = s * (0.5 * chi_int + inv.matvec(interior_matrix("T", m) @ chi_int))
                interior = (("single", chi_int),)
            else:
                phi = 0.5 * chi_int - inv.matvec(interior_matrix("K", m) @ chi_int)
                psi = s * inv.matvec(interior_matrix("D", m) @ chi_int)
                interior = (("double", chi_int),)
            exterior = (("single", chi_ext),) if ext_type == "sl" else (("double", chi_ext),)
            out.append(InterfaceSolution(m, phi, psi, exterior, interior))
    elif spec.family == "mpf":
        ext_type = system.aux["ext_type"]
        elim = system.aux["elim"]
        for m in range(1, scene.num_objects + 1):
            pot_label = "psi0" if ext_type == "sl" else "phi0"
            t = system.block_of(solution, f"t[{m}]")
            inv = minv(m)
            b_d, b_n = incident_rhs(scene, m)
            # Trace of the radiated exterior field on interface m.
            gd = np.zeros_like(t)
            gn = np.zeros_like(t)
            for n in range(1, scene.num_objects + 1):
                chi = system.block_of(solution, f"{pot_label}[{n}]")
                if ext_type == "sl":
                    vmat = store.get("V", scene.k0, scene.mesh(m), scene.mesh(n)).matrix
                    tmat = store.get("T", scene.k0, scene.mesh(m), scene.mesh(n)).matrix
                    gd += inv.matvec(vmat @ chi)
                    gn += inv.matvec(tmat @ chi)
                    if n == m:
                        gn += -0.5 * chi
                else:
                    kmat = store.get("K", scene.k0, scene.mesh(m), scene.mesh(n)).matrix
                    dmat = store.get("D", scene.k0, scene.mesh(m), scene.mesh(n)).matrix
                    gd += -inv.matvec(kmat @ chi)
                    gn += inv.matvec(dmat @ chi)
                    if n == m:
                        gd += -0.5 * chi
            if elim == "dtn":
                phi = t
                psi = inv.matvec(b_n) + gn
            else:
                psi = t
                phi = inv.matvec(b_d) + gd
            s0m = scene.sigma(0) / scene.sigma(m)
            out.append(
                InterfaceSolution(
                    m,
                    phi,
                    psi,
                    None,  # placeholder, filled below
                    _direct_interior(phi, s0m * psi),
                )
            )
        # Exterior layers attach per interface from its own potential block.
        fixed = []
        for m, sol in enumerate(out, start=1):
            pot_label = "psi0" if ext_type == "sl" else "phi0"
            chi = system.block_of(solution, f"{pot_label}[{m}]")
            ext = (("single", chi),) if ext_type == "sl" else (("double", chi),)
            fixed.append(replace(sol, exterior_layers=ext))
        out = fixed
    else:  # single-trace families: unknowns are the traces themselves
        for m in range(1, scene.num_objects + 1):
            phi = system.block_of(solution, f"phi[{m}]")
            psi = system.block_of(solution, f"psi[{m}]")
            s0m = scene.sigma(0) / scene.sigma(m)
            out.append(
                InterfaceSolution(
                    m,
                    phi,
                    psi,
                    _direct_exterior(phi, psi),
                    _direct_interior(phi, s0m * psi),
                )
            )
    return SolutionTraces(spec, tuple(out))
