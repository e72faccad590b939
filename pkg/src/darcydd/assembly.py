"""Mixed-hybrid discretization: broken RT0 velocities, elementwise constant
pressures, and pressure-trace multipliers on inter-element faces.

Velocity unknowns are total outward fluxes, one per element side; every
element keeps its own copy of each face dof, and continuity is enforced
weakly by the multiplier rows. The resulting symmetric block system is

    [ A   B^T  BF^T ] [u  ]   [g]
    [ B  -C   -CF^T ] [p  ] = [f]
    [ BF -CF  -CT   ] [lam]   [0]

where A is SPD block diagonal (one block per element), B rows express mass
balance, BF rows tie side fluxes together, and the C blocks carry the
pressure-jump penalty sigma * |F| * (p_lower - lam_side)^2 of every
lower-dimensional coupling. The quadratic-form structure makes
[[C, CF^T], [CF, CT]] positive semidefinite by construction.

Degrees of freedom at faces:

* side on an uncoupled interior face: one velocity dof, one multiplier
  shared by all sides of the face (three or more sides form a star and
  still share one multiplier);
* side on a face occupied by a lower-dimensional element: one velocity dof
  and an unshared multiplier per side, so flow may jump across the fracture;
* natural boundary side: velocity dof only, prescribed pressure enters the
  right-hand side;
* essential boundary side: no dofs, zero flux eliminated at assembly.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sps
from numpy.typing import NDArray

from .errors import ConfigurationError, SingularSystemError
from .ldlt import factor_symmetric_indefinite
from .mesh import SIMPLEX_FACES, Element, Mesh, NATURAL, simplex_measure, tangent_frame


def rt0_local(
    dim: int,
    coords: NDArray,
    conductivity: NDArray,
    cross_section: float = 1.0,
) -> tuple[NDArray, NDArray, NDArray]:
    """Element matrices of the lowest-order flux basis on one simplex.

    With the dof of face j defined as the total outward flux through face j,
    the basis function is ``w_j(x) = (x - x_j) / (d |T|)``. Returns

    * ``a_e``: the (d+1)x(d+1) weighted velocity mass matrix
      ``(1/delta) integral of k^-1 w_i . w_j``, exactly symmetric and SPD;
    * ``b_signs``: the divergence-row contribution, -1 per side, because the
      total outward flux of w_j is one;
    * ``g_rhs``: minus the integral of the vertical component of each basis
      function, the gravity load when enabled.

    The integral has the closed form
    ``(|T| c_i^T k^-1 c_j + tr(k^-1 J)) / (delta d^2 |T|^2)`` with ``c_i``
    the vector from vertex i to the centroid and J the second moment of the
    simplex about its centroid.
    """
    pts = np.asarray(coords, dtype=float)
    if pts.shape != (dim + 1, 3):
        raise ValueError(f"expected {(dim + 1, 3)} coordinates, got {pts.shape}")
    if dim == 3:
        local = pts
    else:
        frame = tangent_frame(pts, dim)
        local = (pts - pts[0]) @ frame
    measure = simplex_measure(pts)
    centroid = local.mean(axis=0)
    c = local - centroid  # rows: centroid-to-vertex offsets (negated)
    kinv = np.linalg.inv(np.asarray(conductivity, dtype=float))
    second_moment = measure / ((dim + 1) * (dim + 2)) * (c.T @ c)
    gram = measure * (c @ kinv @ c.T) + np.trace(kinv @ second_moment)
    a_e = gram / (cross_section * dim**2 * measure**2)
    a_e = 0.5 * (a_e + a_e.T)
    b_signs = -np.ones(dim + 1)
    z_centroid = pts[:, 2].mean()
    g_rhs = -(z_centroid - pts[:, 2]) / dim
    return a_e, b_signs, g_rhs


# ---------------------------------------------------------------------------
# degree-of-freedom map


@dataclass
class DofMap:
    """Dense numbering of velocity, pressure and multiplier unknowns.

    Pressure dof ids equal element ids. Velocity and multiplier ids are
    assigned in deterministic element/local-face order. Adjacency registries
    (``mult_sides``, ``mult_links``) record which element sides and coupling
    links touch each multiplier; interface classification and weight
    formulas read them.
    """

    n_velocity: int = 0
    n_pressure: int = 0
    n_multiplier: int = 0
    vel_of_side: dict[tuple[int, int], int] = field(default_factory=dict)
    side_of_vel: list[tuple[int, int]] = field(default_factory=list)
    element_vel: list[NDArray] = field(default_factory=list)
    mult_of_side: dict[tuple[int, int], int] = field(default_factory=dict)
    natural_of_side: dict[tuple[int, int], float] = field(default_factory=dict)
    essential_sides: set = field(default_factory=set)
    mult_sides: list[list[tuple[int, int]]] = field(default_factory=list)
    mult_links: list[list[int]] = field(default_factory=list)
    mult_nodes: list[tuple[int, ...]] = field(default_factory=list)
    mult_measure: list[float] = field(default_factory=list)
    mult_center: list[NDArray] = field(default_factory=list)


def build_dof_map(mesh: Mesh) -> DofMap:
    """Number all unknowns and resolve boundary conditions.

    Raises :class:`ConfigurationError` when an explicit boundary condition
    targets a face that is not an unoccupied boundary face (interior faces
    and fracture-coupled faces cannot carry one).
    """
    dm = DofMap(n_pressure=len(mesh.elements))
    groups = mesh.side_groups()
    bc_by_tuple = {bc.face_nodes: bc for bc in mesh.boundary_conditions}
    link_of_side: dict[tuple[int, int], int] = {}
    for idx, link in enumerate(mesh.couplings):
        link_of_side[(link.upper_element, link.upper_local_face)] = idx
    consumed: set[tuple[int, ...]] = set()
    shared_mult: dict[tuple[int, tuple[int, ...]], int] = {}

    def new_mult(nodes: tuple[int, ...]) -> int:
        m = dm.n_multiplier
        dm.n_multiplier += 1
        dm.mult_sides.append([])
        dm.mult_links.append([])
        dm.mult_nodes.append(nodes)
        dm.mult_measure.append(simplex_measure(mesh.node_coords[list(nodes)]))
        dm.mult_center.append(mesh.node_coords[list(nodes)].mean(axis=0))
        return m

    def new_vel(side: tuple[int, int]) -> int:
        v = dm.n_velocity
        dm.n_velocity += 1
        dm.vel_of_side[side] = v
        dm.side_of_vel.append(side)
        return v

    for el in mesh.elements:
        vel_ids = np.full(el.dim + 1, -1, dtype=int)
        for lf, locs in enumerate(SIMPLEX_FACES[el.dim]):
            side = (el.id, lf)
            nodes = tuple(sorted(el.node_ids[i] for i in locs))
            if side in link_of_side:
                # Fracture-coupled side: unshared multiplier, flow may jump.
                vel_ids[lf] = new_vel(side)
                m = new_mult(nodes)
                dm.mult_of_side[side] = m
                dm.mult_sides[m].append(side)
                dm.mult_links[m].append(link_of_side[side])
                continue
            group = groups[(el.dim, nodes)]
            if len(group) == 1:
                bc = bc_by_tuple.get(nodes)
                consumed.add(nodes)
                if bc is not None and bc.kind == NATURAL:
                    vel_ids[lf] = new_vel(side)
                    dm.natural_of_side[side] = bc.value
                else:
                    dm.essential_sides.add(side)
                continue
            vel_ids[lf] = new_vel(side)
            key = (el.dim, nodes)
            m = shared_mult.get(key)
            if m is None:
                m = shared_mult[key] = new_mult(nodes)
            dm.mult_of_side[side] = m
            dm.mult_sides[m].append(side)
        dm.element_vel.append(vel_ids)

    stray = [t for t in bc_by_tuple if t not in consumed]
    if stray:
        raise ConfigurationError(
            f"boundary conditions reference faces that are not unoccupied "
            f"boundary faces: {stray[:5]}"
        )
    return dm


# ---------------------------------------------------------------------------
# block system


@dataclass
class SolutionTriple:
    """Velocity fluxes, element pressures and face pressure traces."""

    u: NDArray
    p: NDArray
    lam: NDArray

    def concatenated(self) -> NDArray:
        return np.concatenate([self.u, self.p, self.lam])


@dataclass
class BlockSystem:
    """Assembled blocks of the saddle system plus the dof map behind them."""

    a: sps.csr_matrix
    b: sps.csr_matrix
    b_f: sps.csr_matrix
    c: sps.csr_matrix
    c_f: sps.csr_matrix
    c_t: sps.csr_matrix
    g: NDArray
    f: NDArray
    dof_map: DofMap
    mesh: Mesh
    _full: sps.csr_matrix | None = field(default=None, repr=False)

    @property
    def n_velocity(self) -> int:
        return self.dof_map.n_velocity

    @property
    def n_pressure(self) -> int:
        return self.dof_map.n_pressure

    @property
    def n_multiplier(self) -> int:
        return self.dof_map.n_multiplier

    @property
    def n_total(self) -> int:
        return self.n_velocity + self.n_pressure + self.n_multiplier

    def full_matrix(self) -> sps.csr_matrix:
        """The symmetric indefinite system matrix, cached."""
        if self._full is None:
            self._full = sps.bmat(
                [
                    [self.a, self.b.T, self.b_f.T],
                    [self.b, -self.c, -self.c_f.T],
                    [self.b_f, -self.c_f, -self.c_t],
                ],
                format="csr",
            )
        return self._full

    def full_rhs(self) -> NDArray:
        return np.concatenate([self.g, self.f, np.zeros(self.n_multiplier)])

    def penalty_matrix(self) -> sps.csr_matrix:
        """The coupling penalty block [[C, CF^T], [CF, CT]], PSD."""
        return sps.bmat(
            [[self.c, self.c_f.T], [self.c_f, self.c_t]], format="csr"
        )

    def split(self, x: NDArray) -> SolutionTriple:
        nu, npr = self.n_velocity, self.n_pressure
        return SolutionTriple(
            u=x[:nu], p=x[nu : nu + npr], lam=x[nu + npr :]
        )


def assemble(mesh: Mesh) -> BlockSystem:
    """Assemble all blocks of the saddle system for one mesh.

    Refuses meshes without a single natural boundary face: every pressure
    would only be determined up to a constant per component and the matrix
    is singular.
    """
    if not mesh.has_natural_bc():
        raise SingularSystemError(
            "mesh has no natural boundary condition anywhere; the system "
            "matrix is singular (component pressures are determined only up "
            "to constants)"
        )
    dm = build_dof_map(mesh)
    coords = mesh.node_coords
    a_i: list[int] = []
    a_j: list[int] = []
    a_v: list[float] = []
    b_i: list[int] = []
    b_j: list[int] = []
    b_v: list[float] = []
    bf_i: list[int] = []
    bf_j: list[int] = []
    bf_v: list[float] = []
    g = np.zeros(dm.n_velocity)
    f = np.zeros(dm.n_pressure)
    for el in mesh.elements:
        pts = coords[list(el.node_ids)]
        a_e, b_signs, g_rhs = rt0_local(
            el.dim, pts, el.conductivity, el.cross_section
        )
        vel = dm.element_vel[el.id]
        kept = np.flatnonzero(vel >= 0)
        for ii in kept:
            gi = vel[ii]
            for jj in kept:
                a_i.append(gi)
                a_j.append(vel[jj])
                a_v.append(a_e[ii, jj])
            b_i.append(el.id)
            b_j.append(gi)
            b_v.append(b_signs[ii])
            side = (el.id, int(ii))
            head = dm.natural_of_side.get(side)
            if head is not None:
                g[gi] -= head
            if mesh.gravity_enabled:
                g[gi] += g_rhs[ii]
            m = dm.mult_of_side.get(side)
            if m is not None:
                bf_i.append(m)
                bf_j.append(gi)
                bf_v.append(1.0)
        f[el.id] = -el.cross_section * el.source * el.measure
    c_i: list[int] = []
    c_v: list[float] = []
    cf_i: list[int] = []
    cf_j: list[int] = []
    cf_v: list[float] = []
    ct_i: list[int] = []
    ct_v: list[float] = []
    for idx, link in enumerate(mesh.couplings):
        m = dm.mult_of_side[(link.upper_element, link.upper_local_face)]
        w = link.sigma * link.measure
        c_i.append(link.lower_element)
        c_v.append(w)
        cf_i.append(m)
        cf_j.append(link.lower_element)
        cf_v.append(-w)
        ct_i.append(m)
        ct_v.append(w)
    nu, npr, nl = dm.n_velocity, dm.n_pressure, dm.n_multiplier
    system = BlockSystem(
        a=sps.csr_matrix((a_v, (a_i, a_j)), shape=(nu, nu)),
        b=sps.csr_matrix((b_v, (b_i, b_j)), shape=(npr, nu)),
        b_f=sps.csr_matrix((bf_v, (bf_i, bf_j)), shape=(nl, nu)),
        c=sps.csr_matrix((c_v, (c_i, c_i)), shape=(npr, npr)),
        c_f=sps.csr_matrix((cf_v, (cf_i, cf_j)), shape=(nl, npr)),
        c_t=sps.csr_matrix((ct_v, (ct_i, ct_i)), shape=(nl, nl)),
        g=g,
        f=f,
        dof_map=dm,
        mesh=mesh,
    )
    return system


def full_solve_direct(system: BlockSystem) -> SolutionTriple:
    """Factor the full saddle matrix and solve, refining to backward error
    below 1e-10 (relative to the problem scale, so extreme penalty
    coefficients do not defeat the check).

    A singular factorization triggers a diagnosis of connected components
    whose boundary carries no natural condition.
    """
    mat = system.full_matrix().tocsc()
    rhs = system.full_rhs()
    try:
        fact = factor_symmetric_indefinite(mat)
    except SingularSystemError as exc:
        comps = system.mesh.components_without_natural_bc(include_couplings=True)
        if comps:
            raise SingularSystemError(
                f"system is singular: {len(comps)} connected component(s) "
                f"have no natural boundary condition; the constant pressure "
                f"on each is unconstrained (first example: elements "
                f"{comps[0][:6]})"
            ) from exc
        raise
    x = fact.solve(rhs)
    for _ in range(3):
        if fact.backward_error(rhs, x) <= 1e-10:
            break
        x = x + fact.solve(rhs - mat @ x)
    err = fact.backward_error(rhs, x)
    if err > 1e-6:
        raise SingularSystemError(
            f"direct solve stalled at backward error {err:.2e}; "
            f"system is singular or catastrophically ill-conditioned"
        )
    return system.split(x)


def mass_balance_residual(system: BlockSystem, sol: SolutionTriple) -> NDArray:
    """Per-element defect of discrete mass balance.

    For every element: sum of outward side fluxes minus the source integral
    minus the inflow received through its own coupling links (an element
    acting as the lower side of links receives sigma |F| (lam - p) per
    link). Exactly zero in exact arithmetic for any solution of the system.
    """
    dm = system.dof_map
    mesh = system.mesh
    res = np.zeros(len(mesh.elements))
    for el in mesh.elements:
        total = 0.0
        for lf in range(el.dim + 1):
            v = dm.element_vel[el.id][lf]
            if v >= 0:
                total += sol.u[v]
        total -= el.cross_section * el.source * el.measure
        res[el.id] = total
    for link in mesh.couplings:
        m = dm.mult_of_side[(link.upper_element, link.upper_local_face)]
        res[link.lower_element] -= (
            link.sigma * link.measure * (sol.lam[m] - sol.p[link.lower_element])
        )
    return np.abs(res)


def write_matrix_market(matrix, path: str) -> None:
    """Dump a matrix in MatrixMarket coordinate format (17 significant
    digits, 1-based indices), for external inspection."""
    coo = sps.coo_matrix(matrix)
    with open(path, "w") as fh:
        fh.write("%%MatrixMarket matrix coordinate real general\n")
        fh.write(f"{coo.shape[0]} {coo.shape[1]} {coo.nnz}\n")
        for i, j, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{i + 1} {j + 1} {'%.17g' % v}\n")
