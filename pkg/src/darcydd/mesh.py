"""Mixed-dimensional simplicial meshes for flow in fractured porous media.

A mesh holds simplices of dimension 1, 2 and 3 at once. Lower-dimensional
elements (fracture planes, intersection channels) geometrically coincide
with faces of higher-dimensional elements: a 2D fracture triangle occupies a
tetrahedral face, a 1D channel segment occupies a triangle edge. Coincidence
is exact, by shared node ids, and is discovered by :func:`detect_couplings`.

Conventions
-----------
* Node coordinates are always stored in 3D; planar and linear meshes embed.
* An element of dimension ``d`` has ``d + 1`` vertices and ``d + 1`` faces;
  local face ``j`` is the facet opposite local vertex ``j``.
* Conductivity tensors are ``dim x dim`` and interpreted in the element's
  local tangent frame (Gram-Schmidt on its edge vectors); for isotropic
  tensors the frame is irrelevant.
* Boundary conditions attach to faces by their sorted node tuple. ``natural``
  prescribes the pressure on the face, ``essential`` prescribes zero normal
  flux. Faces without an explicit condition default to essential.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from numpy.typing import NDArray

from .errors import ConfigurationError, InvalidMeshError, MeshFormatError

NATURAL = "natural"
ESSENTIAL = "essential"

# Geometric coincidence tolerance for generator plane matching.
_PLANE_TOL = 1e-12


@dataclass(frozen=True)
class Node:
    """A mesh vertex: dense integer id plus 3D coordinates."""

    id: int
    coords: NDArray[np.float64]


@dataclass
class Element:
    """A simplex of dimension 1, 2 or 3.

    Parameters are the raw input data; ``measure`` and ``centroid`` are
    derived from node coordinates when the owning mesh is constructed.
    """

    id: int
    dim: int
    node_ids: tuple[int, ...]
    conductivity: NDArray[np.float64]
    cross_section: float = 1.0
    source: float = 0.0
    measure: float = field(default=0.0, compare=False)
    centroid: NDArray[np.float64] = field(
        default_factory=lambda: np.zeros(3), compare=False
    )


@dataclass(frozen=True)
class ElementFace:
    """One facet of one element, with its sorted node tuple.

    ``outward_normal_sign`` relates the element's outward normal to the
    facet's canonical orientation (see :func:`_outward_sign`); it is a
    diagnostic quantity, degree-of-freedom values never depend on it because
    each side of a face carries its own outward-flux unknown.
    """

    element_id: int
    local_face: int
    node_ids: tuple[int, ...]
    measure: float
    outward_normal_sign: int


@dataclass(frozen=True)
class CouplingLink:
    """Geometric coincidence of a lower-dim element with one element face.

    One lower-dimensional element generates one link per adjoining side, so
    a fracture triangle interior to a tetrahedral mesh generates two links.
    ``sigma`` is the pressure-jump transition coefficient of the link and
    ``measure`` the area (or length) of the shared face.
    """

    lower_element: int
    upper_element: int
    upper_local_face: int
    face_nodes: tuple[int, ...]
    measure: float
    sigma: float


@dataclass(frozen=True)
class BoundaryCondition:
    """Condition on one boundary face, identified by sorted node tuple."""

    face_nodes: tuple[int, ...]
    kind: str
    value: float = 0.0

    def __post_init__(self):
        if self.kind not in (NATURAL, ESSENTIAL):
            raise InvalidMeshError(f"unknown boundary kind {self.kind!r}")


# Local faces of a d-simplex: face j is opposite local vertex j.
SIMPLEX_FACES: dict[int, tuple[tuple[int, ...], ...]] = {
    1: ((1,), (0,)),
    2: ((1, 2), (0, 2), (0, 1)),
    3: ((1, 2, 3), (0, 2, 3), (0, 1, 3), (0, 1, 2)),
}


def simplex_measure(coords: NDArray) -> float:
    """Length, area or volume of the simplex spanned by ``coords``.

    ``coords`` has shape ``(d + 1, 3)``. A single point has measure 1 by
    convention (integration over a point is evaluation).
    """
    k = coords.shape[0] - 1
    if k == 0:
        return 1.0
    edges = coords[1:] - coords[0]
    if k == 1:
        return float(np.linalg.norm(edges[0]))
    if k == 2:
        return float(0.5 * np.linalg.norm(np.cross(edges[0], edges[1])))
    if k == 3:
        return float(abs(np.linalg.det(edges)) / 6.0)
    raise InvalidMeshError(f"unsupported simplex dimension {k}")


def tangent_frame(coords: NDArray, dim: int) -> NDArray:
    """Orthonormal basis of the element's tangent space, shape ``(3, dim)``.

    Deterministic Gram-Schmidt on the edge vectors from vertex 0. The first
    axis always points along the first edge.
    """
    edges = (coords[1:] - coords[0]).T  # (3, dim)
    q: list[NDArray] = []
    for j in range(dim):
        v = edges[:, j].copy()
        for u in q:
            v -= (u @ v) * u
        nrm = np.linalg.norm(v)
        if nrm <= 0.0:
            raise InvalidMeshError("degenerate simplex: edges are dependent")
        q.append(v / nrm)
    return np.column_stack(q)


def _outward_sign(el: Element, local_face: int, coords: NDArray) -> int:
    """Sign of the element's outward normal against a canonical orientation.

    For triangle faces of tetrahedra the canonical normal is the cross
    product of the sorted-node edge vectors, which is element independent.
    For lower dimensions a fully element-independent convention does not
    exist (an edge in 3D has no canonical in-plane normal), so the sign is
    taken in the element's own tangent frame. Diagnostic use only.
    """
    pts = coords[list(el.node_ids)]
    face_local = SIMPLEX_FACES[el.dim][local_face]
    face_ids = sorted(el.node_ids[i] for i in face_local)
    fpts = coords[face_ids]
    opposite = pts[local_face]
    if el.dim == 3:
        canon = np.cross(fpts[1] - fpts[0], fpts[2] - fpts[0])
        return 1 if canon @ (fpts.mean(axis=0) - opposite) > 0 else -1
    if el.dim == 2:
        plane_n = np.cross(pts[1] - pts[0], pts[2] - pts[0])
        canon = np.cross(plane_n, fpts[1] - fpts[0])
        return 1 if canon @ (fpts.mean(axis=0) - opposite) > 0 else -1
    # Point face of a segment: +1 when outward means increasing node id.
    return 1 if face_ids[0] > min(el.node_ids) else -1


class Mesh:
    """Immutable-by-contract container of nodes, elements and conditions.

    Validation and derived geometry (measures, centroids, coupling links)
    happen at construction; afterwards the mesh must not be mutated, which
    makes concurrent read access safe.
    """

    def __init__(
        self,
        node_coords: NDArray,
        elements: Sequence[Element],
        boundary_conditions: Sequence[BoundaryCondition] = (),
        gravity_enabled: bool = False,
        transition_coefficient: float = 1.0,
    ):
        self.node_coords = np.asarray(node_coords, dtype=float).reshape(-1, 3)
        self.elements = list(elements)
        self.boundary_conditions = list(boundary_conditions)
        self.gravity_enabled = bool(gravity_enabled)
        self.transition_coefficient = float(transition_coefficient)
        self._validate()
        self.couplings: list[CouplingLink] = detect_couplings(self)

    # -- validation ------------------------------------------------------

    def _validate(self) -> None:
        n_nodes = len(self.node_coords)
        seen: dict[tuple[int, tuple[int, ...]], int] = {}
        for pos, el in enumerate(self.elements):
            if el.id != pos:
                raise InvalidMeshError(
                    f"element ids must be dense and ordered; "
                    f"got id {el.id} at position {pos}"
                )
            if el.dim not in (1, 2, 3):
                raise InvalidMeshError(f"element {el.id}: dimension {el.dim}")
            if len(el.node_ids) != el.dim + 1:
                raise InvalidMeshError(
                    f"element {el.id}: expected {el.dim + 1} nodes, "
                    f"got {len(el.node_ids)}"
                )
            for nid in el.node_ids:
                if not 0 <= nid < n_nodes:
                    raise InvalidMeshError(
                        f"element {el.id}: dangling node reference {nid}"
                    )
            if len(set(el.node_ids)) != len(el.node_ids):
                raise InvalidMeshError(f"element {el.id}: repeated node")
            key = (el.dim, tuple(sorted(el.node_ids)))
            if key in seen:
                raise InvalidMeshError(
                    f"elements {seen[key]} and {el.id} occupy the same simplex"
                )
            seen[key] = el.id
            k = np.asarray(el.conductivity, dtype=float)
            if k.shape != (el.dim, el.dim):
                raise InvalidMeshError(
                    f"element {el.id}: conductivity must be "
                    f"{el.dim}x{el.dim}, got {k.shape}"
                )
            if not np.allclose(k, k.T, rtol=0.0, atol=1e-12 * max(1.0, abs(k).max())):
                raise InvalidMeshError(
                    f"element {el.id}: conductivity tensor is not symmetric"
                )
            if np.linalg.eigvalsh(k).min() <= 0.0:
                raise InvalidMeshError(
                    f"element {el.id}: conductivity tensor is not positive definite"
                )
            el.conductivity = k
            if el.cross_section <= 0.0:
                raise InvalidMeshError(
                    f"element {el.id}: cross-section must be positive"
                )
            pts = self.node_coords[list(el.node_ids)]
            el.measure = simplex_measure(pts)
            if el.measure <= 0.0 or not np.isfinite(el.measure):
                raise InvalidMeshError(f"element {el.id}: degenerate simplex")
            el.centroid = pts.mean(axis=0)
        for bc in self.boundary_conditions:
            for nid in bc.face_nodes:
                if not 0 <= nid < n_nodes:
                    raise InvalidMeshError(
                        f"boundary condition {bc.face_nodes}: dangling node {nid}"
                    )
            if tuple(sorted(bc.face_nodes)) != tuple(bc.face_nodes):
                raise InvalidMeshError(
                    f"boundary condition node tuple {bc.face_nodes} is not sorted"
                )

    # -- derived views ---------------------------------------------------

    @property
    def nodes(self) -> list[Node]:
        return [Node(i, c) for i, c in enumerate(self.node_coords)]

    def element_faces(self, el: Element) -> list[ElementFace]:
        """All facets of one element, with measures and diagnostic signs."""
        out = []
        for lf, locs in enumerate(SIMPLEX_FACES[el.dim]):
            ids = tuple(sorted(el.node_ids[i] for i in locs))
            out.append(
                ElementFace(
                    element_id=el.id,
                    local_face=lf,
                    node_ids=ids,
                    measure=simplex_measure(self.node_coords[list(ids)]),
                    outward_normal_sign=_outward_sign(el, lf, self.node_coords),
                )
            )
        return out

    def side_groups(self) -> dict[tuple[int, tuple[int, ...]], list[tuple[int, int]]]:
        """Group element sides by (element dimension, sorted face nodes).

        The returned lists hold ``(element_id, local_face)`` pairs. A group
        of size one is a boundary face of its dimension's mesh unless the
        face is occupied by a lower-dimensional element.
        """
        groups: dict[tuple[int, tuple[int, ...]], list[tuple[int, int]]] = {}
        for el in self.elements:
            for lf, locs in enumerate(SIMPLEX_FACES[el.dim]):
                key = (el.dim, tuple(sorted(el.node_ids[i] for i in locs)))
                groups.setdefault(key, []).append((el.id, lf))
        return groups

    def max_dim(self) -> int:
        return max(el.dim for el in self.elements)

    def has_natural_bc(self) -> bool:
        return any(bc.kind == NATURAL for bc in self.boundary_conditions)

    def components(self, include_couplings: bool) -> list[list[int]]:
        """Connected components of the element graph, as element-id lists.

        Edges join same-dimension elements sharing an unoccupied face (those
        share a pressure-trace unknown). With ``include_couplings`` the links
        between dimensions join as well, which is the right notion for
        solvability diagnostics; without them, components separated by
        fractures stay separate.
        """
        parent = list(range(len(self.elements)))

        def find(a: int) -> int:
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        def union(a: int, b: int) -> None:
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)

        occupied = {
            (el.dim, tuple(sorted(el.node_ids)))
            for el in self.elements
            if el.dim < 3
        }
        for (dim, nodes), sides in self.side_groups().items():
            if len(sides) < 2:
                continue
            if (dim - 1, nodes) in occupied:
                continue  # fracture face: sides are decoupled here
            first = sides[0][0]
            for eid, _ in sides[1:]:
                union(first, eid)
        if include_couplings:
            for link in self.couplings:
                union(link.lower_element, link.upper_element)
        comps: dict[int, list[int]] = {}
        for eid in range(len(self.elements)):
            comps.setdefault(find(eid), []).append(eid)
        return [comps[r] for r in sorted(comps)]

    def components_without_natural_bc(self, include_couplings: bool) -> list[list[int]]:
        """Components whose boundary carries no natural condition."""
        natural_faces = {
            bc.face_nodes for bc in self.boundary_conditions if bc.kind == NATURAL
        }
        touched: set[int] = set()
        for el in self.elements:
            for lf, locs in enumerate(SIMPLEX_FACES[el.dim]):
                ids = tuple(sorted(el.node_ids[i] for i in locs))
                if ids in natural_faces:
                    touched.add(el.id)
        return [
            comp
            for comp in self.components(include_couplings)
            if not any(e in touched for e in comp)
        ]


def detect_couplings(mesh: Mesh, sigma: float | None = None) -> list[CouplingLink]:
    """Find all lower-dim-element / element-face coincidences.

    Matching is exact on sorted node tuples: a d-dimensional element couples
    to every side of a (d+1)-dimensional element whose facet has the same
    vertices. A lower-dim element matching nothing, in a mesh that does
    contain elements one dimension up, draws a diagnostic warning: it looks
    like a fracture that failed to attach. Purely lower-dimensional meshes
    (a standalone 2D problem, say) warn about nothing.
    """
    if sigma is None:
        sigma = mesh.transition_coefficient
    dims_present = {el.dim for el in mesh.elements}
    # face tuple -> sides, keyed by (face dimension, nodes)
    face_sides: dict[tuple[int, tuple[int, ...]], list[tuple[int, int]]] = {}
    for el in mesh.elements:
        for lf, locs in enumerate(SIMPLEX_FACES[el.dim]):
            key = (el.dim - 1, tuple(sorted(el.node_ids[i] for i in locs)))
            face_sides.setdefault(key, []).append((el.id, lf))
    links: list[CouplingLink] = []
    for el in mesh.elements:
        if el.dim == 3:
            continue
        key = (el.dim, tuple(sorted(el.node_ids)))
        sides = face_sides.get(key, [])
        if not sides and (el.dim + 1) in dims_present:
            warnings.warn(
                f"element {el.id} (dim {el.dim}) matches no face of any "
                f"dim-{el.dim + 1} element; it will not exchange flow with them",
                stacklevel=2,
            )
        for eid, lf in sides:
            links.append(
                CouplingLink(
                    lower_element=el.id,
                    upper_element=eid,
                    upper_local_face=lf,
                    face_nodes=key[1],
                    measure=el.measure,
                    sigma=float(sigma),
                )
            )
    links.sort(key=lambda l: (l.lower_element, l.upper_element, l.upper_local_face))
    return links


# ---------------------------------------------------------------------------
# boundary-condition rules for generators


@dataclass(frozen=True)
class PlaneBC:
    """Marks boundary faces lying on an axis-aligned plane.

    ``value`` may be a constant or a callable evaluated at the face
    barycenter (useful for manufactured solutions).
    """

    axis: int
    position: float
    kind: str
    value: float | Callable[[NDArray], float] = 0.0


@dataclass(frozen=True)
class BCSpec:
    """Ordered plane rules; first match wins, the rest default to essential."""

    rules: tuple[PlaneBC, ...]

    def resolve(self, face_nodes: tuple[int, ...], coords: NDArray) -> BoundaryCondition:
        pts = coords[list(face_nodes)]
        for rule in self.rules:
            if np.all(np.abs(pts[:, rule.axis] - rule.position) <= _PLANE_TOL):
                value = rule.value
                if callable(value):
                    value = float(value(pts.mean(axis=0)))
                return BoundaryCondition(face_nodes, rule.kind, float(value))
        return BoundaryCondition(face_nodes, ESSENTIAL, 0.0)


def default_bc_spec() -> BCSpec:
    """Unit pressure drop along x: p=1 at x=0, p=0 at x=1, no-flow elsewhere."""
    return BCSpec(
        rules=(
            PlaneBC(axis=0, position=0.0, kind=NATURAL, value=1.0),
            PlaneBC(axis=0, position=1.0, kind=NATURAL, value=0.0),
        )
    )


def _as_tensor(conductivity, dim: int, centroid: NDArray) -> NDArray:
    if callable(conductivity):
        k = np.asarray(conductivity(centroid, dim), dtype=float)
        if k.ndim == 0:
            return float(k) * np.eye(dim)
        return k
    k = np.asarray(conductivity, dtype=float)
    if k.ndim == 0:
        return float(k) * np.eye(dim)
    return k


def _boundary_conditions_for(
    coords: NDArray, elements: list[Element], bc_spec: BCSpec
) -> list[BoundaryCondition]:
    """Apply a BCSpec to every unoccupied single-sided face group."""
    groups: dict[tuple[int, tuple[int, ...]], int] = {}
    for el in elements:
        for locs in SIMPLEX_FACES[el.dim]:
            key = (el.dim, tuple(sorted(el.node_ids[i] for i in locs)))
            groups[key] = groups.get(key, 0) + 1
    occupied = {
        (el.dim + 1, tuple(sorted(el.node_ids))) for el in elements if el.dim < 3
    }
    out = []
    for (dim, nodes), count in sorted(groups.items()):
        if count == 1 and (dim, nodes) not in occupied:
            out.append(bc_spec.resolve(nodes, coords))
    return out


# ---------------------------------------------------------------------------
# generators


def generate_unit_square(
    n: int,
    bc_spec: BCSpec | None = None,
    conductivity=1.0,
    cross_section: float = 1.0,
    source=0.0,
    gravity: bool = False,
) -> Mesh:
    """Structured triangulation of the unit square in the z=0 plane.

    The square is an ``n x n`` grid of cells, each split into two triangles
    by the diagonal from the cell's lower-left to upper-right corner, which
    keeps shared edges conforming. ``conductivity`` and ``source`` accept a
    constant or a callable of ``(centroid, dim)`` / ``(centroid)``.
    """
    if n < 1:
        raise ConfigurationError("n must be at least 1")
    xs = np.linspace(0.0, 1.0, n + 1)
    coords = np.array([(x, y, 0.0) for y in xs for x in xs])

    def nid(i: int, j: int) -> int:
        return j * (n + 1) + i

    elements: list[Element] = []
    for j in range(n):
        for i in range(n):
            v00, v10 = nid(i, j), nid(i + 1, j)
            v01, v11 = nid(i, j + 1), nid(i + 1, j + 1)
            for tri in ((v00, v10, v11), (v00, v11, v01)):
                centroid = coords[list(tri)].mean(axis=0)
                elements.append(
                    Element(
                        id=len(elements),
                        dim=2,
                        node_ids=tri,
                        conductivity=_as_tensor(conductivity, 2, centroid),
                        cross_section=cross_section,
                        source=float(source(centroid)) if callable(source) else source,
                    )
                )
    bcs = _boundary_conditions_for(coords, elements, bc_spec or default_bc_spec())
    return Mesh(coords, elements, bcs, gravity_enabled=gravity)


def _cube_nodes(n: int) -> NDArray:
    xs = np.linspace(0.0, 1.0, n + 1)
    return np.array([(x, y, z) for z in xs for y in xs for x in xs])


def _cube_node_id(n: int, i: int, j: int, k: int) -> int:
    return (k * (n + 1) + j) * (n + 1) + i


# Vertex paths of the six tetrahedra splitting a unit cell along its main
# diagonal; each path adds the axes in one of the 3! orders.
_KUHN_ORDERS = (
    (0, 1, 2),
    (0, 2, 1),
    (1, 0, 2),
    (1, 2, 0),
    (2, 0, 1),
    (2, 1, 0),
)


def _cell_tets(n: int, i: int, j: int, k: int) -> list[tuple[int, ...]]:
    base = np.array([i, j, k])
    tets = []
    for order in _KUHN_ORDERS:
        corner = base.copy()
        path = [_cube_node_id(n, *corner)]
        for axis in order:
            corner[axis] += 1
            path.append(_cube_node_id(n, *corner))
        tets.append(tuple(path))
    return tets


def generate_unit_cube(
    n: int,
    bc_spec: BCSpec | None = None,
    conductivity=1.0,
    cross_section: float = 1.0,
    source=0.0,
    gravity: bool = False,
) -> Mesh:
    """Structured tetrahedralization of the unit cube.

    Each of the ``n**3`` cells splits into six tetrahedra around its main
    diagonal; identical diagonal orientation in every cell makes the mesh
    conforming across cell boundaries.
    """
    if n < 1:
        raise ConfigurationError("n must be at least 1")
    coords = _cube_nodes(n)
    elements: list[Element] = []
    for k in range(n):
        for j in range(n):
            for i in range(n):
                for tet in _cell_tets(n, i, j, k):
                    centroid = coords[list(tet)].mean(axis=0)
                    elements.append(
                        Element(
                            id=len(elements),
                            dim=3,
                            node_ids=tet,
                            conductivity=_as_tensor(conductivity, 3, centroid),
                            cross_section=cross_section,
                            source=float(source(centroid)) if callable(source) else source,
                        )
                    )
    bcs = _boundary_conditions_for(coords, elements, bc_spec or default_bc_spec())
    return Mesh(coords, elements, bcs, gravity_enabled=gravity)


def generate_cross_fracture_cube(
    n: int,
    k1: float = 10.0,
    k2: float = 1.0,
    k3: float = 0.1,
    sigma: float = 1.0,
    bc_spec: BCSpec | None = None,
    delta1: float = 1.0,
    delta2: float = 1.0,
    delta3: float = 1.0,
    gravity: bool = False,
) -> Mesh:
    """Unit cube crossed by two fracture planes and their intersection line.

    Fracture planes sit at x=0.5 and y=0.5; their intersection, the line
    x=y=0.5, carries 1D channel elements. ``n`` must be even so mesh nodes
    exist on both planes and on the line. ``k1``/``k2``/``k3`` are isotropic
    conductivities of the 1D, 2D and 3D elements; ``sigma`` is the interface
    transition coefficient shared by every coupling link.
    """
    if n < 2 or n % 2 != 0:
        raise ConfigurationError("cross-fracture cube requires an even n >= 2")
    coords = _cube_nodes(n)
    elements: list[Element] = []
    for k in range(n):
        for j in range(n):
            for i in range(n):
                for tet in _cell_tets(n, i, j, k):
                    elements.append(
                        Element(
                            id=len(elements),
                            dim=3,
                            node_ids=tet,
                            conductivity=k3 * np.eye(3),
                            cross_section=delta3,
                        )
                    )
    # Fracture triangles reuse the tetrahedral face tuples found on each
    # plane, so coincidence with both adjoining tetrahedra is exact.
    plane_faces: set[tuple[int, ...]] = set()
    for el in elements:
        for locs in SIMPLEX_FACES[3]:
            ids = tuple(sorted(el.node_ids[i] for i in locs))
            for axis in (0, 1):
                if np.all(np.abs(coords[list(ids), axis] - 0.5) <= _PLANE_TOL):
                    plane_faces.add(ids)
    for ids in sorted(plane_faces):
        elements.append(
            Element(
                id=len(elements),
                dim=2,
                node_ids=ids,
                conductivity=k2 * np.eye(2),
                cross_section=delta2,
            )
        )
    # Channel segments along x = y = 0.5.
    mid = n // 2
    for k in range(n):
        pair = (
            _cube_node_id(n, mid, mid, k),
            _cube_node_id(n, mid, mid, k + 1),
        )
        elements.append(
            Element(
                id=len(elements),
                dim=1,
                node_ids=pair,
                conductivity=k1 * np.eye(1),
                cross_section=delta1,
            )
        )
    bcs = _boundary_conditions_for(coords, elements, bc_spec or default_bc_spec())
    return Mesh(
        coords,
        elements,
        bcs,
        gravity_enabled=gravity,
        transition_coefficient=sigma,
    )


# ---------------------------------------------------------------------------
# plain-text mesh format

_FMT = "%.17g"


def _fmt(x: float) -> str:
    return _FMT % x


def _tensor_entries(k: NDArray) -> list[float]:
    """Symmetric upper triangle, row-wise: 1, 3 or 6 numbers."""
    dim = k.shape[0]
    return [k[i, j] for i in range(dim) for j in range(i, dim)]


def _tensor_from_entries(vals: list[float], dim: int) -> NDArray:
    k = np.zeros((dim, dim))
    it = iter(vals)
    for i in range(dim):
        for j in range(i, dim):
            k[i, j] = k[j, i] = next(it)
    return k


def write_mesh(mesh: Mesh, path: str) -> None:
    """Write the plain-text mesh format.

    Sections: ``$params`` (gravity flag, transition coefficient), ``$nodes``
    (id x y z), ``$elements`` (id dim nodes..., upper-triangle conductivity,
    cross-section, source), ``$boundary`` (node tuple, kind, value), ``$end``.
    Floats use 17 significant digits and round-trip exactly.
    """
    lines = ["# mixed-dimensional mesh"]
    lines.append("$params")
    lines.append(f"gravity {1 if mesh.gravity_enabled else 0}")
    lines.append(f"sigma {_fmt(mesh.transition_coefficient)}")
    lines.append("$nodes")
    for i, c in enumerate(mesh.node_coords):
        lines.append(f"{i} {_fmt(c[0])} {_fmt(c[1])} {_fmt(c[2])}")
    lines.append("$elements")
    for el in mesh.elements:
        fields = [str(el.id), str(el.dim)]
        fields += [str(v) for v in el.node_ids]
        fields += [_fmt(v) for v in _tensor_entries(el.conductivity)]
        fields += [_fmt(el.cross_section), _fmt(el.source)]
        lines.append(" ".join(fields))
    lines.append("$boundary")
    for bc in mesh.boundary_conditions:
        fields = [str(v) for v in bc.face_nodes]
        fields += [bc.kind, _fmt(bc.value)]
        lines.append(" ".join(fields))
    lines.append("$end")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_mesh(path: str) -> Mesh:
    """Parse the plain-text mesh format written by :func:`write_mesh`.

    Raises :class:`MeshFormatError` with a 1-based line number on malformed
    input; structural problems surface as :class:`InvalidMeshError` from the
    mesh constructor.
    """
    section = None
    gravity = False
    sigma = 1.0
    node_rows: list[tuple[int, NDArray]] = []
    elements: list[Element] = []
    bcs: list[BoundaryCondition] = []
    n_tensor = {1: 1, 2: 3, 3: 6}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if line.startswith("$"):
                name = line[1:].strip()
                if name == "end":
                    section = "end"
                    break
                if name not in ("params", "nodes", "elements", "boundary"):
                    raise MeshFormatError(f"unknown section ${name}", lineno)
                section = name
                continue
            tok = line.split()
            try:
                if section == "params":
                    if tok[0] == "gravity":
                        gravity = bool(int(tok[1]))
                    elif tok[0] == "sigma":
                        sigma = float(tok[1])
                    else:
                        raise MeshFormatError(f"unknown parameter {tok[0]!r}", lineno)
                elif section == "nodes":
                    if len(tok) != 4:
                        raise MeshFormatError("node line needs: id x y z", lineno)
                    node_rows.append((int(tok[0]), np.array([float(v) for v in tok[1:]])))
                elif section == "elements":
                    eid, dim = int(tok[0]), int(tok[1])
                    if dim not in (1, 2, 3):
                        raise MeshFormatError(f"element dimension {dim}", lineno)
                    n_nodes = dim + 1
                    expect = 2 + n_nodes + n_tensor[dim] + 2
                    if len(tok) != expect:
                        raise MeshFormatError(
                            f"element line needs {expect} fields, got {len(tok)}",
                            lineno,
                        )
                    node_ids = tuple(int(v) for v in tok[2 : 2 + n_nodes])
                    for nid in node_ids:
                        if not 0 <= nid < len(node_rows):
                            raise MeshFormatError(
                                f"dangling node reference {nid}", lineno
                            )
                    vals = [float(v) for v in tok[2 + n_nodes :]]
                    tensor = _tensor_from_entries(vals[: n_tensor[dim]], dim)
                    if np.linalg.eigvalsh(tensor).min() <= 0.0:
                        raise MeshFormatError(
                            f"element {eid}: conductivity tensor is not "
                            f"positive definite",
                            lineno,
                        )
                    elements.append(
                        Element(
                            id=eid,
                            dim=dim,
                            node_ids=node_ids,
                            conductivity=tensor,
                            cross_section=vals[-2],
                            source=vals[-1],
                        )
                    )
                elif section == "boundary":
                    if len(tok) < 3:
                        raise MeshFormatError(
                            "boundary line needs: nodes... kind value", lineno
                        )
                    kind, value = tok[-2], float(tok[-1])
                    if kind not in (NATURAL, ESSENTIAL):
                        raise MeshFormatError(f"unknown boundary kind {kind!r}", lineno)
                    nodes = tuple(int(v) for v in tok[:-2])
                    for nid in nodes:
                        if not 0 <= nid < len(node_rows):
                            raise MeshFormatError(f"dangling node reference {nid}", lineno)
                    bcs.append(BoundaryCondition(nodes, kind, value))
                else:
                    raise MeshFormatError("data before any section header", lineno)
            except MeshFormatError:
                raise
            except (ValueError, IndexError) as exc:
                raise MeshFormatError(str(exc), lineno) from exc
    if section != "end":
        raise MeshFormatError("missing $end marker")
    coords = np.zeros((len(node_rows), 3))
    seen_ids = set()
    for nid, c in node_rows:
        if nid in seen_ids or not 0 <= nid < len(node_rows):
            raise MeshFormatError(f"node ids must be dense and unique, got {nid}")
        seen_ids.add(nid)
        coords[nid] = c
    return Mesh(
        coords,
        elements,
        bcs,
        gravity_enabled=gravity,
        transition_coefficient=sigma,
    )


def meshes_equal(a: Mesh, b: Mesh) -> bool:
    """Exact field-for-field identity, used by round-trip tests."""
    if (
        a.node_coords.shape != b.node_coords.shape
        or not np.array_equal(a.node_coords, b.node_coords)
        or len(a.elements) != len(b.elements)
        or a.gravity_enabled != b.gravity_enabled
        or a.transition_coefficient != b.transition_coefficient
    ):
        return False
    for ea, eb in zip(a.elements, b.elements):
        if (
            ea.id != eb.id
            or ea.dim != eb.dim
            or ea.node_ids != eb.node_ids
            or not np.array_equal(ea.conductivity, eb.conductivity)
            or ea.cross_section != eb.cross_section
            or ea.source != eb.source
        ):
            return False
    return a.boundary_conditions == b.boundary_conditions
