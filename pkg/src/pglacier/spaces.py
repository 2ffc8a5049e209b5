"""Taylor-Hood and coefficient spaces on tagged triangle meshes.

Velocity lives in the quadratic vector element (dofs at vertices and
edge midpoints), pressure and the distributed rheology coefficient in
the linear element on vertices, and the friction coefficient in the
linear element on the bed chain vertices.

Velocity constraints are strong: every dof on a dirichlet edge is fixed
to zero, and on the bed the normal component vanishes.  Bed constraints
are installed by rotating the dof pair at each bed node into a local
tangent/normal frame; midpoint nodes use the exact edge normal, vertices
the unit-normalized sum of adjacent bed edge normals.  Dirichlet wins at
corners shared with the bed, the bed wins over the free surface.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum, IntEnum

import numpy as np
import scipy.sparse as sp

from .mesh import BoundaryTag, Mesh, boundary_geometry


class SpaceKind(Enum):
    VELOCITY_P2_VEC = "velocity_p2_vec"
    PRESSURE_P1 = "pressure_p1"
    COEFF_OMEGA_P1 = "coeff_omega_p1"
    COEFF_BASAL_P1 = "coeff_basal_p1"


class NodeConstraint(IntEnum):
    FREE = 0
    FIXED = 1
    SLIP = 2


@dataclass(frozen=True)
class Quadrature:
    """Fixed quadrature rules on the reference triangle and edge.

    Triangle weights sum to the reference area 1/2 and the rule is exact
    for polynomials of degree 4; edge weights sum to 1 on [0, 1].
    """

    tri_points: np.ndarray
    tri_weights: np.ndarray
    edge_points: np.ndarray
    edge_weights: np.ndarray


def default_quadrature():
    """Degree-4 six-point triangle rule and 3-point Gauss edge rule."""
    a1, b1, w1 = 0.445948490915965, 0.108103018168070, 0.223381589678011
    a2, b2, w2 = 0.091576213509771, 0.816847572980459, 0.109951743655322
    bary = np.array([
        [b1, a1, a1], [a1, b1, a1], [a1, a1, b1],
        [b2, a2, a2], [a2, b2, a2], [a2, a2, b2],
    ])
    tri_points = bary[:, 1:]                  # reference coords (xi, eta)
    tri_weights = 0.5 * np.array([w1, w1, w1, w2, w2, w2])
    g = 0.5 * np.sqrt(3.0 / 5.0)
    edge_points = np.array([0.5 - g, 0.5, 0.5 + g])
    edge_weights = np.array([5.0, 8.0, 5.0]) / 18.0
    return Quadrature(tri_points, tri_weights, edge_points, edge_weights)


def p2_values(points):
    """Quadratic basis values at reference points, shape (nq, 6).

    Basis order: three vertex functions, then midpoints of local edges
    (0,1), (1,2), (2,0).
    """
    xi, eta = points[:, 0], points[:, 1]
    lam = np.stack([1.0 - xi - eta, xi, eta], axis=1)
    vals = np.empty((points.shape[0], 6))
    for k in range(3):
        vals[:, k] = lam[:, k] * (2.0 * lam[:, k] - 1.0)
    vals[:, 3] = 4.0 * lam[:, 0] * lam[:, 1]
    vals[:, 4] = 4.0 * lam[:, 1] * lam[:, 2]
    vals[:, 5] = 4.0 * lam[:, 2] * lam[:, 0]
    return vals


def p2_reference_gradients(points):
    """Quadratic basis gradients at reference points, shape (nq, 6, 2)."""
    xi, eta = points[:, 0], points[:, 1]
    lam = np.stack([1.0 - xi - eta, xi, eta], axis=1)
    dlam = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    grads = np.empty((points.shape[0], 6, 2))
    for k in range(3):
        grads[:, k, :] = (4.0 * lam[:, k] - 1.0)[:, None] * dlam[k]
    pairs = ((3, 0, 1), (4, 1, 2), (5, 2, 0))
    for slot, a, b in pairs:
        grads[:, slot, :] = 4.0 * (lam[:, a][:, None] * dlam[b] + lam[:, b][:, None] * dlam[a])
    return grads


def p1_values(points):
    """Linear basis values at reference points, shape (nq, 3)."""
    xi, eta = points[:, 0], points[:, 1]
    return np.stack([1.0 - xi - eta, xi, eta], axis=1)


def p2_edge_trace(s):
    """1D quadratic basis on an edge at parameters s, shape (m, 3).

    Column order: endpoint at s = 0, endpoint at s = 1, midpoint.
    """
    s = np.asarray(s)
    return np.stack([(1.0 - s) * (1.0 - 2.0 * s), s * (2.0 * s - 1.0),
                     4.0 * s * (1.0 - s)], axis=1)


@dataclass
class FunctionSpace:
    """One discrete space tied to a mesh.

    ``dof_count`` counts unconstrained dofs; constraints are tracked on
    the parent bundle and never reduce this number.
    """

    kind: SpaceKind
    mesh: Mesh
    dof_count: int
    parent: "Spaces" = field(default=None, repr=False)
    # velocity only
    node_coords: np.ndarray = field(default=None, repr=False)
    # basal coefficient only
    basal_vertices: np.ndarray = field(default=None, repr=False)
    basal_coords: np.ndarray = field(default=None, repr=False)


@dataclass
class Field:
    """Coefficient vector in one function space."""

    space: FunctionSpace
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (self.space.dof_count,):
            raise ValueError("field has %d values, space %s needs %d"
                             % (self.values.size, self.space.kind.value,
                                self.space.dof_count))

    def copy(self):
        return Field(self.space, self.values.copy())


def zero_field(space):
    return Field(space, np.zeros(space.dof_count))


def constant_field(space, value):
    return Field(space, np.full(space.dof_count, float(value)))


def field_from_callable(space, fn):
    """Interpolate ``fn`` at the dof locations of ``space``.

    Velocity takes ``fn(x, y) -> (vx, vy)``; scalar spaces take
    ``fn(x, y) -> value``.
    """
    if space.kind is SpaceKind.VELOCITY_P2_VEC:
        vals = np.array([fn(x, y) for x, y in space.node_coords], dtype=np.float64)
        return Field(space, vals.reshape(-1))
    if space.kind in (SpaceKind.PRESSURE_P1, SpaceKind.COEFF_OMEGA_P1):
        vals = np.array([fn(x, y) for x, y in space.mesh.vertices], dtype=np.float64)
        return Field(space, vals)
    vals = np.array([fn(x, y) for x, y in space.basal_coords], dtype=np.float64)
    return Field(space, vals)


@dataclass
class VelocityConstraints:
    """Strong constraints on the quadratic velocity space.

    ``rotation`` is orthogonal: identity except 2x2 blocks [t | n] at
    slip nodes, so rotated dof 2k holds the tangential and 2k + 1 the
    normal component.  ``constrained`` marks rotated dofs eliminated to
    zero (both components of fixed nodes, normal components of slip
    nodes).
    """

    kinds: np.ndarray
    normals: np.ndarray
    tangents: np.ndarray
    rotation: sp.csr_matrix
    constrained: np.ndarray

    def apply(self, values):
        """Project velocity dof values onto the constraint set."""
        rotated = self.rotation.T @ values
        rotated[self.constrained] = 0.0
        return self.rotation @ rotated

    def satisfies(self, values, tol=0.0):
        rotated = self.rotation.T @ values
        return np.all(np.abs(rotated[self.constrained]) <= tol)


def _build_constraints(mesh, n_vertices, edge_ids, bedge_midnodes):
    n_nodes = n_vertices + len(edge_ids)
    kinds = np.zeros(n_nodes, dtype=np.int8)
    normals = np.zeros((n_nodes, 2))
    tangents = np.zeros((n_nodes, 2))

    geoms = boundary_geometry(mesh)
    dirichlet = mesh.edges_with_tag(BoundaryTag.DIRICHLET)
    basal = mesh.edges_with_tag(BoundaryTag.BASAL)

    for e in dirichlet:
        i, j = mesh.boundary_edges[e]
        kinds[i] = kinds[j] = NodeConstraint.FIXED
        kinds[bedge_midnodes[e]] = NodeConstraint.FIXED

    # Vertex normals on the bed: unit-normalized sum over adjacent bed edges.
    vertex_sum = {}
    for e in basal:
        for v in mesh.boundary_edges[e]:
            vertex_sum.setdefault(int(v), np.zeros(2))
            vertex_sum[int(v)] += geoms[e].normal
    for e in basal:
        for node in (*mesh.boundary_edges[e], bedge_midnodes[e]):
            node = int(node)
            if kinds[node] == NodeConstraint.FIXED:
                continue          # dirichlet wins at shared corners
            kinds[node] = NodeConstraint.SLIP
            if node < n_vertices:
                n = vertex_sum[node]
                n = n / np.hypot(n[0], n[1])
            else:
                n = geoms[e].normal
            normals[node] = n
            tangents[node] = (-n[1], n[0])

    rows, cols, data = [], [], []
    constrained = np.zeros(2 * n_nodes, dtype=bool)
    for node in range(n_nodes):
        k = kinds[node]
        if k == NodeConstraint.SLIP:
            t, n = tangents[node], normals[node]
            rows.extend([2 * node, 2 * node + 1, 2 * node, 2 * node + 1])
            cols.extend([2 * node, 2 * node, 2 * node + 1, 2 * node + 1])
            data.extend([t[0], t[1], n[0], n[1]])
            constrained[2 * node + 1] = True
        else:
            rows.extend([2 * node, 2 * node + 1])
            cols.extend([2 * node, 2 * node + 1])
            data.extend([1.0, 1.0])
            if k == NodeConstraint.FIXED:
                constrained[2 * node] = True
                constrained[2 * node + 1] = True
    rotation = sp.csr_matrix((data, (rows, cols)), shape=(2 * n_nodes, 2 * n_nodes))
    return VelocityConstraints(kinds, normals, tangents, rotation, constrained)


class Spaces:
    """Bundle of the four spaces plus shared element tables.

    Built once per mesh by :func:`build_spaces`.  Holds the unique-edge
    table, physical basis gradients at quadrature points, boundary edge
    node triples and geometry, the velocity constraint set, and lazily
    cached matrices used for assembly and regularization.
    """

    def __init__(self, mesh, quadrature=None):
        self.mesh = mesh
        self.quadrature = quadrature or default_quadrature()
        nv = mesh.num_vertices
        nt = mesh.num_triangles

        # Unique edge table; midpoint node ids are nv + edge_id.
        edge_index = {}
        tri_edges = np.empty((nt, 3), dtype=np.int64)
        edge_list = []
        for t in range(nt):
            tri = mesh.triangles[t]
            for slot, (a, b) in enumerate(((0, 1), (1, 2), (2, 0))):
                key = (min(tri[a], tri[b]), max(tri[a], tri[b]))
                eid = edge_index.get(key)
                if eid is None:
                    eid = len(edge_list)
                    edge_index[key] = eid
                    edge_list.append(key)
                tri_edges[t, slot] = eid
        self.edges = np.array(edge_list, dtype=np.int64)
        self.tri_edges = tri_edges
        ne = len(edge_list)
        self.n_vnodes = nv + ne

        self.node_coords = np.vstack([
            mesh.vertices,
            0.5 * (mesh.vertices[self.edges[:, 0]] + mesh.vertices[self.edges[:, 1]]),
        ])

        # P2 node ids per triangle: vertices then midpoints of (0,1), (1,2), (2,0).
        self.tri_p2_nodes = np.hstack([mesh.triangles, nv + tri_edges])
        self.tri_vel_dofs = (2 * self.tri_p2_nodes[:, :, None]
                             + np.arange(2)[None, None, :]).reshape(nt, 12)

        # Affine maps and physical basis gradients.
        a = mesh.vertices[mesh.triangles[:, 0]]
        b = mesh.vertices[mesh.triangles[:, 1]]
        c = mesh.vertices[mesh.triangles[:, 2]]
        jac = np.empty((nt, 2, 2))
        jac[:, :, 0] = b - a
        jac[:, :, 1] = c - a
        self.det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
        inv_t = np.empty_like(jac)          # inverse transpose of the map
        inv_t[:, 0, 0] = jac[:, 1, 1]
        inv_t[:, 0, 1] = -jac[:, 1, 0]
        inv_t[:, 1, 0] = -jac[:, 0, 1]
        inv_t[:, 1, 1] = jac[:, 0, 0]
        inv_t /= self.det[:, None, None]

        q = self.quadrature
        self.p2_vals = p2_values(q.tri_points)
        self.p1_vals = p1_values(q.tri_points)
        ref_grads = p2_reference_gradients(q.tri_points)
        # phys_grads[t, q, a, :] = inv_t[t] @ ref_grads[q, a, :]
        self.phys_grads = np.einsum("tij,qaj->tqai", inv_t, ref_grads)
        p1_ref = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
        self.p1_grads = np.einsum("tij,aj->tai", inv_t, p1_ref)
        self.qpoints_xy = (a[:, None, :]
                           + np.einsum("tij,qj->tqi", jac, q.tri_points))

        # Boundary edge tables: P2 node triple (first endpoint, second
        # endpoint, midpoint), length, outward normal, tangent, and the
        # physical edge quadrature points.
        geoms = boundary_geometry(mesh)
        nb = mesh.num_boundary_edges
        self.bedge_nodes = np.empty((nb, 3), dtype=np.int64)
        self.bedge_lengths = np.empty(nb)
        self.bedge_normals = np.empty((nb, 2))
        self.bedge_tangents = np.empty((nb, 2))
        for e in range(nb):
            i, j = mesh.boundary_edges[e]
            key = (min(i, j), max(i, j))
            self.bedge_nodes[e] = (i, j, nv + edge_index[key])
            self.bedge_lengths[e] = geoms[e].length
            self.bedge_normals[e] = geoms[e].normal
            self.bedge_tangents[e] = geoms[e].tangent
        s = q.edge_points
        self.edge_trace_vals = p2_edge_trace(s)
        v0 = mesh.vertices[mesh.boundary_edges[:, 0]]
        v1 = mesh.vertices[mesh.boundary_edges[:, 1]]
        self.bedge_qxy = v0[:, None, :] + s[None, :, None] * (v1 - v0)[:, None, :]

        self.constraints = _build_constraints(
            mesh, nv, self.edges, {e: self.bedge_nodes[e, 2] for e in range(nb)})

        # Bed chain for the friction space, ordered by (x, y).
        basal = mesh.edges_with_tag(BoundaryTag.BASAL)
        bverts = np.unique(mesh.boundary_edges[basal].reshape(-1))
        order = np.lexsort((mesh.vertices[bverts, 1], mesh.vertices[bverts, 0]))
        self.basal_vertex_ids = bverts[order]
        self.basal_dof_of_vertex = {int(v): k for k, v in enumerate(self.basal_vertex_ids)}
        self.basal_edge_indices = basal
        self.basal_edge_dofs = np.array(
            [[self.basal_dof_of_vertex[int(i)], self.basal_dof_of_vertex[int(j)]]
             for i, j in mesh.boundary_edges[basal]], dtype=np.int64)

        self.velocity = FunctionSpace(SpaceKind.VELOCITY_P2_VEC, mesh,
                                      2 * self.n_vnodes,
                                      node_coords=self.node_coords)
        self.pressure = FunctionSpace(SpaceKind.PRESSURE_P1, mesh, nv)
        self.coeff_omega = FunctionSpace(SpaceKind.COEFF_OMEGA_P1, mesh, nv)
        self.coeff_basal = FunctionSpace(
            SpaceKind.COEFF_BASAL_P1, mesh, len(self.basal_vertex_ids),
            basal_vertices=self.basal_vertex_ids,
            basal_coords=mesh.vertices[self.basal_vertex_ids])
        for space in (self.velocity, self.pressure, self.coeff_omega, self.coeff_basal):
            space.parent = self

        self.n_u = 2 * self.n_vnodes
        self.n_sys = self.n_u + nv
        self.sys_rotation = sp.block_diag(
            [self.constraints.rotation, sp.identity(nv, format="csr")], format="csr")
        self.sys_constrained = np.concatenate(
            [self.constraints.constrained, np.zeros(nv, dtype=bool)])
        self._cache = {}

    # -- constraint plumbing on full system vectors/matrices ------------

    def reduce_vector(self, vec):
        """Rotate a dual/system vector and zero its constrained entries."""
        out = self.sys_rotation.T @ vec
        out[self.sys_constrained] = 0.0
        return out

    def expand_vector(self, reduced):
        """Back from the rotated frame to plain x/y components."""
        return self.sys_rotation @ reduced

    def eliminate(self, matrix):
        """Symmetric row/column elimination with unit diagonal.

        Rotates into the tangent/normal frame, zeroes constrained rows
        and columns, and puts 1 on the eliminated diagonal so the
        reduced operator stays symmetric and nonsingular.
        """
        rotated = (self.sys_rotation.T @ matrix @ self.sys_rotation).tocsr()
        keep = sp.diags((~self.sys_constrained).astype(np.float64))
        fill = sp.diags(self.sys_constrained.astype(np.float64))
        return (keep @ rotated @ keep + fill).tocsr()

    def project_dual(self, vec):
        """Zero the constrained components of a dual vector in place of
        its rotated frame; pairing with constraint-satisfying fields is
        unchanged."""
        return self.expand_vector(self.reduce_vector(vec))


def build_spaces(mesh, quadrature=None):
    """Build the four-space bundle on ``mesh``.

    Returns
    -------
    Spaces with attributes ``velocity``, ``pressure``, ``coeff_omega``
    and ``coeff_basal``.
    """
    return Spaces(mesh, quadrature)


# -- evaluation helpers used by assembly, norms and observation --------


def velocity_local_coeffs(field):
    """Velocity dof values per triangle, shape (nt, 6, 2)."""
    sp_ = field.space.parent
    return field.values.reshape(-1, 2)[sp_.tri_p2_nodes]


def velocity_values_at_quadrature(field):
    """Velocity at the triangle quadrature points, shape (nt, nq, 2)."""
    sp_ = field.space.parent
    return np.einsum("qa,tac->tqc", sp_.p2_vals, velocity_local_coeffs(field))


def velocity_gradients_at_quadrature(field):
    """Velocity gradient (rows are components) at quadrature points,
    shape (nt, nq, 2, 2) with entry [i, j] = d v_i / d x_j."""
    sp_ = field.space.parent
    return np.einsum("tac,tqaj->tqcj", velocity_local_coeffs(field), sp_.phys_grads)


def scalar_values_at_quadrature(field):
    """Vertex-based scalar at the triangle quadrature points, (nt, nq)."""
    sp_ = field.space.parent
    return np.einsum("qk,tk->tq", sp_.p1_vals, field.values[field.space.mesh.triangles])


def scalar_gradients(field):
    """Per-triangle constant gradient of a vertex-based scalar, (nt, 2)."""
    sp_ = field.space.parent
    return np.einsum("tk,tki->ti", field.values[field.space.mesh.triangles], sp_.p1_grads)


def velocity_trace(field, edge_indices):
    """Velocity samples at edge quadrature points of the given boundary
    edges, shape (len(edge_indices), m, 2)."""
    sp_ = field.space.parent
    nodes = sp_.bedge_nodes[edge_indices]               # (k, 3)
    coeffs = field.values.reshape(-1, 2)[nodes]         # (k, 3, 2)
    return np.einsum("ma,kac->kmc", sp_.edge_trace_vals, coeffs)


def basal_coeff_on_edges(field):
    """Friction coefficient at bed-edge quadrature points, (n_bed, m)."""
    sp_ = field.space.parent
    s = sp_.quadrature.edge_points
    vals = field.values[sp_.basal_edge_dofs]            # (n_bed, 2)
    return vals[:, 0][:, None] * (1.0 - s)[None, :] + vals[:, 1][:, None] * s[None, :]


def evaluate_gradient_at_quadrature(field, tri, qpoint):
    """Gradient of ``field`` at one triangle quadrature point.

    Velocity returns a 2x2 matrix with entry [i, j] = d v_i / d x_j;
    vertex-based scalars return a 2-vector.
    """
    sp_ = field.space.parent
    kind = field.space.kind
    if kind is SpaceKind.VELOCITY_P2_VEC:
        coeffs = field.values.reshape(-1, 2)[sp_.tri_p2_nodes[tri]]
        return np.einsum("ac,aj->cj", coeffs, sp_.phys_grads[tri, qpoint])
    if kind in (SpaceKind.PRESSURE_P1, SpaceKind.COEFF_OMEGA_P1):
        return np.einsum("k,ki->i", field.values[field.space.mesh.triangles[tri]],
                         sp_.p1_grads[tri])
    raise ValueError("gradient at triangle quadrature unsupported for %s" % kind.value)


def trace_on_edges(field, edge_indices):
    """Sample a field at the edge quadrature points of boundary edges.

    Velocity gives shape (k, m, 2); vertex-based scalars (k, m).
    ``edge_indices`` index the mesh boundary list.
    """
    edge_indices = np.asarray(edge_indices, dtype=np.int64)
    nb = field.space.mesh.num_boundary_edges
    if edge_indices.size and (edge_indices.min() < 0 or edge_indices.max() >= nb):
        raise ValueError("edge index out of range: boundary list has %d edges" % nb)
    kind = field.space.kind
    if kind is SpaceKind.VELOCITY_P2_VEC:
        return velocity_trace(field, edge_indices)
    if kind in (SpaceKind.PRESSURE_P1, SpaceKind.COEFF_OMEGA_P1):
        sp_ = field.space.parent
        ends = field.values[field.space.mesh.boundary_edges[edge_indices]]  # (k, 2)
        s = sp_.quadrature.edge_points
        return ends[:, 0][:, None] * (1.0 - s)[None, :] + ends[:, 1][:, None] * s[None, :]
    raise ValueError("trace on mesh boundary unsupported for %s" % kind.value)


# -- norms -------------------------------------------------------------


def _omega_quad_integral(spaces, pointwise):
    """Sum w * |det| * pointwise over all triangles and points."""
    w = spaces.quadrature.tri_weights
    return float(np.einsum("q,t,tq->", w, spaces.det, pointwise))


def _basal_quad_integral(spaces, pointwise):
    w = spaces.quadrature.edge_weights
    lengths = spaces.bedge_lengths[spaces.basal_edge_indices]
    return float(np.einsum("m,k,km->", w, lengths, pointwise))


def norm(field, which, r=None):
    """Norm of a field.

    Parameters
    ----------
    field : Field
    which : str
        One of ``L2``, ``V2_seminorm``, ``H1``, ``Lr_omega``,
        ``Lr_basal``.  The Lr variants need the exponent ``r``.
    r : float, optional
        Exponent for the Lr norms, r >= 1.

    Notes
    -----
    The V2 seminorm is the L2 norm of the full gradient (all partial
    derivatives).  Basal fields use arc-length integrals along the bed
    chain.  Unsupported pairings raise ValueError.
    """
    kind = field.space.kind
    spaces = field.space.parent
    if which in ("Lr_omega", "Lr_basal"):
        if r is None or r < 1:
            raise ValueError("Lr norm needs an exponent r >= 1")

    if kind is SpaceKind.VELOCITY_P2_VEC:
        if which == "L2":
            v = velocity_values_at_quadrature(field)
            return float(np.sqrt(_omega_quad_integral(spaces, (v ** 2).sum(axis=2))))
        if which == "V2_seminorm":
            g = velocity_gradients_at_quadrature(field)
            return float(np.sqrt(_omega_quad_integral(spaces, (g ** 2).sum(axis=(2, 3)))))
        if which == "H1":
            v = velocity_values_at_quadrature(field)
            g = velocity_gradients_at_quadrature(field)
            return float(np.sqrt(_omega_quad_integral(
                spaces, (v ** 2).sum(axis=2) + (g ** 2).sum(axis=(2, 3)))))
        if which == "Lr_omega":
            v = velocity_values_at_quadrature(field)
            mag = np.sqrt((v ** 2).sum(axis=2))
            return _omega_quad_integral(spaces, mag ** r) ** (1.0 / r)
    elif kind in (SpaceKind.PRESSURE_P1, SpaceKind.COEFF_OMEGA_P1):
        if which == "L2":
            v = scalar_values_at_quadrature(field)
            return float(np.sqrt(_omega_quad_integral(spaces, v ** 2)))
        if which == "V2_seminorm":
            g = scalar_gradients(field)
            mag2 = np.broadcast_to(((g ** 2).sum(axis=1))[:, None],
                                   (spaces.mesh.num_triangles,
                                    spaces.quadrature.tri_weights.size))
            return float(np.sqrt(_omega_quad_integral(spaces, mag2)))
        if which == "H1":
            v = scalar_values_at_quadrature(field)
            g = scalar_gradients(field)
            return float(np.sqrt(_omega_quad_integral(
                spaces, v ** 2 + ((g ** 2).sum(axis=1))[:, None])))
        if which == "Lr_omega":
            v = scalar_values_at_quadrature(field)
            return _omega_quad_integral(spaces, np.abs(v) ** r) ** (1.0 / r)
    elif kind is SpaceKind.COEFF_BASAL_P1:
        vals = basal_coeff_on_edges(field)
        lengths = spaces.bedge_lengths[spaces.basal_edge_indices]
        if which == "L2":
            return float(np.sqrt(_basal_quad_integral(spaces, vals ** 2)))
        if which == "Lr_basal":
            return _basal_quad_integral(spaces, np.abs(vals) ** r) ** (1.0 / r)
        if which == "V2_seminorm":
            ends = field.values[spaces.basal_edge_dofs]
            slope = (ends[:, 1] - ends[:, 0]) / lengths
            return float(np.sqrt((slope ** 2 * lengths).sum()))
        if which == "H1":
            ends = field.values[spaces.basal_edge_dofs]
            slope = (ends[:, 1] - ends[:, 0]) / lengths
            return float(np.sqrt(_basal_quad_integral(spaces, vals ** 2)
                                 + float((slope ** 2 * lengths).sum())))
    raise ValueError("norm %r unsupported for space %s" % (which, kind.value))
