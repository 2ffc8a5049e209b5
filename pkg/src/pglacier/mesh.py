"""Triangle meshes of glacier cross-sections with tagged boundary chains.

A mesh carries straight-sided triangles plus a list of boundary edges,
each tagged as clamped (dirichlet), bed (basal) or free surface
(atmosphere).  Atmosphere edges may additionally be flagged as observed,
which marks where surface-velocity data lives.

The text format is line oriented::

    pgmesh 1
    vertices N
    x y          (N lines)
    triangles M
    i j k        (M lines, zero-based)
    boundary K
    i j TAG [observed]

``#`` starts a comment anywhere on a line.  TAG is one of ``dirichlet``,
``basal``, ``atmosphere``; the optional literal ``observed`` is only
valid on atmosphere edges.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np


class BoundaryTag(IntEnum):
    DIRICHLET = 0
    BASAL = 1
    ATMOSPHERE = 2


_TAG_FROM_NAME = {
    "dirichlet": BoundaryTag.DIRICHLET,
    "basal": BoundaryTag.BASAL,
    "atmosphere": BoundaryTag.ATMOSPHERE,
}
_NAME_FROM_TAG = {v: k for k, v in _TAG_FROM_NAME.items()}


class MeshError(Exception):
    """Invalid mesh topology or geometry."""


class MeshFormatError(MeshError):
    """Malformed mesh file.  Carries the offending 1-based line number."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = "line %d: %s" % (line, message)
        super().__init__(message)


@dataclass
class Mesh:
    """Conforming triangle mesh with a fully tagged boundary.

    Parameters
    ----------
    vertices : ndarray of shape (nv, 2)
        Vertex coordinates.
    triangles : ndarray of shape (nt, 3)
        Vertex indices per triangle, counterclockwise.
    boundary_edges : ndarray of shape (nb, 2)
        Endpoint indices of every boundary edge.
    boundary_tags : ndarray of shape (nb,)
        A ``BoundaryTag`` value per boundary edge.
    observed : ndarray of shape (nb,)
        True where surface-velocity observations live.  Only allowed on
        atmosphere edges.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    boundary_tags: np.ndarray
    observed: np.ndarray

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=np.float64)
        self.triangles = np.ascontiguousarray(self.triangles, dtype=np.int64)
        self.boundary_edges = np.ascontiguousarray(self.boundary_edges, dtype=np.int64)
        self.boundary_tags = np.ascontiguousarray(self.boundary_tags, dtype=np.int64)
        self.observed = np.ascontiguousarray(self.observed, dtype=bool)
        _validate(self)

    @property
    def num_vertices(self):
        return self.vertices.shape[0]

    @property
    def num_triangles(self):
        return self.triangles.shape[0]

    @property
    def num_boundary_edges(self):
        return self.boundary_edges.shape[0]

    def signed_areas(self):
        """Signed area of every triangle (positive for counterclockwise)."""
        a = self.vertices[self.triangles[:, 0]]
        b = self.vertices[self.triangles[:, 1]]
        c = self.vertices[self.triangles[:, 2]]
        return 0.5 * ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1])
                      - (c[:, 0] - a[:, 0]) * (b[:, 1] - a[:, 1]))

    def edge_lengths(self):
        """Length of every boundary edge."""
        d = self.vertices[self.boundary_edges[:, 1]] - self.vertices[self.boundary_edges[:, 0]]
        return np.hypot(d[:, 0], d[:, 1])

    def edges_with_tag(self, tag):
        """Indices into the boundary list for one tag."""
        return np.flatnonzero(self.boundary_tags == int(tag))

    @property
    def observed_edges(self):
        """Indices of observed atmosphere edges, in boundary-list order."""
        return np.flatnonzero(self.observed)


@dataclass
class EdgeGeometry:
    """Unit outward normal, unit tangent and length of one boundary edge."""

    edge: int
    normal: np.ndarray
    tangent: np.ndarray
    length: float


def _validate(mesh):
    nv = mesh.vertices.shape[0]
    if mesh.vertices.ndim != 2 or mesh.vertices.shape[1] != 2:
        raise MeshError("vertices must have shape (nv, 2)")
    if mesh.triangles.ndim != 2 or mesh.triangles.shape[1] != 3:
        raise MeshError("triangles must have shape (nt, 3)")
    if mesh.triangles.size and (mesh.triangles.min() < 0 or mesh.triangles.max() >= nv):
        raise MeshError("triangle vertex index out of range")
    if mesh.boundary_edges.ndim != 2 or mesh.boundary_edges.shape[1] != 2:
        raise MeshError("boundary_edges must have shape (nb, 2)")
    nb = mesh.boundary_edges.shape[0]
    if mesh.boundary_tags.shape != (nb,) or mesh.observed.shape != (nb,):
        raise MeshError("boundary tag/observed arrays must match the edge list")
    if mesh.boundary_edges.size and (mesh.boundary_edges.min() < 0
                                     or mesh.boundary_edges.max() >= nv):
        raise MeshError("boundary edge vertex index out of range")
    for tag in np.unique(mesh.boundary_tags):
        if tag not in (0, 1, 2):
            raise MeshError("unknown boundary tag %d" % tag)

    areas = mesh.signed_areas()
    bad = np.flatnonzero(areas <= 0.0)
    if bad.size:
        raise MeshError("triangle %d has non-positive area %g" % (bad[0], areas[bad[0]]))

    # Edge incidence: boundary edges belong to exactly one triangle,
    # interior edges to exactly two, and every single-triangle edge must
    # appear in the tagged boundary list.
    counts = {}
    for t in range(mesh.num_triangles):
        tri = mesh.triangles[t]
        for a, b in ((0, 1), (1, 2), (2, 0)):
            key = (min(tri[a], tri[b]), max(tri[a], tri[b]))
            counts[key] = counts.get(key, 0) + 1
    tagged = {}
    for e in range(nb):
        i, j = mesh.boundary_edges[e]
        if i == j:
            raise MeshError("boundary edge %d is degenerate (repeated vertex %d)" % (e, i))
        key = (min(i, j), max(i, j))
        if key in tagged:
            raise MeshError("boundary edge %d duplicates edge %d" % (e, tagged[key]))
        tagged[key] = e
        c = counts.get(key)
        if c is None:
            raise MeshError("boundary edge %d is not an edge of any triangle" % e)
        if c != 1:
            raise MeshError("boundary edge %d belongs to %d triangles, expected 1" % (e, c))
    for key, c in counts.items():
        if c == 1 and key not in tagged:
            raise MeshError("untagged boundary edge between vertices %d and %d" % key)
        if c > 2:
            raise MeshError("edge between vertices %d and %d belongs to %d triangles" % (key[0], key[1], c))

    if np.any(mesh.observed & (mesh.boundary_tags != int(BoundaryTag.ATMOSPHERE))):
        e = np.flatnonzero(mesh.observed & (mesh.boundary_tags != int(BoundaryTag.ATMOSPHERE)))[0]
        raise MeshError("boundary edge %d is observed but not tagged atmosphere" % e)

    lengths = mesh.edge_lengths()
    if lengths[mesh.boundary_tags == int(BoundaryTag.DIRICHLET)].sum() <= 0.0:
        raise MeshError("empty Gamma_d: mesh has no dirichlet boundary edge")
    if lengths[mesh.observed].sum() <= 0.0:
        raise MeshError("no observed atmosphere edge: observed surface is empty")


def generate_slab_mesh(length, height, nx, ny, bed_profile=None):
    """Build a structured slab mesh on [0, length] x [bed(x), height].

    The bottom chain is tagged basal, the top chain atmosphere (all
    observed), both lateral sides dirichlet.  Columns of vertices are
    spaced evenly between the bed elevation and the flat top.

    Parameters
    ----------
    length, height : float
        Slab extent.  The top surface sits at y = height.
    nx, ny : int
        Cells per direction, both at least 2.
    bed_profile : callable, sequence or None
        Bed elevation, either a function of x or nx + 1 samples.  None
        means a flat bed at y = 0.  Values must stay below ``height``.

    Returns
    -------
    Mesh
    """
    if nx < 2 or ny < 2:
        raise ValueError("slab mesh needs nx >= 2 and ny >= 2, got (%d, %d)" % (nx, ny))
    if length <= 0 or height <= 0:
        raise ValueError("slab mesh needs positive length and height")
    xs = np.linspace(0.0, length, nx + 1)
    if bed_profile is None:
        bed = np.zeros(nx + 1)
    elif callable(bed_profile):
        bed = np.array([float(bed_profile(x)) for x in xs])
    else:
        bed = np.asarray(bed_profile, dtype=np.float64)
        if bed.shape != (nx + 1,):
            raise ValueError("bed_profile samples must have length nx + 1 = %d" % (nx + 1))

    verts = np.empty(((nx + 1) * (ny + 1), 2))
    for j in range(ny + 1):
        frac = j / ny
        verts[j * (nx + 1):(j + 1) * (nx + 1), 0] = xs
        verts[j * (nx + 1):(j + 1) * (nx + 1), 1] = bed + frac * (height - bed)

    def vid(i, j):
        return j * (nx + 1) + i

    tris = np.empty((2 * nx * ny, 3), dtype=np.int64)
    k = 0
    for j in range(ny):
        for i in range(nx):
            a, b = vid(i, j), vid(i + 1, j)
            c, d = vid(i + 1, j + 1), vid(i, j + 1)
            tris[k] = (a, b, c)
            tris[k + 1] = (a, c, d)
            k += 2

    edges = []
    tags = []
    obs = []
    for i in range(nx):                      # bed, left to right
        edges.append((vid(i, 0), vid(i + 1, 0)))
        tags.append(BoundaryTag.BASAL)
        obs.append(False)
    for i in range(nx):                      # free surface, left to right
        edges.append((vid(i, ny), vid(i + 1, ny)))
        tags.append(BoundaryTag.ATMOSPHERE)
        obs.append(True)
    for j in range(ny):                      # left wall, bottom to top
        edges.append((vid(0, j), vid(0, j + 1)))
        tags.append(BoundaryTag.DIRICHLET)
        obs.append(False)
    for j in range(ny):                      # right wall, bottom to top
        edges.append((vid(nx, j), vid(nx, j + 1)))
        tags.append(BoundaryTag.DIRICHLET)
        obs.append(False)

    return Mesh(verts, tris, np.array(edges), np.array([int(t) for t in tags]),
                np.array(obs))


def with_observed_span(mesh, xmin, xmax):
    """Copy of ``mesh`` observing only atmosphere edges whose midpoint
    x-coordinate lies in [xmin, xmax]."""
    mid = 0.5 * (mesh.vertices[mesh.boundary_edges[:, 0], 0]
                 + mesh.vertices[mesh.boundary_edges[:, 1], 0])
    observed = (mesh.boundary_tags == int(BoundaryTag.ATMOSPHERE)) \
        & (mid >= xmin) & (mid <= xmax)
    return Mesh(mesh.vertices.copy(), mesh.triangles.copy(),
                mesh.boundary_edges.copy(), mesh.boundary_tags.copy(), observed)


def load_mesh(path):
    """Read a mesh from the ``pgmesh 1`` text format.

    Clockwise triangles are reoriented silently.  Parse problems raise
    :class:`MeshFormatError` with the offending line number; topology
    problems raise :class:`MeshError` naming the entity.
    """
    with open(path, "r") as fh:
        raw = fh.readlines()

    tokens = []                  # (line_number, [fields])
    for ln, line in enumerate(raw, start=1):
        body = line.split("#", 1)[0].strip()
        if body:
            tokens.append((ln, body.split()))
    pos = 0

    def take(what):
        nonlocal pos
        if pos >= len(tokens):
            last = tokens[-1][0] if tokens else 0
            raise MeshFormatError("unexpected end of file, expected %s" % what, last)
        item = tokens[pos]
        pos += 1
        return item

    ln, fields = take("header")
    if fields != ["pgmesh", "1"]:
        raise MeshFormatError("expected header 'pgmesh 1', got %r" % " ".join(fields), ln)

    ln, fields = take("'vertices N'")
    if len(fields) != 2 or fields[0] != "vertices":
        raise MeshFormatError("expected 'vertices N'", ln)
    try:
        nv = int(fields[1])
    except ValueError:
        raise MeshFormatError("vertex count %r is not an integer" % fields[1], ln)
    verts = np.empty((nv, 2))
    for k in range(nv):
        ln, fields = take("vertex coordinates")
        if len(fields) != 2:
            raise MeshFormatError("expected 'x y' for vertex %d" % k, ln)
        try:
            verts[k] = (float(fields[0]), float(fields[1]))
        except ValueError:
            raise MeshFormatError("bad vertex coordinates %r" % " ".join(fields), ln)

    ln, fields = take("'triangles M'")
    if len(fields) != 2 or fields[0] != "triangles":
        raise MeshFormatError("expected 'triangles M'", ln)
    try:
        nt = int(fields[1])
    except ValueError:
        raise MeshFormatError("triangle count %r is not an integer" % fields[1], ln)
    tris = np.empty((nt, 3), dtype=np.int64)
    for k in range(nt):
        ln, fields = take("triangle indices")
        if len(fields) != 3:
            raise MeshFormatError("expected 'i j k' for triangle %d" % k, ln)
        try:
            tris[k] = [int(f) for f in fields]
        except ValueError:
            raise MeshFormatError("bad triangle indices %r" % " ".join(fields), ln)

    ln, fields = take("'boundary K'")
    if len(fields) != 2 or fields[0] != "boundary":
        raise MeshFormatError("expected 'boundary K'", ln)
    try:
        nb = int(fields[1])
    except ValueError:
        raise MeshFormatError("boundary count %r is not an integer" % fields[1], ln)
    bedges = np.empty((nb, 2), dtype=np.int64)
    btags = np.empty(nb, dtype=np.int64)
    bobs = np.zeros(nb, dtype=bool)
    for k in range(nb):
        ln, fields = take("boundary edge")
        if len(fields) not in (3, 4):
            raise MeshFormatError("expected 'i j TAG [observed]' for boundary edge %d" % k, ln)
        try:
            bedges[k] = (int(fields[0]), int(fields[1]))
        except ValueError:
            raise MeshFormatError("bad boundary edge indices %r" % " ".join(fields[:2]), ln)
        tag = _TAG_FROM_NAME.get(fields[2])
        if tag is None:
            raise MeshFormatError("unknown boundary tag %r" % fields[2], ln)
        btags[k] = int(tag)
        if len(fields) == 4:
            if fields[3] != "observed":
                raise MeshFormatError("unexpected trailing token %r" % fields[3], ln)
            if tag is not BoundaryTag.ATMOSPHERE:
                raise MeshFormatError("'observed' is only valid on atmosphere edges", ln)
            bobs[k] = True

    if pos != len(tokens):
        raise MeshFormatError("trailing content after boundary section", tokens[pos][0])

    # Auto-fix clockwise triangles before the constructor validates.
    a = verts[tris[:, 0]]
    b = verts[tris[:, 1]]
    c = verts[tris[:, 2]]
    signed = 0.5 * ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1])
                    - (c[:, 0] - a[:, 0]) * (b[:, 1] - a[:, 1]))
    flip = signed < 0.0
    tris[flip] = tris[flip][:, ::-1]

    return Mesh(verts, tris, bedges, btags, bobs)


def save_mesh(mesh, path):
    """Write ``mesh`` in the ``pgmesh 1`` text format.

    Floats are written with ``repr`` so a load/save/load cycle is exact.
    """
    lines = ["pgmesh 1"]
    lines.append("vertices %d" % mesh.num_vertices)
    for x, y in mesh.vertices:
        lines.append("%s %s" % (repr(float(x)), repr(float(y))))
    lines.append("triangles %d" % mesh.num_triangles)
    for i, j, k in mesh.triangles:
        lines.append("%d %d %d" % (i, j, k))
    lines.append("boundary %d" % mesh.num_boundary_edges)
    for e in range(mesh.num_boundary_edges):
        i, j = mesh.boundary_edges[e]
        tag = _NAME_FROM_TAG[BoundaryTag(mesh.boundary_tags[e])]
        suffix = " observed" if mesh.observed[e] else ""
        lines.append("%d %d %s%s" % (i, j, tag, suffix))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _owning_triangles(mesh):
    """Map each boundary edge index to the single triangle containing it."""
    owner = {}
    for t in range(mesh.num_triangles):
        tri = mesh.triangles[t]
        for a, b in ((0, 1), (1, 2), (2, 0)):
            key = (min(tri[a], tri[b]), max(tri[a], tri[b]))
            owner.setdefault(key, []).append(t)
    result = np.empty(mesh.num_boundary_edges, dtype=np.int64)
    for e in range(mesh.num_boundary_edges):
        i, j = mesh.boundary_edges[e]
        result[e] = owner[(min(i, j), max(i, j))][0]
    return result


def boundary_geometry(mesh):
    """Outward normal, tangent and length for every boundary edge.

    The tangent points from the first listed endpoint to the second.
    The normal is the tangent rotated by -90 degrees, flipped if needed
    so it points away from the owning triangle's centroid.

    Returns
    -------
    list of EdgeGeometry, in boundary-list order.
    """
    owners = _owning_triangles(mesh)
    result = []
    for e in range(mesh.num_boundary_edges):
        i, j = mesh.boundary_edges[e]
        vec = mesh.vertices[j] - mesh.vertices[i]
        length = float(np.hypot(vec[0], vec[1]))
        if length == 0.0:
            raise MeshError("boundary edge %d has zero length" % e)
        tangent = vec / length
        normal = np.array([tangent[1], -tangent[0]])
        centroid = mesh.vertices[mesh.triangles[owners[e]]].mean(axis=0)
        midpoint = 0.5 * (mesh.vertices[i] + mesh.vertices[j])
        if np.dot(normal, centroid - midpoint) > 0.0:
            normal = -normal
        result.append(EdgeGeometry(e, normal, tangent, length))
    return result


def averaged_vertex_normals(mesh, tag=None):
    """Unit averaged outward normal at each boundary vertex.

    Each vertex gets the normalized sum of the unit outward normals of
    its adjacent boundary edges.  With ``tag`` given, only edges of that
    tag contribute (and only their vertices appear in the result).

    Returns
    -------
    dict mapping vertex index to a unit 2-vector.
    """
    geoms = boundary_geometry(mesh)
    sums = {}
    for geom in geoms:
        if tag is not None and mesh.boundary_tags[geom.edge] != int(tag):
            continue
        for v in mesh.boundary_edges[geom.edge]:
            sums.setdefault(int(v), np.zeros(2))
            sums[int(v)] += geom.normal
    result = {}
    for v, n in sums.items():
        norm = float(np.hypot(n[0], n[1]))
        if norm == 0.0:
            raise MeshError("averaged normal at vertex %d cancels to zero" % v)
        result[v] = n / norm
    return result
