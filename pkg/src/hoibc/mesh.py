"""Closed triangle surface meshes: readers, generators and edge topology."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

logger = logging.getLogger(__name__)


class MeshError(ValueError):
    """Raised for malformed or topologically invalid meshes."""


class MeshParseError(MeshError):
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NonManifoldError(MeshError):
    def __init__(self, message: str, edges=()):
        self.edges = list(edges)
        super().__init__(message)


class OrientationError(MeshError):
    def __init__(self, message: str, edges=()):
        self.edges = list(edges)
        super().__init__(message)


@dataclass(frozen=True, eq=False)
class EdgeTopology:
    """Interior-edge data needed by RWG and Lagrange-multiplier functions.

    Edge ``n`` runs from ``edges[n, 0]`` to ``edges[n, 1]``; ``tri_plus[n]`` is
    the triangle whose counter-clockwise traversal follows that direction.
    ``tri_edges[t, a]`` is the edge opposite local vertex ``a`` of triangle
    ``t`` and ``tri_signs[t, a]`` is +1 when ``t`` is the plus triangle of it.
    """

    edges: np.ndarray
    tri_plus: np.ndarray
    tri_minus: np.ndarray
    opp_plus: np.ndarray
    opp_minus: np.ndarray
    local_plus: np.ndarray
    local_minus: np.ndarray
    length: np.ndarray
    direction: np.ndarray
    midpoint: np.ndarray
    tri_edges: np.ndarray
    tri_signs: np.ndarray

    @property
    def n_edges(self) -> int:
        return len(self.edges)


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    """Watertight, consistently oriented triangle surface (SI metres).

    Triangles are stored counter-clockwise as seen from outside, so the
    geometric normal ``(v1 - v0) x (v2 - v0)`` points outward.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    name: str = "mesh"
    areas: np.ndarray = field(init=False, repr=False)
    normals: np.ndarray = field(init=False, repr=False)
    _topology: list = field(init=False, repr=False, default_factory=list)

    def __post_init__(self):
        vertices = np.ascontiguousarray(self.vertices, dtype=float)
        triangles = np.ascontiguousarray(self.triangles, dtype=np.int64)
        if vertices.ndim != 2 or vertices.shape[1] != 3:
            raise MeshError("vertices must be an (N, 3) array")
        if triangles.ndim != 2 or triangles.shape[1] != 3:
            raise MeshError("triangles must be an (M, 3) array")
        if len(triangles) and (triangles.min() < 0 or triangles.max() >= len(vertices)):
            raise MeshError("triangle references a vertex that does not exist")
        p = vertices[triangles]
        cross = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
        twice = np.linalg.norm(cross, axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            normals = cross / twice[:, None]
        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "triangles", triangles)
        object.__setattr__(self, "areas", 0.5 * twice)
        object.__setattr__(self, "normals", normals)
        for arr in (vertices, triangles, self.areas, self.normals):
            arr.setflags(write=False)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def corners(self) -> np.ndarray:
        """(M, 3, 3) array of triangle vertex coordinates."""
        return self.vertices[self.triangles]

    @property
    def centroids(self) -> np.ndarray:
        return self.corners.mean(axis=1)

    @property
    def total_area(self) -> float:
        return float(self.areas.sum())

    @property
    def topology(self) -> EdgeTopology:
        if not self._topology:
            self._topology.append(build_edges(self))
        return self._topology[0]

    @property
    def n_edges(self) -> int:
        return self.topology.n_edges

    def signed_volume(self) -> float:
        p = self.corners
        return float(np.einsum("ij,ij->i", p[:, 0], np.cross(p[:, 1], p[:, 2])).sum() / 6.0)

    def validate(self) -> "TriangleMesh":
        """Check every mesh invariant; returns ``self`` for chaining."""
        if self.n_triangles == 0:
            raise MeshError("mesh has no triangles")
        scale = max(float(np.ptp(self.vertices, axis=0).max()), 1e-300)
        bad = np.flatnonzero(self.areas <= 1e-14 * scale**2)
        if bad.size:
            raise MeshError(f"degenerate triangles (zero area): {bad[:10].tolist()}")
        build_edges(self)
        if self.signed_volume() < 0:
            raise OrientationError("normals point inward (negative enclosed volume); reverse the triangle order")
        return self

    def transformed(self, rotation=None, translation=None) -> "TriangleMesh":
        v = self.vertices
        if rotation is not None:
            v = v @ np.asarray(rotation, dtype=float).T
        if translation is not None:
            v = v + np.asarray(translation, dtype=float)
        return TriangleMesh(v, self.triangles, name=self.name)


def _edge_keys(triangles: np.ndarray):
    # directed half-edges: local edge a of triangle t runs v[a+1] -> v[a+2]
    start = triangles[:, [1, 2, 0]]
    stop = triangles[:, [2, 0, 1]]
    return start.ravel(), stop.ravel()


def build_edges(mesh: TriangleMesh) -> EdgeTopology:
    """Build interior-edge topology; raises on open, non-manifold or misoriented input."""
    tris = mesh.triangles
    n_tri = len(tris)
    start, stop = _edge_keys(tris)
    lo = np.minimum(start, stop)
    hi = np.maximum(start, stop)
    nv = max(mesh.n_vertices, 1)
    key = lo * nv + hi
    order = np.argsort(key, kind="stable")
    uniq, first, counts = np.unique(key[order], return_index=True, return_counts=True)

    if np.any(counts > 2):
        bad = np.flatnonzero(counts > 2)
        pairs = [(int(k // nv), int(k % nv)) for k in uniq[bad[:10]]]
        raise NonManifoldError(f"edges shared by more than two triangles: {pairs}", pairs)
    if np.any(counts < 2):
        bad = np.flatnonzero(counts < 2)
        pairs = [(int(k // nv), int(k % nv)) for k in uniq[bad[:10]]]
        raise NonManifoldError(f"open surface, boundary edges: {pairs}", pairs)

    h0 = order[first]
    h1 = order[first + 1]
    forward0 = start[h0] < stop[h0]
    forward1 = start[h1] < stop[h1]
    if np.any(forward0 == forward1):
        bad = np.flatnonzero(forward0 == forward1)
        raise OrientationError(
            f"inconsistent triangle orientation at edges {bad[:10].tolist()}", bad[:10].tolist()
        )

    plus_half = np.where(forward0, h0, h1)
    minus_half = np.where(forward0, h1, h0)
    edges = np.stack([lo[h0], hi[h0]], axis=1)
    tri_plus, local_plus = np.divmod(plus_half, 3)
    tri_minus, local_minus = np.divmod(minus_half, 3)

    n_edges = len(edges)
    tri_edges = np.empty((n_tri, 3), dtype=np.int64)
    tri_signs = np.empty((n_tri, 3), dtype=float)
    ids = np.arange(n_edges)
    tri_edges[tri_plus, local_plus] = ids
    tri_edges[tri_minus, local_minus] = ids
    tri_signs[tri_plus, local_plus] = 1.0
    tri_signs[tri_minus, local_minus] = -1.0

    v = mesh.vertices
    vec = v[edges[:, 1]] - v[edges[:, 0]]
    length = np.linalg.norm(vec, axis=1)
    topo = EdgeTopology(
        edges=edges,
        tri_plus=tri_plus,
        tri_minus=tri_minus,
        opp_plus=tris[tri_plus, local_plus],
        opp_minus=tris[tri_minus, local_minus],
        local_plus=local_plus,
        local_minus=local_minus,
        length=length,
        direction=vec / length[:, None],
        midpoint=0.5 * (v[edges[:, 0]] + v[edges[:, 1]]),
        tri_edges=tri_edges,
        tri_signs=tri_signs,
    )
    for name in topo.__dataclass_fields__:
        getattr(topo, name).setflags(write=False)
    return topo


def _finalize(vertices, triangles, name) -> TriangleMesh:
    mesh = TriangleMesh(vertices, triangles, name=name)
    mesh.validate()
    if mesh.signed_volume() < 0:
        logger.warning("%s: triangles are oriented inward, flipping all of them", name)
        mesh = TriangleMesh(mesh.vertices, mesh.triangles[:, ::-1], name=name)
    return mesh


def _strip(line: str) -> str:
    return line.split("#", 1)[0].strip()


def read_off(path) -> TriangleMesh:
    path = Path(path)
    lines = [(i + 1, _strip(raw)) for i, raw in enumerate(path.read_text().splitlines())]
    lines = [(n, s) for n, s in lines if s]
    if not lines:
        raise MeshParseError("empty file", 1)
    it = iter(lines)
    lineno, head = next(it)
    tokens = head.split()
    if tokens[0].upper() != "OFF":
        raise MeshParseError("missing OFF header", lineno)
    tokens = tokens[1:]
    if not tokens:
        lineno, head = next(it, (lineno, ""))
        tokens = head.split()
    try:
        nv, nf = int(tokens[0]), int(tokens[1])
    except (IndexError, ValueError):
        raise MeshParseError("expected vertex and face counts", lineno) from None

    verts = np.empty((nv, 3))
    for i in range(nv):
        lineno, s = next(it, (lineno, None))
        if s is None:
            raise MeshParseError(f"file ends after {i} of {nv} vertices", lineno)
        try:
            verts[i] = [float(x) for x in s.split()[:3]]
        except ValueError:
            raise MeshParseError(f"bad vertex record {s!r}", lineno) from None

    faces = []
    skipped = 0
    for i in range(nf):
        lineno, s = next(it, (lineno, None))
        if s is None:
            raise MeshParseError(f"file ends after {i} of {nf} faces", lineno)
        try:
            vals = [int(x) for x in s.split()]
            count = vals[0]
            idx = vals[1 : 1 + count]
        except (ValueError, IndexError):
            raise MeshParseError(f"bad face record {s!r}", lineno) from None
        if len(idx) != count:
            raise MeshParseError("face record shorter than its vertex count", lineno)
        if count != 3:
            skipped += 1
            continue
        if min(idx) < 0 or max(idx) >= nv:
            raise MeshParseError(f"face references vertex outside 0..{nv - 1}", lineno)
        faces.append(idx)
    if skipped:
        logger.warning("%s: ignored %d non-triangular faces", path.name, skipped)
    return _finalize(verts, np.array(faces, dtype=np.int64).reshape(-1, 3), path.stem)


def read_gmsh(path) -> TriangleMesh:
    """Read a Gmsh ASCII v2 ``.msh`` file, keeping only 3-node triangles."""
    path = Path(path)
    raw = path.read_text().splitlines()
    nodes: dict[int, tuple] = {}
    tris = []
    skipped = 0
    i = 0
    while i < len(raw):
        s = raw[i].strip()
        if s == "$MeshFormat":
            fmt = raw[i + 1].split()
            if not fmt or not fmt[0].startswith("2"):
                raise MeshParseError(f"unsupported Gmsh format {raw[i + 1].strip()!r}", i + 2)
            if len(fmt) > 1 and fmt[1] != "0":
                raise MeshParseError("binary Gmsh files are not supported", i + 2)
        elif s == "$Nodes":
            try:
                n = int(raw[i + 1])
                for j in range(n):
                    parts = raw[i + 2 + j].split()
                    nodes[int(parts[0])] = (float(parts[1]), float(parts[2]), float(parts[3]))
            except (ValueError, IndexError):
                raise MeshParseError("bad node record", i + 3 + len(nodes)) from None
            i += n + 2
        elif s == "$Elements":
            try:
                n = int(raw[i + 1])
            except (ValueError, IndexError):
                raise MeshParseError("bad element count", i + 2) from None
            for j in range(n):
                lineno = i + 3 + j
                try:
                    parts = [int(x) for x in raw[i + 2 + j].split()]
                    etype, ntags = parts[1], parts[2]
                    conn = parts[3 + ntags :]
                except (ValueError, IndexError):
                    raise MeshParseError("bad element record", lineno) from None
                if etype == 2:
                    if len(conn) != 3:
                        raise MeshParseError("triangle element needs 3 nodes", lineno)
                    tris.append((conn, lineno))
                else:
                    skipped += 1
            i += n + 2
        i += 1
    if not nodes:
        raise MeshParseError("no $Nodes section", None)
    ids = sorted(nodes)
    index = {nid: k for k, nid in enumerate(ids)}
    verts = np.array([nodes[nid] for nid in ids])
    faces = []
    for conn, lineno in tris:
        try:
            faces.append([index[c] for c in conn])
        except KeyError as exc:
            raise MeshParseError(f"element references unknown node {exc.args[0]}", lineno) from None
    if skipped:
        logger.warning("%s: ignored %d non-triangle elements", path.name, skipped)
    faces = np.array(faces, dtype=np.int64).reshape(-1, 3)
    used = np.unique(faces)
    remap = -np.ones(len(verts), dtype=np.int64)
    remap[used] = np.arange(len(used))
    return _finalize(verts[used], remap[faces], path.stem)


def load_mesh(path, format: Optional[str] = None) -> TriangleMesh:
    """Load and validate a mesh; ``format`` is ``"off"`` or ``"gmsh-ascii-v2"``."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    if format is None:
        format = {".off": "off", ".msh": "gmsh-ascii-v2"}.get(path.suffix.lower())
        if format is None:
            raise MeshError(f"cannot infer mesh format from {path.name!r}")
    if format == "off":
        return read_off(path)
    if format in ("gmsh", "gmsh-ascii-v2", "msh"):
        return read_gmsh(path)
    raise MeshError(f"unknown mesh format {format!r}")


def write_off(mesh: TriangleMesh, path) -> None:
    with open(path, "w") as fh:
        fh.write(f"OFF\n{mesh.n_vertices} {mesh.n_triangles} {mesh.n_edges}\n")
        for v in mesh.vertices:
            fh.write(f"{v[0]:.17g} {v[1]:.17g} {v[2]:.17g}\n")
        for t in mesh.triangles:
            fh.write(f"3 {t[0]} {t[1]} {t[2]}\n")


_PHI = (1.0 + 5.0**0.5) / 2.0
_ICO_VERTS = np.array(
    [
        [-1, _PHI, 0], [1, _PHI, 0], [-1, -_PHI, 0], [1, -_PHI, 0],
        [0, -1, _PHI], [0, 1, _PHI], [0, -1, -_PHI], [0, 1, -_PHI],
        [_PHI, 0, -1], [_PHI, 0, 1], [-_PHI, 0, -1], [-_PHI, 0, 1],
    ]
)
_ICO_FACES = np.array(
    [
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ]
)


def gen_geodesic_sphere(radius: float, frequency: int, name: Optional[str] = None) -> TriangleMesh:
    """Icosahedron with every face split into ``frequency**2`` triangles, projected to the sphere.

    Produces ``20 * frequency**2`` triangles and ``30 * frequency**2`` edges.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    n = int(frequency)
    if n < 1:
        raise ValueError("frequency must be >= 1")
    base = _ICO_VERTS / np.linalg.norm(_ICO_VERTS[0])
    # integer barycentric keys make vertices on shared icosahedron edges coincide exactly
    index: dict = {}
    points = []
    faces = []

    def vid(f, i, j):
        a, b, c = _ICO_FACES[f]
        weights = {a: n - i - j, b: i, c: j}
        key = tuple(sorted((v, w) for v, w in weights.items() if w))
        if key not in index:
            index[key] = len(points)
            points.append(sum(base[v] * w for v, w in key) / n)
        return index[key]

    for f in range(len(_ICO_FACES)):
        for i in range(n):
            for j in range(n - i):
                faces.append((vid(f, i, j), vid(f, i + 1, j), vid(f, i, j + 1)))
                if i + j < n - 1:
                    faces.append((vid(f, i + 1, j), vid(f, i + 1, j + 1), vid(f, i, j + 1)))
    pts = np.array(points)
    pts *= radius / np.linalg.norm(pts, axis=1)[:, None]
    mesh = TriangleMesh(pts, np.array(faces), name=name or f"geodesic_r{radius:g}_f{n}")
    return mesh.validate()


def rescale_to_volume(mesh: TriangleMesh, volume: float, center=None) -> TriangleMesh:
    """Scale ``mesh`` about ``center`` (default: origin) so its enclosed volume equals ``volume``.

    A faceted mesh with vertices on a curved surface encloses less volume
    than the surface itself; the rescaled mesh removes that bias.
    """
    if volume <= 0:
        raise ValueError("volume must be positive")
    c = np.zeros(3) if center is None else np.asarray(center, dtype=float)
    v0 = mesh.signed_volume()
    if v0 <= 0:
        raise OrientationError("mesh must enclose a positive volume")
    s = (volume / v0) ** (1.0 / 3.0)
    return TriangleMesh(c + (mesh.vertices - c) * s, mesh.triangles, name=f"{mesh.name}_vol").validate()


def gen_icosphere(radius: float, subdivisions: int) -> TriangleMesh:
    """Icosphere with ``20 * 4**subdivisions`` triangles, vertices on the sphere."""
    if subdivisions < 0:
        raise ValueError("subdivisions must be >= 0")
    return gen_geodesic_sphere(radius, 2**subdivisions, name=f"icosphere_r{radius:g}_s{subdivisions}")


def gen_spheroid(a: float, c: float, subdivisions: int, frequency: Optional[int] = None) -> TriangleMesh:
    """Spheroid with semi-axes ``(a, a, c)``: an icosphere scaled along each axis.

    Normals come from the scaled triangle geometry. ``frequency`` overrides the
    power-of-two refinement implied by ``subdivisions``.
    """
    if a <= 0 or c <= 0:
        raise ValueError("semi-axes must be positive")
    freq = frequency if frequency is not None else 2**subdivisions
    unit = gen_geodesic_sphere(1.0, freq)
    verts = unit.vertices * np.array([a, a, c])
    return TriangleMesh(verts, unit.triangles, name=f"spheroid_a{a:g}_c{c:g}_f{freq}").validate()


def spheroid_area(a: float, c: float) -> float:
    """Exact surface area of the spheroid with semi-axes (a, a, c)."""
    if np.isclose(a, c):
        return 4.0 * np.pi * a * a
    if c > a:
        e = np.sqrt(1.0 - (a / c) ** 2)
        return 2.0 * np.pi * a * a * (1.0 + c / (a * e) * np.arcsin(e))
    e = np.sqrt(1.0 - (c / a) ** 2)
    return 2.0 * np.pi * a * a * (1.0 + (1.0 - e * e) / e * np.arctanh(e))


def mesh_info(mesh: TriangleMesh) -> dict:
    """Summary statistics reported by the ``mesh-info`` command."""
    topo = mesh.topology
    p = mesh.corners
    sides = np.linalg.norm(p[:, [1, 2, 0]] - p[:, [0, 1, 2]], axis=2)
    # quality: 4*sqrt(3)*A / sum(l^2), equal to 1 for an equilateral triangle
    quality = 4.0 * np.sqrt(3.0) * mesh.areas / (sides**2).sum(axis=1)
    lo = mesh.vertices.min(axis=0)
    hi = mesh.vertices.max(axis=0)
    return {
        "name": mesh.name,
        "vertices": mesh.n_vertices,
        "triangles": mesh.n_triangles,
        "edges": topo.n_edges,
        "euler_characteristic": mesh.n_vertices - topo.n_edges + mesh.n_triangles,
        "total_area": mesh.total_area,
        "bbox_min": lo.tolist(),
        "bbox_max": hi.tolist(),
        "min_edge_length": float(topo.length.min()),
        "max_edge_length": float(topo.length.max()),
        "min_quality": float(quality.min()),
    }
