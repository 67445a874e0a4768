"""P1 triangle meshes, affine fields and exact quadrature.

Nodal displacement fields are plain arrays of shape ``(n_nodes, 2)``.
Affine fields ``v(x) = M x + b`` are :class:`AffineField` and work both on
a :class:`Mesh` (by exact nodal interpolation) and on a :class:`BoxDomain3`.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np
from scipy.sparse import coo_matrix

from .algebra import sym
from .constitutive import Material, v0_derivative, v0_quadratic


@dataclass(frozen=True)
class AffineField:
    M: np.ndarray
    b: np.ndarray | None = None

    def __post_init__(self):
        M = np.array(self.M, dtype=float)
        if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] not in (2, 3):
            raise ValueError(f"AffineField.M must be 2x2 or 3x3, got {M.shape}")
        b = np.zeros(M.shape[0]) if self.b is None else np.array(self.b, dtype=float)
        if b.shape != (M.shape[0],):
            raise ValueError("AffineField.b does not match M")
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "b", b)

    @property
    def dim(self) -> int:
        return self.M.shape[0]

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return x @ self.M.T + self.b

    def strain(self) -> np.ndarray:
        return sym(self.M)


DisplacementField = Union[np.ndarray, AffineField]


@dataclass(frozen=True)
class Frame:
    """Transform applied by normalize_frame: ``x_new = rotation @ (x + centroid_shift)``."""

    centroid_shift: np.ndarray
    rotation: np.ndarray


class Mesh:
    """Immutable 2D triangulation with oriented boundary edges.

    Triangles are stored counter-clockwise. Boundary edges carry the outward
    unit normal (computed away from the owning triangle) and a tag.
    """

    dim = 2

    def __init__(self, nodes, triangles, boundary_edges=None, edge_tags=None, frame: Frame | None = None):
        nodes = np.array(nodes, dtype=float)
        tris = np.array(triangles, dtype=np.int64)
        if nodes.ndim != 2 or nodes.shape[1] != 2:
            raise ValueError("nodes must have shape (n, 2)")
        if tris.ndim != 2 or tris.shape[1] != 3:
            raise ValueError("triangles must have shape (m, 3)")
        p = nodes[tris]
        signed = 0.5 * _cross2(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
        flip = signed < 0
        if flip.any():
            tris[flip] = tris[flip][:, [0, 2, 1]]
            signed = np.abs(signed)
        if np.any(signed <= 0):
            raise ValueError("mesh has degenerate (zero-area) triangles")

        owner = _boundary_owner(tris)
        if boundary_edges is None:
            bedges = np.array(sorted(owner), dtype=np.int64).reshape(-1, 2)
            tags = np.zeros(len(bedges), dtype=np.int64) if edge_tags is None else edge_tags
        else:
            bedges = np.array(boundary_edges, dtype=np.int64).reshape(-1, 2)
            tags = np.zeros(len(bedges), dtype=np.int64) if edge_tags is None else edge_tags
        tags = np.asarray(tags)
        if len(tags) != len(bedges):
            raise ValueError("edge_tags length does not match boundary_edges")

        normals = np.empty((len(bedges), 2))
        lengths = np.empty(len(bedges))
        for k, (a, b) in enumerate(bedges):
            key = (min(a, b), max(a, b))
            if key not in owner:
                raise ValueError(f"edge {a}-{b} is not a boundary edge of the triangulation")
            third = owner[key]
            t = nodes[b] - nodes[a]
            n = np.array([t[1], -t[0]])
            if n @ (nodes[third] - nodes[a]) > 0:
                n = -n
            lengths[k] = np.hypot(*t)
            normals[k] = n / lengths[k]

        self.nodes = nodes
        self.triangles = tris
        self.areas = signed
        self.boundary_edges = bedges
        self.edge_tags = tags
        self.normals = normals
        self.edge_lengths = lengths
        self.frame = frame if frame is not None else Frame(np.zeros(2), np.eye(2))
        # gradients of the three barycentric functions, shape (m, 3, 2)
        p = nodes[tris]
        rot = np.stack([p[:, 2] - p[:, 1], p[:, 0] - p[:, 2], p[:, 1] - p[:, 0]], axis=1)
        self.shape_grads = np.stack([-rot[..., 1], rot[..., 0]], axis=-1) / (2.0 * signed[:, None, None])
        for arr in (self.nodes, self.triangles, self.areas, self.boundary_edges,
                    self.normals, self.edge_lengths, self.shape_grads):
            arr.setflags(write=False)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def volume(self) -> float:
        return float(self.areas.sum())

    @property
    def diameter(self) -> float:
        span = self.nodes.max(axis=0) - self.nodes.min(axis=0)
        return float(np.hypot(*span))

    def first_moment(self) -> np.ndarray:
        """Integral of x over the domain."""
        return (self.areas[:, None] * self.nodes[self.triangles].mean(axis=1)).sum(axis=0)

    def second_moment(self) -> np.ndarray:
        """Integral of x (x) x, exact on each triangle."""
        p = self.nodes[self.triangles]
        s = p.sum(axis=1)
        per = np.einsum("tai,taj->tij", p, p) + np.einsum("ti,tj->tij", s, s)
        return (self.areas[:, None, None] * per).sum(axis=0) / 12.0

    def submesh(self, triangle_mask) -> "Mesh":
        """Mesh on the selected triangles (boundary recomputed, nodes renumbered)."""
        tris = self.triangles[np.asarray(triangle_mask, dtype=bool)]
        used = np.unique(tris)
        remap = -np.ones(self.n_nodes, dtype=np.int64)
        remap[used] = np.arange(len(used))
        return Mesh(self.nodes[used], remap[tris], frame=self.frame)

    def __repr__(self):
        return f"Mesh(n_nodes={self.n_nodes}, n_triangles={self.n_triangles}, n_boundary_edges={len(self.boundary_edges)})"


@dataclass(frozen=True)
class BoxDomain3:
    """Centered axis-aligned box [-a, a] x [-b, b] x [-c, c] (3D affine fields only)."""

    half_widths: tuple = (0.5, 0.5, 0.5)
    dim: int = field(default=3, init=False)

    def __post_init__(self):
        hw = tuple(float(x) for x in self.half_widths)
        if len(hw) != 3 or min(hw) <= 0:
            raise ValueError("BoxDomain3 needs three positive half-widths")
        object.__setattr__(self, "half_widths", hw)

    @property
    def volume(self) -> float:
        a, b, c = self.half_widths
        return 8.0 * a * b * c

    def first_moment(self) -> np.ndarray:
        return np.zeros(3)

    def second_moment(self) -> np.ndarray:
        return np.diag([self.volume * s * s / 3.0 for s in self.half_widths])


def _cross2(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def _boundary_owner(tris: np.ndarray) -> dict:
    """Map each edge used by exactly one triangle to that triangle's third vertex."""
    count: dict = {}
    for t in tris:
        for i in range(3):
            a, b, c = t[i], t[(i + 1) % 3], t[(i + 2) % 3]
            key = (min(a, b), max(a, b))
            if key in count:
                count[key] = None
            else:
                count[key] = c
    return {k: v for k, v in count.items() if v is not None}


def generate_mesh(kind: str = "unit_square", n: int = 8, width: float = 1.0, height: float = 1.0) -> Mesh:
    """Structured criss-cross mesh of a centered rectangle, 2 n^2 triangles.

    Diagonals alternate in a checkerboard so the mesh has the symmetries of
    the rectangle. Edge tags: 0 bottom, 1 right, 2 top, 3 left.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if kind == "unit_square":
        width = height = 1.0
    elif kind != "rectangle":
        raise ValueError(f"unknown mesh kind {kind!r}")
    if width <= 0 or height <= 0:
        raise ValueError("rectangle sides must be positive")
    xs = np.linspace(-width / 2, width / 2, n + 1)
    ys = np.linspace(-height / 2, height / 2, n + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    nodes = np.column_stack([X.ravel(), Y.ravel()])

    def idx(i, j):
        return j * (n + 1) + i

    tris = []
    for j in range(n):
        for i in range(n):
            a, b, c, d = idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)
            if (i + j) % 2 == 0:
                tris += [(a, b, c), (a, c, d)]
            else:
                tris += [(a, b, d), (b, c, d)]
    edges, tags = [], []
    for i in range(n):
        edges.append((idx(i, 0), idx(i + 1, 0)))
        tags.append(0)
    for j in range(n):
        edges.append((idx(n, j), idx(n, j + 1)))
        tags.append(1)
    for i in range(n, 0, -1):
        edges.append((idx(i, n), idx(i - 1, n)))
        tags.append(2)
    for j in range(n, 0, -1):
        edges.append((idx(0, j), idx(0, j - 1)))
        tags.append(3)
    return Mesh(nodes, tris, edges, tags)


def normalize_frame(mesh: Mesh, tol: float = 1e-13) -> Mesh:
    """Translate to zero first moment and rotate to principal axes.

    If the product moment is already negligible, no rotation is applied, so a
    centered axis-aligned square is left untouched. The rotation is proper
    (det = +1) and chosen closest to the identity among principal frames.
    """
    vol = mesh.volume
    if vol <= 0:
        raise ValueError("degenerate mesh")
    c = mesh.first_moment() / vol
    x = mesh.nodes - c
    p = x[mesh.triangles]
    s = p.sum(axis=1)
    S = (mesh.areas[:, None, None] * (np.einsum("tai,taj->tij", p, p) + np.einsum("ti,tj->tij", s, s))).sum(0) / 12.0
    scale = max(abs(S[0, 0]), abs(S[1, 1]))
    if abs(S[0, 1]) <= tol * scale:
        Q = np.eye(2)
    else:
        _, vecs = np.linalg.eigh(S)
        # order eigenvectors to stay near the current axes, then fix signs
        if abs(vecs[0, 0]) < abs(vecs[0, 1]):
            vecs = vecs[:, ::-1]
        vecs = vecs * np.sign(np.diag(vecs))[None, :]
        if np.linalg.det(vecs) < 0:
            vecs[:, 1] *= -1
        Q = vecs.T
    new_nodes = x @ Q.T
    prev = mesh.frame
    # keep the accumulated transform relative to the original coordinates
    acc_rot = Q @ prev.rotation
    acc_shift = prev.centroid_shift + np.linalg.solve(prev.rotation, -c)
    frame = Frame(centroid_shift=acc_shift, rotation=acc_rot)
    return Mesh(new_nodes, mesh.triangles, mesh.boundary_edges, mesh.edge_tags, frame=frame)


def is_normalized(mesh, rtol: float = 1e-10) -> bool:
    if isinstance(mesh, BoxDomain3):
        return True
    m1 = mesh.first_moment()
    S = mesh.second_moment()
    diam = mesh.diameter
    if np.abs(m1).max() > rtol * diam * mesh.volume:
        return False
    return abs(S[0, 1]) <= rtol * np.trace(S)


def nodal_values(mesh: Mesh, v: DisplacementField) -> np.ndarray:
    """Nodal array of a field; affine fields are interpolated exactly."""
    if isinstance(v, AffineField):
        if v.dim != 2:
            raise ValueError("3D affine fields cannot live on a 2D mesh")
        return v(mesh.nodes)
    v = np.asarray(v, dtype=float)
    if v.shape != (mesh.n_nodes, 2):
        raise ValueError(f"nodal field must have shape ({mesh.n_nodes}, 2), got {v.shape}")
    return v


def displacement_gradient(mesh: Mesh, v: DisplacementField) -> np.ndarray:
    """Per-triangle gradient, shape (m, 2, 2), entry [t, i, j] = d v_i / d x_j."""
    if isinstance(v, AffineField):
        return np.broadcast_to(v.M, (mesh.n_triangles, 2, 2)).copy()
    vals = nodal_values(mesh, v)[mesh.triangles]  # (m, 3, 2)
    return np.einsum("tai,taj->tij", vals, mesh.shape_grads)


def strain_field(domain, v: DisplacementField) -> np.ndarray:
    """Linearized strain: per triangle on a Mesh, a single matrix for affine fields on a box."""
    if isinstance(domain, BoxDomain3):
        if not isinstance(v, AffineField) or v.dim != 3:
            raise ValueError("BoxDomain3 supports 3D affine fields only")
        return v.strain()
    return sym(displacement_gradient(domain, v))


def integrate_quadratic_energy(domain, m: Material, v: DisplacementField, G: np.ndarray | None = None) -> float:
    """Integral of V0(E(v) - G) for a constant symmetric pre-strain G (exact for P1)."""
    dim = domain.dim
    G = np.zeros((dim, dim)) if G is None else np.asarray(G, dtype=float)
    if not np.allclose(G, G.T, rtol=0, atol=1e-14 * (1 + np.abs(G).max())):
        raise ValueError("pre-strain must be symmetric")
    E = strain_field(domain, v)
    if isinstance(domain, BoxDomain3):
        return v0_quadratic(m, E - G) * domain.volume
    return float(domain.areas @ v0_quadratic(m, E - G))


def mass_pairs(mesh: Mesh, u: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Exact integral of u_i w_j for P1 vector fields, returned as a 2x2 matrix."""
    U = u[mesh.triangles]
    V = w[mesh.triangles]
    su, sv = U.sum(axis=1), V.sum(axis=1)
    per = np.einsum("tai,taj->tij", U, V) + np.einsum("ti,tj->tij", su, sv)
    return (mesh.areas[:, None, None] * per).sum(axis=0) / 12.0


def l2_inner(mesh: Mesh, u: DisplacementField, w: DisplacementField) -> float:
    return float(np.trace(mass_pairs(mesh, nodal_values(mesh, u), nodal_values(mesh, w))))


def integral(mesh: Mesh, v: DisplacementField) -> np.ndarray:
    vals = nodal_values(mesh, v)[mesh.triangles]
    return (mesh.areas[:, None] * vals.mean(axis=1)).sum(axis=0)


def write_mesh(mesh: Mesh, path) -> None:
    lines = [f"node {i} {x:.17g} {y:.17g}" for i, (x, y) in enumerate(mesh.nodes)]
    lines += [f"tri {i} {a} {b} {c}" for i, (a, b, c) in enumerate(mesh.triangles)]
    lines += [f"bedge {a} {b} {t}" for (a, b), t in zip(mesh.boundary_edges, mesh.edge_tags)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path) -> Mesh:
    nodes, tris, edges, tags = {}, {}, [], []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        parts = raw.split()
        if not parts or parts[0].startswith("#"):
            continue
        try:
            if parts[0] == "node":
                nodes[int(parts[1])] = (float(parts[2]), float(parts[3]))
            elif parts[0] == "tri":
                tris[int(parts[1])] = tuple(int(x) for x in parts[2:5])
            elif parts[0] == "bedge":
                edges.append((int(parts[1]), int(parts[2])))
                tags.append(int(parts[3]) if len(parts) > 3 else 0)
            else:
                raise ValueError(f"unknown record {parts[0]!r}")
        except (IndexError, ValueError) as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from None
    if sorted(nodes) != list(range(len(nodes))) or sorted(tris) != list(range(len(tris))):
        raise ValueError("node and triangle ids must be 0-based and contiguous")
    return Mesh([nodes[i] for i in range(len(nodes))], [tris[i] for i in range(len(tris))],
                edges or None, tags or None)


def stiffness_matrix(mesh: Mesh, m: Material):
    """Sparse K with v^T K v / 2 = int V0(E(v)); dofs ordered (node, component)."""
    g = mesh.shape_grads  # (t, a, j)
    gg = np.einsum("taj,tbj->tab", g, g)
    eye = np.eye(2)
    # K[a i, b k] = |T| (4 mu (d_ik ga.gb + ga_k gb_i) + 4 lam ga_i gb_k)
    Ke = (4.0 * m.mu * (np.einsum("tab,ik->taibk", gg, eye) + np.einsum("tak,tbi->taibk", g, g))
          + 4.0 * m.lam * np.einsum("tai,tbk->taibk", g, g))
    Ke *= mesh.areas[:, None, None, None, None]
    dofs = (2 * mesh.triangles[:, :, None] + np.arange(2)[None, None, :]).reshape(-1, 6)
    rows = np.repeat(dofs, 6, axis=1).ravel()
    cols = np.tile(dofs, (1, 6)).ravel()
    n = 2 * mesh.n_nodes
    return coo_matrix((Ke.reshape(-1, 36).ravel(), (rows, cols)), shape=(n, n)).tocsr()


def prestrain_load(mesh: Mesh, m: Material, G: np.ndarray) -> np.ndarray:
    """Nodal vector of phi -> int DV0(G) . E(phi) for a constant symmetric G."""
    S = v0_derivative(m, np.asarray(G, dtype=float))
    contrib = np.einsum("ij,taj->tai", S, mesh.shape_grads) * mesh.areas[:, None, None]
    out = np.zeros((mesh.n_nodes, 2))
    np.add.at(out, mesh.triangles.ravel(), contrib.reshape(-1, 2))
    return out
