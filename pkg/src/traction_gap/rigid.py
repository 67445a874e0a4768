"""Infinitesimal rigid displacements and the L2-orthogonal projection onto them.

On a frame-normalized domain (zero first moments, zero product moments) the
translations and the rotation fields ``a x x`` are mutually L2-orthogonal,
so the projection splits into the mean plus ``a x x`` with
``a_k = I_k^-1 int (x x v)_k`` where ``I_k`` is the moment of inertia about
axis k.
"""
from __future__ import annotations

import numpy as np

from .algebra import SkewParam
from .mesh import AffineField, BoxDomain3, Mesh, integral, is_normalized, mass_pairs, nodal_values


def rigid_basis(mesh: Mesh) -> list[np.ndarray]:
    """Nodal fields e_1, e_2 and the rotation J x (J = [[0, -1], [1, 0]])."""
    n = mesh.n_nodes
    e1 = np.tile([1.0, 0.0], (n, 1))
    e2 = np.tile([0.0, 1.0], (n, 1))
    rot = np.column_stack([-mesh.nodes[:, 1], mesh.nodes[:, 0]])
    return [e1, e2, rot]


def inertia_moments(domain) -> np.ndarray:
    """I_k = int (|x|^2 - x_k^2) for N=3; the polar moment int |x|^2 for N=2."""
    S = domain.second_moment()
    if domain.dim == 2:
        return np.array([np.trace(S)])
    return np.trace(S) - np.diag(S)


def rotation_parameter(domain, v) -> SkewParam:
    """Axis a (or scalar w for N=2) of the rotational part of P v."""
    if isinstance(domain, BoxDomain3):
        if not isinstance(v, AffineField) or v.dim != 3:
            raise ValueError("BoxDomain3 supports 3D affine fields only")
        S = domain.second_moment()
        # int x_i (M x)_j = (S M^T)_ij, and (x x v)_k = eps_kij x_i v_j
        X = S @ v.M.T
        moment = np.array([X[1, 2] - X[2, 1], X[2, 0] - X[0, 2], X[0, 1] - X[1, 0]])
        return SkewParam.axis(moment / inertia_moments(domain))
    vals = nodal_values(domain, v)
    P = mass_pairs(domain, domain.nodes, vals)  # int x_i v_j
    moment = P[0, 1] - P[1, 0]
    return SkewParam.scalar(moment / inertia_moments(domain)[0])


def project_rigid(domain, v):
    """P v = mean(v) + a x x. Returns the same representation as the input."""
    if not is_normalized(domain):
        raise ValueError("project_rigid needs a frame-normalized mesh (see normalize_frame)")
    p = rotation_parameter(domain, v)
    W = p.matrix()
    if isinstance(domain, BoxDomain3):
        # mean of M x + b over a centered box is b
        return AffineField(W, v.b)
    mean = integral(domain, v) / domain.volume
    if isinstance(v, AffineField):
        return AffineField(W, mean)
    return mean[None, :] + domain.nodes @ W.T


def remove_rigid(domain, v):
    """v - P v, the rigid-free representative."""
    Pv = project_rigid(domain, v)
    if isinstance(v, AffineField):
        return AffineField(v.M - Pv.M, v.b - Pv.b)
    return nodal_values(domain, v) - Pv


def rigid_field(domain, translation, p: SkewParam):
    """The rigid field c + W x, nodal on a mesh or affine on a box."""
    W = p.matrix()
    c = np.asarray(translation, dtype=float)
    if isinstance(domain, BoxDomain3):
        return AffineField(W, c)
    return c[None, :] + domain.nodes @ W.T

