"""Simplicial meshes of standard boundary domains and P1 fields on them.

The reference domain is the box (0,1)^(n-1) x (-1,0) whose top face
(0,1)^(n-1) x {0} is the flat piece Gamma with outward normal e_n. The
physical domain is its image under the rotation R = (R~ | rho), so Gamma has
outward normal rho. The box is cut into h^n cubes, each split into n! Kuhn
simplices.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import _kernels
from .errors import InvalidArgument, UnsupportedDimension
from .tensor_minor import BoundaryFrame, complete_rotation

SUPPORTED_DIMENSIONS = (2, 3, 4)


@lru_cache(maxsize=16)
def _reference_topology(n: int, h: int):
    shape = (h + 1,) * n
    idx = np.stack(np.unravel_index(np.arange((h + 1) ** n), shape), axis=1)
    ref = idx / h
    ref[:, -1] -= 1.0

    corners = np.stack(np.unravel_index(np.arange(h**n), (h,) * n), axis=1)
    simplices = []
    for perm in itertools.permutations(range(n)):
        path = np.zeros((n + 1, n), dtype=np.int64)
        for k, axis in enumerate(perm):
            path[k + 1] = path[k]
            path[k + 1, axis] += 1
        verts = corners[:, None, :] + path[None, :, :]
        flat = np.ravel_multi_index(tuple(np.moveaxis(verts, -1, 0)), shape)
        if _perm_parity(perm) < 0:
            flat[:, [-2, -1]] = flat[:, [-1, -2]]
        simplices.append(flat)
    simplices = np.ascontiguousarray(np.concatenate(simplices, axis=0))

    on_boundary = np.any((idx == 0) | (idx == h), axis=1)
    on_top = idx[:, -1] == h
    gamma_interior = on_top & np.all((idx[:, :-1] > 0) & (idx[:, :-1] < h), axis=1)
    return ref, simplices, on_boundary, on_top, gamma_interior


def _perm_parity(perm):
    sign = 1
    p = list(perm)
    for i in range(len(p)):
        while p[i] != i:
            j = p[i]
            p[i], p[j] = p[j], p[i]
            sign = -sign
    return sign


@dataclass(frozen=True, eq=False)
class StandardDomainMesh:
    n: int
    h: int
    vertices: np.ndarray
    simplices: np.ndarray
    grads: np.ndarray  # (E, n+1, n) gradients of barycentric coordinates
    volumes: np.ndarray
    gamma_faces: np.ndarray  # (G, n) vertex indices of the facets on Gamma
    gamma_areas: np.ndarray
    gamma_normals: np.ndarray
    dirichlet: np.ndarray  # boolean mask over vertices
    frame: BoundaryFrame
    free: np.ndarray = field(repr=False)

    @property
    def nverts(self) -> int:
        return self.vertices.shape[0]

    @property
    def volume(self) -> float:
        return float(self.volumes.sum())

    @property
    def dirichlet_vertices(self) -> np.ndarray:
        return np.flatnonzero(self.dirichlet)

    def gamma_vertex_weights(self) -> np.ndarray:
        """Integral over Gamma of each vertex hat function."""
        w = np.zeros(self.nverts)
        np.add.at(w, self.gamma_faces.ravel(), np.repeat(self.gamma_areas / self.n, self.n))
        return w

    def element_gradients(self, values: np.ndarray) -> np.ndarray:
        return _kernels.element_gradients(values, self.simplices, self.grads)

    def zero_field(self, m: int) -> "P1Field":
        return P1Field(self, np.zeros((self.nverts, m)))

    def field_from_free(self, free_values) -> "P1Field":
        free_values = np.asarray(free_values, dtype=float)
        m = free_values.size // self.free.size
        vals = np.zeros((self.nverts, m))
        vals[self.free] = free_values.reshape(self.free.size, m)
        return P1Field(self, vals)

    def interpolate(self, func) -> "P1Field":
        """Nodal interpolant of ``func(points) -> (V, m)``, zeroed on Dirichlet vertices."""
        vals = np.asarray(func(self.vertices), dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        return P1Field(self, vals)

    def reference_coordinates(self) -> np.ndarray:
        return self.vertices @ self.frame.rotation


@dataclass(frozen=True, eq=False)
class P1Field:
    """Continuous piecewise affine field with values (V, m); zero on Dirichlet vertices."""

    mesh: StandardDomainMesh
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float, copy=True)
        if vals.ndim == 1:
            vals = vals[:, None]
        if vals.shape[0] != self.mesh.nverts:
            raise InvalidArgument("field values do not match the mesh vertex count")
        vals[self.mesh.dirichlet] = 0.0
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def m(self) -> int:
        return self.values.shape[1]

    def free_values(self) -> np.ndarray:
        return self.values[self.mesh.free].ravel()

    def element_gradients(self) -> np.ndarray:
        return self.mesh.element_gradients(self.values)

    def scaled(self, t: float) -> "P1Field":
        return P1Field(self.mesh, self.values * t)


def build_standard_domain(n: int, rho=None, h: int = 8, all_dirichlet: bool = False) -> StandardDomainMesh:
    """Kuhn-triangulated standard boundary domain with normal ``rho``.

    With ``all_dirichlet`` every boundary vertex is constrained, which turns
    the mesh into a plain Dirichlet domain for interior quasiconvexity tests.
    """
    if n not in SUPPORTED_DIMENSIONS:
        raise UnsupportedDimension(f"dimension n={n} not supported (use one of {SUPPORTED_DIMENSIONS})")
    if h < 2 or int(h) != h:
        raise InvalidArgument(f"resolution h must be an integer >= 2, got {h}")
    if rho is None:
        rho = np.eye(n)[-1]
    key = (n, int(h), tuple(float(x) for x in np.asarray(rho, dtype=float).ravel()), bool(all_dirichlet))
    return _build_cached(*key)


@lru_cache(maxsize=64)
def _build_cached(n, h, rho, all_dirichlet):
    if len(rho) != n:
        raise InvalidArgument(f"normal of length {len(rho)} for dimension {n}")
    frame = complete_rotation(np.array(rho), exact=False)
    R = frame.rotation
    ref, simplices, on_boundary, on_top, gamma_interior = _reference_topology(n, h)
    vertices = ref @ R.T

    P = vertices[simplices]  # (E, n+1, n)
    D = np.transpose(P[:, 1:, :] - P[:, :1, :], (0, 2, 1))  # columns are edge vectors
    Dinv = np.linalg.inv(D)
    grads = np.empty_like(P)
    grads[:, 1:, :] = Dinv
    grads[:, 0, :] = -Dinv.sum(axis=1)
    volumes = np.full(simplices.shape[0], 1.0 / (math.factorial(n) * h**n))

    top = on_top[simplices]
    sel = np.flatnonzero(top.sum(axis=1) == n)
    faces, normals = [], []
    for e in sel:
        mask = top[e]
        faces.append(simplices[e][mask])
        opp = np.flatnonzero(~mask)[0]
        g = grads[e, opp]
        normals.append(-g / np.linalg.norm(g))
    gamma_faces = np.array(faces, dtype=np.int64).reshape(-1, n)
    gamma_normals = np.array(normals).reshape(-1, n)
    gamma_areas = np.full(len(gamma_faces), 1.0 / (math.factorial(n - 1) * h ** (n - 1)))

    dirichlet = on_boundary.copy() if all_dirichlet else on_boundary & ~gamma_interior
    if all_dirichlet:
        gamma_faces = gamma_faces[:0]
        gamma_areas = gamma_areas[:0]
        gamma_normals = gamma_normals[:0]
    free = np.flatnonzero(~dirichlet)
    for arr in (vertices, grads, volumes, dirichlet, free, gamma_faces, gamma_areas, gamma_normals):
        arr.setflags(write=False)
    return StandardDomainMesh(n, h, vertices, simplices, grads, volumes, gamma_faces, gamma_areas,
                              gamma_normals, dirichlet, frame, free)
