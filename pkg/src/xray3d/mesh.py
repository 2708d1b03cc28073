"""Triangle mesh container, normalization, and per-face geometry."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class MeshError(ValueError):
    """Invalid mesh data (bad indices, degenerate faces, empty input)."""


@dataclass(frozen=True)
class RigidTransform:
    """Uniform-scale rigid map p -> scale * (rotation @ p) + translation."""

    rotation: np.ndarray
    translation: np.ndarray
    scale: float = 1.0

    def __post_init__(self):
        rot = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        tr = np.asarray(self.translation, dtype=np.float64).reshape(3)
        object.__setattr__(self, "rotation", _frozen(rot))
        object.__setattr__(self, "translation", _frozen(tr))
        if not np.allclose(rot @ rot.T, np.eye(3), atol=1e-9):
            raise ValueError("rotation block is not orthonormal")
        if abs(np.linalg.det(rot) - 1.0) > 1e-9:
            raise ValueError("rotation determinant must be +1")
        if not self.scale > 0:
            raise ValueError("scale must be positive")

    def apply(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        return self.scale * (pts @ self.rotation.T) + self.translation

    def inverse(self) -> "RigidTransform":
        inv_rot = self.rotation.T
        inv_scale = 1.0 / self.scale
        inv_tr = -inv_scale * (inv_rot @ self.translation)
        return RigidTransform(inv_rot, inv_tr, inv_scale)

    @staticmethod
    def identity() -> "RigidTransform":
        return RigidTransform(np.eye(3), np.zeros(3), 1.0)


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass
class TriangleMesh:
    """Indexed triangle soup with optional per-vertex normals and colors.

    Arrays are frozen after construction; all operations return new meshes.
    Colors are RGB in [0, 1]; normals are unit vectors. Faces must index
    valid vertices and use three distinct indices each.
    """

    vertices: np.ndarray
    faces: np.ndarray
    vertex_normals: np.ndarray | None = None
    vertex_colors: np.ndarray | None = None

    def __post_init__(self):
        self.vertices = _frozen(np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3))
        self.faces = _frozen(np.asarray(self.faces, dtype=np.int64).reshape(-1, 3))
        if self.vertex_normals is not None:
            self.vertex_normals = _frozen(
                np.asarray(self.vertex_normals, dtype=np.float64).reshape(-1, 3)
            )
        if self.vertex_colors is not None:
            self.vertex_colors = _frozen(
                np.asarray(self.vertex_colors, dtype=np.float64).reshape(-1, 3)
            )
        self.validate()

    def validate(self) -> None:
        if not np.all(np.isfinite(self.vertices)):
            raise MeshError("non-finite vertex coordinates")
        if self.faces.size:
            if self.faces.min() < 0 or self.faces.max() >= len(self.vertices):
                raise MeshError(
                    f"face index out of range (max {self.faces.max()}, "
                    f"{len(self.vertices)} vertices)"
                )
            f = self.faces
            if np.any((f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])):
                raise MeshError("degenerate face with repeated vertex index")
        for name, attr in (("normals", self.vertex_normals), ("colors", self.vertex_colors)):
            if attr is not None and len(attr) != len(self.vertices):
                raise MeshError(f"vertex_{name} length does not match vertex count")
        if self.vertex_colors is not None and self.vertex_colors.size:
            if self.vertex_colors.min() < -1e-9 or self.vertex_colors.max() > 1 + 1e-9:
                raise MeshError("vertex colors must lie in [0, 1]")

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @property
    def is_empty(self) -> bool:
        return len(self.vertices) == 0 or len(self.faces) == 0

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        if self.n_vertices == 0:
            raise MeshError("empty mesh has no bounds")
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def transformed(self, transform: RigidTransform) -> "TriangleMesh":
        return TriangleMesh(
            vertices=transform.apply(self.vertices),
            faces=self.faces,
            vertex_normals=(
                None
                if self.vertex_normals is None
                else self.vertex_normals @ transform.rotation.T
            ),
            vertex_colors=self.vertex_colors,
        )

    def triangle_corners(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        v = self.vertices
        return v[self.faces[:, 0]], v[self.faces[:, 1]], v[self.faces[:, 2]]


def face_areas(mesh: TriangleMesh) -> np.ndarray:
    a, b, c = mesh.triangle_corners()
    return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)


def face_normals(mesh: TriangleMesh) -> np.ndarray:
    """Geometric (winding-defined) unit normals for every face.

    Zero-area faces produce zero vectors here; use `face_normal` for the
    checked single-face variant.
    """
    a, b, c = mesh.triangle_corners()
    n = np.cross(b - a, c - a)
    lengths = np.linalg.norm(n, axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        unit = np.where(lengths > 0, n / lengths, 0.0)
    return unit


def face_normal(mesh: TriangleMesh, face_index: int) -> np.ndarray:
    """Unit normal of one face, right-hand rule over the winding order."""
    if not 0 <= face_index < mesh.n_faces:
        raise MeshError(f"face index {face_index} out of range")
    i0, i1, i2 = mesh.faces[face_index]
    v0, v1, v2 = mesh.vertices[i0], mesh.vertices[i1], mesh.vertices[i2]
    n = np.cross(v1 - v0, v2 - v0)
    length = np.linalg.norm(n)
    if length < 1e-12:
        raise MeshError(f"face {face_index} is degenerate (zero area)")
    return n / length


def normalize_mesh(mesh: TriangleMesh) -> tuple[TriangleMesh, RigidTransform]:
    """Center the bounding box at the origin and scale max extent to 1.

    One uniform scale factor is used for all three axes, so shape is
    preserved. Returns the normalized mesh and the original->normalized
    transform.
    """
    if mesh.is_empty:
        raise MeshError("cannot normalize an empty mesh")
    lo, hi = mesh.bounds()
    extent = float((hi - lo).max())
    if extent <= 0:
        raise MeshError("zero-extent mesh (all vertices coincident)")
    center = (lo + hi) / 2.0
    scale = 1.0 / extent
    transform = RigidTransform(np.eye(3), -scale * center, scale)
    return mesh.transformed(transform), transform
