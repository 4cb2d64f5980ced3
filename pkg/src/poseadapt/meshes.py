"""Simple triangle meshes for the synthetic harness: sphere, box, cylinder."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError


@dataclass(frozen=True)
class TriangleMesh:
    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "vertices", np.asarray(self.vertices, dtype=np.float64))
        object.__setattr__(self, "faces", np.asarray(self.faces, dtype=np.int64))

    def face_areas(self) -> np.ndarray:
        v0 = self.vertices[self.faces[:, 0]]
        v1 = self.vertices[self.faces[:, 1]]
        v2 = self.vertices[self.faces[:, 2]]
        return 0.5 * np.linalg.norm(np.cross(v1 - v0, v2 - v0), axis=1)


def make_sphere(radius: float, stacks: int = 24, sectors: int = 48) -> TriangleMesh:
    """UV-sphere centered at the origin."""
    verts = [(0.0, 0.0, radius)]
    for i in range(1, stacks):
        phi = np.pi * i / stacks
        for j in range(sectors):
            theta = 2.0 * np.pi * j / sectors
            verts.append(
                (
                    radius * np.sin(phi) * np.cos(theta),
                    radius * np.sin(phi) * np.sin(theta),
                    radius * np.cos(phi),
                )
            )
    verts.append((0.0, 0.0, -radius))
    top, bottom = 0, len(verts) - 1

    def ring(i, j):
        return 1 + (i - 1) * sectors + (j % sectors)

    faces = []
    for j in range(sectors):
        faces.append((top, ring(1, j), ring(1, j + 1)))
        faces.append((bottom, ring(stacks - 1, j + 1), ring(stacks - 1, j)))
    for i in range(1, stacks - 1):
        for j in range(sectors):
            a, b = ring(i, j), ring(i, j + 1)
            c, d = ring(i + 1, j), ring(i + 1, j + 1)
            faces.append((a, c, d))
            faces.append((a, d, b))
    return TriangleMesh(np.array(verts), np.array(faces))


def make_box(extents) -> TriangleMesh:
    """Axis-aligned box centered at the origin; extents = full side lengths."""
    ex, ey, ez = (float(e) / 2.0 for e in extents)
    v = np.array(
        [
            [-ex, -ey, -ez], [ex, -ey, -ez], [ex, ey, -ez], [-ex, ey, -ez],
            [-ex, -ey, ez], [ex, -ey, ez], [ex, ey, ez], [-ex, ey, ez],
        ]
    )
    quads = [
        (0, 1, 2, 3), (4, 7, 6, 5), (0, 4, 5, 1),
        (1, 5, 6, 2), (2, 6, 7, 3), (3, 7, 4, 0),
    ]
    faces = []
    for a, b, c, d in quads:
        faces.append((a, b, c))
        faces.append((a, c, d))
    return TriangleMesh(v, np.array(faces))


def make_cylinder(radius: float, height: float, sectors: int = 48) -> TriangleMesh:
    """Cylinder along z, centered at the origin."""
    hz = height / 2.0
    theta = 2.0 * np.pi * np.arange(sectors) / sectors
    bottom_ring = np.stack(
        [radius * np.cos(theta), radius * np.sin(theta), np.full(sectors, -hz)], axis=1
    )
    top_ring = bottom_ring.copy()
    top_ring[:, 2] = hz
    verts = np.vstack([bottom_ring, top_ring, [[0, 0, -hz]], [[0, 0, hz]]])
    bc, tc = 2 * sectors, 2 * sectors + 1
    faces = []
    for j in range(sectors):
        a, b = j, (j + 1) % sectors
        c, d = sectors + j, sectors + (j + 1) % sectors
        faces.append((a, b, d))
        faces.append((a, d, c))
        faces.append((bc, b, a))
        faces.append((tc, c, d))
    return TriangleMesh(verts, np.array(faces))


_UNIT_CACHE: dict = {}


def make_shape(kind: str, size: float) -> TriangleMesh:
    """Primitive by name; `size` is the characteristic radius in meters."""
    unit = _UNIT_CACHE.get(kind)
    if unit is None:
        if kind == "sphere":
            unit = make_sphere(1.0)
        elif kind == "box":
            # Unequal sides so the shape has no rotational symmetry.
            unit = make_box((2.0, 1.4, 0.9))
        elif kind == "cylinder":
            unit = make_cylinder(0.7, 2.0)
        else:
            raise ConfigurationError(f"unknown shape kind {kind!r}")
        _UNIT_CACHE[kind] = unit
    return TriangleMesh(unit.vertices * float(size), unit.faces)
