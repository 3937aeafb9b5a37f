"""Blendshape mesh synthesis: displacement assembly, pose, vertex shading."""

from __future__ import annotations

import numpy as np

from .basis import FaceBasis
from .coefficients import CoefficientSet


def _check_dims(c: CoefficientSet, basis: FaceBasis):
    if len(c.shape) != basis.k_shape:
        raise ValueError(f"shape weights have size {len(c.shape)}, basis expects {basis.k_shape}")
    if len(c.expression) != basis.k_expression:
        raise ValueError(
            f"expression weights have size {len(c.expression)}, basis expects {basis.k_expression}")
    if len(c.texture) != basis.k_texture:
        raise ValueError(f"texture weights have size {len(c.texture)}, basis expects {basis.k_texture}")


def rotation_matrix(yaw: float, pitch: float, roll: float) -> np.ndarray:
    """World-space rotation: roll about z after pitch about x after yaw about y."""
    cy, sy = np.cos(yaw), np.sin(yaw)
    cp, sp = np.cos(pitch), np.sin(pitch)
    cr, sr = np.cos(roll), np.sin(roll)
    ry = np.array([[cy, 0.0, sy], [0.0, 1.0, 0.0], [-sy, 0.0, cy]])
    rx = np.array([[1.0, 0.0, 0.0], [0.0, cp, -sp], [0.0, sp, cp]])
    rz = np.array([[cr, -sr, 0.0], [sr, cr, 0.0], [0.0, 0.0, 1.0]])
    return rz @ rx @ ry


def blendshape_vertices(c: CoefficientSet, basis: FaceBasis) -> np.ndarray:
    """Displaced vertices before rotation: mean + shape + jaw, then expression.

    The expression sum is added last so that the difference between two
    coefficient sets differing only in expression is exactly the expression
    term.
    """
    _check_dims(c, basis)
    base = basis.mean_vertices.astype(np.float64)
    base = base + np.tensordot(np.asarray(c.shape, dtype=np.float64),
                               basis.shape_basis.astype(np.float64), axes=1)
    base = base + c.pose.jaw * basis.jaw_field.astype(np.float64)
    return base + np.tensordot(np.asarray(c.expression, dtype=np.float64),
                               basis.expression_basis.astype(np.float64), axes=1)


def vertex_normals(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    tri = vertices[faces]
    face_normal = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    normals = np.zeros_like(vertices)
    for k in range(3):
        np.add.at(normals, faces[:, k], face_normal)
    norm = np.linalg.norm(normals, axis=1, keepdims=True)
    return normals / np.maximum(norm, 1e-12)


def vertex_albedo(c: CoefficientSet, basis: FaceBasis) -> np.ndarray:
    albedo = basis.mean_albedo.astype(np.float64) + np.tensordot(
        np.asarray(c.texture, dtype=np.float64), basis.texture_basis.astype(np.float64), axes=1)
    return np.clip(albedo, 0.0, 1.0)


def synthesize_mesh(c: CoefficientSet, basis: FaceBasis):
    """Posed vertices and Lambert-shaded vertex colors for one coefficient set.

    Returns (vertices (V,3), colors (V,3)); colors are clipped to [0, 1].
    """
    rot = rotation_matrix(c.pose.yaw, c.pose.pitch, c.pose.roll)
    vertices = blendshape_vertices(c, basis) @ rot.T
    normals = vertex_normals(vertices, basis.faces)
    light = np.asarray(c.lighting.direction, dtype=np.float64)
    lambert = np.clip(normals @ light, 0.0, None)
    shade = c.lighting.ambient + c.lighting.intensity * lambert
    colors = np.clip(vertex_albedo(c, basis) * shade[:, None], 0.0, 1.0)
    return vertices, colors
