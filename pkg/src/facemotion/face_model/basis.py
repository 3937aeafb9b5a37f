"""Procedural blendshape head model and its versioned binary asset.

The basis is a low-poly closed head mesh (lat-long sphere deformed into a
head shape) with seeded smooth random displacement fields for shape and
expression, a jaw-open field, a painted mean albedo, texture color fields,
per-vertex region labels (skin / eye / mouth) and 68 landmark vertices.
Everything is bilaterally symmetric in x by construction, built once from a
seed and shipped as an asset file.
"""

from __future__ import annotations

import hashlib
import struct
import zlib
from dataclasses import dataclass

import numpy as np

ASSET_MAGIC = b"FBAS"
ASSET_VERSION = 1
N_LANDMARKS = 68

# region label values (0 is reserved for image background)
SKIN, EYE, MOUTH = 1, 2, 3
REGION_NAMES = {0: "background", SKIN: "skin", EYE: "eye", MOUTH: "mouth"}
N_REGIONS = 4


class BasisAssetError(Exception):
    """Raised for malformed, truncated, or corrupted basis asset files."""


@dataclass
class FaceBasis:
    mean_vertices: np.ndarray      # (V, 3) float32, unit bounding sphere
    shape_basis: np.ndarray        # (K_shape, V, 3) float32
    expression_basis: np.ndarray   # (K_exp, V, 3) float32
    jaw_field: np.ndarray          # (V, 3) float32
    mean_albedo: np.ndarray        # (V, 3) float32 in [0, 1]
    texture_basis: np.ndarray      # (K_tex, V, 3) float32
    faces: np.ndarray              # (F, 3) int32, outward-oriented triangles
    region_labels: np.ndarray      # (V,) int32 in {SKIN, EYE, MOUTH}
    landmark_indices: np.ndarray   # (68,) int32

    @property
    def n_vertices(self) -> int:
        return self.mean_vertices.shape[0]

    @property
    def k_shape(self) -> int:
        return self.shape_basis.shape[0]

    @property
    def k_expression(self) -> int:
        return self.expression_basis.shape[0]

    @property
    def k_texture(self) -> int:
        return self.texture_basis.shape[0]


# ---------------------------------------------------------------------------
# mesh construction helpers

def _sphere_grid(n_lat: int, n_lon: int):
    """Lat-long sphere with poles; +z is the face direction, +y is up.
    x coordinates are exactly antisymmetric under the mirror map."""
    colat = np.pi * np.arange(1, n_lat + 1) / (n_lat + 1)
    lon = 2.0 * np.pi * np.arange(n_lon) / n_lon
    y = np.cos(colat)[:, None].repeat(n_lon, axis=1)
    r = np.sin(colat)[:, None]
    x = r * np.sin(lon)[None, :]
    z = r * np.cos(lon)[None, :]

    mirror_j = (-np.arange(n_lon)) % n_lon
    x = 0.5 * (x - x[:, mirror_j])
    z = 0.5 * (z + z[:, mirror_j])

    grid = np.stack([x, y, z], axis=-1).reshape(-1, 3)
    verts = np.concatenate([[[0.0, 1.0, 0.0]], grid, [[0.0, -1.0, 0.0]]], axis=0)

    # vertex index helpers
    def gid(i, j):
        return 1 + i * n_lon + (j % n_lon)

    top, bottom = 0, verts.shape[0] - 1
    faces = []
    for j in range(n_lon):
        faces.append([top, gid(0, j), gid(0, j + 1)])
    # Quad column j mirrors onto column n_lon-1-j, and mirroring swaps the
    # two quad diagonals, so the split direction must swap across the plane
    # of symmetry for interpolated renders to mirror exactly.
    for i in range(n_lat - 1):
        for j in range(n_lon):
            a, b = gid(i, j), gid(i, j + 1)
            c, d = gid(i + 1, j), gid(i + 1, j + 1)
            if j < n_lon // 2:
                faces.append([a, c, b])
                faces.append([b, c, d])
            else:
                faces.append([a, c, d])
                faces.append([a, d, b])
    for j in range(n_lon):
        faces.append([bottom, gid(n_lat - 1, j + 1), gid(n_lat - 1, j)])
    faces = np.asarray(faces, dtype=np.int64)

    # orient every triangle outward (vertices lie on a sphere around origin)
    v = verts[faces]
    normal = np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])
    center = v.mean(axis=1)
    flip = np.einsum("ij,ij->i", normal, center) < 0
    faces[flip] = faces[flip][:, [0, 2, 1]]

    # mirror partner for every vertex (exact by construction)
    mirror = np.empty(verts.shape[0], dtype=np.int64)
    mirror[top], mirror[bottom] = top, bottom
    for i in range(n_lat):
        for j in range(n_lon):
            mirror[gid(i, j)] = gid(i, (-j) % n_lon)
    return verts, faces, mirror


def _angular_bump(dirs, center, width):
    center = np.asarray(center, dtype=np.float64)
    center = center / np.linalg.norm(center)
    cosd = np.clip(dirs @ center, -1.0, 1.0)
    d = np.arccos(cosd)
    return np.exp(-0.5 * (d / width) ** 2)


def _vertex_adjacency(n_vertices, faces):
    edges = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    edges = np.unique(np.sort(edges, axis=1), axis=0)
    return edges


def _smooth_field(field, edges, n_vertices, iterations):
    """Graph-Laplacian smoothing: repeated half-step neighbor averaging."""
    degree = np.zeros(n_vertices)
    np.add.at(degree, edges[:, 0], 1.0)
    np.add.at(degree, edges[:, 1], 1.0)
    degree = degree[:, None]
    out = field.copy()
    for _ in range(iterations):
        acc = np.zeros_like(out)
        np.add.at(acc, edges[:, 0], out[edges[:, 1]])
        np.add.at(acc, edges[:, 1], out[edges[:, 0]])
        out = 0.5 * out + 0.5 * acc / degree
    return out


def _symmetrize_displacement(field, mirror):
    """Average a vector field with its mirror image: x components flip sign."""
    reflected = field[mirror].copy()
    reflected[:, 0] = -reflected[:, 0]
    return 0.5 * (field + reflected)


def _symmetrize_scalarlike(field, mirror):
    return 0.5 * (field + field[mirror])


def _direction(az, el):
    """Unit vector from azimuth (around +y, 0 = facing camera) and elevation."""
    az, el = np.radians(az), np.radians(el)
    return np.array([np.sin(az) * np.cos(el), np.sin(el), np.cos(az) * np.cos(el)])


def _landmark_targets():
    """68 target directions following the usual jaw/brows/nose/eyes/mouth layout."""
    targets = []
    # 0-16 jaw contour (left ear across the chin to right ear)
    for t in np.linspace(-1.0, 1.0, 17):
        az = -78.0 * t
        el = -14.0 - 38.0 * (1.0 - t * t)
        targets.append(_direction(az, el))
    # 17-26 eyebrows (left then right)
    for side in (+1, -1):
        for t in np.linspace(-1.0, 1.0, 5):
            targets.append(_direction(side * (27.0 + 10.0 * t), 24.0 + 4.0 * (1 - t * t)))
    # 27-30 nose bridge, 31-35 nose base
    for el in np.linspace(12.0, -6.0, 4):
        targets.append(_direction(0.0, el))
    for az in np.linspace(-11.0, 11.0, 5):
        targets.append(_direction(az, -13.0))
    # 36-47 eyes: six points around each eye center
    for side in (+1, -1):
        for k in range(6):
            ang = 2.0 * np.pi * k / 6.0
            targets.append(_direction(side * (24.0 + 8.0 * np.cos(ang)), 12.0 + 5.0 * np.sin(ang)))
    # 48-59 outer mouth ring, 60-67 inner ring
    for k in range(12):
        ang = 2.0 * np.pi * k / 12.0
        targets.append(_direction(16.0 * np.cos(ang), -30.0 + 7.0 * np.sin(ang)))
    for k in range(8):
        ang = 2.0 * np.pi * k / 8.0
        targets.append(_direction(9.0 * np.cos(ang), -30.0 + 3.5 * np.sin(ang)))
    return np.asarray(targets)


def build_face_basis(seed: int = 0, n_lat: int = 30, n_lon: int = 32,
                     k_shape: int = 10, k_expression: int = 10,
                     k_texture: int = 10) -> FaceBasis:
    rng = np.random.default_rng(np.random.SeedSequence([0xFACE, int(seed)]))
    sphere, faces, mirror = _sphere_grid(n_lat, n_lon)
    dirs = sphere.copy()
    n_vertices = sphere.shape[0]
    edges = _vertex_adjacency(n_vertices, faces)

    # head shape: squashed ellipsoid with a nose bump and a slight chin
    verts = sphere * np.array([0.80, 1.0, 0.86])
    nose = _angular_bump(dirs, _direction(0.0, -6.0), 0.20)
    verts[:, 2] += 0.17 * nose
    verts[:, 1] -= 0.03 * nose
    chin = _angular_bump(dirs, _direction(0.0, -58.0), 0.32)
    verts[:, 1] -= 0.06 * chin
    verts[:, 2] += 0.04 * chin
    verts = _symmetrize_displacement(verts, mirror)
    verts /= np.linalg.norm(verts, axis=1).max()

    # region labels from angular discs on the unit directions
    labels = np.full(n_vertices, SKIN, dtype=np.int64)
    for side in (+1, -1):
        labels[_angular_bump(dirs, _direction(side * 24.0, 12.0), 1.0) > np.exp(-0.5 * (0.17) ** 2)] = EYE
    mouth_mask = _angular_bump(dirs, _direction(0.0, -30.0), 1.0) > np.exp(-0.5 * (0.20) ** 2)
    labels[mouth_mask] = MOUTH
    labels = np.where(labels[mirror] > labels, labels[mirror], labels)  # symmetric labels

    # landmarks: nearest distinct vertex per target direction
    targets = _landmark_targets()
    landmark_indices = np.full(N_LANDMARKS, -1, dtype=np.int64)
    taken = set()
    for i, t in enumerate(targets):
        order = np.argsort(-(dirs @ t))
        for cand in order:
            if int(cand) not in taken:
                landmark_indices[i] = cand
                taken.add(int(cand))
                break

    front = np.clip(dirs[:, 2], 0.0, None) ** 2  # expressions act on the face side

    def displacement_fields(count, rms, weight=None):
        fields = []
        for _ in range(count):
            f = rng.standard_normal((n_vertices, 3))
            f = _smooth_field(f, edges, n_vertices, iterations=24)
            if weight is not None:
                f = f * weight[:, None]
            f = _symmetrize_displacement(f, mirror)
            f *= rms / np.sqrt(np.mean(f ** 2))
            fields.append(f)
        return np.stack(fields)

    shape_basis = displacement_fields(k_shape, rms=0.035)
    expression_basis = displacement_fields(k_expression, rms=0.045, weight=front)

    # jaw-open field: everything below the mouth line swings down and
    # slightly back, with a ramp broad enough to read at coarse resolutions
    below = np.clip((-0.35 - dirs[:, 1]) / 0.45, 0.0, 1.0)
    jaw_weight = (below ** 1.5) * np.clip(dirs[:, 2] + 0.3, 0.0, 1.0)
    jaw_field = np.zeros((n_vertices, 3))
    jaw_field[:, 1] = -0.30 * jaw_weight
    jaw_field[:, 2] = -0.05 * jaw_weight
    jaw_field = _symmetrize_displacement(_smooth_field(jaw_field, edges, n_vertices, 2), mirror)

    # albedo: painted region colors plus structured multi-scale mottling.
    # The markings are deliberately strong so that every surface point has
    # a local visual signature; downstream correspondence and coefficient
    # regression both rely on the skin not being featureless.
    palette = {SKIN: (0.78, 0.60, 0.50), EYE: (0.16, 0.14, 0.18), MOUTH: (0.62, 0.26, 0.26)}
    albedo = np.array([palette[int(l)] for l in labels], dtype=np.float64)
    albedo = _smooth_field(albedo, edges, n_vertices, iterations=2)
    coarse = _smooth_field(rng.standard_normal((n_vertices, 3)), edges, n_vertices, 12)
    fine = _smooth_field(rng.standard_normal((n_vertices, 3)), edges, n_vertices, 4)
    albedo += 0.12 * coarse / np.sqrt(np.mean(coarse ** 2))
    albedo += 0.06 * fine / np.sqrt(np.mean(fine ** 2))
    albedo = np.clip(_symmetrize_scalarlike(albedo, mirror), 0.0, 1.0)

    texture_fields = []
    for _ in range(k_texture):
        f = _smooth_field(rng.standard_normal((n_vertices, 3)), edges, n_vertices, 24)
        f = _symmetrize_scalarlike(f, mirror)
        f *= 0.07 / np.sqrt(np.mean(f ** 2))
        texture_fields.append(f)
    texture_basis = np.stack(texture_fields)

    return FaceBasis(
        mean_vertices=verts.astype(np.float32),
        shape_basis=shape_basis.astype(np.float32),
        expression_basis=expression_basis.astype(np.float32),
        jaw_field=jaw_field.astype(np.float32),
        mean_albedo=albedo.astype(np.float32),
        texture_basis=texture_basis.astype(np.float32),
        faces=faces.astype(np.int32),
        region_labels=labels.astype(np.int32),
        landmark_indices=landmark_indices.astype(np.int32),
    )


def mirror_permutation(basis: FaceBasis) -> np.ndarray:
    """Recover the mirror partner of every vertex from mean geometry alone."""
    verts = basis.mean_vertices.astype(np.float64)
    reflected = verts * np.array([-1.0, 1.0, 1.0])
    perm = np.empty(verts.shape[0], dtype=np.int64)
    for i, p in enumerate(reflected):
        perm[i] = int(np.argmin(np.einsum("ij,ij->i", verts - p, verts - p)))
    return perm


# ---------------------------------------------------------------------------
# asset serialization

_HEADER = struct.Struct("<4sIIIIIII")  # magic, version, V, F, K_shape, K_exp, K_tex, n_landmarks


def save_basis(basis: FaceBasis, path) -> None:
    blob = bytearray()
    blob += _HEADER.pack(ASSET_MAGIC, ASSET_VERSION, basis.n_vertices, basis.faces.shape[0],
                         basis.k_shape, basis.k_expression, basis.k_texture, N_LANDMARKS)
    for arr, dtype in [
        (basis.mean_vertices, "<f4"), (basis.shape_basis, "<f4"),
        (basis.expression_basis, "<f4"), (basis.jaw_field, "<f4"),
        (basis.mean_albedo, "<f4"), (basis.texture_basis, "<f4"),
        (basis.faces, "<i4"), (basis.region_labels, "<i4"),
        (basis.landmark_indices, "<i4"),
    ]:
        blob += np.ascontiguousarray(arr, dtype=dtype).tobytes()
    blob += struct.pack("<I", zlib.crc32(bytes(blob)) & 0xFFFFFFFF)
    with open(path, "wb") as fh:
        fh.write(blob)


def load_basis(path) -> FaceBasis:
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise BasisAssetError(f"cannot read basis asset {path}: {exc}") from exc
    if len(blob) < _HEADER.size + 4 or blob[:4] != ASSET_MAGIC:
        raise BasisAssetError(f"{path} is not a face basis asset")
    (stored,) = struct.unpack_from("<I", blob, len(blob) - 4)
    if zlib.crc32(blob[:-4]) & 0xFFFFFFFF != stored:
        raise BasisAssetError(f"checksum mismatch in basis asset {path}")
    magic, version, n_v, n_f, k_s, k_e, k_t, n_lm = _HEADER.unpack_from(blob, 0)
    if version != ASSET_VERSION:
        raise BasisAssetError(f"unsupported basis asset version {version}")

    offset = _HEADER.size

    def take(shape, dtype):
        nonlocal offset
        count = int(np.prod(shape))
        nbytes = count * 4
        arr = np.frombuffer(blob, dtype=dtype, count=count, offset=offset).reshape(shape).copy()
        offset += nbytes
        return arr

    basis = FaceBasis(
        mean_vertices=take((n_v, 3), "<f4"),
        shape_basis=take((k_s, n_v, 3), "<f4"),
        expression_basis=take((k_e, n_v, 3), "<f4"),
        jaw_field=take((n_v, 3), "<f4"),
        mean_albedo=take((n_v, 3), "<f4"),
        texture_basis=take((k_t, n_v, 3), "<f4"),
        faces=take((n_f, 3), "<i4"),
        region_labels=take((n_v,), "<i4"),
        landmark_indices=take((n_lm,), "<i4"),
    )
    if offset != len(blob) - 4:
        raise BasisAssetError(f"unexpected payload size in {path}")
    return basis


def basis_fingerprint(basis: FaceBasis) -> str:
    """Short stable hex digest of all basis arrays (for provenance fields)."""
    h = hashlib.sha256()
    for arr, dtype in [
        (basis.mean_vertices, "<f4"), (basis.shape_basis, "<f4"),
        (basis.expression_basis, "<f4"), (basis.jaw_field, "<f4"),
        (basis.mean_albedo, "<f4"), (basis.texture_basis, "<f4"),
        (basis.faces, "<i4"), (basis.region_labels, "<i4"),
        (basis.landmark_indices, "<i4"),
    ]:
        h.update(np.ascontiguousarray(arr, dtype=dtype).tobytes())
    return h.hexdigest()[:16]
