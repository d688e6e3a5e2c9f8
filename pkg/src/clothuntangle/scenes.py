"""Synthetic garment/body scenes for tests, benchmarks and the CLI."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mesh import GarmentPiece, TriMesh, build_topology

KINDS = ("stackedSheets", "sphereBody", "piercedSheet", "nestedPierce", "poppedPocket")


class InvalidRecipe(ValueError):
    pass


@dataclass
class SceneRecipe:
    kind: str
    resolution: int = 24
    scale: float = 0.6
    gap: float = 0.01
    seed: int = 0
    frames: int = 100
    fps: float = 30.0

    def validate(self):
        if self.kind not in KINDS:
            raise InvalidRecipe(f"unknown scene kind {self.kind!r}; expected one of {', '.join(KINDS)}")
        if not 4 <= self.resolution <= 200:
            raise InvalidRecipe("resolution must be in [4, 200]")
        if not 0.05 <= self.scale <= 10.0:
            raise InvalidRecipe("scale must be in [0.05, 10] m")
        if not 0.0 < self.gap <= 0.2:
            raise InvalidRecipe("gap must be in (0, 0.2] m")
        if self.frames < 0:
            raise InvalidRecipe("frames must be non-negative")
        if self.fps <= 0:
            raise InvalidRecipe("fps must be positive")


@dataclass
class Scene:
    """A generated scene.

    ``garment`` carries the rest shape; ``positions`` are the initial
    positions, which differ from the rest shape for the tangled scenes.
    """

    garment: TriMesh
    positions: np.ndarray
    body: TriMesh | None = None
    body_frames: list[np.ndarray] = field(default_factory=list)
    fps: float = 30.0
    config: dict = field(default_factory=dict)


def grid_sheet(nx: int, ny: int, size_x: float, size_y: float, z: float = 0.0, center=(0.0, 0.0)):
    """Flat rectangular sheet in a z-plane with upward (+z) face normals."""
    xs = np.linspace(-size_x / 2, size_x / 2, nx + 1) + center[0]
    ys = np.linspace(-size_y / 2, size_y / 2, ny + 1) + center[1]
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    pos = np.stack([gx.ravel(), gy.ravel(), np.full(gx.size, z)], axis=1)
    idx = np.arange((nx + 1) * (ny + 1)).reshape(nx + 1, ny + 1)
    v00, v10 = idx[:-1, :-1].ravel(), idx[1:, :-1].ravel()
    v01, v11 = idx[:-1, 1:].ravel(), idx[1:, 1:].ravel()
    faces = np.concatenate([np.stack([v00, v10, v11], 1), np.stack([v00, v11, v01], 1)])
    return pos, faces


def icosphere(radius: float = 1.0, center=(0.0, 0.0, 0.0), subdivisions: int = 2):
    """Closed triangulated sphere with outward normals."""
    t = (1.0 + 5 ** 0.5) / 2.0
    verts = [(-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0), (0, -1, t), (0, 1, t),
             (0, -1, -t), (0, 1, -t), (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1)]
    faces = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11), (1, 5, 9), (5, 11, 4),
             (11, 10, 2), (10, 7, 6), (7, 1, 8), (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8),
             (3, 8, 9), (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    v = [np.array(p, float) / np.linalg.norm(p) for p in verts]
    for _ in range(subdivisions):
        cache: dict[tuple[int, int], int] = {}

        def mid(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = v[a] + v[b]
                v.append(m / np.linalg.norm(m))
                cache[key] = len(v) - 1
            return cache[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new
    pos = np.array(v) * radius + np.asarray(center, float)
    return pos, np.array(faces, dtype=np.int64)


def _combine(parts, density=0.2):
    xs, fs, pieces = [], [], []
    nv = nf = 0
    for label, x, f in parts:
        xs.append(np.asarray(x, float))
        fs.append(np.asarray(f, np.int64) + nv)
        pieces.append(GarmentPiece(label, (nv, nv + len(x)), (nf, nf + len(f))))
        nv += len(x)
        nf += len(f)
    return np.concatenate(xs), np.concatenate(fs), pieces


def _jitter(rng, x, amount):
    return x + rng.uniform(-amount, amount, size=x.shape)


def _static_body(pos, frames):
    return [pos.copy() for _ in range(max(frames, 1))]


def stacked_sheets(recipe: SceneRecipe, layers: int = 2, height: float = 0.0) -> Scene:
    rng = np.random.default_rng(recipe.seed)
    n = recipe.resolution
    h = recipe.scale / n
    parts = []
    for k in range(layers):
        x, f = grid_sheet(n, n, recipe.scale, recipe.scale, z=height + k * recipe.gap,
                          center=(0.31 * h * k, 0.17 * h * k))
        parts.append((f"layer{k}", _jitter(rng, x, 1e-5 * h), f))
    pos, faces, pieces = _combine(parts)
    return Scene(build_topology(pos, faces, pieces=pieces), pos, fps=recipe.fps)


def sphere_body_scene(recipe: SceneRecipe) -> Scene:
    radius = 0.35 * recipe.scale
    scene = stacked_sheets(recipe, layers=2, height=radius + 0.02)
    bpos, bfaces = icosphere(radius, subdivisions=3)
    scene.body = build_topology(bpos, bfaces)
    scene.body_frames = _static_body(bpos, recipe.frames)
    return scene


def _dent(x, y, depth, width):
    return -depth * np.exp(-(x * x + y * y) / (width * width))


# turns a sheet lying in the xy-plane upright: +z becomes +y, +y becomes -z
_UPRIGHT = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, -1.0, 0.0]])


def pierced_sheet(recipe: SceneRecipe) -> Scene:
    """Two hanging sheets; a wide dent in the front one pokes through the back one.

    The crossing forms one closed ring on each sheet. Both sheets are flat
    and intersection free in their rest shape; only the initial positions
    carry the dent, the way a skinned garment starts out tangled. The sheets
    hang in the xz-plane from their pinned top rows, so gravity pulls along
    them as it does on a worn garment. A sphere behind them approaches by
    2 cm over the first second and sways sideways.
    """
    rng = np.random.default_rng(recipe.seed)
    n = recipe.resolution
    h = recipe.scale / n
    g = recipe.gap
    lower, lf = grid_sheet(n, n, recipe.scale, recipe.scale, z=0.0)
    upper, uf = grid_sheet(n, n, recipe.scale, recipe.scale, z=g, center=(0.37 * h, 0.23 * h))
    lower = _jitter(rng, lower, 1e-5 * h)
    upper = _jitter(rng, upper, 1e-5 * h)
    flat, faces, pieces = _combine([("lower", lower, lf), ("upper", upper, uf)])
    dented = flat.copy()
    nl = len(lower)
    dented[nl:, 2] += _dent(upper[:, 0], upper[:, 1], 4.0 * g, 0.3 * recipe.scale)
    rest, pos = flat @ _UPRIGHT.T, dented @ _UPRIGHT.T
    # top row of each sheet: lowest grid y, which the rotation sends to the largest z
    pinned = []
    for piece in pieces:
        v = np.arange(*piece.vertices)
        z = rest[v, 2]
        pinned += v[z > z.max() - 0.5 * h].tolist()
    scene = Scene(build_topology(rest, faces, pieces=pieces), pos, fps=recipe.fps, config={"pinned": pinned})

    radius = 0.35 * recipe.scale
    bpos, bfaces = icosphere(radius, center=(0.0, -radius - 4.0 * g - 0.02, 0.0), subdivisions=3)
    scene.body = build_topology(bpos, bfaces)
    frames = []
    for t in range(max(recipe.frames, 1)):
        ramp = min(t / recipe.fps, 1.0)
        sway = 0.05 * recipe.scale * np.sin(2.0 * np.pi * t / (2.0 * recipe.fps))
        frames.append(bpos + np.array([sway, 0.02 * ramp, 0.0]))
    scene.body_frames = frames
    return scene


def nested_pierce(recipe: SceneRecipe) -> Scene:
    """Two sheets crossing along two concentric rings (the inner one is nested).

    As in :func:`pierced_sheet` the rest shape is flat and clean.
    """
    rng = np.random.default_rng(recipe.seed)
    n = recipe.resolution
    h = recipe.scale / n
    g = recipe.gap
    lower, lf = grid_sheet(n, n, recipe.scale, recipe.scale, z=0.0)
    upper, uf = grid_sheet(n, n, recipe.scale, recipe.scale, z=g, center=(0.37 * h, 0.23 * h))
    lower = _jitter(rng, lower, 1e-5 * h)
    upper = _jitter(rng, upper, 1e-5 * h)
    rest, faces, pieces = _combine([("lower", lower, lf), ("upper", upper, uf)])
    pos = rest.copy()
    nl = len(lower)
    pos[nl:, 2] += _dent(upper[:, 0], upper[:, 1], 3.0 * g, 0.3 * recipe.scale)
    pos[:nl, 2] += _dent(lower[:, 0], lower[:, 1], 4.0 * g, 0.1 * recipe.scale)
    return Scene(build_topology(rest, faces, pieces=pieces), pos, fps=recipe.fps)


def popped_pocket(recipe: SceneRecipe) -> Scene:
    """A pocket strip that has popped out through a closed two-layer garment.

    The inner and outer layers are sewn together along their whole perimeter,
    so they enclose a closed bag. The pocket strip is sewn to the inner layer
    inside the bag, leaves it through the outer layer, and its free end is
    pinned outside. No local motion can remove the crossing.
    """
    rng = np.random.default_rng(recipe.seed)
    n = recipe.resolution
    h = recipe.scale / n
    g = max(recipe.gap, h)
    inner, inf_ = grid_sheet(n, n, recipe.scale, recipe.scale, z=0.0)
    inner = _jitter(rng, inner, 1e-5 * h)
    nv_in = len(inner)

    # outer layer: same grid, interior lifted by g, perimeter shared with the inner layer
    ij = np.arange((n + 1) * (n + 1)).reshape(n + 1, n + 1)
    border = np.zeros((n + 1, n + 1), dtype=bool)
    border[0, :] = border[-1, :] = border[:, 0] = border[:, -1] = True
    outer_id = np.where(border, ij, 0)
    interior = np.flatnonzero(~border.ravel())
    outer_id.ravel()[interior] = nv_in + np.arange(len(interior))
    _, grid_faces = grid_sheet(n, n, recipe.scale, recipe.scale)
    outf = outer_id.ravel()[grid_faces]
    outer = _jitter(rng, inner[interior] + np.array([0.0, 0.0, g]), 1e-5 * h)

    half = max(2, n // 8)
    j0, j1 = n // 2 - half, n // 2 + half
    ia = n // 2 - max(2, n // 6)
    seam = ij[ia, j0:j1 + 1]
    x_seam = inner[seam]
    shift = np.array([0.37 * h, 0.23 * h, 0.0])
    rise = g + 3.0 * h
    steps_up = max(3, int(np.ceil(rise / h)))
    path = [(0.0, rise * k / steps_up) for k in range(1, steps_up + 1)]
    path += [(k * h, rise) for k in range(1, 5)]
    strip = np.array([x_seam[c] + shift + np.array([dx, 0.0, dz]) for dx, dz in path for c in range(len(seam))])
    strip = _jitter(rng, strip, 1e-5 * h)
    strip_start = nv_in + len(outer)
    ncol = len(seam)
    rows = len(path)

    def vid(r, c):
        return seam[c] if r == 0 else strip_start + (r - 1) * ncol + c

    sf = []
    for r in range(rows):
        for c in range(ncol - 1):
            a, b, cc, d = vid(r, c), vid(r + 1, c), vid(r + 1, c + 1), vid(r, c + 1)
            sf += [(a, b, cc), (a, cc, d)]
    pos = np.concatenate([inner, outer, strip])
    faces = np.concatenate([inf_, outf, np.array(sf, dtype=np.int64)])
    nf_in, nf_out = len(inf_), len(outf)
    pieces = [
        GarmentPiece("inner", (0, nv_in), (0, nf_in)),
        GarmentPiece("outer", (nv_in, strip_start), (nf_in, nf_in + nf_out)),
        GarmentPiece("pocket", (strip_start, len(pos)), (nf_in + nf_out, len(faces))),
    ]
    pinned = list(range(strip_start + (rows - 1) * ncol, len(pos)))
    return Scene(build_topology(pos, faces, pieces=pieces), pos, fps=recipe.fps, config={"pinned": pinned})


def sphere_through_sheet(sheet_res: int = 16, sheet_size: float = 1.0, radius: float = 0.25,
                         subdivisions: int = 2, offset=(0.013, 0.021, 0.017)):
    """A closed sphere piercing the middle of a flat sheet (for contour tests)."""
    sx, sf = grid_sheet(sheet_res, sheet_res, sheet_size, sheet_size)
    bx, bf = icosphere(radius, center=offset, subdivisions=subdivisions)
    pos, faces, pieces = _combine([("sheet", sx, sf), ("sphere", bx, bf)])
    return build_topology(pos, faces, pieces=pieces), pos


def sphere_patch_through_sheet(sheet_res: int = 16, sheet_size: float = 1.0, radius: float = 0.25,
                               subdivisions: int = 2, depth: float = 0.04, cap: float = 0.5,
                               offset=(0.013, 0.021)):
    """An open spherical cap whose apex is pushed ``depth`` through a flat sheet.

    The cap keeps the sphere faces whose vertices all lie above ``cap * radius``
    of the sphere centre, so its rim stays well below the sheet.
    """
    sx, sf = grid_sheet(sheet_res, sheet_res, sheet_size, sheet_size)
    bx, bf = icosphere(radius, subdivisions=subdivisions)
    keep = (bx[bf, 2] > cap * radius).all(axis=1)
    used, bf = np.unique(bf[keep], return_inverse=True)
    bx = bx[used] + np.array([offset[0], offset[1], depth - radius])
    pos, faces, pieces = _combine([("sheet", sx, sf), ("patch", bx, bf.reshape(-1, 3))])
    return build_topology(pos, faces, pieces=pieces), pos


def generate(recipe: SceneRecipe) -> Scene:
    recipe.validate()
    builders = {
        "stackedSheets": stacked_sheets,
        "sphereBody": sphere_body_scene,
        "piercedSheet": pierced_sheet,
        "nestedPierce": nested_pierce,
        "poppedPocket": popped_pocket,
    }
    return builders[recipe.kind](recipe)
