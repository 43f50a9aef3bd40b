"""Desk-scale test scenes shared by the test suite and the CLI examples."""
from __future__ import annotations

import numpy as np

from .refsim import ElasticModel


def chain(n: int = 10, spacing: float = 0.1, stiffness: float = 200.0,
          mass: float = 0.1) -> ElasticModel:
    """Hanging chain of n vertices along -y, pinned at the top."""
    rest = np.zeros((n, 3))
    rest[:, 1] = -spacing * np.arange(n)
    springs = tuple((i, i + 1, spacing, stiffness) for i in range(n - 1))
    return ElasticModel(rest_positions=rest, springs=springs,
                        vertex_masses=np.full(n, mass),
                        fixed_vertices=frozenset({0}))


def strip(rows: int = 6, cols: int = 2, spacing: float = 0.1,
          stiffness: float = 400.0, mass: float = 0.05) -> ElasticModel:
    """Planar cantilevered strip in the xy plane, pinned along the top row.

    Cross-braced so the truss resists shear; rows extend downward in -y.
    """
    rest = np.zeros((rows * cols, 3))
    for r in range(rows):
        for c in range(cols):
            rest[r * cols + c] = (spacing * c, -spacing * r, 0.0)

    def vid(r, c):
        return r * cols + c

    springs = []

    def add(a, b):
        springs.append((a, b, float(np.linalg.norm(rest[a] - rest[b])), stiffness))

    for r in range(rows):
        for c in range(cols):
            if c + 1 < cols:
                add(vid(r, c), vid(r, c + 1))
            if r + 1 < rows:
                add(vid(r, c), vid(r + 1, c))
            if r + 1 < rows and c + 1 < cols:
                add(vid(r, c), vid(r + 1, c + 1))
                add(vid(r, c + 1), vid(r + 1, c))
    fixed = frozenset(vid(0, c) for c in range(cols))
    return ElasticModel(rest_positions=rest, springs=tuple(springs),
                        vertex_masses=np.full(rows * cols, mass),
                        fixed_vertices=fixed)


def pneumatic_beam(layers: int = 7, width: float = 0.06, layer_height: float = 0.05,
                   stiffness: float = 300.0, mass: float = 0.05,
                   n_chambers: int = 3):
    """Cantilevered square-section beam with pressure chambers on one wall.

    Returns (ElasticModel, chambers): a vertical beam of 4-vertex layers,
    pinned at the bottom layer, with triangulated chamber faces on the x = 0
    wall whose outward normals point along -x.  The layers are split into
    ``n_chambers`` contiguous bands.
    """
    corners = [(0.0, 0.0), (width, 0.0), (0.0, width), (width, width)]  # (x, z)
    n = 4 * (layers + 1)
    rest = np.zeros((n, 3))

    def vid(layer, c):
        return 4 * layer + c

    for layer in range(layers + 1):
        for c, (x, z) in enumerate(corners):
            rest[vid(layer, c)] = (x, layer_height * layer, z)

    springs = []
    seen = set()

    def add(a, b):
        key = (min(a, b), max(a, b))
        if key in seen:
            return
        seen.add(key)
        springs.append((a, b, float(np.linalg.norm(rest[a] - rest[b])), stiffness))

    for layer in range(layers + 1):
        # in-layer edges and diagonals
        ids = [vid(layer, c) for c in range(4)]
        for a in range(4):
            for b in range(a + 1, 4):
                add(ids[a], ids[b])
        if layer < layers:
            for c in range(4):
                add(vid(layer, c), vid(layer + 1, c))
            # shear bracing between layers
            for a in range(4):
                for b in range(4):
                    if a != b:
                        add(vid(layer, a), vid(layer + 1, b))

    faces_per_band = [[] for _ in range(n_chambers)]
    for layer in range(layers):
        band = min(layer * n_chambers // layers, n_chambers - 1)
        a, b = vid(layer, 0), vid(layer, 2)
        c, d = vid(layer + 1, 0), vid(layer + 1, 2)
        # winding chosen so the area normal points along -x (outward)
        faces_per_band[band].append((a, b, c))
        faces_per_band[band].append((b, d, c))
    chambers = tuple(tuple(f) for f in faces_per_band)

    fixed = frozenset(vid(0, c) for c in range(4))
    model = ElasticModel(rest_positions=rest, springs=tuple(springs),
                         vertex_masses=np.full(n, mass), fixed_vertices=fixed)
    return model, chambers
