"""Procedural object library for dataset generation.

Flat-bottomed extruded shapes that rest stably and are top-down graspable.
Footprints are yaw-asymmetric (except the hex prism) so the kitting pose is
unambiguous under small rotations. Dimensions are jittered per seed.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidArgumentError
from .mesh import TriMesh, cylinder_mesh, prism_mesh


def _jitter(rng, lo, hi):
    return float(rng.uniform(lo, hi))


def l_prism(rng) -> TriMesh:
    w = _jitter(rng, 0.7, 1.0)
    d = _jitter(rng, 0.7, 1.0)
    ax = _jitter(rng, 0.3, 0.5) * w
    ay = _jitter(rng, 0.3, 0.5) * d
    poly = [(0, 0), (w, 0), (w, ay), (ax, ay), (ax, d), (0, d)]
    return prism_mesh(np.array(poly), _jitter(rng, 0.4, 0.9))


def t_prism(rng) -> TriMesh:
    w = 1.0
    bar = _jitter(rng, 0.25, 0.4)
    stem = _jitter(rng, 0.25, 0.4)
    off = _jitter(rng, 0.15, 0.45)  # off-center stem keeps the footprint asymmetric
    poly = [(0, 0), (w, 0), (w, bar), (off + stem, bar), (off + stem, 1.0), (off, 1.0), (off, bar), (0, bar)]
    return prism_mesh(np.array(poly), _jitter(rng, 0.4, 0.8))


def u_prism(rng) -> TriMesh:
    w = 1.0
    wall_l = _jitter(rng, 0.2, 0.3)
    wall_r = _jitter(rng, 0.3, 0.45)  # unequal walls
    base = _jitter(rng, 0.25, 0.4)
    d = _jitter(rng, 0.7, 1.0)
    poly = [
        (0, 0), (w, 0), (w, d), (w - wall_r, d), (w - wall_r, base),
        (wall_l, base), (wall_l, d), (0, d),
    ]
    return prism_mesh(np.array(poly), _jitter(rng, 0.4, 0.8))


def notched_box(rng) -> TriMesh:
    w = _jitter(rng, 0.8, 1.0)
    d = _jitter(rng, 0.6, 0.9)
    nx = _jitter(rng, 0.25, 0.45) * w
    ny = _jitter(rng, 0.25, 0.45) * d
    poly = [(0, 0), (w, 0), (w, d - ny), (w - nx, d - ny), (w - nx, d), (0, d)]
    return prism_mesh(np.array(poly), _jitter(rng, 0.4, 0.9))


def trapezoid_prism(rng) -> TriMesh:
    w = 1.0
    d = _jitter(rng, 0.6, 0.9)
    skew = _jitter(rng, 0.15, 0.35)
    top = _jitter(rng, 0.45, 0.7)
    poly = [(0, 0), (w, 0), (skew + top, d), (skew, d)]
    return prism_mesh(np.array(poly), _jitter(rng, 0.4, 0.9))


def cross_prism(rng) -> TriMesh:
    # unequal arm widths break the 4-fold symmetry
    a = _jitter(rng, 0.2, 0.3)
    b = _jitter(rng, 0.32, 0.45)
    x0 = _jitter(rng, 0.2, 0.35)
    y0 = _jitter(rng, 0.2, 0.35)
    poly = [
        (x0, 0), (x0 + a, 0), (x0 + a, y0), (1, y0), (1, y0 + b),
        (x0 + a, y0 + b), (x0 + a, 1), (x0, 1), (x0, y0 + b), (0, y0 + b), (0, y0), (x0, y0),
    ]
    return prism_mesh(np.array(poly), _jitter(rng, 0.4, 0.8))


def hex_prism(rng) -> TriMesh:
    r = _jitter(rng, 0.4, 0.5)
    ang = 2 * np.pi * np.arange(6) / 6
    # stretched along x so yaw symmetry drops to 180 deg
    poly = np.column_stack([1.3 * r * np.cos(ang), r * np.sin(ang)])
    return prism_mesh(poly, _jitter(rng, 0.4, 0.9))


def d_prism(rng) -> TriMesh:
    # half-disc with a flat chord
    r = _jitter(rng, 0.4, 0.5)
    n = 24
    ang = np.linspace(-0.5 * np.pi, 0.5 * np.pi, n)
    poly = np.column_stack([r * np.cos(ang), r * np.sin(ang)])
    poly = np.vstack([poly, [[-_jitter(rng, 0.2, 0.5) * r, r], [-_jitter(rng, 0.2, 0.5) * r, -r]][::-1]])
    return prism_mesh(poly, _jitter(rng, 0.4, 0.8))


def round_peg(rng) -> TriMesh:
    return cylinder_mesh(_jitter(rng, 0.3, 0.5), _jitter(rng, 0.5, 1.0), segments=36)


OBJECT_KINDS = {
    "l_prism": l_prism,
    "t_prism": t_prism,
    "u_prism": u_prism,
    "notched_box": notched_box,
    "trapezoid_prism": trapezoid_prism,
    "cross_prism": cross_prism,
    "hex_prism": hex_prism,
    "d_prism": d_prism,
    "round_peg": round_peg,
}

# footprints with a unique upright fit (no yaw symmetry); used for exact-fit suites
ASYMMETRIC_KINDS = ("l_prism", "t_prism", "u_prism", "notched_box", "trapezoid_prism", "cross_prism")


def make_object(kind: str, seed: int) -> TriMesh:
    """Deterministic object of the given kind; unit-scale, centered later."""
    if kind not in OBJECT_KINDS:
        raise InvalidArgumentError(f"unknown object kind {kind!r}; known: {sorted(OBJECT_KINDS)}")
    rng = np.random.default_rng(np.random.SeedSequence([hash_kind(kind), seed]))
    return OBJECT_KINDS[kind](rng)


def hash_kind(kind: str) -> int:
    return int.from_bytes(kind.encode()[:8].ljust(8, b"\0"), "little") % (2**31)


def random_object(rng: np.random.Generator, kinds=ASYMMETRIC_KINDS) -> tuple[str, TriMesh]:
    kind = str(rng.choice(list(kinds)))
    seed = int(rng.integers(0, 2**31))
    return f"{kind}-{seed}", make_object(kind, seed)
