"""
Synthetic rectified stereo scenes with exact ground truth and a LiDAR-like
sparse disparity map.

A scene is a stack of planar layers d(x, y) = a x + b y + c, each with a
support shape and a texture defined in base-image coordinates. Both views
are rendered with a per-pixel z-buffer (larger disparity is nearer): the
matching view looks up, for every pixel x', the layer point at
x = x' + d(x, y) instead of forward-splatting, so occlusions are exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..imagecore import DenseDisparityMap, GrayImage, SparseDisparityMap, round_half_up


@dataclass
class _Texture:
    grids: list          # (grid, spacing) octaves of value noise
    flat: float | None   # constant intensity for textureless layers
    lo_x: float
    lo_y: float

    def sample(self, x, y):
        if self.flat is not None:
            return np.full(np.shape(x), self.flat)
        out = np.zeros(np.shape(x))
        for grid, spacing in self.grids:
            gx = (x - self.lo_x) / spacing
            gy = (y - self.lo_y) / spacing
            gx = np.clip(gx, 0, grid.shape[1] - 1.001)
            gy = np.clip(gy, 0, grid.shape[0] - 1.001)
            ix = gx.astype(np.int64)
            iy = gy.astype(np.int64)
            fx = gx - ix
            fy = gy - iy
            top = grid[iy, ix] * (1 - fx) + grid[iy, ix + 1] * fx
            bot = grid[iy + 1, ix] * (1 - fx) + grid[iy + 1, ix + 1] * fx
            out += top * (1 - fy) + bot * fy
        return out


@dataclass
class _Layer:
    a: float
    b: float
    c: float
    shape: tuple
    texture: _Texture

    def disparity(self, x, y):
        return self.a * x + self.b * y + self.c

    def covers(self, x, y):
        kind = self.shape[0]
        if kind == "all":
            return np.ones(np.shape(x), bool)
        if kind == "rect":
            _, x0, y0, x1, y1 = self.shape
            return (x >= x0) & (x < x1) & (y >= y0) & (y < y1)
        _, cx, cy, rx, ry = self.shape
        return ((x - cx) / rx) ** 2 + ((y - cy) / ry) ** 2 <= 1.0

    def base_x(self, xr, y):
        """Base-image column whose point lands on matching column ``xr``."""
        return (xr + self.b * y + self.c) / (1.0 - self.a)


@dataclass(eq=False)
class SynthScene:
    """Rendered scene. Iterating yields (base, match, gt, lidar)."""

    base: GrayImage
    match: GrayImage
    gt: DenseDisparityMap
    lidar: SparseDisparityMap
    clean_lidar: SparseDisparityMap
    misprojected: np.ndarray
    occluded: np.ndarray
    textureless: np.ndarray
    layer_index: np.ndarray

    def __iter__(self):
        return iter((self.base, self.match, self.gt, self.lidar))

    @property
    def textureless_fraction(self):
        return float(self.textureless.mean())


def _texture(rng, width, height, dmax, flat=None, contrast=1.0):
    lo_x, lo_y = -16.0, -16.0
    grids = []
    if flat is None:
        span_x = width + dmax + 48
        span_y = height + 48
        for spacing, amp in ((1.5, 70.0), (4.0, 45.0), (11.0, 30.0)):
            g = rng.uniform(-amp, amp, (int(span_y / spacing) + 3, int(span_x / spacing) + 3)) * contrast
            grids.append((g, spacing))
        grids.append((np.full((2, 2), rng.uniform(100, 155)), 1e6))
    return _Texture(grids, flat, lo_x, lo_y)


def _layers(rng, width, height, dmax, textureless):
    layers = []
    near = rng.uniform(0.05, 0.12) * dmax
    far_bottom = rng.uniform(0.28, 0.4) * dmax
    layers.append(_Layer(0.0, (far_bottom - near) / height, near, ("all",), _texture(rng, width, height, dmax)))
    if textureless > 0:
        # flat wall in the upper part of the frame, in front of the ground plane there
        area = min(1.0, textureless * 1.5) * width * height
        wall_h = int(min(height * rng.uniform(0.45, 0.6), height))
        wall_w = int(min(width, area / wall_h))
        x0 = int(rng.integers(0, width - wall_w + 1))
        ground = layers[0].disparity(0, wall_h)
        d_wall = ground + rng.uniform(2.0, 5.0)
        flat = float(rng.uniform(80, 180))
        layers.append(_Layer(0.0, 0.0, d_wall, ("rect", x0, -1.0, x0 + wall_w, wall_h),
                             _texture(rng, width, height, dmax, flat=flat)))
    for _ in range(int(rng.integers(3, 7))):
        cw = rng.uniform(0.08, 0.25) * width
        ch = rng.uniform(0.15, 0.45) * height
        cx = rng.uniform(0.1, 0.9) * width
        cy = rng.uniform(0.3, 0.85) * height
        c = rng.uniform(0.4, 0.85) * dmax
        if rng.random() < 0.4:
            a = rng.uniform(-0.03, 0.03)
            b = rng.uniform(-0.03, 0.03)
            c -= a * cx + b * cy
        else:
            a = b = 0.0
        if rng.random() < 0.5:
            shape = ("rect", cx - cw / 2, cy - ch / 2, cx + cw / 2, cy + ch / 2)
        else:
            shape = ("ellipse", cx, cy, cw / 2, ch / 2)
        layers.append(_Layer(a, b, c, shape, _texture(rng, width, height, dmax)))
    return layers


def _render_base(layers, xs, ys):
    depth = np.full(xs.shape, -np.inf)
    top = np.zeros(xs.shape, np.int64)
    second = np.full(xs.shape, -np.inf)
    for i, layer in enumerate(layers):
        d = layer.disparity(xs, ys)
        inside = layer.covers(xs, ys)
        nearer = inside & (d > depth)
        second = np.where(nearer, depth, np.where(inside & (d > second), d, second))
        depth = np.where(nearer, d, depth)
        top = np.where(nearer, i, top)
    img = np.zeros(xs.shape)
    for i, layer in enumerate(layers):
        sel = top == i
        img[sel] = layer.texture.sample(xs[sel], ys[sel])
    return img, depth, top, second


def _visible_in_match(layers, xr, ys):
    """Index of the layer seen by the matching view at (possibly fractional) column xr, and its base x."""
    depth = np.full(xr.shape, -np.inf)
    top = np.full(xr.shape, -1, np.int64)
    bx = np.zeros(xr.shape)
    for i, layer in enumerate(layers):
        x = layer.base_x(xr, ys)
        d = layer.disparity(x, ys)
        hit = layer.covers(x, ys) & (d > depth)
        depth = np.where(hit, d, depth)
        top = np.where(hit, i, top)
        bx = np.where(hit, x, bx)
    return top, bx


def thin_scanlines(sparse: SparseDisparityMap, keep: int) -> SparseDisparityMap:
    """Keep every ``keep``-th occupied row of a scan-line-structured sparse map."""
    if keep < 1:
        raise ValueError("keep must be >= 1")
    rows = np.flatnonzero(sparse.valid.any(axis=1))
    drop = np.setdiff1d(rows, rows[::keep])
    valid = sparse.valid.copy()
    valid[drop] = False
    return SparseDisparityMap(sparse.values, valid)


def synth_scene(seed, dims=(192, 128), dmax=64, *, textureless=0.0, misprojection=0.0, noise=1.0,
                lidar_row_step=4, lidar_col_step=2) -> SynthScene:
    """Render a deterministic synthetic scene.

    Args:
        seed: RNG seed; equal seeds give bit-identical scenes.
        dims: (width, height), at least 64x64.
        dmax: disparity range; all ground truth stays below ``dmax - 1``.
        textureless: target share of the frame covered by a flat wall.
        misprojection: share of LiDAR samples replaced by the disparity of
            the surface hidden behind them.
        noise: std-dev of independent Gaussian sensor noise per view (gray levels).
        lidar_row_step, lidar_col_step: LiDAR sampling raster.
    """
    width, height = dims
    if width < 64 or height < 64:
        raise ValueError(f"synthetic scenes need at least 64x64 pixels, got {dims}")
    rng = np.random.default_rng(seed)
    layers = _layers(rng, width, height, dmax, textureless)

    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    base_img, depth, top, second = _render_base(layers, xs, ys)

    vis, bx = _visible_in_match(layers, xs, ys)
    match_img = np.zeros(xs.shape)
    for i, layer in enumerate(layers):
        sel = vis == i
        match_img[sel] = layer.texture.sample(bx[sel], ys[sel])

    # occluded: the matching view sees another layer at x - d, or it leaves the frame
    xr = xs - depth
    seen, _ = _visible_in_match(layers, xr, ys)
    occluded = (xr < 0) | (seen != top)

    base_img = base_img + rng.normal(0.0, noise, base_img.shape) if noise > 0 else base_img
    match_img = match_img + rng.normal(0.0, noise, match_img.shape) if noise > 0 else match_img
    base = GrayImage(np.clip(np.floor(base_img + 0.5), 0, 255).astype(np.uint8))
    match = GrayImage(np.clip(np.floor(match_img + 0.5), 0, 255).astype(np.uint8))

    depth = np.clip(depth, 0.0, dmax - 1.0 - 1.0 / 256)
    gt = DenseDisparityMap.from_float(depth)

    sample = np.zeros(xs.shape, bool)
    sample[::lidar_row_step, ::lidar_col_step] = True
    clean = np.minimum(round_half_up(depth), dmax - 1)
    clean_lidar = SparseDisparityMap(clean, sample)

    values = clean.copy()
    misprojected = np.zeros(xs.shape, bool)
    if misprojection > 0:
        behind = sample & np.isfinite(second)
        candidates = np.flatnonzero(behind)
        n = min(candidates.size, int(round(misprojection * sample.sum())))
        if n:
            chosen = rng.choice(candidates, size=n, replace=False)
            misprojected.flat[chosen] = True
            bg = np.minimum(round_half_up(np.clip(second, 0, dmax - 1)), dmax - 1)
            values = np.where(misprojected, bg, values)
    lidar = SparseDisparityMap(values, sample)

    textureless_mask = np.zeros(xs.shape, bool)
    for i, layer in enumerate(layers):
        if layer.texture.flat is not None:
            textureless_mask |= top == i
    return SynthScene(base, match, gt, lidar, clean_lidar, misprojected, occluded, textureless_mask, top)
