"""Image-domain linear operators, quality metrics and synthetic test images.

A color image with ``N = height * width`` pixels is a vector of length ``3N``:
the three channels are stacked and each channel is vectorized column by
column, i.e. ``x == img.reshape(-1, order="F")`` for ``img`` of shape
``(height, width, 3)``.

Gradient vectors produced by :func:`gradient_op` are laid out channel by
channel as ``[Dv x_1; Dh x_1; Dv x_2; Dh x_2; Dv x_3; Dh x_3]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import InvalidInputError, LinearOperator

__all__ = [
    "COLOR_DCT",
    "ImagePlane",
    "color_transform",
    "diff_ops",
    "fwht",
    "gradient_op",
    "measurement_op",
    "patch_expand",
    "permute_gradients",
    "psnr",
    "synthetic_image",
]

PSNR_CAP = 999.0

COLOR_DCT = np.array(
    [
        [1.0, 1.0, 1.0],
        [1.0, 0.0, -1.0],
        [1.0, -2.0, 1.0],
    ]
) / np.array([[np.sqrt(3.0)], [np.sqrt(2.0)], [np.sqrt(6.0)]])


@dataclass(frozen=True)
class ImagePlane:
    """Pixels in ``[0, 1]`` with shape ``(height, width, channels)``."""

    pixels: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.pixels, dtype=np.float64)
        if p.ndim == 2:
            p = p[:, :, None]
        if p.ndim != 3 or p.shape[2] not in (1, 3):
            raise InvalidInputError(f"image must be (height, width, 1 or 3), got {p.shape}")
        object.__setattr__(self, "pixels", p)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]

    @property
    def n_pixels(self) -> int:
        return self.height * self.width

    def to_vector(self) -> np.ndarray:
        return self.pixels.reshape(-1, order="F").copy()

    @classmethod
    def from_vector(cls, x: np.ndarray, height: int, width: int, channels: int = 3) -> "ImagePlane":
        x = np.asarray(x, dtype=np.float64)
        if x.size != height * width * channels:
            raise InvalidInputError("vector length does not match the image shape")
        return cls(x.reshape((height, width, channels), order="F"))

    def clamped(self) -> "ImagePlane":
        return ImagePlane(np.clip(self.pixels, 0.0, 1.0))


def psnr(a, b) -> float:
    """PSNR in dB with peak 1.0; identical inputs give :data:`PSNR_CAP`."""
    a = a.pixels if isinstance(a, ImagePlane) else np.asarray(a, dtype=np.float64)
    b = b.pixels if isinstance(b, ImagePlane) else np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise InvalidInputError(f"shape mismatch {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(10.0 * np.log10(1.0 / mse), PSNR_CAP)


# ---------------------------------------------------------------------------
# Differences
# ---------------------------------------------------------------------------


def _check_dims(height: int, width: int) -> None:
    if height < 2 or width < 2:
        raise InvalidInputError("difference operators need height, width >= 2")


def diff_ops(width: int, height: int) -> tuple[LinearOperator, LinearOperator]:
    """Vertical and horizontal forward differences with periodic boundary, one channel."""
    _check_dims(height, width)
    n = height * width

    def grid(x):
        # column-major (h, w) image == C-order (w, h) array
        return x.reshape(width, height)

    def dv(x):
        g = grid(x)
        return (np.roll(g, -1, axis=1) - g).reshape(-1)

    def dv_t(y):
        g = grid(y)
        return (np.roll(g, 1, axis=1) - g).reshape(-1)

    def dh(x):
        g = grid(x)
        return (np.roll(g, -1, axis=0) - g).reshape(-1)

    def dh_t(y):
        g = grid(y)
        return (np.roll(g, 1, axis=0) - g).reshape(-1)

    return LinearOperator(dv, dv_t, n, n, "Dv"), LinearOperator(dh, dh_t, n, n, "Dh")


def gradient_op(width: int, height: int, channels: int = 3) -> LinearOperator:
    """``diag(D0, ..., D0)`` with ``D0 = [Dv; Dh]``: ``channels * N`` to ``2 * channels * N``."""
    _check_dims(height, width)
    n = height * width

    def forward(x):
        g = x.reshape(channels, width, height)
        out = np.empty((channels, 2, width, height))
        out[:, 0] = np.roll(g, -1, axis=2) - g
        out[:, 1] = np.roll(g, -1, axis=1) - g
        return out.reshape(-1)

    def adjoint(y):
        d = y.reshape(channels, 2, width, height)
        v, h = d[:, 0], d[:, 1]
        out = (np.roll(v, 1, axis=2) - v) + (np.roll(h, 1, axis=1) - h)
        return out.reshape(-1)

    return LinearOperator(forward, adjoint, channels * n, 2 * channels * n, "D")


def color_transform(n_pixels: int) -> LinearOperator:
    """Orthonormal 3-point DCT across channels at every pixel (RGB to luma/chroma)."""
    c0 = COLOR_DCT

    def forward(x):
        return (c0 @ x.reshape(3, n_pixels)).reshape(-1)

    def adjoint(y):
        return (c0.T @ y.reshape(3, n_pixels)).reshape(-1)

    return LinearOperator(forward, adjoint, 3 * n_pixels, 3 * n_pixels, "C")


def permute_gradients(variant: str, n_pixels: int) -> LinearOperator:
    """Reorder a ``6N`` gradient vector.

    ``"P1"`` gives ``[d_y; d_c]`` where ``d_y`` holds the ``(dv, dh)`` pair of
    the first (luma) channel for every pixel and ``d_c`` the 4-tuples
    ``(dv_2, dh_2, dv_3, dh_3)`` of the two chroma channels.
    ``"P4"`` gives per-pixel 6-tuples ``(dv_1, dh_1, dv_2, dh_2, dv_3, dh_3)``.
    """
    n = n_pixels
    if variant == "P4":

        def forward(g):
            return g.reshape(6, n).T.reshape(-1)

        def adjoint(p):
            return p.reshape(n, 6).T.reshape(-1)

    elif variant == "P1":

        def forward(g):
            g = g.reshape(6, n)
            return np.concatenate([g[:2].T.reshape(-1), g[2:].T.reshape(-1)])

        def adjoint(p):
            out = np.empty((6, n))
            out[:2] = p[: 2 * n].reshape(n, 2).T
            out[2:] = p[2 * n :].reshape(n, 4).T
            return out.reshape(-1)

    else:
        raise InvalidInputError(f"unknown permutation {variant!r}; use 'P1' or 'P4'")
    return LinearOperator(forward, adjoint, 6 * n, 6 * n, variant)


# ---------------------------------------------------------------------------
# Patch expansion
# ---------------------------------------------------------------------------


def _offsets(w: int) -> list[tuple[int, int]]:
    r = w // 2
    # column-major within the patch: vertical offset varies fastest
    return [(a, b) for b in range(-r, r + 1) for a in range(-r, r + 1)]


def patch_expand(w: int, width: int, height: int) -> LinearOperator:
    """Duplicate every gradient into all ``w x w`` patches that contain it (periodic wrap).

    Input is the ``P1`` layout ``[d_y; d_c]``. The output holds one
    ``w^2 x 2`` matrix ``[dv patch, dh patch]`` per (pixel, channel),
    vectorized column-major: first the ``N`` luma matrices, then the chroma
    matrices interleaved as ``(c1, pixel 1), (c2, pixel 1), (c1, pixel 2), ...``.
    """
    if w < 1 or w % 2 == 0:
        raise InvalidInputError("patch side must be a positive odd number")
    n = width * height
    offs = _offsets(w)
    k = len(offs)

    def gather(imgs):
        # imgs: (..., width, height) -> (..., n, k)
        out = np.empty(imgs.shape[:-2] + (k, width, height))
        for j, (a, b) in enumerate(offs):
            out[..., j, :, :] = np.roll(imgs, (-b, -a), axis=(-2, -1))
        return np.moveaxis(out.reshape(imgs.shape[:-2] + (k, n)), -2, -1)

    def build(p):
        luma = p[: 2 * n].reshape(n, 2).T.reshape(2, width, height)
        chroma = p[2 * n :].reshape(n, 4).T.reshape(2, 2, width, height)
        lo = gather(luma)  # (2, n, k)
        co = gather(chroma)  # (2 chroma, 2 grads, n, k)
        return np.concatenate([lo.transpose(1, 0, 2).reshape(-1), co.transpose(2, 0, 1, 3).reshape(-1)])

    # every output entry copies one input entry: build the index map once,
    # then forward is a gather and the adjoint a scatter-add
    idx = np.rint(build(np.arange(6 * n, dtype=np.float64))).astype(np.intp)

    def forward(p):
        return p[idx]

    def adjoint(q):
        return np.bincount(idx, weights=q, minlength=6 * n)

    return LinearOperator(forward, adjoint, 6 * n, 6 * k * n, f"E{w}")


# ---------------------------------------------------------------------------
# Measurement
# ---------------------------------------------------------------------------


def fwht(a: np.ndarray) -> np.ndarray:
    """Orthonormal Walsh-Hadamard transform along the last axis (Sylvester order).

    Equals ``a @ scipy.linalg.hadamard(n) / sqrt(n)`` in O(n log n).
    """
    a = np.asarray(a, dtype=np.float64)
    n = a.shape[-1]
    lead = a.shape[:-1]
    h = 1
    while h < n:
        b = a.reshape(lead + (n // (2 * h), 2, h))
        a = np.stack([b[..., 0, :] + b[..., 1, :], b[..., 0, :] - b[..., 1, :]], axis=-2)
        h *= 2
    return a.reshape(lead + (n,)) / np.sqrt(n)


def measurement_op(m_rows: int, n_cols: int, seed: int | None = 0, channels: int = 3) -> LinearOperator:
    """Randomized subsampled Walsh-Hadamard measurement ``S H diag(signs)``.

    The input is split into ``channels`` equal blocks, each transformed by the
    orthonormal Hadamard matrix. ``m_rows`` of the ``n_cols`` coefficients are
    kept, chosen uniformly without replacement. With ``seed=None`` no signs are
    flipped and the first ``m_rows`` coefficients are kept.
    """
    if not 1 <= m_rows <= n_cols:
        raise InvalidInputError("need 1 <= m_rows <= n_cols")
    if n_cols % channels:
        raise InvalidInputError("n_cols must split evenly into channel blocks")
    b = n_cols // channels
    if b & (b - 1):
        raise InvalidInputError(f"channel block length {b} is not a power of two")
    if seed is None:
        signs = np.ones(n_cols)
        rows = np.arange(m_rows)
    else:
        rng = np.random.default_rng(seed)
        signs = rng.choice([-1.0, 1.0], size=n_cols)
        rows = np.sort(rng.choice(n_cols, size=m_rows, replace=False))

    def forward(x):
        return fwht((signs * x).reshape(channels, b)).reshape(-1)[rows]

    def adjoint(y):
        full = np.zeros(n_cols)
        full[rows] = y
        # the normalized Hadamard matrix is symmetric and orthogonal
        return signs * fwht(full.reshape(channels, b)).reshape(-1)

    return LinearOperator(forward, adjoint, n_cols, m_rows, "Phi")


# ---------------------------------------------------------------------------
# Synthetic images
# ---------------------------------------------------------------------------


def _smooth_field(rng, size: int, amp: float) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size] / size
    a, b, c = rng.uniform(-1, 1, 3)
    return amp * (a * yy + b * xx + c * np.sin(np.pi * (yy + xx)))


def synthetic_image(seed: int = 0, size: int = 32, kind: str = "piecewise") -> ImagePlane:
    """Piecewise-smooth color test image.

    ``"piecewise"``: a handful of discs and rectangles on top of a slowly
    varying background. As in natural images, most of the structure is in
    luminance: the smooth field is shared by all channels (plus a weaker
    per-channel part) and region offsets are gray with a slight tint.
    ``"constant"``: piecewise-constant regions without the smooth component.
    """
    if kind not in ("piecewise", "constant"):
        raise InvalidInputError(f"unknown synthetic image kind {kind!r}")
    if size < 4:
        raise InvalidInputError("synthetic images need size >= 4")
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size]
    # minimum rectangle side; 6 from size 24 up
    side = min(6, size // 4)
    base = rng.uniform(0.3, 0.7, 3)
    img = np.broadcast_to(base, (size, size, 3)).copy()
    if kind == "piecewise":
        img += _smooth_field(rng, size, 0.1)[:, :, None]
        img += 0.3 * np.stack([_smooth_field(rng, size, 0.1) for _ in range(3)], axis=-1)
    for _ in range(rng.integers(4, 7)):
        if rng.random() < 0.5:
            cy, cx = rng.uniform(0, size, 2)
            r = rng.uniform(size / 8, size / 3.5)
            mask = (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r
        else:
            y0, x0 = rng.integers(0, size - side, 2)
            hh, ww = rng.integers(side, max(side + 1, size // 2), 2)
            mask = (yy >= y0) & (yy < y0 + hh) & (xx >= x0) & (xx < x0 + ww)
        lum = rng.uniform(-0.35, 0.35)
        tint = rng.normal(0.0, 0.02, 3)
        img[mask] += lum + tint
    return ImagePlane(np.clip(img, 0.0, 1.0))
