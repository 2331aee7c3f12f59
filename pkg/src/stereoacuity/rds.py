"""Anaglyph random-dot stereogram generation and audits.

Two overlapping dot layers (red / cyan) on black. A central bracket-shaped
region is "hidden": its dots appear in both layers at a horizontal offset of
o1 pixels, so the shape is visible only binocularly. Everything outside the
bracket is bit-identical across layers, and each single layer is a uniform
dot field, so no monocular cue reveals the shape:

* hidden dots shift horizontally *within* the bracket mask (wrapping around
  each horizontal run of the mask), which keeps single-layer density exactly
  uniform — a plain shift would vacate a strip on one side of the shape and
  double density on the other, which is visible monocularly at large o1;
* the shifted layer's dot order is shuffled, so clients cannot recover the
  shape by diffing per-index coordinates across layers;
* one layer is additionally shifted globally by an integer correction offset
  o2 (wrapping at texture bounds), so the hidden-region disparity relative to
  its surround stays exactly o1.

The audits invert that construction: after undoing the o2 shift, the
background cross-correlation must peak at 0 px and the hidden-region
cross-correlation at o1 px, while single-layer density must pass a chi-square
uniformity screen and show no bracket-shaped template response.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .gamma_cal import NormalizedGammaTable, identity_gamma_table
from .geometry import DEFAULT_PROFILE, DisplayProfile

SHAPES = ("open_up", "open_down", "open_left", "open_right")

O1_MIN_PX = 0.1
O1_MAX_PX = 10.0

# Outer extent of the bracket mask, as a fraction of the texture side.
MASK_OUTER_FRACTION = 0.6

# Template-match score above which a single layer is considered to carry a
# monocular shape cue. Uniform layers score |r| < ~0.05 on a 32x32 density
# grid (see tests); a density cue strong enough to matter scores far higher.
SHAPE_SCORE_THRESHOLD = 0.2

DENSITY_GRID = 16
TEMPLATE_GRID = 32


class RdsConfigError(ValueError):
    """Invalid stimulus configuration."""


class RdsDomainError(ValueError):
    """Requested disparity outside the supported range."""


@dataclass(frozen=True)
class RdsConfig:
    """Stimulus geometry and dot budget.

    ``hidden_dots`` is the expected number of dots inside the bracket mask;
    the mask's notch width is solved so the mask covers exactly
    hidden_dots/dots_per_layer of the texture area.
    """

    texture_size_mm: float = 86.0
    dots_per_layer: int = 30000
    hidden_dots: int = 8400
    dot_radius_px: float = 1.0
    colors: tuple = ("red", "cyan")
    profile: DisplayProfile = DEFAULT_PROFILE

    def __post_init__(self):
        if self.dots_per_layer <= 0:
            raise RdsConfigError("dots_per_layer must be positive")
        if not 0 < self.hidden_dots < self.dots_per_layer:
            raise RdsConfigError("need 0 < hidden_dots < dots_per_layer")
        if self.dot_radius_px <= 0:
            raise RdsConfigError("dot_radius_px must be positive")
        if len(self.colors) != 2:
            raise RdsConfigError("colors must name exactly two channels")
        size_px = self.texture_size_px
        if size_px <= 0:
            raise RdsConfigError("texture size must be positive")
        if size_px > min(self.profile.horizontal_resolution_px, self.profile.vertical_resolution_px):
            raise RdsConfigError(
                f"texture of {size_px:.1f} px does not fit the "
                f"{self.profile.horizontal_resolution_px}x{self.profile.vertical_resolution_px} display"
            )
        if self.dots_per_layer > size_px * size_px:
            raise RdsConfigError("dot count exceeds texture capacity (>1 dot per px^2)")
        frac = self.hidden_dots / self.dots_per_layer
        outer = MASK_OUTER_FRACTION**2
        if not frac < outer:
            raise RdsConfigError(
                f"hidden fraction {frac:.3f} cannot exceed the mask's outer square ({outer:.2f})"
            )

    @property
    def texture_size_px(self) -> float:
        return self.texture_size_mm / self.profile.pixel_pitch_mm


@dataclass(frozen=True)
class BracketMask:
    """Square-annulus mask with one side's opening (the four bracket shapes).

    Geometry in texture pixels, origin at texture top-left: outer square of
    half-side ``a`` centered at ``c``; a notch of half-width ``b`` runs from
    the open side past the center, leaving three connected bands.
    """

    shape: str
    size_px: float
    a: float
    b: float

    @property
    def c(self) -> float:
        return self.size_px / 2.0

    def contains(self, x, y):
        """Vectorized point-in-mask test."""
        u = np.asarray(x, dtype=float) - self.c
        v = np.asarray(y, dtype=float) - self.c
        a, b = self.a, self.b
        outer = (np.abs(u) <= a) & (np.abs(v) <= a)
        if self.shape == "open_up":
            notch = (np.abs(u) < b) & (v < b)
        elif self.shape == "open_down":
            notch = (np.abs(u) < b) & (v > -b)
        elif self.shape == "open_left":
            notch = (np.abs(v) < b) & (u < b)
        elif self.shape == "open_right":
            notch = (np.abs(v) < b) & (u > -b)
        else:
            raise RdsConfigError(f"unknown shape {self.shape!r}")
        return outer & ~notch

    def run_bounds(self, x, y):
        """Horizontal mask run [x0, x1) containing each in-mask point.

        Rows crossing the notch split into two runs (or one, for sideways
        openings); other rows span the full outer square.
        """
        u = np.asarray(x, dtype=float) - self.c
        v = np.asarray(y, dtype=float) - self.c
        a, b, c = self.a, self.b, self.c
        lo = np.full(u.shape, -a)
        hi = np.full(u.shape, a)
        if self.shape in ("open_up", "open_down"):
            split = v < b if self.shape == "open_up" else v > -b
            left_run = split & (u < 0)
            right_run = split & (u >= 0)
            hi[left_run] = -b
            lo[right_run] = b
        elif self.shape == "open_left":
            lo[np.abs(v) < b] = b
        else:
            hi[np.abs(v) < b] = -b
        return lo + c, hi + c


def solve_mask(config: RdsConfig, shape: str) -> BracketMask:
    """Build the bracket mask whose area fraction equals hidden/total dots."""
    if shape not in SHAPES:
        raise RdsConfigError(f"shape must be one of {SHAPES}, got {shape!r}")
    size = config.texture_size_px
    frac = config.hidden_dots / config.dots_per_layer
    a_unit = MASK_OUTER_FRACTION / 2.0
    # mask area (units of texture side): 4a^2 - 2b(a+b) = frac
    b_unit = (-a_unit + np.sqrt(a_unit**2 + 2.0 * (4.0 * a_unit**2 - frac))) / 2.0
    return BracketMask(shape=shape, size_px=size, a=a_unit * size, b=b_unit * size)


def compute_correction_offset(o1_px: float) -> int:
    """Integer whole-layer correction offset o2 for a given disparity o1."""
    if not np.isfinite(o1_px) or not O1_MIN_PX <= o1_px <= O1_MAX_PX:
        raise RdsDomainError(
            f"o1 must lie in [{O1_MIN_PX}, {O1_MAX_PX}] px, got {o1_px!r}"
        )
    if o1_px >= 7:
        return -5
    if o1_px >= 6:
        return -4
    if o1_px >= 5:
        return -3
    return 3


@dataclass(frozen=True)
class RdsStimulus:
    """A generated stereo pair: per-layer dot arrays of shape (n, 3) holding
    (x_px, y_px, intensity), plus the bookkeeping needed by the audits."""

    config: RdsConfig
    o1_px: float
    o2_px: int
    shape: str
    seed: int
    left_dots: np.ndarray
    right_dots: np.ndarray
    left_hidden_idx: np.ndarray = field(repr=False, default=None)
    right_hidden_idx: np.ndarray = field(repr=False, default=None)

    @property
    def texture_size_px(self) -> float:
        return self.config.texture_size_px

    def to_wire(self) -> dict:
        """Client payload. The shape identity is withheld during live trials;
        coordinates are rounded to 1e-4 px (far below display resolution)."""

        def dots(arr):
            return np.round(np.asarray(arr, dtype=float), 4).tolist()

        return {
            "o2": int(self.o2_px),
            "shape_hidden": False,
            "layers": [
                {"channel": self.config.colors[0], "dots": dots(self.left_dots)},
                {"channel": self.config.colors[1], "dots": dots(self.right_dots)},
            ],
        }


def generate_rds(config: RdsConfig, o1_px: float, shape: str, seed: int) -> RdsStimulus:
    """Generate one stimulus. Deterministic for fixed (config, o1, shape, seed)."""
    o2 = compute_correction_offset(o1_px)
    mask = solve_mask(config, shape)
    size = config.texture_size_px
    rng = np.random.default_rng(seed)

    xy = rng.uniform(0.0, size, size=(config.dots_per_layer, 2))
    left = np.column_stack([xy, np.ones(config.dots_per_layer)])
    hidden = mask.contains(left[:, 0], left[:, 1])
    hidden_idx = np.flatnonzero(hidden)

    right = left.copy()
    # Disparity: shift hidden dots within their mask run (modular, so the
    # layer stays uniform and dot counts are preserved exactly).
    hx = right[hidden_idx, 0]
    hy = right[hidden_idx, 1]
    x0, x1 = mask.run_bounds(hx, hy)
    right[hidden_idx, 0] = x0 + np.mod(hx - x0 + o1_px, x1 - x0)
    # Whole-layer correction shift, wrapping at texture bounds.
    right[:, 0] = np.mod(right[:, 0] + o2, size)

    # Shuffle the shifted layer so dot order carries no cross-layer pairing.
    order = rng.permutation(config.dots_per_layer)
    right = right[order]
    right_hidden_idx = np.flatnonzero(np.isin(order, hidden_idx))

    return RdsStimulus(
        config=config,
        o1_px=float(o1_px),
        o2_px=o2,
        shape=shape,
        seed=int(seed),
        left_dots=left,
        right_dots=right,
        left_hidden_idx=hidden_idx,
        right_hidden_idx=right_hidden_idx,
    )


# --- audits -----------------------------------------------------------------


def _pair_offset_peak(
    left_xy,
    right_xy,
    window_px: float = 16.0,
    bin_px: float = 0.005,
    sigma_px: float = 0.05,
    y_tol_px: float = 0.5,
):
    """Sub-pixel peak of the horizontal cross-correlation of two dot fields.

    Equivalent to cross-correlating kernel-smoothed density maps: x offsets of
    all dot pairs in matching rows (|dy| <= y_tol) are linearly binned, the
    histogram is smoothed with a Gaussian, and the peak is refined with a
    parabolic fit. True matches repeat the same offset, so the peak stands on
    a flat random-pair background.
    """
    ly = left_xy[:, 1]
    ry = right_xy[:, 1]
    l_order = np.argsort(ly, kind="stable")
    r_order = np.argsort(ry, kind="stable")
    lx, ly = left_xy[l_order, 0], ly[l_order]
    rx, ry = right_xy[r_order, 0], ry[r_order]

    starts = np.searchsorted(ry, ly - y_tol_px, side="left")
    stops = np.searchsorted(ry, ly + y_tol_px, side="right")
    counts = stops - starts
    rows = np.repeat(np.arange(len(lx)), counts)
    cols = np.concatenate([np.arange(a, b) for a, b in zip(starts, stops)]) if len(lx) else np.array([], int)
    dx = rx[cols] - lx[rows]
    dx = dx[np.abs(dx) <= window_px + 4.0 * sigma_px]

    n_bins = int(round(2.0 * window_px / bin_px)) + 1
    centers = -window_px + bin_px * np.arange(n_bins)
    # Linear binning preserves each offset's centroid at sub-bin accuracy.
    pos = (dx + window_px) / bin_px
    i0 = np.floor(pos).astype(int)
    w1 = pos - i0
    valid = (i0 >= -1) & (i0 <= n_bins - 1)
    hist = np.zeros(n_bins)
    np.add.at(hist, np.clip(i0[valid], 0, n_bins - 1), (1.0 - w1[valid]) * (i0[valid] >= 0))
    np.add.at(hist, np.clip(i0[valid] + 1, 0, n_bins - 1), w1[valid] * (i0[valid] + 1 <= n_bins - 1))

    half = int(np.ceil(4.0 * sigma_px / bin_px))
    kernel = np.exp(-0.5 * (bin_px * np.arange(-half, half + 1) / sigma_px) ** 2)
    smooth = np.convolve(hist, kernel, mode="same")

    peak = int(np.argmax(smooth))
    if 0 < peak < n_bins - 1:
        y0, y1, y2 = smooth[peak - 1], smooth[peak], smooth[peak + 1]
        denom = y0 - 2.0 * y1 + y2
        if denom < 0:
            return float(centers[peak] + 0.5 * (y0 - y2) / denom * bin_px)
    return float(centers[peak])


def _unshift(x, o2_px, size_px):
    return np.mod(x - o2_px, size_px)


def audit_disparity(stimulus: RdsStimulus) -> float:
    """Measured hidden-region offset (px) after undoing the o2 layer shift."""
    size = stimulus.texture_size_px
    left = stimulus.left_dots[stimulus.left_hidden_idx][:, :2]
    right = stimulus.right_dots[stimulus.right_hidden_idx][:, :2].copy()
    right[:, 0] = _unshift(right[:, 0], stimulus.o2_px, size)
    return _pair_offset_peak(left, right)


def audit_background_disparity(stimulus: RdsStimulus) -> float:
    """Measured background offset (px); 0 when the surround is cue-free."""
    size = stimulus.texture_size_px
    left_bg = np.ones(len(stimulus.left_dots), dtype=bool)
    left_bg[stimulus.left_hidden_idx] = False
    right_bg = np.ones(len(stimulus.right_dots), dtype=bool)
    right_bg[stimulus.right_hidden_idx] = False
    left = stimulus.left_dots[left_bg][:, :2]
    right = stimulus.right_dots[right_bg][:, :2].copy()
    right[:, 0] = _unshift(right[:, 0], stimulus.o2_px, size)
    return _pair_offset_peak(left, right)


def _density_map(dots, size_px: float, grid: int):
    edges = np.linspace(0.0, size_px, grid + 1)
    counts, _, _ = np.histogram2d(dots[:, 1], dots[:, 0], bins=(edges, edges))
    return counts


def _layer_chi2_p(dots, size_px: float) -> float:
    counts = _density_map(dots, size_px, DENSITY_GRID).ravel()
    return float(stats.chisquare(counts).pvalue)


def shape_templates(size_px: float, config: RdsConfig, grid: int = TEMPLATE_GRID):
    """Mean-centered in-mask indicator maps for the four shapes."""
    centers = (np.arange(grid) + 0.5) * size_px / grid
    gx, gy = np.meshgrid(centers, centers)
    templates = {}
    for shape in SHAPES:
        mask = solve_mask(config, shape)
        t = mask.contains(gx, gy).astype(float)
        t -= t.mean()
        templates[shape] = t
    return templates


def _layer_shape_score(dots, size_px: float, templates) -> float:
    counts = _density_map(dots, size_px, TEMPLATE_GRID)
    counts = counts - counts.mean()
    norm = np.linalg.norm(counts)
    if norm == 0:
        return 0.0
    best = 0.0
    for t in templates.values():
        r = float(np.dot(counts.ravel(), t.ravel()) / (norm * np.linalg.norm(t)))
        best = max(best, abs(r))
    return best


@dataclass(frozen=True)
class MonocularAuditReport:
    density_chi2_p: float
    single_layer_shape_score: float
    flagged: bool


def monocular_cue_audit(stimulus: RdsStimulus) -> MonocularAuditReport:
    """Screen each single layer for density cues that would reveal the shape
    without stereo fusion. Reports the worse (min p, max score) of the two
    layers; ``flagged`` marks a template response above threshold."""
    size = stimulus.texture_size_px
    templates = shape_templates(size, stimulus.config)
    p = min(
        _layer_chi2_p(stimulus.left_dots, size),
        _layer_chi2_p(stimulus.right_dots, size),
    )
    score = max(
        _layer_shape_score(stimulus.left_dots, size, templates),
        _layer_shape_score(stimulus.right_dots, size, templates),
    )
    return MonocularAuditReport(
        density_chi2_p=p,
        single_layer_shape_score=score,
        flagged=score > SHAPE_SCORE_THRESHOLD,
    )


# --- rasterization ----------------------------------------------------------


def _splat_channel(dots, width: int, height: int, offset_x: float, offset_y: float, radius: float):
    """Additive separable-triangle splat (peak 1 at the dot center), clamped."""
    img = np.zeros((height, width))
    if len(dots) == 0:
        return img
    x = dots[:, 0] + offset_x
    y = dots[:, 1] + offset_y
    inten = dots[:, 2]
    reach = int(np.ceil(radius))
    px0 = np.floor(x - radius).astype(int)
    py0 = np.floor(y - radius).astype(int)
    for j in range(2 * reach + 1):
        wy = np.maximum(0.0, 1.0 - np.abs(py0 + j - y) / radius)
        yy = py0 + j
        for i in range(2 * reach + 1):
            wx = np.maximum(0.0, 1.0 - np.abs(px0 + i - x) / radius)
            xx = px0 + i
            w = wx * wy * inten
            ok = (w > 0) & (xx >= 0) & (xx < width) & (yy >= 0) & (yy < height)
            np.add.at(img, (yy[ok], xx[ok]), w[ok])
    return np.clip(img, 0.0, 1.0)


def rasterize(stimulus: RdsStimulus, lut: NormalizedGammaTable | None = None) -> np.ndarray:
    """Render the anaglyph to an RGB uint8 image of the display's resolution.

    Left dots go to the red channel, right dots to green+blue, texture
    centered, black background. Channel values pass through the gamma LUT.
    """
    if lut is None:
        lut = identity_gamma_table()
    profile = stimulus.config.profile
    width = profile.horizontal_resolution_px
    height = profile.vertical_resolution_px
    size = stimulus.texture_size_px
    ox = (width - size) / 2.0
    oy = (height - size) / 2.0
    radius = stimulus.config.dot_radius_px

    red = _splat_channel(stimulus.left_dots, width, height, ox, oy, radius)
    cyan = _splat_channel(stimulus.right_dots, width, height, ox, oy, radius)

    lut_u8 = np.round(np.asarray(lut.entries) * 255.0).astype(np.uint8)

    def apply(channel):
        return lut_u8[np.round(channel * 255.0).astype(int)]

    img = np.zeros((height, width, 3), dtype=np.uint8)
    img[:, :, 0] = apply(red)
    img[:, :, 1] = apply(cyan)
    img[:, :, 2] = img[:, :, 1]
    return img
