"""Depth decomposition: split a raw depth map into mode-based region masks.

The raw depth map is quantized into a histogram, the largest distribution
modes are located on a smoothed copy, and each mode's interval window turns
into one spatial attention mask. Everything left over (including pixels with
no depth reading) becomes the final remainder mask.

All functions here are pure and operate on numpy arrays; the network side
consumes the resulting masks as tensors.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFAULT_BINS = 64
DEFAULT_SMOOTH_WIDTH = 5
DEFAULT_REGIONS = 3  # T+1 regions, i.e. T=2 interval windows


@dataclass
class DepthMap:
    """Raw depth values plus a validity mask (False = no sensor reading)."""

    values: np.ndarray
    valid: np.ndarray = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.size == 0:
            raise ValueError("depth map must be a non-empty 2-D grid")
        if self.valid is None:
            self.valid = np.ones(self.values.shape, dtype=bool)
        else:
            self.valid = np.asarray(self.valid, dtype=bool)
        if self.valid.shape != self.values.shape:
            raise ValueError("valid mask shape must match depth values")
        if not np.all(np.isfinite(self.values[self.valid])):
            raise ValueError("depth values must be finite where valid")

    @classmethod
    def from_raw(cls, values) -> "DepthMap":
        """Treat zero/negative readings as invalid, the sensor convention."""
        values = np.asarray(values, dtype=np.float64)
        return cls(values=values, valid=values > 0)


@dataclass
class DepthHistogram:
    counts: np.ndarray  # (bins,) int64
    edges: np.ndarray   # (bins+1,) strictly increasing

    @property
    def bins(self) -> int:
        return len(self.counts)


@dataclass
class IntervalWindow:
    """One contiguous depth range [lo, hi) around a histogram mode."""

    lo: float
    hi: float
    peak_bin: int
    mass: int
    bin_lo: int = field(default=-1)
    bin_hi: int = field(default=-1)


@dataclass
class RegionMask:
    """Spatial attention weights in [0,1]; index T is the remainder region."""

    weights: np.ndarray
    region_index: int


def assign_bins(values: np.ndarray, edges: np.ndarray) -> np.ndarray:
    """Map depth values to bin indices; the top edge belongs to the last bin."""
    idx = np.searchsorted(edges, values, side="right") - 1
    return np.clip(idx, 0, len(edges) - 2)


def compute_histogram(depth: DepthMap, bins: int = DEFAULT_BINS) -> DepthHistogram:
    """Quantize the valid depth readings into `bins` equal-width bins."""
    if bins < 2:
        raise ValueError("bins must be >= 2")
    vals = depth.values[depth.valid]
    if vals.size == 0:
        raise ValueError("empty depth map: no valid pixels")
    vmin, vmax = float(vals.min()), float(vals.max())
    if vmax <= vmin:
        # Constant map: widen artificially so edges stay strictly increasing;
        # all mass lands in bin 0.
        vmax = vmin + 1.0
    edges = np.linspace(vmin, vmax, bins + 1)
    counts = np.bincount(assign_bins(vals, edges), minlength=bins)
    return DepthHistogram(counts=counts.astype(np.int64), edges=edges)


def smooth_counts(counts: np.ndarray, width: int) -> np.ndarray:
    """Centered moving average, zero-padded outside the histogram support."""
    if width < 1 or width % 2 == 0:
        raise ValueError("smooth width must be odd and positive")
    if width == 1:
        return counts.astype(np.float64)
    # Sum integer counts first, divide once: keeps plateau values exactly
    # equal, which the run-based peak detection relies on.
    summed = np.convolve(counts.astype(np.float64), np.ones(width), mode="same")
    return summed / width


def _peak_runs(s: np.ndarray) -> list[tuple[int, int]]:
    """Maximal equal-value runs that strictly dominate both neighbours.

    Array boundaries count as dominated, and all-zero runs never qualify.
    """
    n = len(s)
    runs = []
    i = 0
    while i < n:
        j = i
        while j + 1 < n and s[j + 1] == s[i]:
            j += 1
        left_ok = i == 0 or s[i - 1] < s[i]
        right_ok = j == n - 1 or s[j + 1] < s[j]
        if left_ok and right_ok and s[i] > 0:
            runs.append((i, j))
        i = j + 1
    return runs


def _is_local_min(s: np.ndarray, m: int) -> bool:
    left = s[m - 1] if m > 0 else np.inf
    right = s[m + 1] if m < len(s) - 1 else np.inf
    return s[m] <= left and s[m] <= right


def find_modes(
    hist: DepthHistogram,
    T: int,
    smooth_width: int = DEFAULT_SMOOTH_WIDTH,
) -> list[IntervalWindow]:
    """Locate the up-to-T heaviest modes of the smoothed histogram.

    Each mode's window runs from the nearest local minimum left of its peak to
    the nearest local minimum on its right (inclusive bin range). Candidate
    modes are ranked by raw pixel mass inside the window, ties broken by the
    lower peak bin. Overlapping boundary bins are kept by the heavier window
    and trimmed from later ones, so returned windows are mutually disjoint.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    s = smooth_counts(hist.counts, smooth_width)
    bins = hist.bins
    candidates = []
    for a, b in _peak_runs(s):
        # nearest local minimum strictly left of the run (or bin 0)
        lo_bin = 0
        for m in range(a - 1, -1, -1):
            if _is_local_min(s, m):
                lo_bin = m
                break
        hi_bin = bins - 1
        for m in range(b + 1, bins):
            if _is_local_min(s, m):
                hi_bin = m
                break
        peak = (a + b) // 2
        mass = int(hist.counts[lo_bin : hi_bin + 1].sum())
        if mass >= 1:
            candidates.append((mass, peak, lo_bin, hi_bin))

    candidates.sort(key=lambda c: (-c[0], c[1]))
    taken = np.zeros(bins, dtype=bool)
    windows = []
    for mass, peak, lo_bin, hi_bin in candidates[:T]:
        while lo_bin <= hi_bin and taken[lo_bin]:
            lo_bin += 1
        while hi_bin >= lo_bin and taken[hi_bin]:
            hi_bin -= 1
        if lo_bin > hi_bin or not (lo_bin <= peak <= hi_bin):
            continue
        taken[lo_bin : hi_bin + 1] = True
        final_mass = int(hist.counts[lo_bin : hi_bin + 1].sum())
        if final_mass < 1:
            continue
        lo = float(hist.edges[lo_bin])
        hi = float(hist.edges[hi_bin + 1])
        if hi_bin == bins - 1:
            # The last bin is closed on the right; nudge hi so the half-open
            # [lo, hi) membership test also captures the maximum depth value.
            hi = float(np.nextafter(hi, np.inf))
        windows.append(IntervalWindow(lo=lo, hi=hi, peak_bin=peak, mass=final_mass,
                                      bin_lo=lo_bin, bin_hi=hi_bin))
    windows.sort(key=lambda w: (-w.mass, w.peak_bin))
    return windows


def _windows_overlap(a: IntervalWindow, b: IntervalWindow) -> bool:
    return a.lo < b.hi and b.lo < a.hi


def decompose(
    depth: DepthMap,
    windows: list[IntervalWindow],
    mode: str = "soft",
) -> list[RegionMask]:
    """Turn interval windows into T+1 region masks (remainder last).

    Binary mode marks membership with {0,1}. Soft mode rescales each pixel's
    depth over its window range [lo, hi) into [0,1]. The remainder mask is
    always binary membership: every pixel not claimed by a window, including
    invalid readings.
    """
    if mode not in ("soft", "binary"):
        raise ValueError(f"unknown mask mode: {mode!r}")
    for i in range(len(windows)):
        for j in range(i + 1, len(windows)):
            if _windows_overlap(windows[i], windows[j]):
                raise ValueError(f"windows {i} and {j} overlap")

    vals = depth.values
    covered = np.zeros(vals.shape, dtype=bool)
    masks = []
    for t, w in enumerate(windows):
        member = depth.valid & (vals >= w.lo) & (vals < w.hi)
        covered |= member
        if mode == "binary":
            weights = member.astype(np.float64)
        else:
            span = w.hi - w.lo
            if span > 0:
                scaled = np.clip((vals - w.lo) / span, 0.0, 1.0)
            else:
                scaled = np.ones_like(vals)
            weights = np.where(member, scaled, 0.0)
        masks.append(RegionMask(weights=weights, region_index=t))

    remainder = (~covered).astype(np.float64)
    masks.append(RegionMask(weights=remainder, region_index=len(windows)))
    return masks


def decompose_depth(
    depth: DepthMap,
    regions: int = DEFAULT_REGIONS,
    bins: int = DEFAULT_BINS,
    smooth_width: int = DEFAULT_SMOOTH_WIDTH,
    mode: str = "soft",
) -> list[RegionMask]:
    """Full pipeline: histogram -> modes -> masks, with `regions` = T+1.

    With regions == 1 no windows are searched and the single remainder mask
    covers the whole image.
    """
    if regions < 1:
        raise ValueError("regions must be >= 1")
    if regions == 1:
        windows = []
    else:
        hist = compute_histogram(depth, bins=bins)
        windows = find_modes(hist, T=regions - 1, smooth_width=smooth_width)
    return decompose(depth, windows, mode=mode)


def masks_to_array(masks: list[RegionMask]) -> np.ndarray:
    """Stack masks into a (T+1, H, W) float32 array, remainder last."""
    return np.stack([m.weights for m in masks]).astype(np.float32)
