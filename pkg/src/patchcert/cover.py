"""Covering mask set construction and its brute-force verifier.

A mask set covers a patch spec when every legal placement is fully
inside at least one mask. Generators below construct such sets; the
verifier checks the property by exhaustive placement enumeration and is
deliberately independent of how the set was built.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

from .errors import InvalidInputError
from .tensor import (
    Mask,
    PatchSpec,
    Placement,
    Rect,
    count_placements,
    iter_placements,
    mask_covers,
)

__all__ = [
    "MaskSet",
    "CoverageReport",
    "gen_square_cover",
    "gen_rect_cover",
    "gen_multi_cover",
    "verify_cover",
]


@dataclass(frozen=True)
class MaskSet:
    """Ordered, deterministic collection of masks plus the spec they cover."""

    masks: tuple[Mask, ...]
    spec: PatchSpec
    masks_per_axis: int
    compound: bool = False

    def __post_init__(self):
        if not isinstance(self.masks, tuple):
            object.__setattr__(self, "masks", tuple(self.masks))
        if not self.masks:
            raise InvalidInputError("mask set needs at least one mask")
        h, w = self.spec.plane_height, self.spec.plane_width
        for m in self.masks:
            if (m.plane_height, m.plane_width) != (h, w):
                raise InvalidInputError("all masks must share the spec's plane")
        if self.masks_per_axis < 1:
            raise InvalidInputError("masks_per_axis must be positive")

    def __len__(self) -> int:
        return len(self.masks)


@dataclass(frozen=True)
class CoverageReport:
    """Outcome of verify_cover.

    `first_uncovered` is the lexicographically first failing placement,
    or None when the set covers everything.
    """

    ok: bool
    first_uncovered: Placement | None
    placements_checked: int


def _axis_anchors(n: int, patch: int, k: int) -> tuple[list[int], int]:
    """Anchor offsets and mask extent along one axis of length n.

    Stride s = ceil((n - patch + 1) / k) and extent m = patch - 1 + s
    guarantee that consecutive anchors leave no gap an anchor-to-anchor
    patch could slip through; the final anchor is pinned to n - m so the
    tail is covered. Anchors that would leave the plane are clamped to
    n - m, then deduplicated, so fewer than k anchors can come back.
    """
    if patch < 1:
        raise InvalidInputError("patch extent must be at least 1")
    if patch > n:
        raise InvalidInputError(f"patch extent {patch} exceeds axis length {n}")
    positions = n - patch + 1
    if k < 1:
        raise InvalidInputError("masks_per_axis must be positive")
    if k != 1 and k > positions:
        raise InvalidInputError(
            f"masks_per_axis {k} exceeds the {positions} distinct anchors"
        )
    stride = -(-positions // k)
    extent = patch - 1 + stride
    if extent < patch:  # cannot happen while n >= patch; kept as a guard
        raise InvalidInputError("degenerate mask extent")
    extent = min(extent, n)
    last = n - extent
    anchors = {min(i * stride, last) for i in range(k - 1)}
    anchors.add(last)
    return sorted(anchors), extent


def gen_square_cover(
    plane: tuple[int, int], patch_size: int, masks_per_axis: int
) -> MaskSet:
    """Covering set for all square patches of the given size.

    The two axes are covered independently and the mask set is the
    axis product, ordered row-major by anchor.
    """
    h, w = plane
    spec = PatchSpec.square(h, w, patch_size)
    ys, mh = _axis_anchors(h, patch_size, masks_per_axis)
    xs, mw = _axis_anchors(w, patch_size, masks_per_axis)
    masks = tuple(
        Mask(h, w, (Rect(ay, ax, mh, mw),)) for ay in ys for ax in xs
    )
    return MaskSet(masks, spec, masks_per_axis)


def _rect_buckets(h: int, w: int, area: int) -> list[tuple[int, int]]:
    """Rectangle extents (ph, pw) such that any patch of area <= `area`
    fits inside at least one bucket.

    Bucket heights halve from min(area, h) down to 1. A bucket with the
    height range (lo, hi] must be wide enough for the widest patch of
    any height above lo, which is floor(area / (lo + 1)) columns. The
    near-square extreme is added explicitly; dominated buckets are
    pruned.
    """
    buckets: list[tuple[int, int]] = []
    hi = min(area, h)
    while hi >= 1:
        lo = hi // 2
        pw = min(w, max(1, area // (lo + 1)))
        buckets.append((hi, pw))
        if hi == 1:
            break
        hi = lo
    side = math.isqrt(area)
    if side * side < area:
        side += 1
    buckets.append((min(side, h), min(side, w)))
    pruned: list[tuple[int, int]] = []
    for b in buckets:
        if any(o != b and o[0] >= b[0] and o[1] >= b[1] for o in buckets):
            continue
        if b not in pruned:
            pruned.append(b)
    return pruned


def gen_rect_cover(plane: tuple[int, int], area: int, masks_per_axis: int) -> MaskSet:
    """Covering set for all rectangles with area up to the budget.

    Builds one square-style axis cover per shape bucket and unions them.
    Mask count stays O(masks_per_axis^2 * log(area)); verify_cover is
    the ground truth for the construction.
    """
    h, w = plane
    spec = PatchSpec.rectangle(h, w, area)
    masks: list[Mask] = []
    seen = set()
    for ph, pw in _rect_buckets(h, w, area):
        ys, mh = _axis_anchors(h, ph, min(masks_per_axis, h - ph + 1))
        xs, mw = _axis_anchors(w, pw, min(masks_per_axis, w - pw + 1))
        for ay in ys:
            for ax in xs:
                m = Mask(h, w, (Rect(ay, ax, mh, mw),))
                if m not in seen:
                    seen.add(m)
                    masks.append(m)
    return MaskSet(tuple(masks), spec, masks_per_axis)


def gen_multi_cover(base: MaskSet, patch_count: int) -> MaskSet:
    """Compound cover for `patch_count` disjoint patches.

    Every combination of `patch_count` base masks is unioned into one
    compound mask: each patch is covered by some base mask, and some
    combination contains all of those masks at once. With patch_count 1
    the base set is returned unchanged.
    """
    if patch_count < 1:
        raise InvalidInputError("patch_count must be at least 1")
    if patch_count == 1:
        return base
    if base.spec.kind != "square":
        raise InvalidInputError("compound covers are built from square covers")
    n = len(base.masks)
    if patch_count > n:
        raise InvalidInputError(
            f"patch_count {patch_count} exceeds the {n} base masks"
        )
    h, w = base.spec.plane_height, base.spec.plane_width
    masks = tuple(
        Mask(h, w, tuple(r for i in combo for r in base.masks[i].rects))
        for combo in itertools.combinations(range(n), patch_count)
    )
    spec = PatchSpec.multi(h, w, patch_count, base.spec.size)
    return MaskSet(masks, spec, base.masks_per_axis, compound=True)


def verify_cover(mask_set: MaskSet) -> CoverageReport:
    """Exhaustively check that every legal placement is covered.

    Never raises on a coverage failure; the report carries the
    lexicographically first uncovered placement instead.
    """
    checked = 0
    masks = mask_set.masks
    for placement in iter_placements(mask_set.spec):
        checked += 1
        if not any(mask_covers(m, placement) for m in masks):
            return CoverageReport(False, placement, checked)
    return CoverageReport(True, None, checked)
