"""Images, rectangles, masks, and patch regions.

Pixels are small unsigned integers over an explicit finite alphabet so
that patch contents can be enumerated exhaustively; ordinary 8-bit
images are the alphabet_size=256 case. Masking zeroes every channel at
the masked spatial locations. All operations return new values; nothing
here mutates its inputs.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Iterator, Sequence

from .errors import DimensionMismatchError, InvalidInputError

__all__ = [
    "Rect",
    "Image",
    "Mask",
    "PatchSpec",
    "Placement",
    "apply_mask",
    "apply_patch",
    "mask_covers",
    "iter_placements",
    "count_placements",
]

MASK_FILL_VALUE = 0


@dataclass(frozen=True, order=True)
class Rect:
    """Axis-aligned rectangle in (row, column) coordinates.

    `top`/`left` are inclusive, extents are at least 1. Ordering is
    lexicographic on (top, left, height, width), which is also the
    deterministic placement order used everywhere.
    """

    top: int
    left: int
    height: int
    width: int

    def __post_init__(self):
        if self.top < 0 or self.left < 0:
            raise InvalidInputError(f"rect origin must be non-negative: {self}")
        if self.height < 1 or self.width < 1:
            raise InvalidInputError(f"rect extents must be at least 1: {self}")

    @property
    def bottom(self) -> int:
        """One past the last covered row."""
        return self.top + self.height

    @property
    def right(self) -> int:
        """One past the last covered column."""
        return self.left + self.width

    @property
    def area(self) -> int:
        return self.height * self.width

    def inside_plane(self, plane_height: int, plane_width: int) -> bool:
        return self.bottom <= plane_height and self.right <= plane_width

    def contains(self, other: "Rect") -> bool:
        return (
            self.top <= other.top
            and self.left <= other.left
            and other.bottom <= self.bottom
            and other.right <= self.right
        )

    def intersects(self, other: "Rect") -> bool:
        return (
            self.top < other.bottom
            and other.top < self.bottom
            and self.left < other.right
            and other.left < self.right
        )

    def to_list(self) -> list[int]:
        return [self.top, self.left, self.height, self.width]


Placement = tuple[Rect, ...]


@dataclass(frozen=True)
class Image:
    """Immutable dense image with row-major pixels, channels innermost.

    The flat index of (y, x, ch) is (y * width + x) * channels + ch.
    Every pixel lies in [0, alphabet_size - 1].
    """

    height: int
    width: int
    channels: int
    alphabet_size: int
    pixels: tuple[int, ...]

    def __post_init__(self):
        if self.height < 1 or self.width < 1 or self.channels < 1:
            raise InvalidInputError(
                f"image dims must be positive, got "
                f"{self.height}x{self.width}x{self.channels}"
            )
        if self.alphabet_size < 2:
            raise InvalidInputError("alphabet_size must be at least 2")
        if not isinstance(self.pixels, tuple):
            object.__setattr__(self, "pixels", tuple(self.pixels))
        expected = self.height * self.width * self.channels
        if len(self.pixels) != expected:
            raise InvalidInputError(
                f"expected {expected} pixels, got {len(self.pixels)}"
            )
        if min(self.pixels) < 0 or max(self.pixels) >= self.alphabet_size:
            raise InvalidInputError(
                f"pixel values must lie in [0, {self.alphabet_size - 1}]"
            )

    @property
    def bytes_per_pixel(self) -> int:
        if self.alphabet_size <= 256:
            return 1
        if self.alphabet_size <= 65536:
            return 2
        return 4

    @cached_property
    def packed(self) -> bytes:
        """Canonical little-endian byte encoding used by hash backends."""
        bpp = self.bytes_per_pixel
        if bpp == 1:
            return bytes(self.pixels)
        return b"".join(v.to_bytes(bpp, "little") for v in self.pixels)

    def flat_index(self, y: int, x: int, ch: int = 0) -> int:
        return (y * self.width + x) * self.channels + ch

    def pixel(self, y: int, x: int, ch: int = 0) -> int:
        return self.pixels[self.flat_index(y, x, ch)]


@dataclass(frozen=True)
class Mask:
    """Union of rectangles on a fixed plane.

    Masking an image zeroes all channels at every location inside the
    union. Rectangles may overlap; the union is what matters.
    """

    plane_height: int
    plane_width: int
    rects: tuple[Rect, ...]

    def __post_init__(self):
        if not isinstance(self.rects, tuple):
            object.__setattr__(self, "rects", tuple(self.rects))
        if not self.rects:
            raise InvalidInputError("mask needs at least one rect")
        for r in self.rects:
            if not r.inside_plane(self.plane_height, self.plane_width):
                raise InvalidInputError(
                    f"mask rect {r} exceeds plane "
                    f"{self.plane_height}x{self.plane_width}"
                )

    def to_matrix(self) -> list[list[bool]]:
        """Dense boolean grid; the slow, obviously-correct view for tests."""
        grid = [[False] * self.plane_width for _ in range(self.plane_height)]
        for r in self.rects:
            for y in range(r.top, r.bottom):
                row = grid[y]
                for x in range(r.left, r.right):
                    row[x] = True
        return grid


@dataclass(frozen=True)
class PatchSpec:
    """Shape family of the adversary's patch, bound to a plane.

    kind "square": every size x size square placement.
    kind "rectangle": every rectangle with area <= area, any aspect.
    kind "multi": every set of `count` pairwise disjoint size x size squares.
    """

    plane_height: int
    plane_width: int
    kind: str
    size: int | None = None
    area: int | None = None
    count: int | None = None

    def __post_init__(self):
        if self.plane_height < 1 or self.plane_width < 1:
            raise InvalidInputError("plane dims must be positive")
        if self.kind == "square":
            self._check_size()
        elif self.kind == "rectangle":
            if self.area is None or self.area < 1:
                raise InvalidInputError("rectangle spec needs area >= 1")
            if self.area > self.plane_height * self.plane_width:
                raise InvalidInputError("area budget exceeds the plane")
        elif self.kind == "multi":
            self._check_size()
            if self.count is None or self.count < 1:
                raise InvalidInputError("multi spec needs count >= 1")
        else:
            raise InvalidInputError(f"unknown patch kind {self.kind!r}")

    def _check_size(self):
        if self.size is None or self.size < 1:
            raise InvalidInputError("patch size must be at least 1")
        if self.size > min(self.plane_height, self.plane_width):
            raise InvalidInputError(
                f"patch size {self.size} exceeds plane "
                f"{self.plane_height}x{self.plane_width}"
            )

    @classmethod
    def square(cls, plane_height: int, plane_width: int, size: int) -> "PatchSpec":
        return cls(plane_height, plane_width, "square", size=size)

    @classmethod
    def rectangle(cls, plane_height: int, plane_width: int, area: int) -> "PatchSpec":
        return cls(plane_height, plane_width, "rectangle", area=area)

    @classmethod
    def multi(
        cls, plane_height: int, plane_width: int, count: int, size: int
    ) -> "PatchSpec":
        return cls(plane_height, plane_width, "multi", size=size, count=count)

    def to_dict(self) -> dict:
        out: dict = {"kind": self.kind}
        if self.size is not None:
            out["size"] = self.size
        if self.area is not None:
            out["area"] = self.area
        if self.count is not None:
            out["count"] = self.count
        return out

    @classmethod
    def from_dict(cls, plane_height: int, plane_width: int, d: dict) -> "PatchSpec":
        return cls(
            plane_height,
            plane_width,
            d["kind"],
            size=d.get("size"),
            area=d.get("area"),
            count=d.get("count"),
        )


# ---------- mask and patch application ----------

_ZERO_RUN: list[int] = [MASK_FILL_VALUE] * 4096


def _zero_run(n: int) -> list[int]:
    global _ZERO_RUN
    if n > len(_ZERO_RUN):
        _ZERO_RUN = [MASK_FILL_VALUE] * (2 * n)
    return _ZERO_RUN[:n]


@lru_cache(maxsize=8192)
def _mask_pixel_spans(mask: Mask, channels: int) -> tuple[tuple[int, int], ...]:
    """Half-open spans of the flat pixel array zeroed by this mask."""
    w = mask.plane_width
    spans = []
    for r in mask.rects:
        for y in range(r.top, r.bottom):
            spans.append(((y * w + r.left) * channels, (y * w + r.right) * channels))
    return tuple(spans)


def apply_mask(image: Image, mask: Mask) -> Image:
    """Zero every channel at the masked locations; the rest is untouched."""
    if (mask.plane_height, mask.plane_width) != (image.height, image.width):
        raise DimensionMismatchError(
            f"mask plane {mask.plane_height}x{mask.plane_width} does not match "
            f"image {image.height}x{image.width}"
        )
    buf = list(image.pixels)
    for start, stop in _mask_pixel_spans(mask, image.channels):
        buf[start:stop] = _zero_run(stop - start)
    return Image(
        image.height, image.width, image.channels, image.alphabet_size, tuple(buf)
    )


def _check_placement(image_h: int, image_w: int, placement: Placement) -> None:
    for r in placement:
        if not r.inside_plane(image_h, image_w):
            raise InvalidInputError(f"patch rect {r} exceeds plane {image_h}x{image_w}")
    for a, b in itertools.combinations(placement, 2):
        if a.intersects(b):
            raise InvalidInputError(f"patch rects overlap: {a} and {b}")


def apply_patch(image: Image, placement: Placement, content: Sequence[int]) -> Image:
    """Write `content` into the placement rects, row-major, channels innermost.

    Content is one flat run per rect, concatenated in placement order.
    Rects must lie inside the plane and be pairwise disjoint.
    """
    if isinstance(placement, Rect):
        placement = (placement,)
    _check_placement(image.height, image.width, placement)
    c = image.channels
    need = sum(r.area for r in placement) * c
    if len(content) != need:
        raise InvalidInputError(
            f"content length {len(content)} does not match patch area {need}"
        )
    for v in content:
        if not 0 <= v < image.alphabet_size:
            raise InvalidInputError(
                f"content value {v} outside [0, {image.alphabet_size - 1}]"
            )
    buf = list(image.pixels)
    w = image.width
    pos = 0
    for r in placement:
        run = r.width * c
        for y in range(r.top, r.bottom):
            start = (y * w + r.left) * c
            buf[start : start + run] = content[pos : pos + run]
            pos += run
    return Image(
        image.height, image.width, image.channels, image.alphabet_size, tuple(buf)
    )


def _row_intervals_cover(
    mask_rects: Sequence[Rect], y: int, need_left: int, need_right: int
) -> bool:
    """Does the union of mask rects cover [need_left, need_right) on row y?"""
    ivals = sorted(
        (r.left, r.right) for r in mask_rects if r.top <= y < r.bottom
    )
    cur = need_left
    for left, right in ivals:
        if left > cur:
            return False
        if right > cur:
            cur = right
        if cur >= need_right:
            return True
    return cur >= need_right


def mask_covers(mask: Mask, placement: Placement) -> bool:
    """True when every pixel of the placement lies inside the mask union."""
    if isinstance(placement, Rect):
        placement = (placement,)
    for r in placement:
        if not r.inside_plane(mask.plane_height, mask.plane_width):
            raise DimensionMismatchError(
                f"placement rect {r} exceeds mask plane "
                f"{mask.plane_height}x{mask.plane_width}"
            )
        if any(mr.contains(r) for mr in mask.rects):
            continue
        if len(mask.rects) == 1:
            return False
        for y in range(r.top, r.bottom):
            if not _row_intervals_cover(mask.rects, y, r.left, r.right):
                return False
    return True


# ---------- placement enumeration ----------


def _square_anchors(spec: PatchSpec) -> Iterator[Rect]:
    p = spec.size
    for top in range(spec.plane_height - p + 1):
        for left in range(spec.plane_width - p + 1):
            yield Rect(top, left, p, p)


def iter_placements(spec: PatchSpec) -> Iterator[Placement]:
    """Every legal placement under the spec, in deterministic lexicographic order.

    Square and rectangle placements are single rects ordered by
    (height, width, top, left); multi placements are index combinations
    of the square anchor list, so combination order is lexicographic too.
    """
    if spec.kind == "square":
        for r in _square_anchors(spec):
            yield (r,)
    elif spec.kind == "rectangle":
        for rh in range(1, min(spec.plane_height, spec.area) + 1):
            max_rw = min(spec.plane_width, spec.area // rh)
            for rw in range(1, max_rw + 1):
                for top in range(spec.plane_height - rh + 1):
                    for left in range(spec.plane_width - rw + 1):
                        yield (Rect(top, left, rh, rw),)
    elif spec.kind == "multi":
        anchors = list(_square_anchors(spec))
        for combo in itertools.combinations(anchors, spec.count):
            ok = True
            for a, b in itertools.combinations(combo, 2):
                if a.intersects(b):
                    ok = False
                    break
            if ok:
                yield combo
    else:  # unreachable; PatchSpec validates kind
        raise InvalidInputError(f"unknown patch kind {spec.kind!r}")


def count_placements(spec: PatchSpec, cap: int | None = None) -> tuple[int, bool]:
    """Number of legal placements, and whether the count is exact.

    Square and rectangle kinds have closed forms. The multi kind is
    counted by enumeration; when `cap` is given and reached, the result
    is a lower bound and the second element is False.
    """
    h, w = spec.plane_height, spec.plane_width
    if spec.kind == "square":
        p = spec.size
        return (h - p + 1) * (w - p + 1), True
    if spec.kind == "rectangle":
        total = 0
        for rh in range(1, min(h, spec.area) + 1):
            max_rw = min(w, spec.area // rh)
            for rw in range(1, max_rw + 1):
                total += (h - rh + 1) * (w - rw + 1)
        return total, True
    total = 0
    for _ in iter_placements(spec):
        total += 1
        if cap is not None and total >= cap:
            return total, False
    return total, True
