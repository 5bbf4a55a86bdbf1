"""Deterministic word-cloud geometry and vector rendering.

Glyph boxes come from a synthetic metric model (width scales with character
count, height with font size) so layouts are platform-independent and
golden-testable. Placement walks an outward Archimedean spiral from a
seed-jittered start angle; the greedy order is descending weight with a
lexicographic tie-break. Everything here is a pure function of its inputs:
same entries, canvas, seed, and padding give byte-identical output.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence
from xml.sax.saxutils import escape

from .errors import ValidationError
from .salience import A_DOMINANT, B_DOMINANT, WITHIN_MARGIN, ScaledWeights

NEUTRAL = "neutral"
COLOR_CLASSES = (NEUTRAL, A_DOMINANT, B_DOMINANT, WITHIN_MARGIN)

DEFAULT_PALETTE = {
    NEUTRAL: "#334155",
    A_DOMINANT: "#b91c1c",
    B_DOMINANT: "#1d4ed8",
    WITHIN_MARGIN: "#9ca3af",
}

CHAR_WIDTH_FACTOR = 0.6
LINE_HEIGHT_FACTOR = 1.2
FONT_FAMILY = "Helvetica, Arial, sans-serif"


@dataclass(frozen=True)
class CloudEntry:
    concept_key: str
    display_text: str
    weight: float
    font_size: float
    color_class: str = NEUTRAL
    breadth: int | None = None
    participants: tuple[str, ...] = ()


@dataclass(frozen=True)
class GlyphBox:
    entry: CloudEntry
    x: float
    y: float
    width: float
    height: float


@dataclass(frozen=True)
class Canvas:
    width: float
    height: float

    def __post_init__(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise ValidationError("canvas dimensions must be positive")


@dataclass(frozen=True)
class SpiralConfig:
    # Defaults favor dense packing with bounded iteration counts.
    angle_step: float = 0.35
    radius_per_turn: float = 2.0


@dataclass(frozen=True)
class CloudLayout:
    label: str
    canvas: Canvas
    boxes: tuple[GlyphBox, ...]
    seed: int
    overflow: tuple[CloudEntry, ...]


def font_sizes(
    weights: ScaledWeights | Mapping[str, float],
    min_pt: float = 12.0,
    max_pt: float = 48.0,
    top_k: int | None = None,
    *,
    display: Mapping[str, str] | None = None,
    color_classes: Mapping[str, str] | None = None,
    breadth: Mapping[str, int] | None = None,
    participants: Mapping[str, Sequence[str]] | None = None,
) -> list[CloudEntry]:
    """Affine-map weights onto [min_pt, max_pt] font sizes.

    Zero-weight entries are excluded; ``top_k`` keeps the k heaviest (ties
    broken lexicographically by key, and values past the entry count keep
    everything); a degenerate all-equal set maps to the midpoint size. The
    optional maps attach display text, diff coloring, and hover metadata.
    """
    if min_pt >= max_pt:
        raise ValidationError(f"need min_pt < max_pt, got [{min_pt}, {max_pt}]")
    if min_pt <= 0:
        raise ValidationError("min_pt must be positive")
    if top_k is not None and top_k < 1:
        raise ValidationError("top_k must be >= 1")

    raw = weights.weights if isinstance(weights, ScaledWeights) else dict(weights)
    negative = {k: w for k, w in raw.items() if w < 0}
    if negative:
        raise ValidationError(f"weights must be non-negative: {negative}")

    candidates = sorted(
        ((k, w) for k, w in raw.items() if w > 0), key=lambda kw: (-kw[1], kw[0])
    )
    if top_k is not None:
        candidates = candidates[:top_k]
    if not candidates:
        return []

    w_max = candidates[0][1]
    w_min = candidates[-1][1]
    span = w_max - w_min

    entries = []
    for key, weight in candidates:
        if span == 0:
            size = (min_pt + max_pt) / 2
        else:
            size = min_pt + (weight - w_min) / span * (max_pt - min_pt)
        entries.append(
            CloudEntry(
                concept_key=key,
                display_text=(display or {}).get(key, key),
                weight=weight,
                font_size=size,
                color_class=(color_classes or {}).get(key, NEUTRAL),
                breadth=(breadth or {}).get(key),
                participants=tuple((participants or {}).get(key, ())),
            )
        )
    return entries


def measure(display_text: str, font_size: float) -> tuple[float, float]:
    """Synthetic glyph-box metrics: (width, height) in canvas units."""
    if not display_text:
        raise ValidationError("cannot measure empty text")
    return (
        len(display_text) * font_size * CHAR_WIDTH_FACTOR,
        font_size * LINE_HEIGHT_FACTOR,
    )


def _disjoint(a: tuple[float, float, float, float], b: tuple[float, float, float, float]) -> bool:
    ax0, ay0, ax1, ay1 = a
    bx0, by0, bx1, by1 = b
    return ax1 <= bx0 or bx1 <= ax0 or ay1 <= by0 or by1 <= ay0


def placement_order(entries: Iterable[CloudEntry]) -> list[CloudEntry]:
    return sorted(entries, key=lambda e: (-e.weight, e.concept_key))


def place(
    entries: Iterable[CloudEntry],
    canvas: Canvas,
    seed: int = 0,
    padding: float = 2.0,
    spiral: SpiralConfig = SpiralConfig(),
    label: str = "",
) -> CloudLayout:
    """Greedy spiral placement; collision-free or overflow, never dropped.

    Each entry walks outward from the canvas center until its padded box
    intersects no placed padded box and lies fully inside the canvas. The
    walk gives up once the radius exceeds the canvas diagonal, sending the
    entry to overflow.
    """
    if padding < 0:
        raise ValidationError("padding must be >= 0")
    ordered = placement_order(entries)
    rng = random.Random(seed)
    cx, cy = canvas.width / 2, canvas.height / 2
    cw, ch = canvas.width, canvas.height
    max_radius = math.hypot(cw, ch)
    angle_step = spiral.angle_step
    radius_step = spiral.radius_per_turn * angle_step / (2.0 * math.pi)
    cos, sin = math.cos, math.sin

    placed: list[GlyphBox] = []
    padded: list[tuple[float, float, float, float]] = []
    overflow: list[CloudEntry] = []

    for entry in ordered:
        width, height = measure(entry.display_text, entry.font_size)
        theta0 = rng.uniform(0.0, 2.0 * math.pi)
        if width > cw or height > ch:
            # No spiral position can pass the containment check.
            overflow.append(entry)
            continue
        half_w, half_h = width / 2, height / 2
        step = 0
        while True:
            radius = radius_step * step
            if radius > max_radius:
                overflow.append(entry)
                break
            angle = theta0 + step * angle_step
            x = cx + radius * cos(angle) - half_w
            y = cy + radius * sin(angle) - half_h
            step += 1
            if x < 0 or y < 0 or x + width > cw or y + height > ch:
                continue
            px0, py0 = x - padding, y - padding
            px1, py1 = x + width + padding, y + height + padding
            for bx0, by0, bx1, by1 in padded:
                if px1 > bx0 and bx1 > px0 and py1 > by0 and by1 > py0:
                    break
            else:
                placed.append(GlyphBox(entry=entry, x=x, y=y, width=width, height=height))
                padded.append((px0, py0, px1, py1))
                break

    return CloudLayout(
        label=label,
        canvas=canvas,
        boxes=tuple(placed),
        seed=seed,
        overflow=tuple(overflow),
    )


# ---------------------------------------------------------------------------
# Vector output
# ---------------------------------------------------------------------------


def _attr(value: str) -> str:
    return escape(value, {'"': "&quot;"})


def _fmt(value: float) -> str:
    return f"{value:.2f}"


def render_vector(
    layout: CloudLayout,
    palette: Mapping[str, str] | None = None,
    diff_legend: bool = False,
    legend_labels: Mapping[str, str] | None = None,
) -> str:
    """Serialize a layout as an SVG 1.1 document, byte-deterministic.

    Every text element carries ``data-concept`` plus, when known,
    ``data-breadth`` and ``data-participants`` so a UI can attach hover
    behavior without recomputing anything.
    """
    colors = dict(DEFAULT_PALETTE)
    colors.update(palette or {})
    w = _fmt(layout.canvas.width)
    h = _fmt(layout.canvas.height)
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{w}" height="{h}" viewBox="0 0 {w} {h}">',
        f'<rect x="0" y="0" width="{w}" height="{h}" fill="#ffffff"/>',
    ]
    for box in layout.boxes:
        entry = box.entry
        attrs = [
            f'x="{_fmt(box.x)}"',
            # Baseline sits one em below the box top; the synthetic line
            # height (1.2em) leaves room for descenders.
            f'y="{_fmt(box.y + entry.font_size)}"',
            f'font-size="{_fmt(entry.font_size)}"',
            f'font-family="{FONT_FAMILY}"',
            f'fill="{colors.get(entry.color_class, colors[NEUTRAL])}"',
            f'data-concept="{_attr(entry.concept_key)}"',
        ]
        if entry.breadth is not None:
            attrs.append(f'data-breadth="{entry.breadth}"')
        if entry.participants:
            attrs.append(f'data-participants="{_attr(",".join(entry.participants))}"')
        lines.append(f'<text {" ".join(attrs)}>{escape(entry.display_text)}</text>')
    if diff_legend:
        labels = {
            A_DOMINANT: "higher in A",
            B_DOMINANT: "higher in B",
            WITHIN_MARGIN: "within margin",
        }
        labels.update(legend_labels or {})
        lines.append('<g data-role="legend">')
        for i, cls in enumerate((A_DOMINANT, B_DOMINANT, WITHIN_MARGIN)):
            y = 16 + i * 18
            lines.append(
                f'<rect x="12" y="{y}" width="12" height="12" fill="{colors[cls]}"/>'
            )
            lines.append(
                f'<text x="30" y="{y + 10}" font-size="12.00" '
                f'font-family="{FONT_FAMILY}" fill="#111827">{escape(labels[cls])}</text>'
            )
        lines.append("</g>")
    lines.append("</svg>")
    return "\n".join(lines) + "\n"
