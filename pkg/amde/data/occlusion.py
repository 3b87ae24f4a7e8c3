"""Random-erasing occlusion.

``s`` is the occluded fraction of the image area. One rectangle of
``round(s * H * W)`` pixels (or the closest area an integer rectangle
inside the image can reach) is overwritten across all channels.
"""
from __future__ import annotations

import enum
from typing import List, Optional, Tuple

import numpy as np

from ..errors import ContractError, DimensionError
from ..utils.json import JsonField, JsonObject, JsonTemplate
from ..utils.rng import derive_rng

__all__ = ('Fill', 'OcclusionSpec', 'erase_rectangle', 'random_erase',
           'occlude_images')


class Fill(str, enum.Enum):
    UNIFORM = 'uniform'
    CONSTANT = 'constant'


def _seed(value) -> int:
    if isinstance(value, bool) or int(value) != value or value < 0:
        raise ValueError(f'expected a non-negative integer, got {value!r}')
    return int(value)


OcclusionTemplate: JsonTemplate[OcclusionSpec] = JsonTemplate(
    s=JsonField('s', float, default=0.0),
    fill=JsonField('fill', Fill, lambda fill: fill.value,
                   default=Fill.UNIFORM),
    seed=JsonField('seed', _seed, default=0),
    fill_value=JsonField('fill_value', float, default=0.0),
)


class OcclusionSpec(JsonObject, template=OcclusionTemplate):
    """How much of an image to occlude and with what.

    Attributes
        s: float
            The occluded area fraction, in [0, 1].

        fill: Fill
            Uniform values over the image's range, or ``fill_value``.

        seed: int
            The seed batch occlusion derives per-image streams from.
    """
    s: float
    fill: Fill
    seed: int
    fill_value: float


def erase_rectangle(height: int, width: int, s: float,
                    rng: np.random.Generator
                    ) -> Optional[Tuple[int, int, int, int]]:
    """Picks (top, left, rect_height, rect_width) for an area fraction `s`,
    None when nothing is to be erased.

    Among all rectangles fitting the image whose area is closest to
    ``round(s * height * width)`` one is drawn uniformly, then placed
    uniformly.
    """
    target = int(round(s * height * width))
    if target == 0:
        return None

    best: List[Tuple[int, int]] = []
    best_error = None
    for rect_height in range(1, height + 1):
        quotient = target / rect_height
        for rect_width in {int(np.floor(quotient)), int(np.ceil(quotient))}:
            rect_width = min(max(rect_width, 1), width)
            error = abs(rect_height * rect_width - target)
            if best_error is None or error < best_error:
                best, best_error = [(rect_height, rect_width)], error
            elif error == best_error and (rect_height, rect_width) not in best:
                best.append((rect_height, rect_width))

    rect_height, rect_width = best[int(rng.integers(len(best)))]
    top = int(rng.integers(0, height - rect_height + 1))
    left = int(rng.integers(0, width - rect_width + 1))
    return top, left, rect_height, rect_width


def random_erase(image: np.ndarray, spec: OcclusionSpec,
                 rng: np.random.Generator) -> np.ndarray:
    """Returns a copy of `image` with one rectangle overwritten.

    Arguments
        image: numpy.ndarray
            (channels, height, width) or (height, width).

        spec: :class:`OcclusionSpec`
            The area fraction and fill.

        rng: numpy.random.Generator
            Drives the rectangle shape, position and fill values.

    Raises
        :exc:`ContractError`
            Raised when ``spec.s`` is outside [0, 1].
    """
    if not 0.0 <= spec.s <= 1.0:
        raise ContractError(f'occlusion fraction must be in [0, 1], '
                            f'got {spec.s}')
    image = np.asarray(image, dtype=np.float64)
    if image.ndim not in (2, 3):
        raise DimensionError('expected a (channels, height, width) image',
                             image.shape)

    result = image.copy()
    height, width = image.shape[-2:]
    rectangle = erase_rectangle(height, width, spec.s, rng)
    if rectangle is None:
        return result

    top, left, rect_height, rect_width = rectangle
    region = result[..., top:top + rect_height, left:left + rect_width]
    if spec.fill is Fill.CONSTANT:
        region[...] = spec.fill_value
    else:
        low, high = float(image.min()), float(image.max())
        if not high > low:
            low, high = 0.0, 1.0
        region[...] = rng.uniform(low, high, size=region.shape)
    return result


def occlude_images(images: np.ndarray, spec: OcclusionSpec,
                   seed: Optional[int] = None) -> np.ndarray:
    """Erases every image of a (N, channels, height, width) batch.

    Image ``i`` uses the stream ``derive_rng(seed, i)`` so the result does
    not depend on processing order. `seed` defaults to ``spec.seed``.
    """
    if not 0.0 <= spec.s <= 1.0:
        raise ContractError(f'occlusion fraction must be in [0, 1], '
                            f'got {spec.s}')
    if spec.s == 0.0 or len(images) == 0:
        return np.array(images, dtype=np.float64, copy=True)

    seed = spec.seed if seed is None else seed
    return np.stack([random_erase(image, spec, derive_rng(seed, index))
                     for index, image in enumerate(images)])
