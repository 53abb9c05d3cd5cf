"""Image preparation: screening-label binarization, resizing, background
removal, batch standardization, and training augmentation.

Images are 2-D float64 arrays. Stored files normalize to [0, 1] on load;
standardized batches may of course leave that range.

Background removal follows the classic scanned-film recipe: a rolling-ball
pass deletes narrow bright artifacts (stickers, tag strokes, specks), a fuzzy
entropy threshold then separates the remaining broad bright tissue from the
dark field, and a 3x3 erosion/dilation cleans the mask edges.
"""

from __future__ import annotations

import enum
import math

import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import ContractError, DataError

GRAY_BINS = 256


class BinaryLabel(enum.Enum):
    NEGATIVE = 0
    POSITIVE = 1
    EXCLUDED = 2


def binarize_birads(birads: int) -> BinaryLabel:
    """Map a 0..6 screening assessment to a binary label.

    1 and 2 (negative/benign findings) are NEGATIVE; 4, 5 and 6 (suspicious
    through confirmed) are POSITIVE; 0 (incomplete) and 3 (indeterminate
    short-interval follow-up) are EXCLUDED from the binary task.
    """
    if int(birads) != birads or not 0 <= int(birads) <= 6:
        raise DataError(f"assessment category must be an integer in 0..6, got {birads!r}")
    birads = int(birads)
    if birads in (1, 2):
        return BinaryLabel.NEGATIVE
    if birads in (4, 5, 6):
        return BinaryLabel.POSITIVE
    return BinaryLabel.EXCLUDED


def validate_image(img, unit_range: bool = True) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2 or img.shape[0] < 1 or img.shape[1] < 1:
        raise ContractError(f"image must be a non-empty 2-D array, got shape {img.shape}")
    if not np.all(np.isfinite(img)):
        raise ContractError("image contains non-finite values")
    if unit_range and (img.min() < 0.0 or img.max() > 1.0):
        raise ContractError("image values must lie in [0, 1]")
    return img


# ---------------------------------------------------------------------------
# file io


def _read_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    # header = magic, width, height, maxval as whitespace-separated tokens,
    # with '#' comments running to end of line
    tokens = []
    pos = 0
    while len(tokens) < 4:
        if pos >= len(data):
            raise DataError(f"{path}: truncated PGM header")
        ch = data[pos : pos + 1]
        if ch == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
        elif ch.isspace():
            pos += 1
        else:
            start = pos
            while pos < len(data) and not data[pos : pos + 1].isspace():
                pos += 1
            tokens.append(data[start:pos])
    magic = tokens[0]
    try:
        width, height, maxval = (int(t) for t in tokens[1:4])
    except ValueError as exc:
        raise DataError(f"{path}: malformed PGM header") from exc
    if magic not in (b"P5", b"P2") or width < 1 or height < 1 or not 0 < maxval < 65536:
        raise DataError(f"{path}: not an 8/16-bit PGM file")
    if magic == b"P2":
        values = np.array(data[pos:].split(), dtype=np.int64)
        if values.size != width * height:
            raise DataError(f"{path}: PGM pixel count mismatch")
        raw = values.reshape(height, width)
    else:
        pos += 1  # single whitespace byte after maxval
        dtype = ">u2" if maxval > 255 else np.uint8
        count = width * height
        raw = np.frombuffer(data, dtype=dtype, count=count, offset=pos)
        if raw.size != count:
            raise DataError(f"{path}: PGM pixel data truncated")
        raw = raw.reshape(height, width).astype(np.int64)
    if raw.max() > maxval:
        raise DataError(f"{path}: PGM sample exceeds declared maxval")
    return raw / float(maxval)


def read_image(path) -> np.ndarray:
    """Load a PGM (8/16-bit) or grayscale PNG, scaled to [0, 1]."""
    name = str(path).lower()
    if name.endswith(".pgm"):
        return _read_pgm(path)
    if name.endswith(".png"):
        try:
            with Image.open(path) as im:
                if im.mode in ("I", "I;16"):
                    arr = np.asarray(im, dtype=np.float64)
                    return np.clip(arr / 65535.0, 0.0, 1.0)
                if im.mode != "L":
                    im = im.convert("L")
                return np.asarray(im, dtype=np.float64) / 255.0
        except (OSError, SyntaxError) as exc:
            raise DataError(f"cannot read PNG {path}: {exc}") from exc
    raise DataError(f"unsupported image format: {path}")


def write_image(img, path) -> None:
    """Store an image as 8-bit PGM or PNG depending on the extension."""
    img = validate_image(img)
    raw = np.rint(img * 255.0).astype(np.uint8)
    name = str(path).lower()
    if name.endswith(".pgm"):
        header = f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode()
        with open(path, "wb") as fh:
            fh.write(header + raw.tobytes())
    elif name.endswith(".png"):
        Image.fromarray(raw, mode="L").save(path)
    else:
        raise DataError(f"unsupported image format: {path}")


# ---------------------------------------------------------------------------
# geometry


def resize_bilinear(img, out_height: int = 224, out_width: int = 224) -> np.ndarray:
    """Bilinear resample on half-pixel-center coordinates with edge clamping."""
    img = validate_image(img)
    if out_height < 1 or out_width < 1:
        raise ContractError("output size must be positive")
    in_h, in_w = img.shape

    def axis_coords(n_out, n_in):
        src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        src = np.clip(src, 0.0, n_in - 1.0)
        lo = np.floor(src).astype(np.int64)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, src - lo

    y0, y1, wy = axis_coords(out_height, in_h)
    x0, x1, wx = axis_coords(out_width, in_w)
    wy = wy[:, None]
    wx = wx[None, :]
    out = (
        img[np.ix_(y0, x0)] * (1 - wy) * (1 - wx)
        + img[np.ix_(y0, x1)] * (1 - wy) * wx
        + img[np.ix_(y1, x0)] * wy * (1 - wx)
        + img[np.ix_(y1, x1)] * wy * wx
    )
    return out


# ---------------------------------------------------------------------------
# rolling ball


def _ball_structure(radius: int) -> tuple[np.ndarray, np.ndarray]:
    if radius < 1:
        raise ContractError("radius must be >= 1")
    span = np.arange(-radius, radius + 1)
    dist2 = span[:, None] ** 2 + span[None, :] ** 2
    footprint = dist2 <= radius * radius
    # ball height profile, measured in 8-bit gray levels mapped onto [0,1]
    heights = np.where(footprint, np.sqrt(np.maximum(radius * radius - dist2, 0.0)) / 255.0, 0.0)
    return footprint, heights


def rolling_ball_background(img, radius: int = 5) -> tuple[np.ndarray, np.ndarray]:
    """Grayscale opening with a ball-shaped element, plus the residual.

    Returns (background, subtracted). The background keeps every structure
    the rolling ball can follow (anything wider than ~2*radius); narrow
    bright features survive only in the subtracted residual.
    """
    img = validate_image(img)
    footprint, heights = _ball_structure(radius)
    eroded = ndimage.grey_erosion(img, footprint=footprint, structure=heights, mode="reflect")
    background = ndimage.grey_dilation(eroded, footprint=footprint, structure=heights, mode="reflect")
    subtracted = np.clip(img - background, 0.0, 1.0)
    return background, subtracted


# ---------------------------------------------------------------------------
# fuzzy-entropy threshold


def _fuzzy_entropy_terms(mu: np.ndarray) -> np.ndarray:
    # Shannon entropy of membership; memberships live in [0.5, 1]
    terms = -(mu * np.log(mu))
    one_minus = 1.0 - mu
    nz = one_minus > 0.0
    terms[nz] -= one_minus[nz] * np.log(one_minus[nz])
    return terms


def huang_threshold(img) -> float:
    """Threshold minimizing fuzzy entropy over a 256-bin histogram.

    Each candidate split assigns every gray level a membership to its side's
    mean, 1/(1+|g-mu|/C); the split whose membership map is least fuzzy wins.
    Ties break toward the lower threshold. The returned value always lies
    strictly between two occupied bin centers, so ``img >= t`` is stable.
    """
    img = validate_image(img)
    bins = np.clip(np.rint(img * (GRAY_BINS - 1)).astype(np.int64), 0, GRAY_BINS - 1)
    hist = np.bincount(bins.reshape(-1), minlength=GRAY_BINS).astype(np.float64)
    occupied = np.nonzero(hist)[0]
    first, last = occupied[0], occupied[-1]
    if first == last:
        raise DataError("cannot threshold a constant image")

    levels = np.arange(GRAY_BINS, dtype=np.float64)
    weighted = hist * levels
    crange = float(last - first)

    best_t = -1
    best_entropy = math.inf
    for t in range(first, last):
        mass0 = hist[: t + 1].sum()
        mass1 = hist[t + 1 :].sum()
        mu0 = weighted[: t + 1].sum() / mass0
        mu1 = weighted[t + 1 :].sum() / mass1
        mu = np.empty(GRAY_BINS)
        mu[: t + 1] = 1.0 / (1.0 + np.abs(levels[: t + 1] - mu0) / crange)
        mu[t + 1 :] = 1.0 / (1.0 + np.abs(levels[t + 1 :] - mu1) / crange)
        entropy = float(np.dot(hist, _fuzzy_entropy_terms(mu)))
        if entropy < best_entropy:
            best_entropy = entropy
            best_t = t
    return (best_t + 0.5) / (GRAY_BINS - 1)


# ---------------------------------------------------------------------------
# binary morphology


def _square(radius: int) -> np.ndarray:
    if radius < 0:
        raise ContractError("radius must be >= 0")
    return np.ones((2 * radius + 1, 2 * radius + 1), dtype=bool)


def _check_mask(mask) -> np.ndarray:
    mask = np.asarray(mask)
    if mask.ndim != 2 or mask.dtype != bool:
        raise ContractError("mask must be a 2-D boolean array")
    return mask


def binary_erode(mask, radius: int = 1) -> np.ndarray:
    """Erosion by a (2r+1)^2 square; pixels beyond the border count as False."""
    mask = _check_mask(mask)
    if radius == 0:
        return mask.copy()
    return ndimage.binary_erosion(mask, structure=_square(radius), border_value=0)


def binary_dilate(mask, radius: int = 1) -> np.ndarray:
    """Dilation by a (2r+1)^2 square; pixels beyond the border count as False."""
    mask = _check_mask(mask)
    if radius == 0:
        return mask.copy()
    return ndimage.binary_dilation(mask, structure=_square(radius), border_value=0)


# ---------------------------------------------------------------------------
# background removal


def background_mask(img, radius: int = 5, morph_radius: int = 1) -> tuple[np.ndarray, float]:
    """Foreground mask for :func:`remove_background`, with the threshold used."""
    background, _ = rolling_ball_background(img, radius)
    threshold = huang_threshold(background)
    mask = background >= threshold
    mask = binary_dilate(binary_erode(mask, morph_radius), morph_radius)
    return mask, threshold


def remove_background(img, radius: int = 5, morph_radius: int = 1) -> np.ndarray:
    """Zero out everything except broad bright structure.

    The rolling ball deletes narrow artifacts from its background image, the
    fuzzy-entropy threshold splits that denoised image into dark field vs
    bright tissue, and one erosion+dilation pass trims ragged mask edges.
    """
    img = validate_image(img)
    mask, _ = background_mask(img, radius=radius, morph_radius=morph_radius)
    return img * mask


# ---------------------------------------------------------------------------
# batches


def standardize_batch(batch) -> np.ndarray:
    """(x - mean) / (std + 1e-8) using statistics of the whole batch."""
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 3 or batch.shape[0] < 1:
        raise ContractError(f"batch must be (n, H, W), got shape {batch.shape}")
    if not np.all(np.isfinite(batch)):
        raise ContractError("batch contains non-finite values")
    return (batch - batch.mean()) / (batch.std() + 1e-8)


def augment(img, rng: np.random.Generator, max_rotation_deg: float = 10.0, flip_probability: float = 0.5) -> np.ndarray:
    """One random horizontal-flip + small-rotation draw.

    Always consumes exactly two rng draws (flip uniform, then angle uniform in
    [-max, +max]) so augmentation streams stay alignable. Rotation resamples
    bilinearly about the image center and fills uncovered corners with 0.
    Standardized inputs are fine; no [0,1] range is required.
    """
    img = validate_image(img, unit_range=False)
    if max_rotation_deg < 0:
        raise ContractError("max_rotation_deg must be >= 0")
    if not 0.0 <= flip_probability <= 1.0:
        raise ContractError("flip_probability must be in [0, 1]")
    flip_draw = rng.random()
    angle = float(rng.uniform(-max_rotation_deg, max_rotation_deg))
    out = np.fliplr(img).copy() if flip_draw < flip_probability else img.copy()
    if angle != 0.0:
        out = ndimage.rotate(out, angle, reshape=False, order=1, mode="constant", cval=0.0)
    return out
