"""Dataset manifests, patient-safe splitting, label budgets, and a synthetic
image generator shaped like a small screening corpus.

A manifest is a CSV with header ``image_path,patient_id,birads,view,side,age``.
Splits are patient-disjoint so no patient contributes to both train and test.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import ContractError, DataError
from .preprocess import BinaryLabel, binarize_birads

MANIFEST_COLUMNS = ("image_path", "patient_id", "birads", "view", "side", "age")
VIEWS = ("CC", "MLO")
SIDES = ("Left", "Right")


@dataclass(frozen=True)
class ManifestRecord:
    image_path: str
    patient_id: str
    birads: int
    view: str
    side: str
    age: int | None = None


def load_manifest(path) -> list[ManifestRecord]:
    """Read and validate a manifest CSV; error messages carry line numbers."""
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"cannot read manifest {path}: {exc}") from exc
    if not rows or tuple(rows[0]) != MANIFEST_COLUMNS:
        raise DataError(f"{path}:1: manifest header must be {','.join(MANIFEST_COLUMNS)}")
    records = []
    seen = set()
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(MANIFEST_COLUMNS):
            raise DataError(f"{path}:{lineno}: expected {len(MANIFEST_COLUMNS)} fields, got {len(row)}")
        image_path, patient_id, birads, view, side, age = (f.strip() for f in row)
        if not image_path:
            raise DataError(f"{path}:{lineno}: empty image_path")
        if image_path in seen:
            raise DataError(f"{path}:{lineno}: duplicate image_path {image_path!r}")
        seen.add(image_path)
        if not patient_id:
            raise DataError(f"{path}:{lineno}: empty patient_id")
        try:
            birads_val = int(birads)
        except ValueError:
            raise DataError(f"{path}:{lineno}: birads must be an integer, got {birads!r}") from None
        if not 0 <= birads_val <= 6:
            raise DataError(f"{path}:{lineno}: birads must be in 0..6, got {birads_val}")
        if view not in VIEWS:
            raise DataError(f"{path}:{lineno}: view must be one of {VIEWS}, got {view!r}")
        if side not in SIDES:
            raise DataError(f"{path}:{lineno}: side must be one of {SIDES}, got {side!r}")
        age_val = None
        if age:
            try:
                age_val = int(age)
            except ValueError:
                raise DataError(f"{path}:{lineno}: age must be an integer or empty, got {age!r}") from None
            if age_val <= 0:
                raise DataError(f"{path}:{lineno}: age must be positive")
        records.append(ManifestRecord(image_path, patient_id, birads_val, view, side, age_val))
    if not records:
        raise DataError(f"{path}: manifest has no data rows")
    return records


def save_manifest(records: list[ManifestRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_COLUMNS)
        for r in records:
            writer.writerow([r.image_path, r.patient_id, r.birads, r.view, r.side, "" if r.age is None else r.age])


def binary_subset(records: list[ManifestRecord]) -> list[tuple[ManifestRecord, int]]:
    """Keep rows with a binary outcome; returns (record, label) with positive=1."""
    out = []
    for r in records:
        label = binarize_birads(r.birads)
        if label is not BinaryLabel.EXCLUDED:
            out.append((r, label.value))
    if not out:
        raise DataError("no binary-labelable rows in manifest")
    return out


def derived_seed(*keys: int) -> int:
    """Stable child seed from a tuple of integer keys."""
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1, np.uint64)[0])


@dataclass
class SplitSpec:
    train_paths: list[str]
    test_paths: list[str]
    seed: int
    train_fraction: float


def patient_disjoint_split(labeled_records: list[tuple[ManifestRecord, int]], train_fraction: float = 0.7, seed: int = 0, max_attempts: int = 200) -> SplitSpec:
    """Assign whole patients to train until the image fraction is reached.

    Patients are shuffled, then greedily added to train while its image count
    is below train_fraction * total; the remainder is the test side. Shuffles
    are retried until both sides contain at least one image of each class;
    manifests where that is impossible raise a data error.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ContractError("train_fraction must be in (0, 1)")
    if not labeled_records:
        raise ContractError("no records to split")

    by_patient: dict[str, list[tuple[str, int]]] = {}
    for record, label in labeled_records:
        by_patient.setdefault(record.patient_id, []).append((record.image_path, label))
    patients = list(by_patient)
    if len(patients) < 2:
        raise DataError("patient-disjoint split needs at least two patients")
    for cls in (0, 1):
        owners = sum(1 for images in by_patient.values() if any(lbl == cls for _, lbl in images))
        if owners < 2:
            raise DataError(f"class {cls} appears in {owners} patient(s); both sides cannot contain it")

    total = len(labeled_records)
    target = train_fraction * total
    rng = np.random.default_rng(seed)
    for _ in range(max_attempts):
        order = rng.permutation(len(patients))
        train_paths: list[str] = []
        test_paths: list[str] = []
        train_labels: set[int] = set()
        test_labels: set[int] = set()
        for idx in order:
            images = by_patient[patients[idx]]
            if len(train_paths) < target:
                train_paths.extend(p for p, _ in images)
                train_labels.update(lbl for _, lbl in images)
            else:
                test_paths.extend(p for p, _ in images)
                test_labels.update(lbl for _, lbl in images)
        if train_labels == {0, 1} and test_labels == {0, 1}:
            return SplitSpec(train_paths=train_paths, test_paths=test_paths, seed=seed, train_fraction=train_fraction)
    raise DataError(f"could not find a class-covering patient split in {max_attempts} shuffles")


@dataclass
class LabelBudget:
    labeled_paths: list[str]
    unlabeled_paths: list[str]
    n_positive: int
    n_negative: int


def sample_label_budget(records: list[tuple[ManifestRecord, int]], n_labeled: int, negative_fraction: float = 0.95, seed: int = 0) -> LabelBudget:
    """Draw the small labeled set; everything else becomes the unlabeled pool.

    Positives get max(1, round(n_labeled * (1 - negative_fraction))) slots so
    the labeled set always contains the minority class. Positives are drawn
    first, then negatives, each without replacement in manifest order.
    """
    if n_labeled < 2:
        raise ContractError("n_labeled must be >= 2")
    if not 0.0 < negative_fraction < 1.0:
        raise ContractError("negative_fraction must be in (0, 1)")
    n_positive = max(1, round(n_labeled * (1.0 - negative_fraction)))
    n_negative = n_labeled - n_positive
    if n_negative < 1:
        raise ContractError("label budget leaves no room for negatives")

    positives = [r.image_path for r, lbl in records if lbl == 1]
    negatives = [r.image_path for r, lbl in records if lbl == 0]
    if len(positives) < n_positive:
        raise DataError(f"need {n_positive} positive images but only {len(positives)} available")
    if len(negatives) < n_negative:
        raise DataError(f"need {n_negative} negative images but only {len(negatives)} available")

    rng = np.random.default_rng(seed)
    chosen_pos = [positives[i] for i in rng.choice(len(positives), size=n_positive, replace=False)]
    chosen_neg = [negatives[i] for i in rng.choice(len(negatives), size=n_negative, replace=False)]
    labeled = chosen_pos + chosen_neg
    labeled_set = set(labeled)
    unlabeled = [r.image_path for r, _ in records if r.image_path not in labeled_set]
    return LabelBudget(labeled_paths=labeled, unlabeled_paths=unlabeled, n_positive=n_positive, n_negative=n_negative)


# ---------------------------------------------------------------------------
# synthetic corpus


@dataclass
class SyntheticDataset:
    records: list[ManifestRecord]
    images: dict[str, np.ndarray]
    lobe_masks: dict[str, np.ndarray] = field(default_factory=dict)
    tag_masks: dict[str, np.ndarray] = field(default_factory=dict)

    def image_stack(self, paths: list[str] | None = None) -> np.ndarray:
        paths = [r.image_path for r in self.records] if paths is None else paths
        return np.stack([self.images[p] for p in paths])


def _lobe_image(rng: np.random.Generator, size: int, side: str, positive: bool):
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    cy = size / 2.0 + rng.uniform(-size / 8.0, size / 8.0)
    axis_y = size * rng.uniform(0.30, 0.42)
    axis_x = size * rng.uniform(0.48, 0.62)
    peak = rng.uniform(0.55, 0.80)
    dx = xx if side == "Left" else (size - 1.0) - xx
    ellipse = (dx / axis_x) ** 2 + ((yy - cy) / axis_y) ** 2
    dome = peak * np.maximum(0.0, 1.0 - ellipse) ** 0.7

    # fibrous modulation: smoothed noise, lobe-only, multiplicative
    rough = rng.normal(0.0, 1.0, size=(size, size))
    texture = ndimage.gaussian_filter(rough, sigma=max(1.0, size / 16.0))
    spread = texture.std()
    if spread > 0:
        texture = texture / spread
    img = dome * (1.0 + 0.18 * texture)

    if positive:
        # compact high-intensity mass inside the lobe
        for _ in range(64):
            my = rng.uniform(0.15 * size, 0.85 * size)
            mx = rng.uniform(0.0, size - 1.0)
            mdx = mx if side == "Left" else (size - 1.0) - mx
            if (mdx / axis_x) ** 2 + ((my - cy) / axis_y) ** 2 < 0.55:
                break
        amp = rng.uniform(0.30, 0.45)
        sigma = size * rng.uniform(0.055, 0.085)
        img = img + amp * np.exp(-((yy - my) ** 2 + (xx - mx) ** 2) / (2.0 * sigma * sigma))

    img = img + 0.03 + rng.normal(0.0, 0.015, size=(size, size))
    img = np.clip(img, 0.0, 1.0)
    lobe_mask = dome >= 0.25
    return img, lobe_mask


def _apply_domain_shift(img: np.ndarray, shift: float) -> np.ndarray:
    if shift == 0.0:
        return img
    # nonlinear tone warp plus brightness/contrast offsets; monotone in shift
    warped = img ** (1.0 + 0.9 * shift)
    return np.clip(warped * (1.0 - 0.12 * shift) + 0.10 * shift, 0.0, 1.0)


def _stamp_tag(img: np.ndarray, rng: np.random.Generator, side: str) -> tuple[np.ndarray, np.ndarray]:
    # thick-stroke corner tag, narrower than the rolling-ball span
    size = img.shape[0]
    stroke = max(2, size // 24)
    length = max(6, size // 5)
    margin = max(2, size // 16)
    col0 = margin if side == "Right" else size - margin - length
    row0 = margin if rng.random() < 0.5 else size - margin - length
    tag = np.zeros_like(img, dtype=bool)
    tag[row0 : row0 + stroke, col0 : col0 + length] = True
    tag[row0 : row0 + length, col0 : col0 + stroke] = True
    img = img.copy()
    img[tag] = 0.95
    return img, tag


def generate_synthetic(n_patients: int, images_per_patient: int = 3, positive_rate: float = 0.05, domain_shift: float = 0.0, tag_artifacts: bool = False, size: int = 24, seed: int = 0) -> SyntheticDataset:
    """Build a small labeled corpus of lobe images with optional shift and tags.

    Class is assigned per patient: round(n_patients * positive_rate) patients
    (at least one when the rate is nonzero) carry a mass in every image and
    screening categories 4/5; the rest are 1/2. The domain shift re-tones
    identical scenes, so two calls differing only in ``domain_shift`` depict
    the same patients.
    """
    if n_patients < 1 or images_per_patient < 1:
        raise ContractError("need at least one patient and one image per patient")
    if not 0.0 <= positive_rate < 1.0:
        raise ContractError("positive_rate must be in [0, 1)")
    if size < 16:
        raise ContractError("size must be >= 16")
    rng = np.random.default_rng(seed)
    n_pos = max(1, round(n_patients * positive_rate)) if positive_rate > 0 else 0
    if n_pos >= n_patients and n_pos > 0:
        raise ContractError("positive_rate leaves no negative patients")
    positive_patients = set(rng.choice(n_patients, size=n_pos, replace=False).tolist()) if n_pos else set()

    records = []
    images: dict[str, np.ndarray] = {}
    lobes: dict[str, np.ndarray] = {}
    tags: dict[str, np.ndarray] = {}
    for p in range(n_patients):
        positive = p in positive_patients
        patient_id = f"syn{seed:04d}p{p:04d}"
        age = int(rng.integers(40, 90))
        for i in range(images_per_patient):
            view = VIEWS[int(rng.integers(0, 2))]
            side = SIDES[int(rng.integers(0, 2))]
            birads = int(rng.choice([4, 5])) if positive else int(rng.choice([1, 2]))
            img, lobe_mask = _lobe_image(rng, size, side, positive)
            img = _apply_domain_shift(img, domain_shift)
            path = f"{patient_id}_i{i}.pgm"
            if tag_artifacts:
                img, tag_mask = _stamp_tag(img, rng, side)
                tags[path] = tag_mask
            records.append(ManifestRecord(path, patient_id, birads, view, side, age))
            images[path] = img
            lobes[path] = lobe_mask
    return SyntheticDataset(records=records, images=images, lobe_masks=lobes, tag_masks=tags)
