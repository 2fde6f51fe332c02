"""Dataset schema, synthetic data generation, batching, and import
adapters for MVSA-style corpora.

The on-disk format is JSONL, one record per line. Images are carried as
raw float grids (bit-exact, used by synthetic data), inline base64 PNG,
or file path references.
"""

from __future__ import annotations

import base64
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

SPLITS = ("train", "val", "test")

MVSA_LABELS = {"positive": 0, "neutral": 1, "negative": 2}

TUMEMO_LABELS = ("Angry", "Bored", "Calm", "Fear", "Happy", "Love", "Sad")

# Per-class token inventories for synthetic text. Classes beyond the
# curated sets fall back to generated inventories.
_BANKS_3 = [
    ["love", "great", "happy", "wonderful", "amazing", "joy", "delight", "smile", "sunshine", "best"],
    ["okay", "table", "average", "regular", "routine", "plain", "normal", "usual", "report", "weather"],
    ["sad", "awful", "terrible", "hate", "worst", "cry", "gloomy", "broken", "angry", "hurt"],
]
_BANKS_7 = [
    ["furious", "rage", "annoyed", "shouting", "unfair", "mad", "fuming", "irritated"],
    ["dull", "tedious", "yawn", "monotonous", "idle", "waiting", "boring", "listless"],
    ["calm", "peaceful", "quiet", "serene", "steady", "gentle", "relaxed", "still"],
    ["scared", "afraid", "dread", "terrified", "panic", "nervous", "shaking", "worried"],
    ["happy", "joyful", "smiling", "cheerful", "delighted", "laughing", "sunny", "glad"],
    ["love", "adore", "darling", "heart", "tender", "sweetheart", "romantic", "cherish"],
    ["sad", "tearful", "crying", "lonely", "grieving", "blue", "heartbroken", "mourning"],
]
_FILLERS = ["today", "i", "feel", "this", "is", "it", "was", "so", "very", "really", "the", "day"]


class DatasetError(ValueError):
    """Schema violation in a dataset file or record."""


@dataclass
class ExampleRecord:
    """One image-text-label example."""
    id: str
    text: str
    image: dict  # {"grid": nested lists} | {"png_base64": str} | {"path": str}
    label: int
    split: str

    def validate(self, n_classes: int | None = None):
        if not self.id:
            raise DatasetError("record id must be non-empty")
        if self.split not in SPLITS:
            raise DatasetError(f"record {self.id}: unknown split {self.split!r}")
        if self.label < 0 or (n_classes is not None and self.label >= n_classes):
            bound = n_classes if n_classes is not None else "C"
            raise DatasetError(f"record {self.id}: label {self.label} out of range [0, {bound})")
        if not isinstance(self.image, dict) or \
                not any(k in self.image for k in ("grid", "png_base64", "path")):
            raise DatasetError(f"record {self.id}: image must be a grid, png_base64, or path")

    def to_json(self) -> dict:
        return {"id": self.id, "text": self.text, "image": self.image,
                "label": self.label, "split": self.split}

    @classmethod
    def from_json(cls, d: dict) -> "ExampleRecord":
        try:
            rec = cls(id=str(d["id"]), text=str(d["text"]), image=d["image"],
                      label=int(d["label"]), split=str(d["split"]))
        except KeyError as e:
            raise DatasetError(f"missing field {e.args[0]!r}") from None
        return rec


@dataclass
class SynthSpec:
    """Knobs for deterministic synthetic multimodal sentiment data."""
    n_classes: int = 3
    samples_per_class: int = 200
    image_size: int = 32
    noise: float = 0.1
    text_overlap: float = 0.1
    visual_overlap: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.n_classes < 2 or self.samples_per_class < 1 or self.image_size < 4:
            raise ValueError("all counts must be >= 1 (and n_classes >= 2)")
        if self.noise < 0:
            raise ValueError("noise must be nonnegative")
        for name in ("text_overlap", "visual_overlap"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")

    def to_dict(self) -> dict:
        return {"n_classes": self.n_classes, "samples_per_class": self.samples_per_class,
                "image_size": self.image_size, "noise": self.noise,
                "text_overlap": self.text_overlap, "visual_overlap": self.visual_overlap,
                "seed": self.seed}

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        return cls(**d)


# -- JSONL I/O -------------------------------------------------------------


def load_jsonl(path, n_classes: int | None = None) -> list[ExampleRecord]:
    """Read and validate a JSONL dataset; errors carry the line number.
    An empty file is an empty dataset, not an error."""
    records = []
    seen = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise DatasetError(f"{path}: line {lineno}: malformed JSON: {e.msg}") from None
            try:
                rec = ExampleRecord.from_json(obj)
                rec.validate(n_classes)
            except DatasetError as e:
                raise DatasetError(f"{path}: line {lineno}: {e}") from None
            if rec.id in seen:
                raise DatasetError(
                    f"{path}: line {lineno}: duplicate id {rec.id!r} (first seen on line {seen[rec.id]})")
            seen[rec.id] = lineno
            records.append(rec)
    return records


def save_jsonl(records, path):
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_json()) + "\n")


def split_records(records, split: str) -> list[ExampleRecord]:
    if split not in SPLITS:
        raise DatasetError(f"unknown split {split!r}")
    return [r for r in records if r.split == split]


# -- image decoding --------------------------------------------------------


def decode_image(image: dict, image_size: int, channels: int,
                 base_dir=None) -> np.ndarray:
    """Resolve an image reference to an H x W x C float grid in [0, 1].

    Raw grids must already match the requested geometry (they are used
    for bit-exact synthetic data); PNG/path images are converted and
    resized.
    """
    if "grid" in image:
        arr = np.asarray(image["grid"], dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.shape != (image_size, image_size, channels):
            raise DatasetError(
                f"grid shape {arr.shape} != expected ({image_size}, {image_size}, {channels})")
        return arr
    if "png_base64" in image:
        raw = base64.b64decode(image["png_base64"])
        pil = Image.open(io.BytesIO(raw))
    elif "path" in image:
        p = Path(image["path"])
        if not p.is_absolute() and base_dir is not None:
            p = Path(base_dir) / p
        pil = Image.open(p)
    else:
        raise DatasetError("image reference has no grid/png_base64/path")
    pil = pil.convert("L" if channels == 1 else "RGB")
    if pil.size != (image_size, image_size):
        pil = pil.resize((image_size, image_size), Image.BILINEAR)
    arr = np.asarray(pil, dtype=np.float64) / 255.0
    if arr.ndim == 2:
        arr = arr[:, :, None]
    return arr


def encode_png_base64(grid: np.ndarray) -> str:
    """Inline-PNG encode a float grid in [0, 1] (grayscale or RGB)."""
    arr = np.asarray(grid)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    pil = Image.fromarray(np.clip(arr * 255.0, 0, 255).astype(np.uint8))
    buf = io.BytesIO()
    pil.save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


# -- synthetic generation ----------------------------------------------------


def _token_banks(n_classes: int) -> list[list[str]]:
    if n_classes == 3:
        return _BANKS_3
    if n_classes == 7:
        return [[w.lower() for w in bank] for bank in _BANKS_7]
    return [[f"class{k}tok{j}" for j in range(8)] for k in range(n_classes)]


def _blob_centers(n_classes: int, size: int) -> list[tuple[int, int]]:
    """Distinct blob position per class: cells of a near-square grid
    (quadrants for up to four classes)."""
    g = math.ceil(math.sqrt(n_classes))
    cell = size // g
    centers = []
    for k in range(n_classes):
        r, c = divmod(k, g)
        centers.append((r * cell + cell // 2, c * cell + cell // 2))
    return centers


def _render_image(center: tuple[int, int], size: int, noise: float,
                  rng: np.random.Generator) -> np.ndarray:
    img = np.full((size, size), 0.2, dtype=np.float64)
    half = max(size // 8, 2)
    r0, c0 = center
    img[max(r0 - half, 0):r0 + half, max(c0 - half, 0):c0 + half] = 0.9
    if noise > 0:
        img = img + rng.normal(0.0, noise, size=img.shape)
        img = np.clip(img, 0.0, 1.0)
    return img


def _sample_text(label: int, banks, overlap: float, rng: np.random.Generator) -> str:
    n_content = int(rng.integers(3, 6))
    n_fill = int(rng.integers(2, 5))
    words = []
    for _ in range(n_content):
        k = label
        if overlap > 0 and rng.random() < overlap:
            others = [c for c in range(len(banks)) if c != label]
            k = others[int(rng.integers(0, len(others)))]
        bank = banks[k]
        words.append(bank[int(rng.integers(0, len(bank)))])
    for _ in range(n_fill):
        words.append(_FILLERS[int(rng.integers(0, len(_FILLERS)))])
    perm = rng.permutation(len(words))
    return " ".join(words[i] for i in perm)


def synth_generate(spec: SynthSpec) -> list[ExampleRecord]:
    """Balanced synthetic records, deterministic per seed; per-class
    70/15/15 train/val/test split."""
    rng = np.random.default_rng(spec.seed)
    banks = _token_banks(spec.n_classes)
    centers = _blob_centers(spec.n_classes, spec.image_size)
    records = []
    n = spec.samples_per_class
    n_train = int(n * 0.7)
    n_val = int(n * 0.15)
    for k in range(spec.n_classes):
        for i in range(n):
            text = _sample_text(k, banks, spec.text_overlap, rng)
            center = centers[k]
            if spec.visual_overlap > 0 and rng.random() < spec.visual_overlap:
                others = [c for c in range(spec.n_classes) if c != k]
                center = centers[others[int(rng.integers(0, len(others)))]]
            img = _render_image(center, spec.image_size, spec.noise, rng)
            split = "train" if i < n_train else ("val" if i < n_train + n_val else "test")
            records.append(ExampleRecord(
                id=f"synth-{k}-{i}",
                text=text,
                image={"grid": [[float(v) for v in row] for row in img]},
                label=k,
                split=split,
            ))
    return records


# -- batching ----------------------------------------------------------------


def make_batches(records, batch_size: int, seed: int) -> list[list[ExampleRecord]]:
    """Seeded shuffle into full batches; the final short batch is dropped
    (contrastive terms degrade at tiny sizes)."""
    if batch_size < 2:
        raise DatasetError(f"batch_size must be >= 2, got {batch_size}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(records))
    shuffled = [records[i] for i in order]
    return [shuffled[i:i + batch_size]
            for i in range(0, len(shuffled) - batch_size + 1, batch_size)]


# -- MVSA import --------------------------------------------------------------


@dataclass
class ImportReport:
    kept: int = 0
    dropped_conflict: int = 0
    dropped_missing: int = 0
    seed: int = 0
    label_map: dict = field(default_factory=lambda: dict(MVSA_LABELS))

    def to_dict(self) -> dict:
        return {"kept": self.kept, "dropped_conflict": self.dropped_conflict,
                "dropped_missing": self.dropped_missing, "seed": self.seed,
                "label_map": self.label_map}


def _pair_vote(text_label: str, image_label: str) -> str | None:
    """Resolve one annotator's (text, image) opinion to a single label:
    agreement wins, neutral defers to the polar one, polar conflict is
    an invalid vote."""
    if text_label == image_label:
        return text_label
    if text_label == "neutral":
        return image_label
    if image_label == "neutral":
        return text_label
    return None


def _majority(votes) -> str | None:
    votes = [v for v in votes if v is not None]
    if not votes:
        return None
    counts = {}
    for v in votes:
        counts[v] = counts.get(v, 0) + 1
    best = max(counts.values())
    winners = [lab for lab, c in counts.items() if c == best]
    return winners[0] if len(winners) == 1 else None


def import_mvsa(directory, out_path, seed: int = 0) -> ImportReport:
    """Convert an MVSA-layout directory to a JSONL dataset.

    Expects ``labelResultAll.txt`` (id followed by one or more
    "text,image" annotation pairs per line) plus ``data/{id}.txt`` and
    ``data/{id}.jpg``. Multi-annotator labels resolve by majority vote
    with conflict-drop; records with missing files are dropped and
    counted, not fatal. Emits an 8/1/1 seeded split.
    """
    directory = Path(directory)
    index = directory / "labelResultAll.txt"
    if not index.exists():
        raise DatasetError(f"missing label index: {index}")
    data_dir = directory / "data" if (directory / "data").is_dir() else directory

    report = ImportReport(seed=seed)
    labeled = []
    for line in index.read_text(encoding="utf-8", errors="replace").splitlines():
        fields = line.split()
        if not fields or not fields[0].strip():
            continue
        rec_id, pairs = fields[0], fields[1:]
        if not rec_id.isdigit() and not pairs:
            continue  # header line
        votes = []
        for pair in pairs:
            parts = [p.strip().lower() for p in pair.split(",")]
            if len(parts) == 2 and all(p in MVSA_LABELS for p in parts):
                votes.append(_pair_vote(parts[0], parts[1]))
            elif len(parts) == 1 and parts[0] in MVSA_LABELS:
                votes.append(parts[0])
        if not votes:
            continue  # header or junk line
        label_name = _majority(votes)
        if label_name is None:
            report.dropped_conflict += 1
            continue
        text_path = data_dir / f"{rec_id}.txt"
        image_path = None
        for ext in (".jpg", ".jpeg", ".png"):
            cand = data_dir / f"{rec_id}{ext}"
            if cand.exists():
                image_path = cand
                break
        if not text_path.exists() or image_path is None:
            report.dropped_missing += 1
            continue
        labeled.append((rec_id, text_path, image_path, MVSA_LABELS[label_name]))

    rng = np.random.default_rng(seed)
    order = rng.permutation(len(labeled))
    records = []
    for pos, idx in enumerate(order):
        rec_id, text_path, image_path, label = labeled[idx]
        frac = pos / max(len(labeled), 1)
        split = "train" if frac < 0.8 else ("val" if frac < 0.9 else "test")
        records.append(ExampleRecord(
            id=f"mvsa-{rec_id}",
            text=text_path.read_text(encoding="utf-8", errors="replace").strip(),
            image={"path": str(image_path.resolve())},
            label=label,
            split=split,
        ))
    records.sort(key=lambda r: r.id)
    save_jsonl(records, out_path)
    report.kept = len(records)
    return report
