"""Dataset manifest: domain types, loading, validation, and serialization.

On-disk format (``mtac-manifest-v1``): UTF-8, line-delimited, one sample per
line. Header line::

    #schema=mtac-manifest-v1 C=<int> M=<int> D=<int> [mode=feature|image]

Record lines are tab-separated: id, split, emotion index, valence, arousal,
AU bits (M chars of 0/1, or M dashes when absent), then the D feature values
separated by whitespace (or a single image path in image mode). Absent VA is
encoded as ``nan`` in both columns. Lines starting with ``#`` after the
header are comments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

SCHEMA_NAME = "mtac-manifest-v1"

SEVEN_EMOTIONS = ("anger", "disgust", "fear", "happiness", "neutral", "sadness", "surprise")

PROVENANCE_ORIGINAL = "original"
PROVENANCE_INJECTED = "injected-flip"
PROVENANCE_RELABELED = "relabeled"


class ManifestError(ValueError):
    """Malformed manifest file; message carries the offending line number."""


@dataclass(frozen=True)
class EmotionTaxonomy:
    class_names: tuple[str, ...]

    def __post_init__(self):
        if len(self.class_names) < 2:
            raise ValueError(f"taxonomy needs at least 2 classes, got {len(self.class_names)}")
        if len(set(self.class_names)) != len(self.class_names):
            raise ValueError("taxonomy class names must be unique")

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    @classmethod
    def default(cls, num_classes: int) -> "EmotionTaxonomy":
        if num_classes == 7:
            return cls(SEVEN_EMOTIONS)
        return cls(tuple(f"class_{i}" for i in range(num_classes)))


@dataclass
class Sample:
    id: str
    split: str
    emotion: int
    valence: float
    arousal: float
    au: Optional[np.ndarray]  # length-M 0/1 int array, None when absent
    features: Optional[np.ndarray] = None  # length-D float array (feature mode)
    image_path: Optional[str] = None  # image mode
    label_provenance: str = PROVENANCE_ORIGINAL
    flip_truth: Optional[int] = None  # original class, present only after synthetic flips

    @property
    def va_present(self) -> bool:
        return not (math.isnan(self.valence) and math.isnan(self.arousal))

    @property
    def au_present(self) -> bool:
        return self.au is not None


@dataclass
class DatasetManifest:
    records: list[Sample]
    taxonomy: EmotionTaxonomy
    au_count: int
    feature_dim: int
    mode: str = "feature"  # feature | image

    def split_records(self, split: str) -> list[Sample]:
        return [r for r in self.records if r.split == split]

    @property
    def train_records(self) -> list[Sample]:
        return self.split_records("train")

    @property
    def test_records(self) -> list[Sample]:
        return self.split_records("test")

    def _presence_flag(self, split: str, attr: str) -> bool:
        recs = self.split_records(split)
        if not recs:
            return False
        return all(getattr(r, attr) for r in recs)

    @property
    def va_available(self) -> bool:
        """True when every train record carries VA labels."""
        return self._presence_flag("train", "va_present")

    @property
    def au_available(self) -> bool:
        return self._presence_flag("train", "au_present")

    def class_counts(self, split: str = "train") -> np.ndarray:
        counts = np.zeros(self.taxonomy.num_classes, dtype=np.int64)
        for r in self.split_records(split):
            counts[r.emotion] += 1
        return counts

    def au_counts(self, split: str = "train") -> np.ndarray:
        counts = np.zeros(self.au_count, dtype=np.int64)
        for r in self.split_records(split):
            if r.au is not None:
                counts += r.au
        return counts


def _parse_header(line: str) -> dict:
    if not line.startswith(f"#schema={SCHEMA_NAME}"):
        raise ManifestError(f"line 1: expected header '#schema={SCHEMA_NAME} ...', got {line[:60]!r}")
    fields = {}
    for tok in line[1:].split()[1:]:
        if "=" not in tok:
            raise ManifestError(f"line 1: bad header token {tok!r}")
        k, v = tok.split("=", 1)
        fields[k] = v
    for key in ("C", "M", "D"):
        if key not in fields:
            raise ManifestError(f"line 1: header missing {key}=")
        try:
            fields[key] = int(fields[key])
        except ValueError:
            raise ManifestError(f"line 1: header {key} must be an integer") from None
    mode = fields.get("mode", "feature")
    if mode not in ("feature", "image"):
        raise ManifestError(f"line 1: unknown mode {mode!r}")
    fields["mode"] = mode
    return fields


def _parse_float(tok: str, lineno: int, what: str) -> float:
    try:
        return float(tok)
    except ValueError:
        raise ManifestError(f"line {lineno}: cannot parse {what} from {tok!r}") from None


def _parse_record(line: str, lineno: int, C: int, M: int, D: int, mode: str) -> Sample:
    parts = line.split("\t")
    if len(parts) < 7:
        raise ManifestError(f"line {lineno}: expected at least 7 tab-separated fields, got {len(parts)}")
    sid, split, emo_tok, val_tok, aro_tok, au_tok = parts[:6]
    if not sid:
        raise ManifestError(f"line {lineno}: empty id")
    if split not in ("train", "test"):
        raise ManifestError(f"line {lineno}: split must be train or test, got {split!r}")
    try:
        emotion = int(emo_tok)
    except ValueError:
        raise ManifestError(f"line {lineno}: emotion index {emo_tok!r} is not an integer") from None
    if not (0 <= emotion < C):
        raise ManifestError(f"line {lineno}: emotion index {emotion} out of range [0, {C})")

    valence = _parse_float(val_tok, lineno, "valence")
    arousal = _parse_float(aro_tok, lineno, "arousal")
    v_nan, a_nan = math.isnan(valence), math.isnan(arousal)
    if v_nan != a_nan:
        raise ManifestError(f"line {lineno}: valence/arousal must be both present or both nan")
    if not v_nan:
        if not (-1.0 <= valence <= 1.0) or not (-1.0 <= arousal <= 1.0):
            raise ManifestError(f"line {lineno}: VA ({valence}, {arousal}) outside [-1, 1]")

    if len(au_tok) != M:
        raise ManifestError(f"line {lineno}: AU field must have {M} characters, got {len(au_tok)}")
    if au_tok == "-" * M:
        au = None
    elif set(au_tok) <= {"0", "1"}:
        au = np.array([int(c) for c in au_tok], dtype=np.int64)
    else:
        raise ManifestError(f"line {lineno}: AU field must be 0/1 bits or all dashes, got {au_tok!r}")

    if mode == "image":
        path = "\t".join(parts[6:]).strip()
        if not path:
            raise ManifestError(f"line {lineno}: empty image path")
        return Sample(sid, split, emotion, valence, arousal, au, image_path=path)

    feat_toks = " ".join(parts[6:]).split()
    if len(feat_toks) != D:
        raise ManifestError(f"line {lineno}: expected {D} feature values, got {len(feat_toks)}")
    features = np.array([_parse_float(t, lineno, "feature") for t in feat_toks], dtype=np.float64)
    if not np.all(np.isfinite(features)):
        raise ManifestError(f"line {lineno}: non-finite feature value")
    return Sample(sid, split, emotion, valence, arousal, au, features=features)


def load_manifest(path: str | Path) -> DatasetManifest:
    """Load and validate a manifest file.

    Raises ManifestError naming the line for malformed lines, out-of-range
    labels, or schema problems.
    """
    path = Path(path)
    if not path.exists():
        raise ManifestError(f"manifest file not found: {path}")
    text = path.read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines:
        raise ManifestError("empty manifest file (missing header)")
    header = _parse_header(lines[0])
    C, M, D, mode = header["C"], header["M"], header["D"], header["mode"]

    records = []
    seen_ids = set()
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip() or line.startswith("#"):
            continue
        rec = _parse_record(line, lineno, C, M, D, mode)
        if rec.id in seen_ids:
            raise ManifestError(f"line {lineno}: duplicate id {rec.id!r}")
        seen_ids.add(rec.id)
        records.append(rec)

    manifest = DatasetManifest(
        records=records,
        taxonomy=EmotionTaxonomy.default(C),
        au_count=M,
        feature_dim=D,
        mode=mode,
    )
    # presence must be uniform within the train split so branch availability is unambiguous
    for attr, name in (("va_present", "VA"), ("au_present", "AU")):
        flags = {getattr(r, attr) for r in manifest.train_records}
        if len(flags) > 1:
            raise ManifestError(f"train split mixes present and absent {name} labels")
    return manifest


def _fmt(x: float) -> str:
    if math.isnan(x):
        return "nan"
    return repr(float(x))


def manifest_lines(manifest: DatasetManifest, extra_comments: Iterable[str] = ()) -> list[str]:
    lines = [
        f"#schema={SCHEMA_NAME} C={manifest.taxonomy.num_classes} "
        f"M={manifest.au_count} D={manifest.feature_dim} mode={manifest.mode}"
    ]
    for comment in extra_comments:
        lines.append(f"#{comment}")
    for r in manifest.records:
        au_tok = "-" * manifest.au_count if r.au is None else "".join(str(int(b)) for b in r.au)
        if manifest.mode == "image":
            payload = r.image_path
        else:
            payload = " ".join(_fmt(v) for v in r.features)
        lines.append("\t".join([r.id, r.split, str(r.emotion), _fmt(r.valence), _fmt(r.arousal), au_tok, payload]))
    return lines


def write_manifest(manifest: DatasetManifest, path: str | Path, extra_comments: Iterable[str] = ()) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text("\n".join(manifest_lines(manifest, extra_comments)) + "\n", encoding="utf-8")
