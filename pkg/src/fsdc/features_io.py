"""Feature datasets: in-memory container, binary and CSV codecs, split
manifests, and a synthetic generator with known ground truth.

Binary layout (little-endian throughout)::

    magic   4 bytes  b"FSDC"
    version u32      currently 1
    count   u32      number of records
    dim     u32      feature dimension
    records count times:
        class_id u32
        values   dim * f32

Values are stored as float32.  Quantization to float32 happens once, at
dataset construction, so save followed by load is bit-exact.  The CSV codec
writes one record per line, class id first, floats with %.9g (enough digits
to round-trip float32 exactly).
"""

from __future__ import annotations

import json
import math
import os
import struct
import tempfile
from dataclasses import dataclass
from typing import Final

import numpy as np

from .errors import DataError, DimensionError, FormatError, SpecError
from .rng import PortableRng, derive_key

_MAGIC: Final = b"FSDC"
_VERSION: Final = 1
_HEADER: Final = struct.Struct("<4sIII")

_DOM_GROUP_DIR: Final = 0x47
_DOM_CLASS_OFFSET: Final = 0x4F
_DOM_SAMPLES: Final = 0x53


def atomic_write_bytes(path, data: bytes) -> None:
    """Write ``data`` to ``path`` via a temp file and rename, so readers never
    observe a partial file."""
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".fsdc-tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


class Dataset:
    """Labeled feature vectors, one class id and one float32 row per record.

    All records share one dimensionality and all values are finite; both are
    checked at construction.  ``values`` is float32 (the storage precision);
    use :meth:`features_f64` for computation.
    """

    def __init__(self, class_ids, values) -> None:
        ids = np.asarray(class_ids)
        vals = np.asarray(values)
        if vals.ndim != 2:
            raise DimensionError("values must be a 2-D array (records x features)")
        if ids.ndim != 1 or ids.shape[0] != vals.shape[0]:
            raise DimensionError("class_ids must have one entry per record")
        if vals.shape[0] == 0:
            raise SpecError("dataset must contain at least one record")
        if vals.shape[1] == 0:
            raise DimensionError("feature dimension must be at least 1")
        if ids.dtype.kind not in "iu":
            raise SpecError("class ids must be integers")
        if ids.dtype.kind == "i" and (ids < 0).any():
            raise SpecError("class ids must be non-negative")
        self.class_ids = ids.astype(np.uint32)
        self.values = np.ascontiguousarray(vals, dtype=np.float32)
        if not np.isfinite(self.values).all():
            raise DataError("feature values must be finite")
        self.nonneg = bool((self.values >= 0).all())

    @property
    def count(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def classes(self) -> list[int]:
        return [int(c) for c in np.unique(self.class_ids)]

    def rows_for(self, class_id: int) -> np.ndarray:
        """Row indices of the records belonging to ``class_id``, in file order."""
        return np.flatnonzero(self.class_ids == np.uint32(class_id))

    def features_for(self, class_id: int) -> np.ndarray:
        """Float64 feature matrix of one class."""
        return self.values[self.rows_for(class_id)].astype(np.float64)

    def features_f64(self) -> np.ndarray:
        return self.values.astype(np.float64)


def _record_dtype(dim: int) -> np.dtype:
    return np.dtype([("class_id", "<u4"), ("values", "<f4", (dim,))])


def _encode_binary(ds: Dataset) -> bytes:
    header = _HEADER.pack(_MAGIC, _VERSION, ds.count, ds.dim)
    records = np.empty(ds.count, dtype=_record_dtype(ds.dim))
    records["class_id"] = ds.class_ids
    records["values"] = ds.values
    return header + records.tobytes()


def _decode_binary(data: bytes) -> Dataset:
    if len(data) < _HEADER.size:
        raise FormatError("file too short for a dataset header")
    magic, version, count, dim = _HEADER.unpack_from(data)
    if magic != _MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {_MAGIC!r}")
    if version != _VERSION:
        raise FormatError(f"unsupported dataset version {version}")
    if count == 0:
        raise FormatError("dataset declares zero records")
    if dim == 0:
        raise FormatError("dataset declares zero feature dimension")
    expected = _HEADER.size + count * (4 + 4 * dim)
    if len(data) != expected:
        raise FormatError(f"expected {expected} bytes for {count} records of dim {dim}, "
                          f"got {len(data)}")
    records = np.frombuffer(data, dtype=_record_dtype(dim), count=count,
                            offset=_HEADER.size)
    return Dataset(records["class_id"].copy(), records["values"].copy())


def _encode_csv(ds: Dataset) -> str:
    lines = []
    for cid, row in zip(ds.class_ids, ds.values):
        cells = [str(int(cid))]
        cells.extend(format(float(v), ".9g") for v in row)
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def _decode_csv(text: str) -> Dataset:
    ids: list[int] = []
    rows: list[list[float]] = []
    dim = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        cells = line.split(",")
        if len(cells) < 2:
            raise FormatError(f"line {lineno}: need a class id and at least one value")
        try:
            cid = int(cells[0])
        except ValueError:
            raise FormatError(f"line {lineno}: bad class id {cells[0]!r}") from None
        if cid < 0:
            raise FormatError(f"line {lineno}: negative class id")
        try:
            values = [float(c) for c in cells[1:]]
        except ValueError:
            raise FormatError(f"line {lineno}: bad float value") from None
        if dim is None:
            dim = len(values)
        elif len(values) != dim:
            raise DimensionError(
                f"line {lineno}: expected {dim} values, got {len(values)}")
        ids.append(cid)
        rows.append(values)
    if not rows:
        raise FormatError("no records in CSV input")
    return Dataset(np.array(ids, dtype=np.int64), np.array(rows, dtype=np.float32))


def save_dataset(ds: Dataset, path, format: str = "binary") -> None:
    """Write a dataset to ``path`` atomically in ``binary`` or ``csv`` form."""
    if format == "binary":
        atomic_write_bytes(path, _encode_binary(ds))
    elif format == "csv":
        atomic_write_text(path, _encode_csv(ds))
    else:
        raise SpecError(f"unknown dataset format {format!r}")


def load_dataset(path, format: str = "binary") -> Dataset:
    with open(path, "rb") as fh:
        data = fh.read()
    if format == "binary":
        return _decode_binary(data)
    if format == "csv":
        try:
            text = data.decode("utf-8")
        except UnicodeDecodeError:
            raise FormatError("CSV input is not valid UTF-8") from None
        return _decode_csv(text)
    raise SpecError(f"unknown dataset format {format!r}")


class SplitManifest:
    """Disjoint assignment of class ids to base, validation, and novel roles."""

    def __init__(self, base, val=(), novel=()) -> None:
        self.base_classes = frozenset(int(c) for c in base)
        self.val_classes = frozenset(int(c) for c in val)
        self.novel_classes = frozenset(int(c) for c in novel)
        for part in (self.base_classes, self.val_classes, self.novel_classes):
            if any(c < 0 for c in part):
                raise SpecError("split class ids must be non-negative")
        if (self.base_classes & self.val_classes
                or self.base_classes & self.novel_classes
                or self.val_classes & self.novel_classes):
            raise SpecError("split roles must be disjoint")

    def to_payload(self) -> dict:
        return {
            "base": sorted(self.base_classes),
            "val": sorted(self.val_classes),
            "novel": sorted(self.novel_classes),
        }


def save_split(manifest: SplitManifest, path) -> None:
    atomic_write_text(path, json.dumps(manifest.to_payload(), indent=2,
                                       sort_keys=True) + "\n")


def load_split(path) -> SplitManifest:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"split manifest is not valid JSON: {exc}") from None
    if not isinstance(payload, dict):
        raise FormatError("split manifest must be a JSON object")
    extra = set(payload) - {"base", "val", "novel"}
    if extra:
        raise FormatError(f"unknown split manifest keys: {sorted(extra)}")
    missing = {"base", "val", "novel"} - set(payload)
    if missing:
        raise FormatError(f"split manifest missing keys: {sorted(missing)}")
    for key in ("base", "val", "novel"):
        part = payload[key]
        if not isinstance(part, list) or not all(isinstance(c, int) for c in part):
            raise FormatError(f"split manifest {key!r} must be a list of integers")
    return SplitManifest(payload["base"], payload["val"], payload["novel"])


# ---------------------------------------------------------------------------
# synthetic data with known ground truth
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for a synthetic dataset with controllable skew and class layout.

    Latent samples for class c are ``u_c + sigma * z`` with standard normal
    ``z``; the stored feature is ``|u_c + sigma*z| ** skew_power``.  With
    ``skew_power > 1`` the marginals are right-skewed, and raising them to
    ``1 / skew_power`` undoes the skew, so the best transform exponent is
    known by construction.

    Class means ``u_c`` share a common level and differ by direction vectors
    of equal length that are orthogonal to the all-ones direction.  Classes in
    the same group share most of their direction, so their feature statistics
    stay close.  ``groups`` may list an explicit partition of the class ids;
    by default classes are grouped in consecutive runs of ``group_size``.
    """

    num_classes: int
    dim: int
    samples_per_class: int
    skew_power: float = 2.0
    group_size: int = 5
    groups: tuple[tuple[int, ...], ...] | None = None
    latent_level: float = 0.87
    latent_sigma: float = 0.33
    group_separation: float = 0.8
    within_group_offset: float = 0.41
    seed: int = 0

    def __post_init__(self) -> None:
        if self.num_classes < 1:
            raise SpecError("num_classes must be at least 1")
        if self.dim < 2:
            raise SpecError("synthetic feature dimension must be at least 2")
        if self.samples_per_class < 1:
            raise SpecError("samples_per_class must be at least 1")
        if self.skew_power < 1:
            raise SpecError("skew_power must be at least 1")
        if self.group_size < 1:
            raise SpecError("group_size must be at least 1")
        if self.latent_sigma <= 0:
            raise SpecError("latent_sigma must be positive")
        if self.latent_level < 0 or self.group_separation < 0 \
                or self.within_group_offset < 0:
            raise SpecError("latent geometry parameters must be non-negative")
        if self.groups is not None:
            flat = [c for group in self.groups for c in group]
            if sorted(flat) != list(range(self.num_classes)):
                raise SpecError("groups must partition the class ids exactly")

    def resolved_groups(self) -> tuple[tuple[int, ...], ...]:
        if self.groups is not None:
            return tuple(tuple(int(c) for c in g) for g in self.groups)
        ids = list(range(self.num_classes))
        return tuple(tuple(ids[i:i + self.group_size])
                     for i in range(0, self.num_classes, self.group_size))


@dataclass(frozen=True)
class ClassTruth:
    """Exact latent parameters and feature moments for one synthetic class."""

    class_id: int
    latent_mean: np.ndarray
    latent_sigma: float
    skew_power: float
    feature_mean: np.ndarray
    feature_var: np.ndarray


@dataclass(frozen=True)
class SyntheticTruth:
    spec: SyntheticSpec
    groups: tuple[tuple[int, ...], ...]
    classes: dict[int, ClassTruth]

    def group_of(self, class_id: int) -> int:
        for gi, group in enumerate(self.groups):
            if class_id in group:
                return gi
        raise SpecError(f"class {class_id} not in any group")

    def to_payload(self) -> dict:
        classes = {}
        for cid in sorted(self.classes):
            t = self.classes[cid]
            classes[str(cid)] = {
                "latent_mean": [float(v) for v in t.latent_mean],
                "latent_sigma": t.latent_sigma,
                "skew_power": t.skew_power,
                "feature_mean": [float(v) for v in t.feature_mean],
                "feature_var": [float(v) for v in t.feature_var],
            }
        return {
            "groups": [list(g) for g in self.groups],
            "classes": classes,
        }


def _abs_power_moments(u: np.ndarray, sigma: float, power: float):
    """Exact mean and variance of |u + sigma*z|**power per component.

    Closed form at power 2; Gauss-Hermite quadrature otherwise (the integrand
    is smooth away from a measure-zero kink, and 96 nodes are plenty for the
    moderate powers used here).
    """
    if power == 2:
        mean = u ** 2 + sigma ** 2
        var = 4.0 * u ** 2 * sigma ** 2 + 2.0 * sigma ** 4
        return mean, var
    nodes, weights = np.polynomial.hermite.hermgauss(96)
    y = np.abs(u[:, None] + sigma * math.sqrt(2.0) * nodes[None, :])
    w = weights / math.sqrt(math.pi)
    m1 = (w * y ** power).sum(axis=1)
    m2 = (w * y ** (2.0 * power)).sum(axis=1)
    return m1, m2 - m1 ** 2


def _unit_orthogonal_to_ones(rng: PortableRng, dim: int) -> np.ndarray:
    # direction with zero component along the all-ones vector, so a shared
    # level shift never separates classes
    while True:
        v = rng.normal(dim)
        v = v - v.mean()
        norm = np.linalg.norm(v)
        if norm > 1e-9:
            return v / norm


def generate_synthetic(spec: SyntheticSpec):
    """Build a synthetic dataset, its split manifest, and its ground truth.

    Returns ``(dataset, split, truth)``.  The last class of every group with
    two or more members becomes a novel class; everything else is base.  All
    randomness is derived from ``spec.seed``, so the output is a pure function
    of the spec.
    """
    groups = spec.resolved_groups()
    dim = spec.dim

    group_rng = PortableRng(derive_key(spec.seed, _DOM_GROUP_DIR))
    group_dirs = [_unit_orthogonal_to_ones(group_rng, dim) for _ in groups]

    group_index = {}
    for gi, group in enumerate(groups):
        for cid in group:
            group_index[cid] = gi

    target_norm = math.hypot(spec.group_separation, spec.within_group_offset)
    offset_rng = PortableRng(derive_key(spec.seed, _DOM_CLASS_OFFSET))
    latent_means = {}
    for cid in range(spec.num_classes):
        within = _unit_orthogonal_to_ones(offset_rng, dim)
        delta = (spec.group_separation * group_dirs[group_index[cid]]
                 + spec.within_group_offset * within)
        norm = np.linalg.norm(delta)
        if norm > 1e-12:
            delta = delta * (target_norm / norm)
        latent_means[cid] = spec.latent_level + delta

    n = spec.samples_per_class
    all_ids = np.repeat(np.arange(spec.num_classes, dtype=np.int64), n)
    all_values = np.empty((spec.num_classes * n, dim), dtype=np.float32)
    truth_classes = {}
    for cid in range(spec.num_classes):
        u = latent_means[cid]
        sample_rng = PortableRng(derive_key(spec.seed, _DOM_SAMPLES, cid))
        z = sample_rng.normal(n * dim).reshape(n, dim)
        feats = np.abs(u + spec.latent_sigma * z) ** spec.skew_power
        all_values[cid * n:(cid + 1) * n] = feats.astype(np.float32)
        mean, var = _abs_power_moments(u, spec.latent_sigma, spec.skew_power)
        truth_classes[cid] = ClassTruth(
            class_id=cid,
            latent_mean=u,
            latent_sigma=spec.latent_sigma,
            skew_power=spec.skew_power,
            feature_mean=mean,
            feature_var=var,
        )

    novel = [group[-1] for group in groups if len(group) >= 2]
    base = [c for c in range(spec.num_classes) if c not in set(novel)]
    split = SplitManifest(base=base, val=(), novel=novel)
    truth = SyntheticTruth(spec=spec, groups=groups, classes=truth_classes)
    return Dataset(all_ids, all_values), split, truth
