"""Synthetic multimodal classification data and controlled quality degradation.

Each modality draws class-conditional Gaussians whose means sit on a scaled
pairwise-equidistant simplex, so per-modality difficulty is a single knob
(the separation). A corruption fraction replaces exactly one modality per
selected sample with class-free noise, which is how heterogeneous sample
quality is produced. Separate noise injectors (gaussian / salt-and-pepper /
blank) degrade existing datasets, by default only at evaluation time.
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import csvio, rng
from .diffcore import Matrix
from .errors import ConfigError, FormatError

NOISE_KINDS = ("gaussian", "salt_pepper", "blank")


def _as_float_tuple(value, n: int, name: str) -> tuple[float, ...]:
    if np.isscalar(value):
        return (float(value),) * n
    out = tuple(float(v) for v in value)
    if len(out) != n:
        raise ConfigError(f"{name} must have one entry per modality ({n}), got {len(out)}")
    return out


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for one synthetic multimodal dataset.

    separations and within_std may be given as scalars, which apply to all
    modalities. corrupt_fraction selects that fraction of samples (rounded)
    and replaces one modality per selected sample, round-robin over
    modalities, with i.i.d. standard-normal noise that carries no class
    information.
    """

    num_modalities: int
    num_classes: int
    num_samples: int
    dims: tuple[int, ...]
    separations: tuple[float, ...] | float = 4.0
    within_std: tuple[float, ...] | float = 0.7
    corrupt_fraction: float = 0.0
    seed: int = 0

    def __post_init__(self):
        m, k, n = self.num_modalities, self.num_classes, self.num_samples
        if m < 1:
            raise ConfigError(f"need at least one modality, got {m}")
        if k < 2:
            raise ConfigError(f"need at least two classes, got {k}")
        if n < 1:
            raise ConfigError(f"need at least one sample, got {n}")
        dims = tuple(int(d) for d in self.dims)
        if len(dims) != m:
            raise ConfigError(f"dims must have one entry per modality ({m}), got {len(dims)}")
        for d in dims:
            if d < k:
                raise ConfigError(f"each modality dim must be >= num_classes ({k}), got {d}")
        object.__setattr__(self, "dims", dims)
        seps = _as_float_tuple(self.separations, m, "separations")
        stds = _as_float_tuple(self.within_std, m, "within_std")
        if any(s < 0 for s in seps):
            raise ConfigError(f"separations must be >= 0, got {seps}")
        if any(s <= 0 for s in stds):
            raise ConfigError(f"within_std must be > 0, got {stds}")
        object.__setattr__(self, "separations", seps)
        object.__setattr__(self, "within_std", stds)
        if not 0.0 <= self.corrupt_fraction <= 1.0:
            raise ConfigError(f"corrupt_fraction must lie in [0, 1], got {self.corrupt_fraction}")

    def to_dict(self) -> dict:
        return {
            "num_modalities": self.num_modalities,
            "num_classes": self.num_classes,
            "num_samples": self.num_samples,
            "dims": list(self.dims),
            "separations": list(self.separations),
            "within_std": list(self.within_std),
            "corrupt_fraction": self.corrupt_fraction,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticSpec":
        try:
            return cls(
                num_modalities=int(d["num_modalities"]),
                num_classes=int(d["num_classes"]),
                num_samples=int(d["num_samples"]),
                dims=tuple(d["dims"]),
                separations=d.get("separations", 4.0),
                within_std=d.get("within_std", 0.7),
                corrupt_fraction=float(d.get("corrupt_fraction", 0.0)),
                seed=int(d.get("seed", 0)),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError(f"bad dataset spec: {e}") from e


@dataclass(frozen=True)
class NoiseSpec:
    """One noise injection.

    kind:
      gaussian    -- add N(0, variance) i.i.d. to targeted entries
      salt_pepper -- with probability `rate` per entry, set it to the
                     per-modality min or max of the incoming dataset
                     (fair coin between the two)
      blank       -- zero out targeted rows entirely
    Only `sample_fraction` of the rows (rounded, chosen by seed; 1.0 means
    every row, chosen deterministically) of the targeted modalities are
    touched.
    """

    kind: str
    variance: float = 0.0
    rate: float = 0.0
    target_modalities: tuple[int, ...] = (0,)
    sample_fraction: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ConfigError(f"unknown noise kind {self.kind!r}, expected one of {NOISE_KINDS}")
        if self.variance < 0:
            raise ConfigError(f"variance must be >= 0, got {self.variance}")
        if not 0.0 <= self.rate <= 1.0:
            raise ConfigError(f"rate must lie in [0, 1], got {self.rate}")
        if not 0.0 <= self.sample_fraction <= 1.0:
            raise ConfigError(f"sample_fraction must lie in [0, 1], got {self.sample_fraction}")
        targets = tuple(int(t) for t in self.target_modalities)
        if len(set(targets)) != len(targets) or not targets:
            raise ConfigError(f"target_modalities must be non-empty and unique, got {targets}")
        object.__setattr__(self, "target_modalities", targets)

    @property
    def main_param(self) -> float:
        """The knob swept in robustness experiments, by kind."""
        if self.kind == "gaussian":
            return self.variance
        if self.kind == "salt_pepper":
            return self.rate
        return self.sample_fraction

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "variance": self.variance,
            "rate": self.rate,
            "target_modalities": list(self.target_modalities),
            "sample_fraction": self.sample_fraction,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseSpec":
        try:
            return cls(
                kind=str(d["kind"]),
                variance=float(d.get("variance", 0.0)),
                rate=float(d.get("rate", 0.0)),
                target_modalities=tuple(d.get("target_modalities", (0,))),
                sample_fraction=float(d.get("sample_fraction", 1.0)),
                seed=int(d.get("seed", 0)),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError(f"bad noise spec: {e}") from e


@dataclass(frozen=True)
class DatasetMeta:
    num_modalities: int
    num_samples: int
    num_classes: int
    dims: tuple[int, ...]
    seed: int
    provenance: str


@dataclass(frozen=True)
class MultimodalDataset:
    """Aligned per-modality feature matrices plus integer labels."""

    modalities: tuple[Matrix, ...]
    labels: np.ndarray
    meta: DatasetMeta

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        labels.flags.writeable = False
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "modalities", tuple(self.modalities))
        n = self.meta.num_samples
        if labels.shape != (n,):
            raise FormatError(f"labels must have shape ({n},), got {labels.shape}")
        if len(self.modalities) != self.meta.num_modalities:
            raise FormatError("modality count disagrees with metadata")
        for m, (mat, d) in enumerate(zip(self.modalities, self.meta.dims)):
            if mat.shape != (n, d):
                raise FormatError(f"modality {m} must have shape ({n}, {d}), got {mat.shape}")
        if labels.size and (labels.min() < 0 or labels.max() >= self.meta.num_classes):
            raise FormatError("labels outside [0, num_classes)")

    @property
    def num_samples(self) -> int:
        return self.meta.num_samples

    @property
    def num_modalities(self) -> int:
        return self.meta.num_modalities

    @property
    def num_classes(self) -> int:
        return self.meta.num_classes

    def arrays(self) -> list[np.ndarray]:
        return [m.array for m in self.modalities]


def _simplex_means(num_classes: int, dim: int, separation: float) -> np.ndarray:
    """num_classes points in R^dim, pairwise distance exactly `separation`, centered."""
    means = np.zeros((num_classes, dim))
    scale = separation / np.sqrt(2.0)
    for k in range(num_classes):
        means[k, k] = scale
    return means - means.mean(axis=0, keepdims=True)


def generate(spec: SyntheticSpec) -> MultimodalDataset:
    """Draw a dataset from the spec. Same spec -> bit-identical dataset."""
    m, k, n = spec.num_modalities, spec.num_classes, spec.num_samples
    labels = rng.stream("labels", spec.seed).integers(0, k, size=n)
    mats = []
    for j in range(m):
        means = _simplex_means(k, spec.dims[j], spec.separations[j])
        noise = rng.stream(f"features/modality{j}", spec.seed).standard_normal((n, spec.dims[j]))
        mats.append(means[labels] + spec.within_std[j] * noise)

    corrupt_count = int(round(spec.corrupt_fraction * n))
    if corrupt_count:
        chosen = rng.stream("corruption/rows", spec.seed).choice(n, size=corrupt_count, replace=False)
        chosen.sort()
        noise_stream = rng.stream("corruption/noise", spec.seed)
        for j, i in enumerate(chosen):
            target = j % m
            mats[target][i] = noise_stream.standard_normal(spec.dims[target])

    meta = DatasetMeta(
        num_modalities=m,
        num_samples=n,
        num_classes=k,
        dims=spec.dims,
        seed=spec.seed,
        provenance=(
            f"synthetic(M={m},K={k},N={n},seps={list(spec.separations)},"
            f"std={list(spec.within_std)},corrupt={spec.corrupt_fraction},seed={spec.seed})"
        ),
    )
    return MultimodalDataset(tuple(Matrix(x) for x in mats), labels, meta)


def _selected_rows(spec: NoiseSpec, n: int) -> np.ndarray:
    if spec.sample_fraction >= 1.0:
        return np.arange(n)
    count = int(round(spec.sample_fraction * n))
    if count == 0:
        return np.arange(0)
    chosen = rng.stream("noise/rows", spec.seed).choice(n, size=count, replace=False)
    chosen.sort()
    return chosen


def inject_noise(ds: MultimodalDataset, spec: NoiseSpec) -> MultimodalDataset:
    """Return a degraded copy of the dataset; the input is left untouched."""
    for t in spec.target_modalities:
        if not 0 <= t < ds.num_modalities:
            raise ConfigError(f"target modality {t} out of range for {ds.num_modalities} modalities")
    n = ds.num_samples
    rows = _selected_rows(spec, n)
    mats = [np.array(m.array) for m in ds.modalities]

    if rows.size:
        if spec.kind == "gaussian":
            stream = rng.stream("noise/gaussian", spec.seed)
            sd = float(np.sqrt(spec.variance))
            for t in spec.target_modalities:
                mats[t][rows] += stream.normal(0.0, sd, size=(rows.size, ds.meta.dims[t]))
        elif spec.kind == "salt_pepper":
            stream = rng.stream("noise/salt_pepper", spec.seed)
            for t in spec.target_modalities:
                lo, hi = mats[t].min(), mats[t].max()  # taken from the incoming data
                shape = (rows.size, ds.meta.dims[t])
                hit = stream.random(shape) < spec.rate
                salt = stream.random(shape) < 0.5
                block = mats[t][rows]
                block[hit] = np.where(salt, hi, lo)[hit]
                mats[t][rows] = block
        else:  # blank
            for t in spec.target_modalities:
                mats[t][rows] = 0.0

    meta = dataclasses.replace(
        ds.meta,
        provenance=ds.meta.provenance
        + f"+{spec.kind}(param={spec.main_param},targets={list(spec.target_modalities)},"
        f"fraction={spec.sample_fraction},seed={spec.seed})",
    )
    return MultimodalDataset(tuple(Matrix(x) for x in mats), ds.labels, meta)


def split_dataset(ds: MultimodalDataset, train_fraction: float = 0.8,
                  seed: int = 0) -> tuple[MultimodalDataset, MultimodalDataset]:
    """Deterministic shuffled split into (train, eval)."""
    if not 0.0 < train_fraction < 1.0:
        raise ConfigError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    n = ds.num_samples
    perm = rng.stream("split", seed).permutation(n)
    cut = int(round(train_fraction * n))
    if cut == 0 or cut == n:
        raise ConfigError(f"split of {n} samples at {train_fraction} leaves an empty part")
    parts = []
    for name, idx in (("train", perm[:cut]), ("eval", perm[cut:])):
        meta = dataclasses.replace(
            ds.meta,
            num_samples=idx.size,
            provenance=ds.meta.provenance + f"+split({name},frac={train_fraction},seed={seed})",
        )
        parts.append(MultimodalDataset(
            tuple(Matrix(m.array[idx]) for m in ds.modalities), ds.labels[idx], meta))
    return parts[0], parts[1]


# ---------------------------------------------------------------------------
# on-disk format: manifest.json + modality_<m>.csv + labels.csv


def save(ds: MultimodalDataset, directory: str | Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {
        "version": 1,
        "num_modalities": ds.meta.num_modalities,
        "num_samples": ds.meta.num_samples,
        "num_classes": ds.meta.num_classes,
        "dims": list(ds.meta.dims),
        "seed": ds.meta.seed,
        "provenance": ds.meta.provenance,
    }
    csvio.write_json(directory / "manifest.json", manifest)
    for m, mat in enumerate(ds.modalities):
        csvio.write_float_matrix(directory / f"modality_{m}.csv", mat.array)
    csvio.write_int_column(directory / "labels.csv", ds.labels)


def load(directory: str | Path) -> MultimodalDataset:
    directory = Path(directory)
    manifest = csvio.read_json(directory / "manifest.json")
    if manifest.get("version") != 1:
        raise FormatError(f"unsupported dataset version {manifest.get('version')!r}")
    try:
        meta = DatasetMeta(
            num_modalities=int(manifest["num_modalities"]),
            num_samples=int(manifest["num_samples"]),
            num_classes=int(manifest["num_classes"]),
            dims=tuple(int(d) for d in manifest["dims"]),
            seed=int(manifest["seed"]),
            provenance=str(manifest["provenance"]),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"manifest missing or malformed field: {e}") from e
    if len(meta.dims) != meta.num_modalities:
        raise FormatError("manifest dims length disagrees with num_modalities")
    mats = tuple(
        Matrix(csvio.read_float_matrix(directory / f"modality_{m}.csv",
                                       expected_shape=(meta.num_samples, meta.dims[m])))
        for m in range(meta.num_modalities)
    )
    labels = csvio.read_int_column(directory / "labels.csv", expected_len=meta.num_samples)
    return MultimodalDataset(mats, labels, meta)


def checksum(directory: str | Path) -> str:
    """sha256 over the dataset directory's files, sorted by name."""
    directory = Path(directory)
    h = hashlib.sha256()
    for path in sorted(directory.iterdir()):
        if path.is_file():
            h.update(path.name.encode("utf-8"))
            h.update(b"\x00")
            h.update(path.read_bytes())
    return h.hexdigest()
