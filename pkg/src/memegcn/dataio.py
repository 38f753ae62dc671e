"""Feature, label, manifest and word-embedding files, plus synthetic data.

On-disk layout of one split named ``<split>`` inside a data directory::

    <split>.manifest.tsv   sample order and row index into the FMAT files
    <split>.visual.fmat    n x d_v float32 features
    <split>.textual.fmat   n x e float32 features
    <split>.labels.tsv     five binary flags per sample

A data directory may also carry ``embeddings.txt`` with one vector per label
word, used as graph node features.
"""

import hashlib
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Sequence, Tuple

import numpy as np

from .errors import FormatError, LabelError, MissingTokenError, ParameterError


LABEL_NAMES: Tuple[str, ...] = ("misogynous", "shaming", "stereotype", "objectification", "violence")

# Positives per label in the MAMI training set (10000 samples).
MAMI_POSITIVES: Tuple[int, ...] = (5000, 1274, 2810, 2202, 953)
MAMI_TRAIN_SIZE = 10000
MAMI_RATES: Tuple[float, ...] = tuple(c / MAMI_TRAIN_SIZE for c in MAMI_POSITIVES)

FMAT_MAGIC = "FMAT1"
_F32 = np.dtype("<f4")


# ---------------------------------------------------------------------------
# FMAT feature matrices
# ---------------------------------------------------------------------------

def write_feature_matrix(path, matrix) -> None:
    m = np.asarray(matrix)
    if m.ndim != 2:
        raise FormatError(f"FMAT stores 2-D matrices, got shape {m.shape}")
    with open(path, "wb") as fh:
        fh.write(encode_feature_matrix(m))


def encode_feature_matrix(matrix) -> bytes:
    m = np.asarray(matrix)
    header = f"{FMAT_MAGIC} {m.shape[0]} {m.shape[1]}\n".encode("ascii")
    return header + np.ascontiguousarray(m, dtype=_F32).tobytes()


def decode_feature_matrix(buf: bytes, offset: int = 0) -> Tuple[np.ndarray, int]:
    """Decode one FMAT blob starting at ``offset``.

    Returns the float64 matrix and the offset just past its payload, so
    several blobs can be read back to back.
    """
    nl = buf.find(b"\n", offset)
    if nl < 0:
        raise FormatError("missing FMAT header line", offset)
    try:
        parts = buf[offset:nl].decode("ascii").split()
    except UnicodeDecodeError:
        raise FormatError("FMAT header is not ASCII", offset) from None
    if len(parts) != 3 or parts[0] != FMAT_MAGIC:
        raise FormatError(f"bad FMAT magic/header {buf[offset:nl][:40]!r}", offset)
    try:
        rows, cols = int(parts[1]), int(parts[2])
    except ValueError:
        raise FormatError(f"non-integer FMAT dimensions {parts[1:]!r}", offset) from None
    if rows <= 0 or cols <= 0:
        raise FormatError(f"empty matrix ({rows}x{cols}) is not allowed", offset)

    start = nl + 1
    nbytes = rows * cols * _F32.itemsize
    end = start + nbytes
    if end > len(buf):
        raise FormatError(f"truncated payload: expected {nbytes} bytes, found {len(buf) - start}", len(buf))
    data = np.frombuffer(buf, dtype=_F32, count=rows * cols, offset=start)
    bad = np.flatnonzero(~np.isfinite(data))
    if bad.size:
        raise FormatError("non-finite value in FMAT payload", start + int(bad[0]) * _F32.itemsize)
    return data.astype(np.float64).reshape(rows, cols), end


def read_feature_matrix(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    matrix, end = decode_feature_matrix(buf, 0)
    if end != len(buf):
        raise FormatError(f"{len(buf) - end} trailing bytes after FMAT payload", end)
    return matrix


# ---------------------------------------------------------------------------
# Label TSV
# ---------------------------------------------------------------------------

def check_label_consistency(flags: Sequence[int], row=None) -> None:
    """Subtype flags require the misogynous flag."""
    if flags[0] == 0 and any(flags[1:]):
        raise LabelError("subtype flag set while misogynous is 0", row)


def read_labels(path, check_consistency: bool = True) -> List[Tuple[str, List[int]]]:
    path = Path(path)
    lines = path.read_text(encoding="utf-8").split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise LabelError("labels file is empty")

    header = lines[0].rstrip("\r").split("\t")
    missing = [name for name in ("sample_id",) + LABEL_NAMES if name not in header]
    if missing:
        raise LabelError(f"missing column(s) {', '.join(missing)}", 1)
    cols = [header.index(name) for name in LABEL_NAMES]
    id_col = header.index("sample_id")

    out = []
    for lineno, line in enumerate(lines[1:], start=2):
        cells = line.rstrip("\r").split("\t")
        if len(cells) != len(header):
            raise LabelError(f"expected {len(header)} cells, found {len(cells)}", lineno)
        flags = []
        for c in cols:
            cell = cells[c].strip()
            if cell not in ("0", "1"):
                raise LabelError(f"non-binary value {cell!r} in column {header[c]}", lineno)
            flags.append(int(cell))
        if check_consistency:
            check_label_consistency(flags, lineno)
        out.append((cells[id_col], flags))
    return out


def write_labels(path, ids: Sequence[str], labels) -> None:
    labels = np.asarray(labels)
    rows = ["\t".join(("sample_id",) + LABEL_NAMES)]
    for sid, flags in zip(ids, labels):
        rows.append("\t".join([sid] + [str(int(v)) for v in flags]))
    Path(path).write_text("\n".join(rows) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# Manifest
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Manifest:
    sample_ids: Tuple[str, ...]
    rows: Tuple[int, ...]
    d_v: int
    e: int
    regions: int = 1


def read_manifest(path) -> Manifest:
    decl = {}
    ids, rows = [], []
    header_seen = False
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        if line.startswith("#"):
            key, sep, value = line[1:].strip().partition("=")
            if sep:
                decl[key.strip()] = value.strip()
            continue
        cells = line.split("\t")
        if not header_seen:
            if cells[:2] != ["sample_id", "row"]:
                raise FormatError(f"manifest line {lineno}: expected header 'sample_id<TAB>row'")
            header_seen = True
            continue
        if len(cells) != 2:
            raise FormatError(f"manifest line {lineno}: expected 2 cells, found {len(cells)}")
        ids.append(cells[0])
        try:
            rows.append(int(cells[1]))
        except ValueError:
            raise FormatError(f"manifest line {lineno}: bad row index {cells[1]!r}") from None
    try:
        d_v, e = int(decl["d_v"]), int(decl["e"])
        regions = int(decl.get("M", 1))
    except KeyError as exc:
        raise FormatError(f"manifest does not declare {exc.args[0]}") from None
    if len(set(ids)) != len(ids):
        raise FormatError("manifest contains duplicate sample ids")
    return Manifest(tuple(ids), tuple(rows), d_v, e, regions)


def write_manifest(path, manifest: Manifest) -> None:
    lines = [f"# d_v={manifest.d_v}", f"# e={manifest.e}", f"# M={manifest.regions}", "sample_id\trow"]
    lines += [f"{sid}\t{row}" for sid, row in zip(manifest.sample_ids, manifest.rows)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# Dataset
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FeatureRecord:
    sample_id: str
    visual: np.ndarray
    textual: np.ndarray
    labels: Tuple[int, ...]


@dataclass(frozen=True)
class Dataset:
    """Samples stored column-wise as stacked float64 arrays.

    ``visual`` is n x d_v (d_v = M*D when region features are flattened),
    ``textual`` is n x e and ``labels`` is n x 5 in :data:`LABEL_NAMES` order.
    """

    sample_ids: Tuple[str, ...]
    visual: np.ndarray
    textual: np.ndarray
    labels: np.ndarray
    label_names: Tuple[str, ...] = LABEL_NAMES
    regions: int = 1

    def __post_init__(self):
        n = len(self.sample_ids)
        if self.visual.ndim != 2 or self.textual.ndim != 2:
            raise FormatError("visual and textual features must be 2-D")
        if self.visual.shape[0] != n or self.textual.shape[0] != n or self.labels.shape != (n, len(self.label_names)):
            raise FormatError(
                f"inconsistent dataset shapes: {n} ids, visual {self.visual.shape}, "
                f"textual {self.textual.shape}, labels {self.labels.shape}"
            )
        if self.visual.shape[1] < 1 or self.textual.shape[1] < 1:
            raise FormatError("feature dimensions must be at least 1")
        for arr in (self.visual, self.textual, self.labels):
            arr.setflags(write=False)

    def __len__(self):
        return len(self.sample_ids)

    @property
    def d_v(self) -> int:
        return self.visual.shape[1]

    @property
    def e(self) -> int:
        return self.textual.shape[1]

    @property
    def records(self) -> Iterator[FeatureRecord]:
        for i, sid in enumerate(self.sample_ids):
            yield FeatureRecord(sid, self.visual[i], self.textual[i], tuple(int(v) for v in self.labels[i]))

    def id_digest(self) -> str:
        """SHA-256 over the ordered id sequence; pins record order."""
        return hashlib.sha256("\n".join(self.sample_ids).encode("utf-8")).hexdigest()

    def subset(self, index) -> "Dataset":
        index = np.asarray(index)
        return Dataset(
            tuple(self.sample_ids[i] for i in index),
            self.visual[index].copy(),
            self.textual[index].copy(),
            self.labels[index].copy(),
            self.label_names,
            self.regions,
        )

    def split(self, n_first: int) -> Tuple["Dataset", "Dataset"]:
        n = len(self)
        return self.subset(np.arange(n_first)), self.subset(np.arange(n_first, n))


def split_paths(data_dir, split: str) -> Dict[str, Path]:
    d = Path(data_dir)
    return {
        "manifest": d / f"{split}.manifest.tsv",
        "visual": d / f"{split}.visual.fmat",
        "textual": d / f"{split}.textual.fmat",
        "labels": d / f"{split}.labels.tsv",
    }


def load_dataset(manifest_path, visual_path, textual_path, labels_path) -> Dataset:
    manifest = read_manifest(manifest_path)
    visual = read_feature_matrix(visual_path)
    textual = read_feature_matrix(textual_path)
    if visual.shape[1] != manifest.d_v:
        raise FormatError(f"visual features have {visual.shape[1]} columns, manifest declares d_v={manifest.d_v}")
    if textual.shape[1] != manifest.e:
        raise FormatError(f"textual features have {textual.shape[1]} columns, manifest declares e={manifest.e}")

    rows = np.asarray(manifest.rows, dtype=np.int64)
    limit = min(visual.shape[0], textual.shape[0])
    if rows.size and (rows.min() < 0 or rows.max() >= limit):
        raise FormatError(f"manifest row index out of range for feature files with {limit} rows")

    by_id = {sid: flags for sid, flags in read_labels(labels_path)}
    missing = [sid for sid in manifest.sample_ids if sid not in by_id]
    if missing:
        raise LabelError(f"no labels for {len(missing)} sample(s), first: {missing[0]!r}")
    labels = np.array([by_id[sid] for sid in manifest.sample_ids], dtype=np.int64).reshape(-1, len(LABEL_NAMES))

    return Dataset(manifest.sample_ids, visual[rows], textual[rows], labels, LABEL_NAMES, manifest.regions)


def load_split(data_dir, split: str) -> Dataset:
    p = split_paths(data_dir, split)
    for kind, path in p.items():
        if not path.exists():
            raise FileNotFoundError(f"{kind} file not found: {path}")
    return load_dataset(p["manifest"], p["visual"], p["textual"], p["labels"])


def save_split(data_dir, split: str, ds: Dataset) -> None:
    d = Path(data_dir)
    d.mkdir(parents=True, exist_ok=True)
    p = split_paths(d, split)
    write_manifest(p["manifest"], Manifest(ds.sample_ids, tuple(range(len(ds))), ds.d_v, ds.e, ds.regions))
    write_feature_matrix(p["visual"], ds.visual)
    write_feature_matrix(p["textual"], ds.textual)
    write_labels(p["labels"], ds.sample_ids, ds.labels)


# ---------------------------------------------------------------------------
# Word embeddings
# ---------------------------------------------------------------------------

@dataclass
class EmbeddingTable:
    dim: int
    vectors: Dict[str, np.ndarray] = field(default_factory=dict)

    def __contains__(self, token):
        return token.lower() in self.vectors

    def __getitem__(self, token) -> np.ndarray:
        return self.vectors[token.lower()]


def read_embeddings(path, tokens: Sequence[str], fallback: bool = False, dim: int = 300) -> EmbeddingTable:
    """Load vectors for ``tokens`` from a GloVe-style text file.

    Lookups are case-insensitive. A token absent from the file is an error
    unless ``fallback`` is set, in which case it maps to a zero vector and a
    warning is emitted. ``dim`` is only used when the file yields no vector
    to infer the width from.
    """
    wanted = {t.lower() for t in tokens}
    found: Dict[str, np.ndarray] = {}
    width = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split()
            if not parts:
                continue
            n_vals = len(parts) - 1
            if width is None:
                width = n_vals
            elif n_vals != width:
                raise FormatError(f"embedding line {lineno} has {n_vals} values, earlier lines have {width}")
            token = parts[0].lower()
            if token in wanted and token not in found:
                try:
                    found[token] = np.array([float(v) for v in parts[1:]], dtype=np.float64)
                except ValueError:
                    raise FormatError(f"embedding line {lineno}: non-numeric value") from None
    width = dim if width is None else width

    missing = [t for t in tokens if t.lower() not in found]
    if missing:
        if not fallback:
            raise MissingTokenError(missing)
        for t in missing:
            warnings.warn(f"token {t!r} not in embedding file; using a zero vector", stacklevel=2)
            found[t.lower()] = np.zeros(width)
    return EmbeddingTable(width, found)


def write_embeddings(path, table: EmbeddingTable) -> None:
    lines = [" ".join([tok] + [repr(float(v)) for v in vec]) for tok, vec in table.vectors.items()]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def build_node_features(table: EmbeddingTable, label_names: Sequence[str] = LABEL_NAMES) -> np.ndarray:
    missing = [name for name in label_names if name not in table]
    if missing:
        raise MissingTokenError(missing)
    return np.stack([table[name] for name in label_names]).astype(np.float64)


# ---------------------------------------------------------------------------
# Synthetic data
# ---------------------------------------------------------------------------

def _validate_rates(imbalance) -> np.ndarray:
    rates = np.asarray(imbalance, dtype=np.float64)
    if rates.shape != (len(LABEL_NAMES),):
        raise ParameterError(f"imbalance needs {len(LABEL_NAMES)} rates, got {rates.shape}")
    if np.any(rates <= 0) or np.any(rates >= 1):
        raise ParameterError(f"positive rates must lie in (0, 1), got {rates.tolist()}")
    if np.any(rates[1:] > rates[0]):
        raise ParameterError("subtype rates cannot exceed the misogynous rate (subtypes imply misogynous)")
    return rates


def gen_synthetic(
    seed: int,
    n: int,
    d_v: int,
    e: int,
    imbalance=MAMI_RATES,
    separability: float = 3.0,
    text_signal_fraction: float = 0.7,
) -> Dataset:
    """Draw a labelled feature dataset with controllable difficulty.

    Labels: misogynous ~ Bernoulli(r0); each subtype is drawn only for
    misogynous samples with rate r_i / r0, so its marginal rate is r_i.

    Features: every label owns a random direction ``u_i`` whose textual
    coordinates have variance ``text_signal_fraction`` and whose visual
    coordinates have variance ``1 - text_signal_fraction``. A sample is
    ``separability * sum_i y_i u_i`` plus unit Gaussian noise, so
    ``separability`` is the per-coordinate RMS mean shift (in noise standard
    deviations) a positive label adds, before the block split.
    """
    if n < 10:
        raise ParameterError(f"n must be at least 10, got {n}")
    if d_v < 1 or e < 1:
        raise ParameterError("feature dimensions must be at least 1")
    if separability < 0:
        raise ParameterError(f"separability must be >= 0, got {separability}")
    if not 0.0 <= text_signal_fraction <= 1.0:
        raise ParameterError(f"text_signal_fraction must be in [0, 1], got {text_signal_fraction}")
    rates = _validate_rates(imbalance)
    u = len(LABEL_NAMES)

    rng = np.random.default_rng(seed)
    directions = rng.standard_normal((u, d_v + e))
    directions[:, :d_v] *= np.sqrt(1.0 - text_signal_fraction)
    directions[:, d_v:] *= np.sqrt(text_signal_fraction)

    labels = np.zeros((n, u), dtype=np.int64)
    labels[:, 0] = rng.random(n) < rates[0]
    conditional = rates[1:] / rates[0]
    labels[:, 1:] = (rng.random((n, u - 1)) < conditional) & (labels[:, :1] == 1)

    x = separability * (labels @ directions) + rng.standard_normal((n, d_v + e))
    width = len(str(n - 1))
    ids = tuple(f"syn{i:0{width}d}" for i in range(n))
    return Dataset(ids, x[:, :d_v].copy(), x[:, d_v:].copy(), labels)


def synthetic_embeddings(seed: int, dim: int, label_names: Sequence[str] = LABEL_NAMES) -> EmbeddingTable:
    """Stand-in label-word vectors for runs without a GloVe file."""
    rng = np.random.default_rng([seed, 0x6C6162])
    return EmbeddingTable(dim, {name.lower(): rng.standard_normal(dim) for name in label_names})


def quantize(ds: Dataset) -> Dataset:
    """Round features to float32, as a save/load round trip would."""
    return Dataset(
        ds.sample_ids,
        ds.visual.astype(np.float32).astype(np.float64),
        ds.textual.astype(np.float32).astype(np.float64),
        ds.labels.copy(),
        ds.label_names,
        ds.regions,
    )
