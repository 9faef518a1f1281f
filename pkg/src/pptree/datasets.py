"""Dataset ingestion with unit transforms, plus synthetic generators.

Input tables are delimited text (comma or whitespace), header optional.
Each angle column carries a unit and an affine transform applied before
radian conversion, so the bundled presets reduce to declaring offsets:
the latitude/longitude style datasets are plain degree-to-radian,
the inclination/declination one shifts the first angle by +90 degrees.
Colatitudes must land in [0, pi]; the periodic angle is wrapped into
[0, 2*pi), identifying 2*pi with 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from pptree.geometry import cartesian_to_polar, wrap_longitude
from pptree.inference import DirectionalData

__all__ = [
    "AngleColumn",
    "DatasetSpec",
    "IngestionError",
    "IngestionReport",
    "dataset_preset",
    "load_dataset",
    "synthetic_projected_normal",
    "synthetic_regression_groups",
    "write_table",
]

_MISSING_TOKENS = {"", "na", "nan", "none", "null", "."}


class IngestionError(ValueError):
    """A dataset cannot be ingested; the message lists offending rows."""


@dataclass(frozen=True)
class AngleColumn:
    """One angle column: 0-based position, unit, affine pre-transform.

    The stored radian value is to_radians((raw + offset) * scale).
    """

    column: int
    unit: str = "radians"
    offset: float = 0.0
    scale: float = 1.0

    def __post_init__(self) -> None:
        if self.unit not in ("degrees", "radians"):
            raise ValueError(f"unknown unit {self.unit!r}")

    def to_radians(self, raw: float) -> float:
        value = (raw + self.offset) * self.scale
        if self.unit == "degrees":
            value = value * math.pi / 180.0
        return value


@dataclass(frozen=True)
class DatasetSpec:
    """File location, column roles, and per-column transforms."""

    path: str
    angles: tuple[AngleColumn, ...]
    covariates: tuple[int, ...] = ()
    delimiter: str = "auto"
    header: str | bool = "auto"

    def __post_init__(self) -> None:
        if not self.angles:
            raise ValueError("at least one angle column is required")
        if self.delimiter not in ("auto", "comma", "whitespace"):
            raise ValueError(f"unknown delimiter mode {self.delimiter!r}")


@dataclass
class IngestionReport:
    """What was read: row counts and rejected-row bookkeeping."""

    n_rows: int
    n_used: int
    missing_rows: list[int] = field(default_factory=list)


_PRESETS = {
    # latitude/longitude in degrees, theta1 = pi*eta1/180, theta2 = 2*pi*eta2/360
    "B15": (AngleColumn(0, "degrees"), AngleColumn(1, "degrees")),
    # dip/dip-direction, same plain degree transform
    "B19": (AngleColumn(0, "degrees"), AngleColumn(1, "degrees")),
    # inclination/declination, theta1 = pi*(eta1+90)/180
    "B23": (AngleColumn(0, "degrees", offset=90.0), AngleColumn(1, "degrees")),
}


def dataset_preset(name: str, path: str, covariates: tuple[int, ...] = ()) -> DatasetSpec:
    """Spec for one of the documented real-data layouts."""
    key = name.upper()
    if key not in _PRESETS:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(_PRESETS)}")
    if key == "B23" and not covariates:
        covariates = (2, 3)
    return DatasetSpec(path=path, angles=_PRESETS[key], covariates=covariates)


def _split_line(line: str, delimiter: str) -> list[str]:
    if delimiter == "comma":
        return [tok.strip() for tok in line.split(",")]
    if delimiter == "whitespace":
        return line.split()
    return [tok.strip() for tok in line.split(",")] if "," in line else line.split()


def _is_number(tok: str) -> bool:
    try:
        float(tok)
    except ValueError:
        return False
    return True


def load_dataset(spec: DatasetSpec) -> tuple[DirectionalData, IngestionReport]:
    """Read, transform, and validate a dataset.

    Rows with missing values are dropped and reported by 1-based line
    number.  Unparseable tokens or out-of-support colatitudes raise
    IngestionError listing the offenders.
    """
    try:
        with open(spec.path, encoding="utf-8") as fh:
            lines = [(i + 1, ln.strip()) for i, ln in enumerate(fh) if ln.strip()]
    except OSError as exc:
        raise IngestionError(f"cannot read dataset {spec.path}: {exc}") from exc
    if not lines:
        raise IngestionError(f"{spec.path}: no data rows")

    first_tokens = _split_line(lines[0][1], spec.delimiter)
    has_header = (
        not all(_is_number(t) or t.lower() in _MISSING_TOKENS for t in first_tokens)
        if spec.header == "auto"
        else bool(spec.header)
    )
    rows = lines[1:] if has_header else lines

    needed = [a.column for a in spec.angles] + list(spec.covariates)
    angles_out: list[list[float]] = []
    covs_out: list[list[float]] = []
    missing_rows: list[int] = []
    malformed: list[int] = []
    out_of_support: list[tuple[int, float]] = []
    for lineno, line in rows:
        tokens = _split_line(line, spec.delimiter)
        if max(needed) >= len(tokens):
            malformed.append(lineno)
            continue
        picked = [tokens[c] for c in needed]
        if any(tok.lower() in _MISSING_TOKENS for tok in picked):
            missing_rows.append(lineno)
            continue
        if not all(_is_number(tok) for tok in picked):
            malformed.append(lineno)
            continue
        values = [float(tok) for tok in picked]
        k_angles = len(spec.angles)
        theta = [spec.angles[i].to_radians(values[i]) for i in range(k_angles)]
        for i in range(k_angles - 1):
            if not (0.0 <= theta[i] <= math.pi):
                out_of_support.append((lineno, theta[i]))
        theta[k_angles - 1] = float(wrap_longitude(theta[k_angles - 1]))
        angles_out.append(theta)
        covs_out.append(values[k_angles:])

    if malformed:
        raise IngestionError(f"{spec.path}: malformed rows at lines {malformed}")
    if out_of_support:
        detail = ", ".join(f"line {ln} -> {v:.4f}" for ln, v in out_of_support[:10])
        raise IngestionError(f"{spec.path}: colatitude outside [0, pi] after transform: {detail}")
    if not angles_out:
        raise IngestionError(f"{spec.path}: no usable rows (missing: {missing_rows})")

    data = DirectionalData(
        angles=np.asarray(angles_out, dtype=float),
        covariates=np.asarray(covs_out, dtype=float) if spec.covariates else None,
    )
    report = IngestionReport(
        n_rows=len(rows), n_used=len(angles_out), missing_rows=missing_rows
    )
    return data, report


def write_table(path: str, columns: dict[str, np.ndarray]) -> None:
    """Write a CSV with shortest-round-trip float formatting."""
    names = list(columns)
    arrays = [np.asarray(columns[n]) for n in names]
    n = arrays[0].shape[0]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(names) + "\n")
        for i in range(n):
            fh.write(",".join(_fmt(a[i]) for a in arrays) + "\n")


def _fmt(v) -> str:
    if isinstance(v, (np.integer, int)):
        return str(int(v))
    return repr(float(v))


def read_table(path: str) -> dict[str, np.ndarray]:
    """Read back a CSV produced by write_table (or any numeric CSV)."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        data = [[] for _ in header]
        for line in fh:
            line = line.strip()
            if not line:
                continue
            for slot, tok in zip(data, line.split(",")):
                slot.append(float(tok))
    return {name: np.asarray(vals) for name, vals in zip(header, data)}


def synthetic_projected_normal(
    n: int, mu: np.ndarray, seed: int = 0
) -> DirectionalData:
    """Angles of X ~ N(mu, I): stand-in data for fit experiments."""
    rng = np.random.default_rng(seed)
    mu = np.asarray(mu, dtype=float)
    X = rng.normal(size=(n, mu.size)) + mu
    angles = np.array([cartesian_to_polar(x).theta for x in X])
    return DirectionalData(angles=angles)


def synthetic_regression_groups(
    n_per_group: tuple[int, ...],
    gamma: np.ndarray,
    seed: int = 0,
) -> DirectionalData:
    """Group-indicator regression data: X = Gamma z + N(0, I) noise.

    Column h of ``gamma`` is the shift of group h; group membership is
    encoded as indicator covariates with no intercept.
    """
    gamma = np.asarray(gamma, dtype=float)
    k, p = gamma.shape
    if len(n_per_group) != p:
        raise ValueError("need one group size per coefficient column")
    rng = np.random.default_rng(seed)
    rows_z = []
    rows_x = []
    for h, n in enumerate(n_per_group):
        z = np.zeros(p)
        z[h] = 1.0
        eps = rng.normal(size=(n, k))
        x = gamma[:, h] + eps
        rows_z.append(np.tile(z, (n, 1)))
        rows_x.append(x)
    X = np.vstack(rows_x)
    Z = np.vstack(rows_z)
    angles = np.array([cartesian_to_polar(x).theta for x in X])
    return DirectionalData(angles=angles, covariates=Z)
