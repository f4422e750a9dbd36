"""Scaling data points and their CSV representation."""

from __future__ import annotations

import csv
import hashlib
import io
from dataclasses import dataclass, field

CSV_HEADER = ("class", "dim", "E_re", "E_im", "W", "L", "lambda", "sigma_lambda", "slices", "converged")


@dataclass(frozen=True)
class DataPoint:
    """Normalized localization length ``lam`` at disorder ``W`` and width ``L``."""

    W: float
    L: int
    lam: float
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if self.L < 2:
            raise ValueError("L must be at least 2")
        if not self.lam > 0:
            raise ValueError("lambda must be positive")


@dataclass(frozen=True)
class ScanRow:
    W: float
    L: int
    lam: float
    sigma: float
    slices: int
    converged: bool


@dataclass
class ScalingDataset:
    """Rows of a disorder scan together with the class, dimension and energy."""

    cls: str
    dim: int
    energy: complex
    rows: list = field(default_factory=list)

    def __len__(self):
        return len(self.rows)

    def sort(self) -> "ScalingDataset":
        self.rows.sort(key=lambda r: (r.L, r.W))
        return self

    def points(self, include_unconverged: bool = False) -> list:
        """Rows usable for fitting, as :class:`DataPoint`."""
        out = []
        for r in self.rows:
            if not include_unconverged and not r.converged:
                continue
            if r.lam > 0 and r.sigma > 0 and r.L >= 2:
                out.append(DataPoint(r.W, r.L, r.lam, r.sigma))
        return out

    def sizes(self) -> list:
        return sorted({r.L for r in self.rows})

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        e = complex(self.energy)
        for r in self.rows:
            writer.writerow([self.cls, self.dim, repr(e.real), repr(e.imag), repr(float(r.W)), r.L,
                             repr(float(r.lam)), repr(float(r.sigma)), r.slices, int(bool(r.converged))])
        return buf.getvalue()

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.to_csv_text())

    @classmethod
    def from_csv_text(cls, text: str) -> "ScalingDataset":
        reader = csv.reader(io.StringIO(text))
        header = next(reader, None)
        if header is None or tuple(header) != CSV_HEADER:
            raise ValueError(f"unexpected CSV header {header}")
        rows = []
        meta = None
        for line in reader:
            if not line:
                continue
            name, dim, e_re, e_im, W, L, lam, sigma, slices, conv = line
            key = (name, int(dim), complex(float(e_re), float(e_im)))
            if meta is None:
                meta = key
            elif key != meta:
                raise ValueError("CSV mixes classes, dimensions or energies")
            rows.append(ScanRow(float(W), int(L), float(lam), float(sigma), int(slices), conv == "1"))
        if meta is None:
            raise ValueError("CSV contains no data rows")
        return cls(meta[0], meta[1], meta[2], rows)

    @classmethod
    def read_csv(cls, path) -> "ScalingDataset":
        with open(path, encoding="utf-8") as fh:
            return cls.from_csv_text(fh.read())

    def digest(self) -> str:
        return hashlib.sha256(self.to_csv_text().encode()).hexdigest()


def points_digest(points) -> str:
    """Order-independent hash of a list of data points."""
    canon = sorted((repr(float(p.W)), int(p.L), repr(float(p.lam)), repr(float(p.sigma))) for p in points)
    return hashlib.sha256(repr(canon).encode()).hexdigest()
