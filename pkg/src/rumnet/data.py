"""Choice events, datasets, and the long-format CSV data contract.

Events file (one row per alternative, header required)::

    event_id, alt_index, available, chosen, x_1, ..., x_{d_x}

Customers file (one row per event; omitted entirely when d_z = 0)::

    event_id, z_1, ..., z_{d_z}

Rows of one event are consecutive with alt_index counting 0..n-1; exactly
one row per event has chosen=1 and that row must have available=1. Empty
numeric cells are read as -1 (the missing-value convention). Floats are
written with 17 significant digits so save -> load round-trips bit-exactly.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import csv
import numpy as np


class DatasetFormatError(ValueError):
    """Raised when a dataset file violates the CSV contract."""


@dataclass
class ChoiceEvent:
    """One observed choice: customer features, offered products, pick."""

    customer: np.ndarray          # (d_z,), may be empty
    products: np.ndarray          # (n, d_x)
    available: np.ndarray         # (n,) bool
    chosen: int

    def __post_init__(self):
        self.customer = np.asarray(self.customer, dtype=np.float64).reshape(-1)
        self.products = np.asarray(self.products, dtype=np.float64)
        self.available = np.asarray(self.available, dtype=bool).reshape(-1)
        self.chosen = int(self.chosen)

    @property
    def n_alternatives(self) -> int:
        return self.products.shape[0]

    @property
    def d_x(self) -> int:
        return self.products.shape[1]

    @property
    def d_z(self) -> int:
        return self.customer.shape[0]

    def validate(self):
        if self.products.ndim != 2 or self.n_alternatives < 1:
            raise ValueError("products must be a non-empty (n, d_x) array")
        if self.available.shape != (self.n_alternatives,):
            raise ValueError(
                f"available has shape {self.available.shape}, expected ({self.n_alternatives},)")
        if not self.available.any():
            raise ValueError("no available alternative")
        if not 0 <= self.chosen < self.n_alternatives:
            raise ValueError(f"chosen index {self.chosen} out of range")
        if not self.available[self.chosen]:
            raise ValueError(f"chosen alternative {self.chosen} is unavailable")
        if not np.isfinite(self.products).all() or not np.isfinite(self.customer).all():
            raise ValueError("non-finite features")
        return self


class ChoiceDataset:
    """Immutable-by-convention sequence of validated ChoiceEvents."""

    def __init__(self, events: list[ChoiceEvent], validate: bool = True):
        if not events:
            raise ValueError("empty dataset")
        d_x = events[0].d_x
        d_z = events[0].d_z
        for i, e in enumerate(events):
            if validate:
                try:
                    e.validate()
                except ValueError as exc:
                    raise ValueError(f"event {i}: {exc}") from exc
            if e.d_x != d_x or e.d_z != d_z:
                raise ValueError(
                    f"event {i}: feature dims ({e.d_x},{e.d_z}) != dataset dims ({d_x},{d_z})")
        self.events = list(events)
        self.d_x = d_x
        self.d_z = d_z
        self._groups = None

    def __len__(self):
        return len(self.events)

    def __getitem__(self, i) -> ChoiceEvent:
        return self.events[i]

    def __iter__(self):
        return iter(self.events)

    @property
    def kappa_max(self) -> int:
        return max(e.n_alternatives for e in self.events)

    def subset(self, indices) -> "ChoiceDataset":
        return ChoiceDataset([self.events[i] for i in indices], validate=False)

    def grouped(self):
        """Events stacked by assortment size: list of
        (indices, X (m,n,d_x), Z (m,d_z), available (m,n), chosen (m,)).

        Grouping enables batched evaluation; group order is by ascending n
        and stable within a group, so reductions are deterministic.
        """
        if self._groups is None:
            by_n = {}
            for i, e in enumerate(self.events):
                by_n.setdefault(e.n_alternatives, []).append(i)
            groups = []
            for n in sorted(by_n):
                idx = np.asarray(by_n[n], dtype=np.intp)
                X = np.stack([self.events[i].products for i in idx])
                Z = (np.stack([self.events[i].customer for i in idx])
                     if self.d_z else np.zeros((len(idx), 0)))
                avail = np.stack([self.events[i].available for i in idx])
                chosen = np.asarray([self.events[i].chosen for i in idx], dtype=np.intp)
                groups.append((idx, X, Z, avail, chosen))
            self._groups = groups
        return self._groups


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def _parse_cell(raw: str, path, row_no: int):
    raw = raw.strip()
    if raw == "":
        return -1.0  # missing-value convention
    try:
        return float(raw)
    except ValueError:
        raise DatasetFormatError(f"{path}:{row_no}: non-numeric cell {raw!r}") from None


def load_long_csv(events_path, customers_path=None) -> ChoiceDataset:
    """Load a dataset from the long CSV contract; validates eagerly."""
    order, blocks = _read_event_blocks(events_path)
    customers = {}
    d_z = 0
    if customers_path is not None:
        customers, d_z = _read_customers(customers_path, set(order))
        missing = [eid for eid in order if eid not in customers]
        if missing:
            raise DatasetFormatError(
                f"{customers_path}: no customer row for event_id {missing[0]!r}")
    events = []
    for eid in order:
        rows = blocks[eid]
        products = np.array([r[2] for r in rows])
        available = np.array([r[0] for r in rows], dtype=bool)
        chosen_flags = [i for i, r in enumerate(rows) if r[1]]
        if len(chosen_flags) != 1:
            raise DatasetFormatError(
                f"{events_path}: event_id {eid!r} has {len(chosen_flags)} chosen rows, expected 1")
        z = customers.get(eid, np.zeros(0))
        ev = ChoiceEvent(z, products, available, chosen_flags[0])
        try:
            ev.validate()
        except ValueError as exc:
            raise DatasetFormatError(f"{events_path}: event_id {eid!r}: {exc}") from exc
        events.append(ev)
    return ChoiceDataset(events, validate=False)


def _read_event_blocks(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetFormatError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        fixed = ["event_id", "alt_index", "available", "chosen"]
        if header[: len(fixed)] != fixed:
            raise DatasetFormatError(
                f"{path}: header must start with {fixed}, got {header[:len(fixed)]}")
        d_x = len(header) - len(fixed)
        expected_x = [f"x_{j + 1}" for j in range(d_x)]
        if header[len(fixed):] != expected_x:
            raise DatasetFormatError(
                f"{path}: feature columns must be x_1..x_{d_x}, got {header[len(fixed):]}")
        order = []
        blocks = {}
        current = None
        for row_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DatasetFormatError(
                    f"{path}:{row_no}: expected {len(header)} cells, got {len(row)}")
            eid = row[0].strip()
            alt = _parse_cell(row[1], path, row_no)
            avail = _parse_cell(row[2], path, row_no)
            chosen = _parse_cell(row[3], path, row_no)
            if avail not in (0.0, 1.0) or chosen not in (0.0, 1.0):
                raise DatasetFormatError(
                    f"{path}:{row_no}: available/chosen must be 0 or 1")
            feats = [_parse_cell(c, path, row_no) for c in row[4:]]
            if eid != current:
                if eid in blocks:
                    raise DatasetFormatError(
                        f"{path}:{row_no}: event_id {eid!r} rows are not consecutive")
                current = eid
                order.append(eid)
                blocks[eid] = []
            if alt != len(blocks[eid]):
                raise DatasetFormatError(
                    f"{path}:{row_no}: alt_index must count 0..n-1 within event "
                    f"{eid!r}, got {alt:g} at position {len(blocks[eid])}")
            blocks[eid].append((bool(avail), bool(chosen), feats))
        if not order:
            raise DatasetFormatError(f"{path}: no event rows")
        return order, blocks


def _read_customers(path, known_ids=None):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        if not header or header[0] != "event_id":
            raise DatasetFormatError(f"{path}: header must start with event_id")
        d_z = len(header) - 1
        if header[1:] != [f"z_{j + 1}" for j in range(d_z)]:
            raise DatasetFormatError(f"{path}: feature columns must be z_1..z_{d_z}")
        out = {}
        for row_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DatasetFormatError(
                    f"{path}:{row_no}: expected {len(header)} cells, got {len(row)}")
            eid = row[0].strip()
            if known_ids is not None and eid not in known_ids:
                raise DatasetFormatError(f"{path}:{row_no}: unknown event_id {eid!r}")
            if eid in out:
                raise DatasetFormatError(f"{path}:{row_no}: duplicate event_id {eid!r}")
            out[eid] = np.array([_parse_cell(c, path, row_no) for c in row[1:]])
        return out, d_z


def load_customers_csv(path):
    """Load a standalone customers file: (event ids, feature matrix)."""
    rows, d_z = _read_customers(path)
    if not rows:
        raise DatasetFormatError(f"{path}: no customer rows")
    ids = list(rows)
    return ids, np.vstack([rows[i] for i in ids]).reshape(len(ids), d_z)


def save_long_csv(dataset: ChoiceDataset, events_path, customers_path=None):
    """Inverse of load_long_csv; event ids are the 0-based event positions."""
    with open(events_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["event_id", "alt_index", "available", "chosen"]
                        + [f"x_{j + 1}" for j in range(dataset.d_x)])
        for t, e in enumerate(dataset.events):
            for i in range(e.n_alternatives):
                writer.writerow(
                    [t, i, int(e.available[i]), int(i == e.chosen)]
                    + [_fmt(v) for v in e.products[i]])
    if dataset.d_z > 0:
        if customers_path is None:
            raise ValueError("dataset has customer features but no customers_path given")
        with open(customers_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["event_id"] + [f"z_{j + 1}" for j in range(dataset.d_z)])
            for t, e in enumerate(dataset.events):
                writer.writerow([t] + [_fmt(v) for v in e.customer])


def one_hot(labels, min_count: int = 1):
    """Binary-encode a categorical column, lumping rare labels together.

    Labels with frequency >= min_count each get a column (sorted label
    order); all rarer labels share a single trailing RARE column, present
    only when at least one label is rare. Returns (matrix, column_names).
    """
    labels = [str(v) for v in labels]
    counts = Counter(labels)
    kept = sorted(k for k, c in counts.items() if c >= min_count)
    has_rare = any(c < min_count for c in counts.values())
    names = kept + (["RARE"] if has_rare else [])
    col = {k: j for j, k in enumerate(kept)}
    mat = np.zeros((len(labels), len(names)))
    for i, v in enumerate(labels):
        mat[i, col.get(v, len(names) - 1)] = 1.0
    return mat, names
