import csv
import random
import threading

import pytest
from hypothesis import settings

from unspsc_llm.ingest import PurchaseRecord
from unspsc_llm.taxonomy import UnspscCode

# wall-clock deadlines flake on loaded machines; example counts stay default
settings.register_profile("suite", deadline=None)
settings.load_profile("suite")


def make_code(rng: random.Random) -> UnspscCode:
    """Random valid code: nonzero pairs down to a random level, zeros below."""
    depth = rng.choice((1, 2, 3, 4))
    pairs = [f"{rng.randint(1, 99):02d}" for _ in range(depth)] + ["00"] * (4 - depth)
    return UnspscCode("".join(pairs))


def make_commodity_code(rng: random.Random) -> UnspscCode:
    """Random valid code with all four pairs significant."""
    return UnspscCode("".join(f"{rng.randint(1, 99):02d}" for _ in range(4)))


def make_records(count: int, seed: int = 0, commodity_only: bool = False) -> list[PurchaseRecord]:
    rng = random.Random(seed)
    records = []
    for index in range(1, count + 1):
        gold = make_commodity_code(rng) if commodity_only else make_code(rng)
        records.append(
            PurchaseRecord(
                record_id=f"r{index}",
                item_name=f"Item {index}",
                item_description=f"Description of item {index}",
                gold_code=gold,
                source_row=index,
            )
        )
    return records


def write_csv(path, rows, header=("Item Name", "Item Description", "Normalized UNSPSC")):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        if header:
            writer.writerow(header)
        writer.writerows(rows)
    return path


@pytest.fixture
def dataset_csv(tmp_path):
    """A small well-formed dataset file."""
    return write_csv(
        tmp_path / "data.csv",
        [
            ("HP LaserJet Pro M404dn", "Laser printer, black and white, 40 pages per minute.", "43212110"),
            ("Dell Latitude 7420", "Business laptop with 14-inch screen and Intel i7 processor.", "43211503"),
            ("3M Scotch Magic Tape", "Invisible tape for office use, 1 inch by 1000-inch roll.", "31201512"),
        ],
    )


class CountingBackend:
    """Wraps a backend, counting calls and tracking peak concurrency."""

    def __init__(self, inner, delay: float = 0.0):
        self.inner = inner
        self.backend_id = inner.backend_id
        self.calls = 0
        self.in_flight = 0
        self.peak_in_flight = 0
        self.delay = delay
        self._lock = threading.Lock()

    def complete(self, request, record_id=None):
        with self._lock:
            self.calls += 1
            self.in_flight += 1
            self.peak_in_flight = max(self.peak_in_flight, self.in_flight)
        try:
            if self.delay:
                threading.Event().wait(self.delay)
            return self.inner.complete(request, record_id=record_id)
        finally:
            with self._lock:
                self.in_flight -= 1
