import csv
import io
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from gsvma.dataset import BINARY, NOMINAL, NUMERIC, z_alizadeh_sani_schema  # noqa: E402


def mock_zas_rows(n=303, n_positive=216, seed=0):
    """Schema-valid stand-in for the Z-Alizadeh Sani table.

    Values are random within each feature's domain; a few columns are
    shifted for CAD rows so that classifiers have something to find.
    """
    schema = z_alizadeh_sani_schema()
    rng = np.random.default_rng(seed)
    targets = np.array([schema.positive] * n_positive + [schema.negative] * (n - n_positive))
    targets = targets[rng.permutation(n)]
    rows = []
    for t in targets:
        cad = t == schema.positive
        row = {}
        for f in schema.features:
            if f.kind == NUMERIC:
                v = rng.normal(50, 10) + (8 if cad and f.name in ("Age", "FBS", "TG") else 0)
                row[f.name] = f"{v:.2f}"
            elif f.kind == BINARY:
                p = 0.7 if cad and f.name == "Typical Chest Pain" else 0.3
                row[f.name] = f.values[int(rng.random() < p)]
            else:
                assert f.kind == NOMINAL
                row[f.name] = f.values[int(rng.integers(len(f.values)))]
        row[schema.target] = t
        rows.append(row)
    return schema, rows


def write_rows(path, schema, rows):
    header = schema.names + [schema.target]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=header, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    return path


def csv_bytes(schema, rows):
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=schema.names + [schema.target], lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue().encode("utf-8")


@pytest.fixture(scope="session")
def mock_zas_csv(tmp_path_factory):
    schema, rows = mock_zas_rows()
    return write_rows(tmp_path_factory.mktemp("zas") / "mock_zas.csv", schema, rows)


ACCEPTANCE_LINES = []


@pytest.fixture
def verdict(request):
    """Record one PASS/FAIL line for an acceptance criterion; ``ok=None`` means not run."""

    def record(label, ok, detail=""):
        status = "SKIP" if ok is None else "PASS" if ok else "FAIL"
        line = f"{status}  {label}" + (f"  ({detail})" if detail else "")
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
