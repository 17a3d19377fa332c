import os
import shutil

import numpy as np
import pytest

DATA_DIR = os.path.join(os.path.dirname(__file__), "..", "data", "synthetic")


@pytest.fixture(scope="session")
def data_dir():
    assert os.path.isdir(DATA_DIR), "run scripts/gen_synthetic.py first"
    return DATA_DIR


def _slice_leading_dates(src, dst, n_dates):
    """Copy a CSV keeping rows for the first n_dates distinct leading dates.

    Rows in the bundled files are grouped by date, so one pass suffices.
    """
    kept = []
    seen = 0
    last = None
    with open(src) as handle:
        header = handle.readline()
        for line in handle:
            day = line.split(",", 1)[0]
            if day != last:
                seen += 1
                last = day
                if seen > n_dates:
                    break
            kept.append(line)
    with open(dst, "w") as handle:
        handle.write(header)
        handle.writelines(kept)


@pytest.fixture(scope="session")
def sliced_data_dir(tmp_path_factory):
    """First 170 trading days of the bundled dataset; full ESG history."""
    out = tmp_path_factory.mktemp("slice")
    _slice_leading_dates(os.path.join(DATA_DIR, "prices.csv"), str(out / "prices.csv"), 170)
    _slice_leading_dates(os.path.join(DATA_DIR, "yields.csv"), str(out / "yields.csv"), 170)
    shutil.copy(os.path.join(DATA_DIR, "esg.csv"), str(out / "esg.csv"))
    return str(out)


@pytest.fixture(scope="session")
def single_asset_data_dir(tmp_path_factory, sliced_data_dir):
    """SYN1 alone on the sliced calendar, for buy-and-hold checks."""
    out = tmp_path_factory.mktemp("single")
    for name in ("prices.csv", "esg.csv"):
        with open(os.path.join(sliced_data_dir, name)) as handle:
            header = handle.readline()
            rows = [line for line in handle if line.split(",")[1] == "SYN1"]
        with open(str(out / name), "w") as handle:
            handle.write(header)
            handle.writelines(rows)
    shutil.copy(os.path.join(sliced_data_dir, "yields.csv"), str(out / "yields.csv"))
    return str(out)


@pytest.fixture(scope="session")
def fast_overrides(sliced_data_dir):
    """Run settings that keep an end-to-end pass on the slice under a minute."""
    return {
        "prices_path": os.path.join(sliced_data_dir, "prices.csv"),
        "esg_path": os.path.join(sliced_data_dir, "esg.csv"),
        "yields_path": os.path.join(sliced_data_dir, "yields.csv"),
        "lambdas": (0.0, 0.5),
        "alpha_grid": (0.0, 0.3, 0.6, 0.9),
        "risk_measure": "mv",
        "window": 120,
        "n_scenarios": 400,
        "refit_interval": 10,
        "horizon": 30,
        "seed": 7,
    }


@pytest.fixture
def rng():
    return np.random.Generator(np.random.Philox(1234))


def write_csv(path, header, rows):
    with open(path, "w") as handle:
        handle.write(header + "\n")
        for row in rows:
            handle.write(",".join(str(cell) for cell in row) + "\n")
    return str(path)
