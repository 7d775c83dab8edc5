"""Synthetic loan-like dataset so the full pipeline can run without the
real data.

Generative process: 10 informative standard-normal features drive a
logistic link whose intercept is calibrated to a 20% positive rate;
6 noise features carry no signal (4 numeric, 2 categorical). A small
fraction of rows gets a missing cell to exercise the filtering path.
"""

from __future__ import annotations

import math

import numpy as np

N_INFORMATIVE = 10
N_NUMERIC_NOISE = 4
CATEGORIES_A = ("alpha", "beta", "gamma")
CATEGORIES_B = ("low", "high", "mid")
POSITIVE_RATE = 0.20
MISSING_FRACTION = 0.01
LOGIT_SCALE = 1.5


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def generate(n_rows: int = 5000, seed: int = 42):
    """Return (header, rows, y) for the synthetic fixture."""
    if n_rows < 50:
        raise ValueError("n_rows too small to be useful")
    rng = np.random.default_rng([seed, 7])
    X_inf = rng.standard_normal((n_rows, N_INFORMATIVE))
    X_noise = rng.standard_normal((n_rows, N_NUMERIC_NOISE))
    beta = rng.standard_normal(N_INFORMATIVE)
    beta = beta / np.linalg.norm(beta) * LOGIT_SCALE
    raw = X_inf @ beta

    # bisect the intercept so the mean positive probability hits the target
    lo, hi = -20.0, 20.0
    for _ in range(80):
        mid = (lo + hi) / 2.0
        if _sigmoid(raw + mid).mean() < POSITIVE_RATE:
            lo = mid
        else:
            hi = mid
    b0 = (lo + hi) / 2.0
    y = (rng.random(n_rows) < _sigmoid(raw + b0)).astype(np.int64)

    cat_a = rng.choice(CATEGORIES_A, size=n_rows)
    cat_b = rng.choice(CATEGORIES_B, size=n_rows)

    header = (
        [f"inf_{i:02d}" for i in range(N_INFORMATIVE)]
        + [f"noise_{i:02d}" for i in range(N_NUMERIC_NOISE)]
        + ["cat_a", "cat_b", "loan_status"]
    )
    rows = []
    n_missing = int(round(MISSING_FRACTION * n_rows))
    missing_rows = set(rng.choice(n_rows, size=n_missing, replace=False).tolist())
    for i in range(n_rows):
        cells = [repr(float(v)) for v in X_inf[i]]
        noise_cells = [repr(float(v)) for v in X_noise[i]]
        if i in missing_rows:
            noise_cells[0] = ""
        cells += noise_cells
        cells += [str(cat_a[i]), str(cat_b[i])]
        cells.append("Fully Paid" if y[i] == 1 else "Charged Off")
        rows.append(cells)
    return header, rows, y


def schema_lines():
    lines = [f"inf_{i:02d},numeric" for i in range(N_INFORMATIVE)]
    lines += [f"noise_{i:02d},numeric" for i in range(N_NUMERIC_NOISE)]
    lines.append("cat_a,categorical," + "|".join(sorted(CATEGORIES_A)))
    lines.append("cat_b,categorical," + "|".join(sorted(CATEGORIES_B)))
    lines.append("loan_status,label")
    return lines


def write_fixture(csv_path, schema_path, n_rows: int = 5000, seed: int = 42):
    header, rows, y = generate(n_rows=n_rows, seed=seed)
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for cells in rows:
            fh.write(",".join(cells) + "\n")
    with open(schema_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(schema_lines()) + "\n")
    return int(y.sum()), len(rows)
