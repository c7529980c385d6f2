import numpy as np
import pytest

from cellsvm.dataio import Dataset
from cellsvm.kernel import KernelSpec, gram_matrix


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_problem(rng, n, dim=3, gamma=1.0, binary=True):
    """Random dataset plus its Gram matrix for solver-level tests."""
    X = rng.random((n, dim))
    if binary:
        y = np.where(rng.random(n) < 0.5, -1.0, 1.0)
    else:
        y = rng.standard_normal(n)
    data = Dataset(X, y)
    K = gram_matrix(KernelSpec("gaussian_rbf", gamma), data).values
    return data, K, y


def csv_text(data: Dataset) -> str:
    rows = []
    for x, y in zip(data.samples, data.labels):
        rows.append(",".join(repr(float(v)) for v in x) + "," + repr(float(y)))
    return "\n".join(rows) + "\n"
