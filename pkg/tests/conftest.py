"""Shared fixtures and independent reference implementations.

The reference functions here deliberately avoid the package's own code
paths: dense matrices are built by integer index arithmetic, entropies
come from singular values of the amplitude matrix, and local operators
are applied as explicit global Kronecker products.  Tests compare the
package against these.
"""

from __future__ import annotations

import numpy as np
import pytest

from oracle_locc.oracle import FunctionTable


# --- independent reference implementations --------------------------------

def ref_oracle_matrix(f: FunctionTable) -> np.ndarray:
    """Dense oracle matrix from flat-index arithmetic on basis columns."""
    dim = f.M * f.N
    U = np.zeros((dim, dim), dtype=np.complex128)
    for source in range(dim):
        x, y = divmod(source, f.N)
        U[x * f.N + (y + f.table[x]) % f.N, source] = 1.0
    return U


def ref_partition(f: FunctionTable):
    """Level sets grouped with a dict; returns (values, classes) sorted."""
    groups: dict[int, list[int]] = {}
    for x, v in enumerate(f.table):
        groups.setdefault(v, []).append(x)
    values = sorted(groups)
    return values, [sorted(groups[v]) for v in values]


def ref_global_apply(state_amps: np.ndarray, dims: tuple[int, ...],
                     op: np.ndarray, axes: tuple[int, ...]) -> np.ndarray:
    """Apply op to the given axes by explicit loops over basis states."""
    dims = tuple(dims)
    total = int(np.prod(dims))
    tdims = tuple(dims[a] for a in axes)
    out = np.zeros(total, dtype=np.complex128)
    for col in range(total):
        amp = state_amps[col]
        if amp == 0:
            continue
        index = list(np.unravel_index(col, dims))
        source = np.ravel_multi_index([index[a] for a in axes], tdims)
        for dest in range(op.shape[0]):
            if op[dest, source] == 0:
                continue
            dest_index = list(index)
            for a, v in zip(axes, np.unravel_index(dest, tdims)):
                dest_index[a] = v
            out[np.ravel_multi_index(dest_index, dims)] += op[dest, source] * amp
    return out


def ref_entanglement_entropy(state_amps: np.ndarray, dim_left: int, dim_right: int) -> float:
    """Entropy in ebits from singular values of the amplitude matrix."""
    sigma = np.linalg.svd(state_amps.reshape(dim_left, dim_right), compute_uv=False)
    p = sigma**2
    p = p[p > 1e-14]
    return float(-np.sum(p * np.log2(p)))


def ref_dft(n: int) -> np.ndarray:
    """Reference Fourier matrix, F[s, k] = exp(2 pi i k s / n) / sqrt(n)."""
    s, k = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    return np.exp(2j * np.pi * s * k / n) / np.sqrt(n)


def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-ish unitary from the QR decomposition of a Gaussian matrix."""
    z = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_table(rng: np.random.Generator, max_m: int = 4, max_n: int = 4) -> FunctionTable:
    M = int(rng.integers(1, max_m + 1))
    N = int(rng.integers(1, max_n + 1))
    return FunctionTable(M, N, tuple(int(v) for v in rng.integers(0, N, size=M)))


def exhaustive_tables(max_m: int, max_n: int):
    """Every function table within the bounds, enumerated independently."""
    from itertools import product

    for M in range(1, max_m + 1):
        for N in range(1, max_n + 1):
            for table in product(range(N), repeat=M):
                yield FunctionTable(M, N, table)


def exhaustive_permutations(max_m: int):
    from itertools import permutations

    for M in range(1, max_m + 1):
        for perm in permutations(range(M)):
            yield FunctionTable(M, M, perm)


# --- fixtures -------------------------------------------------------------

@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20260823)


@pytest.fixture(scope="session")
def small_tables() -> list[FunctionTable]:
    return list(exhaustive_tables(3, 3))


@pytest.fixture(scope="session")
def small_permutations() -> list[FunctionTable]:
    return list(exhaustive_permutations(4))
