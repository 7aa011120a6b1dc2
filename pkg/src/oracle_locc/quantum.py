"""Dense state-vector simulation of small multipartite quantum systems.

Subsystems are identified by string labels and carry an ownership tag
(which party holds them).  Basis ordering is row-major with the leftmost
subsystem most significant, i.e. for dims (d0, d1, ...) the flat index of
basis state |k0, k1, ...> is k0*d1*d2*... + k1*d2*... + ...

All operations are pure: inputs are never mutated and amplitude arrays are
frozen, so values can safely be shared between threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

NORM_TOL = 1e-12
UNITARY_TOL = 1e-10
ENTROPY_EIGENVALUE_CUTOFF = 1e-14
SCHMIDT_RANK_REL_CUTOFF = 1e-10


def _default_owner(label: str) -> str:
    # Convention used throughout: registers B and b sit with Bob,
    # everything else with Alice.  Pass owners explicitly to override.
    return "bob" if label[:1] in ("b", "B") else "alice"


def _frozen_complex(values, size: int | None = None) -> np.ndarray:
    arr = np.array(values, dtype=np.complex128).reshape(-1)
    if size is not None and arr.size != size:
        raise ValueError(f"amplitude vector has length {arr.size}, expected {size}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class StateVector:
    """Normalized pure state over an ordered list of labelled subsystems."""

    dims: tuple[int, ...]
    labels: tuple[str, ...]
    amps: np.ndarray
    owners: tuple[str, ...] = ()

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        labels = tuple(str(x) for x in self.labels)
        if len(dims) != len(labels):
            raise ValueError("dims and labels must have equal length")
        if any(d < 1 for d in dims):
            raise ValueError("subsystem dimensions must be >= 1")
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate subsystem labels in {labels}")
        owners = self.owners or tuple(_default_owner(x) for x in labels)
        owners = tuple(str(p) for p in owners)
        if len(owners) != len(labels):
            raise ValueError("owners must assign exactly one party per subsystem")
        total = int(np.prod(dims)) if dims else 1
        amps = _frozen_complex(self.amps, total)
        norm2 = float(np.vdot(amps, amps).real)
        if abs(norm2 - 1.0) > 1e-9:
            raise ValueError(f"state is not normalized: |amps|^2 = {norm2}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "owners", owners)
        object.__setattr__(self, "amps", amps)

    @property
    def total_dim(self) -> int:
        return self.amps.size

    def axis(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"unknown subsystem label {label!r}; have {self.labels}") from None

    def dim_of(self, label: str) -> int:
        return self.dims[self.axis(label)]

    def owner_of(self, label: str) -> str:
        return self.owners[self.axis(label)]

    def tensor_view(self) -> np.ndarray:
        """Amplitudes reshaped to one axis per subsystem (read-only view)."""
        return self.amps.reshape(self.dims)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amps))

    def overlap(self, other: "StateVector") -> complex:
        if self.dims != other.dims or self.labels != other.labels:
            raise ValueError("overlap requires identical subsystem layout")
        return complex(np.vdot(self.amps, other.amps))

    def __repr__(self):
        parts = ", ".join(f"{x}:{d}" for x, d in zip(self.labels, self.dims))
        return f"StateVector({parts})"


def basis_state(
    dims: Sequence[int],
    labels: Sequence[str],
    indices: Sequence[int] | int,
    owners: Sequence[str] | None = None,
) -> StateVector:
    """Computational basis state |k0, k1, ...> (or flat index if an int)."""
    dims = tuple(int(d) for d in dims)
    total = int(np.prod(dims))
    if isinstance(indices, (int, np.integer)):
        flat = int(indices)
    else:
        indices = tuple(int(k) for k in indices)
        if len(indices) != len(dims):
            raise ValueError("one basis index per subsystem required")
        for k, d in zip(indices, dims):
            if not 0 <= k < d:
                raise ValueError(f"basis index {k} out of range for dimension {d}")
        flat = int(np.ravel_multi_index(indices, dims)) if dims else 0
    if not 0 <= flat < total:
        raise ValueError(f"flat index {flat} out of range for total dimension {total}")
    amps = np.zeros(total, dtype=np.complex128)
    amps[flat] = 1.0
    return StateVector(dims, tuple(labels), amps, tuple(owners) if owners else ())


def from_amps(
    dims: Sequence[int],
    labels: Sequence[str],
    amps,
    owners: Sequence[str] | None = None,
    normalize: bool = False,
) -> StateVector:
    """Wrap an explicit amplitude vector, optionally normalizing it first."""
    arr = np.asarray(amps, dtype=np.complex128).reshape(-1)
    if normalize:
        n = np.linalg.norm(arr)
        if n == 0:
            raise ValueError("cannot normalize the zero vector")
        arr = arr / n
    return StateVector(tuple(dims), tuple(labels), arr, tuple(owners) if owners else ())


def random_state(
    dims: Sequence[int],
    labels: Sequence[str],
    rng: np.random.Generator | int,
    owners: Sequence[str] | None = None,
) -> StateVector:
    """Normalized state with i.i.d. complex Gaussian amplitudes."""
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    total = int(np.prod(tuple(dims)))
    amps = rng.standard_normal(total) + 1j * rng.standard_normal(total)
    return from_amps(dims, labels, amps, owners, normalize=True)


def tensor(parts: Sequence[StateVector]) -> StateVector:
    """Kronecker product of states in the given order; labels must be disjoint."""
    if not parts:
        raise ValueError("tensor of zero states is undefined")
    seen: set[str] = set()
    for p in parts:
        clash = seen.intersection(p.labels)
        if clash:
            raise ValueError(f"duplicate subsystem labels across parts: {sorted(clash)}")
        seen.update(p.labels)
    amps = parts[0].amps
    for p in parts[1:]:
        amps = np.kron(amps, p.amps)
    dims = tuple(d for p in parts for d in p.dims)
    labels = tuple(x for p in parts for x in p.labels)
    owners = tuple(o for p in parts for o in p.owners)
    return StateVector(dims, labels, amps, owners)


def reorder(state: StateVector, labels: Sequence[str]) -> StateVector:
    """Permute subsystems into the given label order."""
    labels = tuple(labels)
    if sorted(labels) != sorted(state.labels):
        raise ValueError(f"reorder must permute existing labels {state.labels}, got {labels}")
    perm = [state.axis(x) for x in labels]
    amps = np.transpose(state.tensor_view(), perm).reshape(-1)
    dims = tuple(state.dims[i] for i in perm)
    owners = tuple(state.owners[i] for i in perm)
    return StateVector(dims, labels, amps, owners)


@dataclass(frozen=True, eq=False)
class LocalOperator:
    """Operator acting on one subsystem or an ordered pair of subsystems.

    The matrix is indexed row-major over the target dims in the order given,
    and must be unitary within UNITARY_TOL unless flagged as a projector.
    """

    target: str | tuple[str, str]
    matrix: np.ndarray
    is_projector: bool = False
    description: str = ""

    def __post_init__(self):
        mat = np.array(self.matrix, dtype=np.complex128)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise ValueError(f"operator matrix must be square, got shape {mat.shape}")
        if not self.is_projector:
            dev = np.max(np.abs(mat.conj().T @ mat - np.eye(mat.shape[0])))
            if dev > UNITARY_TOL:
                raise ValueError(f"operator is not unitary (max deviation {dev:.3e})")
        mat.setflags(write=False)
        object.__setattr__(self, "matrix", mat)
        if isinstance(self.target, str):
            object.__setattr__(self, "target", self.target)
        else:
            object.__setattr__(self, "target", tuple(self.target))

    @property
    def target_labels(self) -> tuple[str, ...]:
        return (self.target,) if isinstance(self.target, str) else self.target


def apply_local(state: StateVector, op: LocalOperator) -> StateVector:
    """Apply op to its target subsystem(s), identity elsewhere.

    Works by tensor contraction on the reshaped amplitude array; the global
    matrix is never materialized.
    """
    targets = op.target_labels
    axes = [state.axis(x) for x in targets]
    tdims = tuple(state.dims[i] for i in axes)
    block = int(np.prod(tdims))
    if op.matrix.shape[0] != block:
        raise ValueError(
            f"operator dimension {op.matrix.shape[0]} does not match target dims {tdims}"
        )
    op_tensor = op.matrix.reshape(tdims + tdims)
    n = len(targets)
    psi = np.tensordot(op_tensor, state.tensor_view(), axes=(tuple(range(n, 2 * n)), tuple(axes)))
    psi = np.moveaxis(psi, tuple(range(n)), tuple(axes))
    amps = psi.reshape(-1)
    if not op.is_projector:
        return StateVector(state.dims, state.labels, amps, state.owners)
    return from_amps(state.dims, state.labels, amps, state.owners, normalize=True)


def measurement_probabilities(state: StateVector, label: str) -> np.ndarray:
    """Exact computational-basis outcome distribution for one subsystem."""
    axis = state.axis(label)
    psi = np.moveaxis(state.tensor_view(), axis, 0)
    flat = psi.reshape(state.dims[axis], -1)
    return np.sum(np.abs(flat) ** 2, axis=1)


def collapse(state: StateVector, label: str, outcome: int) -> tuple[float, StateVector | None]:
    """Project a subsystem onto a basis outcome.

    Returns the branch probability and the renormalized post-measurement
    state (None when the branch has zero weight).
    """
    axis = state.axis(label)
    d = state.dims[axis]
    if not 0 <= outcome < d:
        raise ValueError(f"outcome {outcome} out of range for dimension {d}")
    psi = np.moveaxis(state.tensor_view(), axis, 0).copy()
    keep = psi[outcome]
    prob = float(np.sum(np.abs(keep) ** 2))
    if prob <= 0.0:
        return 0.0, None
    psi[:outcome] = 0.0
    psi[outcome + 1 :] = 0.0
    psi = np.moveaxis(psi, 0, axis) / np.sqrt(prob)
    return prob, StateVector(state.dims, state.labels, psi.reshape(-1), state.owners)


@dataclass(frozen=True, eq=False)
class MeasurementRecord:
    """One projective computational-basis measurement and its outcome."""

    subsystem: str
    outcome: int
    probability: float
    post_state: StateVector
    probabilities: np.ndarray = field(repr=False, default=None)


def measure_computational(
    state: StateVector, label: str, rng: np.random.Generator | int
) -> MeasurementRecord:
    """Sample a computational-basis measurement of one subsystem.

    All randomness flows through the supplied generator (an int seeds a
    fresh one), so runs are reproducible.  The full outcome distribution is
    included in the record for deterministic assertions.
    """
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(int(rng))
    probs = measurement_probabilities(state, label)
    total = float(probs.sum())
    if total <= 1e-12:
        raise RuntimeError("all measurement outcomes have zero probability")
    cumulative = np.cumsum(probs)
    outcome = int(np.searchsorted(cumulative, rng.random() * total, side="right"))
    outcome = min(outcome, len(probs) - 1)
    while probs[outcome] == 0.0:  # guard against landing on a zero branch at a float edge
        outcome -= 1
    prob, post = collapse(state, label, outcome)
    frozen = probs.copy()
    frozen.setflags(write=False)
    return MeasurementRecord(label, outcome, prob, post, frozen)


def partial_trace(state: StateVector, keep: Iterable[str]) -> np.ndarray:
    """Reduced density matrix on the kept subsystems (in state order)."""
    keep = set(keep)
    unknown = keep.difference(state.labels)
    if unknown:
        raise KeyError(f"unknown labels in keep-set: {sorted(unknown)}")
    if not keep or len(keep) == len(state.labels):
        raise ValueError("keep-set must be a nonempty proper subset of the subsystems")
    keep_axes = [i for i, x in enumerate(state.labels) if x in keep]
    trace_axes = [i for i, x in enumerate(state.labels) if x not in keep]
    psi = state.tensor_view()
    rho = np.tensordot(psi, psi.conj(), axes=(trace_axes, trace_axes))
    d = int(np.prod([state.dims[i] for i in keep_axes]))
    return rho.reshape(d, d)


def entanglement_entropy(state: StateVector, cut: Iterable[str]) -> float:
    """Von Neumann entropy (base 2) of the reduced state on `cut`, in ebits."""
    rho = partial_trace(state, cut)
    eigenvalues = np.linalg.eigvalsh(rho)
    eigenvalues = eigenvalues[eigenvalues > ENTROPY_EIGENVALUE_CUTOFF]
    return float(-np.sum(eigenvalues * np.log2(eigenvalues)) + 0.0)


def fidelity(a: StateVector, b: StateVector) -> float:
    """Squared overlap |<a|b>|^2 between two pure states."""
    return abs(a.overlap(b)) ** 2


def realign(U: np.ndarray, dim_a: int, dim_b: int) -> np.ndarray:
    """Regroup a bipartite operator U[(a,b),(a',b')] into R[(a,a'),(b,b')].

    The singular values of R are the operator Schmidt coefficients of U.
    """
    U = np.asarray(U, dtype=np.complex128)
    if U.shape != (dim_a * dim_b, dim_a * dim_b):
        raise ValueError(f"expected a {dim_a * dim_b}-dimensional square matrix, got {U.shape}")
    return U.reshape(dim_a, dim_b, dim_a, dim_b).transpose(0, 2, 1, 3).reshape(
        dim_a * dim_a, dim_b * dim_b
    )


def schmidt_values(U: np.ndarray, dim_a: int, dim_b: int) -> np.ndarray:
    """Operator Schmidt coefficients of U (descending singular values)."""
    return np.linalg.svd(realign(U, dim_a, dim_b), compute_uv=False)


def operator_schmidt_rank(U: np.ndarray, dim_a: int, dim_b: int) -> int:
    """Number of terms in the operator Schmidt decomposition of a unitary U.

    Singular values below SCHMIDT_RANK_REL_CUTOFF times the largest one are
    treated as zero, so the threshold is scale-free.
    """
    U = np.asarray(U, dtype=np.complex128)
    dev = np.max(np.abs(U.conj().T @ U - np.eye(U.shape[0])))
    if dev > UNITARY_TOL:
        raise ValueError(f"operator is not unitary (max deviation {dev:.3e})")
    values = schmidt_values(U, dim_a, dim_b)
    if values[0] == 0.0:
        return 0
    return int(np.count_nonzero(values > SCHMIDT_RANK_REL_CUTOFF * values[0]))
