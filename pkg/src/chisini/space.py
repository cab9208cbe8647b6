"""Finite measurable spaces.

Outcomes are indexed ``0..n-1``. Events are integer bitmasks over those
indices, and a sigma-algebra is stored as the partition into its atoms.
Random variables are plain float arrays of length ``n``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterator, Sequence

import numpy as np

MAX_OUTCOMES = 64
DEFAULT_EVENT_CAP = 24


class SpaceError(ValueError):
    """Inconsistent space, event or partition data."""


class EventCapExceeded(SpaceError):
    pass


@dataclass(frozen=True)
class FiniteSpace:
    outcomes: tuple[str, ...]
    base_weights: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        outcomes = tuple(str(o) for o in self.outcomes)
        object.__setattr__(self, "outcomes", outcomes)
        n = len(outcomes)
        if n < 1:
            raise SpaceError("a space needs at least one outcome")
        if n > MAX_OUTCOMES:
            raise SpaceError(f"at most {MAX_OUTCOMES} outcomes supported, got {n}")
        if len(set(outcomes)) != n:
            raise SpaceError("outcome labels must be unique")
        if self.base_weights is not None:
            w = np.asarray(self.base_weights, dtype=float)
            if w.shape != (n,):
                raise SpaceError(f"expected {n} weights, got shape {w.shape}")
            if np.any(~np.isfinite(w)) or np.any(w < 0):
                raise SpaceError("weights must be finite and nonnegative")
            if abs(w.sum() - 1.0) > 1e-12:
                raise SpaceError(f"weights must sum to 1 (sum={w.sum()!r})")
            w.setflags(write=False)
            object.__setattr__(self, "base_weights", w)

    @classmethod
    def of_size(cls, n: int, weights=None) -> "FiniteSpace":
        return cls(tuple(f"w{i + 1}" for i in range(n)), weights)

    @property
    def n(self) -> int:
        return len(self.outcomes)

    @property
    def full_mask(self) -> int:
        return (1 << self.n) - 1

    def __eq__(self, other):
        if not isinstance(other, FiniteSpace):
            return NotImplemented
        if self.outcomes != other.outcomes:
            return False
        a, b = self.base_weights, other.base_weights
        if a is None or b is None:
            return a is b
        return bool(np.array_equal(a, b))

    def __hash__(self):
        return hash(self.outcomes)


@dataclass(frozen=True, order=True)
class Event:
    mask: int
    space_size: int

    def __post_init__(self):
        if self.mask < 0 or self.mask >> self.space_size:
            raise SpaceError(f"mask {self.mask:#x} uses bits beyond n={self.space_size}")

    @classmethod
    def from_indices(cls, indices, n: int) -> "Event":
        mask = 0
        for i in indices:
            mask |= 1 << int(i)
        return cls(mask, n)

    def indices(self) -> list[int]:
        return mask_indices(self.mask)

    def indicator(self) -> np.ndarray:
        return mask_to_indicator(self.mask, self.space_size)

    def __or__(self, other: "Event") -> "Event":
        return Event(self.mask | other.mask, self.space_size)

    def __and__(self, other: "Event") -> "Event":
        return Event(self.mask & other.mask, self.space_size)

    def complement(self) -> "Event":
        return Event(((1 << self.space_size) - 1) & ~self.mask, self.space_size)

    def is_empty(self) -> bool:
        return self.mask == 0

    def __len__(self):
        return self.mask.bit_count() if hasattr(int, "bit_count") else bin(self.mask).count("1")


def mask_indices(mask: int) -> list[int]:
    out = []
    i = 0
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return out


def mask_to_indicator(mask: int, n: int) -> np.ndarray:
    return np.array([(mask >> i) & 1 for i in range(n)], dtype=float)


def _lowest_bit(mask: int) -> int:
    return (mask & -mask).bit_length() - 1


@dataclass(frozen=True)
class SigmaAlgebra:
    """A sigma-algebra on ``n`` outcomes, given by its atoms.

    ``atoms`` holds the atom masks sorted by lowest contained outcome, so
    two partitions are equal iff their tuples are.
    """

    atoms: tuple[int, ...]
    n: int

    def __post_init__(self):
        atoms = tuple(sorted((int(a) for a in self.atoms), key=_lowest_bit))
        full = (1 << self.n) - 1
        seen = 0
        for a in atoms:
            if a <= 0 or a & ~full:
                raise SpaceError(f"invalid atom mask {a:#x} for n={self.n}")
            if seen & a:
                raise SpaceError("atoms must be pairwise disjoint")
            seen |= a
        if seen != full:
            raise SpaceError("atoms must cover every outcome")
        object.__setattr__(self, "atoms", atoms)

    @classmethod
    def trivial(cls, n: int) -> "SigmaAlgebra":
        return cls(((1 << n) - 1,), n)

    @classmethod
    def discrete(cls, n: int) -> "SigmaAlgebra":
        return cls(tuple(1 << i for i in range(n)), n)

    @classmethod
    def from_blocks(cls, blocks: Sequence[Sequence[int]], n: int) -> "SigmaAlgebra":
        """Build from 0-based index blocks, e.g. ``[[0, 1], [2, 3]]``."""
        return cls(tuple(Event.from_indices(b, n).mask for b in blocks), n)

    @property
    def k(self) -> int:
        return len(self.atoms)

    @property
    def full_mask(self) -> int:
        return (1 << self.n) - 1

    def atom_events(self) -> list[Event]:
        return [Event(a, self.n) for a in self.atoms]

    def atom_of_outcome(self) -> np.ndarray:
        """Atom index for each outcome."""
        out = np.empty(self.n, dtype=int)
        for j, a in enumerate(self.atoms):
            out[mask_indices(a)] = j
        return out

    def atom_union(self, atom_indices) -> int:
        mask = 0
        for j in atom_indices:
            mask |= self.atoms[j]
        return mask

    def atoms_in(self, mask: int) -> list[int]:
        """Indices of the atoms contained in ``mask`` (assumed measurable)."""
        return [j for j, a in enumerate(self.atoms) if a & mask == a]

    def contains(self, mask: int) -> bool:
        if mask < 0 or mask & ~self.full_mask:
            return False
        return all((a & mask) in (0, a) for a in self.atoms)

    def lift(self, atom_values) -> np.ndarray:
        """Piecewise-constant random variable from one value per atom."""
        atom_values = np.asarray(atom_values, dtype=float)
        if atom_values.shape != (self.k,):
            raise SpaceError(f"expected {self.k} atom values, got {atom_values.shape}")
        return atom_values[self.atom_of_outcome()]

    def refines(self, other: "SigmaAlgebra") -> bool:
        """True if every atom of ``other`` is a union of atoms of ``self``."""
        return self.n == other.n and all(self.contains(a) for a in other.atoms)


def partition_from_labels(space: FiniteSpace | int, labels: Sequence) -> SigmaAlgebra:
    n = space if isinstance(space, int) else space.n
    if len(labels) != n:
        raise SpaceError(f"need one label per outcome: {len(labels)} labels for {n} outcomes")
    fibers: dict = {}
    for i, lab in enumerate(labels):
        fibers[lab] = fibers.get(lab, 0) | (1 << i)
    return SigmaAlgebra(tuple(fibers.values()), n)


def generated_events(sigma: SigmaAlgebra, cap: int = DEFAULT_EVENT_CAP) -> list[Event]:
    """All ``2**k`` unions of atoms, ordered by the binary index of the atom subset."""
    return [Event(m, sigma.n) for m in iter_event_masks(sigma, cap)]


def iter_event_masks(sigma: SigmaAlgebra, cap: int = DEFAULT_EVENT_CAP) -> Iterator[int]:
    k = sigma.k
    if k > cap:
        raise EventCapExceeded(
            f"sigma-algebra has {k} atoms; enumerating 2^{k} events exceeds the cap of 2^{cap}"
        )
    for subset in range(1 << k):
        mask = 0
        j = 0
        s = subset
        while s:
            if s & 1:
                mask |= sigma.atoms[j]
            s >>= 1
            j += 1
        yield mask


def disjoint_event_pairs(sigma: SigmaAlgebra, cap: int = DEFAULT_EVENT_CAP):
    """Unordered pairs of disjoint nonempty events, as ``(mask1, mask2)``."""
    masks = [m for m in iter_event_masks(sigma, cap) if m]
    for m1, m2 in combinations(masks, 2):
        if not m1 & m2:
            yield m1, m2


def common_refinement(p1: SigmaAlgebra, p2: SigmaAlgebra) -> SigmaAlgebra:
    if p1.n != p2.n:
        raise SpaceError("partitions live on different spaces")
    atoms = [a & b for a in p1.atoms for b in p2.atoms if a & b]
    return SigmaAlgebra(tuple(atoms), p1.n)


def as_random_variable(f, n: int | None = None) -> np.ndarray:
    arr = np.asarray(f, dtype=float)
    if arr.ndim != 1:
        raise SpaceError("a random variable is a 1-d vector of outcome values")
    if n is not None and arr.shape[0] != n:
        raise SpaceError(f"expected {n} values, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise SpaceError("random variable values must be finite")
    return arr


def sup_norm(f) -> float:
    f = np.asarray(f, dtype=float)
    return float(np.max(np.abs(f))) if f.size else 0.0


def atom_projection(f, sigma: SigmaAlgebra, weights=None) -> np.ndarray:
    """Atom-wise piecewise-constant projection of ``f``.

    Uses the weighted average on each atom when weights are given and the
    atom has positive mass, the plain average otherwise.
    """
    f = np.asarray(f, dtype=float)
    out = np.empty_like(f)
    for a in sigma.atoms:
        idx = mask_indices(a)
        if weights is not None and np.sum(weights[idx]) > 0:
            w = weights[idx]
            out[idx] = np.dot(w, f[idx]) / w.sum()
        else:
            out[idx] = f[idx].mean()
    return out


def is_measurable(f, sigma: SigmaAlgebra) -> bool:
    f = np.asarray(f, dtype=float)
    for a in sigma.atoms:
        vals = f[mask_indices(a)]
        if np.any(vals != vals[0]):
            return False
    return True


def atom_values_of(g, sigma: SigmaAlgebra) -> np.ndarray:
    """Per-atom values of a measurable ``g`` (first outcome of each atom)."""
    g = np.asarray(g, dtype=float)
    return np.array([g[_lowest_bit(a)] for a in sigma.atoms])


def restrict(f, event: Event | int) -> np.ndarray:
    """``f * 1_A``."""
    f = np.asarray(f, dtype=float)
    mask = event.mask if isinstance(event, Event) else int(event)
    return f * mask_to_indicator(mask, f.shape[0])
