"""Molecular graphs over heavy atoms.

Hydrogens are never materialised as nodes; atoms carry element, formal
charge and an aromatic flag, bonds carry one of four orders.
"""

from __future__ import annotations

import enum
from collections import Counter
from dataclasses import dataclass, field, replace


class BondOrder(enum.Enum):
    SINGLE = "single"
    DOUBLE = "double"
    TRIPLE = "triple"
    AROMATIC = "aromatic"

    @property
    def valence(self) -> float:
        return {
            BondOrder.SINGLE: 1.0,
            BondOrder.DOUBLE: 2.0,
            BondOrder.TRIPLE: 3.0,
            BondOrder.AROMATIC: 1.5,
        }[self]


@dataclass(frozen=True)
class Atom:
    element: str
    charge: int = 0
    aromatic: bool = False


@dataclass(frozen=True)
class Bond:
    i: int
    j: int
    order: BondOrder = BondOrder.SINGLE


@dataclass
class MolGraph:
    """Undirected heavy-atom graph. Bonds store endpoints with i < j."""

    atoms: list[Atom] = field(default_factory=list)
    bonds: list[Bond] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.bonds = [
            b if b.i < b.j else replace(b, i=b.j, j=b.i) for b in self.bonds
        ]

    @property
    def n_atoms(self) -> int:
        return len(self.atoms)

    @property
    def n_bonds(self) -> int:
        return len(self.bonds)

    def neighbors(self, i: int) -> list[tuple[int, BondOrder]]:
        out = []
        for b in self.bonds:
            if b.i == i:
                out.append((b.j, b.order))
            elif b.j == i:
                out.append((b.i, b.order))
        return out

    def adjacency(self) -> list[list[tuple[int, BondOrder]]]:
        adj: list[list[tuple[int, BondOrder]]] = [[] for _ in self.atoms]
        for b in self.bonds:
            adj[b.i].append((b.j, b.order))
            adj[b.j].append((b.i, b.order))
        return adj

    def heavy_formula(self) -> dict[str, int]:
        """Element -> count over heavy atoms (no hydrogen bookkeeping)."""
        return dict(Counter(a.element for a in self.atoms))

    def degree(self, i: int) -> int:
        return len(self.neighbors(i))

    def validate(self) -> None:
        n = self.n_atoms
        seen: set[tuple[int, int]] = set()
        for b in self.bonds:
            if not (0 <= b.i < n and 0 <= b.j < n):
                raise ValueError(f"bond ({b.i},{b.j}) references a missing atom")
            if b.i == b.j:
                raise ValueError(f"atom {b.i} bonded to itself")
            key = (b.i, b.j)
            if key in seen:
                raise ValueError(f"duplicate bond between atoms {b.i} and {b.j}")
            seen.add(key)

    def is_connected(self) -> bool:
        if self.n_atoms <= 1:
            return True
        adj = self.adjacency()
        seen = {0}
        stack = [0]
        while stack:
            for j, _ in adj[stack.pop()]:
                if j not in seen:
                    seen.add(j)
                    stack.append(j)
        return len(seen) == self.n_atoms

    def permuted(self, perm: list[int]) -> "MolGraph":
        """Relabel atoms so new index perm[i] hosts old atom i."""
        if sorted(perm) != list(range(self.n_atoms)):
            raise ValueError("perm must be a permutation of atom indices")
        atoms = [self.atoms[0]] * self.n_atoms
        for old, new in enumerate(perm):
            atoms[new] = self.atoms[old]
        bonds = [Bond(perm[b.i], perm[b.j], b.order) for b in self.bonds]
        return MolGraph(atoms, bonds)
