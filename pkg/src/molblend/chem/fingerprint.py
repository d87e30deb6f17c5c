"""Circular substructure fingerprints.

Each atom starts from an identifier hashing (element, degree, charge,
aromatic flag); every iteration rehashes the pair (own id, sorted list of
(bond order, neighbor id)). All identifiers from all iterations fold into a
fixed-width bit vector via ``id mod n_bits``. Hashing is blake2b-64 over a
canonical text serialization, so bit patterns are identical across
platforms and runs. Atoms with no neighbors keep their identifier across
iterations, so an isolated atom contributes exactly one bit.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from molblend.chem.graph import BondOrder, MolGraph

_ORDER_CODE = {
    BondOrder.SINGLE: 1,
    BondOrder.DOUBLE: 2,
    BondOrder.TRIPLE: 3,
    BondOrder.AROMATIC: 4,
}


def _hash64(text: str) -> int:
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big")


@dataclass
class Fingerprint:
    bits: np.ndarray  # bool vector
    radius: int
    n_bits: int = field(init=False)

    def __post_init__(self) -> None:
        self.bits = np.asarray(self.bits, dtype=bool)
        self.n_bits = int(self.bits.shape[0])

    def on_bits(self) -> list[int]:
        return np.flatnonzero(self.bits).tolist()

    def count(self) -> int:
        return int(self.bits.sum())


def morgan_fingerprint(
    graph: MolGraph, radius: int = 2, n_bits: int = 2048
) -> Fingerprint:
    if radius < 0:
        raise ValueError("radius must be >= 0")
    if n_bits <= 0 or (n_bits & (n_bits - 1)) != 0:
        raise ValueError("n_bits must be a positive power of two")

    adj = graph.adjacency()
    ids = [
        _hash64(
            f"atom|{a.element}|{len(adj[i])}|{a.charge}|{int(a.aromatic)}"
        )
        for i, a in enumerate(graph.atoms)
    ]
    bits = np.zeros(n_bits, dtype=bool)
    for i in ids:
        bits[i % n_bits] = True
    for _ in range(radius):
        new_ids = []
        for i in range(graph.n_atoms):
            if not adj[i]:
                new_ids.append(ids[i])
                continue
            env = sorted((_ORDER_CODE[order], ids[j]) for j, order in adj[i])
            payload = "iter|" + str(ids[i]) + "|" + ",".join(
                f"{code}:{nid}" for code, nid in env
            )
            new_ids.append(_hash64(payload))
        ids = new_ids
        for i in ids:
            bits[i % n_bits] = True
    return Fingerprint(bits, radius)


def tanimoto(a: Fingerprint, b: Fingerprint) -> float:
    if a.n_bits != b.n_bits:
        raise ValueError("fingerprint lengths differ")
    union = int(np.logical_or(a.bits, b.bits).sum())
    if union == 0:
        return 0.0
    inter = int(np.logical_and(a.bits, b.bits).sum())
    return inter / union
