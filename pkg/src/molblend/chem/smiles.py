"""SMILES reader and writer for the organic subset.

Supported grammar: organic-subset atoms (B, C, N, O, P, S, F, Cl, Br, I),
aromatic lowercase forms, bracket atoms with charge and hydrogen counts,
bond symbols ``- = # :``, ring closures (including ``%nn``), and branches.
Stereo marks (``@``, ``@@``, ``/``, ``\\``), isotope digits and atom-class
suffixes are accepted and discarded. Hydrogen counts are dropped: graphs
contain heavy atoms only. Every syntax or valence problem raises
:class:`ParseError` carrying the character offset.
"""

from __future__ import annotations

import math

from molblend.chem.graph import Atom, Bond, BondOrder, MolGraph

ORGANIC_SUBSET = ("Cl", "Br", "B", "C", "N", "O", "P", "S", "F", "I")
AROMATIC_ORGANIC = "bcnops"
AROMATIC_BRACKET = ("se", "as", "b", "c", "n", "o", "p", "s", "te")

ELEMENTS = frozenset(
    """H He Li Be B C N O F Ne Na Mg Al Si P S Cl Ar K Ca Sc Ti V Cr Mn Fe
    Co Ni Cu Zn Ga Ge As Se Br Kr Rb Sr Y Zr Nb Mo Tc Ru Rh Pd Ag Cd In Sn
    Sb Te I Xe Cs Ba La Ce Pr Nd Pm Sm Eu Gd Tb Dy Ho Er Tm Yb Lu Hf Ta W
    Re Os Ir Pt Au Hg Tl Pb Bi Po At Rn Fr Ra Ac Th Pa U Np Pu""".split()
)

# Permissive per-element maxima for the explicit-bond valence check; the sum
# of explicit bond orders (aromatic contributions floored, so fused-ring
# bridgeheads pass) may not exceed these.
DEFAULT_VALENCE_CAPS = {
    "B": 3,
    "C": 4,
    "N": 5,
    "O": 3,
    "P": 6,
    "S": 6,
    "F": 1,
    "Cl": 4,
    "Br": 4,
    "I": 7,
}
FALLBACK_VALENCE_CAP = 8

_BOND_CHARS = {
    "-": BondOrder.SINGLE,
    "=": BondOrder.DOUBLE,
    "#": BondOrder.TRIPLE,
    ":": BondOrder.AROMATIC,
    "/": BondOrder.SINGLE,
    "\\": BondOrder.SINGLE,
}


class ParseError(ValueError):
    """SMILES rejection with the offending character offset."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at offset {offset})")
        self.reason = message
        self.offset = offset


def _default_order(a: Atom, b: Atom) -> BondOrder:
    if a.aromatic and b.aromatic:
        return BondOrder.AROMATIC
    return BondOrder.SINGLE


def _parse_bracket(s: str, start: int) -> tuple[Atom, int]:
    """Parse a bracket atom beginning at ``s[start] == '['``."""
    end = s.find("]", start)
    if end < 0:
        raise ParseError("unterminated bracket atom", start)
    i = start + 1
    while i < end and s[i].isdigit():  # isotope, discarded
        i += 1
    if i >= end:
        raise ParseError("bracket atom lacks an element symbol", start)

    aromatic = False
    element = None
    for low in AROMATIC_BRACKET:
        if s.startswith(low, i):
            element = low.capitalize()
            aromatic = True
            i += len(low)
            break
    if element is None:
        if not s[i].isupper():
            raise ParseError(f"unknown element symbol {s[i]!r}", i)
        if i + 1 < end and s[i + 1].islower() and s[i : i + 2] in ELEMENTS:
            element = s[i : i + 2]
            i += 2
        elif s[i] in ELEMENTS:
            element = s[i]
            i += 1
        else:
            raise ParseError(f"unknown element symbol {s[i]!r}", i)
    if element == "H":
        raise ParseError("explicit hydrogen atoms are not supported", start)

    charge = 0
    while i < end:
        c = s[i]
        if c == "@":  # chirality, discarded
            i += 2 if s.startswith("@@", i) else 1
        elif c == "H":  # hydrogen count, discarded
            i += 1
            while i < end and s[i].isdigit():
                i += 1
        elif c in "+-":
            sign = 1 if c == "+" else -1
            i += 1
            if i < end and s[i].isdigit():
                num = i
                while i < end and s[i].isdigit():
                    i += 1
                charge = sign * int(s[num:i])
            else:
                charge = sign
                while i < end and s[i] == c:
                    charge += sign
                    i += 1
        elif c == ":":  # atom class, discarded
            i += 1
            if i >= end or not s[i].isdigit():
                raise ParseError("atom class expects digits", i)
            while i < end and s[i].isdigit():
                i += 1
        else:
            raise ParseError(f"unexpected character {c!r} in bracket atom", i)

    return Atom(element, charge=charge, aromatic=aromatic), end + 1


def parse_smiles(
    smiles: str, valence_caps: dict[str, int] | None = None
) -> MolGraph:
    """Parse a single-fragment SMILES string into a heavy-atom graph."""
    if not smiles or not smiles.strip():
        raise ParseError("empty SMILES", 0)
    caps = dict(DEFAULT_VALENCE_CAPS)
    if valence_caps:
        caps.update(valence_caps)

    atoms: list[Atom] = []
    atom_offsets: list[int] = []
    bonds: list[Bond] = []
    bond_keys: set[tuple[int, int]] = set()
    prev: int | None = None
    pending: BondOrder | None = None
    pending_off = 0
    branch_stack: list[tuple[int | None, int]] = []
    open_rings: dict[int, tuple[int, BondOrder | None, int]] = {}

    def add_bond(i: int, j: int, order: BondOrder, off: int) -> None:
        key = (min(i, j), max(i, j))
        if i == j:
            raise ParseError("atom bonded to itself", off)
        if key in bond_keys:
            raise ParseError(f"duplicate bond between atoms {i} and {j}", off)
        bond_keys.add(key)
        bonds.append(Bond(i, j, order))

    def add_atom(atom: Atom, off: int) -> None:
        nonlocal prev, pending
        idx = len(atoms)
        atoms.append(atom)
        atom_offsets.append(off)
        if prev is not None:
            add_bond(prev, idx, pending or _default_order(atoms[prev], atom), off)
        elif pending is not None:
            raise ParseError("bond with no preceding atom", pending_off)
        prev = idx
        pending = None

    i = 0
    n = len(smiles)
    while i < n:
        c = smiles[i]
        if c in _BOND_CHARS:
            if pending is not None:
                raise ParseError("two consecutive bond symbols", i)
            pending = _BOND_CHARS[c]
            pending_off = i
            i += 1
        elif c == "(":
            if prev is None:
                raise ParseError("branch before any atom", i)
            if pending is not None:
                raise ParseError("bond symbol before branch", i)
            branch_stack.append((prev, i))
            i += 1
        elif c == ")":
            if not branch_stack:
                raise ParseError("unbalanced closing parenthesis", i)
            if pending is not None:
                raise ParseError("dangling bond before closing parenthesis", i)
            prev, _ = branch_stack.pop()
            i += 1
        elif c.isdigit() or c == "%":
            if prev is None:
                raise ParseError("ring closure before any atom", i)
            if c == "%":
                digits = smiles[i + 1 : i + 3]
                if len(digits) < 2 or not digits.isdigit():
                    raise ParseError("'%' ring closure expects two digits", i)
                number = int(digits)
                width = 3
            else:
                number = int(c)
                width = 1
            if number in open_rings:
                other, other_order, _ = open_rings.pop(number)
                if pending and other_order and pending is not other_order:
                    raise ParseError("conflicting ring-closure bond orders", i)
                order = (
                    pending
                    or other_order
                    or _default_order(atoms[prev], atoms[other])
                )
                add_bond(prev, other, order, i)
            else:
                open_rings[number] = (prev, pending, i)
            pending = None
            i += width
        elif c == "[":
            atom, nxt = _parse_bracket(smiles, i)
            add_atom(atom, i)
            i = nxt
        elif c == ".":
            raise ParseError("dot-separated fragments are not supported", i)
        else:
            matched = False
            for sym in ORGANIC_SUBSET:
                if smiles.startswith(sym, i):
                    add_atom(Atom(sym), i)
                    i += len(sym)
                    matched = True
                    break
            if matched:
                continue
            if c in AROMATIC_ORGANIC:
                add_atom(Atom(c.upper(), aromatic=True), i)
                i += 1
            elif c.isalpha():
                raise ParseError(f"unknown element symbol {c!r}", i)
            else:
                raise ParseError(f"unexpected character {c!r}", i)

    if pending is not None:
        raise ParseError("dangling bond at end of input", pending_off)
    if branch_stack:
        raise ParseError("unbalanced opening parenthesis", branch_stack[-1][1])
    if open_rings:
        number, (_, _, off) = next(iter(open_rings.items()))
        raise ParseError(f"unmatched ring closure {number}", off)

    graph = MolGraph(atoms, bonds)
    graph.validate()
    _check_valences(graph, atom_offsets, caps)
    return graph


def _check_valences(
    graph: MolGraph, offsets: list[int], caps: dict[str, int]
) -> None:
    totals = [0.0] * graph.n_atoms
    arom_counts = [0] * graph.n_atoms
    for b in graph.bonds:
        for end in (b.i, b.j):
            if b.order is BondOrder.AROMATIC:
                arom_counts[end] += 1
            else:
                totals[end] += b.order.valence
    for idx, atom in enumerate(graph.atoms):
        val = totals[idx] + math.floor(1.5 * arom_counts[idx])
        cap = caps.get(atom.element, FALLBACK_VALENCE_CAP)
        if val > cap:
            raise ParseError(
                f"valence {val:g} exceeds cap {cap} for {atom.element}",
                offsets[idx],
            )


_LOWERCASE_OK = frozenset({"B", "C", "N", "O", "P", "S", "Se", "As", "Te"})
_PLAIN = frozenset({"B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I"})


def _atom_token(atom: Atom) -> str:
    if atom.charge == 0:
        if atom.aromatic and atom.element in _LOWERCASE_OK and len(atom.element) == 1:
            return atom.element.lower()
        if not atom.aromatic and atom.element in _PLAIN:
            return atom.element
    body = (
        atom.element.lower()
        if atom.aromatic and atom.element in _LOWERCASE_OK
        else atom.element
    )
    if atom.charge == 0:
        chg = ""
    elif atom.charge in (1, -1):
        chg = "+" if atom.charge == 1 else "-"
    else:
        chg = f"{atom.charge:+d}"
    return f"[{body}{chg}]"


def _bond_token(order: BondOrder, a: Atom, b: Atom) -> str:
    both_aromatic = a.aromatic and b.aromatic
    if order is BondOrder.SINGLE:
        return "-" if both_aromatic else ""
    if order is BondOrder.AROMATIC:
        return "" if both_aromatic else ":"
    return "=" if order is BondOrder.DOUBLE else "#"


def write_smiles(graph: MolGraph) -> str:
    """Serialize a connected graph back to SMILES, atoms in DFS order from
    index 0 with ring closures for cycle edges."""
    graph.validate()
    if graph.n_atoms == 0:
        raise ValueError("cannot serialize an empty graph")
    if not graph.is_connected():
        raise ValueError("cannot serialize a disconnected graph")

    adj = [sorted(nbrs) for nbrs in graph.adjacency()]
    visited = [False] * graph.n_atoms
    tree: dict[int, list[tuple[int, BondOrder]]] = {
        i: [] for i in range(graph.n_atoms)
    }
    ring_edges: list[tuple[int, int, BondOrder]] = []
    seen_edges: set[tuple[int, int]] = set()
    visited[0] = True
    # Iterative DFS classifying tree vs ring edges with sorted-neighbor order.
    expand = [0]
    while expand:
        u = expand.pop()
        for v, order in reversed(adj[u]):
            key = (min(u, v), max(u, v))
            if key in seen_edges:
                continue
            if visited[v]:
                seen_edges.add(key)
                ring_edges.append((u, v, order))
            else:
                seen_edges.add(key)
                visited[v] = True
                tree[u].append((v, order))
                expand.append(v)
    # DFS above pushes children in reverse so pops come out sorted, but the
    # ring-edge endpoints must open at the first-emitted atom; emission order
    # equals tree pre-order, so compute closure tokens per atom now.
    emit_order: dict[int, int] = {}

    def preorder(u: int, counter: list[int]) -> None:
        emit_order[u] = counter[0]
        counter[0] += 1
        for v, _ in tree[u]:
            preorder(v, counter)

    preorder(0, [0])
    closures: dict[int, list[tuple[int, str]]] = {
        i: [] for i in range(graph.n_atoms)
    }
    for num, (u, v, order) in enumerate(ring_edges, start=1):
        tok = str(num) if num < 10 else f"%{num:02d}"
        first, second = (u, v) if emit_order[u] < emit_order[v] else (v, u)
        closures[first].append((num, tok))
        closures[second].append(
            (num, _bond_token(order, graph.atoms[u], graph.atoms[v]) + tok)
        )

    out: list[str] = []

    def emit(u: int) -> None:
        out.append(_atom_token(graph.atoms[u]))
        for _, tok in sorted(closures[u]):
            out.append(tok)
        children = tree[u]
        for k, (v, order) in enumerate(children):
            bond = _bond_token(order, graph.atoms[u], graph.atoms[v])
            if k < len(children) - 1:
                out.append("(" + bond)
                emit(v)
                out.append(")")
            else:
                out.append(bond)
                emit(v)

    emit(0)
    return "".join(out)
