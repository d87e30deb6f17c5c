import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from molblend.chem import (
    Atom,
    Bond,
    BondOrder,
    MolGraph,
    ParseError,
    parse_smiles,
    write_smiles,
)

BROMAZEPAM = "C1C(=O)NC2=C(C=C(C=C2)Br)C(=N1)C3=CC=CC=N3"


def test_heavy_atom_oracle():
    g = parse_smiles(BROMAZEPAM)
    assert g.n_atoms == 19
    assert g.heavy_formula() == {"C": 14, "Br": 1, "N": 3, "O": 1}
    assert g.n_bonds == 21  # 19 atoms, 3 rings
    assert g.is_connected()


def test_benzene():
    g = parse_smiles("c1ccccc1")
    assert g.n_atoms == 6
    assert g.n_bonds == 6
    assert all(a.aromatic and a.element == "C" for a in g.atoms)
    assert all(b.order is BondOrder.AROMATIC for b in g.bonds)


def test_bond_orders():
    g = parse_smiles("C=C")
    assert g.bonds[0].order is BondOrder.DOUBLE
    g = parse_smiles("C#N")
    assert g.bonds[0].order is BondOrder.TRIPLE
    g = parse_smiles("CC")
    assert g.bonds[0].order is BondOrder.SINGLE


def test_two_letter_elements():
    g = parse_smiles("ClCCBr")
    assert [a.element for a in g.atoms] == ["Cl", "C", "C", "Br"]


def test_bracket_atoms():
    g = parse_smiles("[NH4+]")
    assert g.atoms[0] == Atom("N", charge=1)
    g = parse_smiles("[O-]C")
    assert g.atoms[0].charge == -1
    g = parse_smiles("[Fe+2]")
    assert g.atoms[0] == Atom("Fe", charge=2)
    g = parse_smiles("[C++]")
    assert g.atoms[0].charge == 2
    g = parse_smiles("[13C]")  # isotope digits discarded
    assert g.atoms[0] == Atom("C")
    g = parse_smiles("[C@@H](N)(O)C")
    assert g.atoms[0] == Atom("C")
    g = parse_smiles("[CH3:7]O")  # atom class discarded
    assert g.atoms[0] == Atom("C")


def test_aromatic_bracket():
    g = parse_smiles("c1cc[nH]c1")
    assert g.n_atoms == 5
    n = [a for a in g.atoms if a.element == "N"]
    assert len(n) == 1 and n[0].aromatic


def test_stereo_marks_discarded():
    g = parse_smiles("F/C=C/F")
    assert g.n_atoms == 4
    orders = sorted(b.order.value for b in g.bonds)
    assert orders == ["double", "single", "single"]


def test_percent_ring_closure():
    g = parse_smiles("C%10CC%10")
    assert g.n_atoms == 3
    assert g.n_bonds == 3


def test_ring_bond_default_aromatic():
    g = parse_smiles("c1ccccc1")
    ring_bond = [b for b in g.bonds if {b.i, b.j} == {0, 5}]
    assert ring_bond[0].order is BondOrder.AROMATIC


def test_explicit_ring_bond_order():
    g = parse_smiles("C=1CCCCC=1")
    ring_bond = [b for b in g.bonds if {b.i, b.j} == {0, 5}][0]
    assert ring_bond.order is BondOrder.DOUBLE


def test_fused_aromatics_pass_valence():
    for s in ("c1ccc2ccccc2c1", "c1ccc2cc3ccccc3cc2c1", "c1ccc2[nH]ccc2c1"):
        assert parse_smiles(s).is_connected()


@pytest.mark.parametrize(
    "smiles, offset, fragment",
    [
        ("C1CC", 1, "unmatched ring closure"),
        ("C(C", 1, "unbalanced opening"),
        ("CC)", 2, "unbalanced closing"),
        ("CX", 1, "unknown element"),
        ("C(C)(C)(C)(C)C", 0, "valence"),
        ("C==C", 2, "consecutive bond"),
        ("=CC", 0, "no preceding atom"),
        ("C.C", 1, "dot-separated"),
        ("[H]", 0, "hydrogen"),
        ("[Xx]C", 1, "unknown element"),
        ("C%1C", 1, "two digits"),
        ("C(=O)=", 5, "dangling bond"),
        ("1CC", 0, "ring closure before any atom"),
        ("C[N", 1, "unterminated bracket"),
    ],
)
def test_errors_carry_offsets(smiles, offset, fragment):
    with pytest.raises(ParseError) as err:
        parse_smiles(smiles)
    assert err.value.offset == offset
    assert fragment in err.value.reason


def test_empty_input():
    with pytest.raises(ParseError):
        parse_smiles("")
    with pytest.raises(ParseError):
        parse_smiles("   ")


def test_self_bond_rejected():
    with pytest.raises(ParseError, match="itself"):
        parse_smiles("C11")


def test_duplicate_ring_bond_rejected():
    with pytest.raises(ParseError, match="duplicate bond"):
        parse_smiles("C1C1")


def test_conflicting_ring_orders_rejected():
    with pytest.raises(ParseError, match="conflicting"):
        parse_smiles("C=1CCCCC#1")


def test_valence_cap_configurable():
    with pytest.raises(ParseError, match="valence"):
        parse_smiles("O(C)(C)(C)C")  # 4 bonds on O exceeds the default cap 3
    g = parse_smiles("O(C)(C)(C)C", valence_caps={"O": 4})
    assert g.n_atoms == 5
    with pytest.raises(ParseError, match="valence"):
        parse_smiles("CC", valence_caps={"C": 0})


def test_graph_validate():
    g = MolGraph([Atom("C"), Atom("C")], [Bond(0, 1)])
    g.validate()
    bad = MolGraph([Atom("C")], [Bond(0, 1)])
    with pytest.raises(ValueError):
        bad.validate()
    dup = MolGraph([Atom("C"), Atom("C")], [Bond(0, 1), Bond(1, 0)])
    with pytest.raises(ValueError, match="duplicate"):
        dup.validate()


def test_permuted_preserves_structure():
    g = parse_smiles("CC(=O)O")
    perm = [2, 0, 3, 1]
    p = g.permuted(perm)
    assert sorted(a.element for a in p.atoms) == sorted(a.element for a in g.atoms)
    assert p.n_bonds == g.n_bonds
    orders = sorted(b.order.value for b in p.bonds)
    assert orders == sorted(b.order.value for b in g.bonds)


def test_roundtrip_corpus(corpus_smiles):
    for s in corpus_smiles:
        g = parse_smiles(s)
        out = write_smiles(g)
        g2 = parse_smiles(out)
        assert g2.n_atoms == g.n_atoms, s
        assert g2.n_bonds == g.n_bonds, s
        assert g2.heavy_formula() == g.heavy_formula(), s
        assert sorted(b.order.value for b in g2.bonds) == sorted(
            b.order.value for b in g.bonds
        ), s


def test_write_rejects_disconnected():
    g = MolGraph([Atom("C"), Atom("C")], [])
    with pytest.raises(ValueError, match="disconnected"):
        write_smiles(g)


@settings(max_examples=60, deadline=None)
@given(st.data())
def test_roundtrip_random_permutations(corpus_smiles, data):
    s = data.draw(st.sampled_from(corpus_smiles))
    g = parse_smiles(s)
    perm = data.draw(st.permutations(list(range(g.n_atoms))))
    p = g.permuted(list(perm))
    out = write_smiles(p)
    g2 = parse_smiles(out)
    assert g2.heavy_formula() == g.heavy_formula()
    assert g2.n_bonds == g.n_bonds
