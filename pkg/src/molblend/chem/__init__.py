"""Chemistry utilities: molecular graphs, SMILES IO, conformers, fingerprints."""

from molblend.chem.graph import Atom, Bond, BondOrder, MolGraph
from molblend.chem.smiles import ParseError, parse_smiles, write_smiles
from molblend.chem.conformer import embed_conformer, conformer_for_record
from molblend.chem.fingerprint import Fingerprint, morgan_fingerprint, tanimoto
from molblend.chem.records import MoleculeRecord, load_corpus, save_corpus

__all__ = [
    "Atom",
    "Bond",
    "BondOrder",
    "MolGraph",
    "ParseError",
    "parse_smiles",
    "write_smiles",
    "embed_conformer",
    "conformer_for_record",
    "Fingerprint",
    "morgan_fingerprint",
    "tanimoto",
    "MoleculeRecord",
    "load_corpus",
    "save_corpus",
]
