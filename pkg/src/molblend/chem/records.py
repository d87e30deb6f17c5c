"""Corpus records and line-delimited JSON IO.

A record is one molecule with its identifiers and optional text/geometry:
``{"id", "smiles", "iupac", "description", "coords"}``. ``coords``, when
present, must list one xyz triple per heavy atom of the parsed SMILES.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from molblend.chem.smiles import parse_smiles

FIELDS = ("id", "smiles", "iupac", "description", "coords")


@dataclass
class MoleculeRecord:
    id: str
    smiles: str
    iupac: str = ""
    description: str = ""
    coords: list[list[float]] | None = None

    def to_json(self) -> str:
        payload = {
            "id": self.id,
            "smiles": self.smiles,
            "iupac": self.iupac,
            "description": self.description,
            "coords": self.coords,
        }
        return json.dumps(payload, ensure_ascii=False)


def load_corpus(path: str | Path, validate: bool = True) -> list[MoleculeRecord]:
    records: list[MoleculeRecord] = []
    seen_ids: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            unknown = set(raw) - set(FIELDS)
            if unknown:
                raise ValueError(
                    f"{path}:{lineno}: unknown fields {sorted(unknown)}"
                )
            if "id" not in raw or "smiles" not in raw:
                raise ValueError(f"{path}:{lineno}: 'id' and 'smiles' are required")
            rec = MoleculeRecord(
                id=str(raw["id"]),
                smiles=raw["smiles"],
                iupac=raw.get("iupac") or "",
                description=raw.get("description") or "",
                coords=raw.get("coords"),
            )
            if rec.id in seen_ids:
                raise ValueError(f"{path}:{lineno}: duplicate id {rec.id!r}")
            seen_ids.add(rec.id)
            if validate:
                graph = parse_smiles(rec.smiles)
                if rec.coords is not None and len(rec.coords) != graph.n_atoms:
                    raise ValueError(
                        f"{path}:{lineno}: {len(rec.coords)} coordinates for "
                        f"{graph.n_atoms} heavy atoms"
                    )
            records.append(rec)
    return records


def save_corpus(records: list[MoleculeRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(rec.to_json() + "\n")
