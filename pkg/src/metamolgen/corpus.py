"""Corpus ingestion and a small fragment-grammar molecule generator.

The generator exists so the package can ship reproducible desk-scale corpora
without an external chemistry toolkit. Emitted strings are canonical forms.
"""

from __future__ import annotations

import logging
import random
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .smiles import SmilesError, canonical_form, parse, split_tokens

log = logging.getLogger(__name__)

REFERENCE_MOLECULES = {
    "aspirin": "CC(=O)Oc1ccccc1C(=O)O",
    "tamiflu": "CCC(CC)OC1C=C(CC(C1NC(C)=O)N)C(=O)OCC",
    "amoxicillin": "CC1(C)SC2C(NC(=O)C(N)c3ccc(O)cc3)C(=O)N2C1C(=O)O",
    "chloroquine": "CCN(CC)CCCC(C)Nc1ccnc2cc(Cl)ccc12",
    "caffeine": "Cn1cnc2c1c(=O)n(C)c(=O)n2C",
    "ibuprofen": "CC(C)Cc1ccc(cc1)C(C)C(=O)O",
    "paracetamol": "CC(=O)Nc1ccc(O)cc1",
    "ethanol": "CCO",
    "benzene": "c1ccccc1",
}

_LINKERS = ["C", "CC", "CCC", "O", "N", "C(=O)", "C(=O)N", "NC(=O)", "S", "C(C)",
            "C(O)", "C=C", "OC", "CO", "S(=O)(=O)", "C(F)", "N(C)"]
_RINGS = ["c1ccc(cc1)", "c1cccc(c1)", "c1ccccc1", "C1CCC(CC1)", "c1ccc(nc1)",
          "C1CCN(CC1)", "c1ccc(s1)", "C1CC(C1)", "c1ccc(o1)", "C1CCOC(C1)", "N1CCN(CC1)"]
_TERMINALS = ["C", "O", "N", "F", "Cl", "Br", "C(=O)O", "C(=O)N", "C#N", "C(F)(F)F",
              "OC", "N(C)C", "c1ccccc1", "C1CCCC1", "C1CCOCC1", "CC", "C(C)C"]


def _random_molecule(rng: random.Random) -> str:
    parts = [rng.choice(_TERMINALS)] if rng.random() < 0.7 else []
    for _ in range(rng.randint(1, 4)):
        if rng.random() < 0.4:
            parts.append(rng.choice(_RINGS))
        else:
            unit = rng.choice(_LINKERS)
            if unit in ("C", "CC", "N") and rng.random() < 0.25:
                unit += "(" + rng.choice(_TERMINALS[:12]) + ")"
            parts.append(unit)
    if rng.random() < 0.8:
        parts.append(rng.choice(_TERMINALS))
    return "".join(parts)


def synthesize_corpus(n: int, seed: int = 0, max_tokens: int = 60) -> list[str]:
    """``n`` distinct canonical SMILES drawn from the fragment grammar."""
    rng = random.Random(seed)
    seen: set[str] = set()
    out: list[str] = []
    attempts = 0
    while len(out) < n:
        attempts += 1
        if attempts > 200 * n:
            raise RuntimeError(f"could only generate {len(out)} distinct molecules")
        raw = _random_molecule(rng)
        try:
            canon = canonical_form(parse(raw))
        except SmilesError:
            continue
        if canon in seen or len(split_tokens(canon)) > max_tokens:
            continue
        seen.add(canon)
        out.append(canon)
    return out


@dataclass
class IngestResult:
    smiles: list[str] = field(default_factory=list)
    skipped: int = 0
    comments: int = 0


def read_corpus(path, max_tokens: int | None = None) -> IngestResult:
    """Read one SMILES per line; ``#`` lines ignored, invalid lines counted and skipped.

    Only the first whitespace-separated field of a line is used.
    """
    res = IngestResult()
    text = Path(path).read_text(encoding="utf-8")
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            res.comments += 1
            continue
        s = line.split()[0]
        try:
            parse(s)
            if max_tokens is not None and len(split_tokens(s)) + 2 > max_tokens:
                raise SmilesError(f"longer than {max_tokens} tokens")
        except SmilesError as exc:
            log.debug("line %d skipped: %s", lineno, exc)
            res.skipped += 1
            continue
        res.smiles.append(s)
    if res.skipped:
        log.warning("%s: skipped %d invalid line(s)", path, res.skipped)
    return res


def bundled_corpus_path(name: str = "corpus_500.smi") -> Path:
    return Path(str(resources.files("metamolgen.data").joinpath(name)))


def bundled_corpus(name: str = "corpus_500.smi") -> list[str]:
    return read_corpus(bundled_corpus_path(name)).smiles
