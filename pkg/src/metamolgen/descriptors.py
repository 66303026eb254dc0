"""Molecular feature vectors, fingerprints and drug-likeness proxies.

All contribution tables are shipped as plain-text files under ``data/``
(``element class value`` per line, ``#`` comments, a ``# version: N``
header). They are proxies, not reimplementations of any external toolkit.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

import numpy as np

from .smiles import AROMATIC_BOND, MoleculeGraph

FEATURE_NAMES = (
    "mw", "logp", "hbd", "hba", "tpsa", "ring_count",
    "aromatic_atom_count", "rotatable_bonds", "heavy_atom_count", "logs",
)
DEFAULT_PROPERTY_NAMES = ("mw", "logp", "hbd", "hba")

FP_BITS = 2048
FP_RADIUS = 2

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1


# ------------------------------------------------------------------ tables

def load_table(name: str) -> tuple[int, dict[tuple[str, str], float]]:
    """Parse a shipped coefficient table into (version, {(element, class): value})."""
    text = resources.files("metamolgen.data").joinpath(name).read_text(encoding="utf-8")
    return parse_table(text, name)


def parse_table(text: str, name: str = "<table>") -> tuple[int, dict[tuple[str, str], float]]:
    version = None
    table: dict[tuple[str, str], float] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("version:"):
                version = int(body.split(":", 1)[1])
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ValueError(f"{name}:{lineno}: expected 3 columns, got {len(parts)}")
        table[(parts[0], parts[1])] = float(parts[2])
    if version is None:
        raise ValueError(f"{name}: missing '# version:' header")
    return version, table


@lru_cache(maxsize=None)
def _tables():
    return {
        "mass": load_table("atomic_masses.v1.txt")[1],
        "logp": load_table("logp_contributions.v1.txt")[1],
        "tpsa": load_table("tpsa_contributions.v1.txt")[1],
        "esol": load_table("esol.v1.txt")[1],
    }


# ----------------------------------------------------------- atom classes

def _atom_env(g: MoleculeGraph, i: int):
    """(heavy degree, has double, has triple, double partner elements)."""
    heavy = 0
    double_to = []
    triple = False
    for j, k in g.adjacency[i]:
        if g.atoms[j].element != "H":
            heavy += 1
        order = g.bonds[k].order
        if order == 2:
            double_to.append(g.atoms[j].element)
        elif order == 3:
            triple = True
    return heavy, double_to, triple


def _logp_class(g: MoleculeGraph, i: int) -> tuple[str, str]:
    a = g.atoms[i]
    el = a.element
    heavy, double_to, triple = _atom_env(g, i)
    if el == "C":
        if a.aromatic:
            return el, "aromatic"
        if any(e in ("O", "N", "S") for e in double_to):
            return el, "carbonyl"
        if double_to or triple:
            return el, "unsaturated"
        return el, "aliphatic"
    if el == "N":
        if a.charge:
            return el, "charged"
        if a.aromatic:
            return el, "aromatic"
        if double_to or triple:
            return el, "unsaturated"
        return el, {0: "primary", 1: "primary", 2: "secondary"}.get(heavy, "tertiary")
    if el == "O":
        if a.charge:
            return el, "charged"
        if a.aromatic:
            return el, "aromatic"
        if double_to:
            return el, "carbonyl"
        return el, "hydroxyl" if a.hcount else "ether"
    if el == "S":
        if a.aromatic:
            return el, "aromatic"
        return el, "oxidized" if double_to else "aliphatic"
    return el, "any"


def _h_class(element: str) -> str:
    return {"C": "on_carbon", "N": "on_nitrogen", "O": "on_oxygen"}.get(element, "on_other")


def _tpsa_class(g: MoleculeGraph, i: int) -> str | None:
    a = g.atoms[i]
    heavy, double_to, triple = _atom_env(g, i)
    if a.element == "N":
        if a.charge:
            return "charged"
        if a.aromatic:
            if a.hcount:
                return "aromatic_h1"
            return "aromatic_h0_sub" if heavy >= 3 else "aromatic_h0"
        if triple:
            return "triple"
        if double_to:
            return "double_h1" if a.hcount else "double_h0"
        return f"single_h{min(a.hcount, 3)}"
    if a.element == "O":
        if a.charge:
            return "charged"
        if a.aromatic:
            return "aromatic"
        if double_to:
            return "carbonyl"
        return "hydroxyl" if a.hcount else "ether"
    return None


# ---------------------------------------------------------------- features

def molecular_weight(g: MoleculeGraph) -> float:
    mass = _tables()["mass"]
    total = 0.0
    for a in g.atoms:
        total += mass[(a.element, "mass")] + a.hcount * mass[("H", "mass")]
    return total


def logp(g: MoleculeGraph) -> float:
    table = _tables()["logp"]
    total = 0.0
    for i, a in enumerate(g.atoms):
        if a.element == "H":
            neighbor = g.atoms[g.adjacency[i][0][0]].element if g.adjacency[i] else "H"
            total += table[("H", _h_class(neighbor))]
            continue
        key = _logp_class(g, i)
        total += table.get(key, table.get((a.element, "any"), table[("*", "any")]))
        total += a.hcount * table[("H", _h_class(a.element))]
    return total


def tpsa(g: MoleculeGraph) -> float:
    table = _tables()["tpsa"]
    total = 0.0
    for i, a in enumerate(g.atoms):
        cls = _tpsa_class(g, i)
        if cls is not None:
            total += table.get((a.element, cls), 0.0)
    return total


def hbd(g: MoleculeGraph) -> int:
    return sum(1 for a in g.atoms if a.element in ("N", "O") and a.hcount > 0)


def hba(g: MoleculeGraph) -> int:
    return sum(1 for a in g.atoms if a.element in ("N", "O"))


def heavy_atom_count(g: MoleculeGraph) -> int:
    return sum(1 for a in g.atoms if a.element != "H")


def aromatic_atom_count(g: MoleculeGraph) -> int:
    return sum(1 for a in g.atoms if a.aromatic)


def rotatable_bonds(g: MoleculeGraph) -> int:
    """Single, non-ring bonds between heavy atoms that each have heavy degree >= 2."""
    ring = g.ring_bonds()
    heavy_deg = [sum(1 for j, _ in g.adjacency[i] if g.atoms[j].element != "H")
                 for i in range(len(g.atoms))]
    count = 0
    for k, bd in enumerate(g.bonds):
        if bd.order != 1 or k in ring:
            continue
        if g.atoms[bd.a].element == "H" or g.atoms[bd.b].element == "H":
            continue
        if heavy_deg[bd.a] >= 2 and heavy_deg[bd.b] >= 2:
            count += 1
    return count


def log_solubility(mw: float, clogp: float, rb: int, aromatic_proportion: float) -> float:
    c = _tables()["esol"]
    return (c[("esol", "intercept")] + c[("esol", "logp")] * clogp + c[("esol", "mw")] * mw
            + c[("esol", "rotatable_bonds")] * rb
            + c[("esol", "aromatic_proportion")] * aromatic_proportion)


def compute_features(g: MoleculeGraph) -> np.ndarray:
    """Feature vector in :data:`FEATURE_NAMES` order."""
    mw = molecular_weight(g)
    lp = logp(g)
    rb = rotatable_bonds(g)
    heavy = heavy_atom_count(g)
    arom = aromatic_atom_count(g)
    ap = arom / heavy if heavy else 0.0
    return np.array([
        mw, lp, hbd(g), hba(g), tpsa(g), g.ring_count(), arom, rb, heavy,
        log_solubility(mw, lp, rb, ap),
    ], dtype=np.float64)


def feature_dict(g: MoleculeGraph) -> dict[str, float]:
    return dict(zip(FEATURE_NAMES, compute_features(g).tolist()))


def property_indices(names=DEFAULT_PROPERTY_NAMES) -> list[int]:
    unknown = [n for n in names if n not in FEATURE_NAMES]
    if unknown:
        raise ValueError(f"unknown property names {unknown}; choose from {FEATURE_NAMES}")
    return [FEATURE_NAMES.index(n) for n in names]


# ------------------------------------------------------------- fingerprint

def fnv1a_64(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & _MASK64
    return h


def _order_code(order: int) -> str:
    return "1.5" if order == AROMATIC_BOND else str(order)


@dataclass(frozen=True)
class Fingerprint:
    bits: frozenset
    n_bits: int = FP_BITS

    def __len__(self) -> int:
        return self.n_bits

    def to_array(self) -> np.ndarray:
        arr = np.zeros(self.n_bits, dtype=np.uint8)
        arr[list(self.bits)] = 1
        return arr


def fingerprint(g: MoleculeGraph, radius: int = FP_RADIUS, n_bits: int = FP_BITS) -> Fingerprint:
    """Circular fingerprint.

    Radius-0 identifiers hash (element, aromaticity, degree, charge, H count,
    sorted bond orders). Each later round hashes the previous identifier with
    the sorted (bond order, neighbor identifier) list. An environment that
    did not grow since the previous radius contributes no new bit.
    """
    n = len(g.atoms)
    adj = g.adjacency
    ids = []
    for i, a in enumerate(g.atoms):
        orders = ",".join(sorted(_order_code(g.bonds[k].order) for _, k in adj[i]))
        sig = f"0|{a.element}|{int(a.aromatic)}|{len(adj[i])}|{a.charge}|{a.hcount}|{orders}"
        ids.append(fnv1a_64(sig.encode()))
    bits = {h % n_bits for h in ids}
    envs = [frozenset() for _ in range(n)]
    for r in range(1, radius + 1):
        new_ids = []
        new_envs = []
        for i in range(n):
            nb = sorted((_order_code(g.bonds[k].order), ids[j]) for j, k in adj[i])
            sig = f"{r}|{ids[i]}|" + ";".join(f"{o}:{h}" for o, h in nb)
            new_ids.append(fnv1a_64(sig.encode()))
            env = set(envs[i])
            for j, k in adj[i]:
                env.add(k)
                env |= envs[j]
            new_envs.append(frozenset(env))
        for i in range(n):
            if new_envs[i] != envs[i]:
                bits.add(new_ids[i] % n_bits)
        ids, envs = new_ids, new_envs
    return Fingerprint(frozenset(bits), n_bits)


def tanimoto(a: Fingerprint, b: Fingerprint) -> float:
    if a.n_bits != b.n_bits:
        raise ValueError(f"fingerprint length mismatch: {a.n_bits} vs {b.n_bits}")
    union = len(a.bits | b.bits)
    if union == 0:
        return 1.0
    return len(a.bits & b.bits) / union


# ------------------------------------------------------------------ proxies

def _window_ramp(x: float, lo: float, hi: float, fall: float) -> float:
    """1 inside [lo, hi], falling linearly to 0 at distance ``fall`` outside."""
    if lo <= x <= hi:
        return 1.0
    dist = lo - x if x < lo else x - hi
    return max(0.0, 1.0 - dist / fall)


def druglikeness_proxy(g: MoleculeGraph) -> float:
    """Geometric mean of four desirability windows (MW 300+-200, logP 2.5+-2.5,
    HBD <= 5, HBA <= 10); each decays to 0 one window half-width outside."""
    f = feature_dict(g)
    ramps = [
        _window_ramp(f["mw"], 100.0, 500.0, 200.0),
        _window_ramp(f["logp"], 0.0, 5.0, 2.5),
        _window_ramp(f["hbd"], 0.0, 5.0, 5.0),
        _window_ramp(f["hba"], 0.0, 10.0, 10.0),
    ]
    if min(ramps) == 0.0:
        return 0.0
    return float(np.exp(np.mean(np.log(ramps))))


def synthesizability_proxy(g: MoleculeGraph) -> float:
    """1 minus complexity penalties (rings > 3, heavy atoms > 35, charged or
    bracket-requiring atoms), clipped to [0, 1]."""
    from .smiles import needs_bracket

    rings = g.ring_count()
    heavy = heavy_atom_count(g)
    charged = sum(1 for a in g.atoms if a.charge)
    bracketed = sum(1 for i in range(len(g.atoms)) if needs_bracket(g, i))
    penalty = (0.1 * max(0, rings - 3) + 0.02 * max(0, heavy - 35)
               + 0.1 * charged + 0.05 * bracketed)
    return float(min(1.0, max(0.0, 1.0 - penalty)))


def solubility_desirability(logs: float) -> float:
    """Map logS onto [0, 1]: 0 at logS <= -6, 1 at logS >= 0, linear between."""
    return float(min(1.0, max(0.0, (logs + 6.0) / 6.0)))
