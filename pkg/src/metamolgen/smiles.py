"""SMILES tokenization, parsing, validation and canonicalization.

Supported grammar: organic-subset atoms (B C N O P S F Cl Br I), aromatic
lowercase atoms (b c n o p s), bracket atoms with isotope/chirality/H-count/
charge/class, bonds ``- = # : / \\``, dot-disconnected components, branches
and ring closures (``0-9`` and ``%nn``). Stereo marks are parsed and dropped.

Aromatic atoms take their lowest default valence; an aromatic atom gets one
extra valence unit reserved for its shared pi bond when there is room for
it. Aromatic bonds count as order 1 for the valence sum. Aromatic atoms must
lie on a ring.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field

PAD, START, EOS, UNK = 0, 1, 2, 3
SPECIAL_TOKENS = ("<PAD>", "<START>", "<EOS>", "<UNK>")

AROMATIC_BOND = 4  # bond order code; counts as 1.5 for mass/fingerprints

ORGANIC = {"B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I"}
AROMATIC_ORGANIC = {"b", "c", "n", "o", "p", "s"}

# Allowed neutral valences; the first entry is the default for implicit H.
VALENCES: dict[str, tuple[int, ...]] = {
    "H": (1,), "B": (3,), "C": (4,), "N": (3,), "O": (2,), "F": (1,),
    "Cl": (1,), "Br": (1,), "I": (1,), "P": (3, 5), "S": (2, 4, 6),
    "Si": (4,), "Se": (2, 4, 6), "As": (3, 5), "Li": (1,), "Na": (1,),
    "K": (1,), "Mg": (2,), "Ca": (2,), "Zn": (2,), "Al": (3,),
}
# Elements allowed in lowercase form inside brackets.
AROMATIC_BRACKET = {"b", "c", "n", "o", "p", "s", "se", "as"}
_RIGHT_OF_CARBON = {"N", "O", "P", "S", "F", "Cl", "Br", "I", "Se", "As"}

ELEMENTS = set(VALENCES)


class SmilesError(ValueError):
    """Raised for malformed or chemically impossible SMILES."""


# ---------------------------------------------------------------- vocabulary

class Vocabulary:
    """Token <-> id map with fixed reserved ids PAD=0, START=1, EOS=2, UNK=3."""

    def __init__(self, tokens=()):
        self.id_to_token: list[str] = list(SPECIAL_TOKENS)
        self.token_to_id: dict[str, int] = {t: i for i, t in enumerate(SPECIAL_TOKENS)}
        for t in tokens:
            self.add(t)

    def add(self, token: str) -> int:
        if token not in self.token_to_id:
            self.token_to_id[token] = len(self.id_to_token)
            self.id_to_token.append(token)
        return self.token_to_id[token]

    @classmethod
    def from_corpus(cls, smiles_list) -> "Vocabulary":
        seen = set()
        for s in smiles_list:
            seen.update(split_tokens(s))
        return cls(sorted(seen))

    def __len__(self) -> int:
        return len(self.id_to_token)

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_id

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.id_to_token == other.id_to_token

    def tokens(self) -> list[str]:
        """Non-reserved tokens in id order."""
        return self.id_to_token[len(SPECIAL_TOKENS):]


def split_tokens(s: str) -> list[str]:
    """Greedy longest-match split of a SMILES string into surface tokens."""
    if not s:
        raise SmilesError("empty SMILES string")
    out = []
    i, n = 0, len(s)
    while i < n:
        ch = s[i]
        if ch == "[":
            j = s.find("]", i + 1)
            if j < 0:
                raise SmilesError(f"unterminated '[' at position {i}")
            out.append(s[i:j + 1])
            i = j + 1
        elif ch == "%" and len(s[i + 1:i + 3]) == 2 and s[i + 1:i + 3].isdigit():
            out.append(s[i:i + 3])
            i += 3
        elif s.startswith("Cl", i) or s.startswith("Br", i):
            out.append(s[i:i + 2])
            i += 2
        else:
            out.append(ch)
            i += 1
    return out


@dataclass
class TokenSequence:
    ids: list[int]

    @property
    def length(self) -> int:
        return sum(1 for t in self.ids if t != PAD)

    def padded(self, size: int) -> list[int]:
        if len(self.ids) > size:
            raise ValueError(f"sequence of length {len(self.ids)} exceeds {size}")
        return self.ids + [PAD] * (size - len(self.ids))


def tokenize(s: str, vocab: Vocabulary) -> TokenSequence:
    ids = [vocab.token_to_id.get(t, UNK) for t in split_tokens(s)]
    return TokenSequence([START] + ids + [EOS])


def detokenize(seq, vocab: Vocabulary) -> str:
    ids = seq.ids if isinstance(seq, TokenSequence) else list(seq)
    unk = [i for i, t in enumerate(ids) if t == UNK]
    if unk:
        raise SmilesError(f"UNK token at positions {unk}")
    parts = []
    for t in ids:
        if t in (PAD, START, EOS):
            continue
        if not 0 <= t < len(vocab):
            raise SmilesError(f"token id {t} outside vocabulary")
        parts.append(vocab.id_to_token[t])
    return "".join(parts)


# --------------------------------------------------------------------- graph

@dataclass
class Atom:
    element: str            # capitalized symbol, e.g. "C", "Cl"
    aromatic: bool = False
    charge: int = 0
    hcount: int = 0         # total attached hydrogens (explicit or implicit)
    bracket: bool = False   # written in brackets in the source string


@dataclass
class Bond:
    a: int
    b: int
    order: int              # 1, 2, 3 or AROMATIC_BOND


@dataclass
class MoleculeGraph:
    atoms: list[Atom] = field(default_factory=list)
    bonds: list[Bond] = field(default_factory=list)
    ring_closures: dict[int, tuple[int, int]] = field(default_factory=dict)

    def __post_init__(self):
        self._adj = None

    @property
    def adjacency(self) -> list[list[tuple[int, int]]]:
        """Per atom: list of (neighbor, bond index)."""
        if self._adj is None or len(self._adj) != len(self.atoms):
            adj = [[] for _ in self.atoms]
            for k, bd in enumerate(self.bonds):
                adj[bd.a].append((bd.b, k))
                adj[bd.b].append((bd.a, k))
            self._adj = adj
        return self._adj

    def degree(self, i: int) -> int:
        return len(self.adjacency[i])

    def n_components(self) -> int:
        seen = [False] * len(self.atoms)
        count = 0
        for s in range(len(self.atoms)):
            if seen[s]:
                continue
            count += 1
            stack = [s]
            seen[s] = True
            while stack:
                u = stack.pop()
                for v, _ in self.adjacency[u]:
                    if not seen[v]:
                        seen[v] = True
                        stack.append(v)
        return count

    def ring_bonds(self) -> set[int]:
        """Indices of bonds lying on at least one cycle (non-bridges)."""
        n = len(self.atoms)
        disc = [-1] * n
        low = [0] * n
        bridges = set()
        timer = itertools.count()
        adj = self.adjacency
        for root in range(n):
            if disc[root] >= 0:
                continue
            disc[root] = low[root] = next(timer)
            stack = [(root, -1, iter(adj[root]))]
            while stack:
                u, via, it = stack[-1]
                advanced = False
                for v, k in it:
                    if k == via:
                        continue
                    if disc[v] < 0:
                        disc[v] = low[v] = next(timer)
                        stack.append((v, k, iter(adj[v])))
                        advanced = True
                        break
                    low[u] = min(low[u], disc[v])
                if advanced:
                    continue
                stack.pop()
                if stack:
                    p = stack[-1][0]
                    low[p] = min(low[p], low[u])
                    if low[u] > disc[p]:
                        bridges.add(via)
        return set(range(len(self.bonds))) - bridges

    def ring_atoms(self) -> set[int]:
        out = set()
        for k in self.ring_bonds():
            out.add(self.bonds[k].a)
            out.add(self.bonds[k].b)
        return out

    def ring_count(self) -> int:
        """Cyclomatic number: bonds - atoms + components."""
        if not self.atoms:
            return 0
        return len(self.bonds) - len(self.atoms) + self.n_components()


_BOND_SYMBOLS = {"-": 1, "=": 2, "#": 3, ":": AROMATIC_BOND, "/": 1, "\\": 1}


def _bond_valence(order: int) -> int:
    return 1 if order == AROMATIC_BOND else order


def _allowed_valences(element: str, charge: int) -> tuple[int, ...]:
    base = VALENCES[element]
    if charge == 0:
        return base
    if element in _RIGHT_OF_CARBON:
        return tuple(v + charge for v in base if v + charge >= 0)
    if element in ("C", "Si"):
        return tuple(v - abs(charge) for v in base if v - abs(charge) >= 0)
    return tuple(v - charge for v in base if v - charge >= 0)


def implicit_hydrogens(element: str, aromatic: bool, bond_sum: int) -> int:
    """Implicit H count for an unbracketed organic-subset atom."""
    vals = VALENCES[element]
    if aromatic:
        return max(0, vals[0] - bond_sum - 1)
    for v in vals:
        if v >= bond_sum:
            return v - bond_sum
    return 0


def _parse_bracket(body: str, pos: int) -> Atom:
    i, n = 0, len(body)
    while i < n and body[i].isdigit():  # isotope, ignored
        i += 1
    j = i
    if i < n and body[i].isalpha():
        two = body[i:i + 2]
        if two in ELEMENTS or two in AROMATIC_BRACKET:
            j = i + 2
        else:
            j = i + 1
    sym = body[i:j]
    if not sym:
        raise SmilesError(f"bracket atom without element at position {pos}")
    aromatic = sym.islower()
    element = sym.capitalize()
    if aromatic and sym not in AROMATIC_BRACKET:
        raise SmilesError(f"unknown aromatic element {sym!r} at position {pos}")
    if element not in ELEMENTS:
        raise SmilesError(f"unknown element {sym!r} at position {pos}")
    i = j
    while i < n and body[i] == "@":
        i += 1
    h = 0
    if i < n and body[i] == "H":
        i += 1
        h = 1
        k = i
        while i < n and body[i].isdigit():
            i += 1
        if i > k:
            h = int(body[k:i])
    charge = 0
    if i < n and body[i] in "+-":
        sign = 1 if body[i] == "+" else -1
        i += 1
        if i < n and body[i].isdigit():
            k = i
            while i < n and body[i].isdigit():
                i += 1
            charge = sign * int(body[k:i])
        else:
            charge = sign
            while i < n and body[i] == ("+" if sign > 0 else "-"):
                charge += sign
                i += 1
    if i < n and body[i] == ":":
        i += 1
        k = i
        while i < n and body[i].isdigit():
            i += 1
        if i == k:
            raise SmilesError(f"empty atom class at position {pos}")
    if i != n:
        raise SmilesError(f"malformed bracket atom [{body}] at position {pos}")
    return Atom(element, aromatic, charge, h, bracket=True)


def parse(s: str) -> MoleculeGraph:
    """Parse SMILES into a :class:`MoleculeGraph` or raise :class:`SmilesError`."""
    if not isinstance(s, str):
        raise SmilesError("SMILES must be a string")
    if not s:
        raise SmilesError("empty SMILES string")
    g = MoleculeGraph()
    pairs: set[tuple[int, int]] = set()
    open_rings: dict[int, tuple[int, int | None]] = {}
    closure_log: dict[int, tuple[int, int]] = {}
    branch_stack: list[int] = []
    prev: int | None = None
    pending_bond: int | None = None
    i, n = 0, len(s)
    ring_serial = 0

    def add_bond(a: int, b: int, order: int | None, where: int):
        if a == b:
            raise SmilesError(f"self-bond on atom {a} at position {where}")
        key = (min(a, b), max(a, b))
        if key in pairs:
            raise SmilesError(f"duplicate bond between atoms {a} and {b} at position {where}")
        pairs.add(key)
        if order is None:
            order = AROMATIC_BOND if g.atoms[a].aromatic and g.atoms[b].aromatic else 1
        g.bonds.append(Bond(a, b, order))

    while i < n:
        ch = s[i]
        if ch == "(":
            if prev is None:
                raise SmilesError(f"branch opened before any atom at position {i}")
            if pending_bond is not None:
                raise SmilesError(f"bond symbol before '(' at position {i}")
            if i + 1 < n and s[i + 1] == ")":
                raise SmilesError(f"empty branch at position {i}")
            branch_stack.append(prev)
            i += 1
            continue
        if ch == ")":
            if not branch_stack:
                raise SmilesError(f"unbalanced ')' at position {i}")
            if pending_bond is not None:
                raise SmilesError(f"dangling bond before ')' at position {i}")
            prev = branch_stack.pop()
            i += 1
            continue
        if ch in _BOND_SYMBOLS:
            if prev is None:
                raise SmilesError(f"bond {ch!r} with no preceding atom at position {i}")
            if pending_bond is not None:
                raise SmilesError(f"two consecutive bond symbols at position {i}")
            pending_bond = _BOND_SYMBOLS[ch]
            i += 1
            continue
        if ch == ".":
            if prev is None or pending_bond is not None or branch_stack:
                raise SmilesError(f"misplaced '.' at position {i}")
            prev = None
            i += 1
            continue
        if ch.isdigit() or ch == "%":
            if prev is None:
                raise SmilesError(f"ring closure with no preceding atom at position {i}")
            if ch == "%":
                label = s[i + 1:i + 3]
                if len(label) != 2 or not label.isdigit():
                    raise SmilesError(f"malformed '%nn' ring label at position {i}")
                num = int(label)
                i += 3
            else:
                num = int(ch)
                i += 1
            if num in open_rings:
                other, order = open_rings.pop(num)
                if order is not None and pending_bond is not None and order != pending_bond:
                    raise SmilesError(f"conflicting ring bond orders for label {num}")
                add_bond(other, prev, pending_bond if pending_bond is not None else order, i)
                closure_log[ring_serial] = (other, prev)
                ring_serial += 1
            else:
                open_rings[num] = (prev, pending_bond)
            pending_bond = None
            continue
        # atoms
        if ch == "[":
            j = s.find("]", i + 1)
            if j < 0:
                raise SmilesError(f"unterminated '[' at position {i}")
            atom = _parse_bracket(s[i + 1:j], i)
            step = j + 1 - i
        elif s.startswith("Cl", i) or s.startswith("Br", i):
            atom = Atom(s[i:i + 2])
            step = 2
        elif ch in ORGANIC:
            atom = Atom(ch)
            step = 1
        elif ch in AROMATIC_ORGANIC:
            atom = Atom(ch.upper(), aromatic=True)
            step = 1
        else:
            raise SmilesError(f"unexpected character {ch!r} at position {i}")
        g.atoms.append(atom)
        idx = len(g.atoms) - 1
        if prev is not None:
            add_bond(prev, idx, pending_bond, i)
        elif pending_bond is not None:
            raise SmilesError(f"bond to nonexistent prior atom at position {i}")
        pending_bond = None
        prev = idx
        i += step

    if pending_bond is not None:
        raise SmilesError("dangling bond at end of string")
    if prev is None:
        raise SmilesError("trailing '.' with no following atom")
    if branch_stack:
        raise SmilesError("unbalanced '(': branch never closed")
    if open_rings:
        raise SmilesError(f"unclosed ring label(s) {sorted(open_rings)}")
    g.ring_closures = closure_log
    _finish(g)
    return g


def _finish(g: MoleculeGraph) -> None:
    """Assign implicit hydrogens, then check valences and aromatic ring membership."""
    bond_sum = [0] * len(g.atoms)
    for bd in g.bonds:
        v = _bond_valence(bd.order)
        bond_sum[bd.a] += v
        bond_sum[bd.b] += v
    ring_atoms = g.ring_atoms() if any(a.aromatic for a in g.atoms) else set()
    for idx, atom in enumerate(g.atoms):
        if atom.aromatic and idx not in ring_atoms:
            raise SmilesError(f"aromatic atom {idx} ({atom.element.lower()}) is not in a ring")
        if not atom.bracket:
            atom.hcount = implicit_hydrogens(atom.element, atom.aromatic, bond_sum[idx])
        allowed = _allowed_valences(atom.element, atom.charge)
        used = bond_sum[idx] + atom.hcount
        if not allowed or used > max(allowed):
            raise SmilesError(
                f"valence overflow on atom {idx} ({atom.element}): {used} > "
                f"{max(allowed) if allowed else 0}"
            )


def validate(s: str) -> bool:
    try:
        parse(s)
    except SmilesError:
        return False
    except Exception:  # parser totality: anything unexpected means invalid
        return False
    return True


def try_parse(s: str) -> MoleculeGraph | None:
    try:
        return parse(s)
    except Exception:
        return None


# ---------------------------------------------------------- canonicalization

def _base_invariants(g: MoleculeGraph) -> list[tuple]:
    return [
        (a.element, a.aromatic, g.degree(i), a.charge, a.hcount)
        for i, a in enumerate(g.atoms)
    ]


def _dense_ranks(keys: list) -> list[int]:
    order = sorted(set(keys))
    lookup = {k: r for r, k in enumerate(order)}
    return [lookup[k] for k in keys]


def _refine(g: MoleculeGraph, ranks: list[int], rounds: int = 10) -> list[int]:
    adj = g.adjacency
    for _ in range(rounds):
        keys = [
            (ranks[i], tuple(sorted((ranks[j], g.bonds[k].order) for j, k in adj[i])))
            for i in range(len(ranks))
        ]
        new = _dense_ranks(keys)
        if new == ranks:
            break
        ranks = new
    return ranks


def _needs_bracket(a: Atom, bond_sum: int) -> bool:
    if a.charge != 0 or a.element not in ORGANIC:
        return True
    if a.aromatic and a.element.lower() not in AROMATIC_ORGANIC:
        return True
    return implicit_hydrogens(a.element, a.aromatic, bond_sum) != a.hcount


def needs_bracket(g: MoleculeGraph, i: int) -> bool:
    bs = sum(_bond_valence(g.bonds[k].order) for _, k in g.adjacency[i])
    return _needs_bracket(g.atoms[i], bs)


def _atom_symbol(g: MoleculeGraph, i: int) -> str:
    a = g.atoms[i]
    sym = a.element.lower() if a.aromatic else a.element
    if not needs_bracket(g, i):
        return sym
    text = "[" + sym
    if a.hcount:
        text += "H" if a.hcount == 1 else f"H{a.hcount}"
    if a.charge:
        sign = "+" if a.charge > 0 else "-"
        text += sign if abs(a.charge) == 1 else f"{sign}{abs(a.charge)}"
    return text + "]"


def _bond_symbol(g: MoleculeGraph, k: int) -> str:
    bd = g.bonds[k]
    both_aromatic = g.atoms[bd.a].aromatic and g.atoms[bd.b].aromatic
    if bd.order == AROMATIC_BOND:
        return "" if both_aromatic else ":"
    if bd.order == 1:
        return "-" if both_aromatic else ""
    return "=" if bd.order == 2 else "#"


def write_smiles(g: MoleculeGraph, ranks: list[int] | None = None, rng: random.Random | None = None) -> str:
    """Emit SMILES by DFS. Neighbors are visited in ``ranks`` order, or in a
    random order drawn from ``rng`` (used for re-spelling tests)."""
    n = len(g.atoms)
    if n == 0:
        return ""
    if ranks is None:
        ranks = list(range(n))
        if rng is not None:
            rng.shuffle(ranks)
    adj = g.adjacency
    nbr_order = [sorted(adj[i], key=lambda jk: ranks[jk[0]]) for i in range(n)]

    # First pass: spanning tree, ring-closure bonds and their open/close sites.
    visited = [False] * n
    tree_children: list[list[tuple[int, int]]] = [[] for _ in range(n)]
    closures_at: list[list[int]] = [[] for _ in range(n)]  # bond ids, in order of appearance
    used_bonds: set[int] = set()
    roots = []
    for start in sorted(range(n), key=lambda i: ranks[i]):
        if visited[start]:
            continue
        roots.append(start)
        visited[start] = True
        stack = [(start, iter(nbr_order[start]))]
        while stack:
            u, it = stack[-1]
            moved = False
            for v, k in it:
                if k in used_bonds:
                    continue
                used_bonds.add(k)
                if visited[v]:
                    closures_at[v].append(k)   # opened at the earlier atom v
                    closures_at[u].append(k)   # closed here
                else:
                    visited[v] = True
                    tree_children[u].append((v, k))
                    stack.append((v, iter(nbr_order[v])))
                    moved = True
                    break
            if not moved:
                stack.pop()

    # Second pass: emission with ring-label allocation.
    free_labels: list[int] = []
    next_label = itertools.count(1)
    label_of: dict[int, int] = {}
    out: list[str] = []

    def label_text(num: int) -> str:
        return str(num) if num < 10 else f"%{num:02d}"

    def take_label() -> int:
        if free_labels:
            free_labels.sort()
            return free_labels.pop(0)
        return next(next_label)

    def emit(u: int):
        work = [("atom", u, None)]
        while work:
            kind, x, k = work.pop()
            if kind == "text":
                out.append(x)
                continue
            if k is not None:
                out.append(_bond_symbol(g, k))
            out.append(_atom_symbol(g, x))
            for rk in closures_at[x]:
                if rk in label_of:
                    num = label_of.pop(rk)
                    out.append(_bond_symbol(g, rk) + label_text(num))
                    free_labels.append(num)
                else:
                    num = take_label()
                    label_of[rk] = num
                    out.append(_bond_symbol(g, rk) + label_text(num))
            kids = tree_children[x]
            tail = []
            for v, kb in kids[:-1]:
                tail.append(("text", "(", None))
                tail.append(("atom", v, kb))
                tail.append(("text", ")", None))
            if kids:
                v, kb = kids[-1]
                tail.append(("atom", v, kb))
            work.extend(reversed(tail))

    for r_i, root in enumerate(roots):
        if r_i:
            out.append(".")
        emit(root)
    return "".join(out)


_MAX_TIE_LEAVES = 256


def canonical_ranks(g: MoleculeGraph) -> list[int]:
    ranks = _refine(g, _dense_ranks(_base_invariants(g)))
    return ranks


def canonical_form(g: MoleculeGraph) -> str:
    """Deterministic SMILES for ``g``, independent of input atom order.

    Atom ranks come from iterative neighborhood refinement seeded with
    (element, aromaticity, degree, charge, H count). Remaining ties are broken
    by trying each member of the lowest tied class and keeping the
    lexicographically smallest emission.
    """
    if not g.atoms:
        return ""
    base = canonical_ranks(g)
    best: list[str | None] = [None]
    leaves = [0]

    def search(ranks: list[int]):
        if leaves[0] >= _MAX_TIE_LEAVES and best[0] is not None:
            return
        counts: dict[int, int] = {}
        for r in ranks:
            counts[r] = counts.get(r, 0) + 1
        tied = [r for r, c in counts.items() if c > 1]
        if not tied:
            leaves[0] += 1
            s = write_smiles(g, ranks)
            if best[0] is None or s < best[0]:
                best[0] = s
            return
        r0 = min(tied)
        members = [i for i, r in enumerate(ranks) if r == r0]
        for m in members:
            # Give one member a strictly smaller rank, then re-refine.
            split = [2 * r + (0 if i == m else 1) if r == r0 else 2 * r + 1 for i, r in enumerate(ranks)]
            search(_refine(g, _dense_ranks(split)))

    search(base)
    return best[0]


def canonicalize(s: str) -> str:
    return canonical_form(parse(s))


def random_spelling(g: MoleculeGraph, rng: random.Random) -> str:
    """A valid SMILES for ``g`` with a random traversal order."""
    return write_smiles(g, rng=rng)
