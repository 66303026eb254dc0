"""Generation-quality metrics, min-max normalization and the Overall Score."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .descriptors import (FEATURE_NAMES, compute_features, druglikeness_proxy, fingerprint,
                          hba, hbd, solubility_desirability,
                          synthesizability_proxy, tanimoto)
from .smiles import MoleculeGraph, canonical_form, try_parse

# Column keys of the model-comparison table, in score order.
SCORE_METRICS = ("valid", "unique", "time_h", "diversity", "druglikeness",
                 "synthesizability", "solubility")
LOWER_BETTER = frozenset({"time_h"})

MAX_EXACT_PAIRS = 10**6
SAMPLED_PAIRS = 1000
_LOGS = FEATURE_NAMES.index("logs")


class MetricError(ValueError):
    pass


def _parsed(generated: Sequence[str]) -> list[tuple[str, MoleculeGraph]]:
    out = []
    for s in generated:
        g = try_parse(s)
        if g is not None:
            out.append((s, g))
    return out


def validity(generated: Sequence[str]) -> float:
    if not generated:
        raise MetricError("validity of an empty list is undefined")
    return len(_parsed(generated)) / len(generated)


def _canonical_valid(generated) -> list[str]:
    forms = [canonical_form(g) for _, g in _parsed(generated)]
    if not forms:
        raise MetricError("no valid molecules")
    return forms


def uniqueness(generated: Sequence[str]) -> float:
    forms = _canonical_valid(generated)
    return len(set(forms)) / len(forms)


def canonical_set(smiles: Sequence[str]) -> set[str]:
    return {canonical_form(g) for _, g in _parsed(smiles)}


def novelty(generated: Sequence[str], train_forms: set[str]) -> float:
    """Share of distinct valid canonical forms absent from ``train_forms``.

    ``train_forms`` must already hold canonical forms (see ``canonical_set``).
    """
    distinct = set(_canonical_valid(generated))
    return len(distinct - train_forms) / len(distinct)


def diversity(generated: Sequence[str], seed: int = 0) -> float:
    """1 - mean pairwise Tanimoto over distinct valid molecules."""
    graphs: dict[str, MoleculeGraph] = {}
    for _, g in _parsed(generated):
        graphs.setdefault(canonical_form(g), g)
    if len(graphs) < 2:
        raise MetricError("diversity needs at least two distinct valid molecules")
    fps = [fingerprint(graphs[k]) for k in sorted(graphs)]
    n = len(fps)
    n_pairs = n * (n - 1) // 2
    if n_pairs <= MAX_EXACT_PAIRS:
        sims = [tanimoto(fps[i], fps[j]) for i in range(n) for j in range(i + 1, n)]
    else:
        rng = np.random.default_rng(seed)
        sims = []
        while len(sims) < SAMPLED_PAIRS:
            i, j = rng.integers(n, size=2)
            if i != j:
                sims.append(tanimoto(fps[i], fps[j]))
    return 1.0 - float(np.mean(sims))


def property_stats(generated: Sequence[str], target: Mapping[str, float]) -> dict[str, dict[str, float]]:
    """Per-property MAD and population SD of signed deviations from ``target``."""
    graphs = [g for _, g in _parsed(generated)]
    if not graphs:
        raise MetricError("no valid molecules")
    F = np.stack([compute_features(g) for g in graphs])
    out = {}
    for name, t in target.items():
        dev = F[:, FEATURE_NAMES.index(name)] - float(t)
        out[name] = {"mad": float(np.abs(dev).mean()), "sd": float(dev.std())}
    return out


def cgsr(generated: Sequence[str], target: int, prop: str = "hbd") -> float:
    """Fraction of valid molecules whose HBD (or HBA) equals ``target``."""
    fn = {"hbd": hbd, "hba": hba}[prop]
    graphs = [g for _, g in _parsed(generated)]
    if not graphs:
        raise MetricError("no valid molecules")
    return sum(fn(g) == int(target) for g in graphs) / len(graphs)


def mean_scores(generated: Sequence[str]) -> dict[str, float]:
    """Mean druglikeness, synthesizability and solubility desirability over valid molecules."""
    graphs = [g for _, g in _parsed(generated)]
    if not graphs:
        raise MetricError("no valid molecules")
    return {
        "druglikeness": float(np.mean([druglikeness_proxy(g) for g in graphs])),
        "synthesizability": float(np.mean([synthesizability_proxy(g) for g in graphs])),
        "solubility": float(np.mean([solubility_desirability(compute_features(g)[_LOGS]) for g in graphs])),
    }


# ------------------------------------------------------------ score arithmetic

def min_max_normalize(values: Sequence[float], lower_better: bool = False) -> list[float]:
    xs = [float(v) for v in values]
    lo, hi = min(xs), max(xs)
    if hi == lo:
        return [0.5] * len(xs)
    if lower_better:
        return [(hi - x) / (hi - lo) for x in xs]
    return [(x - lo) / (hi - lo) for x in xs]


@dataclass
class NormalizationBounds:
    metric: str
    min: float
    max: float
    lower_better: bool


def overall_score(rows: Sequence[Mapping[str, float]]) -> tuple[list[float], list[NormalizationBounds]]:
    """Unweighted mean of the seven min-max normalized metrics, per row."""
    if not rows:
        raise MetricError("no models to score")
    for i, r in enumerate(rows):
        for m in SCORE_METRICS:
            if m not in r or r[m] is None:
                name = r.get("name", f"row {i}")
                raise MetricError(f"{name}: missing metric {m!r}")
    cols, bounds = [], []
    for m in SCORE_METRICS:
        vals = [float(r[m]) for r in rows]
        cols.append(min_max_normalize(vals, m in LOWER_BETTER))
        bounds.append(NormalizationBounds(m, min(vals), max(vals), m in LOWER_BETTER))
    scores = [float(np.mean([c[i] for c in cols])) for i in range(len(rows))]
    return scores, bounds


def score_comparison(rows: Sequence[Mapping]) -> list[dict]:
    scores, bounds = overall_score(rows)
    out = []
    for r, s in zip(rows, scores):
        d = dict(r)
        d["overall_score"] = s
        out.append(d)
    return out


# ------------------------------------------------------------------ reports

@dataclass
class MetricReport:
    n_generated: int
    n_valid: int
    valid: float                   # percentages
    unique: float | None = None
    novelty: float | None = None
    time_h: float | None = None
    diversity: float | None = None
    druglikeness: float | None = None
    synthesizability: float | None = None
    solubility: float | None = None
    overall_score: float | None = None
    property_deviation: dict | None = None
    cgsr: dict | None = None
    undefined: list[str] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def evaluate(generated: Sequence[str], train_smiles: Sequence[str] = (),
             targets: Mapping[str, float] | None = None, time_h: float | None = None,
             seed: int = 0) -> MetricReport:
    """Full single-run report. Metrics needing valid molecules become None when undefined."""
    rep = MetricReport(len(generated), 0, 0.0, time_h=time_h)
    if generated:
        rep.n_valid = len(_parsed(generated))
        rep.valid = 100.0 * rep.n_valid / len(generated)
    if rep.n_valid == 0:
        rep.undefined = ["unique", "novelty", "diversity", "druglikeness", "synthesizability",
                         "solubility", "overall_score"]
        return rep
    rep.unique = 100.0 * uniqueness(generated)
    rep.novelty = 100.0 * novelty(generated, canonical_set(train_smiles))
    try:
        rep.diversity = diversity(generated, seed)
    except MetricError:
        rep.undefined.append("diversity")
    for k, v in mean_scores(generated).items():
        setattr(rep, k, v)
    if targets:
        rep.property_deviation = property_stats(generated, targets)
        rep.cgsr = {p: cgsr(generated, int(round(targets[p])), p)
                    for p in ("hbd", "hba") if p in targets}
    if rep.diversity is not None:
        row = {"valid": rep.valid, "unique": rep.unique, "time_h": time_h or 0.0,
               "diversity": rep.diversity, "druglikeness": rep.druglikeness,
               "synthesizability": rep.synthesizability, "solubility": rep.solubility}
        # a lone run has zero range on every column
        rep.overall_score = overall_score([row])[0][0]
    return rep
