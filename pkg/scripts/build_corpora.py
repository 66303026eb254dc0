"""Regenerate the corpora shipped in src/metamolgen/data/."""

from pathlib import Path

from metamolgen.corpus import REFERENCE_MOLECULES, synthesize_corpus

DATA = Path(__file__).resolve().parents[1] / "src" / "metamolgen" / "data"


def write(path: Path, header: str, smiles: list[str]) -> None:
    path.write_text(f"# {header}\n" + "\n".join(smiles) + "\n", encoding="utf-8")


def main() -> None:
    refs = list(REFERENCE_MOLECULES.values())
    extra = [s for s in synthesize_corpus(600, seed=1) if s not in refs]
    write(DATA / "corpus_500.smi", "reference drugs + fragment-grammar molecules (seed 1)",
          refs + extra[: 500 - len(refs)])
    write(DATA / "corpus_1000.smi", "fragment-grammar molecules (seed 0)",
          synthesize_corpus(1000, seed=0))


if __name__ == "__main__":
    main()
