"""The ten acceptance criteria, one test each.

Every test prints a single ``[criterion N] PASS|FAIL ...`` line to the
terminal. Run the file directly (``python tests/test_acceptance.py``) to
get only those lines.
"""

import json
import sys
import time
import zlib
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from metamolgen import checkpoint as C
from metamolgen import cli, meta
from metamolgen import model as M
from metamolgen import theory
from metamolgen.corpus import bundled_corpus
from metamolgen.diffnum import softmax
from metamolgen.metrics import overall_score
from metamolgen.smiles import Vocabulary, detokenize, tokenize, try_parse, validate

from benchmark_rows import PRINTED, ROWS, TOLERANCE
from gradcheck import PRIMITIVES, fd_relative_error, run_primitive_checks

# pinned tolerances
GRAD_RTOL = 1e-4
REPTILE_ATOL = 1e-12
C1_SECONDS = 1.0
C5_SECONDS = 600.0
C7_SECONDS = 900.0
C7_LOSS_RATIO = 0.5
C7_VALIDITY_GAIN = 20.0
C8_WINS = 4
C9_SIGMAS = 3.0


def _line(n, ok, detail):
    return f"[criterion {n:2d}] {'PASS' if ok else 'FAIL'}  {detail}"


# ----------------------------------------------------------------- criteria

def criterion_1():
    t0 = time.perf_counter()
    scores, _ = overall_score(ROWS)
    secs = time.perf_counter() - t0
    diffs = {r["name"]: s - PRINTED[r["name"]] for r, s in zip(ROWS, scores)}
    bad = {k: round(v, 4) for k, v in diffs.items() if abs(v) > TOLERANCE}
    ok = not bad and secs < C1_SECONDS
    got = ", ".join(f"{r['name']}={s:.4f}" for r, s in zip(ROWS, scores))
    return ok, f"overall scores {got}; rows off by > {TOLERANCE}: {bad or 'none'}"


def criterion_2():
    scores, _ = overall_score(ROWS[-1:])
    return scores == [0.5], f"single-model score {scores[0]!r}"


def criterion_3():
    worst = {}
    for name in PRIMITIVES:
        worst[name] = run_primitive_checks(name, n_cases=100, seed=zlib.crc32(name.encode()))
    cfg = M.ModelConfig(vocab_size=9, encoder_hidden=6, latent=4, property_hidden=5, embed=4,
                        hidden=4, dropout=0.0)
    rng = np.random.default_rng(123)
    params = M.init_params(cfg, rng)
    batch = M.Batch(rng.normal(size=(5, 10)), M.pad_sequences([[1, 4, 5, 6, 2], [1, 7, 2]]),
                    rng.normal(size=(2, 4)))
    names = sorted(params)
    picks = []
    for _ in range(10):
        name = names[rng.integers(len(names))]
        picks.append((name, tuple(int(rng.integers(s)) for s in params[name].shape)))
    e2e = max(fd_relative_error(lambda t, P: M.reconstruction_loss(t, P, cfg, batch), params,
                                entries=picks).values())
    top = max(worst, key=worst.get)
    ok = max(worst.values()) < GRAD_RTOL and e2e < GRAD_RTOL
    return ok, (f"{len(PRIMITIVES)} primitives x 100 cases, worst {top} {worst[top]:.2e}; "
                f"end-to-end 10 entries {e2e:.2e}")


def criterion_4():
    def lg(phi, task):
        return 0.5 * float((phi["t"] - 1.0) ** 2), {"t": phi["t"] - 1.0}

    theta = {"t": np.array(0.0)}
    k1 = float(meta.inner_adapt(theta, None, 1, 0.5, lg)[0]["t"])
    k2 = float(meta.inner_adapt(theta, None, 2, 0.5, lg)[0]["t"])
    u1 = float(meta.reptile_update(theta, [{"t": np.array(0.5)}], 1.0)["t"])
    u2 = float(meta.reptile_update(theta, [{"t": np.array(0.4)}, {"t": np.array(0.6)}], 0.5)["t"])
    errs = [abs(k1 - 0.5), abs(k2 - 0.75), abs(u1 - 0.5), abs(u2 - 0.25)]
    return max(errs) <= REPTILE_ATOL, f"k=1 {k1}, k=2 {k2}, updates {u1}, {u2}"


def criterion_5():
    t0 = time.perf_counter()
    rep = theory.run_suite()
    secs = time.perf_counter() - t0
    by = {c["name"]: c for c in rep["checks"]}
    need = ["theorem1_monotone_descent", "theorem5_unbiased_minibatch", "theorem2_variance_reduction",
            "theorem3_conditioning", "theorem6_sgd_rate", "theorem4_generalization_proxy"]
    ok = rep["all_passed"] and all(by[n]["passed"] for n in need) and secs < C5_SECONDS
    s = by["theorem6_sgd_rate"]["stats"]["slope"]
    w = by["theorem4_generalization_proxy"]["stats"]["wins"]
    v = by["theorem2_variance_reduction"]["stats"]["ratio"]
    return ok, (f"failures {rep['failures'] or 'none'}; variance ratio {v:.4f}, SGD slope {s:.3f}, "
                f"generalization wins {w}/20; {secs:.0f}s")


def criterion_6():
    corpus = bundled_corpus("corpus_500.smi")
    all_valid = all(validate(s) for s in corpus)
    invalid = ["C(C", "C1CC2", "C(C)(C)(C)(C)C"]
    rejected = not any(validate(s) for s in invalid)
    vocab = Vocabulary.from_corpus(corpus)
    round_trip = all(detokenize(tokenize(s, vocab), vocab) == s for s in corpus)
    rng = np.random.default_rng(2024)
    crashes = 0
    for _ in range(100_000):
        n = int(rng.integers(0, 65))
        text = rng.integers(0, 256, size=n, dtype=np.uint8).tobytes().decode("latin-1")
        try:
            try_parse(text)
        except Exception:
            crashes += 1
    ok = all_valid and rejected and round_trip and crashes == 0
    return ok, (f"corpus valid {all_valid}, invalid rejected {rejected}, round trip {round_trip}, "
                f"fuzz crashes {crashes}/100000")


def criterion_7():
    corp = bundled_corpus("corpus_1000.smi")
    vocab = Vocabulary.from_corpus(corp)
    data = meta.build_dataset(corp, vocab, meta.DatasetStats.fit(meta.raw_features(corp)))
    mcfg = meta.MetaConfig(inner_steps=3, meta_lr=0.001, epochs=20, seed=0)
    cfg = M.ModelConfig(vocab_size=len(vocab))
    t0 = time.perf_counter()
    p0 = M.init_params(cfg, np.random.default_rng(5))
    res = meta.meta_train(data, mcfg, cfg, params=p0)
    q = res.query_losses
    initial, final = float(q[:5].mean()), float(q[-10:].mean())
    valid = {}
    for name, p in (("untrained", p0), ("trained", res.params)):
        rng = np.random.default_rng(11)
        ctx = data.features[rng.choice(len(data), 12, replace=False)]
        out = M.generate(p, cfg, vocab, ctx, None, 500, M.SamplerConfig(seed=3))
        valid[name] = 100.0 * np.mean([validate(s) for s in out])
    secs = time.perf_counter() - t0
    gain = valid["trained"] - valid["untrained"]
    ok = final < C7_LOSS_RATIO * initial and gain >= C7_VALIDITY_GAIN and secs < C7_SECONDS
    return ok, (f"{len(q)} iterations, query loss {initial:.3f} -> {final:.3f} "
                f"({final / initial:.2f}x); validity {valid['untrained']:.1f}% -> "
                f"{valid['trained']:.1f}% (+{gain:.1f} pp); {secs:.0f}s")


def criterion_8():
    corp = bundled_corpus("corpus_500.smi")
    vocab = Vocabulary.from_corpus(corp)
    stats = meta.DatasetStats.fit(meta.raw_features(corp))
    arms = {"std": meta.build_dataset(corp, vocab, stats), "raw": meta.build_dataset(corp, vocab, None)}
    cfg = M.ModelConfig(vocab_size=len(vocab), encoder_hidden=64, latent=32, property_hidden=16,
                        embed=32, hidden=32)
    wins, pairs = 0, []
    for seed in range(5):
        v = {}
        for arm, data in arms.items():
            mcfg = meta.MetaConfig(inner_steps=2, tasks_per_update=4, seed=seed, meta_lr=0.003)
            q = meta.meta_train(data, mcfg, cfg, iterations=120).query_losses
            v[arm] = meta.last_window_variance(q, 50)
        wins += v["std"] < v["raw"]
        pairs.append(f"{v['std']:.4f}/{v['raw']:.4f}")
    return wins >= C8_WINS, f"std<raw in {wins}/5 seed pairs (std/raw variance: {', '.join(pairs)})"


def criterion_9():
    rng = np.random.default_rng(0)
    logits = rng.normal(size=(200, 33)) * 2
    greedy = M.sample_tokens(logits, 1.0, rng, greedy=True)
    exact = all(np.array_equal(M.sample_tokens(logits, t, rng), greedy) for t in (0.0, 1e-7, 1e-9))
    worst_z = 0.0
    n = 10_000
    for tau in (0.5, 1.0, 2.0):
        z = np.array([1.0, 0.2, -0.5, 0.0])
        p = softmax(z / tau)
        draws = M.sample_tokens(np.tile(z, (n, 1)), tau, np.random.default_rng(int(tau * 10)))
        for j in range(len(z)):
            f = float(np.mean(draws == j))
            worst_z = max(worst_z, abs(f - p[j]) / np.sqrt(p[j] * (1 - p[j]) / n))
    ok = exact and worst_z < C9_SIGMAS
    return ok, f"greedy == tau->0: {exact}; worst frequency deviation {worst_z:.2f} sigma"


def criterion_10(tmp: Path):
    corpus = tmp / "corpus.smi"
    corpus.write_text("\n".join(bundled_corpus("corpus_500.smi")[:60]) + "\n", encoding="utf-8")
    cfg = tmp / "cfg.json"
    cfg.write_text(json.dumps({
        "corpus": str(corpus), "iterations": 4, "context_size": 6,
        "meta": {"molecules_per_task": 8, "tasks_per_update": 2, "inner_steps": 1},
        "model": {"encoder_hidden": 16, "latent": 8, "property_hidden": 8, "embed": 8, "hidden": 8},
    }), encoding="utf-8")
    files = {}
    for run in ("a", "b"):
        d = tmp / run
        d.mkdir()
        ck = d / "m.mmgn"
        cli.main(["train", "--config", str(cfg), "--out", str(ck), "--trajectory", str(d / "m.csv")])
        cli.main(["generate", "--checkpoint", str(ck), "--count", "20", "--max-length", "30",
                  "--seed", "1", "--out", str(d / "gen.txt")])
        cli.main(["evaluate", "--generated", str(d / "gen.txt"), "--train-corpus", str(corpus),
                  "--out", str(d / "report.json")])
        files[run] = {n: (d / n).read_bytes() for n in ("m.mmgn", "m.csv", "gen.txt", "report.json")}
    reruns = all(files["a"][n] == files["b"][n] for n in files["a"])
    loaded = C.load(tmp / "a" / "m.mmgn")
    resaved = C.to_bytes(loaded) == files["a"]["m.mmgn"]
    bad = bytearray(files["a"]["m.mmgn"])
    bad[len(bad) // 2] ^= 0x10
    try:
        C.from_bytes(bytes(bad))
        crc_rejects = False
    except C.CheckpointError as exc:
        crc_rejects = "CRC" in str(exc)
    ok = reruns and resaved and crc_rejects
    return ok, f"reruns byte-identical {reruns}; save-load-save identical {resaved}; corruption rejected {crc_rejects}"


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6,
            criterion_7, criterion_8, criterion_9, criterion_10]


# -------------------------------------------------------------------- tests

def _run(n, capsys, *args):
    ok, detail = CRITERIA[n - 1](*args)
    with capsys.disabled():
        print("\n" + _line(n, ok, detail), flush=True)
    assert ok, detail


def test_criterion_1_overall_score_reproduction(capsys):
    _run(1, capsys)


def test_criterion_2_zero_range_rule(capsys):
    _run(2, capsys)


def test_criterion_3_gradient_correctness(capsys):
    _run(3, capsys)


def test_criterion_4_reptile_arithmetic(capsys):
    _run(4, capsys)


@pytest.mark.slow
def test_criterion_5_theorem_suite(capsys):
    _run(5, capsys)


def test_criterion_6_parser_suite(capsys):
    _run(6, capsys)


@pytest.mark.slow
def test_criterion_7_desk_scale_training(capsys):
    _run(7, capsys)


@pytest.mark.slow
def test_criterion_8_normalization_ablation(capsys):
    _run(8, capsys)


def test_criterion_9_sampling_contract(capsys):
    _run(9, capsys)


def test_criterion_10_determinism_and_persistence(capsys, tmp_path, monkeypatch):
    monkeypatch.delenv("MMGN_SEED", raising=False)
    _run(10, capsys, tmp_path)


if __name__ == "__main__":
    import tempfile

    failed = 0
    for i, fn in enumerate(CRITERIA, 1):
        if i == 10:
            with tempfile.TemporaryDirectory() as d:
                ok, detail = fn(Path(d))
        else:
            ok, detail = fn()
        failed += not ok
        print(_line(i, ok, detail), flush=True)
    sys.exit(1 if failed else 0)
