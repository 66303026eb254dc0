import numpy as np
import pytest

from metamolgen import diffnum as dn
from metamolgen import model as M
from metamolgen.smiles import EOS, START, Vocabulary, tokenize

from gradcheck import fd_relative_error

SMALL = M.ModelConfig(vocab_size=12, encoder_hidden=16, latent=8, property_hidden=8, embed=8,
                      hidden=8, dropout=0.0)


def small_params(seed=0, cfg=SMALL):
    return M.init_params(cfg, np.random.default_rng(seed))


def logits_of(params, cfg, X, S, z=None):
    t = dn.Tape(record=False)
    P = {k: t.constant(v) for k, v in params.items()}
    return M.forward(t, P, cfg, X, S, z).value


def test_forward_shape_default_config():
    cfg = M.ModelConfig()
    params = M.init_params(cfg, np.random.default_rng(0))
    X = np.random.default_rng(1).normal(size=(16, 10))
    S = np.ones((2, 5), dtype=int)
    out = logits_of(params, cfg, X, S)
    assert out.shape == (2, 5, 33)
    assert np.all(np.isfinite(out))


def test_context_permutation_and_duplication_invariance():
    params = small_params()
    rng = np.random.default_rng(2)
    X = rng.normal(size=(6, 10))
    S = rng.integers(0, 12, size=(3, 4))
    base = logits_of(params, SMALL, X, S)
    np.testing.assert_allclose(logits_of(params, SMALL, X[rng.permutation(6)], S), base, atol=1e-12)
    np.testing.assert_allclose(logits_of(params, SMALL, np.concatenate([X, X]), S), base, atol=1e-12)


def test_empty_context_rejected():
    with pytest.raises(dn.DiffnumError, match="empty context"):
        logits_of(small_params(), SMALL, np.zeros((0, 10)), np.ones((1, 2), dtype=int))


def test_normalizer_identity_at_init_and_example():
    params = small_params()
    t = dn.Tape(record=False)
    P = {k: t.constant(v) for k, v in params.items()}
    x = np.random.default_rng(3).normal(size=(4, 10))
    np.testing.assert_allclose(M.normalize_learned(t, P, x).value, x, rtol=1e-12)
    P["norm.mu"] = t.constant(np.full(10, 2.0))
    out = M.normalize_learned(t, P, np.full((1, 10), 3.0))
    np.testing.assert_allclose(out.value, 1.0, rtol=1e-12)


def test_normalizer_gradients():
    rng = np.random.default_rng(4)
    p = {"norm.mu": rng.normal(size=10), "norm.sigma_raw": rng.normal(size=10)}
    x, w = rng.normal(size=(5, 10)), rng.normal(size=(5, 10))
    errs = fd_relative_error(lambda t, P: t.sum(t.mul(M.normalize_learned(t, P, x), w)), p)
    assert max(errs.values()) < 1e-4


def test_uniform_logits_give_log_v_loss():
    params = small_params()
    params["dec.out_w"][:] = 0
    params["dec.out_b"][:] = 0
    batch = M.Batch(np.zeros((3, 10)), M.pad_sequences([[START, 5, 6, EOS], [START, 4, EOS]]))
    assert M.evaluate_loss(params, SMALL, batch) == pytest.approx(np.log(12), abs=1e-12)


def test_end_to_end_gradcheck_on_sampled_entries():
    cfg = M.ModelConfig(vocab_size=9, encoder_hidden=6, latent=4, property_hidden=5, embed=4,
                        hidden=4, dropout=0.0)
    rng = np.random.default_rng(5)
    params = M.init_params(cfg, rng)
    X = rng.normal(size=(5, 10))
    tokens = M.pad_sequences([[START, 4, 5, 6, EOS], [START, 7, EOS]])
    z = rng.normal(size=(2, 4))
    batch = M.Batch(X, tokens, z)
    names = sorted(params)
    picks = []
    for _ in range(10):
        name = names[rng.integers(len(names))]
        idx = tuple(int(rng.integers(s)) for s in params[name].shape)
        picks.append((name, idx))
    errs = fd_relative_error(lambda t, P: M.reconstruction_loss(t, P, cfg, batch), params,
                             entries=picks)
    assert max(errs.values()) < 1e-4, errs


def test_overfit_ten_molecules_monotone():
    smi = ["CCO", "CCN", "CCC", "COC", "CCCl", "CC=O", "C1CC1", "CCOC", "NCCO", "OCCO"]
    vocab = Vocabulary.from_corpus(smi)
    cfg = M.ModelConfig(vocab_size=len(vocab), encoder_hidden=16, latent=16, property_hidden=8,
                        embed=16, hidden=16, dropout=0.0)
    params = M.init_params(cfg, np.random.default_rng(6))
    batch = M.Batch(np.random.default_rng(7).normal(size=(4, 10)),
                    M.pad_sequences([tokenize(s, vocab).ids for s in smi]))
    losses = []
    for _ in range(50):
        loss, grads = M.loss_and_grads(params, cfg, batch)
        losses.append(loss)
        params = dn.sgd_step(params, grads, 0.02)
    assert all(b < a for a, b in zip(losses, losses[1:]))
    assert losses[-1] < 0.5 * losses[0]


def test_dropout_only_with_rng():
    cfg = M.ModelConfig(vocab_size=12, encoder_hidden=16, latent=8, property_hidden=8, embed=8,
                        hidden=8, dropout=0.5)
    params = small_params(cfg=cfg)
    batch = M.Batch(np.ones((2, 10)), M.pad_sequences([[START, 5, 6, EOS]]))
    a = M.loss_and_grads(params, cfg, batch)[0]
    assert a == M.evaluate_loss(params, cfg, batch)
    assert M.loss_and_grads(params, cfg, batch, np.random.default_rng(0))[0] != a


# ----------------------------------------------------------------- sampling

def test_greedy_variants_agree():
    logits = np.random.default_rng(8).normal(size=(50, 12))
    want = logits.argmax(axis=1)
    rng = np.random.default_rng(0)
    np.testing.assert_array_equal(M.sample_tokens(logits, 1.0, rng, greedy=True), want)
    np.testing.assert_array_equal(M.sample_tokens(logits, 0.0, rng), want)
    np.testing.assert_array_equal(M.sample_tokens(logits, 1e-7, rng), want)
    assert M.SamplerConfig(temperature=0.0).is_greedy
    with pytest.raises(ValueError):
        M.SamplerConfig(temperature=-1.0)


def test_single_step_frequency():
    # softmax([ln 2, 0]) = [2/3, 1/3]
    n = 10_000
    draws = M.sample_tokens(np.tile([np.log(2.0), 0.0], (n, 1)), 1.0, np.random.default_rng(9))
    freq = np.mean(draws == 0)
    sd = np.sqrt((2 / 3) * (1 / 3) / n)
    assert abs(freq - 2 / 3) < 3 * sd


def test_entropy_monotone_in_temperature():
    logits = np.random.default_rng(10).normal(size=12) * 3
    ents = []
    for tau in (0.25, 0.5, 1.0, 2.0, 4.0):
        p = dn.softmax(logits / tau)
        ents.append(-(p * np.log(p)).sum())
    assert all(b > a for a, b in zip(ents, ents[1:]))


def test_stepwise_generation_matches_teacher_forcing():
    params = small_params(11)
    vocab = Vocabulary([f"t{i}" for i in range(8)])
    assert len(vocab) == 12
    X = np.random.default_rng(12).normal(size=(5, 10))
    sampler = M.SamplerConfig(greedy=True, noise_scale=0.0, max_length=6)
    ids = M.generate_ids(params, SMALL, X, None, 1, sampler)[0]
    prefix = np.array([[START] + ids])
    pred = logits_of(params, SMALL, X, prefix).argmax(axis=-1)[0]
    assert list(pred[:len(ids)]) == ids


def test_generation_seeded_determinism_and_finite():
    params = small_params(13)
    vocab = Vocabulary([f"t{i}" for i in range(8)])
    X = np.random.default_rng(14).normal(size=(5, 10))
    s = M.SamplerConfig(seed=3, max_length=20)
    a = M.generate(params, SMALL, vocab, X, None, 20, s)
    assert a == M.generate(params, SMALL, vocab, X, None, 20, s)
    assert a != M.generate(params, SMALL, vocab, X, None, 20, M.SamplerConfig(seed=4, max_length=20))
    assert all(len(x) <= 19 * 2 for x in a)
    greedy = M.SamplerConfig(greedy=True, seed=1)
    assert (M.generate(params, SMALL, vocab, X, None, 3, greedy)
            == M.generate(params, SMALL, vocab, X, None, 3, M.SamplerConfig(temperature=0.0, seed=1)))


def test_conditioning_changes_outputs():
    params = small_params(15)
    X = np.random.default_rng(16).normal(size=(5, 10))
    S = np.full((1, 3), START)
    a = logits_of(params, SMALL, X, S, np.zeros(4))
    b = logits_of(params, SMALL, X, S, np.ones(4) * 2)
    assert np.abs(a - b).max() > 1e-3
    # masked conditioning is the unconditioned model
    t = dn.Tape(record=False)
    P = {k: t.constant(v) for k, v in params.items()}
    masked = M.forward(t, P, SMALL, X, S, np.ones(4) * 2, cond_mask=np.zeros(1)).value
    np.testing.assert_allclose(masked, logits_of(params, SMALL, X, S), atol=1e-12)


def test_flatten_round_trip():
    params = small_params()
    again = M.unflatten(M.flatten(params), params)
    assert all(np.array_equal(again[k], params[k]) for k in params)
    assert list(M.param_shapes(SMALL)) == list(params)
