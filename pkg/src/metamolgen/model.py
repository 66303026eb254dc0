"""The conditional SMILES generator.

Pipeline: learnable normalizer -> context encoder (d -> 256 -> 256 -> 128,
GELU between layers) -> mean over context rows -> task encoder (affine +
layer norm) -> decoder initial hidden state, optionally plus the property
projector output -> two stacked LSTM layers -> layer norm -> vocabulary
logits.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import diffnum as dn
from .smiles import EOS, PAD, START, UNK, Vocabulary

GREEDY_BELOW = 1e-6


@dataclass(frozen=True)
class ModelConfig:
    feature_dim: int = 10
    property_dim: int = 4
    vocab_size: int = 33
    encoder_hidden: int = 256
    latent: int = 128
    property_hidden: int = 64
    embed: int = 128
    hidden: int = 128
    layers: int = 2
    dropout: float = 0.2
    norm_eps: float = 1e-5

    def __post_init__(self):
        if self.latent != self.hidden:
            raise ValueError("task representation size must equal decoder hidden size")
        if self.layers < 1:
            raise ValueError("decoder needs at least one layer")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SamplerConfig:
    temperature: float = 1.0
    max_length: int = 128
    seed: int = 0
    noise_scale: float = 0.1
    greedy: bool = False

    def __post_init__(self):
        # temperature 0 is the explicit greedy flag
        if not np.isfinite(self.temperature) or self.temperature < 0:
            raise ValueError("temperature must be positive (or 0 for greedy)")
        if self.max_length < 2:
            raise ValueError("max_length must be at least 2")
        if self.noise_scale < 0:
            raise ValueError("noise scale must be non-negative")

    @property
    def is_greedy(self) -> bool:
        return self.greedy or self.temperature < GREEDY_BELOW


def _softplus_inverse(y: float) -> float:
    return float(np.log(np.expm1(y)))


def param_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Parameter names and shapes in declared module order."""
    d, k, V = cfg.feature_dim, cfg.property_dim, cfg.vocab_size
    Hd, E, Hc, Lt, Ph = cfg.hidden, cfg.embed, cfg.encoder_hidden, cfg.latent, cfg.property_hidden
    shapes = {
        "norm.mu": (d,),
        "norm.sigma_raw": (d,),
        "ctx.w1": (d, Hc), "ctx.b1": (Hc,),
        "ctx.w2": (Hc, Hc), "ctx.b2": (Hc,),
        "ctx.w3": (Hc, Lt), "ctx.b3": (Lt,),
        "task.w": (Lt, Lt), "task.b": (Lt,),
        "task.ln_g": (Lt,), "task.ln_b": (Lt,),
        "prop.w1": (k, Ph), "prop.b1": (Ph,),
        "prop.w2": (Ph, Hd), "prop.b2": (Hd,),
        "dec.embed": (V, E),
    }
    for layer in range(cfg.layers):
        n_in = E if layer == 0 else Hd
        shapes[f"dec.l{layer}.w_ih"] = (n_in, 4 * Hd)
        shapes[f"dec.l{layer}.w_hh"] = (Hd, 4 * Hd)
        shapes[f"dec.l{layer}.b"] = (4 * Hd,)
    shapes["dec.ln_g"] = (Hd,)
    shapes["dec.ln_b"] = (Hd,)
    shapes["dec.out_w"] = (Hd, V)
    shapes["dec.out_b"] = (V,)
    return shapes


def init_params(cfg: ModelConfig, rng: np.random.Generator) -> dict[str, np.ndarray]:
    params = {}
    for name, shape in param_shapes(cfg).items():
        if name == "norm.mu":
            params[name] = np.zeros(shape)
        elif name == "norm.sigma_raw":
            # softplus(raw) + eps == 1, so the normalizer starts as identity
            params[name] = np.full(shape, _softplus_inverse(1.0 - cfg.norm_eps))
        elif name.endswith("ln_g"):
            params[name] = np.ones(shape)
        elif len(shape) == 1:
            params[name] = np.zeros(shape)
        elif name == "dec.embed":
            params[name] = rng.normal(0.0, 0.1, size=shape)
        else:
            fan_in, fan_out = shape
            lim = np.sqrt(6.0 / (fan_in + fan_out))
            params[name] = rng.uniform(-lim, lim, size=shape)
    for layer in range(cfg.layers):
        b = params[f"dec.l{layer}.b"]
        b[cfg.hidden:2 * cfg.hidden] = 1.0  # forget-gate bias
    return params


def copy_params(params: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    return {k: v.copy() for k, v in params.items()}


def flatten(params: dict[str, np.ndarray]) -> np.ndarray:
    return np.concatenate([v.ravel() for v in params.values()])


def unflatten(vec: np.ndarray, like: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    out, pos = {}, 0
    for k, v in like.items():
        out[k] = vec[pos:pos + v.size].reshape(v.shape).copy()
        pos += v.size
    if pos != vec.size:
        raise ValueError(f"vector has {vec.size} entries, parameters need {pos}")
    return out


# ------------------------------------------------------------------ blocks

def normalize_learned(tape: dn.Tape, P: dict[str, dn.Var], X, eps: float = 1e-5) -> dn.Var:
    """(x - mu) / (softplus(sigma_raw) + eps) over the last axis."""
    X = tape._lift(X)
    d = P["norm.mu"].shape[0]
    if X.shape[-1] != d:
        raise dn.DiffnumError(f"normalizer: feature dim {X.shape[-1]} != {d}")
    sigma = tape.add(tape.softplus(P["norm.sigma_raw"]), eps)
    return tape.div(tape.sub(X, P["norm.mu"]), sigma)


def _affine(tape, x, w, b):
    return tape.add(tape.matmul(x, w), b)


def task_representation(tape: dn.Tape, P, X, eps: float = 1e-5) -> dn.Var:
    """Context rows (... x N x d) -> task vector (... x latent)."""
    X = tape._lift(X)
    if X.value.ndim < 2 or X.shape[-2] == 0:
        raise dn.DiffnumError("empty context set")
    h = normalize_learned(tape, P, X, eps)
    h = tape.gelu(_affine(tape, h, P["ctx.w1"], P["ctx.b1"]))
    h = tape.gelu(_affine(tape, h, P["ctx.w2"], P["ctx.b2"]))
    h = _affine(tape, h, P["ctx.w3"], P["ctx.b3"])
    r = tape.mean(h, axis=-2)
    r = _affine(tape, r, P["task.w"], P["task.b"])
    return tape.layer_norm(r, P["task.ln_g"], P["task.ln_b"])


def property_projection(tape: dn.Tape, P, z) -> dn.Var:
    h = tape.gelu(_affine(tape, z, P["prop.w1"], P["prop.b1"]))
    return _affine(tape, h, P["prop.w2"], P["prop.b2"])


def initial_hidden(tape, P, X, z, batch: int, cond_mask=None, noise=None, eps=1e-5) -> dn.Var:
    r_task = task_representation(tape, P, X, eps)
    if r_task.value.ndim == 1:
        r_task = tape.broadcast_to(r_task, (batch, r_task.shape[0]))
    elif r_task.shape[0] != batch:
        raise dn.DiffnumError(f"context batch {r_task.shape[0]} != sequence batch {batch}")
    h0 = r_task
    if z is not None:
        z = np.asarray(z, dtype=np.float64)
        if z.ndim == 1:
            z = np.broadcast_to(z, (batch, z.shape[0]))
        pz = property_projection(tape, P, z)
        if cond_mask is not None:
            pz = tape.mul(pz, np.asarray(cond_mask, dtype=np.float64)[:, None])
        h0 = tape.add(h0, pz)
    if noise is not None:
        h0 = tape.add(h0, noise)
    return h0


def forward(tape: dn.Tape, P: dict[str, dn.Var], cfg: ModelConfig, X, S_in, z=None, *,
            cond_mask=None, dropout_rng: np.random.Generator | None = None) -> dn.Var:
    """Teacher-forced logits B x L x V for input tokens ``S_in`` (B x L).

    ``X`` is either one shared context (N x d) or per-row contexts (B x N x d).
    Dropout is active only when ``dropout_rng`` is given.
    """
    S_in = np.asarray(S_in, dtype=np.int64)
    if S_in.ndim != 2 or S_in.shape[1] < 1:
        raise dn.DiffnumError(f"token input must be B x L with L >= 1, got {S_in.shape}")
    B, L = S_in.shape
    h0 = initial_hidden(tape, P, X, z, B, cond_mask=cond_mask, eps=cfg.norm_eps)
    c0 = np.zeros((B, cfg.hidden))
    p = cfg.dropout
    x = tape.embedding(P["dec.embed"], S_in)
    for layer in range(cfg.layers):
        if dropout_rng is not None and p > 0:
            x = tape.dropout(x, dropout_rng.random(x.shape) >= p, p)
        xw = tape.add(tape.matmul(x, P[f"dec.l{layer}.w_ih"]), P[f"dec.l{layer}.b"])
        x = tape.lstm_sequence(xw, h0, c0, P[f"dec.l{layer}.w_hh"])
    x = tape.layer_norm(x, P["dec.ln_g"], P["dec.ln_b"])
    return _affine(tape, x, P["dec.out_w"], P["dec.out_b"])


# ------------------------------------------------------------------- batches

@dataclass
class Batch:
    """Teacher-forcing batch: context rows, padded token ids and properties."""
    context: np.ndarray          # N x d (or B x N x d)
    tokens: np.ndarray           # B x T, START ... EOS PAD*
    properties: np.ndarray | None = None  # B x k
    cond_mask: np.ndarray | None = None   # B


def pad_sequences(seqs: list[list[int]]) -> np.ndarray:
    width = max(len(s) for s in seqs)
    out = np.full((len(seqs), width), PAD, dtype=np.int64)
    for i, s in enumerate(seqs):
        out[i, :len(s)] = s
    return out


def reconstruction_loss(tape: dn.Tape, P, cfg: ModelConfig, batch: Batch,
                        dropout_rng: np.random.Generator | None = None) -> dn.Var:
    tokens = np.asarray(batch.tokens)
    logits = forward(tape, P, cfg, batch.context, tokens[:, :-1], batch.properties,
                     cond_mask=batch.cond_mask, dropout_rng=dropout_rng)
    return dn.cross_entropy_loss(tape, logits, tokens[:, 1:], pad_id=PAD)


def loss_and_grads(params: dict[str, np.ndarray], cfg: ModelConfig, batch: Batch,
                   dropout_rng: np.random.Generator | None = None):
    tape = dn.Tape()
    P = tape.params(params)
    loss = reconstruction_loss(tape, P, cfg, batch, dropout_rng)
    return float(loss.value), dn.backward(tape, loss)


def evaluate_loss(params, cfg: ModelConfig, batch: Batch) -> float:
    tape = dn.Tape(record=False)
    P = {k: tape.constant(v) for k, v in params.items()}
    return float(reconstruction_loss(tape, P, cfg, batch).value)


# ---------------------------------------------------------------- sampling

def sample_tokens(logits: np.ndarray, temperature: float, rng: np.random.Generator,
                  greedy: bool = False) -> np.ndarray:
    """One categorical draw per row from softmax(logits / temperature)."""
    logits = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    if greedy or temperature < GREEDY_BELOW:
        return logits.argmax(axis=-1)
    probs = dn.softmax(logits / temperature)
    cdf = np.cumsum(probs, axis=-1)
    u = rng.random(len(logits))[:, None] * cdf[:, -1:]
    return np.minimum((cdf < u).sum(axis=-1), logits.shape[-1] - 1)


def decode_ids(ids: list[int], vocab: Vocabulary) -> str:
    """Surface string for sampled ids; UNK becomes '?', other specials are dropped."""
    parts = []
    for t in ids:
        if t == UNK:
            parts.append("?")
        elif t in (PAD, START, EOS):
            continue
        else:
            parts.append(vocab.id_to_token[t])
    return "".join(parts)


def generate_ids(params, cfg: ModelConfig, X, z, count: int, sampler: SamplerConfig,
                 rng: np.random.Generator | None = None) -> list[list[int]]:
    """Autoregressively sample ``count`` token-id lists (without START/EOS)."""
    if rng is None:
        rng = np.random.default_rng(sampler.seed)
    tape = dn.Tape(record=False)
    P = {k: tape.constant(v) for k, v in params.items()}
    noise = None
    if sampler.noise_scale > 0:
        noise = sampler.noise_scale * rng.standard_normal((count, cfg.hidden))
    h0 = initial_hidden(tape, P, X, z, count, noise=noise, eps=cfg.norm_eps).value
    hs = [h0.copy() for _ in range(cfg.layers)]
    cs = [np.zeros_like(h0) for _ in range(cfg.layers)]
    emb = params["dec.embed"]
    tokens = np.full(count, START, dtype=np.int64)
    done = np.zeros(count, dtype=bool)
    out: list[list[int]] = [[] for _ in range(count)]
    for _ in range(sampler.max_length - 1):
        x = emb[tokens]
        for layer in range(cfg.layers):
            xw = x @ params[f"dec.l{layer}.w_ih"] + params[f"dec.l{layer}.b"]
            hs[layer], cs[layer], _ = dn.lstm_step(xw, hs[layer], cs[layer], params[f"dec.l{layer}.w_hh"])
            x = hs[layer]
        g, b = params["dec.ln_g"], params["dec.ln_b"]
        mu = x.mean(axis=-1, keepdims=True)
        var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
        xn = (x - mu) / np.sqrt(var + 1e-5) * g + b
        logits = xn @ params["dec.out_w"] + params["dec.out_b"]
        tokens = sample_tokens(logits, sampler.temperature, rng, greedy=sampler.is_greedy)
        for i in np.flatnonzero(~done):
            if tokens[i] == EOS:
                done[i] = True
            else:
                out[i].append(int(tokens[i]))
        if done.all():
            break
    return out


def generate(params, cfg: ModelConfig, vocab: Vocabulary, X, z, count: int,
             sampler: SamplerConfig, rng: np.random.Generator | None = None) -> list[str]:
    """Sample ``count`` SMILES strings. Validity is not enforced."""
    return [decode_ids(ids, vocab) for ids in generate_ids(params, cfg, X, z, count, sampler, rng)]
