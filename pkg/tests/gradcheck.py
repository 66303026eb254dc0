"""Central finite-difference oracle shared by the gradient tests."""

import numpy as np

from metamolgen.diffnum import Tape, backward

H = 1e-5


def _loss_value(build, params):
    t = Tape(record=False)
    P = {k: t.constant(v) for k, v in params.items()}
    return float(build(t, P).value)


def fd_relative_error(build, params, h=H, entries=None):
    """Norm-wise relative error between analytic and central-difference grads.

    ``entries`` limits the check to a list of (name, index) pairs.
    """
    t = Tape()
    P = t.params(params)
    analytic = backward(t, build(t, P))
    picks = entries
    if picks is None:
        picks = [(k, idx) for k, v in params.items() for idx in np.ndindex(v.shape)]
    num = {k: np.zeros_like(v) for k, v in params.items()}
    for name, idx in picks:
        q = {k: v.copy() for k, v in params.items()}
        q[name][idx] += h
        up = _loss_value(build, q)
        q[name][idx] -= 2 * h
        down = _loss_value(build, q)
        num[name][idx] = (up - down) / (2 * h)
    out = {}
    for name in {p[0] for p in picks}:
        mask = np.zeros(params[name].shape, dtype=bool)
        for n, idx in picks:
            if n == name:
                mask[idx] = True
        a, n = analytic[name][mask], num[name][mask]
        scale = max(np.linalg.norm(a), np.linalg.norm(n), 1e-6)
        out[name] = float(np.linalg.norm(a - n) / scale)
    return out


def _weighted(t, out, rng):
    # random projection so every output entry contributes to the scalar
    w = rng.normal(size=out.shape)
    return t.sum(t.mul(out, w))


def _case(name, rng):
    """(params, build) for one random instance of primitive ``name``."""
    n = lambda *s: rng.normal(size=s)
    if name in ("add", "sub", "mul"):
        p = {"a": n(3, 4), "b": n(4)}
        f = getattr(Tape, name)
        return p, lambda t, P, w=n(3, 4): t.sum(t.mul(f(t, P["a"], P["b"]), w))
    if name == "div":
        p = {"a": n(3, 4), "b": rng.uniform(0.5, 2.0, size=(3, 4)) * rng.choice([-1, 1], size=(3, 4))}
        return p, lambda t, P, w=n(3, 4): t.sum(t.mul(t.div(P["a"], P["b"]), w))
    if name == "log":
        p = {"x": rng.uniform(0.2, 3.0, size=(2, 5))}
        return p, lambda t, P, w=n(2, 5): t.sum(t.mul(t.log(P["x"]), w))
    if name in ("tanh", "sigmoid", "gelu", "softplus", "exp", "square", "softmax"):
        p = {"x": n(3, 5)}
        f = getattr(Tape, name)
        return p, lambda t, P, w=n(3, 5): t.sum(t.mul(f(t, P["x"]), w))
    if name == "matmul":
        p = {"a": n(2, 3, 4), "b": n(4, 5)}
        return p, lambda t, P, w=n(2, 3, 5): t.sum(t.mul(t.matmul(P["a"], P["b"]), w))
    if name == "layer_norm":
        p = {"x": n(3, 6), "g": n(6), "b": n(6)}
        return p, lambda t, P, w=n(3, 6): t.sum(t.mul(t.layer_norm(P["x"], P["g"], P["b"]), w))
    if name == "embedding":
        p = {"e": n(7, 3)}
        ids = rng.integers(0, 7, size=(2, 4))
        return p, lambda t, P, w=n(2, 4, 3): t.sum(t.mul(t.embedding(P["e"], ids), w))
    if name == "concat":
        p = {"a": n(2, 3), "b": n(2, 4)}
        return p, lambda t, P, w=n(2, 7): t.sum(t.mul(t.concat([P["a"], P["b"]], axis=-1), w))
    if name == "stack":
        p = {"a": n(2, 3), "b": n(2, 3)}
        return p, lambda t, P, w=n(2, 2, 3): t.sum(t.mul(t.stack([P["a"], P["b"]], axis=0), w))
    if name == "take":
        p = {"x": n(3, 4)}
        return p, lambda t, P, w=n(3): t.sum(t.mul(t.take(P["x"], 2, axis=1), w))
    if name == "reshape":
        p = {"x": n(2, 6)}
        return p, lambda t, P, w=n(3, 4): t.sum(t.mul(t.reshape(P["x"], (3, 4)), w))
    if name == "broadcast_to":
        p = {"x": n(1, 4)}
        return p, lambda t, P, w=n(3, 4): t.sum(t.mul(t.broadcast_to(P["x"], (3, 4)), w))
    if name == "mean":
        p = {"x": n(3, 4, 2)}
        return p, lambda t, P, w=n(3, 2): t.sum(t.mul(t.mean(P["x"], axis=1), w))
    if name == "sum":
        p = {"x": n(3, 4)}
        return p, lambda t, P, w=n(3, 4): t.sum(t.mul(P["x"], w))
    if name == "dropout":
        p = {"x": n(3, 4)}
        mask = rng.random((3, 4)) > 0.3
        return p, lambda t, P, w=n(3, 4): t.sum(t.mul(t.dropout(P["x"], mask, 0.3), w))
    if name == "lstm_cell":
        B, Hd = 2, 3
        p = {"xw": n(B, 4 * Hd), "h": n(B, Hd), "c": n(B, Hd), "w": 0.5 * n(Hd, 4 * Hd)}
        w1, w2 = n(B, Hd), n(B, Hd)

        def build(t, P):
            h, c = t.lstm_cell(P["xw"], P["h"], P["c"], P["w"])
            return t.add(t.sum(t.mul(h, w1)), t.sum(t.mul(c, w2)))
        return p, build
    if name == "lstm_sequence":
        B, L, Hd = 2, 3, 2
        p = {"xw": n(B, L, 4 * Hd), "h0": n(B, Hd), "c0": n(B, Hd), "w": 0.5 * n(Hd, 4 * Hd)}
        return p, lambda t, P, w=n(B, L, Hd): t.sum(t.mul(t.lstm_sequence(P["xw"], P["h0"], P["c0"], P["w"]), w))
    if name == "log_softmax_nll":
        p = {"z": n(2, 3, 5)}
        tg = rng.integers(0, 5, size=(2, 3))
        wt = (rng.random((2, 3)) > 0.3).astype(float)
        return p, lambda t, P: t.log_softmax_nll(P["z"], tg, wt)
    raise KeyError(name)


PRIMITIVES = ("add", "sub", "mul", "div", "tanh", "sigmoid", "gelu", "softplus", "exp", "log",
              "square", "matmul", "softmax", "layer_norm", "embedding", "concat", "stack", "take",
              "reshape", "broadcast_to", "mean", "sum", "dropout", "lstm_cell", "lstm_sequence",
              "log_softmax_nll")


def run_primitive_checks(name, n_cases=100, seed=0):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_cases):
        params, build = _case(name, rng)
        worst = max(worst, max(fd_relative_error(build, params).values()))
    return worst
