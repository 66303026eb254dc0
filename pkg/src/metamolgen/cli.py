"""Command-line entry point.

Subcommands: train, generate, evaluate, theory-check, inspect-checkpoint.
Settings come from an optional JSON config (``--config``), then the
``MMGN_SEED`` environment variable, then explicit flags. Only the requested
artifact or a final JSON summary is written to stdout.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import io
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt_io
from . import meta, metrics, theory
from . import model as M
from .corpus import REFERENCE_MOLECULES, read_corpus
from .descriptors import DEFAULT_PROPERTY_NAMES, FEATURE_NAMES, feature_dict
from .smiles import SmilesError, Vocabulary, parse, try_parse

log = logging.getLogger("metamolgen")

DEFAULTS = {
    "seed": 0,
    "corpus": None,
    "val_fraction": 0.1,
    "max_length": 128,
    "standardize": True,
    "context_size": 16,
    "iterations": None,
    "feature_names": list(FEATURE_NAMES),
    "property_names": list(DEFAULT_PROPERTY_NAMES),
    "meta": meta.MetaConfig().to_dict(),
    "model": {k: v for k, v in M.ModelConfig().to_dict().items()
              if k not in ("feature_dim", "property_dim", "vocab_size")},
    "sampler": {"temperature": 1.0, "noise_scale": 0.1, "count": 100},
}

# keys that only name output locations; they do not enter the config hash
_OUTPUT_KEYS = ("out", "trajectory")


class CliError(Exception):
    pass


def _deep_update(base: dict, new: dict) -> dict:
    for k, v in new.items():
        if isinstance(v, dict) and isinstance(base.get(k), dict):
            _deep_update(base[k], v)
        else:
            base[k] = v
    return base


def load_config(path: str | None) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if path:
        try:
            user = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise CliError(f"cannot read config {path}: {exc}") from exc
        unknown = set(user) - set(DEFAULTS) - set(_OUTPUT_KEYS)
        if unknown:
            raise CliError(f"unknown config keys: {sorted(unknown)}")
        _deep_update(cfg, user)
    env_seed = os.environ.get("MMGN_SEED")
    if env_seed is not None:
        try:
            cfg["seed"] = int(env_seed)
        except ValueError as exc:
            raise CliError(f"MMGN_SEED must be an integer, got {env_seed!r}") from exc
    return cfg


def config_hash(cfg: dict) -> str:
    core = {k: v for k, v in cfg.items() if k not in _OUTPUT_KEYS}
    blob = json.dumps(core, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8", newline="\n")
    else:
        sys.stdout.write(text)


def _summary(d: dict) -> None:
    sys.stdout.write(json.dumps(d, indent=2, sort_keys=True) + "\n")


# ------------------------------------------------------------------- train

def cmd_train(args) -> int:
    cfg = load_config(args.config)
    for key, flag in (("corpus", args.corpus), ("seed", args.seed), ("val_fraction", args.val_fraction)):
        if flag is not None:
            cfg[key] = flag
    for key, flag in (("epochs", args.epochs), ("inner_steps", args.inner_steps),
                      ("meta_lr", args.meta_lr), ("tasks_per_update", args.tasks_per_update),
                      ("molecules_per_task", args.molecules_per_task)):
        if flag is not None:
            cfg["meta"][key] = flag
    if args.no_standardize:
        cfg["standardize"] = False
    if args.iterations is not None:
        cfg["iterations"] = args.iterations
    seed = int(cfg["seed"])
    cfg["meta"]["seed"] = seed
    if not cfg["corpus"]:
        raise CliError("no corpus given (--corpus or config 'corpus')")
    chash = config_hash(cfg)

    try:
        ingest = read_corpus(cfg["corpus"], max_tokens=cfg["max_length"])
    except OSError as exc:
        raise CliError(f"cannot read corpus {cfg['corpus']}: {exc}") from exc
    smiles = ingest.smiles
    mcfg = meta.MetaConfig(**cfg["meta"])
    if not smiles:
        raise CliError("corpus has no valid molecules")
    if len(smiles) < mcfg.molecules_per_task:
        raise CliError(f"corpus too small: {len(smiles)} valid molecules, "
                       f"{mcfg.molecules_per_task} needed per task")

    if cfg["iterations"] is not None and int(cfg["iterations"]) < 1:
        raise CliError("iterations must be >= 1")

    rng = np.random.default_rng(seed)
    order = rng.permutation(len(smiles))
    n_val = int(cfg["val_fraction"] * len(smiles))
    if len(smiles) - n_val < mcfg.molecules_per_task:
        n_val = 0
    train = [smiles[i] for i in order[n_val:]]
    val = [smiles[i] for i in order[:n_val]]

    fnames, pnames = cfg["feature_names"], cfg["property_names"]
    unknown = [n for n in list(fnames) + list(pnames) if n not in FEATURE_NAMES]
    if unknown or not set(pnames) <= set(fnames):
        raise CliError(f"bad feature/property names {unknown or pnames}")
    vocab = Vocabulary.from_corpus(train)
    cols = [FEATURE_NAMES.index(n) for n in fnames]
    stats = meta.DatasetStats.fit(meta.raw_features(train)[:, cols])
    use_stats = stats if cfg["standardize"] else None
    data = meta.build_dataset(train, vocab, use_stats, pnames, fnames)
    mod_cfg = M.ModelConfig(feature_dim=len(fnames), property_dim=len(pnames),
                            vocab_size=len(vocab), **cfg["model"])

    t0 = time.perf_counter()
    every = max(1, mcfg.iterations(len(data)) // 20)

    def progress(row):
        if row.iteration % every == 0:
            log.info("iter %d support %.4f query %.4f", row.iteration, row.support_loss, row.query_loss)

    result = meta.meta_train(data, mcfg, mod_cfg, iterations=cfg.get("iterations"),
                             record_time=args.record_time, progress=progress)
    elapsed = time.perf_counter() - t0

    ctx_rows = np.sort(rng.choice(len(data), size=min(cfg["context_size"], len(data)), replace=False))
    context = data.features[ctx_rows]
    val_loss = None
    if val:
        vdata = meta.build_dataset(val, vocab, use_stats, pnames, fnames)
        val_loss = M.evaluate_loss(result.params, mod_cfg, M.Batch(
            context, M.pad_sequences(vdata.tokens), vdata.properties))

    header_meta = {
        "config": cfg, "config_hash": chash, "seed": seed,
        "model_config": mod_cfg.to_dict(), "stats": stats.to_dict(),
        "standardize": bool(cfg["standardize"]), "feature_names": list(fnames),
        "property_names": list(pnames), "context": context.tolist(),
        "train_size": len(train), "val_size": len(val), "skipped_lines": ingest.skipped,
    }
    ck = ckpt_io.Checkpoint(result.params, vocab.id_to_token, len(fnames), len(pnames), header_meta)
    out = args.out or "model.mmgn"
    ckpt_io.save(out, ck)
    traj = args.trajectory or str(Path(out).with_suffix(".csv"))
    Path(traj).write_text(meta.trajectory_csv(result.trajectory, {"config_hash": chash, "seed": seed}),
                          encoding="utf-8", newline="\n")
    q = result.query_losses
    summary = {"checkpoint": out, "trajectory": traj, "config_hash": chash, "seed": seed,
               "iterations": len(result.trajectory), "train_size": len(train), "val_size": len(val),
               "skipped_lines": ingest.skipped, "initial_query_loss": float(q[0]),
               "final_query_loss": float(q[-1]), "val_loss": val_loss}
    log.info("trained in %.1fs", elapsed)
    _summary(summary)
    return 0


# ------------------------------------------------------------------ generate

def parse_targets(spec: str | None, molecule: str | None) -> dict[str, float] | None:
    """``mw=180,logp=1.2`` or a JSON object, or the descriptors of a named/SMILES molecule."""
    if spec and molecule:
        raise CliError("give either --target-properties or --target-molecule, not both")
    if molecule:
        smi = REFERENCE_MOLECULES.get(molecule.lower(), molecule)
        try:
            return feature_dict(parse(smi))
        except SmilesError as exc:
            raise CliError(f"target molecule {molecule!r}: {exc}") from exc
    if not spec:
        return None
    if spec.lstrip().startswith("{"):
        try:
            return {k: float(v) for k, v in json.loads(spec).items()}
        except (json.JSONDecodeError, TypeError, ValueError) as exc:
            raise CliError(f"bad --target-properties JSON: {exc}") from exc
    out = {}
    for part in spec.split(","):
        if "=" not in part:
            raise CliError(f"bad target entry {part!r}; expected name=value")
        k, v = part.split("=", 1)
        out[k.strip()] = float(v)
    return out


def _load_checkpoint(path: str):
    try:
        ck = ckpt_io.load(path)
    except OSError as exc:
        raise CliError(f"cannot read checkpoint {path}: {exc}") from exc
    mc = ck.meta.get("model_config")
    if mc is None:
        raise CliError("checkpoint has no model configuration")
    cfg = M.ModelConfig(**mc)
    if len(ck.vocab) != cfg.vocab_size or ck.params["dec.embed"].shape[0] != len(ck.vocab):
        raise CliError(f"vocabulary mismatch: {len(ck.vocab)} tokens, embedding has "
                       f"{ck.params['dec.embed'].shape[0]} rows")
    vocab = Vocabulary()
    for t in ck.vocab[len(vocab):]:
        vocab.add(t)
    if vocab.id_to_token != ck.vocab:
        raise CliError("vocabulary mismatch: reserved tokens differ")
    return ck, cfg, vocab


def _standardizer(ck):
    stats = meta.DatasetStats.from_dict(ck.meta["stats"])
    fnames = ck.meta["feature_names"]

    def apply(rows: np.ndarray) -> np.ndarray:
        return meta.dataset_standardize(rows, stats) if ck.meta["standardize"] else rows

    return apply, fnames


def cmd_generate(args) -> int:
    cfg = load_config(args.config)
    s = cfg["sampler"]
    seed = int(args.seed if args.seed is not None else cfg["seed"])
    temperature = float(args.temperature if args.temperature is not None else s["temperature"])
    noise = float(args.noise_scale if args.noise_scale is not None else s["noise_scale"])
    count = int(args.count if args.count is not None else s["count"])
    ck, mcfg, vocab = _load_checkpoint(args.checkpoint)
    max_len = int(args.max_length or ck.meta.get("config", {}).get("max_length", 128))
    sampler = M.SamplerConfig(temperature=temperature, max_length=max_len, seed=seed,
                              noise_scale=noise, greedy=temperature == 0)
    apply_std, fnames = _standardizer(ck)
    if args.context:
        res = read_corpus(args.context)
        if not res.smiles:
            raise CliError("context file has no valid molecules")
        rows = meta.raw_features(res.smiles)[:, [FEATURE_NAMES.index(n) for n in fnames]]
        X = apply_std(rows)
    else:
        X = np.asarray(ck.meta["context"], dtype=np.float64)

    targets = parse_targets(args.target_properties, args.target_molecule)
    z = None
    pnames = ck.meta["property_names"]
    if targets is not None:
        missing = [p for p in pnames if p not in targets]
        if missing:
            raise CliError(f"targets missing properties {missing}")
        full = np.array([targets.get(n, 0.0) for n in fnames], dtype=np.float64)
        z = apply_std(full)[[fnames.index(p) for p in pnames]]
        targets = {p: targets[p] for p in pnames}
    t0 = time.perf_counter()
    out = M.generate(ck.params, mcfg, vocab, X, z, count, sampler)
    log.info("generated %d strings in %.2fs", count, time.perf_counter() - t0)
    tj = json.dumps(targets, sort_keys=True) if targets else "none"
    header = (f"# metamolgen generate seed={seed} temperature={temperature!r} "
              f"noise_scale={noise!r} targets={tj} config_hash={ck.meta.get('config_hash')}\n")
    _emit(header + "".join(s + "\n" for s in out), args.out)
    if args.out:
        _summary({"out": args.out, "count": count, "seed": seed, "temperature": temperature,
                  "noise_scale": noise, "targets": targets})
    return 0


# ------------------------------------------------------------------ evaluate

def read_generated(path: str) -> list[str]:
    """Generated strings, one per line. Blank lines count as (invalid) samples.

    Header lines start with ``"# "``; a bare ``#`` is a triple-bond token and
    can begin a sampled string, and no token contains a space.
    """
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [ln.strip() for ln in lines if not ln.startswith("# ")]


def distributions_csv(generated: list[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["smiles", *FEATURE_NAMES])
    for s in generated:
        g = try_parse(s)
        if g is not None:
            w.writerow([s, *(repr(v) for v in feature_dict(g).values())])
    return buf.getvalue()


def cmd_evaluate(args) -> int:
    if args.comparison:
        try:
            rows = json.loads(Path(args.comparison).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise CliError(f"cannot read comparison file: {exc}") from exc
        scores, bounds = metrics.overall_score(rows)
        report = {"models": [{**r, "overall_score": s} for r, s in zip(rows, scores)],
                  "bounds": [b.__dict__ for b in bounds]}
        _emit(json.dumps(report, indent=2, sort_keys=True) + "\n", args.out)
        return 0
    if not args.generated:
        raise CliError("evaluate needs --generated (or --comparison)")
    cfg = load_config(args.config)
    seed = int(args.seed if args.seed is not None else cfg["seed"])
    try:
        generated = read_generated(args.generated)
        train = read_corpus(args.train_corpus).smiles if args.train_corpus else []
    except OSError as exc:
        raise CliError(str(exc)) from exc
    targets = parse_targets(args.targets, args.target_molecule)
    rep = metrics.evaluate(generated, train, targets=targets, time_h=args.time_h, seed=seed)
    out = json.loads(rep.to_json())
    out["seed"] = seed
    out["config_hash"] = config_hash(cfg)
    _emit(json.dumps(out, indent=2, sort_keys=True) + "\n", args.out)
    if args.distributions:
        Path(args.distributions).write_text(distributions_csv(generated), encoding="utf-8", newline="\n")
    return 0


# --------------------------------------------------------------- theory/inspect

def cmd_theory_check(args) -> int:
    cfg = load_config(args.config)
    seed = int(args.seed if args.seed is not None else cfg["seed"])
    checks = tuple(args.check) if args.check else theory.CHECKS
    report = theory.run_suite(seed=seed, checks=checks, alpha_over_threshold=args.alpha_over_threshold,
                              cnp_steps=args.cnp_steps)
    report["config_hash"] = config_hash(cfg)
    _emit(theory.report_json(report) + "\n", args.out)
    if args.csv:
        Path(args.csv).write_text(theory.convergence_csv(report), encoding="utf-8", newline="\n")
    for c in report["checks"]:
        log.info("%-36s %s%s", c["name"], "pass" if c["passed"] else "FAIL",
                 "" if c["asserted"] else " (report only)")
    if report["failures"]:
        print("failed checks: " + ", ".join(report["failures"]), file=sys.stderr)
        return 1
    return 0


def cmd_inspect(args) -> int:
    try:
        header = ckpt_io.read_header(args.checkpoint)
    except OSError as exc:
        raise CliError(str(exc)) from exc
    _summary(header)
    return 0


# -------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="metamolgen", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="info-level logging on stderr")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="meta-train a generator on a SMILES corpus")
    t.add_argument("--config")
    t.add_argument("--corpus")
    t.add_argument("--out", help="checkpoint path (default model.mmgn)")
    t.add_argument("--trajectory", help="loss CSV path (default: checkpoint path with .csv)")
    t.add_argument("--seed", type=int)
    t.add_argument("--epochs", type=int)
    t.add_argument("--iterations", type=int, help="override the epoch-derived iteration count")
    t.add_argument("--inner-steps", type=int)
    t.add_argument("--meta-lr", type=float)
    t.add_argument("--tasks-per-update", type=int)
    t.add_argument("--molecules-per-task", type=int)
    t.add_argument("--val-fraction", type=float)
    t.add_argument("--no-standardize", action="store_true")
    t.add_argument("--record-time", action="store_true",
                   help="fill the wall-clock CSV column (makes reruns differ)")
    t.set_defaults(fn=cmd_train)

    g = sub.add_parser("generate", help="sample SMILES from a checkpoint")
    g.add_argument("--config")
    g.add_argument("--checkpoint", required=True)
    g.add_argument("--count", type=int)
    g.add_argument("--temperature", type=float, help="0 selects greedy decoding")
    g.add_argument("--seed", type=int)
    g.add_argument("--noise-scale", type=float)
    g.add_argument("--max-length", type=int)
    g.add_argument("--target-properties", help="name=value,... or a JSON object")
    g.add_argument("--target-molecule", help="reference molecule name or SMILES")
    g.add_argument("--context", help="SMILES file used as the context set")
    g.add_argument("--out")
    g.set_defaults(fn=cmd_generate)

    e = sub.add_parser("evaluate", help="metric report for generated SMILES")
    e.add_argument("--config")
    e.add_argument("--generated")
    e.add_argument("--train-corpus")
    e.add_argument("--targets", help="name=value,... conditioning targets")
    e.add_argument("--target-molecule")
    e.add_argument("--time-h", type=float)
    e.add_argument("--seed", type=int)
    e.add_argument("--distributions", help="write per-molecule property CSV here")
    e.add_argument("--comparison", help="JSON array of model metric rows to score")
    e.add_argument("--out")
    e.set_defaults(fn=cmd_evaluate)

    c = sub.add_parser("theory-check", help="run the numerical theorem checks")
    c.add_argument("--config")
    c.add_argument("--check", action="append", choices=theory.CHECKS)
    c.add_argument("--seed", type=int)
    c.add_argument("--alpha-over-threshold", action="store_true",
                   help="also run the step-size-above-2/L probe (report only)")
    c.add_argument("--cnp-steps", type=int, default=4000)
    c.add_argument("--out")
    c.add_argument("--csv", help="write the SGD convergence series here")
    c.set_defaults(fn=cmd_theory_check)

    i = sub.add_parser("inspect-checkpoint", help="print a checkpoint header")
    i.add_argument("checkpoint")
    i.set_defaults(fn=cmd_inspect)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.fn(args)
    except (CliError, ckpt_io.CheckpointError, metrics.MetricError, ValueError,
            FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
