"""``spl`` command line: compile, query, gen-data, train, eval, overparam.

Exit codes: 0 success, 2 user error, 3 resource limit, 4 internal invariant
violation.  Every command writes ``manifest.json`` (arguments, input hashes,
versions) into ``--out-dir``.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .circuit import (
    MARGINALIZED,
    SUPPORT_MAX_VARS,
    Circuit,
    dumps,
    evaluate,
    loads,
    log_evaluate,
    support_count,
)
from .compiler import compile_cnf, parse_dimacs
from .errors import ParseError, ScopeTooLarge, SplError, ZeroPartition
from .inference import SemanticLoss, map_state, partition
from .overparam import OverparamConfig, overparameterize
from .tasks import TASKS, load_dataset, make_task, save_dataset
from .training import (
    MODEL_KINDS,
    Model,
    TrainConfig,
    circuit_hash,
    config_from_manifest,
    load_checkpoint,
    save_checkpoint,
    train,
    write_log,
)
from .vtree import build_vtree

log = logging.getLogger("spl")
DIGITS = 12


def _fmt(x: float) -> str:
    return f"{x:.{DIGITS}g}"


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _read(path) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise SplError(f"cannot read {path}: {exc.strerror}") from None


def _write_manifest(args, inputs: dict, outputs: dict, extra: dict | None = None) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": args.command,
        "argv": sys.argv[1:],
        "args": {k: v for k, v in vars(args).items() if k != "func"},
        "inputs": {k: {"path": str(p), "sha256": _sha256(p)} for k, p in inputs.items() if p},
        "outputs": {k: str(p) for k, p in outputs.items()},
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        **(extra or {}),
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")
    return path


# -- compile -------------------------------------------------------------------------


def cmd_compile(args) -> int:
    text = _read(args.cnf)
    formula = parse_dimacs(text)
    if formula.num_vars == 0:
        raise ParseError("formula has no variables")
    vtree = build_vtree(range(formula.num_vars), args.vtree)
    t0 = time.perf_counter()
    cc = compile_cnf(formula, vtree)
    circuit = cc.circuit
    elapsed = time.perf_counter() - t0
    stats = circuit.stats()
    stats["models"] = cc.model_count()
    if formula.num_vars <= SUPPORT_MAX_VARS:
        stats["support"] = support_count(circuit)
    stats["seconds"] = round(elapsed, 6)
    if cc.is_false:
        log.warning("formula is unsatisfiable; writing the constant-0 circuit")
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = Path(args.cnf).stem
    cpath = Path(args.output) if args.output else out / f"{stem}.circuit"
    vpath = cpath.with_suffix(".vtree")
    cpath.write_text(dumps(circuit))
    vpath.write_text(vtree.dumps() + "\n")
    for k, v in stats.items():
        print(f"{k}: {v}")
    _write_manifest(args, {"cnf": args.cnf}, {"circuit": cpath, "vtree": vpath}, {"stats": stats})
    return 0


# -- query ---------------------------------------------------------------------------


def _parse_bits(text: str, n: int, what: str) -> np.ndarray:
    toks = text.replace(",", " ").split()
    if len(toks) != n:
        raise ParseError(f"{what}: expected {n} values, got {len(toks)}")
    out = []
    for t in toks:
        if t in ("0", "1"):
            out.append(int(t))
        elif t in ("-1", "?", "*"):
            out.append(MARGINALIZED)
        else:
            raise ParseError(f"{what}: bad value {t!r}")
    return np.array(out, dtype=np.int64)


def _parse_weights(values, variables) -> np.ndarray:
    if values is None:
        return np.full(len(variables), 0.5)
    if len(values) == 1 and len(variables) > 1:
        values = values * len(variables)
    if len(values) != len(variables):
        raise ParseError(f"expected {len(variables)} weights (one per variable), got {len(values)}")
    w = np.array(values, dtype=np.float64)
    if ((w < 0) | (w > 1)).any():
        raise ParseError("weights are probabilities and must lie in [0, 1]")
    return w


def _query_count(circuit: Circuit) -> int:
    if circuit.num_vars <= SUPPORT_MAX_VARS:
        return support_count(circuit)
    # for smooth, deterministic 0/1 circuits the all-marginal pass counts models
    rep = circuit.validate()
    if not (rep.smooth and rep.deterministic):
        raise ScopeTooLarge("counting needs a smooth deterministic circuit above 25 variables")
    a = np.full(circuit.num_vars, MARGINALIZED, dtype=np.int64)
    free = circuit.num_vars - len(circuit.scope_vars())
    return int(round(float(evaluate(circuit, np.ones(circuit.num_params), a, allow_marginal=True)))) << free


def cmd_query(args) -> int:
    circuit = loads(_read(args.circuit))
    variables = list(range(circuit.num_vars))
    if args.query == "count":
        print(_query_count(circuit))
    elif args.query == "eval":
        if args.assignment is None:
            raise ParseError("eval needs --assignment")
        a = _parse_bits(args.assignment, circuit.num_vars, "assignment")
        params = np.ones(circuit.num_params) if args.params is None else np.loadtxt(args.params, ndmin=1)
        print(_fmt(float(evaluate(circuit, params, a, allow_marginal=True))))
    else:
        probs = _parse_weights(args.weights, variables)
        scope = circuit.scope_vars()
        if not scope:
            # constant circuit: nothing to weight
            value = float(evaluate(circuit, np.ones(circuit.num_params), np.zeros(circuit.num_vars, np.int64)))
            if args.query == "map" and value == 0:
                raise ZeroPartition("the circuit has no models")
            if args.query == "loss":
                print(_fmt(-np.log(value) if value > 0 else np.inf))
            elif args.query == "wmc":
                print(_fmt(value))
            else:
                print(" ".join("0" for _ in variables) + f" p={_fmt(value)}")
            _write_manifest(args, {"circuit": args.circuit}, {})
            return 0
        sl = SemanticLoss(circuit, scope)
        if args.query == "loss":
            print(_fmt(float(sl(probs[scope]))))
        else:
            theta = sl.r.derive(sl.q_params(probs[scope]))
            if args.query == "wmc":
                print(_fmt(partition(sl.r, theta)))
            else:
                res = map_state(sl.r, theta)
                mass = float(np.exp(log_evaluate(sl.r.circuit, theta, res.assignment)))
                bits = res.assignment[variables].copy()
                bits[bits == MARGINALIZED] = 0
                print(" ".join(str(int(v)) for v in bits) + f" p={_fmt(mass)}")
                if res.approximate:
                    log.warning("circuit is not deterministic; MAP state is approximate")
    _write_manifest(args, {"circuit": args.circuit}, {})
    return 0


# -- data, training, evaluation --------------------------------------------------------


def _task_from_args(args, generate: bool = True):
    soc = _read(args.soc) if getattr(args, "soc", None) else None
    dataset = load_dataset(args.data) if getattr(args, "data", None) else None
    return make_task(
        args.task,
        seed=args.seed,
        count=args.count,
        dataset=dataset,
        generate=generate,
        rows=args.rows,
        cols=args.cols,
        labels=args.labels,
        hierarchy=args.hierarchy,
        soc_text=soc,
    )


def cmd_gen_data(args) -> int:
    task = _task_from_args(args)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = Path(args.output) if args.output else out / f"{args.task}-seed{args.seed}.data"
    save_dataset(task.dataset, path)
    ok = task.satisfies(task.dataset.x, task.dataset.y)
    print(f"wrote {len(task.dataset)} examples to {path} ({int(ok.sum())} consistent)")
    _write_manifest(args, {"soc": getattr(args, "soc", None)}, {"data": path}, {"task_info": task.info})
    return 0


def _config_from_args(args) -> TrainConfig:
    return TrainConfig(
        lr=args.lr,
        batch_size=args.batch_size,
        epochs=args.epochs,
        patience=args.patience,
        seed=args.seed,
        optimizer=args.optimizer,
        hidden=tuple(args.hidden),
        gating_depth=args.gating_depth,
        gating_width=args.gating_width,
        mixtures=args.mixtures,
        sl_weight=args.sl_weight,
        clamp_eps=args.clamp_eps,
        overparam_k=args.overparam_k,
        mixtures_m=args.mixtures_m,
    )


def _print_metrics(m, stream=None) -> None:
    stream = sys.stdout if stream is None else stream
    pct = m.as_percent()
    stream.write(f"{'Exact':>10} {'Hamming':>10} {'Consistent':>11}\n")
    stream.write(f"{pct['exact']:10.1f} {pct['hamming']:10.1f} {pct['consistent']:11.1f}\n")


def _write_metrics_csv(path, split: str, m) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["split", "exact", "hamming", "consistent"])
        w.writerow([split, _fmt(m.exact), _fmt(m.hamming), _fmt(m.consistent)])


def cmd_train(args) -> int:
    task = _task_from_args(args)
    # recorded so that eval can rebuild the same test split
    task.info.update(data=args.data and str(Path(args.data).resolve()), soc=args.soc and str(Path(args.soc).resolve()))
    config = _config_from_args(args)
    result = train(args.model, task, config=config)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ckpt, logp, mpath = out / "checkpoint.bin", out / "train_log.csv", out / "metrics.csv"
    model = result.model
    test = task.dataset.test
    m = model.evaluate(result.weights, test)
    save_checkpoint(ckpt, model, result.weights, {"best_epoch": result.best_epoch})
    write_log(result.history, logp)
    _write_metrics_csv(mpath, "test", m)
    _print_metrics(m)
    extra = {"best_epoch": result.best_epoch, "test_metrics": m.as_dict(), "task_info": task.info}
    if model.circuit is not None:
        extra["circuit_stats"] = model.circuit.stats()
    _write_manifest(args, {"data": args.data, "soc": args.soc}, {"checkpoint": ckpt, "log": logp, "metrics": mpath}, extra)
    return 0


def cmd_eval(args) -> int:
    manifest, weights = load_checkpoint(args.checkpoint)
    info = manifest["task_info"]
    source = args.data or info.get("data")
    dataset = load_dataset(source) if source else None
    soc = _read(info["soc"]) if info.get("soc") and dataset is None else None
    task = make_task(manifest["task"], seed=info.get("seed", 0), dataset=dataset, soc_text=soc, info=info)
    config = config_from_manifest(manifest)
    model = Model(manifest["kind"], task, manifest["num_x"], config)
    if circuit_hash(model.circuit) != manifest["circuit_sha256"]:
        raise SplError("checkpoint was trained on a different circuit")
    ds = task.dataset if args.data else task.dataset.test
    m = model.evaluate(weights, ds)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    mpath = out / "eval_metrics.csv"
    _write_metrics_csv(mpath, "all" if args.data else "test", m)
    _print_metrics(m)
    _write_manifest(args, {"checkpoint": args.checkpoint, "data": args.data}, {"metrics": mpath}, {"metrics": m.as_dict()})
    return 0


def cmd_overparam(args) -> int:
    circuit = loads(_read(args.circuit))
    out_c = overparameterize(circuit, OverparamConfig(args.overparam_k, args.mixtures_m))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = Path(args.output) if args.output else out / (Path(args.circuit).stem + ".overparam.circuit")
    path.write_text(dumps(out_c))
    for k, v in out_c.stats().items():
        print(f"{k}: {v}")
    _write_manifest(args, {"circuit": args.circuit}, {"circuit": path}, {"stats": out_c.stats()})
    return 0


# -- parser --------------------------------------------------------------------------


def _add_task_args(p) -> None:
    p.add_argument("--task", choices=TASKS, required=True)
    p.add_argument("--data", help="dataset file (spl-data v1); generated when omitted")
    p.add_argument("--count", type=int, help="examples to generate")
    p.add_argument("--rows", type=int, default=4, help="grid rows (simple-path)")
    p.add_argument("--cols", type=int, default=4, help="grid columns (simple-path)")
    p.add_argument("--labels", type=int, default=10, help="number of classes (hmlc)")
    p.add_argument("--hierarchy", choices=("tree", "chain"), default="tree", help="synthetic hierarchy shape (hmlc)")
    p.add_argument("--soc", help="PrefLib .soc file with rankings over 10 items (preference)")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--log-level", default="WARNING", choices=("DEBUG", "INFO", "WARNING", "ERROR"))
    common.add_argument("--out-dir", default="spl-out")
    common.add_argument("--threads", type=int, default=None, help="cap on numerical worker threads")

    parser = argparse.ArgumentParser(prog="spl", description=__doc__.splitlines()[0], parents=[common])
    parser.add_argument("--version", action="version", version=f"spl {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compile", parents=[common], help="compile a DIMACS CNF into a constraint circuit")
    p.add_argument("cnf")
    p.add_argument("--vtree", default="right-linear", choices=("right-linear", "balanced"))
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("query", parents=[common], help="count, wmc, map, eval or loss on a circuit")
    p.add_argument("circuit")
    p.add_argument("query", choices=("count", "wmc", "map", "eval", "loss"))
    p.add_argument("--weights", type=float, nargs="+", help="per-variable probabilities of value 1")
    p.add_argument("--assignment", help="space-separated 0/1 values (eval)")
    p.add_argument("--params", help="text file with the circuit parameter vector (eval)")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("gen-data", parents=[common], help="generate a task dataset")
    _add_task_args(p)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", parents=[common], help="train a model and report test metrics")
    _add_task_args(p)
    p.add_argument("--model", default="spl", choices=MODEL_KINDS + ("spl",))
    p.add_argument("--lr", type=float, default=5e-3)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--epochs", type=int, default=40)
    p.add_argument("--patience", type=int, default=10)
    p.add_argument("--optimizer", choices=("adam", "sgd"), default="adam")
    p.add_argument("--hidden", type=int, nargs="*", default=[128], help="feature extractor widths")
    p.add_argument("--gating-depth", type=int, default=0)
    p.add_argument("--gating-width", type=int, default=64)
    p.add_argument("--mixtures", type=int, default=1, help="mixture components of q (two-circuit)")
    p.add_argument("--sl-weight", type=float, default=1.0, help="semantic loss weight (fil+sl)")
    p.add_argument("--clamp-eps", type=float, default=0.0, help="tolerate inconsistent labels by clamping p(y|x)")
    p.add_argument("--overparam-k", type=int, default=1, help="mixture multiplication factor (spl-single)")
    p.add_argument("--mixtures-m", type=int, default=1, help="replication count (spl-single)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("--data", help="dataset file; default is the regenerated test split")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("overparam", parents=[common], help="replicate / mixture-multiply a circuit")
    p.add_argument("circuit")
    p.add_argument("--overparam-k", type=int, default=1)
    p.add_argument("--mixtures-m", type=int, default=1)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_overparam)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level), format="%(levelname)s %(name)s: %(message)s")
    limiter = None
    if args.threads is not None:
        if args.threads < 1:
            parser.error("--threads must be positive")
        from threadpoolctl import threadpool_limits

        limiter = threadpool_limits(args.threads)
    try:
        return args.func(args)
    except SplError as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return exc.exit_code
    except (ValueError, OSError) as exc:
        log.error("%s", exc)
        return 2
    except MemoryError:
        log.error("out of memory")
        return 3
    finally:
        if limiter is not None:
            limiter.restore_original_limits()


if __name__ == "__main__":
    sys.exit(main())
