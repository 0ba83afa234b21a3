"""Command-line entry point.

Exit codes: 0 ok, 2 usage or input error, 3 non-finite training, 4 online
non-convergence. ``verify`` exits with 1 when a check fails.
"""
from __future__ import annotations

import argparse
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import io
from .errors import DepthMismatch, DmnError, NoConvergence, NonFinite
from .network import (DmnParams, interpolate_params, interpolation_coefficient,
                      phase_volume_fractions, rescale_to_volume_fraction)

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_NONFINITE, EXIT_NOCONV = 0, 1, 2, 3, 4
THREADS_ENV = "DMN_THREADS"
MAX_BISECTIONS = 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _positive_int(s):
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {s}")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="dmn", description="Deep material network toolkit")
    p.add_argument("--threads", type=_positive_int, default=None,
                   help=f"cap on BLAS/OpenMP threads (default: ${THREADS_ENV} or all cores)")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write a synthetic JSON-lines dataset")
    g.add_argument("--kind", choices=("teacher", "laminate"), required=True)
    g.add_argument("--n", type=_positive_int, required=True)
    g.add_argument("--depth", type=_positive_int, default=4)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.add_argument("--teacher-out", help="also write the generating parameters (teacher kind)")

    t = sub.add_parser("train", help="fit network parameters to a dataset")
    t.add_argument("--data", required=True)
    t.add_argument("--depth", type=_positive_int, required=True)
    t.add_argument("--config", help="TrainConfig JSON; flags below override it")
    t.add_argument("--out-params", required=True)
    t.add_argument("--report", required=True, help="report JSON path; a CSV is written alongside")
    t.add_argument("--init", help="initial parameters JSON (default: seeded random)")
    for flag, typ in (("--lr", float), ("--lr-decay", float), ("--batch-size", int),
                      ("--epochs", int), ("--lambda-reg", float), ("--weight-target", float),
                      ("--seed", int), ("--momentum", float)):
        t.add_argument(flag, type=typ)
    t.add_argument("--gradient-mode", choices=("adjoint", "finite-difference"))

    e = sub.add_parser("evaluate", help="stiffness loss of parameters on a dataset")
    e.add_argument("--params", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--out")

    r = sub.add_parser("predict", help="online nonlinear prediction")
    r.add_argument("--params", required=True)
    r.add_argument("--materials", required=True)
    r.add_argument("--program", required=True)
    r.add_argument("--out", required=True, help="response file; .csv for CSV, JSON otherwise")
    r.add_argument("--tol", type=float, default=1e-8)
    r.add_argument("--max-iter", type=_positive_int, default=50)
    r.add_argument("--bisections", type=int, default=MAX_BISECTIONS, choices=range(MAX_BISECTIONS + 1))

    i = sub.add_parser("interpolate", help="blend two trained models")
    i.add_argument("--low", required=True)
    i.add_argument("--high", required=True)
    grp = i.add_mutually_exclusive_group(required=True)
    grp.add_argument("--vf-new", type=float, help="target phase-2 volume fraction")
    grp.add_argument("--rho", type=float)
    i.add_argument("--out", required=True)

    s = sub.add_parser("rescale", help="shift a model to a new phase volume fraction")
    s.add_argument("--params", required=True)
    s.add_argument("--vf-new", type=float, required=True, help="target phase-2 volume fraction")
    s.add_argument("--out", required=True)

    v = sub.add_parser("verify", help="run oracle-agreement suites")
    v.add_argument("--suite", choices=("mandel", "block", "gradient", "online", "all"), default="all")
    return p


def _options(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("threads", "command")}


def _load_params(path) -> DmnParams:
    d = io.read_json(path)
    try:
        return DmnParams.from_dict(d)
    except (KeyError, TypeError, ValueError) as exc:
        raise io.InputError(f"{path}: invalid parameter file: {exc}") from None


def _load_dataset(path):
    from .training import Dataset

    rows = io.read_jsonl(path)
    if not rows:
        raise io.InputError(f"{path}: dataset is empty")
    try:
        arrays = [[np.asarray(r[k], float).reshape(6, 6) for r in rows] for k in ("C_p1", "C_p2", "C_dns")]
    except (KeyError, TypeError, ValueError) as exc:
        raise io.InputError(f"{path}: invalid sample: {exc}") from None
    return Dataset(*arrays)


def cmd_generate(args):
    from .training import generate_dataset

    ds = generate_dataset(args.kind, args.n, args.depth, args.seed)
    io.atomic_write(args.out, ds.to_jsonl())
    outputs = [args.out]
    if args.teacher_out and "teacher" in ds.meta:
        io.write_json(args.teacher_out, ds.meta["teacher"])
        outputs.append(args.teacher_out)
    print(f"wrote {len(ds)} samples ({args.kind}) to {args.out}")
    print(f"phase-1 volume fraction of generator: {ds.meta['vf'][0]:.6f}")
    return outputs, {"generator_vf": ds.meta["vf"]}


def cmd_train(args):
    from .training import TrainConfig, init_params, train

    cfg_dict = io.read_json(args.config) if args.config else {}
    if not isinstance(cfg_dict, dict):
        raise io.InputError(f"{args.config}: expected a JSON object")
    for key in ("lr", "lr_decay", "batch_size", "epochs", "lambda_reg", "weight_target", "seed",
                "momentum", "gradient_mode"):
        val = getattr(args, key)
        if val is not None:
            cfg_dict[key] = val
    try:
        cfg = TrainConfig.from_dict(cfg_dict)
    except (TypeError, ValueError) as exc:
        raise io.InputError(f"invalid training configuration: {exc}") from None
    ds = _load_dataset(args.data)
    params0 = _load_params(args.init) if args.init else init_params(args.depth, cfg.seed,
                                                                     cfg.weight_target)
    if params0.depth != args.depth:
        raise io.InputError(f"--init has depth {params0.depth}, expected {args.depth}")

    def log(epoch, tr, va, reg, vf):
        if epoch == 1 or epoch % 50 == 0 or epoch == cfg.epochs:
            print(f"epoch {epoch:5d}  train {tr:.4e}  val {va:.4e}  reg {reg:.3e}  vf1 {vf:.5f}")

    best, report = train(params0, ds, cfg, log=log)
    io.write_json(args.out_params, best.to_dict())
    rep = report.to_dict()
    wall = rep.pop("wall_time")
    rep["config"] = cfg.to_dict()
    io.write_json(args.report, rep)
    csv_path = Path(args.report).with_suffix(".csv")
    io.atomic_write(csv_path, report.to_csv())
    best_val = min(report.val_loss) if report.val_loss else float("nan")
    print(f"best validation mean L_stiff {best_val:.4e} at epoch {report.best_epoch}")
    print(f"phase-1 volume fraction {phase_volume_fractions(best)[0]:.6f}")
    if report.val_loss and not np.isfinite(best_val):
        raise NonFinite("final validation loss is not finite", epoch=cfg.epochs)
    return [args.out_params, args.report, str(csv_path)], {
        "seed": cfg.seed, "epoch_wall_time": wall, "config": cfg.to_dict()}


def cmd_evaluate(args):
    from .training import _stiff_terms
    from .block import forward_batch

    params = _load_params(args.params)
    ds = _load_dataset(args.data)
    C, _ = forward_batch(params, ds.C_p1, ds.C_p2)
    terms, _, _ = _stiff_terms(C, ds.C_dns)
    res = {"n_samples": len(ds), "mean_L_stiff": float(np.mean(terms)),
           "max_L_stiff": float(np.max(terms)), "vf": list(phase_volume_fractions(params))}
    print(f"samples {res['n_samples']}  mean L_stiff {res['mean_L_stiff']:.4e}  "
          f"max L_stiff {res['max_L_stiff']:.4e}")
    if args.out:
        io.write_json(args.out, res)
        return [args.out], {}
    return [], {}


def _write_response(path, response):
    if str(path).endswith(".csv"):
        io.atomic_write(path, response.to_csv())
    else:
        io.write_json(path, response.to_dict())


def cmd_predict(args):
    from .materials import MaterialMap
    from .online import OnlinePredictor
    from .program import LoadingProgram

    params = _load_params(args.params)
    mat_doc, prog_doc = io.read_json(args.materials), io.read_json(args.program)
    try:
        materials = MaterialMap.from_dict(mat_doc)
    except (KeyError, TypeError, ValueError) as exc:
        raise io.InputError(f"{args.materials}: invalid material file: {exc}") from None
    try:
        program = LoadingProgram.from_dict(prog_doc)
    except (KeyError, TypeError, ValueError) as exc:
        raise io.InputError(f"{args.program}: invalid loading program: {exc}") from None
    pred = OnlinePredictor(params, materials, tol=args.tol, max_iter=args.max_iter)
    try:
        response = pred.run(program, bisections=args.bisections)
    except NoConvergence as exc:
        _write_response(args.out, exc.response)
        exc.outputs = [args.out]
        raise
    _write_response(args.out, response)
    s = response.stress_array()[-1]
    print(f"{len(response)} increments, max iterations {max(response.iterations)}")
    print("final stress " + " ".join(f"{x:.6e}" for x in s))
    return [args.out], {}


def cmd_interpolate(args):
    low, high = _load_params(args.low), _load_params(args.high)
    if args.rho is not None:
        rho = args.rho
    else:
        rho = interpolation_coefficient(phase_volume_fractions(low)[1],
                                        phase_volume_fractions(high)[1], args.vf_new)
    if not 0.0 <= rho <= 1.0:
        raise io.InputError(f"interpolation coefficient {rho} outside [0, 1]")
    out = interpolate_params(low, high, rho)
    io.write_json(args.out, out.to_dict())
    print(f"rho {rho:.6f}  phase-2 volume fraction {phase_volume_fractions(out)[1]:.6f}")
    return [args.out], {"rho": rho}


def cmd_rescale(args):
    params = _load_params(args.params)
    out = rescale_to_volume_fraction(params, args.vf_new)
    io.write_json(args.out, out.to_dict())
    print(f"phase-2 volume fraction {phase_volume_fractions(out)[1]:.12f}")
    return [args.out], {}


def cmd_verify(args):
    from .verify import format_table, run_suites

    checks = run_suites(args.suite)
    print(format_table(checks))
    failed = [c for c in checks if not c.passed]
    print(f"{len(checks) - len(failed)}/{len(checks)} checks passed")
    return [], {"failed": len(failed)}


COMMANDS = {"generate": cmd_generate, "train": cmd_train, "evaluate": cmd_evaluate,
            "predict": cmd_predict, "interpolate": cmd_interpolate, "rescale": cmd_rescale,
            "verify": cmd_verify}
_INPUT_FLAGS = ("data", "config", "init", "params", "materials", "program", "low", "high")


def _thread_limit(requested):
    if requested is None:
        env = os.environ.get(THREADS_ENV)
        if env:
            try:
                requested = int(env)
            except ValueError:
                raise UsageError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
    if requested is None:
        return None
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=requested)


def _run(args):
    t0 = time.perf_counter()
    outputs, extra = COMMANDS[args.command](args)
    if outputs:
        inputs = [getattr(args, k) for k in _INPUT_FLAGS if getattr(args, k, None)]
        seed = extra.pop("seed", getattr(args, "seed", None))
        io.write_manifest(outputs[0], args.command, _options(args), inputs, outputs, seed=seed,
                          wall_time=time.perf_counter() - t0, extra=extra)
    return EXIT_FAIL if extra.get("failed") else EXIT_OK


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        limiter = _thread_limit(args.threads)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    try:
        return _run(args)
    except NonFinite as exc:
        print(f"error: {exc} (epoch {exc.epoch}, sample {exc.sample})", file=sys.stderr)
        return EXIT_NONFINITE
    except NoConvergence as exc:
        print(f"error: {exc} at increment {exc.increment}; partial results written",
              file=sys.stderr)
        return EXIT_NOCONV
    except (io.InputError, DepthMismatch, UsageError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DmnError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    finally:
        if "limiter" in locals() and limiter is not None:
            limiter.restore_original_limits()


if __name__ == "__main__":
    sys.exit(main())
