"""Command-line entry point.

Subcommands: gen-data, train, eval, design, verify.  Config files are flat
INI (UTF-8 key=value under named sections).  Every run writes a
resolved-config snapshot beside its outputs.  Exit codes: 0 success,
1 verification/metric failure, 2 usage or configuration errors.
"""

from __future__ import annotations

import argparse
import configparser
import os
import sys


def _apply_thread_cap():
    cap = os.environ.get("GEOFNO_THREADS")
    if cap:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, cap)


_apply_thread_cap()


class CliError(Exception):
    """Usage or configuration problem; maps to exit code 2."""


def _read_config(path, known_sections):
    if not os.path.exists(path):
        raise CliError(f"config file not found: {path}")
    parser = configparser.ConfigParser()
    parser.optionxform = str
    with open(path, "r", encoding="utf-8") as f:
        parser.read_file(f)
    out = {}
    for section in parser.sections():
        if section not in known_sections:
            raise CliError(f"unknown config section [{section}]")
        out[section] = dict(parser.items(section))
    return out


def _take(section, key, conv, default, errors):
    if key not in section:
        return default
    raw = section.pop(key)
    try:
        return conv(raw)
    except (TypeError, ValueError):
        errors.append(f"invalid value {raw!r} for key {key}")
        return default


def _bool(v):
    if v.lower() in ("1", "true", "yes", "on"):
        return True
    if v.lower() in ("0", "false", "no", "off"):
        return False
    raise ValueError(v)


def _synthetic_config(cfg_map, seed_override=None):
    from .synthetic import SyntheticConfig
    sec = dict(cfg_map.get("synthetic", {}))
    errors = []
    kwargs = {}
    fields = {
        "family": str, "n_theta": int, "n_radial": int,
        "cloud_stride_theta": int, "cloud_stride_radial": int,
        "boundary_modes": int, "outer_base": float, "inner_base": float,
        "outer_const_amp": float, "outer_mode_amp": float,
        "inner_const_amp": float, "inner_mode_amp": float, "min_gap": float,
        "source": str, "train_count": int, "test_count": int, "seed": int,
    }
    for key, conv in fields.items():
        if key in sec:
            kwargs[key] = _take(sec, key, conv, None, errors)
    if sec:
        raise CliError(f"unknown key(s) in [synthetic]: {', '.join(sorted(sec))}")
    if errors:
        raise CliError("; ".join(errors))
    if seed_override is not None:
        kwargs["seed"] = seed_override
    return SyntheticConfig(**kwargs)


def _model_config(cfg_map, bundle_manifest=None, seed_override=None):
    from .model import ModelConfig
    sec = dict(cfg_map.get("model", {}))
    errors = []
    kwargs = {}
    converters = {
        "dim": int, "io_mode": str, "in_channels": int, "out_channels": int,
        "layers": int, "width": int, "k_max": int, "temporal_k_max": int,
        "deform": _bool, "deform_freqs": int, "deform_hidden": int,
        "cond_dim": int, "seed": int,
    }
    latent = _take(sec, "latent_size", int, None, errors)
    for key, conv in converters.items():
        if key in sec:
            kwargs[key] = _take(sec, key, conv, None, errors)
    if sec:
        raise CliError(f"unknown key(s) in [model]: {', '.join(sorted(sec))}")
    if errors:
        raise CliError("; ".join(errors))
    if bundle_manifest is not None:
        kwargs.setdefault("io_mode", bundle_manifest.get("io_mode", "point_cloud"))
        kwargs.setdefault("in_channels", int(bundle_manifest.get("in_channels", "1")))
        kwargs.setdefault("out_channels", int(bundle_manifest.get("out_channels", "1")))
        if kwargs.get("deform", True) and "cond_dim" not in kwargs:
            gen_modes = bundle_manifest.get("gen.boundary_modes")
            if gen_modes is not None:
                kwargs["cond_dim"] = 2 * (1 + 2 * int(gen_modes))
    if seed_override is not None:
        kwargs["seed"] = seed_override
    dim = kwargs.get("dim", 2)
    if latent is not None:
        kwargs["latent_shape"] = (latent,) * dim
    return ModelConfig(**kwargs)


def _train_config(cfg_map, args):
    from .training import TrainConfig
    sec = dict(cfg_map.get("training", {}))
    errors = []
    kwargs = {}
    for key, conv in (("epochs", int), ("initial_lr", float),
                      ("lr_halving_period", int), ("batch_size", int),
                      ("seed", int), ("beta1", float), ("beta2", float),
                      ("eps", float)):
        if key in sec:
            kwargs[key] = _take(sec, key, conv, None, errors)
    if sec:
        raise CliError(f"unknown key(s) in [training]: {', '.join(sorted(sec))}")
    if errors:
        raise CliError("; ".join(errors))
    if args.epochs is not None:
        kwargs["epochs"] = args.epochs
    if args.lr is not None:
        kwargs["initial_lr"] = args.lr
    if args.batch is not None:
        kwargs["batch_size"] = args.batch
    if args.seed is not None:
        kwargs["seed"] = args.seed
    return TrainConfig(**kwargs)


def _write_snapshot(out_dir, entries):
    from .data import write_manifest
    os.makedirs(out_dir, exist_ok=True)
    write_manifest(os.path.join(out_dir, "resolved-config.txt"),
                   {k: str(v) for k, v in entries.items()})


# ------------------------------------------------------------------ commands

def cmd_gen_data(args):
    from .data import save_bundle
    from .synthetic import gen_synthetic
    cfg_map = _read_config(args.config, {"synthetic"})
    cfg = _synthetic_config(cfg_map, args.seed)
    bundle = gen_synthetic(cfg)
    save_bundle(bundle, args.out)
    _write_snapshot(args.out, {f"synthetic.{k}": v for k, v in cfg.entries().items()})
    print(f"wrote {len(bundle)} samples to {args.out}")
    for k in ("problem", "io_mode", "cloud_points", "train_count", "test_count",
              "config_hash"):
        print(f"  {k} = {bundle.manifest[k]}")
    return 0


def cmd_train(args):
    from .data import load_bundle, load_checkpoint
    from .training import train
    cfg_map = _read_config(args.model_config, {"model", "training"})
    train_bundle = load_bundle(args.data)
    test_bundle = load_bundle(args.test_data) if args.test_data else train_bundle
    tcfg = _train_config(cfg_map, args)
    resume = None
    if args.resume:
        model, resume = load_checkpoint(args.resume)
    else:
        mcfg = _model_config(cfg_map, train_bundle.manifest, args.seed)
        from .model import GeoFnoModel
        model = GeoFnoModel(mcfg)
    os.makedirs(args.out, exist_ok=True)
    snapshot = {f"model.{k}": v for k, v in model.config.to_dict().items()}
    snapshot.update({f"training.{k}": getattr(tcfg, k) for k in
                     ("epochs", "initial_lr", "lr_halving_period", "batch_size", "seed")})
    snapshot["data"] = args.data
    snapshot["test_data"] = args.test_data or args.data
    _write_snapshot(args.out, snapshot)
    log_path = os.path.join(args.out, "train_log.txt")
    ckpt_path = os.path.join(args.out, "checkpoint.ckpt")
    with open(log_path, "a" if args.resume else "w", encoding="utf-8") as logf:
        def log(epoch, tr, te, lr):
            logf.write(f"{epoch} {tr:.10e} {te:.10e} {lr:.10e}\n")
            if args.verbose and (epoch % 10 == 0 or epoch == tcfg.epochs - 1):
                print(f"epoch {epoch}: train {tr:.4e} test {te:.4e} lr {lr:.2e}")

        model, report = train(model, train_bundle, test_bundle, tcfg,
                              resume=resume, log=log,
                              checkpoint_path=ckpt_path,
                              checkpoint_every=args.checkpoint_every)
    with open(os.path.join(args.out, "report.txt"), "w", encoding="utf-8") as f:
        f.write(report.to_text())
    print(f"final train {report.final_train:.4e}  test {report.final_test:.4e}")
    print(f"checkpoint: {ckpt_path}")
    return 0


def cmd_eval(args):
    from .data import load_bundle, load_checkpoint
    from .training import evaluate
    model, _ = load_checkpoint(args.checkpoint)
    bundle = load_bundle(args.data)
    res = evaluate(model, bundle)
    print(f"samples: {len(bundle)}")
    print(f"relative_l2 mean:   {res.mean:.6e}")
    print(f"relative_l2 median: {res.median:.6e}")
    print(f"relative_l2 max:    {res.max:.6e}")
    print(f"seconds/instance:   {res.seconds_per_instance:.6f}")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        _write_snapshot(args.out, {"checkpoint": args.checkpoint, "data": args.data})
        with open(os.path.join(args.out, "metrics.txt"), "w", encoding="utf-8") as f:
            f.write(f"mean={res.mean:.10e}\nmedian={res.median:.10e}\n"
                    f"max={res.max:.10e}\nseconds_per_instance="
                    f"{res.seconds_per_instance:.8f}\n")
    return 0


def cmd_design(args):
    from .data import load_checkpoint, save_array
    from .design import (annulus_solver_objective, brute_force_scan,
                         make_annulus_design_problem, optimize_design,
                         verify_design)
    from .tensor import Tensor
    model, _ = load_checkpoint(args.checkpoint)
    cfg_map = _read_config(args.design_config, {"design", "synthetic"})
    syn_cfg = _synthetic_config(cfg_map)
    sec = dict(cfg_map.get("design", {}))
    errors = []
    lower = _take(sec, "lower", float, -0.2, errors)
    upper = _take(sec, "upper", float, 0.2, errors)
    initial = _take(sec, "initial", float, 0.0, errors)
    steps = _take(sec, "steps", int, 100, errors)
    lr = _take(sec, "lr", float, 1e-2, errors)
    scan_points = _take(sec, "scan_points", int, 101, errors)
    if sec:
        raise CliError(f"unknown key(s) in [design]: {', '.join(sorted(sec))}")
    if errors:
        raise CliError("; ".join(errors))

    problem = make_annulus_design_problem(model, syn_cfg, lower=lower,
                                          upper=upper, initial=initial)
    trace, theta = optimize_design(problem, steps=steps, lr=lr)
    grid, vals, best = brute_force_scan(problem, 0, num=scan_points)
    report = verify_design(problem, theta, annulus_solver_objective(syn_cfg))
    os.makedirs(args.out, exist_ok=True)
    _write_snapshot(args.out, {"checkpoint": args.checkpoint,
                               "lower": lower, "upper": upper,
                               "steps": steps, "lr": lr})
    with open(os.path.join(args.out, "trace.txt"), "w", encoding="utf-8") as f:
        f.write(trace.to_text())
    geo = problem.builder(Tensor(theta))
    save_array(os.path.join(args.out, "final_geometry.gfno"), geo.points.data)
    with open(os.path.join(args.out, "verification.txt"), "w", encoding="utf-8") as f:
        f.write(f"theta={theta[0]:.10e}\n")
        f.write(f"scan_best={grid[best]:.10e}\n")
        f.write(f"surrogate={report['surrogate']:.10e}\n")
        f.write(f"solver={report['solver']:.10e}\n")
        f.write(f"gap={report['gap']:.10e}\n")
    cell = grid[1] - grid[0]
    print(f"optimized theta: {theta[0]:.6f} (scan best {grid[best]:.6f}, "
          f"cell {cell:.6f})")
    print(f"surrogate {report['surrogate']:.6e} vs solver {report['solver']:.6e} "
          f"(gap {report['gap']:.3e})")
    return 0


def cmd_verify(args):
    from .verification import SUITES, run_suite
    names = list(SUITES) if args.suite == "all" else [args.suite]
    failed = False
    for name in names:
        rows = run_suite(name)
        for check, value, threshold, ok in rows:
            status = "PASS" if ok else "FAIL"
            print(f"[{status}] {name}.{check}: {value:.3e} (threshold {threshold})")
            failed |= not ok
    return 1 if failed else 0


def build_parser():
    p = argparse.ArgumentParser(prog="geofno",
                                description="geometry-aware Fourier neural operator")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate a synthetic dataset bundle")
    g.add_argument("--config", required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int, default=None)
    g.set_defaults(fn=cmd_gen_data)

    t = sub.add_parser("train", help="train a model on a bundle")
    t.add_argument("--data", required=True)
    t.add_argument("--test-data", default=None)
    t.add_argument("--model-config", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--epochs", type=int, default=None)
    t.add_argument("--lr", type=float, default=None)
    t.add_argument("--batch", type=int, default=None)
    t.add_argument("--seed", type=int, default=None)
    t.add_argument("--resume", default=None)
    t.add_argument("--checkpoint-every", type=int, default=0)
    t.add_argument("--verbose", action="store_true")
    t.set_defaults(fn=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint on a bundle")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--out", default=None)
    e.set_defaults(fn=cmd_eval)

    d = sub.add_parser("design", help="inverse design through a trained model")
    d.add_argument("--checkpoint", required=True)
    d.add_argument("--design-config", required=True)
    d.add_argument("--out", required=True)
    d.set_defaults(fn=cmd_design)

    v = sub.add_parser("verify", help="run invariant suites")
    v.add_argument("--suite", choices=["transforms", "gradients", "reduction",
                                       "solver", "all"], default="all")
    v.set_defaults(fn=cmd_verify)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001 - map library errors to exit codes
        from .errors import ConfigurationError, FormatError, GeofnoError
        if isinstance(e, (ConfigurationError, FormatError)):
            print(f"error: {e}", file=sys.stderr)
            return 2
        if isinstance(e, GeofnoError):
            print(f"error: {e}", file=sys.stderr)
            return 1
        raise


if __name__ == "__main__":
    sys.exit(main())
