"""Command line: ``conspinn {train,reference,evaluate}``.

Configuration is an INI file with one section per module; every key is
optional, unknown sections or keys are rejected. Example::

    [problem]
    name = fp_test1

    [network]
    hidden = 64, 64

    [trainer]
    mode = augmented
    epochs = 3000
    lr = 1e-3
    beta = 10
    mu = 10
    eta_dual = 1e-2

    [collocation]
    n_c = 16

    [fp]
    q = 1.0

Exit codes: 0 success, 2 configuration/input error, 3 numerical abort.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import json
import logging
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .diffnet import load_params, save_params
from .errors import ConfigError, InvalidInputError, NonFiniteError
from .kinetic import FP_TEST1, FP_TEST2, BoltzmannConfig, FPConfig
from .reference import (ReferenceSampler, as_function, conservation_traces, fd_solve_fp, load_fdgrid,
                        save_fdgrid)
from .trainer import MODES, PROBLEMS, RunReport, TrainerConfig, make_problem, train

log = logging.getLogger("conspinn")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
CSV_FORMAT_VERSION = 1

EPOCH_COLUMNS = ["epoch", "loss_total", "loss_GE", "loss_IC", "loss_BC",
                 "constraint_norm_1", "constraint_norm_2", "constraint_norm_3", "constraint_norm_4",
                 "error_linf_l2", "time_avg_mass"]
TRACE_COLUMNS = ["t", "mass", "momentum_x", "momentum_y", "energy"]
SLICE_COLUMNS = ["t", "x", "v", "f_reference", "f_network"]

# section -> key -> (TrainerConfig field or physics field, parser)
_INT, _FLOAT, _STR = int, float, str


def _bool(s: str) -> bool:
    low = s.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _ints(s: str) -> tuple[int, ...]:
    return tuple(int(x) for x in s.replace(",", " ").split())


def _floats(s: str):
    vals = tuple(float(x) for x in s.replace(",", " ").split())
    return vals[0] if len(vals) == 1 else vals


SCHEMA = {
    "problem": {"name": _STR},
    "network": {"hidden": _ints},
    "trainer": {"mode": _STR, "epochs": _INT, "lr": _FLOAT, "beta": _floats, "mu": _FLOAT,
                "eta_dual": _FLOAT, "dual_every": _INT, "seed": _INT, "reproducible": _bool,
                "checkpoint_every": _INT},
    "collocation": {"n_c": _INT, "n_i": _INT, "n_b": _INT, "m_time": _INT, "n_quad_x": _INT,
                    "n_quad_v": _INT, "n_eval_times": _INT, "n_trace": _INT},
    "fp": {"q": _FLOAT, "p": _FLOAT, "V": _FLOAT, "T": _FLOAT, "initial": _STR},
    "boltzmann": {"V": _FLOAT, "T": _FLOAT, "eps": _FLOAT, "n_vstar": _INT, "n_angle": _INT, "sigma": _FLOAT},
    "reference": {"fd_nx": _INT, "fd_nv": _INT, "fd_nt": _INT},
    "output": {"out_dir": _STR},
}


@dataclass
class ExperimentConfig:
    trainer: TrainerConfig = field(default_factory=TrainerConfig)
    fd_nt: int | None = None
    checkpoint_every: int = 0
    out_dir: str = "runs/default"

    def to_dict(self) -> dict:
        return {"trainer": self.trainer.to_dict(), "fd_nt": self.fd_nt,
                "checkpoint_every": self.checkpoint_every, "out_dir": self.out_dir}


def parse_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str  # keys are case-sensitive (V, T)
    try:
        cp.read_string(path.read_text(), source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    values: dict[str, dict] = {}
    for section in cp.sections():
        if section not in SCHEMA:
            raise ConfigError(f"{path}: unknown section [{section}]")
        values[section] = {}
        for key, raw in cp.items(section):
            if key not in SCHEMA[section]:
                raise ConfigError(f"{path}: unknown key {key!r} in [{section}]")
            try:
                values[section][key] = SCHEMA[section][key](raw)
            except ValueError as exc:
                raise ConfigError(f"{path}: bad value for {section}.{key}: {exc}") from exc
    return build_config(values)


def build_config(values: dict) -> ExperimentConfig:
    problem = values.get("problem", {}).get("name", "fp_test1")
    if problem not in PROBLEMS:
        raise ConfigError(f"unknown problem {problem!r}; choose from {', '.join(PROBLEMS)}")
    kwargs = {"problem": problem}
    if "hidden" in values.get("network", {}):
        kwargs["hidden"] = values["network"]["hidden"]
    trainer_sec = dict(values.get("trainer", {}))
    checkpoint_every = trainer_sec.pop("checkpoint_every", 0)
    kwargs.update(trainer_sec)
    kwargs.update(values.get("collocation", {}))
    ref = dict(values.get("reference", {}))
    fd_nt = ref.pop("fd_nt", None)
    kwargs.update(ref)
    try:
        if problem.startswith("fp"):
            if "boltzmann" in values:
                raise ConfigError("[boltzmann] section given for a Fokker-Planck problem")
            base = FP_TEST1 if problem == "fp_test1" else FP_TEST2
            kwargs["fp"] = replace(base, **values.get("fp", {}))
        else:
            if "fp" in values:
                raise ConfigError("[fp] section given for a Boltzmann problem")
            kwargs["boltzmann"] = BoltzmannConfig(**values.get("boltzmann", {}))
        trainer = TrainerConfig(**kwargs)
    except InvalidInputError as exc:
        raise ConfigError(str(exc)) from exc
    if checkpoint_every < 0:
        raise ConfigError("checkpoint_every must be >= 0")
    out_dir = values.get("output", {}).get("out_dir", "runs/default")
    return ExperimentConfig(trainer, fd_nt, checkpoint_every, out_dir)


def trainer_from_dict(d: dict) -> TrainerConfig:
    """Inverse of TrainerConfig.to_dict (used to re-create runs from report.json)."""
    d = dict(d)
    if d.get("fp") is not None:
        d["fp"] = FPConfig(**d["fp"])
    if d.get("boltzmann") is not None:
        d["boltzmann"] = BoltzmannConfig(**d["boltzmann"])
    d["hidden"] = tuple(d["hidden"])
    if isinstance(d.get("beta"), list):
        d["beta"] = tuple(d["beta"])
    return TrainerConfig(**d)


# ---------------------------------------------------------------- writers

def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def write_csv(path, columns, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def epoch_rows(report: RunReport):
    for r in report.records:
        norms = list(r.constraint_norms) + [None] * (4 - len(r.constraint_norms))
        yield [r.epoch, r.loss_total, r.loss_GE, r.loss_IC, r.loss_BC, *norms,
               r.error_vs_reference, r.time_averaged_mass]


def trace_rows(traces: dict):
    n = len(traces["t"])
    for k in range(n):
        yield [traces[c][k] if c in traces else None for c in TRACE_COLUMNS]


def write_run(report: RunReport, out, experiment: ExperimentConfig | None = None):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "epochs.csv", EPOCH_COLUMNS, epoch_rows(report))
    write_csv(out / "traces.csv", TRACE_COLUMNS, trace_rows(report.traces))
    save_params(report.params, out / "checkpoint.bin")
    config = experiment.to_dict() if experiment is not None else {"trainer": report.config}
    payload = {
        "format_version": CSV_FORMAT_VERSION,
        "config": config,
        "aborted": report.aborted,
        "abort_reason": report.abort_reason,
        "epochs_recorded": len(report.records),
        "final_record": asdict(report.records[-1]) if report.records else None,
        "linf_l2": report.final_error.get("linf_l2"),
        "per_time_l2": report.final_error.get("per_time_l2"),
        "eval_times": report.final_error.get("times"),
        "multipliers": np.asarray(report.multipliers).tolist(),
        "checkpoint": "checkpoint.bin",
    }
    (out / "report.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------- subcommands

def _load(args) -> ExperimentConfig:
    exp = parse_config(args.config) if args.config else build_config({})
    if getattr(args, "seed", None) is not None:
        exp.trainer = replace(exp.trainer, seed=args.seed)
    if getattr(args, "reproducible", False):
        exp.trainer = replace(exp.trainer, reproducible=True)
    if getattr(args, "out", None):
        exp.out_dir = args.out
    return exp


def _reference_for(exp: ExperimentConfig, problem):
    if exp.trainer.problem.startswith("fp"):
        return fd_solve_fp(exp.trainer.fp, exp.trainer.fd_nx, exp.trainer.fd_nv, exp.fd_nt)
    return problem.reference()


def cmd_train(args) -> int:
    exp = _load(args)
    modes = MODES if args.mode == "all" else ([args.mode] if args.mode else [exp.trainer.mode])
    reference = None
    status = EXIT_OK
    for mode in modes:
        run_exp = replace(exp, trainer=replace(exp.trainer, mode=mode))
        out = Path(exp.out_dir) / mode if len(modes) > 1 else Path(exp.out_dir)
        run_exp.out_dir = str(out)
        if reference is None:
            reference = _reference_for(run_exp, make_problem(run_exp.trainer))
        log.info("training %s / %s -> %s", run_exp.trainer.problem, mode, out)
        report = train(run_exp.trainer, reference=reference,
                       checkpoint_dir=out if exp.checkpoint_every else None,
                       checkpoint_every=exp.checkpoint_every)
        write_run(report, out, run_exp)
        if report.aborted:
            log.error("numerical abort (%s); last good checkpoint kept in %s", report.abort_reason, out)
            status = EXIT_NUMERIC
    return status


def _grid_matches(header_grid, exp: ExperimentConfig) -> bool:
    t = exp.trainer
    return (header_grid.cfg == t.fp and header_grid.n_x == t.fd_nx and header_grid.n_v == t.fd_nv
            and (exp.fd_nt is None or header_grid.n_t == exp.fd_nt))


def cmd_reference(args) -> int:
    exp = _load(args)
    t = exp.trainer
    if not t.problem.startswith("fp"):
        raise ConfigError("the FD reference exists only for Fokker-Planck problems; "
                          "the Boltzmann test uses the analytic BKW solution")
    out = Path(exp.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cache = out / "fd_grid.bin"
    grid = None
    if cache.exists():
        try:
            cached = load_fdgrid(cache)
            if _grid_matches(cached, exp):
                grid = cached
                log.info("cache hit: %s", cache)
        except InvalidInputError:
            log.warning("ignoring unreadable cache %s", cache)
    if grid is None:
        grid = fd_solve_fp(t.fp, t.fd_nx, t.fd_nv, exp.fd_nt)
        save_fdgrid(grid, cache)
        log.info("wrote %s", cache)
    net = None
    if args.checkpoint:
        params = load_params(args.checkpoint)
        _check_spec(params, t)
        net = as_function(params)
    X, Vv = np.meshgrid(grid.x, grid.v, indexing="ij")
    for k, time in enumerate((0.0, t.fp.T / 2, t.fp.T)):
        ref_vals = grid.values[grid.frame_index(time)]
        pts = np.stack([np.full(X.size, time), X.ravel(), Vv.ravel()], axis=1)
        net_vals = net(pts) if net is not None else [None] * X.size
        rows = ([time, x, v, r, n] for x, v, r, n in zip(X.ravel(), Vv.ravel(), ref_vals.ravel(), net_vals))
        write_csv(out / f"slices_{k}.csv", SLICE_COLUMNS, rows)
    return EXIT_OK


def _check_spec(params, trainer: TrainerConfig):
    if params.spec.input_dim != 3 or params.spec.hidden_widths != tuple(trainer.hidden):
        raise ConfigError(f"checkpoint network {params.spec.hidden_widths} does not match "
                          f"configured hidden widths {tuple(trainer.hidden)}")


def cmd_evaluate(args) -> int:
    exp = _load(args)
    t = exp.trainer
    params = load_params(args.checkpoint)
    _check_spec(params, t)
    problem = make_problem(t)
    ref = _reference_for(exp, problem)
    sampler = ReferenceSampler(ref, np.linspace(0.0, t.T, t.n_eval_times), problem.quad)
    err = sampler.error(params)
    traces = conservation_traces(params, t.problem, np.linspace(0.0, t.T, t.n_trace), problem.quad)
    out = Path(exp.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "traces.csv", TRACE_COLUMNS, trace_rows(traces))
    payload = {"format_version": CSV_FORMAT_VERSION, "config": exp.to_dict(),
               "checkpoint": str(args.checkpoint), "linf_l2": err.linf_l2,
               "per_time_l2": err.per_time_l2.tolist(), "eval_times": err.times.tolist()}
    (out / "report.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="conspinn", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    tr = sub.add_parser("train", help="train one mode (or all four) and write CSV/JSON outputs")
    tr.add_argument("--config")
    tr.add_argument("--out")
    tr.add_argument("--seed", type=int)
    tr.add_argument("--mode", choices=[*MODES, "all"])
    tr.add_argument("--reproducible", action="store_true")
    tr.set_defaults(func=cmd_train)

    rf = sub.add_parser("reference", help="solve the FD oracle and write slice CSVs")
    rf.add_argument("--config")
    rf.add_argument("--out")
    rf.add_argument("--checkpoint", help="fill the f_network column from this network")
    rf.set_defaults(func=cmd_reference)

    ev = sub.add_parser("evaluate", help="conservation traces and error of a stored network")
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--config")
    ev.add_argument("--out")
    ev.set_defaults(func=cmd_evaluate)
    return ap


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, InvalidInputError) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except NonFiniteError as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
