"""Experiment harness: every study in the package as a reproducible subcommand.

Each subcommand resolves an ExperimentSpec from defaults, an optional TOML
config, and command-line flags (flags win), then writes CSV artifacts that are
byte-identical for identical (spec, seed). CSVs are UTF-8 with LF endings,
'.' decimals, floats at 17 significant digits, and carry one provenance
comment line (# spec hash, seed, artifact version, policy knobs).

Set EXTRAPLAB_WORKERS to fan the independent runs of fig1/fig2/sweep-dstar
out to a process pool; results are collected in fixed order, so the artifacts
do not depend on the worker count.
"""
from __future__ import annotations

import argparse
import concurrent.futures
import csv
import hashlib
import json
import os
import sys
from dataclasses import asdict, dataclass

import numpy as np

try:
    import tomllib
except ImportError:  # Python 3.10
    import tomli as tomllib

from . import datagen, diagnostics, nonlinear, training
from .model import LinearRNN
from .objective import GradTriple, MemorylessTeacher, bptt_grad, empirical_loss
from .objective import population_grad, population_loss

__version__ = "0.1.0"

WORKERS_ENV = "EXTRAPLAB_WORKERS"

EXPERIMENTS = (
    "fig1", "fig2", "fig3", "fig4", "sweep-dstar",
    "train", "certify", "gradcheck", "bad-solutions",
)

_BASE_DEFAULTS = dict(
    model="all",
    d=30,
    k=5,
    wstar=1.0,
    dstar=3,
    teacher="memoryless",
    init="xavier",
    alpha=None,
    sigma2=1e-2,
    optimizer="adam",
    lr=1e-3,
    steps=8000,
    batch=128,
    stop_tol=0.0,
    record_every=None,
    lengths="1-15",
    n_mc=10000,
    adversarial=False,
    l_adv=10,
    n_per_length=2000,
    delta=1e-3,
    seed=0,
    out=".",
    models="linear",
    dstars="1,2,4,6,8",
    n_configs=25,
)

# Artifact policy per experiment; anything here is still overridable by
# config file or flags and is echoed in the CSV provenance line.
_EXPERIMENT_DEFAULTS: dict[str, dict] = {
    "fig1": {"steps": 40000},
    "fig2": {"teacher": "lds", "steps": 60000},
    "fig3": {"init": "symmetric", "sigma2": 1e-9, "optimizer": "gd-backtracking",
             "lr": 1.0, "steps": 100000, "stop_tol": 1e-12, "model": "linear"},
    "fig4": {"init": "identity-scaled", "sigma2": 1e-5, "optimizer": "gd-backtracking",
             "lr": 0.2, "steps": 200000, "stop_tol": 1e-10, "model": "linear"},
    "sweep-dstar": {"d": 200, "teacher": "lds", "lengths": "6-10", "steps": 40000},
    "train": {"model": "linear", "steps": 5000},
    "certify": {"d": 4, "k": 6, "optimizer": "gd-backtracking", "lr": 0.5,
                "steps": 200000, "stop_tol": 1e-14},
    "gradcheck": {},
    "bad-solutions": {},
}


class UsageError(ValueError):
    """Invalid experiment spec; the message names the offending field."""


@dataclass
class ExperimentSpec:
    """Flat, JSON-serializable description of one harness invocation."""

    experiment: str
    model: str
    d: int
    k: int
    wstar: float
    dstar: int
    teacher: str
    init: str
    alpha: float | None
    sigma2: float
    optimizer: str
    lr: float
    steps: int
    batch: int
    stop_tol: float
    record_every: int | None
    lengths: str
    n_mc: int
    adversarial: bool
    l_adv: int
    n_per_length: int
    delta: float
    seed: int
    out: str
    models: str
    dstars: str
    n_configs: int


def parse_lengths(text: str) -> list[int]:
    """Parse "1-15" or "1,2,5-8" into a sorted list of positive ints."""
    out: set[int] = set()
    try:
        for part in str(text).split(","):
            part = part.strip()
            if not part:
                continue
            if "-" in part:
                lo, hi = part.split("-", 1)
                out.update(range(int(lo), int(hi) + 1))
            else:
                out.add(int(part))
    except ValueError:
        raise UsageError(f"lengths: could not parse {text!r}") from None
    if not out or min(out) < 1:
        raise UsageError(f"lengths: could not parse {text!r} into positive integers")
    return sorted(out)


def validate_spec(spec: ExperimentSpec):
    if spec.experiment not in EXPERIMENTS:
        raise UsageError(f"experiment: unknown {spec.experiment!r}")
    if spec.model not in ("all", "linear", "gru", "lstm"):
        raise UsageError(f"model: must be all|linear|gru|lstm, got {spec.model!r}")
    if spec.d < 1:
        raise UsageError(f"d: must be positive, got {spec.d}")
    if spec.k < 2:
        raise UsageError(f"k: must be >= 2, got {spec.k}")
    if spec.wstar == 0:
        raise UsageError("wstar: must be nonzero")
    if spec.dstar < 1:
        raise UsageError(f"dstar: must be positive, got {spec.dstar}")
    if spec.teacher not in ("memoryless", "lds"):
        raise UsageError(f"teacher: must be memoryless|lds, got {spec.teacher!r}")
    if spec.init not in ("symmetric", "xavier", "identity-scaled"):
        raise UsageError(f"init: must be symmetric|xavier|identity-scaled, got {spec.init!r}")
    if spec.optimizer not in training.OPTIMIZER_KINDS:
        raise UsageError(f"optimizer: must be one of {training.OPTIMIZER_KINDS}")
    if spec.lr <= 0:
        raise UsageError(f"lr: must be positive, got {spec.lr}")
    if spec.steps < 0:
        raise UsageError(f"steps: must be nonnegative, got {spec.steps}")
    if spec.batch < 1:
        raise UsageError(f"batch: must be positive, got {spec.batch}")
    if spec.n_mc < 2:
        raise UsageError(f"n_mc: must be >= 2, got {spec.n_mc}")
    if spec.l_adv <= spec.k:
        raise UsageError(f"l_adv: must exceed k, got l_adv={spec.l_adv} k={spec.k}")
    if spec.n_per_length < 1:
        raise UsageError(f"n_per_length: must be positive, got {spec.n_per_length}")
    if spec.seed < 0:
        raise UsageError(f"seed: must be nonnegative, got {spec.seed}")
    if spec.sigma2 <= 0:
        raise UsageError(f"sigma2: must be positive, got {spec.sigma2}")
    parse_lengths(spec.lengths)
    for tok in spec.dstars.split(","):
        if not tok.strip().isdigit() or int(tok) < 1:
            raise UsageError(f"dstars: bad entry {tok!r}")
    for tok in spec.models.split(","):
        if tok.strip() not in ("linear", "gru", "lstm"):
            raise UsageError(f"models: bad entry {tok!r}")


def spec_hash(spec: ExperimentSpec) -> str:
    """Short digest of everything that shapes the numbers.

    The output directory is excluded so a rerun into a different folder
    produces byte-identical files.
    """
    payload = {k: v for k, v in asdict(spec).items() if k != "out"}
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:12]


def provenance(spec: ExperimentSpec) -> str:
    return (
        f"# spec={spec_hash(spec)} seed={spec.seed} version={__version__} "
        f"experiment={spec.experiment} policy: optimizer={spec.optimizer} lr={spec.lr:g} "
        f"steps={spec.steps} batch={spec.batch} init={spec.init} teacher={spec.teacher}"
    )


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return f"{v:.17g}"
    return str(v)


def write_csv(path: str, header: list[str], rows, spec: ExperimentSpec, flag: str = ""):
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(provenance(spec) + "\n")
        if flag:
            f.write(f"# {flag}\n")
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    print(f"wrote {path} ({len(rows)} rows)")


def build_teacher(spec: ExperimentSpec):
    if spec.teacher == "memoryless":
        return MemorylessTeacher(np.array([[spec.wstar]]))
    return datagen.sample_lds_teacher(
        spec.dstar, n=1, m=1, k=spec.k, seed=spec.seed, index=spec.dstar
    )


def _init_spec(spec: ExperimentSpec) -> training.InitSpec:
    return training.InitSpec(
        scheme=spec.init, alpha=spec.alpha, sigma2=spec.sigma2, seed=spec.seed
    )


def _opt_spec(spec: ExperimentSpec) -> training.OptimizerSpec:
    return training.OptimizerSpec(
        kind=spec.optimizer, lr=spec.lr, max_steps=spec.steps, stop_tol=spec.stop_tol
    )


def train_linear(spec: ExperimentSpec, teacher, regime: str) -> training.TrainRecord:
    """Train one linear student from an experiment config in the honest or adversarial regime."""
    model = training.init(spec.d, 1, 1, _init_spec(spec))
    if regime == "adversarial":
        dataset = datagen.make_adversarial(
            teacher, spec.k, spec.l_adv, spec.n_per_length, spec.seed
        )
        objective = training.DatasetObjective(dataset, batch=spec.batch, seed=spec.seed)
    else:
        objective = training.StreamObjective(teacher, spec.k, spec.batch, seed=spec.seed)
    record_every = spec.record_every or max(1, spec.steps // 2000)
    return training.train(model, objective, _opt_spec(spec), record_every=record_every)


def train_gated(spec: ExperimentSpec, teacher, kind: str, regime: str) -> nonlinear.GatedCell:
    cell = nonlinear.init_cell(kind, spec.d, teacher.n, teacher.m, seed=spec.seed)
    dataset = None
    if regime == "adversarial":
        dataset = datagen.make_adversarial(
            teacher, spec.k, spec.l_adv, spec.n_per_length, spec.seed
        )
    trained, _ = nonlinear.train_cell(
        cell, teacher, spec.k, steps=spec.steps, batch=spec.batch,
        lr=spec.lr, seed=spec.seed, dataset=dataset,
    )
    return trained


def extrapolation_rows(spec: ExperimentSpec, model_kind: str, regime: str) -> list[tuple]:
    """(model, regime, length, mse, stderr) rows for one grid cell."""
    teacher = build_teacher(spec)
    lengths = parse_lengths(spec.lengths)
    if model_kind == "linear":
        record = train_linear(spec, teacher, regime)
        curve = diagnostics.extrapolation_mse(record.final_model, teacher, lengths)
        stderr = {l: 0.0 for l in lengths}
    else:
        cell = train_gated(spec, teacher, model_kind, regime)
        curve = diagnostics.extrapolation_mse(
            cell, teacher, lengths, mode="mc", n_mc=spec.n_mc, seed=spec.seed
        )
        stderr = curve.stderr
    return [
        (model_kind, regime, l, curve.mse[l], stderr[l]) for l in lengths
    ]


def _combo_worker(args: tuple) -> list[tuple]:
    spec_dict, model_kind, regime = args
    return extrapolation_rows(ExperimentSpec(**spec_dict), model_kind, regime)


def worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _fan_out(tasks: list[tuple], fn) -> list:
    workers = worker_count()
    if workers == 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))


def run_extrapolation_grid(spec: ExperimentSpec) -> int:
    models = ("linear", "gru", "lstm") if spec.model == "all" else (spec.model,)
    tasks = [
        (asdict(spec), mk, regime) for mk in models for regime in ("honest", "adversarial")
    ]
    results = _fan_out(tasks, _combo_worker)
    rows = [row for chunk in results for row in chunk]
    path = os.path.join(spec.out, "extrapolation.csv")
    write_csv(path, ["model", "regime", "length", "mse", "stderr"], rows, spec)
    return 0


def run_fig3(spec: ExperimentSpec) -> int:
    teacher = build_teacher(spec)
    record = train_linear(spec, teacher, "honest")
    profile = diagnostics.slackness_profile(record.final_model)
    rows = []
    for s in range(profile.u.shape[0]):
        for i in range(profile.u.shape[1]):
            rows.append(
                (s + 1, profile.eigenvalues[s], profile.u[s, i], profile.products[s, i])
            )
    path = os.path.join(spec.out, "slackness.csv")
    write_csv(path, ["index", "lambda", "u", "product"], rows, spec)
    print(
        f"final loss {record.loss[-1]:.3e} after {record.steps_taken} steps "
        f"({record.stop_reason}); max |lambda*u| = {profile.max_product:.3e}"
    )
    return 0


def _dynamics_rows(record: training.TrainRecord) -> list[tuple]:
    return [
        (record.steps[i], record.loss[i], record.norm_a[i], record.norm_b[i],
         record.norm_c[i], record.asym_a[i], record.asym_bc[i])
        for i in range(len(record.steps))
    ]


_DYNAMICS_HEADER = ["step", "loss", "norm_A", "norm_B", "norm_C", "asym_A", "asym_BC"]


def run_fig4(spec: ExperimentSpec) -> int:
    if spec.alpha is None:
        alpha = float(datagen.generator(spec.seed, datagen.STREAM_INIT, 1).uniform(0.0, 1.0))
        spec = ExperimentSpec(**{**asdict(spec), "alpha": alpha})
        print(f"drew alpha = {alpha:.6f}")
    teacher = build_teacher(spec)
    objective = training.PopulationObjective(teacher, spec.k)
    model = training.init(spec.d, 1, 1, _init_spec(spec))
    record_every = spec.record_every or max(1, spec.steps // 2000)
    try:
        record = training.train(model, objective, _opt_spec(spec), record_every=record_every)
    except training.DivergenceError as e:
        path = os.path.join(spec.out, "dynamics.csv")
        write_csv(path, _DYNAMICS_HEADER, _dynamics_rows(e.record), spec,
                  flag=f"diverged at step {e.record.steps_taken}")
        return 3
    path = os.path.join(spec.out, "dynamics.csv")
    write_csv(path, _DYNAMICS_HEADER, _dynamics_rows(record), spec)
    print(
        f"final loss {record.loss[-1]:.3e} ({record.stop_reason}); "
        f"||B|| {record.norm_b[0]:.3e} -> {record.norm_b[-1]:.3e}"
    )
    return 0


def _dstar_worker(args: tuple) -> tuple:
    spec_dict, dstar, model_kind = args
    spec = ExperimentSpec(**{**spec_dict, "dstar": dstar, "teacher": "lds"})
    teacher = build_teacher(spec)
    lengths = parse_lengths(spec.lengths)
    if model_kind == "linear":
        record = train_linear(spec, teacher, "honest")
        curve = diagnostics.extrapolation_mse(record.final_model, teacher, lengths)
    else:
        cell = train_gated(spec, teacher, model_kind, "honest")
        curve = diagnostics.extrapolation_mse(
            cell, teacher, lengths, mode="mc", n_mc=spec.n_mc, seed=spec.seed
        )
    mean_mse = float(np.mean([curve.mse[l] for l in lengths]))
    return (dstar, model_kind, mean_mse)


def run_sweep_dstar(spec: ExperimentSpec) -> int:
    dstars = [int(t) for t in spec.dstars.split(",")]
    models = [t.strip() for t in spec.models.split(",")]
    tasks = [(asdict(spec), ds, mk) for ds in dstars for mk in models]
    rows = _fan_out(tasks, _dstar_worker)
    path = os.path.join(spec.out, "dstar.csv")
    write_csv(path, ["dstar", "model", "mean_extrap_mse"], rows, spec)
    return 0


def run_train(spec: ExperimentSpec) -> int:
    teacher = build_teacher(spec)
    kind = "linear" if spec.model == "all" else spec.model
    path = os.path.join(spec.out, "dynamics.csv")
    if kind != "linear":
        cell = nonlinear.init_cell(kind, spec.d, teacher.n, teacher.m, seed=spec.seed)
        dataset = None
        if spec.adversarial:
            dataset = datagen.make_adversarial(
                teacher, spec.k, spec.l_adv, spec.n_per_length, spec.seed
            )
        cell, losses = nonlinear.train_cell(
            cell, teacher, spec.k, steps=spec.steps, batch=spec.batch,
            lr=spec.lr, seed=spec.seed, dataset=dataset,
        )
        every = spec.record_every or max(1, spec.steps // 2000)
        nan = float("nan")
        rows = [
            (i, losses[i], nan, nan, nan, nan, nan)
            for i in range(0, len(losses), every)
        ]
        write_csv(path, _DYNAMICS_HEADER, rows, spec)
        curve = diagnostics.extrapolation_mse(
            cell, teacher, parse_lengths(spec.lengths), mode="mc",
            n_mc=spec.n_mc, seed=spec.seed,
        )
        for l, v in sorted(curve.mse.items()):
            print(f"extrapolation mse at length {l}: {v:.6e}")
        return 0
    regime = "adversarial" if spec.adversarial else "honest"
    try:
        record = train_linear(spec, teacher, regime)
    except training.DivergenceError as e:
        write_csv(path, _DYNAMICS_HEADER, _dynamics_rows(e.record), spec,
                  flag=f"diverged at step {e.record.steps_taken}")
        return 3
    write_csv(path, _DYNAMICS_HEADER, _dynamics_rows(record), spec)
    print(f"final loss {record.loss[-1]:.6e} after {record.steps_taken} steps ({record.stop_reason})")
    if spec.teacher == "memoryless":
        report = diagnostics.diagnostics_report(record.final_model, teacher)
        print(
            f"extrapolates: {report.extrapolates} "
            f"(cb_gap {report.check.cb_gap:.3e}, max lag gap {report.check.max_lag_gap:.3e} "
            f"at lag {report.check.worst_lag})"
        )
        for note in report.notes:
            print(f"note: {note}")
    return 0


def run_certify(spec: ExperimentSpec) -> int:
    teacher = build_teacher(spec)
    model = training.init(spec.d, 1, 1, _init_spec(spec))
    objective = training.PopulationObjective(teacher, spec.k)
    record = training.train(model, objective, _opt_spec(spec),
                            record_every=max(1, spec.steps // 100))
    final = record.final_model
    print(f"trained to loss {record.loss[-1]:.3e} in {record.steps_taken} steps ({record.stop_reason})")
    cert = diagnostics.ch_certificate(final, tol=1e-6)
    check = diagnostics.check_extrapolation(final, teacher, horizon=max(200, 20 * spec.d), tol=1e-5)
    norm_a = float(np.sqrt(np.sum(final.A ** 2)))
    resid_bound = 1e-8 * (1.0 + norm_a) ** 4
    ok = cert.clean and check.ok and cert.char_residual <= resid_bound
    print(f"lag-1..{spec.d} gaps: {' '.join(f'{g:.3e}' for g in cert.gaps)}")
    print(f"char residual {cert.char_residual:.3e} (bound {resid_bound:.3e}); "
          f"sum |rho| = {cert.coeff_abs_sum:.6g}")
    print(f"impulse check to lag {check.horizon}: cb_gap {check.cb_gap:.3e}, "
          f"max lag gap {check.max_lag_gap:.3e} at lag {check.worst_lag}")
    print("certificate PASS" if ok else "certificate FAIL")
    return 0 if ok else 1


def _fd_triple(fn, model: LinearRNN, h: float = 1e-6) -> GradTriple:
    """Central finite differences of a scalar function of the weight triple."""
    blocks = {}
    for name, w in model.weights().items():
        g = np.zeros_like(w)
        for idx in np.ndindex(w.shape):
            orig = w[idx]
            w[idx] = orig + h
            hi = fn(model)
            w[idx] = orig - h
            lo = fn(model)
            w[idx] = orig
            g[idx] = (hi - lo) / (2.0 * h)
        blocks[name] = g
    return GradTriple(dA=blocks["A"], dB=blocks["B"], dC=blocks["C"])


def _rel_gap(analytic: np.ndarray, fd: np.ndarray) -> float:
    return float(np.max(np.abs(analytic - fd)) / (1e-12 + np.max(np.abs(fd))))


def run_gradcheck(spec: ExperimentSpec) -> int:
    rng = np.random.default_rng(spec.seed)
    worst = 0.0
    teacher_w = float(rng.standard_normal() + 2.0)
    for case in range(spec.n_configs):
        d = int(rng.integers(2, 7))
        k = int(rng.integers(2, 7))
        model = LinearRNN(
            rng.standard_normal((d, d)) / np.sqrt(d),
            rng.standard_normal((d, 1)),
            rng.standard_normal((1, d)),
        )
        teacher = MemorylessTeacher(np.array([[teacher_w]]))
        analytic = population_grad(model, teacher, k)
        fd = _fd_triple(lambda mo: population_loss(mo, teacher, k), model)
        gap = max(_rel_gap(analytic.dA, fd.dA), _rel_gap(analytic.dB, fd.dB),
                  _rel_gap(analytic.dC, fd.dC))
        worst = max(worst, gap)
        xs = rng.standard_normal((4, k, 1))
        ys = rng.standard_normal((4, 1))
        _, bp = bptt_grad(model, (xs, ys))
        fd = _fd_triple(lambda mo: empirical_loss(mo, (xs, ys)), model)
        gap = max(_rel_gap(bp.dA, fd.dA), _rel_gap(bp.dB, fd.dB), _rel_gap(bp.dC, fd.dC))
        worst = max(worst, gap)
    cell_worst = 0.0
    for kind in ("gru", "lstm"):
        for case in range(max(2, spec.n_configs // 5)):
            d = int(rng.integers(2, 5))
            k = int(rng.integers(2, 5))
            cell = nonlinear.init_cell(kind, d, 1, 1, seed=int(rng.integers(0, 2**32)))
            xs = rng.standard_normal((3, k, 1))
            ys = rng.standard_normal((3, 1))
            _, grads = nonlinear.cell_bptt(cell, xs, ys)
            for name, w in cell.params.items():
                g = np.zeros_like(w)
                for idx in np.ndindex(w.shape):
                    orig = w[idx]
                    w[idx] = orig + 1e-6
                    hi = nonlinear.cell_loss(cell, xs, ys)
                    w[idx] = orig - 1e-6
                    lo = nonlinear.cell_loss(cell, xs, ys)
                    w[idx] = orig
                    g[idx] = (hi - lo) / 2e-6
                cell_worst = max(cell_worst, _rel_gap(grads[name], g))
    print(f"linear gradient max relative error:    {worst:.3e}")
    print(f"nonlinear gradient max relative error: {cell_worst:.3e}")
    ok = worst <= 1e-6 and cell_worst <= 1e-6
    print("gradcheck PASS" if ok else "gradcheck FAIL")
    return 0 if ok else 1


def run_bad_solutions(spec: ExperimentSpec) -> int:
    teacher = MemorylessTeacher(np.array([[spec.wstar]]))
    d = max(spec.d, spec.k)
    cyclic = training.make_cyclic_bad(d, spec.k, spec.wstar)
    loss = population_loss(cyclic, teacher, spec.k)
    check = diagnostics.check_extrapolation(cyclic, teacher)
    print(f"cyclic (d={d}, k={spec.k}): population loss {loss:.3e}, "
          f"lag-{d} impulse {float(np.squeeze(np.sum(cyclic.C @ np.linalg.matrix_power(cyclic.A, d) @ cyclic.B))):.6g}, "
          f"extrapolates: {check.ok}")
    diag = training.make_diag_bad(spec.k, d, abs(spec.wstar), spec.delta)
    loss = population_loss(diag, teacher, spec.k)
    closed = spec.delta**2 * (4.0**spec.k - 1.0) / 6.0
    curve = diagnostics.extrapolation_mse(diag, teacher, [spec.k, spec.k + 5])
    print(f"diagonal (delta={spec.delta:g}): population loss {loss:.6e} "
          f"(closed form {closed:.6e}), extrapolation mse at length {spec.k + 5}: "
          f"{curve.mse[spec.k + 5]:.6e}")
    print(f"verdicts: cyclic extrapolates={check.ok}, "
          f"diag extrapolates={diagnostics.check_extrapolation(diag, teacher).ok}")
    return 0


def run_experiment(spec: ExperimentSpec) -> int:
    """Dispatch a validated spec; returns a process exit status."""
    validate_spec(spec)
    os.makedirs(spec.out, exist_ok=True)
    if spec.experiment in ("fig1", "fig2"):
        return run_extrapolation_grid(spec)
    if spec.experiment == "fig3":
        return run_fig3(spec)
    if spec.experiment == "fig4":
        return run_fig4(spec)
    if spec.experiment == "sweep-dstar":
        return run_sweep_dstar(spec)
    if spec.experiment == "train":
        return run_train(spec)
    if spec.experiment == "certify":
        return run_certify(spec)
    if spec.experiment == "gradcheck":
        return run_gradcheck(spec)
    return run_bad_solutions(spec)


def build_spec(experiment: str, overrides: dict, config_path: str | None = None) -> ExperimentSpec:
    """Resolve defaults <- experiment policy <- config file <- explicit flags."""
    merged = dict(_BASE_DEFAULTS)
    merged.update(_EXPERIMENT_DEFAULTS.get(experiment, {}))
    if config_path:
        with open(config_path, "rb") as f:
            cfg = tomllib.load(f)
        for key, value in cfg.items():
            key = key.replace("-", "_")
            if key not in merged:
                raise UsageError(f"config: unknown key {key!r}")
            merged[key] = value
    for key, value in overrides.items():
        if value is not None:
            merged[key] = value
    spec = ExperimentSpec(experiment=experiment, **merged)
    validate_spec(spec)
    return spec


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="extraplab",
        description="Gradient descent on linear recurrent models: extrapolation experiments.",
    )
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name)
        p.add_argument("--model", choices=["all", "linear", "gru", "lstm"])
        p.add_argument("--d", type=int)
        p.add_argument("--k", type=int)
        p.add_argument("--wstar", type=float)
        p.add_argument("--dstar", type=int)
        p.add_argument("--teacher", choices=["memoryless", "lds"])
        p.add_argument("--init", choices=["symmetric", "xavier", "identity-scaled"])
        p.add_argument("--alpha", type=float)
        p.add_argument("--sigma2", type=float)
        p.add_argument("--optimizer", choices=list(training.OPTIMIZER_KINDS))
        p.add_argument("--lr", type=float)
        p.add_argument("--steps", type=int)
        p.add_argument("--batch", type=int)
        p.add_argument("--stop-tol", dest="stop_tol", type=float)
        p.add_argument("--record-every", dest="record_every", type=int)
        p.add_argument("--lengths")
        p.add_argument("--n-mc", dest="n_mc", type=int)
        p.add_argument("--adversarial", action="store_const", const=True)
        p.add_argument("--l-adv", dest="l_adv", type=int)
        p.add_argument("--n-per-length", dest="n_per_length", type=int)
        p.add_argument("--delta", type=float)
        p.add_argument("--seed", type=int)
        p.add_argument("--out")
        p.add_argument("--models")
        p.add_argument("--dstars")
        p.add_argument("--n-configs", dest="n_configs", type=int)
        p.add_argument("--config")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {k: v for k, v in vars(args).items() if k not in ("experiment", "config")}
    try:
        spec = build_spec(args.experiment, overrides, args.config)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 2
    try:
        return run_experiment(spec)
    except training.DivergenceError as e:
        print(f"error: training diverged at step {e.record.steps_taken}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
