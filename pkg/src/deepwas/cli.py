"""Command-line pipeline: simulate, precompute, train, eval, bench.

One JSON config file drives every subcommand; ``--set key.path=value``
overrides individual entries, ``--seed`` and ``--out`` override the two
global fields, and ``--threads`` (or DEEPWAS_THREADS) caps worker
parallelism. All randomness flows from the single seed through counter-based
derivation, so identical invocations produce identical files; only the
``wall_ms`` fields of the benchmark outputs vary between runs.

Exit codes: 0 success, 2 config error, 3 numerical failure, 4 IO error.
"""

import argparse
import copy
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import _kernels, ldcore, synthgen
from .errors import (
    ArgumentError,
    ConfigError,
    DeepwasError,
    DegenerateBlockError,
    EmptyInputError,
    FormatError,
    NumericalFailureError,
    ValidationError,
)
from .iterlinalg import (
    LinearOperator,
    cg_solve,
    derive_seed,
    min_ritz_value,
    nystrom_preconditioner,
    probe_matrix,
    slq_logdet,
)
from .likelihood import window_nll_grad
from .priors import (
    NetworkSpec,
    build_constant,
    build_glm,
    build_network,
    load_annotations,
    load_params,
    normalize_features,
    prior_forward,
    save_annotations,
    save_params,
)
from .trainer import TrainConfig, evaluate_heldout, rmse_log_f, train

DEFAULT_CONFIG = {
    "seed": 0,
    "out_dir": "deepwas_run",
    "simulate": {
        "num_variants": 4000,
        "bandwidth": 20,
        "decay": 0.5,
        "sample_size": 400,
        "sigma2": 0.5,
        "truth": "network",
        "truth_hidden": 16,
        "truth_init_scale": 3.0,
        "truth_log_std": 1.0,
        "d_func": 8,
        "d_pred": 3,
        "feature_window": 32,
        "min_gap": 500,
        "max_gap": 1500,
    },
    "windows": {
        "window_span": 200_000,
        "flank_span": 40_000,
        "clip_rel_tol": 1e-8,
    },
    "train": {
        "model": "network",
        "hidden": 16,
        "learning_rate": None,
        "epochs": 10,
        "warmup_steps": 100,
        "accumulation_steps": 12,
        "weight_decay": 0.01,
        "method": "dense",
        "objective": "deepwas",
        "cg_rel_tol": 1e-6,
        "cg_max_iter": 2000,
        "num_probes": 100,
        "lanczos_steps": 30,
        "probe_dist": "rademacher",
        "h2_guess": 0.5,
        "heldout_window_ids": None,
        "heldout_fraction": 0.15,
    },
    "bench": {
        "num_windows": 20,
        "nystrom_rank": 40,
        "nystrom_shift": 1e-4,
        "cg_max_iter": 200000,
        "num_probes": 100,
        "lanczos_steps": 30,
        "kernel_sizes": [2000, 20000],
    },
}

CORPUS_FILES = {
    "ld": "ld.dwld",
    "annot": "annot.dwan",
    "stats_tsv": "stats.tsv",
    "stats_meta": "stats.json",
    "truth": "truth.json",
    "cache": "windows.npz",
    "model": "model.bin",
    "train_log": "train_log.jsonl",
    "train_report": "train_report.json",
    "eval_report": "eval_report.json",
    "bench": "bench.jsonl",
    "bench_summary": "bench_summary.json",
    "kernel_bench": "kernel_bench.jsonl",
}


# ---------------------------------------------------------------------------
# Config handling
# ---------------------------------------------------------------------------

def _check_keys(cfg: dict, template: dict, path: str = "") -> None:
    for key, value in cfg.items():
        if key not in template:
            raise ConfigError(f"unknown config key {path + key!r}")
        if isinstance(template[key], dict) and isinstance(value, dict):
            _check_keys(value, template[key], path + key + ".")


def _merge(template: dict, override: dict) -> dict:
    out = copy.deepcopy(template)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def load_config(path=None, overrides=(), seed=None, out_dir=None) -> dict:
    cfg = {}
    if path is not None:
        try:
            with open(path) as fh:
                cfg = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    _check_keys(cfg, DEFAULT_CONFIG)
    cfg = _merge(DEFAULT_CONFIG, cfg)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"--set expects key.path=value, got {item!r}")
        key, _, raw = item.partition("=")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = cfg
        parts = key.split(".")
        for part in parts[:-1]:
            if part not in node or not isinstance(node[part], dict):
                raise ConfigError(f"unknown config key {key!r}")
            node = node[part]
        if parts[-1] not in node:
            raise ConfigError(f"unknown config key {key!r}")
        node[parts[-1]] = value
    if seed is not None:
        cfg["seed"] = seed
    if out_dir is not None:
        cfg["out_dir"] = out_dir
    return cfg


def _paths(cfg: dict) -> dict:
    out = Path(cfg["out_dir"])
    return {k: out / v for k, v in CORPUS_FILES.items()}


def _resolve_threads(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get("DEEPWAS_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise ConfigError(f"DEEPWAS_THREADS={env!r} is not an integer") from exc
    return os.cpu_count() or 1


# ---------------------------------------------------------------------------
# simulate / precompute
# ---------------------------------------------------------------------------

def cmd_simulate(cfg: dict, threads: int) -> None:
    p = _paths(cfg)
    p["ld"].parent.mkdir(parents=True, exist_ok=True)
    sim = cfg["simulate"]
    seed = int(cfg["seed"])
    m = int(sim["num_variants"])
    n = int(sim["sample_size"])
    sigma2 = float(sim["sigma2"])

    mat, load = synthgen.gen_banded_correlation(
        m, int(sim["bandwidth"]), float(sim["decay"]), derive_seed(seed, 1),
        min_gap=int(sim["min_gap"]), max_gap=int(sim["max_gap"]),
    )
    annot = synthgen.gen_annotations(
        m, int(sim["d_func"]), int(sim["feature_window"]), int(sim["d_pred"]),
        derive_seed(seed, 2),
    )
    annot = synthgen.attach_ld_scores(annot, mat)
    annot, _ = normalize_features(annot)
    truth = synthgen.make_ground_truth(
        sim["truth"], annot, n, m, sigma2, derive_seed(seed, 3),
        hidden=int(sim["truth_hidden"]), init_scale=float(sim["truth_init_scale"]),
        log_std=None if sim["truth_log_std"] is None else float(sim["truth_log_std"]),
    )
    stats = synthgen.sample_associations(mat, truth, sigma2, n, derive_seed(seed, 4), loadings=load)

    ldcore.save_banded_matrix(mat, p["ld"])
    save_annotations(annot, p["annot"])
    ldcore.save_summary_stats(stats, mat.positions, annot.freq, p["stats_tsv"], p["stats_meta"])
    with open(p["truth"], "w") as fh:
        json.dump(
            {
                "kind": truth.kind,
                "target_mean": truth.target_mean,
                "scale_applied": truth.scale_applied,
                "mean_f": float(truth.f_true.mean()),
                "f_true": [float(v) for v in truth.f_true],
            },
            fh,
        )
        fh.write("\n")
    print(f"simulate: wrote corpus (M={m}, N={n}, truth={truth.kind}) to {cfg['out_dir']}")


def _load_corpus(cfg: dict):
    p = _paths(cfg)
    for key in ("ld", "annot", "stats_tsv", "stats_meta"):
        if not p[key].exists():
            raise FormatError(f"missing corpus file {p[key]} (run simulate first)")
    mat = ldcore.load_banded_matrix(p["ld"])
    annot = load_annotations(p["annot"])
    stats = ldcore.load_summary_stats(p["stats_tsv"], p["stats_meta"])
    if stats.num_variants != mat.num_variants:
        raise ValidationError("stats and matrix disagree on num_variants")
    return mat, annot, stats


def _windows(cfg: dict, threads: int, allow_cache: bool = True):
    p = _paths(cfg)
    mat, annot, stats = _load_corpus(cfg)
    w = cfg["windows"]
    plan = ldcore.plan_windows(mat.positions, int(w["window_span"]), int(w["flank_span"]))
    if allow_cache and p["cache"].exists():
        windows, cached_plan = ldcore.load_precomputed(p["cache"])
        if cached_plan.windows == plan.windows and cached_plan.flanks == plan.flanks:
            return mat, annot, stats, plan, windows
    windows = ldcore.precompute_all(
        mat, stats, plan, rel_tol=float(w["clip_rel_tol"]), threads=threads
    )
    return mat, annot, stats, plan, windows


def cmd_precompute(cfg: dict, threads: int) -> None:
    p = _paths(cfg)
    mat, annot, stats, plan, windows = _windows(cfg, threads, allow_cache=False)
    ldcore.save_precomputed(windows, plan, p["cache"])
    sizes = [w.flank_size for w in windows]
    print(
        f"precompute: {plan.num_windows} windows "
        f"(flank sizes {min(sizes)}..{max(sizes)}) -> {p['cache']}"
    )


# ---------------------------------------------------------------------------
# train / eval
# ---------------------------------------------------------------------------

def _resolve_heldout(cfg: dict, num_windows: int) -> tuple:
    tr = cfg["train"]
    if tr["heldout_window_ids"] is not None:
        ids = tuple(int(i) for i in tr["heldout_window_ids"])
        if any(i < 0 or i >= num_windows for i in ids):
            raise ConfigError("heldout_window_ids out of range")
        return ids
    frac = float(tr["heldout_fraction"])
    if not 0.0 <= frac < 1.0:
        raise ConfigError("heldout_fraction must be in [0, 1)")
    if frac == 0.0:
        return ()
    stride = max(2, round(1.0 / frac))
    return tuple(range(stride // 2, num_windows, stride))


def _build_model(cfg: dict, annot, seed: int):
    tr = cfg["train"]
    kind = tr["model"]
    if kind == "constant":
        return build_constant()
    if kind == "glm":
        return build_glm(annot.func_channels, annot.pred_channels)
    if kind == "network":
        spec = NetworkSpec(
            d_func=annot.func_channels,
            d_pred=annot.pred_channels,
            window_len=annot.window_len,
            hidden=int(tr["hidden"]),
        )
        return build_network(spec, derive_seed(seed, 10))
    raise ConfigError(f"unknown model kind {kind!r}")


def _train_config(cfg: dict, heldout_ids, threads: int) -> TrainConfig:
    tr = cfg["train"]
    return TrainConfig(
        learning_rate=tr["learning_rate"],
        warmup_steps=int(tr["warmup_steps"]),
        epochs=int(tr["epochs"]),
        accumulation_steps=int(tr["accumulation_steps"]),
        weight_decay=float(tr["weight_decay"]),
        seed=int(cfg["seed"]),
        method=tr["method"],
        cg_rel_tol=float(tr["cg_rel_tol"]),
        cg_max_iter=int(tr["cg_max_iter"]),
        num_probes=int(tr["num_probes"]),
        lanczos_steps=int(tr["lanczos_steps"]),
        probe_dist=tr["probe_dist"],
        objective=tr["objective"],
        h2_guess=float(tr["h2_guess"]),
        heldout_window_ids=heldout_ids,
        threads=threads,
    )


def _truth_f(cfg: dict):
    p = _paths(cfg)
    if not p["truth"].exists():
        return None
    with open(p["truth"]) as fh:
        return np.asarray(json.load(fh)["f_true"], dtype=np.float64)


def cmd_train(cfg: dict, threads: int) -> None:
    p = _paths(cfg)
    mat, annot, stats, plan, windows = _windows(cfg, threads)
    heldout_ids = _resolve_heldout(cfg, plan.num_windows)
    model = _build_model(cfg, annot, int(cfg["seed"]))
    tcfg = _train_config(cfg, heldout_ids, threads)
    with open(p["train_log"], "w") as log:
        state = train(
            tcfg, windows, annot, model, stats,
            log_fn=lambda rec: log.write(json.dumps(rec) + "\n"),
        )
    save_params(state.params, p["model"])
    report = {
        "objective": tcfg.objective,
        "model": state.params.model_kind,
        "seed": cfg["seed"],
        "steps": state.step,
        "heldout_window_ids": list(heldout_ids),
        "history": state.history,
    }
    f_true = _truth_f(cfg)
    if f_true is not None:
        f_hat = prior_forward(state.params, annot, np.arange(annot.num_variants))
        report["rmse_log_f"] = rmse_log_f(f_hat, f_true)
    with open(p["train_report"], "w") as fh:
        json.dump(report, fh, indent=1)
        fh.write("\n")
    final = state.history[-1]
    msg = f"train: {tcfg.objective}/{state.params.model_kind} done (train nll {final['train_nll']:.4f}"
    if "heldout_percent" in final:
        msg += f", heldout {final['heldout_percent']:.4f}%"
    if "rmse_log_f" in report:
        msg += f", rmse_log_f {report['rmse_log_f']:.4f}"
    print(msg + ")")


def cmd_eval(cfg: dict, threads: int) -> None:
    p = _paths(cfg)
    if not p["model"].exists():
        raise FormatError(f"missing model file {p['model']} (run train first)")
    mat, annot, stats, plan, windows = _windows(cfg, threads)
    heldout_ids = _resolve_heldout(cfg, plan.num_windows)
    model = load_params(p["model"])
    heldout = [w for w in windows if w.window_index in set(heldout_ids)]
    report = {
        "model": model.model_kind,
        "heldout_window_ids": list(heldout_ids),
        "heldout_percent": evaluate_heldout(model, heldout, annot, stats) if heldout else 0.0,
    }
    f_true = _truth_f(cfg)
    if f_true is not None:
        f_hat = prior_forward(model, annot, np.arange(annot.num_variants))
        report["rmse_log_f"] = rmse_log_f(f_hat, f_true)
    with open(p["eval_report"], "w") as fh:
        json.dump(report, fh, indent=1)
        fh.write("\n")
    print(f"eval: heldout {report['heldout_percent']:.4f}%"
          + (f", rmse_log_f {report['rmse_log_f']:.4f}" if "rmse_log_f" in report else ""))


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------

def bench_window(window, f, sigma2_N, bcfg: dict, tcfg: TrainConfig, seed: int):
    """Time the four loss+gradient routes on one window.

    Returns (records, summary): records carry the documented JSON-lines
    schema, summary the cross-checks (dense two-form NLL agreement, CG
    iteration counts, minimum Ritz value of the flank operator).
    """
    s = sigma2_N
    beta = window.beta_core
    rcf = window.r_core_flank
    a_mat = window.dense_a_matrix(f, s)
    dim_a = a_mat.shape[0]
    dim_b = window.flank_size
    settings = tcfg.solver_settings()
    num_probes = int(bcfg["num_probes"])
    lanczos_steps = int(bcfg["lanczos_steps"])
    cg_max_iter = int(bcfg["cg_max_iter"])

    # reference: exact dense gradient/NLL through the flank-sized route
    ref = window_nll_grad(window, f, s, method="dense")

    def grad_err(g):
        return float(np.linalg.norm(g - ref.grad_f_flank) / np.linalg.norm(ref.grad_f_flank))

    records = []
    summary = {"window": window.window_index, "dim_core": dim_a, "dim_flank": dim_b}

    # chol/A: dense factorization of the core-sized pseudo-inverse
    t0 = time.perf_counter()
    spec = ldcore.clip_spectrum(a_mat)
    apinv = spec.pinv_dense()
    nll_a = 0.5 * (spec.quad_pinv(beta) + spec.logpdet)
    t_mat = rcf.T @ apinv
    grad_a = 0.5 * (np.einsum("kj,jk->k", t_mat, rcf) - (rcf.T @ (apinv @ beta)) ** 2)
    records.append({"method": "chol", "form": "A", "dim": dim_a,
                    "wall_ms": (time.perf_counter() - t0) * 1e3, "rel_err": grad_err(grad_a)})
    summary["nll_dense_A"] = float(nll_a)
    summary["nll_dense_B"] = float(ref.nll)
    summary["nll_two_form_rel_err"] = float(abs(nll_a - ref.nll) / abs(ref.nll))

    # iter/A and nys/A: CG + SLQ + probe diagonal on the core-sized matrix
    op_a = LinearOperator.from_dense(a_mat, is_spd=True)

    def run_a(precond, tag):
        t0 = time.perf_counter()
        x, rep = cg_solve(op_a, beta, rel_tol=settings.cg_rel_tol,
                          max_iter=cg_max_iter, precond=precond)
        logdet = slq_logdet(op_a, num_probes, lanczos_steps, derive_seed(seed, 31))
        rng = np.random.default_rng(derive_seed(seed, 32))
        acc = np.zeros(dim_b)
        iters = rep.iterations
        for u in probe_matrix(rng, dim_b, num_probes, settings.probe_dist):
            rhs = rcf @ u
            sol, rep_u = cg_solve(op_a, rhs, rel_tol=settings.cg_rel_tol,
                                  max_iter=cg_max_iter, precond=precond)
            iters += rep_u.iterations
            acc += u * (rcf.T @ sol)
        grad = 0.5 * (acc / num_probes - (rcf.T @ x) ** 2)
        nll = 0.5 * (float(beta @ x) + logdet)
        wall = (time.perf_counter() - t0) * 1e3
        records.append({"method": tag, "form": "A", "dim": dim_a, "wall_ms": wall,
                        "rel_err": grad_err(grad)})
        return rep.iterations, float(nll)

    summary["cg_iters_A"], summary["nll_iter_A"] = run_a(None, "iter")
    precond = nystrom_preconditioner(
        op_a, min(int(bcfg["nystrom_rank"]), dim_a - 1), float(bcfg["nystrom_shift"]),
        derive_seed(seed, 33),
    )
    summary["cg_iters_A_nys"], _ = run_a(precond, "nys")

    # iter/B: the flank-sized well-conditioned route
    t0 = time.perf_counter()
    loss_b = window_nll_grad(window, f, s, method="iterative", settings=settings,
                             num_probes=num_probes, seed=derive_seed(seed, 34))
    records.append({"method": "iter", "form": "B", "dim": dim_b,
                    "wall_ms": (time.perf_counter() - t0) * 1e3,
                    "rel_err": grad_err(loss_b.grad_f_flank)})
    summary["cg_iters_B"] = loss_b.solver_report.iterations
    summary["nll_iter_B"] = float(loss_b.nll)
    from .likelihood import BOperator

    summary["min_ritz_B"] = min_ritz_value(
        BOperator(window, f, s).as_linear_operator(), steps=lanczos_steps,
        seed=derive_seed(seed, 35),
    )
    return records, summary


def cmd_bench(cfg: dict, threads: int) -> None:
    p = _paths(cfg)
    mat, annot, stats, plan, windows = _windows(cfg, threads)
    bcfg = cfg["bench"]
    tcfg = _train_config(cfg, (), threads)
    f_true = _truth_f(cfg)
    # skip degenerate straggler tiles; solver comparisons need real systems
    cores = sorted(w.core_size for w in windows)
    floor = max(8, cores[len(cores) // 2] // 2)
    candidates = [w for w in windows if w.core_size >= floor] or list(windows)
    num = min(int(bcfg["num_windows"]), len(candidates))
    picks = [candidates[i] for i in np.linspace(0, len(candidates) - 1, num).astype(int)]
    seed = int(cfg["seed"])
    all_summaries = []
    with open(p["bench"], "w") as fh:
        for w in picks:
            if f_true is not None:
                f = f_true[w.flank_start : w.flank_end]
            else:
                rng = np.random.default_rng(derive_seed(seed, 40, w.window_index))
                f = rng.uniform(0, 2 * stats.sample_size / mat.num_variants, w.flank_size)
            records, summary = bench_window(w, f, stats.sigma2_N, bcfg, tcfg,
                                            derive_seed(seed, 41, w.window_index))
            for rec in records:
                fh.write(json.dumps(rec) + "\n")
            all_summaries.append(summary)
    with open(p["bench_summary"], "w") as fh:
        json.dump(all_summaries, fh, indent=1)
        fh.write("\n")
    worse = sum(1 for s in all_summaries if s["cg_iters_B"] >= s["cg_iters_A"])
    print(
        f"bench: {len(all_summaries)} windows -> {p['bench']}; "
        f"B-form needed fewer CG iterations on {len(all_summaries) - worse}/{len(all_summaries)}"
    )


def cmd_kernel_bench(cfg: dict) -> None:
    """Compare the numba kernels against the numpy fallbacks."""
    p = _paths(cfg)
    p["ld"].parent.mkdir(parents=True, exist_ok=True)
    sizes = [int(s) for s in cfg["bench"]["kernel_sizes"]]
    seed = int(cfg["seed"])
    rows = []
    for m in sizes:
        bw = 50
        load = synthgen.gen_loadings(m, bw, 0.5, derive_seed(seed, 50, m))
        band = _kernels.NUMPY_KERNELS["ma_corr_band"](load)
        x = np.random.default_rng(derive_seed(seed, 51, m)).standard_normal(m)
        g = np.random.default_rng(derive_seed(seed, 52, m)).standard_normal(m + bw)
        cases = {
            "band_matvec": (band, x),
            "band_sq_matvec": (band, x),
            "ma_corr_band": (load,),
            "load_matvec": (load, g),
        }
        for name, args in cases.items():
            for backend, table in (("active", _kernels.ACTIVE_KERNELS),
                                   ("numpy", _kernels.NUMPY_KERNELS)):
                fn = table[name]
                fn(*args)  # warm-up (jit compile)
                reps = 5
                t0 = time.perf_counter()
                for _ in range(reps):
                    fn(*args)
                wall = (time.perf_counter() - t0) / reps * 1e3
                rows.append({
                    "kernel": name,
                    "backend": _kernels.BACKEND if backend == "active" else "numpy",
                    "dim": m,
                    "wall_ms": wall,
                })
    with open(p["kernel_bench"], "w") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")
    print(f"kernel bench ({_kernels.BACKEND} vs numpy) -> {p['kernel_bench']}")


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="deepwas", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("simulate", "precompute", "train", "eval", "bench"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", default=None, help="JSON config file")
        sp.add_argument("--seed", type=int, default=None, help="override config seed")
        sp.add_argument("--out", default=None, help="override config out_dir")
        sp.add_argument("--threads", type=int, default=None,
                        help="worker threads (default: DEEPWAS_THREADS or all cores)")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config entry (JSON-parsed value)")
        if name == "simulate":
            sp.add_argument("--truth", choices=("network", "threshold", "constant"),
                            default=None, help="ground-truth kind override")
        if name == "train":
            sp.add_argument("--method", choices=("deepwas", "ldsr"), default=None,
                            help="training objective override")
        if name == "bench":
            sp.add_argument("--kernels", action="store_true",
                            help="also benchmark numba vs numpy kernels")
    return parser


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = load_config(args.config, args.set, seed=args.seed, out_dir=args.out)
    if getattr(args, "truth", None):
        cfg["simulate"]["truth"] = args.truth
    if getattr(args, "method", None):
        cfg["train"]["objective"] = args.method
    threads = _resolve_threads(args)
    if args.command == "simulate":
        cmd_simulate(cfg, threads)
    elif args.command == "precompute":
        cmd_precompute(cfg, threads)
    elif args.command == "train":
        cmd_train(cfg, threads)
    elif args.command == "eval":
        cmd_eval(cfg, threads)
    elif args.command == "bench":
        cmd_bench(cfg, threads)
        if args.kernels:
            cmd_kernel_bench(cfg)
    return 0


def main(argv=None) -> int:
    try:
        return run(argv)
    except (ConfigError, ArgumentError, EmptyInputError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (NumericalFailureError, DegenerateBlockError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except (FormatError, ValidationError, OSError) as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 4
    except DeepwasError as exc:  # pragma: no cover - catch-all for new kinds
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
