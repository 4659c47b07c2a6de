"""End-to-end CLI pipeline on a tiny corpus: every subcommand plus determinism."""

import json
from pathlib import Path

import numpy as np
import pytest

from deepwas.cli import load_config, main

TINY = {
    "simulate": {
        "num_variants": 500,
        "bandwidth": 8,
        "decay": 0.5,
        "sample_size": 200,
        "sigma2": 0.5,
        "d_func": 6,
        "d_pred": 2,
        "feature_window": 16,
        "truth_init_scale": 1.5,
    },
    "windows": {"window_span": 50_000, "flank_span": 10_000},
    "train": {
        "model": "constant",
        "epochs": 2,
        "accumulation_steps": 3,
        "warmup_steps": 5,
        "learning_rate": 0.02,
        "heldout_fraction": 0.2,
    },
    "bench": {"num_windows": 3, "nystrom_rank": 10, "kernel_sizes": [300]},
}


def write_cfg(tmp_path, extra=None):
    cfg = json.loads(json.dumps(TINY))
    if extra:
        for key, val in extra.items():
            cfg.setdefault(key, {}).update(val) if isinstance(val, dict) else cfg.__setitem__(key, val)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return path


def run_cli(*argv):
    return main(list(argv))


def read_files(out_dir, exclude_fields=("wall_ms",)):
    """Map of file name -> bytes with timing fields stripped from JSON lines."""
    result = {}
    for p in sorted(Path(out_dir).iterdir()):
        data = p.read_bytes()
        if p.suffix in (".jsonl",):
            lines = []
            for line in data.decode().splitlines():
                rec = json.loads(line)
                for field in exclude_fields:
                    rec.pop(field, None)
                lines.append(json.dumps(rec, sort_keys=True))
            data = "\n".join(lines).encode()
        result[p.name] = data
    return result


# ---------------------------------------------------------------------------
# config handling
# ---------------------------------------------------------------------------

def test_unknown_key_rejected(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"simulate": {"nope": 1}}))
    assert run_cli("simulate", "--config", str(path), "--out", str(tmp_path / "o")) == 2


def test_malformed_json_rejected(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    assert run_cli("simulate", "--config", str(path)) == 2


def test_set_override_applies(tmp_path):
    cfg = load_config(None, ["train.epochs=3", "simulate.truth=threshold"])
    assert cfg["train"]["epochs"] == 3
    assert cfg["simulate"]["truth"] == "threshold"


def test_set_unknown_key_rejected():
    with pytest.raises(Exception):
        load_config(None, ["train.bogus=3"])


def test_missing_corpus_is_io_error(tmp_path):
    cfg = write_cfg(tmp_path)
    assert run_cli("train", "--config", str(cfg), "--out", str(tmp_path / "empty")) == 4


# ---------------------------------------------------------------------------
# pipeline
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("cli")
    cfg = write_cfg(tmp)
    out = tmp / "run"
    assert run_cli("simulate", "--config", str(cfg), "--out", str(out), "--seed", "5") == 0
    assert run_cli("precompute", "--config", str(cfg), "--out", str(out), "--seed", "5",
                   "--threads", "2") == 0
    assert run_cli("train", "--config", str(cfg), "--out", str(out), "--seed", "5") == 0
    assert run_cli("eval", "--config", str(cfg), "--out", str(out), "--seed", "5") == 0
    assert run_cli("bench", "--config", str(cfg), "--out", str(out), "--seed", "5",
                   "--kernels") == 0
    return cfg, out


def test_simulate_truth_mean(pipeline):
    _, out = pipeline
    truth = json.loads((out / "truth.json").read_text())
    n, m, sigma2 = 200, 500, 0.5
    assert truth["target_mean"] == pytest.approx((n / m) * (1 - sigma2))
    assert truth["mean_f"] == pytest.approx(truth["target_mean"], rel=1e-9)


def test_corpus_files_exist(pipeline):
    _, out = pipeline
    for name in ("ld.dwld", "annot.dwan", "stats.tsv", "stats.json", "truth.json",
                 "windows.npz", "model.bin", "train_log.jsonl", "train_report.json",
                 "eval_report.json", "bench.jsonl", "bench_summary.json",
                 "kernel_bench.jsonl"):
        assert (out / name).exists(), name


def test_train_log_schema(pipeline):
    _, out = pipeline
    lines = (out / "train_log.jsonl").read_text().splitlines()
    rec = json.loads(lines[0])
    assert set(rec) == {"step", "epoch", "window", "nll", "lr"}


def test_eval_report_contents(pipeline):
    _, out = pipeline
    report = json.loads((out / "eval_report.json").read_text())
    assert "heldout_percent" in report
    assert "rmse_log_f" in report
    assert np.isfinite(report["heldout_percent"])


def test_bench_schema_and_methods(pipeline):
    _, out = pipeline
    lines = [json.loads(l) for l in (out / "bench.jsonl").read_text().splitlines()]
    assert all(set(rec) == {"method", "form", "dim", "wall_ms", "rel_err"} for rec in lines)
    combos = {(rec["method"], rec["form"]) for rec in lines}
    assert combos == {("chol", "A"), ("iter", "A"), ("nys", "A"), ("iter", "B")}


def test_bench_two_form_agreement_and_iterations(pipeline):
    _, out = pipeline
    summaries = json.loads((out / "bench_summary.json").read_text())
    for s in summaries:
        assert s["nll_two_form_rel_err"] < 1e-6
        assert s["cg_iters_B"] < s["cg_iters_A"]
        assert s["min_ritz_B"] >= 1 - 1e-6


def test_kernel_bench_lines(pipeline):
    _, out = pipeline
    lines = [json.loads(l) for l in (out / "kernel_bench.jsonl").read_text().splitlines()]
    backends = {rec["backend"] for rec in lines}
    assert "numpy" in backends
    assert all({"kernel", "backend", "dim", "wall_ms"} == set(rec) for rec in lines)


def test_untrained_null_scale_model_evaluates_near_zero(pipeline, tmp_path):
    # a constant model initialized far below the data scale behaves like the null
    from deepwas.priors import build_constant, save_params

    cfg, out = pipeline
    model_path = out / "model.bin"
    backup = model_path.read_bytes()
    try:
        save_params(build_constant(w0=-60.0), model_path)
        assert run_cli("eval", "--config", str(cfg), "--out", str(out), "--seed", "5") == 0
        report = json.loads((out / "eval_report.json").read_text())
        assert abs(report["heldout_percent"]) < 1e-6
    finally:
        model_path.write_bytes(backup)
        assert run_cli("eval", "--config", str(cfg), "--out", str(out), "--seed", "5") == 0


def test_ldsr_and_deepwas_reports_comparable(pipeline):
    cfg, out = pipeline
    alt = out.parent / "run_ldsr"
    for cmd in ("simulate", "precompute"):
        assert run_cli(cmd, "--config", str(cfg), "--out", str(alt), "--seed", "5") == 0
    assert run_cli("train", "--config", str(cfg), "--out", str(alt), "--seed", "5",
                   "--method", "ldsr") == 0
    assert run_cli("eval", "--config", str(cfg), "--out", str(alt), "--seed", "5") == 0
    a = json.loads((out / "eval_report.json").read_text())
    b = json.loads((alt / "eval_report.json").read_text())
    assert set(a) == set(b)
    report = json.loads((alt / "train_report.json").read_text())
    assert report["objective"] == "ldsr"


# ---------------------------------------------------------------------------
# determinism (acceptance criterion: byte-identical reruns)
# ---------------------------------------------------------------------------

def test_full_pipeline_rerun_byte_identical(tmp_path):
    cfg = write_cfg(tmp_path)
    outs = []
    for tag in ("a", "b"):
        out = tmp_path / tag
        for cmd in ("simulate", "precompute", "train", "eval", "bench"):
            assert run_cli(cmd, "--config", str(cfg), "--out", str(out), "--seed", "9") == 0
        outs.append(read_files(out))
    assert outs[0].keys() == outs[1].keys()
    for name in outs[0]:
        assert outs[0][name] == outs[1][name], f"{name} differs between identical runs"
