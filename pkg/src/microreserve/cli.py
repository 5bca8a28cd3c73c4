"""Operator command line.

Subcommands: simulate, ingest, chain-ladder, train-rl, train-fnn, tune,
evaluate, report, run (full pipeline), verify (golden single-claim
replay). A JSON run-config drives the pipeline; command-line flags
override config keys, which override built-in defaults.

Exit codes: 0 success, 1 configuration error, 2 data error, 3 numeric
fault during training or evaluation.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import math
import os
import sys
from importlib import resources

import numpy as np

from . import chainladder as cl
from .claims import Dataset, discretize, load_transactions, write_dev_records, write_transactions
from .credibility import build_init_tables, write_init_tables
from .env import (
    EnvConfig,
    ScriptedPolicy,
    export_transition_log,
    rollout_calendar,
)
from .errors import ConfigError, DataError, LeakageError, NumericFault
from .evaluation import (
    CAS_VALUATION,
    SPLICE_VALUATION,
    SplitSpec,
    action_histogram,
    evaluate_predictions,
    guard_fnn_rows,
    guard_transitions,
    guard_validation,
    relative_ocl,
    rsv_folds,
    size_tercile_report,
    split,
    true_ocl_map,
    tune,
    write_histogram_csv,
    write_metrics_csv,
)
from .fnn import FnnConfig, build_training_rows, load_fnn, predict_ocl_fnn, save_fnn, train_fnn
from .sac import SacConfig, load_agent, predict_ocl_sac, save_agent, train_sac, write_training_log
from .simulator import preset, simulate_portfolio, with_seed

DEFAULT_MODELS = ("rl", "fnn", "cl")


# -- configuration ---------------------------------------------------------------


def default_config() -> dict:
    return {
        "data": {
            "source": "simulate",
            "preset": "complexity1",
            "claims_per_period": None,
            "path": None,
            "schema": "splice",
            "write_transactions": False,
        },
        "split": {"kind": "ts", "boundary": None, "k_folds": 3},
        "env": {},
        "sac": {},
        "fnn": {},
        "models": list(DEFAULT_MODELS),
        "tuning": {"enabled": False, "family": "fnn", "grid": []},
        "seeds": [1],
        "output_dir": "runs/out",
    }


def load_config(path: str | None, overrides: dict) -> dict:
    cfg = default_config()
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                user = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
        for key, value in user.items():
            if key not in cfg:
                raise ConfigError(f"unknown config key {key!r}")
            if isinstance(cfg[key], dict) and isinstance(value, dict):
                cfg[key].update(value)
            else:
                cfg[key] = value
    for key, value in overrides.items():
        if value is None:
            continue
        section, _, leaf = key.partition(".")
        if leaf:
            cfg[section][leaf] = value
        else:
            cfg[key] = value
    validate_config(cfg)
    return cfg


def validate_config(cfg: dict) -> None:
    data = cfg["data"]
    if data["source"] not in ("simulate", "ingest"):
        raise ConfigError(f"unknown data source {data['source']!r}")
    if data["source"] == "simulate":
        preset(data["preset"])  # raises on unknown preset
    else:
        if not data.get("path"):
            raise ConfigError("ingest source needs data.path")
        if data.get("schema") not in ("splice", "cas"):
            raise ConfigError(f"unknown schema {data.get('schema')!r}")
    if cfg["split"]["kind"] not in ("ts", "csc", "nsc"):
        raise ConfigError(f"unknown split kind {cfg['split']['kind']!r}")
    for model in cfg["models"]:
        if model not in DEFAULT_MODELS:
            raise ConfigError(f"unknown model {model!r}")
    if not cfg["seeds"]:
        raise ConfigError("at least one seed required")
    # Constructor validation of the model configs, before any work.
    EnvConfig(**cfg["env"])
    SacConfig(**{**cfg["sac"], "hidden": tuple(cfg["sac"].get("hidden", (64, 64)))})
    FnnConfig(**{**cfg["fnn"], "hidden": tuple(cfg["fnn"].get("hidden", (64, 64)))})


def _config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()[:16]


def _sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


# -- data acquisition --------------------------------------------------------------


def acquire_dataset(cfg: dict, seed: int) -> Dataset:
    data = cfg["data"]
    if data["source"] == "simulate":
        sim = with_seed(preset(data["preset"]), seed)
        if data.get("claims_per_period"):
            sim = dataclasses.replace(sim, mean_claims_per_period=float(data["claims_per_period"]))
        dataset = simulate_portfolio(sim)
    else:
        dataset = load_transactions(data["path"], data["schema"])
    return discretize(dataset)


def resolve_boundary(cfg: dict, dataset: Dataset) -> int:
    boundary = cfg["split"].get("boundary")
    if boundary is None:
        boundary = SPLICE_VALUATION if dataset.schema == "splice" else CAS_VALUATION
        boundary = min(boundary, dataset.max_calendar_period)
    return int(boundary)


def _profile_for(dataset: Dataset, requested: str | None) -> str:
    if requested:
        return requested
    return "splice_full" if dataset.schema == "splice" else "cas"


# -- pipeline ----------------------------------------------------------------------


def run_seed(cfg: dict, seed: int, out_dir: str) -> dict:
    """Train every requested model for one seed and write its reports."""
    os.makedirs(out_dir, exist_ok=True)
    dataset = acquire_dataset(cfg, seed)
    boundary = resolve_boundary(cfg, dataset)
    ts = split(dataset, SplitSpec(kind="ts", boundary=boundary, k_folds=cfg["split"]["k_folds"]))
    view = ts.train
    tables = build_init_tables(view, boundary)
    actuals = true_ocl_map(dataset, boundary)

    outputs: list[str] = []
    summary: dict = {"seed": seed, "boundary": boundary, "n_test_claims": len(actuals)}

    if cfg["data"].get("write_transactions"):
        path = os.path.join(out_dir, "transactions.csv")
        write_transactions(dataset, path)
        outputs.append(path)

    tables_path = os.path.join(out_dir, "init_tables.csv")
    write_init_tables(tables, tables_path)
    outputs.append(tables_path)

    env_kwargs = dict(cfg["env"])
    env_kwargs["state_profile"] = _profile_for(dataset, env_kwargs.get("state_profile"))
    env_cfg = EnvConfig(**env_kwargs)

    ultimates = {cn: dataset.by_no(cn).ultimate for cn in actuals}

    if "rl" in cfg["models"]:
        sac_cfg = SacConfig(
            **{**cfg["sac"], "hidden": tuple(cfg["sac"].get("hidden", (64, 64))), "seed": seed}
        )
        agent, log = train_sac(view, tables, env_cfg, sac_cfg, boundary=boundary)
        replay = predict_ocl_sac(agent, view, tables, boundary)
        guard_transitions(replay.transitions, view, boundary)
        preds = {cn: replay.final_prediction(cn) for cn in actuals if cn in replay.predictions}
        report = evaluate_predictions(preds, dataset, boundary)
        write_metrics_csv(report, "rl", seed, os.path.join(out_dir, "metrics_rl.csv"))
        outputs.append(os.path.join(out_dir, "metrics_rl.csv"))
        export_transition_log(replay.transitions, os.path.join(out_dir, "rl_transitions.csv"))
        outputs.append(os.path.join(out_dir, "rl_transitions.csv"))
        counts, edges = action_histogram(replay.transitions, env_cfg.k)
        write_histogram_csv(counts, edges, os.path.join(out_dir, "rl_action_hist.csv"))
        outputs.append(os.path.join(out_dir, "rl_action_hist.csv"))
        facets, edges = action_histogram(replay.transitions, env_cfg.k, by_psn=True)
        write_histogram_csv(facets, edges, os.path.join(out_dir, "rl_action_hist_psn.csv"))
        outputs.append(os.path.join(out_dir, "rl_action_hist_psn.csv"))
        write_training_log(log, os.path.join(out_dir, "rl_training_log.csv"))
        outputs.append(os.path.join(out_dir, "rl_training_log.csv"))
        save_agent(agent, os.path.join(out_dir, "rl_checkpoint"))
        _write_terciles(preds, actuals, ultimates, os.path.join(out_dir, "terciles_rl.csv"))
        outputs.append(os.path.join(out_dir, "terciles_rl.csv"))
        summary["rl_ratio"] = report.overall_ratio
        summary["rl_rmse"] = report.rmse_overall

    if "fnn" in cfg["models"]:
        fnn_cfg = FnnConfig(
            **{
                **cfg["fnn"],
                "hidden": tuple(cfg["fnn"].get("hidden", (64, 64))),
                "state_profile": env_cfg.state_profile,
                "seed": seed,
            }
        )
        rows = build_training_rows(view, boundary, fnn_cfg)
        guard_fnn_rows(rows.claim_nos, view, boundary)
        model = train_fnn(rows, fnn_cfg)
        preds = predict_ocl_fnn(model, view, boundary)
        report = evaluate_predictions(preds, dataset, boundary)
        write_metrics_csv(report, "fnn", seed, os.path.join(out_dir, "metrics_fnn.csv"))
        outputs.append(os.path.join(out_dir, "metrics_fnn.csv"))
        save_fnn(model, os.path.join(out_dir, "fnn_model"))
        _write_terciles(preds, actuals, ultimates, os.path.join(out_dir, "terciles_fnn.csv"))
        outputs.append(os.path.join(out_dir, "terciles_fnn.csv"))
        summary["fnn_ratio"] = report.overall_ratio
        summary["fnn_rmse"] = report.rmse_overall

    if "cl" in cfg["models"]:
        result = cl.rbns_ocl(view, boundary)
        cl.write_cl_report(result, os.path.join(out_dir, "cl_report.csv"))
        outputs.append(os.path.join(out_dir, "cl_report.csv"))
        true_by_ap: dict[int, float] = {}
        for cn, v in actuals.items():
            ap = dataset.by_no(cn).accident_period
            true_by_ap[ap] = true_by_ap.get(ap, 0.0) + v
        total_true = sum(true_by_ap.values())
        summary["cl_ratio"] = result.total_rbns_ocl / total_true if total_true > 0 else None
        path = os.path.join(out_dir, "metrics_cl.csv")
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["model", "seed", "slice", "key", "relative_ocl", "rmse", "ocl_share"])
            writer.writerow(["cl", seed, "overall", "", repr(summary["cl_ratio"]), "", ""])
            for row, ap in enumerate(result.aps):
                if true_by_ap.get(ap, 0.0) > 0:
                    writer.writerow(
                        [
                            "cl",
                            seed,
                            "ap",
                            ap,
                            repr(float(result.rbns_ocl[row]) / true_by_ap[ap]),
                            "",
                            "",
                        ]
                    )
        outputs.append(path)

    summary["outputs"] = outputs
    return summary


def run_pipeline(cfg: dict) -> str:
    """Execute the configured experiment; returns the manifest path."""
    out_root = cfg["output_dir"]
    os.makedirs(out_root, exist_ok=True)
    manifest = {
        "config_hash": _config_hash(cfg),
        "config": cfg,
        "seeds": cfg["seeds"],
        "outputs": {},
        "stage_reached": "start",
    }
    manifest_path = os.path.join(out_root, "manifest.json")
    summaries = []
    try:
        if cfg["tuning"].get("enabled") and cfg["tuning"].get("grid"):
            manifest["stage_reached"] = "tuning"
            best = tune_from_config(cfg)
            manifest["tuned_params"] = best
            family = cfg["tuning"]["family"]
            cfg[family].update(best)
        for seed in cfg["seeds"]:
            manifest["stage_reached"] = f"seed {seed}"
            summaries.append(run_seed(cfg, seed, os.path.join(out_root, f"seed_{seed}")))
        manifest["stage_reached"] = "reports"
        summary_path = os.path.join(out_root, "summary.csv")
        with open(summary_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["seed", "model", "relative_ocl", "rmse"])
            for s in summaries:
                for model in ("rl", "fnn", "cl"):
                    if f"{model}_ratio" in s:
                        writer.writerow(
                            [
                                s["seed"],
                                model,
                                repr(s[f"{model}_ratio"]),
                                repr(s.get(f"{model}_rmse", "")),
                            ]
                        )
        for s in summaries:
            for path in s.pop("outputs"):
                manifest["outputs"][os.path.relpath(path, out_root)] = _sha256(path)
        manifest["outputs"][os.path.relpath(summary_path, out_root)] = _sha256(summary_path)
        manifest["summaries"] = summaries
        manifest["stage_reached"] = "done"
    finally:
        with open(manifest_path, "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=1, sort_keys=True)
    return manifest_path


def _write_terciles(preds, actuals, ultimates, path) -> None:
    keys = sorted(set(preds) & set(actuals))
    report = size_tercile_report(
        {k: preds[k] for k in keys},
        {k: actuals[k] for k in keys},
        {k: ultimates[k] for k in keys},
    )
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["tercile", "relative_ocl"])
        for name in ("small", "medium", "large"):
            if name in report:
                writer.writerow([name, repr(report[name])])


def tune_from_config(cfg: dict) -> dict:
    """Rolling-settlement tuning for the configured family on seed[0]."""
    seed = cfg["seeds"][0]
    dataset = acquire_dataset(cfg, seed)
    boundary = resolve_boundary(cfg, dataset)
    view = split(dataset, SplitSpec(kind="ts", boundary=boundary)).train
    folds = rsv_folds(view, cfg["split"]["k_folds"], window_end=boundary)
    for fold in folds:
        guard_validation(fold.validation_claims, fold.boundary)
    family = cfg["tuning"]["family"]
    grid = cfg["tuning"]["grid"]
    profile = _profile_for(dataset, cfg["env"].get("state_profile"))

    if family == "fnn":

        def family_fn(fold, params):
            fnn_cfg = FnnConfig(
                **{
                    **cfg["fnn"],
                    **params,
                    "hidden": tuple(params.get("hidden", cfg["fnn"].get("hidden", (64, 64)))),
                    "state_profile": profile,
                    "seed": seed,
                }
            )
            rows = build_training_rows(fold.train_view, fold.boundary, fnn_cfg)
            guard_fnn_rows(rows.claim_nos, fold.train_view, fold.boundary)
            model = train_fnn(rows, fnn_cfg)
            wanted = {c.claim_no for c in fold.validation_claims}
            preds = predict_ocl_fnn(model, fold.train_view, fold.boundary)
            return {cn: preds[cn] for cn in wanted if cn in preds}

    elif family == "rl":

        def family_fn(fold, params):
            env_cfg = EnvConfig(**{**cfg["env"], **params.get("env", {}), "state_profile": profile})
            sac_cfg = SacConfig(
                **{
                    **cfg["sac"],
                    **params.get("sac", {}),
                    "hidden": tuple(
                        params.get("sac", {}).get("hidden", cfg["sac"].get("hidden", (64, 64)))
                    ),
                    "seed": seed,
                }
            )
            tables = build_init_tables(fold.train_view, fold.boundary)
            agent, _ = train_sac(fold.train_view, tables, env_cfg, sac_cfg, boundary=fold.boundary)
            replay = predict_ocl_sac(agent, fold.train_view, tables, fold.boundary)
            guard_transitions(replay.transitions, fold.train_view, fold.boundary)
            wanted = {c.claim_no for c in fold.validation_claims}
            return {
                cn: replay.final_prediction(cn) for cn in wanted if cn in replay.predictions
            }

    else:
        raise ConfigError(f"unknown tuning family {family!r}")

    best, _entries = tune(grid, folds, family_fn)
    return best


# -- golden verification ------------------------------------------------------------


def _fixture_path(name: str) -> str:
    return str(resources.files("microreserve").joinpath("fixtures", name))


def run_verify(
    txns_path: str | None = None,
    expected_path: str | None = None,
    config_path: str | None = None,
    echo=print,
) -> bool:
    """Replay the worked single-claim fixture and check reward parity.

    Scripted actions come from the expected table; the checks are the
    back-solved actions (|diff| <= 1e-4), the stability rows (1e-3
    against the published 4-decimal values, exact zeros in payment
    periods), the smoothing rows (1e-4) and the terminal accuracy reward
    (1e-3).
    """
    txns_path = txns_path or _fixture_path("golden_claim_txns.csv")
    expected_path = expected_path or _fixture_path("golden_claim_expected.csv")
    config_path = config_path or _fixture_path("golden_claim_config.json")
    if not (os.path.exists(txns_path) and os.path.exists(expected_path)):
        raise DataError("golden fixture files missing")
    with open(config_path, encoding="utf-8") as fh:
        g = json.load(fh)

    data = discretize(load_transactions(txns_path, "splice"))
    with open(expected_path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    claim_no = data.claims[0].claim_no
    env_cfg = EnvConfig(
        k=g["k"],
        gamma=g["gamma"],
        c_acc=g["c_acc"],
        m_warmup=g["m_warmup"],
        alpha_w=g["alpha_w"],
        s_scale=g["s_scale"],
        n_past=g["n_past"],
        state_profile=g["state_profile"],
    )
    policy = ScriptedPolicy({(claim_no, int(r["tau"])): float(r["action"]) for r in rows})
    result = rollout_calendar(data, policy, {claim_no: g["ocl0"]}, env_cfg)

    ok = True

    def check(label: str, passed: bool, detail: str = "") -> None:
        nonlocal ok
        ok = ok and passed
        echo(f"[{'PASS' if passed else 'FAIL'}] {label}{(': ' + detail) if detail else ''}")

    if len(result.transitions) != len(rows):
        check("transition count", False, f"{len(result.transitions)} != {len(rows)}")
        return False

    for txn, row in zip(result.transitions, rows):
        dp = row["dev_period"]
        back_solved = math.log(float(row["pred_ocl"]) / float(row["prev_ocl"]))
        check(
            f"action at development period {dp}",
            abs(txn.action - back_solved) <= 1e-4,
            f"{txn.action:.6f} vs {back_solved:.6f}",
        )
        gated = row["payment"] == "1"
        if gated:
            check(
                f"payment gating at development period {dp}",
                txn.breakdown.r_stab == 0.0 and txn.breakdown.r_smooth == 0.0,
            )
        else:
            check(
                f"stability reward at development period {dp}",
                abs(txn.breakdown.r_stab - float(row["table_r_stab"])) <= 1e-3,
                f"{txn.breakdown.r_stab:.4f} vs {row['table_r_stab']}",
            )
            check(
                f"smoothing reward at development period {dp}",
                abs(txn.breakdown.r_smooth - float(row["table_r_smooth"])) <= 1e-4,
                f"{txn.breakdown.r_smooth:.5f} vs {row['table_r_smooth']}",
            )
    terminal = result.transitions[-1]
    check(
        "terminal accuracy reward",
        abs(terminal.breakdown.r_acc - g["racc_weighted"]) <= 1e-3,
        f"{terminal.breakdown.r_acc:.4f} vs {g['racc_weighted']}",
    )
    return ok


# -- subcommands ---------------------------------------------------------------------


def cmd_simulate(args) -> int:
    sim = with_seed(preset(args.preset), args.seed)
    if args.claims_per_period is not None:
        sim = dataclasses.replace(sim, mean_claims_per_period=args.claims_per_period)
    dataset = simulate_portfolio(sim)
    write_transactions(dataset, args.out, schema=args.schema)
    print(f"wrote {len(dataset)} claims to {args.out}")
    return 0


def cmd_ingest(args) -> int:
    dataset = discretize(load_transactions(args.path, args.schema))
    print(
        f"{len(dataset)} claims, {dataset.n_flagged_unsettled} open, "
        f"{dataset.n_dropped_zero_loss} zero-loss dropped, "
        f"horizon {dataset.max_calendar_period}"
    )
    if args.dev_out:
        write_dev_records(dataset, args.dev_out)
        print(f"development records -> {args.dev_out}")
    return 0


def cmd_chain_ladder(args) -> int:
    cfg = load_config(args.config, _data_overrides(args))
    dataset = acquire_dataset(cfg, cfg["seeds"][0])
    boundary = resolve_boundary(cfg, dataset)
    view = split(dataset, SplitSpec(kind="ts", boundary=boundary)).train
    result = cl.rbns_ocl(view, boundary)
    cl.write_cl_report(result, args.out)
    actuals = true_ocl_map(dataset, boundary)
    if actuals:
        ratio = result.total_rbns_ocl / sum(actuals.values())
        print(f"aggregate relative OCL {ratio:.4f}")
    print(f"report -> {args.out}")
    return 0


def cmd_train_rl(args) -> int:
    cfg = load_config(args.config, _data_overrides(args))
    cfg["models"] = ["rl"]
    return _run_with_manifest(cfg)


def cmd_train_fnn(args) -> int:
    cfg = load_config(args.config, _data_overrides(args))
    cfg["models"] = ["fnn"]
    return _run_with_manifest(cfg)


def cmd_tune(args) -> int:
    cfg = load_config(args.config, _data_overrides(args))
    if not cfg["tuning"].get("grid"):
        raise ConfigError("tuning.grid is empty")
    best = tune_from_config(cfg)
    os.makedirs(cfg["output_dir"], exist_ok=True)
    out = os.path.join(cfg["output_dir"], "best_params.json")
    with open(out, "w", encoding="utf-8") as fh:
        json.dump(best, fh, indent=1, sort_keys=True)
    print(f"best parameters -> {out}: {best}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = load_config(args.config, _data_overrides(args))
    dataset = acquire_dataset(cfg, cfg["seeds"][0])
    boundary = resolve_boundary(cfg, dataset)
    view = split(dataset, SplitSpec(kind="ts", boundary=boundary)).train
    os.makedirs(cfg["output_dir"], exist_ok=True)
    produced = False
    if args.rl_checkpoint:
        agent = load_agent(args.rl_checkpoint)
        tables = build_init_tables(view, boundary)
        replay = predict_ocl_sac(agent, view, tables, boundary)
        preds = {
            cn: replay.final_prediction(cn)
            for cn in true_ocl_map(dataset, boundary)
            if cn in replay.predictions
        }
        report = evaluate_predictions(preds, dataset, boundary)
        path = os.path.join(cfg["output_dir"], "metrics_rl.csv")
        write_metrics_csv(report, "rl", cfg["seeds"][0], path)
        print(f"rl ratio {report.overall_ratio:.4f} -> {path}")
        produced = True
    if args.fnn_model:
        model = load_fnn(args.fnn_model)
        preds = predict_ocl_fnn(model, view, boundary)
        report = evaluate_predictions(preds, dataset, boundary)
        path = os.path.join(cfg["output_dir"], "metrics_fnn.csv")
        write_metrics_csv(report, "fnn", cfg["seeds"][0], path)
        print(f"fnn ratio {report.overall_ratio:.4f} -> {path}")
        produced = True
    if not produced:
        raise ConfigError("evaluate needs --rl-checkpoint and/or --fnn-model")
    return 0


def cmd_report(args) -> int:
    with open(args.transitions, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise DataError("transition log is empty")

    class _Row:
        __slots__ = ("action", "tau")

        def __init__(self, action, tau):
            self.action = action
            self.tau = tau

    txns = [_Row(float(r["action"]), int(r["tau"])) for r in rows]
    counts, edges = action_histogram(txns, args.k, bins=args.bins, by_psn=args.by_psn)
    write_histogram_csv(counts, edges, args.out)
    print(f"histogram -> {args.out}")
    return 0


def cmd_run(args) -> int:
    cfg = load_config(args.config, _data_overrides(args))
    return _run_with_manifest(cfg)


def _run_with_manifest(cfg: dict) -> int:
    manifest_path = run_pipeline(cfg)
    with open(manifest_path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    print(f"manifest -> {manifest_path} (stage: {manifest['stage_reached']})")
    for summary in manifest.get("summaries", []):
        bits = [f"seed {summary['seed']}"]
        for model in ("rl", "fnn", "cl"):
            if f"{model}_ratio" in summary and summary[f"{model}_ratio"] is not None:
                bits.append(f"{model} ratio {summary[f'{model}_ratio']:.4f}")
        print("  " + ", ".join(bits))
    return 0


def cmd_verify(args) -> int:
    ok = run_verify(args.txns, args.expected, args.fixture_config)
    return 0 if ok else 2


def _data_overrides(args) -> dict:
    out = {}
    for flag, key in (
        ("seeds", "seeds"),
        ("output_dir", "output_dir"),
        ("preset", "data.preset"),
        ("claims_per_period", "data.claims_per_period"),
        ("path", "data.path"),
        ("schema", "data.schema"),
        ("boundary", "split.boundary"),
        ("models", "models"),
    ):
        if hasattr(args, flag):
            out[key] = getattr(args, flag)
    if out.get("seeds") is not None:
        out["seeds"] = [int(s) for s in str(out["seeds"]).split(",")]
    if out.get("models") is not None:
        out["models"] = str(out["models"]).split(",")
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="microreserve",
        description="Claim-level reserving: simulator, RL agent, benchmarks, evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic transactions CSV")
    p.add_argument("--preset", default="complexity1")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--claims-per-period", type=float, default=None)
    p.add_argument("--schema", default="splice", choices=["splice", "cas"])
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("ingest", help="validate a transactions CSV")
    p.add_argument("--path", required=True)
    p.add_argument("--schema", default="splice", choices=["splice", "cas"])
    p.add_argument("--dev-out", default=None)
    p.set_defaults(fn=cmd_ingest)

    def common(p):
        p.add_argument("--config", default=None)
        p.add_argument("--seeds", default=None)
        p.add_argument("--output-dir", dest="output_dir", default=None)
        p.add_argument("--preset", default=None)
        p.add_argument("--claims-per-period", type=float, default=None)
        p.add_argument("--path", default=None)
        p.add_argument("--schema", default=None)
        p.add_argument("--boundary", type=int, default=None)

    p = sub.add_parser("chain-ladder", help="IBNR-stripped chain ladder report")
    common(p)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_chain_ladder)

    p = sub.add_parser("train-rl", help="train the RL reserve model")
    common(p)
    p.set_defaults(fn=cmd_train_rl)

    p = sub.add_parser("train-fnn", help="train the supervised benchmark")
    common(p)
    p.set_defaults(fn=cmd_train_fnn)

    p = sub.add_parser("tune", help="rolling-settlement hyperparameter search")
    common(p)
    p.set_defaults(fn=cmd_tune)

    p = sub.add_parser("evaluate", help="score saved models on the configured data")
    common(p)
    p.add_argument("--rl-checkpoint", default=None)
    p.add_argument("--fnn-model", default=None)
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("report", help="action histogram from a transition log")
    p.add_argument("--transitions", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--k", type=float, default=2.0)
    p.add_argument("--bins", type=int, default=40)
    p.add_argument("--by-psn", action="store_true")
    p.set_defaults(fn=cmd_report)

    p = sub.add_parser("run", help="full pipeline: data, models, reports, manifest")
    common(p)
    p.add_argument("--models", default=None, help="comma list from rl,fnn,cl")
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("verify", help="replay the worked single-claim fixture")
    p.add_argument("--txns", default=None)
    p.add_argument("--expected", default=None)
    p.add_argument("--fixture-config", default=None)
    p.set_defaults(fn=cmd_verify)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (DataError, LeakageError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericFault as exc:
        print(f"numeric fault: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
