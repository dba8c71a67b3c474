"""End-to-end pipeline orchestration with content-hash stage resumption.

Stages run in a fixed order (ingest, simulate, metrics, features, select,
irf, report).  Each stage records a hash of its relevant config fields and
input files; a rerun with matching hash and intact outputs is skipped.
"""

from __future__ import annotations

import hashlib
import json
import logging
from pathlib import Path

import numpy as np
import pandas as pd

from holdsim import features as feat
from holdsim import ingest, lp, metrics, report, selection, simulate
from holdsim.config import RunConfig

log = logging.getLogger(__name__)

STAGES = ["ingest", "simulate", "metrics", "features", "select", "irf", "report"]

STAGE_DIRS = {
    "ingest": "clean_panels",
    "simulate": "episodes",
    "metrics": "metrics",
    "features": "tensor",
    "select": "selection",
    "irf": "irf",
    "report": "report",
}

# Config fields whose change must invalidate each stage; upstream changes
# cascade through input-file hashes.
STAGE_CONFIG_KEYS = {
    "ingest": ["data_dir"],
    "simulate": ["baskets", "intervals", "n_per_interval", "fee", "seed_simulate", "shard_size"],
    "metrics": ["intervals"],
    "features": ["horizons", "econ_basket"],
    "select": ["bootstrap_select", "seed_select", "tau_global", "tau_cond"],
    "irf": ["bootstrap_irf", "seed_irf", "lambda_rw1", "foreign_surface"],
    "report": [],
}


class StageError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"stage {stage!r} failed: {message}")
        self.stage = stage


def _hash_files(paths: list[Path]) -> str:
    h = hashlib.sha256()
    for path in sorted(paths):
        h.update(str(path.name).encode())
        h.update(path.read_bytes())
    return h.hexdigest()


def _stage_input_files(cfg: RunConfig, stage: str) -> list[Path]:
    data = Path(cfg.data_dir)
    out = Path(cfg.output_dir)
    patterns: list[tuple[Path, str]] = {
        "ingest": [(data / "tokens", "*.csv")],
        "simulate": [(out / "clean_panels", "*"), (data, "riskfree.csv")],
        "metrics": [(out / "episodes", "*.csv")],
        "features": [
            (out / "metrics", "metrics_weekly.csv"),
            (data / "macro", "*.csv"),
            (data, "fgi.csv"),
            (data, "stationarity.csv"),
            (out / "clean_panels", "BTC.csv"),
        ],
        "select": [(out / "tensor", "*")],
        "irf": [(out / "tensor", "*"), (out / "selection", "selected_features.json")],
        "report": [(out / "metrics", "metrics_overall.csv")],
    }[stage]
    files: list[Path] = []
    for base, pat in patterns:
        if base.is_dir():
            files.extend(p for p in base.glob(pat) if p.is_file())
        elif base.is_file() and base.match(pat):
            files.append(base)
    return files


def stage_hash(cfg: RunConfig, stage: str) -> str:
    sem = cfg.semantic_dict()
    subset = {k: sem[k] for k in STAGE_CONFIG_KEYS[stage]}
    payload = json.dumps(subset, sort_keys=True, default=str)
    h = hashlib.sha256(payload.encode())
    h.update(_hash_files(_stage_input_files(cfg, stage)).encode())
    return h.hexdigest()


def _hash_path(cfg: RunConfig, stage: str) -> Path:
    return Path(cfg.output_dir) / ".hashes" / f"{stage}.txt"


def _interval_label(lo: int, hi: int) -> str:
    return f"{lo}-{hi}"


# --- Stage implementations ---


def stage_ingest(cfg: RunConfig) -> None:
    panels = ingest.load_panel_set(Path(cfg.data_dir) / "tokens")
    cleaned, excl = ingest.apply_cleaning_rules(panels)
    ingest.write_clean_panels(cleaned, excl, Path(cfg.output_dir) / "clean_panels")
    for warning in cleaned.warnings:
        log.warning("%s", warning)


def _load_clean_panels(cfg: RunConfig) -> ingest.PanelSet:
    out = Path(cfg.output_dir) / "clean_panels"
    ps = ingest.PanelSet()
    for path in sorted(out.glob("*.csv")):
        frame = pd.read_csv(path, index_col=0, parse_dates=True)
        frame.columns = [c.lower() for c in frame.columns]
        ps.panels[path.stem] = ingest.TokenPanel(path.stem, frame)
    return ps


def _load_riskfree(cfg: RunConfig) -> pd.Series:
    path = Path(cfg.data_dir) / "riskfree.csv"
    if not path.exists():
        return pd.Series(dtype=float)
    frame = pd.read_csv(path)
    frame.columns = [c.strip().lower() for c in frame.columns]
    value_col = [c for c in frame.columns if c != "date"][0]
    return pd.Series(
        pd.to_numeric(frame[value_col], errors="coerce").to_numpy(),
        index=pd.to_datetime(frame["date"]),
    )


def stage_simulate(cfg: RunConfig) -> None:
    panels = _load_clean_panels(cfg)
    if not panels.panels:
        raise StageError("simulate", "no clean panels found; run ingest first")
    riskfree = _load_riskfree(cfg)
    out = Path(cfg.output_dir) / "episodes"
    out.mkdir(parents=True, exist_ok=True)
    manifest: dict = {"seed": cfg.seed_simulate, "config_hash": cfg.config_hash(), "batches": {}}
    for basket_name in sorted(cfg.baskets):
        members = cfg.baskets[basket_name]
        syms = panels.symbols if members is None else [s for s in members if s in panels.panels]
        if not syms:
            raise StageError("simulate", f"basket {basket_name!r} has no available tokens")
        calendar, high, low = simulate.build_price_arrays(panels, syms)
        gamma = simulate.build_riskfree_curve(calendar, riskfree)
        for lo_d, hi_d in cfg.intervals:
            sim_cfg = simulate.SimConfig(
                basket=basket_name,
                interval=(lo_d, hi_d),
                n=cfg.n_per_interval,
                fee=cfg.fee,
                seed=cfg.seed_simulate,
                shard_size=cfg.shard_size,
            )
            batch = simulate.simulate_batch(sim_cfg, high, low, gamma, n_workers=cfg.workers)
            label = _interval_label(lo_d, hi_d)
            frame = batch.to_frame(calendar, syms)
            frame.to_csv(out / f"{basket_name}_{label}.csv", index=False)
            manifest["batches"][f"{basket_name}_{label}"] = {
                "n": len(batch),
                "complete": batch.complete,
                **batch.stats,
            }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)


def stage_metrics(cfg: RunConfig) -> None:
    epi_dir = Path(cfg.output_dir) / "episodes"
    out = Path(cfg.output_dir) / "metrics"
    out.mkdir(parents=True, exist_ok=True)
    samples: dict[tuple[str, str], np.ndarray] = {}
    weekly_frames = []
    paths = sorted(p for p in epi_dir.glob("*.csv"))
    if not paths:
        raise StageError("metrics", "no episode files found; run simulate first")
    for path in paths:
        basket, label = path.stem.rsplit("_", 1)
        frame = pd.read_csv(path, parse_dates=["buy_date", "sell_date"])
        if frame.empty:
            continue
        x = frame["excess_return"].to_numpy()
        samples[(basket, label)] = x
        weekly = metrics.aggregate_weekly(x, pd.DatetimeIndex(frame["sell_date"]))
        weekly.insert(0, "basket", basket)
        weekly.insert(1, "interval", label)
        weekly_frames.append(weekly)
    overall = metrics.aggregate_overall(samples)
    overall.to_csv(out / "metrics_overall.csv", index=False)
    weekly_all = pd.concat(weekly_frames, ignore_index=True)
    weekly_all.to_csv(out / "metrics_weekly.csv", index=False)
    for name, frame in (("metrics_overall", overall), ("metrics_weekly", weekly_all)):
        records = frame.replace({np.nan: None}).to_dict(orient="records")
        with open(out / f"{name}.json", "w") as fh:
            json.dump(records, fh, indent=2, default=str)


def _weekly_target_panels(cfg: RunConfig) -> dict[int, pd.DataFrame]:
    weekly = pd.read_csv(
        Path(cfg.output_dir) / "metrics" / "metrics_weekly.csv", parse_dates=["week_monday"]
    )
    label_by_horizon = {hi: _interval_label(lo, hi) for lo, hi in cfg.intervals}
    panels = {}
    for h in cfg.horizons:
        label = label_by_horizon.get(h)
        if label is None:
            raise StageError("features", f"horizon {h} has no matching interval")
        rows = weekly[(weekly["basket"] == cfg.econ_basket) & (weekly["interval"] == label)]
        if rows.empty:
            raise StageError("features", f"no weekly metrics for horizon {h}")
        panels[h] = pd.DataFrame(
            {
                "median_er": rows["median"].to_numpy(),
                "cvar10": rows["cvar"].to_numpy(),
                "top25_mean": rows["top25_mean"].to_numpy(),
                "sharpe": rows["sharpe"].to_numpy(),
            },
            index=pd.DatetimeIndex(rows["week_monday"]),
        )
    return panels


def _macro_frame(cfg: RunConfig) -> pd.DataFrame:
    data = Path(cfg.data_dir)
    cols = {}
    macro_dir = data / "macro"
    if macro_dir.is_dir():
        for path in sorted(macro_dir.glob("*.csv")):
            frame = pd.read_csv(path)
            frame.columns = [c.strip().lower() for c in frame.columns]
            value_col = [c for c in frame.columns if c != "date"][0]
            daily = pd.Series(
                pd.to_numeric(frame[value_col], errors="coerce").to_numpy(),
                index=pd.to_datetime(frame["date"]),
            )
            cols[path.stem.upper()] = ingest.weekly_align_macro(daily)
    fgi_path = data / "fgi.csv"
    if fgi_path.exists():
        frame = pd.read_csv(fgi_path)
        frame.columns = [c.strip().lower() for c in frame.columns]
        value_col = [c for c in frame.columns if c != "date"][0]
        daily = pd.Series(
            pd.to_numeric(frame[value_col], errors="coerce").to_numpy(),
            index=pd.to_datetime(frame["date"]),
        )
        cols["FGI"] = ingest.weekly_fgi_mean(daily)
    btc_path = Path(cfg.output_dir) / "clean_panels" / "BTC.csv"
    if btc_path.exists():
        frame = pd.read_csv(btc_path, index_col=0, parse_dates=True)
        frame.columns = [c.lower() for c in frame.columns]
        panel = ingest.TokenPanel("BTC", frame)
        cols["BTCLOGRET"] = ingest.btc_weekly_log_return(panel)
    if not cols:
        raise StageError("features", "no macro series found")
    return pd.DataFrame(cols)


def stage_features(cfg: RunConfig) -> None:
    panels = _weekly_target_panels(cfg)
    macro = _macro_frame(cfg)
    stat_path = Path(cfg.data_dir) / "stationarity.csv"
    table = feat.load_stationarity(stat_path) if stat_path.exists() else {}
    endog_decisions = {
        (name, h): feat.decisions_from_table(table, f"{name}@{h}")
        for name in feat.TARGET_NAMES
        for h in cfg.horizons
    }
    macro_decisions = {
        base: feat.decisions_from_table(table, base) for base in macro.columns
    }
    tensor = feat.build_feature_tensor(
        panels, macro, endog_decisions, macro_decisions, cfg.horizons
    )
    feat.save_tensor(tensor, Path(cfg.output_dir) / "tensor")


def stage_select(cfg: RunConfig, tensor_dir: str | Path | None = None) -> None:
    tensor = feat.load_tensor(tensor_dir or Path(cfg.output_dir) / "tensor")
    result = selection.run_stability_selection(
        tensor,
        n_draws=cfg.bootstrap_select,
        seed=cfg.seed_select,
        tau_g=cfg.tau_global,
        tau_c=cfg.tau_cond,
    )
    selection.save_selection(result, Path(cfg.output_dir) / "selection")


def stage_irf(
    cfg: RunConfig,
    tensor_dir: str | Path | None = None,
    features_path: str | Path | None = None,
) -> None:
    tensor = feat.load_tensor(tensor_dir or Path(cfg.output_dir) / "tensor")
    features_path = features_path or Path(cfg.output_dir) / "selection" / "selected_features.json"
    with open(features_path) as fh:
        selected = json.load(fh)["union"]
    if not selected:
        raise StageError("irf", "stability selection retained no features")
    surface = lp.estimate_surface(
        tensor,
        selected,
        lam=cfg.lambda_rw1,
        n_boot=cfg.bootstrap_irf,
        seed=cfg.seed_irf,
    )
    out = Path(cfg.output_dir) / "irf"
    out.mkdir(parents=True, exist_ok=True)
    frame = surface.to_frame(cfg.econ_basket)
    frame.to_csv(out / "irf_surface.csv", index=False)
    per_h, stability = lp.rank_effects({cfg.econ_basket: frame})
    with open(out / "rankings.json", "w") as fh:
        json.dump(
            {
                "per_horizon_top": per_h.to_dict(orient="records"),
                "cross_basket_stability": stability.to_dict(orient="records"),
            },
            fh,
            indent=2,
            default=str,
        )
    if cfg.foreign_surface:
        foreign = pd.read_csv(cfg.foreign_surface)
        agreement = lp.compare_surfaces(frame, foreign)
        with open(out / "agreement.json", "w") as fh:
            json.dump(agreement, fh, indent=2)


def stage_report(cfg: RunConfig) -> None:
    overall = pd.read_csv(Path(cfg.output_dir) / "metrics" / "metrics_overall.csv")
    report.write_report(overall, Path(cfg.output_dir) / "report")


_STAGE_FNS = {
    "ingest": stage_ingest,
    "simulate": stage_simulate,
    "metrics": stage_metrics,
    "features": stage_features,
    "select": stage_select,
    "irf": stage_irf,
    "report": stage_report,
}


def run_stage(cfg: RunConfig, stage: str, force: bool = False) -> bool:
    """Run one stage unless its hash matches a previous completed run.

    Returns True when the stage actually executed.
    """
    current = stage_hash(cfg, stage)
    hash_file = _hash_path(cfg, stage)
    out_dir = Path(cfg.output_dir) / STAGE_DIRS[stage]
    if (
        not force
        and hash_file.exists()
        and hash_file.read_text().strip() == current
        and out_dir.is_dir()
        and any(out_dir.iterdir())
    ):
        log.info("stage %s up to date, skipping", stage)
        return False
    try:
        _STAGE_FNS[stage](cfg)
    except StageError:
        raise
    except Exception as exc:  # noqa: BLE001 - annotate with stage name
        raise StageError(stage, str(exc)) from exc
    hash_file.parent.mkdir(parents=True, exist_ok=True)
    # Hash inputs may themselves be stage outputs; recompute after running.
    hash_file.write_text(stage_hash(cfg, stage))
    return True


def run_pipeline(cfg: RunConfig, stages: list[str] | None = None, force: bool = False) -> dict:
    cfg.validate()
    ran = {}
    for stage in stages or STAGES:
        ran[stage] = run_stage(cfg, stage, force=force)
    return ran
