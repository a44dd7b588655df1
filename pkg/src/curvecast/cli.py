"""Command-line pipeline: ingest, fpca, forecast, backtest, rolling, simulate, diag-acf.

Options resolve as flags > config file (--config JSON) > defaults; the
output directory additionally honors the CURVECAST_OUT_DIR environment
variable. Exit codes: 0 success, 2 configuration error, 3 data error,
4 numerical failure. Fatal errors emit one machine-readable JSON object
on stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import curves as curves_mod
from . import evaluation, rolling, sim
from .exceptions import ConfigError, CurvecastError, DataError, NumericalError
from .forecast import (
    BacktestConfig,
    aue_bands,
    fit_argarch_scores,
    forecast_argarch_day,
    forecast_sbekk_day,
    rolling_backtest,
    save_forecast,
)
from .fpca import FunctionalPCA
from .score_models import fit_var_sbekk

_METHOD_KEYS = ("argarch", "arma_aue", "var_sbekk", "var_aue")
_DEFAULT_PENALTIES = {"ols": 0.0, "ridge": 1e-2, "lasso": 1e-3}


def _load_config(path):
    if path is None:
        return {}
    try:
        with open(path) as fh:
            payload = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(payload, dict):
        raise ConfigError("config file must hold a JSON object")
    return payload


def _resolve(args, config, key, default):
    value = getattr(args, key, None)
    if value is not None:
        return value
    if key in config:
        return config[key]
    return default


def _out_dir(args, config) -> Path:
    out = getattr(args, "out_dir", None) or os.environ.get("CURVECAST_OUT_DIR") \
        or config.get("out_dir") or "."
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _parse_methods(raw) -> tuple:
    if isinstance(raw, (list, tuple)):
        methods = tuple(raw)
    else:
        methods = tuple(m.strip().lower() for m in str(raw).split(",") if m.strip())
    bad = [m for m in methods if m not in _METHOD_KEYS]
    if bad:
        raise ConfigError(f"unknown methods {bad}; choose from {list(_METHOD_KEYS)}")
    if not methods:
        raise ConfigError("no methods requested")
    return methods


def _load_demeaned(prefix):
    panel = curves_mod.load_panel(prefix)
    if not panel.demeaned:
        panel = curves_mod.demean_panel(panel)
    return panel


# --- subcommand runners -----------------------------------------------------

def _run_ingest(args, config) -> int:
    out = _out_dir(args, config)
    grid_step = _resolve(args, config, "grid_step", "1h")
    fill = _resolve(args, config, "fill", "ffill")
    offset = int(_resolve(args, config, "offset_steps", 0))
    ts, px = curves_mod.load_price_csv(args.input)
    panel = curves_mod.ingest_prices(ts, px, grid_step, offset, fill)
    if _resolve(args, config, "demean", False):
        panel = curves_mod.demean_panel(panel)
    csv_path, json_path = curves_mod.save_panel(panel, out / args.out)
    print(f"wrote {csv_path} and {json_path}: N={panel.n_days} T={panel.n_points} "
          f"filled={panel.meta.get('n_filled')}")
    return 0


def _run_fpca(args, config) -> int:
    out = _out_dir(args, config)
    delta = float(_resolve(args, config, "delta", 0.85))
    weight = _resolve(args, config, "weight", 1.0)
    if weight != "grid":
        weight = float(weight)
    panel = _load_demeaned(args.panel)
    basis = FunctionalPCA(delta=delta, weight=weight).fit(panel)
    basis_path = out / f"{args.out}.json"
    scores_path = out / f"{args.out}_scores.csv"
    basis.save(basis_path)
    basis.save_scores(scores_path)
    print(f"wrote {basis_path} and {scores_path}: J={basis.n_components_} "
          f"of {basis.j_max_} (CPV {basis.cpv_[basis.n_components_ - 1]:.4f})")
    return 0


def _run_forecast(args, config) -> int:
    out = _out_dir(args, config)
    delta = float(_resolve(args, config, "delta", 0.85))
    level = float(_resolve(args, config, "level", 0.95))
    window = _resolve(args, config, "window", None)
    methods = _parse_methods(_resolve(args, config, "methods", "argarch"))
    panel = _load_demeaned(args.panel)

    values = panel.values + panel.mean_curve
    if window is not None:
        window = int(window)
        if window > values.shape[0]:
            raise DataError(f"window {window} exceeds panel size {values.shape[0]}")
        values = values[-window:]
    mean_curve = values.mean(axis=0)
    sub = curves_mod.ReturnCurvePanel(
        values - mean_curve, panel.grid, np.arange(1, values.shape[0] + 1), True, mean_curve,
    )
    basis = FunctionalPCA(delta=delta).fit(sub)
    scores = basis.scores_[:, : basis.n_components_]

    var_pair = None
    for name in methods:
        if name == "argarch":
            fc = forecast_argarch_day(basis, fit_argarch_scores(scores), level)
        elif name == "arma_aue":
            fc = aue_bands(sub, basis, "arma", level, refit="full")
        elif name == "var_sbekk":
            if var_pair is None:
                var_pair = fit_var_sbekk(scores)
            fc = forecast_sbekk_day(basis, *var_pair, level)
        else:
            fc = aue_bands(sub, basis, "var", level, refit="expanding")
        prefix = out / f"{args.out}_{name}"
        save_forecast(fc, prefix, meta={"window": int(values.shape[0]), "delta": delta})
        print(f"wrote {prefix}.csv ({fc.method}, level {level})")
    return 0


def _run_backtest(args, config) -> int:
    out = _out_dir(args, config)
    cfg = BacktestConfig(
        window=int(_resolve(args, config, "window", 250)),
        horizon_days=int(_resolve(args, config, "horizon_days", 10)),
        delta=float(_resolve(args, config, "delta", 0.85)),
        level=float(_resolve(args, config, "level", 0.95)),
        methods=_parse_methods(_resolve(args, config, "methods", ",".join(_METHOD_KEYS))),
        variance_targeting=bool(_resolve(args, config, "variance_targeting", True)),
        aue_refit_var=str(_resolve(args, config, "aue_refit_var", "expanding")),
        aue_refit_arma=str(_resolve(args, config, "aue_refit_arma", "full")),
        threads=int(_resolve(args, config, "threads", os.cpu_count() or 1)),
    )
    panel = curves_mod.load_panel(args.panel)
    if panel.demeaned:
        panel = curves_mod.restore_mean(panel)
    report = rolling_backtest(panel, cfg)

    report.save_json(out / f"{args.out}.json")
    report.save_csv(out / f"{args.out}.csv")
    report.save_per_day_csv(out / f"{args.out}_per_day.csv")
    rows = []
    for item in report.forecasts:
        fc = item["forecast"]
        for t in range(fc.point.size):
            rows.append((item["day"], item["method"], t + 1, fc.point[t],
                         fc.lower[t], fc.upper[t], item["realized"][t]))
    if rows:
        import pandas as pd

        pd.DataFrame(rows, columns=["day", "method", "t", "point", "lower", "upper", "realized"]) \
            .to_csv(out / f"{args.out}_forecasts.csv", index=False, float_format="%.17g")
    sys.stdout.write(report.format_table())
    return 0


def _run_rolling(args, config) -> int:
    out = _out_dir(args, config)
    k = int(_resolve(args, config, "k", 1))
    delta = float(_resolve(args, config, "delta", 0.85))
    estimator = str(_resolve(args, config, "estimator", "ridge")).lower()
    if estimator != "all" and estimator not in rolling.ESTIMATORS:
        raise ConfigError(f"estimator must be 'all' or one of {rolling.ESTIMATORS}")
    penalty = _resolve(args, config, "penalty", None)
    n_forecasts = int(_resolve(args, config, "n_forecasts", 200))

    panel = curves_mod.load_panel(args.panel)
    if panel.demeaned:
        panel = curves_mod.restore_mean(panel)
    flat = panel.values.ravel()

    window_range = _resolve(args, config, "window_range", None)
    window = _resolve(args, config, "window", None)
    estimators = list(rolling.ESTIMATORS) if estimator == "all" else [estimator]

    summaries = []
    bests = {}
    for est in estimators:
        pen = _DEFAULT_PENALTIES[est] if penalty is None else float(penalty)
        if window_range:
            lo, hi = (int(v) for v in str(window_range).split(":"))
            search = rolling.rolling_window_search(flat, panel.n_points, k,
                                                   range(lo, hi + 1), n_forecasts,
                                                   delta, est, pen)
            summaries.extend(search["summaries"])
            bests[est] = search["best"]
        else:
            result = rolling.rolling_origin_backtest(flat, panel.n_points, k,
                                                     int(window or 100), n_forecasts,
                                                     delta, est, pen)
            summaries.append(result)
            bests[est] = result

    import pandas as pd

    step = panel.meta.get("grid_step")
    base = int(panel.day_starts[0]) if panel.day_starts is not None and step else None
    frames = []
    for est, best in bests.items():
        detail = pd.DataFrame(best["rows"])
        detail.insert(0, "estimator", est)
        detail.insert(1, "origin_timestamp",
                      [base + r * int(step) if base is not None else r
                       for r in detail["origin"]])
        frames.append(detail)
    pd.concat(frames, ignore_index=True).to_csv(out / f"{args.out}_forecasts.csv",
                                                index=False, float_format="%.17g")

    table = pd.DataFrame([
        {"estimator": s["estimator"], "window": s["window_days"], "k": s["k"],
         "rmse": s["rmse"], "sign_rate": s["sign_rate"]}
        for s in summaries
    ])
    table.to_csv(out / f"{args.out}.csv", index=False, float_format="%.10g")
    for est, best in bests.items():
        print(f"{est}: best window {best['window_days']} RMSE {best['rmse']:.6f} "
              f"sign {100 * best['sign_rate']:.1f}% (k={k})")
    return 0


def _run_simulate(args, config) -> int:
    out = _out_dir(args, config)
    n_days = int(_resolve(args, config, "n_days", 500))
    burn_in = int(_resolve(args, config, "burn_in", 500))
    if args.spec:
        spec = sim.KlFactorSpec.load(args.spec)
    else:
        preset = str(_resolve(args, config, "preset", "example3"))
        seed = int(_resolve(args, config, "seed", 0))
        spec = preset_spec(preset, seed)
    panel, scores = sim.simulate_panel(spec, n_days, burn_in)
    csv_path, json_path = curves_mod.save_panel(panel, out / args.out)
    scores_path = out / f"{args.out}_true_scores.csv"
    np.savetxt(scores_path, scores, delimiter=",", fmt="%.17g")
    print(f"wrote {csv_path}, {json_path} and {scores_path}: N={panel.n_days} T={panel.n_points}")
    return 0


def _run_diag_acf(args, config) -> int:
    out = _out_dir(args, config)
    max_lag = int(_resolve(args, config, "max_lag", 20))
    n_scores = int(_resolve(args, config, "n_scores", 3))
    scores = np.loadtxt(args.scores, delimiter=",", ndmin=2)
    n_scores = min(n_scores, scores.shape[1])
    rows = []
    for sq in (False, True):
        data = scores[:, :n_scores] ** 2 if sq else scores[:, :n_scores]
        for i in range(n_scores):
            for j in range(n_scores):
                if i == j:
                    values, band = evaluation.acf(data[:, i], max_lag)
                else:
                    values, band = evaluation.cross_acf(data[:, i], data[:, j], max_lag)
                for lag, v in enumerate(values):
                    rows.append((i + 1, j + 1, lag, v, band, int(sq)))
    import pandas as pd

    path = out / f"{args.out}.csv"
    pd.DataFrame(rows, columns=["series_i", "series_j", "lag", "value", "band", "squared"]) \
        .to_csv(path, index=False, float_format="%.10g")
    print(f"wrote {path} ({n_scores} scores, lags 0..{max_lag})")
    return 0


# --- argument parsing --------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="curvecast",
        description="Functional PCA forecasting of intraday return curves.",
    )
    parser.add_argument("--config", help="JSON config file; flags take precedence")
    parser.add_argument("--out-dir", dest="out_dir",
                        help="output directory (also via CURVECAST_OUT_DIR)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="price CSV -> daily return curve panel")
    p.add_argument("--input", required=True, help="CSV with timestamp,price columns")
    p.add_argument("--grid-step", dest="grid_step", help="e.g. 15min, 1h, 900s")
    p.add_argument("--offset-steps", dest="offset_steps", type=int,
                   help="day boundary offset in whole grid steps")
    p.add_argument("--fill", choices=["ffill", "strict"])
    p.add_argument("--demean", action="store_const", const=True, default=None)
    p.add_argument("--out", default="panel")

    p = sub.add_parser("fpca", help="panel -> basis JSON + scores CSV")
    p.add_argument("--panel", required=True, help="panel file prefix")
    p.add_argument("--delta", type=float)
    p.add_argument("--weight")
    p.add_argument("--out", default="basis")

    p = sub.add_parser("forecast", help="one-day-ahead forecast from the panel tail")
    p.add_argument("--panel", required=True)
    p.add_argument("--methods", help="comma list: argarch,arma_aue,var_sbekk,var_aue")
    p.add_argument("--level", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--window", type=int)
    p.add_argument("--out", default="forecast")

    p = sub.add_parser("backtest", help="rolling-window one-day-ahead backtest")
    p.add_argument("--panel", required=True)
    p.add_argument("--window", type=int)
    p.add_argument("--horizon-days", dest="horizon_days", type=int)
    p.add_argument("--methods")
    p.add_argument("--level", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--threads", type=int)
    p.add_argument("--aue-refit-var", dest="aue_refit_var", choices=["expanding", "full"])
    p.add_argument("--aue-refit-arma", dest="aue_refit_arma", choices=["expanding", "full"])
    p.add_argument("--out", default="report")

    p = sub.add_parser("rolling", help="intraday tail forecasts via shifted-panel FPCA")
    p.add_argument("--panel", required=True)
    p.add_argument("--k", type=int)
    p.add_argument("--estimator", choices=list(rolling.ESTIMATORS) + ["all"])
    p.add_argument("--penalty", type=float)
    p.add_argument("--window", type=int, help="fixed number of daily functions")
    p.add_argument("--window-range", dest="window_range", help="lo:hi search range")
    p.add_argument("--n-forecasts", dest="n_forecasts", type=int)
    p.add_argument("--delta", type=float)
    p.add_argument("--out", default="rolling")

    p = sub.add_parser("simulate", help="draw a synthetic panel from a factor spec")
    p.add_argument("--spec", help="KlFactorSpec JSON; omit to use --preset")
    p.add_argument("--preset", choices=["example1", "example2", "example3"])
    p.add_argument("--seed", type=int)
    p.add_argument("--n-days", dest="n_days", type=int)
    p.add_argument("--burn-in", dest="burn_in", type=int)
    p.add_argument("--out", default="sim_panel")

    p = sub.add_parser("diag-acf", help="score and squared-score (cross-)ACF data")
    p.add_argument("--scores", required=True, help="scores CSV (N rows x J columns)")
    p.add_argument("--max-lag", dest="max_lag", type=int)
    p.add_argument("--n-scores", dest="n_scores", type=int)
    p.add_argument("--out", default="acf")

    return parser


def preset_spec(name: str, seed: int = 0) -> sim.KlFactorSpec:
    """Canonical three-factor synthetic specs on a 24-point grid."""
    t, j0 = 24, 3
    basis = sim.make_orthonormal_basis(t, j0, seed=seed, kind="fourier")
    lambdas = np.array([1.0, 0.5, 0.25])
    mean = np.zeros(t)
    if name == "example1":
        pi = np.diag([0.6, 0.4, 0.2])
        dynamics = sim.unit_variance_var(pi)
    elif name == "example2":
        pi = np.diag([0.6, 0.4, 0.2])
        dynamics = sim.unit_variance_sbekk(pi, a=0.08, g=0.90)
    elif name == "example3":
        dynamics = sim.UnivArGarchDynamics(
            a=np.full(j0, 0.5), varsigma0=np.full(j0, 0.05),
            zeta=np.full(j0, 0.1), varsigma=np.full(j0, 0.8),
        )
    else:
        raise ConfigError(f"unknown preset {name!r}")
    return sim.KlFactorSpec(j0, t, mean, basis, lambdas, dynamics,
                            noise_sigma2=0.01, seed=seed)


_RUNNERS = {
    "ingest": _run_ingest,
    "fpca": _run_fpca,
    "forecast": _run_forecast,
    "backtest": _run_backtest,
    "rolling": _run_rolling,
    "simulate": _run_simulate,
    "diag-acf": _run_diag_acf,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _load_config(args.config)
        return _RUNNERS[args.command](args, config)
    except ConfigError as exc:
        _emit_error(exc)
        return 2
    except (DataError, OSError) as exc:
        _emit_error(exc)
        return 3
    except (NumericalError, np.linalg.LinAlgError) as exc:
        _emit_error(exc)
        return 4
    except CurvecastError as exc:
        _emit_error(exc)
        return 4


def _emit_error(exc) -> None:
    sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")


if __name__ == "__main__":
    sys.exit(main())
