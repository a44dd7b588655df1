"""Functional PCA forecasting of intraday return curves.

Daily curves of intraday returns are decomposed into eigenscores, the
score dynamics are modeled (AR-GARCH per score, or VAR(1) with a
scalar-BEKK covariance), and one-day-ahead point forecasts with
calibrated pointwise intervals are assembled back on the curve. A
rolling two-panel decomposition forecasts the unobserved tail of an
incomplete day.
"""

from .curves import (
    PricePoint,
    ReturnCurve,
    ReturnCurvePanel,
    compute_return_curves,
    demean_panel,
    ingest_prices,
    load_panel,
    load_price_csv,
    panel_from_curves,
    restore_mean,
    save_panel,
)
from .evaluation import (
    BacktestReport,
    acf,
    coverage_rate,
    cross_acf,
    diebold_mariano,
    interval_score,
    mae,
    mean_interval_score,
    rmse,
    sign_rate,
)
from .forecast import (
    BacktestConfig,
    FunctionalForecast,
    aue_bands,
    fit_argarch_scores,
    forecast_argarch_day,
    forecast_curve,
    forecast_sbekk_day,
    point_forecast_path,
    rolling_backtest,
)
from .fpca import FunctionalPCA, fit_fpca, select_num_components
from .rolling import (
    CrossScoreRegression,
    RollingForecastResult,
    ShiftedPanelPair,
    build_shifted_panels,
    fit_cross_regression,
    horizon_diagnostic,
    rolling_forecast,
    rolling_origin_backtest,
    rolling_window_search,
)
from .score_models import (
    ArGarch,
    ArmaAuto,
    ScalarBekk,
    Var1,
    ar_garch_loglik,
    check_unit_variance_constraints,
    fit_var_sbekk,
    forecast_ar_garch,
    forecast_sbekk,
)
from .sim import (
    KlFactorSpec,
    LinearVarDynamics,
    UnivArGarchDynamics,
    VarSbekkDynamics,
    make_orthonormal_basis,
    simulate_panel,
    unit_variance_argarch,
    unit_variance_sbekk,
    unit_variance_var,
)

__version__ = "0.1.0"
