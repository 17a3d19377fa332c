"""ESG-valued returns: portfolio construction, option valuation, shadow rates."""

from .analytics import (
    MomentSummary,
    PerformanceSummary,
    RrrSuite,
    avg_turnover,
    etl,
    etr,
    max_drawdown,
    moments,
    rrr_suite,
    sample_cvar,
    star_ratio,
    summarize_performance,
)
from .arma_garch import ArmaGarchFit, advance, fit_arma_garch, standardized_residuals
from .backtest import BacktestBundle, BacktestResult, run_backtest, summary_tables
from .config import RunConfig, load_config
from .esg_transform import (
    EsgBlendParams,
    blend_scenarios,
    esg_valued_return,
    esg_valued_riskless,
)
from .frontier import (
    FrontierPoint,
    RealizedSeries,
    TangentResult,
    build_frontier,
    realize_series,
    tangent_portfolio,
)
from .market_data import (
    EsgPanel,
    LinearScoreMap,
    PricePanel,
    ReturnPanel,
    ShiftedMidpointScoreMap,
    TradingCalendar,
    YieldSeries,
    compute_returns,
    fill_daily_scores,
    load_esg,
    load_prices,
    load_yields,
    normalize_scores,
)
from .nig import NigParams, fit_joint_nig
from .optimizer import (
    OptimizationSpec,
    SolveReport,
    Weights,
    solve,
    solve_mcvar,
    solve_mv,
    sweep_alpha,
)
from .option_pricer import (
    OptionSurface,
    RiskNeutralWeights,
    implied_vol,
    implied_vol_grid,
    solve_risk_neutral,
    surface,
    value_options,
)
from .scenario_engine import (
    ScenarioMatrix,
    TrajectoryEnsemble,
    simulate_one_step,
    simulate_trajectories,
)
from .shadow_rate import (
    DeflatorSolution,
    LoadingMatrix,
    MarketEstimate,
    SrrSeries,
    build_loadings,
    estimate_market,
    ir_stats,
    solve_deflator,
    srr_series,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
