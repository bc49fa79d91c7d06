"""EM estimation for scaled phase-type models."""

from .core import FitReport, SufficientStats
from .correlated import em_corr_cph
from .fitters import (approximate_density, em_cph, em_mml, em_mv_cph, em_mv_siph, em_siph,
                      log_grid)
from .grid import QuadratureConfig

__all__ = ["FitReport", "SufficientStats", "QuadratureConfig", "em_cph", "em_siph", "em_mml",
           "em_mv_cph", "em_mv_siph", "em_corr_cph", "approximate_density", "log_grid"]
