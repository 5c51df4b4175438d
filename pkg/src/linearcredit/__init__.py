"""Linear credit risk models.

Closed-form prices of defaultable bonds, CDS, CDS indices, tranches and
unilateral CVA under models whose survival process and factors have
linear conditional expectations; polynomial-approximation option prices
with error bounds; Monte Carlo checks; and calibration of cascade models
to CDS spread panels.
"""

__version__ = "0.1.0"

from .exceptions import (  # noqa: E402
    CalibrationError,
    CapacityError,
    ConstraintError,
    DegenerateError,
    DomainError,
    EmptyPortfolioError,
    InvalidInputError,
    LinearCreditError,
)
from .model import (  # noqa: E402
    LhccParams,
    LhcParams,
    LinearModel,
    State,
    lhcc_to_lhc,
    validate_lhc,
)
from .pricing import (  # noqa: E402
    BP,
    TenorGrid,
    bond_zero,
    cds_legs,
    cds_spread,
    ucva,
)
from .portfolio import Portfolio, cdis_spread, default_count_distribution  # noqa: E402
from .options import cdis_option_homogeneous, cds_option_price  # noqa: E402
from .calib import LHCCCalibrator, QuotePanel, calibrate, filter_panel  # noqa: E402

__all__ = [
    "__version__",
    "LinearCreditError",
    "InvalidInputError",
    "ConstraintError",
    "DomainError",
    "DegenerateError",
    "EmptyPortfolioError",
    "CalibrationError",
    "CapacityError",
    "LinearModel",
    "LhcParams",
    "LhccParams",
    "State",
    "lhcc_to_lhc",
    "validate_lhc",
    "BP",
    "TenorGrid",
    "bond_zero",
    "cds_legs",
    "cds_spread",
    "ucva",
    "Portfolio",
    "cdis_spread",
    "default_count_distribution",
    "cds_option_price",
    "cdis_option_homogeneous",
    "QuotePanel",
    "calibrate",
    "filter_panel",
    "LHCCCalibrator",
]
