"""gnlab: a numerical laboratory for interpolation inequalities with derivative products.

The package provides exact-derivative test function families (funcspace),
Lebesgue / product / fractional norms on sampled grids (norms), exponent
algebra and inequality evaluation (gn), the balance-function subdivision
machinery with Besicovitch selection (covering), empirical best-constant
search (extremal), a four-state control-affine simulator (control), and a
command line front end (cli).
"""

__version__ = "0.1.0"

from .errors import (
    GnlabError,
    ParameterError,
    PreconditionError,
    InvariantError,
    UnsupportedOrderError,
    InfeasibleError,
    NoCrossingError,
    DivergenceError,
    SearchFailureError,
)

__all__ = [
    "__version__",
    "GnlabError",
    "ParameterError",
    "PreconditionError",
    "InvariantError",
    "UnsupportedOrderError",
    "InfeasibleError",
    "NoCrossingError",
    "DivergenceError",
    "SearchFailureError",
]
