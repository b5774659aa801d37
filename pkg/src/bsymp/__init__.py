"""Chart-level exterior calculus for b-symplectic and cosymplectic geometry."""
from .errors import (ArityError, BoundaryMismatch, BsympError, ConstraintError, DegenerateError,
                     DomainError, InflationFail, NotSymplectic, ParseError, ProfileError,
                     ScenarioError, TransversalityFail)

__all__ = ["ArityError", "BoundaryMismatch", "BsympError", "ConstraintError", "DegenerateError",
           "DomainError", "InflationFail", "NotSymplectic", "ParseError", "ProfileError",
           "ScenarioError", "TransversalityFail"]

__version__ = "0.1.0"
