"""Exception hierarchy.

Input/contract problems raise subclasses of :class:`InputError`; failures
inside numerical routines raise subclasses of :class:`ComputationError`.
The CLI maps the former to exit code 2 and the latter to exit code 1.
"""


class EsgportError(Exception):
    """Base class for every error raised by this package."""


class InputError(EsgportError):
    """Bad inputs: files, parameters, shapes, calendars."""


class ComputationError(EsgportError):
    """A numerical routine failed on otherwise valid inputs."""


class ParseError(InputError):
    """Malformed input file row; message carries the 1-based line number."""


class CalendarError(InputError):
    """Dates out of order, duplicated, or misaligned between panels."""


class NoScoreError(InputError):
    """An asset has no ESG release on or before the required start date."""


class DomainError(InputError):
    """A value lies outside its documented domain (score, lambda, alpha...)."""


class ShapeError(InputError):
    """Array dimensions do not line up."""


class SampleTooSmallError(InputError):
    """Too few observations for the requested tail statistic."""


class AlignmentError(InputError):
    """Dated series do not line up the way the operation requires."""


class ZeroDenominatorError(ComputationError):
    """A ratio's denominator is degenerate (zero tail, zero dispersion)."""


class InfeasibleError(ComputationError):
    """Optimization constraints admit no solution."""


class SolverError(ComputationError):
    """An optimization backend failed to return a usable solution."""


class FitError(ComputationError):
    """A model estimation routine failed to converge."""


class SimulationError(ComputationError):
    """Scenario generation could not produce valid paths."""


class PricingError(ComputationError):
    """Option valuation failed."""


class NoArbitrageBoundError(PricingError):
    """An option value lies outside its static no-arbitrage bounds."""


class InfeasibleMartingaleError(PricingError):
    """The spot price lies outside the convex hull of discounted terminal prices."""


class SingularSystemError(ComputationError):
    """A linear system required by the solver is singular."""


class NoTangentError(ComputationError):
    """No frontier point yields a usable tangency slope."""
