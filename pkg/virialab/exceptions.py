# Exception, errors, and warnings
# Oct 2026

# errors and exceptions ----------------------

# General
class InputError(Exception): pass
class SpanError(Exception): pass

class ScenarioError(Exception):
    """Scenario failed to parse or validate.

    Args:
        message (str): description of the problem
        field (str|None): dotted path of the offending field, e.g. `system.masses`
    """
    def __init__(self, message, field=None):
        self.field = field
        if field is not None:
            message = f'{field}: {message}'
        super().__init__(message)

# Dynamics problems
class SingularityError(Exception): pass
class IntegrationError(Exception): pass
class DriftError(IntegrationError): pass
class EventError(Exception): pass

# Analysis problems
class InconsistentEnergyError(Exception): pass
class ClassificationError(Exception): pass
class OptimizationError(Exception): pass
class FamilyError(Exception): pass
class SymmetryError(Exception): pass

# warnings -----------------------------------
class CollisionWarning(Warning): pass
class EnergyDriftWarning(Warning): pass
class DegeneracyWarning(Warning): pass
class ConvergenceWarning(Warning): pass
class DiscrepancyWarning(Warning): pass
