"""Exception hierarchy shared by all stages.

Input problems and numerical problems are kept apart so the CLI can map them
to distinct exit codes.
"""


class InitiativeError(Exception):
    pass


class InputError(InitiativeError):
    pass


class SelfLoopError(InputError, ValueError):
    pass


class MalformedRowError(InputError):
    def __init__(self, line, reason):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class TraitFormatError(InputError):
    pass


class DuplicatePersonError(TraitFormatError):
    def __init__(self, person):
        super().__init__(f"duplicate person row: {person}")
        self.person = person


class NumericalError(InitiativeError):
    pass


class InsufficientDataError(NumericalError, ValueError):
    pass


class DegenerateInputError(NumericalError, ValueError):
    pass


class DistributionError(NumericalError, ValueError):
    pass
