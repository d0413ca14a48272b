"""Exception and warning types shared across the toolbox."""


class LftError(Exception):
    pass


class DimensionMismatch(LftError, ValueError):
    pass


class StructuralViolation(LftError, ValueError):
    pass


class NonFiniteResult(LftError, ArithmeticError):
    pass


class ImproperWeight(LftError, ValueError):
    pass


class TopologyMismatch(LftError, ValueError):
    pass


class MissingVariable(LftError, KeyError):
    pass


class Infeasible(LftError):
    """No certificate exists in the LMI class that was searched."""


class SolverFailure(LftError):
    pass


class IllConditionedV(LftError):
    pass


class SingularFactor(LftError):
    pass


class IllPosedLoop(LftError):
    def __init__(self, msg, step=None):
        super().__init__(msg)
        self.step = step


class UnstableFrozenLoop(LftError):
    def __init__(self, msg, delta=None):
        super().__init__(msg)
        self.delta = delta


class RankDeficiencyWarning(UserWarning):
    pass
