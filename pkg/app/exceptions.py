class ValidationError(ValueError):
    pass


class ConfigurationError(ValidationError):
    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class DomainError(ValidationError):
    pass


class OutOfRegimeError(ValidationError):
    pass


class NumericalError(RuntimeError):
    pass


class QuadratureError(NumericalError):
    def __init__(self, message, estimate=None):
        super().__init__(message)
        self.estimate = estimate


class IllConditionedError(NumericalError):
    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class RootNotFoundError(NumericalError):
    def __init__(self, message, trajectory=None):
        super().__init__(message)
        self.trajectory = list(trajectory or [])


class ContourError(NumericalError):
    pass
