class DomainError(ValueError):
    """An argument lies outside the domain of the operation."""


class PartitionError(ValueError):
    """A block partition is not a disjoint cover of the region."""


class SingularCovarianceError(ArithmeticError):
    """The pooled covariance of a bivariate test cannot be inverted."""

    def __init__(self, component: str, message: str | None = None):
        self.component = component
        super().__init__(message or f"pooled covariance is singular ({component})")


class LoadError(ValueError):
    """An input file is malformed; ``path`` and ``cell`` locate the problem."""

    def __init__(self, message: str, path=None, cell=None):
        self.path = path
        self.cell = cell
        where = []
        if path is not None:
            where.append(str(path))
        if cell is not None:
            where.append(f"cell {cell}")
        super().__init__(f"{': '.join(where)}: {message}" if where else message)
