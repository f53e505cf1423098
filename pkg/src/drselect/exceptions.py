"""Exception hierarchy shared by every stage of the pipeline."""


class DRSelectError(Exception):
    """Base class for all errors raised by drselect."""


class DataError(DRSelectError):
    """Input data violates a structural requirement."""


class NonFinite(DataError):
    def __init__(self, what="input"):
        super().__init__(f"{what} contains NaN or infinite values")
        self.what = what


class ConstantColumn(DataError):
    def __init__(self, column, name=None):
        label = f"{column} ({name})" if name is not None else str(column)
        super().__init__(f"covariate column {label} has zero variance")
        self.column = column
        self.name = name


class EmptyArm(DataError):
    def __init__(self, n_treated, n_control):
        super().__init__(
            f"both treatment arms must be nonempty (n_1={n_treated}, n_0={n_control})"
        )
        self.n_treated = n_treated
        self.n_control = n_control


class TooFewRows(DataError):
    def __init__(self, n_rows, folds):
        super().__init__(f"{n_rows} rows cannot be split into {folds} folds")
        self.n_rows = n_rows
        self.folds = folds


class SolverError(DRSelectError):
    """A numerical fit failed. ``model`` names which nuisance model it was."""

    def __init__(self, message, model=None):
        if model is not None:
            message = f"[{model}] {message}"
        super().__init__(message)
        self.model = model


class NotConverged(SolverError):
    def __init__(self, max_iter, model=None):
        super().__init__(f"tolerance not reached within {max_iter} iterations", model)
        self.max_iter = max_iter


class EmptyGrid(SolverError):
    def __init__(self, model=None):
        super().__init__("lambda grid is empty", model)


class RankDeficient(SolverError):
    def __init__(self, columns, model=None):
        super().__init__(f"restricted design is rank deficient; collinear columns {list(columns)}", model)
        self.columns = tuple(columns)


class SingularInformation(SolverError):
    def __init__(self, which="propensity information matrix", min_eig=None, model=None):
        detail = f" (min eigenvalue {min_eig:.3e})" if min_eig is not None else ""
        super().__init__(f"{which} is not positive definite{detail}", model)
        self.which = which
        self.min_eig = min_eig


class EmptyCell(DRSelectError):
    def __init__(self, cells):
        cells = list(cells)
        super().__init__(f"no successful replicates for cells {cells}")
        self.cells = cells


class SeparationWarning(UserWarning):
    """Logistic fit approached (quasi-)complete separation."""


class ParseError(DRSelectError):
    """Input file cannot be read as a numeric CSV table."""


class SchemaError(DataError):
    """Input columns do not match the requested roles."""

    def __init__(self, message, column=None):
        super().__init__(message)
        self.column = column
