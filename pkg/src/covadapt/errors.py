"""Exception hierarchy shared across the package.

Every domain failure raises a subclass of :class:`CovadaptError` so callers
(CLI, HTTP service) can map errors to exit codes / status codes in one place.
"""

from __future__ import annotations


class CovadaptError(Exception):
    """Base class for all domain errors."""

    code = "error"


class ConstantColumnError(CovadaptError):
    """A covariate column has a single distinct value and cannot be scaled."""

    code = "constant_column"

    def __init__(self, column: int, name: str | None = None):
        self.column = column
        self.name = name
        label = name if name is not None else f"#{column}"
        super().__init__(f"covariate column {label} is constant")


class CategoryCountError(CovadaptError):
    """Requested number of discretization categories is invalid."""

    code = "bad_category_count"


class BlockConfigError(CovadaptError):
    """Initial-cohort size and block size are incompatible."""

    code = "bad_block_config"


class NotPositiveSemidefiniteError(CovadaptError):
    """Matrix has an eigenvalue too negative to be treated as PSD."""

    code = "not_psd"


class MissingCategoriesError(CovadaptError):
    """Subject lacks discretized categories required by the method."""

    code = "missing_categories"


class EmptyTrialError(CovadaptError):
    """Operation requires at least one allocated subject."""

    code = "empty_trial"


class EmptyGroupError(CovadaptError):
    """Operation requires both groups to be nonempty."""

    code = "empty_group"

    def __init__(self, group: int):
        self.group = group
        super().__init__(f"group {group} is empty")


class OddTargetError(CovadaptError):
    """Method requires an even planned trial size."""

    code = "odd_target_n"


class GammaRangeError(CovadaptError):
    """Uncertainty parameter outside the configured range."""

    code = "gamma_out_of_range"


class TrialFullError(CovadaptError):
    """All planned subjects have already been allocated."""

    code = "trial_full"


class DimensionMismatchError(CovadaptError):
    """Inputs disagree on the number of covariates or subjects."""

    code = "dimension_mismatch"


class InvalidConfigError(CovadaptError):
    """Method configuration violates an invariant.

    ``detail`` maps field names to human-readable problems.
    """

    code = "invalid_config"

    def __init__(self, detail: dict[str, str]):
        self.detail = dict(detail)
        super().__init__("; ".join(f"{k}: {v}" for k, v in sorted(self.detail.items())))


class DatasetError(CovadaptError):
    """Base class for dataset ingestion problems."""

    code = "dataset_error"


class ParseError(DatasetError):
    """Malformed cell or row in a dataset file."""

    code = "parse_error"

    def __init__(self, message: str, line: int, column: int | None = None):
        self.line = line
        self.column = column
        where = f"line {line}" + (f", column {column}" if column is not None else "")
        super().__init__(f"{message} ({where})")


class NonNumericCellError(ParseError):
    """A body cell could not be parsed as a number."""

    code = "non_numeric_cell"


class EmptyDatasetError(DatasetError):
    """Dataset has a header but no rows."""

    code = "empty_dataset"


class TrialNotFoundError(CovadaptError):
    """No trial with the requested id."""

    code = "not_found"

    def __init__(self, trial_id: str):
        self.trial_id = trial_id
        super().__init__(f"no trial with id {trial_id!r}")


class CorruptLogError(CovadaptError):
    """Event log failed integrity checks during replay."""

    code = "corrupt_log"

    def __init__(self, sequence: int, message: str):
        self.sequence = sequence
        super().__init__(f"event log corrupt at sequence {sequence}: {message}")
