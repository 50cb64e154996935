"""Exception types shared across the package."""


class DataError(ValueError):
    """Malformed or invalid input data (bad CSV row, out-of-range feedback)."""


class ConfigError(ValueError):
    """Invalid configuration value (bad hyperparameter, impossible grouping)."""


class FitError(RuntimeError):
    """A calibrator fit could not be completed (e.g. single-class labels)."""


class TrainingError(RuntimeError):
    """A recommender training run diverged or received unusable data."""
