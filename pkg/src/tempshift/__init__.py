"""Training, split selection and drift diagnostics for tabular data under temporal shift."""

__version__ = "0.1.0"
